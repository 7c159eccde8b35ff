//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use fmlc_core::tensor_io::{decode, encode_labels, encode_raster, Tensor};
use fmlc_core::*;
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
}

fn below(rng: &mut ChaCha8Rng, n: usize) -> usize {
    ((uniform(rng) * n as f64) as usize).min(n - 1)
}

fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data")
}

const PUBLISHED_COUNTS: [[u64; 4]; 4] = [
    [2_532_004, 2_158, 28_044, 20_066],
    [121, 691_170, 11_840, 4_077],
    [33_406, 34_986, 7_705_119, 262_471],
    [7_840, 16_966, 187_956, 4_059_344],
];

fn published_matrix_reproduction() -> Outcome {
    let start = Instant::now();
    let rows: Vec<Vec<u64>> = PUBLISHED_COUNTS.iter().map(|r| r.to_vec()).collect();
    let cm = ConfusionMatrix::from_rows(&rows).unwrap();
    let report = metrics(&cm).unwrap();
    let elapsed = start.elapsed();

    // spreadsheet-style recomputation: row sums, column sums, diagonal
    let total: f64 = PUBLISHED_COUNTS.iter().flatten().map(|&v| v as f64).sum();
    let mut ok_rates = true;
    for c in 0..4 {
        let row: f64 = PUBLISHED_COUNTS[c].iter().map(|&v| v as f64).sum();
        let col: f64 = PUBLISHED_COUNTS.iter().map(|r| r[c] as f64).sum();
        let d = PUBLISHED_COUNTS[c][c] as f64;
        let (p, r) = (d / row, d / col);
        let f = 2.0 * p * r / (p + r);
        ok_rates &= (report.precision[c] - p).abs() < 1e-12
            && (report.recall[c] - r).abs() < 1e-12
            && (report.f1[c] - f).abs() < 1e-12
            && (report.class_weights[c] - col / total).abs() < 1e-12;
    }
    let oa = report.overall_acc * 100.0;
    let ok_oa = (oa - 96.09).abs() <= 0.01;
    let ok_kappa = (report.kappa - 0.939).abs() <= 0.002;
    let ok_time = elapsed < Duration::from_secs(1);
    outcome(
        ok_oa && ok_kappa && ok_rates && ok_time,
        format!(
            "overall {oa:.4}% (96.09 ± 0.01), kappa {:.4} (0.939 ± 0.002), per-class rates {}, {elapsed:?}",
            report.kappa,
            if ok_rates { "match" } else { "differ" }
        ),
    )
}

fn override_truth_table() -> Outcome {
    let (k, kp, other) = (1u8, 0u8, 2u8);
    let tau = 0.5f32;
    let rule = FusionRule::new(k, kp, tau as f64).unwrap();
    let coarse = [k, kp, other];
    let expert = [tau - 0.1, tau, tau + 0.1];
    let mut cases = 0;
    let mut matches = 0;
    for &c in &coarse {
        for &e in &expert {
            let labels = LabelMap::new(1, 1, vec![c], Legend::land_cover()).unwrap();
            let e_map = BinaryProbMap::new(1, 1, vec![e]).unwrap();
            let got = expert_override(&labels, &e_map, &rule).unwrap().data()[0];
            let want = if c == k || c == kp {
                if e >= tau {
                    k
                } else {
                    kp
                }
            } else {
                c
            };
            cases += 1;
            matches += (got == want) as usize;
        }
    }
    outcome(cases == 9 && matches == 9, format!("{matches}/{cases} cases exact"))
}

fn random_logits(rng: &mut ChaCha8Rng, h: usize, w: usize, c: usize) -> LogitMap<f32> {
    // a coarse value grid makes window ties common
    let quantized = rng.next_u64().is_multiple_of(2);
    let data = (0..h * w * c)
        .map(|_| {
            let v = uniform(rng) * 8.0 - 4.0;
            if quantized {
                (v * 2.0).round() as f32 / 2.0
            } else {
                v as f32
            }
        })
        .collect();
    LogitMap::new(h, w, c, data).unwrap()
}

fn bits<T: Scalar>(l: &LogitMap<T>) -> Vec<u8> {
    l.data().iter().flat_map(|v| v.as_f64().to_le_bytes()).collect()
}

fn smoothing_oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5300);
    let windows = [1, 3, 5, 7];
    let alphas = [0.25, 0.5, 1.0];
    let instances = 120;
    let mut equal = 0;
    for i in 0..instances {
        let h = 1 + below(&mut rng, 64);
        let w = 1 + below(&mut rng, 64);
        let c = 2 + below(&mut rng, 3);
        let variant = if i % 4 == 3 {
            BlendVariant::Literal
        } else {
            BlendVariant::Conjugate
        };
        let params = SmoothingParams::new(
            windows[i % 4],
            alphas[(i / 4) % 3],
            0.25 + uniform(&mut rng) * 2.0,
            variant,
        )
        .unwrap();
        let l = random_logits(&mut rng, h, w, c);
        let fast = window_stats(&l, &params).unwrap();
        let slow = naive_window_stats(&l, &params).unwrap();
        let smoothed = smooth(&l, &params).unwrap();
        let reference = naive_smooth_reference(&l, &params).unwrap();
        if bits(&fast.mean) == bits(&slow.mean)
            && bits(&fast.var) == bits(&slow.var)
            && bits(&smoothed.logits) == bits(&reference)
            && smoothed.labels == argmax_labels(&reference)
        {
            equal += 1;
        }
    }
    let elapsed = start.elapsed();
    outcome(
        equal == instances && elapsed < Duration::from_secs(30),
        format!("{equal}/{instances} instances bit-identical, {elapsed:?}"),
    )
}

fn identity_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x1d);
    let mut failures = Vec::new();
    for trial in 0..20 {
        let (h, w, c) = (1 + below(&mut rng, 20), 1 + below(&mut rng, 20), 2 + below(&mut rng, 4));
        let consts: Vec<f32> = (0..c).map(|_| (uniform(&mut rng) * 6.0 - 3.0) as f32).collect();
        let flat_data = (0..c).flat_map(|ch| std::iter::repeat_n(consts[ch], h * w)).collect();
        let flat = LogitMap::new(h, w, c, flat_data).unwrap();
        let params = SmoothingParams::new(
            [3, 5, 7][trial % 3],
            [0.25, 0.6, 1.0][trial % 3],
            1.0,
            BlendVariant::Conjugate,
        )
        .unwrap();
        let s = smooth(&flat, &params).unwrap();
        if s.logits != flat || s.labels != argmax_labels(&flat) {
            failures.push(format!("constant field trial {trial}"));
        }

        let l = random_logits(&mut rng, h, w, c);
        let one = SmoothingParams::new(1, [0.25, 0.5, 1.0][trial % 3], 1.0, BlendVariant::Conjugate).unwrap();
        if smooth(&l, &one).unwrap().logits != l {
            failures.push(format!("W=1 trial {trial}"));
        }

        let p = softmax(&l);
        let plain = argmax_labels(&p);
        let off = run_pipeline(&p, &BTreeMap::new(), &[], None).unwrap();
        let w1 = run_pipeline(&p, &BTreeMap::new(), &[], Some(&one)).unwrap();
        if off.labels != plain || w1.labels != plain {
            failures.push(format!("empty pipeline trial {trial}"));
        }
    }
    outcome(
        failures.is_empty(),
        if failures.is_empty() {
            "constant fields, W=1 and empty pipeline exact over 20 trials".to_string()
        } else {
            failures.join(", ")
        },
    )
}

fn flagged_f1(pred: &LabelMap, truth: &LabelMap, class: usize) -> f64 {
    metrics(&confusion(pred, truth, None).unwrap()).unwrap().f1[class]
}

fn hierarchical_improvement() -> Outcome {
    let start = Instant::now();
    let mut improved = 0;
    let mut detected = 0;
    let mut gains = Vec::new();
    for seed in 0..10u64 {
        let spec = SceneSpec {
            confusion_strength: 0.4,
            noise_rate: 0.01,
            blobs: 16,
            ..SceneSpec::new(128, 128, 1000 + seed)
        };
        let scene = generate_scene::<f32>(&spec).unwrap();
        let coarse = argmax_labels(&scene.coarse);
        let (k, kp) = spec.confusion_pair;
        let cm = confusion(&coarse, &scene.truth, None).unwrap();
        if let Some(top) = detect_confusion(&cm, 1).unwrap().first() {
            detected += ((top.k.min(top.k_prime), top.k.max(top.k_prime)) == (k.min(kp), k.max(kp))) as usize;
        }
        let rules = [FusionRule::new(k, kp, DEFAULT_TAU).unwrap()];
        let experts = BTreeMap::from([(k, scene.expert.clone())]);
        let out = run_pipeline(&scene.coarse, &experts, &rules, Some(&SmoothingParams::default())).unwrap();
        let gain = flagged_f1(&out.labels, &scene.truth, k as usize) - flagged_f1(&coarse, &scene.truth, k as usize);
        improved += (gain >= 0.10) as usize;
        gains.push(gain);
    }
    let elapsed = start.elapsed();
    let shown: Vec<String> = gains.iter().map(|g| format!("{g:+.3}")).collect();
    outcome(
        improved >= 9 && elapsed < Duration::from_secs(60),
        format!(
            "{improved}/10 seeds gain ≥ 0.10 in flagged F1 [{}], pair detected on {detected}/10, {elapsed:?}",
            shown.join(" ")
        ),
    )
}

fn noise_suppression() -> Outcome {
    let trials = 50;
    let mut energy_ok = 0;
    let mut islands_ok = 0;
    for seed in 0..trials as u64 {
        let spec = SceneSpec {
            noise_rate: 0.01 + 0.04 * (seed as f64 / (trials - 1) as f64),
            ..SceneSpec::new(96, 96, 5000 + seed)
        };
        let scene = generate_scene::<f32>(&spec).unwrap();
        let before = argmax_labels(&scene.coarse);
        let logits = probs_to_logits(&scene.coarse, DEFAULT_LOGIT_EPS).unwrap();
        let after = smooth(&logits, &SmoothingParams::default()).unwrap().labels;
        if disagreements(&after, Neighborhood::Four) <= disagreements(&before, Neighborhood::Four) {
            energy_ok += 1;
        }
        if isolated_pixels(&after) < isolated_pixels(&before) {
            islands_ok += 1;
        }
    }
    let rate = energy_ok as f64 / trials as f64;
    outcome(
        rate >= 0.95 && islands_ok == trials,
        format!(
            "pairwise term non-increasing in {energy_ok}/{trials}, islands reduced in {islands_ok}/{trials}"
        ),
    )
}

fn io_round_trips() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x10);
    let mut problems = Vec::new();
    let dir = tempfile::tempdir().unwrap();
    for i in 0..10 {
        let (h, w, c) = (1 + below(&mut rng, 40), 1 + below(&mut rng, 40), 1 + below(&mut rng, 5));
        let data: Vec<f32> = (0..h * w * c).map(|_| f32::from_bits(rng.next_u32() & 0x7f7f_ffff)).collect();
        let raster = MultiBandRaster::new(h, w, c, data).unwrap();
        let path = dir.path().join(format!("r{i}.fmt"));
        write_tensor(&raster, &path).unwrap();
        let back = read_raster(&path).unwrap();
        let same_bits = back.data().iter().zip(raster.data()).all(|(a, b)| a.to_bits() == b.to_bits());
        if !same_bits || back.height() != h || back.width() != w || encode_raster(&back) != encode_raster(&raster) {
            problems.push(format!("fmt raster {i}"));
        }

        let labels: Vec<u8> = (0..h * w).map(|_| below(&mut rng, 4) as u8).collect();
        let labels = LabelMap::new(h, w, labels, Legend::land_cover()).unwrap();
        let path = dir.path().join(format!("l{i}.tif"));
        write_label_tiff(&labels, None, &path).unwrap();
        if read_label_tiff(&path).unwrap() != labels {
            problems.push(format!("tiff labels {i}"));
        }
        match decode(&encode_labels(&labels)).unwrap() {
            Tensor::Labels(l) if l == labels => {}
            _ => problems.push(format!("fmt labels {i}")),
        }
    }

    let grid = LabelMap::new(2, 2, vec![0, 1, 2, 3], Legend::land_cover()).unwrap();
    let golden = std::fs::read(data_dir().join("golden_2x2.tif")).unwrap();
    if encode_label_tiff(&grid, None).unwrap() != golden {
        problems.push("golden 2x2 bytes".into());
    }
    let be = read_label_tiff(data_dir().join("golden_2x2_be.tif")).unwrap();
    if be.data() != [3, 2, 1, 0] || be.legend() != &Legend::land_cover() {
        problems.push("big-endian fixture".into());
    }
    outcome(
        problems.is_empty(),
        if problems.is_empty() {
            "fmt bit-exact, tiff pixel-exact, golden 2x2 bytes identical".to_string()
        } else {
            problems.join(", ")
        },
    )
}

fn tiling_arithmetic() -> Outcome {
    let spec = TileSpec::new(256, 128, EdgePolicy::PadReplicate).unwrap();
    let big = MultiBandRaster::filled(512, 512, 1, 0.0f32).unwrap();
    let count = tile(&big, &spec).unwrap().len();

    let mut rng = ChaCha8Rng::seed_from_u64(0x711e);
    let mut worst = 0.0f64;
    for (h, w, t, s, policy) in [
        (512, 512, 256, 128, EdgePolicy::PadReplicate),
        (300, 300, 256, 128, EdgePolicy::PadReplicate),
        (97, 61, 32, 20, EdgePolicy::PadReplicate),
        (97, 61, 32, 20, EdgePolicy::ClipPartial),
        (40, 40, 64, 16, EdgePolicy::PadReplicate),
    ] {
        let data: Vec<f32> = (0..h * w * 3).map(|_| (uniform(&mut rng) * 20.0 - 10.0) as f32).collect();
        let x = MultiBandRaster::new(h, w, 3, data).unwrap();
        let tiles = tile(&x, &TileSpec::new(t, s, policy).unwrap()).unwrap();
        let back = stitch(&tiles, h, w).unwrap();
        for (a, b) in back.data().iter().zip(x.data()) {
            worst = worst.max((a - b).abs() as f64);
        }
    }
    outcome(
        count == 9 && worst <= 1e-6,
        format!("{count} tiles for 512x512 (tile 256, stride 128), max round-trip error {worst:e}"),
    )
}

fn pipeline_bytes() -> Vec<u8> {
    let spec = SceneSpec {
        confusion_strength: 0.5,
        noise_rate: 0.03,
        ..SceneSpec::new(150, 130, 77)
    };
    let scene = generate_scene::<f32>(&spec).unwrap();
    let coarse = argmax_labels(&scene.coarse);
    let cm = confusion(&coarse, &scene.truth, None).unwrap();
    let rules = detect_confusion(&cm, 1).unwrap();
    let experts = BTreeMap::from([(rules[0].k, scene.expert.clone())]);
    let out = run_pipeline(&scene.coarse, &experts, &rules, Some(&SmoothingParams::default())).unwrap();
    let logits = probs_to_logits(&scene.coarse, DEFAULT_LOGIT_EPS).unwrap();
    let stats = window_stats(&logits, &SmoothingParams::default()).unwrap();
    let tiles = tile(&scene.coarse.to_raster(), &TileSpec::new(64, 48, EdgePolicy::PadReplicate).unwrap()).unwrap();
    let stitched = stitch(&tiles, 150, 130).unwrap();
    let report = metrics(&confusion(&out.labels, &scene.truth, None).unwrap()).unwrap();

    let mut bytes = Vec::new();
    bytes.extend(encode_labels(&out.coarse));
    bytes.extend(encode_labels(&out.fused));
    bytes.extend(encode_labels(&out.labels));
    bytes.extend(encode_raster(&out.smoothed_probs.unwrap().to_raster()));
    bytes.extend(encode_raster(&stats.mean.to_raster()));
    bytes.extend(encode_raster(&stats.var.to_raster()));
    bytes.extend(encode_raster(&stitched));
    bytes.extend(encode_label_tiff(&out.labels, None).unwrap());
    bytes.extend(report.to_json().into_bytes());
    bytes
}

fn determinism_under_parallelism() -> Outcome {
    let outputs: Vec<Vec<u8>> = [1, 2, 8]
        .iter()
        .map(|&n| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .unwrap()
                .install(pipeline_bytes)
        })
        .collect();
    let same = outputs.windows(2).all(|p| p[0] == p[1]);
    outcome(
        same,
        format!("{} output bytes identical across 1, 2 and 8 threads: {same}", outputs[0].len()),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("confusion-matrix reproduction", published_matrix_reproduction),
        ("override truth table", override_truth_table),
        ("smoothing oracle equivalence", smoothing_oracle_equivalence),
        ("identity properties", identity_properties),
        ("hierarchical improvement", hierarchical_improvement),
        ("noise suppression", noise_suppression),
        ("I/O round trips", io_round_trips),
        ("tiling arithmetic", tiling_arithmetic),
        ("determinism under parallelism", determinism_under_parallelism),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let o = run();
        println!(
            "{} [{}] {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            i + 1,
            o.detail
        );
        failed += (!o.pass) as usize;
    }
    println!("acceptance: {}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
