//! `fmlc`: batch front end for coarse-to-expert label fusion and logit
//! smoothing.
//!
//! Inputs are classifier outputs (probability rasters and expert maps),
//! not imagery. Exit status is 0 on success, 1 on runtime failure and 2 on
//! usage or configuration errors.

mod config;
mod io;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fmlc_core::geotiff::{decode_tiff, TiffSamples};
use fmlc_core::{
    argmax_labels, confusion, detect_confusion, generate_scene, metrics, probs_to_logits, rules_from_json,
    rules_to_json, run_pipeline, smooth, write_tensor, BinaryProbMap, BlendVariant, ConfusionMatrix, FusionRule,
    GeoTags, LabelMap, SceneSpec, SmoothingParams, DEFAULT_LOGIT_EPS,
};

use config::{Format, PipelineConfig};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

#[derive(Parser)]
#[command(name = "fmlc", version, about = "Fuse coarse and expert land-cover maps, then smooth the result")]
struct Cli {
    /// Worker threads; output does not depend on this value.
    #[arg(long, global = true, env = "FMLC_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Coarse argmax followed by expert overrides.
    Fuse(RunArgs),
    /// Smoothing stage only.
    Smooth(SmoothCmd),
    /// Argmax, overrides, smoothing and optional evaluation.
    Pipeline(RunArgs),
    /// Confusion matrix and accuracy report for a label map.
    Evaluate(EvaluateArgs),
    /// Suggest override rules from a validation confusion matrix.
    DetectConfusion(DetectArgs),
    /// Write a synthetic scene and a ready-to-run config.
    Synth(SynthArgs),
    /// Convert between `.fmt` tensors and TIFF.
    Convert(ConvertArgs),
}

#[derive(Args, Default)]
struct SmoothingArgs {
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    sigma2: Option<f64>,
    #[arg(long)]
    variant: Option<BlendVariant>,
    /// Skip the smoothing stage.
    #[arg(long, conflicts_with_all = ["window", "alpha", "sigma2", "variant"])]
    no_smooth: bool,
}

impl SmoothingArgs {
    fn apply(&self, current: Option<SmoothingParams>) -> Option<SmoothingParams> {
        if self.no_smooth {
            return None;
        }
        let touched = self.window.is_some() || self.alpha.is_some() || self.sigma2.is_some() || self.variant.is_some();
        let mut p = match (current, touched) {
            (Some(p), _) => p,
            (None, true) => SmoothingParams::default(),
            (None, false) => return None,
        };
        p.window = self.window.unwrap_or(p.window);
        p.alpha = self.alpha.unwrap_or(p.alpha);
        p.sigma2 = self.sigma2.unwrap_or(p.sigma2);
        p.variant = self.variant.unwrap_or(p.variant);
        Some(p)
    }
}

#[derive(Args)]
struct RunArgs {
    /// JSON pipeline config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Coarse class-probability raster.
    #[arg(long)]
    coarse: Option<PathBuf>,
    /// Expert map for a flagged class, as CLASS=PATH. Repeatable.
    #[arg(long, value_parser = parse_expert)]
    expert: Vec<(u8, PathBuf)>,
    /// JSON file holding a list of rules.
    #[arg(long)]
    rules: Option<PathBuf>,
    /// Threshold applied to every rule.
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Reference labels to evaluate the final map against.
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Also write the smoothed probabilities as a `.fmt` tensor.
    #[arg(long)]
    probs_output: Option<PathBuf>,
    /// Print the evaluation report as JSON.
    #[arg(long)]
    json: bool,
    #[command(flatten)]
    smoothing: SmoothingArgs,
}

#[derive(Args)]
struct SmoothCmd {
    #[command(flatten)]
    run: RunArgs,
    /// Read the input as logits rather than probabilities.
    #[arg(long)]
    logits: bool,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long, alias = "truth")]
    reference: PathBuf,
    /// Reference label to leave out of the matrix.
    #[arg(long)]
    ignore: Option<u8>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct DetectArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long, alias = "truth")]
    reference: PathBuf,
    #[arg(long, default_value_t = 1)]
    top: usize,
    #[arg(long, default_value_t = fmlc_core::DEFAULT_TAU)]
    tau: f64,
    /// Write the rules here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    output_dir: PathBuf,
    /// JSON scene description; `--seed` still overrides its seed.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 128)]
    height: usize,
    #[arg(long, default_value_t = 128)]
    width: usize,
    #[arg(long, default_value_t = 4)]
    classes: usize,
    #[arg(long, default_value_t = 12)]
    blobs: usize,
    /// Class the expert detects.
    #[arg(long, default_value_t = 1)]
    k: u8,
    /// Class it is confused with.
    #[arg(long, default_value_t = 0)]
    k_prime: u8,
    #[arg(long, default_value_t = 0.4)]
    strength: f64,
    #[arg(long, default_value_t = 0.01)]
    noise: f64,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = fmlc_core::DEFAULT_TAU)]
    tau: f64,
}

#[derive(Args)]
struct ConvertArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

fn parse_expert(s: &str) -> Result<(u8, PathBuf), String> {
    let (class, path) = s.split_once('=').ok_or("expected CLASS=PATH")?;
    let class = class.trim().parse().map_err(|e| format!("bad class id {class:?}: {e}"))?;
    Ok((class, PathBuf::from(path)))
}

impl RunArgs {
    fn resolve(&self) -> CliResult<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::default(),
        };
        if let Some(p) = &self.coarse {
            cfg.coarse = Some(p.clone());
        }
        for (k, p) in &self.expert {
            cfg.experts.insert(*k, p.clone());
        }
        if let Some(path) = &self.rules {
            io::require(path)?;
            let text = std::fs::read_to_string(path).map_err(runtime)?;
            cfg.rules = rules_from_json(&text).map_err(usage)?;
        }
        if let Some(tau) = self.tau {
            for r in &mut cfg.rules {
                r.tau = tau;
            }
        }
        if let Some(p) = &self.output {
            cfg.output = Some(p.clone());
        }
        if let Some(f) = self.format {
            cfg.format = Some(f);
        }
        if let Some(p) = &self.reference {
            cfg.reference = Some(p.clone());
        }
        cfg.smoothing = self.smoothing.apply(cfg.smoothing);
        if let Some(p) = &cfg.smoothing {
            p.validate().map_err(usage)?;
        }
        for r in &cfg.rules {
            r.validate().map_err(usage)?;
        }
        Ok(cfg)
    }
}

fn required<'a>(value: &'a Option<PathBuf>, what: &str) -> CliResult<&'a Path> {
    value
        .as_deref()
        .ok_or_else(|| CliError::Usage(format!("missing {what} (flag or config)")))
}

fn load_experts(cfg: &PipelineConfig, classes: usize) -> CliResult<BTreeMap<u8, BinaryProbMap<f32>>> {
    for r in &cfg.rules {
        for id in [r.k, r.k_prime] {
            if id as usize >= classes {
                return Err(CliError::Usage(format!(
                    "rule class {id} outside the {classes}-class legend"
                )));
            }
        }
        if !cfg.experts.contains_key(&r.k) {
            return Err(CliError::Usage(format!("no expert map for rule class {}", r.k)));
        }
    }
    for path in cfg.experts.values() {
        io::require(path)?;
    }
    let mut experts = BTreeMap::new();
    for r in &cfg.rules {
        if let std::collections::btree_map::Entry::Vacant(slot) = experts.entry(r.k) {
            slot.insert(io::read_expert(&cfg.experts[&r.k])?);
        }
    }
    Ok(experts)
}

fn print_report(cm: &ConfusionMatrix, json: bool) -> CliResult {
    let report = metrics(cm).map_err(runtime)?;
    if json {
        println!("{}", report.to_json());
        return Ok(());
    }
    println!("{cm}");
    println!("{:<14}{:>11}{:>11}{:>11}", "class", "precision", "recall", "f1");
    let show = |v: f64| if v.is_nan() { "n/a".to_string() } else { format!("{v:.4}") };
    for (i, name) in report.classes.iter().enumerate() {
        println!(
            "{name:<14}{:>11}{:>11}{:>11}",
            show(report.precision[i]),
            show(report.recall[i]),
            show(report.f1[i])
        );
    }
    Ok(())
}

fn evaluate_against(labels: &LabelMap, reference: &Path, json: bool) -> CliResult {
    let (truth, _) = io::read_label_map(reference)?;
    let cm = confusion(labels, &truth, None).map_err(usage)?;
    print_report(&cm, json)
}

fn cmd_run(args: &RunArgs, smoothing_enabled: bool) -> CliResult {
    let mut cfg = args.resolve()?;
    if !smoothing_enabled {
        cfg.smoothing = None;
    }
    let coarse_path = required(&cfg.coarse, "coarse probabilities")?;
    let output = required(&cfg.output, "output path")?.to_path_buf();
    io::require(coarse_path)?;
    if let Some(r) = &cfg.reference {
        io::require(r)?;
    }
    let (p, geo) = io::read_probs(coarse_path)?;
    let experts = load_experts(&cfg, p.classes())?;

    let out = run_pipeline(&p, &experts, &cfg.rules, cfg.smoothing.as_ref()).map_err(runtime)?;
    println!("coarse argmax: {} pixels", out.coarse.data().len());
    for (r, n) in cfg.rules.iter().zip(&out.changed_per_rule) {
        println!("override k={} k'={} tau={}: {n} pixels changed", r.k, r.k_prime, r.tau);
    }
    if cfg.smoothing.is_some() {
        println!("smoothing: {} pixels changed", out.labels.count_changed(&out.fused));
    }
    io::write_label_map(&out.labels, &output, cfg.output_format(), &geo)?;
    if let (Some(path), Some(probs)) = (&args.probs_output, &out.smoothed_probs) {
        write_tensor(&probs.to_raster(), path).map_err(runtime)?;
    }
    println!("wrote {}", output.display());
    if let Some(r) = &cfg.reference {
        evaluate_against(&out.labels, r, args.json)?;
    }
    Ok(())
}

fn cmd_smooth(cmd: &SmoothCmd) -> CliResult {
    let mut cfg = cmd.run.resolve()?;
    if !cfg.rules.is_empty() || !cfg.experts.is_empty() {
        return Err(usage("smooth takes no rules or experts; use pipeline"));
    }
    let params = cfg.smoothing.get_or_insert_with(SmoothingParams::default);
    let params = *params;
    let input = required(&cfg.coarse, "input raster")?;
    let output = required(&cfg.output, "output path")?.to_path_buf();
    let (logits, geo) = if cmd.logits {
        io::read_logits(input)?
    } else {
        let (p, geo) = io::read_probs(input)?;
        (probs_to_logits(&p, DEFAULT_LOGIT_EPS).map_err(runtime)?, geo)
    };
    let s = smooth(&logits, &params).map_err(runtime)?;
    println!(
        "smoothing: {} pixels changed",
        s.labels.count_changed(&argmax_labels(&logits))
    );
    io::write_label_map(&s.labels, &output, cfg.output_format(), &geo)?;
    if let Some(path) = &cmd.run.probs_output {
        write_tensor(&s.probs.to_raster(), path).map_err(runtime)?;
    }
    println!("wrote {}", output.display());
    if let Some(r) = &cfg.reference {
        evaluate_against(&s.labels, r, cmd.run.json)?;
    }
    Ok(())
}

fn cmd_evaluate(args: &EvaluateArgs) -> CliResult {
    let (pred, _) = io::read_label_map(&args.pred)?;
    let (truth, _) = io::read_label_map(&args.reference)?;
    let cm = confusion(&pred, &truth, args.ignore).map_err(usage)?;
    print_report(&cm, args.json)
}

fn cmd_detect(args: &DetectArgs) -> CliResult {
    let (pred, _) = io::read_label_map(&args.pred)?;
    let (truth, _) = io::read_label_map(&args.reference)?;
    let cm = confusion(&pred, &truth, None).map_err(usage)?;
    let mut rules = detect_confusion(&cm, args.top).map_err(runtime)?;
    for r in &mut rules {
        r.tau = args.tau;
        r.validate().map_err(usage)?;
    }
    let text = rules_to_json(&rules);
    match &args.output {
        Some(path) => std::fs::write(path, text + "\n").map_err(runtime),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn cmd_synth(args: &SynthArgs) -> CliResult {
    let mut spec = match &args.config {
        Some(path) => {
            io::require(path)?;
            let text = std::fs::read_to_string(path).map_err(runtime)?;
            serde_json::from_str::<SceneSpec>(&text).map_err(usage)?
        }
        None => SceneSpec {
            height: args.height,
            width: args.width,
            classes: args.classes,
            blobs: args.blobs,
            confusion_pair: (args.k, args.k_prime),
            confusion_strength: args.strength,
            noise_rate: args.noise,
            seed: 0,
        },
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    spec.validate().map_err(usage)?;
    let rule = FusionRule::new(spec.confusion_pair.0, spec.confusion_pair.1, args.tau).map_err(usage)?;
    let scene = generate_scene::<f32>(&spec).map_err(runtime)?;

    let dir = &args.output_dir;
    std::fs::create_dir_all(dir).map_err(runtime)?;
    let expert_name = format!("expert_{}.fmt", rule.k);
    fmlc_core::write_labels(&scene.truth, dir.join("truth.fmt")).map_err(runtime)?;
    write_tensor(&scene.coarse.to_raster(), dir.join("coarse.fmt")).map_err(runtime)?;
    write_tensor(&scene.expert.to_raster(), dir.join(&expert_name)).map_err(runtime)?;
    std::fs::write(dir.join("rules.json"), rules_to_json(&[rule]) + "\n").map_err(runtime)?;
    std::fs::write(
        dir.join("scene.json"),
        serde_json::to_string_pretty(&spec).map_err(runtime)? + "\n",
    )
    .map_err(runtime)?;
    let cfg = PipelineConfig {
        coarse: Some("coarse.fmt".into()),
        experts: BTreeMap::from([(rule.k, PathBuf::from(expert_name))]),
        rules: vec![rule],
        output: Some("labels.tif".into()),
        format: Some(Format::Tiff),
        reference: Some("truth.fmt".into()),
        ..Default::default()
    };
    std::fs::write(dir.join("config.json"), cfg.to_json() + "\n").map_err(runtime)?;
    println!("wrote scene (seed {}) to {}", spec.seed, dir.display());
    Ok(())
}

fn cmd_convert(args: &ConvertArgs) -> CliResult {
    io::require(&args.input)?;
    let format = args.format.unwrap_or_else(|| Format::for_path(&args.output));
    let input_format = Format::for_path(&args.input);
    let labels: Option<(LabelMap, GeoTags)> = match input_format {
        Format::Fmt => match fmlc_core::read_tensor(&args.input).map_err(runtime)? {
            fmlc_core::Tensor::Labels(l) => Some((l, GeoTags::default())),
            fmlc_core::Tensor::Float(r) => {
                return match format {
                    Format::Fmt => write_tensor(&r, &args.output).map_err(runtime),
                    Format::Tiff => Err(usage("TIFF output holds uint8 labels only; input is a float tensor")),
                };
            }
        },
        Format::Tiff => {
            let bytes = std::fs::read(&args.input).map_err(runtime)?;
            let img = decode_tiff(&bytes).map_err(runtime)?;
            if matches!(img.samples, TiffSamples::U8(_)) && img.tags.samples_per_pixel == 1 {
                Some(fmlc_core::decode_label_tiff(&bytes).map_err(runtime)?)
            } else {
                None
            }
        }
    };
    match labels {
        Some((l, geo)) => io::write_label_map(&l, &args.output, format, &geo),
        None => {
            let (raster, _) = io::read_float(&args.input)?;
            match format {
                Format::Fmt => write_tensor(&raster, &args.output).map_err(runtime),
                Format::Tiff => Err(usage("TIFF output holds uint8 labels only; input is a float raster")),
            }
        }
    }
}

fn run(cli: Cli) -> CliResult {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(usage("--threads must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(runtime)?;
    }
    match &cli.command {
        Command::Fuse(a) => cmd_run(a, false),
        Command::Smooth(a) => cmd_smooth(a),
        Command::Pipeline(a) => cmd_run(a, true),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::DetectConfusion(a) => cmd_detect(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Convert(a) => cmd_convert(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fmlc: {e}");
            ExitCode::from(e.code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expert_flag_parses() {
        assert_eq!(parse_expert("1=a/b.fmt").unwrap(), (1, PathBuf::from("a/b.fmt")));
        assert!(parse_expert("a/b.fmt").is_err());
        assert!(parse_expert("300=x").is_err());
    }

    #[test]
    fn smoothing_flags_override() {
        let args = SmoothingArgs {
            window: Some(7),
            ..Default::default()
        };
        assert_eq!(args.apply(None).unwrap().window, 7);
        assert_eq!(args.apply(Some(SmoothingParams::default())).unwrap().alpha, 0.6);
        let off = SmoothingArgs {
            no_smooth: true,
            ..Default::default()
        };
        assert_eq!(off.apply(Some(SmoothingParams::default())), None);
        assert_eq!(SmoothingArgs::default().apply(None), None);
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
