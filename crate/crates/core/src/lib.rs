//! Hierarchical fusion of multiclass and binary land-cover classifiers with
//! windowed Bayesian logit smoothing.
//!
//! The library is generic over the scalar type ([`Scalar`], implemented for
//! `f32` and `f64`). The unsuffixed type defaults are `f32`; the `*64`
//! aliases below name the double-precision variants.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod fusion;
pub mod geotiff;
pub mod metrics;
pub mod raster;
pub mod scalar;
pub mod smoothing;
pub mod synth;
pub mod tensor_io;
pub mod tiling;

pub use error::{Error, Result};
pub use fusion::{
    detect_confusion, expert_override, override_logits, rules_from_json, rules_to_json, run_pipeline,
    FusionRule, PipelineOutput, DEFAULT_TAU,
};
pub use geotiff::{
    decode_label_tiff, encode_label_tiff, read_label_tiff, read_label_tiff_with_geo, read_raster_tiff,
    write_label_tiff, GeoTags, RawTag,
};
pub use metrics::{
    binary_ce_loss, confusion, metrics, multiclass_ce_loss, BinaryLoss, ConfusionMatrix, MetricReport,
};
pub use raster::{
    argmax_labels, probs_to_logits, softmax, BinaryProbMap, ClassScores, Grid, LabelMap, Legend, LogitMap,
    MultiBandRaster, PixelMask, ProbabilityMap, Shape, DEFAULT_LOGIT_EPS,
};
pub use scalar::Scalar;
pub use smoothing::{
    blend, disagreements, isolated_pixels, mrf_energy, smooth, window_stats, BlendVariant, MrfEnergy,
    MrfParams, Neighborhood, Smoothed, SmoothingParams, WindowStats,
};
pub use synth::{generate_scene, naive_smooth_reference, naive_window_stats, Scene, SceneSpec};
pub use tensor_io::{read_labels, read_raster, read_tensor, write_labels, write_tensor, Tensor};
pub use tiling::{
    compute_stats, destandardize, standardize, stitch, tile, EdgePolicy, NormalizationStats, Tile, TileSpec,
};

pub type MultiBandRaster64 = MultiBandRaster<f64>;
pub type ProbabilityMap64 = ProbabilityMap<f64>;
pub type LogitMap64 = LogitMap<f64>;
pub type BinaryProbMap64 = BinaryProbMap<f64>;
pub type WindowStats64 = WindowStats<f64>;
pub type Smoothed64 = Smoothed<f64>;
pub type PipelineOutput64 = PipelineOutput<f64>;
pub type Scene64 = Scene<f64>;
