//! Format dispatch for raster inputs and label outputs.

use std::path::Path;

use fmlc_core::geotiff::{decode_tiff, TiffSamples};
use fmlc_core::tensor_io::{read_tensor, Tensor};
use fmlc_core::{
    write_label_tiff, write_labels, BinaryProbMap, GeoTags, LabelMap, LogitMap, MultiBandRaster, ProbabilityMap,
};

use crate::config::Format;
use crate::CliError;

pub fn require(path: &Path) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("input not found: {}", path.display())))
    }
}

fn runtime(path: &Path) -> impl Fn(fmlc_core::Error) -> CliError + '_ {
    move |e| CliError::Runtime(format!("{}: {e}", path.display()))
}

/// Float raster plus any geo tags carried by a TIFF input.
pub fn read_float(path: &Path) -> Result<(MultiBandRaster<f32>, GeoTags), CliError> {
    require(path)?;
    let err = runtime(path);
    if Format::for_path(path) == Format::Fmt {
        return match read_tensor(path).map_err(&err)? {
            Tensor::Float(r) => Ok((r, GeoTags::default())),
            Tensor::Labels(_) => Err(CliError::Runtime(format!(
                "{}: expected a float tensor, found labels",
                path.display()
            ))),
        };
    }
    let bytes = std::fs::read(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    let img = decode_tiff(&bytes).map_err(&err)?;
    let data = match img.samples {
        TiffSamples::F32(v) => v,
        TiffSamples::U8(v) => v.into_iter().map(f32::from).collect(),
    };
    let raster = MultiBandRaster::new(
        img.tags.length as usize,
        img.tags.width as usize,
        img.tags.samples_per_pixel as usize,
        data,
    )
    .map_err(&err)?;
    Ok((raster, img.geo))
}

pub fn read_probs(path: &Path) -> Result<(ProbabilityMap<f32>, GeoTags), CliError> {
    let (raster, geo) = read_float(path)?;
    Ok((ProbabilityMap::from_raster(raster).map_err(runtime(path))?, geo))
}

pub fn read_logits(path: &Path) -> Result<(LogitMap<f32>, GeoTags), CliError> {
    let (raster, geo) = read_float(path)?;
    Ok((LogitMap::from_raster(raster).map_err(runtime(path))?, geo))
}

pub fn read_expert(path: &Path) -> Result<BinaryProbMap<f32>, CliError> {
    let (raster, _) = read_float(path)?;
    BinaryProbMap::from_raster(raster).map_err(runtime(path))
}

pub fn read_label_map(path: &Path) -> Result<(LabelMap, GeoTags), CliError> {
    require(path)?;
    let err = runtime(path);
    match Format::for_path(path) {
        Format::Fmt => Ok((fmlc_core::read_labels(path).map_err(&err)?, GeoTags::default())),
        Format::Tiff => fmlc_core::read_label_tiff_with_geo(path).map_err(&err),
    }
}

pub fn write_label_map(labels: &LabelMap, path: &Path, format: Format, geo: &GeoTags) -> Result<(), CliError> {
    let err = runtime(path);
    match format {
        Format::Fmt => write_labels(labels, path).map_err(err),
        Format::Tiff => {
            let geo = (!geo.is_empty()).then_some(geo);
            write_label_tiff(labels, geo, path).map_err(err)
        }
    }
}
