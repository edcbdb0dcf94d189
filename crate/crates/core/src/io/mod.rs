//! File formats for rasters, label maps, region maps and probability fields.
//!
//! * label and region maps: P5 greymaps, 16-bit, `65535` = unlabeled
//! * RGB images: P6 pixmaps
//! * probability fields and multi-band float rasters: `PRB1`

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use crate::error::{Error, Result};
use crate::raster::{ClassId, FeatureRaster, LabelMap, ProbabilityField, RegionMap};

pub mod pnm;
pub mod prb;

pub use pnm::{read_pgm, read_ppm, write_pgm, write_ppm};
pub use prb::{read_prb, write_prb, PrbTable};

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

/// Reads a label map. The class count is taken from `num_classes` when
/// given, otherwise inferred from the largest label.
pub fn read_label_map(path: &Path, num_classes: Option<usize>) -> Result<LabelMap> {
    let (w, h, samples) = read_pgm(open(path)?)?;
    match num_classes {
        Some(c) => LabelMap::new(h, w, c, samples),
        None => LabelMap::infer_classes(h, w, samples),
    }
}

pub fn write_label_map(path: &Path, labels: &LabelMap) -> Result<()> {
    write_labels(path, labels.height(), labels.width(), labels.labels())
}

/// Writes raw class ids as a greymap.
pub fn write_labels(path: &Path, height: usize, width: usize, labels: &[ClassId]) -> Result<()> {
    write_pgm(create(path)?, width, height, labels)
}

/// Reads a region map, renumbering ids in first-appearance order.
pub fn read_region_map(path: &Path) -> Result<RegionMap> {
    let (w, h, samples) = read_pgm(open(path)?)?;
    let ids: Vec<u32> = samples.into_iter().map(u32::from).collect();
    RegionMap::from_raw(h, w, &ids)
}

pub fn write_region_map(path: &Path, regions: &RegionMap) -> Result<()> {
    let samples = regions
        .ids()
        .iter()
        .map(|&id| {
            u16::try_from(id).map_err(|_| {
                Error::Format(format!("region id {id} does not fit a 16-bit greymap"))
            })
        })
        .collect::<Result<Vec<u16>>>()?;
    write_pgm(create(path)?, regions.width(), regions.height(), &samples)
}

impl From<&ProbabilityField> for PrbTable {
    fn from(p: &ProbabilityField) -> Self {
        PrbTable {
            rows: p.num_nodes(),
            cols: p.num_classes(),
            values: p.probs().iter().map(|&v| v as f32).collect(),
        }
    }
}

impl TryFrom<PrbTable> for ProbabilityField {
    type Error = Error;

    fn try_from(t: PrbTable) -> Result<Self> {
        ProbabilityField::new(t.cols, t.values.into_iter().map(f64::from).collect())
    }
}

pub fn read_probabilities(path: &Path) -> Result<ProbabilityField> {
    read_prb(open(path)?)?.try_into()
}

pub fn write_probabilities(path: &Path, probs: &ProbabilityField) -> Result<()> {
    write_prb(create(path)?, &PrbTable::from(probs))
}

/// Multi-band float raster stored as `PRB1`; the row count must be
/// `width * height`.
pub fn raster_from_prb(table: PrbTable, width: usize) -> Result<FeatureRaster> {
    if width == 0 || !table.rows.is_multiple_of(width) {
        return Err(Error::DimensionMismatch(format!(
            "{} pixels do not form rows of width {width}",
            table.rows
        )));
    }
    FeatureRaster::new(
        table.rows / width,
        width,
        table.cols,
        table.values.into_iter().map(f64::from).collect(),
    )
}

pub fn raster_to_prb(raster: &FeatureRaster) -> PrbTable {
    PrbTable {
        rows: raster.num_pixels(),
        cols: raster.bands(),
        values: raster.values().iter().map(|&v| v as f32).collect(),
    }
}

/// Reads an image by extension: `.ppm` as RGB, anything else as `PRB1`
/// (which then needs `width`).
pub fn read_image(path: &Path, width: Option<usize>) -> Result<FeatureRaster> {
    let is_ppm = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("ppm"));
    if is_ppm {
        return read_ppm(open(path)?);
    }
    let width = width.ok_or_else(|| {
        Error::Config(format!(
            "{} is not a PPM; its width must be given",
            path.display()
        ))
    })?;
    raster_from_prb(read_prb(open(path)?)?, width)
}

pub fn write_image(path: &Path, raster: &FeatureRaster) -> Result<()> {
    let is_ppm = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("ppm"));
    if is_ppm {
        write_ppm(create(path)?, raster)
    } else {
        write_prb(create(path)?, &raster_to_prb(raster))
    }
}
