//! Synthetic scenes with planted ground truth.
//!
//! The truth is a Voronoi partition with a random class per cell. The image
//! paints each class in a fixed colour plus Gaussian noise. Pixel
//! posteriors come from a symmetric label-noise channel: each pixel's
//! observed class is the true one with probability `1 - noise`, otherwise a
//! uniformly drawn other class, and the posterior puts mass `1 - noise` on
//! the observed class with the rest spread uniformly over the others.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::raster::{ClassId, FeatureRaster, LabelMap, ProbabilityField};

const PALETTE: [[f64; 3]; 8] = [
    [200.0, 60.0, 50.0],
    [60.0, 170.0, 70.0],
    [50.0, 80.0, 200.0],
    [210.0, 200.0, 60.0],
    [160.0, 70.0, 190.0],
    [60.0, 190.0, 190.0],
    [240.0, 140.0, 40.0],
    [110.0, 110.0, 110.0],
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthParams {
    pub height: usize,
    pub width: usize,
    pub classes: usize,
    /// Label-noise rate of the pixel posteriors, in `[0, 1]`.
    pub noise: f64,
    pub seed: u64,
    /// Standard deviation of the additive image noise (0-255 scale).
    pub feature_noise: f64,
    /// Number of Voronoi cells; `None` picks one per ~256 pixels (at least 4).
    pub cells: Option<usize>,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            height: 64,
            width: 64,
            classes: 4,
            noise: 0.3,
            seed: 0,
            feature_noise: 20.0,
            cells: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthScene {
    pub truth: LabelMap,
    /// RGB values, integer-valued in `0..=255`.
    pub image: FeatureRaster,
    pub pixel_probs: ProbabilityField,
}

fn colour(class: usize) -> [f64; 3] {
    if class < PALETTE.len() {
        return PALETTE[class];
    }
    // deterministic spread for larger class counts
    let mut rng = ChaCha8Rng::seed_from_u64(class as u64);
    [0; 3].map(|_| rng.gen_range(20.0..235.0))
}

pub fn generate(params: &SynthParams) -> Result<SynthScene> {
    let SynthParams {
        height: h,
        width: w,
        classes: c,
        noise,
        seed,
        feature_noise,
        ..
    } = *params;
    if h == 0 || w == 0 {
        return Err(Error::InvalidParameter("scene must be at least 1x1".into()));
    }
    if c < 2 {
        return Err(Error::InvalidParameter("need at least 2 classes".into()));
    }
    if !(0.0..=1.0).contains(&noise) {
        return Err(Error::InvalidParameter(format!("noise {noise} outside [0, 1]")));
    }
    if !(feature_noise >= 0.0 && feature_noise.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "feature noise {feature_noise} must be >= 0"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cells = params.cells.unwrap_or((h * w / 256).max(4)).max(1);

    let sites: Vec<(f64, f64, ClassId)> = (0..cells)
        .map(|_| {
            (
                rng.gen_range(0.0..h as f64),
                rng.gen_range(0.0..w as f64),
                rng.gen_range(0..c) as ClassId,
            )
        })
        .collect();
    let truth: Vec<ClassId> = (0..h * w)
        .map(|i| {
            let (r, col) = ((i / w) as f64 + 0.5, (i % w) as f64 + 0.5);
            let nearest = sites
                .iter()
                .min_by(|a, b| {
                    let da = (a.0 - r).powi(2) + (a.1 - col).powi(2);
                    let db = (b.0 - r).powi(2) + (b.1 - col).powi(2);
                    da.total_cmp(&db)
                })
                .expect("at least one site");
            nearest.2
        })
        .collect();

    let gauss = Normal::new(0.0, feature_noise.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut pixels = Vec::with_capacity(h * w * 3);
    for &t in &truth {
        for base in colour(t as usize) {
            let n = if feature_noise > 0.0 {
                gauss.sample(&mut rng)
            } else {
                0.0
            };
            pixels.push((base + n).round().clamp(0.0, 255.0));
        }
    }

    // f32-exact so that files reproduce the in-memory field bit for bit
    let peak = f64::from((1.0 - noise) as f32);
    let rest = f64::from((noise / (c - 1) as f64) as f32);
    let mut probs = Vec::with_capacity(h * w * c);
    for &t in &truth {
        let observed = if rng.gen_bool(noise) {
            let other = rng.gen_range(0..c - 1);
            if other >= t as usize {
                other + 1
            } else {
                other
            }
        } else {
            t as usize
        };
        probs.extend((0..c).map(|k| if k == observed { peak } else { rest }));
    }

    Ok(SynthScene {
        truth: LabelMap::new(h, w, c, truth)?,
        image: FeatureRaster::new(h, w, 3, pixels)?,
        pixel_probs: ProbabilityField::new(c, probs)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_per_seed() {
        let p = SynthParams {
            height: 16,
            width: 16,
            seed: 9,
            ..SynthParams::default()
        };
        assert_eq!(generate(&p).unwrap(), generate(&p).unwrap());
        let other = SynthParams { seed: 10, ..p };
        assert_ne!(generate(&p).unwrap().truth, generate(&other).unwrap().truth);
    }

    #[test]
    fn noiseless_posteriors_are_one_hot_truth() {
        let p = SynthParams {
            height: 12,
            width: 10,
            noise: 0.0,
            ..SynthParams::default()
        };
        let s = generate(&p).unwrap();
        assert_eq!(s.pixel_probs.argmax(), s.truth.labels());
        assert!(s.pixel_probs.probs().iter().all(|&v| v == 0.0 || v == 1.0));
    }

    #[test]
    fn flip_rate_tracks_noise() {
        let p = SynthParams {
            height: 64,
            width: 64,
            noise: 0.45,
            seed: 1,
            ..SynthParams::default()
        };
        let s = generate(&p).unwrap();
        let wrong = s
            .pixel_probs
            .argmax()
            .iter()
            .zip(s.truth.labels())
            .filter(|(a, b)| a != b)
            .count() as f64
            / 4096.0;
        assert!((wrong - 0.45).abs() < 0.03, "flip rate {wrong}");
        assert!(s.image.values().iter().all(|v| v.fract() == 0.0));
    }

    #[test]
    fn rejects_bad_params() {
        let base = SynthParams::default();
        assert!(generate(&SynthParams { classes: 1, ..base }).is_err());
        assert!(generate(&SynthParams { noise: 1.5, ..base }).is_err());
        assert!(generate(&SynthParams { width: 0, ..base }).is_err());
    }
}
