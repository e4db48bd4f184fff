//! Seeded synthetic datasets.

use std::path::PathBuf;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{load_csv, subsample, DatasetSpec};
use crate::error::Result;
use crate::model::{Sample, TaskKind};

/// Environment variable naming a local copy of the skin segmentation file.
pub const SKIN_PATH_VAR: &str = "RIDGESV_SKIN_PATH";

fn normal(std: f64) -> Normal<f64> {
    Normal::new(0.0, std).expect("finite std")
}

/// Two unit-variance Gaussian classes in 2-D centred at `±(1, 1)`, labels
/// alternating `+1, −1`. Ids start at `first_id`.
pub fn two_gaussians(n: usize, seed: u64, first_id: u64) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = normal(1.0);
    (0..n)
        .map(|i| {
            let y = if i % 2 == 0 { 1.0 } else { -1.0 };
            let x = vec![y + noise.sample(&mut rng), y + noise.sample(&mut rng)];
            Sample::new(first_id + i as u64, x, y)
        })
        .collect()
}

/// `y = sin(x) + N(0, 0.1²)` with `x` uniform on `[−3, 3]`.
pub fn noisy_sine(n: usize, seed: u64, first_id: u64) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = normal(0.1);
    (0..n)
        .map(|i| {
            let x: f64 = rng.gen_range(-3.0..3.0);
            Sample::new(first_id + i as u64, vec![x], x.sin() + noise.sample(&mut rng))
        })
        .collect()
}

/// Three colour channels in `[0, 255]`: about a fifth of the rows come from
/// a compact "skin" cluster (`+1`), the rest from a broad background (`−1`).
pub fn skin_like(n: usize, seed: u64, first_id: u64) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tight = normal(18.0);
    let centre = [120.0, 150.0, 200.0];
    (0..n)
        .map(|i| {
            let skin = rng.gen_bool(0.21);
            let x: Vec<f64> = if skin {
                centre.iter().map(|c| (c + tight.sample(&mut rng)).clamp(0.0, 255.0)).collect()
            } else {
                loop {
                    let x: Vec<f64> = (0..3).map(|_| rng.gen_range(0.0..255.0)).collect();
                    let d2: f64 = x.iter().zip(&centre).map(|(a, c)| (a - c) * (a - c)).sum();
                    if d2 > 60.0 * 60.0 {
                        break x;
                    }
                }
            };
            Sample::new(first_id + i as u64, x, if skin { 1.0 } else { -1.0 })
        })
        .collect()
}

/// Up to `limit` rows of the skin segmentation data, drawn uniformly with
/// `seed`. Reads the file named by [`SKIN_PATH_VAR`] when it exists and
/// falls back to [`skin_like`] otherwise. The flag is `true` for real data.
pub fn skin_segmentation(limit: usize, seed: u64) -> Result<(Vec<Sample>, bool)> {
    let path = std::env::var_os(SKIN_PATH_VAR).map(PathBuf::from);
    match path.filter(|p| p.is_file()) {
        Some(p) => {
            let mut spec = DatasetSpec::new(p, TaskKind::Classification);
            spec.delimiter = b'\t';
            spec.positive_label = Some(1.0);
            let rows = subsample(&load_csv(&spec)?, limit, seed)
                .into_iter()
                .enumerate()
                .map(|(k, s)| Sample::new(k as u64, s.features, s.target))
                .collect();
            Ok((rows, true))
        }
        None => Ok((skin_like(limit, seed, 0), false)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_balanced() {
        let a = two_gaussians(100, 4, 0);
        assert_eq!(a, two_gaussians(100, 4, 0));
        assert_eq!(a.iter().filter(|s| s.target > 0.0).count(), 50);
        assert_eq!(noisy_sine(10, 1, 5)[0].id.0, 5);
        let s = skin_like(500, 2, 0);
        let pos = s.iter().filter(|s| s.target > 0.0).count();
        assert!(pos > 60 && pos < 160, "{pos}");
        assert!(s.iter().all(|x| x.features.iter().all(|v| (0.0..=255.0).contains(v))));
    }
}
