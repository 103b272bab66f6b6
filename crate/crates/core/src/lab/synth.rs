use std::f64::consts::{PI, TAU};

use crate::error::{Error, Result};
use crate::meta::TaskSet;
use crate::model::Coords;
use crate::numkit::SeededRng;
use crate::train::Dataset;

pub const TEST_IMAGE_SIZES: [usize; 4] = [16, 32, 64, 128];

fn min_max(values: &mut [f64]) {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    let span = (hi - lo).max(f64::MIN_POSITIVE);
    values.iter_mut().for_each(|v| *v = (*v - lo) / span);
}

/// Sum of random integer-frequency plane waves on the periodic grid, with
/// amplitudes drawn from `envelope(|k|)`.
fn plane_waves(rng: &mut SeededRng, size: usize, count: usize, kmax: i64, envelope: impl Fn(f64) -> f64) -> Vec<f64> {
    let mut out = vec![0.0; size * size];
    let span = 2 * kmax as usize + 1;
    for _ in 0..count {
        let ky = rng.below(span) as i64 - kmax;
        let kx = rng.below(span) as i64 - kmax;
        let amp = envelope(((kx * kx + ky * ky) as f64).sqrt()) * rng.uniform_in(0.5, 1.0);
        let phase = rng.uniform_in(0.0, TAU);
        for i in 0..size {
            for j in 0..size {
                let arg = TAU * (ky as f64 * i as f64 + kx as f64 * j as f64) / size as f64 + phase;
                out[i * size + j] += amp * arg.sin();
            }
        }
    }
    out
}

/// Deterministic grayscale composite (checkerboard, radial gradient, disc and
/// band-limited texture) on the [−1, 1)² grid, scaled to [0, 1].
pub fn gen_test_image(size: usize, seed: u64) -> Result<Dataset> {
    if !TEST_IMAGE_SIZES.contains(&size) {
        return Err(Error::Argument(format!("test images come in sizes {TEST_IMAGE_SIZES:?}, not {size}")));
    }
    let mut rng = SeededRng::new(seed);
    let coords = Coords::grid_2d(size, size);
    let cell = size / 8;
    let (cy, cx) = (rng.uniform_in(-0.4, 0.4), rng.uniform_in(-0.4, 0.4));
    let radius = rng.uniform_in(0.3, 0.5);
    let texture = plane_waves(&mut rng, size, 24, size as i64 / 2, |k| 1.0 / (1.0 + 0.25 * k));
    let tex_scale = texture.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let mut values = Vec::with_capacity(size * size);
    for i in 0..size {
        for j in 0..size {
            let p = coords.point(i * size + j);
            let checker = ((i / cell + j / cell) % 2) as f64;
            let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
            let radial = 1.0 - r / 2f64.sqrt();
            let disc = if (p[0] - cy).powi(2) + (p[1] - cx).powi(2) <= radius * radius { 1.0 } else { 0.0 };
            let tex = texture[i * size + j] / tex_scale;
            values.push(0.25 * checker + 0.3 * radial + 0.25 * disc + 0.2 * tex);
        }
    }
    min_max(&mut values);
    Dataset::new(coords, values, format!("test-image size={size} seed={seed}"))?.with_shape(size, size)
}

/// Samples `sin(2πf·i/fs)` at `r_i = i/fs`, `i = 0..n`.
pub fn gen_signal(f: f64, fs: f64, n: usize) -> Result<Dataset> {
    if !(fs > 0.0) {
        return Err(Error::Argument(format!("sampling rate must be positive, got {fs}")));
    }
    let coords = Coords::line(n, fs);
    let targets = (0..n).map(|i| (2.0 * PI * f * i as f64 / fs).sin()).collect();
    Dataset::new(coords, targets, format!("sine f={f} fs={fs} n={n}"))
}

/// Marks a random half of `n` samples (rounded up) as training points.
pub fn half_mask(n: usize, rng: &mut SeededRng) -> Result<Vec<bool>> {
    let mut mask = vec![false; n];
    for i in rng.sample_indices(n, n.div_ceil(2))? {
        mask[i] = true;
    }
    Ok(mask)
}

/// One smooth synthetic "face-like" image: 3–6 anisotropic Gaussian bumps
/// plus low-frequency texture with a fixed spectral envelope, scaled to
/// [0, 1], with a random 50% training mask.
pub fn gen_face_proxy(size: usize, seed: u64) -> Result<Dataset> {
    if size < 2 {
        return Err(Error::Argument(format!("image size {size} too small")));
    }
    let mut rng = SeededRng::new(seed);
    let coords = Coords::grid_2d(size, size);
    let bumps = 3 + rng.below(4);
    let mut values = vec![0.0; size * size];
    for _ in 0..bumps {
        let (cy, cx) = (rng.uniform_in(-0.6, 0.6), rng.uniform_in(-0.6, 0.6));
        let (sy, sx) = (rng.uniform_in(0.1, 0.4), rng.uniform_in(0.1, 0.4));
        let angle = rng.uniform_in(0.0, PI);
        let amp = rng.uniform_in(0.3, 1.0) * if rng.uniform() < 0.25 { -1.0 } else { 1.0 };
        let (s, c) = angle.sin_cos();
        for (k, v) in values.iter_mut().enumerate() {
            let p = coords.point(k);
            let (dy, dx) = (p[0] - cy, p[1] - cx);
            let u = c * dx + s * dy;
            let w = -s * dx + c * dy;
            *v += amp * (-0.5 * (u * u / (sx * sx) + w * w / (sy * sy))).exp();
        }
    }
    let noise = plane_waves(&mut rng, size, 16, (size as i64 / 4).max(1), |k| 0.08 * (-k * k / 8.0).exp());
    values.iter_mut().zip(&noise).for_each(|(v, n)| *v += n);
    min_max(&mut values);
    let mask = half_mask(size * size, &mut rng)?;
    Dataset::with_mask(coords, values, mask, format!("face-proxy size={size} seed={seed}"))?.with_shape(size, size)
}

/// `count` face-proxy tasks; task `i` is seeded from stream `i` of `seed`.
pub fn gen_face_proxy_tasks(count: usize, size: usize, seed: u64) -> Result<TaskSet> {
    let mut rng = SeededRng::new(seed);
    let tasks = (0..count)
        .map(|i| gen_face_proxy(size, rng.fork(i as u64).next_u64()))
        .collect::<Result<Vec<_>>>()?;
    TaskSet::new(tasks, format!("face-proxy size={size} seed={seed}"))
}

/// `count` test images with random 50% training masks.
pub fn gen_masked_test_images(count: usize, size: usize, seed: u64) -> Result<Vec<Dataset>> {
    let mut rng = SeededRng::new(seed);
    (0..count)
        .map(|i| {
            let mut stream = rng.fork(i as u64);
            let mut img = gen_test_image(size, stream.next_u64())?;
            img.set_mask(half_mask(size * size, &mut stream)?)?;
            Ok(img)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn signal_edge_cases() {
        let zero = gen_signal(0.0, 128.0, 16).unwrap();
        assert!(zero.targets.iter().all(|v| *v == 0.0));
        let nyq = gen_signal(64.0, 128.0, 32).unwrap();
        assert!(nyq.targets.iter().all(|v| v.abs() < 1e-12));
        assert!(gen_signal(1.0, 0.0, 4).is_err());
        let s = gen_signal(23.0, 128.0, 128).unwrap();
        assert_eq!(s.coords.point(5), &[5.0 / 128.0]);
    }

    #[test]
    fn test_image_sizes_and_range() {
        assert!(gen_test_image(24, 0).is_err());
        for size in TEST_IMAGE_SIZES {
            let img = gen_test_image(size, 3).unwrap();
            assert_eq!(img.shape, Some((size, size)));
            assert!(img.targets.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn half_mask_has_half() {
        let mut rng = SeededRng::new(1);
        let m = half_mask(257, &mut rng).unwrap();
        assert_eq!(m.iter().filter(|b| **b).count(), 129);
    }

    #[test]
    fn face_proxy_tasks_share_grid() {
        let set = gen_face_proxy_tasks(5, 16, 2).unwrap();
        assert_eq!(set.len(), 5);
        assert_ne!(set.tasks[0].targets, set.tasks[1].targets);
        for t in &set.tasks {
            assert_eq!(t.train_indices().len(), 128);
        }
    }
}
