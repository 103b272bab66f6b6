use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Unnormalized DFT bins. One-dimensional spectra have `rows == 1`; 2D
/// spectra are stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexSpectrum {
    pub rows: usize,
    pub cols: usize,
    pub bins: Vec<Complex64>,
}

impl ComplexSpectrum {
    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        self.bins.iter().map(|c| c.norm()).collect()
    }

    pub fn power(&self) -> Vec<f64> {
        self.bins.iter().map(|c| c.norm_sqr()).collect()
    }

    pub fn at(&self, row: usize, col: usize) -> Complex64 {
        self.bins[row * self.cols + col]
    }

    pub fn total_energy(&self) -> f64 {
        self.bins.iter().map(|c| c.norm_sqr()).sum()
    }
}

/// Forward DFT X[k] = Σ x[n]·exp(−2πi·kn/N) of a real sequence.
pub fn dft(samples: &[f64]) -> Result<ComplexSpectrum> {
    if samples.is_empty() {
        return Err(Error::Argument("DFT of an empty sequence".into()));
    }
    let mut buf: Vec<Complex64> = samples.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    transform(&mut buf, false);
    Ok(ComplexSpectrum {
        rows: 1,
        cols: samples.len(),
        bins: buf,
    })
}

/// Separable 2D DFT of a row-major `rows × cols` grid.
pub fn dft2(grid: &[f64], rows: usize, cols: usize) -> Result<ComplexSpectrum> {
    if grid.is_empty() || rows == 0 || cols == 0 {
        return Err(Error::Argument("DFT of an empty grid".into()));
    }
    if grid.len() != rows * cols {
        return Err(Error::Dimension(format!(
            "grid has {} samples, expected {rows}x{cols}",
            grid.len()
        )));
    }
    let mut bins: Vec<Complex64> = grid.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    transform_2d(&mut bins, rows, cols, false);
    Ok(ComplexSpectrum { rows, cols, bins })
}

/// Inverse transform with the 1/N normalization (1/(rows·cols) in 2D).
pub fn idft(spectrum: &ComplexSpectrum) -> Vec<Complex64> {
    let mut buf = spectrum.bins.clone();
    if spectrum.rows == 1 {
        transform(&mut buf, true);
    } else {
        transform_2d(&mut buf, spectrum.rows, spectrum.cols, true);
    }
    let scale = 1.0 / buf.len() as f64;
    buf.iter_mut().for_each(|c| *c *= scale);
    buf
}

/// Reference O(N²) summation.
pub fn naive_dft(samples: &[f64]) -> Vec<Complex64> {
    let n = samples.len();
    (0..n)
        .map(|k| {
            samples
                .iter()
                .enumerate()
                .map(|(j, &x)| {
                    let angle = -2.0 * PI * ((k * j) % n) as f64 / n as f64;
                    Complex64::from_polar(x, angle)
                })
                .sum()
        })
        .collect()
}

fn transform_2d(bins: &mut [Complex64], rows: usize, cols: usize, inverse: bool) {
    for r in 0..rows {
        transform(&mut bins[r * cols..(r + 1) * cols], inverse);
    }
    let mut column = vec![Complex64::new(0.0, 0.0); rows];
    for c in 0..cols {
        for r in 0..rows {
            column[r] = bins[r * cols + c];
        }
        transform(&mut column, inverse);
        for r in 0..rows {
            bins[r * cols + c] = column[r];
        }
    }
}

/// Unnormalized transform in place; radix-2 for powers of two, direct
/// summation otherwise.
fn transform(buf: &mut [Complex64], inverse: bool) {
    let n = buf.len();
    if n <= 1 {
        return;
    }
    let sign = if inverse { 1.0 } else { -1.0 };
    if !n.is_power_of_two() {
        let input = buf.to_vec();
        for (k, out) in buf.iter_mut().enumerate() {
            *out = input
                .iter()
                .enumerate()
                .map(|(j, x)| x * Complex64::from_polar(1.0, sign * 2.0 * PI * ((k * j) % n) as f64 / n as f64))
                .sum();
        }
        return;
    }

    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            buf.swap(i, j);
        }
    }
    // Twiddles evaluated directly rather than by repeated multiplication.
    let twiddles: Vec<Complex64> = (0..n / 2)
        .map(|k| Complex64::from_polar(1.0, sign * 2.0 * PI * k as f64 / n as f64))
        .collect();
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let step = n / len;
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let t = twiddles[k * step] * buf[start + k + half];
                let u = buf[start + k];
                buf[start + k] = u + t;
                buf[start + k + half] = u - t;
            }
        }
        len <<= 1;
    }
}
