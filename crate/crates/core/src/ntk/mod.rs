//! Empirical neural tangent kernel dictionaries on coordinate grids.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::lab::pgm::save_pgm;
use crate::model::{Coords, InrModel};
use crate::numkit::{dot, sym_eig, EigenDecomposition, Matrix};

pub const DEFAULT_MEMORY_BUDGET: usize = 1 << 30;
pub const DEFAULT_EIG_CUTOFF: f64 = 1e-10;
pub const PSD_TOLERANCE: f64 = 1e-8;
pub const SYMMETRY_TOLERANCE: f64 = 1e-10;

/// Θ(r_i, r_j) = ⟨∇θf(r_i), ∇θf(r_j)⟩ over a set of coordinates.
#[derive(Clone, Debug)]
pub struct GramMatrix {
    pub matrix: Matrix,
    pub coords: Coords,
    pub fingerprint: u64,
    pub shape: Option<(usize, usize)>,
}

impl GramMatrix {
    /// Records the 2D grid layout of the coordinates (row-major).
    pub fn with_shape(mut self, rows: usize, cols: usize) -> Result<Self> {
        if rows * cols != self.coords.len() {
            return Err(Error::Shape(format!(
                "{rows}x{cols} grid for {} coordinates",
                self.coords.len()
            )));
        }
        self.shape = Some((rows, cols));
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.matrix.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.rows() == 0
    }

    pub fn validate(&self) -> Result<()> {
        let asym = self.matrix.max_asymmetry();
        if asym > SYMMETRY_TOLERANCE * self.matrix.max_abs().max(f64::MIN_POSITIVE) {
            return Err(Error::Asymmetric(asym));
        }
        if (0..self.len()).any(|i| self.matrix.get(i, i) < 0.0) {
            return Err(Error::Validation("Gram matrix has a negative diagonal entry".into()));
        }
        Ok(())
    }
}

/// Gram matrix under the default memory budget.
pub fn gram_matrix(model: &InrModel, coords: &Coords, batch_size: usize) -> Result<GramMatrix> {
    gram_matrix_with_budget(model, coords, batch_size, DEFAULT_MEMORY_BUDGET)
}

/// Builds the Jacobian row by row and forms `J Jᵀ`. `budget` bounds the bytes
/// held by the Jacobian and the Gram matrix together.
pub fn gram_matrix_with_budget(model: &InrModel, coords: &Coords, batch_size: usize, budget: usize) -> Result<GramMatrix> {
    let n = coords.len();
    let p = model.param_count();
    let need = n
        .checked_mul(p)
        .and_then(|x| x.checked_add(n.checked_mul(n)?))
        .and_then(|x| x.checked_mul(std::mem::size_of::<f64>()))
        .unwrap_or(usize::MAX);
    if need > budget {
        let fit = ((budget / 8) as f64 / (p as f64 + 1.0)).floor() as usize;
        return Err(Error::Resource(format!(
            "Gram over {n} points with {p} parameters needs {need} bytes (budget {budget}); use at most about {fit} points"
        )));
    }
    let jac = model.jacobian(coords, batch_size)?;
    Ok(GramMatrix {
        matrix: jac.gram_rows(),
        coords: coords.clone(),
        fingerprint: model.fingerprint(),
        shape: None,
    })
}

/// Eigenvalues in descending order with orthonormal eigenvectors.
#[derive(Clone, Debug)]
pub struct NtkSpectrum {
    pub eig: EigenDecomposition,
    pub coords: Coords,
    pub shape: Option<(usize, usize)>,
}

impl NtkSpectrum {
    pub fn len(&self) -> usize {
        self.eig.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eig.is_empty()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eig.eigenvalues
    }

    pub fn eigenvector(&self, i: usize) -> Vec<f64> {
        self.eig.vector(i)
    }

    /// CSV `index,lambda,lambda_rel`.
    pub fn eigenvalues_csv(&self) -> String {
        let mut out = String::from("index,lambda,lambda_rel\n");
        let top = self.eig.eigenvalues.first().copied().unwrap_or(0.0);
        for (i, l) in self.eig.eigenvalues.iter().enumerate() {
            let rel = if top > 0.0 { l / top } else { 0.0 };
            let _ = writeln!(out, "{i},{l:e},{rel:e}");
        }
        out
    }

    fn top_eigenvalue(&self) -> Result<f64> {
        match self.eig.eigenvalues.first() {
            Some(&l) if l > 0.0 => Ok(l),
            _ => Err(Error::Numeric("spectrum has no positive eigenvalue".into())),
        }
    }

    fn check_signal(&self, g: &[f64]) -> Result<()> {
        if g.len() != self.len() {
            return Err(Error::Argument(format!(
                "signal has {} samples, grid has {}",
                g.len(),
                self.len()
            )));
        }
        Ok(())
    }
}

/// Full eigendecomposition of a Gram matrix. Each eigenvector is signed so
/// that its largest-magnitude component is positive.
pub fn ntk_eigs(gram: &GramMatrix) -> Result<NtkSpectrum> {
    gram.validate()?;
    let mut eig = sym_eig(&gram.matrix)?;
    let n = eig.len();
    for c in 0..n {
        let mut best = 0;
        for r in 1..n {
            if eig.eigenvectors.get(r, c).abs() > eig.eigenvectors.get(best, c).abs() {
                best = r;
            }
        }
        if eig.eigenvectors.get(best, c) < 0.0 {
            for r in 0..n {
                let v = eig.eigenvectors.get(r, c);
                eig.eigenvectors.set(r, c, -v);
            }
        }
    }
    if let (Some(&top), Some(&bottom)) = (eig.eigenvalues.first(), eig.eigenvalues.last()) {
        if bottom < -PSD_TOLERANCE * top.abs() {
            return Err(Error::Numeric(format!(
                "Gram matrix is not positive semidefinite (λ_min = {bottom:e}, λ_max = {top:e})"
            )));
        }
    }
    Ok(NtkSpectrum {
        eig,
        coords: gram.coords.clone(),
        shape: gram.shape,
    })
}

/// ⟨φ_i, g⟩ for every eigenvector.
pub fn signal_coefficients(spec: &NtkSpectrum, g: &[f64]) -> Result<Vec<f64>> {
    spec.check_signal(g)?;
    spec.eig.eigenvectors.tr_matvec(g)
}

/// Average fraction of signal energy captured by eigenvectors whose relative
/// eigenvalue is at least each threshold.
#[derive(Clone, Debug, PartialEq)]
pub struct EnergyProfile {
    /// Sorted descending.
    pub thresholds: Vec<f64>,
    pub values: Vec<f64>,
    pub signal_count: usize,
}

impl EnergyProfile {
    /// E at the given threshold, if it is one of the profile's thresholds.
    pub fn at(&self, threshold: f64) -> Option<f64> {
        self.thresholds
            .iter()
            .position(|t| *t == threshold)
            .map(|i| self.values[i])
    }

    /// CSV `threshold,E`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("threshold,E\n");
        for (t, e) in self.thresholds.iter().zip(&self.values) {
            let _ = writeln!(out, "{t:e},{e}");
        }
        out
    }
}

pub fn energy_concentration(spec: &NtkSpectrum, signals: &[Vec<f64>], thresholds: &[f64]) -> Result<EnergyProfile> {
    if signals.is_empty() {
        return Err(Error::Argument("no signals supplied".into()));
    }
    if thresholds.is_empty() {
        return Err(Error::Argument("no thresholds supplied".into()));
    }
    if let Some(t) = thresholds.iter().find(|t| !(**t > 0.0 && **t <= 1.0)) {
        return Err(Error::Argument(format!("threshold {t} outside (0, 1]")));
    }
    let top = spec.top_eigenvalue()?;
    let mut sorted = thresholds.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let counts: Vec<usize> = sorted
        .iter()
        .map(|t| spec.eig.eigenvalues.iter().take_while(|l| **l / top >= *t).count())
        .collect();

    let mut values = vec![0.0; sorted.len()];
    for (n, g) in signals.iter().enumerate() {
        spec.check_signal(g)?;
        let norm2 = dot(g, g);
        if norm2 == 0.0 {
            return Err(Error::Argument(format!("signal {n} has zero norm")));
        }
        let coeffs = signal_coefficients(spec, g)?;
        let mut prefix = Vec::with_capacity(coeffs.len() + 1);
        prefix.push(0.0);
        let mut acc = 0.0;
        for c in &coeffs {
            acc += c * c;
            prefix.push(acc);
        }
        for (v, &k) in values.iter_mut().zip(&counts) {
            *v += prefix[k] / norm2;
        }
    }
    let count = signals.len() as f64;
    values.iter_mut().for_each(|v| *v /= count);
    Ok(EnergyProfile {
        thresholds: sorted,
        values,
        signal_count: signals.len(),
    })
}

/// Σ ⟨φ_i, g⟩² / λ_i over eigenvalues above `cutoff · λ_0`.
pub fn kernel_norm(spec: &NtkSpectrum, g: &[f64], cutoff: f64) -> Result<f64> {
    if !(cutoff >= 0.0) {
        return Err(Error::Argument(format!("eigenvalue cutoff {cutoff} must be nonnegative")));
    }
    let top = spec.top_eigenvalue()?;
    let coeffs = signal_coefficients(spec, g)?;
    let kept: Vec<(f64, f64)> = spec
        .eig
        .eigenvalues
        .iter()
        .zip(&coeffs)
        .filter(|(l, _)| **l > cutoff * top)
        .map(|(l, c)| (*l, *c))
        .collect();
    if kept.is_empty() {
        return Err(Error::Numeric(format!("no eigenvalue exceeds the cutoff {cutoff:e}")));
    }
    Ok(kept.iter().map(|(l, c)| c * c / l).sum())
}

/// Min-max normalization to [0, 1]; near-constant vectors map to mid-gray.
pub fn normalize_for_display(v: &[f64]) -> Vec<f64> {
    let (lo, hi) = v
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(*x), hi.max(*x)));
    let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if !(hi - lo > 1e-12 * scale) {
        return vec![128.0 / 255.0; v.len()];
    }
    v.iter().map(|x| (x - lo) / (hi - lo)).collect()
}

/// Writes the top `k` eigenvectors as `eig_<i>.pgm` images plus
/// `eigenfunctions.csv` (`index,lambda,file`), returning every path written.
pub fn export_eigenfunctions(spec: &NtkSpectrum, k: usize, out_dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let (rows, cols) = spec
        .shape
        .ok_or_else(|| Error::Shape("eigenfunction export needs a 2D grid".into()))?;
    if k > spec.len() {
        return Err(Error::Argument(format!("{k} eigenfunctions requested from a grid of {}", spec.len())));
    }
    let dir = out_dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::with_capacity(k + 1);
    let mut index = String::from("index,lambda,file\n");
    for i in 0..k {
        let name = format!("eig_{i}.pgm");
        let path = dir.join(&name);
        save_pgm(&normalize_for_display(&spec.eigenvector(i)), rows, cols, &path)?;
        let _ = writeln!(index, "{i},{:e},{name}", spec.eig.eigenvalues[i]);
        written.push(path);
    }
    let path = dir.join("eigenfunctions.csv");
    std::fs::write(&path, index)?;
    written.push(path);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spectrum_of(matrix: Matrix) -> NtkSpectrum {
        let n = matrix.rows();
        let gram = GramMatrix {
            matrix,
            coords: Coords::line(n, n as f64),
            fingerprint: 0,
            shape: None,
        };
        ntk_eigs(&gram).unwrap()
    }

    #[test]
    fn rank_one_gram() {
        let v = [1.0, -2.0, 0.5, 3.0];
        let s = spectrum_of(Matrix::from_fn(4, 4, |i, j| v[i] * v[j]));
        let norm2 = dot(&v, &v);
        assert!((s.eigenvalues()[0] - norm2).abs() < 1e-12 * norm2);
        assert!(s.eigenvalues()[1..].iter().all(|l| l.abs() <= 1e-10 * norm2));
        // largest component of v is 3.0 > 0, so φ₀ = v/‖v‖
        let phi = s.eigenvector(0);
        for (a, b) in phi.iter().zip(&v) {
            assert!((a - b / norm2.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_gram_has_unit_spectrum() {
        let s = spectrum_of(Matrix::identity(5));
        assert!(s.eigenvalues().iter().all(|l| (l - 1.0).abs() < 1e-15));
    }

    #[test]
    fn coefficients_of_an_eigenvector() {
        let s = spectrum_of(Matrix::from_fn(3, 3, |i, j| if i == j { 3.0 - i as f64 } else { 0.1 }));
        let c = signal_coefficients(&s, &s.eigenvector(0)).unwrap();
        assert!((c[0] - 1.0).abs() < 1e-12 && c[1].abs() < 1e-12 && c[2].abs() < 1e-12);
        assert_eq!(signal_coefficients(&s, &[0.0; 3]).unwrap(), vec![0.0; 3]);
        assert!(signal_coefficients(&s, &[1.0; 2]).is_err());
    }

    #[test]
    fn kernel_norm_two_terms() {
        let s = spectrum_of(Matrix::from_fn(3, 3, |i, j| if i == j { [4.0, 2.0, 1.0][i] } else { 0.0 }));
        let (a, b) = (0.7, -1.3);
        let g: Vec<f64> = s.eigenvector(0).iter().zip(s.eigenvector(1)).map(|(x, y)| a * x + b * y).collect();
        let k = kernel_norm(&s, &g, DEFAULT_EIG_CUTOFF).unwrap();
        assert!((k - (a * a / 4.0 + b * b / 2.0)).abs() < 1e-12);
        assert!(kernel_norm(&s, &g, 2.0).is_err());
        assert!(kernel_norm(&s, &g, -1.0).is_err());
    }

    #[test]
    fn energy_of_leading_eigenvector_is_one() {
        let s = spectrum_of(Matrix::from_fn(4, 4, |i, j| if i == j { 4.0 - i as f64 } else { 0.2 }));
        let p = energy_concentration(&s, &[s.eigenvector(0)], &[1.0, 0.5, 1e-3]).unwrap();
        assert!(p.values.iter().all(|e| (e - 1.0).abs() < 1e-12));
        assert!(energy_concentration(&s, &[vec![0.0; 4]], &[0.5]).is_err());
        assert!(energy_concentration(&s, &[vec![1.0; 4]], &[0.0]).is_err());
        assert!(energy_concentration(&s, &[vec![1.0; 4]], &[1.5]).is_err());
    }

    #[test]
    fn memory_budget_is_enforced() {
        use crate::model::{build_model, Activation, LayerSpec, MappingSpec, MappingVariant};
        use crate::numkit::SeededRng;
        let model = build_model(
            MappingSpec::new(MappingVariant::SirenFirst { omega0: 30.0, width: 8 }, 2),
            vec![LayerSpec::new(8, Activation::Sine { omega0: 30.0 }), LayerSpec::output()],
            &mut SeededRng::new(0),
        )
        .unwrap();
        let coords = Coords::grid_2d(8, 8);
        assert!(matches!(
            gram_matrix_with_budget(&model, &coords, 16, 1000),
            Err(Error::Resource(_))
        ));
        assert!(gram_matrix_with_budget(&model, &coords, 16, 1 << 20).is_ok());
    }

    #[test]
    fn constant_vector_is_mid_gray() {
        assert_eq!(normalize_for_display(&[0.25; 4]), vec![128.0 / 255.0; 4]);
        assert_eq!(normalize_for_display(&[1.0, 3.0, 2.0]), vec![0.0, 1.0, 0.5]);
    }
}
