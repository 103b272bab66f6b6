//! Frequency content reachable by sinusoidal-input networks: lattice
//! supports for polynomial activations and Bessel-series expansions of
//! small sine networks.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::fmt::Write as _;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{Activation, Coords, InrModel};
use crate::numkit::{bessel_j, lstsq, ComplexSpectrum, Matrix, BESSEL_MAX_ARGUMENT, BESSEL_MAX_ORDER};

pub const DEFAULT_DEDUP_TOL: f64 = 1e-9;
pub const DEFAULT_LATTICE_CAP: u64 = 10_000_000;

#[derive(Clone, Debug, PartialEq)]
pub struct HarmonicAtom {
    pub frequency: Vec<f64>,
    pub amplitude: f64,
    /// In [0, 2π).
    pub phase: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    Enumerated,
    BesselExpansion { truncation: usize },
}

/// Sum of sinusoids `Σ a·sin(⟨ω, r⟩ + φ)` with one atom per frequency.
#[derive(Clone, Debug, PartialEq)]
pub struct HarmonicSet {
    pub dim: usize,
    pub atoms: Vec<HarmonicAtom>,
    pub provenance: Provenance,
}

impl HarmonicSet {
    /// Builds a set from raw `(frequency, amplitude, phase)` terms, folding
    /// ω and −ω together and merging coinciding frequencies.
    pub fn from_terms(dim: usize, terms: Vec<(Vec<f64>, f64, f64)>, provenance: Provenance, tol: f64) -> Result<Self> {
        let mut phasors = Vec::with_capacity(terms.len());
        for (freq, amp, phase) in terms {
            if freq.len() != dim {
                return Err(Error::Dimension(format!("atom frequency of dimension {} in a {dim}-D set", freq.len())));
            }
            if !amp.is_finite() || !phase.is_finite() {
                return Err(Error::Numeric("non-finite atom".into()));
            }
            let (freq, flipped) = canonicalize(freq, tol);
            let c = Complex64::from_polar(amp, phase);
            phasors.push((freq, if flipped { -c.conj() } else { c }));
        }
        let merged = merge_by_frequency(phasors, tol, |a, b| *a += b);
        let mut atoms: Vec<HarmonicAtom> = merged
            .into_iter()
            .map(|(frequency, c)| {
                // a constant atom only carries a·sin(φ)
                let c = if frequency.iter().all(|f| *f == 0.0) { Complex64::new(0.0, c.im) } else { c };
                HarmonicAtom {
                    frequency,
                    amplitude: c.norm(),
                    phase: c.arg().rem_euclid(TAU),
                }
            })
            .collect();
        sort_atoms(&mut atoms);
        Ok(HarmonicSet { dim, atoms, provenance })
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// CSV `freq_0,…,freq_{D−1},amplitude,phase`.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for d in 0..self.dim {
            let _ = write!(out, "freq_{d},");
        }
        out.push_str("amplitude,phase\n");
        for atom in &self.atoms {
            for f in &atom.frequency {
                let _ = write!(out, "{f},");
            }
            let _ = writeln!(out, "{},{}", atom.amplitude, atom.phase);
        }
        out
    }
}

fn sort_atoms(atoms: &mut [HarmonicAtom]) {
    atoms.sort_by(|a, b| {
        b.amplitude
            .total_cmp(&a.amplitude)
            .then_with(|| lex_cmp(&a.frequency, &b.frequency))
    });
}

fn lex_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        let o = x.total_cmp(y);
        if o != std::cmp::Ordering::Equal {
            return o;
        }
    }
    std::cmp::Ordering::Equal
}

/// Flips `freq` so its first component larger than `tol` in magnitude is
/// positive; near-zero components are snapped to zero.
fn canonicalize(mut freq: Vec<f64>, tol: f64) -> (Vec<f64>, bool) {
    for f in freq.iter_mut() {
        if f.abs() <= tol {
            *f = 0.0;
        }
    }
    let flip = freq.iter().find(|f| **f != 0.0).is_some_and(|f| *f < 0.0);
    if flip {
        freq.iter_mut().for_each(|f| *f = -*f);
    }
    (freq, flip)
}

/// Sorts by frequency and merges entries whose frequencies lie within `tol`
/// (Euclidean) of an already kept one.
fn merge_by_frequency<T>(mut items: Vec<(Vec<f64>, T)>, tol: f64, mut merge: impl FnMut(&mut T, T)) -> Vec<(Vec<f64>, T)> {
    items.sort_by(|a, b| lex_cmp(&a.0, &b.0));
    let mut kept: Vec<(Vec<f64>, T)> = Vec::with_capacity(items.len());
    for (freq, value) in items {
        let mut target = None;
        for (j, (k, _)) in kept.iter().enumerate().rev() {
            if k[0] < freq[0] - tol {
                break;
            }
            let dist2: f64 = k.iter().zip(&freq).map(|(a, b)| (a - b).powi(2)).sum();
            if dist2 <= tol * tol {
                target = Some(j);
                break;
            }
        }
        match target {
            Some(j) => merge(&mut kept[j].1, value),
            None => kept.push((freq, value)),
        }
    }
    kept
}

/// Polynomial degree `k` and layer count `l` of a network; the reachable
/// integer combinations have `Σ|s_t| ≤ k^(l−1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SupportBudget {
    pub k: u32,
    pub l: u32,
}

impl SupportBudget {
    pub fn new(k: u32, l: u32) -> Result<Self> {
        if k < 1 || l < 2 {
            return Err(Error::Argument(format!("support budget needs K >= 1 and L >= 2, got K={k}, L={l}")));
        }
        let b = SupportBudget { k, l };
        b.budget()?;
        Ok(b)
    }

    pub fn budget(&self) -> Result<u64> {
        (self.k as u64)
            .checked_pow(self.l - 1)
            .ok_or_else(|| Error::Resource(format!("K^(L-1) overflows for K={}, L={}", self.k, self.l)))
    }
}

/// Number of integer vectors in `T` dimensions with L1 norm at most `b`,
/// saturating at `u64::MAX`.
pub fn lattice_size(t: usize, b: u64) -> u64 {
    // ways[j] = number of points with norm exactly j
    let b = b.min(u32::MAX as u64) as usize;
    let mut ways = vec![0u128; b + 1];
    ways[0] = 1;
    for _ in 0..t {
        let mut next = vec![0u128; b + 1];
        for (j, &w) in ways.iter().enumerate() {
            if w == 0 {
                continue;
            }
            next[j] = next[j].saturating_add(w);
            for s in 1..=(b - j) {
                next[j + s] = next[j + s].saturating_add(2 * w);
            }
        }
        ways = next;
    }
    ways.iter().fold(0u128, |a, &w| a.saturating_add(w)).min(u64::MAX as u128) as u64
}

pub fn harmonic_support(omega: &Matrix, budget: SupportBudget, dedup_tol: f64) -> Result<Vec<Vec<f64>>> {
    harmonic_support_with_cap(omega, budget, dedup_tol, DEFAULT_LATTICE_CAP)
}

/// All distinct `Σ s_t Ω_t` over integer `s` with `Σ|s_t| ≤ budget`, each
/// with a non-negative leading component, in lexicographic order.
pub fn harmonic_support_with_cap(omega: &Matrix, budget: SupportBudget, dedup_tol: f64, cap: u64) -> Result<Vec<Vec<f64>>> {
    if !(dedup_tol >= 0.0) {
        return Err(Error::Argument("dedup tolerance must be non-negative".into()));
    }
    let (t, d) = (omega.rows(), omega.cols());
    if t == 0 || d == 0 {
        return Err(Error::Argument("frequency matrix is empty".into()));
    }
    let b = budget.budget()?;
    let size = lattice_size(t, b);
    if size > cap {
        return Err(Error::Resource(format!(
            "lattice has {size} points (cap {cap}); lower K or L"
        )));
    }
    let mut points = Vec::with_capacity(size as usize);
    let mut acc = vec![0.0; d];
    enumerate(omega, 0, b as i64, &mut acc, &mut |f| {
        let (c, _) = canonicalize(f.to_vec(), dedup_tol);
        points.push((c, ()));
    });
    Ok(merge_by_frequency(points, dedup_tol, |_, _| ()).into_iter().map(|(f, _)| f).collect())
}

fn enumerate(omega: &Matrix, t: usize, remaining: i64, acc: &mut Vec<f64>, emit: &mut impl FnMut(&[f64])) {
    if t == omega.rows() {
        emit(acc);
        return;
    }
    let row = omega.row(t).to_vec();
    for s in -remaining..=remaining {
        for (a, w) in acc.iter_mut().zip(&row) {
            *a += s as f64 * w;
        }
        enumerate(omega, t + 1, remaining - s.abs(), acc, emit);
        for (a, w) in acc.iter_mut().zip(&row) {
            *a -= s as f64 * w;
        }
    }
}

/// DFT bins touched by 1-D support frequencies on an `n`-point periodic grid
/// spanning `period` units. Frequencies must fall on integer bins.
pub fn support_bins_1d(support: &[Vec<f64>], n: usize, period: f64) -> Result<Vec<usize>> {
    let mut bins = Vec::with_capacity(2 * support.len());
    for f in support {
        if f.len() != 1 {
            return Err(Error::Dimension("expected 1-D frequencies".into()));
        }
        let k = f[0] * period / TAU;
        let kr = k.round();
        if (k - kr).abs() > 1e-6 {
            return Err(Error::Argument(format!("frequency {} is not on a DFT bin", f[0])));
        }
        let k = (kr as i64).rem_euclid(n as i64) as usize;
        bins.push(k);
        bins.push((n - k) % n);
    }
    bins.sort_unstable();
    bins.dedup();
    Ok(bins)
}

/// Parameters of a network shaped `γ → sine layer → linear output`, with
/// the mapping realized as `sin(Ω r + φ)`.
struct SmallSiren {
    omega: Vec<Vec<f64>>,
    phi: Vec<f64>,
    beta: Vec<Vec<f64>>,
    bias_phase: Vec<f64>,
    w_out: Vec<f64>,
    b_out: f64,
}

fn small_siren(model: &InrModel) -> Result<SmallSiren> {
    let layers = model.layers();
    if layers.len() != 2 {
        return Err(Error::Shape(format!(
            "Bessel expansion needs one hidden sine layer, model has {} hidden layers",
            layers.len() - 1
        )));
    }
    let omega0 = match layers[0].activation {
        Activation::Sine { omega0 } => omega0,
        _ => return Err(Error::Shape("hidden layer must use a sine activation".into())),
    };
    let (om, ph) = model.realized_mapping();
    let d = model.input_dim();
    let t = ph.len();
    let f = layers[0].width;
    let theta = model.theta();
    let w1 = theta.block("layer0.weight").expect("layer0 weight");
    let b1 = theta.block("layer0.bias").expect("layer0 bias");
    let w2 = theta.block("layer1.weight").expect("layer1 weight");
    let b2 = theta.block("layer1.bias").expect("layer1 bias");
    Ok(SmallSiren {
        omega: (0..t).map(|k| om[k * d..(k + 1) * d].to_vec()).collect(),
        phi: ph,
        beta: (0..f).map(|m| w1[m * t..(m + 1) * t].iter().map(|w| omega0 * w).collect()).collect(),
        bias_phase: b1.iter().map(|b| omega0 * b).collect(),
        w_out: w2.to_vec(),
        b_out: b2[0],
    })
}

/// Truncation order large enough for the hidden weights of `model`.
pub fn default_truncation(model: &InrModel) -> Result<usize> {
    let s = small_siren(model)?;
    let max_beta = s.beta.iter().flatten().fold(0.0f64, |m, b| m.max(b.abs()));
    Ok(8usize.max((2.0 * max_beta).ceil() as usize + 6))
}

/// Exact sinusoidal expansion of a one-hidden-layer sine network via the
/// Jacobi–Anger identity, truncated at `|s_t| ≤ truncation`.
pub fn siren_bessel_expansion(model: &InrModel, truncation: usize) -> Result<HarmonicSet> {
    let net = small_siren(model)?;
    if truncation > BESSEL_MAX_ORDER as usize {
        return Err(Error::Domain(format!(
            "truncation {truncation} exceeds the supported Bessel order {BESSEL_MAX_ORDER}"
        )));
    }
    if let Some(b) = net.beta.iter().flatten().find(|b| b.abs() > BESSEL_MAX_ARGUMENT) {
        return Err(Error::Domain(format!("effective weight {b} outside the Bessel argument range")));
    }
    let t = net.phi.len();
    let d = model.input_dim();
    let s_max = truncation as i32;
    let width = 2 * truncation + 1;
    let combos = (width as u64).checked_pow(t as u32).unwrap_or(u64::MAX);
    if combos.saturating_mul(net.w_out.len() as u64) > DEFAULT_LATTICE_CAP {
        return Err(Error::Resource(format!(
            "{combos} index combinations per unit; lower the truncation"
        )));
    }

    let mut terms = Vec::new();
    for (m, betas) in net.beta.iter().enumerate() {
        // J_s(β_mt) for s in [−S, S]
        let table: Vec<Vec<f64>> = betas
            .iter()
            .map(|&b| (-s_max..=s_max).map(|s| bessel_j(s, b)).collect::<Result<Vec<_>>>())
            .collect::<Result<_>>()?;
        let mut idx = vec![0usize; t];
        loop {
            let mut amp = net.w_out[m];
            let mut freq = vec![0.0; d];
            let mut phase = net.bias_phase[m];
            for (k, &i) in idx.iter().enumerate() {
                let s = i as f64 - truncation as f64;
                amp *= table[k][i];
                phase += s * net.phi[k];
                for (f, w) in freq.iter_mut().zip(&net.omega[k]) {
                    *f += s * w;
                }
            }
            terms.push((freq, amp, phase));
            // odometer increment
            let mut k = 0;
            while k < t {
                idx[k] += 1;
                if idx[k] < width {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
            if k == t {
                break;
            }
        }
    }
    terms.push((vec![0.0; d], net.b_out, FRAC_PI_2));
    HarmonicSet::from_terms(d, terms, Provenance::BesselExpansion { truncation }, DEFAULT_DEDUP_TOL)
}

/// `Σ a·sin(⟨ω, r⟩ + φ)` at every coordinate.
pub fn evaluate_harmonic_set(set: &HarmonicSet, coords: &Coords) -> Result<Vec<f64>> {
    if coords.dim() != set.dim {
        return Err(Error::Argument(format!(
            "coordinates have dimension {}, set has {}",
            coords.dim(),
            set.dim
        )));
    }
    Ok((0..coords.len())
        .map(|i| {
            let r = coords.point(i);
            set.atoms
                .iter()
                .map(|a| {
                    let arg: f64 = a.frequency.iter().zip(r).map(|(w, x)| w * x).sum();
                    a.amplitude * (arg + a.phase).sin()
                })
                .sum()
        })
        .collect())
}

/// Least-squares polynomial `Σ α_k x^k` (k ≤ degree) fitted to an activation
/// on `grid_n` uniform samples of `[a, b]`.
pub fn fit_polynomial_activation(activation: &Activation, degree: usize, a: f64, b: f64, grid_n: usize) -> Result<Vec<f64>> {
    if !(a < b) || !a.is_finite() || !b.is_finite() {
        return Err(Error::Argument(format!("fit interval [{a}, {b}] is empty")));
    }
    if grid_n < degree + 1 {
        return Err(Error::Fit(format!(
            "{grid_n} grid points cannot determine a degree-{degree} polynomial"
        )));
    }
    let xs: Vec<f64> = if grid_n == 1 {
        vec![a]
    } else {
        (0..grid_n).map(|i| a + (b - a) * i as f64 / (grid_n - 1) as f64).collect()
    };
    let design = Matrix::from_fn(grid_n, degree + 1, |i, k| xs[i].powi(k as i32));
    let ys: Vec<f64> = xs.iter().map(|&x| activation.eval(x)).collect();
    lstsq(&design, &ys)
}

/// Fraction of spectral energy outside `support_bins` (0 for an all-zero
/// spectrum). Bins index the flattened spectrum.
pub fn off_support_energy(spectrum: &ComplexSpectrum, support_bins: &[usize]) -> Result<f64> {
    let n = spectrum.len();
    let mut on = vec![false; n];
    for &b in support_bins {
        if b >= n {
            return Err(Error::Argument(format!("support bin {b} outside a spectrum of {n} bins")));
        }
        on[b] = true;
    }
    let mut total = 0.0;
    let mut off = 0.0;
    for (c, &inside) in spectrum.bins.iter().zip(&on) {
        let e = c.norm_sqr();
        total += e;
        if !inside {
            off += e;
        }
    }
    Ok(if total == 0.0 { 0.0 } else { off / total })
}

/// Atoms of a pointwise product of two sets: sin·sin expands onto sums and
/// differences of the frequencies.
pub fn product_set(a: &HarmonicSet, b: &HarmonicSet) -> Result<HarmonicSet> {
    if a.dim != b.dim {
        return Err(Error::Dimension("harmonic sets of different dimension".into()));
    }
    let mut terms = Vec::with_capacity(2 * a.len() * b.len());
    for x in &a.atoms {
        for y in &b.atoms {
            // sin(u)sin(v) = ½cos(u−v) − ½cos(u+v), cos(z) = sin(z + π/2)
            let amp = 0.5 * x.amplitude * y.amplitude;
            let diff: Vec<f64> = x.frequency.iter().zip(&y.frequency).map(|(p, q)| p - q).collect();
            let sum: Vec<f64> = x.frequency.iter().zip(&y.frequency).map(|(p, q)| p + q).collect();
            terms.push((diff, amp, x.phase - y.phase + FRAC_PI_2));
            terms.push((sum, amp, x.phase + y.phase + FRAC_PI_2 + PI));
        }
    }
    HarmonicSet::from_terms(a.dim, terms, Provenance::Enumerated, DEFAULT_DEDUP_TOL)
}
