use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Scalar;
use crate::numkit::{Distribution, Matrix, SeededRng};

/// Input encodings. Every variant is evaluated as `sin(s·(A r + c))` for a
/// realized frequency matrix `A`, offset `c` and scale `s`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MappingVariant {
    /// `T` Gaussian frequency rows with entries N(0, σ²), each producing a
    /// `[sin, cos]` pair.
    FourierRandom { sigma: f64, rows: usize },
    /// Frequencies `π·2^l` along each axis for `l < levels`, as `[sin, cos]`
    /// pairs.
    FourierDeterministic { levels: usize },
    /// `[cos(2π f₀ r_d), sin(2π f₀ r_d)]` per coordinate axis.
    SingleFrequency { f0: f64 },
    /// First sine layer of a SIREN: `sin(ω₀ (W r + b))`.
    SirenFirst { omega0: f64, width: usize },
    /// Fixed `sin(Ω r + φ)`.
    Explicit { omega: Matrix, phase: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMapping", into = "RawMapping")]
pub struct MappingSpec {
    pub variant: MappingVariant,
    pub input_dim: usize,
    pub trainable: bool,
}

#[derive(Serialize, Deserialize)]
struct RawMapping {
    #[serde(flatten)]
    variant: MappingVariant,
    input_dim: usize,
    #[serde(default)]
    trainable: Option<bool>,
}

impl TryFrom<RawMapping> for MappingSpec {
    type Error = Error;

    fn try_from(raw: RawMapping) -> Result<Self> {
        let mut spec = MappingSpec::new(raw.variant, raw.input_dim);
        if let Some(t) = raw.trainable {
            spec.trainable = t;
        }
        spec.validate()?;
        Ok(spec)
    }
}

impl From<MappingSpec> for RawMapping {
    fn from(m: MappingSpec) -> Self {
        RawMapping {
            variant: m.variant,
            input_dim: m.input_dim,
            trainable: Some(m.trainable),
        }
    }
}

/// Realized `(A, c, s)` of a mapping; `a` is `features × input_dim`.
pub(crate) struct Realized<S> {
    pub a: Vec<S>,
    pub c: Vec<S>,
    pub scale: f64,
}

impl MappingSpec {
    /// Spec with the variant's default trainability (only `siren-first`
    /// trains by default).
    pub fn new(variant: MappingVariant, input_dim: usize) -> Self {
        let trainable = matches!(variant, MappingVariant::SirenFirst { .. });
        MappingSpec {
            variant,
            input_dim,
            trainable,
        }
    }

    pub fn with_trainable(mut self, trainable: bool) -> Self {
        self.trainable = trainable;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.input_dim;
        if d == 0 {
            return Err(Error::Config("mapping input_dim must be at least 1".into()));
        }
        match &self.variant {
            MappingVariant::FourierRandom { sigma, rows } => {
                if !(sigma.is_finite() && *sigma > 0.0) {
                    return Err(Error::Config(format!("fourier-random sigma must be > 0, got {sigma}")));
                }
                if *rows == 0 {
                    return Err(Error::Config("fourier-random needs at least one row".into()));
                }
            }
            MappingVariant::FourierDeterministic { levels } => {
                if *levels == 0 || *levels > 30 {
                    return Err(Error::Config(format!("fourier-deterministic levels must be in 1..=30, got {levels}")));
                }
            }
            MappingVariant::SingleFrequency { f0 } => {
                if !(f0.is_finite() && *f0 > 0.0) {
                    return Err(Error::Config(format!("single-frequency f0 must be > 0, got {f0}")));
                }
            }
            MappingVariant::SirenFirst { omega0, width } => {
                if !(omega0.is_finite() && *omega0 > 0.0) {
                    return Err(Error::Config(format!("siren-first omega0 must be > 0, got {omega0}")));
                }
                if *width == 0 {
                    return Err(Error::Config("siren-first width must be at least 1".into()));
                }
            }
            MappingVariant::Explicit { omega, phase } => {
                if omega.rows() == 0 || omega.cols() != d {
                    return Err(Error::Config(format!(
                        "explicit omega must be T x {d} with T >= 1, got {}x{}",
                        omega.rows(),
                        omega.cols()
                    )));
                }
                if phase.len() != omega.rows() {
                    return Err(Error::Config(format!(
                        "explicit phase has {} entries for {} frequency rows",
                        phase.len(),
                        omega.rows()
                    )));
                }
                if phase.iter().any(|p| !p.is_finite()) {
                    return Err(Error::Config("explicit phase must be finite".into()));
                }
            }
        }
        Ok(())
    }

    /// Width of γ(r).
    pub fn feature_count(&self) -> usize {
        let d = self.input_dim;
        match &self.variant {
            MappingVariant::FourierRandom { rows, .. } => 2 * rows,
            MappingVariant::FourierDeterministic { levels } => 2 * levels * d,
            MappingVariant::SingleFrequency { .. } => 2 * d,
            MappingVariant::SirenFirst { width, .. } => *width,
            MappingVariant::Explicit { omega, .. } => omega.rows(),
        }
    }

    /// Number of values that parameterize the mapping.
    pub fn param_count(&self) -> usize {
        let d = self.input_dim;
        match &self.variant {
            MappingVariant::FourierRandom { rows, .. } => rows * d,
            MappingVariant::FourierDeterministic { levels } => levels * d * d,
            MappingVariant::SingleFrequency { .. } => 1,
            MappingVariant::SirenFirst { width, .. } => width * d + width,
            MappingVariant::Explicit { omega, .. } => omega.rows() * d + omega.rows(),
        }
    }

    /// Named blocks `(name, rows, cols)` of the mapping parameters in order.
    pub(crate) fn blocks(&self) -> Vec<(String, usize, usize)> {
        let d = self.input_dim;
        match &self.variant {
            MappingVariant::FourierRandom { rows, .. } => vec![("mapping.omega".into(), *rows, d)],
            MappingVariant::FourierDeterministic { levels } => vec![("mapping.omega".into(), levels * d, d)],
            MappingVariant::SingleFrequency { .. } => vec![("mapping.f0".into(), 1, 1)],
            MappingVariant::SirenFirst { width, .. } => vec![
                ("mapping.weight".into(), *width, d),
                ("mapping.bias".into(), *width, 1),
            ],
            MappingVariant::Explicit { omega, .. } => vec![
                ("mapping.omega".into(), omega.rows(), d),
                ("mapping.phase".into(), omega.rows(), 1),
            ],
        }
    }

    /// Scale that multiplies `A r + c`; also the ω₀ seen by the next layer's
    /// initializer when the mapping is a SIREN layer.
    pub fn scale(&self) -> f64 {
        match &self.variant {
            MappingVariant::SirenFirst { omega0, .. } => *omega0,
            _ => 1.0,
        }
    }

    pub(crate) fn init_params(&self, rng: &mut SeededRng) -> Result<Vec<f64>> {
        let d = self.input_dim;
        Ok(match &self.variant {
            MappingVariant::FourierRandom { sigma, rows } => rng.draw(
                Distribution::Normal {
                    mean: 0.0,
                    std: *sigma,
                },
                rows * d,
            )?,
            MappingVariant::FourierDeterministic { levels } => {
                let mut omega = vec![0.0; levels * d * d];
                for l in 0..*levels {
                    for axis in 0..d {
                        omega[(l * d + axis) * d + axis] = PI * (1u64 << l) as f64;
                    }
                }
                omega
            }
            MappingVariant::SingleFrequency { f0 } => vec![*f0],
            MappingVariant::SirenFirst { width, .. } => {
                let bound = 1.0 / d as f64;
                let mut p = rng.draw(
                    Distribution::Uniform {
                        low: -bound,
                        high: bound,
                    },
                    width * d,
                )?;
                p.extend(std::iter::repeat_n(0.0, *width));
                p
            }
            MappingVariant::Explicit { omega, phase } => {
                let mut p = omega.data().to_vec();
                p.extend_from_slice(phase);
                p
            }
        })
    }

    pub(crate) fn realize<S: Scalar>(&self, p: &[S]) -> Realized<S> {
        let d = self.input_dim;
        let zero = S::zero();
        match &self.variant {
            MappingVariant::FourierRandom { .. } | MappingVariant::FourierDeterministic { .. } => {
                let rows = p.len() / d;
                let mut a = Vec::with_capacity(2 * rows * d);
                let mut c = Vec::with_capacity(2 * rows);
                for t in 0..rows {
                    let row = &p[t * d..(t + 1) * d];
                    a.extend_from_slice(row);
                    a.extend_from_slice(row);
                    c.push(zero);
                    c.push(S::from_f64(FRAC_PI_2));
                }
                Realized { a, c, scale: 1.0 }
            }
            MappingVariant::SingleFrequency { .. } => {
                let w = p[0].scale(2.0 * PI);
                let mut a = vec![zero; 2 * d * d];
                let mut c = Vec::with_capacity(2 * d);
                for axis in 0..d {
                    a[(2 * axis) * d + axis] = w;
                    a[(2 * axis + 1) * d + axis] = w;
                    c.push(S::from_f64(FRAC_PI_2));
                    c.push(zero);
                }
                Realized { a, c, scale: 1.0 }
            }
            MappingVariant::SirenFirst { omega0, width } => Realized {
                a: p[..width * d].to_vec(),
                c: p[width * d..].to_vec(),
                scale: *omega0,
            },
            MappingVariant::Explicit { omega, .. } => {
                let t = omega.rows();
                Realized {
                    a: p[..t * d].to_vec(),
                    c: p[t * d..].to_vec(),
                    scale: 1.0,
                }
            }
        }
    }

    /// Adds the gradient with respect to the mapping parameters given
    /// gradients with respect to the realized `A` and `c`.
    pub(crate) fn pullback<S: Scalar>(&self, da: &[S], dc: &[S], out: &mut [S]) {
        let d = self.input_dim;
        match &self.variant {
            MappingVariant::FourierRandom { .. } | MappingVariant::FourierDeterministic { .. } => {
                let rows = out.len() / d;
                for t in 0..rows {
                    for k in 0..d {
                        out[t * d + k] += da[(2 * t) * d + k] + da[(2 * t + 1) * d + k];
                    }
                }
            }
            MappingVariant::SingleFrequency { .. } => {
                let mut acc = S::zero();
                for axis in 0..d {
                    acc += da[(2 * axis) * d + axis] + da[(2 * axis + 1) * d + axis];
                }
                out[0] += acc.scale(2.0 * PI);
            }
            MappingVariant::SirenFirst { .. } | MappingVariant::Explicit { .. } => {
                let n = da.len();
                for (o, g) in out[..n].iter_mut().zip(da) {
                    *o += *g;
                }
                for (o, g) in out[n..].iter_mut().zip(dc) {
                    *o += *g;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts() {
        let m = MappingSpec::new(MappingVariant::FourierRandom { sigma: 10.0, rows: 256 }, 2);
        assert_eq!((m.feature_count(), m.param_count()), (512, 512));
        assert!(!m.trainable);
        let m = MappingSpec::new(MappingVariant::SirenFirst { omega0: 30.0, width: 64 }, 2);
        assert_eq!((m.feature_count(), m.param_count()), (64, 192));
        assert!(m.trainable);
        let m = MappingSpec::new(MappingVariant::SingleFrequency { f0: 0.5 }, 2);
        assert_eq!((m.feature_count(), m.param_count()), (4, 1));
    }

    #[test]
    fn invalid_specs() {
        let bad = [
            MappingVariant::FourierRandom { sigma: 0.0, rows: 4 },
            MappingVariant::SingleFrequency { f0: -1.0 },
            MappingVariant::SirenFirst { omega0: 30.0, width: 0 },
        ];
        for v in bad {
            assert!(matches!(MappingSpec::new(v, 2).validate(), Err(Error::Config(_))));
        }
        let explicit = MappingVariant::Explicit {
            omega: Matrix::zeros(2, 1),
            phase: vec![0.0],
        };
        assert!(MappingSpec::new(explicit, 1).validate().is_err());
    }

    #[test]
    fn json_defaults_trainability() {
        let m: MappingSpec =
            serde_json::from_str(r#"{"kind":"siren-first","omega0":30,"width":8,"input_dim":1}"#).unwrap();
        assert!(m.trainable);
        let m: MappingSpec = serde_json::from_str(
            r#"{"kind":"fourier-random","sigma":10,"rows":4,"input_dim":2,"trainable":true}"#,
        )
        .unwrap();
        assert!(m.trainable);
        let back: MappingSpec = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
        assert_eq!(back, m);
        assert!(serde_json::from_str::<MappingSpec>(r#"{"kind":"single-frequency","f0":0,"input_dim":1}"#).is_err());
    }
}
