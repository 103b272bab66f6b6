//! Full-batch fitting of a model to sampled signal values.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Coords, InrModel, ParamVector};

/// Sampled signal with a train/test split.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub coords: Coords,
    pub targets: Vec<f64>,
    pub train_mask: Vec<bool>,
    pub metadata: String,
    /// `(rows, cols)` when the samples form a row-major image grid.
    pub shape: Option<(usize, usize)>,
}

impl Dataset {
    /// Dataset with every sample in the training split.
    pub fn new(coords: Coords, targets: Vec<f64>, metadata: impl Into<String>) -> Result<Self> {
        let mask = vec![true; targets.len()];
        Dataset::with_mask(coords, targets, mask, metadata)
    }

    pub fn with_mask(coords: Coords, targets: Vec<f64>, train_mask: Vec<bool>, metadata: impl Into<String>) -> Result<Self> {
        if targets.len() != coords.len() || train_mask.len() != coords.len() {
            return Err(Error::Dimension(format!(
                "{} coordinates, {} targets, {} mask entries",
                coords.len(),
                targets.len(),
                train_mask.len()
            )));
        }
        if targets.iter().any(|t| !t.is_finite()) {
            return Err(Error::Argument("targets must be finite".into()));
        }
        if !train_mask.iter().any(|&m| m) {
            return Err(Error::Argument("dataset has no training points".into()));
        }
        Ok(Dataset {
            coords,
            targets,
            train_mask,
            metadata: metadata.into(),
            shape: None,
        })
    }

    pub fn with_shape(mut self, rows: usize, cols: usize) -> Result<Self> {
        if rows * cols != self.len() {
            return Err(Error::Shape(format!("{rows}x{cols} grid for {} samples", self.len())));
        }
        self.shape = Some((rows, cols));
        Ok(self)
    }

    pub fn set_mask(&mut self, mask: Vec<bool>) -> Result<()> {
        if mask.len() != self.len() || !mask.iter().any(|&m| m) {
            return Err(Error::Argument("mask must match the dataset and select a point".into()));
        }
        self.train_mask = mask;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn train_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.train_mask[i]).collect()
    }

    pub fn test_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.train_mask[i]).collect()
    }

    pub fn subset(&self, indices: &[usize]) -> (Coords, Vec<f64>) {
        (self.coords.select(indices), indices.iter().map(|&i| self.targets[i]).collect())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Optimizer {
    Adam {
        lr: f64,
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_eps")]
        eps: f64,
    },
    Gd {
        lr: f64,
    },
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}

impl Optimizer {
    pub fn adam(lr: f64) -> Self {
        Optimizer::Adam {
            lr,
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
        }
    }

    pub fn gd(lr: f64) -> Self {
        Optimizer::Gd { lr }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Optimizer::Adam { lr, beta1, beta2, eps } => {
                lr > 0.0 && (0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && eps > 0.0
            }
            Optimizer::Gd { lr } => lr > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid optimizer settings {self:?}")))
        }
    }

    pub fn state(&self, n: usize) -> OptimizerState {
        match *self {
            Optimizer::Adam { .. } => OptimizerState {
                opt: *self,
                m: vec![0.0; n],
                v: vec![0.0; n],
                t: 0,
            },
            Optimizer::Gd { .. } => OptimizerState {
                opt: *self,
                m: Vec::new(),
                v: Vec::new(),
                t: 0,
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub optimizer: Optimizer,
    pub iterations: usize,
}

impl OptimizerConfig {
    pub fn new(optimizer: Optimizer, iterations: usize) -> Self {
        OptimizerConfig { optimizer, iterations }
    }
}

/// Moment estimates carried between steps.
#[derive(Clone, Debug)]
pub struct OptimizerState {
    opt: Optimizer,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u32,
}

impl OptimizerState {
    pub fn step(&mut self, theta: &mut [f64], grad: &[f64]) {
        match self.opt {
            Optimizer::Gd { lr } => {
                for (p, g) in theta.iter_mut().zip(grad) {
                    *p -= lr * g;
                }
            }
            Optimizer::Adam { lr, beta1, beta2, eps } => {
                self.t += 1;
                let c1 = 1.0 - beta1.powi(self.t as i32);
                let c2 = 1.0 - beta2.powi(self.t as i32);
                for (((p, g), m), v) in theta.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    let mhat = *m / c1;
                    let vhat = *v / c2;
                    *p -= lr * mhat / (vhat.sqrt() + eps);
                }
            }
        }
    }
}

pub const DIVERGENCE_LIMIT: f64 = 1e6;

pub(crate) fn check_divergence(iteration: usize, loss: f64) -> Result<()> {
    if !loss.is_finite() || loss > DIVERGENCE_LIMIT {
        Err(Error::Divergence { iteration, loss })
    } else {
        Ok(())
    }
}

/// Mean squared error over the points selected by `mask` (all when `None`).
pub fn mse_loss(pred: &[f64], target: &[f64], mask: Option<&[bool]>) -> Result<f64> {
    if pred.len() != target.len() || mask.is_some_and(|m| m.len() != pred.len()) {
        return Err(Error::Argument("prediction, target and mask lengths differ".into()));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in 0..pred.len() {
        if mask.is_none_or(|m| m[i]) {
            sum += (pred[i] - target[i]).powi(2);
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::Argument("mask selects no points".into()));
    }
    Ok(sum / count as f64)
}

/// 10·log10(peak²/mse); `+∞` when the error is zero.
pub fn psnr_from_mse(mse: f64, peak: f64) -> Result<f64> {
    if !(peak >= 0.0) {
        return Err(Error::Argument(format!("PSNR peak must be non-negative, got {peak}")));
    }
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

pub fn psnr(pred: &[f64], target: &[f64], peak: f64) -> Result<f64> {
    psnr_from_mse(mse_loss(pred, target, None)?, peak)
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    pub train_mse: Vec<f64>,
    pub train_psnr: Vec<f64>,
    /// NaN when the dataset has no test points.
    pub test_psnr: Vec<f64>,
    pub theta: ParamVector,
}

impl TrainReport {
    pub fn final_train_mse(&self) -> f64 {
        *self.train_mse.last().expect("trace includes iteration 0")
    }

    pub fn final_test_psnr(&self) -> f64 {
        *self.test_psnr.last().expect("trace includes iteration 0")
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("iter,train_mse,train_psnr,test_psnr\n");
        for i in 0..self.train_mse.len() {
            let _ = writeln!(out, "{i},{},{},{}", self.train_mse[i], self.train_psnr[i], self.test_psnr[i]);
        }
        out
    }
}

/// Train and test MSE of a parameter vector on a dataset (test is NaN when
/// there are no test points).
pub fn evaluate(model: &InrModel, theta: &[f64], data: &Dataset) -> Result<(f64, f64)> {
    let pred = model.forward_with(theta, &data.coords)?;
    let train = mse_loss(&pred, &data.targets, Some(&data.train_mask))?;
    let test_mask: Vec<bool> = data.train_mask.iter().map(|m| !m).collect();
    let test = mse_loss(&pred, &data.targets, Some(&test_mask)).unwrap_or(f64::NAN);
    Ok((train, test))
}

/// Runs `opt.iterations` full-batch steps on the training split, recording
/// metrics before each step and after the last.
pub fn train_full_batch(model: &InrModel, data: &Dataset, opt: &OptimizerConfig) -> Result<(InrModel, TrainReport)> {
    opt.optimizer.validate()?;
    if data.coords.dim() != model.input_dim() {
        return Err(Error::Argument(format!(
            "dataset coordinates have dimension {}, model expects {}",
            data.coords.dim(),
            model.input_dim()
        )));
    }
    let (train_coords, train_targets) = data.subset(&data.train_indices());
    let (test_coords, test_targets) = data.subset(&data.test_indices());
    let mut theta = model.theta().values().to_vec();
    let mut state = opt.optimizer.state(theta.len());
    let n = opt.iterations;
    let mut report = TrainReport {
        train_mse: Vec::with_capacity(n + 1),
        train_psnr: Vec::with_capacity(n + 1),
        test_psnr: Vec::with_capacity(n + 1),
        theta: model.theta().clone(),
    };
    for it in 0..=n {
        let (loss, grad) = model.mse_and_gradient(&theta, &train_coords, &train_targets)?;
        check_divergence(it, loss)?;
        report.train_mse.push(loss);
        report.train_psnr.push(psnr_from_mse(loss, 1.0)?);
        let test_psnr = if test_targets.is_empty() {
            f64::NAN
        } else {
            let pred = model.forward_with(&theta, &test_coords)?;
            psnr_from_mse(mse_loss(&pred, &test_targets, None)?, 1.0)?
        };
        report.test_psnr.push(test_psnr);
        if it < n {
            state.step(&mut theta, &grad);
        }
    }
    let trained = model.with_theta_values(theta)?;
    report.theta = trained.theta().clone();
    Ok((trained, report))
}

/// Central-difference gradient of the training-split MSE.
pub fn finite_diff_gradient(model: &InrModel, data: &Dataset, h: f64) -> Result<ParamVector> {
    if !(h > 0.0) {
        return Err(Error::Argument(format!("step must be positive, got {h}")));
    }
    let (coords, targets) = data.subset(&data.train_indices());
    let loss = |theta: &[f64]| -> Result<f64> {
        let pred = model.forward_with(theta, &coords)?;
        mse_loss(&pred, &targets, None)
    };
    let mut theta = model.theta().values().to_vec();
    let mut grad = vec![0.0; theta.len()];
    for k in 0..theta.len() {
        let orig = theta[k];
        theta[k] = orig + h;
        let up = loss(&theta)?;
        theta[k] = orig - h;
        let down = loss(&theta)?;
        theta[k] = orig;
        grad[k] = (up - down) / (2.0 * h);
    }
    model.theta().with_values(grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mse_cases() {
        assert_eq!(mse_loss(&[1.0, 2.0], &[1.0, 2.0], None).unwrap(), 0.0);
        assert_eq!(mse_loss(&[0.5, 1.5], &[0.0, 1.0], None).unwrap(), 0.25);
        assert!(mse_loss(&[1.0], &[1.0], Some(&[false])).is_err());
        assert_eq!(mse_loss(&[1.0, 5.0], &[0.0, 0.0], Some(&[true, false])).unwrap(), 1.0);
    }

    #[test]
    fn psnr_cases() {
        assert!((psnr_from_mse(0.25, 1.0).unwrap() - 6.020_599_913_279_624).abs() < 1e-12);
        assert!((psnr_from_mse(0.01, 1.0).unwrap() - 20.0).abs() < 1e-12);
        assert_eq!(psnr(&[0.3], &[0.3], 1.0).unwrap(), f64::INFINITY);
        assert!(psnr_from_mse(0.1, -1.0).is_err());
    }

    #[test]
    fn adam_first_steps_by_hand() {
        let mut theta = [1.0, -2.0];
        let mut st = Optimizer::adam(0.1).state(2);
        st.step(&mut theta, &[0.5, -4.0]);
        // bias-corrected m̂ = g, v̂ = g², step = lr·g/(|g| + eps)
        assert!((theta[0] - (1.0 - 0.1 * 0.5 / (0.5 + 1e-8))).abs() < 1e-12);
        assert!((theta[1] - (-2.0 + 0.1 * 4.0 / (4.0 + 1e-8))).abs() < 1e-12);
        let before = theta;
        st.step(&mut theta, &[1.0, 2.0]);
        let m0 = 0.9 * 0.1 * 0.5 + 0.1 * 1.0;
        let v0 = 0.999 * 0.001 * 0.25 + 0.001 * 1.0;
        let m1 = 0.9 * 0.1 * -4.0 + 0.1 * 2.0;
        let v1 = 0.999 * 0.001 * 16.0 + 0.001 * 4.0;
        let (c1, c2) = (1.0 - 0.81, 1.0 - 0.999f64.powi(2));
        let want0 = before[0] - 0.1 * (m0 / c1) / ((v0 / c2).sqrt() + 1e-8);
        let want1 = before[1] - 0.1 * (m1 / c1) / ((v1 / c2).sqrt() + 1e-8);
        assert!((theta[0] - want0).abs() < 1e-12);
        assert!((theta[1] - want1).abs() < 1e-12);
    }

    #[test]
    fn optimizer_validation() {
        assert!(Optimizer::gd(0.0).validate().is_err());
        assert!(Optimizer::Adam { lr: 1e-3, beta1: 1.0, beta2: 0.9, eps: 1e-8 }.validate().is_err());
        let parsed: Optimizer = serde_json::from_str(r#"{"kind":"adam","lr":0.0001}"#).unwrap();
        assert_eq!(parsed, Optimizer::adam(1e-4));
    }
}
