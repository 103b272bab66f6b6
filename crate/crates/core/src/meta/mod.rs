//! Meta-learned initializations: MAML, Reptile, single-task pretraining and
//! fine-tune evaluation.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Coords, InrModel};
use crate::numkit::SeededRng;
use crate::train::{check_divergence, psnr_from_mse, train_full_batch, Dataset, Optimizer, OptimizerConfig};

/// Signals sharing one coordinate grid.
#[derive(Clone, Debug)]
pub struct TaskSet {
    pub tasks: Vec<Dataset>,
    pub generator: String,
}

impl TaskSet {
    pub fn new(tasks: Vec<Dataset>, generator: impl Into<String>) -> Result<Self> {
        let first = tasks.first().ok_or_else(|| Error::Argument("task set is empty".into()))?;
        if let Some(i) = tasks.iter().position(|t| t.coords != first.coords) {
            return Err(Error::Validation(format!("task {i} uses a different coordinate grid")));
        }
        Ok(TaskSet {
            tasks,
            generator: generator.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    /// Splits off the last `count` tasks.
    pub fn split_off(mut self, count: usize) -> Result<(TaskSet, TaskSet)> {
        if count == 0 || count >= self.tasks.len() {
            return Err(Error::Argument(format!("cannot hold out {count} of {} tasks", self.tasks.len())));
        }
        let held = self.tasks.split_off(self.tasks.len() - count);
        let generator = self.generator.clone();
        Ok((self, TaskSet { tasks: held, generator }))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetaAlgorithm {
    Maml,
    Reptile,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetaConfig {
    pub algorithm: MetaAlgorithm,
    pub inner_lr: f64,
    pub inner_steps: usize,
    pub outer_lr: f64,
    pub outer_iterations: usize,
    pub tasks_per_outer_step: usize,
    pub seed: u64,
    /// Drops the second-order terms of the MAML gradient.
    #[serde(default)]
    pub first_order: bool,
}

impl MetaConfig {
    pub fn maml() -> Self {
        MetaConfig {
            algorithm: MetaAlgorithm::Maml,
            inner_lr: 1e-2,
            inner_steps: 2,
            outer_lr: 1e-5,
            outer_iterations: 500,
            tasks_per_outer_step: 4,
            seed: 0,
            first_order: false,
        }
    }

    pub fn reptile() -> Self {
        MetaConfig {
            algorithm: MetaAlgorithm::Reptile,
            inner_lr: 1e-2,
            inner_steps: 5,
            outer_lr: 0.1,
            outer_iterations: 500,
            tasks_per_outer_step: 1,
            seed: 0,
            first_order: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.inner_lr >= 0.0 && self.inner_lr.is_finite()) {
            return Err(Error::Config(format!("inner_lr must be nonnegative, got {}", self.inner_lr)));
        }
        if !(self.outer_lr > 0.0 && self.outer_lr.is_finite()) {
            return Err(Error::Config(format!("outer_lr must be positive, got {}", self.outer_lr)));
        }
        if self.tasks_per_outer_step == 0 {
            return Err(Error::Config("tasks_per_outer_step must be at least 1".into()));
        }
        Ok(())
    }
}

/// Per-task losses a meta-learner can differentiate.
pub trait MetaObjective: Sync {
    fn task_count(&self) -> usize;
    fn loss(&self, task: usize, theta: &[f64]) -> Result<f64>;
    fn loss_gradient(&self, task: usize, theta: &[f64]) -> Result<(f64, Vec<f64>)>;
    /// Gradient and Hessian-vector product `H(θ) v`.
    fn gradient_hvp(&self, task: usize, theta: &[f64], v: &[f64]) -> Result<(Vec<f64>, Vec<f64>)>;
}

/// Training-split MSE of one model on every task.
pub struct InrObjective<'a> {
    model: &'a InrModel,
    splits: Vec<(Coords, Vec<f64>)>,
}

impl<'a> InrObjective<'a> {
    pub fn new(model: &'a InrModel, tasks: &TaskSet) -> Result<Self> {
        if let Some(t) = tasks.tasks.first() {
            if t.coords.dim() != model.input_dim() {
                return Err(Error::Argument(format!(
                    "tasks have dimension {}, model expects {}",
                    t.coords.dim(),
                    model.input_dim()
                )));
            }
        }
        let splits = tasks.tasks.iter().map(|t| t.subset(&t.train_indices())).collect();
        Ok(InrObjective { model, splits })
    }
}

impl MetaObjective for InrObjective<'_> {
    fn task_count(&self) -> usize {
        self.splits.len()
    }

    fn loss(&self, task: usize, theta: &[f64]) -> Result<f64> {
        let (coords, targets) = &self.splits[task];
        let pred = self.model.forward_with(theta, coords)?;
        crate::train::mse_loss(&pred, targets, None)
    }

    fn loss_gradient(&self, task: usize, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (coords, targets) = &self.splits[task];
        self.model.mse_and_gradient(theta, coords, targets)
    }

    fn gradient_hvp(&self, task: usize, theta: &[f64], v: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let (coords, targets) = &self.splits[task];
        Ok(self.model.mse_gradient_hvp(theta, v, coords, targets))
    }
}

/// `steps` gradient-descent iterates starting from (and including) `theta`.
pub fn adapt(obj: &dyn MetaObjective, task: usize, theta: &[f64], lr: f64, steps: usize) -> Result<Vec<Vec<f64>>> {
    let mut path = Vec::with_capacity(steps + 1);
    path.push(theta.to_vec());
    for _ in 0..steps {
        let cur = path.last().expect("path starts with theta");
        let (_, g) = obj.loss_gradient(task, cur)?;
        let next = cur.iter().zip(&g).map(|(t, g)| t - lr * g).collect();
        path.push(next);
    }
    Ok(path)
}

/// Post-adaptation loss and its gradient with respect to the starting point,
/// differentiating through every inner step unless `first_order` is set.
pub fn meta_gradient(
    obj: &dyn MetaObjective,
    task: usize,
    theta: &[f64],
    inner_lr: f64,
    inner_steps: usize,
    first_order: bool,
) -> Result<(f64, Vec<f64>)> {
    let path = adapt(obj, task, theta, inner_lr, inner_steps)?;
    let (loss, mut g) = obj.loss_gradient(task, path.last().expect("nonempty path"))?;
    if !first_order {
        for point in path[..inner_steps].iter().rev() {
            let (_, hv) = obj.gradient_hvp(task, point, &g)?;
            g.iter_mut().zip(&hv).for_each(|(a, h)| *a -= inner_lr * h);
        }
    }
    Ok((loss, g))
}

fn sample_tasks(rng: &mut SeededRng, n: usize, k: usize) -> Result<Vec<usize>> {
    rng.sample_indices(n, k.min(n))
}

/// Outer-loop result: meta parameters and the mean post-adaptation loss of
/// each outer iteration.
#[derive(Clone, Debug)]
pub struct MetaTrace {
    pub theta: Vec<f64>,
    pub mean_post_adaptation_mse: Vec<f64>,
}

impl MetaTrace {
    /// CSV `outer_iter,mean_post_adaptation_mse`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("outer_iter,mean_post_adaptation_mse\n");
        for (i, l) in self.mean_post_adaptation_mse.iter().enumerate() {
            let _ = writeln!(out, "{i},{l}");
        }
        out
    }
}

fn check_objective(obj: &dyn MetaObjective, cfg: &MetaConfig) -> Result<()> {
    cfg.validate()?;
    if obj.task_count() == 0 {
        return Err(Error::Argument("task set is empty".into()));
    }
    Ok(())
}

/// MAML with an Adam outer optimizer on any objective.
pub fn maml_on(obj: &dyn MetaObjective, theta: &[f64], cfg: &MetaConfig) -> Result<MetaTrace> {
    check_objective(obj, cfg)?;
    let mut rng = SeededRng::new(cfg.seed);
    let mut theta = theta.to_vec();
    let mut adam = Optimizer::adam(cfg.outer_lr).state(theta.len());
    let mut trace = Vec::with_capacity(cfg.outer_iterations);
    for it in 0..cfg.outer_iterations {
        let picked = sample_tasks(&mut rng, obj.task_count(), cfg.tasks_per_outer_step)?;
        let results = picked
            .par_iter()
            .map(|&t| meta_gradient(obj, t, &theta, cfg.inner_lr, cfg.inner_steps, cfg.first_order))
            .collect::<Result<Vec<_>>>()?;
        let count = results.len() as f64;
        let mut grad = vec![0.0; theta.len()];
        let mut loss = 0.0;
        for (l, g) in &results {
            loss += l;
            grad.iter_mut().zip(g).for_each(|(a, b)| *a += b);
        }
        loss /= count;
        grad.iter_mut().for_each(|g| *g /= count);
        check_divergence(it, loss)?;
        trace.push(loss);
        adam.step(&mut theta, &grad);
    }
    Ok(MetaTrace {
        theta,
        mean_post_adaptation_mse: trace,
    })
}

/// Reptile: move toward the mean of the adapted parameters by `outer_lr`.
pub fn reptile_on(obj: &dyn MetaObjective, theta: &[f64], cfg: &MetaConfig) -> Result<MetaTrace> {
    check_objective(obj, cfg)?;
    let mut rng = SeededRng::new(cfg.seed);
    let mut theta = theta.to_vec();
    let mut trace = Vec::with_capacity(cfg.outer_iterations);
    for it in 0..cfg.outer_iterations {
        let picked = sample_tasks(&mut rng, obj.task_count(), cfg.tasks_per_outer_step)?;
        let results = picked
            .par_iter()
            .map(|&t| {
                let adapted = adapt(obj, t, &theta, cfg.inner_lr, cfg.inner_steps)?.pop().expect("nonempty path");
                let loss = obj.loss(t, &adapted)?;
                Ok((loss, adapted))
            })
            .collect::<Result<Vec<_>>>()?;
        let count = results.len() as f64;
        let mut delta = vec![0.0; theta.len()];
        let mut loss = 0.0;
        for (l, adapted) in &results {
            loss += l;
            for ((d, a), t) in delta.iter_mut().zip(adapted).zip(&theta) {
                *d += a - t;
            }
        }
        loss /= count;
        check_divergence(it, loss)?;
        trace.push(loss);
        for (t, d) in theta.iter_mut().zip(&delta) {
            *t += cfg.outer_lr * (d / count);
        }
    }
    Ok(MetaTrace {
        theta,
        mean_post_adaptation_mse: trace,
    })
}

pub fn maml_train(model: &InrModel, tasks: &TaskSet, cfg: &MetaConfig) -> Result<(InrModel, MetaTrace)> {
    let obj = InrObjective::new(model, tasks)?;
    let trace = maml_on(&obj, model.theta().values(), cfg)?;
    Ok((model.with_theta_values(trace.theta.clone())?, trace))
}

pub fn reptile_train(model: &InrModel, tasks: &TaskSet, cfg: &MetaConfig) -> Result<(InrModel, MetaTrace)> {
    let obj = InrObjective::new(model, tasks)?;
    let trace = reptile_on(&obj, model.theta().values(), cfg)?;
    Ok((model.with_theta_values(trace.theta.clone())?, trace))
}

/// Runs the algorithm named in `cfg`.
pub fn meta_train(model: &InrModel, tasks: &TaskSet, cfg: &MetaConfig) -> Result<(InrModel, MetaTrace)> {
    match cfg.algorithm {
        MetaAlgorithm::Maml => maml_train(model, tasks, cfg),
        MetaAlgorithm::Reptile => reptile_train(model, tasks, cfg),
    }
}

pub const PRETRAIN_LR: f64 = 1e-4;

/// Fits one task with Adam at [`PRETRAIN_LR`] to serve as an initialization.
pub fn pretrain_single_task(model: &InrModel, task: &Dataset, iterations: usize) -> Result<InrModel> {
    let (trained, _) = train_full_batch(model, task, &OptimizerConfig::new(Optimizer::adam(PRETRAIN_LR), iterations))?;
    Ok(trained)
}

/// Mean PSNR over tasks at every fine-tuning step (index 0 is the raw
/// initialization).
#[derive(Clone, Debug, PartialEq)]
pub struct FinetuneCurve {
    pub train_psnr: Vec<f64>,
    pub test_psnr: Vec<f64>,
}

impl FinetuneCurve {
    /// CSV `step,train_psnr,test_psnr`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,train_psnr,test_psnr\n");
        for (i, (a, b)) in self.train_psnr.iter().zip(&self.test_psnr).enumerate() {
            let _ = writeln!(out, "{i},{a},{b}");
        }
        out
    }

    pub fn final_test_psnr(&self) -> f64 {
        *self.test_psnr.last().expect("curve includes step 0")
    }
}

pub fn finetune_eval(init: &InrModel, tasks: &TaskSet, steps: usize, opt: &Optimizer) -> Result<FinetuneCurve> {
    if tasks.is_empty() {
        return Err(Error::Argument("task set is empty".into()));
    }
    let cfg = OptimizerConfig::new(*opt, steps);
    let reports = tasks
        .tasks
        .par_iter()
        .map(|t| train_full_batch(init, t, &cfg).map(|(_, r)| r))
        .collect::<Result<Vec<_>>>()?;
    let count = reports.len() as f64;
    let mut curve = FinetuneCurve {
        train_psnr: vec![0.0; steps + 1],
        test_psnr: vec![0.0; steps + 1],
    };
    for r in &reports {
        for s in 0..=steps {
            curve.train_psnr[s] += psnr_from_mse(r.train_mse[s], 1.0)? / count;
            curve.test_psnr[s] += r.test_psnr[s] / count;
        }
    }
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// loss_i(θ) = Σ_k (θ_k − c_i)²
    pub(crate) struct Quadratic(pub Vec<f64>);

    impl MetaObjective for Quadratic {
        fn task_count(&self) -> usize {
            self.0.len()
        }
        fn loss(&self, task: usize, theta: &[f64]) -> Result<f64> {
            Ok(theta.iter().map(|t| (t - self.0[task]).powi(2)).sum())
        }
        fn loss_gradient(&self, task: usize, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
            Ok((self.loss(task, theta)?, theta.iter().map(|t| 2.0 * (t - self.0[task])).collect()))
        }
        fn gradient_hvp(&self, task: usize, theta: &[f64], v: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
            Ok((self.loss_gradient(task, theta)?.1, v.iter().map(|x| 2.0 * x).collect()))
        }
    }

    #[test]
    fn quadratic_meta_gradient_by_hand() {
        // θ' = (1 − 2η)θ + 2ηc, so d/dθ (θ' − c)² = 2(1 − 2η)²(θ − c)
        let obj = Quadratic(vec![1.0, -1.0]);
        let eta = 0.1;
        for (task, c) in [(0, 1.0), (1, -1.0)] {
            let (loss, g) = meta_gradient(&obj, task, &[0.0], eta, 1, false).unwrap();
            assert!((g[0] - 2.0 * 0.64 * (0.0 - c)).abs() < 1e-15);
            assert!((loss - 0.64).abs() < 1e-15);
            let (_, fo) = meta_gradient(&obj, task, &[0.0], eta, 1, true).unwrap();
            assert!((fo[0] - 2.0 * 0.8 * (0.0 - c)).abs() < 1e-15);
        }
    }

    #[test]
    fn reptile_symmetric_tasks_converge_to_midpoint() {
        let obj = Quadratic(vec![1.0, -1.0]);
        let cfg = MetaConfig {
            inner_lr: 0.1,
            outer_iterations: 200,
            seed: 3,
            ..MetaConfig::reptile()
        };
        let trace = reptile_on(&obj, &[0.8], &cfg).unwrap();
        assert!(trace.theta[0].abs() <= 0.05, "θ = {}", trace.theta[0]);
    }

    #[test]
    fn reptile_without_inner_steps_is_frozen() {
        let obj = Quadratic(vec![1.0, -1.0]);
        let cfg = MetaConfig {
            inner_steps: 0,
            outer_iterations: 10,
            ..MetaConfig::reptile()
        };
        assert_eq!(reptile_on(&obj, &[0.3, -0.2], &cfg).unwrap().theta, vec![0.3, -0.2]);
    }

    #[test]
    fn config_validation() {
        let bad = MetaConfig {
            inner_lr: -1.0,
            ..MetaConfig::maml()
        };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        let bad = MetaConfig {
            outer_lr: 0.0,
            ..MetaConfig::maml()
        };
        assert!(bad.validate().is_err());
        let json = r#"{"algorithm":"maml","inner_lr":0.01,"inner_steps":2,"outer_lr":1e-5,"outer_iterations":5,"tasks_per_outer_step":2,"seed":1,"extra":0}"#;
        assert!(serde_json::from_str::<MetaConfig>(json).is_err());
    }
}
