use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harmonics::{default_truncation, evaluate_harmonic_set, harmonic_support, siren_bessel_expansion, SupportBudget, DEFAULT_DEDUP_TOL};
use crate::lab::config::{check_paths, data_paths, model_paths, parse_json, task_paths, DataSource, ModelSource, TaskSource};
use crate::lab::experiments::{run_experiment, Experiment, ExperimentConfig, Summary};
use crate::lab::pgm::encode_pgm;
use crate::lab::rundir::RunDir;
use crate::meta::{finetune_eval, meta_train, MetaConfig};
use crate::model::{write_model, Coords, InrModel};
use crate::ntk::{energy_concentration, export_eigenfunctions, gram_matrix, ntk_eigs, DEFAULT_EIG_CUTOFF};
use crate::numkit::{dft, dft2, Matrix, SeededRng};
use crate::train::{train_full_batch, OptimizerConfig, Optimizer};

/// CLI subcommands other than `expt`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Train,
    Spectrum,
    Support,
    BesselExpand,
    Ntk,
    Energy,
    Meta,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Train => "train",
            Command::Spectrum => "spectrum",
            Command::Support => "support",
            Command::BesselExpand => "bessel-expand",
            Command::Ntk => "ntk",
            Command::Energy => "energy",
            Command::Meta => "meta",
        }
    }
}

impl std::str::FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "train" => Command::Train,
            "spectrum" => Command::Spectrum,
            "support" => Command::Support,
            "bessel-expand" => Command::BesselExpand,
            "ntk" => Command::Ntk,
            "energy" => Command::Energy,
            "meta" => Command::Meta,
            other => return Err(Error::Config(format!("unknown subcommand {other:?}"))),
        })
    }
}

fn default_batch() -> usize {
    64
}

fn override_model_seed(model: &mut ModelSource, seed: Option<u64>) {
    if let (ModelSource::Build { seed: s, .. }, Some(new)) = (model, seed) {
        *s = new;
    }
}

/// Fits a model to one signal or image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainCommand {
    pub model: ModelSource,
    pub data: DataSource,
    pub optimizer: OptimizerConfig,
}

/// DFT of a model's output on a regular grid. `shape` has one entry per
/// input dimension; one-dimensional grids sample `i / fs`, two-dimensional
/// grids cover [−1, 1)².
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumCommand {
    pub model: ModelSource,
    pub shape: Vec<usize>,
    #[serde(default)]
    pub fs: Option<f64>,
}

/// Harmonic support of a mapping frequency matrix (one row per frequency).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SupportCommand {
    pub omega: Vec<Vec<f64>>,
    pub k: u32,
    pub l: u32,
    #[serde(default = "default_dedup")]
    pub dedup_tol: f64,
}

fn default_dedup() -> f64 {
    DEFAULT_DEDUP_TOL
}

/// Bessel-series expansion of a two-layer SIREN, checked against the
/// network on random points in [−1, 1]^d.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BesselExpandCommand {
    pub model: ModelSource,
    #[serde(default)]
    pub truncation: Option<usize>,
    #[serde(default = "default_check_points")]
    pub check_points: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_check_points() -> usize {
    512
}

/// Empirical NTK spectrum on a grid, with optional eigenfunction images.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NtkCommand {
    pub model: ModelSource,
    pub shape: Vec<usize>,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default)]
    pub export: usize,
}

/// Energy concentration of a task collection in a model's NTK eigenbasis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyCommand {
    pub model: ModelSource,
    pub tasks: TaskSource,
    pub thresholds: Vec<f64>,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
}

/// Meta-training, optionally followed by fine-tuning on held-out tasks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetaCommand {
    pub model: ModelSource,
    pub tasks: TaskSource,
    pub meta: MetaConfig,
    #[serde(default)]
    pub holdout: usize,
    #[serde(default)]
    pub finetune_steps: usize,
    #[serde(default = "default_finetune")]
    pub finetune: Optimizer,
}

fn default_finetune() -> Optimizer {
    Optimizer::gd(1e-2)
}

fn model_text(model: &InrModel) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_model(model, &mut buf)?;
    Ok(buf)
}

fn grid_coords(shape: &[usize], fs: Option<f64>) -> Result<Coords> {
    match *shape {
        [n] if n > 0 => Ok(Coords::line(n, fs.unwrap_or(n as f64))),
        [r, c] if r > 0 && c > 0 => Ok(Coords::grid_2d(r, c)),
        _ => Err(Error::Config(format!("grid shape {shape:?} must have one or two positive entries"))),
    }
}

fn check_dim(model: &InrModel, shape: &[usize]) -> Result<()> {
    if model.input_dim() != shape.len() {
        return Err(Error::Config(format!(
            "grid of {} dimensions for a model with {} inputs",
            shape.len(),
            model.input_dim()
        )));
    }
    Ok(())
}

fn parse<T: DeserializeOwned>(text: &str, origin: &str) -> Result<T> {
    parse_json(text, origin)
}

/// Runs a subcommand from its JSON config into `out`. `seed` overrides the
/// seed of a built model (or the meta-sampling seed for `meta`).
pub fn run_command(cmd: Command, config: &str, origin: &str, out: &Path, seed: Option<u64>) -> Result<(PathBuf, Summary)> {
    let name = cmd.name();
    let wrap = |e: Error| e.in_stage(name);
    match cmd {
        Command::Train => {
            let mut c: TrainCommand = parse(config, origin)?;
            override_model_seed(&mut c.model, seed);
            check_paths(model_paths(&c.model).into_iter().chain(data_paths(&c.data)))?;
            finish(RunDir::create(out, name, &c)?, |d| train(&c, d).map_err(wrap))
        }
        Command::Spectrum => {
            let mut c: SpectrumCommand = parse(config, origin)?;
            override_model_seed(&mut c.model, seed);
            check_paths(model_paths(&c.model))?;
            finish(RunDir::create(out, name, &c)?, |d| spectrum(&c, d).map_err(wrap))
        }
        Command::Support => {
            let c: SupportCommand = parse(config, origin)?;
            finish(RunDir::create(out, name, &c)?, |d| support(&c, d).map_err(wrap))
        }
        Command::BesselExpand => {
            let mut c: BesselExpandCommand = parse(config, origin)?;
            override_model_seed(&mut c.model, seed);
            if let Some(s) = seed {
                c.seed = s;
            }
            check_paths(model_paths(&c.model))?;
            finish(RunDir::create(out, name, &c)?, |d| bessel_expand(&c, d).map_err(wrap))
        }
        Command::Ntk => {
            let mut c: NtkCommand = parse(config, origin)?;
            override_model_seed(&mut c.model, seed);
            check_paths(model_paths(&c.model))?;
            finish(RunDir::create(out, name, &c)?, |d| ntk(&c, d).map_err(wrap))
        }
        Command::Energy => {
            let mut c: EnergyCommand = parse(config, origin)?;
            override_model_seed(&mut c.model, seed);
            check_paths(model_paths(&c.model).into_iter().chain(task_paths(&c.tasks)))?;
            finish(RunDir::create(out, name, &c)?, |d| energy(&c, d).map_err(wrap))
        }
        Command::Meta => {
            let mut c: MetaCommand = parse(config, origin)?;
            if let Some(s) = seed {
                c.meta.seed = s;
            }
            c.meta.validate()?;
            check_paths(model_paths(&c.model).into_iter().chain(task_paths(&c.tasks)))?;
            finish(RunDir::create(out, name, &c)?, |d| meta(&c, d).map_err(wrap))
        }
    }
}

/// Runs a named experiment. Without a config document the experiment's
/// defaults are used; a document must name the same experiment.
pub fn run_expt(name: &str, config: Option<(&str, &str)>, out: &Path, seed: Option<u64>) -> Result<(PathBuf, Summary)> {
    let mut cfg = match config {
        Some((text, origin)) => {
            let cfg: ExperimentConfig = parse(text, origin)?;
            if cfg.experiment.name() != name {
                return Err(Error::Config(format!(
                    "config describes experiment {:?}, not {name:?}",
                    cfg.experiment.name()
                )));
            }
            cfg
        }
        None => ExperimentConfig::new(Experiment::by_name(name)?, 0),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    run_experiment(&cfg, Some(out))
}

fn finish(mut dir: RunDir, body: impl FnOnce(&mut RunDir) -> Result<Summary>) -> Result<(PathBuf, Summary)> {
    let summary = body(&mut dir)?;
    dir.write("summary.csv", summary.to_csv())?;
    Ok((dir.finish()?, summary))
}

fn train(c: &TrainCommand, dir: &mut RunDir) -> Result<Summary> {
    let model = c.model.load()?;
    let data = c.data.load()?;
    let (trained, report) = train_full_batch(&model, &data, &c.optimizer)?;
    dir.write("train.csv", report.to_csv())?;
    dir.write("model.txt", model_text(&trained)?)?;
    if let Some((rows, cols)) = data.shape {
        dir.write("recon.pgm", encode_pgm(&trained.forward(&data.coords)?, rows, cols)?)?;
    }
    let mut s = Summary::default();
    s.push("final_train_mse", report.final_train_mse());
    s.push("final_train_psnr", *report.train_psnr.last().expect("nonempty trace"));
    s.push("final_test_psnr", report.final_test_psnr());
    Ok(s)
}

fn spectrum(c: &SpectrumCommand, dir: &mut RunDir) -> Result<Summary> {
    let model = c.model.load()?;
    check_dim(&model, &c.shape)?;
    let values = model.forward(&grid_coords(&c.shape, c.fs)?)?;
    let mut csv = String::new();
    let spec = match *c.shape {
        [n] => {
            let spec = dft(&values)?;
            let fs = c.fs.unwrap_or(n as f64);
            csv.push_str("bin,frequency,magnitude,power\n");
            for (k, b) in spec.bins.iter().enumerate() {
                let _ = writeln!(csv, "{k},{},{},{:e}", k as f64 * fs / n as f64, b.norm(), b.norm_sqr());
            }
            spec
        }
        [r, cols] => {
            let spec = dft2(&values, r, cols)?;
            csv.push_str("ky,kx,magnitude,power\n");
            for i in 0..r {
                for j in 0..cols {
                    let b = spec.at(i, j);
                    let _ = writeln!(csv, "{i},{j},{},{:e}", b.norm(), b.norm_sqr());
                }
            }
            spec
        }
        _ => unreachable!("grid_coords validated the shape"),
    };
    dir.write("spectrum.csv", csv)?;
    let mut s = Summary::default();
    s.push("total_energy", spec.total_energy());
    s.push("dc_energy", spec.bins[0].norm_sqr());
    Ok(s)
}

fn support(c: &SupportCommand, dir: &mut RunDir) -> Result<Summary> {
    let dim = c.omega.first().map_or(0, Vec::len);
    let omega = Matrix::from_rows(&c.omega)?;
    let set = harmonic_support(&omega, SupportBudget::new(c.k, c.l)?, c.dedup_tol)?;
    let mut csv = (0..dim).map(|i| format!("freq_{i}")).collect::<Vec<_>>().join(",");
    csv.push('\n');
    for f in &set {
        let row: Vec<String> = f.iter().map(|x| x.to_string()).collect();
        let _ = writeln!(csv, "{}", row.join(","));
    }
    dir.write("support.csv", csv)?;
    let mut s = Summary::default();
    s.push("support_size", set.len() as f64);
    Ok(s)
}

fn bessel_expand(c: &BesselExpandCommand, dir: &mut RunDir) -> Result<Summary> {
    let model = c.model.load()?;
    let truncation = match c.truncation {
        Some(t) => t,
        None => default_truncation(&model)?,
    };
    let set = siren_bessel_expansion(&model, truncation)?;
    dir.write("harmonics.csv", set.to_csv())?;
    let d = model.input_dim();
    let mut rng = SeededRng::new(c.seed);
    let points: Vec<f64> = (0..c.check_points * d).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
    let coords = Coords::new(d, points)?;
    let direct = model.forward(&coords)?;
    let expanded = evaluate_harmonic_set(&set, &coords)?;
    let err = direct.iter().zip(&expanded).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let mut s = Summary::default();
    s.push("truncation", truncation as f64);
    s.push("atoms", set.len() as f64);
    s.push("max_abs_deviation", err);
    Ok(s)
}

fn ntk(c: &NtkCommand, dir: &mut RunDir) -> Result<Summary> {
    let model = c.model.load()?;
    check_dim(&model, &c.shape)?;
    let mut gram = gram_matrix(&model, &grid_coords(&c.shape, None)?, c.batch_size)?;
    if let [r, cols] = *c.shape {
        gram = gram.with_shape(r, cols)?;
    }
    let spec = ntk_eigs(&gram)?;
    dir.write("eigenvalues.csv", spec.eigenvalues_csv())?;
    if c.export > 0 {
        for p in export_eigenfunctions(&spec, c.export, dir.root())? {
            dir.record(&p.file_name().expect("file name").to_string_lossy());
        }
    }
    let ev = spec.eigenvalues();
    let mut s = Summary::default();
    s.push("lambda_max", ev[0]);
    s.push("lambda_min", *ev.last().expect("nonempty spectrum"));
    s.push("rank", ev.iter().filter(|&&l| l > DEFAULT_EIG_CUTOFF * ev[0]).count() as f64);
    Ok(s)
}

fn energy(c: &EnergyCommand, dir: &mut RunDir) -> Result<Summary> {
    let model = c.model.load()?;
    let tasks = c.tasks.load()?;
    let first = &tasks.tasks[0];
    let mut gram = gram_matrix(&model, &first.coords, c.batch_size)?;
    if let Some((r, cols)) = first.shape {
        gram = gram.with_shape(r, cols)?;
    }
    let spec = ntk_eigs(&gram)?;
    let signals: Vec<Vec<f64>> = tasks.tasks.iter().map(|t| t.targets.clone()).collect();
    let profile = energy_concentration(&spec, &signals, &c.thresholds)?;
    dir.write("eigenvalues.csv", spec.eigenvalues_csv())?;
    dir.write("energy.csv", profile.to_csv())?;
    let mut s = Summary::default();
    for (t, v) in profile.thresholds.iter().zip(&profile.values) {
        s.push(format!("energy_threshold_{t:e}"), *v);
    }
    Ok(s)
}

fn meta(c: &MetaCommand, dir: &mut RunDir) -> Result<Summary> {
    let model = c.model.load()?;
    let tasks = c.tasks.load()?;
    let (train_tasks, held) = if c.holdout > 0 {
        let (t, h) = tasks.split_off(c.holdout)?;
        (t, Some(h))
    } else {
        (tasks, None)
    };
    let (trained, trace) = meta_train(&model, &train_tasks, &c.meta)?;
    dir.write("meta_trace.csv", trace.to_csv())?;
    dir.write("meta_model.txt", model_text(&trained)?)?;
    let mut s = Summary::default();
    s.push("final_meta_loss", *trace.mean_post_adaptation_mse.last().unwrap_or(&f64::NAN));
    if let Some(held) = held {
        let curve = finetune_eval(&trained, &held, c.finetune_steps, &c.finetune)?;
        dir.write("finetune.csv", curve.to_csv())?;
        s.push("final_test_psnr", curve.final_test_psnr());
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn support_command_writes_sorted_frequencies() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = r#"{"omega": [[1.0], [3.0]], "k": 2, "l": 2}"#;
        let (dir, summary) = run_command(Command::Support, cfg, "c", tmp.path(), None).unwrap();
        let csv = std::fs::read_to_string(dir.join("support.csv")).unwrap();
        assert_eq!(csv, "freq_0\n0\n1\n2\n3\n4\n6\n");
        assert_eq!(summary.get("support_size"), Some(6.0));
    }

    #[test]
    fn seed_override_lands_in_snapshot() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = r#"{
            "model": {"kind": "build", "seed": 1,
                      "mapping": {"kind": "siren-first", "omega0": 2.0, "width": 4, "input_dim": 1},
                      "layers": [{"width": 3, "activation": {"kind": "sine", "omega0": 1.0}},
                                 {"width": 1, "activation": {"kind": "identity"}}]},
            "truncation": 20, "check_points": 64}"#;
        let (dir, summary) = run_command(Command::BesselExpand, cfg, "c", tmp.path(), Some(9)).unwrap();
        let snapshot = std::fs::read_to_string(dir.join("config.json")).unwrap();
        assert!(snapshot.contains("\"seed\": 9"));
        assert!(summary.get("max_abs_deviation").unwrap() < 1e-10);
    }

    #[test]
    fn expt_name_mismatch_is_a_config_error() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = r#"{"seed": 0, "experiment": {"name": "support-check"}}"#;
        let err = run_expt("aliasing", Some((cfg, "c")), tmp.path(), None).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(run_expt("nope", None, tmp.path(), None).is_err());
    }

    #[test]
    fn unknown_subcommand_is_rejected() {
        assert!("fit".parse::<Command>().is_err());
        assert_eq!("bessel-expand".parse::<Command>().unwrap(), Command::BesselExpand);
    }
}
