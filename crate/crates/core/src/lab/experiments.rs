use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harmonics::{harmonic_support, off_support_energy, support_bins_1d, SupportBudget, DEFAULT_DEDUP_TOL};
use crate::lab::config::{check_paths, data_paths, model_paths, task_paths, DataSource, ModelSource, TaskSource};
use crate::lab::pgm::encode_pgm;
use crate::lab::rundir::RunDir;
use crate::meta::{finetune_eval, meta_train, pretrain_single_task, FinetuneCurve, MetaConfig, TaskSet};
use crate::model::write_model;
use crate::model::{build_model, Activation, Coords, InrModel, LayerSpec, MappingSpec, MappingVariant};
use crate::ntk::{energy_concentration, export_eigenfunctions, gram_matrix, ntk_eigs, NtkSpectrum};
use crate::numkit::{dft, dft2, Matrix, SeededRng};
use crate::train::{train_full_batch, Dataset, Optimizer, OptimizerConfig};

/// SIREN with a sine input layer and `hidden` further sine layers, all of
/// width `width`, followed by a linear output.
pub fn siren_model(input_dim: usize, omega0: f64, width: usize, hidden: usize, seed: u64) -> Result<InrModel> {
    let mapping = MappingSpec::new(MappingVariant::SirenFirst { omega0, width }, input_dim);
    let mut layers: Vec<LayerSpec> = (0..hidden).map(|_| LayerSpec::new(width, Activation::Sine { omega0 })).collect();
    layers.push(LayerSpec::output());
    build_model(mapping, layers, &mut SeededRng::new(seed))
}

fn model_text(model: &InrModel) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_model(model, &mut buf)?;
    Ok(buf)
}

fn image_bytes(values: &[f64], data: &Dataset) -> Result<Vec<u8>> {
    let (rows, cols) = data
        .shape
        .ok_or_else(|| Error::Shape(format!("{} is not an image", data.metadata)))?;
    encode_pgm(values, rows, cols)
}

fn adam(lr: f64, iterations: usize) -> OptimizerConfig {
    OptimizerConfig::new(Optimizer::adam(lr), iterations)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImperfectRecovery {
    pub image: DataSource,
    pub f0s: Vec<f64>,
    pub hidden: Vec<usize>,
    pub trainable_mapping: bool,
    pub optimizer: OptimizerConfig,
}

impl Default for ImperfectRecovery {
    fn default() -> Self {
        ImperfectRecovery {
            image: DataSource::TestImage { size: 64, seed: 1, mask_seed: None },
            f0s: vec![1.0, 0.5],
            hidden: vec![64, 64, 64],
            trainable_mapping: false,
            optimizer: adam(1e-4, 2000),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Aliasing {
    pub f: f64,
    pub fs: f64,
    pub n: usize,
    pub eval_fs: f64,
    pub omega0s: Vec<f64>,
    pub width: usize,
    pub optimizer: OptimizerConfig,
}

impl Default for Aliasing {
    fn default() -> Self {
        Aliasing {
            f: 23.0,
            fs: 128.0,
            n: 128,
            eval_fs: 256.0,
            omega0s: vec![300.0, 30.0],
            width: 128,
            optimizer: adam(1e-4, 2000),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergyProfileExperiment {
    pub images: TaskSource,
    pub omega0s: Vec<f64>,
    pub width: usize,
    pub thresholds: Vec<f64>,
    pub finetune_steps: usize,
    pub finetune_optimizer: Optimizer,
    pub batch_size: usize,
}

impl Default for EnergyProfileExperiment {
    fn default() -> Self {
        EnergyProfileExperiment {
            images: TaskSource::TestImages { count: 16, size: 32, seed: 7 },
            omega0s: vec![1.0, 30.0],
            width: 64,
            thresholds: vec![1.0, 1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6],
            finetune_steps: 10,
            finetune_optimizer: Optimizer::adam(1e-3),
            batch_size: 64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NtkEigsExperiment {
    /// Defaults to a SIREN (ω₀ = 30, width 64) seeded with the run seed.
    pub model: Option<ModelSource>,
    pub grid: usize,
    pub export: usize,
    pub batch_size: usize,
}

impl Default for NtkEigsExperiment {
    fn default() -> Self {
        NtkEigsExperiment {
            model: None,
            grid: 32,
            export: 8,
            batch_size: 64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetaVsRandom {
    pub tasks: TaskSource,
    pub holdout: usize,
    pub omega0: f64,
    pub width: usize,
    pub meta: MetaConfig,
    pub thresholds: Vec<f64>,
    pub finetune_steps: usize,
    pub meta_finetune: Optimizer,
    pub random_finetune: Optimizer,
    pub batch_size: usize,
}

impl Default for MetaVsRandom {
    fn default() -> Self {
        MetaVsRandom {
            tasks: TaskSource::FaceProxy { count: 72, size: 16, seed: 5 },
            holdout: 8,
            omega0: 30.0,
            width: 64,
            meta: MetaConfig {
                seed: 1,
                ..MetaConfig::maml()
            },
            thresholds: vec![1e-1, 1e-2, 1e-3, 1e-4],
            finetune_steps: 10,
            meta_finetune: Optimizer::gd(1e-2),
            random_finetune: Optimizer::adam(1e-4),
            batch_size: 64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SingleTaskBaseline {
    pub tasks: TaskSource,
    pub holdout: usize,
    pub pretrain_task: usize,
    pub pretrain_iterations: usize,
    pub omega0: f64,
    pub width: usize,
    pub finetune_steps: usize,
    pub pretrained_finetune: Optimizer,
    pub random_finetune: Optimizer,
}

impl Default for SingleTaskBaseline {
    fn default() -> Self {
        SingleTaskBaseline {
            tasks: TaskSource::FaceProxy { count: 72, size: 16, seed: 5 },
            holdout: 8,
            pretrain_task: 0,
            pretrain_iterations: 1000,
            omega0: 30.0,
            width: 64,
            finetune_steps: 10,
            pretrained_finetune: Optimizer::gd(1e-2),
            random_finetune: Optimizer::adam(1e-4),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EigenfnLearnability {
    /// Defaults to a SIREN (ω₀ = 30, width 64) seeded with the run seed.
    pub model: Option<ModelSource>,
    pub grid: usize,
    pub indices: Vec<usize>,
    pub optimizer: OptimizerConfig,
    pub batch_size: usize,
}

impl Default for EigenfnLearnability {
    fn default() -> Self {
        EigenfnLearnability {
            model: None,
            grid: 32,
            indices: vec![0, 50, 500],
            optimizer: OptimizerConfig::new(Optimizer::gd(1e-2), 2000),
            batch_size: 64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SupportCheck {
    /// Integer frequencies of a one-dimensional sine mapping.
    pub omega: Vec<f64>,
    /// Polynomial activation coefficients, constant term first.
    pub coeffs: Vec<f64>,
    pub hidden_layers: usize,
    pub width: usize,
    pub n: usize,
    pub trials: usize,
}

impl Default for SupportCheck {
    fn default() -> Self {
        SupportCheck {
            omega: vec![1.0, 3.0],
            coeffs: vec![0.2, -0.7, 0.5, 0.9],
            hidden_layers: 2,
            width: 8,
            n: 256,
            trials: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum Experiment {
    ImperfectRecovery(ImperfectRecovery),
    Aliasing(Aliasing),
    EnergyProfile(EnergyProfileExperiment),
    NtkEigs(NtkEigsExperiment),
    MetaVsRandom(MetaVsRandom),
    SingleTaskBaseline(SingleTaskBaseline),
    EigenfnLearnability(EigenfnLearnability),
    SupportCheck(SupportCheck),
}

pub const EXPERIMENT_NAMES: [&str; 8] = [
    "imperfect-recovery",
    "aliasing",
    "energy-profile",
    "ntk-eigs",
    "meta-vs-random",
    "single-task-baseline",
    "eigenfn-learnability",
    "support-check",
];

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::ImperfectRecovery(_) => EXPERIMENT_NAMES[0],
            Experiment::Aliasing(_) => EXPERIMENT_NAMES[1],
            Experiment::EnergyProfile(_) => EXPERIMENT_NAMES[2],
            Experiment::NtkEigs(_) => EXPERIMENT_NAMES[3],
            Experiment::MetaVsRandom(_) => EXPERIMENT_NAMES[4],
            Experiment::SingleTaskBaseline(_) => EXPERIMENT_NAMES[5],
            Experiment::EigenfnLearnability(_) => EXPERIMENT_NAMES[6],
            Experiment::SupportCheck(_) => EXPERIMENT_NAMES[7],
        }
    }

    /// The named experiment with its default desk-scale settings.
    pub fn by_name(name: &str) -> Result<Self> {
        Ok(match name {
            "imperfect-recovery" => Experiment::ImperfectRecovery(Default::default()),
            "aliasing" => Experiment::Aliasing(Default::default()),
            "energy-profile" => Experiment::EnergyProfile(Default::default()),
            "ntk-eigs" => Experiment::NtkEigs(Default::default()),
            "meta-vs-random" => Experiment::MetaVsRandom(Default::default()),
            "single-task-baseline" => Experiment::SingleTaskBaseline(Default::default()),
            "eigenfn-learnability" => Experiment::EigenfnLearnability(Default::default()),
            "support-check" => Experiment::SupportCheck(Default::default()),
            other => {
                return Err(Error::Config(format!(
                    "unknown experiment {other:?}; expected one of {}",
                    EXPERIMENT_NAMES.join(", ")
                )))
            }
        })
    }

    fn paths(&self) -> Vec<&Path> {
        match self {
            Experiment::ImperfectRecovery(e) => data_paths(&e.image),
            Experiment::EnergyProfile(e) => task_paths(&e.images),
            Experiment::NtkEigs(e) => e.model.as_ref().map(model_paths).unwrap_or_default(),
            Experiment::MetaVsRandom(e) => task_paths(&e.tasks),
            Experiment::SingleTaskBaseline(e) => task_paths(&e.tasks),
            Experiment::EigenfnLearnability(e) => e.model.as_ref().map(model_paths).unwrap_or_default(),
            Experiment::Aliasing(_) | Experiment::SupportCheck(_) => Vec::new(),
        }
    }
}

/// One experiment run: what to run, its seed and where to write.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    pub experiment: Experiment,
}

impl ExperimentConfig {
    pub fn new(experiment: Experiment, seed: u64) -> Self {
        ExperimentConfig {
            seed,
            output_dir: None,
            experiment,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_paths(self.experiment.paths())
    }
}

/// Named scalar results of a run, also written to `summary.csv`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Summary {
    pub metrics: Vec<(String, f64)>,
}

impl Summary {
    pub fn push(&mut self, name: impl Into<String>, value: f64) {
        self.metrics.push((name.into(), value));
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.metrics.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    /// CSV `metric,value`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,value\n");
        for (n, v) in &self.metrics {
            let _ = writeln!(out, "{n},{v}");
        }
        out
    }
}

/// Runs an experiment into `out` (or the config's `output_dir`) and returns
/// its summary together with the run directory path.
pub fn run_experiment(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<(PathBuf, Summary)> {
    cfg.validate()?;
    let root = out
        .map(Path::to_path_buf)
        .or_else(|| cfg.output_dir.clone())
        .ok_or_else(|| Error::Config("no output directory given".into()))?;
    let name = cfg.experiment.name();
    let mut dir = RunDir::create(&root, format!("expt {name}"), cfg)?;
    let summary = match &cfg.experiment {
        Experiment::ImperfectRecovery(e) => imperfect_recovery(e, cfg.seed, &mut dir),
        Experiment::Aliasing(e) => aliasing(e, cfg.seed, &mut dir),
        Experiment::EnergyProfile(e) => energy_profile(e, cfg.seed, &mut dir),
        Experiment::NtkEigs(e) => ntk_eigs_experiment(e, cfg.seed, &mut dir),
        Experiment::MetaVsRandom(e) => meta_vs_random(e, cfg.seed, &mut dir),
        Experiment::SingleTaskBaseline(e) => single_task_baseline(e, cfg.seed, &mut dir),
        Experiment::EigenfnLearnability(e) => eigenfn_learnability(e, cfg.seed, &mut dir),
        Experiment::SupportCheck(e) => support_check(e, cfg.seed, &mut dir),
    }
    .map_err(|e| e.in_stage(name))?;
    dir.write("summary.csv", summary.to_csv())?;
    Ok((dir.finish()?, summary))
}

fn imperfect_recovery(e: &ImperfectRecovery, seed: u64, dir: &mut RunDir) -> Result<Summary> {
    let image = e.image.load().map_err(|err| err.in_stage("load image"))?;
    let (rows, cols) = image
        .shape
        .ok_or_else(|| Error::Shape("imperfect recovery needs a 2D image".into()))?;
    dir.write("target.pgm", image_bytes(&image.targets, &image)?)?;
    let mut summary = Summary::default();
    let mut parity = String::from("f0,even_fraction,odd_fraction,train_psnr\n");
    for &f0 in &e.f0s {
        let stage = format!("f0={f0}");
        let mapping = MappingSpec::new(MappingVariant::SingleFrequency { f0 }, 2).with_trainable(e.trainable_mapping);
        let mut layers: Vec<LayerSpec> = e.hidden.iter().map(|&w| LayerSpec::new(w, Activation::Relu)).collect();
        layers.push(LayerSpec::output());
        let model = build_model(mapping, layers, &mut SeededRng::new(seed)).map_err(|err| err.in_stage(&stage))?;
        let (trained, report) = train_full_batch(&model, &image, &e.optimizer).map_err(|err| err.in_stage(&stage))?;
        let recon = trained.forward(&image.coords)?;
        let spec = dft2(&recon, rows, cols)?;
        let mut csv = String::from("ky,kx,power\n");
        let (mut even, mut total) = (0.0, 0.0);
        for r in 0..rows {
            for c in 0..cols {
                let p = spec.at(r, c).norm_sqr();
                let _ = writeln!(csv, "{r},{c},{p:e}");
                if r == 0 && c == 0 {
                    continue;
                }
                total += p;
                if r % 2 == 0 && c % 2 == 0 {
                    even += p;
                }
            }
        }
        let even_fraction = if total > 0.0 { even / total } else { 1.0 };
        let psnr = *report.train_psnr.last().expect("nonempty trace");
        let _ = writeln!(parity, "{f0},{even_fraction},{},{psnr}", 1.0 - even_fraction);
        dir.write(&format!("train_f0_{f0}.csv"), report.to_csv())?;
        dir.write(&format!("spectrum_f0_{f0}.csv"), csv)?;
        dir.write(&format!("recon_f0_{f0}.pgm"), image_bytes(&recon, &image)?)?;
        summary.push(format!("even_fraction_f0_{f0}"), even_fraction);
        summary.push(format!("odd_fraction_f0_{f0}"), 1.0 - even_fraction);
        summary.push(format!("train_psnr_f0_{f0}"), psnr);
    }
    dir.write("parity.csv", parity)?;
    Ok(summary)
}

fn aliasing(e: &Aliasing, seed: u64, dir: &mut RunDir) -> Result<Summary> {
    let data = crate::lab::synth::gen_signal(e.f, e.fs, e.n)?;
    let eval_n = (e.n as f64 * e.eval_fs / e.fs).round() as usize;
    let eval = Coords::line(eval_n, e.eval_fs);
    let bin_of = |freq: f64, n: usize, fs: f64| ((freq * n as f64 / fs).round() as usize) % n;
    let alias = e.fs - e.f;
    let mut summary = Summary::default();
    let mut train_mags = Vec::new();
    let mut eval_mags = Vec::new();
    let mut peaks = String::from("omega0,train_mse,mag_signal,mag_alias,ratio\n");
    for &w in &e.omega0s {
        let stage = format!("omega0={w}");
        let model = siren_model(1, w, e.width, 1, seed).map_err(|err| err.in_stage(&stage))?;
        let (trained, report) = train_full_batch(&model, &data, &e.optimizer).map_err(|err| err.in_stage(&stage))?;
        dir.write(&format!("train_omega0_{w}.csv"), report.to_csv())?;
        train_mags.push(dft(&trained.forward(&data.coords)?)?.magnitudes());
        let mags = dft(&trained.forward(&eval)?)?.magnitudes();
        let signal = mags[bin_of(e.f, eval_n, e.eval_fs)];
        let aliased = mags[bin_of(alias, eval_n, e.eval_fs)];
        let ratio = aliased / signal;
        let mse = report.final_train_mse();
        let _ = writeln!(peaks, "{w},{mse:e},{signal},{aliased},{ratio}");
        summary.push(format!("train_mse_omega0_{w}"), mse);
        summary.push(format!("alias_ratio_omega0_{w}"), ratio);
        eval_mags.push(mags);
    }
    let spectrum_csv = |mags: &[Vec<f64>], n: usize, fs: f64| {
        let mut out = String::from("bin,frequency");
        for w in &e.omega0s {
            let _ = write!(out, ",omega0_{w}");
        }
        out.push('\n');
        for k in 0..=n / 2 {
            let _ = write!(out, "{k},{}", k as f64 * fs / n as f64);
            for m in mags {
                let _ = write!(out, ",{}", m[k]);
            }
            out.push('\n');
        }
        out
    };
    dir.write(&format!("spectrum_fs{}.csv", e.fs), spectrum_csv(&train_mags, e.n, e.fs))?;
    dir.write(&format!("spectrum_fs{}.csv", e.eval_fs), spectrum_csv(&eval_mags, eval_n, e.eval_fs))?;
    dir.write("peaks.csv", peaks)?;
    Ok(summary)
}

fn grid_spectrum(model: &InrModel, rows: usize, cols: usize, batch_size: usize) -> Result<NtkSpectrum> {
    let gram = gram_matrix(model, &Coords::grid_2d(rows, cols), batch_size)?.with_shape(rows, cols)?;
    ntk_eigs(&gram)
}

fn task_grid(tasks: &TaskSet) -> Result<(usize, usize)> {
    tasks.tasks[0]
        .shape
        .ok_or_else(|| Error::Shape("tasks must be images".into()))
}

fn energy_profile(e: &EnergyProfileExperiment, seed: u64, dir: &mut RunDir) -> Result<Summary> {
    let images = e.images.load().map_err(|err| err.in_stage("load images"))?;
    let (rows, cols) = task_grid(&images)?;
    let signals: Vec<Vec<f64>> = images.tasks.iter().map(|t| t.targets.clone()).collect();
    let mut summary = Summary::default();
    let mut curves = Vec::new();
    for &w in &e.omega0s {
        let stage = format!("omega0={w}");
        let model = siren_model(2, w, e.width, 1, seed)?;
        let spec = grid_spectrum(&model, rows, cols, e.batch_size).map_err(|err| err.in_stage(&stage))?;
        let profile = energy_concentration(&spec, &signals, &e.thresholds)?;
        let curve = finetune_eval(&model, &images, e.finetune_steps, &e.finetune_optimizer).map_err(|err| err.in_stage(&stage))?;
        dir.write(&format!("eigenvalues_omega0_{w}.csv"), spec.eigenvalues_csv())?;
        dir.write(&format!("energy_omega0_{w}.csv"), profile.to_csv())?;
        dir.write(&format!("finetune_omega0_{w}.csv"), curve.to_csv())?;
        for (t, v) in profile.thresholds.iter().zip(&profile.values) {
            summary.push(format!("energy_omega0_{w}_threshold_{t:e}"), *v);
        }
        summary.push(format!("test_psnr_omega0_{w}"), curve.final_test_psnr());
        curves.push(profile);
    }
    let mut combined = String::from("threshold");
    for w in &e.omega0s {
        let _ = write!(combined, ",E_omega0_{w}");
    }
    combined.push('\n');
    if let Some(first) = curves.first() {
        for (i, t) in first.thresholds.iter().enumerate() {
            let _ = write!(combined, "{t:e}");
            for c in &curves {
                let _ = write!(combined, ",{}", c.values[i]);
            }
            combined.push('\n');
        }
    }
    dir.write("energy_curves.csv", combined)?;
    Ok(summary)
}

fn default_siren(model: &Option<ModelSource>, seed: u64) -> Result<InrModel> {
    match model {
        Some(src) => src.load(),
        None => siren_model(2, 30.0, 64, 1, seed),
    }
}

fn ntk_eigs_experiment(e: &NtkEigsExperiment, seed: u64, dir: &mut RunDir) -> Result<Summary> {
    let model = default_siren(&e.model, seed).map_err(|err| err.in_stage("model"))?;
    let spec = grid_spectrum(&model, e.grid, e.grid, e.batch_size)?;
    dir.write("model.txt", model_text(&model)?)?;
    dir.write("eigenvalues.csv", spec.eigenvalues_csv())?;
    for path in export_eigenfunctions(&spec, e.export, dir.root())? {
        let name = path.file_name().expect("file name").to_string_lossy().into_owned();
        dir.record(&name);
    }
    let ev = spec.eigenvalues();
    let mut summary = Summary::default();
    summary.push("lambda_max", ev[0]);
    summary.push("lambda_min", *ev.last().expect("nonempty spectrum"));
    Ok(summary)
}

fn curves_csv(names: &[&str], curves: &[&FinetuneCurve]) -> String {
    let mut out = String::from("step");
    for n in names {
        let _ = write!(out, ",{n}_train_psnr,{n}_test_psnr");
    }
    out.push('\n');
    for s in 0..curves[0].train_psnr.len() {
        let _ = write!(out, "{s}");
        for c in curves {
            let _ = write!(out, ",{},{}", c.train_psnr[s], c.test_psnr[s]);
        }
        out.push('\n');
    }
    out
}

fn meta_vs_random(e: &MetaVsRandom, seed: u64, dir: &mut RunDir) -> Result<Summary> {
    let all = e.tasks.load().map_err(|err| err.in_stage("load tasks"))?;
    let (rows, cols) = task_grid(&all)?;
    let (train, held) = all.split_off(e.holdout)?;
    let random = siren_model(2, e.omega0, e.width, 1, seed)?;
    let (meta, trace) = meta_train(&random, &train, &e.meta).map_err(|err| err.in_stage("meta-train"))?;
    dir.write("meta_trace.csv", trace.to_csv())?;
    dir.write("meta_model.txt", model_text(&meta)?)?;

    let signals: Vec<Vec<f64>> = held.tasks.iter().map(|t| t.targets.clone()).collect();
    let mut summary = Summary::default();
    let mut energy = String::from("threshold,E_random,E_meta\n");
    let profiles = [&random, &meta]
        .iter()
        .map(|m| energy_concentration(&grid_spectrum(m, rows, cols, e.batch_size)?, &signals, &e.thresholds))
        .collect::<Result<Vec<_>>>()
        .map_err(|err| err.in_stage("energy"))?;
    for (i, t) in profiles[0].thresholds.iter().enumerate() {
        let _ = writeln!(energy, "{t:e},{},{}", profiles[0].values[i], profiles[1].values[i]);
        summary.push(format!("energy_random_threshold_{t:e}"), profiles[0].values[i]);
        summary.push(format!("energy_meta_threshold_{t:e}"), profiles[1].values[i]);
    }
    dir.write("energy.csv", energy)?;

    let rc = finetune_eval(&random, &held, e.finetune_steps, &e.random_finetune).map_err(|err| err.in_stage("finetune random"))?;
    let mc = finetune_eval(&meta, &held, e.finetune_steps, &e.meta_finetune).map_err(|err| err.in_stage("finetune meta"))?;
    dir.write("finetune.csv", curves_csv(&["random", "meta"], &[&rc, &mc]))?;
    for s in 0..=e.finetune_steps {
        summary.push(format!("test_psnr_random_step_{s}"), rc.test_psnr[s]);
        summary.push(format!("test_psnr_meta_step_{s}"), mc.test_psnr[s]);
    }
    summary.push("final_meta_loss", *trace.mean_post_adaptation_mse.last().unwrap_or(&f64::NAN));
    Ok(summary)
}

fn single_task_baseline(e: &SingleTaskBaseline, seed: u64, dir: &mut RunDir) -> Result<Summary> {
    let all = e.tasks.load().map_err(|err| err.in_stage("load tasks"))?;
    let (train, held) = all.split_off(e.holdout)?;
    let task = train
        .tasks
        .get(e.pretrain_task)
        .ok_or_else(|| Error::Config(format!("pretrain task {} out of range", e.pretrain_task)))?;
    let random = siren_model(2, e.omega0, e.width, 1, seed)?;
    let pretrained = pretrain_single_task(&random, task, e.pretrain_iterations).map_err(|err| err.in_stage("pretrain"))?;
    dir.write("pretrained_model.txt", model_text(&pretrained)?)?;
    let rc = finetune_eval(&random, &held, e.finetune_steps, &e.random_finetune).map_err(|err| err.in_stage("finetune random"))?;
    let pc = finetune_eval(&pretrained, &held, e.finetune_steps, &e.pretrained_finetune)
        .map_err(|err| err.in_stage("finetune pretrained"))?;
    dir.write("finetune.csv", curves_csv(&["random", "pretrained"], &[&rc, &pc]))?;
    let mut summary = Summary::default();
    summary.push("test_psnr_random_final", rc.final_test_psnr());
    summary.push("test_psnr_pretrained_final", pc.final_test_psnr());
    Ok(summary)
}

fn eigenfn_learnability(e: &EigenfnLearnability, seed: u64, dir: &mut RunDir) -> Result<Summary> {
    let model = default_siren(&e.model, seed).map_err(|err| err.in_stage("model"))?;
    let spec = grid_spectrum(&model, e.grid, e.grid, e.batch_size)?;
    dir.write("eigenvalues.csv", spec.eigenvalues_csv())?;
    let coords = Coords::grid_2d(e.grid, e.grid);
    let mut table = String::from("index,lambda,final_train_psnr\n");
    let mut summary = Summary::default();
    for &idx in &e.indices {
        if idx >= spec.len() {
            return Err(Error::Config(format!("eigenfunction index {idx} outside a grid of {} points", spec.len())));
        }
        let v = spec.eigenvector(idx);
        let peak = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let target: Vec<f64> = v.iter().map(|x| x / peak).collect();
        let data = Dataset::new(coords.clone(), target, format!("eigenfunction {idx}"))?;
        let (_, report) = train_full_batch(&model, &data, &e.optimizer).map_err(|err| err.in_stage(format!("index {idx}")))?;
        let psnr = *report.train_psnr.last().expect("nonempty trace");
        let _ = writeln!(table, "{idx},{:e},{psnr}", spec.eigenvalues()[idx]);
        dir.write(&format!("train_index_{idx}.csv"), report.to_csv())?;
        summary.push(format!("final_psnr_index_{idx}"), psnr);
    }
    dir.write("learnability.csv", table)?;
    Ok(summary)
}

fn support_check(e: &SupportCheck, seed: u64, dir: &mut RunDir) -> Result<Summary> {
    if e.coeffs.len() < 2 {
        return Err(Error::Config("polynomial needs degree at least 1".into()));
    }
    let degree = (e.coeffs.len() - 1) as u32;
    let t = e.omega.len();
    let omega = Matrix::from_vec(t, 1, e.omega.clone())?;
    let budget = SupportBudget::new(degree, e.hidden_layers as u32 + 1)?;
    let support = harmonic_support(&omega, budget, DEFAULT_DEDUP_TOL)?;
    let bins = support_bins_1d(&support, e.n, TAU)?;
    let coords = Coords::new(1, (0..e.n).map(|i| TAU * i as f64 / e.n as f64).collect())?;
    let mapping = MappingSpec::new(MappingVariant::Explicit { omega, phase: vec![0.0; t] }, 1);
    let mut rng = SeededRng::new(seed);
    let mut table = String::from("trial,off_support_energy\n");
    let mut worst = 0.0f64;
    let mut first_spectrum = None;
    for trial in 0..e.trials {
        let mut layers: Vec<LayerSpec> = (0..e.hidden_layers)
            .map(|_| LayerSpec::new(e.width, Activation::Polynomial { coeffs: e.coeffs.clone() }))
            .collect();
        layers.push(LayerSpec::output());
        let mut stream = rng.fork(trial as u64);
        let model = build_model(mapping.clone(), layers, &mut stream)?;
        let spec = dft(&model.forward(&coords)?)?;
        let off = off_support_energy(&spec, &bins)?;
        worst = worst.max(off);
        let _ = writeln!(table, "{trial},{off:e}");
        first_spectrum.get_or_insert(spec);
    }
    let mut support_csv = String::from("frequency\n");
    for f in &support {
        let _ = writeln!(support_csv, "{}", f[0]);
    }
    dir.write("support.csv", support_csv)?;
    if let Some(spec) = first_spectrum {
        let mut csv = String::from("bin,power,on_support\n");
        for (k, p) in spec.power().iter().enumerate() {
            let _ = writeln!(csv, "{k},{p:e},{}", u8::from(bins.contains(&k)));
        }
        dir.write("spectrum.csv", csv)?;
    }
    dir.write("support_check.csv", table)?;
    let mut summary = Summary::default();
    summary.push("support_size", support.len() as f64);
    summary.push("max_off_support_energy", worst);
    Ok(summary)
}
