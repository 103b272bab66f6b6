use inrlab_core::lab::synth::gen_face_proxy_tasks;
use inrlab_core::meta::*;
use inrlab_core::model::{build_model, Activation, Coords, InrModel, LayerSpec, MappingSpec, MappingVariant};
use inrlab_core::numkit::{Matrix, SeededRng};
use inrlab_core::train::{Dataset, Optimizer};
use proptest::prelude::*;

fn tiny_model(seed: u64) -> InrModel {
    let omega = Matrix::from_vec(1, 1, vec![2.0]).unwrap();
    let mapping = MappingSpec::new(MappingVariant::Explicit { omega, phase: vec![0.3] }, 1);
    let layers = vec![LayerSpec::new(3, Activation::Sine { omega0: 1.0 }), LayerSpec::output()];
    build_model(mapping, layers, &mut SeededRng::new(seed)).unwrap()
}

fn tiny_tasks() -> TaskSet {
    let coords = Coords::line(12, 6.0);
    let tasks = (0..3)
        .map(|k| {
            let targets = (0..12).map(|i| (0.5 * i as f64 + k as f64).sin() * 0.5).collect();
            Dataset::new(coords.clone(), targets, format!("task {k}")).unwrap()
        })
        .collect();
    TaskSet::new(tasks, "sines").unwrap()
}

#[test]
fn second_order_meta_gradient_matches_finite_differences() {
    let model = tiny_model(4);
    assert_eq!(model.param_count(), 10);
    let tasks = tiny_tasks();
    let obj = InrObjective::new(&model, &tasks).unwrap();
    let theta = model.theta().values().to_vec();
    let (lr, steps) = (0.05, 3);
    let loss_after = |t: &[f64]| {
        let path = adapt(&obj, 1, t, lr, steps).unwrap();
        obj.loss(1, path.last().unwrap()).unwrap()
    };
    let (loss, grad) = meta_gradient(&obj, 1, &theta, lr, steps, false).unwrap();
    assert!((loss - loss_after(&theta)).abs() < 1e-15);
    let h = 1e-5;
    let fd: Vec<f64> = (0..theta.len())
        .map(|k| {
            let mut p = theta.clone();
            let mut m = theta.clone();
            p[k] += h;
            m[k] -= h;
            (loss_after(&p) - loss_after(&m)) / (2.0 * h)
        })
        .collect();
    let num: f64 = grad.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let den: f64 = fd.iter().map(|b| b * b).sum::<f64>().sqrt();
    assert!(num <= 1e-4 * den, "relative error {}", num / den);

    let (_, first) = meta_gradient(&obj, 1, &theta, lr, steps, true).unwrap();
    let gap: f64 = first.iter().zip(&grad).map(|(a, b)| (a - b).abs()).sum();
    assert!(gap > 1e-8, "first-order gradient should differ from the exact one");
}

#[test]
fn maml_lowers_post_adaptation_loss() {
    let model = tiny_model(1);
    let cfg = MetaConfig { inner_lr: 0.05, outer_lr: 1e-2, outer_iterations: 200, tasks_per_outer_step: 3, ..MetaConfig::maml() };
    let (_, trace) = maml_train(&model, &tiny_tasks(), &cfg).unwrap();
    assert_eq!(trace.mean_post_adaptation_mse.len(), 200);
    assert!(trace.mean_post_adaptation_mse[199] < 0.5 * trace.mean_post_adaptation_mse[0]);
    assert!(trace.to_csv().starts_with("outer_iter,mean_post_adaptation_mse\n0,"));
}

#[test]
fn meta_training_is_deterministic_for_a_seed() {
    let tasks = gen_face_proxy_tasks(5, 8, 2).unwrap();
    let model = build_model(
        MappingSpec::new(MappingVariant::SirenFirst { omega0: 30.0, width: 8 }, 2),
        vec![LayerSpec::new(8, Activation::Sine { omega0: 30.0 }), LayerSpec::output()],
        &mut SeededRng::new(0),
    )
    .unwrap();
    for cfg in [
        MetaConfig { outer_iterations: 5, tasks_per_outer_step: 2, ..MetaConfig::maml() },
        MetaConfig { outer_iterations: 5, tasks_per_outer_step: 2, ..MetaConfig::reptile() },
    ] {
        let (a, ta) = meta_train(&model, &tasks, &cfg).unwrap();
        let (b, tb) = meta_train(&model, &tasks, &cfg).unwrap();
        assert_eq!(a.theta().values(), b.theta().values());
        assert_eq!(ta.mean_post_adaptation_mse, tb.mean_post_adaptation_mse);
        let other = MetaConfig { seed: cfg.seed + 1, ..cfg.clone() };
        let (c, _) = meta_train(&model, &tasks, &other).unwrap();
        assert_ne!(a.theta().values(), c.theta().values());
    }
}

#[test]
fn finetune_curves_cover_every_step() {
    let tasks = gen_face_proxy_tasks(3, 8, 9).unwrap();
    let model = build_model(
        MappingSpec::new(MappingVariant::SirenFirst { omega0: 30.0, width: 8 }, 2),
        vec![LayerSpec::output()],
        &mut SeededRng::new(1),
    )
    .unwrap();
    let curve = finetune_eval(&model, &tasks, 4, &Optimizer::adam(1e-3)).unwrap();
    assert_eq!(curve.train_psnr.len(), 5);
    assert_eq!(curve.test_psnr.len(), 5);
    assert!(curve.train_psnr[4] > curve.train_psnr[0]);
    assert_eq!(curve.to_csv().lines().count(), 6);
    let pre = pretrain_single_task(&model, &tasks.tasks[0], 20).unwrap();
    assert_ne!(pre.theta().values(), model.theta().values());
}

#[test]
fn empty_task_sets_and_bad_configs_are_rejected() {
    let model = tiny_model(0);
    assert!(TaskSet::new(Vec::new(), "none").is_err());
    assert!(tiny_tasks().split_off(3).is_err());
    let bad = MetaConfig { inner_lr: -1.0, ..MetaConfig::maml() };
    assert!(maml_train(&model, &tiny_tasks(), &bad).is_err());
    let two_d = gen_face_proxy_tasks(2, 8, 0).unwrap();
    assert!(InrObjective::new(&model, &two_d).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn zero_inner_steps_reduce_to_the_plain_gradient(seed in any::<u64>(), task in 0usize..3) {
        let model = tiny_model(seed);
        let tasks = tiny_tasks();
        let obj = InrObjective::new(&model, &tasks).unwrap();
        let theta = model.theta().values().to_vec();
        let (l0, g0) = obj.loss_gradient(task, &theta).unwrap();
        for first_order in [false, true] {
            let (l, g) = meta_gradient(&obj, task, &theta, 0.1, 0, first_order).unwrap();
            prop_assert_eq!(l, l0);
            prop_assert_eq!(&g, &g0);
        }
    }
}
