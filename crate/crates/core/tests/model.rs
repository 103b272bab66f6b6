use inrlab_core::model::{build_model, Activation, Coords, InrModel, LayerSpec, MappingSpec, MappingVariant};
use inrlab_core::numkit::{Matrix, SeededRng};
use proptest::prelude::*;

fn variants() -> Vec<InrModel> {
    let mut rng = SeededRng::new(11);
    let specs: Vec<(MappingSpec, Vec<LayerSpec>)> = vec![
        (
            MappingSpec::new(MappingVariant::FourierRandom { sigma: 2.0, rows: 3 }, 2),
            vec![LayerSpec::new(6, Activation::Relu), LayerSpec::new(5, Activation::Relu), LayerSpec::output()],
        ),
        (
            MappingSpec::new(MappingVariant::FourierRandom { sigma: 2.0, rows: 3 }, 2).with_trainable(true),
            vec![LayerSpec::new(4, Activation::Sine { omega0: 2.0 }), LayerSpec::output()],
        ),
        (
            MappingSpec::new(MappingVariant::SirenFirst { omega0: 30.0, width: 6 }, 2),
            vec![LayerSpec::new(6, Activation::Sine { omega0: 30.0 }), LayerSpec::output()],
        ),
        (
            MappingSpec::new(MappingVariant::SingleFrequency { f0: 0.5 }, 2).with_trainable(true),
            vec![
                LayerSpec::new(5, Activation::Polynomial { coeffs: vec![0.1, 1.0, 0.3, -0.2] }),
                LayerSpec::output(),
            ],
        ),
        (
            MappingSpec::new(MappingVariant::FourierDeterministic { levels: 2 }, 1).with_trainable(true),
            vec![LayerSpec::new(3, Activation::Identity), LayerSpec::output()],
        ),
        (
            MappingSpec::new(
                MappingVariant::Explicit {
                    omega: Matrix::from_rows(&[vec![1.0], vec![3.0]]).unwrap(),
                    phase: vec![0.2, -0.4],
                },
                1,
            )
            .with_trainable(true),
            vec![LayerSpec::new(3, Activation::Sine { omega0: 1.0 }), LayerSpec::output()],
        ),
    ];
    specs
        .into_iter()
        .map(|(m, l)| build_model(m, l, &mut rng).unwrap())
        .collect()
}

fn probes(dim: usize, n: usize, seed: u64) -> Coords {
    let mut rng = SeededRng::new(seed);
    let data = (0..n * dim).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
    Coords::new(dim, data).unwrap()
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let norm = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / norm.max(1e-12)
}

#[test]
fn param_gradient_matches_central_differences() {
    for model in variants() {
        let coords = probes(model.input_dim(), 4, 3);
        let theta = model.theta().values().to_vec();
        for i in 0..coords.len() {
            let r = coords.point(i);
            let g = model.param_gradient(r).unwrap();
            let one = Coords::new(r.len(), r.to_vec()).unwrap();
            let mut fd = vec![0.0; theta.len()];
            for (k, f) in fd.iter_mut().enumerate() {
                let h = 1e-4;
                let mut tp = theta.clone();
                tp[k] += h;
                let mut tm = theta.clone();
                tm[k] -= h;
                *f = (model.forward_with(&tp, &one).unwrap()[0] - model.forward_with(&tm, &one).unwrap()[0]) / (2.0 * h);
            }
            let err = rel_err(g.values(), &fd);
            assert!(err < 1e-5, "{:?}: relative error {err}", model.mapping().variant);
        }
    }
}

#[test]
fn batched_and_per_sample_gradients_agree() {
    for model in variants() {
        let coords = probes(model.input_dim(), 17, 4);
        let targets: Vec<f64> = (0..17).map(|i| (i as f64 * 0.3).sin()).collect();
        let theta = model.theta().values();
        let (loss, grad) = model.mse_and_gradient(theta, &coords, &targets).unwrap();
        let out = model.forward(&coords).unwrap();
        let want_loss = out.iter().zip(&targets).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / 17.0;
        assert!((loss - want_loss).abs() < 1e-14);
        let mut want = vec![0.0; theta.len()];
        for i in 0..17 {
            let g = model.param_gradient(coords.point(i)).unwrap();
            for (w, gk) in want.iter_mut().zip(g.values()) {
                *w += 2.0 * (out[i] - targets[i]) / 17.0 * gk;
            }
        }
        for (a, b) in grad.iter().zip(&want) {
            assert!((a - b).abs() <= 1e-10 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }
}

#[test]
fn zero_theta_gives_zero_output() {
    let model = &variants()[2];
    let zero = model.with_theta_values(vec![0.0; model.param_count()]).unwrap();
    let out = zero.forward(&probes(2, 9, 1)).unwrap();
    assert!(out.iter().all(|&y| y == 0.0));
}

#[test]
fn hand_computed_relu_network() {
    // f(r) = w2·relu(W1·γ(r) + b1) + b2 with γ(r) = sin(r) for a 1-row explicit map
    let mapping = MappingSpec::new(
        MappingVariant::Explicit {
            omega: Matrix::from_rows(&[vec![1.0]]).unwrap(),
            phase: vec![0.0],
        },
        1,
    );
    let layers = vec![LayerSpec::new(2, Activation::Relu), LayerSpec::output()];
    // W1 = [2, -1], b1 = [0, 0.5], w2 = [1, 3], b2 = -0.25
    let theta = vec![2.0, -1.0, 0.0, 0.5, 1.0, 3.0, -0.25];
    let model = InrModel::from_parts(mapping, layers, theta, vec![1.0, 0.0]).unwrap();
    let xs = [-1.0, -0.5, 0.0, 0.5, 1.0];
    let out = model.forward(&Coords::new(1, xs.to_vec()).unwrap()).unwrap();
    for (x, y) in xs.iter().zip(out) {
        let s = f64::sin(*x);
        let want = (2.0 * s).max(0.0) + 3.0 * (0.5 - s).max(0.0) - 0.25;
        assert!((y - want).abs() < 1e-15);
    }
}

#[test]
fn linear_model_gradient_is_feature_map() {
    let mapping = MappingSpec::new(
        MappingVariant::Explicit {
            omega: Matrix::from_rows(&[vec![1.0, 0.0], vec![0.5, 2.0]]).unwrap(),
            phase: vec![0.1, 0.0],
        },
        2,
    );
    let model = build_model(mapping, vec![LayerSpec::output()], &mut SeededRng::new(0)).unwrap();
    let r = [0.3, -0.7];
    let g = model.param_gradient(&r).unwrap();
    let want = [(0.3f64 + 0.1).sin(), (0.15f64 - 1.4).sin(), 1.0];
    for (a, b) in g.values().iter().zip(want) {
        assert!((a - b).abs() < 1e-15);
    }
}

#[test]
fn relu_kink_uses_zero_subgradient() {
    let mapping = MappingSpec::new(
        MappingVariant::Explicit {
            omega: Matrix::from_rows(&[vec![1.0]]).unwrap(),
            phase: vec![0.0],
        },
        1,
    );
    let layers = vec![LayerSpec::new(1, Activation::Relu), LayerSpec::output()];
    let model = InrModel::from_parts(mapping, layers, vec![1.0, 0.0, 1.0, 0.0], vec![1.0, 0.0]).unwrap();
    let g = model.param_gradient(&[0.0]).unwrap();
    assert_eq!(g.values(), &[0.0, 0.0, 0.0, 1.0]);
}

#[test]
fn linearization_is_exact_at_theta0_and_linear_in_delta() {
    let model = &variants()[2];
    let coords = probes(2, 12, 8);
    let same = model.linearized_predict(model.theta(), &coords).unwrap();
    assert_eq!(same, model.forward(&coords).unwrap());

    let mut rng = SeededRng::new(2);
    let dir: Vec<f64> = (0..model.param_count()).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
    let unit = model.theta().with_values(dir.iter().map(|v| v / norm).collect()).unwrap();
    let base = model.forward(&coords).unwrap();
    let p1 = model.linearized_predict(&model.theta().add_scaled(1e-3, &unit).unwrap(), &coords).unwrap();
    let p2 = model.linearized_predict(&model.theta().add_scaled(2e-3, &unit).unwrap(), &coords).unwrap();
    for i in 0..coords.len() {
        let v1 = p1[i] - base[i];
        let v2 = p2[i] - base[i];
        assert!((v2 - 2.0 * v1).abs() < 1e-12);
    }

    // deviation from the true network shrinks quadratically
    let mut errs = Vec::new();
    for scale in [1e-2, 1e-3, 1e-4] {
        let theta = model.theta().add_scaled(scale, &unit).unwrap();
        let lin = model.linearized_predict(&theta, &coords).unwrap();
        let exact = model.forward_with(theta.values(), &coords).unwrap();
        errs.push(lin.iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
    }
    for w in errs.windows(2) {
        let ratio = w[0] / w[1];
        assert!(ratio > 50.0 && ratio < 200.0, "ratio {ratio} from {errs:?}");
    }
}

#[test]
fn doubling_omega0_doubles_first_layer_frequency() {
    use inrlab_core::numkit::dft;
    let n = 512;
    let coords = Coords::line(n, n as f64 / 2.0);
    let mut peaks = Vec::new();
    for omega0 in [10.0, 20.0] {
        let mapping = MappingSpec::new(MappingVariant::SirenFirst { omega0, width: 1 }, 1);
        // weight π (fixed) so unit 0 is sin(ω₀ π r) on [0, 2)
        let model = InrModel::from_parts(mapping, vec![LayerSpec::output()], vec![std::f64::consts::PI, 0.0, 1.0, 0.0], vec![]).unwrap();
        let out = model.forward(&coords).unwrap();
        let mags = dft(&out).unwrap().magnitudes();
        let peak = (1..n / 2).max_by(|&a, &b| mags[a].total_cmp(&mags[b])).unwrap();
        peaks.push(peak);
    }
    assert_eq!(peaks[1], 2 * peaks[0]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn build_is_deterministic(seed in any::<u64>(), width in 1usize..9) {
        let m = MappingSpec::new(MappingVariant::SirenFirst { omega0: 30.0, width }, 2);
        let l = vec![LayerSpec::new(width, Activation::Sine { omega0: 30.0 }), LayerSpec::output()];
        let a = build_model(m.clone(), l.clone(), &mut SeededRng::new(seed)).unwrap();
        let b = build_model(m, l, &mut SeededRng::new(seed)).unwrap();
        prop_assert_eq!(a.theta().values(), b.theta().values());
    }

    #[test]
    fn jacobian_rows_match_param_gradient(x in -1.0f64..1.0, y in -1.0f64..1.0, batch in 1usize..5) {
        let model = &variants()[1];
        let coords = Coords::new(2, vec![x, y, y, x, 0.0, 0.5]).unwrap();
        let j = model.jacobian(&coords, batch).unwrap();
        for i in 0..3 {
            let g = model.param_gradient(coords.point(i)).unwrap();
            prop_assert_eq!(j.row(i), g.values());
        }
    }
}
