use inrlab_core::numkit::{bessel_j, dft, idft, naive_dft, sym_eig, Complex64, Matrix, SeededRng};
use proptest::prelude::*;

fn random_orthogonal(n: usize, rng: &mut SeededRng) -> Matrix {
    // Gram–Schmidt on a random matrix
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(n);
    while q.len() < n {
        let mut v: Vec<f64> = (0..n).map(|_| rng.standard_normal()).collect();
        for u in &q {
            let p: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(u).for_each(|(a, b)| *a -= p * b);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            q.push(v.iter().map(|x| x / norm).collect());
        }
    }
    Matrix::from_fn(n, n, |i, j| q[j][i])
}

#[test]
fn eig_recovers_constructed_spectrum() {
    let mut rng = SeededRng::new(17);
    let n = 50;
    let q = random_orthogonal(n, &mut rng);
    let mut lambda: Vec<f64> = (0..n).map(|_| rng.uniform_in(-5.0, 5.0)).collect();
    let d = Matrix::from_fn(n, n, |i, j| if i == j { lambda[i] } else { 0.0 });
    let a = q.matmul(&d).unwrap().matmul(&q.transpose()).unwrap();
    let a = Matrix::from_fn(n, n, |i, j| 0.5 * (a.get(i, j) + a.get(j, i)));
    let eig = sym_eig(&a).unwrap();
    lambda.sort_by(|x, y| y.total_cmp(x));
    for (got, want) in eig.eigenvalues.iter().zip(&lambda) {
        assert!((got - want).abs() < 1e-9, "{got} vs {want}");
    }
    assert!(eig.residual(&a) <= 1e-8 * a.frobenius_norm());
    let vtv = eig.eigenvectors.transpose().matmul(&eig.eigenvectors).unwrap();
    for i in 0..n {
        for j in 0..n {
            let want = if i == j { 1.0 } else { 0.0 };
            assert!((vtv.get(i, j) - want).abs() < 1e-10);
        }
    }
}

#[test]
fn eig_handles_repeated_and_zero_eigenvalues() {
    let mut rng = SeededRng::new(3);
    let n = 30;
    let q = random_orthogonal(n, &mut rng);
    let lambda: Vec<f64> = (0..n).map(|i| if i < 10 { 2.0 } else if i < 20 { 0.0 } else { -1.0 }).collect();
    let d = Matrix::from_fn(n, n, |i, j| if i == j { lambda[i] } else { 0.0 });
    let a = q.matmul(&d).unwrap().matmul(&q.transpose()).unwrap();
    let a = Matrix::from_fn(n, n, |i, j| 0.5 * (a.get(i, j) + a.get(j, i)));
    let eig = sym_eig(&a).unwrap();
    for (i, v) in eig.eigenvalues.iter().enumerate() {
        let want = if i < 10 { 2.0 } else if i < 20 { 0.0 } else { -1.0 };
        assert!((v - want).abs() < 1e-10);
    }
}

#[test]
fn jacobi_anger_identity() {
    for beta in [0.0, 0.3, 1.0, 2.5, 5.0] {
        let table: Vec<f64> = (-30..=30).map(|n| bessel_j(n, beta).unwrap()).collect();
        for k in 0..64 {
            let theta = 2.0 * std::f64::consts::PI * k as f64 / 64.0;
            let lhs = Complex64::from_polar(1.0, beta * theta.sin());
            let rhs: Complex64 = (-30..=30)
                .zip(&table)
                .map(|(n, j)| Complex64::from_polar(*j, n as f64 * theta))
                .sum();
            assert!((lhs - rhs).norm() <= 1e-9);
        }
        let sum_sq: f64 = table.iter().map(|j| j * j).sum();
        assert!((sum_sq - 1.0).abs() <= 1e-9);
    }
}

#[test]
fn bessel_recurrence() {
    for n in 1..=20 {
        for step in 1..=99 {
            let x = 0.1 * step as f64 + 0.1;
            let lhs = bessel_j(n - 1, x).unwrap() + bessel_j(n + 1, x).unwrap();
            let rhs = 2.0 * n as f64 / x * bessel_j(n, x).unwrap();
            assert!((lhs - rhs).abs() <= 1e-9, "n={n} x={x}");
        }
    }
}

#[test]
fn random_length_64_matches_naive() {
    let mut rng = SeededRng::new(5);
    let x: Vec<f64> = (0..64).map(|_| rng.standard_normal()).collect();
    let fast = dft(&x).unwrap();
    for (a, b) in fast.bins.iter().zip(naive_dft(&x)) {
        assert!((a - b).norm() < 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn parseval_and_round_trip(seed in any::<u64>(), log_n in 0u32..=10, odd in 0usize..3) {
        let n = if odd == 0 { (1usize << log_n) + 3 } else { 1usize << log_n };
        let n = n.min(1024);
        let mut rng = SeededRng::new(seed);
        let x: Vec<f64> = (0..n).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
        let spec = dft(&x).unwrap();
        prop_assert_eq!(spec.len(), n);
        let time: f64 = x.iter().map(|v| v * v).sum();
        let freq: f64 = spec.total_energy() / n as f64;
        prop_assert!((time - freq).abs() <= 1e-9 * time.max(1e-300));
        let back = idft(&spec);
        for (a, b) in back.iter().zip(&x) {
            prop_assert!((a.re - b).abs() <= 1e-10 && a.im.abs() <= 1e-10);
        }
    }

    #[test]
    fn eig_trace_matches(seed in any::<u64>(), n in 1usize..24) {
        let mut rng = SeededRng::new(seed);
        let b = Matrix::from_fn(n, n, |_, _| rng.uniform_in(-1.0, 1.0));
        let a = Matrix::from_fn(n, n, |i, j| b.get(i, j) + b.get(j, i));
        let eig = sym_eig(&a).unwrap();
        let sum: f64 = eig.eigenvalues.iter().sum();
        prop_assert!((sum - a.trace()).abs() <= 1e-9 * a.frobenius_norm().max(1.0));
        prop_assert!(eig.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(eig.residual(&a) <= 1e-8 * a.frobenius_norm().max(1e-300));
    }
}
