use crate::error::{Error, Result};

pub const MAX_ORDER: i32 = 64;
pub const MAX_ARGUMENT: f64 = 50.0;

const SERIES_LIMIT: f64 = 12.0;

/// Bessel function of the first kind J_n(x) for integer order.
pub fn bessel_j(order: i32, x: f64) -> Result<f64> {
    if order.abs() > MAX_ORDER {
        return Err(Error::Domain(format!(
            "Bessel order {order} outside [-{MAX_ORDER}, {MAX_ORDER}]"
        )));
    }
    if !x.is_finite() || x.abs() > MAX_ARGUMENT {
        return Err(Error::Domain(format!(
            "Bessel argument {x} outside [-{MAX_ARGUMENT}, {MAX_ARGUMENT}]"
        )));
    }
    let n = order.unsigned_abs() as usize;
    // J_{-n}(x) = (-1)^n J_n(x) and J_n(-x) = (-1)^n J_n(x)
    let mut sign = 1.0;
    if order < 0 && n % 2 == 1 {
        sign = -sign;
    }
    if x < 0.0 && n % 2 == 1 {
        sign = -sign;
    }
    let ax = x.abs();
    let value = if ax <= SERIES_LIMIT {
        series(n, ax)
    } else {
        miller(n, ax)
    };
    Ok(sign * value)
}

/// J_n(x) for every order in `0..=max_order` at once.
pub fn bessel_j_table(max_order: usize, x: f64) -> Result<Vec<f64>> {
    (0..=max_order)
        .map(|n| {
            let n = i32::try_from(n).map_err(|_| Error::Domain(format!("Bessel order {n}")))?;
            bessel_j(n, x)
        })
        .collect()
}

fn series(n: usize, x: f64) -> f64 {
    if x == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    let half = 0.5 * x;
    let mut term = 1.0;
    for k in 1..=n {
        term *= half / k as f64;
    }
    let q = -half * half;
    let mut sum = term;
    let mut k = 0usize;
    loop {
        k += 1;
        term *= q / (k as f64 * (k + n) as f64);
        sum += term;
        if term.abs() <= 1e-17 * sum.abs() || k > 200 {
            break;
        }
    }
    sum
}

fn miller(n: usize, x: f64) -> f64 {
    let start = 2 * ((n.max(x as usize) + 40) / 2);
    let two_over_x = 2.0 / x;
    let mut next = 0.0;
    let mut current = 1e-30;
    let mut wanted = 0.0;
    let mut norm = 0.0;
    for k in (1..=start).rev() {
        let prev = k as f64 * two_over_x * current - next;
        next = current;
        current = prev;
        if current.abs() > 1e250 {
            current *= 1e-250;
            next *= 1e-250;
            wanted *= 1e-250;
            norm *= 1e-250;
        }
        // `current` now holds the unnormalized J_{k-1}
        if k - 1 == n {
            wanted = current;
        }
        if (k - 1) % 2 == 0 && k > 1 {
            norm += 2.0 * current;
        }
    }
    norm += current;
    wanted / norm
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn values_at_origin() {
        assert_eq!(bessel_j(0, 0.0).unwrap(), 1.0);
        for n in [-5, -1, 1, 2, 64] {
            assert_eq!(bessel_j(n, 0.0).unwrap(), 0.0);
        }
    }

    #[test]
    fn reference_values() {
        assert!((bessel_j(0, 1.0).unwrap() - 0.765_197_686_557_966_6).abs() < 1e-12);
        assert!((bessel_j(1, 1.0).unwrap() - 0.440_050_585_744_933_5).abs() < 1e-12);
        // both sides of the series/recurrence switch
        let cases = [
            (0, 20.0, 0.167_024_664_340_583_22),
            (3, 15.0, -0.194_018_257_820_122_66),
            (2, 12.0, -0.084_930_494_878_604_75),
            (5, 30.0, -0.143_240_295_512_077_06),
            (10, 49.5, -0.098_281_253_961_839_36),
            (40, 45.0, 0.126_600_621_268_202_04),
        ];
        for (n, x, want) in cases {
            let got = bessel_j(n, x).unwrap();
            assert!((got - want).abs() < 1e-11, "J_{n}({x}) = {got}, want {want}");
        }
    }

    #[test]
    fn parity() {
        let a = bessel_j(-3, 2.0).unwrap();
        let b = bessel_j(3, 2.0).unwrap();
        assert!((a + b).abs() < 1e-12);
        assert!((bessel_j(3, -2.0).unwrap() + b).abs() < 1e-12);
        assert!((bessel_j(4, -2.0).unwrap() - bessel_j(4, 2.0).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn domain_checks() {
        assert!(matches!(bessel_j(65, 1.0), Err(Error::Domain(_))));
        assert!(matches!(bessel_j(0, 50.5), Err(Error::Domain(_))));
        assert!(matches!(bessel_j(0, f64::NAN), Err(Error::Domain(_))));
        assert!(bessel_j(64, 50.0).is_ok());
    }

    #[test]
    fn regimes_agree_near_switch() {
        for n in 0..20 {
            let s = series(n, 12.0);
            let m = miller(n, 12.0);
            assert!((s - m).abs() < 1e-10, "order {n}: {s} vs {m}");
        }
    }
}
