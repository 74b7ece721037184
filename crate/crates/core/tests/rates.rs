use efc::measures::{CoagulationMeasure, SplittingMeasure};
use efc::rates::{
    coag_rate_nk, coag_row, coag_row_sequential, lambda_nk, phi_lambda, phi_lambda_by, phi_mu,
    rate_table, tail_coag_rate, total_coag_rate, total_coag_rate_by, SumMethod,
};
use proptest::prelude::*;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

/// B(k-1, n-k+1) = (k-2)!(n-k)!/(n-1)! from exact binomials.
fn beta_int(n: u64, k: u64) -> f64 {
    let c = (0..k - 2).fold(1u128, |acc, i| acc * (n - 2 - i) as u128 / (i + 1) as u128);
    1.0 / ((n - 1) as f64 * c as f64)
}

/// ψ(n) - ψ(k-1) = Σ_{j=k-1}^{n-1} 1/j.
fn digamma_diff(n: u64, k: u64) -> f64 {
    (k - 1..n).map(|j| 1.0 / j as f64).sum()
}

/// ψ'(k-1) - ψ'(n) = Σ_{j=k-1}^{n-1} 1/j².
fn trigamma_diff(n: u64, k: u64) -> f64 {
    (k - 1..n).map(|j| 1.0 / (j as f64).powi(2)).sum()
}

/// ∫ x^{k-2}(1-x)^{n-k} ln(1/x) dx by composite Simpson in t = ln(1/x).
fn brute_force_log_moment(n: u64, k: u64, panels: usize) -> f64 {
    let f = |t: f64| {
        let x = (-t).exp();
        // dx = x dt
        x.powi(k as i32 - 1) * (1.0 - x).powi((n - k) as i32) * t
    };
    let (a, b) = (0.0, 80.0);
    let h = (b - a) / panels as f64;
    let mut s = f(a) + f(b);
    for i in 1..panels {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

#[test]
fn uniform_examples() {
    let u = CoagulationMeasure::uniform(1.0).unwrap();
    assert!(rel(lambda_nk(&u, 2, 2).unwrap(), 1.0) < 1e-14);
    assert!(rel(lambda_nk(&u, 3, 2).unwrap(), 0.5) < 1e-14);
    assert!(rel(lambda_nk(&u, 4, 3).unwrap(), 1.0 / 6.0) < 1e-14);
    assert!(rel(coag_rate_nk(&u, 4, 3).unwrap(), 2.0 / 3.0) < 1e-14);
    assert!(rel(coag_rate_nk(&u, 2, 2).unwrap(), 1.0) < 1e-14);
    assert!(rel(total_coag_rate(&u, 3).unwrap(), 2.0) < 1e-14);
    assert_eq!(total_coag_rate(&u, 1).unwrap(), 0.0);
    assert!(rel(total_coag_rate(&u, 2).unwrap(), 1.0) < 1e-14);
    assert!(rel(phi_lambda(&u, 4).unwrap(), 13.0 / 3.0) < 1e-14);
    assert!(rel(tail_coag_rate(&u, 3, 0.9).unwrap(), 0.5) < 1e-14);
}

#[test]
fn invalid_indices_rejected() {
    let u = CoagulationMeasure::uniform(1.0).unwrap();
    assert!(lambda_nk(&u, 3, 1).is_err());
    assert!(lambda_nk(&u, 3, 4).is_err());
    assert!(tail_coag_rate(&u, 10, 1.0).is_err());
    assert!(tail_coag_rate(&u, 1, 0.5).is_err());
}

#[test]
fn log_power_beta_two_closed_form() {
    let lam = CoagulationMeasure::log_power(1.5, 2.0).unwrap();
    for n in [2u64, 3, 10, 37, 60] {
        for k in 2..=n {
            let exact = 1.5 * beta_int(n, k) * digamma_diff(n, k);
            let got = lambda_nk(&lam, n, k).unwrap();
            assert!(rel(got, exact) < 1e-10, "n={n} k={k}: {got} vs {exact}");
        }
    }
}

#[test]
fn log_power_beta_three_closed_form() {
    let lam = CoagulationMeasure::log_power(1.0, 3.0).unwrap();
    for n in [2u64, 5, 20, 60] {
        for k in 2..=n {
            let d = digamma_diff(n, k);
            let exact = beta_int(n, k) * (d * d + trigamma_diff(n, k));
            let got = lambda_nk(&lam, n, k).unwrap();
            assert!(rel(got, exact) < 1e-10, "n={n} k={k}: {got} vs {exact}");
        }
    }
}

#[test]
fn quadrature_oracle_at_fifty() {
    let lam = CoagulationMeasure::log_power(1.0, 2.0).unwrap();
    let brute = 1225.0 * brute_force_log_moment(50, 2, 10_000);
    let harmonic: f64 = (1..50).map(|j| 1.0 / j as f64).sum();
    let got = coag_rate_nk(&lam, 50, 2).unwrap();
    assert!(rel(got, brute) < 1e-8, "{got} vs {brute}");
    assert!(rel(got, 25.0 * harmonic) < 1e-10);
}

#[test]
fn phi_lambda_log_power_growth() {
    // Φ_Λ(n)/(n (ln n)^3) → 1/3 for c = 1, β = 3.
    let lam = CoagulationMeasure::log_power(1.0, 3.0).unwrap();
    let n = 1_000_000u64;
    let ratio = phi_lambda(&lam, n).unwrap() / (n as f64 * (n as f64).ln().powi(3));
    assert!((ratio - 1.0 / 3.0).abs() < 0.1 / 3.0, "{ratio}");
}

#[test]
fn phi_mu_examples() {
    let mu = SplittingMeasure::log_power(1.0, 1.0).unwrap();
    assert!(rel(phi_mu(&mu, 2), 2f64.ln()) < 1e-14);
    assert!(rel(phi_mu(&mu, 3), 1.5 * 2f64.ln() + 3f64.ln()) < 1e-14);
    assert!((phi_mu(&mu, 3) - 2.138_333).abs() < 1e-6);
    assert_eq!(phi_mu(&SplittingMeasure::zero(), 100), 0.0);
}

#[test]
fn tail_rate_bound() {
    let lam = CoagulationMeasure::log_power(1.0, 2.0).unwrap();
    let v = tail_coag_rate(&lam, 200, 0.5).unwrap();
    assert!(v > 0.0 && v <= 2.0 + 0.1, "{v}");
}

#[test]
fn row_caches_agree() {
    let lam = CoagulationMeasure::log_power(2.0, 1.5).unwrap();
    for n in [2u64, 30, 513, 2000] {
        let a = coag_row(&lam, n).unwrap();
        let b = coag_row_sequential(&lam, n).unwrap();
        assert_eq!(a.len(), (n - 1) as usize);
        for (x, y) in a.iter().zip(b.iter()) {
            assert!(rel(*x, *y) < 1e-12);
        }
        let t = rate_table(&lam, n).unwrap();
        assert!(rel(t.rate(2), a[0]) < 1e-12);
    }
}

#[test]
fn large_n_methods_agree() {
    let lams = [
        CoagulationMeasure::uniform(1.0).unwrap(),
        CoagulationMeasure::log_power(1.0, 2.0).unwrap(),
    ];
    for lam in &lams {
        for n in [1000u64, 5000] {
            let d = phi_lambda_by(lam, n, SumMethod::DirectSum).unwrap();
            let i = phi_lambda_by(lam, n, SumMethod::IntegralIdentity).unwrap();
            assert!(rel(d, i) < 1e-8);
            let d = total_coag_rate_by(lam, n, SumMethod::DirectSum).unwrap();
            let i = total_coag_rate_by(lam, n, SumMethod::IntegralIdentity).unwrap();
            assert!(rel(d, i) < 1e-8);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    // A block-counting chain is consistent: λ_{n,k} = λ_{n+1,k} + λ_{n+1,k+1}.
    #[test]
    fn consistency_recurrence(
        family in 0usize..3,
        c in 0.2f64..4.0,
        beta in 1.1f64..4.0,
        n in 2u64..300,
        kf in 0.0f64..1.0,
    ) {
        let lam = match family {
            0 => CoagulationMeasure::uniform(c).unwrap(),
            1 => CoagulationMeasure::log_power(c, beta).unwrap(),
            _ => CoagulationMeasure::beta_density(beta, c, 1.0).unwrap(),
        };
        let k = 2 + ((n - 2) as f64 * kf) as u64;
        let lhs = lambda_nk(&lam, n, k).unwrap();
        let rhs = lambda_nk(&lam, n + 1, k).unwrap() + lambda_nk(&lam, n + 1, k + 1).unwrap();
        prop_assert!(rel(lhs, rhs) < 1e-9, "n={} k={} {} vs {}", n, k, lhs, rhs);
    }

    #[test]
    fn rates_positive_and_phi_dominates_total(c in 0.1f64..3.0, beta in 1.1f64..4.0, n in 2u64..400) {
        let lam = CoagulationMeasure::log_power(c, beta).unwrap();
        let total = total_coag_rate(&lam, n).unwrap();
        let phi = phi_lambda(&lam, n).unwrap();
        prop_assert!(total > 0.0);
        prop_assert!(phi >= total * (1.0 - 1e-12));
    }
}
