//! The radial integral checked against a layer-cake form built from the exact
//! dispersion of the period-2 chain with cell values (0, 3).
//!
//! In d = 1, `I(λ) = Σ_θ Ψ^{1/p} ∫_{u>λ} (u − λ)^{-1/p} dρ(u)`. The upper band is
//! `E(k) = 3.5 + sqrt(2.25 + 2 + 2cos k)` on `[5, 6]`, where
//! `ρ(u) = 1/2 + (π − arccos c(u)) / 2π` with `c(u) = ((u − 3.5)² − 4.25) / 2`.

use std::f64::consts::PI;

use spectral_flow::asymptotics::theoretical_integral;
use spectral_flow::dos::{build_table, DosRoute};
use spectral_flow::model::ModelSpec;

fn rho_upper(u: f64) -> f64 {
    let c = (((u - 3.5).powi(2) - 4.25) / 2.0).clamp(-1.0, 1.0);
    0.5 + (PI - c.acos()) / (2.0 * PI)
}

/// p = 2, integrated by parts so the integrand stays bounded.
fn oracle(lambda: f64, psi: f64) -> f64 {
    let g = |u: f64| (u - lambda).powf(-0.5);
    let n = 200_000;
    let h = 1.0 / n as f64;
    let f = |u: f64| 0.5 * (u - lambda).powf(-1.5) * (rho_upper(u) - 0.5);
    let mut s = f(5.0) + f(6.0);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(5.0 + i as f64 * h);
    }
    let stieltjes = 0.5 * g(6.0) + s * h / 3.0;
    2.0 * psi.sqrt() * stieltjes
}

#[test]
fn period_two_matches_layer_cake() {
    for psi in [1.0, 2.5] {
        let model = ModelSpec::period_two([0.0, 3.0], psi, 2.0).unwrap();
        let table = build_table(&model, &DosRoute::Bloch { k_points: None }, 2001).unwrap();
        for lambda in [2.5, 3.5, 4.5] {
            let got = theoretical_integral(&table, &model, lambda).unwrap().value;
            let want = oracle(lambda, psi);
            assert!(
                (got - want).abs() < 1e-4 * want.max(1.0),
                "psi {psi}, lambda {lambda}: {got} vs {want}"
            );
        }
    }
}

#[test]
fn oracle_frozen_value() {
    // frozen from the oracle above
    assert!(
        (oracle(3.5, 1.0) - 0.709_938_8).abs() < 1e-6,
        "{}",
        oracle(3.5, 1.0)
    );
}
