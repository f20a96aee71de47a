use hamfin_core::evolution::{
    bs_closed_form, default_x_range, price_double_knock_out, price_down_and_out, price_vanilla, EvolutionConfig,
    OptionKind, PayoffSpec, SpotQuery,
};
use hamfin_core::{BSParams, GridSpec, MGParams};

const S0: f64 = 100.0;
const K: f64 = 100.0;
const R: f64 = 0.05;
const SIGMA: f64 = 0.2;

fn bs() -> BSParams {
    BSParams::new(R, SIGMA).unwrap()
}

fn wide_grid(n: usize) -> GridSpec {
    let (lo, hi) = default_x_range(S0, SIGMA, 1.0);
    GridSpec::new_1d(lo, hi, n).unwrap()
}

/// Discounted lognormal expectation of the call payoff by composite Simpson
/// quadrature over the standard normal variable.
fn call_by_quadrature(s0: f64, k: f64, r: f64, sigma: f64, t: f64) -> f64 {
    let n = 200_000;
    let (a, b) = (-12.0, 12.0);
    let h = (b - a) / n as f64;
    let f = |z: f64| {
        let st = s0 * ((r - 0.5 * sigma * sigma) * t + sigma * t.sqrt() * z).exp();
        (st - k).max(0.0) * (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
    };
    let mut sum = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(a + i as f64 * h);
    }
    (-r * t).exp() * sum * h / 3.0
}

/// Down-and-out call with barrier below the strike by the reflection
/// principle.
fn down_and_out_reflection(s: f64, k: f64, b: f64, r: f64, sigma: f64, t: f64) -> f64 {
    let nu = r - 0.5 * sigma * sigma;
    let image = b * b / s;
    bs_closed_form(s, k, r, sigma, t, OptionKind::Call)
        - (b / s).powf(2.0 * nu / (sigma * sigma)) * bs_closed_form(image, k, r, sigma, t, OptionKind::Call)
}

#[test]
fn closed_form_matches_quadrature() {
    for &(s, k, r, sigma, t) in &[(100.0, 100.0, 0.05, 0.2, 1.0), (90.0, 110.0, 0.01, 0.35, 2.0), (120.0, 80.0, 0.0, 0.1, 0.5)] {
        let exact = bs_closed_form(s, k, r, sigma, t, OptionKind::Call);
        let quad = call_by_quadrature(s, k, r, sigma, t);
        assert!((exact - quad).abs() < 1e-8, "{exact} vs {quad}");
    }
    let c = bs_closed_form(S0, K, R, SIGMA, 1.0, OptionKind::Call);
    assert!((c - 10.4506).abs() < 5e-4);
}

#[test]
fn crank_nicolson_call_and_parity() {
    let g = wide_grid(2049);
    let cfg = EvolutionConfig::crank_nicolson(1.0, 512);
    let q = [SpotQuery::spot(S0)];
    let call = price_vanilla(&bs(), &g, &PayoffSpec::call(K).unwrap(), &cfg, &q).unwrap().price_at[0].price;
    let put = price_vanilla(&bs(), &g, &PayoffSpec::put(K).unwrap(), &cfg, &q).unwrap().price_at[0].price;
    let exact = bs_closed_form(S0, K, R, SIGMA, 1.0, OptionKind::Call);
    assert!((call - exact).abs() / exact < 1e-3, "call {call} vs {exact}");
    let forward = S0 - K * (-R).exp();
    assert!(((call - put) - forward).abs() / forward < 5e-4);
}

#[test]
fn implicit_euler_is_first_order_in_time() {
    use hamfin_core::evolution::Scheme;
    let g = wide_grid(513);
    let exact = bs_closed_form(S0, K, R, SIGMA, 1.0, OptionKind::Call);
    let err = |steps: usize| {
        let cfg = EvolutionConfig { maturity: 1.0, n_steps: steps, scheme: Scheme::ImplicitEuler, smoothing: false };
        let p = price_vanilla(&bs(), &g, &PayoffSpec::call(K).unwrap(), &cfg, &[SpotQuery::spot(S0)]).unwrap();
        (p.price_at[0].price - exact).abs()
    };
    let (e1, e2) = (err(25), err(50));
    let order = (e1 / e2).log2();
    assert!(order > 0.7 && order < 1.3, "{order}");
}

#[test]
fn down_and_out_matches_reflection() {
    let g = wide_grid(2049);
    let cfg = EvolutionConfig::crank_nicolson(1.0, 512);
    let res = price_down_and_out(&bs(), &g, 80.0, &PayoffSpec::call(K).unwrap(), &cfg, &[SpotQuery::spot(S0)]).unwrap();
    let oracle = down_and_out_reflection(S0, K, 80.0, R, SIGMA, 1.0);
    let got = res.price_at[0].price;
    assert!((got - oracle).abs() / oracle < 3e-3, "{got} vs {oracle}");
}

#[test]
fn distant_barrier_reproduces_vanilla() {
    let g = wide_grid(1025);
    let cfg = EvolutionConfig::crank_nicolson(1.0, 256);
    let q = [SpotQuery::spot(S0)];
    let call = PayoffSpec::call(K).unwrap();
    let vanilla = price_vanilla(&bs(), &g, &call, &cfg, &q).unwrap().price_at[0].price;
    let below = price_down_and_out(&bs(), &g, 1.0, &call, &cfg, &q).unwrap().price_at[0].price;
    assert_eq!(vanilla, below);
    let dko = price_double_knock_out(&bs(), &g, 1.0, 1e6, &call, &cfg, &q).unwrap().price_at[0].price;
    assert_eq!(vanilla, dko);
}

#[test]
fn double_knock_out_dominated_and_monotone() {
    let g = wide_grid(1025);
    let cfg = EvolutionConfig::crank_nicolson(1.0, 256);
    let q = [SpotQuery::spot(S0)];
    let call = PayoffSpec::call(K).unwrap();
    let vanilla = price_vanilla(&bs(), &g, &call, &cfg, &q).unwrap().price_at[0].price;
    let single = price_down_and_out(&bs(), &g, 80.0, &call, &cfg, &q).unwrap().price_at[0].price;
    let dko = |lo: f64, hi: f64| price_double_knock_out(&bs(), &g, lo, hi, &call, &cfg, &q).unwrap().price_at[0].price;
    let base = dko(80.0, 140.0);
    assert!(base <= vanilla.min(single) + 1e-12);
    assert!(base > 0.0);
    assert!(dko(90.0, 140.0) <= base + 1e-12);
    assert!(dko(80.0, 160.0) >= base - 1e-12);
}

#[test]
fn double_knock_out_smooth_payoff_is_second_order() {
    let (a, b) = (S0.ln() - 0.25, S0.ln() + 0.25);
    let bump: Vec<(f64, f64)> = (0..=20_000)
        .map(|i| {
            let x = a + (b - a) * i as f64 / 20_000.0;
            let s = (std::f64::consts::PI * (x - a) / (b - a)).sin();
            (x, 10.0 * s * s)
        })
        .collect();
    let payoff = PayoffSpec::table(bump).unwrap();
    let price = |n: usize| {
        let g = GridSpec::new_1d(a, b, n).unwrap();
        let cfg = EvolutionConfig::crank_nicolson(0.25, 400);
        let res = price_double_knock_out(&bs(), &g, a.exp(), b.exp(), &payoff, &cfg, &[SpotQuery::spot(S0)]).unwrap();
        res.price_at[0].price
    };
    let (p1, p2, p3) = (price(17), price(33), price(65));
    let order = hamfin_core::convergence::richardson_order(p1, p2, p3, 2.0).unwrap();
    assert!((order - 2.0).abs() < 0.2, "{order}");
}

#[test]
fn mg_without_vol_of_vol_matches_black_scholes() {
    let v0: f64 = 0.04;
    let y0 = v0.ln();
    let (lo, hi) = default_x_range(S0, v0.sqrt(), 1.0);
    let g = GridSpec::new_2d(lo, hi, 513, y0 - 0.5, y0 + 0.5, 5).unwrap();
    let mg = MGParams { r: R, lambda: 0.0, mu: 0.0, zeta: 0.0, rho: 0.0, alpha: 1.0 };
    let cfg = EvolutionConfig::crank_nicolson(1.0, 200);
    let res = price_vanilla(&mg, &g, &PayoffSpec::call(K).unwrap(), &cfg, &[SpotQuery::with_variance(S0, v0)]).unwrap();
    let exact = bs_closed_form(S0, K, R, 0.2, 1.0, OptionKind::Call);
    assert!((res.price_at[0].price - exact).abs() / exact < 2e-3);
}

#[test]
fn pricing_reports_residual_order() {
    let g = wide_grid(1025);
    let cfg = EvolutionConfig::crank_nicolson(1.0, 64);
    let res = price_vanilla(&bs(), &g, &PayoffSpec::call(K).unwrap(), &cfg, &[]).unwrap();
    let order = res.diagnostics.residual_order.unwrap();
    assert!((order - 2.0).abs() < 0.2);
    assert!(res.field.values.iter().all(|v| v.is_finite()));
}
