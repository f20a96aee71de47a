use hamfin_core::evolution::{bs_closed_form, default_x_range, price_vanilla, EvolutionConfig, OptionKind, PayoffSpec, SpotQuery};
use hamfin_core::simulate::{martingale_test, mc_price, simulate, GbmStepping, SDEParams, SdeModel};
use hamfin_core::{BSParams, GridSpec, MGParams};

fn risk_neutral_gbm() -> SDEParams {
    SDEParams { model: SdeModel::Gbm { sigma: 0.2, stepping: GbmStepping::Exact }, phi: 0.05, s0: 100.0 }
}

#[test]
fn discounted_price_is_a_martingale_across_seeds() {
    let passes = (0..10u64)
        .filter(|&seed| {
            let e = simulate(&risk_neutral_gbm(), 1.0, 1, 100_000, seed).unwrap();
            martingale_test(&e, 0.05, 1.0).z_score.abs() <= 3.0
        })
        .count();
    assert!(passes >= 9, "{passes}");
}

#[test]
fn monte_carlo_agrees_with_pde_and_closed_form() {
    let e = simulate(&risk_neutral_gbm(), 1.0, 1, 400_000, 2024).unwrap();
    let call = PayoffSpec::call(100.0).unwrap();
    let (mc, se) = mc_price(&e, &call, 0.05, 1.0);
    let (lo, hi) = default_x_range(100.0, 0.2, 1.0);
    let g = GridSpec::new_1d(lo, hi, 1025).unwrap();
    let pde = price_vanilla(&BSParams::new(0.05, 0.2).unwrap(), &g, &call, &EvolutionConfig::crank_nicolson(1.0, 256), &[SpotQuery::spot(100.0)])
        .unwrap()
        .price_at[0]
        .price;
    let exact = bs_closed_form(100.0, 100.0, 0.05, 0.2, 1.0, OptionKind::Call);
    assert!((mc - pde).abs() <= 3.0 * se + 1e-3 * pde, "{mc} {pde} {se}");
    assert!((mc - exact).abs() <= 3.0 * se);
}

#[test]
fn mg_without_vol_of_vol_reproduces_black_scholes() {
    let params = MGParams { r: 0.05, lambda: 0.0, mu: 0.0, zeta: 0.0, rho: 0.0, alpha: 1.0 };
    let p = SDEParams { model: SdeModel::Mg { v0: 0.04, params }, phi: 0.05, s0: 100.0 };
    let e = simulate(&p, 1.0, 50, 100_000, 8).unwrap();
    let (mc, se) = mc_price(&e, &PayoffSpec::call(100.0).unwrap(), 0.05, 1.0);
    let exact = bs_closed_form(100.0, 100.0, 0.05, 0.2, 1.0, OptionKind::Call);
    assert!((mc - exact).abs() <= 3.0 * se + 1e-3 * exact);
    assert_eq!(e.floor_hits, 0);
}

#[test]
fn ensembles_are_reproducible() {
    let a = simulate(&risk_neutral_gbm(), 1.0, 4, 1000, 42).unwrap();
    let b = simulate(&risk_neutral_gbm(), 1.0, 4, 1000, 42).unwrap();
    let c = simulate(&risk_neutral_gbm(), 1.0, 4, 1000, 43).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.terminal_s, c.terminal_s);
}
