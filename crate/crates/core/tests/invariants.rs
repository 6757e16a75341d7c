use mesoamp::circuits::{
    build_csvac_generator, measure_gain, solve_amplifier, solve_csvac, AmplifierConfig, CsvacConfig,
};
use mesoamp::device::{steady_state, GENERATOR_TOLERANCE};
use mesoamp::multistage::{optimize_gains, scheme1_with, total_power, Scheme1Options};
use mesoamp::powerfit::{evaluate_power, PowerFit};
use mesoamp::stochastic::{gillespie_simulate, stochastic_vout_relaxation};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn csvac_states_are_physical(v_in in -7.5f64..7.5, v_d in 5.0f64..25.0, gamma in 0.01f64..1.0) {
        let cfg = CsvacConfig::symmetric(v_d, gamma, 0.01);
        let s = solve_csvac(&cfg, v_in).unwrap();
        prop_assert!(s.v_out.abs() <= v_d + 1e-9);
        prop_assert!(s.residual.abs() < 1e-9);
        prop_assert!(s.power.total >= -1e-12);
        prop_assert_eq!(s.power.total, s.power.pmos + s.power.nmos);
        let load = s.current("CSVAC->RL").unwrap();
        let into = s.current("P->s").unwrap() + s.current("N->s").unwrap();
        prop_assert!((load - into).abs() < 1e-9);
    }

    #[test]
    fn csvac_generators_are_generators(v_in in -10.0f64..10.0, v_out in -15.0f64..15.0) {
        let g = build_csvac_generator(&CsvacConfig::default(), v_in, v_out).unwrap();
        prop_assert!(g.column_sum_residual() < GENERATOR_TOLERANCE);
        let p = steady_state(&g).unwrap().occupation_probabilities;
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn amplifier_output_stays_in_supply(v_in in -10.0f64..10.0, gamma_r in 0.001f64..0.1) {
        let cfg = AmplifierConfig { gamma_r, ..AmplifierConfig::default() };
        let s = solve_amplifier(&cfg, v_in).unwrap();
        prop_assert!(s.v_out >= 0.0 && s.v_out <= cfg.v_dd);
        prop_assert!(s.power.total >= -1e-12);
    }

    #[test]
    fn optimal_plan_beats_equal_split(a in 0.0f64..12.0, g in 1.0f64..4.0, k in 2usize..7) {
        let fit = PowerFit::simulated_csvac();
        let opt = optimize_gains(&fit, a, g, k).unwrap();
        let equal = total_power(&fit, a, &vec![g.powf(1.0 / k as f64); k]).unwrap();
        prop_assert!(opt.total_power <= equal.total_power * (1.0 + 1e-12));
        let raw = 1.0 - opt.total_power / evaluate_power(&fit, a, g);
        prop_assert!((raw - opt.savings_vs_single).abs() < 1e-12);
    }

    #[test]
    fn scheme1_history_is_monotone(a in 0.0f64..14.0, g in 1.0f64..5.0) {
        let o = scheme1_with(&PowerFit::simulated_csvac(), a, g, &Scheme1Options::default()).unwrap();
        prop_assert!(o.history[..o.plan.k].windows(2).all(|w| w[1] <= w[0]));
        if let Some(next) = o.history.get(o.plan.k) {
            prop_assert!(*next >= o.plan.total_power * (1.0 - 1e-9));
        }
    }
}

#[test]
fn gain_grows_with_escape_rate() {
    let mut last = 0.0;
    for gamma in [0.05, 0.2, 1.0, 5.0] {
        let g = measure_gain(&CsvacConfig::default().with_gamma(gamma), 2.0, 32).unwrap().gain;
        assert!(g > last, "gain {g} at Γ = {gamma}");
        last = g;
    }
}

#[test]
fn seeded_simulations_repeat() {
    let cfg = CsvacConfig::default();
    let a = stochastic_vout_relaxation(&cfg, 2.0, 99, 0.5, 500).unwrap();
    let b = stochastic_vout_relaxation(&cfg, 2.0, 99, 0.5, 500).unwrap();
    assert_eq!(a, b);
    let g = build_csvac_generator(&cfg, 0.0, 0.0).unwrap();
    assert_eq!(gillespie_simulate(&g, 0, 100.0, 5).unwrap(), gillespie_simulate(&g, 0, 100.0, 5).unwrap());
}
