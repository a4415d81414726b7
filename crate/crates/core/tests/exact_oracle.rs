//! Brute-force oracle for the exact solver. The dynamics are written out
//! again here from the model equations rather than reusing the plant code.

use heliodac::dac::{DacState, Phase, PlantSizing, TechnologySpec};
use heliodac::exact::{replay, solve_exact};
use heliodac::exec::Execution;
use heliodac::plant::{PlantConfig, PlantState, Scenario};
use heliodac::threshold::{optimize_chunk, ThresholdConfig};
use proptest::prelude::*;

struct Model {
    xbar: f64,
    ba1: f64,
    ba2: f64,
    bd1: f64,
    bd2: f64,
    p_ads: f64,
    p_des: f64,
    switch_cost: f64,
    heat_per_step: f64,
    capacity: f64,
    retention: f64,
    incentive: f64,
    lambda: Vec<f64>,
    flux: Vec<f64>,
}

/// Profit of a phase string (0 idle, 1 adsorb, 2 desorb), or `None` if it runs out of heat.
fn evaluate(m: &Model, seq: &[u8], x0: f64, k0: bool, h0: f64) -> Option<f64> {
    let (mut x, mut k, mut h) = (x0, k0, h0);
    let mut profit = 0.0;
    for (t, &p) in seq.iter().enumerate() {
        let frac = x / m.xbar;
        let (a, d, power, draw) = match p {
            0 => (0.0, 0.0, 0.0, 0.0),
            1 => {
                let cap = ((m.ba1 + m.ba2 * frac) * m.xbar).max(0.0);
                (cap.min(m.xbar - x).max(0.0), 0.0, m.p_ads, 0.0)
            }
            _ => {
                let cap = ((m.bd1 + m.bd2 * frac) * m.xbar).max(0.0);
                (0.0, cap.min(x), m.p_des, m.heat_per_step)
            }
        };
        let avail = m.retention * h + m.flux[t];
        if avail + 1e-12 < draw {
            return None;
        }
        h = (avail - draw).max(0.0).min(m.capacity);
        x = (x + a - d).clamp(0.0, m.xbar);
        let k_next = match p {
            1 => true,
            2 => false,
            _ => k,
        };
        let z = k_next && !k;
        k = k_next;
        profit += m.incentive * d - m.lambda[t] * power - if z { m.switch_cost } else { 0.0 };
    }
    Some(profit)
}

/// Best profit over all 3^n phase strings, enumerated with a base-3 odometer.
fn brute_force(m: &Model, n: usize, x0: f64, k0: bool, h0: f64) -> f64 {
    let mut digits = vec![0u8; n];
    let mut best = f64::NEG_INFINITY;
    loop {
        if let Some(p) = evaluate(m, &digits, x0, k0, h0) {
            best = best.max(p);
        }
        let mut i = 0;
        loop {
            if i == n {
                return best;
            }
            digits[i] += 1;
            if digits[i] < 3 {
                break;
            }
            digits[i] = 0;
            i += 1;
        }
    }
}

#[derive(Debug, Clone)]
struct Instance {
    spec: TechnologySpec,
    thermal: f64,
    capacity: f64,
    prices: Vec<f64>,
    ci: Vec<f64>,
    flux: Vec<f64>,
    carbon_value: f64,
    incentive: f64,
    x0_frac: f64,
    k0: bool,
    h0_frac: f64,
}

fn instance() -> impl Strategy<Value = Instance> {
    (1usize..=8).prop_flat_map(|n| {
        (
            (0.05f64..0.6, 0.0f64..1.0, 0.0f64..0.3, 0.1f64..0.8, 0.0f64..300.0, 0.1f64..1.5, 0.01f64..0.5, 0.25f64..4.0),
            (0.5f64..20.0, 0.1f64..5.0),
            prop::collection::vec(-40.0f64..250.0, n),
            prop::collection::vec(0.0f64..0.9, n),
            prop::collection::vec(prop_oneof![Just(0.0), 0.0f64..2.0], n),
            (0.0f64..100.0, 0.0f64..400.0, 0.0f64..=1.0, any::<bool>(), 0.0f64..=1.0),
        )
            .prop_map(|(t, (thermal, capacity), prices, ci, flux, (carbon_value, incentive, x0_frac, k0, h0_frac))| {
                let (ba1, ba2_share, bd1, bd2, switch, pa, pd, cycle) = t;
                Instance {
                    spec: TechnologySpec {
                        name: "random".into(),
                        cycle_switching_cost: switch,
                        adsorption_power: pa,
                        desorption_power: pd,
                        beta_a1: ba1,
                        beta_a2: -ba2_share * ba1,
                        beta_d1: bd1,
                        beta_d2: bd2,
                        cycle_hours: cycle,
                    },
                    thermal,
                    capacity,
                    prices,
                    ci,
                    flux,
                    carbon_value,
                    incentive,
                    x0_frac,
                    k0,
                    h0_frac,
                }
            })
    })
}

fn setup(inst: &Instance) -> (Scenario, PlantConfig, PlantState, Model) {
    let sizing = PlantSizing {
        thermal_mwh_per_t: inst.thermal,
        ..PlantSizing::default()
    };
    let tech = inst.spec.instantiate(&sizing, 300).unwrap();
    let scenario = Scenario::grid(300, inst.prices.clone(), inst.ci.clone(), inst.flux.clone(), inst.incentive, inst.carbon_value).unwrap();
    let plant = PlantConfig::grid(tech.clone(), inst.capacity, 0.99986);
    let x0 = inst.x0_frac * tech.x_max;
    let init = PlantState {
        dac: DacState {
            x: x0,
            phase: Phase::Idle,
            k: inst.k0,
        },
        h: inst.h0_frac * inst.capacity,
        battery: 0.0,
        desorbing: false,
    };
    let xbar = tech.x_max;
    let hours = 300.0 / 3600.0;
    let model = Model {
        xbar,
        ba1: inst.spec.beta_a1,
        ba2: inst.spec.beta_a2,
        bd1: inst.spec.beta_d1,
        bd2: inst.spec.beta_d2,
        p_ads: inst.spec.adsorption_power * xbar * hours,
        p_des: inst.spec.desorption_power * xbar * hours,
        switch_cost: inst.spec.cycle_switching_cost * xbar,
        heat_per_step: tech.h_step,
        capacity: inst.capacity,
        retention: 0.99986,
        incentive: inst.incentive,
        lambda: inst.prices.iter().zip(&inst.ci).map(|(p, c)| p + inst.carbon_value * c).collect(),
        flux: inst.flux.clone(),
    };
    (scenario, plant, init, model)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn exact_solver_matches_brute_force(inst in instance()) {
        let (scenario, plant, init, model) = setup(&inst);
        let n = scenario.len();
        let oracle = brute_force(&model, n, init.dac.x, init.dac.k, init.h);
        let best = solve_exact(&plant, &scenario.full(), &init, Execution::Sequential).unwrap();
        let got = best.totals.profit;
        prop_assert!((got - oracle).abs() <= 1e-9 * (1.0 + oracle.abs()), "solver {got}, oracle {oracle}");

        let phases: Vec<u8> = best.phases().iter().map(|p| match p.unwrap() {
            Phase::Idle => 0,
            Phase::Adsorb => 1,
            Phase::Desorb => 2,
        }).collect();
        let replayed = evaluate(&model, &phases, init.dac.x, init.dac.k, init.h).unwrap();
        prop_assert!((replayed - got).abs() <= 1e-9 * (1.0 + got.abs()));
    }

    #[test]
    fn threshold_policy_never_beats_exact(inst in instance()) {
        let (scenario, plant, init, _) = setup(&inst);
        let n = scenario.len();
        let best = solve_exact(&plant, &scenario.full(), &init, Execution::Sequential).unwrap();
        let cfg = ThresholdConfig { chunk_steps: n, lookahead_steps: 0, use_boost: false, ..ThresholdConfig::default() };
        let (chunk, steps) = optimize_chunk(&plant, &scenario.full(), n, &cfg, &init);
        prop_assert_eq!(steps.len(), n);
        prop_assert!(chunk.profit <= best.totals.profit + 1e-9 * (1.0 + best.totals.profit.abs()));
        let phases: Vec<Phase> = steps.iter().map(|s| s.phase().unwrap()).collect();
        prop_assert!(replay(&plant, &scenario.full(), &init, &phases).is_some());
    }
}

#[test]
fn odometer_visits_every_sequence() {
    let m = Model {
        xbar: 1.0,
        ba1: 0.2,
        ba2: -0.2,
        bd1: 0.0,
        bd2: 0.4,
        p_ads: 0.0,
        p_des: 0.0,
        switch_cost: 0.0,
        heat_per_step: 0.0,
        capacity: 1.0,
        retention: 1.0,
        incentive: 0.0,
        lambda: vec![0.0; 4],
        flux: vec![0.0; 4],
    };
    let mut digits = vec![0u8; 4];
    let mut seen = std::collections::HashSet::new();
    loop {
        assert!(evaluate(&m, &digits, 0.0, false, 0.0).is_some());
        seen.insert(digits.clone());
        let mut i = 0;
        while i < 4 {
            digits[i] += 1;
            if digits[i] < 3 {
                break;
            }
            digits[i] = 0;
            i += 1;
        }
        if i == 4 {
            break;
        }
    }
    assert_eq!(seen.len(), 81);
    assert_eq!(brute_force(&m, 4, 0.0, false, 0.0), 0.0);
}
