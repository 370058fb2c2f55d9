mod common;

use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::Rng;

use common::*;
use stacc::accessibility::{
    hansen, run_scenarios, shen_static, spacetime_access, CostSet, Costs, Scenario,
};
use stacc::calibration::{DecayFamily, DecaySpec};
use stacc::dasymetric::CellCounts;
use stacc::temporal::{HourlyCounts, HOURS};

fn power(beta: f64, floor: f64) -> DecaySpec {
    DecaySpec::new(DecayFamily::Power, beta, floor).unwrap()
}

fn window_total(cc: &CellCounts, t: usize) -> f64 {
    cc.employment_cells()
        .iter()
        .map(|&j| cc.jobs_at(j).supply_window(t).unwrap())
        .sum()
}

#[test]
fn oracle_matches_on_random_instances() {
    for seed in 0..12u64 {
        let mut r = rng(seed);
        let nx = r.gen_range(2..=12);
        let ny = r.gen_range(2..=12);
        let cc = random_cell_counts(&mut r, nx, ny, 0.5, 0.4, 0.1);
        let hourly: Vec<_> = (0..HOURS as u8)
            .map(|h| random_costs(&mut r, &cc, Some(h), 0.05))
            .collect();
        let spec = power(r.gen_range(0.3..2.0), 50.0);
        for t in [0, 7, 17, 23] {
            let ev = spacetime_access(&cc, Costs::Hourly(&hourly), &spec, t).unwrap();
            let oracle = oracle_spacetime(&cc, &hourly[t], &spec, t);
            let err = max_relative_error(&oracle, &ev.access.cells, &ev.access.values);
            assert!(err <= 1e-9, "seed {seed} hour {t}: relative error {err}");
        }
    }
}

#[test]
fn conservation_holds_for_reachable_sites() {
    for seed in 100..120u64 {
        let mut r = rng(seed);
        let cc = random_cell_counts(&mut r, 10, 10, 0.5, 0.5, 0.2);
        let costs = random_costs(&mut r, &cc, None, 0.1);
        let spec = power(1.0, 50.0);
        for t in 0..HOURS {
            let ev = spacetime_access(&cc, Costs::Static(&costs), &spec, t).unwrap();
            let claimed: f64 = ev
                .access
                .cells
                .iter()
                .zip(&ev.access.values)
                .map(|(&i, a)| cc.workers_at(i).0[t] * a)
                .sum();
            let offered = window_total(&cc, t) - ev.diagnostics.unclaimed_supply;
            let scale = window_total(&cc, t).max(1.0);
            assert!(
                (claimed - offered).abs() / scale <= 1e-9,
                "seed {seed} hour {t}: {claimed} vs {offered}"
            );
        }
    }
}

#[test]
fn zero_demand_sites_are_reported_not_divided() {
    let mut r = rng(7);
    let cc = random_cell_counts(&mut r, 6, 6, 0.5, 0.5, 0.0);
    let res = cc.residential_cells();
    let emp = cc.employment_cells();
    // every pair unreachable except the first residential row
    let values = res
        .iter()
        .enumerate()
        .flat_map(|(i, _)| emp.iter().map(move |_| (i == 0).then_some(200.0)))
        .collect();
    let costs = stacc::network::CostMatrix::new(
        res.clone(),
        emp.clone(),
        stacc::network::CostUnit::Meters,
        None,
        values,
    )
    .unwrap();
    let ev = spacetime_access(&cc, Costs::Static(&costs), &power(1.0, 1.0), 3).unwrap();
    assert!(ev.access.values.iter().all(|v| v.is_finite()));
    assert!(ev.access.values[1..].iter().all(|&v| v == 0.0));
    let claimed = cc.workers_at(res[0]).0[3] * ev.access.values[0];
    assert!((claimed - window_total(&cc, 3)).abs() <= 1e-9 * window_total(&cc, 3));
}

#[test]
fn uniform_time_identities() {
    let mut r = rng(42);
    let daily = random_cell_counts(&mut r, 8, 8, 0.6, 0.5, 0.0);
    let flatten = |m: &BTreeMap<u32, HourlyCounts>| -> BTreeMap<u32, HourlyCounts> {
        m.iter()
            .map(|(&c, h)| (c, HourlyCounts::uniform(h.daily_total() / HOURS as f64)))
            .collect()
    };
    let cc = CellCounts::new(daily.grid, flatten(&daily.workers), flatten(&daily.jobs));
    let costs = random_costs(&mut r, &cc, None, 0.0);
    let spec = power(0.8, 50.0);

    let set = run_scenarios(
        &cc,
        &CostSet {
            base: costs.clone(),
            hourly: None,
        },
        &spec,
        None,
    )
    .unwrap();
    for t in 0..HOURS {
        let ev = spacetime_access(&cc, Costs::Static(&costs), &spec, t).unwrap();
        for (a, s) in ev.access.values.iter().zip(&set.static_both.values) {
            assert!((a - 2.0 * s).abs() <= 1e-9 * s.abs().max(1e-300), "{a} vs 2 x {s}");
        }
    }
    let m = set.report.means;
    for (k, expected) in [(1, 1.0 / 12.0), (2, 24.0), (3, 2.0)] {
        let ratio = m[k] / m[0];
        assert!((ratio - expected).abs() <= 1e-9 * expected, "scenario {k}: {ratio}");
    }
}

#[test]
fn scenario_surfaces_match_oracles() {
    let mut r = rng(99);
    let cc = random_cell_counts(&mut r, 7, 9, 0.5, 0.5, 0.15);
    let base = random_costs(&mut r, &cc, None, 0.05);
    let spec = power(1.1, 50.0);
    let set = run_scenarios(
        &cc,
        &CostSet {
            base: base.clone(),
            hourly: None,
        },
        &spec,
        None,
    )
    .unwrap();
    let res = cc.residential_cells();
    let emp = cc.employment_cells();
    let daily_jobs = |j: u32| cc.jobs_at(j).daily_total();
    let daily_workers = |i: u32| cc.workers_at(i).daily_total();

    let s1 = oracle_two_step(&res, &emp, &daily_jobs, &daily_workers, &base, &spec);
    assert!(max_relative_error(&s1, &set.static_both.cells, &set.static_both.values) <= 1e-9);

    for t in [0, 8, 23] {
        let window = |j: u32| cc.jobs_at(j).supply_window(t).unwrap();
        let hourly_workers = |i: u32| cc.workers_at(i).0[t];
        let s2 = oracle_two_step(&res, &emp, &window, &daily_workers, &base, &spec);
        let s3 = oracle_two_step(&res, &emp, &daily_jobs, &hourly_workers, &base, &spec);
        let s4 = oracle_two_step(&res, &emp, &window, &hourly_workers, &base, &spec);
        for (oracle, surface) in [
            (&s2, &set.dynamic_jobs[t]),
            (&s3, &set.dynamic_workers[t]),
            (&s4, &set.space_time[t]),
        ] {
            assert_eq!(surface.hour, Some(t as u8));
            assert!(max_relative_error(oracle, &surface.cells, &surface.values) <= 1e-9);
        }
    }
    let pooled: f64 = set.samples(Scenario::SpaceTime).iter().sum::<f64>()
        / set.samples(Scenario::SpaceTime).len() as f64;
    assert!((pooled - set.report.means[3]).abs() <= 1e-12 * pooled.abs().max(1.0));
}

#[test]
fn hansen_is_monotone_in_supply_and_cost() {
    let mut r = rng(5);
    let cc = random_cell_counts(&mut r, 6, 6, 0.5, 0.5, 0.0);
    let costs = random_costs(&mut r, &cc, None, 0.0);
    let spec = power(1.0, 10.0);
    let res = cc.residential_cells();
    let supply: Vec<(u32, f64)> = cc
        .employment_cells()
        .iter()
        .map(|&j| (j, cc.jobs_at(j).daily_total()))
        .collect();
    let base = hansen(&cc.grid, &supply, &res, &costs, &spec).unwrap();

    let mut more = supply.clone();
    more[0].1 += 100.0;
    let grown = hansen(&cc.grid, &more, &res, &costs, &spec).unwrap();
    for (a, b) in base.values.iter().zip(&grown.values) {
        assert!(b > a);
    }

    let emp = cc.employment_cells();
    let cheaper: Vec<Option<f64>> = res
        .iter()
        .flat_map(|&i| {
            let costs = &costs;
            emp.iter().map(move |&j| costs.between(i, j).map(|d| d * 0.5))
        })
        .collect();
    let cheaper = stacc::network::CostMatrix::new(
        res.clone(),
        emp.clone(),
        stacc::network::CostUnit::Meters,
        None,
        cheaper,
    )
    .unwrap();
    let closer = hansen(&cc.grid, &supply, &res, &cheaper, &spec).unwrap();
    for (a, b) in base.values.iter().zip(&closer.values) {
        assert!(b >= a);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn supply_scales_linearly_and_demand_inversely(seed in 0u64..1000, k in 0.1f64..20.0) {
        let mut r = rng(seed);
        let cc = random_cell_counts(&mut r, 5, 5, 0.6, 0.6, 0.0);
        let costs = random_costs(&mut r, &cc, None, 0.1);
        let spec = power(1.2, 20.0);
        let supply: Vec<(u32, f64)> = cc.employment_cells().iter().map(|&j| (j, cc.jobs_at(j).daily_total())).collect();
        let demand: Vec<(u32, f64)> = cc.residential_cells().iter().map(|&i| (i, cc.workers_at(i).daily_total())).collect();
        let base = shen_static(&cc.grid, &supply, &demand, &costs, &spec).unwrap();
        let scaled_s: Vec<_> = supply.iter().map(|&(c, v)| (c, v * k)).collect();
        let scaled_d: Vec<_> = demand.iter().map(|&(c, v)| (c, v * k)).collect();
        let up = shen_static(&cc.grid, &scaled_s, &demand, &costs, &spec).unwrap();
        let down = shen_static(&cc.grid, &supply, &scaled_d, &costs, &spec).unwrap();
        for ((a, u), d) in base.access.values.iter().zip(&up.access.values).zip(&down.access.values) {
            prop_assert!((u - k * a).abs() <= 1e-9 * (k * a).abs().max(1e-300));
            prop_assert!((d - a / k).abs() <= 1e-9 * (a / k).abs().max(1e-300));
        }
    }

    #[test]
    fn constant_factor_in_decay_cancels(seed in 0u64..1000, c in 0.01f64..100.0) {
        let mut r = rng(seed);
        let cc = random_cell_counts(&mut r, 5, 5, 0.6, 0.6, 0.1);
        let costs = random_costs(&mut r, &cc, None, 0.1);
        let spec = power(0.7, 20.0);
        let scaled = move |d: f64| c * d.max(20.0).powf(-0.7);
        let t = (seed % 24) as usize;
        let a = spacetime_access(&cc, Costs::Static(&costs), &spec, t).unwrap();
        let b = spacetime_access(&cc, Costs::Static(&costs), &scaled, t).unwrap();
        for (x, y) in a.access.values.iter().zip(&b.access.values) {
            prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(y.abs()).max(1e-300));
        }
    }

    #[test]
    fn accessibility_is_finite_and_non_negative(seed in 0u64..1000) {
        let mut r = rng(seed);
        let cc = random_cell_counts(&mut r, 4, 6, 0.5, 0.5, 0.5);
        let costs = random_costs(&mut r, &cc, None, 0.3);
        let spec = DecaySpec::new(DecayFamily::Exponential, 0.001, 0.0).unwrap();
        for t in 0..HOURS {
            let ev = spacetime_access(&cc, Costs::Static(&costs), &spec, t).unwrap();
            prop_assert!(ev.access.values.iter().all(|v| v.is_finite() && *v >= 0.0));
            prop_assert!(ev.ratios.values.iter().all(|v| v.is_finite() && *v >= 0.0));
        }
    }
}
