use boapta_circuit::{suite, Netlist, SolverParams};
use boapta_core::records::best_curves;
use boapta_core::{
    cold_start, mc_accelerate, random_search, BoConfig, Campaign, CeptaSimulator, Checkpoint, FnSimulator, McOptions,
    RunKind, Simulator, Strategy, PENALTY_Y,
};

fn divider() -> Vec<(String, Netlist)> {
    vec![("divider".into(), suite::load("divider").unwrap())]
}

fn quadratic(_: &Netlist, x: &SolverParams) -> Option<u64> {
    Some(50 + (40.0 * (x.c_pseudo.log10() - 2.0).powi(2)).round() as u64)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

#[test]
fn bayesian_loop_finds_quadratic_minimum() {
    let sim = FnSimulator(quadratic);
    let (mut bo, mut rs) = (Vec::new(), Vec::new());
    for seed in 0..5 {
        let config = BoConfig { seed, ..Default::default() };
        bo.push(cold_start(divider(), &sim, &config).unwrap().best["divider"].y);
        rs.push(random_search(divider(), &sim, &config).unwrap().best["divider"].y);
    }
    let close = bo.iter().filter(|&&y| y <= 55.0).count();
    assert!(close >= 4, "bo {bo:?}");
    assert!(median(rs.clone()) >= median(bo.clone()), "bo {bo:?} random {rs:?}");
}

#[test]
fn best_records_never_increase() {
    let sim = FnSimulator(quadratic);
    let config = BoConfig { epochs: 8, seed: 3, ..Default::default() };
    for r in [cold_start(divider(), &sim, &config).unwrap(), random_search(divider(), &sim, &config).unwrap()] {
        let curve = &best_curves(&r.records)["divider"];
        assert_eq!(curve.len(), 9);
        assert!(curve.windows(2).all(|w| w[1] <= w[0]));
    }
}

#[test]
fn resumed_campaign_matches_uninterrupted() {
    let sim = FnSimulator(quadratic);
    let config = BoConfig { epochs: 6, seed: 9, ..Default::default() };
    let full = cold_start(divider(), &sim, &config).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cp.json");
    let mut c = Campaign::new(divider(), config, Strategy::Bayesian).unwrap();
    for _ in 0..3 {
        c.step(&sim).unwrap();
    }
    c.checkpoint().save(&path).unwrap();
    let mut c = Campaign::resume(divider(), Checkpoint::load(&path).unwrap()).unwrap();
    c.run(&sim, |_, _| Ok(())).unwrap();
    let strip = |rs: &[boapta_core::TrialRecord]| rs.iter().map(|r| r.without_timing()).collect::<Vec<_>>();
    assert_eq!(strip(&c.records), strip(&full.records));
}

#[test]
fn converged_proposals_reach_the_default_solution() {
    let sim = CeptaSimulator::default();
    let circuits = vec![
        ("diode_bridge".to_string(), suite::load("diode_bridge").unwrap()),
        ("bjt_inverter".to_string(), suite::load("bjt_inverter").unwrap()),
    ];
    let config = BoConfig { epochs: 4, seed: 2, ..Default::default() };
    let r = cold_start(circuits.clone(), &sim, &config).unwrap();
    for (id, netlist) in &circuits {
        let reference = sim.run(netlist, &config.defaults, None);
        assert!(reference.converged);
        for rec in r.records.iter().filter(|rec| rec.circuit_id == *id && rec.converged) {
            let out = sim.run(netlist, &rec.x, None);
            assert_eq!(out.iterations as f64, rec.y);
            let err = out.solution.iter().zip(&reference.solution).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err <= 1e-6, "{id} at {:?}: {err:e}", rec.x);
        }
    }
}

#[test]
fn constant_stub_freezes_after_twenty_quiet_samples() {
    let sim = FnSimulator(|_: &Netlist, _: &SolverParams| Some(30));
    let opts = McOptions { variation: 0.05, samples: 40, seed: 1 };
    let r = mc_accelerate("d", &suite::load("divider").unwrap(), &sim, &BoConfig::default(), &opts, None).unwrap();
    assert_eq!(r.frozen_at, Some(21));
    assert_eq!(r.total_cost(), 40 * 30);
    assert_eq!(r.records.len(), 40);
    assert_eq!(r.non_converged(), 0);
    let inc = r.incumbent.unwrap();
    for s in &r.samples[21..] {
        assert!(s.frozen);
        assert_eq!(s.x, inc.x);
    }
    assert!(r.records[21..].iter().all(|rec| rec.kind == RunKind::Incumbent));
    assert_eq!(r.cost_stats(), (30.0, 0.0));
}

#[test]
fn budget_breach_is_penalized_and_recovered() {
    // Proposals with large pseudo capacitance are slow; the defaults are not.
    let sim = FnSimulator(|_: &Netlist, x: &SolverParams| Some(if x.c_pseudo > 1e-2 { 1000 } else { 60 + (x.r0.log10().abs() * 10.0) as u64 }));
    let opts = McOptions { variation: 0.05, samples: 30, seed: 2 };
    let r = mc_accelerate("d", &suite::load("divider").unwrap(), &sim, &BoConfig::default(), &opts, None).unwrap();
    assert_eq!(r.records[0].kind, RunKind::Default);
    let mut y_star = r.records[0].y;
    let mut breaches = 0;
    for (k, rec) in r.records.iter().enumerate().skip(1) {
        let limit = if rec.kind == RunKind::Incumbent { 4.0 * y_star } else { 2.0 * y_star };
        assert!(rec.iterations as f64 <= limit, "{k}: {rec:?} over {limit}");
        if !rec.converged {
            assert!(rec.halted && rec.y == PENALTY_Y && rec.kind == RunKind::Proposal);
            let next = &r.records[k + 1];
            assert_eq!((next.kind, next.epoch), (RunKind::Incumbent, rec.epoch));
            breaches += 1;
        } else {
            y_star = y_star.min(rec.y);
        }
    }
    assert!(breaches > 0, "stub never triggered a breach");
    assert_eq!(r.non_converged(), 0);
    assert_eq!(r.samples.iter().filter(|s| s.penalized).count(), breaches);
    let cost: u64 = r.records.iter().map(|rec| rec.iterations).sum();
    assert_eq!(cost, r.total_cost());
}

#[test]
fn one_sample_report() {
    let sim = FnSimulator(|_: &Netlist, _: &SolverParams| Some(12));
    let opts = McOptions { variation: 0.05, samples: 1, seed: 0 };
    let r = mc_accelerate("d", &suite::load("divider").unwrap(), &sim, &BoConfig::default(), &opts, None).unwrap();
    assert_eq!(r.samples.len(), 1);
    assert_eq!(r.frozen_at, None);
}

