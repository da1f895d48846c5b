use offload_core::experiments::{
    default_paper_config, random_baseline, run_sweep, seeded_instance, to_csv_string, Method, SweepSpec,
    SweptParam, CSV_HEADER,
};
use offload_core::model::Mode;

fn spec(values: Vec<f64>, seeds: Vec<u64>, methods: Vec<Method>) -> SweepSpec {
    let mut base = seeded_instance(5, 2);
    base.s_edge_budget = 100.0;
    SweepSpec {
        label: String::new(),
        base,
        swept_param: SweptParam::SEdgeBudget,
        values,
        seeds,
        methods,
        grid_step: 1.0,
    }
}

#[test]
fn default_config_local_step_energy() {
    let cfg = default_paper_config();
    cfg.validate().unwrap();
    // k * dt * f^3 with k = 1e-26, dt = 1/500 s, f = 1.5 GHz.
    let expected = 1e-26 * (1.0 / 500.0) * 1.5e9f64.powi(3);
    assert!((expected - 0.0675).abs() < 1e-15);
    let e = cfg.energy(0, 1.0, Mode::Local).unwrap();
    assert!((e - 0.0675).abs() < 1e-12, "{e}");
}

#[test]
fn baseline_with_zero_budget_has_no_edge_steps() {
    let mut cfg = seeded_instance(40, 1);
    cfg.s_edge_budget = 0.0;
    let x = random_baseline(&cfg, 9);
    assert!(x.offloaded_count() > 0);
    for (a, s) in x.a.iter().zip(&x.s) {
        if *a == 1.0 {
            assert_eq!(*s, 0.0);
        }
    }
}

#[test]
fn baseline_is_deterministic_and_feasible() {
    let cfg = seeded_instance(30, 4);
    let x = random_baseline(&cfg, 17);
    assert_eq!(x, random_baseline(&cfg, 17));
    assert_ne!(x, random_baseline(&cfg, 18));
    assert!(cfg.check_feasibility(&x).is_feasible());
    assert!(x.s.iter().all(|s| s.fract() == 0.0));
}

#[test]
fn baseline_scales_onto_a_binding_budget() {
    let mut cfg = seeded_instance(30, 4);
    cfg.s_edge_budget = 50.0;
    let x = random_baseline(&cfg, 2);
    let used: f64 = x.a.iter().zip(&x.s).filter(|(a, _)| **a == 1.0).map(|(_, s)| s).sum();
    // Scaled values sum to the budget; nearest rounding with downward
    // repair loses at most half a step per offloaded UE.
    assert!(used <= 50.0);
    assert!(used >= 50.0 - 0.5 * x.offloaded_count() as f64, "{used}");
}

#[test]
fn baseline_offloads_about_half() {
    let cfg = seeded_instance(1000, 0);
    for seed in 0..5 {
        let frac = random_baseline(&cfg, seed).offloaded_count() as f64 / 1000.0;
        assert!((frac - 0.5).abs() <= 0.05, "seed {seed}: {frac}");
    }
}

#[test]
fn sweep_record_count_and_order() {
    let records = run_sweep(&spec(vec![50.0, 100.0, 150.0], vec![1], vec![Method::Proposed]));
    assert_eq!(records.len(), 3);
    assert_eq!(records.iter().map(|r| r.swept_value).collect::<Vec<_>>(), vec![50.0, 100.0, 150.0]);

    let records = run_sweep(&spec(vec![50.0, 100.0], vec![3, 1], vec![Method::Baseline, Method::Proposed]));
    let keys: Vec<(Method, f64, u64)> = records.iter().map(|r| (r.method, r.swept_value, r.seed)).collect();
    assert_eq!(
        keys,
        vec![
            (Method::Baseline, 50.0, 3),
            (Method::Baseline, 50.0, 1),
            (Method::Baseline, 100.0, 3),
            (Method::Baseline, 100.0, 1),
            (Method::Proposed, 50.0, 3),
            (Method::Proposed, 50.0, 1),
            (Method::Proposed, 100.0, 3),
            (Method::Proposed, 100.0, 1),
        ]
    );
}

#[test]
fn proposed_never_worse_than_baseline() {
    let records = run_sweep(&spec(vec![0.0, 50.0, 200.0, 800.0], vec![0, 1, 2], vec![Method::Proposed, Method::Baseline]));
    let (p, b) = records.split_at(12);
    for (p, b) in p.iter().zip(b) {
        assert!(p.objective <= b.objective, "{} {}: {} > {}", p.swept_value, p.seed, p.objective, b.objective);
    }
}

#[test]
fn oracle_records_bound_the_proposed_method() {
    let records = run_sweep(&spec(vec![30.0, 120.0], vec![0], vec![Method::Proposed, Method::Oracle]));
    assert!(records[2].objective <= records[0].objective);
    assert!(records[3].objective <= records[1].objective);
}

#[test]
fn csv_starts_with_the_exact_header() {
    let records = run_sweep(&spec(vec![60.0], vec![0], vec![Method::Proposed]));
    let text = to_csv_string(&records).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some(
            "method,seed,swept_param,swept_value,c1,c2,c3,w1,w2,objective,T_total_s,accuracy,E_total_J,\
             U_total,offloaded_count,iter_outer,iter_inner,wall_ms,status"
        )
    );
    assert_eq!(CSV_HEADER.len(), 19);
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[0], "proposed");
    assert_eq!(row[2], "s_edge_budget");
    assert_eq!(row[17], "0");
    assert_eq!(text, to_csv_string(&run_sweep(&spec(vec![60.0], vec![0], vec![Method::Proposed]))).unwrap());
}
