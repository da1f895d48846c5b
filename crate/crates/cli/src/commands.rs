use std::fs;
use std::path::{Path, PathBuf};

use offload_core::experiments::{
    self, consumption_plan, default_paper_config, random_baseline, run_plan, utility_plan, ExperimentRecord,
    Method, RunOptions, SweepPlan, SweepSpec, SweptParam,
};
use offload_core::sca::{self, objective_breakdown, SolveReport};
use offload_core::{oracle, Error, SystemConfig};
use serde_json::json;

use crate::{Cli, Command, Common, Preset};

pub const EXIT_OK: u8 = 0;
pub const EXIT_INVALID: u8 = 1;
pub const EXIT_NOT_CONVERGED: u8 = 2;
pub const EXIT_INTERNAL: u8 = 3;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidConfig { .. } | Error::InvalidArgument(_) | Error::Json(_) | Error::OracleTooLarge { .. } => {
            EXIT_INVALID
        }
        Error::NonBracketing { .. }
        | Error::BracketExhausted { .. }
        | Error::InfeasibleBudget { .. }
        | Error::NonFinite { .. } => EXIT_NOT_CONVERGED,
        Error::Io(_) | Error::Csv(_) => EXIT_INTERNAL,
    }
}

pub fn run(cli: Cli) -> u8 {
    let verbose = cli.verbose;
    let result = match cli.command {
        Command::Solve(c) => with_pool(&c, || solve(&c, verbose)),
        Command::Sweep { common, timing } => with_pool(&common, || sweep(&common, timing, verbose)),
        Command::CompareOracle { common, grid_step } => with_pool(&common, || compare(&common, grid_step)),
        Command::Baseline(c) => baseline(&c),
        Command::PrintDefaultConfig { preset, out } => print_default(preset, out.as_deref()),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn with_pool(c: &Common, f: impl FnOnce() -> Result<u8, Error> + Send) -> Result<u8, Error> {
    let Some(jobs) = c.jobs else { return f() };
    if jobs == 0 {
        return Err(Error::InvalidArgument("--jobs must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start {jobs} workers: {e}")))?;
    pool.install(f)
}

fn read_text(path: &Path) -> Result<String, Error> {
    fs::read_to_string(path).map_err(|e| Error::InvalidArgument(format!("cannot read config {}: {e}", path.display())))
}

fn load_config(c: &Common) -> Result<SystemConfig, Error> {
    let mut cfg: SystemConfig = serde_json::from_str(&read_text(&c.config)?)?;
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), Error> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn write_records(path: &Path, records: &[ExperimentRecord]) -> Result<(), Error> {
    let file = fs::File::create(path)?;
    experiments::write_csv(records, std::io::BufWriter::new(file))
}

fn solve_record(cfg: &SystemConfig, report: &SolveReport) -> ExperimentRecord {
    let c = report.components;
    ExperimentRecord {
        method: Method::Proposed,
        seed: cfg.seed,
        swept_param: SweptParam::SEdgeBudget,
        swept_value: cfg.s_edge_budget,
        cost_weights: cfg.cost_weights,
        blend_weights: cfg.blend_weights,
        objective: report.objective_binary,
        t_total: c.t_total,
        accuracy: c.accuracy,
        e_total: c.e_total,
        u_total: c.u_total,
        offloaded_count: report.allocation_binary.offloaded_count(),
        iterations_outer: report.iterations_outer,
        iterations_inner_total: report.iterations_inner_total,
        wall_ms: 0.0,
        status: report.status.to_string(),
    }
}

fn solve(c: &Common, verbose: u8) -> Result<u8, Error> {
    let cfg = load_config(c)?;
    let report = match sca::solve(&cfg) {
        Ok(r) => r,
        Err(e) => {
            if let Some(out) = c.out.as_deref().filter(|p| !is_json(p)) {
                let spec = single_point_spec(&cfg);
                let rec = experiments::run_point(&spec, Method::Proposed, cfg.s_edge_budget, cfg.seed, RunOptions::default());
                write_records(out, &[rec])?;
            }
            return Err(e);
        }
    };
    if verbose >= 2 {
        for r in &report.trace {
            println!(
                "outer {:>3} inner {:>3}  P2 {:>16.9e}  P1 {:>14.9e}  |da| {:.2e}  |ds| {:.2e}",
                r.outer, r.inner, r.p2, r.p1, r.max_da, r.max_ds
            );
        }
    }
    println!(
        "{}: objective {:.9} (relaxed {:.9}), {} of {} offloaded, {} outer / {} inner iterations",
        report.status,
        report.objective_binary,
        report.objective_relaxed,
        report.allocation_binary.offloaded_count(),
        cfg.n(),
        report.iterations_outer,
        report.iterations_inner_total
    );
    if let Some(out) = &c.out {
        if is_json(out) {
            write_json(out, &report)?;
        } else {
            write_records(out, &[solve_record(&cfg, &report)])?;
        }
        if verbose >= 1 {
            println!("wrote {}", out.display());
        }
    }
    Ok(if report.status.is_converged() {
        EXIT_OK
    } else {
        EXIT_NOT_CONVERGED
    })
}

fn single_point_spec(cfg: &SystemConfig) -> SweepSpec {
    SweepSpec {
        label: String::new(),
        base: cfg.clone(),
        swept_param: SweptParam::SEdgeBudget,
        values: vec![cfg.s_edge_budget],
        seeds: vec![cfg.seed],
        methods: vec![Method::Proposed],
        grid_step: 1.0,
    }
}

fn load_plan(c: &Common) -> Result<SweepPlan, Error> {
    let value: serde_json::Value = serde_json::from_str(&read_text(&c.config)?)?;
    let mut plan = if value.get("specs").is_some() {
        serde_json::from_value::<SweepPlan>(value)?
    } else {
        SweepPlan {
            specs: vec![serde_json::from_value::<SweepSpec>(value)?],
        }
    };
    if let Some(seed) = c.seed {
        for spec in &mut plan.specs {
            spec.seeds = vec![seed];
        }
    }
    plan.validate()?;
    Ok(plan)
}

/// Output path of one label: the given path itself when the plan has a
/// single label, otherwise `<stem>_<label>.<ext>` next to it.
fn labelled_path(out: &Path, label: &str, single: bool) -> PathBuf {
    if single {
        return out.to_path_buf();
    }
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match out.extension() {
        Some(ext) => format!("{stem}_{label}.{}", ext.to_string_lossy()),
        None => format!("{stem}_{label}"),
    };
    out.with_file_name(name)
}

fn sweep(c: &Common, timing: bool, verbose: u8) -> Result<u8, Error> {
    let plan = load_plan(c)?;
    let out = c
        .out
        .as_deref()
        .ok_or_else(|| Error::InvalidArgument("sweep needs --out".into()))?;
    let total: usize = plan
        .specs
        .iter()
        .map(|s| s.methods.len() * s.values.len() * s.seeds.len())
        .sum();
    println!("running {} specs, {total} records", plan.specs.len());
    let runs = run_plan(&plan, RunOptions { timing });

    let labels = plan.labels();
    let single = labels.len() == 1;
    let mut all_ok = true;
    for label in labels {
        let records: Vec<ExperimentRecord> = runs
            .iter()
            .filter(|(l, _)| l == label)
            .flat_map(|(_, r)| r.iter().cloned())
            .collect();
        if verbose >= 1 {
            for r in &records {
                println!(
                    "{:<9} seed {:<4} {} = {:<10} objective {:.6}  {}",
                    r.method.name(),
                    r.seed,
                    r.swept_param.name(),
                    r.swept_value,
                    r.objective,
                    r.status
                );
            }
        }
        all_ok &= records.iter().all(|r| r.status == "converged" || r.status == "ok");
        let path = labelled_path(out, label, single);
        write_records(&path, &records)?;
        println!("wrote {} ({} records)", path.display(), records.len());
    }
    Ok(if all_ok { EXIT_OK } else { EXIT_NOT_CONVERGED })
}

fn compare(c: &Common, grid_step: f64) -> Result<u8, Error> {
    let cfg = load_config(c)?;
    let best = oracle::brute_force(&cfg, grid_step)?;
    let report = sca::solve(&cfg)?;
    let ratio = report.objective_binary / best.best_objective;
    println!(
        "proposed {:.9}, oracle {:.9} over {} assignments, ratio {:.6}",
        report.objective_binary, best.best_objective, best.assignments_evaluated, ratio
    );
    if let Some(out) = &c.out {
        let doc = json!({
            "grid_step": grid_step,
            "proposed_objective": report.objective_binary,
            "oracle_objective": best.best_objective,
            "ratio": ratio,
            "proposed": {
                "a": report.allocation_binary.a,
                "s": report.allocation_binary.s,
                "status": report.status,
            },
            "oracle": best,
        });
        write_json(out, &doc)?;
    }
    Ok(if report.status.is_converged() {
        EXIT_OK
    } else {
        EXIT_NOT_CONVERGED
    })
}

fn baseline(c: &Common) -> Result<u8, Error> {
    let cfg = load_config(c)?;
    let alloc = random_baseline(&cfg, cfg.seed);
    let objective = cfg.objective(&alloc);
    println!(
        "baseline objective {objective:.9}, {} of {} offloaded",
        alloc.offloaded_count(),
        cfg.n()
    );
    if let Some(out) = &c.out {
        if is_json(out) {
            write_json(
                out,
                &json!({
                    "seed": cfg.seed,
                    "objective": objective,
                    "allocation": alloc,
                    "components": objective_breakdown(&cfg, &alloc),
                }),
            )?;
        } else {
            let spec = SweepSpec {
                methods: vec![Method::Baseline],
                ..single_point_spec(&cfg)
            };
            let rec = experiments::run_point(&spec, Method::Baseline, cfg.s_edge_budget, cfg.seed, RunOptions::default());
            write_records(out, &[rec])?;
        }
    }
    Ok(EXIT_OK)
}

fn print_default(preset: Option<Preset>, out: Option<&Path>) -> Result<u8, Error> {
    let cfg = default_paper_config();
    let mut text = match preset {
        None => serde_json::to_string_pretty(&cfg)?,
        Some(Preset::Fig1) => serde_json::to_string_pretty(&consumption_plan(&cfg, &[0]))?,
        Some(Preset::Fig2) => serde_json::to_string_pretty(&utility_plan(&cfg, &[0]))?,
    };
    text.push('\n');
    match out {
        Some(path) => fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(EXIT_OK)
}
