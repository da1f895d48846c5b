//! Default instances, weight presets, the random baseline and the sweep
//! harness that writes one CSV record per (method, value, seed).

use std::fmt::Write as _;
use std::io;
use std::time::Instant;

use rand::distributions::{Distribution, Uniform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Allocation, BlendWeights, CostWeights, Mode, SystemConfig, Tolerances, UeProfile};
use crate::oracle;
use crate::sca::{self, objective_breakdown, round_steps, Components};

/// Header row of every experiment CSV.
pub const CSV_HEADER: [&str; 19] = [
    "method",
    "seed",
    "swept_param",
    "swept_value",
    "c1",
    "c2",
    "c3",
    "w1",
    "w2",
    "objective",
    "T_total_s",
    "accuracy",
    "E_total_J",
    "U_total",
    "offloaded_count",
    "iter_outer",
    "iter_inner",
    "wall_ms",
    "status",
];

/// Edge budgets of the consumption and utility studies.
pub const BUDGET_GRID: [f64; 10] = [
    1000.0, 2000.0, 3000.0, 4000.0, 5000.0, 6000.0, 7000.0, 8000.0, 9000.0, 10000.0,
];

/// Local step caps of the utility study.
pub const LOCAL_CAPS: [f64; 3] = [100.0, 200.0, 400.0];

/// Blend used by the utility study.
pub const UTILITY_BLEND: BlendWeights = BlendWeights { w1: 0.3, w2: 0.7 };

/// Factor applied to the emphasized component of a heavy preset.
pub const PRESET_EMPHASIS: f64 = 5.0;

/// Parameters whose defaults were chosen here rather than measured.
pub const NON_PAPER_DEFAULTS: [&str; 5] = [
    "c1_attenuation",
    "c2_utility",
    "s_caps",
    "weight_presets",
    "tolerances",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightPreset {
    EqualNormalized,
    TimeHeavy,
    ErrorHeavy,
    EnergyHeavy,
}

impl WeightPreset {
    pub const ALL: [WeightPreset; 4] = [
        WeightPreset::EqualNormalized,
        WeightPreset::TimeHeavy,
        WeightPreset::ErrorHeavy,
        WeightPreset::EnergyHeavy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            WeightPreset::EqualNormalized => "equal-normalized",
            WeightPreset::TimeHeavy => "time-heavy",
            WeightPreset::ErrorHeavy => "error-heavy",
            WeightPreset::EnergyHeavy => "energy-heavy",
        }
    }

    /// Normalized weights for `ues`, with one component scaled up.
    pub fn weights(self, ues: &[UeProfile], eps_fwd: f64) -> CostWeights {
        let base = CostWeights::normalized(ues, eps_fwd);
        let k = PRESET_EMPHASIS;
        match self {
            WeightPreset::EqualNormalized => base,
            WeightPreset::TimeHeavy => base.scaled(k, 1.0, 1.0),
            WeightPreset::ErrorHeavy => base.scaled(1.0, k, 1.0),
            WeightPreset::EnergyHeavy => base.scaled(1.0, 1.0, k),
        }
    }
}

fn default_ue() -> UeProfile {
    UeProfile {
        delta_t_local: 1.0 / 500.0,
        delta_t_edge: 1.0 / 1000.0,
        c1_attenuation: 0.05,
        c2_utility: 0.02,
        cpu_freq_local: 1.5e9,
        cpu_freq_edge_alloc: 10e9,
        k_local: 1e-26,
        s_cap_local: 200.0,
        s_cap_edge: 500.0,
    }
}

/// Thirty identical UEs with the measured constants and equal normalized
/// weights. The edge budget starts at the low end of [`BUDGET_GRID`].
pub fn default_paper_config() -> SystemConfig {
    let ues = vec![default_ue(); 30];
    let eps_fwd = 1.0;
    SystemConfig {
        cost_weights: WeightPreset::EqualNormalized.weights(&ues, eps_fwd),
        ues,
        k_edge: 1e-26,
        s_edge_budget: BUDGET_GRID[0],
        eps_fwd,
        blend_weights: BlendWeights { w1: 0.5, w2: 0.5 },
        tau_penalty: 1e5,
        tolerances: Tolerances::default(),
        seed: 0,
        init_offload: 0.5,
        multi_starts: 1,
        allow_nonpositive_cost: false,
        non_paper_defaults: NON_PAPER_DEFAULTS.iter().map(|s| s.to_string()).collect(),
    }
}

/// Default configuration with `n` heterogeneous UEs drawn from `seed`:
/// attenuation and utility rates within 30% of their defaults, edge
/// frequency log-uniform on 1-10 GHz and device frequency uniform on
/// 1-2 GHz. Weights are normalized for the drawn UEs. A UE whose blended
/// cost is not positive everywhere is redrawn, and weights are renormalized
/// until no redraw is needed.
pub fn seeded_instance(n: usize, seed: u64) -> SystemConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jitter = Uniform::new_inclusive(0.7, 1.3);
    let log_g = Uniform::new_inclusive(1e9f64.ln(), 1e10f64.ln());
    let f = Uniform::new_inclusive(1e9, 2e9);
    let mut draw = || {
        let mut ue = default_ue();
        ue.c1_attenuation *= jitter.sample(&mut rng);
        ue.c2_utility *= jitter.sample(&mut rng);
        ue.cpu_freq_edge_alloc = log_g.sample(&mut rng).exp();
        ue.cpu_freq_local = f.sample(&mut rng);
        ue
    };
    let mut cfg = default_paper_config();
    cfg.seed = seed;
    cfg.ues = (0..n).map(|_| draw()).collect();
    loop {
        cfg.cost_weights = WeightPreset::EqualNormalized.weights(&cfg.ues, cfg.eps_fwd);
        let mut redrawn = false;
        for i in 0..n {
            while !cost_positive(&cfg, i) {
                cfg.ues[i] = draw();
                redrawn = true;
            }
        }
        if !redrawn {
            return cfg;
        }
    }
}

fn cost_positive(cfg: &SystemConfig, n: usize) -> bool {
    let hi = cfg.ues[n].s_upper();
    [Mode::Local, Mode::Edge]
        .iter()
        .all(|&m| cfg.branch(n, m).min_on(hi).1 > 0.0)
}

/// Fair-coin offloading with uniform step counts, scaled down onto the edge
/// budget when needed and rounded to integers.
pub fn random_baseline(cfg: &SystemConfig, seed: u64) -> Allocation {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut alloc = Allocation::zeros(cfg.n());
    for (n, ue) in cfg.ues.iter().enumerate() {
        let a = if rng.gen_bool(0.5) { 1.0 } else { 0.0 };
        alloc.a[n] = a;
        alloc.s[n] = ue.cap(a) * rng.gen::<f64>();
    }
    let used: f64 = (0..cfg.n()).filter(|&n| alloc.a[n] == 1.0).map(|n| alloc.s[n]).sum();
    if used > cfg.s_edge_budget {
        let scale = cfg.s_edge_budget / used;
        for n in 0..cfg.n() {
            if alloc.a[n] == 1.0 {
                alloc.s[n] *= scale;
            }
        }
    }
    round_steps(cfg, &alloc)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweptParam {
    SEdgeBudget,
    /// Values index [`WeightPreset::ALL`].
    CostWeights,
    /// Applied to every UE.
    SCapLocal,
}

impl SweptParam {
    pub fn name(self) -> &'static str {
        match self {
            SweptParam::SEdgeBudget => "s_edge_budget",
            SweptParam::CostWeights => "cost_weights",
            SweptParam::SCapLocal => "s_cap_local",
        }
    }

    /// Copy of `base` with `value` applied.
    pub fn apply(self, base: &SystemConfig, value: f64) -> Result<SystemConfig> {
        let mut cfg = base.clone();
        match self {
            SweptParam::SEdgeBudget => cfg.s_edge_budget = value,
            SweptParam::SCapLocal => {
                for ue in &mut cfg.ues {
                    ue.s_cap_local = value;
                }
            }
            SweptParam::CostWeights => {
                let preset = (value >= 0.0 && value.fract() == 0.0)
                    .then(|| WeightPreset::ALL.get(value as usize))
                    .flatten()
                    .ok_or_else(|| Error::InvalidArgument(format!("no weight preset with index {value}")))?;
                cfg.cost_weights = preset.weights(&cfg.ues, cfg.eps_fwd);
            }
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Proposed,
    Baseline,
    Oracle,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Proposed => "proposed",
            Method::Baseline => "baseline",
            Method::Oracle => "oracle",
        }
    }
}

fn default_grid_step() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// Names the output file of this spec when a plan is split by label.
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub label: String,
    pub base: SystemConfig,
    pub swept_param: SweptParam,
    pub values: Vec<f64>,
    pub seeds: Vec<u64>,
    pub methods: Vec<Method>,
    /// Grid spacing of the oracle method.
    #[serde(default = "default_grid_step")]
    pub grid_step: f64,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::config("values", "must not be empty"));
        }
        if self.methods.is_empty() {
            return Err(Error::config("methods", "must not be empty"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "must not be empty"));
        }
        if !(self.grid_step.is_finite() && self.grid_step > 0.0) {
            return Err(Error::config("grid_step", "must be positive and finite"));
        }
        self.base.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepPlan {
    pub specs: Vec<SweepSpec>,
}

impl SweepPlan {
    pub fn validate(&self) -> Result<()> {
        if self.specs.is_empty() {
            return Err(Error::config("specs", "must not be empty"));
        }
        for (i, spec) in self.specs.iter().enumerate() {
            spec.validate().map_err(|e| match e {
                Error::InvalidConfig { field, reason } => Error::InvalidConfig {
                    field: format!("specs[{i}].{field}"),
                    reason,
                },
                other => other,
            })?;
        }
        Ok(())
    }

    /// Distinct labels in first-appearance order.
    pub fn labels(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for spec in &self.specs {
            if !out.contains(&spec.label.as_str()) {
                out.push(&spec.label);
            }
        }
        out
    }
}

/// Consumption study: every weight preset swept over [`BUDGET_GRID`], plus
/// the random baseline under equal weights.
pub fn consumption_plan(base: &SystemConfig, seeds: &[u64]) -> SweepPlan {
    let mut specs: Vec<SweepSpec> = WeightPreset::ALL
        .iter()
        .map(|preset| {
            let mut cfg = base.clone();
            cfg.cost_weights = preset.weights(&cfg.ues, cfg.eps_fwd);
            SweepSpec {
                label: String::new(),
                base: cfg,
                swept_param: SweptParam::SEdgeBudget,
                values: BUDGET_GRID.to_vec(),
                seeds: seeds.to_vec(),
                methods: vec![Method::Proposed],
                grid_step: 1.0,
            }
        })
        .collect();
    let mut cfg = base.clone();
    cfg.cost_weights = WeightPreset::EqualNormalized.weights(&cfg.ues, cfg.eps_fwd);
    specs.push(SweepSpec {
        label: String::new(),
        base: cfg,
        swept_param: SweptParam::SEdgeBudget,
        values: BUDGET_GRID.to_vec(),
        seeds: seeds.to_vec(),
        methods: vec![Method::Baseline],
        grid_step: 1.0,
    });
    SweepPlan { specs }
}

/// Utility study: blend (0.3, 0.7), one labelled spec per local cap, each
/// swept over [`BUDGET_GRID`]. Weights stay those of `base`.
pub fn utility_plan(base: &SystemConfig, seeds: &[u64]) -> SweepPlan {
    let specs = LOCAL_CAPS
        .iter()
        .map(|&cap| {
            let mut cfg = base.clone();
            cfg.blend_weights = UTILITY_BLEND;
            for ue in &mut cfg.ues {
                ue.s_cap_local = cap;
            }
            SweepSpec {
                label: format!("cap{cap}"),
                base: cfg,
                swept_param: SweptParam::SEdgeBudget,
                values: BUDGET_GRID.to_vec(),
                seeds: seeds.to_vec(),
                methods: vec![Method::Proposed],
                grid_step: 1.0,
            }
        })
        .collect();
    SweepPlan { specs }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentRecord {
    pub method: Method,
    pub seed: u64,
    pub swept_param: SweptParam,
    pub swept_value: f64,
    pub cost_weights: CostWeights,
    pub blend_weights: BlendWeights,
    pub objective: f64,
    pub t_total: f64,
    pub accuracy: f64,
    pub e_total: f64,
    pub u_total: f64,
    pub offloaded_count: usize,
    pub iterations_outer: usize,
    pub iterations_inner_total: usize,
    pub wall_ms: f64,
    pub status: String,
}

impl ExperimentRecord {
    fn failed(method: Method, seed: u64, param: SweptParam, value: f64, cfg: &SystemConfig, err: &Error) -> Self {
        ExperimentRecord {
            method,
            seed,
            swept_param: param,
            swept_value: value,
            cost_weights: cfg.cost_weights,
            blend_weights: cfg.blend_weights,
            objective: f64::NAN,
            t_total: f64::NAN,
            accuracy: f64::NAN,
            e_total: f64::NAN,
            u_total: f64::NAN,
            offloaded_count: 0,
            iterations_outer: 0,
            iterations_inner_total: 0,
            wall_ms: 0.0,
            status: format!("error:{}", err.code()),
        }
    }

    pub fn is_ok(&self) -> bool {
        !self.status.starts_with("error")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    /// Fill `wall_ms` with measured times. Off by default so that repeated
    /// runs produce identical files.
    pub timing: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { timing: false }
    }
}

struct Outcome {
    objective: f64,
    components: Components,
    offloaded: usize,
    outer: usize,
    inner: usize,
    status: String,
}

fn outcome_of(cfg: &SystemConfig, alloc: &Allocation, status: &str) -> Outcome {
    Outcome {
        objective: cfg.objective(alloc),
        components: objective_breakdown(cfg, alloc),
        offloaded: alloc.offloaded_count(),
        outer: 0,
        inner: 0,
        status: status.to_string(),
    }
}

fn run_method(method: Method, cfg: &SystemConfig, seed: u64, grid_step: f64) -> Result<Outcome> {
    match method {
        Method::Proposed => {
            let mut cfg = cfg.clone();
            cfg.seed = seed;
            let report = sca::solve(&cfg)?;
            Ok(Outcome {
                objective: report.objective_binary,
                components: report.components,
                offloaded: report.allocation_binary.offloaded_count(),
                outer: report.iterations_outer,
                inner: report.iterations_inner_total,
                status: report.status.to_string(),
            })
        }
        Method::Baseline => Ok(outcome_of(cfg, &random_baseline(cfg, seed), "ok")),
        Method::Oracle => {
            let result = oracle::brute_force(cfg, grid_step)?;
            Ok(outcome_of(cfg, &result.allocation(), "ok"))
        }
    }
}

/// Runs one record.
pub fn run_point(spec: &SweepSpec, method: Method, value: f64, seed: u64, opts: RunOptions) -> ExperimentRecord {
    let param = spec.swept_param;
    let cfg = match param.apply(&spec.base, value).and_then(|c| c.validate().map(|_| c)) {
        Ok(cfg) => cfg,
        Err(e) => return ExperimentRecord::failed(method, seed, param, value, &spec.base, &e),
    };
    let start = Instant::now();
    let outcome = run_method(method, &cfg, seed, spec.grid_step);
    let wall_ms = if opts.timing {
        start.elapsed().as_secs_f64() * 1e3
    } else {
        0.0
    };
    match outcome {
        Ok(o) => ExperimentRecord {
            method,
            seed,
            swept_param: param,
            swept_value: value,
            cost_weights: cfg.cost_weights,
            blend_weights: cfg.blend_weights,
            objective: o.objective,
            t_total: o.components.t_total,
            accuracy: o.components.accuracy,
            e_total: o.components.e_total,
            u_total: o.components.u_total,
            offloaded_count: o.offloaded,
            iterations_outer: o.outer,
            iterations_inner_total: o.inner,
            wall_ms,
            status: o.status,
        },
        Err(e) => {
            let mut rec = ExperimentRecord::failed(method, seed, param, value, &cfg, &e);
            rec.wall_ms = wall_ms;
            rec
        }
    }
}

/// All (method, value, seed) records of `spec`, in that nesting order.
/// Points run in parallel; failures are reported in the status column.
pub fn run_sweep(spec: &SweepSpec) -> Vec<ExperimentRecord> {
    run_sweep_with(spec, RunOptions::default())
}

pub fn run_sweep_with(spec: &SweepSpec, opts: RunOptions) -> Vec<ExperimentRecord> {
    let mut points = Vec::with_capacity(spec.methods.len() * spec.values.len() * spec.seeds.len());
    for &m in &spec.methods {
        for &v in &spec.values {
            for &s in &spec.seeds {
                points.push((m, v, s));
            }
        }
    }
    points
        .into_par_iter()
        .map(|(m, v, s)| run_point(spec, m, v, s, opts))
        .collect()
}

/// Records of every spec, concatenated in plan order.
pub fn run_plan(plan: &SweepPlan, opts: RunOptions) -> Vec<(String, Vec<ExperimentRecord>)> {
    plan.specs
        .iter()
        .map(|spec| (spec.label.clone(), run_sweep_with(spec, opts)))
        .collect()
}

/// `%.9g`-style rendering: nine significant digits, trailing zeros removed,
/// exponent form outside `[1e-5, 1e9)`.
pub fn format_float(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        let mut out = trim_zeros(mantissa.to_string());
        let sign = if exp < 0 { '-' } else { '+' };
        write!(out, "e{sign}{:02}", exp.abs()).unwrap();
        out
    }
}

fn trim_zeros(s: String) -> String {
    if !s.contains('.') {
        return s;
    }
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn csv_row(r: &ExperimentRecord) -> [String; 19] {
    [
        r.method.name().to_string(),
        r.seed.to_string(),
        r.swept_param.name().to_string(),
        format_float(r.swept_value),
        format_float(r.cost_weights.c1),
        format_float(r.cost_weights.c2),
        format_float(r.cost_weights.c3),
        format_float(r.blend_weights.w1),
        format_float(r.blend_weights.w2),
        format_float(r.objective),
        format_float(r.t_total),
        format_float(r.accuracy),
        format_float(r.e_total),
        format_float(r.u_total),
        r.offloaded_count.to_string(),
        r.iterations_outer.to_string(),
        r.iterations_inner_total.to_string(),
        format_float(r.wall_ms),
        r.status.clone(),
    ]
}

pub fn write_csv<W: io::Write>(records: &[ExperimentRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record(csv_row(r))?;
    }
    w.flush()?;
    Ok(())
}

pub fn to_csv_string(records: &[ExperimentRecord]) -> Result<String> {
    let mut buf = Vec::new();
    write_csv(records, &mut buf)?;
    Ok(String::from_utf8(buf).expect("csv output is UTF-8"))
}
