//! Successive convex approximation driver.
//!
//! The inner loop alternates an exact KKT solve of the penalized surrogate
//! with a refresh of the auxiliaries at the new point; because the surrogate
//! is tight at its expansion point this is a majorization-minimization scheme
//! and the penalized objective never increases. The outer loop re-anchors the
//! linearized binary penalty at the latest offload indicators until the
//! decision vector stops moving. The relaxed result is then rounded to a
//! binary, integer-step allocation that satisfies every constraint exactly.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::kkt::{solve_kkt, Multipliers};
use crate::model::{Allocation, Mode, SystemConfig};
use crate::roots::{self, BisectOptions};
use crate::surrogate::{penalized_surrogate, update_auxiliaries, PenaltyAnchor};

/// One row of the solver trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterationRecord {
    pub outer: usize,
    pub inner: usize,
    /// Penalized surrogate at the iterate, with auxiliaries refreshed there.
    pub p2: f64,
    /// Original objective at the iterate.
    pub p1: f64,
    pub max_da: f64,
    pub max_ds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SolveStatus {
    Converged,
    MaxIterations,
    Error(String),
}

impl SolveStatus {
    pub fn is_converged(&self) -> bool {
        matches!(self, SolveStatus::Converged)
    }
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolveStatus::Converged => f.write_str("converged"),
            SolveStatus::MaxIterations => f.write_str("max-iterations"),
            SolveStatus::Error(code) => write!(f, "error:{code}"),
        }
    }
}

impl Serialize for SolveStatus {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Totals reported alongside the objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Components {
    /// Total processing time in seconds.
    pub t_total: f64,
    pub error_mean: f64,
    /// `1 - error_mean`.
    pub accuracy: f64,
    /// Total energy in joules.
    pub e_total: f64,
    pub u_total: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub allocation_relaxed: Allocation,
    pub allocation_binary: Allocation,
    pub multipliers: Multipliers,
    pub objective_relaxed: f64,
    pub objective_binary: f64,
    pub components: Components,
    pub trace: Vec<IterationRecord>,
    pub status: SolveStatus,
    pub iterations_outer: usize,
    pub iterations_inner_total: usize,
}

#[derive(Debug, Clone)]
pub struct IntraOutcome {
    pub allocation: Allocation,
    pub multipliers: Multipliers,
    pub trace: Vec<IterationRecord>,
    pub iterations: usize,
    pub converged: bool,
}

fn max_change(prev: &Allocation, next: &Allocation) -> (f64, f64) {
    let da = prev
        .a
        .iter()
        .zip(&next.a)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    let ds = prev
        .s
        .iter()
        .zip(&next.s)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    (da, ds)
}

/// Inner loop for a fixed penalty anchor.
///
/// `trace[0]` is the starting point; every further row is one KKT solve
/// followed by an auxiliary refresh. Stops when the penalized surrogate
/// changes by at most `inner_tol` relative, or after `max_inner` solves.
pub fn intra_solve(
    cfg: &SystemConfig,
    initial: &Allocation,
    anchor: &PenaltyAnchor,
    outer: usize,
) -> Result<IntraOutcome> {
    let tol = &cfg.tolerances;
    let mut x = initial.clone();
    let mut aux = update_auxiliaries(cfg, &x)?;
    let mut value = penalized_surrogate(cfg, &x, &aux, anchor);
    if !value.is_finite() {
        return Err(Error::NonFinite { outer, inner: 0 });
    }
    let mut trace = vec![IterationRecord {
        outer,
        inner: 0,
        p2: value,
        p1: cfg.objective(&x),
        max_da: 0.0,
        max_ds: 0.0,
    }];
    let mut multipliers = Multipliers::zeros(cfg.n());
    let mut converged = false;
    let mut iterations = 0;
    for k in 1..=tol.max_inner {
        let sol = solve_kkt(cfg, &aux, anchor)?;
        let next = sol.allocation;
        multipliers = sol.multipliers;
        aux = update_auxiliaries(cfg, &next)?;
        let next_value = penalized_surrogate(cfg, &next, &aux, anchor);
        if !next_value.is_finite() {
            return Err(Error::NonFinite { outer, inner: k });
        }
        let (max_da, max_ds) = max_change(&x, &next);
        trace.push(IterationRecord {
            outer,
            inner: k,
            p2: next_value,
            p1: cfg.objective(&next),
            max_da,
            max_ds,
        });
        iterations = k;
        let change = (next_value - value).abs();
        x = next;
        let scale = value.abs().max(1.0);
        value = next_value;
        if change <= tol.inner_tol * scale {
            converged = true;
            break;
        }
    }
    Ok(IntraOutcome {
        allocation: x,
        multipliers,
        trace,
        iterations,
        converged,
    })
}

/// Default starting point: every indicator at `init_offload`, steps at half
/// the smaller cap.
pub fn initial_allocation(cfg: &SystemConfig) -> Allocation {
    Allocation {
        a: vec![cfg.init_offload; cfg.n()],
        s: cfg
            .ues
            .iter()
            .map(|ue| 0.5 * ue.s_cap_local.min(ue.s_cap_edge))
            .collect(),
    }
}

/// Seeded random starting point with indicators in `(0.05, 0.95)`.
pub fn random_start<R: Rng>(cfg: &SystemConfig, rng: &mut R) -> Allocation {
    let mut alloc = Allocation::zeros(cfg.n());
    for (n, ue) in cfg.ues.iter().enumerate() {
        alloc.a[n] = rng.gen_range(0.05..0.95);
        alloc.s[n] = rng.gen_range(0.0..ue.s_cap_local.min(ue.s_cap_edge));
    }
    alloc
}

/// Outer penalty-linearization loop followed by rounding.
pub fn inter_solve(cfg: &SystemConfig, initial: &Allocation) -> Result<SolveReport> {
    let tol = &cfg.tolerances;
    let s_scale = cfg.s_upper().max(f64::MIN_POSITIVE);
    let mut x = initial.clone();
    let mut anchor = PenaltyAnchor::new(x.a.iter().map(|a| a.clamp(0.0, 1.0)).collect());
    let mut trace = Vec::new();
    let mut multipliers = Multipliers::zeros(cfg.n());
    let mut status = SolveStatus::MaxIterations;
    let mut outer_done = 0;
    let mut inner_total = 0;
    for i in 1..=tol.max_outer {
        let intra = intra_solve(cfg, &x, &anchor, i)?;
        inner_total += intra.iterations;
        trace.extend(intra.trace);
        multipliers = intra.multipliers;
        let (da, ds) = max_change(&x, &intra.allocation);
        x = intra.allocation;
        anchor = PenaltyAnchor::new(x.a.clone());
        outer_done = i;
        if da.max(ds / s_scale) <= tol.outer_tol {
            status = SolveStatus::Converged;
            break;
        }
    }
    let binary = round_and_repair(cfg, &x);
    Ok(SolveReport {
        objective_relaxed: cfg.objective(&x),
        objective_binary: cfg.objective(&binary),
        components: objective_breakdown(cfg, &binary),
        allocation_relaxed: x,
        allocation_binary: binary,
        multipliers,
        trace,
        status,
        iterations_outer: outer_done,
        iterations_inner_total: inner_total,
    })
}

/// Solves from the default start plus `multi_starts - 1` seeded random
/// starts, keeping the best binary objective (earliest start on ties).
pub fn solve(cfg: &SystemConfig) -> Result<SolveReport> {
    let mut best = inter_solve(cfg, &initial_allocation(cfg))?;
    if cfg.multi_starts > 1 {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        for _ in 1..cfg.multi_starts {
            let start = random_start(cfg, &mut rng);
            let report = inter_solve(cfg, &start)?;
            if report.objective_binary < best.objective_binary {
                best = report;
            }
        }
    }
    Ok(best)
}

/// Rounds offload indicators at 0.5, re-optimizes steps for the fixed
/// decisions, projects the offloaded steps onto the edge budget and rounds
/// steps to integers. The result always satisfies every constraint.
pub fn round_and_repair(cfg: &SystemConfig, relaxed: &Allocation) -> Allocation {
    let n = cfg.n();
    let max_iter = cfg.tolerances.max_bisection_iter;
    let mut out = Allocation::zeros(n);
    let mut caps = vec![0.0; n];
    for i in 0..n {
        let offloaded = relaxed.a[i] >= 0.5;
        out.a[i] = if offloaded { 1.0 } else { 0.0 };
        caps[i] = cfg.ues[i].cap(out.a[i]);
        let b = cfg.branch(i, Mode::from_offload(offloaded));
        out.s[i] = roots::convex_argmin(|s| b.slope(s), 0.0, caps[i], max_iter);
    }

    let offloaded: Vec<usize> = (0..n).filter(|&i| out.a[i] == 1.0).collect();
    let budget = cfg.s_edge_budget;
    let used: f64 = offloaded.iter().map(|&i| out.s[i]).sum();
    if used > budget {
        // Shared price on edge steps: each offloaded UE minimizes R1(s) + price * s.
        let steps_at = |price: f64| -> Vec<f64> {
            offloaded
                .iter()
                .map(|&i| {
                    let b = cfg.branch(i, Mode::Edge);
                    roots::convex_argmin(|s| b.slope(s) + price, 0.0, caps[i], max_iter)
                })
                .collect()
        };
        let slack = |price: f64| budget - steps_at(price).iter().sum::<f64>();
        let mut hi = 1.0;
        while slack(hi) < 0.0 && hi < 1e300 {
            hi *= 2.0;
        }
        let b = roots::bisect_increasing(
            slack,
            0.0,
            hi,
            BisectOptions {
                f_tol: 0.0,
                max_iter,
            },
        );
        for (&i, s) in offloaded.iter().zip(steps_at(b.hi)) {
            out.s[i] = s;
        }
    }

    let mut out = round_steps(cfg, &out);
    fill_edge_steps(cfg, &mut out);
    if !cfg.check_feasibility(&out).is_feasible() {
        return Allocation::zeros(n);
    }
    out
}

/// Hands leftover integer edge budget back one step at a time to the
/// offloaded UE whose cost drops the most, while some drop is available.
fn fill_edge_steps(cfg: &SystemConfig, out: &mut Allocation) {
    let offloaded: Vec<usize> = (0..cfg.n()).filter(|&i| out.a[i] == 1.0).collect();
    let branches: Vec<_> = offloaded.iter().map(|&i| cfg.branch(i, Mode::Edge)).collect();
    let mut used: f64 = offloaded.iter().map(|&i| out.s[i]).sum();
    while used + 1.0 <= cfg.s_edge_budget {
        let mut best: Option<(usize, f64)> = None;
        for (k, &i) in offloaded.iter().enumerate() {
            let s = out.s[i];
            if s + 1.0 > cfg.ues[i].s_cap_edge {
                continue;
            }
            let gain = branches[k].net(s + 1.0) - branches[k].net(s);
            if gain < 0.0 && best.map_or(true, |(_, g)| gain < g) {
                best = Some((i, gain));
            }
        }
        let Some((i, _)) = best else { break };
        out.s[i] += 1.0;
        used += 1.0;
    }
}

/// Rounds the step counts of a binary allocation to the nearest integer
/// within each cap, then takes unit steps off the largest offloaded entry
/// (lower index first on ties) until the edge budget holds.
pub fn round_steps(cfg: &SystemConfig, binary: &Allocation) -> Allocation {
    let mut out = binary.clone();
    for (i, ue) in cfg.ues.iter().enumerate() {
        out.s[i] = out.s[i].round().min(ue.cap(out.a[i]).floor()).max(0.0);
    }
    let offloaded: Vec<usize> = (0..cfg.n()).filter(|&i| out.a[i] == 1.0).collect();
    let mut used: f64 = offloaded.iter().map(|&i| out.s[i]).sum();
    while used > cfg.s_edge_budget {
        let Some(&j) = offloaded
            .iter()
            .filter(|&&i| out.s[i] >= 1.0)
            .max_by(|&&x, &&y| out.s[x].total_cmp(&out.s[y]).then(y.cmp(&x)))
        else {
            break;
        };
        out.s[j] -= 1.0;
        used -= 1.0;
    }
    out
}

/// Time, error, energy and utility totals of an allocation. Fractional
/// indicators blend the two branches.
pub fn objective_breakdown(cfg: &SystemConfig, alloc: &Allocation) -> Components {
    let n = cfg.n();
    let (mut t, mut err, mut e, mut u) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..n {
        let (a, s) = (alloc.a[i], alloc.s[i]);
        let local = cfg.branch(i, Mode::Local);
        let edge = cfg.branch(i, Mode::Edge);
        t += (1.0 - a) * local.time(s) + a * edge.time(s);
        e += (1.0 - a) * local.energy(s) + a * edge.energy(s);
        err += local.error(s);
        u += local.utility(s);
    }
    let error_mean = err / n as f64;
    Components {
        t_total: t,
        error_mean,
        accuracy: 1.0 - error_mean,
        e_total: e,
        u_total: u,
    }
}

/// Whether the inner-loop surrogate values never rise by more than `slack`.
pub fn inner_trace_is_monotone(trace: &[IterationRecord], slack: f64) -> bool {
    trace
        .windows(2)
        .filter(|w| w[0].outer == w[1].outer)
        .all(|w| w[1].p2 <= w[0].p2 + slack)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::reference_config;
    use crate::model::UeProfile;

    #[test]
    fn breakdown_examples() {
        let cfg = reference_config(3);
        let c = objective_breakdown(&cfg, &Allocation::zeros(3));
        assert_eq!(c.t_total, 0.0);
        assert_eq!(c.e_total, 0.0);
        assert_eq!(c.accuracy, 1.0 - cfg.eps_fwd);

        let one = reference_config(1);
        let c = objective_breakdown(&one, &Allocation { a: vec![0.0], s: vec![500.0] });
        assert!((c.t_total - 1.0).abs() < 1e-12);
        assert!((c.e_total - 33.75).abs() < 1e-9);
    }

    #[test]
    fn breakdown_is_permutation_invariant() {
        let mut cfg = reference_config(3);
        cfg.ues[1].cpu_freq_local = 2e9;
        cfg.ues[2].c1_attenuation = 0.02;
        let alloc = Allocation { a: vec![1.0, 0.0, 1.0], s: vec![10.0, 150.0, 77.0] };
        let c = objective_breakdown(&cfg, &alloc);
        let perm = [2, 0, 1];
        let mut pcfg = cfg.clone();
        pcfg.ues = perm.iter().map(|&i| cfg.ues[i].clone()).collect::<Vec<UeProfile>>();
        let palloc = Allocation {
            a: perm.iter().map(|&i| alloc.a[i]).collect(),
            s: perm.iter().map(|&i| alloc.s[i]).collect(),
        };
        let p = objective_breakdown(&pcfg, &palloc);
        for (x, y) in [
            (c.t_total, p.t_total),
            (c.e_total, p.e_total),
            (c.accuracy, p.accuracy),
            (c.u_total, p.u_total),
        ] {
            assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
        }
    }

    #[test]
    fn round_and_repair_is_idempotent() {
        let cfg = reference_config(4);
        let relaxed = Allocation { a: vec![0.2, 0.7, 0.5, 0.01], s: vec![33.3, 190.0, 12.0, 0.0] };
        let once = round_and_repair(&cfg, &relaxed);
        assert!(cfg.check_feasibility(&once).is_feasible());
        assert!(once.s.iter().all(|s| s.fract() == 0.0));
        let twice = round_and_repair(&cfg, &once);
        assert_eq!(once, twice);
    }

    #[test]
    fn round_and_repair_threshold_and_budget() {
        let mut cfg = reference_config(2);
        // Make the edge branch cheap so the offloaded UE wants many steps.
        for ue in &mut cfg.ues {
            ue.cpu_freq_edge_alloc = 1e9;
        }
        cfg.s_edge_budget = 25.0;
        let out = round_and_repair(&cfg, &Allocation { a: vec![0.51, 0.49], s: vec![100.0; 2] });
        assert_eq!(out.a, vec![1.0, 0.0]);
        assert_eq!(out.s[0], 25.0);
        assert!(cfg.check_feasibility(&out).is_feasible());
    }

    #[test]
    fn largest_first_downward_adjustment() {
        let mut cfg = reference_config(2);
        cfg.s_edge_budget = 21.0;
        let out = round_steps(&cfg, &Allocation { a: vec![1.0, 1.0], s: vec![10.6, 10.6] });
        assert_eq!(out.s, vec![10.0, 11.0]);

        let out = round_steps(&cfg, &Allocation { a: vec![1.0, 1.0], s: vec![10.2, 11.7] });
        assert_eq!(out.s, vec![10.0, 11.0]);

        // Local entries are never trimmed for the edge budget.
        let out = round_steps(&cfg, &Allocation { a: vec![0.0, 1.0], s: vec![150.4, 30.0] });
        assert_eq!(out.s, vec![150.0, 21.0]);
    }

    #[test]
    fn repair_spends_budget_exactly_when_binding() {
        let mut cfg = reference_config(2);
        for ue in &mut cfg.ues {
            ue.cpu_freq_edge_alloc = 1e9;
        }
        cfg.s_edge_budget = 21.0;
        let out = round_and_repair(&cfg, &Allocation { a: vec![1.0, 1.0], s: vec![0.0; 2] });
        assert_eq!(out.s.iter().sum::<f64>(), 21.0);
        assert!(cfg.check_feasibility(&out).is_feasible());
    }

    #[test]
    fn intra_fixed_point_terminates_immediately() {
        let cfg = reference_config(3);
        let anchor = PenaltyAnchor::new(vec![0.5; 3]);
        let first = intra_solve(&cfg, &initial_allocation(&cfg), &anchor, 1).unwrap();
        let again = intra_solve(&cfg, &first.allocation, &anchor, 1).unwrap();
        if first.converged {
            assert_eq!(again.iterations, 1);
            let last = again.trace.last().unwrap();
            assert!((last.p2 - again.trace[0].p2).abs() <= cfg.tolerances.inner_tol * last.p2.abs().max(1.0));
        }
    }

    #[test]
    fn inner_trace_descends() {
        let mut cfg = reference_config(5);
        cfg.s_edge_budget = 150.0;
        for (i, ue) in cfg.ues.iter_mut().enumerate() {
            ue.cpu_freq_edge_alloc = 1e9 + 4e8 * i as f64;
        }
        let anchor = PenaltyAnchor::new(vec![0.5; 5]);
        let out = intra_solve(&cfg, &initial_allocation(&cfg), &anchor, 1).unwrap();
        assert!(inner_trace_is_monotone(&out.trace, 1e-8), "{:#?}", out.trace);
    }

    #[test]
    fn binary_anchor_keeps_decisions() {
        let cfg = reference_config(3);
        let start = Allocation { a: vec![1.0, 0.0, 1.0], s: vec![50.0; 3] };
        let anchor = PenaltyAnchor::new(start.a.clone());
        let out = intra_solve(&cfg, &start, &anchor, 2).unwrap();
        for (a, p) in out.allocation.a.iter().zip(&anchor.a_prev) {
            assert!((a - p).abs() <= 1e-3);
        }
    }

    #[test]
    fn zero_budget_forces_local_processing() {
        let mut cfg = reference_config(3);
        for ue in &mut cfg.ues {
            ue.cpu_freq_edge_alloc = 1e9;
        }
        cfg.validate().unwrap();
        cfg.s_edge_budget = 0.0;
        let report = solve(&cfg).unwrap();
        assert!(report.allocation_binary.s.iter().zip(&report.allocation_binary.a).all(|(s, a)| a * s == 0.0));
        assert!(cfg.check_feasibility(&report.allocation_binary).is_feasible());
    }

    #[test]
    fn status_strings() {
        assert_eq!(SolveStatus::Converged.to_string(), "converged");
        assert_eq!(SolveStatus::MaxIterations.to_string(), "max-iterations");
        assert_eq!(SolveStatus::Error("non-finite".into()).to_string(), "error:non-finite");
    }
}
