//! Brute-force reference solver for small instances.
//!
//! Every binary offloading vector is enumerated. For a fixed vector the step
//! counts live on the grid `{0, h, 2h, ...}` below each cap: local UEs are
//! independent one-dimensional grid searches, and the offloaded UEs share the
//! edge budget. The shared part is searched exhaustively when the product grid
//! is small, and otherwise with a budget price followed by a marginal fill,
//! which is exact on the grid because each cost is convex in `s`.
//!
//! Nothing here calls into the continuous solver; costs are only evaluated.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Allocation, Mode, SystemConfig};

/// Hard limit on the number of UEs accepted by [`brute_force`].
pub const MAX_UES: usize = 20;

/// Largest product grid searched point by point for the offloaded set.
pub const MAX_PRODUCT_GRID: f64 = 1e6;

const PRICE_ITERATIONS: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleResult {
    pub best_a: Vec<f64>,
    pub best_s: Vec<f64>,
    pub best_objective: f64,
    pub assignments_evaluated: u64,
}

impl OracleResult {
    pub fn allocation(&self) -> Allocation {
        Allocation {
            a: self.best_a.clone(),
            s: self.best_s.clone(),
        }
    }
}

/// Cost of every grid point of one UE in one mode.
struct Table {
    cost: Vec<f64>,
}

impl Table {
    fn new(cfg: &SystemConfig, n: usize, mode: Mode, step: f64) -> Table {
        let cap = match mode {
            Mode::Local => cfg.ues[n].s_cap_local,
            Mode::Edge => cfg.ues[n].s_cap_edge,
        };
        let branch = cfg.branch(n, mode);
        let cost = (0..=grid_points(cap, step))
            .map(|k| branch.net(k as f64 * step))
            .collect();
        Table { cost }
    }

    fn len(&self) -> usize {
        self.cost.len()
    }

    /// Smallest index minimizing `cost[k] + price * k`.
    fn priced_argmin(&self, price: f64) -> usize {
        let mut best = 0;
        let mut best_val = self.cost[0];
        for (k, &c) in self.cost.iter().enumerate().skip(1) {
            let v = c + price * k as f64;
            if v < best_val {
                best = k;
                best_val = v;
            }
        }
        best
    }
}

/// Largest `k` with `k * step <= limit`.
fn grid_points(limit: f64, step: f64) -> usize {
    if limit <= 0.0 {
        return 0;
    }
    let mut k = (limit / step).floor() as usize;
    while k > 0 && k as f64 * step > limit {
        k -= 1;
    }
    while (k + 1) as f64 * step <= limit {
        k += 1;
    }
    k
}

fn check_step(grid_step: f64) -> Result<()> {
    if !(grid_step.is_finite() && grid_step > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "grid_step must be positive and finite, got {grid_step}"
        )));
    }
    Ok(())
}

/// Optimal grid steps and objective for a fixed binary offloading vector.
pub fn inner_fixed_assignment(cfg: &SystemConfig, a_binary: &[f64], grid_step: f64) -> Result<(Vec<f64>, f64)> {
    check_step(grid_step)?;
    if a_binary.len() != cfg.n() {
        return Err(Error::InvalidArgument(format!(
            "assignment has {} entries for {} UEs",
            a_binary.len(),
            cfg.n()
        )));
    }
    if let Some(x) = a_binary.iter().find(|&&x| x != 0.0 && x != 1.0) {
        return Err(Error::InvalidArgument(format!("assignment entry {x} is not binary")));
    }
    let local: Vec<Table> = (0..cfg.n())
        .map(|n| Table::new(cfg, n, Mode::Local, grid_step))
        .collect();
    let edge: Vec<Table> = (0..cfg.n())
        .map(|n| Table::new(cfg, n, Mode::Edge, grid_step))
        .collect();
    let offloaded: Vec<bool> = a_binary.iter().map(|&x| x == 1.0).collect();
    Ok(evaluate(cfg, &local, &edge, &offloaded, grid_step))
}

fn evaluate(cfg: &SystemConfig, local: &[Table], edge: &[Table], offloaded: &[bool], step: f64) -> (Vec<f64>, f64) {
    let n = offloaded.len();
    let mut idx = vec![0usize; n];
    let mut total = 0.0;
    let mut shared = Vec::new();
    for i in 0..n {
        if offloaded[i] {
            shared.push(&edge[i]);
        } else {
            idx[i] = local[i].priced_argmin(0.0);
            total += local[i].cost[idx[i]];
        }
    }
    let budget = grid_points(cfg.s_edge_budget, step);
    let (picks, cost) = if shared.is_empty() {
        (Vec::new(), 0.0)
    } else if shared.iter().map(|t| t.len() as f64).product::<f64>() <= MAX_PRODUCT_GRID {
        exhaustive(&shared, budget)
    } else {
        price_and_fill(&shared, budget)
    };
    total += cost;
    for (i, k) in (0..n).filter(|&i| offloaded[i]).zip(picks) {
        idx[i] = k;
    }
    (idx.iter().map(|&k| k as f64 * step).collect(), total)
}

/// Walks the whole product grid of the offloaded UEs, skipping only points
/// over the budget.
fn exhaustive(tables: &[&Table], budget: usize) -> (Vec<usize>, f64) {
    struct Walk<'t> {
        tables: &'t [&'t Table],
        current: Vec<usize>,
        best: Vec<usize>,
        best_cost: f64,
    }
    impl Walk<'_> {
        fn visit(&mut self, depth: usize, left: usize, cost: f64) {
            if depth == self.tables.len() {
                if cost < self.best_cost {
                    self.best_cost = cost;
                    self.best.clone_from(&self.current);
                }
                return;
            }
            let table = self.tables[depth];
            for k in 0..table.len().min(left + 1) {
                self.current[depth] = k;
                self.visit(depth + 1, left - k, cost + table.cost[k]);
            }
        }
    }
    let mut walk = Walk {
        tables,
        current: vec![0; tables.len()],
        best: vec![0; tables.len()],
        best_cost: f64::INFINITY,
    };
    walk.visit(0, budget, 0.0);
    (walk.best, walk.best_cost)
}

/// Finds a budget price at which the priced grid minimizers fit, then spends
/// what is left one grid step at a time on the largest marginal decrease.
fn price_and_fill(tables: &[&Table], budget: usize) -> (Vec<usize>, f64) {
    let picks_at = |price: f64| -> Vec<usize> { tables.iter().map(|t| t.priced_argmin(price)).collect() };
    let used = |picks: &[usize]| picks.iter().sum::<usize>();

    let mut picks = picks_at(0.0);
    if used(&picks) > budget {
        let mut hi = 1.0;
        while used(&picks_at(hi)) > budget {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        for _ in 0..PRICE_ITERATIONS {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if used(&picks_at(mid)) > budget {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        picks = picks_at(hi);
    }

    let mut left = budget - used(&picks);
    while left > 0 {
        let mut best: Option<(usize, f64)> = None;
        for (j, t) in tables.iter().enumerate() {
            let k = picks[j];
            if k + 1 >= t.len() {
                continue;
            }
            let d = t.cost[k + 1] - t.cost[k];
            if d < 0.0 && best.map_or(true, |(_, bd)| d < bd) {
                best = Some((j, d));
            }
        }
        let Some((j, _)) = best else { break };
        picks[j] += 1;
        left -= 1;
    }
    let cost = tables.iter().zip(&picks).map(|(t, &k)| t.cost[k]).sum();
    (picks, cost)
}

fn tie_order(x: &(u64, f64, u32), y: &(u64, f64, u32), n: usize) -> Ordering {
    x.1.total_cmp(&y.1)
        .then(x.2.cmp(&y.2))
        .then_with(|| lexicographic(x.0, n).cmp(&lexicographic(y.0, n)))
}

/// Bits of `mask` as the vector `a` in index order.
fn lexicographic(mask: u64, n: usize) -> Vec<bool> {
    (0..n).map(|i| mask >> i & 1 == 1).collect()
}

/// Minimum over all `2^N` offloading vectors. Ties go to fewer offloaded UEs,
/// then to the lexicographically smaller vector.
pub fn brute_force(cfg: &SystemConfig, grid_step: f64) -> Result<OracleResult> {
    let n = cfg.n();
    if n > MAX_UES {
        return Err(Error::OracleTooLarge { n, max: MAX_UES });
    }
    check_step(grid_step)?;
    cfg.validate()?;

    let local: Vec<Table> = (0..n).map(|i| Table::new(cfg, i, Mode::Local, grid_step)).collect();
    let edge: Vec<Table> = (0..n).map(|i| Table::new(cfg, i, Mode::Edge, grid_step)).collect();
    let count = 1u64 << n;
    let best = (0..count)
        .into_par_iter()
        .map(|mask| {
            let offloaded = lexicographic(mask, n);
            let (_, cost) = evaluate(cfg, &local, &edge, &offloaded, grid_step);
            (mask, cost, mask.count_ones())
        })
        .min_by(|x, y| tie_order(x, y, n))
        .expect("at least one assignment");

    let offloaded = lexicographic(best.0, n);
    let (best_s, best_objective) = evaluate(cfg, &local, &edge, &offloaded, grid_step);
    Ok(OracleResult {
        best_a: offloaded.iter().map(|&o| if o { 1.0 } else { 0.0 }).collect(),
        best_s,
        best_objective,
        assignments_evaluated: count,
    })
}
