//! Closed-form / bisection solution of the KKT system of one penalized
//! subproblem.
//!
//! For fixed auxiliaries and penalty anchor the subproblem separates per UE
//! once the edge multiplier `delta` is known:
//!
//! * the offload indicator solves a linear stationarity condition and is
//!   clamped to `[0, 1]` (`a_hat`),
//! * the step count is the root of the monotone stationarity function
//!   `phi(s) = 2 R0 R0' u + 2 R1 R1' v + 2 delta s z + zeta` on
//!   `[0, s_upper]` (`s_tilde`),
//! * the per-UE cap multiplier `zeta` is zero when the cap is slack and is
//!   otherwise found by bisection on the cap residual (`zeta_hat`).
//!
//! `delta` itself is the bisection root of the surrogate edge budget residual
//! (`delta_star`). The box multipliers `beta`, `gamma` are read off the
//! stationarity function of `a` at the clamp boundaries.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Allocation, Branch, SystemConfig};
use crate::roots::{self, BisectOptions};
use crate::surrogate::{edge_term, AuxiliaryState, PenaltyAnchor};

/// Doubling cap for the multiplier bracket searches.
pub const MAX_DOUBLINGS: u32 = 60;

/// Safeguard grid resolution for the monotonicity scan of `phi`.
const SAFEGUARD_POINTS: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Multipliers {
    /// Lower box bound on `a`.
    pub beta: Vec<f64>,
    /// Upper box bound on `a`.
    pub gamma: Vec<f64>,
    /// Per-UE step cap.
    pub zeta: Vec<f64>,
    /// Surrogate edge budget.
    pub delta: f64,
}

impl Multipliers {
    pub fn zeros(n: usize) -> Self {
        Multipliers {
            beta: vec![0.0; n],
            gamma: vec![0.0; n],
            zeta: vec![0.0; n],
            delta: 0.0,
        }
    }
}

/// Solution of one UE's conditions at a given `delta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitSolution {
    pub zeta: f64,
    pub a: f64,
    pub s: f64,
}

/// One penalized subproblem: configuration, auxiliaries and anchor.
pub struct Subproblem<'a> {
    cfg: &'a SystemConfig,
    aux: &'a AuxiliaryState,
    anchor: &'a PenaltyAnchor,
    branches: Vec<(Branch, Branch)>,
}

impl<'a> Subproblem<'a> {
    pub fn new(cfg: &'a SystemConfig, aux: &'a AuxiliaryState, anchor: &'a PenaltyAnchor) -> Self {
        assert_eq!(aux.u.len(), cfg.n());
        assert_eq!(anchor.a_prev.len(), cfg.n());
        Subproblem {
            cfg,
            aux,
            anchor,
            branches: cfg.branches(),
        }
    }

    pub fn n(&self) -> usize {
        self.cfg.n()
    }

    fn tol(&self) -> f64 {
        self.cfg.tolerances.bisection_tol
    }

    fn max_iter(&self) -> usize {
        self.cfg.tolerances.max_bisection_iter
    }

    /// Coefficient of `a_n` in `D_n`; strictly positive.
    pub fn a_coefficient(&self, n: usize, delta: f64) -> f64 {
        let aux = self.aux;
        0.5 / aux.u[n] + 0.5 / aux.v[n] + 0.5 * delta / aux.z[n]
    }

    fn a_offset(&self, n: usize, zeta: f64) -> f64 {
        let ue = &self.cfg.ues[n];
        0.5 / self.aux.u[n] + self.cfg.tau_penalty * (2.0 * self.anchor.a_prev[n] - 1.0)
            - zeta * (ue.s_cap_local - ue.s_cap_edge)
    }

    /// Stationarity function of `a_n` without box multipliers.
    pub fn d_n(&self, n: usize, a: f64, zeta: f64, delta: f64) -> f64 {
        self.a_coefficient(n, delta) * a - self.a_offset(n, zeta)
    }

    /// Unclamped root of `D_n`.
    pub fn a_hat(&self, n: usize, zeta: f64, delta: f64) -> f64 {
        self.a_offset(n, zeta) / self.a_coefficient(n, delta)
    }

    pub fn a_tilde(&self, n: usize, zeta: f64, delta: f64) -> f64 {
        self.a_hat(n, zeta, delta).clamp(0.0, 1.0)
    }

    /// Stationarity function of `s_n`; non-decreasing in `s` when costs are
    /// positive.
    pub fn phi(&self, n: usize, s: f64, zeta: f64, delta: f64) -> f64 {
        let (local, edge) = &self.branches[n];
        let aux = self.aux;
        2.0 * local.net(s) * local.slope(s) * aux.u[n]
            + 2.0 * edge.net(s) * edge.slope(s) * aux.v[n]
            + 2.0 * delta * s * aux.z[n]
            + zeta
    }

    /// Root of `phi` on `[0, s_upper]`, or the boundary whose sign shows the
    /// root lies outside.
    pub fn s_tilde(&self, n: usize, zeta: f64, delta: f64) -> Result<f64> {
        let hi = self.cfg.ues[n].s_upper();
        let f = |s: f64| self.phi(n, s, zeta, delta);
        if self.cfg.allow_nonpositive_cost {
            let changes = roots::sign_changes(f, 0.0, hi, SAFEGUARD_POINTS);
            if changes > 1 {
                return Err(Error::NonBracketing {
                    n,
                    sign_changes: changes,
                });
            }
        }
        if f(0.0) >= 0.0 {
            return Ok(0.0);
        }
        if f(hi) <= 0.0 {
            return Ok(hi);
        }
        let b = roots::bisect_increasing(
            f,
            0.0,
            hi,
            BisectOptions {
                f_tol: 0.0,
                max_iter: self.max_iter(),
            },
        );
        Ok(b.best())
    }

    /// Cap residual `I_n = s - (1 - a) cap_local - a cap_edge` at the
    /// stationary point for `(zeta, delta)`.
    pub fn cap_residual(&self, n: usize, zeta: f64, delta: f64) -> Result<f64> {
        let a = self.a_tilde(n, zeta, delta);
        let s = self.s_tilde(n, zeta, delta)?;
        Ok(s - self.cfg.ues[n].cap(a))
    }

    /// Cap multiplier for a given `delta` (clamped at zero).
    pub fn zeta_hat(&self, n: usize, delta: f64) -> Result<f64> {
        Ok(self.unit(n, delta)?.zeta)
    }

    /// `(zeta, a, s)` of UE `n` at edge multiplier `delta`: zeta first, then
    /// a and s at that zeta.
    pub fn unit(&self, n: usize, delta: f64) -> Result<UnitSolution> {
        let ue = &self.cfg.ues[n];
        let a0 = self.a_tilde(n, 0.0, delta);
        let s0 = self.s_tilde(n, 0.0, delta)?;
        if s0 - ue.cap(a0) <= 0.0 {
            if s0 >= ue.s_upper() {
                // The upper end of the s-box coincides with the active cap;
                // its multiplier is carried by zeta.
                let p = self.phi(n, s0, 0.0, delta);
                if p < 0.0 {
                    return self.unit_at(n, -p, delta);
                }
            }
            return Ok(UnitSolution {
                zeta: 0.0,
                a: a0,
                s: s0,
            });
        }
        let neg_i = |zeta: f64| -self.cap_residual(n, zeta, delta).unwrap_or(f64::NAN);
        let (hi, _) = roots::expand_upper(neg_i, 1.0, MAX_DOUBLINGS, "cap multiplier")?;
        let f_tol = 1e-2 * self.tol() * (1.0 / hi).min(1.0);
        let b = roots::bisect_increasing(
            neg_i,
            0.0,
            hi,
            BisectOptions {
                f_tol,
                max_iter: self.max_iter(),
            },
        );
        // Prefer the end on the feasible side unless the other is strictly closer.
        let zeta = if b.f_hi.abs() <= f_tol || b.f_hi.abs() <= b.f_lo.abs() {
            b.hi
        } else {
            b.lo
        };
        self.unit_at(n, zeta.max(0.0), delta)
    }

    fn unit_at(&self, n: usize, zeta: f64, delta: f64) -> Result<UnitSolution> {
        Ok(UnitSolution {
            zeta,
            a: self.a_tilde(n, zeta, delta),
            s: self.s_tilde(n, zeta, delta)?,
        })
    }

    fn units(&self, delta: f64) -> Result<Vec<UnitSolution>> {
        (0..self.n()).map(|n| self.unit(n, delta)).collect()
    }

    fn residual_of(&self, units: &[UnitSolution]) -> f64 {
        units
            .iter()
            .zip(&self.aux.z)
            .map(|(u, &z)| edge_term(u.a, u.s, z))
            .sum::<f64>()
            - self.cfg.s_edge_budget
    }

    /// Surrogate edge budget residual `Phi(delta)`; non-increasing in delta.
    pub fn edge_residual(&self, delta: f64) -> Result<f64> {
        Ok(self.residual_of(&self.units(delta)?))
    }

    /// Edge multiplier: zero when the budget is slack at `delta = 0`,
    /// otherwise the bisection root of `Phi`.
    pub fn delta_star(&self) -> Result<f64> {
        Ok(self.delta_search()?.0)
    }

    fn delta_search(&self) -> Result<(f64, Vec<UnitSolution>)> {
        let units0 = self.units(0.0)?;
        if self.residual_of(&units0) <= 0.0 {
            return Ok((0.0, units0));
        }
        let tol = self.tol();
        let mut hi = 1.0;
        let mut hi_units = None;
        for _ in 0..=MAX_DOUBLINGS {
            let units = self.units(hi)?;
            if self.residual_of(&units) <= tol {
                hi_units = Some(units);
                break;
            }
            hi *= 2.0;
        }
        let Some(hi_units) = hi_units else {
            let hi = hi / 2.0;
            return Err(Error::InfeasibleBudget {
                residual: self.edge_residual(hi)?,
                delta_hi: hi,
            });
        };
        let f_tol = tol * (1.0 / hi).min(1.0);
        let mut failure = None;
        let b = roots::bisect_increasing(
            |d| match self.edge_residual(d) {
                Ok(r) => -r,
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::NAN
                }
            },
            0.0,
            hi,
            BisectOptions {
                f_tol,
                max_iter: self.max_iter(),
            },
        );
        if let Some(e) = failure {
            return Err(e);
        }
        let delta = if b.f_hi.abs() <= f_tol || b.f_hi.abs() <= b.f_lo.abs() {
            b.hi
        } else {
            b.lo
        };
        if delta == hi {
            return Ok((delta, hi_units));
        }
        Ok((delta, self.units(delta)?))
    }

    /// Solves the subproblem: optimal allocation plus all multipliers.
    pub fn solve(&self) -> Result<KktSolution> {
        let (delta, units) = self.delta_search()?;
        let n = self.n();
        let mut alloc = Allocation::zeros(n);
        let mut mult = Multipliers::zeros(n);
        mult.delta = delta;
        for (i, u) in units.iter().enumerate() {
            alloc.a[i] = u.a;
            alloc.s[i] = u.s;
            mult.zeta[i] = u.zeta;
            mult.beta[i] = self.d_n(i, 0.0, u.zeta, delta).max(0.0);
            mult.gamma[i] = -self.d_n(i, 1.0, u.zeta, delta).min(0.0);
        }
        Ok(KktSolution {
            allocation: alloc,
            multipliers: mult,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KktSolution {
    pub allocation: Allocation,
    pub multipliers: Multipliers,
}

/// Solves the KKT conditions of the penalized subproblem defined by `aux`
/// and `anchor`.
pub fn solve_kkt(
    cfg: &SystemConfig,
    aux: &AuxiliaryState,
    anchor: &PenaltyAnchor,
) -> Result<KktSolution> {
    Subproblem::new(cfg, aux, anchor).solve()
}

/// Largest violation of each KKT family at a candidate primal-dual point.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct KktResiduals {
    pub stationarity_a: f64,
    pub stationarity_s: f64,
    pub primal: f64,
    pub complementary: f64,
    pub dual: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity_a
            .max(self.stationarity_s)
            .max(self.primal)
            .max(self.complementary)
            .max(self.dual)
    }
}

/// Evaluates the Lagrangian conditions directly from their definitions.
///
/// The lower bound `s >= 0` carries an implicit multiplier, so at `s = 0`
/// only a negative `dL/ds` counts as a violation.
pub fn kkt_residuals(
    cfg: &SystemConfig,
    aux: &AuxiliaryState,
    anchor: &PenaltyAnchor,
    alloc: &Allocation,
    mult: &Multipliers,
) -> KktResiduals {
    let mut r = KktResiduals::default();
    let tau = cfg.tau_penalty;
    let delta = mult.delta;
    let mut mass = 0.0;
    for n in 0..cfg.n() {
        let ue = &cfg.ues[n];
        let (a, s) = (alloc.a[n], alloc.s[n]);
        let (u, v, z) = (aux.u[n], aux.v[n], aux.z[n]);
        let (beta, gamma, zeta) = (mult.beta[n], mult.gamma[n], mult.zeta[n]);
        let local = cfg.branch(n, crate::model::Mode::Local);
        let edge = cfg.branch(n, crate::model::Mode::Edge);

        let dl_da = -(1.0 - a) / (2.0 * u) + a / (2.0 * v)
            - tau * (2.0 * anchor.a_prev[n] - 1.0)
            - beta
            + gamma
            + delta * a / (2.0 * z)
            + zeta * (ue.s_cap_local - ue.s_cap_edge);
        r.stationarity_a = r.stationarity_a.max(dl_da.abs());

        let dl_ds = 2.0 * local.net(s) * local.slope(s) * u
            + 2.0 * edge.net(s) * edge.slope(s) * v
            + 2.0 * delta * s * z
            + zeta;
        let ds_res = if s <= 0.0 { (-dl_ds).max(0.0) } else { dl_ds.abs() };
        r.stationarity_s = r.stationarity_s.max(ds_res);

        let cap_res = s - (1.0 - a) * ue.s_cap_local - a * ue.s_cap_edge;
        r.primal = r
            .primal
            .max(-a)
            .max(a - 1.0)
            .max(-s)
            .max(cap_res);
        r.complementary = r
            .complementary
            .max((beta * a).abs())
            .max((gamma * (a - 1.0)).abs())
            .max((zeta * cap_res).abs());
        r.dual = r.dual.max(-beta).max(-gamma).max(-zeta);
        mass += s * s * z + a * a / (4.0 * z);
    }
    let budget_res = mass - cfg.s_edge_budget;
    r.primal = r.primal.max(budget_res).max(0.0);
    r.complementary = r.complementary.max((delta * budget_res).abs());
    r.dual = r.dual.max(-delta).max(0.0);
    r
}
