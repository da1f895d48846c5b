//! System model: per-UE profiles, edge configuration, and every cost,
//! utility and constraint of the joint offloading problem.
//!
//! A UE processes its generation task either locally (`Mode::Local`) or on
//! the edge server (`Mode::Edge`). For a step count `s` the blended cost of a
//! branch is
//!
//! ```text
//! R(s) = w1 * (c1 * T(s) + c2 * err(s) + c3 * E(s)) - w2 * U(s)
//! ```
//!
//! with linear time and energy, exponentially decaying error and a saturating
//! utility. [`Branch`] precomputes the per-branch coefficients so the solver
//! hot loops avoid re-deriving them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::roots;

/// Where a task is processed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Local,
    Edge,
}

impl Mode {
    pub fn from_offload(offloaded: bool) -> Self {
        if offloaded {
            Mode::Edge
        } else {
            Mode::Local
        }
    }
}

/// Physical and model parameters of one UE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UeProfile {
    /// Seconds per reverse step on the device.
    pub delta_t_local: f64,
    /// Seconds per reverse step on the edge server.
    pub delta_t_edge: f64,
    /// Per-step error decay rate.
    pub c1_attenuation: f64,
    /// Per-step utility saturation rate.
    pub c2_utility: f64,
    /// Device CPU frequency in cycles/s.
    pub cpu_freq_local: f64,
    /// Edge capacity reserved for this UE in cycles/s.
    pub cpu_freq_edge_alloc: f64,
    /// Device power-efficiency coefficient.
    pub k_local: f64,
    /// Step cap when processed locally.
    pub s_cap_local: f64,
    /// Step cap when offloaded.
    pub s_cap_edge: f64,
}

impl UeProfile {
    pub fn s_upper(&self) -> f64 {
        self.s_cap_local.max(self.s_cap_edge)
    }

    /// Step cap for a (possibly fractional) offload indicator.
    pub fn cap(&self, a: f64) -> f64 {
        (1.0 - a) * self.s_cap_local + a * self.s_cap_edge
    }
}

/// Time, error and energy weights `(c1, c2, c3)`. Serialized as a JSON array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct CostWeights {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

impl From<[f64; 3]> for CostWeights {
    fn from([c1, c2, c3]: [f64; 3]) -> Self {
        CostWeights { c1, c2, c3 }
    }
}

impl From<CostWeights> for [f64; 3] {
    fn from(w: CostWeights) -> Self {
        [w.c1, w.c2, w.c3]
    }
}

impl CostWeights {
    /// Weights that normalize each cost component by its mean value over the
    /// UEs at `s = s_cap_local / 2` processed locally, so that equal weights
    /// carry equal influence.
    pub fn normalized(ues: &[UeProfile], eps_fwd: f64) -> CostWeights {
        let n = ues.len().max(1) as f64;
        let (mut t, mut e, mut en) = (0.0, 0.0, 0.0);
        for ue in ues {
            let s = 0.5 * ue.s_cap_local;
            t += s * ue.delta_t_local;
            e += eps_fwd * (-ue.c1_attenuation * s).exp();
            en += ue.k_local * s * ue.delta_t_local * ue.cpu_freq_local.powi(3);
        }
        let inv = |x: f64| if x > 0.0 { n / x } else { 0.0 };
        CostWeights {
            c1: inv(t),
            c2: inv(e),
            c3: inv(en),
        }
    }

    pub fn scaled(self, s1: f64, s2: f64, s3: f64) -> CostWeights {
        CostWeights {
            c1: self.c1 * s1,
            c2: self.c2 * s2,
            c3: self.c3 * s3,
        }
    }
}

/// Cost-versus-utility blend `(w1, w2)`. Serialized as a JSON array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct BlendWeights {
    pub w1: f64,
    pub w2: f64,
}

impl From<[f64; 2]> for BlendWeights {
    fn from([w1, w2]: [f64; 2]) -> Self {
        BlendWeights { w1, w2 }
    }
}

impl From<BlendWeights> for [f64; 2] {
    fn from(w: BlendWeights) -> Self {
        [w.w1, w.w2]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Relative change of the penalized surrogate that stops the inner loop.
    pub inner_tol: f64,
    /// Max-norm change of `(a, s / s_upper)` that stops the outer loop.
    pub outer_tol: f64,
    /// Absolute residual target for the scalar bisections.
    pub bisection_tol: f64,
    pub max_bisection_iter: usize,
    /// Inner (auxiliary fixed point) iteration cap.
    pub max_inner: usize,
    /// Outer (penalty linearization) iteration cap.
    pub max_outer: usize,
    /// Floor for the auxiliary variables `u`, `v`, `z`; its reciprocal is
    /// their ceiling.
    pub aux_floor: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            inner_tol: 1e-9,
            outer_tol: 1e-4,
            bisection_tol: 1e-8,
            max_bisection_iter: 200,
            max_inner: 100,
            max_outer: 50,
            aux_floor: 1e-9,
        }
    }
}

/// Floor applied to blended costs inside the auxiliary update when
/// `allow_nonpositive_cost` is set.
pub const COST_FLOOR: f64 = 1e-9;

fn default_init_offload() -> f64 {
    0.5
}

fn default_starts() -> usize {
    1
}

/// Edge server parameters, UE list, weights and solver settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub ues: Vec<UeProfile>,
    /// Edge power-efficiency coefficient.
    pub k_edge: f64,
    /// Total reverse-step budget of the edge server.
    pub s_edge_budget: f64,
    /// Forward-stage error magnitude.
    pub eps_fwd: f64,
    pub cost_weights: CostWeights,
    pub blend_weights: BlendWeights,
    pub tau_penalty: f64,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub seed: u64,
    /// Initial offload indicator used for every UE.
    #[serde(default = "default_init_offload")]
    pub init_offload: f64,
    /// Number of solver starts; starts after the first are seeded-random.
    #[serde(default = "default_starts")]
    pub multi_starts: usize,
    /// Skip the cost positivity scan and floor costs at [`COST_FLOOR`] in the
    /// auxiliary update instead.
    #[serde(default)]
    pub allow_nonpositive_cost: bool,
    /// Names of parameters whose defaults are not taken from measurements.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub non_paper_defaults: Vec<String>,
}

/// Coefficients of one UE's cost in one processing mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Branch {
    pub step_time: f64,
    pub step_energy: f64,
    pub attenuation: f64,
    pub utility_rate: f64,
    pub eps_fwd: f64,
    pub costs: CostWeights,
    pub blend: BlendWeights,
}

impl Branch {
    pub fn time(&self, s: f64) -> f64 {
        s * self.step_time
    }

    pub fn error(&self, s: f64) -> f64 {
        self.eps_fwd * (-s * self.attenuation).exp()
    }

    pub fn energy(&self, s: f64) -> f64 {
        s * self.step_energy
    }

    pub fn utility(&self, s: f64) -> f64 {
        -(-s * self.utility_rate).exp_m1()
    }

    /// Blended cost `R(s)`.
    pub fn net(&self, s: f64) -> f64 {
        let c = self.costs;
        self.blend.w1 * (c.c1 * self.time(s) + c.c2 * self.error(s) + c.c3 * self.energy(s))
            - self.blend.w2 * self.utility(s)
    }

    /// Analytic derivative `R'(s)`.
    pub fn slope(&self, s: f64) -> f64 {
        let c = self.costs;
        self.blend.w1
            * (c.c1 * self.step_time - c.c2 * self.attenuation * self.error(s)
                + c.c3 * self.step_energy)
            - self.blend.w2 * self.utility_rate * (-s * self.utility_rate).exp()
    }

    /// Minimum of `R` on `[0, hi]`; `R` is convex so the slope is monotone.
    pub fn min_on(&self, hi: f64) -> (f64, f64) {
        let s = roots::convex_argmin(|x| self.slope(x), 0.0, hi, 200);
        (s, self.net(s))
    }
}

/// Decision vector pair: offload indicators and step counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Allocation {
    pub a: Vec<f64>,
    pub s: Vec<f64>,
}

impl Allocation {
    pub fn zeros(n: usize) -> Self {
        Allocation {
            a: vec![0.0; n],
            s: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    pub fn offloaded_count(&self) -> usize {
        self.a.iter().filter(|&&a| a >= 0.5).count()
    }

    /// `max_n min(a_n, 1 - a_n)`: zero exactly when `a` is binary.
    pub fn binary_gap(&self) -> f64 {
        self.a.iter().map(|&a| a.min(1.0 - a)).fold(0.0, f64::max)
    }
}

/// Per-constraint slack of an allocation; negative slack is a violation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Feasibility {
    /// `S_e^max - sum_n a_n s_n`.
    pub edge_slack: f64,
    /// `(1 - a_n) cap_local + a_n cap_edge - s_n` per UE.
    pub cap_slack: Vec<f64>,
    /// Whether `a_n` lies in `[0, 1]` and `s_n >= 0`.
    pub in_box: Vec<bool>,
}

impl Feasibility {
    pub fn is_feasible(&self) -> bool {
        self.edge_slack >= 0.0
            && self.cap_slack.iter().all(|&c| c >= 0.0)
            && self.in_box.iter().all(|&b| b)
    }

    pub fn cap_violations(&self) -> Vec<usize> {
        self.cap_slack
            .iter()
            .enumerate()
            .filter(|(_, &c)| c < 0.0)
            .map(|(n, _)| n)
            .collect()
    }
}

fn check_positive(field: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::config(field, format!("must be finite and > 0 (got {v})")))
    }
}

fn check_nonneg(field: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::config(field, format!("must be finite and >= 0 (got {v})")))
    }
}

fn check_step(s: f64) -> Result<()> {
    if s.is_finite() && s >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "step count must be finite and >= 0 (got {s})"
        )))
    }
}

impl SystemConfig {
    pub fn n(&self) -> usize {
        self.ues.len()
    }

    /// Largest step cap over all UEs and modes.
    pub fn s_upper(&self) -> f64 {
        self.ues.iter().map(UeProfile::s_upper).fold(0.0, f64::max)
    }

    /// Checks every invariant, naming the offending field on failure.
    pub fn validate(&self) -> Result<()> {
        if self.ues.is_empty() {
            return Err(Error::config("ues", "must contain at least one UE"));
        }
        for (n, ue) in self.ues.iter().enumerate() {
            let f = |name: &str| format!("ues[{n}].{name}");
            check_positive(&f("delta_t_local"), ue.delta_t_local)?;
            check_positive(&f("delta_t_edge"), ue.delta_t_edge)?;
            check_positive(&f("c1_attenuation"), ue.c1_attenuation)?;
            check_nonneg(&f("c2_utility"), ue.c2_utility)?;
            check_nonneg(&f("cpu_freq_local"), ue.cpu_freq_local)?;
            check_nonneg(&f("cpu_freq_edge_alloc"), ue.cpu_freq_edge_alloc)?;
            check_nonneg(&f("k_local"), ue.k_local)?;
            check_positive(&f("s_cap_local"), ue.s_cap_local)?;
            check_positive(&f("s_cap_edge"), ue.s_cap_edge)?;
        }
        check_nonneg("k_edge", self.k_edge)?;
        check_nonneg("s_edge_budget", self.s_edge_budget)?;
        if !(self.eps_fwd > 0.0 && self.eps_fwd <= 1.0) {
            return Err(Error::config(
                "eps_fwd",
                format!("must lie in (0, 1] (got {})", self.eps_fwd),
            ));
        }
        check_nonneg("cost_weights.c1", self.cost_weights.c1)?;
        check_nonneg("cost_weights.c2", self.cost_weights.c2)?;
        check_nonneg("cost_weights.c3", self.cost_weights.c3)?;
        check_nonneg("blend_weights.w1", self.blend_weights.w1)?;
        check_nonneg("blend_weights.w2", self.blend_weights.w2)?;
        check_positive("tau_penalty", self.tau_penalty)?;
        let t = &self.tolerances;
        check_nonneg("tolerances.inner_tol", t.inner_tol)?;
        check_nonneg("tolerances.outer_tol", t.outer_tol)?;
        check_nonneg("tolerances.bisection_tol", t.bisection_tol)?;
        check_positive("tolerances.aux_floor", t.aux_floor)?;
        if t.aux_floor >= 1.0 {
            return Err(Error::config("tolerances.aux_floor", "must be < 1"));
        }
        if t.max_inner == 0 || t.max_outer == 0 || t.max_bisection_iter == 0 {
            return Err(Error::config("tolerances", "iteration caps must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.init_offload) {
            return Err(Error::config("init_offload", "must lie in [0, 1]"));
        }
        if self.multi_starts == 0 {
            return Err(Error::config("multi_starts", "must be >= 1"));
        }
        if !self.allow_nonpositive_cost {
            self.check_cost_positivity()?;
        }
        Ok(())
    }

    /// Rejects configurations whose blended cost is non-positive anywhere on
    /// `[0, s_upper]` for either mode.
    pub fn check_cost_positivity(&self) -> Result<()> {
        for (n, ue) in self.ues.iter().enumerate() {
            for mode in [Mode::Local, Mode::Edge] {
                let (s, r) = self.branch(n, mode).min_on(ue.s_upper());
                if !(r > 0.0) {
                    return Err(Error::config(
                        "cost_weights/blend_weights",
                        format!(
                            "blended cost of UE {n} ({mode:?}) must stay > 0 on [0, {}], \
                             but R({s:.3}) = {r:e}; set allow_nonpositive_cost to floor it",
                            ue.s_upper()
                        ),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn branch(&self, n: usize, mode: Mode) -> Branch {
        let ue = &self.ues[n];
        let (step_time, step_energy) = match mode {
            Mode::Local => (
                ue.delta_t_local,
                ue.k_local * ue.delta_t_local * ue.cpu_freq_local.powi(3),
            ),
            Mode::Edge => (
                ue.delta_t_edge,
                self.k_edge * ue.delta_t_edge * ue.cpu_freq_edge_alloc.powi(3),
            ),
        };
        Branch {
            step_time,
            step_energy,
            attenuation: ue.c1_attenuation,
            utility_rate: ue.c2_utility,
            eps_fwd: self.eps_fwd,
            costs: self.cost_weights,
            blend: self.blend_weights,
        }
    }

    /// `(local, edge)` branches of every UE.
    pub fn branches(&self) -> Vec<(Branch, Branch)> {
        (0..self.n())
            .map(|n| (self.branch(n, Mode::Local), self.branch(n, Mode::Edge)))
            .collect()
    }

    fn ue_index(&self, n: usize) -> Result<()> {
        if n < self.n() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "UE index {n} out of range for N = {}",
                self.n()
            )))
        }
    }

    /// Processing time in seconds.
    pub fn computation_time(&self, n: usize, s: f64, mode: Mode) -> Result<f64> {
        self.ue_index(n)?;
        check_step(s)?;
        Ok(self.branch(n, mode).time(s))
    }

    pub fn average_error(&self, n: usize, s: f64) -> Result<f64> {
        self.ue_index(n)?;
        check_step(s)?;
        Ok(self.branch(n, Mode::Local).error(s))
    }

    /// Energy in joules.
    pub fn energy(&self, n: usize, s: f64, mode: Mode) -> Result<f64> {
        self.ue_index(n)?;
        check_step(s)?;
        Ok(self.branch(n, mode).energy(s))
    }

    pub fn utility(&self, n: usize, s: f64) -> Result<f64> {
        self.ue_index(n)?;
        check_step(s)?;
        Ok(self.branch(n, Mode::Local).utility(s))
    }

    pub fn net_cost(&self, n: usize, s: f64, mode: Mode) -> Result<f64> {
        self.ue_index(n)?;
        check_step(s)?;
        Ok(self.branch(n, mode).net(s))
    }

    pub fn net_cost_slope(&self, n: usize, s: f64, mode: Mode) -> Result<f64> {
        self.ue_index(n)?;
        check_step(s)?;
        Ok(self.branch(n, mode).slope(s))
    }

    fn check_dims(&self, alloc: &Allocation) {
        assert_eq!(alloc.a.len(), self.n(), "allocation length does not match N");
        assert_eq!(alloc.s.len(), self.n(), "allocation length does not match N");
    }

    /// Original blended objective; defined for fractional `a`.
    pub fn objective(&self, alloc: &Allocation) -> f64 {
        self.check_dims(alloc);
        let mut total = 0.0;
        for n in 0..self.n() {
            let (a, s) = (alloc.a[n], alloc.s[n]);
            total += (1.0 - a) * self.branch(n, Mode::Local).net(s)
                + a * self.branch(n, Mode::Edge).net(s);
        }
        total
    }

    pub fn check_feasibility(&self, alloc: &Allocation) -> Feasibility {
        self.check_dims(alloc);
        let used: f64 = alloc.a.iter().zip(&alloc.s).map(|(a, s)| a * s).sum();
        let cap_slack = self
            .ues
            .iter()
            .zip(alloc.a.iter().zip(&alloc.s))
            .map(|(ue, (&a, &s))| ue.cap(a) - s)
            .collect();
        let in_box = alloc
            .a
            .iter()
            .zip(&alloc.s)
            .map(|(&a, &s)| (0.0..=1.0).contains(&a) && s >= 0.0)
            .collect();
        Feasibility {
            edge_slack: self.s_edge_budget - used,
            cap_slack,
            in_box,
        }
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    /// One-UE config with the reference constants used across the unit tests.
    pub(crate) fn reference_ue() -> UeProfile {
        UeProfile {
            delta_t_local: 1.0 / 500.0,
            delta_t_edge: 1.0 / 1000.0,
            c1_attenuation: 0.05,
            c2_utility: 0.01,
            cpu_freq_local: 1.5e9,
            cpu_freq_edge_alloc: 2e9,
            k_local: 1e-26,
            s_cap_local: 200.0,
            s_cap_edge: 500.0,
        }
    }

    pub(crate) fn reference_config(n: usize) -> SystemConfig {
        SystemConfig {
            ues: vec![reference_ue(); n],
            k_edge: 1e-26,
            s_edge_budget: 1000.0,
            eps_fwd: 1.0,
            cost_weights: CostWeights { c1: 1.0, c2: 1.0, c3: 0.01 },
            blend_weights: BlendWeights { w1: 1.0, w2: 0.1 },
            tau_penalty: 1e5,
            tolerances: Tolerances::default(),
            seed: 0,
            init_offload: 0.5,
            multi_starts: 1,
            allow_nonpositive_cost: false,
            non_paper_defaults: Vec::new(),
        }
    }

    #[test]
    fn computation_time_examples() {
        let cfg = reference_config(1);
        assert_eq!(cfg.computation_time(0, 0.0, Mode::Local).unwrap(), 0.0);
        assert_eq!(cfg.computation_time(0, 0.0, Mode::Edge).unwrap(), 0.0);
        assert!((cfg.computation_time(0, 500.0, Mode::Local).unwrap() - 1.0).abs() < 1e-15);
        assert!((cfg.computation_time(0, 500.0, Mode::Edge).unwrap() - 0.5).abs() < 1e-15);
        assert!(matches!(
            cfg.computation_time(0, -1.0, Mode::Local),
            Err(Error::InvalidArgument(_))
        ));
        assert!(cfg.computation_time(3, 1.0, Mode::Local).is_err());
    }

    #[test]
    fn average_error_examples() {
        let cfg = reference_config(1);
        assert_eq!(cfg.average_error(0, 0.0).unwrap(), 1.0);
        assert!((cfg.average_error(0, 20.0).unwrap() - 0.367_879_441_171_442_3).abs() < 1e-15);
        assert!(cfg.average_error(0, 1e6).unwrap() < 1e-300);
    }

    #[test]
    fn energy_examples() {
        let mut cfg = reference_config(1);
        cfg.ues[0].cpu_freq_edge_alloc = 1e10;
        assert_eq!(cfg.energy(0, 0.0, Mode::Local).unwrap(), 0.0);
        // 1e-26 * (100/500) * (1.5e9)^3
        assert!((cfg.energy(0, 100.0, Mode::Local).unwrap() - 6.75).abs() < 1e-12);
        // 1e-26 * (100/1000) * (1e10)^3
        assert!((cfg.energy(0, 100.0, Mode::Edge).unwrap() - 1000.0).abs() < 1e-9);
        cfg.ues[0].cpu_freq_local = 0.0;
        assert_eq!(cfg.energy(0, 100.0, Mode::Local).unwrap(), 0.0);
    }

    #[test]
    fn utility_examples() {
        let mut cfg = reference_config(1);
        assert_eq!(cfg.utility(0, 0.0).unwrap(), 0.0);
        assert!((cfg.utility(0, 100.0).unwrap() - 0.632_120_558_828_557_7).abs() < 1e-15);
        cfg.ues[0].c2_utility = 0.0;
        for s in [0.0, 1.0, 1e3] {
            assert_eq!(cfg.utility(0, s).unwrap(), 0.0);
        }
    }

    #[test]
    fn net_cost_reductions() {
        let mut cfg = reference_config(1);
        cfg.cost_weights = CostWeights { c1: 0.0, c2: 0.0, c3: 0.0 };
        cfg.blend_weights = BlendWeights { w1: 0.0, w2: 0.0 };
        assert_eq!(cfg.net_cost(0, 37.0, Mode::Edge).unwrap(), 0.0);

        cfg.cost_weights = CostWeights { c1: 1.0, c2: 0.0, c3: 0.0 };
        cfg.blend_weights = BlendWeights { w1: 1.0, w2: 0.0 };
        for s in [0.0, 12.5, 300.0] {
            for mode in [Mode::Local, Mode::Edge] {
                assert_eq!(
                    cfg.net_cost(0, s, mode).unwrap(),
                    cfg.computation_time(0, s, mode).unwrap()
                );
            }
        }
    }

    #[test]
    fn net_cost_slope_matches_central_difference() {
        let cfg = reference_config(1);
        let h = 1e-5;
        for &s in &[0.5, 3.0, 17.0, 42.0, 150.0, 420.0] {
            for mode in [Mode::Local, Mode::Edge] {
                let b = cfg.branch(0, mode);
                let fd = (b.net(s + h) - b.net(s - h)) / (2.0 * h);
                let an = b.slope(s);
                assert!(
                    (fd - an).abs() <= 1e-6 * an.abs().max(1.0),
                    "s={s} mode={mode:?} fd={fd} analytic={an}"
                );
            }
        }
    }

    #[test]
    fn objective_examples() {
        let cfg = reference_config(3);
        let zero = Allocation::zeros(3);
        let expect = 3.0 * cfg.blend_weights.w1 * cfg.cost_weights.c2 * cfg.eps_fwd;
        assert!((cfg.objective(&zero) - expect).abs() < 1e-12);

        let one = reference_config(1);
        let alloc = Allocation { a: vec![1.0], s: vec![123.0] };
        assert_eq!(one.objective(&alloc), one.branch(0, Mode::Edge).net(123.0));
    }

    #[test]
    fn objective_two_ue_hand_sum() {
        let mut cfg = reference_config(2);
        cfg.ues[1].c1_attenuation = 0.02;
        cfg.ues[1].cpu_freq_edge_alloc = 3e9;
        let alloc = Allocation { a: vec![0.3, 0.8], s: vec![50.0, 220.0] };
        // Term-by-term from the component formulas.
        let term = |ue: &UeProfile, a: f64, s: f64| {
            let w = cfg.cost_weights;
            let b = cfg.blend_weights;
            let err = (-s * ue.c1_attenuation).exp();
            let util = 1.0 - (-s * ue.c2_utility).exp();
            let r0 = b.w1
                * (w.c1 * s * ue.delta_t_local
                    + w.c2 * err
                    + w.c3 * ue.k_local * s * ue.delta_t_local * ue.cpu_freq_local.powi(3))
                - b.w2 * util;
            let r1 = b.w1
                * (w.c1 * s * ue.delta_t_edge
                    + w.c2 * err
                    + w.c3 * cfg.k_edge * s * ue.delta_t_edge * ue.cpu_freq_edge_alloc.powi(3))
                - b.w2 * util;
            (1.0 - a) * r0 + a * r1
        };
        let expect = term(&cfg.ues[0], 0.3, 50.0) + term(&cfg.ues[1], 0.8, 220.0);
        assert!((cfg.objective(&alloc) - expect).abs() <= 1e-12 * expect.abs());
    }

    #[test]
    fn feasibility_examples() {
        let cfg = reference_config(3);
        let f = cfg.check_feasibility(&Allocation::zeros(3));
        assert!(f.is_feasible());
        assert_eq!(f.edge_slack, cfg.s_edge_budget);

        let bad = Allocation { a: vec![1.0, 0.0, 0.0], s: vec![501.0, 0.0, 0.0] };
        let f = cfg.check_feasibility(&bad);
        assert!(!f.is_feasible());
        assert_eq!(f.cap_violations(), vec![0]);

        let mut wide = reference_config(3);
        for ue in &mut wide.ues {
            ue.s_cap_edge = 800.0;
        }
        let over = Allocation { a: vec![1.0, 1.0, 0.0], s: vec![400.0, 700.0, 100.0] };
        let f = wide.check_feasibility(&over);
        assert!(!f.is_feasible());
        assert_eq!(f.edge_slack, -100.0);
        assert!(f.cap_violations().is_empty());

        let outside = Allocation { a: vec![1.2, 0.0, -0.1], s: vec![0.0; 3] };
        let f = cfg.check_feasibility(&outside);
        assert_eq!(f.in_box, vec![false, true, false]);
    }

    #[test]
    fn validation_names_field() {
        let mut cfg = reference_config(2);
        cfg.tau_penalty = 0.0;
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("tau_penalty"), "{err}");

        let mut cfg = reference_config(2);
        cfg.eps_fwd = 1.5;
        assert!(cfg.validate().unwrap_err().to_string().contains("eps_fwd"));

        let mut cfg = reference_config(2);
        cfg.ues[1].s_cap_edge = 0.0;
        assert!(cfg.validate().unwrap_err().to_string().contains("ues[1].s_cap_edge"));

        let mut cfg = reference_config(2);
        cfg.ues.clear();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn positivity_scan_rejects_utility_dominated_weights() {
        let mut cfg = reference_config(1);
        cfg.blend_weights = BlendWeights { w1: 0.01, w2: 1.0 };
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("must stay > 0"), "{err}");
        cfg.allow_nonpositive_cost = true;
        cfg.validate().unwrap();
    }

    #[test]
    fn config_json_rejects_unknown_keys() {
        let cfg = reference_config(1);
        let mut v = serde_json::to_value(&cfg).unwrap();
        v["tau_penaltyy"] = serde_json::json!(1.0);
        assert!(serde_json::from_value::<SystemConfig>(v).is_err());
        let back: SystemConfig =
            serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn normalized_weights_equalize_components() {
        let cfg = reference_config(4);
        let w = CostWeights::normalized(&cfg.ues, cfg.eps_fwd);
        let b = Branch { costs: w, blend: BlendWeights { w1: 1.0, w2: 0.0 }, ..cfg.branch(0, Mode::Local) };
        let s = 100.0;
        assert!((w.c1 * b.time(s) - 1.0).abs() < 1e-12);
        assert!((w.c2 * b.error(s) - 1.0).abs() < 1e-12);
        assert!((w.c3 * b.energy(s) - 1.0).abs() < 1e-12);
    }
}

#[cfg(test)]
mod props {
    use super::tests::reference_config;
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn error_is_log_linear(s in 0.0f64..2000.0, c1 in 0.001f64..0.2) {
            let mut cfg = reference_config(1);
            cfg.ues[0].c1_attenuation = c1;
            cfg.eps_fwd = 0.7;
            let e = cfg.average_error(0, s).unwrap();
            prop_assert!((e.ln() - (0.7f64.ln() - c1 * s)).abs() <= 1e-12 * (1.0 + c1 * s));
        }

        #[test]
        fn utility_is_concave(s1 in 0.0f64..1000.0, s2 in 0.0f64..1000.0, lam in 0.0f64..1.0) {
            let cfg = reference_config(1);
            let u = |s: f64| cfg.utility(0, s).unwrap();
            let mix = u(lam * s1 + (1.0 - lam) * s2);
            prop_assert!(mix >= lam * u(s1) + (1.0 - lam) * u(s2) - 1e-12);
        }

        #[test]
        fn net_cost_is_convex(w2 in 0.0f64..0.8, c3 in 0.0f64..0.05) {
            let mut cfg = reference_config(1);
            cfg.blend_weights.w2 = w2;
            cfg.cost_weights.c3 = c3;
            prop_assume!(cfg.check_cost_positivity().is_ok());
            let h = 1.0;
            for mode in [Mode::Local, Mode::Edge] {
                let b = cfg.branch(0, mode);
                let mut s = h;
                while s + h <= cfg.s_upper() {
                    let d2 = b.net(s + h) - 2.0 * b.net(s) + b.net(s - h);
                    prop_assert!(d2 >= -1e-9, "mode={:?} s={} d2={}", mode, s, d2);
                    s += h;
                }
            }
        }

        #[test]
        fn binary_selector_ignores_other_branch(
            bits in proptest::collection::vec(any::<bool>(), 3),
            s in proptest::collection::vec(0.0f64..500.0, 3),
        ) {
            let cfg = reference_config(3);
            let a: Vec<f64> = bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
            let got = cfg.objective(&Allocation { a: a.clone(), s: s.clone() });
            let selected: f64 = (0..3)
                .map(|n| cfg.branch(n, Mode::from_offload(bits[n])).net(s[n]))
                .sum();
            prop_assert!((got - selected).abs() <= 1e-12 * (1.0 + selected.abs()));
        }
    }
}
