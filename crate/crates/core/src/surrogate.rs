//! Decoupled surrogate of the joint problem.
//!
//! The bilinear terms `(1 - a) R0(s)` and `a R1(s)` are bounded above by
//! `R0^2 u + (1 - a)^2 / (4u)` and `R1^2 v + a^2 / (4v)`, and the edge budget
//! term `a s` by `s^2 z + a^2 / (4z)`. Each bound is tight when the auxiliary
//! variable takes its closed-form value at the current point. The binary
//! constraint is handled by a penalty on `sum a (a - 1)` whose first-order
//! expansion `H` around the previous outer iterate keeps the subproblem convex.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Allocation, SystemConfig, COST_FLOOR};

/// Auxiliary variables of one inner iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuxiliaryState {
    /// Objective surrogate, local branch.
    pub u: Vec<f64>,
    /// Objective surrogate, edge branch.
    pub v: Vec<f64>,
    /// Edge budget surrogate.
    pub z: Vec<f64>,
}

/// Expansion point of the linearized binary penalty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltyAnchor {
    pub a_prev: Vec<f64>,
}

impl PenaltyAnchor {
    pub fn new(a_prev: Vec<f64>) -> Self {
        debug_assert!(a_prev.iter().all(|a| (0.0..=1.0).contains(a)));
        PenaltyAnchor { a_prev }
    }
}

/// Clamps `x` into `[floor, 1 / floor]`.
pub fn clamp_aux(x: f64, floor: f64) -> f64 {
    x.max(floor).min(1.0 / floor)
}

/// Auxiliary values `(u, v, z)` for one UE from its indicator, step count and
/// branch costs.
pub fn aux_entry(a: f64, s: f64, r0: f64, r1: f64, floor: f64) -> (f64, f64, f64) {
    let u = (1.0 - a) / (2.0 * r0);
    let v = a / (2.0 * r1);
    // a / (2s) at s = 0 is +inf for a > 0 and NaN for a = 0; both clamp.
    let z = if s > 0.0 {
        a / (2.0 * s)
    } else if a > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };
    (clamp_aux(u, floor), clamp_aux(v, floor), clamp_aux(z, floor))
}

/// Per-UE objective surrogate `g_n`.
pub fn surrogate_term(a: f64, r0: f64, r1: f64, u: f64, v: f64) -> f64 {
    r0 * r0 * u + (1.0 - a).powi(2) / (4.0 * u) + r1 * r1 * v + a * a / (4.0 * v)
}

/// Per-UE edge budget surrogate `s^2 z + a^2 / (4z)`.
pub fn edge_term(a: f64, s: f64, z: f64) -> f64 {
    s * s * z + a * a / (4.0 * z)
}

/// Recomputes the auxiliaries at `alloc`, flooring every entry at
/// `tolerances.aux_floor`.
///
/// Fails on a non-positive blended cost unless the configuration allows
/// them, in which case costs are floored at [`COST_FLOOR`].
pub fn update_auxiliaries(cfg: &SystemConfig, alloc: &Allocation) -> Result<AuxiliaryState> {
    let n = cfg.n();
    let floor = cfg.tolerances.aux_floor;
    let mut aux = AuxiliaryState {
        u: Vec::with_capacity(n),
        v: Vec::with_capacity(n),
        z: Vec::with_capacity(n),
    };
    for (i, (local, edge)) in cfg.branches().into_iter().enumerate() {
        let s = alloc.s[i];
        let (mut r0, mut r1) = (local.net(s), edge.net(s));
        if !(r0 > 0.0 && r1 > 0.0) {
            if !cfg.allow_nonpositive_cost {
                return Err(Error::InvalidArgument(format!(
                    "blended cost of UE {i} is non-positive at s = {s} (R0 = {r0:e}, R1 = {r1:e})"
                )));
            }
            r0 = r0.max(COST_FLOOR);
            r1 = r1.max(COST_FLOOR);
        }
        let (u, v, z) = aux_entry(alloc.a[i], s, r0, r1, floor);
        aux.u.push(u);
        aux.v.push(v);
        aux.z.push(z);
    }
    Ok(aux)
}

/// `G(a, s | u, v)`, summed left to right.
pub fn surrogate_objective(cfg: &SystemConfig, alloc: &Allocation, aux: &AuxiliaryState) -> f64 {
    cfg.branches()
        .iter()
        .enumerate()
        .map(|(n, (local, edge))| {
            let s = alloc.s[n];
            surrogate_term(alloc.a[n], local.net(s), edge.net(s), aux.u[n], aux.v[n])
        })
        .sum()
}

/// `sum_n (s_n^2 z_n + a_n^2 / (4 z_n))`.
pub fn surrogate_edge_mass(alloc: &Allocation, aux: &AuxiliaryState) -> f64 {
    alloc
        .a
        .iter()
        .zip(&alloc.s)
        .zip(&aux.z)
        .map(|((&a, &s), &z)| edge_term(a, s, z))
        .sum()
}

/// Surrogate edge constraint value; `<= 0` means satisfied.
pub fn surrogate_edge_constraint(
    cfg: &SystemConfig,
    alloc: &Allocation,
    aux: &AuxiliaryState,
) -> f64 {
    surrogate_edge_mass(alloc, aux) - cfg.s_edge_budget
}

/// First-order expansion of `sum a_n (a_n - 1)` at the anchor.
pub fn penalty_linearized(a: &[f64], anchor: &PenaltyAnchor) -> f64 {
    a.iter()
        .zip(&anchor.a_prev)
        .map(|(&a, &p)| p * (p - 1.0) + (2.0 * p - 1.0) * (a - p))
        .sum()
}

/// `sum a_n (a_n - 1)`; zero exactly at binary points.
pub fn binary_violation(a: &[f64]) -> f64 {
    a.iter().map(|&a| a * (a - 1.0)).sum()
}

/// Penalized subproblem objective `G - tau * H`.
pub fn penalized_surrogate(
    cfg: &SystemConfig,
    alloc: &Allocation,
    aux: &AuxiliaryState,
    anchor: &PenaltyAnchor,
) -> f64 {
    surrogate_objective(cfg, alloc, aux) - cfg.tau_penalty * penalty_linearized(&alloc.a, anchor)
}


#[cfg(test)]
mod props {
    use super::*;
    use crate::model::tests::reference_config;
    use proptest::prelude::*;

    fn interior() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (
            proptest::collection::vec(0.05f64..0.95, 4),
            proptest::collection::vec(1.0f64..200.0, 4),
        )
    }

    proptest! {
        #[test]
        fn tight_at_expansion_point((a, s) in interior()) {
            let cfg = reference_config(4);
            let alloc = Allocation { a, s };
            let aux = update_auxiliaries(&cfg, &alloc).unwrap();
            let p1 = cfg.objective(&alloc);
            let g = surrogate_objective(&cfg, &alloc, &aux);
            prop_assert!((g - p1).abs() <= 1e-9 * (1.0 + p1.abs()));
            let used: f64 = alloc.a.iter().zip(&alloc.s).map(|(a, s)| a * s).sum();
            let mass = surrogate_edge_mass(&alloc, &aux);
            prop_assert!((mass - used).abs() <= 1e-9 * (1.0 + used));
        }

        #[test]
        fn majorizes_for_any_positive_aux(
            (a, s) in interior(),
            u in proptest::collection::vec(1e-4f64..10.0, 4),
            v in proptest::collection::vec(1e-4f64..10.0, 4),
            z in proptest::collection::vec(1e-5f64..1.0, 4),
        ) {
            let cfg = reference_config(4);
            let alloc = Allocation { a, s };
            let aux = AuxiliaryState { u, v, z };
            prop_assert!(surrogate_objective(&cfg, &alloc, &aux) >= cfg.objective(&alloc) - 1e-12);
            let used: f64 = alloc.a.iter().zip(&alloc.s).map(|(a, s)| a * s).sum();
            prop_assert!(surrogate_edge_mass(&alloc, &aux) >= used - 1e-12);
        }

        #[test]
        fn linearization_gap_is_squared_distance(
            a in proptest::collection::vec(-0.5f64..1.5, 5),
            p in proptest::collection::vec(0.0f64..1.0, 5),
        ) {
            let anchor = PenaltyAnchor::new(p.clone());
            let gap = binary_violation(&a) - penalty_linearized(&a, &anchor);
            let sq: f64 = a.iter().zip(&p).map(|(x, y)| (x - y).powi(2)).sum();
            prop_assert!((gap - sq).abs() <= 1e-12);
            prop_assert!(gap >= -1e-15);
        }
    }
}
