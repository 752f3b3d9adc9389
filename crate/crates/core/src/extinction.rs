//! Finite-time extinction of the manifold distance `ψ`: the a priori bound
//! for `ψ' + ρ ≤ a₀ρ^{1/2} + b₀`, detection on sampled trajectories, the
//! barrier `w` of the pointwise control, and the sliding verdict.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bounds::{finite_or_null, BoundsReport, ConstantKind};
use crate::dynamics::{Mode, ProblemSpec, Trajectory, Variant};
use crate::error::{Error, Result};

pub const VERDICT_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LemmaBound {
    /// Guaranteed decay rate `s₀ = ½ρ − ½a₀² − b₀`.
    pub s0: f64,
    /// `2ψ₀/(ρ − a₀² − 2b₀)`.
    pub t_star_bound: f64,
}

/// Extinction bound for a nonnegative `ψ` with `ψ' + ρ ≤ a₀ρ^{1/2} + b₀`
/// while positive. Requires `ρ > a₀² + 2b₀ + 2ψ₀/T`.
pub fn lemma_bound(a0: f64, b0: f64, psi0: f64, rho: f64, t_final: f64) -> Result<LemmaBound> {
    let threshold = a0 * a0 + 2.0 * b0 + 2.0 * psi0 / t_final;
    if !(rho > threshold) {
        return Err(Error::BoundInapplicable(format!(
            "gain {rho} does not exceed a0² + 2b0 + 2ψ0/T = {threshold}"
        )));
    }
    let s0 = 0.5 * rho - 0.5 * a0 * a0 - b0;
    debug_assert!(s0 > psi0 / t_final);
    Ok(LemmaBound {
        s0,
        t_star_bound: 2.0 * psi0 / (rho - a0 * a0 - 2.0 * b0),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtinctionMeasure {
    /// First sample time from which `ψ ≤ tol` through the final sample.
    pub t_star_emp: Option<f64>,
    /// Every interval up to the first time `ψ ≤ tol` drops by more than
    /// `tol`, except the landing interval, which only has to decrease.
    pub decreasing_ok: bool,
    /// `ψ` never returns above `tol` once it has reached it.
    pub stays_zero_ok: bool,
}

/// Detects extinction on `(t, ψ)` samples with increasing times.
pub fn measure_extinction(samples: &[(f64, f64)], tol: f64) -> ExtinctionMeasure {
    let first_touch = samples.iter().position(|&(_, p)| p <= tol);
    let settled_from = samples
        .iter()
        .rposition(|&(_, p)| p > tol)
        .map_or(0, |i| i + 1);
    let t_star_emp = samples.get(settled_from).map(|s| s.0);
    let stays_zero_ok = match first_touch {
        Some(i) => i == settled_from,
        None => true,
    };
    let upto = first_touch.unwrap_or(samples.len().saturating_sub(1));
    let decreasing_ok = samples[..=upto.min(samples.len().saturating_sub(1))]
        .windows(2)
        .all(|w| {
            let (a, b) = (w[0].1, w[1].1);
            a - b > tol || (b <= tol && b < a)
        });
    ExtinctionMeasure {
        t_star_emp,
        decreasing_ok,
        stays_zero_ok,
    }
}

/// True iff `Δψ/Δt ≤ −s₀ + tol` on every sample interval whose endpoints
/// both have `ψ > zero_tol`.
pub fn check_slope(samples: &[(f64, f64)], s0: f64, tol: f64, zero_tol: f64) -> bool {
    samples.windows(2).all(|w| {
        let ((t0, p0), (t1, p1)) = (w[0], w[1]);
        if p0 <= zero_tol || p1 <= zero_tol {
            return true;
        }
        (p1 - p0) / (t1 - t0) <= -s0 + tol
    })
}

/// Barrier `w(t) = (M₀ − (ρ − A(ρ))t)⁺` solving `w' + ρζ = A(ρ)`, `ζ ∈ sign w`.
pub fn comparison_w(m0: f64, rho: f64, a_rho: f64, t: f64) -> f64 {
    (m0 - (rho - a_rho) * t).max(0.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictStatus {
    Pass,
    Fail,
    BoundInapplicable,
}

impl VerdictStatus {
    pub fn name(self) -> &'static str {
        match self {
            VerdictStatus::Pass => "pass",
            VerdictStatus::Fail => "fail",
            VerdictStatus::BoundInapplicable => "bound_inapplicable",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RemarkCheck {
    /// The reinforced gain condition holds.
    pub condition_holds: bool,
    /// Sampled `‖φ − φ*‖²` strictly decreases while `‖φ − φ*‖ > tol`.
    pub decreasing_ok: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExtinctionVerdict {
    pub schema_version: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub run_id: Option<String>,
    pub variant: &'static str,
    pub mode: Mode,
    /// `exact` in prox mode, `eps-sliding` in regularized mode.
    pub label: &'static str,
    pub status: VerdictStatus,
    pub t_star_emp: Option<f64>,
    #[serde(serialize_with = "opt_inf_null")]
    pub t_star_pred: Option<f64>,
    pub sample_interval: f64,
    pub decreasing_ok: bool,
    pub stays_zero_ok: bool,
    pub slope_bound_ok: bool,
    #[serde(serialize_with = "opt_inf_null")]
    pub s0: Option<f64>,
    pub tol: f64,
    /// Largest `ψ` at or after `t_star_emp`.
    pub on_manifold_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub comparison_ok: Option<bool>,
    /// `max_{t,x} (|φ − φ*| − w(t))` over the snapshots.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub comparison_max_excess: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub remark_decreasing: Option<RemarkCheck>,
    pub formulas: BTreeMap<&'static str, &'static str>,
}

fn opt_inf_null<S: serde::Serializer>(v: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(x) => finite_or_null(x, s),
        None => s.serialize_none(),
    }
}

impl ExtinctionVerdict {
    pub fn passed(&self) -> bool {
        self.status == VerdictStatus::Pass
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("verdict serializes")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyOptions {
    /// Threshold below which `ψ` counts as zero.
    pub tol: f64,
    /// Slack in the nodewise barrier check of the pointwise control.
    pub comparison_tol: f64,
    /// Also test monotone decay under the reinforced gain condition.
    pub remark_decreasing: bool,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            tol: 1e-9,
            comparison_tol: 1e-6,
            remark_decreasing: false,
        }
    }
}

pub const FORMULA_PASS: &str = "pass iff t*_emp <= t*_pred + sample interval, psi stays below tol afterwards, \
     and psi decreases strictly before (A, B) or |phi - phi*| <= w(t) + tol nodewise (C)";
pub const FORMULA_SLOPE: &str = "s0 = rho/2 - a0^2/2 - b0 with (a0, b0) = (C_A, C_A) for A and (0, C_B) for B";
pub const FORMULA_W: &str = "w(t) = (M0 - (rho - A(rho)) t)^+";

/// Assembles the sliding verdict for a finished run.
pub fn verify_sliding(
    traj: &Trajectory,
    spec: &ProblemSpec,
    bounds: &BoundsReport,
    opts: &VerifyOptions,
) -> Result<ExtinctionVerdict> {
    if traj.samples.len() < 2 {
        return Err(Error::MissingData("verification needs at least two samples".into()));
    }
    let mode = traj.settings.mode;
    let (tol, label) = match mode {
        Mode::Prox => (opts.tol, "exact"),
        Mode::Regularized => (opts.tol.max(spec.eps), "eps-sliding"),
    };
    let series = traj.psi_series();
    let m = measure_extinction(&series, tol);
    let sample_interval = series
        .windows(2)
        .map(|w| w[1].0 - w[0].0)
        .fold(0.0, f64::max);
    let on_manifold_max = m.t_star_emp.map(|t0| {
        series
            .iter()
            .filter(|(t, _)| *t >= t0)
            .map(|s| s.1)
            .fold(0.0, f64::max)
    });

    let rho = spec.rho;
    let s0 = match &spec.variant {
        Variant::A { .. } => bounds
            .constant(ConstantKind::CA)
            .map(|c| 0.5 * rho - 0.5 * c * c - c),
        Variant::B { .. } => bounds.constant(ConstantKind::CB).map(|c| 0.5 * rho - c),
        Variant::C { .. } => None,
    };
    // the slope is only guaranteed where s₀ > 0; otherwise the check is vacuous
    let slope_bound_ok = match s0 {
        Some(s) if s > 0.0 => check_slope(&series, s, 0.1 * s, tol),
        _ => true,
    };

    let mut formulas = BTreeMap::new();
    formulas.insert("pass", FORMULA_PASS);
    let mut comparison_ok = None;
    let mut comparison_max_excess = None;
    let mut remark_decreasing = None;
    if let Variant::C { phi_star } = &spec.variant {
        formulas.insert("comparison", FORMULA_W);
        if let Some(vc) = &bounds.variant_c {
            if traj.snapshots.is_empty() {
                return Err(Error::MissingData(
                    "the pointwise comparison check needs snapshots".into(),
                ));
            }
            let mut excess = f64::NEG_INFINITY;
            for snap in &traj.snapshots {
                let w = comparison_w(vc.m0, rho, vc.a_rho, snap.t);
                excess = excess.max(snap.phi.sub(phi_star).linf_norm() - w);
            }
            comparison_ok = Some(excess <= opts.comparison_tol);
            comparison_max_excess = Some(excess);
        }
        if opts.remark_decreasing {
            let condition_holds = bounds.reinforced.is_some_and(|r| r.holds);
            let decreasing_ok = series
                .windows(2)
                .filter(|w| w[0].1 > tol)
                .all(|w| w[1].1 * w[1].1 < w[0].1 * w[0].1);
            remark_decreasing = Some(RemarkCheck {
                condition_holds,
                decreasing_ok,
            });
        }
    } else {
        formulas.insert("slope", FORMULA_SLOPE);
    }

    let status = if !bounds.applicable {
        VerdictStatus::BoundInapplicable
    } else {
        let pred = bounds.t_star_pred.unwrap_or(f64::INFINITY);
        let timely = m.t_star_emp.is_some_and(|t| t <= pred + sample_interval);
        let shape_ok = match &spec.variant {
            Variant::A { .. } | Variant::B { .. } => m.decreasing_ok,
            Variant::C { .. } => {
                comparison_ok.unwrap_or(false)
                    && remark_decreasing
                        .map_or(true, |r| !r.condition_holds || r.decreasing_ok)
            }
        };
        if timely && m.stays_zero_ok && shape_ok {
            VerdictStatus::Pass
        } else {
            VerdictStatus::Fail
        }
    };

    Ok(ExtinctionVerdict {
        schema_version: VERDICT_SCHEMA_VERSION,
        run_id: None,
        variant: spec.variant.label(),
        mode,
        label,
        status,
        t_star_emp: m.t_star_emp,
        t_star_pred: bounds.t_star_pred,
        sample_interval,
        decreasing_ok: m.decreasing_ok,
        stays_zero_ok: m.stays_zero_ok,
        slope_bound_ok,
        s0,
        tol,
        on_manifold_max,
        comparison_ok,
        comparison_max_excess,
        remark_decreasing,
        formulas,
    })
}
