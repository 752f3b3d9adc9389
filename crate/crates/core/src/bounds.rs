//! Gain thresholds `ρ*` and predicted extinction times `T*`.
//!
//! The constants `C_A`, `C_B`, `C₆`, `C₇` only exist as bounds on the exact
//! solution, so they are measured on a pilot run and flagged `empirical`.
//! `C_Ω` is an empirical lower estimate, which makes the variant-C
//! threshold heuristic.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize, Serializer};

use crate::dynamics::{ProblemSpec, Trajectory, Variant};
use crate::error::{Error, Result};
use crate::grid::{laplacian_neumann, EmbeddingEstimate};
use crate::operators::{beta_minimal, pi_eval};

pub const BOUNDS_SCHEMA_VERSION: u32 = 1;

/// `C_str = 2·max{√6/ν, ℓ/(√κ√ν) + 4ℓ/κ}`.
pub fn c_str(ell: f64, kappa: f64, nu: f64) -> f64 {
    2.0 * (6f64.sqrt() / nu).max(ell / (kappa.sqrt() * nu.sqrt()) + 4.0 * ell / kappa)
}

/// `C_str·C_Ω·|Ω|^{7/6}`, the factor in front of `ρ` in the sup-norm bounds.
pub fn sup_norm_factor(c_str: f64, c_omega: f64, measure: f64) -> f64 {
    c_str * c_omega * measure.powf(7.0 / 6.0)
}

/// `1 − γ·C_str·C_Ω·|Ω|^{7/6}`.
pub fn smallness_margin(gamma: f64, c_str: f64, c_omega: f64, measure: f64) -> f64 {
    1.0 - gamma * sup_norm_factor(c_str, c_omega, measure)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ConstantKind {
    #[serde(rename = "C_A")]
    CA,
    #[serde(rename = "C_B")]
    CB,
    C6,
    C7,
}

impl ConstantKind {
    pub fn name(self) -> &'static str {
        match self {
            ConstantKind::CA => "C_A",
            ConstantKind::CB => "C_B",
            ConstantKind::C6 => "C6",
            ConstantKind::C7 => "C7",
        }
    }
}

/// Measures a structural constant on a pilot trajectory run at gain `rho`
/// with snapshots:
///
/// - `C_A = sup_t ‖f − (ℓ−α)∂tφ − καΔφ + κΔη*‖ / (√ρ + 1)`
/// - `C_B = sup_t ‖γθ + νΔφ* − β°(φ*) − π(φ)‖`
/// - `C₆ = max(0, sup_t ‖φ − φ*‖_∞ − ρK)`, `C₇ = max(0, sup_t ‖θ‖_∞ − ρK)`
///
/// with `K = C_str·C_Ω·|Ω|^{7/6}` passed as `sup_factor`.
pub fn estimate_constant(
    traj: &Trajectory,
    spec: &ProblemSpec,
    which: ConstantKind,
    rho: f64,
    sup_factor: f64,
) -> Result<f64> {
    if traj.snapshots.is_empty() {
        return Err(Error::MissingData(format!(
            "estimating {} needs full-field snapshots",
            which.name()
        )));
    }
    let p = &spec.params;
    let mesh = spec.mesh();
    let sup = |g: &dyn Fn(&crate::dynamics::Snapshot) -> Result<f64>| -> Result<f64> {
        traj.snapshots
            .iter()
            .try_fold(0.0f64, |acc, s| Ok(acc.max(g(s)?)))
    };
    match which {
        ConstantKind::CA => {
            let Variant::A { alpha, eta_star } = &spec.variant else {
                return Err(Error::BoundInapplicable("C_A is defined for variant A".into()));
            };
            let lap_eta = laplacian_neumann(eta_star);
            let s = sup(&|snap| {
                let g = spec
                    .source
                    .at(snap.t, &mesh)
                    .axpy(-(p.ell - alpha), &snap.dphi_dt)
                    .axpy(-p.kappa * alpha, &laplacian_neumann(&snap.phi))
                    .axpy(p.kappa, &lap_eta);
                Ok(g.l2_norm())
            })?;
            Ok(s / (rho.sqrt() + 1.0))
        }
        ConstantKind::CB => {
            let phi_star = match &spec.variant {
                Variant::B { phi_star } | Variant::C { phi_star } => phi_star,
                Variant::A { .. } => {
                    return Err(Error::BoundInapplicable("C_B is defined for variants B and C".into()))
                }
            };
            let xi_star = minimal_section(spec)?;
            let base = laplacian_neumann(phi_star).scaled(p.nu).sub(&xi_star);
            sup(&|snap| {
                let g = snap
                    .theta
                    .zip_map(&snap.phi, |th, ph| p.gamma * th - pi_eval(&spec.potential, ph).0)
                    .add(&base);
                Ok(g.l2_norm())
            })
        }
        ConstantKind::C6 => {
            let target = spec.variant.target();
            let s = sup(&|snap| Ok(snap.phi.sub(target).linf_norm()))?;
            Ok((s - rho * sup_factor).max(0.0))
        }
        ConstantKind::C7 => {
            let s = sup(&|snap| Ok(snap.theta.linf_norm()))?;
            Ok((s - rho * sup_factor).max(0.0))
        }
    }
}

/// `ξ* = β°(φ*)` nodewise.
pub fn minimal_section(spec: &ProblemSpec) -> Result<crate::grid::Field> {
    let target = spec.variant.target();
    let vals = target
        .values()
        .iter()
        .map(|&r| beta_minimal(&spec.potential, r))
        .collect::<Result<Vec<_>>>()?;
    Ok(target.like(vals))
}

/// A threshold gain with the predicted extinction time at the chosen gain.
/// `t_star` is `+∞` when the denominator is not positive.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Thresholds {
    pub rho_star: f64,
    pub t_star: f64,
}

fn lemma_pair(a_sq_2b: f64, norm0: f64, t_final: f64, rho: f64) -> Thresholds {
    let rho_star = a_sq_2b + 2.0 * norm0 / t_final;
    let denom = rho - a_sq_2b;
    let t_star = if denom > 0.0 {
        2.0 * norm0 / denom
    } else {
        f64::INFINITY
    };
    if rho > rho_star {
        debug_assert!(t_star < t_final);
    }
    Thresholds { rho_star, t_star }
}

/// Variant A: `ρ* = C_A² + 2C_A + 2ψ₀/T`, `T* = 2ψ₀/(ρ − C_A² − 2C_A)`.
pub fn rho_t_star_a(c_a: f64, norm0: f64, t_final: f64, rho: f64) -> Thresholds {
    lemma_pair(c_a * c_a + 2.0 * c_a, norm0, t_final, rho)
}

/// Variant B: `ρ* = 2C_B + 2ψ₀/T`, `T* = 2ψ₀/(ρ − 2C_B)`.
pub fn rho_t_star_b(c_b: f64, norm0: f64, t_final: f64, rho: f64) -> Thresholds {
    lemma_pair(2.0 * c_b, norm0, t_final, rho)
}

/// Scalar inputs of the variant-C threshold.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariantCInputs {
    pub gamma: f64,
    pub c7: f64,
    pub nu: f64,
    /// `‖Δφ*‖_∞`.
    pub lap_phistar_inf: f64,
    /// `‖ξ*‖_∞` with `ξ* = β°(φ*)`.
    pub xistar_inf: f64,
    /// Lipschitz constant `L` of `π`.
    pub lipschitz: f64,
    /// `|π(0)|`.
    pub pi_zero: f64,
    /// `M₀ = ‖φ₀ − φ*‖_∞`.
    pub m0: f64,
    pub phistar_inf: f64,
    pub t_final: f64,
    pub rho: f64,
    pub c_str: f64,
    pub c_omega: f64,
    pub omega_measure: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariantCBounds {
    #[serde(serialize_with = "finite_or_null")]
    pub rho_star: f64,
    #[serde(serialize_with = "finite_or_null")]
    pub t_star: f64,
    pub m0: f64,
    pub m_pi_star: f64,
    /// `A(ρ)` at the chosen gain.
    pub a_rho: f64,
    pub margin: f64,
}

/// `M_π* = L(M₀ + ‖φ*‖_∞) + |π(0)|`,
/// `A(ρ) = γ(Kρ + C₇) + ν‖Δφ*‖_∞ + ‖ξ*‖_∞ + M_π*`,
/// `ρ* = (γC₇ + ν‖Δφ*‖_∞ + ‖ξ*‖_∞ + M_π* + M₀/T)/(1 − γK)`,
/// `T* = M₀/(ρ − A(ρ))`, with `K = C_str·C_Ω·|Ω|^{7/6}`.
pub fn rho_t_star_c(inp: &VariantCInputs) -> Result<VariantCBounds> {
    let k = sup_norm_factor(inp.c_str, inp.c_omega, inp.omega_measure);
    let margin = 1.0 - inp.gamma * k;
    if margin <= 0.0 {
        return Err(Error::BoundInapplicable(format!(
            "smallness condition fails: γ·C_str·C_Ω·|Ω|^(7/6) = {} ≥ 1",
            inp.gamma * k
        )));
    }
    let m_pi_star = inp.lipschitz * (inp.m0 + inp.phistar_inf) + inp.pi_zero;
    let rest = inp.nu * inp.lap_phistar_inf + inp.xistar_inf + m_pi_star;
    let a_rho = inp.gamma * (k * inp.rho + inp.c7) + rest;
    let rho_star = (inp.gamma * inp.c7 + rest + inp.m0 / inp.t_final) / margin;
    let denom = inp.rho - a_rho;
    let t_star = if inp.m0 == 0.0 && denom >= 0.0 {
        0.0
    } else if denom > 0.0 {
        inp.m0 / denom
    } else {
        f64::INFINITY
    };
    if inp.rho > rho_star {
        debug_assert!(inp.rho > a_rho + inp.m0 / inp.t_final * (1.0 - 1e-12));
    }
    Ok(VariantCBounds {
        rho_star,
        t_star,
        m0: inp.m0,
        m_pi_star,
        a_rho,
        margin,
    })
}

/// Reinforced condition for monotone decay of `‖φ − φ*‖` under variant C:
/// `ρ > (γ + L)Kρ + C̃` with
/// `C̃ = γC₇ + LC₆ + ν‖Δφ*‖_∞ + ‖ξ*‖_∞ + L‖φ*‖_∞ + |π(0)|`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReinforcedCondition {
    pub c6: f64,
    pub c_tilde: f64,
    /// `ρ − (γ + L)Kρ − C̃`; positive iff the condition holds.
    pub slack: f64,
    pub holds: bool,
}

pub fn reinforced_condition(inp: &VariantCInputs, c6: f64) -> ReinforcedCondition {
    let k = sup_norm_factor(inp.c_str, inp.c_omega, inp.omega_measure);
    let c_tilde = inp.gamma * inp.c7
        + inp.lipschitz * c6
        + inp.nu * inp.lap_phistar_inf
        + inp.xistar_inf
        + inp.lipschitz * inp.phistar_inf
        + inp.pi_zero;
    let slack = inp.rho - (inp.gamma + inp.lipschitz) * k * inp.rho - c_tilde;
    ReinforcedCondition {
        c6,
        c_tilde,
        slack,
        holds: slack > 0.0,
    }
}

/// Serializes non-finite numbers as `null`.
pub fn finite_or_null<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_none()
    }
}

fn opt_finite_or_null<S: Serializer>(v: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(x) if x.is_finite() => s.serialize_f64(*x),
        _ => s.serialize_none(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// Closed-form in the physical parameters.
    Exact,
    /// Measured on a pilot run or estimated by sampling.
    Empirical,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantEntry {
    pub value: f64,
    pub provenance: Provenance,
    /// Gain of the pilot run the value was measured on.
    pub pilot_rho: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingEntry {
    pub value: f64,
    pub provenance: Provenance,
    pub note: String,
    pub samples: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundsReport {
    pub schema_version: u32,
    pub variant: &'static str,
    pub c_str: f64,
    pub c_omega: EmbeddingEntry,
    pub omega_measure: f64,
    pub smallness_margin: f64,
    pub constants: BTreeMap<&'static str, ConstantEntry>,
    /// Initial manifold distance `ψ₀` in `L²(Ω)`.
    pub psi0: f64,
    pub rho: f64,
    pub t_final: f64,
    #[serde(serialize_with = "opt_finite_or_null")]
    pub rho_star: Option<f64>,
    #[serde(serialize_with = "opt_finite_or_null")]
    pub t_star_pred: Option<f64>,
    /// `ρ > ρ*`, i.e. the sliding bound applies at the chosen gain.
    pub applicable: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inapplicable_reason: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variant_c: Option<VariantCBounds>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reinforced: Option<ReinforcedCondition>,
    pub formulas: BTreeMap<&'static str, &'static str>,
}

impl BoundsReport {
    pub fn constant(&self, which: ConstantKind) -> Option<f64> {
        self.constants.get(which.name()).map(|c| c.value)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub const FORMULA_C_STR: &str = "C_str = 2 max{sqrt(6)/nu, ell/(sqrt(kappa) sqrt(nu)) + 4 ell/kappa}";
pub const FORMULA_MARGIN: &str = "margin = 1 - gamma C_str C_Omega |Omega|^(7/6)";
pub const FORMULA_A: &str =
    "rho* = C_A^2 + 2 C_A + 2 psi0/T; T* = 2 psi0/(rho - C_A^2 - 2 C_A); psi0 = |theta0 + alpha phi0 - eta*|";
pub const FORMULA_B: &str = "rho* = 2 C_B + 2 psi0/T; T* = 2 psi0/(rho - 2 C_B); psi0 = |phi0 - phi*|";
pub const FORMULA_C: &str = "rho* = (gamma C7 + nu |lap phi*|_inf + |xi*|_inf + M_pi* + M0/T)/margin; \
     A(rho) = gamma(C_str C_Omega |Omega|^(7/6) rho + C7) + nu |lap phi*|_inf + |xi*|_inf + M_pi*; \
     T* = M0/(rho - A(rho)); M_pi* = L(M0 + |phi*|_inf) + |pi(0)|; M0 = |phi0 - phi*|_inf";
pub const FORMULA_C_A: &str = "C_A = sup_t |f - (ell - alpha) dphi/dt - kappa alpha lap phi + kappa lap eta*| / (sqrt(rho) + 1)";
pub const FORMULA_C_B: &str = "C_B = sup_t |gamma theta + nu lap phi* - beta0(phi*) - pi(phi)|";
pub const FORMULA_C6_C7: &str =
    "C6 = max(0, sup_t |phi - phi*|_inf - rho K); C7 = max(0, sup_t |theta|_inf - rho K); K = C_str C_Omega |Omega|^(7/6)";
pub const FORMULA_REINFORCED: &str = "rho > (gamma + L) K rho + C~; \
     C~ = gamma C7 + L C6 + nu |lap phi*|_inf + |xi*|_inf + L |phi*|_inf + |pi(0)|";

/// Inputs of [`bounds_report`].
pub struct BoundsInputs<'a> {
    /// Problem at the gain of interest (`spec.rho`).
    pub spec: &'a ProblemSpec,
    /// Pilot run with snapshots.
    pub pilot: &'a Trajectory,
    pub pilot_rho: f64,
    pub embedding: EmbeddingEstimate,
    pub t_final: f64,
}

/// Assembles every constant and threshold for `inputs.spec`.
pub fn bounds_report(inputs: &BoundsInputs<'_>) -> Result<BoundsReport> {
    let spec = inputs.spec;
    let p = &spec.params;
    let mesh = spec.mesh();
    let measure = mesh.measure();
    let cs = c_str(p.ell, p.kappa, p.nu);
    let c_omega = inputs.embedding.value;
    let k = sup_norm_factor(cs, c_omega, measure);
    let margin = smallness_margin(p.gamma, cs, c_omega, measure);
    let rho = spec.rho;
    let psi0 = spec.manifold_distance(&spec.theta0, &spec.phi0);

    let mut constants = BTreeMap::new();
    let mut formulas = BTreeMap::new();
    formulas.insert("c_str", FORMULA_C_STR);
    formulas.insert("smallness_margin", FORMULA_MARGIN);
    let put = |which: ConstantKind, constants: &mut BTreeMap<_, _>| -> Result<f64> {
        let v = estimate_constant(inputs.pilot, spec, which, inputs.pilot_rho, k)?;
        constants.insert(
            which.name(),
            ConstantEntry {
                value: v,
                provenance: Provenance::Empirical,
                pilot_rho: inputs.pilot_rho,
            },
        );
        Ok(v)
    };

    let mut variant_c = None;
    let mut reinforced = None;
    let mut inapplicable_reason = None;
    let (rho_star, t_star) = match &spec.variant {
        Variant::A { .. } => {
            let c_a = put(ConstantKind::CA, &mut constants)?;
            formulas.insert("C_A", FORMULA_C_A);
            formulas.insert("thresholds", FORMULA_A);
            let th = rho_t_star_a(c_a, psi0, inputs.t_final, rho);
            (Some(th.rho_star), Some(th.t_star))
        }
        Variant::B { .. } => {
            let c_b = put(ConstantKind::CB, &mut constants)?;
            formulas.insert("C_B", FORMULA_C_B);
            formulas.insert("thresholds", FORMULA_B);
            let th = rho_t_star_b(c_b, psi0, inputs.t_final, rho);
            (Some(th.rho_star), Some(th.t_star))
        }
        Variant::C { phi_star } => {
            let c7 = put(ConstantKind::C7, &mut constants)?;
            let c6 = put(ConstantKind::C6, &mut constants)?;
            formulas.insert("C6_C7", FORMULA_C6_C7);
            formulas.insert("thresholds", FORMULA_C);
            formulas.insert("reinforced", FORMULA_REINFORCED);
            let inp = VariantCInputs {
                gamma: p.gamma,
                c7,
                nu: p.nu,
                lap_phistar_inf: laplacian_neumann(phi_star).linf_norm(),
                xistar_inf: minimal_section(spec)?.linf_norm(),
                lipschitz: spec.potential.lipschitz(),
                pi_zero: pi_eval(&spec.potential, 0.0).0.abs(),
                m0: spec.phi0.sub(phi_star).linf_norm(),
                phistar_inf: phi_star.linf_norm(),
                t_final: inputs.t_final,
                rho,
                c_str: cs,
                c_omega,
                omega_measure: measure,
            };
            match rho_t_star_c(&inp) {
                Ok(b) => {
                    variant_c = Some(b);
                    reinforced = Some(reinforced_condition(&inp, c6));
                    (Some(b.rho_star), Some(b.t_star))
                }
                Err(Error::BoundInapplicable(msg)) => {
                    inapplicable_reason = Some(msg);
                    (None, None)
                }
                Err(e) => return Err(e),
            }
        }
    };
    let applicable = matches!(rho_star, Some(r) if rho > r);
    if inapplicable_reason.is_none() && !applicable {
        inapplicable_reason = Some(format!(
            "gain {rho} does not exceed the threshold {}",
            rho_star.unwrap_or(f64::NAN)
        ));
    }

    Ok(BoundsReport {
        schema_version: BOUNDS_SCHEMA_VERSION,
        variant: spec.variant.label(),
        c_str: cs,
        c_omega: EmbeddingEntry {
            value: c_omega,
            provenance: Provenance::Empirical,
            note: "empirical lower estimate".into(),
            samples: inputs.embedding.samples,
            seed: inputs.embedding.seed,
        },
        omega_measure: measure,
        smallness_margin: margin,
        constants,
        psi0,
        rho,
        t_final: inputs.t_final,
        rho_star,
        t_star_pred: t_star,
        applicable,
        inapplicable_reason,
        variant_c,
        reinforced,
        formulas,
    })
}
