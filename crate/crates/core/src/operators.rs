//! Scalar and field-level monotone operators.
//!
//! The double-well potentials are split as `F = β̂ + π̂` with `β̂` convex,
//! lower semicontinuous and `β̂(0) = 0`, and `π̂` smooth with Lipschitz
//! derivative `π`. The regularizations used by the time integrator (Yosida
//! approximation of `β`, regularized `Sign` and the Moreau envelope of the
//! `L²` norm) are defined here, together with the proximal maps applied in
//! prox mode.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::Field;

/// Absolute tolerance on the resolvent residual `x + εβ(x) - r`.
pub const RESOLVENT_TOL: f64 = 1e-12;
/// Iteration budget of the safeguarded Newton iteration.
pub const RESOLVENT_MAX_ITER: usize = 200;
/// Iterates for the logarithmic potential stay in `[-1 + δ, 1 - δ]`.
pub const LOG_GUARD: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PotentialKind {
    Regular,
    Logarithmic,
    Obstacle,
}

impl PotentialKind {
    pub const ALL: [PotentialKind; 3] = [
        PotentialKind::Regular,
        PotentialKind::Logarithmic,
        PotentialKind::Obstacle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PotentialKind::Regular => "regular",
            PotentialKind::Logarithmic => "logarithmic",
            PotentialKind::Obstacle => "obstacle",
        }
    }
}

impl std::fmt::Display for PotentialKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for PotentialKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "regular" => Ok(PotentialKind::Regular),
            "logarithmic" | "log" => Ok(PotentialKind::Logarithmic),
            "obstacle" => Ok(PotentialKind::Obstacle),
            other => Err(format!(
                "unknown potential kind `{other}`; allowed kinds: regular, logarithmic, obstacle"
            )),
        }
    }
}

/// One of the three double-well potentials.
///
/// * regular: `¼(r² − 1)²`, with `β̂(r) = r⁴/4` and `π(r) = −r`;
/// * logarithmic: `(1+r)ln(1+r) + (1−r)ln(1−r) − c₀r²`, `c₀ > 1`;
/// * obstacle: `I_[−1,1](r) − c₀r²`, `c₀ > 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Potential {
    pub kind: PotentialKind,
    /// Well-depth coefficient. Ignored by the regular potential.
    pub c0: f64,
}

impl Potential {
    pub const DEFAULT_LOG_C0: f64 = 2.0;
    pub const DEFAULT_OBSTACLE_C0: f64 = 1.0;

    pub fn regular() -> Self {
        Potential {
            kind: PotentialKind::Regular,
            c0: 0.0,
        }
    }

    pub fn logarithmic(c0: f64) -> Result<Self> {
        if !(c0.is_finite() && c0 > 1.0) {
            return Err(invalid("c0", format!("logarithmic potential needs c0 > 1, got {c0}")));
        }
        Ok(Potential {
            kind: PotentialKind::Logarithmic,
            c0,
        })
    }

    pub fn obstacle(c0: f64) -> Result<Self> {
        if !(c0.is_finite() && c0 > 0.0) {
            return Err(invalid("c0", format!("obstacle potential needs c0 > 0, got {c0}")));
        }
        Ok(Potential {
            kind: PotentialKind::Obstacle,
            c0,
        })
    }

    /// Builds a potential of the given kind; `c0 = None` picks the default.
    pub fn new(kind: PotentialKind, c0: Option<f64>) -> Result<Self> {
        match kind {
            PotentialKind::Regular => Ok(Self::regular()),
            PotentialKind::Logarithmic => Self::logarithmic(c0.unwrap_or(Self::DEFAULT_LOG_C0)),
            PotentialKind::Obstacle => Self::obstacle(c0.unwrap_or(Self::DEFAULT_OBSTACLE_C0)),
        }
    }

    /// Lipschitz constant `L` of `π`.
    pub fn lipschitz(&self) -> f64 {
        match self.kind {
            PotentialKind::Regular => 1.0,
            PotentialKind::Logarithmic | PotentialKind::Obstacle => 2.0 * self.c0,
        }
    }

    /// `r ∈ D(β)`.
    pub fn in_domain(&self, r: f64) -> bool {
        match self.kind {
            PotentialKind::Regular => r.is_finite(),
            PotentialKind::Logarithmic => r > -1.0 && r < 1.0,
            PotentialKind::Obstacle => (-1.0..=1.0).contains(&r),
        }
    }

    /// `r ∈ D(β̂)`, i.e. `β̂(r) < +∞`.
    pub fn in_energy_domain(&self, r: f64) -> bool {
        match self.kind {
            PotentialKind::Regular => r.is_finite(),
            PotentialKind::Logarithmic | PotentialKind::Obstacle => (-1.0..=1.0).contains(&r),
        }
    }

    /// `π̂(r)`. The regular potential keeps the additive constant `¼` so that
    /// `β̂ + π̂` is exactly `¼(r² − 1)²`.
    pub fn pi_hat(&self, r: f64) -> f64 {
        match self.kind {
            PotentialKind::Regular => 0.25 - 0.5 * r * r,
            PotentialKind::Logarithmic | PotentialKind::Obstacle => -self.c0 * r * r,
        }
    }

    /// The full double well `F = β̂ + π̂`.
    pub fn energy_density(&self, r: f64) -> f64 {
        beta_hat(self, r) + self.pi_hat(r)
    }
}

/// Value of the graph `β(r)` as a closed interval `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MonotoneGraphPoint {
    pub r: f64,
    pub lo: f64,
    pub hi: f64,
}

impl MonotoneGraphPoint {
    pub fn is_single_valued(&self) -> bool {
        self.lo == self.hi
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    /// Element of minimum modulus.
    pub fn minimal(&self) -> f64 {
        if self.lo > 0.0 {
            self.lo
        } else if self.hi < 0.0 {
            self.hi
        } else {
            0.0
        }
    }
}

/// The section `β(r)`, or `None` when `r ∉ D(β)`.
pub fn beta_graph(pot: &Potential, r: f64) -> Option<MonotoneGraphPoint> {
    if !pot.in_domain(r) {
        return None;
    }
    let (lo, hi) = match pot.kind {
        PotentialKind::Regular => (r * r * r, r * r * r),
        PotentialKind::Logarithmic => {
            let v = log_beta(r);
            (v, v)
        }
        PotentialKind::Obstacle => {
            if r == 1.0 {
                (0.0, f64::INFINITY)
            } else if r == -1.0 {
                (f64::NEG_INFINITY, 0.0)
            } else {
                (0.0, 0.0)
            }
        }
    };
    Some(MonotoneGraphPoint { r, lo, hi })
}

fn log_beta(r: f64) -> f64 {
    // ln((1+r)/(1-r)) = 2 atanh(r)
    2.0 * r.atanh()
}

fn xlnx(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

/// Convex part `β̂(r)`, `+∞` outside its effective domain.
pub fn beta_hat(pot: &Potential, r: f64) -> f64 {
    match pot.kind {
        PotentialKind::Regular => 0.25 * r.powi(4),
        PotentialKind::Logarithmic => {
            if (-1.0..=1.0).contains(&r) {
                xlnx(1.0 + r) + xlnx(1.0 - r)
            } else {
                f64::INFINITY
            }
        }
        PotentialKind::Obstacle => {
            if (-1.0..=1.0).contains(&r) {
                0.0
            } else {
                f64::INFINITY
            }
        }
    }
}

/// Minimal section `β°(r)`.
pub fn beta_minimal(pot: &Potential, r: f64) -> Result<f64> {
    beta_graph(pot, r)
        .map(|g| g.minimal())
        .ok_or(Error::Domain {
            potential: pot.kind.name(),
            value: r,
        })
}

/// `(π(r), π'(r))`.
pub fn pi_eval(pot: &Potential, r: f64) -> (f64, f64) {
    match pot.kind {
        PotentialKind::Regular => (-r, -1.0),
        PotentialKind::Logarithmic | PotentialKind::Obstacle => {
            (-2.0 * pot.c0 * r, -2.0 * pot.c0)
        }
    }
}

/// Resolvent `J_ε(r)`: the unique `x` with `x + εβ(x) ∋ r`.
pub fn resolvent(pot: &Potential, eps: f64, r: f64) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(invalid("eps", format!("must be positive, got {eps}")));
    }
    if !r.is_finite() {
        return Err(invalid("r", format!("must be finite, got {r}")));
    }
    match pot.kind {
        PotentialKind::Obstacle => Ok(r.clamp(-1.0, 1.0)),
        PotentialKind::Regular => {
            // |x| ≤ min(|r|, (|r|/ε)^{1/3}) since both terms share the sign of r
            let bound = r.abs().min(r.abs().cbrt() / eps.cbrt());
            monotone_root(
                |x| x * (1.0 + eps * x * x),
                |x| 1.0 + 3.0 * eps * x * x,
                r,
                if r < 0.0 { -bound } else { 0.0 },
                if r > 0.0 { bound } else { 0.0 },
                eps,
            )
        }
        PotentialKind::Logarithmic => {
            let lo = r.min(0.0).max(-1.0 + LOG_GUARD);
            let hi = r.max(0.0).min(1.0 - LOG_GUARD);
            let g = |x: f64| x + eps * log_beta(x);
            // Root beyond the guard band: return the guard itself.
            if g(hi) <= r {
                return Ok(hi);
            }
            if g(lo) >= r {
                return Ok(lo);
            }
            monotone_root(g, |x| 1.0 + 2.0 * eps / (1.0 - x * x), r, lo, hi, eps)
        }
    }
}

/// Safeguarded Newton iteration for an increasing `g` with `g(lo) ≤ r ≤ g(hi)`,
/// stopped at residual `RESOLVENT_TOL·max(1, |r|)` or a collapsed bracket.
fn monotone_root(
    g: impl Fn(f64) -> f64,
    dg: impl Fn(f64) -> f64,
    r: f64,
    mut lo: f64,
    mut hi: f64,
    eps: f64,
) -> Result<f64> {
    if lo == hi {
        return Ok(lo);
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..RESOLVENT_MAX_ITER {
        let res = g(x) - r;
        if res.abs() <= RESOLVENT_TOL * r.abs().max(1.0) {
            return Ok(x);
        }
        if res > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        if hi - lo <= 4.0 * f64::EPSILON * lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE) {
            return Ok(x);
        }
        let newton = x - res / dg(x);
        x = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    Err(Error::ResolventNonConvergence {
        iterations: RESOLVENT_MAX_ITER,
        r,
        eps,
    })
}

/// Yosida approximation `β_ε(r) = (r − J_ε(r))/ε`.
///
/// Where `β` is single-valued at `J_ε(r)` the value is evaluated as
/// `β(J_ε(r))`, which is the same number without the cancellation.
pub fn beta_yosida(pot: &Potential, eps: f64, r: f64) -> Result<f64> {
    let j = resolvent(pot, eps, r)?;
    let v = match pot.kind {
        PotentialKind::Regular => j * j * j,
        PotentialKind::Logarithmic if j.abs() < 1.0 - LOG_GUARD => log_beta(j),
        _ => (r - j) / eps,
    };
    Ok(v)
}

/// Regularized scalar sign `r / max(ε, |r|)`.
pub fn sign_eps_scalar(eps: f64, r: f64) -> f64 {
    r / eps.max(r.abs())
}

/// Regularized nonlocal sign `v / max(ε, ‖v‖)`, with the discrete `L²` norm.
pub fn sign_eps_field(v: &Field, eps: f64) -> Field {
    let denom = eps.max(v.l2_norm());
    v.scaled(1.0 / denom)
}

/// Moreau envelope of the norm, as a function of `‖v‖`.
pub fn moreau_norm(v_norm: f64, eps: f64) -> f64 {
    if v_norm <= eps {
        v_norm * v_norm / (2.0 * eps)
    } else {
        v_norm - 0.5 * eps
    }
}

/// Proximal map of `τ|·|`.
pub fn soft_threshold(r: f64, tau: f64) -> f64 {
    if r > tau {
        r - tau
    } else if r < -tau {
        r + tau
    } else {
        0.0
    }
}

/// Proximal map of `τ‖·‖` on `L²(Ω)`: shrinks `v` radially by `τ`.
pub fn shrink_ball(v: &Field, tau: f64) -> Field {
    let n = v.l2_norm();
    if n <= tau {
        Field::zeros(v.mesh_arc())
    } else {
        v.scaled(1.0 - tau / n)
    }
}
