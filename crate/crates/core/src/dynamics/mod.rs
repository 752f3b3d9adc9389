//! Time integration of the controlled phase-field systems.
//!
//! All three variants share the balance law `∂t(θ + ℓφ) − κΔθ = f` and the
//! phase equation `∂tφ − νΔφ + ξ + π(φ) = γθ` with `ξ ∈ β(φ)`. Variant A
//! adds `−ρσ`, `σ ∈ Sign(θ + αφ − η*)`, to the balance law; variants B and C
//! add `−ρσ` to the phase equation with `σ ∈ Sign(φ − φ*)` (nonlocal) and
//! `σ ∈ sign(φ − φ*)` (pointwise) respectively.
//!
//! One step is a splitting: the phase equation is advanced first with
//! implicit diffusion, then the balance law with implicit diffusion and the
//! fresh `∂tφ`. The monotone terms are handled either explicitly through
//! their Yosida regularizations ([`Mode::Regularized`]) or implicitly through
//! their proximal maps ([`Mode::Prox`]); only the latter can reach the
//! sliding manifold exactly.

mod diagnostics;
mod simulate;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::{laplacian_neumann, solve_shifted, Field, Mesh};
use crate::operators::{
    beta_minimal, beta_yosida, pi_eval, resolvent, shrink_ball, sign_eps_field, sign_eps_scalar,
    soft_threshold, Potential,
};

pub use diagnostics::{balance_residual, free_energy};
pub use simulate::{
    read_trajectory_csv, simulate, write_trajectory_csv, RunSettings, Sample, Snapshot, Trajectory,
    TRAJECTORY_CSV_HEADER,
};

/// Physical constants `ℓ, κ, ν, γ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysParams {
    pub ell: f64,
    pub kappa: f64,
    pub nu: f64,
    pub gamma: f64,
}

impl PhysParams {
    pub fn new(ell: f64, kappa: f64, nu: f64, gamma: f64) -> Result<Self> {
        let p = PhysParams {
            ell,
            kappa,
            nu,
            gamma,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn unit() -> Self {
        PhysParams {
            ell: 1.0,
            kappa: 1.0,
            nu: 1.0,
            gamma: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("ell", self.ell),
            ("kappa", self.kappa),
            ("nu", self.nu),
            ("gamma", self.gamma),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(name, format!("must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Which feedback law is active, with its target.
#[derive(Clone, Debug)]
pub enum Variant {
    /// Control in the balance law, manifold `θ + αφ = η*`.
    A { alpha: f64, eta_star: Field },
    /// Nonlocal control in the phase equation, manifold `φ = φ*`.
    B { phi_star: Field },
    /// Pointwise control in the phase equation, manifold `φ = φ*`.
    C { phi_star: Field },
}

impl Variant {
    pub fn label(&self) -> &'static str {
        match self {
            Variant::A { .. } => "A",
            Variant::B { .. } => "B",
            Variant::C { .. } => "C",
        }
    }

    pub fn target(&self) -> &Field {
        match self {
            Variant::A { eta_star, .. } => eta_star,
            Variant::B { phi_star } | Variant::C { phi_star } => phi_star,
        }
    }
}

/// Heat source `f(t, ·)`.
#[derive(Clone, Default)]
pub enum Source {
    #[default]
    Zero,
    Steady(Field),
    Transient(Arc<dyn Fn(f64, &Arc<Mesh>) -> Field + Send + Sync>),
}

impl Source {
    pub fn at(&self, t: f64, mesh: &Arc<Mesh>) -> Field {
        match self {
            Source::Zero => Field::zeros(mesh.clone()),
            Source::Steady(f) => f.clone(),
            Source::Transient(g) => g(t, mesh),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Source::Zero)
    }
}

impl fmt::Debug for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Source::Zero => f.write_str("Zero"),
            Source::Steady(_) => f.write_str("Steady(..)"),
            Source::Transient(_) => f.write_str("Transient(..)"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Explicit Yosida-regularized `β_ε` and `Sign_ε`.
    Regularized,
    /// Exact proximal maps for `β` and the control.
    Prox,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Regularized => "regularized",
            Mode::Prox => "prox",
        })
    }
}

#[derive(Clone, Debug)]
pub struct ProblemSpec {
    pub params: PhysParams,
    pub variant: Variant,
    /// Control gain `ρ ≥ 0`.
    pub rho: f64,
    /// Regularization level `ε > 0`.
    pub eps: f64,
    pub potential: Potential,
    pub source: Source,
    pub theta0: Field,
    pub phi0: Field,
    /// Specific heat used only by the free-energy diagnostic.
    pub c0_heat: f64,
}

impl ProblemSpec {
    pub fn mesh(&self) -> Arc<Mesh> {
        self.theta0.mesh_arc()
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if !(self.rho.is_finite() && self.rho >= 0.0) {
            return Err(invalid("rho", format!("must be nonnegative, got {}", self.rho)));
        }
        if !(self.eps.is_finite() && self.eps > 0.0) {
            return Err(invalid("eps", format!("must be positive, got {}", self.eps)));
        }
        if !(self.c0_heat.is_finite() && self.c0_heat > 0.0) {
            return Err(invalid("c0_heat", format!("must be positive, got {}", self.c0_heat)));
        }
        self.theta0.check_same_mesh(&self.phi0, "theta0 and phi0")?;
        self.theta0
            .check_same_mesh(self.variant.target(), "initial data and control target")?;
        if let Source::Steady(f) = &self.source {
            self.theta0.check_same_mesh(f, "initial data and source")?;
        }
        if let Some(i) = self
            .phi0
            .values()
            .iter()
            .position(|&r| !self.potential.in_energy_domain(r))
        {
            return Err(invalid(
                "phi0",
                format!(
                    "value {} at node {i} lies outside the domain of the {} potential",
                    self.phi0.values()[i],
                    self.potential.kind
                ),
            ));
        }
        match &self.variant {
            Variant::A { alpha, .. } if !alpha.is_finite() => {
                return Err(invalid("alpha", "must be finite"));
            }
            Variant::B { phi_star } | Variant::C { phi_star } => {
                for &r in phi_star.values() {
                    beta_minimal(&self.potential, r)
                        .map_err(|_| invalid("phi_star", format!("value {r} lies outside D(β)")))?;
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// `θ + αφ − η*` (A) or `φ − φ*` (B, C).
    pub fn manifold_residual(&self, theta: &Field, phi: &Field) -> Field {
        match &self.variant {
            Variant::A { alpha, eta_star } => theta.axpy(*alpha, phi).sub(eta_star),
            Variant::B { phi_star } | Variant::C { phi_star } => phi.sub(phi_star),
        }
    }

    /// `ψ = ‖θ + αφ − η*‖` or `‖φ − φ*‖`.
    pub fn manifold_distance(&self, theta: &Field, phi: &Field) -> f64 {
        self.manifold_residual(theta, phi).l2_norm()
    }

    /// `∫(θ + ℓφ)`.
    pub fn mass(&self, theta: &Field, phi: &Field) -> f64 {
        theta.integral() + self.params.ell * phi.integral()
    }
}

#[derive(Clone, Debug)]
pub struct State {
    pub t: f64,
    pub theta: Field,
    pub phi: Field,
    /// Selection of `β(φ)` used by the most recent step.
    pub last_xi: Field,
    /// Selection of the control sign used by the most recent step.
    pub last_sigma: Field,
}

pub fn init_state(spec: &ProblemSpec) -> Result<State> {
    spec.validate()?;
    let zeros = Field::zeros(spec.mesh());
    Ok(State {
        t: 0.0,
        theta: spec.theta0.clone(),
        phi: spec.phi0.clone(),
        last_xi: zeros.clone(),
        last_sigma: zeros,
    })
}

/// Regularized control selection `σ` at the given state.
pub fn control_term(state: &State, spec: &ProblemSpec) -> Field {
    let arg = spec.manifold_residual(&state.theta, &state.phi);
    match spec.variant {
        Variant::A { .. } | Variant::B { .. } => sign_eps_field(&arg, spec.eps),
        Variant::C { .. } => arg.map(|r| sign_eps_scalar(spec.eps, r)),
    }
}

fn check_finite(f: &Field, t: f64, field: &'static str) -> Result<()> {
    if f.is_finite() {
        Ok(())
    } else {
        Err(Error::BlowUp { t, field })
    }
}

fn nodewise(f: &Field, op: impl Fn(f64) -> Result<f64>) -> Result<Field> {
    let vals = f.values().iter().map(|&v| op(v)).collect::<Result<Vec<_>>>()?;
    Ok(f.like(vals))
}

/// Advances the state by `dt`.
pub fn step(state: &State, spec: &ProblemSpec, dt: f64, mode: Mode) -> Result<State> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(invalid("dt", format!("must be positive, got {dt}")));
    }
    let t_next = state.t + dt;
    let p = &spec.params;
    let pot = &spec.potential;
    let rho = spec.rho;
    let phi_n = &state.phi;
    let theta_n = &state.theta;

    // explicit part shared by both modes: γθⁿ − π(φⁿ)
    let explicit = theta_n.zip_map(phi_n, |th, ph| p.gamma * th - pi_eval(pot, ph).0);

    let (phi_next, xi, mut sigma) = match mode {
        Mode::Regularized => {
            let xi = nodewise(phi_n, |r| beta_yosida(pot, spec.eps, r))?;
            let sigma = control_term(state, spec);
            let mut rhs = phi_n.axpy(dt, &explicit).axpy(-dt, &xi);
            if matches!(spec.variant, Variant::B { .. } | Variant::C { .. }) {
                rhs = rhs.axpy(-dt * rho, &sigma);
            }
            check_finite(&rhs, t_next, "phi")?;
            let phi = solve_shifted(&rhs, dt * p.nu, Some(phi_n))?;
            (phi, xi, sigma)
        }
        Mode::Prox => {
            let rhs = phi_n.axpy(dt, &explicit);
            check_finite(&rhs, t_next, "phi")?;
            let tilde = solve_shifted(&rhs, dt * p.nu, Some(phi_n))?;
            let projected = nodewise(&tilde, |r| resolvent(pot, dt, r))?;
            let xi = tilde.sub(&projected).scaled(1.0 / dt);
            match &spec.variant {
                Variant::A { .. } => {
                    let zero = Field::zeros(spec.mesh());
                    (projected, xi, zero)
                }
                Variant::B { phi_star } | Variant::C { phi_star } => {
                    let chi = projected.sub(phi_star);
                    let tau = rho * dt;
                    let shrunk = match spec.variant {
                        Variant::B { .. } => shrink_ball(&chi, tau),
                        _ => chi.map(|r| soft_threshold(r, tau)),
                    };
                    let sigma = if tau > 0.0 {
                        chi.sub(&shrunk).scaled(1.0 / tau)
                    } else {
                        Field::zeros(spec.mesh())
                    };
                    (phi_star.add(&shrunk), xi, sigma)
                }
            }
        }
    };
    check_finite(&phi_next, t_next, "phi")?;

    // balance law: θ − dtκΔθ = θⁿ + dt f − ℓ(φⁿ⁺¹ − φⁿ) [− dt ρσ]
    let f = spec.source.at(t_next, &spec.mesh());
    let mut rhs = theta_n
        .axpy(dt, &f)
        .axpy(-p.ell, &phi_next.sub(phi_n));
    if let (Variant::A { .. }, Mode::Regularized) = (&spec.variant, mode) {
        rhs = rhs.axpy(-dt * rho, &sigma);
    }
    check_finite(&rhs, t_next, "theta")?;
    let mut theta_next = solve_shifted(&rhs, dt * p.kappa, Some(theta_n))?;

    if let (Variant::A { alpha, eta_star }, Mode::Prox) = (&spec.variant, mode) {
        let eta = theta_next.axpy(*alpha, &phi_next).sub(eta_star);
        let tau = rho * dt;
        let shrunk = shrink_ball(&eta, tau);
        if tau > 0.0 {
            sigma = eta.sub(&shrunk).scaled(1.0 / tau);
        }
        theta_next = shrunk.add(eta_star).axpy(-*alpha, &phi_next);
    }
    check_finite(&theta_next, t_next, "theta")?;

    Ok(State {
        t: t_next,
        theta: theta_next,
        phi: phi_next,
        last_xi: xi,
        last_sigma: sigma,
    })
}

/// `Δ` of a target field, exposed for the bound computations.
pub fn target_laplacian(spec: &ProblemSpec) -> Field {
    laplacian_neumann(spec.variant.target())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::PotentialKind;

    fn mesh(n: usize) -> Arc<Mesh> {
        Arc::new(Mesh::uniform_1d(1.0, n).unwrap())
    }

    fn spec_b(m: &Arc<Mesh>, theta0: Field, phi0: Field) -> ProblemSpec {
        ProblemSpec {
            params: PhysParams::unit(),
            variant: Variant::B {
                phi_star: Field::zeros(m.clone()),
            },
            rho: 2.0,
            eps: 1e-2,
            potential: Potential::regular(),
            source: Source::Zero,
            theta0,
            phi0,
            c0_heat: 1.0,
        }
    }

    #[test]
    fn init_zero_state() {
        let m = mesh(9);
        let spec = spec_b(&m, Field::zeros(m.clone()), Field::zeros(m.clone()));
        let s = init_state(&spec).unwrap();
        assert_eq!(s.t, 0.0);
        assert_eq!(s.theta.linf_norm() + s.phi.linf_norm(), 0.0);
        assert_eq!(s.last_sigma.linf_norm() + s.last_xi.linf_norm(), 0.0);
    }

    #[test]
    fn init_rejects_out_of_domain_phase() {
        let m = mesh(9);
        let mut phi0 = Field::zeros(m.clone());
        phi0.values_mut()[4] = 1.5;
        let mut spec = spec_b(&m, Field::zeros(m.clone()), phi0);
        spec.potential = Potential::obstacle(1.0).unwrap();
        let err = init_state(&spec).unwrap_err();
        assert!(matches!(err, Error::InvalidParameter { name: "phi0", .. }), "{err}");
    }

    #[test]
    fn init_rejects_mesh_mismatch() {
        let m = mesh(9);
        let spec = spec_b(&m, Field::zeros(m.clone()), Field::zeros(mesh(11)));
        assert!(matches!(init_state(&spec), Err(Error::MeshMismatch(_))));
    }

    #[test]
    fn control_term_examples() {
        let m = mesh(17);
        let spec = spec_b(&m, Field::zeros(m.clone()), Field::zeros(m.clone()));
        let s = init_state(&spec).unwrap();
        assert_eq!(control_term(&s, &spec).linf_norm(), 0.0);

        // A with ‖θ + αφ − η*‖ = 2ε → unit norm
        let eps = 0.05;
        let theta0 = Field::constant(m.clone(), 2.0 * eps);
        let spec_a = ProblemSpec {
            variant: Variant::A {
                alpha: 1.0,
                eta_star: Field::zeros(m.clone()),
            },
            eps,
            theta0,
            ..spec.clone()
        };
        let s = init_state(&spec_a).unwrap();
        assert!((control_term(&s, &spec_a).l2_norm() - 1.0).abs() < 1e-14);

        let spec_c = ProblemSpec {
            variant: Variant::C {
                phi_star: Field::zeros(m.clone()),
            },
            phi0: Field::constant(m.clone(), -3.0 * spec.eps),
            ..spec
        };
        let s = init_state(&spec_c).unwrap();
        assert!(control_term(&s, &spec_c).values().iter().all(|&v| v == -1.0));
    }

    #[test]
    fn equilibrium_is_preserved() {
        let m = mesh(33);
        let spec = spec_b(&m, Field::zeros(m.clone()), Field::zeros(m.clone()));
        for mode in [Mode::Prox, Mode::Regularized] {
            let mut s = init_state(&spec).unwrap();
            for _ in 0..20 {
                s = step(&s, &spec, 1e-3, mode).unwrap();
            }
            assert!(s.theta.linf_norm() < 1e-12 && s.phi.linf_norm() < 1e-12);
        }
    }

    #[test]
    fn soft_threshold_annihilates_small_residual() {
        // Single node without diffusion coupling, φ − φ* = 0.3, ρ dt = 0.5.
        let m = mesh(3);
        let phi_star = Field::zeros(m.clone());
        let spec = ProblemSpec {
            params: PhysParams {
                ell: 1.0,
                kappa: 1e-300,
                nu: 1e-300,
                gamma: 1e-300,
            },
            variant: Variant::C { phi_star },
            rho: 500.0,
            eps: 1e-3,
            potential: Potential::obstacle(1e-300).unwrap(),
            source: Source::Zero,
            theta0: Field::zeros(m.clone()),
            phi0: Field::constant(m.clone(), 0.3),
            c0_heat: 1.0,
        };
        let s0 = init_state(&spec).unwrap();
        let s1 = step(&s0, &spec, 1e-3, Mode::Prox).unwrap();
        assert_eq!(s1.phi.linf_norm(), 0.0);
        assert!(s1.last_sigma.values().iter().all(|&v| (v - 0.6).abs() < 1e-9));
    }

    #[test]
    fn mass_conserved_in_one_step() {
        let m = mesh(65);
        let theta0 = Field::from_fn(m.clone(), |x| (std::f64::consts::PI * x[0]).cos() + 0.3);
        let phi0 = Field::from_fn(m.clone(), |x| 0.5 * (std::f64::consts::PI * x[0]).cos());
        let spec = spec_b(&m, theta0, phi0);
        for mode in [Mode::Prox, Mode::Regularized] {
            let s0 = init_state(&spec).unwrap();
            let s1 = step(&s0, &spec, 1e-3, mode).unwrap();
            let m0 = spec.mass(&s0.theta, &s0.phi);
            let m1 = spec.mass(&s1.theta, &s1.phi);
            assert!((m1 - m0).abs() <= 1e-10 * m0.abs());
        }
    }

    #[test]
    fn regularized_sigma_matches_control_term() {
        let m = mesh(33);
        let theta0 = Field::from_fn(m.clone(), |x| x[0]);
        let phi0 = Field::from_fn(m.clone(), |x| 0.4 * (3.0 * x[0]).sin());
        for variant in [
            Variant::A {
                alpha: 0.5,
                eta_star: Field::constant(m.clone(), 0.1),
            },
            Variant::B {
                phi_star: Field::constant(m.clone(), 0.2),
            },
            Variant::C {
                phi_star: Field::constant(m.clone(), 0.2),
            },
        ] {
            let spec = ProblemSpec {
                variant,
                ..spec_b(&m, theta0.clone(), phi0.clone())
            };
            let mut s = init_state(&spec).unwrap();
            for _ in 0..10 {
                let expected = control_term(&s, &spec);
                s = step(&s, &spec, 1e-3, Mode::Regularized).unwrap();
                assert_eq!(s.last_sigma, expected);
            }
        }
    }

    #[test]
    fn obstacle_prox_keeps_phase_in_box() {
        let m = mesh(33);
        let spec = ProblemSpec {
            variant: Variant::C {
                phi_star: Field::constant(m.clone(), 0.9),
            },
            potential: Potential::obstacle(3.0).unwrap(),
            rho: 1.0,
            theta0: Field::from_fn(m.clone(), |x| 5.0 * (4.0 * x[0]).cos()),
            phi0: Field::from_fn(m.clone(), |x| (4.0 * x[0]).cos()),
            ..spec_b(&m, Field::zeros(m.clone()), Field::zeros(m.clone()))
        };
        assert_eq!(spec.potential.kind, PotentialKind::Obstacle);
        let mut s = init_state(&spec).unwrap();
        for _ in 0..200 {
            s = step(&s, &spec, 5e-3, Mode::Prox).unwrap();
            assert!(s.phi.values().iter().all(|v| (-1.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn blow_up_is_reported() {
        let m = mesh(9);
        let spec = ProblemSpec {
            rho: 0.0,
            ..spec_b(&m, Field::zeros(m.clone()), Field::constant(m.clone(), 50.0))
        };
        let mut s = init_state(&spec).unwrap();
        let mut err = None;
        for _ in 0..1000 {
            match step(&s, &spec, 0.5, Mode::Regularized) {
                Ok(next) => s = next,
                Err(e) => {
                    err = Some(e);
                    break;
                }
            }
        }
        assert!(matches!(err, Some(Error::BlowUp { .. }) | Some(Error::LinearSolver { .. })), "{err:?}");
    }

    #[test]
    fn rejects_bad_dt() {
        let m = mesh(9);
        let spec = spec_b(&m, Field::zeros(m.clone()), Field::zeros(m.clone()));
        let s = init_state(&spec).unwrap();
        assert!(step(&s, &spec, 0.0, Mode::Prox).is_err());
    }
}
