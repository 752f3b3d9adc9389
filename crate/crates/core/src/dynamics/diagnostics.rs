use super::{ProblemSpec, State, Trajectory};

/// Total free energy
/// `∫ −(c₀/2)θ² − γθφ + F(φ) + (ν/2)|∇φ|²` with `F = β̂ + π̂`.
/// Returns `+∞` when some node of `φ` lies outside `D(β̂)`.
pub fn free_energy(state: &State, spec: &ProblemSpec, c0_heat: f64) -> f64 {
    let pot = &spec.potential;
    let gamma = spec.params.gamma;
    if state.phi.values().iter().any(|&r| !pot.in_energy_domain(r)) {
        return f64::INFINITY;
    }
    let w = state.phi.weights();
    let bulk: f64 = state
        .theta
        .values()
        .iter()
        .zip(state.phi.values())
        .zip(w)
        .map(|((&th, &ph), &w)| w * (-0.5 * c0_heat * th * th - gamma * th * ph + pot.energy_density(ph)))
        .sum();
    bulk + 0.5 * spec.params.nu * state.phi.gradient_energy()
}

/// Largest per-interval balance-law residual
/// `|Δ∫(θ+ℓφ)/Δt − ∫f + ρ∫σ| / |Ω|` recorded in the trajectory
/// (the `ρσ` term only for variant A).
pub fn balance_residual(traj: &Trajectory) -> f64 {
    traj.samples
        .iter()
        .skip(1)
        .map(|s| s.balance_residual)
        .fold(0.0, f64::max)
}
