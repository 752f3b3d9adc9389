#![allow(dead_code)]

use std::f64::consts::PI;
use std::sync::Arc;

use pfsmc_core::bounds::{bounds_report, BoundsInputs, BoundsReport};
use pfsmc_core::dynamics::{
    simulate, Mode, PhysParams, ProblemSpec, RunSettings, Source, Trajectory, Variant,
};
use pfsmc_core::grid::{estimate_embedding_constant, EmbeddingEstimate, Field, Mesh};
use pfsmc_core::operators::Potential;

pub const DESK_NODES: usize = 129;
pub const DESK_DT: f64 = 1e-3;
pub const DESK_T: f64 = 1.0;
pub const SAMPLE_EVERY: usize = 10;

pub fn mesh_1d(length: f64, nodes: usize) -> Arc<Mesh> {
    Arc::new(Mesh::uniform_1d(length, nodes).unwrap())
}

/// `θ₀ = cos(πx/L)`, `φ₀ = ½cos(πx/L)` on `[0, L]`.
pub fn cosine_data(mesh: &Arc<Mesh>) -> (Field, Field) {
    let l = mesh.lengths()[0];
    let theta0 = Field::from_fn(mesh.clone(), |x| (PI * x[0] / l).cos());
    let phi0 = Field::from_fn(mesh.clone(), |x| 0.5 * (PI * x[0] / l).cos());
    (theta0, phi0)
}

pub fn spec(mesh: &Arc<Mesh>, variant: Variant, rho: f64) -> ProblemSpec {
    let (theta0, phi0) = cosine_data(mesh);
    ProblemSpec {
        params: PhysParams::unit(),
        variant,
        rho,
        eps: 1e-3,
        potential: Potential::regular(),
        source: Source::Zero,
        theta0,
        phi0,
        c0_heat: 1.0,
    }
}

pub fn desk_b(rho: f64) -> ProblemSpec {
    let m = mesh_1d(1.0, DESK_NODES);
    spec(
        &m,
        Variant::B {
            phi_star: Field::zeros(m.clone()),
        },
        rho,
    )
}

pub fn desk_a(rho: f64) -> ProblemSpec {
    let m = mesh_1d(1.0, DESK_NODES);
    spec(
        &m,
        Variant::A {
            alpha: 1.0,
            eta_star: Field::constant(m.clone(), 0.2),
        },
        rho,
    )
}

pub fn settings(t_final: f64, dt: f64, snapshots: bool) -> RunSettings {
    RunSettings {
        t_final,
        dt,
        mode: Mode::Prox,
        sample_every: SAMPLE_EVERY,
        snapshots,
    }
}

pub fn desk_settings(snapshots: bool) -> RunSettings {
    settings(DESK_T, DESK_DT, snapshots)
}

pub fn embedding(spec: &ProblemSpec) -> EmbeddingEstimate {
    estimate_embedding_constant(&spec.mesh(), 32, 7)
}

/// Bounds for `spec` at its gain from a pilot run at `pilot_rho`.
pub fn report_from_pilot(
    spec: &ProblemSpec,
    pilot: &Trajectory,
    pilot_rho: f64,
    emb: EmbeddingEstimate,
    t_final: f64,
) -> BoundsReport {
    bounds_report(&BoundsInputs {
        spec,
        pilot,
        pilot_rho,
        embedding: emb,
        t_final,
    })
    .unwrap()
}

/// Runs the pilot at `pilot_rho` and returns `(pilot trajectory, ρ*)`.
pub fn pilot_threshold(
    mut spec: ProblemSpec,
    pilot_rho: f64,
    s: RunSettings,
    emb: EmbeddingEstimate,
) -> (Trajectory, f64) {
    spec.rho = pilot_rho;
    let pilot = simulate(
        &spec,
        &RunSettings {
            snapshots: true,
            ..s
        },
    )
    .unwrap();
    let rep = report_from_pilot(&spec, &pilot, pilot_rho, emb, s.t_final);
    let rho_star = rep.rho_star.expect("threshold available");
    (pilot, rho_star)
}
