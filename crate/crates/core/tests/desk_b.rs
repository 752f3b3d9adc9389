//! Properties of the Problem B desk run beyond the acceptance verdict.

mod common;

use common::*;
use pfsmc_core::bounds::ConstantKind;
use pfsmc_core::dynamics::{simulate, ProblemSpec};
use pfsmc_core::extinction::{check_slope, verify_sliding, VerdictStatus, VerifyOptions};
use pfsmc_core::grid::Field;

/// `C_B` of the desk pilot at `ρ = 1`, measured once and pinned.
const C_B_BASELINE: f64 = 1.0607;

#[test]
fn pilot_constant_matches_baseline() {
    let base = desk_b(1.0);
    let (pilot, rho_star) =
        pilot_threshold(base.clone(), 1.0, desk_settings(false), embedding(&base));
    let rep = report_from_pilot(&base, &pilot, 1.0, embedding(&base), DESK_T);
    let c_b = rep.constant(ConstantKind::CB).unwrap();
    assert!(c_b > 0.0);
    assert!((c_b / C_B_BASELINE - 1.0).abs() < 0.05, "C_B = {c_b}");
    assert_eq!(rho_star, rep.rho_star.unwrap());
}

#[test]
fn large_gain_run_meets_the_slope_bound() {
    let base = desk_b(1.0);
    let emb = embedding(&base);
    let (pilot, rho_star) = pilot_threshold(base.clone(), 1.0, desk_settings(false), emb);
    let spec = ProblemSpec {
        rho: 8.0 * rho_star,
        ..base
    };
    let rep = report_from_pilot(&spec, &pilot, 1.0, emb, DESK_T);
    let c_b = rep.constant(ConstantKind::CB).unwrap();
    let s0 = 0.5 * spec.rho - c_b;
    assert!(s0 > 0.0);
    let traj = simulate(&spec, &desk_settings(false)).unwrap();
    let series = traj.psi_series();
    assert!(check_slope(&series, s0, 0.1 * s0, 1e-9));
    let v = verify_sliding(&traj, &spec, &rep, &VerifyOptions::default()).unwrap();
    assert!(v.slope_bound_ok);
    assert_eq!(v.status, VerdictStatus::Pass);
}

#[test]
fn psi_is_nonincreasing_at_twice_threshold() {
    let base = desk_b(1.0);
    let emb = embedding(&base);
    let (_, rho_star) = pilot_threshold(base.clone(), 1.0, desk_settings(false), emb);
    let spec = ProblemSpec {
        rho: 2.0 * rho_star,
        ..base
    };
    let series = simulate(&spec, &desk_settings(false)).unwrap().psi_series();
    for w in series.windows(2) {
        assert!(w[1].1 <= w[0].1, "{w:?}");
    }
}

#[test]
fn on_manifold_data_extinguishes_at_time_zero() {
    let base = desk_b(1.0);
    let m = base.mesh();
    let spec = ProblemSpec {
        phi0: Field::zeros(m.clone()),
        theta0: Field::zeros(m),
        rho: 3.0,
        ..base
    };
    let emb = embedding(&spec);
    let s = settings(0.2, DESK_DT, false);
    let pilot = simulate(
        &spec,
        &pfsmc_core::dynamics::RunSettings {
            snapshots: true,
            ..s
        },
    )
    .unwrap();
    let rep = report_from_pilot(&spec, &pilot, 3.0, emb, s.t_final);
    assert_eq!(rep.t_star_pred, Some(0.0));
    let v = verify_sliding(&pilot, &spec, &rep, &VerifyOptions::default()).unwrap();
    assert_eq!(v.t_star_emp, Some(0.0));
    assert_eq!(v.status, VerdictStatus::Pass);
}
