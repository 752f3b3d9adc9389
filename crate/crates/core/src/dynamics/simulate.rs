use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{free_energy, init_state, step, Mode, ProblemSpec, State, Variant};
use crate::error::{invalid, Error, Result};
use crate::grid::Field;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    pub t_final: f64,
    pub dt: f64,
    pub mode: Mode,
    pub sample_every: usize,
    /// Keep full fields at every sample.
    pub snapshots: bool,
}

impl RunSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_final.is_finite() && self.t_final > 0.0) {
            return Err(invalid("t_final", format!("must be positive, got {}", self.t_final)));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(invalid("dt", format!("must be positive, got {}", self.dt)));
        }
        if self.sample_every == 0 {
            return Err(invalid("sample_every", "must be at least 1"));
        }
        Ok(())
    }

    /// Number of steps, `⌈T/dt⌉`.
    pub fn steps(&self) -> usize {
        let n = self.t_final / self.dt;
        // guard against T/dt landing a hair above an integer
        let r = n.round();
        if (n - r).abs() <= 1e-9 * r.max(1.0) {
            r.max(1.0) as usize
        } else {
            n.ceil() as usize
        }
    }
}

/// Scalar diagnostics recorded at a sample time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    /// Distance to the sliding manifold in `L²(Ω)`.
    pub psi: f64,
    /// `∫(θ + ℓφ)`.
    pub mass: f64,
    pub energy: f64,
    /// Balance-law residual over the interval ending at this sample (0 at `t = 0`).
    pub balance_residual: f64,
    pub theta_linf: f64,
    pub phi_linf: f64,
}

/// Full fields at a sample time.
#[derive(Clone, Debug)]
pub struct Snapshot {
    pub t: f64,
    pub theta: Field,
    pub phi: Field,
    /// Backward difference of `φ` over the step ending here (the first
    /// step's difference at `t = 0`).
    pub dphi_dt: Field,
    pub sigma: Field,
    pub xi: Field,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub snapshots: Vec<Snapshot>,
    /// Cumulative `∫₀ᵗ∫_Ω f` at each sample, as applied by the integrator.
    pub source_integral: Vec<f64>,
    /// Cumulative `∫₀ᵗ∫_Ω ρσ` at each sample (variant A only, else zero).
    pub control_integral: Vec<f64>,
    pub measure: f64,
    pub settings: RunSettings,
    pub variant: &'static str,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    /// `(t, ψ)` pairs.
    pub fn psi_series(&self) -> Vec<(f64, f64)> {
        self.samples.iter().map(|s| (s.t, s.psi)).collect()
    }

    pub fn final_sample(&self) -> &Sample {
        self.samples.last().expect("trajectory has at least two samples")
    }
}

fn record(spec: &ProblemSpec, state: &State) -> Sample {
    Sample {
        t: state.t,
        psi: spec.manifold_distance(&state.theta, &state.phi),
        mass: spec.mass(&state.theta, &state.phi),
        energy: free_energy(state, spec, spec.c0_heat),
        balance_residual: 0.0,
        theta_linf: state.theta.linf_norm(),
        phi_linf: state.phi.linf_norm(),
    }
}

/// Runs `⌈T/dt⌉` steps (the last one shortened to land on `T`), sampling at
/// `t = 0`, every `sample_every` steps, and at `T`.
pub fn simulate(spec: &ProblemSpec, settings: &RunSettings) -> Result<Trajectory> {
    settings.validate()?;
    let mut state = init_state(spec)?;
    let mesh = spec.mesh();
    let steps = settings.steps();
    let measure = mesh.measure();

    let mut traj = Trajectory {
        samples: vec![record(spec, &state)],
        snapshots: Vec::new(),
        source_integral: vec![0.0],
        control_integral: vec![0.0],
        measure,
        settings: *settings,
        variant: spec.variant.label(),
    };
    if settings.snapshots {
        let zeros = Field::zeros(mesh.clone());
        traj.snapshots.push(Snapshot {
            t: 0.0,
            theta: state.theta.clone(),
            phi: state.phi.clone(),
            dphi_dt: zeros.clone(),
            sigma: zeros.clone(),
            xi: zeros,
        });
    }

    let mut source_acc = 0.0;
    let mut control_acc = 0.0;
    let mut last_sample_mass = traj.samples[0].mass;
    let mut last_sample_t = 0.0;
    let mut last_source = 0.0;
    let mut last_control = 0.0;

    for n in 1..=steps {
        let t_target = if n == steps {
            settings.t_final
        } else {
            n as f64 * settings.dt
        };
        let dt = t_target - state.t;
        let prev_phi = state.phi.clone();
        let next = step(&state, spec, dt, settings.mode).map_err(|e| Error::StepFailed {
            t: state.t,
            source: Box::new(e),
        })?;
        state = State { t: t_target, ..next };

        if !spec.source.is_zero() {
            source_acc += dt * spec.source.at(t_target, &mesh).integral();
        }
        if let Variant::A { .. } = spec.variant {
            control_acc += dt * spec.rho * state.last_sigma.integral();
        }

        if n == 1 && settings.snapshots {
            traj.snapshots[0].dphi_dt = state.phi.sub(&prev_phi).scaled(1.0 / dt);
        }

        if n % settings.sample_every == 0 || n == steps {
            let mut sample = record(spec, &state);
            let span = state.t - last_sample_t;
            sample.balance_residual = ((sample.mass - last_sample_mass)
                - (source_acc - last_source)
                + (control_acc - last_control))
                .abs()
                / (span * measure);
            last_sample_mass = sample.mass;
            last_sample_t = state.t;
            last_source = source_acc;
            last_control = control_acc;
            traj.samples.push(sample);
            traj.source_integral.push(source_acc);
            traj.control_integral.push(control_acc);
            if settings.snapshots {
                traj.snapshots.push(Snapshot {
                    t: state.t,
                    theta: state.theta.clone(),
                    phi: state.phi.clone(),
                    dphi_dt: state.phi.sub(&prev_phi).scaled(1.0 / dt),
                    sigma: state.last_sigma.clone(),
                    xi: state.last_xi.clone(),
                });
            }
        }
    }
    Ok(traj)
}

pub const TRAJECTORY_CSV_HEADER: &str = "t,psi,mass,energy,balance_residual,theta_linf,phi_linf";

/// Writes the trajectory table with shortest round-trip float formatting.
pub fn write_trajectory_csv<W: Write>(traj: &Trajectory, mut out: W) -> Result<()> {
    writeln!(out, "{TRAJECTORY_CSV_HEADER}")?;
    for s in &traj.samples {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            s.t, s.psi, s.mass, s.energy, s.balance_residual, s.theta_linf, s.phi_linf
        )?;
    }
    Ok(())
}

/// Parses a table written by [`write_trajectory_csv`].
pub fn read_trajectory_csv<R: std::io::BufRead>(input: R) -> Result<Vec<Sample>> {
    let mut lines = input.lines();
    let header = lines.next().ok_or_else(|| Error::Format("empty trajectory".into()))??;
    if header.trim() != TRAJECTORY_CSV_HEADER {
        return Err(Error::Format(format!("unexpected trajectory header `{header}`")));
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let v = line
            .split(',')
            .map(|c| c.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Format(format!("trajectory row {}: {e}", i + 1)))?;
        if v.len() != 7 {
            return Err(Error::Format(format!("trajectory row {}: expected 7 columns", i + 1)));
        }
        out.push(Sample {
            t: v[0],
            psi: v[1],
            mass: v[2],
            energy: v[3],
            balance_residual: v[4],
            theta_linf: v[5],
            phi_linf: v[6],
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{PhysParams, Source};
    use crate::grid::Mesh;
    use crate::operators::Potential;
    use std::sync::Arc;

    fn zero_spec() -> ProblemSpec {
        let m = Arc::new(Mesh::uniform_1d(1.0, 17).unwrap());
        ProblemSpec {
            params: PhysParams::unit(),
            variant: Variant::B {
                phi_star: Field::zeros(m.clone()),
            },
            rho: 1.0,
            eps: 1e-2,
            potential: Potential::regular(),
            source: Source::Zero,
            theta0: Field::zeros(m.clone()),
            phi0: Field::zeros(m),
            c0_heat: 1.0,
        }
    }

    #[test]
    fn single_step_gives_two_samples() {
        let settings = RunSettings {
            t_final: 0.01,
            dt: 0.01,
            mode: Mode::Prox,
            sample_every: 10,
            snapshots: true,
        };
        let traj = simulate(&zero_spec(), &settings).unwrap();
        assert_eq!(traj.times(), vec![0.0, 0.01]);
        assert_eq!(traj.snapshots.len(), 2);
    }

    #[test]
    fn zero_data_gives_zero_trajectory() {
        let settings = RunSettings {
            t_final: 0.1,
            dt: 1e-3,
            mode: Mode::Regularized,
            sample_every: 7,
            snapshots: false,
        };
        let traj = simulate(&zero_spec(), &settings).unwrap();
        assert_eq!(traj.samples.len(), 1 + 100 / 7 + 1);
        for s in &traj.samples {
            assert_eq!((s.psi, s.mass, s.theta_linf, s.phi_linf), (0.0, 0.0, 0.0, 0.0));
            // F(0) = 1/4 on |Ω| = 1
            assert!((s.energy - 0.25).abs() < 1e-14);
        }
        let times = traj.times();
        assert!(times.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(*times.last().unwrap(), 0.1);
    }

    #[test]
    fn uneven_final_step_lands_on_t_final() {
        let settings = RunSettings {
            t_final: 0.025,
            dt: 0.01,
            mode: Mode::Prox,
            sample_every: 1,
            snapshots: false,
        };
        assert_eq!(settings.steps(), 3);
        let traj = simulate(&zero_spec(), &settings).unwrap();
        assert_eq!(traj.times(), vec![0.0, 0.01, 0.02, 0.025]);
    }

    #[test]
    fn csv_round_trip() {
        let settings = RunSettings {
            t_final: 0.05,
            dt: 1e-2,
            mode: Mode::Prox,
            sample_every: 2,
            snapshots: false,
        };
        let mut spec = zero_spec();
        spec.phi0 = Field::from_fn(spec.mesh(), |x| 0.3 * x[0]);
        let traj = simulate(&spec, &settings).unwrap();
        let mut buf = Vec::new();
        write_trajectory_csv(&traj, &mut buf).unwrap();
        let back = read_trajectory_csv(&buf[..]).unwrap();
        assert_eq!(back, traj.samples);
    }
}
