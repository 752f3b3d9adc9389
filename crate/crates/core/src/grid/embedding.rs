//! Empirical lower estimate of the embedding constant
//! `C_Ω = sup ‖v‖_∞ / ‖v‖_W`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{laplacian_into, Mesh};

/// Result of [`estimate_embedding_constant`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingEstimate {
    pub value: f64,
    /// Ratio attained by constant fields, `|Ω|^{-1/2}`.
    pub constant_field_ratio: f64,
    pub samples: usize,
    pub seed: u64,
}

const HILL_CLIMB_STEPS: usize = 60;

fn modes_per_axis(mesh: &Mesh) -> usize {
    match mesh.dim() {
        1 => 12,
        2 => 6,
        _ => 4,
    }
}

struct CosineBasis {
    /// `tables[k][m][i] = cos(m π x_i / L_k)` along axis `k`.
    tables: Vec<Vec<Vec<f64>>>,
    /// Mode multi-indices.
    modes: Vec<[usize; 3]>,
}

impl CosineBasis {
    fn new(mesh: &Mesh) -> Self {
        let kmax = modes_per_axis(mesh);
        let tables: Vec<Vec<Vec<f64>>> = (0..mesh.dim())
            .map(|k| {
                let kk = kmax.min(mesh.counts()[k] - 1);
                (0..=kk)
                    .map(|m| {
                        (0..mesh.counts()[k])
                            .map(|i| {
                                let x = i as f64 * mesh.spacing()[k];
                                (m as f64 * std::f64::consts::PI * x / mesh.lengths()[k]).cos()
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let mut modes = vec![[0usize; 3]];
        for (k, table) in tables.iter().enumerate() {
            let mut next = Vec::new();
            for m in &modes {
                for j in 0..table.len() {
                    let mut mm = *m;
                    mm[k] = j;
                    next.push(mm);
                }
            }
            modes = next;
        }
        CosineBasis { tables, modes }
    }

    fn synthesize(&self, mesh: &Mesh, coeffs: &[f64], out: &mut [f64]) {
        for (idx, o) in out.iter_mut().enumerate() {
            let mi = mesh.multi_index(idx);
            *o = self
                .modes
                .iter()
                .zip(coeffs)
                .map(|(m, c)| {
                    let mut b = *c;
                    for (k, table) in self.tables.iter().enumerate() {
                        b *= table[m[k]][mi[k]];
                    }
                    b
                })
                .sum();
        }
    }
}

struct RatioEval<'a> {
    mesh: &'a Mesh,
    weights: Vec<f64>,
    basis: CosineBasis,
    values: Vec<f64>,
    lap: Vec<f64>,
    scale: f64,
}

impl RatioEval<'_> {
    fn ratio(&mut self, coeffs: &[f64]) -> f64 {
        self.basis.synthesize(self.mesh, coeffs, &mut self.values);
        laplacian_into(self.mesh, &self.values, &mut self.lap);
        let mut l2 = 0.0;
        let mut lap2 = 0.0;
        let mut sup: f64 = 0.0;
        for i in 0..self.values.len() {
            l2 += self.weights[i] * self.values[i] * self.values[i];
            lap2 += self.weights[i] * self.lap[i] * self.lap[i];
            sup = sup.max(self.values[i].abs());
        }
        let w = (l2 + self.scale * lap2).sqrt();
        if w > 0.0 {
            sup / w
        } else {
            0.0
        }
    }
}

/// Lower estimate of `C_Ω` on the discrete box: the best ratio
/// `‖v‖_∞/‖v‖_W` found over `samples` random band-limited cosine fields
/// (each compatible with the Neumann condition), each refined by a short
/// hill climb in coefficient space. Constant fields are always included,
/// so the result is at least `|Ω|^{-1/2}`. Deterministic for a given seed.
pub fn estimate_embedding_constant(mesh: &Mesh, samples: usize, seed: u64) -> EmbeddingEstimate {
    let measure = mesh.measure();
    let basis = CosineBasis::new(mesh);
    let nmodes = basis.modes.len();
    let mut eval = RatioEval {
        mesh,
        weights: mesh.weights(),
        basis,
        values: vec![0.0; mesh.len()],
        lap: vec![0.0; mesh.len()],
        scale: measure.powf(4.0 / 3.0),
    };
    let mut constant = vec![0.0; nmodes];
    constant[0] = 1.0;
    let constant_ratio = eval.ratio(&constant);
    let mut best = constant_ratio;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let decay: Vec<f64> = eval
        .basis
        .modes
        .iter()
        .map(|m| 1.0 / (1.0 + (m[0] * m[0] + m[1] * m[1] + m[2] * m[2]) as f64))
        .collect();
    for _ in 0..samples {
        let mut coeffs: Vec<f64> = decay.iter().map(|d| d * rng.gen_range(-1.0..1.0)).collect();
        let mut current = eval.ratio(&coeffs);
        let mut step = 0.5;
        for _ in 0..HILL_CLIMB_STEPS {
            let j = rng.gen_range(0..nmodes);
            let delta = step * decay[j] * rng.gen_range(-1.0..1.0);
            coeffs[j] += delta;
            let trial = eval.ratio(&coeffs);
            if trial > current {
                current = trial;
            } else {
                coeffs[j] -= delta;
                step *= 0.95;
            }
        }
        best = best.max(current);
    }
    EmbeddingEstimate {
        value: best,
        constant_field_ratio: constant_ratio,
        samples,
        seed,
    }
}
