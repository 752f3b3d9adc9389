//! Uniform node-centred grids on axis-aligned boxes.
//!
//! Nodes sit on the box boundary; discrete integrals use the tensor-product
//! trapezoid rule, and the Laplacian uses reflected ghost nodes for the
//! homogeneous Neumann condition. With these weights the Laplacian is
//! symmetric and negative semidefinite and its discrete integral vanishes.

mod embedding;
pub mod io;
mod solver;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use embedding::{estimate_embedding_constant, EmbeddingEstimate};
pub use solver::{solve_shifted, CG_MAX_ITER_FACTOR, CG_TOL};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mesh {
    lengths: Vec<f64>,
    counts: Vec<usize>,
    spacing: Vec<f64>,
}

impl Mesh {
    pub fn new(lengths: &[f64], counts: &[usize]) -> Result<Self> {
        let dim = lengths.len();
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidMesh(format!("dimension must be 1, 2 or 3, got {dim}")));
        }
        if counts.len() != dim {
            return Err(Error::InvalidMesh(format!(
                "{} node counts given for a {dim}-dimensional box",
                counts.len()
            )));
        }
        if let Some(l) = lengths.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
            return Err(Error::InvalidMesh(format!("side length must be positive, got {l}")));
        }
        if let Some(n) = counts.iter().find(|&&n| n < 3) {
            return Err(Error::InvalidMesh(format!("need at least 3 nodes per axis, got {n}")));
        }
        let spacing = lengths
            .iter()
            .zip(counts)
            .map(|(l, &n)| l / (n - 1) as f64)
            .collect();
        Ok(Mesh {
            lengths: lengths.to_vec(),
            counts: counts.to_vec(),
            spacing,
        })
    }

    pub fn uniform_1d(length: f64, nodes: usize) -> Result<Self> {
        Self::new(&[length], &[nodes])
    }

    pub fn dim(&self) -> usize {
        self.lengths.len()
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    /// `|Ω|`.
    pub fn measure(&self) -> f64 {
        self.lengths.iter().product()
    }

    /// Total node count.
    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Row-major strides (last axis fastest).
    pub fn strides(&self) -> Vec<usize> {
        let mut s = vec![1; self.dim()];
        for k in (0..self.dim().saturating_sub(1)).rev() {
            s[k] = s[k + 1] * self.counts[k + 1];
        }
        s
    }

    pub fn multi_index(&self, mut idx: usize) -> [usize; 3] {
        let mut out = [0; 3];
        for k in (0..self.dim()).rev() {
            out[k] = idx % self.counts[k];
            idx /= self.counts[k];
        }
        out
    }

    /// Coordinates of node `idx`; unused axes are zero.
    pub fn coords(&self, idx: usize) -> [f64; 3] {
        let m = self.multi_index(idx);
        let mut x = [0.0; 3];
        for k in 0..self.dim() {
            x[k] = m[k] as f64 * self.spacing[k];
        }
        x
    }

    /// Trapezoid quadrature weights (sum to `|Ω|`).
    pub fn weights(&self) -> Vec<f64> {
        (0..self.len())
            .map(|idx| {
                let m = self.multi_index(idx);
                (0..self.dim())
                    .map(|k| {
                        let edge = m[k] == 0 || m[k] == self.counts[k] - 1;
                        if edge {
                            0.5 * self.spacing[k]
                        } else {
                            self.spacing[k]
                        }
                    })
                    .product()
            })
            .collect()
    }
}

/// Nodal values on a mesh.
#[derive(Clone, Debug)]
pub struct Field {
    mesh: Arc<Mesh>,
    values: Vec<f64>,
    weights: Arc<Vec<f64>>,
}

impl PartialEq for Field {
    fn eq(&self, other: &Self) -> bool {
        self.same_mesh(other) && self.values == other.values
    }
}

impl Field {
    fn with_values(mesh: Arc<Mesh>, weights: Arc<Vec<f64>>, values: Vec<f64>) -> Self {
        Field {
            mesh,
            values,
            weights,
        }
    }

    pub fn zeros(mesh: Arc<Mesh>) -> Self {
        Self::constant(mesh, 0.0)
    }

    pub fn constant(mesh: Arc<Mesh>, c: f64) -> Self {
        let n = mesh.len();
        let weights = Arc::new(mesh.weights());
        Self::with_values(mesh, weights, vec![c; n])
    }

    pub fn from_values(mesh: Arc<Mesh>, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.len() {
            return Err(Error::MeshMismatch(format!(
                "{} values for a mesh with {} nodes",
                values.len(),
                mesh.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Format(format!("non-finite value at node {i}")));
        }
        let weights = Arc::new(mesh.weights());
        Ok(Self::with_values(mesh, weights, values))
    }

    /// Samples `f(x)` at every node; `x` always has three entries.
    pub fn from_fn(mesh: Arc<Mesh>, f: impl Fn(&[f64; 3]) -> f64) -> Self {
        let values = (0..mesh.len()).map(|i| f(&mesh.coords(i))).collect();
        let weights = Arc::new(mesh.weights());
        Self::with_values(mesh, weights, values)
    }

    /// A field on the same mesh with new values.
    pub fn like(&self, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), self.values.len());
        Self::with_values(self.mesh.clone(), self.weights.clone(), values)
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn mesh_arc(&self) -> Arc<Mesh> {
        self.mesh.clone()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn same_mesh(&self, other: &Field) -> bool {
        Arc::ptr_eq(&self.mesh, &other.mesh) || *self.mesh == *other.mesh
    }

    pub fn check_same_mesh(&self, other: &Field, what: &str) -> Result<()> {
        if self.same_mesh(other) {
            Ok(())
        } else {
            Err(Error::MeshMismatch(what.to_string()))
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        self.like(self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Field {
        assert!(self.same_mesh(other), "fields on different meshes");
        self.like(
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    pub fn scaled(&self, c: f64) -> Field {
        self.map(|v| c * v)
    }

    /// `self + c·other`.
    pub fn axpy(&self, c: f64, other: &Field) -> Field {
        self.zip_map(other, |a, b| a + c * b)
    }

    pub fn sub(&self, other: &Field) -> Field {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn add(&self, other: &Field) -> Field {
        self.zip_map(other, |a, b| a + b)
    }

    /// `∫_Ω v`.
    pub fn integral(&self) -> f64 {
        self.values.iter().zip(self.weights.iter()).map(|(v, w)| v * w).sum()
    }

    /// Weighted inner product `∫_Ω u v`.
    pub fn inner(&self, other: &Field) -> f64 {
        assert!(self.same_mesh(other), "fields on different meshes");
        self.values
            .iter()
            .zip(&other.values)
            .zip(self.weights.iter())
            .map(|((a, b), w)| a * b * w)
            .sum()
    }

    pub fn l2_norm(&self) -> f64 {
        self.inner(self).sqrt()
    }

    pub fn linf_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `∫_Ω |∇v|²` with forward differences on mesh edges.
    pub fn gradient_energy(&self) -> f64 {
        let mesh = &*self.mesh;
        let strides = mesh.strides();
        let mut total = 0.0;
        for k in 0..mesh.dim() {
            let h = mesh.spacing[k];
            for idx in 0..mesh.len() {
                let m = mesh.multi_index(idx);
                if m[k] + 1 == mesh.counts[k] {
                    continue;
                }
                // edge weight: h along axis k, trapezoid weight across the others
                let mut w = h;
                for j in 0..mesh.dim() {
                    if j != k {
                        let edge = m[j] == 0 || m[j] == mesh.counts[j] - 1;
                        w *= if edge { 0.5 * mesh.spacing[j] } else { mesh.spacing[j] };
                    }
                }
                let d = (self.values[idx + strides[k]] - self.values[idx]) / h;
                total += w * d * d;
            }
        }
        total
    }
}

/// Discrete Laplacian with homogeneous Neumann conditions (3/5/7-point stencil).
pub fn laplacian_neumann(v: &Field) -> Field {
    let mut out = vec![0.0; v.values.len()];
    laplacian_into(v.mesh(), &v.values, &mut out);
    v.like(out)
}

pub(crate) fn laplacian_into(mesh: &Mesh, v: &[f64], out: &mut [f64]) {
    let strides = mesh.strides();
    out.iter_mut().for_each(|o| *o = 0.0);
    for k in 0..mesh.dim() {
        let n = mesh.counts[k];
        let s = strides[k];
        let inv_h2 = 1.0 / (mesh.spacing[k] * mesh.spacing[k]);
        for (idx, o) in out.iter_mut().enumerate() {
            let i = (idx / s) % n;
            let c = v[idx];
            let minus = if i == 0 { v[idx + s] } else { v[idx - s] };
            let plus = if i == n - 1 { v[idx - s] } else { v[idx + s] };
            *o += (minus - 2.0 * c + plus) * inv_h2;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Norms {
    pub l2: f64,
    pub linf: f64,
    /// `(‖v‖² + ‖∇v‖²)^{1/2}`.
    pub h1: f64,
    /// `(‖v‖² + |Ω|^{4/3}‖Δv‖²)^{1/2}`.
    pub w: f64,
}

pub fn norms(v: &Field) -> Norms {
    let l2sq = v.inner(v);
    let lap = laplacian_neumann(v);
    let measure = v.mesh().measure();
    Norms {
        l2: l2sq.sqrt(),
        linf: v.linf_norm(),
        h1: (l2sq + v.gradient_energy()).sqrt(),
        w: (l2sq + measure.powf(4.0 / 3.0) * lap.inner(&lap)).sqrt(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_field(mesh: &Arc<Mesh>, rng: &mut ChaCha8Rng) -> Field {
        let vals = (0..mesh.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Field::from_values(mesh.clone(), vals).unwrap()
    }

    fn meshes() -> Vec<Arc<Mesh>> {
        vec![
            Arc::new(Mesh::new(&[1.3], &[17]).unwrap()),
            Arc::new(Mesh::new(&[1.0, 2.0], &[9, 7]).unwrap()),
            Arc::new(Mesh::new(&[0.5, 1.0, 0.7], &[5, 6, 4]).unwrap()),
        ]
    }

    #[test]
    fn mesh_validation() {
        assert!(Mesh::new(&[1.0], &[2]).is_err());
        assert!(Mesh::new(&[0.0], &[5]).is_err());
        assert!(Mesh::new(&[1.0, 1.0], &[5]).is_err());
        assert!(Mesh::new(&[1.0; 4], &[3; 4]).is_err());
        let m = Mesh::new(&[2.0, 3.0], &[5, 4]).unwrap();
        assert_eq!(m.len(), 20);
        assert_eq!(m.measure(), 6.0);
        for k in 0..2 {
            assert_relative_eq!(m.spacing()[k] * (m.counts()[k] - 1) as f64, m.lengths()[k]);
        }
        assert_relative_eq!(m.weights().iter().sum::<f64>(), 6.0, epsilon = 1e-14);
        assert_eq!(m.coords(19), [2.0, 3.0, 0.0]);
    }

    #[test]
    fn constant_fields_are_in_the_kernel() {
        for mesh in meshes() {
            let lap = laplacian_neumann(&Field::constant(mesh, 5.0));
            assert!(lap.linf_norm() < 1e-12);
        }
    }

    #[test]
    fn laplacian_integrates_to_zero_and_is_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for mesh in meshes() {
            for _ in 0..10 {
                let u = random_field(&mesh, &mut rng);
                let v = random_field(&mesh, &mut rng);
                let lu = laplacian_neumann(&u);
                let lv = laplacian_neumann(&v);
                let scale = lu.l2_norm() * v.l2_norm();
                assert!(lu.integral().abs() < 1e-12 * (1.0 + lu.linf_norm()));
                assert!((lu.inner(&v) - u.inner(&lv)).abs() < 1e-12 * scale);
                assert!(lu.inner(&u) <= 1e-12 * scale);
                // summation by parts: -<Δu,u> = ∫|∇u|²
                assert_relative_eq!(-lu.inner(&u), u.gradient_energy(), max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn cosine_eigenfunction_second_order() {
        let length = 2.0;
        let mut errs = Vec::new();
        for n in [17, 33, 65, 129] {
            let mesh = Arc::new(Mesh::uniform_1d(length, n).unwrap());
            let k = PI / length;
            let v = Field::from_fn(mesh, |x| (k * x[0]).cos());
            let lap = laplacian_neumann(&v);
            let err = lap.axpy(k * k, &v).linf_norm();
            errs.push(err);
        }
        for w in errs.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!(order > 1.95, "order {order}");
        }
    }

    #[test]
    fn norm_examples() {
        let mesh = Arc::new(Mesh::new(&[2.0], &[11]).unwrap());
        let one = Field::constant(mesh.clone(), 1.0);
        assert_relative_eq!(norms(&one).l2, 2f64.sqrt(), epsilon = 1e-14);
        let zero = norms(&Field::zeros(mesh.clone()));
        assert_eq!((zero.l2, zero.linf, zero.h1, zero.w), (0.0, 0.0, 0.0, 0.0));
        let c = norms(&Field::constant(mesh, -3.0));
        assert_relative_eq!(c.w, 3.0 * 2f64.sqrt(), epsilon = 1e-13);
        assert_relative_eq!(c.h1, c.l2, epsilon = 1e-14);
    }

    proptest! {
        #[test]
        fn l2_bounded_by_linf(seed in any::<u64>(), k in 0usize..3) {
            let mesh = meshes()[k].clone();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let v = random_field(&mesh, &mut rng);
            let n = norms(&v);
            prop_assert!(n.l2 <= mesh.measure().sqrt() * n.linf * (1.0 + 1e-14));
        }
    }
}
