use super::{laplacian_into, Field};
use crate::error::{Error, Result};

/// Relative residual tolerance of the conjugate-gradient solves.
pub const CG_TOL: f64 = 1e-10;
/// Iteration budget is this factor times the node count (at least 1000).
pub const CG_MAX_ITER_FACTOR: usize = 10;

fn winner(a: &[f64], b: &[f64], w: &[f64]) -> f64 {
    a.iter().zip(b).zip(w).map(|((x, y), w)| x * y * w).sum()
}

/// Solves `(I − cΔ) x = rhs` for `c ≥ 0` by conjugate gradients in the
/// trapezoid-weighted inner product, in which the operator is symmetric
/// positive definite. `guess` warm-starts the iteration.
///
/// The exact solution satisfies `∫x = ∫rhs`; the constant mode of the
/// iterate is corrected afterwards so that this holds to rounding.
pub fn solve_shifted(rhs: &Field, c: f64, guess: Option<&Field>) -> Result<Field> {
    if c == 0.0 {
        return Ok(rhs.clone());
    }
    let mesh = rhs.mesh();
    let w = rhs.weights();
    let n = mesh.len();
    let b = rhs.values();
    let b_norm = winner(b, b, w).sqrt();
    if b_norm == 0.0 {
        return Ok(rhs.scaled(0.0));
    }
    let apply = |x: &[f64], out: &mut [f64]| {
        laplacian_into(mesh, x, out);
        for (o, xi) in out.iter_mut().zip(x) {
            *o = xi - c * *o;
        }
    };

    let mut x: Vec<f64> = match guess {
        Some(g) if g.same_mesh(rhs) => g.values().to_vec(),
        _ => b.to_vec(),
    };
    let mut ax = vec![0.0; n];
    apply(&x, &mut ax);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let mut p = r.clone();
    let mut rr = winner(&r, &r, w);
    let target = (CG_TOL * b_norm).powi(2);
    let max_iter = (CG_MAX_ITER_FACTOR * n).max(1000);
    let mut ap = vec![0.0; n];
    let mut iterations = 0;
    while rr > target {
        if iterations == max_iter {
            return Err(Error::LinearSolver {
                iterations,
                residual: rr.sqrt() / b_norm,
            });
        }
        apply(&p, &mut ap);
        let alpha = rr / winner(&p, &ap, w);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = winner(&r, &r, w);
        let beta = rr_new / rr;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_new;
        iterations += 1;
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::LinearSolver {
            iterations,
            residual: f64::NAN,
        });
    }

    let measure = mesh.measure();
    let shift = (winner(b, &vec![1.0; n], w) - winner(&x, &vec![1.0; n], w)) / measure;
    x.iter_mut().for_each(|v| *v += shift);
    Ok(rhs.like(x))
}
