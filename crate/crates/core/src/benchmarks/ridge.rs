//! Ridge least squares over a sparse design, solved on the normal equations
//! by Jacobi-preconditioned conjugate gradient without forming `XᵀX`.

use crate::error::{Error, Result};

pub const CG_TOLERANCE: f64 = 1e-10;

/// Row-major sparse matrix.
#[derive(Debug, Clone, Default)]
pub struct SparseDesign {
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
    cols: usize,
}

impl SparseDesign {
    pub fn new(cols: usize) -> Self {
        Self {
            indptr: vec![0],
            indices: Vec::new(),
            values: Vec::new(),
            cols,
        }
    }

    /// Appends a row given as `(column, value)` entries.
    pub fn push_row<I: IntoIterator<Item = (usize, f64)>>(&mut self, entries: I) {
        for (c, v) in entries {
            debug_assert!(c < self.cols);
            self.indices.push(c);
            self.values.push(v);
        }
        self.indptr.push(self.indices.len());
    }

    pub fn rows(&self) -> usize {
        self.indptr.len() - 1
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.indptr[i]..self.indptr[i + 1];
        self.indices[r.clone()]
            .iter()
            .copied()
            .zip(self.values[r].iter().copied())
    }

    pub fn mul(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.row(i).map(|(c, v)| v * x[c]).sum();
        }
    }

    pub fn mul_transpose(&self, r: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for (i, &ri) in r.iter().enumerate() {
            for (c, v) in self.row(i) {
                out[c] += v * ri;
            }
        }
    }

    fn column_sq_norms(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.cols];
        for (&c, &v) in self.indices.iter().zip(&self.values) {
            d[c] += v * v;
        }
        d
    }
}

#[derive(Debug, Clone)]
pub struct RidgeSolution {
    pub coef: Vec<f64>,
    pub iterations: usize,
    pub relative_residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes `‖y − Xθ‖² + Σ_j penalty_j θ_j²`. Columns with zero penalty
/// are unpenalized; the penalized system must still be positive definite.
pub fn solve_ridge(x: &SparseDesign, y: &[f64], penalty: &[f64]) -> Result<RidgeSolution> {
    let p = x.cols();
    if y.len() != x.rows() || penalty.len() != p {
        return Err(Error::InvalidArgument("ridge: dimension mismatch".into()));
    }
    if penalty.iter().any(|&l| !(l >= 0.0)) {
        return Err(Error::InvalidArgument("ridge: penalties must be non-negative".into()));
    }
    let mut b = vec![0.0; p];
    x.mul_transpose(y, &mut b);
    let diag: Vec<f64> = x.column_sq_norms().iter().zip(penalty).map(|(d, l)| d + l).collect();
    if let Some(j) = diag.iter().position(|&d| d <= 0.0) {
        return Err(Error::Numerical(format!("ridge: column {j} is empty and unpenalized")));
    }

    let mut tmp = vec![0.0; x.rows()];
    let apply = |v: &[f64], out: &mut [f64], tmp: &mut [f64]| {
        x.mul(v, tmp);
        x.mul_transpose(tmp, out);
        for ((o, vi), l) in out.iter_mut().zip(v).zip(penalty) {
            *o += l * vi;
        }
    };

    let b_norm = dot(&b, &b).sqrt();
    let mut theta = vec![0.0; p];
    if b_norm == 0.0 {
        return Ok(RidgeSolution {
            coef: theta,
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let mut r = b.clone();
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(ri, d)| ri / d).collect();
    let mut dir = z.clone();
    let mut rz = dot(&r, &z);
    let mut ad = vec![0.0; p];
    let max_iter = 20 * p + 1000;
    let mut rel = 1.0;
    for it in 1..=max_iter {
        apply(&dir, &mut ad, &mut tmp);
        let denom = dot(&dir, &ad);
        if !(denom > 0.0) {
            return Err(Error::Numerical("ridge: system not positive definite".into()));
        }
        let alpha = rz / denom;
        for ((t, d), (ri, a)) in theta.iter_mut().zip(&dir).zip(r.iter_mut().zip(&ad)) {
            *t += alpha * d;
            *ri -= alpha * a;
        }
        rel = dot(&r, &r).sqrt() / b_norm;
        if rel <= CG_TOLERANCE {
            return Ok(RidgeSolution {
                coef: theta,
                iterations: it,
                relative_residual: rel,
            });
        }
        for ((zi, ri), d) in z.iter_mut().zip(&r).zip(&diag) {
            *zi = ri / d;
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for (d, zi) in dir.iter_mut().zip(&z) {
            *d = zi + beta * *d;
        }
    }
    Err(Error::Numerical(format!(
        "ridge: conjugate gradient did not converge (relative residual {rel:.2e})"
    )))
}
