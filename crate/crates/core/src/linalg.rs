//! Linearised operators used by the Newton iteration.
//!
//! Every operator `J` here answers one question: solve `(I - alpha J) x = b`.
//! That is all an implicit midpoint step needs from a Jacobian.

use nalgebra::{DMatrix, DVector, Matrix2, Matrix4, Vector2, Vector4};

use crate::scalar::Real;

/// A Jacobian-like operator that can be shifted and inverted.
pub trait ShiftedSolve<T: Real> {
    /// Dimension of the (square) operator.
    fn dim(&self) -> usize;

    /// Solves `(I - alpha * self) x = b`; `None` if the shifted matrix is singular.
    fn solve_shifted(&self, alpha: T, b: &DVector<T>) -> Option<DVector<T>>;

    fn to_dense(&self) -> DMatrix<T>;
}

impl<T: Real> ShiftedSolve<T> for DMatrix<T> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn solve_shifted(&self, alpha: T, b: &DVector<T>) -> Option<DVector<T>> {
        let n = self.nrows();
        let mut m = self * (-alpha);
        for i in 0..n {
            m[(i, i)] += T::one();
        }
        m.lu().solve(b)
    }

    fn to_dense(&self) -> DMatrix<T> {
        self.clone()
    }
}

/// Periodic block-tridiagonal matrix with 2x2 blocks, acting on vectors
/// stored as `[p; q]` with site `i` owning unknowns `(p_i, q_i)`.
///
/// Block row `i` reads `lower[i] x_{i-1} + diag[i] x_i + upper[i] x_{i+1}`
/// with indices taken modulo the number of sites.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicBlockTridiagonal<T: Real> {
    pub lower: Vec<Matrix2<T>>,
    pub diag: Vec<Matrix2<T>>,
    pub upper: Vec<Matrix2<T>>,
}

impl<T: Real> PeriodicBlockTridiagonal<T> {
    pub fn zeros(n_sites: usize) -> Self {
        Self {
            lower: vec![Matrix2::zeros(); n_sites],
            diag: vec![Matrix2::zeros(); n_sites],
            upper: vec![Matrix2::zeros(); n_sites],
        }
    }

    pub fn n_sites(&self) -> usize {
        self.diag.len()
    }

    fn site(z: &DVector<T>, n: usize, i: usize) -> Vector2<T> {
        Vector2::new(z[i], z[n + i])
    }

    pub fn apply(&self, z: &DVector<T>) -> DVector<T> {
        let n = self.n_sites();
        let mut out = DVector::zeros(2 * n);
        for i in 0..n {
            let prev = (i + n - 1) % n;
            let next = (i + 1) % n;
            let y = self.lower[i] * Self::site(z, n, prev)
                + self.diag[i] * Self::site(z, n, i)
                + self.upper[i] * Self::site(z, n, next);
            out[i] = y[0];
            out[n + i] = y[1];
        }
        out
    }

    /// Shifted blocks `(I - alpha J)`.
    fn shifted(&self, alpha: T) -> Self {
        let id = Matrix2::identity();
        Self {
            lower: self.lower.iter().map(|b| b * (-alpha)).collect(),
            diag: self.diag.iter().map(|b| id - b * alpha).collect(),
            upper: self.upper.iter().map(|b| b * (-alpha)).collect(),
        }
    }

    /// Block Thomas factorisation of the non-periodic part followed by a
    /// rank-4 Woodbury correction for the two corner blocks.
    fn solve(&self, b: &DVector<T>) -> Option<DVector<T>> {
        let n = self.n_sites();
        if n < 3 {
            return self.to_dense().lu().solve(b);
        }
        let mut inv_pivot = Vec::with_capacity(n);
        let mut c_prime = Vec::with_capacity(n);
        let mut pivot = self.diag[0];
        for i in 0..n {
            if i > 0 {
                pivot = self.diag[i] - self.lower[i] * c_prime[i - 1];
            }
            let inv = invert2(&pivot)?;
            c_prime.push(inv * self.upper[i]);
            inv_pivot.push(inv);
        }
        let thomas = |rhs: &[Vector2<T>]| -> Vec<Vector2<T>> {
            let mut y = Vec::with_capacity(n);
            y.push(inv_pivot[0] * rhs[0]);
            for i in 1..n {
                let v = inv_pivot[i] * (rhs[i] - self.lower[i] * y[i - 1]);
                y.push(v);
            }
            for i in (0..n - 1).rev() {
                y[i] = y[i] - c_prime[i] * y[i + 1];
            }
            y
        };

        let f: Vec<Vector2<T>> = (0..n).map(|i| Self::site(b, n, i)).collect();
        let y = thomas(&f);

        // Columns of the corner factor U: two from lower[0] in block row 0,
        // two from upper[n-1] in block row n-1.
        let mut z_cols: Vec<Vec<Vector2<T>>> = Vec::with_capacity(4);
        for c in 0..4 {
            let mut col = vec![Vector2::zeros(); n];
            if c < 2 {
                col[0] = self.lower[0].column(c).into_owned();
            } else {
                col[n - 1] = self.upper[n - 1].column(c - 2).into_owned();
            }
            z_cols.push(thomas(&col));
        }
        // V^T x = (x_{n-1}; x_0)
        let vt = |x: &[Vector2<T>]| Vector4::new(x[n - 1][0], x[n - 1][1], x[0][0], x[0][1]);
        let mut small = Matrix4::<T>::identity();
        for c in 0..4 {
            let v = vt(&z_cols[c]);
            for r in 0..4 {
                small[(r, c)] += v[r];
            }
        }
        let w = small.lu().solve(&vt(&y))?;
        let mut out = DVector::zeros(2 * n);
        for i in 0..n {
            let mut xi = y[i];
            for c in 0..4 {
                xi -= z_cols[c][i] * w[c];
            }
            out[i] = xi[0];
            out[n + i] = xi[1];
        }
        Some(out)
    }
}

fn invert2<T: Real>(m: &Matrix2<T>) -> Option<Matrix2<T>> {
    let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    let scale = m.abs().max();
    if det.abs() <= T::machine_eps() * scale * scale || !det.is_finite() {
        return None;
    }
    Some(Matrix2::new(m[(1, 1)], -m[(0, 1)], -m[(1, 0)], m[(0, 0)]) / det)
}

impl<T: Real> ShiftedSolve<T> for PeriodicBlockTridiagonal<T> {
    fn dim(&self) -> usize {
        2 * self.n_sites()
    }

    fn solve_shifted(&self, alpha: T, b: &DVector<T>) -> Option<DVector<T>> {
        self.shifted(alpha).solve(b)
    }

    fn to_dense(&self) -> DMatrix<T> {
        let n = self.n_sites();
        let mut m = DMatrix::zeros(2 * n, 2 * n);
        for i in 0..n {
            let prev = (i + n - 1) % n;
            let next = (i + 1) % n;
            for (j, block) in [(prev, &self.lower[i]), (i, &self.diag[i]), (next, &self.upper[i])] {
                for r in 0..2 {
                    for c in 0..2 {
                        m[(r * n + i, c * n + j)] += block[(r, c)];
                    }
                }
            }
        }
        m
    }
}
