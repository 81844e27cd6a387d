//! Dense least squares through orthogonal decompositions.
//!
//! Rows are folded into an upper-triangular factor with Householder
//! reflections as they arrive, so tall systems never have to be held in
//! memory. The triangular factor is column-equilibrated and decomposed with a
//! one-sided Jacobi SVD, which yields the singular spectrum (condition
//! estimate, numerical null space) and the minimum-norm solution.

use crate::scalar::Real;

const FOLD_ROWS: usize = 256;

/// Streaming accumulator for `min ‖A x − b‖₂`.
#[derive(Debug, Clone)]
pub struct LeastSquares<T> {
    cols: usize,
    /// Upper-triangular factor, row-major `cols × cols`.
    r: Vec<T>,
    qtb: Vec<T>,
    residual_sq: T,
    rows_seen: usize,
    pending: Vec<T>,
    pending_rhs: Vec<T>,
}

/// Minimum-norm solution together with the spectrum of the equilibrated
/// system.
#[derive(Debug, Clone)]
pub struct LsqSolution<T> {
    pub x: Vec<T>,
    /// Singular values of the column-equilibrated design matrix, descending.
    pub singular_values: Vec<T>,
    /// `σ_max / σ_min` of the equilibrated matrix (infinite when singular).
    pub condition: T,
    /// Directions in the original coordinates along which the system is
    /// numerically singular, each of unit norm.
    pub null_space: Vec<Vec<T>>,
}

impl<T: Real> LeastSquares<T> {
    pub fn new(cols: usize) -> Self {
        assert!(cols > 0, "least squares needs at least one unknown");
        Self {
            cols,
            r: vec![T::zero(); cols * cols],
            qtb: vec![T::zero(); cols],
            residual_sq: T::zero(),
            rows_seen: 0,
            pending: Vec::with_capacity(FOLD_ROWS * cols),
            pending_rhs: Vec::with_capacity(FOLD_ROWS),
        }
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn rows(&self) -> usize {
        self.rows_seen
    }

    pub fn push_row(&mut self, row: &[T], rhs: T) {
        assert_eq!(row.len(), self.cols, "row length must match unknown count");
        self.pending.extend_from_slice(row);
        self.pending_rhs.push(rhs);
        self.rows_seen += 1;
        if self.pending_rhs.len() >= FOLD_ROWS {
            self.fold();
        }
    }

    /// Applies Householder reflections to `[R; pending]` and keeps the new
    /// triangular factor.
    fn fold(&mut self) {
        let k = self.pending_rhs.len();
        if k == 0 {
            return;
        }
        let n = self.cols;
        let total = n + k;
        let mut a = Vec::with_capacity(total * n);
        a.extend_from_slice(&self.r);
        a.append(&mut self.pending);
        let mut b = Vec::with_capacity(total);
        b.extend_from_slice(&self.qtb);
        b.append(&mut self.pending_rhs);

        for j in 0..n {
            // rows j.. of column j; rows above the diagonal of R below row j are
            // zero except the appended block, but a full pass keeps this simple
            let mut norm_sq = T::zero();
            for i in j..total {
                let x = a[i * n + j];
                norm_sq = norm_sq + x * x;
            }
            if norm_sq == T::zero() {
                continue;
            }
            let norm = norm_sq.sqrt();
            let ajj = a[j * n + j];
            let alpha = if ajj > T::zero() { -norm } else { norm };
            // v = x − alpha e1, stored in column j rows j..
            let v0 = ajj - alpha;
            let vnorm_sq = norm_sq - ajj * ajj + v0 * v0;
            if vnorm_sq == T::zero() {
                continue;
            }
            a[j * n + j] = v0;
            let two = T::lit(2.0);
            for c in (j + 1)..n {
                let mut dot = T::zero();
                for i in j..total {
                    dot = dot + a[i * n + j] * a[i * n + c];
                }
                let f = two * dot / vnorm_sq;
                if f != T::zero() {
                    for i in j..total {
                        a[i * n + c] = a[i * n + c] - f * a[i * n + j];
                    }
                }
            }
            let mut dot = T::zero();
            for i in j..total {
                dot = dot + a[i * n + j] * b[i];
            }
            let f = two * dot / vnorm_sq;
            for i in j..total {
                b[i] = b[i] - f * a[i * n + j];
            }
            a[j * n + j] = alpha;
            for i in (j + 1)..total {
                a[i * n + j] = T::zero();
            }
        }

        self.r.copy_from_slice(&a[..n * n]);
        for row in 1..n {
            for c in 0..row {
                self.r[row * n + c] = T::zero();
            }
        }
        self.qtb.copy_from_slice(&b[..n]);
        for &tail in &b[n..] {
            self.residual_sq = self.residual_sq + tail * tail;
        }
        self.pending = Vec::with_capacity(FOLD_ROWS * n);
        self.pending_rhs = Vec::with_capacity(FOLD_ROWS);
    }

    /// Solves the accumulated system.
    ///
    /// Singular values below `σ_max / condition_limit` are treated as zero;
    /// their right singular vectors are reported as the null space and left
    /// out of the minimum-norm solution.
    pub fn solve(&mut self, condition_limit: T) -> LsqSolution<T> {
        self.fold();
        let n = self.cols;

        // column norms of A equal those of R
        let scales: Vec<T> = (0..n)
            .map(|c| {
                let norm = (0..n).map(|r| self.r[r * n + c].powi(2)).fold(T::zero(), |s, x| s + x).sqrt();
                if norm > T::zero() {
                    T::one() / norm
                } else {
                    T::one()
                }
            })
            .collect();

        // W = R S stored column-major for the Jacobi sweeps
        let mut w: Vec<Vec<T>> = (0..n)
            .map(|c| (0..n).map(|r| self.r[r * n + c] * scales[c]).collect())
            .collect();
        let mut v: Vec<Vec<T>> = (0..n)
            .map(|c| (0..n).map(|r| if r == c { T::one() } else { T::zero() }).collect())
            .collect();
        jacobi_orthogonalize(&mut w, &mut v);

        let mut order: Vec<(T, usize)> = w.iter().enumerate().map(|(i, col)| (norm(col), i)).collect();
        order.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal));
        let sigma_max = order[0].0;
        let sigma_min = order[n - 1].0;
        let condition = if sigma_min > T::zero() {
            sigma_max / sigma_min
        } else {
            T::infinity()
        };
        let cut = sigma_max / condition_limit;

        let mut y = vec![T::zero(); n];
        let mut null_space = Vec::new();
        for &(sigma, i) in &order {
            if sigma > cut && sigma > T::zero() {
                // coefficient u_iᵀ b / σ_i with u_i = w_i / σ_i
                let coeff = dot(&w[i], &self.qtb) / (sigma * sigma);
                for (yk, &vk) in y.iter_mut().zip(&v[i]) {
                    *yk = *yk + coeff * vk;
                }
            } else {
                let mut dir: Vec<T> = v[i].iter().zip(&scales).map(|(&vk, &s)| vk * s).collect();
                let len = norm(&dir);
                if len > T::zero() {
                    dir.iter_mut().for_each(|d| *d = *d / len);
                }
                null_space.push(dir);
            }
        }
        let x = y.iter().zip(&scales).map(|(&yk, &s)| yk * s).collect();

        LsqSolution {
            x,
            singular_values: order.iter().map(|&(s, _)| s).collect(),
            condition,
            null_space,
        }
    }

    /// Sum of squared residuals not representable by the triangular factor,
    /// i.e. `‖b‖² − ‖Qᵀb‖²` over the rows folded so far.
    pub fn orthogonal_residual(&self) -> T {
        self.residual_sq
    }
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |s, (&x, &y)| s + x * y)
}

fn norm<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

/// One-sided Jacobi: rotates column pairs of `w` until mutually orthogonal,
/// accumulating the rotations into `v`.
fn jacobi_orthogonalize<T: Real>(w: &mut [Vec<T>], v: &mut [Vec<T>]) {
    let n = w.len();
    let eps = T::epsilon();
    for _sweep in 0..80 {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let alpha = dot(&w[p], &w[p]);
                let beta = dot(&w[q], &w[q]);
                let gamma = dot(&w[p], &w[q]);
                if gamma == T::zero() || gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (T::lit(2.0) * gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                rotate(w, p, q, c, s);
                rotate(v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }
}

fn rotate<T: Real>(cols: &mut [Vec<T>], p: usize, q: usize, c: T, s: T) {
    let (left, right) = cols.split_at_mut(q);
    let (cp, cq) = (&mut left[p], &mut right[0]);
    for (a, b) in cp.iter_mut().zip(cq.iter_mut()) {
        let x = *a;
        let y = *b;
        *a = c * x - s * y;
        *b = s * x + c * y;
    }
}
