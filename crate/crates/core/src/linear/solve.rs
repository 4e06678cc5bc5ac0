use nalgebra::{DMatrix, DVector};

/// Relative pivot tolerance below which a column counts as dependent.
pub const RANK_TOL: f64 = 1e-10;

/// Diagonal-pivoted Cholesky of a symmetric PSD matrix, computed after
/// scaling it to unit diagonal: `D A D = P L Lᵀ Pᵀ`.
#[derive(Debug, Clone)]
pub struct PivotedCholesky {
    /// `scale[i] = 1/sqrt(A_ii)`, or 0 for an all-zero column.
    scale: Vec<f64>,
    /// Pivot order: `perm[k]` is the original column eliminated at step k.
    perm: Vec<usize>,
    /// Lower factor in pivoted order; only the leading `rank` columns are valid.
    l: DMatrix<f64>,
    rank: usize,
}

impl PivotedCholesky {
    pub fn new(a: &DMatrix<f64>) -> Self {
        Self::with_tolerance(a, RANK_TOL)
    }

    pub fn with_tolerance(a: &DMatrix<f64>, tol: f64) -> Self {
        let q = a.nrows();
        let scale: Vec<f64> = (0..q)
            .map(|i| {
                if a[(i, i)] > 0.0 {
                    1.0 / a[(i, i)].sqrt()
                } else {
                    0.0
                }
            })
            .collect();
        let mut w = DMatrix::from_fn(q, q, |i, j| a[(i, j)] * scale[i] * scale[j]);
        let mut perm: Vec<usize> = (0..q).collect();
        let mut rank = 0;
        let mut first_pivot = 0.0;
        for k in 0..q {
            // Largest remaining diagonal; ties keep the earliest column.
            let mut best = k;
            for j in k + 1..q {
                if w[(j, j)] > w[(best, best)] {
                    best = j;
                }
            }
            let pivot = w[(best, best)];
            if k == 0 {
                first_pivot = pivot;
            }
            if !(pivot > tol * first_pivot) || !(pivot > 0.0) {
                break;
            }
            if best != k {
                w.swap_rows(k, best);
                w.swap_columns(k, best);
                perm.swap(k, best);
            }
            let d = pivot.sqrt();
            w[(k, k)] = d;
            for i in k + 1..q {
                w[(i, k)] /= d;
            }
            for j in k + 1..q {
                let ljk = w[(j, k)];
                for i in j..q {
                    w[(i, j)] -= w[(i, k)] * ljk;
                }
            }
            // Keep the trailing block symmetric so later swaps stay valid.
            for j in k + 1..q {
                for i in j + 1..q {
                    w[(j, i)] = w[(i, j)];
                }
            }
            rank += 1;
        }
        let mut l = DMatrix::zeros(q, q);
        for j in 0..rank {
            for i in j..q {
                l[(i, j)] = w[(i, j)];
            }
        }
        Self { scale, perm, l, rank }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    pub fn is_full_rank(&self) -> bool {
        self.rank == self.dim()
    }

    /// Original indices of the columns in the numerical basis, in pivot order.
    pub fn basis(&self) -> Vec<usize> {
        self.perm[..self.rank].to_vec()
    }

    /// Original indices of columns left out of the basis, ascending.
    pub fn dependent(&self) -> Vec<usize> {
        let mut d = self.perm[self.rank..].to_vec();
        d.sort_unstable();
        d
    }

    /// Solves `A x = b`. Only meaningful at full rank.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let q = self.dim();
        let r = self.rank;
        // z = P^T D b
        let mut z: Vec<f64> = (0..q)
            .map(|k| b[self.perm[k]] * self.scale[self.perm[k]])
            .collect();
        for i in 0..r {
            let mut s = z[i];
            for j in 0..i {
                s -= self.l[(i, j)] * z[j];
            }
            z[i] = s / self.l[(i, i)];
        }
        for i in (0..r).rev() {
            let mut s = z[i];
            for j in i + 1..r {
                s -= self.l[(j, i)] * z[j];
            }
            z[i] = s / self.l[(i, i)];
        }
        let mut x = DVector::zeros(q);
        for k in 0..r {
            let c = self.perm[k];
            x[c] = z[k] * self.scale[c];
        }
        x
    }

    /// `A⁻¹` at full rank.
    pub fn inverse(&self) -> DMatrix<f64> {
        let q = self.dim();
        let mut inv = DMatrix::zeros(q, q);
        let mut e = DVector::zeros(q);
        for j in 0..q {
            e.fill(0.0);
            e[j] = 1.0;
            inv.set_column(j, &self.solve(&e));
        }
        // Symmetrize away rounding.
        for j in 0..q {
            for i in j + 1..q {
                let v = 0.5 * (inv[(i, j)] + inv[(j, i)]);
                inv[(i, j)] = v;
                inv[(j, i)] = v;
            }
        }
        inv
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn gram(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0));
        z.transpose() * z
    }

    #[test]
    fn solves_spd() {
        let a = gram(40, 6, 1);
        let f = PivotedCholesky::new(&a);
        assert!(f.is_full_rank());
        let b = DVector::from_fn(6, |i, _| i as f64 - 2.0);
        let x = f.solve(&b);
        assert!((&a * &x - &b).norm() < 1e-10);
        let inv = f.inverse();
        assert!((&a * inv - DMatrix::identity(6, 6)).norm() < 1e-10);
    }

    #[test]
    fn badly_scaled_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let z = DMatrix::from_fn(30, 3, |_, j| {
            rng.random_range(-1.0..1.0) * 10f64.powi(4 * j as i32)
        });
        let a = z.transpose() * &z;
        let f = PivotedCholesky::new(&a);
        assert!(f.is_full_rank());
        let b = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let x = f.solve(&b);
        assert!((&a * &x - &b).norm() / b.norm() < 1e-8);
    }

    #[test]
    fn detects_dependence() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut z = DMatrix::from_fn(25, 4, |_, _| rng.random_range(-1.0..1.0));
        let dup = z.column(0) * 2.0 - z.column(2);
        z.set_column(3, &dup);
        let f = PivotedCholesky::new(&(z.transpose() * &z));
        assert_eq!(f.rank(), 3);
        assert_eq!(f.dependent().len(), 1);
        assert_eq!(f.basis().len(), 3);
    }

    #[test]
    fn zero_column() {
        let mut a = gram(10, 3, 4);
        for i in 0..3 {
            a[(1, i)] = 0.0;
            a[(i, 1)] = 0.0;
        }
        let f = PivotedCholesky::new(&a);
        assert_eq!(f.rank(), 2);
        assert_eq!(f.dependent(), vec![1]);
    }
}
