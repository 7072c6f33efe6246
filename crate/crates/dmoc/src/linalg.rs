//! Dense linear algebra used by the integrators and the SQP solver.
//!
//! Everything here is deliberately small and dependency-free: the problems
//! this crate targets stay at desk scale (KKT systems of a few thousand
//! rows), where a straightforward dense LDLᵀ with Bunch-Kaufman pivoting
//! and a partial-pivot LU are entirely adequate and keep runs bit-for-bit
//! reproducible.

use crate::diff::Real;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is singular (pivot {pivot:.3e} at column {col})")]
    Singular { col: usize, pivot: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Mat { rows: r, cols: c, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// y = A x.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        let mut y = vec![0.0; self.rows];
        for i in 0..self.rows {
            let row = self.row(i);
            let mut acc = 0.0;
            for (a, b) in row.iter().zip(x) {
                acc += a * b;
            }
            y[i] = acc;
        }
        y
    }

    /// y = Aᵀ x.
    pub fn mul_vec_transposed(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.rows);
        let mut y = vec![0.0; self.cols];
        for i in 0..self.rows {
            let row = self.row(i);
            let xi = x[i];
            for (yj, a) in y.iter_mut().zip(row) {
                *yj += a * xi;
            }
        }
        y
    }

    pub fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows);
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let aik = self[(i, k)];
                if aik == 0.0 {
                    continue;
                }
                let orow = other.row(k);
                let out_row = out.row_mut(i);
                for (o, b) in out_row.iter_mut().zip(orow) {
                    *o += aik * b;
                }
            }
        }
        out
    }

    pub fn transposed(&self) -> Mat {
        let mut out = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)];
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl std::ops::Index<(usize, usize)> for Mat {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Mat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

pub fn inf_norm(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub fn two_norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// Solve A x = b for a small square system over any AD scalar,
/// in place: `a` is n×n row-major, `b` becomes the solution.
///
/// Pivoting decisions are made on the value channel, which keeps the dual
/// channels consistent with a fixed pivot sequence.
pub fn solve_in_place<T: Real>(a: &mut [T], b: &mut [T], n: usize) -> Result<(), LinalgError> {
    assert_eq!(a.len(), n * n);
    assert_eq!(b.len(), n);
    for col in 0..n {
        let mut piv = col;
        let mut best = a[col * n + col].value().abs();
        for r in col + 1..n {
            let v = a[r * n + col].value().abs();
            if v > best {
                best = v;
                piv = r;
            }
        }
        if !(best > f64::EPSILON * 1e-2) {
            return Err(LinalgError::Singular { col, pivot: best });
        }
        if piv != col {
            for j in 0..n {
                a.swap(col * n + j, piv * n + j);
            }
            b.swap(col, piv);
        }
        let diag = a[col * n + col];
        for r in col + 1..n {
            let factor = a[r * n + col] / diag;
            a[r * n + col] = T::constant(0.0);
            for j in col + 1..n {
                let upd = a[col * n + j] * factor;
                a[r * n + j] = a[r * n + j] - upd;
            }
            let upd = b[col] * factor;
            b[r] = b[r] - upd;
        }
    }
    for col in (0..n).rev() {
        let mut acc = b[col];
        for j in col + 1..n {
            acc = acc - a[col * n + j] * b[j];
        }
        b[col] = acc / a[col * n + col];
    }
    Ok(())
}

/// LU factorization with partial pivoting (f64 only), reusable for several
/// right-hand sides.
pub struct Lu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl Lu {
    pub fn factor(a: &Mat) -> Result<Lu, LinalgError> {
        assert_eq!(a.rows(), a.cols());
        let n = a.rows();
        let mut lu = a.data.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for col in 0..n {
            let mut piv = col;
            let mut best = lu[col * n + col].abs();
            for r in col + 1..n {
                let v = lu[r * n + col].abs();
                if v > best {
                    best = v;
                    piv = r;
                }
            }
            if best == 0.0 {
                return Err(LinalgError::Singular { col, pivot: best });
            }
            if piv != col {
                for j in 0..n {
                    lu.swap(col * n + j, piv * n + j);
                }
                perm.swap(col, piv);
            }
            let diag = lu[col * n + col];
            for r in col + 1..n {
                let factor = lu[r * n + col] / diag;
                lu[r * n + col] = factor;
                for j in col + 1..n {
                    lu[r * n + j] -= factor * lu[col * n + j];
                }
            }
        }
        Ok(Lu { n, lu, perm })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        assert_eq!(b.len(), n);
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for j in 0..i {
                x[i] -= self.lu[i * n + j] * x[j];
            }
        }
        for i in (0..n).rev() {
            for j in i + 1..n {
                x[i] -= self.lu[i * n + j] * x[j];
            }
            x[i] /= self.lu[i * n + i];
        }
        x
    }
}

/// Symmetric-indefinite LDLᵀ factorization with Bunch-Kaufman partial
/// pivoting (1×1 and 2×2 pivot blocks).
///
/// Exposes the inertia of the factored matrix, which the SQP solver uses
/// to decide how much Hessian regularization a KKT system needs.
pub struct Ldlt {
    n: usize,
    /// Lower triangle of L (unit diagonal implicit) and D blocks packed in place.
    f: Vec<f64>,
    /// Permutation applied symmetrically.
    perm: Vec<usize>,
    /// Pivot structure: for a 1×1 block at k, `block[k] = 1`; for a 2×2 block
    /// spanning k, k+1: `block[k] = 2`, `block[k+1] = 0`.
    block: Vec<u8>,
}

const BK_ALPHA: f64 = 0.6403882032022076; // (1 + sqrt(17)) / 8

impl Ldlt {
    /// Factor a symmetric matrix (only the lower triangle of `a` is read).
    pub fn factor(a: &Mat) -> Result<Ldlt, LinalgError> {
        assert_eq!(a.rows(), a.cols());
        let n = a.rows();
        let mut f = a.data.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut block = vec![0u8; n];
        let mut w1 = vec![0.0; n];
        let mut w2 = vec![0.0; n];

        let mut k = 0;
        while k < n {
            // Largest off-diagonal magnitude in column k below the diagonal.
            let mut lambda = 0.0;
            let mut r = k;
            for i in k + 1..n {
                let v = f[i * n + k].abs();
                if v > lambda {
                    lambda = v;
                    r = i;
                }
            }
            let akk = f[k * n + k].abs();

            let mut two_by_two = false;
            let mut swap_with = None;
            if lambda > 0.0 && akk < BK_ALPHA * lambda {
                // sigma: largest off-diagonal magnitude in row/column r of the
                // active submatrix (lower-triangle storage).
                let mut sigma = 0.0;
                for i in k..n {
                    if i != r {
                        let v = if i > r { f[i * n + r] } else { f[r * n + i] }.abs();
                        if v > sigma {
                            sigma = v;
                        }
                    }
                }
                if akk * sigma >= BK_ALPHA * lambda * lambda {
                    // 1x1 pivot at k.
                } else if f[r * n + r].abs() >= BK_ALPHA * sigma {
                    swap_with = Some(r); // 1x1 pivot after swapping k <-> r
                } else {
                    two_by_two = true;
                    swap_with = Some(r); // 2x2 pivot, swap k+1 <-> r
                }
            }

            if let Some(r) = swap_with {
                let target = if two_by_two { k + 1 } else { k };
                if r != target {
                    Self::sym_swap(&mut f, n, target, r);
                    perm.swap(target, r);
                }
            }

            if !two_by_two {
                let d = f[k * n + k];
                if d == 0.0 {
                    return Err(LinalgError::Singular { col: k, pivot: 0.0 });
                }
                // Scale the column into L, cache it, then rank-1 update the
                // trailing lower triangle: A_ij -= l_ik d l_jk.
                for i in k + 1..n {
                    f[i * n + k] /= d;
                    w1[i] = f[i * n + k];
                }
                for i in k + 1..n {
                    let lik_d = w1[i] * d;
                    let row = i * n;
                    for j in k + 1..=i {
                        f[row + j] -= lik_d * w1[j];
                    }
                }
                block[k] = 1;
                k += 1;
            } else {
                // 2x2 pivot on rows/cols (k, k+1).
                let d11 = f[k * n + k];
                let d21 = f[(k + 1) * n + k];
                let d22 = f[(k + 1) * n + (k + 1)];
                let det = d11 * d22 - d21 * d21;
                if det == 0.0 {
                    return Err(LinalgError::Singular { col: k, pivot: 0.0 });
                }
                // (l1, l2) = (b1, b2) inv(D); the original (b1, b2) = l D are
                // cached for the rank-2 trailing update A_ij -= l_i D l_j.
                for i in k + 2..n {
                    let b1 = f[i * n + k];
                    let b2 = f[i * n + k + 1];
                    let l1 = (b1 * d22 - b2 * d21) / det;
                    let l2 = (b2 * d11 - b1 * d21) / det;
                    f[i * n + k] = l1;
                    f[i * n + k + 1] = l2;
                    w1[i] = b1;
                    w2[i] = b2;
                }
                for i in k + 2..n {
                    let li1 = f[i * n + k];
                    let li2 = f[i * n + k + 1];
                    let row = i * n;
                    for j in k + 2..=i {
                        f[row + j] -= li1 * w1[j] + li2 * w2[j];
                    }
                }
                block[k] = 2;
                block[k + 1] = 0;
                k += 2;
            }
        }
        Ok(Ldlt { n, f, perm, block })
    }

    fn sym_swap(f: &mut [f64], n: usize, a: usize, b: usize) {
        // Symmetric row/column interchange touching only the lower triangle
        // (plus the already-factored L panel rows). Requires a < b.
        debug_assert!(a < b);
        for j in 0..a {
            f.swap(a * n + j, b * n + j);
        }
        for i in a + 1..b {
            f.swap(i * n + a, b * n + i);
        }
        for i in b + 1..n {
            f.swap(i * n + a, i * n + b);
        }
        f.swap(a * n + a, b * n + b);
    }

    /// Inertia (positive, negative, zero eigenvalue counts) of the factored matrix.
    pub fn inertia(&self) -> (usize, usize, usize) {
        let (mut pos, mut neg, mut zero) = (0, 0, 0);
        let n = self.n;
        let mut k = 0;
        while k < n {
            match self.block[k] {
                1 => {
                    let d = self.f[k * n + k];
                    if d > 0.0 {
                        pos += 1;
                    } else if d < 0.0 {
                        neg += 1;
                    } else {
                        zero += 1;
                    }
                    k += 1;
                }
                2 => {
                    // A Bunch-Kaufman 2x2 block always carries one positive and
                    // one negative eigenvalue.
                    let d11 = self.f[k * n + k];
                    let d21 = self.f[(k + 1) * n + k];
                    let d22 = self.f[(k + 1) * n + (k + 1)];
                    let det = d11 * d22 - d21 * d21;
                    if det < 0.0 {
                        pos += 1;
                        neg += 1;
                    } else {
                        // Degenerate: fall back to trace sign.
                        let tr = d11 + d22;
                        if det == 0.0 {
                            zero += 1;
                            if tr > 0.0 {
                                pos += 1;
                            } else if tr < 0.0 {
                                neg += 1;
                            } else {
                                zero += 1;
                            }
                        } else if tr > 0.0 {
                            pos += 2;
                        } else {
                            neg += 2;
                        }
                    }
                    k += 2;
                }
                other => unreachable!("invalid block tag {other}"),
            }
        }
        (pos, neg, zero)
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        assert_eq!(b.len(), n);
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();

        // Forward: L y = Pb (unit lower triangular, skipping D columns).
        let mut k = 0;
        while k < n {
            let w = self.block[k];
            if w == 1 {
                let xk = x[k];
                for i in k + 1..n {
                    x[i] -= self.f[i * n + k] * xk;
                }
                k += 1;
            } else {
                let xk = x[k];
                let xk1 = x[k + 1];
                for i in k + 2..n {
                    x[i] -= self.f[i * n + k] * xk + self.f[i * n + k + 1] * xk1;
                }
                k += 2;
            }
        }
        // Diagonal: D z = y.
        let mut k = 0;
        while k < n {
            if self.block[k] == 1 {
                x[k] /= self.f[k * n + k];
                k += 1;
            } else {
                let d11 = self.f[k * n + k];
                let d21 = self.f[(k + 1) * n + k];
                let d22 = self.f[(k + 1) * n + (k + 1)];
                let det = d11 * d22 - d21 * d21;
                let (b1, b2) = (x[k], x[k + 1]);
                x[k] = (b1 * d22 - b2 * d21) / det;
                x[k + 1] = (b2 * d11 - b1 * d21) / det;
                k += 2;
            }
        }
        // Backward: Lᵀ w = z.
        let mut k = n;
        while k > 0 {
            k -= 1;
            if self.block[k] == 0 {
                continue;
            }
            let width = self.block[k] as usize;
            for col in k..k + width {
                let mut acc = x[col];
                for i in k + width..n {
                    acc -= self.f[i * n + col] * x[i];
                }
                x[col] = acc;
            }
        }
        // Undo the permutation.
        let mut out = vec![0.0; n];
        for (i, &p) in self.perm.iter().enumerate() {
            out[p] = x[i];
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diff::D1;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_symmetric(n: usize, rng: &mut impl Rng) -> Mat {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = rng.gen_range(-1.0..1.0);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        m
    }

    #[test]
    fn lu_solves_random_systems() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in [1usize, 2, 3, 8, 25] {
            let mut a = Mat::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    a[(i, j)] = rng.gen_range(-1.0..1.0);
                }
                a[(i, i)] += 3.0;
            }
            let x_true: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let b = a.mul_vec(&x_true);
            let lu = Lu::factor(&a).unwrap();
            let x = lu.solve(&b);
            for (xi, ti) in x.iter().zip(&x_true) {
                assert!((xi - ti).abs() < 1e-10, "{xi} vs {ti}");
            }
        }
    }

    #[test]
    fn generic_solve_matches_lu_and_propagates_duals() {
        // 2x2 system with dual right-hand side: derivative of the solution
        // with respect to b is A^{-1}, checked column by column.
        let a = [3.0, 1.0, 1.0, 2.0];
        for seed in 0..2 {
            let mut ad: Vec<D1> = a.iter().map(|&v| D1::constant(v)).collect();
            let mut b = vec![
                D1 { val: 1.0, dot: if seed == 0 { 1.0 } else { 0.0 } },
                D1 { val: 4.0, dot: if seed == 1 { 1.0 } else { 0.0 } },
            ];
            solve_in_place(&mut ad, &mut b, 2).unwrap();
            // A^{-1} = 1/5 [[2, -1], [-1, 3]]
            let inv = [[0.4, -0.2], [-0.2, 0.6]];
            let x0 = 0.4 * 1.0 - 0.2 * 4.0;
            let x1 = -0.2 * 1.0 + 0.6 * 4.0;
            assert!((b[0].val - x0).abs() < 1e-14);
            assert!((b[1].val - x1).abs() < 1e-14);
            assert!((b[0].dot - inv[0][seed]).abs() < 1e-14);
            assert!((b[1].dot - inv[1][seed]).abs() < 1e-14);
        }
    }

    #[test]
    fn ldlt_reconstructs_and_solves() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in [1usize, 2, 3, 5, 12, 40] {
            let a = random_symmetric(n, &mut rng);
            let f = Ldlt::factor(&a).unwrap();
            let x_true: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let b = a.mul_vec(&x_true);
            let x = f.solve(&b);
            let scale = a.max_abs().max(1.0);
            for (xi, ti) in x.iter().zip(&x_true) {
                assert!((xi - ti).abs() < 1e-8 * scale, "n={n}: {xi} vs {ti}");
            }
        }
    }

    #[test]
    fn ldlt_inertia_matches_construction() {
        // Congruence preserves inertia (Sylvester), so B D B^T with random
        // invertible B has the inertia of the chosen sign pattern.
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..20 {
            let n = rng.gen_range(2..10usize);
            let npos = rng.gen_range(0..=n);
            let mut d = Mat::zeros(n, n);
            for i in 0..n {
                let mag = rng.gen_range(0.5..2.0);
                d[(i, i)] = if i < npos { mag } else { -mag };
            }
            let mut b = Mat::zeros(n, n);
            loop {
                for i in 0..n {
                    for j in 0..n {
                        b[(i, j)] = rng.gen_range(-1.0..1.0);
                    }
                }
                if Lu::factor(&b).is_ok() {
                    break;
                }
            }
            let a = b.matmul(&d).matmul(&b.transposed());
            let f = Ldlt::factor(&a).unwrap();
            let (pos, neg, zero) = f.inertia();
            assert_eq!((pos, neg, zero), (npos, n - npos, 0));
        }
    }

    #[test]
    fn ldlt_saddle_point_inertia() {
        // [[I, A^T], [A, 0]] with A full rank (m x n) has inertia (n, m, 0).
        let a_rows = [[1.0, 1.0, 0.0], [0.0, 1.0, -1.0]];
        let (n, m) = (3, 2);
        let mut k = Mat::zeros(n + m, n + m);
        for i in 0..n {
            k[(i, i)] = 1.0;
        }
        for (r, row) in a_rows.iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                k[(n + r, c)] = v;
                k[(c, n + r)] = v;
            }
        }
        let f = Ldlt::factor(&k).unwrap();
        assert_eq!(f.inertia(), (n, m, 0));
    }
}
