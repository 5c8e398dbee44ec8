//! Dense linear algebra on small row-major matrices.
//!
//! Everything here is generic over [`Scalar`] so the analytic routines can be
//! run in `f32` as well as `f64`. The matrices in this crate are at most a few
//! hundred rows, so plain dense storage is used throughout.

use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{norm_inf, Scalar};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_diagonal(diag: &[T]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    /// Builds a matrix from nested rows. All rows must have the same length.
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::Dimension("ragged matrix rows".into()));
        }
        Ok(Self {
            rows: r,
            cols: c,
            data: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(v.len(), self.cols, "mul_vec dimension");
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).fold(T::zero(), |acc, (&a, &b)| acc + a * b))
            .collect()
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "matmul dimension");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] = out.data[i * other.cols + j] + a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn scale(&self, s: T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| x * s).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a - b)
    }

    fn zip_with(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> T {
        (0..self.rows)
            .map(|i| self.row(i).iter().fold(T::zero(), |s, x| s + x.abs()))
            .fold(T::zero(), T::max)
    }

    /// Maximum absolute column sum.
    pub fn norm_one(&self) -> T {
        self.transpose().norm_inf()
    }

    pub fn max_abs(&self) -> T {
        norm_inf(&self.data)
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.data.iter()
    }

    pub fn cast<U: Scalar>(&self) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| U::lit(x.as_f64())).collect(),
        }
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

/// LU factorization with partial pivoting, `P·A = L·U`.
#[derive(Debug, Clone)]
pub struct Lu<T> {
    original: Matrix<T>,
    lu: Matrix<T>,
    perm: Vec<usize>,
}

impl<T: Scalar> Lu<T> {
    pub fn factor(a: &Matrix<T>) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::Dimension(format!("LU of a {}x{} matrix", a.rows(), a.cols())));
        }
        let n = a.rows();
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = a.max_abs().max(T::min_positive_value());
        let tiny = scale * T::epsilon() * T::lit(n.max(1) as f64);
        for k in 0..n {
            let (p, pivot) =
                (k..n)
                    .map(|i| (i, lu[(i, k)].abs()))
                    .fold((k, T::zero()), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pivot <= tiny || !pivot.is_finite() {
                return Err(Error::Singular(format!("zero pivot in column {k}")));
            }
            if p != k {
                perm.swap(p, k);
                for j in 0..n {
                    let tmp = lu[(p, j)];
                    lu[(p, j)] = lu[(k, j)];
                    lu[(k, j)] = tmp;
                }
            }
            let inv = T::one() / lu[(k, k)];
            for i in k + 1..n {
                let f = lu[(i, k)] * inv;
                lu[(i, k)] = f;
                if f != T::zero() {
                    for j in k + 1..n {
                        lu[(i, j)] = lu[(i, j)] - f * lu[(k, j)];
                    }
                }
            }
        }
        Ok(Self {
            original: a.clone(),
            lu,
            perm,
        })
    }

    fn solve_raw(&self, b: &[T]) -> Vec<T> {
        let n = self.lu.rows();
        let mut x: Vec<T> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s = s - self.lu[(i, j)] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s = s - self.lu[(i, j)] * x[j];
            }
            x[i] = s / self.lu[(i, i)];
        }
        x
    }

    /// Solves `A·x = b`, refining until `‖b − A·x‖∞ < 1e-12·‖b‖∞`
    /// (or the precision floor of `T`) or the correction stops helping.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        assert_eq!(b.len(), self.lu.rows(), "solve dimension");
        let mut x = self.solve_raw(b);
        let target = T::tol(1e-12) * norm_inf(b);
        let mut res = residual(&self.original, &x, b);
        let mut res_norm = norm_inf(&res);
        for _ in 0..4 {
            if res_norm <= target {
                break;
            }
            let dx = self.solve_raw(&res);
            let cand: Vec<T> = x.iter().zip(&dx).map(|(&a, &d)| a + d).collect();
            let cand_res = residual(&self.original, &cand, b);
            let cand_norm = norm_inf(&cand_res);
            if cand_norm >= res_norm {
                break;
            }
            x = cand;
            res = cand_res;
            res_norm = cand_norm;
        }
        x
    }

    pub fn solve_matrix(&self, b: &Matrix<T>) -> Matrix<T> {
        let n = b.rows();
        let mut out = Matrix::zeros(n, b.cols());
        for j in 0..b.cols() {
            let col: Vec<T> = (0..n).map(|i| b[(i, j)]).collect();
            for (i, v) in self.solve(&col).into_iter().enumerate() {
                out[(i, j)] = v;
            }
        }
        out
    }

    pub fn inverse(&self) -> Matrix<T> {
        self.solve_matrix(&Matrix::identity(self.lu.rows()))
    }
}

fn residual<T: Scalar>(a: &Matrix<T>, x: &[T], b: &[T]) -> Vec<T> {
    a.mul_vec(x).iter().zip(b).map(|(&ax, &bi)| bi - ax).collect()
}

pub fn solve<T: Scalar>(a: &Matrix<T>, b: &[T]) -> Result<Vec<T>> {
    Ok(Lu::factor(a)?.solve(b))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Eigenvalue<T> {
    pub re: T,
    pub im: T,
}

/// All eigenvalues of a general real square matrix.
///
/// Balancing, reduction to upper Hessenberg form by stabilized elimination,
/// then the Francis double-shift QR iteration.
pub fn eigenvalues<T: Scalar>(a: &Matrix<T>) -> Result<Vec<Eigenvalue<T>>> {
    if !a.is_square() {
        return Err(Error::Dimension("eigenvalues of a non-square matrix".into()));
    }
    let n = a.rows();
    if n == 0 {
        return Ok(Vec::new());
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::EigenNonConvergence);
    }
    // 1-based working copy keeps the classical index arithmetic readable.
    let mut h = vec![vec![T::zero(); n + 1]; n + 1];
    for i in 0..n {
        for j in 0..n {
            h[i + 1][j + 1] = a[(i, j)];
        }
    }
    balance(&mut h, n);
    hessenberg(&mut h, n);
    for i in 3..=n {
        for j in 1..i - 1 {
            h[i][j] = T::zero();
        }
    }
    hessenberg_qr(&mut h, n)
}

fn balance<T: Scalar>(a: &mut [Vec<T>], n: usize) {
    let radix = T::lit(2.0);
    let sqrdx = radix * radix;
    let mut done = false;
    while !done {
        done = true;
        for i in 1..=n {
            let mut c = T::zero();
            let mut r = T::zero();
            for j in 1..=n {
                if j != i {
                    c = c + a[j][i].abs();
                    r = r + a[i][j].abs();
                }
            }
            if c != T::zero() && r != T::zero() {
                let mut g = r / radix;
                let mut f = T::one();
                let s = c + r;
                while c < g {
                    f = f * radix;
                    c = c * sqrdx;
                }
                g = r * radix;
                while c > g {
                    f = f / radix;
                    c = c / sqrdx;
                }
                if (c + r) / f < T::lit(0.95) * s {
                    done = false;
                    let g = T::one() / f;
                    for j in 1..=n {
                        a[i][j] = a[i][j] * g;
                    }
                    for row in a.iter_mut().take(n + 1).skip(1) {
                        row[i] = row[i] * f;
                    }
                }
            }
        }
    }
}

fn hessenberg<T: Scalar>(a: &mut [Vec<T>], n: usize) {
    for m in 2..n {
        let mut x = T::zero();
        let mut i = m;
        for j in m..=n {
            if a[j][m - 1].abs() > x.abs() {
                x = a[j][m - 1];
                i = j;
            }
        }
        if i != m {
            for j in m - 1..=n {
                let tmp = a[i][j];
                a[i][j] = a[m][j];
                a[m][j] = tmp;
            }
            for row in a.iter_mut().take(n + 1).skip(1) {
                row.swap(i, m);
            }
        }
        if x != T::zero() {
            for i in m + 1..=n {
                let mut y = a[i][m - 1];
                if y != T::zero() {
                    y = y / x;
                    a[i][m - 1] = y;
                    for j in m..=n {
                        a[i][j] = a[i][j] - y * a[m][j];
                    }
                    for row in a.iter_mut().take(n + 1).skip(1) {
                        row[m] = row[m] + y * row[i];
                    }
                }
            }
        }
    }
}

fn sign<T: Scalar>(a: T, b: T) -> T {
    if b >= T::zero() {
        a.abs()
    } else {
        -a.abs()
    }
}

fn hessenberg_qr<T: Scalar>(a: &mut [Vec<T>], n: usize) -> Result<Vec<Eigenvalue<T>>> {
    const MAX_ITS: usize = 60;
    let mut wr = vec![T::zero(); n + 1];
    let mut wi = vec![T::zero(); n + 1];
    let mut anorm = T::zero();
    for i in 1..=n {
        for j in i.saturating_sub(1).max(1)..=n {
            anorm = anorm + a[i][j].abs();
        }
    }
    let mut nn = n as isize;
    let mut t = T::zero();
    let half = T::lit(0.5);
    while nn >= 1 {
        let mut its = 0usize;
        loop {
            let nu = nn as usize;
            let mut l = nu;
            while l >= 2 {
                let mut s = a[l - 1][l - 1].abs() + a[l][l].abs();
                if s == T::zero() {
                    s = anorm;
                }
                if a[l][l - 1].abs() + s == s {
                    a[l][l - 1] = T::zero();
                    break;
                }
                l -= 1;
            }
            let mut x = a[nu][nu];
            if l == nu {
                wr[nu] = x + t;
                wi[nu] = T::zero();
                nn -= 1;
                break;
            }
            let mut y = a[nu - 1][nu - 1];
            let mut w = a[nu][nu - 1] * a[nu - 1][nu];
            if l == nu - 1 {
                let p = half * (y - x);
                let q = p * p + w;
                let mut z = q.abs().sqrt();
                x = x + t;
                if q >= T::zero() {
                    z = p + sign(z, p);
                    wr[nu - 1] = x + z;
                    wr[nu] = x + z;
                    if z != T::zero() {
                        wr[nu] = x - w / z;
                    }
                    wi[nu - 1] = T::zero();
                    wi[nu] = T::zero();
                } else {
                    wr[nu - 1] = x + p;
                    wr[nu] = x + p;
                    wi[nu - 1] = -z;
                    wi[nu] = z;
                }
                nn -= 2;
                break;
            }
            if its == MAX_ITS {
                return Err(Error::EigenNonConvergence);
            }
            if its.is_multiple_of(10) && its > 0 {
                // exceptional shift
                t = t + x;
                for i in 1..=nu {
                    a[i][i] = a[i][i] - x;
                }
                let s = a[nu][nu - 1].abs() + a[nu - 1][nu - 2].abs();
                x = T::lit(0.75) * s;
                y = x;
                w = T::lit(-0.4375) * s * s;
            }
            its += 1;
            let mut m = nu - 2;
            let (mut p, mut q, mut r);
            loop {
                let z = a[m][m];
                let rr = x - z;
                let ss = y - z;
                p = (rr * ss - w) / a[m + 1][m] + a[m][m + 1];
                q = a[m + 1][m + 1] - z - rr - ss;
                r = a[m + 2][m + 1];
                let s = p.abs() + q.abs() + r.abs();
                p = p / s;
                q = q / s;
                r = r / s;
                if m == l {
                    break;
                }
                let u = a[m][m - 1].abs() * (q.abs() + r.abs());
                let v = p.abs() * (a[m - 1][m - 1].abs() + z.abs() + a[m + 1][m + 1].abs());
                if u + v == v {
                    break;
                }
                m -= 1;
            }
            for i in m + 2..=nu {
                a[i][i - 2] = T::zero();
                if i != m + 2 {
                    a[i][i - 3] = T::zero();
                }
            }
            let mut k = m;
            while k < nu {
                if k != m {
                    p = a[k][k - 1];
                    q = a[k + 1][k - 1];
                    r = T::zero();
                    if k != nu - 1 {
                        r = a[k + 2][k - 1];
                    }
                    x = p.abs() + q.abs() + r.abs();
                    if x != T::zero() {
                        p = p / x;
                        q = q / x;
                        r = r / x;
                    }
                }
                let s = sign((p * p + q * q + r * r).sqrt(), p);
                if s != T::zero() {
                    if k == m {
                        if l != m {
                            a[k][k - 1] = -a[k][k - 1];
                        }
                    } else {
                        a[k][k - 1] = -s * x;
                    }
                    p = p + s;
                    x = p / s;
                    y = q / s;
                    let z = r / s;
                    q = q / p;
                    r = r / p;
                    for j in k..=nu {
                        let mut pp = a[k][j] + q * a[k + 1][j];
                        if k != nu - 1 {
                            pp = pp + r * a[k + 2][j];
                            a[k + 2][j] = a[k + 2][j] - pp * z;
                        }
                        a[k + 1][j] = a[k + 1][j] - pp * y;
                        a[k][j] = a[k][j] - pp * x;
                    }
                    let mmin = if nu < k + 3 { nu } else { k + 3 };
                    for row in a.iter_mut().take(mmin + 1).skip(l) {
                        let mut pp = x * row[k] + y * row[k + 1];
                        if k != nu - 1 {
                            pp = pp + z * row[k + 2];
                            row[k + 2] = row[k + 2] - pp * r;
                        }
                        row[k + 1] = row[k + 1] - pp * q;
                        row[k] = row[k] - pp;
                    }
                }
                k += 1;
            }
            if l >= nu - 1 {
                break;
            }
        }
    }
    let out: Vec<Eigenvalue<T>> = (1..=n).map(|i| Eigenvalue { re: wr[i], im: wi[i] }).collect();
    if out.iter().any(|e| !e.re.is_finite() || !e.im.is_finite()) {
        return Err(Error::EigenNonConvergence);
    }
    Ok(out)
}

/// Largest real part over the spectrum.
pub fn spectral_abscissa_dense<T: Scalar>(a: &Matrix<T>) -> Result<T> {
    Ok(eigenvalues(a)?.iter().map(|e| e.re).fold(T::neg_infinity(), T::max))
}

/// Outcome of [`perron_power_iteration`].
#[derive(Debug, Clone)]
pub struct PerronEstimate<T> {
    pub value: T,
    pub vector: Vec<T>,
    pub iterations: usize,
}

/// Dominant real eigenvalue of a Metzler matrix (nonnegative off-diagonal)
/// by power iteration on the shifted matrix `M + c·I`, `c` chosen so the
/// shifted matrix is nonnegative with positive diagonal.
///
/// Convergence is certified by the Collatz–Wielandt bracket
/// `min_i (Px)_i/x_i ≤ ρ ≤ max_i (Px)_i/x_i`. Returns `None` when the bracket
/// does not close, which happens for reducible matrices where the iterate
/// loses positivity.
pub fn perron_power_iteration<T: Scalar>(m: &Matrix<T>, tol: T, max_iter: usize) -> Option<PerronEstimate<T>> {
    let n = m.rows();
    if n == 0 {
        return None;
    }
    let diag_min = (0..n).map(|i| m[(i, i)]).fold(T::infinity(), T::min);
    let shift = (-diag_min).max(T::zero()) + T::lit(0.5) * m.max_abs().max(T::min_positive_value());
    let mut p = m.clone();
    for i in 0..n {
        p[(i, i)] = p[(i, i)] + shift;
    }
    let mut x = vec![T::one() / T::lit(n as f64); n];
    for it in 1..=max_iter {
        let y = p.mul_vec(&x);
        let mut lo = T::infinity();
        let mut hi = T::neg_infinity();
        for (yi, xi) in y.iter().zip(&x) {
            if *xi <= T::min_positive_value() {
                return None;
            }
            let ratio = *yi / *xi;
            lo = lo.min(ratio);
            hi = hi.max(ratio);
        }
        let total: T = y.iter().copied().sum();
        if total <= T::zero() || !total.is_finite() {
            return None;
        }
        x = y.into_iter().map(|v| v / total).collect();
        if hi - lo <= tol * hi.abs().max(T::one()) {
            return Some(PerronEstimate {
                value: (hi + lo) * T::lit(0.5) - shift,
                vector: x,
                iterations: it,
            });
        }
    }
    None
}

/// Matrix exponential by scaling and squaring with the degree-13 Padé approximant.
pub fn expm<T: Scalar>(a: &Matrix<T>) -> Result<Matrix<T>> {
    const B: [f64; 14] = [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ];
    const THETA13: f64 = 5.371920351148152;
    if !a.is_square() {
        return Err(Error::Dimension("expm of a non-square matrix".into()));
    }
    let n = a.rows();
    let norm = a.norm_one().as_f64();
    let s = if norm > THETA13 {
        (norm / THETA13).log2().ceil() as i32
    } else {
        0
    };
    let a = a.scale(T::lit(2f64.powi(-s)));
    let b = |k: usize| T::lit(B[k]);
    let ident = Matrix::identity(n);
    let a2 = a.matmul(&a);
    let a4 = a2.matmul(&a2);
    let a6 = a4.matmul(&a2);
    let u_inner = a6
        .matmul(&a6.scale(b(13)).add(&a4.scale(b(11))).add(&a2.scale(b(9))))
        .add(&a6.scale(b(7)))
        .add(&a4.scale(b(5)))
        .add(&a2.scale(b(3)))
        .add(&ident.scale(b(1)));
    let u = a.matmul(&u_inner);
    let v = a6
        .matmul(&a6.scale(b(12)).add(&a4.scale(b(10))).add(&a2.scale(b(8))))
        .add(&a6.scale(b(6)))
        .add(&a4.scale(b(4)))
        .add(&a2.scale(b(2)))
        .add(&ident.scale(b(0)));
    let lu = Lu::factor(&v.sub(&u))?;
    let mut r = lu.solve_matrix(&v.add(&u));
    for _ in 0..s {
        r = r.matmul(&r);
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> Matrix<f64> {
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn lu_solves_small_system() {
        let a = m(&[&[2.0, -1.0], &[-1.0, 2.0]]);
        let x = solve(&a, &[1.0, 1.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn lu_reports_singular() {
        let a = m(&[&[1.0, 2.0], &[2.0, 4.0]]);
        assert!(matches!(Lu::factor(&a), Err(Error::Singular(_))));
    }

    #[test]
    fn eigenvalues_of_rotation_are_complex() {
        let a = m(&[&[0.0, -1.0], &[1.0, 0.0]]);
        let mut ev = eigenvalues(&a).unwrap();
        ev.sort_by(|x, y| x.im.partial_cmp(&y.im).unwrap());
        assert!(ev[0].re.abs() < 1e-14 && (ev[0].im + 1.0).abs() < 1e-14);
        assert!((ev[1].im - 1.0).abs() < 1e-14);
    }

    #[test]
    fn eigenvalues_of_triangular_matrix_are_its_diagonal() {
        let a = m(&[&[3.0, 1.0, 4.0], &[0.0, -2.0, 5.0], &[0.0, 0.0, 0.5]]);
        let mut re: Vec<f64> = eigenvalues(&a).unwrap().iter().map(|e| e.re).collect();
        re.sort_by(f64::total_cmp);
        for (got, want) in re.iter().zip([-2.0, 0.5, 3.0]) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn perron_iteration_on_symmetric_pair() {
        let c = m(&[&[4.0 / 3.0, 2.0 / 3.0], &[2.0 / 3.0, 4.0 / 3.0]]);
        let est = perron_power_iteration(&c, 1e-14, 10_000).unwrap();
        assert!((est.value - 2.0).abs() < 1e-12);
    }

    #[test]
    fn perron_iteration_gives_up_on_reducible_input() {
        let c = m(&[&[1.0, 0.0], &[0.0, 0.0]]);
        // the eigenvector (1, 0) has a zero entry, so the bracket cannot close
        assert!(perron_power_iteration(&c, 1e-14, 10_000).is_none());
    }

    #[test]
    fn expm_scalar_and_nilpotent() {
        let e = expm(&m(&[&[-1.0]])).unwrap();
        assert!((e[(0, 0)] - (-1f64).exp()).abs() < 1e-15);
        let e = expm(&m(&[&[0.0, 1.0], &[0.0, 0.0]])).unwrap();
        assert!((e[(0, 1)] - 1.0).abs() < 1e-15 && (e[(0, 0)] - 1.0).abs() < 1e-15);
        // large norm exercises the squaring phase
        let e = expm(&m(&[&[-30.0]])).unwrap();
        assert!((e[(0, 0)] / (-30f64).exp() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn f32_path_compiles_and_agrees() {
        let a: Matrix<f32> = m(&[&[2.0, -1.0], &[-1.0, 2.0]]).cast();
        let x = solve(&a, &[1.0f32, 1.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-6);
    }
}
