//! Small dense linear-algebra kernels used by the reservoir and the
//! classifiers: a row-major matrix, Gram products, an SPD solver and an
//! eigenvalue-based spectral radius.

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;

use crate::error::{Error, Result};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Mat { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Dimension("ragged rows".into()));
        }
        Ok(Mat {
            rows: rows.len(),
            cols,
            data: rows.concat(),
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

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Mat {
        let mut t = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::Dimension(format!(
                "vector of length {} against {} columns",
                x.len(),
                self.cols
            )));
        }
        Ok((0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect())
    }

    pub fn matmul(&self, other: &Mat) -> Result<Mat> {
        if self.cols != other.rows {
            return Err(Error::Dimension(format!(
                "{}x{} times {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Mat::zeros(self.rows, other.cols);
        gemm(
            self.rows,
            self.cols,
            other.cols,
            1.0,
            (&self.data, self.cols, 1),
            (&other.data, other.cols, 1),
            0.0,
            &mut out.data,
        );
        Ok(out)
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
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

/// `c = alpha * a * b + beta * c` for an `m x k` times `k x n` product with
/// arbitrary strides on the inputs; `c` is row-major `m x n`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: (&[f64], usize, usize),
    b: (&[f64], usize, usize),
    beta: f64,
    c: &mut [f64],
) {
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.iter_mut().for_each(|v| *v *= beta);
        return;
    }
    // SAFETY: the caller-provided strides address elements inside `a` and `b`
    // for all index pairs (< m, < k) and (< k, < n); `c` holds m*n values.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.0.as_ptr(),
            a.1 as isize,
            a.2 as isize,
            b.0.as_ptr(),
            b.1 as isize,
            b.2 as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `Z Zᵀ` for a row-major `n x s` matrix given as a slice, restricted to the
/// column window `[col_start, s)`.
pub(crate) fn gram_of_rows(z: &[f64], n: usize, s: usize, col_start: usize) -> Mat {
    let mut out = Mat::zeros(n, n);
    let width = s - col_start;
    if width == 0 {
        return out;
    }
    let base = &z[col_start..];
    gemm(n, width, n, 1.0, (base, s, 1), (base, 1, s), 0.0, &mut out.data);
    out
}

/// In-place Cholesky factorisation of a symmetric positive-definite matrix;
/// returns the lower factor. Pivots below `tol * max diagonal` are rejected.
pub fn cholesky(a: &Mat) -> Result<Mat> {
    if !a.is_square() {
        return Err(Error::Dimension("Cholesky of a non-square matrix".into()));
    }
    let n = a.rows;
    let max_diag = (0..n).fold(0.0_f64, |m, i| m.max(a[(i, i)].abs()));
    let tol = f64::EPSILON * n.max(1) as f64 * max_diag.max(f64::MIN_POSITIVE);
    let mut l = Mat::zeros(n, n);
    for j in 0..n {
        let lj = &l.data[j * n..j * n + j];
        let mut d = a[(j, j)] - lj.iter().map(|v| v * v).sum::<f64>();
        if d <= tol || !d.is_finite() {
            return Err(Error::IllConditioned(format!(
                "non-positive pivot {d:.3e} at column {j} of {n}"
            )));
        }
        d = d.sqrt();
        l[(j, j)] = d;
        for i in j + 1..n {
            let (head, tail) = l.data.split_at_mut(i * n);
            let lj = &head[j * n..j * n + j];
            let li = &tail[..j];
            let dot: f64 = li.iter().zip(lj).map(|(x, y)| x * y).sum();
            tail[j] = (a[(i, j)] - dot) / d;
        }
    }
    Ok(l)
}

/// Solve `A X = B` for SPD `A` (`n x n`) and `B` (`n x k`).
pub fn solve_spd(a: &Mat, b: &Mat) -> Result<Mat> {
    if b.rows != a.rows {
        return Err(Error::Dimension(format!(
            "right-hand side has {} rows, system has {}",
            b.rows, a.rows
        )));
    }
    let l = cholesky(a)?;
    let n = a.rows;
    let k = b.cols;
    let mut x = b.clone();
    for c in 0..k {
        // forward: L y = b
        for i in 0..n {
            let mut s = x[(i, c)];
            for j in 0..i {
                s -= l[(i, j)] * x[(j, c)];
            }
            x[(i, c)] = s / l[(i, i)];
        }
        // backward: Lᵀ x = y
        for i in (0..n).rev() {
            let mut s = x[(i, c)];
            for j in i + 1..n {
                s -= l[(j, i)] * x[(j, c)];
            }
            x[(i, c)] = s / l[(i, i)];
        }
    }
    Ok(x)
}

/// Largest eigenvalue modulus of a square matrix.
///
/// The matrix is split into the strongly connected components of its
/// sparsity graph (eigenvalues of a reducible matrix are those of its
/// diagonal blocks); each non-trivial block goes through Householder
/// reduction to Hessenberg form and the Francis double-shift QR iteration.
pub fn spectral_radius(m: &Mat) -> Result<f64> {
    if !m.is_square() {
        return Err(Error::Dimension(format!(
            "spectral radius of a {}x{} matrix",
            m.rows, m.cols
        )));
    }
    let n = m.rows;
    if n == 0 {
        return Ok(0.0);
    }
    let mut graph = DiGraph::<(), ()>::with_capacity(n, 0);
    let nodes: Vec<_> = (0..n).map(|_| graph.add_node(())).collect();
    for i in 0..n {
        for (j, &v) in m.row(i).iter().enumerate() {
            if v != 0.0 && i != j {
                graph.add_edge(nodes[i], nodes[j], ());
            }
        }
    }
    let mut radius = 0.0_f64;
    for component in tarjan_scc(&graph) {
        if component.len() == 1 {
            let i = component[0].index();
            radius = radius.max(m[(i, i)].abs());
            continue;
        }
        let mut idx: Vec<usize> = component.iter().map(|c| c.index()).collect();
        idx.sort_unstable();
        let k = idx.len();
        let mut block = Mat::zeros(k, k);
        for (bi, &i) in idx.iter().enumerate() {
            for (bj, &j) in idx.iter().enumerate() {
                block[(bi, bj)] = m[(i, j)];
            }
        }
        let eig = eigenvalues(block)?;
        for (re, im) in eig {
            radius = radius.max(re.hypot(im));
        }
    }
    Ok(radius)
}

/// All eigenvalues `(re, im)` of a dense square matrix.
pub fn eigenvalues(mut a: Mat) -> Result<Vec<(f64, f64)>> {
    if !a.is_square() {
        return Err(Error::Dimension("eigenvalues of a non-square matrix".into()));
    }
    hessenberg_in_place(&mut a);
    hqr(&mut a)
}

/// Dot product with four independent partial sums so the loop vectorises.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn hessenberg_in_place(a: &mut Mat) {
    let n = a.rows;
    if n < 3 {
        return;
    }
    let mut v = vec![0.0; n];
    let mut w = vec![0.0; n];
    for k in 0..n - 2 {
        let alpha_sq: f64 = (k + 1..n).map(|i| a[(i, k)] * a[(i, k)]).sum();
        let norm = alpha_sq.sqrt();
        if norm == 0.0 {
            continue;
        }
        let x0 = a[(k + 1, k)];
        let alpha = if x0 >= 0.0 { -norm } else { norm };
        // v = x - alpha e1, H = I - 2 v vᵀ / (vᵀ v)
        for i in k + 1..n {
            v[i] = a[(i, k)];
        }
        v[k + 1] -= alpha;
        let vtv: f64 = (k + 1..n).map(|i| v[i] * v[i]).sum();
        if vtv == 0.0 {
            continue;
        }
        let beta = 2.0 / vtv;
        // A <- H A on rows k+1.., columns k..; row-wise for locality
        w[k..].iter_mut().for_each(|x| *x = 0.0);
        for i in k + 1..n {
            let vi = v[i];
            for (wj, aij) in w[k..].iter_mut().zip(&a.row(i)[k..]) {
                *wj += vi * aij;
            }
        }
        for i in k + 1..n {
            let f = beta * v[i];
            for (aij, wj) in a.row_mut(i)[k..].iter_mut().zip(&w[k..]) {
                *aij -= f * wj;
            }
        }
        // A <- A H on all rows, columns k+1..
        for (i, wi) in w.iter_mut().enumerate() {
            *wi = beta * dot(&a.row(i)[k + 1..], &v[k + 1..]);
        }
        for (i, &wi) in w.iter().enumerate() {
            let row = a.row_mut(i);
            for j in k + 1..n {
                row[j] -= wi * v[j];
            }
        }
        for i in k + 2..n {
            a[(i, k)] = 0.0;
        }
    }
}

/// Eigenvalues of an upper Hessenberg matrix by the Francis double-shift QR
/// algorithm (eigenvalues only, EISPACK `hqr` layout with 1-based indices).
fn hqr(h: &mut Mat) -> Result<Vec<(f64, f64)>> {
    const MAX_ITS: usize = 60;
    let n = h.rows;
    let mut out = vec![(0.0, 0.0); n];
    if n == 0 {
        return Ok(out);
    }
    // 1-based view
    let a = |h: &Mat, i: usize, j: usize| h[(i - 1, j - 1)];
    macro_rules! at {
        ($i:expr, $j:expr) => {
            h[($i - 1, $j - 1)]
        };
    }

    let mut anorm = 0.0;
    for i in 1..=n {
        for j in i.saturating_sub(1).max(1)..=n {
            anorm += a(h, i, j).abs();
        }
    }
    let mut nn = n;
    let mut t = 0.0;
    let (mut p, mut q, mut r): (f64, f64, f64);
    while nn >= 1 {
        let mut its = 0;
        loop {
            let mut l = nn;
            while l >= 2 {
                let mut s = a(h, l - 1, l - 1).abs() + a(h, l, l).abs();
                if s == 0.0 {
                    s = anorm;
                }
                if a(h, l, l - 1).abs() + s == s {
                    at!(l, l - 1) = 0.0;
                    break;
                }
                l -= 1;
            }
            let mut x = a(h, nn, nn);
            if l == nn {
                out[nn - 1] = (x + t, 0.0);
                nn -= 1;
                break;
            }
            let mut y = a(h, nn - 1, nn - 1);
            let mut w = a(h, nn, nn - 1) * a(h, nn - 1, nn);
            if l == nn - 1 {
                p = 0.5 * (y - x);
                q = p * p + w;
                let mut z = q.abs().sqrt();
                x += t;
                if q >= 0.0 {
                    z = p + z.copysign(p);
                    let first = x + z;
                    let second = if z != 0.0 { x - w / z } else { first };
                    out[nn - 2] = (first, 0.0);
                    out[nn - 1] = (second, 0.0);
                } else {
                    out[nn - 2] = (x + p, -z);
                    out[nn - 1] = (x + p, z);
                }
                nn -= 2;
                break;
            }
            if its == MAX_ITS {
                return Err(Error::Numerical(format!(
                    "QR iteration did not converge for a {n}x{n} block"
                )));
            }
            if its > 0 && its % 10 == 0 {
                // exceptional shift
                t += x;
                for i in 1..=nn {
                    at!(i, i) -= x;
                }
                let s = a(h, nn, nn - 1).abs() + a(h, nn - 1, nn - 2).abs();
                x = 0.75 * s;
                y = x;
                w = -0.4375 * s * s;
            }
            its += 1;
            let mut m = nn - 2;
            loop {
                let z = a(h, m, m);
                r = x - z;
                let s = y - z;
                p = (r * s - w) / a(h, m + 1, m) + a(h, m, m + 1);
                q = a(h, m + 1, m + 1) - z - r - s;
                r = a(h, m + 2, m + 1);
                let s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
                if m == l {
                    break;
                }
                let u = a(h, m, m - 1).abs() * (q.abs() + r.abs());
                let v = p.abs() * (a(h, m - 1, m - 1).abs() + z.abs() + a(h, m + 1, m + 1).abs());
                if u + v == v {
                    break;
                }
                m -= 1;
            }
            for i in m + 2..=nn {
                at!(i, i - 2) = 0.0;
                if i != m + 2 {
                    at!(i, i - 3) = 0.0;
                }
            }
            let mut k = m;
            while k < nn {
                if k != m {
                    p = a(h, k, k - 1);
                    q = a(h, k + 1, k - 1);
                    r = if k != nn - 1 { a(h, k + 2, k - 1) } else { 0.0 };
                    x = p.abs() + q.abs() + r.abs();
                    if x != 0.0 {
                        p /= x;
                        q /= x;
                        r /= x;
                    }
                }
                let s = (p * p + q * q + r * r).sqrt().copysign(p);
                if s != 0.0 {
                    if k == m {
                        if l != m {
                            at!(k, k - 1) = -a(h, k, k - 1);
                        }
                    } else {
                        at!(k, k - 1) = -s * x;
                    }
                    p += s;
                    x = p / s;
                    y = q / s;
                    let z = r / s;
                    q /= p;
                    r /= p;
                    for j in k..=nn {
                        let mut pp = a(h, k, j) + q * a(h, k + 1, j);
                        if k != nn - 1 {
                            pp += r * a(h, k + 2, j);
                            at!(k + 2, j) -= pp * z;
                        }
                        at!(k + 1, j) -= pp * y;
                        at!(k, j) -= pp * x;
                    }
                    let mmin = nn.min(k + 3);
                    for i in l..=mmin {
                        let mut pp = x * a(h, i, k) + y * a(h, i, k + 1);
                        if k != nn - 1 {
                            pp += z * a(h, i, k + 2);
                            at!(i, k + 2) -= pp * r;
                        }
                        at!(i, k + 1) -= pp * q;
                        at!(i, k) -= pp;
                    }
                }
                k += 1;
            }
            if l >= nn - 1 {
                break;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_spectral_radius() {
        let m = Mat::from_rows(&[vec![0.3, 0.0], vec![0.0, -0.9]]).unwrap();
        assert!((spectral_radius(&m).unwrap() - 0.9).abs() < 1e-15);
    }

    #[test]
    fn zero_matrix_has_zero_radius() {
        assert_eq!(spectral_radius(&Mat::zeros(5, 5)).unwrap(), 0.0);
    }

    #[test]
    fn non_square_rejected() {
        assert!(matches!(
            spectral_radius(&Mat::zeros(2, 3)),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn rotation_has_complex_pair() {
        // rotation by 90 degrees scaled by 2: eigenvalues ±2i
        let m = Mat::from_rows(&[vec![0.0, -2.0], vec![2.0, 0.0]]).unwrap();
        assert!((spectral_radius(&m).unwrap() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn nilpotent_shift_is_zero() {
        let mut m = Mat::zeros(6, 6);
        for i in 0..5 {
            m[(i, i + 1)] = 1.0;
        }
        assert_eq!(spectral_radius(&m).unwrap(), 0.0);
    }

    #[test]
    fn spd_solve_recovers_known_solution() {
        let a = Mat::from_rows(&[
            vec![4.0, 1.0, 0.5],
            vec![1.0, 3.0, 0.2],
            vec![0.5, 0.2, 2.0],
        ])
        .unwrap();
        let x = Mat::from_rows(&[vec![1.0], vec![-2.0], vec![0.5]]).unwrap();
        let b = a.matmul(&x).unwrap();
        let got = solve_spd(&a, &b).unwrap();
        for i in 0..3 {
            assert!((got[(i, 0)] - x[(i, 0)]).abs() < 1e-12);
        }
    }

    #[test]
    fn singular_system_is_ill_conditioned() {
        let a = Mat::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let b = Mat::from_rows(&[vec![1.0], vec![1.0]]).unwrap();
        assert!(matches!(solve_spd(&a, &b), Err(Error::IllConditioned(_))));
    }

    #[test]
    fn gram_matches_naive_product() {
        let z = Mat::from_rows(&[vec![1.0, 2.0, 3.0, 4.0], vec![-1.0, 0.5, 0.0, 2.0]]).unwrap();
        let g = gram_of_rows(z.as_slice(), 2, 4, 1);
        assert_eq!(g[(0, 0)], 4.0 + 9.0 + 16.0);
        assert_eq!(g[(0, 1)], 1.0 + 0.0 + 8.0);
        assert_eq!(g[(1, 0)], g[(0, 1)]);
        assert_eq!(g[(1, 1)], 0.25 + 4.0);
    }
}
