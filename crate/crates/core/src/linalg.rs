//! Dense matrix primitives for tall `n x d` data with small `d`.
//!
//! Everything here is sized for the least-squares setting: the Gram matrix
//! `AᵀA` is `d x d`, its extreme eigenvalues come from a cyclic Jacobi
//! decomposition, and the normal equations are solved by Cholesky.

use crate::error::{Error, Result};

/// Maximum number of cyclic Jacobi sweeps before giving up.
pub const MAX_JACOBI_SWEEPS: usize = 50;

/// Default relative off-diagonal tolerance for Jacobi termination.
pub const DEFAULT_EIGEN_TOL: f64 = 1e-10;

/// Row-major dense real matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    /// Builds a matrix from row-major data, rejecting bad lengths and non-finite entries.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        let len = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::Config(format!("matrix dimensions {rows}x{cols} overflow")))?;
        if data.len() != len {
            return Err(Error::Config(format!(
                "matrix data has {} entries, expected {rows}x{cols} = {len}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite matrix entry at ({}, {})",
                pos / cols.max(1),
                pos % cols.max(1)
            )));
        }
        Ok(DenseMatrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n, n);
        for (i, &v) in diag.iter().enumerate() {
            m.data[i * n + i] = v;
        }
        m
    }

    /// Builds a matrix from a slice of equal-length rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Config("rows have unequal lengths".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        DenseMatrix { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    /// `A x`.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols, "matvec dimension mismatch");
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    /// `Aᵀ y`.
    pub fn t_matvec(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.rows, "t_matvec dimension mismatch");
        let mut out = vec![0.0; self.cols];
        for (i, &yi) in y.iter().enumerate() {
            axpy(yi, self.row(i), &mut out);
        }
        out
    }

    pub fn matmul(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let mut out = DenseMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &aik) in self.row(i).iter().enumerate() {
                if aik != 0.0 {
                    axpy(aik, other.row(k), dst);
                }
            }
        }
        out
    }

    pub fn fro_norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn row_norms_sq(&self) -> Vec<f64> {
        (0..self.rows).map(|i| dot(self.row(i), self.row(i))).collect()
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`.
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Euclidean distance between two vectors.
pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Spectral quantities of a data matrix used by step-size rules and bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralSummary {
    /// λ₁(AᵀA)
    pub lambda_max: f64,
    /// λ_d(AᵀA)
    pub lambda_min: f64,
    /// ‖A‖_F²
    pub fro_norm_sq: f64,
    /// ‖a_j‖₂² per row
    pub row_norms_sq: Vec<f64>,
    /// ‖A‖₂ = √λ₁
    pub spectral_norm: f64,
}

impl SpectralSummary {
    /// κ = λ₁/λ_d.
    pub fn condition_number(&self) -> f64 {
        self.lambda_max / self.lambda_min
    }
}

/// Returns `AᵀA`, exactly symmetric.
pub fn gram(a: &DenseMatrix) -> Result<DenseMatrix> {
    let d = a.cols();
    d.checked_mul(d)
        .ok_or_else(|| Error::Config(format!("gram dimension {d}x{d} overflows")))?;
    let mut g = vec![0.0; d * d];
    for i in 0..a.rows() {
        let row = a.row(i);
        for k in 0..d {
            let rk = row[k];
            if rk == 0.0 {
                continue;
            }
            let dst = &mut g[k * d + k..(k + 1) * d];
            for (gl, &rl) in dst.iter_mut().zip(&row[k..]) {
                *gl += rk * rl;
            }
        }
    }
    for k in 0..d {
        for l in 0..k {
            g[k * d + l] = g[l * d + k];
        }
    }
    Ok(DenseMatrix {
        rows: d,
        cols: d,
        data: g,
    })
}

/// All eigenvalues of a symmetric matrix by cyclic Jacobi rotations, sorted descending.
///
/// Terminates once the off-diagonal Frobenius mass is at most `tol * ‖G‖_F`.
pub fn sym_eigenvalues(g: &DenseMatrix, tol: f64) -> Result<Vec<f64>> {
    if !g.is_square() {
        return Err(Error::Domain(format!(
            "eigenvalues need a square matrix, got {}x{}",
            g.rows(),
            g.cols()
        )));
    }
    let n = g.rows();
    let mut a = g.data.clone();
    // symmetrize away round-off asymmetry
    for i in 0..n {
        for j in 0..i {
            let m = 0.5 * (a[i * n + j] + a[j * n + i]);
            a[i * n + j] = m;
            a[j * n + i] = m;
        }
    }
    let fro = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let threshold = tol * fro;
    let off_mass = |a: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                s += a[i * n + j] * a[i * n + j];
            }
        }
        (2.0 * s).sqrt()
    };

    let mut converged = off_mass(&a) <= threshold;
    let mut sweep = 0;
    while !converged && sweep < MAX_JACOBI_SWEEPS {
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                a[p * n + p] = app - t * apq;
                a[q * n + q] = aqq + t * apq;
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                for r in 0..n {
                    if r == p || r == q {
                        continue;
                    }
                    let arp = a[r * n + p];
                    let arq = a[r * n + q];
                    let nrp = c * arp - s * arq;
                    let nrq = s * arp + c * arq;
                    a[r * n + p] = nrp;
                    a[p * n + r] = nrp;
                    a[r * n + q] = nrq;
                    a[q * n + r] = nrq;
                }
            }
        }
        sweep += 1;
        converged = off_mass(&a) <= threshold;
    }
    if !converged {
        return Err(Error::Numerical(format!(
            "Jacobi eigenvalue iteration did not converge in {MAX_JACOBI_SWEEPS} sweeps"
        )));
    }
    let mut values: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
    values.sort_by(|x, y| y.total_cmp(x));
    Ok(values)
}

/// Largest and smallest eigenvalue of a symmetric matrix.
pub fn sym_eigen_extremes(g: &DenseMatrix, tol: f64) -> Result<(f64, f64)> {
    let values = sym_eigenvalues(g, tol)?;
    match (values.first(), values.last()) {
        (Some(&max), Some(&min)) => Ok((max, min)),
        _ => Err(Error::Domain("empty matrix has no eigenvalues".into())),
    }
}

/// Spectral norm of a symmetric matrix, `max(|λ_max|, |λ_min|)`.
pub fn sym_spectral_norm(g: &DenseMatrix, tol: f64) -> Result<f64> {
    let (max, min) = sym_eigen_extremes(g, tol)?;
    Ok(max.abs().max(min.abs()))
}

pub fn spectral_summary(a: &DenseMatrix) -> Result<SpectralSummary> {
    let row_norms_sq = a.row_norms_sq();
    let fro_norm_sq: f64 = row_norms_sq.iter().sum();
    if fro_norm_sq == 0.0 {
        return Err(Error::Domain("spectral summary of a zero matrix".into()));
    }
    let g = gram(a)?;
    let (lambda_max, lambda_min) = sym_eigen_extremes(&g, DEFAULT_EIGEN_TOL)?;
    if lambda_min <= 0.0 {
        return Err(Error::Domain(format!(
            "matrix is not of full column rank (smallest Gram eigenvalue {lambda_min:e})"
        )));
    }
    Ok(SpectralSummary {
        lambda_max,
        lambda_min,
        fro_norm_sq,
        row_norms_sq,
        spectral_norm: lambda_max.sqrt(),
    })
}

/// Lower Cholesky factor of a symmetric positive-definite matrix (row-major).
fn cholesky(g: &DenseMatrix) -> Result<Vec<f64>> {
    let n = g.rows();
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let mut diag = g.get(j, j);
        for k in 0..j {
            diag -= l[j * n + k] * l[j * n + k];
        }
        // pivots lost to cancellation count as zero
        if diag.is_nan() || diag <= 64.0 * f64::EPSILON * g.get(j, j).abs() {
            return Err(Error::RankDeficient { pivot: j, value: diag });
        }
        let ljj = diag.sqrt();
        l[j * n + j] = ljj;
        for i in (j + 1)..n {
            let mut s = g.get(i, j);
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / ljj;
        }
    }
    Ok(l)
}

fn cholesky_solve(l: &[f64], n: usize, rhs: &[f64]) -> Vec<f64> {
    let mut y = rhs.to_vec();
    for i in 0..n {
        let mut s = y[i];
        for k in 0..i {
            s -= l[i * n + k] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l[k * n + i] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    y
}

/// Residual tolerance of [`normal_solve`], relative to `‖Aᵀb‖₂`.
pub const NORMAL_SOLVE_TOL: f64 = 1e-8;

/// Solves `AᵀA x = Aᵀb` by Cholesky with a few rounds of iterative refinement.
pub fn normal_solve(a: &DenseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    if b.len() != a.rows() {
        return Err(Error::Config(format!(
            "right-hand side has length {}, expected {}",
            b.len(),
            a.rows()
        )));
    }
    let d = a.cols();
    let g = gram(a)?;
    let l = cholesky(&g)?;
    let atb = a.t_matvec(b);
    let target = NORMAL_SOLVE_TOL * norm2(&atb);
    let mut x = cholesky_solve(&l, d, &atb);
    for _ in 0..4 {
        let mut r = a.matvec(&x);
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri -= bi;
        }
        let grad = a.t_matvec(&r);
        if norm2(&grad) <= target {
            return Ok(x);
        }
        let dx = cholesky_solve(&l, d, &grad);
        for (xi, dxi) in x.iter_mut().zip(&dx) {
            *xi -= dxi;
        }
    }
    let mut r = a.matvec(&x);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri -= bi;
    }
    let res = norm2(&a.t_matvec(&r));
    if res <= target {
        Ok(x)
    } else {
        Err(Error::Numerical(format!(
            "normal equations residual {res:e} above tolerance {target:e}"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn gram_identity_and_column() {
        let g = gram(&DenseMatrix::identity(3)).unwrap();
        assert_eq!(g, DenseMatrix::identity(3));
        let col = DenseMatrix::new(2, 1, vec![1.0, 2.0]).unwrap();
        assert_eq!(gram(&col).unwrap().data(), &[5.0]);
    }

    #[test]
    fn gram_matches_triple_loop() {
        let a = DenseMatrix::from_fn(20, 5, |i, j| ((i * 7 + j * 3) % 11) as f64 - 5.0 + 0.1 * j as f64);
        let g = gram(&a).unwrap();
        for k in 0..5 {
            for l in 0..5 {
                let mut s = 0.0;
                for i in 0..20 {
                    s += a.get(i, k) * a.get(i, l);
                }
                assert!((g.get(k, l) - s).abs() <= 1e-12 * s.abs().max(1.0));
            }
        }
    }

    #[test]
    fn eigen_diagonal_and_2x2() {
        let (max, min) = sym_eigen_extremes(&DenseMatrix::from_diag(&[4.0, 1.0]), 1e-12).unwrap();
        assert_eq!((max, min), (4.0, 1.0));
        let g = DenseMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let (max, min) = sym_eigen_extremes(&g, 1e-12).unwrap();
        assert!((max - 3.0).abs() < 1e-12);
        assert!((min - 1.0).abs() < 1e-12);
    }

    #[test]
    fn eigen_recovers_conjugated_spectrum() {
        // Q from Givens rotations, G = Q diag(s) Qᵀ
        let spectrum = [9.0, 5.0, 2.5, 1.2, 0.3];
        let n = spectrum.len();
        let mut q = DenseMatrix::identity(n);
        for (p, r, angle) in [(0, 1, 0.3), (1, 3, 1.1), (2, 4, -0.7), (0, 4, 2.0), (1, 2, 0.45)] {
            let (s, c) = f64::sin_cos(angle);
            let rot = DenseMatrix::from_fn(n, n, |i, j| match (i, j) {
                _ if i == p && j == p => c,
                _ if i == r && j == r => c,
                _ if i == p && j == r => -s,
                _ if i == r && j == p => s,
                _ if i == j => 1.0,
                _ => 0.0,
            });
            q = q.matmul(&rot);
        }
        let g = q.matmul(&DenseMatrix::from_diag(&spectrum)).matmul(&q.transpose());
        let values = sym_eigenvalues(&g, 1e-12).unwrap();
        for (v, s) in values.iter().zip(spectrum) {
            assert!(rel(*v, s) < 1e-8, "{v} vs {s}");
        }
    }

    #[test]
    fn summary_identity() {
        let s = spectral_summary(&DenseMatrix::identity(2)).unwrap();
        assert_eq!(s.fro_norm_sq, 2.0);
        assert!((s.lambda_max - 1.0).abs() < 1e-14 && (s.lambda_min - 1.0).abs() < 1e-14);
        assert!(s.fro_norm_sq >= s.lambda_max + s.lambda_min - 1e-12);
    }

    #[test]
    fn summary_rejects_zero_and_rank_deficient() {
        assert!(matches!(
            spectral_summary(&DenseMatrix::zeros(3, 2)),
            Err(Error::Domain(_))
        ));
        let a = DenseMatrix::from_rows(&[vec![1.0, 1.0], vec![2.0, 2.0]]).unwrap();
        assert!(spectral_summary(&a).is_err());
    }

    #[test]
    fn summary_fro_is_sum_of_squares() {
        let a = DenseMatrix::from_fn(50, 10, |i, j| {
            ((i * 13 + j * 5) % 17) as f64 / 3.0 - 2.0 + (i == j) as u8 as f64
        });
        let s = spectral_summary(&a).unwrap();
        let direct: f64 = a.data().iter().map(|v| v * v).sum();
        assert!(rel(s.fro_norm_sq, direct) < 1e-12);
        assert!(rel(s.row_norms_sq.iter().sum::<f64>(), s.fro_norm_sq) < 1e-10);
    }

    #[test]
    fn normal_solve_identity_and_consistent() {
        let b = [1.0, -2.0, 3.5];
        let x = normal_solve(&DenseMatrix::identity(3), &b).unwrap();
        for (xi, bi) in x.iter().zip(b) {
            assert!((xi - bi).abs() < 1e-14);
        }
        let a = DenseMatrix::from_fn(12, 4, |i, j| ((i + 1) as f64).powi(j as i32 % 3) + (i * j % 5) as f64);
        let x0 = [0.5, -1.0, 2.0, 0.25];
        let b = a.matvec(&x0);
        let x = normal_solve(&a, &b).unwrap();
        for (xi, x0i) in x.iter().zip(x0) {
            assert!((xi - x0i).abs() < 1e-8);
        }
    }

    #[test]
    fn normal_solve_matches_adjugate_inverse() {
        let a = DenseMatrix::from_fn(10, 3, |i, j| ((i * 3 + j * 7) % 10) as f64 - 4.5 + (j as f64) * 0.3);
        let b: Vec<f64> = (0..10).map(|i| (i as f64).sin()).collect();
        let g = gram(&a).unwrap();
        let c = a.t_matvec(&b);
        // explicit 3x3 inverse via cofactors
        let m = |i: usize, j: usize| g.get(i, j);
        let cof = |i: usize, j: usize| {
            let r: Vec<usize> = (0..3).filter(|&k| k != i).collect();
            let s: Vec<usize> = (0..3).filter(|&k| k != j).collect();
            let minor = m(r[0], s[0]) * m(r[1], s[1]) - m(r[0], s[1]) * m(r[1], s[0]);
            if (i + j).is_multiple_of(2) {
                minor
            } else {
                -minor
            }
        };
        let det: f64 = (0..3).map(|j| m(0, j) * cof(0, j)).sum();
        let expected: Vec<f64> = (0..3)
            .map(|i| (0..3).map(|j| cof(j, i) * c[j]).sum::<f64>() / det)
            .collect();
        let x = normal_solve(&a, &b).unwrap();
        for (xi, ei) in x.iter().zip(&expected) {
            assert!((xi - ei).abs() <= 1e-9 * ei.abs().max(1.0), "{xi} vs {ei}");
        }
    }

    #[test]
    fn normal_solve_rank_deficient() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0], vec![3.0, 6.0]]).unwrap();
        assert!(matches!(
            normal_solve(&a, &[1.0, 2.0, 3.0]),
            Err(Error::RankDeficient { .. })
        ));
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(DenseMatrix::new(2, 2, vec![1.0; 3]).is_err());
        assert!(DenseMatrix::new(1, 2, vec![1.0, f64::NAN]).is_err());
        assert!(DenseMatrix::new(usize::MAX, 2, vec![]).is_err());
    }
}
