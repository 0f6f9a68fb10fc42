//! Dense complex linear algebra for small matrices.
//!
//! Everything here targets dimensions up to a few dozen. Storage is row-major.
//! Tensor factors are ordered left to right: subsystem 0 is the leftmost
//! factor of a Kronecker product and the most significant digit of a
//! basis index. This convention holds throughout the crate.

use std::fmt;
use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Sub};

use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Default numeric tolerance for predicates.
pub const DEFAULT_TOL: f64 = 1e-9;

const JACOBI_MAX_SWEEPS: usize = 100;

#[inline]
pub(crate) fn cr(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Dense complex matrix in row-major order.
#[derive(Clone, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl fmt::Debug for CMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "CMatrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            write!(f, "  ")?;
            for col in 0..self.cols {
                let z = self[(r, col)];
                write!(f, "{:+.6}{:+.6}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl CMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} entries for a {}x{} matrix",
                data.len(),
                rows,
                cols
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![C64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = cr(1.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for col in 0..cols {
                data.push(f(r, col));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from real row-major entries.
    pub fn from_real(rows: usize, cols: usize, entries: &[f64]) -> Result<Self> {
        Self::new(rows, cols, entries.iter().map(|&x| cr(x)).collect())
    }

    pub fn diag_real(values: &[f64]) -> Self {
        let n = values.len();
        let mut m = Self::zeros(n, n);
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = cr(v);
        }
        m
    }

    pub fn diag(values: &[C64]) -> Self {
        let n = values.len();
        let mut m = Self::zeros(n, n);
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    /// Column vector from amplitudes.
    pub fn column(values: Vec<C64>) -> Self {
        let n = values.len();
        Self {
            rows: n,
            cols: 1,
            data: values,
        }
    }

    /// Computational basis ket |index⟩ in dimension `dim`.
    pub fn ket(dim: usize, index: usize) -> Self {
        let mut m = Self::zeros(dim, 1);
        m[(index, 0)] = cr(1.0);
        m
    }

    /// Matrix unit |i⟩⟨j| in dimension `dim`.
    pub fn unit(dim: usize, i: usize, j: usize) -> Self {
        let mut m = Self::zeros(dim, dim);
        m[(i, j)] = cr(1.0);
        m
    }

    /// Rank-one operator |v⟩⟨v| from a vector (given as a slice of amplitudes).
    pub fn outer(v: &[C64]) -> Self {
        Self::from_fn(v.len(), v.len(), |r, col| v[r] * v[col].conj())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<C64> {
        self.data
    }

    pub fn col(&self, j: usize) -> Vec<C64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, col| self[(col, r)].conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, col| self[(col, r)])
    }

    pub fn conj(&self) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z.conj()).collect(),
        }
    }

    pub fn scale(&self, s: C64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    pub fn scale_real(&self, s: f64) -> Self {
        self.scale(cr(s))
    }

    pub fn matmul(&self, other: &CMatrix) -> Self {
        assert_eq!(
            self.cols, other.rows,
            "matmul shape mismatch: {}x{} * {}x{}",
            self.rows, self.cols, other.rows, other.cols
        );
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a.re == 0.0 && a.im == 0.0 {
                    continue;
                }
                let row = &other.data[k * other.cols..(k + 1) * other.cols];
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, b) in dst.iter_mut().zip(row) {
                    *d += a * b;
                }
            }
        }
        out
    }

    /// Computes `self† · self`.
    pub fn gram(&self) -> Self {
        self.adjoint().matmul(self)
    }

    /// Computes `self · x · self†`.
    pub fn conjugate(&self, x: &CMatrix) -> Self {
        self.matmul(x).matmul(&self.adjoint())
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Largest entrywise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &CMatrix) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn kron(&self, other: &CMatrix) -> Self {
        let rows = self.rows * other.rows;
        let cols = self.cols * other.cols;
        let mut out = Self::zeros(rows, cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                let a = self[(i, j)];
                if a.re == 0.0 && a.im == 0.0 {
                    continue;
                }
                for k in 0..other.rows {
                    for l in 0..other.cols {
                        out[(i * other.rows + k, j * other.cols + l)] = a * other[(k, l)];
                    }
                }
            }
        }
        out
    }

    /// Frobenius norm of `self - self†`.
    pub fn hermitian_deviation(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let mut acc = 0.0;
        for i in 0..self.rows {
            for j in 0..self.cols {
                acc += (self[(i, j)] - self[(j, i)].conj()).norm_sqr();
            }
        }
        acc.sqrt()
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermitian_deviation() <= tol
    }

    /// Hermitian part `(self + self†)/2`.
    pub fn hermitian_part(&self) -> Self {
        Self::from_fn(self.rows, self.cols, |i, j| {
            (self[(i, j)] + self[(j, i)].conj()) * 0.5
        })
    }

    pub fn is_psd(&self, tol: f64) -> bool {
        if !self.is_hermitian(tol) {
            return false;
        }
        match hermitian_eig(self) {
            Ok(e) => e.values.last().is_none_or(|&v| v >= -tol),
            Err(_) => false,
        }
    }

    /// `self† self = I` within `tol` (Frobenius).
    pub fn is_isometry(&self, tol: f64) -> bool {
        self.gram().max_abs_diff(&CMatrix::identity(self.cols)) <= tol
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        self.is_square() && self.is_isometry(tol)
    }

    /// `‖self - I‖_max <= tol` for square matrices.
    pub fn is_identity(&self, tol: f64) -> bool {
        self.is_square() && self.max_abs_diff(&CMatrix::identity(self.rows)) <= tol
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = C64;
    #[inline]
    fn index(&self, (r, col): (usize, usize)) -> &C64 {
        &self.data[r * self.cols + col]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    #[inline]
    fn index_mut(&mut self, (r, col): (usize, usize)) -> &mut C64 {
        &mut self.data[r * self.cols + col]
    }
}

impl Mul for &CMatrix {
    type Output = CMatrix;
    fn mul(self, rhs: &CMatrix) -> CMatrix {
        self.matmul(rhs)
    }
}

impl Add for &CMatrix {
    type Output = CMatrix;
    fn add(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.shape(), rhs.shape());
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }
}

impl Sub for &CMatrix {
    type Output = CMatrix;
    fn sub(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.shape(), rhs.shape());
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }
}

impl AddAssign<&CMatrix> for CMatrix {
    fn add_assign(&mut self, rhs: &CMatrix) {
        assert_eq!(self.shape(), rhs.shape());
        for (a, b) in self.data.iter_mut().zip(&rhs.data) {
            *a += b;
        }
    }
}

/// Kronecker product `a ⊗ b`.
pub fn tensor_product(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kron(b)
}

/// Kronecker product of a list of factors, left to right.
pub fn tensor_all<'a>(factors: impl IntoIterator<Item = &'a CMatrix>) -> CMatrix {
    let mut it = factors.into_iter();
    let first = match it.next() {
        Some(f) => f.clone(),
        None => return CMatrix::identity(1),
    };
    it.fold(first, |acc, f| acc.kron(f))
}

fn check_dims(m: &CMatrix, dims: &[usize]) -> Result<()> {
    let total: usize = dims.iter().product();
    if !m.is_square() || m.rows() != total {
        return Err(Error::DimensionMismatch(format!(
            "subsystem dims {:?} (product {}) do not match a {}x{} matrix",
            dims,
            total,
            m.rows(),
            m.cols()
        )));
    }
    Ok(())
}

fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1; dims.len()];
    for k in (0..dims.len().saturating_sub(1)).rev() {
        s[k] = s[k + 1] * dims[k + 1];
    }
    s
}

fn digits(mut index: usize, dims: &[usize], out: &mut [usize]) {
    for k in (0..dims.len()).rev() {
        out[k] = index % dims[k];
        index /= dims[k];
    }
}

/// Traces out every subsystem not listed in `keep`.
///
/// The kept subsystems appear in ascending order in the result.
pub fn partial_trace(m: &CMatrix, dims: &[usize], keep: &[usize]) -> Result<CMatrix> {
    check_dims(m, dims)?;
    let mut kept: Vec<usize> = keep.to_vec();
    kept.sort_unstable();
    kept.dedup();
    if kept.iter().any(|&k| k >= dims.len()) {
        return Err(Error::DimensionMismatch(format!(
            "keep set {:?} out of range for {} subsystems",
            keep,
            dims.len()
        )));
    }
    let traced: Vec<usize> = (0..dims.len()).filter(|k| !kept.contains(k)).collect();
    let st = strides(dims);
    let kept_dims: Vec<usize> = kept.iter().map(|&k| dims[k]).collect();
    let traced_dims: Vec<usize> = traced.iter().map(|&k| dims[k]).collect();
    let out_dim: usize = kept_dims.iter().product();
    let tr_dim: usize = traced_dims.iter().product();

    let offset = |sel: &[usize], sel_dims: &[usize], idx: usize| -> usize {
        let mut d = vec![0; sel.len()];
        digits(idx, sel_dims, &mut d);
        sel.iter().zip(&d).map(|(&k, &v)| st[k] * v).sum()
    };
    let kept_off: Vec<usize> = (0..out_dim).map(|i| offset(&kept, &kept_dims, i)).collect();
    let tr_off: Vec<usize> = (0..tr_dim)
        .map(|i| offset(&traced, &traced_dims, i))
        .collect();

    let mut out = CMatrix::zeros(out_dim, out_dim);
    for (r, &ro) in kept_off.iter().enumerate() {
        for (col, &co) in kept_off.iter().enumerate() {
            let mut acc = cr(0.0);
            for &t in &tr_off {
                acc += m[(ro + t, co + t)];
            }
            out[(r, col)] = acc;
        }
    }
    Ok(out)
}

/// Transposes the listed subsystems (blockwise transpose).
pub fn partial_transpose(m: &CMatrix, dims: &[usize], transpose_set: &[usize]) -> Result<CMatrix> {
    check_dims(m, dims)?;
    if transpose_set.iter().any(|&k| k >= dims.len()) {
        return Err(Error::DimensionMismatch(format!(
            "transpose set {:?} out of range for {} subsystems",
            transpose_set,
            dims.len()
        )));
    }
    let n = m.rows();
    let st = strides(dims);
    let mut rd = vec![0; dims.len()];
    let mut cd = vec![0; dims.len()];
    let mut out = CMatrix::zeros(n, n);
    for r in 0..n {
        digits(r, dims, &mut rd);
        for col in 0..n {
            digits(col, dims, &mut cd);
            let (mut r2, mut c2) = (r, col);
            for &k in transpose_set {
                let (a, b) = (rd[k], cd[k]);
                r2 = r2 - a * st[k] + b * st[k];
                c2 = c2 - b * st[k] + a * st[k];
            }
            out[(r2, c2)] = m[(r, col)];
        }
    }
    Ok(out)
}

/// Index map for a subsystem permutation: new subsystem `k` is old subsystem `perm[k]`.
fn permutation_map(dims: &[usize], perm: &[usize]) -> Result<Vec<usize>> {
    let mut seen = vec![false; dims.len()];
    if perm.len() != dims.len() {
        return Err(Error::DimensionMismatch(format!(
            "permutation {:?} for {} subsystems",
            perm,
            dims.len()
        )));
    }
    for &p in perm {
        if p >= dims.len() || seen[p] {
            return Err(Error::DimensionMismatch(format!(
                "invalid permutation {:?}",
                perm
            )));
        }
        seen[p] = true;
    }
    let new_dims: Vec<usize> = perm.iter().map(|&p| dims[p]).collect();
    let old_st = strides(dims);
    let total: usize = dims.iter().product();
    let mut d = vec![0; dims.len()];
    Ok((0..total)
        .map(|new_idx| {
            digits(new_idx, &new_dims, &mut d);
            perm.iter().zip(&d).map(|(&p, &v)| old_st[p] * v).sum()
        })
        .collect())
}

/// Reorders tensor factors of a vector; new factor `k` is old factor `perm[k]`.
pub fn permute_vector(v: &[C64], dims: &[usize], perm: &[usize]) -> Result<Vec<C64>> {
    if v.len() != dims.iter().product::<usize>() {
        return Err(Error::DimensionMismatch(format!(
            "vector of length {} for dims {:?}",
            v.len(),
            dims
        )));
    }
    let map = permutation_map(dims, perm)?;
    Ok(map.iter().map(|&old| v[old]).collect())
}

/// Reorders tensor factors of a square operator; new factor `k` is old factor `perm[k]`.
pub fn permute_subsystems(m: &CMatrix, dims: &[usize], perm: &[usize]) -> Result<CMatrix> {
    check_dims(m, dims)?;
    let map = permutation_map(dims, perm)?;
    let n = m.rows();
    Ok(CMatrix::from_fn(n, n, |r, col| m[(map[r], map[col])]))
}

/// Reorders tensor factors of a rectangular operator whose rows factor as
/// `out_dims` and columns as `in_dims`; new factor `k` is old factor `perm[k]`.
pub fn permute_operator(
    m: &CMatrix,
    out_dims: &[usize],
    in_dims: &[usize],
    perm: &[usize],
) -> Result<CMatrix> {
    if m.shape() != (out_dims.iter().product(), in_dims.iter().product()) {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} operator for dims {:?} <- {:?}",
            m.rows(),
            m.cols(),
            out_dims,
            in_dims
        )));
    }
    let rmap = permutation_map(out_dims, perm)?;
    let cmap = permutation_map(in_dims, perm)?;
    Ok(CMatrix::from_fn(m.rows(), m.cols(), |r, col| {
        m[(rmap[r], cmap[col])]
    }))
}

/// Unitary 2x2 rotation parameters zeroing the off-diagonal of `[[alpha, gamma], [gamma*, beta]]`.
///
/// The rotation acts on columns as `p' = c p - s e^{-iφ} q`, `q' = s p + c e^{-iφ} q`
/// where `γ = |γ| e^{iφ}`.
#[derive(Clone, Copy)]
struct Rotation {
    c: f64,
    s: f64,
    phase: C64, // e^{-iφ}
}

impl Rotation {
    fn new(alpha: f64, beta: f64, gamma: C64) -> Self {
        let g = gamma.norm();
        let phase = if g > 0.0 { (gamma / g).conj() } else { cr(1.0) };
        let zeta = (beta - alpha) / (2.0 * g);
        let t = if zeta >= 0.0 {
            1.0 / (zeta + (1.0 + zeta * zeta).sqrt())
        } else {
            -1.0 / (-zeta + (1.0 + zeta * zeta).sqrt())
        };
        let c = 1.0 / (1.0 + t * t).sqrt();
        Self { c, s: c * t, phase }
    }

    fn apply_cols(&self, m: &mut CMatrix, p: usize, q: usize) {
        let sp = self.phase * self.s;
        let cp = self.phase * self.c;
        for i in 0..m.rows {
            let a = m[(i, p)];
            let b = m[(i, q)];
            m[(i, p)] = a * self.c - b * sp;
            m[(i, q)] = a * self.s + b * cp;
        }
    }

    fn apply_rows_adjoint(&self, m: &mut CMatrix, p: usize, q: usize) {
        let sp = self.phase.conj() * self.s;
        let cp = self.phase.conj() * self.c;
        for j in 0..m.cols {
            let a = m[(p, j)];
            let b = m[(q, j)];
            m[(p, j)] = a * self.c - b * sp;
            m[(q, j)] = a * self.s + b * cp;
        }
    }
}

/// Eigen-decomposition of a Hermitian matrix.
#[derive(Clone, Debug)]
pub struct HermitianEigen {
    /// Eigenvalues in descending order.
    pub values: Vec<f64>,
    /// Unitary whose columns are the matching eigenvectors.
    pub vectors: CMatrix,
}

impl HermitianEigen {
    pub fn reconstruct(&self) -> CMatrix {
        let d = CMatrix::diag_real(&self.values);
        self.vectors.matmul(&d).matmul(&self.vectors.adjoint())
    }

    /// Applies a real function to the spectrum.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> CMatrix {
        let vals: Vec<f64> = self.values.iter().map(|&v| f(v)).collect();
        let d = CMatrix::diag_real(&vals);
        self.vectors.matmul(&d).matmul(&self.vectors.adjoint())
    }
}

/// Cyclic Jacobi eigensolver for Hermitian matrices.
pub fn hermitian_eig(m: &CMatrix) -> Result<HermitianEigen> {
    hermitian_eig_tol(m, DEFAULT_TOL)
}

/// As [`hermitian_eig`] with an explicit Hermiticity tolerance (scaled by `max(1, ‖m‖_F)`).
pub fn hermitian_eig_tol(m: &CMatrix, tol: f64) -> Result<HermitianEigen> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "eigensolver needs a square matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    let scale = m.frobenius_norm().max(1.0);
    let deviation = m.hermitian_deviation();
    if deviation > tol * scale {
        return Err(Error::NotHermitian { deviation });
    }
    let n = m.rows();
    let mut a = m.hermitian_part();
    let mut v = CMatrix::identity(n);
    let total = a.frobenius_norm();
    for _ in 0..JACOBI_MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)].norm_sqr())
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * total || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq.norm() <= 1e-300 {
                    continue;
                }
                let rot = Rotation::new(a[(p, p)].re, a[(q, q)].re, apq);
                rot.apply_cols(&mut a, p, q);
                rot.apply_rows_adjoint(&mut a, p, q);
                a[(p, q)] = cr(0.0);
                a[(q, p)] = cr(0.0);
                a[(p, p)] = cr(a[(p, p)].re);
                a[(q, q)] = cr(a[(q, q)].re);
                rot.apply_cols(&mut v, p, q);
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].re.total_cmp(&a[(i, i)].re).then(i.cmp(&j)));
    let values = order.iter().map(|&i| a[(i, i)].re).collect();
    let vectors = CMatrix::from_fn(n, n, |r, k| v[(r, order[k])]);
    Ok(HermitianEigen { values, vectors })
}

/// Principal square root of a positive semidefinite matrix.
pub fn psd_sqrt(m: &CMatrix) -> Result<CMatrix> {
    psd_sqrt_tol(m, DEFAULT_TOL)
}

pub fn psd_sqrt_tol(m: &CMatrix, tol: f64) -> Result<CMatrix> {
    let e = hermitian_eig_tol(m, tol)?;
    let scale = e.values.first().copied().unwrap_or(0.0).abs().max(1.0);
    if let Some(&min) = e.values.last() {
        if min < -tol * scale {
            return Err(Error::NotPositive {
                min_eigenvalue: min,
            });
        }
    }
    Ok(e.map(|x| x.max(0.0).sqrt()))
}

/// Inverse square root of a positive definite matrix.
pub fn psd_inv_sqrt(m: &CMatrix) -> Result<CMatrix> {
    let e = hermitian_eig(m)?;
    if let Some(&min) = e.values.last() {
        if min <= 0.0 {
            return Err(Error::NotPositive {
                min_eigenvalue: min,
            });
        }
    }
    Ok(e.map(|x| 1.0 / x.sqrt()))
}

/// Singular value decomposition `m = U diag(s) V†` with `U` of shape `rows x cols`.
///
/// Columns of `U` belonging to zero singular values are zero vectors; use
/// [`polar_decompose`] when an isometric completion is needed.
#[derive(Clone, Debug)]
pub struct Svd {
    pub u: CMatrix,
    /// Singular values in descending order.
    pub s: Vec<f64>,
    /// Square unitary of size `cols`.
    pub v: CMatrix,
}

/// One-sided (Hestenes) Jacobi SVD.
///
/// Orthogonalizes the columns of `m` in place; each rotation is a Jacobi
/// step on the implicit Gram matrix `m†m`. Works for any shape.
pub fn svd(m: &CMatrix) -> Svd {
    let (rows, cols) = m.shape();
    let mut w = m.clone();
    let mut v = CMatrix::identity(cols);
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..cols {
            for q in (p + 1)..cols {
                let mut alpha = 0.0;
                let mut beta = 0.0;
                let mut gamma = cr(0.0);
                for i in 0..rows {
                    let a = w.data[i * cols + p];
                    let b = w.data[i * cols + q];
                    alpha += a.norm_sqr();
                    beta += b.norm_sqr();
                    gamma += a.conj() * b;
                }
                if alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                if gamma.norm() <= 1e-15 * (alpha * beta).sqrt() {
                    continue;
                }
                let rot = Rotation::new(alpha, beta, gamma);
                rot.apply_cols(&mut w, p, q);
                rot.apply_cols(&mut v, p, q);
                rotated = true;
            }
        }
        if !rotated {
            break;
        }
    }
    let norms: Vec<f64> = (0..cols)
        .map(|j| (0..rows).map(|i| w[(i, j)].norm_sqr()).sum::<f64>().sqrt())
        .collect();
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]).then(i.cmp(&j)));
    let s: Vec<f64> = order.iter().map(|&j| norms[j]).collect();
    let u = CMatrix::from_fn(rows, cols, |i, k| {
        let j = order[k];
        if norms[j] > 0.0 {
            w[(i, j)] / norms[j]
        } else {
            cr(0.0)
        }
    });
    let v = CMatrix::from_fn(cols, cols, |i, k| v[(i, order[k])]);
    Svd { u, s, v }
}

pub fn singular_values(m: &CMatrix) -> Vec<f64> {
    svd(m).s
}

/// Trace norm: the sum of singular values.
pub fn trace_norm(m: &CMatrix) -> f64 {
    singular_values(m).iter().sum()
}

/// Polar decomposition `m = u a`.
#[derive(Clone, Debug)]
pub struct Polar {
    /// Isometry (`u† u = I`).
    pub u: CMatrix,
    /// Positive semidefinite factor `sqrt(m† m)`.
    pub a: CMatrix,
}

/// Polar decomposition of a matrix with `rows >= cols`.
///
/// On the null space of `a` the isometry is completed by orthonormalizing the
/// null right-singular vectors against the range, so a positive
/// semidefinite input returns `u = I`.
pub fn polar_decompose(m: &CMatrix) -> Result<Polar> {
    let (rows, cols) = m.shape();
    if rows < cols {
        return Err(Error::DimensionMismatch(format!(
            "polar decomposition needs rows >= cols, got {}x{}",
            rows, cols
        )));
    }
    let Svd { u, s, v } = svd(m);
    let smax = s.first().copied().unwrap_or(0.0);
    let threshold = smax * 1e-13;
    let mut basis: Vec<Vec<C64>> = Vec::with_capacity(cols);
    let mut null_slots = Vec::new();
    for (k, &sk) in s.iter().enumerate().take(cols) {
        if sk > threshold && sk > 0.0 {
            basis.push(u.col(k));
        } else {
            basis.push(Vec::new());
            null_slots.push(k);
        }
    }
    // Complete with the null right-singular vectors themselves where possible,
    // falling back to computational basis vectors.
    let mut fallback = 0usize;
    for &k in &null_slots {
        let mut candidate: Vec<C64> = (0..rows)
            .map(|i| if i < cols { v[(i, k)] } else { cr(0.0) })
            .collect();
        loop {
            let established: Vec<&Vec<C64>> = basis.iter().filter(|b| !b.is_empty()).collect();
            // two passes of Gram-Schmidt
            for _ in 0..2 {
                for b in &established {
                    let proj: C64 = b.iter().zip(&candidate).map(|(x, y)| x.conj() * y).sum();
                    for (cv, bv) in candidate.iter_mut().zip(b.iter()) {
                        *cv -= proj * bv;
                    }
                }
            }
            let norm = candidate.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if norm > 0.5 {
                for z in candidate.iter_mut() {
                    *z /= norm;
                }
                break;
            }
            candidate = (0..rows)
                .map(|i| if i == fallback { cr(1.0) } else { cr(0.0) })
                .collect();
            fallback += 1;
        }
        basis[k] = candidate;
    }
    let u_full = CMatrix::from_fn(rows, cols, |i, k| basis[k][i]);
    let u_iso = u_full.matmul(&v.adjoint());
    let d = CMatrix::diag_real(&s);
    let a = v.matmul(&d).matmul(&v.adjoint());
    Ok(Polar { u: u_iso, a })
}

/// Operator-Schmidt decomposition `m = Σ_k s_k A_k ⊗ B_k` across a bipartition.
#[derive(Clone, Debug)]
pub struct OperatorSchmidt {
    /// Coefficients in descending order.
    pub coefficients: Vec<f64>,
    /// Orthonormal (Hilbert-Schmidt) factors on the first subsystem.
    pub left: Vec<CMatrix>,
    /// Orthonormal (Hilbert-Schmidt) factors on the second subsystem.
    pub right: Vec<CMatrix>,
}

impl OperatorSchmidt {
    /// Number of coefficients above `tol * max(s_0, tiny)`.
    pub fn rank(&self, tol: f64) -> usize {
        let top = self.coefficients.first().copied().unwrap_or(0.0);
        if top == 0.0 {
            return 0;
        }
        self.coefficients.iter().filter(|&&s| s > tol * top).count()
    }
}

/// Operator-Schmidt decomposition via realignment and SVD.
pub fn operator_schmidt(m: &CMatrix, dims: (usize, usize)) -> Result<OperatorSchmidt> {
    check_dims(m, &[dims.0, dims.1])?;
    operator_schmidt_rect(m, dims, dims)
}

/// Operator-Schmidt decomposition of a possibly rectangular operator
/// `(A_in ⊗ B_in) → (A_out ⊗ B_out)`, given `out = (A_out, B_out)` and `inp = (A_in, B_in)`.
pub fn operator_schmidt_rect(
    m: &CMatrix,
    out: (usize, usize),
    inp: (usize, usize),
) -> Result<OperatorSchmidt> {
    let (oa, ob) = out;
    let (ia, ib) = inp;
    if m.shape() != (oa * ob, ia * ib) {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} operator for output dims {:?} and input dims {:?}",
            m.rows(),
            m.cols(),
            out,
            inp
        )));
    }
    let realigned = CMatrix::from_fn(oa * ia, ob * ib, |ra, cb| {
        let (i, ip) = (ra / ia, ra % ia);
        let (j, jp) = (cb / ib, cb % ib);
        m[(i * ob + j, ip * ib + jp)]
    });
    let Svd { u, s, v } = svd(&realigned);
    let keep = s.len().min(oa * ia);
    let left = (0..keep)
        .map(|k| CMatrix::from_fn(oa, ia, |i, ip| u[(i * ia + ip, k)]))
        .collect();
    let right = (0..keep)
        .map(|k| CMatrix::from_fn(ob, ib, |j, jp| v[(j * ib + jp, k)].conj()))
        .collect();
    Ok(OperatorSchmidt {
        coefficients: s[..keep].to_vec(),
        left,
        right,
    })
}

/// Real coordinates of a Hermitian matrix: the diagonal, then real and
/// imaginary parts of the strict upper triangle. Length `dim²`.
pub fn hermitian_to_real_vec(m: &CMatrix) -> Vec<f64> {
    let n = m.rows();
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        out.push(m[(i, i)].re);
    }
    for i in 0..n {
        for j in (i + 1)..n {
            out.push(m[(i, j)].re);
            out.push(m[(i, j)].im);
        }
    }
    out
}

/// Kronecker product of real vectors.
pub fn kron_real(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for &x in a {
        for &y in b {
            out.push(x * y);
        }
    }
    out
}
