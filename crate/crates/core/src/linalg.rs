//! Dense complex linear algebra used by every analysis in the crate.
//!
//! Matrices are small (at most a few hundred rows), so everything here is
//! full-decomposition based: spectral norms come from a complete SVD and
//! eigenvectors from a complex Schur factorization.

use std::fmt;
use std::ops::{Add, Mul, Sub};

use nalgebra::{DMatrix, DVector, Schur};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub const DEFAULT_TOL_EIG: f64 = 1e-9;
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

const SCHUR_MAX_SWEEPS_PER_ROW: usize = 200;
const SCHUR_RETRIES: u64 = 4;

pub(crate) const fn c64(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Dense complex matrix with finite entries.
#[derive(Clone, PartialEq)]
pub struct CMatrix(DMatrix<Complex64>);

impl CMatrix {
    pub fn new(inner: DMatrix<Complex64>) -> Result<Self> {
        if inner.iter().any(|z| !z.is_finite()) {
            return Err(Error::InvalidInput("matrix has non-finite entries".into()));
        }
        Ok(Self(inner))
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::DimensionMismatch {
                expected: format!("{} entries for {rows}x{cols}", rows * cols),
                got: format!("{} entries", data.len()),
            });
        }
        Self::new(DMatrix::from_row_slice(rows, cols, &data))
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl FnMut(usize, usize) -> Complex64) -> Self {
        Self(DMatrix::from_fn(rows, cols, f))
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self(DMatrix::zeros(rows, cols))
    }

    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    pub fn from_diagonal(diag: &[Complex64]) -> Self {
        let n = diag.len();
        Self::from_fn(n, n, |i, j| if i == j { diag[i] } else { c64(0.0, 0.0) })
    }

    /// Block-diagonal matrix `diag(a, b)`.
    pub fn block_diag(a: &CMatrix, b: &CMatrix) -> Self {
        let (ra, ca) = a.shape();
        let (rb, cb) = b.shape();
        let mut out = DMatrix::zeros(ra + rb, ca + cb);
        out.view_mut((0, 0), (ra, ca)).copy_from(&a.0);
        out.view_mut((ra, ca), (rb, cb)).copy_from(&b.0);
        Self(out)
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.0.shape()
    }

    pub fn is_square(&self) -> bool {
        self.rows() == self.cols()
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.0[(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, value: Complex64) {
        self.0[(i, j)] = value;
    }

    pub fn as_inner(&self) -> &DMatrix<Complex64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<Complex64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|z| z.is_finite())
    }

    /// Entries in row-major order.
    pub fn row_major(&self) -> Vec<Complex64> {
        let (r, c) = self.shape();
        let mut out = Vec::with_capacity(r * c);
        for i in 0..r {
            for j in 0..c {
                out.push(self.0[(i, j)]);
            }
        }
        out
    }

    pub fn adjoint(&self) -> Self {
        Self(self.0.adjoint())
    }

    pub fn scale(&self, c: Complex64) -> Self {
        Self(self.0.map(|z| z * c))
    }

    /// `self - shift·I`.
    pub fn shifted(&self, shift: Complex64) -> Self {
        let mut m = self.0.clone();
        for i in 0..m.nrows().min(m.ncols()) {
            m[(i, i)] -= shift;
        }
        Self(m)
    }

    pub fn pow(&self, k: usize) -> Result<Self> {
        self.require_square()?;
        let mut acc = DMatrix::identity(self.rows(), self.cols());
        for _ in 0..k {
            acc = &acc * &self.0;
        }
        Ok(Self(acc))
    }

    pub fn mul_vec(&self, v: &CVector) -> CVector {
        CVector(&self.0 * &v.0)
    }

    pub fn column(&self, j: usize) -> CVector {
        CVector(self.0.column(j).into_owned())
    }

    pub fn from_columns(cols: &[CVector]) -> Result<Self> {
        let Some(first) = cols.first() else {
            return Err(Error::InvalidInput("no columns".into()));
        };
        let r = first.len();
        if cols.iter().any(|c| c.len() != r) {
            return Err(Error::InvalidInput("columns of unequal length".into()));
        }
        Ok(Self::from_fn(r, cols.len(), |i, j| cols[j].0[i]))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Inverse via LU; `None` if singular.
    pub fn try_inverse(&self) -> Option<Self> {
        if !self.is_square() {
            return None;
        }
        self.0.clone().try_inverse().map(Self)
    }

    pub(crate) fn require_square(&self) -> Result<()> {
        if self.is_square() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: "square matrix".into(),
                got: format!("{}x{}", self.rows(), self.cols()),
            })
        }
    }
}

impl fmt::Debug for CMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CMatrix{}", self.0)
    }
}

impl Mul for &CMatrix {
    type Output = CMatrix;
    fn mul(self, rhs: &CMatrix) -> CMatrix {
        CMatrix(&self.0 * &rhs.0)
    }
}

impl Add for &CMatrix {
    type Output = CMatrix;
    fn add(self, rhs: &CMatrix) -> CMatrix {
        CMatrix(&self.0 + &rhs.0)
    }
}

impl Sub for &CMatrix {
    type Output = CMatrix;
    fn sub(self, rhs: &CMatrix) -> CMatrix {
        CMatrix(&self.0 - &rhs.0)
    }
}

/// On-disk matrix layout: `{"rows": r, "cols": c, "data": [[re, im], ...]}`, row-major.
#[derive(Serialize, Deserialize)]
struct MatrixJson {
    rows: usize,
    cols: usize,
    data: Vec<[f64; 2]>,
}

impl Serialize for CMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MatrixJson {
            rows: self.rows(),
            cols: self.cols(),
            data: self.row_major().iter().map(|z| [z.re, z.im]).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for CMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = MatrixJson::deserialize(d)?;
        let data = raw.data.iter().map(|p| c64(p[0], p[1])).collect();
        CMatrix::from_row_major(raw.rows, raw.cols, data).map_err(serde::de::Error::custom)
    }
}

impl CMatrix {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidInput(format!("matrix JSON: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("matrix serialization cannot fail")
    }
}

/// Dense complex column vector.
#[derive(Clone, PartialEq)]
pub struct CVector(DVector<Complex64>);

impl CVector {
    pub fn from_vec(data: Vec<Complex64>) -> Self {
        Self(DVector::from_vec(data))
    }

    pub fn zeros(n: usize) -> Self {
        Self(DVector::zeros(n))
    }

    pub fn basis(n: usize, k: usize) -> Self {
        let mut v = DVector::zeros(n);
        v[k] = c64(1.0, 0.0);
        Self(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> Complex64 {
        self.0[i]
    }

    pub fn as_slice(&self) -> &[Complex64] {
        self.0.as_slice()
    }

    pub fn as_inner(&self) -> &DVector<Complex64> {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    /// ⟨self|other⟩, antilinear in `self`.
    pub fn inner(&self, other: &CVector) -> Complex64 {
        self.0.dotc(&other.0)
    }

    pub fn scale(&self, c: Complex64) -> Self {
        Self(&self.0 * c)
    }

    pub fn normalized(&self) -> Self {
        let n = self.norm();
        Self(&self.0 / c64(n, 0.0))
    }

    pub fn add_scaled(&self, c: Complex64, other: &CVector) -> Self {
        Self(&self.0 + &other.0 * c)
    }
}

impl Sub for &CVector {
    type Output = CVector;
    fn sub(self, rhs: &CVector) -> CVector {
        CVector(&self.0 - &rhs.0)
    }
}

impl fmt::Debug for CVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.0.iter()).finish()
    }
}

impl Serialize for CVector {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let pairs: Vec<[f64; 2]> = self.0.iter().map(|z| [z.re, z.im]).collect();
        pairs.serialize(s)
    }
}

impl<'de> Deserialize<'de> for CVector {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let pairs = Vec::<[f64; 2]>::deserialize(d)?;
        Ok(CVector::from_vec(pairs.iter().map(|p| c64(p[0], p[1])).collect()))
    }
}

/// Largest singular value.
pub fn spectral_norm(a: &CMatrix) -> Result<f64> {
    Ok(singular_values(a)?.into_iter().fold(0.0, f64::max))
}

/// All singular values, descending.
pub fn singular_values(a: &CMatrix) -> Result<Vec<f64>> {
    if !a.is_finite() {
        return Err(Error::InvalidInput("matrix has non-finite entries".into()));
    }
    if a.rows() == 0 || a.cols() == 0 {
        return Ok(Vec::new());
    }
    let svd = a.0.clone().svd(false, false);
    let mut s: Vec<f64> = svd.singular_values.iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    Ok(s)
}

/// σ_max/σ_min; infinite for singular input.
pub fn condition_number(a: &CMatrix) -> Result<f64> {
    let s = singular_values(a)?;
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => Ok(hi / lo),
        _ => Ok(f64::INFINITY),
    }
}

/// Full SVD `A = U diag(s) V†` with singular values sorted descending.
pub(crate) struct Svd {
    pub u: DMatrix<Complex64>,
    pub s: Vec<f64>,
    pub v_t: DMatrix<Complex64>,
}

pub(crate) fn svd_full(a: &CMatrix) -> Result<Svd> {
    if !a.is_finite() {
        return Err(Error::InvalidInput("matrix has non-finite entries".into()));
    }
    let svd = a.0.clone().svd(true, true);
    let (Some(u), Some(v_t)) = (svd.u, svd.v_t) else {
        return Err(Error::Numerical("SVD did not return singular vectors".into()));
    };
    let s: Vec<f64> = svd.singular_values.iter().copied().collect();
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&i, &j| s[j].total_cmp(&s[i]));
    let u = DMatrix::from_fn(u.nrows(), order.len(), |i, k| u[(i, order[k])]);
    let v_t = DMatrix::from_fn(order.len(), v_t.ncols(), |k, j| v_t[(order[k], j)]);
    let s = order.iter().map(|&k| s[k]).collect();
    Ok(Svd { u, s, v_t })
}

/// Unit vector spanning the numerical kernel of a square matrix: the right
/// singular vector of the smallest singular value.
pub fn kernel_vector(a: &CMatrix) -> Result<CVector> {
    a.require_square()?;
    let svd = svd_full(a)?;
    let k = svd.s.len() - 1;
    let v = svd.v_t.row(k).adjoint();
    Ok(CVector(v).normalized())
}

/// Minimum-norm least-squares solution and its diagnostics.
#[derive(Clone, Debug)]
pub struct LeastNormSolution {
    pub x: CVector,
    /// ‖Ax − b‖.
    pub residual: f64,
    pub rank: usize,
    /// ‖b‖, kept for the consistency check.
    pub rhs_norm: f64,
}

impl LeastNormSolution {
    /// Returns `x` if `b` was (numerically) in the range of `A`.
    pub fn require_consistent(self, rel_tol: f64) -> Result<CVector> {
        let allowed = rel_tol * self.rhs_norm;
        if self.residual > allowed {
            Err(Error::NoSolution {
                residual: self.residual,
                allowed,
            })
        } else {
            Ok(self.x)
        }
    }
}

/// Minimum-norm `x` minimizing ‖Ax − b‖; singular values below
/// `rank_tol·σ_max` are treated as zero.
pub fn solve_least_norm(a: &CMatrix, b: &CVector, rank_tol: f64) -> Result<LeastNormSolution> {
    if b.len() != a.rows() {
        return Err(Error::DimensionMismatch {
            expected: format!("right-hand side of length {}", a.rows()),
            got: format!("length {}", b.len()),
        });
    }
    if !(rank_tol >= 0.0) {
        return Err(Error::InvalidInput(format!("rank_tol must be >= 0, got {rank_tol}")));
    }
    let svd = svd_full(a)?;
    let smax = svd.s.first().copied().unwrap_or(0.0);
    let rank = svd.s.iter().filter(|&&s| s > rank_tol * smax && s > 0.0).count();
    Ok(apply_pinv(a, &svd, b, rank))
}

/// Least-norm solve with the rank fixed by the caller.
pub(crate) fn solve_with_rank(a: &CMatrix, b: &CVector, rank: usize) -> Result<LeastNormSolution> {
    let svd = svd_full(a)?;
    Ok(apply_pinv(a, &svd, b, rank.min(svd.s.len())))
}

fn apply_pinv(a: &CMatrix, svd: &Svd, b: &CVector, rank: usize) -> LeastNormSolution {
    let mut x = DVector::<Complex64>::zeros(a.cols());
    for k in 0..rank {
        let coeff = svd.u.column(k).dotc(&b.0) / svd.s[k];
        x += svd.v_t.row(k).adjoint() * coeff;
    }
    let x = CVector(x);
    let residual = (&a.mul_vec(&x) - b).norm();
    LeastNormSolution {
        x,
        residual,
        rank,
        rhs_norm: b.norm(),
    }
}

/// Householder QR: `A = Q R` with `Q` unitary (m×m for square input).
pub fn qr(a: &CMatrix) -> (CMatrix, CMatrix) {
    let qr = a.0.clone().qr();
    (CMatrix(qr.q()), CMatrix(qr.r()))
}

/// How left eigenvectors are obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeftVectorMethod {
    /// Left and right vectors from the same Schur factorization. Near an EP
    /// both then belong to one and the same (roundoff-perturbed) matrix.
    #[default]
    SharedSchur,
    /// Independent Schur factorization of H†, paired to the right
    /// eigenvalues by proximity.
    Adjoint,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EigOptions {
    pub tol_eig: f64,
    pub left: LeftVectorMethod,
}

impl Default for EigOptions {
    fn default() -> Self {
        Self {
            tol_eig: DEFAULT_TOL_EIG,
            left: LeftVectorMethod::SharedSchur,
        }
    }
}

/// Eigenvalues with unit right and left eigenvectors, sorted by (Re E, Im E).
#[derive(Clone, Debug)]
pub struct EigenSystem {
    pub eigenvalues: Vec<Complex64>,
    pub right: Vec<CVector>,
    pub left: Vec<CVector>,
    /// `pairing[i]` is the index, in the decomposition the left vectors came
    /// from, of the left vector attached to `eigenvalues[i]`.
    pub pairing: Vec<usize>,
    /// Spectral norm of the decomposed matrix.
    pub matrix_norm: f64,
}

impl EigenSystem {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }
}

pub fn eig_full(h: &CMatrix, tol_eig: f64) -> Result<EigenSystem> {
    eig_full_with(
        h,
        &EigOptions {
            tol_eig,
            ..EigOptions::default()
        },
    )
}

pub fn eig_full_with(h: &CMatrix, opts: &EigOptions) -> Result<EigenSystem> {
    h.require_square()?;
    if h.rows() == 0 {
        return Err(Error::InvalidInput("empty matrix".into()));
    }
    if !h.is_finite() {
        return Err(Error::InvalidInput("matrix has non-finite entries".into()));
    }
    let norm = spectral_norm(h)?;

    let raw = schur_eigen(h)?;
    let (values, right, left, pairing) = match opts.left {
        LeftVectorMethod::SharedSchur => {
            let pairing = (0..raw.values.len()).collect();
            (raw.values, raw.right, raw.left, pairing)
        }
        LeftVectorMethod::Adjoint => {
            let adj = schur_eigen(&h.adjoint())?;
            let targets: Vec<Complex64> = adj.values.iter().map(|z| z.conj()).collect();
            let pairing = pair_by_proximity(&raw.values, &targets, opts.tol_eig * norm.max(1e-300))?;
            // right eigenvectors of H† are the left eigenvectors of H
            let left = pairing.iter().map(|&j| adj.right[j].clone()).collect();
            (raw.values, raw.right, left, pairing)
        }
    };

    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| {
        values[i]
            .re
            .total_cmp(&values[j].re)
            .then(values[i].im.total_cmp(&values[j].im))
    });
    let sys = EigenSystem {
        eigenvalues: order.iter().map(|&i| values[i]).collect(),
        right: order.iter().map(|&i| right[i].clone()).collect(),
        left: order.iter().map(|&i| left[i].clone()).collect(),
        pairing: order.iter().map(|&i| pairing[i]).collect(),
        matrix_norm: norm,
    };
    check_residuals(h, &sys, opts.tol_eig)?;
    Ok(sys)
}

fn check_residuals(h: &CMatrix, sys: &EigenSystem, tol: f64) -> Result<()> {
    let allowed = tol * sys.matrix_norm;
    let h_adj = h.adjoint();
    for (i, e) in sys.eigenvalues.iter().enumerate() {
        let rr = (&h.mul_vec(&sys.right[i]) - &sys.right[i].scale(*e)).norm();
        let rl = (&h_adj.mul_vec(&sys.left[i]) - &sys.left[i].scale(e.conj())).norm();
        if rr > allowed || rl > allowed {
            return Err(Error::Numerical(format!(
                "eigenpair {i} residuals (right {rr:e}, left {rl:e}) exceed {allowed:e}"
            )));
        }
    }
    Ok(())
}

/// Matches each `values[i]` to the closest unused `targets[j]`, rejecting ties.
fn pair_by_proximity(values: &[Complex64], targets: &[Complex64], tie_tol: f64) -> Result<Vec<usize>> {
    let mut used = vec![false; targets.len()];
    let mut out = Vec::with_capacity(values.len());
    for (i, v) in values.iter().enumerate() {
        let mut dists: Vec<(f64, usize)> = targets
            .iter()
            .enumerate()
            .filter(|(j, _)| !used[*j])
            .map(|(j, t)| ((t - v).norm(), j))
            .collect();
        dists.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let Some(&(d0, j0)) = dists.first() else {
            return Err(Error::Internal("ran out of pairing candidates".into()));
        };
        if let Some(&(d1, j1)) = dists.get(1) {
            if d1 - d0 <= tie_tol && (targets[j0] - targets[j1]).norm() > tie_tol {
                return Err(Error::Pairing {
                    right: i,
                    first: j0,
                    second: j1,
                });
            }
        }
        used[j0] = true;
        out.push(j0);
    }
    Ok(out)
}

struct RawEigen {
    values: Vec<Complex64>,
    right: Vec<CVector>,
    left: Vec<CVector>,
}

/// Francis iterations without exceptional shifts can stall on cyclic
/// structure (a shift chain with zero diagonal, for instance). On stalling,
/// the factorization is retried on `V H V†` for fixed pseudo-random unitaries V.
fn schur_with_retries(h: &CMatrix) -> Result<(DMatrix<Complex64>, DMatrix<Complex64>)> {
    let m = h.rows();
    let max_iter = SCHUR_MAX_SWEEPS_PER_ROW * m.max(1);
    if let Some(s) = Schur::try_new(h.0.clone(), f64::EPSILON, max_iter) {
        return Ok(s.unpack());
    }
    for attempt in 0..SCHUR_RETRIES {
        let mut rng = ChaCha8Rng::seed_from_u64(attempt);
        let g = CMatrix::from_fn(m, m, |_, _| c64(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)));
        let v = qr(&g).0 .0;
        if let Some(s) = Schur::try_new(&v * &h.0 * v.adjoint(), f64::EPSILON, max_iter) {
            let (z, t) = s.unpack();
            return Ok((v.adjoint() * z, t));
        }
    }
    Err(Error::Numerical("Schur iteration did not converge".into()))
}

/// Complex Schur `H = Z T Z†`, then eigenvectors of the triangular factor by
/// back substitution (right) and forward substitution (left).
fn schur_eigen(h: &CMatrix) -> Result<RawEigen> {
    let m = h.rows();
    let (z, t) = schur_with_retries(h)?;
    let smin = (f64::EPSILON * t.norm()).max(f64::MIN_POSITIVE);

    let mut values = Vec::with_capacity(m);
    let mut right = Vec::with_capacity(m);
    let mut left = Vec::with_capacity(m);
    for k in 0..m {
        let lam = t[(k, k)];
        let pivot = |j: usize| {
            let d = t[(j, j)] - lam;
            if d.norm() < smin {
                c64(smin, 0.0)
            } else {
                d
            }
        };

        // (T − λI) y = 0 with y_k = 1, y_j = 0 for j > k
        let mut y = DVector::<Complex64>::zeros(m);
        y[k] = c64(1.0, 0.0);
        for j in (0..k).rev() {
            let mut s = c64(0.0, 0.0);
            for p in j + 1..=k {
                s += t[(j, p)] * y[p];
            }
            y[j] = -s / pivot(j);
            rescale_if_large(&mut y);
        }

        // x (T − λI) = 0 with x_k = 1, x_j = 0 for j < k
        let mut x = DVector::<Complex64>::zeros(m);
        x[k] = c64(1.0, 0.0);
        for j in k + 1..m {
            let mut s = c64(0.0, 0.0);
            for p in k..j {
                s += x[p] * t[(p, j)];
            }
            x[j] = -s / pivot(j);
            rescale_if_large(&mut x);
        }

        values.push(lam);
        right.push(CVector(&z * y).normalized());
        left.push(CVector(&z * x.conjugate()).normalized());
    }
    Ok(RawEigen {
        values,
        right,
        left,
    })
}

fn rescale_if_large(v: &mut DVector<Complex64>) {
    let big = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if big > 1e150 {
        *v /= c64(big, 0.0);
    }
}
