//! Fully asymmetric open hopping chain: an analytically solvable EP of any
//! order, perturbed by a single coupling from the last site back to the first.

use std::f64::consts::PI;
use std::fmt::Write as _;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{c64, CMatrix};
use crate::response::{predicted_petermann, predicted_rigidity};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HatanoParams {
    pub n: usize,
    #[serde(with = "crate::serde_complex")]
    pub e0: Complex64,
    #[serde(with = "crate::serde_complex")]
    pub a: Complex64,
    pub eps_grid: Vec<f64>,
}

impl HatanoParams {
    pub fn new(n: usize, e0: Complex64, a: Complex64, eps_grid: Vec<f64>) -> Result<Self> {
        let p = Self { n, e0, a, eps_grid };
        p.validate()?;
        Ok(p)
    }

    /// A = 1, E0 = 0, n = 3 on the default grid.
    pub fn standard() -> Self {
        Self {
            n: 3,
            e0: c64(0.0, 0.0),
            a: c64(1.0, 0.0),
            eps_grid: default_eps_grid(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidInput(format!("order must be >= 2, got {}", self.n)));
        }
        if self.a.norm() == 0.0 || !self.a.is_finite() || !self.e0.is_finite() {
            return Err(Error::InvalidInput("hopping A must be finite and nonzero".into()));
        }
        if self.eps_grid.iter().any(|&e| !(e > 0.0) || !e.is_finite()) {
            return Err(Error::InvalidInput("perturbation strengths must be positive".into()));
        }
        if self.eps_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput("perturbation grid must be strictly increasing".into()));
        }
        Ok(())
    }

    /// ξ = |A|^{n−1}.
    pub fn xi(&self) -> f64 {
        self.a.norm().powi(self.n as i32 - 1)
    }

    /// x = |ΔE/A| = (ε/|A|)^{1/n}.
    pub fn scaled_shift(&self, eps: f64) -> f64 {
        (eps / self.a.norm()).powf(1.0 / self.n as f64)
    }
}

/// `points` log-spaced values from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.log10(), hi.log10());
            (0..points)
                .map(|k| 10f64.powf(a + (b - a) * k as f64 / (points - 1) as f64))
                .collect()
        }
    }
}

pub fn default_eps_grid() -> Vec<f64> {
    log_grid(1e-10, 1e-1, 40)
}

/// `(H_EP, H_1)`: E0 on the diagonal and A on the superdiagonal; H_1 has a
/// single 1 in the lower-left corner.
pub fn build_model(p: &HatanoParams) -> Result<(CMatrix, CMatrix)> {
    p.validate()?;
    let n = p.n;
    let zero = c64(0.0, 0.0);
    let h_ep = CMatrix::from_fn(n, n, |i, j| {
        if i == j {
            p.e0
        } else if j == i + 1 {
            p.a
        } else {
            zero
        }
    });
    let h_1 = CMatrix::from_fn(n, n, |i, j| if i == n - 1 && j == 0 { c64(1.0, 0.0) } else { zero });
    Ok((h_ep, h_1))
}

#[derive(Clone, Debug, Serialize)]
pub struct Shift {
    /// |E_l − E_EP| = (ε|A|^{n−1})^{1/n}.
    pub magnitude: f64,
    /// E_l − E_EP = ε^{1/n} A^{(n−1)/n} e^{i2πl/n}, l = 1..n.
    #[serde(with = "crate::serde_complex::vec")]
    pub branches: Vec<Complex64>,
}

pub fn exact_shift(p: &HatanoParams, eps: f64) -> Result<Shift> {
    p.validate()?;
    if !(eps > 0.0) {
        return Err(Error::InvalidInput(format!("eps must be positive, got {eps}")));
    }
    let nf = p.n as f64;
    let base = eps.powf(1.0 / nf) * p.a.powf((nf - 1.0) / nf);
    let branches = (1..=p.n)
        .map(|l| base * Complex64::from_polar(1.0, 2.0 * PI * l as f64 / nf))
        .collect();
    Ok(Shift {
        magnitude: p.scaled_shift(eps) * p.a.norm(),
        branches,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ExactRigidity {
    /// x = |ΔE/A|.
    pub x: f64,
    pub r: f64,
    /// 1/r².
    pub k: f64,
    /// x < 1; beyond it the chain is far from the EP.
    pub in_regime: bool,
}

fn rigidity_with_denominator(p: &HatanoParams, eps: f64, power: i32) -> Result<ExactRigidity> {
    p.validate()?;
    if !(eps > 0.0) {
        return Err(Error::InvalidInput(format!("eps must be positive, got {eps}")));
    }
    let x = p.scaled_shift(eps);
    let n = p.n as i32;
    let denom: f64 = (0..n).map(|j| x.powi(power * j)).sum();
    let r = p.n as f64 * x.powi(n - 1) / denom;
    Ok(ExactRigidity {
        x,
        r,
        k: 1.0 / (r * r),
        in_regime: x < 1.0,
    })
}

/// Closed form r = n·x^{n−1} / Σ_{j=1}^{n} x^{j−1}.
pub fn exact_rigidity(p: &HatanoParams, eps: f64) -> Result<ExactRigidity> {
    rigidity_with_denominator(p, eps, 1)
}

/// |⟨L|R⟩| of the unit eigenvectors evaluated in closed form:
/// r = n·x^{n−1} / Σ_{j=1}^{n} x^{2(j−1)}.
///
/// The right eigenvector has components (ΔE/A)^{k−1}, the left one
/// (A*/ΔE*)^{k−1}; their overlap is n before normalization. This is what a
/// numerical eigendecomposition reproduces, and it differs from
/// [`exact_rigidity`] at order x.
pub fn overlap_rigidity(p: &HatanoParams, eps: f64) -> Result<ExactRigidity> {
    rigidity_with_denominator(p, eps, 2)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub eps: f64,
    pub x: f64,
    pub r_exact: f64,
    pub r_pred: f64,
    pub k_exact: f64,
    pub k_pred: f64,
    pub r_overlap: f64,
    pub k_overlap: f64,
    pub in_regime: bool,
}

/// Exact against leading-order rigidity and Petermann factor over the grid.
pub fn rigidity_sweep(p: &HatanoParams) -> Result<Vec<SweepRow>> {
    p.validate()?;
    let xi = p.xi();
    p.eps_grid
        .par_iter()
        .map(|&eps| {
            let exact = exact_rigidity(p, eps)?;
            let overlap = overlap_rigidity(p, eps)?;
            let de = exact_shift(p, eps)?.magnitude;
            let r_pred = predicted_rigidity(p.n, de, xi)?;
            let k_pred = predicted_petermann(p.n, de, xi)?;
            Ok(SweepRow {
                eps,
                x: exact.x,
                r_exact: exact.r,
                r_pred: r_pred.value,
                k_exact: exact.k,
                k_pred: k_pred.value,
                r_overlap: overlap.r,
                k_overlap: overlap.k,
                in_regime: exact.in_regime,
            })
        })
        .collect()
}

/// Header `eps,r_exact,r_pred,K_exact,K_pred`, plus `r_overlap,K_overlap`
/// when `with_overlap` is set.
pub fn sweep_csv(rows: &[SweepRow], with_overlap: bool) -> String {
    let mut out = String::from("eps,r_exact,r_pred,K_exact,K_pred");
    if with_overlap {
        out.push_str(",r_overlap,K_overlap");
    }
    out.push('\n');
    for row in rows {
        write!(
            out,
            "{:e},{:e},{:e},{:e},{:e}",
            row.eps, row.r_exact, row.r_pred, row.k_exact, row.k_pred
        )
        .unwrap();
        if with_overlap {
            write!(out, ",{:e},{:e}", row.r_overlap, row.k_overlap).unwrap();
        }
        out.push('\n');
    }
    out
}

/// Least-squares slope of log r_exact against log ε for grid points in `[lo, hi]`.
pub fn loglog_slope(rows: &[SweepRow], lo: f64, hi: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.eps >= lo && r.eps <= hi)
        .map(|r| (r.eps.ln(), r.r_exact.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let m = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), p| (a + p.0, b + p.1));
    let (mx, my) = (sx / m, sy / m);
    let (sxy, sxx) = pts
        .iter()
        .fold((0.0, 0.0), |(a, b), p| (a + (p.0 - mx) * (p.1 - my), b + (p.0 - mx) * (p.0 - mx)));
    Some(sxy / sxx)
}
