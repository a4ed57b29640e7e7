//! Per-eigenstate biorthogonal diagnostics.

use std::fmt::Write as _;

use num_complex::Complex64;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::linalg::{eig_full_with, CMatrix, CVector, EigOptions};

/// Below this phase rigidity the Petermann factor is reported as diverged.
pub const DEGENERATE_RIGIDITY: f64 = 1e-14;

/// Petermann factor, or an explicit marker for an eigenstate at (numerical) coalescence.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Petermann {
    Finite(f64),
    Infinite,
}

impl Petermann {
    pub fn from_rigidity(r: f64) -> Self {
        if r < DEGENERATE_RIGIDITY {
            Petermann::Infinite
        } else {
            Petermann::Finite(1.0 / (r * r))
        }
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            Petermann::Finite(k) => Some(k),
            Petermann::Infinite => None,
        }
    }
}

impl Serialize for Petermann {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Petermann::Finite(k) => s.serialize_f64(*k),
            Petermann::Infinite => s.serialize_str("inf"),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BiorthogonalMode {
    #[serde(with = "crate::serde_complex")]
    pub e: Complex64,
    pub right: CVector,
    pub left: CVector,
    /// ⟨L|R⟩ of the unit vectors.
    #[serde(with = "crate::serde_complex")]
    pub overlap: Complex64,
    /// Phase rigidity |⟨L|R⟩|.
    pub r: f64,
    pub k: Petermann,
}

/// One mode per eigenvalue, sorted by (Re E, Im E).
pub fn analyze_modes(h: &CMatrix) -> Result<Vec<BiorthogonalMode>> {
    analyze_modes_with(h, &EigOptions::default())
}

pub fn analyze_modes_with(h: &CMatrix, opts: &EigOptions) -> Result<Vec<BiorthogonalMode>> {
    let sys = eig_full_with(h, opts)?;
    Ok(sys
        .eigenvalues
        .iter()
        .zip(sys.right)
        .zip(sys.left)
        .map(|((&e, right), left)| {
            let overlap = left.inner(&right);
            let r = overlap.norm();
            BiorthogonalMode {
                e,
                right,
                left,
                overlap,
                r,
                k: Petermann::from_rigidity(r),
            }
        })
        .collect())
}

/// CSV with header `l,Re(E),Im(E),r,K`; diverged Petermann factors print as `inf`.
pub fn modes_csv(modes: &[BiorthogonalMode]) -> String {
    let mut out = String::from("l,Re(E),Im(E),r,K\n");
    for (l, m) in modes.iter().enumerate() {
        let k = match m.k {
            Petermann::Finite(k) => format!("{k:e}"),
            Petermann::Infinite => "inf".to_string(),
        };
        writeln!(out, "{l},{:e},{:e},{:e},{k}", m.e.re, m.e.im, m.r).unwrap();
    }
    out
}

/// Finite-difference dE_l/dε against first-order perturbation theory.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct DerivativeCheck {
    #[serde(with = "crate::serde_complex")]
    pub eigenvalue: Complex64,
    /// [E_l(ε+h) − E_l(ε−h)]/(2h).
    #[serde(with = "crate::serde_complex")]
    pub lhs: Complex64,
    /// ⟨L_l|H_1|R_l⟩/⟨L_l|R_l⟩ at ε.
    #[serde(with = "crate::serde_complex")]
    pub rhs: Complex64,
    pub rel_diff: f64,
}

/// Compares both sides of first-order perturbation theory for mode `l`
/// (index into the sorted spectrum of `H_EP + ε·H_1`).
pub fn perturbation_derivative_check(
    h_ep: &CMatrix,
    h_1: &CMatrix,
    eps: f64,
    l: usize,
    step: f64,
) -> Result<DerivativeCheck> {
    if h_ep.shape() != h_1.shape() {
        return Err(Error::DimensionMismatch {
            expected: format!("{}x{}", h_ep.rows(), h_ep.cols()),
            got: format!("{}x{}", h_1.rows(), h_1.cols()),
        });
    }
    if !(eps > 0.0) || !(step > 0.0) {
        return Err(Error::InvalidInput(format!(
            "need eps > 0 and step > 0, got eps={eps}, step={step}"
        )));
    }
    let at = |e: f64| h_ep + &h_1.scale(Complex64::new(e, 0.0));

    let modes = analyze_modes(&at(eps))?;
    let mode = modes.get(l).ok_or_else(|| {
        Error::InvalidInput(format!("mode index {l} out of range (dimension {})", modes.len()))
    })?;
    let plus = track(&at(eps + step), mode.e)?;
    let minus = track(&at(eps - step), mode.e)?;
    let lhs = (plus - minus) / (2.0 * step);
    let rhs = mode.left.inner(&h_1.mul_vec(&mode.right)) / mode.overlap;
    Ok(DerivativeCheck {
        eigenvalue: mode.e,
        lhs,
        rhs,
        rel_diff: (lhs - rhs).norm() / rhs.norm(),
    })
}

/// Eigenvalue of `h` continuing `target`; fails when the runner-up is within a factor 2.
fn track(h: &CMatrix, target: Complex64) -> Result<Complex64> {
    let sys = eig_full_with(h, &EigOptions::default())?;
    let mut dists: Vec<(f64, Complex64)> = sys.eigenvalues.iter().map(|&e| ((e - target).norm(), e)).collect();
    dists.sort_by(|a, b| a.0.total_cmp(&b.0));
    if let Some(second) = dists.get(1) {
        if second.0 < 2.0 * dists[0].0 {
            return Err(Error::Tracking(format!(
                "candidates at distance {:e} and {:e} from {target}",
                dists[0].0, second.0
            )));
        }
    }
    Ok(dists[0].1)
}
