//! Jordan chains of a single exceptional point and the "last Jordan vector"
//! route to the spectral response strength.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{c64, kernel_vector, solve_with_rank, spectral_norm, CMatrix, CVector};

/// Relative tolerance of the nilpotency test on `N = H_EP − E_EP·I`.
pub const DEFAULT_TOL_NILP: f64 = 1e-8;

/// Relative tolerance of the chain equations, in units of ‖N‖·max(1, ‖J_k‖).
pub const CHAIN_RESIDUAL_TOL: f64 = 1e-9;

/// An n×n Hamiltonian at an exceptional point of order n.
#[derive(Clone, Debug, Serialize)]
pub struct EpSpec {
    h_ep: CMatrix,
    #[serde(with = "crate::serde_complex")]
    e_ep: Complex64,
    order: usize,
    #[serde(skip)]
    nilpotent: CMatrix,
}

impl EpSpec {
    pub fn new(h_ep: CMatrix, e_ep: Complex64, order: usize) -> Result<Self> {
        Self::with_tolerance(h_ep, e_ep, order, DEFAULT_TOL_NILP)
    }

    pub fn with_tolerance(h_ep: CMatrix, e_ep: Complex64, order: usize, tol_nilp: f64) -> Result<Self> {
        h_ep.require_square()?;
        if order < 2 {
            return Err(Error::InvalidInput(format!("EP order must be >= 2, got {order}")));
        }
        if h_ep.rows() != order {
            return Err(Error::DimensionMismatch {
                expected: format!("{order}x{order} Hamiltonian"),
                got: format!("{}x{}", h_ep.rows(), h_ep.cols()),
            });
        }
        if !e_ep.is_finite() {
            return Err(Error::InvalidInput("E_EP must be finite".into()));
        }
        let nilpotent = h_ep.shifted(e_ep);
        let norms = power_norms(&nilpotent, order)?;
        let n1 = norms[0];
        let ok = n1 > 0.0
            && norms[order - 1] <= tol_nilp * n1.powi(order as i32)
            && norms[order - 2] > tol_nilp * n1.powi(order as i32 - 1);
        if !ok {
            return Err(Error::NotAnEp { order, norms });
        }
        Ok(Self {
            h_ep,
            e_ep,
            order,
            nilpotent,
        })
    }

    pub fn h_ep(&self) -> &CMatrix {
        &self.h_ep
    }

    pub fn e_ep(&self) -> Complex64 {
        self.e_ep
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// `N = H_EP − E_EP·I`.
    pub fn nilpotent(&self) -> &CMatrix {
        &self.nilpotent
    }
}

/// ‖N^k‖ for k = 1..=max_power.
pub fn power_norms(n: &CMatrix, max_power: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(max_power);
    let mut p = n.clone();
    for k in 1..=max_power {
        if k > 1 {
            p = &p * n;
        }
        out.push(spectral_norm(&p)?);
    }
    Ok(out)
}

/// Jordan vectors J_1..J_n with ⟨J_1|J_1⟩ = 1 and ⟨J_n|J_k⟩ = 0 for k < n.
#[derive(Clone, Debug, Serialize)]
pub struct JordanChain {
    vectors: Vec<CVector>,
    #[serde(skip)]
    ep: EpSpec,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ChainDiagnostics {
    /// max_k ‖N·J_k − J_{k−1}‖ / max(1, ‖J_k‖), with J_0 = 0.
    pub max_residual: f64,
    /// |⟨J_1|J_1⟩ − 1|.
    pub normalization_error: f64,
    /// max_{k<n} |⟨J_n|J_k⟩|.
    pub max_overlap_with_last: f64,
}

impl JordanChain {
    pub fn vectors(&self) -> &[CVector] {
        &self.vectors
    }

    pub fn ep(&self) -> &EpSpec {
        &self.ep
    }

    pub fn last(&self) -> &CVector {
        self.vectors.last().expect("chain has n >= 2 vectors")
    }

    pub fn diagnostics(&self) -> ChainDiagnostics {
        let n_op = self.ep.nilpotent();
        let mut max_residual = 0.0_f64;
        for (k, v) in self.vectors.iter().enumerate() {
            let image = n_op.mul_vec(v);
            let res = if k == 0 {
                image.norm()
            } else {
                (&image - &self.vectors[k - 1]).norm()
            };
            max_residual = max_residual.max(res / v.norm().max(1.0));
        }
        let last = self.last();
        let max_overlap_with_last = self.vectors[..self.vectors.len() - 1]
            .iter()
            .map(|v| last.inner(v).norm())
            .fold(0.0, f64::max);
        ChainDiagnostics {
            max_residual,
            normalization_error: (self.vectors[0].inner(&self.vectors[0]).re - 1.0).abs(),
            max_overlap_with_last,
        }
    }
}

/// Builds the normalized and orthogonalized Jordan chain of `ep`.
///
/// J_1 spans the kernel of N, each further vector is the least-norm
/// preimage of its predecessor. The remaining freedom
/// J_k → J_k + Σ_i c_i J_{k−i} is then fixed by making J_n orthogonal to
/// span{J_1..J_{n−1}}, which is linear in the c_i. The overall phase makes
/// the largest entry of J_1 real and positive.
pub fn build_chain(ep: &EpSpec) -> Result<JordanChain> {
    let n = ep.order();
    let n_op = ep.nilpotent();

    let mut chain = Vec::with_capacity(n);
    chain.push(kernel_vector(n_op)?);
    for k in 1..n {
        let sol = solve_with_rank(n_op, &chain[k - 1], n - 1)?;
        chain.push(sol.x);
    }

    // second pass mops up roundoff left by the first
    for _ in 0..2 {
        chain = orthogonalize_last(&chain)?;
    }

    let lead = chain[0]
        .as_slice()
        .iter()
        .copied()
        .fold(c64(0.0, 0.0), |best, z| if z.norm() > best.norm() { z } else { best });
    let phase = lead.conj() / lead.norm();
    let chain: Vec<CVector> = chain.iter().map(|v| v.scale(phase)).collect();

    let out = JordanChain {
        vectors: chain,
        ep: ep.clone(),
    };
    let diag = out.diagnostics();
    let scale = spectral_norm(n_op)?;
    if diag.max_residual > CHAIN_RESIDUAL_TOL * scale {
        return Err(Error::Numerical(format!(
            "Jordan chain residual {:e} exceeds {:e}",
            diag.max_residual,
            CHAIN_RESIDUAL_TOL * scale
        )));
    }
    Ok(out)
}

fn orthogonalize_last(chain: &[CVector]) -> Result<Vec<CVector>> {
    let n = chain.len();
    let head = CMatrix::from_columns(&chain[..n - 1])?;
    // J_n ≈ Σ_j d_j J_j over j < n
    let d = solve_with_rank(&head, &chain[n - 1], n - 1)?.x;
    // shift coefficients: c_i multiplies J_{k-i}; c_i = -d_{n-1-i}
    let c: Vec<Complex64> = (1..n).map(|i| -d.get(n - 1 - i)).collect();
    Ok((0..n)
        .map(|k| {
            (1..=k).fold(chain[k].clone(), |acc, i| acc.add_scaled(c[i - 1], &chain[k - i]))
        })
        .collect())
}

/// Canonical Jordan block: `e` on the diagonal, ones on the superdiagonal.
pub fn jordan_block(n: usize, e: Complex64) -> CMatrix {
    CMatrix::from_fn(n, n, |i, j| {
        if i == j {
            e
        } else if j == i + 1 {
            c64(1.0, 0.0)
        } else {
            c64(0.0, 0.0)
        }
    })
}

/// ξ = 1/‖J_n‖.
pub fn xi_from_chain(chain: &JordanChain) -> Result<f64> {
    let len = chain.last().norm();
    if !(len > 0.0) || !len.is_finite() {
        return Err(Error::Internal(format!("last Jordan vector has length {len}")));
    }
    Ok(1.0 / len)
}

/// Unit left eigenvector of H_EP at E_EP (kernel of N†).
pub fn left_ep_vector(ep: &EpSpec) -> Result<CVector> {
    kernel_vector(&ep.nilpotent().adjoint())
}

pub const LEFT_CHAIN_TOL: f64 = 1e-9;

/// |⟨L_EP|J_k⟩| for k = 1..n, against ‖J_n‖·δ_kn.
#[derive(Clone, Debug, Serialize)]
pub struct LeftChainOverlaps {
    pub overlaps: Vec<f64>,
    pub last_norm: f64,
    /// max_{k<n} |⟨L_EP|J_k⟩|.
    pub max_off_last: f64,
    /// ||⟨L_EP|J_n⟩| − ‖J_n‖|.
    pub last_gap: f64,
    pub pass: bool,
}

pub fn check_left_chain(chain: &JordanChain, l_ep: &CVector) -> LeftChainOverlaps {
    let overlaps: Vec<f64> = chain.vectors().iter().map(|v| l_ep.inner(v).norm()).collect();
    let n = overlaps.len();
    let last_norm = chain.last().norm();
    let max_off_last = overlaps[..n - 1].iter().copied().fold(0.0, f64::max);
    let last_gap = (overlaps[n - 1] - last_norm).abs();
    LeftChainOverlaps {
        pass: max_off_last <= LEFT_CHAIN_TOL && last_gap <= LEFT_CHAIN_TOL,
        overlaps,
        last_norm,
        max_off_last,
        last_gap,
    }
}
