//! Spectral response strength of an EP hidden in a larger matrix, estimated
//! from a single biorthogonal eigendecomposition.
//!
//! Among the eigenstates with small phase rigidity the one closest to the
//! known EP eigenvalue is selected, and the leading-order relation
//! r = n·ΔE^{n−1}/ξ is inverted for ξ.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{c64, spectral_norm, CMatrix};
use crate::modes::{analyze_modes, BiorthogonalMode, DEGENERATE_RIGIDITY};

pub const DEFAULT_TAU: f64 = 0.1;
pub const DEFAULT_KICK: f64 = 1e-12;
/// Seed of the fallback perturbation applied when the input sits exactly on the EP.
pub const DEFAULT_KICK_SEED: u64 = 0x5eed_cafe;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EstimateConfig {
    #[serde(with = "crate::serde_complex")]
    pub e_ep: Complex64,
    pub n: usize,
    /// Modes with r below this are EP candidates.
    pub tau: f64,
    /// Spectral norm of the fallback perturbation relative to ‖H‖.
    pub degenerate_kick: f64,
    pub kick_seed: u64,
    /// Also report the mean estimate over the (up to) n candidates nearest E_EP.
    pub average_ring: bool,
}

impl EstimateConfig {
    pub fn new(e_ep: Complex64, n: usize) -> Self {
        Self {
            e_ep,
            n,
            tau: DEFAULT_TAU,
            degenerate_kick: DEFAULT_KICK,
            kick_seed: DEFAULT_KICK_SEED,
            average_ring: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidInput(format!("EP order must be >= 2, got {}", self.n)));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::InvalidInput(format!("tau must lie in (0, 1], got {}", self.tau)));
        }
        if !(1e-14..=1e-8).contains(&self.degenerate_kick) {
            return Err(Error::InvalidInput(format!(
                "degenerate_kick must lie in [1e-14, 1e-8], got {}",
                self.degenerate_kick
            )));
        }
        if !self.e_ep.is_finite() {
            return Err(Error::InvalidInput("E_EP must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Candidate {
    #[serde(with = "crate::serde_complex")]
    pub e: Complex64,
    pub r: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EstimateReport {
    /// n·ΔE^{n−1}/r_used.
    pub xi_num: f64,
    /// min |E_l − E_EP| over the candidates.
    pub de: f64,
    pub r_used: f64,
    /// Index of the selected mode in the (Re, Im)-sorted spectrum.
    pub l_selected: usize,
    #[serde(with = "crate::serde_complex")]
    pub e_selected: Complex64,
    pub candidates: Vec<Candidate>,
    pub fallback_used: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub xi_ring_mean: Option<f64>,
}

pub fn estimate_xi(h: &CMatrix, cfg: &EstimateConfig) -> Result<EstimateReport> {
    cfg.validate()?;
    h.require_square()?;
    if h.rows() < cfg.n {
        return Err(Error::InvalidInput(format!(
            "matrix dimension {} is smaller than the EP order {}",
            h.rows(),
            cfg.n
        )));
    }
    if let Some(rep) = attempt(h, cfg, false)? {
        return Ok(rep);
    }
    let kicked = h + &kick(h, cfg)?;
    attempt(&kicked, cfg, true)?.ok_or(Error::NoEpCandidate { tau: cfg.tau })
}

/// Seeded random matrix with spectral norm `degenerate_kick·‖H‖`.
fn kick(h: &CMatrix, cfg: &EstimateConfig) -> Result<CMatrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.kick_seed);
    let m = h.rows();
    let p = CMatrix::from_fn(m, m, |_, _| {
        c64(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5))
    });
    let target = cfg.degenerate_kick * spectral_norm(h)?;
    let pn = spectral_norm(&p)?;
    Ok(p.scale(c64(target / pn, 0.0)))
}

/// `None` when no usable candidate exists: nothing below the threshold, or
/// the closest candidate sits exactly on the EP.
fn attempt(h: &CMatrix, cfg: &EstimateConfig, fallback_used: bool) -> Result<Option<EstimateReport>> {
    let modes = analyze_modes(h)?;
    let mut picked: Vec<(usize, &BiorthogonalMode)> =
        modes.iter().enumerate().filter(|(_, m)| m.r < cfg.tau).collect();
    if picked.is_empty() {
        return Ok(None);
    }
    picked.sort_by(|a, b| {
        (a.1.e - cfg.e_ep)
            .norm()
            .total_cmp(&(b.1.e - cfg.e_ep).norm())
            .then(a.0.cmp(&b.0))
    });
    let (l, best) = picked[0];
    let de = (best.e - cfg.e_ep).norm();
    if best.r < DEGENERATE_RIGIDITY || de == 0.0 {
        return Ok(None);
    }
    let xi_of = |m: &BiorthogonalMode| cfg.n as f64 * (m.e - cfg.e_ep).norm().powi(cfg.n as i32 - 1) / m.r;
    let xi_num = xi_of(best);
    let xi_ring_mean = cfg.average_ring.then(|| {
        let ring: Vec<f64> = picked
            .iter()
            .take(cfg.n)
            .filter(|(_, m)| m.r >= DEGENERATE_RIGIDITY)
            .map(|(_, m)| xi_of(m))
            .collect();
        ring.iter().sum::<f64>() / ring.len() as f64
    });
    let mut candidates: Vec<Candidate> = picked.iter().map(|(_, m)| Candidate { e: m.e, r: m.r }).collect();
    candidates.sort_by(|a, b| a.e.re.total_cmp(&b.e.re).then(a.e.im.total_cmp(&b.e.im)));
    Ok(Some(EstimateReport {
        xi_num,
        de,
        r_used: best.r,
        l_selected: l,
        e_selected: best.e,
        candidates,
        fallback_used,
        xi_ring_mean,
    }))
}
