//! Spectral response strength ξ, the leading-order predictions for phase
//! rigidity and Petermann factor near an EP, and the bounds built on them.

use num_complex::Complex64;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::jordan::{build_chain, xi_from_chain, EpSpec};
use crate::linalg::spectral_norm;
use crate::modes::Petermann;

/// ξ = ‖(H_EP − E_EP)^{n−1}‖.
pub fn xi_exact(ep: &EpSpec) -> Result<f64> {
    spectral_norm(&ep.nilpotent().pow(ep.order() - 1)?)
}

/// A leading-order asymptotic value; `in_regime` is false when the value
/// falls outside the range the expansion can describe (r > 1 or K < 1).
/// Values are never clamped.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Asymptotic {
    pub value: f64,
    pub in_regime: bool,
}

fn check_inputs(n: usize, de: f64, xi: f64) -> Result<()> {
    if n < 2 {
        return Err(Error::InvalidInput(format!("order must be >= 2, got {n}")));
    }
    if !(xi > 0.0) || !xi.is_finite() {
        return Err(Error::InvalidInput(format!("xi must be positive, got {xi}")));
    }
    if !(de >= 0.0) || !de.is_finite() {
        return Err(Error::InvalidInput(format!("detuning must be >= 0, got {de}")));
    }
    Ok(())
}

/// r = n·ΔE^{n−1}/ξ.
pub fn predicted_rigidity(n: usize, de: f64, xi: f64) -> Result<Asymptotic> {
    check_inputs(n, de, xi)?;
    let value = n as f64 * de.powi(n as i32 - 1) / xi;
    Ok(Asymptotic {
        value,
        in_regime: value <= 1.0,
    })
}

/// K = ξ²/(n²·ΔE^{2n−2}), the exact reciprocal square of [`predicted_rigidity`].
pub fn predicted_petermann(n: usize, de: f64, xi: f64) -> Result<Asymptotic> {
    check_inputs(n, de, xi)?;
    if de == 0.0 {
        return Err(Error::DivergesAtEp);
    }
    let inv_r = xi / (n as f64 * de.powi(n as i32 - 1));
    let value = inv_r * inv_r;
    Ok(Asymptotic {
        value,
        in_regime: value >= 1.0,
    })
}

/// 2^{n−1}·n^{n−3}.
pub fn k_resolvable_peak(n: usize) -> f64 {
    2f64.powi(n as i32 - 1) * (n as f64).powi(n as i32 - 3)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundsInput {
    pub n: usize,
    /// Perturbation strength ε.
    pub eps: f64,
    /// ‖H_1‖.
    pub norm_h1: f64,
    pub xi: f64,
    /// Im E_EP, needed for the passive-system bounds.
    pub imag_e_ep: Option<f64>,
    /// Detuning |E − E_EP| at which the passive Petermann bound is evaluated.
    pub de: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Bounds {
    pub r_upper: f64,
    pub k_lower: f64,
    #[serde(serialize_with = "maybe")]
    pub xi_passive_upper: Option<f64>,
    #[serde(serialize_with = "maybe")]
    pub k_passive_upper: Option<f64>,
    pub k_resolvable_peak: f64,
}

fn maybe<S: Serializer>(v: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(x) => s.serialize_f64(*x),
        None => s.serialize_str("not computed"),
    }
}

pub fn bounds(input: &BoundsInput) -> Result<Bounds> {
    let BoundsInput {
        n,
        eps,
        norm_h1,
        xi,
        imag_e_ep,
        de,
    } = *input;
    if n < 2 {
        return Err(Error::InvalidInput(format!("order must be >= 2, got {n}")));
    }
    if !(eps >= 0.0) || !(norm_h1 > 0.0) || !(xi > 0.0) {
        return Err(Error::InvalidInput(format!(
            "bounds need eps >= 0, ‖H_1‖ > 0, xi > 0 (got {eps}, {norm_h1}, {xi})"
        )));
    }
    let nf = n as f64;
    let size = eps * norm_h1;
    let r_upper = nf * size.powf((nf - 1.0) / nf) / xi.powf(1.0 / nf);
    let k_lower = xi.powf(2.0 / nf) / (nf * nf * size.powf((2.0 * nf - 2.0) / nf));
    let peak = k_resolvable_peak(n);
    let xi_passive_upper = imag_e_ep.map(|im| ((2.0 * nf).sqrt() * im.abs()).powi(n as i32 - 1));
    let k_passive_upper = match (imag_e_ep, de) {
        (Some(im), Some(de)) if de > 0.0 => Some(peak * (im.abs() / de).powi(2 * n as i32 - 2)),
        _ => None,
    };
    Ok(Bounds {
        r_upper,
        k_lower,
        xi_passive_upper,
        k_passive_upper,
        k_resolvable_peak: peak,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct PredictionRow {
    pub de: f64,
    pub r: Asymptotic,
    pub k: Petermann,
    pub k_in_regime: bool,
}

/// ξ by both routes, predictions on a detuning table, and the bounds.
#[derive(Clone, Debug, Serialize)]
pub struct ResponseReport {
    pub n: usize,
    #[serde(with = "crate::serde_complex")]
    pub e_ep: Complex64,
    /// ‖N^{n−1}‖.
    pub xi: f64,
    /// 1/‖J_n‖.
    pub xi_chain: f64,
    /// |ξ_chain − ξ|/ξ.
    pub relative_gap: f64,
    pub predictions: Vec<PredictionRow>,
    pub bounds: Option<Bounds>,
}

impl ResponseReport {
    pub fn build(ep: &EpSpec, detunings: &[f64], perturbation: Option<(f64, f64)>) -> Result<Self> {
        let n = ep.order();
        let xi = xi_exact(ep)?;
        let xi_chain = xi_from_chain(&build_chain(ep)?)?;
        let predictions = detunings
            .iter()
            .map(|&de| {
                let r = predicted_rigidity(n, de, xi)?;
                let (k, k_in_regime) = match predicted_petermann(n, de, xi) {
                    Ok(k) => (Petermann::Finite(k.value), k.in_regime),
                    Err(Error::DivergesAtEp) => (Petermann::Infinite, true),
                    Err(e) => return Err(e),
                };
                Ok(PredictionRow { de, r, k, k_in_regime })
            })
            .collect::<Result<Vec<_>>>()?;
        let bounds = perturbation
            .map(|(eps, norm_h1)| {
                bounds(&BoundsInput {
                    n,
                    eps,
                    norm_h1,
                    xi,
                    imag_e_ep: Some(ep.e_ep().im),
                    de: detunings.iter().copied().find(|&d| d > 0.0),
                })
            })
            .transpose()?;
        Ok(Self {
            n,
            e_ep: ep.e_ep(),
            xi,
            xi_chain,
            relative_gap: (xi_chain - xi).abs() / xi,
            predictions,
            bounds,
        })
    }

    /// K·r² at every finite table row; 1 up to rounding.
    pub fn max_identity_error(&self) -> f64 {
        self.predictions
            .iter()
            .filter_map(|row| match row.k {
                Petermann::Finite(k) => Some((k * row.r.value * row.r.value - 1.0).abs()),
                Petermann::Infinite => None,
            })
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::random_similar_ep;
    use crate::jordan::jordan_block;
    use crate::linalg::{c64, CMatrix};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn hatano(n: usize, a: Complex64) -> EpSpec {
        let h = CMatrix::from_fn(n, n, |i, j| if j == i + 1 { a } else { c64(0.0, 0.0) });
        EpSpec::new(h, c64(0.0, 0.0), n).unwrap()
    }

    #[test]
    fn hatano_xi_is_power_of_hopping() {
        for n in 2..=6 {
            for a in [c64(0.5, 0.0), c64(1.0, 0.0), c64(2.0, 0.0), c64(1.0, 1.0)] {
                let expected = a.norm().powi(n as i32 - 1);
                let xi = xi_exact(&hatano(n, a)).unwrap();
                assert!((xi - expected).abs() <= 1e-12 * expected, "n={n} A={a}: {xi}");
            }
        }
    }

    #[test]
    fn canonical_block_has_unit_xi() {
        for n in 2..=6 {
            let ep = EpSpec::new(jordan_block(n, c64(0.4, -0.2)), c64(0.4, -0.2), n).unwrap();
            assert!((xi_exact(&ep).unwrap() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn xi_routes_agree_on_random_ep() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let ep = random_similar_ep(&mut rng, 3, c64(0.0, -0.05)).unwrap();
            let a = xi_exact(&ep).unwrap();
            let b = xi_from_chain(&build_chain(&ep).unwrap()).unwrap();
            assert!((a - b).abs() <= 1e-9 * a, "{a} vs {b}");
        }
    }

    #[test]
    fn xi_is_unitarily_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for n in 2..=5 {
            let ep = random_similar_ep(&mut rng, n, c64(0.1, 0.0)).unwrap();
            let u = crate::ensemble::random_unitary(n, &mut rng);
            let conj = &(&u * ep.h_ep()) * &u.adjoint();
            let ep_u = EpSpec::new(conj, ep.e_ep(), n).unwrap();
            let (a, b) = (xi_exact(&ep).unwrap(), xi_exact(&ep_u).unwrap());
            assert!((a - b).abs() <= 1e-9 * a);
        }
    }

    #[test]
    fn rigidity_examples() {
        let de = (1e-9_f64).powf(1.0 / 3.0);
        let r = predicted_rigidity(3, de, 1.0).unwrap();
        assert!((r.value - 3e-6).abs() < 1e-18);
        assert!(r.in_regime);
        assert_eq!(predicted_rigidity(3, 0.0, 1.0).unwrap().value, 0.0);
        assert!((predicted_rigidity(2, 0.1, 0.5).unwrap().value - 0.4).abs() < 1e-16);
        assert!(!predicted_rigidity(2, 10.0, 1.0).unwrap().in_regime);
    }

    #[test]
    fn petermann_examples() {
        let k = predicted_petermann(3, 1e-2, 1.0).unwrap();
        assert!((k.value - 1.0 / 9e-8).abs() <= 1e-12 * k.value);
        assert_eq!(predicted_petermann(3, 0.0, 1.0), Err(Error::DivergesAtEp));
        let out = predicted_petermann(2, 10.0, 1.0).unwrap();
        assert!(!out.in_regime && out.value < 1.0);
    }

    #[test]
    fn resolvable_peak_constants() {
        assert_eq!(k_resolvable_peak(2), 1.0);
        assert_eq!(k_resolvable_peak(3), 4.0);
        assert_eq!(k_resolvable_peak(4), 32.0);
    }

    #[test]
    fn hatano_bound_equals_prediction() {
        let eps = 1e-6;
        let b = bounds(&BoundsInput {
            n: 3,
            eps,
            norm_h1: 1.0,
            xi: 1.0,
            imag_e_ep: None,
            de: None,
        })
        .unwrap();
        let de = eps.powf(1.0 / 3.0);
        let r = predicted_rigidity(3, de, 1.0).unwrap().value;
        assert!((b.r_upper - r).abs() <= 1e-12 * r);
        assert_eq!(b.xi_passive_upper, None);
        assert_eq!(b.k_passive_upper, None);
        let json = serde_json::to_string(&b).unwrap();
        assert!(json.contains("\"xi_passive_upper\":\"not computed\""), "{json}");
    }

    #[test]
    fn passive_bounds() {
        let b = bounds(&BoundsInput {
            n: 3,
            eps: 1e-6,
            norm_h1: 1.0,
            xi: 1.0,
            imag_e_ep: Some(-0.05),
            de: Some(0.025),
        })
        .unwrap();
        let xi_max = ((6.0_f64).sqrt() * 0.05).powi(2);
        assert!((b.xi_passive_upper.unwrap() - xi_max).abs() < 1e-15);
        // splitting 2ΔE equal to linewidth 2|Im E| recovers the peak constant times 2^{2n-2}
        assert!((b.k_passive_upper.unwrap() - 4.0 * 16.0).abs() < 1e-12);
    }

    #[test]
    fn report_carries_both_routes() {
        let rep = ResponseReport::build(&hatano(3, c64(2.0, 0.0)), &[0.0, 1e-3, 0.1], Some((1e-6, 1.0))).unwrap();
        assert!((rep.xi - 4.0).abs() < 1e-12 && rep.relative_gap < 1e-12);
        assert_eq!(rep.predictions[0].k, Petermann::Infinite);
        assert!(rep.max_identity_error() < 1e-12);
        assert!(rep.bounds.is_some());
    }

    proptest! {
        #[test]
        fn petermann_times_rigidity_squared_is_one(n in 2usize..8, log_de in -8.0f64..0.5, log_xi in -3.0f64..3.0) {
            let (de, xi) = (10f64.powf(log_de), 10f64.powf(log_xi));
            let r = predicted_rigidity(n, de, xi).unwrap().value;
            let k = predicted_petermann(n, de, xi).unwrap().value;
            prop_assert!((k * r * r - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn bound_at_saturating_detuning_reproduces_prediction(n in 2usize..7, log_eps in -12.0f64..-2.0, log_h in -1.0f64..1.0, log_xi in -2.0f64..2.0) {
            let (eps, h1, xi) = (10f64.powf(log_eps), 10f64.powf(log_h), 10f64.powf(log_xi));
            let b = bounds(&BoundsInput { n, eps, norm_h1: h1, xi, imag_e_ep: None, de: None }).unwrap();
            let de = (eps * h1 * xi).powf(1.0 / n as f64);
            let r = predicted_rigidity(n, de, xi).unwrap().value;
            let k = predicted_petermann(n, de, xi).unwrap().value;
            prop_assert!((b.r_upper - r).abs() <= 1e-12 * r);
            prop_assert!((b.k_lower - k).abs() <= 1e-12 * k);
        }

        #[test]
        fn in_regime_ordering(n in 2usize..7, log_eps in -12.0f64..-2.0, log_xi in -2.0f64..2.0, frac in 0.01f64..1.0) {
            let (eps, xi) = (10f64.powf(log_eps), 10f64.powf(log_xi));
            let b = bounds(&BoundsInput { n, eps, norm_h1: 1.0, xi, imag_e_ep: None, de: None }).unwrap();
            // any detuning obeying |ΔE|^n <= ε‖H_1‖ξ
            let de = frac * (eps * xi).powf(1.0 / n as f64);
            prop_assert!(predicted_rigidity(n, de, xi).unwrap().value <= b.r_upper * (1.0 + 1e-12));
            prop_assert!(predicted_petermann(n, de, xi).unwrap().value >= b.k_lower * (1.0 - 1e-12));
        }
    }
}
