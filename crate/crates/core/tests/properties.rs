//! Randomized invariants across modules. Matrices come from seeded ChaCha
//! streams so that proptest shrinks over seeds and sizes.

use epxi::ensemble::{
    random_complex_matrix, random_ep_hamiltonian, random_similar_ep, random_unitary, EnsembleConfig, Histogram,
    HistogramSpec,
};
use epxi::estimator::{estimate_xi, EstimateConfig};
use epxi::hatano::{build_model, rigidity_sweep, log_grid, overlap_rigidity, HatanoParams};
use epxi::jordan::{build_chain, check_left_chain, left_ep_vector, xi_from_chain, EpSpec};
use epxi::linalg::{eig_full, spectral_norm, DEFAULT_TOL_EIG};
use epxi::modes::{analyze_modes, Petermann};
use epxi::response::{bounds, xi_exact, BoundsInput};
use epxi::{CMatrix, Complex64};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn conj(u: &CMatrix, h: &CMatrix) -> CMatrix {
    &(u * h) * &u.adjoint()
}

fn random_ep(seed: u64, n: usize) -> EpSpec {
    random_similar_ep(&mut rng(seed), n, c(0.2, -0.1)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn spectral_norm_unitary_invariance(seed: u64, rows in 1usize..7, cols in 1usize..7) {
        let mut g = rng(seed);
        let a = random_complex_matrix(&mut g, rows, cols);
        let u = random_unitary(rows, &mut g);
        let v = random_unitary(cols, &mut g);
        let b = &(&u * &a) * &v.adjoint();
        prop_assert!((spectral_norm(&b).unwrap() - spectral_norm(&a).unwrap()).abs() <= 1e-10);
    }

    #[test]
    fn spectral_norm_scales(seed: u64, n in 1usize..7, re in -10.0f64..10.0, im in -10.0f64..10.0) {
        let a = random_complex_matrix(&mut rng(seed), n, n);
        let s = spectral_norm(&a).unwrap();
        let z = c(re, im);
        prop_assert!((spectral_norm(&a.scale(z)).unwrap() - z.norm() * s).abs() <= 1e-12 * z.norm() * s + 1e-300);
    }

    #[test]
    fn hermitian_spectrum_is_real_and_rigid(seed: u64, n in 1usize..9) {
        let a = random_complex_matrix(&mut rng(seed), n, n);
        let h = &a + &a.adjoint();
        let norm = spectral_norm(&h).unwrap();
        let sys = eig_full(&h, DEFAULT_TOL_EIG).unwrap();
        for ((e, r), l) in sys.eigenvalues.iter().zip(&sys.right).zip(&sys.left) {
            prop_assert!(e.im.abs() <= DEFAULT_TOL_EIG * norm);
            prop_assert!((1.0 - l.inner(r).norm()).abs() <= 1e-9);
        }
    }

    #[test]
    fn first_order_consistency_of_pairs(seed: u64, n in 1usize..9) {
        let h = random_complex_matrix(&mut rng(seed), n, n);
        let norm = spectral_norm(&h).unwrap();
        let sys = eig_full(&h, DEFAULT_TOL_EIG).unwrap();
        for ((e, r), l) in sys.eigenvalues.iter().zip(&sys.right).zip(&sys.left) {
            let overlap = l.inner(r);
            if overlap.norm() > 1e-8 {
                let rayleigh = l.inner(&h.mul_vec(r)) / overlap;
                prop_assert!((rayleigh - e).norm() <= DEFAULT_TOL_EIG * norm / overlap.norm());
            }
        }
    }

    #[test]
    fn chain_residual_and_left_overlaps(seed: u64, n in 2usize..6) {
        let ep = random_ep(seed, n);
        let chain = build_chain(&ep).unwrap();
        let nn = ep.nilpotent();
        let n_norm = spectral_norm(nn).unwrap();
        let v = chain.vectors();
        for k in 0..n {
            let image = nn.mul_vec(&v[k]);
            let res = if k == 0 { image.norm() } else { (&image - &v[k - 1]).norm() };
            prop_assert!(res <= 1e-9 * n_norm * v[k].norm().max(1.0), "k={} res={:e}", k, res);
        }
        prop_assert!(check_left_chain(&chain, &left_ep_vector(&ep).unwrap()).pass);
    }

    #[test]
    fn two_xi_formulas_agree(seed: u64, n in 2usize..6) {
        let ep = random_ep(seed, n);
        let xi = xi_exact(&ep).unwrap();
        let chain = xi_from_chain(&build_chain(&ep).unwrap()).unwrap();
        prop_assert!((chain - xi).abs() <= 1e-9 * xi);
    }

    #[test]
    fn xi_scales_with_power_of_factor(seed: u64, n in 2usize..6, re in -3.0f64..3.0, im in -3.0f64..3.0) {
        prop_assume!(c(re, im).norm() > 0.1);
        let ep = random_ep(seed, n);
        let scaled = ep.nilpotent().scale(c(re, im)).shifted(-ep.e_ep());
        let ep2 = EpSpec::new(scaled, ep.e_ep(), n).unwrap();
        let expected = xi_exact(&ep).unwrap() * c(re, im).norm().powi(n as i32 - 1);
        prop_assert!((xi_exact(&ep2).unwrap() - expected).abs() <= 1e-10 * expected);
    }

    #[test]
    fn xi_is_unitarily_invariant(seed: u64, n in 2usize..6) {
        let ep = random_ep(seed, n);
        let u = random_unitary(n, &mut rng(seed ^ 0xabc));
        let ep_u = EpSpec::new(conj(&u, ep.h_ep()), ep.e_ep(), n).unwrap();
        let (a, b) = (xi_exact(&ep).unwrap(), xi_exact(&ep_u).unwrap());
        prop_assert!((a - b).abs() <= 1e-9 * a);
    }

    #[test]
    fn modes_satisfy_petermann_identities(seed: u64, n in 1usize..10) {
        let h = random_complex_matrix(&mut rng(seed), n, n);
        for m in analyze_modes(&h).unwrap() {
            prop_assert!(m.r >= 0.0 && m.r <= 1.0 + 1e-12);
            if let Petermann::Finite(k) = m.k {
                prop_assert!(k >= 1.0 - 1e-12);
                prop_assert!((k * m.r * m.r - 1.0).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn global_phase_leaves_rigidity_unchanged(seed: u64, n in 1usize..8, phase in 0.0f64..std::f64::consts::TAU) {
        let h = random_complex_matrix(&mut rng(seed), n, n);
        let a = analyze_modes(&h).unwrap();
        let b = analyze_modes(&h.scale(Complex64::from_polar(1.0, phase))).unwrap();
        let mut ra: Vec<f64> = a.iter().map(|m| m.r).collect();
        let mut rb: Vec<f64> = b.iter().map(|m| m.r).collect();
        ra.sort_by(f64::total_cmp);
        rb.sort_by(f64::total_cmp);
        for (x, y) in ra.iter().zip(&rb) {
            prop_assert!((x - y).abs() <= 1e-12, "{} vs {}", x, y);
        }
    }

    #[test]
    fn hatano_overlap_identity(n in 2usize..6, log_eps in -14.0f64..-8.0, a in 0.5f64..2.0) {
        let eps = 10f64.powf(log_eps);
        let p = HatanoParams::new(n, c(0.0, 0.0), c(a, 0.0), vec![eps]).unwrap();
        let (h, h1) = build_model(&p).unwrap();
        let ep = EpSpec::new(h.clone(), p.e0, n).unwrap();
        let l_ep = left_ep_vector(&ep).unwrap();
        for m in analyze_modes(&(&h + &h1.scale(c(eps, 0.0)))).unwrap() {
            let rhs = n as f64 * l_ep.inner(&m.right).norm();
            prop_assert!((m.r - rhs).abs() <= 0.05 * m.r, "{} vs {}", m.r, rhs);
        }
    }

    #[test]
    fn hatano_numerical_rigidity(n in 2usize..6, log_eps in -10.0f64..-2.0, a in 0.5f64..2.0) {
        let eps = 10f64.powf(log_eps);
        let p = HatanoParams::new(n, c(0.0, 0.0), c(a, 0.0), vec![eps]).unwrap();
        let (h, h1) = build_model(&p).unwrap();
        let expected = overlap_rigidity(&p, eps).unwrap().r;
        for m in analyze_modes(&(&h + &h1.scale(c(eps, 0.0)))).unwrap() {
            prop_assert!((m.r - expected).abs() <= 1e-6 * expected, "{} vs {}", m.r, expected);
        }
    }

    #[test]
    fn hatano_ratio_identity_and_bound(n in 2usize..7, re in 0.2f64..3.0, im in -1.0f64..1.0) {
        let p = HatanoParams::new(n, c(0.0, 0.0), c(re, im), log_grid(1e-12, 1e-2, 11)).unwrap();
        for row in rigidity_sweep(&p).unwrap() {
            let sum: f64 = (0..n as i32).map(|j| row.x.powi(j)).sum();
            prop_assert!((row.r_pred / row.r_exact - sum).abs() <= 1e-10 * sum);
            let b = bounds(&BoundsInput { n, eps: row.eps, norm_h1: 1.0, xi: p.xi(), imag_e_ep: None, de: None }).unwrap();
            prop_assert!((b.r_upper - row.r_pred).abs() <= 1e-12 * row.r_pred);
        }
    }

    #[test]
    fn histogram_density_is_normalized(seed: u64, count in 1usize..500) {
        let mut g = rng(seed);
        let values: Vec<f64> = (0..count).map(|_| 10f64.powf(g.random_range(-13.0..1.0))).collect();
        let h = Histogram::build(&HistogramSpec::default(), &values);
        let in_range: u64 = h.counts.iter().sum();
        prop_assert_eq!(in_range + h.underflow + h.overflow, count as u64);
        if in_range > 0 {
            prop_assert!((h.integral() - 1.0).abs() <= 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn estimate_is_unitarily_invariant(seed: u64, n in 2usize..5) {
        let mut g = rng(seed);
        let e = c(0.0, -0.05);
        let ep = random_similar_ep(&mut g, n, e).unwrap();
        let p = random_complex_matrix(&mut g, n, n);
        let p = p.scale(c(1e-8 / spectral_norm(&p).unwrap(), 0.0));
        let ha = random_complex_matrix(&mut g, 6, 6).shifted(c(-1.5, 0.0));
        let h = CMatrix::block_diag(&(ep.h_ep() + &p), &ha);
        let u = random_unitary(6 + n, &mut g);
        let cfg = EstimateConfig::new(e, n);
        let a = estimate_xi(&h, &cfg).unwrap().xi_num;
        let b = estimate_xi(&conj(&u, &h), &cfg).unwrap().xi_num;
        prop_assert!((a - b).abs() <= 1e-6 * a, "{} vs {}", a, b);
    }

    #[test]
    fn embedded_block_keeps_xi(seed: u64, n in 2usize..6, index in 0usize..1000) {
        let cfg = EnsembleConfig::new(12, n, c(0.0, -0.05), index + 1, seed);
        let s = random_ep_hamiltonian(&cfg, index).unwrap();
        let block = CMatrix::from_fn(n, n, |i, j| s.block.get(i, j));
        let xi = xi_exact(&EpSpec::new(block, cfg.e_ep, n).unwrap()).unwrap();
        prop_assert!((xi - s.xi_true).abs() <= 1e-9 * s.xi_true);
    }
}

/// Generic perturbations of strength ε move the ring to |ΔE| ~ (εξ)^{1/n},
/// and the leading-order inversion for ξ errs at relative order |ΔE|.
fn consistency_errors(n: usize, eps: f64, samples: usize) -> Vec<f64> {
    let mut g = rng(31);
    let e = c(0.1, -0.05);
    let mut errs: Vec<f64> = (0..samples)
        .map(|_| {
            let ep = random_similar_ep(&mut g, n, e).unwrap();
            let xi = xi_exact(&ep).unwrap();
            let p = random_complex_matrix(&mut g, n, n);
            let p = p.scale(c(eps / spectral_norm(&p).unwrap(), 0.0));
            let rep = estimate_xi(&(ep.h_ep() + &p), &EstimateConfig::new(e, n)).unwrap();
            (rep.xi_num - xi).abs() / xi
        })
        .collect();
    errs.sort_by(f64::total_cmp);
    errs
}

#[test]
fn consistency_with_exact_at_second_order() {
    let errs = consistency_errors(2, 1e-8, 100);
    assert!(*errs.last().unwrap() <= 1e-3, "{errs:?}");
}

#[test]
fn consistency_error_scales_as_nth_root() {
    for n in [3, 4] {
        let median = |eps| consistency_errors(n, eps, 60)[30];
        let (a, b) = (median(1e-8), median(1e-12));
        let expected = 1e4f64.powf(1.0 / n as f64);
        assert!(a / b > 0.5 * expected && a / b < 2.0 * expected, "n={n}: {a:e} / {b:e}");
    }
    assert!(*consistency_errors(3, 1e-12, 100).last().unwrap() <= 1e-3);
}

#[test]
fn estimator_error_grows_with_embedded_perturbation() {
    let cfg = EnsembleConfig::new(20, 3, c(0.0, -0.05), 100, 77);
    let samples: Vec<_> = (0..cfg.realizations).map(|i| random_ep_hamiltonian(&cfg, i).unwrap()).collect();
    let mut g = rng(78);
    let kicks: Vec<CMatrix> = samples
        .iter()
        .map(|_| {
            let p = random_complex_matrix(&mut g, 20, 20);
            p.scale(c(1.0 / spectral_norm(&p).unwrap(), 0.0))
        })
        .collect();
    let medians: Vec<f64> = (-12..=-4)
        .map(|k| {
            let delta = 10f64.powi(k);
            let mut errs: Vec<f64> = samples
                .iter()
                .zip(&kicks)
                .map(|(s, p)| {
                    let h = &s.h + &p.scale(c(delta, 0.0));
                    let x = estimate_xi(&h, &cfg.estimate_config()).unwrap().xi_num;
                    (x - s.xi_true).abs() / s.xi_true
                })
                .collect();
            errs.sort_by(f64::total_cmp);
            errs[errs.len() / 2]
        })
        .collect();
    for w in medians.windows(2) {
        assert!(w[1] >= w[0], "{medians:?}");
    }
}
