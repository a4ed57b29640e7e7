//! Random Hamiltonians hiding an EP of known order, eigenvalue and response
//! strength, and the Monte Carlo harness that runs the estimator on them.
//!
//! Every realization draws from its own ChaCha20 stream: the key is derived
//! from the master seed and the stream id is the realization index. Results
//! therefore do not depend on how realizations are scheduled across threads.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimator::{estimate_xi, EstimateConfig, DEFAULT_KICK, DEFAULT_KICK_SEED, DEFAULT_TAU};
use crate::jordan::{jordan_block, EpSpec};
use crate::linalg::{c64, condition_number, qr, CMatrix};
use crate::response::xi_exact;
use crate::svg;

/// Similarity transforms with a worse condition number are redrawn.
pub const MAX_CONDITION: f64 = 1e12;
const MAX_REDRAWS: usize = 1000;

/// Real and imaginary parts uniform on [−1/2, 1/2).
pub fn random_complex_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| {
        c64(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5))
    })
}

/// Unitary from the QR factorization of a random complex matrix, with the
/// phases of R's diagonal moved into Q so the factorization is unique.
pub fn random_unitary<R: Rng + ?Sized>(m: usize, rng: &mut R) -> CMatrix {
    let z = random_complex_matrix(rng, m, m);
    let (q, r) = qr(&z);
    let phases: Vec<Complex64> = (0..m)
        .map(|k| {
            let d = r.get(k, k);
            if d.norm() == 0.0 {
                c64(1.0, 0.0)
            } else {
                d / d.norm()
            }
        })
        .collect();
    CMatrix::from_fn(m, m, |i, j| q.get(i, j) * phases[j])
}

/// `Q J Q^{-1}` for a Jordan block J of order n at `e` and random Q.
pub fn random_similar_ep<R: Rng + ?Sized>(rng: &mut R, n: usize, e: Complex64) -> Result<EpSpec> {
    Ok(random_similar_ep_counted(rng, n, e)?.0)
}

fn random_similar_ep_counted<R: Rng + ?Sized>(rng: &mut R, n: usize, e: Complex64) -> Result<(EpSpec, usize)> {
    let j = jordan_block(n, e);
    for redraws in 0..MAX_REDRAWS {
        let q = random_complex_matrix(rng, n, n);
        if condition_number(&q)? > MAX_CONDITION {
            continue;
        }
        let Some(q_inv) = q.try_inverse() else { continue };
        match EpSpec::new(&(&q * &j) * &q_inv, e, n) {
            Ok(ep) => return Ok((ep, redraws)),
            Err(Error::NotAnEp { .. }) => continue,
            Err(other) => return Err(other),
        }
    }
    Err(Error::Numerical(format!(
        "no usable similarity transform after {MAX_REDRAWS} draws"
    )))
}

/// Log-spaced histogram bins on [lo, hi].
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HistogramSpec {
    pub bins: usize,
    pub lo: f64,
    pub hi: f64,
}

impl Default for HistogramSpec {
    fn default() -> Self {
        Self {
            bins: 60,
            lo: 1e-12,
            hi: 1.0,
        }
    }
}

impl HistogramSpec {
    pub fn edges(&self) -> Vec<f64> {
        let (a, b) = (self.lo.log10(), self.hi.log10());
        (0..=self.bins)
            .map(|k| 10f64.powf(a + (b - a) * k as f64 / self.bins as f64))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnsembleConfig {
    pub m: usize,
    pub n: usize,
    #[serde(with = "crate::serde_complex")]
    pub e_ep: Complex64,
    pub realizations: usize,
    pub master_seed: u64,
    pub histogram: HistogramSpec,
    pub tau: f64,
    pub degenerate_kick: f64,
    pub kick_seed: u64,
    /// Thread count; `None` uses the global pool. Not part of the report.
    #[serde(skip)]
    pub workers: Option<usize>,
}

impl EnsembleConfig {
    pub fn new(m: usize, n: usize, e_ep: Complex64, realizations: usize, master_seed: u64) -> Self {
        Self {
            m,
            n,
            e_ep,
            realizations,
            master_seed,
            histogram: HistogramSpec::default(),
            tau: DEFAULT_TAU,
            degenerate_kick: DEFAULT_KICK,
            kick_seed: DEFAULT_KICK_SEED,
            workers: None,
        }
    }

    /// 20×20, third order, E_EP = −0.05i, 10⁴ realizations.
    pub fn standard(master_seed: u64) -> Self {
        Self::new(20, 3, c64(0.0, -0.05), 10_000, master_seed)
    }

    pub fn validate(&self) -> Result<()> {
        if !(2 <= self.n && self.n < self.m) {
            return Err(Error::InvalidInput(format!(
                "need 2 <= n < m, got n={}, m={}",
                self.n, self.m
            )));
        }
        if self.realizations == 0 {
            return Err(Error::InvalidInput("need at least one realization".into()));
        }
        let h = &self.histogram;
        if h.bins == 0 || !(h.lo > 0.0 && h.hi > h.lo) {
            return Err(Error::InvalidInput("histogram needs bins > 0 and 0 < lo < hi".into()));
        }
        self.estimate_config().validate()
    }

    pub fn estimate_config(&self) -> EstimateConfig {
        EstimateConfig {
            e_ep: self.e_ep,
            n: self.n,
            tau: self.tau,
            degenerate_kick: self.degenerate_kick,
            kick_seed: self.kick_seed,
            average_ring: false,
        }
    }

    fn rng_for(&self, index: usize) -> ChaCha20Rng {
        let mut rng = ChaCha20Rng::seed_from_u64(self.master_seed);
        rng.set_stream(index as u64);
        rng
    }
}

/// One realization of the embedded-EP construction.
#[derive(Clone, Debug)]
pub struct EpSample {
    pub index: usize,
    /// `U · diag(H_EP, H_a) · U†`.
    pub h: CMatrix,
    /// `diag(H_EP, H_a)` before conjugation.
    pub block: CMatrix,
    pub ep: EpSpec,
    pub xi_true: f64,
    /// Similarity transforms rejected as ill-conditioned.
    pub redraws: usize,
}

pub fn random_ep_hamiltonian(cfg: &EnsembleConfig, index: usize) -> Result<EpSample> {
    cfg.validate()?;
    let mut rng = cfg.rng_for(index);
    let (ep, redraws) = random_similar_ep_counted(&mut rng, cfg.n, cfg.e_ep)?;
    let xi_true = xi_exact(&ep)?;
    let h_a = random_complex_matrix(&mut rng, cfg.m - cfg.n, cfg.m - cfg.n);
    let u = random_unitary(cfg.m, &mut rng);
    let block = CMatrix::block_diag(ep.h_ep(), &h_a);
    let h = &(&u * &block) * &u.adjoint();
    Ok(EpSample {
        index,
        h,
        block,
        ep,
        xi_true,
        redraws,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Record {
    pub index: usize,
    pub xi_true: f64,
    pub xi_num: f64,
    pub delta_xi: f64,
    pub fallback_used: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Failure {
    pub index: usize,
    pub kind: String,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    /// Probability density over the in-range samples; Σ density·width = 1.
    pub density: Vec<f64>,
    /// Samples below the first edge (including exact zeros).
    pub underflow: u64,
    /// Samples at or above the last edge.
    pub overflow: u64,
}

impl Histogram {
    pub fn build(spec: &HistogramSpec, values: &[f64]) -> Self {
        let edges = spec.edges();
        let mut counts = vec![0u64; spec.bins];
        let (mut underflow, mut overflow) = (0, 0);
        let (a, b) = (spec.lo.log10(), spec.hi.log10());
        for &v in values {
            if !(v >= spec.lo) {
                underflow += 1;
            } else if v >= spec.hi {
                overflow += 1;
            } else {
                let mut k = (((v.log10() - a) / (b - a)) * spec.bins as f64) as usize;
                k = k.min(spec.bins - 1);
                // edges are rounded; settle boundary cases against them
                while k > 0 && v < edges[k] {
                    k -= 1;
                }
                while k + 1 < spec.bins && v >= edges[k + 1] {
                    k += 1;
                }
                counts[k] += 1;
            }
        }
        let in_range: u64 = counts.iter().sum();
        let density = counts
            .iter()
            .enumerate()
            .map(|(k, &c)| {
                if in_range == 0 {
                    0.0
                } else {
                    c as f64 / (in_range as f64 * (edges[k + 1] - edges[k]))
                }
            })
            .collect();
        Self {
            edges,
            counts,
            density,
            underflow,
            overflow,
        }
    }

    pub fn integral(&self) -> f64 {
        self.density
            .iter()
            .enumerate()
            .map(|(k, d)| d * (self.edges[k + 1] - self.edges[k]))
            .sum()
    }

    /// `bin_lo,bin_hi,density`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_lo,bin_hi,density\n");
        for (k, d) in self.density.iter().enumerate() {
            out.push_str(&format!("{:e},{:e},{:e}\n", self.edges[k], self.edges[k + 1], d));
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Quantiles {
    pub p50: f64,
    pub p99: f64,
    pub max: f64,
}

/// Nearest-rank quantile of sorted data.
fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    let idx = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len()) - 1;
    sorted[idx]
}

impl Quantiles {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Some(Self {
            p50: nearest_rank(&v, 0.5),
            p99: nearest_rank(&v, 0.99),
            max: *v.last().unwrap(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnsembleReport {
    pub config: EnsembleConfig,
    pub records: Vec<Record>,
    pub failed: usize,
    pub failures: Vec<Failure>,
    pub histogram: Histogram,
    pub quantiles: Option<Quantiles>,
}

pub fn run_experiment(cfg: &EnsembleConfig) -> Result<EnsembleReport> {
    run_experiment_with(cfg, |_| {})
}

/// As [`run_experiment`], calling `inspect` on every generated sample.
pub fn run_experiment_with<F>(cfg: &EnsembleConfig, inspect: F) -> Result<EnsembleReport>
where
    F: Fn(&EpSample) + Sync,
{
    cfg.validate()?;
    let est = cfg.estimate_config();
    let one = |index: usize| -> std::result::Result<Record, Failure> {
        let fail = |e: Error| Failure {
            index,
            kind: e.kind().to_string(),
            message: e.to_string(),
        };
        let sample = random_ep_hamiltonian(cfg, index).map_err(fail)?;
        inspect(&sample);
        let rep = estimate_xi(&sample.h, &est).map_err(fail)?;
        Ok(Record {
            index,
            xi_true: sample.xi_true,
            xi_num: rep.xi_num,
            delta_xi: (rep.xi_num - sample.xi_true).abs() / sample.xi_true,
            fallback_used: rep.fallback_used,
        })
    };
    let run = || (0..cfg.realizations).into_par_iter().map(one).collect::<Vec<_>>();
    let outcomes = match cfg.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .map_err(|e| Error::Internal(format!("thread pool: {e}")))?
            .install(run),
        None => run(),
    };

    let mut records = Vec::with_capacity(outcomes.len());
    let mut failures = Vec::new();
    for o in outcomes {
        match o {
            Ok(r) => records.push(r),
            Err(f) => failures.push(f),
        }
    }
    let deltas: Vec<f64> = records.iter().map(|r| r.delta_xi).collect();
    Ok(EnsembleReport {
        config: cfg.clone(),
        histogram: Histogram::build(&cfg.histogram, &deltas),
        quantiles: Quantiles::of(&deltas),
        failed: failures.len(),
        failures,
        records,
    })
}

/// Gray level per entry: |H_ij| scaled linearly so the largest is 0 (black)
/// and zero is 255 (white).
pub fn grayscale_levels(h: &CMatrix) -> Vec<Vec<u8>> {
    let max = h.max_abs();
    (0..h.rows())
        .map(|i| {
            (0..h.cols())
                .map(|j| {
                    if max == 0.0 {
                        255
                    } else {
                        (255.0 * (1.0 - h.get(i, j).norm() / max)).round() as u8
                    }
                })
                .collect()
        })
        .collect()
}

/// Grayscale heat map of |H_ij| as an SVG grid.
pub fn matrix_heatmap(h: &CMatrix) -> String {
    matrix_heatmap_with(h, None)
}

/// As [`matrix_heatmap`], with a `<metadata>` payload.
pub fn matrix_heatmap_with(h: &CMatrix, metadata: Option<&str>) -> String {
    svg::heatmap(&grayscale_levels(h), metadata)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jordan::{build_chain, xi_from_chain};
    use crate::linalg::singular_values;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn unitary_of_size_one_is_a_phase() {
        let u = random_unitary(1, &mut ChaCha8Rng::seed_from_u64(1));
        assert!((u.get(0, 0).norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn unitaries_have_unit_singular_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for m in [2, 5, 20] {
            let u = random_unitary(m, &mut rng);
            let gram = &u.adjoint() * &u;
            assert!((&gram - &CMatrix::identity(m)).max_abs() <= 1e-12 * m as f64);
            for s in singular_values(&u).unwrap() {
                assert!((s - 1.0).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn unitary_entries_average_to_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let draws = 10_000;
        let mut sum = [c64(0.0, 0.0); 4];
        for _ in 0..draws {
            let u = random_unitary(2, &mut rng);
            for (k, s) in sum.iter_mut().enumerate() {
                *s += u.get(k / 2, k % 2);
            }
        }
        // E|u_ij|² = 1/2, so each component has variance 1/4
        let sigma = (0.25f64 / draws as f64).sqrt();
        for s in sum {
            let mean = s / draws as f64;
            assert!(mean.re.abs() <= 5.0 * sigma && mean.im.abs() <= 5.0 * sigma, "{mean}");
        }
    }

    #[test]
    fn samples_are_reproducible_and_xi_routes_agree() {
        let cfg = EnsembleConfig::new(8, 3, c64(0.0, -0.05), 4, 99);
        for idx in 0..4 {
            let a = random_ep_hamiltonian(&cfg, idx).unwrap();
            let b = random_ep_hamiltonian(&cfg, idx).unwrap();
            assert_eq!(a.h, b.h);
            let chain = xi_from_chain(&build_chain(&a.ep).unwrap()).unwrap();
            assert!((chain - a.xi_true).abs() <= 1e-9 * a.xi_true);
        }
        assert_ne!(
            random_ep_hamiltonian(&cfg, 0).unwrap().h,
            random_ep_hamiltonian(&cfg, 1).unwrap().h
        );
    }

    #[test]
    fn order_five_ring_near_ep() {
        let cfg = EnsembleConfig::new(20, 5, c64(0.0, -0.05), 1, 5);
        let s = random_ep_hamiltonian(&cfg, 0).unwrap();
        let sys = crate::linalg::eig_full(&s.h, 1e-9).unwrap();
        let mut d: Vec<f64> = sys.eigenvalues.iter().map(|e| (e - cfg.e_ep).norm()).collect();
        d.sort_by(f64::total_cmp);
        // five eigenvalues split only by roundoff, the rest well away
        assert!(d[4] < 1e-2, "{d:?}");
        assert!(d[4] > 0.0);
        assert!(d[5] > 10.0 * d[4], "{d:?}");
    }

    #[test]
    fn trivial_embedding_returns_jordan_block() {
        // the construction with Q = U = I reduces to J itself
        let j = jordan_block(3, c64(0.0, -0.05));
        let ep = EpSpec::new(j.clone(), c64(0.0, -0.05), 3).unwrap();
        assert!((xi_exact(&ep).unwrap() - 1.0).abs() < 1e-15);
        let h = &(&CMatrix::identity(3) * &j) * &CMatrix::identity(3);
        assert_eq!(h, j);
    }

    #[test]
    fn histogram_is_normalized() {
        let spec = HistogramSpec::default();
        let values: Vec<f64> = (0..1000).map(|k| 10f64.powf(-11.0 + 10.0 * k as f64 / 1000.0)).collect();
        let mut with_outliers = values.clone();
        with_outliers.extend([0.0, 5.0, 1e-13]);
        let h = Histogram::build(&spec, &with_outliers);
        assert_eq!(h.counts.iter().sum::<u64>(), 1000);
        assert_eq!((h.underflow, h.overflow), (2, 1));
        assert!((h.integral() - 1.0).abs() <= 1e-9);
        assert_eq!(h.to_csv().lines().count(), 61);
    }

    #[test]
    fn quantiles_nearest_rank() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        let q = Quantiles::of(&v).unwrap();
        assert_eq!((q.p50, q.p99, q.max), (50.0, 99.0, 100.0));
        assert!(Quantiles::of(&[]).is_none());
    }

    #[test]
    fn experiment_is_independent_of_worker_count() {
        let mut cfg = EnsembleConfig::new(10, 3, c64(0.0, -0.05), 24, 7);
        cfg.workers = Some(1);
        let a = run_experiment(&cfg).unwrap();
        cfg.workers = Some(4);
        let mut b = run_experiment(&cfg).unwrap();
        b.config.workers = Some(1);
        assert_eq!(a, b);
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert_eq!(a.failed, 0);
        assert!(a.quantiles.unwrap().max < 1e-2);
    }

    #[test]
    fn heatmap_levels() {
        assert!(grayscale_levels(&CMatrix::zeros(3, 3)).iter().flatten().all(|&g| g == 255));
        let mut h = CMatrix::zeros(3, 3);
        h.set(1, 2, c64(5.0, 0.0));
        let levels = grayscale_levels(&h);
        assert_eq!(levels.iter().flatten().filter(|&&g| g == 0).count(), 1);
        assert_eq!(levels[1][2], 0);
    }

    #[test]
    fn ep_block_is_darker_before_conjugation() {
        let cfg = EnsembleConfig::new(20, 5, c64(0.0, -0.05), 1, 1);
        let s = random_ep_hamiltonian(&cfg, 0).unwrap();
        let levels = grayscale_levels(&s.block);
        let mean = |r: std::ops::Range<usize>| {
            let cells: Vec<f64> = r.clone().flat_map(|i| r.clone().map(move |j| (i, j))).map(|(i, j)| levels[i][j] as f64).collect();
            cells.iter().sum::<f64>() / cells.len() as f64
        };
        assert!(mean(0..5) < mean(5..20), "{} vs {}", mean(0..5), mean(5..20));
    }
}
