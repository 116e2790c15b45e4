//! Empirical restricted isometry / angle-preserving / orthogonality constants.
//!
//! Estimators draw lifted points from the model sets and report the largest
//! observed deviation. That is a lower bound on the restricted supremum, not a
//! certificate. Trials use independent ChaCha streams of the base seed and are
//! reduced in trial order, so reports do not depend on the worker count.

use std::time::Instant;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operator::{
    matrix_inner, Dictionary, DictionaryKind, Ensemble, LiftedPoint, SamplingMode,
};
use crate::rng::{complex_normal, derive_seed, rng_from_seed, trial_rng, SeededRng};
use crate::signal::{dot, norm2, orthogonalize_pair, ModelSpec, Signal};

/// Per-trial cap on orthogonalization resamples.
pub const ORTHO_RESAMPLE_CAP: usize = 100;
/// Guard for exhaustive support enumeration.
pub const EXACT_RIP_MAX_N: usize = 16;
pub const EXACT_RIP_MAX_S: usize = 4;
/// Guard for dense isotropy averaging.
pub const ISOTROPY_MAX_N: usize = 64;

const BOOTSTRAP_RESAMPLES: usize = 200;
const BOOTSTRAP_TAG: u64 = 0xB007;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateKind {
    Rip,
    Rap,
    RopBoth,
    RopEither,
    RipMatrix,
}

impl EstimateKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EstimateKind::Rip => "rip",
            EstimateKind::Rap => "rap",
            EstimateKind::RopBoth => "rop_both",
            EstimateKind::RopEither => "rop_either",
            EstimateKind::RipMatrix => "rip_matrix",
        }
    }
}

/// Pairs for the orthogonality estimator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orthogonality {
    /// `⟨u, û⟩ = 0` and `⟨v, v̂⟩ = 0`.
    Both,
    /// `⟨u, û⟩ = 0` only.
    Either,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RapMode {
    #[default]
    General,
    /// Force `û = u`, `v̂ = v`.
    Diagonal,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quantiles {
    pub q50: f64,
    pub q90: f64,
    pub q99: f64,
}

/// The sample attaining the maximum deviation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub trial: u64,
    pub point: LiftedPoint,
    pub partner: Option<LiftedPoint>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EstimateReport {
    pub kind: EstimateKind,
    pub n: usize,
    pub m: usize,
    pub s1: usize,
    pub s2: usize,
    pub mu1: Option<f64>,
    pub mu2: Option<f64>,
    pub trials: usize,
    pub delta_hat: f64,
    pub quantiles: Quantiles,
    pub mean: f64,
    /// Standard error of `mean`.
    pub std_error: f64,
    /// Bootstrap standard error of `delta_hat`.
    pub max_std_error: f64,
    pub witness: Witness,
    pub seed: u64,
    pub wall_time: f64,
    /// Orthogonalization resamples (ROP only).
    pub resampled: usize,
    /// Largest `|⟨u, û⟩|` (and `|⟨v, v̂⟩|` in mode both) over accepted trials.
    pub max_orthogonality_residual: Option<f64>,
    /// Per-trial deviations in trial order.
    #[serde(skip)]
    pub values: Vec<f64>,
}

/// Flat CSV form of an [`EstimateReport`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub kind: String,
    pub n: usize,
    pub m: usize,
    pub s1: usize,
    pub s2: usize,
    pub mu1: Option<f64>,
    pub mu2: Option<f64>,
    pub trials: usize,
    pub delta_hat: f64,
    pub q50: f64,
    pub q90: f64,
    pub q99: f64,
    pub seed: u64,
    pub wall_time: Option<f64>,
}

impl EstimateReport {
    /// CSV row; `wall_time` is left empty unless `with_timing`, which keeps
    /// repeated runs byte-identical.
    pub fn row(&self, with_timing: bool) -> ReportRow {
        ReportRow {
            kind: self.kind.as_str().to_string(),
            n: self.n,
            m: self.m,
            s1: self.s1,
            s2: self.s2,
            mu1: self.mu1,
            mu2: self.mu2,
            trials: self.trials,
            delta_hat: self.delta_hat,
            q50: self.quantiles.q50,
            q90: self.quantiles.q90,
            q99: self.quantiles.q99,
            seed: self.seed,
            wall_time: with_timing.then_some(self.wall_time),
        }
    }
}

struct Trial {
    value: f64,
    point: LiftedPoint,
    partner: Option<LiftedPoint>,
    resamples: usize,
    ortho: f64,
}

impl Trial {
    fn plain(value: f64, point: LiftedPoint, partner: Option<LiftedPoint>) -> Self {
        Trial {
            value,
            point,
            partner,
            resamples: 0,
            ortho: 0.0,
        }
    }
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn bootstrap_max_se(values: &[f64], seed: u64) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mut rng = rng_from_seed(derive_seed(seed, &[BOOTSTRAP_TAG]));
    let maxima: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
        .map(|_| {
            (0..n)
                .map(|_| values[rng.random_range(0..n)])
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    std_dev(&maxima)
}

fn std_dev(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    if x.len() < 2 {
        return 0.0;
    }
    let mean = x.iter().sum::<f64>() / n;
    (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

struct Labels {
    kind: EstimateKind,
    n: usize,
    m: usize,
    s1: usize,
    s2: usize,
    mu1: Option<f64>,
    mu2: Option<f64>,
}

impl Labels {
    fn from_specs(kind: EstimateKind, ens: &Ensemble, su: &ModelSpec, sv: &ModelSpec) -> Self {
        Labels {
            kind,
            n: ens.n(),
            m: ens.m(),
            s1: su.s,
            s2: sv.s,
            mu1: su.mu,
            mu2: sv.mu,
        }
    }
}

fn run_trials<F>(labels: Labels, trials: usize, seed: u64, track_ortho: bool, f: F) -> Result<EstimateReport>
where
    F: Fn(&mut SeededRng) -> Result<Trial> + Sync,
{
    if trials == 0 {
        return Err(Error::invalid("trials must be at least 1"));
    }
    let start = Instant::now();
    let outcomes: Vec<Trial> = (0..trials as u64)
        .into_par_iter()
        .map(|t| f(&mut trial_rng(seed, t)))
        .collect::<Result<_>>()?;
    let values: Vec<f64> = outcomes.iter().map(|t| t.value).collect();
    // First maximal trial, so ties resolve the same way every run.
    let best = values
        .iter()
        .enumerate()
        .fold(0, |b, (i, &v)| if v > values[b] { i } else { b });
    let mut sorted = values.clone();
    sorted.sort_by(f64::total_cmp);
    let mean = values.iter().sum::<f64>() / trials as f64;
    let resampled = outcomes.iter().map(|t| t.resamples).sum();
    let max_ortho = outcomes.iter().map(|t| t.ortho).fold(0.0, f64::max);
    let max_std_error = bootstrap_max_se(&values, seed);
    let winner = &outcomes[best];
    Ok(EstimateReport {
        kind: labels.kind,
        n: labels.n,
        m: labels.m,
        s1: labels.s1,
        s2: labels.s2,
        mu1: labels.mu1,
        mu2: labels.mu2,
        trials,
        delta_hat: values[best],
        quantiles: Quantiles {
            q50: quantile_sorted(&sorted, 0.5),
            q90: quantile_sorted(&sorted, 0.9),
            q99: quantile_sorted(&sorted, 0.99),
        },
        mean,
        std_error: std_dev(&values) / (trials as f64).sqrt(),
        max_std_error,
        witness: Witness {
            trial: best as u64,
            point: winner.point.clone(),
            partner: winner.partner.clone(),
        },
        seed,
        wall_time: start.elapsed().as_secs_f64(),
        resampled,
        max_orthogonality_residual: track_ortho.then_some(max_ortho),
        values,
    })
}

fn check_specs(ens: &Ensemble, su: &ModelSpec, sv: &ModelSpec) -> Result<()> {
    su.validate()?;
    sv.validate()?;
    for spec in [su, sv] {
        if spec.n != ens.n() {
            return Err(Error::Dimension {
                expected: ens.n(),
                got: spec.n,
            });
        }
    }
    Ok(())
}

/// `|‖A(uvᵀ)‖² − ‖uvᵀ‖_F²| / ‖uvᵀ‖_F²`
pub fn rip_deviation(ens: &Ensemble, p: &LiftedPoint) -> Result<f64> {
    let w = ens.forward(p)?;
    let energy = p.frobenius_norm().powi(2);
    Ok((dot(&w, &w).re - energy).abs() / energy)
}

/// `|⟨A(ŵ), A(w)⟩ − ⟨ŵ, w⟩| / (‖ŵ‖_F ‖w‖_F)`
pub fn rap_deviation(ens: &Ensemble, p: &LiftedPoint, q: &LiftedPoint) -> Result<f64> {
    let a = ens.forward(q)?;
    let b = ens.forward(p)?;
    let gap = dot(&a, &b) - q.inner(p);
    Ok(gap.norm() / (p.frobenius_norm() * q.frobenius_norm()))
}

/// `|⟨A(ŵ), A(w)⟩| / (‖ŵ‖_F ‖w‖_F)`
pub fn rop_value(ens: &Ensemble, p: &LiftedPoint, q: &LiftedPoint) -> Result<f64> {
    let a = ens.forward(q)?;
    let b = ens.forward(p)?;
    Ok(dot(&a, &b).norm() / (p.frobenius_norm() * q.frobenius_norm()))
}

/// The same quantity as [`rap_deviation`], through the dense adjoint.
pub fn rap_deviation_dense(ens: &Ensemble, p: &LiftedPoint, q: &LiftedPoint) -> Result<f64> {
    let ata = ens.normal_dense(&p.to_dense())?;
    let gap = matrix_inner(&q.to_dense(), &ata) - q.inner(p);
    Ok(gap.norm() / (p.frobenius_norm() * q.frobenius_norm()))
}

pub fn estimate_rip(
    ens: &Ensemble,
    spec_u: &ModelSpec,
    spec_v: &ModelSpec,
    trials: usize,
    seed: u64,
) -> Result<EstimateReport> {
    check_specs(ens, spec_u, spec_v)?;
    let labels = Labels::from_specs(EstimateKind::Rip, ens, spec_u, spec_v);
    run_trials(labels, trials, seed, false, |rng| {
        let p = draw_pair(ens, spec_u, spec_v, rng)?;
        Ok(Trial::plain(rip_deviation(ens, &p)?, p, None))
    })
}

fn draw_pair(ens: &Ensemble, su: &ModelSpec, sv: &ModelSpec, rng: &mut SeededRng) -> Result<LiftedPoint> {
    let u = ens.sample_coefficients(su, rng)?;
    let v = ens.sample_coefficients(sv, rng)?;
    Ok(LiftedPoint::new(u, v))
}

pub fn estimate_rap(
    ens: &Ensemble,
    spec_u: &ModelSpec,
    spec_v: &ModelSpec,
    trials: usize,
    mode: RapMode,
    seed: u64,
) -> Result<EstimateReport> {
    check_specs(ens, spec_u, spec_v)?;
    let labels = Labels::from_specs(EstimateKind::Rap, ens, spec_u, spec_v);
    run_trials(labels, trials, seed, false, |rng| {
        let p = draw_pair(ens, spec_u, spec_v, rng)?;
        match mode {
            RapMode::Diagonal => Ok(Trial::plain(rip_deviation(ens, &p)?, p, None)),
            RapMode::General => {
                let q = draw_pair(ens, spec_u, spec_v, rng)?;
                Ok(Trial::plain(rap_deviation(ens, &p, &q)?, p, Some(q)))
            }
        }
    })
}

/// Options for [`estimate_rop`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RopOptions {
    pub orthogonality: Orthogonality,
    /// Evaluate `⟨√(n/m)S(Φ̃û ⊛ Ψv̂), √(n/m)S(Φu ⊛ Ψ̃v)⟩` with independent
    /// copies `Φ̃`, `Ψ̃`.
    pub decoupled: bool,
}

impl RopOptions {
    pub fn new(orthogonality: Orthogonality) -> Self {
        RopOptions {
            orthogonality,
            decoupled: false,
        }
    }
}

/// Orthogonalize `hat` against `base` and check membership, with flatness
/// measured through the ensemble's dictionary.
fn orthogonal_partner(ens: &Ensemble, base: &Signal, hat: &Signal, spec: &ModelSpec) -> Result<Signal> {
    let dense = matches!(ens.dictionary(spec.side), Dictionary::Dense(_));
    let local = if dense { ModelSpec { mu: None, ..*spec } } else { *spec };
    let out = orthogonalize_pair(base, hat, &local)?;
    if dense && !ens.admits(spec, &out) {
        return Err(Error::Infeasible("orthogonal partner left the flat set".into()));
    }
    Ok(out)
}

fn recoverable(e: &Error) -> bool {
    matches!(e, Error::Parallel | Error::Infeasible(_) | Error::FlatNonConvergence { .. })
}

pub fn estimate_rop(
    ens: &Ensemble,
    spec_u: &ModelSpec,
    spec_v: &ModelSpec,
    trials: usize,
    opts: RopOptions,
    seed: u64,
) -> Result<EstimateReport> {
    check_specs(ens, spec_u, spec_v)?;
    let kind = match opts.orthogonality {
        Orthogonality::Both => EstimateKind::RopBoth,
        Orthogonality::Either => EstimateKind::RopEither,
    };
    let copies = if opts.decoupled {
        let (phi_t, psi_t) = ens.dictionary_copies();
        Some((
            ens.with_dictionaries(phi_t, ens.psi().clone())?,
            ens.with_dictionaries(ens.phi().clone(), psi_t)?,
        ))
    } else {
        None
    };
    let labels = Labels::from_specs(kind, ens, spec_u, spec_v);
    run_trials(labels, trials, seed, true, |rng| {
        let mut resamples = 0;
        loop {
            let p = draw_pair(ens, spec_u, spec_v, rng)?;
            let q = draw_pair(ens, spec_u, spec_v, rng)?;
            let partner = (|| -> Result<LiftedPoint> {
                let u_hat = orthogonal_partner(ens, &p.u, &q.u, spec_u)?;
                let v_hat = match opts.orthogonality {
                    Orthogonality::Both => orthogonal_partner(ens, &p.v, &q.v, spec_v)?,
                    Orthogonality::Either => q.v.clone(),
                };
                Ok(LiftedPoint::new(u_hat, v_hat))
            })();
            let q = match partner {
                Ok(q) => q,
                Err(e) if recoverable(&e) && resamples < ORTHO_RESAMPLE_CAP => {
                    resamples += 1;
                    continue;
                }
                Err(e) => return Err(e),
            };
            let mut ortho = p.u.dot(&q.u).norm();
            if opts.orthogonality == Orthogonality::Both {
                ortho = ortho.max(p.v.dot(&q.v).norm());
            }
            let value = match &copies {
                None => rop_value(ens, &p, &q)?,
                Some((left, right)) => decoupled_value(left, right, &p, &q)?,
            };
            return Ok(Trial {
                value,
                point: p,
                partner: Some(q),
                resamples,
                ortho,
            });
        }
    })
}

fn decoupled_value(left: &Ensemble, right: &Ensemble, p: &LiftedPoint, q: &LiftedPoint) -> Result<f64> {
    let a = left.forward(q)?;
    let b = right.forward(p)?;
    Ok(dot(&a, &b).norm() / (p.frobenius_norm() * q.frobenius_norm()))
}

/// Monte Carlo RIP constant of an explicit matrix over the model set.
pub fn estimate_rip_matrix(a: &DMatrix<Complex64>, spec: &ModelSpec, trials: usize, seed: u64) -> Result<EstimateReport> {
    spec.validate()?;
    if spec.n != a.ncols() {
        return Err(Error::Dimension {
            expected: a.ncols(),
            got: spec.n,
        });
    }
    let labels = Labels {
        kind: EstimateKind::RipMatrix,
        n: a.ncols(),
        m: a.nrows(),
        s1: spec.s,
        s2: 0,
        mu1: spec.mu,
        mu2: None,
    };
    run_trials(labels, trials, seed, false, |rng| {
        let x = crate::signal::sample_model(spec, rng)?;
        let ax = a * nalgebra::DVector::from_column_slice(x.entries());
        let energy = x.norm2().powi(2);
        let value = (ax.norm_squared() - energy).abs() / energy;
        let witness = LiftedPoint::new(x, Signal::basis(1, 0));
        Ok(Trial::plain(value, witness, None))
    })
}

/// Exact `(Γ_s, δ)`-RIP constant by enumerating all supports.
pub fn exact_rip_small(a: &DMatrix<Complex64>, s: usize) -> Result<f64> {
    let n = a.ncols();
    if n > EXACT_RIP_MAX_N || s > EXACT_RIP_MAX_S {
        return Err(Error::Guard {
            what: "exact_rip_small",
            n,
            limit: EXACT_RIP_MAX_N,
        });
    }
    if s == 0 || s > n {
        return Err(Error::invalid(format!("s = {s} outside [1, {n}]")));
    }
    let mut worst: f64 = 0.0;
    let mut support: Vec<usize> = (0..s).collect();
    loop {
        let cols = a.select_columns(support.iter());
        let gram = cols.adjoint() * &cols;
        let eig = gram.symmetric_eigen().eigenvalues;
        for &lam in eig.iter() {
            worst = worst.max((lam - 1.0).abs());
        }
        if !next_combination(&mut support, n) {
            break;
        }
    }
    Ok(worst)
}

fn next_combination(c: &mut [usize], n: usize) -> bool {
    let k = c.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if c[i] < n - k + i {
            c[i] += 1;
            for j in i + 1..k {
                c[j] = c[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Real Gaussian `m × n` matrix with `N(0, 1/m)` entries, stored complex.
pub fn gaussian_matrix<R: Rng + ?Sized>(m: usize, n: usize, rng: &mut R) -> DMatrix<Complex64> {
    let sd = 1.0 / (m as f64).sqrt();
    let mut out = DMatrix::from_element(m, n, Complex64::new(0.0, 0.0));
    for j in 0..n {
        for i in 0..m {
            let z: f64 = rng.sample(rand_distr::StandardNormal);
            out[(i, j)] = Complex64::new(sd * z, 0.0);
        }
    }
    out
}

/// Which dictionary is averaged over in [`isotropy_check`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Averaged {
    /// Average over `Φ`; target `X (Ψ*Ψ)ᵀ`.
    Left,
    /// Average over `Ψ`; target `Φ* Φ X`.
    Right,
}

#[derive(Clone, Debug)]
pub struct IsotropyReport {
    pub relative_error: f64,
    pub draws: usize,
    pub target: DMatrix<Complex64>,
}

/// Average `A*A(X)` over fresh Gaussian draws of one dictionary, the other
/// fixed (`fixed_kind`), and compare with the conditional expectation.
#[allow(clippy::too_many_arguments)]
pub fn isotropy_check(
    n: usize,
    m: usize,
    fixed_kind: DictionaryKind,
    averaged: Averaged,
    x: &LiftedPoint,
    draws: usize,
    seed: u64,
) -> Result<IsotropyReport> {
    if n > ISOTROPY_MAX_N {
        return Err(Error::Guard {
            what: "isotropy_check",
            n,
            limit: ISOTROPY_MAX_N,
        });
    }
    if draws == 0 {
        return Err(Error::invalid("draws must be at least 1"));
    }
    let mut setup = rng_from_seed(seed);
    let omega = crate::operator::sample_omega(n, m, SamplingMode::WithoutReplacement, &mut setup)?;
    let fixed = Dictionary::generate(fixed_kind, n, &mut setup);
    let xd = x.to_dense();
    let target = match averaged {
        Averaged::Left => {
            let f = fixed.to_dense();
            &xd * (f.adjoint() * &f).transpose()
        }
        Averaged::Right => {
            let f = fixed.to_dense();
            f.adjoint() * &f * &xd
        }
    };
    let sum = (0..draws as u64)
        .into_par_iter()
        .map(|d| -> Result<DMatrix<Complex64>> {
            let fresh = Dictionary::gaussian(n, &mut trial_rng(seed, d + 1));
            let ens = match averaged {
                Averaged::Left => Ensemble::from_parts(omega.clone(), fresh, fixed.clone())?,
                Averaged::Right => Ensemble::from_parts(omega.clone(), fixed.clone(), fresh)?,
            };
            let b = ens.forward(x)?;
            ens.adjoint_dense(&b)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(DMatrix::from_element(n, n, Complex64::new(0.0, 0.0)), |acc, a| acc + a);
    let mean = sum / Complex64::new(draws as f64, 0.0);
    let relative_error = (&mean - &target).norm() / target.norm();
    Ok(IsotropyReport {
        relative_error,
        draws,
        target,
    })
}

/// Sign convention in the polarization formula.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Polarization {
    /// `¼ Σ_α α ‖Mξ + α M'ξ‖²`
    AlphaInside,
    /// `¼ Σ_α α ‖Mξ + ᾱ M'ξ‖²`
    ConjugateInside,
}

/// `|⟨M'ξ, Mξ⟩ − ¼ Σ_{α ∈ {±1, ±i}} α ‖Mξ + c(α) M'ξ‖²|`.
pub fn polarization_residual(
    mp: &DMatrix<Complex64>,
    m: &DMatrix<Complex64>,
    xi: &[Complex64],
    convention: Polarization,
) -> Result<f64> {
    if mp.shape() != m.shape() || m.ncols() != xi.len() {
        return Err(Error::Dimension {
            expected: m.ncols(),
            got: xi.len(),
        });
    }
    let x = nalgebra::DVector::from_column_slice(xi);
    let a: Vec<Complex64> = (mp * &x).iter().copied().collect();
    let b: Vec<Complex64> = (m * &x).iter().copied().collect();
    let alphas = [
        Complex64::new(1.0, 0.0),
        Complex64::new(-1.0, 0.0),
        Complex64::new(0.0, 1.0),
        Complex64::new(0.0, -1.0),
    ];
    let mut sum = Complex64::new(0.0, 0.0);
    for alpha in alphas {
        let c = match convention {
            Polarization::AlphaInside => alpha,
            Polarization::ConjugateInside => alpha.conj(),
        };
        let comb: Vec<Complex64> = b.iter().zip(&a).map(|(bi, ai)| bi + c * ai).collect();
        sum += alpha * norm2(&comb).powi(2);
    }
    Ok((dot(&a, &b) - sum / 4.0).norm())
}

/// Residual of the polarization identity under the convention that makes it
/// exact for an inner product conjugate-linear in its first argument.
pub fn polarization_check(mp: &DMatrix<Complex64>, m: &DMatrix<Complex64>, xi: &[Complex64]) -> Result<f64> {
    polarization_residual(mp, m, xi, Polarization::AlphaInside)
}

/// Two-sample comparison of the coupled and decoupled orthogonality statistic.
#[derive(Clone, Debug)]
pub struct DecouplingReport {
    pub coupled: Vec<f64>,
    pub decoupled: Vec<f64>,
    pub ks_statistic: f64,
    pub ks_p_value: f64,
    pub welch_t: f64,
}

/// For fixed `(u, v)` and partner `(û, v̂)`, draw `draws` Gaussian ensembles
/// and record `|⟨A(ûv̂ᵀ), A(uvᵀ)⟩|` both with shared dictionaries and with
/// independent copies on one side of each term.
pub fn decoupling_comparison(
    n: usize,
    m: usize,
    p: &LiftedPoint,
    q: &LiftedPoint,
    draws: usize,
    seed: u64,
) -> Result<DecouplingReport> {
    if draws < 2 {
        return Err(Error::invalid("need at least two draws"));
    }
    let pairs: Vec<(f64, f64)> = (0..draws as u64)
        .into_par_iter()
        .map(|d| -> Result<(f64, f64)> {
            let ens = Ensemble::generate(
                n,
                m,
                SamplingMode::WithoutReplacement,
                DictionaryKind::Gaussian,
                DictionaryKind::Gaussian,
                derive_seed(seed, &[d]),
            )?;
            let (phi_t, psi_t) = ens.dictionary_copies();
            let left = ens.with_dictionaries(phi_t, ens.psi().clone())?;
            let right = ens.with_dictionaries(ens.phi().clone(), psi_t)?;
            Ok((rop_value(&ens, p, q)?, decoupled_value(&left, &right, p, q)?))
        })
        .collect::<Result<_>>()?;
    let (coupled, decoupled): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    let ks_statistic = ks_two_sample(&coupled, &decoupled);
    let ne = (draws as f64 / 2.0).sqrt();
    let ks_p_value = kolmogorov_sf((ne + 0.12 + 0.11 / ne) * ks_statistic);
    Ok(DecouplingReport {
        welch_t: welch_t(&coupled, &decoupled),
        coupled,
        decoupled,
        ks_statistic,
        ks_p_value,
    })
}

/// Two-sample Kolmogorov–Smirnov statistic `sup |F_a − F_b|`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

/// Survival function of the Kolmogorov distribution.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = 2.0 * (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    sum.clamp(0.0, 1.0)
}

pub fn welch_t(a: &[f64], b: &[f64]) -> f64 {
    let mean = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;
    let va = std_dev(a).powi(2) / a.len() as f64;
    let vb = std_dev(b).powi(2) / b.len() as f64;
    (mean(a) - mean(b)) / (va + vb).sqrt()
}

/// Draw a unit-norm Gaussian coefficient vector restricted to `support`.
pub fn gaussian_on_support<R: Rng + ?Sized>(n: usize, support: &[usize], rng: &mut R) -> Result<Signal> {
    let mut x = vec![Complex64::new(0.0, 0.0); n];
    for &i in support {
        x[i] = complex_normal(rng, 1.0);
    }
    Signal::new(x)?.normalized()
}
