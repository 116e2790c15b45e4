//! Signals and the restricted sets they are drawn from.
//!
//! Three sets matter here:
//!
//! * `Γ_s`: vectors with at most `s` nonzero entries,
//! * `Γ̃_s`: vectors with `‖x‖₁ ≤ √s ‖x‖₂` (approximately `s`-sparse),
//! * `C_μ`: vectors whose unitary spectrum satisfies `n‖Fx‖∞² ≤ μ‖Fx‖₂²`.
//!
//! `C_μ` is a nonconvex cone without a metric projection, so [`project_flat`]
//! is a feasibility map rather than a nearest-point map.

use std::sync::OnceLock;

use num_complex::Complex64;
use rand::seq::index::sample as sample_indices;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dft::with_dft;
use crate::error::{Error, Result};
use crate::rng::complex_normal;

/// Relative modulus below which an entry counts as zero in [`in_gamma`].
pub const ZERO_TOL: f64 = 1e-12;
/// Slack allowed on the flatness constraint after projection.
pub const FLATNESS_TOL: f64 = 1e-9;

const FLAT_MAX_ITERS: usize = 100;
const JOINT_ROUNDS: usize = 50;
const SUPPORT_RETRIES: usize = 50;

/// A finite complex vector. The unitary spectrum is computed on first use.
#[derive(Clone, Debug, Default)]
pub struct Signal {
    entries: Vec<Complex64>,
    spectrum: OnceLock<Vec<Complex64>>,
}

impl PartialEq for Signal {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries
    }
}

impl Serialize for Signal {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let pairs: Vec<(f64, f64)> = self.entries.iter().map(|z| (z.re, z.im)).collect();
        pairs.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Signal {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let pairs: Vec<(f64, f64)> = Vec::deserialize(d)?;
        Signal::new(pairs.into_iter().map(|(re, im)| Complex64::new(re, im)).collect())
            .map_err(serde::de::Error::custom)
    }
}

impl Signal {
    pub fn new(entries: Vec<Complex64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::invalid("signal length must be positive"));
        }
        if entries.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::domain("signal has non-finite entries"));
        }
        Ok(Self::from_vec(entries))
    }

    pub(crate) fn from_vec(entries: Vec<Complex64>) -> Self {
        Signal {
            entries,
            spectrum: OnceLock::new(),
        }
    }

    pub fn from_real(values: &[f64]) -> Result<Self> {
        Self::new(values.iter().map(|&v| Complex64::new(v, 0.0)).collect())
    }

    pub fn zeros(n: usize) -> Self {
        Self::from_vec(vec![Complex64::new(0.0, 0.0); n])
    }

    /// Standard basis vector `e_index` (zero-based).
    pub fn basis(n: usize, index: usize) -> Self {
        let mut v = vec![Complex64::new(0.0, 0.0); n];
        v[index] = Complex64::new(1.0, 0.0);
        Self::from_vec(v)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.entries
    }

    /// Unitary DFT `F x`.
    pub fn spectrum(&self) -> &[Complex64] {
        self.spectrum
            .get_or_init(|| with_dft(self.len(), |d| d.forward(&self.entries)))
    }

    pub fn norm2(&self) -> f64 {
        norm2(&self.entries)
    }

    pub fn norm1(&self) -> f64 {
        self.entries.iter().map(|z| z.norm()).sum()
    }

    pub fn norm_inf(&self) -> f64 {
        self.entries.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// `‖F x‖∞`
    pub fn spectral_inf(&self) -> f64 {
        self.spectrum().iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// `⟨self, other⟩ = self* other`, conjugate-linear in `self`.
    pub fn dot(&self, other: &Signal) -> Complex64 {
        dot(&self.entries, &other.entries)
    }

    pub fn scaled(&self, c: Complex64) -> Signal {
        Signal::from_vec(self.entries.iter().map(|z| z * c).collect())
    }

    pub fn normalized(&self) -> Result<Signal> {
        let nrm = self.norm2();
        if nrm == 0.0 {
            return Err(Error::domain("cannot normalize the zero vector"));
        }
        Ok(self.scaled(Complex64::new(1.0 / nrm, 0.0)))
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(|z| z.norm_sqr() == 0.0)
    }

    /// Indices of entries above the relative zero tolerance.
    pub fn support(&self) -> Vec<usize> {
        let cutoff = ZERO_TOL * self.norm_inf();
        self.entries
            .iter()
            .enumerate()
            .filter(|(_, z)| z.norm() > cutoff)
            .map(|(i, _)| i)
            .collect()
    }
}

pub(crate) fn norm2(x: &[Complex64]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub(crate) fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SparsityFlavor {
    /// Membership in `Γ_s`.
    Exact,
    /// Membership in `Γ̃_s`.
    Approximate,
}

/// Which dictionary maps the coefficient vector to the signal domain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DictionarySide {
    Left,
    Right,
}

/// Description of a restricted set `Γ_s ∩ C_μ` or `Γ̃_s ∩ C_μ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub n: usize,
    pub s: usize,
    pub mu: Option<f64>,
    pub flavor: SparsityFlavor,
    pub side: DictionarySide,
}

impl ModelSpec {
    pub fn exact(n: usize, s: usize) -> Self {
        ModelSpec {
            n,
            s,
            mu: None,
            flavor: SparsityFlavor::Exact,
            side: DictionarySide::Left,
        }
    }

    pub fn approximate(n: usize, s: usize) -> Self {
        ModelSpec {
            flavor: SparsityFlavor::Approximate,
            ..Self::exact(n, s)
        }
    }

    pub fn with_mu(mut self, mu: f64) -> Self {
        self.mu = Some(mu);
        self
    }

    pub fn on_side(mut self, side: DictionarySide) -> Self {
        self.side = side;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::invalid("model n must be positive"));
        }
        if self.s == 0 || self.s > self.n {
            return Err(Error::invalid(format!(
                "sparsity s = {} outside [1, {}]",
                self.s, self.n
            )));
        }
        if let Some(mu) = self.mu {
            if !(1.0..=self.n as f64).contains(&mu) {
                return Err(Error::invalid(format!(
                    "flatness mu = {mu} outside [1, {}]",
                    self.n
                )));
            }
        }
        Ok(())
    }

    /// Sparsity predicate only.
    pub fn sparse_ok(&self, x: &Signal) -> bool {
        match self.flavor {
            SparsityFlavor::Exact => in_gamma(x, self.s),
            SparsityFlavor::Approximate => in_tilde_gamma(x, self.s).unwrap_or(false),
        }
    }

    /// Sparsity and (coefficient-domain) flatness.
    pub fn contains(&self, x: &Signal) -> bool {
        self.sparse_ok(x) && self.flat_ok(x)
    }

    fn flat_ok(&self, x: &Signal) -> bool {
        match self.mu {
            None => true,
            Some(mu) => spectral_flatness(x).is_ok_and(|sf| sf <= mu + FLATNESS_TOL),
        }
    }
}

/// `n ‖Fx‖∞² / ‖Fx‖₂²`, in `[1, n]`.
pub fn spectral_flatness(x: &Signal) -> Result<f64> {
    let spec = x.spectrum();
    let energy: f64 = spec.iter().map(|z| z.norm_sqr()).sum();
    if energy == 0.0 {
        return Err(Error::domain("spectral flatness of the zero vector"));
    }
    let peak = spec.iter().map(|z| z.norm_sqr()).fold(0.0, f64::max);
    Ok(x.len() as f64 * peak / energy)
}

/// At most `s` entries exceed `ZERO_TOL·‖x‖∞` in modulus.
pub fn in_gamma(x: &Signal, s: usize) -> bool {
    x.support().len() <= s
}

/// `‖x‖₁ ≤ √s ‖x‖₂`.
pub fn in_tilde_gamma(x: &Signal, s: usize) -> Result<bool> {
    let l2 = x.norm2();
    if l2 == 0.0 {
        return Err(Error::domain("approximate sparsity of the zero vector"));
    }
    // Relative slack so that exactly s-sparse vectors with equal moduli pass.
    Ok(x.norm1() <= (s as f64).sqrt() * l2 * (1.0 + 1e-12))
}

/// Keep the `s` largest-modulus entries (lowest index wins ties), zero the rest.
pub fn hard_threshold(x: &Signal, s: usize) -> Signal {
    Signal::from_vec(threshold_slice(x.entries(), s))
}

pub(crate) fn top_indices(x: &[Complex64], s: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| {
        x[b].norm_sqr()
            .total_cmp(&x[a].norm_sqr())
            .then(a.cmp(&b))
    });
    order.truncate(s.min(x.len()));
    order.sort_unstable();
    order
}

pub(crate) fn threshold_slice(x: &[Complex64], s: usize) -> Vec<Complex64> {
    if s >= x.len() {
        return x.to_vec();
    }
    let mut out = vec![Complex64::new(0.0, 0.0); x.len()];
    for i in top_indices(x, s) {
        out[i] = x[i];
    }
    out
}

/// Map `x` into `C_μ` keeping its ℓ₂ norm.
///
/// Spectral magnitudes are clipped at `τ = √(μ‖x‖²/n)` with phases kept and
/// the result rescaled to the original norm. The clip/rescale iteration
/// converges to magnitudes `min(λ|X_k|, τ)`; `λ` is solved for directly. When
/// the spectrum has too few nonzero bins to hold the energy below `τ`, the
/// deficit is spread evenly over the empty bins.
pub fn project_flat(x: &Signal, mu: f64) -> Result<Signal> {
    let n = x.len();
    if !(1.0..=n as f64).contains(&mu) {
        return Err(Error::domain(format!("mu = {mu} outside [1, {n}]")));
    }
    let sf = spectral_flatness(x)?;
    if sf <= mu {
        return Ok(x.clone());
    }

    let spec = x.spectrum();
    let energy: f64 = spec.iter().map(|z| z.norm_sqr()).sum();
    let tau = (mu * energy / n as f64).sqrt();
    let mags: Vec<f64> = spec.iter().map(|z| z.norm()).collect();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| mags[b].total_cmp(&mags[a]));
    let nonzero = mags.iter().filter(|&&r| r > 0.0).count();

    let mut target = vec![0.0; n];
    if nonzero as f64 * tau * tau < energy {
        for &k in &order[..nonzero] {
            target[k] = tau;
        }
        let fill = ((energy - nonzero as f64 * tau * tau) / (n - nonzero) as f64).sqrt();
        for &k in &order[nonzero..] {
            target[k] = fill;
        }
    } else {
        // Clip the p largest bins; the rest scale by λ.
        let mut tail: f64 = mags.iter().map(|r| r * r).sum();
        let mut lambda = 1.0;
        for p in 0..nonzero {
            let rest = energy - p as f64 * tau * tau;
            lambda = (rest / tail).sqrt();
            if lambda * mags[order[p]] <= tau {
                break;
            }
            tail -= mags[order[p]] * mags[order[p]];
        }
        for k in 0..n {
            target[k] = (lambda * mags[k]).min(tau);
        }
    }

    let shaped: Vec<Complex64> = spec
        .iter()
        .zip(&target)
        .map(|(z, &a)| {
            if z.norm() > 0.0 {
                z * (a / z.norm())
            } else {
                Complex64::new(a, 0.0)
            }
        })
        .collect();
    let mut y = with_dft(n, |d| d.inverse(&shaped));
    rescale(&mut y, x.norm2());
    let mut out = Signal::from_vec(y);

    // Rounding can leave the peak a hair above the level; clip/rescale passes
    // remove it.
    for iter in 0..=FLAT_MAX_ITERS {
        if spectral_flatness(&out)? <= mu + FLATNESS_TOL {
            return Ok(out);
        }
        if iter == FLAT_MAX_ITERS {
            break;
        }
        let tau = (mu / n as f64).sqrt() * out.norm2();
        let clipped: Vec<Complex64> = out
            .spectrum()
            .iter()
            .map(|z| if z.norm() > tau { z * (tau / z.norm()) } else { *z })
            .collect();
        let mut y = with_dft(n, |d| d.inverse(&clipped));
        rescale(&mut y, x.norm2());
        out = Signal::from_vec(y);
    }
    Err(Error::FlatNonConvergence {
        iterations: FLAT_MAX_ITERS,
        last: out,
    })
}

fn rescale(y: &mut [Complex64], to: f64) {
    let cur = norm2(y);
    if cur > 0.0 {
        let c = to / cur;
        y.iter_mut().for_each(|z| *z *= c);
    }
}

/// Draw a unit-norm member of the set described by `spec`.
///
/// A uniformly random support of size `s` carries i.i.d. `CN(0, 1)` entries.
/// The approximate flavor adds a dense tail, shrunk until `‖x‖₁ ≤ √s‖x‖₂`.
/// With a flatness bound the draw alternates [`project_flat`] and
/// [`hard_threshold`] until both predicates pass, resampling the support if
/// that fails.
pub fn sample_model<R: Rng + ?Sized>(spec: &ModelSpec, rng: &mut R) -> Result<Signal> {
    spec.validate()?;
    for _ in 0..SUPPORT_RETRIES {
        let mut x = draw_base(spec, rng);
        let Some(mu) = spec.mu else {
            return Ok(x);
        };
        for _ in 0..JOINT_ROUNDS {
            if spec.contains(&x) {
                return x.normalized();
            }
            x = match project_flat(&x, mu) {
                Ok(y) => y,
                Err(Error::FlatNonConvergence { .. }) => break,
                Err(e) => return Err(e),
            };
            if spec.contains(&x) {
                return x.normalized();
            }
            x = hard_threshold(&x, spec.s);
        }
    }
    Err(Error::Infeasible(format!(
        "no draw in Γ(s = {}) ∩ C(μ = {:?}) at n = {} after {} supports",
        spec.s, spec.mu, spec.n, SUPPORT_RETRIES
    )))
}

fn draw_base<R: Rng + ?Sized>(spec: &ModelSpec, rng: &mut R) -> Signal {
    let n = spec.n;
    let mut x = vec![Complex64::new(0.0, 0.0); n];
    for i in sample_indices(rng, n, spec.s).into_iter() {
        x[i] = complex_normal(rng, 1.0);
    }
    if spec.flavor == SparsityFlavor::Approximate && spec.s < n {
        let tail: Vec<Complex64> = (0..n)
            .map(|i| {
                if x[i].norm_sqr() == 0.0 {
                    complex_normal(rng, 1.0)
                } else {
                    Complex64::new(0.0, 0.0)
                }
            })
            .collect();
        let mut weight: f64 = rng.random_range(0.0..1.0);
        let bound = (spec.s as f64).sqrt();
        loop {
            let y: Vec<Complex64> = x.iter().zip(&tail).map(|(a, t)| a + t * weight).collect();
            let l1: f64 = y.iter().map(|z| z.norm()).sum();
            if l1 <= bound * norm2(&y) || weight < 1e-6 {
                if l1 <= bound * norm2(&y) {
                    x = y;
                }
                break;
            }
            weight *= 0.5;
        }
    }
    let nrm = norm2(&x);
    x.iter_mut().for_each(|z| *z /= nrm);
    Signal::from_vec(x)
}

/// Remove the `u` component from `u_hat` and return a unit vector of the model
/// set that is orthogonal to `u`.
///
/// Gram–Schmidt first; thresholding (and flattening) may then reintroduce a
/// `u` component, which a final Gram–Schmidt restricted to the output support
/// removes without growing that support.
pub fn orthogonalize_pair(u: &Signal, u_hat: &Signal, spec: &ModelSpec) -> Result<Signal> {
    if u.len() != u_hat.len() {
        return Err(Error::Dimension {
            expected: u.len(),
            got: u_hat.len(),
        });
    }
    let uu = u.dot(u).re;
    if uu == 0.0 {
        return Err(Error::domain("orthogonalize against the zero vector"));
    }
    let scale = u_hat.norm2();
    if scale == 0.0 {
        return Err(Error::Parallel);
    }
    let r = remove_component(u_hat.entries(), u.entries());
    if norm2(&r) <= 1e-12 * scale {
        return Err(Error::Parallel);
    }
    let mut y = Signal::from_vec(r);

    if !spec.sparse_ok(&y) {
        y = hard_threshold(&y, spec.s);
    }
    if let Some(mu) = spec.mu {
        if spectral_flatness(&y)? > mu + FLATNESS_TOL {
            y = project_flat(&y, mu)?;
            if !spec.sparse_ok(&y) {
                y = hard_threshold(&y, spec.s);
            }
        }
    }

    let support = y.support();
    let mut u_restricted = vec![Complex64::new(0.0, 0.0); u.len()];
    for &i in &support {
        u_restricted[i] = u.entries()[i];
    }
    let mut out = y.into_vec();
    if norm2(&u_restricted) > 0.0 {
        // Twice, to push the residual inner product to rounding level.
        for _ in 0..2 {
            out = remove_component(&out, &u_restricted);
        }
    }
    if norm2(&out) <= 1e-12 * scale {
        return Err(Error::Parallel);
    }
    let out = Signal::from_vec(out).normalized()?;
    if !spec.contains(&out) {
        return Err(Error::Infeasible(
            "orthogonalized vector left the model set".into(),
        ));
    }
    Ok(out)
}

fn remove_component(x: &[Complex64], dir: &[Complex64]) -> Vec<Complex64> {
    let c = dot(dir, x) / dot(dir, dir).re;
    x.iter().zip(dir).map(|(a, d)| a - d * c).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dft::dft_entry;
    use crate::rng::{complex_normal_vec, rng_from_seed};

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn naive_flatness(x: &[Complex64]) -> f64 {
        let n = x.len();
        let spec: Vec<Complex64> = (0..n)
            .map(|j| (0..n).map(|k| dft_entry(n, j, k) * x[k]).sum())
            .collect();
        let peak = spec.iter().map(|z| z.norm_sqr()).fold(0.0, f64::max);
        let energy: f64 = spec.iter().map(|z| z.norm_sqr()).sum();
        n as f64 * peak / energy
    }

    #[test]
    fn flatness_of_spike_and_tone() {
        for n in [1, 4, 8, 33] {
            let sf = spectral_flatness(&Signal::basis(n, 0)).unwrap();
            assert!((sf - 1.0).abs() < 1e-12);
        }
        let ones = Signal::new(vec![c(1.0 / 8f64.sqrt()); 8]).unwrap();
        assert!((spectral_flatness(&ones).unwrap() - 8.0).abs() < 1e-12);
    }

    #[test]
    fn flatness_matches_direct_dft() {
        let mut rng = rng_from_seed(11);
        let x = complex_normal_vec(&mut rng, 64, 1.0);
        let sf = spectral_flatness(&Signal::new(x.clone()).unwrap()).unwrap();
        assert!((1.0..=64.0).contains(&sf));
        assert!((sf - naive_flatness(&x)).abs() < 1e-10);
    }

    #[test]
    fn flatness_rejects_zero() {
        assert!(matches!(
            spectral_flatness(&Signal::zeros(4)),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn gamma_membership() {
        assert!(in_gamma(&Signal::basis(5, 2), 1));
        let two = Signal::from_real(&[1.0, 1.0, 0.0]).unwrap();
        assert!(!in_gamma(&two, 1));
        let nearly = Signal::from_real(&[1.0, 1e-13, 2e-13, 0.5]).unwrap();
        assert!(in_gamma(&nearly, 2));
    }

    #[test]
    fn tilde_gamma_membership() {
        assert!(in_tilde_gamma(&Signal::basis(7, 3), 1).unwrap());
        let ones = Signal::from_real(&[1.0; 16]).unwrap();
        assert!(!in_tilde_gamma(&ones, 4).unwrap());
        assert!(in_tilde_gamma(&Signal::zeros(3), 1).is_err());
    }

    #[test]
    fn sparse_draws_are_approximately_sparse() {
        let mut rng = rng_from_seed(5);
        let spec = ModelSpec::exact(40, 6);
        for _ in 0..1000 {
            let x = sample_model(&spec, &mut rng).unwrap();
            assert!(in_gamma(&x, 6));
            assert!(in_tilde_gamma(&x, 6).unwrap());
        }
    }

    #[test]
    fn threshold_examples() {
        let x = Signal::from_real(&[3.0, 1.0, 2.0]).unwrap();
        assert_eq!(hard_threshold(&x, 2), Signal::from_real(&[3.0, 0.0, 2.0]).unwrap());
        assert_eq!(hard_threshold(&x, 3), x);
        assert_eq!(hard_threshold(&x, 10), x);
        let ties = Signal::from_real(&[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(hard_threshold(&ties, 1), Signal::from_real(&[1.0, 0.0, 0.0]).unwrap());
    }

    #[test]
    fn project_flat_fixed_point() {
        let x = Signal::basis(16, 3);
        let y = project_flat(&x, 2.0).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn project_flat_single_tone_becomes_flat() {
        let n = 16;
        let tone = Signal::new(vec![c(0.7 / (n as f64).sqrt()); n]).unwrap();
        let y = project_flat(&tone, 1.0).unwrap();
        assert!((y.norm2() - tone.norm2()).abs() < 1e-12);
        let level = y.norm2() / (n as f64).sqrt();
        for z in y.spectrum() {
            assert!((z.norm() - level).abs() < 1e-12);
        }
    }

    #[test]
    fn project_flat_random() {
        let mut rng = rng_from_seed(9);
        for _ in 0..50 {
            let x = Signal::new(complex_normal_vec(&mut rng, 32, 1.0)).unwrap();
            let y = project_flat(&x, 2.0).unwrap();
            assert!(spectral_flatness(&y).unwrap() <= 2.0 + 1e-9);
            assert!((y.norm2() - x.norm2()).abs() < 1e-12 * x.norm2());
        }
    }

    #[test]
    fn project_flat_domain_errors() {
        assert!(project_flat(&Signal::zeros(4), 2.0).is_err());
        assert!(project_flat(&Signal::basis(4, 0), 0.5).is_err());
        assert!(project_flat(&Signal::basis(4, 0), 5.0).is_err());
    }

    #[test]
    fn sample_exact_sparse() {
        let mut rng = rng_from_seed(1);
        let x = sample_model(&ModelSpec::exact(32, 3), &mut rng).unwrap();
        assert!(x.support().len() <= 3);
        assert!((x.norm2() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sample_approximate_flat() {
        let mut rng = rng_from_seed(2);
        let spec = ModelSpec::approximate(32, 3).with_mu(4.0);
        let mut dense = 0;
        for _ in 0..1000 {
            let x = sample_model(&spec, &mut rng).unwrap();
            assert!(in_tilde_gamma(&x, 3).unwrap());
            assert!(spectral_flatness(&x).unwrap() <= 4.0 + 1e-9);
            assert!((x.norm2() - 1.0).abs() < 1e-12);
            if !in_gamma(&x, 3) {
                dense += 1;
            }
        }
        // The tail construction yields members outside Γ_s as well.
        assert!(dense > 0);
    }

    #[test]
    fn sample_vacuous_constraints() {
        let mut rng = rng_from_seed(3);
        let spec = ModelSpec::exact(16, 16).with_mu(16.0);
        let x = sample_model(&spec, &mut rng).unwrap();
        assert!((x.norm2() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sample_perfectly_flat_sparse() {
        // Spikes are the only perfectly flat vectors with two or fewer nonzeros.
        let mut rng = rng_from_seed(4);
        let spec = ModelSpec::exact(16, 2).with_mu(1.0);
        let x = sample_model(&spec, &mut rng).unwrap();
        assert!(spectral_flatness(&x).unwrap() <= 1.0 + 1e-9);
        assert!(x.entries().iter().filter(|z| z.norm() > 1e-6).count() == 1);
    }

    #[test]
    fn orthogonalize_examples() {
        let spec = ModelSpec::exact(4, 1);
        let e1 = Signal::basis(4, 0);
        let e2 = Signal::basis(4, 1);
        assert_eq!(orthogonalize_pair(&e1, &e2, &spec).unwrap(), e2);
        let mix = Signal::from_real(&[0.5f64.sqrt(), 0.5f64.sqrt(), 0.0, 0.0]).unwrap();
        let out = orthogonalize_pair(&e1, &mix, &spec).unwrap();
        assert!((out.entries()[1] - c(1.0)).norm() < 1e-12);
        assert!(out.entries()[0].norm() < 1e-12);
        assert!(matches!(
            orthogonalize_pair(&e1, &e1.scaled(c(2.0)), &spec),
            Err(Error::Parallel)
        ));
    }

    #[test]
    fn orthogonalize_random_sparse_pairs() {
        let mut rng = rng_from_seed(8);
        let spec = ModelSpec::exact(64, 4);
        for _ in 0..1000 {
            let u = sample_model(&spec, &mut rng).unwrap();
            let uh = sample_model(&spec, &mut rng).unwrap();
            match orthogonalize_pair(&u, &uh, &spec) {
                Ok(out) => {
                    assert!(out.dot(&u).norm() <= 1e-10 * out.norm2() * u.norm2());
                    assert!(in_gamma(&out, 4));
                }
                Err(Error::Parallel) => {}
                Err(e) => panic!("{e}"),
            }
        }
    }
}
