//! Recovery of `(u, v)` from `b = A(u vᵀ)`.
//!
//! Spectral and entry-seeded starts feed an alternating scheme. Each half-step
//! fixes one factor, runs CGLS on the resulting `m × n` least-squares problem
//! from the current iterate, hard-thresholds, and re-solves on the retained
//! support. The best residual over all starts wins.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operator::{Dictionary, Ensemble, LiftedPoint, PartialMap, DENSE_LIMIT};
use crate::rng::rng_from_seed;
use crate::signal::{dot, norm2, project_flat, threshold_slice, top_indices, DictionarySide, Signal};

type CVec = Vec<Complex64>;

pub const CG_MAX_ITERS: usize = 200;
const POWER_ITERS: usize = 300;

/// Relative residual below which a start is accepted without trying others.
const ACCEPT_RESIDUAL: f64 = 1e-9;
/// A start is abandoned when its residual has not dropped by `STALL_FACTOR`
/// within `STALL_WINDOW` outer iterations.
const STALL_WINDOW: usize = 8;
const STALL_FACTOR: f64 = 0.9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub max_outer_iters: usize,
    pub inner_tol: f64,
    pub outer_tol: f64,
    pub s1: usize,
    pub s2: usize,
    pub enforce_flatness: bool,
    pub mu1: Option<f64>,
    pub mu2: Option<f64>,
    /// Starts tried in addition to the spectral one.
    pub restarts: usize,
    pub seed: u64,
}

impl SolveOptions {
    pub fn new(s1: usize, s2: usize) -> Self {
        SolveOptions {
            max_outer_iters: 100,
            inner_tol: 1e-10,
            outer_tol: 1e-8,
            s1,
            s2,
            enforce_flatness: false,
            mu1: None,
            mu2: None,
            restarts: 24,
            seed: 0,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.max_outer_iters == 0 {
            return Err(Error::invalid("max_outer_iters must be at least 1"));
        }
        if !(self.inner_tol > 0.0 && self.outer_tol > 0.0) {
            return Err(Error::invalid("tolerances must be positive"));
        }
        if self.s1 == 0 || self.s1 > n || self.s2 == 0 || self.s2 > n {
            return Err(Error::invalid(format!("sparsities must lie in [1, {n}]")));
        }
        if self.enforce_flatness && (self.mu1.is_none() || self.mu2.is_none()) {
            return Err(Error::invalid("enforce_flatness needs mu1 and mu2"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolveResult {
    pub u_hat: Signal,
    pub v_hat: Signal,
    pub relative_error: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// `‖A(û v̂ᵀ) − b‖₂` at exit.
    pub residual_norm: f64,
    /// Residual before and after each unthresholded least-squares half-step
    /// of the winning start.
    pub ls_residuals: Vec<(f64, f64)>,
    pub starts_tried: usize,
}

impl SolveResult {
    pub fn point(&self) -> LiftedPoint {
        LiftedPoint::new(self.u_hat.clone(), self.v_hat.clone())
    }
}

/// CSV form of a [`SolveResult`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveRow {
    pub n: usize,
    pub m: usize,
    pub s1: usize,
    pub s2: usize,
    pub mu1: Option<f64>,
    pub mu2: Option<f64>,
    pub seed: u64,
    pub rel_error: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub residual_norm: f64,
}

impl SolveResult {
    pub fn row(&self, ens: &Ensemble, opts: &SolveOptions) -> SolveRow {
        SolveRow {
            n: ens.n(),
            m: ens.m(),
            s1: opts.s1,
            s2: opts.s2,
            mu1: opts.mu1,
            mu2: opts.mu2,
            seed: opts.seed,
            rel_error: self.relative_error,
            iterations: self.iterations,
            converged: self.converged,
            residual_norm: self.residual_norm,
        }
    }
}

/// `‖X̂ − X‖_F / ‖X‖_F` for `X = u vᵀ`, `X̂ = û v̂ᵀ`, without forming either.
///
/// With `û = αu + w`, `w ⊥ u`: `‖X̂ − X‖² = ‖u‖²‖αv̂ − v‖² + ‖w‖²‖v̂‖²`,
/// a sum of nonnegative terms that stays accurate when the error is tiny.
pub fn lifted_relative_error(p_hat: &LiftedPoint, p_true: &LiftedPoint) -> Result<f64> {
    let (u, v) = (p_true.u.entries(), p_true.v.entries());
    let (uh, vh) = (p_hat.u.entries(), p_hat.v.entries());
    if u.len() != uh.len() || v.len() != vh.len() {
        return Err(Error::Dimension {
            expected: u.len(),
            got: uh.len(),
        });
    }
    let nu2 = dot(u, u).re;
    let truth = nu2.sqrt() * norm2(v);
    if truth == 0.0 {
        return Err(Error::domain("relative error against a zero truth"));
    }
    let alpha = dot(u, uh) / nu2;
    let w: CVec = uh.iter().zip(u).map(|(a, b)| a - alpha * b).collect();
    let diff: CVec = vh.iter().zip(v).map(|(a, b)| alpha * a - b).collect();
    let sq = nu2 * dot(&diff, &diff).re + dot(&w, &w).re * dot(vh, vh).re;
    Ok(sq.max(0.0).sqrt() / truth)
}

/// `(‖X̂ − X‖_F/‖X‖_F, ‖z‖₂/‖A(X)‖₂)`; success means the first is at most a
/// chosen constant times the second.
pub fn success_metric(
    p_hat: &LiftedPoint,
    p_true: &LiftedPoint,
    z_norm: f64,
    ens: &Ensemble,
) -> Result<(f64, f64)> {
    let rel = lifted_relative_error(p_hat, p_true)?;
    let signal = norm2(&ens.forward(p_true)?);
    Ok((rel, z_norm / signal))
}

/// A linear map with an adjoint.
trait LinearMap {
    fn apply(&self, x: &[Complex64]) -> CVec;
    fn apply_adjoint(&self, y: &[Complex64]) -> CVec;
}

impl LinearMap for PartialMap<'_> {
    fn apply(&self, x: &[Complex64]) -> CVec {
        PartialMap::apply(self, x)
    }
    fn apply_adjoint(&self, y: &[Complex64]) -> CVec {
        PartialMap::apply_adjoint(self, y)
    }
}

/// Restriction of a map to the columns in `support`.
struct Restricted<'a, M> {
    map: &'a M,
    keep: Vec<bool>,
}

impl<M: LinearMap> LinearMap for Restricted<'_, M> {
    fn apply(&self, x: &[Complex64]) -> CVec {
        let masked: CVec = x
            .iter()
            .zip(&self.keep)
            .map(|(&z, &k)| if k { z } else { Complex64::new(0.0, 0.0) })
            .collect();
        self.map.apply(&masked)
    }
    fn apply_adjoint(&self, y: &[Complex64]) -> CVec {
        let mut out = self.map.apply_adjoint(y);
        for (z, &k) in out.iter_mut().zip(&self.keep) {
            if !k {
                *z = Complex64::new(0.0, 0.0);
            }
        }
        out
    }
}

fn residual(map: &impl LinearMap, x: &[Complex64], b: &[Complex64]) -> CVec {
    map.apply(x).iter().zip(b).map(|(ax, bi)| bi - ax).collect()
}

/// Conjugate gradients on the normal equations (CGLS) from `x0`. The
/// residual `‖b − Ax‖` is nonincreasing along the iterates.
fn cgls(map: &impl LinearMap, b: &[Complex64], x0: CVec, tol: f64) -> std::result::Result<CVec, &'static str> {
    let mut x = x0;
    let mut r = residual(map, &x, b);
    let mut s = map.apply_adjoint(&r);
    let mut gamma = dot(&s, &s).re;
    let stop = tol * tol * gamma.max(f64::MIN_POSITIVE);
    let floor = (tol * norm2(b)).powi(2);
    let mut p = s.clone();
    for _ in 0..CG_MAX_ITERS {
        if gamma <= stop || dot(&r, &r).re <= floor {
            break;
        }
        let q = map.apply(&p);
        let qq = dot(&q, &q).re;
        if !qq.is_finite() || !gamma.is_finite() {
            return Err("non-finite value in CGLS");
        }
        if qq == 0.0 {
            return Err("search direction in the null space with nonzero gradient");
        }
        let alpha = gamma / qq;
        for (xi, pi) in x.iter_mut().zip(&p) {
            *xi += pi * alpha;
        }
        for (ri, qi) in r.iter_mut().zip(&q) {
            *ri -= qi * alpha;
        }
        s = map.apply_adjoint(&r);
        let next = dot(&s, &s).re;
        let beta = next / gamma;
        gamma = next;
        for (pi, si) in p.iter_mut().zip(&s) {
            *pi = si + *pi * beta;
        }
    }
    Ok(x)
}

fn breakdown(reason: &str, u: &[Complex64], v: &[Complex64]) -> Error {
    Error::SolverBreakdown {
        reason: reason.to_string(),
        snapshot: Box::new(LiftedPoint::new(
            Signal::new(u.to_vec()).unwrap_or_else(|_| Signal::zeros(u.len())),
            Signal::new(v.to_vec()).unwrap_or_else(|_| Signal::zeros(v.len())),
        )),
    }
}

/// Leading singular pair of `A*(b)`, each factor hard-thresholded and
/// normalized. Returns `(u₀, v₀)` with `u₀ v₀ᵀ` aligned with `A*(b)`.
pub fn spectral_init(ens: &Ensemble, b: &[Complex64], s1: usize, s2: usize) -> Result<LiftedPoint> {
    if b.len() != ens.m() {
        return Err(Error::Dimension {
            expected: ens.m(),
            got: b.len(),
        });
    }
    if norm2(b) == 0.0 {
        return Err(Error::domain("spectral initialization from zero measurements"));
    }
    let (left, right) = if ens.n() <= DENSE_LIMIT {
        let z = ens.adjoint_dense(b)?;
        leading_pair_dense(&z)
    } else {
        leading_pair_power(ens, b)?
    };
    // A*(b) ≈ u vᵀ = u (v̄)*, so the right singular vector is v̄.
    let v: CVec = right.iter().map(|z| z.conj()).collect();
    let u = Signal::new(threshold_slice(&left, s1))?.normalized()?;
    let v = Signal::new(threshold_slice(&v, s2))?.normalized()?;
    Ok(LiftedPoint::new(u, v))
}

fn leading_pair_dense(z: &DMatrix<Complex64>) -> (CVec, CVec) {
    let svd = z.clone().svd(true, true);
    let k = svd
        .singular_values
        .iter()
        .enumerate()
        .fold(0, |b, (i, &s)| if s > svd.singular_values[b] { i } else { b });
    let u = svd.u.as_ref().map(|m| m.column(k).iter().copied().collect()).unwrap_or_default();
    let v = svd
        .v_t
        .as_ref()
        .map(|m| m.row(k).iter().map(|z| z.conj()).collect())
        .unwrap_or_default();
    (u, v)
}

fn leading_pair_power(ens: &Ensemble, b: &[Complex64]) -> Result<(CVec, CVec)> {
    let act = ens.adjoint_action(b)?;
    let n = ens.n();
    let mut rng = rng_from_seed(ens.seed());
    let mut v: CVec = (0..n).map(|_| crate::rng::complex_normal(&mut rng, 1.0)).collect();
    let mut u = vec![Complex64::new(0.0, 0.0); n];
    for _ in 0..POWER_ITERS {
        u = act.apply(&v);
        let nu = norm2(&u);
        if nu == 0.0 {
            return Err(Error::domain("A*(b) annihilates the power iterate"));
        }
        u.iter_mut().for_each(|z| *z /= nu);
        let w = act.apply_adjoint(&u);
        let nw = norm2(&w);
        let change = norm2(&w.iter().zip(&v).map(|(a, c)| a / nw - c).collect::<Vec<_>>());
        v = w.into_iter().map(|z| z / nw).collect();
        if change < 1e-12 {
            break;
        }
    }
    Ok((u, v))
}

/// Candidate starts: the spectral pair, then basis pairs at the largest
/// entries of `|A*(b)|` (materialized at `n ≤ 256`), then random supports.
fn starts(ens: &Ensemble, b: &[Complex64], opts: &SolveOptions) -> Result<Vec<LiftedPoint>> {
    let n = ens.n();
    let mut out = vec![spectral_init(ens, b, opts.s1, opts.s2)?];
    if opts.restarts == 0 {
        return Ok(out);
    }
    if n <= DENSE_LIMIT {
        let z = ens.adjoint_dense(b)?;
        let flat: CVec = z.iter().copied().collect();
        for idx in top_indices(&flat, opts.restarts) {
            // Column-major storage: idx = j·n + i.
            let (i, j) = (idx % n, idx / n);
            let zu: CVec = z.column(j).iter().copied().collect();
            let zv: CVec = z.row(i).iter().map(|c| c.conj()).collect();
            let u = Signal::new(threshold_slice(&zu, opts.s1))?.normalized()?;
            // Row i of A*(b) ≈ u_i v̄ᵀ, so conj(row) ≈ ū_i v.
            let v = Signal::new(threshold_slice(&zv, opts.s2))?.normalized()?;
            out.push(LiftedPoint::new(u, v));
        }
    } else {
        let mut rng = rng_from_seed(opts.seed);
        for _ in 0..opts.restarts {
            out.push(LiftedPoint::new(
                Signal::basis(n, rng.random_range(0..n)),
                Signal::basis(n, rng.random_range(0..n)),
            ));
        }
    }
    Ok(out)
}

struct Run {
    u: CVec,
    v: CVec,
    iterations: usize,
    converged: bool,
    residual: f64,
    ls_residuals: Vec<(f64, f64)>,
}

/// Alternating least squares with hard thresholding from every candidate
/// start; returns the start with the smallest final residual.
pub fn recover(ens: &Ensemble, b: &[Complex64], opts: &SolveOptions) -> Result<SolveResult> {
    opts.validate(ens.n())?;
    if b.len() != ens.m() {
        return Err(Error::Dimension {
            expected: ens.m(),
            got: b.len(),
        });
    }
    let candidates = starts(ens, b, opts)?;
    let scale = norm2(b);
    let mut best: Option<Run> = None;
    let mut tried = 0;
    for start in candidates {
        tried += 1;
        let run = alternate(ens, b, start, opts)?;
        let done = run.residual <= ACCEPT_RESIDUAL * scale;
        if best.as_ref().is_none_or(|r| run.residual < r.residual) {
            best = Some(run);
        }
        if done {
            break;
        }
    }
    let run = best.expect("at least the spectral start");
    Ok(SolveResult {
        u_hat: Signal::new(run.u)?,
        v_hat: Signal::new(run.v)?,
        relative_error: None,
        iterations: run.iterations,
        converged: run.converged,
        residual_norm: run.residual,
        ls_residuals: run.ls_residuals,
        starts_tried: tried,
    })
}

/// Start the alternation from a given point (no restarts).
pub fn recover_from(ens: &Ensemble, b: &[Complex64], start: LiftedPoint, opts: &SolveOptions) -> Result<SolveResult> {
    opts.validate(ens.n())?;
    let run = alternate(ens, b, start, opts)?;
    Ok(SolveResult {
        u_hat: Signal::new(run.u)?,
        v_hat: Signal::new(run.v)?,
        relative_error: None,
        iterations: run.iterations,
        converged: run.converged,
        residual_norm: run.residual,
        ls_residuals: run.ls_residuals,
        starts_tried: 1,
    })
}

/// [`recover`] on `b = A(truth)`, filling in the relative error.
pub fn recover_planted(ens: &Ensemble, truth: &LiftedPoint, opts: &SolveOptions) -> Result<SolveResult> {
    let b = ens.forward(truth)?;
    let mut res = recover(ens, &b, opts)?;
    res.relative_error = Some(lifted_relative_error(&res.point(), truth)?);
    Ok(res)
}

fn alternate(ens: &Ensemble, b: &[Complex64], start: LiftedPoint, opts: &SolveOptions) -> Result<Run> {
    let mut u = start.u.into_vec();
    let mut v = start.v.into_vec();
    let scale = norm2(b);
    let mut ls_residuals = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut prev = LiftedPoint::new(Signal::new(u.clone())?, Signal::new(v.clone())?);
    let mut history: Vec<f64> = Vec::new();
    for it in 0..opts.max_outer_iters {
        iterations = it + 1;
        u = half_step(ens, b, DictionarySide::Left, &v, u, opts, &mut ls_residuals)?;
        v = half_step(ens, b, DictionarySide::Right, &u, v, opts, &mut ls_residuals)?;
        balance(&mut u, &mut v);
        let cur = LiftedPoint::new(Signal::new(u.clone())?, Signal::new(v.clone())?);
        let change = lifted_relative_error(&prev, &cur)?;
        let res = norm2(&residual_with(ens, &cur, b)?);
        prev = cur;
        if change < opts.outer_tol || res <= opts.inner_tol * scale {
            converged = true;
            break;
        }
        history.push(res);
        if history.len() > STALL_WINDOW && res > STALL_FACTOR * history[history.len() - 1 - STALL_WINDOW] {
            break;
        }
    }
    let residual = norm2(&residual_with(ens, &prev, b)?);
    Ok(Run {
        u,
        v,
        iterations,
        converged,
        residual,
        ls_residuals,
    })
}

fn residual_with(ens: &Ensemble, p: &LiftedPoint, b: &[Complex64]) -> Result<CVec> {
    Ok(ens.forward(p)?.iter().zip(b).map(|(a, c)| c - a).collect())
}

/// Equalize factor norms; the lifted point is unchanged.
fn balance(u: &mut [Complex64], v: &mut [Complex64]) {
    let (nu, nv) = (norm2(u), norm2(v));
    if nu > 0.0 && nv > 0.0 {
        let t = (nv / nu).sqrt();
        u.iter_mut().for_each(|z| *z *= t);
        v.iter_mut().for_each(|z| *z /= t);
    }
}

/// Update the factor on `side` with the other factor fixed.
#[allow(clippy::too_many_arguments)]
fn half_step(
    ens: &Ensemble,
    b: &[Complex64],
    side: DictionarySide,
    fixed: &[Complex64],
    current: CVec,
    opts: &SolveOptions,
    log: &mut Vec<(f64, f64)>,
) -> Result<CVec> {
    let (s, mu) = match side {
        DictionarySide::Left => (opts.s1, opts.mu1),
        DictionarySide::Right => (opts.s2, opts.mu2),
    };
    let fixed_sig = Signal::new(fixed.to_vec())?;
    if fixed_sig.is_zero() {
        return Err(breakdown("fixed factor vanished", &current, fixed));
    }
    let map = ens.partial_forward(side, &fixed_sig)?;
    let before = norm2(&residual(&map, &current, b));
    let ls = cgls(&map, b, current, opts.inner_tol).map_err(|r| breakdown(r, fixed, fixed))?;
    let after = norm2(&residual(&map, &ls, b));
    log.push((before, after));
    let mut keep = vec![false; ls.len()];
    for i in top_indices(&ls, s) {
        keep[i] = true;
    }
    let restricted = Restricted { map: &map, keep };
    let start = threshold_slice(&ls, s);
    let mut out = cgls(&restricted, b, start, opts.inner_tol).map_err(|r| breakdown(r, fixed, fixed))?;
    if opts.enforce_flatness {
        if let Some(mu) = mu {
            out = flatten_through(ens.dictionary(side), &out, s, mu)?;
        }
    }
    if norm2(&out) == 0.0 {
        return Err(breakdown("factor collapsed to zero", &out, fixed));
    }
    Ok(out)
}

/// Project the signal `D x` onto the flat cone and map back by least squares
/// on the support of `x`.
fn flatten_through(dict: &Dictionary, x: &[Complex64], s: usize, mu: f64) -> Result<CVec> {
    let signal = Signal::new(dict.apply(x))?;
    let flat = project_flat(&signal, mu)?;
    match dict {
        Dictionary::Identity(_) => Ok(threshold_slice(flat.entries(), s)),
        Dictionary::Dense(d) => {
            let support = top_indices(x, s);
            let cols = d.select_columns(support.iter());
            let rhs = nalgebra::DVector::from_column_slice(flat.entries());
            let coef = cols
                .svd(true, true)
                .solve(&rhs, 1e-12)
                .map_err(|e| Error::invalid(format!("dictionary solve failed: {e}")))?;
            let mut out = vec![Complex64::new(0.0, 0.0); x.len()];
            for (k, &i) in support.iter().enumerate() {
                out[i] = coef[k];
            }
            Ok(out)
        }
    }
}
