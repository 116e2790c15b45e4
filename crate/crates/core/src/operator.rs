//! The lifted measurement operator of subsampled blind deconvolution.
//!
//! For dictionaries `Φ`, `Ψ` and sampling indices `Ω` the operator maps a
//! rank-one matrix `X = u vᵀ` to
//!
//! ```text
//! A(u vᵀ) = √(n/m) · S_Ω (Φu ⊛ Ψv),
//! ```
//!
//! which equals `[⟨M_1, X⟩, …, ⟨M_m, X⟩]` with
//! `M_ℓ = (n/√m) Φ* F* diag(f_{ω_ℓ}) F̄ Ψ̄` and `⟨A, B⟩ = trace(A* B)`.
//! `A` itself is never materialized; explicit `M_ℓ` and `R_{u,v}` exist only
//! for small `n` as oracles.
//!
//! Indices are zero-based throughout.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::seq::index::sample as sample_indices;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dft::{dft_matrix, UnitaryDft};
use crate::error::{Error, Result};
use crate::rng::{complex_normal, trial_rng};
use crate::signal::{sample_model, spectral_flatness, DictionarySide, ModelSpec, Signal, FLATNESS_TOL};

/// Largest `n` for which `M_ℓ` and dense `A*(b)` are materialized.
pub const DENSE_LIMIT: usize = 256;
/// Largest `n` for which `R_{u,v}` (m × n²) is materialized.
pub const KRONECKER_LIMIT: usize = 64;

const DICTIONARY_REJECTION_CAP: usize = 10_000;

// Stream indices under the ensemble seed.
const STREAM_OMEGA: u64 = 0;
const STREAM_PHI: u64 = 1;
const STREAM_PSI: u64 = 2;
const STREAM_PHI_COPY: u64 = 3;
const STREAM_PSI_COPY: u64 = 4;

type CVec = Vec<Complex64>;

fn zero() -> Complex64 {
    Complex64::new(0.0, 0.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DictionaryKind {
    Gaussian,
    Identity,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    /// Independent uniform indices; repeats allowed.
    IidUniform,
    /// Distinct indices.
    #[default]
    WithoutReplacement,
}

/// Draw `m` sampling indices in `[0, n)`.
pub fn sample_omega<R: Rng + ?Sized>(
    n: usize,
    m: usize,
    mode: SamplingMode,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if n == 0 || m == 0 {
        return Err(Error::invalid("sample_omega needs n, m ≥ 1"));
    }
    match mode {
        SamplingMode::IidUniform => Ok((0..m).map(|_| rng.random_range(0..n)).collect()),
        SamplingMode::WithoutReplacement => {
            if m > n {
                return Err(Error::invalid(format!(
                    "cannot draw {m} distinct indices out of {n}"
                )));
            }
            Ok(sample_indices(rng, n, m).into_vec())
        }
    }
}

/// A dictionary: identity (stored implicitly) or a dense `n × n` matrix.
#[derive(Clone, Debug, PartialEq)]
pub enum Dictionary {
    Identity(usize),
    Dense(DMatrix<Complex64>),
}

impl Dictionary {
    /// Entries i.i.d. `CN(0, 1/n)`, drawn column by column.
    pub fn gaussian<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let var = 1.0 / n as f64;
        let mut mat = DMatrix::from_element(n, n, zero());
        for j in 0..n {
            for i in 0..n {
                mat[(i, j)] = complex_normal(rng, var);
            }
        }
        Dictionary::Dense(mat)
    }

    pub fn generate<R: Rng + ?Sized>(kind: DictionaryKind, n: usize, rng: &mut R) -> Self {
        match kind {
            DictionaryKind::Identity => Dictionary::Identity(n),
            DictionaryKind::Gaussian => Self::gaussian(n, rng),
        }
    }

    pub fn kind(&self) -> DictionaryKind {
        match self {
            Dictionary::Identity(_) => DictionaryKind::Identity,
            Dictionary::Dense(_) => DictionaryKind::Gaussian,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Dictionary::Identity(n) => *n,
            Dictionary::Dense(m) => m.nrows(),
        }
    }

    pub fn apply(&self, x: &[Complex64]) -> CVec {
        match self {
            Dictionary::Identity(_) => x.to_vec(),
            Dictionary::Dense(m) => matvec(m, x),
        }
    }

    /// `D* x`
    pub fn apply_adjoint(&self, x: &[Complex64]) -> CVec {
        match self {
            Dictionary::Identity(_) => x.to_vec(),
            Dictionary::Dense(m) => {
                let n = m.ncols();
                (0..n)
                    .map(|j| m.column(j).iter().zip(x).map(|(a, b)| a.conj() * b).sum())
                    .collect()
            }
        }
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        match self {
            Dictionary::Identity(n) => DMatrix::identity(*n, *n),
            Dictionary::Dense(m) => m.clone(),
        }
    }
}

fn matvec(m: &DMatrix<Complex64>, x: &[Complex64]) -> CVec {
    let mut out = vec![zero(); m.nrows()];
    for (j, &xj) in x.iter().enumerate() {
        if xj.norm_sqr() == 0.0 {
            continue;
        }
        for (o, a) in out.iter_mut().zip(m.column(j).iter()) {
            *o += a * xj;
        }
    }
    out
}

/// Serializable description of an ensemble. Dictionaries are regenerated from
/// `seed`, never stored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    pub n: usize,
    pub m: usize,
    pub omega: Vec<usize>,
    pub phi_kind: DictionaryKind,
    pub psi_kind: DictionaryKind,
    pub seed: u64,
}

/// One measurement instance: `(n, m, Ω, Φ, Ψ)`. Immutable after construction.
#[derive(Clone, Debug)]
pub struct Ensemble {
    n: usize,
    omega: Vec<usize>,
    phi: Dictionary,
    psi: Dictionary,
    seed: u64,
    dft: UnitaryDft,
}

impl Ensemble {
    /// Draw `Ω`, `Φ` and `Ψ` from independent streams of `seed`.
    pub fn generate(
        n: usize,
        m: usize,
        mode: SamplingMode,
        phi_kind: DictionaryKind,
        psi_kind: DictionaryKind,
        seed: u64,
    ) -> Result<Self> {
        if m > n {
            return Err(Error::invalid(format!("m = {m} exceeds n = {n}")));
        }
        let omega = sample_omega(n, m, mode, &mut trial_rng(seed, STREAM_OMEGA))?;
        Self::from_config(&EnsembleConfig {
            n,
            m,
            omega,
            phi_kind,
            psi_kind,
            seed,
        })
    }

    pub fn from_config(cfg: &EnsembleConfig) -> Result<Self> {
        if cfg.omega.len() != cfg.m {
            return Err(Error::Dimension {
                expected: cfg.m,
                got: cfg.omega.len(),
            });
        }
        let phi = Dictionary::generate(cfg.phi_kind, cfg.n, &mut trial_rng(cfg.seed, STREAM_PHI));
        let psi = Dictionary::generate(cfg.psi_kind, cfg.n, &mut trial_rng(cfg.seed, STREAM_PSI));
        let mut ens = Self::from_parts(cfg.omega.clone(), phi, psi)?;
        ens.seed = cfg.seed;
        Ok(ens)
    }

    /// Build from explicit parts (seed recorded as 0).
    pub fn from_parts(omega: Vec<usize>, phi: Dictionary, psi: Dictionary) -> Result<Self> {
        let n = phi.dim();
        if psi.dim() != n {
            return Err(Error::Dimension {
                expected: n,
                got: psi.dim(),
            });
        }
        if n == 0 || omega.is_empty() || omega.len() > n {
            return Err(Error::invalid("need 1 ≤ m ≤ n"));
        }
        if let Some(&bad) = omega.iter().find(|&&w| w >= n) {
            return Err(Error::invalid(format!("sampling index {bad} outside [0, {n})")));
        }
        Ok(Ensemble {
            n,
            omega,
            phi,
            psi,
            seed: 0,
            dft: UnitaryDft::new(n),
        })
    }

    pub fn config(&self) -> EnsembleConfig {
        EnsembleConfig {
            n: self.n,
            m: self.m(),
            omega: self.omega.clone(),
            phi_kind: self.phi.kind(),
            psi_kind: self.psi.kind(),
            seed: self.seed,
        }
    }

    /// Same `Ω`, new dictionaries.
    pub fn with_dictionaries(&self, phi: Dictionary, psi: Dictionary) -> Result<Self> {
        let mut ens = Self::from_parts(self.omega.clone(), phi, psi)?;
        ens.seed = self.seed;
        Ok(ens)
    }

    /// Independent copies `(Φ̃, Ψ̃)` of the dictionaries, drawn from the
    /// ensemble seed.
    pub fn dictionary_copies(&self) -> (Dictionary, Dictionary) {
        (
            Dictionary::generate(self.phi.kind(), self.n, &mut trial_rng(self.seed, STREAM_PHI_COPY)),
            Dictionary::generate(self.psi.kind(), self.n, &mut trial_rng(self.seed, STREAM_PSI_COPY)),
        )
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.omega.len()
    }

    pub fn omega(&self) -> &[usize] {
        &self.omega
    }

    pub fn phi(&self) -> &Dictionary {
        &self.phi
    }

    pub fn psi(&self) -> &Dictionary {
        &self.psi
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dictionary(&self, side: DictionarySide) -> &Dictionary {
        match side {
            DictionarySide::Left => &self.phi,
            DictionarySide::Right => &self.psi,
        }
    }

    /// `n/√m`, the factor multiplying `F*(F x ⊙ F y)`.
    fn gain(&self) -> f64 {
        self.n as f64 / (self.m() as f64).sqrt()
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.n {
            return Err(Error::Dimension {
                expected: self.n,
                got: len,
            });
        }
        Ok(())
    }

    fn sample(&self, z: &[Complex64]) -> CVec {
        self.omega.iter().map(|&w| z[w]).collect()
    }

    /// `S_Ω* b`: zero-fill, accumulating repeated indices.
    fn scatter(&self, b: &[Complex64]) -> CVec {
        let mut z = vec![zero(); self.n];
        for (&w, &v) in self.omega.iter().zip(b) {
            z[w] += v;
        }
        z
    }

    /// `(n/√m) S_Ω F* (X ⊙ Y)` for spectra `X`, `Y`.
    fn measure_spectra(&self, x_hat: &[Complex64], y_hat: &[Complex64]) -> CVec {
        let g = self.gain();
        let mut z: CVec = x_hat.iter().zip(y_hat).map(|(a, b)| a * b * g).collect();
        self.dft.inverse_in_place(&mut z);
        self.sample(&z)
    }

    /// `A(u vᵀ)`, O(n log n) beyond the two dictionary products.
    pub fn forward(&self, p: &LiftedPoint) -> Result<CVec> {
        self.check_len(p.u.len())?;
        self.check_len(p.v.len())?;
        let x_hat = self.dft.forward(&self.phi.apply(p.u.entries()));
        let y_hat = self.dft.forward(&self.psi.apply(p.v.entries()));
        Ok(self.measure_spectra(&x_hat, &y_hat))
    }

    /// `A(X)` for a general (dense) `X`.
    pub fn forward_dense(&self, x: &DMatrix<Complex64>) -> Result<CVec> {
        self.check_len(x.nrows())?;
        self.check_len(x.ncols())?;
        let f = dft_matrix(self.n);
        let p = &f * self.phi.to_dense() * x;
        let q = &f * self.psi.to_dense();
        let diag: CVec = (0..self.n)
            .map(|k| (0..self.n).map(|j| p[(k, j)] * q[(k, j)]).sum())
            .collect();
        let ones = vec![Complex64::new(1.0, 0.0); self.n];
        Ok(self.measure_spectra(&diag, &ones))
    }

    /// `g = F S_Ω* b`, the spectral weights of `A*(b)`.
    fn adjoint_weights(&self, b: &[Complex64]) -> Result<CVec> {
        if b.len() != self.m() {
            return Err(Error::Dimension {
                expected: self.m(),
                got: b.len(),
            });
        }
        Ok(self.dft.forward(&self.scatter(b)))
    }

    /// Explicit `M_ℓ = (n/√m) Φ* F* diag(f_{ω_ℓ}) F̄ Ψ̄`.
    pub fn measurement_matrix(&self, ell: usize) -> Result<DMatrix<Complex64>> {
        if self.n > DENSE_LIMIT {
            return Err(Error::Guard {
                what: "measurement_matrix",
                n: self.n,
                limit: DENSE_LIMIT,
            });
        }
        let &w = self
            .omega
            .get(ell)
            .ok_or_else(|| Error::invalid(format!("ℓ = {ell} outside [0, {})", self.m())))?;
        let f = dft_matrix(self.n);
        let column: CVec = f.column(w).iter().copied().collect();
        Ok(self.sandwich(&f, &column))
    }

    /// `(n/√m) Φ* F* diag(d) F̄ Ψ̄`
    fn sandwich(&self, f: &DMatrix<Complex64>, d: &[Complex64]) -> DMatrix<Complex64> {
        let mut inner = f.adjoint();
        for (k, &dk) in d.iter().enumerate() {
            for z in inner.column_mut(k).iter_mut() {
                *z *= dk;
            }
        }
        let right = f.map(|z| z.conj()) * self.psi.to_dense().map(|z| z.conj());
        let left = self.phi.to_dense().adjoint();
        (left * inner * right).map(|z| z * self.gain())
    }

    /// Dense `A*(b) = Σ_ℓ b_ℓ M_ℓ`.
    pub fn adjoint_dense(&self, b: &[Complex64]) -> Result<DMatrix<Complex64>> {
        if self.n > DENSE_LIMIT {
            return Err(Error::Guard {
                what: "adjoint_dense",
                n: self.n,
                limit: DENSE_LIMIT,
            });
        }
        let g = self.adjoint_weights(b)?;
        Ok(self.sandwich(&dft_matrix(self.n), &g))
    }

    /// Matrix-free `A*(b)`, usable at any `n`.
    pub fn adjoint_action(&self, b: &[Complex64]) -> Result<AdjointAction<'_>> {
        Ok(AdjointAction {
            ens: self,
            weights: self.adjoint_weights(b)?,
        })
    }

    /// `A*A(X)` for dense `X`.
    pub fn normal_dense(&self, x: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
        let b = self.forward_dense(x)?;
        self.adjoint_dense(&b)
    }

    /// The linear map `u ↦ A(u · fixedᵀ)` (left) or `v ↦ A(fixed · vᵀ)` (right).
    pub fn partial_forward(&self, side: DictionarySide, fixed: &Signal) -> Result<PartialMap<'_>> {
        self.check_len(fixed.len())?;
        if fixed.is_zero() {
            return Err(Error::domain("partial map with a zero fixed factor"));
        }
        let other = match side {
            DictionarySide::Left => &self.psi,
            DictionarySide::Right => &self.phi,
        };
        Ok(PartialMap {
            ens: self,
            side,
            fixed_spectrum: self.dft.forward(&other.apply(fixed.entries())),
        })
    }

    /// `√(n/m) S_Ω F* D_{FΨv}`, the `m × n` block of `R_{u,v}`.
    fn r_block(&self, fixed_spectrum: &[Complex64]) -> DMatrix<Complex64> {
        let f = dft_matrix(self.n);
        let scale = (self.n as f64 / self.m() as f64).sqrt();
        DMatrix::from_fn(self.m(), self.n, |l, k| {
            f[(k, self.omega[l])].conj() * fixed_spectrum[k] * scale
        })
    }

    /// `R_{u,v} = uᵀ ⊗ √(n/m) S_Ω F* D_{FΨv}` (m × n²).
    pub fn r_matrix(&self, p: &LiftedPoint) -> Result<DMatrix<Complex64>> {
        self.kron_guard("r_matrix")?;
        let spec = self.dft.forward(&self.psi.apply(p.v.entries()));
        Ok(kron_row(p.u.entries(), &self.r_block(&spec)))
    }

    /// `L_{û,v̂} = v̂ᵀ ⊗ √(n/m) S_Ω F* D_{F Φ' û}` for a given left dictionary `Φ'`.
    pub fn l_matrix(&self, p: &LiftedPoint, phi: &Dictionary) -> Result<DMatrix<Complex64>> {
        self.kron_guard("l_matrix")?;
        let spec = self.dft.forward(&phi.apply(p.u.entries()));
        Ok(kron_row(p.v.entries(), &self.r_block(&spec)))
    }

    /// `√n (I ⊗ F) vec(D)` for a dictionary `D`; `ξ` of `R_{u,v}` when `D = Φ`.
    pub fn chaos_vector(&self, dict: &Dictionary) -> CVec {
        let d = dict.to_dense();
        let sq = (self.n as f64).sqrt();
        let mut out = Vec::with_capacity(self.n * self.n);
        for j in 0..self.n {
            let col: CVec = d.column(j).iter().copied().collect();
            out.extend(self.dft.forward(&col).into_iter().map(|z| z * sq));
        }
        out
    }

    fn kron_guard(&self, what: &'static str) -> Result<()> {
        if self.n > KRONECKER_LIMIT {
            return Err(Error::Guard {
                what,
                n: self.n,
                limit: KRONECKER_LIMIT,
            });
        }
        Ok(())
    }

    /// Spectral flatness of the signal `D·coeffs` on `side`.
    pub fn signal_flatness(&self, side: DictionarySide, coeffs: &Signal) -> Result<f64> {
        let x = Signal::new(self.dictionary(side).apply(coeffs.entries()))?;
        spectral_flatness(&x)
    }

    /// Draw coefficients from `spec`, with the flatness bound (if any) imposed
    /// on the signal `D·u` of the spec's side. Identity dictionaries reduce to
    /// [`sample_model`]; dense ones use rejection.
    pub fn sample_coefficients<R: Rng + ?Sized>(&self, spec: &ModelSpec, rng: &mut R) -> Result<Signal> {
        let dict = self.dictionary(spec.side);
        let Some(mu) = spec.mu else {
            return sample_model(spec, rng);
        };
        if let Dictionary::Identity(_) = dict {
            return sample_model(spec, rng);
        }
        let sparse_only = ModelSpec { mu: None, ..*spec };
        for _ in 0..DICTIONARY_REJECTION_CAP {
            let u = sample_model(&sparse_only, rng)?;
            if self.signal_flatness(spec.side, &u)? <= mu + FLATNESS_TOL {
                return Ok(u);
            }
        }
        Err(Error::Infeasible(format!(
            "no sparse coefficient vector with signal flatness ≤ {mu} in {DICTIONARY_REJECTION_CAP} draws"
        )))
    }

    /// Membership of `coeffs` in the set described by `spec`, with flatness
    /// measured through the spec's dictionary.
    pub fn admits(&self, spec: &ModelSpec, coeffs: &Signal) -> bool {
        if !spec.sparse_ok(coeffs) {
            return false;
        }
        match spec.mu {
            None => true,
            Some(mu) => self
                .signal_flatness(spec.side, coeffs)
                .is_ok_and(|sf| sf <= mu + FLATNESS_TOL),
        }
    }
}

fn kron_row(row: &[Complex64], block: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let (m, n) = block.shape();
    let mut out = DMatrix::from_element(m, n * row.len(), zero());
    for (j, &c) in row.iter().enumerate() {
        out.columns_mut(j * n, n).copy_from(&block.map(|z| z * c));
    }
    out
}

/// `(u, v)` standing for the rank-one matrix `u vᵀ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LiftedPoint {
    pub u: Signal,
    pub v: Signal,
}

impl LiftedPoint {
    pub fn new(u: Signal, v: Signal) -> Self {
        LiftedPoint { u, v }
    }

    /// `‖u vᵀ‖_F = ‖u‖₂ ‖v‖₂`
    pub fn frobenius_norm(&self) -> f64 {
        self.u.norm2() * self.v.norm2()
    }

    /// `⟨self, other⟩ = (u*u')(v*v')`, the trace inner product of the lifts.
    pub fn inner(&self, other: &LiftedPoint) -> Complex64 {
        self.u.dot(&other.u) * self.v.dot(&other.v)
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let n = self.u.len();
        let k = self.v.len();
        DMatrix::from_fn(n, k, |i, j| self.u.entries()[i] * self.v.entries()[j])
    }
}

/// Matrix-free actions of `A*(b) = (n/√m) Φ* F* D_g F̄ Ψ̄`.
pub struct AdjointAction<'a> {
    ens: &'a Ensemble,
    weights: CVec,
}

impl AdjointAction<'_> {
    /// `w ↦ A*(b) w`
    pub fn apply(&self, w: &[Complex64]) -> CVec {
        let e = self.ens;
        let conj_w: CVec = w.iter().map(|z| z.conj()).collect();
        let y = e.dft.forward(&e.psi.apply(&conj_w));
        let mut z: CVec = y
            .iter()
            .zip(&self.weights)
            .map(|(a, g)| a.conj() * g * e.gain())
            .collect();
        e.dft.inverse_in_place(&mut z);
        e.phi.apply_adjoint(&z)
    }

    /// `w ↦ A*(b)* w`
    pub fn apply_adjoint(&self, w: &[Complex64]) -> CVec {
        let e = self.ens;
        let x = e.dft.forward(&e.phi.apply(w));
        let mut z: CVec = x
            .iter()
            .zip(&self.weights)
            .map(|(a, g)| a * g.conj() * e.gain())
            .collect();
        // F z, since Fᵀ = F.
        e.dft.forward_in_place(&mut z);
        // Ψᵀ z = conj(Ψ* conj z)
        let conj_z: CVec = z.iter().map(|c| c.conj()).collect();
        e.psi.apply_adjoint(&conj_z).into_iter().map(|c| c.conj()).collect()
    }
}

/// `u ↦ A(u · fixedᵀ)` (left) or `v ↦ A(fixed · vᵀ)` (right) and its adjoint.
pub struct PartialMap<'a> {
    ens: &'a Ensemble,
    side: DictionarySide,
    fixed_spectrum: CVec,
}

impl PartialMap<'_> {
    fn own(&self) -> &Dictionary {
        self.ens.dictionary(self.side)
    }

    pub fn side(&self) -> DictionarySide {
        self.side
    }

    pub fn rows(&self) -> usize {
        self.ens.m()
    }

    pub fn cols(&self) -> usize {
        self.ens.n
    }

    pub fn apply(&self, x: &[Complex64]) -> CVec {
        let spec = self.ens.dft.forward(&self.own().apply(x));
        self.ens.measure_spectra(&spec, &self.fixed_spectrum)
    }

    pub fn apply_adjoint(&self, b: &[Complex64]) -> CVec {
        let e = self.ens;
        let mut z = e.dft.forward(&e.scatter(b));
        for (zk, yk) in z.iter_mut().zip(&self.fixed_spectrum) {
            *zk *= yk.conj() * e.gain();
        }
        e.dft.inverse_in_place(&mut z);
        self.own().apply_adjoint(&z)
    }
}

/// Direct circular convolution `(x ⊛ y)_t = Σ_k x_k y_{(t−k) mod n}`; O(n²).
pub fn circular_convolution_naive(x: &[Complex64], y: &[Complex64]) -> CVec {
    let n = x.len();
    (0..n)
        .map(|t| (0..n).map(|k| x[k] * y[(t + n - k) % n]).sum())
        .collect()
}

/// `trace(A* B)`
pub fn matrix_inner(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> Complex64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{complex_normal_vec, rng_from_seed, SeededRng};
    use crate::signal::dot;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn rand_signal(rng: &mut SeededRng, n: usize) -> Signal {
        Signal::new(complex_normal_vec(rng, n, 1.0)).unwrap()
    }

    fn gaussian_ens(n: usize, m: usize, seed: u64) -> Ensemble {
        Ensemble::generate(
            n,
            m,
            SamplingMode::WithoutReplacement,
            DictionaryKind::Gaussian,
            DictionaryKind::Gaussian,
            seed,
        )
        .unwrap()
    }

    #[test]
    fn omega_modes() {
        let mut rng = rng_from_seed(1);
        let mut perm = sample_omega(8, 8, SamplingMode::WithoutReplacement, &mut rng).unwrap();
        perm.sort();
        assert_eq!(perm, (0..8).collect::<Vec<_>>());
        let three = sample_omega(8, 3, SamplingMode::WithoutReplacement, &mut rng).unwrap();
        let mut d = three.clone();
        d.sort();
        d.dedup();
        assert_eq!(d.len(), 3);
        let a = sample_omega(4, 2, SamplingMode::IidUniform, &mut rng_from_seed(5)).unwrap();
        let b = sample_omega(4, 2, SamplingMode::IidUniform, &mut rng_from_seed(5)).unwrap();
        assert_eq!(a, b);
        assert!(sample_omega(4, 5, SamplingMode::WithoutReplacement, &mut rng).is_err());
        assert_eq!(sample_omega(4, 9, SamplingMode::IidUniform, &mut rng).unwrap().len(), 9);
    }

    #[test]
    fn spike_convolution() {
        let n = 8;
        let ens = Ensemble::from_parts(
            vec![0, 3, 5, 6],
            Dictionary::Identity(n),
            Dictionary::Identity(n),
        )
        .unwrap();
        let p = LiftedPoint::new(Signal::basis(n, 0), Signal::basis(n, 0));
        let b = ens.forward(&p).unwrap();
        let scale = (n as f64 / 4.0).sqrt();
        let want = [scale, 0.0, 0.0, 0.0];
        for (x, w) in b.iter().zip(want) {
            assert!((x - c(w)).norm() < 1e-12);
        }
    }

    #[test]
    fn forward_matches_naive_convolution() {
        let mut rng = rng_from_seed(2);
        for n in [3usize, 8, 16, 31, 64, 128] {
            let m = n / 2 + 1;
            let ens = gaussian_ens(n, m, n as u64);
            let p = LiftedPoint::new(rand_signal(&mut rng, n), rand_signal(&mut rng, n));
            let fast = ens.forward(&p).unwrap();
            let x = ens.phi().apply(p.u.entries());
            let y = ens.psi().apply(p.v.entries());
            let conv = circular_convolution_naive(&x, &y);
            let scale = (n as f64 / m as f64).sqrt();
            let slow: Vec<Complex64> = ens.omega().iter().map(|&w| conv[w] * scale).collect();
            let err = crate::signal::norm2(
                &fast.iter().zip(&slow).map(|(a, b)| a - b).collect::<Vec<_>>(),
            );
            assert!(err <= 1e-10 * crate::signal::norm2(&slow), "n = {n}: {err}");
        }
    }

    #[test]
    fn forward_entries_match_measurement_matrices() {
        let mut rng = rng_from_seed(3);
        let ens = gaussian_ens(16, 7, 9);
        let p = LiftedPoint::new(rand_signal(&mut rng, 16), rand_signal(&mut rng, 16));
        let b = ens.forward(&p).unwrap();
        let x = p.to_dense();
        for (ell, &bl) in b.iter().enumerate() {
            let ip = matrix_inner(&ens.measurement_matrix(ell).unwrap(), &x);
            assert!((ip - bl).norm() <= 1e-10 * bl.norm().max(1e-300));
        }
    }

    #[test]
    fn identity_measurement_matrix_is_convolution() {
        let n = 4;
        let ens = Ensemble::from_parts(vec![1, 2], Dictionary::Identity(n), Dictionary::Identity(n)).unwrap();
        let mut rng = rng_from_seed(4);
        let u = rand_signal(&mut rng, n);
        let v = rand_signal(&mut rng, n);
        let conv = circular_convolution_naive(u.entries(), v.entries());
        let x = LiftedPoint::new(u, v).to_dense();
        for ell in 0..2 {
            let ip = matrix_inner(&ens.measurement_matrix(ell).unwrap(), &x);
            let want = conv[ens.omega()[ell]] * (n as f64 / 2.0).sqrt();
            assert!((ip - want).norm() < 1e-12);
        }
        // ⟨M, e_i e_jᵀ⟩ picks the conjugate (i, j) entry.
        let m0 = ens.measurement_matrix(0).unwrap();
        let mut eij = DMatrix::from_element(n, n, zero());
        eij[(2, 1)] = c(1.0);
        assert!((matrix_inner(&m0, &eij) - m0[(2, 1)].conj()).norm() < 1e-15);
    }

    #[test]
    fn measurement_matrix_guard_and_determinism() {
        let big = Ensemble::from_parts(vec![0], Dictionary::Identity(300), Dictionary::Identity(300)).unwrap();
        assert!(matches!(big.measurement_matrix(0), Err(Error::Guard { .. })));
        let a = gaussian_ens(8, 4, 77);
        let b = gaussian_ens(8, 4, 77);
        let fa: f64 = (0..4).map(|l| a.measurement_matrix(l).unwrap().norm_squared()).sum();
        let fb: f64 = (0..4).map(|l| b.measurement_matrix(l).unwrap().norm_squared()).sum();
        assert!(fa.is_finite());
        assert_eq!(fa.to_bits(), fb.to_bits());
    }

    #[test]
    fn bilinearity() {
        let mut rng = rng_from_seed(5);
        let ens = gaussian_ens(16, 8, 1);
        let p = LiftedPoint::new(rand_signal(&mut rng, 16), rand_signal(&mut rng, 16));
        let (a, b) = (Complex64::new(0.3, -1.2), Complex64::new(2.0, 0.5));
        let scaled = LiftedPoint::new(p.u.scaled(a), p.v.scaled(b));
        let y0 = ens.forward(&p).unwrap();
        let y1 = ens.forward(&scaled).unwrap();
        for (x, y) in y0.iter().zip(&y1) {
            assert!((x * a * b - y).norm() <= 1e-12 * (1.0 + y.norm()));
        }
    }

    #[test]
    fn adjoint_balance_and_explicit_sum() {
        let mut rng = rng_from_seed(6);
        let ens = gaussian_ens(12, 5, 2);
        assert!(ens.adjoint_dense(&[zero(); 5]).unwrap().iter().all(|z| z.norm() == 0.0));
        for _ in 0..100 {
            let x = DMatrix::from_fn(12, 12, |_, _| complex_normal(&mut rng, 1.0));
            let b = complex_normal_vec(&mut rng, 5, 1.0);
            let lhs = dot(&ens.forward_dense(&x).unwrap(), &b);
            let rhs = matrix_inner(&x, &ens.adjoint_dense(&b).unwrap());
            assert!((lhs - rhs).norm() <= 1e-10 * x.norm() * crate::signal::norm2(&b));
        }
        let ens8 = gaussian_ens(8, 4, 3);
        let b = complex_normal_vec(&mut rng, 4, 1.0);
        let mut sum = DMatrix::from_element(8, 8, zero());
        for (l, &bl) in b.iter().enumerate() {
            sum += ens8.measurement_matrix(l).unwrap().map(|z| z * bl);
        }
        assert!((sum - ens8.adjoint_dense(&b).unwrap()).norm() < 1e-10);
    }

    #[test]
    fn forward_dense_agrees_with_rank_one() {
        let mut rng = rng_from_seed(7);
        let ens = gaussian_ens(16, 6, 4);
        let p = LiftedPoint::new(rand_signal(&mut rng, 16), rand_signal(&mut rng, 16));
        let a = ens.forward(&p).unwrap();
        let b = ens.forward_dense(&p.to_dense()).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).norm() < 1e-10 * (1.0 + x.norm()));
        }
    }

    #[test]
    fn implicit_adjoint_matches_dense() {
        let mut rng = rng_from_seed(8);
        let ens = gaussian_ens(16, 9, 5);
        let b = complex_normal_vec(&mut rng, 9, 1.0);
        let dense = ens.adjoint_dense(&b).unwrap();
        let act = ens.adjoint_action(&b).unwrap();
        let w = complex_normal_vec(&mut rng, 16, 1.0);
        let wv = nalgebra::DVector::from_vec(w.clone());
        let d1 = &dense * &wv;
        let d2 = dense.adjoint() * &wv;
        for (x, y) in act.apply(&w).iter().zip(d1.iter()) {
            assert!((x - y).norm() < 1e-10);
        }
        for (x, y) in act.apply_adjoint(&w).iter().zip(d2.iter()) {
            assert!((x - y).norm() < 1e-10);
        }
    }

    #[test]
    fn partial_maps() {
        let mut rng = rng_from_seed(9);
        let ens = gaussian_ens(32, 12, 6);
        let v0 = rand_signal(&mut rng, 32);
        let u0 = rand_signal(&mut rng, 32);
        let left = ens.partial_forward(DictionarySide::Left, &v0).unwrap();
        let right = ens.partial_forward(DictionarySide::Right, &u0).unwrap();
        for _ in 0..100 {
            let u = rand_signal(&mut rng, 32);
            let a = left.apply(u.entries());
            let f = ens.forward(&LiftedPoint::new(u.clone(), v0.clone())).unwrap();
            for (x, y) in a.iter().zip(&f) {
                assert!((x - y).norm() <= 1e-12 * (1.0 + y.norm()));
            }
            let r = right.apply(u.entries());
            let f = ens.forward(&LiftedPoint::new(u0.clone(), u.clone())).unwrap();
            for (x, y) in r.iter().zip(&f) {
                assert!((x - y).norm() <= 1e-12 * (1.0 + y.norm()));
            }
            let b = complex_normal_vec(&mut rng, 12, 1.0);
            for map in [&left, &right] {
                let lhs = dot(&map.apply(u.entries()), &b);
                let rhs = dot(u.entries(), &map.apply_adjoint(&b));
                assert!((lhs - rhs).norm() <= 1e-10 * u.norm2() * crate::signal::norm2(&b));
            }
        }
        let u1 = rand_signal(&mut rng, 32);
        let u2 = rand_signal(&mut rng, 32);
        let sum: Vec<Complex64> = u1.entries().iter().zip(u2.entries()).map(|(a, b)| a + b).collect();
        let lhs = left.apply(&sum);
        let rhs: Vec<Complex64> = left
            .apply(u1.entries())
            .iter()
            .zip(left.apply(u2.entries()))
            .map(|(a, b)| a + b)
            .collect();
        for (x, y) in lhs.iter().zip(&rhs) {
            assert!((x - y).norm() <= 1e-12 * (1.0 + y.norm()));
        }
        assert!(ens.partial_forward(DictionarySide::Left, &Signal::zeros(32)).is_err());
    }

    #[test]
    fn r_and_l_matrices_reproduce_forward() {
        let mut rng = rng_from_seed(10);
        let ens = gaussian_ens(8, 5, 7);
        let p = LiftedPoint::new(rand_signal(&mut rng, 8), rand_signal(&mut rng, 8));
        let r = ens.r_matrix(&p).unwrap();
        assert_eq!(r.shape(), (5, 64));
        let xi = nalgebra::DVector::from_vec(ens.chaos_vector(ens.phi()));
        let rxi = &r * &xi;
        let fwd = ens.forward(&p).unwrap();
        for (x, y) in rxi.iter().zip(&fwd) {
            assert!((x - y).norm() <= 1e-10 * (1.0 + y.norm()));
        }
        let l = ens.l_matrix(&p, ens.phi()).unwrap();
        let xi_l = nalgebra::DVector::from_vec(ens.chaos_vector(ens.psi()));
        for (x, y) in (&l * &xi_l).iter().zip(&fwd) {
            assert!((x - y).norm() <= 1e-10 * (1.0 + y.norm()));
        }
        let big = Ensemble::from_parts(vec![0], Dictionary::Identity(65), Dictionary::Identity(65)).unwrap();
        let q = LiftedPoint::new(Signal::basis(65, 0), Signal::basis(65, 0));
        assert!(matches!(big.r_matrix(&q), Err(Error::Guard { .. })));
    }

    #[test]
    fn seed_determinism_and_config_round_trip() {
        let a = gaussian_ens(16, 8, 42);
        let b = gaussian_ens(16, 8, 42);
        assert_eq!(a.omega(), b.omega());
        assert_eq!(a.phi(), b.phi());
        assert_eq!(a.psi(), b.psi());
        let json = serde_json::to_string(&a.config()).unwrap();
        let cfg: EnsembleConfig = serde_json::from_str(&json).unwrap();
        let c = Ensemble::from_config(&cfg).unwrap();
        assert_eq!(c.phi(), a.phi());
        assert!(serde_json::from_str::<EnsembleConfig>(
            r#"{"n":4,"m":1,"omega":[0],"phi_kind":"identity","psi_kind":"identity","seed":0,"extra":1}"#
        )
        .is_err());
    }

    #[test]
    fn dimension_errors() {
        let ens = gaussian_ens(8, 4, 1);
        let p = LiftedPoint::new(Signal::basis(7, 0), Signal::basis(8, 0));
        assert!(matches!(ens.forward(&p), Err(Error::Dimension { .. })));
        assert!(ens.adjoint_dense(&[zero(); 3]).is_err());
        assert!(Ensemble::from_parts(vec![9], Dictionary::Identity(8), Dictionary::Identity(8)).is_err());
    }

    #[test]
    fn flat_coefficients_through_gaussian_dictionary() {
        let ens = gaussian_ens(32, 8, 11);
        let spec = ModelSpec::exact(32, 2).with_mu(4.0).on_side(DictionarySide::Right);
        let mut rng = rng_from_seed(12);
        for _ in 0..20 {
            let v = ens.sample_coefficients(&spec, &mut rng).unwrap();
            assert!(ens.signal_flatness(DictionarySide::Right, &v).unwrap() <= 4.0 + 1e-9);
            assert!(ens.admits(&spec, &v));
        }
    }
}
