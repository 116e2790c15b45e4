//! Unitary DFT helpers. Both directions carry the 1/√n factor so that
//! `inverse(forward(x)) == x` and `‖forward(x)‖₂ == ‖x‖₂`.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

#[derive(Clone)]
pub struct UnitaryDft {
    n: usize,
    scale: f64,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for UnitaryDft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("UnitaryDft").field("n", &self.n).finish()
    }
}

impl UnitaryDft {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        UnitaryDft {
            n,
            scale: 1.0 / (n as f64).sqrt(),
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// In place `x ← F x`.
    pub fn forward_in_place(&self, x: &mut [Complex64]) {
        debug_assert_eq!(x.len(), self.n);
        self.fwd.process(x);
        x.iter_mut().for_each(|z| *z *= self.scale);
    }

    /// In place `x ← F* x`.
    pub fn inverse_in_place(&self, x: &mut [Complex64]) {
        debug_assert_eq!(x.len(), self.n);
        self.inv.process(x);
        x.iter_mut().for_each(|z| *z *= self.scale);
    }

    pub fn forward(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut y = x.to_vec();
        self.forward_in_place(&mut y);
        y
    }

    pub fn inverse(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut y = x.to_vec();
        self.inverse_in_place(&mut y);
        y
    }
}

/// Entry `(j, k)` of the unitary DFT matrix, `exp(-2πi jk/n)/√n` (zero-based).
pub fn dft_entry(n: usize, j: usize, k: usize) -> Complex64 {
    let phase = -2.0 * std::f64::consts::PI * ((j * k) % n) as f64 / n as f64;
    Complex64::from_polar(1.0 / (n as f64).sqrt(), phase)
}

/// Dense unitary DFT matrix.
pub fn dft_matrix(n: usize) -> nalgebra::DMatrix<Complex64> {
    nalgebra::DMatrix::from_fn(n, n, |j, k| dft_entry(n, j, k))
}

thread_local! {
    static PLANS: std::cell::RefCell<std::collections::HashMap<usize, UnitaryDft>> =
        std::cell::RefCell::new(std::collections::HashMap::new());
}

/// Run `f` with a cached per-thread plan for length `n`.
pub fn with_dft<T>(n: usize, f: impl FnOnce(&UnitaryDft) -> T) -> T {
    PLANS.with(|plans| {
        let mut plans = plans.borrow_mut();
        let plan = plans.entry(n).or_insert_with(|| UnitaryDft::new(n));
        f(plan)
    })
}
