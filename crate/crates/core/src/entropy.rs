//! Closed-form entropy, Dudley-type and sample-complexity bounds.
//!
//! Every `≲` bound is evaluated with constant 1; callers multiply by their own
//! constant. Logarithms are natural.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Root of `log(a + 1) = 1/a`, by bisection on `(1, 2)`.
pub fn solve_a() -> f64 {
    let g = |a: f64| (a + 1.0).ln() - 1.0 / a;
    let (mut lo, mut hi) = (1.0f64, 2.0f64);
    // g is increasing: g(1) < 0 < g(2).
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// `2^{−max(k/n, 1)} · min{1, max[log(n/k + 1)/k, 1/n]^{1 − 1/p}}`
pub fn maurey_f(k: u64, n: u64, p: f64) -> f64 {
    let (kf, nf) = (k as f64, n as f64);
    let decay = 2f64.powf(-(kf / nf).max(1.0));
    let base = ((nf / kf + 1.0).ln() / kf).max(1.0 / nf);
    decay * base.powf(1.0 - 1.0 / p).min(1.0)
}

/// `2^{−max(k/n, k/m, 1)} · max[1, log^{1/2}(m/k + 1)] · min{1, max[log(n/k + 1)/k, 1/n]^{1/2}}`
pub fn maurey_h(k: u64, n: u64, m: u64) -> f64 {
    let (kf, nf, mf) = (k as f64, n as f64, m as f64);
    let decay = 2f64.powf(-(kf / nf).max(kf / mf).max(1.0));
    let middle = (mf / kf + 1.0).ln().sqrt().max(1.0);
    let base = ((nf / kf + 1.0).ln() / kf).max(1.0 / nf);
    decay * middle * base.sqrt().min(1.0)
}

/// Envelope `√(log(1 + n/k)/k)` of [`maurey_f`] at `p = 2`.
pub fn maurey_f_envelope(k: u64, n: u64) -> f64 {
    let (kf, nf) = (k as f64, n as f64);
    ((1.0 + nf / kf).ln() / kf).sqrt()
}

/// Envelope `√(log(m/k + 1) log(n/k + 1)/k)` of [`maurey_h`].
pub fn maurey_h_envelope(k: u64, n: u64, m: u64) -> f64 {
    let (kf, nf, mf) = (k as f64, n as f64, m as f64);
    ((mf / kf + 1.0).ln() * (nf / kf + 1.0).ln() / kf).sqrt()
}

/// `√s · log^{3/2} n`
pub fn dudley_sparse_bound(s: u64, n: u64) -> f64 {
    (s as f64).sqrt() * (n as f64).ln().powf(1.5)
}

/// `‖T‖_{1→∞} · √s · log^{1/2} m · log^{3/2} n`
pub fn dudley_fourier_bound(s: u64, n: u64, m: u64, norm_t: f64) -> f64 {
    norm_t * (s as f64).sqrt() * (m as f64).ln().sqrt() * (n as f64).ln().powf(1.5)
}

/// `√((μ s₁ + s₂)/m) · log^{5/2} n`
pub fn gamma2_bound(s1: u64, s2: u64, mu: f64, m: u64, n: u64) -> f64 {
    ((mu * s1 as f64 + s2 as f64) / m as f64).sqrt() * (n as f64).ln().powf(2.5)
}

/// The two-term bound that [`gamma2_bound`] summarizes:
/// `2√(n/m) · dudley_fourier(s₂, n, n, c√(log n)/√n)/√n · √n + 2√(μ/m) · dudley_sparse(s₁, n)`,
/// where `c√(log n)` bounds the entries of the `√n`-scaled `FΨ`.
pub fn gamma2_assembled(s1: u64, s2: u64, mu: f64, m: u64, n: u64, c: f64) -> f64 {
    let nf = n as f64;
    let norm_t = c * nf.ln().sqrt() / nf.sqrt();
    let fourier = 2.0 * (nf / m as f64).sqrt() * dudley_fourier_bound(s2, n, n, norm_t);
    let sparse = 2.0 * (mu / m as f64).sqrt() * dudley_sparse_bound(s1, n);
    fourier + sparse
}

/// Which sparsity/flatness combination multiplies `δ⁻² log⁵ n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComplexityVariant {
    /// `s₁ + μ₁ s₂`
    LeftFlat,
    /// `μ₂ s₁ + s₂`
    RightFlat,
    /// `μ₂ s₁ + μ₁ s₂`
    BothFlat,
}

impl ComplexityVariant {
    pub const ALL: [ComplexityVariant; 3] = [Self::LeftFlat, Self::RightFlat, Self::BothFlat];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::LeftFlat => "left_flat",
            Self::RightFlat => "right_flat",
            Self::BothFlat => "both_flat",
        }
    }
}

/// All inputs a bound calculator may need. Absolute constants are user knobs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundQuery {
    pub n: u64,
    pub m: u64,
    pub k: u64,
    pub s: u64,
    pub s1: u64,
    pub s2: u64,
    pub mu: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub delta: f64,
    pub p: f64,
    pub norm_t: f64,
    pub c: f64,
}

impl Default for BoundQuery {
    fn default() -> Self {
        BoundQuery {
            n: 128,
            m: 64,
            k: 1,
            s: 2,
            s1: 2,
            s2: 2,
            mu: 1.0,
            mu1: 1.0,
            mu2: 1.0,
            delta: 0.5,
            p: 2.0,
            norm_t: 1.0 / 128f64.sqrt(),
            c: 1.0,
        }
    }
}

impl BoundQuery {
    pub fn validate(&self) -> Result<()> {
        let ints = [
            ("n", self.n),
            ("m", self.m),
            ("k", self.k),
            ("s", self.s),
            ("s1", self.s1),
            ("s2", self.s2),
        ];
        for (name, v) in ints {
            if v == 0 {
                return Err(field(name, "must be positive"));
            }
        }
        if self.m > self.n {
            return Err(field("m", "must not exceed n"));
        }
        for (name, v) in [("mu", self.mu), ("mu1", self.mu1), ("mu2", self.mu2), ("p", self.p)] {
            if !(v >= 1.0 && v.is_finite()) {
                return Err(field(name, "must be a finite real ≥ 1"));
            }
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(field("delta", "must lie in (0, 1)"));
        }
        for (name, v) in [("norm_t", self.norm_t), ("c", self.c)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(field(name, "must be a finite positive real"));
            }
        }
        Ok(())
    }
}

fn field(name: &str, message: &str) -> Error {
    Error::Config {
        field: name.to_string(),
        message: message.to_string(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleComplexity {
    /// `C δ⁻² (combination) log⁵ n` before rounding.
    pub raw: f64,
    pub m: u64,
    /// False when `m > n`, where the guarantee is vacuous.
    pub feasible: bool,
}

pub fn sample_complexity(q: &BoundQuery, which: ComplexityVariant) -> Result<SampleComplexity> {
    q.validate()?;
    let (s1, s2) = (q.s1 as f64, q.s2 as f64);
    let comb = match which {
        ComplexityVariant::LeftFlat => s1 + q.mu1 * s2,
        ComplexityVariant::RightFlat => q.mu2 * s1 + s2,
        ComplexityVariant::BothFlat => q.mu2 * s1 + q.mu1 * s2,
    };
    let raw = q.c * comb * (q.n as f64).ln().powi(5) / (q.delta * q.delta);
    let m = raw.ceil() as u64;
    Ok(SampleComplexity {
        raw,
        m,
        feasible: m <= q.n,
    })
}

/// `2δ√(1 + δ) / (1 + √(1 − δ))`, for `0 ≤ δ < 1`.
pub fn angle_preservation_bound(delta: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&delta) {
        return Err(Error::domain(format!("delta = {delta} outside [0, 1)")));
    }
    let value = 2.0 * delta * (1.0 + delta).sqrt() / (1.0 + (1.0 - delta).sqrt());
    debug_assert!(value <= 2.0 * 2f64.sqrt() * delta + 1e-15);
    Ok(value)
}

/// Both sides of the chain `∫₀^∞ √log N(ε) dε ≤ √log 2 Σ_k e_k/√k`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DyadicChain {
    pub integral: f64,
    pub sum: f64,
}

impl DyadicChain {
    /// Relative slack absorbs rounding when the two sides coincide.
    pub fn holds(&self) -> bool {
        self.integral <= self.sum * (1.0 + 1e-12)
    }
}

/// Treat `e` (nonincreasing, zeros implicit past the end) as the dyadic
/// entropy numbers of a body whose covering number is `2^k` on
/// `[e_{k+1}, e_k)` and `1` above `e_1`, and evaluate both sides exactly.
pub fn dyadic_chain(e: &[f64]) -> Result<DyadicChain> {
    if e.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::domain("entropy numbers must be finite and nonnegative"));
    }
    if e.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::domain("entropy numbers must be nonincreasing"));
    }
    let ln2 = 2f64.ln().sqrt();
    let mut integral = 0.0;
    let mut sum = 0.0;
    for (i, &ek) in e.iter().enumerate() {
        let k = (i + 1) as f64;
        let next = e.get(i + 1).copied().unwrap_or(0.0);
        integral += (ek - next) * k.sqrt();
        sum += ek / k.sqrt();
    }
    Ok(DyadicChain {
        integral: ln2 * integral,
        sum: ln2 * sum,
    })
}

pub fn dyadic_chain_check(e: &[f64]) -> Result<bool> {
    Ok(dyadic_chain(e)?.holds())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    L1,
    L2,
    Linf,
}

impl Norm {
    pub fn dist(self, a: &[f64], b: &[f64]) -> f64 {
        let diffs = a.iter().zip(b).map(|(x, y)| (x - y).abs());
        match self {
            Norm::L1 => diffs.sum(),
            Norm::L2 => diffs.map(|d| d * d).sum::<f64>().sqrt(),
            Norm::Linf => diffs.fold(0.0, f64::max),
        }
    }
}

/// Covering radii of a farthest-point traversal: entry `k − 1` is the
/// largest distance from any point to the first `k` centers. The traversal
/// starts at the sample's 1-center, so entry 0 is the sample radius.
pub fn cover_radii(points: &[Vec<f64>], norm: Norm) -> Result<Vec<f64>> {
    if points.is_empty() {
        return Err(Error::invalid("empty point set"));
    }
    let n = points.len();
    let center = (0..n)
        .map(|i| {
            let r = points.iter().map(|q| norm.dist(&points[i], q)).fold(0.0, f64::max);
            (i, r)
        })
        .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
        .0;
    let mut nearest: Vec<f64> = points.iter().map(|q| norm.dist(&points[center], q)).collect();
    let mut radii = Vec::with_capacity(n);
    loop {
        let (far, r) = nearest
            .iter()
            .enumerate()
            .fold((0, 0.0), |best, (i, &d)| if d > best.1 { (i, d) } else { best });
        radii.push(r);
        if r == 0.0 {
            break;
        }
        for (d, q) in nearest.iter_mut().zip(points) {
            *d = d.min(norm.dist(&points[far], q));
        }
    }
    Ok(radii)
}

/// Size of a greedy `eps`-net of the sample: an upper bound on the sample's
/// covering number, nonincreasing in `eps`.
pub fn greedy_cover(points: &[Vec<f64>], eps: f64, norm: Norm) -> Result<usize> {
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::domain("eps must be positive"));
    }
    let radii = cover_radii(points, norm)?;
    Ok(count_from_radii(&radii, eps))
}

/// Smallest `k` with radius `≤ eps` given [`cover_radii`] output.
pub fn count_from_radii(radii: &[f64], eps: f64) -> usize {
    radii.iter().position(|&r| r <= eps).map_or(radii.len(), |i| i + 1)
}

/// Every calculator evaluated at `q`, as `(name, value)` pairs.
pub fn bounds_table(q: &BoundQuery) -> Result<Vec<(String, f64)>> {
    q.validate()?;
    let mut rows = vec![
        ("solve_a".to_string(), solve_a()),
        ("maurey_f".to_string(), maurey_f(q.k, q.n, q.p)),
        ("maurey_h".to_string(), maurey_h(q.k, q.n, q.m)),
        ("dudley_sparse".to_string(), q.c * dudley_sparse_bound(q.s, q.n)),
        (
            "dudley_fourier".to_string(),
            q.c * dudley_fourier_bound(q.s, q.n, q.m, q.norm_t),
        ),
        (
            "gamma2".to_string(),
            q.c * gamma2_bound(q.s1, q.s2, q.mu, q.m, q.n),
        ),
        (
            "angle_preservation".to_string(),
            angle_preservation_bound(q.delta)?,
        ),
    ];
    for which in ComplexityVariant::ALL {
        let sc = sample_complexity(q, which)?;
        rows.push((format!("sample_complexity_{}", which.as_str()), sc.m as f64));
        rows.push((
            format!("sample_complexity_{}_feasible", which.as_str()),
            if sc.feasible { 1.0 } else { 0.0 },
        ));
    }
    Ok(rows)
}

/// Log-spaced integer grid in `[1, max]`, endpoints included.
pub fn log_grid(max: u64, points: usize) -> Vec<u64> {
    let mut out: Vec<u64> = (0..points)
        .map(|i| (max as f64).powf(i as f64 / (points - 1) as f64).round() as u64)
        .collect();
    out.extend([1, 2, 3, max]);
    out.sort_unstable();
    out.dedup();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn a_root() {
        let a = solve_a();
        assert!(a > 1.0 && a < 2.0);
        assert!(((a + 1.0).ln() - 1.0 / a).abs() <= 1e-12);
        let g = |x: f64| (x + 1.0).ln() - 1.0 / x;
        assert!(g(a - 1e-9) < 0.0 && g(a + 1e-9) > 0.0);
        assert_eq!(solve_a().to_bits(), a.to_bits());
    }

    #[test]
    fn maurey_f_hand_values() {
        // k = n: exponent max(1, 1) = 1, and log 2/n < 1/n selects 1/n.
        for n in [1u64, 2, 7, 100] {
            let want = 0.5 * (1.0 / n as f64).sqrt();
            assert!((maurey_f(n, n, 2.0) - want).abs() < 1e-15);
        }
        assert!((maurey_f(1, 1, 1.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn maurey_f_envelope_and_monotone() {
        let grid = log_grid(10_000, 40);
        for &n in &grid {
            let mut last = f64::INFINITY;
            for &k in &grid {
                let f = maurey_f(k, n, 2.0);
                assert!(f <= maurey_f_envelope(k, n) * (1.0 + 1e-12), "k={k} n={n}");
                assert!(f <= last * (1.0 + 1e-12), "k={k} n={n}");
                last = f;
            }
        }
    }

    #[test]
    fn maurey_h_envelope_and_comparison() {
        let grid = log_grid(10_000, 25);
        for &n in &grid {
            for &m in grid.iter().filter(|&&m| m <= n) {
                for &k in &grid {
                    let h = maurey_h(k, n, m);
                    assert!(h <= maurey_h_envelope(k, n, m) * (1.0 + 1e-12), "k={k} n={n} m={m}");
                    assert!(h <= maurey_h(k, n, n) * (1.0 + 1e-12));
                }
            }
        }
        assert!(maurey_h(200, 1000, 1) < 1e-50);
    }

    #[test]
    fn dudley_examples() {
        let n = 3f64.exp().round() as u64;
        assert_eq!(n, 20);
        assert!((dudley_sparse_bound(4, n) - 2.0 * (n as f64).ln().powf(1.5)).abs() < 1e-12);
        assert!((dudley_sparse_bound(4, 20) - 10.392).abs() < 0.1);
        assert!((dudley_sparse_bound(8, 50) / dudley_sparse_bound(4, 50) - 2f64.sqrt()).abs() < 1e-12);
        for n in (8u64..2000).step_by(37) {
            for s in 2..=n / 4 {
                let shape = (s as f64 * (std::f64::consts::E * n as f64 / s as f64).ln()).sqrt();
                assert!(dudley_sparse_bound(s, n) >= shape, "s={s} n={n}");
            }
        }
    }

    #[test]
    fn fourier_bound_scaling_and_substitution() {
        let a = dudley_fourier_bound(3, 64, 16, 0.1);
        assert!((dudley_fourier_bound(3, 64, 16, 0.3) - 3.0 * a).abs() < 1e-12);
        let n = 256u64;
        let l = (n as f64).ln();
        for s2 in [1u64, 4, 9] {
            let c = 1.7;
            let t = c * l.sqrt() / (n as f64).sqrt();
            let got = (n as f64).sqrt() * dudley_fourier_bound(s2, n, n, t);
            let want = c * (s2 as f64).sqrt() * l.powf(2.5);
            assert!((got - want).abs() <= 1e-12 * want);
        }
    }

    #[test]
    fn gamma2_examples() {
        let (m, n) = (40u64, 300u64);
        let l = (n as f64).ln();
        assert!((gamma2_bound(5, 5, 1.0, m, n) - (10.0 / 40.0f64).sqrt() * l.powf(2.5)).abs() < 1e-12);
        assert!((gamma2_bound(3, 2, 2.0, 4 * m, n) * 2.0 - gamma2_bound(3, 2, 2.0, m, n)).abs() < 1e-12);
        for c in [0.3, 1.0, 4.0] {
            for (s1, s2, mu) in [(1u64, 1u64, 1.0), (3, 7, 2.5), (10, 1, 8.0)] {
                let g = gamma2_bound(s1, s2, mu, m, n);
                let a = gamma2_assembled(s1, s2, mu, m, n, c);
                assert!(a <= 2.0 * 2f64.sqrt() * c.max(1.0) * g * (1.0 + 1e-12));
                assert!(a >= g * 2.0 * c.min(1.0) / l);
            }
        }
    }

    #[test]
    fn sample_complexity_examples() {
        let q = BoundQuery {
            n: 128,
            s1: 2,
            s2: 2,
            mu1: 4.0,
            mu2: 4.0,
            delta: 0.5,
            c: 1.0,
            ..BoundQuery::default()
        };
        let sc = sample_complexity(&q, ComplexityVariant::BothFlat).unwrap();
        let want = (4.0 * 16.0 * 128f64.ln().powi(5)).ceil() as u64;
        assert_eq!(sc.m, want);
        assert!(!sc.feasible);
        let sym = BoundQuery {
            mu1: 1.0,
            mu2: 1.0,
            s1: 3,
            s2: 3,
            ..q
        };
        let vals: Vec<u64> = ComplexityVariant::ALL
            .iter()
            .map(|&w| sample_complexity(&sym, w).unwrap().m)
            .collect();
        assert!(vals.iter().all(|&v| v == vals[0]));
        let half = BoundQuery { delta: 0.25, ..q };
        let r1 = sample_complexity(&q, ComplexityVariant::LeftFlat).unwrap().raw;
        let r2 = sample_complexity(&half, ComplexityVariant::LeftFlat).unwrap().raw;
        assert!((r2 / r1 - 4.0).abs() < 1e-12);
        assert!(sample_complexity(&BoundQuery { delta: 1.0, ..q }, ComplexityVariant::BothFlat).is_err());
    }

    #[test]
    fn angle_bound() {
        assert_eq!(angle_preservation_bound(0.0).unwrap(), 0.0);
        let near = angle_preservation_bound(1.0 - 1e-12).unwrap();
        assert!((near - 2.0 * 2f64.sqrt()).abs() < 1e-5);
        for i in 1..=99 {
            let d = i as f64 / 100.0;
            assert!(angle_preservation_bound(d).unwrap() <= 2.0 * 2f64.sqrt() * d);
        }
        assert!(angle_preservation_bound(1.0).is_err());
        assert!(angle_preservation_bound(-0.1).is_err());
    }

    #[test]
    fn dyadic_examples() {
        let single = dyadic_chain(&[1.0, 0.0, 0.0]).unwrap();
        assert!(single.holds());
        assert!((single.integral - 2f64.ln().sqrt()).abs() < 1e-15);
        let harmonic: Vec<f64> = (1..=1000).map(|k| 1.0 / k as f64).collect();
        assert!(dyadic_chain_check(&harmonic).unwrap());
        let geometric: Vec<f64> = (1..=60).map(|k| 2f64.powi(-k)).collect();
        let g = dyadic_chain(&geometric).unwrap();
        assert!(g.integral < g.sum * (1.0 - 1e-3));
        assert!(dyadic_chain(&[1.0, 2.0]).is_err());
        assert!(dyadic_chain(&[1.0, -1.0]).is_err());
    }

    #[test]
    fn greedy_cover_examples() {
        let two = vec![vec![0.0], vec![1.0]];
        assert_eq!(greedy_cover(&two, 0.4, Norm::L2).unwrap(), 2);
        assert_eq!(greedy_cover(&two, 1.0, Norm::L2).unwrap(), 1);
        assert!(greedy_cover(&[], 1.0, Norm::L2).is_err());
        assert!(greedy_cover(&two, 0.0, Norm::L2).is_err());
    }

    #[test]
    fn greedy_cover_l1_ball_in_l2() {
        use rand::Rng;
        let mut rng = crate::rng::rng_from_seed(1);
        // Uniform-ish points of B₁³ by rejection from the cube.
        let mut pts = Vec::new();
        while pts.len() < 1500 {
            let p: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            if p.iter().map(|x: &f64| x.abs()).sum::<f64>() <= 1.0 {
                pts.push(p);
            }
        }
        let radii = cover_radii(&pts, Norm::L2).unwrap();
        assert!(radii.windows(2).all(|w| w[1] <= w[0]));
        let mut last = usize::MAX;
        for i in 1..=20 {
            let eps = i as f64 * 0.05;
            let count = count_from_radii(&radii, eps);
            assert!(count <= last && count >= 1);
            last = count;
        }
        let diam = pts
            .iter()
            .flat_map(|a| pts.iter().map(move |b| Norm::L2.dist(a, b)))
            .fold(0.0, f64::max);
        assert_eq!(greedy_cover(&pts, diam, Norm::L2).unwrap(), 1);
        assert_eq!(greedy_cover(&pts, radii[0], Norm::L2).unwrap(), 1);
    }

    #[test]
    fn table_is_deterministic() {
        let q = BoundQuery::default();
        let a = bounds_table(&q).unwrap();
        let b = bounds_table(&q).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|(_, v)| v.is_finite()));
        assert!(bounds_table(&BoundQuery { m: 0, ..q }).is_err());
    }
}
