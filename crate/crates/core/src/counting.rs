//! Probability counting measures.
//!
//! A counting measure `κ` is the law of the number of stones `K` thrown in the
//! stone-throwing construction. Its mean `c` and variance `δ²` fully determine
//! the second-order structure of the resulting random measure: the sign of the
//! defect `δ² − c` decides whether counts on disjoint sets are negatively
//! correlated, uncorrelated (orthogonal), or positively correlated.
//!
//! | kind              | support        | defect `δ² − c`           |
//! |-------------------|----------------|---------------------------|
//! | Dirac(c)          | {c}            | −c                        |
//! | Binomial(n, p)    | {0..n}         | −np²                      |
//! | Poisson(c)        | ℕ≥0            | 0                         |
//! | OrthogonalDie(m,n)| {m..n}         | 0                         |
//! | NegBinomial(r, p) | ℕ≥0            | r (p/(1−p))²              |
//! | Zeta(s)           | ℕ>0            | from ζ(s−2), ζ(s−1), ζ(s) |
//!
//! The binomial tends to Dirac and Poisson limits, and the orthogonal die and
//! negative binomial tend to Poisson; these are analytic facts and are not
//! modelled as constructors.

use rand::Rng;
use rand_distr::{Binomial, Distribution, Gamma, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tail mass at which unbounded supports are truncated.
pub const TAIL_MASS: f64 = 1e-12;

/// Absolute tolerance of the orthogonality test.
pub const ORTHOGONALITY_TOL: f64 = 1e-12;

/// Parameters of a counting distribution, as read from or written to JSON.
///
/// Values of this type are not validated; wrap them in [`CountingMeasure`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CountingKind {
    Dirac { c: u64 },
    Binomial { n: u64, p: f64 },
    Poisson { c: f64 },
    OrthogonalDie { m: u64, n: u64 },
    NegativeBinomial { r: f64, p: f64 },
    Zeta { s: f64 },
}

/// A validated probability counting measure `κ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CountingKind", into = "CountingKind")]
pub struct CountingMeasure {
    kind: CountingKind,
}

impl TryFrom<CountingKind> for CountingMeasure {
    type Error = Error;

    fn try_from(kind: CountingKind) -> Result<Self> {
        CountingMeasure::new(kind)
    }
}

impl From<CountingMeasure> for CountingKind {
    fn from(k: CountingMeasure) -> Self {
        k.kind
    }
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

impl CountingMeasure {
    pub fn new(kind: CountingKind) -> Result<Self> {
        match kind {
            // Dirac(0) is admitted so that the empty configuration can be expressed.
            CountingKind::Dirac { .. } => {}
            CountingKind::Binomial { n, p } => {
                if n == 0 {
                    return Err(invalid("binomial n must be a positive integer"));
                }
                if !(p > 0.0 && p <= 1.0) {
                    return Err(invalid(format!("binomial p = {p} must lie in (0, 1]")));
                }
            }
            CountingKind::Poisson { c } => {
                if !(c > 0.0 && c.is_finite()) {
                    return Err(invalid(format!("poisson c = {c} must be positive and finite")));
                }
            }
            CountingKind::OrthogonalDie { m, n } => {
                if n == 0 || m > n {
                    return Err(invalid(format!("orthogonal die needs 0 <= m <= n and n > 0, got m = {m}, n = {n}")));
                }
                if !die_is_orthogonal(m, n) {
                    return Err(invalid(format!("orthogonal die ({m}, {n}) violates mean-variance equality")));
                }
            }
            CountingKind::NegativeBinomial { r, p } => {
                if !(r > 0.0 && r.is_finite()) {
                    return Err(invalid(format!("negative binomial r = {r} must be positive")));
                }
                if !(p > 0.0 && p < 1.0) {
                    return Err(invalid(format!("negative binomial p = {p} must lie in (0, 1)")));
                }
            }
            CountingKind::Zeta { s } => {
                if !(s > 3.0 && s.is_finite()) {
                    return Err(invalid(format!("zeta s = {s} must exceed 3 for a finite variance")));
                }
            }
        }
        Ok(Self { kind })
    }

    pub fn dirac(c: u64) -> Self {
        Self { kind: CountingKind::Dirac { c } }
    }

    pub fn binomial(n: u64, p: f64) -> Result<Self> {
        Self::new(CountingKind::Binomial { n, p })
    }

    pub fn poisson(c: f64) -> Result<Self> {
        Self::new(CountingKind::Poisson { c })
    }

    pub fn orthogonal_die(m: u64, n: u64) -> Result<Self> {
        Self::new(CountingKind::OrthogonalDie { m, n })
    }

    pub fn negative_binomial(r: f64, p: f64) -> Result<Self> {
        Self::new(CountingKind::NegativeBinomial { r, p })
    }

    pub fn zeta(s: f64) -> Result<Self> {
        Self::new(CountingKind::Zeta { s })
    }

    pub fn kind(&self) -> &CountingKind {
        &self.kind
    }

    /// Short lowercase name of the kind, matching the JSON tag.
    pub fn name(&self) -> &'static str {
        match self.kind {
            CountingKind::Dirac { .. } => "dirac",
            CountingKind::Binomial { .. } => "binomial",
            CountingKind::Poisson { .. } => "poisson",
            CountingKind::OrthogonalDie { .. } => "orthogonal_die",
            CountingKind::NegativeBinomial { .. } => "negative_binomial",
            CountingKind::Zeta { .. } => "zeta",
        }
    }

    /// Mean `c` of the count.
    pub fn mean(&self) -> f64 {
        match self.kind {
            CountingKind::Dirac { c } => c as f64,
            CountingKind::Binomial { n, p } => n as f64 * p,
            CountingKind::Poisson { c } => c,
            CountingKind::OrthogonalDie { m, n } => (m + n) as f64 / 2.0,
            CountingKind::NegativeBinomial { r, p } => r * p / (1.0 - p),
            CountingKind::Zeta { s } => riemann_zeta(s - 1.0) / riemann_zeta(s),
        }
    }

    /// Variance `δ²` of the count.
    pub fn variance(&self) -> f64 {
        match self.kind {
            CountingKind::Dirac { .. } => 0.0,
            CountingKind::Binomial { n, p } => n as f64 * p * (1.0 - p),
            CountingKind::Poisson { c } => c,
            CountingKind::OrthogonalDie { m, n } => {
                let width = (n - m + 1) as f64;
                (width * width - 1.0) / 12.0
            }
            CountingKind::NegativeBinomial { r, p } => r * p / ((1.0 - p) * (1.0 - p)),
            CountingKind::Zeta { s } => {
                let z = riemann_zeta(s);
                let mean = riemann_zeta(s - 1.0) / z;
                riemann_zeta(s - 2.0) / z - mean * mean
            }
        }
    }

    /// The defect `δ² − c`.
    pub fn defect(&self) -> f64 {
        self.variance() - self.mean()
    }

    /// True when counts on disjoint sets are uncorrelated, i.e. `δ² = c`.
    pub fn is_orthogonal(&self) -> bool {
        match self.kind {
            CountingKind::Poisson { .. } | CountingKind::OrthogonalDie { .. } => true,
            _ => self.defect().abs() < ORTHOGONALITY_TOL,
        }
    }

    /// Smallest and largest point of the support, `None` for an unbounded top.
    pub fn support(&self) -> (u64, Option<u64>) {
        match self.kind {
            CountingKind::Dirac { c } => (c, Some(c)),
            CountingKind::Binomial { n, .. } => (0, Some(n)),
            CountingKind::Poisson { .. } | CountingKind::NegativeBinomial { .. } => (0, None),
            CountingKind::OrthogonalDie { m, n } => (m, Some(n)),
            CountingKind::Zeta { .. } => (1, None),
        }
    }

    /// Natural log of `P(K = k)`; `-inf` off the support.
    pub fn ln_pmf(&self, k: u64) -> f64 {
        let (lo, hi) = self.support();
        if k < lo || hi.is_some_and(|hi| k > hi) {
            return f64::NEG_INFINITY;
        }
        match self.kind {
            CountingKind::Dirac { .. } => 0.0,
            CountingKind::Binomial { n, p } => {
                if p == 1.0 {
                    return if k == n { 0.0 } else { f64::NEG_INFINITY };
                }
                ln_choose(n, k) + k as f64 * p.ln() + (n - k) as f64 * (1.0 - p).ln()
            }
            CountingKind::Poisson { c } => k as f64 * c.ln() - c - ln_factorial(k),
            CountingKind::OrthogonalDie { m, n } => -((n - m + 1) as f64).ln(),
            CountingKind::NegativeBinomial { r, p } => {
                // Γ(k + r) / (Γ(r) k!) as a running product.
                let coeff: f64 = (0..k).map(|i| ((r + i as f64) / (i + 1) as f64).ln()).sum();
                coeff + r * (1.0 - p).ln() + k as f64 * p.ln()
            }
            CountingKind::Zeta { s } => -s * (k as f64).ln() - riemann_zeta(s).ln(),
        }
    }

    pub fn pmf(&self, k: u64) -> f64 {
        self.ln_pmf(k).exp()
    }

    /// Enumerates `(k, P(K = k))` over the support, truncating unbounded
    /// supports once the remaining tail mass is provably below [`TAIL_MASS`].
    pub fn truncated_pmf(&self) -> Vec<(u64, f64)> {
        let (lo, hi) = self.support();
        if let Some(hi) = hi {
            return (lo..=hi).map(|k| (k, self.pmf(k))).collect();
        }
        let mean = self.mean();
        let mut out = Vec::new();
        let mut ln_p = self.ln_pmf(lo);
        let mut k = lo;
        loop {
            let p = ln_p.exp();
            out.push((k, p));
            if k as f64 > mean && self.tail_bound(k, p) < TAIL_MASS {
                break;
            }
            ln_p = self.next_ln_pmf(k, ln_p);
            k += 1;
        }
        out
    }

    // ln P(K = k + 1) from ln P(K = k), for the unbounded kinds.
    fn next_ln_pmf(&self, k: u64, ln_p: f64) -> f64 {
        let next = (k + 1) as f64;
        match self.kind {
            CountingKind::Poisson { c } => ln_p + c.ln() - next.ln(),
            CountingKind::NegativeBinomial { r, p } => ln_p + ((k as f64 + r) * p / next).ln(),
            CountingKind::Zeta { s } => ln_p - s * (next / k as f64).ln(),
            _ => self.ln_pmf(k + 1),
        }
    }

    // Upper bound on P(K > k) given p = P(K = k), valid for k > mean.
    fn tail_bound(&self, k: u64, p: f64) -> f64 {
        match self.kind {
            CountingKind::Poisson { c } => {
                let ratio = c / (k + 1) as f64;
                if ratio >= 1.0 {
                    f64::INFINITY
                } else {
                    p * ratio / (1.0 - ratio)
                }
            }
            CountingKind::NegativeBinomial { r, p: q } => {
                // Successive pmf ratios q (j + r) / (j + 1) are monotone in j
                // with limit q, so the first ratio or q bounds them all.
                let ratio = (q * (k as f64 + r) / (k + 1) as f64).max(q);
                if ratio >= 1.0 {
                    f64::INFINITY
                } else {
                    p * ratio / (1.0 - ratio)
                }
            }
            CountingKind::Zeta { s } => zeta_tail(s, k),
            _ => 0.0,
        }
    }

    /// Draws one count `K ~ κ`. Use [`CountingMeasure::sampler`] for
    /// repeated draws.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        self.sampler().sample(rng)
    }

    /// A sampler with its per-law setup done once.
    pub fn sampler(&self) -> CountSampler {
        let inner = match self.kind {
            CountingKind::Dirac { c } => SamplerKind::Dirac(c),
            CountingKind::Binomial { n, p } => SamplerKind::Binomial(Binomial::new(n, p).expect("validated binomial")),
            CountingKind::Poisson { c } => SamplerKind::Poisson(Poisson::new(c).expect("validated poisson")),
            CountingKind::OrthogonalDie { m, n } => SamplerKind::Die(m, n),
            // Gamma-Poisson mixture.
            CountingKind::NegativeBinomial { r, p } => {
                SamplerKind::GammaPoisson(Gamma::new(r, p / (1.0 - p)).expect("validated gamma"))
            }
            CountingKind::Zeta { s } => SamplerKind::Zeta { s, norm: riemann_zeta(s), cap: zeta_truncation(s) },
        };
        CountSampler(inner)
    }
}

/// Prepared sampler for a [`CountingMeasure`].
#[derive(Debug, Clone, Copy)]
pub struct CountSampler(SamplerKind);

#[derive(Debug, Clone, Copy)]
enum SamplerKind {
    Dirac(u64),
    Binomial(Binomial),
    Poisson(Poisson<f64>),
    Die(u64, u64),
    GammaPoisson(Gamma<f64>),
    Zeta { s: f64, norm: f64, cap: u64 },
}

impl Distribution<u64> for CountSampler {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        match self.0 {
            SamplerKind::Dirac(c) => c,
            SamplerKind::Binomial(b) => b.sample(rng),
            SamplerKind::Poisson(p) => p.sample(rng) as u64,
            SamplerKind::Die(m, n) => rng.random_range(m..=n),
            SamplerKind::GammaPoisson(g) => sample_poisson(g.sample(rng), rng),
            SamplerKind::Zeta { s, norm, cap } => sample_zeta(s, norm, cap, rng),
        }
    }
}

pub(crate) fn sample_poisson<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> u64 {
    if rate <= 0.0 {
        return 0;
    }
    Poisson::new(rate).expect("positive poisson rate").sample(rng) as u64
}

// Inverse-CDF walk from k = 1. The expected walk length is the mean, which is
// close to 1 for every admissible s.
fn sample_zeta<R: Rng + ?Sized>(s: f64, norm: f64, cap: u64, rng: &mut R) -> u64 {
    let u: f64 = rng.random();
    let mut cumulative = 0.0;
    let mut k = 1u64;
    loop {
        cumulative += (k as f64).powf(-s) / norm;
        if cumulative > u || k >= cap {
            return k;
        }
        k += 1;
    }
}

// P(K > k) <= ∫_k^∞ x^{-s} dx / ζ(s).
fn zeta_tail(s: f64, k: u64) -> f64 {
    (k as f64).powf(1.0 - s) / ((s - 1.0) * riemann_zeta(s))
}

fn zeta_truncation(s: f64) -> u64 {
    let k = ((s - 1.0) * riemann_zeta(s) * TAIL_MASS).powf(1.0 / (1.0 - s));
    k.ceil().max(1.0) as u64
}

/// Orthogonal die support `{m..n}` satisfies mean = variance exactly, i.e.
/// `6 (m + n) = (n − m + 1)² − 1`.
fn die_is_orthogonal(m: u64, n: u64) -> bool {
    let width = n - m + 1;
    6 * (m + n) == width * width - 1
}

/// All orthogonal dice with span `n − m` at most `max_span`, by ascending span.
///
/// Mean-variance equality reduces to `12 m = d (d − 4)` with `d = n − m`, so a
/// die exists for every `d >= 4` with `d (d − 4)` divisible by 12.
pub fn orthogonal_die_pairs(max_span: u64) -> Vec<(u64, u64)> {
    (4..=max_span)
        .filter(|d| (d * (d - 4)) % 12 == 0)
        .map(|d| {
            let m = d * (d - 4) / 12;
            (m, m + d)
        })
        .collect()
}

fn ln_factorial(k: u64) -> f64 {
    (2..=k).map(|i| (i as f64).ln()).sum()
}

fn ln_choose(n: u64, k: u64) -> f64 {
    let k = k.min(n - k);
    (1..=k).map(|i| ((n - k + i) as f64 / i as f64).ln()).sum()
}

// B_{2j} / (2j)! for j = 1..=6.
const EM_COEFFS: [f64; 6] =
    [1.0 / 12.0, -1.0 / 720.0, 1.0 / 30240.0, -1.0 / 1209600.0, 1.0 / 47900160.0, -691.0 / 1_307_674_368_000.0];

/// Riemann zeta `ζ(s)` for real `s > 1`.
///
/// Direct partial sum to `N − 1` followed by an Euler–Maclaurin correction at
/// `N`; with `N = 16` and six Bernoulli terms the truncation error is far
/// below 1e-12 for `s > 1`.
pub fn riemann_zeta(s: f64) -> f64 {
    assert!(s > 1.0, "riemann_zeta needs s > 1, got {s}");
    const N: u64 = 16;
    let n = N as f64;
    let head: f64 = (1..N).map(|k| (k as f64).powf(-s)).sum();
    let mut tail = n.powf(1.0 - s) / (s - 1.0) + 0.5 * n.powf(-s);
    // Rising factorial s (s+1) ... (s+2j-2), times N^{-s-2j+1}.
    let mut rising = s;
    let mut power = n.powf(-s - 1.0);
    for (j, coeff) in EM_COEFFS.iter().enumerate() {
        tail += coeff * rising * power;
        let a = s + (2 * j + 1) as f64;
        rising *= a * (a + 1.0);
        power /= n * n;
    }
    head + tail
}
