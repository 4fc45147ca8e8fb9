//! Discrete measures, measurable functions, measurement kernels and the
//! stone-throwing random measure `N = (κ, ν)`.
//!
//! For `Nf = Σ_{i ≤ K} f(X_i)` with `K ~ κ` and `X_i` iid `ν`:
//!
//! ```text
//! E Nf          = c νf
//! Var Nf        = c ν(f²) + (δ² − c)(νf)²
//! Cov(Nf, Ng)   = c ν(fg) + (δ² − c) νf νg
//! ```
//!
//! Functions may take negative values. The formulas only need square
//! integrability, and clinical endpoints such as a change in tumour size are
//! signed.

use std::fmt;

use indexmap::IndexMap;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::de::{MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize};

use crate::counting::CountingMeasure;
use crate::error::{Error, Result};

/// Tolerance on the total mass of a probability measure.
pub const MASS_TOL: f64 = 1e-12;

/// Reads an object keyed by point label, rejecting duplicate keys, and
/// validates it with `finish` while the parser still knows the position.
fn label_map<'de, D, V, T>(
    deserializer: D,
    finish: fn(IndexMap<String, V>) -> Result<T>,
) -> std::result::Result<T, D::Error>
where
    D: Deserializer<'de>,
    V: Deserialize<'de>,
{
    struct LabelVisitor<V, T> {
        finish: fn(IndexMap<String, V>) -> Result<T>,
    }

    impl<'de, V: Deserialize<'de>, T> Visitor<'de> for LabelVisitor<V, T> {
        type Value = T;

        fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
            f.write_str("an object keyed by point label")
        }

        fn visit_map<A: MapAccess<'de>>(self, mut access: A) -> std::result::Result<T, A::Error> {
            let mut out = IndexMap::new();
            while let Some((key, value)) = access.next_entry::<String, V>()? {
                if out.contains_key(&key) {
                    return Err(serde::de::Error::custom(format!("duplicate point label `{key}`")));
                }
                out.insert(key, value);
            }
            (self.finish)(out).map_err(serde::de::Error::custom)
        }
    }

    deserializer.deserialize_map(LabelVisitor { finish })
}

/// A probability measure `ν` with finite support.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(into = "IndexMap<String, f64>")]
pub struct DiscreteMeasure {
    weights: IndexMap<String, f64>,
}

impl<'de> Deserialize<'de> for DiscreteMeasure {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        label_map(d, DiscreteMeasure::new)
    }
}

impl From<DiscreteMeasure> for IndexMap<String, f64> {
    fn from(m: DiscreteMeasure) -> Self {
        m.weights
    }
}

impl DiscreteMeasure {
    pub fn new<I, S>(points: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        let mut weights = IndexMap::new();
        for (label, w) in points {
            let label = label.into();
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::InvalidMeasure(format!("weight {w} at point `{label}` is not a nonnegative real")));
            }
            if weights.insert(label.clone(), w).is_some() {
                return Err(Error::InvalidMeasure(format!("duplicate point label `{label}`")));
            }
        }
        if weights.is_empty() {
            return Err(Error::InvalidMeasure("support is empty".into()));
        }
        let total: f64 = weights.values().sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidMeasure(format!("weights sum to {total}, not 1")));
        }
        Ok(Self { weights })
    }

    /// Uniform measure on the given labels.
    pub fn uniform<I, S>(labels: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        let w = 1.0 / labels.len().max(1) as f64;
        Self::new(labels.into_iter().map(|l| (l, w)))
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.weights.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.weights.iter().map(|(l, &w)| (l.as_str(), w))
    }

    pub fn weight(&self, label: &str) -> Option<f64> {
        self.weights.get(label).copied()
    }

    pub fn contains(&self, label: &str) -> bool {
        self.weights.contains_key(label)
    }

    /// `ν(A)` for a set of labels; labels outside the support carry no mass.
    pub fn mass<S: AsRef<str>>(&self, set: &[S]) -> f64 {
        set.iter().filter_map(|l| self.weight(l.as_ref())).sum()
    }

    /// `νf = Σ ν{x} f(x)`.
    pub fn integrate(&self, f: &MeasurableFn) -> Result<f64> {
        self.iter().try_fold(0.0, |acc, (label, w)| Ok(acc + w * f.value(label)?))
    }

    /// Moments of `ν × Q` for integrands of the form `1_A(x) y` and `1_A(x) y²`.
    pub fn product(&self, kernel: &Kernel) -> Result<ProductMoments> {
        let mut entries = IndexMap::new();
        for (label, w) in self.iter() {
            let law = kernel.law(label).ok_or_else(|| Error::MissingKernel(label.to_owned()))?;
            let (mean, variance) = law.moments();
            entries.insert(label.to_owned(), PointMoments { weight: w, mean, variance });
        }
        Ok(ProductMoments { entries })
    }
}

/// A real-valued function on point labels.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
#[serde(transparent)]
pub struct MeasurableFn {
    values: IndexMap<String, f64>,
}

impl<'de> Deserialize<'de> for MeasurableFn {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        label_map(d, |values| Ok(MeasurableFn { values }))
    }
}

impl MeasurableFn {
    pub fn new<I, S>(values: I) -> Self
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        Self { values: values.into_iter().map(|(l, v)| (l.into(), v)).collect() }
    }

    /// The constant `k` on the support of `nu`.
    pub fn constant(nu: &DiscreteMeasure, k: f64) -> Self {
        Self::new(nu.labels().map(|l| (l, k)))
    }

    /// The indicator `1_A` on the support of `nu`.
    pub fn indicator<S: AsRef<str>>(nu: &DiscreteMeasure, set: &[S]) -> Self {
        Self::new(nu.labels().map(|l| (l, if set.iter().any(|s| s.as_ref() == l) { 1.0 } else { 0.0 })))
    }

    pub fn get(&self, label: &str) -> Option<f64> {
        self.values.get(label).copied()
    }

    pub fn value(&self, label: &str) -> Result<f64> {
        self.get(label).ok_or_else(|| Error::MissingValue(label.to_owned()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.values.iter().map(|(l, &v)| (l.as_str(), v))
    }

    /// Fails with the first support point of `nu` where `self` is undefined.
    pub fn check_defined_on(&self, nu: &DiscreteMeasure) -> Result<()> {
        nu.labels().try_for_each(|l| self.value(l).map(|_| ()))
    }

    pub fn map(&self, op: impl Fn(f64) -> f64) -> Self {
        Self { values: self.values.iter().map(|(l, &v)| (l.clone(), op(v))).collect() }
    }

    pub fn square(&self) -> Self {
        self.map(|v| v * v)
    }

    /// `f 1_A`.
    pub fn restrict<S: AsRef<str>>(&self, set: &[S]) -> Self {
        Self {
            values: self
                .values
                .iter()
                .map(|(l, &v)| {
                    let inside = set.iter().any(|s| s.as_ref() == l);
                    (l.clone(), if inside { v } else { 0.0 })
                })
                .collect(),
        }
    }

    /// Pointwise product over the labels of `self`.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a * b)
    }

    /// `a f + b g` over the labels of `self`.
    pub fn linear_combination(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        self.zip_with(other, |x, y| a * x + b * y)
    }

    fn zip_with(&self, other: &Self, op: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let values =
            self.values.iter().map(|(l, &v)| Ok((l.clone(), op(v, other.value(l)?)))).collect::<Result<_>>()?;
        Ok(Self { values })
    }
}

/// Law of the measurement `Y` recorded at a point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeasurementLaw {
    Bernoulli {
        p: f64,
    },
    /// Only the first two moments are known; there is no sampling law.
    MomentOnly {
        mean: f64,
        variance: f64,
    },
    /// The empirical distribution of observed draws.
    Empirical {
        draws: Vec<f64>,
    },
}

impl MeasurementLaw {
    fn validate(&self, label: &str) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(format!("kernel at `{label}`: {msg}")));
        match self {
            MeasurementLaw::Bernoulli { p } if !(0.0..=1.0).contains(p) => {
                bad(format!("bernoulli p = {p} outside [0, 1]"))
            }
            MeasurementLaw::MomentOnly { mean, variance } if !(*variance >= 0.0 && mean.is_finite()) => {
                bad(format!("moment-only law needs a finite mean and nonnegative variance, got ({mean}, {variance})"))
            }
            MeasurementLaw::Empirical { draws } if draws.is_empty() => bad("empirical law has no draws".into()),
            _ => Ok(()),
        }
    }

    /// `(E Y, Var Y)`; the empirical law uses the plug-in variance.
    pub fn moments(&self) -> (f64, f64) {
        match self {
            MeasurementLaw::Bernoulli { p } => (*p, p * (1.0 - p)),
            MeasurementLaw::MomentOnly { mean, variance } => (*mean, *variance),
            MeasurementLaw::Empirical { draws } => {
                let n = draws.len() as f64;
                let mean = draws.iter().sum::<f64>() / n;
                let var = draws.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / n;
                (mean, var)
            }
        }
    }

    pub fn can_sample(&self) -> bool {
        !matches!(self, MeasurementLaw::MomentOnly { .. })
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            MeasurementLaw::Bernoulli { p } => {
                if rng.random::<f64>() < *p {
                    1.0
                } else {
                    0.0
                }
            }
            MeasurementLaw::Empirical { draws } => draws[rng.random_range(0..draws.len())],
            MeasurementLaw::MomentOnly { .. } => unreachable!("checked by caller"),
        }
    }
}

/// Transition kernel `Q` from point labels to real measurements.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(into = "IndexMap<String, MeasurementLaw>")]
pub struct Kernel {
    laws: IndexMap<String, MeasurementLaw>,
}

impl<'de> Deserialize<'de> for Kernel {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        label_map(d, Kernel::new)
    }
}

impl From<Kernel> for IndexMap<String, MeasurementLaw> {
    fn from(k: Kernel) -> Self {
        k.laws
    }
}

impl Kernel {
    pub fn new<I, S>(laws: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, MeasurementLaw)>,
        S: Into<String>,
    {
        let laws: IndexMap<String, MeasurementLaw> = laws.into_iter().map(|(l, q)| (l.into(), q)).collect();
        for (label, law) in &laws {
            law.validate(label)?;
        }
        Ok(Self { laws })
    }

    pub fn law(&self, label: &str) -> Option<&MeasurementLaw> {
        self.laws.get(label)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointMoments {
    pub weight: f64,
    pub mean: f64,
    pub variance: f64,
}

/// First and second measurement moments of `ν × Q`, resolved per point.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductMoments {
    entries: IndexMap<String, PointMoments>,
}

impl ProductMoments {
    pub fn point(&self, label: &str) -> Option<&PointMoments> {
        self.entries.get(label)
    }

    /// `(ν × Q)(1_A y) = Σ_{x ∈ A} ν{x} c_x`.
    pub fn first_moment<S: AsRef<str>>(&self, set: &[S]) -> f64 {
        self.sum_over(set, |m| m.mean)
    }

    /// `(ν × Q)(1_A y²) = Σ_{x ∈ A} ν{x} (c_x² + δ_x²)`.
    pub fn second_moment<S: AsRef<str>>(&self, set: &[S]) -> f64 {
        self.sum_over(set, |m| m.mean * m.mean + m.variance)
    }

    fn sum_over<S: AsRef<str>>(&self, set: &[S], term: impl Fn(&PointMoments) -> f64) -> f64 {
        self.entries
            .iter()
            .filter(|(l, _)| set.iter().any(|s| s.as_ref() == l.as_str()))
            .map(|(_, m)| m.weight * term(m))
            .sum()
    }

    /// `x ↦ c_x`, the conditional mean of the measurement.
    pub fn mean_fn(&self) -> MeasurableFn {
        MeasurableFn::new(self.entries.iter().map(|(l, m)| (l.as_str(), m.mean)))
    }

    /// `x ↦ c_x² + δ_x²`, the conditional second moment of the measurement.
    pub fn second_moment_fn(&self) -> MeasurableFn {
        MeasurableFn::new(self.entries.iter().map(|(l, m)| (l.as_str(), m.mean * m.mean + m.variance)))
    }
}

/// The random counting measure `N = (κ, ν)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomMeasure {
    pub kappa: CountingMeasure,
    pub nu: DiscreteMeasure,
}

impl RandomMeasure {
    pub fn new(kappa: CountingMeasure, nu: DiscreteMeasure) -> Self {
        Self { kappa, nu }
    }

    /// Variance of `Nf` given `νf` and `ν(f²)`.
    pub fn variance_from_moments(&self, first: f64, second: f64) -> f64 {
        self.kappa.mean() * second + self.kappa.defect() * first * first
    }

    /// Covariance of `Nf` and `Ng` given `ν(fg)`, `νf` and `νg`.
    pub fn covariance_from_moments(&self, cross: f64, first_f: f64, first_g: f64) -> f64 {
        self.kappa.mean() * cross + self.kappa.defect() * first_f * first_g
    }

    /// `E Nf = c νf`.
    pub fn mean_of(&self, f: &MeasurableFn) -> Result<f64> {
        Ok(self.kappa.mean() * self.nu.integrate(f)?)
    }

    /// `Var Nf = c ν(f²) + (δ² − c)(νf)²`.
    pub fn variance_of(&self, f: &MeasurableFn) -> Result<f64> {
        let first = self.nu.integrate(f)?;
        let second = self.nu.integrate(&f.square())?;
        Ok(self.variance_from_moments(first, second))
    }

    /// `Cov(Nf, Ng) = c ν(fg) + (δ² − c) νf νg`.
    pub fn covariance_of(&self, f: &MeasurableFn, g: &MeasurableFn) -> Result<f64> {
        g.check_defined_on(&self.nu)?;
        let cross = self.nu.integrate(&f.mul(g)?)?;
        Ok(self.covariance_from_moments(cross, self.nu.integrate(f)?, self.nu.integrate(g)?))
    }

    /// `E M(1_A y)` for the marked measure `M = (κ, ν × Q)`.
    pub fn mean_marked<S: AsRef<str>>(&self, q: &ProductMoments, set: &[S]) -> f64 {
        self.kappa.mean() * q.first_moment(set)
    }

    /// `Var M(1_A y)`.
    pub fn variance_marked<S: AsRef<str>>(&self, q: &ProductMoments, set: &[S]) -> f64 {
        self.variance_from_moments(q.first_moment(set), q.second_moment(set))
    }

    /// `Cov(M(1_A y), M(1_B y))`; the cross moment lives on `A ∩ B`.
    pub fn covariance_marked<S: AsRef<str>>(&self, q: &ProductMoments, a: &[S], b: &[S]) -> f64 {
        let both: Vec<&str> = a.iter().map(AsRef::as_ref).filter(|l| b.iter().any(|s| s.as_ref() == *l)).collect();
        self.covariance_from_moments(q.second_moment(&both), q.first_moment(a), q.first_moment(b))
    }

    /// One realization of the stone-throwing construction: `K ~ κ`, then `K`
    /// iid points from `ν`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> PointSample {
        let picker = self.picker();
        let stones = self.kappa.sampler().sample(rng);
        let mut counts = vec![0u64; self.nu.len()];
        for _ in 0..stones {
            counts[picker.sample(rng)] += 1;
        }
        PointSample {
            counts: self.nu.labels().zip(counts).filter(|&(_, n)| n > 0).map(|(l, n)| (l.to_owned(), n)).collect(),
        }
    }

    fn picker(&self) -> WeightedIndex<f64> {
        WeightedIndex::new(self.nu.iter().map(|(_, w)| w)).expect("validated measure has positive mass")
    }

    /// Empirical moments of `Nf` (and optionally `Cov(Nf, Ng)`) over `reps`
    /// independent realizations.
    ///
    /// With a kernel every stone also draws a measurement, and marked
    /// integrands see `(x, y)`. Point integrands ignore the measurement.
    pub fn mc_moments<R: Rng + ?Sized>(
        &self,
        kernel: Option<&Kernel>,
        f: Integrand<'_>,
        g: Option<Integrand<'_>>,
        reps: usize,
        rng: &mut R,
    ) -> Result<McMoments> {
        if reps < 2 {
            return Err(Error::InvalidParameter(format!("reps = {reps}; at least 2 are needed")));
        }
        let labels: Vec<&str> = self.nu.labels().collect();
        let laws = match kernel {
            Some(k) => Some(
                labels
                    .iter()
                    .map(|&l| {
                        let law = k.law(l).ok_or_else(|| Error::MissingKernel(l.to_owned()))?;
                        if law.can_sample() {
                            Ok(law)
                        } else {
                            Err(Error::NoSamplingLaw(l.to_owned()))
                        }
                    })
                    .collect::<Result<Vec<_>>>()?,
            ),
            None => None,
        };
        let f = Evaluator::new(f, &labels, laws.is_some())?;
        let g = g.map(|g| Evaluator::new(g, &labels, laws.is_some())).transpose()?;

        let picker = self.picker();
        let counts = self.kappa.sampler();
        let mut xs = Vec::with_capacity(reps);
        let mut ys = Vec::with_capacity(if g.is_some() { reps } else { 0 });
        for _ in 0..reps {
            let stones = counts.sample(rng);
            let (mut sf, mut sg) = (0.0, 0.0);
            for _ in 0..stones {
                let i = picker.sample(rng);
                let y = laws.as_ref().map_or(0.0, |laws| laws[i].sample(rng));
                sf += f.eval(i, labels[i], y);
                if let Some(g) = &g {
                    sg += g.eval(i, labels[i], y);
                }
            }
            xs.push(sf);
            if g.is_some() {
                ys.push(sg);
            }
        }
        Ok(McMoments::from_samples(&xs, g.is_some().then_some(ys.as_slice())))
    }
}

/// An integrand for Monte Carlo moment estimation.
#[derive(Clone, Copy)]
pub enum Integrand<'a> {
    /// A function of the point alone.
    Point(&'a MeasurableFn),
    /// A function of the point and its measurement; needs a kernel.
    Marked(&'a dyn Fn(&str, f64) -> f64),
}

enum Evaluator<'a> {
    Point(Vec<f64>),
    Marked(&'a dyn Fn(&str, f64) -> f64),
}

impl<'a> Evaluator<'a> {
    fn new(f: Integrand<'a>, labels: &[&str], has_kernel: bool) -> Result<Self> {
        match f {
            Integrand::Point(f) => Ok(Evaluator::Point(labels.iter().map(|l| f.value(l)).collect::<Result<_>>()?)),
            Integrand::Marked(_) if !has_kernel => {
                Err(Error::InvalidParameter("a marked integrand needs a measurement kernel".into()))
            }
            Integrand::Marked(f) => Ok(Evaluator::Marked(f)),
        }
    }

    fn eval(&self, index: usize, label: &str, y: f64) -> f64 {
        match self {
            Evaluator::Point(values) => values[index],
            Evaluator::Marked(f) => f(label, y),
        }
    }
}

/// Empirical moments of `Nf` with standard errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McMoments {
    pub reps: usize,
    pub mean: f64,
    /// Unbiased sample variance.
    pub variance: f64,
    pub mean_se: f64,
    /// Standard error of the variance estimate, from the fourth central moment.
    pub variance_se: f64,
    pub covariance: Option<f64>,
    pub covariance_se: Option<f64>,
}

impl McMoments {
    pub fn from_samples(xs: &[f64], ys: Option<&[f64]>) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let m2 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
        let variance = m2 * n / (n - 1.0);
        let (covariance, covariance_se) = match ys {
            Some(ys) => {
                let my = ys.iter().sum::<f64>() / n;
                let products: Vec<f64> = xs.iter().zip(ys).map(|(x, y)| (x - mean) * (y - my)).collect();
                let c = products.iter().sum::<f64>() / n;
                let spread = products.iter().map(|p| (p - c).powi(2)).sum::<f64>() / n;
                (Some(c * n / (n - 1.0)), Some((spread / n).sqrt()))
            }
            None => (None, None),
        };
        Self {
            reps: xs.len(),
            mean,
            variance,
            mean_se: (variance / n).sqrt(),
            variance_se: ((m4 - m2 * m2).max(0.0) / n).sqrt(),
            covariance,
            covariance_se,
        }
    }
}

/// The multiset of stones produced by one realization.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct PointSample {
    counts: IndexMap<String, u64>,
}

impl PointSample {
    /// Total number of stones `K`.
    pub fn len(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// `N({x})`.
    pub fn count(&self, label: &str) -> u64 {
        self.counts.get(label).copied().unwrap_or(0)
    }

    /// `N(A)`.
    pub fn count_in<S: AsRef<str>>(&self, set: &[S]) -> u64 {
        set.iter().map(|s| self.count(s.as_ref())).sum()
    }

    /// `Nf = Σ_x N({x}) f(x)`.
    pub fn integrate(&self, f: &MeasurableFn) -> Result<f64> {
        self.counts.iter().try_fold(0.0, |acc, (l, &n)| Ok(acc + n as f64 * f.value(l)?))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u64)> {
        self.counts.iter().map(|(l, &n)| (l.as_str(), n))
    }
}
