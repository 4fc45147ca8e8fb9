//! Randomized controlled trials as marked random measures.
//!
//! A two-arm trial lives on `E = {T, C}` with group weights `ν{T}, ν{C}` and a
//! measurement kernel `Q` giving each arm's outcome law. Vaccine trials use a
//! Bernoulli infection indicator; clinical endpoints use the published mean
//! and dispersion of each arm.

use std::io::Read;

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::counting::{sample_poisson, CountingMeasure};
use crate::error::{Error, Result};
use crate::measure::{DiscreteMeasure, Kernel, MeasurementLaw, ProductMoments, RandomMeasure};
use crate::sensitivity::{binary_entropy, sensitivity_measure_marked};

pub const TREATMENT: &str = "T";
pub const CONTROL: &str = "C";

/// Replicates used for confidence intervals unless overridden.
pub const DEFAULT_REPS: usize = 10_000;

/// Two-sided normal 95% interval width in standard deviations.
const NORMAL_95_WIDTH: f64 = 3.92;

fn arms(weights: [f64; 2]) -> Result<DiscreteMeasure> {
    DiscreteMeasure::new([(TREATMENT, weights[0]), (CONTROL, weights[1])])
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTrial {
    enrollees: u64,
    cases_treatment: u64,
    cases_control: u64,
    #[serde(default = "equal_weights")]
    weights: [f64; 2],
}

fn equal_weights() -> [f64; 2] {
    [0.5, 0.5]
}

/// Summary counts of a vaccine efficacy trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTrial")]
pub struct VaccineTrial {
    pub enrollees: u64,
    pub cases_treatment: u64,
    pub cases_control: u64,
    /// `(ν{T}, ν{C})`.
    pub weights: [f64; 2],
}

impl TryFrom<RawTrial> for VaccineTrial {
    type Error = Error;

    fn try_from(raw: RawTrial) -> Result<Self> {
        VaccineTrial::with_weights(raw.enrollees, raw.cases_treatment, raw.cases_control, raw.weights)
    }
}

impl VaccineTrial {
    /// A trial with equal allocation to both arms.
    pub fn new(enrollees: u64, cases_treatment: u64, cases_control: u64) -> Result<Self> {
        Self::with_weights(enrollees, cases_treatment, cases_control, equal_weights())
    }

    pub fn with_weights(enrollees: u64, cases_treatment: u64, cases_control: u64, weights: [f64; 2]) -> Result<Self> {
        if enrollees == 0 {
            return Err(Error::InvalidParameter("enrollees must be positive".into()));
        }
        if cases_treatment + cases_control > enrollees {
            return Err(Error::InvalidParameter(format!(
                "{} cases exceed {enrollees} enrollees",
                cases_treatment + cases_control
            )));
        }
        arms(weights)?;
        if weights.iter().any(|&w| w <= 0.0) {
            return Err(Error::InvalidParameter("both arms need positive weight".into()));
        }
        let t = Self { enrollees, cases_treatment, cases_control, weights };
        let (pt, pc) = t.infection_probabilities();
        if pt > 1.0 || pc > 1.0 {
            return Err(Error::InvalidParameter(format!(
                "cases exceed the arm sizes {} and {}",
                enrollees as f64 * weights[0],
                enrollees as f64 * weights[1]
            )));
        }
        Ok(t)
    }

    /// Infection probabilities `(P(T), P(C))` over the arm sizes `n ν{·}`.
    pub fn infection_probabilities(&self) -> (f64, f64) {
        let n = self.enrollees as f64;
        (self.cases_treatment as f64 / (n * self.weights[0]), self.cases_control as f64 / (n * self.weights[1]))
    }

    fn infection_kernel(&self) -> Result<Kernel> {
        let (pt, pc) = self.infection_probabilities();
        Kernel::new([(TREATMENT, MeasurementLaw::Bernoulli { p: pt }), (CONTROL, MeasurementLaw::Bernoulli { p: pc })])
    }

    fn product(&self) -> Result<ProductMoments> {
        arms(self.weights)?.product(&self.infection_kernel()?)
    }
}

/// `Eff = 1 − P(T) / P(C)`.
pub fn efficacy(t: &VaccineTrial) -> Result<f64> {
    if t.cases_control == 0 {
        return Err(Error::UndefinedEfficacy("no cases in the control arm".into()));
    }
    let (pt, pc) = t.infection_probabilities();
    Ok(1.0 - pt / pc)
}

/// `Unc(Eff) = 2 min(1 − Eff, Eff)`.
pub fn risk_uncertainty(eff: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&eff) {
        return Err(Error::EfficacyOutOfRange(eff));
    }
    Ok(2.0 * eff.min(1.0 - eff))
}

/// Sensitivity probabilities of the two arms and their binary entropy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ArmSensitivity {
    pub s_t: f64,
    pub s_c: f64,
    pub h2: f64,
}

impl ArmSensitivity {
    fn from_product(nu: &DiscreteMeasure, q: &ProductMoments) -> Result<Self> {
        let s = sensitivity_measure_marked(nu, q)?;
        let s_t = s.get(TREATMENT).expect("arm label");
        let s_c = s.get(CONTROL).expect("arm label");
        Ok(Self { s_t, s_c, h2: binary_entropy(s_t) })
    }
}

/// Arm sensitivities of a vaccine trial under an orthogonal counting measure.
///
/// The infection indicator satisfies `y² = y`, so each arm's second moment is
/// its infection probability.
pub fn vaccine_sensitivity(t: &VaccineTrial) -> Result<ArmSensitivity> {
    if t.cases_treatment + t.cases_control == 0 {
        return Err(Error::ZeroSecondMoment);
    }
    ArmSensitivity::from_product(&arms(t.weights)?, &t.product()?)
}

/// Percentile intervals for `𝕊_C` and `H₂`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SensitivityIntervals {
    pub ci_s_c: [f64; 2],
    pub ci_h2: [f64; 2],
}

/// Percentile 95% intervals for `𝕊_C` and `H₂` from a mixed binomial process
/// with `Poisson(n)` trials and success probability `s_c`.
///
/// Each replicate draws `K ~ Poisson(n)` (redrawn while zero) and
/// `Binomial(K, s_c)` successes, and records `ŝ = successes / K` and `H₂(ŝ)`.
pub fn vaccine_ci<R: Rng + ?Sized>(s_c: f64, n: u64, reps: usize, rng: &mut R) -> Result<SensitivityIntervals> {
    if !(0.0..=1.0).contains(&s_c) {
        return Err(Error::InvalidParameter(format!("success probability {s_c} outside [0, 1]")));
    }
    if n == 0 {
        return Err(Error::InvalidParameter("mean trial count must be positive".into()));
    }
    if reps < 100 {
        return Err(Error::InvalidParameter(format!("reps = {reps}; at least 100 are needed")));
    }
    let mut shares = Vec::with_capacity(reps);
    let mut entropies = Vec::with_capacity(reps);
    for _ in 0..reps {
        let trials = loop {
            let k = sample_poisson(n as f64, rng);
            if k > 0 {
                break k;
            }
        };
        let hits = Binomial::new(trials, s_c).expect("validated probability").sample(rng);
        let share = hits as f64 / trials as f64;
        shares.push(share);
        entropies.push(binary_entropy(share));
    }
    shares.sort_by(f64::total_cmp);
    entropies.sort_by(f64::total_cmp);
    Ok(SensitivityIntervals {
        ci_s_c: [quantile(&shares, 0.025), quantile(&shares, 0.975)],
        ci_h2: [quantile(&entropies, 0.025), quantile(&entropies, 0.975)],
    })
}

/// Quantile of sorted data by linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Full vaccine analysis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VaccineReport {
    pub eff: f64,
    pub unc: f64,
    pub s_t: f64,
    pub s_c: f64,
    pub h2: f64,
    pub ci_s_c: [f64; 2],
    pub ci_h2: [f64; 2],
}

pub fn analyze_vaccine<R: Rng + ?Sized>(t: &VaccineTrial, reps: usize, rng: &mut R) -> Result<VaccineReport> {
    let eff = efficacy(t)?;
    let unc = risk_uncertainty(eff)?;
    let s = vaccine_sensitivity(t)?;
    let ci = vaccine_ci(s.s_c, t.enrollees, reps, rng)?;
    Ok(VaccineReport { eff, unc, s_t: s.s_t, s_c: s.s_c, h2: s.h2, ci_s_c: ci.ci_s_c, ci_h2: ci.ci_h2 })
}

/// Theoretical second-order moments of the arm infection counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrialMoments {
    pub var_t: f64,
    pub var_c: f64,
    pub cov_tc: f64,
}

/// `Var M f_T = c ν{T} P(T) + (δ² − c) ν{T}² P(T)²` and
/// `Cov(M f_T, M f_C) = (δ² − c) ν{T} ν{C} P(T) P(C)`.
pub fn vaccine_theoretical_moments(t: &VaccineTrial, kappa: &CountingMeasure) -> Result<TrialMoments> {
    let m = RandomMeasure::new(*kappa, arms(t.weights)?);
    let q = t.product()?;
    Ok(TrialMoments {
        var_t: m.variance_marked(&q, &[TREATMENT]),
        var_c: m.variance_marked(&q, &[CONTROL]),
        cov_tc: m.covariance_marked(&q, &[TREATMENT], &[CONTROL]),
    })
}

/// Published dispersion of an arm's endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dispersion {
    Ci95 { lower: f64, upper: f64 },
    Sd(f64),
}

/// How a 95% interval is turned into a variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DispersionRule {
    /// `sd = width / 3.92`, `δ² = sd²`.
    #[default]
    Normal392,
    /// `δ² = width / 4`, taken literally without squaring.
    QuarterWidth,
}

/// Mean and dispersion of one arm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupStat {
    pub mean: f64,
    pub dispersion: Dispersion,
}

impl GroupStat {
    pub fn with_ci(mean: f64, lower: f64, upper: f64) -> Result<Self> {
        if lower.is_nan() || upper.is_nan() || lower > upper {
            return Err(Error::InvalidParameter(format!("interval ({lower}, {upper}) is reversed")));
        }
        Ok(Self { mean, dispersion: Dispersion::Ci95 { lower, upper } })
    }

    pub fn with_sd(mean: f64, sd: f64) -> Result<Self> {
        if sd.is_nan() || sd < 0.0 {
            return Err(Error::InvalidParameter(format!("standard deviation {sd} is negative")));
        }
        Ok(Self { mean, dispersion: Dispersion::Sd(sd) })
    }
}

/// `(c, δ²)` of an arm under the given rule.
pub fn dispersion_to_variance(g: &GroupStat, rule: DispersionRule) -> (f64, f64) {
    let delta2 = match (g.dispersion, rule) {
        (Dispersion::Sd(sd), _) => sd * sd,
        (Dispersion::Ci95 { lower, upper }, DispersionRule::Normal392) => {
            let sd = (upper - lower) / NORMAL_95_WIDTH;
            sd * sd
        }
        (Dispersion::Ci95 { lower, upper }, DispersionRule::QuarterWidth) => (upper - lower) / 4.0,
    };
    (g.mean, delta2)
}

/// A clinical endpoint summarized per arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointRecord {
    pub name: String,
    pub treatment: GroupStat,
    pub control: GroupStat,
}

/// `𝕊_T = ν{T}(c_T² + δ_T²) / (ν{T}(c_T² + δ_T²) + ν{C}(c_C² + δ_C²))`.
pub fn endpoint_sensitivity(e: &EndpointRecord, weights: [f64; 2], rule: DispersionRule) -> Result<ArmSensitivity> {
    let law = |g: &GroupStat| {
        let (mean, variance) = dispersion_to_variance(g, rule);
        MeasurementLaw::MomentOnly { mean, variance }
    };
    let q = Kernel::new([(TREATMENT, law(&e.treatment)), (CONTROL, law(&e.control))])?;
    let nu = arms(weights)?;
    ArmSensitivity::from_product(&nu, &nu.product(&q)?)
}

/// Header of the endpoint input table.
pub const ENDPOINT_HEADER: [&str; 9] = ["name", "t_mean", "t_lo", "t_hi", "t_sd", "c_mean", "c_lo", "c_hi", "c_sd"];

/// Reads endpoint records from CSV. Per arm exactly one of `(lo, hi)` or `sd`
/// is populated; blank cells are absent values.
pub fn read_endpoints_csv<R: Read>(input: R) -> Result<Vec<EndpointRecord>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(input);
    let mut records = reader.records();
    let header = match records.next() {
        None => return Ok(Vec::new()),
        Some(h) => h?,
    };
    if header.iter().ne(ENDPOINT_HEADER) {
        return Err(Error::Csv(format!(
            "expected header `{}`, found `{}`",
            ENDPOINT_HEADER.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut out = Vec::new();
    for record in records {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line()) as usize;
        let name = record.get(0).unwrap_or_default().to_owned();
        let number = |i: usize| -> Result<Option<f64>> {
            let cell = record.get(i).unwrap_or_default();
            if cell.is_empty() {
                return Ok(None);
            }
            cell.parse::<f64>().map(Some).map_err(|_| {
                Error::Csv(format!("line {line}: column `{}` is not a number: `{cell}`", ENDPOINT_HEADER[i]))
            })
        };
        let invalid = |reason: String| Error::InvalidRecord { row: line, name: name.clone(), reason };
        let arm = |offset: usize, arm: &str| -> Result<GroupStat> {
            let mean = number(offset)?.ok_or_else(|| invalid(format!("{arm} mean is missing")))?;
            let stat = match (number(offset + 1)?, number(offset + 2)?, number(offset + 3)?) {
                (Some(lo), Some(hi), None) => GroupStat::with_ci(mean, lo, hi),
                (None, None, Some(sd)) => GroupStat::with_sd(mean, sd),
                (Some(_), Some(_), Some(_)) => {
                    return Err(invalid(format!("{arm} arm has both a confidence interval and an sd")))
                }
                _ => return Err(invalid(format!("{arm} arm needs either lo and hi, or sd"))),
            };
            stat.map_err(|e| invalid(format!("{arm} arm: {e}")))
        };
        if record.len() != ENDPOINT_HEADER.len() {
            return Err(Error::Csv(format!("line {line}: expected 9 fields, found {}", record.len())));
        }
        out.push(EndpointRecord { treatment: arm(1, "treatment")?, control: arm(5, "control")?, name: name.clone() });
    }
    Ok(out)
}

/// One point of the `Unc` versus `H₂` comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurveRow {
    pub p: f64,
    pub unc: f64,
    pub h2: f64,
}

impl CurveRow {
    pub fn at(p: f64) -> Self {
        Self { p, unc: 2.0 * p.min(1.0 - p), h2: binary_entropy(p) }
    }
}

/// `Unc(p)` and `H₂(p)` on the grid `0, step, ..., 1`. The last row is always
/// `p = 1`.
pub fn uncertainty_curve(step: f64) -> Result<Vec<CurveRow>> {
    if !(step > 0.0 && step <= 0.5) {
        return Err(Error::InvalidParameter(format!("step {step} must lie in (0, 0.5]")));
    }
    let intervals = 1.0 / step;
    let whole = intervals.round();
    let grid: Vec<f64> = if (intervals - whole).abs() < 1e-9 {
        let count = whole as u64;
        (0..=count).map(|i| i as f64 / count as f64).collect()
    } else {
        let count = intervals.floor() as u64;
        (0..=count).map(|i| i as f64 * step).chain(std::iter::once(1.0)).collect()
    };
    Ok(grid.into_iter().map(CurveRow::at).collect())
}
