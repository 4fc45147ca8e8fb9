//! Partition ANOVA of `Var Nf`, structural and correlative sensitivity
//! indices, sensitivity probability measures and their entropy.
//!
//! For a partition `P` of the support,
//!
//! ```text
//! Var Nf = Σ_D Var N(f 1_D) + Σ_{D' ≠ D''} Cov(N(f 1_D'), N(f 1_D''))
//! Var N(f 1_D)                 = c ν(f² 1_D) + (δ² − c)(ν(f 1_D))²
//! Cov(N(f 1_D'), N(f 1_D''))   = (δ² − c) ν(f 1_D') ν(f 1_D'')
//! ```
//!
//! Normalizing by `Var Nf` gives the structural index `S^a_D` and the
//! correlative index `S^b_D`, which together sum to one. Only when `κ` is
//! orthogonal do the covariances vanish and `(S^a_D)` become a probability
//! vector; otherwise the report is flagged as defective.

use std::collections::HashSet;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{DiscreteMeasure, MeasurableFn, ProductMoments, RandomMeasure};

/// Separator between coordinates of a product-space label, e.g. `"T|1"`.
pub const COORD_SEP: char = '|';

/// Tolerance for the probability vectors built here.
pub const PROB_TOL: f64 = 1e-12;

/// Joins coordinate labels into a product-space label.
pub fn product_label<S: AsRef<str>>(coords: &[S]) -> String {
    let parts: Vec<&str> = coords.iter().map(AsRef::as_ref).collect();
    parts.join(&COORD_SEP.to_string())
}

/// A finite partition of a measure's support into labeled cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "IndexMap<String, Vec<String>>", into = "IndexMap<String, Vec<String>>")]
pub struct Partition {
    cells: IndexMap<String, Vec<String>>,
}

impl TryFrom<IndexMap<String, Vec<String>>> for Partition {
    type Error = Error;

    fn try_from(cells: IndexMap<String, Vec<String>>) -> Result<Self> {
        Partition::new(cells)
    }
}

impl From<Partition> for IndexMap<String, Vec<String>> {
    fn from(p: Partition) -> Self {
        p.cells
    }
}

impl Partition {
    /// Builds a partition, checking that cells are nonempty and disjoint.
    pub fn new<I, S, L>(cells: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, Vec<L>)>,
        S: Into<String>,
        L: Into<String>,
    {
        let mut out: IndexMap<String, Vec<String>> = IndexMap::new();
        let mut seen = HashSet::new();
        for (name, members) in cells {
            let name = name.into();
            let members: Vec<String> = members.into_iter().map(Into::into).collect();
            if members.is_empty() {
                return Err(Error::InvalidPartition(format!("cell `{name}` is empty")));
            }
            for m in &members {
                if !seen.insert(m.clone()) {
                    return Err(Error::InvalidPartition(format!("point `{m}` appears in more than one cell")));
                }
            }
            if out.insert(name.clone(), members).is_some() {
                return Err(Error::InvalidPartition(format!("duplicate cell label `{name}`")));
            }
        }
        if out.is_empty() {
            return Err(Error::InvalidPartition("no cells".into()));
        }
        Ok(Self { cells: out })
    }

    /// One cell per support point, labeled by the point.
    pub fn singletons<'a>(labels: impl IntoIterator<Item = &'a str>) -> Result<Self> {
        Self::new(labels.into_iter().map(|l| (l, vec![l])))
    }

    /// The trivial partition `{E}`.
    pub fn whole(nu: &DiscreteMeasure, name: &str) -> Result<Self> {
        Self::new([(name, nu.labels().collect::<Vec<_>>())])
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cells(&self) -> impl Iterator<Item = (&str, &[String])> {
        self.cells.iter().map(|(n, m)| (n.as_str(), m.as_slice()))
    }

    /// Checks that the cells cover exactly the given support.
    pub fn check_covers<'a>(&self, support: impl IntoIterator<Item = &'a str>) -> Result<()> {
        let support: Vec<&str> = support.into_iter().collect();
        let members: HashSet<&str> = self.cells.values().flatten().map(String::as_str).collect();
        let missing: Vec<&str> = support.iter().copied().filter(|l| !members.contains(l)).collect();
        if !missing.is_empty() {
            return Err(Error::InvalidPartition(format!(
                "partition does not cover support points: {}",
                missing.join(", ")
            )));
        }
        let known: HashSet<&str> = support.into_iter().collect();
        let mut extra: Vec<&str> = members.into_iter().filter(|l| !known.contains(l)).collect();
        if !extra.is_empty() {
            extra.sort_unstable();
            return Err(Error::InvalidPartition(format!(
                "partition names points outside the support: {}",
                extra.join(", ")
            )));
        }
        Ok(())
    }
}

/// Covariance between two distinct cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairCovariance {
    pub cells: [String; 2],
    pub covariance: f64,
}

/// Variance of `Nf` split over the cells of a partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaDecomposition {
    /// `Var Nf`, computed directly rather than as the sum of the parts.
    pub total_variance: f64,
    pub cell_variances: IndexMap<String, f64>,
    /// One entry per unordered pair of distinct cells.
    pub pair_covariances: Vec<PairCovariance>,
    /// Set when `Var Nf` vanishes; indices cannot be normalized.
    pub degenerate: bool,
}

impl AnovaDecomposition {
    /// `Var Nf − (Σ cell variances + 2 Σ pair covariances)`.
    pub fn identity_residual(&self) -> f64 {
        let cells: f64 = self.cell_variances.values().sum();
        let pairs: f64 = self.pair_covariances.iter().map(|p| p.covariance).sum();
        self.total_variance - (cells + 2.0 * pairs)
    }

    /// Covariance between two cells, in either order.
    pub fn covariance(&self, a: &str, b: &str) -> Option<f64> {
        self.pair_covariances
            .iter()
            .find(|p| (p.cells[0] == a && p.cells[1] == b) || (p.cells[0] == b && p.cells[1] == a))
            .map(|p| p.covariance)
    }
}

/// Partition ANOVA of `Var Nf` for a function on points.
pub fn anova_decompose(n: &RandomMeasure, f: &MeasurableFn, partition: &Partition) -> Result<AnovaDecomposition> {
    f.check_defined_on(&n.nu)?;
    anova_from_moments(n, f, &f.square(), partition)
}

/// Partition ANOVA of `Var M(1_E y)` for the marked measure `(κ, ν × Q)`.
pub fn anova_decompose_marked(
    n: &RandomMeasure,
    q: &ProductMoments,
    partition: &Partition,
) -> Result<AnovaDecomposition> {
    anova_from_moments(n, &q.mean_fn(), &q.second_moment_fn(), partition)
}

/// ANOVA from per-point first and second moment functions. For a point
/// function these are `f` and `f²`; for a marked measure they are the
/// conditional moments `c_x` and `c_x² + δ_x²`.
pub fn anova_from_moments(
    n: &RandomMeasure,
    first: &MeasurableFn,
    second: &MeasurableFn,
    partition: &Partition,
) -> Result<AnovaDecomposition> {
    partition.check_covers(n.nu.labels())?;
    let nu = &n.nu;
    let c = n.kappa.mean();
    let defect = n.kappa.defect();

    let mut firsts = Vec::with_capacity(partition.len());
    let mut cell_variances = IndexMap::new();
    for (name, members) in partition.cells() {
        let m1 = nu.integrate(&first.restrict(members))?;
        let m2 = nu.integrate(&second.restrict(members))?;
        cell_variances.insert(name.to_owned(), n.variance_from_moments(m1, m2));
        firsts.push((name, m1));
    }

    let mut pair_covariances = Vec::new();
    for (i, &(a, ma)) in firsts.iter().enumerate() {
        for &(b, mb) in &firsts[i + 1..] {
            pair_covariances.push(PairCovariance { cells: [a.to_owned(), b.to_owned()], covariance: defect * ma * mb });
        }
    }

    let m1 = nu.integrate(first)?;
    let m2 = nu.integrate(second)?;
    let total_variance = n.variance_from_moments(m1, m2);
    let scale = c * m2.abs() + defect.abs() * m1 * m1;
    let degenerate = total_variance.abs() <= 1e-12 * scale || scale == 0.0;
    Ok(AnovaDecomposition { total_variance, cell_variances, pair_covariances, degenerate })
}

/// Sign of the correlative total of a sensitivity report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Defectiveness {
    /// Covariances vanish; `(S^a_D)` is a probability vector.
    Proper,
    /// Positive covariances; `S^a < 1`.
    Positive,
    /// Negative covariances, as under a fixed sample size; `S^a > 1`.
    Negative,
}

/// Structural and correlative sensitivity indices per cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub structural: IndexMap<String, f64>,
    pub correlative: IndexMap<String, f64>,
    pub s_a_total: f64,
    pub s_b_total: f64,
    pub defectiveness: Defectiveness,
}

impl SensitivityReport {
    pub fn is_defective(&self) -> bool {
        self.defectiveness != Defectiveness::Proper
    }

    /// `Σ_D (S^a_D + S^b_D)`, which is one up to rounding.
    pub fn index_sum(&self) -> f64 {
        self.s_a_total + self.s_b_total
    }

    /// The structural indices as a sensitivity measure on cells.
    pub fn as_measure(&self) -> Result<SensitivityMeasure> {
        match self.defectiveness {
            Defectiveness::Proper => SensitivityMeasure::from_probs(self.structural.clone()),
            Defectiveness::Positive => Err(Error::Defective("positively")),
            Defectiveness::Negative => Err(Error::Defective("negatively")),
        }
    }
}

/// Normalizes an ANOVA decomposition into sensitivity indices.
pub fn sensitivity_indices(d: &AnovaDecomposition) -> Result<SensitivityReport> {
    if d.degenerate || d.total_variance <= 0.0 {
        return Err(Error::ZeroVariance);
    }
    let total = d.total_variance;
    let structural: IndexMap<String, f64> = d.cell_variances.iter().map(|(k, v)| (k.clone(), v / total)).collect();
    let mut correlative: IndexMap<String, f64> = d.cell_variances.keys().map(|k| (k.clone(), 0.0)).collect();
    for pair in &d.pair_covariances {
        for cell in &pair.cells {
            *correlative.get_mut(cell).expect("pair names a known cell") += pair.covariance / total;
        }
    }
    let s_a_total = structural.values().sum();
    let s_b_total: f64 = correlative.values().sum();
    let all_zero = d.pair_covariances.iter().all(|p| p.covariance == 0.0);
    let defectiveness = if all_zero || s_b_total.abs() <= PROB_TOL {
        Defectiveness::Proper
    } else if s_b_total > 0.0 {
        Defectiveness::Positive
    } else {
        Defectiveness::Negative
    };
    Ok(SensitivityReport { structural, correlative, s_a_total, s_b_total, defectiveness })
}

/// Logarithm base for entropies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogBase {
    #[default]
    Natural,
    Binary,
}

impl LogBase {
    fn scale(self) -> f64 {
        match self {
            LogBase::Natural => 1.0,
            LogBase::Binary => std::f64::consts::LN_2,
        }
    }
}

/// `−Σ p log p` with `0 log 0 = 0`.
pub fn shannon_entropy(probs: impl IntoIterator<Item = f64>, base: LogBase) -> f64 {
    let h: f64 = probs.into_iter().filter(|&p| p > 0.0).map(|p| -p * p.ln()).sum();
    (h / base.scale()).max(0.0)
}

/// Entropy in bits of the two-point distribution `(p, 1 − p)`.
pub fn binary_entropy(p: f64) -> f64 {
    shannon_entropy([p, 1.0 - p], LogBase::Binary)
}

/// A probability measure describing where the variance of `Nf` lives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "IndexMap<String, f64>", into = "IndexMap<String, f64>")]
pub struct SensitivityMeasure {
    probs: IndexMap<String, f64>,
}

impl TryFrom<IndexMap<String, f64>> for SensitivityMeasure {
    type Error = Error;

    fn try_from(probs: IndexMap<String, f64>) -> Result<Self> {
        SensitivityMeasure::from_probs(probs)
    }
}

impl From<SensitivityMeasure> for IndexMap<String, f64> {
    fn from(s: SensitivityMeasure) -> Self {
        s.probs
    }
}

impl SensitivityMeasure {
    pub fn from_probs<I, S>(probs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        let probs: IndexMap<String, f64> = probs.into_iter().map(|(l, p)| (l.into(), p)).collect();
        if let Some((l, p)) = probs.iter().find(|(_, &p)| p.is_nan() || p < 0.0) {
            return Err(Error::InvalidParameter(format!("negative sensitivity mass {p} at `{l}`")));
        }
        let total: f64 = probs.values().sum();
        if (total - 1.0).abs() > PROB_TOL {
            return Err(Error::InvalidParameter(format!("sensitivity masses sum to {total}, not 1")));
        }
        Ok(Self { probs })
    }

    /// `𝕊{x} = ν{x} s(x) / ν s` for a nonnegative second-moment function `s`.
    pub fn from_second_moments(nu: &DiscreteMeasure, second: &MeasurableFn) -> Result<Self> {
        let mut probs = IndexMap::new();
        for (label, w) in nu.iter() {
            let s = second.value(label)?;
            if s < 0.0 {
                return Err(Error::InvalidParameter(format!("second moment {s} at `{label}` is negative")));
            }
            probs.insert(label.to_owned(), w * s);
        }
        let total: f64 = probs.values().sum();
        if total <= 0.0 {
            return Err(Error::ZeroSecondMoment);
        }
        probs.values_mut().for_each(|p| *p /= total);
        Ok(Self { probs })
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn get(&self, label: &str) -> Option<f64> {
        self.probs.get(label).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.probs.iter().map(|(l, &p)| (l.as_str(), p))
    }

    /// `𝕊(A)`.
    pub fn mass<S: AsRef<str>>(&self, set: &[S]) -> f64 {
        set.iter().filter_map(|l| self.get(l.as_ref())).sum()
    }

    /// The image of `𝕊` on the cells of a partition of its support.
    pub fn cell_masses(&self, partition: &Partition) -> Result<SensitivityMeasure> {
        partition.check_covers(self.probs.keys().map(String::as_str))?;
        Ok(Self { probs: partition.cells().map(|(name, members)| (name.to_owned(), self.mass(members))).collect() })
    }

    /// Entropy `H_P(𝕊)`; without a partition, over the singletons of the support.
    pub fn entropy(&self, partition: Option<&Partition>, base: LogBase) -> Result<f64> {
        match partition {
            Some(p) => Ok(self.cell_masses(p)?.entropy(None, base)?),
            None => Ok(shannon_entropy(self.probs.values().copied(), base)),
        }
    }

    /// Marginal on the coordinates `u` of a product-space support whose labels
    /// join coordinates with [`COORD_SEP`].
    pub fn marginal(&self, u: &[usize]) -> Result<SensitivityMeasure> {
        if u.is_empty() {
            return Err(Error::InvalidParameter("marginal needs at least one coordinate".into()));
        }
        let mut arity = None;
        let mut probs: IndexMap<String, f64> = IndexMap::new();
        for (label, p) in self.iter() {
            let coords: Vec<&str> = label.split(COORD_SEP).collect();
            match arity {
                None => arity = Some(coords.len()),
                Some(a) if a != coords.len() => {
                    return Err(Error::InvalidParameter(format!(
                        "label `{label}` has {} coordinates, expected {a}",
                        coords.len()
                    )))
                }
                _ => {}
            }
            let picked = u
                .iter()
                .map(|&i| {
                    coords.get(i).copied().ok_or_else(|| {
                        Error::InvalidParameter(format!("coordinate {i} out of range for label `{label}`"))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            *probs.entry(product_label(&picked)).or_insert(0.0) += p;
        }
        Ok(Self { probs })
    }
}

/// `𝕊(dx) = ν(dx) f²(x) / ν f²`.
pub fn sensitivity_measure(nu: &DiscreteMeasure, f: &MeasurableFn) -> Result<SensitivityMeasure> {
    f.check_defined_on(nu)?;
    SensitivityMeasure::from_second_moments(nu, &f.square())
}

/// Sensitivity measure of the marked measure, with `f²` composed into the
/// conditional second moments `c_x² + δ_x²`.
pub fn sensitivity_measure_marked(nu: &DiscreteMeasure, q: &ProductMoments) -> Result<SensitivityMeasure> {
    SensitivityMeasure::from_second_moments(nu, &q.second_moment_fn())
}

/// Marginal sensitivity measure `𝕊_u`.
pub fn marginal_sensitivity(s: &SensitivityMeasure, u: &[usize]) -> Result<SensitivityMeasure> {
    s.marginal(u)
}

/// Entropy `H_P(𝕊)`.
pub fn entropy(s: &SensitivityMeasure, partition: Option<&Partition>, base: LogBase) -> Result<f64> {
    s.entropy(partition, base)
}
