//! Acceptance criteria, one PASS/FAIL line each. Exits non-zero if any fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stonethrow::counting::orthogonal_die_pairs;
use stonethrow::measure::Integrand;
use stonethrow::rct::{self, DispersionRule, EndpointRecord, VaccineTrial};
use stonethrow::sensitivity::{self, binary_entropy};
use stonethrow::{CountingMeasure, DiscreteMeasure, MeasurableFn, Partition, RandomMeasure};

/// Outcome of one criterion: failures collected as messages.
#[derive(Default)]
struct Check {
    failures: Vec<String>,
}

impl Check {
    fn near(&mut self, what: &str, got: f64, want: f64, tol: f64) {
        if (got - want).abs().is_nan() || (got - want).abs() > tol {
            self.failures.push(format!("{what}: got {got}, want {want} ± {tol}"));
        }
    }

    fn holds(&mut self, what: &str, ok: bool) {
        if !ok {
            self.failures.push(what.to_owned());
        }
    }

    fn within(&mut self, what: &str, elapsed: Duration, limit: Duration) {
        if elapsed >= limit {
            self.failures.push(format!("{what}: {elapsed:?} exceeds {limit:?}"));
        }
    }
}

fn criterion(id: u32, name: &str, body: fn(&mut Check)) -> bool {
    let mut check = Check::default();
    let start = Instant::now();
    body(&mut check);
    let elapsed = start.elapsed();
    let pass = check.failures.is_empty();
    println!("criterion {id:>2} {} {name} ({elapsed:.2?})", if pass { "PASS" } else { "FAIL" });
    for f in &check.failures {
        println!("    {f}");
    }
    pass
}

fn trial_reproduction(c: &mut Check, cases: (u64, u64), n: u64, want: [f64; 4]) {
    let start = Instant::now();
    let t = VaccineTrial::new(n, cases.0, cases.1).unwrap();
    let eff = rct::efficacy(&t).unwrap();
    let s = rct::vaccine_sensitivity(&t).unwrap();
    let unc = rct::risk_uncertainty(eff).unwrap();
    c.within("runtime", start.elapsed(), Duration::from_secs(1));
    c.near("Eff", eff, want[0], 0.0005);
    c.near("S_C", s.s_c, want[1], 0.0005);
    c.near("H2", s.h2, want[2], 0.001);
    c.near("Unc", unc, want[3], 0.001);
}

fn moderna(c: &mut Check) {
    trial_reproduction(c, (5, 90), 30400, [0.9444, 0.9474, 0.298, 0.111]);
}

fn pfizer(c: &mut Check) {
    trial_reproduction(c, (8, 162), 44000, [0.9506, 0.9529, 0.274, 0.099]);
}

fn intervals(c: &mut Check) {
    let start = Instant::now();
    let cases = [
        ("Moderna", 18.0 / 19.0, 30400, [0.945, 0.950], [0.287, 0.307]),
        ("Pfizer", 81.0 / 85.0, 44000, [0.951, 0.955], [0.265, 0.283]),
    ];
    for (name, s_c, n, ci_s, ci_h) in cases {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ci = rct::vaccine_ci(s_c, n, 10_000, &mut rng).unwrap();
        for i in 0..2 {
            c.near(&format!("{name} ci_sC[{i}]"), ci.ci_s_c[i], ci_s[i], 0.002);
            c.near(&format!("{name} ci_h2[{i}]"), ci.ci_h2[i], ci_h[i], 0.004);
        }
        c.holds(&format!("{name} ci_sC contains S_C"), ci.ci_s_c[0] <= s_c && s_c <= ci.ci_s_c[1]);
    }
    c.within("runtime", start.elapsed(), Duration::from_secs(5));
}

fn endpoint_table(c: &mut Check) {
    let csv = std::fs::File::open(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/nct01232452_endpoints.csv"))
        .unwrap();
    let records: Vec<EndpointRecord> = rct::read_endpoints_csv(csv).unwrap();
    let want = [
        ("Progression-free survival", 0.520, 0.998),
        ("Objective response (%)", 0.603, 0.969),
        ("Duration of response", 0.602, 0.969),
        ("Time to progressive disease", 0.499, 0.999),
        ("Time to worsening symptoms", 0.205, 0.731),
    ];
    c.holds("six endpoint rows", records.len() == 6);
    for (name, s_t, h2) in want {
        let Some(e) = records.iter().find(|r| r.name == name) else {
            c.holds(&format!("row `{name}` present"), false);
            continue;
        };
        let s = rct::endpoint_sensitivity(e, [0.5, 0.5], DispersionRule::Normal392).unwrap();
        c.near(&format!("{name} S_T"), s.s_t, s_t, 0.010);
        c.near(&format!("{name} H2"), s.h2, h2, 0.010);
    }
    // Direct evaluation with δ² = sd²; the printed 0.489 is not reproduced.
    let (t2, c2) = (23.88f64.powi(2) + 18.9f64.powi(2), 16.04f64.powi(2) + 26.1f64.powi(2));
    let oracle = t2 / (t2 + c2);
    c.near("tumor oracle", oracle, 0.497, 0.005);
    let tumor = records.iter().find(|r| r.name == "Change in tumor size").unwrap();
    let s = rct::endpoint_sensitivity(tumor, [0.5, 0.5], DispersionRule::Normal392).unwrap();
    c.near("Change in tumor size S_T", s.s_t, 0.497, 0.005);
    c.near("Change in tumor size S_T vs oracle", s.s_t, oracle, 1e-12);
}

fn random_kappa(rng: &mut ChaCha8Rng, kind: usize) -> CountingMeasure {
    match kind {
        0 => CountingMeasure::dirac(rng.random_range(1..40)),
        1 => CountingMeasure::binomial(rng.random_range(1..40), rng.random_range(0.05..1.0)).unwrap(),
        2 => CountingMeasure::poisson(rng.random_range(0.1..30.0)).unwrap(),
        3 => {
            let dies = orthogonal_die_pairs(60);
            let (m, n) = dies[rng.random_range(0..dies.len())];
            CountingMeasure::orthogonal_die(m, n).unwrap()
        }
        4 => CountingMeasure::negative_binomial(rng.random_range(0.5..20.0), rng.random_range(0.05..0.95)).unwrap(),
        _ => CountingMeasure::zeta(rng.random_range(3.2..8.0)).unwrap(),
    }
}

/// Oracle moments straight from `c ν(gh) + (δ² − c) νg νh`.
fn oracle_cov(k: &CountingMeasure, w: &[f64], g: &[f64], h: &[f64]) -> f64 {
    let c = k.mean();
    let d = k.variance() - c;
    let cross: f64 = (0..w.len()).map(|i| w[i] * g[i] * h[i]).sum();
    let ng: f64 = (0..w.len()).map(|i| w[i] * g[i]).sum();
    let nh: f64 = (0..w.len()).map(|i| w[i] * h[i]).sum();
    c * cross + d * ng * nh
}

fn anova_suite(c: &mut Check) {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for trial in 0..200 {
        let kind = trial % 6;
        let k = random_kappa(&mut rng, kind);
        let points = rng.random_range(1..=8usize);
        let raw: Vec<f64> = (0..points).map(|_| rng.random_range(0.01..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let w: Vec<f64> = raw.iter().map(|x| x / total).collect();
        let f: Vec<f64> = (0..points).map(|_| rng.random_range(-10.0..10.0)).collect();
        let cells = rng.random_range(1..=6usize.min(points));
        // Every cell gets at least one point.
        let assign: Vec<usize> = (0..points).map(|i| if i < cells { i } else { rng.random_range(0..cells) }).collect();

        let labels: Vec<String> = (0..points).map(|i| format!("p{i}")).collect();
        let nu = DiscreteMeasure::new(labels.iter().cloned().zip(w.iter().copied())).unwrap();
        let fun = MeasurableFn::new(labels.iter().cloned().zip(f.iter().copied()));
        let mut grouped: IndexMap<String, Vec<String>> = IndexMap::new();
        for (i, &a) in assign.iter().enumerate() {
            grouped.entry(format!("D{a}")).or_default().push(labels[i].clone());
        }
        let partition = Partition::new(grouped).unwrap();
        let n = RandomMeasure::new(k, nu);
        let d = sensitivity::anova_decompose(&n, &fun, &partition).unwrap();

        let tag = format!("instance {trial} ({})", k.name());
        let restricted =
            |cell: usize| -> Vec<f64> { (0..points).map(|i| if assign[i] == cell { f[i] } else { 0.0 }).collect() };
        let want_total = oracle_cov(&k, &w, &f, &f);
        c.holds(
            &format!("{tag}: total {} vs oracle {want_total}", d.total_variance),
            (d.total_variance - want_total).abs() <= 1e-9 * want_total.abs(),
        );
        let mut sum = 0.0;
        for a in 0..cells {
            let fa = restricted(a);
            let var = oracle_cov(&k, &w, &fa, &fa);
            sum += var;
            let got = d.cell_variances[&format!("D{a}")];
            c.holds(&format!("{tag}: cell D{a} variance {got} vs {var}"), (got - var).abs() <= 1e-9 * want_total.abs());
            for b in (a + 1)..cells {
                let cov = oracle_cov(&k, &w, &fa, &restricted(b));
                sum += 2.0 * cov;
                let got = d.covariance(&format!("D{a}"), &format!("D{b}")).unwrap();
                if k.is_orthogonal() {
                    c.holds(&format!("{tag}: covariance D{a},D{b} = {got} not zero"), got == 0.0);
                }
                c.holds(
                    &format!("{tag}: covariance D{a},D{b} {got} vs {cov}"),
                    (got - cov).abs() <= 1e-9 * want_total.abs(),
                );
            }
        }
        c.holds(
            &format!("{tag}: identity residual {}", d.identity_residual()),
            d.identity_residual().abs() <= 1e-9 * d.total_variance.abs(),
        );
        c.holds(&format!("{tag}: oracle identity"), (sum - want_total).abs() <= 1e-9 * want_total.abs());
    }
    c.within("runtime", start.elapsed(), Duration::from_secs(5));
}

fn brute_force(c: &mut Check) {
    let w = [0.2, 0.3, 0.5];
    let f = [1.5, -2.0, 4.0];
    let cells: [&[usize]; 2] = [&[0], &[1, 2]];
    let k = CountingMeasure::binomial(3, 0.5).unwrap();

    // E[X_a X_b] where X_D = Σ_stones f(x) 1_D(x), over every (K, assignment).
    let mut first = [0.0f64; 2];
    let mut second = [[0.0f64; 2]; 2];
    for stones in 0..=3u32 {
        let pk = [1.0, 3.0, 3.0, 1.0][stones as usize] / 8.0;
        for code in 0..3usize.pow(stones) {
            let mut x = [0.0; 2];
            let mut prob = pk;
            let mut rest = code;
            for _ in 0..stones {
                let point = rest % 3;
                rest /= 3;
                prob *= w[point];
                let cell = cells.iter().position(|m| m.contains(&point)).unwrap();
                x[cell] += f[point];
            }
            for a in 0..2 {
                first[a] += prob * x[a];
                for b in 0..2 {
                    second[a][b] += prob * x[a] * x[b];
                }
            }
        }
    }
    let cov = |a: usize, b: usize| second[a][b] - first[a] * first[b];
    let total = cov(0, 0) + cov(1, 1) + 2.0 * cov(0, 1);

    let nu = DiscreteMeasure::new([("a", w[0]), ("b", w[1]), ("c", w[2])]).unwrap();
    let fun = MeasurableFn::new([("a", f[0]), ("b", f[1]), ("c", f[2])]);
    let partition = Partition::new([("A", vec!["a"]), ("BC", vec!["b", "c"])]).unwrap();
    let n = RandomMeasure::new(k, nu);
    let d = sensitivity::anova_decompose(&n, &fun, &partition).unwrap();
    c.near("Var Nf", d.total_variance, total, 1e-12);
    c.near("Var A", d.cell_variances["A"], cov(0, 0), 1e-12);
    c.near("Var BC", d.cell_variances["BC"], cov(1, 1), 1e-12);
    c.near("Cov A,BC", d.covariance("A", "BC").unwrap(), cov(0, 1), 1e-12);
    c.near("E Nf", n.mean_of(&fun).unwrap(), first[0] + first[1], 1e-12);
    c.near("Var Nf direct", n.variance_of(&fun).unwrap(), total, 1e-12);
}

fn monte_carlo(c: &mut Check) {
    let start = Instant::now();
    let nu = DiscreteMeasure::new([("a", 0.2), ("b", 0.3), ("c", 0.5)]).unwrap();
    let f = MeasurableFn::new([("a", 1.0), ("b", -0.5), ("c", 2.0)]);
    let kinds = [
        CountingMeasure::dirac(6),
        CountingMeasure::binomial(10, 0.4).unwrap(),
        CountingMeasure::poisson(5.0).unwrap(),
        CountingMeasure::orthogonal_die(1, 7).unwrap(),
        CountingMeasure::negative_binomial(3.0, 0.4).unwrap(),
        // E K⁴ must be finite for a variance standard error.
        CountingMeasure::zeta(6.5).unwrap(),
    ];
    for (seed, k) in kinds.into_iter().enumerate() {
        let n = RandomMeasure::new(k, nu.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed as u64);
        let mc = n.mc_moments(None, Integrand::Point(&f), None, 100_000, &mut rng).unwrap();
        let mean = n.mean_of(&f).unwrap();
        let var = n.variance_of(&f).unwrap();
        let zm = (mc.mean - mean) / mc.mean_se;
        let zv = (mc.variance - var) / mc.variance_se;
        c.holds(&format!("{} mean {} vs {mean} (z = {zm:.2})", k.name(), mc.mean), zm.abs() < 5.0);
        c.holds(&format!("{} variance {} vs {var} (z = {zv:.2})", k.name(), mc.variance), zv.abs() < 5.0);
    }
    c.within("runtime", start.elapsed(), Duration::from_secs(30));
}

fn defectiveness(c: &mut Check) {
    let nu = DiscreteMeasure::new([("a", 0.25), ("b", 0.25), ("c", 0.5)]).unwrap();
    let f = MeasurableFn::new([("a", 1.0), ("b", 3.0), ("c", 2.0)]);
    let partition = Partition::singletons(nu.labels()).unwrap();
    let w = [0.25, 0.25, 0.5];
    let fv = [1.0, 3.0, 2.0];
    let nf: f64 = (0..3).map(|i| w[i] * fv[i]).sum();
    let var_f: f64 = (0..3).map(|i| w[i] * fv[i] * fv[i]).sum::<f64>() - nf * nf;

    for k in [CountingMeasure::dirac(10), CountingMeasure::binomial(10, 0.3).unwrap()] {
        let d = sensitivity::anova_decompose(&RandomMeasure::new(k, nu.clone()), &f, &partition).unwrap();
        let r = sensitivity::sensitivity_indices(&d).unwrap();
        c.holds(&format!("{}: S_a_total = {} > 1", k.name(), r.s_a_total), r.s_a_total > 1.0);
        c.holds(&format!("{}: S_b_total = {} < 0", k.name(), r.s_b_total), r.s_b_total < 0.0);
        c.near(&format!("{} index sum", k.name()), r.index_sum(), 1.0, 1e-12);
        c.holds(&format!("{}: flagged defective", k.name()), r.is_defective());
        if k.name() == "dirac" {
            // Closed forms for a fixed number of stones.
            let want_a: f64 = (0..3).map(|i| w[i] * fv[i] * fv[i] - (w[i] * fv[i]).powi(2)).sum::<f64>() / var_f;
            let want_b: f64 = -(0..3)
                .flat_map(|i| (0..3).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| w[i] * fv[i] * w[j] * fv[j])
                .sum::<f64>()
                / var_f;
            c.near("dirac S_a closed form", r.s_a_total, want_a, 1e-12);
            c.near("dirac S_b closed form", r.s_b_total, want_b, 1e-12);
        }
    }
    let d =
        sensitivity::anova_decompose(&RandomMeasure::new(CountingMeasure::poisson(4.0).unwrap(), nu), &f, &partition)
            .unwrap();
    let r = sensitivity::sensitivity_indices(&d).unwrap();
    c.near("poisson S_a_total", r.s_a_total, 1.0, 1e-12);
    c.holds(&format!("poisson S_b_total = {} is zero", r.s_b_total), r.s_b_total == 0.0);
    c.holds("poisson not defective", !r.is_defective());
}

fn dominance(c: &mut Check) {
    for i in 0..=1000 {
        let p = i as f64 / 1000.0;
        let unc = rct::risk_uncertainty(p).unwrap();
        let h2 = binary_entropy(p);
        c.holds(&format!("H2({p}) = {h2} < Unc = {unc}"), h2 >= unc);
        let equal = (h2 - unc).abs() < 1e-15;
        let expected_equal = i == 0 || i == 500 || i == 1000;
        c.holds(&format!("equality at p = {p} is {equal}"), equal == expected_equal);
    }
    let rows = rct::uncertainty_curve(0.001).unwrap();
    c.holds("curve has 1001 rows", rows.len() == 1001);
    c.holds("curve rows dominate", rows.iter().all(|r| r.h2 >= r.unc));
}

fn determinism(c: &mut Check) {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data");
    let moderna = data.join("moderna.json");
    let pfizer = data.join("pfizer.json");
    let runs: [Vec<&str>; 4] = [
        vec!["vaccine", moderna.to_str().unwrap(), "--seed", "42"],
        vec!["vaccine", pfizer.to_str().unwrap(), "--seed", "7", "--reps", "5000", "--format", "csv"],
        vec!["dist", r#"{"kind":"negative_binomial","r":2.5,"p":0.3}"#, "--sample", "20000", "--seed", "3"],
        vec!["dist", r#"{"kind":"zeta","s":4.0}"#, "--sample", "20000", "--seed", "3"],
    ];
    for args in runs {
        let out = || Command::new(env!("CARGO_BIN_EXE_stonethrow")).args(&args).output().unwrap();
        let (a, b) = (out(), out());
        c.holds(&format!("{args:?} succeeded"), a.status.success() && b.status.success());
        c.holds(&format!("{args:?} byte-identical"), a.stdout == b.stdout && !a.stdout.is_empty());
    }
}

fn main() {
    let results = [
        criterion(1, "Moderna reproduction", moderna),
        criterion(2, "Pfizer reproduction", pfizer),
        criterion(3, "sensitivity and entropy intervals", intervals),
        criterion(4, "endpoint table, normal392 rule", endpoint_table),
        criterion(5, "ANOVA identity on 200 random instances", anova_suite),
        criterion(6, "brute-force enumeration, Binomial(3, 0.5)", brute_force),
        criterion(7, "Monte Carlo consistency, every kind", monte_carlo),
        criterion(8, "index defectiveness", defectiveness),
        criterion(9, "entropy dominates uncertainty", dominance),
        criterion(10, "byte-identical stochastic output", determinism),
    ];
    let failed = results.iter().filter(|&&ok| !ok).count();
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
