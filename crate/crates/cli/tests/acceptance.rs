//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

use std::f64::consts::PI;
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use sphunif::circular::{kuiper, watson};
use sphunif::highdim::{coherence_statistic, rayleigh_standardized, CoherenceRoles, RegimeSpec};
use sphunif::mc::{level_power_study, PValueProcedure, StudyCell};
use sphunif::nulldist::{chisq_pvalue, extreme_value_cdf, normal_cdf};
use sphunif::projection::projected_null_cdf;
use sphunif::rng::substream;
use sphunif::samplers::{uniform_with, AlternativeSpec};
use sphunif::sobolev::{
    bingham, jupp_data_driven, rothman_exact, sobolev_statistic, SobolevWeights,
};
use sphunif::{OrderedCircular, PValueRequest, PreparedTest, Sample, TestId, TestOptions};

struct Report {
    lines: Vec<(usize, bool, String)>,
    clock: Instant,
}

impl Report {
    fn record(&mut self, id: usize, name: &str, pass: bool, detail: String) {
        let verdict = if pass { "PASS" } else { "FAIL" };
        let secs = self.clock.elapsed().as_secs_f64();
        self.clock = Instant::now();
        println!("criterion {id:>2} [{verdict}] {name}: {detail} ({secs:.1} s)");
        self.lines.push((id, pass, name.to_string()));
    }
}

fn uniform(n: usize, p: usize, seed: u64, r: u64) -> Sample {
    uniform_with(n, p, &mut substream(seed, r))
}

fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

fn ks_one_sample(draws: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut x = draws.to_vec();
    x.sort_by(f64::total_cmp);
    let m = x.len() as f64;
    x.iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = cdf(v);
            (f - i as f64 / m).abs().max((f - (i + 1) as f64 / m).abs())
        })
        .fold(0.0, f64::max)
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let m = x.iter().sum::<f64>() / x.len() as f64;
    let v = x.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / (x.len() - 1) as f64;
    (m, v)
}

fn test_options(pvalue: PValueRequest) -> TestOptions {
    TestOptions {
        pvalue,
        ..TestOptions::default()
    }
}

fn level_cells(tests: &[TestId], opts: &TestOptions, n: usize, p: usize) -> Vec<StudyCell> {
    tests
        .iter()
        .map(|t| StudyCell {
            test: t.to_string(),
            procedure: Arc::new(PreparedTest::new(t.clone(), opts, n, p).expect("test prepares")),
            alternative: AlternativeSpec::Uniform,
            n,
            p,
            alpha: 0.05,
        })
        .collect()
}

fn watson_weights_file(dir: &Path) -> TestId {
    let path = dir.join("watson-weights.txt");
    let text: String = (1..=200).map(|k| format!("{}\n", 1.0 / (2.0 * PI * k as f64))).collect();
    std::fs::write(&path, text).unwrap();
    format!("sobolev:{}", path.display()).parse().unwrap()
}

fn level_suite(report: &mut Report, dir: &Path) {
    let (n, m) = (100, 2000);
    let mut failures = Vec::new();
    let mut worst = (String::new(), 0.05f64);
    for p in [2, 3] {
        let mut tests = TestId::all(p, false);
        tests.push(watson_weights_file(dir));
        let opts = TestOptions::default();
        let rows = level_power_study(&level_cells(&tests, &opts, n, p), m, 11, None).unwrap();
        for row in rows {
            if (row.rate - 0.05).abs() > (worst.1 - 0.05).abs() {
                worst = (format!("{} p={p}", row.test), row.rate);
            }
            if !(0.03..=0.07).contains(&row.rate) {
                failures.push(format!("{} p={p} rate {:.4}", row.test, row.rate));
            }
        }
    }
    let detail = if failures.is_empty() {
        format!("all rates in [0.03, 0.07]; farthest from 0.05: {} at {:.4}", worst.0, worst.1)
    } else {
        format!("outside [0.03, 0.07]: {}", failures.join("; "))
    };
    report.record(1, "level suite", failures.is_empty(), detail);
}

fn sobolev_identities(report: &mut Report) {
    let mut worst_a = 0.0f64;
    for p in [2, 3, 5] {
        for r in 0..50 {
            let s = uniform(20 + r as usize, p, 21, r + 100 * p as u64);
            let via_sum = sobolev_statistic(&s, &SobolevWeights::new(vec![1.0]).unwrap());
            let mean = s.mean();
            let direct = (s.n() * p) as f64 * mean.iter().map(|x| x * x).sum::<f64>();
            worst_a = worst_a.max((via_sum - direct).abs());
        }
    }
    let weights = SobolevWeights::new((1..=20_000).map(|k| 1.0 / (PI * k as f64)).collect()).unwrap();
    let mut worst_b = 0.0f64;
    let mut ratio = 0.0;
    for r in 0..20 {
        let s = uniform(30, 2, 22, r);
        let u2 = watson(&OrderedCircular::new(&s).unwrap()).value;
        let sob = sobolev_statistic(&s, &weights);
        worst_b = worst_b.max((sob - u2).abs());
        ratio += sob / u2 / 20.0;
    }
    let mut worst_c = 0.0f64;
    for p in [2, 3, 5] {
        for r in 0..20 {
            let s = uniform(25, p, 23, r + 100 * p as u64);
            let via_sum = sobolev_statistic(&s, &SobolevWeights::new(vec![0.0, 1.0]).unwrap());
            worst_c = worst_c.max((via_sum - bingham(&s)).abs());
        }
    }
    let pass = worst_a <= 1e-10 && worst_b <= 1e-4 && worst_c <= 1e-8;
    report.record(
        2,
        "Sobolev specialisations",
        pass,
        format!(
            "(a) max |S - np|mean|^2| = {worst_a:.2e} (tol 1e-10); (b) v_k = 1/(pi k), K = 20000: max |S - U^2| = {worst_b:.3e} (tol 1e-4), mean S/U^2 = {ratio:.6}; (c) max |S - Bingham| = {worst_c:.2e} (tol 1e-8)"
        ),
    );
}

fn watson_kuiper(report: &mut Report) {
    let (n, m) = (500, 2000u64);
    let pairs: Vec<(f64, f64)> = (0..m)
        .into_par_iter()
        .map(|r| {
            let ord = OrderedCircular::new(&uniform(n, 2, 31, r)).unwrap();
            let v = kuiper(&ord).value / PI;
            (watson(&ord).value, v * v)
        })
        .collect();
    let u2: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let v2: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let d = ks_two_sample(&u2, &v2);
    let (mu, _) = mean_var(&u2);
    let (mv, _) = mean_var(&v2);
    report.record(
        3,
        "Watson U^2 vs (V/pi)^2",
        d < 0.05,
        format!("two-sample KS {d:.4} (tol 0.05); means {mu:.4} vs {mv:.4}"),
    );
}

fn rothman_integral(report: &mut Report) {
    let nodes = 2001;
    let h = 1.0 / (nodes - 1) as f64;
    let mut worst = 0.0f64;
    let mut ratio = 0.0;
    for r in 0..10 {
        let s = uniform(25 + 5 * r as usize, 2, 41, r);
        let a = |t: f64| if t <= 0.0 || t >= 1.0 { 0.0 } else { rothman_exact(&s, t).unwrap() };
        let mut integral = 0.0;
        for i in 0..nodes {
            let w = if i == 0 || i == nodes - 1 {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            integral += w * a(i as f64 * h);
        }
        integral *= h / 3.0;
        let u2 = watson(&OrderedCircular::new(&s).unwrap()).value;
        worst = worst.max((integral - u2).abs());
        ratio += integral / u2 / 10.0;
    }
    report.record(
        4,
        "Rothman integral identity",
        worst <= 1e-3,
        format!("max |int A_n(t) dt - U^2| = {worst:.4e} (tol 1e-3); mean ratio {ratio:.6}"),
    );
}

fn analytic_vs_mc(report: &mut Report) {
    let m = 100_000u64;
    let cases: Vec<(TestId, usize, usize, PValueRequest)> = vec![
        (TestId::Kuiper, 100, 2, PValueRequest::Asymptotic),
        (TestId::Watson, 500, 2, PValueRequest::Asymptotic),
        (TestId::Ajne, 500, 2, PValueRequest::Asymptotic),
        (TestId::HodgesAjne, 500, 2, PValueRequest::Asymptotic),
        (TestId::Range, 10, 2, PValueRequest::Exact),
        (TestId::Greenwood, 500, 2, PValueRequest::Asymptotic),
        (TestId::Rayleigh, 500, 3, PValueRequest::Asymptotic),
        (TestId::Jupp, 500, 3, PValueRequest::Asymptotic),
    ];
    let mut all_pass = true;
    let mut parts = Vec::new();
    for (i, (test, n, p, request)) in cases.into_iter().enumerate() {
        let prepared = PreparedTest::new(test.clone(), &test_options(request), n, p).unwrap();
        let pvalues: Vec<f64> = (0..m)
            .into_par_iter()
            .map(|r| prepared.pvalue(&uniform(n, p, 50 + i as u64, r)).unwrap())
            .collect();
        let mut ok = true;
        let mut rates = Vec::new();
        for alpha in [0.01, 0.05, 0.10] {
            let rate = pvalues.iter().filter(|&&q| q <= alpha).count() as f64 / m as f64;
            let band = 3.0 * (alpha * (1.0 - alpha) / m as f64).sqrt();
            ok &= (rate - alpha).abs() <= band;
            rates.push(format!("{rate:.4}"));
        }
        all_pass &= ok;
        parts.push(format!("{test}(n={n}) {} {}", rates.join("/"), if ok { "ok" } else { "out" }));
    }
    report.record(
        5,
        "analytic laws vs Monte Carlo",
        all_pass,
        format!("rates at 1%/5%/10%: {}", parts.join("; ")),
    );
}

fn highdim_rayleigh(report: &mut Report) {
    let (n, p, m) = (100, 200, 2000u64);
    let draws: Vec<f64> = (0..m)
        .into_par_iter()
        .map(|r| rayleigh_standardized(&uniform(n, p, 61, r)))
        .collect();
    let (mean, var) = mean_var(&draws);
    let d = ks_one_sample(&draws, normal_cdf);
    let pass = (-0.1..=0.1).contains(&mean) && (0.85..=1.15).contains(&var) && d < 0.06;
    report.record(
        6,
        "high-dimensional Rayleigh normality",
        pass,
        format!("mean {mean:.4}, variance {var:.4}, KS {d:.4}"),
    );
}

fn power_orderings(report: &mut Report) {
    let (n, p) = (100, 3);
    let opts = TestOptions::default();
    let tests = [TestId::Rayleigh, TestId::Bingham, TestId::GineF];
    let alternatives = [
        AlternativeSpec::Vmf { mu: None, kappa: 1.0 },
        AlternativeSpec::Axial { mu: None, kappa: 5.0 },
    ];
    let mut cells = Vec::new();
    for t in &tests {
        let prepared = Arc::new(PreparedTest::new(t.clone(), &opts, n, p).unwrap());
        for alt in &alternatives {
            cells.push(StudyCell {
                test: t.to_string(),
                procedure: prepared.clone(),
                alternative: alt.clone(),
                n,
                p,
                alpha: 0.05,
            });
        }
    }
    let rows = level_power_study(&cells, 1000, 71, None).unwrap();
    let rate = |test: &str, alt: &str| {
        rows.iter()
            .find(|r| r.test == test && r.alternative == alt)
            .map(|r| r.rate)
            .unwrap()
    };
    let checks = [
        ("rayleigh/vmf > 0.5", rate("rayleigh", "vmf") > 0.5, rate("rayleigh", "vmf")),
        ("bingham/vmf in [0.03, 0.08]", (0.03..=0.08).contains(&rate("bingham", "vmf")), rate("bingham", "vmf")),
        ("bingham/axial > 0.9", rate("bingham", "axial") > 0.9, rate("bingham", "axial")),
        ("rayleigh/axial in [0.03, 0.08]", (0.03..=0.08).contains(&rate("rayleigh", "axial")), rate("rayleigh", "axial")),
        ("gine-f/vmf > 0.2", rate("gine-f", "vmf") > 0.2, rate("gine-f", "vmf")),
        ("gine-f/axial > 0.2", rate("gine-f", "axial") > 0.2, rate("gine-f", "axial")),
    ];
    let pass = checks.iter().all(|c| c.1);
    let detail = checks
        .iter()
        .map(|(name, ok, r)| format!("{name}: {r:.3}{}", if *ok { "" } else { " (miss)" }))
        .collect::<Vec<_>>()
        .join("; ");
    report.record(7, "power orderings", pass, detail);
}

fn jupp_selector(report: &mut Report) {
    let (n, p, m) = (200, 3, 500u64);
    let picks: Vec<(usize, f64)> = (0..m)
        .into_par_iter()
        .map(|r| {
            let sel = jupp_data_driven(&uniform(n, p, 81, r), 25).unwrap();
            (sel.order, chisq_pvalue(sel.statistic, p as f64))
        })
        .collect();
    let ones = picks.iter().filter(|x| x.0 == 1).count() as f64 / m as f64;
    let level = picks.iter().filter(|x| x.1 <= 0.05).count() as f64 / m as f64;
    report.record(
        8,
        "Jupp selector",
        ones > 0.9 && (0.02..=0.09).contains(&level),
        format!("fraction choosing order 1: {ones:.3} (> 0.9); level at 0.05: {level:.3} (in [0.02, 0.09])"),
    );
}

fn projection(report: &mut Report) {
    let mut parts = Vec::new();
    let mut pass = true;
    for p in [2, 3] {
        for k in [1, 25] {
            let opts = TestOptions {
                projections: Some(k),
                ..TestOptions::default()
            };
            let rows = level_power_study(&level_cells(&[TestId::Projection], &opts, 100, p), 2000, 91, None).unwrap();
            let rate = rows[0].rate;
            pass &= (0.03..=0.07).contains(&rate);
            parts.push(format!("p={p} k={k} level {rate:.4}"));
        }
    }
    for p in [4usize, 6] {
        let draws = 1_000_000u64;
        let chunks = 100u64;
        let mut coords: Vec<f64> = (0..chunks)
            .into_par_iter()
            .flat_map_iter(|c| {
                let s = uniform((draws / chunks) as usize, p, 92 + p as u64, c);
                s.points().map(|u| u[0]).collect::<Vec<_>>()
            })
            .collect();
        coords.sort_by(f64::total_cmp);
        let mut gap = 0.0f64;
        for i in -19..=19 {
            let x = i as f64 * 0.05;
            let emp = coords.partition_point(|&c| c <= x) as f64 / draws as f64;
            gap = gap.max((projected_null_cdf(x, p).unwrap() - emp).abs());
        }
        pass &= gap <= 2e-3;
        parts.push(format!("p={p} F_0 gap {gap:.2e}"));
    }
    report.record(9, "projection test", pass, parts.join("; "));
}

fn coherence_regimes(report: &mut Report) {
    let (n, p, m) = (200, 50, 2000u64);
    let stats: Vec<f64> = (0..m)
        .into_par_iter()
        .map(|r| {
            coherence_statistic(&uniform(n, p, 101, r), RegimeSpec::SubExponential, CoherenceRoles::default())
                .unwrap()
                .statistic
                .unwrap()
        })
        .collect();
    let d = ks_one_sample(&stats, |z| extreme_value_cdf(z, RegimeSpec::SubExponential));
    let f1: Vec<f64> = stats.iter().map(|&z| extreme_value_cdf(z, RegimeSpec::SubExponential)).collect();
    let (mean, _) = mean_var(&f1);
    let f2 = RegimeSpec::exponential(1e-4).unwrap();
    let gap = (0..=2000)
        .map(|i| -10.0 + i as f64 * 0.01)
        .map(|z| (extreme_value_cdf(z, f2) - extreme_value_cdf(z, RegimeSpec::SubExponential)).abs())
        .fold(0.0, f64::max);
    let pass = d < 0.1 && (mean - 0.5).abs() <= 0.03 && gap < 5e-3;
    report.record(
        10,
        "coherence regimes",
        pass,
        format!("KS to F_1 {d:.4} (tol 0.1); mean F_1(C) {mean:.4} (0.5 +- 0.03); F_2 -> F_1 gap {gap:.2e} (tol 5e-3)"),
    );
}

fn cli_determinism(report: &mut Report, dir: &Path) {
    let bin = env!("CARGO_BIN_EXE_sphunif");
    let run = |args: &[&str]| {
        let out = Command::new(bin).args(args).output().expect("binary runs");
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        out.stdout
    };
    let circle = dir.join("circle.csv");
    let sphere = dir.join("sphere.csv");
    run(&["sample", "--family", "vmf", "--n", "60", "--p", "2", "--kappa", "0.5", "--seed", "3", "--out", circle.to_str().unwrap()]);
    run(&["sample", "--family", "uniform", "--n", "60", "--p", "3", "--seed", "4", "--out", sphere.to_str().unwrap()]);
    let base: Vec<Vec<String>> = vec![
        vec!["test", "--input", circle.to_str().unwrap(), "--test", "all", "--pvalue", "mc", "--mc-replicates", "999", "--seed", "7"],
        vec!["test", "--input", sphere.to_str().unwrap(), "--test", "all", "--highdim", "--seed", "7"],
        vec!["power", "--test", "rayleigh,gine-f,projection", "--alternative", "uniform,vmf:1", "--n", "50", "--p", "3", "--replicates", "200", "--seed", "5"],
        vec!["sample", "--family", "axial", "--n", "50", "--p", "4", "--kappa", "2", "--seed", "9"],
        vec!["null", "--law", "chisq-mixture", "--weights", dir.join("watson-weights.txt").to_str().unwrap(), "--p", "2", "--from", "0", "--to", "1", "--step", "0.05"],
    ]
    .into_iter()
    .map(|v| v.into_iter().map(String::from).collect())
    .collect();
    let mut mismatches = Vec::new();
    for args in &base {
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        let reference = run(&args);
        if run(&args) != reference {
            mismatches.push(format!("{} (repeat)", args[0]));
        }
        for workers in ["1", "2", "8"] {
            let mut with = args.clone();
            if args[0] != "sample" && args[0] != "null" {
                with.extend(["--workers", workers]);
            }
            if run(&with) != reference {
                mismatches.push(format!("{} (workers={workers})", args[0]));
            }
        }
    }
    report.record(
        11,
        "CLI determinism",
        mismatches.is_empty(),
        if mismatches.is_empty() {
            format!("{} invocations byte-identical across repeats and 1/2/8 workers", base.len())
        } else {
            format!("differences: {}", mismatches.join(", "))
        },
    );
}

fn main() {
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let mut report = Report { lines: Vec::new(), clock: Instant::now() };
    let start = Instant::now();
    level_suite(&mut report, dir.path());
    sobolev_identities(&mut report);
    watson_kuiper(&mut report);
    rothman_integral(&mut report);
    analytic_vs_mc(&mut report);
    highdim_rayleigh(&mut report);
    power_orderings(&mut report);
    jupp_selector(&mut report);
    projection(&mut report);
    coherence_regimes(&mut report);
    cli_determinism(&mut report, dir.path());
    let failed: Vec<_> = report.lines.iter().filter(|l| !l.1).map(|l| l.0.to_string()).collect();
    println!(
        "acceptance: {} passed, {} failed{} ({:.1} s)",
        report.lines.len() - failed.len(),
        failed.len(),
        if failed.is_empty() { String::new() } else { format!(" [{}]", failed.join(", ")) },
        start.elapsed().as_secs_f64()
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
