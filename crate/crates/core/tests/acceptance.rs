//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Runs the shipped reference configs into temporary directories.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use heavysaa::concentration::{lower_tail_probability_bound, BoundFamily};
use heavysaa::entropy::{a1_functional, a1_line, packing_entropy, variance_proxies, EntropyMethod};
use heavysaa::harness::{run_experiment, ExperimentConfig, RunOutcome, Trials};
use heavysaa::problem::descriptor::InstanceDescriptor;
use heavysaa::problem::random::{random_instance, RandomSpec};
use heavysaa::problem::ScenarioSet;
use heavysaa::rng::SeedLineage;
use heavysaa::sets::{localized_set_spec, SetLabel, SetSpec};
use heavysaa::solver::{brute_force_min, linear_min_weighted_l1, project_weighted_l1, solve_saa, weighted_l1};
use rand::Rng;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../cli/configs")
}

fn run_shipped(name: &str, out: &Path, workers: Option<usize>) -> RunOutcome {
    let mut cfg = ExperimentConfig::load(&configs().join(format!("{name}.json"))).expect("shipped config");
    cfg.output = out.join(name);
    if let Some(w) = workers {
        cfg.workers = w;
    }
    run_experiment(&cfg).expect("run")
}

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn soundness(out: &Path) -> Verdict {
    let start = Instant::now();
    let run = run_shipped("soundness", out, None);
    let secs = start.elapsed().as_secs_f64();
    let Trials::Soundness(rows) = &run.trials else { unreachable!() };
    let instances = rows.iter().map(|r| r.instance).max().map_or(0, |m| m + 1);
    let held = rows.iter().filter(|r| r.premises_hold).count();
    let counter = rows.iter().filter(|r| r.counterexample).count();
    let errors = rows.iter().filter(|r| r.status == "error").count();
    verdict(
        instances >= 1000 && counter == 0 && errors == 0 && secs < 600.0,
        format!("{instances} instances, {} checks, {held} with premises holding, {counter} counterexamples, {errors} errors, {secs:.0}s", rows.len()),
    )
}

fn coverage(out: &Path) -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for name in ["fixed-set", "exterior-mr", "interior-scq", "interior-solution"] {
        let run = run_shipped(name, out, None);
        for r in &run.summary {
            ok &= r.pass && r.trials == 500 && r.level == 0.1;
            let fail_lo = 1.0 - r.wilson_hi;
            parts.push(format!("{name}@N={}: {}/{} held, event {}/{}, failure lower bound {fail_lo:.4}", r.n, r.held, r.trials, r.premise_held, r.trials));
        }
    }
    verdict(ok, parts.join("; "))
}

fn concentration(out: &Path) -> Verdict {
    let run = run_shipped("concentration", out, None);
    let Trials::Concentration(rows) = &run.trials else { unreachable!() };
    let bad = rows.iter().filter(|r| !r.passes).count();
    let families = [BoundFamily::Panchenko, BoundFamily::SelfNormalized, BoundFamily::UniformDeviation, BoundFamily::LowerTail];
    let all_families = families.iter().all(|f| rows.iter().any(|r| r.family == *f));
    // At a = 2 the bound is exp(−N ε²(EZ)²/(2EZ²)).
    let mut worst = 0.0f64;
    for &(m, m2, eps, n) in &[(1.0, 1.5, 0.1, 50usize), (2.0, 5.0, 0.3, 10), (0.7, 0.5, 0.05, 400), (3.0, 9.0, 0.2, 1)] {
        let got = lower_tail_probability_bound(m, m2, 2.0, eps, n).unwrap();
        let want = (-(n as f64) * eps * eps * m * m / (2.0 * m2)).exp();
        worst = worst.max((got - want).abs());
    }
    verdict(
        bad == 0 && all_families && worst <= 1e-12,
        format!("{} cells, {bad} violating; a=2 closed form max error {worst:.1e}", rows.len()),
    )
}

fn localization() -> Verdict {
    let inst = InstanceDescriptor::load(&configs().join("instances/quadratic_ball.json")).unwrap().build().unwrap();
    let o = &inst.oracle;
    let sample = Arc::new(ScenarioSet::generate(&inst.program.law, 1000, SeedLineage::new(4, 0)).unwrap());
    let sigma = |set: &SetSpec, gamma: f64| {
        variance_proxies(&inst.program, &sample, o, &o.xstar, &o.xstar, std::slice::from_ref(set), gamma, EntropyMethod::ExactGreedy)
            .unwrap()
            .sigma_hat_0
    };
    let y = &o.hard_set;
    let full = sigma(&SetSpec::ball(y.center.clone(), y.circumradius()), 0.0);
    let d = y.diameter();
    let mut ok = true;
    let mut parts = Vec::new();
    for eps in [0.05 * d, 0.05, 0.02, 0.01] {
        let local = sigma(&localized_set_spec(o, SetLabel::LevelObjective, 2.0 * eps).unwrap(), 2.0 * eps);
        let ratio = local / full;
        ok &= ratio <= 0.2;
        parts.push(format!("eps={eps}: ratio {ratio:.3}"));
    }
    verdict(ok, format!("full-set sigma {full:.2}; {}", parts.join(", ")))
}

fn entropy() -> Verdict {
    let mut rng = SeedLineage::new(5, 0).rng();
    let random_set = |rng: &mut rand_chacha::ChaCha8Rng| -> SetSpec {
        let d = rng.random_range(1..=2);
        let c: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let r = rng.random_range(0.05..2.0);
        if rng.random_bool(0.5) {
            SetSpec::ball(c, r)
        } else {
            let lo: Vec<f64> = c.iter().map(|v| v - r / (d as f64).sqrt()).collect();
            let hi: Vec<f64> = c.iter().map(|v| v + r / (d as f64).sqrt()).collect();
            SetSpec::boxed(lo, hi)
        }
    };
    let mut order_fail = 0;
    for _ in 0..50 {
        let s = random_set(&mut rng);
        let theta = s.diameter() * rng.random_range(0.02..1.2);
        let exact = packing_entropy(&s, theta, EntropyMethod::ExactGreedy).unwrap();
        let vol = packing_entropy(&s, theta, EntropyMethod::VolumetricBound).unwrap();
        order_fail += usize::from(exact > vol + 1e-12);
    }
    let mut trunc_fail = 0;
    let mut equiv = 0.0f64;
    for _ in 0..20 {
        let s = random_set(&mut rng);
        let coarse = a1_functional(&s, EntropyMethod::VolumetricBound, 1e-3).unwrap();
        let fine = a1_functional(&s, EntropyMethod::VolumetricBound, 1e-9).unwrap();
        trunc_fail += usize::from((fine.value - coarse.value).abs() > coarse.tail_bound);
        let c = rng.random_range(0.1..10.0);
        let scaled = a1_functional(&s.scaled(c), EntropyMethod::VolumetricBound, 1e-6).unwrap().value;
        let base = a1_functional(&s, EntropyMethod::VolumetricBound, 1e-6).unwrap().value;
        equiv = equiv.max((scaled - c * base).abs() / (c * base));
        if s.dim == 1 {
            let l = a1_line(&s, 1e-6).unwrap().value;
            let ls = a1_line(&s.scaled(c), 1e-6).unwrap().value;
            equiv = equiv.max((ls - c * l).abs() / (c * l));
        }
    }
    verdict(
        order_fail == 0 && trunc_fail == 0 && equiv <= 1e-12,
        format!("ordering failures {order_fail}/50, truncation failures {trunc_fail}/20, scale equivariance error {equiv:.1e}"),
    )
}

fn lasso(out: &Path) -> Verdict {
    let run = run_shipped("lasso", out, None);
    let slope = run.manifest.derived.get("excess_risk_loglog_slope").copied().unwrap_or(f64::NAN);
    let rows_ok = run.summary.iter().all(|r| r.pass && r.trials >= 400);
    let parts: Vec<String> = run
        .summary
        .iter()
        .map(|r| format!("N={}: infeasible {}/{}, lemma violations {}, median excess risk {:.4}", r.n, r.trials - r.errors - r.held, r.trials - r.errors, r.violations, r.median_metric))
        .collect();
    verdict(rows_ok && (-1.1..=-0.35).contains(&slope), format!("{}; slope {slope:.3}", parts.join("; ")))
}

fn solver() -> Verdict {
    let mut saa_fail = 0;
    let mut fixtures = 0;
    for k in 0..60 {
        let inst = random_instance(SeedLineage::new(7, k), RandomSpec::default()).unwrap();
        let sample = Arc::new(ScenarioSet::generate(&inst.program.law, 20, SeedLineage::new(8, k)).unwrap());
        let emp = inst.program.empirical(&sample);
        let y = &emp.hard_set;
        let (lo, hi) = y.bounding_box();
        let mesh = (hi[0] - lo[0]) / if y.dim() == 1 { 20_000.0 } else { 400.0 };
        let f = |x: &[f64]| emp.objective(x);
        let feasible = |x: &[f64]| y.contains_strict(x) && emp.residual(x) == 0.0;
        let Ok(brute) = brute_force_min(&f, &feasible, &lo, &hi, mesh, emp.lipschitz(0)) else { continue };
        fixtures += 1;
        let tol = 1e-6;
        let r = solve_saa(&emp, tol, 1e-9, 50_000).unwrap();
        let ok = r.residual <= 1e-9 && r.objective <= brute.value + tol && r.objective >= brute.value - brute.error_bound;
        saa_fail += usize::from(!ok);
    }
    let mut rng = SeedLineage::new(9, 0).rng();
    let (mut proj_fail, mut lmo_fail) = (0, 0);
    for _ in 0..10_000 {
        let d = rng.random_range(1..=8);
        let v: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
        let w: Vec<f64> = (0..d).map(|_| rng.random_range(0.2..3.0)).collect();
        let r = rng.random_range(0.05..3.0);
        let p = project_weighted_l1(&v, &w, r);
        proj_fail += usize::from(!projection_kkt(&v, &w, r, &p));
        let x = linear_min_weighted_l1(&v, &w, r);
        let got: f64 = x.iter().zip(&v).map(|(a, b)| a * b).sum();
        let best = (0..d).flat_map(|k| [v[k] * r / w[k], -v[k] * r / w[k]]).fold(0.0f64, f64::min);
        lmo_fail += usize::from((got - best).abs() > 1e-12 * (1.0 + best.abs()) || weighted_l1(&x, &w) > r * (1.0 + 1e-12));
    }
    verdict(
        saa_fail == 0 && fixtures >= 50 && proj_fail == 0 && lmo_fail == 0,
        format!("solve_saa vs brute force: {saa_fail}/{fixtures} failures; projection KKT {proj_fail}/10000; LMO enumeration {lmo_fail}/10000"),
    )
}

/// p is the projection of v iff it is feasible and v − p = λ·w·∂|p| with
/// λ ≥ 0, and λ > 0 only on the boundary.
fn projection_kkt(v: &[f64], w: &[f64], r: f64, p: &[f64]) -> bool {
    let tol = 1e-9;
    let norm = weighted_l1(p, w);
    if norm > r * (1.0 + tol) {
        return false;
    }
    if weighted_l1(v, w) <= r {
        return p == v;
    }
    if (norm - r).abs() > tol * (1.0 + r) {
        return false;
    }
    let lambda = (0..v.len()).filter(|&l| p[l] != 0.0).map(|l| (v[l] - p[l]) * p[l].signum() / w[l]).fold(f64::NAN, f64::max);
    if !(lambda >= -tol) {
        return false;
    }
    (0..v.len()).all(|l| {
        if p[l] != 0.0 {
            ((v[l] - p[l]) - lambda * w[l] * p[l].signum()).abs() <= tol * (1.0 + v[l].abs())
        } else {
            v[l].abs() <= lambda * w[l] + tol
        }
    })
}

fn reproducibility(out: &Path) -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for name in ["exterior-mr", "interior-scq"] {
        let files: Vec<Vec<u8>> = [1, 4, 8]
            .iter()
            .map(|&w| {
                let dir = out.join(format!("repro-{w}"));
                let run = run_shipped(name, &dir, Some(w));
                std::fs::read(run.dir.join("trials.csv")).unwrap()
            })
            .collect();
        let same = files.windows(2).all(|p| p[0] == p[1]);
        ok &= same;
        parts.push(format!("{name}: {} bytes, identical across 1/4/8 workers: {same}", files[0].len()));
    }
    verdict(ok, parts.join("; "))
}

fn main() -> ExitCode {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path();
    let criteria: [(&str, Box<dyn Fn() -> Verdict>); 8] = [
        ("soundness of the deterministic conditions", Box::new(|| soundness(out))),
        ("coverage of the probabilistic theorems", Box::new(|| coverage(out))),
        ("concentration suite", Box::new(|| concentration(out))),
        ("localization payoff", Box::new(localization)),
        ("entropy and A1 oracles", Box::new(entropy)),
        ("LASSO persistence", Box::new(|| lasso(out))),
        ("solver correctness", Box::new(solver)),
        ("reproducibility across worker counts", Box::new(|| reproducibility(out))),
    ];
    let mut all = true;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let v = check();
        all &= v.pass;
        println!("{} criterion {} ({name}): {} [{:.1}s]", if v.pass { "PASS" } else { "FAIL" }, i + 1, v.detail, start.elapsed().as_secs_f64());
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
