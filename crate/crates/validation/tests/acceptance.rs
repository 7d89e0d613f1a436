//! End-to-end acceptance checks, one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the lines always print. Set
//! `ACCEPTANCE_ONLY=1,3,9` to run a subset; criterion 4 then counts only the
//! solves that ran.

use std::time::{Duration, Instant};

use dynconn::data::{MatrixKind, MatrixSequence, TimeSeries};
use dynconn::experiment::{run_benchmark, BenchmarkReport, ExperimentConfig, Method};
use dynconn::flsa::{flsa_objective, flsa_solve, soft_threshold, FlsaProblem};
use dynconn::kernels::{estimate_covariances, KernelSpec};
use dynconn::metrics::synthetic::{planted_effect, PlantedEffect};
use dynconn::metrics::{betweenness_change, holm_adjust, wilcoxon_rank_sum, DEFAULT_ALPHA};
use dynconn::par::Execution;
use dynconn::simgen::{simulate_replicate, SimScenario};
use dynconn::solver::{objective, solve, theta_step, SolverConfig};
use dynconn::tuning::{aic, degrees_of_freedom};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

const REPS: u64 = 50;
const SEGMENT_LENGTHS: [usize; 4] = [10, 30, 50, 90];
const SEED: u64 = 1;

struct Verdict {
    id: u32,
    pass: bool,
    detail: String,
}

#[derive(Default)]
struct Convergence {
    solves: usize,
    converged: usize,
    /// Selected estimates only, reported alongside the full count.
    chosen: usize,
    chosen_converged: usize,
}

impl Convergence {
    fn add(&mut self, solves: usize, converged: usize) {
        self.solves += solves;
        self.converged += converged;
    }

    fn add_report(&mut self, report: &BenchmarkReport) {
        for run in &report.runs {
            self.add(run.grid_solves, run.grid_converged);
            self.chosen += 1;
            self.chosen_converged += run.converged as usize;
        }
    }
}

fn main() {
    let only: Option<Vec<u32>> =
        std::env::var("ACCEPTANCE_ONLY").ok().map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let wanted = |id: u32| only.as_ref().is_none_or(|l| l.contains(&id));

    let mut conv = Convergence::default();
    let mut verdicts = Vec::new();
    let mut record = |v: Verdict| {
        println!("criterion {:>2}: {} {}", v.id, if v.pass { "PASS" } else { "FAIL" }, v.detail);
        verdicts.push(v);
    };

    if wanted(1) {
        record(flsa_oracle());
    }
    if wanted(2) {
        record(theta_step_optimality());
    }
    if wanted(3) {
        record(glasso_reduction(&mut conv));
    }
    if wanted(5) {
        record(sim3(5, "sim3a", &[0.54, 0.85, 0.87, 0.89], Some(&[0.53, 0.72, 0.75, 0.77]), &mut conv));
    }
    if wanted(6) {
        record(sim3(6, "sim3b", &[0.37, 0.56, 0.61, 0.65], None, &mut conv));
    }
    if wanted(7) {
        record(relative_ordering(&mut conv));
    }
    if wanted(4) {
        let rate = conv.converged as f64 / conv.solves.max(1) as f64;
        record(Verdict {
            id: 4,
            pass: conv.solves > 0 && rate >= 0.99,
            detail: format!(
                "{}/{} solves converged ({:.2}%, limit 99%), {} reported non-converged; selected estimates {}/{}",
                conv.converged,
                conv.solves,
                100.0 * rate,
                conv.solves - conv.converged,
                conv.chosen_converged,
                conv.chosen
            ),
        });
    }
    if wanted(8) {
        record(convexity());
    }
    if wanted(9) {
        record(dof_and_aic());
    }
    if wanted(10) {
        record(statistics());
    }
    if wanted(11) {
        record(complexity_scaling());
    }
    if wanted(12) {
        record(planted_power());
    }

    verdicts.sort_by_key(|v| v.id);
    println!("\nsummary");
    for v in &verdicts {
        println!("criterion {:>2}: {}", v.id, if v.pass { "PASS" } else { "FAIL" });
    }
    let failed = verdicts.iter().filter(|v| !v.pass).count();
    println!("{} passed, {failed} failed", verdicts.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

fn secs(d: Duration) -> String {
    format!("{:.1}s", d.as_secs_f64())
}

fn normal(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// `G G^T / p + floor I` with standard normal `G`.
fn random_spd(rng: &mut impl Rng, p: usize, floor: f64) -> DMatrix<f64> {
    let g = DMatrix::from_fn(p, p, |_, _| normal(rng));
    &g * g.transpose() / p as f64 + DMatrix::identity(p, p) * floor
}

fn random_symmetric(rng: &mut impl Rng, p: usize, scale: f64) -> DMatrix<f64> {
    let a = DMatrix::from_fn(p, p, |_, _| scale * normal(rng));
    (&a + a.transpose()) * 0.5
}

/// Dual projected gradient with restarted momentum on
/// `max_{|u| <= lambda2} -1/2 ||soft(y - D^T u, lambda1)||^2 + 1/2 ||y||^2`.
/// Returns the primal point once the duality gap is at most `gap_tol`.
fn flsa_reference(y: &[f64], lambda1: f64, lambda2: f64, gap_tol: f64) -> Option<Vec<f64>> {
    let n = y.len();
    if n == 1 || lambda2 == 0.0 {
        return Some(y.iter().map(|&v| soft_threshold(v, lambda1)).collect());
    }
    let primal = |u: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| {
                let left = if i > 0 { u[i - 1] } else { 0.0 };
                let right = if i + 1 < n { u[i] } else { 0.0 };
                soft_threshold(y[i] - (left - right), lambda1)
            })
            .collect()
    };
    let dual = |z: &[f64]| -> f64 { y.iter().zip(z).map(|(a, s)| 0.5 * a * a - 0.5 * s * s).sum() };
    let m = n - 1;
    let (mut u, mut w, mut prev) = (vec![0.0; m], vec![0.0; m], vec![0.0; m]);
    let mut t = 1.0f64;
    for iter in 0..20_000_000usize {
        let z = primal(&w);
        let next: Vec<f64> = (0..m).map(|k| (w[k] + 0.25 * (z[k + 1] - z[k])).clamp(-lambda2, lambda2)).collect();
        let restart = (0..m).map(|k| (w[k] - next[k]) * (next[k] - u[k])).sum::<f64>() > 0.0;
        prev.copy_from_slice(&u);
        u = next;
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        if restart {
            t = 1.0;
            w.copy_from_slice(&u);
        } else {
            for k in 0..m {
                w[k] = u[k] + (t - 1.0) / t_next * (u[k] - prev[k]);
            }
            t = t_next;
        }
        if iter % 64 == 0 {
            let z = primal(&u);
            if flsa_objective(y, &z, lambda1, lambda2) - dual(&z) <= gap_tol {
                return Some(z);
            }
        }
    }
    None
}

fn flsa_oracle() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha20Rng::seed_from_u64(101);
    let (mut worst, mut oracle_misses) = (0.0f64, 0);
    for _ in 0..200 {
        let n = rng.random_range(1..=50);
        let level = 2.0 * normal(&mut rng);
        let y: Vec<f64> = (0..n).map(|_| level + normal(&mut rng)).collect();
        let (l1, l2) = (rng.random_range(0.0..=3.0), rng.random_range(0.0..=3.0));
        let fast = flsa_solve(&FlsaProblem::new(y.clone(), l1, l2).unwrap());
        match flsa_reference(&y, l1, l2, 1e-12) {
            Some(slow) => {
                let err = fast.iter().zip(&slow).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                worst = worst.max(err);
            }
            None => oracle_misses += 1,
        }
    }
    let elapsed = start.elapsed();
    Verdict {
        id: 1,
        pass: worst <= 1e-6 && oracle_misses == 0 && elapsed < Duration::from_secs(10),
        detail: format!(
            "FLSA vs dual oracle on 200 instances: max abs error {worst:.2e} (limit 1e-6), oracle misses {oracle_misses}, {}",
            secs(elapsed)
        ),
    }
}

fn theta_step_optimality() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha20Rng::seed_from_u64(202);
    let (mut worst, mut min_eig) = (0.0f64, f64::INFINITY);
    for _ in 0..100 {
        let p = rng.random_range(2..=10);
        let t = rng.random_range(1..=4);
        let gamma = rng.random_range(0.1..5.0);
        let mk = |rng: &mut ChaCha20Rng, kind, f: &dyn Fn(&mut ChaCha20Rng) -> DMatrix<f64>| {
            MatrixSequence::new(kind, (0..t).map(|_| f(rng)).collect()).unwrap()
        };
        let s = mk(&mut rng, MatrixKind::Covariance, &|r| random_spd(r, p, 0.05));
        let z = mk(&mut rng, MatrixKind::Auxiliary, &|r| random_symmetric(r, p, 1.0));
        let u = mk(&mut rng, MatrixKind::Dual, &|r| random_symmetric(r, p, 0.3));
        let theta = theta_step(&s, &z, &u, gamma).unwrap();
        for i in 0..t {
            let th = theta.get(i);
            min_eig = min_eig.min(th.clone().symmetric_eigen().eigenvalues.min());
            let inv = th.clone().try_inverse().expect("theta is invertible");
            let rhs = s.get(i) - (z.get(i) - u.get(i)) * gamma;
            let res = (inv - th * gamma - rhs).amax();
            worst = worst.max(res);
        }
    }
    let elapsed = start.elapsed();
    Verdict {
        id: 2,
        pass: worst <= 1e-8 && min_eig > 0.0 && elapsed < Duration::from_secs(5),
        detail: format!(
            "theta step on 100 draws: max stationarity residual {worst:.2e} (limit 1e-8), min eigenvalue {min_eig:.3e}, {}",
            secs(elapsed)
        ),
    }
}

/// Largest violation of `W - S = lambda * sign(Theta)` on the support and
/// `|W - S| <= lambda` off it, with `W = Theta^{-1}`.
fn glasso_kkt(theta: &DMatrix<f64>, s: &DMatrix<f64>, lambda: f64, penalize_diagonal: bool) -> f64 {
    let w = theta.clone().try_inverse().expect("estimate is invertible");
    let g = w - s;
    let p = s.nrows();
    let mut worst = 0.0f64;
    for r in 0..p {
        for c in 0..p {
            let l = if r == c && !penalize_diagonal { 0.0 } else { lambda };
            let v = theta[(r, c)];
            let viol = if v != 0.0 { (g[(r, c)] - l * v.signum()).abs() } else { (g[(r, c)].abs() - l).max(0.0) };
            worst = worst.max(viol);
        }
    }
    worst
}

fn glasso_reduction(conv: &mut Convergence) -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha20Rng::seed_from_u64(303);
    let (mut worst, mut tight_unconverged) = (0.0f64, 0);
    for _ in 0..50 {
        let p = rng.random_range(2..=8);
        let s = random_spd(&mut rng, p, 0.5);
        let lambda = rng.random_range(0.01..0.5);
        let covs = MatrixSequence::new(MatrixKind::Covariance, vec![s.clone()]).unwrap();

        let default = SolverConfig::new(lambda, 0.0);
        let r = solve(&covs, &default).unwrap();
        conv.add(1, r.converged as usize);

        let tight = SolverConfig { eps1: 1e-14, eps2: 1e-14, max_iter: 20_000, ..default };
        let r = solve(&covs, &tight).unwrap();
        if !r.converged {
            tight_unconverged += 1;
        }
        worst = worst.max(glasso_kkt(r.precisions.get(0), &s, lambda, tight.penalize_diagonal));
    }
    let elapsed = start.elapsed();
    Verdict {
        id: 3,
        pass: worst <= 1e-5 && elapsed < Duration::from_secs(30),
        detail: format!(
            "lambda2 = 0, T = 1, 50 cases: max KKT violation {worst:.2e} (limit 1e-5), tight-tolerance runs unconverged {tight_unconverged}, {}",
            secs(elapsed)
        ),
    }
}

fn bench(name: &str, seglen: usize, methods: &[Method]) -> BenchmarkReport {
    let scenario = SimScenario::preset(name, Some(seglen), SEED).unwrap();
    run_benchmark(&scenario, REPS, methods, &ExperimentConfig::default(), Execution::Parallel).unwrap()
}

fn within(got: f64, want: f64) -> bool {
    (got - want).abs() <= 0.10
}

fn sim3(id: u32, name: &str, single: &[f64; 4], gk: Option<&[f64; 4]>, conv: &mut Convergence) -> Verdict {
    let start = Instant::now();
    let mut methods = vec![Method::Single];
    if gk.is_some() {
        methods.push(Method::GaussianKernel);
    }
    let mut pass = true;
    let mut parts = Vec::new();
    for (k, &l) in SEGMENT_LENGTHS.iter().enumerate() {
        let report = bench(name, l, &methods);
        conv.add_report(&report);
        let f = |m| report.summary(m).map_or(f64::NAN, |s| s.mean_f);
        let got = f(Method::Single);
        let ok = within(got, single[k]);
        pass &= ok;
        let mut part = format!("l={l}: single {got:.3} vs {:.2}{}", single[k], if ok { "" } else { " (out)" });
        if let Some(gk) = gk {
            let got = f(Method::GaussianKernel);
            let ok = within(got, gk[k]);
            pass &= ok;
            part += &format!(", gk {got:.3} vs {:.2}{}", gk[k], if ok { "" } else { " (out)" });
        }
        pass &= report.failures.is_empty();
        parts.push(part);
    }
    Verdict {
        id,
        pass,
        detail: format!("{name}, {REPS} reps, tolerance 0.10: {}; {}", parts.join("; "), secs(start.elapsed())),
    }
}

fn relative_ordering(conv: &mut Convergence) -> Verdict {
    let start = Instant::now();
    let mut pass = true;
    let mut parts = Vec::new();
    for name in ["sim1a", "sim2a"] {
        let report = bench(name, 100, &Method::ALL);
        conv.add_report(&report);
        pass &= report.failures.is_empty();
        let s = |m| report.summary(m).expect("method ran");
        let single = s(Method::Single);
        let (sw, gk) = (s(Method::SlidingWindow), s(Method::GaussianKernel));
        let f_ok = single.mean_mid_segment_f >= sw.mean_mid_segment_f;
        let c_ok = single.median_change_count <= sw.median_change_count
            && single.median_change_count <= gk.median_change_count;
        pass &= f_ok && c_ok;
        parts.push(format!(
            "{name}: mid-segment F single {:.3} vs sw {:.3}{}; median changes single {} vs sw {} gk {}{}",
            single.mean_mid_segment_f,
            sw.mean_mid_segment_f,
            if f_ok { "" } else { " (fails)" },
            single.median_change_count,
            sw.median_change_count,
            gk.median_change_count,
            if c_ok { "" } else { " (fails)" },
        ));
    }
    Verdict { id: 7, pass, detail: format!("{}; {}", parts.join("; "), secs(start.elapsed())) }
}

fn convexity() -> Verdict {
    let mut rng = ChaCha20Rng::seed_from_u64(808);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..1000 {
        let p = rng.random_range(2..=5);
        let t = rng.random_range(1..=5);
        let seq = |rng: &mut ChaCha20Rng, kind, floor| {
            MatrixSequence::new(kind, (0..t).map(|_| random_spd(rng, p, floor)).collect()).unwrap()
        };
        let covs = seq(&mut rng, MatrixKind::Covariance, 0.1);
        let a = seq(&mut rng, MatrixKind::Precision, 0.2);
        let b = seq(&mut rng, MatrixKind::Precision, 0.2);
        let w: f64 = rng.random_range(0.0..1.0);
        let (l1, l2) = (rng.random_range(0.0..2.0), rng.random_range(0.0..2.0));
        let mix: Vec<DMatrix<f64>> =
            a.matrices().iter().zip(b.matrices()).map(|(x, y)| x * w + y * (1.0 - w)).collect();
        let mix = MatrixSequence::new(MatrixKind::Precision, mix).unwrap();
        let lhs = objective(&mix, &covs, l1, l2).unwrap();
        let rhs = w * objective(&a, &covs, l1, l2).unwrap() + (1.0 - w) * objective(&b, &covs, l1, l2).unwrap();
        worst = worst.max(lhs - rhs);
    }
    Verdict {
        id: 8,
        pass: worst <= 1e-9,
        detail: format!("1000 convex combinations: max violation {worst:.2e} (limit 1e-9)"),
    }
}

fn trajectory(vals: &[f64]) -> MatrixSequence {
    let ms = vals.iter().map(|&v| nalgebra::dmatrix![1.0, v; v, 1.0]).collect();
    MatrixSequence::new(MatrixKind::Precision, ms).unwrap()
}

fn dof_and_aic() -> Verdict {
    let k = |v: &[f64]| degrees_of_freedom(&trajectory(v), 0.0);
    let eye = |kind| MatrixSequence::new(kind, vec![DMatrix::identity(2, 2)]).unwrap();
    let (i, s) = (eye(MatrixKind::Precision), eye(MatrixKind::Covariance));
    let checks = [
        ("all-zero K = 0", k(&[0.0, 0.0, 0.0]) == 0),
        ("(0, .5, .5, 0) K = 1", k(&[0.0, 0.5, 0.5, 0.0]) == 1),
        ("(.5, .5, .5) K = 1", k(&[0.5, 0.5, 0.5]) == 1),
        ("identity AIC = 4", aic(&i, &s, 0) == 4.0),
        ("K = 3 beats K = 5", aic(&i, &s, 3) < aic(&i, &s, 5)),
    ];
    let failed: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    Verdict {
        id: 9,
        pass: failed.is_empty(),
        detail: if failed.is_empty() {
            format!("{} exact checks", checks.len())
        } else {
            format!("failed: {}", failed.join(", "))
        },
    }
}

fn statistics() -> Verdict {
    let exact = wilcoxon_rank_sum(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
    let holm = holm_adjust(&[0.01, 0.04]).unwrap();
    let exact_ok = (exact - 0.1).abs() < 1e-12;
    let holm_ok = (holm[0] - 0.02).abs() < 1e-12 && (holm[1] - 0.04).abs() < 1e-12;

    let cfg = PlantedEffect::default();
    let mut rng = ChaCha20Rng::seed_from_u64(1010);
    let mut false_alarms = 0;
    for _ in 0..1000 {
        let subjects = planted_effect(&cfg, false, &mut rng);
        let nodes = betweenness_change(&subjects, cfg.p, DEFAULT_ALPHA).unwrap();
        if nodes.iter().any(|n| n.flagged) {
            false_alarms += 1;
        }
    }
    let fwer = false_alarms as f64 / 1000.0;
    Verdict {
        id: 10,
        pass: exact_ok && holm_ok && fwer <= 0.07,
        detail: format!(
            "exact rank-sum p = {exact}, Holm (0.01, 0.04) -> ({}, {}), null FWER {fwer:.3} over 1000 reps (limit 0.07)",
            holm[0], holm[1]
        ),
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn median_solve_secs(p: usize) -> (f64, usize) {
    let mut scenario = SimScenario::preset("sim3a", Some(100), SEED).unwrap();
    scenario.p = p;
    let config = SolverConfig { execution: Execution::Sequential, ..SolverConfig::new(0.1, 0.1) };
    let mut times = Vec::new();
    let mut iterations = Vec::new();
    for rep in 0..5 {
        let (ts, _): (TimeSeries, _) = simulate_replicate(&scenario, rep).unwrap();
        let covs = estimate_covariances(&ts, &KernelSpec::gaussian(30.0).unwrap()).unwrap();
        let start = Instant::now();
        let r = solve(&covs, &config).unwrap();
        times.push(start.elapsed().as_secs_f64());
        iterations.push(r.iterations_used as f64);
    }
    (median(times), median(iterations) as usize)
}

fn complexity_scaling() -> Verdict {
    let (t10, it10) = median_solve_secs(10);
    let (t20, it20) = median_solve_secs(20);
    let ratio = t20 / t10;
    Verdict {
        id: 11,
        pass: ratio <= 10.0,
        detail: format!(
            "T = 300 median solve: p=10 {t10:.3}s ({it10} iters), p=20 {t20:.3}s ({it20} iters), ratio {ratio:.2} (limit 10)"
        ),
    }
}

fn planted_power() -> Verdict {
    let cfg = PlantedEffect::default();
    let mut rng = ChaCha20Rng::seed_from_u64(1212);
    let mut hits = 0;
    for _ in 0..20 {
        let subjects = planted_effect(&cfg, true, &mut rng);
        let nodes = betweenness_change(&subjects, cfg.p, DEFAULT_ALPHA).unwrap();
        if nodes[cfg.effect_node].flagged {
            hits += 1;
        }
    }
    Verdict {
        id: 12,
        pass: hits >= 18,
        detail: format!("planted node flagged in {hits}/20 reps of 24 subjects (need 18)"),
    }
}
