//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fail. Runtime budgets are part of the criteria.

use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::thread;
use std::time::{Duration, Instant};

use ldp_min::analysis::tail_bound;
use ldp_min::datagen::Cohort;
use ldp_min::ldp::{randomized_response, rr_keep_probability, unbiased_phi, Bit, PrivacyBudget, RoundBudget};
use ldp_min::net::{client, Server, ServerOptions, WireMessage};
use ldp_min::params::gamma_threshold;
use ldp_min::protocol::{
    run_nonprivate_min, run_private_max, run_private_min, run_private_min_per_user, user_respond,
    ProtocolConfig,
};
use ldp_min::rng::{RandomStream, SeededStream};

type Check = fn() -> Outcome;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn within_budget(start: Instant, limit: Duration) -> (bool, String) {
    let t = start.elapsed();
    (t <= limit, format!("{:.2} s of {} s", t.as_secs_f64(), limit.as_secs()))
}

fn nonprivate_correctness() -> Outcome {
    let start = Instant::now();
    let mut rng = SeededStream::new(1);
    let mut worst_ratio = 0.0f64;
    let mut failures = 0;
    for _ in 0..1000 {
        let n = 1 + (rng.next_uniform() * 100.0) as usize;
        let depth = 1 + (rng.next_uniform() * 12.0) as usize;
        let values: Vec<f64> = (0..n).map(|_| 2.0 * rng.next_uniform() - 1.0).collect();
        let c = Cohort::from_values(values).unwrap();
        let t = run_nonprivate_min(&c, depth).unwrap();
        let ratio = (t.estimate - c.sample_min()).abs() / (2.0f64).powi(-(depth as i32));
        worst_ratio = worst_ratio.max(ratio);
        if ratio > 1.0 {
            failures += 1;
        }
    }
    let (fast, time) = within_budget(start, Duration::from_secs(10));
    outcome(
        failures == 0 && fast,
        format!("1000 cohorts, {failures} violations, worst |err|/2^-L = {worst_ratio:.4}, {time}"),
    )
}

fn mechanism_exactness() -> Outcome {
    let mut pass = true;
    let mut notes = Vec::new();
    for eps_r in [0.1, 0.25, 1.0] {
        let b = RoundBudget::new(eps_r).unwrap();
        let p = rr_keep_probability(b);
        let analytic = eps_r.exp() / (1.0 + eps_r.exp());
        pass &= (p - analytic).abs() <= 1e-15;
        let trials = 100_000;
        let mut rng = SeededStream::derive(2, &[eps_r.to_bits()]);
        let kept = (0..trials)
            .filter(|_| randomized_response(Bit::Plus, b, &mut rng) == Bit::Plus)
            .count();
        let freq = kept as f64 / trials as f64;
        let sigma = (p * (1.0 - p) / trials as f64).sqrt();
        let z = (freq - p) / sigma;
        pass &= z.abs() <= 4.0;
        notes.push(format!("eps/L={eps_r}: z={z:+.2}"));
    }
    outcome(pass, notes.join(", "))
}

fn estimator_unbiasedness() -> Outcome {
    let start = Instant::now();
    let reps = 100_000;
    let mut pass = true;
    let mut worst = 0.0f64;
    let mut points = 0;
    for f in [0.0, 0.3, 1.0] {
        for eps_r in [0.25, 1.0, 4.0] {
            for n in [10usize, 100] {
                let below = (f * n as f64).round() as usize;
                let values: Vec<f64> = (0..n).map(|i| if i < below { -0.5 } else { 0.5 }).collect();
                let b = RoundBudget::new(eps_r).unwrap();
                let mut rng = SeededStream::derive(3, &[f.to_bits(), eps_r.to_bits(), n as u64]);
                let (mut s, mut s2) = (0.0, 0.0);
                for _ in 0..reps {
                    let sum: i64 = values.iter().map(|&x| user_respond(x, 0.0, b, &mut rng).value()).sum();
                    let phi = unbiased_phi(sum, n, b).unwrap();
                    s += phi;
                    s2 += phi * phi;
                }
                let mean = s / reps as f64;
                let se = ((s2 / reps as f64 - mean * mean) / reps as f64).sqrt();
                let truth = below as f64 / n as f64;
                let z = (mean - truth) / se;
                worst = worst.max(z.abs());
                pass &= z.abs() <= 3.0;
                points += 1;
            }
        }
    }
    let (fast, time) = within_budget(start, Duration::from_secs(60));
    outcome(pass && fast, format!("{points} grid points, worst |z| = {worst:.2}, {time}"))
}

fn ldpmin(args: &[&str]) -> Result<String, String> {
    let o = Command::new(env!("CARGO_BIN_EXE_ldpmin"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    let out = String::from_utf8_lossy(&o.stdout).into_owned();
    if o.status.success() {
        Ok(out)
    } else {
        Err(format!("ldpmin {}: {}{}", args[0], out, String::from_utf8_lossy(&o.stderr)))
    }
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

/// Runs the bundled sweep through `experiment` then `fit`; returns (A, α̂).
fn sweep_and_fit(config: &str) -> Result<(f64, f64, String), String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let csv = dir.path().join("result.csv");
    let cfg = configs().join(config);
    ldpmin(&["experiment", cfg.to_str().unwrap(), "--out", csv.to_str().unwrap()])?;
    let report = ldpmin(&["fit", csv.to_str().unwrap()])?;
    let get = |key: &str| -> Result<f64, String> {
        report
            .lines()
            .find_map(|l| l.strip_prefix(&format!("{key} = ")))
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| format!("no {key} in fit output"))
    };
    let errs: Vec<String> = std::fs::read_to_string(&csv)
        .map_err(|e| e.to_string())?
        .lines()
        .skip(1)
        .map(|l| {
            let v: f64 = l.split(',').nth(5).unwrap().parse().unwrap();
            format!("{v:.4}")
        })
        .collect();
    Ok((get("A")?, get("alpha_hat")?, errs.join(" ")))
}

fn rate_reproduction() -> Outcome {
    let start = Instant::now();
    match sweep_and_fit("uniform_fixed.cfg") {
        Ok((a, _, errs)) => outcome(
            (0.35..=0.65).contains(&a),
            format!("A = {a:.4} (window [0.35, 0.65]); errors {errs}; {:.1} s", start.elapsed().as_secs_f64()),
        ),
        Err(e) => outcome(false, e),
    }
}

fn alpha_adaptivity() -> Outcome {
    let start = Instant::now();
    match sweep_and_fit("beta2_fixed.cfg") {
        Ok((a, alpha, errs)) => outcome(
            (1.3..=3.0).contains(&alpha),
            format!(
                "alpha_hat = {alpha:.4} (A = {a:.4}, window [1.3, 3.0]); errors {errs}; {:.1} s",
                start.elapsed().as_secs_f64()
            ),
        ),
        Err(e) => outcome(false, e),
    }
}

fn baseline_dominance() -> Outcome {
    let start = Instant::now();
    let cfg = configs().join("baseline_eps1.cfg");
    let text = match ldpmin(&["compare", cfg.to_str().unwrap()]) {
        Ok(t) => t,
        Err(e) => return outcome(false, e),
    };
    let mut pass = true;
    let mut rows = 0;
    let mut min_baseline = f64::INFINITY;
    let mut max_ratio_shortfall = f64::INFINITY;
    for line in text.lines().skip(1) {
        let f: Vec<f64> = line.split(',').map(|v| v.parse().unwrap()).collect();
        let (bs, base) = (f[2], f[3]);
        pass &= base > 1.0 && base > bs;
        min_baseline = min_baseline.min(base);
        max_ratio_shortfall = max_ratio_shortfall.min(base / bs);
        rows += 1;
    }
    pass &= rows == 5;
    outcome(
        pass,
        format!(
            "{rows} sizes, smallest baseline error {min_baseline:.3}, smallest baseline/binary ratio {max_ratio_shortfall:.1}, {:.1} s",
            start.elapsed().as_secs_f64()
        ),
    )
}

fn tail_oracle() -> Outcome {
    let start = Instant::now();
    let reps = 100_000;
    let n = 10_000;
    let values = vec![0.5; n];
    let mut pass = true;
    let mut notes = Vec::new();
    for (eps, gamma) in [(1.0, 0.1), (0.5, 0.15)] {
        let b = RoundBudget::new(eps).unwrap();
        let mut rng = SeededStream::derive(7, &[eps.to_bits()]);
        let mut exceed = 0usize;
        for _ in 0..reps {
            let sum: i64 = values.iter().map(|&x| user_respond(x, 0.0, b, &mut rng).value()).sum();
            if unbiased_phi(sum, n, b).unwrap() > gamma {
                exceed += 1;
            }
        }
        let bound = tail_bound(eps, gamma, n);
        let sigma = (bound * (1.0 - bound) / reps as f64).sqrt();
        let freq = exceed as f64 / reps as f64;
        pass &= freq <= bound + 3.0 * sigma;
        notes.push(format!("eps={eps}: P^={freq:.2e} <= {bound:.2e}+3sd"));
    }
    let (fast, time) = within_budget(start, Duration::from_secs(60));
    notes.push(time);
    outcome(pass && fast, notes.join(", "))
}

fn threshold_identity() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut points = 0;
    for (i, eps) in [0.25, 0.5, 1.0, 4.0, 16.0].into_iter().enumerate() {
        for (j, depth) in [1usize, 3, 10, 20].into_iter().enumerate() {
            for (k, n) in [50usize, 1000, 10_000, 1 << 16, 1 << 20].into_iter().enumerate() {
                let h = (1 + (i + j + k) % 5) as f64 * (n as f64).ln() / 4.0;
                let budget = PrivacyBudget::new(eps).unwrap();
                let gamma = gamma_threshold(budget, depth, h, n);
                let t = tail_bound(eps / depth as f64, gamma, n);
                worst = worst.max((t / (-h).exp() - 1.0).abs());
                points += 1;
            }
        }
    }
    let (fast, time) = within_budget(start, Duration::from_secs(1));
    outcome(
        worst <= 1e-12 && fast && points == 100,
        format!("{points} points, worst relative deviation {worst:.2e}, {time}"),
    )
}

fn reflection() -> Outcome {
    let mut rng = SeededStream::new(9);
    let mut mismatches = 0;
    for i in 0..100u64 {
        let n = 1 + (rng.next_uniform() * 200.0) as usize;
        let depth = 1 + (rng.next_uniform() * 16.0) as usize;
        let eps = 0.2 + 8.0 * rng.next_uniform();
        let gamma = rng.next_uniform();
        let values: Vec<f64> = (0..n).map(|_| 2.0 * rng.next_uniform() - 1.0).collect();
        let c = Cohort::from_values(values).unwrap();
        let cfg = ProtocolConfig::new(PrivacyBudget::new(eps).unwrap(), depth, gamma, n).unwrap();
        let max = run_private_max(&c, &cfg, &mut SeededStream::new(i)).unwrap();
        let min = run_private_min(&c.negated(), &cfg, &mut SeededStream::new(i)).unwrap();
        if max.estimate.to_bits() != (-min.estimate).to_bits() {
            mismatches += 1;
        }
    }
    outcome(mismatches == 0, format!("100 cohorts, {mismatches} mismatches"))
}

fn networked_equivalence() -> Outcome {
    let start = Instant::now();
    let values = [-0.72, 0.15, 0.4, -0.05, 0.93, -0.31, 0.6, 0.0];
    let seeds: Vec<u64> = (0..8).map(|i| 500 + i).collect();
    let cfg = ProtocolConfig::new(PrivacyBudget::new(6.0).unwrap(), 6, 0.2, 8).unwrap();
    let cohort = Cohort::from_values(values.to_vec()).unwrap();
    let mut streams: Vec<_> = seeds.iter().map(|&s| SeededStream::new(s)).collect();
    let local = run_private_min_per_user(&cohort, &cfg, &mut streams).unwrap();

    let options = ServerOptions {
        round_timeout: Duration::from_secs(10),
        ..ServerOptions::default()
    };
    let server = match Server::bind("127.0.0.1:0", cfg, options) {
        Ok(s) => s,
        Err(e) => return outcome(false, e.to_string()),
    };
    let addr = server.local_addr().unwrap();
    let handle = thread::spawn(move || server.run());
    let clients: Vec<_> = values
        .iter()
        .zip(&seeds)
        .enumerate()
        .map(|(i, (&x, &s))| thread::spawn(move || client(addr, x, s, &format!("user{i}"))))
        .collect();
    let client_results: Vec<_> = clients.into_iter().map(|c| c.join().unwrap()).collect();
    let served = match handle.join().unwrap() {
        Ok(o) => o,
        Err(e) => return outcome(false, e.to_string()),
    };
    let same = served.transcript.estimate.to_bits() == local.estimate.to_bits()
        && client_results.iter().all(|r| matches!(r, Ok(v) if v.to_bits() == local.estimate.to_bits()));
    let mut hellos = 0;
    let mut bits = 0;
    let mut other = 0;
    for l in &served.inbound {
        let f: Vec<&str> = l.line.split(' ').collect();
        match (WireMessage::parse(&l.line), f.as_slice()) {
            (Ok(WireMessage::Hello { .. }), _) => hellos += 1,
            (Ok(WireMessage::Resp { .. }), ["RESP", _, "1" | "-1"]) => bits += 1,
            _ => other += 1,
        }
    }
    let clean = hellos == 8 && bits == 8 * 6 && other == 0;
    outcome(
        same && clean,
        format!(
            "RESULT {} vs in-process {}, {hellos} HELLO + {bits} bit payloads + {other} other, {:.2} s",
            served.transcript.estimate,
            local.estimate,
            start.elapsed().as_secs_f64()
        ),
    )
}

fn main() -> ExitCode {
    let checks: [(&str, Check); 10] = [
        ("non-private correctness", nonprivate_correctness),
        ("randomized-response exactness", mechanism_exactness),
        ("estimator unbiasedness", estimator_unbiasedness),
        ("rate reproduction, uniform", rate_reproduction),
        ("alpha adaptivity, beta(2,1)", alpha_adaptivity),
        ("baseline dominance", baseline_dominance),
        ("single-round tail bound", tail_oracle),
        ("threshold identity", threshold_identity),
        ("max/min reflection", reflection),
        ("networked equivalence", networked_equivalence),
    ];
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        let o = check();
        if !o.pass {
            failed += 1;
        }
        println!(
            "criterion {:>2} {}: {} ({})",
            i + 1,
            if o.pass { "PASS" } else { "FAIL" },
            name,
            o.detail
        );
    }
    println!("acceptance: {} of {} criteria pass", checks.len() - failed, checks.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
