//! Desk-scale acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any criterion fails.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use chung_lab_core::coupling::{coupling_replicates, CouplingOptions, CouplingTally};
use chung_lab_core::domain::{window_grid, Budget, GridSpec, ParabolicWindow, ScaleParams};
use chung_lab_core::estimators::{
    bm_smallball_mc, bm_smallball_oracle, chung_scan, estimate_small_ball_grid, fit_tail_exponent,
    nonincreasing_one_sided, ScanConfig, SmallBallEstimate, TailMode,
};
use chung_lab_core::kernel::{
    check_kernel_identities, cross_representation_error, kernel_covariance_linear, semigroup_error,
};
use chung_lab_core::noise::{streams, SeedSpec};
use chung_lab_core::solver::{Coefficient, SpectralLinear};

const SEED: u64 = 2024;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn kernel_identities() -> Verdict {
    let mut worst_mass = 0.0f64;
    let mut worst_semigroup = 0.0f64;
    for t in [1e-4, 1e-2, 1.0] {
        let report = check_kernel_identities(t, 50).unwrap();
        worst_mass = worst_mass.max(report.mass_error);
        worst_semigroup = worst_semigroup.max(report.semigroup_error);
    }
    worst_semigroup = worst_semigroup.max(semigroup_error(0.01, 0.02, 50).unwrap());
    let (cross, _, _) = cross_representation_error(100, SEED).unwrap();
    verdict(
        worst_mass <= 1e-8 && worst_semigroup <= 1e-8 && cross <= 1e-12,
        format!("mass {worst_mass:.2e}, semigroup {worst_semigroup:.2e} (tol 1e-8); image/spectral {cross:.2e} at 100 points (tol 1e-12)"),
    )
}

fn spectral_oracle() -> Verdict {
    let reps = 10_000u64;
    let steps = 10;
    let mut worst = 0.0f64;
    for t in [0.01, 0.1] {
        let grid = GridSpec::new(16, steps, t / steps as f64).unwrap();
        let solver = SpectralLinear::new(1.0, &grid).unwrap();
        let mut sums = [[0.0f64; 2]; 9];
        for i in 0..reps {
            let s = solver.evolve(SeedSpec::new(SEED, i, streams::SPECTRAL), steps);
            for k in [1, 2, 4] {
                sums[k][0] += s.cos[k] * s.cos[k];
                sums[k][1] += s.sin[k] * s.sin[k];
            }
        }
        for k in [1usize, 2, 4] {
            let q = kernel_covariance_linear(t, k as u64);
            let se = q * (2.0 / reps as f64).sqrt();
            for sum in sums[k] {
                let z = (sum / reps as f64 - q).abs() / se;
                worst = worst.max(z);
            }
        }
    }
    verdict(
        worst <= 3.0,
        format!("largest deviation {worst:.2} SE over 12 mode coordinates, 1e4 reps (tol 3 SE)"),
    )
}

fn bm_calibration() -> Verdict {
    let eps = [0.75, 1.0];
    let mc = bm_smallball_mc(&eps, 0..100_000, 10_000, SEED).unwrap();
    let mut ok = true;
    let mut parts = Vec::new();
    for (i, e) in eps.iter().enumerate() {
        let exact = bm_smallball_oracle(*e).unwrap();
        let (lo, hi) = mc.ci_fine(i);
        let consistent = mc.consistent_with_oracle(i).unwrap();
        ok &= consistent;
        parts.push(format!(
            "eps={e}: series {exact:.5}, MC {:.5} CI [{lo:.5}, {hi:.5}] + allowance {:.5}",
            mc.p_fine(i),
            mc.allowance(i)
        ));
    }
    verdict(ok, parts.join("; "))
}

fn strictly_decreasing(est: &[SmallBallEstimate]) -> bool {
    est.windows(2).all(|w| w[1].hits < w[0].hits)
}

fn tail_shape() -> Verdict {
    let window = ParabolicWindow::new(0.25).unwrap();
    let grid = window_grid(&window, 16, &Budget::default()).unwrap();
    let lambdas: Vec<f64> = (2..=8).map(|i| i as f64 * 0.5).collect();
    let mut fits = Vec::new();
    let mut parts = Vec::new();
    let mut ok = true;
    for c in [1.0, 2.0] {
        let est = estimate_small_ball_grid(
            &Coefficient::constant(c),
            &window,
            &lambdas,
            TailMode::Exceedance,
            10_000,
            SEED,
            streams::SMALL_BALL,
            &grid,
        )
        .unwrap();
        let hits: Vec<String> = est.iter().map(|e| format!("{}:{}", e.lambda(), e.hits)).collect();
        match fit_tail_exponent(&est) {
            Ok(fit) => {
                let violations = fit.band_violations(&est).len();
                if c == 1.0 {
                    let decreasing = strictly_decreasing(&est);
                    ok &= decreasing && fit.slope < 0.0 && violations == 0;
                    parts.push(format!(
                        "sigma=1 hits [{}] strictly decreasing {decreasing}; slope {:.4}, {violations}/{} fitted points outside Wilson bands",
                        hits.join(" "),
                        fit.slope,
                        fit.lambdas.len()
                    ));
                } else {
                    parts.push(format!("sigma=2 slope {:.4}", fit.slope));
                }
                fits.push(fit.slope);
            }
            Err(e) => {
                ok = false;
                parts.push(format!("sigma={c} fit refused: {e}"));
            }
        }
    }
    if let [s1, s2] = fits[..] {
        let ratio = s1 / s2;
        ok &= (2.0..=8.0).contains(&ratio);
        parts.push(format!("slope ratio {ratio:.3} (range [2, 8])"));
    }
    verdict(ok, parts.join("; "))
}

struct CouplingCampaign {
    tallies: Vec<(u32, CouplingTally)>,
    elapsed: Duration,
}

fn coupling_campaign() -> CouplingCampaign {
    let start = Instant::now();
    let params = ScaleParams::new(2.0, 3, 6, 0.5).unwrap();
    let sigma = Coefficient::affine(2.0, 1.0);
    let tallies = params
        .indices()
        .map(|n| {
            let outcomes = coupling_replicates(
                &sigma,
                &params,
                n,
                0..1000,
                16,
                SEED,
                &CouplingOptions::default(),
                &Budget::default(),
            )
            .unwrap();
            let mut tally = CouplingTally::default();
            for o in &outcomes {
                tally.record(&o.outcome);
            }
            (n, tally)
        })
        .collect();
    CouplingCampaign {
        tallies,
        elapsed: start.elapsed(),
    }
}

fn counts(c: &CouplingCampaign, f: impl Fn(&CouplingTally) -> u64) -> Vec<(u64, u64)> {
    c.tallies.iter().map(|(_, t)| (f(t), t.trials)).collect()
}

fn describe(c: &CouplingCampaign, f: impl Fn(&CouplingTally) -> u64) -> String {
    c.tallies
        .iter()
        .map(|(n, t)| format!("n={n}:{}/{}", f(t), t.trials))
        .collect::<Vec<_>>()
        .join(" ")
}

fn truncation_coupling(c: &CouplingCampaign) -> Verdict {
    let diverged = counts(c, |t| t.truncation_diverged);
    let monotone = nonincreasing_one_sided(&diverged);
    let zero_at_last = diverged.last().map(|d| d.0) == Some(0);
    verdict(
        monotone && zero_at_last,
        format!(
            "u != u_trunc frequencies {}; nonincreasing {monotone}; zero at n=6 {zero_at_last}",
            describe(c, |t| t.truncation_diverged)
        ),
    )
}

fn freezing(c: &CouplingCampaign) -> Verdict {
    let sup_d = nonincreasing_one_sided(&counts(c, |t| t.sup_d_exceeds));
    let fn_failed = nonincreasing_one_sided(&counts(c, |t| t.fn_failed));
    let identity = c
        .tallies
        .iter()
        .fold(0.0f64, |m, (_, t)| m.max(t.max_frozen_identity_error));
    verdict(
        sup_d && fn_failed && identity <= 1e-12,
        format!(
            "sup|D| > r^1.5: {} (nonincreasing {sup_d}); F_n^c: {} (nonincreasing {fn_failed}); max relative |u_frozen - sigma(0) v| {identity:.1e} (tol 1e-12)",
            describe(c, |t| t.sup_d_exceeds),
            describe(c, |t| t.fn_failed)
        ),
    )
}

fn chung_stability() -> Verdict {
    let params = ScaleParams::new(2.0, 3, 6, 0.5).unwrap();
    let config = ScanConfig {
        params,
        replicates: 0..200,
        resolutions: vec![16, 32],
        master_seed: SEED,
        zero_noise: false,
    };
    let budget = Budget::default();
    let unit = chung_scan(&Coefficient::constant(1.0), &config, &budget).unwrap();
    let complete = unit.is_complete();
    let spread = unit.median_spread(32);
    let medians: Vec<String> = unit
        .at_resolution(32)
        .map(|s| format!("n={}:{:.3}", s.n, s.summary.median))
        .collect();

    let c = -2.5f64;
    let scaled_config = ScanConfig {
        resolutions: vec![16],
        ..config
    };
    let scaled = chung_scan(&Coefficient::constant(c), &scaled_config, &budget).unwrap();
    let mut worst = 0.0f64;
    for (a, b) in unit.at_resolution(16).zip(scaled.at_resolution(16)) {
        for (x, y) in a.statistics.iter().zip(&b.statistics) {
            worst = worst.max((y - c.abs() * x).abs() / (c.abs() * x));
        }
    }
    let matched = scaled.at_resolution(16).count() == 4 && unit.at_resolution(16).count() == 4;
    verdict(
        complete && matched && spread <= 2.0 && worst <= 1e-12,
        format!(
            "medians at ppa32 [{}], max/min {spread:.3} (tol 2); sigma={c} vs |c| x sigma=1 relative {worst:.1e} (tol 1e-12)",
            medians.join(" ")
        ),
    )
}

fn run_cli(dir: &Path, name: &str, sub: &str, config: &str) -> (i32, String) {
    let cfg = dir.join(format!("{name}.toml"));
    fs::write(&cfg, config).unwrap();
    let out = dir.join(name);
    let status = Command::new(env!("CARGO_BIN_EXE_chung-lab"))
        .args([sub, "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    let text = fs::read_to_string(out.join(format!("{sub}.csv"))).unwrap_or_default();
    let stripped = text
        .lines()
        .map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head))
        .collect::<Vec<_>>()
        .join("\n");
    (status.status.code().unwrap_or(-1), stripped)
}

fn determinism_and_merge() -> Verdict {
    let dir = std::env::temp_dir().join(format!("chung-lab-acceptance-{}", std::process::id()));
    fs::create_dir_all(&dir).unwrap();
    let smallball = |shard: u64| {
        format!(
            "[campaign]\nid = \"merge\"\nseed = {SEED}\n[coefficient]\nkind = \"constant\"\nc = 1.0\nlipschitz = 0.0\nsigma0 = 1.0\n\
             [smallball]\nr = 0.25\nlambdas = [1.0, 1.5, 2.0, 2.5, 3.0]\ntrials = 1000\nshard_size = {shard}\n"
        )
    };
    let couple = |shard: u64| {
        format!(
            "[campaign]\nid = \"merge\"\nseed = {SEED}\n[coefficient]\nkind = \"affine\"\nc0 = 2.0\nc1 = 1.0\nlipschitz = 1.0\nsigma0 = 2.0\n\
             [scales]\na = 2.0\nn_min = 2\nn_max = 3\nepsilon = 0.5\n[couple]\nreplicates = 100\nshard_size = {shard}\n"
        )
    };
    let (c1, a) = run_cli(&dir, "sb-a", "smallball", &smallball(1000));
    let (c2, b) = run_cli(&dir, "sb-b", "smallball", &smallball(1000));
    let (c3, sharded) = run_cli(&dir, "sb-shards", "smallball", &smallball(100));
    let (c4, ca) = run_cli(&dir, "cp-a", "couple", &couple(100));
    let (c5, cb) = run_cli(&dir, "cp-shards", "couple", &couple(10));
    let _ = fs::remove_dir_all(&dir);
    let codes_ok = [c1, c2, c3, c4, c5].iter().all(|&c| c == 0 || c == 1);
    let repeat = !a.is_empty() && a == b;
    let merged = a == sharded && !ca.is_empty() && ca == cb;
    verdict(
        codes_ok && repeat && merged,
        format!("repeat run identical {repeat}; 10-shard smallball and couple identical to single shot {merged}; exit codes {c1} {c2} {c3} {c4} {c5}"),
    )
}

fn report(name: &str, limit: Option<Duration>, run: impl FnOnce() -> Verdict, failures: &mut usize) {
    let start = Instant::now();
    let v = run();
    finish(name, limit, start.elapsed(), v, failures);
}

fn finish(name: &str, limit: Option<Duration>, elapsed: Duration, v: Verdict, failures: &mut usize) {
    let in_time = limit.is_none_or(|l| elapsed <= l);
    let pass = v.pass && in_time;
    if !pass {
        *failures += 1;
    }
    let budget = limit.map_or(String::new(), |l| format!(" / {}s", l.as_secs()));
    println!(
        "{} {name}: {} [{:.1}s{budget}]",
        if pass { "PASS" } else { "FAIL" },
        v.detail,
        elapsed.as_secs_f64()
    );
}

fn main() {
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let secs = Duration::from_secs;
    let mut failures = 0;
    report("kernel-identities", Some(secs(10)), kernel_identities, &mut failures);
    report("spectral-mode-variances", Some(secs(120)), spectral_oracle, &mut failures);
    report("bm-smallball-calibration", Some(secs(300)), bm_calibration, &mut failures);
    report("tail-shape", Some(secs(600)), tail_shape, &mut failures);
    let campaign = coupling_campaign();
    finish(
        "truncation-coupling",
        Some(secs(600)),
        campaign.elapsed,
        truncation_coupling(&campaign),
        &mut failures,
    );
    finish("freezing-decomposition", None, Duration::ZERO, freezing(&campaign), &mut failures);
    report("chung-scan-stability", Some(secs(900)), chung_stability, &mut failures);
    report("determinism-and-merge", None, determinism_and_merge, &mut failures);
    println!("acceptance: {} of 8 criteria failed", failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
