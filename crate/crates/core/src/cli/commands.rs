use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::checkpoint::{Checkpoint, Stop, UnitRunner};
use super::config::{section, CampaignConfig, KernelCheckSection, MAX_CELLS_ENV};
use super::output::{
    parse_statistic, read_rows_from, statistic_name, write_rows_to, ResultRow, RowExt, RunContext,
};
use super::{Command, EXIT_INTERRUPTED, EXIT_OK, EXIT_PARTIAL, EXIT_VIOLATION};
use crate::coupling::{coupling_replicates, CouplingOptions, ReplicateOutcome};
use crate::domain::{window_grid, Budget, ParabolicWindow};
use crate::error::{Error, Result};
use crate::estimators::{
    bm_smallball_mc, bm_smallball_oracle, fit_log_linear, fit_tail_counts, merge_estimates,
    nonincreasing_one_sided, sample_window_sups, scan_scale, tally_sups, wilson95, BmSmallBallMc,
    ScanConfig, SmallBallEstimate, SmallBallKey, Summary, TailFit, TailMode, Z95,
};
use crate::kernel::{check_kernel_identities, cross_representation_error, semigroup_error, KernelIdentityReport};
use crate::noise::streams;

/// Result of a finished (or deliberately stopped) run.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub exit_code: i32,
    pub csv: Option<PathBuf>,
    pub rows: usize,
    pub message: String,
}

/// Rows plus the problems found while producing them.
#[derive(Default)]
struct Report {
    rows: Vec<ResultRow>,
    violations: Vec<String>,
    partial: Vec<String>,
}

pub(super) fn execute(cmd: &Command) -> Result<Outcome> {
    let args = cmd.args();
    let env = std::env::var(MAX_CELLS_ENV).ok();
    let cfg = CampaignConfig::load(&args.config)?.with_overrides(args.seed, env.as_deref())?;
    let out_dir = args
        .out
        .clone()
        .or_else(|| cfg.campaign.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&out_dir)?;
    let sub = cmd.name();
    let hash = cfg.hash();
    let campaign_id = cfg
        .campaign
        .id
        .clone()
        .unwrap_or_else(|| format!("{sub}-{}", &hash[..12]));
    let ctx = RunContext::new(campaign_id, sub, hash.clone(), cfg.campaign.seed);
    let checkpoint = Checkpoint::open(
        &out_dir.join(format!("{sub}.checkpoint.jsonl")),
        sub,
        &hash,
        args.resume,
    )?;
    let mut runner = UnitRunner::new(checkpoint, args.max_units, cfg.budget.max_wall_seconds);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.workers.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;

    let mut report = pool.install(|| match cmd {
        Command::KernelCheck(_) => kernel_check(&cfg, &ctx, &mut runner),
        Command::Smallball(_) => smallball(&cfg, &ctx, &mut runner),
        Command::Tailfit(_) => tailfit(&cfg, &ctx),
        Command::Couple(_) => couple(&cfg, &ctx, &mut runner),
        Command::ChungScan(_) => chung_scan(&cfg, &ctx, &mut runner),
        Command::BmOracle(_) => bm_oracle(&cfg, &ctx, &mut runner),
    })?;

    match runner.stopped() {
        Some(Stop::Interrupted) => {
            return Ok(Outcome {
                exit_code: EXIT_INTERRUPTED,
                csv: None,
                rows: 0,
                message: format!(
                    "{sub}: stopped after the unit limit; {} units saved in {}; rerun with --resume",
                    runner.checkpoint().completed(),
                    runner.checkpoint().path().display()
                ),
            })
        }
        Some(Stop::WallTime) => report.partial.push("wall-time budget exhausted".into()),
        None => {}
    }
    for reason in &report.partial {
        let row = ctx.row(statistic_name("incomplete", &[("reason", reason.clone())]), f64::NAN);
        report.rows.push(row);
    }
    let csv = out_dir.join(format!("{sub}.csv"));
    write_rows_to(&csv, &mut report.rows)?;
    let exit_code = if !report.partial.is_empty() {
        EXIT_PARTIAL
    } else if !report.violations.is_empty() {
        EXIT_VIOLATION
    } else {
        EXIT_OK
    };
    let mut message = format!("{sub}: {} rows written to {}", report.rows.len(), csv.display());
    for v in &report.violations {
        message.push_str(&format!("\nviolation: {v}"));
    }
    for p in &report.partial {
        message.push_str(&format!("\nincomplete: {p}"));
    }
    Ok(Outcome {
        exit_code,
        csv: Some(csv),
        rows: report.rows.len(),
        message,
    })
}

fn shards(total: u64, size: u64) -> Result<Vec<std::ops::Range<u64>>> {
    if size == 0 {
        return Err(Error::Config("shard_size must be positive".into()));
    }
    Ok((0..total.div_ceil(size))
        .map(|k| k * size..((k + 1) * size).min(total))
        .collect())
}

fn resolution_tag(points_per_axis: usize) -> String {
    format!("ppa{points_per_axis}")
}

fn kernel_check(cfg: &CampaignConfig, ctx: &RunContext, runner: &mut UnitRunner) -> Result<Report> {
    let kc = cfg.kernel_check.clone().unwrap_or_default();
    let KernelCheckSection {
        times,
        probes,
        tolerance,
        cross_samples,
        cross_tolerance,
    } = &kc;
    if times.is_empty() {
        return Err(Error::Config("kernel_check.times is empty".into()));
    }
    if let Some(t) = times.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
        return Err(Error::Domain(format!("kernel time t = {t} must be positive")));
    }
    let mut report = Report::default();
    let check = |report: &mut Report, name: &str, t: Option<f64>, value: f64, tol: f64| {
        let mut row = ctx.row(name, value);
        row.r = t;
        report.rows.push(row);
        if !(value <= tol) {
            report
                .violations
                .push(format!("{name} at t={t:?}: {value:e} exceeds {tol:e}"));
        }
    };
    for &t in times {
        let Some(rep) = runner.unit::<KernelIdentityReport, _>(&format!("t={t}"), || {
            check_kernel_identities(t, *probes)
        })?
        else {
            return Ok(report);
        };
        check(&mut report, "mass_error", Some(t), rep.mass_error, *tolerance);
        check(&mut report, "semigroup_error", Some(t), rep.semigroup_error, *tolerance);
        check(&mut report, "symmetry_error", Some(t), rep.symmetry_error, *tolerance);
    }
    let Some(sg) = runner.unit::<f64, _>("semigroup=0.01,0.02", || semigroup_error(0.01, 0.02, *probes))?
    else {
        return Ok(report);
    };
    check(&mut report, "semigroup_error[s=0.01;t=0.02]", None, sg, *tolerance);
    let seed = ctx.seed_master;
    let Some((d, _, _)) = runner.unit::<(f64, f64, f64), _>("cross", || {
        cross_representation_error(*cross_samples, seed)
    })?
    else {
        return Ok(report);
    };
    let name = statistic_name("cross_representation_error", &[("samples", cross_samples.to_string())]);
    check(&mut report, &name, None, d, *cross_tolerance);
    Ok(report)
}

#[derive(Debug, Serialize, Deserialize)]
struct ShardCounts {
    trials: u64,
    /// `hits[mode][lambda]`
    hits: Vec<Vec<u64>>,
}

fn smallball(cfg: &CampaignConfig, ctx: &RunContext, runner: &mut UnitRunner) -> Result<Report> {
    let sb = section(&cfg.smallball, "smallball")?;
    let sigma = cfg.coefficient()?;
    if sb.lambdas.is_empty() {
        return Err(Error::Config("smallball.lambdas is empty".into()));
    }
    if let Some(l) = sb.lambdas.iter().find(|l| !(**l >= 0.0 && l.is_finite())) {
        return Err(Error::Domain(format!("lambda = {l} must be finite and >= 0")));
    }
    if sb.modes.is_empty() || sb.trials == 0 {
        return Err(Error::Config("smallball needs at least one mode and one trial".into()));
    }
    let budget = cfg.budget.budget();
    let ppa = cfg.grid.points_per_axis;
    let window = ParabolicWindow::new(sb.r)?;
    let grid = window_grid(&window, ppa, &budget)?;
    let stream = streams::SMALL_BALL;
    let seed = ctx.seed_master;

    let key_for = |lambda, mode| SmallBallKey {
        window,
        lambda,
        mode,
        grid,
        coefficient: sigma.tag().to_string(),
    };
    let mut estimates: Vec<Vec<SmallBallEstimate>> = sb
        .modes
        .iter()
        .map(|&m| sb.lambdas.iter().map(|&l| SmallBallEstimate::empty(key_for(l, m))).collect())
        .collect();
    let mut report = Report::default();
    for range in shards(sb.trials, sb.shard_size)? {
        let unit = format!("trials={}-{}", range.start, range.end);
        let counts = runner.unit::<ShardCounts, _>(&unit, || {
            let sups = sample_window_sups(&sigma, &window, &grid, seed, stream, range.clone())?;
            let hits = sb
                .modes
                .iter()
                .map(|&m| {
                    tally_sups(&sups, key_for, &sb.lambdas, m, window.r())
                        .iter()
                        .map(|e| e.hits)
                        .collect()
                })
                .collect();
            Ok(ShardCounts {
                trials: sups.len() as u64,
                hits,
            })
        })?;
        let Some(counts) = counts else { break };
        for (per_mode, hits) in estimates.iter_mut().zip(&counts.hits) {
            for (est, &h) in per_mode.iter_mut().zip(hits) {
                let shard = SmallBallEstimate {
                    key: est.key.clone(),
                    trials: counts.trials,
                    hits: h,
                };
                *est = merge_estimates(est, &shard)?;
            }
        }
    }
    eprintln!("smallball: r={} grid nx={} nt={}", window.r(), grid.nx, grid.nt);

    let tag = resolution_tag(ppa);
    for (mode, per_mode) in sb.modes.iter().zip(&estimates) {
        for e in per_mode {
            let name = statistic_name(
                &format!("p_{}", mode.name()),
                &[
                    ("lambda", e.lambda().to_string()),
                    ("hits", e.hits.to_string()),
                    ("trials", e.trials.to_string()),
                ],
            );
            report.rows.push(
                ctx.row(name, e.p_hat())
                    .ci(e.ci())
                    .scale(None, window.r())
                    .stream(stream)
                    .resolution(tag.clone()),
            );
        }
    }
    let exceedance = sb.modes.iter().position(|m| *m == TailMode::Exceedance);
    if let (true, Some(i)) = (sb.fit, exceedance) {
        let counts: Vec<_> = estimates[i].iter().map(|e| (e.lambda(), e.hits, e.trials)).collect();
        fit_rows(&mut report, ctx, &counts, Some(window.r()), Some(&tag));
    }
    if estimates[0][0].trials < sb.trials {
        report.partial.push(format!(
            "{} of {} trials completed",
            estimates[0][0].trials, sb.trials
        ));
    }
    Ok(report)
}

fn fit_rows(
    report: &mut Report,
    ctx: &RunContext,
    counts: &[(f64, u64, u64)],
    r: Option<f64>,
    resolution: Option<&str>,
) {
    let place = |mut row: ResultRow| {
        row.r = r;
        row.resolution = resolution.map(str::to_string);
        row
    };
    match fit_tail_counts(counts) {
        Ok(fit) => {
            let TailFit {
                slope,
                slope_se,
                intercept,
                intercept_se,
                ..
            } = fit;
            let violations: Vec<f64> = counts
                .iter()
                .filter(|c| fit.misses_band(c.0, c.1, c.2))
                .map(|c| c.0)
                .collect();
            report.rows.push(place(
                ctx.row("tail_slope", slope)
                    .ci((slope - Z95 * slope_se, slope + Z95 * slope_se)),
            ));
            report.rows.push(place(
                ctx.row("tail_intercept", intercept)
                    .ci((intercept - Z95 * intercept_se, intercept + Z95 * intercept_se)),
            ));
            report
                .rows
                .push(place(ctx.row("tail_fit_points", fit.lambdas.len() as f64)));
            report
                .rows
                .push(place(ctx.row("tail_band_violations", violations.len() as f64)));
            report.rows.push(place(ctx.row(
                "tail_max_standardized_residual",
                fit.max_standardized_residual(),
            )));
            for l in &fit.excluded {
                let name = statistic_name("tail_fit_excluded", &[("lambda", l.to_string())]);
                report.rows.push(place(ctx.row(name, *l)));
            }
            if !(slope < 0.0) {
                report
                    .violations
                    .push(format!("tail fit slope {slope} is not negative"));
            }
        }
        Err(e) => {
            let name = statistic_name("tail_fit_refused", &[("reason", e.to_string())]);
            report.rows.push(place(ctx.row(name, f64::NAN)));
        }
    }
}

fn tailfit(cfg: &CampaignConfig, ctx: &RunContext) -> Result<Report> {
    let tf = section(&cfg.tailfit, "tailfit")?;
    let rows = read_rows_from(&tf.input)?;
    // (r, resolution) -> counts
    let mut groups: BTreeMap<(String, Option<String>), (Option<f64>, Vec<(f64, u64, u64)>)> = BTreeMap::new();
    for row in &rows {
        let (name, params) = parse_statistic(&row.statistic);
        if name != "p_exceedance" {
            continue;
        }
        let get = |k: &str| {
            params
                .iter()
                .find(|(key, _)| *key == k)
                .map(|(_, v)| *v)
                .ok_or_else(|| Error::Format(format!("{}: missing {k}", row.statistic)))
        };
        let parse_err = |_| Error::Format(format!("{}: malformed parameters", row.statistic));
        let lambda: f64 = get("lambda")?.parse().map_err(|_| parse_err(()))?;
        let hits: u64 = get("hits")?.parse().map_err(|_| parse_err(()))?;
        let trials: u64 = get("trials")?.parse().map_err(|_| parse_err(()))?;
        let key = (format!("{:?}", row.r), row.resolution.clone());
        let entry = groups.entry(key).or_insert((row.r, Vec::new()));
        entry.1.push((lambda, hits, trials));
    }
    if groups.is_empty() {
        return Err(Error::Config(format!(
            "{} holds no exceedance estimates",
            tf.input.display()
        )));
    }
    let mut report = Report::default();
    for ((_, resolution), (r, counts)) in groups {
        fit_rows(&mut report, ctx, &counts, r, resolution.as_deref());
    }
    Ok(report)
}

const COUPLING_EVENTS: [&str; 3] = ["truncation_diverged", "fn_failed", "sup_d_exceeds"];

fn couple(cfg: &CampaignConfig, ctx: &RunContext, runner: &mut UnitRunner) -> Result<Report> {
    let cs = section(&cfg.couple, "couple")?;
    let sigma = cfg.coefficient()?;
    if sigma.sigma0() == 0.0 {
        return Err(Error::Precondition(format!(
            "{}: the coupling needs sigma(0) != 0",
            sigma.tag()
        )));
    }
    let params = cfg.scales()?;
    let budget: Budget = cfg.budget.budget();
    let ppa = cfg.grid.points_per_axis;
    let tag = resolution_tag(ppa);
    let options = CouplingOptions {
        epsilon: params.epsilon,
        divergence_tol: cs.divergence_tol,
    };
    let seed = ctx.seed_master;
    let mut report = Report::default();
    // per n: (r, counts per event)
    let mut per_scale: Vec<(u32, f64, [(u64, u64); 3])> = Vec::new();
    'scales: for n in params.indices() {
        let window = ParabolicWindow::new(params.scale(n))?;
        let r = window.r();
        let grid = match window_grid(&window, ppa, &budget) {
            Ok(g) => g,
            Err(Error::Resource { what, requested, cap }) => {
                let reason = format!("{what}: {requested} requested, cap {cap}");
                report.rows.push(
                    ctx.row(statistic_name("scale_failed", &[("reason", reason.clone())]), f64::NAN)
                        .scale(Some(n), r)
                        .resolution(tag.clone()),
                );
                report.partial.push(format!("n={n}: {reason}"));
                continue;
            }
            Err(e) => return Err(e),
        };
        eprintln!("couple: n={n} r={r} grid nx={} nt={}", grid.nx, grid.nt);
        let stream = streams::for_scale(streams::COUPLING, n);
        let mut outcomes: Vec<ReplicateOutcome> = Vec::new();
        for range in shards(cs.replicates, cs.shard_size)? {
            let unit = format!("n={n};replicates={}-{}", range.start, range.end);
            let got = runner.unit::<Vec<ReplicateOutcome>, _>(&unit, || {
                coupling_replicates(&sigma, &params, n, range.clone(), ppa, seed, &options, &budget)
            })?;
            match got {
                Some(batch) => outcomes.extend(batch),
                None => {
                    if !outcomes.is_empty() {
                        report.partial.push(format!("n={n}: {} of {} replicates", outcomes.len(), cs.replicates));
                    }
                    emit_coupling_scale(&mut report, ctx, n, r, &tag, stream, &outcomes, &mut per_scale);
                    break 'scales;
                }
            }
        }
        emit_coupling_scale(&mut report, ctx, n, r, &tag, stream, &outcomes, &mut per_scale);
    }

    for (e, name) in COUPLING_EVENTS.iter().enumerate() {
        let counts: Vec<(u64, u64)> = per_scale.iter().map(|s| s.2[e]).collect();
        let flag = nonincreasing_one_sided(&counts);
        report.rows.push(ctx.row(
            statistic_name("nonincreasing", &[("event", name.to_string())]),
            if flag { 1.0 } else { 0.0 },
        ));
        let exponent = 1.0 - params.epsilon;
        let points: Vec<(f64, u64, u64)> = per_scale
            .iter()
            .map(|s| (s.1.powf(-exponent), s.2[e].0, s.2[e].1))
            .collect();
        match fit_log_linear(&points) {
            Ok(line) => {
                report.rows.push(ctx.row(
                    statistic_name("envelope_log_k1", &[("event", name.to_string())]),
                    line.intercept,
                ));
                report.rows.push(ctx.row(
                    statistic_name("envelope_slope", &[("event", name.to_string())]),
                    line.slope,
                ));
            }
            Err(err) => report.rows.push(ctx.row(
                statistic_name(
                    "envelope_fit_refused",
                    &[("event", name.to_string()), ("reason", err.to_string())],
                ),
                f64::NAN,
            )),
        }
    }
    Ok(report)
}

#[allow(clippy::too_many_arguments)]
fn emit_coupling_scale(
    report: &mut Report,
    ctx: &RunContext,
    n: u32,
    r: f64,
    tag: &str,
    stream: u32,
    outcomes: &[ReplicateOutcome],
    per_scale: &mut Vec<(u32, f64, [(u64, u64); 3])>,
) {
    if outcomes.is_empty() {
        return;
    }
    let mut worst_identity: f64 = 0.0;
    for o in outcomes {
        let base = |name: &str, value: f64| {
            ctx.row(name, value)
                .scale(Some(n), r)
                .replicate(o.replicate)
                .stream(stream)
                .resolution(tag)
        };
        let flag = |b: bool| if b { 1.0 } else { 0.0 };
        let oc = &o.outcome;
        report.rows.push(base("sup_d", oc.sup_d));
        report.rows.push(base(
            "tau_index",
            o.tau_index.map(|t| t as f64).unwrap_or(f64::NAN),
        ));
        report.rows.push(base("truncation_gap", oc.truncation_gap));
        report.rows.push(base("frozen_identity_error", oc.frozen_identity_error));
        report.rows.push(base("truncation_diverged", flag(oc.truncation_diverged)));
        report.rows.push(base("fn_failed", flag(oc.fn_failed)));
        report.rows.push(base("sup_d_exceeds", flag(oc.sup_d_exceeds)));
        worst_identity = worst_identity.max(oc.frozen_identity_error);
    }
    let trials = outcomes.len() as u64;
    let count = |f: fn(&ReplicateOutcome) -> bool| outcomes.iter().filter(|o| f(o)).count() as u64;
    let hits = [
        count(|o| o.outcome.truncation_diverged),
        count(|o| o.outcome.fn_failed),
        count(|o| o.outcome.sup_d_exceeds),
    ];
    for (name, &h) in COUPLING_EVENTS.iter().zip(&hits) {
        let stat = statistic_name(
            &format!("freq_{name}"),
            &[("hits", h.to_string()), ("trials", trials.to_string())],
        );
        report.rows.push(
            ctx.row(stat, h as f64 / trials as f64)
                .ci(wilson95(h, trials))
                .scale(Some(n), r)
                .stream(stream)
                .resolution(tag),
        );
    }
    report.rows.push(
        ctx.row("max_frozen_identity_error", worst_identity)
            .scale(Some(n), r)
            .resolution(tag),
    );
    if !(worst_identity <= 1e-12) {
        report.violations.push(format!(
            "n={n}: frozen field differs from sigma(0) v by {worst_identity:e} (relative)"
        ));
    }
    per_scale.push((n, r, [0, 1, 2].map(|i| (hits[i], trials))));
}

fn chung_scan(cfg: &CampaignConfig, ctx: &RunContext, runner: &mut UnitRunner) -> Result<Report> {
    let cs = section(&cfg.chung_scan, "chung_scan")?;
    let sigma = cfg.coefficient()?;
    if sigma.sigma0() == 0.0 {
        return Err(Error::Precondition(format!(
            "{}: the scan needs sigma(0) != 0",
            sigma.tag()
        )));
    }
    if cs.replicates == 0 {
        return Err(Error::Config("chung_scan.replicates must be positive".into()));
    }
    let params = cfg.scales()?;
    let budget = cfg.budget.budget();
    let seed = ctx.seed_master;
    let mut report = Report::default();
    'resolutions: for res in cfg.grid.resolutions() {
        let tag = resolution_tag(res);
        let mut medians: Vec<f64> = Vec::new();
        for n in params.indices() {
            let window = ParabolicWindow::new(params.scale(n))?;
            let r = window.r();
            let grid = match window_grid(&window, res, &budget) {
                Ok(g) => g,
                Err(Error::Resource { what, requested, cap }) => {
                    let reason = format!("{what}: {requested} requested, cap {cap}");
                    report.rows.push(
                        ctx.row(statistic_name("scale_failed", &[("reason", reason.clone())]), f64::NAN)
                            .scale(Some(n), r)
                            .resolution(tag.clone()),
                    );
                    report.partial.push(format!("n={n} {tag}: {reason}"));
                    continue;
                }
                Err(e) => return Err(e),
            };
            eprintln!("chung-scan: {tag} n={n} r={r} grid nx={} nt={}", grid.nx, grid.nt);
            let stream = streams::for_scale(streams::CHUNG_SCAN, n);
            let mut stats: Vec<f64> = Vec::new();
            let mut stopped = false;
            for range in shards(cs.replicates, cs.shard_size)? {
                let unit = format!("{tag};n={n};replicates={}-{}", range.start, range.end);
                let got = runner.unit::<Vec<f64>, _>(&unit, || {
                    let shard = ScanConfig {
                        params,
                        replicates: range.clone(),
                        resolutions: vec![res],
                        master_seed: seed,
                        zero_noise: cs.zero_noise,
                    };
                    Ok(scan_scale(&sigma, &shard, n, res, &budget)?.statistics)
                })?;
                match got {
                    Some(batch) => stats.extend(batch),
                    None => {
                        stopped = true;
                        break;
                    }
                }
            }
            if let Some(summary) = Summary::of(&stats) {
                for (i, s) in stats.iter().enumerate() {
                    report.rows.push(
                        ctx.row("S_n", *s)
                            .scale(Some(n), r)
                            .replicate(i as u64)
                            .stream(stream)
                            .resolution(tag.clone()),
                    );
                }
                medians.push(summary.median);
                let running = medians.iter().cloned().fold(f64::INFINITY, f64::min);
                let per_n = [
                    ("normalizer", window.normalizer()),
                    ("S_n_min", summary.min),
                    ("S_n_q1", summary.q1),
                    ("S_n_median", summary.median),
                    ("S_n_q3", summary.q3),
                    ("S_n_max", summary.max),
                    ("running_min_median", running),
                    ("replicates", stats.len() as f64),
                ];
                for (name, v) in per_n {
                    report
                        .rows
                        .push(ctx.row(name, v).scale(Some(n), r).resolution(tag.clone()));
                }
            }
            if stopped {
                if !stats.is_empty() {
                    report
                        .partial
                        .push(format!("n={n} {tag}: {} of {} replicates", stats.len(), cs.replicates));
                }
                break 'resolutions;
            }
        }
        if medians.len() >= 2 {
            let hi = medians.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lo = medians.iter().cloned().fold(f64::INFINITY, f64::min);
            report
                .rows
                .push(ctx.row("median_spread", hi / lo).resolution(tag.clone()));
        }
    }
    Ok(report)
}

fn bm_oracle(cfg: &CampaignConfig, ctx: &RunContext, runner: &mut UnitRunner) -> Result<Report> {
    let bm = section(&cfg.bm_oracle, "bm_oracle")?;
    if bm.epsilons.is_empty() {
        return Err(Error::Config("bm_oracle.epsilons is empty".into()));
    }
    let mut eps = bm.epsilons.clone();
    eps.sort_by(f64::total_cmp);
    let mut report = Report::default();
    let mut values = Vec::new();
    for &e in &eps {
        let v = bm_smallball_oracle(e)?;
        values.push(v);
        let mut row = ctx.row("bm_series", v);
        row.r = Some(e);
        report.rows.push(row);
    }
    if !bm.monte_carlo {
        return Ok(report);
    }
    let seed = ctx.seed_master;
    let mut total: Option<BmSmallBallMc> = None;
    for range in shards(bm.paths, bm.shard_size)? {
        let unit = format!("paths={}-{}", range.start, range.end);
        let Some(part) = runner.unit::<BmSmallBallMc, _>(&unit, || {
            bm_smallball_mc(&eps, range.clone(), bm.steps, seed)
        })?
        else {
            break;
        };
        total = Some(match total {
            None => part,
            Some(t) => t.merge(&part)?,
        });
    }
    let Some(mc) = total else { return Ok(report) };
    if mc.paths < bm.paths {
        report
            .partial
            .push(format!("{} of {} paths simulated", mc.paths, bm.paths));
    }
    for (i, &e) in eps.iter().enumerate() {
        let params = |h: u64| {
            vec![
                ("hits", h.to_string()),
                ("paths", mc.paths.to_string()),
                ("steps", mc.steps.to_string()),
            ]
        };
        let place = |mut row: ResultRow| {
            row.r = Some(e);
            row.stream = Some(streams::BROWNIAN);
            row
        };
        report.rows.push(place(
            ctx.row(statistic_name("bm_mc_fine", &params(mc.hits_fine[i])), mc.p_fine(i))
                .ci(mc.ci_fine(i)),
        ));
        report.rows.push(place(
            ctx.row(statistic_name("bm_mc_coarse", &params(mc.hits_coarse[i])), mc.p_coarse(i))
                .ci(wilson95(mc.hits_coarse[i], mc.paths)),
        ));
        report.rows.push(place(ctx.row("bm_allowance", mc.allowance(i))));
        let ok = mc.consistent_with_oracle(i)?;
        report
            .rows
            .push(place(ctx.row("bm_consistent", if ok { 1.0 } else { 0.0 })));
        if !ok {
            report.violations.push(format!(
                "eps={e}: Monte Carlo {} (CI {:?}, allowance {}) misses series value {}",
                mc.p_fine(i),
                mc.ci_fine(i),
                mc.allowance(i),
                values[i]
            ));
        }
    }
    Ok(report)
}
