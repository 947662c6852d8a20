//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use relapse_detect::config::PipelineConfig;
use relapse_detect::dataset::{
    select_cell, standardize_unit_norm, ExperimentCell, Resolution, Scaler, Segment, StepUse,
};
use relapse_detect::eval::{pr_auc, roc_auc, GridReport, REFERENCE_NOTE};
use relapse_detect::features::spectral::{welch_psd, WelchConfig};
use relapse_detect::features::{time_encoding, Presence};
use relapse_detect::iforest::{avg_path_length_c, fit_rows, ForestModel, ForestParams};
use relapse_detect::pipeline::{evaluate_cell, run_cell, synthetic_cohort, BaseMatrices, Cohort};
use relapse_detect::preprocess::{hampel_filter, preprocess_streams, HampelConfig};
use relapse_detect::synthgen::{generate_subject, inject_gap, Channel, GenConfig};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

struct E2e {
    cohort: Cohort,
    base: BaseMatrices,
    cfg: PipelineConfig,
    scores: BTreeMap<ExperimentCell, f64>,
    headline_time: Duration,
}

fn cell(seg: Segment, steps: StepUse, res: Resolution) -> ExperimentCell {
    ExperimentCell::new(seg, steps, res)
}

/// Full synthetic run: generation through evaluation of the headline cell,
/// then the cells needed for the ordering checks.
fn run_e2e() -> relapse_detect::Result<E2e> {
    let cfg = PipelineConfig::default();
    let started = Instant::now();
    let (cohort, _) = synthetic_cohort(&cfg)?;
    let base = BaseMatrices::build(&cohort, &cfg)?;
    let headline = cell(Segment::Sleep, StepUse::WithStep, Resolution::FiveMin);
    let mut scores = BTreeMap::new();
    let awake5 = cell(Segment::Awake, StepUse::WithStep, Resolution::FiveMin);
    let awake_run = run_cell(&base, awake5, &cfg)?;
    let run = run_cell(&base, headline, &cfg)?;
    let r = evaluate_cell(headline, &run.day_scores, Some(&awake_run.day_scores), &cohort.days, &cfg)?;
    scores.insert(headline, r.aggregate_hmean);
    let headline_time = started.elapsed();
    let r = evaluate_cell(awake5, &awake_run.day_scores, None, &cohort.days, &cfg)?;
    scores.insert(awake5, r.aggregate_hmean);
    for c in [
        cell(Segment::Sleep, StepUse::WithStep, Resolution::SixtyMin),
        cell(Segment::Sleep, StepUse::WithoutStep, Resolution::FiveMin),
        cell(Segment::Awake, StepUse::WithoutStep, Resolution::FiveMin),
        cell(Segment::Sleep, StepUse::WithoutStep, Resolution::SixtyMin),
    ] {
        let awake = run_cell(&base, c.with_segment(Segment::Awake), &cfg)?;
        let run = if c.segment == Segment::Awake { awake.clone() } else { run_cell(&base, c, &cfg)? };
        let r = evaluate_cell(c, &run.day_scores, Some(&awake.day_scores), &cohort.days, &cfg)?;
        scores.insert(c, r.aggregate_hmean);
    }
    Ok(E2e {
        cohort,
        base,
        cfg,
        scores,
        headline_time,
    })
}

fn crit_reference_only() -> Outcome {
    // The clinical reference is printed as a footnote, never compared.
    let g = GridReport::new(0, Vec::new());
    let table = g.render_table();
    let ok = table.contains(REFERENCE_NOTE) && REFERENCE_NOTE.contains("64.5 %");
    outcome(
        ok,
        "clinical-data figures are not reproducible on synthetic data; the 64.5 % reference appears only as a report footnote",
    )
}

fn crit_e2e(e: &Option<E2e>, err: &Option<String>) -> Outcome {
    let Some(e) = e else {
        return outcome(false, format!("pipeline error: {}", err.as_deref().unwrap_or("?")));
    };
    let c = cell(Segment::Sleep, StepUse::WithStep, Resolution::FiveMin);
    let v = e.scores[&c];
    let secs = e.headline_time.as_secs_f64();
    outcome(
        v >= 0.75 && secs < 300.0,
        format!("sleep-with_step-5min aggregate hmean {v:.4} (>= 0.75), runtime {secs:.1} s (< 300 s)"),
    )
}

fn crit_ordering(e: &Option<E2e>) -> Outcome {
    let Some(e) = e else {
        return outcome(false, "no end-to-end run");
    };
    let g = |s, st, r| e.scores[&cell(s, st, r)];
    let mut ok = true;
    let mut parts = Vec::new();
    for st in [StepUse::WithStep, StepUse::WithoutStep] {
        let s5 = g(Segment::Sleep, st, Resolution::FiveMin);
        let a5 = g(Segment::Awake, st, Resolution::FiveMin);
        let s60 = g(Segment::Sleep, st, Resolution::SixtyMin);
        ok &= s5 > a5 && s5 > s60;
        let tag = if st == StepUse::WithStep { "+step" } else { "no step" };
        parts.push(format!("{tag}: sleep5 {s5:.4} > awake5 {a5:.4}, sleep5 > sleep60 {s60:.4}"));
    }
    outcome(ok, parts.join("; "))
}

fn pair_oracle(s: &[f64], l: &[bool]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for i in 0..s.len() {
        for j in 0..s.len() {
            if l[i] && !l[j] {
                pairs += 1.0;
                wins += if s[i] > s[j] {
                    1.0
                } else if s[i] == s[j] {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    wins / pairs
}

/// Average precision by sweeping every distinct threshold from the top.
fn sweep_oracle(s: &[f64], l: &[bool]) -> f64 {
    let mut thresholds: Vec<f64> = s.to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let n_pos = l.iter().filter(|&&b| b).count() as f64;
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    for t in thresholds {
        let tp = s.iter().zip(l).filter(|(v, &b)| **v >= t && b).count() as f64;
        let predicted = s.iter().filter(|v| **v >= t).count() as f64;
        let recall = tp / n_pos;
        ap += (recall - prev_recall) * (tp / predicted);
        prev_recall = recall;
    }
    ap
}

fn crit_auc_oracles() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    while checked < 200 {
        let n = rng.random_range(2..=50);
        let ties = rng.random_bool(0.5);
        let s: Vec<f64> = (0..n)
            .map(|_| if ties { rng.random_range(0..5) as f64 } else { rng.random() })
            .collect();
        let l: Vec<bool> = (0..n).map(|_| rng.random_bool(0.3)).collect();
        if !l.iter().any(|&b| b) || l.iter().all(|&b| b) {
            continue;
        }
        checked += 1;
        worst = worst.max((roc_auc(&s, &l).unwrap() - pair_oracle(&s, &l)).abs());
        worst = worst.max((pr_auc(&s, &l).unwrap() - sweep_oracle(&s, &l)).abs());
    }
    let secs = started.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-12 && secs < 5.0,
        format!("200 instances, max deviation {worst:.1e} (<= 1e-12), {secs:.3} s (< 5 s)"),
    )
}

fn crit_iforest() -> Outcome {
    let mut wins = 0;
    let mut in_range = true;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut data: Vec<Vec<f64>> = (0..255).map(|_| vec![0.1 * (rng.random::<f64>() - 0.5)]).collect();
        data.push(vec![10.0]);
        let m = fit_rows(&data, vec!["x".into()], ForestParams { n_trees: 100, psi: 64, seed }).unwrap();
        let scores = m.score_rows(&data).unwrap();
        in_range &= scores.iter().all(|&s| s > 0.0 && s <= 1.0);
        let top = scores[..255].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if scores[255] > top {
            wins += 1;
        }
    }
    // Every tree is a single leaf of size psi, so E[h] = c(psi).
    let flat = vec![vec![1.0, 2.0]; 300];
    let m = fit_rows(&flat, vec!["a".into(), "b".into()], ForestParams { n_trees: 50, psi: 256, seed: 1 }).unwrap();
    let h = m.expected_path_length(&[1.0, 2.0]).unwrap();
    let s = m.score(&[1.0, 2.0]).unwrap();
    let fixed = (h - avg_path_length_c(256)).abs() < 1e-12 && (s - 0.5).abs() <= 1e-9;
    outcome(
        wins >= 95 && in_range && fixed,
        format!("outlier ranked top in {wins}/100 seeds (>= 95); all scores in (0,1]: {in_range}; E[h]=c(psi) gives {s}"),
    )
}

fn crit_welch() -> Outcome {
    let fs = 4.0;
    let n = 1024;
    let seg = 256;
    let k = 32;
    let f0 = k as f64 * fs / seg as f64;
    let amp = 3.0;
    let x: Vec<f64> = (0..n)
        .map(|i| amp * (std::f64::consts::TAU * f0 * i as f64 / fs).sin())
        .collect();
    let cfg = WelchConfig {
        segment_len: seg,
        overlap: 0.5,
    };
    let psd = welch_psd(&x, fs, cfg);
    let peak_bin = psd
        .power
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap();
    let rel = (psd.total_power() - amp * amp / 2.0).abs() / (amp * amp / 2.0);

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let noise: Vec<f64> = (0..1500).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect();
    let mean = noise.iter().sum::<f64>() / 1500.0;
    let var = noise.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 1500.0;
    let wn = welch_psd(&noise, 1.0, cfg).total_power();
    let rel_noise = (wn - var).abs() / var;
    outcome(
        peak_bin == k && rel < 0.05 && rel_noise < 0.10,
        format!(
            "peak bin {peak_bin} (expected {k}), sinusoid power error {:.2} % (< 5 %), white noise error {:.2} % (< 10 %)",
            100.0 * rel,
            100.0 * rel_noise
        ),
    )
}

fn crit_hampel() -> Outcome {
    let spike = hampel_filter(&[1.0, 1.0, 1.0, 100.0, 1.0, 1.0, 1.0], &HampelConfig::new(3));
    let flat = [5.0; 9];
    let pass = hampel_filter(&flat, &HampelConfig::new(3));
    let examples = spike.values == vec![1.0; 7] && pass.values == flat.to_vec() && pass.replaced == 0;

    let gen = GenConfig {
        n_subjects: 1,
        n_days: 5,
        missing_fraction: 0.0,
        seed: 5,
        ..GenConfig::default()
    };
    let cfg = PipelineConfig::default();
    let (mut streams, _) = generate_subject(&gen, 0).unwrap();
    let t_short = streams.rr[0].t + 1.5 * 86_400.0;
    let t_long = streams.rr[0].t + 3.25 * 86_400.0;
    inject_gap(&mut streams, Channel::Rr, t_short, 600.0).unwrap();
    inject_gap(&mut streams, Channel::Rr, t_long, 3.0 * 3600.0).unwrap();
    let (clean, _) = preprocess_streams(&streams, &cfg.hampel, None, None).unwrap();
    let frac_missing = |t0: f64, d: f64| {
        let w: Vec<_> = clean.rr.iter().filter(|s| s.t >= t0 && s.t < t0 + d).collect();
        w.iter().filter(|s| s.rr.is_nan()).count() as f64 / w.len() as f64
    };
    let short = frac_missing(t_short, 600.0);
    let long = frac_missing(t_long, 3.0 * 3600.0);
    // Away from its edges the long gap stays empty.
    let core = frac_missing(t_long + 1200.0, 3.0 * 3600.0 - 2400.0);
    outcome(
        examples && short == 0.0 && long > 0.75 && core == 1.0,
        format!(
            "spike and pass-through examples exact: {examples}; 10-min gap missing after cleaning {:.0} %; 3-h gap {:.0} % (core {:.0} %)",
            100.0 * short,
            100.0 * long,
            100.0 * core
        ),
    )
}

fn run_cli(out: &Path, config: &Path, args: &[&str]) -> i32 {
    let mut full = vec![
        "relapse-detect".to_string(),
        "--config".into(),
        config.display().to_string(),
        "--out".into(),
        out.display().to_string(),
    ];
    full.extend(args.iter().map(|s| s.to_string()));
    relapse_detect::cli::run(full)
}

fn crit_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("small.toml");
    std::fs::write(
        &config,
        "seed = 7\n[generator]\nn_subjects = 2\nn_days = 10\nrelapse_fraction = 0.2\n[model]\nn_trees = 50\n",
    )
    .unwrap();
    let mut reports = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        for step in [
            &["generate"][..],
            &["preprocess"],
            &["extract"],
            &["experiment"],
            &["train", "--cell", "sleep-with_step-5min"],
            &["score", "--cell", "sleep-with_step-5min"],
            &["evaluate", "--cell", "sleep-with_step-5min"],
        ] {
            let code = run_cli(&out, &config, step);
            if code != 0 {
                return outcome(false, format!("run {run}: {:?} exited with {code}", step));
            }
        }
        let mut files = BTreeMap::new();
        for rel in [
            "grid_report.json",
            "grid_report.txt",
            "cells/sleep-with_step-5min/report_sleep-with_step-5min.json",
            "cells/sleep-with_step-5min/report_sleep-with_step-5min.txt",
            "cells/sleep-with_step-5min/model_sleep-with_step-5min.json",
        ] {
            files.insert(rel, std::fs::read(out.join(rel)).unwrap());
        }
        reports.push(files);
    }
    let same = reports[0] == reports[1];
    outcome(
        same,
        format!("two CLI runs (generate through evaluate, seed 7): {} report files byte-identical: {same}", reports[0].len()),
    )
}

fn crit_invariants(e: &Option<E2e>) -> Outcome {
    let Some(e) = e else {
        return outcome(false, "no end-to-end run");
    };
    let mut checks = Vec::new();

    let mut worst_circle: f64 = 0.0;
    for i in 0..100_000 {
        let (s, c) = time_encoding(1.6e9 + i as f64 * 37.3, 3600 * (i % 5));
        worst_circle = worst_circle.max((s * s + c * c - 1.0).abs());
    }
    checks.push(("sin^2+cos^2=1", worst_circle <= 1e-12, format!("{worst_circle:.1e}")));

    let mut worst_frac: f64 = 0.0;
    for f in e.cohort.features.iter().filter(|f| f.presence.contains(Presence::SPECTRAL)) {
        worst_frac = worst_frac.max((f.lf_fraction + f.hf_fraction - 1.0).abs());
    }
    checks.push(("LF+HF fractions", worst_frac <= 1e-9, format!("{worst_frac:.1e}")));

    let headline = cell(Segment::Sleep, StepUse::WithStep, Resolution::FiveMin);
    let selected = select_cell(&e.base.five, headline, false).unwrap();
    let scaler = Scaler::fit(&selected, false).unwrap();
    let std = standardize_unit_norm(&selected, &scaler).unwrap();
    let worst_norm = std
        .rows
        .iter()
        .map(|r| r.values.iter().map(|v| v * v).sum::<f64>().sqrt())
        .filter(|n| *n > 0.0)
        .map(|n| (n - 1.0).abs())
        .fold(0.0, f64::max);
    checks.push(("unit-norm rows", worst_norm <= 1e-12, format!("{worst_norm:.1e}")));

    let mut partition_ok = true;
    for res in Resolution::ALL {
        for st in [StepUse::WithStep, StepUse::WithoutStep] {
            let n = |seg| select_cell(e.base.get(res), cell(seg, st, res), false).map_or(0, |m| m.rows.len());
            partition_ok &= n(Segment::Sleep) + n(Segment::Awake) == n(Segment::Aggregate);
        }
    }
    checks.push(("partition", partition_ok, String::new()));

    let mut worst_cons: f64 = 0.0;
    for c in 0..e.base.five.n_cols() {
        let vals: Vec<f64> = e.base.five.rows.iter().map(|r| r.values[c]).collect();
        let present: Vec<f64> = vals.iter().copied().filter(|v| !v.is_nan()).collect();
        if present.len() != vals.len() {
            continue; // Step columns are absent on most rows.
        }
        let a = present.iter().sum::<f64>() / present.len() as f64;
        let total: f64 = e.base.sixty.rows.iter().map(|r| r.weight as f64).sum();
        let b = e.base.sixty.rows.iter().map(|r| r.values[c] * r.weight as f64).sum::<f64>() / total;
        worst_cons = worst_cons.max((a - b).abs() / a.abs().max(1.0));
    }
    checks.push(("aggregation conservation", worst_cons <= 1e-9, format!("{worst_cons:.1e}")));

    let model = fit_rows(
        &std.rows.iter().take(5000).map(|r| r.values.clone()).collect::<Vec<_>>(),
        std.column_names.clone(),
        e.cfg.forest_params(),
    )
    .unwrap();
    let loaded = ForestModel::from_json(&model.to_json().unwrap()).unwrap();
    let worst_rt = std
        .rows
        .iter()
        .step_by(7)
        .map(|r| (model.score(&r.values).unwrap() - loaded.score(&r.values).unwrap()).abs())
        .fold(0.0, f64::max);
    checks.push(("model JSON round trip", worst_rt <= 1e-12, format!("{worst_rt:.1e}")));

    let ok = checks.iter().all(|c| c.1);
    let detail = checks
        .iter()
        .map(|(n, p, d)| format!("{n} {}{}", if *p { "ok" } else { "FAILED" }, if d.is_empty() { String::new() } else { format!(" ({d})") }))
        .collect::<Vec<_>>()
        .join(", ");
    outcome(ok, detail)
}

fn main() {
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    results.push(("reference figures not reproducible; substitute suite runs", crit_reference_only()));

    let (e2e, err) = match run_e2e() {
        Ok(e) => (Some(e), None),
        Err(e) => (None, Some(e.to_string())),
    };
    results.push(("end-to-end synthetic experiment", crit_e2e(&e2e, &err)));
    results.push(("qualitative ordering (sleep > awake, 5-min > 60-min)", crit_ordering(&e2e)));
    results.push(("AUC oracle equivalence", crit_auc_oracles()));
    results.push(("Isolation Forest sanity", crit_iforest()));
    results.push(("Welch PSD", crit_welch()));
    results.push(("Hampel filter and imputation quorum", crit_hampel()));
    results.push(("determinism", crit_determinism()));
    results.push(("invariant suite", crit_invariants(&e2e)));

    let mut failed = 0;
    for (i, (name, o)) in results.iter().enumerate() {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        if !o.pass {
            failed += 1;
        }
        println!("[{tag}] {}. {name}: {}", i + 1, o.detail);
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
