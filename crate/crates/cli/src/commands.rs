use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use rdr_core::analytics::{
    association_scan, histogram, logistic_attribution, spearman, summarize, CompositionTable,
    GroupMapping, LevelAssociation,
};
use rdr_core::estimator::{
    evaluate, evaluate_grid, ksample_train, train as fit_model, Mode, ScoreSet, SourceLabel,
    TrainConfig, TrainTrace, TrainedRatio,
};
use rdr_core::numerics::{RngState, SampleMatrix};
use rdr_core::synthetic::{oracle_table, sample, Scenario};
use serde_json::{json, Value};

use crate::args::{
    AttributeArgs, CompareArgs, EvalArgs, GridArgs, MethodArg, ScenarioArg, SynthArgs, TrainArgs,
};
use crate::config::{resolve_seed, RunConfig};
use crate::csvio::{csv_bytes, fmt_f64, parse_float, read_table, CsvDataset, ID_COLUMN};
use crate::error::{data, CliError};
use crate::manifest::{read_string, sha256_hex, sidecar, Recorder};

const DEFAULT_BINS: usize = 200;
const SCORE_RANGE: (f64, f64) = (0.0, 2.0);

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn sample_csv(m: &SampleMatrix) -> Vec<u8> {
    let names: Vec<String> = (0..m.cols()).map(|j| m.column_name(j)).collect();
    let headers: Vec<&str> = names.iter().map(String::as_str).collect();
    csv_bytes(&headers, (0..m.rows()).map(|i| m.row(i).iter().map(|&v| fmt_f64(v)).collect()))
}

fn trace_csv(trace: &TrainTrace) -> Vec<u8> {
    csv_bytes(
        &["epoch", "train_loss", "holdout_loss"],
        trace
            .train_loss
            .iter()
            .zip(&trace.holdout_loss)
            .enumerate()
            .map(|(e, (t, h))| vec![e.to_string(), fmt_f64(*t), fmt_f64(*h)]),
    )
}

fn scores_csv(sets: &[(&ScoreSet, Vec<String>)]) -> Vec<u8> {
    let mut rows = Vec::new();
    for (set, ids) in sets {
        for (id, s) in ids.iter().zip(&set.scores) {
            rows.push(vec![id.clone(), fmt_f64(*s), set.source_label.as_str().to_string()]);
        }
    }
    csv_bytes(&["id", "score", "source_label"], rows)
}

fn pretty(v: &Value) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("JSON value serializes");
    s.push('\n');
    s.into_bytes()
}

pub fn synth(a: SynthArgs, argv: &[String]) -> Result<Value, CliError> {
    let scenario = match a.scenario {
        ScenarioArg::GaussShift => {
            if a.case.is_some() {
                return Err(usage("--case applies only to --scenario beta-mixture"));
            }
            let delta = a.delta.ok_or_else(|| usage("--scenario gauss-shift requires --delta"))?;
            if !delta.is_finite() {
                return Err(usage("--delta must be finite"));
            }
            Scenario::gauss_shift(delta)
        }
        ScenarioArg::BetaMixture => {
            if a.delta.is_some() {
                return Err(usage("--delta applies only to --scenario gauss-shift"));
            }
            let case = a.case.ok_or_else(|| usage("--scenario beta-mixture requires --case"))?;
            Scenario::beta_mixture(case.into())
        }
    };
    if a.n_p == 0 || a.n_q == 0 {
        return Err(usage("--n-p and --n-q must be at least 1"));
    }
    if a.oracle_points < 2 {
        return Err(usage("--oracle-points must be at least 2"));
    }
    let seed = resolve_seed(a.seed, None)?;
    let dir = a.out_dir;
    let files = ["xp.csv", "xq.csv", "oracle.csv", "manifest.json"].map(|f| dir.join(f));
    let mut rec = Recorder::new("synth", argv, a.force, Some(dir.clone()));
    rec.check_free(&files)?;

    let (xp, xq) = sample(&scenario, a.n_p, a.n_q, &mut RngState::new(seed))?;
    let oracle = oracle_table(&scenario, a.oracle_points);
    rec.output(&files[0], &sample_csv(&xp))?;
    rec.output(&files[1], &sample_csv(&xq))?;
    rec.output(
        &files[2],
        &csv_bytes(
            &["x", "p", "q", "g", "r"],
            oracle
                .iter()
                .map(|o| [o.x, o.p, o.q, o.g, o.r].iter().map(|&v| fmt_f64(v)).collect()),
        ),
    )?;
    rec.finish(&files[3], Some(seed))?;
    Ok(json!({
        "command": "synth",
        "out_dir": dir.display().to_string(),
        "n_p": a.n_p,
        "n_q": a.n_q,
        "oracle_points": a.oracle_points,
        "seed": seed,
    }))
}

/// Reads a sample, recording its hash.
fn load_sample(rec: &mut Recorder, path: &Path) -> Result<(CsvDataset, String), CliError> {
    let bytes = rec.input(path)?;
    Ok((CsvDataset::read(path)?, sha256_hex(&bytes)))
}

fn train_any(samples: &[SampleMatrix], config: &TrainConfig) -> Result<(TrainedRatio, TrainTrace), CliError> {
    if config.mode == Mode::Ksample {
        let mut all = ksample_train(samples, config)?;
        Ok(all.swap_remove(0))
    } else {
        if samples.len() != 2 {
            return Err(usage("several --q samples need --mode ksample"));
        }
        Ok(fit_model(&samples[0], &samples[1], config)?)
    }
}

fn loss_summary(model: &TrainedRatio, trace: &TrainTrace) -> Value {
    let h = model.holdout;
    json!({
        "model_id": model.model_id(),
        "mode": model.mode.to_string(),
        "alpha": model.alpha,
        "loss": h.loss,
        "h2_raw": h.h2_raw,
        "h2_clipped": h.h2_clipped,
        "n_p": h.n_p,
        "n_q": h.n_q,
        "best_epoch": trace.best_epoch,
        "epochs": trace.train_loss.len(),
    })
}

pub fn train(a: TrainArgs, argv: &[String]) -> Result<Value, CliError> {
    let mut rec = Recorder::new("train", argv, a.force, None);
    if let Some(c) = &a.config {
        rec.input(c)?;
    }
    let (cfg, _) = RunConfig::load(a.config.as_deref())?;
    let mut tc = cfg.train_config();
    if let Some(m) = a.mode {
        tc.mode = m.into();
    }
    if let Some(al) = a.alpha {
        tc.alpha = al;
    }
    if let Some(e) = a.epochs {
        tc.epochs = e;
    }
    tc.seed = resolve_seed(a.seed, cfg.seed)?;
    let p = a.p.clone().or(cfg.p.clone()).ok_or_else(|| usage("--p is required"))?;
    let qs = if a.q.is_empty() { cfg.q.clone().unwrap_or_default() } else { a.q.clone() };
    if qs.is_empty() {
        return Err(usage("--q is required"));
    }
    let trace_path = a.trace.clone();
    let mut planned = vec![a.out_model.clone(), sidecar(&a.out_model)];
    planned.extend(trace_path.iter().cloned());
    rec.check_free(&planned)?;

    let mut samples = Vec::new();
    let mut hashes = Vec::new();
    for path in std::iter::once(&p).chain(&qs) {
        let (ds, h) = load_sample(&mut rec, path)?;
        samples.push(ds.data);
        hashes.push(h);
    }
    let (mut model, trace) = train_any(&samples, &tc)?;
    model.train_inputs = hashes;
    let mut doc = model.to_json();
    doc.push('\n');
    rec.output(&a.out_model, doc.as_bytes())?;
    if let Some(t) = &trace_path {
        rec.output(t, &trace_csv(&trace))?;
    }
    rec.finish(&sidecar(&a.out_model), Some(tc.seed))?;
    let mut out = loss_summary(&model, &trace);
    out["command"] = json!("train");
    Ok(out)
}

fn load_model(rec: &mut Recorder, path: &Path) -> Result<TrainedRatio, CliError> {
    rec.input(path)?;
    let text = read_string(path)?;
    TrainedRatio::from_json(&text).map_err(|e| data(format!("{}: {e}", path.display())))
}

pub fn eval(a: EvalArgs, argv: &[String]) -> Result<Value, CliError> {
    let mut rec = Recorder::new("eval", argv, a.force, None);
    rec.check_free(&[a.out.clone(), sidecar(&a.out)])?;
    let model = load_model(&mut rec, &a.model)?;
    let (ds, hash) = load_sample(&mut rec, &a.data)?;
    if model.train_inputs.contains(&hash) && !a.allow_train_eval {
        return Err(data(format!(
            "{} is one of the model's training files; pass --allow-train-eval to score it anyway",
            a.data.display()
        )));
    }
    let set = evaluate(&model, &ds.data, a.label.into())?;
    let ids: Vec<String> = (0..ds.rows()).map(|i| ds.id(i)).collect();
    rec.output(&a.out, &scores_csv(&[(&set, ids)]))?;
    rec.finish(&sidecar(&a.out), Some(model.seed))?;
    let (lo, hi) = set
        .scores
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &s| (l.min(s), h.max(s)));
    Ok(json!({
        "command": "eval",
        "model_id": set.model_id,
        "rows": set.len(),
        "source_label": set.source_label.as_str(),
        "min": if set.is_empty() { Value::Null } else { json!(lo) },
        "max": if set.is_empty() { Value::Null } else { json!(hi) },
    }))
}

pub fn grid(a: GridArgs, argv: &[String]) -> Result<Value, CliError> {
    let mut rec = Recorder::new("grid", argv, a.force, None);
    rec.check_free(&[a.out.clone(), sidecar(&a.out)])?;
    let model = load_model(&mut rec, &a.model)?;
    let (xs, scores) = evaluate_grid(&model, a.lo, a.hi, a.points)?;
    rec.output(
        &a.out,
        &csv_bytes(
            &["x", "score"],
            xs.iter().zip(&scores).map(|(x, s)| vec![fmt_f64(*x), fmt_f64(*s)]),
        ),
    )?;
    rec.finish(&sidecar(&a.out), Some(model.seed))?;
    Ok(json!({
        "command": "grid",
        "model_id": model.model_id(),
        "points": xs.len(),
        "lo": a.lo,
        "hi": a.hi,
    }))
}

const COMPARE_FILES: [&str; 7] = [
    "model.json",
    "scores.csv",
    "histogram.csv",
    "summary.csv",
    "loss.json",
    "trace.csv",
    "manifest.json",
];

pub fn compare(a: CompareArgs, argv: &[String]) -> Result<Value, CliError> {
    let dir = a.out_dir.clone();
    let mut rec = Recorder::new("compare", argv, a.force, Some(dir.clone()));
    let files: Vec<PathBuf> = COMPARE_FILES.iter().map(|f| dir.join(f)).collect();
    rec.check_free(&files)?;
    if let Some(c) = &a.config {
        rec.input(c)?;
    }
    let (cfg, _) = RunConfig::load(a.config.as_deref())?;
    let mut tc = cfg.train_config();
    tc.seed = resolve_seed(a.seed, cfg.seed)?;
    let p = a.p.clone().or(cfg.p.clone()).ok_or_else(|| usage("--p is required"))?;
    let q = match (&a.q, &cfg.q) {
        (Some(q), _) => q.clone(),
        (None, Some(qs)) if qs.len() == 1 => qs[0].clone(),
        (None, Some(_)) => return Err(usage("compare takes exactly one q sample")),
        (None, None) => return Err(usage("--q is required")),
    };
    let bins = a.bins.or(cfg.histogram_bins).unwrap_or(DEFAULT_BINS);
    if bins == 0 {
        return Err(usage("--bins must be at least 1"));
    }

    let (dp, hp) = load_sample(&mut rec, &p)?;
    let (dq, hq) = load_sample(&mut rec, &q)?;
    let (mut model, trace) = train_any(&[dp.data.clone(), dq.data.clone()], &tc)?;
    model.train_inputs = vec![hp, hq];

    // score the rows the selection step held out; all rows if there were none
    let held = |ds: &CsvDataset, rows: &[usize]| -> Vec<usize> {
        if rows.is_empty() {
            (0..ds.rows()).collect()
        } else {
            rows.to_vec()
        }
    };
    let rows_p = held(&dp, &trace.holdout_rows[0]);
    let rows_q = held(&dq, &trace.holdout_rows[1]);
    let sp = evaluate(&model, &dp.data.select_rows(&rows_p), SourceLabel::Real)?;
    let sq = evaluate(&model, &dq.data.select_rows(&rows_q), SourceLabel::Generated)?;
    let ids_p: Vec<String> = rows_p.iter().map(|&i| dp.id(i)).collect();
    let ids_q: Vec<String> = rows_q.iter().map(|&i| dq.id(i)).collect();

    let hist = histogram(&[sp.clone(), sq.clone()], bins, SCORE_RANGE)?;
    let hist_rows = (0..hist.bins()).map(|k| {
        let mut row = vec![fmt_f64(hist.edges[k]), fmt_f64(hist.edges[k + 1])];
        row.extend(hist.series.iter().map(|s| s.counts[k].to_string()));
        row.extend(hist.series.iter().map(|s| fmt_f64(s.density[k])));
        row
    });
    let summaries = [summarize(&sp)?, summarize(&sq)?];
    let sets = [&sp, &sq];
    let summary_rows = sets.iter().zip(&summaries).map(|(set, s)| {
        let mut row = vec![set.source_label.as_str().to_string(), s.length.to_string()];
        row.extend([s.mean, s.std, s.min, s.q1, s.median, s.q3, s.max].iter().map(|&v| fmt_f64(v)));
        row
    });

    let mut loss = loss_summary(&model, &trace);
    loss["cap"] = json!(1.0 - model.alpha.sqrt());
    loss["histogram_overflow"] = json!(hist
        .series
        .iter()
        .map(|s| json!({
            "source_label": s.source_label,
            "below": s.below,
            "above": s.above,
            "non_finite": s.non_finite,
        }))
        .collect::<Vec<_>>());

    fs::create_dir_all(&dir).map_err(|e| data(format!("{}: {e}", dir.display())))?;
    let mut doc = model.to_json();
    doc.push('\n');
    rec.output(&files[0], doc.as_bytes())?;
    rec.output(&files[1], &scores_csv(&[(&sp, ids_p), (&sq, ids_q)]))?;
    rec.output(
        &files[2],
        &csv_bytes(
            &["lo", "hi", "count_real", "count_generated", "density_real", "density_generated"],
            hist_rows,
        ),
    )?;
    rec.output(
        &files[3],
        &csv_bytes(
            &["source_label", "length", "mean", "std", "min", "q1", "median", "q3", "max"],
            summary_rows,
        ),
    )?;
    rec.output(&files[4], &pretty(&loss))?;
    rec.output(&files[5], &trace_csv(&trace))?;
    rec.finish(&files[6], Some(tc.seed))?;

    Ok(json!({
        "command": "compare",
        "out_dir": dir.display().to_string(),
        "model_id": model.model_id(),
        "h2_raw": model.holdout.h2_raw,
        "h2_clipped": model.holdout.h2_clipped,
        "mean_real": summaries[0].mean,
        "mean_generated": summaries[1].mean,
    }))
}

/// Scores read back from a score CSV.
struct ScoreFile {
    ids: Option<Vec<String>>,
    scores: Vec<f64>,
    labels: Option<Vec<String>>,
}

fn read_scores(path: &Path) -> Result<ScoreFile, CliError> {
    let t = read_table(path)?;
    let sc = t
        .column("score")
        .ok_or_else(|| data(format!("{}: no score column", path.display())))?;
    let mut scores = Vec::with_capacity(t.rows.len());
    for (r, row) in t.rows.iter().enumerate() {
        scores.push(parse_float(&row[sc], path, r + 2, "score")?);
    }
    let pick = |c: Option<usize>| c.map(|j| t.rows.iter().map(|r| r[j].clone()).collect());
    Ok(ScoreFile {
        ids: pick(t.column(ID_COLUMN)),
        scores,
        labels: pick(t.column("source_label")),
    })
}

/// Covariate row index for every score row.
fn align(scores: &ScoreFile, cov: &CsvDataset) -> Result<Vec<usize>, CliError> {
    match (&scores.ids, &cov.ids) {
        (Some(sid), Some(cid)) => {
            let mut index: HashMap<&str, usize> = HashMap::new();
            for (i, id) in cid.iter().enumerate() {
                if index.insert(id.as_str(), i).is_some() {
                    return Err(data(format!("duplicate covariate id {id:?}")));
                }
            }
            let mut seen: HashMap<&str, ()> = HashMap::new();
            let mut rows = Vec::with_capacity(sid.len());
            let mut missing = Vec::new();
            for id in sid {
                if seen.insert(id.as_str(), ()).is_some() {
                    return Err(data(format!(
                        "duplicate score id {id:?}; filter with --source-label"
                    )));
                }
                match index.get(id.as_str()) {
                    Some(&i) => rows.push(i),
                    None => missing.push(id.clone()),
                }
            }
            if !missing.is_empty() {
                let shown: Vec<&str> = missing.iter().take(20).map(String::as_str).collect();
                return Err(data(format!(
                    "{} score ids have no covariate row: {}{}",
                    missing.len(),
                    shown.join(", "),
                    if missing.len() > shown.len() { ", ..." } else { "" }
                )));
            }
            Ok(rows)
        }
        _ => {
            if scores.scores.len() != cov.rows() {
                return Err(data(format!(
                    "{} scores but {} covariate rows (add id columns to join)",
                    scores.scores.len(),
                    cov.rows()
                )));
            }
            Ok((0..cov.rows()).collect())
        }
    }
}

fn read_levels(path: &Path, taxa: &[String]) -> Result<Vec<(String, GroupMapping)>, CliError> {
    let t = read_table(path)?;
    if t.headers.len() < 2 {
        return Err(data(format!(
            "{}: expected a taxon column and at least one level",
            path.display()
        )));
    }
    let mut levels: Vec<(String, GroupMapping)> =
        t.headers[1..].iter().map(|h| (h.clone(), GroupMapping::new())).collect();
    for row in &t.rows {
        for (k, (_, m)) in levels.iter_mut().enumerate() {
            m.insert(row[0].clone(), row[k + 1].clone());
        }
    }
    let unmapped: Vec<&String> = taxa.iter().filter(|t| !levels[0].1.contains_key(*t)).collect();
    if !unmapped.is_empty() {
        return Err(data(format!(
            "{}: no mapping for columns {unmapped:?}",
            path.display()
        )));
    }
    Ok(levels)
}

fn association_csv(levels: &[LevelAssociation]) -> Vec<u8> {
    let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
    csv_bytes(
        &["level", "group", "rho", "p_value"],
        levels.iter().flat_map(|l| {
            l.groups
                .iter()
                .map(|g| vec![l.level.clone(), g.group.clone(), opt(g.rho), opt(g.p_value)])
        }),
    )
}

pub fn attribute(a: AttributeArgs, argv: &[String]) -> Result<Value, CliError> {
    let mut rec = Recorder::new("attribute", argv, a.force, None);
    rec.check_free(&[a.out.clone(), sidecar(&a.out)])?;
    if a.mapping.is_some() && !a.clr {
        return Err(usage("--mapping needs --clr"));
    }
    if a.clr && a.method != MethodArg::Spearman {
        return Err(usage("--clr applies to --method spearman"));
    }
    rec.input(&a.scores)?;
    let mut scores = read_scores(&a.scores)?;
    if let Some(want) = a.source_label {
        let want = SourceLabel::from(want).as_str();
        let labels = scores
            .labels
            .as_ref()
            .ok_or_else(|| data(format!("{}: no source_label column", a.scores.display())))?;
        let keep: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == want).collect();
        scores = ScoreFile {
            ids: scores.ids.map(|v| keep.iter().map(|&i| v[i].clone()).collect()),
            scores: keep.iter().map(|&i| scores.scores[i]).collect(),
            labels: None,
        };
    }
    rec.input(&a.covariates)?;
    let cov = CsvDataset::read(&a.covariates)?;
    if cov.rows() == 0 || scores.scores.is_empty() {
        return Err(data("no rows to attribute"));
    }
    let rows = align(&scores, &cov)?;
    let x = cov.data.select_rows(&rows);
    let set = ScoreSet::new(scores.scores.clone(), SourceLabel::Other);

    let summary = match a.method {
        MethodArg::Logistic => {
            let report = logistic_attribution(&set, &x, a.threshold)?;
            rec.output(
                &a.out,
                &csv_bytes(
                    &["name", "coef", "std_error", "z", "p_value"],
                    report.rows.iter().map(|r| {
                        vec![
                            r.name.clone(),
                            fmt_f64(r.coef),
                            fmt_f64(r.std_error),
                            fmt_f64(r.z),
                            fmt_f64(r.p_value),
                        ]
                    }),
                ),
            )?;
            json!({
                "command": "attribute",
                "method": "logistic",
                "n": report.n,
                "positives": report.positives,
                "converged": report.converged,
                "iterations": report.iterations,
                "separation": report.separation,
                "top": report.rows[0].name,
            })
        }
        MethodArg::Spearman => {
            let levels = if a.clr {
                let table = CompositionTable::new(x)?;
                let taxa = table.taxa();
                let levels = match &a.mapping {
                    Some(m) => {
                        rec.input(m)?;
                        read_levels(m, &taxa)?
                    }
                    None => vec![(
                        "taxon".to_string(),
                        taxa.iter().map(|t| (t.clone(), t.clone())).collect(),
                    )],
                };
                association_scan(std::slice::from_ref(&set), &table, &levels, a.pseudocount)?
            } else {
                let mut groups = Vec::new();
                for j in 0..x.cols() {
                    let (rho, p_value) = match spearman(&set.scores, &x.column(j)) {
                        Ok(r) => (Some(r.rho), Some(r.p_value)),
                        Err(rdr_core::Error::Undefined(_)) => (None, None),
                        Err(e) => return Err(e.into()),
                    };
                    groups.push(rdr_core::analytics::GroupAssociation {
                        group: x.column_name(j),
                        rho,
                        p_value,
                    });
                }
                groups.sort_by(|a, b| {
                    let key = |g: &rdr_core::analytics::GroupAssociation| g.rho.map_or(-1.0, f64::abs);
                    key(b).total_cmp(&key(a))
                });
                vec![LevelAssociation {
                    level: "column".to_string(),
                    groups,
                }]
            };
            rec.output(&a.out, &association_csv(&levels))?;
            let top: Vec<Value> = levels
                .iter()
                .map(|l| json!({"level": l.level, "group": l.groups.first().map(|g| g.group.clone()), "rho": l.groups.first().and_then(|g| g.rho)}))
                .collect();
            json!({
                "command": "attribute",
                "method": "spearman",
                "n": set.len(),
                "clr": a.clr,
                "top": top,
            })
        }
    };
    rec.finish(&sidecar(&a.out), None)?;
    Ok(summary)
}
