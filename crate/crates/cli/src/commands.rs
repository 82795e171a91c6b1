use std::fmt::Write as _;

use attriweight::attribution::{self_influence_raw_and_normalized, AttributionResult};
use attriweight::dataset::save_csv;
use attriweight::eval::{lds_from_scores, mislabel_auc, paired_bootstrap, per_group_lds, tail_patch, EvalReport, Query};
use attriweight::features::save_store;
use attriweight::model::save_checkpoint;
use attriweight::oracle::{generate_queries, save_instance_csv, verify_recovery_multi};
use attriweight::pipeline::{noise_sweep, query_scores, run_factor_experiment, Method};
use attriweight::rng::SplitMix64;
use attriweight::weighting::{learn_weights, save_weights, sweep, weight_cosine, WeightLearnConfig, WeightVector};
use serde::Serialize;
use serde_json::json;

use crate::error::{CliError, CliResult};
use crate::run::{weights_file, Run};

/// `×100` with two decimals, the display form of LDS and recall.
fn pct(v: f64) -> String {
    format!("{:.2}", 100.0 * v)
}

fn weights_json(w: &WeightVector) -> serde_json::Value {
    json!(w
        .group_names()
        .iter()
        .zip(w.values())
        .map(|(n, v)| json!({ "group": n, "weight": v }))
        .collect::<Vec<_>>())
}

fn print_weights(w: &WeightVector) {
    for (n, v) in w.group_names().iter().zip(w.values()) {
        println!("  {n:<20} {v:.4}");
    }
}

fn save_report(run: &mut Run, stem: &str, report: &EvalReport) -> CliResult<()> {
    let (json, csv) = (format!("{stem}.json"), format!("{stem}.csv"));
    report.save(run.output_path(&json), run.output_path(&csv))?;
    run.record(&json)?;
    run.record(&csv)
}

fn attributions(ids: &[u64], queries: &[Query], scores: Vec<Vec<f64>>, tag: &str) -> CliResult<Vec<AttributionResult>> {
    Ok(scores
        .into_iter()
        .zip(queries)
        .map(|(s, q)| AttributionResult::new(q.id.clone(), ids.to_vec(), s, tag))
        .collect::<attriweight::Result<_>>()?)
}

pub fn gen_data(run: &mut Run) -> CliResult<()> {
    let cfg = run.cfg.benchmark()?;
    let data = cfg.data()?;
    save_csv(&data.dataset, run.output_path("dataset.csv"))?;
    run.record("dataset.csv")?;
    save_csv(&data.clean, run.output_path("clean_dataset.csv"))?;
    run.record("clean_dataset.csv")?;
    run.write_json("split.json", &data.split)?;
    if let Some(rec) = &data.corruption {
        run.write_json("corruption.json", rec)?;
    }
    println!(
        "{} examples (train {}, weight-learning {}, eval {}), {} corrupted labels",
        data.dataset.len(),
        data.split.train_ids.len(),
        data.split.weight_learning_ids.len(),
        data.split.eval_ids.len(),
        data.corruption.as_ref().map_or(0, |r| r.corrupted_ids.len())
    );
    Ok(())
}

pub fn train(run: &mut Run) -> CliResult<()> {
    let cfg = run.cfg.benchmark()?;
    let data = run.load_data(&cfg)?;
    let ckpt = cfg.train_model(&data)?;
    save_checkpoint(&ckpt, run.output_path("model.ckpt"))?;
    run.record("model.ckpt")?;
    let train_acc = ckpt.accuracy(&data.dataset, &data.split.train_ids)?;
    let eval_acc = ckpt.accuracy(&data.clean, &data.split.eval_ids)?;
    run.write_json(
        "summary.json",
        &json!({ "train_accuracy": train_acc, "eval_accuracy": eval_acc, "parameters": ckpt.flat_params.len() }),
    )?;
    println!("accuracy: train {} eval {}", pct(train_acc), pct(eval_acc));
    Ok(())
}

pub fn extract(run: &mut Run) -> CliResult<()> {
    let cfg = run.cfg.benchmark()?;
    let ckpt_path = run.input("model", "train", "model.ckpt")?;
    let data = run.load_data(&cfg)?;
    let ckpt = attriweight::model::load_checkpoint(ckpt_path)?;
    let (projection, _, store) = cfg.extract(&ckpt, &data)?;
    save_store(&store, run.output_path("feature_store.bin"))?;
    run.record("feature_store.bin")?;
    run.write_json("projection.json", &projection)?;
    println!("{} training rows, groups {:?}, dim {}", store.len(), store.layout().names(), store.dim());
    Ok(())
}

pub fn attribute(run: &mut Run) -> CliResult<()> {
    let method = run.cfg.method("attribution.method")?;
    let bench = run.load_benchmark()?;
    let weights = run.learned_weights(method)?;
    let queries = bench.eval_queries()?;
    let side = bench.training_side(method)?;
    let contribs = bench.contributions(&side, &queries)?;
    let plain = query_scores(&contribs, None);
    let weighted = weights.as_ref().map(|w| query_scores(&contribs, Some(w)));
    let ids = bench.train_store.example_ids();
    let mut out = String::from(if weighted.is_some() { "query_id,train_id,score,weighted_score\n" } else { "query_id,train_id,score\n" });
    for (qi, q) in queries.iter().enumerate() {
        for (n, id) in ids.iter().enumerate() {
            write!(out, "{},{id},{:.17e}", q.id, plain[qi][n]).expect("string write");
            if let Some(w) = &weighted {
                write!(out, ",{:.17e}", w[qi][n]).expect("string write");
            }
            out.push('\n');
        }
    }
    run.write(&format!("scores_{}.csv", method.name()), out)?;
    println!(
        "{} scores for {} queries x {} training examples{}",
        method.name(),
        queries.len(),
        ids.len(),
        if weighted.is_some() { " (unweighted and weighted)" } else { "" }
    );
    Ok(())
}

pub fn learn(run: &mut Run) -> CliResult<()> {
    let method = run.cfg.method("attribution.method")?;
    let bench = run.load_benchmark()?;
    let cfg = bench.config.weighting.clone();
    let side = bench.training_side(method)?;
    let contribs = bench.contributions(&side, &bench.weight_learning_queries()?)?;
    let w = learn_weights(&contribs, &cfg)?;
    let header = format!(
        "method={} k={} lambda_reg={} lr={} epochs={} loss={} seed={}",
        method.name(),
        cfg.k,
        cfg.lambda_reg,
        cfg.lr,
        cfg.epochs,
        cfg.loss_variant,
        cfg.seed
    );
    let name = weights_file(method);
    save_weights(&w, &header, run.output_path(&name))?;
    run.record(&name)?;
    run.write_json(&format!("weights_{}.json", method.name()), &json!({ "method": method.name(), "weights": weights_json(&w) }))?;
    println!("{} weights from {} queries:", method.name(), contribs.len());
    print_weights(&w);
    Ok(())
}

pub fn sweep_cmd(run: &mut Run) -> CliResult<()> {
    let method = run.cfg.method("attribution.method")?;
    let k_grid = run.cfg.ints("weighting.k_grid")?;
    let lambda_grid = run.cfg.reals("weighting.lambda_grid")?;
    let n_val = run.cfg.usize("eval.sweep_queries")?;
    let bench = run.load_benchmark()?;
    let queries = bench.weight_learning_queries()?;
    let val_queries = &queries[..n_val.min(queries.len())];
    if val_queries.len() < 2 {
        return Err(CliError::config("bad_value", "eval.sweep_queries must select at least two queries"));
    }
    let gt = bench.ground_truth(val_queries)?;
    let side = bench.training_side(method)?;
    let contribs = bench.contributions(&side, &queries)?;
    let val_contribs = &contribs[..val_queries.len()];
    let out = sweep(&contribs, &k_grid, &lambda_grid, &bench.config.weighting, |w| {
        Ok(lds_from_scores(&gt, &query_scores(val_contribs, Some(w)))?.mean)
    })?;
    let mut csv = String::from("k,lambda_reg,validation_lds,error\n");
    for c in &out.cells {
        let score = c.score.map_or(String::new(), |s| format!("{s:.17e}"));
        let err = c.error.as_deref().unwrap_or("").replace([',', '\n'], ";");
        writeln!(csv, "{},{},{score},{err}", c.k, c.lambda_reg).expect("string write");
    }
    run.write("sweep.csv", csv)?;
    let name = format!("best_{}.tsv", method.name());
    save_weights(&out.best, &format!("method={} k={} lambda_reg={}", method.name(), out.best_k, out.best_lambda), run.output_path(&name))?;
    run.record(&name)?;
    let best_score = out
        .cells
        .iter()
        .find(|c| c.k == out.best_k && c.lambda_reg == out.best_lambda)
        .and_then(|c| c.score);
    run.write_json(
        "summary.json",
        &json!({ "method": method.name(), "best_k": out.best_k, "best_lambda_reg": out.best_lambda,
                 "validation_lds": best_score, "cells": out.cells.len(), "weights": weights_json(&out.best) }),
    )?;
    println!(
        "{} cells; best k={} lambda_reg={} validation LDS {}",
        out.cells.len(),
        out.best_k,
        out.best_lambda,
        best_score.map_or("-".into(), pct)
    );
    print_weights(&out.best);
    Ok(())
}

#[derive(Serialize)]
struct Comparison {
    unweighted: f64,
    weighted: f64,
    mean_diff: f64,
    ci_lower: f64,
    ci_upper: f64,
}

fn compare(run: &Run, plain: &EvalReport, weighted: &EvalReport) -> CliResult<Comparison> {
    let ci = paired_bootstrap(
        &weighted.per_query,
        &plain.per_query,
        run.cfg.usize("eval.bootstrap_resamples")?,
        run.cfg.u64("eval.bootstrap_seed")?,
    )?;
    Ok(Comparison {
        unweighted: plain.mean,
        weighted: weighted.mean,
        mean_diff: ci.mean_diff,
        ci_lower: ci.lower,
        ci_upper: ci.upper,
    })
}

pub fn eval_lds(run: &mut Run) -> CliResult<()> {
    let method = run.cfg.method("attribution.method")?;
    let bench = run.load_benchmark()?;
    let weights = run.learned_weights(method)?;
    let queries = bench.eval_queries()?;
    let gt = bench.ground_truth(&queries)?;
    run.write_json("ground_truth.json", &gt)?;
    let side = bench.training_side(method)?;
    let contribs = bench.contributions(&side, &queries)?;
    let plain = lds_from_scores(&gt, &query_scores(&contribs, None))?;
    save_report(run, &format!("lds_{}_unweighted", method.name()), &plain)?;
    print!("{} LDS unweighted {}", method.name(), pct(plain.mean));
    if let Some(w) = &weights {
        let weighted = lds_from_scores(&gt, &query_scores(&contribs, Some(w)))?;
        save_report(run, &format!("lds_{}_weighted", method.name()), &weighted)?;
        let cmp = compare(run, &plain, &weighted)?;
        print!(
            ", weighted {} (diff 95% CI [{}, {}])",
            pct(weighted.mean),
            pct(cmp.ci_lower),
            pct(cmp.ci_upper)
        );
        run.write_json(&format!("summary_{}.json", method.name()), &cmp)?;
    }
    println!();
    Ok(())
}

pub fn eval_mislabel(run: &mut Run) -> CliResult<()> {
    let method = run.cfg.method("attribution.method")?;
    let top_t = run.cfg.usize("eval.self_influence_top_t")?;
    if run.cfg.benchmark()?.corruption <= 0.0 {
        return Err(CliError::config("bad_value", "eval-mislabel needs dataset.corruption > 0"));
    }
    let bench = run.load_benchmark()?;
    let weights = run.learned_weights(method)?;
    let record = bench
        .corruption
        .clone()
        .ok_or_else(|| CliError::missing("corruption_record", "no corruption record"))?;
    let kernel = bench.kernel(method)?;
    let ids = bench.train_store.example_ids();
    let (raw, plain) = self_influence_raw_and_normalized(&bench.train_store, &kernel, None, top_t)?;
    let plain_auc = mislabel_auc(&plain, ids, &record)?;
    let weighted = match &weights {
        Some(w) => Some(self_influence_raw_and_normalized(&bench.train_store, &kernel, Some(w), top_t)?.1),
        None => None,
    };
    let weighted_auc = weighted.as_ref().map(|s| mislabel_auc(s, ids, &record)).transpose()?;
    let mut csv = String::from(if weighted.is_some() {
        "train_id,corrupted,raw,normalized,weighted\n"
    } else {
        "train_id,corrupted,raw,normalized\n"
    });
    for (i, id) in ids.iter().enumerate() {
        write!(csv, "{id},{},{:.17e},{:.17e}", record.corrupted_ids.contains(id) as u8, raw[i], plain[i]).expect("string write");
        if let Some(w) = &weighted {
            write!(csv, ",{:.17e}", w[i]).expect("string write");
        }
        csv.push('\n');
    }
    run.write(&format!("self_influence_{}.csv", method.name()), csv)?;
    run.write_json(
        &format!("mislabel_{}.json", method.name()),
        &json!({ "method": method.name(), "corrupted": record.corrupted_ids.len(),
                 "auc_unweighted": plain_auc, "auc_weighted": weighted_auc }),
    )?;
    print!("{} mislabel AUC unweighted {}", method.name(), pct(plain_auc));
    if let Some(a) = weighted_auc {
        print!(", weighted {}", pct(a));
    }
    println!();
    Ok(())
}

pub fn eval_tailpatch(run: &mut Run) -> CliResult<()> {
    let method = run.cfg.method("attribution.method")?;
    let top_k = run.cfg.usize("eval.tailpatch_k")?;
    let random_seed = run.cfg.u64("eval.random_seed")?;
    let bench = run.load_benchmark()?;
    let weights = run.learned_weights(method)?;
    let queries = bench.eval_queries()?;
    let side = bench.training_side(method)?;
    let contribs = bench.contributions(&side, &queries)?;
    let ids = bench.train_store.example_ids();
    let lr = bench.config.lr;
    let patch = |scores: Vec<Vec<f64>>, tag: &str| -> CliResult<EvalReport> {
        let attrs = attributions(ids, &queries, scores, tag)?;
        Ok(tail_patch(&bench.checkpoint, &bench.dataset, &queries, &attrs, top_k, lr)?)
    };
    let mut rng = SplitMix64::new(random_seed);
    let random_scores = queries.iter().map(|_| ids.iter().map(|_| rng.next_f64()).collect()).collect();
    let mut summary = Vec::new();
    let mut runs = vec![("unweighted", query_scores(&contribs, None))];
    if let Some(w) = &weights {
        runs.push(("weighted", query_scores(&contribs, Some(w))));
    }
    runs.push(("random", random_scores));
    for (tag, scores) in runs {
        let report = patch(scores, tag)?;
        save_report(run, &format!("tailpatch_{}_{tag}", method.name()), &report)?;
        println!("{} tail-patch {tag}: mean delta {:.5} (stderr {:.5})", method.name(), report.mean, report.stderr());
        summary.push(json!({ "scores": tag, "mean": report.mean, "stderr": report.stderr() }));
    }
    run.write_json(&format!("summary_{}.json", method.name()), &json!({ "top_k": top_k, "lr": lr, "results": summary }))?;
    Ok(())
}

pub fn eval_recall(run: &mut Run) -> CliResult<()> {
    let cfg = run.cfg.factor()?;
    let out = run_factor_experiment(&cfg)?;
    let mut csv = String::from("query_id,split,unweighted_a,weighted_a,unweighted_b,weighted_b\n");
    for q in &out.queries {
        writeln!(
            csv,
            "{},{},{:.17e},{:.17e},{:.17e},{:.17e}",
            q.query_id, q.split, q.unweighted_a, q.weighted_a, q.unweighted_b, q.weighted_b
        )
        .expect("string write");
    }
    run.write("recall.csv", csv)?;
    run.write_json(
        "summary.json",
        &json!({ "method": cfg.method.name(), "k": cfg.recall_k, "train_accuracy": out.train_accuracy,
                 "splits": out.splits, "weights": weights_json(&out.weights) }),
    )?;
    for s in &out.splits {
        println!(
            "{:<8} Recall@{} factor A {} -> {}, factor B {} -> {} ({} queries)",
            s.split,
            cfg.recall_k,
            pct(s.unweighted_a),
            pct(s.weighted_a),
            pct(s.unweighted_b),
            pct(s.weighted_b),
            s.n_queries
        );
    }
    print_weights(&out.weights);
    Ok(())
}

pub fn per_group(run: &mut Run) -> CliResult<()> {
    let method = run.cfg.method("attribution.method")?;
    let bench = run.load_benchmark()?;
    let gt = run.load_ground_truth()?;
    let weights = run.learned_weights(method)?;
    let queries = bench.eval_queries()?;
    check_queries(&gt, &queries)?;
    let side = bench.training_side(method)?;
    let contribs = bench.contributions(&side, &queries)?;
    let lds = per_group_lds(&gt, &contribs)?;
    let names = bench.train_store.layout().names();
    let mut csv = String::from(if weights.is_some() { "group,lds,weight\n" } else { "group,lds\n" });
    for (j, name) in names.iter().enumerate() {
        write!(csv, "{name},{:.17e}", lds[j]).expect("string write");
        if let Some(w) = &weights {
            write!(csv, ",{:.17e}", w.values()[j]).expect("string write");
        }
        csv.push('\n');
    }
    run.write(&format!("per_group_lds_{}.csv", method.name()), csv)?;
    let cosine = weights.as_ref().map(|w| {
        let dot: f64 = lds.iter().zip(w.values()).map(|(a, b)| a * b).sum();
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        dot / (norm(&lds) * norm(w.values())).max(f64::MIN_POSITIVE)
    });
    run.write_json(
        &format!("summary_{}.json", method.name()),
        &json!({ "method": method.name(), "groups": names, "lds": lds, "cosine_with_weights": cosine }),
    )?;
    for (name, v) in names.iter().zip(&lds) {
        println!("  {name:<20} LDS {}", pct(*v));
    }
    if let Some(c) = cosine {
        println!("cosine(per-group LDS, weights) {c:.3}");
    }
    Ok(())
}

/// Guards against a ground truth computed for a different query set.
fn check_queries(gt: &attriweight::eval::LdsGroundTruth, queries: &[Query]) -> CliResult<()> {
    if gt.query_ids.len() != queries.len() || gt.query_ids.iter().zip(queries).any(|(a, q)| *a != q.id) {
        return Err(CliError::missing(
            "ground_truth",
            "ground truth does not match the current evaluation queries; rerun eval-lds",
        ));
    }
    Ok(())
}

pub fn oracle_check(run: &mut Run) -> CliResult<()> {
    let alphas = run.cfg.reals("oracle.alphas")?;
    let sigmas = run.cfg.reals("oracle.sigmas")?;
    let cfg: WeightLearnConfig = run.cfg.oracle_weighting()?;
    let queries = generate_queries(
        &alphas,
        &sigmas,
        run.cfg.usize("oracle.n_examples")?,
        run.cfg.f64("oracle.sparsity")?,
        run.cfg.u64("oracle.seed")?,
        run.cfg.usize("oracle.n_queries")?,
    )?;
    let r = verify_recovery_multi(&queries, &cfg)?;
    if let Some(first) = queries.first() {
        save_instance_csv(first, run.output_path("instance_0.csv"))?;
        run.record("instance_0.csv")?;
    }
    run.write_json(
        "recovery.json",
        &json!({ "alphas": alphas, "sigmas": sigmas, "learned": r.learned.values(), "optimal": r.optimal.values(),
                 "cosine_to_optimal": r.cosine_to_optimal, "snr_ratio": r.snr_ratio }),
    )?;
    println!("cosine to optimal {:.4}, snr ratio {:.4}", r.cosine_to_optimal, r.snr_ratio);
    for ((n, l), o) in r.learned.group_names().iter().zip(r.learned.values()).zip(r.optimal.values()) {
        println!("  {n:<10} learned {l:.4} optimal {o:.4}");
    }
    Ok(())
}

pub fn noise(run: &mut Run) -> CliResult<()> {
    let method = run.cfg.method("attribution.method")?;
    let grid = run.cfg.reals("eval.noise_grid")?;
    let seed = run.cfg.u64("eval.noise_seed")?;
    let bench = run.load_benchmark()?;
    let gt = run.load_ground_truth()?;
    let eval_queries = bench.eval_queries()?;
    check_queries(&gt, &eval_queries)?;
    let side = bench.training_side(method)?;
    let weight_contribs = bench.contributions(&side, &bench.weight_learning_queries()?)?;
    let eval_contribs = bench.contributions(&side, &eval_queries)?;
    let baseline = lds_from_scores(&gt, &query_scores(&eval_contribs, None))?;
    let points = noise_sweep(&weight_contribs, &eval_contribs, &gt, &bench.config.weighting, &grid, seed)?;
    let names = bench.train_store.layout().names();
    let mut csv = format!("scale,lds,ci95,{}\n", names.iter().map(|n| format!("w_{n}")).collect::<Vec<_>>().join(","));
    for p in &points {
        write!(csv, "{},{:.17e},{:.17e}", p.scale, p.lds.mean, p.lds.ci95).expect("string write");
        for v in p.weights.values() {
            write!(csv, ",{v:.17e}").expect("string write");
        }
        csv.push('\n');
    }
    run.write(&format!("noise_sweep_{}.csv", method.name()), csv)?;
    run.write_json(
        &format!("summary_{}.json", method.name()),
        &json!({ "method": method.name(), "unweighted_lds": baseline.mean,
                 "points": points.iter().map(|p| json!({ "scale": p.scale, "lds": p.lds.mean })).collect::<Vec<_>>() }),
    )?;
    println!("{} unweighted LDS {}", method.name(), pct(baseline.mean));
    for p in &points {
        println!("  s={:<6} weighted LDS {}", p.scale, pct(p.lds.mean));
    }
    Ok(())
}

pub fn cosine(run: &mut Run) -> CliResult<()> {
    let random_seed = run.cfg.u64("eval.random_seed")?;
    let bench = run.load_benchmark()?;
    let queries = bench.weight_learning_queries()?;
    let learn = |m: Method| -> CliResult<WeightVector> {
        let side = bench.training_side(m)?;
        Ok(learn_weights(&bench.contributions(&side, &queries)?, &bench.config.weighting)?)
    };
    let (wt, wk) = (learn(Method::TracIn)?, learn(Method::Trak)?);
    let names = wt.group_names().to_vec();
    let random = WeightVector::from_values(SplitMix64::new(random_seed).simplex_point(names.len()), names)?;
    let cross = weight_cosine(&wt, &wk)?;
    let (rt, rk) = (weight_cosine(&wt, &random)?, weight_cosine(&wk, &random)?);
    run.write_json(
        "weight_cosine.json",
        &json!({ "tracin": weights_json(&wt), "trak": weights_json(&wk), "random": weights_json(&random),
                 "cos_tracin_trak": cross, "cos_tracin_random": rt, "cos_trak_random": rk }),
    )?;
    println!("cos(tracin, trak) {cross:.3}; cos(tracin, random) {rt:.3}; cos(trak, random) {rk:.3}");
    Ok(())
}
