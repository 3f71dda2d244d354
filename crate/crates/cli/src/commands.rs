use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use recast_core::mcmc::write_chain_csv;
use recast_core::predictive::quantile_sorted;
use recast_core::sim::{mean_se, read_results, reliability_for, run_grid, summarize, write_summary, Method};
use recast_core::source_models::{fit_logistic, fit_logistic_penalized, fit_mlp, fit_ols, load_model, save_model};
use recast_core::{
    calibrate as run_calibration, predict_point, ModelKind, PosteriorSample, RecastError, ResponseKind, Rng, ScoredTarget,
    SourceModel,
};
use serde::Serialize;

use crate::config::{sidecar, RunConfig};
use crate::error::CliError;
use crate::table::{read_table, Table};

const STREAM_FIT: u64 = 1;
const STREAM_CALIBRATE: u64 = 2;
const STREAM_PREDICT: u64 = 3;

fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    if threads == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Other(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

pub fn fit_source(
    cfg: &RunConfig,
    data: &Path,
    kind: ModelKind,
    response: Option<ResponseKind>,
    out: &Path,
) -> Result<(), CliError> {
    let response = match (kind, response) {
        (ModelKind::Linear, None | Some(ResponseKind::Continuous)) => ResponseKind::Continuous,
        (ModelKind::Logistic, None | Some(ResponseKind::Binary)) => ResponseKind::Binary,
        (ModelKind::Mlp, Some(r)) => r,
        (ModelKind::Mlp, None) => return Err(CliError::Config("--response is required for kind mlp".into())),
        (k, Some(r)) => return Err(CliError::Config(format!("kind {k} cannot model a {r} response"))),
    };
    let table = read_table(data, &cfg.data.label_col, true)?;
    let ds = table.dataset(response, cfg.source.intercept)?;
    let model = match kind {
        ModelKind::Linear => fit_ols(&ds)?,
        ModelKind::Logistic => match fit_logistic(&ds) {
            Err(RecastError::Separation { .. }) if cfg.source.ridge_fallback > 0.0 => {
                log::warn!("data are separated; refitting with ridge penalty {}", cfg.source.ridge_fallback);
                fit_logistic_penalized(&ds, cfg.source.ridge_fallback)?
            }
            r => r?,
        },
        ModelKind::Mlp => with_threads(cfg.output.threads, || {
            fit_mlp(&ds, &cfg.mlp, &mut Rng::new(cfg.seed).child(STREAM_FIT))
        })??,
    };
    save_model(&model, out)?;
    cfg.write_sidecar(out)?;
    println!(
        "fitted {kind} source model on {} rows, {} features -> {}",
        ds.n(),
        ds.p(),
        out.display()
    );
    Ok(())
}

/// Source scores for a table, checking the column count against the model.
fn score_table(model: &SourceModel, table: &Table, path: &Path) -> Result<Vec<f64>, CliError> {
    let intercept = model.standardizer.intercept;
    let expected = model.p() - usize::from(intercept);
    if table.features.len() != expected {
        return Err(CliError::Data(format!(
            "{}: model expects {expected} feature columns, found {} ({})",
            path.display(),
            table.features.len(),
            table.features.join(",")
        )));
    }
    Ok(model.score_rows(&table.design(intercept))?)
}

#[derive(Serialize)]
struct CalibrationDiagnostics {
    response: ResponseKind,
    n_target: usize,
    n_post: usize,
    chain_length: usize,
    accept_rate: f64,
    proposal_sds: Vec<f64>,
    floor_events: u64,
    stuck: bool,
    posterior_mean_delta: f64,
}

pub fn calibrate(
    cfg: &RunConfig,
    model_path: &Path,
    target_path: &Path,
    out: &Path,
    chain_out: Option<&Path>,
) -> Result<(), CliError> {
    let model = load_model(model_path)?;
    let table = read_table(target_path, &cfg.data.label_col, true)?;
    let scores = score_table(&model, &table, target_path)?;
    let labels = table.labels.clone().expect("label column required");
    if model.response == ResponseKind::Continuous {
        let zero = ScoredTarget::zero_score_rows(&scores);
        if !zero.is_empty() {
            let lines: Vec<String> = zero.iter().map(|i| (i + 2).to_string()).collect();
            return Err(CliError::Data(format!(
                "source score is exactly zero on target lines {}",
                lines.join(", ")
            )));
        }
    } else if let Some(i) = labels.iter().position(|&v| v != 0.0 && v != 1.0) {
        return Err(CliError::Data(format!(
            "line {}: model is binary but label is {}",
            i + 2,
            labels[i]
        )));
    }
    let target = ScoredTarget::new(scores, labels, model.response)?;
    let cal = run_calibration(&target, &cfg.recast, &mut Rng::new(cfg.seed).child(STREAM_CALIBRATE))?;
    cal.posterior.save(out)?;
    if let Some(p) = chain_out {
        write_chain_csv(&cal.chain, p)?;
    }
    let deltas = cal.posterior.deltas();
    let diag = CalibrationDiagnostics {
        response: model.response,
        n_target: table.rows,
        n_post: cal.posterior.len(),
        chain_length: cal.chain.len(),
        accept_rate: cal.chain.accept_rate,
        proposal_sds: cal.chain.proposal_sds.clone(),
        floor_events: cal.chain.floor_events,
        stuck: cal.chain.stuck(),
        posterior_mean_delta: deltas.iter().sum::<f64>() / deltas.len() as f64,
    };
    std::fs::write(
        sidecar(out, "diagnostics.json"),
        serde_json::to_string_pretty(&diag).map_err(|e| CliError::Other(e.to_string()))? + "\n",
    )?;
    cfg.write_sidecar(out)?;
    if diag.stuck {
        log::warn!("chain never moved after burn-in; the posterior sample is degenerate");
    }
    println!(
        "posterior sample of {} draws -> {} (acceptance {:.3})",
        diag.n_post,
        out.display(),
        diag.accept_rate
    );
    Ok(())
}

pub fn predict(
    cfg: &RunConfig,
    model_path: &Path,
    posterior_path: &Path,
    test_path: &Path,
    alphas: &[f64],
    out: &Path,
) -> Result<(), CliError> {
    if alphas.is_empty() {
        return Err(CliError::Config("at least one --alpha is required".into()));
    }
    if let Some(a) = alphas.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
        return Err(CliError::Config(format!("alpha must lie in (0, 1), got {a}")));
    }
    let model = load_model(model_path)?;
    let posterior = PosteriorSample::load(posterior_path)?;
    if posterior.response() != model.response {
        return Err(CliError::Data(format!(
            "posterior is {} but the model is {}",
            posterior.response(),
            model.response
        )));
    }
    let table = read_table(test_path, &cfg.data.label_col, false)?;
    let scores = score_table(&model, &table, test_path)?;
    let base = Rng::new(cfg.seed).child(STREAM_PREDICT);
    let preds = with_threads(cfg.output.threads, || {
        scores
            .par_iter()
            .enumerate()
            .map(|(i, &f)| predict_point(&posterior, f, alphas, &cfg.recast.predictive, &mut base.child(i as u64)))
            .collect::<Result<Vec<_>, RecastError>>()
    })??;

    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(out)?));
    let mut header = vec!["row".to_string(), "f_tilde".into(), "point".into(), "p_tilde".into()];
    if table.labels.is_some() {
        header.push("y".into());
    }
    header.extend(alphas.iter().map(|a| format!("set_{a}")));
    w.write_record(&header)?;
    for (i, p) in preds.iter().enumerate() {
        let mut rec = vec![
            (i + 1).to_string(),
            scores[i].to_string(),
            p.point.to_string(),
            p.p_tilde.map(|v| v.to_string()).unwrap_or_default(),
        ];
        if let Some(y) = &table.labels {
            rec.push(y[i].to_string());
        }
        rec.extend(p.sets.iter().map(|s| s.display()));
        w.write_record(&rec)?;
    }
    w.flush()?;

    if let Some(y) = &table.labels {
        let path = sidecar(out, "coverage.csv");
        let mut cw = BufWriter::new(File::create(&path)?);
        writeln!(cw, "alpha,nominal,n,covered,empirical")?;
        for (k, &a) in alphas.iter().enumerate() {
            let covered = preds.iter().zip(y).filter(|(p, &yi)| p.sets[k].contains(yi)).count();
            let emp = covered as f64 / y.len() as f64;
            writeln!(cw, "{a},{},{},{covered},{emp}", 1.0 - a, y.len())?;
            println!("alpha {a}: empirical coverage {emp:.4} ({covered}/{})", y.len());
        }
        cw.flush()?;
    }
    cfg.write_sidecar(out)?;
    println!("{} predictions -> {}", preds.len(), out.display());
    Ok(())
}

pub fn replicate(cfg: &RunConfig, out: &Path, resume: bool, only: Option<ResponseKind>) -> Result<(), CliError> {
    let scenarios = cfg.scenarios(only);
    if scenarios.is_empty() {
        return Err(CliError::Config("the configured grid is empty".into()));
    }
    let sim = cfg.sim_config();
    cfg.write_sidecar(out)?;
    let rows = run_grid(&scenarios, &sim, out, resume, cfg.output.threads)?;
    let levels = &sim.nominal_levels;

    let summary = summarize(&rows, levels);
    write_summary(&summary, BufWriter::new(File::create(sidecar(out, "summary.csv"))?))?;

    let mut rw = BufWriter::new(File::create(sidecar(out, "reliability.csv"))?);
    writeln!(rw, "response,n_target,sigma_tl2,method,nominal,empirical,se")?;
    for s in &scenarios {
        for &m in sim.methods.iter().filter(|m| m.is_recast()) {
            // A cell where every replicate failed has no curve.
            let Ok(curve) = reliability_for(&rows, levels, s, m) else { continue };
            for p in curve {
                writeln!(
                    rw,
                    "{},{},{},{},{},{},{}",
                    s.response,
                    s.n_target,
                    s.sigma_tl2,
                    m.id(),
                    p.nominal,
                    p.empirical,
                    if p.se.is_nan() { String::new() } else { p.se.to_string() }
                )?;
            }
        }
    }
    rw.flush()?;
    let failures = rows.iter().filter(|r| !r.ok()).count();
    println!("{} result rows ({failures} failed) -> {}", rows.len(), out.display());
    Ok(())
}

struct Moments {
    mean: f64,
    sd: f64,
    q025: f64,
    q50: f64,
    q975: f64,
}

fn moments(values: &[f64]) -> Moments {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        f64::NAN
    };
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    Moments {
        mean,
        sd,
        q025: quantile_sorted(&s, 0.025),
        q50: quantile_sorted(&s, 0.5),
        q975: quantile_sorted(&s, 0.975),
    }
}

/// Effective sample size with Geyer's initial positive sequence.
fn effective_size(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 4 {
        return n as f64;
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    if var == 0.0 {
        return f64::NAN;
    }
    let rho = |lag: usize| -> f64 {
        (0..n - lag).map(|i| (x[i] - mean) * (x[i + lag] - mean)).sum::<f64>() / (n as f64 * var)
    };
    let mut tau = -1.0;
    let mut k = 0;
    while 2 * k + 1 < n {
        let pair = rho(2 * k) + rho(2 * k + 1);
        if pair <= 0.0 {
            break;
        }
        tau += 2.0 * pair;
        k += 1;
    }
    n as f64 / tau.max(1.0)
}

fn print_header(extra: bool) {
    if extra {
        println!("{:<10} {:>12} {:>12} {:>12} {:>12} {:>12} {:>10}", "param", "mean", "sd", "2.5%", "50%", "97.5%", "ess");
    } else {
        println!("{:<10} {:>12} {:>12} {:>12} {:>12} {:>12}", "param", "mean", "sd", "2.5%", "50%", "97.5%");
    }
}

fn print_row(name: &str, v: &[f64], ess: Option<f64>) {
    let m = moments(v);
    let base = format!(
        "{name:<10} {:>12.5} {:>12.5} {:>12.5} {:>12.5} {:>12.5}",
        m.mean, m.sd, m.q025, m.q50, m.q975
    );
    match ess {
        Some(e) => println!("{base} {e:>10.1}"),
        None => println!("{base}"),
    }
}

pub fn diagnose_posterior(path: &Path) -> Result<(), CliError> {
    let post = PosteriorSample::load(path)?;
    println!("{} posterior, {} draws", post.response(), post.len());
    print_header(false);
    match &post {
        PosteriorSample::Continuous(v) => {
            print_row("delta", &v.iter().map(|p| p.delta).collect::<Vec<_>>(), None);
            print_row("gamma", &v.iter().map(|p| p.gamma()).collect::<Vec<_>>(), None);
            print_row("sigma", &v.iter().map(|p| p.sigma()).collect::<Vec<_>>(), None);
        }
        PosteriorSample::Binary(v) => {
            print_row("delta", &v.iter().map(|p| p.delta).collect::<Vec<_>>(), None);
            print_row("gamma", &v.iter().map(|p| p.gamma()).collect::<Vec<_>>(), None);
        }
    }
    Ok(())
}

pub fn diagnose_chain(path: &Path) -> Result<(), CliError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != ["iteration", "delta", "gamma", "sigma", "log_target"] {
        return Err(CliError::Data(format!(
            "{}: expected header iteration,delta,gamma,sigma,log_target",
            path.display()
        )));
    }
    let mut cols: [Vec<f64>; 3] = Default::default();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        for (k, col) in cols.iter_mut().enumerate() {
            let cell = &rec[k + 1];
            if cell.is_empty() {
                continue;
            }
            col.push(
                cell.parse()
                    .map_err(|_| CliError::Data(format!("line {line}: cannot parse '{cell}'")))?,
            );
        }
    }
    if cols[0].is_empty() {
        return Err(CliError::Data(format!("{}: empty chain", path.display())));
    }
    let moves = cols[0].windows(2).filter(|w| w[0] != w[1]).count();
    println!(
        "{} retained iterations, move rate {:.3}",
        cols[0].len(),
        moves as f64 / (cols[0].len() - 1).max(1) as f64
    );
    print_header(true);
    for (name, col) in ["delta", "gamma", "sigma"].iter().zip(&cols) {
        if !col.is_empty() {
            print_row(name, col, Some(effective_size(col)));
        }
    }
    Ok(())
}

pub fn diagnose_results(path: &Path) -> Result<(), CliError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let levels: Vec<f64> = rdr
        .headers()?
        .iter()
        .filter_map(|h| h.strip_prefix("cov_"))
        .map(|l| l.parse::<f64>().map_err(|_| CliError::Data(format!("bad coverage column cov_{l}"))))
        .collect::<Result<_, _>>()?;
    let rows = read_results(File::open(path)?, &levels)?;
    let summary = summarize(&rows, &levels);
    println!(
        "{:<11} {:>5} {:>7} {:<14} {:>5} {:>5} {:>18} {:>18} {:>18} {:>18}",
        "response", "n_T", "s2_TL", "method", "ok", "fail", "rmse_obs", "rmse_mean", "auc", "cov_95"
    );
    let cell = |(m, se): (f64, f64)| {
        if m.is_nan() {
            "-".to_string()
        } else {
            format!("{m:.4} ({se:.4})")
        }
    };
    for s in &summary {
        println!(
            "{:<11} {:>5} {:>7} {:<14} {:>5} {:>5} {:>18} {:>18} {:>18} {:>18}",
            s.scenario.response.to_string(),
            s.scenario.n_target,
            s.scenario.sigma_tl2,
            s.method.id(),
            s.replicates,
            s.failures,
            cell(s.rmse_observed),
            cell(s.rmse_mean),
            cell(s.auc),
            cell(s.coverage_95)
        );
    }
    let accept = mean_se(rows.iter().filter(|r| r.method == Method::RecastLinear).map(|r| r.accept_rate));
    if !accept.0.is_nan() {
        println!("mean acceptance rate ({}): {:.3}", Method::RecastLinear.id(), accept.0);
    }
    Ok(())
}
