use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::data::{gen_data, make_theta_source, make_theta_target};
use super::metrics::{auc, default_nominal_grid, empirical_coverage, mean_se, reliability_curve, rmse, ReliabilityPoint};
use crate::error::{RecastError, Result};
use crate::pipeline::{calibrate, predict_point, RecastConfig};
use crate::posterior::ScoredTarget;
use crate::rng::{derive_seed, Rng};
use crate::source_models::{
    fit_logistic, fit_logistic_penalized, fit_mlp, fit_ols, unfreeze_last_layer, Dataset, MlpConfig, ResponseKind,
    SourceModel,
};
use crate::stats::expit;

/// Key of the stream that draws the suite-wide source parameter.
const THETA_STREAM: u64 = 0x7468_6574_615f_73;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// RECaST on a least-squares (continuous) or logistic (binary) source.
    RecastLinear,
    RecastDnn,
    /// Network trained on the target data alone.
    TargetDnn,
    /// Source network with its output layer retrained on the target.
    UnfreezeDnn,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::RecastLinear, Method::RecastDnn, Method::TargetDnn, Method::UnfreezeDnn];

    pub fn id(self) -> &'static str {
        match self {
            Method::RecastLinear => "recast_linear",
            Method::RecastDnn => "recast_dnn",
            Method::TargetDnn => "target_dnn",
            Method::UnfreezeDnn => "unfreeze_dnn",
        }
    }

    /// Column name used in the result tables.
    pub fn label(self, response: ResponseKind) -> &'static str {
        match (self, response) {
            (Method::RecastLinear, ResponseKind::Continuous) => "RECaST LM",
            (Method::RecastLinear, ResponseKind::Binary) => "RECaST GLM",
            (Method::RecastDnn, _) => "RECaST DNN",
            (Method::TargetDnn, _) => "DNN",
            (Method::UnfreezeDnn, _) => "Unfreeze DNN",
        }
    }

    pub fn is_recast(self) -> bool {
        matches!(self, Method::RecastLinear | Method::RecastDnn)
    }
}

impl std::str::FromStr for Method {
    type Err = RecastError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.id() == s)
            .ok_or_else(|| RecastError::Config(format!("unknown method '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Scenario {
    pub response: ResponseKind,
    pub n_target: usize,
    pub sigma_tl2: f64,
    /// Feature count including the intercept.
    pub p: usize,
    pub n_source: usize,
    pub n_test: usize,
    /// Sd of the Gaussian noise on continuous responses.
    pub noise_sd: f64,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            response: ResponseKind::Continuous,
            n_target: 100,
            sigma_tl2: 0.0,
            p: 50,
            n_source: 1000,
            n_test: 250,
            noise_sd: 0.5,
        }
    }
}

impl Scenario {
    pub fn new(response: ResponseKind, n_target: usize, sigma_tl2: f64) -> Self {
        Self {
            response,
            n_target,
            sigma_tl2,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p < 2 || self.n_source == 0 || self.n_target == 0 || self.n_test == 0 {
            return Err(RecastError::Config("scenario needs p >= 2 and positive sample sizes".into()));
        }
        if !(self.sigma_tl2 >= 0.0) || !self.sigma_tl2.is_finite() || !(self.noise_sd >= 0.0) || !self.noise_sd.is_finite() {
            return Err(RecastError::Config("sigma_tl2 and noise_sd must be finite and non-negative".into()));
        }
        Ok(())
    }

    /// Stable hash of every field; keys the replicate seeds.
    pub fn key(&self) -> u64 {
        derive_seed(
            self.response as u64,
            &[
                self.n_target as u64,
                self.sigma_tl2.to_bits(),
                self.p as u64,
                self.n_source as u64,
                self.n_test as u64,
                self.noise_sd.to_bits(),
            ],
        )
    }
}

pub const STUDY_SIGMA_TL2: [f64; 4] = [0.0, 0.25, 1.0, 4.0];
pub const STUDY_N_TARGET: [usize; 5] = [250, 100, 60, 40, 20];

/// The 4 × 5 grid of dissimilarity levels and target sizes.
pub fn study_grid(response: ResponseKind) -> Vec<Scenario> {
    let mut out = Vec::with_capacity(20);
    for &n in &STUDY_N_TARGET {
        for &s in &STUDY_SIGMA_TL2 {
            out.push(Scenario::new(response, n, s));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub master_seed: u64,
    pub replicates: usize,
    pub recast: RecastConfig,
    pub mlp: MlpConfig,
    pub methods: Vec<Method>,
    /// Nominal coverage levels evaluated for every RECaST method.
    pub nominal_levels: Vec<f64>,
    /// Ridge penalty used when the logistic source fit is separated.
    pub ridge_fallback: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            master_seed: 20_231_010,
            replicates: 300,
            recast: RecastConfig::default(),
            mlp: MlpConfig::default(),
            methods: Method::ALL.to_vec(),
            nominal_levels: default_nominal_grid(),
            ridge_fallback: 1.0,
        }
    }
}

impl SimConfig {
    /// 30 replicates with the shortened chain and predictive sizes.
    pub fn desk() -> Self {
        Self {
            replicates: 30,
            recast: RecastConfig::desk(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.recast.validate()?;
        self.mlp.validate()?;
        if self.methods.is_empty() {
            return Err(RecastError::Config("no methods selected".into()));
        }
        if self.nominal_levels.is_empty() || self.nominal_levels.iter().any(|l| !(*l > 0.0 && *l < 1.0)) {
            return Err(RecastError::Config("nominal levels must lie in (0, 1)".into()));
        }
        if !(self.ridge_fallback > 0.0) {
            return Err(RecastError::Config("ridge_fallback must be positive".into()));
        }
        Ok(())
    }

    fn alphas(&self) -> Vec<f64> {
        self.nominal_levels.iter().map(|l| 1.0 - l).collect()
    }
}

/// One result line: a method evaluated on one replicate of one scenario.
/// Metrics that do not apply are NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub scenario: Scenario,
    pub replicate: usize,
    pub method: Method,
    /// Empty when the method succeeded, otherwise the error text.
    pub error: String,
    /// "mle", "ridge" or "mlp"; empty for target-only fits.
    pub source_fit: String,
    pub rmse_observed: f64,
    pub rmse_mean: f64,
    pub auc: f64,
    pub delta_mean: f64,
    pub gamma_median: f64,
    pub accept_rate: f64,
    pub floor_events: u64,
    /// Aligned with [`SimConfig::nominal_levels`].
    pub coverage: Vec<f64>,
}

impl MetricsRow {
    fn empty(scenario: Scenario, replicate: usize, method: Method, levels: usize) -> Self {
        Self {
            scenario,
            replicate,
            method,
            error: String::new(),
            source_fit: String::new(),
            rmse_observed: f64::NAN,
            rmse_mean: f64::NAN,
            auc: f64::NAN,
            delta_mean: f64::NAN,
            gamma_median: f64::NAN,
            accept_rate: f64::NAN,
            floor_events: 0,
            coverage: vec![f64::NAN; levels],
        }
    }

    pub fn ok(&self) -> bool {
        self.error.is_empty()
    }

    /// Coverage at the level closest to `level`, if within 1e-9.
    pub fn coverage_at(&self, levels: &[f64], level: f64) -> Option<f64> {
        levels.iter().position(|l| (l - level).abs() < 1e-9).map(|k| self.coverage[k])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateOutput {
    pub rows: Vec<MetricsRow>,
    /// Wall-clock seconds per method, same order as `rows`.
    pub seconds: Vec<f64>,
}

struct Data {
    source: Dataset,
    target: Dataset,
    test: Dataset,
    test_mean: Vec<f64>,
}

fn simulate(s: &Scenario, theta_s: &[f64], base: &Rng) -> Result<Data> {
    let theta_t = make_theta_target(theta_s, s.sigma_tl2, &mut base.child(1))?;
    let (source, _) = gen_data(theta_s, s.n_source, s.response, s.noise_sd, &mut base.child(2))?;
    let (target, _) = gen_data(&theta_t, s.n_target, s.response, s.noise_sd, &mut base.child(3))?;
    let (test, test_mean) = gen_data(&theta_t, s.n_test, s.response, s.noise_sd, &mut base.child(4))?;
    Ok(Data {
        source,
        target,
        test,
        test_mean,
    })
}

fn fit_linear_source(source: &Dataset, ridge: f64) -> Result<(SourceModel, &'static str)> {
    match source.response {
        ResponseKind::Continuous => fit_ols(source).map(|m| (m, "mle")),
        ResponseKind::Binary => match fit_logistic(source) {
            Ok(m) => Ok((m, "mle")),
            Err(RecastError::Separation { .. }) => fit_logistic_penalized(source, ridge).map(|m| (m, "ridge")),
            Err(e) => Err(e),
        },
    }
}

/// Point predictions against the test set: RMSE for continuous responses,
/// AUC for binary ones.
fn score_points(row: &mut MetricsRow, d: &Data, points: &[f64]) -> Result<()> {
    match d.test.response {
        ResponseKind::Continuous => {
            row.rmse_observed = rmse(points, &d.test.y)?;
            row.rmse_mean = rmse(points, &d.test_mean)?;
        }
        ResponseKind::Binary => row.auc = auc(points, &d.test.y)?,
    }
    Ok(())
}

fn run_recast(
    row: &mut MetricsRow,
    model: &SourceModel,
    d: &Data,
    cfg: &SimConfig,
    alphas: &[f64],
    cal_rng: &mut Rng,
    pred_rng: &Rng,
) -> Result<()> {
    let scores = model.score_rows(&d.target.x)?;
    let target = ScoredTarget::new(scores, d.target.y.clone(), d.target.response)?;
    let cal = calibrate(&target, &cfg.recast, cal_rng)?;
    row.accept_rate = cal.chain.accept_rate;
    row.floor_events = cal.chain.floor_events;
    let deltas = cal.posterior.deltas();
    row.delta_mean = deltas.iter().sum::<f64>() / deltas.len() as f64;
    let mut gammas: Vec<f64> = (0..cal.chain.len()).map(|i| cal.chain.state(i)[1].exp()).collect();
    gammas.sort_by(f64::total_cmp);
    row.gamma_median = crate::predictive::quantile_sorted(&gammas, 0.5);

    let test_scores = model.score_rows(&d.test.x)?;
    // Each test point owns a keyed stream, so the parallel map is deterministic.
    let preds = test_scores
        .par_iter()
        .enumerate()
        .map(|(i, &f)| predict_point(&cal.posterior, f, alphas, &cfg.recast.predictive, &mut pred_rng.child(i as u64)))
        .collect::<Result<Vec<_>>>()?;
    let points: Vec<f64> = preds.iter().map(|p| p.point).collect();
    let sets: Vec<_> = preds.into_iter().map(|p| p.sets).collect();
    score_points(row, d, &points)?;
    row.coverage = empirical_coverage(&sets, &d.test.y)?;
    Ok(())
}

fn network_points(model: &SourceModel, d: &Data) -> Result<Vec<f64>> {
    let s = model.score_rows(&d.test.x)?;
    Ok(match d.test.response {
        ResponseKind::Continuous => s,
        ResponseKind::Binary => s.into_iter().map(expit).collect(),
    })
}

/// Simulates one replicate of `scenario` and evaluates every configured
/// method on the same source, target and test draws.
pub fn run_replicate(scenario: &Scenario, replicate: usize, theta_s: &[f64], cfg: &SimConfig) -> ReplicateOutput {
    let levels = cfg.nominal_levels.len();
    let alphas = cfg.alphas();
    let base = Rng::new(derive_seed(cfg.master_seed, &[scenario.key(), replicate as u64]));
    let mut rows = Vec::with_capacity(cfg.methods.len());
    let mut seconds = Vec::with_capacity(cfg.methods.len());

    let data = scenario.validate().and_then(|_| simulate(scenario, theta_s, &base));
    let data = match data {
        Ok(d) => d,
        Err(e) => {
            for &m in &cfg.methods {
                let mut row = MetricsRow::empty(*scenario, replicate, m, levels);
                row.error = e.to_string();
                rows.push(row);
                seconds.push(0.0);
            }
            return ReplicateOutput { rows, seconds };
        }
    };

    let mut source_mlp: Option<Result<SourceModel>> = None;
    for &method in &cfg.methods {
        let start = Instant::now();
        let mut row = MetricsRow::empty(*scenario, replicate, method, levels);
        let outcome: Result<()> = (|| match method {
            Method::RecastLinear => {
                let (model, how) = fit_linear_source(&data.source, cfg.ridge_fallback)?;
                row.source_fit = how.into();
                run_recast(&mut row, &model, &data, cfg, &alphas, &mut base.child(10), &base.child(11))
            }
            Method::RecastDnn => {
                let src = source_mlp
                    .get_or_insert_with(|| fit_mlp(&data.source, &cfg.mlp, &mut base.child(20)))
                    .clone()?;
                row.source_fit = "mlp".into();
                run_recast(&mut row, &src, &data, cfg, &alphas, &mut base.child(21), &base.child(22))
            }
            Method::TargetDnn => {
                let model = fit_mlp(&data.target, &cfg.mlp, &mut base.child(30))?;
                score_points(&mut row, &data, &network_points(&model, &data)?)
            }
            Method::UnfreezeDnn => {
                let src = source_mlp
                    .get_or_insert_with(|| fit_mlp(&data.source, &cfg.mlp, &mut base.child(20)))
                    .clone()?;
                row.source_fit = "mlp".into();
                let model = unfreeze_last_layer(&src, &data.target, &cfg.mlp, &mut base.child(40))?;
                score_points(&mut row, &data, &network_points(&model, &data)?)
            }
        })();
        if let Err(e) = outcome {
            log::warn!(
                "{} replicate {replicate} n_T={} sigma_tl2={}: {e}",
                method.id(),
                scenario.n_target,
                scenario.sigma_tl2
            );
            let keep_fit = row.source_fit.clone();
            row = MetricsRow::empty(*scenario, replicate, method, levels);
            row.source_fit = keep_fit;
            row.error = e.to_string();
        }
        rows.push(row);
        seconds.push(start.elapsed().as_secs_f64());
    }
    ReplicateOutput { rows, seconds }
}

/// Suite-wide source parameter for feature count `p`.
pub fn suite_theta_source(master_seed: u64, p: usize) -> Vec<f64> {
    make_theta_source(p, &mut Rng::new(derive_seed(master_seed, &[THETA_STREAM, p as u64])))
}

// ---------------------------------------------------------------------------
// Results CSV

const FIXED_COLUMNS: [&str; 19] = [
    "response",
    "n_target",
    "sigma_tl2",
    "p",
    "n_source",
    "n_test",
    "noise_sd",
    "replicate",
    "method",
    "status",
    "error",
    "source_fit",
    "rmse_observed",
    "rmse_mean",
    "auc",
    "delta_mean",
    "gamma_median",
    "accept_rate",
    "floor_events",
];

fn coverage_column(level: f64) -> String {
    format!("cov_{level}")
}

pub fn results_header(levels: &[f64]) -> Vec<String> {
    FIXED_COLUMNS
        .iter()
        .map(|s| s.to_string())
        .chain(levels.iter().map(|&l| coverage_column(l)))
        .collect()
}

fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}

fn parse_f64(s: &str) -> Result<f64> {
    if s.is_empty() {
        Ok(f64::NAN)
    } else {
        s.parse().map_err(|e| RecastError::InvalidData(format!("bad number '{s}': {e}")))
    }
}

fn parse_usize(s: &str) -> Result<usize> {
    s.parse().map_err(|e| RecastError::InvalidData(format!("bad integer '{s}': {e}")))
}

fn row_record(r: &MetricsRow) -> Vec<String> {
    let s = &r.scenario;
    let mut out = vec![
        s.response.to_string(),
        s.n_target.to_string(),
        fmt_f64(s.sigma_tl2),
        s.p.to_string(),
        s.n_source.to_string(),
        s.n_test.to_string(),
        fmt_f64(s.noise_sd),
        r.replicate.to_string(),
        r.method.id().to_string(),
        if r.ok() { "ok".into() } else { "failed".into() },
        r.error.clone(),
        r.source_fit.clone(),
        fmt_f64(r.rmse_observed),
        fmt_f64(r.rmse_mean),
        fmt_f64(r.auc),
        fmt_f64(r.delta_mean),
        fmt_f64(r.gamma_median),
        fmt_f64(r.accept_rate),
        r.floor_events.to_string(),
    ];
    out.extend(r.coverage.iter().map(|&c| fmt_f64(c)));
    out
}

fn parse_record(rec: &csv::StringRecord, levels: usize) -> Result<MetricsRow> {
    if rec.len() != FIXED_COLUMNS.len() + levels {
        return Err(RecastError::InvalidData(format!(
            "results row has {} fields, expected {}",
            rec.len(),
            FIXED_COLUMNS.len() + levels
        )));
    }
    let response = match &rec[0] {
        "continuous" => ResponseKind::Continuous,
        "binary" => ResponseKind::Binary,
        other => return Err(RecastError::InvalidData(format!("bad response '{other}'"))),
    };
    let scenario = Scenario {
        response,
        n_target: parse_usize(&rec[1])?,
        sigma_tl2: parse_f64(&rec[2])?,
        p: parse_usize(&rec[3])?,
        n_source: parse_usize(&rec[4])?,
        n_test: parse_usize(&rec[5])?,
        noise_sd: parse_f64(&rec[6])?,
    };
    Ok(MetricsRow {
        scenario,
        replicate: parse_usize(&rec[7])?,
        method: rec[8].parse()?,
        error: rec[10].to_string(),
        source_fit: rec[11].to_string(),
        rmse_observed: parse_f64(&rec[12])?,
        rmse_mean: parse_f64(&rec[13])?,
        auc: parse_f64(&rec[14])?,
        delta_mean: parse_f64(&rec[15])?,
        gamma_median: parse_f64(&rec[16])?,
        accept_rate: parse_f64(&rec[17])?,
        floor_events: rec[18].parse().map_err(|_| RecastError::InvalidData("bad floor_events".into()))?,
        coverage: (0..levels)
            .map(|k| parse_f64(&rec[FIXED_COLUMNS.len() + k]))
            .collect::<Result<_>>()?,
    })
}

pub fn write_results<W: Write>(rows: &[MetricsRow], levels: &[f64], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(results_header(levels))?;
    for r in rows {
        wtr.write_record(row_record(r))?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_results<R: std::io::Read>(r: R, levels: &[f64]) -> Result<Vec<MetricsRow>> {
    let mut rdr = csv::Reader::from_reader(r);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != results_header(levels) {
        return Err(RecastError::InvalidData(
            "results header does not match the configured nominal levels".into(),
        ));
    }
    rdr.records()
        .map(|rec| parse_record(&rec?, levels.len()))
        .collect()
}

pub fn timings_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".timings.csv");
    out.with_file_name(name)
}

/// Runs every scenario × replicate, writing the results CSV at `out`.
///
/// Each finished replicate is appended immediately, so an interrupted run
/// can be continued with `resume`: replicates whose rows are all present are
/// skipped, partial ones are recomputed. On completion the file is rewritten
/// in canonical order (scenario order, replicate, method), which makes the
/// final bytes independent of thread count and of interruptions. Wall-clock
/// timings go to a separate `<out>.timings.csv`.
pub fn run_grid(scenarios: &[Scenario], cfg: &SimConfig, out: &Path, resume: bool, threads: usize) -> Result<Vec<MetricsRow>> {
    cfg.validate()?;
    for s in scenarios {
        s.validate()?;
    }
    let levels = &cfg.nominal_levels;
    let index_of = |s: &Scenario| scenarios.iter().position(|x| x == s);

    let mut kept: Vec<MetricsRow> = Vec::new();
    if resume && out.exists() {
        let previous = read_results(File::open(out)?, levels)?;
        let mut per_key: HashMap<(usize, usize), Vec<MetricsRow>> = HashMap::new();
        for r in previous {
            if let Some(si) = index_of(&r.scenario) {
                if r.replicate < cfg.replicates && cfg.methods.contains(&r.method) {
                    per_key.entry((si, r.replicate)).or_default().push(r);
                }
            }
        }
        for (_, rows) in per_key {
            let methods: HashSet<Method> = rows.iter().map(|r| r.method).collect();
            if methods.len() == cfg.methods.len() && rows.len() == cfg.methods.len() {
                kept.extend(rows);
            }
        }
    }
    kept.sort_by_key(|r| (index_of(&r.scenario), r.replicate, r.method));
    let done: HashSet<(usize, usize)> = kept
        .iter()
        .map(|r| (index_of(&r.scenario).unwrap_or(usize::MAX), r.replicate))
        .collect();

    // Start the file from the completed replicates only.
    {
        let f = File::create(out)?;
        write_results(&kept, levels, BufWriter::new(f))?;
    }
    let tpath = timings_path(out);
    if !(resume && tpath.exists()) {
        let mut t = File::create(&tpath)?;
        writeln!(t, "response,n_target,sigma_tl2,replicate,method,seconds")?;
    }

    let jobs: Vec<(usize, usize)> = (0..scenarios.len())
        .flat_map(|si| (0..cfg.replicates).map(move |r| (si, r)))
        .filter(|k| !done.contains(k))
        .collect();

    let mut thetas: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for s in scenarios {
        thetas.entry(s.p).or_insert_with(|| suite_theta_source(cfg.master_seed, s.p));
    }

    let sink = Mutex::new((
        BufWriter::new(OpenOptions::new().append(true).open(out)?),
        BufWriter::new(OpenOptions::new().append(true).open(&tpath)?),
    ));
    let work = || -> Result<Vec<MetricsRow>> {
        jobs.par_iter()
            .map(|&(si, rep)| {
                let s = &scenarios[si];
                let res = run_replicate(s, rep, &thetas[&s.p], cfg);
                let mut guard = sink.lock().map_err(|_| RecastError::Io("writer lock poisoned".into()))?;
                let (rw, tw) = &mut *guard;
                {
                    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(&mut *rw);
                    for r in &res.rows {
                        wtr.write_record(row_record(r))?;
                    }
                    wtr.flush()?;
                }
                rw.flush()?;
                for (r, secs) in res.rows.iter().zip(&res.seconds) {
                    writeln!(tw, "{},{},{},{},{},{secs:.3}", s.response, s.n_target, s.sigma_tl2, rep, r.method.id())?;
                }
                tw.flush()?;
                Ok(res.rows)
            })
            .collect::<Result<Vec<Vec<MetricsRow>>>>()
            .map(|v| v.into_iter().flatten().collect())
    };
    let fresh = if threads == 0 {
        work()?
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| RecastError::Config(format!("thread pool: {e}")))?
            .install(work)?
    };
    drop(sink);

    let mut all = kept;
    all.extend(fresh);
    all.sort_by_key(|r| (index_of(&r.scenario), r.replicate, r.method));
    let tmp = out.with_extension("csv.tmp");
    write_results(&all, levels, BufWriter::new(File::create(&tmp)?))?;
    std::fs::rename(&tmp, out)?;
    Ok(all)
}

// ---------------------------------------------------------------------------
// Summaries

/// Mean (standard error) of each metric over the successful replicates of
/// one scenario × method.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub scenario: Scenario,
    pub method: Method,
    pub replicates: usize,
    pub failures: usize,
    pub rmse_observed: (f64, f64),
    pub rmse_mean: (f64, f64),
    pub auc: (f64, f64),
    pub coverage_95: (f64, f64),
    pub delta_mean: (f64, f64),
}

pub fn summarize(rows: &[MetricsRow], levels: &[f64]) -> Vec<SummaryRow> {
    let mut groups: Vec<((Scenario, Method), Vec<&MetricsRow>)> = Vec::new();
    for r in rows {
        match groups.iter_mut().find(|((s, m), _)| *s == r.scenario && *m == r.method) {
            Some((_, g)) => g.push(r),
            None => groups.push(((r.scenario, r.method), vec![r])),
        }
    }
    groups
        .into_iter()
        .map(|((scenario, method), g)| {
            let ok: Vec<&&MetricsRow> = g.iter().filter(|r| r.ok()).collect();
            SummaryRow {
                scenario,
                method,
                replicates: ok.len(),
                failures: g.len() - ok.len(),
                rmse_observed: mean_se(ok.iter().map(|r| r.rmse_observed)),
                rmse_mean: mean_se(ok.iter().map(|r| r.rmse_mean)),
                auc: mean_se(ok.iter().map(|r| r.auc)),
                coverage_95: mean_se(ok.iter().map(|r| r.coverage_at(levels, 0.95).unwrap_or(f64::NAN))),
                delta_mean: mean_se(ok.iter().map(|r| r.delta_mean)),
            }
        })
        .collect()
}

pub fn write_summary<W: Write>(rows: &[SummaryRow], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "response", "n_target", "sigma_tl2", "method", "replicates", "failures", "rmse_observed", "rmse_observed_se",
        "rmse_mean", "rmse_mean_se", "auc", "auc_se", "coverage_95", "coverage_95_se", "delta_mean", "delta_mean_se",
    ])?;
    for r in rows {
        let s = &r.scenario;
        let mut rec = vec![
            s.response.to_string(),
            s.n_target.to_string(),
            fmt_f64(s.sigma_tl2),
            r.method.id().to_string(),
            r.replicates.to_string(),
            r.failures.to_string(),
        ];
        for (m, se) in [r.rmse_observed, r.rmse_mean, r.auc, r.coverage_95, r.delta_mean] {
            rec.push(fmt_f64(m));
            rec.push(fmt_f64(se));
        }
        wtr.write_record(rec)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Reliability curve of one scenario × method across its successful
/// replicates.
pub fn reliability_for(rows: &[MetricsRow], levels: &[f64], scenario: &Scenario, method: Method) -> Result<Vec<ReliabilityPoint>> {
    let reps: Vec<Vec<f64>> = rows
        .iter()
        .filter(|r| r.ok() && r.scenario == *scenario && r.method == method)
        .map(|r| r.coverage.clone())
        .collect();
    reliability_curve(levels, &reps)
}

/// CSV with header `nominal,empirical,se`.
pub fn write_reliability<W: Write>(points: &[ReliabilityPoint], mut w: W) -> Result<()> {
    writeln!(w, "nominal,empirical,se")?;
    for p in points {
        writeln!(w, "{},{},{}", p.nominal, fmt_f64(p.empirical), fmt_f64(p.se))?;
    }
    Ok(())
}
