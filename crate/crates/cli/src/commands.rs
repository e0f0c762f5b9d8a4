//! The five subcommands. Each takes an already-parsed configuration and
//! returns what it wrote, so tests can drive them without a process.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use snapzip_core::analysis::{
    data_collapse, difference_stencil, extremum, smooth, smoothed_derivative, smoothing_stencil, CollapseOptions,
    CollapseSeries, Column, Series, SweepRow, SweepTable,
};
use snapzip_core::born_models::BornModel;
use snapzip_core::estimators::{
    cid_entropy, correlation_disorder_avg, direct_entropy_runs, gamma_error, gamma_subleading, sample_budget,
    vortex_free_energy,
};
use snapzip_core::exec::map_indexed;
use snapzip_core::lattice::{format_snapshots, BondField, Snapshot};
use snapzip_core::lzcid::ShuffleBaseline;
use snapzip_core::sampler::{sample_chain, ChainConfig, ChainRun};
use snapzip_core::Exec;

use crate::config::{sha256_hex, Observable, RunConfig};
use crate::error::{CliError, CliResult};

const VERSION: &str = env!("CARGO_PKG_VERSION");

fn header(kind: &str, hash: &str) -> String {
    format!("# snapzip {VERSION} {kind} sha256={hash}\n")
}

/// Fails early when the directory that should hold `path` is missing.
pub fn check_parent(path: &Path) -> CliResult<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() && !dir.is_dir() => Err(CliError::MissingDirectory(dir.to_path_buf())),
        _ => Ok(()),
    }
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    check_parent(path)?;
    std::fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn read_file(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

/// Builds or extends the baseline table at `out`. Entries already in the
/// file are kept as they are; a file made with another `K` or seed is an
/// error rather than being mixed.
pub fn cmd_baseline(lengths: &[usize], k: usize, seed: u64, out: &Path, exec: Exec) -> CliResult<ShuffleBaseline> {
    check_parent(out)?;
    let mut table = if out.exists() {
        let t = ShuffleBaseline::from_text(&read_file(out)?)
            .map_err(|source| CliError::Data { path: out.to_path_buf(), source })?;
        if t.k != k || t.seed != seed {
            return Err(CliError::Config {
                path: out.to_path_buf(),
                reason: format!("existing table has K = {} and seed = {}, requested K = {k} and seed = {seed}", t.k, t.seed),
            });
        }
        t
    } else {
        ShuffleBaseline::new(k, seed)
    };
    table.extend(lengths, exec)?;
    let text = header("baseline", &sha256_hex(format!("K={k} seed={seed}").as_bytes())) + &table.to_text();
    write_file(out, &text)?;
    Ok(table)
}

/// Loads the configured baseline table, adding any lengths it lacks. A
/// configured file is created or extended on disk.
pub fn load_baseline(cfg: &RunConfig, lengths: &[usize], exec: Exec) -> CliResult<ShuffleBaseline> {
    let seed = cfg.baseline_seed()?;
    match &cfg.estimator.baseline_file {
        Some(path) if path.exists() => {
            let mut t = ShuffleBaseline::from_text(&read_file(path)?)
                .map_err(|source| CliError::Data { path: path.clone(), source })?;
            if lengths.iter().any(|&n| t.get(n).is_err()) {
                let (k, s) = (t.k, t.seed);
                t = cmd_baseline(lengths, k, s, path, exec)?;
            }
            Ok(t)
        }
        Some(path) => cmd_baseline(lengths, cfg.estimator.baseline_k, seed, path, exec),
        None => Ok(ShuffleBaseline::build(lengths, cfg.estimator.baseline_k, seed, exec)?),
    }
}

fn build_model(cfg: &RunConfig, l: usize, param: f64) -> snapzip_core::Result<BornModel> {
    let kind = cfg.kind().map_err(|e| snapzip_core::Error::Invalid(e.to_string()))?;
    let boundary = cfg.boundary().map_err(|e| snapzip_core::Error::Invalid(e.to_string()))?;
    let opts = cfg.contract_options().map_err(|e| snapzip_core::Error::Invalid(e.to_string()))?;
    BornModel::build(kind, param, l, boundary, opts)
}

/// Runs every `(task, chain)` job of the configuration across the pool and
/// regroups the chains by task. Each task keeps its own error.
fn run_tasks(cfg: &RunConfig, exec: Exec) -> CliResult<Vec<snapzip_core::Result<Vec<ChainRun>>>> {
    let tasks = cfg.tasks()?;
    let chains = cfg.sampler.chains;
    let total = cfg.sampler.samples;
    let templates = (0..tasks.len()).map(|t| cfg.chain_template(t)).collect::<CliResult<Vec<_>>>()?;
    let jobs = map_indexed(exec, tasks.len() * chains, |j| {
        let (t, c) = (j / chains, j % chains);
        let (l, param) = tasks[t];
        let share = total / chains + usize::from(c < total % chains);
        let chain_cfg = ChainConfig { samples: share, chain: templates[t].chain + c as u64, ..templates[t].clone() };
        build_model(cfg, l, param).and_then(|m| sample_chain(&m, &chain_cfg))
    });
    let mut out: Vec<snapzip_core::Result<Vec<ChainRun>>> = Vec::with_capacity(tasks.len());
    let mut it = jobs.into_iter();
    for _ in 0..tasks.len() {
        out.push(it.by_ref().take(chains).collect());
    }
    Ok(out)
}

fn param_label(param: f64) -> String {
    format!("{param:.6}")
}

/// Writes `<model>_<param>_L<L>.txt` snapshot files and `..._logp.csv`
/// sidecars under `dir`. Returns the snapshot file paths in task order.
pub fn cmd_sample(cfg: &RunConfig, dir: &Path, exec: Exec) -> CliResult<Vec<PathBuf>> {
    cfg.validate()?;
    if !dir.is_dir() {
        return Err(CliError::MissingDirectory(dir.to_path_buf()));
    }
    let kind = cfg.kind()?;
    let hash = cfg.hash();
    let tasks = cfg.tasks()?;
    let results = run_tasks(cfg, exec)?;
    let mut written = Vec::new();
    for ((l, param), runs) in tasks.into_iter().zip(results) {
        let runs = runs.map_err(|source| CliError::Task { model: kind.name().into(), param, l, source })?;
        let stem = format!("{}_{}_L{l}", kind.name(), param_label(param));
        let snaps: Vec<&Snapshot> = runs.iter().flat_map(|r| r.samples.iter().map(|s| &s.snapshot)).collect();
        let mut text = header("snapshots", &hash);
        let _ = writeln!(text, "# model={} param={param} L={l} samples={}", kind.name(), snaps.len());
        text.push_str(&format_snapshots(snaps));
        let snap_path = dir.join(format!("{stem}.txt"));
        write_file(&snap_path, &text)?;

        let mut side = header("log-probabilities", &hash);
        for r in &runs {
            let _ = writeln!(side, "# chain {} acceptance {:.6}", r.chain, r.acceptance());
        }
        side.push_str("chain,index,log2p\n");
        for r in &runs {
            for (i, s) in r.samples.iter().enumerate() {
                let _ = writeln!(side, "{},{i},{:.12e}", r.chain, s.log2p);
            }
        }
        write_file(&dir.join(format!("{stem}_logp.csv")), &side)?;
        written.push(snap_path);
    }
    Ok(written)
}

fn sweep_row(
    cfg: &RunConfig,
    l: usize,
    param: f64,
    runs: &[ChainRun],
    baseline: Option<&ShuffleBaseline>,
    exec: Exec,
) -> snapzip_core::Result<SweepRow> {
    let model = build_model(cfg, l, param)?;
    let mut row = SweepRow::empty(model.kind().name(), param, l);
    let direct = direct_entropy_runs(runs, model.sites())?;
    row.n_s = direct.n_s;
    row.s_d = direct.s_d;
    row.s_d_err = direct.standard_error;
    if let Some(b) = baseline {
        let snaps: Vec<Snapshot> = runs.iter().flat_map(|r| r.samples.iter().map(|s| s.snapshot.clone())).collect();
        let c = cid_entropy(&snaps, b, exec)?;
        row.cid = c.s_d;
        row.cid_err = c.standard_error;
    }
    if cfg.estimator.observable != Observable::None {
        let planar = model
            .as_planar()
            .ok_or_else(|| snapzip_core::Error::Invalid("observable needs a planar model".into()))?;
        let bonds: Vec<BondField> = runs.iter().flat_map(|r| r.samples.iter().filter_map(|s| s.bonds.clone())).collect();
        let est = match cfg.estimator.observable {
            Observable::Vortex => vortex_free_energy(planar, &bonds, cfg.estimator.vortex_exponent, exec)?,
            _ => correlation_disorder_avg(planar, &bonds, exec)?,
        };
        row.obs = est.mean;
        row.obs_err = est.standard_error;
        if est.dropped > 0 {
            row.status = format!("ok ({} contractions dropped)", est.dropped);
        }
    }
    Ok(row)
}

/// One row per `(L, param)`. Failures are recorded in the status column and
/// do not stop the sweep.
pub fn cmd_sweep(cfg: &RunConfig, out: Option<&Path>, exec: Exec) -> CliResult<SweepTable> {
    cfg.validate()?;
    if let Some(p) = out {
        check_parent(p)?;
    }
    let baseline = if cfg.estimator.cid {
        let lengths = cfg.model.sizes.iter().map(|&l| cfg.sites(l)).collect::<CliResult<Vec<_>>>()?;
        Some(load_baseline(cfg, &lengths, exec)?)
    } else {
        None
    };
    let kind = cfg.kind()?;
    let mut table = SweepTable { comments: sweep_comments(cfg, baseline.as_ref())?, rows: Vec::new() };
    let results = run_tasks(cfg, exec)?;
    for ((l, param), runs) in cfg.tasks()?.into_iter().zip(results) {
        let row = runs.and_then(|r| sweep_row(cfg, l, param, &r, baseline.as_ref(), exec));
        table.rows.push(row.unwrap_or_else(|e| {
            let mut r = SweepRow::empty(kind.name(), param, l);
            r.status = format!("error: {e}");
            r
        }));
    }
    if let Some(p) = out {
        write_file(p, &table.to_csv())?;
    }
    Ok(table)
}

fn sweep_comments(cfg: &RunConfig, baseline: Option<&ShuffleBaseline>) -> CliResult<Vec<String>> {
    let mut c = vec![format!("snapzip {VERSION} sweep sha256={}", cfg.hash())];
    c.push(format!(
        "model={} boundary={} samples={} chains={} seed={}",
        cfg.kind()?.name(),
        cfg.model.boundary,
        cfg.sampler.samples,
        cfg.sampler.chains,
        cfg.seed()?
    ));
    c.push(format!("tol={:e} bond_cap={} observable={:?}", cfg.estimator.tol, cfg.estimator.bond_cap, cfg.estimator.observable));
    if let Some(b) = baseline {
        c.push(format!("baseline K={} seed={}", b.k, b.seed));
    }
    Ok(c)
}

/// Post-processing requested on the command line.
#[derive(Clone, Debug, PartialEq)]
pub struct AnalyzeOps {
    pub column: Column,
    pub smooth: usize,
    /// Derivative orders; `0` writes the smoothed column itself.
    pub derivatives: Vec<usize>,
    /// Adds the location of the largest-magnitude point of each derivative.
    pub peaks: bool,
    pub gamma: bool,
    pub collapse: Option<CollapseOptions>,
}

impl AnalyzeOps {
    pub fn new(column: Column) -> Self {
        Self { column, smooth: 0, derivatives: Vec::new(), peaks: false, gamma: false, collapse: None }
    }
}

/// One line of a derived table.
#[derive(Clone, Debug, PartialEq)]
pub struct DerivedRow {
    pub model: String,
    pub l: usize,
    pub param: f64,
    pub quantity: String,
    pub value: f64,
    pub err: f64,
}

fn fmt(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        format!("{v:.10e}")
    }
}

fn fmt_stencil(s: &[f64]) -> String {
    s.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(" ")
}

fn push_series(rows: &mut Vec<DerivedRow>, model: &str, l: usize, quantity: &str, s: &Series) {
    for (i, (&x, &y)) in s.xs.iter().zip(&s.ys).enumerate() {
        let err = s.errs.as_ref().map_or(f64::NAN, |e| e[i]);
        rows.push(DerivedRow { model: model.into(), l, param: x, quantity: quantity.into(), value: y, err });
    }
}

/// Applies `ops` to every `(model, L)` group of `table`.
pub fn analyze(table: &SweepTable, ops: &AnalyzeOps) -> CliResult<(Vec<String>, Vec<DerivedRow>)> {
    let col = ops.column.name();
    let mut comments = vec![format!("column={col} smooth={}", ops.smooth)];
    if ops.smooth > 0 {
        comments.push(format!("smoothing stencil: {}", fmt_stencil(&smoothing_stencil(ops.smooth))));
    }
    let mut rows = Vec::new();
    let groups = table.groups();
    let mut stencils_noted = false;
    for (model, l) in groups.keys() {
        let s = table.series(model, *l, ops.column)?;
        if s.len() > 1 {
            s.step()?;
        }
        if !stencils_noted && !ops.derivatives.is_empty() {
            let h = s.step()?;
            for &k in ops.derivatives.iter().filter(|&&k| k > 0) {
                comments.push(format!("difference stencil order {k}: {} (h = {h})", fmt_stencil(&difference_stencil(k, h)?)));
            }
            stencils_noted = true;
        }
        for &k in &ops.derivatives {
            let d = if k == 0 { smooth(&s, ops.smooth)? } else { smoothed_derivative(&s, ops.smooth, k)? };
            let quantity = if k == 0 { format!("smooth_{col}") } else { format!("d{k}_{col}") };
            push_series(&mut rows, model, *l, &quantity, &d);
            if ops.peaks {
                if let Some((x, y)) = extremum(&d) {
                    rows.push(DerivedRow { model: model.clone(), l: *l, param: x, quantity: format!("peak_{quantity}"), value: y, err: f64::NAN });
                }
            }
        }
    }
    if ops.gamma {
        comments.push(format!("gamma = 2L [{col}(2L) - {col}(L)] after smoothing"));
        for (model, l) in groups.keys() {
            if !groups.contains_key(&(model.clone(), 2 * l)) {
                continue;
            }
            let smoothed = |l: usize| -> CliResult<Series> {
                let s = table.series(model, l, ops.column)?;
                Ok(if ops.smooth == 0 { s } else { smooth(&s, ops.smooth)? })
            };
            let (a, b) = (smoothed(*l)?, smoothed(2 * l)?);
            for (i, &x) in a.xs.iter().enumerate() {
                let Some(j) = b.xs.iter().position(|&y| (y - x).abs() <= 1e-9 * (1.0 + x.abs())) else {
                    continue;
                };
                let ea = a.errs.as_ref().map_or(f64::NAN, |e| e[i]);
                let eb = b.errs.as_ref().map_or(f64::NAN, |e| e[j]);
                rows.push(DerivedRow {
                    model: model.clone(),
                    l: *l,
                    param: x,
                    quantity: format!("gamma_{col}"),
                    value: gamma_subleading(a.ys[i], b.ys[j], *l),
                    err: gamma_error(ea, eb, *l),
                });
            }
        }
    }
    if let Some(opts) = ops.collapse {
        let models: std::collections::BTreeSet<&String> = groups.keys().map(|(m, _)| m).collect();
        for model in models {
            let data: Vec<CollapseSeries> = groups
                .iter()
                .filter(|((m, _), _)| m == model)
                .map(|((_, l), r)| CollapseSeries {
                    l: *l,
                    xs: r.iter().map(|x| x.param).collect(),
                    ys: r.iter().map(|x| ops.column_value(x)).collect(),
                })
                .collect();
            let fit = data_collapse(&data, opts)?;
            comments.push(format!(
                "collapse {model}: window=[{}, {}] start=({}, {}) score={:e} points={}",
                opts.window.0, opts.window.1, opts.start.0, opts.start.1, fit.score, fit.points
            ));
            for (q, v) in [("collapse_critical", fit.critical), ("collapse_nu", fit.nu)] {
                rows.push(DerivedRow { model: model.clone(), l: 0, param: f64::NAN, quantity: q.into(), value: v, err: f64::NAN });
            }
        }
    }
    Ok((comments, rows))
}

impl AnalyzeOps {
    fn column_value(&self, r: &SweepRow) -> f64 {
        match self.column {
            Column::SD => r.s_d,
            Column::Cid => r.cid,
            Column::Obs => r.obs,
        }
    }
}

pub fn derived_csv(input_hash: &str, comments: &[String], rows: &[DerivedRow]) -> String {
    let mut out = header("analysis", input_hash);
    for c in comments {
        let _ = writeln!(out, "# {c}");
    }
    out.push_str("model,L,param,quantity,value,err\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{},{},{}", r.model, r.l, fmt(r.param), r.quantity, fmt(r.value), fmt(r.err));
    }
    out
}

/// Reads a sweep table, applies `ops` and writes the derived table.
pub fn cmd_analyze(input: &Path, ops: &AnalyzeOps, out: &Path) -> CliResult<Vec<DerivedRow>> {
    check_parent(out)?;
    let text = read_file(input)?;
    let table = SweepTable::from_csv(&text).map_err(|source| CliError::Data { path: input.to_path_buf(), source })?;
    let (comments, rows) = analyze(&table, ops).map_err(|e| match e {
        CliError::Core(source) => CliError::Data { path: input.to_path_buf(), source },
        other => other,
    })?;
    write_file(out, &derived_csv(&sha256_hex(text.as_bytes()), &comments, &rows))?;
    Ok(rows)
}

/// One line of a budget table.
#[derive(Clone, Debug, PartialEq)]
pub struct BudgetRow {
    pub l: usize,
    pub param: f64,
    pub n_s: Option<usize>,
    pub status: String,
}

/// Smallest doubling `N_s` with `σ_CID ≤ α ε` for every `(L, param)`. The
/// reference entropy comes from a separate direct estimate with
/// `reference_samples` samples.
pub fn cmd_budget(cfg: &RunConfig, alpha: f64, cap: usize, out: Option<&Path>, exec: Exec) -> CliResult<Vec<BudgetRow>> {
    cfg.validate()?;
    if let Some(p) = out {
        check_parent(p)?;
    }
    let lengths = cfg.model.sizes.iter().map(|&l| cfg.sites(l)).collect::<CliResult<Vec<_>>>()?;
    let baseline = load_baseline(cfg, &lengths, exec)?;
    let chains = cfg.sampler.chains;
    let mut rows = Vec::new();
    for (t, (l, param)) in cfg.tasks()?.into_iter().enumerate() {
        let template = cfg.chain_template(t)?;
        let result = (|| -> snapzip_core::Result<usize> {
            let model = build_model(cfg, l, param)?;
            let draw = |n: usize, offset: u64| -> snapzip_core::Result<Vec<ChainRun>> {
                map_indexed(exec, chains, |c| {
                    let share = n / chains + usize::from(c < n % chains);
                    let chain = template.chain + offset + c as u64;
                    sample_chain(&model, &ChainConfig { samples: share, chain, ..template.clone() })
                })
                .into_iter()
                .collect()
            };
            let reference = direct_entropy_runs(&draw(cfg.estimator.reference_samples, 1 << 19)?, model.sites())?;
            sample_budget(alpha, cap, |n| {
                let runs = draw(n, (n.trailing_zeros() as u64) << 12)?;
                let snaps: Vec<Snapshot> = runs.iter().flat_map(|r| r.samples.iter().map(|s| s.snapshot.clone())).collect();
                let c = cid_entropy(&snaps, &baseline, exec)?;
                Ok((c.standard_error, (c.s_d - reference.s_d).abs()))
            })
        })();
        rows.push(match result {
            Ok(n) => BudgetRow { l, param, n_s: Some(n), status: "ok".into() },
            Err(e) => BudgetRow { l, param, n_s: None, status: format!("error: {e}").replace(',', ";") },
        });
    }
    if let Some(p) = out {
        let mut text = header("budget", &cfg.hash());
        let _ = writeln!(text, "# alpha={alpha} cap={cap} reference_samples={}", cfg.estimator.reference_samples);
        text.push_str("model,param,L,N_s_alpha,status\n");
        let name = cfg.kind()?.name();
        for r in &rows {
            let n = r.n_s.map_or("nan".to_string(), |n| n.to_string());
            let _ = writeln!(text, "{name},{},{},{n},{}", fmt(r.param), r.l, r.status);
        }
        write_file(p, &text)?;
    }
    Ok(rows)
}
