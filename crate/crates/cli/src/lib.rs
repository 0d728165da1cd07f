//! Command-line pipelines for tvlik: simulation, fitting, bandwidth
//! selection, inference, Monte Carlo tables and the count-data application.

pub mod config;
pub mod empirical;
pub mod error;
pub mod io;

use std::path::{Path, PathBuf};

use tvlik::bandwidth::{default_b_grid, select_bandwidth, BandwidthSelection, CvConfig};
use tvlik::estimator::{default_grid, fit_path, FitConfig};
use tvlik::inference::{confidence_bands, PathInference};
use tvlik::models::{simulate, ParamPath};
use tvlik::montecarlo::{run_mc, table1_config, table1_truth, table2_config, table2_covariate, table2_truth, BandwidthRule, McConfig};
use tvlik::{CovariateTransform, Dataset, Family, ModelSpec};

pub use config::{Command, RunConfig};
pub use error::{CliError, CliResult, ErrorKind};

use config::{Dgp, Format};
use io::{csv_bytes, fmt_f64, fmt_opt, write_atomic, Columns};

/// Files written and one summary line per stage.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub summary: Vec<String>,
}

impl Outcome {
    fn note(&mut self, line: String) {
        self.summary.push(line);
    }
}

/// Runs `command` inside a pool of `cfg.threads` workers (the global pool
/// when unset).
pub fn execute(command: Command, cfg: &RunConfig) -> CliResult<Outcome> {
    if let Some(c) = cfg.command {
        if c != command {
            return Err(CliError::config(format!(
                "config is for '{}' but '{}' was requested",
                c.name(),
                command.name()
            )));
        }
    }
    let mut cfg = cfg.clone();
    cfg.command = Some(command);
    match cfg.threads {
        Some(0) => Err(CliError::config("threads must be at least 1")),
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| CliError::new(ErrorKind::Other, e.to_string()))?;
            pool.install(|| run(&cfg))
        }
        None => run(&cfg),
    }
}

/// Executes `cfg.command` and writes its artifacts plus the effective
/// configuration (`<command>_config.json`) into the output directory.
pub fn run(cfg: &RunConfig) -> CliResult<Outcome> {
    let command = cfg.command.ok_or_else(|| CliError::config("no command given"))?;
    let ctx = Ctx::new(cfg);
    let mut out = Outcome::default();
    match command {
        Command::Simulate => cmd_simulate(&ctx, &mut out)?,
        Command::Fit | Command::Infer => cmd_fit(&ctx, command, &mut out)?,
        Command::Cv => cmd_cv(&ctx, &mut out)?,
        Command::Mc => cmd_mc(&ctx, &mut out)?,
        Command::Empirical => cmd_empirical(&ctx, &mut out)?,
    }
    ctx.write(&mut out, &format!("{}_config.json", command.name()), cfg.to_json().into_bytes())?;
    Ok(out)
}

struct Ctx<'a> {
    cfg: &'a RunConfig,
    comment: String,
}

impl<'a> Ctx<'a> {
    fn new(cfg: &'a RunConfig) -> Self {
        let comment = format!(
            "tvlik {} config_sha256={} seed={}",
            env!("CARGO_PKG_VERSION"),
            cfg.hash(),
            cfg.seed
        );
        Self { cfg, comment }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.cfg.io.output_dir.join(name)
    }

    fn write(&self, out: &mut Outcome, name: &str, bytes: Vec<u8>) -> CliResult<()> {
        let path = self.path(name);
        write_atomic(&path, &bytes)?;
        out.files.push(path);
        Ok(())
    }

    fn write_csv(&self, out: &mut Outcome, name: &str, header: &[String], rows: &[Vec<String>]) -> CliResult<()> {
        self.write(out, name, csv_bytes(&self.comment, header, rows)?)
    }

    fn write_json<T: serde::Serialize>(&self, out: &mut Outcome, name: &str, value: &T) -> CliResult<()> {
        let text = serde_json::to_string_pretty(value).map_err(|e| CliError::new(ErrorKind::Other, e.to_string()))?;
        self.write(out, name, text.into_bytes())
    }

    fn input(&self) -> CliResult<&Path> {
        self.cfg
            .io
            .input
            .as_deref()
            .ok_or_else(|| CliError::config("io.input (or --input) is required for this command"))
    }
}

/// Model and path of a simulation design.
pub fn simulation_design(cfg: &RunConfig) -> CliResult<(ModelSpec, ParamPath)> {
    let sim = &cfg.simulate;
    let expect = |family: &str, model: ModelSpec| -> CliResult<ModelSpec> {
        match cfg.model.family.as_deref() {
            Some(f) if f != family => Err(CliError::config(format!(
                "simulate.dgp {:?} implies model family '{family}', config says '{f}'",
                sim.dgp
            ))),
            _ => Ok(model),
        }
    };
    match sim.dgp {
        Dgp::Table1 => Ok((expect("tv_arch", ModelSpec::tv_arch(1))?, table1_truth())),
        Dgp::Table2Dgp1 | Dgp::Table2Dgp2 => {
            let k = if sim.dgp == Dgp::Table2Dgp1 { 1 } else { 2 };
            let model = ModelSpec::tv_parx(1, CovariateTransform::Exp).with_covariate_process(table2_covariate(k)?);
            Ok((expect("tv_parx", model)?, table2_truth()))
        }
        Dgp::Constant => {
            let mut model = cfg.model.build()?;
            let theta = sim
                .theta
                .clone()
                .ok_or_else(|| CliError::config("simulate.theta is required for dgp 'constant'"))?;
            if theta.len() != model.dim() {
                return Err(CliError::config(format!(
                    "simulate.theta has {} entries, the model has {} parameters",
                    theta.len(),
                    model.dim()
                )));
            }
            if let Some([rho, sigma]) = sim.covariate_process {
                model = model.with_covariate_process(ParamPath::constant(vec![rho, sigma]));
            }
            Ok((model, ParamPath::constant(theta)))
        }
    }
}

fn data_header(model: &ModelSpec, with_x: bool) -> Vec<String> {
    let d = model.family.obs_dim();
    let mut h = vec!["t".to_string()];
    if d == 1 {
        h.push("y".into());
    } else {
        h.extend((1..=d).map(|i| format!("y{i}")));
    }
    if with_x {
        h.push("x".into());
    }
    h
}

/// Rows `t, y.., [x]` with `t` counted from 1.
pub fn dataset_rows(data: &Dataset) -> Vec<Vec<String>> {
    (0..data.n())
        .map(|t| {
            let mut r = vec![(t + 1).to_string()];
            r.extend(data.obs(t).iter().map(|v| fmt_f64(*v)));
            if let Some(x) = &data.x {
                r.push(fmt_f64(x[t]));
            }
            r
        })
        .collect()
}

fn cmd_simulate(ctx: &Ctx, out: &mut Outcome) -> CliResult<()> {
    let (model, path) = simulation_design(ctx.cfg)?;
    let sim = &ctx.cfg.simulate;
    let data = simulate(&model, &path, sim.n, ctx.cfg.seed, sim.burn_in)?;
    // A pure PAR design carries no covariate column.
    let with_x = data.x.is_some() && model.family.has_covariate();
    let mut shown = data.clone();
    if !with_x {
        shown.x = None;
    }
    ctx.write_csv(out, "simulate.csv", &data_header(&model, with_x), &dataset_rows(&shown))?;
    let dgp = serde_json::to_string(&sim.dgp).unwrap_or_default();
    out.note(format!("simulate: {} observations of design {dgp} written", sim.n));
    Ok(())
}

/// Loads the input dataset for `model`, merging a separate covariate file when configured.
pub fn load_data(cfg: &RunConfig, model: &ModelSpec, path: &Path) -> CliResult<io::Table> {
    let counts = matches!(model.family, Family::TvParx { .. });
    let needs_x = model.family.has_covariate();
    let separate = cfg.io.covariate_input.as_deref();
    let cols = Columns {
        dim: model.family.obs_dim(),
        counts,
        covariate: needs_x && separate.is_none(),
    };
    let mut table = io::read_dataset(path, cols)?;
    if let (true, Some(cpath)) = (needs_x, separate) {
        let cov = io::read_covariate(cpath)?;
        let x = io::align_covariate(&table.keys, &cov)?;
        table.data = table.data.with_covariate(x).map_err(|e| CliError::data(e.to_string()))?;
    }
    model.check_data(&table.data)?;
    Ok(table)
}

fn cv_config(cfg: &RunConfig, n: usize) -> CliResult<CvConfig> {
    let e = &cfg.estimator;
    let grid = e.cv.grid.clone().unwrap_or_else(|| default_b_grid(n));
    let mut cv = CvConfig::new(grid, e.m).with_leave_out(e.cv.leave_out).with_thin(e.cv.thin);
    cv.kernel = e.kernel()?;
    Ok(cv)
}

fn cv_rows(sel: &BandwidthSelection) -> Vec<Vec<String>> {
    sel.curve
        .iter()
        .map(|p| {
            vec![
                fmt_f64(p.b),
                fmt_opt(p.score),
                p.evaluated.to_string(),
                p.skipped.to_string(),
                u8::from(p.b == sel.b_star).to_string(),
            ]
        })
        .collect()
}

fn cv_header() -> Vec<String> {
    ["b", "score", "evaluated", "skipped", "selected"].map(String::from).to_vec()
}

/// Fixed bandwidth from the config, or the CV choice (with its curve).
fn choose_bandwidth(
    cfg: &RunConfig,
    model: &ModelSpec,
    data: &Dataset,
) -> CliResult<(f64, Option<BandwidthSelection>)> {
    match cfg.estimator.b {
        Some(b) => Ok((b, None)),
        None => {
            let sel = select_bandwidth(model, data, &cv_config(cfg, data.n())?)?;
            Ok((sel.b_star, Some(sel)))
        }
    }
}

fn fit_and_bands(cfg: &RunConfig, model: &ModelSpec, data: &Dataset, b: f64) -> CliResult<PathInference> {
    let e = &cfg.estimator;
    let grid = e.grid.clone().unwrap_or_else(|| default_grid(model, data.n()));
    let fit_cfg = FitConfig::new(e.m, b).with_kernel(e.kernel()?);
    let path = fit_path(model, data, &grid, &fit_cfg)?;
    Ok(confidence_bands(model, data, &path, e.level)?)
}

/// Estimate table: `u`, `{name}_hat`, `se_{name}` and, with `bands`,
/// `lo_{name}`, `hi_{name}`, `boundary`.
pub fn estimate_table(names: &[String], inf: &PathInference, bands: bool) -> (Vec<String>, Vec<Vec<String>>) {
    let mut header = vec!["u".to_string()];
    header.extend(names.iter().map(|n| format!("{n}_hat")));
    header.extend(names.iter().map(|n| format!("se_{n}")));
    if bands {
        header.extend(names.iter().map(|n| format!("lo_{n}")));
        header.extend(names.iter().map(|n| format!("hi_{n}")));
        header.push("boundary".into());
    }
    let d = names.len();
    let cells = |v: &Option<Vec<f64>>| -> Vec<String> {
        match v {
            Some(v) => v.iter().map(|x| fmt_f64(*x)).collect(),
            None => vec![String::new(); d],
        }
    };
    let rows = inf
        .points
        .iter()
        .map(|p| {
            let mut r = vec![fmt_f64(p.u)];
            r.extend(cells(&p.theta_hat));
            r.extend(cells(&p.se));
            if bands {
                r.extend(cells(&p.lo));
                r.extend(cells(&p.hi));
                r.push(u8::from(p.boundary).to_string());
            }
            r
        })
        .collect();
    (header, rows)
}

fn cmd_fit(ctx: &Ctx, command: Command, out: &mut Outcome) -> CliResult<()> {
    let cfg = ctx.cfg;
    let model = cfg.model.build()?;
    let table = load_data(cfg, &model, ctx.input()?)?;
    let data = &table.data;
    let (b, sel) = choose_bandwidth(cfg, &model, data)?;
    if let Some(sel) = &sel {
        out.note(format!("cv: selected b = {b} from {} candidates", sel.curve.len()));
    }
    let inf = fit_and_bands(cfg, &model, data, b)?;
    let names = model.family.param_names();
    let bands = command == Command::Infer;
    let (header, rows) = estimate_table(&names, &inf, bands);
    let stem = command.name();
    if cfg.io.wants(Format::Csv) {
        ctx.write_csv(out, &format!("{stem}.csv"), &header, &rows)?;
    }
    if cfg.io.wants(Format::Json) {
        ctx.write_json(out, &format!("{stem}.json"), &inf)?;
    }
    let failed = inf.points.iter().filter(|p| p.theta_hat.is_none()).count();
    out.note(format!(
        "{stem}: {} grid points at b = {b}, m = {} ({failed} failed)",
        inf.points.len(),
        cfg.estimator.m
    ));
    Ok(())
}

fn cmd_cv(ctx: &Ctx, out: &mut Outcome) -> CliResult<()> {
    let cfg = ctx.cfg;
    let model = cfg.model.build()?;
    let table = load_data(cfg, &model, ctx.input()?)?;
    let sel = select_bandwidth(&model, &table.data, &cv_config(cfg, table.data.n())?)?;
    if cfg.io.wants(Format::Csv) {
        ctx.write_csv(out, "cv.csv", &cv_header(), &cv_rows(&sel))?;
    }
    if cfg.io.wants(Format::Json) {
        ctx.write_json(out, "cv.json", &sel)?;
    }
    out.note(format!("cv: selected b = {} from {} candidates", sel.b_star, sel.curve.len()));
    Ok(())
}

/// Monte Carlo configurations requested by the `mc` block.
pub fn mc_configs(cfg: &RunConfig) -> CliResult<Vec<McConfig>> {
    let mc = &cfg.mc;
    let mut configs = match mc.table {
        1 => mc.sizes().iter().map(|&n| table1_config(n, mc.reps, cfg.seed)).collect::<Vec<_>>(),
        2 => {
            let mut v = Vec::new();
            for &dgp in &mc.dgp {
                for &n in &mc.sizes() {
                    v.push(table2_config(dgp, n, mc.reps, cfg.seed)?);
                }
            }
            v
        }
        t => return Err(CliError::config(format!("mc.table must be 1 or 2, got {t}"))),
    };
    if mc.cv_thin == 0 {
        return Err(CliError::config("mc.cv_thin must be at least 1"));
    }
    for c in &mut configs {
        for e in &mut c.estimators {
            if let BandwidthRule::Cv { thin, .. } = &mut e.bandwidth {
                *thin = mc.cv_thin;
            }
        }
        c.validate()?;
    }
    Ok(configs)
}

fn cmd_mc(ctx: &Ctx, out: &mut Outcome) -> CliResult<()> {
    for c in mc_configs(ctx.cfg)? {
        let report = run_mc(&c)?;
        let mut csv = format!("# {}\n", ctx.comment).into_bytes();
        csv.extend(report.to_csv().into_bytes());
        ctx.write(out, &format!("mc_{}.csv", report.label), csv)?;
        ctx.write(out, &format!("mc_{}.json", report.label), report.to_json().into_bytes())?;
        let failed: usize = report.results.iter().map(|r| r.failed_reps).sum();
        out.note(format!(
            "mc {}: {} reps, {} estimators, {failed} failed estimator-reps{}",
            report.label,
            report.reps,
            report.results.len(),
            if report.unreliable { " (unreliable)" } else { "" }
        ));
    }
    Ok(())
}

fn cmd_empirical(ctx: &Ctx, out: &mut Outcome) -> CliResult<()> {
    let cfg = ctx.cfg;
    let emp = &cfg.empirical;
    let covariate = CovariateTransform::from_name(&emp.covariate)?;
    let p_max = emp.p_list.iter().copied().chain(emp.p).max().unwrap_or(1);
    let probe = ModelSpec::tv_parx(p_max.max(1), covariate);
    let table = load_data(cfg, &probe, ctx.input()?)?;
    let data = &table.data;

    let report = empirical::constant_fits(data, &emp.p_list, covariate)?;
    let header: Vec<String> = ["p", "k", "n", "loglik", "aic", "bic", "pit", "estimates"]
        .map(String::from)
        .to_vec();
    let rows: Vec<Vec<String>> = report
        .fits
        .iter()
        .map(|f| {
            let est = f
                .names
                .iter()
                .zip(&f.estimates)
                .map(|(n, v)| format!("{n}={}", fmt_f64(*v)))
                .collect::<Vec<_>>()
                .join(";");
            vec![
                f.p.to_string(),
                f.k.to_string(),
                f.n.to_string(),
                fmt_f64(f.loglik),
                fmt_f64(f.aic),
                fmt_f64(f.bic),
                f.pit.clone(),
                est,
            ]
        })
        .collect();
    ctx.write_csv(out, "empirical_constant.csv", &header, &rows)?;
    out.note(format!(
        "empirical: constant fits for p in {:?}; AIC picks {}, BIC picks {}",
        emp.p_list, report.aic_choice, report.bic_choice
    ));

    let p = emp.p.unwrap_or(report.aic_choice);
    let model = ModelSpec::tv_parx(p, covariate);
    let (b, sel) = choose_bandwidth(cfg, &model, data)?;
    if let Some(sel) = &sel {
        ctx.write_csv(out, "empirical_cv.csv", &cv_header(), &cv_rows(sel))?;
    }
    let inf = fit_and_bands(cfg, &model, data, b)?;
    let (header, rows) = estimate_table(&model.family.param_names(), &inf, true);
    ctx.write_csv(out, "empirical_path.csv", &header, &rows)?;
    if cfg.io.wants(Format::Json) {
        #[derive(serde::Serialize)]
        struct Full<'a> {
            constant: &'a empirical::ConstantFitReport,
            p: usize,
            b: f64,
            path: &'a PathInference,
        }
        ctx.write_json(out, "empirical.json", &Full { constant: &report, p, b, path: &inf })?;
    }
    out.note(format!("empirical: tvPARX({p}) with m = {} at b = {b}", cfg.estimator.m));
    Ok(())
}
