use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use clap::{Args, Parser, Subcommand};
use garz_core::analysis::{self, certify, CertificateReport, ComparisonReport, Subject, Theorem, Verdict};
use garz_core::macroscopic::{self, MacroTrajectory};
use garz_core::microscopic::{self, IndexPolicy, MicroTrajectory};
use garz_core::{Experiment, KernelFamily, Preset};
use serde::Serialize;

use crate::config::{load_config, Number, ScenarioConfig};
use crate::error::CliError;
use crate::output::{self, LyapunovRow};
use crate::plot::{self, Series};

#[derive(Debug, Parser)]
#[command(name = "garz", version, about = "Nonlocal GARZ traffic simulator with Lyapunov certificates")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one scenario and write snapshots, Lyapunov series and certificates.
    Simulate(SimulateArgs),
    /// Micro/macro L1 distance at the output times, optionally over a grid of N and dx.
    Compare(CompareArgs),
    /// Evaluate the theorem certificates for a scenario.
    Certify(CertifyArgs),
    /// Run every combination of kernels, car counts and cell widths.
    Sweep(SweepArgs),
    /// List the built-in presets.
    PresetList(PresetListArgs),
}

#[derive(Debug, Clone, Args)]
pub struct Source {
    /// Scenario file (TOML).
    #[arg(long, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// Built-in preset name.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
    /// Override the scale: micro, macro or both.
    #[arg(long)]
    pub scale: Option<String>,
    /// Override the kernel family, keeping its reach.
    #[arg(long)]
    pub kernel: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub source: Source,
    /// Also write SVG plots.
    #[arg(long)]
    pub plots: bool,
    /// Also write every car at every sample to `micro_trajectory.csv`.
    #[arg(long)]
    pub trajectory: bool,
    /// Exit with status 4 if any certificate fails.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub source: Source,
    /// Car counts for a convergence table.
    #[arg(long, value_delimiter = ',')]
    pub n_list: Vec<usize>,
    /// Cell widths for a convergence table.
    #[arg(long, value_delimiter = ',')]
    pub dx_list: Vec<f64>,
    /// Time of the convergence table; defaults to the first output time.
    #[arg(long)]
    pub at: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct CertifyArgs {
    #[command(flatten)]
    pub source: Source,
    /// Restrict to these theorem ids.
    #[arg(long = "theorem", value_delimiter = ',')]
    pub theorems: Vec<String>,
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub source: Source,
    #[arg(long, value_delimiter = ',')]
    pub kernels: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    pub n_cars: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    pub dx: Vec<f64>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct PresetListArgs {
    /// Print each preset's expanded scenario file.
    #[arg(long)]
    pub expand: bool,
}

impl Source {
    pub fn load(&self) -> Result<ScenarioConfig, CliError> {
        let mut cfg = match (&self.config, &self.preset) {
            (Some(path), _) => load_config(path)?,
            (None, Some(name)) => {
                let p: Preset = name.parse().map_err(|e: garz_core::GarzError| CliError::Usage(e.to_string()))?;
                ScenarioConfig::from_preset(p)
            }
            (None, None) => return Err(CliError::Usage("one of --config or --preset is required".into())),
        };
        if let Some(s) = &self.scale {
            cfg.scale = s.clone();
        }
        if let Some(k) = &self.kernel {
            cfg.kernel = k.clone();
        }
        cfg.to_experiment()?;
        Ok(cfg)
    }
}

/// Which directory `error.json` belongs in.
pub fn out_dir(cli: &Cli) -> Option<&Path> {
    match &cli.command {
        Command::Simulate(a) => Some(&a.source.out_dir),
        Command::Compare(a) => Some(&a.source.out_dir),
        Command::Certify(a) => Some(&a.source.out_dir),
        Command::Sweep(a) => Some(&a.source.out_dir),
        Command::PresetList(_) => None,
    }
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Compare(a) => compare(a),
        Command::Certify(a) => certify_cmd(a),
        Command::Sweep(a) => sweep(a),
        Command::PresetList(a) => {
            preset_list(a);
            Ok(())
        }
    }
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))
}

pub struct Runs {
    pub micro: Option<MicroTrajectory>,
    pub macro_: Option<MacroTrajectory>,
}

pub fn run_scales(e: &Experiment) -> Result<Runs, CliError> {
    let (micro, macro_) = std::thread::scope(|sc| {
        let micro = e.scale.micro().then(|| {
            sc.spawn(|| {
                let s = e.micro_scenario()?;
                microscopic::integrate(&s, e.t_end, &e.output_times, e.tolerances)
            })
        });
        let macro_ =
            e.scale.macro_().then(|| sc.spawn(|| macroscopic::integrate(&e.macro_scenario()?, &e.output_times)));
        (micro.map(|h| h.join().expect("micro worker")), macro_.map(|h| h.join().expect("macro worker")))
    });
    Ok(Runs { micro: micro.transpose()?, macro_: macro_.transpose()? })
}

/// Resolves the index policy, falling back to every gap when no car
/// satisfies the a priori reach condition.
fn micro_policy(e: &Experiment, tr: &MicroTrajectory) -> Result<IndexPolicy, CliError> {
    if e.index_policy == IndexPolicy::Apriori && microscopic::compute_j(tr.scenario())?.is_none() {
        eprintln!("note: no car satisfies the a priori reach condition; summing over every gap");
        return Ok(IndexPolicy::All);
    }
    Ok(e.index_policy.clone())
}

pub fn micro_lyapunov(e: &Experiment, tr: &MicroTrajectory) -> Result<Vec<LyapunovRow>, CliError> {
    let ly = microscopic::lyapunov_series(tr, &micro_policy(e, tr)?)?;
    let bound = ly.bound.values();
    let first = ly.indices.first().copied();
    Ok(tr
        .samples()
        .iter()
        .enumerate()
        .map(|(k, st)| LyapunovRow {
            t: st.t,
            value: ly.values[k],
            bound: bound.map(|b| b[k]),
            alpha: first.map(|i| st.x[i]),
            beta: Some(st.leader()),
        })
        .collect())
}

pub fn macro_lyapunov(tr: &MacroTrajectory) -> Vec<LyapunovRow> {
    let bound = macroscopic::bound_macro(tr);
    let b = bound.values();
    tr.lyapunov()
        .iter()
        .enumerate()
        .map(|(k, p)| LyapunovRow {
            t: p.t,
            value: p.value,
            bound: b.map(|v| v[k]),
            alpha: Some(p.alpha),
            beta: Some(p.beta),
        })
        .collect()
}

pub fn certificates(
    e: &Experiment,
    runs: &Runs,
    only: &[Theorem],
) -> Result<Vec<(&'static str, CertificateReport)>, CliError> {
    let mut out = Vec::new();
    for th in Theorem::ALL.into_iter().filter(|t| only.is_empty() || only.contains(t)) {
        let rep = match (th.is_macro(), &runs.micro, &runs.macro_) {
            (true, _, Some(m)) => ("macro", certify(Subject::Macro(m), th)?),
            (false, Some(m), _) => ("micro", certify(Subject::Micro(m), th)?),
            (false, None, _) if th == Theorem::Stability => {
                let s = e.micro_scenario()?;
                ("micro", certify(Subject::MicroScenario(&s), th)?)
            }
            _ => continue,
        };
        out.push(rep);
    }
    Ok(out)
}

fn failures(reports: &[(&str, CertificateReport)]) -> Vec<String> {
    reports.iter().filter(|(_, r)| r.verdict == Verdict::Fail).map(|(_, r)| r.theorem.id().to_string()).collect()
}

fn comparisons(e: &Experiment, runs: &Runs) -> Result<Vec<ComparisonReport>, CliError> {
    match (&runs.micro, &runs.macro_) {
        (Some(mi), Some(ma)) => {
            Ok(e.output_times.iter().map(|&t| analysis::micro_macro_l1(mi, ma, t)).collect::<Result<Vec<_>, _>>()?)
        }
        _ => Ok(Vec::new()),
    }
}

#[derive(Debug, Serialize)]
struct SeriesSummary {
    ln_l_start: f64,
    ln_l_end: f64,
    bounded: bool,
}

#[derive(Debug, Serialize)]
struct Summary {
    scale: &'static str,
    kernel: &'static str,
    n_cars: usize,
    dx: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    micro: Option<SeriesSummary>,
    #[serde(rename = "macro", skip_serializing_if = "Option::is_none")]
    macro_: Option<SeriesSummary>,
    macro_steps: Option<usize>,
    certificates: Vec<(String, String)>,
}

fn series_summary(rows: &[LyapunovRow]) -> Option<SeriesSummary> {
    let (first, last) = (rows.first()?, rows.last()?);
    Some(SeriesSummary { ln_l_start: first.value.ln(), ln_l_end: last.value.ln(), bounded: first.bound.is_some() })
}

/// Everything `simulate` writes, minus plots.
pub struct Emitted {
    pub micro_rows: Option<Vec<LyapunovRow>>,
    pub macro_rows: Option<Vec<LyapunovRow>>,
    pub certificates: Vec<(&'static str, CertificateReport)>,
}

pub fn emit(cfg: &ScenarioConfig, dir: &Path, trajectory: bool) -> Result<(Runs, Emitted), CliError> {
    let e = cfg.to_experiment()?;
    let runs = run_scales(&e)?;
    create_dir(dir)?;
    write(dir, "config.toml", &cfg.to_toml())?;

    let mut micro_rows = None;
    if let Some(tr) = &runs.micro {
        let s = tr.scenario();
        for &t in &e.output_times {
            write(dir, &format!("micro_t{}.csv", output::time_tag(t)), &output::micro_csv(s, [tr.at(t)?]))?;
        }
        if trajectory {
            write(dir, "micro_trajectory.csv", &output::micro_csv(s, tr.samples()))?;
        }
        let rows = micro_lyapunov(&e, tr)?;
        write(dir, "lyapunov_micro.csv", &output::lyapunov_csv(&rows))?;
        micro_rows = Some(rows);
    }
    let mut macro_rows = None;
    if let Some(tr) = &runs.macro_ {
        for &t in &e.output_times {
            write(dir, &format!("macro_t{}.csv", output::time_tag(t)), &output::macro_csv(tr.scenario(), tr.at(t)?))?;
        }
        let rows = macro_lyapunov(tr);
        write(dir, "lyapunov_macro.csv", &output::lyapunov_csv(&rows))?;
        macro_rows = Some(rows);
    }
    let cmp = comparisons(&e, &runs)?;
    if !cmp.is_empty() {
        write(dir, "comparison.csv", &output::comparison_csv(&cmp))?;
    }
    let certs = certificates(&e, &runs, &[])?;
    write(dir, "certificates.csv", &output::certificates_csv(&certs))?;
    write(dir, "certificates.txt", &output::certificates_text(&certs))?;

    let summary = Summary {
        scale: e.scale.name(),
        kernel: e.kernel.family().name(),
        n_cars: e.n_cars,
        dx: e.dx,
        micro: micro_rows.as_deref().and_then(series_summary),
        macro_: macro_rows.as_deref().and_then(series_summary),
        macro_steps: runs.macro_.as_ref().map(|m| m.steps()),
        certificates: certs.iter().map(|(_, r)| (r.theorem.id().to_string(), r.verdict.name().to_string())).collect(),
    };
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    write(dir, "summary.json", &(json + "\n"))?;
    Ok((runs, Emitted { micro_rows, macro_rows, certificates: certs }))
}

fn plots(e: &Experiment, runs: &Runs, em: &Emitted, dir: &Path) -> Result<(), CliError> {
    let dir = dir.join("plots");
    create_dir(&dir)?;
    for &t in &e.output_times {
        let mut series = Vec::new();
        if let Some(tr) = &runs.micro {
            let st = tr.at(t)?;
            let ell = tr.scenario().ell();
            let dens: Vec<f64> = st.x.windows(2).map(|w| ell / (w[1] - w[0])).collect();
            series.push(Series { label: "micro", color: "black", dashed: false, points: plot::steps(&st.x, &dens) });
        }
        if let Some(tr) = &runs.macro_ {
            let st = tr.at(t)?;
            let edges: Vec<f64> = (0..=st.n_cells()).map(|j| st.edge(j)).collect();
            let eq = st.equilibrium_field(tr.scenario());
            series.push(Series { label: "macro", color: "blue", dashed: false, points: plot::steps(&edges, &st.rho) });
            series.push(Series { label: "equilibrium", color: "gray", dashed: true, points: plot::steps(&edges, &eq) });
        }
        let name = format!("density_t{}.svg", output::time_tag(t));
        write(&dir, &name, &plot::line_chart(&format!("T = {t}"), "x", "density", &series))?;
    }
    let mut series = Vec::new();
    let ln = |rows: &[LyapunovRow], f: fn(&LyapunovRow) -> Option<f64>| -> Vec<(f64, f64)> {
        rows.iter().filter_map(|r| f(r).map(|v| (r.t, v.ln()))).collect()
    };
    for (rows, label, bound_label, color) in
        [(&em.micro_rows, "micro", "micro bound", "black"), (&em.macro_rows, "macro", "macro bound", "blue")]
    {
        if let Some(rows) = rows {
            series.push(Series { label, color, dashed: false, points: ln(rows, |r| Some(r.value)) });
            let b = ln(rows, |r| r.bound);
            if !b.is_empty() {
                series.push(Series { label: bound_label, color: "gray", dashed: true, points: b });
            }
        }
    }
    write(&dir, "lyapunov.svg", &plot::line_chart("Lyapunov function", "t", "ln L", &series))
}

fn simulate(a: &SimulateArgs) -> Result<(), CliError> {
    let cfg = a.source.load()?;
    let dir = &a.source.out_dir;
    let (runs, em) = emit(&cfg, dir, a.trajectory)?;
    if a.plots {
        plots(&cfg.to_experiment()?, &runs, &em, dir)?;
    }
    print!("{}", output::certificates_text(&em.certificates));
    strict_check(a.strict, &em.certificates)
}

fn strict_check(strict: bool, certs: &[(&str, CertificateReport)]) -> Result<(), CliError> {
    let failed = failures(certs);
    if strict && !failed.is_empty() {
        return Err(CliError::Certificate(failed));
    }
    Ok(())
}

fn compare(a: &CompareArgs) -> Result<(), CliError> {
    let mut cfg = a.source.load()?;
    cfg.scale = "both".into();
    let mut e = cfg.to_experiment()?;
    if e.output_times.is_empty() {
        e.output_times.push(e.t_end);
    }
    let dir = &a.source.out_dir;
    let runs = run_scales(&e)?;
    let cmp = comparisons(&e, &runs)?;
    create_dir(dir)?;
    write(dir, "comparison.csv", &output::comparison_csv(&cmp))?;
    for r in &cmp {
        println!("t = {}: L1 = {:.6e} (N = {}, dx = {})", r.t, r.l1_error, r.n_cars, r.dx);
    }
    if a.n_list.is_empty() && a.dx_list.is_empty() {
        return Ok(());
    }
    let t = a.at.unwrap_or(e.output_times[0]);
    let n_list = if a.n_list.is_empty() { vec![e.n_cars] } else { a.n_list.clone() };
    let dx_list = if a.dx_list.is_empty() { vec![e.dx] } else { a.dx_list.clone() };
    let table = analysis::convergence_study(&e.macro_scenario()?, &n_list, &dx_list, t)?;
    write(dir, "convergence.csv", &output::convergence_csv(&table))?;
    for (n, row) in table.n_list.iter().zip(&table.errors) {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.6e}")).collect();
        println!("N = {n}: {}", cells.join("  "));
    }
    Ok(())
}

fn certify_cmd(a: &CertifyArgs) -> Result<(), CliError> {
    let cfg = a.source.load()?;
    let only = a
        .theorems
        .iter()
        .map(|s| s.parse::<Theorem>().map_err(|e| CliError::Usage(e.to_string())))
        .collect::<Result<Vec<_>, _>>()?;
    let e = cfg.to_experiment()?;
    let runs = run_scales(&e)?;
    let certs = certificates(&e, &runs, &only)?;
    let dir = &a.source.out_dir;
    create_dir(dir)?;
    write(dir, "certificates.csv", &output::certificates_csv(&certs))?;
    write(dir, "certificates.txt", &output::certificates_text(&certs))?;
    print!("{}", output::certificates_text(&certs));
    strict_check(a.strict, &certs)
}

struct SweepJob {
    kernel: String,
    n_cars: usize,
    dx: f64,
}

impl SweepJob {
    fn dir_name(&self) -> String {
        format!("{}_n{}_dx{}", self.kernel, self.n_cars, self.dx)
    }
}

fn sweep_row(job: &SweepJob, res: &Result<Emitted, CliError>) -> String {
    let f = |v: Option<f64>| v.map(output::num).unwrap_or_default();
    let ends = |rows: &Option<Vec<LyapunovRow>>| match rows {
        Some(r) if !r.is_empty() => (Some(r[0].value.ln()), Some(r[r.len() - 1].value.ln())),
        _ => (None, None),
    };
    let (status, mi, ma, failed) = match res {
        Ok(em) => ("ok".to_string(), ends(&em.micro_rows), ends(&em.macro_rows), failures(&em.certificates).join(" ")),
        Err(err) => (format!("\"{}\"", err.to_string().replace('"', "'")), (None, None), (None, None), String::new()),
    };
    format!(
        "{},{},{},{status},{},{},{},{},{failed}\n",
        job.kernel,
        job.n_cars,
        output::num(job.dx),
        f(mi.0),
        f(mi.1),
        f(ma.0),
        f(ma.1)
    )
}

fn sweep(a: &SweepArgs) -> Result<(), CliError> {
    let base = a.source.load()?;
    let kernels = if a.kernels.is_empty() { vec![base.kernel.clone()] } else { a.kernels.clone() };
    for k in &kernels {
        k.parse::<KernelFamily>().map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let ns = if a.n_cars.is_empty() { vec![base.n_cars] } else { a.n_cars.clone() };
    let dxs = if a.dx.is_empty() { vec![base.dx.0] } else { a.dx.clone() };
    let mut jobs = Vec::new();
    for k in &kernels {
        for &n in &ns {
            for &dx in &dxs {
                jobs.push(SweepJob { kernel: k.clone(), n_cars: n, dx });
            }
        }
    }
    let workers = a.jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get())).max(1);
    let dir = &a.source.out_dir;
    create_dir(dir)?;
    let next = AtomicUsize::new(0);
    let mut results: Vec<(usize, Result<Emitted, CliError>)> = std::thread::scope(|sc| {
        let handles: Vec<_> = (0..workers.min(jobs.len()))
            .map(|_| {
                sc.spawn(|| {
                    let mut done = Vec::new();
                    loop {
                        let i = next.fetch_add(1, Ordering::Relaxed);
                        let Some(job) = jobs.get(i) else { break };
                        let cfg = ScenarioConfig {
                            kernel: job.kernel.clone(),
                            n_cars: job.n_cars,
                            dx: Number(job.dx),
                            ..base.clone()
                        };
                        done.push((i, emit(&cfg, &dir.join(job.dir_name()), false).map(|(_, em)| em)));
                    }
                    done
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("sweep worker")).collect()
    });
    results.sort_by_key(|(i, _)| *i);
    let mut csv = String::from(
        "kernel,n_cars,dx,status,ln_L_start_micro,ln_L_end_micro,ln_L_start_macro,ln_L_end_macro,failed_certificates\n",
    );
    for (i, res) in &results {
        csv.push_str(&sweep_row(&jobs[*i], res));
        println!("{}: {}", jobs[*i].dir_name(), res.as_ref().map_or_else(|e| e.to_string(), |_| "ok".into()));
    }
    write(dir, "sweep.csv", &csv)?;
    match results.into_iter().find_map(|(_, r)| r.err()) {
        Some(err) => Err(err),
        None => Ok(()),
    }
}

fn preset_list(a: &PresetListArgs) {
    for p in Preset::ALL {
        if a.expand {
            println!("# {}: {}\n{}", p.name(), p.description(), ScenarioConfig::from_preset(p).to_toml());
        } else {
            println!("{:<16} {}", p.name(), p.description());
        }
    }
}
