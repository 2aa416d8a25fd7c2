//! `arolc` command line: delay margins and bounds, closed-loop simulation,
//! controller comparison and parameter sweeps.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use arolc::metrics::MetricsReport;
use arolc::scenario::parse_range;
use arolc::sim::SimError;
use arolc::stability::{bound_report, BoundCase};
use arolc::{simulate, Scenario, Trace};

#[derive(Parser, Debug)]
#[command(
    name = "arolc",
    version,
    about = "Adaptive-robust control under input delay"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Delay margin, Lyapunov matrices and ultimate bounds of a scenario's gains.
    Bound {
        scenario: PathBuf,
        /// Delay to evaluate at; defaults to the profile maximum.
        #[arg(long)]
        h: Option<f64>,
    },
    /// Run one scenario and write trace.csv and metrics.json.
    Simulate {
        scenario: PathBuf,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Run several scenarios and tabulate their metrics.
    Compare {
        #[arg(required = true)]
        scenarios: Vec<PathBuf>,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Run one scenario over a grid of values of one parameter.
    Sweep {
        scenario: PathBuf,
        /// Dotted key, e.g. controller.k_b
        #[arg(long)]
        param: String,
        /// start:stop:step
        #[arg(long)]
        range: String,
        #[command(flatten)]
        opts: RunOpts,
    },
}

#[derive(Args, Debug, Clone, Default)]
struct RunOpts {
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Integration step, s.
    #[arg(long)]
    dt: Option<f64>,
    /// Control period, s.
    #[arg(long = "control-dt")]
    control_dt: Option<f64>,
    #[arg(long)]
    duration: Option<f64>,
    /// Extra overrides `key=value`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Suppress the summary on stdout.
    #[arg(long)]
    quiet: bool,
}

impl RunOpts {
    fn overrides(&self) -> Result<Vec<(String, f64)>> {
        let mut out = Vec::new();
        if let Some(s) = self.seed {
            out.push(("sim.seed".to_string(), s as f64));
        }
        for (key, v) in [
            ("sim.dt", self.dt),
            ("sim.control_dt", self.control_dt),
            ("sim.duration", self.duration),
        ] {
            if let Some(v) = v {
                out.push((key.to_string(), v));
            }
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .with_context(|| format!("--set expects KEY=VALUE, got {kv:?}"))?;
            let v: f64 = v
                .trim()
                .parse()
                .with_context(|| format!("--set {k}: not a number"))?;
            out.push((k.trim().to_string(), v));
        }
        Ok(out)
    }
}

/// Runs the command line and returns the process exit code.
pub fn run<O: Write, E: Write>(args: &[String], out: &mut O, err: &mut E) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                write!(err, "{text}")
            } else {
                write!(out, "{text}")
            };
            return e.exit_code();
        }
    };
    match dispatch(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e:#}");
            1
        }
    }
}

fn load(path: &Path, overrides: &[(String, f64)]) -> Result<Scenario> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Scenario::from_toml_with_overrides(&text, overrides)
        .with_context(|| format!("loading {}", path.display()))
}

struct Outcome {
    trace: Trace,
    report: MetricsReport,
}

fn execute(sc: &Scenario) -> Result<Outcome> {
    let start = Instant::now();
    let trace = match simulate(sc) {
        Ok(t) => t,
        Err(SimError::Diverged { t, .. }) => bail!("{}: diverged at t = {t:.3} s", sc.label()),
        Err(e) => return Err(e.into()),
    };
    let runtime = start.elapsed().as_secs_f64();
    let diameter = sc.trajectory().ok().and_then(|t| t.path_diameter());
    let report = MetricsReport::from_trace(&trace, diameter, runtime, &sc.hash())?;
    Ok(Outcome { trace, report })
}

fn write_outputs(dir: &Path, o: &Outcome) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut f = std::io::BufWriter::new(fs::File::create(dir.join("trace.csv"))?);
    o.trace.write_csv(&mut f)?;
    f.flush()?;
    if o.trace.has_output() {
        let mut f = std::io::BufWriter::new(fs::File::create(dir.join("posture.csv"))?);
        o.trace.write_posture_csv(&mut f)?;
        f.flush()?;
    }
    fs::write(dir.join("metrics.json"), o.report.to_json())?;
    Ok(())
}

fn fmt_list(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.5}")).collect();
    format!("[{}]", parts.join(", "))
}

fn dispatch<O: Write>(cli: Cli, out: &mut O) -> Result<()> {
    match cli.command {
        Command::Bound { scenario, h } => {
            let sc = load(&scenario, &[])?;
            let g = sc.gains()?;
            let h = h.unwrap_or_else(|| sc.bound.and_then(|b| b.h).unwrap_or(sc.delay.max_delay()));
            let bp = sc.bound_params();
            let r = bound_report(&g, h, bp.as_ref())?;
            writeln!(out, "P = {:.6}", r.p)?;
            writeln!(out, "E = {:.6}", r.e)?;
            writeln!(out, "||E||        = {:.6}", r.e_norm)?;
            writeln!(out, "lambda_min Q = {:.6}", r.lambda_min_q)?;
            writeln!(
                out,
                "delay margin = {:.6} s ({:.1} ms)",
                r.margin,
                r.margin * 1e3
            )?;
            writeln!(
                out,
                "h = {:.6} s: {}",
                r.h,
                if r.feasible { "feasible" } else { "infeasible" }
            )?;
            match r.bounds {
                Some(Ok(b)) => {
                    for case in BoundCase::ALL {
                        writeln!(
                            out,
                            "bound case {} ({case:?}): {:.6}",
                            case.id(),
                            b[case.id() as usize - 1]
                        )?;
                    }
                }
                Some(Err(e)) => writeln!(out, "bounds unavailable: {e}")?,
                None => {}
            }
        }
        Command::Simulate { scenario, opts } => {
            let sc = load(&scenario, &opts.overrides()?)?;
            let o = execute(&sc)?;
            if let Some(dir) = &opts.out {
                write_outputs(dir, &o)?;
            }
            if !opts.quiet {
                for w in &o.trace.warnings {
                    writeln!(out, "warning: {w}")?;
                }
                writeln!(out, "{}", sc.label())?;
                writeln!(out, "  ae      {}", fmt_list(&o.report.ae_per_dim))?;
                if !o.report.pct_ae_per_dim.is_empty() {
                    writeln!(out, "  ae %    {}", fmt_list(&o.report.pct_ae_per_dim))?;
                }
                writeln!(out, "  tv      {:.5}", o.report.tv)?;
                writeln!(out, "  sup_err {:.5e}", o.report.sup_error_tail)?;
                writeln!(out, "  runtime {:.3} s", o.report.runtime_s)?;
            }
        }
        Command::Compare { scenarios, opts } => {
            let overrides = opts.overrides()?;
            let loaded = scenarios
                .iter()
                .map(|p| load(p, &overrides))
                .collect::<Result<Vec<_>>>()?;
            let results: Vec<Result<Outcome>> = loaded.par_iter().map(execute).collect();
            writeln!(
                out,
                "{:<28} {:>24} {:>20} {:>12}",
                "scenario", "ae", "ae %", "tv"
            )?;
            for (sc, res) in loaded.iter().zip(results) {
                match res {
                    Ok(o) => {
                        writeln!(
                            out,
                            "{:<28} {:>24} {:>20} {:>12.4}",
                            sc.label(),
                            fmt_list(&o.report.ae_per_dim),
                            fmt_list(&o.report.pct_ae_per_dim),
                            o.report.tv
                        )?;
                        if let Some(dir) = &opts.out {
                            write_outputs(&dir.join(sc.label()), &o)?;
                        }
                    }
                    Err(e) => writeln!(out, "{:<28} failed: {e:#}", sc.label())?,
                }
            }
        }
        Command::Sweep {
            scenario,
            param,
            range,
            opts,
        } => {
            let values = parse_range(&range)?;
            let base = opts.overrides()?;
            let text = fs::read_to_string(&scenario)
                .with_context(|| format!("reading {}", scenario.display()))?;
            let results: Vec<(f64, Result<MetricsReport>)> = values
                .par_iter()
                .map(|&v| {
                    let mut ov = base.clone();
                    ov.push((param.clone(), v));
                    let r = Scenario::from_toml_with_overrides(&text, &ov)
                        .map_err(anyhow::Error::from)
                        .and_then(|sc| execute(&sc).map(|o| o.report));
                    (v, r)
                })
                .collect();
            let mut csv = String::from("value,ae_0,ae_1,tv,sup_error_tail,status\n");
            writeln!(out, "{:>12} {:>24} {:>12}", param, "ae", "tv")?;
            for (v, r) in &results {
                match r {
                    Ok(rep) => {
                        writeln!(
                            out,
                            "{v:>12.5} {:>24} {:>12.4}",
                            fmt_list(&rep.ae_per_dim),
                            rep.tv
                        )?;
                        let ae = |i: usize| rep.ae_per_dim.get(i).copied().unwrap_or(f64::NAN);
                        csv.push_str(&format!(
                            "{v},{},{},{},{},ok\n",
                            ae(0),
                            ae(1),
                            rep.tv,
                            rep.sup_error_tail
                        ));
                    }
                    Err(e) => {
                        writeln!(out, "{v:>12.5} failed: {e:#}")?;
                        csv.push_str(&format!("{v},NaN,NaN,NaN,NaN,failed\n"));
                    }
                }
            }
            if let Some(dir) = &opts.out {
                fs::create_dir_all(dir)?;
                fs::write(dir.join("sweep.csv"), csv)?;
            }
        }
    }
    Ok(())
}
