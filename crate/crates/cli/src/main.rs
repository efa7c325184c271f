//! `gibbs-frag` command-line front end.
//!
//! Exit codes: 0 success, 1 a verification experiment failed, 2 usage or
//! parameter-domain error, 3 numeric failure.

use std::io::{Read, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use gibbs_frag::eppf::{Eppf, GibbsWeights, TwoParamPd};
use gibbs_frag::fragcoag::{coag_set_partition, frag_mass_partition, frag_set_partition, FragParams};
use gibbs_frag::partitions::{enumerate_set_partitions, MassPartition, SetPartition};
use gibbs_frag::samplers::{sample_eppf_partition, sample_gem, sample_pk_tilted, sample_stable_jumps, RngStream};
use gibbs_frag::special_fn::{gml_pdf, ml_pdf, stable_cdf, stable_pdf, StableIndex};
use gibbs_frag::tilt::TiltFunction;
use gibbs_frag::verify::{fmt_f64, reports_to_csv, reports_to_json, run_suite, SuiteOptions, EXPERIMENTS};
use gibbs_frag::Error;

#[derive(Parser, Debug)]
#[command(name = "gibbs-frag", version, about = "Gibbs partitions from stable subordinators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[arg(long, global = true)]
    alpha: Option<f64>,
    #[arg(long, global = true)]
    beta: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    theta: Option<f64>,
    #[arg(long, global = true)]
    lambda: Option<f64>,
    #[arg(long, global = true)]
    zeta: Option<f64>,
    #[arg(long, global = true)]
    n: Option<usize>,
    #[arg(long, global = true)]
    samples: Option<usize>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Write to this file instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Stable, Mittag-Leffler or generalized Mittag-Leffler densities at given points.
    Density {
        #[arg(long, value_enum, default_value_t = Law::Stable)]
        law: Law,
        #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
        points: Vec<f64>,
    },
    /// EPPF of every set partition of [n]. PD(alpha, theta) by default, the
    /// generalized gamma tilt with --zeta, the Mittag-Leffler tilt with --lambda.
    Eppf,
    /// JSON-lines draws after a metadata header.
    Sample {
        #[arg(long, value_enum, default_value_t = SampleKind::Partition)]
        kind: SampleKind,
        /// Truncation of the mass-partition samplers.
        #[arg(long, default_value_t = 1000)]
        sticks: usize,
    },
    /// Fragments a set or mass partition with PD(alpha, -beta) pieces.
    Frag {
        /// Partition JSON; read from stdin when absent.
        #[arg(long)]
        input: Option<String>,
        #[arg(long, default_value_t = 1000)]
        sticks: usize,
    },
    /// Coagulates a set partition by a second one, or by PD(beta/alpha, theta/alpha) draws.
    Coag {
        /// Partition JSON; read from stdin when absent.
        #[arg(long)]
        input: Option<String>,
        /// Coagulating partition of [k], k the number of input blocks.
        #[arg(long)]
        with: Option<String>,
    },
    /// Runs verification experiments, all of them when none is named.
    Verify {
        names: Vec<String>,
        /// Scale of the Brownian experiment.
        #[arg(long)]
        s: Option<f64>,
        /// Report runtime_ms = 0 so that output is byte-reproducible.
        #[arg(long)]
        omit_timing: bool,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum Format {
    Csv,
    Json,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Law {
    Stable,
    Ml,
    Gml,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum SampleKind {
    /// Partition of [n] from the same laws as `eppf`.
    Partition,
    /// GEM(alpha, theta) sticks, ranked.
    Gem,
    /// Normalized stable jumps, tilted by --zeta or --lambda if given.
    Jumps,
}

enum Failure {
    Lib(Error),
    Io(std::io::Error),
    Experiments(usize),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e)
    }
}

type Res<T> = std::result::Result<T, Failure>;

fn usage<T>(msg: impl Into<String>) -> Res<T> {
    Err(Failure::Lib(Error::Usage(msg.into())))
}

fn need<T>(v: Option<T>, flag: &str) -> Res<T> {
    match v {
        Some(x) => Ok(x),
        None => usage(format!("--{flag} is required here")),
    }
}

fn index(v: Option<f64>, flag: &str) -> Res<StableIndex> {
    Ok(StableIndex::new(need(v, flag)?)?)
}

fn csv_text(header: &[&str], rows: &[Vec<String>]) -> Res<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Failure::Io(e.into());
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(r).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Failure::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn read_input(input: &Option<String>) -> Res<String> {
    match input {
        Some(s) => Ok(s.clone()),
        None => {
            let mut s = String::new();
            std::io::stdin().read_to_string(&mut s)?;
            Ok(s)
        }
    }
}

// the tilt selected by --zeta or --lambda, if any
fn tilt(cli: &Cli, alpha: StableIndex) -> Res<Option<TiltFunction>> {
    match (cli.zeta, cli.lambda) {
        (Some(_), Some(_)) => usage("give at most one of --zeta and --lambda"),
        (Some(z), None) => Ok(Some(TiltFunction::gg_zeta(alpha, z, 0)?)),
        (None, Some(l)) => Ok(Some(TiltFunction::ml_lambda(alpha, l)?)),
        (None, None) => Ok(None),
    }
}

fn partition_law(cli: &Cli, n: usize) -> Res<(Box<dyn Eppf>, String)> {
    let alpha = index(cli.alpha, "alpha")?;
    match tilt(cli, alpha)? {
        Some(h) => {
            if cli.theta.is_some() {
                return usage("--theta cannot be combined with a tilt");
            }
            let label = format!("gibbs({})", h.label());
            Ok((Box::new(GibbsWeights::from_tilt(&h, n)?), label))
        }
        None => {
            let theta = cli.theta.unwrap_or(0.0);
            Ok((Box::new(TwoParamPd::new(alpha, theta)?), format!("pd({},{theta})", alpha.get())))
        }
    }
}

fn density(cli: &Cli, law: Law, points: &[f64]) -> Res<String> {
    let alpha = index(cli.alpha, "alpha")?;
    let mut rows = Vec::with_capacity(points.len());
    for &x in points {
        let row = match law {
            Law::Stable => vec![x, stable_pdf(alpha, x)?, stable_cdf(alpha, x)?],
            Law::Ml => vec![x, ml_pdf(alpha, x)?],
            Law::Gml => vec![x, gml_pdf(alpha, need(cli.theta, "theta")?, x)?],
        };
        rows.push(row);
    }
    let header: &[&str] = match law {
        Law::Stable => &["x", "pdf", "cdf"],
        _ => &["x", "pdf"],
    };
    match cli.format.unwrap_or(Format::Csv) {
        Format::Csv => csv_text(header, &rows.iter().map(|r| r.iter().map(|&v| fmt_f64(v)).collect()).collect::<Vec<_>>()),
        Format::Json => {
            let objs: Vec<_> = rows
                .iter()
                .map(|r| header.iter().zip(r).map(|(h, v)| (h.to_string(), json!(v))).collect::<serde_json::Map<_, _>>())
                .collect();
            Ok(serde_json::to_string_pretty(&objs).expect("serializable") + "\n")
        }
    }
}

fn eppf_table(cli: &Cli) -> Res<String> {
    let n = need(cli.n, "n")?;
    let (law, _) = partition_law(cli, n)?;
    let mut rows = Vec::new();
    for p in enumerate_set_partitions(n)? {
        let v = law.prob(&p.composition())?;
        rows.push((p.to_json(), p.k(), v));
    }
    match cli.format.unwrap_or(Format::Csv) {
        Format::Csv => csv_text(
            &["partition", "k", "value"],
            &rows.into_iter().map(|(p, k, v)| vec![p, k.to_string(), fmt_f64(v)]).collect::<Vec<_>>(),
        ),
        Format::Json => {
            let objs: Vec<_> = rows
                .iter()
                .map(|(p, k, v)| json!({"partition": serde_json::from_str::<serde_json::Value>(p).expect("valid json"), "k": k, "value": v}))
                .collect();
            Ok(serde_json::to_string_pretty(&objs).expect("serializable") + "\n")
        }
    }
}

fn json_lines_only(cli: &Cli) -> Res<()> {
    if cli.format == Some(Format::Csv) {
        return usage("this subcommand writes JSON lines only");
    }
    Ok(())
}

fn sample(cli: &Cli, kind: SampleKind, sticks: usize) -> Res<String> {
    json_lines_only(cli)?;
    let count = cli.samples.unwrap_or(1);
    let mut rng = RngStream::new(cli.seed, 0);
    let alpha = index(cli.alpha, "alpha")?;
    let mut lines = Vec::with_capacity(count + 1);
    let (law, tail_policy, draws): (String, String, Vec<String>) = match kind {
        SampleKind::Partition => {
            let n = need(cli.n, "n")?;
            let (eppf, label) = partition_law(cli, n)?;
            let d = (0..count).map(|_| Ok(sample_eppf_partition(eppf.as_ref(), n, &mut rng)?.to_json())).collect::<Res<_>>()?;
            (label, "exact".into(), d)
        }
        SampleKind::Gem => {
            if tilt(cli, alpha)?.is_some() {
                return usage("gem draws take --theta, not a tilt");
            }
            let theta = cli.theta.unwrap_or(0.0);
            let d = (0..count).map(|_| Ok(sample_gem(alpha, theta, sticks, &mut rng)?.to_json())).collect::<Res<_>>()?;
            (format!("gem({},{theta})", alpha.get()), format!("{sticks} sticks; unbroken remainder is the tail"), d)
        }
        SampleKind::Jumps => {
            let h = tilt(cli, alpha)?;
            let mut d = Vec::with_capacity(count);
            for _ in 0..count {
                let m: MassPartition = match &h {
                    Some(h) => sample_pk_tilted(alpha, h, sticks, &mut rng)?.0,
                    None => sample_stable_jumps(alpha, sticks, &mut rng)?.normalized()?,
                };
                d.push(m.to_json());
            }
            let label = h.map(|h| format!("pk({})", h.label())).unwrap_or_else(|| format!("pd({},0)", alpha.get()));
            (label, format!("{sticks} largest jumps; expected sum of the rest is the tail"), d)
        }
    };
    let header = json!({
        "seed": cli.seed,
        "law": law,
        "alpha": alpha.get(),
        "theta": cli.theta,
        "zeta": cli.zeta,
        "lambda": cli.lambda,
        "n": cli.n,
        "samples": count,
        "tail_policy": tail_policy,
    });
    lines.push(header.to_string());
    lines.extend(draws);
    Ok(lines.join("\n") + "\n")
}

fn frag(cli: &Cli, input: &Option<String>, sticks: usize) -> Res<String> {
    json_lines_only(cli)?;
    let fp = FragParams::new(index(cli.alpha, "alpha")?, index(cli.beta, "beta")?)?;
    let text = read_input(input)?;
    let text = text.trim();
    let mut rng = RngStream::new(cli.seed, 0);
    let count = cli.samples.unwrap_or(1);
    let mut out = String::new();
    if text.starts_with('{') {
        let m = MassPartition::from_json(text)?;
        for _ in 0..count {
            out += &(frag_mass_partition(&m, &fp, sticks, &mut rng)?.to_json() + "\n");
        }
    } else {
        let p = SetPartition::from_json(text)?;
        for _ in 0..count {
            out += &(frag_set_partition(&p, &fp, &mut rng)?.to_json() + "\n");
        }
    }
    Ok(out)
}

fn coag(cli: &Cli, input: &Option<String>, with: &Option<String>) -> Res<String> {
    json_lines_only(cli)?;
    let p = SetPartition::from_json(read_input(input)?.trim())?;
    if let Some(q) = with {
        let q = SetPartition::from_json(q)?;
        return Ok(coag_set_partition(&p, &q)?.to_json() + "\n");
    }
    let fp = FragParams::new(index(cli.alpha, "alpha")?, index(cli.beta, "beta")?)?;
    let theta = cli.theta.unwrap_or(0.0);
    let kernel = TwoParamPd::new(fp.ratio(), theta / fp.alpha().get())?;
    let mut rng = RngStream::new(cli.seed, 0);
    let mut out = String::new();
    for _ in 0..cli.samples.unwrap_or(1) {
        let q = sample_eppf_partition(&kernel, p.k(), &mut rng)?;
        out += &(coag_set_partition(&p, &q)?.to_json() + "\n");
    }
    Ok(out)
}

fn verify(cli: &Cli, names: &[String], s: Option<f64>, omit_timing: bool) -> Res<(String, usize)> {
    let names: Vec<String> = if names.is_empty() { EXPERIMENTS.iter().map(|s| s.to_string()).collect() } else { names.to_vec() };
    let o = SuiteOptions {
        alpha: cli.alpha,
        beta: cli.beta,
        theta: cli.theta,
        lambda: cli.lambda,
        zeta: cli.zeta,
        s,
        n: cli.n,
        samples: cli.samples,
        omit_timing,
    };
    let reports = run_suite(&names, cli.seed, &o)?;
    let failed = reports.iter().filter(|r| !r.pass).count();
    let text = match cli.format.unwrap_or(Format::Csv) {
        Format::Csv => reports_to_csv(&reports),
        Format::Json => reports_to_json(&reports) + "\n",
    };
    Ok((text, failed))
}

fn run(cli: &Cli) -> Res<()> {
    let (text, failed) = match &cli.command {
        Command::Density { law, points } => (density(cli, *law, points)?, 0),
        Command::Eppf => (eppf_table(cli)?, 0),
        Command::Sample { kind, sticks } => (sample(cli, *kind, *sticks)?, 0),
        Command::Frag { input, sticks } => (frag(cli, input, *sticks)?, 0),
        Command::Coag { input, with } => (coag(cli, input, with)?, 0),
        Command::Verify { names, s, omit_timing } => verify(cli, names, *s, *omit_timing)?,
    };
    match &cli.out {
        Some(path) => std::fs::write(path, text)?,
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    if failed > 0 {
        return Err(Failure::Experiments(failed));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Experiments(k)) => {
            eprintln!("gibbs-frag: {k} experiment row(s) failed");
            ExitCode::from(1)
        }
        Err(Failure::Io(e)) => {
            eprintln!("gibbs-frag: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Lib(e)) => {
            eprintln!("gibbs-frag: {e}");
            ExitCode::from(match e {
                Error::Numeric { .. } => 3,
                Error::DegenerateTest(_) => 1,
                _ => 2,
            })
        }
    }
}
