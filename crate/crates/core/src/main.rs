use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use num_complex::Complex64;

use sbdconv::entropy::{angle_preservation_bound, bounds_table, dyadic_chain_check, maurey_f, maurey_f_envelope, solve_a, BoundQuery};
use sbdconv::harness::{parse_config, run_sweep};
use sbdconv::operator::{matrix_inner, DictionaryKind, Ensemble, SamplingMode};
use sbdconv::rng::{complex_normal_vec, rng_from_seed};
use sbdconv::{Error, Result};

#[derive(Parser)]
#[command(name = "sbdconv", version, about = "Restricted isometry experiments for sparse bilinear convolution")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo RIP estimate.
    RipEstimate(Common),
    /// Monte Carlo angle-preservation estimate.
    RapEstimate(Common),
    /// Monte Carlo orthogonality estimate.
    RopEstimate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        orthogonality: Option<OrthoArg>,
        /// Use independent dictionary copies for the partner pair.
        #[arg(long)]
        decoupled: bool,
    },
    /// Relative error of the Monte Carlo mean of A*A against its expectation, both sides.
    Isotropy(Common),
    /// Planted recovery with alternating hard thresholding.
    Recover {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        enforce_flatness: bool,
    },
    /// Run a grid sweep from a config file and flags.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        kind: Option<KindArg>,
        /// Comma-separated delta grid (bounds sweeps).
        #[arg(long)]
        delta: Option<String>,
    },
    /// Evaluate the closed-form bound calculators.
    Bounds(BoundsArgs),
    /// Quick internal consistency checks.
    Selftest,
}

/// Grid-valued flags take comma-separated lists.
#[derive(Args)]
struct Common {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    m: Option<String>,
    #[arg(long)]
    s1: Option<String>,
    #[arg(long)]
    s2: Option<String>,
    /// Flatness bound for u; `none` disables.
    #[arg(long)]
    mu1: Option<String>,
    #[arg(long)]
    mu2: Option<String>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// CSV path; `-` writes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    phi: Option<DictArg>,
    #[arg(long, value_enum)]
    psi: Option<DictArg>,
    #[arg(long, value_enum)]
    omega_mode: Option<OmegaArg>,
    #[arg(long)]
    approximate: bool,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    record_timing: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum DictArg {
    Gaussian,
    Identity,
}

#[derive(Clone, Copy, ValueEnum)]
enum OmegaArg {
    IidUniform,
    WithoutReplacement,
}

#[derive(Clone, Copy, ValueEnum)]
enum OrthoArg {
    Both,
    Either,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Rip,
    Rap,
    Rop,
    Isotropy,
    Recover,
    Bounds,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Csv,
}

#[derive(Args)]
struct BoundsArgs {
    #[arg(long, default_value_t = 128)]
    n: u64,
    #[arg(long, default_value_t = 64)]
    m: u64,
    #[arg(long, default_value_t = 1)]
    k: u64,
    #[arg(long, default_value_t = 2)]
    s: u64,
    #[arg(long, default_value_t = 2)]
    s1: u64,
    #[arg(long, default_value_t = 2)]
    s2: u64,
    #[arg(long, default_value_t = 1.0)]
    mu: f64,
    #[arg(long, default_value_t = 1.0)]
    mu1: f64,
    #[arg(long, default_value_t = 1.0)]
    mu2: f64,
    #[arg(long, default_value_t = 0.5)]
    delta: f64,
    #[arg(long, default_value_t = 2.0)]
    p: f64,
    /// Defaults to `1/√n`.
    #[arg(long)]
    norm_t: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

fn name<T: ValueEnum>(v: T) -> String {
    v.to_possible_value().map(|p| p.get_name().replace('-', "_")).unwrap_or_default()
}

impl Common {
    fn flags(&self, kind: &str) -> Vec<(String, String)> {
        let mut f = vec![("kind".to_string(), kind.to_string())];
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                f.push((k.to_string(), v));
            }
        };
        put("n", self.n.map(|v| v.to_string()));
        put("m", self.m.clone());
        put("s1", self.s1.clone());
        put("s2", self.s2.clone());
        put("mu1", self.mu1.clone());
        put("mu2", self.mu2.clone());
        put("trials", self.trials.map(|v| v.to_string()));
        put("seed", self.seed.map(|v| v.to_string()));
        put("out", self.out.as_ref().map(|p| p.display().to_string()));
        put("phi_kind", self.phi.map(name));
        put("psi_kind", self.psi.map(name));
        put("omega_mode", self.omega_mode.map(name));
        put("flavor", self.approximate.then(|| "approximate".to_string()));
        put("workers", self.workers.map(|v| v.to_string()));
        put("record_timing", self.record_timing.then(|| "true".to_string()));
        f
    }

    /// Single-run subcommands print to stdout unless `--out` is given.
    fn run(&self, kind: &str, extra: Vec<(String, String)>, stdout_default: bool) -> Result<()> {
        let mut flags = self.flags(kind);
        if stdout_default && self.out.is_none() {
            flags.push(("out".into(), "-".into()));
        }
        flags.extend(extra);
        let cfg = parse_config(self.config.as_deref(), &flags)?;
        for (key, source) in &cfg.provenance {
            if *source == sbdconv::harness::Source::Flag && self.config.is_some() {
                eprintln!("config: `{key}` set by flag");
            }
        }
        let summary = run_sweep(&cfg)?;
        if stdout_default && summary.skipped > 0 {
            return Err(Error::Infeasible(format!("{} of {} cells could not be sampled", summary.skipped, summary.rows)));
        }
        if let Some(meta) = summary.metadata {
            eprintln!(
                "wrote {} rows ({} skipped) to {} with metadata {}",
                summary.rows,
                summary.skipped,
                summary.csv.display(),
                meta.display()
            );
        }
        Ok(())
    }
}

fn bounds(args: &BoundsArgs) -> Result<()> {
    let q = BoundQuery {
        n: args.n,
        m: args.m,
        k: args.k,
        s: args.s,
        s1: args.s1,
        s2: args.s2,
        mu: args.mu,
        mu1: args.mu1,
        mu2: args.mu2,
        delta: args.delta,
        p: args.p,
        norm_t: args.norm_t.unwrap_or(1.0 / (args.n as f64).sqrt()),
        c: args.c,
    };
    let table = bounds_table(&q)?;
    match args.format {
        Format::Text => {
            let width = table.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
            for (k, v) in table {
                println!("{k:<width$}  {v}");
            }
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(std::io::stdout());
            w.write_record(["quantity", "value"])?;
            for (k, v) in table {
                w.write_record([k, v.to_string()])?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

fn check(name: &str, ok: bool, failures: &mut usize) {
    println!("{} {name}", if ok { "PASS" } else { "FAIL" });
    if !ok {
        *failures += 1;
    }
}

fn selftest() -> Result<()> {
    let mut failures = 0;
    let mut rng = rng_from_seed(1);

    let ens = Ensemble::generate(12, 5, SamplingMode::WithoutReplacement, DictionaryKind::Gaussian, DictionaryKind::Gaussian, 1)?;
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let x = DMatrix::from_vec(12, 12, complex_normal_vec(&mut rng, 144, 1.0));
        let b = complex_normal_vec(&mut rng, 5, 1.0);
        let ax = ens.forward_dense(&x)?;
        let lhs: Complex64 = ax.iter().zip(&b).map(|(a, b)| a.conj() * b).sum();
        let rhs = matrix_inner(&x, &ens.adjoint_dense(&b)?);
        let scale = x.norm() * b.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        worst = worst.max((lhs - rhs).norm() / scale);
    }
    check("adjoint balance", worst <= 1e-10, &mut failures);

    let a = solve_a();
    check("solve_a root", a > 1.0 && a < 2.0, &mut failures);
    let envelope = [(1, 10), (5, 100), (50, 1000)]
        .iter()
        .all(|&(k, n)| maurey_f(k, n, 2.0) <= maurey_f_envelope(k, n) * (1.0 + 1e-12));
    check("maurey envelope", envelope, &mut failures);
    let angle = (1..100).all(|i| {
        let d = i as f64 / 100.0;
        angle_preservation_bound(d).is_ok_and(|v| v <= 2.0 * 2f64.sqrt() * d)
    });
    check("angle preservation bound", angle, &mut failures);
    check(
        "dyadic chain",
        dyadic_chain_check(&[1.0, 0.8, 0.5, 0.5, 0.2, 0.1, 0.0])?,
        &mut failures,
    );

    if failures > 0 {
        return Err(Error::Infeasible(format!("{failures} selftest check(s) failed")));
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let none = Vec::new;
    match cli.command {
        Command::RipEstimate(c) => c.run("rip", none(), true),
        Command::RapEstimate(c) => c.run("rap", none(), true),
        Command::RopEstimate {
            common,
            orthogonality,
            decoupled,
        } => {
            let mut extra = none();
            if let Some(o) = orthogonality {
                extra.push(("orthogonality".into(), name(o)));
            }
            if decoupled {
                extra.push(("decoupled".into(), "true".into()));
            }
            common.run("rop", extra, true)
        }
        Command::Isotropy(c) => c.run("isotropy", none(), true),
        Command::Recover { common, enforce_flatness } => {
            let extra = if enforce_flatness {
                vec![("enforce_flatness".into(), "true".into())]
            } else {
                none()
            };
            common.run("recover", extra, true)
        }
        Command::Sweep { common, kind, delta } => {
            let mut extra = none();
            if let Some(d) = delta {
                extra.push(("delta".into(), d));
            }
            match kind {
                Some(k) => common.run(&name(k), extra, false),
                None => {
                    // The kind must then come from the config file.
                    let mut flags = common.flags("");
                    flags.remove(0);
                    flags.extend(extra);
                    let cfg = parse_config(common.config.as_deref(), &flags)?;
                    let summary = run_sweep(&cfg)?;
                    eprintln!("wrote {} rows ({} skipped) to {}", summary.rows, summary.skipped, summary.csv.display());
                    Ok(())
                }
            }
        }
        Command::Bounds(args) => bounds(&args),
        Command::Selftest => selftest(),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numeric() { 3 } else { 2 })
        }
    }
}
