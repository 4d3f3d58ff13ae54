mod commands;
mod config;
mod error;
mod validate;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use toml::Value;

use crate::config::{parse_assignment, read_layer, Layer, RunConfig, KEYS};
use crate::error::CliError;

/// Topological pressure, Lyapunov exponents and unstable Jacobians on trapped sets.
#[derive(Parser, Debug)]
#[command(name = "trapped-pressure", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print the horizon radii as JSON.
    Horizons(Common),
    /// Print the photon-region bounds and a table of spherical orbits as JSON.
    PhotonRegion {
        #[command(flatten)]
        common: Common,
        /// Evenly spaced rows across the region.
        #[arg(long)]
        rows: Option<usize>,
        /// Extra radius to tabulate (repeatable).
        #[arg(long = "r")]
        radii: Vec<f64>,
    },
    /// Integrate one trapped sample and write its trajectory CSV.
    Orbit {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long)]
        h_out: Option<f64>,
        /// Index of the trapped sample.
        #[arg(long)]
        sample: Option<usize>,
    },
    /// Unstable Jacobians and rates of the first trapped samples.
    Lyapunov {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        horizon: Option<f64>,
        /// Number of rows.
        #[arg(long)]
        rows: Option<usize>,
    },
    /// Lyapunov spectra and the order of normal hyperbolicity they certify.
    NhCheck {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        r_cap: Option<u32>,
        #[arg(long)]
        horizon: Option<f64>,
        /// Number of trapped samples in the check.
        #[arg(long)]
        nh_samples: Option<usize>,
    },
    /// Separated-set pressure estimates, optionally with the variational estimate.
    Pressure {
        #[command(flatten)]
        common: Common,
        /// Pressure parameters, comma separated.
        #[arg(long, value_delimiter = ',')]
        s: Vec<f64>,
        /// Separation scales, comma separated.
        #[arg(long, value_delimiter = ',')]
        eps: Vec<f64>,
        /// Time horizons, comma separated.
        #[arg(long, value_delimiter = ',')]
        t: Vec<f64>,
        #[arg(long)]
        h_sep: Option<f64>,
        /// Also run the NH check and the variational estimate.
        #[arg(long)]
        variational: bool,
        /// Exit 3 on coverage warnings or estimator disagreement.
        #[arg(long)]
        strict: bool,
    },
    /// Run the fixture and oracle checks and print a pass/fail table.
    Validate {
        #[arg(long, default_value = "trapped-pressure-out")]
        out_dir: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// List every configuration key with its default.
    Keys,
}

#[derive(Args, Debug)]
struct Common {
    /// Configuration file of dotted `section.key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override any key, e.g. `--set integrator.rel_tol=1e-9` (repeatable, wins over flags).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// kerr, schwarzschild, toy or cat.
    #[arg(long)]
    system: Option<String>,
    #[arg(long)]
    mass: Option<f64>,
    #[arg(long)]
    spin: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    nu: Option<f64>,
    #[arg(long)]
    omega1: Option<f64>,
    #[arg(long)]
    omega2: Option<f64>,
    #[arg(long)]
    rel_tol: Option<f64>,
    #[arg(long)]
    abs_tol: Option<f64>,
    /// Number of trapped samples.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Worker threads (0 = TRAPPED_PRESSURE_WORKERS or all cores).
    #[arg(long)]
    workers: Option<usize>,
}

struct FlagLayer(Layer);

impl FlagLayer {
    fn put(&mut self, key: &str, v: Option<impl Into<Value>>) {
        if let Some(v) = v {
            self.0.insert(key.into(), v.into());
        }
    }

    fn count(&mut self, key: &str, v: Option<usize>) {
        self.put(key, v.map(|n| n as i64));
    }

    fn list(&mut self, key: &str, v: &[f64]) {
        if !v.is_empty() {
            self.0.insert(key.into(), Value::Array(v.iter().map(|x| Value::Float(*x)).collect()));
        }
    }
}

impl Common {
    fn resolve(&self, extra: impl FnOnce(&mut FlagLayer)) -> Result<RunConfig, CliError> {
        let mut layers = Vec::new();
        if let Some(path) = &self.config {
            layers.push(read_layer(path)?);
        }
        let mut flags = FlagLayer(Layer::new());
        flags.put("system.kind", self.system.clone());
        flags.put("spacetime.mass", self.mass);
        flags.put("spacetime.spin", self.spin);
        flags.put("spacetime.lambda", self.lambda);
        flags.put("toy.nu", self.nu);
        flags.put("toy.omega1", self.omega1);
        flags.put("toy.omega2", self.omega2);
        flags.put("integrator.rel_tol", self.rel_tol);
        flags.put("integrator.abs_tol", self.abs_tol);
        flags.count("sampling.count", self.samples);
        flags.put("sampling.seed", self.seed.map(|s| s as i64));
        flags.put("output.dir", self.out_dir.as_ref().map(|p| p.display().to_string()));
        flags.count("run.workers", self.workers);
        extra(&mut flags);
        layers.push(flags.0);
        let mut sets = Layer::new();
        for s in &self.set {
            let (k, v) = parse_assignment(s)?;
            sets.insert(k, v);
        }
        layers.push(sets);
        RunConfig::resolve(&layers)
    }
}

fn init_workers(workers: usize) -> Result<(), CliError> {
    if workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .map_err(|e| CliError::Numerical(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<String, CliError> {
    let prepared = |common: &Common, extra: &dyn Fn(&mut FlagLayer)| -> Result<RunConfig, CliError> {
        let config = common.resolve(extra)?;
        init_workers(config.workers)?;
        Ok(config)
    };
    match cli.command {
        Command::Horizons(common) => commands::horizons(&prepared(&common, &|_| {})?),
        Command::PhotonRegion { common, rows, radii } => {
            commands::photon_region(&prepared(&common, &|f| {
                f.count("photon_region.rows", rows);
                f.list("photon_region.radii", &radii);
            })?)
        }
        Command::Orbit { common, horizon, h_out, sample } => commands::orbit(&prepared(&common, &|f| {
            f.put("orbit.horizon", horizon);
            f.put("orbit.h_out", h_out);
            f.count("orbit.sample", sample);
        })?),
        Command::Lyapunov { common, horizon, rows } => commands::lyapunov(&prepared(&common, &|f| {
            f.put("lyapunov.horizon", horizon);
            f.count("lyapunov.samples", rows);
        })?),
        Command::NhCheck { common, r_cap, horizon, nh_samples } => commands::nh(&prepared(&common, &|f| {
            f.put("nh.r_cap", r_cap.map(i64::from));
            f.put("nh.horizon", horizon);
            f.count("nh.samples", nh_samples);
        })?),
        Command::Pressure { common, s, eps, t, h_sep, variational, strict } => {
            let config = prepared(&common, &|f| {
                f.list("pressure.s", &s);
                f.list("pressure.eps", &eps);
                f.list("pressure.t", &t);
                f.put("pressure.h_sep", h_sep);
                if variational {
                    f.put("pressure.variational", Some(true));
                }
            })?;
            commands::pressure(&config, strict)
        }
        Command::Validate { out_dir, workers } => {
            let workers = workers.unwrap_or_else(|| {
                std::env::var("TRAPPED_PRESSURE_WORKERS")
                    .ok()
                    .and_then(|v| v.trim().parse().ok())
                    .unwrap_or(0)
            });
            init_workers(workers)?;
            validate::validate(&out_dir)
        }
        Command::Keys => Ok(KEYS
            .iter()
            .map(|(k, d, doc)| format!("{k:<28} {:<28} {doc}\n", d.unwrap_or("(per system)")))
            .collect()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
