//! Run configuration: defaults, a flat dotted-key file, then command-line overrides.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use toml::Value;

use crate::error::CliError;

/// Which flow a command runs on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SystemKind {
    Kerr,
    Schwarzschild,
    Toy,
    Cat,
}

impl SystemKind {
    fn parse(s: &str) -> Result<Self, CliError> {
        match s {
            "kerr" => Ok(Self::Kerr),
            "schwarzschild" => Ok(Self::Schwarzschild),
            "toy" => Ok(Self::Toy),
            "cat" => Ok(Self::Cat),
            other => Err(CliError::Invalid(format!(
                "system.kind = {other:?}; expected kerr, schwarzschild, toy or cat"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpacetimeSection {
    pub mass: f64,
    pub spin: f64,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ToySection {
    pub nu: f64,
    pub omega1: f64,
    pub omega2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntegratorSection {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    pub renorm_interval: f64,
    /// Shadowing tolerance on Kerr trapped orbits; 0 disables it.
    pub shadow_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SamplingSection {
    pub count: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PressureSection {
    pub s: Vec<f64>,
    pub eps: Vec<f64>,
    pub t: Vec<f64>,
    pub h_sep: f64,
    pub variational: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NhSection {
    pub r_cap: u32,
    pub horizon: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LyapunovSection {
    pub horizon: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrbitSection {
    pub horizon: f64,
    pub h_out: f64,
    pub sample: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhotonRegionSection {
    pub rows: usize,
    pub radii: Vec<f64>,
}

/// Fully resolved configuration, serialized into every output. The worker count and
/// the output directory are left out of the echo.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub system: SystemKind,
    pub spacetime: SpacetimeSection,
    pub toy: ToySection,
    pub integrator: IntegratorSection,
    pub sampling: SamplingSection,
    pub pressure: PressureSection,
    pub nh: NhSection,
    pub lyapunov: LyapunovSection,
    pub orbit: OrbitSection,
    pub photon_region: PhotonRegionSection,
    #[serde(skip)]
    pub output_dir: PathBuf,
    #[serde(skip)]
    pub workers: usize,
}

/// Every accepted key with its documented default. `None` defaults depend on
/// `system.kind` and are filled in by [`system_default`].
pub const KEYS: &[(&str, Option<&str>, &str)] = &[
    ("system.kind", Some("\"kerr\""), "kerr | schwarzschild | toy | cat"),
    ("spacetime.mass", Some("1.0"), "black-hole mass"),
    ("spacetime.spin", Some("0.9"), "spin a, |a| < mass (ignored for schwarzschild)"),
    ("spacetime.lambda", Some("0.0"), "cosmological constant"),
    ("toy.nu", Some("0.5"), "normal rate of the toy flow"),
    ("toy.omega1", Some("1.0"), "first rotation frequency of the toy flow"),
    ("toy.omega2", Some("1.4142135623730951"), "second rotation frequency of the toy flow"),
    ("integrator.rel_tol", Some("1e-10"), "relative step tolerance"),
    ("integrator.abs_tol", Some("1e-10"), "absolute step tolerance"),
    ("integrator.max_step", Some("0.1"), "largest step"),
    ("integrator.renorm_interval", Some("1.0"), "tangent renormalization spacing"),
    ("integrator.shadow_tol", Some("1e-6"), "Kerr trapped-orbit shadowing tolerance, 0 = off"),
    ("sampling.count", None, "trapped samples: kerr 2000, schwarzschild 200, toy 400, cat 250000"),
    ("sampling.seed", Some("1"), "sampler seed"),
    ("pressure.s", Some("[0.0, 0.25, 0.5, 1.0]"), "pressure parameters s"),
    ("pressure.eps", None, "separation scales: [0.2, 0.1, 0.05], cat [0.3, 0.2, 0.1]"),
    ("pressure.t", None, "horizons: [10, 20, 30, 40, 60], cat [1, 2, 3, 4, 5]"),
    ("pressure.h_sep", None, "orbit sampling step for separation: 0.5, cat 1.0"),
    ("pressure.variational", Some("false"), "also run the NH check and the variational estimate"),
    ("nh.r_cap", Some("10"), "largest order r tested"),
    ("nh.horizon", Some("200.0"), "spectrum averaging window"),
    ("nh.samples", Some("50"), "samples in the NH check"),
    ("lyapunov.horizon", Some("100.0"), "averaging window of the exponent table"),
    ("lyapunov.samples", Some("8"), "rows of the exponent table"),
    ("orbit.horizon", Some("200.0"), "trajectory length"),
    ("orbit.h_out", Some("0.5"), "trajectory output spacing"),
    ("orbit.sample", Some("0"), "index of the trapped sample to integrate"),
    ("photon_region.rows", Some("9"), "evenly spaced radii in the photon-region table"),
    ("photon_region.radii", Some("[]"), "extra radii in the photon-region table"),
    ("output.dir", Some("\"trapped-pressure-out\""), "directory for file outputs"),
    ("run.workers", Some("0"), "worker threads, 0 = TRAPPED_PRESSURE_WORKERS or all cores"),
];

fn system_default(key: &str, kind: SystemKind) -> &'static str {
    let cat = kind == SystemKind::Cat;
    match key {
        "sampling.count" => match kind {
            SystemKind::Kerr => "2000",
            SystemKind::Schwarzschild => "200",
            SystemKind::Toy => "400",
            SystemKind::Cat => "250000",
        },
        "pressure.eps" if cat => "[0.3, 0.2, 0.1]",
        "pressure.eps" => "[0.2, 0.1, 0.05]",
        "pressure.t" if cat => "[1.0, 2.0, 3.0, 4.0, 5.0]",
        "pressure.t" => "[10.0, 20.0, 30.0, 40.0, 60.0]",
        "pressure.h_sep" if cat => "1.0",
        "pressure.h_sep" => "0.5",
        _ => unreachable!("{key} has a fixed default"),
    }
}

/// Flat `key -> value` layer.
pub type Layer = BTreeMap<String, Value>;

fn flatten(prefix: &str, table: &toml::Table, out: &mut Layer) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            Value::Table(t) => flatten(&key, t, out),
            other => {
                out.insert(key, other.clone());
            }
        }
    }
}

/// Parses a configuration file of `section.key = value` lines.
pub fn parse_layer(text: &str, origin: &str) -> Result<Layer, CliError> {
    let table: toml::Table = text
        .parse()
        .map_err(|e| CliError::Invalid(format!("{origin}: {e}")))?;
    let mut out = Layer::new();
    flatten("", &table, &mut out);
    for key in out.keys() {
        if !KEYS.iter().any(|(k, _, _)| k == key) {
            return Err(CliError::Invalid(format!("{origin}: unknown key {key}")));
        }
    }
    Ok(out)
}

pub fn read_layer(path: &Path) -> Result<Layer, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Invalid(format!("cannot read {}: {e}", path.display())))?;
    parse_layer(&text, &path.display().to_string())
}

/// One `key=value` override, with the value in the same syntax as the file.
pub fn parse_assignment(s: &str) -> Result<(String, Value), CliError> {
    let layer = parse_layer(s, "--set")?;
    let mut it = layer.into_iter();
    match (it.next(), it.next()) {
        (Some(kv), None) => Ok(kv),
        _ => Err(CliError::Invalid(format!("--set expects one key=value, got {s:?}"))),
    }
}

struct Lookup<'a> {
    layers: &'a [Layer],
    kind: SystemKind,
}

impl Lookup<'_> {
    fn raw(&self, key: &str) -> Result<Value, CliError> {
        if let Some(v) = self.layers.iter().rev().find_map(|l| l.get(key)) {
            return Ok(v.clone());
        }
        let (_, default, _) = KEYS
            .iter()
            .find(|(k, _, _)| *k == key)
            .expect("every looked-up key is registered");
        let text = default.unwrap_or_else(|| system_default(key, self.kind));
        let table: toml::Table = format!("v = {text}").parse().expect("defaults parse");
        Ok(table["v"].clone())
    }

    fn f64(&self, key: &str) -> Result<f64, CliError> {
        as_f64(&self.raw(key)?).ok_or_else(|| wrong_type(key, "a number"))
    }

    fn uint(&self, key: &str) -> Result<u64, CliError> {
        match self.raw(key)? {
            Value::Integer(i) if i >= 0 => Ok(i as u64),
            _ => Err(wrong_type(key, "a non-negative integer")),
        }
    }

    fn bool(&self, key: &str) -> Result<bool, CliError> {
        self.raw(key)?.as_bool().ok_or_else(|| wrong_type(key, "true or false"))
    }

    fn string(&self, key: &str) -> Result<String, CliError> {
        match self.raw(key)? {
            Value::String(s) => Ok(s),
            _ => Err(wrong_type(key, "a string")),
        }
    }

    fn list(&self, key: &str) -> Result<Vec<f64>, CliError> {
        match self.raw(key)? {
            Value::Array(a) => a
                .iter()
                .map(|v| as_f64(v).ok_or_else(|| wrong_type(key, "a list of numbers")))
                .collect(),
            v => as_f64(&v).map(|x| vec![x]).ok_or_else(|| wrong_type(key, "a list of numbers")),
        }
    }
}

fn as_f64(v: &Value) -> Option<f64> {
    match v {
        Value::Float(f) => Some(*f),
        Value::Integer(i) => Some(*i as f64),
        _ => None,
    }
}

fn wrong_type(key: &str, what: &str) -> CliError {
    CliError::Invalid(format!("{key} must be {what}"))
}

impl RunConfig {
    /// Resolves the layers (later layers win) against the defaults.
    pub fn resolve(layers: &[Layer]) -> Result<Self, CliError> {
        let probe = Lookup { layers, kind: SystemKind::Kerr };
        let kind = SystemKind::parse(&probe.string("system.kind")?)?;
        let l = Lookup { layers, kind };
        let workers = match l.uint("run.workers")? as usize {
            0 => std::env::var("TRAPPED_PRESSURE_WORKERS")
                .ok()
                .and_then(|v| v.trim().parse().ok())
                .unwrap_or(0),
            n => n,
        };
        Ok(Self {
            system: kind,
            spacetime: SpacetimeSection {
                mass: l.f64("spacetime.mass")?,
                spin: if kind == SystemKind::Schwarzschild { 0.0 } else { l.f64("spacetime.spin")? },
                lambda: l.f64("spacetime.lambda")?,
            },
            toy: ToySection {
                nu: l.f64("toy.nu")?,
                omega1: l.f64("toy.omega1")?,
                omega2: l.f64("toy.omega2")?,
            },
            integrator: IntegratorSection {
                rel_tol: l.f64("integrator.rel_tol")?,
                abs_tol: l.f64("integrator.abs_tol")?,
                max_step: l.f64("integrator.max_step")?,
                renorm_interval: l.f64("integrator.renorm_interval")?,
                shadow_tol: l.f64("integrator.shadow_tol")?,
            },
            sampling: SamplingSection {
                count: l.uint("sampling.count")? as usize,
                seed: l.uint("sampling.seed")?,
            },
            pressure: PressureSection {
                s: l.list("pressure.s")?,
                eps: l.list("pressure.eps")?,
                t: l.list("pressure.t")?,
                h_sep: l.f64("pressure.h_sep")?,
                variational: l.bool("pressure.variational")?,
            },
            nh: NhSection {
                r_cap: l.uint("nh.r_cap")? as u32,
                horizon: l.f64("nh.horizon")?,
                samples: l.uint("nh.samples")? as usize,
            },
            lyapunov: LyapunovSection {
                horizon: l.f64("lyapunov.horizon")?,
                samples: l.uint("lyapunov.samples")? as usize,
            },
            orbit: OrbitSection {
                horizon: l.f64("orbit.horizon")?,
                h_out: l.f64("orbit.h_out")?,
                sample: l.uint("orbit.sample")? as usize,
            },
            photon_region: PhotonRegionSection {
                rows: l.uint("photon_region.rows")? as usize,
                radii: l.list("photon_region.radii")?,
            },
            output_dir: PathBuf::from(l.string("output.dir")?),
            workers,
        })
    }
}
