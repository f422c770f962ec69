//! TOML scenario files.
//!
//! Every number may be written as a TOML integer, a float, or a string
//! holding a decimal or an exact ratio such as `"5/8"`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use garz_core::macroscopic::BoundaryMode;
use garz_core::microscopic::{IndexPolicy, Tolerances};
use garz_core::{Experiment, Kernel, KernelFamily, PiecewiseConstant, Preset, Scale, VelocityModel};
use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::CliError;

/// A real number read from a decimal or a `p/q` ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Number(pub f64);

impl Number {
    pub fn parse(s: &str) -> Option<f64> {
        let s = s.trim();
        let v = match s.split_once('/') {
            Some((p, q)) => p.trim().parse::<f64>().ok()? / q.trim().parse::<f64>().ok()?,
            None => s.parse::<f64>().ok()?,
        };
        v.is_finite().then_some(v)
    }
}

impl Serialize for Number {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.0)
    }
}

impl<'de> Deserialize<'de> for Number {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = Number;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a number or a string such as \"5/8\"")
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Number, E> {
                Ok(Number(v as f64))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Number, E> {
                Ok(Number(v as f64))
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Number, E> {
                Ok(Number(v))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Number, E> {
                Number::parse(v).map(Number).ok_or_else(|| E::custom(format!("`{v}` is not a number or ratio")))
            }
        }
        d.deserialize_any(V)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Domain {
    pub a: Number,
    pub b: Number,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VelocityConfig {
    pub family: String,
    #[serde(flatten)]
    pub params: BTreeMap<String, Number>,
}

impl Default for VelocityConfig {
    fn default() -> Self {
        Self { family: "greenshields".into(), params: BTreeMap::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Initial {
    /// `(left breakpoint, value)` pairs; the first breakpoint is `domain.a`.
    pub rho0: Vec<(Number, Number)>,
    pub omega0: Vec<(Number, Number)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyName {
    #[default]
    #[serde(rename = "J")]
    J,
    Bulk,
    All,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LyapunovConfig {
    #[serde(default)]
    pub policy: PolicyName,
    /// Gap indices for `policy = "custom"`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub indices: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TolerancesConfig {
    pub atol: Option<Number>,
    pub rtol: Option<Number>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "default_scale")]
    pub scale: String,
    pub domain: Domain,
    pub n_cars: usize,
    pub dx: Number,
    pub eta: Number,
    pub kernel: String,
    #[serde(default)]
    pub velocity: VelocityConfig,
    pub vbar: Number,
    pub t_end: Number,
    #[serde(default)]
    pub output_times: Vec<Number>,
    #[serde(default = "default_boundary")]
    pub boundary: String,
    pub initial: Initial,
    #[serde(default)]
    pub lyapunov: LyapunovConfig,
    #[serde(default)]
    pub tolerances: TolerancesConfig,
}

fn default_scale() -> String {
    Scale::default().name().into()
}

fn default_boundary() -> String {
    BoundaryMode::default().name().into()
}

fn schema(field: &str, message: impl Into<String>) -> CliError {
    CliError::Schema { field: field.into(), message: message.into() }
}

fn profile(field: &str, pairs: &[(Number, Number)], a: f64, b: f64) -> Result<PiecewiseConstant, CliError> {
    let Some(first) = pairs.first() else {
        return Err(schema(field, "needs at least one (breakpoint, value) pair"));
    };
    if first.0 .0 != a {
        return Err(schema(field, format!("first breakpoint {} must equal domain.a = {a}", first.0 .0)));
    }
    if let Some(w) = pairs.windows(2).find(|w| !(w[1].0 .0 > w[0].0 .0)) {
        return Err(schema(field, format!("breakpoints must increase, got {} then {}", w[0].0 .0, w[1].0 .0)));
    }
    let pieces: Vec<(f64, f64)> = pairs.iter().map(|(x, v)| (x.0, v.0)).collect();
    PiecewiseConstant::new(&pieces, b).map_err(|e| schema(field, e.to_string()))
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| CliError::Parse(e.to_string()))?;
        cfg.to_experiment()?;
        Ok(cfg.with_defaults())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    fn with_defaults(mut self) -> Self {
        let d = Tolerances::default();
        self.tolerances.atol.get_or_insert(Number(d.atol));
        self.tolerances.rtol.get_or_insert(Number(d.rtol));
        self
    }

    pub fn from_preset(preset: Preset) -> Self {
        Self::from_experiment(&preset.experiment())
    }

    pub fn from_experiment(e: &Experiment) -> Self {
        let pairs = |p: &PiecewiseConstant| p.pieces().map(|(x, v)| (Number(x), Number(v))).collect();
        let mut params = BTreeMap::new();
        if let VelocityModel::PowerLaw { exponent } = e.velocity {
            params.insert("exponent".to_string(), Number(exponent));
        }
        let (policy, indices) = match &e.index_policy {
            IndexPolicy::Apriori => (PolicyName::J, Vec::new()),
            IndexPolicy::Bulk => (PolicyName::Bulk, Vec::new()),
            IndexPolicy::All => (PolicyName::All, Vec::new()),
            IndexPolicy::Custom(v) => (PolicyName::Custom, v.clone()),
        };
        ScenarioConfig {
            scale: e.scale.name().into(),
            domain: Domain { a: Number(e.rho0.a()), b: Number(e.rho0.b()) },
            n_cars: e.n_cars,
            dx: Number(e.dx),
            eta: Number(e.kernel.eta()),
            kernel: e.kernel.family().name().into(),
            velocity: VelocityConfig { family: e.velocity.name().into(), params },
            vbar: Number(e.vbar),
            t_end: Number(e.t_end),
            output_times: e.output_times.iter().copied().map(Number).collect(),
            boundary: e.boundary.name().into(),
            initial: Initial { rho0: pairs(&e.rho0), omega0: pairs(&e.omega0) },
            lyapunov: LyapunovConfig { policy, indices },
            tolerances: TolerancesConfig {
                atol: Some(Number(e.tolerances.atol)),
                rtol: Some(Number(e.tolerances.rtol)),
            },
        }
    }

    pub fn to_experiment(&self) -> Result<Experiment, CliError> {
        let scale: Scale = self.scale.parse().map_err(|e: garz_core::GarzError| schema("scale", e.to_string()))?;
        let (a, b) = (self.domain.a.0, self.domain.b.0);
        if !(a < b) {
            return Err(schema("domain", format!("need a < b, got [{a}, {b}]")));
        }
        let family: KernelFamily =
            self.kernel.parse().map_err(|e: garz_core::GarzError| schema("kernel", e.to_string()))?;
        let kernel = Kernel::new(family, self.eta.0).map_err(|e| schema("eta", e.to_string()))?;
        let velocity = self.velocity_model()?;
        let boundary: BoundaryMode =
            self.boundary.parse().map_err(|e: garz_core::GarzError| schema("boundary", e.to_string()))?;
        let index_policy = match self.lyapunov.policy {
            PolicyName::J => IndexPolicy::Apriori,
            PolicyName::Bulk => IndexPolicy::Bulk,
            PolicyName::All => IndexPolicy::All,
            PolicyName::Custom if self.lyapunov.indices.is_empty() => {
                return Err(schema("lyapunov.indices", "custom policy needs a nonempty index list"));
            }
            PolicyName::Custom => IndexPolicy::Custom(self.lyapunov.indices.clone()),
        };
        if self.lyapunov.policy != PolicyName::Custom && !self.lyapunov.indices.is_empty() {
            return Err(schema("lyapunov.indices", "only allowed with policy = \"custom\""));
        }
        if let Some(&i) = self.lyapunov.indices.iter().find(|&&i| i + 1 >= self.n_cars) {
            return Err(schema("lyapunov.indices", format!("gap index {i} out of range for {} cars", self.n_cars)));
        }
        let d = Tolerances::default();
        let tolerances = Tolerances {
            atol: self.tolerances.atol.map_or(d.atol, |n| n.0),
            rtol: self.tolerances.rtol.map_or(d.rtol, |n| n.0),
        };
        if !(tolerances.atol > 0.0 && tolerances.rtol > 0.0) {
            return Err(schema("tolerances", "atol and rtol must be positive"));
        }
        if !(self.t_end.0 > 0.0) {
            return Err(schema("t_end", format!("must be positive, got {}", self.t_end.0)));
        }
        if !(self.dx.0 > 0.0) {
            return Err(schema("dx", format!("must be positive, got {}", self.dx.0)));
        }
        if self.n_cars < 2 {
            return Err(schema("n_cars", format!("need at least two cars, got {}", self.n_cars)));
        }
        let e = Experiment {
            scale,
            kernel,
            velocity,
            vbar: self.vbar.0,
            rho0: profile("initial.rho0", &self.initial.rho0, a, b)?,
            omega0: profile("initial.omega0", &self.initial.omega0, a, b)?,
            n_cars: self.n_cars,
            dx: self.dx.0,
            t_end: self.t_end.0,
            output_times: self.output_times.iter().map(|n| n.0).collect(),
            index_policy,
            tolerances,
            boundary,
        };
        if let Some(t) = e.output_times.iter().find(|&&t| !(0.0..=e.t_end).contains(&t)) {
            return Err(schema("output_times", format!("{t} lies outside [0, {}]", e.t_end)));
        }
        e.validate().map_err(|err| schema("scenario", err.to_string()))?;
        Ok(e)
    }

    fn velocity_model(&self) -> Result<VelocityModel, CliError> {
        let v = &self.velocity;
        let unexpected = |allowed: &[&str]| v.params.keys().find(|k| !allowed.contains(&k.as_str())).cloned();
        match v.family.as_str() {
            "greenshields" => match unexpected(&[]) {
                Some(k) => Err(schema(&format!("velocity.{k}"), "greenshields takes no parameters")),
                None => Ok(VelocityModel::Greenshields),
            },
            "power" => {
                if let Some(k) = unexpected(&["exponent"]) {
                    return Err(schema(&format!("velocity.{k}"), "power takes only `exponent`"));
                }
                let e = v.params.get("exponent").ok_or_else(|| schema("velocity.exponent", "missing"))?;
                VelocityModel::power_law(e.0).map_err(|err| schema("velocity.exponent", err.to_string()))
            }
            other => {
                Err(schema("velocity.family", format!("unknown family `{other}` (expected greenshields or power)")))
            }
        }
    }
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    ScenarioConfig::from_toml(&text).map_err(|e| match e {
        CliError::Parse(m) => CliError::Parse(format!("{}: {m}", path.display())),
        other => other,
    })
}
