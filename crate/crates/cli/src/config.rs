use std::path::Path;

use laurent_lab::disorder::SingleSiteDist;
use laurent_lab::ids::geometric_grid;
use laurent_lab::lifshitz::Tilt;
use laurent_lab::operator::{Boundary, IntegerSymbolSpec};
use laurent_lab::symbol::Symbol;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    SymbolReport,
    Bracketing,
    GapScan,
    IdsSweep,
    Sandwich,
    Temple,
    TailFit,
    Probes,
    Figure1,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::SymbolReport => "symbol-report",
            Kind::Bracketing => "bracketing",
            Kind::GapScan => "gap-scan",
            Kind::IdsSweep => "ids-sweep",
            Kind::Sandwich => "sandwich",
            Kind::Temple => "temple",
            Kind::TailFit => "tail-fit",
            Kind::Probes => "probes",
            Kind::Figure1 => "figure1",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EnergyGrid {
    List { values: Vec<f64> },
    Geometric { lo: f64, hi: f64, n: usize },
    Linear { lo: f64, hi: f64, n: usize },
}

impl EnergyGrid {
    fn validate(&self) -> Result<(), String> {
        match *self {
            EnergyGrid::List { ref values } => {
                if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
                    return Err("energy list must be non-empty and finite".into());
                }
            }
            EnergyGrid::Geometric { lo, hi, n } => {
                if !(lo > 0.0 && hi > lo && hi.is_finite() && n >= 2) {
                    return Err("geometric grid needs 0 < lo < hi and n >= 2".into());
                }
            }
            EnergyGrid::Linear { lo, hi, n } => {
                if !(lo.is_finite() && hi > lo && hi.is_finite() && n >= 2) {
                    return Err("linear grid needs lo < hi and n >= 2".into());
                }
            }
        }
        Ok(())
    }

    pub fn values(&self) -> Vec<f64> {
        match *self {
            EnergyGrid::List { ref values } => values.clone(),
            EnergyGrid::Geometric { lo, hi, n } => geometric_grid(lo, hi, n),
            EnergyGrid::Linear { lo, hi, n } => (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect(),
        }
    }
}

/// Parameters for the lower probe and bump-vector runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BumpConfig {
    pub n: Vec<usize>,
    pub l: Vec<usize>,
    #[serde(default)]
    pub nodes: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub kind: Kind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub symbol: Option<Symbol<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<IntegerSymbolSpec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary: Option<Boundary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l_list: Option<Vec<usize>>,
    /// Cut points for bracketing; defaults to the centre.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cuts: Option<Vec<i64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energies: Option<EnergyGrid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dist: Option<SingleSiteDist<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_tilde: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tilt: Option<Tilt<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_low: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_up: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_log2: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_max: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cap: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bump: Option<BumpConfig>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

fn missing(kind: Kind, field: &str) -> ConfigError {
    ConfigError(format!("{} requires `{field}`", kind.name()))
}

impl RunConfig {
    /// Reads a TOML config, or the `config` entry of a JSON manifest.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        let cfg: RunConfig = if path.extension().is_some_and(|e| e == "json") {
            let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| ConfigError(format!("manifest: {e}")))?;
            let inner = v.get("config").cloned().ok_or_else(|| ConfigError("manifest has no `config` entry".into()))?;
            serde_json::from_value(inner).map_err(|e| ConfigError(format!("manifest config: {e}")))?
        } else {
            toml::from_str(&text).map_err(|e| ConfigError(e.to_string()))?
        };
        Ok(cfg)
    }

    pub fn spec(&self) -> Result<IntegerSymbolSpec<f64>, ConfigError> {
        let s = self.spec.as_ref().ok_or_else(|| missing(self.kind, "spec"))?;
        IntegerSymbolSpec::new(s.scale, s.locations.clone(), s.alpha_bar, s.beta).map_err(|e| ConfigError(format!("spec: {e}")))
    }

    pub fn symbol(&self) -> Result<Symbol<f64>, ConfigError> {
        let s = self.symbol.as_ref().ok_or_else(|| missing(self.kind, "symbol"))?;
        let checked = match s {
            Symbol::CosinePowerProduct { scale, factors } => Symbol::cosine_power_product(*scale, factors.clone()),
            Symbol::Tabulated { samples, holder, offset } => Symbol::tabulated(samples.clone(), *holder).map(|t| t.shifted(*offset)),
        };
        checked.map_err(|e| ConfigError(format!("symbol: {e}")))
    }

    pub fn dist(&self) -> Result<SingleSiteDist<f64>, ConfigError> {
        let d = self.dist.ok_or_else(|| missing(self.kind, "dist"))?;
        d.validate().map_err(|e| ConfigError(format!("dist: {e}")))?;
        Ok(d)
    }

    pub fn l(&self) -> Result<usize, ConfigError> {
        match self.l {
            Some(l) if l >= 1 => Ok(l),
            Some(_) => Err(ConfigError("`l` must be positive".into())),
            None => Err(missing(self.kind, "l")),
        }
    }

    pub fn l_list(&self) -> Result<Vec<usize>, ConfigError> {
        match &self.l_list {
            Some(v) if !v.is_empty() && v.iter().all(|&l| l >= 1) => Ok(v.clone()),
            Some(_) => Err(ConfigError("`l_list` must be non-empty with positive entries".into())),
            None => Err(missing(self.kind, "l_list")),
        }
    }

    pub fn energies(&self) -> Result<Vec<f64>, ConfigError> {
        let g = self.energies.as_ref().ok_or_else(|| missing(self.kind, "energies"))?;
        g.validate().map_err(ConfigError)?;
        Ok(g.values())
    }

    pub fn samples(&self) -> Result<usize, ConfigError> {
        match self.samples {
            Some(n) if n >= 1 => Ok(n),
            Some(_) => Err(ConfigError("`samples` must be positive".into())),
            None => Err(missing(self.kind, "samples")),
        }
    }

    pub fn c_tilde(&self) -> Result<f64, ConfigError> {
        let c = self.c_tilde.unwrap_or(0.25);
        if !(c > 0.0 && c < 0.5) {
            return Err(ConfigError(format!("`c_tilde` must lie in (0, 1/2), got {c}")));
        }
        Ok(c)
    }

    pub fn gamma(&self) -> Result<f64, ConfigError> {
        let g = self.gamma.unwrap_or(1.0);
        if !(g > 0.0 && g.is_finite()) {
            return Err(ConfigError(format!("`gamma` must be positive, got {g}")));
        }
        Ok(g)
    }

    pub fn positive_energies(&self) -> Result<Vec<f64>, ConfigError> {
        let e = self.energies()?;
        if e.iter().any(|&x| x <= 0.0) {
            return Err(ConfigError("probe energies must be positive".into()));
        }
        Ok(e)
    }

    /// Checks every parameter the selected kind reads, without running anything.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if let Some(c0) = self.c0 {
            if !(c0 > 0.0 && c0.is_finite()) {
                return Err(ConfigError(format!("`c0` must be positive, got {c0}")));
            }
        }
        if let Some(g) = self.grid_log2 {
            if !(2..=24).contains(&g) {
                return Err(ConfigError(format!("`grid_log2` must lie in [2, 24], got {g}")));
            }
        }
        if let Some(Tilt::Fixed { theta }) = self.tilt {
            if !(theta > 0.0 && theta.is_finite()) {
                return Err(ConfigError(format!("tilt theta must be positive, got {theta}")));
            }
        }
        if let Some(Tilt::SmallBall { factor }) = self.tilt {
            if !(factor > 0.0 && factor.is_finite()) {
                return Err(ConfigError(format!("tilt factor must be positive, got {factor}")));
            }
        }
        match self.kind {
            Kind::SymbolReport => {
                self.symbol()?;
                if self.energies.is_some() {
                    self.energies()?;
                }
            }
            Kind::Bracketing => {
                self.spec()?;
                self.l()?;
            }
            Kind::GapScan => {
                self.spec()?;
                self.l_list()?;
            }
            Kind::IdsSweep => {
                if self.spec.is_some() == self.symbol.is_some() {
                    return Err(ConfigError("ids-sweep requires exactly one of `spec` and `symbol`".into()));
                }
                if self.spec.is_some() {
                    self.spec()?;
                } else {
                    self.symbol()?;
                    if self.boundary.is_some_and(|b| b != Boundary::Simple) {
                        return Err(ConfigError("symbol sections only support the simple boundary".into()));
                    }
                }
                self.l()?;
                self.energies()?;
                self.dist()?;
                self.samples()?;
            }
            Kind::Sandwich => {
                if self.spec.is_none() && self.symbol.is_none() {
                    return Err(ConfigError("sandwich requires `spec`, `symbol` or both".into()));
                }
                if self.spec.is_some() {
                    self.spec()?;
                }
                if self.symbol.is_some() {
                    self.symbol()?;
                }
                self.l()?;
                self.energies()?;
                self.dist()?;
                self.samples()?;
            }
            Kind::Temple => {
                self.spec()?;
                self.l()?;
                self.dist()?;
                self.samples()?;
                self.c_tilde()?;
            }
            Kind::TailFit => {
                self.spec()?;
                self.positive_energies()?;
                self.dist()?;
                self.samples()?;
                self.gamma()?;
                if let Some((a, b)) = self.window {
                    if !(a > 0.0 && b > a) {
                        return Err(ConfigError("`window` needs 0 < lo < hi".into()));
                    }
                }
            }
            Kind::Probes => {
                self.spec()?;
                self.positive_energies()?;
                self.dist()?;
                self.samples()?;
                self.gamma()?;
                if let Some(b) = &self.bump {
                    if b.n.is_empty() || b.l.is_empty() || b.n.contains(&0) || b.l.contains(&0) {
                        return Err(ConfigError("`bump` needs non-empty positive `n` and `l` lists".into()));
                    }
                }
            }
            Kind::Figure1 => {
                if self.symbol.is_some() {
                    self.symbol()?;
                }
                for (name, v) in [("c_low", self.c_low), ("c_up", self.c_up)] {
                    if let Some(c) = v {
                        if !(c > 0.0 && c.is_finite()) {
                            return Err(ConfigError(format!("`{name}` must be positive, got {c}")));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<RunConfig, String> {
        toml::from_str::<RunConfig>(s).map_err(|e| e.to_string())
    }

    #[test]
    fn parses_ids_sweep() {
        let c = parse(
            r#"
kind = "ids-sweep"
seed = 3
l = 20
samples = 4
boundary = "neumann-mod"
spec = { locations = [0.0], alpha_bar = 1, beta = 1.0, scale = 1.0 }
energies = { kind = "geometric", lo = 0.01, hi = 1.0, n = 5 }
dist = { kind = "uniform", hi = 1.0 }
"#,
        )
        .unwrap();
        c.validate().unwrap();
        assert_eq!(c.energies().unwrap().len(), 5);
    }

    #[test]
    fn shipped_configs_validate() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
        let mut seen = 0;
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            let cfg = RunConfig::load(&path).unwrap();
            cfg.validate().unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            seen += 1;
        }
        assert_eq!(seen, 9);
    }

    #[test]
    fn rejects_unknown_and_invalid() {
        assert!(parse("kind = \"gap-scan\"\nbogus = 1\n").is_err());
        assert!(parse("kind = \"nope\"\n").is_err());
        let c = parse("kind = \"gap-scan\"\nl_list = [8]\nspec = { locations = [0.0], alpha_bar = 1, beta = 1.5, scale = 1.0 }\n").unwrap();
        assert!(c.validate().is_err());
        let c = parse("kind = \"temple\"\nl = 8\nsamples = 2\nc_tilde = 0.7\nspec = { locations = [0.0], alpha_bar = 1, beta = 1.0, scale = 1.0 }\ndist = { kind = \"uniform\", hi = 1.0 }\n").unwrap();
        assert!(c.validate().is_err());
    }
}
