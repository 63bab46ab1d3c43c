//! Experiment configuration: parsing, schema checks and physics preconditions.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use trimwave_core::geometry::{
    build_periodic_box, build_trim_mask, single_layer_gamma0, GeometrySpec, SiteCoord,
};
use trimwave_core::spectral::{energy_region, sigma0_single_layer, DEFAULT_DENSE_CAP};
use trimwave_core::DistributionSpec;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: u32,
    pub geometry: GeometrySpec,
    pub trim: Trim,
    pub distribution: DistributionSpec,
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    pub experiment: Experiment,
}

/// `"single-layer"` or an explicit list of unit-cell sites.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Trim {
    Named(String),
    Sites { gamma0: Vec<Vec<usize>> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Experiment {
    Spectrum(SpectrumParams),
    Endpoints(EndpointsParams),
    ExtendedCheck(ExtendedParams),
    Green(GreenParams),
    Wegner(WegnerConfig),
    MobilityScan(MobilityConfig),
    Ucp(UcpParams),
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Spectrum(_) => "spectrum",
            Experiment::Endpoints(_) => "endpoints",
            Experiment::ExtendedCheck(_) => "extended-check",
            Experiment::Green(_) => "green",
            Experiment::Wegner(_) => "wegner",
            Experiment::MobilityScan(_) => "mobility-scan",
            Experiment::Ucp(_) => "ucp",
        }
    }
}

fn one() -> u64 {
    1
}

fn zeta_max() -> f64 {
    trimwave_core::green::DEFAULT_ZETA_MAX
}

fn zeta_min() -> f64 {
    trimwave_core::green::DEFAULT_ZETA_MIN
}

fn zeta_points() -> usize {
    trimwave_core::green::DEFAULT_ZETA_POINTS
}

fn two() -> usize {
    2
}

fn gamma_floor() -> f64 {
    trimwave_core::diagnostics::DEFAULT_GAMMA_FLOOR
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumParams {
    #[serde(default = "one")]
    pub realizations: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointsParams {
    /// Extra constant couplings at which the cell Hellmann–Feynman derivative
    /// is reported, besides `a` and `b`.
    #[serde(default)]
    pub couplings: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtendedParams {
    #[serde(default = "one")]
    pub realizations: u64,
    #[serde(default)]
    pub allow_odd_width: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GreenExpectation {
    /// Fitted mass > 0.1 with R^2 >= 0.9 and S(zeta) max/min <= 2.
    Decay,
    /// Fitted alpha >= 0.8.
    Divergence,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GreenParams {
    pub energy: f64,
    #[serde(default)]
    pub source: Option<Vec<usize>>,
    #[serde(default = "zeta_max")]
    pub zeta_max: f64,
    #[serde(default = "zeta_min")]
    pub zeta_min: f64,
    #[serde(default = "zeta_points")]
    pub zeta_points: usize,
    #[serde(default)]
    pub realization: u64,
    #[serde(default = "two")]
    pub min_dist: usize,
    #[serde(default = "two")]
    pub boundary_margin: usize,
    #[serde(default)]
    pub expect: Option<GreenExpectation>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WegnerConfig {
    pub energy: f64,
    pub eps: Vec<f64>,
    /// Free-direction truncations `k`, one per box.
    pub boxes: Vec<Vec<usize>>,
    pub realizations: u64,
    #[serde(default = "gamma_floor")]
    pub gamma_floor: f64,
}

/// Energy grid, either explicit or evenly spaced.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EnergyGrid {
    List(Vec<f64>),
    Range { lo: f64, hi: f64, points: usize },
}

impl EnergyGrid {
    pub fn values(&self) -> Vec<f64> {
        match self {
            EnergyGrid::List(v) => v.clone(),
            EnergyGrid::Range { lo, hi, points } => {
                trimwave_core::diagnostics::energy_grid(*lo, *hi, *points).unwrap_or_default()
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MobilityConfig {
    pub energies: EnergyGrid,
    #[serde(default = "zeta_max")]
    pub zeta_max: f64,
    #[serde(default = "zeta_min")]
    pub zeta_min: f64,
    #[serde(default = "zeta_points")]
    pub zeta_points: usize,
    #[serde(default)]
    pub source: Option<Vec<usize>>,
    #[serde(default = "two")]
    pub min_dist: usize,
    #[serde(default = "two")]
    pub boundary_margin: usize,
    #[serde(default = "one")]
    pub realizations: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UcpParams {
    pub realizations: u64,
    #[serde(default = "gamma_floor")]
    pub gamma_floor: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

/// One finding of `validate`, anchored to a line of the config when possible.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub line: Option<usize>,
    pub message: String,
}

impl Diagnostic {
    fn error(line: Option<usize>, message: impl Into<String>) -> Self {
        Diagnostic {
            severity: Severity::Error,
            line,
            message: message.into(),
        }
    }

    fn warning(line: Option<usize>, message: impl Into<String>) -> Self {
        Diagnostic {
            severity: Severity::Warning,
            line,
            message: message.into(),
        }
    }

    pub fn render(&self, path: &Path) -> String {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        match self.line {
            Some(l) => format!("{}:{l}: {sev}: {}", path.display(), self.message),
            None => format!("{}: {sev}: {}", path.display(), self.message),
        }
    }
}

pub fn has_errors(diags: &[Diagnostic]) -> bool {
    diags.iter().any(|d| d.severity == Severity::Error)
}

/// First line (1-based) mentioning `"key"`.
fn locate(text: &str, key: &str) -> Option<usize> {
    let needle = format!("\"{key}\"");
    text.lines()
        .position(|l| l.contains(&needle))
        .map(|i| i + 1)
}

impl ExperimentConfig {
    /// Unit-cell sites of `Gamma0`.
    pub fn gamma0(&self) -> Result<Vec<SiteCoord>, String> {
        match &self.trim {
            Trim::Named(n) if n == "single-layer" => {
                single_layer_gamma0(&self.geometry.periods, self.geometry.d1, None)
                    .map_err(|e| e.to_string())
            }
            Trim::Named(n) => Err(format!(
                "unknown trim \"{n}\"; expected \"single-layer\" or {{\"gamma0\": [...]}}"
            )),
            Trim::Sites { gamma0 } => Ok(gamma0.iter().cloned().map(SiteCoord).collect()),
        }
    }
}

/// Parses and validates; returns the config only when there are no errors.
pub fn load(text: &str) -> (Option<ExperimentConfig>, Vec<Diagnostic>) {
    let cfg: ExperimentConfig = match serde_json::from_str(text) {
        Ok(c) => c,
        Err(e) => {
            let line = (e.line() > 0).then_some(e.line());
            return (None, vec![Diagnostic::error(line, format!("schema: {e}"))]);
        }
    };
    let diags = validate(&cfg, text);
    if has_errors(&diags) {
        (None, diags)
    } else {
        (Some(cfg), diags)
    }
}

/// Schema and physics preconditions, checked without any eigensolve.
pub fn validate(cfg: &ExperimentConfig, text: &str) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    if cfg.schema != SCHEMA_VERSION {
        out.push(Diagnostic::error(
            locate(text, "schema"),
            format!(
                "schema version {} is not supported (expected {SCHEMA_VERSION})",
                cfg.schema
            ),
        ));
    }
    let g = &cfg.geometry;
    if let Err(e) = g.validate() {
        out.push(Diagnostic::error(locate(text, "geometry"), e.to_string()));
        return out;
    }
    if let Err(e) = cfg.distribution.validate() {
        out.push(Diagnostic::error(
            locate(text, "distribution"),
            e.to_string(),
        ));
    }
    let gamma0 = match cfg.gamma0() {
        Ok(g0) => g0,
        Err(e) => {
            out.push(Diagnostic::error(locate(text, "trim"), e));
            return out;
        }
    };
    let lattice = match build_periodic_box(g) {
        Ok(b) => b,
        Err(e) => {
            out.push(Diagnostic::error(locate(text, "geometry"), e.to_string()));
            return out;
        }
    };
    let mask = match build_trim_mask(&lattice, &gamma0) {
        Ok(m) => m,
        Err(e) => {
            out.push(Diagnostic::error(locate(text, "trim"), e.to_string()));
            return out;
        }
    };
    let sites = lattice.site_count();
    let dense_needed = !matches!(
        cfg.experiment,
        Experiment::ExtendedCheck(_) | Experiment::Wegner(_)
    );
    if dense_needed && sites > DEFAULT_DENSE_CAP {
        out.push(Diagnostic::error(
            locate(text, "geometry"),
            format!("box has {sites} sites; dense solvers are capped at {DEFAULT_DENSE_CAP}"),
        ));
    }
    let closed = if g.d1 == 1 && mask.is_single_layer() && matches!(cfg.trim, Trim::Named(_)) {
        sigma0_single_layer(g.periods[0], 1, g.d2).ok()
    } else {
        None
    };
    let check_source = |out: &mut Vec<Diagnostic>, src: &Option<Vec<usize>>| {
        if let Some(s) = src {
            if lattice.index(s).is_err() {
                out.push(Diagnostic::error(
                    locate(text, "source"),
                    format!("source {s:?} lies outside the box {:?}", lattice.sides()),
                ));
            }
        }
    };
    let check_zeta = |out: &mut Vec<Diagnostic>, zmax: f64, zmin: f64, points: usize| {
        if !(zmin > 0.0 && zmax > zmin) || points < 2 {
            out.push(Diagnostic::error(
                locate(text, "zeta_min").or(locate(text, "experiment")),
                format!("zeta grid needs zeta_max > zeta_min > 0 and >= 2 points (got {zmax}, {zmin}, {points})"),
            ));
        }
    };
    match &cfg.experiment {
        Experiment::Spectrum(p) => {
            if p.realizations == 0 {
                out.push(Diagnostic::error(
                    locate(text, "realizations"),
                    "realizations must be >= 1",
                ));
            }
        }
        Experiment::Endpoints(_) => {}
        Experiment::ExtendedCheck(p) => {
            if !mask.is_single_layer() {
                out.push(Diagnostic::error(
                    locate(text, "trim"),
                    "extended states need a single-layer trim set",
                ));
            }
            if g.width() % 2 == 1 && !p.allow_odd_width {
                out.push(Diagnostic::error(
                    locate(text, "m2"),
                    format!(
                        "parity: M2 - M1 = {} is odd; exact extended states with periodic confined bc need an even number of periods (set allow_odd_width to explore, results unverified)",
                        g.width()
                    ),
                ));
            }
            if p.realizations == 0 {
                out.push(Diagnostic::error(
                    locate(text, "realizations"),
                    "realizations must be >= 1",
                ));
            }
        }
        Experiment::Green(p) => {
            check_source(&mut out, &p.source);
            check_zeta(&mut out, p.zeta_max, p.zeta_min, p.zeta_points);
        }
        Experiment::Wegner(p) => {
            if p.eps.is_empty() || p.boxes.is_empty() || p.realizations == 0 {
                out.push(Diagnostic::error(
                    locate(text, "experiment"),
                    "wegner needs eps values, boxes and realizations >= 1",
                ));
            }
            for k in &p.boxes {
                let mut s = g.clone();
                s.k = k.clone();
                match s.validate() {
                    Err(e) => out.push(Diagnostic::error(
                        locate(text, "boxes"),
                        format!("box k = {k:?}: {e}"),
                    )),
                    Ok(()) => {
                        let n: usize = s.sides().iter().product();
                        if n > DEFAULT_DENSE_CAP {
                            out.push(Diagnostic::error(
                                locate(text, "boxes"),
                                format!("box k = {k:?} has {n} sites; dense solvers are capped at {DEFAULT_DENSE_CAP}"),
                            ));
                        }
                    }
                }
            }
            if let Some(set) = &closed {
                let gamma = set.distance_to(p.energy).unwrap_or(0.0);
                if gamma < p.gamma_floor {
                    out.push(Diagnostic::error(
                        locate(text, "energy"),
                        format!(
                            "precondition: E = {} is at distance {gamma} < gamma_floor = {} from Sigma_0 = {:?}",
                            p.energy,
                            p.gamma_floor,
                            set.intervals()
                        ),
                    ));
                } else if let Some(&e) = p.eps.iter().find(|&&e| !(e > 0.0) || e > gamma / 2.0) {
                    out.push(Diagnostic::error(
                        locate(text, "eps"),
                        format!(
                            "precondition: eps = {e} must lie in (0, gamma/2 = {}]",
                            gamma / 2.0
                        ),
                    ));
                }
            } else {
                out.push(Diagnostic::warning(
                    locate(text, "energy"),
                    "no closed form for Sigma_0 here; gamma and eps <= gamma/2 are checked at run time",
                ));
            }
        }
        Experiment::MobilityScan(p) => {
            let grid = p.energies.values();
            if grid.is_empty() {
                out.push(Diagnostic::error(
                    locate(text, "energies"),
                    "energy grid is empty or malformed",
                ));
            }
            if p.realizations == 0 {
                out.push(Diagnostic::error(
                    locate(text, "realizations"),
                    "realizations must be >= 1",
                ));
            }
            check_source(&mut out, &p.source);
            check_zeta(&mut out, p.zeta_max, p.zeta_min, p.zeta_points);
            // Cheap cover check from bounds valid for every admissible W.
            let two_d = 2.0 * g.d() as f64;
            let lo_bound = -two_d + cfg.distribution.a.min(0.0);
            let hi_bound = two_d + cfg.distribution.b.max(0.0);
            let (lo, hi) = grid
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &e| {
                    (l.min(e), h.max(e))
                });
            if !grid.is_empty() && (lo > lo_bound - 1.0 || hi < hi_bound + 1.0) {
                out.push(Diagnostic::warning(
                    locate(text, "energies"),
                    format!("energy grid [{lo}, {hi}] may not cover [E_min - 1, E_max + 1] (bounds {lo_bound}, {hi_bound})"),
                ));
            }
            if let Ok(region) = energy_region(&g.periods, g.d1, g.d2) {
                if !grid.iter().any(|&e| region.contains(e, 1e-12)) {
                    out.push(Diagnostic::warning(
                        locate(text, "energies"),
                        "no grid energy lies in the extended-state region",
                    ));
                }
            }
        }
        Experiment::Ucp(p) => {
            if p.realizations == 0 {
                out.push(Diagnostic::error(
                    locate(text, "realizations"),
                    "realizations must be >= 1",
                ));
            }
            if !(p.gamma_floor > 0.0) {
                out.push(Diagnostic::error(
                    locate(text, "gamma_floor"),
                    "gamma_floor must be > 0",
                ));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"{
  "schema": 1,
  "geometry": {"d1": 1, "d2": 1, "periods": [2, 2], "m1": 0, "m2": 2, "k": [8]},
  "trim": "single-layer",
  "distribution": {"kind": "uniform", "a": 0.0, "b": 10.0},
  "seed": 0,
  "experiment": {"kind": "spectrum"}
}"#;

    #[test]
    fn valid_config_has_no_diagnostics() {
        let (cfg, diags) = load(BASE);
        assert!(cfg.is_some());
        assert!(diags.is_empty(), "{diags:?}");
    }

    #[test]
    fn unknown_key_is_line_anchored() {
        let text = BASE.replace("\"seed\": 0,", "\"seed\": 0,\n  \"colour\": 3,");
        let (cfg, diags) = load(&text);
        assert!(cfg.is_none());
        assert_eq!(diags.len(), 1);
        assert!(
            diags[0].message.contains("unknown field `colour`"),
            "{diags:?}"
        );
        assert_eq!(diags[0].line, Some(7));
    }

    #[test]
    fn period_one_names_invariant() {
        let text = BASE.replace("[2, 2]", "[1, 2]");
        let (_, diags) = load(&text);
        assert!(diags[0].message.contains("p >= 2"), "{diags:?}");
        assert_eq!(diags[0].line, Some(3));
    }

    #[test]
    fn parity_and_wegner_preconditions() {
        let odd = BASE
            .replace("\"m2\": 2", "\"m2\": 3")
            .replace("{\"kind\": \"spectrum\"}", "{\"kind\": \"extended-check\"}");
        let (_, diags) = load(&odd);
        assert!(
            diags.iter().any(|d| d.message.starts_with("parity")),
            "{diags:?}"
        );

        let inside = BASE.replace(
            "{\"kind\": \"spectrum\"}",
            "{\"kind\": \"wegner\", \"energy\": 0.5, \"eps\": [0.01], \"boxes\": [[8]], \"realizations\": 2}",
        );
        let (_, diags) = load(&inside);
        assert!(
            diags.iter().any(|d| d.message.starts_with("precondition")),
            "{diags:?}"
        );

        let wide = inside.replace(
            "\"energy\": 0.5, \"eps\": [0.01]",
            "\"energy\": 6.0, \"eps\": [2.5]",
        );
        let (_, diags) = load(&wide);
        assert!(
            diags.iter().any(|d| d.message.contains("gamma/2")),
            "{diags:?}"
        );
    }

    #[test]
    fn unknown_experiment_field_rejected() {
        let text = BASE.replace(
            "{\"kind\": \"spectrum\"}",
            "{\"kind\": \"spectrum\", \"bogus\": 1}",
        );
        let (cfg, diags) = load(&text);
        assert!(cfg.is_none());
        assert!(diags[0].message.contains("bogus"), "{diags:?}");
    }
}
