//! Scenario files: a TOML document describing the field, the controller, the
//! optional level band and tuning preset, and which monitors to run.
//!
//! ```toml
//! id = "escort"
//! t_max = 60.0
//! r_init = [6.0, 0.0]
//!
//! [field]
//! kind = "radial"
//! profile = "distance()"
//! path = "circle(radius=2, omega=0.15)"
//!
//! [controller]
//! v_bar = 1.0
//!
//! [tuning]
//! preset = "escort"
//! r_star = 1.0
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::catalog::CatalogError;
use crate::controller::{ControllerError, ControllerParams};
use crate::field::{make_random_smooth_field, FieldError, FieldSpec, GaussianBump, RadialProfile, ScalarField};
use crate::geometry::time_samples;
use crate::par::Execution;
use crate::tuning::{
    bounds_tuning, escort_tuning, margins, radial_tuning, EscortTuningInput, GridAnchor, LevelFunction,
    RadialTuningInput, RegionSpec, SampleGrid, TunedParams, TuningError, TuningMargins,
};
use crate::Vec2;

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("scenario parse error: {0}")]
    Parse(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("invalid scenario: {0}")]
    Controller(#[from] ControllerError),
    #[error("invalid scenario: {0}")]
    Field(#[from] FieldError),
    #[error("invalid scenario: {0}")]
    Catalog(#[from] CatalogError),
    #[error("tuning failed: {0}")]
    Tuning(#[from] TuningError),
}

fn default_dt() -> f64 {
    crate::sim::DEFAULT_DT
}

fn default_true() -> bool {
    true
}

fn default_c() -> f64 {
    1.0
}

fn default_profile() -> String {
    "distance()".into()
}

fn default_path() -> String {
    "static(x=0, y=0)".into()
}

fn default_n_time() -> usize {
    3
}

/// Raw file contents. Serializing this and parsing again gives an equal value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub id: String,
    pub t_max: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub r_init: [f64; 2],
    pub field: FieldConfig,
    pub controller: ControllerConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<RegionConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tuning: Option<TuningConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridConfig>,
    #[serde(default)]
    pub monitors: MonitorFlags,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldConfig {
    Linear {
        n: f64,
        #[serde(default)]
        phi: f64,
        #[serde(default)]
        d0: f64,
    },
    Radial {
        #[serde(default = "default_c")]
        c: f64,
        #[serde(default = "default_profile")]
        profile: String,
        #[serde(default = "default_path")]
        path: String,
    },
    Gaussian {
        bumps: Vec<BumpConfig>,
    },
    /// Seeded sum of moving bumps.
    Random {
        seed: u64,
        complexity: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BumpConfig {
    pub amplitude: f64,
    pub width: f64,
    #[serde(default = "default_path")]
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerConfig {
    pub v_bar: f64,
    /// Explicit values override the tuning preset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    /// Defaults to the initial measurement, so the robot starts heading along +x.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_star: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionConfig {
    pub gamma_minus: String,
    pub gamma_star: String,
    pub gamma_plus: String,
    pub delta_gamma: f64,
    pub v_star_radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case", deny_unknown_fields)]
pub enum TuningConfig {
    /// Closed-form gains for escorting a moving target on the negated distance.
    Escort {
        r_star: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        v0: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        a0: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        r_minus: Option<f64>,
    },
    /// Closed-form gains for a radial field with a known profile.
    Radial {
        r_star: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        r_minus: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        r_plus: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        v0: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        a0: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        c_minus: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        c_plus: Option<f64>,
    },
    /// Gains from bounds sampled on `[grid]` inside `[region]`.
    Bounds {},
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub half_width: f64,
    pub n_space: usize,
    #[serde(default = "default_n_time")]
    pub n_time: usize,
    /// Defaults to the scenario horizon.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_horizon: Option<f64>,
    /// Fixed lattice center; the maximizer is followed when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonitorFlags {
    #[serde(default = "default_true")]
    pub maintenance: bool,
    #[serde(default = "default_true")]
    pub deviation: bool,
    #[serde(default = "default_true")]
    pub reach_and_hold: bool,
}

impl Default for MonitorFlags {
    fn default() -> Self {
        Self { maintenance: true, deviation: true, reach_and_hold: true }
    }
}

impl MonitorFlags {
    pub fn any_region_monitor(&self) -> bool {
        self.maintenance || self.deviation || self.reach_and_hold
    }
}

/// Command-line overrides applied before validation.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Overrides {
    pub dt: Option<f64>,
    pub t_max: Option<f64>,
    pub seed: Option<u64>,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario config is always representable")
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(dt) = o.dt {
            self.dt = dt;
        }
        if let Some(t) = o.t_max {
            self.t_max = t;
        }
        if let Some(s) = o.seed {
            match &mut self.field {
                FieldConfig::Random { seed, .. } => *seed = s,
                _ => log::warn!("scenario {}: --seed ignored, the field is not random", self.id),
            }
        }
    }
}

/// A validated scenario ready to simulate.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub id: String,
    pub config: ScenarioConfig,
    pub field: FieldSpec,
    pub controller: ControllerParams,
    pub region: Option<RegionSpec>,
    pub r_init: Vec2,
    pub t_max: f64,
    pub dt: f64,
    pub monitors: MonitorFlags,
    /// Certificate of the preset, when its gains are the ones in use.
    pub tuned: Option<TunedParams>,
    pub margins: Option<TuningMargins>,
    pub grid: Option<SampleGrid>,
}

impl PartialEq for Scenario {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.controller == other.controller && self.region == other.region
    }
}

/// Reads and validates a scenario file.
pub fn parse_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    load_scenario(path, &Overrides::default(), Execution::default())
}

pub fn load_scenario(path: &Path, overrides: &Overrides, exec: Execution) -> Result<Scenario, ScenarioError> {
    let text = fs::read_to_string(path).map_err(|source| ScenarioError::Io { path: path.display().to_string(), source })?;
    let mut config = ScenarioConfig::from_toml(&text)?;
    config.apply(overrides);
    Scenario::from_config(config, exec)
}

fn build_field(cfg: &FieldConfig) -> Result<FieldSpec, ScenarioError> {
    Ok(match cfg {
        FieldConfig::Linear { n, phi, d0 } => FieldSpec::linear(*n, *phi, *d0)?,
        FieldConfig::Radial { c, profile, path } => FieldSpec::radial(*c, profile.parse()?, path.parse()?)?,
        FieldConfig::Gaussian { bumps } => FieldSpec::gaussian(
            bumps
                .iter()
                .map(|b| Ok(GaussianBump { amplitude: b.amplitude, width: b.width, path: b.path.parse()? }))
                .collect::<Result<Vec<_>, CatalogError>>()?,
        )?,
        FieldConfig::Random { seed, complexity } => {
            if *complexity == 0 {
                return Err(ScenarioError::Invalid("random field needs complexity >= 1".into()));
            }
            make_random_smooth_field(*seed, *complexity)
        }
    })
}

fn build_region(cfg: &RegionConfig) -> Result<RegionSpec, ScenarioError> {
    let level = |s: &str| s.parse::<LevelFunction>();
    Ok(RegionSpec::new(
        level(&cfg.gamma_minus)?,
        level(&cfg.gamma_star)?,
        level(&cfg.gamma_plus)?,
        cfg.delta_gamma,
        cfg.v_star_radius,
    )?)
}

fn build_grid(cfg: &GridConfig, t_max: f64) -> SampleGrid {
    SampleGrid {
        half_width: cfg.half_width,
        n_space: cfg.n_space,
        n_time: cfg.n_time,
        t_horizon: cfg.t_horizon.unwrap_or(t_max),
        anchor: cfg.center.map_or(GridAnchor::Maximizer, |c| GridAnchor::Fixed(Vec2::new(c[0], c[1]))),
    }
}

struct Tuned {
    params: TunedParams,
    region: RegionSpec,
    gamma_bar: f64,
}

fn radial_parts(field: &FieldSpec) -> Option<(f64, RadialProfile, crate::field::TargetPath)> {
    match field {
        FieldSpec::Radial { c, profile, path } => Some((*c, *profile, *path)),
        _ => None,
    }
}

fn tune(
    cfg: &TuningConfig,
    config: &ScenarioConfig,
    field: &FieldSpec,
    r_init: Vec2,
    exec: Execution,
) -> Result<Tuned, ScenarioError> {
    let v_bar = config.controller.v_bar;
    match cfg {
        TuningConfig::Escort { r_star, v0, a0, r_minus } => {
            let (_, _, path) = radial_parts(field)
                .filter(|(c, p, _)| *c == 1.0 && *p == RadialProfile::Distance)
                .ok_or_else(|| ScenarioError::Invalid("escort preset needs a radial field with c = 1 and profile distance()".into()))?;
            let r_in = (r_init - path.position(0.0)).norm();
            let input = EscortTuningInput {
                r_star: *r_star,
                v_bar,
                v0: v0.unwrap_or_else(|| path.speed_bound()),
                a0: a0.unwrap_or_else(|| path.acceleration_bound()),
            };
            let r_minus = r_minus.unwrap_or((2.0 * r_in).max(r_in + r_star));
            let region = input.region(r_in, r_minus)?;
            Ok(Tuned { params: escort_tuning(&input)?, region, gamma_bar: 0.0 })
        }
        TuningConfig::Radial { r_star, r_minus, r_plus, v0, a0, c_minus, c_plus } => {
            let (c, profile, path) =
                radial_parts(field).ok_or_else(|| ScenarioError::Invalid("radial preset needs a radial field".into()))?;
            let r_in = (r_init - path.position(0.0)).norm();
            let input = RadialTuningInput {
                r_in,
                r_star: *r_star,
                r_minus: r_minus.unwrap_or((2.0 * r_in).max(r_in + r_star)),
                r_plus: r_plus.unwrap_or(0.5 * r_star),
                v_bar,
                v0: v0.unwrap_or_else(|| path.speed_bound()),
                a0: a0.unwrap_or_else(|| path.acceleration_bound()),
                c_minus: c_minus.unwrap_or(c),
                c_plus: c_plus.unwrap_or(c),
                profile,
            };
            if !(input.c_minus <= c && c <= input.c_plus) {
                return Err(ScenarioError::Invalid(format!(
                    "field scale c = {c} lies outside the declared range [{}, {}]",
                    input.c_minus, input.c_plus
                )));
            }
            let region = input.region(c)?;
            Ok(Tuned { params: radial_tuning(&input)?, region, gamma_bar: 0.0 })
        }
        TuningConfig::Bounds {} => {
            let region = build_region(
                config.region.as_ref().ok_or_else(|| ScenarioError::Invalid("bounds preset needs a [region] table".into()))?,
            )?;
            let grid = build_grid(
                config.grid.as_ref().ok_or_else(|| ScenarioError::Invalid("bounds preset needs a [grid] table".into()))?,
                config.t_max,
            );
            let (params, bounds) = bounds_tuning(field, &region, &grid, v_bar, exec)?;
            Ok(Tuned { params, region, gamma_bar: bounds.gamma_bar })
        }
    }
}

impl Scenario {
    pub fn from_config(config: ScenarioConfig, exec: Execution) -> Result<Self, ScenarioError> {
        if !(config.dt > 0.0 && config.dt.is_finite()) {
            return Err(ScenarioError::Invalid(format!("dt must be > 0, got {}", config.dt)));
        }
        if !(config.t_max > 0.0 && config.t_max.is_finite()) {
            return Err(ScenarioError::Invalid(format!("t_max must be > 0, got {}", config.t_max)));
        }
        if config.id.is_empty() || config.id.contains(['/', '\\']) {
            return Err(ScenarioError::Invalid(format!("id `{}` must be a non-empty file stem", config.id)));
        }
        let field = build_field(&config.field)?;
        let r_init = Vec2::new(config.r_init[0], config.r_init[1]);
        let d_init = field.value(0.0, r_init)?;

        let tuned = config.tuning.as_ref().map(|t| tune(t, &config, &field, r_init, exec)).transpose()?;
        // An explicit [region] always wins over the preset's derived band.
        let region = match (&config.region, &tuned) {
            (Some(r), _) => Some(build_region(r)?),
            (None, Some(t)) => Some(t.region),
            (None, None) => None,
        };

        let c = &config.controller;
        let nu = c.nu.or(tuned.as_ref().map(|t| t.params.nu));
        let mu = c.mu.or(tuned.as_ref().map(|t| t.params.mu));
        let (Some(nu), Some(mu)) = (nu, mu) else {
            return Err(ScenarioError::Invalid("controller needs nu and mu, or a [tuning] preset".into()));
        };
        let controller = ControllerParams::new(c.v_bar, nu, mu, c.d_star.unwrap_or(d_init))?;
        let certified = tuned.as_ref().filter(|t| t.params.nu == nu && t.params.mu == mu);

        let monitors = config.monitors;
        let mut scenario_margins = None;
        if let Some(region) = &region {
            region.check_level_spacing(&time_samples(0.0, config.t_max, 201))?;
            if monitors.any_region_monitor() && !region.start_condition_holds(d_init) {
                return Err(ScenarioError::Invalid(format!(
                    "initial-level condition D(0, r_init) >= gamma_minus(0) + delta_gamma/2 fails: {d_init} < {}",
                    region.gamma_minus.value(0.0) + 0.5 * region.delta_gamma
                )));
            }
            let gamma_bar = match certified {
                Some(t) => t.gamma_bar,
                None => region.level_rate_sup(config.t_max, 201),
            };
            scenario_margins = margins(nu, gamma_bar).ok();
        }

        Ok(Scenario {
            id: config.id.clone(),
            field,
            controller,
            region,
            r_init,
            t_max: config.t_max,
            dt: config.dt,
            monitors,
            tuned: certified.map(|t| t.params.clone()),
            margins: scenario_margins,
            grid: config.grid.as_ref().map(|g| build_grid(g, config.t_max)),
            config,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const MINIMAL: &str = r#"
id = "minimal"
t_max = 5.0
r_init = [0.0, 0.0]

[field]
kind = "linear"
n = 1.0

[controller]
v_bar = 1.0
nu = 0.5
mu = 1.0
"#;

    const ESCORT: &str = r#"
id = "escort"
t_max = 40.0
r_init = [6.0, 0.0]

[field]
kind = "radial"
path = "circle(radius=2, omega=0.15)"

[controller]
v_bar = 1.0

[tuning]
preset = "escort"
r_star = 1.0
"#;

    #[test]
    fn minimal_file_gets_defaults() {
        let s = Scenario::from_config(ScenarioConfig::from_toml(MINIMAL).unwrap(), Execution::Sequential).unwrap();
        assert_eq!(s.dt, 1e-3);
        assert_eq!(s.controller.d_star(), 0.0);
        assert!(s.region.is_none() && s.tuned.is_none());
        assert!(s.field.as_linear().is_some());
    }

    #[test]
    fn zero_nu_is_rejected_by_the_controller() {
        let text = MINIMAL.replace("nu = 0.5", "nu = 0.0");
        let err = Scenario::from_config(ScenarioConfig::from_toml(&text).unwrap(), Execution::Sequential).unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, ScenarioError::Controller(_)));
        assert!(msg.contains("nu") && msg.contains("> 0"), "{msg}");
    }

    #[test]
    fn unknown_keys_are_rejected_with_location() {
        let text = MINIMAL.replace("n = 1.0", "n = 1.0\nslope = 2.0");
        let msg = ScenarioConfig::from_toml(&text).unwrap_err().to_string();
        assert!(msg.contains("slope") && msg.contains("line"), "{msg}");
    }

    #[test]
    fn escort_preset_resolves_band_and_gains() {
        let s = Scenario::from_config(ScenarioConfig::from_toml(ESCORT).unwrap(), Execution::Sequential).unwrap();
        let tuned = s.tuned.as_ref().unwrap();
        assert!(tuned.certificate.passed());
        assert_eq!(s.controller.mu(), tuned.mu);
        let region = s.region.unwrap();
        assert_eq!(region.v_star_radius, 1.0);
        // Initial distance 4, so the outer radius defaults to 8.
        assert_eq!(region.gamma_minus.value(0.0), -8.0);
        assert_eq!(s.margins.unwrap().gamma_bar, 0.0);
    }

    #[test]
    fn explicit_gains_drop_the_certificate() {
        let text = ESCORT.replace("v_bar = 1.0", "v_bar = 1.0\nmu = 3.0");
        let s = Scenario::from_config(ScenarioConfig::from_toml(&text).unwrap(), Execution::Sequential).unwrap();
        assert!(s.tuned.is_none());
        assert_eq!(s.controller.mu(), 3.0);
    }

    #[test]
    fn start_condition_names_the_requirement() {
        let text = format!(
            "{MINIMAL}\n[region]\ngamma_minus = \"constant(value=-0.2)\"\ngamma_star = \"constant(value=1)\"\ngamma_plus = \"constant(value=3)\"\ndelta_gamma = 1.0\nv_star_radius = 1.0\n"
        );
        let msg = Scenario::from_config(ScenarioConfig::from_toml(&text).unwrap(), Execution::Sequential)
            .unwrap_err()
            .to_string();
        assert!(msg.contains("initial-level condition"), "{msg}");
    }

    #[test]
    fn overrides_apply() {
        let mut c = ScenarioConfig::from_toml(MINIMAL).unwrap();
        c.apply(&Overrides { dt: Some(5e-4), t_max: Some(2.0), seed: Some(3) });
        assert_eq!((c.dt, c.t_max), (5e-4, 2.0));
        let mut r = c.clone();
        r.field = FieldConfig::Random { seed: 1, complexity: 2 };
        r.apply(&Overrides { seed: Some(9), ..Default::default() });
        assert_eq!(r.field, FieldConfig::Random { seed: 9, complexity: 2 });
    }

    fn finite() -> impl Strategy<Value = f64> {
        -1e3..1e3f64
    }

    fn field_config() -> impl Strategy<Value = FieldConfig> {
        prop_oneof![
            (0.1..5.0f64, finite(), finite()).prop_map(|(n, phi, d0)| FieldConfig::Linear { n, phi, d0 }),
            (0.1..5.0f64, 0.1..4.0f64, 0.0..3.0f64).prop_map(|(c, s, r)| FieldConfig::Radial {
                c,
                profile: format!("exponential(scale={s:?})"),
                path: format!("circle(radius={r:?}, omega=0.1)"),
            }),
            (0u64..1000, 1usize..5).prop_map(|(seed, complexity)| FieldConfig::Random { seed, complexity }),
            proptest::collection::vec((0.1..2.0f64, 0.5..3.0f64), 1..4).prop_map(|v| FieldConfig::Gaussian {
                bumps: v.into_iter().map(|(amplitude, width)| BumpConfig { amplitude, width, path: default_path() }).collect(),
            }),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn serialized_config_parses_back_equal(
            field in field_config(),
            t_max in 0.1..100.0f64,
            dt in 1e-4..1e-2f64,
            x in finite(),
            y in finite(),
            nu in 0.01..3.0f64,
            mu in 0.01..50.0f64,
            d_star in proptest::option::of(finite()),
            flags in any::<(bool, bool, bool)>(),
        ) {
            let config = ScenarioConfig {
                id: "prop".into(),
                t_max,
                dt,
                r_init: [x, y],
                field,
                controller: ControllerConfig { v_bar: 1.0, nu: Some(nu), mu: Some(mu), d_star },
                region: None,
                tuning: None,
                grid: None,
                monitors: MonitorFlags { maintenance: flags.0, deviation: flags.1, reach_and_hold: flags.2 },
            };
            let back = ScenarioConfig::from_toml(&config.to_toml()).unwrap();
            prop_assert_eq!(&back, &config);
            if let Ok(s) = Scenario::from_config(config.clone(), Execution::Sequential) {
                let again = Scenario::from_config(ScenarioConfig::from_toml(&s.config.to_toml()).unwrap(), Execution::Sequential).unwrap();
                prop_assert_eq!(again, s);
            }
        }
    }
}
