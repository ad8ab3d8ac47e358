//! Run configuration: a flat TOML file with `[scenario]`, `[filter]`,
//! `[controller]` and `[sensors]` sections. Every key is optional; missing
//! keys take the bench defaults.

use std::path::{Path, PathBuf};

use lincf_core::controller::{ControllerGains, Inertia};
use lincf_core::filters::{isotropic_bias_gain, FilterDesign, FilterVariant, Integrator, DEFAULT_BIAS_GAIN};
use lincf_core::poly::GainVector;
use lincf_core::scenario::{
    bench_initial_attitude, bench_references, scenario_bias, ControlScenario, DesiredSpec, EstimationScenario,
    VectorFeedback,
};
use lincf_core::sim::{RigidBodyState, SensorModel, SinusoidalRate};
use lincf_core::so3::{EulerAngles, Quaternion, Vec3};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub scenario: ScenarioSection,
    pub filter: FilterSection,
    pub controller: ControllerSection,
    pub sensors: SensorsSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSection {
    /// Seconds.
    pub duration: f64,
    /// Filter step for estimation runs, seconds.
    pub dt: f64,
    /// "euler" or "rk4".
    pub integrator: String,
    pub seed: u64,
    /// Reference directions in the inertial frame (normalized on load).
    pub references: Vec<[f64; 3]>,
    /// Initial attitude as roll, pitch, yaw in degrees.
    pub initial_euler_deg: [f64; 3],
    /// "fixed" uses `initial_euler_deg`; "random" draws the sweep initial condition for `seed`.
    pub initial_condition: String,
    /// Amplitude of the sinusoidal body rate in estimation runs, rad/s.
    pub rate_amplitude: f64,
    /// Control loop rate, Hz.
    pub control_rate: f64,
    /// Plant integration step for control runs, seconds.
    pub plant_dt: f64,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        let e = bench_initial_attitude();
        Self {
            duration: 60.0,
            dt: 0.01,
            integrator: "euler".into(),
            seed: 0,
            references: bench_references().iter().map(|r| [r.x, r.y, r.z]).collect(),
            initial_euler_deg: [e.roll, e.pitch, e.yaw],
            initial_condition: "fixed".into(),
            rate_amplitude: 0.5,
            control_rate: 100.0,
            plant_dt: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterSection {
    /// "direct", "passive" or "both".
    pub variant: String,
    pub order: usize,
    /// Pole location of the binomial gains used when `gains` is empty.
    pub alpha: f64,
    /// Explicit gain vectors, one per reference direction.
    pub gains: Vec<Vec<f64>>,
    /// Gain file written by `design-gains`; overrides `order`, `alpha` and `gains`.
    pub gains_file: Option<PathBuf>,
    /// Diagonal entries of the bias gain (scalar applies to all axes).
    pub bias_gain: f64,
}

impl Default for FilterSection {
    fn default() -> Self {
        Self {
            variant: "both".into(),
            order: 1,
            alpha: 1.0,
            gains: Vec::new(),
            gains_file: None,
            bias_gain: DEFAULT_BIAS_GAIN,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerSection {
    pub rho: Vec<f64>,
    pub k: f64,
    pub alpha: Vec<f64>,
    pub delta: Vec<f64>,
    /// "filtered" or "raw".
    pub feedback: String,
    /// Principal inertia, kg·m².
    pub inertia: [f64; 3],
}

impl Default for ControllerSection {
    fn default() -> Self {
        let g = ControllerGains::bench();
        let j = Inertia::quadrotor();
        Self {
            rho: g.rho,
            k: g.k,
            alpha: g.alpha,
            delta: g.delta,
            feedback: "filtered".into(),
            inertia: [j.matrix()[(0, 0)], j.matrix()[(1, 1)], j.matrix()[(2, 2)]],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorsSection {
    /// Constant gyro bias, rad/s. Defaults to the estimation scenario bias
    /// for `estimate` and to zero for `control` and `sweep`.
    pub bias: Option<[f64; 3]>,
    /// Linear bias drift, rad/s²; absent means constant bias.
    pub bias_drift: Option<[f64; 3]>,
    pub sigma_gyro: f64,
    /// Noise level per direction sensor, same order as the references.
    pub sigma_vectors: Vec<f64>,
    /// Update rate per direction sensor, Hz; absent means every sample.
    pub vector_rates: Option<Vec<f64>>,
}

impl Default for SensorsSection {
    fn default() -> Self {
        Self {
            bias: None,
            bias_drift: None,
            sigma_gyro: 0.0,
            sigma_vectors: vec![0.0, 0.0],
            vector_rates: None,
        }
    }
}

/// Contents of a gain file written by `design-gains`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainFile {
    pub order: usize,
    /// Pole location when the gains are binomial.
    pub alpha: Option<f64>,
    pub variant: String,
    /// One gain vector per reference direction.
    pub gammas: Vec<Vec<f64>>,
    pub hurwitz: bool,
    pub passive_admissible: bool,
    /// Weight `Q` of the Lyapunov equation; always the identity here.
    pub lyapunov_q: String,
    /// Lyapunov certificate of each direction's compensator, as rows.
    pub lyapunov_p: Vec<Vec<Vec<f64>>>,
    pub lyapunov_residual: Vec<f64>,
}

fn cfg_err(msg: impl Into<String>) -> HarnessError {
    HarnessError::Config(msg.into())
}

fn vec3(a: [f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            HarnessError::Config(m) => cfg_err(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| cfg_err(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is serializable")
    }

    pub fn references(&self) -> Result<Vec<Vec3>> {
        let refs: Vec<Vec3> = self.scenario.references.iter().map(|r| vec3(*r)).collect();
        if refs.len() < 2 {
            return Err(cfg_err("at least two reference vectors are required"));
        }
        if refs.iter().any(|r| !(r.norm() > 0.0) || !r.iter().all(|v| v.is_finite())) {
            return Err(cfg_err("reference vectors must be finite and non-zero"));
        }
        Ok(refs.iter().map(|r| r.normalize()).collect())
    }

    pub fn integrator(&self) -> Result<Integrator> {
        self.scenario.integrator.parse().map_err(cfg_err)
    }

    pub fn variants(&self) -> Result<Vec<FilterVariant>> {
        match self.filter.variant.to_ascii_lowercase().as_str() {
            "both" => Ok(vec![FilterVariant::Direct, FilterVariant::Passive]),
            v => Ok(vec![v.parse().map_err(cfg_err)?]),
        }
    }

    pub fn initial_attitude(&self) -> Quaternion {
        let [r, p, y] = self.scenario.initial_euler_deg;
        EulerAngles::new(r, p, y).to_quaternion()
    }

    pub fn sensor_model(&self, vectors: usize, default_bias: Vec3) -> Result<SensorModel> {
        let s = &self.sensors;
        let sigma_vectors = if s.sigma_vectors.is_empty() {
            vec![0.0; vectors]
        } else {
            s.sigma_vectors.clone()
        };
        if sigma_vectors.len() != vectors {
            return Err(cfg_err(format!(
                "sensors.sigma_vectors has {} entries for {vectors} references",
                sigma_vectors.len()
            )));
        }
        let vector_rates = s.vector_rates.clone().unwrap_or_else(|| vec![f64::INFINITY; vectors]);
        if vector_rates.len() != vectors {
            return Err(cfg_err(format!(
                "sensors.vector_rates has {} entries for {vectors} references",
                vector_rates.len()
            )));
        }
        let model = SensorModel {
            bias: s.bias.map_or(default_bias, vec3),
            bias_drift: s.bias_drift.map(vec3),
            sigma_gyro: s.sigma_gyro,
            sigma_vectors,
            vector_rates,
            seed: self.scenario.seed,
        };
        model.validate()?;
        Ok(model)
    }

    fn gain_vectors(&self, vectors: usize) -> Result<Vec<GainVector>> {
        if let Some(path) = &self.filter.gains_file {
            let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
            let file: GainFile =
                toml::from_str(&text).map_err(|e| cfg_err(format!("{}: {e}", path.display())))?;
            if file.gammas.len() != vectors {
                return Err(cfg_err(format!(
                    "{}: {} gain vectors for {vectors} references",
                    path.display(),
                    file.gammas.len()
                )));
            }
            return file
                .gammas
                .into_iter()
                .map(|g| GainVector::new(g).map_err(Into::into))
                .collect();
        }
        if self.filter.gains.is_empty() {
            let g = GainVector::binomial(self.filter.order, self.filter.alpha)?;
            return Ok(vec![g; vectors]);
        }
        if self.filter.gains.len() != vectors {
            return Err(cfg_err(format!(
                "filter.gains has {} vectors for {vectors} references",
                self.filter.gains.len()
            )));
        }
        self.filter
            .gains
            .iter()
            .map(|g| GainVector::new(g.clone()).map_err(Into::into))
            .collect()
    }

    pub fn filter_design(&self, variant: FilterVariant) -> Result<FilterDesign> {
        let refs = self.references()?;
        let gains = self.gain_vectors(refs.len())?;
        Ok(FilterDesign::new(
            variant,
            gains,
            &isotropic_bias_gain(self.filter.bias_gain),
            &refs,
        )?)
    }

    pub fn estimation_scenario(&self) -> Result<EstimationScenario> {
        let refs = self.references()?;
        let j = self.controller.inertia;
        Ok(EstimationScenario {
            duration: self.scenario.duration,
            dt: self.scenario.dt,
            integrator: self.integrator()?,
            initial_attitude: self.initial_attitude(),
            rate_profile: SinusoidalRate {
                amplitude: self.scenario.rate_amplitude,
                ..SinusoidalRate::default()
            },
            inertia: Inertia::diagonal(j[0], j[1], j[2])?,
            sensors: self.sensor_model(refs.len(), scenario_bias())?,
            references: refs,
        })
    }

    pub fn controller_gains(&self) -> Result<ControllerGains> {
        let c = &self.controller;
        Ok(ControllerGains::new(c.rho.clone(), c.k, c.alpha.clone(), c.delta.clone())?)
    }

    pub fn feedback(&self) -> Result<VectorFeedback> {
        match self.controller.feedback.to_ascii_lowercase().as_str() {
            "filtered" => Ok(VectorFeedback::Filtered),
            "raw" => Ok(VectorFeedback::Raw),
            other => Err(cfg_err(format!("unknown feedback '{other}' (expected filtered or raw)"))),
        }
    }

    /// Stabilization scenario to the level attitude; the initial condition is
    /// either the configured attitude at rest or the sweep draw for `seed`.
    pub fn control_scenario(&self) -> Result<ControlScenario> {
        let refs = self.references()?;
        let j = self.controller.inertia;
        let sensors = self.sensor_model(refs.len(), Vec3::zeros())?;
        let mut sc = ControlScenario {
            duration: self.scenario.duration,
            plant_dt: self.scenario.plant_dt,
            control_rate: self.scenario.control_rate,
            inertia: Inertia::diagonal(j[0], j[1], j[2])?,
            gains: self.controller_gains()?,
            references: refs,
            initial: RigidBodyState::at_rest(self.initial_attitude()),
            initial_estimates: None,
            desired: DesiredSpec::Fixed(Quaternion::IDENTITY),
            sensors,
            feedback: self.feedback()?,
        };
        match self.scenario.initial_condition.to_ascii_lowercase().as_str() {
            "fixed" => {}
            "random" => crate::sweep::apply_random_initial_condition(&mut sc, self.scenario.seed, 0),
            other => {
                return Err(cfg_err(format!(
                    "unknown initial_condition '{other}' (expected fixed or random)"
                )))
            }
        }
        Ok(sc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = Config::parse("").unwrap();
        assert_eq!(c, Config::default());
        assert_eq!(c.variants().unwrap().len(), 2);
        assert_eq!(c.integrator().unwrap(), Integrator::Euler);
    }

    #[test]
    fn sections_override() {
        let c = Config::parse(
            "[scenario]\nduration = 5.0\nintegrator = \"rk4\"\n[filter]\nvariant = \"passive\"\norder = 2\n",
        )
        .unwrap();
        assert_eq!(c.scenario.duration, 5.0);
        assert_eq!(c.variants().unwrap(), vec![FilterVariant::Passive]);
        let d = c.filter_design(FilterVariant::Passive).unwrap();
        assert_eq!(d.order(), 2);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(Config::parse("[filter]\nordre = 2\n"), Err(HarnessError::Config(_))));
        assert!(matches!(Config::parse("[scenario]\nduration = \"x\"\n"), Err(HarnessError::Config(_))));
    }

    #[test]
    fn bad_values_are_config_errors() {
        let c = Config::parse("[filter]\nvariant = \"kalman\"\n").unwrap();
        assert!(c.variants().is_err());
        let c = Config::parse("[filter]\ngains = [[0.0, 1.0], [2.0, 1.0]]\norder = 2\n").unwrap();
        assert_eq!(c.filter_design(FilterVariant::Direct).unwrap_err().exit_code(), 1);
        let c = Config::parse("[scenario]\nreferences = [[0.0, 0.0, 1.0], [0.0, 0.0, -1.0]]\n").unwrap();
        assert!(c.filter_design(FilterVariant::Direct).is_err());
        let c = Config::parse("[controller]\nk = -1.0\n").unwrap();
        assert!(c.control_scenario().is_err());
    }

    #[test]
    fn round_trip_serialization() {
        let c = Config::default();
        assert_eq!(Config::parse(&c.to_toml()).unwrap(), c);
    }
}
