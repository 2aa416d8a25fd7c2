//! Scenario files: TOML descriptions of a plant, controller, delay profile,
//! reference and integration settings.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::plants::{
    Disturbance, LinearPlant, PayloadSchedule, Plant, ReducedWmr, TwoLink, TwoLinkParams, WmrParams,
};
use crate::sim::{DelayProfile, Trajectory, TrajectorySpec};
use crate::stability::{BoundParams, GainSet};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("{key}: {msg}")]
    Invalid { key: String, msg: String },
    #[error("override {key}: {msg}")]
    Override { key: String, msg: String },
}

fn invalid(key: &str, msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid {
        key: key.to_string(),
        msg: msg.into(),
    }
}

/// A matrix given as `k` (meaning `k·I`), a diagonal list, or a list of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Scalar(f64),
    Diagonal(Vec<f64>),
    Full(Vec<Vec<f64>>),
}

impl MatrixSpec {
    pub fn to_matrix(&self, n: usize, key: &str) -> Result<DMatrix<f64>, ScenarioError> {
        let m = match self {
            MatrixSpec::Scalar(k) => DMatrix::identity(n, n) * *k,
            MatrixSpec::Diagonal(d) => {
                if d.len() != n {
                    return Err(invalid(
                        key,
                        format!("diagonal needs {n} entries, got {}", d.len()),
                    ));
                }
                DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(d))
            }
            MatrixSpec::Full(rows) => {
                if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                    return Err(invalid(key, format!("matrix must be {n}x{n}")));
                }
                DMatrix::from_fn(n, n, |i, j| rows[i][j])
            }
        };
        if m.iter().any(|x| !x.is_finite()) {
            return Err(invalid(key, "entries must be finite"));
        }
        Ok(m)
    }
}

fn one() -> MatrixSpec {
    MatrixSpec::Scalar(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PlantSpec {
    /// Unit double integrator per joint.
    Free { dim: usize },
    /// Unit-mass oscillator per joint.
    Oscillator { dim: usize, omega: f64 },
    TwoLink {
        #[serde(default)]
        params: Option<TwoLinkParams>,
        /// Nominal masses and inertias are the true ones times this factor.
        #[serde(default = "unit")]
        nominal_scale: f64,
        #[serde(default)]
        friction: f64,
        #[serde(default)]
        disturbance: Disturbance,
    },
    Wmr {
        #[serde(default)]
        params: Option<WmrInput>,
        #[serde(default)]
        friction: f64,
        #[serde(default)]
        disturbance: Disturbance,
    },
}

fn unit() -> f64 {
    1.0
}

/// Robot geometry in a scenario file; `k = m·d` is derived.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WmrInput {
    pub m: f64,
    pub i_bar: f64,
    pub d: f64,
    pub r_bar: f64,
    pub b: f64,
    pub i_w: f64,
}

impl From<WmrInput> for WmrParams {
    fn from(w: WmrInput) -> Self {
        WmrParams::new(w.m, w.i_bar, w.d, w.r_bar, w.b, w.i_w)
    }
}

impl PlantSpec {
    pub fn dim(&self) -> usize {
        match self {
            PlantSpec::Free { dim } | PlantSpec::Oscillator { dim, .. } => *dim,
            PlantSpec::TwoLink { .. } | PlantSpec::Wmr { .. } => 2,
        }
    }

    pub fn wmr_params(&self) -> Option<WmrParams> {
        match self {
            PlantSpec::Wmr { params, .. } => Some(params.map(WmrParams::from).unwrap_or_default()),
            _ => None,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            PlantSpec::Free { .. } => "free",
            PlantSpec::Oscillator { .. } => "oscillator",
            PlantSpec::TwoLink { .. } => "two-link",
            PlantSpec::Wmr { .. } => "wmr",
        }
    }
}

fn default_alpha() -> f64 {
    2.0
}
fn default_epsilon() -> f64 {
    0.1
}
fn default_gamma() -> f64 {
    0.001
}
fn default_true() -> bool {
    true
}
fn default_kappa() -> f64 {
    2.0
}
fn default_kb() -> f64 {
    5.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ControllerSpec {
    /// Zero input.
    None,
    Arolc {
        #[serde(default = "default_alpha")]
        alpha: f64,
        #[serde(default = "default_epsilon")]
        epsilon: f64,
        #[serde(default = "default_gamma")]
        gamma: f64,
        /// Initial adaptive gain; `gamma` when absent.
        #[serde(default)]
        c_hat_init: Option<f64>,
        #[serde(default = "default_true")]
        switching: bool,
    },
    /// Integral term over the true current delay.
    Pcon {
        #[serde(default = "default_kappa")]
        kappa: f64,
        #[serde(default = "one")]
        vartheta: MatrixSpec,
        #[serde(default = "default_kb")]
        k_b: f64,
    },
    /// Integral term over a fixed assumed delay.
    Pconf {
        #[serde(default = "default_kappa")]
        kappa: f64,
        #[serde(default = "one")]
        vartheta: MatrixSpec,
        #[serde(default = "default_kb")]
        k_b: f64,
        assumed_delay: f64,
    },
}

impl ControllerSpec {
    pub fn label(&self) -> &'static str {
        match self {
            ControllerSpec::None => "none",
            ControllerSpec::Arolc { .. } => "arolc",
            ControllerSpec::Pcon { .. } => "pcon",
            ControllerSpec::Pconf { .. } => "pconf",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainSpec {
    #[serde(default = "one")]
    pub k1: MatrixSpec,
    #[serde(default = "one")]
    pub k2: MatrixSpec,
    /// `2n x 2n` Lyapunov weight.
    #[serde(default = "one")]
    pub q: MatrixSpec,
    #[serde(default = "default_r")]
    pub r: f64,
    #[serde(default = "unit")]
    pub beta: f64,
}

fn default_r() -> f64 {
    1.1
}

impl Default for GainSpec {
    fn default() -> Self {
        GainSpec {
            k1: one(),
            k2: one(),
            q: one(),
            r: default_r(),
            beta: 1.0,
        }
    }
}

impl GainSpec {
    pub fn to_gains(&self, n: usize) -> Result<GainSet, ScenarioError> {
        let g = GainSet {
            k1: self.k1.to_matrix(n, "gains.k1")?,
            k2: self.k2.to_matrix(n, "gains.k2")?,
            q: self.q.to_matrix(2 * n, "gains.q")?,
            r: self.r,
            beta: self.beta,
        };
        g.validate().map_err(|e| invalid("gains", e.to_string()))?;
        Ok(g)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PayloadSpec {
    pub extra_mass: f64,
    pub period_on: f64,
    pub period_off: f64,
    /// Explicit body-frame placements `[dx, dy]`, cycled per on-window.
    #[serde(default)]
    pub offsets: Vec<[f64; 2]>,
    /// Number of seeded random placements used when `offsets` is empty.
    #[serde(default)]
    pub random_count: usize,
    #[serde(default)]
    pub random_radius: f64,
}

impl PayloadSpec {
    pub fn schedule(&self, seed: u64) -> PayloadSchedule {
        let offsets = if self.offsets.is_empty() && self.random_count > 0 {
            PayloadSchedule::random_offsets(seed, self.random_count, self.random_radius)
        } else {
            self.offsets.iter().map(|o| (o[0], o[1])).collect()
        };
        PayloadSchedule {
            extra_mass: self.extra_mass,
            period_on: self.period_on,
            period_off: self.period_off,
            offsets,
        }
    }
}

/// How often the controller is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControlMode {
    /// Every `control_dt`, held in between.
    #[default]
    Sampled,
    /// Every integration step; with zero delay also inside Runge-Kutta stages.
    Continuous,
}

fn default_dt() -> f64 {
    1e-4
}
fn default_control_dt() -> f64 {
    1e-2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSpec {
    pub duration: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_control_dt")]
    pub control_dt: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub control: ControlMode,
    /// Trace sampling period; defaults to the control period.
    #[serde(default)]
    pub record_dt: Option<f64>,
    /// Defaults to the reference position at `t = 0`.
    #[serde(default)]
    pub initial_q: Option<Vec<f64>>,
    /// Defaults to zero.
    #[serde(default)]
    pub initial_qdot: Option<Vec<f64>>,
}

/// Scalars for evaluating the ultimate bounds of a gain file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundSpec {
    pub c: f64,
    pub big_gamma: f64,
    pub theta_norm: f64,
    pub c_hat: f64,
    /// Defaults to the largest delay of the profile.
    #[serde(default)]
    pub h: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: Option<String>,
    pub plant: PlantSpec,
    pub controller: ControllerSpec,
    #[serde(default)]
    pub gains: GainSpec,
    #[serde(default)]
    pub delay: DelayProfile,
    pub trajectory: TrajectorySpec,
    #[serde(default)]
    pub payload: Option<PayloadSpec>,
    pub sim: SimSpec,
    #[serde(default)]
    pub bound: Option<BoundSpec>,
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Scenario, ScenarioError> {
        Self::from_toml_with_overrides(text, &[])
    }

    /// Parses after replacing dotted keys, e.g. `("controller.k_b", 3.0)`.
    pub fn from_toml_with_overrides(
        text: &str,
        overrides: &[(String, f64)],
    ) -> Result<Scenario, ScenarioError> {
        let mut value: toml::Table =
            toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        for (key, v) in overrides {
            set_path(&mut value, key, *v)?;
        }
        let sc: Scenario = toml::Value::Table(value)
            .try_into()
            .map_err(|e: toml::de::Error| ScenarioError::Parse(e.to_string()))?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    /// Hex SHA-256 of the canonical serialization.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn dim(&self) -> usize {
        self.plant.dim()
    }

    pub fn label(&self) -> String {
        match &self.name {
            Some(n) => n.clone(),
            None => format!(
                "{}-{}-{}",
                self.plant.label(),
                self.controller.label(),
                self.delay.label()
            ),
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let n = self.dim();
        if n == 0 {
            return Err(invalid("plant.dim", "dim > 0 required"));
        }
        let s = &self.sim;
        if !(s.duration > 0.0) || !s.duration.is_finite() {
            return Err(invalid("sim.duration", "duration > 0 required"));
        }
        if !(s.dt > 0.0) || !s.dt.is_finite() {
            return Err(invalid("sim.dt", "dt > 0 required"));
        }
        if s.control == ControlMode::Sampled {
            if !(s.control_dt > 0.0) || !s.control_dt.is_finite() {
                return Err(invalid("sim.control_dt", "control_dt > 0 required"));
            }
            let ratio = s.control_dt / s.dt;
            if ratio < 1.0 - 1e-9 || (ratio - ratio.round()).abs() > 1e-6 * ratio {
                return Err(invalid(
                    "sim.control_dt",
                    "control_dt must be a positive integer multiple of dt",
                ));
            }
        }
        if let Some(r) = s.record_dt {
            let base = if s.control == ControlMode::Sampled {
                s.control_dt
            } else {
                s.dt
            };
            let ratio = r / base;
            if !(ratio >= 1.0 - 1e-9) || (ratio - ratio.round()).abs() > 1e-6 * ratio {
                return Err(invalid(
                    "sim.record_dt",
                    "record_dt must be a positive integer multiple of the control period",
                ));
            }
        }
        for (key, v) in [
            ("sim.initial_q", &s.initial_q),
            ("sim.initial_qdot", &s.initial_qdot),
        ] {
            if let Some(v) = v {
                if v.len() != n {
                    return Err(invalid(key, format!("needs {n} entries, got {}", v.len())));
                }
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(invalid(key, "entries must be finite"));
                }
            }
        }
        match &self.plant {
            PlantSpec::Oscillator { omega, .. } if !omega.is_finite() => {
                return Err(invalid("plant.omega", "omega must be finite"));
            }
            PlantSpec::TwoLink {
                params,
                nominal_scale,
                friction,
                ..
            } => {
                params
                    .unwrap_or_default()
                    .validate()
                    .map_err(|e| invalid("plant.params", e.to_string()))?;
                if !(*nominal_scale > 0.0) || !nominal_scale.is_finite() {
                    return Err(invalid("plant.nominal_scale", "nominal_scale > 0 required"));
                }
                check_friction(*friction)?;
            }
            PlantSpec::Wmr { friction, .. } => {
                self.plant
                    .wmr_params()
                    .unwrap()
                    .validate()
                    .map_err(|e| invalid("plant.params", e.to_string()))?;
                check_friction(*friction)?;
            }
            _ => {}
        }
        if let Some(p) = &self.payload {
            if !matches!(self.plant, PlantSpec::Wmr { .. }) {
                return Err(invalid("payload", "payload applies to the wmr plant only"));
            }
            self.schedule()
                .unwrap()
                .validate()
                .map_err(|e| invalid("payload", e.to_string()))?;
            if !(p.random_radius >= 0.0) {
                return Err(invalid(
                    "payload.random_radius",
                    "random_radius >= 0 required",
                ));
            }
        }
        self.delay.validate().map_err(|m| invalid("delay", m))?;
        self.gains.to_gains(n)?;
        match &self.controller {
            ControllerSpec::Arolc {
                alpha,
                epsilon,
                gamma,
                c_hat_init,
                ..
            } => {
                if !(*alpha > 1.0) {
                    return Err(invalid("controller.alpha", "alpha > 1 required"));
                }
                if !(*epsilon > 0.0) {
                    return Err(invalid("controller.epsilon", "epsilon > 0 required"));
                }
                if !(*gamma > 0.0) {
                    return Err(invalid("controller.gamma", "gamma > 0 required"));
                }
                if let Some(c) = c_hat_init {
                    if !(*c >= *gamma) {
                        return Err(invalid(
                            "controller.c_hat_init",
                            "c_hat_init >= gamma required",
                        ));
                    }
                }
            }
            ControllerSpec::Pcon {
                kappa,
                vartheta,
                k_b,
            }
            | ControllerSpec::Pconf {
                kappa,
                vartheta,
                k_b,
                ..
            } => {
                if !(*kappa > 0.0) {
                    return Err(invalid("controller.kappa", "kappa > 0 required"));
                }
                if !(*k_b > 0.0) {
                    return Err(invalid("controller.k_b", "k_b > 0 required"));
                }
                vartheta.to_matrix(n, "controller.vartheta")?;
                if let ControllerSpec::Pconf { assumed_delay, .. } = &self.controller {
                    if !(*assumed_delay >= 0.0) || !assumed_delay.is_finite() {
                        return Err(invalid(
                            "controller.assumed_delay",
                            "assumed_delay >= 0 required",
                        ));
                    }
                }
            }
            ControllerSpec::None => {}
        }
        if let Some(td) = self.trajectory.dim() {
            if td != n {
                return Err(invalid(
                    "trajectory",
                    format!("reference has {td} joints, plant has {n}"),
                ));
            }
        }
        self.trajectory().map_err(|m| invalid("trajectory", m))?;
        if let Some(b) = &self.bound {
            for (key, v) in [
                ("bound.c", b.c),
                ("bound.big_gamma", b.big_gamma),
                ("bound.theta_norm", b.theta_norm),
            ] {
                if !(v >= 0.0) || !v.is_finite() {
                    return Err(invalid(key, "finite value >= 0 required"));
                }
            }
            if !(b.c_hat > 0.0) {
                return Err(invalid("bound.c_hat", "c_hat > 0 required"));
            }
            if let Some(h) = b.h {
                if !(h >= 0.0) {
                    return Err(invalid("bound.h", "h >= 0 required"));
                }
            }
        }
        Ok(())
    }

    pub fn gains(&self) -> Result<GainSet, ScenarioError> {
        self.gains.to_gains(self.dim())
    }

    pub fn trajectory(&self) -> Result<Trajectory, String> {
        self.trajectory.build(self.plant.wmr_params().as_ref())
    }

    pub fn schedule(&self) -> Option<PayloadSchedule> {
        self.payload.as_ref().map(|p| p.schedule(self.sim.seed))
    }

    /// The true plant with its nominal model.
    pub fn build_plant(&self) -> Box<dyn Plant> {
        match &self.plant {
            PlantSpec::Free { dim } => Box::new(LinearPlant::free(*dim)),
            PlantSpec::Oscillator { dim, omega } => Box::new(LinearPlant::oscillator(*dim, *omega)),
            PlantSpec::TwoLink {
                params,
                nominal_scale,
                friction,
                disturbance,
            } => {
                let truth = params.unwrap_or_default();
                Box::new(TwoLink {
                    truth,
                    nominal: truth.scaled_inertia(*nominal_scale),
                    viscous_friction: *friction,
                    disturbance: *disturbance,
                })
            }
            PlantSpec::Wmr {
                friction,
                disturbance,
                ..
            } => Box::new(ReducedWmr {
                params: self.plant.wmr_params().unwrap(),
                payload: self.schedule(),
                viscous_friction: *friction,
                disturbance: *disturbance,
            }),
        }
    }

    /// Bound scalars combined with the controller's switching parameters.
    pub fn bound_params(&self) -> Option<BoundParams> {
        let b = self.bound?;
        let (alpha, epsilon, gamma) = match self.controller {
            ControllerSpec::Arolc {
                alpha,
                epsilon,
                gamma,
                ..
            } => (alpha, epsilon, gamma),
            _ => (default_alpha(), default_epsilon(), default_gamma()),
        };
        Some(BoundParams {
            c: b.c,
            big_gamma: b.big_gamma,
            theta_norm: b.theta_norm,
            alpha,
            epsilon,
            gamma,
            c_hat: b.c_hat,
            h: b.h.unwrap_or_else(|| self.delay.max_delay()),
        })
    }
}

fn check_friction(f: f64) -> Result<(), ScenarioError> {
    if !(f >= 0.0) || !f.is_finite() {
        return Err(invalid("plant.friction", "friction >= 0 required"));
    }
    Ok(())
}

fn set_path(table: &mut toml::Table, key: &str, v: f64) -> Result<(), ScenarioError> {
    let err = |msg: &str| ScenarioError::Override {
        key: key.to_string(),
        msg: msg.to_string(),
    };
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(err("empty path segment"));
    }
    let (last, head) = parts.split_last().unwrap();
    let mut cur = table;
    for p in head {
        cur = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| err("path crosses a non-table value"))?;
    }
    let new = match cur.get(*last) {
        Some(toml::Value::Float(_)) => toml::Value::Float(v),
        _ if v.fract() == 0.0 && v.abs() < 9e15 => toml::Value::Integer(v as i64),
        _ => toml::Value::Float(v),
    };
    cur.insert(last.to_string(), new);
    Ok(())
}

/// Parses `start:stop:step` into the inclusive grid `start, start+step, ...`.
pub fn parse_range(spec: &str) -> Result<Vec<f64>, ScenarioError> {
    let bad = |msg: &str| ScenarioError::Parse(format!("range {spec:?}: {msg}"));
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(bad("expected start:stop:step"));
    }
    let nums = parts
        .iter()
        .map(|p| p.trim().parse::<f64>().map_err(|_| bad("not a number")))
        .collect::<Result<Vec<f64>, _>>()?;
    let (a, b, step) = (nums[0], nums[1], nums[2]);
    if !(a.is_finite() && b.is_finite() && step.is_finite()) {
        return Err(bad("values must be finite"));
    }
    if !(step > 0.0) {
        return Err(bad("step must be positive"));
    }
    if b < a {
        return Err(bad("stop must not be below start"));
    }
    let count = ((b - a) / step + 1e-9).floor();
    if count > 1e6 {
        return Err(bad("too many points"));
    }
    Ok((0..=count as usize).map(|i| a + i as f64 * step).collect())
}
