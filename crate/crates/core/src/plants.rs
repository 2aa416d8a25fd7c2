//! Euler-Lagrange plant models `M(q)q̈ + N(q, q̇, t) = τ`.
//!
//! Every plant exposes both its true dynamics (with payload, friction and
//! disturbance terms) and the nominal model a controller is allowed to use.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, LinalgError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlantError {
    #[error("invalid plant parameters: {0}")]
    InvalidParams(String),
    #[error("singular mass matrix at t = {t}")]
    SingularMass { t: f64 },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

pub type Result<T> = std::result::Result<T, PlantError>;

/// True and nominal Euler-Lagrange dynamics.
pub trait Plant: Send + Sync {
    fn dim(&self) -> usize;

    /// True mass matrix; may vary in time through payload changes.
    fn mass_matrix(&self, q: &DVector<f64>, t: f64) -> DMatrix<f64>;

    /// True `N(q, q̇, t)` including friction and disturbances.
    fn bias_vector(&self, q: &DVector<f64>, qd: &DVector<f64>, t: f64) -> DVector<f64>;

    fn nominal_mass_matrix(&self, q: &DVector<f64>) -> DMatrix<f64>;

    fn nominal_bias_vector(&self, q: &DVector<f64>, qd: &DVector<f64>) -> DVector<f64>;

    /// Size of the kinematic state integrated alongside `(q, q̇)`.
    fn aux_dim(&self) -> usize {
        0
    }

    fn aux_rate(&self, _aux: &DVector<f64>, _q: &DVector<f64>, _qd: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(0)
    }

    /// Task-space output reconstructed from the kinematic state.
    fn aux_output(&self, aux: &DVector<f64>) -> DVector<f64> {
        aux.clone()
    }

    /// Inverse of [`Plant::aux_output`], used to place the robot on the reference.
    fn aux_from_output(&self, output: &DVector<f64>) -> DVector<f64> {
        output.clone()
    }
}

/// `q̈ = M(q)⁻¹(τ - N(q, q̇, t))`.
pub fn el_accel(
    plant: &dyn Plant,
    q: &DVector<f64>,
    qd: &DVector<f64>,
    tau: &DVector<f64>,
    t: f64,
) -> Result<DVector<f64>> {
    let m = plant.mass_matrix(q, t);
    let rhs = tau - plant.bias_vector(q, qd, t);
    linalg::solve(&m, &rhs).map_err(|e| match e {
        LinalgError::Singular => PlantError::SingularMass { t },
        other => PlantError::Linalg(other),
    })
}

/// Bounded sinusoidal disturbance added to the true `N`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Disturbance {
    pub amplitude: f64,
    /// rad/s
    pub frequency: f64,
}

impl Disturbance {
    pub fn eval(&self, n: usize, t: f64) -> DVector<f64> {
        DVector::from_fn(n, |i, _| {
            self.amplitude
                * (self.frequency * (1.0 + 0.3 * i as f64) * t + i as f64 * PI / 3.0).sin()
        })
    }
}

/// Constant-inertia plant `M q̈ + D q̇ + K q = τ`; nominal equals true.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearPlant {
    pub mass: DMatrix<f64>,
    pub damping: DMatrix<f64>,
    pub stiffness: DMatrix<f64>,
}

impl LinearPlant {
    pub fn free(n: usize) -> Self {
        LinearPlant {
            mass: DMatrix::identity(n, n),
            damping: DMatrix::zeros(n, n),
            stiffness: DMatrix::zeros(n, n),
        }
    }

    /// Unit-mass undamped oscillator with angular frequency `omega`.
    pub fn oscillator(n: usize, omega: f64) -> Self {
        LinearPlant {
            mass: DMatrix::identity(n, n),
            damping: DMatrix::zeros(n, n),
            stiffness: DMatrix::identity(n, n) * (omega * omega),
        }
    }
}

impl Plant for LinearPlant {
    fn dim(&self) -> usize {
        self.mass.nrows()
    }

    fn mass_matrix(&self, _q: &DVector<f64>, _t: f64) -> DMatrix<f64> {
        self.mass.clone()
    }

    fn bias_vector(&self, q: &DVector<f64>, qd: &DVector<f64>, _t: f64) -> DVector<f64> {
        &self.damping * qd + &self.stiffness * q
    }

    fn nominal_mass_matrix(&self, _q: &DVector<f64>) -> DMatrix<f64> {
        self.mass.clone()
    }

    fn nominal_bias_vector(&self, q: &DVector<f64>, qd: &DVector<f64>) -> DVector<f64> {
        &self.damping * qd + &self.stiffness * q
    }
}

/// Single pendulum `J q̈ + k sin q = τ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pendulum {
    pub inertia: f64,
    pub gravity_torque: f64,
}

impl Plant for Pendulum {
    fn dim(&self) -> usize {
        1
    }

    fn mass_matrix(&self, _q: &DVector<f64>, _t: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, self.inertia)
    }

    fn bias_vector(&self, q: &DVector<f64>, _qd: &DVector<f64>, _t: f64) -> DVector<f64> {
        DVector::from_element(1, self.gravity_torque * q[0].sin())
    }

    fn nominal_mass_matrix(&self, q: &DVector<f64>) -> DMatrix<f64> {
        self.mass_matrix(q, 0.0)
    }

    fn nominal_bias_vector(&self, q: &DVector<f64>, qd: &DVector<f64>) -> DVector<f64> {
        self.bias_vector(q, qd, 0.0)
    }
}

/// Inertial parameters of a planar two-revolute-link arm. Joint angles are
/// measured from the horizontal; gravity acts along -y.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoLinkParams {
    pub m1: f64,
    pub m2: f64,
    pub l1: f64,
    pub l2: f64,
    /// Distance from joint to link centre of mass.
    pub lc1: f64,
    pub lc2: f64,
    /// Link inertia about its centre of mass.
    pub i1: f64,
    pub i2: f64,
    pub g: f64,
}

impl Default for TwoLinkParams {
    fn default() -> Self {
        TwoLinkParams {
            m1: 1.0,
            m2: 1.0,
            l1: 1.0,
            l2: 1.0,
            lc1: 0.5,
            lc2: 0.5,
            i1: 1.0 / 12.0,
            i2: 1.0 / 12.0,
            g: 9.81,
        }
    }
}

impl TwoLinkParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("m1", self.m1),
            ("m2", self.m2),
            ("l1", self.l1),
            ("l2", self.l2),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(PlantError::InvalidParams(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        let nonneg = [
            ("lc1", self.lc1),
            ("lc2", self.lc2),
            ("i1", self.i1),
            ("i2", self.i2),
            ("g", self.g),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(PlantError::InvalidParams(format!(
                    "{name} must be nonnegative, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Scales every mass and inertia by `factor`.
    pub fn scaled_inertia(&self, factor: f64) -> Self {
        TwoLinkParams {
            m1: self.m1 * factor,
            m2: self.m2 * factor,
            i1: self.i1 * factor,
            i2: self.i2 * factor,
            ..*self
        }
    }
}

/// Closed-form `M(q)` and `N(q, q̇) = C(q, q̇)q̇ + g(q)` of the two-link arm.
pub fn two_link_matrices(
    q: &DVector<f64>,
    qd: &DVector<f64>,
    p: &TwoLinkParams,
) -> (DMatrix<f64>, DVector<f64>) {
    let (c2, s2) = (q[1].cos(), q[1].sin());
    let m11 = p.m1 * p.lc1 * p.lc1
        + p.m2 * (p.l1 * p.l1 + p.lc2 * p.lc2 + 2.0 * p.l1 * p.lc2 * c2)
        + p.i1
        + p.i2;
    let m12 = p.m2 * (p.lc2 * p.lc2 + p.l1 * p.lc2 * c2) + p.i2;
    let m22 = p.m2 * p.lc2 * p.lc2 + p.i2;
    let mass = DMatrix::from_row_slice(2, 2, &[m11, m12, m12, m22]);

    let h = p.m2 * p.l1 * p.lc2 * s2;
    let cor1 = -h * (2.0 * qd[0] * qd[1] + qd[1] * qd[1]);
    let cor2 = h * qd[0] * qd[0];
    let c1 = q[0].cos();
    let c12 = (q[0] + q[1]).cos();
    let g1 = (p.m1 * p.lc1 + p.m2 * p.l1) * p.g * c1 + p.m2 * p.lc2 * p.g * c12;
    let g2 = p.m2 * p.lc2 * p.g * c12;
    (mass, DVector::from_vec(vec![cor1 + g1, cor2 + g2]))
}

/// Two-link arm whose nominal model may differ from the truth; viscous
/// friction and disturbances exist only in the true model.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoLink {
    pub truth: TwoLinkParams,
    pub nominal: TwoLinkParams,
    pub viscous_friction: f64,
    pub disturbance: Disturbance,
}

impl TwoLink {
    pub fn new(truth: TwoLinkParams) -> Self {
        TwoLink {
            truth,
            nominal: truth,
            viscous_friction: 0.0,
            disturbance: Disturbance::default(),
        }
    }
}

impl Plant for TwoLink {
    fn dim(&self) -> usize {
        2
    }

    fn mass_matrix(&self, q: &DVector<f64>, _t: f64) -> DMatrix<f64> {
        two_link_matrices(q, &DVector::zeros(2), &self.truth).0
    }

    fn bias_vector(&self, q: &DVector<f64>, qd: &DVector<f64>, t: f64) -> DVector<f64> {
        two_link_matrices(q, qd, &self.truth).1
            + qd * self.viscous_friction
            + self.disturbance.eval(2, t)
    }

    fn nominal_mass_matrix(&self, q: &DVector<f64>) -> DMatrix<f64> {
        two_link_matrices(q, &DVector::zeros(2), &self.nominal).0
    }

    fn nominal_bias_vector(&self, q: &DVector<f64>, qd: &DVector<f64>) -> DVector<f64> {
        two_link_matrices(q, qd, &self.nominal).1
    }
}

/// Differential-drive robot parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WmrParams {
    /// Total mass, kg.
    pub m: f64,
    /// Yaw inertia about the centre of mass, kg·m².
    pub i_bar: f64,
    /// Mass-offset product `m·d`, kg·m.
    pub k: f64,
    /// Centre-of-mass offset ahead of the axle midpoint, m.
    pub d: f64,
    /// Wheel radius, m.
    pub r_bar: f64,
    /// Half axle width, m.
    pub b: f64,
    /// Wheel spin inertia, kg·m².
    pub i_w: f64,
}

impl Default for WmrParams {
    /// A PIONEER-3-class platform.
    fn default() -> Self {
        WmrParams::new(9.0, 0.3, 0.05, 0.0975, 0.165, 0.005)
    }
}

impl WmrParams {
    /// Fills `k = m·d`.
    pub fn new(m: f64, i_bar: f64, d: f64, r_bar: f64, b: f64, i_w: f64) -> Self {
        WmrParams {
            m,
            i_bar,
            k: m * d,
            d,
            r_bar,
            b,
            i_w,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("m", self.m),
            ("i_bar", self.i_bar),
            ("k", self.k),
            ("d", self.d),
            ("r_bar", self.r_bar),
            ("b", self.b),
            ("i_w", self.i_w),
        ];
        for (name, v) in fields {
            if !(v > 0.0) || !v.is_finite() {
                return Err(PlantError::InvalidParams(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if !(self.d < self.b) {
            return Err(PlantError::InvalidParams(format!(
                "d ({}) must be less than b ({})",
                self.d, self.b
            )));
        }
        Ok(())
    }
}

/// Constrained WMR matrices `(M̄, V̄, G)` in `q = (x_c, y_c, φ, θ_r, θ_l)` as
/// obtained after eliminating the Lagrange multipliers.
pub fn wmr_matrices(
    q: &DVector<f64>,
    qd: &DVector<f64>,
    p: &WmrParams,
) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>) {
    let phi = q[2];
    let (s, c) = phi.sin_cos();
    let WmrParams {
        m,
        i_bar,
        k,
        d,
        r_bar: r,
        b,
        i_w,
    } = *p;
    let k1 = s * (m * d * r - k * r) / b - m * r * c / 2.0;
    let k2 = s * (k * r - m * d * r) / b - m * r * c / 2.0;
    let k3 = c * (k * r - m * d * r) / b - m * r * s / 2.0;
    let k4 = c * (m * d * r - k * r) / b - m * r * s / 2.0;
    let k5 = r * (i_bar - k * d) / b;

    #[rustfmt::skip]
    let mass = DMatrix::from_row_slice(5, 5, &[
        m,      0.0,     k * s,  k1,   k2,
        0.0,    m,      -k * c,  k3,   k4,
        k * s, -k * c,   i_bar, -k5,   k5,
        k1,     k3,     -k5,     i_w,  0.0,
        k2,     k4,      k5,     0.0,  i_w,
    ]);

    let phid = qd[2];
    let wheel_sq = qd[3] * qd[3] - qd[4] * qd[4];
    let v1 = m * d * phid * phid * c + m * r * r * s * wheel_sq / (2.0 * b);
    // Printed with cos in both of the first two entries.
    let v2 = m * d * phid * phid * c - m * r * r * s * wheel_sq / (2.0 * b);
    let v3 = k * r * r * wheel_sq / (2.0 * b);
    let v4 = -k * r * phid * phid / 2.0;
    let bias = DVector::from_vec(vec![v1, v2, v3, v4, v4]);

    let mut g = DMatrix::zeros(5, 2);
    g[(3, 0)] = 1.0;
    g[(4, 1)] = 1.0;
    (mass, bias, g)
}

/// Body velocities `(v, ω)` of the axle midpoint from wheel rates.
pub fn wheel_to_body(wheel_rates: &DVector<f64>, p: &WmrParams) -> (f64, f64) {
    let v = p.r_bar * (wheel_rates[0] + wheel_rates[1]) / 2.0;
    let w = p.r_bar * (wheel_rates[0] - wheel_rates[1]) / (2.0 * p.b);
    (v, w)
}

/// Wheel rates producing body velocities `(v, ω)`.
pub fn body_to_wheel(v: f64, w: f64, p: &WmrParams) -> (f64, f64) {
    ((v + p.b * w) / p.r_bar, (v - p.b * w) / p.r_bar)
}

/// `(ẋ_c, ẏ_c, φ̇)` of the centre of mass under rolling without slipping.
pub fn wmr_posture_rate(phi: f64, wheel_rates: &DVector<f64>, p: &WmrParams) -> (f64, f64, f64) {
    let (v, w) = wheel_to_body(wheel_rates, p);
    let (s, c) = phi.sin_cos();
    (v * c - p.d * w * s, v * s + p.d * w * c, w)
}

/// Null-space map `S(φ)` with `q̇ = S(φ)(θ̇_r, θ̇_l)`.
pub fn constraint_map(phi: f64, p: &WmrParams) -> DMatrix<f64> {
    let (s, c) = phi.sin_cos();
    let half = p.r_bar / 2.0;
    let rot = p.r_bar / (2.0 * p.b);
    #[rustfmt::skip]
    let map = DMatrix::from_row_slice(5, 2, &[
        half * c - p.d * rot * s, half * c + p.d * rot * s,
        half * s + p.d * rot * c, half * s - p.d * rot * c,
        rot,                      -rot,
        1.0,                      0.0,
        0.0,                      1.0,
    ]);
    map
}

/// `Ṡ = (∂S/∂φ) φ̇`.
pub fn constraint_map_rate(phi: f64, phid: f64, p: &WmrParams) -> DMatrix<f64> {
    let (s, c) = phi.sin_cos();
    let half = p.r_bar / 2.0;
    let rot = p.r_bar / (2.0 * p.b);
    let mut map = DMatrix::zeros(5, 2);
    map[(0, 0)] = (-half * s - p.d * rot * c) * phid;
    map[(0, 1)] = (-half * s + p.d * rot * c) * phid;
    map[(1, 0)] = (half * c - p.d * rot * s) * phid;
    map[(1, 1)] = (half * c + p.d * rot * s) * phid;
    map
}

/// Kinetic-energy inertia of the unconstrained coordinates with the centre of
/// mass as reference point: `diag(m, m, Ī, I_w, I_w)`.
pub fn wmr_kinetic_mass_matrix(p: &WmrParams) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_vec(vec![p.m, p.m, p.i_bar, p.i_w, p.i_w]))
}

/// Periodic extra payload, on for `period_on` then off for `period_off`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayloadSchedule {
    pub extra_mass: f64,
    pub period_on: f64,
    pub period_off: f64,
    /// Body-frame placement `(dx, dy)` relative to the axle midpoint, cycled
    /// one entry per on-window.
    pub offsets: Vec<(f64, f64)>,
}

impl PayloadSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.extra_mass >= 0.0) || !self.extra_mass.is_finite() {
            return Err(PlantError::InvalidParams(format!(
                "extra_mass must be >= 0, got {}",
                self.extra_mass
            )));
        }
        if !(self.period_on > 0.0 && self.period_off > 0.0) {
            return Err(PlantError::InvalidParams(
                "payload periods must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Seeded pseudo-random placements within a disc of `radius`.
    pub fn random_offsets(seed: u64, count: usize, radius: f64) -> Vec<(f64, f64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| {
                let rho = radius * rng.random::<f64>().sqrt();
                let ang = 2.0 * PI * rng.random::<f64>();
                (rho * ang.cos(), rho * ang.sin())
            })
            .collect()
    }

    pub fn period(&self) -> f64 {
        self.period_on + self.period_off
    }
}

/// Added mass and its placement at time `t`; `None` placement while off.
pub fn payload_mass(sched: &PayloadSchedule, t: f64) -> (f64, Option<(f64, f64)>) {
    let period = sched.period();
    let cycle = (t / period).floor();
    let phase = t - cycle * period;
    if phase < sched.period_on && sched.extra_mass > 0.0 {
        let offset = if sched.offsets.is_empty() {
            (0.0, 0.0)
        } else {
            sched.offsets[(cycle.max(0.0) as usize) % sched.offsets.len()]
        };
        (sched.extra_mass, Some(offset))
    } else {
        (0.0, None)
    }
}

/// Wheel-space dynamics of the differential-drive robot, `q = (θ_r, θ_l)`.
///
/// The kinematic state is the axle-midpoint posture `(x_0, y_0, φ)`; the
/// reported output is the nominal centre of mass `(x_c, y_c, φ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedWmr {
    pub params: WmrParams,
    pub payload: Option<PayloadSchedule>,
    /// Viscous wheel friction, N·m·s/rad.
    pub viscous_friction: f64,
    pub disturbance: Disturbance,
}

/// Mass, first moment along the heading, and yaw inertia about the axle midpoint.
#[derive(Debug, Clone, Copy, PartialEq)]
struct MassProps {
    m: f64,
    md: f64,
    i0: f64,
}

impl ReducedWmr {
    pub fn new(params: WmrParams) -> Self {
        ReducedWmr {
            params,
            payload: None,
            viscous_friction: 0.0,
            disturbance: Disturbance::default(),
        }
    }

    fn nominal_props(&self) -> MassProps {
        let p = &self.params;
        MassProps {
            m: p.m,
            md: p.k,
            i0: p.i_bar + p.k * p.d,
        }
    }

    fn props_at(&self, t: f64) -> MassProps {
        let mut props = self.nominal_props();
        if let Some(sched) = &self.payload {
            if let (mp, Some((dx, dy))) = payload_mass(sched, t) {
                props.m += mp;
                props.md += mp * dx;
                props.i0 += mp * (dx * dx + dy * dy);
            }
        }
        props
    }

    fn mass_of(&self, props: MassProps) -> DMatrix<f64> {
        let p = &self.params;
        let lin = props.m * p.r_bar * p.r_bar / 4.0;
        let rot = props.i0 * p.r_bar * p.r_bar / (4.0 * p.b * p.b);
        DMatrix::from_row_slice(
            2,
            2,
            &[lin + rot + p.i_w, lin - rot, lin - rot, lin + rot + p.i_w],
        )
    }

    fn coriolis_of(&self, props: MassProps, qd: &DVector<f64>) -> DVector<f64> {
        let p = &self.params;
        let (_, w) = wheel_to_body(qd, p);
        let coef = p.r_bar * p.r_bar * props.md * w / (2.0 * p.b);
        DVector::from_vec(vec![coef * qd[1], -coef * qd[0]])
    }
}

impl Plant for ReducedWmr {
    fn dim(&self) -> usize {
        2
    }

    fn mass_matrix(&self, _q: &DVector<f64>, t: f64) -> DMatrix<f64> {
        self.mass_of(self.props_at(t))
    }

    fn bias_vector(&self, _q: &DVector<f64>, qd: &DVector<f64>, t: f64) -> DVector<f64> {
        self.coriolis_of(self.props_at(t), qd)
            + qd * self.viscous_friction
            + self.disturbance.eval(2, t)
    }

    fn nominal_mass_matrix(&self, _q: &DVector<f64>) -> DMatrix<f64> {
        self.mass_of(self.nominal_props())
    }

    fn nominal_bias_vector(&self, _q: &DVector<f64>, qd: &DVector<f64>) -> DVector<f64> {
        self.coriolis_of(self.nominal_props(), qd)
    }

    fn aux_dim(&self) -> usize {
        3
    }

    fn aux_rate(&self, aux: &DVector<f64>, _q: &DVector<f64>, qd: &DVector<f64>) -> DVector<f64> {
        let (v, w) = wheel_to_body(qd, &self.params);
        let (s, c) = aux[2].sin_cos();
        DVector::from_vec(vec![v * c, v * s, w])
    }

    fn aux_output(&self, aux: &DVector<f64>) -> DVector<f64> {
        let (s, c) = aux[2].sin_cos();
        DVector::from_vec(vec![
            aux[0] + self.params.d * c,
            aux[1] + self.params.d * s,
            aux[2],
        ])
    }

    fn aux_from_output(&self, output: &DVector<f64>) -> DVector<f64> {
        let (s, c) = output[2].sin_cos();
        DVector::from_vec(vec![
            output[0] - self.params.d * c,
            output[1] - self.params.d * s,
            output[2],
        ])
    }
}
