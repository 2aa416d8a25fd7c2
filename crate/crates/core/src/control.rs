//! Adaptive-robust outer-loop controller (AROLC) and the predictor-style
//! baseline (PCON).
//!
//! AROLC computes `τ = M̂u + N̂` with `u = û + Δu`, where `û` is the
//! computed-torque term and `Δu` a boundary-layer switching term whose gain
//! `ĉ` grows while the sliding variable `s = BᵀPe` moves away from zero and
//! shrinks while it approaches.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::linalg::{self, LinalgError};
use crate::plants::Plant;
use crate::sim::DelayBuffer;
use crate::stability::ErrorSystem;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid controller configuration: {0}")]
    InvalidConfig(String),
    #[error("true mass matrix is singular")]
    SingularMass,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

pub type Result<T> = std::result::Result<T, ControlError>;

fn expect_len(what: &'static str, v: &DVector<f64>, n: usize) -> Result<()> {
    if v.len() == n {
        Ok(())
    } else {
        Err(ControlError::Dimension {
            what,
            expected: n,
            got: v.len(),
        })
    }
}

/// Desired position, velocity, and acceleration at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct Desired {
    pub q: DVector<f64>,
    pub qd: DVector<f64>,
    pub qdd: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArolcConfig {
    pub k1: DMatrix<f64>,
    pub k2: DMatrix<f64>,
    /// Lyapunov solution of the delay-free error system, `2n x 2n`.
    pub p: DMatrix<f64>,
    pub alpha: f64,
    pub epsilon: f64,
    pub gamma: f64,
    pub c_hat_init: f64,
    /// Control period in seconds; also the Euler step of the gain law.
    pub dt_control: f64,
    /// When false, `Δu` is forced to zero (the gain still adapts).
    pub switching: bool,
}

impl ArolcConfig {
    /// Builds a configuration from an assembled error system. `c_hat_init`
    /// defaults to `gamma` when `None`.
    pub fn from_error_system(
        k1: DMatrix<f64>,
        k2: DMatrix<f64>,
        sys: &ErrorSystem,
        alpha: f64,
        epsilon: f64,
        gamma: f64,
        c_hat_init: Option<f64>,
        dt_control: f64,
    ) -> Result<Self> {
        let cfg = ArolcConfig {
            k1,
            k2,
            p: sys.p.clone(),
            alpha,
            epsilon,
            gamma,
            c_hat_init: c_hat_init.unwrap_or(gamma),
            dt_control,
            switching: true,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn dim(&self) -> usize {
        self.k1.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dim();
        let bad = |m: String| Err(ControlError::InvalidConfig(m));
        if self.k2.shape() != (n, n) || self.p.shape() != (2 * n, 2 * n) {
            return bad(format!("K2 must be {n}x{n} and P {0}x{0}", 2 * n));
        }
        if !(self.alpha > 0.0 && self.epsilon > 0.0 && self.gamma > 0.0 && self.dt_control > 0.0) {
            return bad("alpha, epsilon, gamma and dt_control must be positive".into());
        }
        if !(self.c_hat_init >= self.gamma) || !self.c_hat_init.is_finite() {
            return bad(format!(
                "c_hat_init ({}) must be at least gamma ({})",
                self.c_hat_init, self.gamma
            ));
        }
        Ok(())
    }

    pub fn initial_state(&self) -> ArolcState {
        ArolcState {
            c_hat: self.c_hat_init,
            s_prev: None,
            t_prev: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArolcState {
    pub c_hat: f64,
    pub s_prev: Option<DVector<f64>>,
    pub t_prev: f64,
}

/// `s = BᵀPe`: the lower `n` rows of `P` applied to `e = [e1; ė1]`.
pub fn sliding_variable(e: &DVector<f64>, cfg: &ArolcConfig) -> Result<DVector<f64>> {
    let n = cfg.dim();
    expect_len("tracking error", e, 2 * n)?;
    Ok(cfg.p.rows(n, n) * e)
}

/// `û = q̈ᵈ + K2ė1 + K1e1`.
pub fn nominal_control(
    e1: &DVector<f64>,
    e1_dot: &DVector<f64>,
    qdd_desired: &DVector<f64>,
    cfg: &ArolcConfig,
) -> DVector<f64> {
    qdd_desired + &cfg.k2 * e1_dot + &cfg.k1 * e1
}

/// Boundary-layer switching term: `αĉ s/‖s‖` outside the layer, `αĉ s/ε` inside.
pub fn switching_control(s: &DVector<f64>, c_hat: f64, cfg: &ArolcConfig) -> DVector<f64> {
    let norm = s.norm();
    let scale = if norm >= cfg.epsilon {
        norm
    } else {
        cfg.epsilon
    };
    s * (cfg.alpha * c_hat / scale)
}

/// Rate `dĉ/dt` of the gain law.
///
/// Without a previous sample the decrease branch is taken; `sᵀṡ = 0` also
/// decreases.
pub fn gain_rate(
    c_hat: f64,
    s: &DVector<f64>,
    s_prev: Option<&DVector<f64>>,
    dt: f64,
    gamma: f64,
) -> f64 {
    if c_hat <= gamma {
        return gamma;
    }
    let growing = match s_prev {
        Some(prev) if dt > 0.0 => {
            let s_dot = (s - prev) / dt;
            s.dot(&s_dot) > 0.0
        }
        _ => false,
    };
    if growing {
        s.norm()
    } else {
        -s.norm()
    }
}

/// One explicit-Euler step of the gain law with a floor at `γ`.
pub fn adapt_gain(state: &ArolcState, s: &DVector<f64>, t: f64, cfg: &ArolcConfig) -> ArolcState {
    let rate = gain_rate(
        state.c_hat,
        s,
        state.s_prev.as_ref(),
        t - state.t_prev,
        cfg.gamma,
    );
    let c_hat = (state.c_hat + rate * cfg.dt_control).max(cfg.gamma);
    ArolcState {
        c_hat,
        s_prev: Some(s.clone()),
        t_prev: t,
    }
}

/// Everything one AROLC evaluation produces.
#[derive(Debug, Clone, PartialEq)]
pub struct ArolcOutput {
    pub tau: DVector<f64>,
    pub u: DVector<f64>,
    pub delta_u: DVector<f64>,
    pub s: DVector<f64>,
    /// Gain used for this command (before the adaptation step).
    pub c_hat: f64,
}

/// One AROLC control step. The command uses the current `ĉ`; the returned
/// state carries `ĉ` advanced by one control period.
pub fn arolc_step(
    state: &ArolcState,
    q: &DVector<f64>,
    q_dot: &DVector<f64>,
    desired: &Desired,
    nominal_mass: &DMatrix<f64>,
    nominal_bias: &DVector<f64>,
    t: f64,
    cfg: &ArolcConfig,
) -> Result<(ArolcOutput, ArolcState)> {
    let n = cfg.dim();
    for (what, v) in [
        ("q", q),
        ("q_dot", q_dot),
        ("q_desired", &desired.q),
        ("qd_desired", &desired.qd),
        ("qdd_desired", &desired.qdd),
        ("nominal bias", nominal_bias),
    ] {
        expect_len(what, v, n)?;
    }
    if nominal_mass.shape() != (n, n) {
        return Err(ControlError::Dimension {
            what: "nominal mass",
            expected: n,
            got: nominal_mass.nrows(),
        });
    }
    let e1 = &desired.q - q;
    let e1_dot = &desired.qd - q_dot;
    let mut e = DVector::zeros(2 * n);
    e.rows_mut(0, n).copy_from(&e1);
    e.rows_mut(n, n).copy_from(&e1_dot);

    let s = sliding_variable(&e, cfg)?;
    let u_hat = nominal_control(&e1, &e1_dot, &desired.qdd, cfg);
    let delta_u = if cfg.switching {
        switching_control(&s, state.c_hat, cfg)
    } else {
        DVector::zeros(n)
    };
    let u = &u_hat + &delta_u;
    let tau = nominal_mass * &u + nominal_bias;
    let next = adapt_gain(state, &s, t, cfg);
    Ok((
        ArolcOutput {
            tau,
            u,
            delta_u,
            s,
            c_hat: state.c_hat,
        },
        next,
    ))
}

/// Baseline gains: `ϱ = ė1 + κe1 - ϑe_z`, `τ = k_b ϱ`.
#[derive(Debug, Clone, PartialEq)]
pub struct PconConfig {
    pub kappa: f64,
    pub vartheta: DMatrix<f64>,
    pub k_b: f64,
}

impl PconConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0 && self.k_b > 0.0) {
            return Err(ControlError::InvalidConfig(
                "kappa and k_b must be positive".into(),
            ));
        }
        if self.vartheta.nrows() != self.vartheta.ncols() {
            return Err(ControlError::InvalidConfig(
                "vartheta must be square".into(),
            ));
        }
        Ok(())
    }
}

/// Command history of the baseline plus the delay it integrates over.
#[derive(Debug, Clone)]
pub struct PconState {
    pub history: DelayBuffer,
    pub h_estimate: f64,
}

impl PconState {
    pub fn new(dim: usize, window: f64) -> Self {
        PconState {
            history: DelayBuffer::new(dim, window),
            h_estimate: 0.0,
        }
    }
}

/// `e_z = ∫_{t-h}^{t} τ(θ) dθ` over the piecewise-linear command history.
pub fn pcon_integral_error(hist: &PconState, t: f64) -> DVector<f64> {
    hist.history.integrate(t - hist.h_estimate, t)
}

/// One baseline step; the command is appended to the history at `t`.
pub fn pcon_step(
    state: &mut PconState,
    q: &DVector<f64>,
    q_dot: &DVector<f64>,
    desired: &Desired,
    t: f64,
    cfg: &PconConfig,
) -> Result<DVector<f64>> {
    let tau = pcon_command(state, q, q_dot, desired, t, cfg)?;
    state
        .history
        .push(t, tau.clone())
        .map_err(|e| ControlError::InvalidConfig(e.to_string()))?;
    Ok(tau)
}

/// The baseline command without recording it.
pub fn pcon_command(
    state: &PconState,
    q: &DVector<f64>,
    q_dot: &DVector<f64>,
    desired: &Desired,
    t: f64,
    cfg: &PconConfig,
) -> Result<DVector<f64>> {
    let n = state.history.dim();
    for (what, v) in [
        ("q", q),
        ("q_dot", q_dot),
        ("q_desired", &desired.q),
        ("qd_desired", &desired.qd),
    ] {
        expect_len(what, v, n)?;
    }
    if cfg.vartheta.nrows() != n {
        return Err(ControlError::Dimension {
            what: "vartheta",
            expected: n,
            got: cfg.vartheta.nrows(),
        });
    }
    let e1 = &desired.q - q;
    let e1_dot = &desired.qd - q_dot;
    let e_z = pcon_integral_error(state, t);
    let rho = e1_dot + e1 * cfg.kappa - &cfg.vartheta * e_z;
    Ok(rho * cfg.k_b)
}

/// Inputs to the lumped-uncertainty diagnostic.
pub struct ResidualInputs<'a> {
    pub q: &'a DVector<f64>,
    pub q_dot: &'a DVector<f64>,
    pub q_h: &'a DVector<f64>,
    pub q_dot_h: &'a DVector<f64>,
    pub u_h: &'a DVector<f64>,
    pub qdd_d: &'a DVector<f64>,
    pub qdd_d_h: &'a DVector<f64>,
    pub t: f64,
}

/// `σ = (I - M⁻¹(q)M̂(q_h))u_h + M⁻¹(q)(N(q,q̇) - N̂(q_h,q̇_h)) + q̈ᵈ - q̈ᵈ_h`.
///
/// Diagnostic only; the controller never sees it.
pub fn uncertainty_residual(plant: &dyn Plant, x: &ResidualInputs<'_>) -> Result<DVector<f64>> {
    let m = plant.mass_matrix(x.q, x.t);
    let m_inv = linalg::invert(&m).map_err(|e| match e {
        LinalgError::Singular | LinalgError::IllConditioned { .. } => ControlError::SingularMass,
        other => other.into(),
    })?;
    let m_hat = plant.nominal_mass_matrix(x.q_h);
    let n = plant.bias_vector(x.q, x.q_dot, x.t);
    let n_hat = plant.nominal_bias_vector(x.q_h, x.q_dot_h);
    let eye = DMatrix::<f64>::identity(m.nrows(), m.nrows());
    Ok((eye - &m_inv * m_hat) * x.u_h + &m_inv * (n - n_hat) + x.qdd_d - x.qdd_d_h)
}
