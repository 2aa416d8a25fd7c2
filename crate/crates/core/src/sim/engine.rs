use nalgebra::DVector;
use thiserror::Error;

use super::buffer::DelayBuffer;
use super::delay::delay_at;
use super::trace::Trace;
use super::trajectory::Trajectory;
use crate::control::{self, ArolcConfig, ArolcState, ControlError, Desired, PconConfig, PconState};
use crate::plants::{el_accel, Plant, PlantError};
use crate::scenario::{ControlMode, ControllerSpec, Scenario, ScenarioError};
use crate::stability::{self, StabilityError};

/// States beyond this magnitude count as divergence.
const DIVERGENCE_LIMIT: f64 = 1e8;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Stability(#[from] StabilityError),
    #[error("simulation diverged at t = {t:.4} s")]
    Diverged { t: f64, partial: Box<Trace> },
}

struct Command {
    tau: DVector<f64>,
    u: Option<DVector<f64>>,
    delta_u: Option<DVector<f64>>,
    c_hat: f64,
    s_norm: f64,
}

enum Runtime {
    Zero(usize),
    Arolc {
        cfg: ArolcConfig,
        state: ArolcState,
    },
    Pcon {
        cfg: PconConfig,
        state: PconState,
        assumed: Option<f64>,
    },
}

impl Runtime {
    fn build(sc: &Scenario, dt_control: f64) -> Result<Self, SimError> {
        let n = sc.dim();
        Ok(match &sc.controller {
            ControllerSpec::None => Runtime::Zero(n),
            ControllerSpec::Arolc {
                alpha,
                epsilon,
                gamma,
                c_hat_init,
                switching,
            } => {
                let g = sc.gains()?;
                let sys = stability::build_error_system(&g)?;
                let mut cfg = ArolcConfig::from_error_system(
                    g.k1.clone(),
                    g.k2.clone(),
                    &sys,
                    *alpha,
                    *epsilon,
                    *gamma,
                    *c_hat_init,
                    dt_control,
                )?;
                cfg.switching = *switching;
                Runtime::Arolc {
                    state: cfg.initial_state(),
                    cfg,
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
                let assumed = match &sc.controller {
                    ControllerSpec::Pconf { assumed_delay, .. } => Some(*assumed_delay),
                    _ => None,
                };
                let cfg = PconConfig {
                    kappa: *kappa,
                    vartheta: vartheta.to_matrix(n, "controller.vartheta")?,
                    k_b: *k_b,
                };
                cfg.validate()?;
                let window = assumed.unwrap_or(0.0).max(sc.delay.max_delay()) + 2.0 * dt_control;
                Runtime::Pcon {
                    cfg,
                    state: PconState::new(n, window),
                    assumed,
                }
            }
        })
    }

    fn commit(
        &mut self,
        plant: &dyn Plant,
        q: &DVector<f64>,
        qd: &DVector<f64>,
        des: &Desired,
        t: f64,
        h: f64,
    ) -> Result<Command, SimError> {
        Ok(match self {
            Runtime::Zero(n) => Command {
                tau: DVector::zeros(*n),
                u: None,
                delta_u: None,
                c_hat: f64::NAN,
                s_norm: f64::NAN,
            },
            Runtime::Arolc { cfg, state } => {
                let m_hat = plant.nominal_mass_matrix(q);
                let n_hat = plant.nominal_bias_vector(q, qd);
                let (out, next) = control::arolc_step(state, q, qd, des, &m_hat, &n_hat, t, cfg)?;
                *state = next;
                Command {
                    s_norm: out.s.norm(),
                    c_hat: out.c_hat,
                    u: Some(out.u),
                    delta_u: Some(out.delta_u),
                    tau: out.tau,
                }
            }
            Runtime::Pcon {
                cfg,
                state,
                assumed,
            } => {
                state.h_estimate = assumed.unwrap_or(h);
                let tau = control::pcon_step(state, q, qd, des, t, cfg)?;
                Command {
                    tau,
                    u: None,
                    delta_u: None,
                    c_hat: f64::NAN,
                    s_norm: f64::NAN,
                }
            }
        })
    }

    // Command at an intermediate state without advancing controller state.
    fn peek(
        &self,
        plant: &dyn Plant,
        q: &DVector<f64>,
        qd: &DVector<f64>,
        des: &Desired,
        t: f64,
        h: f64,
    ) -> Result<DVector<f64>, SimError> {
        Ok(match self {
            Runtime::Zero(n) => DVector::zeros(*n),
            Runtime::Arolc { cfg, state } => {
                let m_hat = plant.nominal_mass_matrix(q);
                let n_hat = plant.nominal_bias_vector(q, qd);
                control::arolc_step(state, q, qd, des, &m_hat, &n_hat, t, cfg)?
                    .0
                    .tau
            }
            Runtime::Pcon {
                cfg,
                state,
                assumed,
            } => {
                let mut probe = state.clone();
                probe.h_estimate = assumed.unwrap_or(h);
                control::pcon_command(&probe, q, qd, des, t, cfg)?
            }
        })
    }
}

#[derive(Clone)]
struct State {
    q: DVector<f64>,
    qd: DVector<f64>,
    aux: DVector<f64>,
}

impl State {
    fn axpy(&self, k: &State, a: f64) -> State {
        State {
            q: &self.q + &k.q * a,
            qd: &self.qd + &k.qd * a,
            aux: &self.aux + &k.aux * a,
        }
    }

    fn is_sane(&self) -> bool {
        self.q
            .iter()
            .chain(self.qd.iter())
            .chain(self.aux.iter())
            .all(|x| x.is_finite() && x.abs() < DIVERGENCE_LIMIT)
    }
}

/// Runs a scenario with fixed-step RK4.
///
/// The controller is evaluated every `control_dt` and its command held; every
/// integration step the held command enters the delay buffer, and the plant
/// is driven by the buffer read at `t - h(t)`. In continuous mode the
/// controller runs every step, and with zero delay it is also evaluated at
/// each Runge-Kutta stage.
pub fn simulate(sc: &Scenario) -> Result<Trace, SimError> {
    sc.validate()?;
    let plant = sc.build_plant();
    let plant = plant.as_ref();
    let traj = sc.trajectory().map_err(|m| ScenarioError::Invalid {
        key: "trajectory".into(),
        msg: m,
    })?;
    let n = sc.dim();
    let s = &sc.sim;
    let dt = s.dt;
    let continuous = s.control == ControlMode::Continuous;
    let ratio = if continuous {
        1
    } else {
        (s.control_dt / dt).round() as usize
    };
    let dt_control = ratio as f64 * dt;
    let total_steps = (s.duration / dt).round() as usize;
    let record_every = s
        .record_dt
        .map_or(1, |r| (r / dt_control).round() as usize)
        .max(1);

    let mut ctrl = Runtime::build(sc, dt_control)?;
    let mut trace = Trace::new(n, sc.controller.label());
    if let ControllerSpec::Arolc { .. } = sc.controller {
        let margin = stability::delay_margin(&sc.gains()?)?;
        let hmax = sc.delay.max_delay();
        if hmax >= margin {
            let msg = format!("max delay {hmax:.4} s reaches the delay margin {margin:.4} s; stability is not guaranteed");
            log::warn!("{msg}");
            trace.warnings.push(msg);
        }
    }

    let des0 = traj.eval(0.0);
    let mut x = State {
        q: s.initial_q
            .as_ref()
            .map_or_else(|| des0.q.clone(), |v| DVector::from_column_slice(v)),
        qd: s
            .initial_qdot
            .as_ref()
            .map_or_else(|| DVector::zeros(n), |v| DVector::from_column_slice(v)),
        aux: match traj.posture(0.0) {
            Some(p) if plant.aux_dim() > 0 => plant.aux_from_output(&p.pose),
            _ => DVector::zeros(plant.aux_dim()),
        },
    };

    let mut buffer = DelayBuffer::new(n, sc.delay.max_delay() + 2.0 * dt_control + dt);
    let mut held = DVector::zeros(n);
    let zero_delay = sc.delay.max_delay() == 0.0;

    for step in 0..total_steps {
        let t = step as f64 * dt;
        let commit = step % ratio == 0;
        if commit {
            let des = traj.eval(t);
            let cmd = ctrl.commit(plant, &x.q, &x.qd, &des, t, delay_at(&sc.delay, t))?;
            held = cmd.tau.clone();
            buffer
                .push(t, held.clone())
                .map_err(|e| ControlError::InvalidConfig(e.to_string()))?;
            if (step / ratio) % record_every == 0 {
                record(
                    &mut trace, plant, &traj, &sc.delay, &buffer, t, &x, des, cmd,
                );
            }
        } else {
            buffer
                .push(t, held.clone())
                .map_err(|e| ControlError::InvalidConfig(e.to_string()))?;
        }

        let applied = |ts: f64, xs: &State| -> Result<DVector<f64>, SimError> {
            let h = delay_at(&sc.delay, ts);
            if continuous && zero_delay && ts > t {
                return ctrl.peek(plant, &xs.q, &xs.qd, &traj.eval(ts), ts, h);
            }
            Ok(buffer.sample(ts - h))
        };
        let deriv = |ts: f64, xs: &State| -> Result<State, SimError> {
            let tau = applied(ts, xs)?;
            Ok(State {
                q: xs.qd.clone(),
                qd: el_accel(plant, &xs.q, &xs.qd, &tau, ts)?,
                aux: plant.aux_rate(&xs.aux, &xs.q, &xs.qd),
            })
        };
        let k1 = deriv(t, &x)?;
        let k2 = deriv(t + dt / 2.0, &x.axpy(&k1, dt / 2.0))?;
        let k3 = deriv(t + dt / 2.0, &x.axpy(&k2, dt / 2.0))?;
        let k4 = deriv(t + dt, &x.axpy(&k3, dt))?;
        let mut next = x.axpy(&k1, dt / 6.0);
        next = next.axpy(&k2, dt / 3.0);
        next = next.axpy(&k3, dt / 3.0);
        next = next.axpy(&k4, dt / 6.0);
        x = next;

        if !x.is_sane() {
            let t_div = t + dt;
            finish(&mut trace, t_div, &x);
            return Err(SimError::Diverged {
                t: t_div,
                partial: Box::new(trace),
            });
        }
    }
    finish(&mut trace, total_steps as f64 * dt, &x);
    Ok(trace)
}

fn record(
    trace: &mut Trace,
    plant: &dyn Plant,
    traj: &Trajectory,
    delay: &super::DelayProfile,
    buffer: &DelayBuffer,
    t: f64,
    x: &State,
    des: Desired,
    cmd: Command,
) {
    let n = trace.dim;
    let h = delay_at(delay, t);
    trace.t.push(t);
    trace.e1.push(&des.q - &x.q);
    trace.e1_dot.push(&des.qd - &x.qd);
    trace.q.push(x.q.clone());
    trace.qdot.push(x.qd.clone());
    trace.q_des.push(des.q);
    trace.qdot_des.push(des.qd);
    trace.qddot_des.push(des.qdd);
    trace.tau_app.push(buffer.sample(t - h));
    trace.tau_cmd.push(cmd.tau);
    trace
        .u
        .push(cmd.u.unwrap_or_else(|| DVector::from_element(n, f64::NAN)));
    trace.delta_u.push(
        cmd.delta_u
            .unwrap_or_else(|| DVector::from_element(n, f64::NAN)),
    );
    trace.c_hat.push(cmd.c_hat);
    trace.s_norm.push(cmd.s_norm);
    trace.h.push(h);
    if plant.aux_dim() > 0 {
        if let Some(p) = traj.posture(t) {
            trace.output.push(plant.aux_output(&x.aux));
            trace.output_des.push(p.pose);
        }
    }
}

fn finish(trace: &mut Trace, t: f64, x: &State) {
    trace.final_time = t;
    trace.final_q = x.q.clone();
    trace.final_qdot = x.qd.clone();
    trace.final_aux = x.aux.clone();
}
