//! Delayed closed-loop simulation.

mod buffer;
mod delay;
mod engine;
mod trace;
mod trajectory;

pub use buffer::{BufferError, DelayBuffer};
pub use delay::{delay_at, DelayProfile};
pub use engine::{simulate, SimError};
pub use trace::Trace;
pub use trajectory::{
    Posture, Trajectory, TrajectorySpec, CIRCLE_CENTER, CIRCLE_RADIUS, CIRCLE_RATE,
};

/// Applied input `τ(t - h(t))` read from a command history.
pub fn buffer_sample(buffer: &DelayBuffer, t_query: f64) -> nalgebra::DVector<f64> {
    buffer.sample(t_query)
}
