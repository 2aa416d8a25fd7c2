use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::control::Desired;
use crate::plants::{body_to_wheel, WmrParams};

/// Circle radius of the reference path, m.
pub const CIRCLE_RADIUS: f64 = 1.25;
/// Angular rate of the reference path, rad/s.
pub const CIRCLE_RATE: f64 = 0.35;
/// Circle centre, m.
pub const CIRCLE_CENTER: (f64, f64) = (0.1, 1.35);

/// Reference trajectory as written in a scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TrajectorySpec {
    /// Centre of mass on `x = 1.25 sin(0.35t) + 0.1`, `y = 1.25 cos(0.35t) + 1.35`.
    Circle,
    /// Constant wheel rates `θᵈ = (3t, 2t)`.
    ConstantWheelRates,
    /// `q_i = offset_i + amplitude_i sin(frequency_i t + phase_i)`.
    Sinusoid {
        amplitude: Vec<f64>,
        frequency: Vec<f64>,
        #[serde(default)]
        offset: Vec<f64>,
        #[serde(default)]
        phase: Vec<f64>,
    },
    /// Regulation to a fixed point.
    Constant { q: Vec<f64> },
}

/// Planar posture `(x, y, φ)` and its rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Posture {
    pub pose: DVector<f64>,
    pub rate: DVector<f64>,
}

/// Evaluable reference.
#[derive(Debug, Clone, PartialEq)]
pub enum Trajectory {
    /// Constant wheel rates with an analytic centre-of-mass path.
    WheelRates {
        rates: (f64, f64),
        v: f64,
        w: f64,
        /// Axle-midpoint pose at `t = 0`.
        start: (f64, f64, f64),
        d: f64,
        diameter: f64,
    },
    Sinusoid {
        amplitude: Vec<f64>,
        frequency: Vec<f64>,
        offset: Vec<f64>,
        phase: Vec<f64>,
    },
    Constant(Vec<f64>),
}

impl TrajectorySpec {
    /// Joint-space dimension implied by the reference, if any.
    pub fn dim(&self) -> Option<usize> {
        match self {
            TrajectorySpec::Circle | TrajectorySpec::ConstantWheelRates => Some(2),
            TrajectorySpec::Sinusoid { amplitude, .. } => Some(amplitude.len()),
            TrajectorySpec::Constant { q } => Some(q.len()),
        }
    }

    /// Instantiates the reference; wheeled references need the robot geometry.
    pub fn build(&self, wmr: Option<&WmrParams>) -> Result<Trajectory, String> {
        match self {
            TrajectorySpec::Circle => {
                let p = wmr.ok_or("trajectory.kind = \"circle\" requires a wmr plant")?;
                let d = p.d;
                if d.abs() >= CIRCLE_RADIUS {
                    return Err("wmr d must be smaller than the circle radius".into());
                }
                let r0 = (CIRCLE_RADIUS * CIRCLE_RADIUS - d * d).sqrt();
                let v = CIRCLE_RATE * r0;
                let w = -CIRCLE_RATE;
                let phi0 = d.atan2(r0);
                let xc = CIRCLE_CENTER.0;
                let yc = CIRCLE_CENTER.1 + CIRCLE_RADIUS;
                let start = (xc - d * phi0.cos(), yc - d * phi0.sin(), phi0);
                Ok(Trajectory::WheelRates {
                    rates: body_to_wheel(v, w, p),
                    v,
                    w,
                    start,
                    d,
                    diameter: 2.0 * CIRCLE_RADIUS,
                })
            }
            TrajectorySpec::ConstantWheelRates => {
                let p = wmr.ok_or("trajectory.kind = \"wheel-rates\" requires a wmr plant")?;
                let rates = (3.0, 2.0);
                let v = p.r_bar * (rates.0 + rates.1) / 2.0;
                let w = p.r_bar * (rates.0 - rates.1) / (2.0 * p.b);
                let radius = (v / w).hypot(p.d);
                let start = (CIRCLE_CENTER.0 - p.d, CIRCLE_CENTER.1 + CIRCLE_RADIUS, 0.0);
                Ok(Trajectory::WheelRates {
                    rates,
                    v,
                    w,
                    start,
                    d: p.d,
                    diameter: 2.0 * radius,
                })
            }
            TrajectorySpec::Sinusoid {
                amplitude,
                frequency,
                offset,
                phase,
            } => {
                let n = amplitude.len();
                if n == 0 {
                    return Err("trajectory.amplitude must not be empty".into());
                }
                if frequency.len() != n {
                    return Err(format!(
                        "trajectory.frequency needs {n} entries, got {}",
                        frequency.len()
                    ));
                }
                let fill = |v: &Vec<f64>, key: &str| -> Result<Vec<f64>, String> {
                    match v.len() {
                        0 => Ok(vec![0.0; n]),
                        k if k == n => Ok(v.clone()),
                        k => Err(format!("trajectory.{key} needs {n} entries, got {k}")),
                    }
                };
                let all = amplitude.iter().chain(frequency).chain(offset).chain(phase);
                if all.clone().any(|x| !x.is_finite()) {
                    return Err("trajectory values must be finite".into());
                }
                Ok(Trajectory::Sinusoid {
                    amplitude: amplitude.clone(),
                    frequency: frequency.clone(),
                    offset: fill(offset, "offset")?,
                    phase: fill(phase, "phase")?,
                })
            }
            TrajectorySpec::Constant { q } => {
                if q.is_empty() || q.iter().any(|x| !x.is_finite()) {
                    return Err("trajectory.q must be a non-empty list of finite values".into());
                }
                Ok(Trajectory::Constant(q.clone()))
            }
        }
    }
}

impl Trajectory {
    pub fn dim(&self) -> usize {
        match self {
            Trajectory::WheelRates { .. } => 2,
            Trajectory::Sinusoid { amplitude, .. } => amplitude.len(),
            Trajectory::Constant(q) => q.len(),
        }
    }

    /// Joint-space reference at `t`.
    pub fn eval(&self, t: f64) -> Desired {
        match self {
            Trajectory::WheelRates { rates, .. } => {
                let qd = DVector::from_vec(vec![rates.0, rates.1]);
                Desired {
                    q: &qd * t,
                    qd,
                    qdd: DVector::zeros(2),
                }
            }
            Trajectory::Sinusoid {
                amplitude,
                frequency,
                offset,
                phase,
            } => {
                let n = amplitude.len();
                let mut d = Desired {
                    q: DVector::zeros(n),
                    qd: DVector::zeros(n),
                    qdd: DVector::zeros(n),
                };
                for i in 0..n {
                    let (s, c) = (frequency[i] * t + phase[i]).sin_cos();
                    let a = amplitude[i];
                    let w = frequency[i];
                    d.q[i] = offset[i] + a * s;
                    d.qd[i] = a * w * c;
                    d.qdd[i] = -a * w * w * s;
                }
                d
            }
            Trajectory::Constant(q) => {
                let n = q.len();
                Desired {
                    q: DVector::from_column_slice(q),
                    qd: DVector::zeros(n),
                    qdd: DVector::zeros(n),
                }
            }
        }
    }

    /// Centre-of-mass posture reference, for wheeled references only.
    pub fn posture(&self, t: f64) -> Option<Posture> {
        let Trajectory::WheelRates { v, w, start, d, .. } = *self else {
            return None;
        };
        let (x0, y0, phi0) = start;
        let phi = phi0 + w * t;
        let (s, c) = phi.sin_cos();
        let (ax, ay) = if w.abs() < 1e-12 {
            (x0 + v * t * phi0.cos(), y0 + v * t * phi0.sin())
        } else {
            let rho = v / w;
            (x0 + rho * (s - phi0.sin()), y0 - rho * (c - phi0.cos()))
        };
        let pose = DVector::from_vec(vec![ax + d * c, ay + d * s, phi]);
        let rate = DVector::from_vec(vec![v * c - d * w * s, v * s + d * w * c, w]);
        Some(Posture { pose, rate })
    }

    /// Diameter of the reference path, when it is a closed planar curve.
    pub fn path_diameter(&self) -> Option<f64> {
        match self {
            Trajectory::WheelRates { diameter, .. } => Some(*diameter),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plants::wmr_posture_rate;
    use approx::assert_relative_eq;

    fn circle() -> Trajectory {
        TrajectorySpec::Circle
            .build(Some(&WmrParams::default()))
            .unwrap()
    }

    #[test]
    fn circle_matches_closed_form() {
        let tr = circle();
        for i in 0..200 {
            let t = i as f64 * 0.37;
            let pose = tr.posture(t).unwrap().pose;
            assert_relative_eq!(pose[0], 1.25 * (0.35 * t).sin() + 0.1, epsilon = 1e-12);
            assert_relative_eq!(pose[1], 1.25 * (0.35 * t).cos() + 1.35, epsilon = 1e-12);
        }
        let rate = tr.posture(0.0).unwrap().rate;
        assert_relative_eq!(rate[0], 0.4375, epsilon = 1e-12);
        assert_relative_eq!(rate[1], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn wheel_references_drive_the_posture() {
        let p = WmrParams::default();
        for tr in [
            circle(),
            TrajectorySpec::ConstantWheelRates.build(Some(&p)).unwrap(),
        ] {
            let d = tr.eval(0.0);
            for t in [0.0, 3.0, 11.0] {
                let post = tr.posture(t).unwrap();
                let (xd, yd, pd) = wmr_posture_rate(post.pose[2], &d.qd, &p);
                assert_relative_eq!(post.rate[0], xd, epsilon = 1e-12);
                assert_relative_eq!(post.rate[1], yd, epsilon = 1e-12);
                assert_relative_eq!(post.rate[2], pd, epsilon = 1e-12);
                let h = 1e-6;
                let fd =
                    (tr.posture(t + h).unwrap().pose - tr.posture(t - h).unwrap().pose) / (2.0 * h);
                assert!((fd - &post.rate).amax() < 1e-7);
            }
        }
    }

    #[test]
    fn literal_wheel_angles() {
        let tr = TrajectorySpec::ConstantWheelRates
            .build(Some(&WmrParams::default()))
            .unwrap();
        let d = tr.eval(2.0);
        assert_eq!(d.q.as_slice(), &[6.0, 4.0]);
        assert_eq!(d.qdd.as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn sinusoid_derivatives() {
        let spec = TrajectorySpec::Sinusoid {
            amplitude: vec![0.5, 0.2],
            frequency: vec![1.0, 2.0],
            offset: vec![],
            phase: vec![0.0, 0.3],
        };
        let tr = spec.build(None).unwrap();
        let h = 1e-5;
        for t in [0.0, 0.7, 5.0] {
            let d = tr.eval(t);
            let fd = (tr.eval(t + h).q - tr.eval(t - h).q) / (2.0 * h);
            let fdd = (tr.eval(t + h).qd - tr.eval(t - h).qd) / (2.0 * h);
            assert!((fd - d.qd).amax() < 1e-8);
            assert!((fdd - d.qdd).amax() < 1e-8);
        }
    }

    #[test]
    fn wheeled_reference_needs_geometry() {
        assert!(TrajectorySpec::Circle.build(None).is_err());
        let bad = TrajectorySpec::Sinusoid {
            amplitude: vec![1.0],
            frequency: vec![],
            offset: vec![],
            phase: vec![],
        };
        assert!(bad.build(None).is_err());
    }
}
