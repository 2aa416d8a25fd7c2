use serde::{Deserialize, Serialize};

/// Input-delay profile `h(t)` in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "profile", deny_unknown_fields)]
pub enum DelayProfile {
    /// No delay.
    #[default]
    #[serde(rename = "none")]
    Zero,
    /// 20 + 80|sin t| ms
    S1,
    /// 5 + 120|sin 0.1t| ms
    S2,
    /// 60 ms
    S3,
    /// 120 ms
    S4,
    #[serde(rename = "constant")]
    Constant { h0: f64 },
    /// `a + b|sin(ωt)|`
    #[serde(rename = "custom")]
    Custom { a: f64, b: f64, omega: f64 },
}

impl DelayProfile {
    pub fn validate(&self) -> Result<(), String> {
        match *self {
            DelayProfile::Constant { h0 } if !(h0 >= 0.0) || !h0.is_finite() => {
                Err(format!("delay.h0 must be finite and >= 0, got {h0}"))
            }
            DelayProfile::Custom { a, b, omega } => {
                if !(a.is_finite() && b.is_finite() && omega.is_finite()) {
                    return Err("delay.a, delay.b, delay.omega must be finite".into());
                }
                if a + b.min(0.0) < 0.0 {
                    return Err(format!(
                        "delay a + b|sin(wt)| must stay >= 0 (a = {a}, b = {b})"
                    ));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Upper bound of `h(t)` over all `t`.
    pub fn max_delay(&self) -> f64 {
        match *self {
            DelayProfile::Zero => 0.0,
            DelayProfile::S1 => 0.100,
            DelayProfile::S2 => 0.125,
            DelayProfile::S3 => 0.060,
            DelayProfile::S4 => 0.120,
            DelayProfile::Constant { h0 } => h0,
            DelayProfile::Custom { a, b, .. } => a + b.max(0.0),
        }
    }

    /// Lower bound of `h(t)` over all `t`.
    pub fn min_delay(&self) -> f64 {
        match *self {
            DelayProfile::Zero => 0.0,
            DelayProfile::S1 => 0.020,
            DelayProfile::S2 => 0.005,
            DelayProfile::S3 => 0.060,
            DelayProfile::S4 => 0.120,
            DelayProfile::Constant { h0 } => h0,
            DelayProfile::Custom { a, b, .. } => a + b.min(0.0),
        }
    }

    pub fn label(&self) -> String {
        match *self {
            DelayProfile::Zero => "none".into(),
            DelayProfile::S1 => "S1".into(),
            DelayProfile::S2 => "S2".into(),
            DelayProfile::S3 => "S3".into(),
            DelayProfile::S4 => "S4".into(),
            DelayProfile::Constant { h0 } => format!("constant({h0})"),
            DelayProfile::Custom { a, b, omega } => format!("custom({a},{b},{omega})"),
        }
    }
}

/// `h(t)` in seconds.
pub fn delay_at(p: &DelayProfile, t: f64) -> f64 {
    match *p {
        DelayProfile::Zero => 0.0,
        DelayProfile::S1 => 0.020 + 0.080 * t.sin().abs(),
        DelayProfile::S2 => 0.005 + 0.120 * (0.1 * t).sin().abs(),
        DelayProfile::S3 => 0.060,
        DelayProfile::S4 => 0.120,
        DelayProfile::Constant { h0 } => h0,
        DelayProfile::Custom { a, b, omega } => (a + b * (omega * t).sin().abs()).max(0.0),
    }
}
