use std::io::{self, Write};

use nalgebra::DVector;

/// Closed-loop time series sampled at the control instants.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trace {
    pub dim: usize,
    pub controller: String,
    pub t: Vec<f64>,
    pub q: Vec<DVector<f64>>,
    pub qdot: Vec<DVector<f64>>,
    pub q_des: Vec<DVector<f64>>,
    pub qdot_des: Vec<DVector<f64>>,
    pub qddot_des: Vec<DVector<f64>>,
    pub e1: Vec<DVector<f64>>,
    pub e1_dot: Vec<DVector<f64>>,
    pub tau_cmd: Vec<DVector<f64>>,
    pub tau_app: Vec<DVector<f64>>,
    /// Outer-loop acceleration command; NaN for controllers without one.
    pub u: Vec<DVector<f64>>,
    pub delta_u: Vec<DVector<f64>>,
    pub c_hat: Vec<f64>,
    pub s_norm: Vec<f64>,
    pub h: Vec<f64>,
    /// Task-space output and its reference; empty without a kinematic state.
    pub output: Vec<DVector<f64>>,
    pub output_des: Vec<DVector<f64>>,
    pub final_time: f64,
    pub final_q: DVector<f64>,
    pub final_qdot: DVector<f64>,
    pub final_aux: DVector<f64>,
    pub warnings: Vec<String>,
}

impl Trace {
    pub fn new(dim: usize, controller: &str) -> Self {
        Trace {
            dim,
            controller: controller.to_string(),
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn has_output(&self) -> bool {
        !self.output.is_empty()
    }

    /// Errors used for scoring: planar position error `(x, y)` when a task
    /// output exists, otherwise the joint error `e1`.
    pub fn metric_errors(&self) -> Vec<DVector<f64>> {
        if self.has_output() {
            self.output
                .iter()
                .zip(&self.output_des)
                .map(|(y, yd)| (yd - y).rows(0, 2).into_owned())
                .collect()
        } else {
            self.e1.clone()
        }
    }

    /// `‖[e1; ė1]‖` per sample.
    pub fn error_norms(&self) -> Vec<f64> {
        self.e1
            .iter()
            .zip(&self.e1_dot)
            .map(|(a, b)| (a.norm_squared() + b.norm_squared()).sqrt())
            .collect()
    }

    pub fn write_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        let n = self.dim;
        let mut header = vec!["t".to_string()];
        for name in ["q", "qd", "e1", "tau_cmd", "tau_app"] {
            header.extend((0..n).map(|i| format!("{name}_{i}")));
        }
        header.extend(["c_hat", "s_norm", "h"].map(String::from));
        writeln!(w, "{}", header.join(","))?;
        for k in 0..self.len() {
            let mut row = vec![fmt(self.t[k])];
            for series in [&self.q, &self.q_des, &self.e1, &self.tau_cmd, &self.tau_app] {
                row.extend(series[k].iter().map(|x| fmt(*x)));
            }
            row.extend([self.c_hat[k], self.s_norm[k], self.h[k]].map(fmt));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    /// `t,x,y,phi,x_des,y_des,phi_des`; nothing is written without a task output.
    pub fn write_posture_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        if !self.has_output() {
            return Ok(());
        }
        writeln!(w, "t,x,y,phi,x_des,y_des,phi_des")?;
        for k in 0..self.len() {
            let mut row = vec![fmt(self.t[k])];
            row.extend(self.output[k].iter().map(|x| fmt(*x)));
            row.extend(self.output_des[k].iter().map(|x| fmt(*x)));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

fn fmt(x: f64) -> String {
    format!("{x:.8e}")
}
