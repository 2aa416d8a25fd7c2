//! Delayed error-system assembly, Razumikhin delay margin, and the ultimate
//! bounds / reaching time of the adaptive-robust closed loop.
//!
//! With tracking error `e = [e1; ė1]` the delayed error dynamics read
//! `ė = A1 e + B1 e_h + B(σ - Δu_h)` where `A1 = [[0, I], [0, 0]]`,
//! `B1 = [[0, 0], [-K1, -K2]]` and `B = [0; I]`. The delay-free part
//! `A = A1 + B1` is Hurwitz for any SPD `K1, K2`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, LinalgError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StabilityError {
    #[error("invalid gains: {0}")]
    InvalidGains(String),
    #[error("invalid bound parameters: {0}")]
    InvalidBoundParams(String),
    #[error("delay too large for bound: min eigenvalue of Q - hE is {min_eig:e}")]
    DelayTooLarge { min_eig: f64 },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

pub type Result<T> = std::result::Result<T, StabilityError>;

/// Design gains of the outer loop plus the Razumikhin scalars.
#[derive(Debug, Clone, PartialEq)]
pub struct GainSet {
    pub k1: DMatrix<f64>,
    pub k2: DMatrix<f64>,
    /// Lyapunov weight, `2n x 2n`.
    pub q: DMatrix<f64>,
    /// Razumikhin factor, `r > 1`.
    pub r: f64,
    pub beta: f64,
}

impl GainSet {
    /// `K1 = k1·I`, `K2 = k2·I`, `Q = q·I` on `n` joints.
    pub fn scalar(n: usize, k1: f64, k2: f64, q: f64, r: f64, beta: f64) -> Self {
        GainSet {
            k1: DMatrix::identity(n, n) * k1,
            k2: DMatrix::identity(n, n) * k2,
            q: DMatrix::identity(2 * n, 2 * n) * q,
            r,
            beta,
        }
    }

    pub fn dim(&self) -> usize {
        self.k1.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.k1.nrows();
        let bad = |msg: String| Err(StabilityError::InvalidGains(msg));
        if n == 0 || self.k1.ncols() != n {
            return bad(format!(
                "K1 must be square and nonempty, got {}x{}",
                n,
                self.k1.ncols()
            ));
        }
        if self.k2.shape() != (n, n) {
            return bad(format!("K2 must be {n}x{n}"));
        }
        if self.q.shape() != (2 * n, 2 * n) {
            return bad(format!("Q must be {0}x{0}", 2 * n));
        }
        for (name, m) in [("K1", &self.k1), ("K2", &self.k2), ("Q", &self.q)] {
            let min = linalg::min_eig_symmetric(m)
                .map_err(|e| StabilityError::InvalidGains(format!("{name}: {e}")))?;
            if !(min > 0.0) {
                return bad(format!(
                    "{name} must be positive definite (min eigenvalue {min:e})"
                ));
            }
        }
        if !(self.r > 1.0) || !self.r.is_finite() {
            return bad(format!("r must exceed 1, got {}", self.r));
        }
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return bad(format!("beta must be positive, got {}", self.beta));
        }
        Ok(())
    }
}

/// Matrices of the delayed error dynamics.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorSystem {
    pub a1: DMatrix<f64>,
    pub b1: DMatrix<f64>,
    pub a: DMatrix<f64>,
    /// Input map `[0; I]`, `2n x n`.
    pub b: DMatrix<f64>,
    pub p: DMatrix<f64>,
    pub e: DMatrix<f64>,
}

impl ErrorSystem {
    pub fn dim(&self) -> usize {
        self.b.ncols()
    }

    /// `BᵀP`, the `n x 2n` map from tracking error to sliding variable.
    pub fn sliding_map(&self) -> DMatrix<f64> {
        self.b.transpose() * &self.p
    }
}

/// Assembles `A1, B1, A, B`, solves for `P`, and builds
/// `E = βPB1(A1P⁻¹A1ᵀ + B1P⁻¹B1ᵀ + P⁻¹)B1ᵀP + 2(r/β)P`.
pub fn build_error_system(g: &GainSet) -> Result<ErrorSystem> {
    g.validate()?;
    let n = g.dim();
    let eye = DMatrix::<f64>::identity(n, n);

    let mut a1 = DMatrix::<f64>::zeros(2 * n, 2 * n);
    a1.view_mut((0, n), (n, n)).copy_from(&eye);
    let mut b1 = DMatrix::<f64>::zeros(2 * n, 2 * n);
    b1.view_mut((n, 0), (n, n)).copy_from(&(-&g.k1));
    b1.view_mut((n, n), (n, n)).copy_from(&(-&g.k2));
    let a = &a1 + &b1;
    let mut b = DMatrix::<f64>::zeros(2 * n, n);
    b.view_mut((n, 0), (n, n)).copy_from(&eye);

    assert!(
        linalg::is_hurwitz(&a),
        "A1 + B1 must be Hurwitz for SPD K1, K2"
    );
    let p = linalg::solve_lyapunov(&a, &g.q)?;
    let p_inv = linalg::invert(&p)?;

    let inner = &a1 * &p_inv * a1.transpose() + &b1 * &p_inv * b1.transpose() + &p_inv;
    let pb1 = &p * &b1;
    let e = &pb1 * inner * pb1.transpose() * g.beta + &p * (2.0 * g.r / g.beta);
    let e = (&e + e.transpose()) * 0.5;

    Ok(ErrorSystem { a1, b1, a, b, p, e })
}

/// Largest delay `h` with `λ_min(Q) > h‖E‖`, i.e. `λ_min(Q)/‖E‖` in seconds.
pub fn delay_margin(g: &GainSet) -> Result<f64> {
    let sys = build_error_system(g)?;
    Ok(margin_of(g, &sys)?)
}

fn margin_of(g: &GainSet, sys: &ErrorSystem) -> std::result::Result<f64, LinalgError> {
    Ok(linalg::min_eig_symmetric(&g.q)? / linalg::spectral_norm(&sys.e))
}

/// Whether a constant delay bound `h` satisfies `λ_min(Q) > h‖E‖`.
pub fn check_feasibility(g: &GainSet, h: f64) -> Result<bool> {
    if !(h >= 0.0) {
        return Err(StabilityError::InvalidGains(format!(
            "delay must be nonnegative, got {h}"
        )));
    }
    let sys = build_error_system(g)?;
    let lhs = linalg::min_eig_symmetric(&g.q)?;
    Ok(lhs > h * linalg::spectral_norm(&sys.e))
}

/// The six sign/boundary-layer regimes of the switching law and gain adaptation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundCase {
    /// `ĉ > γ`, `‖s‖ ≥ ε`, `sᵀṡ > 0`
    GrowingOutside = 1,
    /// `ĉ > γ`, `‖s‖ ≥ ε`, `sᵀṡ < 0`
    ShrinkingOutside = 2,
    /// `ĉ ≤ γ`, `‖s‖ ≥ ε`
    FloorOutside = 3,
    /// `ĉ > γ`, `‖s‖ < ε`, `sᵀṡ > 0`
    GrowingInside = 4,
    /// `ĉ > γ`, `‖s‖ < ε`, `sᵀṡ < 0`
    ShrinkingInside = 5,
    /// `ĉ ≤ γ`, `‖s‖ < ε`
    FloorInside = 6,
}

impl BoundCase {
    pub const ALL: [BoundCase; 6] = [
        BoundCase::GrowingOutside,
        BoundCase::ShrinkingOutside,
        BoundCase::FloorOutside,
        BoundCase::GrowingInside,
        BoundCase::ShrinkingInside,
        BoundCase::FloorInside,
    ];

    pub fn id(self) -> u8 {
        self as u8
    }
}

impl TryFrom<u8> for BoundCase {
    type Error = StabilityError;

    fn try_from(id: u8) -> Result<Self> {
        BoundCase::ALL
            .get((id as usize).wrapping_sub(1))
            .copied()
            .ok_or_else(|| {
                StabilityError::InvalidBoundParams(format!("case id must be 1..=6, got {id}"))
            })
    }
}

/// Scalars entering the ultimate bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundParams {
    /// Assumed bound on the lumped uncertainty `‖σ‖ ≤ c`.
    pub c: f64,
    /// Bound on the integrated delay residue.
    pub big_gamma: f64,
    /// `‖Δu(t) - Δu_h‖`.
    pub theta_norm: f64,
    pub alpha: f64,
    pub epsilon: f64,
    pub gamma: f64,
    pub c_hat: f64,
    /// Delay in seconds.
    pub h: f64,
}

impl BoundParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("c", self.c),
            ("Gamma", self.big_gamma),
            ("theta_norm", self.theta_norm),
            ("h", self.h),
        ];
        for (name, v) in fields {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(StabilityError::InvalidBoundParams(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        for (name, v) in [
            ("epsilon", self.epsilon),
            ("gamma", self.gamma),
            ("c_hat", self.c_hat),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(StabilityError::InvalidBoundParams(format!(
                    "{name} must be finite and > 0, got {v}"
                )));
            }
        }
        if !(self.alpha > 1.0) || !self.alpha.is_finite() {
            return Err(StabilityError::InvalidBoundParams(format!(
                "alpha must exceed 1, got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// `Ψ = Q - hE`.
pub fn psi(g: &GainSet, sys: &ErrorSystem, h: f64) -> DMatrix<f64> {
    &g.q - &sys.e * h
}

/// Ultimate bound `ϖ` on `‖e‖` for the given regime.
pub fn ultimate_bound(case: BoundCase, g: &GainSet, bp: &BoundParams) -> Result<f64> {
    bp.validate()?;
    let sys = build_error_system(g)?;
    let lam = linalg::min_eig_symmetric(&psi(g, &sys, bp.h))?;
    if !(lam > 0.0) {
        return Err(StabilityError::DelayTooLarge { min_eig: lam });
    }
    let btp = linalg::spectral_norm(&sys.sliding_map());
    Ok(bound_formula(case, lam, btp, bp))
}

/// The bound formulas given `λ_min(Ψ)` and `‖BᵀP‖`.
pub fn bound_formula(case: BoundCase, lam_psi: f64, btp_norm: f64, bp: &BoundParams) -> f64 {
    let BoundParams {
        c,
        big_gamma,
        theta_norm: th,
        alpha,
        epsilon,
        gamma,
        c_hat,
        ..
    } = *bp;
    let outer = |mu: f64, gam: f64| mu + (2.0 * gam / lam_psi + mu * mu).sqrt();
    let inner = |sq: f64, gam: f64| {
        ((4.0 * alpha * c_hat * gam + epsilon * sq * sq) / (2.0 * alpha * c_hat * lam_psi)).sqrt()
    };
    match case {
        BoundCase::GrowingOutside => outer(th * btp_norm / lam_psi, big_gamma),
        BoundCase::ShrinkingOutside => {
            let mu = (2.0 * c - (alpha + 1.0) * c_hat + th).max(0.0) * btp_norm / lam_psi;
            outer(mu, big_gamma)
        }
        BoundCase::FloorOutside => {
            let mu = (c - alpha * c_hat + th).max(0.0) / lam_psi;
            outer(mu, big_gamma + gamma * gamma)
        }
        BoundCase::GrowingInside => inner(c_hat + th, big_gamma),
        BoundCase::ShrinkingInside => inner((2.0 * c - c_hat + th).max(0.0), big_gamma),
        BoundCase::FloorInside => inner(c + th, big_gamma + gamma * gamma),
    }
}

/// Upper bound on the time to reach the ball of radius `bound` from `‖e(t0)‖`
/// when `V̇ ≤ -c0`.
pub fn reaching_time(e0_norm: f64, bound: f64, c0: f64) -> Result<f64> {
    if !(c0 > 0.0) {
        return Err(StabilityError::InvalidBoundParams(format!(
            "c0 must be positive, got {c0}"
        )));
    }
    Ok(((e0_norm - bound) / c0).max(0.0))
}

/// Margin, feasibility and (optionally) the six ultimate bounds of a gain set.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub p: DMatrix<f64>,
    pub e: DMatrix<f64>,
    pub e_norm: f64,
    pub lambda_min_q: f64,
    pub margin: f64,
    /// Delay the feasibility check and bounds were evaluated at.
    pub h: f64,
    pub feasible: bool,
    /// `ϖ1..ϖ6`, or the reason they do not exist.
    pub bounds: Option<std::result::Result<[f64; 6], StabilityError>>,
}

pub fn bound_report(g: &GainSet, h: f64, bp: Option<&BoundParams>) -> Result<BoundReport> {
    let sys = build_error_system(g)?;
    let lambda_min_q = linalg::min_eig_symmetric(&g.q)?;
    let e_norm = linalg::spectral_norm(&sys.e);
    let bounds = bp.map(|bp| {
        let bp = BoundParams { h, ..*bp };
        let mut out = [0.0; 6];
        for case in BoundCase::ALL {
            out[case.id() as usize - 1] = ultimate_bound(case, g, &bp)?;
        }
        Ok(out)
    });
    Ok(BoundReport {
        margin: lambda_min_q / e_norm,
        feasible: lambda_min_q > h * e_norm,
        p: sys.p,
        e: sys.e,
        e_norm,
        lambda_min_q,
        h,
        bounds,
    })
}
