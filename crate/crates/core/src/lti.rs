//! LTI process model, steady-state Kalman covariance and the AoI→MSE map.
//!
//! The sensor runs a Kalman filter locally; once converged its posterior error
//! covariance is `P̄₀`. A receiver holding an update of age `q` predicts forward
//! open-loop, so its error covariance is `f^q(P̄₀)` with `f(X) = A X Aᵀ + Q_w`.
//! The trace of that matrix is the per-slot MSE cost used everywhere else.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;

const SYMMETRY_TOL: f64 = 1e-12;
const PSD_TOL: f64 = 1e-12;
const RANK_TOL: f64 = 1e-9;

/// Default Riccati iteration tolerance (Frobenius norm of successive change).
pub const RICCATI_TOL: f64 = 1e-10;
pub const RICCATI_MAX_ITER: usize = 100_000;

/// Discrete LTI process `x⁺ = A x + w`, `y = C x + v`.
#[derive(Debug, Clone, PartialEq)]
pub struct LtiSystem {
    a: Mat,
    c: Mat,
    qw: Mat,
    qv: Mat,
    sigma0: Mat,
}

impl LtiSystem {
    /// Validates dimensions, noise covariances, observability of `(A, C)` and
    /// reachability of `(A, √Q_w)`.
    pub fn new(a: Mat, c: Mat, qw: Mat, qv: Mat, sigma0: Mat) -> Result<Self> {
        let r = a.nrows();
        if r == 0 || a.ncols() != r {
            return Err(Error::config(
                "system.A",
                format!("must be square and non-empty, got {}x{}", a.nrows(), a.ncols()),
            ));
        }
        if c.ncols() != r || c.nrows() == 0 {
            return Err(Error::config(
                "system.C",
                format!("must have {} columns and at least one row, got {}x{}", r, c.nrows(), c.ncols()),
            ));
        }
        let u = c.nrows();
        check_psd("system.Qw", &qw, r)?;
        check_psd("system.Qv", &qv, u)?;
        check_psd("system.Sigma0", &sigma0, r)?;
        if !is_all_finite(&a) || !is_all_finite(&c) {
            return Err(Error::config("system.A", "entries must be finite"));
        }

        let mut obs = Mat::zeros(u * r, r);
        let mut ca = c.clone();
        for k in 0..r {
            obs.view_mut((k * u, 0), (u, r)).copy_from(&ca);
            ca = &ca * &a;
        }
        if rank(&obs) < r {
            return Err(Error::config("system.C", "(A, C) is not observable"));
        }

        // range(√Q_w) = range(Q_w), so the controllability test can use Q_w.
        let mut ctrb = Mat::zeros(r, r * r);
        let mut aq = qw.clone();
        for k in 0..r {
            ctrb.view_mut((0, k * r), (r, r)).copy_from(&aq);
            aq = &a * &aq;
        }
        if rank(&ctrb) < r {
            return Err(Error::config("system.Qw", "(A, sqrt(Qw)) is not reachable"));
        }

        Ok(Self { a, c, qw, qv, sigma0 })
    }

    /// Builds a system from row-major nested vectors, tagging errors with the
    /// config field they came from.
    pub fn from_rows(
        a: &[Vec<f64>],
        c: &[Vec<f64>],
        qw: &[Vec<f64>],
        qv: &[Vec<f64>],
        sigma0: &[Vec<f64>],
    ) -> Result<Self> {
        Self::new(
            mat_from_rows("system.A", a)?,
            mat_from_rows("system.C", c)?,
            mat_from_rows("system.Qw", qw)?,
            mat_from_rows("system.Qv", qv)?,
            mat_from_rows("system.Sigma0", sigma0)?,
        )
    }

    /// The two-state benchmark process `A = [2.4 0.2; 0.2 0.8]`, `C = [1 1]`,
    /// unit noise covariances and `Σ₀ = I`.
    pub fn benchmark() -> Self {
        Self::new(
            Mat::from_row_slice(2, 2, &[2.4, 0.2, 0.2, 0.8]),
            Mat::from_row_slice(1, 2, &[1.0, 1.0]),
            Mat::identity(2, 2),
            Mat::identity(1, 1),
            Mat::identity(2, 2),
        )
        .expect("benchmark system is valid")
    }

    pub fn a(&self) -> &Mat {
        &self.a
    }
    pub fn c(&self) -> &Mat {
        &self.c
    }
    pub fn qw(&self) -> &Mat {
        &self.qw
    }
    pub fn qv(&self) -> &Mat {
        &self.qv
    }
    pub fn sigma0(&self) -> &Mat {
        &self.sigma0
    }
    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    /// One step of `f(X) = A X Aᵀ + Q_w`.
    pub fn propagate(&self, x: &Mat) -> Mat {
        &self.a * x * self.a.transpose() + &self.qw
    }

    /// One full Kalman prediction + measurement-update cycle applied to a
    /// posterior covariance.
    pub fn kalman_cycle(&self, posterior: &Mat) -> Result<Mat> {
        let prior = self.propagate(posterior);
        let innovation = &self.c * &prior * self.c.transpose() + &self.qv;
        let inv = innovation
            .try_inverse()
            .ok_or_else(|| Error::Domain("innovation covariance is singular".into()))?;
        let gain = &prior * self.c.transpose() * inv;
        let r = self.dim();
        let post = (Mat::identity(r, r) - gain * &self.c) * prior;
        Ok(symmetrize(&post))
    }
}

fn is_all_finite(m: &Mat) -> bool {
    m.iter().all(|v| v.is_finite())
}

fn check_psd(field: &str, m: &Mat, dim: usize) -> Result<()> {
    if m.nrows() != dim || m.ncols() != dim {
        return Err(Error::config(
            field,
            format!("must be {dim}x{dim}, got {}x{}", m.nrows(), m.ncols()),
        ));
    }
    if !is_all_finite(m) {
        return Err(Error::config(field, "entries must be finite"));
    }
    let scale = m.amax().max(1.0);
    if (m - m.transpose()).amax() > SYMMETRY_TOL * scale {
        return Err(Error::config(field, "must be symmetric"));
    }
    let eig = symmetrize(m).symmetric_eigenvalues();
    if eig.iter().any(|&e| e < -PSD_TOL * scale) {
        return Err(Error::config(field, "must be positive semidefinite"));
    }
    Ok(())
}

fn rank(m: &Mat) -> usize {
    let svd = m.clone().svd(false, false);
    let smax = svd.singular_values.max();
    if smax == 0.0 {
        return 0;
    }
    svd.singular_values
        .iter()
        .filter(|&&s| s > RANK_TOL * smax)
        .count()
}

pub(crate) fn symmetrize(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

/// Parses a row-major nested array into a matrix.
pub fn mat_from_rows(field: &str, rows: &[Vec<f64>]) -> Result<Mat> {
    let nrows = rows.len();
    if nrows == 0 {
        return Err(Error::config(field, "matrix has no rows"));
    }
    let ncols = rows[0].len();
    if ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::config(field, "rows must be non-empty and of equal length"));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(Mat::from_row_slice(nrows, ncols, &flat))
}

pub fn mat_to_rows(m: &Mat) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Converged posterior error covariance of the sensor's Kalman filter.
#[derive(Debug, Clone)]
pub struct SteadyStateCov {
    pub pbar0: Mat,
    pub iterations: usize,
    pub residual: f64,
}

/// Iterates the Riccati recursion from `Σ₀` until successive posterior
/// covariances differ by at most `tol` in Frobenius norm.
pub fn kalman_steady_state(sys: &LtiSystem, tol: f64, max_iter: usize) -> Result<SteadyStateCov> {
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("tolerance must be positive, got {tol}")));
    }
    let mut p = sys.sigma0().clone();
    let mut residual = f64::INFINITY;
    for it in 1..=max_iter {
        let next = sys.kalman_cycle(&p)?;
        residual = (&next - &p).norm();
        p = next;
        if !residual.is_finite() {
            break;
        }
        if residual <= tol {
            return Ok(SteadyStateCov {
                pbar0: p,
                iterations: it,
                residual,
            });
        }
    }
    Err(Error::NonConvergence {
        iterations: max_iter,
        residual,
    })
}

/// Largest squared eigenvalue modulus of a square matrix.
pub fn spectral_radius_sq(a: &Mat) -> f64 {
    assert!(a.is_square(), "spectral radius needs a square matrix");
    a.complex_eigenvalues()
        .iter()
        .map(|z| z.norm_sqr())
        .fold(0.0, f64::max)
}

/// `f^q(P̄₀)`; `q = 0` returns the input unchanged.
pub fn age_propagate(pbar0: &Mat, sys: &LtiSystem, q: u32) -> Mat {
    let mut x = pbar0.clone();
    for _ in 0..q {
        x = symmetrize(&sys.propagate(&x));
    }
    x
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostMode {
    /// `Tr(f^q(P̄₀))` at integer ages.
    ExactMatrix,
    /// `Tr(P̄₀) · ρ²^(q−1)`, with `ρ²` a free parameter.
    ScaledExponential,
}

/// Maps an AoI value `q ≥ 1` to its MSE penalty.
#[derive(Debug, Clone, PartialEq)]
pub struct CostModel {
    mode: CostMode,
    rho_sq: f64,
    base_cost: f64,
    /// `traces[n] = Tr(f^n(P̄₀))`, only populated in exact mode.
    traces: Vec<f64>,
}

/// Largest integer age the exact-mode table covers.
pub const EXACT_TABLE_MAX_AGE: u32 = 256;

impl CostModel {
    pub fn scaled(rho_sq: f64, base_cost: f64) -> Result<Self> {
        if !(rho_sq >= 1.0) || !rho_sq.is_finite() {
            return Err(Error::config(
                "scheme.cost.rho_sq",
                format!("must be finite and >= 1 for a nondecreasing penalty, got {rho_sq}"),
            ));
        }
        if !(base_cost > 0.0) || !base_cost.is_finite() {
            return Err(Error::config(
                "scheme.cost.base_cost",
                format!("must be positive, got {base_cost}"),
            ));
        }
        Ok(Self {
            mode: CostMode::ScaledExponential,
            rho_sq,
            base_cost,
            traces: Vec::new(),
        })
    }

    pub fn exact(sys: &LtiSystem, pbar0: &Mat) -> Self {
        let mut traces = Vec::with_capacity(EXACT_TABLE_MAX_AGE as usize + 1);
        let mut x = pbar0.clone();
        traces.push(x.trace());
        for _ in 0..EXACT_TABLE_MAX_AGE {
            x = symmetrize(&sys.propagate(&x));
            traces.push(x.trace());
        }
        Self {
            mode: CostMode::ExactMatrix,
            rho_sq: spectral_radius_sq(sys.a()),
            base_cost: pbar0.trace(),
            traces,
        }
    }

    pub fn mode(&self) -> CostMode {
        self.mode
    }
    pub fn rho_sq(&self) -> f64 {
        self.rho_sq
    }
    pub fn base_cost(&self) -> f64 {
        self.base_cost
    }

    /// MSE penalty at age `q`.
    ///
    /// Exact mode interpolates geometrically between neighbouring integer
    /// ages: `c(n + φ) = T_n^(1−φ) · T_{n+1}^φ`. The local growth ratio
    /// `T_{n+1}/T_n` tends to `ρ²(A)`, and this form stays continuous and
    /// nondecreasing where a fixed `ρ²^φ` factor would overshoot `T_{n+1}`.
    pub fn cost(&self, q: f64) -> Result<f64> {
        if !(q >= 1.0) || !q.is_finite() {
            return Err(Error::Domain(format!("AoI must be >= 1, got {q}")));
        }
        match self.mode {
            CostMode::ScaledExponential => Ok(self.base_cost * self.rho_sq.powf(q - 1.0)),
            CostMode::ExactMatrix => {
                let whole = q.floor();
                let frac = q - whole;
                let n = whole as usize;
                if n >= self.traces.len() || (frac > 0.0 && n + 1 >= self.traces.len()) {
                    return Err(Error::Domain(format!(
                        "AoI {q} beyond the exact cost table (max {EXACT_TABLE_MAX_AGE})"
                    )));
                }
                if frac == 0.0 {
                    Ok(self.traces[n])
                } else {
                    let lo = self.traces[n];
                    let hi = self.traces[n + 1];
                    Ok(lo.powf(1.0 - frac) * hi.powf(frac))
                }
            }
        }
    }
}

/// MSE penalty computed from first principles (no cached table). Integer
/// ages in exact mode evaluate `Tr(f^q(P̄₀))` directly.
pub fn mse_cost(model: &CostModel, sys: &LtiSystem, pbar0: &Mat, q: f64) -> Result<f64> {
    if !(q >= 1.0) || !q.is_finite() {
        return Err(Error::Domain(format!("AoI must be >= 1, got {q}")));
    }
    match model.mode {
        CostMode::ScaledExponential => model.cost(q),
        CostMode::ExactMatrix => {
            let n = q.floor();
            let lo = age_propagate(pbar0, sys, n as u32).trace();
            if q == n {
                Ok(lo)
            } else {
                let hi = age_propagate(pbar0, sys, n as u32 + 1).trace();
                let frac = q - n;
                Ok(lo.powf(1.0 - frac) * hi.powf(frac))
            }
        }
    }
}
