//! Full-state-feedback baseline: discrete infinite-horizon LQR designed on
//! the sampled plant, and the quadratic trajectory cost it is judged by.

use serde::{Deserialize, Serialize};

use crate::dataset::Trajectory;
use crate::error::{DftcError, Result};
use crate::linalg::Matrix;
use crate::plant::{step_rk4, ControlInput, PlantParams, PlantState, INPUT_DIM, STATE_DIM};
use crate::scalar::Scalar;

/// Diagonal state and input weights of the quadratic cost
/// `∫ xᵀQx + uᵀRu dt`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostWeights {
    #[serde(rename = "Q")]
    pub q: [f64; STATE_DIM],
    #[serde(rename = "R")]
    pub r: [f64; INPUT_DIM],
}

impl Default for CostWeights {
    fn default() -> Self {
        CostWeights {
            q: [5e4, 5e4, 5e2, 1e2, 1e-2, 1e-2],
            r: [1e-5, 1e-5],
        }
    }
}

impl CostWeights {
    pub fn validate(&self) -> Result<()> {
        if self.q.iter().any(|&q| !(q >= 0.0) || !q.is_finite()) {
            return Err(DftcError::InvalidConfig("Q entries must be finite and >= 0".into()));
        }
        if self.r.iter().any(|&r| !(r > 0.0) || !r.is_finite()) {
            return Err(DftcError::InvalidConfig("R entries must be finite and > 0".into()));
        }
        Ok(())
    }

    pub fn scaled(&self, c: f64) -> Self {
        CostWeights {
            q: self.q.map(|v| v * c),
            r: self.r.map(|v| v * c),
        }
    }

    /// `xᵀQx + uᵀRu`.
    pub fn stage(&self, x: &[f64; STATE_DIM], u: &[f64; INPUT_DIM]) -> f64 {
        let sx: f64 = self.q.iter().zip(x).map(|(q, v)| q * v * v).sum();
        let su: f64 = self.r.iter().zip(u).map(|(r, v)| r * v * v).sum();
        sx + su
    }
}

/// Sampled-data model `x⁺ = A x + B u` around the origin.
#[derive(Clone, Debug)]
pub struct LinearizedPlant<T: Scalar> {
    pub a: Matrix<T>,
    pub b: Matrix<T>,
    pub h: T,
}

/// Central-difference Jacobians of the one-step RK4 map at the origin.
pub fn linearize<T: Scalar>(plant: &PlantParams<T>, h: T) -> Result<LinearizedPlant<T>> {
    linearize_with_delta(plant, h, T::of(1e-6))
}

pub fn linearize_with_delta<T: Scalar>(
    plant: &PlantParams<T>,
    h: T,
    delta: T,
) -> Result<LinearizedPlant<T>> {
    plant.validate()?;
    let two_delta = delta + delta;
    let mut a = Matrix::zeros(STATE_DIM, STATE_DIM);
    for j in 0..STATE_DIM {
        let mut xp = PlantState::zero();
        let mut xm = PlantState::zero();
        xp.0[j] = delta;
        xm.0[j] = -delta;
        let fp = step_rk4(plant, &xp, &ControlInput::zero(), h)?;
        let fm = step_rk4(plant, &xm, &ControlInput::zero(), h)?;
        let col: Vec<T> = (0..STATE_DIM).map(|i| (fp.0[i] - fm.0[i]) / two_delta).collect();
        a.set_column(j, &col);
    }
    let mut b = Matrix::zeros(STATE_DIM, INPUT_DIM);
    for j in 0..INPUT_DIM {
        let mut up = ControlInput::zero();
        let mut um = ControlInput::zero();
        up.0[j] = delta;
        um.0[j] = -delta;
        let fp = step_rk4(plant, &PlantState::zero(), &up, h)?;
        let fm = step_rk4(plant, &PlantState::zero(), &um, h)?;
        let col: Vec<T> = (0..STATE_DIM).map(|i| (fp.0[i] - fm.0[i]) / two_delta).collect();
        b.set_column(j, &col);
    }
    Ok(LinearizedPlant { a, b, h })
}

/// Stationary Riccati solution and the associated feedback gain.
#[derive(Clone, Debug)]
pub struct LqrGain<T: Scalar> {
    /// `u = −K x`.
    pub k: Matrix<T>,
    pub p: Matrix<T>,
    /// `‖P − Ric(P)‖∞` at the returned `P`.
    pub residual: T,
    pub iterations: usize,
    pub spectral_radius: T,
}

/// One application of the discrete Riccati map, returning `(Ric(P), K(P))`.
fn riccati_map<T: Scalar>(
    a: &Matrix<T>,
    b: &Matrix<T>,
    q: &Matrix<T>,
    r: &Matrix<T>,
    p: &Matrix<T>,
) -> Result<(Matrix<T>, Matrix<T>)> {
    let at = a.transpose();
    let bt = b.transpose();
    let pa = p * a;
    let pb = p * b;
    let s = r + &(&bt * &pb);
    let k = &s.inverse()? * &(&bt * &pa);
    let next = &(q + &(&at * &pa)) - &(&(&at * &pb) * &k);
    Ok((next.symmetrized(), k))
}

/// Discrete algebraic Riccati equation by fixed-point iteration of
/// `P ← Q + AᵀPA − AᵀPB(R + BᵀPB)⁻¹BᵀPA`, starting from `P = Q`.
///
/// Stops once the largest elementwise change drops below `tol`.
pub fn solve_dare<T: Scalar>(
    a: &Matrix<T>,
    b: &Matrix<T>,
    q: &Matrix<T>,
    r: &Matrix<T>,
    tol: T,
    max_iter: usize,
) -> Result<LqrGain<T>> {
    let n = a.rows();
    if a.cols() != n || b.rows() != n || q.rows() != n || q.cols() != n || r.rows() != b.cols() || r.cols() != b.cols() {
        return Err(DftcError::Shape("inconsistent Riccati operand shapes".into()));
    }
    let mut p = q.clone();
    let mut change = T::infinity();
    let mut iterations = 0;
    while iterations < max_iter {
        let (next, _) = riccati_map(a, b, q, r, &p)?;
        if !next.is_finite() {
            return Err(DftcError::numeric("riccati iterate"));
        }
        change = next.max_abs_diff(&p);
        p = next;
        iterations += 1;
        if change < tol {
            break;
        }
    }
    if !(change < tol) {
        return Err(DftcError::NonConvergence {
            iterations,
            residual: change.to_f64_lossy(),
        });
    }
    let (ric, k) = riccati_map(a, b, q, r, &p)?;
    let residual = ric.max_abs_diff(&p);
    let closed = a - &(b * &k);
    let spectral_radius = closed.spectral_radius()?;
    if !(spectral_radius < T::one()) {
        return Err(DftcError::Unstable {
            spectral_radius: spectral_radius.to_f64_lossy(),
        });
    }
    Ok(LqrGain {
        k,
        p,
        residual,
        iterations,
        spectral_radius,
    })
}

/// LQR for the sampled plant. The per-step cost is `(xᵀQx + uᵀRu)·h`, the
/// rectangle-rule discretization used by [`trajectory_cost`], so `xᵀPx` is
/// the predicted cost-to-go in the same units.
pub fn solve_riccati<T: Scalar>(
    lin: &LinearizedPlant<T>,
    w: &CostWeights,
    tol: T,
    max_iter: usize,
) -> Result<LqrGain<T>> {
    w.validate()?;
    let h = lin.h.to_f64_lossy();
    let q = Matrix::from_diag(&w.q.map(|v| T::of(v * h)));
    let r = Matrix::from_diag(&w.r.map(|v| T::of(v * h)));
    solve_dare(&lin.a, &lin.b, &q, &r, tol, max_iter)
}

/// `u = sat(−K x)`.
pub fn baseline_policy<T: Scalar>(
    gain: &LqrGain<T>,
    plant: &PlantParams<T>,
    x: &PlantState<T>,
) -> ControlInput<T> {
    let kx = gain.k.mul_vec(&x.0);
    plant.saturate(ControlInput([-kx[0], -kx[1]]))
}

/// Rectangle-rule cost `Σₖ (xₖᵀQxₖ + uₖᵀRuₖ)·h`.
pub fn cost_of(
    states: &[[f64; STATE_DIM]],
    inputs: &[[f64; INPUT_DIM]],
    h: f64,
    w: &CostWeights,
) -> Result<f64> {
    if states.is_empty() {
        return Err(DftcError::InvalidInput("empty trajectory".into()));
    }
    if states.len() != inputs.len() {
        return Err(DftcError::InvalidInput(format!(
            "{} states but {} inputs",
            states.len(),
            inputs.len()
        )));
    }
    Ok(states
        .iter()
        .zip(inputs)
        .map(|(x, u)| w.stage(x, u) * h)
        .sum())
}

pub fn trajectory_cost(traj: &Trajectory, w: &CostWeights) -> Result<f64> {
    cost_of(&traj.states, &traj.inputs, traj.h, w)
}

/// Gain designed for the default sampling and weights, as the pipeline uses
/// it.
pub fn design<T: Scalar>(
    plant: &PlantParams<T>,
    h: T,
    w: &CostWeights,
    tol: T,
    max_iter: usize,
) -> Result<LqrGain<T>> {
    let lin = linearize(plant, h)?;
    solve_riccati(&lin, w, tol, max_iter)
}

/// JSON view of a gain for inspection.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct GainExport {
    pub K: Vec<Vec<f64>>,
    pub P: Vec<Vec<f64>>,
    pub residual: f64,
}

impl<T: Scalar> LqrGain<T> {
    pub fn export(&self) -> GainExport {
        let f = |m: &Matrix<T>| {
            m.to_rows()
                .into_iter()
                .map(|r| r.into_iter().map(|v| v.to_f64_lossy()).collect())
                .collect()
        };
        GainExport {
            K: f(&self.k),
            P: f(&self.p),
            residual: self.residual.to_f64_lossy(),
        }
    }
}
