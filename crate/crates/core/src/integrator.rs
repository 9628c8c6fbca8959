//! Fixed-step classical Runge-Kutta integration.

use crate::error::{DftcError, Result};
use crate::scalar::Scalar;

/// One classical RK4 step of `x' = f(x)` with step `h`.
///
/// Any input is held constant over the step by the caller capturing it in
/// `f`.
pub fn rk4_step<T, const N: usize, F>(f: F, x: &[T; N], h: T) -> Result<[T; N]>
where
    T: Scalar,
    F: Fn(&[T; N]) -> Result<[T; N]>,
{
    let half = T::of(0.5);
    let sixth = T::one() / T::of(6.0);
    let two = T::of(2.0);
    let axpy = |a: T, d: &[T; N]| -> [T; N] {
        let mut out = *x;
        for i in 0..N {
            out[i] += a * d[i];
        }
        out
    };
    let k1 = f(x)?;
    let k2 = f(&axpy(half * h, &k1))?;
    let k3 = f(&axpy(half * h, &k2))?;
    let k4 = f(&axpy(h, &k3))?;
    let mut next = *x;
    for i in 0..N {
        next[i] += h * sixth * (k1[i] + two * k2[i] + two * k3[i] + k4[i]);
    }
    if next.iter().any(|v| !v.is_finite()) {
        return Err(DftcError::Divergence {
            context: "rk4 step produced a non-finite state".into(),
            state: next.iter().map(|v| v.to_f64_lossy()).collect(),
        });
    }
    Ok(next)
}

/// `steps` consecutive RK4 steps.
pub fn rk4_integrate<T, const N: usize, F>(f: F, x0: &[T; N], h: T, steps: usize) -> Result<[T; N]>
where
    T: Scalar,
    F: Fn(&[T; N]) -> Result<[T; N]>,
{
    let mut x = *x0;
    for _ in 0..steps {
        x = rk4_step(&f, &x, h)?;
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay_matches_closed_form() {
        let f = |x: &[f64; 1]| Ok([-2.0 * x[0]]);
        let x = rk4_integrate(f, &[1.0], 1e-3, 1000).unwrap();
        assert!((x[0] - (-2.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn rk4_is_exact_for_cubic_polynomials() {
        // x' = 3 t^2 written autonomously with t as a state
        let f = |x: &[f64; 2]| Ok([3.0 * x[1] * x[1], 1.0]);
        let x = rk4_integrate(f, &[0.0, 0.0], 0.25, 8).unwrap();
        assert!((x[0] - 8.0).abs() < 1e-12);
    }

    #[test]
    fn blow_up_is_reported_as_divergence() {
        let f = |x: &[f64; 1]| Ok([x[0] * x[0]]);
        let err = rk4_integrate(f, &[1e200], 1.0, 3).unwrap_err();
        assert!(matches!(err, DftcError::Divergence { .. }));
    }
}
