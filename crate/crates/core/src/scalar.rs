//! Floating-point scalar abstraction shared by the simulation, control and
//! learning code.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Real scalar the numerical core is generic over: `f32` or `f64`.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Short name used in model metadata.
    const NAME: &'static str;

    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 is representable in every Scalar")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// `c = alpha * a * b + beta * c` on strided row/column layouts.
    ///
    /// `a` is `m x k`, `b` is `k x n`, `c` is `m x n`; each operand is given
    /// with its row stride and column stride, so transposed views cost
    /// nothing.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        a_strides: (usize, usize),
        b: &[Self],
        b_strides: (usize, usize),
        beta: Self,
        c: &mut [Self],
        c_strides: (usize, usize),
    );

    /// Logistic function applied in place.
    fn sigmoid_slice(xs: &mut [Self]) {
        for x in xs {
            *x = Self::one() / (Self::one() + (-*x).exp());
        }
    }

    /// Hyperbolic tangent applied in place.
    fn tanh_slice(xs: &mut [Self]) {
        for x in xs {
            *x = x.tanh();
        }
    }
}

fn check_extent(len: usize, rows: usize, cols: usize, strides: (usize, usize)) {
    if rows == 0 || cols == 0 {
        return;
    }
    let last = (rows - 1) * strides.0 + (cols - 1) * strides.1;
    assert!(last < len, "gemm operand out of bounds: {last} >= {len}");
}

macro_rules! impl_scalar {
    ($t:ty, $name:literal, $kernel:path $(, $extra:item)*) => {
        impl Scalar for $t {
            const NAME: &'static str = $name;

            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: &[Self],
                a_strides: (usize, usize),
                b: &[Self],
                b_strides: (usize, usize),
                beta: Self,
                c: &mut [Self],
                c_strides: (usize, usize),
            ) {
                check_extent(a.len(), m, k, a_strides);
                check_extent(b.len(), k, n, b_strides);
                check_extent(c.len(), m, n, c_strides);
                if m == 0 || n == 0 {
                    return;
                }
                // SAFETY: every index touched by the kernel lies inside the
                // slices, checked above.
                unsafe {
                    $kernel(
                        m,
                        k,
                        n,
                        alpha,
                        a.as_ptr(),
                        a_strides.0 as isize,
                        a_strides.1 as isize,
                        b.as_ptr(),
                        b_strides.0 as isize,
                        b_strides.1 as isize,
                        beta,
                        c.as_mut_ptr(),
                        c_strides.0 as isize,
                        c_strides.1 as isize,
                    );
                }
            }

            $($extra)*
        }
    };
}

/// `e^x` for `f32` without branches so loops over it vectorize: range
/// reduction by `ln 2` and a degree-6 polynomial (relative error ~1e-7).
#[inline(always)]
fn exp_f32(x: f32) -> f32 {
    const ROUND: f32 = 12_582_912.0; // 1.5·2²³
    let x = x.max(-87.0).min(88.0);
    // the low mantissa bits of `shifted` hold round(x·log2 e) as an integer
    let shifted = x * std::f32::consts::LOG2_E + ROUND;
    let n = shifted - ROUND;
    let r = x - n * 0.693_359_4 + n * 2.121_944_4e-4;
    let mut p = 1.987_569_1e-4_f32;
    p = p * r + 1.398_199_9e-3;
    p = p * r + 8.333_452e-3;
    p = p * r + 4.166_579_6e-2;
    p = p * r + 1.666_666_5e-1;
    p = p * r + 5.000_000_1e-1;
    let e = p * r * r + r + 1.0;
    let k = shifted.to_bits().wrapping_sub(ROUND.to_bits()).wrapping_add(127);
    e * f32::from_bits(k << 23)
}

#[inline(always)]
fn sigmoid_f32(xs: &mut [f32]) {
    for x in xs {
        *x = 1.0 / (1.0 + exp_f32(-*x));
    }
}

#[inline(always)]
fn tanh_f32(xs: &mut [f32]) {
    for x in xs {
        *x = 1.0 - 2.0 / (1.0 + exp_f32(2.0 * *x));
    }
}

/// Runs an elementwise kernel with 256-bit vectors when the CPU has them.
/// No FMA contraction happens either way, so both paths agree bit for bit.
macro_rules! dispatch {
    ($kernel:ident, $xs:expr) => {{
        #[cfg(target_arch = "x86_64")]
        {
            #[target_feature(enable = "avx2")]
            unsafe fn wide(xs: &mut [f32]) {
                $kernel(xs)
            }
            if std::arch::is_x86_feature_detected!("avx2") {
                // SAFETY: the feature was detected at runtime.
                unsafe { wide($xs) };
                return;
            }
        }
        $kernel($xs)
    }};
}

impl_scalar!(
    f32,
    "f32",
    matrixmultiply::sgemm,
    fn sigmoid_slice(xs: &mut [f32]) {
        dispatch!(sigmoid_f32, xs)
    },
    fn tanh_slice(xs: &mut [f32]) {
        dispatch!(tanh_f32, xs)
    }
);

impl_scalar!(f64, "f64", matrixmultiply::dgemm);

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(m: usize, k: usize, n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for p in 0..k {
                    c[i * n + j] += a[i * k + p] * b[p * n + j];
                }
            }
        }
        c
    }

    #[test]
    fn gemm_matches_naive_product() {
        let a: Vec<f64> = (0..12).map(|i| i as f64 * 0.5 - 2.0).collect();
        let b: Vec<f64> = (0..20).map(|i| (i as f64).sin()).collect();
        let want = naive(3, 4, 5, &a, &b);
        let mut c = vec![0.0; 15];
        f64::gemm(3, 4, 5, 1.0, &a, (4, 1), &b, (5, 1), 0.0, &mut c, (5, 1));
        for (x, y) in c.iter().zip(&want) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn gemm_transposed_view_accumulates() {
        // a stored as 4x3, used as its 3x4 transpose
        let a: Vec<f64> = (0..12).map(|i| i as f64).collect();
        let at: Vec<f64> = (0..12).map(|i| a[(i % 4) * 3 + i / 4]).collect();
        let b: Vec<f64> = (0..8).map(|i| 1.0 + i as f64).collect();
        let want = naive(3, 4, 2, &at, &b);
        let mut c = vec![1.0; 6];
        f64::gemm(3, 4, 2, 2.0, &a, (1, 3), &b, (2, 1), 1.0, &mut c, (2, 1));
        for (x, y) in c.iter().zip(&want) {
            assert!((x - (2.0 * y + 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn f32_activations_track_f64() {
        let xs: Vec<f32> = (0..4001).map(|i| (i as f32 - 2000.0) * 0.025).collect();
        let mut sig = xs.clone();
        let mut th = xs.clone();
        f32::sigmoid_slice(&mut sig);
        f32::tanh_slice(&mut th);
        for ((&x, &s), &t) in xs.iter().zip(&sig).zip(&th) {
            let x = x as f64;
            assert!((s as f64 - 1.0 / (1.0 + (-x).exp())).abs() < 3e-7, "sigmoid({x})");
            assert!((t as f64 - x.tanh()).abs() < 5e-7, "tanh({x})");
        }
        let mut extreme = [-1e30f32, -200.0, 200.0, 1e30];
        f32::tanh_slice(&mut extreme);
        assert_eq!(extreme, [-1.0, -1.0, 1.0, 1.0]);
        let mut extreme = [-1e30f32, 1e30];
        f32::sigmoid_slice(&mut extreme);
        assert!(extreme[0] >= 0.0 && extreme[0] < 1e-37 && extreme[1] == 1.0);
    }

    #[test]
    fn exp_f32_relative_error() {
        for i in -870..=880 {
            let x = i as f32 * 0.1;
            let rel = (exp_f32(x) as f64 / (x as f64).exp() - 1.0).abs();
            assert!(rel < 1e-6, "exp({x}): {rel}");
        }
    }

    #[test]
    fn f32_kernel_agrees_with_f64() {
        let a: Vec<f32> = (0..6).map(|i| i as f32).collect();
        let b: Vec<f32> = (0..6).map(|i| 1.0 - i as f32).collect();
        let mut c = vec![0.0f32; 4];
        f32::gemm(2, 3, 2, 1.0, &a, (3, 1), &b, (2, 1), 0.0, &mut c, (2, 1));
        let a64: Vec<f64> = a.iter().map(|&x| x as f64).collect();
        let b64: Vec<f64> = b.iter().map(|&x| x as f64).collect();
        let want = naive(2, 3, 2, &a64, &b64);
        for (x, y) in c.iter().zip(&want) {
            assert_eq!(*x as f64, *y);
        }
    }
}
