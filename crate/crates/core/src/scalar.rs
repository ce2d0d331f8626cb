//! Scalar abstraction shared by the numeric core.
//!
//! Everything that does arithmetic is generic over [`Scalar`], implemented for
//! `f32` and `f64`. The matrix product is routed through `matrixmultiply` so
//! batched network passes stay fast for either width.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// `c = alpha * a(m×k) * b(k×n) + beta * c`, all row-major and contiguous.
    fn gemm(m: usize, k: usize, n: usize, alpha: Self, a: &[Self], b: &[Self], beta: Self, c: &mut [Self]) {
        Self::gemm_strided(m, k, n, alpha, a, (k, 1), b, (n, 1), beta, c);
    }

    /// General product with explicit (row, column) strides for `a` and `b`;
    /// `c` is row-major contiguous.
    #[allow(clippy::too_many_arguments)]
    fn gemm_strided(
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
    );

    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Elementwise `tanh`, the hot loop of every network pass.
    fn tanh_in_place(xs: &mut [Self]);

    fn uniform<R: Rng + ?Sized>(rng: &mut R, low: Self, high: Self) -> Self {
        let u: f64 = rng.gen();
        low + (high - low) * lit(u)
    }
}

/// Converts an `f64` literal into the working scalar.
#[inline]
pub fn lit<T: Scalar>(x: f64) -> T {
    T::from_f64(x).expect("literal representable in scalar type")
}

#[inline]
pub fn to_f64<T: Scalar>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

fn check_gemm_extent(len: usize, rows: usize, cols: usize, strides: (usize, usize), what: &str) {
    if rows == 0 || cols == 0 {
        return;
    }
    let last = (rows - 1) * strides.0 + (cols - 1) * strides.1;
    assert!(last < len, "gemm operand `{what}` too short: need index {last}, have {len}");
}

fn tanh_each<T: Float>(xs: &mut [T]) {
    for x in xs {
        *x = x.tanh();
    }
}

/// `tanh` through `exp(−2|x|)`, written branch-free so the loop vectorizes.
/// Absolute error stays within a few ulps of 1 across the whole line.
fn tanh_f64_slice(xs: &mut [f64]) {
    const INV_LN2: f64 = std::f64::consts::LOG2_E;
    const LN2_HI: f64 = 6.931_471_803_691_238_2e-1;
    const LN2_LO: f64 = 1.908_214_929_270_587_7e-10;
    // Adding and subtracting 1.5·2^52 rounds to the nearest integer.
    const ROUND: f64 = 6_755_399_441_055_744.0;
    for x in xs {
        let v = *x;
        let y = -2.0 * v.abs().min(20.0);
        let shifted = y * INV_LN2 + ROUND;
        let k = shifted - ROUND;
        let r = y - k * LN2_HI - k * LN2_LO;
        // exp(r) for |r| ≤ ln2/2 by its Taylor series through r¹².
        let mut p = 1.0 / 479_001_600.0;
        for c in [
            1.0 / 39_916_800.0,
            1.0 / 3_628_800.0,
            1.0 / 362_880.0,
            1.0 / 40_320.0,
            1.0 / 5_040.0,
            1.0 / 720.0,
            1.0 / 120.0,
            1.0 / 24.0,
            1.0 / 6.0,
            0.5,
            1.0,
            1.0,
        ] {
            p = p * r + c;
        }
        let k_int = (shifted.to_bits() as i64) << 12 >> 12;
        let e = p * f64::from_bits(((k_int + 1023) as u64) << 52);
        let t = ((1.0 - e) / (1.0 + e)).copysign(v);
        *x = if v.is_nan() { v } else { t };
    }
}

macro_rules! impl_scalar {
    ($t:ty, $gemm:path, $tanh:path) => {
        impl Scalar for $t {
            fn gemm_strided(
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
            ) {
                check_gemm_extent(a.len(), m, k, a_strides, "a");
                check_gemm_extent(b.len(), k, n, b_strides, "b");
                assert!(c.len() >= m * n, "gemm output too short");
                if m == 0 || n == 0 {
                    return;
                }
                // SAFETY: extents of every operand were checked above and the
                // output does not alias the inputs (distinct borrows).
                unsafe {
                    $gemm(
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
                        n as isize,
                        1,
                    );
                }
            }

            fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
                <StandardNormal as Distribution<$t>>::sample(&StandardNormal, rng)
            }

            fn tanh_in_place(xs: &mut [Self]) {
                $tanh(xs)
            }
        }
    };
}

impl_scalar!(f64, matrixmultiply::dgemm, tanh_f64_slice);
impl_scalar!(f32, matrixmultiply::sgemm, tanh_each);

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn softplus<T: Scalar>(x: T) -> T {
    if x > lit(30.0) {
        x
    } else if x < lit(-30.0) {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Inverse of [`softplus`] for strictly positive `y`.
#[inline]
pub fn softplus_inverse<T: Scalar>(y: T) -> T {
    if y > lit(30.0) {
        y
    } else {
        y.exp_m1().ln()
    }
}

/// `ln Σ exp(x_i)` with max subtraction. Empty input gives `-inf`.
pub fn log_sum_exp<T: Scalar>(xs: &[T]) -> T {
    let max = xs.iter().copied().fold(T::neg_infinity(), T::max);
    if max == T::neg_infinity() {
        return max;
    }
    let sum: T = xs.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}

/// Numerically stable softmax into `out`.
pub fn softmax_into<T: Scalar>(xs: &[T], out: &mut [T]) {
    let lse = log_sum_exp(xs);
    for (o, &x) in out.iter_mut().zip(xs) {
        *o = (x - lse).exp();
    }
}

pub fn softmax<T: Scalar>(xs: &[T]) -> Vec<T> {
    let mut out = vec![T::zero(); xs.len()];
    softmax_into(xs, &mut out);
    out
}
