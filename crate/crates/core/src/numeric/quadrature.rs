//! Adaptive Gauss-Kronrod (7/15) quadrature.
//!
//! Intervals are bisected in order of largest local error estimate until the summed
//! estimate `|K15 - G7|` falls below the absolute tolerance. Semi-infinite ranges are
//! mapped onto `[0, 1)` with `x = a + t / (1 - t)`.

use std::collections::BinaryHeap;

/// Absolute tolerance used by the coverage integrals.
pub const QUAD_ABS_TOL: f64 = 1e-9;

const MAX_INTERVALS: usize = 2000;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
// Gauss weights for XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy)]
pub struct Quadrature {
    pub value: f64,
    pub error: f64,
    pub intervals: usize,
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> Segment {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    Segment {
        a,
        b,
        value: kronrod * h,
        error: ((kronrod - gauss) * h).abs(),
    }
}

/// Integrates `f` over the finite interval `[a, b]`.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, abs_tol: f64) -> Quadrature {
    let first = gk15(&f, a, b);
    let mut error = first.error;
    let mut heap = BinaryHeap::from([first]);
    while error > abs_tol && heap.len() < MAX_INTERVALS {
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            heap.push(worst);
            break;
        }
        let left = gk15(&f, worst.a, mid);
        let right = gk15(&f, mid, worst.b);
        error += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
    }
    // Re-sum to shed the drift accumulated by the running updates.
    let mut segments = heap.into_vec();
    segments.sort_by(|p, q| p.a.total_cmp(&q.a));
    Quadrature {
        value: segments.iter().map(|s| s.value).sum(),
        error: segments.iter().map(|s| s.error).sum::<f64>().max(0.0),
        intervals: segments.len(),
    }
}

/// Integrates `f` over `[a, ∞)`.
pub fn integrate_to_infinity(f: impl Fn(f64) -> f64, a: f64, abs_tol: f64) -> Quadrature {
    integrate(
        |t| {
            let one_minus = 1.0 - t;
            let x = a + t / one_minus;
            let v = f(x) / (one_minus * one_minus);
            if v.is_finite() {
                v
            } else {
                0.0
            }
        },
        0.0,
        1.0,
        abs_tol,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn polynomial_is_exact() {
        let q = integrate(|x| 3.0 * x * x, 0.0, 2.0, 1e-12);
        assert!((q.value - 8.0).abs() < 1e-13);
    }

    #[test]
    fn arctangent_tail() {
        // ∫_1^∞ du / (1 + u²) = π/4
        let q = integrate_to_infinity(|u| 1.0 / (1.0 + u * u), 1.0, 1e-12);
        assert!((q.value - PI / 4.0).abs() < 1e-11, "{}", q.value);
    }

    #[test]
    fn exponential_from_zero() {
        let q = integrate_to_infinity(|t| (-2.5 * t).exp(), 0.0, 1e-12);
        assert!((q.value - 0.4).abs() < 1e-12);
    }

    #[test]
    fn slowly_decaying_tail() {
        // ∫_1^∞ u^{-1.5} du = 2
        let q = integrate_to_infinity(|u| u.powf(-1.5), 1.0, 1e-9);
        assert!((q.value - 2.0).abs() < 1e-7, "{}", q.value);
    }
}
