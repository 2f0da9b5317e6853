//! Globally adaptive Gauss–Kronrod (7/15) quadrature.
//!
//! Used as the independent numerical route against which closed forms are
//! checked, and for tabulating CDFs of the equilibrium laws.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.000_000_000_000_000_000_000_000_000_000_000,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

// Gauss weights for the odd Kronrod nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

const MAX_INTERVALS: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    pub abs_error: f64,
    pub intervals: usize,
}

#[derive(Debug, Clone, Copy)]
struct Piece {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Piece {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for (k, (&x, &w)) in XGK.iter().zip(&WGK).take(7).enumerate() {
        let f1 = f(center - half * x);
        let f2 = f(center + half * x);
        kronrod += w * (f1 + f2);
        if k % 2 == 1 {
            gauss += WG[k / 2] * (f1 + f2);
        }
    }
    let value = kronrod * half;
    let error = ((kronrod - gauss) * half).abs();
    Piece { a, b, value, error }
}

/// `∫_a^b f` to `max(abs_tol, rel_tol·|I|)`, bisecting the worst interval.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Quadrature {
    if a == b {
        return Quadrature {
            value: 0.0,
            abs_error: 0.0,
            intervals: 0,
        };
    }
    let mut heap = BinaryHeap::new();
    let first = gk15(&f, a, b);
    let mut total = first.value;
    let mut err = first.error;
    heap.push(first);
    while err > abs_tol.max(rel_tol * total.abs()) && heap.len() < MAX_INTERVALS {
        let worst = heap.pop().expect("heap is non-empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a.min(worst.b) || mid >= worst.a.max(worst.b) {
            heap.push(worst);
            break;
        }
        let left = gk15(&f, worst.a, mid);
        let right = gk15(&f, mid, worst.b);
        total += left.value + right.value - worst.value;
        err += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
    }
    // Re-sum to shed the drift of the running updates.
    let value = heap.iter().map(|p| p.value).sum();
    let abs_error = heap.iter().map(|p| p.error).sum();
    Quadrature {
        value,
        abs_error,
        intervals: heap.len(),
    }
}

/// `∫_a^∞ f` through the substitution `x = a + t/(1−t)`.
pub fn integrate_to_infinity<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Quadrature {
    integrate(
        |t| {
            if t >= 1.0 {
                return 0.0;
            }
            let s = 1.0 - t;
            let v = f(a + t / s) / (s * s);
            if v.is_finite() {
                v
            } else {
                0.0
            }
        },
        0.0,
        1.0,
        abs_tol,
        rel_tol,
    )
}

/// `∫_{-∞}^{∞} f`.
pub fn integrate_real_line<F: Fn(f64) -> f64>(f: F, abs_tol: f64, rel_tol: f64) -> Quadrature {
    let right = integrate_to_infinity(&f, 0.0, abs_tol / 2.0, rel_tol);
    let left = integrate_to_infinity(|x| f(-x), 0.0, abs_tol / 2.0, rel_tol);
    Quadrature {
        value: left.value + right.value,
        abs_error: left.abs_error + right.abs_error,
        intervals: left.intervals + right.intervals,
    }
}

/// A CDF tabulated on a uniform grid by integrating a density segment by
/// segment, with linear interpolation between knots.
#[derive(Debug, Clone)]
pub struct TabulatedCdf {
    lo: f64,
    hi: f64,
    values: Vec<f64>,
    total_mass: f64,
}

impl TabulatedCdf {
    /// Tabulates `x ↦ ∫_lo^x density / ∫_lo^hi density` at `knots` intervals.
    pub fn from_density<F: Fn(f64) -> f64>(density: F, lo: f64, hi: f64, knots: usize) -> Self {
        assert!(hi > lo && knots >= 1);
        let h = (hi - lo) / knots as f64;
        let mut values = Vec::with_capacity(knots + 1);
        let mut acc = 0.0;
        values.push(0.0);
        for k in 0..knots {
            let a = lo + k as f64 * h;
            let b = if k + 1 == knots { hi } else { a + h };
            acc += integrate(&density, a, b, 1e-15, 1e-12).value;
            values.push(acc);
        }
        let total_mass = acc;
        for v in &mut values {
            *v /= total_mass;
        }
        Self {
            lo,
            hi,
            values,
            total_mass,
        }
    }

    /// Mass of the density before normalization.
    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    pub fn eval(&self, x: f64) -> f64 {
        if x <= self.lo {
            return 0.0;
        }
        if x >= self.hi {
            return 1.0;
        }
        let knots = self.values.len() - 1;
        let pos = (x - self.lo) / (self.hi - self.lo) * knots as f64;
        let k = (pos.floor() as usize).min(knots - 1);
        let frac = pos - k as f64;
        self.values[k] + frac * (self.values[k + 1] - self.values[k])
    }

    /// Inverse by bisection over the knot table, linear within the bracket.
    pub fn inverse(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        let k = self
            .values
            .partition_point(|&v| v < u)
            .clamp(1, self.values.len() - 1);
        let (v0, v1) = (self.values[k - 1], self.values[k]);
        let frac = if v1 > v0 { (u - v0) / (v1 - v0) } else { 0.0 };
        let h = (self.hi - self.lo) / (self.values.len() - 1) as f64;
        self.lo + (k as f64 - 1.0 + frac) * h
    }
}
