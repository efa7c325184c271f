//! Adaptive Gauss–Kronrod (G10/K21) quadrature on finite and infinite ranges.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{numeric, Result};

const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_600_567_255_624,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

// Gauss weights for XGK[1], XGK[3], ..., XGK[9]
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions {
            abs_tol: 1e-13,
            rel_tol: 1e-11,
            max_intervals: 2000,
        }
    }
}

impl QuadOptions {
    pub fn new(abs_tol: f64, rel_tol: f64, max_intervals: usize) -> Self {
        QuadOptions {
            abs_tol,
            rel_tol,
            max_intervals,
        }
    }
}

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
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gk21<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = WGK[10] * fc;
    let mut gauss = 0.0;
    for i in 0..10 {
        let dx = h * XGK[i];
        let s = f(c - dx) + f(c + dx);
        kronrod += WGK[i] * s;
        if i % 2 == 1 {
            gauss += WG[i / 2] * s;
        }
    }
    let value = kronrod * h;
    let error = ((kronrod - gauss) * h).abs();
    (value, error)
}

/// Integrates `f` over the finite interval `[a, b]`.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, opts: &QuadOptions) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let (v, e) = gk21(&mut f, a, b);
    let mut heap = BinaryHeap::new();
    heap.push(Segment { a, b, value: v, error: e });
    let mut total = v;
    let mut total_err = e;
    loop {
        if !total.is_finite() || !total_err.is_finite() {
            return Err(numeric("non-finite integrand", total));
        }
        if total_err <= opts.abs_tol.max(opts.rel_tol * total.abs()) {
            return Ok(total);
        }
        if heap.len() >= opts.max_intervals {
            return Err(numeric(
                format!("quadrature did not converge (error estimate {total_err:e})"),
                total,
            ));
        }
        let worst = heap.pop().expect("non-empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // interval collapsed to machine resolution; accept what we have
            return Ok(total);
        }
        let (v1, e1) = gk21(&mut f, worst.a, mid);
        let (v2, e2) = gk21(&mut f, mid, worst.b);
        total += v1 + v2 - worst.value;
        total_err += e1 + e2 - worst.error;
        heap.push(Segment { a: worst.a, b: mid, value: v1, error: e1 });
        heap.push(Segment { a: mid, b: worst.b, value: v2, error: e2 });
        if heap.len() % 64 == 0 {
            // refresh accumulated sums to avoid drift
            total = heap.iter().map(|s| s.value).sum();
            total_err = heap.iter().map(|s| s.error).sum();
        }
    }
}

/// Integrates over `[a, inf)` through `t = a + u / (1 - u)`.
pub fn integrate_to_inf<F: FnMut(f64) -> f64>(mut f: F, a: f64, opts: &QuadOptions) -> Result<f64> {
    integrate(
        |u| {
            let w = 1.0 - u;
            let t = a + u / w;
            if !t.is_finite() {
                return 0.0;
            }
            f(t) / (w * w)
        },
        0.0,
        1.0,
        opts,
    )
}

/// Integrates over `(0, inf)` on a logarithmic scale, `t = exp(x)`, with the real
/// line compactified by `x = u / (1 - u^2)`. Suited to densities with power-law
/// behaviour at either end.
pub fn integrate_positive<F: FnMut(f64) -> f64>(mut f: F, opts: &QuadOptions) -> Result<f64> {
    integrate(
        |u| {
            let w = 1.0 - u * u;
            let x = u / w;
            let t = x.exp();
            if t == 0.0 || !t.is_finite() {
                return 0.0;
            }
            let v = f(t) * t * (1.0 + u * u) / (w * w);
            if v.is_finite() {
                v
            } else {
                0.0
            }
        },
        -1.0,
        1.0,
        opts,
    )
}

/// Integrates over `(0, b]` using `t = b * exp(-x)`, x in `[0, inf)`.
pub fn integrate_near_zero<F: FnMut(f64) -> f64>(mut f: F, b: f64, opts: &QuadOptions) -> Result<f64> {
    integrate_to_inf(
        |x| {
            let t = b * (-x).exp();
            if t == 0.0 {
                return 0.0;
            }
            f(t) * t
        },
        0.0,
        opts,
    )
}

/// Tanh-sinh (double exponential) rule on `[a, b]`. The integrand receives the
/// distances `(x - a, b - x)` so that endpoint singularities can be evaluated
/// without cancellation.
pub fn tanh_sinh<F: FnMut(f64, f64) -> f64>(mut f: F, a: f64, b: f64, rel_tol: f64, max_level: usize) -> Result<f64> {
    use std::f64::consts::FRAC_PI_2;
    const T_MAX: f64 = 6.5;
    let half = 0.5 * (b - a);
    if half == 0.0 {
        return Ok(0.0);
    }
    let mut node = |t: f64| -> f64 {
        let s = FRAC_PI_2 * t.sinh();
        let c = FRAC_PI_2 * t.cosh();
        let e = (2.0 * s).exp();
        // 1 + x and 1 - x for x = tanh(s)
        let (dl, dr) = if s >= 0.0 {
            (2.0 / (1.0 + 1.0 / e), 2.0 / (1.0 + e))
        } else {
            (2.0 * e / (1.0 + e), 2.0 / (1.0 + e))
        };
        let left = dl * half;
        let right = dr * half;
        if left == 0.0 || right == 0.0 || !left.is_finite() || !right.is_finite() {
            return 0.0;
        }
        let w = c * dl * dr;
        if w == 0.0 {
            return 0.0;
        }
        f(left, right) * w * half
    };
    // coarse pass fixes how far out each tail is worth following
    let center = node(0.0);
    let mut sum = center;
    let mut biggest = center.abs();
    let mut reach = [T_MAX; 2];
    for (side, sign) in [1.0f64, -1.0].iter().enumerate() {
        let mut k = 1;
        while k as f64 <= T_MAX {
            let t = k as f64;
            let v = node(sign * t);
            sum += v;
            biggest = biggest.max(v.abs());
            if k >= 2 && v.abs() <= 1e-20 * biggest {
                reach[side] = t;
                break;
            }
            k += 1;
        }
    }
    let mut h = 1.0;
    let mut estimate = sum * h;
    let mut last_diff = f64::INFINITY;
    for level in 1..=max_level {
        h *= 0.5;
        let mut k = 1;
        loop {
            let t = k as f64 * h;
            let mut any = false;
            if t <= reach[0] {
                sum += node(t);
                any = true;
            }
            if t <= reach[1] {
                sum += node(-t);
                any = true;
            }
            if !any {
                break;
            }
            k += 2;
        }
        let next = sum * h;
        if !next.is_finite() {
            return Err(numeric("non-finite integrand", estimate));
        }
        let diff = (next - estimate).abs();
        estimate = next;
        let scale = next.abs().max(1e-300);
        // the rule converges quadratically once it settles
        // (only trusted once the previous step was itself small, as a chance
        // near-agreement of two coarse levels can otherwise pass for it)
        let predicted = if last_diff <= 1e-2 * scale && diff < last_diff { diff * diff / last_diff } else { diff };
        if level >= 3 && (diff <= rel_tol * scale || (diff <= 1e-3 * scale && predicted <= 0.1 * rel_tol * scale)) {
            return Ok(next);
        }
        last_diff = diff;
    }
    Err(numeric("tanh-sinh rule did not converge", estimate))
}
