//! Cached evaluator for a fixed stable index. Below `t = 1` the smooth part of
//! the log-density is stored as piecewise Chebyshev fits in `ln x`,
//! `x = t^{-alpha/(1-alpha)}`; above it the large-t series runs off
//! precomputed coefficients.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use libm::erfc;
use statrs::function::gamma::ln_gamma;

use crate::error::{domain, Result};
use crate::special_fn::{
    kanter_a0, kanter_cdf_integral, kanter_pdf_integral, levy_half_pdf, stable_pdf_integral, StableIndex,
};

const CHEB_N: usize = 24;
const PIECE: f64 = 0.5;
const SERIES_TERMS: usize = 400;
const SERIES_TOL: f64 = 1e-15;
const MAX_CACHED: usize = 64;

#[derive(Debug, Clone)]
pub struct StableDensity {
    alpha: StableIndex,
    a0: f64,
    expo: f64,
    xi_max: f64,
    ln_pdf_const: f64,
    pdf_pieces: Vec<[f64; CHEB_N]>,
    cdf_pieces: Vec<[f64; CHEB_N]>,
    // ln Gamma(k a + 1) - ln Gamma(k + 1), ln Gamma(k a) - ln Gamma(k + 1), signed sin(k pi a)
    pdf_ln_coef: Vec<f64>,
    surv_ln_coef: Vec<f64>,
    sines: Vec<f64>,
}

fn cheb_fit<F: FnMut(f64) -> Result<f64>>(mut f: F, lo: f64, hi: f64) -> Result<[f64; CHEB_N]> {
    let n = CHEB_N as f64;
    let mid = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let mut vals = [0.0; CHEB_N];
    for (j, v) in vals.iter_mut().enumerate() {
        let x = (PI * (j as f64 + 0.5) / n).cos();
        *v = f(mid + half * x)?;
    }
    let mut c = [0.0; CHEB_N];
    for (k, ck) in c.iter_mut().enumerate() {
        let s: f64 = vals
            .iter()
            .enumerate()
            .map(|(j, v)| v * (PI * k as f64 * (j as f64 + 0.5) / n).cos())
            .sum();
        *ck = 2.0 * s / n;
    }
    Ok(c)
}

fn cheb_eval(c: &[f64; CHEB_N], x: f64) -> f64 {
    let (mut b1, mut b2) = (0.0, 0.0);
    for &ck in c[1..].iter().rev() {
        let b0 = 2.0 * x * b1 - b2 + ck;
        b2 = b1;
        b1 = b0;
    }
    x * b1 - b2 + 0.5 * c[0]
}

impl StableDensity {
    pub fn new(alpha: StableIndex) -> Result<Self> {
        let a = alpha.get();
        let b = 1.0 - a;
        let a0 = kanter_a0(a);
        let expo = a / b;
        let xi_max = (800.0 / a0).ln().max(PIECE);
        let mut pdf_pieces = Vec::new();
        let mut cdf_pieces = Vec::new();
        if !alpha.is_half() {
            let count = (xi_max / PIECE).ceil() as usize;
            for i in 0..count {
                let lo = i as f64 * PIECE;
                let hi = lo + PIECE;
                pdf_pieces.push(cheb_fit(|xi| Ok(kanter_pdf_integral(a, xi.exp())?.ln()), lo, hi)?);
                cdf_pieces.push(cheb_fit(|xi| Ok(kanter_cdf_integral(a, xi.exp())?.ln()), lo, hi)?);
            }
        }
        let mut pdf_ln_coef = Vec::with_capacity(SERIES_TERMS);
        let mut surv_ln_coef = Vec::with_capacity(SERIES_TERMS);
        let mut sines = Vec::with_capacity(SERIES_TERMS);
        for k in 1..=SERIES_TERMS {
            let kf = k as f64;
            pdf_ln_coef.push(ln_gamma(kf * a + 1.0) - ln_gamma(kf + 1.0));
            surv_ln_coef.push(ln_gamma(kf * a) - ln_gamma(kf + 1.0));
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            sines.push(sign * (kf * PI * a).sin());
        }
        Ok(StableDensity {
            alpha,
            a0,
            expo,
            xi_max,
            ln_pdf_const: (a / (b * PI)).ln(),
            pdf_pieces,
            cdf_pieces,
            pdf_ln_coef,
            surv_ln_coef,
            sines,
        })
    }

    /// Shared evaluator for `alpha`, built on first use.
    pub fn shared(alpha: StableIndex) -> Result<Arc<StableDensity>> {
        static CACHE: OnceLock<Mutex<HashMap<u64, Arc<StableDensity>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let key = alpha.get().to_bits();
        if let Some(d) = cache.lock().expect("cache poisoned").get(&key) {
            return Ok(d.clone());
        }
        let d = Arc::new(StableDensity::new(alpha)?);
        let mut guard = cache.lock().expect("cache poisoned");
        if guard.len() >= MAX_CACHED {
            guard.clear();
        }
        guard.insert(key, d.clone());
        Ok(d)
    }

    pub fn alpha(&self) -> StableIndex {
        self.alpha
    }

    fn piece(&self, xi: f64) -> (usize, f64) {
        let i = ((xi / PIECE) as usize).min(self.pdf_pieces.len() - 1);
        let lo = i as f64 * PIECE;
        (i, (xi - lo) / PIECE * 2.0 - 1.0)
    }

    fn series(&self, t: f64, ln_coef: &[f64], shift: f64) -> Option<f64> {
        let a = self.alpha.get();
        let ln_t = t.ln();
        let mut sum = 0.0;
        let mut max_mag: f64 = 0.0;
        let mut prev = f64::INFINITY;
        for (k, (&c, &s)) in ln_coef.iter().zip(&self.sines).enumerate() {
            let kf = (k + 1) as f64;
            let ln_mag = c - (kf * a + shift) * ln_t;
            let mag = ln_mag.exp();
            sum += mag * s;
            max_mag = max_mag.max(mag);
            let decreasing = ln_mag < prev;
            prev = ln_mag;
            if k > 1 && decreasing && mag <= SERIES_TOL * sum.abs() {
                if max_mag > 1e6 * sum.abs() || sum <= 0.0 {
                    return None;
                }
                return Some(sum / PI);
            }
        }
        None
    }

    pub fn pdf(&self, t: f64) -> Result<f64> {
        if t.is_nan() || t < 0.0 {
            return domain(format!("stable density needs t > 0, got {t}"));
        }
        if t == 0.0 || t.is_infinite() {
            return Ok(0.0);
        }
        if self.alpha.is_half() {
            return Ok(levy_half_pdf(t));
        }
        if t >= 1.0 {
            if let Some(v) = self.series(t, &self.pdf_ln_coef, 1.0) {
                return Ok(v);
            }
            return stable_pdf_integral(self.alpha.get(), t);
        }
        let ln_x = -self.expo * t.ln();
        if ln_x >= self.xi_max {
            return Ok(0.0);
        }
        let (i, u) = self.piece(ln_x);
        let ln_i = cheb_eval(&self.pdf_pieces[i], u);
        let b = 1.0 - self.alpha.get();
        Ok((self.ln_pdf_const - self.a0 * ln_x.exp() - t.ln() / b + ln_i).exp())
    }

    /// `pdf(y - d) e^{phi(y)}` with `phi(y) = A0 y^{-alpha/(1-alpha)}` the left-tail
    /// exponent. Stays representable, and accurate in `d`, far into the left tail.
    pub fn pdf_below(&self, y: f64, d: f64) -> Result<f64> {
        self.pdf_below_at(y, y - d, d)
    }

    // as pdf_below with v = y - d supplied by the caller, so small v keeps its precision
    pub(crate) fn pdf_below_at(&self, y: f64, v: f64, d: f64) -> Result<f64> {
        if !(y > 0.0) || !(d >= 0.0) || !(v >= 0.0) {
            return domain(format!("need 0 <= d <= y, got y={y}, d={d}"));
        }
        if v == 0.0 {
            return Ok(0.0);
        }
        // phi(v) - phi(y)
        let ln_ratio = if d < 0.5 * y { (-d / y).ln_1p() } else { (v / y).ln() };
        let gap = self.a0 * y.powf(-self.expo) * (-self.expo * ln_ratio).exp_m1();
        if self.alpha.is_half() {
            return Ok((-gap).exp() / (2.0 * PI.sqrt() * v.powf(1.5)));
        }
        if v >= 1.0 {
            return Ok(self.pdf(v)? * (self.a0 * y.powf(-self.expo)).exp());
        }
        let b = 1.0 - self.alpha.get();
        let ln_x = -self.expo * v.ln();
        let ln_pre = self.ln_pdf_const - gap - v.ln() / b;
        if ln_pre < -760.0 {
            return Ok(0.0);
        }
        if ln_x < self.xi_max {
            let (i, u) = self.piece(ln_x);
            return Ok((ln_pre + cheb_eval(&self.pdf_pieces[i], u)).exp());
        }
        Ok(ln_pre.exp() * kanter_pdf_integral(self.alpha.get(), ln_x.exp())?)
    }

    pub fn cdf(&self, t: f64) -> Result<f64> {
        if t.is_nan() || t < 0.0 {
            return domain(format!("stable cdf needs t >= 0, got {t}"));
        }
        if t == 0.0 {
            return Ok(0.0);
        }
        if t.is_infinite() {
            return Ok(1.0);
        }
        if self.alpha.is_half() {
            return Ok(erfc(0.5 / t.sqrt()));
        }
        if t >= 1.0 {
            if let Some(s) = self.series(t, &self.surv_ln_coef, 0.0) {
                return Ok(1.0 - s);
            }
            let x = t.powf(-self.expo);
            return Ok(((-self.a0 * x).exp() * kanter_cdf_integral(self.alpha.get(), x)? / PI).min(1.0));
        }
        let ln_x = -self.expo * t.ln();
        if ln_x >= self.xi_max {
            return Ok(0.0);
        }
        let (i, u) = self.piece(ln_x);
        let ln_j = cheb_eval(&self.cdf_pieces[i], u);
        Ok(((-self.a0 * ln_x.exp() + ln_j).exp() / PI).min(1.0))
    }
}
