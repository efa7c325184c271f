//! Positive stable laws, Mittag-Leffler densities and functions, generalized
//! Stirling numbers, Hermite functions and the polynomially tilted stable
//! densities that drive conditional Gibbs partitions.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use libm::erfc;
use statrs::function::gamma::ln_gamma;

use crate::error::{domain, numeric, Error, Result};
use crate::quad::{integrate_positive, tanh_sinh, QuadOptions};
use crate::stable_density::StableDensity;

/// Index of a positive stable law, strictly inside (0, 1).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct StableIndex(f64);

impl StableIndex {
    pub fn new(alpha: f64) -> Result<Self> {
        if alpha > 0.0 && alpha < 1.0 {
            Ok(StableIndex(alpha))
        } else {
            domain(format!("stable index must lie in (0,1), got {alpha}"))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }

    /// `self / denom`, which must again be a valid index.
    pub fn ratio(self, denom: StableIndex) -> Result<StableIndex> {
        StableIndex::new(self.0 / denom.0)
    }

    /// `self * other`.
    pub fn product(self, other: StableIndex) -> StableIndex {
        StableIndex(self.0 * other.0)
    }

    pub fn is_half(self) -> bool {
        self.0 == 0.5
    }
}

impl TryFrom<f64> for StableIndex {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        StableIndex::new(v)
    }
}

impl From<StableIndex> for f64 {
    fn from(a: StableIndex) -> f64 {
        a.0
    }
}

impl std::fmt::Display for StableIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityEvalConfig {
    pub rel_tol: f64,
    pub max_terms: usize,
    /// Maximum number of adaptive subintervals for inner integrals.
    pub quad_points: usize,
    /// Above this argument the stable density is summed from its large-t series.
    pub switch_point: f64,
    /// Above this argument Mittag-Leffler functions go straight to quadrature.
    pub ml_switch_lambda: f64,
}

impl Default for DensityEvalConfig {
    fn default() -> Self {
        DensityEvalConfig {
            rel_tol: 1e-10,
            max_terms: 400,
            quad_points: 256,
            switch_point: 1.0,
            ml_switch_lambda: 5.0,
        }
    }
}

impl DensityEvalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.rel_tol < 1.0) {
            return domain("rel_tol must lie in (0,1)");
        }
        if self.max_terms < 1 {
            return domain("max_terms must be at least 1");
        }
        if self.quad_points < 16 {
            return domain("quad_points must be at least 16");
        }
        if !(self.switch_point > 0.0) {
            return domain("switch_point must be positive");
        }
        Ok(())
    }

    pub(crate) fn outer_opts(&self) -> QuadOptions {
        QuadOptions::new(1e-300, self.rel_tol, self.quad_points.max(16) * 8)
    }
}

// cancellation beyond this ratio of largest term to sum makes a series unusable
const CANCELLATION_LIMIT: f64 = 1e6;
const TS_LEVELS: usize = 9;
// inner stable integrals are kept well below any outer tolerance
pub(crate) const KANTER_TOL: f64 = 1e-14;

pub(crate) fn default_cfg() -> DensityEvalConfig {
    DensityEvalConfig::default()
}

/// Rising factorial `(x)_n`.
pub fn pochhammer(x: f64, n: usize) -> f64 {
    if n == 0 {
        return 1.0;
    }
    if x > 0.0 {
        (ln_gamma(x + n as f64) - ln_gamma(x)).exp()
    } else {
        (0..n).map(|i| x + i as f64).product()
    }
}

/// `ln (x)_n` for `x > 0`.
pub fn ln_pochhammer(x: f64, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        ln_gamma(x + n as f64) - ln_gamma(x)
    }
}

/// Table `S[n][k]`, `0 <= k <= n <= n_max`, of generalized Stirling numbers
/// built from `S(n+1,k) = S(n,k-1) + (n - k alpha) S(n,k)`.
pub fn gen_stirling_table(alpha: StableIndex, n_max: usize) -> Vec<Vec<f64>> {
    let a = alpha.get();
    let mut s = vec![vec![0.0; n_max + 1]; n_max + 1];
    s[0][0] = 1.0;
    if n_max == 0 {
        return s;
    }
    s[1][1] = 1.0;
    for n in 1..n_max {
        for k in 1..=n + 1 {
            let prev = if k <= n { s[n][k] } else { 0.0 };
            s[n + 1][k] = s[n][k - 1] + (n as f64 - k as f64 * a) * prev;
        }
    }
    s
}

pub fn gen_stirling(alpha: StableIndex, n: usize, k: usize) -> Result<f64> {
    if n == 0 || k == 0 || k > n || n > 170 {
        return domain(format!("generalized Stirling number needs 1 <= k <= n <= 170, got n={n}, k={k}"));
    }
    Ok(gen_stirling_table(alpha, n)[n][k])
}

pub(crate) fn levy_half_pdf(t: f64) -> f64 {
    (-0.25 / t - 1.5 * t.ln()).exp() / (2.0 * PI.sqrt())
}

// ln(sin z / z)
pub(crate) fn ln_sinc(z: f64) -> f64 {
    if z.abs() < 0.1 {
        let z2 = z * z;
        let m = -z2 / 6.0 * (1.0 - z2 / 20.0 * (1.0 - z2 / 42.0 * (1.0 - z2 / 72.0)));
        m.ln_1p()
    } else {
        (z.sin() / z).ln()
    }
}

// ln(A(u) / A(0+)) for Zolotarev's function, u = u_left = pi - u_right
pub(crate) fn kanter_ln_ratio(a: f64, u_left: f64, u_right: f64) -> f64 {
    let b = 1.0 - a;
    let u = u_left;
    let ln_sinc_u = if u_right < 0.5 {
        (u_right.sin() / u).ln()
    } else {
        ln_sinc(u)
    };
    (a / b) * ln_sinc(a * u) + ln_sinc(b * u) - ln_sinc_u / b
}

/// Zolotarev's function `A(u)` on `(0, pi)`, increasing from `A(0+)`.
pub fn kanter_a(alpha: StableIndex, u: f64) -> f64 {
    let a = alpha.get();
    kanter_a0(a) * kanter_ln_ratio(a, u, PI - u).exp()
}

pub(crate) fn kanter_a0(a: f64) -> f64 {
    (1.0 - a) * a.powf(a / (1.0 - a))
}

// Upper end of the effective range: (A(u) - A0) x = 60 beyond it.
pub(crate) fn kanter_cutoff(a: f64, x: f64) -> f64 {
    let a0 = kanter_a0(a);
    let excess = |u: f64| a0 * kanter_ln_ratio(a, u, PI - u).exp_m1() * x;
    if excess(PI * (1.0 - 1e-12)) <= 60.0 {
        return PI;
    }
    let (mut lo, mut hi): (f64, f64) = (1e-300, PI);
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if excess(mid) > 60.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-3 * hi {
            break;
        }
    }
    hi
}

enum SeriesKind {
    Density,
    Survival,
}

// Large-t series; None when it cancels badly or fails to settle.
fn stable_series(a: f64, t: f64, cfg: &DensityEvalConfig, kind: SeriesKind) -> Option<f64> {
    let ln_t = t.ln();
    let mut sum = 0.0;
    let mut max_mag: f64 = 0.0;
    let mut prev_ln = f64::INFINITY;
    for k in 1..=cfg.max_terms {
        let kf = k as f64;
        let ln_mag = match kind {
            SeriesKind::Density => ln_gamma(kf * a + 1.0) - ln_gamma(kf + 1.0) - (kf * a + 1.0) * ln_t,
            SeriesKind::Survival => ln_gamma(kf * a) - ln_gamma(kf + 1.0) - kf * a * ln_t,
        };
        let mag = ln_mag.exp();
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        sum += sign * mag * (kf * PI * a).sin();
        max_mag = max_mag.max(mag);
        let decreasing = ln_mag < prev_ln;
        prev_ln = ln_mag;
        if k > 2 && decreasing && mag <= 1e-3 * cfg.rel_tol * sum.abs() {
            if max_mag > CANCELLATION_LIMIT * sum.abs() || sum <= 0.0 {
                return None;
            }
            return Some(sum / PI);
        }
    }
    None
}

// I(x) = int_0^pi A e^{-(A - A0) x} du
pub(crate) fn kanter_pdf_integral(a: f64, x: f64) -> Result<f64> {
    let a0 = kanter_a0(a);
    let cutoff = kanter_cutoff(a, x);
    tanh_sinh(
        |l, r| {
            let lr = kanter_ln_ratio(a, l, r + (PI - cutoff));
            (lr - a0 * lr.exp_m1().max(0.0) * x).exp() * a0
        },
        0.0,
        cutoff,
        KANTER_TOL,
        TS_LEVELS,
    )
}

// J(x) = int_0^pi e^{-(A - A0) x} du
pub(crate) fn kanter_cdf_integral(a: f64, x: f64) -> Result<f64> {
    let a0 = kanter_a0(a);
    let cutoff = kanter_cutoff(a, x);
    tanh_sinh(
        |l, r| (-a0 * kanter_ln_ratio(a, l, r + (PI - cutoff)).exp_m1().max(0.0) * x).exp(),
        0.0,
        cutoff,
        KANTER_TOL,
        TS_LEVELS,
    )
}

pub(crate) fn stable_pdf_integral(a: f64, t: f64) -> Result<f64> {
    let b = 1.0 - a;
    let x = t.powf(-a / b);
    let ln_pre = -(kanter_a0(a) * x) - ln_t_over(b, t);
    if ln_pre < -760.0 {
        return Ok(0.0);
    }
    Ok(a / (b * PI) * ln_pre.exp() * kanter_pdf_integral(a, x)?)
}

// ln t^{1/(1-alpha)}
fn ln_t_over(b: f64, t: f64) -> f64 {
    t.ln() / b
}

pub fn stable_pdf_with(alpha: StableIndex, t: f64, cfg: &DensityEvalConfig) -> Result<f64> {
    if t.is_nan() || t < 0.0 {
        return domain(format!("stable density needs t > 0, got {t}"));
    }
    if t == 0.0 || t.is_infinite() {
        return Ok(0.0);
    }
    let a = alpha.get();
    if alpha.is_half() {
        return Ok(levy_half_pdf(t));
    }
    if t >= cfg.switch_point {
        if let Some(v) = stable_series(a, t, cfg, SeriesKind::Density) {
            return Ok(v);
        }
    }
    stable_pdf_integral(a, t)
}

/// Density of the positive stable law with Laplace transform `exp(-lambda^alpha)`.
pub fn stable_pdf(alpha: StableIndex, t: f64) -> Result<f64> {
    stable_pdf_with(alpha, t, &default_cfg())
}

pub fn stable_cdf_with(alpha: StableIndex, t: f64, cfg: &DensityEvalConfig) -> Result<f64> {
    if t.is_nan() || t < 0.0 {
        return domain(format!("stable cdf needs t >= 0, got {t}"));
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    if t.is_infinite() {
        return Ok(1.0);
    }
    let a = alpha.get();
    if alpha.is_half() {
        return Ok(erfc(0.5 / t.sqrt()));
    }
    if t >= cfg.switch_point {
        if let Some(s) = stable_series(a, t, cfg, SeriesKind::Survival) {
            return Ok(1.0 - s);
        }
    }
    let b = 1.0 - a;
    let x = t.powf(-a / b);
    let a0 = kanter_a0(a);
    if a0 * x > 760.0 {
        return Ok(0.0);
    }
    Ok(((-a0 * x).exp() * kanter_cdf_integral(a, x)? / PI).min(1.0))
}

pub fn stable_cdf(alpha: StableIndex, t: f64) -> Result<f64> {
    stable_cdf_with(alpha, t, &default_cfg())
}

pub fn ml_pdf_with(alpha: StableIndex, s: f64, cfg: &DensityEvalConfig) -> Result<f64> {
    if s.is_nan() || s < 0.0 {
        return domain(format!("Mittag-Leffler density needs s > 0, got {s}"));
    }
    if s == 0.0 {
        return Ok((-ln_gamma(1.0 - alpha.get())).exp());
    }
    let a = alpha.get();
    let t = s.powf(-1.0 / a);
    Ok(stable_pdf_with(alpha, t, cfg)? * t / (a * s))
}

/// Density of `T_alpha^{-alpha}`.
pub fn ml_pdf(alpha: StableIndex, s: f64) -> Result<f64> {
    ml_pdf_with(alpha, s, &default_cfg())
}

fn check_theta(alpha: StableIndex, theta: f64) -> Result<()> {
    if theta > -alpha.get() && theta.is_finite() {
        Ok(())
    } else {
        domain(format!("theta must exceed -alpha = {}, got {theta}", -alpha.get()))
    }
}

/// `ln E[T_alpha^{-theta}] = ln Gamma(theta/alpha + 1) - ln Gamma(theta + 1)`.
pub fn ln_stable_neg_moment(alpha: StableIndex, theta: f64) -> f64 {
    ln_gamma(theta / alpha.get() + 1.0) - ln_gamma(theta + 1.0)
}

pub fn gml_pdf_with(alpha: StableIndex, theta: f64, s: f64, cfg: &DensityEvalConfig) -> Result<f64> {
    check_theta(alpha, theta)?;
    if s.is_nan() || s <= 0.0 {
        return domain(format!("generalized Mittag-Leffler density needs s > 0, got {s}"));
    }
    let g = ml_pdf_with(alpha, s, cfg)?;
    Ok(g * ((theta / alpha.get()) * s.ln() - ln_stable_neg_moment(alpha, theta)).exp())
}

/// Density of the ML(alpha, theta) law: `s^{theta/alpha} g_alpha(s)` normalized.
pub fn gml_pdf(alpha: StableIndex, theta: f64, s: f64) -> Result<f64> {
    gml_pdf_with(alpha, theta, s, &default_cfg())
}

// shifted Mittag-Leffler series; None when it cancels or does not settle
fn gml_series(b: f64, th: f64, lambda: f64, cfg: &DensityEvalConfig) -> Option<f64> {
    let c0 = ln_gamma(th + 1.0) - ln_gamma(th / b + 1.0);
    let ln_lam = lambda.ln();
    let mut sum = 0.0;
    let mut max_mag: f64 = 0.0;
    let mut prev_ln = f64::INFINITY;
    for l in 0..cfg.max_terms {
        let lf = l as f64;
        let ln_mag = if l == 0 { 0.0 } else { lf * ln_lam } - ln_gamma(lf + 1.0) + ln_gamma(th / b + 1.0 + lf) + c0
            - ln_gamma(b * lf + th + 1.0);
        let mag = ln_mag.exp();
        sum += if l % 2 == 0 { mag } else { -mag };
        max_mag = max_mag.max(mag);
        let decreasing = ln_mag < prev_ln;
        prev_ln = ln_mag;
        if l > 1 && decreasing && mag <= 1e-3 * cfg.rel_tol * sum.abs() {
            if max_mag > CANCELLATION_LIMIT * sum.abs() || sum <= 0.0 {
                return None;
            }
            return Some(sum);
        }
    }
    None
}

pub fn gml_function_with(
    beta: StableIndex,
    theta: f64,
    j: usize,
    lambda: f64,
    cfg: &DensityEvalConfig,
) -> Result<f64> {
    let b = beta.get();
    let th = theta + j as f64 * b;
    check_theta(beta, th)?;
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return domain(format!("lambda must be finite and >= 0, got {lambda}"));
    }
    if lambda == 0.0 {
        return Ok(1.0);
    }
    if lambda <= cfg.ml_switch_lambda {
        if let Some(v) = gml_series(b, th, lambda, cfg) {
            return Ok(v);
        }
    }
    integrate_positive(
        |s| (-lambda * s).exp() * gml_pdf_with(beta, th, s, cfg).unwrap_or(f64::NAN),
        &cfg.outer_opts(),
    )
    .map_err(|e| match e {
        Error::Numeric { partial, .. } => numeric("Mittag-Leffler quadrature failed", partial),
        other => other,
    })
}

/// Laplace transform at `lambda` of the ML(beta, theta + j beta) law.
pub fn gml_function(beta: StableIndex, theta: f64, j: usize, lambda: f64) -> Result<f64> {
    gml_function_with(beta, theta, j, lambda, &default_cfg())
}

pub fn ml_function_with(beta: StableIndex, lambda: f64, cfg: &DensityEvalConfig) -> Result<f64> {
    gml_function_with(beta, 0.0, 0, lambda, cfg)
}

/// `E_beta(-lambda) = E[exp(-lambda T_beta^{-beta})]`.
pub fn ml_function(beta: StableIndex, lambda: f64) -> Result<f64> {
    ml_function_with(beta, lambda, &default_cfg())
}

pub fn hermite_fn_with(q: f64, s: f64, cfg: &DensityEvalConfig) -> Result<f64> {
    if !(q >= 0.0) || !q.is_finite() {
        return domain(format!("Hermite index q must be >= 0, got {q}"));
    }
    if !s.is_finite() {
        return domain("Hermite argument must be finite");
    }
    if q == 0.0 {
        return Ok(1.0);
    }
    let c0 = -ln_gamma(2.0 * q) - std::f64::consts::LN_2;
    let ln2 = std::f64::consts::LN_2;
    let ln_s = s.abs().ln();
    let mut sum = 0.0;
    let mut max_mag: f64 = 0.0;
    let mut prev_ln = f64::INFINITY;
    for l in 0..cfg.max_terms.max(200) {
        let lf = l as f64;
        let pow = if l == 0 { 0.0 } else { lf * ln_s };
        let ln_mag = pow - ln_gamma(lf + 1.0) + ln_gamma(q + 0.5 * lf) + (q + 0.5 * lf) * ln2 + c0;
        let mag = ln_mag.exp();
        let neg = s > 0.0 && l % 2 == 1;
        sum += if neg { -mag } else { mag };
        max_mag = max_mag.max(mag);
        let decreasing = ln_mag < prev_ln;
        prev_ln = ln_mag;
        if s == 0.0 {
            return Ok(sum);
        }
        if l > 1 && decreasing && mag <= 1e-3 * cfg.rel_tol * sum.abs() {
            if max_mag > 1e12 * sum.abs() {
                return Err(numeric("Hermite series lost precision", sum));
            }
            return Ok(sum);
        }
    }
    Err(numeric("Hermite series did not converge", sum))
}

/// Hermite function of negative index `-2q`.
pub fn hermite_fn(q: f64, s: f64) -> Result<f64> {
    hermite_fn_with(q, s, &default_cfg())
}

fn check_nk(n: usize, k: usize) -> Result<()> {
    if k == 0 || k > n {
        domain(format!("need 1 <= k <= n, got n={n}, k={k}"))
    } else {
        Ok(())
    }
}

// exp(-phi) is the leading left-tail factor of the stable density
pub(crate) fn left_tail_phi(bb: f64, v: f64) -> f64 {
    kanter_a0(bb) * v.powf(-bb / (1.0 - bb))
}

// largest w in (0, 1] with phi(v (1 - w)) - phi(v) <= drop
fn left_tail_reach(bb: f64, v: f64, drop: f64) -> f64 {
    1.0 - (1.0 + drop / left_tail_phi(bb, v)).powf(-(1.0 - bb) / bb)
}

const TAIL_DROP: f64 = 100.0;

// (a / y^a) int_0^y f_beta(v) (y - v)^{a-1} dv, times e^{phi(y)} when scaled
fn tilted_core(beta: StableIndex, a: f64, y: f64, scaled: bool, cfg: &DensityEvalConfig) -> Result<f64> {
    let bb = beta.get();
    let dens = StableDensity::shared(beta)?;
    let mut err = None;
    // density at v = y - d; both are passed so neither is formed by cancellation
    let mut f = |v: f64, d: f64| -> f64 {
        if v <= 0.0 {
            return 0.0;
        }
        let r = if scaled { dens.pdf_below_at(y, v, d) } else { dens.pdf(v) };
        match r {
            Ok(x) => x,
            Err(e) => {
                err = Some(e);
                0.0
            }
        }
    };
    // piece near v = y: y - v = w_top u^{1/a}
    let reach = left_tail_reach(bb, y, TAIL_DROP).min(0.5);
    let w_top = y * reach;
    let near = tanh_sinh(|l, _| { let d = w_top * l.powf(1.0 / a); f(y - d, d) }, 0.0, 1.0, cfg.rel_tol, TS_LEVELS)? * reach.powf(a);
    let mut total = near;
    if reach >= 0.5 {
        // piece (0, y/2] on a log scale
        let half = 0.5 * y;
        let lo = (kanter_a0(bb) / (left_tail_phi(bb, half) + TAIL_DROP)).powf((1.0 - bb) / bb);
        if lo < half {
            let (s0, s1) = (lo.ln(), half.ln());
            let ln_y = y.ln();
            let far = tanh_sinh(
                |l, _| {
                    let v = (s0 + l).exp();
                    f(v, y - v) * v * ((a - 1.0) * (y - v).ln() - a * ln_y).exp()
                },
                0.0,
                s1 - s0,
                cfg.rel_tol,
                TS_LEVELS,
            )?;
            total += far * a;
        }
    }
    match err {
        Some(e) => Err(e),
        None => Ok(total),
    }
}

pub fn tilted_y_pdf_with(beta: StableIndex, n: usize, k: usize, y: f64, cfg: &DensityEvalConfig) -> Result<f64> {
    tilted_y_pdf_scaled(beta, n, k, y, false, cfg)
}

// tilted density times e^{phi(y)} when scaled, which keeps the far left tail
// representable
pub(crate) fn tilted_y_pdf_scaled(
    beta: StableIndex,
    n: usize,
    k: usize,
    y: f64,
    scaled: bool,
    cfg: &DensityEvalConfig,
) -> Result<f64> {
    check_nk(n, k)?;
    if y.is_nan() || y < 0.0 {
        return domain(format!("tilted density needs y > 0, got {y}"));
    }
    if y == 0.0 || y.is_infinite() {
        return Ok(0.0);
    }
    let b = beta.get();
    if !scaled && left_tail_phi(b, y) > 800.0 {
        return Ok(0.0);
    }
    let a = n as f64 - k as f64 * b;
    let ln_c = b.ln() + ln_gamma(n as f64) - ln_gamma(k as f64) - ln_gamma(a + 1.0) - k as f64 * b * y.ln();
    Ok(ln_c.exp() * tilted_core(beta, a, y, scaled, cfg)?)
}

/// Density of `T_beta` given that an `n`-sample from PD(beta, 0) has `k` blocks.
pub fn tilted_y_pdf(beta: StableIndex, n: usize, k: usize, y: f64) -> Result<f64> {
    tilted_y_pdf_with(beta, n, k, y, &default_cfg())
}

/// Ratio of the conditional density given `k` blocks to the stable density,
/// divided by `beta^{1-k} Gamma(n) / Gamma(k)`.
pub fn conditional_g(beta: StableIndex, n: usize, k: usize, t: f64) -> Result<f64> {
    let cfg = default_cfg();
    let f = stable_pdf_with(beta, t, &cfg)?;
    if f == 0.0 {
        return Err(numeric("stable density underflows", 0.0));
    }
    let tilted = tilted_y_pdf_with(beta, n, k, t, &cfg)?;
    let b = beta.get();
    let ln_scale = (1.0 - k as f64) * b.ln() + ln_gamma(n as f64) - ln_gamma(k as f64);
    Ok(tilted / f / ln_scale.exp())
}
