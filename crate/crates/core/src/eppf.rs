//! Exchangeable partition probability functions: the two-parameter family,
//! Gibbs partitions built from tilted stable laws, the conditional laws given
//! the stable variable, and the mixtures produced by fragmentation.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{domain, numeric, Result};
use crate::partitions::{Composition, SetPartition};
use crate::quad::{integrate_positive, tanh_sinh, QuadOptions};
use crate::special_fn::{
    gml_function, ln_pochhammer, ml_function, stable_pdf, tilted_y_pdf, StableIndex,
};
use crate::tilt::{TiltFunction, TiltKind};

pub const DEFAULT_N_MAX: usize = 64;

fn check_theta(alpha: StableIndex, theta: f64) -> Result<()> {
    if theta > -alpha.get() && theta.is_finite() {
        Ok(())
    } else {
        domain(format!("theta must exceed -alpha = {}, got {theta}", -alpha.get()))
    }
}

fn check_nk(n: usize, k: usize) -> Result<()> {
    if k == 0 || k > n {
        domain(format!("need 1 <= k <= n, got n={n}, k={k}"))
    } else {
        Ok(())
    }
}

fn check_order(alpha: StableIndex, beta: StableIndex) -> Result<()> {
    if beta.get() < alpha.get() {
        Ok(())
    } else {
        domain(format!("need beta < alpha, got beta={beta}, alpha={alpha}"))
    }
}

/// Anything that assigns a probability to each block-size composition.
pub trait Eppf: Send + Sync {
    fn prob(&self, c: &Composition) -> Result<f64>;

    /// Probabilities that item `n + 1` joins each existing block, then that it
    /// opens a new one, given current block sizes. The default takes EPPF ratios,
    /// so the entries sum to one only as far as the evaluator is consistent.
    fn predictive(&self, sizes: &[usize]) -> Result<Vec<f64>> {
        let base = self.prob(&Composition::new(sizes.to_vec())?)?;
        if !(base > 0.0) {
            return domain(format!("EPPF vanishes at {sizes:?}"));
        }
        let mut out = Vec::with_capacity(sizes.len() + 1);
        let mut grown = sizes.to_vec();
        for j in 0..sizes.len() {
            grown[j] += 1;
            out.push(self.prob(&Composition::new(grown.clone())?)? / base);
            grown[j] -= 1;
        }
        grown.push(1);
        out.push(self.prob(&Composition::new(grown)?)? / base);
        Ok(out)
    }
}

/// `ln p_{alpha,theta}(c)`.
pub fn ln_pd_eppf(alpha: StableIndex, theta: f64, c: &Composition) -> Result<f64> {
    check_theta(alpha, theta)?;
    let a = alpha.get();
    let mut ln = -ln_pochhammer(theta + 1.0, c.n() - 1);
    for i in 1..c.k() {
        ln += (theta + i as f64 * a).ln();
    }
    for &s in c.sizes() {
        ln += ln_pochhammer(1.0 - a, s - 1);
    }
    Ok(ln)
}

/// Two-parameter Poisson-Dirichlet EPPF.
pub fn pd_eppf(alpha: StableIndex, theta: f64, c: &Composition) -> Result<f64> {
    check_theta(alpha, theta)?;
    let n = c.n();
    if n > 150 {
        return Ok(ln_pd_eppf(alpha, theta, c)?.exp());
    }
    // numerator and denominator factors paired so the running product stays near one
    let a = alpha.get();
    let mut v = 1.0;
    for i in 1..c.k() {
        v *= (theta + i as f64 * a) / (theta + i as f64);
    }
    let mut d = c.k();
    // fixed order so that permuted compositions give bit-identical values
    for &s in c.sorted().sizes() {
        for m in 1..s {
            v *= (m as f64 - a) / (theta + d as f64);
            d += 1;
        }
    }
    Ok(v)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoParamPd {
    alpha: StableIndex,
    theta: f64,
}

impl TwoParamPd {
    pub fn new(alpha: StableIndex, theta: f64) -> Result<Self> {
        check_theta(alpha, theta)?;
        Ok(TwoParamPd { alpha, theta })
    }

    pub fn alpha(&self) -> StableIndex {
        self.alpha
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }
}

impl Eppf for TwoParamPd {
    fn prob(&self, c: &Composition) -> Result<f64> {
        pd_eppf(self.alpha, self.theta, c)
    }

    // the Chinese restaurant rule
    fn predictive(&self, sizes: &[usize]) -> Result<Vec<f64>> {
        if sizes.is_empty() || sizes.contains(&0) {
            return domain("predictive rule needs a nonempty composition");
        }
        let a = self.alpha.get();
        let n: usize = sizes.iter().sum();
        let denom = n as f64 + self.theta;
        let mut out: Vec<f64> = sizes.iter().map(|&s| (s as f64 - a) / denom).collect();
        out.push((self.theta + sizes.len() as f64 * a) / denom);
        Ok(out)
    }
}

/// Rows `0..=n_max` of `P(K_n = k)` under PD(alpha, 0), from the recurrence
/// `P_{n+1}(k) = ((k-1) alpha P_n(k-1) + (n - k alpha) P_n(k)) / n`.
pub fn blocks_pmf_table(alpha: StableIndex, n_max: usize) -> Vec<Vec<f64>> {
    let a = alpha.get();
    let mut t = vec![vec![0.0; n_max + 2]; n_max + 1];
    if n_max >= 1 {
        t[1][1] = 1.0;
    }
    for n in 1..n_max {
        let nf = n as f64;
        for k in 1..=n + 1 {
            let from_below = if k >= 2 { (k - 1) as f64 * a * t[n][k - 1] } else { 0.0 };
            let stay = if k <= n { (nf - k as f64 * a) * t[n][k] } else { 0.0 };
            t[n + 1][k] = (from_below + stay) / nf;
        }
    }
    for row in t.iter_mut() {
        row.pop();
    }
    t
}

/// `P(K_n = k) = alpha^{k-1} Gamma(k) S_alpha(n,k) / Gamma(n)` for a PD(alpha, 0) partition.
pub fn blocks_pmf(alpha: StableIndex, n: usize, k: usize) -> Result<f64> {
    check_nk(n, k)?;
    Ok(blocks_pmf_table(alpha, n)[n][k])
}

/// Closed form of the block-count law at index 1/2:
/// `C(2k - j - 1, k - 1) 2^{j + 1 - 2k}`.
pub fn blocks_pmf_half(k: usize, j: usize) -> Result<f64> {
    check_nk(k, j)?;
    let expo = j as i32 + 1 - 2 * k as i32;
    if k > 500 {
        let top = (2 * k - j - 1) as f64;
        let ln_binom = ln_gamma(top + 1.0) - ln_gamma(k as f64) - ln_gamma(top - k as f64 + 2.0);
        return Ok((ln_binom + expo as f64 * std::f64::consts::LN_2).exp());
    }
    // C(2k - j - 1, k - 1) = prod_{i=1}^{k-1} (k - j + i) / i
    let mut v = 1.0;
    for i in 1..k {
        v *= (k - j + i) as f64 / i as f64;
    }
    Ok(v * 2f64.powi(expo))
}

fn psi_opts() -> QuadOptions {
    QuadOptions::new(1e-300, 1e-10, 4000)
}

/// `E[h(T_alpha) | K_n = k]` by quadrature of `h` against the conditional
/// density of `T_alpha`.
pub fn psi_weight(alpha: StableIndex, h: &TiltFunction, n: usize, k: usize) -> Result<f64> {
    check_nk(n, k)?;
    if h.index() != alpha {
        return domain(format!("tilt is built at index {}, not {alpha}", h.index()));
    }
    let mut err = None;
    let v = integrate_positive(
        |t| {
            let h_t = h.eval(t);
            if h_t == 0.0 {
                return 0.0;
            }
            match tilted_y_pdf(alpha, n, k, t) {
                Ok(d) => h_t * d,
                Err(e) => {
                    err = Some(e);
                    0.0
                }
            }
        },
        &psi_opts(),
    )?;
    match err {
        Some(e) => Err(e),
        None => Ok(v),
    }
}

// E[h(T) | K_n = k] for the generalized gamma tilts, reduced to one integral
fn gg_psi(alpha: StableIndex, zeta: f64, m: u8, n: usize, k: usize) -> Result<f64> {
    let a = alpha.get();
    let tau = zeta.powf(1.0 / a);
    let (nf, kf) = (n as f64, k as f64);
    let base = a.ln() - ln_gamma(kf);
    let v = integrate_positive(
        |u| {
            let w = u + tau;
            let wa = w.powf(a);
            let ln = base + (nf - 1.0) * u.ln() - wa;
            if m == 0 {
                (ln + (kf * a - nf) * w.ln() + zeta).exp()
            } else {
                (ln + (kf * a - nf - 1.0) * w.ln()).exp() * ((nf - kf * a) + a * wa)
            }
        },
        &psi_opts(),
    )?;
    if m == 0 {
        Ok(v)
    } else {
        Ok(v * ((1.0 / a - 1.0) * zeta.ln() + zeta - a.ln()).exp())
    }
}

// E[h(T) | K_n = k] for the Mittag-Leffler tilt: T given K_n = k is
// T_{alpha, k alpha} / B with B ~ Beta(k alpha, n - k alpha)
fn ml_psi(alpha: StableIndex, lambda: f64, norm: f64, n: usize, k: usize) -> Result<f64> {
    let a = alpha.get();
    let p = k as f64 * a;
    let q = n as f64 - p;
    let ln_beta = ln_gamma(p) + ln_gamma(q) - ln_gamma(p + q);
    let mut err = None;
    let v = tanh_sinh(
        |l, r| {
            let dens = ((p - 1.0) * l.ln() + (q - 1.0) * r.ln() - ln_beta).exp();
            if dens == 0.0 {
                return 0.0;
            }
            match gml_function(alpha, p, 0, lambda * l.powf(a)) {
                Ok(g) => dens * g,
                Err(e) => {
                    err = Some(e);
                    0.0
                }
            }
        },
        0.0,
        1.0,
        1e-11,
        10,
    )?;
    match err {
        Some(e) => Err(e),
        None => Ok(v / norm),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    ClosedForm,
    Quadrature,
    Mixture,
}

/// Table of Gibbs weights `Psi[n][k]`, `1 <= k <= n <= n_max`, multiplying the
/// PD(alpha, 0) EPPF.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GibbsWeights {
    alpha: StableIndex,
    psi: Vec<Vec<f64>>,
    provenance: Provenance,
    label: String,
}

fn empty_table(n_max: usize) -> Vec<Vec<f64>> {
    (0..=n_max).map(|n| vec![0.0; n + 1]).collect()
}

fn check_n_max(n_max: usize) -> Result<()> {
    if n_max == 0 {
        domain("n_max must be at least 1")
    } else {
        Ok(())
    }
}

impl GibbsWeights {
    /// Takes a table indexed `[n][k]`; row `n` must have `n + 1` entries.
    pub fn from_table(alpha: StableIndex, psi: Vec<Vec<f64>>, provenance: Provenance, label: &str) -> Result<Self> {
        if psi.len() < 2 {
            return domain("Gibbs table needs at least one row");
        }
        for (n, row) in psi.iter().enumerate() {
            if row.len() != n + 1 {
                return domain(format!("row {n} of the Gibbs table has {} entries", row.len()));
            }
            if row.iter().skip(1).any(|v| !(*v >= 0.0) || !v.is_finite()) {
                return domain(format!("row {n} of the Gibbs table has invalid entries"));
            }
        }
        Ok(GibbsWeights {
            alpha,
            psi,
            provenance,
            label: label.to_string(),
        })
    }

    /// All weights one: PD(alpha, 0) itself.
    pub fn unit(alpha: StableIndex, n_max: usize) -> Result<Self> {
        check_n_max(n_max)?;
        let mut t = empty_table(n_max);
        for row in t.iter_mut().skip(1) {
            for v in row.iter_mut().skip(1) {
                *v = 1.0;
            }
        }
        Self::from_table(alpha, t, Provenance::ClosedForm, "unit")
    }

    /// PD(alpha, theta): `Psi = Gamma(theta/alpha + k) Gamma(theta + 1) Gamma(n)
    /// / (Gamma(theta/alpha + 1) Gamma(theta + n) Gamma(k))`.
    pub fn pd_theta(alpha: StableIndex, theta: f64, n_max: usize) -> Result<Self> {
        check_theta(alpha, theta)?;
        check_n_max(n_max)?;
        let r = theta / alpha.get();
        let mut t = empty_table(n_max);
        for n in 1..=n_max {
            let nf = n as f64;
            for k in 1..=n {
                let kf = k as f64;
                t[n][k] = (ln_gamma(r + kf) + ln_gamma(theta + 1.0) + ln_gamma(nf)
                    - ln_gamma(r + 1.0)
                    - ln_gamma(theta + nf)
                    - ln_gamma(kf))
                .exp();
            }
        }
        Self::from_table(alpha, t, Provenance::ClosedForm, &format!("pd_theta({theta})"))
    }

    /// Weights of `PK_alpha(h f_alpha)`. Closed forms where available, one-dimensional
    /// reductions for the generalized gamma and Mittag-Leffler tilts, and
    /// [`psi_weight`] otherwise.
    pub fn from_tilt(h: &TiltFunction, n_max: usize) -> Result<Self> {
        check_n_max(n_max)?;
        let alpha = h.index();
        match h.kind() {
            TiltKind::Unit => return Self::unit(alpha, n_max),
            TiltKind::PdTheta { theta } => return Self::pd_theta(alpha, *theta, n_max),
            _ => {}
        }
        let norm = match h.kind() {
            TiltKind::MlLambda { lambda } => ml_function(alpha, *lambda)?,
            _ => 1.0,
        };
        let mut t = empty_table(n_max);
        for n in 1..=n_max {
            for k in 1..=n {
                t[n][k] = match h.kind() {
                    TiltKind::GgZeta { zeta, m } => gg_psi(alpha, *zeta, *m, n, k)?,
                    TiltKind::MlLambda { lambda } => ml_psi(alpha, *lambda, norm, n, k)?,
                    _ => psi_weight(alpha, h, n, k)?,
                };
            }
        }
        Self::from_table(alpha, t, Provenance::Quadrature, &h.label())
    }

    /// Conditional weights given `T_beta = y`: `f^{(n - k beta)}_{beta, k beta}(y) / f_beta(y)`.
    pub fn cond(beta: StableIndex, y: f64, n_max: usize) -> Result<Self> {
        check_n_max(n_max)?;
        let f = stable_density_at(beta, y)?;
        let mut t = empty_table(n_max);
        for n in 1..=n_max {
            for k in 1..=n {
                t[n][k] = if n == 1 { 1.0 } else { tilted_y_pdf(beta, n, k, y)? / f };
            }
        }
        Self::from_table(beta, t, Provenance::Quadrature, &format!("cond({beta},{y})"))
    }

    /// Weights at index `alpha` of the fragmentation of a PD(beta | y) partition.
    pub fn frag_cond(alpha: StableIndex, beta: StableIndex, y: f64, n_max: usize) -> Result<Self> {
        check_order(alpha, beta)?;
        let inner = Self::cond(beta, y, n_max)?;
        let mut w = Self::frag(alpha, &inner)?;
        w.label = format!("frag_cond({alpha},{beta},{y})");
        Ok(w)
    }

    /// Weights at index `alpha` of the fragmentation of the Gibbs partition `psi_beta`:
    /// `sum_j P^{(k)}_{beta/alpha}(j) Psi^{[beta]}[n][j]`.
    pub fn frag(alpha: StableIndex, psi_beta: &GibbsWeights) -> Result<Self> {
        let beta = psi_beta.alpha;
        check_order(alpha, beta)?;
        let ratio = beta.ratio(alpha)?;
        let n_max = psi_beta.n_max();
        let mix = blocks_pmf_table(ratio, n_max);
        let mut t = empty_table(n_max);
        for n in 1..=n_max {
            for k in 1..=n {
                t[n][k] = (1..=k).map(|j| mix[k][j] * psi_beta.psi[n][j]).sum();
            }
        }
        Self::from_table(alpha, t, Provenance::Mixture, &format!("frag({alpha},{})", psi_beta.label))
    }

    pub fn alpha(&self) -> StableIndex {
        self.alpha
    }

    pub fn n_max(&self) -> usize {
        self.psi.len() - 1
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn psi(&self, n: usize, k: usize) -> Result<f64> {
        check_nk(n, k)?;
        if n > self.n_max() {
            return domain(format!("n = {n} exceeds the Gibbs table size {}", self.n_max()));
        }
        Ok(self.psi[n][k])
    }

    /// `P(K_n = k)` under this Gibbs partition.
    pub fn block_pmf(&self, n: usize, k: usize) -> Result<f64> {
        Ok(self.psi(n, k)? * blocks_pmf(self.alpha, n, k)?)
    }

    /// `|sum_k Psi[n][k] P^{(n)}_{alpha,0}(k) - 1|`.
    pub fn normalization_error(&self, n: usize) -> Result<f64> {
        if n == 0 || n > self.n_max() {
            return domain(format!("n = {n} outside the Gibbs table"));
        }
        let row = &blocks_pmf_table(self.alpha, n)[n];
        let s: f64 = (1..=n).map(|k| self.psi[n][k] * row[k]).sum();
        Ok((s - 1.0).abs())
    }
}

impl Eppf for GibbsWeights {
    fn prob(&self, c: &Composition) -> Result<f64> {
        gibbs_eppf(self, c)
    }
}

fn stable_density_at(beta: StableIndex, y: f64) -> Result<f64> {
    if !(y > 0.0) || !y.is_finite() {
        return domain(format!("need y > 0, got {y}"));
    }
    let f = stable_pdf(beta, y)?;
    if f > 0.0 {
        Ok(f)
    } else {
        Err(numeric(format!("stable density at {y} underflows"), 0.0))
    }
}

pub fn gibbs_eppf(w: &GibbsWeights, c: &Composition) -> Result<f64> {
    Ok(w.psi(c.n(), c.k())? * pd_eppf(w.alpha, 0.0, c)?)
}

/// EPPF of a PD(beta | y) partition, the PD(beta, 0) law given `T_beta = y`.
pub fn cond_eppf(beta: StableIndex, y: f64, c: &Composition) -> Result<f64> {
    let f = stable_density_at(beta, y)?;
    let (n, k) = (c.n(), c.k());
    let ratio = if n == 1 { 1.0 } else { tilted_y_pdf(beta, n, k, y)? / f };
    Ok(ratio * pd_eppf(beta, 0.0, c)?)
}

fn frag_cond_weight(alpha: StableIndex, beta: StableIndex, y: f64, n: usize, k: usize) -> Result<f64> {
    check_order(alpha, beta)?;
    let f = stable_density_at(beta, y)?;
    let mix = blocks_pmf_table(beta.ratio(alpha)?, k);
    let mut s = 0.0;
    for j in 1..=k {
        let r = if n == 1 { 1.0 } else { tilted_y_pdf(beta, n, j, y)? / f };
        s += mix[k][j] * r;
    }
    Ok(s)
}

/// EPPF of the PD(alpha, -beta) fragmentation of a PD(beta | y) partition.
pub fn frag_cond_eppf(alpha: StableIndex, beta: StableIndex, y: f64, c: &Composition) -> Result<f64> {
    Ok(frag_cond_weight(alpha, beta, y, c.n(), c.k())? * pd_eppf(alpha, 0.0, c)?)
}

/// EPPF of the PD(alpha, -beta) fragmentation of the Gibbs partition `psi_beta`.
pub fn frag_eppf(alpha: StableIndex, beta: StableIndex, psi_beta: &GibbsWeights, c: &Composition) -> Result<f64> {
    check_order(alpha, beta)?;
    if psi_beta.alpha() != beta {
        return domain(format!("weights are built at index {}, not {beta}", psi_beta.alpha()));
    }
    let k = c.k();
    let mix = blocks_pmf_table(beta.ratio(alpha)?, k);
    let mut s = 0.0;
    for j in 1..=k {
        s += mix[k][j] * psi_beta.psi(c.n(), j)?;
    }
    Ok(s * pd_eppf(alpha, 0.0, c)?)
}

/// Law of the number of blocks after fragmenting a PD(beta | y) partition of `[n]`.
pub fn cond_blocks_pmf(alpha: StableIndex, beta: StableIndex, y: f64, n: usize, k: usize) -> Result<f64> {
    check_nk(n, k)?;
    Ok(frag_cond_weight(alpha, beta, y, n, k)? * blocks_pmf(alpha, n, k)?)
}

/// Sequential assignment probabilities for the next item given partition `p`:
/// one entry per existing block, then one for a new block.
pub fn predictive_weights(eppf: &dyn Eppf, p: &SetPartition) -> Result<Vec<f64>> {
    let sizes: Vec<usize> = p.blocks().iter().map(|b| b.len()).collect();
    eppf.predictive(&sizes)
}

/// Adapts a closure into an [`Eppf`].
pub struct FnEppf<F>(pub F);

impl<F> Eppf for FnEppf<F>
where
    F: Fn(&Composition) -> Result<f64> + Send + Sync,
{
    fn prob(&self, c: &Composition) -> Result<f64> {
        (self.0)(c)
    }
}
