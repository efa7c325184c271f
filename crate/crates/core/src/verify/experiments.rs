//! The identity experiments: Monte Carlo comparisons of the operators with the
//! closed-form laws they should produce, and deterministic cross-checks of the
//! evaluation layer.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma, ln_gamma};

use super::stats::{contingency_test, ks_from_sorted_cdf, MeanEstimate};
use super::{chi_square_block_counts, chi_square_vs_eppf, partition_homogeneity, ExperimentReport, PartitionCells};
use crate::eppf::{
    blocks_pmf, blocks_pmf_table, cond_eppf, frag_cond_eppf, frag_eppf, pd_eppf, Eppf, FnEppf, GibbsWeights,
    TwoParamPd,
};
use crate::error::{domain, numeric, Error, Result};
use crate::fragcoag::{dependent_coag_sample, frag_set_partition, gg_dual_demo, DependentDraw, FragParams, ZetaLaw};
use crate::partitions::{coagulate, enumerate_set_partitions, integer_partitions, Composition, SetPartition};
use crate::quad::{integrate, integrate_positive, tanh_sinh, QuadOptions};
use crate::samplers::{
    gem_sticks, sample_eppf_partition, sample_gibbs_partition, sample_ml, sample_pk_tilted, RngStream,
};
use crate::special_fn::{
    gen_stirling, gen_stirling_table, gml_function, gml_pdf, hermite_fn, ml_pdf, stable_pdf, StableIndex,
};
use crate::stable_density::StableDensity;
use crate::tilt::TiltFunction;

/// Pass threshold for first-moment identities, in standard errors.
pub const MOMENT_Z: f64 = 3.0;
/// Draws per rayon task; each task owns a substream, so results do not depend
/// on the thread count.
const CHUNK: usize = 1024;

fn idx(a: f64) -> Result<StableIndex> {
    StableIndex::new(a)
}

/// Runs `count` independent draws of `f` in parallel, deterministically.
pub fn parallel_draws<T, F>(count: usize, rng: &RngStream, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&mut RngStream) -> Result<T> + Sync,
{
    let chunks = count.div_ceil(CHUNK);
    let parts: Vec<Result<Vec<T>>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut r = rng.substream(c as u64);
            let len = CHUNK.min(count - c * CHUNK);
            (0..len).map(|_| f(&mut r)).collect()
        })
        .collect();
    let mut out = Vec::with_capacity(count);
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

fn chi_row(name: &str, samples: &[SetPartition], eppf: &dyn Eppf, n: usize, rng: &RngStream) -> Result<ExperimentReport> {
    let t = chi_square_vs_eppf(samples, eppf, n)?;
    Ok(ExperimentReport::from_test(name, &t, samples.len() as u64, rng.seed()))
}

fn z_row(name: &str, x: &[f64], target: f64, rng: &RngStream) -> ExperimentReport {
    let est = MeanEstimate::of(x);
    let z = est.z_score(target);
    ExperimentReport {
        name: name.to_string(),
        statistic: z,
        p_value: None,
        abs_error: Some((est.mean - target).abs()),
        n_samples: x.len() as u64,
        pass: z < MOMENT_Z,
        seed: rng.seed(),
        runtime_ms: 0,
    }
}

fn independence_row(name: &str, a: &[&SetPartition], b: &[&SetPartition], n: usize, rng: &RngStream) -> Result<ExperimentReport> {
    let cells = PartitionCells::new(n)?;
    let mut table = vec![vec![0u64; cells.len()]; cells.len()];
    for (x, y) in a.iter().zip(b) {
        table[cells.cell(x)?][cells.cell(y)?] += 1;
    }
    let t = contingency_test(&table)?;
    Ok(ExperimentReport::from_test(name, &t, a.len() as u64, rng.seed()))
}

fn pd(alpha: f64, theta: f64) -> Result<TwoParamPd> {
    TwoParamPd::new(idx(alpha)?, theta)
}

/// FRAG_{alpha,-beta} applied to exact PD(beta, theta) partitions of `[n]`,
/// compared with PD(alpha, theta).
pub fn experiment_duality_pd(alpha: f64, beta: f64, theta: f64, n: usize, samples: usize, rng: &RngStream) -> Result<ExperimentReport> {
    let fp = FragParams::new(idx(alpha)?, idx(beta)?)?;
    let base = pd(beta, theta)?;
    let target = pd(alpha, theta)?;
    let out = parallel_draws(samples, rng, |r| {
        let p = sample_eppf_partition(&base, n, r)?;
        frag_set_partition(&p, &fp, r)
    })?;
    chi_row("duality-pd", &out, &target, n, rng)
}

/// Coagulation of PD(alpha, theta) by an independent PD(beta/alpha, theta/alpha)
/// partition, compared with PD(beta, theta).
pub fn experiment_coag_pd(alpha: f64, beta: f64, theta: f64, n: usize, samples: usize, rng: &RngStream) -> Result<ExperimentReport> {
    FragParams::new(idx(alpha)?, idx(beta)?)?;
    let inner = pd(alpha, theta)?;
    let outer = pd(beta / alpha, theta / alpha)?;
    let target = pd(beta, theta)?;
    let out = parallel_draws(samples, rng, |r| {
        let p = sample_eppf_partition(&inner, n, r)?;
        let q = sample_eppf_partition(&outer, p.k(), r)?;
        coagulate(&p, &q)
    })?;
    chi_row("coag-pd", &out, &target, n, rng)
}

/// Two-step fragmentation beta -> sigma -> alpha against the one-step
/// beta -> alpha fragmentation of a single block of size `n`.
pub fn experiment_frag_composition(beta: f64, sigma: f64, alpha: f64, n: usize, samples: usize, rng: &RngStream) -> Result<ExperimentReport> {
    let one = FragParams::new(idx(alpha)?, idx(beta)?)?;
    let first = FragParams::new(idx(sigma)?, idx(beta)?)?;
    let second = FragParams::new(idx(alpha)?, idx(sigma)?)?;
    let block = SetPartition::one_block(n)?;
    let direct = parallel_draws(samples, &rng.substream(0), |r| frag_set_partition(&block, &one, r))?;
    let twice = parallel_draws(samples, &rng.substream(1), |r| {
        let p = frag_set_partition(&block, &first, r)?;
        frag_set_partition(&p, &second, r)
    })?;
    let t = partition_homogeneity(&direct, &twice, n)?;
    Ok(ExperimentReport::from_test("frag-composition", &t, 2 * samples as u64, rng.seed()))
}

fn psi_row(w: &GibbsWeights, n: usize) -> Result<Vec<f64>> {
    (0..=n).map(|k| if k == 0 { Ok(0.0) } else { w.psi(n, k) }).collect()
}

/// Fragmentation of `PK_beta(h f_beta)` partitions compared with `frag_eppf`.
pub fn experiment_frag_gibbs(alpha: f64, h: &TiltFunction, n: usize, samples: usize, rng: &RngStream) -> Result<ExperimentReport> {
    let beta = h.index();
    let fp = FragParams::new(idx(alpha)?, beta)?;
    let w = GibbsWeights::from_tilt(h, n)?;
    let row = psi_row(&w, n)?;
    let out = parallel_draws(samples, rng, |r| {
        let p = sample_gibbs_partition(beta, &row, n, r)?;
        frag_set_partition(&p, &fp, r)
    })?;
    let a = fp.alpha();
    let target = FnEppf(|c: &Composition| frag_eppf(a, beta, &w, c));
    chi_row("frag-gibbs", &out, &target, n, rng)
}

/// Dependent coagulation under the tilt `h`: the coagulated partition against
/// the `PK_beta(h f_beta)` EPPF. For the unit tilt, also the margins of
/// `(v_tilde, q)` and their independence.
pub fn experiment_dependent_coag(name: &str, alpha: f64, h: &TiltFunction, n: usize, samples: usize, rng: &RngStream) -> Result<Vec<ExperimentReport>> {
    let fp = FragParams::new(idx(alpha)?, h.index())?;
    let d: Vec<DependentDraw> = parallel_draws(samples, rng, |r| dependent_coag_sample(&fp, h, n, r))?;
    let v: Vec<SetPartition> = d.iter().map(|x| x.v.clone()).collect();
    let w = GibbsWeights::from_tilt(h, n)?;
    let mut rows = vec![chi_row(&format!("{name}:v"), &v, &w, n, rng)?];
    if matches!(h.kind(), crate::tilt::TiltKind::Unit) {
        let vt: Vec<SetPartition> = d.iter().map(|x| x.pair.v_tilde.clone()).collect();
        let q: Vec<SetPartition> = d.iter().map(|x| x.q_full.clone()).collect();
        rows.push(chi_row(&format!("{name}:v_tilde"), &vt, &pd(alpha, 0.0)?, n, rng)?);
        rows.push(chi_row(&format!("{name}:q"), &q, &pd(fp.ratio().get(), 0.0)?, n, rng)?);
        let a: Vec<&SetPartition> = vt.iter().collect();
        let b: Vec<&SetPartition> = q.iter().collect();
        rows.push(independence_row(&format!("{name}:independence"), &a, &b, n, rng)?);
    }
    Ok(rows)
}

/// The generalized gamma dual with `zeta` randomized so that `v_tilde` is
/// PD(alpha, theta) and `q` is PD(beta/alpha, theta/alpha), independent.
pub fn experiment_gg_dual(name: &str, alpha: f64, beta: f64, theta: f64, m: u8, n: usize, samples: usize, rng: &RngStream) -> Result<Vec<ExperimentReport>> {
    let fp = FragParams::new(idx(alpha)?, idx(beta)?)?;
    let law = ZetaLaw::PdTheta { theta };
    let d = parallel_draws(samples, rng, |r| gg_dual_demo(&fp, law, m, n, r))?;
    let vt: Vec<SetPartition> = d.iter().map(|x| x.draw.pair.v_tilde.clone()).collect();
    let q: Vec<SetPartition> = d.iter().map(|x| x.draw.q_full.clone()).collect();
    let v: Vec<SetPartition> = d.iter().map(|x| x.draw.v.clone()).collect();
    let a: Vec<&SetPartition> = vt.iter().collect();
    let b: Vec<&SetPartition> = q.iter().collect();
    Ok(vec![
        chi_row(&format!("{name}:v_tilde"), &vt, &pd(alpha, theta)?, n, rng)?,
        chi_row(&format!("{name}:q"), &q, &pd(beta / alpha, theta / alpha)?, n, rng)?,
        independence_row(&format!("{name}:independence"), &a, &b, n, rng)?,
        chi_row(&format!("{name}:v"), &v, &pd(beta, theta)?, n, rng)?,
    ])
}

/// `max_c |int frag_cond_eppf(alpha, beta, y, c) f_beta(y) dy - pd_eppf(alpha, 0, c)|`.
pub fn experiment_disintegration(alpha: f64, beta: f64, comps: &[Vec<usize>], tol: f64) -> Result<ExperimentReport> {
    let (a, b) = (idx(alpha)?, idx(beta)?);
    let dens = StableDensity::shared(b)?;
    let opts = QuadOptions::new(1e-12, 1e-9, 2000);
    let mut err: f64 = 0.0;
    for sizes in comps {
        let c = Composition::new(sizes.clone())?;
        let mut failure = None;
        let v = integrate_positive(
            |y| {
                let f = dens.pdf(y).unwrap_or(0.0);
                if f < 1e-300 {
                    return 0.0;
                }
                match frag_cond_eppf(a, b, y, &c) {
                    Ok(p) => p * f,
                    Err(e) => {
                        failure.get_or_insert(e);
                        f64::NAN
                    }
                }
            },
            &opts,
        );
        if let Some(e) = failure {
            return Err(e);
        }
        err = err.max((v? - pd_eppf(a, 0.0, &c)?).abs());
    }
    Ok(ExperimentReport::from_error("disintegration", err, tol, 0, 0))
}

// ---- diversity representation ------------------------------------------------

/// Route-A draw count and the number of leading terms given their own ML draw;
/// later terms use the ML mean, which keeps the expectation and changes the
/// spread by a negligible amount.
pub const DIVERSITY_JUMPS: usize = 2000;
pub const EXACT_TERMS: usize = 200;

fn ml_mean(alpha: f64, theta: f64) -> f64 {
    (ln_gamma(theta / alpha + 2.0) + ln_gamma(theta + 1.0) - ln_gamma(theta + alpha + 1.0) - ln_gamma(theta / alpha + 1.0)).exp()
}

/// One route-A draw of `sum_k P_k^alpha Z_k`, `P ~ PK_beta(h f_beta)`,
/// `Z_k ~ ML(alpha, -beta)`. Jumps beyond the kept ones enter through the
/// expected value of their `alpha`-powers.
pub fn diversity_route_a(alpha: StableIndex, h: &TiltFunction, rng: &mut RngStream) -> Result<f64> {
    let (a, b) = (alpha.get(), h.index().get());
    let (m, total) = sample_pk_tilted(h.index(), h, DIVERSITY_JUMPS, rng)?;
    let ez = ml_mean(a, -b);
    let w = m.weights();
    let mut sum = 0.0;
    for (k, p) in w.iter().enumerate() {
        let z = if k < EXACT_TERMS { sample_ml(alpha, -b, rng)? } else { ez };
        sum += p.powf(a) * z;
    }
    // arrival time of the last kept jump, then the integral of the jump law beyond it
    let lg = ln_gamma(1.0 - b);
    let last = w.last().copied().unwrap_or(1.0) * total;
    let arrival = (-b * last.ln() - lg).exp();
    let r = a / b;
    let tail = (-r * lg).exp() * arrival.powf(1.0 - r) / (r - 1.0) / total.powf(a);
    Ok(sum + tail * ez)
}

/// CDF of a density on `[0, upper]` tabulated on `nodes` equal intervals and
/// read off by cubic Hermite interpolation with the density as slope.
pub struct GridCdf {
    step: f64,
    cdf: Vec<f64>,
    pdf: Vec<f64>,
}

impl GridCdf {
    pub fn new<F: FnMut(f64) -> Result<f64>>(mut density: F, upper: f64, nodes: usize) -> Result<Self> {
        if !(upper > 0.0) || nodes < 2 {
            return domain("grid needs a positive upper end and at least two nodes");
        }
        let step = upper / nodes as f64;
        let opts = QuadOptions::new(1e-14, 1e-11, 200);
        let mut cdf = vec![0.0];
        let mut pdf = vec![density(1e-12 * step)?];
        let mut failure = None;
        for i in 1..=nodes {
            let (lo, hi) = ((i - 1) as f64 * step, i as f64 * step);
            let v = integrate(
                |x| match density(x) {
                    Ok(d) => d,
                    Err(e) => {
                        failure.get_or_insert(e);
                        f64::NAN
                    }
                },
                lo,
                hi,
                &opts,
            );
            if let Some(e) = failure.take() {
                return Err(e);
            }
            cdf.push(cdf[i - 1] + v?);
            pdf.push(density(hi)?);
        }
        Ok(GridCdf { step, cdf, pdf })
    }

    pub fn total(&self) -> f64 {
        *self.cdf.last().expect("nonempty")
    }

    pub fn eval(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let last = self.cdf.len() - 1;
        let i = ((x / self.step) as usize).min(last - 1);
        let u = (x / self.step - i as f64).min(1.0);
        let (f0, f1) = (self.cdf[i], self.cdf[i + 1]);
        let (d0, d1) = (self.pdf[i] * self.step, self.pdf[i + 1] * self.step);
        let u2 = u * u;
        let u3 = u2 * u;
        (2.0 * u3 - 3.0 * u2 + 1.0) * f0 + (u3 - 2.0 * u2 + u) * d0 + (-2.0 * u3 + 3.0 * u2) * f1 + (u3 - u2) * d1
    }
}

/// Route B: density `E[h(s^{-1/alpha} T_{beta/alpha}^{1/alpha})] g_alpha(s)`.
pub fn diversity_density(alpha: StableIndex, h: &TiltFunction, s: f64) -> Result<f64> {
    let g = ml_pdf(alpha, s)?;
    if g == 0.0 {
        return Ok(0.0);
    }
    Ok(h.subordinated_mean(alpha, s)? * g)
}

/// KS test of route-A draws of the alpha-diversity after fragmenting a
/// `PK_beta(h f_beta)` partition against the route-B CDF; for the unit tilt
/// also the mean against `1 / Gamma(1 + alpha)`.
pub fn experiment_diversity_rep(name: &str, alpha: f64, h: &TiltFunction, samples: usize, rng: &RngStream) -> Result<Vec<ExperimentReport>> {
    let a = idx(alpha)?;
    FragParams::new(a, h.index())?;
    let mut x = parallel_draws(samples, rng, |r| diversity_route_a(a, h, r))?;
    x.sort_by(f64::total_cmp);
    let upper = x.last().copied().unwrap_or(1.0) * (1.0 + 1e-9);
    let grid = GridCdf::new(|s| diversity_density(a, h, s), upper, 600)?;
    let cdf: Vec<f64> = x.iter().map(|&s| grid.eval(s)).collect();
    let t = ks_from_sorted_cdf(&cdf)?;
    let mut rows = vec![ExperimentReport::from_test(&format!("{name}:ks"), &t, samples as u64, rng.seed())];
    if matches!(h.kind(), crate::tilt::TiltKind::Unit) {
        rows.push(z_row(&format!("{name}:mean"), &x, 1.0 / gamma(1.0 + alpha), rng));
    }
    Ok(rows)
}

// ---- fixed points ----------------------------------------------------------------

/// Which form of the size-biased factorization is used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FixedPointVariant {
    /// `theta = l alpha - beta`, factors `W^alpha`, `W_j ~ Beta(j alpha - beta, 1 - alpha)`.
    AlphaScale,
    /// `theta = l - beta`, factors `B_j ~ Beta((alpha - beta + j - 1)/alpha, (1 - alpha)/alpha)`,
    /// which is what iterating `Z_{alpha,t} = Z_{alpha,t+1} B` one unit at a time gives.
    UnitScale,
    /// `theta = l - beta` with `B_j ~ Beta((j alpha - beta)/alpha, (1 - alpha)/alpha)`.
    /// Agrees with `UnitScale` for `l = 1` only; for `l >= 2` the first moment is off
    /// (about 0.905 instead of 1 at alpha = 0.6, beta = 0.3, l = 2).
    UnitScaleJAlpha,
}

impl FixedPointVariant {
    pub fn label(self) -> &'static str {
        match self {
            FixedPointVariant::AlphaScale => "i",
            FixedPointVariant::UnitScale => "ii",
            FixedPointVariant::UnitScaleJAlpha => "ii-jalpha",
        }
    }

    pub fn theta(self, alpha: f64, beta: f64, ell: usize) -> f64 {
        match self {
            FixedPointVariant::AlphaScale => ell as f64 * alpha - beta,
            FixedPointVariant::UnitScale | FixedPointVariant::UnitScaleJAlpha => ell as f64 - beta,
        }
    }

    // Beta parameters of the j-th factor and the power it is raised to
    fn factor(self, alpha: f64, beta: f64, j: usize) -> (f64, f64, f64) {
        let ja = j as f64 * alpha - beta;
        match self {
            FixedPointVariant::AlphaScale => (ja, 1.0 - alpha, alpha),
            FixedPointVariant::UnitScale => ((alpha - beta + j as f64 - 1.0) / alpha, (1.0 - alpha) / alpha, 1.0),
            FixedPointVariant::UnitScaleJAlpha => (ja / alpha, (1.0 - alpha) / alpha, 1.0),
        }
    }
}

fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// One draw of the pair `(sum_k P_k^alpha prod_k, sum_k P_k^alpha prod_k Z_k)`
/// with `P ~ GEM(beta, theta)`.
pub fn fixed_point_rhs(
    alpha: f64,
    beta: f64,
    ell: usize,
    variant: FixedPointVariant,
    n_sticks: usize,
    rng: &mut RngStream,
) -> Result<(f64, f64)> {
    let theta = variant.theta(alpha, beta, ell);
    let a = idx(alpha)?;
    let factors: Vec<(f64, f64, f64)> = (1..=ell).map(|j| variant.factor(alpha, beta, j)).collect();
    let mean_prod: f64 = factors
        .iter()
        .map(|&(p, q, e)| (ln_beta(p + e, q) - ln_beta(p, q)).exp())
        .product();
    let ez = ml_mean(alpha, theta);
    let (sticks, rest) = gem_sticks(beta, theta, n_sticks, rng)?;
    let (mut moment, mut value) = (0.0, 0.0);
    for (k, p) in sticks.iter().enumerate() {
        let w = p.powf(alpha);
        if k < EXACT_TERMS {
            let mut prod = 1.0;
            for &(fp, fq, e) in &factors {
                prod *= rng.beta(fp, fq)?.powf(e);
            }
            moment += w * prod;
            value += w * prod * sample_ml(a, theta, rng)?;
        } else {
            moment += w * mean_prod;
            value += w * mean_prod * ez;
        }
    }
    // what is left is rest times an independent GEM(beta, theta + N beta)
    let th = theta + n_sticks as f64 * beta;
    let tail = rest.powf(alpha) * (ln_beta(alpha - beta, th + beta) - ln_beta(1.0 - beta, th + beta)).exp() * mean_prod;
    Ok((moment + tail, value + tail * ez))
}

fn gml_density(alpha: StableIndex, theta: f64) -> Result<impl Fn(f64) -> f64> {
    let dens = StableDensity::shared(alpha)?;
    let a = alpha.get();
    let ln_norm = ln_gamma(theta / a + 1.0) - ln_gamma(theta + 1.0);
    Ok(move |s: f64| {
        let t = s.powf(-1.0 / a);
        let f = dens.pdf(t).unwrap_or(f64::NAN);
        if f == 0.0 {
            return 0.0;
        }
        f * (((theta - 1.0) / a - 1.0) * s.ln() - ln_norm).exp() / a
    })
}

/// Both sides of the fixed-point equation at `theta = l alpha - beta` or
/// `l - beta`: the first-moment identity `E[sum P^alpha prod] = 1` and a KS test
/// of the right side against the ML(alpha, theta) CDF.
pub fn experiment_fixed_point(
    alpha: f64,
    beta: f64,
    ell: usize,
    variant: FixedPointVariant,
    n_sticks: usize,
    samples: usize,
    rng: &RngStream,
) -> Result<Vec<ExperimentReport>> {
    if !(0.0..alpha).contains(&beta) || ell == 0 || n_sticks == 0 {
        return domain(format!("fixed point needs 0 <= beta < alpha, l >= 1 and sticks, got beta={beta}, alpha={alpha}, l={ell}"));
    }
    let a = idx(alpha)?;
    let theta = variant.theta(alpha, beta, ell);
    let draws = parallel_draws(samples, rng, |r| fixed_point_rhs(alpha, beta, ell, variant, n_sticks, r))?;
    let name = format!("fixed-point-{}:alpha={alpha}:beta={beta}:ell={ell}", variant.label());
    let moments: Vec<f64> = draws.iter().map(|d| d.0).collect();
    let mut x: Vec<f64> = draws.iter().map(|d| d.1).collect();
    x.sort_by(f64::total_cmp);
    let cdf = super::stats::cdf_at_sorted(gml_density(a, theta)?, &x)?;
    let t = ks_from_sorted_cdf(&cdf)?;
    Ok(vec![
        z_row(&format!("{name}:moment"), &moments, 1.0, rng),
        ExperimentReport::from_test(&format!("{name}:ks"), &t, samples as u64, rng.seed()),
    ])
}

// ---- Hermite cross-checks -------------------------------------------------------------

fn compositions_with(n: usize, k: usize) -> Result<Vec<Composition>> {
    Ok(integer_partitions(n)?.into_iter().filter(|c| c.k() == k).collect())
}

fn half() -> StableIndex {
    StableIndex::new(0.5).expect("1/2")
}

fn hermite_index(n: usize, k: usize) -> f64 {
    n as f64 - 0.5 * (k as f64 + 1.0)
}

/// `s^{k-1} H_{k+1-2n}(s) Gamma(n) 2^{n-1} / Gamma(k)`, the conditional weight of
/// a PD(1/2 | s^{-2}/2) partition.
pub fn hermite_weight(n: usize, k: usize, s: f64) -> Result<f64> {
    let (nf, kf) = (n as f64, k as f64);
    Ok(s.powf(kf - 1.0) * hermite_fn(hermite_index(n, k), s)? * (ln_gamma(nf) - ln_gamma(kf) + (nf - 1.0) * 2f64.ln()).exp())
}

/// Hermite form of `cond_eppf(1/2, s^{-2}/2, c)`.
pub fn hermite_eppf(s: f64, c: &Composition) -> Result<f64> {
    Ok(hermite_weight(c.n(), c.k(), s)? * pd_eppf(half(), 0.0, c)?)
}

/// Hermite mixture form of `frag_cond_eppf(alpha, 1/2, s^{-2}/2, c)`, the
/// mixing law being the block count of PD(1/(2 alpha), 0).
pub fn hermite_mixture_eppf(alpha: StableIndex, s: f64, c: &Composition) -> Result<f64> {
    let mix = StableIndex::new(0.5 / alpha.get())?;
    let (n, k) = (c.n(), c.k());
    let mut sum = 0.0;
    for j in 1..=k {
        sum += blocks_pmf(mix, k, j)? * hermite_weight(n, j, s)?;
    }
    Ok(sum * pd_eppf(alpha, 0.0, c)?)
}

fn levy_pdf(v: f64) -> f64 {
    if v <= 0.0 {
        return 0.0;
    }
    (-1.5 * v.ln() - 0.25 / v).exp() / (2.0 * std::f64::consts::PI.sqrt())
}

/// `beta^k t^{-n} / (Gamma(n - k beta) f(t)) int_0^t f(v) (t - v)^{n - k beta - 1} dv`
/// at `beta = 1/2`, by tanh-sinh quadrature on the closed-form Levy density.
pub fn half_g_integral(n: usize, k: usize, t: f64) -> Result<f64> {
    let e = n as f64 - 0.5 * k as f64;
    let integral = tanh_sinh(|v, r| levy_pdf(v) * r.powf(e - 1.0), 0.0, t, 1e-13, 12)?;
    let f = levy_pdf(t);
    if !(f > 0.0) {
        return Err(numeric("Levy density underflows", 0.0));
    }
    Ok((k as f64 * 0.5f64.ln() - n as f64 * t.ln() - ln_gamma(e)).exp() * integral / f)
}

/// Three rows: the conditional EPPF against the Hermite form, the direct
/// integral against `2^{n-k} s^{k-1} H_{k+1-2n}(s)`, and the fragmented
/// conditional EPPF against the Hermite mixture at `alpha > 1/2`.
pub fn experiment_hermite(alpha: f64, cases: &[(usize, usize)], s_grid: &[f64]) -> Result<Vec<ExperimentReport>> {
    let a = idx(alpha)?;
    if !(alpha > 0.5) {
        return domain(format!("the Hermite mixture fragments index 1/2 to alpha > 1/2, got {alpha}"));
    }
    let (mut base, mut gint, mut mixture) = (0.0f64, 0.0f64, 0.0f64);
    for &(n, k) in cases {
        if k == 0 || k > n {
            return domain(format!("need 1 <= k <= n, got ({n},{k})"));
        }
        for &s in s_grid {
            if !(s > 0.0) {
                return domain(format!("need s > 0, got {s}"));
            }
            let y = 0.5 / (s * s);
            for c in compositions_with(n, k)? {
                base = base.max((cond_eppf(half(), y, &c)? - hermite_eppf(s, &c)?).abs());
                mixture = mixture.max((frag_cond_eppf(a, half(), y, &c)? - hermite_mixture_eppf(a, s, &c)?).abs());
            }
            let direct = half_g_integral(n, k, y)?;
            let closed = 2f64.powi(n as i32 - k as i32) * s.powi(k as i32 - 1) * hermite_fn(hermite_index(n, k), s)?;
            gint = gint.max((direct - closed).abs());
        }
    }
    Ok(vec![
        ExperimentReport::from_error("hermite:base", base, 1e-6, 0, 0),
        ExperimentReport::from_error("hermite:g-integral", gint, 1e-6, 0, 0),
        ExperimentReport::from_error("hermite:mixture", mixture, 1e-5, 0, 0),
    ])
}

// ---- Brownian excursion lengths ---------------------------------------------------------

/// Walk limit of the lazy paint-box; points beyond it become singletons.
pub const BROWNIAN_MAX_TERMS: usize = 10_000_000;

fn chi2_one(rng: &mut RngStream) -> f64 {
    let z = rng.normal();
    z * z
}

/// Partition of `[n]` painted by the masses `s^2/(s^2 + S_{j-1}) - s^2/(s^2 + S_j)`,
/// `S_j` a sum of `j` chi-square(1) variables, generated only as far as needed.
pub fn brownian_paint_box(s: f64, n: usize, rng: &mut RngStream) -> Result<SetPartition> {
    if !(s > 0.0) || n == 0 {
        return domain(format!("need s > 0 and n >= 1, got s={s}, n={n}"));
    }
    let s2 = s * s;
    let mut points: Vec<(f64, usize)> = (0..n).map(|i| (rng.uniform(), i)).collect();
    points.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut labels = vec![0usize; n];
    let mut sum = 0.0;
    let mut next = 0;
    for j in 1..=BROWNIAN_MAX_TERMS {
        sum += chi2_one(rng);
        let covered = sum / (s2 + sum);
        while next < n && points[next].0 < covered {
            labels[points[next].1] = j;
            next += 1;
        }
        if next == n {
            break;
        }
    }
    for (extra, &(_, i)) in points[next..].iter().enumerate() {
        labels[i] = BROWNIAN_MAX_TERMS + 1 + extra;
    }
    SetPartition::from_labels(&labels)
}

/// Paint-box partitions of the explicit masses against `cond_eppf(1/2, s^{-2}/2)`,
/// their block counts against the conditional pmf, the telescoping sum, and the
/// mean of the first mass against quadrature.
pub fn experiment_brownian_sizebias(s: f64, n: usize, samples: usize, rng: &RngStream) -> Result<Vec<ExperimentReport>> {
    let y = 0.5 / (s * s);
    let parts = parallel_draws(samples, &rng.substream(0), |r| brownian_paint_box(s, n, r))?;
    let target = FnEppf(|c: &Composition| cond_eppf(half(), y, c));
    let w = GibbsWeights::cond(half(), y, n)?;
    let pmf: Vec<f64> = (0..=n).map(|k| if k == 0 { Ok(0.0) } else { w.block_pmf(n, k) }).collect::<Result<_>>()?;
    let blocks = chi_square_block_counts(&parts, &pmf)?;

    let s2 = s * s;
    let mut r = rng.substream(1);
    let mut telescope: f64 = 0.0;
    for _ in 0..100 {
        let (mut sum, mut partial) = (0.0, 0.0);
        for _ in 0..10_000 {
            let prev = s2 / (s2 + sum);
            sum += chi2_one(&mut r);
            partial += prev - s2 / (s2 + sum);
        }
        telescope = telescope.max((partial - (1.0 - s2 / (s2 + sum))).abs());
    }
    let first = parallel_draws(samples, &rng.substream(2), |r| {
        let x = chi2_one(r);
        Ok(x / (s2 + x))
    })?;
    // E[X / (s^2 + X)] for X ~ chi-square(1), with x = u^2 to remove the x^{-1/2}
    let expected = integrate_positive(
        |u| {
            let x = u * u;
            2.0 * x / (s2 + x) * (-0.5 * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
        },
        &QuadOptions::default(),
    )?;
    Ok(vec![
        chi_row("brownian-sizebias:partition", &parts, &target, n, rng)?,
        ExperimentReport::from_test("brownian-sizebias:blocks", &blocks, samples as u64, rng.seed()),
        ExperimentReport::from_error("brownian-sizebias:telescope", telescope, 1e-12, 100, rng.seed()),
        z_row("brownian-sizebias:first-mass", &first, expected, rng),
    ])
}

// ---- deterministic identities ------------------------------------------------------------

/// Total probability over all set partitions of `[n]`, `n <= n_max`, for each
/// evaluator; closed forms must hold to 1e-10, quadrature-based ones to 1e-6.
pub fn experiment_eppf_normalization(alpha: f64, beta: f64, n_max: usize) -> Result<Vec<ExperimentReport>> {
    let (a, b) = (idx(alpha)?, idx(beta)?);
    let mut evaluators: Vec<(String, Box<dyn Eppf>, f64)> = Vec::new();
    for th in [-0.25 * alpha, 0.0, 0.5, 2.0] {
        evaluators.push((format!("pd({alpha},{th})"), Box::new(TwoParamPd::new(a, th)?), 1e-10));
    }
    evaluators.push(("gibbs-gg".into(), Box::new(GibbsWeights::from_tilt(&TiltFunction::gg_zeta(a, 1.0, 0)?, n_max)?), 1e-6));
    evaluators.push(("gibbs-gg-m1".into(), Box::new(GibbsWeights::from_tilt(&TiltFunction::gg_zeta(a, 1.0, 1)?, n_max)?), 1e-6));
    evaluators.push(("gibbs-ml".into(), Box::new(GibbsWeights::from_tilt(&TiltFunction::ml_lambda(a, 1.0)?, n_max)?), 1e-6));
    evaluators.push(("cond".into(), Box::new(FnEppf(move |c: &Composition| cond_eppf(a, 1.3, c))), 1e-6));
    evaluators.push(("frag-cond".into(), Box::new(FnEppf(move |c: &Composition| frag_cond_eppf(a, b, 1.0, c))), 1e-6));
    let psi = GibbsWeights::from_tilt(&TiltFunction::gg_zeta(b, 1.0, 0)?, n_max)?;
    evaluators.push(("frag".into(), Box::new(FnEppf(move |c: &Composition| frag_eppf(a, b, &psi, c))), 1e-6));
    let mut rows = Vec::new();
    for (label, e, tol) in &evaluators {
        let mut err: f64 = 0.0;
        for n in 1..=n_max {
            let total: f64 = enumerate_set_partitions(n)?
                .iter()
                .map(|p| e.prob(&p.composition()))
                .sum::<Result<f64>>()?;
            err = err.max((total - 1.0).abs());
        }
        rows.push(ExperimentReport::from_error(&format!("eppf-normalization:{label}"), err, *tol, 0, 0));
    }
    Ok(rows)
}

/// `P_beta(n, j) = sum_k P_alpha(n, k) P_{beta/alpha}(k, j)` for `n <= n_max`.
pub fn experiment_block_composition(pairs: &[(f64, f64)], n_max: usize) -> Result<ExperimentReport> {
    let mut err: f64 = 0.0;
    for &(alpha, beta) in pairs {
        let (a, b) = (idx(alpha)?, idx(beta)?);
        let r = b.ratio(a)?;
        let (pa, pb, pr) = (blocks_pmf_table(a, n_max), blocks_pmf_table(b, n_max), blocks_pmf_table(r, n_max));
        for n in 1..=n_max {
            for j in 1..=n {
                let mix: f64 = (j..=n).map(|k| pa[n][k] * pr[k][j]).sum();
                err = err.max((mix - pb[n][j]).abs());
            }
        }
    }
    Ok(ExperimentReport::from_error("block-composition", err, 1e-8, 0, 0))
}

/// Left side of the moment identity: `sum_j P^{(k)}_{beta/alpha}(j) Gamma(r + j) / (Gamma(r + 1) Gamma(j))`, `r = theta/beta`.
pub fn pitman_moment_lhs(alpha: f64, beta: f64, r: f64, k: usize) -> Result<f64> {
    let ratio = idx(beta / alpha)?;
    let mut s = 0.0;
    for j in 1..=k {
        s += blocks_pmf(ratio, k, j)? * (ln_gamma(r + j as f64) - ln_gamma(r + 1.0) - ln_gamma(j as f64)).exp();
    }
    Ok(s)
}

/// Right side: `Gamma(theta/alpha + k) / (Gamma(theta/alpha + 1) Gamma(k))`.
pub fn pitman_moment_rhs(alpha: f64, beta: f64, r: f64, k: usize) -> f64 {
    let t = r * beta / alpha;
    (ln_gamma(t + k as f64) - ln_gamma(t + 1.0) - ln_gamma(k as f64)).exp()
}

pub fn experiment_pitman_moments(pairs: &[(f64, f64)], ratios: &[f64], k_max: usize) -> Result<ExperimentReport> {
    let mut err: f64 = 0.0;
    for &(a, b) in pairs {
        for &r in ratios {
            for k in 1..=k_max {
                let l = pitman_moment_lhs(a, b, r, k)?;
                let rhs = pitman_moment_rhs(a, b, r, k);
                err = err.max((l - rhs).abs() / rhs.max(1.0));
            }
        }
    }
    Ok(ExperimentReport::from_error("pitman-moments", err, 1e-10, 0, 0))
}

// S_a(n,k) for a = p/q from the alternating sum in exact integer arithmetic:
// (-j a)_n = q^{-n} prod_i (i q - j p)
fn stirling_exact(p: i128, q: i128, n: usize, k: usize) -> f64 {
    let mut sum: i128 = 0;
    let mut binom: i128 = 1;
    for j in 1..=k as i128 {
        binom = binom * (k as i128 - j + 1) / j;
        let prod: i128 = (0..n as i128).map(|i| i * q - j * p).product();
        sum += if j % 2 == 0 { binom * prod } else { -binom * prod };
    }
    let fact: f64 = (1..=k).map(|i| i as f64).product();
    sum as f64 / ((q as f64).powi(n as i32 - k as i32) * (p as f64).powi(k as i32) * fact)
}

/// Four rows over fixed grids: stable Laplace transforms, ML moments and
/// normalizations, the `gml_function` series against quadrature, and the
/// Stirling recurrence with an exact-arithmetic cross-check.
pub fn experiment_special_fn() -> Result<Vec<ExperimentReport>> {
    let opts = QuadOptions::new(1e-14, 1e-10, 4000);
    let mut laplace: f64 = 0.0;
    for a in [0.3, 0.5, 0.7, 0.9] {
        let ia = idx(a)?;
        for lam in [0.0, 0.5, 1.0, 2.0] {
            let v = integrate_positive(|t| (-lam * t).exp() * stable_pdf(ia, t).unwrap_or(f64::NAN), &opts)?;
            laplace = laplace.max((v - (-f64::powf(lam, a)).exp()).abs());
        }
    }
    let mut moments: f64 = 0.0;
    for a in [0.3, 0.5, 0.8] {
        let ia = idx(a)?;
        for p in [1.0, 2.0] {
            let m = integrate_positive(|s| s.powf(p) * ml_pdf(ia, s).unwrap_or(f64::NAN), &opts)?;
            moments = moments.max((m - gamma(p + 1.0) / gamma(p * a + 1.0)).abs());
        }
    }
    let m = integrate_positive(|s| gml_pdf(idx(0.6).expect("valid"), 1.2, s).unwrap_or(f64::NAN), &opts)?;
    moments = moments.max((m - 1.0).abs());
    let m = integrate_positive(|s| s * gml_pdf(half(), 0.5, s).unwrap_or(f64::NAN), &opts)?;
    let exact = (ln_gamma(3.0) + ln_gamma(1.5) - ln_gamma(2.0) - ln_gamma(2.0)).exp();
    moments = moments.max((m - exact).abs());

    let mut gml: f64 = 0.0;
    for (b, th, j) in [(0.5, 0.0, 0usize), (0.5, 0.5, 1), (0.4, 0.3, 1), (0.7, -0.5, 2), (0.8, 1.2, 3)] {
        let ib = idx(b)?;
        let tp = th + j as f64 * b;
        for lam in [0.3, 0.7, 1.0, 2.5] {
            let q = integrate_positive(|s| (-lam * s).exp() * gml_pdf(ib, tp, s).unwrap_or(f64::NAN), &opts)?;
            gml = gml.max((gml_function(ib, th, j, lam)? - q).abs());
        }
    }

    let mut stirling: f64 = 0.0;
    for a in [0.3, 0.5, 0.75] {
        let ia = idx(a)?;
        for n in 1..20 {
            for k in 1..=n + 1 {
                let lower = if k > 1 { gen_stirling(ia, n, k - 1)? } else { 0.0 };
                let same = if k <= n { gen_stirling(ia, n, k)? } else { 0.0 };
                let rec = lower + (n as f64 - k as f64 * a) * same;
                let v = gen_stirling(ia, n + 1, k)?;
                stirling = stirling.max((v / rec - 1.0).abs());
            }
        }
    }
    for (p, q) in [(3i128, 10i128), (1, 2), (3, 4)] {
        let t = gen_stirling_table(idx(p as f64 / q as f64)?, 12);
        for n in 1..=12 {
            for k in 1..=n {
                stirling = stirling.max((t[n][k] / stirling_exact(p, q, n, k) - 1.0).abs());
            }
        }
    }
    Ok(vec![
        ExperimentReport::from_error("special-fn:stable-laplace", laplace, 1e-6, 0, 0),
        ExperimentReport::from_error("special-fn:ml-moments", moments, 1e-6, 0, 0),
        ExperimentReport::from_error("special-fn:gml-quadrature", gml, 1e-6, 0, 0),
        ExperimentReport::from_error("special-fn:stirling", stirling, 1e-12, 0, 0),
    ])
}

// ---- suite ----------------------------------------------------------------------------------

/// Overrides for the suite defaults; unset fields keep each experiment's own value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SuiteOptions {
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub theta: Option<f64>,
    pub lambda: Option<f64>,
    pub zeta: Option<f64>,
    /// Scale of the Brownian experiment.
    pub s: Option<f64>,
    pub n: Option<usize>,
    pub samples: Option<usize>,
    /// Report `runtime_ms = 0` so that output is byte-reproducible.
    pub omit_timing: bool,
}

/// Registered experiment names, in suite order.
pub const EXPERIMENTS: &[&str] = &[
    "special-fn",
    "eppf-normalization",
    "block-composition",
    "pitman-moments",
    "disintegration",
    "hermite",
    "duality-pd",
    "coag-pd",
    "frag-composition",
    "frag-gibbs-gg",
    "coag-unit",
    "coag-gg",
    "coag-ml",
    "gg-dual-m0",
    "gg-dual-m1",
    "diversity-unit",
    "diversity-ml",
    "diversity-gg",
    "fixed-point-i",
    "fixed-point-ii",
    "brownian-sizebias",
];

// FNV-1a, so that each experiment's stream depends only on its name
fn stream_id(name: &str) -> u64 {
    name.bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

fn stamp(mut rows: Vec<ExperimentReport>, seed: u64, ms: u64) -> Vec<ExperimentReport> {
    for r in &mut rows {
        r.seed = seed;
        r.runtime_ms = ms;
    }
    rows
}

/// Runs one registered experiment with its derived stream.
pub fn run_experiment(name: &str, seed: u64, o: &SuiteOptions) -> Result<Vec<ExperimentReport>> {
    let rng = RngStream::new(seed, stream_id(name));
    let start = Instant::now();
    let a = |d: f64| o.alpha.unwrap_or(d);
    let b = |d: f64| o.beta.unwrap_or(d);
    let th = |d: f64| o.theta.unwrap_or(d);
    let n = |d: usize| o.n.unwrap_or(d);
    let m = |d: usize| o.samples.unwrap_or(d);
    let zeta = o.zeta.unwrap_or(1.0);
    let lambda = o.lambda.unwrap_or(1.0);
    let rows = match name {
        "special-fn" => experiment_special_fn()?,
        "eppf-normalization" => experiment_eppf_normalization(a(0.6), b(0.3), n(6))?,
        "block-composition" => match (o.alpha, o.beta) {
            (None, None) => vec![experiment_block_composition(&[(0.6, 0.3), (0.8, 0.4), (0.7, 0.2)], n(10))?],
            _ => vec![experiment_block_composition(&[(a(0.6), b(0.3))], n(10))?],
        },
        "pitman-moments" => match (o.alpha, o.beta) {
            (None, None) => vec![experiment_pitman_moments(&[(0.6, 0.3), (0.8, 0.4)], &[0.5, 1.0, 2.0], n(10))?],
            _ => vec![experiment_pitman_moments(&[(a(0.6), b(0.3))], &[0.5, 1.0, 2.0], n(10))?],
        },
        "disintegration" => vec![experiment_disintegration(a(0.8), b(0.4), &[vec![2, 1], vec![3, 1], vec![2, 2]], 1e-5)?],
        "hermite" => experiment_hermite(a(0.8), &[(1, 1), (2, 1), (3, 2), (4, 2)], &[0.5, 0.7, 1.0, 2.0])?,
        "duality-pd" => vec![experiment_duality_pd(a(0.6), b(0.3), th(0.3), n(5), m(100_000), &rng)?],
        "coag-pd" => vec![experiment_coag_pd(a(0.6), b(0.3), th(0.3), n(5), m(100_000), &rng)?],
        "frag-composition" => {
            let (al, be) = (a(0.8), b(0.2));
            vec![experiment_frag_composition(be, (al * be).sqrt(), al, n(4), m(100_000), &rng)?]
        }
        "frag-gibbs-gg" => {
            let h = TiltFunction::gg_zeta(idx(b(0.3))?, zeta, 0)?;
            vec![experiment_frag_gibbs(a(0.6), &h, n(4), m(100_000), &rng)?]
        }
        "coag-unit" => experiment_dependent_coag(name, a(0.6), &TiltFunction::unit(idx(b(0.3))?), n(4), m(100_000), &rng)?,
        "coag-gg" => {
            let h = TiltFunction::gg_zeta(idx(b(0.3))?, zeta, 0)?;
            experiment_dependent_coag(name, a(0.6), &h, n(4), m(100_000), &rng)?
        }
        "coag-ml" => {
            let h = TiltFunction::ml_lambda(idx(b(0.3))?, lambda)?;
            experiment_dependent_coag(name, a(0.6), &h, n(4), m(100_000), &rng)?
        }
        "gg-dual-m0" => experiment_gg_dual(name, a(0.6), b(0.3), th(0.6), 0, n(4), m(100_000), &rng)?,
        "gg-dual-m1" => experiment_gg_dual(name, a(0.6), b(0.3), th(-0.2), 1, n(4), m(100_000), &rng)?,
        "diversity-unit" => experiment_diversity_rep(name, a(0.8), &TiltFunction::unit(idx(b(0.4))?), m(10_000), &rng)?,
        "diversity-ml" => {
            let h = TiltFunction::ml_lambda(idx(b(0.4))?, lambda)?;
            experiment_diversity_rep(name, a(0.8), &h, m(10_000), &rng)?
        }
        "diversity-gg" => {
            let h = TiltFunction::gg_zeta(idx(b(0.4))?, zeta, 0)?;
            experiment_diversity_rep(name, a(0.8), &h, m(10_000), &rng)?
        }
        "fixed-point-i" | "fixed-point-ii" => {
            let v = if name == "fixed-point-i" { FixedPointVariant::AlphaScale } else { FixedPointVariant::UnitScale };
            let mut rows = Vec::new();
            for ell in [1, 2] {
                rows.extend(experiment_fixed_point(a(0.6), b(0.3), ell, v, 2000, m(10_000), &rng.substream(ell as u64))?);
            }
            rows
        }
        "brownian-sizebias" => experiment_brownian_sizebias(o.s.unwrap_or(1.0), n(4), m(100_000), &rng)?,
        other => return Err(Error::Usage(format!("unknown experiment '{other}'; known: {}", EXPERIMENTS.join(", ")))),
    };
    let ms = if o.omit_timing { 0 } else { start.elapsed().as_millis() as u64 };
    Ok(stamp(rows, seed, ms))
}

/// Runs the named experiments in order. Unknown names are rejected before
/// anything runs.
pub fn run_suite(names: &[String], seed: u64, o: &SuiteOptions) -> Result<Vec<ExperimentReport>> {
    if let Some(bad) = names.iter().find(|n| !EXPERIMENTS.contains(&n.as_str())) {
        return Err(Error::Usage(format!("unknown experiment '{bad}'; known: {}", EXPERIMENTS.join(", "))));
    }
    let mut out = Vec::new();
    for name in names {
        out.extend(run_experiment(name, seed, o)?);
    }
    Ok(out)
}
