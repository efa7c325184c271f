//! Random generation: positive stable variables, stick-breaking, sequential
//! EPPF sampling, jump series of the stable subordinator, rejection samplers
//! for tilted stable laws and generalized gamma inverse local times.

use std::f64::consts::PI;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Exp1, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::eppf::{blocks_pmf_table, Eppf};
use crate::error::{domain, numeric, Error, Result};
use crate::partitions::{rank_masses, MassPartition, SetPartition};
use crate::special_fn::{default_cfg, left_tail_phi, stable_pdf, tilted_y_pdf_scaled, StableIndex};
use crate::stable_density::StableDensity;
pub use crate::tilt::{TiltFunction, TiltKind};

/// Lowest acceptance probability a rejection sampler will attempt.
pub const MIN_ACCEPTANCE: f64 = 1e-4;
// generalized gamma totals are split into at most this many unit pieces
const MAX_GG_PIECES: f64 = 1e7;

/// Reproducible random stream: ChaCha8 keyed by `seed`, on stream `stream`.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        RngStream { seed, stream, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// An independent stream derived from this one's seed and stream id.
    pub fn substream(&self, id: u64) -> RngStream {
        let mixed = self
            .stream
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .rotate_left(17)
            ^ id.wrapping_mul(0xBF58_476D_1CE4_E5B9).wrapping_add(1);
        RngStream::new(self.seed, mixed)
    }

    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    // uniform on the open interval (0, 1)
    fn open_uniform(&mut self) -> f64 {
        loop {
            let u = self.uniform();
            if u > 0.0 {
                return u;
            }
        }
    }

    pub fn exp1(&mut self) -> f64 {
        Exp1.sample(&mut self.rng)
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    pub fn gamma(&mut self, shape: f64) -> Result<f64> {
        let g = Gamma::new(shape, 1.0).map_err(|e| Error::Domain(format!("gamma shape {shape}: {e}")))?;
        Ok(g.sample(&mut self.rng))
    }

    pub fn beta(&mut self, a: f64, b: f64) -> Result<f64> {
        let d = Beta::new(a, b).map_err(|e| Error::Domain(format!("beta({a},{b}): {e}")))?;
        Ok(d.sample(&mut self.rng))
    }

    /// Index drawn with probability proportional to `weights`.
    pub fn categorical(&mut self, weights: &[f64]) -> usize {
        let total: f64 = weights.iter().sum();
        let mut u = self.uniform() * total;
        for (i, &w) in weights.iter().enumerate() {
            if u < w {
                return i;
            }
            u -= w;
        }
        weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// Chambers-Mallows-Stuck draw of `T_alpha`, `E[exp(-lambda T)] = exp(-lambda^alpha)`.
pub fn sample_stable(alpha: StableIndex, rng: &mut RngStream) -> f64 {
    let a = alpha.get();
    let u = PI * rng.open_uniform();
    let e = rng.exp1();
    let ln_t = (a * u).sin().ln() - u.sin().ln() / a + (1.0 - a) / a * (((1.0 - a) * u).sin().ln() - e.ln());
    ln_t.exp()
}

/// Size-biased sticks `R_k prod_{j<k} (1 - R_j)`, `R_k ~ Beta(1 - d, theta + k d)`,
/// truncated at `count`; returns the sticks and the unbroken remainder. The
/// discount `d` may be zero.
pub fn gem_sticks(discount: f64, theta: f64, count: usize, rng: &mut RngStream) -> Result<(Vec<f64>, f64)> {
    if !(0.0..1.0).contains(&discount) {
        return domain(format!("stick discount must lie in [0,1), got {discount}"));
    }
    if !(theta > -discount) || !theta.is_finite() || (discount == 0.0 && theta <= 0.0) {
        return domain(format!("stick-breaking needs theta > -{discount}, got {theta}"));
    }
    let mut sticks = Vec::with_capacity(count);
    let mut rest = 1.0;
    for k in 1..=count {
        let r = rng.beta(1.0 - discount, theta + k as f64 * discount)?;
        sticks.push(rest * r);
        rest *= 1.0 - r;
        if rest == 0.0 {
            break;
        }
    }
    Ok((sticks, rest))
}

/// GEM(alpha, theta) truncated at `count` sticks, returned ranked with the
/// remainder as tail.
pub fn sample_gem(alpha: StableIndex, theta: f64, count: usize, rng: &mut RngStream) -> Result<MassPartition> {
    if !(theta > -alpha.get()) {
        return domain(format!("GEM needs theta > -{}, got {theta}", alpha.get()));
    }
    let (sticks, rest) = gem_sticks(alpha.get(), theta, count, rng)?;
    rank_masses(&sticks, rest)
}

/// Draws a partition of `[n]` item by item from the evaluator's predictive rule.
pub fn sample_eppf_partition(eppf: &dyn Eppf, n: usize, rng: &mut RngStream) -> Result<SetPartition> {
    if n == 0 {
        return domain("partition size must be positive");
    }
    let mut sizes = vec![1usize];
    let mut labels = vec![0usize];
    for _ in 1..n {
        let w = eppf.predictive(&sizes)?;
        let total: f64 = w.iter().sum();
        if !(total.is_finite()) || w.iter().any(|&x| !(x >= 0.0)) || (total - 1.0).abs() > 1e-4 {
            return Err(numeric(format!("predictive weights {w:?} are not a distribution"), total));
        }
        let j = rng.categorical(&w);
        if j == sizes.len() {
            sizes.push(1);
        } else {
            sizes[j] += 1;
        }
        labels.push(j);
    }
    SetPartition::from_labels(&labels)
}

/// PD(alpha, 0) partition of `[n]` conditioned to have exactly `k` blocks.
/// Items are seated sequentially, each choice weighted by the total EPPF mass
/// of the completions that still end with `k` blocks.
pub fn sample_pd0_given_blocks(alpha: StableIndex, n: usize, k: usize, rng: &mut RngStream) -> Result<SetPartition> {
    if n == 0 || k == 0 || k > n {
        return domain(format!("need 1 <= k <= n, got n = {n}, k = {k}"));
    }
    let a = alpha.get();
    // reach[m][j]: completion mass from m items in j blocks
    let mut reach = vec![vec![0.0f64; k + 2]; n + 1];
    reach[n][k] = 1.0;
    for m in (1..n).rev() {
        for j in 1..=k.min(m) {
            let v = (m as f64 - j as f64 * a) * reach[m + 1][j] + j as f64 * a * reach[m + 1][j + 1];
            reach[m][j] = v;
        }
        // rescale to keep the recurrence in range for large n
        let top = reach[m].iter().cloned().fold(0.0, f64::max);
        if top > 0.0 {
            reach[m].iter_mut().for_each(|v| *v /= top);
        }
    }
    let mut sizes = vec![1usize];
    let mut labels = vec![0usize];
    let mut w = Vec::with_capacity(k + 1);
    for m in 1..n {
        let j = sizes.len();
        w.clear();
        w.extend(sizes.iter().map(|&s| (s as f64 - a) * reach[m + 1][j]));
        w.push(if j < k { j as f64 * a * reach[m + 1][j + 1] } else { 0.0 });
        let c = rng.categorical(&w);
        if c == j {
            sizes.push(1);
        } else {
            sizes[c] += 1;
        }
        labels.push(c);
    }
    SetPartition::from_labels(&labels)
}

/// Draws a Gibbs partition of `[n]` with weights `psi[k]`, `1 <= k <= n`, on top
/// of PD(alpha, 0): first the block count, then the partition given the count.
pub fn sample_gibbs_partition(alpha: StableIndex, psi_row: &[f64], n: usize, rng: &mut RngStream) -> Result<SetPartition> {
    if psi_row.len() != n + 1 {
        return domain(format!("weight row for n = {n} must have {} entries", n + 1));
    }
    let pmf = blocks_pmf_table(alpha, n);
    let probs: Vec<f64> = (1..=n).map(|k| psi_row[k] * pmf[n][k]).collect();
    let total: f64 = probs.iter().sum();
    if !total.is_finite() || probs.iter().any(|&p| !(p >= 0.0)) || (total - 1.0).abs() > 1e-4 {
        return Err(numeric(format!("block-count law sums to {total}"), total));
    }
    let k = rng.categorical(&probs) + 1;
    sample_pd0_given_blocks(alpha, n, k, rng)
}

/// Partition of `[n]` from PD(alpha | t), the PD(alpha, 0) law given `T_alpha = t`.
pub fn sample_cond_partition(alpha: StableIndex, t: f64, n: usize, rng: &mut RngStream) -> Result<SetPartition> {
    if n == 0 {
        return domain("partition size must be positive");
    }
    if n == 1 {
        return SetPartition::one_block(1);
    }
    if !(t > 0.0) || !t.is_finite() {
        return domain(format!("need t > 0, got {t}"));
    }
    // deep in the left tail both densities are rescaled by the leading
    // exp(-phi(t)) factor so their ratio keeps full precision
    let scaled = left_tail_phi(alpha.get(), t) > 100.0;
    let f = if scaled { StableDensity::shared(alpha)?.pdf_below(t, 0.0)? } else { stable_pdf(alpha, t)? };
    if !(f > 0.0) {
        return Err(numeric(format!("stable density at {t} underflows"), f));
    }
    let cfg = default_cfg();
    let mut row = vec![0.0; n + 1];
    for (k, v) in row.iter_mut().enumerate().skip(1) {
        *v = tilted_y_pdf_scaled(alpha, n, k, t, scaled, &cfg)? / f;
    }
    sample_gibbs_partition(alpha, &row, n, rng).map_err(|e| match e {
        Error::Numeric { message, partial } => numeric(format!("{message} in PD({alpha} | t = {t})"), partial),
        e => e,
    })
}

/// Partition of `[n]` obtained by dropping `n` uniform points on the masses;
/// points in the tail become singletons.
pub fn paint_box(weights: &[f64], n: usize, rng: &mut RngStream) -> Result<SetPartition> {
    if n == 0 {
        return domain("partition size must be positive");
    }
    let mut cum = Vec::with_capacity(weights.len());
    let mut acc = 0.0;
    for &w in weights {
        acc += w;
        cum.push(acc);
    }
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let u = rng.uniform();
        let j = cum.partition_point(|&c| c <= u);
        labels.push(if j < weights.len() { j } else { weights.len() + i });
    }
    SetPartition::from_labels(&labels)
}

/// Decreasing jumps of the stable subordinator on `[0, 1]` from the inverse
/// Levy-measure series, with the expected contribution of the omitted jumps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StableJumps {
    pub jumps: Vec<f64>,
    /// Expected sum of the jumps beyond the last one kept.
    pub tail: f64,
    /// Kept jumps plus `tail`.
    pub total: f64,
}

impl StableJumps {
    /// Jumps divided by the total, with the tail as residual mass.
    pub fn normalized(&self) -> Result<MassPartition> {
        let w: Vec<f64> = self.jumps.iter().map(|x| x / self.total).collect();
        MassPartition::new(w, self.tail / self.total)
    }
}

pub fn sample_stable_jumps(alpha: StableIndex, count: usize, rng: &mut RngStream) -> Result<StableJumps> {
    if count == 0 {
        return domain("jump count must be positive");
    }
    let a = alpha.get();
    let lg = ln_gamma(1.0 - a);
    let mut jumps = Vec::with_capacity(count);
    let mut arrival = 0.0;
    let mut sum = 0.0;
    for _ in 0..count {
        arrival += rng.exp1();
        let x = (-(lg + arrival.ln()) / a).exp();
        jumps.push(x);
        sum += x;
    }
    let tail = (-lg / a).exp() * a / (1.0 - a) * arrival.powf(1.0 - 1.0 / a);
    Ok(StableJumps {
        jumps,
        tail,
        total: sum + tail,
    })
}

fn acceptance_guard(h: &TiltFunction) -> Result<f64> {
    let sup = match h.sup_bound() {
        Some(s) => s,
        None => return domain(format!("tilt {h} has no finite bound; rejection is unavailable")),
    };
    if 1.0 / sup < MIN_ACCEPTANCE {
        return Err(Error::Efficiency(format!(
            "tilt {h} accepts with probability {:.2e}; reduce the tilt parameter",
            1.0 / sup
        )));
    }
    Ok(sup)
}

/// Rejection draw from `PK_beta(h f_beta)`: a stable jump series is kept with
/// probability `h(T) / sup h`. Returns the normalized masses and `T`.
pub fn sample_pk_tilted(
    beta: StableIndex,
    h: &TiltFunction,
    count: usize,
    rng: &mut RngStream,
) -> Result<(MassPartition, f64)> {
    if h.index() != beta {
        return domain(format!("tilt is built at index {}, not {beta}", h.index()));
    }
    let sup = acceptance_guard(h)?;
    loop {
        let j = sample_stable_jumps(beta, count, rng)?;
        if rng.uniform() * sup < h.eval(j.total) {
            return Ok((j.normalized()?, j.total));
        }
    }
}

/// Rejection draw of `T_beta` from the tilted density `h(t) f_beta(t)`.
pub fn sample_tilted_stable(h: &TiltFunction, rng: &mut RngStream) -> Result<f64> {
    let sup = acceptance_guard(h)?;
    loop {
        let t = sample_stable(h.index(), rng);
        if rng.uniform() * sup < h.eval(t) {
            return Ok(t);
        }
    }
}

// tau_beta(zeta) / zeta^{1/beta}: the total of the generalized gamma subordinator
// split into ceil(zeta) pieces, each drawn by rejection with acceptance >= 1/e
fn gg_total_normalized(beta: StableIndex, zeta: f64, rng: &mut RngStream) -> Result<f64> {
    let b = beta.get();
    if zeta > MAX_GG_PIECES {
        return Err(Error::Efficiency(format!("generalized gamma parameter {zeta} is too large")));
    }
    let pieces = zeta.ceil().max(1.0);
    let rate = (zeta / pieces).powf(1.0 / b);
    let mut sum = 0.0;
    for _ in 0..pieces as u64 {
        loop {
            let t = sample_stable(beta, rng);
            if rng.uniform() < (-rate * t).exp() {
                sum += t;
                break;
            }
        }
    }
    Ok(sum * pieces.powf(-1.0 / b))
}

/// Draw of `tau_beta(zeta) / zeta^{1/beta}` for the generalized gamma subordinator
/// (`m = 0`), or of its size-biased version (`m = 1`), obtained by randomizing
/// `zeta` to `zeta + gamma_{(1 - beta)/beta}`.
pub fn sample_gg_inverse_lt(beta: StableIndex, zeta: f64, m: u8, rng: &mut RngStream) -> Result<f64> {
    if !(zeta > 0.0) || !zeta.is_finite() {
        return domain(format!("zeta must be positive, got {zeta}"));
    }
    let b = beta.get();
    match m {
        0 => gg_total_normalized(beta, zeta, rng),
        1 => {
            let z = zeta + rng.gamma((1.0 - b) / b)?;
            let t = gg_total_normalized(beta, z, rng)?;
            Ok(t * (z / zeta).powf(1.0 / b))
        }
        _ => domain(format!("m must be 0 or 1, got {m}")),
    }
}

/// Draw of `T_{alpha,theta}`, the stable variable tilted by `t^{-theta}`, through
/// a gamma-randomized generalized gamma total.
pub fn sample_poly_tilted_stable(alpha: StableIndex, theta: f64, rng: &mut RngStream) -> Result<f64> {
    let a = alpha.get();
    if !(theta > -a) || !theta.is_finite() {
        return domain(format!("theta must exceed -{a}, got {theta}"));
    }
    if theta == 0.0 {
        return Ok(sample_stable(alpha, rng));
    }
    let (shape, m) = if theta > 0.0 { (theta / a, 0) } else { ((theta + a) / a, 1) };
    let g = rng.gamma(shape)?;
    if g == 0.0 {
        // the gamma draw underflowed; its limit is the untilted law in the m = 0 case
        return if m == 0 {
            Ok(sample_stable(alpha, rng))
        } else {
            Err(numeric("gamma draw underflowed", 0.0))
        };
    }
    sample_gg_inverse_lt(alpha, g, m, rng)
}

/// Draw from ML(alpha, theta), the law of `T_{alpha,theta}^{-alpha}`.
pub fn sample_ml(alpha: StableIndex, theta: f64, rng: &mut RngStream) -> Result<f64> {
    Ok(sample_poly_tilted_stable(alpha, theta, rng)?.powf(-alpha.get()))
}
