//! The PD(alpha, -beta) fragmentation operator and its dual coagulation, on set
//! partitions and on truncated mass partitions, with the generalized gamma
//! construction of the dependent pair.

use serde::{Deserialize, Serialize};

use crate::eppf::TwoParamPd;
use crate::error::{domain, Result};
use crate::partitions::{coagulate, rank_masses, MassPartition, SetPartition};
use crate::samplers::{
    gem_sticks, sample_cond_partition, sample_eppf_partition, sample_gg_inverse_lt, sample_stable, RngStream,
};
use crate::special_fn::StableIndex;
use crate::tilt::TiltFunction;

/// Indices of `FRAG_{alpha,-beta}`, `0 < beta < alpha < 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FragParams {
    alpha: StableIndex,
    beta: StableIndex,
}

impl FragParams {
    pub fn new(alpha: StableIndex, beta: StableIndex) -> Result<Self> {
        if !(beta.get() < alpha.get()) {
            return domain(format!("fragmentation needs beta < alpha, got beta = {beta}, alpha = {alpha}"));
        }
        Ok(FragParams { alpha, beta })
    }

    pub fn alpha(&self) -> StableIndex {
        self.alpha
    }

    pub fn beta(&self) -> StableIndex {
        self.beta
    }

    /// `beta / alpha`, the index of the dual coagulator.
    pub fn ratio(&self) -> StableIndex {
        self.beta.ratio(self.alpha).expect("beta < alpha")
    }

    /// PD(alpha, -beta), the law used to shatter each block.
    pub fn kernel(&self) -> TwoParamPd {
        TwoParamPd::new(self.alpha, -self.beta.get()).expect("-beta > -alpha")
    }
}

/// Splits every block of `p` by an independent PD(alpha, -beta) partition.
pub fn frag_set_partition(p: &SetPartition, fp: &FragParams, rng: &mut RngStream) -> Result<SetPartition> {
    let kernel = fp.kernel();
    let mut blocks = Vec::with_capacity(p.n());
    for b in p.blocks() {
        if b.len() == 1 {
            blocks.push(b.clone());
            continue;
        }
        let sub = sample_eppf_partition(&kernel, b.len(), rng)?;
        for sb in sub.blocks() {
            blocks.push(sb.iter().map(|&i| b[i - 1]).collect());
        }
    }
    SetPartition::new(blocks)
}

/// Multiplies each mass into the sticks of an independent GEM(alpha, -beta)
/// draw truncated at `sticks_per_mass`; unbroken remainders join the tail.
pub fn frag_mass_partition(
    m: &MassPartition,
    fp: &FragParams,
    sticks_per_mass: usize,
    rng: &mut RngStream,
) -> Result<MassPartition> {
    if sticks_per_mass == 0 {
        return domain("need at least one stick per mass");
    }
    let mut out = Vec::with_capacity(m.weights().len() * sticks_per_mass);
    let mut tail = m.tail();
    for &w in m.weights() {
        let (sticks, rest) = gem_sticks(fp.alpha.get(), -fp.beta.get(), sticks_per_mass, rng)?;
        out.extend(sticks.iter().map(|s| s * w));
        tail += rest * w;
    }
    rank_masses(&out, tail)
}

/// Merges the blocks of `p` whose indices share a block of `q`.
pub fn coag_set_partition(p: &SetPartition, q: &SetPartition) -> Result<SetPartition> {
    coagulate(p, q)
}

/// A partition `v_tilde` of `[n]` with a coagulator `q` of its blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoagPair {
    pub v_tilde: SetPartition,
    /// Partition of `[k]`, `k` the number of blocks of `v_tilde`.
    pub q: SetPartition,
    pub law_tag: String,
}

impl CoagPair {
    pub fn new(v_tilde: SetPartition, q: SetPartition, law_tag: &str) -> Result<Self> {
        if q.n() != v_tilde.k() {
            return domain(format!("q covers {} items but v_tilde has {} blocks", q.n(), v_tilde.k()));
        }
        Ok(CoagPair {
            v_tilde,
            q,
            law_tag: law_tag.to_string(),
        })
    }

    pub fn coagulated(&self) -> Result<SetPartition> {
        coagulate(&self.v_tilde, &self.q)
    }
}

/// One draw of the dependent pair with its latent variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DependentDraw {
    pub pair: CoagPair,
    pub v: SetPartition,
    /// Coagulator drawn on all of `[n]`; `pair.q` is its restriction to `[k]`.
    pub q_full: SetPartition,
    /// Latent `T_alpha` behind `v_tilde`.
    pub s: f64,
    /// Latent `T_{beta/alpha}` behind `q`.
    pub y: f64,
}

fn assemble(alpha: StableIndex, ratio: StableIndex, s: f64, y: f64, n: usize, tag: &str, rng: &mut RngStream) -> Result<DependentDraw> {
    let v_tilde = sample_cond_partition(alpha, s, n, rng)?;
    let q_full = sample_cond_partition(ratio, y, n, rng)?;
    let q = q_full.restrict(v_tilde.k())?;
    let pair = CoagPair::new(v_tilde, q, tag)?;
    let v = pair.coagulated()?;
    Ok(DependentDraw { pair, v, q_full, s, y })
}

/// Latent pair `(s, y)` with density proportional to `h(s y^{1/alpha}) f_alpha(s) f_{beta/alpha}(y)`,
/// by rejection from independent stable draws.
pub fn dependent_latent(fp: &FragParams, h: &TiltFunction, rng: &mut RngStream) -> Result<(f64, f64)> {
    if h.index() != fp.beta {
        return domain(format!("tilt is built at index {}, not beta = {}", h.index(), fp.beta));
    }
    let sup = match h.sup_bound() {
        Some(s) => s,
        None => return domain(format!("tilt {h} has no finite bound; rejection is unavailable")),
    };
    if 1.0 / sup < crate::samplers::MIN_ACCEPTANCE {
        return Err(crate::Error::Efficiency(format!("tilt {h} accepts with probability {:.2e}", 1.0 / sup)));
    }
    let a = fp.alpha.get();
    let ratio = fp.ratio();
    loop {
        let s = sample_stable(fp.alpha, rng);
        let y = sample_stable(ratio, rng);
        if rng.uniform() * sup < h.eval(s * y.powf(1.0 / a)) {
            return Ok((s, y));
        }
    }
}

/// Draws `(v_tilde, q)` from the joint law tilted by a bounded `h` at index
/// `beta`, with `v_tilde | s ~ PD(alpha | s)` and `q | y ~ PD(beta/alpha | y)`,
/// and coagulates. The coagulated partition has the `PK_beta(h f_beta)` law.
pub fn dependent_coag_sample(fp: &FragParams, h: &TiltFunction, n: usize, rng: &mut RngStream) -> Result<DependentDraw> {
    let (s, y) = dependent_latent(fp, h, rng)?;
    let tag = format!("dependent({},{};{})", fp.alpha, fp.beta, h.label());
    assemble(fp.alpha, fp.ratio(), s, y, n, &tag, rng)
}

/// How the generalized gamma parameter is chosen in [`gg_dual_demo`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum ZetaLaw {
    Fixed { zeta: f64 },
    /// `zeta ~ Gamma(theta/beta)` for `m = 0` (needs `theta > 0`) and
    /// `zeta ~ Gamma((theta + beta)/beta)` for `m = 1` (needs `theta > -beta`).
    PdTheta { theta: f64 },
}

/// Transcript of one generalized gamma dual draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualDraw {
    pub zeta: f64,
    pub m: u8,
    pub draw: DependentDraw,
}

/// Explicit dependent pair for the generalized gamma tilt of order `m`: `y` is the
/// normalized `beta/alpha` inverse local time at `zeta`, `s` the normalized alpha
/// inverse local time at `zeta^{alpha/beta} y`; partitions are then drawn given
/// `(s, y)`. The coagulated partition has the generalized gamma law at `beta`.
pub fn gg_dual_demo(
    fp: &FragParams,
    zeta: ZetaLaw,
    m: u8,
    n: usize,
    rng: &mut RngStream,
) -> Result<DualDraw> {
    if m > 1 {
        return domain(format!("m must be 0 or 1, got {m}"));
    }
    let b = fp.beta.get();
    let a = fp.alpha.get();
    let z = match zeta {
        ZetaLaw::Fixed { zeta } => zeta,
        ZetaLaw::PdTheta { theta } => {
            let shape = if m == 0 { theta / b } else { (theta + b) / b };
            if !(shape > 0.0) || !shape.is_finite() {
                return domain(format!("theta = {theta} is outside the range of the order-{m} construction"));
            }
            let g = rng.gamma(shape)?;
            if g == 0.0 {
                // underflow of a tiny-shape gamma; redraw is equivalent in law
                return gg_dual_demo(fp, zeta, m, n, rng);
            }
            g
        }
    };
    if !(z > 0.0) || !z.is_finite() {
        return domain(format!("zeta must be positive, got {z}"));
    }
    let ratio = fp.ratio();
    let y = sample_gg_inverse_lt(ratio, z, m, rng)?;
    let s = sample_gg_inverse_lt(fp.alpha, z.powf(a / b) * y, m, rng)?;
    let tag = format!("gg_dual({a},{b};m={m},zeta={z})");
    let draw = assemble(fp.alpha, ratio, s, y, n, &tag, rng)?;
    Ok(DualDraw { zeta: z, m, draw })
}
