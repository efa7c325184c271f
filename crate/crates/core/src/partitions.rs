//! Set partitions of `[n]`, block-size compositions and ranked mass partitions.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{domain, Error, Result};
use crate::special_fn::StableIndex;

pub const MAX_ENUMERATION: usize = 12;

/// Partition of `{1, ..., n}` with blocks sorted internally and ordered by least element.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<usize>>", into = "Vec<Vec<usize>>")]
pub struct SetPartition {
    blocks: Vec<Vec<usize>>,
}

impl SetPartition {
    pub fn new(mut blocks: Vec<Vec<usize>>) -> Result<Self> {
        if blocks.iter().any(|b| b.is_empty()) {
            return domain("set partition has an empty block");
        }
        for b in blocks.iter_mut() {
            b.sort_unstable();
        }
        blocks.sort_unstable_by_key(|b| b[0]);
        let n: usize = blocks.iter().map(|b| b.len()).sum();
        let mut seen = vec![false; n + 1];
        for &x in blocks.iter().flatten() {
            if x == 0 || x > n || seen[x] {
                return domain(format!("blocks do not partition 1..={n}"));
            }
            seen[x] = true;
        }
        if n == 0 {
            return domain("set partition of an empty set");
        }
        Ok(SetPartition { blocks })
    }

    /// Builds the partition whose blocks are the level sets of `labels`
    /// (item `i + 1` carries `labels[i]`).
    pub fn from_labels(labels: &[usize]) -> Result<Self> {
        if labels.is_empty() {
            return domain("set partition of an empty set");
        }
        let mut index: HashMap<usize, usize> = HashMap::new();
        let mut blocks: Vec<Vec<usize>> = Vec::new();
        for (i, &l) in labels.iter().enumerate() {
            let b = *index.entry(l).or_insert_with(|| {
                blocks.push(Vec::new());
                blocks.len() - 1
            });
            blocks[b].push(i + 1);
        }
        Ok(SetPartition { blocks })
    }

    pub fn one_block(n: usize) -> Result<Self> {
        SetPartition::new(vec![(1..=n).collect()])
    }

    pub fn singletons(n: usize) -> Result<Self> {
        SetPartition::new((1..=n).map(|i| vec![i]).collect())
    }

    pub fn n(&self) -> usize {
        self.blocks.iter().map(|b| b.len()).sum()
    }

    pub fn k(&self) -> usize {
        self.blocks.len()
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    /// Restricted growth string: 0-based block index of each item.
    pub fn labels(&self) -> Vec<usize> {
        let mut out = vec![0; self.n()];
        for (j, b) in self.blocks.iter().enumerate() {
            for &x in b {
                out[x - 1] = j;
            }
        }
        out
    }

    /// The partition induced on `{1, ..., m}`.
    pub fn restrict(&self, m: usize) -> Result<SetPartition> {
        if m == 0 || m > self.n() {
            return domain(format!("cannot restrict a partition of [{}] to [{m}]", self.n()));
        }
        SetPartition::from_labels(&self.labels()[..m])
    }

    pub fn composition(&self) -> Composition {
        Composition {
            sizes: self.blocks.iter().map(|b| b.len()).collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.blocks).expect("serializable")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let blocks: Vec<Vec<usize>> =
            serde_json::from_str(s).map_err(|e| Error::Domain(format!("invalid set partition JSON: {e}")))?;
        SetPartition::new(blocks)
    }
}

impl TryFrom<Vec<Vec<usize>>> for SetPartition {
    type Error = Error;
    fn try_from(v: Vec<Vec<usize>>) -> Result<Self> {
        SetPartition::new(v)
    }
}

impl From<SetPartition> for Vec<Vec<usize>> {
    fn from(p: SetPartition) -> Self {
        p.blocks
    }
}

impl std::fmt::Display for SetPartition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.to_json())
    }
}

/// Block sizes of a partition; EPPFs are symmetric so the order carries no meaning.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Composition {
    sizes: Vec<usize>,
}

impl Composition {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.is_empty() || sizes.iter().any(|&s| s == 0) {
            return domain("composition needs at least one block and positive sizes");
        }
        Ok(Composition { sizes })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn n(&self) -> usize {
        self.sizes.iter().sum()
    }

    pub fn k(&self) -> usize {
        self.sizes.len()
    }

    /// Sizes in nonincreasing order.
    pub fn sorted(&self) -> Composition {
        let mut s = self.sizes.clone();
        s.sort_unstable_by(|a, b| b.cmp(a));
        Composition { sizes: s }
    }

    /// Number of set partitions of `[n]` with these block sizes.
    pub fn multiplicity(&self) -> f64 {
        let mut ln = ln_gamma(self.n() as f64 + 1.0);
        let mut counts: HashMap<usize, usize> = HashMap::new();
        for &s in &self.sizes {
            ln -= ln_gamma(s as f64 + 1.0);
            *counts.entry(s).or_default() += 1;
        }
        for &m in counts.values() {
            ln -= ln_gamma(m as f64 + 1.0);
        }
        ln.exp().round()
    }
}

impl TryFrom<Vec<usize>> for Composition {
    type Error = Error;
    fn try_from(v: Vec<usize>) -> Result<Self> {
        Composition::new(v)
    }
}

impl From<Composition> for Vec<usize> {
    fn from(c: Composition) -> Self {
        c.sizes
    }
}

pub fn to_composition(p: &SetPartition) -> Composition {
    p.composition()
}

/// Iterator over set partitions of `[n]` in restricted-growth-string order.
pub struct SetPartitions {
    labels: Vec<usize>,
    started: bool,
    done: bool,
}

impl SetPartitions {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 || n > MAX_ENUMERATION {
            return Err(Error::ResourceGuard(format!(
                "enumeration of set partitions limited to 1 <= n <= {MAX_ENUMERATION}, got {n}"
            )));
        }
        Ok(SetPartitions {
            labels: vec![0; n],
            started: false,
            done: false,
        })
    }
}

impl Iterator for SetPartitions {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        if !self.started {
            self.started = true;
            return Some(self.labels.clone());
        }
        let n = self.labels.len();
        for i in (1..n).rev() {
            let max_before = *self.labels[..i].iter().max().expect("non-empty");
            if self.labels[i] <= max_before {
                self.labels[i] += 1;
                for l in self.labels[i + 1..].iter_mut() {
                    *l = 0;
                }
                return Some(self.labels.clone());
            }
        }
        self.done = true;
        None
    }
}

pub fn enumerate_set_partitions(n: usize) -> Result<Vec<SetPartition>> {
    SetPartitions::new(n)?
        .map(|l| SetPartition::from_labels(&l))
        .collect()
}

/// Integer partitions of `n` as nonincreasing compositions.
pub fn integer_partitions(n: usize) -> Result<Vec<Composition>> {
    if n == 0 {
        return domain("integer partitions need n >= 1");
    }
    fn rec(rest: usize, max: usize, cur: &mut Vec<usize>, out: &mut Vec<Composition>) {
        if rest == 0 {
            out.push(Composition { sizes: cur.clone() });
            return;
        }
        for part in (1..=rest.min(max)).rev() {
            cur.push(part);
            rec(rest - part, part, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(n, n, &mut Vec::new(), &mut out);
    Ok(out)
}

/// Merges the blocks of `p` according to `q`, a partition of `{1, ..., k(p)}`.
pub fn coagulate(p: &SetPartition, q: &SetPartition) -> Result<SetPartition> {
    if q.n() != p.k() {
        return domain(format!(
            "coagulator must partition the {} blocks, but covers {} items",
            p.k(),
            q.n()
        ));
    }
    let blocks = q
        .blocks()
        .iter()
        .map(|qb| qb.iter().flat_map(|&j| p.blocks[j - 1].iter().copied()).collect())
        .collect();
    SetPartition::new(blocks)
}

/// Ranked masses with unassigned dust mass `tail`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MassPartitionRaw")]
pub struct MassPartition {
    weights: Vec<f64>,
    tail: f64,
}

#[derive(Deserialize)]
struct MassPartitionRaw {
    weights: Vec<f64>,
    tail: f64,
}

impl TryFrom<MassPartitionRaw> for MassPartition {
    type Error = Error;
    fn try_from(r: MassPartitionRaw) -> Result<Self> {
        MassPartition::new(r.weights, r.tail)
    }
}

pub const MASS_TOLERANCE: f64 = 1e-9;

impl MassPartition {
    pub fn new(weights: Vec<f64>, tail: f64) -> Result<Self> {
        if !(tail >= 0.0) || !tail.is_finite() {
            return domain("tail mass must be finite and nonnegative");
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return domain("weights must be finite and nonnegative");
        }
        if weights.windows(2).any(|w| w[0] < w[1]) {
            return domain("weights must be nonincreasing");
        }
        let total: f64 = weights.iter().sum::<f64>() + tail;
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return domain(format!("weights and tail sum to {total}, not 1"));
        }
        Ok(MassPartition { weights, tail })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn tail(&self) -> f64 {
        self.tail
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("serializable")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Domain(format!("invalid mass partition JSON: {e}")))
    }
}

/// Sorts raw masses into a [`MassPartition`], dropping zeros. Input whose total
/// (with tail) is within 1e-6 of one is renormalized; anything else is rejected.
/// Input already normalized to within [`MASS_TOLERANCE`] is kept as is.
pub fn rank_masses(raw: &[f64], tail: f64) -> Result<MassPartition> {
    if raw.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) || !(tail >= 0.0) || !tail.is_finite() {
        return domain("masses must be finite and nonnegative");
    }
    let mut w: Vec<f64> = raw.iter().copied().filter(|&x| x > 0.0).collect();
    w.sort_unstable_by(|a, b| b.total_cmp(a));
    let total: f64 = w.iter().sum::<f64>() + tail;
    if (total - 1.0).abs() > 1e-6 {
        return domain(format!("masses sum to {total}, not 1"));
    }
    if (total - 1.0).abs() <= MASS_TOLERANCE {
        // already normalized; leaving the values alone keeps ranking idempotent
        return MassPartition::new(w, tail);
    }
    for x in w.iter_mut() {
        *x /= total;
    }
    MassPartition::new(w, tail / total)
}

/// `Gamma(1 - alpha) eps^alpha #{P_j >= eps}`, which tends to the alpha-diversity
/// `L = T^{-alpha}` as `eps -> 0`.
pub fn diversity_estimate(m: &MassPartition, alpha: StableIndex, eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps < 1.0) {
        return domain(format!("eps must lie in (0,1), got {eps}"));
    }
    let a = alpha.get();
    let count = m.weights.partition_point(|&w| w >= eps);
    Ok(eps.powf(a) * count as f64 * ln_gamma(1.0 - a).exp())
}

/// Bell numbers `B_0 ..= B_n`.
pub fn bell_numbers(n: usize) -> Vec<u128> {
    let mut row = vec![1u128];
    let mut bell = vec![1u128];
    for _ in 0..n {
        let mut next = vec![*row.last().expect("non-empty")];
        for &x in &row {
            let v = next.last().expect("non-empty") + x;
            next.push(v);
        }
        row = next;
        bell.push(row[0]);
    }
    bell
}
