//! Goodness-of-fit statistics used by the experiments.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::quad::{integrate, integrate_near_zero, QuadOptions};

/// Cells with expected count below this are pooled.
pub const MIN_EXPECTED: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub df: f64,
    pub p_value: f64,
}

fn chi2_sf(x: f64, df: f64) -> Result<f64> {
    let d = ChiSquared::new(df).map_err(|e| Error::DegenerateTest(format!("chi-square df {df}: {e}")))?;
    Ok(d.sf(x).clamp(0.0, 1.0))
}

// Merges cells (observed, expected) so that every pooled cell has expected count
// at least MIN_EXPECTED: small cells are combined in increasing order of expectation
// and any leftover is folded into the smallest large cell.
fn pool(cells: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut order: Vec<usize> = (0..cells.len()).collect();
    order.sort_by(|&a, &b| cells[a].1.total_cmp(&cells[b].1).then(a.cmp(&b)));
    let mut out = Vec::new();
    let mut acc = (0.0, 0.0);
    for &i in &order {
        let (o, e) = cells[i];
        if e >= MIN_EXPECTED && acc.1 == 0.0 {
            out.push((o, e));
            continue;
        }
        acc.0 += o;
        acc.1 += e;
        if acc.1 >= MIN_EXPECTED {
            out.push(acc);
            acc = (0.0, 0.0);
        }
    }
    if acc.1 > 0.0 || acc.0 > 0.0 {
        match out.iter_mut().min_by(|a, b| a.1.total_cmp(&b.1)) {
            Some(c) => {
                c.0 += acc.0;
                c.1 += acc.1;
            }
            None => out.push(acc),
        }
    }
    out
}

/// Pearson goodness of fit of `observed` counts against cell probabilities
/// `probs`, which must sum to one within 1e-6.
pub fn chi_square_gof(observed: &[u64], probs: &[f64]) -> Result<TestResult> {
    if observed.len() != probs.len() {
        return Err(Error::DegenerateTest(format!(
            "{} observed cells but {} probabilities",
            observed.len(),
            probs.len()
        )));
    }
    let total_p: f64 = probs.iter().sum();
    if (total_p - 1.0).abs() > 1e-6 || probs.iter().any(|p| !(*p >= 0.0)) {
        return Err(Error::DegenerateTest(format!("cell probabilities sum to {total_p}")));
    }
    let n: u64 = observed.iter().sum();
    if n == 0 {
        return Err(Error::DegenerateTest("no observations".into()));
    }
    let cells: Vec<(f64, f64)> = observed
        .iter()
        .zip(probs)
        .map(|(&o, &p)| (o as f64, p * n as f64))
        .collect();
    if cells.iter().any(|&(o, e)| e == 0.0 && o > 0.0) {
        return Ok(TestResult {
            statistic: f64::INFINITY,
            df: cells.len() as f64 - 1.0,
            p_value: 0.0,
        });
    }
    let pooled = pool(&cells);
    if pooled.len() < 2 {
        return Err(Error::DegenerateTest("fewer than two cells after pooling".into()));
    }
    let stat: f64 = pooled.iter().map(|&(o, e)| (o - e) * (o - e) / e).sum();
    let df = pooled.len() as f64 - 1.0;
    Ok(TestResult {
        statistic: stat,
        df,
        p_value: chi2_sf(stat, df)?,
    })
}

/// Pearson test of independence for a table of counts; sparse rows and
/// columns are pooled first.
pub fn contingency_test(table: &[Vec<u64>]) -> Result<TestResult> {
    let rows = table.len();
    let cols = table.first().map_or(0, |r| r.len());
    if rows == 0 || cols == 0 || table.iter().any(|r| r.len() != cols) {
        return Err(Error::DegenerateTest("contingency table must be rectangular and nonempty".into()));
    }
    let n: f64 = table.iter().flatten().map(|&c| c as f64).sum();
    if n == 0.0 {
        return Err(Error::DegenerateTest("no observations".into()));
    }
    let row_tot: Vec<f64> = table.iter().map(|r| r.iter().map(|&c| c as f64).sum()).collect();
    let col_tot: Vec<f64> = (0..cols).map(|j| table.iter().map(|r| r[j] as f64).sum()).collect();
    let row_groups = group_margins(&row_tot, n, &col_tot);
    let col_groups = group_margins(&col_tot, n, &row_tot);
    if row_groups.len() < 2 || col_groups.len() < 2 {
        return Err(Error::DegenerateTest("contingency table collapses to a single row or column".into()));
    }
    let mut stat = 0.0;
    let mut rt = vec![0.0; row_groups.len()];
    let mut ct = vec![0.0; col_groups.len()];
    let mut obs = vec![vec![0.0; col_groups.len()]; row_groups.len()];
    for (a, rg) in row_groups.iter().enumerate() {
        for (b, cg) in col_groups.iter().enumerate() {
            let o: f64 = rg.iter().flat_map(|&i| cg.iter().map(move |&j| (i, j))).map(|(i, j)| table[i][j] as f64).sum();
            obs[a][b] = o;
            rt[a] += o;
            ct[b] += o;
        }
    }
    for a in 0..rt.len() {
        for b in 0..ct.len() {
            let e = rt[a] * ct[b] / n;
            stat += (obs[a][b] - e) * (obs[a][b] - e) / e;
        }
    }
    let df = ((rt.len() - 1) * (ct.len() - 1)) as f64;
    Ok(TestResult {
        statistic: stat,
        df,
        p_value: chi2_sf(stat, df)?,
    })
}

// groups of indices whose pooled margin times the smallest opposite margin share
// reaches MIN_EXPECTED; zero margins are dropped
fn group_margins(tot: &[f64], n: f64, other: &[f64]) -> Vec<Vec<usize>> {
    let min_other = other.iter().cloned().filter(|&x| x > 0.0).fold(f64::INFINITY, f64::min);
    let need = MIN_EXPECTED * n / min_other.min(n);
    let mut order: Vec<usize> = (0..tot.len()).filter(|&i| tot[i] > 0.0).collect();
    order.sort_by(|&a, &b| tot[a].total_cmp(&tot[b]).then(a.cmp(&b)));
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut cur = Vec::new();
    let mut acc = 0.0;
    for i in order {
        cur.push(i);
        acc += tot[i];
        if acc >= need {
            groups.push(std::mem::take(&mut cur));
            acc = 0.0;
        }
    }
    if !cur.is_empty() {
        match groups.last_mut() {
            Some(g) => g.extend(cur),
            None => groups.push(cur),
        }
    }
    groups
}

/// Chi-square test that two count vectors over the same cells come from one law.
pub fn homogeneity_test(a: &[u64], b: &[u64]) -> Result<TestResult> {
    if a.len() != b.len() {
        return Err(Error::DegenerateTest("count vectors differ in length".into()));
    }
    let table: Vec<Vec<u64>> = vec![a.to_vec(), b.to_vec()];
    contingency_test(&table)
}

/// Kolmogorov survival function `P(sup |B| > x)` of the Brownian bridge.
pub fn kolmogorov_sf(x: f64) -> f64 {
    if x < 0.2 {
        return 1.0;
    }
    if x < 1.0 {
        // small-x form converges faster here
        let c = (2.0 * std::f64::consts::PI).sqrt() / x;
        let q = (-std::f64::consts::PI * std::f64::consts::PI / (8.0 * x * x)).exp();
        let mut s = 0.0;
        for j in 0..20 {
            let m = (2 * j + 1) as f64;
            s += q.powf(m * m);
        }
        return (1.0 - c * s).clamp(0.0, 1.0);
    }
    let mut s = 0.0;
    for j in 1..=100 {
        let jf = j as f64;
        let t = (-2.0 * jf * jf * x * x).exp();
        s += if j % 2 == 1 { t } else { -t };
        if t < 1e-300 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

fn ks_p(d: f64, ne: f64) -> f64 {
    let r = ne.sqrt();
    kolmogorov_sf((r + 0.12 + 0.11 / r) * d)
}

/// One-sample Kolmogorov-Smirnov test of `samples` against `cdf`.
pub fn ks_one_sample<F>(samples: &[f64], mut cdf: F) -> Result<TestResult>
where
    F: FnMut(f64) -> Result<f64>,
{
    if samples.is_empty() {
        return Err(Error::DegenerateTest("no samples".into()));
    }
    let mut x = samples.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &v) in x.iter().enumerate() {
        let f = cdf(v)?;
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    Ok(TestResult {
        statistic: d,
        df: n,
        p_value: ks_p(d, n),
    })
}

/// One-sample test where the CDF is supplied at the sorted samples.
pub fn ks_from_sorted_cdf(cdf_at_sorted: &[f64]) -> Result<TestResult> {
    if cdf_at_sorted.is_empty() {
        return Err(Error::DegenerateTest("no samples".into()));
    }
    let n = cdf_at_sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &f) in cdf_at_sorted.iter().enumerate() {
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    Ok(TestResult {
        statistic: d,
        df: n,
        p_value: ks_p(d, n),
    })
}

/// CDF of a density on `(0, inf)` at each of the increasing points `sorted`, by
/// quadrature over consecutive gaps.
pub fn cdf_at_sorted<F>(mut density: F, sorted: &[f64]) -> Result<Vec<f64>>
where
    F: FnMut(f64) -> f64,
{
    if sorted.windows(2).any(|w| w[0] > w[1]) || sorted.first().is_some_and(|&x| !(x > 0.0)) {
        return Err(Error::Domain("cdf points must be positive and increasing".into()));
    }
    let opts = QuadOptions::new(1e-14, 1e-10, 400);
    let mut out = Vec::with_capacity(sorted.len());
    let mut acc = 0.0;
    let mut prev: Option<f64> = None;
    for &x in sorted {
        acc += match prev {
            None => integrate_near_zero(&mut density, x, &opts)?,
            Some(p) => integrate(&mut density, p, x, &opts)?,
        };
        out.push(acc);
        prev = Some(x);
    }
    Ok(out)
}

/// Two-sample Kolmogorov-Smirnov test.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<TestResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::DegenerateTest("two-sample test needs both samples".into()));
    }
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n, m) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < x.len() && j < y.len() {
        let v = x[i].min(y[j]);
        while i < x.len() && x[i] <= v {
            i += 1;
        }
        while j < y.len() && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    Ok(TestResult {
        statistic: d,
        df: n * m / (n + m),
        p_value: ks_p(d, n * m / (n + m)),
    })
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

impl MeanEstimate {
    pub fn of(x: &[f64]) -> MeanEstimate {
        let n = x.len();
        if n == 0 {
            return MeanEstimate { mean: f64::NAN, se: f64::NAN, n };
        }
        let mean = x.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        MeanEstimate {
            mean,
            se: (var / n as f64).sqrt(),
            n,
        }
    }

    /// `|mean - target|` in standard errors.
    pub fn z_score(&self, target: f64) -> f64 {
        (self.mean - target).abs() / self.se
    }
}
