//! Verification harness: statistical tests, reports and the experiment suite.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::eppf::Eppf;
use crate::error::{domain, Error, Result};
use crate::partitions::{enumerate_set_partitions, integer_partitions, Composition, SetPartition};

pub mod experiments;
pub mod stats;

pub use experiments::{run_experiment, run_suite, SuiteOptions, EXPERIMENTS};
pub use stats::TestResult;

/// Default significance level of the statistical experiments.
pub const SIGNIFICANCE: f64 = 0.01;
/// Largest `n` for which partition frequencies can be compared.
pub const MAX_CHI_N: usize = 8;
/// Up to this size cells are individual set partitions; above, block-size classes.
pub const EXACT_CELL_N: usize = 6;

/// One row of the verification report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub statistic: f64,
    pub p_value: Option<f64>,
    pub abs_error: Option<f64>,
    pub n_samples: u64,
    pub pass: bool,
    pub seed: u64,
    pub runtime_ms: u64,
}

pub const CSV_HEADER: &str = "name,statistic,p_value,abs_error,n_samples,pass,seed,runtime_ms";

/// 17 significant digits, enough to round-trip an `f64`.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

impl ExperimentReport {
    /// Passes when `p > significance`.
    pub fn from_test(name: &str, t: &TestResult, n_samples: u64, seed: u64) -> Self {
        ExperimentReport {
            name: name.to_string(),
            statistic: t.statistic,
            p_value: Some(t.p_value),
            abs_error: None,
            n_samples,
            pass: t.p_value > SIGNIFICANCE,
            seed,
            runtime_ms: 0,
        }
    }

    /// Passes when `abs_error < tolerance`; the statistic is the tolerance.
    pub fn from_error(name: &str, abs_error: f64, tolerance: f64, n_samples: u64, seed: u64) -> Self {
        ExperimentReport {
            name: name.to_string(),
            statistic: tolerance,
            p_value: None,
            abs_error: Some(abs_error),
            n_samples,
            pass: abs_error < tolerance,
            seed,
            runtime_ms: 0,
        }
    }

    pub fn csv_row(&self) -> String {
        let opt = |x: Option<f64>| x.map(fmt_f64).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{}",
            self.name,
            fmt_f64(self.statistic),
            opt(self.p_value),
            opt(self.abs_error),
            self.n_samples,
            self.pass,
            self.seed,
            self.runtime_ms
        )
    }
}

pub fn reports_to_csv(reports: &[ExperimentReport]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in reports {
        let _ = writeln!(s, "{}", r.csv_row());
    }
    s
}

pub fn reports_to_json(reports: &[ExperimentReport]) -> String {
    serde_json::to_string_pretty(reports).expect("serializable")
}

/// Cells for partition-frequency tests of size `n`: the set partitions of `[n]`
/// for `n <= 6`, otherwise the block-size classes.
pub struct PartitionCells {
    n: usize,
    index: HashMap<Vec<usize>, usize>,
    shapes: Vec<(Composition, f64)>,
}

impl PartitionCells {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 || n > MAX_CHI_N {
            return domain(format!("partition tests need 1 <= n <= {MAX_CHI_N}, got {n}"));
        }
        let mut index = HashMap::new();
        let mut shapes = Vec::new();
        if n <= EXACT_CELL_N {
            for p in enumerate_set_partitions(n)? {
                index.insert(p.labels(), shapes.len());
                shapes.push((p.composition(), 1.0));
            }
        } else {
            for c in integer_partitions(n)? {
                let key: Vec<usize> = c.sizes().to_vec();
                let m = c.multiplicity();
                index.insert(key, shapes.len());
                shapes.push((c, m));
            }
        }
        Ok(PartitionCells { n, index, shapes })
    }

    pub fn len(&self) -> usize {
        self.shapes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shapes.is_empty()
    }

    pub fn cell(&self, p: &SetPartition) -> Result<usize> {
        if p.n() != self.n {
            return domain(format!("sample partitions [{}], expected [{}]", p.n(), self.n));
        }
        let key = if self.n <= EXACT_CELL_N {
            p.labels()
        } else {
            p.composition().sorted().sizes().to_vec()
        };
        self.index
            .get(&key)
            .copied()
            .ok_or_else(|| Error::Domain(format!("partition {p} is not a cell")))
    }

    pub fn counts<'a, I>(&self, samples: I) -> Result<Vec<u64>>
    where
        I: IntoIterator<Item = &'a SetPartition>,
    {
        let mut c = vec![0u64; self.len()];
        for p in samples {
            c[self.cell(p)?] += 1;
        }
        Ok(c)
    }

    pub fn probs(&self, eppf: &dyn Eppf) -> Result<Vec<f64>> {
        self.shapes.iter().map(|(c, m)| Ok(m * eppf.prob(c)?)).collect()
    }
}

/// Chi-square comparison of sampled partitions of `[n]` with an EPPF.
pub fn chi_square_vs_eppf(samples: &[SetPartition], eppf: &dyn Eppf, n: usize) -> Result<TestResult> {
    if n == 1 {
        return Err(Error::DegenerateTest("only one partition of [1]".into()));
    }
    let cells = PartitionCells::new(n)?;
    stats::chi_square_gof(&cells.counts(samples)?, &cells.probs(eppf)?)
}

/// Chi-square comparison of block counts with a pmf indexed by `k` (entry 0 unused).
pub fn chi_square_block_counts(samples: &[SetPartition], pmf: &[f64]) -> Result<TestResult> {
    let mut counts = vec![0u64; pmf.len()];
    for p in samples {
        match counts.get_mut(p.k()) {
            Some(c) => *c += 1,
            None => return domain(format!("block count {} outside the pmf", p.k())),
        }
    }
    stats::chi_square_gof(&counts[1..], &pmf[1..])
}

/// Chi-square test that two samples of partitions of `[n]` share one law.
pub fn partition_homogeneity(a: &[SetPartition], b: &[SetPartition], n: usize) -> Result<TestResult> {
    let cells = PartitionCells::new(n)?;
    stats::homogeneity_test(&cells.counts(a)?, &cells.counts(b)?)
}
