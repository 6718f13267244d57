//! Budgeted greedy minimization over feature sets, and the per-bucket
//! acquisition plan it produces.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use crate::error::{GenexError, Result};
use crate::features::FeatureSet;
use crate::partition::BucketId;
use crate::setfn::{GfContext, GlContext};

/// Anything that can score marginal gains `G(e | S)` and be told about an
/// accepted element.
pub trait MarginalOracle {
    fn marginals(&self, current: &FeatureSet, candidates: &[usize]) -> Result<Vec<f64>>;

    fn accept(&mut self, _e: usize) -> Result<()> {
        Ok(())
    }
}

impl MarginalOracle for GfContext {
    fn marginals(&self, current: &FeatureSet, candidates: &[usize]) -> Result<Vec<f64>> {
        self.sweep(current, candidates)
    }

    fn accept(&mut self, e: usize) -> Result<()> {
        self.commit(e)
    }
}

impl MarginalOracle for GlContext {
    fn marginals(&self, current: &FeatureSet, candidates: &[usize]) -> Result<Vec<f64>> {
        let base = self.value(current)?;
        candidates
            .iter()
            .map(|&e| Ok(self.value(&current.with(e))? - base))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GreedyRun {
    pub selected: FeatureSet,
    /// Marginal gain of each accepted element at the time it was picked.
    pub gains: Vec<f64>,
}

/// Smallest value, first position on ties.
fn argmin(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, v) in values.iter().enumerate() {
        if best.is_none_or(|b| *v < values[b]) {
            best = Some(i);
        }
    }
    best
}

fn run(oracle: &mut impl MarginalOracle, budget: usize, pool: &FeatureSet, single: bool) -> Result<GreedyRun> {
    let mut selected = FeatureSet::empty();
    let mut gains = Vec::new();
    for _ in 0..budget {
        let candidates: Vec<usize> = pool.difference(&selected).iter().collect();
        if candidates.is_empty() {
            break;
        }
        let values = oracle.marginals(&selected, &candidates)?;
        let Some(best) = argmin(&values) else { break };
        if values[best] >= 0.0 || values[best].is_nan() {
            break;
        }
        let e = candidates[best];
        selected.insert(e);
        gains.push(values[best]);
        oracle.accept(e)?;
        if single {
            break;
        }
    }
    Ok(GreedyRun { selected, gains })
}

/// Adds the candidate with the most negative marginal gain while that gain
/// is negative, at most `q_max` times.
pub fn greedy_for_u(oracle: &mut impl MarginalOracle, q_max: usize, pool: &FeatureSet) -> Result<GreedyRun> {
    run(oracle, q_max, pool, false)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GreedyVMode {
    /// Same loop as the oracle-set greedy.
    Loop,
    /// Stop after the first accepted element.
    SingleStep,
}

impl GreedyVMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "loop" => Ok(GreedyVMode::Loop),
            "single" => Ok(GreedyVMode::SingleStep),
            other => Err(GenexError::invalid(format!("unknown greedy mode {other:?}"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            GreedyVMode::Loop => "loop",
            GreedyVMode::SingleStep => "single",
        }
    }
}

pub fn greedy_for_v(
    oracle: &mut impl MarginalOracle,
    lambda: usize,
    pool: &FeatureSet,
    mode: GreedyVMode,
) -> Result<GreedyRun> {
    run(oracle, lambda, pool, mode == GreedyVMode::SingleStep)
}

/// Generator quota used when none is configured.
pub fn default_lambda(q_max: usize) -> usize {
    q_max.div_ceil(2)
}

const PLAN_HEADER: &str = "genex-plan v1";

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BucketPlan {
    pub u: FeatureSet,
    pub v: FeatureSet,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AcquisitionPlan {
    pub q_max: usize,
    pub lambda: usize,
    pub buckets: BTreeMap<BucketId, BucketPlan>,
}

impl AcquisitionPlan {
    pub fn new(q_max: usize, lambda: usize) -> Self {
        AcquisitionPlan {
            q_max,
            lambda,
            buckets: BTreeMap::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (b, p) in &self.buckets {
            if p.u.len() > self.q_max || !p.v.is_subset(&p.u) || p.v.len() > self.lambda {
                return Err(GenexError::invalid(format!(
                    "bucket {b}: U={} V={} violates q_max={} lambda={}",
                    p.u, p.v, self.q_max, self.lambda
                )));
            }
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |m: String| GenexError::format("plan", m);
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        if lines.next() != Some(PLAN_HEADER) {
            return Err(bad("missing header".into()));
        }
        let mut field = |name: &str| -> Result<usize> {
            let line = lines.next().ok_or_else(|| bad(format!("missing {name}")))?;
            line.strip_prefix(name)
                .and_then(|rest| rest.trim().parse().ok())
                .ok_or_else(|| bad(format!("expected {name}, found {line:?}")))
        };
        let mut plan = AcquisitionPlan::new(field("q_max")?, field("lambda")?);
        for line in lines {
            let parts: Vec<&str> = line.split_whitespace().collect();
            match parts.as_slice() {
                ["bucket", id, "U", u, "V", v] => {
                    let id = id.parse().map_err(|_| bad(format!("bad bucket id {id:?}")))?;
                    let entry = BucketPlan {
                        u: FeatureSet::parse_compact(u)?,
                        v: FeatureSet::parse_compact(v)?,
                    };
                    if plan.buckets.insert(BucketId(id), entry).is_some() {
                        return Err(bad(format!("bucket {id} listed twice")));
                    }
                }
                _ => return Err(bad(format!("bad line {line:?}"))),
            }
        }
        plan.validate()?;
        Ok(plan)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_string()).map_err(|e| GenexError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| GenexError::io(path, e))?;
        Self::from_text(&text)
    }
}

impl fmt::Display for AcquisitionPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{PLAN_HEADER}")?;
        writeln!(f, "q_max {}", self.q_max)?;
        writeln!(f, "lambda {}", self.lambda)?;
        for (b, p) in &self.buckets {
            writeln!(f, "bucket {} U {} V {}", b.0, p.u.to_compact(), p.v.to_compact())?;
        }
        Ok(())
    }
}
