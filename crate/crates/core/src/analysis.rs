//! Empirical checks of the set-function properties the greedy guarantee
//! relies on: ratio estimators, exhaustive optima, the approximation bound,
//! the surrogate upper bound and the assumption constants.

use std::collections::HashMap;
use std::sync::Mutex;

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;

use crate::dataset::Dataset;
use crate::error::{GenexError, Result};
use crate::features::{binomial, subsets_up_to, FeatureSet};
use crate::greedy::MarginalOracle;
use crate::models::{train_f, BucketModels, ClassifierGrad};
use crate::seed::{derive_seed, rng_from, tag};
use crate::setfn::{mean_and_se, GfConfig, GfContext};
use crate::uncertainty::{pre_with, DeltaTable};

/// Ground sets up to this size are enumerated exhaustively.
pub const EXHAUSTIVE_LIMIT: usize = 12;
/// Denominators at or below this magnitude are skipped.
pub const ZERO_TOL: f64 = 1e-9;
/// Largest number of subsets an exhaustive optimum may visit.
pub const OPT_BUDGET: u128 = 100_000;

pub trait SetFunction: Sync {
    fn ground_size(&self) -> usize;
    fn value(&self, s: &FeatureSet) -> Result<f64>;
}

impl<F: Fn(&FeatureSet) -> f64 + Sync> SetFunction for (usize, F) {
    fn ground_size(&self) -> usize {
        self.0
    }

    fn value(&self, s: &FeatureSet) -> Result<f64> {
        Ok((self.1)(s))
    }
}

/// Memoizes another set function.
pub struct Cached<'a, G: SetFunction + ?Sized> {
    inner: &'a G,
    memo: Mutex<HashMap<FeatureSet, f64>>,
}

impl<'a, G: SetFunction + ?Sized> Cached<'a, G> {
    pub fn new(inner: &'a G) -> Self {
        Cached {
            inner,
            memo: Mutex::new(HashMap::new()),
        }
    }

    pub fn evaluations(&self) -> usize {
        self.memo.lock().expect("memo lock").len()
    }
}

impl<G: SetFunction + ?Sized> SetFunction for Cached<'_, G> {
    fn ground_size(&self) -> usize {
        self.inner.ground_size()
    }

    fn value(&self, s: &FeatureSet) -> Result<f64> {
        if let Some(v) = self.memo.lock().expect("memo lock").get(s) {
            return Ok(*v);
        }
        let v = self.inner.value(s)?;
        self.memo.lock().expect("memo lock").insert(s.clone(), v);
        Ok(v)
    }
}

/// Greedy access to a plain set function through value differences.
pub struct ValueOracle<'a, G: SetFunction + ?Sized>(pub &'a G);

impl<G: SetFunction + ?Sized> MarginalOracle for ValueOracle<'_, G> {
    fn marginals(&self, current: &FeatureSet, candidates: &[usize]) -> Result<Vec<f64>> {
        let base = self.0.value(current)?;
        candidates
            .iter()
            .map(|&e| Ok(self.0.value(&current.with(e))? - base))
            .collect()
    }
}

fn table(g: &(impl SetFunction + ?Sized)) -> Result<Vec<f64>> {
    let n = g.ground_size();
    (0..1u64 << n)
        .into_par_iter()
        .map(|bits| g.value(&FeatureSet::from_bits(bits)))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Monotonicity {
    pub m_min: f64,
    pub m_max: f64,
    pub pairs: usize,
    pub exhaustive: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Submodularity {
    /// `None` when every pair had a vanishing denominator.
    pub gamma_min: Option<f64>,
    pub gamma_max: Option<f64>,
    pub pairs: usize,
    pub skipped: usize,
    pub exhaustive: bool,
}

fn ratio(t: f64, s: f64) -> f64 {
    if s == 0.0 {
        1.0
    } else {
        t / s
    }
}

fn random_set(n: usize, rng: &mut impl Rng) -> FeatureSet {
    (0..n).filter(|_| rng.random_bool(0.5)).collect()
}

/// Ratio range `G(T)/G(S)` over nested pairs `S ⊆ T`, with `G(T)/G(S) = 1`
/// when `G(S) = 0`. Exhaustive up to [`EXHAUSTIVE_LIMIT`] features,
/// otherwise `budget` random pairs.
pub fn estimate_partial_monotonicity(g: &(impl SetFunction + ?Sized), budget: usize, seed: u64) -> Result<Monotonicity> {
    let n = g.ground_size();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut pairs = 0;
    if n <= EXHAUSTIVE_LIMIT {
        let values = table(g)?;
        for t in 0..values.len() {
            // every submask of t, including t and the empty set
            let mut s = t;
            loop {
                let r = ratio(values[t], values[s]);
                lo = lo.min(r);
                hi = hi.max(r);
                pairs += 1;
                if s == 0 {
                    break;
                }
                s = (s - 1) & t;
            }
        }
        return Ok(Monotonicity {
            m_min: lo,
            m_max: hi,
            pairs,
            exhaustive: true,
        });
    }
    let cached = Cached::new(g);
    let mut rng = rng_from(seed, &[tag::ANALYSIS, 1]);
    for _ in 0..budget {
        let t = random_set(n, &mut rng);
        let s: FeatureSet = t.iter().filter(|_| rng.random_bool(0.5)).collect();
        let r = ratio(cached.value(&t)?, cached.value(&s)?);
        lo = lo.min(r);
        hi = hi.max(r);
        pairs += 1;
    }
    Ok(Monotonicity {
        m_min: lo,
        m_max: hi,
        pairs,
        exhaustive: false,
    })
}

/// Ratio range `Σ_{u∈S} G(u|T) / |G(S|T)|` over disjoint pairs with
/// `|G(S|T)| > zero_tol`; other pairs are counted as skipped.
pub fn estimate_weak_submodularity(
    g: &(impl SetFunction + ?Sized),
    budget: usize,
    zero_tol: f64,
    seed: u64,
) -> Result<Submodularity> {
    let n = g.ground_size();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut pairs = 0;
    let mut skipped = 0;
    let mut visit = |singles: f64, joint: f64| {
        if joint.abs() <= zero_tol {
            skipped += 1;
        } else {
            let r = singles / joint.abs();
            lo = lo.min(r);
            hi = hi.max(r);
            pairs += 1;
        }
    };
    let exhaustive = n <= EXHAUSTIVE_LIMIT;
    if exhaustive {
        let values = table(g)?;
        let full = (1usize << n) - 1;
        for t in 0..=full {
            let rest = full & !t;
            let mut s = rest;
            while s != 0 {
                let singles: f64 = (0..n)
                    .filter(|u| s >> u & 1 == 1)
                    .map(|u| values[t | 1 << u] - values[t])
                    .sum();
                visit(singles, values[t | s] - values[t]);
                s = (s - 1) & rest;
            }
        }
    } else {
        let cached = Cached::new(g);
        let mut rng = rng_from(seed, &[tag::ANALYSIS, 2]);
        for _ in 0..budget {
            let t = random_set(n, &mut rng);
            let rest = FeatureSet::full(n).difference(&t);
            let s: FeatureSet = rest.iter().filter(|_| rng.random_bool(0.5)).collect();
            if s.is_empty() {
                continue;
            }
            let gt = cached.value(&t)?;
            let mut singles = 0.0;
            for u in s.iter() {
                singles += cached.value(&t.with(u))? - gt;
            }
            visit(singles, cached.value(&t.union(&s))? - gt);
        }
    }
    let defined = pairs > 0;
    Ok(Submodularity {
        gamma_min: defined.then_some(lo),
        gamma_max: defined.then_some(hi),
        pairs,
        skipped,
        exhaustive,
    })
}

/// Both ratio ranges restricted to the pairs a `q_max`-step greedy run can
/// meet: nested pairs with `|T| ≤ 2q_max − 1`, and disjoint pairs whose
/// summed set has at most `q_max` elements and whose conditioning set has
/// fewer than `q_max`. Exhaustive only.
pub fn proof_pair_ranges(g: &(impl SetFunction + ?Sized), q_max: usize, zero_tol: f64) -> Result<(Monotonicity, Submodularity)> {
    let n = g.ground_size();
    if n > EXHAUSTIVE_LIMIT {
        return Err(GenexError::BudgetExceeded {
            required: 1u128 << n,
            limit: 1u128 << EXHAUSTIVE_LIMIT,
        });
    }
    let values = table(g)?;
    let size = |s: usize| s.count_ones() as usize;
    let (mut m_lo, mut m_hi, mut m_pairs) = (f64::INFINITY, f64::NEG_INFINITY, 0);
    for t in (0..values.len()).filter(|&t| size(t) < 2 * q_max.max(1)) {
        let mut s = t;
        loop {
            let r = ratio(values[t], values[s]);
            m_lo = m_lo.min(r);
            m_hi = m_hi.max(r);
            m_pairs += 1;
            if s == 0 {
                break;
            }
            s = (s - 1) & t;
        }
    }
    let (mut g_lo, mut g_hi, mut pairs, mut skipped) = (f64::INFINITY, f64::NEG_INFINITY, 0, 0);
    let full = values.len() - 1;
    for t in (0..values.len()).filter(|&t| size(t) < q_max) {
        let rest = full & !t;
        let mut s = rest;
        while s != 0 {
            if size(s) <= q_max {
                let singles: f64 = (0..n)
                    .filter(|u| s >> u & 1 == 1)
                    .map(|u| values[t | 1 << u] - values[t])
                    .sum();
                let joint = values[t | s] - values[t];
                if joint.abs() <= zero_tol {
                    skipped += 1;
                } else {
                    g_lo = g_lo.min(singles / joint.abs());
                    g_hi = g_hi.max(singles / joint.abs());
                    pairs += 1;
                }
            }
            s = (s - 1) & rest;
        }
    }
    let defined = pairs > 0;
    Ok((
        Monotonicity {
            m_min: m_lo,
            m_max: m_hi,
            pairs: m_pairs,
            exhaustive: true,
        },
        Submodularity {
            gamma_min: defined.then_some(g_lo),
            gamma_max: defined.then_some(g_hi),
            pairs,
            skipped,
            exhaustive: true,
        },
    ))
}

/// Exhaustive minimum over subsets of size at most `q_max`; ties go to the
/// lexicographically smallest set.
pub fn brute_force_opt(g: &(impl SetFunction + ?Sized), q_max: usize) -> Result<(FeatureSet, f64)> {
    let n = g.ground_size();
    let q = q_max.min(n);
    let required: u128 = (0..=q).map(|k| binomial(n, k)).sum();
    if required > OPT_BUDGET {
        return Err(GenexError::BudgetExceeded {
            required,
            limit: OPT_BUDGET,
        });
    }
    let subsets = subsets_up_to(n, q);
    let values: Vec<f64> = subsets.par_iter().map(|s| g.value(s)).collect::<Result<_>>()?;
    let mut best = 0;
    for i in 1..subsets.len() {
        if values[i] < values[best] || (values[i] == values[best] && subsets[i] < subsets[best]) {
            best = i;
        }
    }
    Ok((subsets[best].clone(), values[best]))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundCheck {
    pub m_f: f64,
    pub gamma_f: f64,
    pub bound: f64,
    pub slack: f64,
    pub pass: bool,
    /// Inputs that make the bound vacuous or undefined, e.g. `m_min = 0`.
    pub degenerate: bool,
}

/// Evaluates `m_F·OPT − (1 − γ_F/q)^q (m_F·OPT − G(∅))` with
/// `m_F = max(m_max, 2 m_max / m_min)` and `γ_F = max(γ_max, −γ_min)`.
#[allow(clippy::too_many_arguments)]
pub fn check_greedy_bound(
    greedy: f64,
    opt: f64,
    empty: f64,
    m_min: f64,
    m_max: f64,
    gamma_min: f64,
    gamma_max: f64,
    q_max: usize,
) -> Result<BoundCheck> {
    if q_max == 0 {
        return Err(GenexError::invalid("the approximation bound needs q_max >= 1"));
    }
    let m_f = m_max.max(2.0 * m_max / m_min);
    let gamma_f = gamma_max.max(-gamma_min);
    let q = q_max as f64;
    let bound = m_f * opt - (1.0 - gamma_f / q).powi(q_max as i32) * (m_f * opt - empty);
    let slack = bound - greedy;
    Ok(BoundCheck {
        m_f,
        gamma_f,
        bound,
        slack,
        pass: slack >= 0.0,
        degenerate: !bound.is_finite() || m_min <= 0.0 || gamma_f == 0.0,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SurrogateBoundCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub rhs_set: FeatureSet,
    /// Combined Monte Carlo standard error of both sides.
    pub se: f64,
    pub slack: f64,
    pub pass: bool,
}

/// Per-instance (oracle, generated) assignments over the unobserved
/// features with at most `q_max` oracle features.
fn assignments(unobserved: &[usize], q_max: usize) -> Vec<(FeatureSet, FeatureSet)> {
    let mut out = vec![(FeatureSet::empty(), FeatureSet::empty())];
    for &j in unobserved {
        let mut next = Vec::with_capacity(out.len() * 3);
        for (a, v) in &out {
            next.push((a.clone(), v.clone()));
            if a.len() < q_max {
                next.push((a.with(j), v.clone()));
            }
            next.push((a.clone(), v.with(j)));
        }
        out = next;
    }
    out
}

/// Compares the best per-instance mixed oracle/generated loss with the
/// best shared-set surrogate, both at the context's fixed parameters and
/// on the same cached generator samples. Passes when
/// `lhs ≤ rhs + 3·se`.
pub fn check_surrogate_bound(ctx: &GfContext, q_max: usize, budget: u128) -> Result<SurrogateBoundCheck> {
    let data = ctx.data();
    let n = data.n;
    let mut required: u128 = (0..=q_max.min(n)).map(|k| binomial(n, k)).sum();
    for inst in &data.instances {
        required += 3u128.saturating_pow((n - inst.observed.len()) as u32);
    }
    if required > budget {
        return Err(GenexError::BudgetExceeded { required, limit: budget });
    }
    let mut lhs = 0.0;
    let mut lhs_var = 0.0;
    for (i, inst) in data.instances.iter().enumerate() {
        let unobserved: Vec<usize> = FeatureSet::full(n).difference(&inst.observed).iter().collect();
        let mut best = (f64::INFINITY, 0.0);
        for (a, v) in assignments(&unobserved, q_max) {
            let (m, se) = ctx.mixed_loss(i, &a, &v);
            if m < best.0 {
                best = (m, se);
            }
        }
        lhs += best.0;
        lhs_var += best.1 * best.1;
    }
    let mut rhs = (FeatureSet::empty(), f64::INFINITY, 0.0);
    for u in subsets_up_to(n, q_max.min(n)) {
        let terms: Vec<_> = (0..data.len()).map(|i| ctx.terms(i, &u)).collect();
        let k = terms
            .iter()
            .map(|t| t.generated_losses.len())
            .max()
            .unwrap_or(0)
            .max(1);
        let totals: Vec<f64> = (0..k)
            .map(|s| {
                terms
                    .iter()
                    .map(|t| {
                        let g = t.generated_losses.get(s).copied().unwrap_or(t.oracle_loss);
                        if t.delta == 1.0 {
                            t.oracle_loss
                        } else {
                            t.delta * t.oracle_loss + (1.0 - t.delta) * g
                        }
                    })
                    .sum()
            })
            .collect();
        let (mean, se) = mean_and_se(&totals);
        if mean < rhs.1 {
            rhs = (u, mean, se);
        }
    }
    let se = (lhs_var + rhs.2 * rhs.2).sqrt();
    let slack = rhs.1 + 3.0 * se - lhs;
    Ok(SurrogateBoundCheck {
        lhs,
        rhs: rhs.1,
        rhs_set: rhs.0,
        se,
        slack,
        pass: slack >= 0.0,
    })
}

/// Surrogate objective at parameters retrained from the same pretrained
/// start for every subset, as a stand-in for the inner optimum.
pub struct FullRetrainGf {
    data: Dataset,
    pretrained: BucketModels,
    deltas: DeltaTable,
    cfg: GfConfig,
    epochs: usize,
    seed: u64,
}

impl FullRetrainGf {
    pub fn new(
        data: Dataset,
        pretrained: BucketModels,
        deltas: DeltaTable,
        cfg: GfConfig,
        epochs: usize,
        seed: u64,
    ) -> Result<Self> {
        if data.is_empty() {
            return Err(GenexError::EmptyBucket);
        }
        Ok(FullRetrainGf {
            data,
            pretrained,
            deltas,
            cfg,
            epochs,
            seed,
        })
    }

    /// Parameters after training on `U`.
    pub fn trained(&self, u: &FeatureSet) -> Result<BucketModels> {
        let mut models = self.pretrained.clone();
        let deltas: Vec<f64> = (0..self.data.len()).map(|i| self.deltas.delta(i, u)).collect();
        train_f(&mut models, &self.data, u, &deltas, self.epochs, &self.cfg.train, derive_seed(self.seed, &[tag::SHUFFLE]))?;
        Ok(models)
    }
}

impl SetFunction for FullRetrainGf {
    fn ground_size(&self) -> usize {
        self.data.n
    }

    fn value(&self, u: &FeatureSet) -> Result<f64> {
        let models = self.trained(u)?;
        let ctx = GfContext::new(self.data.clone(), models, self.deltas.clone(), self.cfg, self.seed)?;
        ctx.value(u)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AssumptionConstants {
    pub eps_delta: f64,
    pub eps_x: f64,
    pub delta_min: f64,
    pub delta_max: f64,
    pub loss_min: f64,
    pub loss_max: f64,
    pub lipschitz_x: f64,
}

/// Samples instances and feature subsets to measure the bounded-quantity
/// constants: generator error `ε_x`, uncertainty spread `ε_Δ`, loss and
/// uncertainty ranges, and the input-gradient norm `L_x`.
pub fn measure_constants(
    data: &Dataset,
    models: &BucketModels,
    deltas: &DeltaTable,
    mc_samples: usize,
    budget: usize,
    seed: u64,
) -> Result<AssumptionConstants> {
    if data.is_empty() {
        return Err(GenexError::EmptyBucket);
    }
    let n = data.n;
    let clf = &models.classifier;
    let mut rng = rng_from(seed, &[tag::ANALYSIS, 3]);
    let mut c = AssumptionConstants {
        eps_delta: 0.0,
        eps_x: 0.0,
        delta_min: f64::INFINITY,
        delta_max: f64::NEG_INFINITY,
        loss_min: f64::INFINITY,
        loss_max: f64::NEG_INFINITY,
        lipschitz_x: 0.0,
    };
    let mut grad = ClassifierGrad::zeros_like(clf);
    let mut dx = vec![0.0; 2 * n];
    for _ in 0..budget.max(1) {
        let i = rng.random_range(0..data.len());
        let inst = &data.instances[i];
        let s = random_set(n, &mut rng);
        let t = random_set(n, &mut rng);
        let ds = deltas.delta(i, &s);
        let dt = deltas.delta(i, &t);
        c.eps_delta = c.eps_delta.max((ds - dt).abs());
        c.delta_min = c.delta_min.min(ds.min(dt));
        c.delta_max = c.delta_max.max(ds.max(dt));

        let x = inst.input_with(&s).encoded();
        let loss = clf.loss_and_grad(&x, inst.label, 1.0, &mut grad, Some(&mut dx));
        c.loss_min = c.loss_min.min(loss);
        c.loss_max = c.loss_max.max(loss);
        c.lipschitz_x = c.lipschitz_x.max(dx[..n].iter().map(|g| g * g).sum::<f64>().sqrt());

        let target = s.difference(&inst.observed);
        if !target.is_empty() {
            let cond = inst.observed_input();
            let mut total = 0.0;
            for _ in 0..mc_samples.max(1) {
                let eps = models.generator.draw_noise(&mut rng);
                let g = models.generator.generate(&cond, Some(&inst.features), &eps)?;
                total += target.iter().map(|j| (g[j] - inst.features[j]).powi(2)).sum::<f64>().sqrt();
            }
            c.eps_x = c.eps_x.max(total / mc_samples.max(1) as f64);
        }
    }
    Ok(c)
}

/// `budget` random distinct instance positions, or all of them.
pub fn sample_positions(len: usize, budget: usize, seed: u64) -> Vec<usize> {
    if budget >= len {
        return (0..len).collect();
    }
    let mut v = sample(&mut rng_from(seed, &[tag::ANALYSIS, 4]), len, budget).into_vec();
    v.sort_unstable();
    v
}

/// Loss of `h(x[O ∪ S])` for every instance at fixed parameters, summed.
pub fn oracle_loss(data: &Dataset, models: &BucketModels, s: &FeatureSet) -> f64 {
    let clf = &models.classifier;
    data.instances
        .iter()
        .map(|inst| {
            let base = clf.hidden_pre(&inst.observed_input().encoded());
            let extra = s.difference(&inst.observed);
            clf.loss_from_pre(&pre_with(clf, &base, &extra, &inst.features), inst.label)
        })
        .sum()
}
