//! Membership in the outage rate regions, the coin-bias interval, and
//! boundary tracing over a shared sample stream.
//!
//! Membership is decided on the integer case counts behind
//! [`CaseProbabilities`], compared against `ε·N` in exact rational
//! arithmetic. Every implication between the regions (common ⊆ fixed choice
//! ⊆ individual, bias interval nonempty ⇔ individual member) therefore holds
//! exactly on the estimates, not merely up to rounding.
//!
//! The individual sum condition uses the joint estimate of `P_A`. Under
//! independent links it equals the product of the single-user exceedance
//! marginals; that product form is reported as a diagnostic margin.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::SampleSource;
use crate::optimize::bisect_last_true;
use crate::outage::{CaseCounts, CaseLabel, CaseProbabilities};
use crate::rate::{LinkPairProblem, RatePoint};
use crate::{Error, Link, Noise, Result};

/// Relative tolerance used when bisecting for the axis intercepts.
pub const AXIS_TOL: f64 = 1e-9;

/// Headroom factor applied to the single-user quantiles for default caps.
pub const CAP_HEADROOM: f64 = 1.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    CommonInst,
    IndividualInst,
    IndividualInstFixed1,
    IndividualInstFixed2,
    CommonStat,
    IndividualStat,
}

impl Scenario {
    pub const ALL: [Scenario; 6] = [
        Scenario::CommonInst,
        Scenario::IndividualInst,
        Scenario::IndividualInstFixed1,
        Scenario::IndividualInstFixed2,
        Scenario::CommonStat,
        Scenario::IndividualStat,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Scenario::CommonInst => "common-inst",
            Scenario::IndividualInst => "individual-inst",
            Scenario::IndividualInstFixed1 => "individual-inst-fixed1",
            Scenario::IndividualInstFixed2 => "individual-inst-fixed2",
            Scenario::CommonStat => "common-stat",
            Scenario::IndividualStat => "individual-stat",
        }
    }

    pub fn is_statistical(self) -> bool {
        matches!(self, Scenario::CommonStat | Scenario::IndividualStat)
    }

    pub fn is_common(self) -> bool {
        matches!(self, Scenario::CommonInst | Scenario::CommonStat)
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.tag() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown scenario '{s}'")))
    }
}

/// Outage probability specification.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum OutageSpec {
    Common { epsilon: f64 },
    Individual { epsilon1: f64, epsilon2: f64 },
}

fn check_probability(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} = {x} must lie in (0, 1)")))
    }
}

impl OutageSpec {
    pub fn common(epsilon: f64) -> Result<Self> {
        check_probability("epsilon", epsilon)?;
        Ok(OutageSpec::Common { epsilon })
    }

    pub fn individual(epsilon1: f64, epsilon2: f64) -> Result<Self> {
        check_probability("epsilon1", epsilon1)?;
        check_probability("epsilon2", epsilon2)?;
        Ok(OutageSpec::Individual { epsilon1, epsilon2 })
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            OutageSpec::Common { epsilon } => check_probability("epsilon", epsilon),
            OutageSpec::Individual { epsilon1, epsilon2 } => {
                check_probability("epsilon1", epsilon1)?;
                check_probability("epsilon2", epsilon2)
            }
        }
    }

    /// Per-link outage levels; a common spec contributes `ε` to both links.
    pub fn epsilons(&self) -> (f64, f64) {
        match *self {
            OutageSpec::Common { epsilon } => (epsilon, epsilon),
            OutageSpec::Individual { epsilon1, epsilon2 } => (epsilon1, epsilon2),
        }
    }

    pub fn get(&self, link: Link) -> f64 {
        let (e1, e2) = self.epsilons();
        match link {
            Link::One => e1,
            Link::Two => e2,
        }
    }
}

fn rat(x: f64) -> BigRational {
    BigRational::from_float(x).expect("outage levels are finite")
}

fn int(x: u64) -> BigRational {
    BigRational::from_integer(BigInt::from(x))
}

/// `count ≤ ε·N`, exactly.
fn within(count: u64, epsilon: &BigRational, n: u64) -> bool {
    int(count) <= epsilon * int(n)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommonVerdict {
    pub member: bool,
    /// `p_b - (1 - ε)`.
    pub margin: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndividualVerdict {
    pub member: bool,
    /// Slack of the link-1 marginal, link-2 marginal and sum conditions
    /// (nonnegative when satisfied).
    pub margins: [f64; 3],
    /// Sum condition with `P_A` replaced by the product of the single-user
    /// exceedance estimates.
    pub product_form_margin: f64,
}

/// Common outage: member iff `p_b ≥ 1 - ε`.
pub fn common_inst_member(probs: &CaseProbabilities, epsilon: f64) -> CommonVerdict {
    let n = probs.n_samples();
    CommonVerdict {
        member: within(n - probs.counts.b, &rat(epsilon), n),
        margin: probs.p_b() - (1.0 - epsilon),
    }
}

/// Individual outage: the link-1 and link-2 single-user conditions and the
/// sum condition `ε1 + ε2 ≥ 1 + P_A - P_B`.
pub fn individual_inst_member(probs: &CaseProbabilities, epsilon1: f64, epsilon2: f64) -> IndividualVerdict {
    let c = probs.counts;
    let n = probs.n_samples();
    let (e1, e2) = (rat(epsilon1), rat(epsilon2));
    let cond1 = within(c.a + c.c2, &e1, n);
    let cond2 = within(c.a + c.c1, &e2, n);
    let cond3 = int(n + c.a) - int(c.b) <= (&e1 + &e2) * int(n);
    let q1 = probs.su_exceed_prob(Link::One);
    let q2 = probs.su_exceed_prob(Link::Two);
    IndividualVerdict {
        member: cond1 && cond2 && cond3,
        margins: [
            epsilon1 - (probs.p_a() + probs.p_c2()),
            epsilon2 - (probs.p_a() + probs.p_c1()),
            epsilon1 + epsilon2 - (1.0 + probs.p_a() - probs.p_b()),
        ],
        product_form_margin: epsilon1 + epsilon2 - (q1 * q2 + 1.0 - probs.p_b()),
    }
}

/// Range of constant coin biases (probability of serving link 1 in case D)
/// that meet both individual outage constraints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasInterval {
    pub lo: f64,
    pub hi: f64,
    pub nonempty: bool,
}

impl BiasInterval {
    pub fn midpoint(&self) -> Option<f64> {
        self.nonempty.then(|| 0.5 * (self.lo + self.hi))
    }

    pub fn contains(&self, p: f64) -> bool {
        self.nonempty && p >= self.lo && p <= self.hi
    }
}

/// Bias interval from the two per-link constraints
/// `P_B + P_C1 + p P_D ≥ 1 - ε1` and `P_B + P_C2 + (1-p) P_D ≥ 1 - ε2`,
/// intersected with `[0, 1]`.
pub fn bias_interval(probs: &CaseProbabilities, epsilon1: f64, epsilon2: f64) -> BiasInterval {
    let c = probs.counts;
    let n = int(probs.n_samples());
    let (e1, e2) = (rat(epsilon1), rat(epsilon2));
    let zero = BigRational::zero();
    let one = int(1);
    let (lo, hi) = if c.d == 0 {
        let ok = int(c.a + c.c2) <= &e1 * &n && int(c.a + c.c1) <= &e2 * &n;
        if ok {
            (zero, one)
        } else {
            (one, zero)
        }
    } else {
        let d = int(c.d);
        let lo = (int(c.a + c.c2 + c.d) - &e1 * &n) / &d;
        let hi = (&e2 * &n - int(c.a + c.c1)) / &d;
        (lo.max(zero), hi.min(one))
    };
    BiasInterval {
        nonempty: lo <= hi,
        lo: lo.to_f64().expect("bounded rational"),
        hi: hi.to_f64().expect("bounded rational"),
    }
}

fn fixed_conditions(probs: &CaseProbabilities, epsilon1: f64, epsilon2: f64, choice: Link) -> (bool, [f64; 2]) {
    let c = probs.counts;
    let n = probs.n_samples();
    let (e1, e2) = (rat(epsilon1), rat(epsilon2));
    let p = |x: u64| x as f64 / n as f64;
    match choice {
        Link::One => (
            within(c.a + c.c2, &e1, n) && within(c.a + c.c1 + c.d, &e2, n),
            [epsilon1 - p(c.a + c.c2), epsilon2 - p(c.a + c.c1 + c.d)],
        ),
        Link::Two => (
            within(c.a + c.c2 + c.d, &e1, n) && within(c.a + c.c1, &e2, n),
            [epsilon1 - p(c.a + c.c2 + c.d), epsilon2 - p(c.a + c.c1)],
        ),
    }
}

/// Individual outage with every case-D realization resolved in favor of
/// `choice`.
pub fn fixed_choice_member(probs: &CaseProbabilities, epsilon1: f64, epsilon2: f64, choice: Link) -> bool {
    fixed_conditions(probs, epsilon1, epsilon2, choice).0
}

/// Membership decision with the margins reported in CSV output. Unused
/// margin slots are `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub member: bool,
    pub margins: [Option<f64>; 3],
}

/// Membership of an instantaneous-CSI scenario given case estimates.
pub fn inst_verdict(scenario: Scenario, spec: &OutageSpec, probs: &CaseProbabilities) -> Result<Verdict> {
    let (e1, e2) = spec.epsilons();
    Ok(match scenario {
        Scenario::CommonInst => {
            let OutageSpec::Common { epsilon } = *spec else {
                return Err(Error::InvalidArgument("common-inst needs a common outage spec".into()));
            };
            let v = common_inst_member(probs, epsilon);
            Verdict { member: v.member, margins: [Some(v.margin), None, None] }
        }
        Scenario::IndividualInst => {
            let v = individual_inst_member(probs, e1, e2);
            Verdict { member: v.member, margins: v.margins.map(Some) }
        }
        Scenario::IndividualInstFixed1 | Scenario::IndividualInstFixed2 => {
            let choice = if scenario == Scenario::IndividualInstFixed1 { Link::One } else { Link::Two };
            let (member, m) = fixed_conditions(probs, e1, e2, choice);
            Verdict { member, margins: [Some(m[0]), Some(m[1]), None] }
        }
        Scenario::CommonStat | Scenario::IndividualStat => {
            return Err(Error::InvalidArgument(format!("{scenario} is not an instantaneous-CSI scenario")));
        }
    })
}

/// Uniform rate grid for boundary tracing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub points: usize,
    pub r1_cap: f64,
    pub r2_cap: f64,
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.points < 2 {
            return Err(Error::InvalidArgument("grid needs at least 2 points per axis".into()));
        }
        for (name, cap) in [("r1_cap", self.r1_cap), ("r2_cap", self.r2_cap)] {
            if !(cap.is_finite() && cap > 0.0) {
                return Err(Error::InvalidArgument(format!("{name} = {cap} must be positive and finite")));
            }
        }
        Ok(())
    }

    pub fn r1_values(&self) -> Vec<f64> {
        axis(self.r1_cap, self.points)
    }

    pub fn r2_values(&self) -> Vec<f64> {
        axis(self.r2_cap, self.points)
    }

    pub fn r2_resolution(&self) -> f64 {
        self.r2_cap / (self.points - 1) as f64
    }
}

fn axis(cap: f64, points: usize) -> Vec<f64> {
    (0..points)
        .map(|i| if i + 1 == points { cap } else { cap * i as f64 / (points - 1) as f64 })
        .collect()
}

/// Raw output of [`trace_boundary`].
#[derive(Debug, Clone, PartialEq)]
pub struct TraceOutcome {
    /// Non-dominated boundary points ordered by increasing `r1`.
    pub points: Vec<RatePoint>,
    /// Largest member `r2` per grid column, `None` for empty columns.
    pub columns: Vec<Option<f64>>,
    /// Largest member `r1` on the `r2 = 0` axis and `r2` on the `r1 = 0` axis.
    pub intercepts: [f64; 2],
    pub warnings: Vec<String>,
}

/// Traces the outer boundary of a downward-closed region given by `oracle`.
///
/// Each column of the grid is bisected on `r2` down to a tenth of the grid
/// resolution; both axis intercepts are bisected to a relative `AXIS_TOL`.
/// Violations of downward closure seen along the way are reported as
/// warnings rather than repaired.
pub fn trace_boundary<F>(oracle: F, grid: &GridSpec) -> Result<TraceOutcome>
where
    F: Fn(RatePoint) -> bool + Sync,
{
    grid.validate()?;
    let member = |r1: f64, r2: f64| oracle(RatePoint { r1, r2 });
    let mut warnings = Vec::new();
    if !member(0.0, 0.0) {
        warnings.push("origin is not a member; region is empty".to_string());
        return Ok(TraceOutcome {
            points: Vec::new(),
            columns: vec![None; grid.points],
            intercepts: [0.0, 0.0],
            warnings,
        });
    }

    let tol = grid.r2_resolution() / 10.0;
    let r1s = grid.r1_values();
    let columns: Vec<(Option<f64>, bool)> = r1s
        .par_iter()
        .map(|&r1| {
            if !member(r1, 0.0) {
                (None, false)
            } else if member(r1, grid.r2_cap) {
                (Some(grid.r2_cap), true)
            } else {
                (Some(bisect_last_true(|r2| member(r1, r2), 0.0, grid.r2_cap, tol)), false)
            }
        })
        .collect();

    let intercept = |cap: f64, on_r1: bool| {
        let pred = |x: f64| if on_r1 { member(x, 0.0) } else { member(0.0, x) };
        if pred(cap) {
            (cap, true)
        } else {
            (bisect_last_true(pred, 0.0, cap, AXIS_TOL * cap), false)
        }
    };
    let (r1_int, r1_capped) = intercept(grid.r1_cap, true);
    let (r2_int, r2_capped) = intercept(grid.r2_cap, false);
    if r1_capped {
        warnings.push(format!("r1 axis reaches the cap {}", grid.r1_cap));
    }
    if r2_capped || columns.iter().any(|c| c.1) {
        warnings.push(format!("r2 reaches the cap {} in some column", grid.r2_cap));
    }

    let mut seen_empty = false;
    let mut prev: Option<f64> = None;
    for (i, (col, _)) in columns.iter().enumerate() {
        match col {
            None => seen_empty = true,
            Some(r2) => {
                if seen_empty {
                    warnings.push(format!("non-monotone oracle: column {i} (r1 = {}) has members after an empty column", r1s[i]));
                }
                if let Some(p) = prev {
                    if *r2 > p + tol {
                        warnings.push(format!("non-monotone oracle: column {i} (r1 = {}) rises from {p} to {r2}", r1s[i]));
                    }
                }
                prev = Some(*r2);
            }
        }
    }

    let mut candidates = vec![RatePoint { r1: 0.0, r2: r2_int }, RatePoint { r1: r1_int, r2: 0.0 }];
    candidates.extend(r1s.iter().zip(&columns).filter_map(|(&r1, c)| c.0.map(|r2| RatePoint { r1, r2 })));
    Ok(TraceOutcome {
        points: non_dominated(&candidates),
        columns: columns.into_iter().map(|c| c.0).collect(),
        intercepts: [r1_int, r2_int],
        warnings,
    })
}

/// Points not weakly dominated by another point, ordered by increasing `r1`.
/// Of duplicate points one copy is kept.
pub fn non_dominated(points: &[RatePoint]) -> Vec<RatePoint> {
    non_dominated_by(points.to_vec(), |p| (p.r1, p.r2))
}

pub(crate) fn non_dominated_by<T>(mut items: Vec<T>, key: impl Fn(&T) -> (f64, f64)) -> Vec<T> {
    items.sort_by(|a, b| {
        let (ka, kb) = (key(a), key(b));
        kb.0.total_cmp(&ka.0).then(kb.1.total_cmp(&ka.1))
    });
    let mut best = f64::NEG_INFINITY;
    let mut kept = Vec::new();
    for item in items {
        let r2 = key(&item).1;
        if r2 > best {
            best = r2;
            kept.push(item);
        }
    }
    kept.reverse();
    kept
}

/// Classifies a fixed sample stream at many rate points.
///
/// Per realization it keeps the power frontiers and single-user rates, and
/// per `r1` it caches the largest jointly achievable `r2` of every sample,
/// after which each rate point costs one comparison per sample.
pub struct InstantaneousEvaluator {
    problems: Vec<LinkPairProblem>,
    su: [Vec<f64>; 2],
    seed: Option<u64>,
    columns: Mutex<HashMap<u64, Arc<Vec<f64>>>>,
}

impl InstantaneousEvaluator {
    pub fn new(source: &SampleSource, noise: Noise) -> Result<Self> {
        noise.validate()?;
        if source.is_empty() {
            return Err(Error::InvalidArgument("sample stream is empty".into()));
        }
        let problems: Vec<LinkPairProblem> =
            (0..source.len()).into_par_iter().map(|k| LinkPairProblem::new(&source.get(k), noise)).collect();
        let su = [problems.iter().map(|p| p.su[0]).collect(), problems.iter().map(|p| p.su[1]).collect()];
        Ok(InstantaneousEvaluator { problems, su, seed: source.seed(), columns: Mutex::new(HashMap::new()) })
    }

    pub fn n_samples(&self) -> u64 {
        self.problems.len() as u64
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn problems(&self) -> &[LinkPairProblem] {
        &self.problems
    }

    pub fn su_rates(&self, link: Link) -> &[f64] {
        &self.su[link.index()]
    }

    /// Largest `r` with `#{R_SU < r} ≤ ε N`: the single-user axis intercept
    /// of the individual region.
    pub fn su_quantile(&self, link: Link, epsilon: f64) -> f64 {
        let mut sorted = self.su[link.index()].clone();
        sorted.sort_by(f64::total_cmp);
        let k = (rat(epsilon) * int(self.n_samples())).floor().to_integer();
        let k = k.to_usize().unwrap_or(usize::MAX).min(sorted.len() - 1);
        sorted[k]
    }

    /// Per-sample largest jointly achievable `r2` at `r1`; `NaN` where `r1`
    /// exceeds the single-user rate of link 1.
    pub fn r2_star_column(&self, r1: f64) -> Arc<Vec<f64>> {
        let key = r1.to_bits();
        if let Some(col) = self.columns.lock().expect("cache lock").get(&key) {
            return Arc::clone(col);
        }
        let col: Vec<f64> = self.problems.par_iter().map(|p| p.max_r2(r1).unwrap_or(f64::NAN)).collect();
        let col = Arc::new(col);
        self.columns.lock().expect("cache lock").entry(key).or_insert_with(|| Arc::clone(&col));
        col
    }

    pub fn clear_cache(&self) {
        self.columns.lock().expect("cache lock").clear();
    }

    pub fn case_probabilities(&self, point: RatePoint) -> CaseProbabilities {
        let [su1, su2] = &self.su;
        let column = (point.r2 > 0.0).then(|| self.r2_star_column(point.r1));
        let mut counts = CaseCounts::default();
        for k in 0..self.problems.len() {
            let over1 = point.r1 > su1[k];
            let over2 = point.r2 > su2[k];
            let joint = !over1 && !over2 && column.as_ref().is_none_or(|c| point.r2 <= c[k]);
            counts.add(if over1 && over2 {
                CaseLabel::A
            } else if joint {
                CaseLabel::B
            } else if over2 {
                CaseLabel::C1
            } else if over1 {
                CaseLabel::C2
            } else {
                CaseLabel::D
            });
        }
        CaseProbabilities::from_counts(counts).expect("stream is nonempty")
    }

    pub fn verdict(&self, scenario: Scenario, spec: &OutageSpec, point: RatePoint) -> Result<(Verdict, CaseProbabilities)> {
        let probs = self.case_probabilities(point);
        Ok((inst_verdict(scenario, spec, &probs)?, probs))
    }

    pub fn member(&self, scenario: Scenario, spec: &OutageSpec, point: RatePoint) -> Result<bool> {
        Ok(self.verdict(scenario, spec, point)?.0.member)
    }

    /// Grid with caps at `CAP_HEADROOM` times the single-user quantiles.
    pub fn default_grid(&self, spec: &OutageSpec, points: usize) -> GridSpec {
        let cap = |link| {
            let q = CAP_HEADROOM * self.su_quantile(link, spec.get(link));
            if q > 0.0 {
                q
            } else {
                1.0
            }
        };
        GridSpec { points, r1_cap: cap(Link::One), r2_cap: cap(Link::Two) }
    }
}

/// One traced boundary point with its supporting estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPoint {
    pub r1: f64,
    pub r2: f64,
    pub counts: Option<CaseCounts>,
    pub margins: [Option<f64>; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryMetadata {
    pub scenario: Scenario,
    pub spec: OutageSpec,
    pub seed: Option<u64>,
    pub n_samples: Option<u64>,
    pub beamformer_pairs: Option<usize>,
    pub grid: Option<GridSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionBoundary {
    pub metadata: BoundaryMetadata,
    pub points: Vec<BoundaryPoint>,
    pub warnings: Vec<String>,
}

pub const CSV_HEADER: &str = "r1,r2,p_a,p_b,p_c1,p_c2,p_d,margin_1,margin_2,margin_3";

fn sci(x: f64) -> String {
    format!("{x:.9e}")
}

impl RegionBoundary {
    pub fn rate_points(&self) -> Vec<RatePoint> {
        self.points.iter().map(|p| RatePoint { r1: p.r1, r2: p.r2 }).collect()
    }

    /// CSV with fixed columns; absent values are empty fields.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for p in &self.points {
            let mut fields = vec![sci(p.r1), sci(p.r2)];
            match p.counts {
                Some(c) => {
                    let n = c.total() as f64;
                    fields.extend(CaseLabel::ALL.iter().map(|&l| sci(c.get(l) as f64 / n)));
                }
                None => fields.extend(std::iter::repeat_n(String::new(), 5)),
            }
            fields.extend(p.margins.iter().map(|m| m.map(sci).unwrap_or_default()));
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out
    }

    /// Largest `r2` on the staircase spanned by the boundary points at `r1`.
    pub fn max_r2_at(&self, r1: f64) -> Option<f64> {
        self.points.iter().filter(|p| p.r1 >= r1).map(|p| p.r2).reduce(f64::max)
    }
}

/// Traces an instantaneous-CSI scenario on the evaluator's stream.
pub fn trace_instantaneous(
    eval: &InstantaneousEvaluator,
    scenario: Scenario,
    spec: &OutageSpec,
    grid: &GridSpec,
) -> Result<RegionBoundary> {
    inst_verdict(scenario, spec, &CaseProbabilities::from_counts(CaseCounts::new(0, 1, 0, 0, 0))?)?;
    let outcome = trace_boundary(
        |p| eval.member(scenario, spec, p).expect("scenario checked above"),
        grid,
    )?;
    let points = outcome
        .points
        .iter()
        .map(|&p| {
            let (verdict, probs) = eval.verdict(scenario, spec, p)?;
            Ok(BoundaryPoint { r1: p.r1, r2: p.r2, counts: Some(probs.counts), margins: verdict.margins })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RegionBoundary {
        metadata: BoundaryMetadata {
            scenario,
            spec: *spec,
            seed: eval.seed(),
            n_samples: Some(eval.n_samples()),
            beamformer_pairs: None,
            grid: Some(*grid),
        },
        points,
        warnings: outcome.warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{ChannelRealization, ChannelStatistics};
    use crate::outage::estimate_case_probs;
    use proptest::prelude::*;

    fn probs(a: u64, b: u64, c1: u64, c2: u64, d: u64) -> CaseProbabilities {
        CaseProbabilities::from_counts(CaseCounts::new(a, b, c1, c2, d)).unwrap()
    }

    #[test]
    fn common_examples() {
        assert!(common_inst_member(&probs(0, 100, 0, 0, 0), 0.1).member);
        let v = common_inst_member(&probs(0, 89, 5, 5, 1), 0.1);
        assert!(!v.member);
        assert!((v.margin + 0.01).abs() < 1e-12);
        // boundary case: p_b exactly 0.9 is a member
        assert!(common_inst_member(&probs(0, 90, 5, 5, 0), 0.1).member);
    }

    #[test]
    fn individual_examples() {
        // marginals 0.05 each, 1 - p_b = 0.15
        let p = probs(25, 8500, 475, 475, 525);
        assert_eq!(p.su_exceed_prob(Link::One), 0.05);
        let v = individual_inst_member(&p, 0.1, 0.1);
        assert!(v.member);
        assert!((v.product_form_margin - (0.2 - 0.0025 - 0.15)).abs() < 1e-12);

        let v = individual_inst_member(&probs(0, 70, 0, 20, 10), 0.1, 0.1);
        assert!(!v.member);
        assert!(v.margins[0] < 0.0);

        let delta = 1e-3;
        let v = individual_inst_member(&probs(400, 3, 300, 200, 97), 1.0 - delta, 1.0 - delta);
        assert!(v.member);
    }

    #[test]
    fn bias_examples() {
        let bi = bias_interval(&probs(0, 50, 0, 0, 50), 0.25, 0.25);
        assert!(bi.nonempty);
        assert_eq!((bi.lo, bi.hi), (0.5, 0.5));

        let bi = bias_interval(&probs(7, 1, 3, 4, 5), 1.0, 1.0);
        assert_eq!((bi.lo, bi.hi, bi.nonempty), (0.0, 1.0, true));

        let p = probs(0, 0, 0, 0, 10);
        let bi = bias_interval(&p, 0.4, 0.4);
        assert!(!bi.nonempty);
        assert!((bi.lo - 0.6).abs() < 1e-15 && (bi.hi - 0.4).abs() < 1e-15);
        assert!(!individual_inst_member(&p, 0.4, 0.4).member);

        // point-mass case D: interval [1 - ε1, ε2]
        let bi = bias_interval(&probs(0, 0, 0, 0, 1), 0.3, 0.8);
        assert!(bi.nonempty);
        assert!((bi.lo - 0.7).abs() < 1e-15 && (bi.hi - 0.8).abs() < 1e-15);
    }

    #[test]
    fn bias_without_case_d() {
        assert!(bias_interval(&probs(0, 95, 3, 2, 0), 0.1, 0.1).nonempty);
        let bi = bias_interval(&probs(0, 85, 0, 15, 0), 0.1, 0.1);
        assert!(!bi.nonempty);
    }

    #[test]
    fn fixed_choice_examples() {
        let p = probs(0, 85, 0, 5, 10);
        assert!(fixed_choice_member(&p, 0.1, 0.1, Link::One));
        assert!(!fixed_choice_member(&p, 0.1, 0.1, Link::Two));
        let bi = bias_interval(&p, 0.1, 0.1);
        assert!(bi.contains(1.0));
    }

    /// All compositions of `total` into five parts.
    fn simplex(total: u64) -> Vec<[u64; 5]> {
        let mut out = Vec::new();
        for a in 0..=total {
            for b in 0..=total - a {
                for c1 in 0..=total - a - b {
                    for c2 in 0..=total - a - b - c1 {
                        out.push([a, b, c1, c2, total - a - b - c1 - c2]);
                    }
                }
            }
        }
        out
    }

    #[test]
    fn bias_interval_equivalence_on_simplex_grid() {
        let eps: Vec<f64> = (1..=10).map(|k| k as f64 / 10.0).collect();
        let mut checked = 0;
        for [a, b, c1, c2, d] in simplex(20) {
            let p = probs(a, b, c1, c2, d);
            for &e1 in &eps {
                for &e2 in &eps {
                    let bi = bias_interval(&p, e1, e2);
                    let member = individual_inst_member(&p, e1, e2).member;
                    assert_eq!(bi.nonempty, member, "{:?} {e1} {e2}", p.counts);
                    checked += 1;
                }
            }
        }
        assert_eq!(checked, 10626 * 100);
    }

    #[test]
    fn axis_reduces_to_link1_condition() {
        let stats = ChannelStatistics::iid(2, Noise::uniform(0.5));
        let source = SampleSource::gaussian(stats, 31, 2000).unwrap();
        let eval = InstantaneousEvaluator::new(&source, Noise::uniform(0.5)).unwrap();
        let spec = OutageSpec::individual(0.1, 0.2).unwrap();
        for i in 0..40 {
            let point = RatePoint::new(0.1 * i as f64, 0.0).unwrap();
            let p = eval.case_probabilities(point);
            let link1_only = within(p.su_exceed[0], &rat(0.1), p.n_samples());
            assert_eq!(eval.member(Scenario::IndividualInst, &spec, point).unwrap(), link1_only);
        }
    }

    #[test]
    fn evaluator_matches_direct_classification() {
        let stats = ChannelStatistics::iid(2, Noise::uniform(0.5));
        let source = SampleSource::gaussian(stats, 32, 3000).unwrap();
        let noise = Noise::uniform(0.5);
        let eval = InstantaneousEvaluator::new(&source, noise).unwrap();
        for (r1, r2) in [(0.5, 0.5), (1.0, 1.5), (2.0, 0.3), (0.0, 1.0), (1.5, 0.0), (3.0, 3.0)] {
            let point = RatePoint::new(r1, r2).unwrap();
            let fast = eval.case_probabilities(point).counts;
            let direct = estimate_case_probs(&source, point, noise).counts;
            let diff: u64 = CaseLabel::ALL.iter().map(|&l| fast.get(l).abs_diff(direct.get(l))).sum();
            assert!(diff <= 2, "{fast:?} vs {direct:?}");
        }
    }

    #[test]
    fn point_mass_member_for_every_epsilon() {
        let h = ChannelRealization::from_real(&[1.0, 0.0], &[0.0, 1.0], &[1.0, 0.0], &[0.0, 1.0]).unwrap();
        let source = SampleSource::explicit(vec![h]).unwrap();
        let eval = InstantaneousEvaluator::new(&source, Noise::uniform(1.0)).unwrap();
        let p = eval.case_probabilities(RatePoint::new(1.0, 1.0).unwrap());
        for eps in [1e-6, 0.01, 0.1, 0.5, 0.999] {
            assert!(common_inst_member(&p, eps).member);
        }
    }

    #[test]
    fn su_quantile_is_intercept() {
        let stats = ChannelStatistics::iid(2, Noise::uniform(0.5));
        let source = SampleSource::gaussian(stats, 33, 1000).unwrap();
        let eval = InstantaneousEvaluator::new(&source, Noise::uniform(0.5)).unwrap();
        let q = eval.su_quantile(Link::One, 0.1);
        let below = |r: f64| eval.su_rates(Link::One).iter().filter(|&&s| s < r).count();
        assert!(below(q) <= 100);
        assert!(below(q + 1e-12) > 100);
    }

    #[test]
    fn trace_line() {
        let grid = GridSpec { points: 21, r1_cap: 1.2, r2_cap: 1.2 };
        let out = trace_boundary(|p| p.r1 + p.r2 <= 1.0, &grid).unwrap();
        let tol = grid.r2_resolution() / 10.0;
        assert!(out.warnings.is_empty(), "{:?}", out.warnings);
        for p in &out.points {
            assert!(p.r1 + p.r2 <= 1.0 + 1e-12);
            assert!(p.r1 + p.r2 >= 1.0 - tol - 1e-9, "{p:?}");
        }
        assert!((out.intercepts[0] - 1.0).abs() < 1e-8);
        assert!((out.intercepts[1] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn trace_rectangle() {
        let (a, b) = (0.73, 0.41);
        let grid = GridSpec { points: 31, r1_cap: 1.0, r2_cap: 1.0 };
        let out = trace_boundary(|p| p.r1 <= a && p.r2 <= b, &grid).unwrap();
        let tol = grid.r2_resolution() / 10.0;
        assert!((out.intercepts[0] - a).abs() < 1e-8);
        assert!((out.intercepts[1] - b).abs() < 1e-8);
        let corner = out
            .points
            .iter()
            .filter(|p| p.r2 > b - tol)
            .max_by(|x, y| x.r1.total_cmp(&y.r1))
            .expect("top edge");
        assert!(a - corner.r1 <= 1.0 / 30.0 + 1e-12);
        assert!(out.points.iter().all(|p| p.r1 <= a && p.r2 <= b));
    }

    #[test]
    fn trace_flags_non_monotone_oracle() {
        let grid = GridSpec { points: 11, r1_cap: 1.0, r2_cap: 1.0 };
        let out = trace_boundary(|p| p.r1 < 0.35 || (p.r1 > 0.55 && p.r2 < 0.5), &grid).unwrap();
        assert!(out.warnings.iter().any(|w| w.contains("non-monotone")));
        let out = trace_boundary(|_| false, &grid).unwrap();
        assert!(out.points.is_empty() && !out.warnings.is_empty());
    }

    #[test]
    fn non_dominated_filter() {
        let pts: Vec<RatePoint> = [(0.0, 1.0), (0.5, 1.0), (0.5, 0.2), (1.0, 0.0), (0.2, 0.1), (0.5, 1.0)]
            .iter()
            .map(|&(a, b)| RatePoint::new(a, b).unwrap())
            .collect();
        let kept = non_dominated(&pts);
        assert_eq!(kept, vec![RatePoint::new(0.5, 1.0).unwrap(), RatePoint::new(1.0, 0.0).unwrap()]);
    }

    #[test]
    fn csv_layout() {
        let boundary = RegionBoundary {
            metadata: BoundaryMetadata {
                scenario: Scenario::CommonInst,
                spec: OutageSpec::common(0.1).unwrap(),
                seed: Some(1),
                n_samples: Some(4),
                beamformer_pairs: None,
                grid: None,
            },
            points: vec![BoundaryPoint {
                r1: 0.5,
                r2: 1.0,
                counts: Some(CaseCounts::new(0, 4, 0, 0, 0)),
                margins: [Some(0.1), None, None],
            }],
            warnings: vec![],
        };
        let csv = boundary.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(
            lines[1],
            "5.000000000e-1,1.000000000e0,0.000000000e0,1.000000000e0,0.000000000e0,0.000000000e0,0.000000000e0,1.000000000e-1,,"
        );
    }

    #[test]
    fn scenario_tags_round_trip() {
        for s in Scenario::ALL {
            assert_eq!(s.tag().parse::<Scenario>().unwrap(), s);
            assert_eq!(serde_json::to_string(&s).unwrap(), format!("\"{}\"", s.tag()));
        }
        assert!("common".parse::<Scenario>().is_err());
        assert!(OutageSpec::common(1.0).is_err());
        assert!(OutageSpec::individual(0.1, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn membership_implications(
            a in 0u64..400, b in 0u64..400, c1 in 0u64..400, c2 in 0u64..400, d in 0u64..400,
            e1 in 0.001f64..0.999, e2 in 0.001f64..0.999,
        ) {
            prop_assume!(a + b + c1 + c2 + d > 0);
            let p = probs(a, b, c1, c2, d);
            let member = individual_inst_member(&p, e1, e2).member;
            prop_assert_eq!(bias_interval(&p, e1, e2).nonempty, member);
            if fixed_choice_member(&p, e1, e2, Link::One) || fixed_choice_member(&p, e1, e2, Link::Two) {
                prop_assert!(member);
            }
            let eps = e1;
            if common_inst_member(&p, eps).member {
                prop_assert!(fixed_choice_member(&p, eps, eps, Link::One));
                prop_assert!(fixed_choice_member(&p, eps, eps, Link::Two));
                prop_assert!(individual_inst_member(&p, eps, eps).member);
            }
        }

        #[test]
        fn bias_interval_endpoints_satisfy_constraints(
            a in 0u64..50, b in 0u64..200, c1 in 0u64..50, c2 in 0u64..50, d in 1u64..100,
            e1 in 0.01f64..0.99, e2 in 0.01f64..0.99,
        ) {
            let p = probs(a, b, c1, c2, d);
            let bi = bias_interval(&p, e1, e2);
            if bi.nonempty {
                for q in [bi.lo, bi.hi, 0.5 * (bi.lo + bi.hi)] {
                    let s1 = p.p_b() + p.p_c1() + q * p.p_d();
                    let s2 = p.p_b() + p.p_c2() + (1.0 - q) * p.p_d();
                    prop_assert!(s1 >= 1.0 - e1 - 1e-12);
                    prop_assert!(s2 >= 1.0 - e2 - 1e-12);
                }
            }
        }
    }
}
