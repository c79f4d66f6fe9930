//! Outage regions under statistical CSI.
//!
//! With Gaussian fading `h ~ CN(0, Q)` and a fixed beamformer `w`, the gain
//! `|h^H w|^2` is exponential with mean `w^H Q w`. For a link with mean
//! signal `s̄`, mean interference `t̄` and noise `σ²`, the success event
//! `S ≥ γ (T + σ²)` then has probability
//!
//! ```text
//! exp(-γ σ² / s̄) · s̄ / (s̄ + γ t̄)
//! ```
//!
//! (condition on `T` and integrate the exponential tail). Links use
//! independent channels, so the common success probability is the product
//! of the per-link ones.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{complex_normal, derive_seed, indexed_rng, ChannelStatistics, SampleSource};
use crate::optimize::bisect_last_true;
use crate::rate::{rate_cov, sinr_target, Beamformer, RatePoint, TransmitCovariance};
use crate::regions::{non_dominated_by, BoundaryMetadata, BoundaryPoint, OutageSpec, RegionBoundary, Scenario};
use crate::{CMatrix, CVector, Error, Link, Result};

/// Absolute tolerance on rates found by inverting a success probability.
pub const INVERSE_TOL: f64 = 1e-10;

const BEAMFORMER_DOMAIN: u64 = 0x5354_4154;

/// Exponential fading model of one link under fixed beamformers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentialLinkModel {
    pub s_bar: f64,
    pub t_bar: f64,
    pub sigma_sq: f64,
}

impl ExponentialLinkModel {
    pub fn new(s_bar: f64, t_bar: f64, sigma_sq: f64) -> Result<Self> {
        for (name, x) in [("s_bar", s_bar), ("t_bar", t_bar), ("sigma_sq", sigma_sq)] {
            if !(x.is_finite() && x >= 0.0) {
                return Err(Error::InvalidArgument(format!("{name} = {x} must be finite and nonnegative")));
            }
        }
        Ok(ExponentialLinkModel { s_bar, t_bar, sigma_sq })
    }

    /// `Pr{R ≥ r}`.
    pub fn success(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 1.0;
        }
        if self.s_bar <= 0.0 {
            return 0.0;
        }
        let g = sinr_target(r);
        let tail = (-g * self.sigma_sq / self.s_bar).exp();
        if self.t_bar == 0.0 {
            tail
        } else {
            tail * self.s_bar / (self.s_bar + g * self.t_bar)
        }
    }

    /// Largest rate whose success probability is at least `target`.
    pub fn max_rate(&self, target: f64) -> f64 {
        if target <= 0.0 {
            return f64::INFINITY;
        }
        if self.s_bar <= 0.0 || target > 1.0 {
            return 0.0;
        }
        let mut hi = 1.0;
        while self.success(hi) >= target {
            hi *= 2.0;
            if hi > 1e6 {
                return hi;
            }
        }
        bisect_last_true(|r| self.success(r) >= target, 0.0, hi, INVERSE_TOL)
    }
}

/// `w^H Q w`.
pub fn quad_form(q: &CMatrix, w: &CVector) -> f64 {
    w.dotc(&(q * w)).re.max(0.0)
}

/// Exponential model of `link` when TX1 uses `w1` and TX2 uses `w2`.
pub fn effective_means(stats: &ChannelStatistics, w1: &Beamformer, w2: &Beamformer, link: Link) -> Result<ExponentialLinkModel> {
    let n = stats.n();
    if w1.len() != n || w2.len() != n {
        return Err(Error::Dimension(format!("beamformers must have length {n}")));
    }
    let (s_bar, t_bar) = match link {
        Link::One => (quad_form(&stats.q11, w1.vector()), quad_form(&stats.q21, w2.vector())),
        Link::Two => (quad_form(&stats.q22, w2.vector()), quad_form(&stats.q12, w1.vector())),
    };
    ExponentialLinkModel::new(s_bar, t_bar, stats.noise.get(link))
}

pub fn link_success_closed_form(model: &ExponentialLinkModel, r: f64) -> Result<f64> {
    if !(r >= 0.0) {
        return Err(Error::InvalidArgument(format!("rate {r} must be nonnegative")));
    }
    Ok(model.success(r))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatVerdict {
    pub member: bool,
    /// Per-link success probabilities.
    pub success: [f64; 2],
}

/// Membership decision given the per-link success probabilities.
pub fn stat_decide(success: [f64; 2], spec: &OutageSpec) -> bool {
    match *spec {
        OutageSpec::Common { epsilon } => success[0] * success[1] >= 1.0 - epsilon,
        OutageSpec::Individual { epsilon1, epsilon2 } => success[0] >= 1.0 - epsilon1 && success[1] >= 1.0 - epsilon2,
    }
}

fn stat_margins(success: [f64; 2], spec: &OutageSpec) -> [Option<f64>; 3] {
    match *spec {
        OutageSpec::Common { epsilon } => [Some(success[0] * success[1] - (1.0 - epsilon)), None, None],
        OutageSpec::Individual { epsilon1, epsilon2 } => {
            [Some(success[0] - (1.0 - epsilon1)), Some(success[1] - (1.0 - epsilon2)), None]
        }
    }
}

/// Membership of `point` in the statistical-CSI region of one beamformer
/// pair, from the closed form.
pub fn stat_member(
    stats: &ChannelStatistics,
    w1: &Beamformer,
    w2: &Beamformer,
    point: RatePoint,
    spec: &OutageSpec,
) -> Result<StatVerdict> {
    let success = [
        effective_means(stats, w1, w2, Link::One)?.success(point.r1),
        effective_means(stats, w1, w2, Link::Two)?.success(point.r2),
    ];
    Ok(StatVerdict { member: stat_decide(success, spec), success })
}

/// Monte-Carlo estimate of the statistical-CSI success probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatMcEstimate {
    pub member: bool,
    pub n_samples: u64,
    /// Per-link success frequencies.
    pub success: [f64; 2],
    /// Frequency of both links succeeding together.
    pub joint: f64,
}

/// Statistical-CSI membership for general transmit covariances, estimated
/// over `source`. Common mode uses the joint success frequency.
pub fn stat_member_mc(
    psi1: &TransmitCovariance,
    psi2: &TransmitCovariance,
    point: RatePoint,
    spec: &OutageSpec,
    source: &SampleSource,
) -> Result<StatMcEstimate> {
    let noise = source
        .statistics()
        .map(|s| s.noise)
        .ok_or_else(|| Error::InvalidArgument("Monte-Carlo membership needs a Gaussian source".into()))?;
    let counts = (0..source.len())
        .into_par_iter()
        .map(|k| {
            let h = source.get(k);
            let ok1 = rate_cov(&h, psi1, psi2, Link::One, noise.link1)? >= point.r1;
            let ok2 = rate_cov(&h, psi1, psi2, Link::Two, noise.link2)? >= point.r2;
            Ok::<_, Error>([u64::from(ok1), u64::from(ok2), u64::from(ok1 && ok2)])
        })
        .try_reduce(|| [0; 3], |a, b| Ok([a[0] + b[0], a[1] + b[1], a[2] + b[2]]))?;
    let n = source.len() as f64;
    let success = [counts[0] as f64 / n, counts[1] as f64 / n];
    let joint = counts[2] as f64 / n;
    let member = match *spec {
        OutageSpec::Common { epsilon } => joint >= 1.0 - epsilon,
        OutageSpec::Individual { .. } => stat_decide(success, spec),
    };
    Ok(StatMcEstimate { member, n_samples: source.len() as u64, success, joint })
}

/// Unit-norm vector uniform on the complex sphere.
pub fn random_unit_beamformer<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Beamformer {
    loop {
        let v = CVector::from_fn(n, |_, _| complex_normal(rng));
        let norm = v.norm();
        if norm > 1e-12 {
            return Beamformer::new(v.unscale(norm)).expect("unit norm");
        }
    }
}

/// Beamformer pair `m` of the search stream rooted at `seed`.
pub fn beamformer_pair(n: usize, seed: u64, m: u64) -> (Beamformer, Beamformer) {
    let mut rng = indexed_rng(derive_seed(seed, BEAMFORMER_DOMAIN), m);
    let w1 = random_unit_beamformer(n, &mut rng);
    let w2 = random_unit_beamformer(n, &mut rng);
    (w1, w2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatSearchConfig {
    pub beamformer_pairs: usize,
    /// Points per pair on the common-outage curve.
    pub curve_points: usize,
    pub seed: u64,
}

/// Models of both links for one beamformer pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairModel {
    pub link1: ExponentialLinkModel,
    pub link2: ExponentialLinkModel,
}

impl PairModel {
    pub fn success(&self, point: RatePoint) -> [f64; 2] {
        [self.link1.success(point.r1), self.link2.success(point.r2)]
    }

    /// Largest `r2` meeting `spec` together with `r1`.
    pub fn max_r2(&self, r1: f64, spec: &OutageSpec) -> Option<f64> {
        let p1 = self.link1.success(r1);
        let target = match *spec {
            OutageSpec::Common { epsilon } => (1.0 - epsilon) / p1,
            OutageSpec::Individual { epsilon1, epsilon2 } => {
                if p1 < 1.0 - epsilon1 {
                    return None;
                }
                1.0 - epsilon2
            }
        };
        (target <= 1.0).then(|| self.link2.max_rate(target))
    }

    /// Maximal rate points of this pair: the corner in individual mode, a
    /// curve of `curve_points` points in common mode.
    pub fn maximal_points(&self, spec: &OutageSpec, curve_points: usize) -> Vec<RatePoint> {
        match *spec {
            OutageSpec::Individual { epsilon1, epsilon2 } => vec![RatePoint {
                r1: self.link1.max_rate(1.0 - epsilon1),
                r2: self.link2.max_rate(1.0 - epsilon2),
            }],
            OutageSpec::Common { epsilon } => {
                let r1_max = self.link1.max_rate(1.0 - epsilon);
                let k = curve_points.max(2);
                (0..k)
                    .filter_map(|j| {
                        let r1 = r1_max * j as f64 / (k - 1) as f64;
                        self.max_r2(r1, spec).map(|r2| RatePoint { r1, r2 })
                    })
                    .collect()
            }
        }
    }
}

/// Collected beamformer pairs of a random search and the resulting frontier.
#[derive(Debug, Clone)]
pub struct StatSearch {
    pub spec: OutageSpec,
    pub pairs: Vec<PairModel>,
    pub boundary: RegionBoundary,
}

impl StatSearch {
    /// Whether any collected pair meets `spec` at `point`.
    pub fn member(&self, point: RatePoint) -> bool {
        self.pairs.iter().any(|p| stat_decide(p.success(point), &self.spec))
    }

    /// Best `r2` over the collected pairs at `r1`.
    pub fn max_r2(&self, r1: f64) -> Option<f64> {
        self.pairs.iter().filter_map(|p| p.max_r2(r1, &self.spec)).reduce(f64::max)
    }
}

/// Draws `beamformer_pairs` random full-power beamformer pairs, collects the
/// maximal rate points of each, and keeps the non-dominated ones.
pub fn search_stat_boundary(stats: &ChannelStatistics, spec: &OutageSpec, config: &StatSearchConfig) -> Result<StatSearch> {
    spec.validate()?;
    if config.beamformer_pairs == 0 {
        return Err(Error::InvalidArgument("beamformer search needs at least one pair".into()));
    }
    let n = stats.n();
    let pairs = (0..config.beamformer_pairs as u64)
        .into_par_iter()
        .map(|m| {
            let (w1, w2) = beamformer_pair(n, config.seed, m);
            Ok(PairModel {
                link1: effective_means(stats, &w1, &w2, Link::One)?,
                link2: effective_means(stats, &w1, &w2, Link::Two)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut candidates: Vec<(RatePoint, [f64; 2])> = Vec::new();
    for pair in &pairs {
        for p in pair.maximal_points(spec, config.curve_points) {
            candidates.push((p, pair.success(p)));
        }
    }
    let kept = non_dominated_by(candidates, |(p, _)| (p.r1, p.r2));
    let scenario = if matches!(spec, OutageSpec::Common { .. }) { Scenario::CommonStat } else { Scenario::IndividualStat };
    let points = kept
        .into_iter()
        .map(|(p, success)| BoundaryPoint { r1: p.r1, r2: p.r2, counts: None, margins: stat_margins(success, spec) })
        .collect();
    Ok(StatSearch {
        spec: *spec,
        pairs,
        boundary: RegionBoundary {
            metadata: BoundaryMetadata {
                scenario,
                spec: *spec,
                seed: Some(config.seed),
                n_samples: None,
                beamformer_pairs: Some(config.beamformer_pairs),
                grid: None,
            },
            points,
            warnings: Vec::new(),
        },
    })
}
