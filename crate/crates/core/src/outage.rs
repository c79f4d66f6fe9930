//! Case classification of channel realizations, Monte-Carlo case
//! probabilities, and simulation of the randomized on/off policy.
//!
//! For a rate point every realization falls in exactly one case:
//!
//! | case | condition                                              | policy                 |
//! |------|--------------------------------------------------------|------------------------|
//! | A    | both rates above their single-user rates               | both transmitters off  |
//! | B    | the pair is jointly achievable                         | oracle beamformers     |
//! | C1   | only `r2` above its single-user rate                   | TX1 matched filter     |
//! | C2   | only `r1` above its single-user rate                   | TX2 matched filter     |
//! | D    | each rate achievable alone but not jointly             | coin picks C1 or C2    |

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{indexed_rng, ChannelRealization, SampleSource};
use crate::rate::{mrt, Beamformer, LinkPairProblem, RatePoint};
use crate::{Error, Link, Noise, Result};
use rand::Rng;

/// Slack on achieved rates when counting a link as successful (bits).
pub const RATE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CaseLabel {
    A,
    B,
    C1,
    C2,
    D,
}

impl CaseLabel {
    pub const ALL: [CaseLabel; 5] = [CaseLabel::A, CaseLabel::B, CaseLabel::C1, CaseLabel::C2, CaseLabel::D];
}

/// Integer tallies of the five cases.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseCounts {
    pub a: u64,
    pub b: u64,
    pub c1: u64,
    pub c2: u64,
    pub d: u64,
}

impl CaseCounts {
    pub fn new(a: u64, b: u64, c1: u64, c2: u64, d: u64) -> Self {
        CaseCounts { a, b, c1, c2, d }
    }

    pub fn total(&self) -> u64 {
        self.a + self.b + self.c1 + self.c2 + self.d
    }

    pub fn get(&self, label: CaseLabel) -> u64 {
        match label {
            CaseLabel::A => self.a,
            CaseLabel::B => self.b,
            CaseLabel::C1 => self.c1,
            CaseLabel::C2 => self.c2,
            CaseLabel::D => self.d,
        }
    }

    pub fn add(&mut self, label: CaseLabel) {
        match label {
            CaseLabel::A => self.a += 1,
            CaseLabel::B => self.b += 1,
            CaseLabel::C1 => self.c1 += 1,
            CaseLabel::C2 => self.c2 += 1,
            CaseLabel::D => self.d += 1,
        }
    }

    fn merge(mut self, other: CaseCounts) -> CaseCounts {
        self.a += other.a;
        self.b += other.b;
        self.c1 += other.c1;
        self.c2 += other.c2;
        self.d += other.d;
        self
    }
}

/// Monte-Carlo estimates of the case probabilities.
///
/// Everything is derived from integer counts, so the five estimates sum to
/// one and membership tests can compare exact count sums.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CaseProbabilities {
    pub counts: CaseCounts,
    /// Tallies of `r_i > R_i^SU` for each link.
    pub su_exceed: [u64; 2],
}

impl CaseProbabilities {
    /// Builds estimates from case counts alone; the single-user exceedance
    /// tallies follow from the case definitions.
    pub fn from_counts(counts: CaseCounts) -> Result<Self> {
        if counts.total() == 0 {
            return Err(Error::InvalidArgument("case counts are all zero".into()));
        }
        Ok(CaseProbabilities {
            su_exceed: [counts.a + counts.c2, counts.a + counts.c1],
            counts,
        })
    }

    pub fn n_samples(&self) -> u64 {
        self.counts.total()
    }

    pub fn p(&self, label: CaseLabel) -> f64 {
        self.counts.get(label) as f64 / self.n_samples() as f64
    }

    pub fn p_a(&self) -> f64 {
        self.p(CaseLabel::A)
    }

    pub fn p_b(&self) -> f64 {
        self.p(CaseLabel::B)
    }

    pub fn p_c1(&self) -> f64 {
        self.p(CaseLabel::C1)
    }

    pub fn p_c2(&self) -> f64 {
        self.p(CaseLabel::C2)
    }

    pub fn p_d(&self) -> f64 {
        self.p(CaseLabel::D)
    }

    /// `sqrt(p (1 - p) / N)`.
    pub fn standard_error(&self, label: CaseLabel) -> f64 {
        binomial_se(self.p(label), self.n_samples())
    }

    /// Estimate of `Pr{r_i > R_i^SU(H)}`.
    pub fn su_exceed_prob(&self, link: Link) -> f64 {
        self.su_exceed[link.index()] as f64 / self.n_samples() as f64
    }

    pub fn report(&self) -> CaseReport {
        let se = |l| self.standard_error(l);
        CaseReport {
            n_samples: self.n_samples(),
            counts: self.counts,
            p_a: self.p_a(),
            p_b: self.p_b(),
            p_c1: self.p_c1(),
            p_c2: self.p_c2(),
            p_d: self.p_d(),
            se_a: se(CaseLabel::A),
            se_b: se(CaseLabel::B),
            se_c1: se(CaseLabel::C1),
            se_c2: se(CaseLabel::C2),
            se_d: se(CaseLabel::D),
            su_exceed: [self.su_exceed_prob(Link::One), self.su_exceed_prob(Link::Two)],
        }
    }
}

/// Serializable view of [`CaseProbabilities`].
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CaseReport {
    pub n_samples: u64,
    pub counts: CaseCounts,
    pub p_a: f64,
    pub p_b: f64,
    pub p_c1: f64,
    pub p_c2: f64,
    pub p_d: f64,
    pub se_a: f64,
    pub se_b: f64,
    pub se_c1: f64,
    pub se_c2: f64,
    pub se_d: f64,
    pub su_exceed: [f64; 2],
}

pub fn binomial_se(p: f64, n: u64) -> f64 {
    (p * (1.0 - p) / n as f64).max(0.0).sqrt()
}

/// Case of one realization given its precomputed problem.
pub fn classify_problem(problem: &LinkPairProblem, point: RatePoint) -> CaseLabel {
    let over1 = point.r1 > problem.su[0];
    let over2 = point.r2 > problem.su[1];
    if over1 && over2 {
        CaseLabel::A
    } else if problem.check(point).achievable {
        CaseLabel::B
    } else if over2 {
        CaseLabel::C1
    } else if over1 {
        CaseLabel::C2
    } else {
        CaseLabel::D
    }
}

/// Case of realization `h` at `point`, following the serial procedure:
/// A, then B, then C1/C2, otherwise D.
pub fn classify(h: &ChannelRealization, point: RatePoint, noise: Noise) -> CaseLabel {
    classify_problem(&LinkPairProblem::new(h, noise), point)
}

#[derive(Debug, Clone, Copy, Default)]
struct Tally {
    counts: CaseCounts,
    su_exceed: [u64; 2],
}

impl Tally {
    fn merge(self, other: Tally) -> Tally {
        Tally {
            counts: self.counts.merge(other.counts),
            su_exceed: [self.su_exceed[0] + other.su_exceed[0], self.su_exceed[1] + other.su_exceed[1]],
        }
    }
}

/// Estimates the five case probabilities over the sample stream.
pub fn estimate_case_probs(source: &SampleSource, point: RatePoint, noise: Noise) -> CaseProbabilities {
    let tally = (0..source.len())
        .into_par_iter()
        .map(|k| {
            let problem = LinkPairProblem::new(&source.get(k), noise);
            let mut t = Tally::default();
            t.counts.add(classify_problem(&problem, point));
            t.su_exceed[0] += u64::from(point.r1 > problem.su[0]);
            t.su_exceed[1] += u64::from(point.r2 > problem.su[1]);
            t
        })
        .reduce(Tally::default, Tally::merge);
    CaseProbabilities { counts: tally.counts, su_exceed: tally.su_exceed }
}

/// Result of simulating the case policy with a constant coin bias.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyOutcome {
    pub n_samples: u64,
    pub counts: CaseCounts,
    /// Case-D realizations resolved in favor of link 1 and of link 2.
    pub d1: u64,
    pub d2: u64,
    /// Realizations in which each link reached its rate.
    pub successes: [u64; 2],
}

impl PolicyOutcome {
    pub fn success_frequency(&self, link: Link) -> f64 {
        self.successes[link.index()] as f64 / self.n_samples as f64
    }

    pub fn outage_frequency(&self, link: Link) -> f64 {
        1.0 - self.success_frequency(link)
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct PolicyTally {
    counts: CaseCounts,
    d1: u64,
    d2: u64,
    successes: [u64; 2],
}

impl PolicyTally {
    fn merge(self, o: PolicyTally) -> PolicyTally {
        PolicyTally {
            counts: self.counts.merge(o.counts),
            d1: self.d1 + o.d1,
            d2: self.d2 + o.d2,
            successes: [self.successes[0] + o.successes[0], self.successes[1] + o.successes[1]],
        }
    }
}

/// Runs the case policy over the stream. In case D a coin with
/// `Pr{link 1} = bias` decides which link transmits; the coin for sample `k`
/// comes from stream `k` of `coin_seed`, independent of the channel draws.
pub fn simulate_policy(
    source: &SampleSource,
    point: RatePoint,
    bias: f64,
    noise: Noise,
    coin_seed: u64,
) -> Result<PolicyOutcome> {
    if !(0.0..=1.0).contains(&bias) {
        return Err(Error::InvalidArgument(format!("coin bias {bias} is outside [0, 1]")));
    }
    let tally = (0..source.len())
        .into_par_iter()
        .map(|k| {
            let h = source.get(k);
            let problem = LinkPairProblem::new(&h, noise);
            let n = h.n();
            let label = classify_problem(&problem, point);
            let mut t = PolicyTally::default();
            t.counts.add(label);
            let serve_only = |link: Link| match link {
                Link::One => (mrt(&h.h11), Beamformer::zero(n)),
                Link::Two => (Beamformer::zero(n), mrt(&h.h22)),
            };
            let (w1, w2) = match label {
                CaseLabel::A => (Beamformer::zero(n), Beamformer::zero(n)),
                CaseLabel::B => problem.witness(&problem.check(point)),
                CaseLabel::C1 => serve_only(Link::One),
                CaseLabel::C2 => serve_only(Link::Two),
                CaseLabel::D => {
                    let u: f64 = indexed_rng(coin_seed, k as u64).random();
                    if u < bias {
                        t.d1 += 1;
                        serve_only(Link::One)
                    } else {
                        t.d2 += 1;
                        serve_only(Link::Two)
                    }
                }
            };
            for link in [Link::One, Link::Two] {
                let achieved = crate::rate::rate_bf(&h, &w1, &w2, link, noise.get(link))
                    .expect("beamformers match the channel dimension");
                if achieved >= point.get(link) - RATE_SLACK {
                    t.successes[link.index()] += 1;
                }
            }
            t
        })
        .reduce(PolicyTally::default, PolicyTally::merge);
    Ok(PolicyOutcome {
        n_samples: source.len() as u64,
        counts: tally.counts,
        d1: tally.d1,
        d2: tally.d2,
        successes: tally.successes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::ChannelStatistics;
    use crate::rate::{is_achievable, su_rate};

    fn aligned() -> ChannelRealization {
        ChannelRealization::from_real(&[1.0, 0.0], &[1.0, 0.0], &[1.0, 0.0], &[1.0, 0.0]).unwrap()
    }

    fn orthogonal_cross() -> ChannelRealization {
        ChannelRealization::from_real(&[1.0, 0.0], &[0.0, 1.0], &[1.0, 0.0], &[0.0, 1.0]).unwrap()
    }

    fn pt(r1: f64, r2: f64) -> RatePoint {
        RatePoint::new(r1, r2).unwrap()
    }

    fn gaussian(seed: u64, count: usize) -> SampleSource {
        SampleSource::gaussian(ChannelStatistics::iid(2, Noise::uniform(0.5)), seed, count).unwrap()
    }

    #[test]
    fn classify_examples() {
        let noise = Noise::uniform(1.0);
        assert_eq!(classify(&aligned(), pt(1.0, 1.0), noise), CaseLabel::D);
        assert_eq!(classify(&aligned(), pt(2.0, 2.0), noise), CaseLabel::A);
        assert_eq!(classify(&orthogonal_cross(), pt(1.0, 1.0), noise), CaseLabel::B);
    }

    #[test]
    fn classification_matches_defining_predicates() {
        let noise = Noise::uniform(0.5);
        let source = gaussian(21, 400);
        for k in 0..source.len() {
            let h = source.get(k);
            let su1 = su_rate(&h, Link::One, 0.5);
            let su2 = su_rate(&h, Link::Two, 0.5);
            for (u1, u2) in [(0.3, 0.3), (0.9, 0.5), (1.1, 0.4), (0.5, 1.2), (1.3, 1.3), (0.95, 0.95)] {
                let point = pt(u1 * 2.0, u2 * 2.0);
                let in_region = is_achievable(&h, point, noise).achievable;
                let expected = if point.r1 > su1 && point.r2 > su2 {
                    CaseLabel::A
                } else if in_region {
                    CaseLabel::B
                } else if point.r1 <= su1 && point.r2 > su2 {
                    CaseLabel::C1
                } else if point.r1 > su1 && point.r2 <= su2 {
                    CaseLabel::C2
                } else {
                    CaseLabel::D
                };
                assert_eq!(classify(&h, point, noise), expected);
            }
        }
    }

    #[test]
    fn point_mass_source() {
        let source = SampleSource::explicit(vec![aligned()]).unwrap();
        let probs = estimate_case_probs(&source, pt(1.0, 1.0), Noise::uniform(1.0));
        assert_eq!(probs.counts, CaseCounts::new(0, 0, 0, 0, 1));
        assert_eq!(probs.p_d(), 1.0);
    }

    #[test]
    fn probabilities_partition_and_marginals() {
        let source = gaussian(22, 2000);
        for point in [pt(0.5, 0.5), pt(1.5, 0.2), pt(2.5, 2.5), pt(0.0, 0.0)] {
            let probs = estimate_case_probs(&source, point, Noise::uniform(0.5));
            assert_eq!(probs.n_samples(), 2000);
            let sum: f64 = CaseLabel::ALL.iter().map(|&l| probs.counts.get(l)).sum::<u64>() as f64 / 2000.0;
            assert_eq!(sum, 1.0);
            assert_eq!(probs.su_exceed[0], probs.counts.a + probs.counts.c2);
            assert_eq!(probs.su_exceed[1], probs.counts.a + probs.counts.c1);
            for l in CaseLabel::ALL {
                let p = probs.p(l);
                assert_eq!(probs.standard_error(l), (p * (1.0 - p) / 2000.0).sqrt());
            }
        }
    }

    #[test]
    fn p_a_factorizes_statistically() {
        let source = gaussian(23, 100_000);
        let probs = estimate_case_probs(&source, pt(1.6, 1.4), Noise::uniform(0.5));
        let (q1, q2) = (probs.su_exceed_prob(Link::One), probs.su_exceed_prob(Link::Two));
        let n = probs.n_samples();
        let se = (binomial_se(probs.p_a(), n).powi(2) + binomial_se(q1 * q2, n).powi(2)).sqrt();
        assert!((probs.p_a() - q1 * q2).abs() <= 4.0 * se, "{} vs {}", probs.p_a(), q1 * q2);
        // case D is the complement of B within both single-user regions
        let pd_product = (1.0 - q1) * (1.0 - q2) - probs.p_b();
        let se_d = (binomial_se(probs.p_d(), n).powi(2) + binomial_se(pd_product.max(0.0), n).powi(2)).sqrt();
        assert!((probs.p_d() - pd_product).abs() <= 4.0 * se_d);
    }

    #[test]
    fn coin_frequency_concentrates() {
        let n = 100_000;
        let source = SampleSource::explicit(vec![aligned(); n]).unwrap();
        let out = simulate_policy(&source, pt(1.0, 1.0), 0.7, Noise::uniform(1.0), 5).unwrap();
        let freq = out.success_frequency(Link::One);
        assert!((freq - 0.7).abs() <= 4.0 * (0.7f64 * 0.3 / n as f64).sqrt(), "{freq}");
        assert_eq!(out.successes[0] + out.successes[1], n as u64);
    }

    #[test]
    fn deterministic_bias_extremes() {
        let source = gaussian(24, 3000);
        let point = pt(1.2, 1.0);
        let noise = Noise::uniform(0.5);
        let one = simulate_policy(&source, point, 1.0, noise, 9).unwrap();
        let c = one.counts;
        assert_eq!(one.d2, 0);
        assert_eq!(one.successes[0], c.b + c.c1 + c.d);
        let two = simulate_policy(&source, point, 0.0, noise, 9).unwrap();
        assert_eq!(two.d1, 0);
        assert_eq!(two.successes[1], c.b + c.c2 + c.d);
    }

    #[test]
    fn policy_success_matches_case_counts() {
        let source = gaussian(25, 3000);
        let noise = Noise::uniform(0.5);
        for (point, bias) in [(pt(1.0, 1.0), 0.3), (pt(1.8, 0.6), 0.5), (pt(0.4, 2.0), 0.9)] {
            let out = simulate_policy(&source, point, bias, noise, 3).unwrap();
            let probs = estimate_case_probs(&source, point, noise);
            assert_eq!(out.counts, probs.counts);
            assert_eq!(out.d1 + out.d2, out.counts.d);
            assert_eq!(out.successes[0], out.counts.b + out.counts.c1 + out.d1);
            assert_eq!(out.successes[1], out.counts.b + out.counts.c2 + out.d2);
        }
    }

    #[test]
    fn policy_is_reproducible() {
        let source = gaussian(26, 1000);
        let a = simulate_policy(&source, pt(1.0, 1.1), 0.4, Noise::uniform(0.5), 77).unwrap();
        let b = simulate_policy(&source, pt(1.0, 1.1), 0.4, Noise::uniform(0.5), 77).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn p_b_monotone_in_r1_on_shared_stream() {
        let source = gaussian(27, 1500);
        let noise = Noise::uniform(0.5);
        let mut last = u64::MAX;
        for i in 0..15 {
            let b = estimate_case_probs(&source, pt(0.2 * i as f64, 0.8), noise).counts.b;
            assert!(b <= last);
            last = b;
        }
    }

    #[test]
    fn bias_outside_unit_interval_rejected() {
        let source = gaussian(28, 10);
        assert!(simulate_policy(&source, pt(1.0, 1.0), 1.5, Noise::uniform(0.5), 0).is_err());
    }
}
