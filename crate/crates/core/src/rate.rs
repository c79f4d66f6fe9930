//! Rates, beamformers, per-transmitter power frontiers and the exact
//! feasibility oracle for a rate pair on one channel realization.
//!
//! The oracle rests on a closed-form frontier. Split the own channel `a`
//! into a component along the cross channel `b` (magnitude `c`) and an
//! orthogonal remainder (magnitude `d`). With phases aligned, a unit-norm
//! beamformer that leaks interference power `q` toward the other receiver
//! delivers at most
//!
//! ```text
//! p(q) = ( (c / |b|) sqrt(q) + d sqrt(1 - q / |b|^2) )^2,   0 <= q <= q_mrt
//! ```
//!
//! of signal power, with `q_mrt = |b^H a|^2 / |a|^2` the leakage of the
//! matched filter. `p` is concave and nondecreasing, so deciding whether
//! `(r1, r2)` is achievable reduces to maximizing a concave scalar function
//! of the leakage `q1` of transmitter 1, and the largest `r2` for a given
//! `r1` is the maximum of a quasi-concave SINR in `q1`.

use std::f64::consts::LN_2;

use crate::channel::ChannelRealization;
use crate::optimize::golden_section_max;
use crate::{CMatrix, CVector, Complex64, Error, Link, Noise, Result};

/// Golden-section iterations used by the oracles.
pub const GOLDEN_ITERATIONS: usize = 80;
/// Feasibility slack of the oracle, in power units. Grazing points are
/// accepted.
pub const POWER_SLACK: f64 = 1e-9;
/// Slack on beamformer norms and covariance traces.
pub const POWER_BUDGET_TOL: f64 = 1e-12;

/// `2^r - 1`, the SINR needed for rate `r`.
pub fn sinr_target(rate: f64) -> f64 {
    (rate * LN_2).exp_m1()
}

/// `log2(1 + sinr)`.
pub fn rate_from_sinr(sinr: f64) -> f64 {
    sinr.ln_1p() / LN_2
}

/// Transmit beamforming vector with `|w|^2 <= 1`. The zero vector switches a
/// transmitter off.
#[derive(Debug, Clone, PartialEq)]
pub struct Beamformer(CVector);

impl Beamformer {
    pub fn new(w: CVector) -> Result<Self> {
        if w.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::NonFinite("beamformer".into()));
        }
        let norm_sq = w.norm_squared();
        if norm_sq > 1.0 + POWER_BUDGET_TOL {
            return Err(Error::InvalidArgument(format!(
                "beamformer power {norm_sq} exceeds the unit budget"
            )));
        }
        Ok(Beamformer(w))
    }

    pub fn zero(n: usize) -> Self {
        Beamformer(CVector::zeros(n))
    }

    pub fn vector(&self) -> &CVector {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn norm_squared(&self) -> f64 {
        self.0.norm_squared()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|z| *z == Complex64::new(0.0, 0.0))
    }

    /// `w w^H`.
    pub fn covariance(&self) -> TransmitCovariance {
        TransmitCovariance(&self.0 * self.0.adjoint())
    }

    /// Scales to unit norm; zero stays zero.
    fn normalized(v: CVector) -> Self {
        let norm = v.norm();
        if norm > 0.0 {
            Beamformer(v.unscale(norm))
        } else {
            Beamformer(v)
        }
    }
}

/// Transmit covariance with trace at most one.
#[derive(Debug, Clone, PartialEq)]
pub struct TransmitCovariance(CMatrix);

impl TransmitCovariance {
    pub fn new(psi: CMatrix) -> Result<Self> {
        if psi.nrows() != psi.ncols() {
            return Err(Error::Dimension("transmit covariance must be square".into()));
        }
        let trace = psi.trace().re;
        if trace > 1.0 + POWER_BUDGET_TOL {
            return Err(Error::InvalidArgument(format!(
                "transmit covariance trace {trace} exceeds the unit budget"
            )));
        }
        // Reuses the Hermitian/PSD checks of the channel statistics.
        crate::channel::factor_covariance(&psi)?;
        Ok(TransmitCovariance(psi))
    }

    pub fn zero(n: usize) -> Self {
        TransmitCovariance(CMatrix::zeros(n, n))
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }
}

/// A pair of rates in bits per channel use.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RatePoint {
    pub r1: f64,
    pub r2: f64,
}

impl RatePoint {
    pub fn new(r1: f64, r2: f64) -> Result<Self> {
        if !(r1.is_finite() && r2.is_finite() && r1 >= 0.0 && r2 >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "rates must be finite and nonnegative, got ({r1}, {r2})"
            )));
        }
        Ok(RatePoint { r1, r2 })
    }

    pub fn get(&self, link: Link) -> f64 {
        match link {
            Link::One => self.r1,
            Link::Two => self.r2,
        }
    }

    pub fn swapped(&self) -> Self {
        RatePoint { r1: self.r2, r2: self.r1 }
    }
}

fn quad_form(h: &CVector, psi: &CMatrix) -> f64 {
    h.dotc(&(psi * h)).re.max(0.0)
}

fn gain(h: &CVector, w: &CVector) -> f64 {
    h.dotc(w).norm_sqr()
}

fn check_dims(h: &ChannelRealization, n1: usize, n2: usize) -> Result<()> {
    let n = h.n();
    if n1 != n || n2 != n {
        return Err(Error::Dimension(format!(
            "channel has {n} antennas, transmit inputs have {n1} and {n2}"
        )));
    }
    Ok(())
}

/// Rate of `link` with Gaussian codebooks of covariances `psi1`, `psi2`,
/// treating interference as noise.
pub fn rate_cov(
    h: &ChannelRealization,
    psi1: &TransmitCovariance,
    psi2: &TransmitCovariance,
    link: Link,
    sigma_sq: f64,
) -> Result<f64> {
    check_dims(h, psi1.0.nrows(), psi2.0.nrows())?;
    let (signal, interference) = match link {
        Link::One => (quad_form(&h.h11, &psi1.0), quad_form(&h.h21, &psi2.0)),
        Link::Two => (quad_form(&h.h22, &psi2.0), quad_form(&h.h12, &psi1.0)),
    };
    Ok(rate_from_sinr(signal / (interference + sigma_sq)))
}

/// Rank-one specialization of [`rate_cov`] with `psi_i = w_i w_i^H`.
pub fn rate_bf(
    h: &ChannelRealization,
    w1: &Beamformer,
    w2: &Beamformer,
    link: Link,
    sigma_sq: f64,
) -> Result<f64> {
    check_dims(h, w1.len(), w2.len())?;
    Ok(rate_bf_unchecked(h, w1, w2, link, sigma_sq))
}

fn rate_bf_unchecked(h: &ChannelRealization, w1: &Beamformer, w2: &Beamformer, link: Link, sigma_sq: f64) -> f64 {
    let (signal, interference) = match link {
        Link::One => (gain(&h.h11, &w1.0), gain(&h.h21, &w2.0)),
        Link::Two => (gain(&h.h22, &w2.0), gain(&h.h12, &w1.0)),
    };
    rate_from_sinr(signal / (interference + sigma_sq))
}

/// Interference-free rate of `link` with matched-filter beamforming.
pub fn su_rate(h: &ChannelRealization, link: Link, sigma_sq: f64) -> f64 {
    let own = match link {
        Link::One => &h.h11,
        Link::Two => &h.h22,
    };
    rate_from_sinr(own.norm_squared() / sigma_sq)
}

/// Matched filter `h / |h|`; the zero channel gives the zero beamformer.
pub fn mrt(h: &CVector) -> Beamformer {
    Beamformer::normalized(h.clone())
}

/// Normalized projection of `a` onto the orthogonal complement of `b`.
///
/// Returns the zero vector when `a` is zero or parallel to `b` (no
/// zero-forcing direction exists) and the matched filter when `b` is zero.
pub fn zf(a: &CVector, b: &CVector) -> Beamformer {
    let b_norm_sq = b.norm_squared();
    if b_norm_sq == 0.0 {
        return mrt(a);
    }
    let projected = a - b * (b.dotc(a) / b_norm_sq);
    if projected.norm() <= PARALLEL_TOL * a.norm() {
        return Beamformer::zero(a.len());
    }
    Beamformer::normalized(projected)
}

/// Relative size below which the orthogonal remainder of `a` counts as zero.
const PARALLEL_TOL: f64 = 1e-12;

/// Tradeoff between delivered signal power and leaked interference power for
/// one transmitter with own channel `a` and cross channel `b`.
#[derive(Debug, Clone)]
pub struct PowerFrontier {
    /// `|b^H a| / |b|`, the part of `a` along `b`.
    pub c: f64,
    /// Norm of the part of `a` orthogonal to `b`.
    pub d: f64,
    pub b_norm_sq: f64,
    /// `|a|^2`, reached by the matched filter.
    pub p_max: f64,
    /// Interference leaked by the matched filter.
    pub q_mrt: f64,
    /// Set when `b` vanishes, so no interference can be caused.
    pub degenerate: bool,
    mrt: Beamformer,
    // Unit vector along b, rotated so that a^H (phase * b_hat) = c.
    b_dir: CVector,
    orth_dir: Option<CVector>,
}

/// Builds the frontier of a transmitter with own channel `a` and cross
/// channel `b`.
pub fn power_frontier(a: &CVector, b: &CVector) -> PowerFrontier {
    let n = a.len();
    let p_max = a.norm_squared();
    let b_norm_sq = b.norm_squared();
    let mrt = mrt(a);
    if b_norm_sq == 0.0 || !b_norm_sq.is_normal() {
        return PowerFrontier {
            c: 0.0,
            d: p_max.sqrt(),
            b_norm_sq: 0.0,
            p_max,
            q_mrt: 0.0,
            degenerate: true,
            mrt,
            b_dir: CVector::zeros(n),
            orth_dir: None,
        };
    }
    let b_norm = b_norm_sq.sqrt();
    let b_hat = b.unscale(b_norm);
    let alpha = b_hat.dotc(a);
    let c_raw = alpha.norm();
    let remainder = a - &b_hat * alpha;
    let d_raw = remainder.norm();
    let a_norm = p_max.sqrt();

    let (c, d, orth_dir) = if d_raw <= PARALLEL_TOL * a_norm {
        (a_norm, 0.0, None)
    } else {
        (c_raw, d_raw, Some(remainder.unscale(d_raw)))
    };
    let phase = if c_raw > 0.0 { alpha / c_raw } else { Complex64::new(1.0, 0.0) };
    let q_mrt = if p_max > 0.0 { b_norm_sq * c * c / p_max } else { 0.0 };
    PowerFrontier {
        c,
        d,
        b_norm_sq,
        p_max,
        q_mrt,
        degenerate: false,
        mrt,
        b_dir: b_hat * phase,
        orth_dir,
    }
}

impl PowerFrontier {
    /// Largest signal power reachable while leaking at most `q`.
    pub fn eval(&self, q: f64) -> f64 {
        if self.degenerate || q >= self.q_mrt {
            return self.p_max;
        }
        let q = q.max(0.0);
        let s_sq = q / self.b_norm_sq;
        let root = self.c * s_sq.sqrt() + self.d * (1.0 - s_sq).max(0.0).sqrt();
        root * root
    }

    /// Unit-norm beamformer on the frontier at leakage `q` (clamped to
    /// `[0, q_mrt]`). Leaks exactly `q` and delivers `eval(q)`.
    pub fn beamformer(&self, q: f64) -> Beamformer {
        let n = self.mrt.len();
        if self.p_max == 0.0 {
            return Beamformer::zero(n);
        }
        if self.degenerate || q >= self.q_mrt {
            return self.mrt.clone();
        }
        let s_sq = (q.max(0.0) / self.b_norm_sq).min(1.0);
        let mut w = &self.b_dir * Complex64::new(s_sq.sqrt(), 0.0);
        if let Some(u) = &self.orth_dir {
            w += u * Complex64::new((1.0 - s_sq).sqrt(), 0.0);
        }
        Beamformer::normalized(w)
    }

    /// Smallest leakage `q` in `[0, q_mrt]` with `eval(q) >= p_target`.
    ///
    /// Inverts the frontier in closed form: writing `sqrt(q) = |b| sin θ`,
    /// the frontier reads `sqrt(p) = |a| cos(θ - φ)` with `φ = atan2(c, d)`.
    pub fn qmin(&self, p_target: f64) -> Result<f64> {
        if p_target > self.p_max * (1.0 + 1e-12) + f64::MIN_POSITIVE {
            return Err(Error::InfeasibleSignal { target: p_target, p_max: self.p_max });
        }
        Ok(self.qmin_clamped(p_target))
    }

    /// [`qmin`](Self::qmin) with the target clamped to `p_max`.
    pub fn qmin_clamped(&self, p_target: f64) -> f64 {
        if self.degenerate || p_target <= self.d * self.d || self.q_mrt == 0.0 {
            return 0.0;
        }
        let p = p_target.min(self.p_max);
        let phi = self.c.atan2(self.d);
        let offset = (self.p_max - p).max(0.0).sqrt().atan2(p.sqrt());
        let theta = (phi - offset).max(0.0);
        let s = theta.sin();
        (self.b_norm_sq * s * s).min(self.q_mrt)
    }
}

/// Inverse of the frontier: minimal interference needed to deliver
/// `p_target`. Fails when the demand exceeds `p_max`.
pub fn frontier_qmin(frontier: &PowerFrontier, p_target: f64) -> Result<f64> {
    if !(p_target >= 0.0) {
        return Err(Error::InvalidArgument(format!("negative power target {p_target}")));
    }
    frontier.qmin(p_target)
}

/// Outcome of the feasibility oracle together with enabling beamformers.
#[derive(Debug, Clone)]
pub struct FeasibilityWitness {
    pub achievable: bool,
    pub w1: Beamformer,
    pub w2: Beamformer,
    /// Rates `(R1, R2)` obtained with `w1`, `w2`.
    pub rates: [f64; 2],
    /// `min_i (R_i - r_i)`.
    pub margin: f64,
    /// Maximum of the scalar concave feasibility function (power units);
    /// the point is achievable iff this is at least `-POWER_SLACK`.
    pub power_margin: f64,
}

/// Frontiers and single-user rates of one realization, reused across many
/// rate points.
#[derive(Debug, Clone)]
pub struct LinkPairProblem {
    pub tx1: PowerFrontier,
    pub tx2: PowerFrontier,
    pub su: [f64; 2],
    pub noise: Noise,
}

/// Decision of [`LinkPairProblem::check`].
#[derive(Debug, Clone, Copy)]
pub struct Decision {
    pub achievable: bool,
    /// Leakage of transmitter 1 at the optimum.
    pub q1: f64,
    /// Leakage of transmitter 2 at the optimum.
    pub q2: f64,
    pub power_margin: f64,
}

impl LinkPairProblem {
    pub fn new(h: &ChannelRealization, noise: Noise) -> Self {
        LinkPairProblem {
            tx1: power_frontier(&h.h11, &h.h12),
            tx2: power_frontier(&h.h22, &h.h21),
            su: [su_rate(h, Link::One, noise.link1), su_rate(h, Link::Two, noise.link2)],
            noise,
        }
    }

    /// Decides `(r1, r2) ∈ R(h)`.
    ///
    /// With `γ_i = 2^{r_i} - 1`, link 2 is served by the least leakage
    /// `q2min(q1)` from transmitter 2 that meets `γ2 (q1 + σ2²)`, and the
    /// point is achievable iff `g(q1) = p1(q1) - γ1 (q2min(q1) + σ1²)` reaches
    /// zero somewhere on the interval where link 2 can be served. `g` is
    /// concave there, so a golden-section search finds its maximum.
    pub fn check(&self, point: RatePoint) -> Decision {
        let (n1, n2) = (self.noise.link1, self.noise.link2);
        let g1 = sinr_target(point.r1);
        let g2 = sinr_target(point.r2);
        let over1 = point.r1 > self.su[0];
        let over2 = point.r2 > self.su[1];
        if over1 || over2 {
            let mut margin = f64::INFINITY;
            if over1 {
                margin = margin.min(self.tx1.p_max - g1 * n1);
            }
            if over2 {
                margin = margin.min(self.tx2.p_max - g2 * n2);
            }
            return Decision { achievable: false, q1: 0.0, q2: 0.0, power_margin: margin.min(-0.0) };
        }

        let mut hi = self.tx1.q_mrt;
        if g2 > 0.0 {
            hi = hi.min(self.tx2.p_max / g2 - n2);
        }
        let hi = hi.max(0.0);
        let q2min = |q1: f64| self.tx2.qmin_clamped(g2 * (q1 + n2));
        let g = |q1: f64| self.tx1.eval(q1) - g1 * (q2min(q1) + n1);
        let (q1, power_margin) = golden_section_max(g, 0.0, hi, GOLDEN_ITERATIONS);
        Decision {
            achievable: power_margin >= -POWER_SLACK,
            q1,
            q2: q2min(q1),
            power_margin,
        }
    }

    /// Largest `r2` jointly achievable with `r1`, or `None` when `r1`
    /// exceeds the single-user rate of link 1.
    ///
    /// For a leakage `q1` of transmitter 1 the most transmitter 2 may leak
    /// is `min(p1(q1)/γ1 - σ1², q2_mrt)`, so link 2 gets SINR
    /// `p2(that) / (q1 + σ2²)`: a nonnegative concave function over a
    /// positive affine one, hence quasi-concave in `q1`.
    pub fn max_r2(&self, r1: f64) -> Option<f64> {
        self.max_r2_with_leakage(r1).map(|(r2, _)| r2)
    }

    /// [`max_r2`](Self::max_r2) together with the optimal leakage `q1`.
    pub fn max_r2_with_leakage(&self, r1: f64) -> Option<(f64, f64)> {
        if !(r1 >= 0.0) || r1 > self.su[0] {
            return None;
        }
        let (n1, n2) = (self.noise.link1, self.noise.link2);
        let g1 = sinr_target(r1);
        if g1 == 0.0 {
            return Some((self.su[1], 0.0));
        }
        let lo = self.tx1.qmin_clamped(g1 * n1);
        let hi = self.tx1.q_mrt.max(lo);
        let q2_mrt = self.tx2.q_mrt;
        let sinr = |q1: f64| {
            let allowed = (self.tx1.eval(q1) / g1 - n1).clamp(0.0, q2_mrt);
            self.tx2.eval(allowed) / (q1 + n2)
        };
        let (q1, best) = golden_section_max(sinr, lo, hi, GOLDEN_ITERATIONS);
        Some((rate_from_sinr(best).min(self.su[1]), q1))
    }

    /// Beamformers realizing the leakages of a decision.
    pub fn witness(&self, decision: &Decision) -> (Beamformer, Beamformer) {
        (self.tx1.beamformer(decision.q1), self.tx2.beamformer(decision.q2))
    }
}

/// Decides whether `point` lies in the instantaneous rate region `R(h)`
/// (comprehensive hull: rates at or below an achievable pair count) and
/// returns enabling beamformers.
pub fn is_achievable(h: &ChannelRealization, point: RatePoint, noise: Noise) -> FeasibilityWitness {
    let problem = LinkPairProblem::new(h, noise);
    let decision = problem.check(point);
    let (w1, w2) = if point.r1 > problem.su[0] || point.r2 > problem.su[1] {
        (mrt(&h.h11), mrt(&h.h22))
    } else {
        problem.witness(&decision)
    };
    let rates = [
        rate_bf_unchecked(h, &w1, &w2, Link::One, noise.link1),
        rate_bf_unchecked(h, &w1, &w2, Link::Two, noise.link2),
    ];
    FeasibilityWitness {
        achievable: decision.achievable,
        margin: (rates[0] - point.r1).min(rates[1] - point.r2),
        rates,
        w1,
        w2,
        power_margin: decision.power_margin,
    }
}

/// Largest `r2` such that `(r1, r2) ∈ R(h)`; fails when `r1` exceeds the
/// single-user rate of link 1.
pub fn max_r2_given_r1(h: &ChannelRealization, r1: f64, noise: Noise) -> Result<f64> {
    let problem = LinkPairProblem::new(h, noise);
    problem
        .max_r2(r1)
        .ok_or(Error::InfeasibleRate { r1, su_rate: problem.su[0] })
}

/// Mirror image of [`max_r2_given_r1`] with the roles of the links swapped.
pub fn max_r1_given_r2(h: &ChannelRealization, r2: f64, noise: Noise) -> Result<f64> {
    max_r2_given_r1(&h.swapped(), r2, noise.swapped())
}
