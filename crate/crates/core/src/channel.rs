//! Gaussian fading model and reproducible channel sampling.
//!
//! Every complex standard normal entry has total variance one (one half per
//! real and imaginary part), so a channel drawn as `L z` has covariance
//! `L L^H`. Sample `k` of a stream depends only on `(seed, k)`: a ChaCha
//! generator keyed by the seed is switched to stream `k` for each draw, which
//! makes any prefix of a batch identical to a shorter batch and lets index
//! ranges be generated on different threads.

use nalgebra::linalg::{SymmetricEigen, QR};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::{CMatrix, CVector, Complex64, Error, Noise, Result};

/// Tolerance for Hermitian symmetry and for negative eigenvalues.
pub const HERMITIAN_TOL: f64 = 1e-10;

/// One realization of the four channel vectors.
///
/// `h_ij` is the conjugated channel from transmitter `i` to receiver `j`, so
/// `h11` and `h22` carry the desired signals and `h12`, `h21` the
/// interference.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub h11: CVector,
    pub h12: CVector,
    pub h21: CVector,
    pub h22: CVector,
}

impl ChannelRealization {
    pub fn new(h11: CVector, h12: CVector, h21: CVector, h22: CVector) -> Result<Self> {
        let n = h11.len();
        if n == 0 {
            return Err(Error::Dimension("channel vectors must be non-empty".into()));
        }
        for (name, v) in [("h12", &h12), ("h21", &h21), ("h22", &h22)] {
            if v.len() != n {
                return Err(Error::Dimension(format!(
                    "{name} has length {} but h11 has length {n}",
                    v.len()
                )));
            }
        }
        for (name, v) in [("h11", &h11), ("h12", &h12), ("h21", &h21), ("h22", &h22)] {
            if v.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
                return Err(Error::NonFinite(name.into()));
            }
        }
        Ok(ChannelRealization { h11, h12, h21, h22 })
    }

    /// Builds a realization from real-valued slices (imaginary parts zero).
    pub fn from_real(h11: &[f64], h12: &[f64], h21: &[f64], h22: &[f64]) -> Result<Self> {
        let v = |x: &[f64]| CVector::from_iterator(x.len(), x.iter().map(|&r| Complex64::new(r, 0.0)));
        Self::new(v(h11), v(h12), v(h21), v(h22))
    }

    pub fn n(&self) -> usize {
        self.h11.len()
    }

    /// Relabels the links: transmitter/receiver 1 becomes 2 and vice versa.
    pub fn swapped(&self) -> Self {
        ChannelRealization {
            h11: self.h22.clone(),
            h12: self.h21.clone(),
            h21: self.h12.clone(),
            h22: self.h11.clone(),
        }
    }
}

/// Second-order statistics of zero-mean circularly-symmetric Gaussian fading.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelStatistics {
    pub q11: CMatrix,
    pub q12: CMatrix,
    pub q21: CMatrix,
    pub q22: CMatrix,
    pub noise: Noise,
}

impl ChannelStatistics {
    pub fn n(&self) -> usize {
        self.q11.nrows()
    }

    /// Identity covariances on every channel.
    pub fn iid(n: usize, noise: Noise) -> Self {
        let eye = CMatrix::identity(n, n);
        ChannelStatistics {
            q11: eye.clone(),
            q12: eye.clone(),
            q21: eye.clone(),
            q22: eye,
            noise,
        }
    }

    fn named(&self) -> [(&'static str, &CMatrix); 4] {
        [("Q11", &self.q11), ("Q12", &self.q12), ("Q21", &self.q21), ("Q22", &self.q22)]
    }
}

/// Checks Hermitian symmetry, positive semidefiniteness and noise positivity.
pub fn validate_statistics(stats: ChannelStatistics) -> Result<ChannelStatistics> {
    let n = stats.n();
    if n == 0 {
        return Err(Error::Dimension("antenna count must be at least 1".into()));
    }
    for (name, q) in stats.named() {
        if q.nrows() != n || q.ncols() != n {
            return Err(Error::Dimension(format!(
                "{name} is {}x{} but n = {n}",
                q.nrows(),
                q.ncols()
            )));
        }
        check_hermitian_psd(name, q)?;
    }
    stats.noise.validate()?;
    Ok(stats)
}

fn check_hermitian_psd(name: &str, q: &CMatrix) -> Result<()> {
    if q.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return Err(Error::NonFinite(name.into()));
    }
    let deviation = hermitian_deviation(q);
    if deviation > HERMITIAN_TOL {
        return Err(Error::NotHermitian { matrix: name.into(), deviation });
    }
    let min_eigenvalue = min_eigenvalue(q);
    if min_eigenvalue < -HERMITIAN_TOL {
        return Err(Error::NotPsd { matrix: name.into(), min_eigenvalue });
    }
    Ok(())
}

fn hermitian_deviation(q: &CMatrix) -> f64 {
    (q - q.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn hermitian_part(q: &CMatrix) -> CMatrix {
    (q + q.adjoint()).scale(0.5)
}

fn min_eigenvalue(q: &CMatrix) -> f64 {
    SymmetricEigen::new(hermitian_part(q))
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Lower-triangular `L` with `L L^H = Q` for a Hermitian PSD `Q`.
///
/// Works through the eigendecomposition so rank-deficient inputs are fine:
/// eigenvalues inside the tolerance band are clamped to zero, the square-root
/// factor `U sqrt(Λ)` is reduced to lower-triangular form with an LQ step, and
/// column phases are rotated so the diagonal is real and non-negative. For
/// positive definite input this is the ordinary Cholesky factor.
pub fn factor_covariance(q: &CMatrix) -> Result<CMatrix> {
    let n = q.nrows();
    if q.ncols() != n {
        return Err(Error::Dimension(format!("covariance is {}x{}", n, q.ncols())));
    }
    check_hermitian_psd("covariance", q)?;

    let eig = SymmetricEigen::new(hermitian_part(q));
    let mut root = eig.eigenvectors.clone();
    for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
        let s = lambda.max(0.0).sqrt();
        root.column_mut(j).scale_mut(s);
    }
    // root root^H = Q; LQ(root) = (QR(root^H))^H keeps the product.
    let r = QR::new(root.adjoint()).r();
    let mut l = r.adjoint();
    for j in 0..n {
        let d = l[(j, j)];
        let mag = d.norm();
        if mag > 0.0 {
            let phase = d.conj() / mag;
            l.column_mut(j).scale_mut_complex(phase);
        }
        for i in 0..j {
            l[(i, j)] = Complex64::new(0.0, 0.0);
        }
    }
    Ok(l)
}

trait ScaleComplex {
    fn scale_mut_complex(&mut self, s: Complex64);
}

impl<S> ScaleComplex for nalgebra::Matrix<Complex64, nalgebra::Dyn, nalgebra::U1, S>
where
    S: nalgebra::StorageMut<Complex64, nalgebra::Dyn, nalgebra::U1>,
{
    fn scale_mut_complex(&mut self, s: Complex64) {
        for z in self.iter_mut() {
            *z *= s;
        }
    }
}

/// Draws a circularly-symmetric complex standard normal (variance 1/2 per part).
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Generator for stream `index` under `seed`.
pub fn indexed_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Derives an independent seed for a named purpose from a base seed.
pub fn derive_seed(seed: u64, domain: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ domain.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
struct GaussianSampler {
    stats: ChannelStatistics,
    factors: [CMatrix; 4],
    seed: u64,
    count: usize,
}

impl GaussianSampler {
    fn draw(&self, index: u64) -> ChannelRealization {
        let n = self.stats.n();
        let mut rng = indexed_rng(self.seed, index);
        let mut next = |l: &CMatrix| {
            let z = CVector::from_fn(n, |_, _| complex_normal(&mut rng));
            l * z
        };
        let h11 = next(&self.factors[0]);
        let h12 = next(&self.factors[1]);
        let h21 = next(&self.factors[2]);
        let h22 = next(&self.factors[3]);
        ChannelRealization { h11, h12, h21, h22 }
    }
}

#[derive(Debug, Clone)]
enum SourceKind {
    Gaussian(GaussianSampler),
    Explicit(Vec<ChannelRealization>),
}

/// Where channel realizations come from: a seeded Gaussian stream or an
/// explicit list.
#[derive(Debug, Clone)]
pub struct SampleSource {
    kind: SourceKind,
}

impl SampleSource {
    /// Seeded Gaussian stream of `count` realizations.
    pub fn gaussian(stats: ChannelStatistics, seed: u64, count: usize) -> Result<Self> {
        if count == 0 {
            return Err(Error::InvalidArgument("sample count must be positive".into()));
        }
        let stats = validate_statistics(stats)?;
        let factors = [
            factor_covariance(&stats.q11)?,
            factor_covariance(&stats.q12)?,
            factor_covariance(&stats.q21)?,
            factor_covariance(&stats.q22)?,
        ];
        Ok(SampleSource {
            kind: SourceKind::Gaussian(GaussianSampler { stats, factors, seed, count }),
        })
    }

    /// Explicit list, yielded verbatim.
    pub fn explicit(realizations: Vec<ChannelRealization>) -> Result<Self> {
        if realizations.is_empty() {
            return Err(Error::InvalidArgument("explicit source is empty".into()));
        }
        let n = realizations[0].n();
        if realizations.iter().any(|h| h.n() != n) {
            return Err(Error::Dimension("explicit realizations differ in antenna count".into()));
        }
        Ok(SampleSource { kind: SourceKind::Explicit(realizations) })
    }

    pub fn len(&self) -> usize {
        match &self.kind {
            SourceKind::Gaussian(g) => g.count,
            SourceKind::Explicit(list) => list.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn seed(&self) -> Option<u64> {
        match &self.kind {
            SourceKind::Gaussian(g) => Some(g.seed),
            SourceKind::Explicit(_) => None,
        }
    }

    pub fn statistics(&self) -> Option<&ChannelStatistics> {
        match &self.kind {
            SourceKind::Gaussian(g) => Some(&g.stats),
            SourceKind::Explicit(_) => None,
        }
    }

    /// Realization at position `index` (pure in `index`).
    pub fn get(&self, index: usize) -> ChannelRealization {
        match &self.kind {
            SourceKind::Gaussian(g) => g.draw(index as u64),
            SourceKind::Explicit(list) => list[index].clone(),
        }
    }
}

/// Materializes the whole source, in order.
pub fn sample_batch(source: &SampleSource) -> Vec<ChannelRealization> {
    match &source.kind {
        SourceKind::Explicit(list) => list.clone(),
        SourceKind::Gaussian(g) => (0..g.count as u64).into_par_iter().map(|k| g.draw(k)).collect(),
    }
}

/// Parses a covariance given as rows of `[re, im]` pairs.
pub fn matrix_from_pairs(rows: &[Vec<[f64; 2]>]) -> Result<CMatrix> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(Error::Dimension(format!("matrix with {n} rows is not square")));
    }
    Ok(CMatrix::from_fn(n, n, |i, j| Complex64::new(rows[i][j][0], rows[i][j][1])))
}

/// Inverse of [`matrix_from_pairs`].
pub fn matrix_to_pairs(q: &CMatrix) -> Vec<Vec<[f64; 2]>> {
    (0..q.nrows())
        .map(|i| (0..q.ncols()).map(|j| [q[(i, j)].re, q[(i, j)].im]).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn max_abs(m: &CMatrix) -> f64 {
        m.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn identity_statistics_are_valid() {
        let stats = ChannelStatistics::iid(2, Noise::uniform(0.5));
        assert!(validate_statistics(stats).is_ok());
    }

    #[test]
    fn negative_eigenvalue_rejected() {
        let mut stats = ChannelStatistics::iid(2, Noise::uniform(0.5));
        stats.q11 = CMatrix::from_diagonal(&CVector::from_vec(vec![c(1.0, 0.0), c(-0.1, 0.0)]));
        match validate_statistics(stats) {
            Err(Error::NotPsd { matrix, min_eigenvalue }) => {
                assert_eq!(matrix, "Q11");
                assert!((min_eigenvalue + 0.1).abs() < 1e-12);
            }
            other => panic!("expected PSD error, got {other:?}"),
        }
    }

    #[test]
    fn asymmetric_matrix_rejected() {
        let mut stats = ChannelStatistics::iid(2, Noise::uniform(0.5));
        stats.q11[(0, 1)] = c(1e-3, 0.0);
        match validate_statistics(stats) {
            Err(Error::NotHermitian { matrix, .. }) => assert_eq!(matrix, "Q11"),
            other => panic!("expected symmetry error, got {other:?}"),
        }
    }

    #[test]
    fn nonpositive_noise_rejected() {
        let stats = ChannelStatistics::iid(2, Noise::new(0.5, 0.0));
        assert!(matches!(
            validate_statistics(stats),
            Err(Error::NonPositiveNoise { link: 2, .. })
        ));
    }

    #[test]
    fn factor_of_identity_and_diagonal() {
        let l = factor_covariance(&CMatrix::identity(2, 2)).unwrap();
        assert!(max_abs(&(l - CMatrix::identity(2, 2))) < 1e-12);

        let q = CMatrix::from_diagonal(&CVector::from_vec(vec![c(4.0, 0.0), c(1.0, 0.0)]));
        let l = factor_covariance(&q).unwrap();
        let expected = CMatrix::from_diagonal(&CVector::from_vec(vec![c(2.0, 0.0), c(1.0, 0.0)]));
        assert!(max_abs(&(l - expected)) < 1e-12);
    }

    #[test]
    fn factor_of_random_psd_reconstructs() {
        let mut rng = indexed_rng(7, 0);
        for _ in 0..200 {
            let a = CMatrix::from_fn(2, 2, |_, _| complex_normal(&mut rng));
            let q = &a * a.adjoint();
            let l = factor_covariance(&q).unwrap();
            assert!(l[(0, 1)].norm() == 0.0, "factor must be lower triangular");
            assert!(max_abs(&(&l * l.adjoint() - &q)) <= 1e-9);
        }
    }

    #[test]
    fn factor_of_rank_deficient() {
        let v = CVector::from_vec(vec![c(1.0, 0.5), c(-0.3, 2.0), c(0.0, 1.0)]);
        let q = &v * v.adjoint();
        let l = factor_covariance(&q).unwrap();
        assert!(max_abs(&(&l * l.adjoint() - &q)) <= 1e-9);
    }

    #[test]
    fn factor_rejects_indefinite() {
        let q = CMatrix::from_diagonal(&CVector::from_vec(vec![c(1.0, 0.0), c(-0.5, 0.0)]));
        assert!(factor_covariance(&q).is_err());
    }

    #[test]
    fn explicit_source_passthrough() {
        let hs: Vec<_> = (0..3)
            .map(|k| {
                let x = k as f64;
                ChannelRealization::from_real(&[x, 1.0], &[0.0, x], &[1.0, 1.0], &[x, x]).unwrap()
            })
            .collect();
        let source = SampleSource::explicit(hs.clone()).unwrap();
        assert_eq!(sample_batch(&source), hs);
    }

    #[test]
    fn prefix_stability() {
        let stats = ChannelStatistics::iid(2, Noise::uniform(0.5));
        let short = sample_batch(&SampleSource::gaussian(stats.clone(), 42, 100).unwrap());
        let long = sample_batch(&SampleSource::gaussian(stats, 42, 1000).unwrap());
        assert_eq!(short[..], long[..100]);
    }

    #[test]
    fn mismatched_lengths_rejected() {
        assert!(ChannelRealization::from_real(&[1.0, 0.0], &[1.0], &[1.0, 0.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn pairs_round_trip() {
        let q = CMatrix::from_fn(2, 2, |i, j| c(i as f64, j as f64 - 0.5));
        assert_eq!(matrix_from_pairs(&matrix_to_pairs(&q)).unwrap(), q);
    }
}
