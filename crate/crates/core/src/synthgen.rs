//! Seeded generation of the synthetic datasets: Gaussian noise with isotropic
//! or Toeplitz-geometric covariance, i.i.d. skew-normal noise, and one-peak
//! Lorentzian spectra with optional additive noise. Also the norm histogram
//! used to visualise concentration of measure.

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{self, derive_seed};
use crate::spectra::SpectraMatrix;

/// Covariance family of a Gaussian class.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Covariance {
    Isotropic,
    /// `Σ_ij = σ² ρ^|i-j|`
    ToeplitzGeometric { rho: f64 },
}

impl Covariance {
    pub fn rho(&self) -> f64 {
        match *self {
            Covariance::Isotropic => 0.0,
            Covariance::ToeplitzGeometric { rho } => rho,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianClassSpec {
    pub dim: usize,
    pub mean: f64,
    pub sigma: f64,
    pub covariance: Covariance,
}

impl GaussianClassSpec {
    pub fn isotropic(dim: usize, mean: f64, sigma: f64) -> Self {
        GaussianClassSpec { dim, mean, sigma, covariance: Covariance::Isotropic }
    }

    pub fn toeplitz(dim: usize, mean: f64, sigma: f64, rho: f64) -> Self {
        GaussianClassSpec { dim, mean, sigma, covariance: Covariance::ToeplitzGeometric { rho } }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidSpec("dimension must be at least 1".into()));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidSpec(format!("sigma must be positive, got {}", self.sigma)));
        }
        if !self.mean.is_finite() {
            return Err(Error::InvalidSpec("mean must be finite".into()));
        }
        let rho = self.covariance.rho();
        if !(rho.abs() < 1.0) {
            return Err(Error::InvalidSpec(format!("|rho| must be < 1, got {rho}")));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkewNormalClassSpec {
    pub dim: usize,
    pub location: f64,
    pub scale: f64,
    /// Azzalini shape parameter.
    pub shape: f64,
}

impl SkewNormalClassSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidSpec("dimension must be at least 1".into()));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::InvalidSpec(format!("scale must be positive, got {}", self.scale)));
        }
        if !self.location.is_finite() || !self.shape.is_finite() {
            return Err(Error::InvalidSpec("location and shape must be finite".into()));
        }
        Ok(())
    }

    /// `δ = γ / sqrt(1 + γ²)`
    pub fn delta(&self) -> f64 {
        self.shape / (1.0 + self.shape * self.shape).sqrt()
    }

    pub fn analytic_mean(&self) -> f64 {
        self.location + self.scale * self.delta() * (2.0 / std::f64::consts::PI).sqrt()
    }

    pub fn analytic_variance(&self) -> f64 {
        let d = self.delta();
        self.scale * self.scale * (1.0 - 2.0 * d * d / std::f64::consts::PI)
    }

    pub fn analytic_skewness(&self) -> f64 {
        let pi = std::f64::consts::PI;
        let m = self.delta() * (2.0 / pi).sqrt();
        (4.0 - pi) / 2.0 * m.powi(3) / (1.0 - m * m).powf(1.5)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub mean: f64,
    pub sd: f64,
}

/// Positions at which a spectrum is evaluated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PixelGrid {
    /// `x_i = i` for `i = 1..=n`.
    #[default]
    Index,
    /// `n` evenly spaced points from `start` to `end` inclusive.
    Span { start: f64, end: f64 },
}

impl PixelGrid {
    pub fn points(&self, n: usize) -> Vec<f64> {
        match *self {
            PixelGrid::Index => (1..=n).map(|i| i as f64).collect(),
            PixelGrid::Span { start, end } if n > 1 => {
                let step = (end - start) / (n - 1) as f64;
                (0..n).map(|i| if i == n - 1 { end } else { start + i as f64 * step }).collect()
            }
            PixelGrid::Span { start, .. } => vec![start],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LorentzianSpectrumSpec {
    pub dim: usize,
    pub centre_mean: f64,
    pub centre_sd: f64,
    pub fwhm: f64,
    pub count: usize,
    pub noise: Option<NoiseSpec>,
    #[serde(default)]
    pub grid: PixelGrid,
}

impl LorentzianSpectrumSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.count == 0 {
            return Err(Error::InvalidSpec("dimension and count must be at least 1".into()));
        }
        if !(self.centre_sd > 0.0) || !(self.fwhm > 0.0) {
            return Err(Error::InvalidSpec("centre_sd and fwhm must be positive".into()));
        }
        if let Some(noise) = self.noise {
            if !(noise.sd > 0.0) || !noise.mean.is_finite() {
                return Err(Error::InvalidSpec("noise sd must be positive".into()));
            }
        }
        if let PixelGrid::Span { start, end } = self.grid {
            if !(start.is_finite() && end.is_finite() && end > start) {
                return Err(Error::InvalidSpec("grid span must satisfy start < end".into()));
            }
        }
        Ok(())
    }
}

/// Unit-height Lorentzian `(ξ/2)² / ((x-c)² + (ξ/2)²)`.
#[inline]
pub fn lorentzian(x: f64, centre: f64, fwhm: f64) -> f64 {
    let hw2 = 0.25 * fwhm * fwhm;
    hw2 / ((x - centre) * (x - centre) + hw2)
}

fn check_count(count: usize) -> Result<()> {
    if count == 0 {
        return Err(Error::InvalidArgument("count must be positive".into()));
    }
    Ok(())
}

/// Rows from `N(μ·1, Σ)`. Coordinates follow the AR(1) recursion
/// `x₁ = μ + σz₁`, `xᵢ = μ + ρ(xᵢ₋₁ − μ) + σ√(1−ρ²)zᵢ`; isotropic is `ρ = 0`
/// on the same code path, so both produce bit-identical draws.
pub fn sample_gaussian_class(spec: &GaussianClassSpec, count: usize, seed: u64) -> Result<SpectraMatrix> {
    spec.validate()?;
    check_count(count)?;
    let rho = spec.covariance.rho();
    let innovation = spec.sigma * (1.0 - rho * rho).sqrt();
    let mut rng = seed::rng(seed);
    let mut values = Vec::with_capacity(count * spec.dim);
    for _ in 0..count {
        let z: f64 = rng.sample(StandardNormal);
        let mut dev = spec.sigma * z;
        values.push(spec.mean + dev);
        for _ in 1..spec.dim {
            let z: f64 = rng.sample(StandardNormal);
            dev = rho * dev + innovation * z;
            values.push(spec.mean + dev);
        }
    }
    SpectraMatrix::new(count, spec.dim, values)
}

/// Rows of i.i.d. skew-normal coordinates via the stochastic representation
/// `x = μ + σ(δ|z₀| + √(1−δ²) z₁)`.
pub fn sample_skew_normal_class(spec: &SkewNormalClassSpec, count: usize, seed: u64) -> Result<SpectraMatrix> {
    spec.validate()?;
    check_count(count)?;
    let delta = spec.delta();
    let ortho = (1.0 - delta * delta).sqrt();
    let mut rng = seed::rng(seed);
    let values = (0..count * spec.dim)
        .map(|_| {
            let z0: f64 = rng.sample(StandardNormal);
            let z1: f64 = rng.sample(StandardNormal);
            spec.location + spec.scale * (delta * z0.abs() + ortho * z1)
        })
        .collect();
    SpectraMatrix::new(count, spec.dim, values)
}

/// One-peak spectra on the pixel axis `x = 1..=n` with jittered centres and
/// optional unclipped additive noise. The returned matrix carries that axis.
pub fn generate_lorentzian_class(spec: &LorentzianSpectrumSpec, seed: u64) -> Result<SpectraMatrix> {
    spec.validate()?;
    let mut rng = seed::rng(seed);
    let axis = spec.grid.points(spec.dim);
    let mut values = Vec::with_capacity(spec.count * spec.dim);
    for _ in 0..spec.count {
        let z: f64 = rng.sample(StandardNormal);
        let centre = spec.centre_mean + spec.centre_sd * z;
        for &x in &axis {
            let mut v = lorentzian(x, centre, spec.fwhm);
            if let Some(noise) = spec.noise {
                let e: f64 = rng.sample(StandardNormal);
                v += noise.mean + noise.sd * e;
            }
            values.push(v);
        }
    }
    SpectraMatrix::new(spec.count, spec.dim, values)?.with_axis(axis)
}

/// Euclidean row norms.
pub fn row_norms(data: &SpectraMatrix) -> Vec<f64> {
    data.rows().map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt()).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormHistogram {
    /// `bins + 1` increasing edges; the last bin is closed on the right.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub mean: f64,
    /// Sample standard deviation (n − 1 denominator).
    pub sd: f64,
}

impl NormHistogram {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

fn histogram(norms: &[f64], lo: f64, hi: f64, bins: usize) -> NormHistogram {
    let width = (hi - lo) / bins as f64;
    let edges = (0..=bins).map(|i| lo + width * i as f64).collect();
    let mut counts = vec![0usize; bins];
    for &x in norms {
        let b = (((x - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    let n = norms.len() as f64;
    let mean = norms.iter().sum::<f64>() / n;
    let sd = if norms.len() > 1 {
        (norms.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    NormHistogram { edges, counts, mean, sd }
}

fn range_of(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if lo == hi {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

/// Histogram of the row norms with mean and sd.
pub fn norm_histogram(data: &SpectraMatrix, bins: usize) -> Result<NormHistogram> {
    if data.n_rows() == 0 {
        return Err(Error::Empty("norm histogram of an empty matrix".into()));
    }
    if bins == 0 {
        return Err(Error::InvalidArgument("bins must be positive".into()));
    }
    let norms = row_norms(data);
    let (lo, hi) = range_of(norms.iter().copied());
    Ok(histogram(&norms, lo, hi, bins))
}

/// Norm histograms of several datasets on one shared bin grid.
pub fn norm_histograms_shared(datasets: &[&SpectraMatrix], bins: usize) -> Result<Vec<NormHistogram>> {
    if bins == 0 {
        return Err(Error::InvalidArgument("bins must be positive".into()));
    }
    if datasets.is_empty() || datasets.iter().any(|d| d.n_rows() == 0) {
        return Err(Error::Empty("norm histogram of an empty matrix".into()));
    }
    let norms: Vec<Vec<f64>> = datasets.iter().map(|d| row_norms(d)).collect();
    let (lo, hi) = range_of(norms.iter().flatten().copied());
    Ok(norms.iter().map(|n| histogram(n, lo, hi, bins)).collect())
}

/// Overlap `Σ_b min(p_b, q_b)` of two normalised histograms on the same grid.
pub fn histogram_overlap(a: &NormHistogram, b: &NormHistogram) -> f64 {
    let (ta, tb) = (a.total() as f64, b.total() as f64);
    a.counts
        .iter()
        .zip(&b.counts)
        .map(|(&x, &y)| (x as f64 / ta).min(y as f64 / tb))
        .sum()
}

/// One dimension of the concentration study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationPanel {
    pub dim: usize,
    pub sigmas: Vec<f64>,
    pub histograms: Vec<NormHistogram>,
    /// Overlap of the first two sigmas' histograms (1.0 with fewer than two).
    pub overlap: f64,
}

/// Norm histograms of `N(mean, σ²I_n)` samples for every `(n, σ)` pair,
/// sharing the bin grid within each `n`.
pub fn concentration_study(
    dims: &[usize],
    sigmas: &[f64],
    samples: usize,
    bins: usize,
    mean: f64,
    seed: u64,
) -> Result<Vec<ConcentrationPanel>> {
    if sigmas.is_empty() || dims.is_empty() {
        return Err(Error::InvalidArgument("need at least one dimension and one sigma".into()));
    }
    dims.iter()
        .map(|&dim| {
            let data = sigmas
                .iter()
                .enumerate()
                .map(|(i, &sigma)| {
                    let spec = GaussianClassSpec::isotropic(dim, mean, sigma);
                    sample_gaussian_class(&spec, samples, derive_seed(seed, &format!("concentration/n={dim}/sigma#{i}")))
                })
                .collect::<Result<Vec<_>>>()?;
            let refs: Vec<&SpectraMatrix> = data.iter().collect();
            let histograms = norm_histograms_shared(&refs, bins)?;
            let overlap = if histograms.len() >= 2 { histogram_overlap(&histograms[0], &histograms[1]) } else { 1.0 };
            Ok(ConcentrationPanel { dim, sigmas: sigmas.to_vec(), histograms, overlap })
        })
        .collect()
}
