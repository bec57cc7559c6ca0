//! Correlated Rayleigh channel draws and pilot-phase observations.

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::linalg::{c64, CMatrix, CVector, HermitianMatrix};
use crate::scenario::{CovarianceSet, SystemParams};
use crate::{Error, Result};

/// Eigenvalues below `-NEGATIVE_TOLERANCE * max` make a covariance invalid.
pub const NEGATIVE_TOLERANCE: f64 = 1e-9;
/// Eigen-directions at or below `RANK_TOLERANCE * max` are dropped from the factor.
pub const RANK_TOLERANCE: f64 = 1e-12;

/// One draw from CN(0, 1).
pub fn standard_complex_normal<R: Rng + ?Sized>(rng: &mut R) -> c64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    c64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn standard_complex_normal_vector<R: Rng + ?Sized>(len: usize, rng: &mut R) -> CVector {
    CVector::from_fn(len, |_, _| standard_complex_normal(rng))
}

/// Samples CN(0, C) as `F z` with `F F^H = C`.
///
/// `F = U sqrt(L)` from the eigen-decomposition of `C`, keeping only the
/// directions with eigenvalue above `RANK_TOLERANCE` times the largest, so
/// `F` is `M x rank`.
#[derive(Debug, Clone)]
pub struct GaussianSampler {
    factor: CMatrix,
}

impl GaussianSampler {
    pub fn new(cov: &HermitianMatrix) -> Result<Self> {
        let (values, vectors) = cov.eigen();
        let max = values.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        if values.first().is_some_and(|&v| v < -NEGATIVE_TOLERANCE * max) {
            return Err(Error::InvalidCovariance(format!(
                "eigenvalue {:.3e} below -{NEGATIVE_TOLERANCE:e} x {max:.3e}",
                values[0]
            )));
        }
        let keep: Vec<usize> = (0..values.len()).filter(|&i| values[i] > RANK_TOLERANCE * max).collect();
        let factor = CMatrix::from_fn(cov.dim(), keep.len(), |row, col| {
            vectors[(row, keep[col])] * values[keep[col]].sqrt()
        });
        Ok(GaussianSampler { factor })
    }

    pub fn dim(&self) -> usize {
        self.factor.nrows()
    }

    pub fn rank(&self) -> usize {
        self.factor.ncols()
    }

    pub fn factor(&self) -> &CMatrix {
        &self.factor
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> CVector {
        let z = standard_complex_normal_vector(self.rank(), rng);
        &self.factor * z
    }

    /// Draws the sample covariance `(1/n) sum y y^H` of `n` independent
    /// observations from its exact distribution.
    ///
    /// `y = F z`, so the sum is `F W F^H` with `W` a complex Wishart matrix
    /// with identity scale. For `n >= rank` the Bartlett decomposition
    /// `W = T T^H` is used (`|T_ii|^2 ~ Gamma(n - i, 1)`, strictly lower
    /// entries CN(0, 1)); otherwise the `n` vectors are drawn directly.
    pub fn sample_covariance<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<HermitianMatrix> {
        if n == 0 {
            return Err(Error::InvalidParams("sample covariance needs at least one observation".into()));
        }
        let r = self.rank();
        let m = self.dim();
        if r == 0 {
            return Ok(HermitianMatrix::zeros(m));
        }
        let b = if n >= r {
            let mut t = CMatrix::zeros(r, r);
            for i in 0..r {
                let g = Gamma::new((n - i) as f64, 1.0).expect("positive shape");
                let d: f64 = g.sample(rng);
                t[(i, i)] = c64::new(d.sqrt(), 0.0);
                for jj in 0..i {
                    t[(i, jj)] = standard_complex_normal(rng);
                }
            }
            &self.factor * t
        } else {
            let z = CMatrix::from_fn(r, n, |_, _| standard_complex_normal(rng));
            &self.factor * z
        };
        let s = &b * b.adjoint() * c64::new(1.0 / n as f64, 0.0);
        HermitianMatrix::from_upper(s)
    }
}

pub fn sample_gaussian<R: Rng + ?Sized>(cov: &HermitianMatrix, rng: &mut R) -> Result<CVector> {
    Ok(GaussianSampler::new(cov)?.sample(rng))
}

/// Channel samplers for every `(l, k)` as seen by BS `j`.
#[derive(Debug, Clone)]
pub struct ChannelSamplers {
    j: usize,
    l: usize,
    k: usize,
    samplers: Vec<GaussianSampler>,
}

impl ChannelSamplers {
    pub fn new(covset: &CovarianceSet, j: usize) -> Result<Self> {
        let p = covset.params();
        let mut samplers = Vec::with_capacity(p.l * p.k);
        for l in 0..p.l {
            for k in 0..p.k {
                let r = covset.try_r(j, l, k)?;
                samplers.push(GaussianSampler::new(r).map_err(|e| e.context(format!("R({j},{l},{k})")))?);
            }
        }
        Ok(ChannelSamplers {
            j,
            l: p.l,
            k: p.k,
            samplers,
        })
    }

    pub fn observing_bs(&self) -> usize {
        self.j
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> ChannelDraw {
        ChannelDraw {
            j: self.j,
            l: self.l,
            k: self.k,
            h: self.samplers.iter().map(|s| s.sample(rng)).collect(),
        }
    }
}

/// All channels `h(l, k)` seen by one BS in one coherence block.
#[derive(Debug, Clone)]
pub struct ChannelDraw {
    j: usize,
    l: usize,
    k: usize,
    h: Vec<CVector>,
}

impl ChannelDraw {
    pub fn from_channels(j: usize, l: usize, k: usize, h: Vec<CVector>) -> Result<Self> {
        if h.len() != l * k {
            return Err(Error::DimensionMismatch {
                expected: l * k,
                got: h.len(),
            });
        }
        Ok(ChannelDraw { j, l, k, h })
    }

    pub fn observing_bs(&self) -> usize {
        self.j
    }

    pub fn h(&self, l: usize, k: usize) -> &CVector {
        &self.h[l * self.k + k]
    }

    pub fn cells(&self) -> usize {
        self.l
    }

    pub fn ues(&self) -> usize {
        self.k
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObservationKind {
    /// Desired UE plus all same-pilot UEs in other cells.
    Regular,
    /// Desired UE alone on an extra pilot.
    Clean,
    /// Same-pilot UEs in other cells only; the desired UE is silent.
    Contaminants,
}

#[derive(Debug, Clone)]
pub struct PilotObservation {
    pub y: CVector,
    pub kind: ObservationKind,
}

/// Despread pilot observation of UE `k` at BS `j`, with fresh noise.
pub fn observe<R: Rng + ?Sized>(
    kind: ObservationKind,
    j: usize,
    k: usize,
    draw: &ChannelDraw,
    rng: &mut R,
    params: &SystemParams,
) -> PilotObservation {
    debug_assert_eq!(draw.observing_bs(), j);
    let m = draw.h(0, 0).len();
    let noise_scale = c64::new(1.0 / params.rho_tr.sqrt(), 0.0);
    let mut y = standard_complex_normal_vector(m, rng) * noise_scale;
    if kind != ObservationKind::Contaminants {
        y += draw.h(j, k);
    }
    if kind != ObservationKind::Clean {
        for l in (0..draw.cells()).filter(|&l| l != j) {
            y += draw.h(l, k);
        }
    }
    PilotObservation { y, kind }
}
