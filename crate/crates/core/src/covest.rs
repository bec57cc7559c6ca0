//! Covariance estimation from finite pilot observations.
//!
//! `Q` is estimated from regular pilot observations. `R` of the desired UE
//! is estimated either from clean observations on extra pilots ("R direct")
//! or as the difference between the regular sample covariance and a
//! contaminants-only sample covariance ("Via Q"). Both estimates are then
//! regularized by shrinking the off-diagonal entries toward zero:
//!
//! ```text
//! shrink(S, f) = f S + (1 - f) diag(S)
//! ```
//!
//! No positive-semidefinite projection is applied anywhere; a Via-Q or
//! debiased R-direct estimate may be indefinite, which the approximate-MMSE
//! filter tolerates.

use crate::channels::GaussianSampler;
use crate::linalg::{trace_of_product, CMatrix, CVector, HermitianMatrix};
use crate::parallel::map_indexed;
use crate::rng::StreamKey;
use crate::scenario::{CovarianceSet, SystemParams};
use crate::{Error, Result};

/// How `R` of the desired UE is acquired.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    RDirect,
    ViaQ,
}

impl Scheme {
    pub const ALL: [Scheme; 2] = [Scheme::ViaQ, Scheme::RDirect];
}

/// `(1/n) sum y y^H` together with the observation count.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleCovariance {
    pub s: HermitianMatrix,
    pub n_obs: usize,
}

impl SampleCovariance {
    pub fn from_observations(observations: &[CVector]) -> Result<Self> {
        let first = observations
            .first()
            .ok_or_else(|| Error::InvalidParams("sample covariance of an empty observation list".into()))?;
        let m = first.len();
        let mut y = CMatrix::zeros(m, observations.len());
        for (col, obs) in observations.iter().enumerate() {
            if obs.len() != m {
                return Err(Error::DimensionMismatch {
                    expected: m,
                    got: obs.len(),
                });
            }
            y.set_column(col, obs);
        }
        let n = observations.len();
        let s = &y * y.adjoint() / crate::linalg::c64::new(n as f64, 0.0);
        Ok(SampleCovariance {
            s: HermitianMatrix::from_upper(s)?,
            n_obs: n,
        })
    }

    /// Draws the sample covariance of `n` observations from its exact
    /// distribution.
    pub fn draw<R: rand::Rng + ?Sized>(sampler: &GaussianSampler, n: usize, rng: &mut R) -> Result<Self> {
        Ok(SampleCovariance {
            s: sampler.sample_covariance(n, rng)?,
            n_obs: n,
        })
    }

    /// Sample covariance of the union of both observation sets.
    pub fn merge(&self, other: &SampleCovariance) -> Result<Self> {
        if self.s.dim() != other.s.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.s.dim(),
                got: other.s.dim(),
            });
        }
        let n = self.n_obs + other.n_obs;
        let a = self.n_obs as f64 / n as f64;
        let b = other.n_obs as f64 / n as f64;
        Ok(SampleCovariance {
            s: &self.s.scale(a) + &other.s.scale(b),
            n_obs: n,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularizationFactors {
    pub eta: f64,
    pub mu: f64,
}

impl RegularizationFactors {
    pub fn new(eta: f64, mu: f64) -> Result<Self> {
        check_factor(eta)?;
        check_factor(mu)?;
        Ok(RegularizationFactors { eta, mu })
    }
}

fn check_factor(f: f64) -> Result<()> {
    if (0.0..=1.0).contains(&f) {
        Ok(())
    } else {
        Err(Error::InvalidParams(format!("regularization factor {f} outside [0, 1]")))
    }
}

/// `factor * S + (1 - factor) * diag(S)`. The diagonal is copied unchanged.
pub fn shrink(s: &HermitianMatrix, factor: f64) -> Result<HermitianMatrix> {
    check_factor(factor)?;
    let dim = s.dim();
    Ok(HermitianMatrix::from_upper_fn(dim, |r, c| {
        if r == c {
            s.get(r, c)
        } else {
            s.get(r, c) * factor
        }
    }))
}

pub fn estimate_q(regular_obs: &[CVector], eta: f64) -> Result<HermitianMatrix> {
    check_factor(eta)?;
    shrink(&SampleCovariance::from_observations(regular_obs)?.s, eta)
}

/// Clean sample covariance with the known noise variance removed from the diagonal.
pub fn debiased_clean_sample(clean: &SampleCovariance, params: &SystemParams) -> HermitianMatrix {
    let mut s = clean.s.clone();
    s.add_to_diagonal(-1.0 / params.rho_tr);
    s
}

pub fn estimate_r_direct(clean_obs: &[CVector], mu: f64, params: &SystemParams) -> Result<HermitianMatrix> {
    check_factor(mu)?;
    let clean = SampleCovariance::from_observations(clean_obs)?;
    shrink(&debiased_clean_sample(&clean, params), mu)
}

/// Difference of the regular and contaminants-only sample covariances.
pub fn via_q_sample(q_sample: &SampleCovariance, qminus_sample: &SampleCovariance) -> Result<HermitianMatrix> {
    if q_sample.s.dim() != qminus_sample.s.dim() {
        return Err(Error::DimensionMismatch {
            expected: q_sample.s.dim(),
            got: qminus_sample.s.dim(),
        });
    }
    Ok(&q_sample.s - &qminus_sample.s)
}

pub fn estimate_r_via_q(
    q_sample: &SampleCovariance,
    qminus_sample: &SampleCovariance,
    mu: f64,
) -> Result<HermitianMatrix> {
    shrink(&via_q_sample(q_sample, qminus_sample)?, mu)
}

/// Exact-distribution samplers for the three observation kinds of one UE.
#[derive(Debug, Clone)]
pub struct UeSamplers {
    regular: GaussianSampler,
    contaminants: GaussianSampler,
    clean: GaussianSampler,
}

impl UeSamplers {
    pub fn new(covset: &CovarianceSet, j: usize, k: usize) -> Result<Self> {
        Ok(UeSamplers {
            regular: GaussianSampler::new(covset.try_q(j, k)?)?,
            contaminants: GaussianSampler::new(&covset.contaminants_covariance(j, k))?,
            clean: GaussianSampler::new(&covset.clean_covariance(j, k))?,
        })
    }
}

/// Observation budget of one covariance-estimation round.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SamplingContext {
    /// Regular observations for `Q`.
    pub n_q: usize,
    /// Extra pilots per UE for `R`.
    pub n_r: usize,
}

/// Sample covariances from one round of observations. The regular,
/// contaminants and clean observations come from distinct coherence blocks.
#[derive(Debug, Clone)]
pub struct CovarianceSamples {
    pub regular: SampleCovariance,
    pub contaminants: SampleCovariance,
    pub clean: SampleCovariance,
}

impl CovarianceSamples {
    pub fn draw<R: rand::Rng + ?Sized>(samplers: &UeSamplers, ctx: SamplingContext, rng: &mut R) -> Result<Self> {
        Ok(CovarianceSamples {
            regular: SampleCovariance::draw(&samplers.regular, ctx.n_q, rng)?,
            contaminants: SampleCovariance::draw(&samplers.contaminants, ctx.n_r, rng)?,
            clean: SampleCovariance::draw(&samplers.clean, ctx.n_r, rng)?,
        })
    }

    /// Unregularized `R` estimate of a scheme.
    pub fn r_sample(&self, scheme: Scheme, params: &SystemParams) -> Result<HermitianMatrix> {
        match scheme {
            Scheme::ViaQ => via_q_sample(&self.regular, &self.contaminants),
            Scheme::RDirect => Ok(debiased_clean_sample(&self.clean, params)),
        }
    }

    /// Regularized `(R_hat, Q_hat)` pair.
    pub fn estimates(
        &self,
        scheme: Scheme,
        factors: RegularizationFactors,
        params: &SystemParams,
    ) -> Result<(HermitianMatrix, HermitianMatrix)> {
        let r = shrink(&self.r_sample(scheme, params)?, factors.mu)?;
        let q = shrink(&self.regular.s, factors.eta)?;
        Ok((r, q))
    }
}

/// Grid of factors `0, step, 2 step, ..., 1`.
pub fn factor_grid(step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::InvalidParams(format!("grid step {step} must lie in (0, 1]")));
    }
    let n = (1.0 / step).round() as usize;
    if ((n as f64) * step - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParams(format!("grid step {step} does not divide [0, 1]")));
    }
    Ok((0..=n).map(|i| if i == n { 1.0 } else { i as f64 * step }).collect())
}

/// Per-realization quantities that make the MSE of `shrink(R_s, mu) shrink(Q_s, eta)^-1`
/// a quadratic in `mu` for each `eta`.
///
/// With `R_hat(mu) = D + mu O` (`D` the diagonal of `R_s`, `O` the rest),
/// `P = Q_hat(eta)^-1` and `G = P Q P`:
///
/// ```text
/// MSE = tr R - 2 Re tr(P R R_hat) + tr(G R_hat^2)
///     = c0 + c1 mu + c2 mu^2
/// ```
struct QuadraticMseTerms {
    diag: Vec<f64>,
    rd: CMatrix,
    ro: CMatrix,
    dopod: CMatrix,
    oo: CMatrix,
}

impl QuadraticMseTerms {
    fn new(r_true: &HermitianMatrix, r_sample: &HermitianMatrix) -> Self {
        let diag = r_sample.diagonal();
        let o = r_sample.off_diagonal_part().into_matrix();
        let r = r_true.as_matrix();
        let mut rd = r.clone();
        for (c, &d) in diag.iter().enumerate() {
            rd.column_mut(c).scale_mut(d);
        }
        let ro = r * &o;
        let dopod = CMatrix::from_fn(o.nrows(), o.ncols(), |i, j| o[(i, j)] * (diag[i] + diag[j]));
        let oo = &o * &o;
        QuadraticMseTerms { diag, rd, ro, dopod, oo }
    }

    fn coefficients(&self, tr_r: f64, p: &CMatrix, g: &CMatrix) -> [f64; 3] {
        let gd2: f64 = self.diag.iter().enumerate().map(|(i, d)| g[(i, i)].re * d * d).sum();
        let c0 = tr_r - 2.0 * trace_of_product(p, &self.rd).re + gd2;
        let c1 = -2.0 * trace_of_product(p, &self.ro).re + trace_of_product(g, &self.dopod).re;
        let c2 = trace_of_product(g, &self.oo).re;
        [c0, c1, c2]
    }
}

/// Result of the grid search for one scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FactorChoice {
    pub factors: RegularizationFactors,
    /// Average closed-form MSE at the chosen factors.
    pub mse: f64,
}

/// Genie-aided search over `(eta, mu)` for both schemes at once.
///
/// For each grid pair, the MSE of the resulting approximate-MMSE filter
/// against the true `R` and `Q` is averaged over `n_avg` independent
/// covariance-estimation rounds drawn from `key.with(round)`. Pairs whose
/// `Q_hat` is numerically singular in any round are excluded. Ties go to the
/// smaller `eta`, then the smaller `mu`.
#[allow(clippy::too_many_arguments)]
pub fn optimize_factors_all(
    r_true: &HermitianMatrix,
    q_true: &HermitianMatrix,
    samplers: &UeSamplers,
    ctx: SamplingContext,
    n_avg: usize,
    grid_step: f64,
    params: &SystemParams,
    seed: u64,
    key: StreamKey,
) -> Result<[(Scheme, FactorChoice); 2]> {
    if n_avg == 0 {
        return Err(Error::InvalidParams("factor search needs at least one realization".into()));
    }
    let grid = factor_grid(grid_step)?;
    let tr_r = r_true.trace();

    // rounds[round][eta] = Some([coeffs for each scheme]) or None when singular.
    let rounds = map_indexed(n_avg, |round| -> Result<Vec<Option<[[f64; 3]; 2]>>> {
        let mut rng = key.with(round as u64).rng(seed);
        let samples = CovarianceSamples::draw(samplers, ctx, &mut rng)?;
        let terms: Vec<QuadraticMseTerms> = Scheme::ALL
            .iter()
            .map(|&s| Ok(QuadraticMseTerms::new(r_true, &samples.r_sample(s, params)?)))
            .collect::<Result<_>>()?;
        grid.iter()
            .map(|&eta| {
                let q_hat = shrink(&samples.regular.s, eta)?;
                let chol = match q_hat.cholesky() {
                    Ok(c) => c,
                    Err(Error::Singular { .. }) => return Ok(None),
                    Err(e) => return Err(e),
                };
                let p = chol.inverse().into_matrix();
                let g = &p * q_true.as_matrix() * &p;
                Ok(Some([terms[0].coefficients(tr_r, &p, &g), terms[1].coefficients(tr_r, &p, &g)]))
            })
            .collect()
    });
    let rounds: Vec<_> = rounds.into_iter().collect::<Result<_>>()?;

    let mut out = Vec::with_capacity(2);
    for (si, &scheme) in Scheme::ALL.iter().enumerate() {
        let mut best: Option<FactorChoice> = None;
        for (ei, &eta) in grid.iter().enumerate() {
            let mut sum = [0.0; 3];
            let mut valid = true;
            for round in &rounds {
                match round[ei] {
                    Some(c) => {
                        for (acc, v) in sum.iter_mut().zip(c[si]) {
                            *acc += v;
                        }
                    }
                    None => valid = false,
                }
            }
            if !valid {
                continue;
            }
            for &mu in &grid {
                let mse = (sum[0] + mu * sum[1] + mu * mu * sum[2]) / n_avg as f64;
                if best.is_none_or(|b| mse < b.mse) {
                    best = Some(FactorChoice {
                        factors: RegularizationFactors { eta, mu },
                        mse,
                    });
                }
            }
        }
        let best = best.ok_or_else(|| Error::Singular {
            condition: f64::INFINITY,
            context: format!("every eta on the grid gives a singular Q_hat (N_Q={})", ctx.n_q),
        })?;
        out.push((scheme, best));
    }
    Ok([out[0], out[1]])
}

/// Optimal factors for a single scheme; see [`optimize_factors_all`].
#[allow(clippy::too_many_arguments)]
pub fn optimize_factors(
    scheme: Scheme,
    r_true: &HermitianMatrix,
    q_true: &HermitianMatrix,
    samplers: &UeSamplers,
    ctx: SamplingContext,
    n_avg: usize,
    grid_step: f64,
    params: &SystemParams,
    seed: u64,
    key: StreamKey,
) -> Result<FactorChoice> {
    let all = optimize_factors_all(r_true, q_true, samplers, ctx, n_avg, grid_step, params, seed, key)?;
    Ok(all.iter().find(|(s, _)| *s == scheme).expect("both schemes searched").1)
}
