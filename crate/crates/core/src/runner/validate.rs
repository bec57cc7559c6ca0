//! Brute-force checks of the closed-form expressions at small scale.
//!
//! Each oracle yields one row whose `value` is the observed discrepancy and
//! whose `stderr` column holds the pass threshold. Relative errors are used
//! for deterministic comparisons and for Monte-Carlo comparisons with a
//! fixed relative budget; moment checks report the largest z-score.

use crate::chanest::{analytic_mse, mmse_filter, FilterKind, FilterMatrix};
use crate::channels::{standard_complex_normal, standard_complex_normal_vector, GaussianSampler};
use crate::covest::shrink;
use crate::linalg::{c64, trace_of_product, CMatrix, HermitianMatrix};
use crate::parallel::{map_indexed, try_map_indexed};
use crate::rng::{substream, SimRng, Stream, StreamKey};
use crate::scenario::{build_scenario, CovarianceSet, SystemParams};
use crate::se::{mrc_moments, mrc_sinr_closed_form, mrc_sinr_from_moments, uatf_sinr_monte_carlo, CellModel, CombinerSpec};
use crate::Result;

use super::config::ExperimentConfig;
use super::output::{Combiner, Estimator, Experiment, ResultRow};

/// Monte-Carlo effort of the oracles.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ValidationScale {
    pub draws: usize,
    pub blocks: usize,
}

impl ValidationScale {
    pub const FULL: ValidationScale = ValidationScale {
        draws: 1_000_000,
        blocks: 200_000,
    };
    pub const QUICK: ValidationScale = ValidationScale {
        draws: 100_000,
        blocks: 20_000,
    };

    /// Relative Monte-Carlo tolerances widen as `1/sqrt(n)` below full scale.
    fn widen(&self, tol: f64, n: usize, full: usize) -> f64 {
        if n >= full {
            tol
        } else {
            tol * (full as f64 / n as f64).sqrt()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleOutcome {
    pub name: &'static str,
    pub combiner: Combiner,
    pub error: f64,
    pub tolerance: f64,
}

impl OracleOutcome {
    pub fn passed(&self) -> bool {
        self.error.is_finite() && self.error <= self.tolerance
    }
}

const DRAWS_PER_CHUNK: usize = 10_000;

/// Mean and standard error of each component of `f` over `n` draws.
pub fn monte_carlo_moments<F>(n: usize, seed: u64, key: StreamKey, dim: usize, f: F) -> Vec<(f64, f64)>
where
    F: Fn(&mut SimRng, &mut [f64]) + Sync + Send,
{
    let chunks = n.div_ceil(DRAWS_PER_CHUNK);
    let partial = map_indexed(chunks, |c| {
        let mut rng = key.with(c as u64).rng(seed);
        let mut sum = vec![0.0; dim];
        let mut sq = vec![0.0; dim];
        let mut x = vec![0.0; dim];
        for _ in 0..DRAWS_PER_CHUNK.min(n - c * DRAWS_PER_CHUNK) {
            f(&mut rng, &mut x);
            for d in 0..dim {
                sum[d] += x[d];
                sq[d] += x[d] * x[d];
            }
        }
        (sum, sq)
    });
    let nf = n as f64;
    (0..dim)
        .map(|d| {
            let s: f64 = partial.iter().map(|p| p.0[d]).sum();
            let q: f64 = partial.iter().map(|p| p.1[d]).sum();
            let mean = s / nf;
            let var = ((q - nf * mean * mean) / (nf - 1.0)).max(0.0);
            (mean, (var / nf).sqrt())
        })
        .collect()
}

/// `G G^H / m` with i.i.d. `CN(0, 1)` entries; positive definite almost surely.
pub fn random_psd(m: usize, rng: &mut SimRng) -> HermitianMatrix {
    let g = CMatrix::from_fn(m, m, |_, _| standard_complex_normal(rng));
    HermitianMatrix::hermitian_part(&(&g * g.adjoint() / c64::new(m as f64, 0.0))).expect("square")
}

pub fn random_filter(m: usize, rng: &mut SimRng) -> FilterMatrix {
    FilterMatrix {
        w: CMatrix::from_fn(m, m, |_, _| standard_complex_normal(rng) / c64::new(m as f64, 0.0).sqrt()),
        kind: FilterKind::Ls,
    }
}

/// Scenario used by the small-scale oracles.
pub fn small_params(base: &SystemParams) -> SystemParams {
    SystemParams {
        m: 8,
        k: 2,
        l: 2,
        ..base.clone()
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

/// Analytic MSE of random `(W, R, Q)` against `||h - W y||^2` averaged over draws.
pub fn mse_formula_oracle(seed: u64, scale: ValidationScale) -> Result<OracleOutcome> {
    let errors = try_map_indexed(10, |inst| -> Result<f64> {
        let mut rng = substream(seed, Stream::Validation, &[1, inst as u64]);
        let m = 8;
        let r = random_psd(m, &mut rng);
        let extra = &random_psd(m, &mut rng) + &HermitianMatrix::scaled_identity(m, 0.5);
        let q = &r + &extra;
        let w = random_filter(m, &mut rng);
        let (hs, es) = (GaussianSampler::new(&r)?, GaussianSampler::new(&extra)?);
        let key = StreamKey::new(Stream::Validation).with(2).with(inst as u64);
        let mc = monte_carlo_moments(scale.draws, seed, key, 1, |rng, x| {
            let h = hs.sample(rng);
            let y = &h + es.sample(rng);
            x[0] = (&h - &w.w * &y).norm_squared();
        });
        Ok(rel(mc[0].0, analytic_mse(&w, &r, &q)?))
    })?;
    Ok(OracleOutcome {
        name: "mse_formula",
        combiner: Combiner::None,
        error: errors.into_iter().fold(0.0, f64::max),
        tolerance: scale.widen(0.01, scale.draws, ValidationScale::FULL.draws),
    })
}

/// Closed-form MRC moments and the fourth-moment identity against Monte Carlo.
/// Reports the largest z-score.
pub fn mrc_moment_oracle(cov: &CovarianceSet, seed: u64, scale: ValidationScale) -> Result<OracleOutcome> {
    let p = cov.params();
    let (j, k, other) = (0, 0, 1);
    let mut rng = substream(seed, Stream::Validation, &[3]);
    let w = random_filter(p.m, &mut rng);
    let model = crate::channels::ChannelSamplers::new(cov, j)?;
    let noise = c64::new(1.0 / p.rho_tr.sqrt(), 0.0);

    // Components: Re gain, Im gain, norm, power (j,k), power (other cell, same pilot),
    // power (other cell, other pilot).
    let key = StreamKey::new(Stream::Validation).with(4);
    let mc = monte_carlo_moments(scale.draws, seed, key, 6, |rng, x| {
        let draw = model.draw(rng);
        let mut y = standard_complex_normal_vector(p.m, rng) * noise;
        for l in 0..p.l {
            y += draw.h(l, k);
        }
        let v = &w.w * y;
        let g = v.dotc(draw.h(j, k));
        x[0] = g.re;
        x[1] = g.im;
        x[2] = v.norm_squared();
        x[3] = g.norm_sqr();
        x[4] = v.dotc(draw.h(other, k)).norm_sqr();
        x[5] = v.dotc(draw.h(other, other)).norm_sqr();
    });
    let own = mrc_moments(&w, cov, j, k, j, k)?;
    let same_pilot = mrc_moments(&w, cov, j, k, other, k)?;
    let other_pilot = mrc_moments(&w, cov, j, k, other, other)?;
    let expected = [
        own.gain.re,
        own.gain.im,
        own.norm,
        own.power,
        same_pilot.power,
        other_pilot.power,
    ];

    // Fourth moment of a Gaussian quadratic form.
    let r = random_psd(p.m, &mut rng);
    let wq = random_filter(p.m, &mut rng).w;
    let sampler = GaussianSampler::new(&r)?;
    let fourth = monte_carlo_moments(scale.draws, seed, key.with(1), 1, |rng, x| {
        let h = sampler.sample(rng);
        x[0] = h.dotc(&(&wq * &h)).norm_sqr();
    });
    let wr = &wq * r.as_matrix();
    let fourth_expected = trace_of_product(&wq, r.as_matrix()).norm_sqr() + trace_of_product(&wr, &(wq.adjoint() * r.as_matrix())).re;

    let z = |(mean, se): (f64, f64), exact: f64| (mean - exact).abs() / se.max(f64::MIN_POSITIVE);
    let worst = mc
        .iter()
        .zip(expected)
        .map(|(&m, e)| z(m, e))
        .chain(std::iter::once(z(fourth[0], fourth_expected)))
        .fold(0.0, f64::max);
    Ok(OracleOutcome {
        name: "mrc_moments",
        combiner: Combiner::Mrc,
        error: worst,
        tolerance: 3.0,
    })
}

/// Closed-form MRC SINR against the Monte-Carlo UatF estimate.
pub fn mrc_sinr_oracle(cov: &CovarianceSet, seed: u64, scale: ValidationScale) -> Result<OracleOutcome> {
    let p = cov.params();
    let w = mmse_filter(cov.r(0, 0, 0), cov.q(0, 0))?.filter;
    let exact = mrc_sinr_closed_form(&w, cov, 0, 0, p.rho_ul)?.1;
    let model = CellModel::new(cov, 0)?;
    let key = StreamKey::new(Stream::Validation).with(5);
    let mc = uatf_sinr_monte_carlo(&CombinerSpec::Mrc(w), &model, 0, p.rho_ul, scale.blocks, seed, key)?;
    Ok(OracleOutcome {
        name: "mrc_sinr",
        combiner: Combiner::Mrc,
        error: rel(mc, exact),
        tolerance: scale.widen(0.02, scale.blocks, ValidationScale::FULL.blocks),
    })
}

/// Exact identities: MMSE error, shrinkage endpoints, `Q` assembly and the
/// two assembly paths of the closed-form SINR.
pub fn identity_oracles(cov: &CovarianceSet, seed: u64) -> Result<Vec<OracleOutcome>> {
    let p = cov.params();
    let mut mmse_err: f64 = 0.0;
    let mut sinr_err: f64 = 0.0;
    for k in 0..p.k {
        let (r, q) = (cov.r(0, 0, k), cov.q(0, k));
        let m = mmse_filter(r, q)?;
        mmse_err = mmse_err.max(rel(analytic_mse(&m.filter, r, q)?, (r - &m.phi).trace()));
        let a = mrc_sinr_closed_form(&m.filter, cov, 0, k, p.rho_ul)?.1;
        let b = mrc_sinr_from_moments(&m.filter, cov, 0, k, p.rho_ul)?;
        sinr_err = sinr_err.max(rel(b, a));
    }

    let mut rng = substream(seed, Stream::Validation, &[6]);
    let s = random_psd(p.m, &mut rng);
    let full = shrink(&s, 1.0)?;
    let none = shrink(&s, 0.0)?;
    let shrink_err = (full.as_matrix() - s.as_matrix())
        .iter()
        .chain((none.as_matrix() - s.diagonal_part().as_matrix()).iter())
        .map(|z| z.norm())
        .fold(0.0, f64::max);

    let mut q_err: f64 = 0.0;
    for j in 0..p.l {
        for k in 0..p.k {
            let mut sum = HermitianMatrix::scaled_identity(p.m, 1.0 / p.rho_tr);
            for l in 0..p.l {
                sum += cov.r(j, l, k);
            }
            let q = cov.q(j, k);
            q_err = q_err.max((q.as_matrix() - sum.as_matrix()).iter().map(|z| z.norm()).fold(0.0, f64::max) / q.max_abs());
        }
    }
    Ok(vec![
        OracleOutcome {
            name: "mmse_identity",
            combiner: Combiner::None,
            error: mmse_err,
            tolerance: 1e-10,
        },
        OracleOutcome {
            name: "shrink_endpoints",
            combiner: Combiner::None,
            error: shrink_err,
            tolerance: 0.0,
        },
        OracleOutcome {
            name: "q_assembly",
            combiner: Combiner::None,
            error: q_err,
            tolerance: 1e-12,
        },
        OracleOutcome {
            name: "sinr_assembly",
            combiner: Combiner::Mrc,
            error: sinr_err,
            tolerance: 1e-12,
        },
    ])
}

pub fn run_validation(config: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    run_validation_with(config, ValidationScale::FULL)
}

pub fn run_validation_with(config: &ExperimentConfig, scale: ValidationScale) -> Result<Vec<ResultRow>> {
    config.validate()?;
    let params = small_params(&config.scenario);
    let cov = build_scenario(&params)?;
    let seed = config.seed;
    let mut outcomes = identity_oracles(&cov, seed)?;
    log::info!("running Monte-Carlo oracles ({} draws, {} blocks)", scale.draws, scale.blocks);
    outcomes.push(mse_formula_oracle(seed, scale)?);
    outcomes.push(mrc_moment_oracle(&cov, seed, scale)?);
    outcomes.push(mrc_sinr_oracle(&cov, seed, scale)?);
    for o in &outcomes {
        let status = if o.passed() { "pass" } else { "FAIL" };
        log::info!("{status} {}: {:.3e} (threshold {:.3e})", o.name, o.error, o.tolerance);
    }
    Ok(outcomes
        .into_iter()
        .map(|o| ResultRow {
            experiment: Experiment::Validate,
            estimator: Estimator::Oracle(o.name),
            combiner: o.combiner,
            n_r: 0,
            eta: None,
            mu: None,
            value: o.error,
            stderr: o.tolerance,
            seed,
        })
        .collect())
}

/// True when every validation row is within its threshold.
pub fn validation_passed(rows: &[ResultRow]) -> bool {
    rows.iter()
        .filter(|r| r.experiment == Experiment::Validate)
        .all(|r| r.value.is_finite() && r.value <= r.stderr)
}
