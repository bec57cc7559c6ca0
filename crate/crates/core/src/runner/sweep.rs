//! NMSE and sum-SE sweeps over the number of extra pilots `N_R`.
//!
//! For every sweep point the regularization factors are searched once per
//! center-cell UE. Each outer realization then draws fresh sample
//! covariances, builds approximate-MMSE filters with those factors and
//! evaluates them against the true statistics. MMSE and LS do not depend on
//! `N_R` and are evaluated once.

use crate::chanest::{approx_mmse_filter, mmse_filter, normalized_mse, ApproxMeta, FilterMatrix};
use crate::covest::{optimize_factors_all, CovarianceSamples, FactorChoice, SamplingContext, Scheme, UeSamplers};
use crate::parallel::{map_indexed, try_map_indexed};
use crate::rng::{Stream, StreamKey};
use crate::scenario::{build_scenario, CovarianceSet};
use crate::se::{mrc_sinr_closed_form, perfect_cov_se_baseline, uatf_se, uatf_sinr_monte_carlo_cell, CellModel, CombinerKind};
use crate::Result;

use super::config::ExperimentConfig;
use super::output::{Combiner, Estimator, Experiment, ResultRow};

/// Serving cell evaluated in every experiment.
pub const CENTER: usize = 0;

/// Rows of both sweeps from one shared set of factor searches and draws.
#[derive(Debug, Clone, Default)]
pub struct SweepOutput {
    pub nmse: Vec<ResultRow>,
    pub sum_se: Vec<ResultRow>,
}

#[derive(Debug, Clone, Copy)]
struct Wanted {
    nmse: bool,
    se: bool,
}

pub fn run_mse_sweep(config: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    Ok(run(config, Wanted { nmse: true, se: false })?.nmse)
}

pub fn run_se_sweep(config: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    Ok(run(config, Wanted { nmse: false, se: true })?.sum_se)
}

pub fn run_sweeps(config: &ExperimentConfig) -> Result<SweepOutput> {
    run(config, Wanted { nmse: true, se: true })
}

/// Sample mean and its standard error.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn scheme_estimator(scheme: Scheme) -> Estimator {
    match scheme {
        Scheme::ViaQ => Estimator::ApproxViaQ,
        Scheme::RDirect => Estimator::ApproxRDirect,
    }
}

fn combiner_label(kind: CombinerKind) -> Combiner {
    match kind {
        CombinerKind::Mrc => Combiner::Mrc,
        CombinerKind::Rzf => Combiner::Rzf,
    }
}

const COMBINERS: [CombinerKind; 2] = [CombinerKind::Mrc, CombinerKind::Rzf];

/// Monte-Carlo stream shared by every estimator at a given outer index, so
/// that comparisons between estimators use common random numbers.
fn block_key(outer: usize) -> StreamKey {
    StreamKey::new(Stream::MonteCarloBlock).with(outer as u64)
}

struct Context<'a> {
    config: &'a ExperimentConfig,
    cov: &'a CovarianceSet,
    model: CellModel<'a>,
    samplers: Vec<UeSamplers>,
}

impl Context<'_> {
    fn k(&self) -> usize {
        self.config.scenario.k
    }

    fn sampling(&self, n_r: usize) -> SamplingContext {
        SamplingContext {
            n_q: self.config.nq_multiplier * n_r,
            n_r,
        }
    }

    /// Sum over UEs of the UatF SE for the given filters.
    fn sum_se(&self, kind: CombinerKind, filters: &[FilterMatrix], n_r: usize, outer: usize) -> Result<f64> {
        let p = &self.config.scenario;
        let gammas = match kind {
            CombinerKind::Mrc => filters
                .iter()
                .enumerate()
                .map(|(k, w)| Ok(mrc_sinr_closed_form(w, self.cov, CENTER, k, p.rho_ul)?.1))
                .collect::<Result<Vec<_>>>()?,
            CombinerKind::Rzf => uatf_sinr_monte_carlo_cell(
                kind,
                filters,
                &self.model,
                p.rho_ul,
                self.config.n_blocks,
                self.config.seed,
                block_key(outer),
            )?,
        };
        Ok(gammas.iter().map(|&g| uatf_se(g, p, n_r)).sum())
    }

    fn nmse(&self, filters: &[FilterMatrix]) -> Result<f64> {
        let mut total = 0.0;
        for (k, w) in filters.iter().enumerate() {
            total += normalized_mse(w, self.cov.r(CENTER, CENTER, k), self.cov.q(CENTER, k))?;
        }
        Ok(total / filters.len() as f64)
    }
}

/// Per-outer-realization results of one sweep point, indexed by scheme.
#[derive(Debug, Clone, Copy, Default)]
struct OuterResult {
    nmse: [f64; 2],
    se: [[f64; 2]; 2],
}

fn run(config: &ExperimentConfig, wanted: Wanted) -> Result<SweepOutput> {
    config.validate()?;
    let p = &config.scenario;
    log::info!("building covariance matrices (M={}, K={}, L={})", p.m, p.k, p.l);
    let cov = build_scenario(p)?;
    let samplers = try_map_indexed(p.k, |k| UeSamplers::new(&cov, CENTER, k))?;
    let ctx = Context {
        config,
        cov: &cov,
        model: CellModel::new(&cov, CENTER)?,
        samplers,
    };

    let mmse: Vec<FilterMatrix> = (0..p.k)
        .map(|k| Ok(mmse_filter(cov.r(CENTER, CENTER, k), cov.q(CENTER, k))?.filter))
        .collect::<Result<_>>()?;
    let ls = vec![FilterMatrix::ls(p.m); p.k];

    let mut out = SweepOutput::default();
    let baseline_nmse = if wanted.nmse {
        Some((ctx.nmse(&mmse)?, ctx.nmse(&ls)?))
    } else {
        None
    };
    let baseline_se = if wanted.se {
        Some(baseline_se_rows(&ctx, &mmse, &ls)?)
    } else {
        None
    };

    for (pi, &n_r) in config.sweep.iter().enumerate() {
        log::info!("N_R={n_r} ({}/{}): searching regularization factors", pi + 1, config.sweep.len());
        let factors = point_factors(&ctx, n_r)?;
        log::info!("N_R={n_r}: evaluating {} outer realizations", config.n_outer);
        let outers = try_map_indexed(config.n_outer, |o| outer_realization(&ctx, &factors, n_r, o, wanted))?;

        let mean_factors = |si: usize| {
            let n = factors.len() as f64;
            let eta = factors.iter().map(|f| f[si].1.factors.eta).sum::<f64>() / n;
            let mu = factors.iter().map(|f| f[si].1.factors.mu).sum::<f64>() / n;
            (Some(eta), Some(mu))
        };
        let row = |experiment, estimator, combiner, (eta, mu), (value, stderr)| ResultRow {
            experiment,
            estimator,
            combiner,
            n_r,
            eta,
            mu,
            value,
            stderr,
            seed: config.seed,
        };

        if let Some((mmse_v, ls_v)) = baseline_nmse {
            out.nmse.push(row(Experiment::Nmse, Estimator::Mmse, Combiner::None, (None, None), (mmse_v, 0.0)));
            out.nmse.push(row(Experiment::Nmse, Estimator::Ls, Combiner::None, (None, None), (ls_v, 0.0)));
            for (si, &scheme) in Scheme::ALL.iter().enumerate() {
                let values: Vec<f64> = outers.iter().map(|o| o.nmse[si]).collect();
                out.nmse.push(row(
                    Experiment::Nmse,
                    scheme_estimator(scheme),
                    Combiner::None,
                    mean_factors(si),
                    mean_stderr(&values),
                ));
            }
        }
        if let Some(base) = &baseline_se {
            let (fixed, instantaneous) = base;
            for (estimator, values) in fixed {
                for (ci, &kind) in COMBINERS.iter().enumerate() {
                    out.sum_se.push(row(
                        Experiment::SumSe,
                        estimator.clone(),
                        combiner_label(kind),
                        (None, None),
                        values[ci],
                    ));
                }
            }
            for (si, &scheme) in Scheme::ALL.iter().enumerate() {
                for (ci, &kind) in COMBINERS.iter().enumerate() {
                    let values: Vec<f64> = outers.iter().map(|o| o.se[si][ci]).collect();
                    out.sum_se.push(row(
                        Experiment::SumSe,
                        scheme_estimator(scheme),
                        combiner_label(kind),
                        mean_factors(si),
                        mean_stderr(&values),
                    ));
                }
            }
            for (ci, &kind) in COMBINERS.iter().enumerate() {
                out.sum_se.push(row(
                    Experiment::SumSe,
                    Estimator::MmseInstantaneous,
                    combiner_label(kind),
                    (None, None),
                    instantaneous[ci],
                ));
            }
        }
    }
    Ok(out)
}

type BaselineSe = (Vec<(Estimator, [(f64, f64); 2])>, [(f64, f64); 2]);

/// Sum SE of MMSE and LS (no extra pilots charged), plus the
/// instantaneous-SINR MMSE reference. MRC is exact; Monte-Carlo results are
/// replicated `n_outer` times to report a standard error.
fn baseline_se_rows(ctx: &Context<'_>, mmse: &[FilterMatrix], ls: &[FilterMatrix]) -> Result<BaselineSe> {
    let config = ctx.config;
    let p = &config.scenario;
    log::info!("evaluating MMSE and LS baselines");
    let mut fixed = Vec::new();
    for (estimator, filters) in [(Estimator::Mmse, mmse), (Estimator::Ls, ls)] {
        let mrc = ctx.sum_se(CombinerKind::Mrc, filters, 0, 0)?;
        let rzf = try_map_indexed(config.n_outer, |o| ctx.sum_se(CombinerKind::Rzf, filters, 0, o))?;
        fixed.push((estimator, [(mrc, 0.0), mean_stderr(&rzf)]));
    }
    let mut instantaneous = [(0.0, 0.0); 2];
    for (ci, &kind) in COMBINERS.iter().enumerate() {
        let reps = try_map_indexed(config.n_outer, |o| -> Result<f64> {
            let per_ue = perfect_cov_se_baseline(&ctx.model, kind, p.rho_ul, config.n_blocks, config.seed, block_key(o))?;
            Ok(per_ue.iter().sum())
        })?;
        instantaneous[ci] = mean_stderr(&reps);
    }
    Ok((fixed, instantaneous))
}

/// Factor search for every center-cell UE at one sweep point.
fn point_factors(ctx: &Context<'_>, n_r: usize) -> Result<Vec<[(Scheme, FactorChoice); 2]>> {
    let config = ctx.config;
    let results = map_indexed(ctx.k(), |k| {
        let key = StreamKey::new(Stream::FactorSearch).with(n_r as u64).with(k as u64);
        optimize_factors_all(
            ctx.cov.r(CENTER, CENTER, k),
            ctx.cov.q(CENTER, k),
            &ctx.samplers[k],
            ctx.sampling(n_r),
            config.n_avg,
            config.grid_step,
            &config.scenario,
            config.seed,
            key,
        )
        .map_err(|e| e.context(format!("factor search at N_R={n_r}, UE {k}")))
    });
    results.into_iter().collect()
}

fn outer_realization(
    ctx: &Context<'_>,
    factors: &[[(Scheme, FactorChoice); 2]],
    n_r: usize,
    outer: usize,
    wanted: Wanted,
) -> Result<OuterResult> {
    let p = &ctx.config.scenario;
    let sampling = ctx.sampling(n_r);
    // filters[scheme][ue]
    let mut filters: [Vec<FilterMatrix>; 2] = [Vec::with_capacity(p.k), Vec::with_capacity(p.k)];
    for k in 0..p.k {
        let mut rng = StreamKey::new(Stream::OuterRealization)
            .with(n_r as u64)
            .with(outer as u64)
            .with(k as u64)
            .rng(ctx.config.seed);
        let samples = CovarianceSamples::draw(&ctx.samplers[k], sampling, &mut rng)?;
        for (si, (scheme, choice)) in factors[k].iter().enumerate() {
            let f = choice.factors;
            let w = samples
                .estimates(*scheme, f, p)
                .and_then(|(r_hat, q_hat)| {
                    approx_mmse_filter(
                        &r_hat,
                        &q_hat,
                        ApproxMeta {
                            eta: f.eta,
                            mu: f.mu,
                            scheme: *scheme,
                            n_q: sampling.n_q,
                        },
                    )
                })
                .map_err(|e| {
                    e.context(format!(
                        "N_R={n_r}, estimator={}, outer={outer}, UE {k}",
                        scheme_estimator(*scheme)
                    ))
                })?;
            filters[si].push(w);
        }
    }

    let mut result = OuterResult::default();
    for si in 0..2 {
        let label = |e: crate::Error| {
            e.context(format!(
                "N_R={n_r}, estimator={}, outer={outer}",
                scheme_estimator(Scheme::ALL[si])
            ))
        };
        if wanted.nmse {
            result.nmse[si] = ctx.nmse(&filters[si]).map_err(label)?;
        }
        if wanted.se {
            for (ci, &kind) in COMBINERS.iter().enumerate() {
                result.se[si][ci] = ctx.sum_se(kind, &filters[si], n_r, outer).map_err(label)?;
            }
        }
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::SystemParams;

    fn tiny() -> ExperimentConfig {
        ExperimentConfig {
            scenario: SystemParams {
                m: 8,
                k: 2,
                l: 3,
                ..SystemParams::default()
            },
            sweep: vec![5, 20],
            n_outer: 3,
            n_blocks: 100,
            n_avg: 2,
            grid_step: 0.25,
            seed: 11,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn mean_stderr_basics() {
        assert_eq!(mean_stderr(&[2.0]), (2.0, 0.0));
        let (m, s) = mean_stderr(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn row_counts_and_order() {
        let c = tiny();
        let out = run_sweeps(&c).unwrap();
        assert_eq!(out.nmse.len(), 4 * c.sweep.len());
        // (mmse, ls, viaq, rdirect) x (mrc, rzf) + instantaneous x (mrc, rzf)
        assert_eq!(out.sum_se.len(), 10 * c.sweep.len());
        let names: Vec<String> = out.nmse[..4].iter().map(|r| r.estimator.to_string()).collect();
        assert_eq!(names, ["mmse", "ls", "approx_viaq", "approx_rdirect"]);
        assert!(out.nmse.iter().all(|r| r.value.is_finite() && r.stderr >= 0.0));
        assert!(out.sum_se.iter().all(|r| r.value.is_finite() && r.stderr >= 0.0));
        // Constants replicated across the sweep.
        assert_eq!(out.nmse[0].value, out.nmse[4].value);
        assert_eq!(out.nmse[1].value, out.nmse[5].value);
        assert!(out.nmse[0].eta.is_none() && out.nmse[2].eta.is_some());
    }

    #[test]
    fn separate_runs_match_combined() {
        let c = tiny();
        let both = run_sweeps(&c).unwrap();
        assert_eq!(run_mse_sweep(&c).unwrap(), both.nmse);
        assert_eq!(run_se_sweep(&c).unwrap(), both.sum_se);
    }

    #[test]
    fn prelog_accounting() {
        let c = tiny();
        let p = &c.scenario;
        let cov = build_scenario(p).unwrap();
        let rows = run_se_sweep(&c).unwrap();
        let mut expected = 0.0;
        for k in 0..p.k {
            let w = mmse_filter(cov.r(0, 0, k), cov.q(0, k)).unwrap().filter;
            let g = mrc_sinr_closed_form(&w, &cov, 0, k, p.rho_ul).unwrap().1;
            expected += (1.0 - p.k as f64 / p.tau_c as f64) * (1.0 + g).log2();
        }
        let mmse_mrc = &rows[0];
        assert_eq!((mmse_mrc.estimator.clone(), mmse_mrc.combiner), (Estimator::Mmse, Combiner::Mrc));
        assert!((mmse_mrc.value - expected).abs() <= 1e-12 * expected);
    }

    #[test]
    fn empty_sweep_rejected() {
        let c = ExperimentConfig {
            sweep: vec![],
            ..tiny()
        };
        assert!(run_mse_sweep(&c).is_err());
    }
}
