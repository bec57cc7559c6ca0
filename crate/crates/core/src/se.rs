//! Uplink spectral efficiency.
//!
//! The use-and-then-forget (UatF) bound treats the average effective gain
//! `E{v^H h}` as known and everything else as uncorrelated noise:
//!
//! ```text
//! gamma = |E{v^H h_jjk}|^2 / ( sum_{l,i} E{|v^H h_jli|^2} - |E{v^H h_jjk}|^2 + E{||v||^2} / rho )
//! SE    = (1 - K/tau_c - alpha) log2(1 + gamma)
//! ```
//!
//! For MRC `v = W y` with a deterministic `W` every expectation has a closed
//! form (see [`mrc_moments`]). Any other combiner is evaluated by Monte Carlo
//! over fresh coherence blocks, with the estimation filters held fixed.

use crate::chanest::FilterMatrix;
use crate::channels::{standard_complex_normal_vector, ChannelDraw, ChannelSamplers};
use crate::linalg::{c64, trace_adjoint_product, trace_of_product, CMatrix, CVector, HermitianMatrix};
use crate::parallel::map_indexed;
use crate::rng::{SimRng, StreamKey};
use crate::scenario::{CovarianceSet, SystemParams};
use crate::{Error, Result};

/// Smallest Monte-Carlo run accepted by the UatF estimators.
pub const MIN_BLOCKS: usize = 100;
/// Blocks per RNG substream; fixes the work split independently of threads.
const BLOCKS_PER_CHUNK: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CombinerKind {
    Mrc,
    Rzf,
}

/// Combiner used by a UE of the serving cell.
#[derive(Debug, Clone)]
pub enum CombinerSpec {
    /// `v = W y_k` for the evaluated UE.
    Mrc(FilterMatrix),
    /// Regularized zero-forcing over the intra-cell estimates `W_i y_i`,
    /// one filter per UE of the serving cell.
    Rzf(Vec<FilterMatrix>),
}

/// Numerator and denominator terms of the closed-form MRC SINR.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinrTerms {
    /// `|tr(W^H R_jjk)|^2`
    pub signal: f64,
    /// `sum_{l,i} tr(W Q_jk W^H R_jli)`
    pub interference_sum: f64,
    /// `sum_{l != j} |tr(W^H R_jlk)|^2`
    pub coherent_contamination: f64,
    /// `tr(W Q_jk W^H) / rho_ul`
    pub noise_term: f64,
}

impl SinrTerms {
    pub fn gamma(&self) -> f64 {
        if self.signal == 0.0 {
            return 0.0;
        }
        self.signal / (self.interference_sum + self.coherent_contamination + self.noise_term)
    }
}

/// Closed-form expectations for `v = W y_jk`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MrcMoments {
    /// `E{v^H h_jjk} = tr(W^H R_jjk)`
    pub gain: c64,
    /// `E{||v||^2} = tr(W Q_jk W^H)`
    pub norm: f64,
    /// `E{|v^H h_jli|^2} = tr(W Q_jk W^H R_jli) + [i = k] |tr(W^H R_jli)|^2`
    pub power: f64,
}

fn check_indices(covset: &CovarianceSet, j: usize, l: usize, k: usize, i: usize) -> Result<()> {
    covset.try_r(j, l, i)?;
    covset.try_r(j, j, k)?;
    Ok(())
}

/// `W Q W^H`, returned as a plain matrix.
fn filtered_covariance(w: &CMatrix, q: &HermitianMatrix) -> CMatrix {
    w * q.as_matrix() * w.adjoint()
}

pub fn mrc_moments(w: &FilterMatrix, covset: &CovarianceSet, j: usize, k: usize, l: usize, i: usize) -> Result<MrcMoments> {
    check_indices(covset, j, l, k, i)?;
    let wq = filtered_covariance(&w.w, covset.q(j, k));
    let r = covset.r(j, l, i);
    let mut power = trace_of_product(&wq, r.as_matrix()).re;
    if i == k {
        power += trace_adjoint_product(&w.w, r.as_matrix()).norm_sqr();
    }
    Ok(MrcMoments {
        gain: trace_adjoint_product(&w.w, covset.r(j, j, k).as_matrix()),
        norm: trace_adjoint_product(&w.w, &(&w.w * covset.q(j, k).as_matrix())).re,
        power,
    })
}

/// Closed-form UatF SINR of MRC with a deterministic filter.
pub fn mrc_sinr_closed_form(
    w: &FilterMatrix,
    covset: &CovarianceSet,
    j: usize,
    k: usize,
    rho_ul: f64,
) -> Result<(SinrTerms, f64)> {
    check_indices(covset, j, j, k, k)?;
    let p = covset.params();
    let wq = &w.w * covset.q(j, k).as_matrix();
    let norm = trace_adjoint_product(&w.w, &wq).re;
    let wqw = &wq * w.w.adjoint();
    let interference_sum = trace_of_product(&wqw, covset.total_received_covariance(j).as_matrix()).re;
    let coherent_contamination = (0..p.l)
        .filter(|&l| l != j)
        .map(|l| trace_adjoint_product(&w.w, covset.r(j, l, k).as_matrix()).norm_sqr())
        .sum();
    let terms = SinrTerms {
        signal: trace_adjoint_product(&w.w, covset.r(j, j, k).as_matrix()).norm_sqr(),
        interference_sum,
        coherent_contamination,
        noise_term: norm / rho_ul,
    };
    Ok((terms, terms.gamma()))
}

/// Assembles the UatF SINR from expectations, clamping a negative
/// variance-like term (a finite-sample artifact) at zero.
pub fn uatf_gamma(gain: c64, total_power: f64, norm: f64, rho_ul: f64) -> f64 {
    let signal = gain.norm_sqr();
    if signal == 0.0 {
        return 0.0;
    }
    let variance = (total_power - signal).max(0.0);
    let den = variance + norm / rho_ul;
    if den <= 0.0 {
        return 0.0;
    }
    signal / den
}

/// UatF SINR of MRC assembled from the per-(l, i) moments.
pub fn mrc_sinr_from_moments(w: &FilterMatrix, covset: &CovarianceSet, j: usize, k: usize, rho_ul: f64) -> Result<f64> {
    let p = covset.params();
    let mut total = 0.0;
    let mut first = None;
    for l in 0..p.l {
        for i in 0..p.k {
            let m = mrc_moments(w, covset, j, k, l, i)?;
            total += m.power;
            first.get_or_insert(m);
        }
    }
    let m = first.expect("at least one UE");
    Ok(uatf_gamma(m.gain, total, m.norm, rho_ul))
}

/// `(1 - K/tau_c - alpha(n_r)) log2(1 + gamma)`; a negative pre-log is clamped to zero.
pub fn uatf_se(gamma: f64, params: &SystemParams, n_r: usize) -> f64 {
    let prelog = params.prelog(n_r);
    if prelog < 0.0 {
        log::warn!("pilot overhead exceeds the coherence block at N_R = {n_r}; SE clamped to 0");
        return 0.0;
    }
    prelog * (1.0 + gamma.max(0.0)).log2()
}

/// `v_k = (sum_i h_i h_i^H + I/rho)^-1 h_k` for every `k`.
///
/// Evaluated through `H (H^H H + I/rho)^-1`, which only needs a `K x K` solve.
pub fn rzf_combiner(estimates: &[CVector], rho_ul: f64) -> Vec<CVector> {
    if estimates.is_empty() {
        return Vec::new();
    }
    let h = CMatrix::from_columns(estimates);
    let v = rzf_matrix(&h, rho_ul);
    v.column_iter().map(|c| c.into_owned()).collect()
}

fn rzf_matrix(h: &CMatrix, rho_ul: f64) -> CMatrix {
    let k = h.ncols();
    let mut gram = h.adjoint() * h;
    for i in 0..k {
        gram[(i, i)] += c64::new(1.0 / rho_ul, 0.0);
    }
    let gram = HermitianMatrix::from_upper(gram).expect("square");
    // Gram + I/rho is positive definite for any rho > 0.
    match gram.cholesky() {
        Ok(chol) => h * chol.solve(&CMatrix::identity(k, k)),
        Err(_) => {
            let inv = gram.into_matrix().try_inverse().unwrap_or_else(|| CMatrix::zeros(k, k));
            h * inv
        }
    }
}

/// Running sums for the UatF expectations of one UE.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct UatfSums {
    gain: c64,
    power: f64,
    norm: f64,
}

impl UatfSums {
    fn add(&mut self, other: &UatfSums) {
        self.gain += other.gain;
        self.power += other.power;
        self.norm += other.norm;
    }

    fn gamma(&self, n_blocks: usize, rho_ul: f64) -> f64 {
        let n = n_blocks as f64;
        uatf_gamma(self.gain / n, self.power / n, self.norm / n, rho_ul)
    }

    fn record(&mut self, v: &CVector, draw: &ChannelDraw, serving: usize, ue: usize) {
        self.gain += v.dotc(draw.h(serving, ue));
        for l in 0..draw.cells() {
            for i in 0..draw.ues() {
                self.power += v.dotc(draw.h(l, i)).norm_sqr();
            }
        }
        self.norm += v.norm_squared();
    }
}

/// Channel samplers of one observing BS plus the data needed to synthesize
/// its pilot observations.
pub struct CellModel<'a> {
    pub covset: &'a CovarianceSet,
    pub j: usize,
    samplers: ChannelSamplers,
}

impl<'a> CellModel<'a> {
    pub fn new(covset: &'a CovarianceSet, j: usize) -> Result<Self> {
        Ok(CellModel {
            covset,
            j,
            samplers: ChannelSamplers::new(covset, j)?,
        })
    }

    pub fn params(&self) -> &SystemParams {
        self.covset.params()
    }

    /// Channels of one block and the regular pilot observation of every
    /// pilot index `i`: `y_i = sum_l h_li + n_i / sqrt(rho_tr)`.
    fn draw_block(&self, rng: &mut SimRng) -> (ChannelDraw, Vec<CVector>) {
        let p = self.params();
        let draw = self.samplers.draw(rng);
        let noise = c64::new(1.0 / p.rho_tr.sqrt(), 0.0);
        let ys = (0..p.k)
            .map(|i| {
                let mut y = standard_complex_normal_vector(p.m, rng) * noise;
                for l in 0..p.l {
                    y += draw.h(l, i);
                }
                y
            })
            .collect();
        (draw, ys)
    }
}

/// Runs `n_blocks` blocks split into fixed chunks with one RNG substream
/// each and sums the per-UE statistics in chunk order.
fn run_blocks<F>(n_blocks: usize, n_ues: usize, seed: u64, key: StreamKey, block: F) -> Vec<UatfSums>
where
    F: Fn(&mut SimRng, &mut [UatfSums]) + Sync + Send,
{
    let chunks = n_blocks.div_ceil(BLOCKS_PER_CHUNK);
    let partial = map_indexed(chunks, |c| {
        let mut rng = key.with(c as u64).rng(seed);
        let mut sums = vec![UatfSums::default(); n_ues];
        let count = BLOCKS_PER_CHUNK.min(n_blocks - c * BLOCKS_PER_CHUNK);
        for _ in 0..count {
            block(&mut rng, &mut sums);
        }
        sums
    });
    let mut total = vec![UatfSums::default(); n_ues];
    for sums in &partial {
        for (t, s) in total.iter_mut().zip(sums) {
            t.add(s);
        }
    }
    total
}

fn check_blocks(n_blocks: usize) -> Result<()> {
    if n_blocks < MIN_BLOCKS {
        return Err(Error::InvalidParams(format!(
            "Monte-Carlo UatF needs at least {MIN_BLOCKS} blocks (got {n_blocks})"
        )));
    }
    Ok(())
}

fn check_filters(filters: &[FilterMatrix], params: &SystemParams) -> Result<()> {
    if filters.len() != params.k {
        return Err(Error::DimensionMismatch {
            expected: params.k,
            got: filters.len(),
        });
    }
    if let Some(f) = filters.iter().find(|f| f.dim() != params.m) {
        return Err(Error::DimensionMismatch {
            expected: params.m,
            got: f.dim(),
        });
    }
    Ok(())
}

/// Monte-Carlo UatF SINR of UE `k` in the serving cell of `model`.
pub fn uatf_sinr_monte_carlo(
    combiner: &CombinerSpec,
    model: &CellModel<'_>,
    k: usize,
    rho_ul: f64,
    n_blocks: usize,
    seed: u64,
    key: StreamKey,
) -> Result<f64> {
    check_blocks(n_blocks)?;
    let p = model.params();
    if k >= p.k {
        return Err(Error::IndexOutOfRange(format!("UE {k} with K={}", p.k)));
    }
    match combiner {
        CombinerSpec::Mrc(w) => {
            if w.dim() != p.m {
                return Err(Error::DimensionMismatch {
                    expected: p.m,
                    got: w.dim(),
                });
            }
            let sums = run_blocks(n_blocks, 1, seed, key, |rng, sums| {
                let (draw, ys) = model.draw_block(rng);
                let v = &w.w * &ys[k];
                sums[0].record(&v, &draw, model.j, k);
            });
            Ok(sums[0].gamma(n_blocks, rho_ul))
        }
        CombinerSpec::Rzf(filters) => {
            Ok(uatf_sinr_monte_carlo_cell(CombinerKind::Rzf, filters, model, rho_ul, n_blocks, seed, key)?[k])
        }
    }
}

/// Monte-Carlo UatF SINR of every UE in the serving cell, all from the same blocks.
///
/// `filters[i]` produces the channel estimate of UE `i`; MRC uses it
/// directly as the combiner and RZF combines all of them.
pub fn uatf_sinr_monte_carlo_cell(
    kind: CombinerKind,
    filters: &[FilterMatrix],
    model: &CellModel<'_>,
    rho_ul: f64,
    n_blocks: usize,
    seed: u64,
    key: StreamKey,
) -> Result<Vec<f64>> {
    check_blocks(n_blocks)?;
    let p = model.params();
    check_filters(filters, p)?;
    let sums = run_blocks(n_blocks, p.k, seed, key, |rng, sums| {
        let (draw, ys) = model.draw_block(rng);
        let estimates: Vec<CVector> = filters.iter().zip(&ys).map(|(f, y)| &f.w * y).collect();
        let vs = match kind {
            CombinerKind::Mrc => estimates,
            CombinerKind::Rzf => rzf_combiner(&estimates, rho_ul),
        };
        for (ue, v) in vs.iter().enumerate() {
            sums[ue].record(v, &draw, model.j, ue);
        }
    });
    Ok(sums.iter().map(|s| s.gamma(n_blocks, rho_ul)).collect())
}

/// SE with perfect covariance knowledge and MMSE estimates of every channel,
/// averaging `log2(1 + instantaneous SINR)` over blocks. Returns one SE per
/// UE of the serving cell.
///
/// Every channel `h_jli` is estimated as `R_jli Q_ji^-1 y_ji`, so the
/// impairment matrix is the total estimation-error covariance plus noise,
/// `Z = sum_{l,i} (R_jli - Phi_jli) + I/rho_ul`.
pub fn perfect_cov_se_baseline(
    model: &CellModel<'_>,
    kind: CombinerKind,
    rho_ul: f64,
    n_blocks: usize,
    seed: u64,
    key: StreamKey,
) -> Result<Vec<f64>> {
    check_blocks(n_blocks)?;
    let p = model.params();
    let (j, cov) = (model.j, model.covset);
    // filters[l * K + i] = R_jli Q_ji^-1
    let mut filters = Vec::with_capacity(p.l * p.k);
    let mut z = HermitianMatrix::scaled_identity(p.m, 1.0 / rho_ul);
    for l in 0..p.l {
        for i in 0..p.k {
            let m = crate::chanest::mmse_filter(cov.r(j, l, i), cov.q(j, i))?;
            z += &(cov.r(j, l, i) - &m.phi);
            filters.push(m.filter.w);
        }
    }
    let z = z.into_matrix();

    let chunks = n_blocks.div_ceil(BLOCKS_PER_CHUNK);
    let partial = map_indexed(chunks, |c| {
        let mut rng = key.with(c as u64).rng(seed);
        let mut acc = vec![0.0; p.k];
        let count = BLOCKS_PER_CHUNK.min(n_blocks - c * BLOCKS_PER_CHUNK);
        for _ in 0..count {
            let (_, ys) = model.draw_block(&mut rng);
            let est: Vec<CVector> = (0..p.l * p.k).map(|li| &filters[li] * &ys[li % p.k]).collect();
            let own: Vec<CVector> = (0..p.k).map(|i| est[j * p.k + i].clone()).collect();
            let vs = match kind {
                CombinerKind::Mrc => own.clone(),
                CombinerKind::Rzf => rzf_combiner(&own, rho_ul),
            };
            for (k, v) in vs.iter().enumerate() {
                let signal = v.dotc(&own[k]).norm_sqr();
                let others: f64 = est.iter().map(|e| v.dotc(e).norm_sqr()).sum::<f64>() - signal;
                let zv = &z * v;
                let den = others.max(0.0) + v.dotc(&zv).re;
                if signal > 0.0 && den > 0.0 {
                    acc[k] += (1.0 + signal / den).log2();
                }
            }
        }
        acc
    });
    let mut total = vec![0.0; p.k];
    for acc in &partial {
        for (t, a) in total.iter_mut().zip(acc) {
            *t += a;
        }
    }
    let prelog = (1.0 - p.k as f64 / p.tau_c as f64).max(0.0);
    Ok(total.iter().map(|t| prelog * t / n_blocks as f64).collect())
}
