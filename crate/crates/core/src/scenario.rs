//! Cell layout, pathloss and the true covariance structure of the network.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::linalg::{c64, HermitianMatrix};
use crate::{Error, Result};

/// How the extra covariance pilots are charged against the pre-log factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OverheadModel {
    /// `alpha = N_R K L / (tau_c tau_s)`: each extra pilot costs one channel
    /// use out of the `tau_c * tau_s` in a statistics window.
    #[default]
    PerChannelUse,
    /// `alpha = N_R K L / tau_s`: each extra pilot costs a whole block.
    PerBlock,
}

/// Scalar model constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// Antennas per BS.
    pub m: usize,
    /// UEs per cell.
    pub k: usize,
    /// Cells.
    pub l: usize,
    /// Channel uses per coherence block.
    pub tau_c: usize,
    /// Coherence blocks per statistics window.
    pub tau_s: usize,
    /// Normalized uplink data power.
    pub rho_ul: f64,
    /// Normalized total pilot power per UE, summed over the `K`-symbol
    /// pilot sequence.
    pub rho_tr: f64,
    /// Full angular spread of the one-ring model, degrees.
    pub spread_deg: f64,
    /// Element separation in wavelengths.
    pub antenna_spacing: f64,
    /// SNR at 1 m, dB.
    pub pathloss_a: f64,
    /// Pathloss slope, dB per decade.
    pub pathloss_b: f64,
    pub inter_bs_distance: f64,
    pub ue_ring_radius: f64,
    /// Gauss-Legendre points for the one-ring integral.
    pub quadrature_order: usize,
    pub pilot_overhead: OverheadModel,
}

impl Default for SystemParams {
    fn default() -> Self {
        SystemParams {
            m: 100,
            k: 10,
            l: 7,
            tau_c: 200,
            tau_s: 25_000,
            rho_ul: 1.0,
            // K pilot symbols at the data SNR.
            rho_tr: 10.0,
            spread_deg: 20.0,
            antenna_spacing: 0.5,
            pathloss_a: 78.7,
            pathloss_b: 37.6,
            inter_bs_distance: 300.0,
            ue_ring_radius: 120.0,
            quadrature_order: 200,
            pilot_overhead: OverheadModel::PerChannelUse,
        }
    }
}

impl SystemParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        if self.m < 1 || self.k < 1 || self.l < 1 {
            return bad(format!("m, k, l must be >= 1 (got {}, {}, {})", self.m, self.k, self.l));
        }
        if self.l > MAX_CELLS {
            return bad(format!("at most {MAX_CELLS} cells are supported (got {})", self.l));
        }
        if self.tau_c <= self.k {
            return bad(format!("tau_c ({}) must exceed k ({})", self.tau_c, self.k));
        }
        if self.tau_s < 1 {
            return bad("tau_s must be >= 1".into());
        }
        for (name, v) in [
            ("rho_ul", self.rho_ul),
            ("rho_tr", self.rho_tr),
            ("spread_deg", self.spread_deg),
            ("antenna_spacing", self.antenna_spacing),
            ("inter_bs_distance", self.inter_bs_distance),
            ("ue_ring_radius", self.ue_ring_radius),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive and finite (got {v})"));
            }
        }
        if self.quadrature_order < 2 {
            return bad("quadrature_order must be >= 2".into());
        }
        Ok(())
    }

    /// Fraction of channel uses spent on `n_r` extra pilots per UE.
    pub fn pilot_overhead_fraction(&self, n_r: usize) -> f64 {
        let pilots = (n_r * self.k * self.l) as f64;
        match self.pilot_overhead {
            OverheadModel::PerChannelUse => pilots / (self.tau_c as f64 * self.tau_s as f64),
            OverheadModel::PerBlock => pilots / self.tau_s as f64,
        }
    }

    /// Pre-log factor `1 - K/tau_c - alpha(n_r)`, before clamping.
    pub fn prelog(&self, n_r: usize) -> f64 {
        1.0 - self.k as f64 / self.tau_c as f64 - self.pilot_overhead_fraction(n_r)
    }
}

/// Center cell plus up to six neighbours.
pub const MAX_CELLS: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn polar(radius: f64, azimuth: f64) -> Self {
        Point {
            x: radius * azimuth.cos(),
            y: radius * azimuth.sin(),
        }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Azimuth of `other` seen from `self`, radians.
    pub fn azimuth_to(self, other: Point) -> f64 {
        (other.y - self.y).atan2(other.x - self.x)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGeometry {
    pub bs_positions: Vec<Point>,
    /// `ue_positions[l][k]`.
    pub ue_positions: Vec<Vec<Point>>,
}

/// Center BS at the origin, neighbour `n` at azimuth `60 n` degrees, UE `k`
/// of every cell at azimuth `360 k / K` degrees around its own BS.
pub fn build_geometry(params: &SystemParams) -> Result<NetworkGeometry> {
    params.validate()?;
    let bs_positions: Vec<Point> = (0..params.l)
        .map(|cell| {
            if cell == 0 {
                Point { x: 0.0, y: 0.0 }
            } else {
                Point::polar(params.inter_bs_distance, (cell - 1) as f64 * PI / 3.0)
            }
        })
        .collect();
    let ue_positions = bs_positions
        .iter()
        .map(|bs| {
            (0..params.k)
                .map(|ue| {
                    let p = Point::polar(params.ue_ring_radius, 2.0 * PI * ue as f64 / params.k as f64);
                    Point {
                        x: bs.x + p.x,
                        y: bs.y + p.y,
                    }
                })
                .collect()
        })
        .collect();
    Ok(NetworkGeometry {
        bs_positions,
        ue_positions,
    })
}

/// Linear large-scale gain, equal to the per-antenna SNR since the noise
/// power is one.
pub fn large_scale_gain(distance_m: f64, params: &SystemParams) -> Result<f64> {
    if !(distance_m > 0.0) {
        return Err(Error::InvalidParams(format!("distance must be positive (got {distance_m})")));
    }
    let snr_db = params.pathloss_a - params.pathloss_b * distance_m.log10();
    Ok(10f64.powf(snr_db / 10.0))
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    let n = order;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Three-term recurrence for P_n(x) and its derivative.
            let (mut p0, mut p1) = (1.0, x);
            for j in 2..=n {
                let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pn1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pn1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// One-ring covariance of a uniform linear array:
///
/// `R[m, p] = beta / (2 D) * integral_{-D}^{D} exp(i 2 pi s (m - p) sin(phi + d)) dd`
///
/// with `D` half the angular spread and `s` the antenna spacing. The matrix
/// is Hermitian Toeplitz with diagonal exactly `beta`. A zero spread gives
/// the rank-one line-of-sight matrix.
pub fn one_ring_covariance(beta: f64, azimuth_rad: f64, params: &SystemParams) -> HermitianMatrix {
    one_ring_covariance_with_order(beta, azimuth_rad, params, params.quadrature_order)
}

pub fn one_ring_covariance_with_order(
    beta: f64,
    azimuth_rad: f64,
    params: &SystemParams,
    order: usize,
) -> HermitianMatrix {
    let half = params.spread_deg.to_radians() / 2.0;
    let phase = 2.0 * PI * params.antenna_spacing;
    let m = params.m;

    // First column: entries R[n, 0] for lag n.
    let lags: Vec<c64> = if half == 0.0 {
        let s = azimuth_rad.sin();
        (0..m).map(|n| c64::from_polar(beta, phase * n as f64 * s)).collect()
    } else {
        let (nodes, weights) = gauss_legendre(order);
        let sines: Vec<f64> = nodes.iter().map(|&t| (azimuth_rad + half * t).sin()).collect();
        (0..m)
            .map(|n| {
                let acc: c64 = sines
                    .iter()
                    .zip(&weights)
                    .map(|(&s, &w)| c64::from_polar(w, phase * n as f64 * s))
                    .sum();
                // Weights sum to 2 on [-1, 1]; the uniform density is 1/2.
                acc * (beta / 2.0)
            })
            .collect()
    };
    HermitianMatrix::from_upper_fn(m, |row, col| {
        if row == col {
            c64::new(beta, 0.0)
        } else {
            // Entry (row, col) with row < col has lag row - col < 0.
            lags[col - row].conj()
        }
    })
}

/// True covariances `R(j, l, k)` and pilot covariances `Q(j, k)`.
#[derive(Debug, Clone)]
pub struct CovarianceSet {
    params: SystemParams,
    r: Vec<HermitianMatrix>,
    q: Vec<HermitianMatrix>,
}

impl CovarianceSet {
    /// Assembles a set from explicit `R` matrices, indexed `r[(j * L + l) * K + k]`.
    pub fn from_r(params: &SystemParams, r: Vec<HermitianMatrix>) -> Result<Self> {
        let (l, k, m) = (params.l, params.k, params.m);
        if r.len() != l * l * k {
            return Err(Error::DimensionMismatch {
                expected: l * l * k,
                got: r.len(),
            });
        }
        if let Some(bad) = r.iter().find(|x| x.dim() != m) {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: bad.dim(),
            });
        }
        let mut q = Vec::with_capacity(l * k);
        for j in 0..l {
            for ue in 0..k {
                let mut acc = HermitianMatrix::scaled_identity(m, 1.0 / params.rho_tr);
                for cell in 0..l {
                    acc += &r[(j * l + cell) * k + ue];
                }
                q.push(acc);
            }
        }
        Ok(CovarianceSet {
            params: params.clone(),
            r,
            q,
        })
    }

    pub fn params(&self) -> &SystemParams {
        &self.params
    }

    fn check(&self, j: usize, l: usize, k: usize) -> Result<()> {
        if j >= self.params.l || l >= self.params.l || k >= self.params.k {
            return Err(Error::IndexOutOfRange(format!(
                "(j={j}, l={l}, k={k}) with L={}, K={}",
                self.params.l, self.params.k
            )));
        }
        Ok(())
    }

    pub fn r(&self, j: usize, l: usize, k: usize) -> &HermitianMatrix {
        self.try_r(j, l, k).expect("covariance index out of range")
    }

    pub fn try_r(&self, j: usize, l: usize, k: usize) -> Result<&HermitianMatrix> {
        self.check(j, l, k)?;
        Ok(&self.r[(j * self.params.l + l) * self.params.k + k])
    }

    pub fn q(&self, j: usize, k: usize) -> &HermitianMatrix {
        self.try_q(j, k).expect("covariance index out of range")
    }

    pub fn try_q(&self, j: usize, k: usize) -> Result<&HermitianMatrix> {
        self.check(j, 0, k)?;
        Ok(&self.q[j * self.params.k + k])
    }

    /// Covariance of a contaminants-only observation: `sum_{l != j} R(j,l,k) + I/rho_tr`.
    pub fn contaminants_covariance(&self, j: usize, k: usize) -> HermitianMatrix {
        let mut acc = HermitianMatrix::scaled_identity(self.params.m, 1.0 / self.params.rho_tr);
        for l in (0..self.params.l).filter(|&l| l != j) {
            acc += self.r(j, l, k);
        }
        acc
    }

    /// Covariance of a clean observation: `R(j,j,k) + I/rho_tr`.
    pub fn clean_covariance(&self, j: usize, k: usize) -> HermitianMatrix {
        let mut acc = self.r(j, j, k).clone();
        acc.add_to_diagonal(1.0 / self.params.rho_tr);
        acc
    }

    /// `sum_{l, i} R(j, l, i)`.
    pub fn total_received_covariance(&self, j: usize) -> HermitianMatrix {
        let mut acc = HermitianMatrix::zeros(self.params.m);
        for l in 0..self.params.l {
            for i in 0..self.params.k {
                acc += self.r(j, l, i);
            }
        }
        acc
    }
}

pub fn build_covariance_set(geometry: &NetworkGeometry, params: &SystemParams) -> Result<CovarianceSet> {
    params.validate()?;
    if geometry.bs_positions.len() != params.l || geometry.ue_positions.iter().any(|c| c.len() != params.k) {
        return Err(Error::InvalidParams("geometry does not match L and K".into()));
    }
    let mut r = Vec::with_capacity(params.l * params.l * params.k);
    for bs in &geometry.bs_positions {
        for cell in &geometry.ue_positions {
            for &ue in cell {
                let beta = large_scale_gain(bs.distance(ue), params)?;
                r.push(one_ring_covariance(beta, bs.azimuth_to(ue), params));
            }
        }
    }
    CovarianceSet::from_r(params, r)
}

/// Geometry plus covariance set for `params`.
pub fn build_scenario(params: &SystemParams) -> Result<CovarianceSet> {
    let geometry = build_geometry(params)?;
    build_covariance_set(&geometry, params)
}
