//! Effective channel gains, interference accounting and two-user NOMA
//! rates with SIC at the H-QoS user.
//!
//! Users are indexed `u = 2m + k` where `m` is the cluster and `k = 0`
//! for the H-QoS user, `k = 1` for the L-QoS user.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::digital::DigitalBeamformer;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Role {
    H,
    L,
}

impl Role {
    pub fn offset(self) -> usize {
        match self {
            Role::H => 0,
            Role::L => 1,
        }
    }
}

pub fn user_index(cluster: usize, role: Role) -> usize {
    2 * cluster + role.offset()
}

/// `g_{i,(m,k)} = g̃_{m,k}ᴴ w_i` for every user and stream.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveGains {
    /// `2M × M`: row = user, column = stream.
    gains: DMatrix<Complex64>,
}

impl EffectiveGains {
    /// From the `M × 2M` beamspace matrix and the digital precoder.
    pub fn new(beamspace: &DMatrix<Complex64>, digital: &DigitalBeamformer) -> Result<Self> {
        let m = digital.num_streams();
        if beamspace.nrows() != digital.matrix().nrows() || beamspace.ncols() != 2 * m {
            return Err(Error::DimensionMismatch(format!(
                "beamspace {}×{} incompatible with {m} streams of length {}",
                beamspace.nrows(),
                beamspace.ncols(),
                digital.matrix().nrows()
            )));
        }
        Ok(Self {
            gains: beamspace.adjoint() * digital.matrix(),
        })
    }

    /// Directly from a `2M × M` matrix of complex gains.
    pub fn from_matrix(gains: DMatrix<Complex64>) -> Result<Self> {
        if gains.nrows() != 2 * gains.ncols() || gains.ncols() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "expected a 2M×M gain matrix, got {}×{}",
                gains.nrows(),
                gains.ncols()
            )));
        }
        Ok(Self { gains })
    }

    /// Builds gains from power magnitudes only (zero phase), `power[u][i]`.
    pub fn from_powers(power: &[Vec<f64>]) -> Result<Self> {
        let m = power.first().map(Vec::len).unwrap_or(0);
        if power.iter().any(|row| row.len() != m) {
            return Err(Error::DimensionMismatch("ragged gain table".into()));
        }
        Self::from_matrix(DMatrix::from_fn(power.len(), m, |u, i| {
            Complex64::new(power[u][i].sqrt(), 0.0)
        }))
    }

    pub fn num_clusters(&self) -> usize {
        self.gains.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.gains
    }

    /// Own-cluster gain `g_{m,k}`.
    pub fn own(&self, cluster: usize, role: Role) -> Complex64 {
        self.gains[(user_index(cluster, role), cluster)]
    }

    /// `|g_{i,(m,k)}|²`: power leaked from stream `stream` to user `(m, k)`.
    pub fn power(&self, stream: usize, cluster: usize, role: Role) -> f64 {
        self.gains[(user_index(cluster, role), stream)].norm_sqr()
    }

    pub fn own_power(&self, cluster: usize, role: Role) -> f64 {
        self.power(cluster, cluster, role)
    }
}

/// Transmit powers in watts, indexed like users.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerAllocation(Vec<f64>);

impl PowerAllocation {
    pub fn new(powers: Vec<f64>) -> Result<Self> {
        if powers.is_empty() || !powers.len().is_multiple_of(2) {
            return Err(Error::DimensionMismatch(format!(
                "power vector needs 2 entries per cluster, got {}",
                powers.len()
            )));
        }
        if let Some(p) = powers.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return Err(Error::DimensionMismatch(format!("invalid power {p}")));
        }
        Ok(Self(powers))
    }

    pub fn uniform(num_clusters: usize, total: f64) -> Self {
        Self(vec![total / (2 * num_clusters) as f64; 2 * num_clusters])
    }

    pub fn num_clusters(&self) -> usize {
        self.0.len() / 2
    }

    pub fn get(&self, cluster: usize, role: Role) -> f64 {
        self.0[user_index(cluster, role)]
    }

    /// `P_m = p_{m,h} + p_{m,l}`.
    pub fn cluster_total(&self, cluster: usize) -> f64 {
        self.0[2 * cluster] + self.0[2 * cluster + 1]
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

/// `Σ_{i≠m} P_i |g_{i,(m,k)}|²`.
pub fn inter_cluster_interference(
    p: &PowerAllocation,
    gains: &EffectiveGains,
    cluster: usize,
    role: Role,
) -> f64 {
    (0..gains.num_clusters())
        .filter(|&i| i != cluster)
        .map(|i| p.cluster_total(i) * gains.power(i, cluster, role))
        .sum()
}

fn sinr_h(p: &PowerAllocation, gains: &EffectiveGains, noise: f64, m: usize) -> f64 {
    let inter = inter_cluster_interference(p, gains, m, Role::H);
    p.get(m, Role::H) * gains.own_power(m, Role::H) / (inter + noise)
}

fn sinr_l_at_h(p: &PowerAllocation, gains: &EffectiveGains, noise: f64, m: usize) -> f64 {
    let inter = inter_cluster_interference(p, gains, m, Role::H);
    let g = gains.own_power(m, Role::H);
    p.get(m, Role::L) * g / (p.get(m, Role::H) * g + inter + noise)
}

fn sinr_l_at_l(p: &PowerAllocation, gains: &EffectiveGains, noise: f64, m: usize) -> f64 {
    let inter = inter_cluster_interference(p, gains, m, Role::L);
    let g = gains.own_power(m, Role::L);
    p.get(m, Role::L) * g / (p.get(m, Role::H) * g + inter + noise)
}

/// H-user rate after cancelling its cluster partner.
pub fn rate_h(p: &PowerAllocation, gains: &EffectiveGains, noise: f64, m: usize) -> f64 {
    (1.0 + sinr_h(p, gains, noise, m)).log2()
}

/// Rate at which the H-user decodes the L-user's message.
pub fn rate_l_to_h(p: &PowerAllocation, gains: &EffectiveGains, noise: f64, m: usize) -> f64 {
    (1.0 + sinr_l_at_h(p, gains, noise, m)).log2()
}

/// Rate at which the L-user decodes its own message.
pub fn rate_l_to_l(p: &PowerAllocation, gains: &EffectiveGains, noise: f64, m: usize) -> f64 {
    (1.0 + sinr_l_at_l(p, gains, noise, m)).log2()
}

pub fn rate_l(p: &PowerAllocation, gains: &EffectiveGains, noise: f64, m: usize) -> f64 {
    rate_l_to_h(p, gains, noise, m).min(rate_l_to_l(p, gains, noise, m))
}

/// The H-user sees the L-user's signal at least as well as the L-user does.
pub fn sic_condition(gains: &EffectiveGains, p: &PowerAllocation, noise: f64, m: usize) -> bool {
    let ih = inter_cluster_interference(p, gains, m, Role::H);
    let il = inter_cluster_interference(p, gains, m, Role::L);
    gains.own_power(m, Role::H) / (ih + noise) >= gains.own_power(m, Role::L) / (il + noise)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClusterRates {
    pub r_h: f64,
    pub r_l_to_h: f64,
    pub r_l_to_l: f64,
    pub r_l: f64,
    pub sic_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateReport {
    pub clusters: Vec<ClusterRates>,
}

impl RateReport {
    pub fn evaluate(p: &PowerAllocation, gains: &EffectiveGains, noise: f64) -> Self {
        let clusters = (0..gains.num_clusters())
            .map(|m| {
                let r_l_to_h = rate_l_to_h(p, gains, noise, m);
                let r_l_to_l = rate_l_to_l(p, gains, noise, m);
                ClusterRates {
                    r_h: rate_h(p, gains, noise, m),
                    r_l_to_h,
                    r_l_to_l,
                    r_l: r_l_to_h.min(r_l_to_l),
                    sic_ok: sic_condition(gains, p, noise, m),
                }
            })
            .collect();
        Self { clusters }
    }

    pub fn sum_rate_l(&self) -> f64 {
        self.clusters.iter().map(|c| c.r_l).sum()
    }
}

pub fn sum_rate_h(report: &RateReport) -> f64 {
    report.clusters.iter().map(|c| c.r_h).sum()
}

/// Received interference powers at one cluster's users, in watts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct InterferenceBreakdown {
    /// `p_{m,h}|g_{m,l}|²`, superposed H-signal seen by the L-user.
    pub intra_at_l: f64,
    /// `p_{m,l}|g_{m,h}|²`, L-signal at the H-user before SIC removes it.
    pub intra_at_h: f64,
    pub inter_at_h: f64,
    pub inter_at_l: f64,
}

impl InterferenceBreakdown {
    pub fn pre_sic_total(&self) -> f64 {
        self.intra_at_l + self.intra_at_h + self.inter_at_h + self.inter_at_l
    }

    /// Interference left in the decoding SINRs of the H-user (after SIC)
    /// and of the L-user.
    pub fn residual_total(&self) -> f64 {
        self.intra_at_l + self.inter_at_h + self.inter_at_l
    }
}

pub fn interference_breakdown(
    p: &PowerAllocation,
    gains: &EffectiveGains,
) -> Vec<InterferenceBreakdown> {
    (0..gains.num_clusters())
        .map(|m| InterferenceBreakdown {
            intra_at_l: p.get(m, Role::H) * gains.own_power(m, Role::L),
            intra_at_h: p.get(m, Role::L) * gains.own_power(m, Role::H),
            inter_at_h: inter_cluster_interference(p, gains, m, Role::H),
            inter_at_l: inter_cluster_interference(p, gains, m, Role::L),
        })
        .collect()
}
