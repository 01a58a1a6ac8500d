//! End-to-end pipelines for the proposed schemes and the benchmarks.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{dbm_to_watts, Drop, ScenarioConfig};
use crate::analog::{ff_beamformer, slb_beamformer, AnalogBeamformer};
use crate::digital::{beamspace_channels, svd_zf_from_beamspace, zf_digital, SvdConvention};
use crate::error::{Error, Result};
use crate::geometry::{ArrayGeometry, ChannelVector};
use crate::matching::{
    min_antennas, strategy_set, Matcher, MatchingInput, MatchingState, StrategySet,
};
use crate::power::{
    sinr_threshold, solve_mlb, solve_slb, water_filling, QosThresholds, SolverOptions,
};
use crate::rates::{
    interference_breakdown, EffectiveGains, InterferenceBreakdown, PowerAllocation, RateReport,
    Role,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scheme {
    #[serde(rename = "SLB-NF-NOMA")]
    SlbNfNoma,
    #[serde(rename = "MLB-NF-NOMA")]
    MlbNfNoma,
    #[serde(rename = "Rand-MLB")]
    RandMlb,
    #[serde(rename = "Fixed-MLB")]
    FixedMlb,
    #[serde(rename = "MB-FF-NOMA")]
    MbFfNoma,
    #[serde(rename = "NF-OMA")]
    NfOma,
    #[serde(rename = "FF-NOMA-OMA")]
    FfNomaOma,
}

impl Scheme {
    pub const ALL: [Scheme; 7] = [
        Scheme::SlbNfNoma,
        Scheme::MlbNfNoma,
        Scheme::RandMlb,
        Scheme::FixedMlb,
        Scheme::MbFfNoma,
        Scheme::NfOma,
        Scheme::FfNomaOma,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::SlbNfNoma => "SLB-NF-NOMA",
            Scheme::MlbNfNoma => "MLB-NF-NOMA",
            Scheme::RandMlb => "Rand-MLB",
            Scheme::FixedMlb => "Fixed-MLB",
            Scheme::MbFfNoma => "MB-FF-NOMA",
            Scheme::NfOma => "NF-OMA",
            Scheme::FfNomaOma => "FF-NOMA-OMA",
        }
    }

    pub fn is_oma(self) -> bool {
        matches!(self, Scheme::NfOma | Scheme::FfNomaOma)
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Physical parameters of one sweep point, in SI units.
#[derive(Debug, Clone)]
pub struct SystemParams {
    pub geometry: ArrayGeometry,
    pub pmax_w: f64,
    pub noise_w: f64,
    pub qos: QosThresholds,
    pub n_min: usize,
    pub eta_w: f64,
    pub svd: SvdConvention,
    pub solver: SolverOptions,
}

impl SystemParams {
    /// Converts the config's dBm quantities; `pmax_dbm` and `num_antennas`
    /// override the config so sweeps can vary them.
    pub fn new(
        config: &ScenarioConfig,
        num_antennas: usize,
        pmax_dbm: f64,
        solver: &SolverOptions,
    ) -> Result<Self> {
        let pmax_w = dbm_to_watts(pmax_dbm);
        Ok(Self {
            geometry: config.geometry(num_antennas)?,
            pmax_w,
            noise_w: dbm_to_watts(config.noise_dbm),
            qos: QosThresholds::uniform(
                config.num_clusters,
                config.rate_h_min_bps_hz,
                config.rate_l_min_bps_hz,
            )?,
            n_min: min_antennas(num_antennas, config.n_min_fraction),
            eta_w: config.eta_w.unwrap_or(pmax_w),
            svd: config.svd_convention.into(),
            solver: *solver,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    pub kkt_residual: f64,
    pub fp_iterations: usize,
    pub swaps: usize,
    pub matching_capped: bool,
    /// Smallest `achieved − required` rate over all users, measured in the
    /// slot where the requirement applies.
    pub min_qos_margin: f64,
}

/// Outcome of one scheme on one drop. Infeasible trials keep their slot
/// with `feasible = false` and NaN metrics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialResult {
    pub scheme: Scheme,
    pub feasible: bool,
    pub failure: Option<String>,
    /// `[H, L]` per cluster after time sharing.
    pub user_rates: Vec<[f64; 2]>,
    pub sum_rate_h: f64,
    pub sum_rate_l: f64,
    /// Pre-SIC intra- plus inter-cluster interference, watts.
    pub interference_w: f64,
    /// Interference left after SIC, watts.
    pub residual_interference_w: f64,
    /// SIC decodability per NOMA cluster and slot; empty for NF-OMA.
    pub sic_ok: Vec<bool>,
    pub diagnostics: Diagnostics,
}

impl TrialResult {
    fn infeasible(scheme: Scheme, err: &Error) -> Self {
        Self {
            scheme,
            feasible: false,
            failure: Some(err.to_string()),
            user_rates: Vec::new(),
            sum_rate_h: f64::NAN,
            sum_rate_l: f64::NAN,
            interference_w: f64::NAN,
            residual_interference_w: f64::NAN,
            sic_ok: Vec::new(),
            diagnostics: Diagnostics::default(),
        }
    }
}

/// Sum of pre-SIC interference powers over every user.
pub fn total_interference(breakdown: &[InterferenceBreakdown]) -> f64 {
    breakdown
        .iter()
        .map(InterferenceBreakdown::pre_sic_total)
        .sum()
}

/// One NOMA transmission: the clusters it serves and their outcome.
struct NomaSlot {
    clusters: Vec<usize>,
    report: RateReport,
    breakdown: Vec<InterferenceBreakdown>,
    kkt_residual: f64,
    fp_iterations: usize,
}

fn min_noma_margin(report: &RateReport, qos: &QosThresholds, clusters: &[usize]) -> f64 {
    report
        .clusters
        .iter()
        .zip(clusters)
        .flat_map(|(r, &m)| [r.r_h - qos.rate(m, Role::H), r.r_l - qos.rate(m, Role::L)])
        .fold(f64::INFINITY, f64::min)
}

/// Combines slots into a trial result; each slot occupies `1/slots.len()`
/// of the resource.
fn combine_noma(
    scheme: Scheme,
    slots: Vec<NomaSlot>,
    num_clusters: usize,
    qos: &QosThresholds,
    swaps: usize,
    capped: bool,
) -> TrialResult {
    let share = 1.0 / slots.len() as f64;
    let mut user_rates = vec![[0.0; 2]; num_clusters];
    let mut interference = 0.0;
    let mut residual = 0.0;
    let mut sic_ok = Vec::new();
    let mut margin = f64::INFINITY;
    let mut kkt = 0.0f64;
    let mut fp_iterations = 0;
    for slot in &slots {
        for (r, &m) in slot.report.clusters.iter().zip(&slot.clusters) {
            user_rates[m][0] += share * r.r_h;
            user_rates[m][1] += share * r.r_l;
            sic_ok.push(r.sic_ok);
        }
        interference += share * total_interference(&slot.breakdown);
        residual += share
            * slot
                .breakdown
                .iter()
                .map(InterferenceBreakdown::residual_total)
                .sum::<f64>();
        margin = margin.min(min_noma_margin(&slot.report, qos, &slot.clusters));
        kkt = kkt.max(slot.kkt_residual);
        fp_iterations += slot.fp_iterations;
    }
    TrialResult {
        scheme,
        feasible: true,
        failure: None,
        sum_rate_h: user_rates.iter().map(|r| r[0]).sum(),
        sum_rate_l: user_rates.iter().map(|r| r[1]).sum(),
        user_rates,
        interference_w: interference,
        residual_interference_w: residual,
        sic_ok,
        diagnostics: Diagnostics {
            kkt_residual: kkt,
            fp_iterations,
            swaps,
            matching_capped: capped,
            min_qos_margin: margin,
        },
    }
}

/// H-user beamspace columns of an `M × 2M` beamspace matrix.
fn h_columns(beamspace: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let m = beamspace.nrows();
    DMatrix::from_fn(m, m, |i, j| beamspace[(i, 2 * j)])
}

/// Single beam per cluster, ZF on the H-users, interference-free power
/// allocation. `beams[i]` serves `clusters[i]`.
fn single_beam_slot(
    clusters: &[usize],
    beams: &[AnalogBeamformer],
    channels: &[ChannelVector],
    params: &SystemParams,
) -> Result<NomaSlot> {
    let slot_channels: Vec<ChannelVector> = clusters
        .iter()
        .flat_map(|&m| [channels[2 * m].clone(), channels[2 * m + 1].clone()])
        .collect();
    let beamspace = beamspace_channels(&slot_channels, beams)?;
    let digital = zf_digital(&h_columns(&beamspace))?;
    let gains = EffectiveGains::new(&beamspace, &digital)?;
    let qos = params.qos.select(clusters);
    let sol = solve_slb(&gains, &qos, params.pmax_w, params.noise_w, &params.solver)?;
    Ok(NomaSlot {
        clusters: clusters.to_vec(),
        report: RateReport::evaluate(&sol.allocation, &gains, params.noise_w),
        breakdown: interference_breakdown(&sol.allocation, &gains),
        kkt_residual: sol.kkt_residual,
        fp_iterations: 0,
    })
}

fn run_slb_nf_noma(drop: &Drop, params: &SystemParams) -> Result<TrialResult> {
    let channels = drop.channels(&params.geometry);
    let beams: Vec<AnalogBeamformer> = drop
        .users
        .iter()
        .map(|[h, _]| slb_beamformer(&params.geometry, h))
        .collect();
    let clusters: Vec<usize> = (0..drop.num_clusters()).collect();
    let slot = single_beam_slot(&clusters, &beams, &channels, params)?;
    Ok(combine_noma(
        Scheme::SlbNfNoma,
        vec![slot],
        drop.num_clusters(),
        &params.qos,
        0,
        false,
    ))
}

/// Time slots for far-field beamsteering: clusters whose H-users share a
/// direction cannot be told apart and go to different slots, the rest are
/// served in every slot.
pub fn ff_slots(drop: &Drop) -> Vec<Vec<usize>> {
    let m = drop.num_clusters();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for c in 0..m {
        let angle = drop.location(c, 0).angle();
        match groups
            .iter_mut()
            .find(|g| (drop.location(g[0], 0).angle() - angle).abs() < 1e-12)
        {
            Some(g) => g.push(c),
            None => groups.push(vec![c]),
        }
    }
    let num_slots = groups.iter().map(Vec::len).max().unwrap_or(1);
    (0..num_slots)
        .map(|s| {
            let mut slot: Vec<usize> = groups
                .iter()
                .filter_map(|g| {
                    if g.len() == 1 {
                        Some(g[0])
                    } else {
                        g.get(s).copied()
                    }
                })
                .collect();
            slot.sort_unstable();
            slot
        })
        .collect()
}

fn run_ff_noma_oma(drop: &Drop, params: &SystemParams) -> Result<TrialResult> {
    let channels = drop.channels(&params.geometry);
    let slots = ff_slots(drop)
        .into_iter()
        .map(|clusters| {
            let beams: Vec<AnalogBeamformer> = clusters
                .iter()
                .map(|&m| ff_beamformer(&params.geometry, drop.location(m, 0).angle()))
                .collect();
            single_beam_slot(&clusters, &beams, &channels, params)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(combine_noma(
        Scheme::FfNomaOma,
        slots,
        drop.num_clusters(),
        &params.qos,
        0,
        false,
    ))
}

/// Two time slots; each cluster sends one user, chosen by a fair coin, to
/// the first slot and the other to the second. Every scheduled user gets its
/// own focused beam and a ZF stream.
fn run_nf_oma<R: Rng + ?Sized>(
    drop: &Drop,
    params: &SystemParams,
    rng: &mut R,
) -> Result<TrialResult> {
    let m = drop.num_clusters();
    let channels = drop.channels(&params.geometry);
    let first_slot_h: Vec<bool> = (0..m).map(|_| rng.random_bool(0.5)).collect();
    let mut user_rates = vec![[0.0; 2]; m];
    let mut margin = f64::INFINITY;
    for slot in 0..2 {
        let users: Vec<(usize, Role)> = (0..m)
            .map(|c| {
                let h_here = first_slot_h[c] == (slot == 0);
                (c, if h_here { Role::H } else { Role::L })
            })
            .collect();
        let beams: Vec<AnalogBeamformer> = users
            .iter()
            .map(|&(c, r)| slb_beamformer(&params.geometry, drop.location(c, r.offset())))
            .collect();
        let slot_channels: Vec<ChannelVector> = users
            .iter()
            .map(|&(c, r)| channels[2 * c + r.offset()].clone())
            .collect();
        let g = beamspace_channels(&slot_channels, &beams)?;
        let w = zf_digital(&g)?;
        let effective = g.adjoint() * w.matrix();
        let cnr: Vec<f64> = (0..m)
            .map(|i| effective[(i, i)].norm_sqr() / params.noise_w)
            .collect();
        let required: Vec<f64> = users.iter().map(|&(c, r)| params.qos.rate(c, r)).collect();
        let floors: Vec<f64> = required
            .iter()
            .zip(&cnr)
            .map(|(rate, c)| sinr_threshold(*rate) / c)
            .collect();
        let p = water_filling(&cnr, &floors, params.pmax_w)?;
        for (i, &(c, r)) in users.iter().enumerate() {
            let rate = (1.0 + p[i] * cnr[i]).log2();
            margin = margin.min(rate - required[i]);
            user_rates[c][r.offset()] = 0.5 * rate;
        }
    }
    Ok(TrialResult {
        scheme: Scheme::NfOma,
        feasible: true,
        failure: None,
        sum_rate_h: user_rates.iter().map(|r| r[0]).sum(),
        sum_rate_l: user_rates.iter().map(|r| r[1]).sum(),
        user_rates,
        interference_w: 0.0,
        residual_interference_w: 0.0,
        sic_ok: Vec::new(),
        diagnostics: Diagnostics {
            min_qos_margin: margin,
            ..Diagnostics::default()
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SplitRule {
    Matching,
    Random,
    Fixed,
}

fn run_multi_beam<R: Rng + ?Sized>(
    scheme: Scheme,
    drop: &Drop,
    params: &SystemParams,
    rng: &mut R,
) -> Result<TrialResult> {
    let (far_field, rule) = match scheme {
        Scheme::MlbNfNoma => (false, SplitRule::Matching),
        Scheme::RandMlb => (false, SplitRule::Random),
        Scheme::FixedMlb => (false, SplitRule::Fixed),
        Scheme::MbFfNoma => (true, SplitRule::Matching),
        _ => unreachable!("not a multi-beam scheme"),
    };
    let m = drop.num_clusters();
    let geometry = &params.geometry;
    let channels = drop.channels(geometry);
    let profiles = drop
        .users
        .iter()
        .map(|[h, l]| {
            if far_field {
                [
                    geometry.far_field_steering(h.angle()),
                    geometry.far_field_steering(l.angle()),
                ]
            } else {
                [
                    geometry.near_field_steering(h),
                    geometry.near_field_steering(l),
                ]
            }
        })
        .collect();
    let strategies: StrategySet = strategy_set(geometry.num_antennas(), params.n_min)?;
    let matcher = Matcher::new(MatchingInput {
        channels: &channels,
        profiles,
        strategies: &strategies,
        power: PowerAllocation::uniform(m, params.pmax_w),
        eta: vec![params.eta_w; m],
        noise: params.noise_w,
        svd: params.svd,
    })?;
    let (state, swaps, capped) = match rule {
        SplitRule::Matching => {
            let outcome = matcher.allocate();
            (outcome.state, outcome.trace.len(), outcome.capped)
        }
        SplitRule::Random => {
            let q: Vec<usize> = (0..m)
                .map(|_| rng.random_range(0..strategies.len()))
                .collect();
            (
                MatchingState::from_assignment(&q, strategies.len())?,
                0,
                false,
            )
        }
        SplitRule::Fixed => (
            MatchingState::from_assignment(&vec![0; m], strategies.len())?,
            0,
            false,
        ),
    };
    let assignment = state.assignment().expect("every rule matches all clusters");
    let beamspace = matcher.beamspace(&assignment);
    let digital = svd_zf_from_beamspace(&beamspace, params.svd)?;
    let gains = EffectiveGains::new(&beamspace, &digital)?;
    let fp = solve_mlb(
        &gains,
        &params.qos,
        params.pmax_w,
        params.noise_w,
        &params.solver,
    )?;
    let slot = NomaSlot {
        clusters: (0..m).collect(),
        report: RateReport::evaluate(&fp.allocation, &gains, params.noise_w),
        breakdown: interference_breakdown(&fp.allocation, &gains),
        kkt_residual: fp.kkt_residual,
        fp_iterations: fp.iterations,
    };
    Ok(combine_noma(
        scheme,
        vec![slot],
        m,
        &params.qos,
        swaps,
        capped,
    ))
}

/// Runs one scheme on one drop. Errors that make the trial infeasible
/// (QoS, ill-conditioned ZF) are recorded in the result, never dropped.
pub fn run_scheme<R: Rng + ?Sized>(
    scheme: Scheme,
    drop: &Drop,
    params: &SystemParams,
    rng: &mut R,
) -> TrialResult {
    let outcome = match scheme {
        Scheme::SlbNfNoma => run_slb_nf_noma(drop, params),
        Scheme::FfNomaOma => run_ff_noma_oma(drop, params),
        Scheme::NfOma => run_nf_oma(drop, params, rng),
        _ => run_multi_beam(scheme, drop, params, rng),
    };
    match outcome {
        Ok(r) => {
            if r.sic_ok.iter().any(|ok| !ok) {
                log::debug!("{scheme}: SIC condition violated in {:?}", r.sic_ok);
            }
            r
        }
        Err(e) => {
            log::debug!("{scheme}: infeasible trial: {e}");
            TrialResult::infeasible(scheme, &e)
        }
    }
}
