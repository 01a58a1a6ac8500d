//! Antenna allocation between the two users of each cluster by
//! many-to-one matching of clusters to split strategies, refined by swaps.

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::analog::{AnalogBeamformer, AntennaSplit};
use crate::digital::{svd_zf_from_beamspace, SvdConvention};
use crate::error::{Error, Result};
use crate::geometry::ChannelVector;
use crate::rates::{sum_rate_h, EffectiveGains, PowerAllocation, RateReport, Role};

/// Margin a utility must gain for a swap to count as an improvement.
pub const SWAP_EPSILON: f64 = 1e-9;

/// `⌈fraction · N⌉`.
pub fn min_antennas(num_antennas: usize, fraction: f64) -> usize {
    // guard against 0.2·N landing a hair above an integer
    let raw = fraction * num_antennas as f64;
    let rounded = raw.round();
    if (raw - rounded).abs() < 1e-9 {
        rounded as usize
    } else {
        raw.ceil() as usize
    }
}

/// Splits `(N − N_min − q, N_min + q)` for `q = 0, …, N − 2N_min`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StrategySet {
    splits: Vec<AntennaSplit>,
}

pub fn strategy_set(num_antennas: usize, n_min: usize) -> Result<StrategySet> {
    if n_min == 0 || 2 * n_min > num_antennas {
        return Err(Error::InvalidSplit {
            num_h: num_antennas.saturating_sub(n_min),
            num_l: n_min,
            reason: format!("minimum {n_min} per user does not fit {num_antennas} antennas"),
        });
    }
    let splits = (0..=num_antennas - 2 * n_min)
        .map(|q| AntennaSplit::new(num_antennas - n_min - q, n_min + q, n_min))
        .collect::<Result<Vec<_>>>()?;
    Ok(StrategySet { splits })
}

impl StrategySet {
    pub fn len(&self) -> usize {
        self.splits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.splits.is_empty()
    }

    pub fn get(&self, q: usize) -> AntennaSplit {
        self.splits[q]
    }

    pub fn iter(&self) -> impl Iterator<Item = &AntennaSplit> {
        self.splits.iter()
    }

    /// Index of the given split, if present.
    pub fn position(&self, split: AntennaSplit) -> Option<usize> {
        self.splits.iter().position(|s| *s == split)
    }
}

/// Cluster-to-strategy assignment with its inverse kept in sync.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MatchingState {
    forward: Vec<Option<usize>>,
    inverse: Vec<BTreeSet<usize>>,
}

impl MatchingState {
    pub fn unmatched(num_clusters: usize, num_strategies: usize) -> Self {
        Self {
            forward: vec![None; num_clusters],
            inverse: vec![BTreeSet::new(); num_strategies],
        }
    }

    /// Fully matched state from a cluster → strategy list.
    pub fn from_assignment(assignment: &[usize], num_strategies: usize) -> Result<Self> {
        let mut state = Self::unmatched(assignment.len(), num_strategies);
        for (m, &q) in assignment.iter().enumerate() {
            state.assign(m, q)?;
        }
        Ok(state)
    }

    pub fn num_clusters(&self) -> usize {
        self.forward.len()
    }

    pub fn strategy_of(&self, cluster: usize) -> Option<usize> {
        self.forward[cluster]
    }

    pub fn clusters_on(&self, strategy: usize) -> &BTreeSet<usize> {
        &self.inverse[strategy]
    }

    pub fn unmatched_clusters(&self) -> Vec<usize> {
        (0..self.forward.len())
            .filter(|&m| self.forward[m].is_none())
            .collect()
    }

    /// Strategy per cluster; `None` while any cluster is unmatched.
    pub fn assignment(&self) -> Option<Vec<usize>> {
        self.forward.iter().copied().collect()
    }

    pub fn assign(&mut self, cluster: usize, strategy: usize) -> Result<()> {
        if cluster >= self.forward.len() {
            return Err(Error::IndexOutOfRange {
                index: cluster,
                len: self.forward.len(),
            });
        }
        if strategy >= self.inverse.len() {
            return Err(Error::IndexOutOfRange {
                index: strategy,
                len: self.inverse.len(),
            });
        }
        if let Some(old) = self.forward[cluster] {
            self.inverse[old].remove(&cluster);
        }
        self.forward[cluster] = Some(strategy);
        self.inverse[strategy].insert(cluster);
        Ok(())
    }

    /// Exchanges the strategies of two matched clusters.
    pub fn swap(&mut self, a: usize, b: usize) -> Result<()> {
        let (Some(qa), Some(qb)) = (self.forward[a], self.forward[b]) else {
            return Err(Error::Domain(format!("cluster {a} or {b} is unmatched")));
        };
        self.assign(a, qb)?;
        self.assign(b, qa)
    }

    /// Forward and inverse maps describe the same matching.
    pub fn is_consistent(&self) -> bool {
        let forward_ok = self
            .forward
            .iter()
            .enumerate()
            .all(|(m, q)| q.is_none_or(|q| self.inverse[q].contains(&m)));
        let inverse_ok = self
            .inverse
            .iter()
            .enumerate()
            .all(|(q, set)| set.iter().all(|&m| self.forward.get(m) == Some(&Some(q))));
        forward_ok && inverse_ok
    }
}

/// Everything the matching needs about one drop.
#[derive(Debug, Clone)]
pub struct MatchingInput<'a> {
    /// Channels of all users, user `u = 2m + k`.
    pub channels: &'a [ChannelVector],
    /// Per cluster, the full-array phase profiles aimed at its H- and
    /// L-user. A split takes the first `N_h` entries of the first profile
    /// and the rest of the second.
    pub profiles: Vec<[Vec<Complex64>; 2]>,
    pub strategies: &'a StrategySet,
    pub power: PowerAllocation,
    /// Leakage penalty scale per cluster.
    pub eta: Vec<f64>,
    pub noise: f64,
    pub svd: SvdConvention,
}

/// Executed swap, for tracing.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SwapEvent {
    pub round: usize,
    pub pair: (usize, usize),
    /// Change of the system sum H-rate.
    pub delta_utility: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchingOutcome {
    pub state: MatchingState,
    pub trace: Vec<SwapEvent>,
    pub initial_sum_rate: f64,
    pub final_sum_rate: f64,
    /// The swap cap stopped the search before stability was reached.
    pub capped: bool,
}

/// Rates and gains induced by a full assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub gains: EffectiveGains,
    pub report: RateReport,
}

pub struct Matcher<'a> {
    input: MatchingInput<'a>,
    num_clusters: usize,
    num_antennas: usize,
    /// `prefix[(u·2M + f)][n] = Σ_{j<n} conj(g_u[j]) · profile_f[j]`.
    prefix: Vec<Vec<Complex64>>,
}

impl<'a> Matcher<'a> {
    pub fn new(input: MatchingInput<'a>) -> Result<Self> {
        let m = input.profiles.len();
        if m == 0 || input.channels.len() != 2 * m {
            return Err(Error::DimensionMismatch(format!(
                "{} channels for {m} clusters",
                input.channels.len()
            )));
        }
        if input.power.num_clusters() != m || input.eta.len() != m {
            return Err(Error::DimensionMismatch(
                "power and η must cover every cluster".into(),
            ));
        }
        if input.eta.iter().any(|e| !(*e > 0.0)) {
            return Err(Error::Domain("η must be positive".into()));
        }
        let n = input.channels[0].len();
        let lengths_ok = input.channels.iter().all(|c| c.len() == n)
            && input.profiles.iter().flatten().all(|p| p.len() == n)
            && input.strategies.iter().all(|s| s.total() == n);
        if !lengths_ok {
            return Err(Error::DimensionMismatch(
                "channels, profiles and splits disagree on the array size".into(),
            ));
        }
        let mut prefix = Vec::with_capacity(4 * m * m);
        for ch in input.channels {
            for profile in input.profiles.iter().flatten() {
                let mut acc = Complex64::new(0.0, 0.0);
                let mut row = Vec::with_capacity(n + 1);
                row.push(acc);
                for (g, w) in ch.entries.iter().zip(profile) {
                    acc += g.conj() * w;
                    row.push(acc);
                }
                prefix.push(row);
            }
        }
        Ok(Self {
            num_clusters: m,
            num_antennas: n,
            prefix,
            input,
        })
    }

    pub fn num_clusters(&self) -> usize {
        self.num_clusters
    }

    pub fn strategies(&self) -> &StrategySet {
        self.input.strategies
    }

    /// `g_uᴴ w_m` when cluster `m` uses strategy `q`.
    fn response(&self, user: usize, cluster: usize, q: usize) -> Complex64 {
        let n_h = self.input.strategies.get(q).num_h();
        let base = user * 2 * self.num_clusters;
        let h = &self.prefix[base + 2 * cluster];
        let l = &self.prefix[base + 2 * cluster + 1];
        h[n_h] + l[self.num_antennas] - l[n_h]
    }

    /// Analog beamformer of `cluster` under strategy `q`.
    pub fn beamformer(&self, cluster: usize, q: usize) -> AnalogBeamformer {
        let n_h = self.input.strategies.get(q).num_h();
        let [ph, pl] = &self.input.profiles[cluster];
        let weights = ph[..n_h].iter().chain(&pl[n_h..]).copied().collect();
        AnalogBeamformer::new(weights).expect("profiles have constant modulus")
    }

    pub fn beamformers(&self, assignment: &[usize]) -> Vec<AnalogBeamformer> {
        assignment
            .iter()
            .enumerate()
            .map(|(m, &q)| self.beamformer(m, q))
            .collect()
    }

    /// Signal-to-leakage ratio of cluster `m` under strategy `q`; `+∞`
    /// when no other cluster exists.
    pub fn preference(&self, m: usize, q: usize) -> f64 {
        let p = &self.input.power;
        let signal: f64 = [Role::H, Role::L]
            .iter()
            .map(|&r| p.get(m, r) * self.response(2 * m + r.offset(), m, q).norm_sqr())
            .sum();
        let leak: f64 = (0..self.num_clusters)
            .filter(|&i| i != m)
            .flat_map(|i| [2 * i, 2 * i + 1])
            .map(|u| self.response(u, m, q).norm_sqr())
            .sum();
        let denom = p.cluster_total(m) * leak;
        if denom == 0.0 {
            f64::INFINITY
        } else {
            signal / denom
        }
    }

    /// Beamspace matrix (`M × 2M`) of a full assignment.
    pub fn beamspace(&self, assignment: &[usize]) -> DMatrix<Complex64> {
        DMatrix::from_fn(self.num_clusters, 2 * self.num_clusters, |m, u| {
            self.response(u, m, assignment[m]).conj()
        })
    }

    pub fn evaluate(&self, assignment: &[usize]) -> Result<Evaluation> {
        let beamspace = self.beamspace(assignment);
        let digital = svd_zf_from_beamspace(&beamspace, self.input.svd)?;
        let gains = EffectiveGains::new(&beamspace, &digital)?;
        let report = RateReport::evaluate(&self.input.power, &gains, self.input.noise);
        Ok(Evaluation { gains, report })
    }

    fn cluster_utility_of(&self, eval: &Evaluation, m: usize) -> f64 {
        let leak: f64 = (0..self.num_clusters)
            .filter(|&i| i != m)
            .flat_map(|i| [(i, Role::H), (i, Role::L)])
            .map(|(i, r)| eval.gains.power(m, i, r))
            .sum();
        eval.report.clusters[m].r_h - self.input.power.cluster_total(m) / self.input.eta[m] * leak
    }

    /// H-rate of cluster `m` minus its scaled leakage onto other clusters.
    /// `−∞` if the assignment admits no zero-forcing precoder.
    pub fn cluster_utility(&self, m: usize, state: &MatchingState) -> f64 {
        match state.assignment().map(|a| self.evaluate(&a)) {
            Some(Ok(eval)) => self.cluster_utility_of(&eval, m),
            _ => f64::NEG_INFINITY,
        }
    }

    /// H-rate summed over the clusters on `q` and over all others, i.e. the
    /// system sum H-rate.
    pub fn strategy_utility(&self, q: usize, state: &MatchingState) -> f64 {
        let Some(Ok(eval)) = state.assignment().map(|a| self.evaluate(&a)) else {
            return f64::NEG_INFINITY;
        };
        let on_q: f64 = state
            .clusters_on(q)
            .iter()
            .map(|&m| eval.report.clusters[m].r_h)
            .sum();
        let off_q: f64 = (0..self.num_clusters)
            .filter(|m| !state.clusters_on(q).contains(m))
            .map(|m| eval.report.clusters[m].r_h)
            .sum();
        on_q + off_q
    }

    fn sum_rate(&self, state: &MatchingState) -> f64 {
        match state.assignment().map(|a| self.evaluate(&a)) {
            Some(Ok(eval)) => sum_rate_h(&eval.report),
            _ => f64::NEG_INFINITY,
        }
    }

    /// Highest-preference strategy; the lowest index wins ties.
    pub fn best_strategy(&self, m: usize) -> usize {
        let mut best = 0;
        let mut best_phi = self.preference(m, 0);
        for q in 1..self.input.strategies.len() {
            let phi = self.preference(m, q);
            if phi > best_phi {
                best = q;
                best_phi = phi;
            }
        }
        best
    }

    /// Proposal phase: every unmatched cluster, in ascending order, proposes
    /// to its favourite strategy and strategies accept all proposers.
    pub fn initial_matching(&self) -> MatchingState {
        let mut state = MatchingState::unmatched(self.num_clusters, self.input.strategies.len());
        while let Some(&m) = state.unmatched_clusters().first() {
            state
                .assign(m, self.best_strategy(m))
                .expect("indices come from the strategy set");
        }
        state
    }

    /// Utilities of the two clusters and the two strategies involved.
    /// Both strategy utilities equal the system sum H-rate.
    fn swap_utilities(&self, m: usize, mt: usize, state: &MatchingState) -> Option<[f64; 4]> {
        let assignment = state.assignment()?;
        let Ok(eval) = self.evaluate(&assignment) else {
            return Some([f64::NEG_INFINITY; 4]);
        };
        let total = sum_rate_h(&eval.report);
        Some([
            self.cluster_utility_of(&eval, m),
            self.cluster_utility_of(&eval, mt),
            total,
            total,
        ])
    }

    /// Whether exchanging the strategies of `m` and `mt` leaves no involved
    /// player worse off and makes at least one better off by more than
    /// [`SWAP_EPSILON`].
    pub fn is_swap_blocking(&self, m: usize, mt: usize, state: &MatchingState) -> bool {
        if m == mt {
            return false;
        }
        let (Some(q), Some(qt)) = (state.strategy_of(m), state.strategy_of(mt)) else {
            return false;
        };
        if q == qt {
            return false;
        }
        let Some(before) = self.swap_utilities(m, mt, state) else {
            return false;
        };
        let mut swapped = state.clone();
        swapped.swap(m, mt).expect("both clusters are matched");
        let Some(after) = self.swap_utilities(m, mt, &swapped) else {
            return false;
        };
        if after.iter().any(|v| !v.is_finite()) {
            return false;
        }
        let no_loss = before.iter().zip(&after).all(|(b, a)| a >= b);
        let gain = before.iter().zip(&after).any(|(b, a)| a - b > SWAP_EPSILON);
        no_loss && gain
    }

    /// First blocking pair in ascending `(m, m̃)` order.
    pub fn find_blocking_pair(&self, state: &MatchingState) -> Option<(usize, usize)> {
        (0..self.num_clusters)
            .flat_map(|m| (m + 1..self.num_clusters).map(move |mt| (m, mt)))
            .find(|&(m, mt)| self.is_swap_blocking(m, mt, state))
    }

    /// Worst-case number of swaps, `4M²Q²`.
    pub fn swap_cap(&self) -> usize {
        let m = self.num_clusters;
        let q = self.input.strategies.len();
        4 * m * m * q * q
    }

    /// Proposal phase followed by swaps until no blocking pair remains.
    pub fn allocate(&self) -> MatchingOutcome {
        let state = self.initial_matching();
        self.refine(state)
    }

    /// Swap phase from a given fully matched state.
    pub fn refine(&self, mut state: MatchingState) -> MatchingOutcome {
        let initial_sum_rate = self.sum_rate(&state);
        let mut current = initial_sum_rate;
        let mut trace = Vec::new();
        let cap = self.swap_cap();
        let mut capped = false;
        while let Some((m, mt)) = self.find_blocking_pair(&state) {
            if trace.len() >= cap {
                log::warn!("swap cap of {cap} reached before a stable matching");
                capped = true;
                break;
            }
            state.swap(m, mt).expect("blocking pairs are matched");
            let next = self.sum_rate(&state);
            trace.push(SwapEvent {
                round: trace.len() + 1,
                pair: (m, mt),
                delta_utility: next - current,
            });
            log::debug!(
                "swap {} clusters ({m}, {mt}) ΔU = {:e}",
                trace.len(),
                next - current
            );
            current = next;
        }
        MatchingOutcome {
            state,
            trace,
            initial_sum_rate,
            final_sum_rate: current,
            capped,
        }
    }
}

/// One line per swap: `round,m,m_tilde,delta_utility`.
pub fn write_trace<W: std::io::Write>(trace: &[SwapEvent], mut out: W) -> std::io::Result<()> {
    writeln!(out, "round,m,m_tilde,delta_utility")?;
    for e in trace {
        writeln!(
            out,
            "{},{},{},{}",
            e.round,
            e.pair.0,
            e.pair.1,
            crate::io::format_sig9(e.delta_utility)
        )?;
    }
    Ok(())
}
