//! Power allocation under per-user QoS floors and a total power budget.
//!
//! Internally every problem works with normalized powers `x = p / P_max`
//! and normalized gains `c = |g|² P_max / σ²`, so the noise is one.

pub mod solver;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rates::{user_index, EffectiveGains, PowerAllocation, Role};
pub use solver::{
    find_interior, maximize_concave, ConcaveObjective, LinearConstraints, LinearObjective,
    Solution, SolverOptions,
};

/// Strict positivity is enforced as `p ≥ POWER_FLOOR · P_max`.
pub const POWER_FLOOR: f64 = 1e-9;
/// Smallest admissible argument of a transformed log term.
pub const FP_DOMAIN_EPS: f64 = 1e-12;

/// SINR needed to support `rate` bit/s/Hz.
pub fn sinr_threshold(rate: f64) -> f64 {
    rate.exp2() - 1.0
}

/// Minimum rates per cluster for the H- and L-users, in bit/s/Hz.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QosThresholds {
    rate_h: Vec<f64>,
    rate_l: Vec<f64>,
}

impl QosThresholds {
    pub fn new(rate_h: Vec<f64>, rate_l: Vec<f64>) -> Result<Self> {
        if rate_h.len() != rate_l.len() || rate_h.is_empty() {
            return Err(Error::DimensionMismatch(
                "need one H and one L threshold per cluster".into(),
            ));
        }
        if let Some(r) = rate_h
            .iter()
            .chain(&rate_l)
            .find(|r| !(r.is_finite() && **r >= 0.0))
        {
            return Err(Error::Domain(format!("invalid minimum rate {r}")));
        }
        Ok(Self { rate_h, rate_l })
    }

    pub fn uniform(num_clusters: usize, rate_h: f64, rate_l: f64) -> Result<Self> {
        Self::new(vec![rate_h; num_clusters], vec![rate_l; num_clusters])
    }

    pub fn num_clusters(&self) -> usize {
        self.rate_h.len()
    }

    pub fn rate(&self, cluster: usize, role: Role) -> f64 {
        match role {
            Role::H => self.rate_h[cluster],
            Role::L => self.rate_l[cluster],
        }
    }

    pub fn sinr(&self, cluster: usize, role: Role) -> f64 {
        sinr_threshold(self.rate(cluster, role))
    }

    /// Thresholds for a subset of clusters, in the given order.
    pub fn select(&self, clusters: &[usize]) -> Self {
        Self {
            rate_h: clusters.iter().map(|&m| self.rate_h[m]).collect(),
            rate_l: clusters.iter().map(|&m| self.rate_l[m]).collect(),
        }
    }
}

/// Gains normalized by noise and budget.
#[derive(Debug, Clone)]
struct Normalized {
    m: usize,
    /// `c[(u, i)] = |g_{i,u}|² P_max / σ²`.
    c: DMatrix<f64>,
    pmax: f64,
}

impl Normalized {
    fn new(gains: &EffectiveGains, pmax: f64, noise: f64) -> Result<Self> {
        if !(pmax > 0.0 && pmax.is_finite() && noise > 0.0 && noise.is_finite()) {
            return Err(Error::Domain(format!(
                "need positive budget and noise, got {pmax} W and {noise} W"
            )));
        }
        let g = gains.matrix();
        Ok(Self {
            m: gains.num_clusters(),
            c: DMatrix::from_fn(g.nrows(), g.ncols(), |u, i| {
                g[(u, i)].norm_sqr() * pmax / noise
            }),
            pmax,
        })
    }

    fn own(&self, m: usize, role: Role) -> f64 {
        self.c[(user_index(m, role), m)]
    }

    fn cross(&self, stream: usize, m: usize, role: Role) -> f64 {
        self.c[(user_index(m, role), stream)]
    }

    /// Normalized inter-cluster interference at user `(m, role)`.
    fn interference(&self, x: &DVector<f64>, m: usize, role: Role) -> f64 {
        (0..self.m)
            .filter(|&i| i != m)
            .map(|i| (x[2 * i] + x[2 * i + 1]) * self.cross(i, m, role))
            .sum()
    }

    fn sum_rate_h(&self, x: &DVector<f64>) -> f64 {
        (0..self.m)
            .map(|m| {
                (1.0 + x[2 * m] * self.own(m, Role::H) / (self.interference(x, m, Role::H) + 1.0))
                    .log2()
            })
            .sum()
    }

    fn to_allocation(&self, x: &DVector<f64>) -> PowerAllocation {
        PowerAllocation::new(x.iter().map(|v| v.max(0.0) * self.pmax).collect())
            .expect("solver output has the right shape")
    }

    fn normalize(&self, p: &PowerAllocation) -> Result<DVector<f64>> {
        if p.num_clusters() != self.m {
            return Err(Error::DimensionMismatch(format!(
                "{} clusters of power for {} clusters of gains",
                p.num_clusters(),
                self.m
            )));
        }
        Ok(DVector::from_iterator(
            2 * self.m,
            p.as_slice().iter().map(|v| v / self.pmax),
        ))
    }

    /// QoS, SIC-decoding, budget and floor rows. `h_interference` keeps the
    /// inter-cluster term in the H-user floor.
    fn constraints(&self, qos: &QosThresholds, h_interference: bool) -> Result<LinearConstraints> {
        if qos.num_clusters() != self.m {
            return Err(Error::DimensionMismatch(format!(
                "{} QoS entries for {} clusters",
                qos.num_clusters(),
                self.m
            )));
        }
        let n = 2 * self.m;
        let mut cons = LinearConstraints::new(n);
        for m in 0..self.m {
            let (h, l) = (2 * m, 2 * m + 1);
            let ch = self.own(m, Role::H);
            let cl = self.own(m, Role::L);
            if ch <= 0.0 || cl <= 0.0 {
                return Err(Error::Infeasible {
                    constraint: format!("zero effective gain in cluster {m}"),
                    violation: f64::INFINITY,
                });
            }
            let rh = qos.sinr(m, Role::H);
            let rl = qos.sinr(m, Role::L);

            // x_h ≥ r_h (I_h + 1) / c_h
            let mut row = vec![0.0; n];
            row[h] = -1.0;
            if h_interference {
                add_interference(&mut row, self, m, Role::H, rh / ch);
            }
            cons.push(row, -rh / ch, format!("qos_h[m={m}]"))?;

            // x_l ≥ r_l (x_h + (I_l + 1) / c_l)
            let mut row = vec![0.0; n];
            row[l] = -1.0;
            row[h] = rl;
            add_interference(&mut row, self, m, Role::L, rl / cl);
            cons.push(row, -rl / cl, format!("qos_l[m={m}]"))?;

            // x_l ≥ r_l (x_h + (I_h + 1) / c_h): decodable at the H-user
            let mut row = vec![0.0; n];
            row[l] = -1.0;
            row[h] = rl;
            if h_interference {
                add_interference(&mut row, self, m, Role::H, rl / ch);
            }
            cons.push(row, -rl / ch, format!("sic_l_at_h[m={m}]"))?;
        }
        cons.push(vec![1.0; n], 1.0, "budget")?;
        for j in 0..n {
            let mut row = vec![0.0; n];
            row[j] = -1.0;
            let role = if j % 2 == 0 { "h" } else { "l" };
            cons.push(row, -POWER_FLOOR, format!("floor[m={},{role}]", j / 2))?;
        }
        Ok(cons)
    }
}

fn add_interference(row: &mut [f64], n: &Normalized, m: usize, role: Role, scale: f64) {
    for i in (0..n.m).filter(|&i| i != m) {
        let c = n.cross(i, m, role) * scale;
        row[2 * i] += c;
        row[2 * i + 1] += c;
    }
}

/// `Σ_m log2(1 + c_{m,h} x_{m,h})`.
struct InterferenceFreeRate<'a>(&'a Normalized);

impl ConcaveObjective for InterferenceFreeRate<'_> {
    fn value(&self, x: &DVector<f64>) -> Option<f64> {
        let mut v = 0.0;
        for m in 0..self.0.m {
            let arg = 1.0 + self.0.own(m, Role::H) * x[2 * m];
            if arg <= 0.0 {
                return None;
            }
            v += arg.log2();
        }
        Some(v)
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut g = DVector::zeros(x.len());
        for m in 0..self.0.m {
            let c = self.0.own(m, Role::H);
            g[2 * m] = c / ((1.0 + c * x[2 * m]) * std::f64::consts::LN_2);
        }
        g
    }

    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(x.len(), x.len());
        for m in 0..self.0.m {
            let c = self.0.own(m, Role::H);
            h[(2 * m, 2 * m)] = -c * c / ((1.0 + c * x[2 * m]).powi(2) * std::f64::consts::LN_2);
        }
        h
    }
}

/// Quadratic-transform surrogate with normalized auxiliary variables.
struct Transformed<'a> {
    n: &'a Normalized,
    beta: &'a [f64],
}

impl Transformed<'_> {
    fn argument(&self, x: &DVector<f64>, m: usize) -> f64 {
        let b = self.beta[m];
        1.0 + 2.0 * b * (self.n.own(m, Role::H) * x[2 * m]).sqrt()
            - b * b * (self.n.interference(x, m, Role::H) + 1.0)
    }

    /// Gradient of the log argument for cluster `m`.
    fn argument_gradient(&self, x: &DVector<f64>, m: usize) -> DVector<f64> {
        let b = self.beta[m];
        let mut g = DVector::zeros(x.len());
        g[2 * m] = b * (self.n.own(m, Role::H) / x[2 * m]).sqrt();
        for i in (0..self.n.m).filter(|&i| i != m) {
            let c = -b * b * self.n.cross(i, m, Role::H);
            g[2 * i] = c;
            g[2 * i + 1] = c;
        }
        g
    }
}

impl ConcaveObjective for Transformed<'_> {
    fn value(&self, x: &DVector<f64>) -> Option<f64> {
        let mut v = 0.0;
        for m in 0..self.n.m {
            if x[2 * m] <= 0.0 {
                return None;
            }
            let arg = self.argument(x, m);
            if !(arg >= FP_DOMAIN_EPS) {
                return None;
            }
            v += arg.log2();
        }
        Some(v)
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut g = DVector::zeros(x.len());
        for m in 0..self.n.m {
            let a = self.argument(x, m) * std::f64::consts::LN_2;
            g.axpy(1.0 / a, &self.argument_gradient(x, m), 1.0);
        }
        g
    }

    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(x.len(), x.len());
        for m in 0..self.n.m {
            let arg = self.argument(x, m);
            let da = self.argument_gradient(x, m);
            let ln2 = std::f64::consts::LN_2;
            h.ger(-1.0 / (arg * arg * ln2), &da, &da, 1.0);
            let b = self.beta[m];
            let curvature = -0.5 * b * self.n.own(m, Role::H).sqrt() * x[2 * m].powf(-1.5);
            h[(2 * m, 2 * m)] += curvature / (arg * ln2);
        }
        h
    }
}

/// Optimized allocation with solver diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerSolution {
    pub allocation: PowerAllocation,
    /// Problem objective at the solution, bit/s/Hz.
    pub objective: f64,
    pub kkt_residual: f64,
}

/// Single-beam allocation: maximizes the interference-free H-rates subject
/// to the QoS, SIC and budget constraints. Assumes the H-users see no
/// inter-cluster interference, as after zero-forcing.
pub fn solve_slb(
    gains: &EffectiveGains,
    qos: &QosThresholds,
    pmax: f64,
    noise: f64,
    opts: &SolverOptions,
) -> Result<PowerSolution> {
    let n = Normalized::new(gains, pmax, noise)?;
    let cons = n.constraints(qos, false)?;
    let sol = maximize_concave(&InterferenceFreeRate(&n), &cons, None, opts)?;
    Ok(PowerSolution {
        allocation: n.to_allocation(&sol.x),
        objective: sol.value,
        kkt_residual: sol.kkt_residual,
    })
}

/// `β_m = √(p_{m,h}|g_{m,h}|²) / (I_{m,h} + σ²)`.
pub fn optimal_beta(p: &PowerAllocation, gains: &EffectiveGains, noise: f64) -> Vec<f64> {
    (0..gains.num_clusters())
        .map(|m| {
            let inter = crate::rates::inter_cluster_interference(p, gains, m, Role::H);
            (p.get(m, Role::H) * gains.own_power(m, Role::H)).sqrt() / (inter + noise)
        })
        .collect()
}

/// `Σ_m log2(1 + 2β_m √(p_{m,h}|g_{m,h}|²) − β_m² (I_{m,h} + σ²))`.
pub fn fp_objective(
    p: &PowerAllocation,
    beta: &[f64],
    gains: &EffectiveGains,
    noise: f64,
) -> Result<f64> {
    if beta.len() != gains.num_clusters() || p.num_clusters() != gains.num_clusters() {
        return Err(Error::DimensionMismatch(
            "β, p and gains disagree on M".into(),
        ));
    }
    let mut total = 0.0;
    for (m, b) in beta.iter().enumerate() {
        let inter = crate::rates::inter_cluster_interference(p, gains, m, Role::H);
        let arg = 1.0 + 2.0 * b * (p.get(m, Role::H) * gains.own_power(m, Role::H)).sqrt()
            - b * b * (inter + noise);
        if arg <= 0.0 {
            return Err(Error::Domain(format!(
                "transformed log argument {arg} ≤ 0 in cluster {m}"
            )));
        }
        total += arg.log2();
    }
    Ok(total)
}

/// Maximizes the transformed objective for fixed `β` over the multi-beam
/// constraint polyhedron. `start`, when strictly feasible, seeds the solver.
pub fn solve_fp_inner(
    beta: &[f64],
    gains: &EffectiveGains,
    qos: &QosThresholds,
    pmax: f64,
    noise: f64,
    start: Option<&PowerAllocation>,
    opts: &SolverOptions,
) -> Result<PowerSolution> {
    let n = Normalized::new(gains, pmax, noise)?;
    if beta.len() != n.m {
        return Err(Error::DimensionMismatch(format!(
            "{} β values for {} clusters",
            beta.len(),
            n.m
        )));
    }
    let scaled: Vec<f64> = beta.iter().map(|b| b * noise.sqrt()).collect();
    let cons = n.constraints(qos, true)?;
    let objective = Transformed {
        n: &n,
        beta: &scaled,
    };
    let x0 = match start {
        Some(p) => Some(n.normalize(p)?),
        None => None,
    };
    let x0 = match x0 {
        Some(x) if objective.value(&x).is_some() => Some(x),
        _ => None,
    };
    let sol = match maximize_concave(&objective, &cons, x0.as_ref(), opts) {
        Err(Error::Domain(_)) => {
            // the generic interior point may sit outside the log domain
            let x = find_interior(&cons, opts)?;
            let b = normalized_beta(&n, &x);
            maximize_concave(&Transformed { n: &n, beta: &b }, &cons, Some(&x), opts)?
        }
        other => other?,
    };
    Ok(PowerSolution {
        allocation: n.to_allocation(&sol.x),
        objective: sol.value,
        kkt_residual: sol.kkt_residual,
    })
}

fn normalized_beta(n: &Normalized, x: &DVector<f64>) -> Vec<f64> {
    (0..n.m)
        .map(|m| (n.own(m, Role::H) * x[2 * m]).sqrt() / (n.interference(x, m, Role::H) + 1.0))
        .collect()
}

/// Any allocation satisfying the multi-beam QoS constraints and the budget.
/// The uniform split is returned when it already qualifies.
pub fn find_feasible(
    gains: &EffectiveGains,
    qos: &QosThresholds,
    pmax: f64,
    noise: f64,
    opts: &SolverOptions,
) -> Result<PowerAllocation> {
    let n = Normalized::new(gains, pmax, noise)?;
    let cons = n.constraints(qos, true)?;
    // shrink slightly so the budget row is strictly satisfied
    let uniform = DVector::from_element(2 * n.m, (1.0 - 1e-9) / (2 * n.m) as f64);
    if cons.max_violation(&uniform).is_some_and(|(_, v)| v < 0.0) {
        return Ok(n.to_allocation(&uniform));
    }
    Ok(n.to_allocation(&find_interior(&cons, opts)?))
}

/// Outcome of the alternating fractional-programming allocation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FpState {
    pub beta: Vec<f64>,
    pub allocation: PowerAllocation,
    /// Sum H-rate after initialization and after each accepted iteration.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub kkt_residual: f64,
}

impl FpState {
    pub fn objective(&self) -> f64 {
        *self.trace.last().expect("trace holds the initial value")
    }
}

/// Multi-beam allocation by alternating the closed-form `β` update with the
/// convex inner problem, starting from a feasible point.
pub fn solve_mlb(
    gains: &EffectiveGains,
    qos: &QosThresholds,
    pmax: f64,
    noise: f64,
    opts: &SolverOptions,
) -> Result<FpState> {
    let start = find_feasible(gains, qos, pmax, noise, opts)?;
    solve_mlb_from(gains, qos, pmax, noise, start, opts)
}

/// [`solve_mlb`] from a caller-supplied feasible allocation.
pub fn solve_mlb_from(
    gains: &EffectiveGains,
    qos: &QosThresholds,
    pmax: f64,
    noise: f64,
    start: PowerAllocation,
    opts: &SolverOptions,
) -> Result<FpState> {
    opts.validate()?;
    let n = Normalized::new(gains, pmax, noise)?;
    let mut x = n.normalize(&start)?;
    let mut value = n.sum_rate_h(&x);
    let mut trace = vec![value];
    let mut converged = false;
    let mut iterations = 0;
    let mut kkt = f64::NAN;
    while iterations < opts.fp_max_iterations {
        iterations += 1;
        let beta = optimal_beta(&n.to_allocation(&x), gains, noise);
        let sol = solve_fp_inner(
            &beta,
            gains,
            qos,
            pmax,
            noise,
            Some(&n.to_allocation(&x)),
            opts,
        )?;
        let candidate = n.normalize(&sol.allocation)?;
        let next = n.sum_rate_h(&candidate);
        if next < value {
            // the inner solve only ever improves up to its own tolerance
            converged = true;
            break;
        }
        let change = (next - value).abs() / value.abs().max(1.0);
        x = candidate;
        value = next;
        kkt = sol.kkt_residual;
        trace.push(value);
        if change < opts.fp_tolerance {
            converged = true;
            break;
        }
    }
    let allocation = n.to_allocation(&x);
    Ok(FpState {
        beta: optimal_beta(&allocation, gains, noise),
        allocation,
        trace,
        iterations,
        converged,
        kkt_residual: kkt,
    })
}

/// Largest violation of the multi-beam QoS and budget constraints, in
/// normalized units. Zero or negative means feasible.
pub fn constraint_violation(
    p: &PowerAllocation,
    gains: &EffectiveGains,
    qos: &QosThresholds,
    pmax: f64,
    noise: f64,
) -> Result<f64> {
    let n = Normalized::new(gains, pmax, noise)?;
    let cons = n.constraints(qos, true)?;
    let x = n.normalize(p)?;
    Ok(cons.max_violation(&x).map_or(0.0, |(_, v)| v))
}

/// Water-filling over parallel channels with per-user floors:
/// maximizes `Σ log2(1 + c_u p_u)` subject to `Σ p_u ≤ budget` and
/// `p_u ≥ floor_u`. `c_u` is the gain-to-noise ratio.
pub fn water_filling(cnr: &[f64], floors: &[f64], budget: f64) -> Result<Vec<f64>> {
    if cnr.len() != floors.len() || cnr.is_empty() {
        return Err(Error::DimensionMismatch(format!(
            "{} gains for {} floors",
            cnr.len(),
            floors.len()
        )));
    }
    if cnr.iter().any(|c| !(*c > 0.0)) || floors.iter().any(|f| !(*f >= 0.0)) {
        return Err(Error::Domain(
            "gains must be positive and floors non-negative".into(),
        ));
    }
    let required: f64 = floors.iter().sum();
    if !(required <= budget) {
        return Err(Error::Infeasible {
            constraint: "budget".into(),
            violation: (required - budget) / budget,
        });
    }
    let fill = |mu: f64| -> Vec<f64> {
        cnr.iter()
            .zip(floors)
            .map(|(c, f)| f.max(mu - 1.0 / c))
            .collect()
    };
    let (mut lo, mut hi) = (
        0.0,
        budget + cnr.iter().map(|c| 1.0 / c).fold(0.0, f64::max),
    );
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if fill(mid).iter().sum::<f64>() <= budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(fill(lo))
}
