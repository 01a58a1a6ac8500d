//! Log-barrier interior-point method for small concave maximization
//! problems over a polyhedron `A x ≤ b`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverOptions {
    /// Target KKT residual of the inner solver.
    pub tolerance: f64,
    /// Cap on the total number of Newton steps per solve.
    pub max_iterations: usize,
    /// Barrier parameter multiplier between centering stages.
    pub barrier_growth: f64,
    pub initial_barrier: f64,
    /// Relative objective change that stops the alternating FP loop.
    pub fp_tolerance: f64,
    pub fp_max_iterations: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iterations: 5_000,
            barrier_growth: 20.0,
            initial_barrier: 1.0,
            fp_tolerance: 1e-6,
            fp_max_iterations: 200,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        let ok = self.tolerance > 0.0
            && self.fp_tolerance > 0.0
            && self.barrier_growth > 1.0
            && self.initial_barrier > 0.0
            && self.max_iterations > 0
            && self.fp_max_iterations > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!("invalid solver options {self:?}")))
        }
    }
}

/// Twice-differentiable concave function. `value` returns `None` outside
/// the function's domain; the solver never accepts such a point.
pub trait ConcaveObjective {
    fn value(&self, x: &DVector<f64>) -> Option<f64>;
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64>;
    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64>;
}

/// `f(x) = cᵀx`.
#[derive(Debug, Clone)]
pub struct LinearObjective(pub DVector<f64>);

impl ConcaveObjective for LinearObjective {
    fn value(&self, x: &DVector<f64>) -> Option<f64> {
        Some(self.0.dot(x))
    }
    fn gradient(&self, _x: &DVector<f64>) -> DVector<f64> {
        self.0.clone()
    }
    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(x.len(), x.len())
    }
}

/// Labelled rows of `A x ≤ b`, each scaled to unit ∞-norm.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraints {
    dim: usize,
    rows: Vec<DVector<f64>>,
    rhs: Vec<f64>,
    labels: Vec<String>,
}

impl LinearConstraints {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            rows: Vec::new(),
            rhs: Vec::new(),
            labels: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Adds `row · x ≤ rhs`. All-zero rows are kept only as a check on `rhs`.
    pub fn push(&mut self, row: Vec<f64>, rhs: f64, label: impl Into<String>) -> Result<()> {
        if row.len() != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "constraint row of length {} for dimension {}",
                row.len(),
                self.dim
            )));
        }
        if row.iter().chain([&rhs]).any(|v| !v.is_finite()) {
            return Err(Error::Domain(format!(
                "non-finite constraint {}",
                label.into()
            )));
        }
        let scale = row.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let label = label.into();
        if scale == 0.0 {
            if rhs < 0.0 {
                return Err(Error::Infeasible {
                    constraint: label,
                    violation: -rhs,
                });
            }
            return Ok(());
        }
        self.rows.push(DVector::from_iterator(
            self.dim,
            row.into_iter().map(|v| v / scale),
        ));
        self.rhs.push(rhs / scale);
        self.labels.push(label);
        Ok(())
    }

    pub fn label(&self, i: usize) -> &str {
        &self.labels[i]
    }

    /// `b_i − a_iᵀx` for every row.
    pub fn slacks(&self, x: &DVector<f64>) -> Vec<f64> {
        self.rows
            .iter()
            .zip(&self.rhs)
            .map(|(a, b)| b - a.dot(x))
            .collect()
    }

    /// Largest violation and the row attaining it.
    pub fn max_violation(&self, x: &DVector<f64>) -> Option<(usize, f64)> {
        self.slacks(x)
            .into_iter()
            .enumerate()
            .map(|(i, s)| (i, -s))
            .fold(None, |best, (i, v)| match best {
                Some((_, bv)) if bv >= v => best,
                _ => Some((i, v)),
            })
    }

    fn strictly_feasible(&self, x: &DVector<f64>) -> bool {
        self.slacks(x).iter().all(|&s| s > 0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub x: DVector<f64>,
    pub value: f64,
    pub kkt_residual: f64,
    pub newton_steps: usize,
}

const MAX_CENTERING_STEPS: usize = 200;

/// Newton step count shared by all centering stages of one solve.
struct Budget {
    used: usize,
    cap: usize,
}

struct Barrier<'a, O: ?Sized> {
    objective: &'a O,
    constraints: &'a LinearConstraints,
    t: f64,
}

impl<O: ConcaveObjective + ?Sized> Barrier<'_, O> {
    /// `−f(x) − (1/t) Σ ln s_i`, scaled by `1/t` to keep magnitudes moderate.
    fn value(&self, x: &DVector<f64>) -> Option<f64> {
        let mut log_sum = 0.0;
        for s in self.constraints.slacks(x) {
            if s <= 0.0 {
                return None;
            }
            log_sum += s.ln();
        }
        let f = self.objective.value(x)?;
        f.is_finite().then(|| -f - log_sum / self.t)
    }

    fn newton_system(&self, x: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let mut grad = -self.objective.gradient(x);
        let mut hess = -self.objective.hessian(x);
        for (a, s) in self.constraints.rows.iter().zip(self.constraints.slacks(x)) {
            grad.axpy(1.0 / (self.t * s), a, 1.0);
            hess.ger(1.0 / (self.t * s * s), a, a, 1.0);
        }
        (grad, hess)
    }

    /// Minimizes the scaled barrier function from a strictly feasible `x`.
    fn center(&self, x: &mut DVector<f64>, budget: &mut Budget) -> Result<()> {
        for _ in 0..MAX_CENTERING_STEPS {
            let (grad, hess) = self.newton_system(x);
            let step = solve_spd(hess, &grad)?;
            let decrement = grad.dot(&step);
            if !(decrement.is_finite()) {
                return Err(Error::Domain("non-finite Newton decrement".into()));
            }
            // decrement of the unscaled barrier function t·ψ
            if self.t * decrement <= 1e-10 {
                return Ok(());
            }
            if budget.used >= budget.cap {
                return Err(Error::IterationCap {
                    iterations: budget.used,
                    residual: decrement,
                    best: x.iter().copied().collect(),
                });
            }
            budget.used += 1;
            let current = self
                .value(x)
                .ok_or_else(|| Error::Domain("iterate left the barrier domain".into()))?;
            let mut alpha = 1.0;
            let mut accepted = false;
            for _ in 0..80 {
                let trial = &*x - alpha * &step;
                if let Some(v) = self.value(&trial) {
                    // near the minimizer roundoff hides the decrease; take the
                    // feasible Newton step unconditionally there
                    if self.t * decrement < 1e-6 || v <= current - 0.25 * alpha * decrement {
                        *x = trial;
                        accepted = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if !accepted {
                return Ok(());
            }
        }
        Ok(())
    }
}

fn solve_spd(mut h: DMatrix<f64>, g: &DVector<f64>) -> Result<DVector<f64>> {
    let n = h.nrows();
    let scale = (0..n)
        .fold(0.0f64, |m, i| m.max(h[(i, i)].abs()))
        .max(1e-300);
    let mut jitter = 0.0;
    for _ in 0..8 {
        if let Some(chol) = h.clone().cholesky() {
            return Ok(chol.solve(g));
        }
        jitter = if jitter == 0.0 {
            scale * 1e-14
        } else {
            jitter * 100.0
        };
        for i in 0..n {
            h[(i, i)] += jitter;
        }
    }
    Err(Error::Domain(
        "Newton system is not positive definite".into(),
    ))
}

/// KKT residual of `x`. Multipliers of nearly active rows are refit by
/// least squares, since `1/(t s_i)` loses precision when `s_i` is tiny;
/// the remaining rows keep their central-path values.
fn kkt_residual<O: ConcaveObjective + ?Sized>(
    objective: &O,
    constraints: &LinearConstraints,
    x: &DVector<f64>,
    t: f64,
) -> f64 {
    let slacks = constraints.slacks(x);
    let rows = &constraints.rows;
    let mut lambda: Vec<f64> = slacks
        .iter()
        .map(|&s| 1.0 / (t * s.max(f64::MIN_POSITIVE)))
        .collect();
    let mut active: Vec<usize> = (0..rows.len()).filter(|&i| slacks[i] <= 1e-4).collect();
    let grad = objective.gradient(x);
    for _ in 0..rows.len().max(1) {
        if active.is_empty() {
            break;
        }
        let mut target = grad.clone();
        for i in (0..rows.len()).filter(|i| !active.contains(i)) {
            target.axpy(-lambda[i], &rows[i], 1.0);
        }
        let a = DMatrix::from_columns(&active.iter().map(|&i| rows[i].clone()).collect::<Vec<_>>());
        let Ok(fit) = a.clone().svd(true, true).solve(&target, 1e-12) else {
            break;
        };
        for (k, &i) in active.iter().enumerate() {
            lambda[i] = fit[k];
        }
        let negative: Vec<usize> = active
            .iter()
            .copied()
            .filter(|&i| lambda[i] < 0.0)
            .collect();
        if negative.is_empty() {
            break;
        }
        for i in negative {
            lambda[i] = 0.0;
        }
        active.retain(|&i| lambda[i] > 0.0);
    }
    let mut stationarity = grad;
    let mut complementarity = 0.0f64;
    let mut primal = 0.0f64;
    for ((a, &s), &l) in rows.iter().zip(&slacks).zip(&lambda) {
        stationarity.axpy(-l, a, 1.0);
        complementarity = complementarity.max(l * s.abs());
        primal = primal.max(-s);
    }
    stationarity.amax().max(complementarity).max(primal)
}

/// Maximizes a concave function over `A x ≤ b`. A strictly feasible start
/// is found by [`find_interior`] when `start` is absent or not interior.
pub fn maximize_concave<O: ConcaveObjective + ?Sized>(
    objective: &O,
    constraints: &LinearConstraints,
    start: Option<&DVector<f64>>,
    opts: &SolverOptions,
) -> Result<Solution> {
    opts.validate()?;
    let mut x = match start {
        Some(s) if s.len() == constraints.dim() && constraints.strictly_feasible(s) => s.clone(),
        Some(s) if s.len() != constraints.dim() => {
            return Err(Error::DimensionMismatch(format!(
                "start of length {} for dimension {}",
                s.len(),
                constraints.dim()
            )))
        }
        _ => find_interior(constraints, opts)?,
    };
    if objective.value(&x).is_none() {
        return Err(Error::Domain(
            "starting point is outside the objective's domain".into(),
        ));
    }
    let mut budget = Budget {
        used: 0,
        cap: opts.max_iterations,
    };
    let m = constraints.len().max(1) as f64;
    let mut t = opts.initial_barrier;
    loop {
        let barrier = Barrier {
            objective,
            constraints,
            t,
        };
        barrier.center(&mut x, &mut budget)?;
        if m / t <= opts.tolerance * 0.1 {
            break;
        }
        t *= opts.barrier_growth;
    }
    let value = objective.value(&x).expect("iterates stay in the domain");
    Ok(Solution {
        kkt_residual: kkt_residual(objective, constraints, &x, t),
        value,
        x,
        newton_steps: budget.used,
    })
}

/// Strictly feasible point of `A x ≤ b` that maximizes the smallest slack
/// (capped at 1). Reports the most violated constraint when none exists.
pub fn find_interior(
    constraints: &LinearConstraints,
    opts: &SolverOptions,
) -> Result<DVector<f64>> {
    let n = constraints.dim();
    let mut lifted = LinearConstraints::new(n + 1);
    for ((a, b), label) in constraints
        .rows
        .iter()
        .zip(&constraints.rhs)
        .zip(&constraints.labels)
    {
        let mut row: Vec<f64> = a.iter().copied().collect();
        row.push(-1.0);
        lifted.rows.push(DVector::from_vec(row));
        lifted.rhs.push(*b);
        lifted.labels.push(label.clone());
    }
    let mut floor = vec![0.0; n + 1];
    floor[n] = -1.0;
    lifted.rows.push(DVector::from_vec(floor));
    lifted.rhs.push(1.0);
    lifted.labels.push("slack floor".into());

    let x0 = DVector::<f64>::zeros(n);
    let worst = constraints.max_violation(&x0).map_or(0.0, |(_, v)| v);
    let mut y0 = x0.clone().insert_row(n, 0.0);
    // relative margin too, so the start stays interior for huge violations
    y0[n] = worst.max(0.0) * (1.0 + 1e-6) + 1.0;
    if !lifted.strictly_feasible(&y0) {
        return Err(Error::Domain("phase-1 start is not interior".into()));
    }
    let mut c = DVector::zeros(n + 1);
    c[n] = -1.0;
    let phase1 = maximize_concave(&LinearObjective(c), &lifted, Some(&y0), opts)?;
    let x = phase1.x.rows(0, n).into_owned();
    if constraints.strictly_feasible(&x) {
        return Ok(x);
    }
    let (row, violation) = constraints
        .max_violation(&x)
        .expect("an infeasible system has at least one row");
    Err(Error::Infeasible {
        constraint: constraints.label(row).to_string(),
        violation: violation.max(0.0),
    })
}
