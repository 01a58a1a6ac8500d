//! Seeded Monte Carlo averages over user drops.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::schemes::{run_scheme, Scheme, SystemParams, TrialResult};
use super::{drop_scenario, ScenarioConfig};
use crate::error::{Error, Result};
use crate::par::{map_indexed, Execution};
use crate::power::SolverOptions;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    PmaxDbm,
    NumAntennas,
}

impl SweepVariable {
    pub fn name(self) -> &'static str {
        match self {
            SweepVariable::PmaxDbm => "pmax_dbm",
            SweepVariable::NumAntennas => "num_antennas",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
}

impl Default for Sweep {
    fn default() -> Self {
        Self {
            variable: SweepVariable::PmaxDbm,
            values: vec![20.0, 25.0, 30.0, 35.0, 40.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    SumRateH,
    SumRateL,
    InterferenceW,
    ResidualInterferenceW,
}

impl Metric {
    pub const ALL: [Metric; 4] = [
        Metric::SumRateH,
        Metric::SumRateL,
        Metric::InterferenceW,
        Metric::ResidualInterferenceW,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::SumRateH => "sum_rate_h",
            Metric::SumRateL => "sum_rate_l",
            Metric::InterferenceW => "interference_w",
            Metric::ResidualInterferenceW => "residual_interference_w",
        }
    }

    pub fn of(self, r: &TrialResult) -> f64 {
        match self {
            Metric::SumRateH => r.sum_rate_h,
            Metric::SumRateL => r.sum_rate_l,
            Metric::InterferenceW => r.interference_w,
            Metric::ResidualInterferenceW => r.residual_interference_w,
        }
    }
}

/// What to simulate: a scenario, one swept variable, and the schemes to
/// compare on common drops.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Experiment {
    pub scenario: ScenarioConfig,
    pub sweep: Sweep,
    pub schemes: Vec<Scheme>,
    pub trials: usize,
    pub solver: SolverOptions,
}

impl Experiment {
    pub fn validate(&self) -> Result<()> {
        let err = |path: &str, message: String| Error::Config {
            path: path.into(),
            message,
        };
        self.scenario.validate()?;
        self.solver
            .validate()
            .map_err(|e| err("solver", e.to_string()))?;
        if self.trials == 0 {
            return Err(err("trials", "need at least one trial".into()));
        }
        if self.schemes.is_empty() {
            return Err(err("schemes", "no schemes selected".into()));
        }
        if self.sweep.values.is_empty() {
            return Err(err("sweep.values", "empty sweep".into()));
        }
        for (i, &v) in self.sweep.values.iter().enumerate() {
            let path = format!("sweep.values[{i}]");
            match self.sweep.variable {
                SweepVariable::PmaxDbm if !v.is_finite() => {
                    return Err(err(&path, format!("{v} dBm is not finite")));
                }
                SweepVariable::NumAntennas if !(v >= 2.0 && v.fract() == 0.0 && v <= 1e6) => {
                    return Err(err(&path, format!("{v} is not an antenna count")));
                }
                _ => {}
            }
        }
        for (i, _) in self.sweep.values.iter().enumerate() {
            self.params(i)
                .map_err(|e| err(&format!("sweep.values[{i}]"), e.to_string()))?;
        }
        Ok(())
    }

    /// System parameters at sweep point `i`.
    pub fn params(&self, i: usize) -> Result<SystemParams> {
        let v = self.sweep.values[i];
        let (n, pmax) = match self.sweep.variable {
            SweepVariable::PmaxDbm => (self.scenario.num_antennas, v),
            SweepVariable::NumAntennas => (v as usize, self.scenario.pmax_dbm),
        };
        let params = SystemParams::new(&self.scenario, n, pmax, &self.solver)?;
        crate::matching::strategy_set(n, params.n_min)?;
        Ok(params)
    }
}

fn scheme_seed(seed: u64, scheme: Scheme) -> u64 {
    let idx = Scheme::ALL
        .iter()
        .position(|s| *s == scheme)
        .expect("listed") as u64;
    seed ^ (idx + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Per-trial generator for the drop; stream `trial` of the base seed.
pub fn drop_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

/// Results indexed `[sweep point][scheme][trial]`. Each trial draws one drop
/// shared by all sweep points and schemes; scheme-internal randomness has
/// its own stream per (scheme, trial), so results do not depend on the
/// execution mode or the order of the scheme list.
pub fn run_trials(exp: &Experiment, exec: Execution) -> Result<Vec<Vec<Vec<TrialResult>>>> {
    exp.validate()?;
    let params = (0..exp.sweep.values.len())
        .map(|i| exp.params(i))
        .collect::<Result<Vec<_>>>()?;
    let seed = exp.scenario.seed;
    let per_trial = map_indexed(exp.trials, exec, |t| -> Result<Vec<Vec<TrialResult>>> {
        let drop = drop_scenario(&exp.scenario, &mut drop_rng(seed, t))?;
        Ok(params
            .iter()
            .map(|p| {
                exp.schemes
                    .iter()
                    .map(|&s| {
                        let mut rng = drop_rng(scheme_seed(seed, s), t);
                        run_scheme(s, &drop, p, &mut rng)
                    })
                    .collect()
            })
            .collect())
    });
    let per_trial = per_trial.into_iter().collect::<Result<Vec<_>>>()?;
    Ok((0..params.len())
        .map(|i| {
            (0..exp.schemes.len())
                .map(|s| per_trial.iter().map(|t| t[i][s].clone()).collect())
                .collect()
        })
        .collect())
}

/// One averaged point of one curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveRow {
    pub sweep_var: SweepVariable,
    pub value: f64,
    pub scheme: Scheme,
    pub metric: Metric,
    pub mean: f64,
    pub stderr: f64,
    pub n_feasible: usize,
    pub n_total: usize,
}

/// Mean and standard error over the feasible trials. The standard error
/// is NaN with fewer than two samples.
pub fn mean_stderr(samples: &[f64]) -> (f64, f64) {
    let n = samples.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, f64::NAN);
    }
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Aggregates [`run_trials`] into rows ordered by sweep point, scheme (in
/// config order) and metric.
pub fn summarize(exp: &Experiment, results: &[Vec<Vec<TrialResult>>]) -> Vec<CurveRow> {
    let mut rows = Vec::new();
    for (i, per_scheme) in results.iter().enumerate() {
        for (s, trials) in per_scheme.iter().enumerate() {
            let feasible: Vec<&TrialResult> = trials.iter().filter(|r| r.feasible).collect();
            for metric in Metric::ALL {
                let samples: Vec<f64> = feasible.iter().map(|r| metric.of(r)).collect();
                let (mean, stderr) = mean_stderr(&samples);
                rows.push(CurveRow {
                    sweep_var: exp.sweep.variable,
                    value: exp.sweep.values[i],
                    scheme: exp.schemes[s],
                    metric,
                    mean,
                    stderr,
                    n_feasible: feasible.len(),
                    n_total: trials.len(),
                });
            }
        }
    }
    rows
}

pub fn monte_carlo(exp: &Experiment, exec: Execution) -> Result<Vec<CurveRow>> {
    let results = run_trials(exp, exec)?;
    Ok(summarize(exp, &results))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Experiment {
        Experiment {
            scenario: ScenarioConfig {
                num_antennas: 64,
                seed: 11,
                ..ScenarioConfig::default()
            },
            sweep: Sweep {
                variable: SweepVariable::PmaxDbm,
                values: vec![25.0, 35.0],
            },
            schemes: vec![Scheme::SlbNfNoma, Scheme::NfOma],
            trials: 4,
            solver: SolverOptions::default(),
        }
    }

    #[test]
    fn stderr_of_known_samples() {
        let (m, s) = mean_stderr(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        // sample variance 5/3
        assert!((s - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
        assert!(mean_stderr(&[]).0.is_nan());
        assert!(mean_stderr(&[1.0]).1.is_nan());
    }

    #[test]
    fn row_count_and_order() {
        let exp = small();
        let rows = monte_carlo(&exp, Execution::Sequential).unwrap();
        assert_eq!(rows.len(), 2 * 2 * Metric::ALL.len());
        assert_eq!(rows[0].scheme, Scheme::SlbNfNoma);
        assert_eq!(rows[0].metric, Metric::SumRateH);
        assert_eq!(rows[4].scheme, Scheme::NfOma);
        assert_eq!(rows[8].value, 35.0);
        assert!(rows.iter().all(|r| r.n_total == 4));
    }

    #[test]
    fn execution_mode_does_not_change_results() {
        let exp = small();
        let a = run_trials(&exp, Execution::Sequential).unwrap();
        let b = run_trials(&exp, Execution::Parallel).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a
            .iter()
            .flatten()
            .flatten()
            .zip(b.iter().flatten().flatten())
        {
            assert_eq!(format!("{x:?}"), format!("{y:?}"));
        }
    }

    #[test]
    fn scheme_order_does_not_change_results() {
        let exp = small();
        let mut rev = exp.clone();
        rev.schemes.reverse();
        let a = run_trials(&exp, Execution::Sequential).unwrap();
        let b = run_trials(&rev, Execution::Sequential).unwrap();
        assert_eq!(format!("{:?}", a[0][1]), format!("{:?}", b[0][0]));
    }

    #[test]
    fn bad_sweep_is_rejected() {
        let mut exp = small();
        exp.sweep = Sweep {
            variable: SweepVariable::NumAntennas,
            values: vec![64.0, 12.5],
        };
        match exp.validate() {
            Err(Error::Config { path, .. }) => assert_eq!(path, "sweep.values[1]"),
            other => panic!("{other:?}"),
        }
    }
}
