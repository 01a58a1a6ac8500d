//! Config parsing and CSV output.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::power::SolverOptions;
use crate::scenario::montecarlo::{CurveRow, Experiment, Metric, Sweep};
use crate::scenario::{ScenarioConfig, Scheme, TrialResult};

/// Nine significant digits in scientific notation.
pub fn format_sig9(x: f64) -> String {
    format!("{x:.8e}")
}

fn default_schemes() -> Vec<Scheme> {
    vec![Scheme::SlbNfNoma, Scheme::FfNomaOma, Scheme::NfOma]
}

/// Everything `run` needs. Every field is optional in the JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub scenario: ScenarioConfig,
    pub sweep: Sweep,
    pub schemes: Vec<Scheme>,
    pub trials: usize,
    pub solver: SolverOptions,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioConfig::default(),
            sweep: Sweep::default(),
            schemes: default_schemes(),
            trials: 50,
            solver: SolverOptions::default(),
            output_dir: PathBuf::from("results"),
        }
    }
}

impl RunConfig {
    pub fn experiment(&self) -> Experiment {
        Experiment {
            scenario: self.scenario.clone(),
            sweep: self.sweep.clone(),
            schemes: self.schemes.clone(),
            trials: self.trials,
            solver: self.solver,
        }
    }

    /// Schema-level checks plus the physical ranges of the scenario. Field
    /// paths in errors are relative to the document root.
    pub fn validate(&self) -> Result<()> {
        self.experiment().validate().map_err(|e| match e {
            Error::Config { path, message } if !path.starts_with("sweep") && !is_root(&path) => {
                Error::Config {
                    path: format!("scenario.{path}"),
                    message,
                }
            }
            other => other,
        })
    }

    /// Number of rows `run` writes to `curves.csv`.
    pub fn row_count(&self) -> usize {
        self.sweep.values.len() * self.schemes.len() * Metric::ALL.len()
    }
}

fn is_root(path: &str) -> bool {
    matches!(path, "trials" | "schemes" | "solver")
}

/// Parses and validates a JSON document.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let config: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| Error::Config {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })?;
    config.validate()?;
    Ok(config)
}

/// Reads a config from `path`, or from stdin when `path` is `-`.
pub fn read_config(path: &Path) -> Result<RunConfig> {
    let mut text = String::new();
    let read = if path == Path::new("-") {
        std::io::stdin().read_to_string(&mut text)
    } else {
        std::fs::File::open(path).and_then(|mut f| f.read_to_string(&mut text))
    };
    read.map_err(|e| Error::Config {
        path: ".".into(),
        message: format!("cannot read {}: {e}", path.display()),
    })?;
    parse_config(&text)
}

pub const CURVE_HEADER: &str = "sweep_var,value,scheme,metric,mean,stderr,n_feasible,n_total";

pub fn write_curves<W: Write>(rows: &[CurveRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{CURVE_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.sweep_var.name(),
            format_sig9(r.value),
            r.scheme.name(),
            r.metric.name(),
            format_sig9(r.mean),
            format_sig9(r.stderr),
            r.n_feasible,
            r.n_total
        )?;
    }
    Ok(())
}

pub const TRIAL_HEADER: &str = "value,scheme,trial,feasible,sum_rate_h,sum_rate_l,interference_w,\
residual_interference_w,sic_ok,failure";

/// One row per (sweep point, scheme, trial), indexed as returned by
/// [`crate::scenario::run_trials`].
pub fn write_trials<W: Write>(
    values: &[f64],
    schemes: &[Scheme],
    results: &[Vec<Vec<TrialResult>>],
    mut out: W,
) -> std::io::Result<()> {
    writeln!(out, "{TRIAL_HEADER}")?;
    for (value, per_scheme) in values.iter().zip(results) {
        for (scheme, trials) in schemes.iter().zip(per_scheme) {
            for (t, r) in trials.iter().enumerate() {
                let failure = r.failure.as_deref().unwrap_or("").replace([',', '\n'], ";");
                writeln!(
                    out,
                    "{},{},{t},{},{},{},{},{},{},{failure}",
                    format_sig9(*value),
                    scheme.name(),
                    r.feasible,
                    format_sig9(r.sum_rate_h),
                    format_sig9(r.sum_rate_l),
                    format_sig9(r.interference_w),
                    format_sig9(r.residual_interference_w),
                    r.sic_ok.iter().all(|ok| *ok),
                )?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{Framework, SweepVariable};
    use proptest::prelude::*;

    #[test]
    fn sig9_formatting() {
        assert_eq!(format_sig9(1.0), "1.00000000e0");
        assert_eq!(format_sig9(-0.000123456789123), "-1.23456789e-4");
        assert_eq!(format_sig9(f64::NAN), "NaN");
    }

    #[test]
    fn empty_object_gives_defaults() {
        let c = parse_config("{}").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.scenario.carrier_hz, 30e9);
        assert_eq!(c.scenario.spacing_wavelengths, 0.5);
        assert_eq!(c.scenario.noise_dbm, -90.0);
        assert_eq!(c.scenario.num_clusters, 4);
        assert_eq!(c.scenario.rate_h_min_bps_hz, 6.0);
    }

    #[test]
    fn unknown_key_is_rejected_with_path() {
        match parse_config(r#"{"scenario": {"noise_dB": -90}}"#) {
            Err(Error::Config { path, message }) => {
                assert_eq!(path, "scenario.noise_dB");
                assert!(message.contains("noise_dB"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn type_error_names_field() {
        match parse_config(r#"{"sweep": {"variable": "pmax_dbm", "values": [1, "x"]}}"#) {
            Err(Error::Config { path, .. }) => assert_eq!(path, "sweep.values[1]"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_angle_range_names_field() {
        let text = r#"{"scenario": {"clusters": [
            {"angle_deg": [-40, -30], "radius_m": [30, 50]},
            {"angle_deg": [-5, 5], "radius_m": [35, 55]},
            {"angle_deg": [-5, 5], "radius_m": [60, 80]},
            {"angle_deg": [30, 75], "radius_m": [40, 60]}]}}"#;
        match parse_config(text) {
            Err(Error::Config { path, .. }) => assert_eq!(path, "scenario.clusters[3].angle_deg"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn zero_trials_rejected() {
        match parse_config(r#"{"trials": 0}"#) {
            Err(Error::Config { path, .. }) => assert_eq!(path, "trials"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn curve_csv_layout() {
        let rows = vec![CurveRow {
            sweep_var: SweepVariable::PmaxDbm,
            value: 30.0,
            scheme: Scheme::NfOma,
            metric: Metric::SumRateH,
            mean: 12.5,
            stderr: f64::NAN,
            n_feasible: 1,
            n_total: 2,
        }];
        let mut buf = Vec::new();
        write_curves(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            format!(
                "{CURVE_HEADER}\npmax_dbm,3.00000000e1,NF-OMA,sum_rate_h,1.25000000e1,NaN,1,2\n"
            )
        );
    }

    fn arb_config() -> impl Strategy<Value = RunConfig> {
        (
            prop::bool::ANY,
            -100.0..-60.0f64,
            0.0..8.0f64,
            0.0..2.0f64,
            prop::collection::vec(0.0..50.0f64, 1..5),
            1usize..100,
            any::<u64>(),
            prop::option::of(0.0..2.0f64),
        )
            .prop_map(|(mlb, noise, rh, rl, values, trials, seed, offset)| {
                let mut c = RunConfig::default();
                c.scenario.framework = if mlb { Framework::Mlb } else { Framework::Slb };
                c.scenario.noise_dbm = noise;
                c.scenario.rate_h_min_bps_hz = rh;
                c.scenario.rate_l_min_bps_hz = rl;
                c.scenario.seed = seed;
                c.scenario.aod_offset_deg = offset;
                c.sweep.values = values;
                c.trials = trials;
                c
            })
    }

    proptest! {
        #[test]
        fn serialize_parse_round_trip(c in arb_config()) {
            let text = serde_json::to_string_pretty(&c).unwrap();
            let back = parse_config(&text).unwrap();
            prop_assert_eq!(back, c);
        }
    }
}
