//! Simulation scenarios: user drops, scheme pipelines and the Monte Carlo
//! harness.

pub mod montecarlo;
pub mod schemes;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::digital::SvdConvention;
use crate::error::{Error, Result};
use crate::geometry::{ArrayGeometry, ChannelVector, UserLocation};

pub use montecarlo::{
    mean_stderr, monte_carlo, run_trials, CurveRow, Experiment, Metric, Sweep, SweepVariable,
};
pub use schemes::{run_scheme, total_interference, Scheme, SystemParams, TrialResult};

/// Largest admissible departure angle, degrees.
pub const MAX_ANGLE_DEG: f64 = 60.0;

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Framework {
    #[default]
    Slb,
    Mlb,
}

/// Which user of a cluster carries the high QoS requirement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HUserRule {
    #[default]
    Farther,
    Nearer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SvdChoice {
    #[default]
    Hermitian,
    LiteralTranspose,
}

impl From<SvdChoice> for SvdConvention {
    fn from(c: SvdChoice) -> Self {
        match c {
            SvdChoice::Hermitian => SvdConvention::Hermitian,
            SvdChoice::LiteralTranspose => SvdConvention::LiteralTranspose,
        }
    }
}

/// Where a cluster's users are dropped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterRegion {
    pub angle_deg: [f64; 2],
    pub radius_m: [f64; 2],
    /// Reuse the user angles of an earlier cluster instead of drawing.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub same_angle_as: Option<usize>,
}

impl ClusterRegion {
    fn new(angle_deg: [f64; 2], radius_m: [f64; 2]) -> Self {
        Self {
            angle_deg,
            radius_m,
            same_angle_as: None,
        }
    }
}

/// Four clusters; the second and third share a direction.
pub fn slb_regions() -> Vec<ClusterRegion> {
    vec![
        ClusterRegion::new([-40.0, -30.0], [30.0, 50.0]),
        ClusterRegion::new([-5.0, 5.0], [35.0, 55.0]),
        ClusterRegion {
            same_angle_as: Some(1),
            ..ClusterRegion::new([-5.0, 5.0], [60.0, 80.0])
        },
        ClusterRegion::new([30.0, 40.0], [40.0, 60.0]),
    ]
}

/// Four clusters in distinct directions, radii as in [`slb_regions`].
pub fn mlb_regions() -> Vec<ClusterRegion> {
    vec![
        ClusterRegion::new([-40.0, -30.0], [30.0, 50.0]),
        ClusterRegion::new([-15.0, -5.0], [35.0, 55.0]),
        ClusterRegion::new([5.0, 15.0], [60.0, 80.0]),
        ClusterRegion::new([30.0, 40.0], [40.0, 60.0]),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub framework: Framework,
    pub num_clusters: usize,
    pub num_antennas: usize,
    pub carrier_hz: f64,
    pub spacing_wavelengths: f64,
    pub noise_dbm: f64,
    pub pmax_dbm: f64,
    pub rate_h_min_bps_hz: f64,
    pub rate_l_min_bps_hz: f64,
    /// Defaults to the framework's layout.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clusters: Option<Vec<ClusterRegion>>,
    /// Angular separation of the two users of a cluster. Defaults to 0.1°
    /// for SLB and 1° for MLB.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub aod_offset_deg: Option<f64>,
    pub n_min_fraction: f64,
    pub h_user: HUserRule,
    /// Leakage scale in the matching utility. Defaults to `P_max`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta_w: Option<f64>,
    pub svd_convention: SvdChoice,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            framework: Framework::Slb,
            num_clusters: 4,
            num_antennas: 512,
            carrier_hz: 30e9,
            spacing_wavelengths: 0.5,
            noise_dbm: -90.0,
            pmax_dbm: 30.0,
            rate_h_min_bps_hz: 6.0,
            rate_l_min_bps_hz: 0.5,
            clusters: None,
            aod_offset_deg: None,
            n_min_fraction: 0.2,
            h_user: HUserRule::Farther,
            eta_w: None,
            svd_convention: SvdChoice::Hermitian,
            seed: 0,
        }
    }
}

fn config_error(path: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Config {
        path: path.into(),
        message: message.into(),
    }
}

impl ScenarioConfig {
    pub fn regions(&self) -> Vec<ClusterRegion> {
        self.clusters
            .clone()
            .unwrap_or_else(|| match self.framework {
                Framework::Slb => slb_regions(),
                Framework::Mlb => mlb_regions(),
            })
    }

    pub fn aod_offset(&self) -> f64 {
        self.aod_offset_deg.unwrap_or(match self.framework {
            Framework::Slb => 0.1,
            Framework::Mlb => 1.0,
        })
    }

    pub fn geometry(&self, num_antennas: usize) -> Result<ArrayGeometry> {
        let wavelength = crate::geometry::SPEED_OF_LIGHT / self.carrier_hz;
        ArrayGeometry::new(
            num_antennas,
            self.spacing_wavelengths * wavelength,
            wavelength,
        )
    }

    /// Checks physical ranges; errors name the offending field.
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("carrier_hz", self.carrier_hz),
            ("spacing_wavelengths", self.spacing_wavelengths),
            ("n_min_fraction", self.n_min_fraction),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(config_error(name, format!("must be positive, got {v}")));
            }
        }
        if self.n_min_fraction > 0.5 {
            return Err(config_error("n_min_fraction", "must not exceed 0.5"));
        }
        for (name, v) in [("noise_dbm", self.noise_dbm), ("pmax_dbm", self.pmax_dbm)] {
            if !v.is_finite() {
                return Err(config_error(name, "must be finite"));
            }
        }
        for (name, v) in [
            ("rate_h_min_bps_hz", self.rate_h_min_bps_hz),
            ("rate_l_min_bps_hz", self.rate_l_min_bps_hz),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(config_error(name, format!("must be non-negative, got {v}")));
            }
        }
        if let Some(eta) = self.eta_w {
            if !(eta > 0.0 && eta.is_finite()) {
                return Err(config_error("eta_w", "must be positive"));
            }
        }
        if self.num_antennas < 2 {
            return Err(config_error("num_antennas", "need at least two antennas"));
        }
        let offset = self.aod_offset();
        if !(offset >= 0.0 && offset.is_finite()) {
            return Err(config_error("aod_offset_deg", "must be non-negative"));
        }
        let regions = self.regions();
        if regions.len() != self.num_clusters || self.num_clusters == 0 {
            return Err(config_error(
                "clusters",
                format!(
                    "{} regions for {} clusters",
                    regions.len(),
                    self.num_clusters
                ),
            ));
        }
        for (m, r) in regions.iter().enumerate() {
            let [lo, hi] = r.angle_deg;
            if !(lo <= hi && lo >= -MAX_ANGLE_DEG && hi <= MAX_ANGLE_DEG) {
                return Err(config_error(
                    format!("clusters[{m}].angle_deg"),
                    format!("[{lo}, {hi}] must be ordered within ±{MAX_ANGLE_DEG}°"),
                ));
            }
            if hi - lo < offset {
                return Err(config_error(
                    format!("clusters[{m}].angle_deg"),
                    format!("range narrower than the {offset}° user offset"),
                ));
            }
            let [rlo, rhi] = r.radius_m;
            if !(rlo > 0.0 && rlo <= rhi && rhi.is_finite()) {
                return Err(config_error(
                    format!("clusters[{m}].radius_m"),
                    format!("[{rlo}, {rhi}] must be positive and ordered"),
                ));
            }
            if let Some(j) = r.same_angle_as {
                if j >= m || regions[j].same_angle_as.is_some() {
                    return Err(config_error(
                        format!("clusters[{m}].same_angle_as"),
                        "must name an earlier cluster that draws its own angles",
                    ));
                }
            }
        }
        Ok(())
    }
}

/// The two users of every cluster, `[H, L]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Drop {
    pub users: Vec<[UserLocation; 2]>,
}

impl Drop {
    pub fn num_clusters(&self) -> usize {
        self.users.len()
    }

    pub fn location(&self, cluster: usize, k: usize) -> &UserLocation {
        &self.users[cluster][k]
    }

    /// Channels in user order `2m + k`.
    pub fn channels(&self, geometry: &ArrayGeometry) -> Vec<ChannelVector> {
        self.users
            .iter()
            .flatten()
            .map(|loc| geometry.channel(loc))
            .collect()
    }
}

/// Draws one drop from explicit regions.
pub fn drop_users<R: Rng + ?Sized>(
    regions: &[ClusterRegion],
    offset_deg: f64,
    rule: HUserRule,
    rng: &mut R,
) -> Result<Drop> {
    let mut angles: Vec<[f64; 2]> = Vec::with_capacity(regions.len());
    let mut users = Vec::with_capacity(regions.len());
    for (m, region) in regions.iter().enumerate() {
        let [lo, hi] = region.angle_deg;
        let first = rng.random_range(lo..=hi - offset_deg);
        let [rlo, rhi] = region.radius_m;
        let radius = [rng.random_range(rlo..=rhi), rng.random_range(rlo..=rhi)];
        let pair = match region.same_angle_as {
            Some(j) => angles[j],
            None => {
                // the farther (or nearer) of the two draws is the H-user
                let h_first = match rule {
                    HUserRule::Farther => radius[0] >= radius[1],
                    HUserRule::Nearer => radius[0] < radius[1],
                };
                if h_first {
                    [first, first + offset_deg]
                } else {
                    [first + offset_deg, first]
                }
            }
        };
        let (r_h, r_l) = match rule {
            HUserRule::Farther => (radius[0].max(radius[1]), radius[0].min(radius[1])),
            HUserRule::Nearer => (radius[0].min(radius[1]), radius[0].max(radius[1])),
        };
        angles.push(pair);
        let h = UserLocation::from_degrees(r_h, pair[0]);
        let l = UserLocation::from_degrees(r_l, pair[1]);
        match (h, l) {
            (Ok(h), Ok(l)) => users.push([h, l]),
            (Err(e), _) | (_, Err(e)) => {
                return Err(config_error(format!("clusters[{m}]"), e.to_string()))
            }
        }
    }
    Ok(Drop { users })
}

/// Single-beam layout with the framework's default regions.
pub fn drop_slb_scenario<R: Rng + ?Sized>(config: &ScenarioConfig, rng: &mut R) -> Result<Drop> {
    let regions = config.clusters.clone().unwrap_or_else(slb_regions);
    let offset = config.aod_offset_deg.unwrap_or(0.1);
    drop_users(&regions, offset, config.h_user, rng)
}

/// Multi-beam layout with the framework's default regions.
pub fn drop_mlb_scenario<R: Rng + ?Sized>(config: &ScenarioConfig, rng: &mut R) -> Result<Drop> {
    let regions = config.clusters.clone().unwrap_or_else(mlb_regions);
    let offset = config.aod_offset_deg.unwrap_or(1.0);
    drop_users(&regions, offset, config.h_user, rng)
}

/// Drop for the configured framework.
pub fn drop_scenario<R: Rng + ?Sized>(config: &ScenarioConfig, rng: &mut R) -> Result<Drop> {
    match config.framework {
        Framework::Slb => drop_slb_scenario(config, rng),
        Framework::Mlb => drop_mlb_scenario(config, rng),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn within(v: f64, [lo, hi]: [f64; 2]) -> bool {
        v >= lo - 1e-9 && v <= hi + 1e-9
    }

    #[test]
    fn dbm_conversion() {
        assert!((dbm_to_watts(30.0) - 1.0).abs() < 1e-15);
        assert!((dbm_to_watts(-90.0) - 1e-12).abs() < 1e-27);
        assert!((dbm_to_watts(0.0) - 1e-3).abs() < 1e-18);
    }

    #[test]
    fn defaults_validate() {
        let mut c = ScenarioConfig::default();
        c.validate().unwrap();
        c.framework = Framework::Mlb;
        c.validate().unwrap();
        assert_eq!(c.aod_offset(), 1.0);
    }

    #[test]
    fn bad_angle_names_field() {
        let mut regions = slb_regions();
        regions[3].angle_deg = [30.0, 70.0];
        let c = ScenarioConfig {
            clusters: Some(regions),
            ..ScenarioConfig::default()
        };
        match c.validate() {
            Err(Error::Config { path, .. }) => assert_eq!(path, "clusters[3].angle_deg"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn seeded_drop_is_reproducible() {
        let c = ScenarioConfig::default();
        let a = drop_slb_scenario(&c, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = drop_slb_scenario(&c, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        let c2 = drop_slb_scenario(&c, &mut ChaCha8Rng::seed_from_u64(10)).unwrap();
        assert_ne!(a, c2);
    }

    #[test]
    fn slb_drops_stay_in_regions() {
        let c = ScenarioConfig::default();
        let regions = slb_regions();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let d = drop_slb_scenario(&c, &mut rng).unwrap();
            for (m, r) in regions.iter().enumerate() {
                for k in 0..2 {
                    let loc = d.location(m, k);
                    assert!(within(loc.angle_deg(), r.angle_deg));
                    assert!(within(loc.radius(), r.radius_m));
                }
                let gap = d.location(m, 0).angle_deg() - d.location(m, 1).angle_deg();
                assert!((gap.abs() - 0.1).abs() < 1e-9);
                assert!(d.location(m, 0).radius() >= d.location(m, 1).radius());
            }
            for k in 0..2 {
                assert_eq!(d.location(2, k).angle(), d.location(1, k).angle());
            }
        }
    }

    #[test]
    fn mlb_drops_stay_in_regions() {
        let c = ScenarioConfig {
            framework: Framework::Mlb,
            ..ScenarioConfig::default()
        };
        let regions = mlb_regions();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let d = drop_mlb_scenario(&c, &mut rng).unwrap();
            for (m, r) in regions.iter().enumerate() {
                for k in 0..2 {
                    assert!(within(d.location(m, k).angle_deg(), r.angle_deg));
                    assert!(within(d.location(m, k).radius(), r.radius_m));
                }
                let gap = d.location(m, 0).angle_deg() - d.location(m, 1).angle_deg();
                assert!((gap.abs() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn nearer_rule_flips_roles() {
        let c = ScenarioConfig {
            h_user: HUserRule::Nearer,
            ..ScenarioConfig::default()
        };
        let d = drop_slb_scenario(&c, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        for m in 0..4 {
            assert!(d.location(m, 0).radius() <= d.location(m, 1).radius());
        }
    }
}
