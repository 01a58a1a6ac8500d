//! Constant-modulus analog beamformers: single-location focusing,
//! beam-split multiple-location focusing, and their far-field
//! counterparts, plus array-gain evaluation and gain maps.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{inner, ArrayGeometry, UserLocation};
use crate::io::format_sig9;
use crate::par::{map_indexed, Execution};

/// Per-antenna phase-shifter weights, each of modulus `1/√N`.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalogBeamformer {
    weights: Vec<Complex64>,
}

impl AnalogBeamformer {
    /// Validates the constant-modulus constraint.
    pub fn new(weights: Vec<Complex64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::DimensionMismatch("empty analog beamformer".into()));
        }
        let target = 1.0 / (weights.len() as f64).sqrt();
        if let Some((n, w)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| (w.norm() - target).abs() > 1e-12)
        {
            return Err(Error::DimensionMismatch(format!(
                "entry {n} has modulus {} instead of {target}",
                w.norm()
            )));
        }
        Ok(Self { weights })
    }

    /// Builds `w_n = exp(jφ_n)/√N`.
    pub fn from_phases(phases: impl ExactSizeIterator<Item = f64>) -> Self {
        let amp = 1.0 / (phases.len() as f64).sqrt();
        Self {
            weights: phases.map(|phi| Complex64::from_polar(amp, phi)).collect(),
        }
    }

    pub fn weights(&self) -> &[Complex64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Multiplies every weight by `exp(jφ)`.
    pub fn rotated(&self, phase: f64) -> Self {
        let rot = Complex64::from_polar(1.0, phase);
        Self {
            weights: self.weights.iter().map(|w| w * rot).collect(),
        }
    }
}

/// Antennas given to the H-QoS and L-QoS sub-arrays of one cluster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AntennaSplit {
    num_h: usize,
    num_l: usize,
}

impl AntennaSplit {
    pub fn new(num_h: usize, num_l: usize, min_per_user: usize) -> Result<Self> {
        let floor = min_per_user.max(1);
        if num_h < floor || num_l < floor {
            return Err(Error::InvalidSplit {
                num_h,
                num_l,
                reason: format!("each sub-array needs at least {floor} antennas"),
            });
        }
        Ok(Self { num_h, num_l })
    }

    pub fn num_h(&self) -> usize {
        self.num_h
    }

    pub fn num_l(&self) -> usize {
        self.num_l
    }

    pub fn total(&self) -> usize {
        self.num_h + self.num_l
    }

    fn check(&self, geometry: &ArrayGeometry) -> Result<()> {
        if self.total() != geometry.num_antennas() {
            return Err(Error::InvalidSplit {
                num_h: self.num_h,
                num_l: self.num_l,
                reason: format!("must sum to {} antennas", geometry.num_antennas()),
            });
        }
        Ok(())
    }
}

/// Focuses the whole aperture on `focus`.
pub fn slb_beamformer(geometry: &ArrayGeometry, focus: &UserLocation) -> AnalogBeamformer {
    let distances = geometry.element_distances(focus);
    AnalogBeamformer::from_phases(
        distances
            .into_iter()
            .map(|r| -geometry.propagation_phase(r)),
    )
}

/// Beam-split beamformer: elements `0..num_h` focus on `loc_h`, the
/// remaining contiguous block on `loc_l`.
pub fn mlb_beamformer(
    geometry: &ArrayGeometry,
    split: AntennaSplit,
    loc_h: &UserLocation,
    loc_l: &UserLocation,
) -> Result<AnalogBeamformer> {
    split.check(geometry)?;
    let r_h = geometry.element_distances(loc_h);
    let r_l = geometry.element_distances(loc_l);
    let phases = (0..geometry.num_antennas()).map(|n| {
        let r = if n < split.num_h { r_h[n] } else { r_l[n] };
        -geometry.propagation_phase(r)
    });
    Ok(AnalogBeamformer::from_phases(phases))
}

/// Conventional beamsteering towards `angle`; ignores range.
pub fn ff_beamformer(geometry: &ArrayGeometry, angle: f64) -> AnalogBeamformer {
    AnalogBeamformer {
        weights: geometry.far_field_steering(angle),
    }
}

/// Beam-split beamformer with planar phase profiles per sub-array.
pub fn mb_ff_beamformer(
    geometry: &ArrayGeometry,
    split: AntennaSplit,
    angle_h: f64,
    angle_l: f64,
) -> Result<AnalogBeamformer> {
    split.check(geometry)?;
    let ramp = geometry.wavenumber() * geometry.spacing();
    let (s_h, s_l) = (angle_h.sin(), angle_l.sin());
    let phases = (0..geometry.num_antennas()).map(|n| {
        let s = if n < split.num_h { s_h } else { s_l };
        ramp * s * n as f64
    });
    Ok(AnalogBeamformer::from_phases(phases))
}

/// Normalized array gain `|b(probe)ᴴ w| ∈ [0, 1]`.
pub fn array_gain(bf: &AnalogBeamformer, geometry: &ArrayGeometry, probe: &UserLocation) -> f64 {
    inner(&geometry.near_field_steering(probe), bf.weights()).norm()
}

/// Gains of a beam-split beamformer at its two foci, evaluated from the
/// cross-phasor sums between the two focal distance profiles.
pub fn mlb_focus_gains(
    geometry: &ArrayGeometry,
    split: AntennaSplit,
    loc_h: &UserLocation,
    loc_l: &UserLocation,
) -> Result<(f64, f64)> {
    split.check(geometry)?;
    let phase = |loc| -> Vec<f64> {
        geometry
            .element_distances(loc)
            .into_iter()
            .map(|r| geometry.propagation_phase(r))
            .collect()
    };
    let (phi_h, phi_l) = (phase(loc_h), phase(loc_l));
    let n_total = geometry.num_antennas() as f64;
    let nh = split.num_h;
    let cross_l: Complex64 = (nh..geometry.num_antennas())
        .map(|n| Complex64::from_polar(1.0, phi_h[n] - phi_l[n]))
        .sum();
    let cross_h: Complex64 = (0..nh)
        .map(|n| Complex64::from_polar(1.0, phi_l[n] - phi_h[n]))
        .sum();
    let gain_h = (cross_l + nh as f64).norm() / n_total;
    let gain_l = (cross_h + split.num_l as f64).norm() / n_total;
    Ok((gain_h, gain_l))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LemmaCheck {
    pub holds: bool,
    pub mlb_gain_h: f64,
    pub mlb_gain_l: f64,
    pub slb_gain: f64,
}

/// Compares the best focus gain of the beam-split beamformer against the
/// single-focus gain at the H-user.
pub fn verify_lemma1(
    geometry: &ArrayGeometry,
    split: AntennaSplit,
    loc_h: &UserLocation,
    loc_l: &UserLocation,
) -> Result<LemmaCheck> {
    let mlb = mlb_beamformer(geometry, split, loc_h, loc_l)?;
    let slb = slb_beamformer(geometry, loc_h);
    let mlb_gain_h = array_gain(&mlb, geometry, loc_h);
    let mlb_gain_l = array_gain(&mlb, geometry, loc_l);
    let slb_gain = array_gain(&slb, geometry, loc_h);
    // rounding slack: the single-focus gain is 1 only up to summation error
    let holds = mlb_gain_h.max(mlb_gain_l) <= slb_gain + 1e-12;
    Ok(LemmaCheck {
        holds,
        mlb_gain_h,
        mlb_gain_l,
        slb_gain,
    })
}

/// Polar raster window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainMapGrid {
    pub radius_min: f64,
    pub radius_max: f64,
    pub angle_min: f64,
    pub angle_max: f64,
    pub num_radii: usize,
    pub num_angles: usize,
}

impl Default for GainMapGrid {
    fn default() -> Self {
        Self {
            radius_min: 5.0,
            radius_max: 100.0,
            angle_min: -PI / 3.0,
            angle_max: PI / 3.0,
            num_radii: 400,
            num_angles: 400,
        }
    }
}

impl GainMapGrid {
    fn validate(&self) -> Result<()> {
        if self.num_radii == 0 || self.num_angles == 0 {
            return Err(Error::EmptyGrid("resolution must be positive".into()));
        }
        if !(self.radius_min > 0.0 && self.radius_max >= self.radius_min) {
            return Err(Error::EmptyGrid(format!(
                "radius range [{}, {}] is not a positive interval",
                self.radius_min, self.radius_max
            )));
        }
        let inside = |a: f64| a.abs() < PI / 2.0;
        if !(inside(self.angle_min) && inside(self.angle_max) && self.angle_max >= self.angle_min) {
            return Err(Error::EmptyGrid(format!(
                "angle range [{}, {}] rad is not inside (-π/2, π/2)",
                self.angle_min, self.angle_max
            )));
        }
        Ok(())
    }

    pub fn radii(&self) -> Vec<f64> {
        linspace(self.radius_min, self.radius_max, self.num_radii)
    }

    pub fn angles(&self) -> Vec<f64> {
        linspace(self.angle_min, self.angle_max, self.num_angles)
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let step = (hi - lo) / (n - 1) as f64;
    (0..n).map(|i| lo + step * i as f64).collect()
}

/// Rasterized array gain, row-major with radii as the outer index.
#[derive(Debug, Clone, PartialEq)]
pub struct GainMap {
    pub radii: Vec<f64>,
    pub angles: Vec<f64>,
    pub values: Vec<f64>,
}

impl GainMap {
    pub fn get(&self, radius_idx: usize, angle_idx: usize) -> f64 {
        self.values[radius_idx * self.angles.len() + angle_idx]
    }

    /// `(radius index, angle index, value)` of the largest cell.
    pub fn peak(&self) -> (usize, usize, f64) {
        let (idx, v) =
            self.values
                .iter()
                .copied()
                .enumerate()
                .fold(
                    (0, f64::NEG_INFINITY),
                    |acc, (i, v)| if v > acc.1 { (i, v) } else { acc },
                );
        (idx / self.angles.len(), idx % self.angles.len(), v)
    }

    /// Header row of angles in degrees, then one row per radius.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        write!(out, "radius_m")?;
        for a in &self.angles {
            write!(out, ",{}", format_sig9(a.to_degrees()))?;
        }
        writeln!(out)?;
        for (i, r) in self.radii.iter().enumerate() {
            write!(out, "{}", format_sig9(*r))?;
            for v in &self.values[i * self.angles.len()..(i + 1) * self.angles.len()] {
                write!(out, ",{}", format_sig9(*v))?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

pub fn gain_map(
    bf: &AnalogBeamformer,
    geometry: &ArrayGeometry,
    grid: &GainMapGrid,
    exec: Execution,
) -> Result<GainMap> {
    gain_map_union(std::slice::from_ref(bf), geometry, grid, exec)
}

/// Pointwise maximum gain over several beamformers (one per RF chain).
pub fn gain_map_union(
    beams: &[AnalogBeamformer],
    geometry: &ArrayGeometry,
    grid: &GainMapGrid,
    exec: Execution,
) -> Result<GainMap> {
    grid.validate()?;
    if beams.is_empty() {
        return Err(Error::EmptyGrid("no beamformers to rasterize".into()));
    }
    if let Some(b) = beams.iter().find(|b| b.len() != geometry.num_antennas()) {
        return Err(Error::DimensionMismatch(format!(
            "beamformer has {} entries for a {}-element array",
            b.len(),
            geometry.num_antennas()
        )));
    }
    let radii = grid.radii();
    let angles = grid.angles();
    let rows = map_indexed(radii.len(), exec, |i| {
        angles
            .iter()
            .map(|&theta| {
                let probe = UserLocation::new(radii[i], theta).expect("validated grid");
                let b = geometry.near_field_steering(&probe);
                beams
                    .iter()
                    .map(|w| inner(&b, w.weights()).norm().min(1.0))
                    .fold(0.0, f64::max)
            })
            .collect::<Vec<_>>()
    });
    Ok(GainMap {
        radii,
        angles,
        values: rows.into_iter().flatten().collect(),
    })
}
