//! Uniform linear array geometry, spherical- and planar-wavefront array
//! responses, and the line-of-sight user channel.
//!
//! The array lies on the x-axis centred at the origin; element `n` sits at
//! `x = δ(n)·d` with `δ(n) = n − (N−1)/2`. A user at polar position
//! `(r, θ)` sits at `(r·sinθ, r·cosθ)`, with θ measured from broadside.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    num_antennas: usize,
    spacing: f64,
    wavelength: f64,
}

impl ArrayGeometry {
    pub fn new(num_antennas: usize, spacing: f64, wavelength: f64) -> Result<Self> {
        if num_antennas == 0 {
            return Err(Error::InvalidGeometry(
                "array needs at least one element".into(),
            ));
        }
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::InvalidGeometry(format!(
                "spacing must be positive, got {spacing}"
            )));
        }
        if !(wavelength > 0.0 && wavelength.is_finite()) {
            return Err(Error::InvalidGeometry(format!(
                "wavelength must be positive, got {wavelength}"
            )));
        }
        Ok(Self {
            num_antennas,
            spacing,
            wavelength,
        })
    }

    /// Half-wavelength spaced array.
    pub fn half_wavelength(num_antennas: usize, wavelength: f64) -> Result<Self> {
        Self::new(num_antennas, wavelength / 2.0, wavelength)
    }

    /// Half-wavelength spaced array for a carrier frequency in Hz.
    pub fn from_carrier(num_antennas: usize, carrier_hz: f64) -> Result<Self> {
        if !(carrier_hz > 0.0 && carrier_hz.is_finite()) {
            return Err(Error::InvalidGeometry(format!(
                "carrier frequency must be positive, got {carrier_hz}"
            )));
        }
        Self::half_wavelength(num_antennas, SPEED_OF_LIGHT / carrier_hz)
    }

    pub fn num_antennas(&self) -> usize {
        self.num_antennas
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    pub fn wavenumber(&self) -> f64 {
        2.0 * PI / self.wavelength
    }

    pub fn aperture(&self) -> f64 {
        self.num_antennas as f64 * self.spacing
    }

    /// Fraunhofer distance `2D²/λ`, the conventional near/far-field boundary.
    pub fn fraunhofer_distance(&self) -> f64 {
        2.0 * self.aperture().powi(2) / self.wavelength
    }

    /// Normalized element offsets `δ(n) = n − (N−1)/2`.
    pub fn element_offsets(&self) -> Vec<f64> {
        let centre = (self.num_antennas as f64 - 1.0) / 2.0;
        (0..self.num_antennas).map(|n| n as f64 - centre).collect()
    }

    /// Distance from element `n` to `location`.
    pub fn element_distance(&self, location: &UserLocation, n: usize) -> Result<f64> {
        if n >= self.num_antennas {
            return Err(Error::IndexOutOfRange {
                index: n,
                len: self.num_antennas,
            });
        }
        let centre = (self.num_antennas as f64 - 1.0) / 2.0;
        Ok(law_of_cosines(location, (n as f64 - centre) * self.spacing))
    }

    /// Distances from every element to `location`.
    pub fn element_distances(&self, location: &UserLocation) -> Vec<f64> {
        self.element_offsets()
            .into_iter()
            .map(|delta| law_of_cosines(location, delta * self.spacing))
            .collect()
    }

    /// `k·r` reduced to `[0, 2π)`. All near-field phases go through here so
    /// that phases of different elements and foci are rounded alike.
    pub fn propagation_phase(&self, r: f64) -> f64 {
        let turns = r / self.wavelength;
        // exact remainder of the division restores the digits lost in `turns`
        let rem = (-turns).mul_add(self.wavelength, r) / self.wavelength;
        TAU * (turns.fract() + rem)
    }

    /// Spherical-wavefront array response `b(r, θ)`; unit norm.
    pub fn near_field_steering(&self, location: &UserLocation) -> Vec<Complex64> {
        let amp = 1.0 / (self.num_antennas as f64).sqrt();
        self.element_distances(location)
            .into_iter()
            .map(|r| Complex64::from_polar(amp, -self.propagation_phase(r)))
            .collect()
    }

    /// Planar-wavefront array response for direction `angle`.
    ///
    /// The phase ramp is the large-radius limit of
    /// [`near_field_steering`](Self::near_field_steering) up to a global
    /// phase: element `n` carries `exp(+j·2π·d·n·sinθ/λ)`.
    pub fn far_field_steering(&self, angle: f64) -> Vec<Complex64> {
        let amp = 1.0 / (self.num_antennas as f64).sqrt();
        let ramp = self.wavenumber() * self.spacing * angle.sin();
        (0..self.num_antennas)
            .map(|n| Complex64::from_polar(amp, ramp * n as f64))
            .collect()
    }

    /// Line-of-sight channel `g = √N · a · b(r, θ)`.
    pub fn channel(&self, location: &UserLocation) -> ChannelVector {
        let path_gain = path_loss(location.radius(), self.wavelength);
        let scale = (self.num_antennas as f64).sqrt() * path_gain;
        let entries = self
            .near_field_steering(location)
            .into_iter()
            .map(|b| b * scale)
            .collect();
        ChannelVector { entries, path_gain }
    }
}

fn law_of_cosines(location: &UserLocation, offset: f64) -> f64 {
    let r = location.radius();
    (r * r + offset * offset - 2.0 * offset * r * location.angle().sin()).sqrt()
}

/// Free-space amplitude gain `λ / (4π r)`.
pub fn path_loss(radius: f64, wavelength: f64) -> f64 {
    wavelength / (4.0 * PI * radius)
}

/// Polar user position relative to the array centre.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserLocation {
    radius: f64,
    angle: f64,
}

impl UserLocation {
    pub fn new(radius: f64, angle: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidLocation(format!(
                "radius must be positive, got {radius}"
            )));
        }
        if !(angle.abs() < PI / 2.0) {
            return Err(Error::InvalidLocation(format!(
                "angle {angle} rad outside the open interval (-π/2, π/2)"
            )));
        }
        Ok(Self { radius, angle })
    }

    pub fn from_degrees(radius: f64, angle_deg: f64) -> Result<Self> {
        Self::new(radius, angle_deg.to_radians())
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn angle(&self) -> f64 {
        self.angle
    }

    pub fn angle_deg(&self) -> f64 {
        self.angle.to_degrees()
    }

    /// Cartesian position `(x, y)` with the array on the x-axis.
    pub fn cartesian(&self) -> (f64, f64) {
        (
            self.radius * self.angle.sin(),
            self.radius * self.angle.cos(),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelVector {
    pub entries: Vec<Complex64>,
    pub path_gain: f64,
}

impl ChannelVector {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn norm(&self) -> f64 {
        norm(&self.entries)
    }
}

pub(crate) fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `aᴴ b`.
pub(crate) fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const LAMBDA: f64 = 0.01;

    fn geom(n: usize) -> ArrayGeometry {
        ArrayGeometry::half_wavelength(n, LAMBDA).unwrap()
    }

    #[test]
    fn offsets_are_centred() {
        assert_eq!(geom(4).element_offsets(), vec![-1.5, -0.5, 0.5, 1.5]);
        assert_eq!(geom(1).element_offsets(), vec![0.0]);
        let big = geom(1024).element_offsets();
        assert_eq!(big[0], -511.5);
        assert_eq!(big[1023], 511.5);
    }

    #[test]
    fn distance_examples() {
        let g = geom(5);
        let loc = UserLocation::new(10.0, 0.0).unwrap();
        assert_eq!(g.element_distance(&loc, 2).unwrap(), 10.0);

        // δ·d = 0.005 m at n = 3 of a 5-element λ/2 array with λ = 0.01
        let g = ArrayGeometry::new(5, 0.005, LAMBDA).unwrap();
        let d = g.element_distance(&loc, 3).unwrap();
        assert!((d - (100.0f64 + 0.000025).sqrt()).abs() < 1e-12);

        assert!(matches!(
            g.element_distance(&loc, 5),
            Err(Error::IndexOutOfRange { index: 5, len: 5 })
        ));
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(ArrayGeometry::new(0, 0.005, LAMBDA).is_err());
        assert!(ArrayGeometry::new(4, 0.0, LAMBDA).is_err());
        assert!(ArrayGeometry::new(4, 0.005, -1.0).is_err());
        assert!(UserLocation::new(0.0, 0.1).is_err());
        assert!(UserLocation::new(5.0, PI / 2.0).is_err());
        assert!(UserLocation::new(5.0, -1.6).is_err());
    }

    #[test]
    fn single_element_steering() {
        let g = geom(1);
        let loc = UserLocation::new(3.3, 0.2).unwrap();
        let b = g.near_field_steering(&loc);
        assert_eq!(b.len(), 1);
        assert!((b[0].norm() - 1.0).abs() < 1e-14);
        let expected = Complex64::from_polar(1.0, -2.0 * PI * 3.3 / LAMBDA);
        assert!((b[0] - expected).norm() < 1e-12);
    }

    #[test]
    fn far_field_broadside_is_flat() {
        let b = geom(16).far_field_steering(0.0);
        for z in b {
            assert!((z - Complex64::new(0.25, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn far_field_is_large_radius_limit() {
        let g = geom(64);
        for &deg in &[-50.0, -20.0, 0.0, 13.0, 45.0] {
            let loc = UserLocation::from_degrees(1e6 * LAMBDA * 64.0, deg).unwrap();
            let corr = inner(
                &g.near_field_steering(&loc),
                &g.far_field_steering(loc.angle()),
            )
            .norm();
            assert!(corr >= 0.999, "angle {deg}: {corr}");
        }
    }

    #[test]
    fn correlation_approaches_one_beyond_fraunhofer() {
        let g = geom(32);
        let theta = 0.4;
        let ff = g.far_field_steering(theta);
        let mut prev = 0.0;
        for factor in [1.0, 3.0, 10.0, 30.0, 100.0] {
            let loc = UserLocation::new(factor * g.fraunhofer_distance(), theta).unwrap();
            let c = inner(&g.near_field_steering(&loc), &ff).norm();
            assert!(c >= prev - 1e-12, "non-monotone at {factor}: {c} < {prev}");
            prev = c;
        }
        assert!(prev >= 0.999);
    }

    #[test]
    fn path_loss_examples() {
        assert!((path_loss(LAMBDA / (4.0 * PI), LAMBDA) - 1.0).abs() < 1e-15);
        assert!((path_loss(20.0, LAMBDA) * 2.0 - path_loss(10.0, LAMBDA)).abs() < 1e-18);
        let a = path_loss(50.0, 0.01);
        // free-space loss in dB: 20·log10(4πr/λ)
        let loss_db = 20.0 * (4.0 * PI * 50.0 / 0.01f64).log10();
        assert!((a - 10f64.powf(-loss_db / 20.0)).abs() < 1e-18);
        assert!((a - 0.01 / (4.0 * PI * 50.0)).abs() < 1e-18);
    }

    #[test]
    fn channel_composition() {
        let g = geom(1024);
        let loc = UserLocation::from_degrees(30.0, -30.0).unwrap();
        let ch = g.channel(&loc);
        let a = path_loss(30.0, LAMBDA);
        assert_eq!(ch.path_gain, a);
        assert!((ch.norm() - 32.0 * a).abs() < 1e-12);
        let b = g.near_field_steering(&loc);
        for (gz, bz) in ch.entries.iter().zip(&b) {
            assert!((gz.norm() - a).abs() < 1e-15);
            assert_eq!(*gz, bz * (32.0 * a));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]

        #[test]
        fn distance_matches_cartesian(
            r in 0.5f64..500.0,
            theta in -1.5f64..1.5,
            n in 0usize..256,
        ) {
            let g = geom(256);
            let loc = UserLocation::new(r, theta).unwrap();
            let (ux, uy) = loc.cartesian();
            let ex = (n as f64 - 127.5) * g.spacing();
            let oracle = ((ux - ex).powi(2) + uy.powi(2)).sqrt();
            let d = g.element_distance(&loc, n).unwrap();
            prop_assert!(d > 0.0);
            prop_assert!(((d - oracle) / oracle).abs() < 1e-9);
        }

        #[test]
        fn steering_vectors_have_unit_norm(
            r in 1.0f64..200.0,
            theta in -1.5f64..1.5,
            n in 1usize..128,
        ) {
            let g = geom(n);
            let loc = UserLocation::new(r, theta).unwrap();
            let inv = 1.0 / (n as f64).sqrt();
            let nf = g.near_field_steering(&loc);
            let ff = g.far_field_steering(theta);
            for z in nf.iter().chain(&ff) {
                prop_assert!((z.norm() - inv).abs() < 1e-14);
            }
            prop_assert!((norm(&nf) - 1.0).abs() < 1e-12);
            prop_assert!((norm(&ff) - 1.0).abs() < 1e-12);
            prop_assert!((inner(&nf, &nf).re - 1.0).abs() < 1e-12);
        }
    }
}
