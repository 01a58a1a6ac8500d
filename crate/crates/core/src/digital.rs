//! Beamspace channels and zero-forcing digital precoders.
//!
//! Beamspace channels are stored column-wise: column `u` of the
//! `M_RF × U` matrix is `g̃_u = W_Aᴴ g_u`, so the effective gain of user
//! `u` on stream `m` is `g̃_uᴴ w_m`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::analog::AnalogBeamformer;
use crate::error::{Error, Result};
use crate::geometry::ChannelVector;

/// Gram matrices with a larger condition number are rejected.
pub const MAX_GRAM_CONDITION: f64 = 1e12;

/// Unit-norm precoding vectors, one column per RF chain.
#[derive(Debug, Clone, PartialEq)]
pub struct DigitalBeamformer {
    columns: DMatrix<Complex64>,
}

impl DigitalBeamformer {
    pub fn identity(m: usize) -> Self {
        Self {
            columns: DMatrix::identity(m, m),
        }
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.columns
    }

    pub fn num_streams(&self) -> usize {
        self.columns.ncols()
    }

    pub fn column(&self, m: usize) -> DVector<Complex64> {
        self.columns.column(m).into_owned()
    }
}

/// `g̃_u = W_Aᴴ g_u` for every user, as columns of an `M_RF × U` matrix.
pub fn beamspace_channels(
    channels: &[ChannelVector],
    analog: &[AnalogBeamformer],
) -> Result<DMatrix<Complex64>> {
    let n = channels.first().map(|c| c.len()).unwrap_or(0);
    if analog.is_empty() || channels.is_empty() {
        return Err(Error::DimensionMismatch(
            "need at least one channel and one beam".into(),
        ));
    }
    if let Some(c) = channels.iter().find(|c| c.len() != n) {
        return Err(Error::DimensionMismatch(format!(
            "channel lengths differ ({} vs {n})",
            c.len()
        )));
    }
    if let Some(w) = analog.iter().find(|w| w.len() != n) {
        return Err(Error::DimensionMismatch(format!(
            "analog beamformer has {} entries for {n}-element channels",
            w.len()
        )));
    }
    Ok(DMatrix::from_fn(analog.len(), channels.len(), |m, u| {
        // conj(gᴴ w) so that the row form g̃ᴴ equals gᴴ W_A
        crate::geometry::inner(&channels[u].entries, analog[m].weights()).conj()
    }))
}

/// `G (GᴴG)⁻¹` with unit-norm columns; rows of `Gᴴ` are nulled off-diagonal.
pub fn zf_digital(g: &DMatrix<Complex64>) -> Result<DigitalBeamformer> {
    if g.nrows() != g.ncols() || g.nrows() == 0 {
        return Err(Error::DimensionMismatch(format!(
            "zero-forcing needs a square matrix, got {}×{}",
            g.nrows(),
            g.ncols()
        )));
    }
    let gram = g.adjoint() * g;
    let eig = gram.clone().symmetric_eigenvalues();
    let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    });
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(condition <= MAX_GRAM_CONDITION) {
        return Err(Error::IllConditioned { condition });
    }
    let chol = gram.cholesky().ok_or(Error::IllConditioned { condition })?;
    let mut w = g * chol.inverse();
    for mut col in w.column_iter_mut() {
        let norm = col.norm();
        col /= Complex64::new(norm, 0.0);
    }
    Ok(DigitalBeamformer { columns: w })
}

/// Which matrix the per-cluster SVD is taken of.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum SvdConvention {
    /// Left singular vectors of `G̃ᴴ`; `‖ḡ‖` equals the top singular value.
    #[default]
    Hermitian,
    /// Left singular vectors of `G̃ᵀ`, applied without conjugation.
    LiteralTranspose,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSvd {
    /// `ḡ = G̃ u₁`.
    pub vector: DVector<Complex64>,
    /// Descending, non-negative.
    pub singular_values: [f64; 2],
    /// 2×2 unitary left singular matrix; column 0 is `u₁`.
    pub left: nalgebra::Matrix2<Complex64>,
}

/// Collapses a cluster's two beamspace channels onto their dominant
/// direction.
pub fn svd_cluster_channel(
    g_h: &DVector<Complex64>,
    g_l: &DVector<Complex64>,
    convention: SvdConvention,
) -> Result<ClusterSvd> {
    if g_h.len() != g_l.len() {
        return Err(Error::DimensionMismatch(
            "cluster channels differ in length".into(),
        ));
    }
    // Gram of the 2×M matrix whose rows are g̃_hᴴ and g̃_lᴴ
    let a = g_h.norm_squared();
    let c = g_l.norm_squared();
    if a == 0.0 && c == 0.0 {
        return Err(Error::ZeroMatrix);
    }
    let b = g_h.dotc(g_l); // g̃_hᴴ g̃_l, entry (0, 1) of the Gram
    let b = match convention {
        SvdConvention::Hermitian => b,
        // rows g̃_hᵀ, g̃_lᵀ: the Gram is the entrywise conjugate
        SvdConvention::LiteralTranspose => b.conj(),
    };
    let (eigvals, vecs) = hermitian_eigen_2x2(a, b, c);
    let sigma = [eigvals[0].max(0.0).sqrt(), eigvals[1].max(0.0).sqrt()];
    let u1 = vecs.column(0);
    let vector = g_h * u1[0] + g_l * u1[1];
    Ok(ClusterSvd {
        vector,
        singular_values: sigma,
        left: vecs,
    })
}

/// Eigen-decomposition of `[[a, b], [b*, c]]`, eigenvalues descending.
/// Each eigenvector is phase-fixed so its first nonzero entry is real and
/// non-negative; equal eigenvalues yield the standard basis.
fn hermitian_eigen_2x2(a: f64, b: Complex64, c: f64) -> ([f64; 2], nalgebra::Matrix2<Complex64>) {
    let mean = 0.5 * (a + c);
    let half_diff = 0.5 * (a - c);
    let radius = (half_diff * half_diff + b.norm_sqr()).sqrt();
    let (l1, l2) = (mean + radius, mean - radius);
    let scale = a.abs().max(c.abs());
    let one = Complex64::new(1.0, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    if b.norm() <= 1e-15 * scale {
        let m = if c > a {
            nalgebra::Matrix2::new(zero, one, one, zero)
        } else {
            nalgebra::Matrix2::new(one, zero, zero, one)
        };
        return ([l1, l2], m);
    }
    let top = eigvec(a, b, c, l1);
    // the second eigenvector is orthogonal: (−conj(v1), conj(v0)) rotated
    let bottom = phase_fix(nalgebra::Vector2::new(-top[1].conj(), top[0].conj()));
    ([l1, l2], nalgebra::Matrix2::from_columns(&[top, bottom]))
}

fn eigvec(a: f64, b: Complex64, c: f64, lambda: f64) -> nalgebra::Vector2<Complex64> {
    // two algebraically equivalent forms; keep the better-conditioned one
    let v1 = nalgebra::Vector2::new(b, Complex64::new(lambda - a, 0.0));
    let v2 = nalgebra::Vector2::new(Complex64::new(lambda - c, 0.0), b.conj());
    let v = if v1.norm() >= v2.norm() { v1 } else { v2 };
    phase_fix(v / Complex64::new(v.norm(), 0.0))
}

fn phase_fix(v: nalgebra::Vector2<Complex64>) -> nalgebra::Vector2<Complex64> {
    let pivot = if v[0].norm() > 0.0 { v[0] } else { v[1] };
    let rot = pivot.conj() / pivot.norm();
    v * rot
}

/// Zero-forcing on the per-cluster equivalent channels `ḡ_m`.
pub fn svd_zf_digital(cluster_vectors: &[DVector<Complex64>]) -> Result<DigitalBeamformer> {
    if cluster_vectors.is_empty() {
        return Err(Error::DimensionMismatch("no cluster vectors".into()));
    }
    zf_digital(&DMatrix::from_columns(cluster_vectors))
}

/// SVD-ZF precoder from the `M × 2M` beamspace matrix, with cluster `m`
/// owning columns `2m` (H-user) and `2m + 1` (L-user).
pub fn svd_zf_from_beamspace(
    beamspace: &DMatrix<Complex64>,
    convention: SvdConvention,
) -> Result<DigitalBeamformer> {
    let m = beamspace.nrows();
    if beamspace.ncols() != 2 * m {
        return Err(Error::DimensionMismatch(format!(
            "beamspace {}×{} does not hold two users per stream",
            m,
            beamspace.ncols()
        )));
    }
    let vectors = (0..m)
        .map(|c| {
            let g_h = beamspace.column(2 * c).into_owned();
            let g_l = beamspace.column(2 * c + 1).into_owned();
            svd_cluster_channel(&g_h, &g_l, convention).map(|s| s.vector)
        })
        .collect::<Result<Vec<_>>>()?;
    svd_zf_digital(&vectors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analog::slb_beamformer;
    use crate::geometry::{ArrayGeometry, UserLocation};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, k: usize) -> DMatrix<Complex64> {
        DMatrix::from_fn(r, k, |_, _| {
            c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
    }

    fn max_offdiag_residual(g: &DMatrix<Complex64>, w: &DigitalBeamformer) -> f64 {
        let prod = g.adjoint() * w.matrix();
        let mut worst = 0.0f64;
        for i in 0..prod.nrows() {
            for m in 0..prod.ncols() {
                if i != m {
                    worst = worst.max(prod[(i, m)].norm() / g.column(i).norm());
                }
            }
        }
        worst
    }

    #[test]
    fn beamspace_cauchy_schwarz() {
        let g = ArrayGeometry::half_wavelength(32, 0.01).unwrap();
        let loc = UserLocation::from_degrees(7.0, 12.0).unwrap();
        let ch = g.channel(&loc);
        let norm = ch.norm();
        let w = AnalogBeamformer::new(ch.entries.iter().map(|z| z / norm).collect()).unwrap();
        let bs = beamspace_channels(std::slice::from_ref(&ch), &[w]).unwrap();
        assert!((bs[(0, 0)] - c(norm, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn beamspace_is_conjugate_linear_and_matches_loops() {
        let g = ArrayGeometry::half_wavelength(16, 0.01).unwrap();
        let locs = [
            UserLocation::from_degrees(5.0, -20.0).unwrap(),
            UserLocation::from_degrees(8.0, 30.0).unwrap(),
            UserLocation::from_degrees(3.0, 2.0).unwrap(),
        ];
        let chans: Vec<_> = locs.iter().map(|l| g.channel(l)).collect();
        let beams: Vec<_> = locs[..2].iter().map(|l| slb_beamformer(&g, l)).collect();
        let bs = beamspace_channels(&chans, &beams).unwrap();
        assert_eq!(bs.shape(), (2, 3));
        for u in 0..3 {
            for m in 0..2 {
                let mut acc = c(0.0, 0.0);
                for n in 0..16 {
                    acc += chans[u].entries[n].conj() * beams[m].weights()[n];
                }
                // row form g̃ᴴ = gᴴ W_A
                assert!((bs[(m, u)].conj() - acc).norm() < 1e-14);
            }
        }
        let alpha = c(0.3, -1.7);
        let scaled = ChannelVector {
            entries: chans[0].entries.iter().map(|z| z * alpha).collect(),
            path_gain: chans[0].path_gain,
        };
        let bs2 = beamspace_channels(&[scaled], &beams).unwrap();
        for m in 0..2 {
            assert!((bs2[(m, 0)].conj() - alpha.conj() * bs[(m, 0)].conj()).norm() < 1e-14);
        }
        assert!(beamspace_channels(&chans, &[]).is_err());
    }

    #[test]
    fn zf_identity() {
        let w = zf_digital(&DMatrix::identity(3, 3)).unwrap();
        assert!((w.matrix() - DMatrix::<Complex64>::identity(3, 3)).norm() < 1e-15);
        let scaled = DMatrix::<Complex64>::identity(3, 3) * c(2.5, 0.0);
        let w = svd_zf_digital(
            &scaled
                .column_iter()
                .map(|col| col.into_owned())
                .collect::<Vec<_>>(),
        )
        .unwrap();
        assert!((w.matrix() - DMatrix::<Complex64>::identity(3, 3)).norm() < 1e-15);
    }

    #[test]
    fn zf_2x2_against_adjugate() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let g = random_matrix(&mut rng, 2, 2);
            let gram = g.adjoint() * &g;
            let det = gram[(0, 0)] * gram[(1, 1)] - gram[(0, 1)] * gram[(1, 0)];
            let inv =
                nalgebra::Matrix2::new(gram[(1, 1)], -gram[(0, 1)], -gram[(1, 0)], gram[(0, 0)])
                    / det;
            let g2 = nalgebra::Matrix2::new(g[(0, 0)], g[(0, 1)], g[(1, 0)], g[(1, 1)]);
            let mut expect = g2 * inv;
            for j in 0..2 {
                let n = expect.column(j).norm();
                expect.column_mut(j).scale_mut(1.0 / n);
            }
            let w = zf_digital(&g).unwrap();
            for i in 0..2 {
                for j in 0..2 {
                    assert!((w.matrix()[(i, j)] - expect[(i, j)]).norm() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn zf_orthogonality_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for m in 1..=6 {
            let g = random_matrix(&mut rng, m, m);
            let w = zf_digital(&g).unwrap();
            assert!(max_offdiag_residual(&g, &w) < 1e-9);
            for col in w.matrix().column_iter() {
                assert!((col.norm() - 1.0).abs() < 1e-12);
            }
            let prod = g.adjoint() * w.matrix();
            for i in 0..m {
                assert!(prod[(i, i)].norm() > 0.0);
            }
        }
    }

    #[test]
    fn zf_zero_pattern_survives_column_scaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let g = random_matrix(&mut rng, 4, 4);
        let mut scaled = g.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= c(1.0 + j as f64, 0.5 * j as f64);
        }
        let w = zf_digital(&scaled).unwrap();
        assert!(max_offdiag_residual(&scaled, &w) < 1e-9);
        let w0 = zf_digital(&g).unwrap();
        // the precoder directions only pick up unit-modulus phases
        for j in 0..4 {
            let ratio = w.column(j).dotc(&w0.column(j)).norm();
            assert!((ratio - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn zf_rejects_singular_and_bad_shapes() {
        let g =
            DMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(2.0, 0.0), c(2.0, 0.0), c(4.0, 0.0)]);
        assert!(matches!(zf_digital(&g), Err(Error::IllConditioned { .. })));
        assert!(zf_digital(&DMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn svd_rank_one_case() {
        let g = DVector::from_vec(vec![c(1.0, 2.0), c(-0.5, 0.3), c(0.0, 1.0)]);
        let s = svd_cluster_channel(&g, &g, SvdConvention::Hermitian).unwrap();
        assert!((s.vector.clone() - &g * c(2f64.sqrt(), 0.0)).norm() < 1e-12);
        assert!(s.singular_values[1].abs() < 1e-7);
        assert!((s.vector.norm() - s.singular_values[0]).abs() < 1e-12);
    }

    #[test]
    fn svd_matches_gram_eigen_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let m = rng.random_range(2..6);
            let gm = random_matrix(&mut rng, m, 2);
            let (gh, gl) = (gm.column(0).into_owned(), gm.column(1).into_owned());
            let s = svd_cluster_channel(&gh, &gl, SvdConvention::Hermitian).unwrap();
            let eig = (gm.adjoint() * &gm).symmetric_eigenvalues();
            let lmax = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lmin = eig.iter().cloned().fold(f64::INFINITY, f64::min);
            assert!((s.singular_values[0] - lmax.sqrt()).abs() < 1e-10);
            assert!((s.singular_values[1] - lmin.max(0.0).sqrt()).abs() < 1e-6);
            assert!(s.singular_values[0] >= s.singular_values[1]);
            assert!((s.vector.norm() - s.singular_values[0]).abs() < 1e-10);
            let u = s.left;
            let gram = u.adjoint() * u;
            assert!((gram - nalgebra::Matrix2::identity()).norm() < 1e-12);
            assert!(u[(0, 0)].im.abs() < 1e-15 && u[(0, 0)].re >= 0.0);
        }
    }

    #[test]
    fn svd_orthogonal_tie_takes_h_user() {
        let gh = DVector::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0)]);
        let gl = DVector::from_vec(vec![c(0.0, 0.0), c(0.0, 1.0)]);
        let s = svd_cluster_channel(&gh, &gl, SvdConvention::Hermitian).unwrap();
        assert_eq!(s.vector, gh);
        assert_eq!(s.singular_values, [1.0, 1.0]);
        assert!(svd_cluster_channel(
            &DVector::zeros(2),
            &DVector::zeros(2),
            SvdConvention::Hermitian
        )
        .is_err());
    }

    #[test]
    fn literal_transpose_conjugates_u1() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let gm = random_matrix(&mut rng, 4, 2);
        let (gh, gl) = (gm.column(0).into_owned(), gm.column(1).into_owned());
        let herm = svd_cluster_channel(&gh, &gl, SvdConvention::Hermitian).unwrap();
        let lit = svd_cluster_channel(&gh, &gl, SvdConvention::LiteralTranspose).unwrap();
        assert_eq!(herm.singular_values, lit.singular_values);
        for i in 0..2 {
            assert!((herm.left[(i, 0)] - lit.left[(i, 0)].conj()).norm() < 1e-12);
        }
        // both variants still zero-force their own equivalent channels
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let vecs: Vec<_> = (0..3)
            .map(|_| {
                let gm = random_matrix(&mut rng, 3, 2);
                svd_cluster_channel(
                    &gm.column(0).into_owned(),
                    &gm.column(1).into_owned(),
                    SvdConvention::LiteralTranspose,
                )
                .unwrap()
                .vector
            })
            .collect();
        let w = svd_zf_digital(&vecs).unwrap();
        assert!(max_offdiag_residual(&DMatrix::from_columns(&vecs), &w) < 1e-9);
    }
}
