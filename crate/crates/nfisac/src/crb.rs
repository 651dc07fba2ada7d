//! Fisher information and the 2×2 estimation bound for joint (angle,
//! distance) target estimation.
//!
//! Parameter ordering is fixed: index 1 = angle θ, index 2 = distance d.
//! The nuisance block (real and imaginary parts of the round-trip gain) is
//! eliminated by a Schur complement. All information terms are linear in the
//! transmit covariance, which the scale-law tests exploit.
//!
//! Internally the covariance is divided by the radar noise power up front so
//! every trace works near unity; by linearity the result is identical.

use crate::channel::SensingChannelBundle;
use crate::linalg::{CMat, Mat2};
use crate::scalar::{conv, Scalar};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CrbError {
    #[error("covariance/channel dimension mismatch")]
    DimensionMismatch,
    #[error("target is unobservable under this covariance (singular information)")]
    SingularFim,
}

/// Blocks of the full Fisher information matrix: parameters of interest
/// (`f11`), their coupling to the nuisance gain (`f12`), and the nuisance
/// block (`f22`, a scalar multiple of I₂).
#[derive(Debug, Clone, Copy)]
pub struct FimBlocks<S> {
    pub f11: Mat2<S>,
    pub f12: Mat2<S>,
    pub f22: Mat2<S>,
}

/// Estimation bound summary: the 2×2 bound matrix, its trace (the design
/// objective), and per-parameter root bounds.
#[derive(Debug, Clone, Copy)]
pub struct CrbResult<S> {
    pub matrix: Mat2<S>,
    pub trace: S,
    pub rcrb_angle: S,
    pub rcrb_dist: S,
}

/// Assemble the information blocks from the sensing bundle and a transmit
/// covariance `r` over `coherence_len` symbols at radar noise `sigma2`.
pub fn fim_blocks<S: Scalar>(
    bundle: &SensingChannelBundle<S>,
    r: &CMat<S>,
    coherence_len: usize,
    sigma2: S,
) -> Result<FimBlocks<S>, CrbError> {
    let n_tx = bundle.response.cols();
    if r.rows() != n_tx || r.cols() != n_tx {
        return Err(CrbError::DimensionMismatch);
    }
    debug_assert!(sigma2 > S::zero());
    let r_scaled = r.scale_re(sigma2.recip());

    let gr = bundle.response.mul(&r_scaled);
    let tr = bundle.d_theta.mul(&r_scaled);
    let dr = bundle.d_dist.mul(&r_scaled);

    // F_xy = Tr(G_y·R·G_xᴴ): y picks the left product, x the conjugated term.
    let f_tt = tr.trace_product_h(&bundle.d_theta).re;
    let f_td = dr.trace_product_h(&bundle.d_theta).re;
    let f_dd = dr.trace_product_h(&bundle.d_dist).re;
    let c_theta = gr.trace_product_h(&bundle.d_theta);
    let c_dist = gr.trace_product_h(&bundle.d_dist);
    let c_gain = gr.trace_product_h(&bundle.response).re;

    let two_t = conv::<S>(2.0) * conv::<S>(coherence_len as f64);
    let kappa1 = two_t * bundle.gain.norm_sqr();
    let e_theta = bundle.gain.conj() * c_theta;
    let e_dist = bundle.gain.conj() * c_dist;

    Ok(FimBlocks {
        f11: Mat2::new(f_tt, f_td, f_td, f_dd).scale(kappa1),
        f12: Mat2::new(e_theta.re, -e_theta.im, e_dist.re, -e_dist.im).scale(two_t),
        f22: Mat2::diag(c_gain, c_gain).scale(two_t),
    })
}

/// Invert the nuisance-eliminated information. Raises [`CrbError::SingularFim`]
/// when the Schur complement's smallest eigenvalue falls below
/// `1e-14 × trace`, i.e. the target is unobservable under the covariance.
pub fn crb_matrix<S: Scalar>(blocks: &FimBlocks<S>) -> Result<CrbResult<S>, CrbError> {
    if blocks.f22.m[0][0] <= S::zero() {
        return Err(CrbError::SingularFim);
    }
    let f22_inv = blocks.f22.inverse().ok_or(CrbError::SingularFim)?;
    let schur = blocks
        .f11
        .sub(&blocks.f12.mul(&f22_inv).mul(&blocks.f12.transpose()));
    let (min_eig, _) = schur.sym_eigenvalues();
    let floor = conv::<S>(1e-14) * schur.trace();
    if schur.trace() <= S::zero() || min_eig <= floor {
        return Err(CrbError::SingularFim);
    }
    let matrix = schur.inverse().ok_or(CrbError::SingularFim)?;
    Ok(CrbResult {
        matrix,
        trace: matrix.trace(),
        rcrb_angle: matrix.m[0][0].sqrt(),
        rcrb_dist: matrix.m[1][1].sqrt(),
    })
}

/// Convenience composition used wherever a bound must be reconstructed from
/// an allocation: covariance → information → bound.
pub fn crb_from_covariance<S: Scalar>(
    bundle: &SensingChannelBundle<S>,
    r: &CMat<S>,
    coherence_len: usize,
    sigma2: S,
) -> Result<CrbResult<S>, CrbError> {
    crb_matrix(&fim_blocks(bundle, r, coherence_len, sigma2)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::sensing_bundle;
    use crate::linalg::dot_h;
    use crate::scalar::Cx;
    use crate::scenario::{unit_uniform, ArrayGeometry, ArraySide, PolarPosition};
    use rand_chacha::ChaCha8Rng;
    use rand_core::SeedableRng;

    fn small_bundle(n_tx: usize, n_rx: usize) -> SensingChannelBundle<f64> {
        let g = ArrayGeometry::new(n_tx, n_rx, 0.005, 30.0e9).unwrap();
        let t = PolarPosition::new(15.0, 45f64.to_radians()).unwrap();
        sensing_bundle(&g, &t, Cx::new(3e-7, 1e-7)).unwrap()
    }

    fn random_psd(n: usize, rank: usize, seed: u64) -> CMat<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut r = CMat::zeros(n, n);
        for _ in 0..rank {
            let v: Vec<Cx<f64>> = (0..n)
                .map(|_| {
                    Cx::new(
                        unit_uniform::<f64>(&mut rng) - 0.5,
                        unit_uniform::<f64>(&mut rng) - 0.5,
                    )
                })
                .collect();
            let w = 0.1 + unit_uniform::<f64>(&mut rng);
            for a in 0..n {
                for b in 0..n {
                    r[(a, b)] = r[(a, b)] + v[a].scale(w) * v[b].conj();
                }
            }
        }
        r
    }

    #[test]
    fn zero_covariance_gives_zero_blocks() {
        let bundle = small_bundle(8, 4);
        let blocks = fim_blocks(&bundle, &CMat::zeros(8, 8), 256, 1e-11).unwrap();
        assert_eq!(blocks.f11.trace(), 0.0);
        assert_eq!(blocks.f12.m[0][0], 0.0);
        assert_eq!(blocks.f22.m[1][1], 0.0);
    }

    #[test]
    fn dimension_mismatch_detected() {
        let bundle = small_bundle(8, 4);
        assert_eq!(
            fim_blocks(&bundle, &CMat::zeros(6, 6), 256, 1e-11).unwrap_err(),
            CrbError::DimensionMismatch
        );
    }

    #[test]
    fn blocks_scale_linearly_with_covariance() {
        let bundle = small_bundle(8, 4);
        let r = random_psd(8, 3, 1);
        let a = fim_blocks(&bundle, &r, 256, 1e-11).unwrap();
        let b = fim_blocks(&bundle, &r.scale_re(3.5), 256, 1e-11).unwrap();
        for (x, y) in [
            (a.f11.m[0][0], b.f11.m[0][0]),
            (a.f11.m[0][1], b.f11.m[0][1]),
            (a.f12.m[1][0], b.f12.m[1][0]),
            (a.f12.m[0][1], b.f12.m[0][1]),
            (a.f22.m[0][0], b.f22.m[0][0]),
        ] {
            assert!((y - 3.5 * x).abs() <= 1e-12 * y.abs().max(1e-300));
        }
    }

    #[test]
    fn traces_match_naive_triple_sum() {
        // Independent tuple-arithmetic oracle for F_xy = Tr(G_y R G_xᴴ).
        let bundle = small_bundle(6, 3);
        let r = random_psd(6, 2, 7);
        let sigma2 = 1e-11;
        let blocks = fim_blocks(&bundle, &r, 256, sigma2).unwrap();

        let naive_trace = |gy: &CMat<f64>, gx: &CMat<f64>| -> (f64, f64) {
            let (n_r, n_t) = (gy.rows(), gy.cols());
            let (mut re, mut im) = (0.0, 0.0);
            for m in 0..n_r {
                for n in 0..n_t {
                    for p in 0..n_t {
                        // G_y[m,n]·R[n,p]·conj(G_x[m,p]) expanded by hand.
                        let a = (gy[(m, n)].re, gy[(m, n)].im);
                        let rr = (r[(n, p)].re / sigma2, r[(n, p)].im / sigma2);
                        let c = (gx[(m, p)].re, -gx[(m, p)].im);
                        let ab = (a.0 * rr.0 - a.1 * rr.1, a.0 * rr.1 + a.1 * rr.0);
                        re += ab.0 * c.0 - ab.1 * c.1;
                        im += ab.0 * c.1 + ab.1 * c.0;
                    }
                }
            }
            (re, im)
        };

        let two_t = 2.0 * 256.0;
        let kappa1 = two_t * bundle.gain.norm_sqr();
        let (tt, _) = naive_trace(&bundle.d_theta, &bundle.d_theta);
        let (td, _) = naive_trace(&bundle.d_dist, &bundle.d_theta);
        let (dd, _) = naive_trace(&bundle.d_dist, &bundle.d_dist);
        assert!((blocks.f11.m[0][0] - kappa1 * tt).abs() <= 1e-12 * (kappa1 * tt).abs());
        assert!((blocks.f11.m[0][1] - kappa1 * td).abs() <= 1e-12 * (kappa1 * td).abs().max(1e-300));
        assert!((blocks.f11.m[1][1] - kappa1 * dd).abs() <= 1e-12 * (kappa1 * dd).abs());

        let (ct_re, ct_im) = naive_trace(&bundle.response, &bundle.d_theta);
        let bc = (bundle.gain.re, -bundle.gain.im);
        let e_t = (bc.0 * ct_re - bc.1 * ct_im, bc.0 * ct_im + bc.1 * ct_re);
        assert!((blocks.f12.m[0][0] - two_t * e_t.0).abs() <= 1e-12 * (two_t * e_t.0).abs());
        assert!((blocks.f12.m[0][1] + two_t * e_t.1).abs() <= 1e-12 * (two_t * e_t.1).abs().max(1e-300));

        let (gg, _) = naive_trace(&bundle.response, &bundle.response);
        assert!((blocks.f22.m[0][0] - two_t * gg).abs() <= 1e-12 * (two_t * gg).abs());
        assert_eq!(blocks.f22.m[0][1], 0.0);
    }

    #[test]
    fn decoupled_nuisance_reduces_to_f11_inverse() {
        let blocks = FimBlocks::<f64> {
            f11: Mat2::diag(4.0, 1.0),
            f12: Mat2::zeros(),
            f22: Mat2::diag(2.0, 2.0),
        };
        let crb = crb_matrix(&blocks).unwrap();
        assert!((crb.matrix.m[0][0] - 0.25).abs() < 1e-15);
        assert!((crb.matrix.m[1][1] - 1.0).abs() < 1e-15);
        assert!((crb.trace - 1.25).abs() < 1e-15);
        assert!((crb.rcrb_angle - 0.5).abs() < 1e-15);
        assert!((crb.rcrb_dist - 1.0).abs() < 1e-15);
    }

    #[test]
    fn inverse_residual_on_random_blocks() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let mut draw = || unit_uniform::<f64>(&mut rng) - 0.5;
            // f11 = MᵀM + I stays comfortably positive definite.
            let m = Mat2::new(draw(), draw(), draw(), draw());
            let f11 = m.transpose().mul(&m).sub(&Mat2::diag(-1.0, -1.0));
            let f12 = Mat2::new(draw(), draw(), draw(), draw()).scale(0.3);
            let c = 2.0 + unit_uniform::<f64>(&mut rng);
            let blocks = FimBlocks {
                f11,
                f12,
                f22: Mat2::diag(c, c),
            };
            let crb = crb_matrix(&blocks).unwrap();
            let schur = f11.sub(&f12.mul(&Mat2::diag(1.0 / c, 1.0 / c)).mul(&f12.transpose()));
            let residual = crb.matrix.mul(&schur);
            assert!((residual.m[0][0] - 1.0).abs() < 1e-10);
            assert!((residual.m[1][1] - 1.0).abs() < 1e-10);
            assert!(residual.m[0][1].abs() < 1e-10);
            assert!(residual.m[1][0].abs() < 1e-10);
        }
    }

    #[test]
    fn covariance_scaling_inverts_the_trace() {
        let bundle = small_bundle(12, 6);
        let r = random_psd(12, 4, 3);
        let base = crb_from_covariance(&bundle, &r, 256, 1e-11).unwrap();
        for alpha in [0.5, 2.0, 7.25] {
            let scaled = crb_from_covariance(&bundle, &r.scale_re(alpha), 256, 1e-11).unwrap();
            let expect = base.trace / alpha;
            assert!(
                (scaled.trace - expect).abs() <= 1e-10 * expect,
                "alpha {alpha}"
            );
        }
    }

    #[test]
    fn doubling_coherence_halves_the_trace() {
        let bundle = small_bundle(12, 6);
        let r = random_psd(12, 4, 9);
        let t1 = crb_from_covariance(&bundle, &r, 128, 1e-11).unwrap();
        let t2 = crb_from_covariance(&bundle, &r, 256, 1e-11).unwrap();
        assert!((t2.trace - t1.trace / 2.0).abs() <= 1e-12 * t2.trace);
    }

    #[test]
    fn orthogonal_covariance_is_singular() {
        let bundle = small_bundle(8, 4);
        let g = ArrayGeometry::new(8, 4, 0.005, 30.0e9).unwrap();
        let t = PolarPosition::new(15.0, 45f64.to_radians()).unwrap();
        let a_t = crate::channel::array_response(&g, ArraySide::Tx, &t).unwrap();
        // q ⟂ conj(a_t) ⇒ a_tᵀ·q = 0 ⇒ the echo term vanishes.
        let a_conj: Vec<Cx<f64>> = a_t.iter().map(|z| z.conj()).collect();
        let mut q: Vec<Cx<f64>> = vec![Cx::new(0.0, 0.0); 8];
        q[0] = Cx::new(1.0, 0.0);
        let proj = dot_h(&a_conj, &q) / crate::linalg::norm_sqr(&a_conj);
        for (qi, ai) in q.iter_mut().zip(&a_conj) {
            *qi -= proj * ai;
        }
        let check = a_t.iter().zip(&q).fold(Cx::new(0.0, 0.0), |acc, (a, b)| acc + a * b);
        assert!(check.norm() < 1e-12);
        let mut r = CMat::zeros(8, 8);
        for i in 0..8 {
            for j in 0..8 {
                r[(i, j)] = q[i] * q[j].conj();
            }
        }
        assert_eq!(
            crb_from_covariance(&bundle, &r, 256, 1e-11).unwrap_err(),
            CrbError::SingularFim
        );

        // Aligned covariance stays observable.
        let mut aligned = CMat::zeros(8, 8);
        for i in 0..8 {
            for j in 0..8 {
                aligned[(i, j)] = a_conj[i] * a_conj[j].conj();
            }
        }
        let crb = crb_from_covariance(&bundle, &aligned, 256, 1e-11).unwrap();
        assert!(crb.trace.is_finite() && crb.trace > 0.0);
    }

    #[test]
    fn bound_matrix_is_symmetric_positive() {
        let bundle = small_bundle(16, 8);
        let r = random_psd(16, 5, 21);
        let crb = crb_from_covariance(&bundle, &r, 256, 1e-11).unwrap();
        assert!(crb.matrix.symmetry_gap() <= 1e-10 * crb.trace);
        let (lo, _) = crb.matrix.sym_eigenvalues();
        assert!(lo > 0.0);
        assert!((crb.trace - (crb.rcrb_angle.powi(2) + crb.rcrb_dist.powi(2))).abs() <= 1e-12 * crb.trace);
    }
}
