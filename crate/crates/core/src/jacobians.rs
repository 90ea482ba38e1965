//! Analytic Jacobians of the constant-curvature model.
//!
//! Segment Jacobians are derived from the arc pose directly. The bend-angle
//! column of the linear Jacobian is `L [h' cos d, h' sin d, s']` with
//! `h' = (sin t - h)/t` and `s' = (cos t - s)/t`. The angular Jacobian is the
//! spatial angular velocity of `Rz(d) Ry(t) Rz(-d)`. Every analytic map here has
//! a central-difference counterpart in [`fd`] used for verification.

use nalgebra::{Matrix3, Matrix3x6, Matrix6, Matrix6x3, RowVector6, SymmetricEigen, Vector3};

use crate::actuation::{actuation_jacobian, ActuationParams, ActuationQ};
use crate::error::{invalid, Error, Result};
use crate::kinematics::{
    check_segment, partial_arc, ArcBranch, ArcFactors, ConfigPsi, RobotGeometry,
};
use crate::scalar::Real;
use crate::transform::{skew, Pose};

/// Columns are `(theta, L, delta)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentJacobian<T: Real> {
    /// Linear velocity of the segment end, mm per unit parameter rate.
    pub jv: Matrix3<T>,
    /// Angular velocity of the end frame in the segment base frame.
    pub jw: Matrix3<T>,
}

pub fn segment_jacobian<T: Real>(theta: T, length: T, delta: T) -> Result<SegmentJacobian<T>> {
    segment_jacobian_with(theta, length, delta, ArcBranch::Auto)
}

pub fn segment_jacobian_with<T: Real>(
    theta: T,
    length: T,
    delta: T,
    branch: ArcBranch,
) -> Result<SegmentJacobian<T>> {
    check_segment(theta, length, delta)?;
    let f = ArcFactors::new(theta, branch);
    let (sd, cd) = delta.sin_cos();
    let st = theta.sin();
    let half = (theta * T::lit(0.5)).sin();
    let one_minus_ct = T::lit(2.0) * half * half;
    let z = T::zero();
    let l = length;
    let jv = Matrix3::new(
        l * f.dh * cd,
        f.h * cd,
        -l * f.h * sd,
        l * f.dh * sd,
        f.h * sd,
        l * f.h * cd,
        l * f.ds,
        f.s,
        z,
    );
    let jw = Matrix3::new(-sd, z, -cd * st, cd, z, -sd * st, z, z, one_minus_ct);
    Ok(SegmentJacobian { jv, jw })
}

/// Pose and Jacobian (w.r.t. the full segment's `(theta, L, delta)`) of the
/// frame lying `offset` mm before the segment end.
fn partial_segment<T: Real>(
    theta: T,
    length: T,
    delta: T,
    offset: T,
) -> Result<(Pose<T>, SegmentJacobian<T>)> {
    let (pt, pl) = partial_arc(theta, length, offset)?;
    let pose = crate::kinematics::segment_fk(pt, pl, delta)?;
    let j = segment_jacobian(pt, pl, delta)?;
    if offset == T::zero() {
        return Ok((pose, j));
    }
    let z = T::zero();
    let chain = Matrix3::new(
        pl / length,
        theta * offset / (length * length),
        z,
        z,
        T::one(),
        z,
        z,
        z,
        T::one(),
    );
    Ok((
        pose,
        SegmentJacobian {
            jv: j.jv * chain,
            jw: j.jw * chain,
        },
    ))
}

/// Sensitivities of both coil frames to the shape vector.
#[derive(Debug, Clone, PartialEq)]
pub struct CoilJacobians<T: Real> {
    pub pose1: Pose<T>,
    pub pose2: Pose<T>,
    /// `d p1 / d Psi`, `d t1 / d Psi`, `d p2 / d Psi`, `d t2 / d Psi`.
    pub position1: Matrix3x6<T>,
    pub tangent1: Matrix3x6<T>,
    pub position2: Matrix3x6<T>,
    pub tangent2: Matrix3x6<T>,
    /// `d p2 / d Ln`: the sheath tip tangent.
    pub position2_straight: Vector3<T>,
}

pub fn coil_jacobians<T: Real>(
    psi: &ConfigPsi<T>,
    geom: &RobotGeometry<T>,
) -> Result<CoilJacobians<T>> {
    let seg1 = crate::kinematics::segment_fk(psi.theta1, psi.l1, psi.delta1)?;
    let j1 = segment_jacobian(psi.theta1, psi.l1, psi.delta1)?;
    let (pose1, j1c) = partial_segment(psi.theta1, psi.l1, psi.delta1, geom.coil_offsets[0])?;
    let (seg2c, j2c) = partial_segment(psi.theta2, psi.l2, psi.delta2, geom.coil_offsets[1])?;

    let r1 = *seg1.rotation.matrix();
    let lever_local = Vector3::new(T::zero(), T::zero(), geom.straight_length) + seg2c.position;
    let lever = r1 * lever_local;
    let pose2 = Pose::new(seg1.rotation * seg2c.rotation, seg1.position + lever);
    let t1 = pose1.tangent();
    let t2 = pose2.tangent();

    let mut position1 = Matrix3x6::zeros();
    let mut tangent1 = Matrix3x6::zeros();
    position1.fixed_view_mut::<3, 3>(0, 0).copy_from(&j1c.jv);
    tangent1
        .fixed_view_mut::<3, 3>(0, 0)
        .copy_from(&(-skew(&t1) * j1c.jw));

    let mut position2 = Matrix3x6::zeros();
    position2
        .fixed_view_mut::<3, 3>(0, 0)
        .copy_from(&(j1.jv - skew(&lever) * j1.jw));
    position2
        .fixed_view_mut::<3, 3>(0, 3)
        .copy_from(&(r1 * j2c.jv));
    let mut tangent2 = Matrix3x6::zeros();
    tangent2
        .fixed_view_mut::<3, 3>(0, 0)
        .copy_from(&(-skew(&t2) * j1.jw));
    tangent2
        .fixed_view_mut::<3, 3>(0, 3)
        .copy_from(&(-skew(&t2) * r1 * j2c.jw));

    Ok(CoilJacobians {
        pose1,
        pose2,
        position1,
        tangent1,
        position2,
        tangent2,
        position2_straight: seg1.rotation.z_axis(),
    })
}

/// Linear Jacobian of the controlled point (catheter coil) w.r.t. the shape.
///
/// Sheath columns are `J1v - [r]x J1w`, with `r` the base-frame vector from
/// the sheath end to the controlled point. Catheter columns are the catheter
/// segment Jacobian rotated into the base frame.
pub fn robot_linear_jacobian<T: Real>(
    psi: &ConfigPsi<T>,
    geom: &RobotGeometry<T>,
) -> Result<Matrix3x6<T>> {
    Ok(coil_jacobians(psi, geom)?.position2)
}

/// Jacobians used by the resolved-rates law.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlJacobian<T: Real> {
    /// `d p / d Psi` at fixed `Ln`.
    pub jv_full: Matrix3x6<T>,
    /// `d Psi / d q`.
    pub jq: Matrix6<T>,
    /// `d p / d Ln`.
    pub jv_straight: Vector3<T>,
    /// `d Ln / d q`.
    pub straight_grad: RowVector6<T>,
    /// `J = jv_full jq + jv_straight straight_grad`, 3x6 over `q`.
    pub j: Matrix3x6<T>,
}

/// Task Jacobian `J` over the commands. `geom.straight_length` is replaced by
/// the value implied by `q`.
pub fn control_jacobian<T: Real>(
    psi: &ConfigPsi<T>,
    q: &ActuationQ<T>,
    params: &ActuationParams<T>,
    geom: &RobotGeometry<T>,
) -> Result<ControlJacobian<T>> {
    let geom = geom.with_straight_length(params.straight_length(q));
    let cj = coil_jacobians(psi, &geom)?;
    let jq = actuation_jacobian(q, params);
    let straight_grad = params.straight_length_gradient(q);
    let j = cj.position2 * jq + cj.position2_straight * straight_grad;
    Ok(ControlJacobian {
        jv_full: cj.position2,
        jq,
        jv_straight: cj.position2_straight,
        straight_grad,
        j,
    })
}

/// Damped right pseudo-inverse `Jᵀ (J Jᵀ + λ² I)⁻¹`.
///
/// With `lambda = 0` and full row rank this is the Moore-Penrose inverse.
pub fn damped_pinv<T: Real>(j: &Matrix3x6<T>, lambda: T) -> Result<Matrix6x3<T>> {
    if lambda < T::zero() || !lambda.finite() {
        return Err(invalid("lambda", "damping must be finite and >= 0"));
    }
    let a = j * j.transpose() + Matrix3::identity() * (lambda * lambda);
    let eig = SymmetricEigen::new(a);
    let vmax = eig.eigenvalues.amax();
    let vmin = eig.eigenvalues.min();
    if vmax <= T::zero() || vmin <= vmax * T::lit(1e-14) {
        return Err(Error::RankDeficient {
            pivot: vmin.to_f64_lossy(),
        });
    }
    let inv_diag = Matrix3::from_diagonal(&eig.eigenvalues.map(|x| T::one() / x));
    let inv = eig.eigenvectors * inv_diag * eig.eigenvectors.transpose();
    Ok(j.transpose() * inv)
}

/// Central-difference versions of the analytic maps.
pub mod fd {
    use super::*;
    use crate::actuation::ActuationParams;
    use crate::kinematics::{full_fk, segment_fk};
    use nalgebra::Vector6;

    /// Default step for central differences.
    pub const STEP: f64 = 1e-6;

    /// `vee(dR Rᵀ)` for a rotation derivative.
    fn angular(dr: &Matrix3<f64>, r: &Matrix3<f64>) -> Vector3<f64> {
        let w = dr * r.transpose();
        Vector3::new(
            0.5 * (w[(2, 1)] - w[(1, 2)]),
            0.5 * (w[(0, 2)] - w[(2, 0)]),
            0.5 * (w[(1, 0)] - w[(0, 1)]),
        )
    }

    pub fn segment_jacobian(
        theta: f64,
        length: f64,
        delta: f64,
        h: f64,
    ) -> Result<SegmentJacobian<f64>> {
        let base = segment_fk(theta, length, delta)?;
        let mut jv = Matrix3::zeros();
        let mut jw = Matrix3::zeros();
        let x = Vector3::new(theta, length, delta);
        for c in 0..3 {
            let mut e = Vector3::zeros();
            e[c] = h;
            let (p, m) = (x + e, x - e);
            let fp = segment_fk(p[0], p[1], p[2])?;
            let fm = segment_fk(m[0], m[1], m[2])?;
            jv.set_column(c, &((fp.position - fm.position) / (2.0 * h)));
            let dr = (fp.rotation.matrix() - fm.rotation.matrix()) / (2.0 * h);
            jw.set_column(c, &angular(&dr, base.rotation.matrix()));
        }
        Ok(SegmentJacobian { jv, jw })
    }

    /// Differences of [`full_fk`] over the six shape components. Angles are
    /// perturbed without wrapping.
    pub fn robot_linear_jacobian(
        psi: &ConfigPsi<f64>,
        geom: &RobotGeometry<f64>,
        h: f64,
    ) -> Result<Matrix3x6<f64>> {
        let x = psi.to_vector();
        let eval = |v: Vector6<f64>| -> Result<Vector3<f64>> {
            let p = ConfigPsi {
                theta1: v[0],
                l1: v[1],
                delta1: v[2],
                theta2: v[3],
                l2: v[4],
                delta2: v[5],
            };
            Ok(full_fk(&p, geom)?.position)
        };
        let mut out = Matrix3x6::zeros();
        for c in 0..6 {
            let mut e = Vector6::zeros();
            e[c] = h;
            out.set_column(c, &((eval(x + e)? - eval(x - e)?) / (2.0 * h)));
        }
        Ok(out)
    }

    /// Differences of the command-to-shape map (without angle wrapping).
    pub fn actuation_jacobian(
        q: &ActuationQ<f64>,
        params: &ActuationParams<f64>,
        h: f64,
    ) -> Matrix6<f64> {
        let map = |v: Vector6<f64>| {
            let t1 = params.k1 * v[2];
            Vector6::new(
                t1,
                v[1] + params.b1,
                v[0],
                params.k2 * v[5] + params.kc * t1 * (v[0] - v[3]).cos(),
                v[4] + params.b2,
                v[3],
            )
        };
        let x = q.to_vector();
        let mut out = Matrix6::zeros();
        for c in 0..6 {
            let mut e = Vector6::zeros();
            e[c] = h;
            out.set_column(c, &((map(x + e) - map(x - e)) / (2.0 * h)));
        }
        out
    }

    /// Worst relative errors of the analytic Jacobians over a random sample.
    #[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
    pub struct CheckReport {
        pub samples: usize,
        pub seed: u64,
        pub max_segment_error: f64,
        pub max_robot_error: f64,
        pub max_actuation_error: f64,
    }

    impl CheckReport {
        pub fn passes(&self, tolerance: f64) -> bool {
            self.max_segment_error < tolerance
                && self.max_robot_error < tolerance
                && self.max_actuation_error < tolerance
        }
    }

    /// Compares the analytic segment, robot and actuation Jacobians with
    /// central differences at `samples` random configurations whose bend
    /// magnitudes lie in `[0.05, 2.5]` rad.
    pub fn random_check(
        samples: usize,
        seed: u64,
        params: &ActuationParams<f64>,
    ) -> Result<CheckReport> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let pi = std::f64::consts::PI;
        let bend = |rng: &mut rand_chacha::ChaCha8Rng| {
            let m: f64 = rng.random_range(0.05..=2.5);
            if rng.random_bool(0.5) {
                m
            } else {
                -m
            }
        };
        let mut report = CheckReport {
            samples,
            seed,
            max_segment_error: 0.0,
            max_robot_error: 0.0,
            max_actuation_error: 0.0,
        };
        for _ in 0..samples {
            let psi = ConfigPsi::new(
                bend(&mut rng),
                rng.random_range(30.0..110.0),
                rng.random_range(-pi..pi),
                bend(&mut rng),
                rng.random_range(20.0..90.0),
                rng.random_range(-pi..pi),
            )?;
            let geom = RobotGeometry::new(rng.random_range(0.0..40.0), [0.0, 0.0])?;

            let a = super::segment_jacobian(psi.theta1, psi.l1, psi.delta1)?;
            let n = segment_jacobian(psi.theta1, psi.l1, psi.delta1, STEP)?;
            let e = relative_error(&a.jv, &n.jv).max(relative_error(&a.jw, &n.jw));
            report.max_segment_error = report.max_segment_error.max(e);

            let a = super::robot_linear_jacobian(&psi, &geom)?;
            let n = robot_linear_jacobian(&psi, &geom, STEP)?;
            report.max_robot_error = report.max_robot_error.max(relative_error(&a, &n));

            let q = ActuationQ::new(
                rng.random_range(-pi..pi),
                rng.random_range(0.0..50.0),
                bend(&mut rng) / params.k1,
                rng.random_range(-pi..pi),
                rng.random_range(0.0..50.0),
                bend(&mut rng) / params.k2,
            );
            let a = super::actuation_jacobian(&q, params);
            let n = actuation_jacobian(&q, params, STEP);
            report.max_actuation_error = report.max_actuation_error.max(relative_error(&a, &n));
        }
        Ok(report)
    }

    /// `max |A - F| / max |F|`, the matrix-level relative error used for checks.
    pub fn relative_error<R: nalgebra::Dim, C: nalgebra::Dim, S1, S2>(
        analytic: &nalgebra::Matrix<f64, R, C, S1>,
        numeric: &nalgebra::Matrix<f64, R, C, S2>,
    ) -> f64
    where
        S1: nalgebra::storage::Storage<f64, R, C>,
        S2: nalgebra::storage::Storage<f64, R, C>,
    {
        let diff = analytic
            .iter()
            .zip(numeric.iter())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        diff / numeric.amax().max(f64::MIN_POSITIVE)
    }
}
