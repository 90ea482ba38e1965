//! Online shape estimation from the two 5-DoF coil readings.
//!
//! The shape is the minimiser of
//! `sum_i w_pi |p̄_i - p_i(Psi)|² + w_ti |t̄_i - t_i(Psi)|²`
//! found by a Levenberg-Marquardt iteration with box bounds on the bend angles
//! and arc lengths, warm-started from the previous estimate.

use nalgebra::{Matrix6, SMatrix, SVector, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::jacobians::coil_jacobians;
use crate::kinematics::{coil_fk, ConfigPsi, RobotGeometry};
use crate::scalar::{wrap_angle, Real};

type Residual<T> = SVector<T, 12>;
type ResidualJacobian<T> = SMatrix<T, 12, 6>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoilId {
    Sheath,
    Catheter,
}

/// One 5-DoF tracking sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real + Serialize + for<'a> Deserialize<'a>")]
pub struct CoilReading<T: Real> {
    pub coil: CoilId,
    /// mm
    pub position: Vector3<T>,
    /// unit vector
    pub tangent: Vector3<T>,
    /// seconds
    pub timestamp: f64,
}

impl<T: Real> CoilReading<T> {
    /// Builds a reading, normalising the tangent.
    pub fn new(coil: CoilId, position: Vector3<T>, tangent: Vector3<T>, timestamp: f64) -> Self {
        Self {
            coil,
            position,
            tangent: tangent.normalize(),
            timestamp,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real + Serialize + for<'a> Deserialize<'a>")]
pub struct FitWeights<T: Real> {
    /// mm⁻²
    pub position_sheath: T,
    pub tangent_sheath: T,
    pub position_catheter: T,
    pub tangent_catheter: T,
}

impl Default for FitWeights<f64> {
    fn default() -> Self {
        Self {
            position_sheath: 1.0,
            tangent_sheath: 25.0,
            position_catheter: 1.0,
            tangent_catheter: 25.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real + Serialize + for<'a> Deserialize<'a>")]
pub struct FitBounds<T: Real> {
    pub theta_max: T,
    pub length_min: T,
    pub length_max: T,
}

impl Default for FitBounds<f64> {
    fn default() -> Self {
        Self {
            theta_max: 3.0,
            length_min: 5.0,
            length_max: 200.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real + Serialize + for<'a> Deserialize<'a>")]
pub struct FitConfig<T: Real> {
    pub weights: FitWeights<T>,
    pub bounds: FitBounds<T>,
    pub max_iterations: usize,
    /// Relative step size below which the iteration stops.
    pub step_tolerance: T,
    /// Weighted residual norm below which the iteration stops.
    pub residual_tolerance: T,
    /// A fit whose residual exceeds this is not accepted.
    pub max_residual: T,
}

impl Default for FitConfig<f64> {
    fn default() -> Self {
        Self {
            weights: FitWeights::default(),
            bounds: FitBounds::default(),
            max_iterations: 50,
            step_tolerance: 1e-10,
            residual_tolerance: 1e-8,
            max_residual: 5.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitStatus {
    ResidualTolerance,
    StepTolerance,
    /// No damped step reduces the objective any further.
    Stalled,
    IterationLimit,
    NumericalFailure,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real + Serialize + for<'a> Deserialize<'a>")]
pub struct FitResult<T: Real> {
    pub psi: ConfigPsi<T>,
    /// Square root of the weighted objective.
    pub residual: T,
    pub converged: bool,
    pub iterations: usize,
    pub status: FitStatus,
}

struct Problem<'a, T: Real> {
    sheath: &'a CoilReading<T>,
    catheter: &'a CoilReading<T>,
    sqrt_w: [T; 4],
    geom: &'a RobotGeometry<T>,
}

impl<T: Real> Problem<'_, T> {
    fn residual(&self, psi: &ConfigPsi<T>) -> Option<Residual<T>> {
        let (c1, c2) = coil_fk(psi, self.geom).ok()?;
        let mut r = Residual::zeros();
        let w = &self.sqrt_w;
        r.fixed_rows_mut::<3>(0)
            .copy_from(&((self.sheath.position - c1.position) * w[0]));
        r.fixed_rows_mut::<3>(3)
            .copy_from(&((self.sheath.tangent - c1.tangent()) * w[1]));
        r.fixed_rows_mut::<3>(6)
            .copy_from(&((self.catheter.position - c2.position) * w[2]));
        r.fixed_rows_mut::<3>(9)
            .copy_from(&((self.catheter.tangent - c2.tangent()) * w[3]));
        r.iter().all(|x| x.finite()).then_some(r)
    }

    fn jacobian(&self, psi: &ConfigPsi<T>) -> Option<ResidualJacobian<T>> {
        let analytic = coil_jacobians(psi, self.geom).ok().and_then(|cj| {
            let w = &self.sqrt_w;
            let mut j = ResidualJacobian::zeros();
            j.fixed_view_mut::<3, 6>(0, 0)
                .copy_from(&(cj.position1 * -w[0]));
            j.fixed_view_mut::<3, 6>(3, 0)
                .copy_from(&(cj.tangent1 * -w[1]));
            j.fixed_view_mut::<3, 6>(6, 0)
                .copy_from(&(cj.position2 * -w[2]));
            j.fixed_view_mut::<3, 6>(9, 0)
                .copy_from(&(cj.tangent2 * -w[3]));
            j.iter().all(|x| x.finite()).then_some(j)
        });
        analytic.or_else(|| self.fd_jacobian(psi))
    }

    fn fd_jacobian(&self, psi: &ConfigPsi<T>) -> Option<ResidualJacobian<T>> {
        let h = T::lit(1e-6);
        let x = psi.to_vector();
        let mut j = ResidualJacobian::zeros();
        for c in 0..6 {
            let mut e = Vector6::zeros();
            e[c] = h;
            let rp = self.residual(&raw_psi(&(x + e)))?;
            let rm = self.residual(&raw_psi(&(x - e)))?;
            j.set_column(c, &((rp - rm) / (h + h)));
        }
        Some(j)
    }
}

fn raw_psi<T: Real>(v: &Vector6<T>) -> ConfigPsi<T> {
    ConfigPsi {
        theta1: v[0],
        l1: v[1],
        delta1: v[2],
        theta2: v[3],
        l2: v[4],
        delta2: v[5],
    }
}

fn project<T: Real>(v: &Vector6<T>, b: &FitBounds<T>) -> ConfigPsi<T> {
    let tmax = b.theta_max;
    ConfigPsi {
        theta1: v[0].clamp(-tmax, tmax),
        l1: v[1].clamp(b.length_min, b.length_max),
        delta1: wrap_angle(v[2]),
        theta2: v[3].clamp(-tmax, tmax),
        l2: v[4].clamp(b.length_min, b.length_max),
        delta2: wrap_angle(v[5]),
    }
}

/// Fits the shape to a pair of coil readings (sheath, catheter).
///
/// Never fails: numerical trouble yields `converged == false` together with
/// the best iterate found.
pub fn fit_shape<T: Real>(
    readings: (&CoilReading<T>, &CoilReading<T>),
    initial: &ConfigPsi<T>,
    cfg: &FitConfig<T>,
    geom: &RobotGeometry<T>,
) -> FitResult<T> {
    let w = &cfg.weights;
    let problem = Problem {
        sheath: readings.0,
        catheter: readings.1,
        sqrt_w: [
            w.position_sheath.max(T::zero()).sqrt(),
            w.tangent_sheath.max(T::zero()).sqrt(),
            w.position_catheter.max(T::zero()).sqrt(),
            w.tangent_catheter.max(T::zero()).sqrt(),
        ],
        geom,
    };
    let finish = |psi: ConfigPsi<T>, residual: T, iterations, status| {
        let clean = matches!(
            status,
            FitStatus::ResidualTolerance | FitStatus::StepTolerance | FitStatus::Stalled
        );
        FitResult {
            psi,
            residual,
            converged: clean && residual <= cfg.max_residual,
            iterations,
            status,
        }
    };

    let mut psi = project(&initial.to_vector(), &cfg.bounds);
    let Some(mut r) = problem.residual(&psi) else {
        return finish(
            *initial,
            T::max_value().unwrap(),
            0,
            FitStatus::NumericalFailure,
        );
    };
    let mut cost = r.norm_squared();
    let mut mu = T::lit(1e-3);

    for iter in 0..cfg.max_iterations {
        if cost.sqrt() <= cfg.residual_tolerance {
            return finish(psi, cost.sqrt(), iter, FitStatus::ResidualTolerance);
        }
        let Some(j) = problem.jacobian(&psi) else {
            return finish(psi, cost.sqrt(), iter, FitStatus::NumericalFailure);
        };
        let jtj: Matrix6<T> = j.transpose() * j;
        let grad: Vector6<T> = j.transpose() * r;
        let diag_floor = jtj.diagonal().amax() * T::lit(1e-9) + T::lit(1e-12);

        let mut accepted = None;
        for _ in 0..12 {
            let mut a = jtj;
            for k in 0..6 {
                a[(k, k)] += mu * (jtj[(k, k)] + diag_floor);
            }
            let Some(step) = a.cholesky().map(|c| c.solve(&(-grad))) else {
                mu *= T::lit(10.0);
                continue;
            };
            let x = psi.to_vector();
            let candidate = project(&(x + step), &cfg.bounds);
            if let Some(rc) = problem.residual(&candidate) {
                let c = rc.norm_squared();
                if c < cost {
                    accepted = Some((candidate, rc, c, step));
                    break;
                }
            }
            mu *= T::lit(4.0);
        }

        let Some((candidate, rc, c, step)) = accepted else {
            return finish(psi, cost.sqrt(), iter + 1, FitStatus::Stalled);
        };
        let x_norm = psi.to_vector().norm();
        psi = candidate;
        r = rc;
        cost = c;
        mu = (mu / T::lit(3.0)).max(T::lit(1e-12));
        if step.norm() <= cfg.step_tolerance * (T::one() + x_norm) {
            return finish(psi, cost.sqrt(), iter + 1, FitStatus::StepTolerance);
        }
    }
    if cost.sqrt() <= cfg.residual_tolerance {
        return finish(
            psi,
            cost.sqrt(),
            cfg.max_iterations,
            FitStatus::ResidualTolerance,
        );
    }
    finish(
        psi,
        cost.sqrt(),
        cfg.max_iterations,
        FitStatus::IterationLimit,
    )
}

/// Hold-last-good: keeps `previous` unless `current` converged below `max_residual`.
pub fn fallback_policy<T: Real>(
    current: &FitResult<T>,
    previous: &ConfigPsi<T>,
    max_residual: T,
) -> ConfigPsi<T> {
    if current.converged && current.residual <= max_residual {
        current.psi
    } else {
        log::warn!(
            "shape fit rejected (status {:?}, residual {}, {} iterations); holding previous estimate",
            current.status,
            current.residual,
            current.iterations
        );
        *previous
    }
}

/// Stateful estimator owned by the control loop.
#[derive(Debug, Clone)]
pub struct ShapeEstimator<T: Real> {
    cfg: FitConfig<T>,
    last_good: ConfigPsi<T>,
    last_fit: Option<FitResult<T>>,
    rejected: usize,
}

impl<T: Real> ShapeEstimator<T> {
    pub fn new(cfg: FitConfig<T>, initial: ConfigPsi<T>) -> Self {
        Self {
            cfg,
            last_good: initial,
            last_fit: None,
            rejected: 0,
        }
    }

    /// Fits from the current estimate and returns the accepted shape.
    pub fn update(
        &mut self,
        readings: (&CoilReading<T>, &CoilReading<T>),
        geom: &RobotGeometry<T>,
    ) -> ConfigPsi<T> {
        let fit = fit_shape(readings, &self.last_good, &self.cfg, geom);
        self.accept(fit)
    }

    /// Like [`update`](Self::update), but an accepted fit is rewritten with
    /// its bend directions on the same side as `chart`'s, so that it can be
    /// paired with Jacobians evaluated in that parameterization.
    pub fn update_in_chart(
        &mut self,
        readings: (&CoilReading<T>, &CoilReading<T>),
        geom: &RobotGeometry<T>,
        chart: &ConfigPsi<T>,
    ) -> ConfigPsi<T> {
        let start = self.last_good.aligned_to(chart);
        let mut fit = fit_shape(readings, &start, &self.cfg, geom);
        fit.psi = fit.psi.aligned_to(chart);
        self.accept(fit)
    }

    fn accept(&mut self, fit: FitResult<T>) -> ConfigPsi<T> {
        let next = fallback_policy(&fit, &self.last_good, self.cfg.max_residual);
        if next != fit.psi {
            self.rejected += 1;
        }
        self.last_good = next;
        self.last_fit = Some(fit);
        next
    }

    pub fn estimate(&self) -> &ConfigPsi<T> {
        &self.last_good
    }

    pub fn last_fit(&self) -> Option<&FitResult<T>> {
        self.last_fit.as_ref()
    }

    /// Number of fits rejected by the fallback policy.
    pub fn rejected(&self) -> usize {
        self.rejected
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn readings(
        psi: &ConfigPsi<f64>,
        geom: &RobotGeometry<f64>,
    ) -> (CoilReading<f64>, CoilReading<f64>) {
        let (c1, c2) = coil_fk(psi, geom).unwrap();
        (
            CoilReading::new(CoilId::Sheath, c1.position, c1.tangent(), 0.0),
            CoilReading::new(CoilId::Catheter, c2.position, c2.tangent(), 0.0),
        )
    }

    fn geom() -> RobotGeometry<f64> {
        RobotGeometry::new(15.0, [0.0, 0.0]).unwrap()
    }

    fn perturb(psi: &ConfigPsi<f64>, rng: &mut ChaCha8Rng, frac: f64) -> ConfigPsi<f64> {
        let v = psi
            .to_vector()
            .map(|x| x * (1.0 + rng.random_range(-frac..frac)));
        raw_psi(&v)
    }

    fn tip_error(a: &ConfigPsi<f64>, b: &ConfigPsi<f64>) -> f64 {
        let g = geom();
        (crate::kinematics::full_fk(a, &g).unwrap().position
            - crate::kinematics::full_fk(b, &g).unwrap().position)
            .norm()
    }

    #[test]
    fn recovers_shape_from_perturbed_start() {
        let truth = ConfigPsi::new(0.8, 70.0, 0.5, 1.1, 45.0, -0.9).unwrap();
        let (a, b) = readings(&truth, &geom());
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let init = perturb(&truth, &mut rng, 0.1);
        let fit = fit_shape((&a, &b), &init, &FitConfig::default(), &geom());
        assert!(fit.converged, "{fit:?}");
        assert!(tip_error(&fit.psi, &truth) < 1e-3);
    }

    #[test]
    fn straight_start_at_optimum() {
        let truth = ConfigPsi::straight(70.0, 45.0).unwrap();
        let (a, b) = readings(&truth, &geom());
        let fit = fit_shape((&a, &b), &truth, &FitConfig::default(), &geom());
        assert!(fit.converged);
        assert!(fit.iterations <= 2);
        assert!(fit.residual < 1e-9);
        assert_eq!(fit.psi, truth);
    }

    #[test]
    fn noisy_positions_median_tip_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let noise = Normal::new(0.0, 0.5).unwrap();
        let truth = ConfigPsi::new(0.7, 65.0, 0.3, 0.9, 45.0, 1.4).unwrap();
        let g = geom();
        let mut errs: Vec<f64> = (0..100)
            .map(|_| {
                let (mut a, mut b) = readings(&truth, &g);
                for r in [&mut a, &mut b] {
                    r.position += Vector3::from_fn(|_, _| noise.sample(&mut rng));
                }
                let init = perturb(&truth, &mut rng, 0.1);
                let fit = fit_shape((&a, &b), &init, &FitConfig::default(), &g);
                tip_error(&fit.psi, &truth)
            })
            .collect();
        errs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!(errs[50] < 1.5, "median {}", errs[50]);
    }

    #[test]
    fn deterministic() {
        let truth = ConfigPsi::new(1.3, 80.0, -2.0, 0.4, 40.0, 0.1).unwrap();
        let (a, b) = readings(&truth, &geom());
        let init = ConfigPsi::new(1.0, 75.0, -1.8, 0.5, 45.0, 0.0).unwrap();
        let f1 = fit_shape((&a, &b), &init, &FitConfig::default(), &geom());
        let f2 = fit_shape((&a, &b), &init, &FitConfig::default(), &geom());
        assert_eq!(f1, f2);
    }

    #[test]
    fn positions_only_terminates() {
        let truth = ConfigPsi::new(0.6, 70.0, 0.2, 0.9, 45.0, -0.5).unwrap();
        let (a, b) = readings(&truth, &geom());
        let cfg = FitConfig {
            weights: FitWeights {
                tangent_sheath: 0.0,
                tangent_catheter: 0.0,
                ..Default::default()
            },
            ..Default::default()
        };
        let init = ConfigPsi::new(0.3, 60.0, 0.0, 0.3, 50.0, 0.0).unwrap();
        let fit = fit_shape((&a, &b), &init, &cfg, &geom());
        assert!(fit.iterations <= cfg.max_iterations);
        assert!(fit.residual.is_finite());
        assert!(!fit.converged || fit.residual <= cfg.max_residual);
    }

    #[test]
    fn objective_never_increases() {
        let truth = ConfigPsi::new(1.5, 90.0, 2.5, -1.0, 30.0, -2.0).unwrap();
        let (a, b) = readings(&truth, &geom());
        let init = ConfigPsi::new(1.2, 80.0, 2.0, -0.7, 40.0, -1.5).unwrap();
        let mut prev = f64::INFINITY;
        for n in 0..15 {
            let cfg = FitConfig {
                max_iterations: n,
                ..Default::default()
            };
            let fit = fit_shape((&a, &b), &init, &cfg, &geom());
            assert!(fit.residual <= prev + 1e-12);
            prev = fit.residual;
        }
    }

    #[test]
    fn policy_cases() {
        let prev = ConfigPsi::straight(70.0, 45.0).unwrap();
        let cur = ConfigPsi::new(0.5, 70.0, 0.0, 0.5, 45.0, 0.0).unwrap();
        let mut fit = FitResult {
            psi: cur,
            residual: 0.1,
            converged: true,
            iterations: 3,
            status: FitStatus::StepTolerance,
        };
        assert_eq!(fallback_policy(&fit, &prev, 1.0), cur);
        fit.converged = false;
        assert_eq!(fallback_policy(&fit, &prev, 1.0), prev);
        fit.converged = true;
        fit.residual = 2.0;
        assert_eq!(fallback_policy(&fit, &prev, 1.0), prev);
    }

    #[test]
    fn estimator_holds_last_good_on_garbage() {
        let truth = ConfigPsi::new(0.5, 70.0, 0.2, 0.8, 45.0, -0.5).unwrap();
        let g = geom();
        let (a, mut b) = readings(&truth, &g);
        let mut est = ShapeEstimator::new(
            FitConfig {
                max_residual: 0.5,
                ..Default::default()
            },
            truth,
        );
        b.position += Vector3::new(400.0, 0.0, 0.0);
        let out = est.update((&a, &b), &g);
        assert_eq!(out, truth);
        assert_eq!(est.rejected(), 1);
    }
}
