//! Least-squares identification of the bend gains from measured bend angles.
//!
//! `theta1 = k1 gamma1` gives `k1` directly. The catheter relation is linear in
//! `(k2, kc k1)` with regressors `(gamma2, gamma1 cos(delta1 - delta2))`, so
//! `kc` follows once `k1` is known.

use nalgebra::{DMatrix, DVector};

use super::{ActuationParams, ActuationQ};
use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationSample<T: Real> {
    pub q: ActuationQ<T>,
    /// Measured bend angles, rad.
    pub theta1: T,
    pub theta2: T,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct CalibrationReport<T> {
    pub k1: T,
    pub k2: T,
    pub kc: T,
    pub samples: usize,
    /// RMS of the fitted-minus-measured bend angles, rad.
    pub rms_theta1: T,
    pub rms_theta2: T,
    pub max_abs_residual: T,
}

pub const MIN_SAMPLES: usize = 4;

/// Relative excitation below which a regressor counts as absent.
const EXCITATION_TOL: f64 = 1e-12;

/// Fits `k1`, `k2`, `kc`; everything else is copied from `base`.
pub fn calibrate<T: Real>(
    samples: &[CalibrationSample<T>],
    base: &ActuationParams<T>,
) -> Result<(ActuationParams<T>, CalibrationReport<T>)> {
    if samples.len() < MIN_SAMPLES {
        return Err(Error::InsufficientSamples {
            needed: MIN_SAMPLES,
            got: samples.len(),
        });
    }
    let n = samples.len();

    let (mut sgg, mut sgt) = (T::zero(), T::zero());
    for s in samples {
        sgg += s.q.gamma1 * s.q.gamma1;
        sgt += s.q.gamma1 * s.theta1;
    }
    if sgg <= T::lit(EXCITATION_TOL) * T::from_usize(n).unwrap() {
        return Err(Error::Unidentifiable { parameter: "k1" });
    }
    let k1 = sgt / sgg;

    let design = DMatrix::from_fn(n, 2, |i, j| {
        let q = &samples[i].q;
        if j == 0 {
            q.gamma2
        } else {
            q.gamma1 * (q.delta1 - q.delta2).cos()
        }
    });
    let rhs = DVector::from_iterator(n, samples.iter().map(|s| s.theta2));
    let scale = T::lit(EXCITATION_TOL) * T::from_usize(n).unwrap();
    if design.column(0).norm_squared() <= scale {
        return Err(Error::Unidentifiable { parameter: "k2" });
    }
    if design.column(1).norm_squared() <= scale {
        return Err(Error::Unidentifiable { parameter: "kc" });
    }
    let svd = design.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smin <= smax * T::lit(1e-9) {
        // the two catheter regressors are collinear; the coupling cannot be separated
        return Err(Error::Unidentifiable { parameter: "kc" });
    }
    let coef = svd
        .solve(&rhs, T::zero())
        .map_err(|e| Error::Precondition(e.to_string()))?;
    let (k2, coupled) = (coef[0], coef[1]);
    let kc = coupled / k1;

    let mut ss1 = T::zero();
    let mut ss2 = T::zero();
    let mut worst = T::zero();
    for s in samples {
        let r1 = k1 * s.q.gamma1 - s.theta1;
        let r2 =
            k2 * s.q.gamma2 + kc * k1 * s.q.gamma1 * (s.q.delta1 - s.q.delta2).cos() - s.theta2;
        ss1 += r1 * r1;
        ss2 += r2 * r2;
        worst = worst.max(r1.abs()).max(r2.abs());
    }
    let nf = T::from_usize(n).unwrap();
    let report = CalibrationReport {
        k1,
        k2,
        kc,
        samples: n,
        rms_theta1: (ss1 / nf).sqrt(),
        rms_theta2: (ss2 / nf).sqrt(),
        max_abs_residual: worst,
    };
    let params = ActuationParams {
        k1,
        k2,
        kc,
        ..*base
    };
    Ok((params, report))
}

/// Length offset `b` from `(beta, measured arc length)` pairs of straight
/// configurations: the mean of `L - beta`.
pub fn fit_length_offset<T: Real>(pairs: &[(T, T)]) -> Result<T> {
    if pairs.is_empty() {
        return Err(Error::InsufficientSamples { needed: 1, got: 0 });
    }
    let sum = pairs
        .iter()
        .fold(T::zero(), |acc, (beta, l)| acc + (*l - *beta));
    Ok(sum / T::from_usize(pairs.len()).unwrap())
}

/// Parses calibration records: one per line,
/// `delta1 beta1 gamma1 delta2 beta2 gamma2 theta1 theta2`
/// separated by whitespace or commas. `#` starts a comment.
pub fn parse_samples(text: &str) -> Result<Vec<CalibrationSample<f64>>> {
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let values = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|e| Error::Parse(format!("line {}: `{t}`: {e}", lineno + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        if values.len() != 8 {
            return Err(Error::Parse(format!(
                "line {}: expected 8 values, found {}",
                lineno + 1,
                values.len()
            )));
        }
        out.push(CalibrationSample {
            q: ActuationQ::new(
                values[0], values[1], values[2], values[3], values[4], values[5],
            ),
            theta1: values[6],
            theta2: values[7],
        });
    }
    Ok(out)
}
