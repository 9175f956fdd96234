//! Damped least-squares (Levenberg–Marquardt) fit of the general sigmoid to
//! `(integral, gray)` samples.

use alloc::format;

use super::{sigmoid, SigmoidParams};
use crate::error::{Error, Result};

pub const MIN_FIT_SAMPLES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub initial_lambda: f64,
    pub lambda_factor: f64,
    pub max_iterations: usize,
    /// Stop once the relative cost decrease of an accepted step falls below this.
    pub rel_tolerance: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            initial_lambda: 1e-3,
            lambda_factor: 10.0,
            max_iterations: 200,
            rel_tolerance: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmoidFit {
    pub params: SigmoidParams,
    /// Root-mean-square residual in gray levels.
    pub rms_residual: f64,
    pub iterations: usize,
    /// False when the iteration cap was hit; `params` is then the best
    /// estimate seen.
    pub converged: bool,
}

/// Fit with the default starting point: `c1` = darkest sample, `c2` = 255 −
/// brightest sample, `t` = median integral, `s` = 1.
pub fn fit_sigmoid(samples: &[(f64, f64)]) -> Result<SigmoidFit> {
    validate_samples(samples)?;
    let mut xs: alloc::vec::Vec<f64> = samples.iter().map(|s| s.0).collect();
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    let median = if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    };
    let lo = samples.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
    let hi = samples
        .iter()
        .map(|s| s.1)
        .fold(f64::NEG_INFINITY, f64::max);
    let init = SigmoidParams {
        c1: lo,
        c2: 255.0 - hi,
        t: median,
        s: 1.0,
    };
    fit_sigmoid_from(samples, init, &FitOptions::default())
}

pub fn fit_sigmoid_from(
    samples: &[(f64, f64)],
    init: SigmoidParams,
    opts: &FitOptions,
) -> Result<SigmoidFit> {
    validate_samples(samples)?;
    let mut p = to_vec(&init);
    let mut cost = cost(samples, &p);
    let mut lambda = opts.initial_lambda;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iterations {
        iterations += 1;
        if cost <= f64::MIN_POSITIVE {
            converged = true;
            break;
        }
        let (jtj, jtr) = normal_equations(samples, &p);
        let mut a = jtj;
        for i in 0..4 {
            let d = jtj[i][i];
            a[i][i] += lambda * if d > 0.0 { d } else { 1.0 };
        }
        let step = solve4(a, jtr.map(|g| -g));
        let trial = step.map(|d| core::array::from_fn(|i| p[i] + d[i]));
        match trial.map(|t| (t, self::cost(samples, &t))) {
            Some((t, c)) if c < cost => {
                let rel = (cost - c) / cost;
                p = t;
                cost = c;
                lambda /= opts.lambda_factor;
                if rel < opts.rel_tolerance {
                    converged = true;
                    break;
                }
            }
            _ => {
                lambda *= opts.lambda_factor;
                if lambda > 1e20 {
                    // no descent direction left at machine precision
                    converged = true;
                    break;
                }
            }
        }
    }

    Ok(SigmoidFit {
        params: from_vec(&p),
        rms_residual: libm::sqrt(cost / samples.len() as f64),
        iterations,
        converged,
    })
}

fn validate_samples(samples: &[(f64, f64)]) -> Result<()> {
    if samples.len() < MIN_FIT_SAMPLES {
        return Err(Error::TooFewSamples {
            needed: MIN_FIT_SAMPLES,
            got: samples.len(),
        });
    }
    for &(x, y) in samples {
        if !(x >= 0.0 && x.is_finite()) || !(0.0..=255.0).contains(&y) {
            return Err(Error::Parameter(format!(
                "fit sample ({x}, {y}): integrals must be >= 0 and grays within [0, 255]"
            )));
        }
    }
    Ok(())
}

fn to_vec(p: &SigmoidParams) -> [f64; 4] {
    [p.c1, p.c2, p.t, p.s]
}

fn from_vec(p: &[f64; 4]) -> SigmoidParams {
    SigmoidParams {
        c1: p[0],
        c2: p[1],
        t: p[2],
        s: p[3],
    }
}

fn model(p: &[f64; 4], x: f64) -> f64 {
    from_vec(p).eval(x)
}

fn cost(samples: &[(f64, f64)], p: &[f64; 4]) -> f64 {
    samples
        .iter()
        .map(|&(x, y)| {
            let r = model(p, x) - y;
            r * r
        })
        .sum()
}

/// `JᵀJ` and `Jᵀr` for residuals `r = model − y`.
fn normal_equations(samples: &[(f64, f64)], p: &[f64; 4]) -> ([[f64; 4]; 4], [f64; 4]) {
    let [c1, c2, t, s] = *p;
    let span = 255.0 - c1 - c2;
    let mut jtj = [[0.0; 4]; 4];
    let mut jtr = [0.0; 4];
    for &(x, y) in samples {
        let sg = sigmoid(s * (x - t));
        let dsg = sg * (1.0 - sg);
        let j = [1.0 - sg, -sg, -span * dsg * s, span * dsg * (x - t)];
        let r = c1 + span * sg - y;
        for a in 0..4 {
            jtr[a] += j[a] * r;
            for b in 0..4 {
                jtj[a][b] += j[a] * j[b];
            }
        }
    }
    (jtj, jtr)
}

/// Gaussian elimination with partial pivoting; `None` when singular.
fn solve4(mut a: [[f64; 4]; 4], mut b: [f64; 4]) -> Option<[f64; 4]> {
    for col in 0..4 {
        let pivot = (col..4).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if !(a[pivot][col].abs() > 1e-300) {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..4 {
            let f = a[row][col] / a[col][col];
            let pivot_row = a[col];
            for (x, p) in a[row][col..].iter_mut().zip(&pivot_row[col..]) {
                *x -= f * p;
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 4];
    for row in (0..4).rev() {
        let tail: f64 = (row + 1..4).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - tail) / a[row][row];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const XS: [f64; 7] = [0.0, 1.0, 2.0, 2.6, 3.0, 4.0, 6.0];

    fn exact_samples(p: &SigmoidParams) -> Vec<(f64, f64)> {
        XS.iter().map(|&x| (x, p.eval(x))).collect()
    }

    fn assert_close(a: &SigmoidParams, b: &SigmoidParams, tol: f64) {
        for (x, y) in to_vec(a).iter().zip(to_vec(b).iter()) {
            assert!((x - y).abs() < tol, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn recovers_generating_params() {
        let truth = SigmoidParams::default();
        let fit = fit_sigmoid(&exact_samples(&truth)).unwrap();
        assert!(fit.converged);
        assert_close(&fit.params, &truth, 1e-3);
        assert!(fit.rms_residual < 1e-6);
    }

    #[test]
    fn recovers_from_random_starts() {
        let truth = SigmoidParams::default();
        let samples = exact_samples(&truth);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let init = SigmoidParams {
                c1: rng.random_range(20.0..60.0),
                c2: rng.random_range(0.0..15.0),
                t: rng.random_range(1.5..3.5),
                s: rng.random_range(0.7..2.5),
            };
            let fit = fit_sigmoid_from(&samples, init, &FitOptions::default()).unwrap();
            assert_close(&fit.params, &truth, 1e-3);
        }
    }

    #[test]
    fn noisy_samples_hit_noise_floor() {
        let truth = SigmoidParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let samples: Vec<(f64, f64)> = (0..40)
            .map(|i| {
                let x = i as f64 * 0.15;
                (
                    x,
                    (truth.eval(x) + rng.random_range(-2.0..=2.0)).clamp(0.0, 255.0),
                )
            })
            .collect();
        let fit = fit_sigmoid(&samples).unwrap();
        assert!(fit.rms_residual <= 2.5, "rms {}", fit.rms_residual);
    }

    #[test]
    fn too_few_samples() {
        let s = [(0.0, 40.0), (1.0, 50.0), (2.0, 100.0)];
        assert_eq!(
            fit_sigmoid(&s),
            Err(Error::TooFewSamples { needed: 4, got: 3 })
        );
    }

    #[test]
    fn rejects_out_of_range_samples() {
        let s = [(0.0, 40.0), (1.0, 50.0), (2.0, 100.0), (-1.0, 20.0)];
        assert!(fit_sigmoid(&s).is_err());
        let s = [(0.0, 40.0), (1.0, 50.0), (2.0, 100.0), (1.0, 256.0)];
        assert!(fit_sigmoid(&s).is_err());
    }

    #[test]
    fn solver_matches_known_system() {
        let a = [
            [4.0, 1.0, 0.0, 0.0],
            [1.0, 3.0, 1.0, 0.0],
            [0.0, 1.0, 2.0, 1.0],
            [0.0, 0.0, 1.0, 5.0],
        ];
        let x = [1.0, -2.0, 3.0, 0.5];
        let b = core::array::from_fn(|i| (0..4).map(|k| a[i][k] * x[k]).sum());
        let got = solve4(a, b).unwrap();
        for i in 0..4 {
            assert!((got[i] - x[i]).abs() < 1e-12);
        }
        assert!(solve4([[0.0; 4]; 4], [1.0; 4]).is_none());
    }
}
