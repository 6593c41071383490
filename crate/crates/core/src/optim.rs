//! Derivative-free Nelder–Mead minimizer.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NelderMeadSettings {
    /// Offset of the initial simplex vertices along each axis.
    pub initial_step: f64,
    /// Converged once every vertex lies within this distance of the best.
    pub tolerance: f64,
    pub max_evals: usize,
    /// Number of times the simplex is rebuilt around the incumbent after
    /// convergence (0 disables restarts).
    pub restarts: usize,
}

impl Default for NelderMeadSettings {
    fn default() -> Self {
        Self { initial_step: 0.1, tolerance: 1e-4, max_evals: 600, restarts: 2 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub evals: usize,
    pub converged: bool,
}

fn diameter(simplex: &[(Vec<f64>, f64)]) -> f64 {
    let best = &simplex[0].0;
    simplex[1..]
        .iter()
        .map(|(v, _)| v.iter().zip(best).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
}

fn sort(simplex: &mut [(Vec<f64>, f64)]) {
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
}

/// Minimizes `f` from `x0` with the standard coefficients (reflection 1,
/// expansion 2, contraction ½, shrink ½). The start point is the first
/// evaluation, so the returned value never exceeds `f(x0)`.
pub fn nelder_mead(
    mut f: impl FnMut(&[f64]) -> f64,
    x0: &[f64],
    settings: &NelderMeadSettings,
) -> NelderMeadOutcome {
    let n = x0.len();
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut best = (x0.to_vec(), eval(x0, &mut evals));
    let mut converged = false;
    let mut round = 0;
    while round <= settings.restarts && evals < settings.max_evals {
        round += 1;
        let mut simplex = vec![best.clone()];
        for i in 0..n {
            if evals >= settings.max_evals {
                break;
            }
            let mut v = best.0.clone();
            v[i] += settings.initial_step;
            let fv = eval(&v, &mut evals);
            simplex.push((v, fv));
        }
        if simplex.len() < n + 1 {
            break;
        }
        sort(&mut simplex);
        converged = false;
        while evals < settings.max_evals {
            if diameter(&simplex) < settings.tolerance {
                converged = true;
                break;
            }
            let worst = simplex[n].clone();
            let centroid: Vec<f64> = (0..n)
                .map(|j| simplex[..n].iter().map(|(v, _)| v[j]).sum::<f64>() / n as f64)
                .collect();
            let along = |t: f64| -> Vec<f64> {
                centroid.iter().zip(&worst.0).map(|(c, w)| c + t * (c - w)).collect()
            };
            let xr = along(1.0);
            let fr = eval(&xr, &mut evals);
            if fr < simplex[0].1 {
                let xe = along(2.0);
                let fe = eval(&xe, &mut evals);
                simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            } else if fr < simplex[n - 1].1 {
                simplex[n] = (xr, fr);
            } else {
                let (xc, fc) = if fr < worst.1 {
                    let xc = along(0.5);
                    let fc = eval(&xc, &mut evals);
                    (xc, fc)
                } else {
                    let xc = along(-0.5);
                    let fc = eval(&xc, &mut evals);
                    (xc, fc)
                };
                if fc < worst.1.min(fr) {
                    simplex[n] = (xc, fc);
                } else {
                    let x_best = simplex[0].0.clone();
                    for vertex in simplex.iter_mut().skip(1) {
                        if evals >= settings.max_evals {
                            break;
                        }
                        let v: Vec<f64> =
                            x_best.iter().zip(&vertex.0).map(|(b, x)| b + 0.5 * (x - b)).collect();
                        let fv = eval(&v, &mut evals);
                        *vertex = (v, fv);
                    }
                }
            }
            sort(&mut simplex);
        }
        if simplex[0].1 <= best.1 {
            let improved = simplex[0].1 < best.1;
            best = simplex[0].clone();
            if !improved && converged {
                break;
            }
        }
    }
    NelderMeadOutcome { x: best.0, value: best.1, evals, converged }
}
