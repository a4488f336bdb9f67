//! Nelder-Mead simplex minimization: reflection, expansion, contraction and
//! shrink steps with the standard coefficients. Derivative-free and
//! inherently sequential.

use crate::error::{Error, Result};

/// Outcome of a simplex run.
#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadResult {
    pub x_best: Vec<f64>,
    pub f_best: f64,
    pub evaluations: usize,
}

const REFLECTION: f64 = 1.0;
const EXPANSION: f64 = 2.0;
const CONTRACTION: f64 = 0.5;
const SHRINK: f64 = 0.5;

/// Minimize `objective` from `x0`, stopping when the simplex spread (in
/// values or vertices) drops below `tolerance` or when `max_evals`
/// evaluations have been spent. Returns the best vertex found.
pub fn nelder_mead(
    mut objective: impl FnMut(&[f64]) -> f64,
    x0: &[f64],
    tolerance: f64,
    max_evals: usize,
) -> Result<NelderMeadResult> {
    if x0.is_empty() {
        return Err(Error::EmptyInput("nelder_mead needs a non-empty start".into()));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("nelder_mead start point must be finite"));
    }
    if tolerance <= 0.0 || max_evals == 0 {
        return Err(Error::invalid("tolerance and max_evals must be positive"));
    }

    let dim = x0.len();
    let mut evaluations = 0usize;
    let mut eval = |x: &[f64], n: &mut usize| -> f64 {
        *n += 1;
        objective(x)
    };

    let f0 = eval(x0, &mut evaluations);
    if !f0.is_finite() {
        return Err(Error::invalid(format!(
            "objective is not finite at the start point ({f0})"
        )));
    }

    // initial simplex: x0 plus one perturbed vertex per dimension
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(dim + 1);
    simplex.push((x0.to_vec(), f0));
    for i in 0..dim {
        let mut v = x0.to_vec();
        v[i] = if v[i] != 0.0 { v[i] * 1.05 } else { 0.00025 };
        let f = eval(&v, &mut evaluations);
        simplex.push((v, f));
    }

    loop {
        // best first; stable sort keeps earlier vertices on ties
        simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));

        if spread_converged(&simplex, tolerance) || evaluations >= max_evals {
            let (x_best, f_best) = simplex[0].clone();
            return Ok(NelderMeadResult {
                x_best,
                f_best,
                evaluations,
            });
        }

        let centroid: Vec<f64> = (0..dim)
            .map(|i| simplex[..dim].iter().map(|(v, _)| v[i]).sum::<f64>() / dim as f64)
            .collect();
        let worst = simplex[dim].clone();

        let reflected = affine(&centroid, &worst.0, REFLECTION);
        let f_reflected = eval(&reflected, &mut evaluations);

        if f_reflected < simplex[0].1 {
            // try to expand past the reflection
            let expanded = affine(&centroid, &worst.0, EXPANSION);
            let f_expanded = eval(&expanded, &mut evaluations);
            simplex[dim] = if f_expanded < f_reflected {
                (expanded, f_expanded)
            } else {
                (reflected, f_reflected)
            };
            continue;
        }
        if f_reflected < simplex[dim - 1].1 {
            simplex[dim] = (reflected, f_reflected);
            continue;
        }

        // contract toward the centroid, outside or inside
        let (candidate, f_candidate) = if f_reflected < worst.1 {
            let outside = affine(&centroid, &reflected, -CONTRACTION);
            let f = eval(&outside, &mut evaluations);
            (outside, f)
        } else {
            let inside = affine(&centroid, &worst.0, -CONTRACTION);
            let f = eval(&inside, &mut evaluations);
            (inside, f)
        };
        if f_candidate < worst.1.min(f_reflected) {
            simplex[dim] = (candidate, f_candidate);
            continue;
        }

        // shrink everything toward the best vertex
        let best = simplex[0].0.clone();
        for vertex in simplex.iter_mut().skip(1) {
            for (vi, bi) in vertex.0.iter_mut().zip(&best) {
                *vi = bi + SHRINK * (*vi - bi);
            }
            vertex.1 = eval(&vertex.0, &mut evaluations);
        }
    }
}

/// centroid + coeff * (centroid - point)
fn affine(centroid: &[f64], point: &[f64], coeff: f64) -> Vec<f64> {
    centroid
        .iter()
        .zip(point)
        .map(|(c, p)| c + coeff * (c - p))
        .collect()
}

fn spread_converged(simplex: &[(Vec<f64>, f64)], tolerance: f64) -> bool {
    let f_best = simplex[0].1;
    let f_spread = simplex
        .iter()
        .map(|(_, f)| (f - f_best).abs())
        .fold(0.0, f64::max);
    if f_spread < tolerance {
        return true;
    }
    let x_best = &simplex[0].0;
    let x_spread = simplex
        .iter()
        .flat_map(|(v, _)| v.iter().zip(x_best).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max);
    x_spread < tolerance
}
