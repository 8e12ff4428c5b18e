//! Bounded Nelder–Mead simplex minimizer.
//!
//! Trial points outside the box are projected onto it, so optima on the
//! boundary of the bias window remain reachable.

/// Termination settings.
#[derive(Debug, Clone, Copy)]
pub struct SimplexOptions {
    /// Edge length of the initial simplex, per coordinate.
    pub initial_step: f64,
    /// Stop when every vertex is within this distance of the best one.
    pub x_tol: f64,
    /// Stop as soon as the best value drops to this level.
    pub f_target: f64,
    pub max_evals: usize,
}

#[derive(Debug, Clone)]
pub struct SimplexOutcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub evaluations: usize,
}

fn project(x: &mut [f64], bounds: &[(f64, f64)]) {
    for (v, &(lo, hi)) in x.iter_mut().zip(bounds) {
        *v = v.clamp(lo, hi);
    }
}

fn sort(simplex: &mut [(Vec<f64>, f64)]) {
    // Stable sort keeps tie-breaking deterministic.
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
}

/// Minimizes `f` from `x0` inside `bounds`.
pub fn nelder_mead<F>(
    mut f: F,
    x0: &[f64],
    bounds: &[(f64, f64)],
    opts: &SimplexOptions,
) -> SimplexOutcome
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    let mut evals = 0;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut start = x0.to_vec();
    project(&mut start, bounds);
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let f0 = eval(&start, &mut evals);
    simplex.push((start.clone(), f0));
    for k in 0..n {
        let mut x = start.clone();
        // Step inward when the start sits on the upper bound.
        let (lo, hi) = bounds[k];
        x[k] += if x[k] + opts.initial_step <= hi {
            opts.initial_step
        } else {
            -opts.initial_step
        };
        x[k] = x[k].clamp(lo, hi);
        let fx = eval(&x, &mut evals);
        simplex.push((x, fx));
    }
    sort(&mut simplex);

    let mut iterations = 0;
    while evals < opts.max_evals {
        let best = simplex[0].1;
        let diameter = simplex[1..]
            .iter()
            .map(|(x, _)| {
                x.iter()
                    .zip(&simplex[0].0)
                    .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
            })
            .fold(0.0f64, f64::max);
        if best <= opts.f_target || diameter <= opts.x_tol {
            break;
        }
        iterations += 1;

        let centroid: Vec<f64> = (0..n)
            .map(|k| simplex[..n].iter().map(|(x, _)| x[k]).sum::<f64>() / n as f64)
            .collect();
        let worst = simplex[n].clone();
        let along = |t: f64| -> Vec<f64> {
            let mut x: Vec<f64> = (0..n)
                .map(|k| centroid[k] + t * (worst.0[k] - centroid[k]))
                .collect();
            project(&mut x, bounds);
            x
        };

        let xr = along(-1.0);
        let fr = eval(&xr, &mut evals);
        if fr < simplex[0].1 {
            let xe = along(-2.0);
            let fe = eval(&xe, &mut evals);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let (xc, fc) = if fr < worst.1 {
                let x = along(-0.5);
                let v = eval(&x, &mut evals);
                (x, v)
            } else {
                let x = along(0.5);
                let v = eval(&x, &mut evals);
                (x, v)
            };
            if fc < fr.min(worst.1) {
                simplex[n] = (xc, fc);
            } else {
                let x_best = simplex[0].0.clone();
                for vertex in simplex.iter_mut().skip(1) {
                    let mut x: Vec<f64> = (0..n)
                        .map(|k| x_best[k] + 0.5 * (vertex.0[k] - x_best[k]))
                        .collect();
                    project(&mut x, bounds);
                    let v = eval(&x, &mut evals);
                    *vertex = (x, v);
                }
            }
        }
        sort(&mut simplex);
    }

    let (x, f) = simplex.swap_remove(0);
    SimplexOutcome {
        x,
        f,
        iterations,
        evaluations: evals,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts() -> SimplexOptions {
        SimplexOptions {
            initial_step: 0.5,
            x_tol: 1e-10,
            f_target: f64::NEG_INFINITY,
            max_evals: 5000,
        }
    }

    #[test]
    fn rosenbrock() {
        let r = nelder_mead(
            |x| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2),
            &[-1.2, 1.0],
            &[(-5.0, 5.0), (-5.0, 5.0)],
            &opts(),
        );
        assert!(
            (r.x[0] - 1.0).abs() < 1e-6 && (r.x[1] - 1.0).abs() < 1e-6,
            "{:?}",
            r.x
        );
    }

    #[test]
    fn cone_minimum() {
        let r = nelder_mead(
            |x| (x[0] - 0.3).hypot(2.0 * (x[1] + 0.7)),
            &[2.0, 2.0],
            &[(-4.0, 5.0), (-4.0, 5.0)],
            &opts(),
        );
        assert!(r.f < 1e-8, "{}", r.f);
    }

    #[test]
    fn minimum_on_the_boundary() {
        let r = nelder_mead(
            |x| x[0] + x[1],
            &[0.0, 0.0],
            &[(-1.0, 1.0), (-2.0, 1.0)],
            &opts(),
        );
        assert!((r.f + 3.0).abs() < 1e-8);
    }

    #[test]
    fn target_stops_early() {
        let mut o = opts();
        o.f_target = 0.5;
        let r = nelder_mead(|x| (x[0] - 0.1).powi(2), &[3.0], &[(-5.0, 5.0)], &o);
        let full = nelder_mead(|x| (x[0] - 0.1).powi(2), &[3.0], &[(-5.0, 5.0)], &opts());
        assert!(r.f <= 0.5);
        assert!(r.evaluations < full.evaluations);
    }
}
