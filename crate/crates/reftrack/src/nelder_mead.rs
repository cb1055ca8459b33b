//! Box-bounded Nelder-Mead simplex search.
//!
//! The penalty objectives here are nonsmooth (max/interval distances
//! through the tube recursion), so a derivative-free local search is used
//! for the low-dimensional hyperparameter problems. Bounds are enforced by
//! projecting every candidate vertex into the box.

#[derive(Debug, Clone)]
pub(crate) struct SimplexOptions {
    /// Stop when the value spread over the simplex falls below
    /// `f_tol * (1 + |f_best|)`.
    pub f_tol: f64,
    pub max_evals: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct SimplexResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub evals: usize,
    /// Best objective value after each accepted iteration; non-increasing.
    pub best_history: Vec<f64>,
}

const ALPHA: f64 = 1.0; // reflection
const GAMMA: f64 = 2.0; // expansion
const BETA: f64 = 0.5; // contraction
const DELTA: f64 = 0.5; // shrink

fn clamp_into(x: &mut [f64], bounds: &[(f64, f64)]) {
    for (v, (lo, hi)) in x.iter_mut().zip(bounds) {
        *v = v.clamp(*lo, *hi);
    }
}

pub(crate) fn minimize(
    f: &mut dyn FnMut(&[f64]) -> f64,
    x0: &[f64],
    bounds: &[(f64, f64)],
    opts: &SimplexOptions,
) -> SimplexResult {
    let n = x0.len();
    assert_eq!(bounds.len(), n, "bounds/dimension mismatch");
    let mut evals = 0;
    let mut call = |x: &[f64], evals: &mut usize| -> f64 {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    // Initial simplex: x0 plus one perturbed vertex per coordinate, flipped
    // when the step would leave the box.
    let mut start = x0.to_vec();
    clamp_into(&mut start, bounds);
    let mut vertices = vec![start.clone()];
    for i in 0..n {
        let (lo, hi) = bounds[i];
        let step = (0.25 * (hi - lo)).min(0.5).max(1e-6);
        let mut v = start.clone();
        v[i] = if v[i] + step <= hi { v[i] + step } else { v[i] - step };
        vertices.push(v);
    }
    let mut values: Vec<f64> = vertices.iter().map(|v| call(v, &mut evals)).collect();
    let mut history = Vec::new();

    loop {
        // Sort vertices by value (stable order keeps ties deterministic).
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
        let best = order[0];
        let worst = order[n];
        let second_worst = order[n.saturating_sub(1).max(0)];
        history.push(values[best]);

        let spread = values[worst] - values[best];
        if spread.is_finite() && spread <= opts.f_tol * (1.0 + values[best].abs()) {
            break;
        }
        if evals >= opts.max_evals {
            break;
        }
        if !values[best].is_finite() && evals > 4 * (n + 1) {
            break; // hopeless region, every vertex is infinite
        }

        // Centroid of all vertices except the worst.
        let mut centroid = vec![0.0; n];
        for &i in order.iter().take(n) {
            for (c, v) in centroid.iter_mut().zip(&vertices[i]) {
                *c += v;
            }
        }
        for c in centroid.iter_mut() {
            *c /= n as f64;
        }

        let move_from_worst = |coef: f64| -> Vec<f64> {
            let mut x: Vec<f64> = centroid
                .iter()
                .zip(&vertices[worst])
                .map(|(c, w)| c + coef * (c - w))
                .collect();
            clamp_into(&mut x, bounds);
            x
        };

        let reflected = move_from_worst(ALPHA);
        let f_reflected = call(&reflected, &mut evals);

        if f_reflected < values[best] {
            let expanded = move_from_worst(GAMMA);
            let f_expanded = call(&expanded, &mut evals);
            if f_expanded < f_reflected {
                vertices[worst] = expanded;
                values[worst] = f_expanded;
            } else {
                vertices[worst] = reflected;
                values[worst] = f_reflected;
            }
        } else if f_reflected < values[second_worst] {
            vertices[worst] = reflected;
            values[worst] = f_reflected;
        } else {
            let (contracted, f_contracted) = if f_reflected < values[worst] {
                let x = move_from_worst(BETA); // outside contraction
                let v = call(&x, &mut evals);
                (x, v)
            } else {
                let x = move_from_worst(-BETA); // inside contraction
                let v = call(&x, &mut evals);
                (x, v)
            };
            if f_contracted < values[worst].min(f_reflected) {
                vertices[worst] = contracted;
                values[worst] = f_contracted;
            } else {
                // Shrink everything toward the best vertex.
                let anchor = vertices[best].clone();
                for i in 0..=n {
                    if i == best {
                        continue;
                    }
                    for (v, a) in vertices[i].iter_mut().zip(&anchor) {
                        *v = a + DELTA * (*v - a);
                    }
                    clamp_into(&mut vertices[i], bounds);
                    values[i] = call(&vertices[i], &mut evals);
                }
            }
        }
    }

    let best = (0..=n)
        .min_by(|&i, &j| values[i].total_cmp(&values[j]))
        .expect("nonempty simplex");
    history.push(values[best]);
    SimplexResult { x: vertices[best].clone(), f: values[best], evals, best_history: history }
}
