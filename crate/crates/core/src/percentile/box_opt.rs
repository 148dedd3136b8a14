//! Bound-constrained extrema of a smooth function of a few variables.
//!
//! Every point of an evenly spaced seeding lattice (corners included) is
//! evaluated, the best few seeds for each direction are polished by a
//! compass search whose step is halved down to the tolerance, and the best
//! polished point wins. Fully deterministic.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxOptOptions {
    /// Lattice points per dimension, endpoints included.
    pub seeds_per_dim: usize,
    /// Number of best seeds polished for each of the minimum and maximum.
    pub polish_starts: usize,
    /// Final step length, relative to the width of each interval.
    pub tol: f64,
}

impl Default for BoxOptOptions {
    fn default() -> Self {
        BoxOptOptions {
            seeds_per_dim: 32,
            polish_starts: 4,
            tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoxExtrema {
    pub min: f64,
    pub max: f64,
    pub argmin: Vec<f64>,
    pub argmax: Vec<f64>,
}

fn lattice(bounds: &[(f64, f64)], per_dim: usize) -> Vec<Vec<f64>> {
    let axis = |&(lo, hi): &(f64, f64)| -> Vec<f64> {
        if per_dim < 2 || hi == lo {
            return vec![0.5 * (lo + hi)];
        }
        (0..per_dim)
            .map(|i| {
                if i + 1 == per_dim {
                    hi
                } else {
                    lo + (hi - lo) * i as f64 / (per_dim - 1) as f64
                }
            })
            .collect()
    };
    bounds.iter().fold(vec![Vec::new()], |acc, b| {
        let values = axis(b);
        acc.into_iter()
            .flat_map(|prefix| {
                values.iter().map(move |&v| {
                    let mut p = prefix.clone();
                    p.push(v);
                    p
                })
            })
            .collect()
    })
}

// Compass search minimizing `f` from `start`.
fn polish<F: Fn(&[f64]) -> f64>(
    f: &F,
    bounds: &[(f64, f64)],
    start: Vec<f64>,
    initial_step: &[f64],
    tol: f64,
) -> (Vec<f64>, f64) {
    let mut x = start;
    let mut fx = f(&x);
    let mut step = initial_step.to_vec();
    let min_step: Vec<f64> = bounds.iter().map(|(lo, hi)| tol * (hi - lo).max(1e-300)).collect();
    while step.iter().zip(&min_step).any(|(s, m)| s > m) {
        let mut improved = false;
        for d in 0..x.len() {
            for dir in [1.0, -1.0] {
                let mut cand = x.clone();
                cand[d] = (cand[d] + dir * step[d]).clamp(bounds[d].0, bounds[d].1);
                if cand[d] == x[d] {
                    continue;
                }
                let fc = f(&cand);
                if fc < fx {
                    x = cand;
                    fx = fc;
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            for s in &mut step {
                *s *= 0.5;
            }
        }
    }
    (x, fx)
}

fn minimize<F: Fn(&[f64]) -> f64>(
    f: &F,
    bounds: &[(f64, f64)],
    seeds: &[(Vec<f64>, f64)],
    opts: &BoxOptOptions,
) -> (Vec<f64>, f64) {
    let mut order: Vec<usize> = (0..seeds.len()).collect();
    // Stable sort keeps lattice order among ties.
    order.sort_by(|&a, &b| seeds[a].1.total_cmp(&seeds[b].1));
    let step: Vec<f64> = bounds
        .iter()
        .map(|(lo, hi)| (hi - lo) / (opts.seeds_per_dim.max(2) - 1) as f64)
        .collect();
    let mut best = seeds[order[0]].clone();
    for &i in order.iter().take(opts.polish_starts.max(1)) {
        let (x, fx) = polish(f, bounds, seeds[i].0.clone(), &step, opts.tol);
        if fx < best.1 {
            best = (x, fx);
        }
    }
    best
}

/// Minimum and maximum of `f` over the box `bounds`.
pub fn box_optimize<F: Fn(&[f64]) -> f64>(f: F, bounds: &[(f64, f64)], opts: &BoxOptOptions) -> BoxExtrema {
    assert!(!bounds.is_empty(), "box_optimize needs at least one dimension");
    assert!(
        bounds.iter().all(|(lo, hi)| lo <= hi),
        "box bounds must satisfy lo <= hi"
    );
    let seeds: Vec<(Vec<f64>, f64)> = lattice(bounds, opts.seeds_per_dim)
        .into_iter()
        .map(|x| {
            let v = f(&x);
            (x, v)
        })
        .collect();
    let (argmin, min) = minimize(&f, bounds, &seeds, opts);
    let neg = |x: &[f64]| -f(x);
    let neg_seeds: Vec<(Vec<f64>, f64)> = seeds.into_iter().map(|(x, v)| (x, -v)).collect();
    let (argmax, neg_max) = minimize(&neg, bounds, &neg_seeds, opts);
    BoxExtrema {
        min,
        max: -neg_max,
        argmin,
        argmax,
    }
}
