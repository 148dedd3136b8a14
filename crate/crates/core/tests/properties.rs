//! Algebraic and numerical properties of the link families, the likelihood
//! and the constrained fits.

use multilink::datasets::gennings1994;
use multilink::fitting::{fit, loglik, score, score_and_info, spd_inverse};
use multilink::model::{mu_and_jacobian, scaled_multinomial_logpmf};
use multilink::percentile::{constrained_fit, constrained_statistics, solve_percentile};
use multilink::prelude::*;
use nalgebra::DVector;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn spec() -> ModelSpec {
    ModelSpec::first_order(2, 2)
}

fn czado_link(standardization: Standardization, alpha: &[f64]) -> MultinomialLink {
    MultinomialLink::new(
        vec![
            GeneratingFamily::czado([true, true]),
            GeneratingFamily::czado([true, true]),
        ],
        standardization,
    )
    .with_alpha(alpha)
    .unwrap()
}

fn alpha_grid() -> Vec<[f64; 4]> {
    let values = [0.2, 0.5, 1.0, 1.5, 2.0];
    let mut out = Vec::new();
    for &a in &values {
        for &b in &values {
            out.push([a, b, b, a]);
            out.push([a, 1.0, b, 0.7]);
        }
    }
    out
}

fn eta_grid() -> Vec<[f64; 2]> {
    let axis: Vec<f64> = (0..13).map(|i| -3.0 + 0.5 * i as f64).collect();
    axis.iter().flat_map(|&a| axis.iter().map(move |&b| [a, b])).collect()
}

fn intercepts_fit() -> FitResult {
    let link = MultinomialLink::new(
        vec![
            GeneratingFamily::czado([true, true]),
            GeneratingFamily::czado([false, false]),
        ],
        Standardization::AtIntercepts,
    );
    fit(&gennings1994(), &spec(), &link, &FitOptions::default())
        .unwrap()
        .require_converged()
        .unwrap()
}

/// Jacobian of `f: R^2 -> R^2` by central differences.
fn jacobian_fd(f: impl Fn(&[f64]) -> Vec<f64>, at: &[f64]) -> [[f64; 2]; 2] {
    let h = 1e-6;
    let mut out = [[0.0; 2]; 2];
    for c in 0..2 {
        let mut up = at.to_vec();
        let mut down = at.to_vec();
        up[c] += h;
        down[c] -= h;
        let (fu, fd) = (f(&up), f(&down));
        for r in 0..2 {
            out[r][c] = (fu[r] - fd[r]) / (2.0 * h);
        }
    }
    out
}

#[test]
fn score_matches_finite_difference_gradient() {
    let data = gennings1994();
    let base = fit(&data, &spec(), &MultinomialLink::logit(2), &FitOptions::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    for point in 0..20 {
        let standardization = if point % 2 == 0 {
            Standardization::AtZero
        } else {
            Standardization::AtIntercepts
        };
        let alpha: Vec<f64> = (0..4).map(|_| rng.gen_range(0.3..1.8)).collect();
        let link = czado_link(standardization, &alpha);
        let beta: Vec<f64> = base.delta.beta.iter().map(|b| b * rng.gen_range(0.5..1.2)).collect();
        let delta = ParameterVector::new(beta, alpha);
        let analytic = score(&data, &spec(), &link, &delta).unwrap();
        let values = delta.to_vec();
        for i in 0..values.len() {
            let h = 1e-5 * values[i].abs().max(1.0);
            let at = |shift: f64| {
                let mut v = values.clone();
                v[i] += shift;
                loglik(&data, &spec(), &link, &ParameterVector::from_slice(&v, 6)).unwrap()
            };
            let fd = (at(h) - at(-h)) / (2.0 * h);
            let err = (analytic[i] - fd).abs() / analytic[i].abs().max(1.0);
            assert!(err < 1e-5, "point {point}, component {i}: {} vs {fd}", analytic[i]);
        }
    }
}

#[test]
fn score_and_information_match_mean_scale_formulas() {
    // sum n (dmu)' V^-1 (ybar - mu) and sum n (dmu)' V^-1 dmu.
    let data = gennings1994();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for standardization in [Standardization::AtZero, Standardization::AtIntercepts] {
        let alpha: Vec<f64> = (0..4).map(|_| rng.gen_range(0.4..1.6)).collect();
        let link = czado_link(standardization, &alpha);
        let beta: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..4.0)).collect();
        let delta = ParameterVector::new(beta, alpha);
        let (s, info) = score_and_info(&data, &spec(), &link, &delta).unwrap();
        let mut s_ref = DVector::zeros(s.len());
        let mut info_ref = info.clone() * 0.0;
        for obs in data.observations() {
            let (mu, dmu) = mu_and_jacobian(&spec(), &link, &delta, &obs.x);
            let v = multilink::link::multinomial_covariance(&mu);
            let v_inv = v.try_inverse().unwrap();
            let n = obs.n as f64;
            let resid = DVector::from_iterator(2, obs.y.iter().zip(&mu).map(|(&y, m)| y as f64 / n - m));
            s_ref += dmu.transpose() * &v_inv * resid * n;
            info_ref += dmu.transpose() * &v_inv * &dmu * n;
        }
        assert!((&s - &s_ref).amax() < 1e-8 * s_ref.amax().max(1.0));
        assert!((&info - &info_ref).amax() < 1e-8 * info_ref.amax().max(1.0));
    }
}

#[test]
fn pmf_sums_to_one_over_outcome_lattice() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for n in 0..=6u32 {
        for _ in 0..5 {
            let a: f64 = rng.gen_range(0.05..0.6);
            let b: f64 = rng.gen_range(0.05..(0.95 - a));
            let mut total = 0.0;
            for y1 in 0..=n {
                for y2 in 0..=(n - y1) {
                    total += scaled_multinomial_logpmf(&[y1, y2], n, &[a, b]).exp();
                }
            }
            assert!((total - 1.0).abs() < 1e-12, "n = {n}: {total}");
        }
    }
}

#[test]
fn intercept_standardization_conditions_hold() {
    let beta0 = [0.8, -1.3];
    for alpha in alpha_grid() {
        let link = czado_link(Standardization::AtIntercepts, &alpha);
        // Fixed point at the intercepts, exactly.
        assert_eq!(
            link.apply_standardization(&beta0, &beta0),
            beta0.to_vec(),
            "alpha {alpha:?}"
        );
        let d = jacobian_fd(|eta| link.apply_standardization(eta, &beta0), &beta0);
        for r in 0..2 {
            for c in 0..2 {
                let expected = if r == c { 1.0 } else { 0.0 };
                assert!((d[r][c] - expected).abs() < 1e-6, "alpha {alpha:?}: {d:?}");
            }
        }
    }
}

#[test]
fn zero_standardized_families_stack() {
    for alpha in alpha_grid() {
        let link = czado_link(Standardization::AtZero, &alpha);
        assert_eq!(link.apply_standardization(&[0.0, 0.0], &[0.0, 0.0]), vec![0.0, 0.0]);
        let d = jacobian_fd(|eta| link.apply_standardization(eta, &[0.0, 0.0]), &[0.0, 0.0]);
        for r in 0..2 {
            for c in 0..2 {
                let expected = if r == c { 1.0 } else { 0.0 };
                assert!((d[r][c] - expected).abs() < 1e-6, "alpha {alpha:?}: {d:?}");
            }
        }
    }
}

#[test]
fn shifted_family_is_not_standardized() {
    let beta0 = [0.4, -0.2];
    let a = [0.5, -0.3];
    let b = [2.0, 0.5];
    let eta_star = [(beta0[0] - a[0]) / b[0], (beta0[1] - a[1]) / b[1]];
    let mut values_at_beta0 = Vec::new();
    for alpha in alpha_grid() {
        let link = czado_link(Standardization::AtIntercepts, &alpha);
        let shifted = |eta: &[f64]| link.apply_standardization(&[a[0] + b[0] * eta[0], a[1] + b[1] * eta[1]], &beta0);
        // The fixed point moves to eta_star for every alpha...
        let at_star = shifted(&eta_star);
        assert!((at_star[0] - beta0[0]).abs() < 1e-14 && (at_star[1] - beta0[1]).abs() < 1e-14);
        // ...but the slope there is b, not the identity. Central differences
        // straddle the kink of G at zero, hence the looser tolerance.
        let d = jacobian_fd(shifted, &eta_star);
        assert!(
            (d[0][0] / b[0] - 1.0).abs() < 1e-5 && (d[1][1] / b[1] - 1.0).abs() < 1e-5,
            "{d:?}"
        );
        assert!(d[0][1].abs() < 1e-9 && d[1][0].abs() < 1e-9);
        values_at_beta0.push(shifted(&beta0));
    }
    // At the original point the shifted family depends on alpha.
    let first = &values_at_beta0[0];
    assert!(values_at_beta0.iter().any(|v| (v[0] - first[0]).abs() > 1e-3));
}

#[test]
fn probabilities_at_intercepts_follow_intercept_logits() {
    for alpha in alpha_grid() {
        let link = czado_link(Standardization::AtIntercepts, &alpha);
        for beta0 in [[0.0, 0.0], [1.2, -0.7], [-2.5, 0.3]] {
            let pi = link.h(&beta0, &beta0);
            let denom = 1.0 + beta0[0].exp() + beta0[1].exp();
            for j in 0..2 {
                assert!((pi[j] - beta0[j].exp() / denom).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn inverse_link_round_trips_on_grid() {
    let beta0 = [0.6, -0.9];
    for standardization in [Standardization::AtZero, Standardization::AtIntercepts] {
        for alpha in alpha_grid() {
            let link = czado_link(standardization, &alpha);
            for eta in eta_grid() {
                let pi = link.h(&eta, &beta0);
                let back = link.g(&pi, &beta0).unwrap();
                for j in 0..2 {
                    assert!(
                        (back[j] - eta[j]).abs() < 1e-10,
                        "{standardization:?} {alpha:?} {eta:?}: {back:?}"
                    );
                }
            }
        }
    }
}

proptest! {
    #[test]
    fn inverse_link_round_trips(
        a in prop::array::uniform4(0.2f64..2.0),
        eta in prop::array::uniform2(-3.0f64..3.0),
        beta0 in prop::array::uniform2(-2.0f64..2.0),
        at_intercepts in any::<bool>(),
    ) {
        let standardization = if at_intercepts { Standardization::AtIntercepts } else { Standardization::AtZero };
        let link = czado_link(standardization, &a);
        let back = link.g(&link.h(&eta, &beta0), &beta0).unwrap();
        for j in 0..2 {
            prop_assert!((back[j] - eta[j]).abs() < 1e-10);
        }
    }
}

#[test]
fn unit_link_parameters_give_multicategory_logit() {
    let logit = |eta: &[f64]| {
        let denom = 1.0 + eta[0].exp() + eta[1].exp();
        [eta[0].exp() / denom, eta[1].exp() / denom]
    };
    for standardization in [Standardization::AtZero, Standardization::AtIntercepts] {
        let link = czado_link(standardization, &[1.0; 4]);
        for eta in eta_grid() {
            let pi = link.h(&eta, &[0.3, -1.1]);
            let expected = logit(&eta);
            for j in 0..2 {
                assert!((pi[j] - expected[j]).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn constrained_loglik_never_exceeds_unconstrained() {
    let data = gennings1994();
    let f = intercepts_fit();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..10 {
        let x = [rng.gen_range(-1.0..1.0), rng.gen_range(-0.7132..1.2868)];
        let c = constrained_fit(&data, &spec(), &f, &x, &[0.75, 0.2], None, &FitOptions::default()).unwrap();
        assert!(c.loglik <= f.loglik + 1e-9, "x {x:?}: {} > {}", c.loglik, f.loglik);
        // The constraint holds at the returned parameters.
        let pi = multilink::model::mu_and_jacobian(&spec(), &c.link, &c.delta, &x).0;
        assert!((pi[0] - 0.75).abs() < 1e-9 && (pi[1] - 0.2).abs() < 1e-9, "{pi:?}");
    }
}

#[test]
fn score_statistic_is_full_score_quadratic_form() {
    let data = gennings1994();
    let f = intercepts_fit();
    for x in [[-0.8, 0.3], [-0.5, 0.0], [-0.3, 0.4]] {
        let c = constrained_fit(&data, &spec(), &f, &x, &[0.75, 0.2], None, &FitOptions::default())
            .unwrap()
            .require_converged()
            .unwrap();
        let (u, j) = score_and_info(&data, &spec(), &c.link, &c.delta).unwrap();
        let full = u.dot(&(spd_inverse(&j).unwrap() * &u));
        let stats = constrained_statistics(&data, &spec(), &f, &x, &[0.75, 0.2], None, &FitOptions::default()).unwrap();
        assert!(
            (stats.score - full).abs() < 1e-6 * full.max(1.0),
            "x {x:?}: {} vs {full}",
            stats.score
        );
        assert!(stats.score >= 0.0 && stats.lr >= 0.0);
    }
}

#[test]
fn statistics_invariant_under_covariate_rescaling() {
    let data = gennings1994();
    let scaled = data.rescale_covariate(1, 2.0);
    let link = MultinomialLink::new(
        vec![
            GeneratingFamily::czado([true, true]),
            GeneratingFamily::czado([false, false]),
        ],
        Standardization::AtIntercepts,
    );
    let opts = FitOptions::default();
    let f = fit(&data, &spec(), &link, &opts).unwrap();
    let g = fit(&scaled, &spec(), &link, &opts).unwrap();
    assert!((f.deviance - g.deviance).abs() < 1e-8);
    for (i, j) in [(2, 2), (5, 5)] {
        assert!((g.delta.beta[j] - f.delta.beta[i] / 2.0).abs() < 1e-6);
    }
    for x in [[-0.8, 0.3], [-0.5, 0.0], [0.2, -0.4]] {
        let a = constrained_statistics(&data, &spec(), &f, &x, &[0.75, 0.2], None, &opts).unwrap();
        let b = constrained_statistics(&scaled, &spec(), &g, &[x[0], 2.0 * x[1]], &[0.75, 0.2], None, &opts).unwrap();
        assert!((a.lr - b.lr).abs() < 1e-6, "x {x:?}: {} vs {}", a.lr, b.lr);
        assert!((a.score - b.score).abs() < 1e-6, "x {x:?}: {} vs {}", a.score, b.score);
    }
}

#[test]
fn fit_ignores_row_order() {
    let data = gennings1994();
    let mut rows = data.observations().to_vec();
    rows.reverse();
    let reversed = Dataset::new(rows).unwrap();
    let f = intercepts_fit();
    let link = f.link.clone();
    let g = fit(&reversed, &spec(), &link, &FitOptions::default()).unwrap();
    assert!((f.deviance - g.deviance).abs() < 1e-9);
    for (a, b) in f.delta.to_vec().iter().zip(g.delta.to_vec()) {
        assert!((a - b).abs() < 1e-6);
    }
}

#[test]
fn percentile_moves_continuously_with_target() {
    let f = intercepts_fit();
    let x0 = solve_percentile(&f, &spec(), &[0.75, 0.2]).unwrap().x;
    let mut previous = f64::INFINITY;
    for eps in [1e-2, 1e-3, 1e-4] {
        let x = solve_percentile(&f, &spec(), &[0.75 + eps, 0.2 - eps]).unwrap().x;
        let moved = ((x[0] - x0[0]).powi(2) + (x[1] - x0[1]).powi(2)).sqrt();
        assert!(moved < previous / 5.0, "eps {eps}: moved {moved}");
        previous = moved;
    }
    assert!(previous < 1e-2);
}
