//! Maximum likelihood under the percentile constraint `h(alpha, eta(x)) = pi0`.
//!
//! The constraint fixes every natural parameter at `x`, so each intercept is
//! a function of the remaining parameters. The reduced vector
//! `phi = (non-intercept beta, alpha)` is fitted by damped Newton steps; the
//! intercepts are recomputed from `phi` at every step, so each iterate is
//! feasible.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fitting::{
    damped_newton, deviance, score_and_info, spd_inverse, spd_solve, FitMethod, FitOptions, FitResult, Reparametrized,
};
use crate::link::MultinomialLink;
use crate::model::{theta_and_jacobian, Dataset, ModelSpec, ParameterLayout, ParameterVector};

/// Natural-parameter targets `log(pi0_j / (1 - sum pi0))`.
pub fn target_theta(pi0: &[f64]) -> Result<Vec<f64>> {
    let rest = 1.0 - pi0.iter().sum::<f64>();
    if pi0.iter().any(|&p| p <= 0.0) || rest <= 0.0 {
        return Err(Error::Validation(format!(
            "target probabilities must be positive with sum below 1, got {pi0:?}"
        )));
    }
    Ok(pi0.iter().map(|p| (p / rest).ln()).collect())
}

/// Bookkeeping for the intercept elimination at one covariate setting.
pub(crate) struct Elimination<'a> {
    spec: &'a ModelSpec,
    link: &'a MultinomialLink,
    x: Vec<f64>,
    target: Vec<f64>,
    intercepts: Vec<usize>,
    /// Positions in `delta` of the reduced parameters.
    free: Vec<usize>,
}

impl<'a> Elimination<'a> {
    pub fn new(spec: &'a ModelSpec, link: &'a MultinomialLink, x: &[f64], pi0: &[f64]) -> Result<Self> {
        if pi0.len() != spec.q() {
            return Err(Error::Dimension(format!(
                "pi0 has {} entries, model has {} categories",
                pi0.len(),
                spec.q()
            )));
        }
        let intercepts = spec.intercept_indices();
        let dim = spec.p() + link.r();
        let free = (0..dim).filter(|i| !intercepts.contains(i)).collect();
        Ok(Elimination {
            spec,
            link,
            x: x.to_vec(),
            target: target_theta(pi0)?,
            intercepts,
            free,
        })
    }

    /// Reduced vector of a full parameter vector.
    pub fn reduce(&self, delta: &ParameterVector) -> Vec<f64> {
        let full = delta.to_vec();
        self.free.iter().map(|&i| full[i]).collect()
    }

    /// Full parameter vector and `ddelta/dphi`.
    pub fn expand(&self, phi: &[f64]) -> Result<(ParameterVector, DMatrix<f64>)> {
        let p = self.spec.p();
        let dim = p + self.link.r();
        let mut full = vec![0.0; dim];
        for (&i, &v) in self.free.iter().zip(phi) {
            full[i] = v;
        }
        let mut delta = ParameterVector::from_slice(&full, p);
        let link = self.link.with_alpha(&delta.alpha)?;
        let eta_without = self.spec.linear_predictor(&delta.beta, &self.x);
        let b0 = link.solve_intercepts(&self.target, &eta_without)?;
        for (&idx, v) in self.intercepts.iter().zip(&b0) {
            delta.beta[idx] = *v;
        }
        let (_, dtheta) = theta_and_jacobian(self.spec, &link, &delta, &self.x);
        let mut jac = DMatrix::zeros(dim, self.free.len());
        for (c, &i) in self.free.iter().enumerate() {
            jac[(i, c)] = 1.0;
        }
        for (j, &idx) in self.intercepts.iter().enumerate() {
            let pivot = dtheta[(j, idx)];
            if pivot == 0.0 || !pivot.is_finite() {
                return Err(Error::LinkDomain(format!(
                    "constraint is flat in the intercept of category {}",
                    j + 1
                )));
            }
            for (c, &i) in self.free.iter().enumerate() {
                jac[(idx, c)] = -dtheta[(j, i)] / pivot;
            }
        }
        Ok((delta, jac))
    }
}

/// MLE of `delta` subject to `f_j(x) beta_j = g_j(alpha, pi0)` for every
/// category. `init` is a reduced starting vector; by default the reduced part
/// of `unconstrained` is used.
///
/// The returned fit carries the full constrained `delta`; its covariance is
/// over the reduced parameters named in `names`.
pub fn constrained_fit(
    data: &Dataset,
    spec: &ModelSpec,
    unconstrained: &FitResult,
    x: &[f64],
    pi0: &[f64],
    init: Option<&[f64]>,
    opts: &FitOptions,
) -> Result<FitResult> {
    let link = &unconstrained.link;
    let elim = Elimination::new(spec, link, x, pi0)?;
    let start = match init {
        Some(v) => v.to_vec(),
        None => elim.reduce(&unconstrained.delta),
    };
    let problem = Reparametrized {
        data,
        spec,
        link,
        expand: |phi: &[f64]| elim.expand(phi),
    };
    let outcome = damped_newton(&problem, &start, opts)?;
    let (delta, _) = elim.expand(&outcome.phi)?;
    let covariance = spd_inverse(&outcome.info)?;
    let names: Vec<String> = {
        let layout = ParameterLayout::new(spec, link);
        elim.free.iter().map(|&i| layout.names()[i].clone()).collect()
    };
    let n_params = covariance.nrows();
    Ok(FitResult {
        link: link.with_alpha(&delta.alpha)?,
        delta,
        names,
        alpha_fixed_covariance: covariance.clone(),
        covariance,
        loglik: outcome.loglik,
        deviance: deviance(data, outcome.loglik),
        aic: -2.0 * outcome.loglik + 2.0 * n_params as f64,
        iterations: outcome.iterations,
        converged: outcome.converged,
        score_norm: outcome.score_norm,
        method: FitMethod::FisherScoring,
        alpha_estimated: link.r() > 0,
        trace: outcome.trace,
    })
}

/// Score statistic `u0' S0^-1 u0` on the intercept block at a constrained
/// optimum.
///
/// At the constrained optimum the reduced score vanishes, so the score of
/// every non-intercept parameter is `-B' u0` with `B = dbeta0/dphi` the
/// intercept rows of the elimination Jacobian. The full score is therefore
/// `M u0` with `M` stacking the identity (intercept rows) over `-B'`, and the
/// statistic uses `S0^-1 = M' J^-1 M`, which equals the full-vector form
/// `U' J^-1 U`.
pub fn intercept_score_statistic(
    score: &DVector<f64>,
    info: &DMatrix<f64>,
    elimination_jacobian: &DMatrix<f64>,
    intercepts: &[usize],
) -> Result<f64> {
    let dim = score.len();
    let q = intercepts.len();
    let u0 = DVector::from_iterator(q, intercepts.iter().map(|&i| score[i]));
    let mut m = DMatrix::zeros(dim, q);
    for (c, &idx) in intercepts.iter().enumerate() {
        m[(idx, c)] = 1.0;
    }
    // Columns of the elimination Jacobian that belong to non-intercept
    // parameters, in parameter order.
    let free: Vec<usize> = (0..dim).filter(|i| !intercepts.contains(i)).collect();
    for (col, &i) in free.iter().enumerate() {
        for (c, &idx) in intercepts.iter().enumerate() {
            m[(i, c)] = -elimination_jacobian[(idx, col)];
        }
    }
    let cols: Vec<DVector<f64>> = (0..q)
        .map(|c| spd_solve(info, &m.column(c).into_owned()))
        .collect::<Result<_>>()?;
    let precision = m.tr_mul(&DMatrix::from_columns(&cols));
    Ok(u0.dot(&(precision * &u0)).max(0.0))
}

/// Both test statistics at one covariate setting.
#[derive(Debug, Clone)]
pub struct ConstrainedStatistics {
    /// `D(x) - D(x_hat)`, clamped at zero.
    pub lr: f64,
    pub score: f64,
    /// Reduced parameter vector at the constrained optimum (for warm starts).
    pub phi: Vec<f64>,
}

pub fn constrained_statistics(
    data: &Dataset,
    spec: &ModelSpec,
    unconstrained: &FitResult,
    x: &[f64],
    pi0: &[f64],
    init: Option<&[f64]>,
    opts: &FitOptions,
) -> Result<ConstrainedStatistics> {
    let fit = constrained_fit(data, spec, unconstrained, x, pi0, init, opts)?.require_converged()?;
    let elim = Elimination::new(spec, &unconstrained.link, x, pi0)?;
    let phi = elim.reduce(&fit.delta);
    let (_, jac) = elim.expand(&phi)?;
    let (score, info) = score_and_info(data, spec, &fit.link, &fit.delta)?;
    let s = intercept_score_statistic(&score, &info, &jac, &spec.intercept_indices())?;
    Ok(ConstrainedStatistics {
        lr: (fit.deviance - unconstrained.deviance).max(0.0),
        score: s,
        phi,
    })
}
