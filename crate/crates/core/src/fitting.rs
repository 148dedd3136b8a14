//! Maximum-likelihood fitting: Fisher scoring, grid profiling over the link
//! parameters, deviance and covariance summaries.

use log::debug;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::link::{log_normalizer, MultinomialLink};
use crate::model::{
    log_multinomial_coefficient, natural_parameters, theta_and_jacobian, Dataset, ModelSpec, ParameterLayout,
    ParameterVector,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Convergence threshold on the max-norm of the score.
    pub tol: f64,
    pub max_iter: usize,
    /// Maximum number of step halvings per iteration.
    pub max_halvings: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            tol: 1e-8,
            max_iter: 100,
            max_halvings: 20,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FitMethod {
    FisherScoring,
    GridProfile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub loglik: f64,
    pub score_norm: f64,
    /// Fraction of the full scoring step that was accepted.
    pub step_scale: f64,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub delta: ParameterVector,
    /// Link evaluated at the fitted link parameters.
    pub link: MultinomialLink,
    /// Parameter names for the rows of `covariance`.
    pub names: Vec<String>,
    /// Inverse expected information over the estimated parameters.
    pub covariance: DMatrix<f64>,
    /// Inverse of the regression block of the information, i.e. the
    /// covariance of `beta` when the link parameters are treated as known.
    pub alpha_fixed_covariance: DMatrix<f64>,
    pub loglik: f64,
    pub deviance: f64,
    pub aic: f64,
    pub iterations: usize,
    pub converged: bool,
    pub score_norm: f64,
    pub method: FitMethod,
    /// Whether the link parameters were estimated (and so counted in AIC
    /// and included in `covariance`).
    pub alpha_estimated: bool,
    pub trace: Vec<IterationRecord>,
}

impl FitResult {
    pub fn p(&self) -> usize {
        self.delta.beta.len()
    }

    pub fn standard_errors(&self) -> Vec<f64> {
        self.covariance.diagonal().iter().map(|v| v.max(0.0).sqrt()).collect()
    }

    pub fn alpha_fixed_standard_errors(&self) -> Vec<f64> {
        self.alpha_fixed_covariance
            .diagonal()
            .iter()
            .map(|v| v.max(0.0).sqrt())
            .collect()
    }

    /// Number of estimated parameters.
    pub fn n_params(&self) -> usize {
        self.covariance.nrows()
    }

    pub fn require_converged(self) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::NotConverged {
                iterations: self.iterations,
                score_norm: self.score_norm,
            })
        }
    }
}

/// Log-likelihood including the multinomial constant.
pub fn loglik(data: &Dataset, spec: &ModelSpec, link: &MultinomialLink, delta: &ParameterVector) -> Result<f64> {
    let link = link.with_alpha(&delta.alpha)?;
    let mut total = data.log_coefficient();
    for obs in data.observations() {
        let theta = natural_parameters(spec, &link, &delta.beta, &obs.x);
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::LinkDomain(format!(
                "non-finite natural parameter at x = {:?}",
                obs.x
            )));
        }
        let yt: f64 = obs.y.iter().zip(&theta).map(|(&y, t)| y as f64 * t).sum();
        total += yt - obs.n as f64 * log_normalizer(&theta);
    }
    Ok(total)
}

/// Log-likelihood of the saturated model (`pi_i = y_i / n_i`, `0 log 0 = 0`).
pub fn saturated_loglik(data: &Dataset) -> f64 {
    data.observations()
        .iter()
        .map(|obs| {
            let n = obs.n as f64;
            let counts = obs.y.iter().copied().chain(std::iter::once(obs.dummy_count()));
            log_multinomial_coefficient(&obs.y, obs.n)
                + counts
                    .filter(|&c| c > 0)
                    .map(|c| c as f64 * (c as f64 / n).ln())
                    .sum::<f64>()
        })
        .sum()
}

pub fn deviance(data: &Dataset, loglik: f64) -> f64 {
    2.0 * (saturated_loglik(data) - loglik)
}

/// Score vector and expected information with respect to `delta`.
///
/// Because the transformed predictor is the multinomial natural parameter,
/// `dmu/ddelta = V(mu) dtheta/ddelta` and the usual
/// `(dmu/ddelta)' V^-1 (...)` products collapse to
/// `score = sum n_i (dtheta_i)' (ybar_i - mu_i)` and
/// `info = sum n_i (dtheta_i)' V(mu_i) dtheta_i`, which never divides by a
/// small probability.
pub fn score_and_info(
    data: &Dataset,
    spec: &ModelSpec,
    link: &MultinomialLink,
    delta: &ParameterVector,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    accumulate(data, spec, link, delta, true).map(|(s, i)| (s, i.expect("information requested")))
}

/// Score vector only.
pub fn score(
    data: &Dataset,
    spec: &ModelSpec,
    link: &MultinomialLink,
    delta: &ParameterVector,
) -> Result<DVector<f64>> {
    accumulate(data, spec, link, delta, false).map(|(s, _)| s)
}

fn accumulate(
    data: &Dataset,
    spec: &ModelSpec,
    link: &MultinomialLink,
    delta: &ParameterVector,
    with_info: bool,
) -> Result<(DVector<f64>, Option<DMatrix<f64>>)> {
    let link = link.with_alpha(&delta.alpha)?;
    let dim = delta.len();
    let q = spec.q();
    let mut score = DVector::zeros(dim);
    let mut info = with_info.then(|| DMatrix::zeros(dim, dim));
    // V(mu) dtheta, row-major q x dim.
    let mut vd = vec![0.0; q * dim];
    for obs in data.observations() {
        let (theta, dtheta) = theta_and_jacobian(spec, &link, delta, &obs.x);
        if theta.iter().any(|t| !t.is_finite()) || dtheta.iter().any(|v| !v.is_finite()) {
            return Err(Error::LinkDomain(format!(
                "non-finite link derivative at x = {:?}",
                obs.x
            )));
        }
        let mu = crate::link::probabilities(&theta);
        let n = obs.n as f64;
        for j in 0..q {
            let r = obs.y[j] as f64 - n * mu[j];
            for a in 0..dim {
                score[a] += dtheta[(j, a)] * r;
            }
        }
        let Some(info) = info.as_mut() else { continue };
        // V = n (diag mu - mu mu').
        for j in 0..q {
            for a in 0..dim {
                let mut acc = mu[j] * dtheta[(j, a)];
                for k in 0..q {
                    acc -= mu[j] * mu[k] * dtheta[(k, a)];
                }
                vd[j * dim + a] = n * acc;
            }
        }
        for b in 0..dim {
            for a in b..dim {
                let mut acc = 0.0;
                for j in 0..q {
                    acc += dtheta[(j, a)] * vd[j * dim + b];
                }
                info[(a, b)] += acc;
            }
        }
    }
    if let Some(info) = info.as_mut() {
        for b in 0..dim {
            for a in b + 1..dim {
                info[(b, a)] = info[(a, b)];
            }
        }
    }
    Ok((score, info))
}

/// Inverse of a symmetric positive (semi)definite matrix via Cholesky, with a
/// single `1e-10`-scaled diagonal jitter retry.
pub fn spd_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    spd_cholesky(m).map(|c| {
        let inv = c.inverse();
        (&inv + inv.transpose()) * 0.5
    })
}

fn spd_cholesky(m: &DMatrix<f64>) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularInformation("non-finite entries".into()));
    }
    if let Some(c) = m.clone().cholesky() {
        return Ok(c);
    }
    let scale = m.diagonal().iter().fold(1.0f64, |a, b| a.max(b.abs()));
    let jittered = m + DMatrix::identity(m.nrows(), m.ncols()) * (1e-10 * scale);
    jittered
        .cholesky()
        .ok_or_else(|| Error::SingularInformation("cholesky failed after jitter".into()))
}

pub(crate) fn spd_solve(m: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    Ok(spd_cholesky(m)?.solve(rhs))
}

/// A likelihood over a reduced parameter `phi` that expands to a full
/// `delta` with known Jacobian `ddelta/dphi`.
pub(crate) struct Reparametrized<'a, F> {
    pub data: &'a Dataset,
    pub spec: &'a ModelSpec,
    pub link: &'a MultinomialLink,
    pub expand: F,
}

impl<F> Reparametrized<'_, F>
where
    F: Fn(&[f64]) -> Result<(ParameterVector, DMatrix<f64>)>,
{
    fn loglik(&self, phi: &[f64]) -> Result<f64> {
        let (delta, _) = (self.expand)(phi)?;
        loglik(self.data, self.spec, self.link, &delta)
    }

    fn score_info(&self, phi: &[f64]) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let (delta, jac) = (self.expand)(phi)?;
        let (s, info) = score_and_info(self.data, self.spec, self.link, &delta)?;
        Ok((jac.tr_mul(&s), jac.tr_mul(&(info * &jac))))
    }

    fn score(&self, phi: &[f64]) -> Result<DVector<f64>> {
        let (delta, jac) = (self.expand)(phi)?;
        Ok(jac.tr_mul(&score(self.data, self.spec, self.link, &delta)?))
    }

    /// Negative Hessian of the log-likelihood by forward differences of the
    /// analytic score.
    fn observed_info(&self, phi: &DVector<f64>, score: &DVector<f64>) -> Result<DMatrix<f64>> {
        let dim = phi.len();
        let mut h = DMatrix::zeros(dim, dim);
        for i in 0..dim {
            let step = 1e-6 * phi[i].abs().max(1.0);
            let mut shifted = phi.clone();
            shifted[i] += step;
            let s = self.score(shifted.as_slice())?;
            h.set_column(i, &((score - s) / step));
        }
        Ok((&h + h.transpose()) * 0.5)
    }
}

pub(crate) struct ScoringOutcome {
    pub phi: Vec<f64>,
    pub loglik: f64,
    pub info: DMatrix<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub score_norm: f64,
    pub trace: Vec<IterationRecord>,
}

/// Fisher scoring with step halving on a reparametrized likelihood.
pub(crate) fn fisher_scoring<F>(
    problem: &Reparametrized<'_, F>,
    init: &[f64],
    opts: &FitOptions,
) -> Result<ScoringOutcome>
where
    F: Fn(&[f64]) -> Result<(ParameterVector, DMatrix<f64>)>,
{
    let mut phi = DVector::from_column_slice(init);
    let mut ll = problem.loglik(phi.as_slice())?;
    if !ll.is_finite() {
        return Err(Error::LinkDomain("log-likelihood is not finite at the start".into()));
    }
    let mut trace = Vec::new();
    let mut iterations = 0;
    loop {
        let (score, info) = problem.score_info(phi.as_slice())?;
        let norm = score.amax();
        let converged = norm <= opts.tol;
        if converged || iterations >= opts.max_iter {
            return Ok(ScoringOutcome {
                phi: phi.as_slice().to_vec(),
                loglik: ll,
                info,
                iterations,
                converged,
                score_norm: norm,
                trace,
            });
        }
        iterations += 1;
        let step = spd_solve(&info, &score)?;
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let candidate = &phi + &step * scale;
            if let Ok(c) = problem.loglik(candidate.as_slice()) {
                // Allow for rounding when already at the optimum.
                if c.is_finite() && c >= ll - 1e-10 * ll.abs().max(1.0) {
                    accepted = Some((candidate, c));
                    break;
                }
            }
            scale *= 0.5;
        }
        match accepted {
            Some((candidate, c)) => {
                trace.push(IterationRecord {
                    iteration: iterations,
                    loglik: c,
                    score_norm: norm,
                    step_scale: scale,
                });
                phi = candidate;
                ll = c;
            }
            None => {
                debug!("step halving exhausted at iteration {iterations}, score norm {norm:e}");
                return Ok(ScoringOutcome {
                    phi: phi.as_slice().to_vec(),
                    loglik: ll,
                    info,
                    iterations,
                    converged: false,
                    score_norm: norm,
                    trace,
                });
            }
        }
    }
}

/// Levenberg-Marquardt damped Newton iteration on a reparametrized
/// likelihood.
///
/// The curvature is the observed information (forward differences of the
/// analytic score), or the expected information where the observed one is
/// not positive definite, plus `lambda` times the diagonal of the expected
/// information. A step that lowers the log-likelihood is rejected and
/// `lambda` grows tenfold; an accepted step shrinks it. `opts.max_halvings`
/// bounds the consecutive rejections.
///
/// The iteration also stops, unconverged, once `STALL_WINDOW` accepted steps
/// have together raised the log-likelihood by less than `STALL_GAIN`. This
/// happens along ridges where the supremum lies at an infinite link
/// parameter.
const STALL_WINDOW: usize = 10;
const STALL_GAIN: f64 = 1e-6;

pub(crate) fn damped_newton<F>(
    problem: &Reparametrized<'_, F>,
    init: &[f64],
    opts: &FitOptions,
) -> Result<ScoringOutcome>
where
    F: Fn(&[f64]) -> Result<(ParameterVector, DMatrix<f64>)>,
{
    let mut phi = DVector::from_column_slice(init);
    let mut ll = problem.loglik(phi.as_slice())?;
    if !ll.is_finite() {
        return Err(Error::LinkDomain("log-likelihood is not finite at the start".into()));
    }
    let mut lambda = 1e-3;
    let mut trace: Vec<IterationRecord> = Vec::new();
    let mut iterations = 0;
    loop {
        let (score, info) = problem.score_info(phi.as_slice())?;
        let norm = score.amax();
        let converged = norm <= opts.tol;
        let stalled = trace.len() > STALL_WINDOW && ll - trace[trace.len() - 1 - STALL_WINDOW].loglik < STALL_GAIN;
        if stalled && !converged {
            debug!("stalled at iteration {iterations}, score norm {norm:e}");
        }
        if converged || stalled || iterations >= opts.max_iter {
            return Ok(ScoringOutcome {
                phi: phi.as_slice().to_vec(),
                loglik: ll,
                info,
                iterations,
                converged,
                score_norm: norm,
                trace,
            });
        }
        iterations += 1;
        let observed = problem.observed_info(&phi, &score).ok();
        let damping = DMatrix::from_diagonal(&info.diagonal().map(|d| d.abs().max(1e-12)));
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let curvature = match observed.as_ref().map(|h| (h + &damping * lambda).cholesky()) {
                Some(Some(c)) => Some(c),
                _ => (&info + &damping * lambda).cholesky(),
            };
            if let Some(c) = curvature {
                let candidate = &phi + c.solve(&score);
                if let Ok(v) = problem.loglik(candidate.as_slice()) {
                    // Allow for rounding when already at the optimum.
                    if v.is_finite() && v >= ll - 1e-10 * ll.abs().max(1.0) {
                        accepted = Some((candidate, v));
                        break;
                    }
                }
            }
            lambda *= 10.0;
        }
        match accepted {
            Some((candidate, v)) => {
                trace.push(IterationRecord {
                    iteration: iterations,
                    loglik: v,
                    score_norm: norm,
                    step_scale: 1.0 / (1.0 + lambda),
                });
                phi = candidate;
                ll = v;
                lambda = (lambda * 0.1).max(1e-12);
            }
            None => {
                debug!("damping exhausted at iteration {iterations}, score norm {norm:e}");
                return Ok(ScoringOutcome {
                    phi: phi.as_slice().to_vec(),
                    loglik: ll,
                    info,
                    iterations,
                    converged: false,
                    score_norm: norm,
                    trace,
                });
            }
        }
    }
}

fn finish(
    data: &Dataset,
    spec: &ModelSpec,
    link: &MultinomialLink,
    delta: ParameterVector,
    outcome: &ScoringOutcome,
    method: FitMethod,
    alpha_estimated: bool,
) -> Result<FitResult> {
    let link = link.with_alpha(&delta.alpha)?;
    let (_, full_info) = score_and_info(data, spec, &link, &delta)?;
    let p = spec.p();
    let beta_block = full_info.view((0, 0), (p, p)).into_owned();
    let alpha_fixed_covariance = spd_inverse(&beta_block)?;
    let layout = ParameterLayout::new(spec, &link);
    let (covariance, names) = if alpha_estimated {
        (spd_inverse(&full_info)?, layout.names().to_vec())
    } else {
        (alpha_fixed_covariance.clone(), layout.names()[..p].to_vec())
    };
    let n_params = covariance.nrows();
    Ok(FitResult {
        delta,
        link,
        names,
        covariance,
        alpha_fixed_covariance,
        loglik: outcome.loglik,
        deviance: deviance(data, outcome.loglik),
        aic: -2.0 * outcome.loglik + 2.0 * n_params as f64,
        iterations: outcome.iterations,
        converged: outcome.converged,
        score_norm: outcome.score_norm,
        method,
        alpha_estimated,
        trace: outcome.trace.clone(),
    })
}

/// Joint Fisher scoring over `delta = (beta, alpha)`.
///
/// A non-converged run is returned with `converged == false` holding the best
/// iterate; use [`FitResult::require_converged`] to turn it into an error.
pub fn fit_fisher_scoring(
    data: &Dataset,
    spec: &ModelSpec,
    link: &MultinomialLink,
    init: &ParameterVector,
    opts: &FitOptions,
) -> Result<FitResult> {
    spec.check_dataset(data)?;
    let p = spec.p();
    let dim = p + link.r();
    if init.beta.len() != p || init.alpha.len() != link.r() {
        return Err(Error::Dimension(format!(
            "initial vector has {} + {} entries, model needs {p} + {}",
            init.beta.len(),
            init.alpha.len(),
            link.r()
        )));
    }
    let identity = DMatrix::<f64>::identity(dim, dim);
    let problem = Reparametrized {
        data,
        spec,
        link,
        expand: |phi: &[f64]| Ok((ParameterVector::from_slice(phi, p), identity.clone())),
    };
    let outcome = fisher_scoring(&problem, &init.to_vec(), opts)?;
    let delta = ParameterVector::from_slice(&outcome.phi, p);
    finish(data, spec, link, delta, &outcome, FitMethod::FisherScoring, true)
}

/// Fisher scoring over `beta` with the link parameters held at `link.alpha()`.
pub fn fit_alpha_fixed(
    data: &Dataset,
    spec: &ModelSpec,
    link: &MultinomialLink,
    init_beta: &[f64],
    opts: &FitOptions,
) -> Result<FitResult> {
    spec.check_dataset(data)?;
    let p = spec.p();
    let alpha = link.alpha().to_vec();
    let mut embed = DMatrix::<f64>::zeros(p + alpha.len(), p);
    embed.view_mut((0, 0), (p, p)).fill_with_identity();
    let problem = Reparametrized {
        data,
        spec,
        link,
        expand: |phi: &[f64]| Ok((ParameterVector::new(phi.to_vec(), alpha.clone()), embed.clone())),
    };
    let outcome = fisher_scoring(&problem, init_beta, opts)?;
    let delta = ParameterVector::new(outcome.phi.clone(), link.alpha().to_vec());
    finish(data, spec, link, delta, &outcome, FitMethod::FisherScoring, false)
}

/// Starting point: `beta` from the multinomial logit fit (itself started at
/// zero) and the link parameters at their identity value.
pub fn initial_delta(
    data: &Dataset,
    spec: &ModelSpec,
    link: &MultinomialLink,
    opts: &FitOptions,
) -> Result<ParameterVector> {
    let logit = MultinomialLink::logit(spec.q());
    let fit = fit_alpha_fixed(data, spec, &logit, &vec![0.0; spec.p()], opts)?;
    Ok(ParameterVector::new(fit.delta.beta, vec![1.0; link.r()]))
}

/// Fit with Fisher scoring from [`initial_delta`].
pub fn fit(data: &Dataset, spec: &ModelSpec, link: &MultinomialLink, opts: &FitOptions) -> Result<FitResult> {
    let init = initial_delta(data, spec, link, opts)?;
    fit_fisher_scoring(data, spec, link, &init, opts)
}

/// `lo, lo + step, ..., hi` with values rounded to the step's decimal grid.
pub fn grid_values(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    (0..=n)
        .map(|i| {
            let v = lo + i as f64 * step;
            (v * 1e9).round() / 1e9
        })
        .collect()
}

/// The default grid for each active link parameter: -3 to 3 in steps of 0.1.
pub fn default_grid(r: usize) -> Vec<Vec<f64>> {
    vec![grid_values(-3.0, 3.0, 0.1); r]
}

fn cartesian(grid: &[Vec<f64>]) -> Vec<Vec<f64>> {
    grid.iter().fold(vec![Vec::new()], |acc, values| {
        acc.into_iter()
            .flat_map(|prefix| {
                values.iter().map(move |&v| {
                    let mut next = prefix.clone();
                    next.push(v);
                    next
                })
            })
            .collect()
    })
}

/// Approximate MLE by profiling `beta` over a grid of link parameters.
///
/// Each grid point is fitted with the link parameters fixed, starting from
/// the multinomial logit estimate. The reported covariance is the joint
/// inverse information at the best grid point; `alpha_fixed_covariance` holds
/// the regression block with the link treated as known. Ties go to the
/// lexicographically smallest grid point.
pub fn fit_grid_profile(
    data: &Dataset,
    spec: &ModelSpec,
    link: &MultinomialLink,
    grid: &[Vec<f64>],
    opts: &FitOptions,
) -> Result<FitResult> {
    spec.check_dataset(data)?;
    if grid.len() != link.r() || grid.iter().any(Vec::is_empty) {
        return Err(Error::Dimension(format!(
            "grid needs a non-empty value list for each of the {} link parameters",
            link.r()
        )));
    }
    let init = initial_delta(data, spec, link, opts)?;
    let points = cartesian(grid);
    let profile = |alpha: &Vec<f64>| -> Option<FitResult> {
        let fixed = link.with_alpha(alpha).ok()?;
        match fit_alpha_fixed(data, spec, &fixed, &init.beta, opts) {
            Ok(f) if f.converged => Some(f),
            Ok(f) => {
                debug!("grid point {alpha:?} did not converge (score {:e})", f.score_norm);
                None
            }
            Err(e) => {
                debug!("grid point {alpha:?} failed: {e}");
                None
            }
        }
    };
    #[cfg(feature = "parallel")]
    let fits: Vec<Option<FitResult>> = {
        use rayon::prelude::*;
        points.par_iter().map(profile).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let fits: Vec<Option<FitResult>> = points.iter().map(profile).collect();

    let mut best: Option<FitResult> = None;
    for f in fits.into_iter().flatten() {
        if best.as_ref().is_none_or(|b| f.loglik > b.loglik) {
            best = Some(f);
        }
    }
    let best = best.ok_or(Error::AllGridFailed)?;
    let outcome = ScoringOutcome {
        phi: best.delta.to_vec(),
        loglik: best.loglik,
        info: DMatrix::zeros(0, 0),
        iterations: best.iterations,
        converged: true,
        score_norm: best.score_norm,
        trace: best.trace.clone(),
    };
    finish(data, spec, link, best.delta, &outcome, FitMethod::GridProfile, true)
}

/// Ratio of the standard error of each regression coefficient with the link
/// parameters estimated to the one with them held at their estimates.
pub fn variance_inflation(fit_joint: &FitResult, fit_alpha_fixed: &FitResult) -> Vec<f64> {
    let p = fit_joint.p();
    let joint = fit_joint.standard_errors();
    let fixed = fit_alpha_fixed.alpha_fixed_standard_errors();
    (0..p).map(|i| joint[i] / fixed[i]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Observation;

    fn toy() -> Dataset {
        Dataset::new(vec![
            Observation {
                x: vec![-1.0],
                y: vec![3, 1],
                n: 6,
            },
            Observation {
                x: vec![0.0],
                y: vec![2, 2],
                n: 5,
            },
            Observation {
                x: vec![1.0],
                y: vec![1, 4],
                n: 7,
            },
        ])
        .unwrap()
    }

    #[test]
    fn loglik_matches_pmf_sum() {
        let data = toy();
        let spec = ModelSpec::first_order(2, 1);
        let link = MultinomialLink::logit(2);
        let delta = ParameterVector::new(vec![0.2, -0.4, 0.1, 0.7], vec![]);
        let direct: f64 = data
            .observations()
            .iter()
            .map(|o| {
                let eta = spec.linear_predictor(&delta.beta, &o.x);
                let pi = link.h(&eta, &[0.0, 0.0]);
                crate::model::scaled_multinomial_logpmf(&o.y, o.n, &pi)
            })
            .sum();
        let ll = loglik(&data, &spec, &link, &delta).unwrap();
        assert!((ll - direct).abs() < 1e-12);
    }

    #[test]
    fn saturated_loglik_is_an_upper_bound() {
        let data = toy();
        let spec = ModelSpec::first_order(2, 1);
        let fit = fit(&data, &spec, &MultinomialLink::logit(2), &FitOptions::default()).unwrap();
        assert!(fit.converged);
        assert!(fit.deviance >= -1e-8);
        assert!(saturated_loglik(&data) >= fit.loglik);
    }

    #[test]
    fn grid_values_are_exact_decimals() {
        let g = grid_values(-3.0, 3.0, 0.1);
        assert_eq!(g.len(), 61);
        assert_eq!(g[0], -3.0);
        assert_eq!(g[1], -2.9);
        assert_eq!(g[30], 0.0);
        assert_eq!(g[60], 3.0);
    }

    #[test]
    fn logit_model_has_unit_inflation() {
        let data = toy();
        let spec = ModelSpec::first_order(2, 1);
        let fit = fit(&data, &spec, &MultinomialLink::logit(2), &FitOptions::default()).unwrap();
        let ratios = variance_inflation(&fit, &fit);
        assert!(ratios.iter().all(|&r| r == 1.0));
    }

    #[test]
    fn singular_information_is_reported() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        // Rank one but PSD: the jitter rescues it.
        assert!(spd_inverse(&m).is_ok());
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(spd_inverse(&m), Err(Error::SingularInformation(_))));
    }
}
