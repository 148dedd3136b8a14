//! Score tests for link parameters and AIC-driven forward selection.

use log::debug;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fitting::{fit_fisher_scoring, initial_delta, spd_solve, FitOptions, FitResult};
use crate::link::{FamilyKind, MultinomialLink};
use crate::model::{alpha_name, parse_alpha_name, Dataset, ModelSpec, ParameterVector};
use crate::special::chi2_sf;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreTestResult {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    pub tested_params: Vec<String>,
}

/// Efficient score statistic for the `tested` block of `score`/`info`,
/// adjusting for every other parameter through the Schur complement
/// `J_tt - J_tn J_nn^-1 J_nt`.
pub fn partial_score_statistic(score: &DVector<f64>, info: &DMatrix<f64>, tested: &[usize]) -> Result<f64> {
    if tested.is_empty() {
        return Ok(0.0);
    }
    let nuisance: Vec<usize> = (0..score.len()).filter(|i| !tested.contains(i)).collect();
    let pick =
        |rows: &[usize], cols: &[usize]| DMatrix::from_fn(rows.len(), cols.len(), |a, b| info[(rows[a], cols[b])]);
    let u_t = DVector::from_iterator(tested.len(), tested.iter().map(|&i| score[i]));
    let u_n = DVector::from_iterator(nuisance.len(), nuisance.iter().map(|&i| score[i]));
    let j_tt = pick(tested, tested);
    let j_tn = pick(tested, &nuisance);
    let (schur, efficient) = if nuisance.is_empty() {
        (j_tt, u_t)
    } else {
        let j_nn = pick(&nuisance, &nuisance);
        let j_nt = j_tn.transpose();
        let cols: Vec<DVector<f64>> = (0..tested.len())
            .map(|c| spd_solve(&j_nn, &j_nt.column(c).into_owned()))
            .collect::<Result<_>>()?;
        let nn_inv_nt = DMatrix::from_columns(&cols);
        let nn_inv_un = spd_solve(&j_nn, &u_n)?;
        (&j_tt - &j_tn * nn_inv_nt, u_t - &j_tn * nn_inv_un)
    };
    let solved = spd_solve(&schur, &efficient)?;
    Ok(efficient.dot(&solved).max(0.0))
}

/// Score test of `H0: alpha_jk = 1` for the named, currently inactive link
/// parameters (`alpha{j}{k}`), after fitting the model under `H0`.
pub fn score_test_link(
    data: &Dataset,
    spec: &ModelSpec,
    link: &MultinomialLink,
    tested: &[String],
    opts: &FitOptions,
) -> Result<ScoreTestResult> {
    let null_fit = crate::fitting::fit(data, spec, link, opts)?.require_converged()?;
    score_test_at(data, spec, &null_fit, tested)
}

/// Score test against an existing fit of the null model.
pub fn score_test_at(
    data: &Dataset,
    spec: &ModelSpec,
    null_fit: &FitResult,
    tested: &[String],
) -> Result<ScoreTestResult> {
    if tested.is_empty() {
        return Ok(ScoreTestResult {
            statistic: 0.0,
            df: 0,
            p_value: 1.0,
            tested_params: Vec::new(),
        });
    }
    let mut extended = null_fit.link.clone();
    let mut targets = Vec::new();
    for name in tested {
        let (j, k) = parse_alpha_name(name)?;
        let fam = extended
            .families()
            .get(j)
            .ok_or_else(|| Error::Validation(format!("no category for `{name}`")))?;
        if k >= fam.param_dim() {
            return Err(Error::Validation(format!("`{name}` does not exist for this family")));
        }
        if fam.active_mask()[k] {
            return Err(Error::Validation(format!("`{name}` is already estimated")));
        }
        extended = extended.with_param_active(j, k, true);
        targets.push((j, k));
    }
    let active = extended.active_params();
    let p = spec.p();
    let tested_idx: Vec<usize> = targets
        .iter()
        .map(|t| p + active.iter().position(|a| a == t).unwrap())
        .collect();
    let delta = ParameterVector::new(null_fit.delta.beta.clone(), extended.alpha().to_vec());
    let (score, info) = crate::fitting::score_and_info(data, spec, &extended, &delta)?;
    let statistic = partial_score_statistic(&score, &info, &tested_idx)?;
    Ok(ScoreTestResult {
        statistic,
        df: tested.len(),
        p_value: chi2_sf(statistic, tested.len()),
        tested_params: tested.to_vec(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionStep {
    /// Parameter activated at this step (`None` for the starting model).
    pub added: Option<String>,
    pub aic: f64,
    /// AIC of every candidate tried at this step.
    pub candidates: Vec<(String, Option<f64>)>,
}

#[derive(Debug, Clone)]
pub struct StepwiseResult {
    pub selected: Vec<String>,
    pub link: MultinomialLink,
    pub fit: FitResult,
    pub steps: Vec<SelectionStep>,
}

/// Forward selection of link parameters by AIC.
///
/// Starts from `link` with every parameter inactive and repeatedly activates
/// the single parameter whose fit lowers AIC the most, stopping when no
/// candidate lowers it. Candidates whose fit does not converge are skipped.
pub fn stepwise_link_selection(
    data: &Dataset,
    spec: &ModelSpec,
    link: &MultinomialLink,
    opts: &FitOptions,
) -> Result<StepwiseResult> {
    let mut start = link.clone();
    for (j, k) in link.active_params() {
        start = start.with_param_active(j, k, false);
    }
    let init = initial_delta(data, spec, &start, opts)?;
    let mut fit = fit_fisher_scoring(data, spec, &start, &init, opts)?.require_converged()?;
    let mut selected = Vec::new();
    let mut steps = vec![SelectionStep {
        added: None,
        aic: fit.aic,
        candidates: Vec::new(),
    }];
    loop {
        let mut candidates = Vec::new();
        let mut best: Option<(String, FitResult)> = None;
        for (j, fam) in fit.link.families().iter().enumerate() {
            if fam.kind() == FamilyKind::Identity {
                continue;
            }
            for k in 0..fam.param_dim() {
                if fam.active_mask()[k] {
                    continue;
                }
                let name = alpha_name(j, k);
                let trial_link = fit.link.with_param_active(j, k, true);
                let init = ParameterVector::new(fit.delta.beta.clone(), trial_link.alpha().to_vec());
                let trial =
                    fit_fisher_scoring(data, spec, &trial_link, &init, opts).and_then(FitResult::require_converged);
                match trial {
                    Ok(t) => {
                        candidates.push((name.clone(), Some(t.aic)));
                        if best.as_ref().is_none_or(|b| t.aic < b.1.aic) {
                            best = Some((name, t));
                        }
                    }
                    Err(e) => {
                        debug!("candidate {name} skipped: {e}");
                        candidates.push((name, None));
                    }
                }
            }
        }
        match best {
            Some((name, trial)) if trial.aic < fit.aic => {
                steps.push(SelectionStep {
                    added: Some(name.clone()),
                    aic: trial.aic,
                    candidates,
                });
                selected.push(name);
                fit = trial;
            }
            _ => {
                steps.push(SelectionStep {
                    added: None,
                    aic: fit.aic,
                    candidates,
                });
                break;
            }
        }
    }
    selected.sort();
    Ok(StepwiseResult {
        selected,
        link: fit.link.clone(),
        fit,
        steps,
    })
}
