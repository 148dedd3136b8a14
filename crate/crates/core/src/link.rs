//! Parametric multicategory links.
//!
//! A [`MultinomialLink`] stacks one scalar [`GeneratingFamily`] per response
//! category and feeds the transformed predictors through the multicategory
//! logistic map
//!
//! ```text
//! pi_j = exp(G_j) / (1 + sum_l exp(G_l))
//! ```
//!
//! so the transformed value `G_j` is exactly the natural parameter
//! `log(pi_j / pi_dummy)` of the multinomial. With every link parameter at 1
//! the generating families are the identity and the model is the ordinary
//! multinomial logit.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Below this magnitude a power exponent is treated as zero and the
/// logarithmic limit branch is used.
pub const ALPHA_LOG_LIMIT: f64 = 1e-6;

/// Below this magnitude `dG/dalpha` switches to its Taylor series.
const ALPHA_SERIES_LIMIT: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FamilyKind {
    /// `G(eta) = eta`, no parameters.
    Identity,
    /// Two-sided power family with separate exponents for the upper
    /// (`eta >= 0`) and lower (`eta < 0`) tails.
    CzadoTwoSided,
}

impl FamilyKind {
    pub fn param_dim(self) -> usize {
        match self {
            FamilyKind::Identity => 0,
            FamilyKind::CzadoTwoSided => 2,
        }
    }
}

pub(crate) const MAX_FAMILY_PARAMS: usize = 2;

/// Scalar generating family for one response category.
///
/// `active` has one flag per family parameter; inactive parameters are held
/// at their identity value 1 and do not appear in the parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratingFamily {
    kind: FamilyKind,
    active: Vec<bool>,
}

// ((1 + u)^a - 1) / a for u >= 0, written through log1p so that a -> 0 is the
// log branch.
fn power_transform(alpha: f64, u: f64) -> f64 {
    let l = u.ln_1p();
    if alpha.abs() < ALPHA_LOG_LIMIT {
        l
    } else {
        (alpha * l).exp_m1() / alpha
    }
}

fn power_transform_deta(alpha: f64, u: f64) -> f64 {
    ((alpha - 1.0) * u.ln_1p()).exp()
}

fn power_transform_dalpha(alpha: f64, u: f64) -> f64 {
    let l = u.ln_1p();
    if alpha.abs() < ALPHA_SERIES_LIMIT {
        let l2 = l * l;
        l2 / 2.0 + alpha * l2 * l / 3.0 + alpha * alpha * l2 * l2 / 8.0
    } else {
        let e = (alpha * l).exp();
        (alpha * l * e - (e - 1.0)) / (alpha * alpha)
    }
}

// Inverse of `power_transform` on t >= 0.
fn power_transform_inv(alpha: f64, t: f64) -> Option<f64> {
    if alpha.abs() < ALPHA_LOG_LIMIT {
        return Some(t.exp_m1());
    }
    let base = 1.0 + alpha * t;
    if base <= 0.0 {
        return None;
    }
    Some((base.ln() / alpha).exp_m1())
}

impl GeneratingFamily {
    pub fn identity() -> Self {
        GeneratingFamily {
            kind: FamilyKind::Identity,
            active: Vec::new(),
        }
    }

    /// Two-sided power family with the given `[upper, lower]` active flags.
    pub fn czado(active: [bool; 2]) -> Self {
        GeneratingFamily {
            kind: FamilyKind::CzadoTwoSided,
            active: active.to_vec(),
        }
    }

    pub fn kind(&self) -> FamilyKind {
        self.kind
    }

    /// Number of family parameters, active or not.
    pub fn param_dim(&self) -> usize {
        self.kind.param_dim()
    }

    pub fn active_mask(&self) -> &[bool] {
        &self.active
    }

    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    pub fn set_active(&mut self, index: usize, active: bool) {
        self.active[index] = active;
    }

    /// Evaluate `G(alpha, eta)`; `alpha` has length [`param_dim`](Self::param_dim).
    pub fn eval(&self, alpha: &[f64], eta: f64) -> f64 {
        match self.kind {
            FamilyKind::Identity => eta,
            FamilyKind::CzadoTwoSided => {
                if eta >= 0.0 {
                    power_transform(alpha[0], eta)
                } else {
                    -power_transform(alpha[1], -eta)
                }
            }
        }
    }

    /// Analytic `(dG/deta, dG/dalpha)`; the second entry has length
    /// [`param_dim`](Self::param_dim) regardless of the active mask.
    pub fn derivatives(&self, alpha: &[f64], eta: f64) -> (f64, Vec<f64>) {
        let (de, da) = self.derivatives_array(alpha, eta);
        (de, da[..self.param_dim()].to_vec())
    }

    pub(crate) fn derivatives_array(&self, alpha: &[f64], eta: f64) -> (f64, [f64; MAX_FAMILY_PARAMS]) {
        match self.kind {
            FamilyKind::Identity => (1.0, [0.0; MAX_FAMILY_PARAMS]),
            FamilyKind::CzadoTwoSided => {
                if eta >= 0.0 {
                    (
                        power_transform_deta(alpha[0], eta),
                        [power_transform_dalpha(alpha[0], eta), 0.0],
                    )
                } else {
                    (
                        power_transform_deta(alpha[1], -eta),
                        [0.0, -power_transform_dalpha(alpha[1], -eta)],
                    )
                }
            }
        }
    }

    /// Full parameter vector of this family, reading active values from
    /// `active_values` starting at `*cursor`.
    pub(crate) fn fill_alpha(&self, active_values: &[f64], cursor: &mut usize) -> [f64; MAX_FAMILY_PARAMS] {
        let mut out = [1.0; MAX_FAMILY_PARAMS];
        for (slot, &on) in out.iter_mut().zip(&self.active) {
            if on {
                *slot = active_values[*cursor];
                *cursor += 1;
            }
        }
        out
    }

    /// Solve `G(alpha, eta) = t` for `eta`. `None` when `t` lies outside the
    /// range of `G(alpha, .)`.
    pub fn inverse(&self, alpha: &[f64], t: f64) -> Option<f64> {
        match self.kind {
            FamilyKind::Identity => Some(t),
            FamilyKind::CzadoTwoSided => {
                if t >= 0.0 {
                    power_transform_inv(alpha[0], t)
                } else {
                    power_transform_inv(alpha[1], -t).map(|e| -e)
                }
            }
        }
    }

    // `1 + alpha * t` on the branch selected by the sign of t, for error reports.
    fn inverse_base(&self, alpha: &[f64], t: f64) -> f64 {
        match self.kind {
            FamilyKind::Identity => 1.0,
            FamilyKind::CzadoTwoSided => {
                if t >= 0.0 {
                    1.0 + alpha[0] * t
                } else {
                    1.0 - alpha[1] * t
                }
            }
        }
    }
}

/// Where the generating families are standardized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Standardization {
    /// `G(alpha, 0) = 0` and `G'(alpha, 0) = 1` for every alpha.
    AtZero,
    /// Each family is re-centred on its category intercept:
    /// `G_c(alpha, eta) = beta0 + G(alpha, eta - beta0)`.
    AtIntercepts,
}

/// Derivatives of the transformed predictors `G` (equivalently the natural
/// parameters) at one predictor vector.
#[derive(Debug, Clone)]
pub struct TransformJacobian {
    pub value: Vec<f64>,
    /// Diagonal of `dG/deta`.
    pub d_eta: Vec<f64>,
    /// Diagonal of the explicit `dG/dbeta0` (zero in [`Standardization::AtZero`]).
    pub d_beta0: Vec<f64>,
    /// `q x r` derivative with respect to the active link parameters.
    pub d_alpha: DMatrix<f64>,
}

/// Jacobians of the inverse link `h`.
#[derive(Debug, Clone)]
pub struct LinkJacobians {
    pub dh_deta: DMatrix<f64>,
    pub dh_dalpha: DMatrix<f64>,
    /// Explicit dependence on the intercepts through the standardization.
    pub dh_dbeta0: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultinomialLink {
    families: Vec<GeneratingFamily>,
    standardization: Standardization,
    alpha: Vec<f64>,
}

impl MultinomialLink {
    /// New link with every active parameter at its identity value 1.
    pub fn new(families: Vec<GeneratingFamily>, standardization: Standardization) -> Self {
        let r = families.iter().map(GeneratingFamily::active_count).sum();
        MultinomialLink {
            families,
            standardization,
            alpha: vec![1.0; r],
        }
    }

    /// The multinomial logit with `q` categories.
    pub fn logit(q: usize) -> Self {
        Self::new(vec![GeneratingFamily::identity(); q], Standardization::AtZero)
    }

    pub fn q(&self) -> usize {
        self.families.len()
    }

    /// Number of active link parameters.
    pub fn r(&self) -> usize {
        self.alpha.len()
    }

    pub fn families(&self) -> &[GeneratingFamily] {
        &self.families
    }

    pub fn standardization(&self) -> Standardization {
        self.standardization
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn set_alpha(&mut self, alpha: &[f64]) -> Result<()> {
        if alpha.len() != self.alpha.len() {
            return Err(Error::Dimension(format!(
                "expected {} link parameters, got {}",
                self.alpha.len(),
                alpha.len()
            )));
        }
        self.alpha.copy_from_slice(alpha);
        Ok(())
    }

    pub fn with_alpha(&self, alpha: &[f64]) -> Result<Self> {
        let mut out = self.clone();
        out.set_alpha(alpha)?;
        Ok(out)
    }

    /// `(category, family parameter)` for each active parameter, in vector order.
    pub fn active_params(&self) -> Vec<(usize, usize)> {
        self.families
            .iter()
            .enumerate()
            .flat_map(|(j, fam)| {
                fam.active
                    .iter()
                    .enumerate()
                    .filter(|(_, &a)| a)
                    .map(move |(k, _)| (j, k))
            })
            .collect()
    }

    /// Copy of this link with `(category, parameter)` switched on or off.
    /// Existing active values are kept; a newly activated parameter starts at 1.
    pub fn with_param_active(&self, category: usize, param: usize, active: bool) -> Self {
        let mut full = self.full_alphas();
        let mut families = self.families.clone();
        families[category].set_active(param, active);
        if !active {
            full[category][param] = 1.0;
        }
        let alpha = families
            .iter()
            .enumerate()
            .flat_map(|(j, fam)| {
                let row = full[j].clone();
                fam.active
                    .iter()
                    .enumerate()
                    .filter(|(_, &a)| a)
                    .map(move |(k, _)| row[k])
                    .collect::<Vec<_>>()
            })
            .collect();
        MultinomialLink {
            families,
            standardization: self.standardization,
            alpha,
        }
    }

    /// Full per-family parameter vectors with inactive entries pinned at 1.
    pub fn full_alphas(&self) -> Vec<Vec<f64>> {
        let mut it = self.alpha.iter();
        self.families
            .iter()
            .map(|fam| {
                fam.active
                    .iter()
                    .map(|&a| if a { *it.next().unwrap() } else { 1.0 })
                    .collect()
            })
            .collect()
    }

    fn check_len(&self, v: &[f64], what: &str) {
        assert_eq!(v.len(), self.q(), "{what} must have one entry per category");
    }

    /// Standardized transform of the predictor: component `j` is
    /// `beta0_j + G_j(alpha_j, eta_j - beta0_j)` at intercepts and
    /// `G_j(alpha_j, eta_j)` at zero (where `beta0` is ignored).
    pub fn apply_standardization(&self, eta: &[f64], beta0: &[f64]) -> Vec<f64> {
        self.check_len(eta, "eta");
        let alphas = self.full_alphas();
        self.families
            .iter()
            .enumerate()
            .map(|(j, fam)| match self.standardization {
                Standardization::AtZero => fam.eval(&alphas[j], eta[j]),
                Standardization::AtIntercepts => beta0[j] + fam.eval(&alphas[j], eta[j] - beta0[j]),
            })
            .collect()
    }

    /// Category probabilities `h(alpha, eta)`; the dummy category gets the rest.
    pub fn h(&self, eta: &[f64], beta0: &[f64]) -> Vec<f64> {
        probabilities(&self.apply_standardization(eta, beta0))
    }

    /// Inverse link: the predictor at which `h` returns `pi`.
    pub fn g(&self, pi: &[f64], beta0: &[f64]) -> Result<Vec<f64>> {
        self.check_len(pi, "pi");
        let rest = 1.0 - pi.iter().sum::<f64>();
        if pi.iter().any(|&p| p <= 0.0) || rest <= 0.0 {
            return Err(Error::Validation(format!(
                "probabilities must be positive with sum below 1, got {pi:?}"
            )));
        }
        let alphas = self.full_alphas();
        let mut eta = Vec::with_capacity(self.q());
        for (j, fam) in self.families.iter().enumerate() {
            let t = (pi[j] / rest).ln();
            let shift = match self.standardization {
                Standardization::AtZero => 0.0,
                Standardization::AtIntercepts => beta0[j],
            };
            let centred = fam.inverse(&alphas[j], t - shift).ok_or(Error::InverseDomain {
                category: j,
                value: fam.inverse_base(&alphas[j], t - shift),
            })?;
            eta.push(centred + shift);
        }
        Ok(eta)
    }

    /// Value and derivatives of the standardized transform.
    pub fn transform_jacobian(&self, eta: &[f64], beta0: &[f64]) -> TransformJacobian {
        self.check_len(eta, "eta");
        let q = self.q();
        let alphas = self.full_alphas();
        let mut value = Vec::with_capacity(q);
        let mut d_eta = Vec::with_capacity(q);
        let mut d_beta0 = Vec::with_capacity(q);
        let mut d_alpha = DMatrix::zeros(q, self.r());
        let mut col = 0;
        for (j, fam) in self.families.iter().enumerate() {
            let (shift, centred) = match self.standardization {
                Standardization::AtZero => (0.0, eta[j]),
                Standardization::AtIntercepts => (beta0[j], eta[j] - beta0[j]),
            };
            let (de, da) = fam.derivatives(&alphas[j], centred);
            value.push(shift + fam.eval(&alphas[j], centred));
            d_eta.push(de);
            d_beta0.push(match self.standardization {
                Standardization::AtZero => 0.0,
                Standardization::AtIntercepts => 1.0 - de,
            });
            for (k, &active) in fam.active.iter().enumerate() {
                if active {
                    d_alpha[(j, col)] = da[k];
                    col += 1;
                }
            }
        }
        TransformJacobian {
            value,
            d_eta,
            d_beta0,
            d_alpha,
        }
    }

    /// Jacobians of `h` with respect to `eta`, the active link parameters and
    /// (explicitly, through the standardization) the intercepts.
    pub fn jacobians(&self, eta: &[f64], beta0: &[f64]) -> LinkJacobians {
        let tj = self.transform_jacobian(eta, beta0);
        let pi = probabilities(&tj.value);
        let cov = multinomial_covariance(&pi);
        LinkJacobians {
            dh_deta: &cov * DMatrix::from_diagonal(&tj.d_eta.clone().into()),
            dh_dalpha: &cov * &tj.d_alpha,
            dh_dbeta0: &cov * DMatrix::from_diagonal(&tj.d_beta0.clone().into()),
        }
    }

    /// Solve the constraint `G_j(x) = target_j` for the intercepts, given the
    /// non-intercept part `slopes_j = eta_j - beta0_j` of each predictor.
    pub fn solve_intercepts(&self, target: &[f64], slopes: &[f64]) -> Result<Vec<f64>> {
        let alphas = self.full_alphas();
        self.families
            .iter()
            .enumerate()
            .map(|(j, fam)| match self.standardization {
                Standardization::AtIntercepts => Ok(target[j] - fam.eval(&alphas[j], slopes[j])),
                Standardization::AtZero => {
                    fam.inverse(&alphas[j], target[j])
                        .map(|eta| eta - slopes[j])
                        .ok_or(Error::InverseDomain {
                            category: j,
                            value: fam.inverse_base(&alphas[j], target[j]),
                        })
                }
            })
            .collect()
    }
}

/// Multicategory logistic map from natural parameters to probabilities,
/// shifted by the maximum before exponentiation.
pub fn probabilities(theta: &[f64]) -> Vec<f64> {
    let m = theta.iter().copied().fold(0.0f64, f64::max);
    let e: Vec<f64> = theta.iter().map(|t| (t - m).exp()).collect();
    let denom = (-m).exp() + e.iter().sum::<f64>();
    e.into_iter().map(|v| v / denom).collect()
}

/// `log(1 + sum_j exp(theta_j))`, the cumulant function of the multinomial.
pub fn log_normalizer(theta: &[f64]) -> f64 {
    let m = theta.iter().copied().fold(0.0f64, f64::max);
    m + ((-m).exp() + theta.iter().map(|t| (t - m).exp()).sum::<f64>()).ln()
}

/// `diag(pi) - pi pi'`.
pub fn multinomial_covariance(pi: &[f64]) -> DMatrix<f64> {
    let q = pi.len();
    DMatrix::from_fn(q, q, |j, k| if j == k { pi[j] * (1.0 - pi[j]) } else { -pi[j] * pi[k] })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn czado() -> GeneratingFamily {
        GeneratingFamily::czado([true, true])
    }

    #[test]
    fn czado_examples() {
        let f = czado();
        assert_eq!(f.eval(&[1.0, 1.0], 2.5), 2.5);
        assert!((f.eval(&[2.0, 1.0], 1.0) - 1.5).abs() < 1e-15);
        assert!((f.eval(&[1.0, 1e-12], -1.0) + 2f64.ln()).abs() < 1e-15);
        assert!((f.eval(&[1e-9, 1.0], 3.0) - 4f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn czado_derivative_examples() {
        let f = czado();
        assert_eq!(f.derivatives(&[1.0, 1.0], 3.0).0, 1.0);
        assert!((f.derivatives(&[2.0, 1.0], 1.0).0 - 2.0).abs() < 1e-15);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let f = czado();
        let h = 1e-6;
        for &a1 in &[-2.5, -0.7, 0.0, 5e-5, 0.35, 1.0, 2.0] {
            for &a2 in &[-2.9, -0.3, 3e-6, 0.57, 1.0, 2.5] {
                for &eta in &[-4.0, -1.0, -0.2, 0.3, 1.0, 6.0] {
                    let a = [a1, a2];
                    let (de, da) = f.derivatives(&a, eta);
                    let fd_eta = (f.eval(&a, eta + h) - f.eval(&a, eta - h)) / (2.0 * h);
                    assert!((de - fd_eta).abs() <= 1e-6 * de.abs().max(1.0), "{a:?} {eta}");
                    for k in 0..2 {
                        let mut up = a;
                        let mut dn = a;
                        up[k] += h;
                        dn[k] -= h;
                        let fd = (f.eval(&up, eta) - f.eval(&dn, eta)) / (2.0 * h);
                        assert!((da[k] - fd).abs() <= 1e-6 * da[k].abs().max(1.0), "{a:?} {eta} {k}");
                    }
                }
            }
        }
    }

    #[test]
    fn standardization_example() {
        let mut link = MultinomialLink::new(vec![czado(), czado()], Standardization::AtIntercepts);
        link.set_alpha(&[2.0, 1.0, 1.0, 1.0]).unwrap();
        let out = link.apply_standardization(&[2.0, 0.0], &[1.0, -1.0]);
        assert!((out[0] - 2.5).abs() < 1e-15);
        assert!(out[1].abs() < 1e-15);
    }

    #[test]
    fn logit_at_origin() {
        let link = MultinomialLink::logit(2);
        let pi = link.h(&[0.0, 0.0], &[0.0, 0.0]);
        assert!((pi[0] - 1.0 / 3.0).abs() < 1e-15 && (pi[1] - 1.0 / 3.0).abs() < 1e-15);
        let eta = link.g(&pi, &[0.0, 0.0]).unwrap();
        assert!(eta[0].abs() < 1e-14 && eta[1].abs() < 1e-14);
        let jac = link.jacobians(&[0.0, 0.0], &[0.0, 0.0]);
        let expected = DMatrix::from_row_slice(2, 2, &[2.0 / 9.0, -1.0 / 9.0, -1.0 / 9.0, 2.0 / 9.0]);
        assert!((jac.dh_deta - expected).amax() < 1e-15);
        assert_eq!(jac.dh_dalpha.ncols(), 0);
    }

    #[test]
    fn masked_parameter_has_no_column() {
        let link = MultinomialLink::new(
            vec![
                GeneratingFamily::czado([true, false]),
                GeneratingFamily::czado([false, false]),
            ],
            Standardization::AtZero,
        );
        assert_eq!(link.r(), 1);
        assert_eq!(link.jacobians(&[0.5, -0.5], &[0.0, 0.0]).dh_dalpha.ncols(), 1);
        assert_eq!(link.full_alphas(), vec![vec![1.0, 1.0], vec![1.0, 1.0]]);
    }

    #[test]
    fn inverse_domain_error() {
        // alpha = -1 on the upper tail bounds G above by 1.
        let link = MultinomialLink::new(vec![GeneratingFamily::czado([true, false])], Standardization::AtZero)
            .with_alpha(&[-1.0])
            .unwrap();
        let err = link.g(&[0.9], &[0.0]).unwrap_err();
        assert!(matches!(err, Error::InverseDomain { category: 0, .. }));
    }

    #[test]
    fn activation_keeps_values() {
        let link = MultinomialLink::new(
            vec![
                GeneratingFamily::czado([true, false]),
                GeneratingFamily::czado([false, false]),
            ],
            Standardization::AtIntercepts,
        )
        .with_alpha(&[0.4])
        .unwrap();
        let wider = link.with_param_active(1, 1, true);
        assert_eq!(wider.alpha(), &[0.4, 1.0]);
        assert_eq!(wider.active_params(), vec![(0, 0), (1, 1)]);
        let narrower = wider.with_param_active(0, 0, false);
        assert_eq!(narrower.alpha(), &[1.0]);
    }
}
