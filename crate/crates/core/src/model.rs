//! Data model, block-diagonal design and the scaled multinomial quantities.

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::link::{probabilities, MultinomialLink, Standardization};
use crate::special::ln_factorial;

/// One design point: covariates, category counts and the group size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub x: Vec<f64>,
    pub y: Vec<u32>,
    pub n: u32,
}

impl Observation {
    /// Count in the dummy (reference) category.
    pub fn dummy_count(&self) -> u32 {
        self.n - self.y.iter().sum::<u32>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Observation>", into = "Vec<Observation>")]
pub struct Dataset {
    observations: Vec<Observation>,
    q: usize,
    k: usize,
    /// Sum of the log multinomial coefficients.
    log_coefficient: f64,
}

impl TryFrom<Vec<Observation>> for Dataset {
    type Error = Error;

    fn try_from(observations: Vec<Observation>) -> Result<Self> {
        Dataset::new(observations)
    }
}

impl From<Dataset> for Vec<Observation> {
    fn from(data: Dataset) -> Self {
        data.observations
    }
}

impl Dataset {
    pub fn new(observations: Vec<Observation>) -> Result<Self> {
        let first = observations
            .first()
            .ok_or_else(|| Error::Validation("dataset has no observations".into()))?;
        let (q, k) = (first.y.len(), first.x.len());
        if q == 0 {
            return Err(Error::Validation("at least one response category is required".into()));
        }
        for (i, obs) in observations.iter().enumerate() {
            if obs.y.len() != q || obs.x.len() != k {
                return Err(Error::Validation(format!(
                    "observation {} has {} covariates and {} counts, expected {k} and {q}",
                    i + 1,
                    obs.x.len(),
                    obs.y.len()
                )));
            }
            if obs.n == 0 {
                return Err(Error::Validation(format!("observation {} has n = 0", i + 1)));
            }
            let total: u64 = obs.y.iter().map(|&c| c as u64).sum();
            if total > obs.n as u64 {
                return Err(Error::Validation(format!(
                    "observation {}: counts sum to {total}, exceeding n = {}",
                    i + 1,
                    obs.n
                )));
            }
            if obs.x.iter().any(|v| !v.is_finite()) {
                return Err(Error::Validation(format!(
                    "observation {} has a non-finite covariate",
                    i + 1
                )));
            }
        }
        let log_coefficient = observations
            .iter()
            .map(|o| log_multinomial_coefficient(&o.y, o.n))
            .sum();
        Ok(Dataset {
            observations,
            q,
            k,
            log_coefficient,
        })
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    /// Number of non-dummy response categories.
    pub fn q(&self) -> usize {
        self.q
    }

    /// Number of covariates.
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    /// Total number of trials `N`.
    pub fn total(&self) -> u64 {
        self.observations.iter().map(|o| o.n as u64).sum()
    }

    /// `sum_i log(n_i! / (y_i1! ... y_iq! (n_i - sum_j y_ij)!))`.
    pub fn log_coefficient(&self) -> f64 {
        self.log_coefficient
    }

    /// Copy with the covariate `index` multiplied by `factor`.
    pub fn rescale_covariate(&self, index: usize, factor: f64) -> Self {
        let mut out = self.clone();
        for obs in &mut out.observations {
            obs.x[index] *= factor;
        }
        out
    }
}

/// One column of a category's feature map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Term {
    Intercept,
    Covariate(usize),
    Product(usize, usize),
}

impl Term {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match *self {
            Term::Intercept => 1.0,
            Term::Covariate(i) => x[i],
            Term::Product(a, b) => x[a] * x[b],
        }
    }

    /// Partial derivative with respect to covariate `i`.
    pub fn derivative(&self, x: &[f64], i: usize) -> f64 {
        match *self {
            Term::Intercept => 0.0,
            Term::Covariate(c) => (c == i) as u8 as f64,
            Term::Product(a, b) => {
                let mut d = 0.0;
                if a == i {
                    d += x[b];
                }
                if b == i {
                    d += x[a];
                }
                d
            }
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Intercept => write!(f, "1"),
            Term::Covariate(i) => write!(f, "x{}", i + 1),
            Term::Product(a, b) => write!(f, "x{}*x{}", a + 1, b + 1),
        }
    }
}

impl std::str::FromStr for Term {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let covariate = |t: &str| -> Result<usize> {
            t.trim()
                .strip_prefix('x')
                .and_then(|n| n.parse::<usize>().ok())
                .filter(|&n| n >= 1)
                .map(|n| n - 1)
                .ok_or_else(|| Error::Validation(format!("unrecognised term `{s}`")))
        };
        if s == "1" {
            Ok(Term::Intercept)
        } else if let Some((a, b)) = s.split_once('*') {
            Ok(Term::Product(covariate(a)?, covariate(b)?))
        } else {
            Ok(Term::Covariate(covariate(s)?))
        }
    }
}

/// Per-category feature maps `f_j(x)`; the design `Z(x)` is their direct sum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    terms: Vec<Vec<Term>>,
}

impl ModelSpec {
    /// Every term list must start with the intercept and contain it once.
    pub fn new(terms: Vec<Vec<Term>>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::Validation("model needs at least one category".into()));
        }
        for (j, t) in terms.iter().enumerate() {
            if t.first() != Some(&Term::Intercept) || t.iter().filter(|&&x| x == Term::Intercept).count() != 1 {
                return Err(Error::Validation(format!(
                    "category {} must have the intercept as its first and only constant term",
                    j + 1
                )));
            }
        }
        Ok(ModelSpec { terms })
    }

    /// Intercept plus every covariate, for each of `q` categories.
    pub fn first_order(q: usize, k: usize) -> Self {
        let row: Vec<Term> = std::iter::once(Term::Intercept)
            .chain((0..k).map(Term::Covariate))
            .collect();
        ModelSpec { terms: vec![row; q] }
    }

    pub fn terms(&self) -> &[Vec<Term>] {
        &self.terms
    }

    pub fn q(&self) -> usize {
        self.terms.len()
    }

    /// Length of each category's coefficient block.
    pub fn block_sizes(&self) -> Vec<usize> {
        self.terms.iter().map(Vec::len).collect()
    }

    pub fn p(&self) -> usize {
        self.terms.iter().map(Vec::len).sum()
    }

    /// Start of each category's block in `beta`.
    pub fn offsets(&self) -> Vec<usize> {
        self.terms
            .iter()
            .scan(0, |acc, t| {
                let start = *acc;
                *acc += t.len();
                Some(start)
            })
            .collect()
    }

    /// Largest covariate index referenced plus one.
    pub fn covariates_used(&self) -> usize {
        self.terms
            .iter()
            .flatten()
            .map(|t| match *t {
                Term::Intercept => 0,
                Term::Covariate(i) => i + 1,
                Term::Product(a, b) => a.max(b) + 1,
            })
            .max()
            .unwrap_or(0)
    }

    pub fn check_dataset(&self, data: &Dataset) -> Result<()> {
        if data.q() != self.q() {
            return Err(Error::Dimension(format!(
                "model has {} categories, data has {}",
                self.q(),
                data.q()
            )));
        }
        if self.covariates_used() > data.k() {
            return Err(Error::Dimension(format!(
                "model references x{}, data has {} covariates",
                self.covariates_used(),
                data.k()
            )));
        }
        Ok(())
    }

    /// Feature vector `f_j(x)`.
    pub fn features(&self, category: usize, x: &[f64]) -> Vec<f64> {
        self.terms[category].iter().map(|t| t.eval(x)).collect()
    }

    /// `Z(x)`: a `q x p` block-diagonal matrix.
    pub fn design_row(&self, x: &[f64]) -> DMatrix<f64> {
        let mut z = DMatrix::zeros(self.q(), self.p());
        for (j, off) in self.offsets().into_iter().enumerate() {
            for (m, t) in self.terms[j].iter().enumerate() {
                z[(j, off + m)] = t.eval(x);
            }
        }
        z
    }

    /// `eta(x) = Z(x) beta`.
    pub fn linear_predictor(&self, beta: &[f64], x: &[f64]) -> Vec<f64> {
        self.offsets()
            .into_iter()
            .enumerate()
            .map(|(j, off)| {
                self.terms[j]
                    .iter()
                    .enumerate()
                    .map(|(m, t)| t.eval(x) * beta[off + m])
                    .sum()
            })
            .collect()
    }

    /// The intercepts `beta_{j0}`.
    pub fn intercepts(&self, beta: &[f64]) -> Vec<f64> {
        self.offsets().into_iter().map(|o| beta[o]).collect()
    }

    /// Index of each intercept in `beta`.
    pub fn intercept_indices(&self) -> Vec<usize> {
        self.offsets()
    }
}

/// `delta = (beta, alpha)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterVector {
    pub beta: Vec<f64>,
    pub alpha: Vec<f64>,
}

impl ParameterVector {
    pub fn new(beta: Vec<f64>, alpha: Vec<f64>) -> Self {
        ParameterVector { beta, alpha }
    }

    pub fn zeros(spec: &ModelSpec, link: &MultinomialLink) -> Self {
        ParameterVector {
            beta: vec![0.0; spec.p()],
            alpha: link.alpha().to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.beta.len() + self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.beta.iter().chain(&self.alpha).copied().collect()
    }

    pub fn from_slice(values: &[f64], p: usize) -> Self {
        ParameterVector {
            beta: values[..p].to_vec(),
            alpha: values[p..].to_vec(),
        }
    }
}

/// Where each named parameter lives in the stacked vector `delta`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterLayout {
    names: Vec<String>,
    p: usize,
}

impl ParameterLayout {
    pub fn new(spec: &ModelSpec, link: &MultinomialLink) -> Self {
        let mut names = Vec::with_capacity(spec.p() + link.r());
        for (j, terms) in spec.terms().iter().enumerate() {
            for m in 0..terms.len() {
                names.push(beta_name(j, m));
            }
        }
        for (j, k) in link.active_params() {
            names.push(alpha_name(j, k));
        }
        ParameterLayout { names, p: spec.p() }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

/// `beta{j}{m}` with 1-based category and 0-based term index, e.g. `beta10`.
pub fn beta_name(category: usize, term: usize) -> String {
    format!("beta{}{}", category + 1, term)
}

/// `alpha{j}{k}` with both indices 1-based, e.g. `alpha12` for the lower tail
/// of the first category.
pub fn alpha_name(category: usize, param: usize) -> String {
    format!("alpha{}{}", category + 1, param + 1)
}

/// Parse an `alpha{j}{k}` identifier into 0-based `(category, param)`.
pub fn parse_alpha_name(name: &str) -> Result<(usize, usize)> {
    let digits = name
        .strip_prefix("alpha")
        .filter(|d| d.len() == 2 && d.chars().all(|c| c.is_ascii_digit()))
        .ok_or_else(|| Error::Validation(format!("bad link parameter name `{name}`")))?;
    let j = digits[..1].parse::<usize>().unwrap();
    let k = digits[1..].parse::<usize>().unwrap();
    if j == 0 || k == 0 {
        return Err(Error::Validation(format!("bad link parameter name `{name}`")));
    }
    Ok((j - 1, k - 1))
}

/// Natural parameters `theta_j = log(pi_j / (1 - sum pi))` and cumulant
/// `b = -log(1 - sum pi)`.
pub fn natural_params(pi: &[f64]) -> (Vec<f64>, f64) {
    let rest = 1.0 - pi.iter().sum::<f64>();
    let theta = pi.iter().map(|p| (p / rest).ln()).collect();
    (theta, -rest.ln())
}

/// Natural parameters at `x` (the standardized transform of the predictor).
pub fn natural_parameters(spec: &ModelSpec, link: &MultinomialLink, beta: &[f64], x: &[f64]) -> Vec<f64> {
    let at_intercepts = link.standardization() == Standardization::AtIntercepts;
    let (mut off, mut cursor) = (0, 0);
    spec.terms()
        .iter()
        .zip(link.families())
        .map(|(terms, fam)| {
            let alpha = fam.fill_alpha(link.alpha(), &mut cursor);
            let eta: f64 = terms.iter().enumerate().map(|(m, t)| t.eval(x) * beta[off + m]).sum();
            let beta0 = beta[off];
            off += terms.len();
            if at_intercepts {
                beta0 + fam.eval(&alpha, eta - beta0)
            } else {
                fam.eval(&alpha, eta)
            }
        })
        .collect()
}

/// Natural parameters and their derivative with respect to `delta` at `x`.
///
/// In the intercept-standardized family the derivative includes the explicit
/// dependence of the transform on the current intercepts.
pub fn theta_and_jacobian(
    spec: &ModelSpec,
    link: &MultinomialLink,
    delta: &ParameterVector,
    x: &[f64],
) -> (Vec<f64>, DMatrix<f64>) {
    let (p, q) = (spec.p(), spec.q());
    let at_intercepts = link.standardization() == Standardization::AtIntercepts;
    let mut jac = DMatrix::zeros(q, p + link.r());
    let mut theta = Vec::with_capacity(q);
    let (mut off, mut cursor) = (0, 0);
    for (j, (terms, fam)) in spec.terms().iter().zip(link.families()).enumerate() {
        let first_col = p + cursor;
        let alpha = fam.fill_alpha(link.alpha(), &mut cursor);
        let mut eta = 0.0;
        for (m, t) in terms.iter().enumerate() {
            let f = t.eval(x);
            jac[(j, off + m)] = f;
            eta += f * delta.beta[off + m];
        }
        let beta0 = delta.beta[off];
        let centred = if at_intercepts { eta - beta0 } else { eta };
        let (de, da) = fam.derivatives_array(&alpha, centred);
        theta.push(fam.eval(&alpha, centred) + if at_intercepts { beta0 } else { 0.0 });
        for m in 0..terms.len() {
            jac[(j, off + m)] *= de;
        }
        if at_intercepts {
            jac[(j, off)] += 1.0 - de;
        }
        let mut col = first_col;
        for (k, &on) in fam.active_mask().iter().enumerate() {
            if on {
                jac[(j, col)] = da[k];
                col += 1;
            }
        }
        off += terms.len();
    }
    (theta, jac)
}

/// Mean `mu = h(alpha, Z(x) beta)` and `dmu/ddelta` (`q x (p + r)`).
pub fn mu_and_jacobian(
    spec: &ModelSpec,
    link: &MultinomialLink,
    delta: &ParameterVector,
    x: &[f64],
) -> (Vec<f64>, DMatrix<f64>) {
    let link = link
        .with_alpha(&delta.alpha)
        .expect("parameter vector does not match the link");
    let (theta, dtheta) = theta_and_jacobian(spec, &link, delta, x);
    let mu = probabilities(&theta);
    let cov = crate::link::multinomial_covariance(&mu);
    (mu, cov * dtheta)
}

/// Log of the multinomial probability of counts `y` (dummy count implied)
/// out of `n` trials, including the combinatorial constant.
pub fn scaled_multinomial_logpmf(y: &[u32], n: u32, pi: &[f64]) -> f64 {
    let dummy = n - y.iter().sum::<u32>();
    let rest = 1.0 - pi.iter().sum::<f64>();
    let mut out = log_multinomial_coefficient(y, n);
    for (&c, &p) in y.iter().zip(pi) {
        if c > 0 {
            out += c as f64 * p.ln();
        }
    }
    if dummy > 0 {
        out += dummy as f64 * rest.ln();
    }
    out
}

/// `log(n! / (y_1! ... y_q! (n - sum y)!))`.
pub fn log_multinomial_coefficient(y: &[u32], n: u32) -> f64 {
    let dummy = n - y.iter().sum::<u32>();
    ln_factorial(n as u64) - y.iter().map(|&c| ln_factorial(c as u64)).sum::<f64>() - ln_factorial(dummy as u64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::link::GeneratingFamily;

    #[test]
    fn design_row_is_block_diagonal() {
        let spec = ModelSpec::first_order(2, 2);
        let z = spec.design_row(&[0.0, 0.0]);
        assert_eq!(
            z.row(0).iter().copied().collect::<Vec<_>>(),
            vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0]
        );
        assert_eq!(
            z.row(1).iter().copied().collect::<Vec<_>>(),
            vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.0]
        );
        let z = spec.design_row(&[-1.0, -0.713]);
        assert_eq!(
            z.row(0).iter().take(3).copied().collect::<Vec<_>>(),
            vec![1.0, -1.0, -0.713]
        );
    }

    #[test]
    fn linear_predictor_matches_dot_product() {
        let spec = ModelSpec::first_order(2, 2);
        let beta = [4.5275, 2.9644, 2.5160, 2.8197, 3.6704, 4.7535];
        let eta = spec.linear_predictor(&beta, &[1.0, 1.287]);
        assert!((eta[0] - (4.5275 + 2.9644 + 2.5160 * 1.287)).abs() < 1e-12);
        let z = spec.design_row(&[1.0, 1.287]);
        let via_z = z * nalgebra::DVector::from_row_slice(&beta);
        assert!((via_z[1] - eta[1]).abs() < 1e-12);
    }

    #[test]
    fn model_requires_leading_intercept() {
        assert!(ModelSpec::new(vec![vec![Term::Covariate(0), Term::Intercept]]).is_err());
        assert!(ModelSpec::new(vec![vec![Term::Intercept, Term::Intercept]]).is_err());
        assert!(ModelSpec::new(vec![vec![Term::Intercept, Term::Product(0, 1)]]).is_ok());
    }

    #[test]
    fn term_parsing() {
        assert_eq!("1".parse::<Term>().unwrap(), Term::Intercept);
        assert_eq!("x2".parse::<Term>().unwrap(), Term::Covariate(1));
        assert_eq!("x1*x2".parse::<Term>().unwrap(), Term::Product(0, 1));
        assert!("z".parse::<Term>().is_err());
        assert!("x0".parse::<Term>().is_err());
    }

    #[test]
    fn natural_params_at_uniform() {
        let (theta, b) = natural_params(&[1.0 / 3.0, 1.0 / 3.0]);
        assert!(theta[0].abs() < 1e-15 && theta[1].abs() < 1e-15);
        assert!((b - 3f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn logpmf_examples() {
        assert!((scaled_multinomial_logpmf(&[1, 0], 1, &[0.5, 0.25]) - 0.5f64.ln()).abs() < 1e-15);
        let pi = [5.0 / 6.0, 1e-9];
        let expected = 6f64.ln() + 5.0 * (5.0f64 / 6.0).ln() + (1.0 - 5.0 / 6.0 - 1e-9f64).ln();
        assert!((scaled_multinomial_logpmf(&[5, 0], 6, &pi) - expected).abs() < 1e-12);
    }

    #[test]
    fn logit_jacobian_reduction() {
        let spec = ModelSpec::first_order(2, 2);
        let link = MultinomialLink::logit(2);
        let delta = ParameterVector::new(vec![0.3, -0.2, 0.5, -0.1, 0.4, 0.2], vec![]);
        let x = [0.5, -0.4];
        let (mu, d) = mu_and_jacobian(&spec, &link, &delta, &x);
        let cov = crate::link::multinomial_covariance(&mu);
        let expected = cov * spec.design_row(&x);
        assert!((d - expected).amax() < 1e-15);
    }

    #[test]
    fn layout_names_and_masking() {
        let spec = ModelSpec::first_order(2, 2);
        let link = MultinomialLink::new(
            vec![
                GeneratingFamily::czado([true, true]),
                GeneratingFamily::czado([false, false]),
            ],
            Standardization::AtIntercepts,
        );
        let layout = ParameterLayout::new(&spec, &link);
        assert_eq!(layout.len(), 8);
        assert_eq!(layout.names()[6], "alpha11");
        assert_eq!(layout.names()[7], "alpha12");
        assert_eq!(layout.index_of("beta20"), Some(3));
        let delta = ParameterVector::zeros(&spec, &link);
        assert_eq!(mu_and_jacobian(&spec, &link, &delta, &[0.1, 0.2]).1.ncols(), 8);
        assert_eq!(parse_alpha_name("alpha21").unwrap(), (1, 0));
        assert!(parse_alpha_name("alpha3").is_err());
    }
}
