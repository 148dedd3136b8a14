//! Joint percentiles and their confidence regions.
//!
//! A percentile is a covariate setting `x` at which the fitted category
//! probabilities equal a target vector `pi0`. Three regions are offered:
//!
//! * [`RegionMethod::Conservative`]: per-category bounds on the predictor at
//!   the estimated percentile, combined by Boole's inequality and mapped to
//!   probability bounds `P_L <= h(alpha_hat, eta_hat(x)) <= P_U`.
//! * [`RegionMethod::LikelihoodRatio`]: points whose constrained fit is not
//!   rejected by the deviance difference.
//! * [`RegionMethod::ScoreTest`]: points not rejected by the intercept-block
//!   score statistic at the constrained fit.

mod box_opt;
mod constrained;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use log::debug;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use crate::special::chi2_quantile;
pub use box_opt::{box_optimize, BoxExtrema, BoxOptOptions};
pub use constrained::{
    constrained_fit, constrained_statistics, intercept_score_statistic, target_theta, ConstrainedStatistics,
};

use crate::error::{Error, Result};
use crate::fitting::{FitOptions, FitResult};
use crate::model::{Dataset, ModelSpec, Term};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PercentileQuery {
    pub pi0: Vec<f64>,
    /// Overall significance level.
    pub tau_prime: f64,
    /// `(lo, hi)` per covariate, used for tracing.
    pub window: Vec<(f64, f64)>,
    /// Covariance used for the conservative predictor bounds.
    pub covariance_scale: CovarianceScale,
}

/// Scaling of the regression covariance in the conservative bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceScale {
    /// Inverse expected information divided by the total number of trials
    /// `N`, i.e. the inverse information is read as the covariance of
    /// `sqrt(N) (beta_hat - beta)`.
    #[default]
    PerTrial,
    /// Inverse expected information as is.
    InverseInformation,
}

impl FromStr for CovarianceScale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "per_trial" => Ok(CovarianceScale::PerTrial),
            "inverse_information" => Ok(CovarianceScale::InverseInformation),
            other => Err(Error::Validation(format!("unknown covariance scale `{other}`"))),
        }
    }
}

impl CovarianceScale {
    pub fn key(self) -> &'static str {
        match self {
            CovarianceScale::PerTrial => "per_trial",
            CovarianceScale::InverseInformation => "inverse_information",
        }
    }
}

impl PercentileQuery {
    pub fn new(pi0: Vec<f64>) -> Self {
        PercentileQuery {
            pi0,
            tau_prime: 0.05,
            window: vec![(-1.0, 1.0), (-0.7132, 1.2868)],
            covariance_scale: CovarianceScale::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        target_theta(&self.pi0)?;
        if !(self.tau_prime > 0.0 && self.tau_prime < 1.0) {
            return Err(Error::Validation(format!(
                "tau_prime must lie in (0, 1), got {}",
                self.tau_prime
            )));
        }
        if let Some((lo, hi)) = self
            .window
            .iter()
            .find(|(lo, hi)| lo.partial_cmp(hi) != Some(std::cmp::Ordering::Less))
        {
            return Err(Error::Validation(format!("empty window [{lo}, {hi}]")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RegionMethod {
    Conservative,
    LikelihoodRatio,
    ScoreTest,
}

impl RegionMethod {
    pub const ALL: [RegionMethod; 3] = [
        RegionMethod::Conservative,
        RegionMethod::LikelihoodRatio,
        RegionMethod::ScoreTest,
    ];

    /// Short name used in file names and configuration.
    pub fn key(self) -> &'static str {
        match self {
            RegionMethod::Conservative => "conservative",
            RegionMethod::LikelihoodRatio => "lr",
            RegionMethod::ScoreTest => "score",
        }
    }
}

impl fmt::Display for RegionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for RegionMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "conservative" => Ok(RegionMethod::Conservative),
            "lr" | "likelihood_ratio" | "likelihood-ratio" => Ok(RegionMethod::LikelihoodRatio),
            "score" | "score_test" | "score-test" => Ok(RegionMethod::ScoreTest),
            other => Err(Error::Validation(format!("unknown region method `{other}`"))),
        }
    }
}

/// Solution of `eta(x) = g(alpha_hat, pi0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Percentile {
    pub x: Vec<f64>,
    /// Predictor values required at the percentile.
    pub eta: Vec<f64>,
}

/// Solve `f_j(x) beta_j = g_j(alpha_hat, pi0)` for `x`.
///
/// Models linear in the covariates are solved directly (least squares with a
/// consistency check when there are more categories than covariates).
/// Models with product terms need as many covariates as categories and are
/// solved by Newton's method started at the solution of the linear part.
pub fn solve_percentile(fit: &FitResult, spec: &ModelSpec, pi0: &[f64]) -> Result<Percentile> {
    let q = spec.q();
    if pi0.len() != q {
        return Err(Error::Dimension(format!(
            "pi0 has {} entries, model has {q} categories",
            pi0.len()
        )));
    }
    let beta = &fit.delta.beta;
    let eta = fit.link.g(pi0, &spec.intercepts(beta))?;
    let k = spec.covariates_used();
    if k == 0 {
        return Err(Error::Underdetermined {
            unknowns: 0,
            equations: q,
        });
    }

    // Linear part: A x = b.
    let offsets = spec.offsets();
    let mut a = DMatrix::zeros(q, k);
    let mut b = DVector::from_vec(eta.clone());
    let mut nonlinear = false;
    for (j, &off) in offsets.iter().enumerate() {
        for (m, term) in spec.terms()[j].iter().enumerate() {
            match term {
                Term::Intercept => b[j] -= beta[off + m],
                Term::Covariate(i) => a[(j, *i)] += beta[off + m],
                Term::Product(..) => nonlinear = true,
            }
        }
    }

    if nonlinear {
        if k != q {
            return Err(Error::Underdetermined {
                unknowns: k,
                equations: q,
            });
        }
        let start = a
            .clone()
            .lu()
            .solve(&b)
            .map(|v| v.as_slice().to_vec())
            .unwrap_or_else(|| vec![0.0; k]);
        let x = newton_percentile(spec, beta, &eta, start)?;
        return Ok(Percentile { x, eta });
    }

    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let rank = svd
        .singular_values
        .iter()
        .filter(|&&s| s > 1e-10 * smax.max(f64::MIN_POSITIVE))
        .count();
    if rank < k {
        return Err(Error::Underdetermined {
            unknowns: k,
            equations: rank,
        });
    }
    let x = svd
        .solve(&b, 1e-10 * smax)
        .map_err(|e| Error::NoSolution(e.to_string()))?;
    let residual = (&a * &x - &b).amax();
    if residual > 1e-8 * b.amax().max(1.0) {
        return Err(Error::NoSolution(format!(
            "{q} equations in {k} covariates are inconsistent (residual {residual:e})"
        )));
    }
    Ok(Percentile {
        x: x.as_slice().to_vec(),
        eta,
    })
}

fn newton_percentile(spec: &ModelSpec, beta: &[f64], eta: &[f64], start: Vec<f64>) -> Result<Vec<f64>> {
    let q = spec.q();
    let offsets = spec.offsets();
    let mut x = start;
    for _ in 0..100 {
        let pred = spec.linear_predictor(beta, &x);
        let resid = DVector::from_iterator(q, pred.iter().zip(eta).map(|(p, e)| p - e));
        if resid.amax() < 1e-12 * eta.iter().fold(1.0_f64, |m, v| m.max(v.abs())) {
            return Ok(x);
        }
        let jac = DMatrix::from_fn(q, x.len(), |j, i| {
            spec.terms()[j]
                .iter()
                .enumerate()
                .map(|(m, t)| beta[offsets[j] + m] * t.derivative(&x, i))
                .sum()
        });
        let step = jac
            .lu()
            .solve(&resid)
            .ok_or_else(|| Error::NoSolution("singular Jacobian in Newton iteration".into()))?;
        for (xi, s) in x.iter_mut().zip(step.iter()) {
            *xi -= s;
        }
    }
    Err(Error::NoSolution("Newton iteration did not converge".into()))
}

/// Quantities behind the conservative region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConservativeBounds {
    pub x0: Vec<f64>,
    /// `[L_j, U_j]` for the predictor of each category at `x0`.
    pub eta_intervals: Vec<(f64, f64)>,
    /// Per-category quantile `chi2(p_j, 1 - tau_prime / q)`.
    pub chi2: Vec<f64>,
    pub p_lower: Vec<f64>,
    pub p_upper: Vec<f64>,
}

/// Shared state for regions computed from one fit and one query.
pub struct RegionContext {
    pub data: Dataset,
    pub spec: ModelSpec,
    pub fit: FitResult,
    pub query: PercentileQuery,
    pub opts: FitOptions,
}

impl fmt::Debug for RegionContext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RegionContext")
            .field("query", &self.query)
            .field("deviance", &self.fit.deviance)
            .finish_non_exhaustive()
    }
}

/// A confidence region for the percentile of `pi0`.
#[derive(Debug, Clone)]
pub struct ConfidenceRegion {
    pub method: RegionMethod,
    /// Nominal coverage `1 - tau_prime`.
    pub level: f64,
    /// Rejection threshold of the statistic (LR and score regions).
    pub threshold: f64,
    /// Point estimate of the percentile, when it is unique.
    pub x0: Option<Vec<f64>>,
    pub conservative: Option<ConservativeBounds>,
    context: Arc<RegionContext>,
}

impl ConfidenceRegion {
    pub fn context(&self) -> &RegionContext {
        &self.context
    }

    /// Test statistic at `x` (LR and score regions), started from the reduced
    /// parameter vector `init` when given. Also returns the constrained
    /// optimum for warm starts.
    pub fn statistic(&self, x: &[f64], init: Option<&[f64]>) -> Result<ConstrainedStatistics> {
        let c = &self.context;
        constrained_statistics(&c.data, &c.spec, &c.fit, x, &c.query.pi0, init, &c.opts)
    }

    /// Predicted category probabilities `h(alpha_hat, eta_hat(x))`.
    pub fn fitted_probabilities(&self, x: &[f64]) -> Vec<f64> {
        let c = &self.context;
        let beta = &c.fit.delta.beta;
        c.fit
            .link
            .h(&c.spec.linear_predictor(beta, x), &c.spec.intercepts(beta))
    }

    /// Membership predicate. Points where the constrained fit fails are not
    /// members.
    pub fn contains(&self, x: &[f64]) -> bool {
        self.contains_from(x, None).0
    }

    fn contains_from(&self, x: &[f64], init: Option<&[f64]>) -> (bool, Option<Vec<f64>>) {
        match self.method {
            RegionMethod::Conservative => (self.conservative_member(x), None),
            RegionMethod::LikelihoodRatio | RegionMethod::ScoreTest => match self.statistic_retrying(x, init) {
                Some(s) => (self.accepts(&s), Some(s.phi)),
                None => (false, None),
            },
        }
    }

    fn conservative_member(&self, x: &[f64]) -> bool {
        let b = self.conservative.as_ref().expect("conservative bounds");
        self.fitted_probabilities(x)
            .iter()
            .zip(b.p_lower.iter().zip(&b.p_upper))
            .all(|(p, (lo, hi))| lo <= p && p <= hi)
    }

    fn accepts(&self, s: &ConstrainedStatistics) -> bool {
        match self.method {
            RegionMethod::LikelihoodRatio => s.lr <= self.threshold,
            RegionMethod::ScoreTest => s.score <= self.threshold,
            RegionMethod::Conservative => unreachable!(),
        }
    }

    /// Constrained statistics from a warm start, falling back to a cold
    /// start at the unconstrained estimate when that fails.
    fn statistic_retrying(&self, x: &[f64], init: Option<&[f64]>) -> Option<ConstrainedStatistics> {
        let outcome = match (self.statistic(x, init), init) {
            (Err(_), Some(_)) => self.statistic(x, None),
            (r, _) => r,
        };
        match outcome {
            Ok(s) => Some(s),
            Err(e) => {
                debug!("{} region: point {x:?} excluded: {e}", self.method);
                None
            }
        }
    }
}

fn context(
    data: &Dataset,
    fit: &FitResult,
    spec: &ModelSpec,
    query: &PercentileQuery,
    opts: &FitOptions,
) -> Result<Arc<RegionContext>> {
    query.validate()?;
    spec.check_dataset(data)?;
    if query.pi0.len() != spec.q() {
        return Err(Error::Dimension(format!(
            "pi0 has {} entries, model has {} categories",
            query.pi0.len(),
            spec.q()
        )));
    }
    Ok(Arc::new(RegionContext {
        data: data.clone(),
        spec: spec.clone(),
        fit: fit.clone(),
        query: query.clone(),
        opts: *opts,
    }))
}

/// Predictor bounds and probability box at the estimated percentile.
///
/// `total_trials` is the number of multinomial trials behind the fit, used
/// by [`CovarianceScale::PerTrial`].
pub fn conservative_bounds(
    fit: &FitResult,
    spec: &ModelSpec,
    query: &PercentileQuery,
    total_trials: u64,
    box_opts: &BoxOptOptions,
) -> Result<ConservativeBounds> {
    let percentile = solve_percentile(fit, spec, &query.pi0).map_err(|e| Error::NotSingleton(e.to_string()))?;
    let q = spec.q();
    let tau = query.tau_prime / q as f64;
    let beta = &fit.delta.beta;
    let beta0 = spec.intercepts(beta);
    let eta0 = spec.linear_predictor(beta, &percentile.x);
    let divisor = match query.covariance_scale {
        CovarianceScale::PerTrial => total_trials as f64,
        CovarianceScale::InverseInformation => 1.0,
    };
    let mut eta_intervals = Vec::with_capacity(q);
    let mut chi2 = Vec::with_capacity(q);
    for (j, (off, size)) in spec.offsets().into_iter().zip(spec.block_sizes()).enumerate() {
        let f = DVector::from_vec(spec.features(j, &percentile.x));
        let block = fit.covariance.view((off, off), (size, size));
        let var = f.dot(&(block * &f)) / divisor;
        let c = chi2_quantile(size, 1.0 - tau);
        let half = (var.max(0.0) * c).sqrt();
        eta_intervals.push((eta0[j] - half, eta0[j] + half));
        chi2.push(c);
    }
    let mut p_lower = Vec::with_capacity(q);
    let mut p_upper = Vec::with_capacity(q);
    for j in 0..q {
        let ext = box_optimize(|xi| fit.link.h(xi, &beta0)[j], &eta_intervals, box_opts);
        p_lower.push(ext.min);
        p_upper.push(ext.max);
    }
    Ok(ConservativeBounds {
        x0: percentile.x,
        eta_intervals,
        chi2,
        p_lower,
        p_upper,
    })
}

fn conservative_in(ctx: Arc<RegionContext>) -> Result<ConfidenceRegion> {
    let bounds = conservative_bounds(
        &ctx.fit,
        &ctx.spec,
        &ctx.query,
        ctx.data.total(),
        &BoxOptOptions::default(),
    )?;
    Ok(ConfidenceRegion {
        method: RegionMethod::Conservative,
        level: 1.0 - ctx.query.tau_prime,
        threshold: f64::NAN,
        x0: Some(bounds.x0.clone()),
        conservative: Some(bounds),
        context: ctx,
    })
}

fn test_region_in(ctx: Arc<RegionContext>, method: RegionMethod) -> ConfidenceRegion {
    let x0 = solve_percentile(&ctx.fit, &ctx.spec, &ctx.query.pi0).ok().map(|p| p.x);
    ConfidenceRegion {
        method,
        level: 1.0 - ctx.query.tau_prime,
        threshold: chi2_quantile(ctx.spec.q(), 1.0 - ctx.query.tau_prime),
        x0,
        conservative: None,
        context: ctx,
    }
}

/// Conservative region; needs a unique estimated percentile.
pub fn conservative_region(
    data: &Dataset,
    fit: &FitResult,
    spec: &ModelSpec,
    query: &PercentileQuery,
) -> Result<ConfidenceRegion> {
    conservative_in(context(data, fit, spec, query, &FitOptions::default())?)
}

/// Region of points not rejected by the likelihood-ratio test of the
/// percentile constraint, with threshold `chi2(q, 1 - tau_prime)`.
pub fn lr_region(
    data: &Dataset,
    fit: &FitResult,
    spec: &ModelSpec,
    query: &PercentileQuery,
    opts: &FitOptions,
) -> Result<ConfidenceRegion> {
    Ok(test_region_in(
        context(data, fit, spec, query, opts)?,
        RegionMethod::LikelihoodRatio,
    ))
}

/// Region of points not rejected by the intercept score statistic.
pub fn score_region(
    data: &Dataset,
    fit: &FitResult,
    spec: &ModelSpec,
    query: &PercentileQuery,
    opts: &FitOptions,
) -> Result<ConfidenceRegion> {
    Ok(test_region_in(
        context(data, fit, spec, query, opts)?,
        RegionMethod::ScoreTest,
    ))
}

/// The requested regions, sharing one context so that tracing fits each
/// constrained model only once.
pub fn percentile_regions(
    data: &Dataset,
    fit: &FitResult,
    spec: &ModelSpec,
    query: &PercentileQuery,
    opts: &FitOptions,
    methods: &[RegionMethod],
) -> Result<Vec<ConfidenceRegion>> {
    let ctx = context(data, fit, spec, query, opts)?;
    methods
        .iter()
        .map(|&m| match m {
            RegionMethod::Conservative => conservative_in(ctx.clone()),
            other => Ok(test_region_in(ctx.clone(), other)),
        })
        .collect()
}

/// Resolution of the boundary trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceGrid {
    /// Number of equally spaced values of the first covariate.
    pub n1: usize,
    /// Number of equally spaced values of the second covariate scanned per
    /// column.
    pub n2: usize,
}

impl Default for TraceGrid {
    fn default() -> Self {
        TraceGrid { n1: 21, n2: 1000 }
    }
}

/// Equally spaced points over `[lo, hi]`, endpoints included.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.5 * (lo + hi)],
        _ => (0..n)
            .map(|i| {
                if i + 1 == n {
                    hi
                } else {
                    lo + (hi - lo) * i as f64 / (n - 1) as f64
                }
            })
            .collect(),
    }
}

/// Smallest and largest member `x2` at one `x1`; `None` when the column has
/// no member.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryRecord {
    pub x1: f64,
    pub bounds: Option<(f64, f64)>,
}

fn check_window(window: &[(f64, f64)]) -> Result<()> {
    if window.len() != 2 {
        return Err(Error::Dimension(format!(
            "tracing needs exactly two covariates, window has {}",
            window.len()
        )));
    }
    Ok(())
}

fn column_record(x1: f64, x2s: &[f64], members: impl Iterator<Item = bool>) -> BoundaryRecord {
    let mut bounds: Option<(f64, f64)> = None;
    for (&x2, member) in x2s.iter().zip(members) {
        if member {
            bounds = Some(match bounds {
                None => (x2, x2),
                Some((lo, _)) => (lo, x2),
            });
        }
    }
    BoundaryRecord { x1, bounds }
}

fn map_columns<T, F>(x1s: &[f64], f: F) -> Vec<T>
where
    T: Send,
    F: Fn(f64) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        x1s.par_iter().map(|&x1| f(x1)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        x1s.iter().map(|&x1| f(x1)).collect()
    }
}

/// Spacing of the cold-started points used to pick where a column scan
/// begins.
const SEED_STRIDE: usize = 50;

/// Membership of the `x2s` column for regions sharing one context.
///
/// The constrained likelihood can have several local maxima, and a fit
/// started far from the data tends to land on a poor one. The scan therefore
/// begins at the point of least deviance among cold-started fits every
/// `SEED_STRIDE` points and continues outward in both directions, each fit
/// warm-started from its neighbour (cold-started again if that fails).
fn scan_column(group: &[&ConfidenceRegion], x1: f64, x2s: &[f64]) -> Vec<Vec<bool>> {
    let lead = group[0];
    let mut members = vec![vec![false; x2s.len()]; group.len()];
    if x2s.is_empty() {
        return members;
    }
    let mut seeds: Vec<usize> = (0..x2s.len()).step_by(SEED_STRIDE).collect();
    if seeds.last() != Some(&(x2s.len() - 1)) {
        seeds.push(x2s.len() - 1);
    }
    let start = seeds
        .iter()
        .filter_map(|&l| lead.statistic(&[x1, x2s[l]], None).ok().map(|s| (l, s.lr)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map_or(0, |(l, _)| l);

    let mut record = |l: usize, stat: &ConstrainedStatistics| {
        for (m, r) in members.iter_mut().zip(group) {
            m[l] = r.accepts(stat);
        }
    };
    let centre = lead.statistic_retrying(&[x1, x2s[start]], None);
    if let Some(s) = &centre {
        record(start, s);
    }
    let centre_phi = centre.map(|s| s.phi);
    let upward: Vec<usize> = (start + 1..x2s.len()).collect();
    let downward: Vec<usize> = (0..start).rev().collect();
    for pass in [upward, downward] {
        let mut warm = centre_phi.clone();
        for l in pass {
            let stat = lead.statistic_retrying(&[x1, x2s[l]], warm.as_deref());
            if let Some(s) = &stat {
                record(l, s);
            }
            warm = stat.map(|s| s.phi);
        }
    }
    members
}

/// Trace an arbitrary membership predicate over a two-covariate window.
pub fn trace_predicate<P>(member: P, window: &[(f64, f64)], grid: &TraceGrid) -> Result<Vec<BoundaryRecord>>
where
    P: Fn(&[f64]) -> bool + Sync + Send,
{
    check_window(window)?;
    let x1s = linspace(window[0].0, window[0].1, grid.n1);
    let x2s = linspace(window[1].0, window[1].1, grid.n2);
    Ok(map_columns(&x1s, |x1| {
        column_record(x1, &x2s, x2s.iter().map(|&x2| member(&[x1, x2])))
    }))
}

/// Boundary of one region.
pub fn trace_region(region: &ConfidenceRegion, window: &[(f64, f64)], grid: &TraceGrid) -> Result<Vec<BoundaryRecord>> {
    Ok(trace_regions(std::slice::from_ref(region), window, grid)?.remove(0))
}

/// Boundaries of several regions. LR and score regions that share a context
/// reuse each constrained fit. Output is ordered by the input and,
/// within a region, by `x1`.
pub fn trace_regions(
    regions: &[ConfidenceRegion],
    window: &[(f64, f64)],
    grid: &TraceGrid,
) -> Result<Vec<Vec<BoundaryRecord>>> {
    check_window(window)?;
    if let Some(r) = regions.iter().find(|r| r.context.spec.covariates_used() > 2) {
        return Err(Error::Dimension(format!(
            "{} region uses more than two covariates",
            r.method
        )));
    }
    let x1s = linspace(window[0].0, window[0].1, grid.n1);
    let x2s = linspace(window[1].0, window[1].1, grid.n2);

    // Group the test-based regions by shared context.
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (i, r) in regions.iter().enumerate() {
        if r.method == RegionMethod::Conservative {
            continue;
        }
        match groups
            .iter_mut()
            .find(|g| Arc::ptr_eq(&regions[g[0]].context, &r.context))
        {
            Some(g) => g.push(i),
            None => groups.push(vec![i]),
        }
    }

    let columns: Vec<Vec<BoundaryRecord>> = map_columns(&x1s, |x1| {
        let mut members = vec![vec![false; x2s.len()]; regions.len()];
        for (i, r) in regions.iter().enumerate() {
            if r.method == RegionMethod::Conservative {
                for (m, &x2) in members[i].iter_mut().zip(&x2s) {
                    *m = r.conservative_member(&[x1, x2]);
                }
            }
        }
        for g in &groups {
            let group: Vec<&ConfidenceRegion> = g.iter().map(|&i| &regions[i]).collect();
            for (&i, column) in g.iter().zip(scan_column(&group, x1, &x2s)) {
                members[i] = column;
            }
        }
        members
            .into_iter()
            .map(|m| column_record(x1, &x2s, m.into_iter()))
            .collect()
    });

    Ok((0..regions.len())
        .map(|i| columns.iter().map(|c| c[i]).collect())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fitting::fit;
    use crate::link::MultinomialLink;
    use crate::model::Observation;

    #[test]
    fn linspace_hits_endpoints() {
        let v = linspace(-0.7132, 1.2868, 1000);
        assert_eq!(v.len(), 1000);
        assert_eq!(v[0], -0.7132);
        assert_eq!(v[999], 1.2868);
        assert!((v[1] - v[0] - 2.0 / 999.0).abs() < 1e-15);
    }

    #[test]
    fn always_true_predicate_spans_window() {
        let w = [(-1.0, 1.0), (-0.5, 2.0)];
        let recs = trace_predicate(|_| true, &w, &TraceGrid { n1: 5, n2: 50 }).unwrap();
        assert_eq!(recs.len(), 5);
        for r in recs {
            assert_eq!(r.bounds, Some((-0.5, 2.0)));
        }
    }

    #[test]
    fn disc_predicate_matches_circle() {
        let w = [(-1.0, 1.0), (-1.0, 1.0)];
        let grid = TraceGrid { n1: 21, n2: 2001 };
        let radius = 0.8;
        let recs = trace_predicate(|x| x[0] * x[0] + x[1] * x[1] <= radius * radius, &w, &grid).unwrap();
        let step = 2.0 / 2000.0;
        for r in recs {
            let half2 = radius * radius - r.x1 * r.x1;
            if half2 < 0.0 {
                assert_eq!(r.bounds, None, "x1 = {}", r.x1);
                continue;
            }
            let (lo, hi) = r.bounds.unwrap();
            assert!((hi - half2.sqrt()).abs() <= step + 1e-12);
            assert!((lo + half2.sqrt()).abs() <= step + 1e-12);
        }
    }

    #[test]
    fn trace_rejects_wrong_dimension() {
        assert!(trace_predicate(|_| true, &[(0.0, 1.0)], &TraceGrid::default()).is_err());
    }

    fn binary_data() -> Dataset {
        let xs = [-2.0, -1.0, 0.0, 1.0, 2.0];
        let ys = [2, 4, 9, 13, 17];
        Dataset::new(
            xs.iter()
                .zip(ys)
                .map(|(&x, y)| Observation {
                    x: vec![x],
                    y: vec![y],
                    n: 20,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn binary_median_is_minus_ratio() {
        let data = binary_data();
        let spec = ModelSpec::first_order(1, 1);
        let f = fit(&data, &spec, &MultinomialLink::logit(1), &FitOptions::default()).unwrap();
        let p = solve_percentile(&f, &spec, &[0.5]).unwrap();
        let b = &f.delta.beta;
        assert!((p.x[0] + b[0] / b[1]).abs() < 1e-12);
    }

    #[test]
    fn underdetermined_and_inconsistent_systems() {
        // Two covariates, one category.
        let obs = (0..6)
            .map(|i| Observation {
                x: vec![i as f64 * 0.3 - 0.8, (i % 3) as f64 * 0.5 - 0.5],
                y: vec![1 + i as u32],
                n: 8,
            })
            .collect();
        let data = Dataset::new(obs).unwrap();
        let spec = ModelSpec::first_order(1, 2);
        let f = fit(&data, &spec, &MultinomialLink::logit(1), &FitOptions::default()).unwrap();
        assert!(matches!(
            solve_percentile(&f, &spec, &[0.5]),
            Err(Error::Underdetermined { unknowns: 2, .. })
        ));

        // One covariate, two categories with generic coefficients.
        let mut g = fit(
            &binary_data(),
            &ModelSpec::first_order(1, 1),
            &MultinomialLink::logit(1),
            &FitOptions::default(),
        )
        .unwrap();
        let spec2 = ModelSpec::first_order(2, 1);
        g.delta.beta = vec![0.1, 1.0, -0.3, 2.0];
        g.link = MultinomialLink::logit(2);
        assert!(matches!(
            solve_percentile(&g, &spec2, &[0.3, 0.3]),
            Err(Error::NoSolution(_))
        ));
    }

    #[test]
    fn product_terms_solved_by_newton() {
        let spec = ModelSpec::new(vec![
            vec![Term::Intercept, Term::Covariate(0), Term::Product(0, 1)],
            vec![Term::Intercept, Term::Covariate(1)],
        ])
        .unwrap();
        let mut f = fit(
            &binary_data(),
            &ModelSpec::first_order(1, 1),
            &MultinomialLink::logit(1),
            &FitOptions::default(),
        )
        .unwrap();
        f.link = MultinomialLink::logit(2);
        f.delta.beta = vec![0.2, 1.5, 0.7, -0.4, 2.0];
        let pi0 = [0.4, 0.35];
        let p = solve_percentile(&f, &spec, &pi0).unwrap();
        let pred = f.link.h(&spec.linear_predictor(&f.delta.beta, &p.x), &[0.2, -0.4]);
        for (a, b) in pred.iter().zip(pi0) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn method_names_round_trip() {
        for m in RegionMethod::ALL {
            assert_eq!(m.key().parse::<RegionMethod>().unwrap(), m);
        }
        assert!("nope".parse::<RegionMethod>().is_err());
    }

    #[test]
    fn query_validation() {
        let mut q = PercentileQuery::new(vec![0.75, 0.2]);
        assert!(q.validate().is_ok());
        q.tau_prime = 1.0;
        assert!(q.validate().is_err());
        assert!(PercentileQuery::new(vec![0.8, 0.3]).validate().is_err());
    }
}
