//! Subcommand pipelines: each builds its reports and writes the requested
//! files into the output directory.

use std::fmt::Write as _;

use log::{info, warn};
use multilink::fitting::{fit, fit_grid_profile, variance_inflation, FitMethod, FitOptions, FitResult};
use multilink::link::MultinomialLink;
use multilink::model::{alpha_name, Dataset, ModelSpec};
use multilink::percentile::{
    percentile_regions, solve_percentile, trace_regions, BoundaryRecord, ConfidenceRegion, ConservativeBounds,
    RegionMethod,
};
use multilink::selection::{score_test_at, stepwise_link_selection, ScoreTestResult, StepwiseResult};

use crate::config::{FamilyChoice, FitMethodChoice, Format, RunConfig};
use crate::error::{CliError, CliResult};
use crate::report::{full, sig6, table, KvDoc};
use crate::svg;

/// Validated configuration together with the data and model it names.
#[derive(Debug)]
pub struct Session {
    pub config: RunConfig,
    pub data: Dataset,
    pub spec: ModelSpec,
    pub opts: FitOptions,
}

impl Session {
    pub fn new(config: RunConfig) -> CliResult<Self> {
        let data = config.load_data()?;
        let spec = config.model_spec(&data)?;
        let opts = config.fit.options();
        Ok(Session {
            config,
            data,
            spec,
            opts,
        })
    }

    fn write(&self, name: &str, contents: &str) -> CliResult<()> {
        let dir = &self.config.output.dir;
        std::fs::create_dir_all(dir).map_err(|e| CliError::Input(format!("cannot create {}: {e}", dir.display())))?;
        let path = dir.join(name);
        std::fs::write(&path, contents)
            .map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))?;
        info!("wrote {}", path.display());
        Ok(())
    }

    fn data_file(&self) -> String {
        self.config.data.file_name().map_or_else(
            || self.config.data.display().to_string(),
            |n| n.to_string_lossy().into_owned(),
        )
    }
}

fn family_key(family: FamilyChoice) -> &'static str {
    match family {
        FamilyChoice::Czado => "czado",
        FamilyChoice::Identity => "identity",
    }
}

fn standardization_key(config: &RunConfig) -> &'static str {
    match config.link.standardization {
        crate::config::StandardizationChoice::AtIntercepts => "at_intercepts",
        crate::config::StandardizationChoice::AtZero => "at_zero",
    }
}

fn active_names(link: &MultinomialLink) -> Vec<String> {
    link.active_params()
        .into_iter()
        .map(|(j, k)| alpha_name(j, k))
        .collect()
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub fit: FitResult,
    /// Present when the link parameters were chosen by stepwise selection.
    pub selection: Option<StepwiseResult>,
}

/// Fit the configured model, selecting link parameters first when
/// `link.active = "auto"`.
pub fn fit_model(s: &Session) -> CliResult<FitOutcome> {
    let base = s.config.link.build(s.spec.q())?;
    let (link, selection) = if s.config.link.is_auto() {
        let sel = stepwise_link_selection(&s.data, &s.spec, &base, &s.opts)?;
        (sel.link.clone(), Some(sel))
    } else {
        (base, None)
    };
    let result = match (s.config.fit.method, &selection) {
        (FitMethodChoice::Grid, _) if link.r() > 0 => {
            let axis = s.config.fit.grid_axis()?;
            fit_grid_profile(&s.data, &s.spec, &link, &vec![axis; link.r()], &s.opts)?
        }
        (_, Some(sel)) => sel.fit.clone(),
        _ => fit(&s.data, &s.spec, &link, &s.opts)?,
    };
    Ok(FitOutcome {
        fit: result.require_converged()?,
        selection,
    })
}

fn method_key(f: &FitResult) -> &'static str {
    match f.method {
        FitMethod::FisherScoring => "fisher_scoring",
        FitMethod::GridProfile => "grid_profile",
    }
}

fn fit_reports(s: &Session, outcome: &FitOutcome) -> (String, KvDoc, String) {
    let f = &outcome.fit;
    let se = f.standard_errors();
    let se_fixed = f.alpha_fixed_standard_errors();
    let inflation = variance_inflation(f, f);
    let p = f.p();
    let active = active_names(&f.link);

    let mut kv = KvDoc::new();
    kv.put("data.file", s.data_file());
    kv.put("data.rows", s.data.len());
    kv.put("data.trials", s.data.total());
    kv.put("link.family", family_key(s.config.link.family));
    kv.put("link.standardization", standardization_key(&s.config));
    kv.put("link.active", active.join(","));
    kv.put("fit.method", method_key(f));
    kv.put("fit.converged", f.converged);
    kv.put("fit.iterations", f.iterations);
    kv.num("fit.score_norm", f.score_norm);
    kv.num("fit.loglik", f.loglik);
    kv.num("fit.deviance", f.deviance);
    kv.num("fit.aic", f.aic);
    kv.put("fit.n_params", f.n_params());
    let estimates = f.delta.to_vec();
    for (i, name) in f.names.iter().enumerate() {
        kv.num(format!("param.{name}.estimate"), estimates[i]);
        kv.num(format!("param.{name}.se"), se[i]);
        if i < p {
            kv.num(format!("param.{name}.se_alpha_fixed"), se_fixed[i]);
            kv.num(format!("param.{name}.inflation"), inflation[i]);
        }
    }
    if let Some(sel) = &outcome.selection {
        selection_kv(&mut kv, "selection", sel);
    }
    for r in &f.trace {
        let i = r.iteration;
        kv.num(format!("iteration.{i}.loglik"), r.loglik);
        kv.num(format!("iteration.{i}.score_norm"), r.score_norm);
        kv.num(format!("iteration.{i}.step_scale"), r.step_scale);
    }

    let mut txt = String::new();
    let _ = writeln!(txt, "multilink fit report\n");
    let _ = writeln!(
        txt,
        "data            {} ({} rows, {} trials)",
        s.data_file(),
        s.data.len(),
        s.data.total()
    );
    let _ = writeln!(
        txt,
        "link            {}, {}; active: {}",
        family_key(s.config.link.family),
        standardization_key(&s.config),
        if active.is_empty() {
            "none".to_string()
        } else {
            active.join(" ")
        }
    );
    let _ = writeln!(
        txt,
        "method          {}, {} iterations, score max-norm {}",
        method_key(f),
        f.iterations,
        sig6(f.score_norm)
    );
    let _ = writeln!(txt, "log-likelihood  {}", sig6(f.loglik));
    let _ = writeln!(txt, "deviance        {}", sig6(f.deviance));
    let _ = writeln!(txt, "AIC             {}\n", sig6(f.aic));
    let rows: Vec<Vec<String>> = f
        .names
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let (fixed, infl) = if i < p {
                (sig6(se_fixed[i]), sig6(inflation[i]))
            } else {
                ("-".into(), "-".into())
            };
            vec![name.clone(), sig6(estimates[i]), sig6(se[i]), fixed, infl]
        })
        .collect();
    txt += &table(&["parameter", "estimate", "se", "se (alpha fixed)", "inflation"], &rows);
    if f.method == FitMethod::GridProfile {
        let _ = writeln!(
            txt,
            "\nLink parameters are grid values; their standard errors come from the joint inverse information at the grid optimum."
        );
    }
    if let Some(sel) = &outcome.selection {
        txt += "\n";
        txt += &selection_text(sel);
    }
    txt += "\niterations\n";
    let rows: Vec<Vec<String>> = f
        .trace
        .iter()
        .map(|r| {
            vec![
                r.iteration.to_string(),
                sig6(r.loglik),
                sig6(r.score_norm),
                sig6(r.step_scale),
            ]
        })
        .collect();
    txt += &table(&["iter", "log-likelihood", "score max-norm", "step"], &rows);

    let mut cov = String::from("parameter");
    for name in &f.names {
        cov += ",";
        cov += name;
    }
    cov += "\n";
    for (i, name) in f.names.iter().enumerate() {
        cov += name;
        for j in 0..f.names.len() {
            cov += ",";
            cov += &full(f.covariance[(i, j)]);
        }
        cov += "\n";
    }
    (txt, kv, cov)
}

fn selection_kv(kv: &mut KvDoc, prefix: &str, sel: &StepwiseResult) {
    kv.put(format!("{prefix}.selected"), sel.selected.join(","));
    kv.put(format!("{prefix}.mask"), mask_text(&sel.link));
    for (i, step) in sel.steps.iter().enumerate() {
        kv.put(format!("{prefix}.step.{i}.added"), step.added.as_deref().unwrap_or(""));
        kv.num(format!("{prefix}.step.{i}.aic"), step.aic);
        for (name, aic) in &step.candidates {
            kv.put(
                format!("{prefix}.step.{i}.candidate.{name}"),
                aic.map_or_else(|| "not_converged".to_string(), full),
            );
        }
    }
}

/// Active flags per category, e.g. `1,1;0,0`.
fn mask_text(link: &MultinomialLink) -> String {
    link.families()
        .iter()
        .map(|fam| {
            fam.active_mask()
                .iter()
                .map(|&a| if a { "1" } else { "0" })
                .collect::<Vec<_>>()
                .join(",")
        })
        .collect::<Vec<_>>()
        .join(";")
}

fn selection_text(sel: &StepwiseResult) -> String {
    let mut txt = String::new();
    let selected = if sel.selected.is_empty() {
        "none".to_string()
    } else {
        sel.selected.join(" ")
    };
    let _ = writeln!(txt, "stepwise selection (AIC): {selected}");
    let _ = writeln!(txt, "selected mask: {}", mask_text(&sel.link));
    let rows: Vec<Vec<String>> = sel
        .steps
        .iter()
        .enumerate()
        .map(|(i, step)| {
            let candidates = step
                .candidates
                .iter()
                .map(|(n, a)| format!("{n}:{}", a.map_or_else(|| "n/c".to_string(), sig6)))
                .collect::<Vec<_>>()
                .join(" ");
            vec![
                i.to_string(),
                step.added.clone().unwrap_or_else(|| "-".into()),
                sig6(step.aic),
                candidates,
            ]
        })
        .collect();
    txt += &table(&["step", "added", "AIC", "candidates"], &rows);
    txt
}

/// `fit`: estimates, standard errors, inflation ratios, iteration log and
/// covariance.
pub fn cmd_fit(s: &Session) -> CliResult<FitOutcome> {
    let outcome = fit_model(s)?;
    let (txt, kv, cov) = fit_reports(s, &outcome);
    let out = &s.config.output;
    if out.wants(Format::Txt) {
        s.write("report.txt", &txt)?;
    }
    if out.wants(Format::Kv) {
        s.write("report.kv", &kv.render())?;
    }
    if out.wants(Format::Csv) {
        s.write("covariance.csv", &cov)?;
    }
    print!("{txt}");
    Ok(outcome)
}

#[derive(Debug, Clone)]
pub struct LinkTestOutcome {
    pub null_deviance: f64,
    /// Single parameters, then each category's pair, then all parameters.
    pub tests: Vec<(String, ScoreTestResult)>,
    pub selection: StepwiseResult,
}

/// `test-link`: score tests of the link parameters against the
/// multicategory logit and forward stepwise selection.
pub fn cmd_test_link(s: &Session) -> CliResult<LinkTestOutcome> {
    if s.config.link.family != FamilyChoice::Czado {
        return Err(CliError::Input("test-link needs link.family = \"czado\"".into()));
    }
    let q = s.spec.q();
    let mut full_cfg = s.config.link.clone();
    full_cfg.active = crate::config::ActiveSet::Auto(crate::config::Auto::Auto);
    let full_link = full_cfg.build(q)?;
    let mut null_link = full_link.clone();
    for (j, k) in full_link.active_params() {
        null_link = null_link.with_param_active(j, k, false);
    }
    let null_fit = fit(&s.data, &s.spec, &null_link, &s.opts)?.require_converged()?;

    let mut groups: Vec<(String, Vec<String>)> = Vec::new();
    for (j, k) in full_link.active_params() {
        let name = alpha_name(j, k);
        groups.push((name.clone(), vec![name]));
    }
    for j in 0..q {
        groups.push((format!("category{}", j + 1), vec![alpha_name(j, 0), alpha_name(j, 1)]));
    }
    groups.push(("all".into(), active_names(&full_link)));
    let tests = groups
        .into_iter()
        .map(|(label, names)| Ok((label, score_test_at(&s.data, &s.spec, &null_fit, &names)?)))
        .collect::<CliResult<Vec<_>>>()?;
    let selection = stepwise_link_selection(&s.data, &s.spec, &full_link, &s.opts)?;

    let mut kv = KvDoc::new();
    kv.put("data.file", s.data_file());
    kv.put("link.standardization", standardization_key(&s.config));
    kv.num("null.deviance", null_fit.deviance);
    kv.num("null.aic", null_fit.aic);
    for (label, t) in &tests {
        kv.put(format!("test.{label}.params"), t.tested_params.join(","));
        kv.num(format!("test.{label}.statistic"), t.statistic);
        kv.put(format!("test.{label}.df"), t.df);
        kv.num(format!("test.{label}.p_value"), t.p_value);
    }
    selection_kv(&mut kv, "stepwise", &selection);

    let mut txt = String::new();
    let _ = writeln!(txt, "multilink link tests\n");
    let _ = writeln!(
        txt,
        "null model      multicategory logit, {}, deviance {}\n",
        standardization_key(&s.config),
        sig6(null_fit.deviance)
    );
    let rows: Vec<Vec<String>> = tests
        .iter()
        .map(|(label, t)| {
            vec![
                label.clone(),
                t.tested_params.join(" "),
                sig6(t.statistic),
                t.df.to_string(),
                sig6(t.p_value),
            ]
        })
        .collect();
    txt += "score tests of alpha = 1\n";
    txt += &table(&["test", "parameters", "statistic", "df", "p-value"], &rows);
    txt += "\n";
    txt += &selection_text(&selection);

    let out = &s.config.output;
    if out.wants(Format::Txt) {
        s.write("report.txt", &txt)?;
    }
    if out.wants(Format::Kv) {
        s.write("report.kv", &kv.render())?;
    }
    print!("{txt}");
    Ok(LinkTestOutcome {
        null_deviance: null_fit.deviance,
        tests,
        selection,
    })
}

/// `percentile`: the estimated percentile `x0`, printed only.
pub fn cmd_percentile(s: &Session) -> CliResult<Vec<f64>> {
    let outcome = fit_model(s)?;
    let query = s.config.percentile.query()?;
    let x0 = solve_percentile(&outcome.fit, &s.spec, &query.pi0)?.x;
    println!("x0 = ({})", x0.iter().map(|&v| sig6(v)).collect::<Vec<_>>().join(", "));
    Ok(x0)
}

#[derive(Debug, Clone)]
pub struct TracedRegion {
    pub method: RegionMethod,
    pub threshold: f64,
    pub boundary: Vec<BoundaryRecord>,
}

#[derive(Debug, Clone)]
pub struct RegionOutcome {
    pub x0: Option<Vec<f64>>,
    pub conservative: Option<ConservativeBounds>,
    pub traced: Vec<TracedRegion>,
    /// Methods that could not be computed, with the reason.
    pub failures: Vec<(RegionMethod, String)>,
}

/// `region`: traces each requested region, writing a boundary CSV per
/// method, an SVG overlay and a metadata document. A method that fails is
/// recorded in the metadata and does not stop the others.
pub fn cmd_region(s: &Session) -> CliResult<RegionOutcome> {
    let outcome = fit_model(s)?;
    let f = &outcome.fit;
    let pc = &s.config.percentile;
    let query = pc.query()?;
    let grid = pc.trace_grid()?;
    let methods = pc.methods();

    let mut regions: Vec<ConfidenceRegion> = Vec::new();
    let mut failures = Vec::new();
    let tests: Vec<RegionMethod> = methods
        .iter()
        .copied()
        .filter(|&m| m != RegionMethod::Conservative)
        .collect();
    if !tests.is_empty() {
        match percentile_regions(&s.data, f, &s.spec, &query, &s.opts, &tests) {
            Ok(r) => regions.extend(r),
            Err(e) => failures.extend(tests.iter().map(|&m| (m, e.to_string()))),
        }
    }
    if methods.contains(&RegionMethod::Conservative) {
        match percentile_regions(&s.data, f, &s.spec, &query, &s.opts, &[RegionMethod::Conservative]) {
            Ok(r) => regions.extend(r),
            Err(e) => failures.push((RegionMethod::Conservative, e.to_string())),
        }
    }
    regions.sort_by_key(|r| methods.iter().position(|&m| m == r.method));
    for (m, e) in &failures {
        warn!("{m} region failed: {e}");
    }

    let boundaries = trace_regions(&regions, &query.window, &grid)?;
    let x0 = solve_percentile(f, &s.spec, &query.pi0).ok().map(|p| p.x);
    let conservative = regions.iter().find_map(|r| r.conservative.clone());
    let traced: Vec<TracedRegion> = regions
        .iter()
        .zip(boundaries)
        .map(|(r, boundary)| TracedRegion {
            method: r.method,
            threshold: r.threshold,
            boundary,
        })
        .collect();

    let mut meta = KvDoc::new();
    meta.list("pi0", &query.pi0);
    meta.num("tau_prime", query.tau_prime);
    meta.put("covariance_scale", query.covariance_scale.key());
    for (i, (lo, hi)) in query.window.iter().enumerate() {
        meta.list(format!("window.x{}", i + 1), &[*lo, *hi]);
    }
    meta.put("trace.n1", grid.n1);
    meta.put("trace.n2", grid.n2);
    meta.num("fit.deviance", f.deviance);
    match &x0 {
        Some(x) => meta.list("x0", x),
        None => meta.put("x0", "none"),
    }
    for &m in &methods {
        let key = m.key();
        if let Some((_, e)) = failures.iter().find(|(fm, _)| *fm == m) {
            meta.put(format!("{key}.status"), format!("failed: {e}"));
            continue;
        }
        meta.put(format!("{key}.status"), "ok");
        let t = traced.iter().find(|t| t.method == m).expect("traced region");
        if m == RegionMethod::Conservative {
            let b = conservative.as_ref().expect("conservative bounds");
            for (j, (lo, hi)) in b.eta_intervals.iter().enumerate() {
                meta.list(format!("{key}.eta_interval.{}", j + 1), &[*lo, *hi]);
            }
            meta.list(format!("{key}.chi2"), &b.chi2);
            meta.list(format!("{key}.p_lower"), &b.p_lower);
            meta.list(format!("{key}.p_upper"), &b.p_upper);
        } else {
            meta.num(format!("{key}.threshold"), t.threshold);
        }
        let empty = t.boundary.iter().filter(|r| r.bounds.is_none()).count();
        meta.put(format!("{key}.empty_columns"), empty);
    }

    let out = &s.config.output;
    if out.wants(Format::Csv) {
        for t in &traced {
            s.write(&format!("region_{}.csv", t.method.key()), &boundary_csv(t))?;
        }
    }
    if out.wants(Format::Svg) {
        let series: Vec<(RegionMethod, &[BoundaryRecord])> =
            traced.iter().map(|t| (t.method, t.boundary.as_slice())).collect();
        s.write("regions.svg", &svg::render(&series, &query.window, x0.as_deref()))?;
    }
    if out.wants(Format::Kv) {
        s.write("region_meta.kv", &meta.render())?;
    }

    match &x0 {
        Some(x) => println!("x0 = ({})", x.iter().map(|&v| sig6(v)).collect::<Vec<_>>().join(", ")),
        None => println!("x0 not unique"),
    }
    for t in &traced {
        let nonempty = t.boundary.iter().filter(|r| r.bounds.is_some()).count();
        println!("{}: {nonempty}/{} columns non-empty", t.method, t.boundary.len());
    }
    for (m, e) in &failures {
        println!("{m}: failed: {e}");
    }
    Ok(RegionOutcome {
        x0,
        conservative,
        traced,
        failures,
    })
}

fn boundary_csv(t: &TracedRegion) -> String {
    let mut csv = String::from("method,x1,x2_lower,x2_upper,empty_flag\n");
    for r in &t.boundary {
        let _ = match r.bounds {
            Some((lo, hi)) => writeln!(csv, "{},{},{},{},0", t.method.key(), full(r.x1), full(lo), full(hi)),
            None => writeln!(csv, "{},{},,,1", t.method.key(), full(r.x1)),
        };
    }
    csv
}
