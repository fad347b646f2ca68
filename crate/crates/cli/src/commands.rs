//! One function per subcommand. Each reads the merged configuration,
//! runs the pipeline and writes its artifacts.

use serde::Serialize;
use spiralwave::complex_branch::{solve_perturbed, sweep_parameters, SolutionPoint};
use spiralwave::discretization::RadialProblem;
use spiralwave::eigensolver::{eigenfunction, spectrum_values};
use spiralwave::geometry::{validate_surface, SurfaceOfRevolution, ValidationReport};
use spiralwave::kinetics::{check_assumptions, AssumptionReport};
use spiralwave::pattern::{classify, frozen_locus, render_pattern, PatternClass};
use spiralwave::real_branch::{
    continue_branch, verify_branch, Branch, BranchPoint, ContinuationOptions, Termination,
    VerificationReport,
};

use crate::config::{parse_range, RunConfig};
use crate::output::{float, Csv, Outputs};
use crate::CliError;

fn problem(cfg: &RunConfig) -> Result<RadialProblem, CliError> {
    let surface = cfg.surface()?;
    let bc = cfg.boundary(&surface)?;
    RadialProblem::new(surface, bc, cfg.kinetics()?, cfg.m()?).map_err(CliError::from)
}

fn continue_to(
    p: &RadialProblem,
    cfg: &RunConfig,
    n: usize,
    lambda_max: f64,
) -> Result<Branch, CliError> {
    let e = eigenfunction(&p.surface, p.m, n, p.bc, &p.grid)?;
    if !(lambda_max > e.lambda) {
        return Err(CliError::Validation(format!(
            "lambda = {lambda_max} does not exceed the bifurcation value {} for m = {}, n = {n}",
            e.lambda, p.m
        )));
    }
    let opts = ContinuationOptions::new(cfg.step()?).with_sign(cfg.sign.unwrap_or(1.0));
    Ok(continue_branch(p, &e, lambda_max, opts)?)
}

/// Real branch point at `--lambda`, the base of every complex solve.
fn base_point(p: &RadialProblem, cfg: &RunConfig) -> Result<BranchPoint, CliError> {
    let lambda = cfg.require_lambda()?;
    let branch = continue_to(p, cfg, cfg.n(), lambda)?;
    match (&branch.termination, branch.points.last()) {
        (Termination::ReachedLambdaMax, Some(pt)) => Ok(pt.clone()),
        (Termination::Stalled { lambda: at, reason }, _) => Err(CliError::Solver(format!(
            "real branch stalled at λ = {at} before reaching {lambda}: {reason}"
        ))),
        _ => Err(CliError::Solver("real branch is empty".into())),
    }
}

fn profile_csv(p: &RadialProblem, u: &[num_complex::Complex64]) -> Csv {
    let mut csv = Csv::new(&["s", "Re_u", "Im_u"]);
    for (s, v) in p.nodes().iter().zip(u) {
        csv.floats(&[*s, v.re, v.im]);
    }
    csv
}

#[derive(Serialize)]
struct PointSummary<'a> {
    lambda: f64,
    eta: f64,
    b: &'a [f64],
    omega: f64,
    residual_norm: f64,
    gauge_residual: f64,
    freq_relation_residual: f64,
    iterations: usize,
    condition_estimate: f64,
    possible_secondary_bifurcation: bool,
}

fn summary(pt: &SolutionPoint) -> PointSummary<'_> {
    PointSummary {
        lambda: pt.lambda,
        eta: pt.eta,
        b: &pt.b,
        omega: pt.omega,
        residual_norm: pt.residual_norm,
        gauge_residual: pt.gauge_residual,
        freq_relation_residual: pt.freq_relation_residual,
        iterations: pt.iterations,
        condition_estimate: pt.condition_estimate,
        possible_secondary_bifurcation: pt.possible_secondary_bifurcation,
    }
}

fn solve_point(p: &RadialProblem, cfg: &RunConfig) -> Result<SolutionPoint, CliError> {
    let base = base_point(p, cfg)?;
    let b = cfg.parameters(&p.kinetics)?;
    Ok(solve_perturbed(p, &base, cfg.eta.unwrap_or(0.0), &b)?)
}

pub fn eig(cfg: &RunConfig, out: &mut Outputs) -> Result<(), CliError> {
    let surface = cfg.surface()?;
    let bc = cfg.boundary(&surface)?;
    let m = cfg.m()?;
    let values = spectrum_values(&surface, m, bc, cfg.nmax.unwrap_or(5))?;
    let mut csv = Csv::new(&["n", "lambda"]);
    for (n, l) in values.iter().enumerate() {
        csv.row(&[n.to_string(), float(*l)]);
    }
    out.csv(&format!("spectrum_m{m}.csv"), csv)
}

#[derive(Serialize)]
struct BranchReport<'a> {
    m: usize,
    n: usize,
    sigma_sign: f64,
    bifurcation_lambda: f64,
    curvature: f64,
    points: usize,
    termination: &'a Termination,
    verification: &'a VerificationReport,
}

pub fn branch(cfg: &RunConfig, out: &mut Outputs) -> Result<(), CliError> {
    let p = problem(cfg)?;
    let n = cfg.n();
    let lambda_max = cfg
        .lambda_max
        .or(cfg.lambda)
        .ok_or_else(|| CliError::Usage("--lambda-max is required".into()))?;
    let b = continue_to(&p, cfg, n, lambda_max)?;
    let report = verify_branch(&p, &b);
    let stem = format!("branch_m{}_n{n}", p.m);
    let mut csv = Csv::new(&["lambda", "max_u", "sigma_proj", "residual", "nodal_index"]);
    for q in &b.points {
        csv.row(&[
            float(q.lambda),
            float(q.max_u),
            float(q.sigma_proj),
            float(q.residual_norm),
            q.nodal_index.to_string(),
        ]);
    }
    out.csv(&format!("{stem}.csv"), csv)?;
    out.json(
        &format!("{stem}.json"),
        &BranchReport {
            m: b.m,
            n: b.n,
            sigma_sign: b.sigma_sign,
            bifurcation_lambda: b.bifurcation_lambda,
            curvature: b.curvature,
            points: b.points.len(),
            termination: &b.termination,
            verification: &report,
        },
    )?;
    let samples = cfg.samples.unwrap_or(0).min(b.points.len());
    for k in 0..samples {
        let idx = if samples == 1 {
            b.points.len() - 1
        } else {
            k * (b.points.len() - 1) / (samples - 1)
        };
        let q = &b.points[idx];
        let mut csv = Csv::new(&["s", "u"]);
        for (s, v) in p.nodes().iter().zip(&q.u) {
            csv.floats(&[*s, *v]);
        }
        out.csv(&format!("{stem}_profile_{k:03}.csv"), csv)?;
    }
    if !report.passed() {
        return Err(CliError::Validation(report.failures.join("; ")));
    }
    match (&b.termination, n) {
        (Termination::Stalled { lambda, reason }, 0) => Err(CliError::Solver(format!(
            "principal branch stalled at λ = {lambda}: {reason}"
        ))),
        _ => Ok(()),
    }
}

pub fn solve(cfg: &RunConfig, out: &mut Outputs) -> Result<(), CliError> {
    let p = problem(cfg)?;
    let pt = solve_point(&p, cfg)?;
    out.json("solution.json", &summary(&pt))?;
    out.csv("profile.csv", profile_csv(&p, &pt.u))
}

pub fn sweep(cfg: &RunConfig, out: &mut Outputs) -> Result<(), CliError> {
    let p = problem(cfg)?;
    let base = base_point(&p, cfg)?;
    let etas = parse_range(cfg.eta_range.as_deref().unwrap_or("-0.1:0.1:11"))?;
    let template = cfg.parameters(&p.kinetics)?;
    let firsts = parse_range(cfg.b_range.as_deref().unwrap_or("-0.1:0.1:11"))?;
    if template.is_empty() {
        return Err(CliError::Usage("kinetics has no parameter to sweep".into()));
    }
    let b_grid: Vec<Vec<f64>> = firsts
        .iter()
        .map(|&x| {
            let mut b = template.clone();
            b[0] = x;
            b
        })
        .collect();
    let sheet = sweep_parameters(&p, &base, &etas, &b_grid);
    let mut csv = Csv::new(&[
        "eta",
        "b",
        "omega",
        "residual_norm",
        "gauge_residual",
        "freq_relation_residual",
        "status",
    ]);
    for (i, eta) in etas.iter().enumerate() {
        for (j, b) in b_grid.iter().enumerate() {
            match sheet.get(i, j) {
                Some(pt) => {
                    let mut row: Vec<String> = [
                        *eta,
                        b[0],
                        pt.omega,
                        pt.residual_norm,
                        pt.gauge_residual,
                        pt.freq_relation_residual,
                    ]
                    .iter()
                    .map(|&v| float(v))
                    .collect();
                    row.push("converged".into());
                    csv.row(&row);
                    out.json(&format!("cell_{i:03}_{j:03}.json"), &summary(pt))?;
                }
                None => {
                    let nan = float(f64::NAN);
                    csv.row(&[
                        float(*eta),
                        float(b[0]),
                        nan.clone(),
                        nan.clone(),
                        nan.clone(),
                        nan,
                        "failed".into(),
                    ]);
                }
            }
        }
    }
    out.csv("sheet.csv", csv)?;
    if !sheet.failures.is_empty() {
        out.json("failures.json", &sheet.failures)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct Classification<'a> {
    label: &'static str,
    class: &'a PatternClass,
    point: PointSummary<'a>,
}

pub fn classify_cmd(cfg: &RunConfig, out: &mut Outputs) -> Result<(), CliError> {
    let p = problem(cfg)?;
    let pt = solve_point(&p, cfg)?;
    let class = classify(&p, &pt, cfg.omega_tol()?, cfg.p_tol()?);
    out.json(
        "classification.json",
        &Classification {
            label: class.label(),
            class: &class,
            point: summary(&pt),
        },
    )
}

pub fn locus(cfg: &RunConfig, out: &mut Outputs) -> Result<(), CliError> {
    let p = problem(cfg)?;
    let base = base_point(&p, cfg)?;
    let betas = parse_range(cfg.b_range.as_deref().unwrap_or("-0.08:0.08:17"))?;
    let l = frozen_locus(&p, &base, &betas);
    let mut csv = Csv::new(&["beta", "eta_tilde", "omega_residual"]);
    for q in &l.points {
        csv.floats(&[q.beta, q.eta_tilde, q.omega_residual]);
    }
    out.csv("locus.csv", csv)?;
    if l.failures.is_empty() {
        Ok(())
    } else {
        out.json("locus_failures.json", &l.failures)?;
        Err(CliError::Solver(format!(
            "{} locus samples failed",
            l.failures.len()
        )))
    }
}

pub fn render(cfg: &RunConfig, out: &mut Outputs) -> Result<(), CliError> {
    let p = problem(cfg)?;
    let pt = solve_point(&p, cfg)?;
    let t = cfg.t.unwrap_or(0.0);
    let curves = render_pattern(&p, &pt, t, cfg.points.unwrap_or(200));
    for (k, arm) in curves.arms.iter().enumerate() {
        let mut csv = Csv::new(&["t", "s", "x", "y", "z"]);
        for (q, s) in arm.iter().zip(&curves.s) {
            csv.floats(&[t, *s, q[0], q[1], q[2]]);
        }
        out.csv(&format!("arm_{k}.csv"), csv)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct Validation {
    surface: Option<ValidationReport>,
    kinetics: AssumptionReport,
    passed: bool,
}

pub fn validate(cfg: &RunConfig, out: &mut Outputs) -> Result<(), CliError> {
    let surface = match cfg.surface.as_deref() {
        // Build without the constructor's checks so the report can say
        // what is wrong.
        Some("custom") => Some(
            SurfaceOfRevolution::interpolated_unchecked(&cfg.profile_samples()?)
                .map_err(|e| CliError::Validation(e.to_string()))?,
        ),
        Some(_) => Some(cfg.surface()?),
        None => None,
    };
    let surface_report = surface.as_ref().map(validate_surface);
    let kinetics = check_assumptions(&cfg.kinetics()?);
    let passed = surface_report.as_ref().is_none_or(|r| r.passed()) && kinetics.all_passed();
    out.json(
        "validation.json",
        &Validation {
            surface: surface_report.clone(),
            kinetics,
            passed,
        },
    )?;
    if passed {
        Ok(())
    } else {
        let detail = surface_report
            .map(|r| r.failures.join("; "))
            .unwrap_or_default();
        Err(CliError::Validation(format!("validation failed {detail}")))
    }
}
