//! One function per subcommand. Each returns a [`Report`]; errors carry the
//! violated invariant and map to exit codes.

use serde_json::{json, Map, Value};
use wmink_core::domain::Domain;
use wmink_core::field::{named_field, named_weight};
use wmink_core::flow::{
    comparison_inequalities, flow_trace, radius_spread, riccati_geometric_residual, variational_formula_check,
    FlowState, FlowTrace, EXIT_MARGIN,
};
use wmink_core::minkowski::{hypothesis_audit, minkowski_report};
use wmink_core::neumann::{minkowski_via_reilly, verify_transform, HYPOTHESIS_TOLERANCE};
use wmink_core::quadrature::{ball_closed_forms, minkowski_formula_residual, WeightedIntegrals};
use wmink_core::reilly::{boundary_identity_residuals, reilly_breakdown};
use wmink_core::{Curvature, PolarPoint, SpaceForm};

use crate::error::{CliError, CliResult};
use crate::report::{Report, Verdict};
use crate::spec_file::{curvature_of, DomainSpecFile};

pub const FIELDS: &[&str] = &["V", "one", "rsq", "linear", "random-seeded"];
pub const WEIGHTS: &[&str] = &["V", "one", "random-seeded"];

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RunOptions {
    /// Overrides the file and environment resolution.
    pub resolution: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReillyOptions {
    pub field: String,
    pub weight: String,
    /// Defaults to the ambient curvature.
    pub kparam: Option<f64>,
    pub seed: u64,
}

impl Default for ReillyOptions {
    fn default() -> Self {
        ReillyOptions {
            field: "random-seeded".into(),
            weight: "V".into(),
            kparam: None,
            seed: 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowOptions {
    /// Defaults to 1, capped below the hemisphere exit time.
    pub tmax: Option<f64>,
    pub steps: usize,
}

impl Default for FlowOptions {
    fn default() -> Self {
        FlowOptions { tmax: None, steps: 40 }
    }
}

fn setup(command: &str, spec: &DomainSpecFile, run: &RunOptions) -> CliResult<(Domain, Report)> {
    let level = spec.level(run.resolution)?;
    let domain = spec.domain(Some(level))?;
    Ok((domain, Report::new(command, Some(spec.clone()), Some(level))))
}

fn integrals_json(w: &WeightedIntegrals) -> Value {
    json!({
        "weighted_volume": w.weighted_volume,
        "weighted_area": w.weighted_area,
        "weighted_mean_curv": w.weighted_mean_curv,
        "unweighted_volume": w.unweighted_volume,
        "unweighted_area": w.unweighted_area,
    })
}

fn check_name(invariant: &str, name: &str, allowed: &[&str]) -> CliResult<()> {
    if allowed.contains(&name) {
        Ok(())
    } else {
        Err(CliError::parse(
            invariant,
            format!("unknown name `{name}` (expected one of {})", allowed.join(", ")),
        ))
    }
}

pub fn check_reilly(spec: &DomainSpecFile, opts: &ReillyOptions, run: &RunOptions) -> CliResult<Report> {
    check_name("field_name", &opts.field, FIELDS)?;
    check_name("weight_name", &opts.weight, WEIGHTS)?;
    let (domain, mut report) = setup("check-reilly", spec, run)?;
    let space = *domain.space();
    let kparam = opts.kparam.unwrap_or(space.k());
    if !kparam.is_finite() {
        return Err(CliError::parse("kparam_finite", format!("K = {kparam}")));
    }
    let f = named_field(&opts.field, &space, opts.seed)?;
    let w = named_weight(&opts.weight, &space, opts.seed)?;
    let b = reilly_breakdown(&domain, f.as_ref(), w.as_ref(), kparam)?;
    let (r_grad, r_lap) = boundary_identity_residuals(&domain)?;
    report.parameters = Map::from_iter([
        ("field".to_string(), json!(opts.field)),
        ("weight".to_string(), json!(opts.weight)),
        ("kparam".to_string(), json!(kparam)),
        ("seed".to_string(), json!(opts.seed)),
    ]);
    report.results = json!({
        "lhs_bulk": b.lhs_bulk,
        "b_main": b.b_main,
        "b_vnu": b.b_vnu,
        "t_ricci": b.t_ricci,
        "t_zero": b.t_zero,
        "rhs": b.rhs(),
        "residual": b.residual,
        "relative_residual": b.relative_residual(),
        "boundary_identity_gradient": r_grad,
        "boundary_identity_laplacian": r_lap,
    });
    report.verdicts = vec![
        Verdict::at_most(
            "reilly_residual",
            b.relative_residual(),
            spec.tolerance("reilly_residual", 1e-6),
        ),
        Verdict::at_most(
            "boundary_identity_gradient",
            r_grad,
            spec.tolerance("boundary_identity_gradient", 1e-6),
        ),
        Verdict::at_most(
            "boundary_identity_laplacian",
            r_lap,
            spec.tolerance("boundary_identity_laplacian", 1e-6),
        ),
    ];
    Ok(report)
}

pub fn solve_neumann(spec: &DomainSpecFile, run: &RunOptions) -> CliResult<Report> {
    let (domain, mut report) = setup("solve-neumann", spec, run)?;
    let chain = minkowski_via_reilly(&domain)?;
    let sol = &chain.solution;
    let (fd_pde, fd_bc) = verify_transform(sol, &domain)?;
    report.results = json!({
        "c": sol.c,
        "degree": sol.degree,
        "basis_size": sol.basis_size,
        "gauge_multiplier": sol.gauge_multiplier,
        "gauge_integral": sol.gauge_integral,
        "pde_residual": sol.residuals.pde_interior,
        "bc_residual": sol.residuals.bc_boundary,
        "compatibility_residual": sol.residuals.compatibility,
        "fd_pde_residual": fd_pde,
        "fd_bc_residual": fd_bc,
        "chain": {
            "lhs": chain.lhs,
            "rhs": chain.rhs,
            "slack": chain.slack,
            "hessian_deficit": chain.hessian_deficit,
            "quadratic_form": chain.quadratic_form,
            "mean_curv_term": chain.grouped.mean_curv_term,
            "accounting_error": chain.accounting_error,
            "lhs_bulk": chain.breakdown.lhs_bulk,
            "reilly_residual": chain.breakdown.residual,
            "convexity_margin": chain.convexity_margin,
            "holder_ok": chain.holder_ok,
        },
    });
    let t = |name: &str, default: f64| spec.tolerance(name, default);
    report.verdicts = vec![
        Verdict::at_most("compatibility", sol.residuals.compatibility, t("compatibility", 1e-10)),
        Verdict::at_most("pde_residual", sol.residuals.pde_interior, t("pde_residual", 1e-5)),
        Verdict::at_most("bc_residual", sol.residuals.bc_boundary, t("bc_residual", 1e-5)),
        Verdict::at_most("fd_pde_residual", fd_pde, t("fd_pde_residual", 1e-5)),
        Verdict::at_most("fd_bc_residual", fd_bc, t("fd_bc_residual", 1e-5)),
        Verdict::at_most("gauge", sol.gauge_integral.abs(), t("gauge", 1e-10)),
        Verdict::holds("hypothesis", !chain.hypothesis_warning),
    ];
    if chain.hypothesis_warning {
        report.warnings.push(format!(
            "weighted convexity fails (margin {:.3e} < -{HYPOTHESIS_TOLERANCE:e}); the proof chain is recorded but not asserted",
            chain.convexity_margin
        ));
    } else {
        report.verdicts.extend([
            Verdict::at_least("slack_nonnegative", chain.slack, -t("slack_nonnegative", 1e-7)),
            Verdict::at_most("slack_accounting", chain.accounting_error, t("slack_accounting", 1e-6)),
            Verdict::holds("holder", chain.holder_ok),
        ]);
    }
    Ok(report)
}

pub fn minkowski(spec: &DomainSpecFile, run: &RunOptions) -> CliResult<Report> {
    let (domain, mut report) = setup("minkowski", spec, run)?;
    let rep = minkowski_report(&domain)?;
    let audit = hypothesis_audit(&domain)?;
    let formula = minkowski_formula_residual(domain.boundary());
    let n = domain.space().dim();
    let worst = |sel: &dyn Fn(&wmink_core::minkowski::AuditSample) -> f64| {
        audit.samples.iter().map(sel).fold(f64::INFINITY, f64::min)
    };
    report.results = json!({
        "integrals": integrals_json(&rep.integrals),
        "deficit": rep.deficit,
        "normalized_deficit": rep.normalized_deficit,
        "convexity_margin": rep.convexity_margin,
        "horoconvexity_margin": rep.horoconvexity_margin,
        "hypothesis_satisfied": rep.hypothesis_satisfied,
        "equality_flag": rep.equality_flag,
        "mean_curvature_spread": rep.mean_curvature_spread,
        "equality_tolerance": rep.tol,
        "minkowski_formula_residual": formula,
        "dimension": n,
        "audit": {
            "premise": audit.chain.premise,
            "premise_holds": audit.chain.premise_holds,
            "bridge": audit.chain.bridge,
            "bridge_holds": audit.chain.bridge_holds,
            "condition_holds": audit.chain.condition_holds,
            "consistent": audit.chain.consistent,
            "premise_violations": audit.premise_violations.len(),
            "bridge_violations": audit.bridge_violations.len(),
            "condition_violations": audit.condition_violations.len(),
            "min_principal_curvature": worst(&|s| s.min_curvature),
            "min_condition": worst(&|s| s.condition),
            "max_vnu_over_v": -worst(&|s| -s.vnu_over_v),
            "max_vnu_minus_v": audit.samples.iter().filter_map(|s| s.vnu_minus_v).reduce(f64::max),
        },
    });
    let t = |name: &str, default: f64| spec.tolerance(name, default);
    report.verdicts = vec![
        Verdict::holds("hypothesis", rep.hypothesis_satisfied),
        Verdict::holds("implication_chain", audit.chain.consistent),
        Verdict::at_most("minkowski_formula", formula, t("minkowski_formula", 1e-8)),
        Verdict::holds("equality_detection", rep.equality_flag == spec.is_ball()),
    ];
    if rep.hypothesis_satisfied {
        report.verdicts.insert(
            1,
            Verdict::at_least("theorem_inequality", rep.normalized_deficit, -t("theorem_inequality", 1e-7)),
        );
    } else {
        report
            .warnings
            .push("weighted convexity fails; the inequality is recorded but not asserted".into());
    }
    Ok(report)
}

/// `min(1, exit - 2 * margin)` on the hemisphere, 1 elsewhere.
pub fn default_tmax(state: &FlowState) -> f64 {
    match state.exit_time() {
        Some(exit) => (exit - 2.0 * EXIT_MARGIN).min(1.0),
        None => 1.0,
    }
}

fn ball_center(spec: &DomainSpecFile) -> Option<PolarPoint> {
    match spec.shape {
        crate::spec_file::ShapeSpec::Ball { d, .. } => Some(if spec.n == 2 {
            PolarPoint::planar(d, 0.0)
        } else {
            PolarPoint::spatial(d, 0.0, 0.0)
        }),
        _ => None,
    }
}

/// Flow trace as CSV with columns `t,A,S,MH,A_pow,concavity_residual`.
pub fn trace_csv(trace: &FlowTrace) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["t", "A", "S", "MH", "A_pow", "concavity_residual"])
        .expect("in-memory csv");
    for i in 0..trace.times.len() {
        w.write_record(
            [
                trace.times[i],
                trace.a[i],
                trace.s[i],
                trace.mh[i],
                trace.a_pow[i],
                trace.concavity_residuals[i],
            ]
            .map(|x| format!("{x:.17e}")),
        )
        .expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("ascii csv")
}

pub fn flow(spec: &DomainSpecFile, opts: &FlowOptions, run: &RunOptions) -> CliResult<(Report, FlowTrace)> {
    let (domain, mut report) = setup("flow", spec, run)?;
    let state = FlowState::initial(&domain)?;
    let tmax = match opts.tmax {
        Some(t) => t,
        None => {
            let t = default_tmax(&state);
            if t < 1.0 {
                report
                    .warnings
                    .push(format!("t_max capped at {t:.6} to stay {EXIT_MARGIN:e} inside the hemisphere"));
            }
            t
        }
    };
    let trace = flow_trace(&domain, tmax, opts.steps)?;
    let (var1, var2) = variational_formula_check(&trace)?;
    let cmp = comparison_inequalities(&trace)?;
    let max_conc = trace.concavity_residuals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let max_abs_conc = trace.concavity_residuals.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    let max_analytic = trace.concavity_analytic.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let max_abs_slack = cmp.slack.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    let riccati = if spec.n == 2 {
        Some(riccati_geometric_residual(&trace.final_state)?)
    } else {
        None
    };
    let spread = match ball_center(spec) {
        Some(c) => Some(radius_spread(&trace.final_state, &c)?),
        None => None,
    };
    report.parameters = Map::from_iter([
        ("tmax".to_string(), json!(tmax)),
        ("steps".to_string(), json!(opts.steps)),
    ]);
    report.results = json!({
        "t": trace.times,
        "A": trace.a,
        "S": trace.s,
        "MH": trace.mh,
        "A_pow": trace.a_pow,
        "concavity_residual": trace.concavity_residuals,
        "concavity_analytic": trace.concavity_analytic,
        "max_concavity_residual": max_conc,
        "max_concavity_analytic": max_analytic,
        "variational_first": var1,
        "variational_second": var2,
        "comparison": {
            "kind": cmp.kind,
            "extrapolated": cmp.extrapolated,
            "slack": cmp.slack,
            "min_slack": cmp.min_slack,
            "euclidean_limit": cmp.euclidean_limit,
            "unit_ball_constant": cmp.unit_ball_constant,
            "hyperbolic_ratio": cmp.hyperbolic_ratio,
        },
        "riccati_geometric_residual": riccati,
        "radius_spread": spread,
        "exit_time": state.exit_time(),
    });
    let t = |name: &str, default: f64| spec.tolerance(name, default);
    report.verdicts = vec![
        Verdict::at_most("concavity", max_conc, t("concavity", 1e-7)),
        Verdict::at_most("concavity_analytic", max_analytic, t("concavity_analytic", 1e-7)),
        Verdict::at_most("variational_first", var1, t("variational_first", 1e-5)),
        Verdict::at_most("variational_second", var2, t("variational_second", 1e-5)),
        Verdict::at_least("comparison", cmp.min_slack, -t("comparison", 1e-7)),
    ];
    if spec.is_ball() {
        report.verdicts.push(Verdict::at_most(
            "ball_equality",
            max_abs_conc.max(max_abs_slack),
            t("ball_equality", 1e-6),
        ));
    }
    if let Some(s) = spread {
        report
            .verdicts
            .push(Verdict::at_most("ball_preservation", s, t("ball_preservation", 1e-10)));
    }
    if let Some(r) = riccati {
        report
            .verdicts
            .push(Verdict::at_most("riccati_geometric", r, t("riccati_geometric", 1e-5)));
    }
    if let (Some(lim), Some(unit)) = (cmp.euclidean_limit, cmp.unit_ball_constant) {
        report.verdicts.push(Verdict::at_most(
            "euclidean_limit",
            (lim - unit).abs(),
            t("euclidean_limit", 1e-3),
        ));
    }
    Ok((report, trace))
}

pub fn ball_forms(space: &str, n: usize, big_r: f64) -> CliResult<Report> {
    let sf = SpaceForm::new(curvature_of(space)?, n).map_err(|e| match e {
        wmink_core::Error::Unsupported(d) => CliError::parse("dimension", d),
        other => other.into(),
    })?;
    if !(big_r > 0.0 && big_r.is_finite()) {
        return Err(CliError::parse("radius_positive", format!("R = {big_r}")));
    }
    if sf.curvature() == Curvature::Spherical && big_r >= sf.max_radius() {
        return Err(CliError::parse("hemisphere", format!("R = {big_r} must stay below pi/2")));
    }
    let w = ball_closed_forms(&sf, big_r)?;
    let mut report = Report::new("ball-forms", None, None);
    report.parameters = Map::from_iter([
        ("space".to_string(), json!(space)),
        ("n".to_string(), json!(n)),
        ("R".to_string(), json!(big_r)),
    ]);
    let nd = w.normalized_deficit(n);
    let mut results = integrals_json(&w);
    let obj = results.as_object_mut().expect("object");
    obj.insert("deficit".into(), json!(w.deficit(n)));
    obj.insert("normalized_deficit".into(), json!(nd));
    obj.insert("compatibility_constant".into(), json!(w.weighted_volume / w.weighted_area));
    report.results = results;
    report.verdicts = vec![Verdict::at_most("closed_form_deficit", nd.abs(), 1e-12)];
    Ok(report)
}
