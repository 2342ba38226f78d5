//! Command execution: one config in, data files and a manifest out.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use crate::analytic::{f_inverse, f_of_x, f_quadrature, AnalyticSolution, F_QUADRATURE_TARGET};
use crate::background::Sigma;
use crate::ch::{ch_evolve, ChState};
use crate::complex::{complex_param_residual, complex_reduction_residual, ComplexCollision, ComplexGrid, ComplexPeakonField};
use crate::config::{parse_config, Command, Exact, Family, GridSpec, RunConfig};
use crate::error::{Error, Result};
use crate::fields;
use crate::kernel::Kernel;
use crate::output::{self, Check, Comparison, Manifest, Status};
use crate::solver::{
    constraint_residual, evolve, init_from_analytic, max_abs, verify_on_grid, Boundary, Evolution, SolverConfig,
    StrandState,
};

/// Checks, monitors and written files of a finished command.
#[derive(Debug, Default)]
pub struct Report {
    pub checks: Vec<Check>,
    pub monitors: BTreeMap<String, Value>,
    pub outputs: Vec<PathBuf>,
}

impl Report {
    fn monitor(&mut self, key: &str, v: impl Into<Value>) {
        self.monitors.insert(key.to_string(), v.into());
    }
}

/// Output sink; `None` runs the checks without writing files.
struct Out<'a>(Option<&'a Path>);

impl Out<'_> {
    fn file(&self, report: &mut Report, name: &str, write: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
        if let Some(dir) = self.0 {
            let p = dir.join(name);
            write(&p)?;
            report.outputs.push(p);
        }
        Ok(())
    }
}

/// `log₂(coarse / fine)`, or `+∞` when both are below `floor` (the finite
/// differences are exact up to rounding for that data).
pub fn observed_order(coarse: f64, fine: f64, floor: f64) -> f64 {
    if coarse < floor && fine < floor {
        f64::INFINITY
    } else {
        (coarse / fine).log2()
    }
}

/// Runs `command` on a parsed config, writing data files into `out`.
pub fn execute(cfg: &RunConfig, command: Command, out: Option<&Path>) -> Result<Report> {
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
    }
    let out = Out(out);
    match command {
        Command::Analytic => sampled(cfg, &out, false),
        Command::Collision => sampled(cfg, &out, true),
        Command::Simulate => simulate(cfg, &out),
        Command::Verify => verify(cfg, &out),
        Command::Ch => ch(cfg, &out),
        Command::ComplexVerify => complex_verify(cfg, &out),
    }
}

/// Parses, executes and writes `manifest.json` when `out` is given. Errors
/// become a manifest status; nothing here panics on bad input.
pub fn run(command: Command, config_text: &str, strict: bool, out: Option<&Path>) -> Manifest {
    let started_at = chrono::Utc::now().to_rfc3339();
    let mut manifest = Manifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        command: command.name().to_string(),
        status: Status::Pass,
        error: None,
        started_at,
        finished_at: String::new(),
        config: Value::Null,
        monitors: BTreeMap::new(),
        checks: Vec::new(),
        outputs: Vec::new(),
    };
    let result = parse_config(config_text, command, strict).and_then(|cfg| {
        manifest.config = serde_json::to_value(&cfg)?;
        execute(&cfg, command, out)
    });
    match result {
        Ok(report) => {
            manifest.status = if report.checks.iter().all(|c| c.passed) { Status::Pass } else { Status::Fail };
            manifest.checks = report.checks;
            manifest.monitors = report.monitors;
            manifest.outputs = report.outputs.iter().map(|p| p.display().to_string()).collect();
        }
        Err(e) => {
            manifest.status = if e.is_numerical_abort() { Status::NumericalAbort } else { Status::ConfigError };
            if let Error::BlowUp { last_good, .. } = &e {
                manifest.monitors.insert("last_good_t".into(), json!(last_good.t));
            }
            manifest.error = Some(e.to_string());
        }
    }
    manifest.finished_at = chrono::Utc::now().to_rfc3339();
    if let Some(dir) = out {
        if let Err(e) = std::fs::create_dir_all(dir).map_err(Error::from).and_then(|_| manifest.write(&dir.join("manifest.json"))) {
            log::error!("could not write manifest: {e}");
        }
    }
    manifest
}

fn sample_levels(sol: &dyn AnalyticSolution, g: &GridSpec, default_n_t: usize) -> Result<Vec<StrandState>> {
    let times = crate::solver::TimeGrid { n: g.n_t.unwrap_or(default_n_t), ..g.time_grid() };
    (0..times.n).map(|i| init_from_analytic(sol, times.node(i), g.s_grid())).collect()
}

fn write_fields(cfg: &RunConfig, out: &Out, report: &mut Report, st: &StrandState) -> Result<()> {
    if let Some(xg) = cfg.output.x_grid {
        let j = cfg.output.field_node.unwrap_or(st.grid.n / 2);
        let f = fields::reconstruct(st, j, &xg.nodes(), cfg.kernel, cfg.sigma)?;
        out.file(report, "fields.csv", |p| output::write_fields(p, &f))?;
    }
    Ok(())
}

fn antisymmetry(states: &[StrandState]) -> f64 {
    states
        .iter()
        .flat_map(|st| (0..st.grid.n).map(move |j| (st.m[0][j] + st.m[1][j]).abs().max((st.n[0][j] + st.n[1][j]).abs())))
        .fold(0.0, f64::max)
}

/// `analytic` and `collision`: sample the exact solution and check it.
fn sampled(cfg: &RunConfig, out: &Out, collision: bool) -> Result<Report> {
    let g = cfg.grid()?;
    let exact = cfg.exact()?;
    let sol = exact.as_analytic();
    let tol = cfg.tolerances;
    let mut report = Report::default();
    let levels = sample_levels(sol, g, 11)?;
    let periodic = g.boundary == Boundary::Periodic;

    let constraint = levels
        .iter()
        .map(|st| max_abs(&constraint_residual(st, cfg.sigma, cfg.kernel, periodic)))
        .fold(0.0, f64::max);
    let bg = cfg.background_solution(cfg.sigma)?;
    let bg_residual = levels
        .iter()
        .flat_map(|st| st.grid.nodes().map(|s| bg.residual(st.t, s).abs()).collect::<Vec<_>>())
        .fold(0.0, f64::max);
    report.monitor("constraint_max", constraint);
    report.monitor("background_residual", bg_residual);
    report.checks.push(Check::below("background_residual", bg_residual, tol.residual_floor));
    report.checks.push(Check::below("constraint", constraint, tol.constraint));

    if collision {
        let Exact::Collision(c) = &exact else {
            return Err(Error::config("solution", "collision needs {\"family\": \"collision\"}"));
        };
        report.checks.push(Check::below("antisymmetry", antisymmetry(&levels), tol.antisymmetry));

        // F(X) against quadrature on a strided subset, and the linearization
        // F(X) = 2√2 · branch · |h| on every sample.
        let b = c.branch().value();
        let (mut quad, mut trip, mut lin) = (0.0f64, 0.0f64, 0.0f64);
        let total = levels.len() * g.n_s;
        let stride = (total / 200).max(1);
        for (k, (st, j)) in levels.iter().flat_map(|st| (0..g.n_s).map(move |j| (st, j))).enumerate() {
            let x = st.q[0][j] - st.q[1][j];
            let f = f_of_x(x);
            let h = bg.eval(st.t, st.grid.node(j)).h;
            lin = lin.max((f - 2.0 * std::f64::consts::SQRT_2 * b * h.abs()).abs());
            trip = trip.max((f_inverse(f) - x).abs());
            if k % stride == 0 {
                quad = quad.max((f_quadrature(x, F_QUADRATURE_TARGET)? - f).abs());
            }
        }
        report.monitor("f_linearization", lin);
        report.checks.push(Check::below("f_quadrature", quad, tol.f_transform));
        report.checks.push(Check::below("f_round_trip", trip, tol.round_trip));
        report.checks.push(Check::below("f_linearization", lin, tol.f_transform));
    }

    out.file(&mut report, "trajectory.csv", |p| output::write_trajectory(p, &levels))?;
    write_fields(cfg, out, &mut report, levels.last().expect("at least 3 levels"))?;
    Ok(report)
}

/// Errors of a simulation against the exact solution at every snapshot.
#[derive(Debug, Clone, Copy, Default)]
pub struct ErrorSummary {
    /// `max |Q_num - Q_exact|` over all peakons.
    pub q_abs: f64,
    /// Max over `Q, M, N` components of `max|num - exact| / max|exact|`.
    pub relative: f64,
    pub antisymmetry: Option<f64>,
}

pub fn error_summary(ev: &Evolution, sol: &dyn AnalyticSolution) -> Result<ErrorSummary> {
    let np = sol.n_peakons();
    // [component][peakon] -> (max diff, max exact)
    let mut acc = vec![vec![(0.0f64, 0.0f64); np]; 3];
    for st in &ev.trajectory.snapshots {
        for j in 0..st.grid.n {
            let e = sol.sample(st.t, st.grid.node(j))?;
            for a in 0..np {
                for (c, (num, ex)) in [(st.q[a][j], e.q[a]), (st.m[a][j], e.m[a]), (st.n[a][j], e.n[a])].into_iter().enumerate() {
                    let slot = &mut acc[c][a];
                    slot.0 = slot.0.max((num - ex).abs());
                    slot.1 = slot.1.max(ex.abs());
                }
            }
        }
    }
    let q_abs = acc[0].iter().map(|s| s.0).fold(0.0, f64::max);
    let relative = acc
        .iter()
        .flatten()
        .filter(|s| s.1 > 0.0)
        .map(|s| s.0 / s.1)
        .fold(0.0, f64::max);
    let antisymmetry = (np == 2).then(|| antisymmetry(&ev.trajectory.snapshots));
    Ok(ErrorSummary { q_abs, relative, antisymmetry })
}

fn solver_config(cfg: &RunConfig, g: &GridSpec) -> SolverConfig {
    SolverConfig {
        condition_cap: g.condition_cap,
        blowup_limit: g.blowup_limit,
        output_every: g.output_every.unwrap_or(1),
        execution: cfg.execution,
        ..SolverConfig::new(cfg.sigma, g.dt.unwrap_or(0.0), g.t_final, g.boundary)
    }
}

/// One simulation at the resolution in `g`.
pub fn simulate_level(cfg: &RunConfig, g: &GridSpec, sol: &dyn AnalyticSolution) -> Result<(Evolution, ErrorSummary)> {
    let initial = init_from_analytic(sol, g.t_min, g.s_grid())?;
    let ev = evolve(&initial, &solver_config(cfg, g), cfg.kernel, Some(sol))?;
    let errs = error_summary(&ev, sol)?;
    Ok((ev, errs))
}

fn simulate(cfg: &RunConfig, out: &Out) -> Result<Report> {
    if cfg.sigma == Sigma::Plus {
        return Err(Error::IllPosed);
    }
    let g = cfg.grid()?;
    let exact = cfg.exact()?;
    let sol = exact.as_analytic();
    let tol = cfg.tolerances;
    let mut report = Report::default();

    let (ev, errs) = simulate_level(cfg, g, sol)?;
    let single = matches!(cfg.solution, Family::Single);
    report.monitor("dt", ev.dt);
    report.monitor("steps", ev.steps);
    report.monitor("q_error", errs.q_abs);
    report.monitor("relative_error", errs.relative);
    report.monitor("constraint_max", ev.monitor.max_constraint());
    report.monitor("momentum_drift", ev.monitor.momentum_drift());
    if let Some(d) = ev.monitor.n_charge_drift() {
        report.monitor("n_charge_drift", d);
    }
    report.monitor("min_separation", ev.monitor.min_separation());

    if single {
        report.checks.push(Check::below("q_error", errs.q_abs, tol.q_error));
    } else {
        report.checks.push(Check::below("relative_error", errs.relative, tol.relative_error));
    }
    if let Some(a) = errs.antisymmetry {
        report.checks.push(Check::below("antisymmetry", a, tol.antisymmetry));
    }
    report.checks.push(Check::below("constraint", ev.monitor.max_constraint(), tol.constraint));
    if g.boundary == Boundary::Periodic {
        report.checks.push(Check::below("momentum_drift", ev.monitor.momentum_drift(), tol.conservation));
        if let Some(d) = ev.monitor.n_charge_drift() {
            report.checks.push(Check::below("n_charge_drift", d, tol.conservation));
        }
    }

    if g.refine {
        let coarse = g.coarsened()?;
        let (cev, cerrs) = simulate_level(cfg, &coarse, sol)?;
        let (name, c, f) = if single {
            ("order_q_error", cerrs.q_abs, errs.q_abs)
        } else {
            ("order_relative_error", cerrs.relative, errs.relative)
        };
        let order = observed_order(c, f, 0.0);
        let corder = observed_order(cev.monitor.max_constraint(), ev.monitor.max_constraint(), 0.0);
        report.monitor("coarse_error", c);
        report.monitor("coarse_constraint_max", cev.monitor.max_constraint());
        report.monitor(name, order);
        report.monitor("order_constraint", corder);
        report.checks.push(Check::at_least(name, order, tol.min_order_evolve));
        report.checks.push(Check::at_least("order_constraint", corder, tol.min_order_evolve));
    }

    out.file(&mut report, "trajectory.csv", |p| output::write_trajectory(p, &ev.trajectory.snapshots))?;
    out.file(&mut report, "monitor.csv", |p| output::write_monitor(p, &ev.monitor))?;
    write_fields(cfg, out, &mut report, ev.trajectory.last())?;
    Ok(report)
}

fn verify(cfg: &RunConfig, out: &Out) -> Result<Report> {
    if let Some(path) = &cfg.snapshot {
        return verify_snapshot(cfg, path);
    }
    let g = cfg.grid()?;
    let exact = cfg.exact()?;
    let sol = exact.as_analytic();
    let tol = cfg.tolerances;
    let mut report = Report::default();
    let solver = SolverConfig { execution: cfg.execution, ..SolverConfig::new(cfg.sigma, 0.0, g.t_final, g.boundary) };

    let fine = verify_on_grid(sol, g.time_grid(), g.s_grid(), &solver, cfg.kernel)?;
    for (name, v) in fine.components() {
        report.monitor(name, v);
        report.checks.push(Check::below(name, v, tol.residual));
    }
    if g.refine {
        let c = g.coarsened()?;
        let coarse = verify_on_grid(sol, c.time_grid(), c.s_grid(), &solver, cfg.kernel)?;
        for ((name, ec), (_, ef)) in coarse.components().into_iter().zip(fine.components()) {
            let order = observed_order(ec, ef, tol.residual_floor);
            report.monitor(&format!("order_{name}"), json_num(order));
            report.checks.push(Check::at_least(format!("order_{name}"), order, tol.min_order_residual));
        }
    }
    if out.0.is_some() {
        let st = init_from_analytic(sol, g.t_final, g.s_grid())?;
        write_fields(cfg, out, &mut report, &st)?;
    }
    Ok(report)
}

/// `∞` is not valid JSON; record it as a string.
fn json_num(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        json!(v.to_string())
    }
}

/// Checks a trajectory CSV: the s-constraint at each snapshot, and
/// `∂ₜQ = Σ M K` between consecutive snapshots by the trapezoid rule.
fn verify_snapshot(cfg: &RunConfig, path: &Path) -> Result<Report> {
    let g = cfg.grid()?;
    let tol = cfg.tolerances;
    let periodic = g.boundary == Boundary::Periodic;
    let states = output::read_trajectory(path)?;
    if states.is_empty() {
        return Err(Error::invalid(format!("{}: no snapshots", path.display())));
    }
    let mut report = Report::default();
    let constraint = states
        .iter()
        .map(|st| max_abs(&constraint_residual(st, cfg.sigma, cfg.kernel, periodic)))
        .fold(0.0, f64::max);
    let transport_rate = |st: &StrandState, j: usize| {
        let q = StrandState::column(&st.q, j);
        cfg.kernel.gram(&q).apply(&StrandState::column(&st.m, j))
    };
    let mut transport = 0.0f64;
    for w in states.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let dt = b.t - a.t;
        if !(dt > 0.0) || a.grid.n != b.grid.n || a.n_peakons() != b.n_peakons() {
            return Err(Error::invalid(format!("{}: snapshots at t = {} and {} do not line up", path.display(), a.t, b.t)));
        }
        for j in 0..a.grid.n {
            let (ra, rb) = (transport_rate(a, j), transport_rate(b, j));
            for p in 0..a.n_peakons() {
                let r = (b.q[p][j] - a.q[p][j]) / dt - 0.5 * (ra[p] + rb[p]);
                transport = transport.max(r.abs());
            }
        }
    }
    report.monitor("snapshots", states.len());
    report.monitor("constraint_max", constraint);
    report.monitor("q_transport_max", transport);
    report.checks.push(Check::below("constraint", constraint, tol.constraint));
    if states.len() > 1 {
        report.checks.push(Check::below("q_transport", transport, tol.residual));
    }
    Ok(report)
}

fn ch(cfg: &RunConfig, out: &Out) -> Result<Report> {
    let spec = cfg.ch.as_ref().ok_or_else(|| Error::config("ch", "missing; required for ch"))?;
    let tol = cfg.tolerances;
    let init = ChState::new(spec.q.clone(), spec.m.clone()).map_err(|e| Error::config("ch", e.to_string()))?;
    let tr = ch_evolve(&init, spec.dt, spec.t_final, cfg.kernel, spec.output_every.unwrap_or(1), 1e12)?;
    let mut report = Report::default();
    report.monitor("energy_drift", tr.energy_drift());
    report.monitor("momentum_drift", tr.momentum_drift());
    report.monitor("min_separation", json_num(tr.min_separation()));
    report.checks.push(Check::below("energy_drift", tr.energy_drift(), tol.energy_drift));
    report.checks.push(Check::below("momentum_drift", tr.momentum_drift(), tol.momentum_drift));
    let same_sign = spec.m.iter().all(|&m| m > 0.0) || spec.m.iter().all(|&m| m < 0.0);
    if spec.q.len() > 1 && same_sign {
        report.checks.push(Check::new("min_separation", tr.min_separation(), Comparison::Above, 0.0));
    }
    out.file(&mut report, "ch.csv", |p| output::write_ch(p, &tr))?;
    Ok(report)
}

fn coarsened(g: ComplexGrid) -> Result<ComplexGrid> {
    if g.n_xi % 2 == 0 || g.n_eta % 2 == 0 {
        return Err(Error::config("complex.grid", "refinement needs odd node counts"));
    }
    Ok(ComplexGrid { n_xi: (g.n_xi - 1) / 2 + 1, n_eta: (g.n_eta - 1) / 2 + 1, ..g })
}

fn complex_verify(cfg: &RunConfig, out: &Out) -> Result<Report> {
    let spec = cfg.complex.ok_or_else(|| Error::config("complex", "missing; required for complex-verify"))?;
    let tol = cfg.tolerances;
    let kernel: Kernel = cfg.kernel;
    let bg = cfg.background_solution(spec.variant.background_sigma())?;
    let collision = match cfg.solution {
        Family::Single => None,
        Family::Collision { branch, center, threshold } => {
            Some(ComplexCollision::new(spec.variant, bg.clone(), kernel, branch, center)?.with_threshold(threshold))
        }
    };
    let field = |grid: ComplexGrid| match &collision {
        Some(c) => ComplexPeakonField::collision(c, grid, cfg.execution),
        None => ComplexPeakonField::single_peakon(spec.variant, &bg, kernel, grid, cfg.execution),
    };
    let mut report = Report::default();

    let fine = field(spec.grid)?;
    let norms = complex_param_residual(&fine, kernel, cfg.execution)?.norms();
    let reduction = collision
        .as_ref()
        .map(|c| complex_reduction_residual(c, spec.grid, cfg.execution))
        .transpose()?;
    let mut components = norms.components();
    if let Some(r) = &reduction {
        components.push(("reduction", r.max()));
        report.monitor("reduction_flagged_nodes", r.flagged.len());
    }
    for &(name, v) in &components {
        report.monitor(name, v);
    }

    if spec.refine {
        let cg = coarsened(spec.grid)?;
        let mut coarse = complex_param_residual(&field(cg)?, kernel, cfg.execution)?.norms().components();
        if let Some(c) = &collision {
            coarse.push(("reduction", complex_reduction_residual(c, cg, cfg.execution)?.max()));
        }
        for ((name, ec), &(_, ef)) in coarse.into_iter().zip(&components) {
            let order = observed_order(ec, ef, tol.residual_floor);
            report.monitor(&format!("order_{name}"), json_num(order));
            report.checks.push(Check::at_least(format!("order_{name}"), order, tol.min_order_residual));
        }
    } else {
        for &(name, v) in &components {
            report.checks.push(Check::below(name, v, tol.residual));
        }
    }

    out.file(&mut report, "complex.csv", |p| output::write_complex(p, &fine))?;
    Ok(report)
}
