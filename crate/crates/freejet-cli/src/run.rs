//! Run orchestration: dispatches the subcommands, assembles the run report,
//! maps failures to exit codes, and always leaves a report.txt behind.

use std::path::{Path, PathBuf};
use std::time::Instant;

use freejet::error::ErrorKind;
use freejet::freeboundary::{run_diagnostics, DiagnosticsReport, ProbeSummary};
use freejet::jetfit::{
    asymptotics_report, continuation_in_l, curve_pressure_deviation, fit_lambda, solve_case,
    uniqueness_probe, CaseSetup, JetSolution,
};
use freejet::jetfit::{velocity_pressure_fields, wet_velocity_floor};
use freejet::profiles::{DownstreamState, VorticityModel};
use freejet::solver::{field_invariants, JumpMode, StreamField};

use crate::config::{load_config, ConfigIssue, RunConfig};
use crate::output::{curve_table, field_table, write_atomic};
use crate::report::Report;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_CHECK_FAILURE: i32 = 1;
pub const EXIT_CONFIG_ERROR: i32 = 2;
pub const EXIT_NON_CONVERGENCE: i32 = 3;

/// Output directory override; the single environment variable the tool
/// reads.
pub const OUT_DIR_ENV: &str = "FREEJET_OUT_DIR";

/// Lip tangency band |k'(0) - g'(0)| <= band * sqrt(h), calibrated on the
/// straight and converging presets under grid refinement.
const SMOOTH_FIT_BAND: f64 = 2.0;

/// Sample count of the profile tables.
const TABLE_POINTS: usize = 201;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Profiles,
    Solve,
    Fit,
    Continue,
    Verify,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Profiles => "profiles",
            Command::Solve => "solve",
            Command::Fit => "fit",
            Command::Continue => "continue",
            Command::Verify => "verify",
        }
    }
}

/// Parsed command line, ready to drive.
#[derive(Debug, Clone)]
pub struct Invocation {
    pub config_path: PathBuf,
    pub lambda: Option<f64>,
    pub grid_h: Option<f64>,
    pub l: Option<f64>,
    pub command: Command,
}

/// What stopped a run, mapped onto the exit-code contract.
#[derive(Debug)]
enum RunError {
    Config(Vec<ConfigIssue>),
    NonConvergence(String),
    Stage(String),
}

impl RunError {
    fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => EXIT_CONFIG_ERROR,
            RunError::NonConvergence(_) => EXIT_NON_CONVERGENCE,
            RunError::Stage(_) => EXIT_CHECK_FAILURE,
        }
    }
}

fn lift(e: freejet::Error) -> RunError {
    match e.kind() {
        ErrorKind::Config => RunError::Config(vec![ConfigIssue {
            path: "(run)".into(),
            message: e.message().to_owned(),
        }]),
        ErrorKind::NonConvergence => RunError::NonConvergence(e.message().to_owned()),
        _ => RunError::Stage(e.message().to_owned()),
    }
}

/// Executes one invocation end to end and returns the process exit code.
pub fn drive(inv: Invocation) -> i32 {
    let t0 = Instant::now();
    let mut report = Report::new();
    report.put("version", env!("CARGO_PKG_VERSION"));
    report.put("command", inv.command.name());
    report.put("config.path", inv.config_path.display().to_string());

    let mut cfg = match load_config(&inv.config_path) {
        Ok(c) => c,
        Err(issues) => {
            let dir = env_out_dir().unwrap_or_else(|| PathBuf::from("."));
            return finish(&mut report, &dir, Err(RunError::Config(issues)), t0);
        }
    };
    let out_dir = env_out_dir().unwrap_or_else(|| cfg.out_dir.clone());
    if let Err(e) = apply_overrides(&mut cfg, &inv, &mut report) {
        return finish(&mut report, &out_dir, Err(e), t0);
    }
    echo_config(&mut report, &cfg, &out_dir);

    let mut ctx = Ctx { cfg: &cfg, out_dir: &out_dir, report: &mut report, failed: 0 };
    let outcome = match inv.command {
        Command::Profiles => cmd_profiles(&mut ctx),
        Command::Solve => cmd_solve(&mut ctx),
        Command::Fit => cmd_fit(&mut ctx),
        Command::Continue => cmd_continue(&mut ctx),
        Command::Verify => cmd_verify(&mut ctx),
    };
    let failed = ctx.failed;
    finish(&mut report, &out_dir, outcome.map(|()| failed), t0)
}

fn env_out_dir() -> Option<PathBuf> {
    std::env::var_os(OUT_DIR_ENV).map(PathBuf::from)
}

fn apply_overrides(cfg: &mut RunConfig, inv: &Invocation, report: &mut Report) -> Result<(), RunError> {
    let mut issues = Vec::new();
    let mut flag = |name: &str, v: Option<f64>| -> Option<f64> {
        let v = v?;
        if v > 0.0 && v.is_finite() {
            Some(v)
        } else {
            issues.push(ConfigIssue {
                path: format!("(flag --{name})"),
                message: format!("must be positive, got {v}"),
            });
            None
        }
    };
    if let Some(v) = flag("lambda", inv.lambda) {
        cfg.lambda = Some(v);
        report.put("override.lambda", v);
    }
    if let Some(v) = flag("grid-h", inv.grid_h) {
        cfg.h = v;
        report.put("override.grid_h", v);
    }
    if let Some(v) = flag("L", inv.l) {
        cfg.l = v;
        report.put("override.l", v);
    }
    if issues.is_empty() {
        Ok(())
    } else {
        Err(RunError::Config(issues))
    }
}

fn echo_config(report: &mut Report, cfg: &RunConfig, out_dir: &Path) {
    report.put("config.geometry", &cfg.geometry_desc);
    report.put("config.profile", &cfg.profile_desc);
    report.put("config.p_atm", cfg.p_atm);
    if let Some(v) = cfg.lambda {
        report.put("config.lambda", v);
    }
    report.put("config.grid.h", cfg.h);
    report.put("config.grid.l", cfg.l);
    report.put("config.grid.schedule", format!("{:?}", cfg.effective_schedule()));
    report.put("config.solver.max_sweeps", cfg.solver.max_sweeps);
    report.put("config.solver.tol_field", cfg.solver.tol_field);
    report.put("config.solver.tol_energy", cfg.solver.tol_energy);
    report.put("config.solver.newton_tol", cfg.solver.newton_tol);
    report.put("config.solver.relaxation", cfg.solver.relaxation);
    report.put("config.solver.sweep_order", format!("{:?}", cfg.solver.sweep_order));
    report.put("config.solver.mode", format!("{:?}", cfg.solver.mode));
    report.put("config.fit.lambda_hi", cfg.fit_lambda_hi);
    report.put("config.fit.lambda_cap", cfg.fit_lambda_cap);
    report.put("config.fit.tol_lambda", cfg.fit_tol_lambda);
    report.put("config.fit.tol_detach", cfg.fit_tol_detach);
    report.put("config.fit.max_bisections", cfg.fit_max_bisections);
    report.put("config.fit.extrapolation_columns", cfg.fit_extrapolation_columns);
    report.put("config.checks.diagnostics", cfg.checks.diagnostics);
    report.put("config.checks.smooth_fit", cfg.checks.smooth_fit);
    report.put("config.checks.uniqueness", cfg.checks.uniqueness);
    report.put("config.checks.determinism", cfg.checks.determinism);
    report.put("config.diagnostics.density_c", cfg.diagnostics.density_c);
    report.put("config.diagnostics.density_pass_fraction", cfg.diagnostics.density_pass_fraction);
    report.put("config.diagnostics.radii_cells", format!("{:?}", cfg.diagnostics.radii_cells));
    report.put("config.diagnostics.growth_band_factor", cfg.diagnostics.growth_band_factor);
    report.put("config.diagnostics.blowup_points", cfg.diagnostics.blowup_points);
    report.put("config.output.dir", out_dir.display().to_string());
    report.put("config.output.stride", cfg.stride);
}

fn finish(report: &mut Report, out_dir: &Path, outcome: Result<usize, RunError>, t0: Instant) -> i32 {
    let mut code = match &outcome {
        Ok(0) => EXIT_PASS,
        Ok(_) => EXIT_CHECK_FAILURE,
        Err(e) => e.exit_code(),
    };
    match outcome {
        Ok(failed) => report.put("checks_failed", failed),
        Err(RunError::Config(issues)) => {
            for (n, iss) in issues.iter().enumerate() {
                report.put(format!("error.{n}"), iss);
                eprintln!("config error: {iss}");
            }
        }
        Err(RunError::NonConvergence(m)) => {
            report.put("error", &m);
            eprintln!("solver did not converge: {m}");
        }
        Err(RunError::Stage(m)) => {
            report.put("error", &m);
            eprintln!("error: {m}");
        }
    }
    report.seconds("total", t0.elapsed().as_secs_f64());
    report.put("status", if code == EXIT_PASS { "pass" } else { "fail" });
    report.put("exit_code", code);
    match write_atomic(out_dir, "report.txt", &report.render()) {
        Ok(p) => println!("report: {}", p.display()),
        Err(e) => {
            eprintln!("cannot write report: {e}");
            if code == EXIT_PASS {
                code = EXIT_CHECK_FAILURE;
            }
        }
    }
    code
}

/// Shared state of one subcommand run.
struct Ctx<'a> {
    cfg: &'a RunConfig,
    out_dir: &'a Path,
    report: &'a mut Report,
    failed: usize,
}

impl Ctx<'_> {
    fn check(&mut self, name: &str, pass: bool, detail: &str) {
        self.report.check(name, pass, detail);
        if !pass {
            self.failed += 1;
            eprintln!("check failed: {name} ({detail})");
        }
    }

    fn probes(&mut self, prefix: &str, probes: &[ProbeSummary]) {
        for p in probes {
            let name = format!("{prefix}{}", p.name);
            self.check(&name, p.pass, &p.detail);
        }
    }

    fn emit(&mut self, name: &str, content: &str) -> Result<(), RunError> {
        let path = write_atomic(self.out_dir, name, content).map_err(RunError::Stage)?;
        self.report.put(format!("file.{name}"), path.display().to_string());
        Ok(())
    }

    fn setup(&self) -> Result<CaseSetup, RunError> {
        CaseSetup::new(self.cfg.geometry.clone(), self.cfg.profile.clone()).map_err(lift)
    }

    fn downstream(&self, lambda: f64) -> Result<DownstreamState, RunError> {
        DownstreamState::build_with_p_atm(&self.cfg.profile, lambda, self.cfg.p_atm).map_err(lift)
    }
}

fn linspace(a: f64, b: f64, n: usize) -> impl Iterator<Item = f64> {
    let step = (b - a) / (n - 1) as f64;
    (0..n).map(move |i| if i + 1 == n { b } else { a + step * i as f64 })
}

fn fields_bit_identical(a: &StreamField, b: &StreamField) -> bool {
    a.psi().len() == b.psi().len()
        && a.psi().iter().zip(b.psi()).all(|(x, y)| x.to_bits() == y.to_bits())
        && a.wet() == b.wet()
}

fn cmd_profiles(ctx: &mut Ctx) -> Result<(), RunError> {
    use std::fmt::Write as _;
    let t = Instant::now();
    let prof = &ctx.cfg.profile;
    let vort = VorticityModel::build(prof).map_err(lift)?;
    let q = prof.mass_flux();
    let lambda0 = prof.lambda0();
    let lambda = ctx.cfg.lambda.unwrap_or(lambda0);
    let ds = ctx.downstream(lambda)?;
    ctx.report.put("profiles.q", q);
    ctx.report.put("profiles.lambda0", lambda0);
    ctx.report.put("profiles.lambda", lambda);
    ctx.report.put("profiles.h_lambda", ds.h());
    ctx.report.put("profiles.p_diff", ds.p_diff());
    ctx.report.put("profiles.p_in", ds.p_in());

    let mut kappa = String::from("t kappa f0\n");
    for t in linspace(0.0, q, TABLE_POINTS) {
        let k = vort.kappa(t).map_err(lift)?;
        let f = vort.f0(t).map_err(lift)?;
        let _ = writeln!(kappa, "{t} {k} {f}");
    }
    let mut downstream = String::from("s chi u1\n");
    for s in linspace(0.0, q, TABLE_POINTS) {
        let c = ds.chi(s).map_err(lift)?;
        let u = ds.u1(c).map_err(lift)?;
        let _ = writeln!(downstream, "{s} {c} {u}");
    }
    let mut hline = String::from("lambda h p_diff\n");
    for lam in linspace(lambda0, 3.0 * lambda0, 81) {
        let d = ctx.downstream(lam)?;
        let _ = writeln!(hline, "{lam} {} {}", d.h(), d.p_diff());
    }
    ctx.emit("kappa.txt", &kappa)?;
    ctx.emit("downstream.txt", &downstream)?;
    ctx.emit("hlambda.txt", &hline)?;
    ctx.report.seconds("profiles", t.elapsed().as_secs_f64());
    Ok(())
}

fn cmd_solve(ctx: &mut Ctx) -> Result<(), RunError> {
    let Some(lambda) = ctx.cfg.lambda else {
        return Err(RunError::Config(vec![ConfigIssue {
            path: "physics.lambda".into(),
            message: "`solve` needs a speed; set physics.lambda or pass --lambda".into(),
        }]));
    };
    let setup = ctx.setup()?;
    let fit_cfg = ctx.cfg.fit_config();
    let t = Instant::now();
    let case = solve_case(&setup, lambda, ctx.cfg.l, ctx.cfg.h, &fit_cfg).map_err(lift)?;
    ctx.report.seconds("solve", t.elapsed().as_secs_f64());
    let ds = ctx.downstream(lambda)?;

    ctx.report.put("solve.lambda", lambda);
    ctx.report.put("solve.k0", case.k0);
    ctx.report.put("solve.h_lambda", ds.h());
    ctx.report.put("solve.p_diff", ds.p_diff());
    ctx.report.put("solve.sweeps", case.report.sweeps);
    ctx.report.put("solve.front_moves", case.report.front_moves);
    ctx.report.put("solve.energy_final", case.report.energy_final);
    ctx.report.put("solve.pde_residual", case.report.pde_residual);
    ctx.report.put("solve.final_max_change", case.report.final_max_change);
    ctx.report.put("solve.relaxation", case.report.relaxation);

    let invariants = field_invariants(&case.grid, &case.field, &case.report, ctx.cfg.solver.tol_field);
    ctx.probes("", &invariants);

    let vp = velocity_pressure_fields(&case.grid, &case.field, setup.vorticity(), &ds);
    let floor = wet_velocity_floor(&case.grid, &case.field, &vp.u);
    ctx.check("velocity_floor", floor > 0.0, &format!("min wet horizontal speed {floor}"));
    ctx.report.put("solve.curve_pressure_dev", curve_pressure_deviation(&case.curve, setup.vorticity(), &ds));

    let asym = asymptotics_report(&case.grid, &case.field, setup.vorticity(), &ds, &case.curve)
        .map_err(lift)?;
    put_asymptotics(ctx.report, "solve", &asym);

    if ctx.cfg.checks.diagnostics {
        let t = Instant::now();
        let diag = run_diagnostics(&case.grid, &case.field, &case.curve, setup.vorticity(), lambda, &ctx.cfg.diagnostics);
        ctx.report.seconds("diagnostics", t.elapsed().as_secs_f64());
        put_diag_counters(ctx.report, &diag);
        ctx.probes("diag.", &diag.checks);
    }
    if ctx.cfg.checks.determinism {
        let again = solve_case(&setup, lambda, ctx.cfg.l, ctx.cfg.h, &fit_cfg).map_err(lift)?;
        let same = fields_bit_identical(&case.field, &again.field);
        ctx.check("determinism", same, if same { "re-solve is bit-identical" } else { "re-solve differs" });
    }

    ctx.emit("field.txt", &field_table(&case.grid, &case.field, ctx.cfg.stride))?;
    ctx.emit("curve.txt", &curve_table(&case.curve))?;
    Ok(())
}

fn cmd_fit(ctx: &mut Ctx) -> Result<(), RunError> {
    let setup = ctx.setup()?;
    let fit_cfg = ctx.cfg.fit_config();
    let (l, h) = ctx.cfg.fit_grid();
    let t = Instant::now();
    let (_, sol) = fit_lambda(&setup, l, h, &fit_cfg).map_err(lift)?;
    ctx.report.seconds("fit", t.elapsed().as_secs_f64());
    report_solution(ctx, &sol)?;

    if ctx.cfg.checks.determinism {
        let again = solve_case(&setup, sol.lambda, sol.l, sol.h, &fit_cfg).map_err(lift)?;
        let same = fields_bit_identical(&sol.field, &again.field);
        ctx.check("determinism", same, if same { "re-solve is bit-identical" } else { "re-solve differs" });
    }
    run_uniqueness(ctx, &setup, sol.lambda, sol.l, sol.h)?;
    Ok(())
}

fn cmd_continue(ctx: &mut Ctx) -> Result<(), RunError> {
    let setup = ctx.setup()?;
    let fit_cfg = ctx.cfg.fit_config();
    let t = Instant::now();
    let res = continuation_in_l(&setup, &fit_cfg).map_err(lift)?;
    ctx.report.seconds("continuation", t.elapsed().as_secs_f64());

    let mut failures = 0usize;
    for (n, e) in res.entries.iter().enumerate() {
        ctx.report.put(format!("continue.{n}.l"), e.l);
        ctx.report.put(format!("continue.{n}.h"), e.h);
        if let Some(lam) = e.lambda {
            ctx.report.put(format!("continue.{n}.lambda"), lam);
        }
        if let Some(k0) = e.k0 {
            ctx.report.put(format!("continue.{n}.k0"), k0);
        }
        if let Some(err) = &e.error {
            ctx.report.put(format!("continue.{n}.error"), err);
            failures += 1;
        }
    }
    ctx.report.put("continue.entries", res.entries.len());
    ctx.report.put("continue.spread", res.spread);
    let tol_lambda = if ctx.cfg.fit_tol_lambda > 0.0 {
        ctx.cfg.fit_tol_lambda
    } else {
        1e-3 * ctx.cfg.profile.lambda0()
    };
    ctx.check(
        "continuation_entries",
        failures == 0,
        &format!("{failures} of {} truncations failed", res.entries.len()),
    );
    ctx.check(
        "continuation_stable",
        !res.unstable,
        &format!("spread {} vs allowed {}", res.spread, 5.0 * tol_lambda),
    );
    match &res.solution {
        Some(sol) => report_solution(ctx, sol)?,
        None => ctx.check("continuation_solution", false, "no truncation fitted successfully"),
    }
    Ok(())
}

fn cmd_verify(ctx: &mut Ctx) -> Result<(), RunError> {
    let t_all = Instant::now();
    let setup = ctx.setup()?;
    let prof = setup.profile();
    let vort = setup.vorticity();
    let q = prof.mass_flux();
    let hgt = prof.height();
    let lambda0 = prof.lambda0();

    // Pressure-free downstream map must be the identity.
    let ds0 = ctx.downstream(lambda0)?;
    let mut dev = 0.0f64;
    for s in linspace(0.0, q, 101) {
        dev = dev.max((ds0.chi(s).map_err(lift)? - s).abs());
    }
    ctx.check("chi_identity", dev <= 1e-10 * (1.0 + q), &format!("max |chi(s) - s| = {dev}"));

    // kappa inverts the cumulative flux.
    let mut dev = 0.0f64;
    for y in linspace(0.0, hgt, 101) {
        let t = prof.cumulative_flux(y).min(q);
        dev = dev.max((vort.kappa(t).map_err(lift)? - y).abs());
    }
    ctx.check("kappa_inverse", dev <= 1e-9 * (1.0 + hgt), &format!("max |kappa(F(y)) - y| = {dev}"));

    // Downstream flux equals the upstream mass flux at every speed.
    let mut worst = 0.0f64;
    for lam in [lambda0, 1.5 * lambda0, 3.0 * lambda0] {
        let ds = ctx.downstream(lam)?;
        let n = 2000;
        let hh = ds.h() / n as f64;
        let mut s = ds.u1(0.0).map_err(lift)? + ds.u1(ds.h()).map_err(lift)?;
        for k in 1..n {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            s += w * ds.u1(k as f64 * hh).map_err(lift)?;
        }
        worst = worst.max((s * hh / 3.0 - q).abs());
    }
    ctx.check("flux_conservation", worst <= 1e-8 * (1.0 + q), &format!("max |flux - Q| = {worst}"));

    // At the base speed the jet fills the channel.
    let gap = (ds0.h() - hgt).abs();
    ctx.check("height_at_base_speed", gap <= 1e-9 * (1.0 + hgt), &format!("|h(lambda0) - H| = {gap}"));

    // Asymptotic thickness shrinks as the speed grows.
    let mut last = f64::INFINITY;
    let mut monotone = true;
    for lam in linspace(lambda0, 3.0 * lambda0, 81) {
        let h = ctx.downstream(lam)?.h();
        if h > last * (1.0 + 1e-12) {
            monotone = false;
        }
        last = h;
    }
    ctx.check("thickness_monotone", monotone, "h(lambda) non-increasing over [lambda0, 3 lambda0]");

    // One full solve: invariants, diagnostics, bit-exact repeat.
    let lambda = ctx.cfg.lambda.unwrap_or(1.5 * lambda0);
    let fit_cfg = ctx.cfg.fit_config();
    let t = Instant::now();
    let case = solve_case(&setup, lambda, ctx.cfg.l, ctx.cfg.h, &fit_cfg).map_err(lift)?;
    ctx.report.seconds("solve", t.elapsed().as_secs_f64());
    ctx.report.put("verify.lambda", lambda);
    ctx.report.put("verify.sweeps", case.report.sweeps);
    ctx.report.put("verify.pde_residual", case.report.pde_residual);
    let invariants = field_invariants(&case.grid, &case.field, &case.report, ctx.cfg.solver.tol_field);
    ctx.probes("", &invariants);

    if ctx.cfg.checks.diagnostics {
        let diag = run_diagnostics(&case.grid, &case.field, &case.curve, vort, lambda, &ctx.cfg.diagnostics);
        put_diag_counters(ctx.report, &diag);
        ctx.probes("diag.", &diag.checks);
    }
    let again = solve_case(&setup, lambda, ctx.cfg.l, ctx.cfg.h, &fit_cfg).map_err(lift)?;
    let same = fields_bit_identical(&case.field, &again.field);
    ctx.check("determinism", same, if same { "re-solve is bit-identical" } else { "re-solve differs" });

    run_uniqueness(ctx, &setup, lambda, ctx.cfg.l, ctx.cfg.h)?;
    ctx.report.seconds("verify", t_all.elapsed().as_secs_f64());
    Ok(())
}

/// Uniqueness probe behind its toggle: four init/order branches plus the
/// penalized mode when the solver is configured with one.
fn run_uniqueness(ctx: &mut Ctx, setup: &CaseSetup, lambda: f64, l: f64, h: f64) -> Result<(), RunError> {
    if !ctx.cfg.checks.uniqueness {
        return Ok(());
    }
    let fit_cfg = ctx.cfg.fit_config();
    let eps = match ctx.cfg.solver.mode {
        JumpMode::Penalized { eps } => Some(eps),
        JumpMode::Exact => None,
    };
    let t = Instant::now();
    let rep = uniqueness_probe(setup, lambda, l, h, &fit_cfg, eps).map_err(lift)?;
    ctx.report.seconds("uniqueness", t.elapsed().as_secs_f64());
    ctx.report.put("uniqueness.branches", rep.branches);
    ctx.report.put("uniqueness.max_gap", rep.max_gap);
    ctx.report.put("uniqueness.rerun_gap", rep.rerun_gap);
    if let Some(g) = rep.penalized_gap {
        ctx.report.put("uniqueness.penalized_gap", g);
    }
    let q = ctx.cfg.profile.mass_flux();
    let tol = 10.0 * ctx.cfg.solver.tol_field_for(q);
    ctx.check("uniqueness", rep.max_gap <= tol, &format!("max branch gap {} vs allowed {tol}", rep.max_gap));
    ctx.check("rerun_determinism", rep.rerun_gap == 0.0, &format!("re-run gap {}", rep.rerun_gap));
    Ok(())
}

/// Emits a fitted solution: scalars, trace, checks, dumps.
fn report_solution(ctx: &mut Ctx, sol: &JetSolution) -> Result<(), RunError> {
    let r = &mut *ctx.report;
    r.put("fit.lambda", sol.lambda);
    r.put("fit.k0", sol.k0);
    r.put("fit.a", sol.a);
    r.put("fit.h_bar", sol.h_bar);
    r.put("fit.h_lambda", sol.h_asymptotic);
    r.put("fit.q", sol.q);
    r.put("fit.p_diff", sol.p_diff);
    r.put("fit.p_atm", ctx.cfg.p_atm);
    r.put("fit.p_in", ctx.cfg.p_atm + sol.p_diff);
    r.put("fit.l", sol.l);
    r.put("fit.h", sol.h);
    r.put("fit.sweeps", sol.solve.sweeps);
    r.put("fit.front_moves", sol.solve.front_moves);
    r.put("fit.energy_final", sol.solve.energy_final);
    r.put("fit.pde_residual", sol.solve.pde_residual);
    r.put("fit.curve_pressure_dev", sol.curve_pressure_dev);
    r.put("fit.evaluations", sol.fit_trace.len());
    for (n, s) in sol.fit_trace.iter().enumerate() {
        r.put(format!("fit.trace.{n}.lambda"), s.lambda);
        r.put(format!("fit.trace.{n}.k0"), s.k0);
    }
    put_asymptotics(r, "fit", &sol.asymptotics);

    if ctx.cfg.checks.smooth_fit {
        match sol.smooth_fit_gap {
            Some(gap) => {
                ctx.report.put("fit.smooth_fit_gap", gap);
                let band = SMOOTH_FIT_BAND * sol.h.sqrt();
                ctx.check("smooth_fit", gap <= band, &format!("tangency gap {gap} vs band {band}"));
            }
            None => ctx.report.put("fit.smooth_fit_note", &sol.smooth_fit_note),
        }
    }

    let invariants = field_invariants(&sol.grid, &sol.field, &sol.solve, ctx.cfg.solver.tol_field);
    ctx.probes("", &invariants);
    ctx.probes("", &sol.checks);
    if let Some(diag) = &sol.diagnostics {
        put_diag_counters(ctx.report, diag);
        ctx.probes("diag.", &diag.checks);
    }

    ctx.emit("field.txt", &field_table(&sol.grid, &sol.field, ctx.cfg.stride))?;
    ctx.emit("curve.txt", &curve_table(&sol.curve))?;
    Ok(())
}

fn put_asymptotics(r: &mut Report, prefix: &str, asym: &freejet::jetfit::AsymptoticsReport) {
    r.put(format!("{prefix}.asym.upstream_x"), asym.upstream_x);
    r.put(format!("{prefix}.asym.upstream_dev"), asym.upstream_dev);
    r.put(format!("{prefix}.asym.downstream_x"), asym.downstream_x);
    r.put(format!("{prefix}.asym.downstream_dev"), asym.downstream_dev);
    if let Some(t) = asym.tail_dev {
        r.put(format!("{prefix}.asym.tail_dev"), t);
    }
}

fn put_diag_counters(r: &mut Report, diag: &DiagnosticsReport) {
    r.put("diag.density_probed", diag.density_probed);
    r.put("diag.density_in_band", diag.density_in_band);
    r.put("diag.density_min", diag.density_min);
    r.put("diag.density_max", diag.density_max);
    r.put("diag.growth_points", diag.growth_points);
    r.put("diag.growth_min", diag.growth_min);
    r.put("diag.growth_max", diag.growth_max);
    r.put("diag.nondeg_probed", diag.nondeg_probed);
    r.put("diag.nondeg_failures", diag.nondeg_failures);
    for (n, (x, d2r, dr)) in diag.blowup_pairs.iter().enumerate() {
        r.put(format!("diag.blowup.{n}.x"), x);
        r.put(format!("diag.blowup.{n}.dev_2r"), d2r);
        r.put(format!("diag.blowup.{n}.dev_r"), dr);
    }
}
