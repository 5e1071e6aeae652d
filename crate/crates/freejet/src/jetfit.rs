//! Outer fitting loop: pick the free-surface speed so the interface
//! detaches at the nozzle lip, continue in the truncation length, and
//! reconstruct velocity and pressure from the stream function.
//!
//! For each admissible speed `lambda >= lambda0` the inner solver yields a
//! minimizer whose interface height extrapolated to the lip column is the
//! detachment height k(0) (the lip node itself carries Dirichlet data, so
//! k(0) is a line fit through the first interior columns). The fitted speed
//! is the smallest one whose interface detaches below the lip: bisection on
//! the predicate k(0) < a over [lambda0, lambda_hi], doubling the upper end
//! until the predicate holds, bounded by a configured cap. The detachment
//! response is empirically monotone in the speed; every evaluation lands in
//! a trace that is checked after the fact, and a violation reruns the fit
//! as a plain scan for the smallest predicate-true speed.
//!
//! Pressure is reconstructed per streamline from the Bernoulli invariant
//! B(t) = u0(kappa(t))^2 / 2 + p_in evaluated at the local stream value:
//! p = B(psi) - (u^2 + v^2) / 2. This is exact along streamlines and avoids
//! path-dependent quadrature.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::domain::{
    assemble_dirichlet, build_domain, rasterize, NodeClass, NozzleGeometry, TruncatedDomainGrid,
};
use crate::error::{Error, Result};
use crate::fmath;
use crate::freeboundary::{
    extract_curve, near_wall, run_diagnostics, DiagnosticsConfig, DiagnosticsReport,
    FreeBoundaryCurve, ProbeSummary,
};
use crate::profiles::{inlet_stream, DownstreamState, UpstreamProfile, VorticityModel};
use crate::solver::{minimize, SolveReport, SolverConfig, StreamField, SweepOrder};

/// A physical case: nozzle shape plus the upstream shear entering it.
#[derive(Debug, Clone)]
pub struct CaseSetup {
    geometry: NozzleGeometry,
    vort: VorticityModel,
}

impl CaseSetup {
    /// Couples a geometry with an upstream profile. The profile must be
    /// defined on exactly the upstream channel height of the geometry.
    pub fn new(geometry: NozzleGeometry, profile: UpstreamProfile) -> Result<Self> {
        let hg = geometry.h_upstream();
        let hp = profile.height();
        if fmath::abs(hg - hp) > 1e-9 * (1.0 + hg) {
            return Err(Error::config(format!(
                "profile height {hp} does not match the upstream channel height {hg}"
            )));
        }
        let vort = VorticityModel::build(&profile)?;
        Ok(Self { geometry, vort })
    }

    pub fn geometry(&self) -> &NozzleGeometry {
        &self.geometry
    }

    pub fn vorticity(&self) -> &VorticityModel {
        &self.vort
    }

    pub fn profile(&self) -> &UpstreamProfile {
        self.vort.profile()
    }
}

/// Outer-loop knobs. Zero values mean "pick the documented default".
#[derive(Debug, Clone)]
pub struct FitConfig {
    /// Initial upper bracket speed; 0 picks 2 * lambda0.
    pub lambda_hi: f64,
    /// Bracket expansion cap; 0 picks 10 * lambda0. Reaching the cap is a
    /// reported fitting failure, never an estimate of the true bound.
    pub lambda_cap: f64,
    /// Accepted bracket width; 0 picks 1e-3 * lambda0.
    pub tol_lambda: f64,
    /// Allowed |k(0) - a|; 0 picks 2 * h. Must be at least one cell.
    pub tol_detach: f64,
    /// Bisection budget; 0 picks 64.
    pub max_bisections: usize,
    /// Interface columns in the k(0) line fit; 0 picks 4.
    pub extrapolation_columns: usize,
    /// (truncation length L, grid spacing h) pairs, increasing in L; only
    /// continuation_in_l reads this.
    pub l_schedule: Vec<(f64, f64)>,
    pub solver: SolverConfig,
    pub diagnostics: DiagnosticsConfig,
    /// Attach the curve diagnostics bundle to fitted solutions.
    pub run_diagnostics: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            lambda_hi: 0.0,
            lambda_cap: 0.0,
            tol_lambda: 0.0,
            tol_detach: 0.0,
            max_bisections: 0,
            extrapolation_columns: 0,
            l_schedule: Vec::new(),
            solver: SolverConfig::default(),
            diagnostics: DiagnosticsConfig::default(),
            run_diagnostics: true,
        }
    }
}

struct ResolvedFit {
    lambda0: f64,
    lambda_hi: f64,
    cap: f64,
    tol_lambda: f64,
    tol_detach: f64,
    max_bisections: usize,
    m: usize,
}

fn resolve_fit(setup: &CaseSetup, h: f64, config: &FitConfig) -> Result<ResolvedFit> {
    let lambda0 = setup.profile().lambda0();
    let tol_lambda = if config.tol_lambda > 0.0 { config.tol_lambda } else { 1e-3 * lambda0 };
    let tol_detach = if config.tol_detach > 0.0 { config.tol_detach } else { 2.0 * h };
    if tol_detach < h * (1.0 - 1e-12) {
        return Err(Error::config(format!(
            "tol_detach {tol_detach} is below one grid cell {h}; the detachment height is only resolved to cell accuracy"
        )));
    }
    let lambda_hi = if config.lambda_hi > 0.0 { config.lambda_hi } else { 2.0 * lambda0 };
    if lambda_hi <= lambda0 {
        return Err(Error::config(format!(
            "upper bracket speed {lambda_hi} must exceed the base speed {lambda0}"
        )));
    }
    let cap = if config.lambda_cap > 0.0 { config.lambda_cap } else { 10.0 * lambda0 };
    if cap < lambda_hi {
        return Err(Error::config(format!(
            "bracket cap {cap} is below the initial upper speed {lambda_hi}"
        )));
    }
    let m = if config.extrapolation_columns > 0 { config.extrapolation_columns } else { 4 };
    let max_bisections = if config.max_bisections > 0 { config.max_bisections } else { 64 };
    Ok(ResolvedFit { lambda0, lambda_hi, cap, tol_lambda, tol_detach, max_bisections, m })
}

/// One evaluation of the inner problem: the converged field at a fixed
/// speed together with its interface curve and detachment height.
#[derive(Debug, Clone)]
pub struct SolvedCase {
    pub lambda: f64,
    pub downstream: DownstreamState,
    pub grid: TruncatedDomainGrid,
    pub field: StreamField,
    pub curve: FreeBoundaryCurve,
    /// Interface height extrapolated to the lip column x = 0.
    pub k0: f64,
    pub report: SolveReport,
}

/// One (speed, detachment height) pair of the fitting trace.
#[derive(Debug, Clone, Copy)]
pub struct FitSample {
    pub lambda: f64,
    pub k0: f64,
}

struct PreparedCase {
    inlet_height: f64,
    raw: TruncatedDomainGrid,
}

fn prepare_grid(setup: &CaseSetup, l: f64, h: f64) -> Result<PreparedCase> {
    let dom = build_domain(setup.geometry(), l)?;
    let raw = rasterize(&dom, h)?;
    Ok(PreparedCase { inlet_height: dom.inlet_height(), raw })
}

fn solve_on(
    setup: &CaseSetup,
    pc: &PreparedCase,
    lambda: f64,
    m: usize,
    solver: &SolverConfig,
) -> Result<SolvedCase> {
    let vort = &setup.vort;
    let lambda0 = setup.profile().lambda0();
    if !(lambda >= lambda0 * (1.0 - 1e-12)) {
        return Err(Error::config(format!(
            "speed {lambda} is below the admissible minimum {lambda0}"
        )));
    }
    let ds = DownstreamState::build(setup.profile(), lambda)?;
    let inlet = inlet_stream(pc.inlet_height, vort)?;
    let grid = assemble_dirichlet(&pc.raw, &ds, &inlet)?;
    let init = StreamField::init_downstream(&grid, &ds)?;
    let (field, report) = minimize(&grid, vort, lambda, solver, &init)?;
    if !report.converged {
        return Err(Error::non_convergence(format!(
            "solve at speed {lambda} stopped after {} sweeps with max change {:.3e} still above tolerance",
            report.sweeps, report.final_max_change
        )));
    }
    let curve = extract_curve(&grid, &field, lambda0)?;
    let k0 = detachment_from_curve(&curve, m)?;
    Ok(SolvedCase { lambda, downstream: ds, grid, field, curve, k0, report })
}

/// Least-squares line through the first `m` usable interface columns,
/// evaluated at x = 0. Truncated columns do not count.
fn detachment_from_curve(curve: &FreeBoundaryCurve, m: usize) -> Result<f64> {
    let pts: Vec<(f64, f64)> = curve
        .samples()
        .iter()
        .filter(|s| !s.truncated)
        .take(m)
        .map(|s| (s.x, s.k))
        .collect();
    if pts.is_empty() {
        return Err(Error::invariant("interface curve has no usable columns near the lip"));
    }
    if pts.len() == 1 {
        return Ok(pts[0].1);
    }
    let (intercept, _) = line_fit(&pts);
    Ok(intercept)
}

/// Mean-centered least squares; needs at least two distinct abscissae.
fn line_fit(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for &(x, y) in pts {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    let slope = sxy / sxx;
    (my - slope * mx, slope)
}

/// Builds the truncated problem for (lambda, L, h), minimizes, and returns
/// the converged case. Speeds below the base speed are rejected; solver
/// non-convergence is an error carrying the partial convergence record.
pub fn solve_case(
    setup: &CaseSetup,
    lambda: f64,
    l: f64,
    h: f64,
    config: &FitConfig,
) -> Result<SolvedCase> {
    let r = resolve_fit(setup, h, config)?;
    let pc = prepare_grid(setup, l, h)?;
    solve_on(setup, &pc, lambda, r.m, &config.solver)
}

/// Detachment height k(0) of the minimizer at a fixed speed: the interface
/// curve of the converged field, line-fitted over the first configured
/// columns and extrapolated to the lip column.
pub fn detachment_height(
    setup: &CaseSetup,
    lambda: f64,
    l: f64,
    h: f64,
    config: &FitConfig,
) -> Result<f64> {
    Ok(solve_case(setup, lambda, l, h, config)?.k0)
}

struct Driver<'a> {
    setup: &'a CaseSetup,
    pc: PreparedCase,
    m: usize,
    solver: &'a SolverConfig,
    trace: Vec<FitSample>,
}

impl Driver<'_> {
    fn eval(&mut self, lambda: f64) -> Result<SolvedCase> {
        let case = solve_on(self.setup, &self.pc, lambda, self.m, self.solver)?;
        self.trace.push(FitSample { lambda, k0: case.k0 });
        Ok(case)
    }
}

/// Pairs (i, j) with lambda_i < lambda_j whose detachment heights run the
/// wrong way by more than `slack`: k0_j > k0_i + slack.
fn monotone_violations(trace: &[FitSample], slack: f64) -> usize {
    let mut count = 0;
    for a in trace {
        for b in trace {
            if a.lambda < b.lambda && b.k0 > a.k0 + slack {
                count += 1;
            }
        }
    }
    count
}

/// Plain scan for the smallest speed with k0(lambda) < a, assuming only
/// that the predicate is false at `lo` and true at `hi`. Each level splits
/// the bracket evenly and keeps [last false, first true]; this locates the
/// first crossing even when the response is not monotone.
fn scan_smallest_true(
    eval: &mut dyn FnMut(f64) -> Result<f64>,
    mut lo: f64,
    mut hi: f64,
    a: f64,
    tol: f64,
) -> Result<f64> {
    const POINTS: usize = 8;
    let mut guard = 0usize;
    while hi - lo > tol {
        guard += 1;
        if guard > 64 {
            return Err(Error::non_convergence(
                "speed scan failed to isolate the smallest detaching speed",
            ));
        }
        let step = (hi - lo) / (POINTS as f64 + 1.0);
        let mut first_true = hi;
        let mut last_false = lo;
        for t in 1..=POINTS {
            let lambda = lo + step * t as f64;
            if eval(lambda)? < a {
                first_true = lambda;
                break;
            }
            last_false = lambda;
        }
        lo = last_false;
        hi = first_true;
    }
    Ok(hi)
}

/// Nodal velocity and pressure reconstructed from a converged field.
/// Entries are NaN at dry and exterior nodes and wherever no difference
/// stencil fits.
#[derive(Debug, Clone)]
pub struct VelocityPressure {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub p: Vec<f64>,
    pub p_in: f64,
    pub p_atm: f64,
}

/// Centered differences for (u, v) = (psi_y, -psi_x) on wet nodes, one-sided
/// against region edges, and p = B(psi) - (u^2 + v^2) / 2 with the Bernoulli
/// function B(t) = u0(kappa(t))^2 / 2 + p_in.
pub fn velocity_pressure_fields(
    grid: &TruncatedDomainGrid,
    field: &StreamField,
    vort: &VorticityModel,
    downstream: &DownstreamState,
) -> VelocityPressure {
    let (nx, ny, h) = (grid.nx(), grid.ny(), grid.h());
    let q = grid.q();
    let psi = field.psi();
    let n = nx * ny;
    let mut u = alloc::vec![f64::NAN; n];
    let mut v = alloc::vec![f64::NAN; n];
    let mut p = alloc::vec![f64::NAN; n];
    let avail = |i: usize, j: usize| grid.class_at(grid.idx(i, j)) != NodeClass::Exterior;
    for j in 0..ny {
        for i in 0..nx {
            let k = grid.idx(i, j);
            if grid.class_at(k) == NodeClass::Exterior || !field.is_wet(k) {
                continue;
            }
            let up = j + 1 < ny && avail(i, j + 1);
            let dn = j > 0 && avail(i, j - 1);
            let uy = match (up, dn) {
                (true, true) => (psi[k + nx] - psi[k - nx]) / (2.0 * h),
                (true, false) => (psi[k + nx] - psi[k]) / h,
                (false, true) => (psi[k] - psi[k - nx]) / h,
                (false, false) => continue,
            };
            let rt = i + 1 < nx && avail(i + 1, j);
            let lf = i > 0 && avail(i - 1, j);
            let px = match (rt, lf) {
                (true, true) => (psi[k + 1] - psi[k - 1]) / (2.0 * h),
                (true, false) => (psi[k + 1] - psi[k]) / h,
                (false, true) => (psi[k] - psi[k - 1]) / h,
                (false, false) => continue,
            };
            u[k] = uy;
            v[k] = -px;
            if let Ok(kap) = vort.kappa(psi[k].clamp(0.0, q)) {
                let u0 = vort.profile().u0(kap);
                p[k] = 0.5 * u0 * u0 + downstream.p_in() - 0.5 * (uy * uy + px * px);
            }
        }
    }
    VelocityPressure { u, v, p, p_in: downstream.p_in(), p_atm: downstream.p_atm() }
}

/// Smallest horizontal velocity over wet nodes at Chebyshev distance >= 2
/// from walls and in/outflow edges (the bottom axis does not count).
/// Infinity when no node qualifies.
pub fn wet_velocity_floor(grid: &TruncatedDomainGrid, field: &StreamField, u: &[f64]) -> f64 {
    let mut floor = f64::INFINITY;
    for j in 0..grid.ny() {
        for i in 0..grid.nx() {
            let k = grid.idx(i, j);
            if grid.class_at(k) == NodeClass::Exterior || !field.is_wet(k) || u[k].is_nan() {
                continue;
            }
            if near_wall(grid, i, j) {
                continue;
            }
            floor = floor.min(u[k]);
        }
    }
    floor
}

/// Max |p - p_atm| over the interface, with the surface pressure taken from
/// the Bernoulli invariant at the surface stream value and the sampled
/// interface gradient: p = B(Q) - |grad psi|^2 / 2.
pub fn curve_pressure_deviation(
    curve: &FreeBoundaryCurve,
    vort: &VorticityModel,
    downstream: &DownstreamState,
) -> f64 {
    let q = vort.q();
    let b_q = match vort.kappa(q) {
        Ok(kap) => {
            let u0 = vort.profile().u0(kap);
            0.5 * u0 * u0 + downstream.p_in()
        }
        Err(_) => return f64::NAN,
    };
    let mut worst = 0.0f64;
    for s in curve.samples() {
        if let Some(g) = s.grad_mag {
            worst = worst.max(fmath::abs(b_q - 0.5 * g * g - downstream.p_atm()));
        }
    }
    worst
}

/// Max |psi - expected(y)| over the non-exterior nodes of the grid column
/// nearest to `x`. Errors when `x` lies outside the grid.
pub fn column_deviation(
    grid: &TruncatedDomainGrid,
    field: &StreamField,
    x: f64,
    expected: &dyn Fn(f64) -> f64,
) -> Result<f64> {
    let h = grid.h();
    let x_min = grid.x_of(0);
    let x_max = grid.x_of(grid.nx() - 1);
    if !(x >= x_min - 0.5 * h && x <= x_max + 0.5 * h) {
        return Err(Error::domain(format!(
            "probe column x = {x} outside the grid range [{x_min}, {x_max}]"
        )));
    }
    let i = (((x - x_min) / h) + 0.5) as usize;
    let i = i.min(grid.nx() - 1);
    let psi = field.psi();
    let mut dev = 0.0f64;
    let mut seen = false;
    for j in 0..grid.ny() {
        let k = grid.idx(i, j);
        if grid.class_at(k) == NodeClass::Exterior {
            continue;
        }
        seen = true;
        dev = dev.max(fmath::abs(psi[k] - expected(grid.y_of(j))));
    }
    if !seen {
        return Err(Error::domain(format!("probe column x = {x} has no nodes inside the region")));
    }
    Ok(dev)
}

/// Far-field deviations of a converged field: against the upstream
/// cumulative flux at x = -L/2, against the downstream stream profile at
/// x = 3L/4, and of the interface height against the asymptotic thickness
/// over x in [0.7 L, 0.85 L] (None when no interface column lands there).
#[derive(Debug, Clone)]
pub struct AsymptoticsReport {
    pub upstream_x: f64,
    pub upstream_dev: f64,
    pub downstream_x: f64,
    pub downstream_dev: f64,
    pub tail_dev: Option<f64>,
}

pub fn asymptotics_report(
    grid: &TruncatedDomainGrid,
    field: &StreamField,
    vort: &VorticityModel,
    downstream: &DownstreamState,
    curve: &FreeBoundaryCurve,
) -> Result<AsymptoticsReport> {
    let l = grid.x_of(grid.nx() - 1);
    let q = grid.q();
    let prof = vort.profile();
    let h_up = prof.height();
    let upstream_x = -0.5 * l;
    let upstream_dev = column_deviation(grid, field, upstream_x, &|y: f64| {
        prof.cumulative_flux(y.clamp(0.0, h_up)).min(q)
    })?;
    let downstream_x = 0.75 * l;
    let downstream_dev =
        column_deviation(grid, field, downstream_x, &|y: f64| downstream.psi_lambda(y))?;
    let h_asym = downstream.h();
    let mut tail_dev: Option<f64> = None;
    for s in curve.samples() {
        if s.truncated || s.x < 0.7 * l || s.x > 0.85 * l {
            continue;
        }
        let d = fmath::abs(s.k - h_asym);
        tail_dev = Some(tail_dev.map_or(d, |t: f64| t.max(d)));
    }
    Ok(AsymptoticsReport { upstream_x, upstream_dev, downstream_x, downstream_dev, tail_dev })
}

/// Least-squares slope of the interface over its first m+1 usable columns.
/// Errors (in place of a slope) when m < 2 or the curve is too short; the
/// message is the skip reason.
pub fn curve_slope_near_lip(curve: &FreeBoundaryCurve, m: usize) -> Result<f64> {
    if m < 2 {
        return Err(Error::config(format!("slope fit needs at least 2 columns, got m = {m}")));
    }
    let pts: Vec<(f64, f64)> = curve
        .samples()
        .iter()
        .filter(|s| !s.truncated)
        .take(m + 1)
        .map(|s| (s.x, s.k))
        .collect();
    if pts.len() < m + 1 {
        return Err(Error::domain(format!(
            "interface curve has only {} usable columns near the lip, need {}",
            pts.len(),
            m + 1
        )));
    }
    Ok(line_fit(&pts).1)
}

/// |interface slope at the lip - wall slope at the lip|: the tangency gap
/// of the fitted solution. Pass thresholds scale like sqrt(h) and belong to
/// the caller.
pub fn smooth_fit_check(
    curve: &FreeBoundaryCurve,
    geometry: &NozzleGeometry,
    m: usize,
) -> Result<f64> {
    Ok(fmath::abs(curve_slope_near_lip(curve, m)? - geometry.g_prime_at_0()))
}

/// A fitted jet: the accepted speed with its converged field and every
/// derived quantity and named invariant check.
#[derive(Debug, Clone)]
pub struct JetSolution {
    pub lambda: f64,
    /// Detachment height at the accepted speed.
    pub k0: f64,
    /// Lip height the detachment was fitted to.
    pub a: f64,
    /// Largest wall height; the interface must stay below it.
    pub h_bar: f64,
    /// Asymptotic downstream thickness at the accepted speed.
    pub h_asymptotic: f64,
    pub q: f64,
    pub p_diff: f64,
    pub p_atm: f64,
    pub p_in: f64,
    pub l: f64,
    pub h: f64,
    pub grid: TruncatedDomainGrid,
    pub field: StreamField,
    pub curve: FreeBoundaryCurve,
    pub velocity: VelocityPressure,
    pub solve: SolveReport,
    pub diagnostics: Option<DiagnosticsReport>,
    pub asymptotics: AsymptoticsReport,
    /// Tangency gap |k'(0) - g'(0)|; None when skipped, with the reason.
    pub smooth_fit_gap: Option<f64>,
    pub smooth_fit_note: String,
    /// Max |p - p_atm| over the interface.
    pub curve_pressure_dev: f64,
    /// Every (speed, detachment) evaluation of the fit, in order.
    pub fit_trace: Vec<FitSample>,
    pub checks: Vec<ProbeSummary>,
    /// All named checks passed.
    pub pass: bool,
}

impl JetSolution {
    pub fn check(&self, name: &str) -> Option<&ProbeSummary> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Max over non-exterior nodes of psi minus the capped downstream profile,
/// both at the node height (strict) and at one cell above (slack): the
/// discrete interface resolves heights only to one cell, so the slack form
/// is the gate and the strict form is reported.
fn comparison_excess(
    grid: &TruncatedDomainGrid,
    field: &StreamField,
    downstream: &DownstreamState,
) -> (f64, f64) {
    let (nx, ny) = (grid.nx(), grid.ny());
    let q = grid.q();
    let mut bound = Vec::with_capacity(ny);
    for j in 0..ny {
        bound.push(downstream.psi_lambda(grid.y_of(j)).min(q));
    }
    let psi = field.psi();
    let mut strict = f64::NEG_INFINITY;
    let mut slack = f64::NEG_INFINITY;
    for j in 0..ny {
        let above = if j + 1 < ny { bound[j + 1] } else { q };
        for i in 0..nx {
            let k = grid.idx(i, j);
            if grid.class_at(k) == NodeClass::Exterior {
                continue;
            }
            strict = strict.max(psi[k] - bound[j]);
            slack = slack.max(psi[k] - above);
        }
    }
    (strict, slack)
}

fn build_solution(
    setup: &CaseSetup,
    case: SolvedCase,
    trace: Vec<FitSample>,
    l: f64,
    h: f64,
    r: &ResolvedFit,
    config: &FitConfig,
    monotone_ok: bool,
    fallback_used: bool,
) -> JetSolution {
    let vort = setup.vorticity();
    let geom = setup.geometry();
    let a = geom.a();
    let h_bar = geom.h_bar();
    let q = case.grid.q();
    let tol_field = config.solver.tol_field_for(q);
    let velocity = velocity_pressure_fields(&case.grid, &case.field, vort, &case.downstream);
    let floor = wet_velocity_floor(&case.grid, &case.field, &velocity.u);
    let curve_pressure_dev = curve_pressure_deviation(&case.curve, vort, &case.downstream);
    let asymptotics = asymptotics_report(&case.grid, &case.field, vort, &case.downstream, &case.curve)
        .expect("default probe columns lie inside the grid");
    let (smooth_fit_gap, smooth_fit_note) = match smooth_fit_check(&case.curve, geom, r.m) {
        Ok(gap) => (Some(gap), String::new()),
        Err(e) => (None, String::from(e.message())),
    };
    let diagnostics = if config.run_diagnostics {
        Some(run_diagnostics(&case.grid, &case.field, &case.curve, vort, case.lambda, &config.diagnostics))
    } else {
        None
    };

    let mut checks = Vec::new();
    let detach_gap = fmath::abs(case.k0 - a);
    checks.push(ProbeSummary {
        name: "detachment",
        pass: detach_gap <= r.tol_detach,
        detail: format!("|k(0) - a| = {detach_gap:.3e}, allowed {:.3e}", r.tol_detach),
    });
    let truncated = case.curve.samples().iter().filter(|s| s.truncated).count();
    let max_k = case.curve.max_k();
    checks.push(ProbeSummary {
        name: "curve_bound",
        pass: truncated == 0 && max_k <= h_bar + h + 1e-12 * (1.0 + h_bar),
        detail: format!("max k = {max_k:.6}, wall bound {h_bar:.6} + one cell, {truncated} truncated columns"),
    });
    let (strict_excess, slack_excess) = comparison_excess(&case.grid, &case.field, &case.downstream);
    checks.push(ProbeSummary {
        name: "comparison_bound",
        pass: slack_excess <= tol_field,
        detail: format!(
            "psi exceeds the downstream profile by {strict_excess:.3e} at node height, {slack_excess:.3e} with one cell of slack (allowed {tol_field:.3e})"
        ),
    });
    checks.push(ProbeSummary {
        name: "velocity_floor",
        pass: floor >= -tol_field,
        detail: format!("min interior wet u = {floor:.3e}, allowed {:.3e}", -tol_field),
    });
    let h_asymptotic = case.downstream.h();
    checks.push(ProbeSummary {
        name: "asymptotic_height",
        pass: h_asymptotic <= a + h + 1e-12 * (1.0 + a),
        detail: format!("h = {h_asymptotic:.6} vs lip {a:.6} + one cell"),
    });
    checks.push(ProbeSummary {
        name: "monotone_trace",
        pass: monotone_ok,
        detail: if monotone_ok {
            String::from("detachment response monotone within 2h across the trace")
        } else if fallback_used {
            String::from("non-monotone response; accepted speed from the fallback scan")
        } else {
            String::from("non-monotone detachment response across the trace")
        },
    });
    let pass = checks.iter().all(|c| c.pass);

    JetSolution {
        lambda: case.lambda,
        k0: case.k0,
        a,
        h_bar,
        h_asymptotic,
        q,
        p_diff: case.downstream.p_diff(),
        p_atm: case.downstream.p_atm(),
        p_in: case.downstream.p_in(),
        l,
        h,
        grid: case.grid,
        field: case.field,
        curve: case.curve,
        velocity,
        solve: case.report,
        diagnostics,
        asymptotics,
        smooth_fit_gap,
        smooth_fit_note,
        curve_pressure_dev,
        fit_trace: trace,
        checks,
        pass,
    }
}

/// Fits the smallest speed whose interface detaches below the lip and
/// returns it with the full solution at that speed. See the module docs
/// for the bracket and fallback logic.
pub fn fit_lambda(
    setup: &CaseSetup,
    l: f64,
    h: f64,
    config: &FitConfig,
) -> Result<(f64, JetSolution)> {
    fit_lambda_seeded(setup, l, h, config, None)
}

/// `fit_lambda` with an optional first midpoint, used by the continuation
/// to reuse the previous truncation's fitted speed.
pub fn fit_lambda_seeded(
    setup: &CaseSetup,
    l: f64,
    h: f64,
    config: &FitConfig,
    seed: Option<f64>,
) -> Result<(f64, JetSolution)> {
    let r = resolve_fit(setup, h, config)?;
    let pc = prepare_grid(setup, l, h)?;
    let a = setup.geometry().a();
    let mut drv = Driver { setup, pc, m: r.m, solver: &config.solver, trace: Vec::new() };

    let lo_case = drv.eval(r.lambda0)?;
    let mut fallback_used = false;
    // At the base speed the jet keeps its upstream thickness, so only a
    // flat or expanding exit (H <= a) can already be fitted there; for a
    // converging exit k(0) sits above the lip at the base speed even when
    // the gap is under tol_detach, and the bisection must run.
    let flat_exit = setup.profile().height() <= a + 1e-9 * (1.0 + a);
    let accepted: SolvedCase;
    if flat_exit && fmath::abs(lo_case.k0 - a) <= r.tol_detach {
        accepted = lo_case;
    } else if lo_case.k0 < a {
        return Err(Error::domain(format!(
            "interface detaches {:.4} below the lip already at the base speed {}; no continuous fit in this geometry",
            a - lo_case.k0,
            r.lambda0
        )));
    } else {
        let mut lo = r.lambda0;
        let mut lo_k = lo_case.k0;
        let mut hi = r.lambda_hi;
        let mut hi_case = drv.eval(hi)?;
        while !(hi_case.k0 < a) {
            let next = 2.0 * hi;
            if next > r.cap * (1.0 + 1e-12) {
                return Err(Error::non_convergence(format!(
                    "no speed up to the cap {:.6} detaches the interface below the lip (k(0) = {:.6} >= a = {a} at speed {hi})",
                    r.cap, hi_case.k0
                )));
            }
            lo = hi;
            lo_k = hi_case.k0;
            hi = next;
            hi_case = drv.eval(hi)?;
        }
        let mut seed = seed.filter(|s| *s > lo && *s < hi);
        let mut bisections = 0usize;
        loop {
            debug_assert!(hi_case.k0 < a && lo_k >= a);
            if hi - lo <= r.tol_lambda && fmath::abs(hi_case.k0 - a) <= r.tol_detach {
                break;
            }
            if bisections >= r.max_bisections {
                return Err(Error::non_convergence(format!(
                    "bracket [{lo:.6}, {hi:.6}] did not reach |k(0) - a| <= {:.3e} within {} bisections (end gaps {:.3e} and {:.3e})",
                    r.tol_detach,
                    r.max_bisections,
                    lo_k - a,
                    hi_case.k0 - a
                )));
            }
            let mid = seed.take().unwrap_or(0.5 * (lo + hi));
            let c = drv.eval(mid)?;
            bisections += 1;
            if c.k0 < a {
                hi = mid;
                hi_case = c;
            } else {
                lo = mid;
                lo_k = c.k0;
            }
        }
        accepted = hi_case;
    }

    let mut accepted = accepted;
    let monotone_ok = monotone_violations(&drv.trace, 2.0 * h) == 0;
    if !monotone_ok && accepted.lambda > r.lambda0 {
        // Non-monotone response: the bisection bracket is unreliable, so
        // locate the first predicate crossing by plain scanning instead.
        fallback_used = true;
        let hi_end = accepted.lambda;
        let found = {
            let drv = &mut drv;
            scan_smallest_true(
                &mut |lambda| drv.eval(lambda).map(|c| c.k0),
                r.lambda0,
                hi_end,
                a,
                r.tol_lambda,
            )?
        };
        if found != accepted.lambda {
            accepted = drv.eval(found)?;
        }
        if fmath::abs(accepted.k0 - a) > r.tol_detach {
            return Err(Error::non_convergence(format!(
                "fallback scan accepted speed {found} but |k(0) - a| = {:.3e} exceeds {:.3e}",
                fmath::abs(accepted.k0 - a),
                r.tol_detach
            )));
        }
    }

    let lambda = accepted.lambda;
    let trace = core::mem::take(&mut drv.trace);
    let solution = build_solution(setup, accepted, trace, l, h, &r, config, monotone_ok, fallback_used);
    Ok((lambda, solution))
}

/// One truncation length of a continuation run.
#[derive(Debug, Clone)]
pub struct ContinuationEntry {
    pub l: f64,
    pub h: f64,
    pub lambda: Option<f64>,
    pub k0: Option<f64>,
    pub error: Option<String>,
}

/// Fitted speeds across the truncation schedule with their spread.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub entries: Vec<ContinuationEntry>,
    /// Fitted speed at the largest successful truncation.
    pub lambda: Option<f64>,
    /// max - min fitted speed over the successful entries.
    pub spread: f64,
    /// Spread exceeded 5 * tol_lambda.
    pub unstable: bool,
    /// Full solution at the largest successful truncation.
    pub solution: Option<JetSolution>,
}

/// Fits every entry of the schedule in order, seeding each bisection with
/// the previous fitted speed. Per-entry failures are recorded and the
/// continuation proceeds; only an invalid schedule is an error.
pub fn continuation_in_l(setup: &CaseSetup, config: &FitConfig) -> Result<FitResult> {
    let schedule = &config.l_schedule;
    if schedule.is_empty() {
        return Err(Error::config("continuation needs a non-empty (L, h) schedule"));
    }
    for w in schedule.windows(2) {
        if !(w[1].0 > w[0].0) {
            return Err(Error::config(format!(
                "truncation schedule must increase: {} then {}",
                w[0].0, w[1].0
            )));
        }
    }
    for &(l, h) in schedule {
        if !(l > 0.0) || !(h > 0.0) {
            return Err(Error::config(format!("schedule entry (L = {l}, h = {h}) must be positive")));
        }
    }
    let lambda0 = setup.profile().lambda0();
    let tol_lambda = if config.tol_lambda > 0.0 { config.tol_lambda } else { 1e-3 * lambda0 };

    let mut entries = Vec::with_capacity(schedule.len());
    let mut seed: Option<f64> = None;
    let mut solution: Option<JetSolution> = None;
    for &(l, h) in schedule {
        match fit_lambda_seeded(setup, l, h, config, seed) {
            Ok((lambda, sol)) => {
                entries.push(ContinuationEntry {
                    l,
                    h,
                    lambda: Some(lambda),
                    k0: Some(sol.k0),
                    error: None,
                });
                seed = Some(lambda);
                solution = Some(sol);
            }
            Err(e) => entries.push(ContinuationEntry {
                l,
                h,
                lambda: None,
                k0: None,
                error: Some(String::from(e.message())),
            }),
        }
    }
    let fitted: Vec<f64> = entries.iter().filter_map(|e| e.lambda).collect();
    let spread = if fitted.len() < 2 {
        0.0
    } else {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &f in &fitted {
            lo = lo.min(f);
            hi = hi.max(f);
        }
        hi - lo
    };
    Ok(FitResult {
        entries,
        lambda: fitted.last().copied(),
        spread,
        unstable: spread > 5.0 * tol_lambda,
        solution,
    })
}

/// Re-solve agreement across restarts: both initializations (downstream
/// profile and all-dry) under both sweep orders.
#[derive(Debug, Clone)]
pub struct UniquenessReport {
    /// Max nodal gap over all branch pairs.
    pub max_gap: f64,
    /// Max nodal gap of an identical re-run; 0 when bit-exact.
    pub rerun_gap: f64,
    /// Max nodal gap of the penalized-jump mode against the exact mode;
    /// reported for the requested smoothing width, never gated.
    pub penalized_gap: Option<f64>,
    pub branches: usize,
}

/// Solves the truncated problem at a fixed speed from the downstream and
/// all-dry initializations under both sweep orders and reports the largest
/// pairwise field gap, plus a bit-exactness re-run and optionally the gap
/// of the penalized jump mode. Any non-convergent branch is an error.
pub fn uniqueness_probe(
    setup: &CaseSetup,
    lambda: f64,
    l: f64,
    h: f64,
    config: &FitConfig,
    penalized_eps: Option<f64>,
) -> Result<UniquenessReport> {
    let vort = setup.vorticity();
    let lambda0 = setup.profile().lambda0();
    if !(lambda >= lambda0 * (1.0 - 1e-12)) {
        return Err(Error::config(format!(
            "speed {lambda} is below the admissible minimum {lambda0}"
        )));
    }
    let pc = prepare_grid(setup, l, h)?;
    let ds = DownstreamState::build(setup.profile(), lambda)?;
    let inlet = inlet_stream(pc.inlet_height, vort)?;
    let grid = assemble_dirichlet(&pc.raw, &ds, &inlet)?;

    let inits = [
        ("downstream", StreamField::init_downstream(&grid, &ds)?),
        ("dry", StreamField::init_dry(&grid)?),
    ];
    let orders = [
        ("lexicographic", SweepOrder::Lexicographic),
        ("red-black", SweepOrder::RedBlack),
    ];
    let run = |init: &StreamField, order: SweepOrder, label: &str, mode: Option<f64>| -> Result<StreamField> {
        let mut cfg = config.solver.clone();
        cfg.sweep_order = order;
        if let Some(eps) = mode {
            cfg.mode = crate::solver::JumpMode::Penalized { eps };
        } else {
            cfg.mode = crate::solver::JumpMode::Exact;
        }
        let (field, report) = minimize(&grid, vort, lambda, &cfg, init)?;
        if !report.converged {
            return Err(Error::non_convergence(format!(
                "uniqueness branch {label} stopped after {} sweeps with max change {:.3e}",
                report.sweeps, report.final_max_change
            )));
        }
        Ok(field)
    };

    let mut fields: Vec<StreamField> = Vec::with_capacity(4);
    for (iname, init) in &inits {
        for (oname, order) in orders {
            let label = format!("{iname}/{oname}");
            fields.push(run(init, order, &label, None)?);
        }
    }
    let mut max_gap = 0.0f64;
    let n = grid.nx() * grid.ny();
    for k in 0..n {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for f in &fields {
            let v = f.psi()[k];
            lo = lo.min(v);
            hi = hi.max(v);
        }
        max_gap = max_gap.max(hi - lo);
    }

    let rerun = run(&inits[0].1, SweepOrder::Lexicographic, "downstream/lexicographic rerun", None)?;
    let mut rerun_gap = 0.0f64;
    for k in 0..n {
        rerun_gap = rerun_gap.max(fmath::abs(rerun.psi()[k] - fields[0].psi()[k]));
    }

    let penalized_gap = match penalized_eps {
        None => None,
        Some(eps) => {
            let pf = run(&inits[0].1, SweepOrder::Lexicographic, "downstream/penalized", Some(eps))?;
            let mut g = 0.0f64;
            for k in 0..n {
                g = g.max(fmath::abs(pf.psi()[k] - fields[0].psi()[k]));
            }
            Some(g)
        }
    };

    Ok(UniquenessReport { max_gap, rerun_gap, penalized_gap, branches: fields.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::NodeSpec;

    fn straight_setup() -> CaseSetup {
        let geom = NozzleGeometry::straight(1.0).unwrap();
        let prof = UpstreamProfile::constant(1.0, 1.0).unwrap();
        CaseSetup::new(geom, prof).unwrap()
    }

    fn converging_setup() -> CaseSetup {
        let geom = NozzleGeometry::converging(1.0, 0.5).unwrap();
        let prof = UpstreamProfile::constant(1.0, 1.5).unwrap();
        CaseSetup::new(geom, prof).unwrap()
    }

    #[test]
    fn detachment_of_exact_straight_jet_is_the_lip_height() {
        let setup = straight_setup();
        let h = 1.0 / 16.0;
        let k0 = detachment_height(&setup, 1.0, 3.0, h, &FitConfig::default()).unwrap();
        assert!((k0 - 1.0).abs() <= 2.0 * h, "k0 = {k0}");
        // The flat solution is an exact fixed point, so the bound is tight.
        assert!((k0 - 1.0).abs() <= 1e-9, "k0 = {k0}");
    }

    #[test]
    fn stronger_suction_pulls_the_interface_below_the_lip() {
        let setup = straight_setup();
        let h = 1.0 / 16.0;
        let case = solve_case(&setup, 2.0, 3.0, h, &FitConfig::default()).unwrap();
        assert!((case.downstream.h() - 0.5).abs() <= 1e-9);
        assert!(case.k0 < 1.0 - h, "k0 = {}", case.k0);
    }

    #[test]
    fn speeds_below_the_admissible_minimum_are_rejected() {
        let setup = straight_setup();
        let err = detachment_height(&setup, 0.98, 3.0, 1.0 / 16.0, &FitConfig::default())
            .unwrap_err();
        assert!(err.message().contains("below the admissible minimum"), "{}", err.message());
    }

    #[test]
    fn straight_fit_recovers_the_base_speed_exactly() {
        let setup = straight_setup();
        let h = 1.0 / 16.0;
        let mut config = FitConfig::default();
        config.diagnostics.radii_cells = [2, 4, 8];
        let (lambda, sol) = fit_lambda(&setup, 3.0, h, &config).unwrap();
        assert!((lambda - 1.0).abs() < 1e-12, "lambda = {lambda}");
        assert_eq!(sol.fit_trace.len(), 1, "flat exit accepts the base speed on one solve");
        assert!(sol.p_diff.abs() < 1e-12);
        assert!(sol.pass, "checks: {:?}", sol.checks);
        assert!(sol.check("detachment").unwrap().pass);
        assert!(sol.check("comparison_bound").unwrap().pass);
        assert!(sol.check("velocity_floor").unwrap().pass);
        assert!((sol.h_asymptotic - 1.0).abs() <= 1e-9);
        let gap = sol.smooth_fit_gap.expect("slope check runs on a long curve");
        assert!(gap <= 0.05, "slope gap {gap}");
        assert!(sol.curve_pressure_dev <= 1e-6, "surface pressure dev {}", sol.curve_pressure_dev);
        let diag = sol.diagnostics.as_ref().expect("diagnostics enabled");
        assert!(diag.pass, "diagnostics: {:?}", diag.checks);
    }

    #[test]
    fn converging_fit_exceeds_the_base_speed_and_bounds_the_tail() {
        let setup = converging_setup();
        let h = 1.0 / 16.0;
        let (lambda, sol) = fit_lambda(&setup, 4.0, h, &FitConfig::default()).unwrap();
        assert!(lambda > 1.0 + 1e-3, "lambda = {lambda}");
        assert!(sol.h_asymptotic <= 1.0 + h + 1e-12, "h = {}", sol.h_asymptotic);
        assert!((sol.k0 - 1.0).abs() <= 2.0 * h, "k0 = {}", sol.k0);
        assert!(sol.fit_trace.len() >= 3);
        // Bracket invariant: every evaluation stayed in [lambda0, cap].
        for s in &sol.fit_trace {
            assert!(s.lambda >= 1.0 - 1e-12 && s.lambda <= 10.0 + 1e-12);
        }
        assert!(sol.check("monotone_trace").unwrap().pass);
        assert!(sol.pass, "checks: {:?}", sol.checks);
    }

    #[test]
    fn bracket_capped_on_the_same_side_is_an_error() {
        let setup = converging_setup();
        let config = FitConfig {
            lambda_hi: 1.02,
            lambda_cap: 1.02,
            ..FitConfig::default()
        };
        let err = fit_lambda(&setup, 4.0, 1.0 / 16.0, &config).unwrap_err();
        assert!(err.message().contains("cap"), "{}", err.message());
    }

    #[test]
    fn continuation_reports_spread_and_matches_the_single_fit() {
        let setup = straight_setup();
        let h = 1.0 / 16.0;
        let config = FitConfig {
            l_schedule: alloc::vec![(2.0, h), (3.0, h)],
            ..FitConfig::default()
        };
        let result = continuation_in_l(&setup, &config).unwrap();
        assert_eq!(result.entries.len(), 2);
        for e in &result.entries {
            assert!(e.error.is_none());
            assert!((e.lambda.unwrap() - 1.0).abs() < 1e-12);
        }
        assert!(result.spread <= 1e-12);
        assert!(!result.unstable);
        let sol = result.solution.as_ref().unwrap();
        assert_eq!(sol.l, 3.0);

        let single = FitConfig { l_schedule: alloc::vec![(3.0, h)], ..FitConfig::default() };
        let single_result = continuation_in_l(&setup, &single).unwrap();
        let (lambda, _) = fit_lambda(&setup, 3.0, h, &FitConfig::default()).unwrap();
        assert_eq!(single_result.lambda.unwrap(), lambda);

        let bad = FitConfig { l_schedule: alloc::vec![(3.0, h), (2.0, h)], ..FitConfig::default() };
        assert!(continuation_in_l(&setup, &bad).is_err());
    }

    #[test]
    fn continuation_records_per_entry_failures_and_proceeds() {
        let setup = converging_setup();
        let h = 1.0 / 16.0;
        let config = FitConfig {
            lambda_hi: 1.02,
            lambda_cap: 1.02,
            l_schedule: alloc::vec![(4.0, h), (5.0, h)],
            ..FitConfig::default()
        };
        let result = continuation_in_l(&setup, &config).unwrap();
        assert_eq!(result.entries.len(), 2);
        for e in &result.entries {
            assert!(e.lambda.is_none());
            assert!(e.error.as_ref().unwrap().contains("cap"));
        }
        assert!(result.lambda.is_none());
        assert!(result.solution.is_none());
        assert_eq!(result.spread, 0.0);
    }

    #[test]
    fn velocity_and_pressure_match_the_downstream_profile() {
        // Uniform strip carrying the exact downstream state on both sides:
        // the converged field is one-dimensional, so (u, v, p) must match
        // (u1(y), 0, Bernoulli) away from the interface kink.
        let prof = UpstreamProfile::quadratic(1.0, 1.0, 1.0).unwrap();
        let vort = VorticityModel::build(&prof).unwrap();
        let lambda = 2.5;
        let ds = DownstreamState::build(&prof, lambda).unwrap();
        let q = prof.mass_flux();
        let h = 1.0 / 64.0;
        let (nx, ny) = (97, 65);
        let grid = TruncatedDomainGrid::from_fn(nx, ny, h, h, 0.0, q, |x, y| {
            let on_edge = x < 1.5 * h || x > (nx as f64 - 2.5) * h || y < 0.5 * h
                || y > (ny as f64 - 1.5) * h;
            if on_edge {
                NodeSpec::Dirichlet { value: ds.psi_lambda(y).min(q) }
            } else {
                NodeSpec::Interior { jump: true }
            }
        })
        .unwrap();
        let init = StreamField::init_downstream(&grid, &ds).unwrap();
        let h_jet = ds.h();

        // Reconstruction accuracy on the exact profile field: centered
        // stencils are O(h^2) and the field is one-dimensional.
        let vp0 = velocity_pressure_fields(&grid, &init, &vort, &ds);
        for j in 1..ny - 1 {
            let y = grid.y_of(j);
            if y > h_jet - 2.0 * h {
                continue;
            }
            let u1 = ds.u1(y).unwrap();
            for i in 2..nx - 2 {
                let k = grid.idx(i, j);
                assert!((vp0.u[k] - u1).abs() <= 5e-4, "u0({i},{j}) = {} vs {u1}", vp0.u[k]);
                assert_eq!(vp0.v[k], 0.0, "v0({i},{j})");
                let p_exact = {
                    let kap = vort.kappa(init.psi()[k]).unwrap();
                    let u0 = prof.u0(kap);
                    0.5 * u0 * u0 + ds.p_in() - 0.5 * u1 * u1
                };
                assert!((vp0.p[k] - p_exact).abs() <= 3e-3, "p0({i},{j}) = {} vs {p_exact}", vp0.p[k]);
            }
        }

        let (field, report) =
            minimize(&grid, &vort, lambda, &SolverConfig::default(), &init).unwrap();
        assert!(report.converged);

        let vp = velocity_pressure_fields(&grid, &field, &vort, &ds);
        // The edge columns carry the continuum profile while the interior
        // equilibrates to its discrete analogue, leaving an edge layer that
        // decays like exp(-pi x); probe the middle third, away from the
        // interface kink.
        for j in 1..ny - 1 {
            let y = grid.y_of(j);
            if y > h_jet - 3.0 * h {
                continue;
            }
            for i in nx / 3..2 * nx / 3 {
                let k = grid.idx(i, j);
                let u1 = ds.u1(y).unwrap();
                // The discrete front rounds h_lambda up to a grid row, so
                // flux conservation shifts u by O(lambda h) in the interior.
                assert!((vp.u[k] - u1).abs() <= 2.5e-2, "u({i},{j}) = {} vs {}", vp.u[k], u1);
                assert!(vp.v[k].abs() <= 5e-3, "v({i},{j}) = {}", vp.v[k]);
                let p_exact = {
                    let kap = vort.kappa(field.psi()[k]).unwrap();
                    let u0 = prof.u0(kap);
                    0.5 * u0 * u0 + ds.p_in() - 0.5 * u1 * u1
                };
                assert!((vp.p[k] - p_exact).abs() <= 6e-2, "p({i},{j}) = {} vs {p_exact}", vp.p[k]);
            }
        }

        let curve = extract_curve(&grid, &field, prof.lambda0()).unwrap();
        for s in curve.samples() {
            assert!(!s.truncated);
            assert!((s.k - h_jet).abs() <= 2.0 * h, "k = {} vs {h_jet}", s.k);
            if let Some(g) = s.grad_mag {
                assert!((g - lambda).abs() <= 0.15 * lambda, "interface gradient {g}");
            }
        }
        // The gradient samples carry the O(h) one-sided stencil error, so
        // the surface pressure check is correspondingly coarse.
        let dev = curve_pressure_deviation(&curve, &vort, &ds);
        assert!(dev <= 0.6, "surface pressure deviation {dev}");
    }

    #[test]
    fn reversed_flow_is_flagged_by_the_velocity_floor() {
        // Synthetic wet field decreasing in y: u < 0 everywhere.
        let q = 1.0;
        let h = 0.125;
        let profile = |y: f64| q * (0.8 - 0.3 * y);
        let grid = TruncatedDomainGrid::from_fn(11, 11, h, 0.5, 0.0, q, |x, y| {
            if x < 0.5 + 0.5 * h || x > 0.5 + 9.5 * h || y < 0.5 * h || y > 9.5 * h {
                NodeSpec::Dirichlet { value: profile(y) }
            } else {
                NodeSpec::Interior { jump: true }
            }
        })
        .unwrap();
        let field = StreamField::init_with(&grid, |_, y| profile(y)).unwrap();
        let prof = UpstreamProfile::constant(1.0, 1.0).unwrap();
        let vort = VorticityModel::build(&prof).unwrap();
        let ds = DownstreamState::build(&prof, 1.0).unwrap();
        let vp = velocity_pressure_fields(&grid, &field, &vort, &ds);
        let floor = wet_velocity_floor(&grid, &field, &vp.u);
        assert!(floor < -0.2, "floor = {floor}");
    }

    #[test]
    fn asymptotics_are_tight_on_the_straight_jet_and_reject_outside_probes() {
        let setup = straight_setup();
        let h = 1.0 / 16.0;
        let case = solve_case(&setup, 1.0, 3.0, h, &FitConfig::default()).unwrap();
        let rep = asymptotics_report(&case.grid, &case.field, setup.vorticity(), &case.downstream, &case.curve)
            .unwrap();
        assert!(rep.upstream_dev <= 1e-9, "upstream {}", rep.upstream_dev);
        assert!(rep.downstream_dev <= 1e-9, "downstream {}", rep.downstream_dev);
        assert!(rep.tail_dev.unwrap() <= 1e-9, "tail {:?}", rep.tail_dev);

        let err =
            column_deviation(&case.grid, &case.field, 100.0, &|_| 0.0).unwrap_err();
        assert!(err.message().contains("outside"), "{}", err.message());
    }

    #[test]
    fn slope_check_skips_degenerate_requests() {
        let setup = straight_setup();
        let h = 1.0 / 16.0;
        let case = solve_case(&setup, 1.0, 3.0, h, &FitConfig::default()).unwrap();
        let gap = smooth_fit_check(&case.curve, setup.geometry(), 4).unwrap();
        assert!(gap <= 0.05, "gap = {gap}");

        let err = curve_slope_near_lip(&case.curve, 1).unwrap_err();
        assert!(err.message().contains("at least 2"), "{}", err.message());
        let err = curve_slope_near_lip(&case.curve, 500).unwrap_err();
        assert!(err.message().contains("usable columns"), "{}", err.message());
    }

    #[test]
    fn tilted_interface_slope_is_recovered_by_the_line_fit() {
        // Exact tilted surface k(x) = 0.2 + 0.15 x sampled on a synthetic
        // box; the extracted slope must match the tilt.
        let q = 1.0;
        let lambda = 1.5;
        let slope = 0.15;
        let h = 1.0 / 32.0;
        let (nx, ny) = (33, 33);
        let kline = |x: f64| 0.2 + slope * x;
        let psi = |x: f64, y: f64| {
            let d = kline(x) - y;
            if d > 0.0 {
                q - lambda * d
            } else {
                q
            }
        };
        let grid = TruncatedDomainGrid::from_fn(nx, ny, h, 0.25, 0.0, q, |x, y| {
            if x < 0.25 + 0.5 * h || x > 0.25 + (nx as f64 - 1.5) * h || y < 0.5 * h
                || y > (ny as f64 - 1.5) * h
            {
                NodeSpec::Dirichlet { value: psi(x, y).clamp(0.0, q) }
            } else {
                NodeSpec::Interior { jump: true }
            }
        })
        .unwrap();
        let field = StreamField::init_with(&grid, psi).unwrap();
        let curve = extract_curve(&grid, &field, 1.0).unwrap();
        let fitted = curve_slope_near_lip(&curve, 4).unwrap();
        assert!((fitted - slope).abs() <= 1e-9, "slope = {fitted}");
    }

    #[test]
    fn uniqueness_branches_agree_on_the_straight_jet() {
        let setup = straight_setup();
        let h = 1.0 / 16.0;
        let report =
            uniqueness_probe(&setup, 1.3, 3.0, h, &FitConfig::default(), Some(1e-4)).unwrap();
        assert_eq!(report.branches, 4);
        let tol = 1e-8; // solver default field tolerance at Q = 1
        assert!(report.max_gap <= 10.0 * tol, "max gap {}", report.max_gap);
        assert_eq!(report.rerun_gap, 0.0, "re-run must be bit-exact");
        let pg = report.penalized_gap.unwrap();
        assert!(pg <= 0.1, "penalized gap {pg}");
    }

    #[test]
    fn scan_finds_the_smallest_detaching_speed_on_a_non_monotone_response() {
        // Synthetic response with a bump: predicate-true on [1.3, 1.5) and
        // [1.6, 2], false elsewhere. The smallest true speed is 1.3.
        let mut evals = 0usize;
        let mut k0 = |lambda: f64| -> Result<f64> {
            evals += 1;
            Ok(if lambda < 1.3 {
                1.2
            } else if lambda < 1.5 {
                0.9
            } else if lambda < 1.6 {
                1.05
            } else {
                0.8
            })
        };
        let found = scan_smallest_true(&mut k0, 1.0, 2.0, 1.0, 1e-4).unwrap();
        assert!((found - 1.3).abs() <= 1e-4, "found {found}");
        assert!(evals < 200, "evals = {evals}");

        let trace = [
            FitSample { lambda: 1.0, k0: 1.2 },
            FitSample { lambda: 1.4, k0: 0.9 },
            FitSample { lambda: 1.55, k0: 1.05 },
        ];
        assert!(monotone_violations(&trace, 0.01) > 0);
        assert_eq!(monotone_violations(&trace[..2], 0.01), 0);
    }
}
