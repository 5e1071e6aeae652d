//! Run-configuration parsing. One TOML file drives every subcommand; flags
//! may override the scalar keys. Validation walks the whole document and
//! collects every problem (unknown key, missing key, bad value) with its
//! dotted path instead of stopping at the first.

use std::fmt;
use std::path::{Path, PathBuf};

use freejet::domain::NozzleGeometry;
use freejet::freeboundary::DiagnosticsConfig;
use freejet::jetfit::{CaseSetup, FitConfig};
use freejet::profiles::UpstreamProfile;
use freejet::solver::{JumpMode, SolverConfig, SweepOrder};
use toml::value::{Table, Value};

/// One validation problem, addressed by the dotted path of the key.
#[derive(Debug, Clone)]
pub struct ConfigIssue {
    pub path: String,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

/// Toggle set for the per-run verification passes.
#[derive(Debug, Clone)]
pub struct ChecksConfig {
    /// Curve diagnostics bundle (density, growth, nondegeneracy, blow-up).
    pub diagnostics: bool,
    /// Lip tangency comparison k'(0) vs g'(0) on fitted solutions.
    pub smooth_fit: bool,
    /// Four-branch initialization/order probe; off by default (it re-solves
    /// the case four times).
    pub uniqueness: bool,
    /// Bit-identical re-solve; off by default (it doubles the work).
    pub determinism: bool,
}

impl Default for ChecksConfig {
    fn default() -> Self {
        Self { diagnostics: true, smooth_fit: true, uniqueness: false, determinism: false }
    }
}

/// Fully validated run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub geometry: NozzleGeometry,
    pub profile: UpstreamProfile,
    /// Preset echo lines for the run report ("straight height=1").
    pub geometry_desc: String,
    pub profile_desc: String,
    pub p_atm: f64,
    /// Fixed free-boundary speed for `solve`; fitting ignores it.
    pub lambda: Option<f64>,
    pub h: f64,
    pub l: f64,
    /// Explicit (L, h) continuation schedule; empty means "just (l, h)".
    pub schedule: Vec<(f64, f64)>,
    pub solver: SolverConfig,
    pub fit_lambda_hi: f64,
    pub fit_lambda_cap: f64,
    pub fit_tol_lambda: f64,
    pub fit_tol_detach: f64,
    pub fit_max_bisections: usize,
    pub fit_extrapolation_columns: usize,
    pub checks: ChecksConfig,
    pub diagnostics: DiagnosticsConfig,
    pub out_dir: PathBuf,
    /// Node stride of the field dump; 1 keeps every node.
    pub stride: usize,
}

impl RunConfig {
    /// The continuation schedule with the single-grid fallback applied.
    pub fn effective_schedule(&self) -> Vec<(f64, f64)> {
        if self.schedule.is_empty() {
            vec![(self.l, self.h)]
        } else {
            self.schedule.clone()
        }
    }

    /// (L, h) of the largest scheduled truncation; what `fit` runs on.
    pub fn fit_grid(&self) -> (f64, f64) {
        *self.effective_schedule().last().expect("schedule is never empty")
    }

    /// Assembled fitting configuration for the jetfit entry points.
    pub fn fit_config(&self) -> FitConfig {
        FitConfig {
            lambda_hi: self.fit_lambda_hi,
            lambda_cap: self.fit_lambda_cap,
            tol_lambda: self.fit_tol_lambda,
            tol_detach: self.fit_tol_detach,
            max_bisections: self.fit_max_bisections,
            extrapolation_columns: self.fit_extrapolation_columns,
            l_schedule: self.effective_schedule(),
            solver: self.solver.clone(),
            diagnostics: self.diagnostics.clone(),
            run_diagnostics: self.checks.diagnostics,
        }
    }
}

/// Reads and validates a configuration file.
pub fn load_config(path: &Path) -> Result<RunConfig, Vec<ConfigIssue>> {
    match std::fs::read_to_string(path) {
        Ok(text) => parse_config(&text),
        Err(e) => Err(vec![ConfigIssue {
            path: path.display().to_string(),
            message: format!("cannot read config file: {e}"),
        }]),
    }
}

/// Parses and validates configuration text, reporting every problem found.
pub fn parse_config(text: &str) -> Result<RunConfig, Vec<ConfigIssue>> {
    let root: Table = match text.parse() {
        Ok(t) => t,
        Err(e) => {
            return Err(vec![ConfigIssue { path: "(syntax)".into(), message: e.to_string() }]);
        }
    };
    let mut cx = Cx::default();
    cx.known(
        &root,
        "",
        &["geometry", "profile", "physics", "grid", "solver", "fit", "checks", "diagnostics", "output"],
    );

    let geometry = geometry_from(&mut cx, &root);
    let profile = profile_from(&mut cx, &root);

    // [physics]
    let mut p_atm = 0.0;
    let mut lambda = None;
    if let Some(t) = cx.optional_table(&root, "physics") {
        let t = t.clone();
        cx.known(&t, "physics", &["p_atm", "lambda"]);
        p_atm = cx.f64_or(&t, "physics", "p_atm", 0.0);
        lambda = cx.f64_opt(&t, "physics", "lambda");
        if let Some(v) = lambda {
            if !(v > 0.0) {
                cx.push("physics.lambda", format!("must be positive, got {v}"));
            }
        }
    }

    // [grid]
    let mut h = 0.0;
    let mut l = 0.0;
    let mut schedule = Vec::new();
    if let Some(t) = cx.required_table(&root, "grid") {
        let t = t.clone();
        cx.known(&t, "grid", &["h", "l", "schedule"]);
        h = cx.f64_req(&t, "grid", "h").unwrap_or(0.0);
        l = cx.f64_req(&t, "grid", "l").unwrap_or(0.0);
        if h != 0.0 && !(h > 0.0) {
            cx.push("grid.h", format!("must be positive, got {h}"));
        }
        if l != 0.0 && !(l > 0.0) {
            cx.push("grid.l", format!("must be positive, got {l}"));
        }
        schedule = schedule_from(&mut cx, &t);
    }

    let solver = solver_from(&mut cx, &root);
    let fit = fit_from(&mut cx, &root);
    let checks = checks_from(&mut cx, &root);
    let diagnostics = diagnostics_from(&mut cx, &root);

    // [output]
    let mut out_dir = PathBuf::from("freejet-out");
    let mut stride = 1usize;
    if let Some(t) = cx.optional_table(&root, "output") {
        let t = t.clone();
        cx.known(&t, "output", &["dir", "stride"]);
        if let Some(d) = cx.str_opt(&t, "output", "dir") {
            out_dir = PathBuf::from(d);
        }
        stride = cx.usize_or(&t, "output", "stride", 1);
        if stride == 0 {
            cx.push("output.stride", "must be at least 1, got 0");
        }
    }

    // Cross-section invariant: the profile must fill the upstream channel.
    if let (Some((g, _)), Some((p, _))) = (&geometry, &profile) {
        if let Err(e) = CaseSetup::new(g.clone(), p.clone()) {
            cx.push("profile.height", e.message());
        }
    }

    if !cx.issues.is_empty() {
        return Err(cx.issues);
    }
    let (geometry, geometry_desc) = geometry.expect("validated");
    let (profile, profile_desc) = profile.expect("validated");
    Ok(RunConfig {
        geometry,
        profile,
        geometry_desc,
        profile_desc,
        p_atm,
        lambda,
        h,
        l,
        schedule,
        solver,
        fit_lambda_hi: fit.0,
        fit_lambda_cap: fit.1,
        fit_tol_lambda: fit.2,
        fit_tol_detach: fit.3,
        fit_max_bisections: fit.4,
        fit_extrapolation_columns: fit.5,
        checks,
        diagnostics,
        out_dir,
        stride,
    })
}

fn geometry_from(cx: &mut Cx, root: &Table) -> Option<(NozzleGeometry, String)> {
    let t = cx.required_table(root, "geometry")?.clone();
    let preset = cx.str_req(&t, "geometry", "preset")?.to_owned();
    let (built, desc) = match preset.as_str() {
        "straight" => {
            cx.known(&t, "geometry", &["preset", "height"]);
            let height = cx.f64_req(&t, "geometry", "height")?;
            (NozzleGeometry::straight(height), format!("straight height={height}"))
        }
        "converging" => {
            cx.known(&t, "geometry", &["preset", "outlet", "rise"]);
            let outlet = cx.f64_req(&t, "geometry", "outlet")?;
            let rise = cx.f64_req(&t, "geometry", "rise")?;
            (NozzleGeometry::converging(outlet, rise), format!("converging outlet={outlet} rise={rise}"))
        }
        "polyline" => {
            cx.known(&t, "geometry", &["preset", "xs", "gs"]);
            let xs = cx.f64_list_req(&t, "geometry", "xs")?;
            let gs = cx.f64_list_req(&t, "geometry", "gs")?;
            (NozzleGeometry::polyline(&xs, &gs), format!("polyline points={}", xs.len()))
        }
        other => {
            cx.push(
                "geometry.preset",
                format!("unknown preset '{other}' (expected straight, converging, or polyline)"),
            );
            return None;
        }
    };
    match built {
        Ok(g) => Some((g, desc)),
        Err(e) => {
            cx.push("geometry", e.message());
            None
        }
    }
}

fn profile_from(cx: &mut Cx, root: &Table) -> Option<(UpstreamProfile, String)> {
    let t = cx.required_table(root, "profile")?.clone();
    let preset = cx.str_req(&t, "profile", "preset")?.to_owned();
    let (built, desc) = match preset.as_str() {
        "constant" => {
            cx.known(&t, "profile", &["preset", "value", "height"]);
            let value = cx.f64_req(&t, "profile", "value")?;
            let height = cx.f64_req(&t, "profile", "height")?;
            (UpstreamProfile::constant(value, height), format!("constant value={value} height={height}"))
        }
        "quadratic" => {
            cx.known(&t, "profile", &["preset", "base", "coeff", "height"]);
            let base = cx.f64_req(&t, "profile", "base")?;
            let coeff = cx.f64_req(&t, "profile", "coeff")?;
            let height = cx.f64_req(&t, "profile", "height")?;
            (
                UpstreamProfile::quadratic(base, coeff, height),
                format!("quadratic base={base} coeff={coeff} height={height}"),
            )
        }
        "tabulated" => {
            cx.known(&t, "profile", &["preset", "ys", "us"]);
            let ys = cx.f64_list_req(&t, "profile", "ys")?;
            let us = cx.f64_list_req(&t, "profile", "us")?;
            (UpstreamProfile::tabulated(&ys, &us), format!("tabulated points={}", ys.len()))
        }
        other => {
            cx.push(
                "profile.preset",
                format!("unknown preset '{other}' (expected constant, quadratic, or tabulated)"),
            );
            return None;
        }
    };
    match built {
        Ok(p) => Some((p, desc)),
        Err(e) => {
            cx.push("profile", e.message());
            None
        }
    }
}

fn schedule_from(cx: &mut Cx, grid: &Table) -> Vec<(f64, f64)> {
    let Some(v) = grid.get("schedule") else {
        return Vec::new();
    };
    let Value::Array(rows) = v else {
        cx.push("grid.schedule", "expected an array of [L, h] pairs");
        return Vec::new();
    };
    let mut out = Vec::new();
    for (n, row) in rows.iter().enumerate() {
        let path = format!("grid.schedule[{n}]");
        let Value::Array(pair) = row else {
            cx.push(path, "expected a [L, h] pair");
            continue;
        };
        if pair.len() != 2 {
            cx.push(path, format!("expected 2 entries, got {}", pair.len()));
            continue;
        }
        let (Some(le), Some(he)) = (as_f64(&pair[0]), as_f64(&pair[1])) else {
            cx.push(path, "entries must be numbers");
            continue;
        };
        if !(le > 0.0) || !le.is_finite() || !(he > 0.0) || !he.is_finite() {
            cx.push(path, format!("L and h must be positive, got [{le}, {he}]"));
            continue;
        }
        out.push((le, he));
    }
    for w in out.windows(2) {
        if w[1].0 <= w[0].0 {
            cx.push(
                "grid.schedule",
                format!("truncation lengths must increase, got {} then {}", w[0].0, w[1].0),
            );
            break;
        }
    }
    out
}

fn solver_from(cx: &mut Cx, root: &Table) -> SolverConfig {
    let mut cfg = SolverConfig::default();
    let Some(t) = cx.optional_table(root, "solver") else {
        return cfg;
    };
    let t = t.clone();
    cx.known(
        &t,
        "solver",
        &["max_sweeps", "tol_field", "tol_energy", "newton_tol", "relaxation", "sweep_order", "mode", "penalized_eps"],
    );
    cfg.max_sweeps = cx.usize_or(&t, "solver", "max_sweeps", 0);
    cfg.tol_field = cx.nonneg_or(&t, "solver", "tol_field", 0.0);
    cfg.tol_energy = cx.nonneg_or(&t, "solver", "tol_energy", 0.0);
    cfg.newton_tol = cx.nonneg_or(&t, "solver", "newton_tol", 0.0);
    cfg.relaxation = cx.f64_or(&t, "solver", "relaxation", 0.0);
    if cfg.relaxation != 0.0 && !(1.0..2.0).contains(&cfg.relaxation) {
        cx.push(
            "solver.relaxation",
            format!("must be 0 (auto) or in [1, 2), got {}", cfg.relaxation),
        );
    }
    if let Some(s) = cx.str_opt(&t, "solver", "sweep_order") {
        cfg.sweep_order = match s.as_str() {
            "lexicographic" => SweepOrder::Lexicographic,
            "red-black" => SweepOrder::RedBlack,
            other => {
                cx.push(
                    "solver.sweep_order",
                    format!("unknown order '{other}' (expected lexicographic or red-black)"),
                );
                SweepOrder::Lexicographic
            }
        };
    }
    let mode = cx.str_opt(&t, "solver", "mode");
    let eps = cx.f64_opt(&t, "solver", "penalized_eps");
    match mode.as_deref() {
        None | Some("exact") => {
            cfg.mode = JumpMode::Exact;
            if eps.is_some() {
                cx.push("solver.penalized_eps", "only meaningful when solver.mode = \"penalized\"");
            }
        }
        Some("penalized") => match eps {
            Some(e) if e > 0.0 && e.is_finite() => cfg.mode = JumpMode::Penalized { eps: e },
            Some(e) => cx.push("solver.penalized_eps", format!("must be positive, got {e}")),
            None => cx.push("solver.penalized_eps", "required when solver.mode = \"penalized\""),
        },
        Some(other) => {
            cx.push("solver.mode", format!("unknown mode '{other}' (expected exact or penalized)"));
        }
    }
    cfg
}

fn fit_from(cx: &mut Cx, root: &Table) -> (f64, f64, f64, f64, usize, usize) {
    let mut out = (0.0, 0.0, 0.0, 0.0, 0usize, 0usize);
    let Some(t) = cx.optional_table(root, "fit") else {
        return out;
    };
    let t = t.clone();
    cx.known(
        &t,
        "fit",
        &["lambda_hi", "lambda_cap", "tol_lambda", "tol_detach", "max_bisections", "extrapolation_columns"],
    );
    out.0 = cx.nonneg_or(&t, "fit", "lambda_hi", 0.0);
    out.1 = cx.nonneg_or(&t, "fit", "lambda_cap", 0.0);
    out.2 = cx.nonneg_or(&t, "fit", "tol_lambda", 0.0);
    out.3 = cx.nonneg_or(&t, "fit", "tol_detach", 0.0);
    out.4 = cx.usize_or(&t, "fit", "max_bisections", 0);
    out.5 = cx.usize_or(&t, "fit", "extrapolation_columns", 0);
    out
}

fn checks_from(cx: &mut Cx, root: &Table) -> ChecksConfig {
    let mut cfg = ChecksConfig::default();
    let Some(t) = cx.optional_table(root, "checks") else {
        return cfg;
    };
    let t = t.clone();
    cx.known(&t, "checks", &["diagnostics", "smooth_fit", "uniqueness", "determinism"]);
    cfg.diagnostics = cx.bool_or(&t, "checks", "diagnostics", cfg.diagnostics);
    cfg.smooth_fit = cx.bool_or(&t, "checks", "smooth_fit", cfg.smooth_fit);
    cfg.uniqueness = cx.bool_or(&t, "checks", "uniqueness", cfg.uniqueness);
    cfg.determinism = cx.bool_or(&t, "checks", "determinism", cfg.determinism);
    cfg
}

fn diagnostics_from(cx: &mut Cx, root: &Table) -> DiagnosticsConfig {
    let mut cfg = DiagnosticsConfig::default();
    let Some(t) = cx.optional_table(root, "diagnostics") else {
        return cfg;
    };
    let t = t.clone();
    cx.known(
        &t,
        "diagnostics",
        &["density_c", "density_pass_fraction", "radii_cells", "growth_band_factor", "blowup_points"],
    );
    cfg.density_c = cx.f64_or(&t, "diagnostics", "density_c", cfg.density_c);
    if !(cfg.density_c > 0.0 && cfg.density_c < 0.5) {
        cx.push("diagnostics.density_c", format!("must lie in (0, 0.5), got {}", cfg.density_c));
    }
    cfg.density_pass_fraction =
        cx.f64_or(&t, "diagnostics", "density_pass_fraction", cfg.density_pass_fraction);
    if !(cfg.density_pass_fraction > 0.0 && cfg.density_pass_fraction <= 1.0) {
        cx.push(
            "diagnostics.density_pass_fraction",
            format!("must lie in (0, 1], got {}", cfg.density_pass_fraction),
        );
    }
    if let Some(list) = t.get("radii_cells") {
        match radii_from(list) {
            Ok(r) => cfg.radii_cells = r,
            Err(msg) => cx.push("diagnostics.radii_cells", msg),
        }
    }
    cfg.growth_band_factor = cx.f64_or(&t, "diagnostics", "growth_band_factor", cfg.growth_band_factor);
    if !(cfg.growth_band_factor >= 1.0) {
        cx.push(
            "diagnostics.growth_band_factor",
            format!("must be at least 1, got {}", cfg.growth_band_factor),
        );
    }
    cfg.blowup_points = cx.usize_or(&t, "diagnostics", "blowup_points", cfg.blowup_points);
    cfg
}

fn radii_from(v: &Value) -> Result<[usize; 3], String> {
    let Value::Array(items) = v else {
        return Err("expected an array of 3 increasing cell counts".into());
    };
    if items.len() != 3 {
        return Err(format!("expected exactly 3 radii, got {}", items.len()));
    }
    let mut out = [0usize; 3];
    for (k, it) in items.iter().enumerate() {
        match it {
            Value::Integer(i) if *i > 0 => out[k] = *i as usize,
            _ => return Err("radii must be positive integers".into()),
        }
    }
    if !(out[0] < out[1] && out[1] < out[2]) {
        return Err(format!("radii must increase, got [{}, {}, {}]", out[0], out[1], out[2]));
    }
    Ok(out)
}

fn as_f64(v: &Value) -> Option<f64> {
    match v {
        Value::Integer(i) => Some(*i as f64),
        Value::Float(f) => Some(*f),
        _ => None,
    }
}

/// Validation context: issue sink plus typed extractors.
#[derive(Default)]
struct Cx {
    issues: Vec<ConfigIssue>,
}

impl Cx {
    fn push(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.issues.push(ConfigIssue { path: path.into(), message: message.into() });
    }

    fn key_path(section: &str, key: &str) -> String {
        if section.is_empty() {
            key.to_owned()
        } else {
            format!("{section}.{key}")
        }
    }

    /// Flags keys outside the schema of this section.
    fn known(&mut self, table: &Table, section: &str, keys: &[&str]) {
        for k in table.keys() {
            if !keys.contains(&k.as_str()) {
                self.push(Self::key_path(section, k), "unknown key");
            }
        }
    }

    fn required_table<'a>(&mut self, root: &'a Table, name: &str) -> Option<&'a Table> {
        match root.get(name) {
            Some(Value::Table(t)) => Some(t),
            Some(_) => {
                self.push(name, "expected a table section");
                None
            }
            None => {
                self.push(name, "missing required section");
                None
            }
        }
    }

    fn optional_table<'a>(&mut self, root: &'a Table, name: &str) -> Option<&'a Table> {
        match root.get(name) {
            Some(Value::Table(t)) => Some(t),
            Some(_) => {
                self.push(name, "expected a table section");
                None
            }
            None => None,
        }
    }

    /// Number present at the key; absent stays silent, wrong type or a
    /// non-finite value is an issue.
    fn f64_opt(&mut self, t: &Table, section: &str, key: &str) -> Option<f64> {
        let v = t.get(key)?;
        match as_f64(v) {
            Some(x) if x.is_finite() => Some(x),
            Some(x) => {
                self.push(Self::key_path(section, key), format!("must be finite, got {x}"));
                None
            }
            None => {
                self.push(Self::key_path(section, key), "expected a number");
                None
            }
        }
    }

    fn f64_req(&mut self, t: &Table, section: &str, key: &str) -> Option<f64> {
        if !t.contains_key(key) {
            self.push(Self::key_path(section, key), "missing required key");
            return None;
        }
        self.f64_opt(t, section, key)
    }

    fn f64_or(&mut self, t: &Table, section: &str, key: &str, default: f64) -> f64 {
        self.f64_opt(t, section, key).unwrap_or(default)
    }

    /// Like `f64_or` but rejects negative values (0 keeps meaning "pick the
    /// documented default" for the solver and fit knobs).
    fn nonneg_or(&mut self, t: &Table, section: &str, key: &str, default: f64) -> f64 {
        let x = self.f64_or(t, section, key, default);
        if x < 0.0 {
            self.push(Self::key_path(section, key), format!("must be non-negative, got {x}"));
            return default;
        }
        x
    }

    fn usize_or(&mut self, t: &Table, section: &str, key: &str, default: usize) -> usize {
        match t.get(key) {
            None => default,
            Some(Value::Integer(i)) if *i >= 0 => *i as usize,
            Some(Value::Integer(i)) => {
                self.push(Self::key_path(section, key), format!("must be non-negative, got {i}"));
                default
            }
            Some(_) => {
                self.push(Self::key_path(section, key), "expected an integer");
                default
            }
        }
    }

    fn bool_or(&mut self, t: &Table, section: &str, key: &str, default: bool) -> bool {
        match t.get(key) {
            None => default,
            Some(Value::Boolean(b)) => *b,
            Some(_) => {
                self.push(Self::key_path(section, key), "expected a boolean");
                default
            }
        }
    }

    fn str_opt(&mut self, t: &Table, section: &str, key: &str) -> Option<String> {
        match t.get(key) {
            None => None,
            Some(Value::String(s)) => Some(s.clone()),
            Some(_) => {
                self.push(Self::key_path(section, key), "expected a string");
                None
            }
        }
    }

    fn str_req(&mut self, t: &Table, section: &str, key: &str) -> Option<String> {
        if !t.contains_key(key) {
            self.push(Self::key_path(section, key), "missing required key");
            return None;
        }
        self.str_opt(t, section, key)
    }

    fn f64_list_req(&mut self, t: &Table, section: &str, key: &str) -> Option<Vec<f64>> {
        let path = Self::key_path(section, key);
        let Some(v) = t.get(key) else {
            self.push(path, "missing required key");
            return None;
        };
        let Value::Array(items) = v else {
            self.push(path, "expected an array of numbers");
            return None;
        };
        let mut out = Vec::with_capacity(items.len());
        for it in items {
            match as_f64(it) {
                Some(x) if x.is_finite() => out.push(x),
                _ => {
                    self.push(path, "entries must be finite numbers");
                    return None;
                }
            }
        }
        Some(out)
    }
}
