//! Free-boundary extraction and local regularity diagnostics.
//!
//! On a converged field the wet set of each column x > 0 is a single block
//! growing from the bottom, so the interface is the graph of a function
//! y = k(x). [`extract_curve`] reads k off the grid with a subgrid correction
//! from the Bernoulli slope: if the topmost wet node of a column sits at
//! height y with value psi, the interface is placed at
//!
//! ```text
//! k = y + (Q - psi) / max(lambda_est, lambda0)
//! ```
//!
//! where lambda_est is the column's one-sided vertical gradient. This is
//! exact for fields that are linear in y near the interface and second-order
//! accurate for flat interfaces.
//!
//! The remaining routines probe the local structure of phi = Q - psi around
//! interface points with bilinear sampling on circles and balls:
//!
//! * [`boundary_gradient`]: |grad psi| one cell inside the wet region, which
//!   the Bernoulli condition pins at lambda.
//! * [`flatness_measure`]: the (sigma_plus, sigma_minus; delta) flatness
//!   parameters of phi in a ball around a curve point.
//! * [`nondegeneracy_probe`]: the scaled mean of phi over a circle, with the
//!   two-sided implications (small mean -> dry inner ball, large mean -> wet
//!   full ball).
//! * [`density_ratio`]: wet volume fraction of a ball.
//! * [`ball_measure`]: the interface measure mu(B_r) = flux of grad phi
//!   through the circle minus the interior strength integral; it grows
//!   linearly in r along the interface.
//! * [`blowup_rescale`]: least-squares fit of the rescaled local field
//!   phi(X0 + rZ)/r against a half-plane profile; the deviation shrinks with
//!   r down to the grid floor.
//!
//! All diagnostics are read-only on an immutable field.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::domain::{BoundaryTag, NodeClass, TruncatedDomainGrid};
use crate::error::{Error, Result};
use crate::fmath;
use crate::profiles::VorticityModel;
use crate::solver::StreamField;

/// One column of the extracted interface.
#[derive(Debug, Clone)]
pub struct CurveSample {
    /// Grid column index.
    pub col: usize,
    pub x: f64,
    /// Interface height, subgrid-corrected.
    pub k: f64,
    /// Topmost wet interior row of the column.
    pub top_row: usize,
    /// |grad psi| sampled one cell inside the wet region; None where the
    /// interface sits within two cells of a Dirichlet wall.
    pub grad_mag: Option<f64>,
    /// Column fully wet: the interface left the box through the top.
    pub truncated: bool,
}

/// The interface y = k(x) over the columns x > 0 of the grid.
#[derive(Debug, Clone)]
pub struct FreeBoundaryCurve {
    samples: Vec<CurveSample>,
    skipped_gradients: usize,
}

impl FreeBoundaryCurve {
    pub fn samples(&self) -> &[CurveSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Gradient samples skipped for sitting within two cells of a wall.
    pub fn skipped_gradients(&self) -> usize {
        self.skipped_gradients
    }

    pub fn max_k(&self) -> f64 {
        self.samples.iter().map(|s| s.k).fold(f64::NEG_INFINITY, f64::max)
    }

    /// k at the given grid column, if that column is on the curve.
    pub fn k_at_col(&self, col: usize) -> Option<f64> {
        self.samples.iter().find(|s| s.col == col).map(|s| s.k)
    }

    /// Largest Lipschitz quotient max over pairs of (|dk| - 2h) / |dx| on
    /// samples with x in [x_lo, x_hi]; reported, not asserted a priori.
    pub fn lipschitz_constant(&self, h: f64, x_lo: f64, x_hi: f64) -> f64 {
        let pts: Vec<(f64, f64)> = self
            .samples
            .iter()
            .filter(|s| !s.truncated && s.x >= x_lo && s.x <= x_hi)
            .map(|s| (s.x, s.k))
            .collect();
        let mut worst = 0.0_f64;
        for a in 0..pts.len() {
            for b in a + 1..pts.len() {
                let dx = fmath::abs(pts[b].0 - pts[a].0);
                if dx > 0.0 {
                    worst = worst.max((fmath::abs(pts[b].1 - pts[a].1) - 2.0 * h) / dx);
                }
            }
        }
        worst
    }
}

/// True if any node within Chebyshev distance 2 of (i, j) is a Dirichlet
/// wall/inlet/outlet node or lies outside the region. The bottom symmetry
/// axis does not count: differencing against its exact data is fine.
pub(crate) fn near_wall(grid: &TruncatedDomainGrid, i: usize, j: usize) -> bool {
    let (nx, ny) = (grid.nx(), grid.ny());
    for dj in -2i64..=2 {
        for di in -2i64..=2 {
            let (ii, jj) = (i as i64 + di, j as i64 + dj);
            if ii < 0 || jj < 0 || ii >= nx as i64 || jj >= ny as i64 {
                continue;
            }
            let k = grid.idx(ii as usize, jj as usize);
            match grid.class_at(k) {
                NodeClass::Exterior => return true,
                NodeClass::Dirichlet => match grid.tag_at(k) {
                    BoundaryTag::Wall | BoundaryTag::Inlet | BoundaryTag::Outlet => return true,
                    _ => {}
                },
                NodeClass::Interior => {}
            }
        }
    }
    false
}

/// |grad psi| at the node one cell below the interface of column i with top
/// wet row jtop: centered differences where both neighbors exist, one-sided
/// otherwise. None when the interface is within two cells of a wall.
fn gradient_sample(
    grid: &TruncatedDomainGrid,
    field: &StreamField,
    i: usize,
    jtop: usize,
) -> Option<f64> {
    if jtop == 0 || near_wall(grid, i, jtop) {
        return None;
    }
    let j = jtop - 1;
    let h = grid.h();
    let nx = grid.nx();
    let k = grid.idx(i, j);
    let ok = |kk: usize| grid.class_at(kk) != NodeClass::Exterior;
    let py = if j >= 1 && ok(k - nx) && ok(k + nx) {
        (field.value_at(k + nx) - field.value_at(k - nx)) / (2.0 * h)
    } else {
        (field.value_at(k + nx) - field.value_at(k)) / h
    };
    let px = if i >= 1 && i + 1 < nx && ok(k - 1) && ok(k + 1) {
        (field.value_at(k + 1) - field.value_at(k - 1)) / (2.0 * h)
    } else if i + 1 < nx && ok(k + 1) {
        (field.value_at(k + 1) - field.value_at(k)) / h
    } else if i >= 1 && ok(k - 1) {
        (field.value_at(k) - field.value_at(k - 1)) / h
    } else {
        return None;
    };
    Some(fmath::norm2(px, py))
}

/// Extracts the interface graph from a converged field. Each column with
/// x > 0 must hold a single contiguous wet block from the bottom; a split
/// block is an extraction error naming the column. Fully wet columns are
/// flagged truncated with k at the top of the column.
pub fn extract_curve(
    grid: &TruncatedDomainGrid,
    field: &StreamField,
    lambda0: f64,
) -> Result<FreeBoundaryCurve> {
    if !(lambda0 > 0.0) {
        return Err(Error::config(format!("lambda0 must be positive, got {lambda0}")));
    }
    let q = grid.q();
    let h = grid.h();
    let mut samples = Vec::new();
    let mut skipped = 0usize;
    for i in 0..grid.nx() {
        if grid.x_of(i) <= 0.0 {
            continue;
        }
        let Some((jlo, jhi)) = grid.col_interior_span(i) else {
            continue;
        };
        // Contiguity scan over the interior span.
        let mut top: Option<usize> = None;
        let mut seen_dry = false;
        for j in jlo..=jhi {
            let k = grid.idx(i, j);
            if field.is_wet(k) {
                if seen_dry {
                    return Err(Error::invariant(format!(
                        "column {i} (x = {}) has a non-contiguous wet block near row {j}",
                        grid.x_of(i)
                    )));
                }
                top = Some(j);
            } else {
                seen_dry = true;
            }
        }
        let Some(jtop) = top else {
            // Entirely dry column: the interface is below the lowest interior
            // node; the column carries no curve sample.
            continue;
        };
        if jtop == jhi {
            // Fully wet column: interface exits through the top of the box.
            let mut jmax = jhi;
            for j in jhi + 1..grid.ny() {
                if grid.class_at(grid.idx(i, j)) == NodeClass::Exterior {
                    break;
                }
                jmax = j;
            }
            samples.push(CurveSample {
                col: i,
                x: grid.x_of(i),
                k: grid.y_of(jmax),
                top_row: jtop,
                grad_mag: None,
                truncated: true,
            });
            skipped += 1;
            continue;
        }
        let k_node = grid.idx(i, jtop);
        let psi_top = field.value_at(k_node);
        let below = field.value_at(k_node - grid.nx());
        let lambda_est = (psi_top - below) / h;
        let slope = lambda_est.max(lambda0);
        let kx = grid.y_of(jtop) + (q - psi_top) / slope;
        let grad = gradient_sample(grid, field, i, jtop);
        if grad.is_none() {
            skipped += 1;
        }
        samples.push(CurveSample {
            col: i,
            x: grid.x_of(i),
            k: kx,
            top_row: jtop,
            grad_mag: grad,
            truncated: false,
        });
    }
    Ok(FreeBoundaryCurve { samples, skipped_gradients: skipped })
}

/// Recomputes the |grad psi| samples along an extracted curve; returns the
/// per-column samples (None = skipped) and the skipped count.
pub fn boundary_gradient(
    grid: &TruncatedDomainGrid,
    field: &StreamField,
    curve: &FreeBoundaryCurve,
) -> (Vec<Option<f64>>, usize) {
    let mut out = Vec::with_capacity(curve.len());
    let mut skipped = 0usize;
    for s in curve.samples() {
        let g = if s.truncated { None } else { gradient_sample(grid, field, s.col, s.top_row) };
        if g.is_none() {
            skipped += 1;
        }
        out.push(g);
    }
    (out, skipped)
}

/// Nodes whose wetness disagrees with {y < k(x)} by more than one cell.
pub fn graph_violation_cells(
    grid: &TruncatedDomainGrid,
    field: &StreamField,
    curve: &FreeBoundaryCurve,
) -> usize {
    let h = grid.h();
    let mut bad = 0usize;
    for s in curve.samples() {
        let Some((jlo, jhi)) = grid.col_interior_span(s.col) else {
            continue;
        };
        for j in jlo..=jhi {
            let y = grid.y_of(j);
            let wet = field.is_wet(grid.idx(s.col, j));
            if (y < s.k - h && !wet) || (y > s.k + h && wet) {
                bad += 1;
            }
        }
    }
    bad
}

/// Bilinear sampling of a field over the grid; None outside the grid or on
/// cells with an exterior corner.
struct Sampler<'a> {
    grid: &'a TruncatedDomainGrid,
    field: &'a StreamField,
}

impl<'a> Sampler<'a> {
    fn cell_of(&self, x: f64, y: f64) -> Option<(usize, usize, f64, f64)> {
        let g = self.grid;
        let h = g.h();
        let fx = (x - g.x_of(0)) / h;
        let fy = (y - g.y_of(0)) / h;
        let eps = 1e-9;
        if fx < -eps || fy < -eps || fx > (g.nx() - 1) as f64 + eps || fy > (g.ny() - 1) as f64 + eps {
            return None;
        }
        let i = (fmath::floor(fx).max(0.0) as usize).min(g.nx() - 2);
        let j = (fmath::floor(fy).max(0.0) as usize).min(g.ny() - 2);
        let k = g.idx(i, j);
        let nx = g.nx();
        for corner in [k, k + 1, k + nx, k + nx + 1] {
            if g.class_at(corner) == NodeClass::Exterior {
                return None;
            }
        }
        Some((i, j, fx - i as f64, fy - j as f64))
    }

    /// Bilinear psi at (x, y).
    fn psi(&self, x: f64, y: f64) -> Option<f64> {
        let (i, j, tx, ty) = self.cell_of(x, y)?;
        let nx = self.grid.nx();
        let k = self.grid.idx(i, j);
        let p = self.field.psi();
        let v00 = p[k];
        let v10 = p[k + 1];
        let v01 = p[k + nx];
        let v11 = p[k + nx + 1];
        Some((1.0 - ty) * ((1.0 - tx) * v00 + tx * v10) + ty * ((1.0 - tx) * v01 + tx * v11))
    }

    /// Gradient of the bilinear patch at (x, y).
    fn grad_psi(&self, x: f64, y: f64) -> Option<(f64, f64)> {
        let (i, j, tx, ty) = self.cell_of(x, y)?;
        let nx = self.grid.nx();
        let h = self.grid.h();
        let k = self.grid.idx(i, j);
        let p = self.field.psi();
        let v00 = p[k];
        let v10 = p[k + 1];
        let v01 = p[k + nx];
        let v11 = p[k + nx + 1];
        let gx = ((1.0 - ty) * (v10 - v00) + ty * (v11 - v01)) / h;
        let gy = ((1.0 - tx) * (v01 - v00) + tx * (v11 - v10)) / h;
        Some((gx, gy))
    }
}

/// Number of circle quadrature points for radius r: spacing about h/2.
fn circle_points(r: f64, h: f64) -> usize {
    let m = fmath::ceil(4.0 * core::f64::consts::PI * r / h) as usize;
    m.max(64)
}

fn ball_exit_error(x0: f64, y0: f64, r: f64) -> Error {
    Error::domain(format!("ball of radius {r} at ({x0}, {y0}) exits the sampled domain"))
}

/// Node scans only visit existing nodes, so a ball leaving the grid box must
/// be rejected explicitly.
fn require_ball_in_box(grid: &TruncatedDomainGrid, x0: f64, y0: f64, r: f64) -> Result<()> {
    let eps = 1e-9 * grid.h();
    if x0 - r < grid.x_of(0) - eps
        || x0 + r > grid.x_of(grid.nx() - 1) + eps
        || y0 - r < grid.y_of(0) - eps
        || y0 + r > grid.y_of(grid.ny() - 1) + eps
    {
        return Err(ball_exit_error(x0, y0, r));
    }
    Ok(())
}

/// Flatness parameters of phi = Q - psi in B_rho(X0) with respect to the
/// direction nu (pointing to the dry side).
#[derive(Debug, Clone)]
pub struct FlatnessReport {
    pub x0: f64,
    pub y0: f64,
    pub rho: f64,
    pub nu: (f64, f64),
    /// phi vanishes on {(X - X0) . nu >= sigma_plus * rho}.
    pub sigma_plus: f64,
    /// phi >= -lambda ((X - X0) . nu + sigma_minus rho) below -sigma_minus rho.
    pub sigma_minus: f64,
    /// Gradient excess: |grad phi| <= lambda (1 + delta) in the ball.
    pub delta: f64,
}

/// Measures the flatness class of phi = Q - psi in B_rho(X0) along nu.
/// sigma_plus is the smallest s with phi = 0 on the slab above s*rho;
/// sigma_minus the smallest s validating the linear lower bound below
/// -s*rho; delta the relative gradient excess over lambda. Both sigmas are
/// floored at the sampling resolution h/rho and capped at 1.
pub fn flatness_measure(
    grid: &TruncatedDomainGrid,
    field: &StreamField,
    x0: f64,
    y0: f64,
    rho: f64,
    nu: (f64, f64),
    lambda: f64,
) -> Result<FlatnessReport> {
    if !(rho > 0.0) || !(lambda > 0.0) {
        return Err(Error::config("flatness_measure needs rho > 0 and lambda > 0"));
    }
    let norm = fmath::norm2(nu.0, nu.1);
    if !(norm > 0.0) {
        return Err(Error::config("flatness direction must be nonzero"));
    }
    let nu = (nu.0 / norm, nu.1 / norm);
    require_ball_in_box(grid, x0, y0, rho)?;
    let (nx, ny) = (grid.nx(), grid.ny());
    let h = grid.h();
    let q = grid.q();
    let r2 = rho * rho;
    let mut any_wet = false;
    let mut any_dry = false;
    let mut max_proj_wet = f64::NEG_INFINITY;
    let mut sigma_minus_need = f64::NEG_INFINITY;
    let mut grad_sup = 0.0_f64;
    let mut seen = 0usize;
    for j in 0..ny {
        let dy = grid.y_of(j) - y0;
        for i in 0..nx {
            let dx = grid.x_of(i) - x0;
            if dx * dx + dy * dy > r2 {
                continue;
            }
            let k = grid.idx(i, j);
            if grid.class_at(k) == NodeClass::Exterior {
                return Err(ball_exit_error(x0, y0, rho));
            }
            seen += 1;
            let phi = q - field.value_at(k);
            let proj = (dx * nu.0 + dy * nu.1) / rho;
            if field.is_wet(k) {
                any_wet = true;
                max_proj_wet = max_proj_wet.max(proj);
            } else {
                any_dry = true;
            }
            // Lower-bound deficit: phi >= -lambda (proj rho + s rho) is
            // required only where proj <= -s, so the node's demand on s is
            // min(deficit, -proj).
            let deficit = -(phi / (lambda * rho) + proj);
            sigma_minus_need = sigma_minus_need.max(deficit.min(-proj));
            // Centered nodal gradient where the full stencil exists.
            if i >= 1 && i + 1 < nx && j >= 1 && j + 1 < ny {
                let ok = |kk: usize| grid.class_at(kk) != NodeClass::Exterior;
                if ok(k - 1) && ok(k + 1) && ok(k - nx) && ok(k + nx) {
                    let p = field.psi();
                    let gx = (p[k + 1] - p[k - 1]) / (2.0 * h);
                    let gy = (p[k + nx] - p[k - nx]) / (2.0 * h);
                    grad_sup = grad_sup.max(fmath::norm2(gx, gy));
                }
            }
        }
    }
    if seen == 0 {
        return Err(ball_exit_error(x0, y0, rho));
    }
    if !any_dry {
        return Err(Error::domain(format!(
            "ball of radius {rho} at ({x0}, {y0}) is entirely wet: no interface to measure"
        )));
    }
    if !any_wet {
        return Err(Error::domain(format!(
            "ball of radius {rho} at ({x0}, {y0}) is entirely dry: no interface to measure"
        )));
    }
    let floor = h / rho;
    let sigma_plus = max_proj_wet.clamp(floor, 1.0);
    let sigma_minus = sigma_minus_need.clamp(floor, 1.0);
    let delta = (grad_sup / lambda - 1.0).max(0.0);
    Ok(FlatnessReport { x0, y0, rho, nu, sigma_plus, sigma_minus, delta })
}

/// Knobs of the nondegeneracy probe; the constants are empirical defaults
/// calibrated on the exact half-plane case (mean = 2 lambda / pi there).
#[derive(Debug, Clone)]
pub struct NondegeneracyParams {
    /// Inner-ball fraction for the dry implication.
    pub kappa: f64,
    /// Dry threshold: mean <= c_star * lambda forces phi = 0 in B_{kappa r}.
    pub c_star: f64,
    /// Wet threshold: mean >= big_c_star * lambda forces phi > 0 in B_r.
    pub big_c_star: f64,
}

impl Default for NondegeneracyParams {
    fn default() -> Self {
        Self { kappa: 0.25, c_star: 0.1, big_c_star: 2.0 }
    }
}

/// Outcome of a nondegeneracy probe.
#[derive(Debug, Clone)]
pub struct NondegeneracyProbe {
    /// Scaled mean boundary value: (circle integral of phi) / (pi r^2).
    pub mean: f64,
    pub dry_triggered: bool,
    pub dry_holds: bool,
    pub positive_triggered: bool,
    pub positive_holds: bool,
    /// Every triggered implication holds (vacuously true if none fires).
    pub pass: bool,
}

/// Probes the two-sided nondegeneracy implications at X0: a small scaled
/// circle mean of phi forces the inner ball B_{kappa r} dry, a large one
/// forces the whole ball wet. The mean for an exact half-plane through the
/// center is 2 lambda / pi.
pub fn nondegeneracy_probe(
    grid: &TruncatedDomainGrid,
    field: &StreamField,
    x0: f64,
    y0: f64,
    r: f64,
    lambda: f64,
    params: &NondegeneracyParams,
) -> Result<NondegeneracyProbe> {
    if !(r > 0.0) || !(lambda > 0.0) {
        return Err(Error::config("nondegeneracy_probe needs r > 0 and lambda > 0"));
    }
    if !(params.kappa > 0.0 && params.kappa < 1.0) {
        return Err(Error::config(format!("kappa must lie in (0, 1), got {}", params.kappa)));
    }
    let s = Sampler { grid, field };
    let q = grid.q();
    let m = circle_points(r, grid.h());
    let mut sum = 0.0;
    for p in 0..m {
        let th = 2.0 * core::f64::consts::PI * p as f64 / m as f64;
        let (x, y) = (x0 + r * fmath::cos(th), y0 + r * fmath::sin(th));
        let psi = s.psi(x, y).ok_or_else(|| ball_exit_error(x0, y0, r))?;
        sum += q - psi;
    }
    let ds = 2.0 * core::f64::consts::PI * r / m as f64;
    let mean = sum * ds / (core::f64::consts::PI * r * r);

    let dry_triggered = mean <= params.c_star * lambda;
    let positive_triggered = mean >= params.big_c_star * lambda;
    let mut dry_holds = true;
    let mut positive_holds = true;
    if dry_triggered || positive_triggered {
        let (nx, ny) = (grid.nx(), grid.ny());
        let rk2 = (params.kappa * r) * (params.kappa * r);
        let r2 = r * r;
        for j in 0..ny {
            let dy = grid.y_of(j) - y0;
            for i in 0..nx {
                let dx = grid.x_of(i) - x0;
                let d2 = dx * dx + dy * dy;
                if d2 > r2 {
                    continue;
                }
                let k = grid.idx(i, j);
                if grid.class_at(k) == NodeClass::Exterior {
                    return Err(ball_exit_error(x0, y0, r));
                }
                let wet = field.is_wet(k);
                if dry_triggered && d2 <= rk2 && wet {
                    dry_holds = false;
                }
                if positive_triggered && !wet {
                    positive_holds = false;
                }
            }
        }
    }
    let pass = (!dry_triggered || dry_holds) && (!positive_triggered || positive_holds);
    Ok(NondegeneracyProbe { mean, dry_triggered, dry_holds, positive_triggered, positive_holds, pass })
}

/// Wet-node fraction of the ball B_r(X0) (node-counted Lebesgue surrogate).
pub fn density_ratio(
    grid: &TruncatedDomainGrid,
    field: &StreamField,
    x0: f64,
    y0: f64,
    r: f64,
) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::config("density_ratio needs r > 0"));
    }
    require_ball_in_box(grid, x0, y0, r)?;
    let (nx, ny) = (grid.nx(), grid.ny());
    let r2 = r * r;
    let mut total = 0usize;
    let mut wet = 0usize;
    for j in 0..ny {
        let dy = grid.y_of(j) - y0;
        for i in 0..nx {
            let dx = grid.x_of(i) - x0;
            if dx * dx + dy * dy > r2 {
                continue;
            }
            let k = grid.idx(i, j);
            if grid.class_at(k) == NodeClass::Exterior {
                return Err(ball_exit_error(x0, y0, r));
            }
            total += 1;
            if field.is_wet(k) {
                wet += 1;
            }
        }
    }
    if total == 0 {
        return Err(ball_exit_error(x0, y0, r));
    }
    Ok(wet as f64 / total as f64)
}

/// Interface measure of the ball: flux of grad phi through the circle minus
/// the interior strength integral over wet nodes,
///
/// ```text
/// mu(B_r) = circle_int grad phi . n ds - h^2 sum_{wet nodes in B_r} f0(psi)
/// ```
///
/// For an interface crossing the ball this is ~ lambda times the interface
/// length (2 lambda r for a straight interface through the center); a fully
/// wet ball gives ~ 0.
pub fn ball_measure(
    grid: &TruncatedDomainGrid,
    field: &StreamField,
    vort: &VorticityModel,
    x0: f64,
    y0: f64,
    r: f64,
) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::config("ball_measure needs r > 0"));
    }
    let s = Sampler { grid, field };
    let m = circle_points(r, grid.h());
    let mut flux = 0.0;
    for p in 0..m {
        let th = 2.0 * core::f64::consts::PI * p as f64 / m as f64;
        let (c, sn) = (fmath::cos(th), fmath::sin(th));
        let (x, y) = (x0 + r * c, y0 + r * sn);
        let (gx, gy) = s.grad_psi(x, y).ok_or_else(|| ball_exit_error(x0, y0, r))?;
        // grad phi = -grad psi; outward normal (cos, sin).
        flux += -(gx * c + gy * sn);
    }
    flux *= 2.0 * core::f64::consts::PI * r / m as f64;

    let mut interior = 0.0;
    if !vort.has_zero_strength() {
        let (nx, ny) = (grid.nx(), grid.ny());
        let h2 = grid.h() * grid.h();
        let r2 = r * r;
        for j in 0..ny {
            let dy = grid.y_of(j) - y0;
            for i in 0..nx {
                let dx = grid.x_of(i) - x0;
                if dx * dx + dy * dy > r2 {
                    continue;
                }
                let k = grid.idx(i, j);
                if grid.class_at(k) == NodeClass::Exterior {
                    return Err(ball_exit_error(x0, y0, r));
                }
                if field.is_wet(k) {
                    interior += h2 * vort.f0_ext(field.value_at(k));
                }
            }
        }
    }
    Ok(flux - interior)
}

/// Result of a blow-up rescaling at one center and radius.
#[derive(Debug, Clone)]
pub struct BlowupReport {
    /// Fitted dry-side direction of the best half-plane profile.
    pub nu: (f64, f64),
    /// Max |phi(X0 + rZ)/r - lambda max(-Z . nu, 0)| over the unit ball.
    pub deviation: f64,
}

/// Samples phi(X0 + rZ)/r on the unit ball and fits the best half-plane
/// profile lambda max(-Z . nu, 0) over the direction nu by least squares
/// (dense angle scan plus parabolic refinement). Returns the direction and
/// the max deviation, which decays with r down to the grid floor ~ h/r.
pub fn blowup_rescale(
    grid: &TruncatedDomainGrid,
    field: &StreamField,
    x0: f64,
    y0: f64,
    r: f64,
    lambda: f64,
) -> Result<BlowupReport> {
    if !(r > 0.0) || !(lambda > 0.0) {
        return Err(Error::config("blowup_rescale needs r > 0 and lambda > 0"));
    }
    let s = Sampler { grid, field };
    let q = grid.q();
    // Unit-ball sample lattice, fixed resolution.
    const N: usize = 33;
    let mut zs: Vec<(f64, f64, f64)> = Vec::with_capacity(N * N);
    for a in 0..N {
        let zx = -1.0 + 2.0 * a as f64 / (N - 1) as f64;
        for b in 0..N {
            let zy = -1.0 + 2.0 * b as f64 / (N - 1) as f64;
            if zx * zx + zy * zy > 1.0 {
                continue;
            }
            let psi = s
                .psi(x0 + r * zx, y0 + r * zy)
                .ok_or_else(|| ball_exit_error(x0, y0, r))?;
            zs.push((zx, zy, (q - psi) / r));
        }
    }
    let sse = |th: f64| {
        let (nx, ny) = (fmath::cos(th), fmath::sin(th));
        let mut e = 0.0;
        for &(zx, zy, phi) in &zs {
            let model = lambda * (-(zx * nx + zy * ny)).max(0.0);
            let d = phi - model;
            e += d * d;
        }
        e
    };
    const M: usize = 1024;
    let step = 2.0 * core::f64::consts::PI / M as f64;
    let mut best_i = 0usize;
    let mut best_e = f64::INFINITY;
    for i in 0..M {
        let e = sse(i as f64 * step);
        if e < best_e {
            best_e = e;
            best_i = i;
        }
    }
    // Parabolic refinement through the best scanned angle and its neighbors.
    let t0 = best_i as f64 * step;
    let em = sse(t0 - step);
    let ep = sse(t0 + step);
    let denom = em - 2.0 * best_e + ep;
    let mut theta = t0;
    if denom > 0.0 {
        let shift = 0.5 * (em - ep) / denom * step;
        let tr = t0 + shift.clamp(-step, step);
        if sse(tr) < best_e {
            theta = tr;
        }
    }
    let nu = (fmath::cos(theta), fmath::sin(theta));
    let mut dev = 0.0_f64;
    for &(zx, zy, phi) in &zs {
        let model = lambda * (-(zx * nu.0 + zy * nu.1)).max(0.0);
        dev = dev.max(fmath::abs(phi - model));
    }
    Ok(BlowupReport { nu, deviation: dev })
}

/// Configuration of the bundled curve diagnostics.
#[derive(Debug, Clone)]
pub struct DiagnosticsConfig {
    /// Density band is [c, 1 - c].
    pub density_c: f64,
    /// Fraction of probed points that must land in the band.
    pub density_pass_fraction: f64,
    /// Probe radii in cells (smallest first) for density/measure growth.
    pub radii_cells: [usize; 3],
    /// Measure growth passes if max(mu/r) <= factor * min(mu/r).
    pub growth_band_factor: f64,
    pub nondegeneracy: NondegeneracyParams,
    /// Number of blow-up probe centers spread along the curve.
    pub blowup_points: usize,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        Self {
            density_c: 0.1,
            density_pass_fraction: 0.95,
            radii_cells: [8, 16, 32],
            growth_band_factor: 3.0,
            nondegeneracy: NondegeneracyParams::default(),
            blowup_points: 3,
        }
    }
}

/// One named check outcome inside a [`DiagnosticsReport`].
#[derive(Debug, Clone)]
pub struct ProbeSummary {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

/// Bundled lemma-level diagnostics along the extracted curve.
#[derive(Debug, Clone)]
pub struct DiagnosticsReport {
    /// Curve points where the smallest ball fit inside the domain.
    pub density_probed: usize,
    pub density_in_band: usize,
    pub density_min: f64,
    pub density_max: f64,
    /// mu(B_r)/r extrema over all probed points and radii.
    pub growth_points: usize,
    pub growth_min: f64,
    pub growth_max: f64,
    pub nondeg_probed: usize,
    pub nondeg_failures: usize,
    /// (x, deviation at 2r, deviation at r) per blow-up center.
    pub blowup_pairs: Vec<(f64, f64, f64)>,
    pub checks: Vec<ProbeSummary>,
    pub pass: bool,
}

impl DiagnosticsReport {
    pub fn check(&self, name: &str) -> Option<&ProbeSummary> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Runs density, nondegeneracy, measure-growth and blow-up probes at curve
/// points where the balls fit inside the sampled domain, and aggregates
/// pass/fail per check. Points whose ball pokes out of the domain are
/// silently skipped (the counts record how many were probed).
pub fn run_diagnostics(
    grid: &TruncatedDomainGrid,
    field: &StreamField,
    curve: &FreeBoundaryCurve,
    vort: &VorticityModel,
    lambda: f64,
    cfg: &DiagnosticsConfig,
) -> DiagnosticsReport {
    let h = grid.h();
    let r_small = cfg.radii_cells[0] as f64 * h;
    let r_large = cfg.radii_cells[2] as f64 * h;

    let mut density_probed = 0usize;
    let mut density_in_band = 0usize;
    let mut density_min = f64::INFINITY;
    let mut density_max = f64::NEG_INFINITY;
    let mut growth_min = f64::INFINITY;
    let mut growth_max = f64::NEG_INFINITY;
    let mut growth_points = 0usize;
    let mut nondeg_probed = 0usize;
    let mut nondeg_failures = 0usize;
    let mut large_ok: Vec<&CurveSample> = Vec::new();

    for smp in curve.samples() {
        if smp.truncated {
            continue;
        }
        let (x0, y0) = (smp.x, smp.k);
        if let Ok(ratio) = density_ratio(grid, field, x0, y0, r_small) {
            // The small ball must also stay inside D_L (x > 0).
            if x0 - r_small > 0.0 && y0 - r_small >= 0.0 {
                density_probed += 1;
                density_min = density_min.min(ratio);
                density_max = density_max.max(ratio);
                if ratio >= cfg.density_c && ratio <= 1.0 - cfg.density_c {
                    density_in_band += 1;
                }
                if let Ok(p) = nondegeneracy_probe(grid, field, x0, y0, r_small, lambda, &cfg.nondegeneracy)
                {
                    nondeg_probed += 1;
                    if !p.pass {
                        nondeg_failures += 1;
                    }
                }
            }
        }
        if x0 - r_large > 0.0 && y0 - r_large >= 0.0 {
            let mut all = true;
            for &cells in &cfg.radii_cells {
                let r = cells as f64 * h;
                match ball_measure(grid, field, vort, x0, y0, r) {
                    Ok(mu) => {
                        growth_min = growth_min.min(mu / r);
                        growth_max = growth_max.max(mu / r);
                    }
                    Err(_) => {
                        all = false;
                        break;
                    }
                }
            }
            if all {
                growth_points += 1;
                large_ok.push(smp);
            }
        }
    }

    let mut blowup_pairs = Vec::new();
    if !large_ok.is_empty() && cfg.blowup_points > 0 {
        let n = cfg.blowup_points.min(large_ok.len());
        for t in 0..n {
            let idx = (t + 1) * large_ok.len() / (n + 1);
            let smp = large_ok[idx.min(large_ok.len() - 1)];
            let r1 = cfg.radii_cells[1] as f64 * h;
            let r0 = cfg.radii_cells[0] as f64 * h;
            if let (Ok(b1), Ok(b0)) = (
                blowup_rescale(grid, field, smp.x, smp.k, r1, lambda),
                blowup_rescale(grid, field, smp.x, smp.k, r0, lambda),
            ) {
                blowup_pairs.push((smp.x, b1.deviation, b0.deviation));
            }
        }
    }

    let density_pass = density_probed > 0
        && (density_in_band as f64) >= cfg.density_pass_fraction * density_probed as f64;
    let growth_pass =
        growth_points > 0 && growth_min > 0.0 && growth_max <= cfg.growth_band_factor * growth_min;
    let nondeg_pass = nondeg_probed > 0 && nondeg_failures == 0;
    // Grid floor of the rescaled deviation at the small radius.
    let floor = lambda * h / r_small;
    let blowup_pass =
        !blowup_pairs.is_empty() && blowup_pairs.iter().all(|&(_, d1, d0)| d0 < d1 + floor);

    let checks = alloc::vec![
        ProbeSummary {
            name: "density",
            pass: density_pass,
            detail: format!(
                "{}/{} points in [{}, {}], range [{:.4}, {:.4}]",
                density_in_band,
                density_probed,
                cfg.density_c,
                1.0 - cfg.density_c,
                density_min,
                density_max
            ),
        },
        ProbeSummary {
            name: "measure_growth",
            pass: growth_pass,
            detail: format!(
                "mu/r in [{:.4}, {:.4}] over {} points x {} radii (band factor {})",
                growth_min,
                growth_max,
                growth_points,
                cfg.radii_cells.len(),
                cfg.growth_band_factor
            ),
        },
        ProbeSummary {
            name: "nondegeneracy",
            pass: nondeg_pass,
            detail: format!("{nondeg_failures} failures over {nondeg_probed} probes"),
        },
        ProbeSummary {
            name: "blowup",
            pass: blowup_pass,
            detail: format!("{} centers, deviations shrink within floor {:.4}", blowup_pairs.len(), floor),
        },
    ];
    let pass = checks.iter().all(|c| c.pass);
    DiagnosticsReport {
        density_probed,
        density_in_band,
        density_min,
        density_max,
        growth_points,
        growth_min,
        growth_max,
        nondeg_probed,
        nondeg_failures,
        blowup_pairs,
        checks,
        pass,
    }
}
