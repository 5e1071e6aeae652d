//! Nozzle geometry, the truncated computational domain, and its uniform-grid
//! rasterization with per-node boundary classification and Dirichlet data.
//!
//! The flow domain is a semi-infinite nozzle {x <= 0, 0 < y < g(x)} opening
//! into the right half plane {x > 0, y > 0}. The truncated domain keeps
//! |x| < L, y < L; its boundary carries the bottom symmetry axis (stream 0),
//! the nozzle wall, the vertical lip segment above the outlet, and the top
//! closure (stream Q), plus inflow/outflow edges with profile data.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::fmath;
use crate::profiles::{DownstreamState, InletProfile};

/// Coordinate snap tolerance for "node lies on a boundary curve" decisions.
const SNAP: f64 = 1e-9;

#[derive(Debug, Clone)]
enum WallShape {
    /// g(x) = height for all x <= 0.
    Straight { height: f64 },
    /// g(x) = outlet + rise * x^2 / (1 + x^2): converging wall with
    /// asymptote outlet + rise far upstream and minimum at the outlet.
    Converging { outlet: f64, rise: f64 },
    /// Piecewise-linear wall through sample points (xs increasing to 0);
    /// constant at the leftmost value further upstream.
    Polyline { xs: Vec<f64>, gs: Vec<f64> },
}

/// Nozzle wall shape y = g(x) on (-inf, 0].
///
/// The outlet height a = g(0) must be the global minimum of the wall, and
/// the wall approaches the upstream inlet height H far from the outlet.
#[derive(Debug, Clone)]
pub struct NozzleGeometry {
    shape: WallShape,
    h_upstream: f64,
    a: f64,
    h_bar: f64,
    g_prime_at_0: f64,
}

impl NozzleGeometry {
    /// Straight nozzle of constant height.
    pub fn straight(height: f64) -> Result<Self> {
        if !(height > 0.0) || !height.is_finite() {
            return Err(Error::config(format!("nozzle height must be positive, got {height}")));
        }
        Ok(Self {
            shape: WallShape::Straight { height },
            h_upstream: height,
            a: height,
            h_bar: height,
            g_prime_at_0: 0.0,
        })
    }

    /// Smoothly converging nozzle g(x) = outlet + rise * x^2/(1+x^2).
    pub fn converging(outlet: f64, rise: f64) -> Result<Self> {
        if !(outlet > 0.0) || !outlet.is_finite() || !(rise >= 0.0) || !rise.is_finite() {
            return Err(Error::config(format!(
                "converging nozzle needs outlet > 0 and rise >= 0, got outlet {outlet}, rise {rise}"
            )));
        }
        Ok(Self {
            shape: WallShape::Converging { outlet, rise },
            h_upstream: outlet + rise,
            a: outlet,
            h_bar: outlet + rise,
            g_prime_at_0: 0.0,
        })
    }

    /// Piecewise-linear wall through (xs[i], gs[i]) with xs increasing and
    /// ending at 0; g is extended by its leftmost value upstream.
    pub fn polyline(xs: &[f64], gs: &[f64]) -> Result<Self> {
        let n = xs.len();
        if n < 2 || gs.len() != n {
            return Err(Error::config("polyline nozzle needs >= 2 points with matching lengths"));
        }
        if *xs.last().unwrap() != 0.0 {
            return Err(Error::config("polyline nozzle must end at x = 0"));
        }
        for w in xs.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::config("polyline abscissae must be strictly increasing"));
            }
        }
        let mut h_bar = f64::NEG_INFINITY;
        for &g in gs {
            if !(g > 0.0) || !g.is_finite() {
                return Err(Error::config(format!("polyline wall height {g} must be positive")));
            }
            h_bar = h_bar.max(g);
        }
        let a = *gs.last().unwrap();
        let h_upstream = gs[0];
        let min = gs.iter().cloned().fold(f64::INFINITY, f64::min);
        if a > min + 1e-12 * (1.0 + h_bar) {
            return Err(Error::config(format!(
                "outlet height a = {a} must be the minimum of the wall (found {min})"
            )));
        }
        let k = n - 1;
        let g_prime_at_0 = (gs[k] - gs[k - 1]) / (xs[k] - xs[k - 1]);
        Ok(Self { shape: WallShape::Polyline { xs: xs.to_vec(), gs: gs.to_vec() }, h_upstream, a, h_bar, g_prime_at_0 })
    }

    /// Wall height at x <= 0.
    pub fn g(&self, x: f64) -> f64 {
        let x = x.min(0.0);
        match &self.shape {
            WallShape::Straight { height } => *height,
            WallShape::Converging { outlet, rise } => outlet + rise * x * x / (1.0 + x * x),
            WallShape::Polyline { xs, gs } => {
                if x <= xs[0] {
                    return gs[0];
                }
                let mut i = 0;
                while i + 2 < xs.len() && xs[i + 1] <= x {
                    i += 1;
                }
                let t = (x - xs[i]) / (xs[i + 1] - xs[i]);
                gs[i] + t * (gs[i + 1] - gs[i])
            }
        }
    }

    /// Upstream inlet height H (the wall's far asymptote).
    pub fn h_upstream(&self) -> f64 {
        self.h_upstream
    }

    /// Outlet height a = g(0), the global minimum of the wall.
    pub fn a(&self) -> f64 {
        self.a
    }

    /// Maximum wall height over x <= 0.
    pub fn h_bar(&self) -> f64 {
        self.h_bar
    }

    /// Wall slope at the outlet lip, used by the smooth-fit check.
    pub fn g_prime_at_0(&self) -> f64 {
        self.g_prime_at_0
    }
}

/// The truncated domain: |x| < L, y < L, below the wall for x <= 0.
///
/// Boundary segments: bottom axis T (y = 0, stream 0), nozzle wall N and the
/// lip segment I at x = 0 above the outlet (stream Q), inflow edge at
/// x = -L, outflow edge at x = L, and the closing arc of radius L/2 centered
/// at (L/2, L) over the top of the jet region.
#[derive(Debug, Clone)]
pub struct TruncatedDomain {
    geometry: NozzleGeometry,
    l: f64,
}

impl TruncatedDomain {
    pub fn geometry(&self) -> &NozzleGeometry {
        &self.geometry
    }

    pub fn l(&self) -> f64 {
        self.l
    }

    /// Height of the closing arc over [0, L]: the upper half circle of
    /// radius L/2 centered at (L/2, L).
    pub fn arc_y(&self, x: f64) -> f64 {
        let r = 0.5 * self.l;
        let d = x - r;
        self.l + fmath::sqrt((r * r - d * d).max(0.0))
    }

    /// Inflow edge height g(-L).
    pub fn inlet_height(&self) -> f64 {
        self.geometry.g(-self.l)
    }

    /// Whether (x, y) lies inside the open truncated domain.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        if !(y > 0.0) || !(x > -self.l) || !(x < self.l) || !(y < self.l) {
            return false;
        }
        if x <= 0.0 {
            y < self.geometry.g(x)
        } else {
            true
        }
    }
}

/// Builds the truncated domain, checking L > max wall height and that the
/// wall has essentially reached its upstream asymptote at x = -L.
pub fn build_domain(geometry: &NozzleGeometry, l: f64) -> Result<TruncatedDomain> {
    let h = geometry.h_upstream();
    let a = geometry.a();
    let tol = (0.10 * (h - a)).max(1e-9 * (1.0 + h));
    build_domain_with_asymptote_tol(geometry, l, tol)
}

pub fn build_domain_with_asymptote_tol(geometry: &NozzleGeometry, l: f64, asymptote_tol: f64) -> Result<TruncatedDomain> {
    if !(l > geometry.h_bar()) || !l.is_finite() {
        return Err(Error::config(format!(
            "truncation half-width L = {l} must exceed the maximum wall height {}",
            geometry.h_bar()
        )));
    }
    let g_inlet = geometry.g(-l);
    let gap = fmath::abs(g_inlet - geometry.h_upstream());
    if gap > asymptote_tol {
        return Err(Error::config(format!(
            "wall height g(-L) = {g_inlet} is {gap} away from the upstream height {}; increase L",
            geometry.h_upstream()
        )));
    }
    Ok(TruncatedDomain { geometry: geometry.clone(), l })
}

/// Node classification on the uniform grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeClass {
    /// Unknown of the minimization.
    Interior,
    /// Fixed boundary value.
    Dirichlet,
    /// Outside the computational region; never touched.
    Exterior,
}

/// Which boundary segment claimed a Dirichlet node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryTag {
    None,
    /// Bottom symmetry axis (stream 0).
    Bottom,
    /// Nozzle wall, lip segment, or top closure (stream Q).
    Wall,
    /// Inflow edge at x = -L (inlet stream profile).
    Inlet,
    /// Outflow edge at x = L (downstream stream profile, clamped at Q).
    Outlet,
}

/// Node prescription for synthetic grids built via [`TruncatedDomainGrid::from_fn`].
#[derive(Debug, Clone, Copy)]
pub enum NodeSpec {
    Interior { jump: bool },
    Dirichlet { value: f64 },
    Exterior,
}

/// Uniform grid over the truncated domain (or a synthetic test region).
///
/// Nodes are indexed row-major, bottom row first: `idx = j * nx + i` with
/// `x = x0 + i h`, `y = y0 + j h`. Classification is immutable; Dirichlet
/// values are attached by [`assemble_dirichlet`] (the geometry rasterization
/// leaves profile-dependent edges unset).
#[derive(Debug, Clone)]
pub struct TruncatedDomainGrid {
    nx: usize,
    ny: usize,
    h: f64,
    x0: f64,
    y0: f64,
    q: f64,
    class: Vec<NodeClass>,
    tag: Vec<BoundaryTag>,
    value: Vec<f64>,
    jump: Vec<bool>,
    interior: Vec<u32>,
    col_span: Vec<Option<(usize, usize)>>,
    assembled: bool,
    /// Inflow edge height captured at rasterization (for assembly checks).
    inlet_top: f64,
}

impl TruncatedDomainGrid {
    #[inline]
    pub fn nx(&self) -> usize {
        self.nx
    }

    #[inline]
    pub fn ny(&self) -> usize {
        self.ny
    }

    #[inline]
    pub fn h(&self) -> f64 {
        self.h
    }

    #[inline]
    pub fn x_of(&self, i: usize) -> f64 {
        self.x0 + self.h * i as f64
    }

    #[inline]
    pub fn y_of(&self, j: usize) -> f64 {
        self.y0 + self.h * j as f64
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    /// Mass flux Q the Dirichlet data was assembled for (NaN before assembly).
    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn is_assembled(&self) -> bool {
        self.assembled
    }

    #[inline]
    pub fn class_at(&self, k: usize) -> NodeClass {
        self.class[k]
    }

    #[inline]
    pub fn tag_at(&self, k: usize) -> BoundaryTag {
        self.tag[k]
    }

    /// Dirichlet value at node k (NaN for interior/exterior or unassembled).
    #[inline]
    pub fn value_at(&self, k: usize) -> f64 {
        self.value[k]
    }

    /// Whether the node pays the jump (wet-area) energy term.
    #[inline]
    pub fn jump_at(&self, k: usize) -> bool {
        self.jump[k]
    }

    /// All interior node indices in lexicographic (bottom-up) order.
    pub fn interior(&self) -> &[u32] {
        &self.interior
    }

    /// Inclusive j-range of interior nodes in column i.
    pub fn col_interior_span(&self, i: usize) -> Option<(usize, usize)> {
        self.col_span[i]
    }

    /// Builds a synthetic grid from a per-node prescription; used by the
    /// analytic-oracle tests (strip and disk problems).
    pub fn from_fn(
        nx: usize,
        ny: usize,
        h: f64,
        x0: f64,
        y0: f64,
        q: f64,
        f: impl Fn(f64, f64) -> NodeSpec,
    ) -> Result<Self> {
        if nx < 3 || ny < 3 || !(h > 0.0) || !h.is_finite() {
            return Err(Error::config("grid needs nx, ny >= 3 and positive spacing"));
        }
        if !(q > 0.0) || !q.is_finite() {
            return Err(Error::config(format!("grid mass flux must be positive, got {q}")));
        }
        let n = nx * ny;
        let mut grid = Self {
            nx,
            ny,
            h,
            x0,
            y0,
            q,
            class: alloc::vec![NodeClass::Exterior; n],
            tag: alloc::vec![BoundaryTag::None; n],
            value: alloc::vec![f64::NAN; n],
            jump: alloc::vec![false; n],
            interior: Vec::new(),
            col_span: alloc::vec![None; nx],
            assembled: true,
            inlet_top: f64::NAN,
        };
        for j in 0..ny {
            for i in 0..nx {
                let k = grid.idx(i, j);
                match f(grid.x_of(i), grid.y_of(j)) {
                    NodeSpec::Interior { jump } => {
                        grid.class[k] = NodeClass::Interior;
                        grid.jump[k] = jump;
                    }
                    NodeSpec::Dirichlet { value } => {
                        if !value.is_finite() || value < -1e-12 * q || value > q * (1.0 + 1e-12) {
                            return Err(Error::config(format!(
                                "dirichlet value {value} at node ({i}, {j}) outside [0, Q]"
                            )));
                        }
                        grid.class[k] = NodeClass::Dirichlet;
                        grid.value[k] = value.clamp(0.0, q);
                    }
                    NodeSpec::Exterior => {}
                }
            }
        }
        grid.finish_structure()?;
        Ok(grid)
    }

    /// Interior list, column spans, and the neighbor invariant.
    fn finish_structure(&mut self) -> Result<()> {
        self.interior.clear();
        for j in 0..self.ny {
            for i in 0..self.nx {
                let k = self.idx(i, j);
                if self.class[k] != NodeClass::Interior {
                    continue;
                }
                if i == 0 || j == 0 || i == self.nx - 1 || j == self.ny - 1 {
                    return Err(Error::config(format!("interior node ({i}, {j}) lies on the grid border")));
                }
                for nb in [k - 1, k + 1, k - self.nx, k + self.nx] {
                    if self.class[nb] == NodeClass::Exterior {
                        return Err(Error::config(format!(
                            "interior node ({i}, {j}) touches an exterior node"
                        )));
                    }
                }
                self.interior.push(k as u32);
            }
        }
        if self.interior.is_empty() {
            return Err(Error::config("grid has no interior nodes"));
        }
        for i in 0..self.nx {
            let mut span = None;
            for j in 0..self.ny {
                if self.class[self.idx(i, j)] == NodeClass::Interior {
                    span = match span {
                        None => Some((j, j)),
                        Some((lo, _)) => Some((lo, j)),
                    };
                }
            }
            self.col_span[i] = span;
        }
        Ok(())
    }
}

/// Rasterizes the truncated domain at spacing `h_grid`.
///
/// Classification priority for nodes on a boundary curve: bottom axis first,
/// then the stream-Q curves (wall, lip, top closure), then the inflow and
/// outflow edges. Nodes on or above the wall carry Q (staircase, first-order
/// boundary error); the closing arc collapses to its chord at y = L, which
/// is the lower envelope of the arc inside the computational box. Dirichlet
/// values for the inflow/outflow edges are attached by [`assemble_dirichlet`].
pub fn rasterize(domain: &TruncatedDomain, h_grid: f64) -> Result<TruncatedDomainGrid> {
    let l = domain.l();
    let a = domain.geometry().a();
    if !(h_grid > 0.0) || !h_grid.is_finite() {
        return Err(Error::config(format!("grid spacing must be positive, got {h_grid}")));
    }
    let steps_x = 2.0 * l / h_grid;
    if fmath::abs(steps_x - fmath::round(steps_x)) > 1e-6 {
        return Err(Error::config(format!(
            "grid spacing {h_grid} must divide the domain width {} evenly",
            2.0 * l
        )));
    }
    let cells_across_outlet = a / h_grid;
    if cells_across_outlet < 8.0 - 1e-9 {
        return Err(Error::config(format!(
            "grid spacing {h_grid} gives {cells_across_outlet:.2} cells across the outlet height {a}; need at least 8"
        )));
    }
    let nx = fmath::round(steps_x) as usize + 1;
    let steps_y = fmath::ceil(l / h_grid - 1e-9) as usize;
    let ny = steps_y + 1;

    let n = nx * ny;
    let mut grid = TruncatedDomainGrid {
        nx,
        ny,
        h: h_grid,
        x0: -l,
        y0: 0.0,
        q: f64::NAN,
        class: alloc::vec![NodeClass::Interior; n],
        tag: alloc::vec![BoundaryTag::None; n],
        value: alloc::vec![f64::NAN; n],
        jump: alloc::vec![false; n],
        interior: Vec::new(),
        col_span: alloc::vec![None; nx],
        assembled: false,
        inlet_top: domain.inlet_height(),
    };

    for j in 0..ny {
        for i in 0..nx {
            let k = grid.idx(i, j);
            let x = grid.x_of(i);
            let y = grid.y_of(j);
            if j == 0 {
                grid.class[k] = NodeClass::Dirichlet;
                grid.tag[k] = BoundaryTag::Bottom;
                continue;
            }
            let on_or_above_wall = if x <= SNAP {
                // Nozzle wall for x < 0; the lip segment handles x = 0.
                let gx = domain.geometry().g(x.min(0.0));
                let lip = fmath::abs(x) <= SNAP && y >= a - SNAP;
                y >= gx - SNAP || lip
            } else {
                // Top closure: chord of the arc at y = L.
                y >= l - SNAP
            };
            if on_or_above_wall {
                grid.class[k] = NodeClass::Dirichlet;
                grid.tag[k] = BoundaryTag::Wall;
                continue;
            }
            if i == 0 {
                grid.class[k] = NodeClass::Dirichlet;
                grid.tag[k] = BoundaryTag::Inlet;
                continue;
            }
            if i == nx - 1 {
                grid.class[k] = NodeClass::Dirichlet;
                grid.tag[k] = BoundaryTag::Outlet;
                continue;
            }
            grid.jump[k] = x > SNAP;
        }
    }
    grid.finish_structure()?;
    Ok(grid)
}

/// Attaches Dirichlet values for a particular free-boundary speed: 0 on the
/// bottom axis, Q on the wall set, the inlet ODE profile on the inflow edge,
/// and the downstream stream profile clamped at Q on the outflow edge.
///
/// Returns a new grid; the input (typically the bare rasterization, but
/// re-assembly of an already assembled grid is fine) is unchanged.
pub fn assemble_dirichlet(
    grid: &TruncatedDomainGrid,
    downstream: &DownstreamState,
    inlet: &InletProfile,
) -> Result<TruncatedDomainGrid> {
    let q = inlet.q();
    if !(q > 0.0) {
        return Err(Error::config(format!("inlet profile flux must be positive, got {q}")));
    }
    if fmath::abs(inlet.height() - grid.inlet_top) > 1e-9 * (1.0 + grid.inlet_top) {
        return Err(Error::config(format!(
            "inlet profile height {} does not match the grid inflow edge height {}",
            inlet.height(),
            grid.inlet_top
        )));
    }
    let mut out = grid.clone();
    out.q = q;
    for j in 0..out.ny {
        for i in 0..out.nx {
            let k = out.idx(i, j);
            if out.class[k] != NodeClass::Dirichlet {
                continue;
            }
            let y = out.y_of(j);
            let v = match out.tag[k] {
                BoundaryTag::Bottom => 0.0,
                BoundaryTag::Wall => q,
                BoundaryTag::Inlet => inlet.value(y),
                BoundaryTag::Outlet => downstream.psi_lambda(y),
                BoundaryTag::None => {
                    return Err(Error::config(
                        "grid carries untagged dirichlet nodes; assemble only rasterized domains",
                    ))
                }
            };
            if !v.is_finite() {
                return Err(Error::invariant(format!("non-finite dirichlet value at node ({i}, {j})")));
            }
            out.value[k] = v.clamp(0.0, q);
        }
    }
    // Profile edges must be non-decreasing in y (both stream profiles are).
    for i in [0, out.nx - 1] {
        let mut prev = f64::NEG_INFINITY;
        for j in 0..out.ny {
            let k = out.idx(i, j);
            if out.class[k] == NodeClass::Dirichlet {
                let v = out.value[k];
                if v < prev - 1e-12 * (1.0 + q) {
                    return Err(Error::invariant(format!(
                        "edge data decreases in y at column {i}, row {j}: {v} < {prev}"
                    )));
                }
                prev = v;
            }
        }
    }
    out.assembled = true;
    Ok(out)
}
