//! Upstream shear profile and the one-dimensional hydrodynamic objects built
//! from it: the streamline change of variables, the vorticity strength with
//! its global C1 extension, the convex energy density, the downstream
//! conjugate state, and the inlet stream profile.
//!
//! Everything here is deterministic and immutable after construction, so the
//! objects can be shared freely across threads.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::fmath;
use crate::interp::{Pchip, UniformHermite};
use crate::quad;
use crate::root;

/// Absolute tolerance of the adaptive quadratures in this module. These
/// values feed outer bisection loops, so they sit far below grid error.
const QUAD_ABS_TOL: f64 = 1e-12;

/// Sample count for construction-time validation scans.
const VALIDATION_SAMPLES: usize = 512;

/// Fixed step count for the inlet shooting integrator (RK4); global error
/// is O(steps^-4), far below the field tolerance for any sane geometry.
const INLET_STEPS: usize = 4000;

#[derive(Debug, Clone)]
enum ProfileKind {
    Constant { value: f64 },
    /// u0(y) = base + coeff * y^2 with base > 0, coeff >= 0.
    Quadratic { base: f64, coeff: f64 },
    /// Monotone-cubic interpolant of dense samples; the interpolant itself
    /// is the profile (its derivatives are the profile's derivatives).
    Tabulated { interp: Pchip },
}

/// Inlet velocity profile u0(y) on [0, H].
///
/// Valid profiles are strictly positive, have zero shear on the symmetry
/// axis (u0'(0) = 0), and are convex (u0'' >= 0), so the fastest fluid sits
/// at the nozzle wall and the wall speed u0(H) is the baseline speed for the
/// free boundary.
#[derive(Debug, Clone)]
pub struct UpstreamProfile {
    kind: ProfileKind,
    height: f64,
    q: f64,
    lambda0: f64,
}

impl UpstreamProfile {
    /// Uniform stream u0 = value on [0, height].
    pub fn constant(value: f64, height: f64) -> Result<Self> {
        if !(value > 0.0) || !value.is_finite() {
            return Err(Error::config(format!("constant profile needs a positive speed, got {value}")));
        }
        Self::finish(ProfileKind::Constant { value }, height)
    }

    /// Quadratic shear u0(y) = base + coeff * y^2 on [0, height].
    pub fn quadratic(base: f64, coeff: f64, height: f64) -> Result<Self> {
        if !(base > 0.0) || !base.is_finite() || !coeff.is_finite() || coeff < 0.0 {
            return Err(Error::config(format!(
                "quadratic profile needs base > 0 and coeff >= 0, got base {base}, coeff {coeff}"
            )));
        }
        Self::finish(ProfileKind::Quadratic { base, coeff }, height)
    }

    /// Profile interpolated through dense samples (ys strictly increasing
    /// from 0; the interpolant must itself satisfy the profile invariants).
    pub fn tabulated(ys: &[f64], us: &[f64]) -> Result<Self> {
        if ys.is_empty() || ys[0] != 0.0 {
            return Err(Error::config("tabulated profile must start at y = 0"));
        }
        let interp = Pchip::new(ys, us)?;
        let height = *ys.last().unwrap();
        Self::finish(ProfileKind::Tabulated { interp }, height)
    }

    fn finish(kind: ProfileKind, height: f64) -> Result<Self> {
        if !(height > 0.0) || !height.is_finite() {
            return Err(Error::config(format!("profile height must be positive and finite, got {height}")));
        }
        let mut p = Self { kind, height, q: f64::NAN, lambda0: f64::NAN };
        p.validate()?;
        // Mass flux by adaptive quadrature (exact for the polynomial presets).
        let rough = height * p.u0(height);
        let q = quad::integrate(&|y| p.u0(y), 0.0, height, QUAD_ABS_TOL * (1.0 + fmath::abs(rough)));
        if !(q > 0.0) {
            return Err(Error::config(format!("profile mass flux must be positive, got {q}")));
        }
        p.q = q;
        p.lambda0 = p.u0(height);
        // The closed-form cumulative flux must agree with the quadrature.
        let w_h = p.cumulative_flux(height);
        if fmath::abs(w_h - q) > 1e-10 * (1.0 + q) {
            return Err(Error::invariant(format!(
                "cumulative flux at the wall ({w_h}) disagrees with quadrature flux ({q})"
            )));
        }
        Ok(p)
    }

    /// Positivity, axis symmetry (u0'(0) = 0), and convexity of the profile
    /// (for tabulated input: of its interpolant), on a dense scan.
    fn validate(&self) -> Result<()> {
        let n = VALIDATION_SAMPLES;
        let mut max_slope = 0.0_f64;
        let mut max_curv = 0.0_f64;
        for i in 0..=n {
            let y = self.height * i as f64 / n as f64;
            let u = self.u0(y);
            if !(u > 0.0) || !u.is_finite() {
                return Err(Error::config(format!("u0({y}) = {u} is not strictly positive")));
            }
            max_slope = max_slope.max(fmath::abs(self.u0_prime(y)));
            max_curv = max_curv.max(fmath::abs(self.u0_second(y)));
        }
        let d0 = self.u0_prime(0.0);
        if fmath::abs(d0) > 1e-5 * (1.0 + max_slope) {
            return Err(Error::config(format!("u0'(0) = {d0} must vanish on the symmetry axis")));
        }
        // Sample curvature strictly inside intervals (the tabulated second
        // derivative is discontinuous at knots).
        for i in 0..n {
            let y = self.height * (i as f64 + 0.5) / n as f64;
            let c = self.u0_second(y);
            if c < -1e-6 * (1.0 + max_curv) {
                return Err(Error::config(format!("u0''({y}) = {c} violates convexity")));
            }
        }
        Ok(())
    }

    pub fn u0(&self, y: f64) -> f64 {
        let y = y.clamp(0.0, self.height);
        match &self.kind {
            ProfileKind::Constant { value } => *value,
            ProfileKind::Quadratic { base, coeff } => base + coeff * y * y,
            ProfileKind::Tabulated { interp } => interp.eval(y),
        }
    }

    pub fn u0_prime(&self, y: f64) -> f64 {
        let y = y.clamp(0.0, self.height);
        match &self.kind {
            ProfileKind::Constant { .. } => 0.0,
            ProfileKind::Quadratic { coeff, .. } => 2.0 * coeff * y,
            ProfileKind::Tabulated { interp } => interp.deriv(y),
        }
    }

    pub fn u0_second(&self, y: f64) -> f64 {
        let y = y.clamp(0.0, self.height);
        match &self.kind {
            ProfileKind::Constant { .. } => 0.0,
            ProfileKind::Quadratic { coeff, .. } => 2.0 * coeff,
            ProfileKind::Tabulated { interp } => interp.deriv2(y),
        }
    }

    /// Exact cumulative flux W(y) = integral of u0 from 0 to y.
    pub fn cumulative_flux(&self, y: f64) -> f64 {
        let y = y.clamp(0.0, self.height);
        match &self.kind {
            ProfileKind::Constant { value } => value * y,
            ProfileKind::Quadratic { base, coeff } => base * y + coeff * y * y * y / 3.0,
            ProfileKind::Tabulated { interp } => interp.integral_from_start(y),
        }
    }

    /// Mass flux Q (computed once at construction by adaptive quadrature).
    pub fn mass_flux(&self) -> f64 {
        self.q
    }

    pub fn height(&self) -> f64 {
        self.height
    }

    /// Wall speed u0(H), the lower bound for the free-boundary speed.
    pub fn lambda0(&self) -> f64 {
        self.lambda0
    }
}

/// Streamline map, vorticity strength, global extension, and energy density.
///
/// `kappa(t)` inverts the cumulative flux (the height at which a streamline
/// carries flux t), `f0(t) = -u0'(kappa(t))` is the vorticity strength in
/// stream coordinates, `f0_ext` extends it to all reals as a C1 non-increasing
/// function constant outside [-1, Q+1], and `big_f0` is the convex energy
/// density with d/dt big_f0 = -2 f0_ext and big_f0(Q) = 0.
#[derive(Debug, Clone)]
pub struct VorticityModel {
    profile: UpstreamProfile,
    /// W(H) by the closed form; kappa clamps its argument here so the
    /// endpoint bracket is always valid.
    w_at_h: f64,
    f0_at_q: f64,
    f0p_at_q: f64,
    f0p_at_0: f64,
    big_f0_at_0: f64,
    big_f0_at_m1: f64,
    big_f0_at_q1: f64,
    /// f0_ext values of the constant tails.
    tail_hi: f64,
    tail_lo: f64,
    lambda_bound: f64,
    zero_strength: bool,
}

impl VorticityModel {
    pub fn build(profile: &UpstreamProfile) -> Result<Self> {
        let h = profile.height();
        let q = profile.mass_flux();
        let lambda0 = profile.lambda0();
        let f0_at_q = -profile.u0_prime(h);
        let f0p_at_q = -profile.u0_second(h) / profile.u0(h);
        let f0p_at_0 = -profile.u0_second(0.0) / profile.u0(0.0);
        let u00 = profile.u0(0.0);
        let big_f0_at_0 = u00 * u00 - lambda0 * lambda0;
        let big_f0_at_m1 = big_f0_at_0 - (2.0 / 3.0) * f0p_at_0;
        let big_f0_at_q1 = -2.0 * (f0_at_q + f0p_at_q / 3.0);
        let tail_hi = f0_at_q + 0.5 * f0p_at_q;
        let tail_lo = -0.5 * f0p_at_0;
        let mut model = Self {
            profile: profile.clone(),
            w_at_h: profile.cumulative_flux(h),
            f0_at_q,
            f0p_at_q,
            f0p_at_0,
            big_f0_at_0,
            big_f0_at_m1,
            big_f0_at_q1,
            tail_hi,
            tail_lo,
            lambda_bound: 0.0,
            zero_strength: false,
        };

        // Monotonicity of f0 on a dense sample, and the strength bound.
        let n = VALIDATION_SAMPLES;
        let mut sup_fp = fmath::abs(f0p_at_q).max(fmath::abs(f0p_at_0));
        let mut prev = model.f0_clamped(0.0);
        if fmath::abs(prev) > 1e-12 * (1.0 + fmath::abs(f0_at_q)) {
            return Err(Error::invariant(format!("f0(0) = {prev} must vanish")));
        }
        for i in 1..=n {
            let t = q * i as f64 / n as f64;
            let v = model.f0_clamped(t);
            if v > prev + 1e-9 * (1.0 + fmath::abs(f0_at_q)) {
                return Err(Error::invariant(format!("vorticity strength increases near t = {t}")));
            }
            sup_fp = sup_fp.max(fmath::abs(model.f0_prime_clamped(t)));
            prev = v;
        }
        let sup_f = fmath::abs(tail_lo).max(fmath::abs(tail_hi));
        model.lambda_bound = (sup_f.max(sup_fp)) * 1.001;
        model.zero_strength = model.lambda_bound == 0.0;
        Ok(model)
    }

    pub fn profile(&self) -> &UpstreamProfile {
        &self.profile
    }

    pub fn q(&self) -> f64 {
        self.profile.mass_flux()
    }

    /// Upper bound for sup(|f0_ext|, |f0_ext'|), used in diagnostic radii.
    pub fn lambda_bound(&self) -> f64 {
        self.lambda_bound
    }

    /// True when the strength vanishes identically (irrotational flow);
    /// lets hot loops skip the root-finding entirely.
    pub fn has_zero_strength(&self) -> bool {
        self.zero_strength
    }

    /// Streamline height kappa(t): the unique solution of W(kappa) = t.
    pub fn kappa(&self, t: f64) -> Result<f64> {
        let q = self.q();
        let tol = 1e-9 * (1.0 + q);
        if !(t >= -tol) || !(t <= q + tol) {
            return Err(Error::domain(format!("kappa({t}) outside the flux range [0, {q}]")));
        }
        Ok(self.kappa_clamped(t))
    }

    fn kappa_clamped(&self, t: f64) -> f64 {
        let t = t.clamp(0.0, self.w_at_h);
        match &self.profile.kind {
            ProfileKind::Constant { value } => t / value,
            _ => {
                if t == 0.0 {
                    return 0.0;
                }
                let h = self.profile.height();
                let q = self.q();
                let x0 = (t / q * h).clamp(0.0, h);
                // W is strictly increasing with W' = u0 > 0; Newton converges
                // in a handful of steps and the bracket guards the endpoints.
                root::newton_bisect(
                    |k| (self.profile.cumulative_flux(k) - t, self.profile.u0(k)),
                    0.0,
                    h,
                    x0,
                    1e-16 * h,
                    1e-12 * q.max(1e-300),
                    200,
                )
                .expect("cumulative flux is strictly monotone on [0, H]")
            }
        }
    }

    /// Vorticity strength f0(t) = -u0'(kappa(t)) on [0, Q].
    pub fn f0(&self, t: f64) -> Result<f64> {
        let q = self.q();
        let tol = 1e-9 * (1.0 + q);
        if !(t >= -tol) || !(t <= q + tol) {
            return Err(Error::domain(format!("f0({t}) outside the flux range [0, {q}]")));
        }
        Ok(self.f0_clamped(t))
    }

    fn f0_clamped(&self, t: f64) -> f64 {
        -self.profile.u0_prime(self.kappa_clamped(t))
    }

    fn f0_prime_clamped(&self, t: f64) -> f64 {
        let k = self.kappa_clamped(t);
        -self.profile.u0_second(k) / self.profile.u0(k)
    }

    /// Global C1 extension of the strength: quadratic blends on [-1, 0] and
    /// [Q, Q+1], constant tails beyond, f0 itself on [0, Q]. Non-increasing.
    pub fn f0_ext(&self, t: f64) -> f64 {
        if self.zero_strength {
            return 0.0;
        }
        let q = self.q();
        if t >= q + 1.0 {
            self.tail_hi
        } else if t >= q {
            let r = t - q;
            self.f0_at_q + self.f0p_at_q * (r - 0.5 * r * r)
        } else if t >= 0.0 {
            self.f0_clamped(t)
        } else if t >= -1.0 {
            self.f0p_at_0 * (t + 0.5 * t * t)
        } else {
            self.tail_lo
        }
    }

    /// Derivative of the extension (non-positive everywhere).
    pub fn f0_ext_prime(&self, t: f64) -> f64 {
        if self.zero_strength {
            return 0.0;
        }
        let q = self.q();
        if t >= q + 1.0 {
            0.0
        } else if t >= q {
            self.f0p_at_q * (1.0 - (t - q))
        } else if t >= 0.0 {
            self.f0_prime_clamped(t)
        } else if t >= -1.0 {
            self.f0p_at_0 * (1.0 + t)
        } else {
            0.0
        }
    }

    /// Extension value and derivative with a single streamline inversion.
    pub fn f0_ext_with_prime(&self, t: f64) -> (f64, f64) {
        if self.zero_strength {
            return (0.0, 0.0);
        }
        let q = self.q();
        if (0.0..q).contains(&t) {
            let k = self.kappa_clamped(t);
            (-self.profile.u0_prime(k), -self.profile.u0_second(k) / self.profile.u0(k))
        } else {
            (self.f0_ext(t), self.f0_ext_prime(t))
        }
    }

    /// Energy density big_f0(t) = 2 * integral of f0_ext from t to Q.
    ///
    /// Evaluated in closed form: on [0, Q] it reduces to
    /// u0(kappa(t))^2 - lambda0^2 (substitute the cumulative flux in the
    /// integral), and the blend pieces integrate to cubics. Convex, zero at
    /// Q, with exact derivative -2 f0_ext everywhere.
    pub fn big_f0(&self, t: f64) -> f64 {
        if self.zero_strength {
            return 0.0;
        }
        let q = self.q();
        if t >= q {
            if t <= q + 1.0 {
                let r = t - q;
                -2.0 * (self.f0_at_q * r + self.f0p_at_q * (0.5 * r * r - r * r * r / 6.0))
            } else {
                self.big_f0_at_q1 - 2.0 * self.tail_hi * (t - q - 1.0)
            }
        } else if t >= 0.0 {
            let u = self.profile.u0(self.kappa_clamped(t));
            let l0 = self.profile.lambda0();
            u * u - l0 * l0
        } else if t >= -1.0 {
            self.big_f0_at_0 - 2.0 * self.f0p_at_0 * (0.5 * t * t + t * t * t / 6.0)
        } else {
            self.big_f0_at_m1 + self.f0p_at_0 * (t + 1.0)
        }
    }
}

/// Downstream conjugate state at free-boundary speed lambda >= lambda0.
///
/// Carries the contraction map chi (streamline heights far downstream), the
/// downstream velocity u1, the asymptotic jet height h = chi(H), and the
/// downstream stream profile used as Dirichlet data on the outflow edge.
#[derive(Debug, Clone)]
pub struct DownstreamState {
    profile: UpstreamProfile,
    lambda: f64,
    p_diff: f64,
    p_atm: f64,
    h: f64,
}

impl DownstreamState {
    pub fn build(profile: &UpstreamProfile, lambda: f64) -> Result<Self> {
        Self::build_with_p_atm(profile, lambda, 0.0)
    }

    pub fn build_with_p_atm(profile: &UpstreamProfile, lambda: f64, p_atm: f64) -> Result<Self> {
        let l0 = profile.lambda0();
        if !lambda.is_finite() || lambda < l0 * (1.0 - 1e-12) {
            return Err(Error::domain(format!(
                "free-boundary speed {lambda} below the wall speed {l0} (negative pressure difference)"
            )));
        }
        let p_diff = (0.5 * (lambda * lambda - l0 * l0)).max(0.0);
        let mut s = Self { profile: profile.clone(), lambda, p_diff, p_atm, h: f64::NAN };
        s.h = s.chi_unchecked(profile.height());
        Ok(s)
    }

    /// Build directly from the pressure difference p_diff >= 0.
    pub fn build_from_p_diff(profile: &UpstreamProfile, p_diff: f64) -> Result<Self> {
        if !p_diff.is_finite() || p_diff < 0.0 {
            return Err(Error::domain(format!("pressure difference must be non-negative, got {p_diff}")));
        }
        let l0 = profile.lambda0();
        Self::build(profile, fmath::sqrt(l0 * l0 + 2.0 * p_diff))
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn p_diff(&self) -> f64 {
        self.p_diff
    }

    pub fn p_atm(&self) -> f64 {
        self.p_atm
    }

    /// Upstream bulk pressure p_in = p_atm + p_diff.
    pub fn p_in(&self) -> f64 {
        self.p_atm + self.p_diff
    }

    /// Asymptotic jet height h = chi(H). Equals H at lambda = lambda0 and
    /// decreases strictly in lambda (the jet contracts as it speeds up).
    pub fn h(&self) -> f64 {
        self.h
    }

    fn chi_unchecked(&self, s: f64) -> f64 {
        let p2 = 2.0 * self.p_diff;
        quad::integrate(
            &|y| {
                let u = self.profile.u0(y);
                u / fmath::sqrt(u * u + p2)
            },
            0.0,
            s,
            QUAD_ABS_TOL,
        )
    }

    /// Downstream height of the streamline entering at height s: the map
    /// chi(s) with chi(0) = 0, chi' in (0, 1], so chi(s) <= s.
    pub fn chi(&self, s: f64) -> Result<f64> {
        let h_up = self.profile.height();
        let tol = 1e-9 * (1.0 + h_up);
        if !(s >= -tol) || s > h_up + tol {
            return Err(Error::domain(format!("chi({s}) outside the inlet range [0, {h_up}]")));
        }
        Ok(self.chi_unchecked(s.clamp(0.0, h_up)))
    }

    fn chi_inverse_unchecked(&self, t: f64) -> f64 {
        let h_up = self.profile.height();
        let t = t.clamp(0.0, self.h);
        if t == 0.0 {
            return 0.0;
        }
        let p2 = 2.0 * self.p_diff;
        let x0 = (t / self.h * h_up).clamp(0.0, h_up);
        root::newton_bisect(
            |s| {
                let u = self.profile.u0(s);
                (self.chi_unchecked(s) - t, u / fmath::sqrt(u * u + p2))
            },
            0.0,
            h_up,
            x0,
            1e-16 * h_up,
            1e-12 * (1.0 + self.h),
            200,
        )
        .expect("chi is strictly increasing on [0, H]")
    }

    /// Inverse of chi on [0, h], by safeguarded Newton on the monotone map.
    pub fn chi_inverse(&self, t: f64) -> Result<f64> {
        let tol = 1e-9 * (1.0 + self.h);
        if !(t >= -tol) || t > self.h + tol {
            return Err(Error::domain(format!("chi_inverse({t}) outside the jet range [0, {}]", self.h)));
        }
        Ok(self.chi_inverse_unchecked(t))
    }

    /// Downstream horizontal velocity u1(t) = sqrt(u0(chi^-1(t))^2 + 2 p_diff).
    pub fn u1(&self, t: f64) -> Result<f64> {
        let tol = 1e-9 * (1.0 + self.h);
        if !(t >= -tol) || t > self.h + tol {
            return Err(Error::domain(format!("u1({t}) outside the jet range [0, {}]", self.h)));
        }
        let s = self.chi_inverse_unchecked(t);
        let u = self.profile.u0(s);
        Ok(fmath::sqrt(u * u + 2.0 * self.p_diff))
    }

    /// Downstream stream profile clamped at Q: 0 at the axis, Q above the
    /// jet surface y = h. Used directly as outflow Dirichlet data.
    ///
    /// Uses the flux identity: the stream value at height chi(s) equals the
    /// cumulative inlet flux W(s), so no second quadrature is needed.
    pub fn psi_lambda(&self, y: f64) -> f64 {
        let q = self.profile.mass_flux();
        if y <= 0.0 {
            return 0.0;
        }
        if y >= self.h {
            return q;
        }
        let s = self.chi_inverse_unchecked(y);
        self.profile.cumulative_flux(s).clamp(0.0, q)
    }
}

/// Stream profile on the truncated inlet edge: the solution of the two-point
/// problem v'' = -f0_ext(v), v(0) = 0, v(inlet_height) = Q.
#[derive(Debug, Clone)]
pub struct InletProfile {
    height: f64,
    q: f64,
    traj: UniformHermite,
    endpoint_residual: f64,
}

impl InletProfile {
    pub fn value(&self, y: f64) -> f64 {
        self.traj.eval(y.clamp(0.0, self.height))
    }

    pub fn deriv(&self, y: f64) -> f64 {
        self.traj.deriv(y.clamp(0.0, self.height))
    }

    pub fn height(&self) -> f64 {
        self.height
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    /// |value(height) - Q| achieved by the shooting iteration.
    pub fn endpoint_residual(&self) -> f64 {
        self.endpoint_residual
    }
}

/// Solves the inlet two-point problem by shooting on the initial slope.
///
/// The endpoint value is strictly increasing in the slope (the variational
/// equation has non-negative curvature), so bisection on the slope is safe;
/// the integrator is fixed-step RK4 and the final trajectory is stored
/// densely with its derivatives for C1 evaluation.
pub fn inlet_stream(inlet_height: f64, vorticity: &VorticityModel) -> Result<InletProfile> {
    if !(inlet_height > 0.0) || !inlet_height.is_finite() {
        return Err(Error::config(format!("inlet height must be positive, got {inlet_height}")));
    }
    let q = vorticity.q();
    let n = INLET_STEPS;
    let dt = inlet_height / n as f64;

    let accel = |v: f64| -vorticity.f0_ext(v);
    // RK4 trajectory for v'' = accel(v) from (0, slope); returns samples.
    let shoot = |slope: f64| -> (Vec<f64>, Vec<f64>) {
        let mut vals = Vec::with_capacity(n + 1);
        let mut ders = Vec::with_capacity(n + 1);
        let (mut y, mut v) = (0.0_f64, slope);
        vals.push(y);
        ders.push(v);
        for _ in 0..n {
            let k1y = v;
            let k1v = accel(y);
            let k2y = v + 0.5 * dt * k1v;
            let k2v = accel(y + 0.5 * dt * k1y);
            let k3y = v + 0.5 * dt * k2v;
            let k3v = accel(y + 0.5 * dt * k2y);
            let k4y = v + dt * k3v;
            let k4v = accel(y + dt * k3y);
            y += dt / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y);
            v += dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
            vals.push(y);
            ders.push(v);
        }
        (vals, ders)
    };
    let endpoint = |slope: f64| *shoot(slope).0.last().unwrap();

    // Zero slope keeps the trajectory at the axis value, strictly below Q;
    // raise the upper slope until the endpoint overshoots.
    let mut hi = (q / inlet_height).max(1e-3);
    let mut tries = 0;
    while endpoint(hi) < q {
        hi *= 2.0;
        tries += 1;
        if tries > 60 {
            return Err(Error::config(format!(
                "inlet shooting found no slope bracket up to {hi} (inlet height {inlet_height}, flux {q})"
            )));
        }
    }
    let slope = root::bisect(|s| endpoint(s) - q, 0.0, hi, 0.0, 200)?;

    let (vals, ders) = shoot(slope);
    let residual = fmath::abs(vals[n] - q);
    if residual > 1e-9 * q {
        return Err(Error::non_convergence(format!(
            "inlet shooting endpoint residual {residual} exceeds 1e-9 * Q"
        )));
    }
    // Interior bounds and monotonicity; guaranteed by convexity, so any
    // violation beyond roundoff is a bug or a broken strength model.
    for (i, (&v, &d)) in vals.iter().zip(ders.iter()).enumerate() {
        if !(v >= -1e-9 * q) || !(v <= q * (1.0 + 1e-9)) {
            return Err(Error::invariant(format!("inlet stream value {v} at sample {i} leaves [0, Q]")));
        }
        if d < -1e-9 * (1.0 + slope) {
            return Err(Error::invariant(format!("inlet stream slope {d} at sample {i} is negative")));
        }
    }
    Ok(InletProfile {
        height: inlet_height,
        q,
        traj: UniformHermite::new(0.0, dt, vals, ders)?,
        endpoint_residual: residual,
    })
}
