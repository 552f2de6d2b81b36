//! Two-body geometry: Kepler's equation, element/state conversion,
//! mean-anomaly derivatives and propagation with the state transition matrix.
//!
//! Propagation uses universal variables, so elliptic and hyperbolic arcs go
//! through the same code. The STM is the exact Jacobian of that map, obtained
//! with forward-mode dual numbers. A variational-equation integrator is kept
//! alongside as an independent check.

use std::f64::consts::{PI, TAU};

use nalgebra::{Matrix3, Matrix6, SVector, Vector3};
use ode_solvers::{Dop853, OutputType, System};
use serde::{Deserialize, Serialize};

use crate::dual::{Dual, Real};
use crate::error::{Error, Result};

pub const EARTH_MU: f64 = 398600.4418;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassicalElements {
    /// Semi-major axis [km].
    pub a: f64,
    pub e: f64,
    /// Inclination [rad].
    pub i: f64,
    pub raan: f64,
    pub argp: f64,
    /// Mean anomaly at the reference epoch [rad].
    pub m0: f64,
}

impl ClassicalElements {
    pub fn new(a: f64, e: f64, i: f64, raan: f64, argp: f64, m0: f64) -> Result<Self> {
        let el = Self { a, e, i, raan, argp, m0 };
        el.validate()?;
        Ok(el)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a.is_finite() && self.a > 0.0) {
            return Err(Error::InvalidElements(format!("a = {} must be positive", self.a)));
        }
        if !(0.0..1.0).contains(&self.e) {
            return Err(Error::InvalidEccentricity(self.e));
        }
        if ![self.i, self.raan, self.argp, self.m0].iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidElements("non-finite angle".into()));
        }
        Ok(())
    }

    pub fn period(&self, g: GravModel) -> f64 {
        TAU / mean_motion(self, g)
    }

    /// Unit orbit normal.
    pub fn angular_momentum_dir(&self) -> Vector3<f64> {
        let (so, co) = self.raan.sin_cos();
        let (si, ci) = self.i.sin_cos();
        Vector3::new(so * si, -co * si, ci)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CartesianState {
    pub r: Vector3<f64>,
    pub v: Vector3<f64>,
}

impl CartesianState {
    pub fn new(r: Vector3<f64>, v: Vector3<f64>) -> Self {
        Self { r, v }
    }

    pub fn energy(&self, g: GravModel) -> f64 {
        0.5 * self.v.norm_squared() - g.mu / self.r.norm()
    }

    pub fn angular_momentum(&self) -> Vector3<f64> {
        self.r.cross(&self.v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GravModel {
    /// Gravitational parameter [km^3/s^2].
    pub mu: f64,
}

impl GravModel {
    pub fn new(mu: f64) -> Result<Self> {
        if mu.is_finite() && mu > 0.0 {
            Ok(Self { mu })
        } else {
            Err(Error::InvalidConfig(format!("mu = {mu} must be positive")))
        }
    }

    pub fn earth() -> Self {
        Self { mu: EARTH_MU }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stm {
    pub phi: Matrix6<f64>,
}

impl Stm {
    pub fn identity() -> Self {
        Self { phi: Matrix6::identity() }
    }

    fn block(&self, i: usize, j: usize) -> Matrix3<f64> {
        self.phi.fixed_view::<3, 3>(i, j).into_owned()
    }

    pub fn rr(&self) -> Matrix3<f64> {
        self.block(0, 0)
    }

    pub fn rv(&self) -> Matrix3<f64> {
        self.block(0, 3)
    }

    pub fn vr(&self) -> Matrix3<f64> {
        self.block(3, 0)
    }

    pub fn vv(&self) -> Matrix3<f64> {
        self.block(3, 3)
    }

    /// `max |phi^T J phi - J|` after rescaling to length unit `lu` [km] and
    /// time unit `tu` [s].
    pub fn symplectic_defect(&self, lu: f64, tu: f64) -> f64 {
        let mut d = Matrix6::<f64>::identity();
        for k in 0..3 {
            d[(k, k)] = 1.0 / lu;
            d[(k + 3, k + 3)] = tu / lu;
        }
        let dinv = d.try_inverse().expect("diagonal scaling");
        let p = d * self.phi * dinv;
        let mut j = Matrix6::<f64>::zeros();
        for k in 0..3 {
            j[(k, k + 3)] = 1.0;
            j[(k + 3, k)] = -1.0;
        }
        (p.transpose() * j * p - j).amax()
    }
}

/// Eccentric anomaly from mean anomaly.
///
/// Newton from `E0 = m + e sin m`, kept inside the bracket
/// `[m - e, m + e]` that always contains the root.
pub fn solve_kepler(m: f64, e: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&e) {
        return Err(Error::InvalidEccentricity(e));
    }
    if !m.is_finite() {
        return Err(Error::KeplerNonConvergence { m, e });
    }
    let shift = TAU * ((m + PI) / TAU).floor();
    let mw = m - shift;
    if e == 0.0 {
        return Ok(m);
    }
    let (mut lo, mut hi) = (mw - e, mw + e);
    let mut x = mw + e * mw.sin();
    for _ in 0..50 {
        let f = x - e * x.sin() - mw;
        if f.abs() <= 1e-15 {
            return Ok(x + shift);
        }
        if f > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let mut next = x - f / (1.0 - e * x.cos());
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 4.0 * f64::EPSILON * x.abs().max(1.0) {
            return Ok(next + shift);
        }
        x = next;
    }
    let f = x - e * x.sin() - mw;
    if f.abs() <= 1e-13 {
        Ok(x + shift)
    } else {
        Err(Error::KeplerNonConvergence { m, e })
    }
}

pub fn mean_motion(el: &ClassicalElements, g: GravModel) -> f64 {
    (g.mu / el.a.powi(3)).sqrt()
}

/// Perifocal-to-inertial rotation (3-1-3 with Ω, i, ω).
pub fn perifocal_rotation(el: &ClassicalElements) -> Matrix3<f64> {
    let (so, co) = el.raan.sin_cos();
    let (si, ci) = el.i.sin_cos();
    let (sw, cw) = el.argp.sin_cos();
    Matrix3::new(
        co * cw - so * sw * ci,
        -co * sw - so * cw * ci,
        so * si,
        so * cw + co * sw * ci,
        -so * sw + co * cw * ci,
        -co * si,
        sw * si,
        cw * si,
        ci,
    )
}

pub fn elements_to_state(el: &ClassicalElements, m: f64, g: GravModel) -> Result<CartesianState> {
    let ea = solve_kepler(m, el.e)?;
    let (se, ce) = ea.sin_cos();
    let b = (1.0 - el.e * el.e).sqrt();
    let r = el.a * (1.0 - el.e * ce);
    let rp = Vector3::new(el.a * (ce - el.e), el.a * b * se, 0.0);
    let k = (g.mu * el.a).sqrt() / r;
    let vp = Vector3::new(-k * se, k * b * ce, 0.0);
    let c = perifocal_rotation(el);
    Ok(CartesianState { r: c * rp, v: c * vp })
}

/// `(dr/dM, dv/dM)` at mean anomaly `m`. Since `M = n t + M0`, these are the
/// velocity and the gravitational acceleration divided by `n`.
pub fn state_derivs_wrt_mean_anomaly(
    el: &ClassicalElements,
    m: f64,
    g: GravModel,
) -> Result<(Vector3<f64>, Vector3<f64>)> {
    let s = elements_to_state(el, m, g)?;
    let n = mean_motion(el, g);
    Ok((s.v / n, gravity(&s.r, g.mu) / n))
}

pub fn gravity(r: &Vector3<f64>, mu: f64) -> Vector3<f64> {
    let rn = r.norm();
    -mu / (rn * rn * rn) * r
}

/// Stumpff functions `(C(z), S(z))`.
pub fn stumpff<T: Real>(z: T) -> (T, T) {
    let zr = z.re();
    if zr.abs() < 2.0 {
        // C = sum (-z)^k / (2k+2)!, S = sum (-z)^k / (2k+3)!
        const K: usize = 14;
        let mut fact = [1.0f64; 2 * K + 4];
        for i in 1..fact.len() {
            fact[i] = fact[i - 1] * i as f64;
        }
        let mut c = T::cst(1.0 / fact[2 * K + 2]);
        let mut s = T::cst(1.0 / fact[2 * K + 3]);
        for k in (0..K).rev() {
            c = -(c * z) + 1.0 / fact[2 * k + 2];
            s = -(s * z) + 1.0 / fact[2 * k + 3];
        }
        (c, s)
    } else if zr > 0.0 {
        let sz = z.sqrt();
        ((-sz.cos() + 1.0) / z, (sz - sz.sin()) / (sz * sz * sz))
    } else {
        let sz = (-z).sqrt();
        ((sz.cosh() - 1.0) / (-z), (sz.sinh() - sz) / (sz * sz * sz))
    }
}

/// Returns `(sqrt(mu) * t(chi), r(chi))` of the universal Kepler equation.
fn universal_eq<T: Real>(chi: T, r0n: T, sigma0: T, alpha: T) -> (T, T) {
    let chi2 = chi * chi;
    let z = alpha * chi2;
    let (c, s) = stumpff(z);
    let k = -(alpha * r0n) + 1.0;
    let f = sigma0 * chi2 * c + k * chi2 * chi * s + r0n * chi;
    let r = sigma0 * chi * (-(z * s) + 1.0) + k * chi2 * c + r0n;
    (f, r)
}

fn norm3<T: Real>(a: &[T; 3]) -> T {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

fn dot3<T: Real>(a: &[T; 3], b: &[T; 3]) -> T {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Universal anomaly for elapsed time `dt`. The universal Kepler equation is
/// monotone in chi (its derivative is r > 0), so a bracketed Newton is safe.
fn solve_universal(r0: &[f64; 3], v0: &[f64; 3], dt: f64, mu: f64) -> Result<f64> {
    if dt == 0.0 {
        return Ok(0.0);
    }
    let sq = mu.sqrt();
    let r0n = norm3(r0);
    if !(r0n > 0.0) {
        return Err(Error::Propagation("zero radius".into()));
    }
    let sigma0 = dot3(r0, v0) / sq;
    let alpha = 2.0 / r0n - dot3(v0, v0) / mu;
    let target = sq * dt;
    let eval = |x: f64| universal_eq(x, r0n, sigma0, alpha);
    let sgn = dt.signum();

    let mut guess = if alpha > 1e-12 / r0n { sq * alpha * dt } else { sq * dt / r0n };
    if guess == 0.0 || !guess.is_finite() {
        guess = sq * dt / r0n;
    }
    let (mut lo, mut hi) = (0.0f64, guess);
    let mut grow = 0;
    while (eval(hi).0 - target) * sgn < 0.0 {
        lo = hi;
        hi *= 2.0;
        grow += 1;
        if grow > 200 || !hi.is_finite() {
            return Err(Error::Propagation("universal anomaly bracket failed".into()));
        }
    }
    if sgn < 0.0 {
        std::mem::swap(&mut lo, &mut hi);
    }
    // lo has residual < 0, hi has residual > 0
    let mut x = if grow == 0 { guess } else { 0.5 * (lo + hi) };
    for _ in 0..200 {
        let (f, r) = eval(x);
        let res = f - target;
        if res == 0.0 {
            return Ok(x);
        }
        if res > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let mut next = x - res / r;
        let (a, b) = if lo < hi { (lo, hi) } else { (hi, lo) };
        if !(next > a && next < b) {
            next = 0.5 * (a + b);
        }
        if (next - x).abs() <= 2.0 * f64::EPSILON * x.abs().max(1e-300) {
            return Ok(next);
        }
        // rounding noise in F can stall Newton inside a collapsed bracket
        if (b - a) <= 4.0 * f64::EPSILON * x.abs().max(1e-300) {
            return Ok(x);
        }
        x = next;
    }
    Err(Error::Propagation("universal anomaly did not converge".into()))
}

/// Kepler propagation over `dt` of a state whose components carry tangents.
/// The real parts give the propagated state; the tangent parts are the exact
/// directional derivatives of the flow.
pub fn propagate_generic<T: Real>(
    r0: [T; 3],
    v0: [T; 3],
    dt: f64,
    mu: f64,
) -> Result<([T; 3], [T; 3])> {
    propagate_split(r0, v0, dt, mu, 0)
}

/// Hyperbolic anomaly span above which a step is halved: `g = dt - chi^3 S`
/// cancels badly on fast, strongly bent hyperbolas.
const HYPERBOLIC_SPAN: f64 = 2.0;

/// `-alpha r0` above which the hyperbolic-anomaly propagator takes over.
const STRONG_HYPERBOLA: f64 = 1.0;

fn cross3<T: Real>(a: &[T; 3], b: &[T; 3]) -> [T; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

/// Root of `e sinh H - H = m` for `e > 1`; the left side is increasing.
fn solve_hyperbolic_kepler(m: f64, e: f64) -> Result<f64> {
    let f = |h: f64| e * h.sinh() - h - m;
    let (mut lo, mut hi) = if m >= 0.0 { (0.0, (m / e).asinh().max(1.0)) } else { ((m / e).asinh().min(-1.0), 0.0) };
    let mut grow = 0;
    while f(hi) < 0.0 || f(lo) > 0.0 {
        lo = 2.0 * lo - 1.0;
        hi = 2.0 * hi + 1.0;
        grow += 1;
        if grow > 100 {
            return Err(Error::Propagation("hyperbolic anomaly bracket failed".into()));
        }
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let r = f(x);
        if r == 0.0 {
            return Ok(x);
        }
        if r > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let mut next = x - r / (e * x.cosh() - 1.0);
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 2.0 * f64::EPSILON * x.abs().max(1e-300) || hi - lo <= 4.0 * f64::EPSILON * x.abs().max(1e-300) {
            return Ok(next);
        }
        x = next;
    }
    Err(Error::Propagation("hyperbolic anomaly did not converge".into()))
}

/// Propagation through the hyperbolic anomaly in the perifocal frame. For
/// fast, nearly radial hyperbolas the universal Kepler equation is a sum of
/// large terms that cancel; the conic elements do not suffer from this.
fn propagate_hyperbolic<T: Real>(r0: [T; 3], v0: [T; 3], dt: f64, mu: f64) -> Result<([T; 3], [T; 3])> {
    let r0n = norm3(&r0);
    let v2 = dot3(&v0, &v0);
    let rv = dot3(&r0, &v0);
    let hv = cross3(&r0, &v0);
    let hn = norm3(&hv);
    if !(hn.re() > 0.0) {
        return Err(Error::Propagation("rectilinear hyperbola".into()));
    }
    let c1 = v2 - T::cst(mu) / r0n;
    let ev = [0, 1, 2].map(|k| (c1 * r0[k] - rv * v0[k]) / mu);
    let e = norm3(&ev);
    if !(e.re() > 1.0) {
        return Err(Error::Propagation("not a hyperbola".into()));
    }
    // na = -a > 0
    let na = T::cst(mu) / (v2 - T::cst(2.0 * mu) / r0n);
    let n = (T::cst(mu) / (na * na * na)).sqrt();
    let sh0 = rv / (e * (na * mu).sqrt());
    let h0r = sh0.re().asinh();
    let h0 = -((T::cst(h0r.sinh()) - sh0) / h0r.cosh()) + h0r;
    let m1 = e * h0.sinh() - h0 + n * dt;
    let h1r = solve_hyperbolic_kepler(m1.re(), e.re())?;
    let hh = T::cst(h1r);
    let h1 = -((e * hh.sinh() - hh - m1) / (e * hh.cosh() - 1.0)) + h1r;
    let (sh, ch) = (h1.sinh(), h1.cosh());
    let p = hn * hn / mu;
    let b = (na * p).sqrt();
    let den = e * ch - 1.0;
    let x = -(na * (ch - e));
    let y = b * sh;
    let vx = -(na * n * sh / den);
    let vy = b * n * ch / den;
    let pu = ev.map(|c| c / e);
    let hu = hv.map(|c| c / hn);
    let qu = cross3(&hu, &pu);
    Ok((
        [0, 1, 2].map(|k| x * pu[k] + y * qu[k]),
        [0, 1, 2].map(|k| vx * pu[k] + vy * qu[k]),
    ))
}

fn propagate_split<T: Real>(r0: [T; 3], v0: [T; 3], dt: f64, mu: f64, depth: u32) -> Result<([T; 3], [T; 3])> {
    let sq = mu.sqrt();
    let r0n = norm3(&r0);
    let sigma0 = dot3(&r0, &v0) / sq;
    let alpha = T::cst(2.0) / r0n - dot3(&v0, &v0) / mu;
    if -alpha.re() * r0n.re() > STRONG_HYPERBOLA {
        return propagate_hyperbolic(r0, v0, dt, mu);
    }
    let rr = [r0[0].re(), r0[1].re(), r0[2].re()];
    let vr = [v0[0].re(), v0[1].re(), v0[2].re()];
    let chi0 = solve_universal(&rr, &vr, dt, mu)?;
    if -alpha.re() * chi0 * chi0 > HYPERBOLIC_SPAN * HYPERBOLIC_SPAN && depth < 40 {
        let (r, v) = propagate_split(r0, v0, 0.5 * dt, mu, depth + 1)?;
        return propagate_split(r, v, 0.5 * dt, mu, depth + 1);
    }
    // One Newton step in tangent arithmetic moves only the tangent part:
    // d(chi) = -F_p / F_chi at the converged real root.
    let (f, rn_c) = universal_eq(T::cst(chi0), r0n, sigma0, alpha);
    let chi = -((f - sq * dt) / rn_c) + chi0;

    let chi2 = chi * chi;
    let z = alpha * chi2;
    let (c, s) = stumpff(z);
    let lf = -(chi2 * c / r0n) + 1.0;
    let lg = -(chi2 * chi * s / sq) + dt;
    let r = [
        lf * r0[0] + lg * v0[0],
        lf * r0[1] + lg * v0[1],
        lf * r0[2] + lg * v0[2],
    ];
    let rn = norm3(&r);
    let lfd = chi * (z * s - 1.0) * sq / (rn * r0n);
    let lgd = -(chi2 * c / rn) + 1.0;
    let v = [
        lfd * r0[0] + lgd * v0[0],
        lfd * r0[1] + lgd * v0[1],
        lfd * r0[2] + lgd * v0[2],
    ];
    Ok((r, v))
}

pub fn propagate(s0: &CartesianState, dt: f64, g: GravModel) -> Result<CartesianState> {
    let (r, v) = propagate_generic(
        [s0.r.x, s0.r.y, s0.r.z],
        [s0.v.x, s0.v.y, s0.v.z],
        dt,
        g.mu,
    )?;
    Ok(CartesianState { r: Vector3::from(r), v: Vector3::from(v) })
}

/// Propagated state and STM, exact to rounding.
pub fn propagate_with_stm(
    s0: &CartesianState,
    dt: f64,
    g: GravModel,
) -> Result<(CartesianState, Stm)> {
    if !(dt >= 0.0) {
        return Err(Error::InvalidTof(dt));
    }
    let r0 = [0, 1, 2].map(|k| Dual::<6>::variable(s0.r[k], k));
    let v0 = [0, 1, 2].map(|k| Dual::<6>::variable(s0.v[k], k + 3));
    let (r, v) = propagate_generic(r0, v0, dt, g.mu)?;
    let mut phi = Matrix6::zeros();
    for i in 0..3 {
        for j in 0..6 {
            phi[(i, j)] = r[i].eps[j];
            phi[(i + 3, j)] = v[i].eps[j];
        }
    }
    let s = CartesianState {
        r: Vector3::new(r[0].re, r[1].re, r[2].re),
        v: Vector3::new(v[0].re, v[1].re, v[2].re),
    };
    Ok((s, Stm { phi }))
}

/// Propagates the state together with one variation `(dr0, dv0)`.
pub fn propagate_variation(
    s0: &CartesianState,
    dr0: &Vector3<f64>,
    dv0: &Vector3<f64>,
    dt: f64,
    g: GravModel,
) -> Result<(CartesianState, Vector3<f64>, Vector3<f64>)> {
    let r0 = [0, 1, 2].map(|k| Dual::<1>::with_tangent(s0.r[k], [dr0[k]]));
    let v0 = [0, 1, 2].map(|k| Dual::<1>::with_tangent(s0.v[k], [dv0[k]]));
    let (r, v) = propagate_generic(r0, v0, dt, g.mu)?;
    Ok((
        CartesianState {
            r: Vector3::new(r[0].re, r[1].re, r[2].re),
            v: Vector3::new(v[0].re, v[1].re, v[2].re),
        },
        Vector3::new(r[0].eps[0], r[1].eps[0], r[2].eps[0]),
        Vector3::new(v[0].eps[0], v[1].eps[0], v[2].eps[0]),
    ))
}

type State42 = SVector<f64, 42>;

struct Variational;

impl System<f64, State42> for Variational {
    fn system(&self, _t: f64, y: &State42, dy: &mut State42) {
        let r = Vector3::new(y[0], y[1], y[2]);
        let rn2 = r.norm_squared();
        let rn = rn2.sqrt();
        let r3 = rn2 * rn;
        let r5 = r3 * rn2;
        for k in 0..3 {
            dy[k] = y[k + 3];
            dy[k + 3] = -r[k] / r3;
        }
        let gm = (3.0 * r * r.transpose() - Matrix3::identity() * rn2) / r5;
        // phi stored row-major in y[6..42]; d(phi)/dt = A phi
        for j in 0..6 {
            for i in 0..3 {
                dy[6 + i * 6 + j] = y[6 + (i + 3) * 6 + j];
                let mut acc = 0.0;
                for k in 0..3 {
                    acc += gm[(i, k)] * y[6 + k * 6 + j];
                }
                dy[6 + (i + 3) * 6 + j] = acc;
            }
        }
    }
}

/// Integrates the 6 + 36 variational equations with an 8(5,3) Dormand-Prince
/// pair at tolerance `tol`, in units where `|r0| = 1` and `mu = 1`.
pub fn integrate_with_stm(
    s0: &CartesianState,
    dt: f64,
    g: GravModel,
    tol: f64,
) -> Result<(CartesianState, Stm)> {
    if !(dt >= 0.0) {
        return Err(Error::InvalidTof(dt));
    }
    if dt == 0.0 {
        return Ok((*s0, Stm::identity()));
    }
    let lu = s0.r.norm();
    let tu = (lu.powi(3) / g.mu).sqrt();
    let vu = lu / tu;
    let mut y = State42::zeros();
    for k in 0..3 {
        y[k] = s0.r[k] / lu;
        y[k + 3] = s0.v[k] / vu;
    }
    for k in 0..6 {
        y[6 + k * 6 + k] = 1.0;
    }
    let tf = dt / tu;
    let mut solver = Dop853::new(Variational, 0.0, tf, tf, y, tol, tol);
    solver.set_output(OutputType::Sparse);
    solver
        .integrate()
        .map_err(|e| Error::Propagation(format!("{e:?}")))?;
    let yf = solver
        .y_out()
        .last()
        .ok_or_else(|| Error::Propagation("no output".into()))?;
    let mut phi = Matrix6::zeros();
    for i in 0..6 {
        for j in 0..6 {
            phi[(i, j)] = yf[6 + i * 6 + j];
        }
    }
    // back to km, km/s
    for i in 0..3 {
        for j in 0..3 {
            phi[(i, j + 3)] *= tu;
            phi[(i + 3, j)] /= tu;
        }
    }
    let s = CartesianState {
        r: Vector3::new(yf[0], yf[1], yf[2]) * lu,
        v: Vector3::new(yf[3], yf[4], yf[5]) * vu,
    };
    Ok((s, Stm { phi }))
}

/// Wraps an angle to `[0, 2pi)`.
pub fn wrap_2pi(x: f64) -> f64 {
    let w = x.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Signed difference `a - b` wrapped to `[-pi, pi)`.
pub fn angle_diff(a: f64, b: f64) -> f64 {
    (a - b + PI).rem_euclid(TAU) - PI
}
