//! Conservation-law machinery: stress tensors for both equilibrium systems,
//! conserved flux densities, multiplier identities, closed-surface flux
//! quadrature, closed-form vortex flux integrands, and the six cylindrical
//! conservation-law residuals for axisymmetric states.

use std::sync::Arc;

use rayon::prelude::*;

use crate::bobnev::BobnevProfiles;
use crate::error::{Error, Result};
use crate::field::{
    curl, div, grad, CglState, FdOrder, FdScheme, Mat3, MhdState, Point3, Vec3, VectorField,
};
use crate::transforms::SurfaceFunction;

/// Euclidean Killing vector `zeta(x) = a + b × x` (translation a, rotation b).
#[derive(Debug, Clone, Copy)]
pub struct KillingVector {
    pub a: Vec3,
    pub b: Vec3,
}

impl KillingVector {
    pub fn new(a: Vec3, b: Vec3) -> Self {
        KillingVector { a, b }
    }

    pub fn translation(a: Vec3) -> Self {
        KillingVector::new(a, Vec3::zeros())
    }

    pub fn rotation(b: Vec3) -> Self {
        KillingVector::new(Vec3::zeros(), b)
    }

    pub fn eval(&self, p: &Point3) -> Vec3 {
        self.a + self.b.cross(&p.coords)
    }

    /// The six-element basis: unit translations then unit rotations.
    pub fn basis() -> [KillingVector; 6] {
        let e = [Vec3::x(), Vec3::y(), Vec3::z()];
        [
            KillingVector::translation(e[0]),
            KillingVector::translation(e[1]),
            KillingVector::translation(e[2]),
            KillingVector::rotation(e[0]),
            KillingVector::rotation(e[1]),
            KillingVector::rotation(e[2]),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StressKind {
    IsotropicT,
    AnisotropicS,
}

/// Pointwise-evaluable symmetric stress tensor.
#[derive(Clone)]
pub struct StressTensorField {
    pub kind: StressKind,
    f: Arc<dyn Fn(&Point3) -> Result<Mat3> + Send + Sync>,
}

impl StressTensorField {
    pub fn eval(&self, p: &Point3) -> Result<Mat3> {
        (self.f)(p)
    }
}

/// Isotropic stress `T = -B (x) B + (P + |B|^2/2) I`.
#[allow(non_snake_case)]
pub fn stress_T(st: &MhdState) -> StressTensorField {
    let b = st.b.clone();
    let pressure = st.pressure.clone();
    StressTensorField {
        kind: StressKind::IsotropicT,
        f: Arc::new(move |p| {
            let bv = b.eval(p)?;
            let pr = pressure.eval(p)?;
            Ok(-bv * bv.transpose() + Mat3::identity() * (pr + 0.5 * bv.norm_squared()))
        }),
    }
}

/// Anisotropic stress `S = -(1-tau) B (x) B + (p + (1-tau)|B|^2/2) I` with
/// the mean pressure `p = p_perp + tau |B|^2/2`.
#[allow(non_snake_case)]
pub fn stress_S(st: &CglState) -> StressTensorField {
    let b = st.b.clone();
    let p_perp = st.p_perp.clone();
    let tau = st.tau.clone();
    StressTensorField {
        kind: StressKind::AnisotropicS,
        f: Arc::new(move |pt| {
            let bv = b.eval(pt)?;
            let t = tau.eval(pt)?;
            let b2 = bv.norm_squared();
            let p_mean = p_perp.eval(pt)? + 0.5 * t * b2;
            Ok(-(1.0 - t) * bv * bv.transpose()
                + Mat3::identity() * (p_mean + 0.5 * (1.0 - t) * b2))
        }),
    }
}

/// Vector field `x -> T(x) * zeta(x)` for a stress tensor.
pub fn stress_flux(tensor: &StressTensorField, zeta: &KillingVector) -> VectorField {
    let tensor = tensor.clone();
    let zeta = *zeta;
    VectorField::new(move |p| {
        let t = tensor.eval(p).unwrap_or_else(|_| Mat3::from_element(f64::NAN));
        t * zeta.eval(p)
    })
}

/// FD divergence of `zeta . T` for an isotropic state; vanishes on
/// equilibria at truncation order.
pub fn stress_divergence_residual(
    st: &MhdState,
    zeta: &KillingVector,
    p: &Point3,
    scheme: FdScheme,
) -> Result<f64> {
    let v = stress_flux(&stress_T(st), zeta).with_domain(st.domain.clone());
    div(&v, p, scheme)
}

/// Anisotropic counterpart of [`stress_divergence_residual`].
pub fn stress_divergence_residual_cgl(
    st: &CglState,
    zeta: &KillingVector,
    p: &Point3,
    scheme: FdScheme,
) -> Result<f64> {
    let v = stress_flux(&stress_S(st), zeta).with_domain(st.domain.clone());
    div(&v, p, scheme)
}

/// Product Gauss-Legendre (in cos theta) x uniform (in phi) rule on a sphere.
#[derive(Debug, Clone, Copy)]
pub struct SphereQuadrature {
    pub center: Point3,
    pub radius: f64,
    pub n_theta: usize,
    pub n_phi: usize,
}

impl SphereQuadrature {
    pub fn new(center: Point3, radius: f64) -> Result<Self> {
        Self::with_rule(center, radius, 64, 128)
    }

    pub fn with_rule(center: Point3, radius: f64, n_theta: usize, n_phi: usize) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "sphere radius must be positive, got {radius}"
            )));
        }
        if n_theta < 2 || n_phi < 4 {
            return Err(Error::InvalidParameter(format!(
                "quadrature rule too small: {n_theta} x {n_phi}"
            )));
        }
        Ok(SphereQuadrature {
            center,
            radius,
            n_theta,
            n_phi,
        })
    }
}

/// Nodes and weights of the n-point Gauss-Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        // Newton iteration from the Chebyshev-like initial guess
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0_f64, x);
            for k in 2..=n {
                let k = k as f64;
                let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

/// Closed-surface flux with a doubled-rule error estimate and the vanishing
/// verdict rule `|value| <= max(1e-8 * scale, 10 * quadrature error)` where
/// `scale` is the integral of |V.n| over the sphere.
#[derive(Debug, Clone, Copy)]
pub struct FluxReport {
    pub value: f64,
    pub quad_error: f64,
    pub scale: f64,
    pub samples: usize,
    pub tolerance: f64,
    pub vanishes: bool,
}

fn sphere_flux_sums(v: &VectorField, q: &SphereQuadrature) -> Result<(f64, f64)> {
    let gl = gauss_legendre(q.n_theta);
    let dphi = 2.0 * std::f64::consts::PI / q.n_phi as f64;
    let rows: Vec<Result<(f64, f64)>> = gl
        .par_iter()
        .map(|&(mu, w)| {
            let sin_t = (1.0 - mu * mu).max(0.0).sqrt();
            let mut flux = 0.0;
            let mut scale = 0.0;
            for k in 0..q.n_phi {
                let phi = dphi * k as f64;
                let n = Vec3::new(sin_t * phi.cos(), sin_t * phi.sin(), mu);
                let p = q.center + q.radius * n;
                let dot = v.eval(&p)?.dot(&n);
                flux += dot;
                scale += dot.abs();
            }
            let factor = w * dphi * q.radius * q.radius;
            Ok((flux * factor, scale * factor))
        })
        .collect();
    // fixed summation order for run-to-run determinism
    let mut flux = 0.0;
    let mut scale = 0.0;
    for r in rows {
        let (f, s) = r?;
        flux += f;
        scale += s;
    }
    Ok((flux, scale))
}

pub fn flux_surface_integral(v: &VectorField, q: &SphereQuadrature) -> Result<FluxReport> {
    let (coarse, _) = sphere_flux_sums(v, q)?;
    let fine_rule = SphereQuadrature {
        n_theta: q.n_theta * 2,
        n_phi: q.n_phi * 2,
        ..*q
    };
    let (value, scale) = sphere_flux_sums(v, &fine_rule)?;
    let quad_error = (value - coarse).abs();
    let tolerance = (1e-8 * scale).max(10.0 * quad_error);
    Ok(FluxReport {
        value,
        quad_error,
        scale,
        samples: q.n_theta * q.n_phi + fine_rule.n_theta * fine_rule.n_phi,
        tolerance,
        vanishes: value.abs() <= tolerance,
    })
}

/// Conserved flux densities of the isotropic system: `zeta . T`, `f(P) B`,
/// and the current-law density `f(P) curl B`.
#[derive(Clone)]
pub enum Table1Row {
    Stress(KillingVector),
    Flux(SurfaceFunction),
    Current(SurfaceFunction),
}

pub fn table1_flux(st: &MhdState, row: &Table1Row, scheme: FdScheme) -> VectorField {
    let field = match row {
        Table1Row::Stress(zeta) => stress_flux(&stress_T(st), zeta),
        Table1Row::Flux(f) => {
            let b = st.b.clone();
            let pressure = st.pressure.clone();
            let f = f.clone();
            VectorField::new(move |p| {
                match (b.eval(p), pressure.eval(p)) {
                    (Ok(bv), Ok(pr)) => f.eval(pr) * bv,
                    _ => Vec3::from_element(f64::NAN),
                }
            })
        }
        Table1Row::Current(f) => {
            let b = st.b.clone();
            let pressure = st.pressure.clone();
            let f = f.clone();
            VectorField::new(move |p| {
                match (curl(&b, p, scheme), pressure.eval(p)) {
                    (Ok(j), Ok(pr)) => f.eval(pr) * j,
                    _ => Vec3::from_element(f64::NAN),
                }
            })
        }
    };
    field.with_domain(st.domain.clone())
}

/// Conserved flux densities of the anisotropic system: `zeta . S`,
/// `f(p) B` with the mean pressure p, and `f(p) A` with the vorticity
/// `A = curl(sqrt(1-tau) B)`.
#[derive(Clone)]
pub enum Table2Row {
    Stress(KillingVector),
    Flux(SurfaceFunction),
    Vorticity(SurfaceFunction),
}

/// The composite field `sqrt(1-tau) B` (NaN in the fire-hose region).
fn scaled_field(st: &CglState) -> VectorField {
    let b = st.b.clone();
    let tau = st.tau.clone();
    VectorField::new(move |p| match (b.eval(p), tau.eval(p)) {
        (Ok(bv), Ok(t)) => (1.0 - t).sqrt() * bv,
        _ => Vec3::from_element(f64::NAN),
    })
    .with_domain(st.domain.clone())
}

pub fn table2_flux(st: &CglState, row: &Table2Row, scheme: FdScheme) -> VectorField {
    let field = match row {
        Table2Row::Stress(zeta) => stress_flux(&stress_S(st), zeta),
        Table2Row::Flux(f) => {
            let b = st.b.clone();
            let p_mean = st.mean_pressure_field();
            let f = f.clone();
            VectorField::new(move |p| match (b.eval(p), p_mean.eval(p)) {
                (Ok(bv), Ok(pm)) => f.eval(pm) * bv,
                _ => Vec3::from_element(f64::NAN),
            })
        }
        Table2Row::Vorticity(f) => {
            let w = scaled_field(st);
            let p_mean = st.mean_pressure_field();
            let f = f.clone();
            VectorField::new(move |p| match (curl(&w, p, scheme), p_mean.eval(p)) {
                (Ok(a), Ok(pm)) => f.eval(pm) * a,
                _ => Vec3::from_element(f64::NAN),
            })
        }
    };
    field.with_domain(st.domain.clone())
}

/// Multiplier identity for the isotropic system, usable on arbitrary smooth
/// fields (not only equilibria for rows 2-3):
/// `Gamma div B + Lambda . (curl B x B - grad P) = div Phi`.
/// Returns (lhs, rhs); both are FD-truncation-limited.
pub fn multiplier_identity_check(
    st: &MhdState,
    row: &Table1Row,
    p: &Point3,
    scheme: FdScheme,
) -> Result<(f64, f64)> {
    let bv = st.b.eval(p)?;
    let div_b = div(&st.b, p, scheme)?;
    let j = curl(&st.b, p, scheme)?;
    let momentum = j.cross(&bv) - grad(&st.pressure, p, scheme)?;
    let pr = st.pressure.eval(p)?;
    let lhs = match row {
        Table1Row::Stress(zeta) => {
            let z = zeta.eval(p);
            bv.dot(&z) * div_b + z.dot(&momentum)
        }
        Table1Row::Flux(f) => f.eval(pr) * div_b - f.eval_derivative(pr) * bv.dot(&momentum),
        Table1Row::Current(f) => f.eval_derivative(pr) * j.dot(&momentum),
    };
    let rhs = div(&table1_flux(st, row, scheme), p, scheme)?;
    Ok((lhs, rhs))
}

/// Multiplier identity for the anisotropic system:
/// `Pi div B + Omega . ((1-tau) curl B x B - grad p_perp - tau/2 grad |B|^2)
///  + Upsilon (B . grad tau) = div Phi`.
pub fn multiplier_identity_check_cgl(
    st: &CglState,
    row: &Table2Row,
    p: &Point3,
    scheme: FdScheme,
) -> Result<(f64, f64)> {
    let bv = st.b.eval(p)?;
    let t = st.tau.eval(p)?;
    let div_b = div(&st.b, p, scheme)?;
    let j = curl(&st.b, p, scheme)?;
    let grad_tau = grad(&st.tau, p, scheme)?;
    let grad_energy = grad(&st.b.energy_density(), p, scheme)?;
    let anisotropic = (1.0 - t) * j.cross(&bv)
        - grad(&st.p_perp, p, scheme)?
        - t * grad_energy;
    let b_grad_tau = bv.dot(&grad_tau);
    let b2 = bv.norm_squared();
    let p_mean = st.mean_pressure(p)?;
    let lhs = match row {
        Table2Row::Stress(zeta) => {
            let z = zeta.eval(p);
            (1.0 - t) * bv.dot(&z) * div_b + z.dot(&anisotropic) - bv.dot(&z) * b_grad_tau
        }
        Table2Row::Flux(f) => {
            let fp = f.eval_derivative(p_mean);
            f.eval(p_mean) * div_b - fp * bv.dot(&anisotropic) + 0.5 * fp * b2 * b_grad_tau
        }
        Table2Row::Vorticity(f) => {
            let a = curl(&scaled_field(st), p, scheme)?;
            let fp = f.eval_derivative(p_mean);
            fp * a.dot(&anisotropic) - 0.5 * fp * a.dot(&bv) * b_grad_tau
        }
    };
    let rhs = div(&table2_flux(st, row, scheme), p, scheme)?;
    Ok((lhs, rhs))
}

/// Closed-form flux integrands of the vortex solution on a sphere of radius
/// rho at angles (theta, phi): (stress `zeta.T.n`, magnetic `f(P) B.n`,
/// current `f(P) (curl B).n`). These agree pointwise with the general FD
/// path of [`table1_flux`].
pub fn bobnev_flux_integrands(
    profiles: &BobnevProfiles,
    zeta: &KillingVector,
    f: &SurfaceFunction,
    rho: f64,
    theta: f64,
    phi: f64,
) -> (f64, f64, f64) {
    let params = profiles.params();
    let v = profiles.v(rho);
    let u = profiles.u(rho);
    let w = profiles.w(rho);
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    let pressure = params.p0 + params.gamma_const * (rho * st) * (rho * st) * v;

    // spherical components of the two constant vectors
    let a = zeta.a;
    let b = zeta.b;
    let a_rho = a.x * st * cp + a.y * st * sp + a.z * ct;
    let a_theta = a.x * ct * cp + a.y * ct * sp - a.z * st;
    let a_phi = -a.x * sp + a.y * cp;
    let b_theta = b.x * ct * cp + b.y * ct * sp - b.z * st;
    let b_phi = -b.x * sp + b.y * cp;

    let b2 = v * v * ct * ct + (u * u + w * w) * st * st;
    let stress = a_rho * (pressure + 0.5 * b2 - v * v * ct * ct)
        - v * st * ct * ((a_theta + rho * b_phi) * w + (a_phi - rho * b_theta) * u);
    let magnetic = f.eval(pressure) * v * ct;
    // (curl B).n = 2 U(rho) cos(theta) / rho; U/rho = lambda V stays finite
    let current = 2.0 * f.eval(pressure) * params.lambda * v * ct;
    (stress, magnetic, current)
}

/// Axisymmetric state in cylindrical components, all functions of (r, z).
#[derive(Clone)]
pub struct AxisymmetricState {
    pub b_r: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>,
    pub b_phi: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>,
    pub b_z: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>,
    pub pressure: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>,
}

impl AxisymmetricState {
    /// From a flux function: `B_r = Psi_z/r`, `B_phi = I(Psi)/r`,
    /// `B_z = -Psi_r/r`, `P = P(Psi)`.
    pub fn from_flux(
        flux: &crate::gs::FluxFunction,
        i_fn: &SurfaceFunction,
        p_fn: &SurfaceFunction,
    ) -> Self {
        let (f1, f2, f3, f4) = (flux.clone(), flux.clone(), flux.clone(), flux.clone());
        let i_fn = i_fn.clone();
        let p_fn = p_fn.clone();
        AxisymmetricState {
            b_r: Arc::new(move |r, z| f1.d_dz(r, z) / r),
            b_phi: Arc::new(move |r, z| i_fn.eval(f2.eval(r, z)) / r),
            b_z: Arc::new(move |r, z| -f3.d_dr(r, z) / r),
            pressure: Arc::new(move |r, z| p_fn.eval(f4.eval(r, z))),
        }
    }

    pub fn uniform(b_z: f64, pressure: f64) -> Self {
        AxisymmetricState {
            b_r: Arc::new(move |_, _| 0.0),
            b_phi: Arc::new(move |_, _| 0.0),
            b_z: Arc::new(move |_, _| b_z),
            pressure: Arc::new(move |_, _| pressure),
        }
    }
}

fn d1(f: impl Fn(f64) -> f64, x: f64, h: f64, order: FdOrder) -> f64 {
    match order {
        FdOrder::Central2 => (f(x + h) - f(x - h)) / (2.0 * h),
        FdOrder::Central4 => {
            (-f(x + 2.0 * h) + 8.0 * f(x + h) - 8.0 * f(x - h) + f(x - 2.0 * h)) / (12.0 * h)
        }
    }
}

/// Residual of one of the six cylindrical conservation laws
/// `(1/r) d_r[F_r] + (1/r) d_phi[F_phi] + d_z[F_z] = 0` at a point, by FD
/// on the bracketed quantities. Laws 3 and 6 are the phi-free pair (their
/// residuals are independent of the azimuth); the others carry explicit
/// sin(phi)/cos(phi) factors.
pub fn cylindrical_cl_residual(
    st: &AxisymmetricState,
    law: usize,
    p: &Point3,
    scheme: FdScheme,
) -> Result<f64> {
    if !(1..=6).contains(&law) {
        return Err(Error::InvalidParameter(format!(
            "cylindrical law index must be 1..=6, got {law}"
        )));
    }
    let r = p.x.hypot(p.y);
    let phi = p.y.atan2(p.x);
    let z = p.z;
    let h = scheme.h;
    if r - 2.0 * h <= 0.0 {
        return Err(Error::SingularAxis(format!(
            "cylindrical law stencil reaches the axis at r = {r}"
        )));
    }

    let st = st.clone();
    let fields = move |r: f64, z: f64| {
        let br = (st.b_r)(r, z);
        let bp = (st.b_phi)(r, z);
        let bz = (st.b_z)(r, z);
        let e = (st.pressure)(r, z) + 0.5 * (br * br + bp * bp + bz * bz);
        (br, bp, bz, e)
    };

    // (F_r, F_phi, F_z) with the law's signs folded into the brackets
    let bracket = move |law: usize, r: f64, phi: f64, z: f64| -> (f64, f64, f64) {
        let (br, bp, bz, e) = fields(r, z);
        let (s, c) = phi.sin_cos();
        match law {
            1 => (
                r * ((e - br * br) * c + br * bp * s),
                -((e - bp * bp) * s + br * bp * c),
                -bz * (br * c - bp * s),
            ),
            2 => (
                r * ((e - br * br) * s - br * bp * c),
                (e - bp * bp) * c - br * bp * s,
                -bz * (br * s + bp * c),
            ),
            3 => (r * br * bz, 0.0, -(e - bz * bz)),
            4 => (
                r * (z * (e - br * br) + r * br * bz) * s - r * z * br * bp * c,
                z * (e - bp * bp) * c + (r * bz - z * br) * bp * s,
                -((r * (e - bz * bz) + z * br * bz) * s + z * bp * bz * c),
            ),
            5 => (
                r * (z * (e - br * br) + r * br * bz) * c + r * z * br * bp * s,
                -(z * (e - bp * bp) * s - (r * bz - z * br) * bp * c),
                -((r * (e - bz * bz) + z * br * bz) * c - z * bp * bz * s),
            ),
            _ => (r * r * br * bp, 0.0, r * bp * bz),
        }
    };

    let dr = d1(|x| bracket(law, x, phi, z).0, r, h, scheme.order);
    let dphi = if law == 3 || law == 6 {
        0.0
    } else {
        d1(|x| bracket(law, r, x, z).1, phi, h, scheme.order)
    };
    let dz = d1(|x| bracket(law, r, phi, x).2, z, h, scheme.order);
    Ok(dr / r + dphi / r + dz)
}
