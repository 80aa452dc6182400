//! Fields over R^3, finite-difference differential operators, and residual
//! evaluators for the isotropic and anisotropic equilibrium systems.
//!
//! Operators are pointwise and mesh-free: each call places a small stencil
//! around the query point, so analytic solutions can be verified without a
//! global grid. Stencil points falling outside a field's domain are an error,
//! never an extrapolation.

use std::sync::Arc;

use crate::error::{Error, Result};

pub type Vec3 = nalgebra::Vector3<f64>;
pub type Mat3 = nalgebra::Matrix3<f64>;
pub type Point3 = nalgebra::Point3<f64>;

/// Membership predicate for the region where a field is evaluable.
#[derive(Clone)]
pub struct Domain(Arc<dyn Fn(&Point3) -> bool + Send + Sync>);

impl Domain {
    pub fn new<F: Fn(&Point3) -> bool + Send + Sync + 'static>(f: F) -> Self {
        Domain(Arc::new(f))
    }

    /// All of R^3.
    pub fn all() -> Self {
        Domain::new(|_| true)
    }

    /// Open ball of radius `r` about the origin.
    pub fn ball(r: f64) -> Self {
        Domain::new(move |p| p.coords.norm() < r)
    }

    pub fn contains(&self, p: &Point3) -> bool {
        (self.0)(p)
    }

    pub fn intersect(&self, other: &Domain) -> Domain {
        let a = self.clone();
        let b = other.clone();
        Domain::new(move |p| a.contains(p) && b.contains(p))
    }

    /// Preimage of this domain under `map` (for coordinate transforms).
    pub fn pullback<F: Fn(&Point3) -> Point3 + Send + Sync + 'static>(&self, map: F) -> Domain {
        let d = self.clone();
        Domain::new(move |p| d.contains(&map(p)))
    }
}

impl Default for Domain {
    fn default() -> Self {
        Domain::all()
    }
}

fn outside(p: &Point3) -> Error {
    Error::OutsideDomain {
        x: p.x,
        y: p.y,
        z: p.z,
    }
}

/// Scalar-valued field with an optional analytic gradient.
#[derive(Clone)]
pub struct ScalarField {
    eval_fn: Arc<dyn Fn(&Point3) -> f64 + Send + Sync>,
    gradient_fn: Option<Arc<dyn Fn(&Point3) -> Vec3 + Send + Sync>>,
    domain: Domain,
}

impl ScalarField {
    pub fn new<F: Fn(&Point3) -> f64 + Send + Sync + 'static>(f: F) -> Self {
        ScalarField {
            eval_fn: Arc::new(f),
            gradient_fn: None,
            domain: Domain::all(),
        }
    }

    pub fn constant(c: f64) -> Self {
        let f = ScalarField::new(move |_| c);
        f.with_gradient(|_| Vec3::zeros())
    }

    pub fn with_domain(mut self, d: Domain) -> Self {
        self.domain = d;
        self
    }

    pub fn with_gradient<F: Fn(&Point3) -> Vec3 + Send + Sync + 'static>(mut self, g: F) -> Self {
        self.gradient_fn = Some(Arc::new(g));
        self
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn has_analytic_gradient(&self) -> bool {
        self.gradient_fn.is_some()
    }

    pub fn eval(&self, p: &Point3) -> Result<f64> {
        if !self.domain.contains(p) {
            return Err(outside(p));
        }
        Ok((self.eval_fn)(p))
    }

    pub fn analytic_gradient(&self, p: &Point3) -> Option<Result<Vec3>> {
        self.gradient_fn.as_ref().map(|g| {
            if self.domain.contains(p) {
                Ok(g(p))
            } else {
                Err(outside(p))
            }
        })
    }

    /// Unchecked raw closure, for composing derived fields whose outer
    /// domain already guards evaluation.
    pub(crate) fn raw(&self) -> Arc<dyn Fn(&Point3) -> f64 + Send + Sync> {
        self.eval_fn.clone()
    }

    /// Pointwise map of this field's values.
    pub fn map<F: Fn(f64) -> f64 + Send + Sync + 'static>(&self, f: F) -> ScalarField {
        let inner = self.eval_fn.clone();
        ScalarField {
            eval_fn: Arc::new(move |p| f(inner(p))),
            gradient_fn: None,
            domain: self.domain.clone(),
        }
    }
}

/// Vector-valued field (Cartesian components) with an optional analytic
/// Jacobian (column j holds the derivative with respect to x_j).
#[derive(Clone)]
pub struct VectorField {
    eval_fn: Arc<dyn Fn(&Point3) -> Vec3 + Send + Sync>,
    jacobian_fn: Option<Arc<dyn Fn(&Point3) -> Mat3 + Send + Sync>>,
    domain: Domain,
}

impl VectorField {
    pub fn new<F: Fn(&Point3) -> Vec3 + Send + Sync + 'static>(f: F) -> Self {
        VectorField {
            eval_fn: Arc::new(f),
            jacobian_fn: None,
            domain: Domain::all(),
        }
    }

    pub fn constant(v: Vec3) -> Self {
        VectorField::new(move |_| v).with_jacobian(|_| Mat3::zeros())
    }

    pub fn with_domain(mut self, d: Domain) -> Self {
        self.domain = d;
        self
    }

    pub fn with_jacobian<F: Fn(&Point3) -> Mat3 + Send + Sync + 'static>(mut self, j: F) -> Self {
        self.jacobian_fn = Some(Arc::new(j));
        self
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn eval(&self, p: &Point3) -> Result<Vec3> {
        if !self.domain.contains(p) {
            return Err(outside(p));
        }
        Ok((self.eval_fn)(p))
    }

    pub fn analytic_jacobian(&self, p: &Point3) -> Option<Result<Mat3>> {
        self.jacobian_fn.as_ref().map(|j| {
            if self.domain.contains(p) {
                Ok(j(p))
            } else {
                Err(outside(p))
            }
        })
    }

    pub(crate) fn raw(&self) -> Arc<dyn Fn(&Point3) -> Vec3 + Send + Sync> {
        self.eval_fn.clone()
    }

    /// Scale the field by a scalar field value at each point.
    pub fn scaled_by(&self, s: ScalarField) -> VectorField {
        let inner = self.eval_fn.clone();
        let sf = s.eval_fn.clone();
        VectorField {
            eval_fn: Arc::new(move |p| inner(p) * sf(p)),
            jacobian_fn: None,
            domain: self.domain.intersect(&s.domain),
        }
    }

    /// |V|^2 / 2 as a scalar field (magnetic energy density for B).
    pub fn energy_density(&self) -> ScalarField {
        let inner = self.eval_fn.clone();
        ScalarField {
            eval_fn: Arc::new(move |p| inner(p).norm_squared() / 2.0),
            gradient_fn: None,
            domain: self.domain.clone(),
        }
    }
}

/// Central finite-difference scheme order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FdOrder {
    /// 3-point central stencil, truncation O(h^2).
    #[default]
    Central2,
    /// 5-point central stencil, truncation O(h^4).
    Central4,
}

/// Mesh-free finite-difference scheme. The effective step at a query point
/// is `h * (1 + |p|)` so that accuracy degrades gracefully far from the
/// origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdScheme {
    pub h: f64,
    pub order: FdOrder,
}

impl Default for FdScheme {
    fn default() -> Self {
        FdScheme {
            h: 1e-4,
            order: FdOrder::Central2,
        }
    }
}

impl FdScheme {
    pub fn new(h: f64, order: FdOrder) -> Result<Self> {
        if !(h > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "finite-difference step must be positive, got {h}"
            )));
        }
        Ok(FdScheme { h, order })
    }

    pub fn central2(h: f64) -> Result<Self> {
        FdScheme::new(h, FdOrder::Central2)
    }

    pub fn central4(h: f64) -> Result<Self> {
        FdScheme::new(h, FdOrder::Central4)
    }

    /// Effective step at `p`.
    pub fn step(&self, p: &Point3) -> f64 {
        self.h * (1.0 + p.coords.norm())
    }

    /// Central difference of a scalar function of one coordinate.
    fn diff1<F: Fn(f64) -> Result<f64>>(&self, f: F, x: f64, h: f64) -> Result<f64> {
        match self.order {
            FdOrder::Central2 => Ok((f(x + h)? - f(x - h)?) / (2.0 * h)),
            FdOrder::Central4 => Ok(
                (-f(x + 2.0 * h)? + 8.0 * f(x + h)? - 8.0 * f(x - h)? + f(x - 2.0 * h)?)
                    / (12.0 * h),
            ),
        }
    }
}

fn shifted(p: &Point3, axis: usize, dx: f64) -> Point3 {
    let mut q = *p;
    q.coords[axis] += dx;
    q
}

/// Gradient of a scalar field. Uses the analytic gradient when the field
/// carries one; otherwise central differences per `scheme`.
pub fn grad(f: &ScalarField, p: &Point3, scheme: FdScheme) -> Result<Vec3> {
    if let Some(g) = f.analytic_gradient(p) {
        return g;
    }
    let h = scheme.step(p);
    let mut out = Vec3::zeros();
    for axis in 0..3 {
        out[axis] = scheme.diff1(|x| f.eval(&shifted(p, axis, x - p.coords[axis])), p.coords[axis], h)?;
    }
    Ok(out)
}

/// Jacobian of a vector field (column j = d/dx_j), analytic when available.
pub fn jacobian(v: &VectorField, p: &Point3, scheme: FdScheme) -> Result<Mat3> {
    if let Some(j) = v.analytic_jacobian(p) {
        return j;
    }
    let h = scheme.step(p);
    let mut out = Mat3::zeros();
    for axis in 0..3 {
        let col = match scheme.order {
            FdOrder::Central2 => {
                (v.eval(&shifted(p, axis, h))? - v.eval(&shifted(p, axis, -h))?) / (2.0 * h)
            }
            FdOrder::Central4 => {
                (-v.eval(&shifted(p, axis, 2.0 * h))? + v.eval(&shifted(p, axis, h))? * 8.0
                    - v.eval(&shifted(p, axis, -h))? * 8.0
                    + v.eval(&shifted(p, axis, -2.0 * h))?)
                    / (12.0 * h)
            }
        };
        out.set_column(axis, &col);
    }
    Ok(out)
}

/// Divergence of a vector field.
pub fn div(v: &VectorField, p: &Point3, scheme: FdScheme) -> Result<f64> {
    Ok(jacobian(v, p, scheme)?.trace())
}

/// Curl of a vector field.
pub fn curl(v: &VectorField, p: &Point3, scheme: FdScheme) -> Result<Vec3> {
    let j = jacobian(v, p, scheme)?;
    Ok(Vec3::new(
        j[(2, 1)] - j[(1, 2)],
        j[(0, 2)] - j[(2, 0)],
        j[(1, 0)] - j[(0, 1)],
    ))
}

/// Bundled static isotropic equilibrium candidate: magnetic field `b`,
/// pressure, and a scalar label constant on magnetic surfaces.
#[derive(Clone)]
pub struct MhdState {
    pub b: VectorField,
    pub pressure: ScalarField,
    pub surface_label: ScalarField,
    pub domain: Domain,
}

impl MhdState {
    pub fn new(b: VectorField, pressure: ScalarField, surface_label: ScalarField) -> Self {
        let domain = b.domain().intersect(pressure.domain());
        MhdState {
            b,
            pressure,
            surface_label,
            domain,
        }
    }
}

/// Bundled static anisotropic (CGL) equilibrium candidate. The parallel
/// pressure is derived: `p_par = p_perp + tau |B|^2`.
#[derive(Clone)]
pub struct CglState {
    pub b: VectorField,
    pub p_perp: ScalarField,
    pub tau: ScalarField,
    pub surface_label: ScalarField,
    pub domain: Domain,
}

impl CglState {
    pub fn new(b: VectorField, p_perp: ScalarField, tau: ScalarField, surface_label: ScalarField) -> Self {
        let domain = b.domain().intersect(p_perp.domain()).intersect(tau.domain());
        CglState {
            b,
            p_perp,
            tau,
            surface_label,
            domain,
        }
    }

    /// Isotropic embedding: (B, P) viewed as (B, p_perp = P, tau = 0).
    pub fn from_mhd(st: &MhdState) -> CglState {
        CglState {
            b: st.b.clone(),
            p_perp: st.pressure.clone(),
            tau: ScalarField::constant(0.0).with_domain(st.domain.clone()),
            surface_label: st.surface_label.clone(),
            domain: st.domain.clone(),
        }
    }

    pub fn p_par(&self, p: &Point3) -> Result<f64> {
        let b2 = self.b.eval(p)?.norm_squared();
        Ok(self.p_perp.eval(p)? + self.tau.eval(p)? * b2)
    }

    /// Mean pressure `p = p_perp + tau |B|^2 / 2 = (p_par + p_perp) / 2`,
    /// constant on magnetic surfaces.
    pub fn mean_pressure(&self, p: &Point3) -> Result<f64> {
        let b2 = self.b.eval(p)?.norm_squared();
        Ok(self.p_perp.eval(p)? + 0.5 * self.tau.eval(p)? * b2)
    }

    pub fn mean_pressure_field(&self) -> ScalarField {
        let st = self.clone();
        ScalarField::new(move |p| {
            let b2 = (st.b.eval_fn)(p).norm_squared();
            (st.p_perp.eval_fn)(p) + 0.5 * (st.tau.eval_fn)(p) * b2
        })
        .with_domain(self.domain.clone())
    }
}

/// Residual of the isotropic force-balance system at a point.
#[derive(Debug, Clone, Copy)]
pub struct MhdResidual {
    /// curl B x B - grad P
    pub momentum: Vec3,
    /// div B
    pub solenoidal: f64,
}

impl MhdResidual {
    pub fn norm(&self) -> f64 {
        self.momentum.norm().max(self.solenoidal.abs())
    }
}

pub fn mhd_residual(st: &MhdState, p: &Point3, scheme: FdScheme) -> Result<MhdResidual> {
    let b = st.b.eval(p)?;
    let j = curl(&st.b, p, scheme)?;
    let gp = grad(&st.pressure, p, scheme)?;
    Ok(MhdResidual {
        momentum: j.cross(&b) - gp,
        solenoidal: div(&st.b, p, scheme)?,
    })
}

/// Residual of the anisotropic system with the `B . grad tau = 0` state
/// equation.
#[derive(Debug, Clone, Copy)]
pub struct CglResidual {
    /// (1-tau) curl B x B - grad p_perp - tau grad(|B|^2/2) - B (B . grad tau)
    pub momentum: Vec3,
    /// div B
    pub solenoidal: f64,
    /// B . grad tau
    pub state_eq: f64,
}

impl CglResidual {
    pub fn norm(&self) -> f64 {
        self.momentum
            .norm()
            .max(self.solenoidal.abs())
            .max(self.state_eq.abs())
    }
}

pub fn cgl_residual(st: &CglState, p: &Point3, scheme: FdScheme) -> Result<CglResidual> {
    let b = st.b.eval(p)?;
    let tau = st.tau.eval(p)?;
    let j = curl(&st.b, p, scheme)?;
    let gp_perp = grad(&st.p_perp, p, scheme)?;
    let g_energy = grad(&st.b.energy_density(), p, scheme)?;
    let g_tau = grad(&st.tau, p, scheme)?;
    let state_eq = b.dot(&g_tau);
    Ok(CglResidual {
        momentum: j.cross(&b) * (1.0 - tau) - gp_perp - g_energy * tau - b * state_eq,
        solenoidal: div(&st.b, p, scheme)?,
        state_eq,
    })
}

/// Residual of the rewritten anisotropic system: force balance and the
/// solenoidal condition for the composite field `sqrt(1-tau) B` with mean
/// pressure `p = p_perp + tau |B|^2 / 2`.
///
/// Errors with [`Error::FireHoseRegime`] if `tau >= 1` anywhere the stencil
/// reaches.
pub fn theorem1_residual(st: &CglState, p: &Point3, scheme: FdScheme) -> Result<MhdResidual> {
    // Probe tau on the stencil ball first so the failure is a fire-hose
    // diagnostic rather than a NaN from sqrt.
    let reach = 2.0 * scheme.step(p) * 2.0;
    for &dx in &[-reach, 0.0, reach] {
        for axis in 0..3 {
            let q = shifted(p, axis, dx);
            if st.domain.contains(&q) {
                let tau = st.tau.eval(&q)?;
                if tau >= 1.0 {
                    return Err(Error::FireHoseRegime {
                        tau,
                        x: q.x,
                        y: q.y,
                        z: q.z,
                    });
                }
            }
        }
    }
    let iso = crate::transforms::cgl_to_mhd_unchecked(st);
    mhd_residual(&iso, p, scheme)
}

/// Map an isotropic equilibrium to steady incompressible Euler flow:
/// `v = B`, `pi = P0 - P - |B|^2/2`.
pub fn euler_map(st: &MhdState, p0: f64) -> (VectorField, ScalarField) {
    let v = st.b.clone();
    let pr = st.pressure.clone();
    let b = st.b.clone();
    let pi = ScalarField::new(move |p| p0 - (pr.eval_fn)(p) - (b.eval_fn)(p).norm_squared() / 2.0)
        .with_domain(st.domain.clone());
    (v, pi)
}

/// Residual of the steady Euler system `(v.grad)v + grad pi = 0, div v = 0`.
pub fn euler_residual(
    v: &VectorField,
    pi: &ScalarField,
    p: &Point3,
    scheme: FdScheme,
) -> Result<MhdResidual> {
    let vv = v.eval(p)?;
    let jv = jacobian(v, p, scheme)?;
    let gpi = grad(pi, p, scheme)?;
    Ok(MhdResidual {
        momentum: jv * vv + gpi,
        solenoidal: div(v, p, scheme)?,
    })
}
