//! Symmetry transforms of the equilibrium systems: Euclidean motions,
//! scalings, dilations, pressure shifts, and the infinite-dimensional family
//! that rescales an anisotropic equilibrium by an arbitrary function of the
//! magnetic-surface label. Also the equivalence maps between the isotropic
//! and anisotropic systems, the group algebra of the label-function group,
//! and the fire-hose / mirror instability criteria.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::field::{
    grad, CglState, FdScheme, Mat3, MhdState, Point3, ScalarField, Vec3, VectorField,
};

/// A scalar function of the magnetic-surface label.
#[derive(Clone)]
pub struct SurfaceFunction {
    apply: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    derivative: Option<Arc<dyn Fn(f64) -> f64 + Send + Sync>>,
    description: String,
}

impl std::fmt::Debug for SurfaceFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "SurfaceFunction({})", self.description)
    }
}

impl SurfaceFunction {
    pub fn new<F: Fn(f64) -> f64 + Send + Sync + 'static>(
        description: impl Into<String>,
        f: F,
    ) -> Self {
        SurfaceFunction {
            apply: Arc::new(f),
            derivative: None,
            description: description.into(),
        }
    }

    pub fn with_derivative<F: Fn(f64) -> f64 + Send + Sync + 'static>(mut self, d: F) -> Self {
        self.derivative = Some(Arc::new(d));
        self
    }

    pub fn constant(c: f64) -> Self {
        SurfaceFunction::new(format!("const {c}"), move |_| c).with_derivative(|_| 0.0)
    }

    /// `a + b * psi`.
    pub fn affine(a: f64, b: f64) -> Self {
        SurfaceFunction::new(format!("{a} + {b} psi"), move |psi| a + b * psi)
            .with_derivative(move |_| b)
    }

    /// `1 + (psi/psi1) sin(psi/psi2)`, the sine-modulated profile used for
    /// transforming the vortex solution.
    pub fn sine_modulated(psi1: f64, psi2: f64) -> Result<Self> {
        if psi1 == 0.0 || psi2 == 0.0 {
            return Err(Error::InvalidParameter(
                "sine_modulated requires psi1 != 0 and psi2 != 0".into(),
            ));
        }
        Ok(SurfaceFunction::new(
            format!("1 + (psi/{psi1}) sin(psi/{psi2})"),
            move |psi| 1.0 + (psi / psi1) * (psi / psi2).sin(),
        )
        .with_derivative(move |psi| {
            (psi / psi2).sin() / psi1 + (psi / psi1) * (psi / psi2).cos() / psi2
        }))
    }

    /// Monotone piecewise-cubic interpolant (Fritsch-Carlson) through the
    /// given `(label, value)` pairs; constant beyond the end knots.
    pub fn tabulated(points: &[(f64, f64)]) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidParameter(
                "tabulated surface function needs at least two points".into(),
            ));
        }
        let mut pts = points.to_vec();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in pts.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::InvalidParameter(format!(
                    "duplicate label {} in tabulated surface function",
                    w[0].0
                )));
            }
        }
        let x: Vec<f64> = pts.iter().map(|p| p.0).collect();
        let y: Vec<f64> = pts.iter().map(|p| p.1).collect();
        let d = pchip_slopes(&x, &y);
        let (x2, y2, d2) = (x.clone(), y.clone(), d.clone());
        Ok(SurfaceFunction::new(
            format!("tabulated ({} knots)", x.len()),
            move |psi| pchip_eval(&x, &y, &d, psi).0,
        )
        .with_derivative(move |psi| pchip_eval(&x2, &y2, &d2, psi).1))
    }

    pub fn eval(&self, psi: f64) -> f64 {
        (self.apply)(psi)
    }

    /// Derivative: analytic when attached, else a central difference with
    /// relative step.
    pub fn eval_derivative(&self, psi: f64) -> f64 {
        match &self.derivative {
            Some(d) => d(psi),
            None => {
                let h = 1e-6 * (1.0 + psi.abs());
                ((self.apply)(psi + h) - (self.apply)(psi - h)) / (2.0 * h)
            }
        }
    }

    pub fn description(&self) -> &str {
        &self.description
    }

    fn raw(&self) -> Arc<dyn Fn(f64) -> f64 + Send + Sync> {
        self.apply.clone()
    }
}

/// Fritsch-Carlson monotone-preserving knot slopes.
fn pchip_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let h: Vec<f64> = (0..n - 1).map(|i| x[i + 1] - x[i]).collect();
    let delta: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
    let mut d = vec![0.0; n];
    d[0] = delta[0];
    d[n - 1] = delta[n - 2];
    for i in 1..n - 1 {
        if delta[i - 1] * delta[i] <= 0.0 {
            d[i] = 0.0;
        } else {
            // weighted harmonic mean keeps the interpolant monotone
            let w1 = 2.0 * h[i] + h[i - 1];
            let w2 = h[i] + 2.0 * h[i - 1];
            d[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
        }
    }
    // clip end slopes (standard PCHIP end treatment)
    for (i, di) in [(0usize, 0usize), (n - 1, n - 2)] {
        if d[i] * delta[di] <= 0.0 {
            d[i] = 0.0;
        } else if d[i].abs() > 3.0 * delta[di].abs() {
            d[i] = 3.0 * delta[di];
        }
    }
    d
}

/// Evaluate a Hermite segment; returns (value, derivative). Constant beyond
/// the end knots.
fn pchip_eval(x: &[f64], y: &[f64], d: &[f64], psi: f64) -> (f64, f64) {
    let n = x.len();
    if psi <= x[0] {
        return (y[0], 0.0);
    }
    if psi >= x[n - 1] {
        return (y[n - 1], 0.0);
    }
    let i = match x.binary_search_by(|v| v.total_cmp(&psi)) {
        Ok(i) => return (y[i], d[i]),
        Err(i) => i - 1,
    };
    let h = x[i + 1] - x[i];
    let t = (psi - x[i]) / h;
    let (t2, t3) = (t * t, t * t * t);
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + t;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    let val = h00 * y[i] + h10 * h * d[i] + h01 * y[i + 1] + h11 * h * d[i + 1];
    let dh00 = (6.0 * t2 - 6.0 * t) / h;
    let dh10 = 3.0 * t2 - 4.0 * t + 1.0;
    let dh01 = (-6.0 * t2 + 6.0 * t) / h;
    let dh11 = 3.0 * t2 - 2.0 * t;
    let der = dh00 * y[i] + dh10 * d[i] + dh01 * y[i + 1] + dh11 * d[i + 1];
    (val, der)
}

/// Element of the abelian group acting on anisotropic equilibria:
/// `M(psi) = alpha * exp(H(psi))` with `alpha = ±1`.
///
/// `H` is kept as the list of summands it was built from, so composition is
/// list concatenation and the group axioms hold exactly in floating point
/// (term-by-term cancellation for inverses, commutativity of `+` for the
/// product).
#[derive(Clone)]
pub struct GroupElement {
    alpha: i8,
    terms: Vec<SurfaceFunction>,
}

impl std::fmt::Debug for GroupElement {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "GroupElement(alpha={}, {} terms)", self.alpha, self.terms.len())
    }
}

impl GroupElement {
    pub fn new(alpha: i8, h: SurfaceFunction) -> Result<Self> {
        if alpha != 1 && alpha != -1 {
            return Err(Error::InvalidParameter(format!(
                "group element sign must be +1 or -1, got {alpha}"
            )));
        }
        Ok(GroupElement {
            alpha,
            terms: vec![h],
        })
    }

    pub fn identity() -> Self {
        GroupElement {
            alpha: 1,
            terms: Vec::new(),
        }
    }

    pub fn alpha(&self) -> i8 {
        self.alpha
    }

    /// `H(psi)`, summed in construction order.
    pub fn h_value(&self, psi: f64) -> f64 {
        self.terms.iter().map(|t| t.eval(psi)).sum()
    }

    /// `M(psi) = alpha * exp(H(psi))`.
    pub fn m_value(&self, psi: f64) -> f64 {
        f64::from(self.alpha) * self.h_value(psi).exp()
    }

    /// `(alpha, H) . (beta, K) = (alpha*beta, H + K)`.
    pub fn compose(&self, other: &GroupElement) -> GroupElement {
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        GroupElement {
            alpha: self.alpha * other.alpha,
            terms,
        }
    }

    /// `(alpha, H)^-1 = (alpha, -H)`, negated term by term.
    pub fn inverse(&self) -> GroupElement {
        GroupElement {
            alpha: self.alpha,
            terms: self
                .terms
                .iter()
                .map(|t| {
                    let raw = t.raw();
                    SurfaceFunction::new(format!("-({})", t.description()), move |psi| -raw(psi))
                })
                .collect(),
        }
    }

    /// The multiplier `M` as a surface function (never zero).
    pub fn to_surface_function(&self) -> SurfaceFunction {
        let g = self.clone();
        SurfaceFunction::new(
            format!("alpha={} exp(H)", self.alpha),
            move |psi| g.m_value(psi),
        )
    }
}

/// Rigid motion: rotation by Euler angles (phi about z, then theta about x,
/// then psi about z again), followed by a translation.
#[derive(Debug, Clone, Copy)]
pub struct EuclideanMotion {
    pub translation: Vec3,
    pub phi: f64,
    pub theta: f64,
    pub psi: f64,
}

impl EuclideanMotion {
    pub fn identity() -> Self {
        EuclideanMotion {
            translation: Vec3::zeros(),
            phi: 0.0,
            theta: 0.0,
            psi: 0.0,
        }
    }

    pub fn translation(a: Vec3) -> Self {
        EuclideanMotion {
            translation: a,
            ..EuclideanMotion::identity()
        }
    }

    pub fn rotation(phi: f64, theta: f64, psi: f64) -> Self {
        EuclideanMotion {
            translation: Vec3::zeros(),
            phi,
            theta,
            psi,
        }
    }

    /// Composed rotation A3 A2 A1. Each factor rotates the frame, e.g.
    /// A1 = [[cos phi, sin phi, 0], [-sin phi, cos phi, 0], [0, 0, 1]].
    pub fn rotation_matrix(&self) -> Mat3 {
        fn about_z(a: f64) -> Mat3 {
            let (s, c) = a.sin_cos();
            Mat3::new(c, s, 0.0, -s, c, 0.0, 0.0, 0.0, 1.0)
        }
        fn about_x(a: f64) -> Mat3 {
            let (s, c) = a.sin_cos();
            Mat3::new(1.0, 0.0, 0.0, 0.0, c, s, 0.0, -s, c)
        }
        about_z(self.psi) * about_x(self.theta) * about_z(self.phi)
    }
}

/// Transport a state by a rigid motion: `x' = R x + a`, `B'(x') = R B(x)`,
/// scalars carried along unchanged.
pub fn apply_isometry(st: &MhdState, m: &EuclideanMotion) -> MhdState {
    let (b, map) = transported_vector(&st.b, m);
    MhdState {
        b,
        pressure: transported_scalar(&st.pressure, m),
        surface_label: transported_scalar(&st.surface_label, m),
        domain: st.domain.pullback(map),
    }
}

/// Rigid-motion transport of an anisotropic state.
pub fn apply_isometry_cgl(st: &CglState, m: &EuclideanMotion) -> CglState {
    let (b, map) = transported_vector(&st.b, m);
    CglState {
        b,
        p_perp: transported_scalar(&st.p_perp, m),
        tau: transported_scalar(&st.tau, m),
        surface_label: transported_scalar(&st.surface_label, m),
        domain: st.domain.pullback(map),
    }
}

fn inverse_map(m: &EuclideanMotion) -> impl Fn(&Point3) -> Point3 + Send + Sync + Clone {
    let r_inv = m.rotation_matrix().transpose();
    let a = m.translation;
    move |p: &Point3| Point3::from(r_inv * (p.coords - a))
}

fn transported_scalar(f: &ScalarField, m: &EuclideanMotion) -> ScalarField {
    let raw = f.raw();
    let back = inverse_map(m);
    let back2 = back.clone();
    ScalarField::new(move |p| raw(&back(p))).with_domain(f.domain().pullback(back2))
}

fn transported_vector(
    v: &VectorField,
    m: &EuclideanMotion,
) -> (VectorField, impl Fn(&Point3) -> Point3 + Send + Sync + Clone) {
    let raw = v.raw();
    let r = m.rotation_matrix();
    let back = inverse_map(m);
    let back2 = back.clone();
    let back3 = back.clone();
    let out = VectorField::new(move |p| r * raw(&back(p))).with_domain(v.domain().pullback(back2));
    (out, back3)
}

/// Field scaling `B' = a4 B` with `P' = a4^2 P` (quadratic in B, so the
/// force balance scales homogeneously).
pub fn apply_scaling(st: &MhdState, a4: f64) -> MhdState {
    let b = st.b.raw();
    let p = st.pressure.raw();
    MhdState {
        b: VectorField::new(move |q| b(q) * a4).with_domain(st.b.domain().clone()),
        pressure: ScalarField::new(move |q| p(q) * a4 * a4)
            .with_domain(st.pressure.domain().clone()),
        surface_label: st.surface_label.clone(),
        domain: st.domain.clone(),
    }
}

/// Scaling of an anisotropic state: `B' = a4 B`, `p_perp' = a4^2 p_perp`,
/// tau unchanged.
pub fn apply_scaling_cgl(st: &CglState, a4: f64) -> CglState {
    let b = st.b.raw();
    let p = st.p_perp.raw();
    CglState {
        b: VectorField::new(move |q| b(q) * a4).with_domain(st.b.domain().clone()),
        p_perp: ScalarField::new(move |q| p(q) * a4 * a4)
            .with_domain(st.p_perp.domain().clone()),
        tau: st.tau.clone(),
        surface_label: st.surface_label.clone(),
        domain: st.domain.clone(),
    }
}

/// Spatial dilation `x' = a5 x`; fields are transported, not rescaled.
pub fn apply_dilation(st: &MhdState, a5: f64) -> Result<MhdState> {
    if a5 == 0.0 {
        return Err(Error::InvalidParameter("dilation factor must be nonzero".into()));
    }
    let back = move |p: &Point3| Point3::from(p.coords / a5);
    let b = st.b.raw();
    let pr = st.pressure.raw();
    let lb = st.surface_label.raw();
    Ok(MhdState {
        b: VectorField::new(move |q| b(&back(q))).with_domain(st.b.domain().pullback(back)),
        pressure: ScalarField::new(move |q| pr(&back(q)))
            .with_domain(st.pressure.domain().pullback(back)),
        surface_label: ScalarField::new(move |q| lb(&back(q)))
            .with_domain(st.surface_label.domain().pullback(back)),
        domain: st.domain.pullback(back),
    })
}

/// Pressure shift `P' = P + a6` (gradient unchanged).
pub fn apply_pressure_shift(st: &MhdState, a6: f64) -> MhdState {
    let p = st.pressure.raw();
    MhdState {
        b: st.b.clone(),
        pressure: ScalarField::new(move |q| p(q) + a6)
            .with_domain(st.pressure.domain().clone()),
        surface_label: st.surface_label.clone(),
        domain: st.domain.clone(),
    }
}

/// Pressure shift on an anisotropic state: both `p_perp` and (implicitly)
/// `p_par` move by `a6`; tau is unchanged.
pub fn apply_pressure_shift_cgl(st: &CglState, a6: f64) -> CglState {
    let p = st.p_perp.raw();
    CglState {
        b: st.b.clone(),
        p_perp: ScalarField::new(move |q| p(q) + a6)
            .with_domain(st.p_perp.domain().clone()),
        tau: st.tau.clone(),
        surface_label: st.surface_label.clone(),
        domain: st.domain.clone(),
    }
}

/// Five-point stencil for the label check: the alignment ratio divides by
/// |grad label|, so truncation error in the numerator must stay well under
/// the 1e-6 gate even where the gradient is weak.
fn label_check_scheme() -> FdScheme {
    FdScheme {
        h: 1e-4,
        order: crate::field::FdOrder::Central4,
    }
}

/// Assert that `label` is constant along `b` at the sample points:
/// `max |B . grad label| / (|B| |grad label| + 1e-12) < tol`.
pub fn validate_surface_label(
    b: &VectorField,
    label: &ScalarField,
    samples: &[Point3],
    scheme: FdScheme,
    tol: f64,
) -> Result<()> {
    let mut worst = 0.0_f64;
    for p in samples {
        let bv = b.eval(p)?;
        let g = grad(label, p, scheme)?;
        let ratio = bv.dot(&g).abs() / (bv.norm() * g.norm() + 1e-12);
        worst = worst.max(ratio);
    }
    if worst < tol {
        Ok(())
    } else {
        Err(Error::InvalidLabel(format!(
            "label varies along field lines: max |B.grad(label)|/(|B||grad(label)|) = {worst:e} >= {tol:e}"
        )))
    }
}

fn check_m_nonvanishing(
    m: &SurfaceFunction,
    label: &ScalarField,
    samples: &[Point3],
) -> Result<()> {
    let mut max_abs = 0.0_f64;
    let mut min_abs = f64::INFINITY;
    for p in samples {
        let v = m.eval(label.eval(p)?);
        max_abs = max_abs.max(v.abs());
        min_abs = min_abs.min(v.abs());
    }
    if !(min_abs.is_finite() && max_abs.is_finite()) || min_abs <= 1e-8 * max_abs.max(1.0) {
        return Err(Error::DegenerateTransform(format!(
            "multiplier M not separated from zero on the label range (min |M| = {min_abs:e})"
        )));
    }
    Ok(())
}

/// The infinite-dimensional symmetry of the anisotropic system:
/// `B' = M(psi) B`, `tau' = 1 - (1-tau) M^-2`,
/// `p_perp' = p_perp + (|B|^2 - |B'|^2)/2`.
///
/// The surface label is validated against `B` on `samples` (it must be
/// constant on field lines) and `M` must be separated from zero there.
pub fn infinite_transform(
    st: &CglState,
    m: &SurfaceFunction,
    samples: &[Point3],
) -> Result<CglState> {
    validate_surface_label(&st.b, &st.surface_label, samples, label_check_scheme(), 1e-6)?;
    check_m_nonvanishing(m, &st.surface_label, samples)?;

    let (b, tau, label) = (st.b.raw(), st.tau.raw(), st.surface_label.raw());
    let p_perp = st.p_perp.raw();
    let mf = m.raw();

    let (b2, label2, mf2) = (b.clone(), label.clone(), mf.clone());
    let b_out = VectorField::new(move |q| b2(q) * mf2(label2(q))).with_domain(st.b.domain().clone());

    let (label3, mf3) = (label.clone(), mf.clone());
    let tau_out = ScalarField::new(move |q| {
        let mm = mf3(label3(q));
        1.0 - (1.0 - tau(q)) / (mm * mm)
    })
    .with_domain(st.tau.domain().clone());

    let p_out = ScalarField::new(move |q| {
        let mm = mf(label(q));
        let b2n = b(q).norm_squared();
        p_perp(q) + (b2n - mm * mm * b2n) / 2.0
    })
    .with_domain(st.p_perp.domain().clone());

    Ok(CglState {
        b: b_out,
        p_perp: p_out,
        tau: tau_out,
        surface_label: st.surface_label.clone(),
        domain: st.domain.clone(),
    })
}

/// Build an anisotropic equilibrium from an isotropic one:
/// `B' = M(psi) B`, `tau' = 1 - M^-2`,
/// `p_perp' = P1 + P + |B|^2 (1 - M^2)/2`,
/// `p_par'  = P1 + P - |B|^2 (1 - M^2)/2` (equivalently from tau').
pub fn mhd_to_cgl(
    st: &MhdState,
    m: &SurfaceFunction,
    p1: f64,
    samples: &[Point3],
) -> Result<CglState> {
    validate_surface_label(&st.b, &st.surface_label, samples, label_check_scheme(), 1e-6)?;
    check_m_nonvanishing(m, &st.surface_label, samples)?;

    let (b, label, pr) = (st.b.raw(), st.surface_label.raw(), st.pressure.raw());
    let mf = m.raw();

    let (b2, label2, mf2) = (b.clone(), label.clone(), mf.clone());
    let b_out = VectorField::new(move |q| b2(q) * mf2(label2(q))).with_domain(st.b.domain().clone());

    let (label3, mf3) = (label.clone(), mf.clone());
    let tau_out = ScalarField::new(move |q| {
        let mm = mf3(label3(q));
        1.0 - 1.0 / (mm * mm)
    })
    .with_domain(st.domain.clone());

    let p_out = ScalarField::new(move |q| {
        let mm = mf(label(q));
        pr(q) + p1 + 0.5 * b(q).norm_squared() * (1.0 - mm * mm)
    })
    .with_domain(st.pressure.domain().clone());

    Ok(CglState {
        b: b_out,
        p_perp: p_out,
        tau: tau_out,
        surface_label: st.surface_label.clone(),
        domain: st.domain.clone(),
    })
}

/// Collapse an anisotropic equilibrium to the equivalent isotropic one:
/// `B_iso = sqrt(1-tau) B`, `P_iso = p_perp + tau |B|^2 / 2`.
///
/// `tau < 1` is checked on the sample set; the fire-hose regime has no real
/// isotropic image.
pub fn cgl_to_mhd(st: &CglState, samples: &[Point3]) -> Result<MhdState> {
    for p in samples {
        let tau = st.tau.eval(p)?;
        if tau >= 1.0 {
            return Err(Error::FireHoseRegime {
                tau,
                x: p.x,
                y: p.y,
                z: p.z,
            });
        }
    }
    Ok(cgl_to_mhd_unchecked(st))
}

/// As [`cgl_to_mhd`] but without the tau probe; callers must guarantee
/// `tau < 1` wherever the result is evaluated.
pub fn cgl_to_mhd_unchecked(st: &CglState) -> MhdState {
    let (b, tau) = (st.b.raw(), st.tau.raw());
    let b_iso = VectorField::new(move |q| b(q) * (1.0 - tau(q)).sqrt())
        .with_domain(st.b.domain().intersect(st.tau.domain()));
    MhdState {
        b: b_iso,
        pressure: st.mean_pressure_field(),
        surface_label: st.surface_label.clone(),
        domain: st.domain.clone(),
    }
}

/// Fire-hose instability criterion: `p_par - p_perp > |B|^2` (tau > 1).
pub fn firehose_unstable(st: &CglState, p: &Point3) -> Result<bool> {
    let b2 = st.b.eval(p)?.norm_squared();
    Ok(st.p_par(p)? - st.p_perp.eval(p)? > b2)
}

/// Mirror instability criterion: `p_perp (p_perp / (6 p_par) - 1) > |B|^2/2`.
pub fn mirror_unstable(st: &CglState, p: &Point3) -> Result<bool> {
    let p_par = st.p_par(p)?;
    if p_par == 0.0 {
        return Err(Error::UndefinedCriterion {
            x: p.x,
            y: p.y,
            z: p.z,
        });
    }
    let p_perp = st.p_perp.eval(p)?;
    let b2 = st.b.eval(p)?.norm_squared();
    Ok(p_perp * (p_perp / (6.0 * p_par) - 1.0) > b2 / 2.0)
}

/// Infinitesimal symmetry generators of the anisotropic system.
#[derive(Clone, Debug)]
pub enum Generator {
    /// `B d/dB + 2 p_perp d/dp_perp`.
    Scaling,
    /// `d/dp_perp`.
    PressureShift,
    /// The infinite family with multiplier `exp(eps f)`, linearized:
    /// `dB = f B`, `dtau = 2 f (1-tau)`, `dp_perp = -f |B|^2`.
    Infinite(SurfaceFunction),
}

/// Perturb `st` to first order in `eps` along `generator` and return the
/// max anisotropic-residual norm over `samples`. For an exact equilibrium
/// the result is `O(eps^2)` (plus the finite-difference floor).
pub fn infinitesimal_generator_check(
    st: &CglState,
    generator: &Generator,
    eps: f64,
    samples: &[Point3],
    scheme: FdScheme,
) -> Result<f64> {
    let perturbed = match generator {
        Generator::Scaling => {
            let (b, p) = (st.b.raw(), st.p_perp.raw());
            CglState {
                b: VectorField::new(move |q| b(q) * (1.0 + eps))
                    .with_domain(st.b.domain().clone()),
                p_perp: ScalarField::new(move |q| p(q) * (1.0 + 2.0 * eps))
                    .with_domain(st.p_perp.domain().clone()),
                tau: st.tau.clone(),
                surface_label: st.surface_label.clone(),
                domain: st.domain.clone(),
            }
        }
        Generator::PressureShift => apply_pressure_shift_cgl(st, eps),
        Generator::Infinite(f) => {
            let (b, tau, p, label) = (
                st.b.raw(),
                st.tau.raw(),
                st.p_perp.raw(),
                st.surface_label.raw(),
            );
            let ff = f.raw();
            let (b2, label2, ff2) = (b.clone(), label.clone(), ff.clone());
            let (label3, ff3) = (label.clone(), ff.clone());
            CglState {
                b: VectorField::new(move |q| b2(q) * (1.0 + eps * ff2(label2(q))))
                    .with_domain(st.b.domain().clone()),
                p_perp: ScalarField::new(move |q| {
                    p(q) - eps * ff(label(q)) * b(q).norm_squared()
                })
                .with_domain(st.p_perp.domain().clone()),
                tau: ScalarField::new(move |q| {
                    let t = tau(q);
                    t + 2.0 * eps * ff3(label3(q)) * (1.0 - t)
                })
                .with_domain(st.tau.domain().clone()),
                surface_label: st.surface_label.clone(),
                domain: st.domain.clone(),
            }
        }
    };
    crate::sample::max_over(samples, |p| {
        Ok(crate::field::cgl_residual(&perturbed, p, scheme)?.norm())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bobnev::bobnev_state;
    use crate::field::{cgl_residual, mhd_residual, FdScheme};
    use crate::sample::{sample_ball, SampleStrategy};
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn vortex() -> (MhdState, Vec<Point3>) {
        let (st, _, _) = bobnev_state(1.0, 3, 100.0, 4500.0).unwrap();
        let pts = sample_ball(1.0, 100, 0.08, SampleStrategy::Lattice);
        (st, pts)
    }

    #[test]
    fn pchip_interpolates_knots_and_stays_monotone() {
        let pts = [(0.0, 1.0), (1.0, 2.0), (2.0, 2.5), (4.0, 7.0)];
        let f = SurfaceFunction::tabulated(&pts).unwrap();
        for &(x, y) in &pts {
            assert_relative_eq!(f.eval(x), y, epsilon = 1e-14);
        }
        let mut prev = f.eval(0.0);
        for i in 1..=400 {
            let v = f.eval(4.0 * i as f64 / 400.0);
            assert!(v >= prev - 1e-12, "not monotone at i={i}");
            prev = v;
        }
        // constant extrapolation
        assert_eq!(f.eval(-3.0), 1.0);
        assert_eq!(f.eval(9.0), 7.0);
    }

    #[test]
    fn surface_function_derivative_fallback() {
        let f = SurfaceFunction::new("psi^2", |psi| psi * psi);
        assert_abs_diff_eq!(f.eval_derivative(1.5), 3.0, epsilon = 1e-8);
        let g = SurfaceFunction::affine(2.0, -0.5);
        assert_eq!(g.eval_derivative(7.0), -0.5);
    }

    #[test]
    fn group_axioms_hold_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..200 {
            let (a, b, c): (f64, f64, f64) = (rng.gen(), rng.gen(), rng.gen());
            let g1 = GroupElement::new(if rng.gen::<bool>() { 1 } else { -1 },
                SurfaceFunction::affine(a, b)).unwrap();
            let g2 = GroupElement::new(if rng.gen::<bool>() { 1 } else { -1 },
                SurfaceFunction::new("sin", move |p| (c * p).sin())).unwrap();
            let g3 = GroupElement::new(1, SurfaceFunction::constant(a - b)).unwrap();
            let psi: f64 = rng.gen_range(-5.0..5.0);
            // associativity and commutativity, bit-for-bit
            assert_eq!(
                g1.compose(&g2).compose(&g3).m_value(psi),
                g1.compose(&g2.compose(&g3)).m_value(psi)
            );
            assert_eq!(g1.compose(&g2).m_value(psi), g2.compose(&g1).m_value(psi));
            // inverse and identity
            assert_eq!(g1.compose(&g1.inverse()).m_value(psi), 1.0);
            assert_eq!(g1.compose(&GroupElement::identity()).m_value(psi), g1.m_value(psi));
        }
    }

    #[test]
    fn rotation_quarter_turn_about_z() {
        let m = EuclideanMotion::rotation(std::f64::consts::FRAC_PI_2, 0.0, 0.0);
        let r = m.rotation_matrix();
        let img = r * Vec3::new(1.0, 0.0, 0.0);
        assert_relative_eq!(img, Vec3::new(0.0, -1.0, 0.0), epsilon = 1e-15);
        // orthogonal with det +1
        assert_relative_eq!((r * r.transpose()), Mat3::identity(), epsilon = 1e-15);
        assert_relative_eq!(r.determinant(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn identity_motion_is_identity() {
        let (st, pts) = vortex();
        let moved = apply_isometry(&st, &EuclideanMotion::identity());
        for p in &pts {
            assert_relative_eq!(moved.b.eval(p).unwrap(), st.b.eval(p).unwrap(), epsilon = 1e-15);
            assert_relative_eq!(
                moved.pressure.eval(p).unwrap(),
                st.pressure.eval(p).unwrap(),
                epsilon = 1e-15
            );
        }
    }

    #[test]
    fn isometry_preserves_residual() {
        let (st, _) = vortex();
        let m = EuclideanMotion {
            translation: Vec3::new(0.3, -1.0, 2.0),
            phi: 0.7,
            theta: 1.1,
            psi: -0.4,
        };
        let moved = apply_isometry(&st, &m);
        let scheme = FdScheme::central4(1e-4).unwrap();
        let r_mat = m.rotation_matrix();
        for p in sample_ball(1.0, 40, 0.1, SampleStrategy::Lattice) {
            let q = Point3::from(r_mat * p.coords + m.translation);
            let r = mhd_residual(&moved, &q, scheme).unwrap();
            assert!(r.norm() < 1e-3, "residual {} at {q}", r.norm());
        }
    }

    #[test]
    fn scaling_doubles_b_quadruples_p() {
        let (st, pts) = vortex();
        let scaled = apply_scaling(&st, 2.0);
        for p in pts.iter().take(20) {
            assert_relative_eq!(
                scaled.b.eval(p).unwrap(),
                st.b.eval(p).unwrap() * 2.0,
                epsilon = 1e-14
            );
            assert_relative_eq!(
                scaled.pressure.eval(p).unwrap(),
                st.pressure.eval(p).unwrap() * 4.0,
                epsilon = 1e-14
            );
        }
        let scheme = FdScheme::central4(1e-4).unwrap();
        for p in pts.iter().take(20) {
            assert!(mhd_residual(&scaled, p, scheme).unwrap().norm() < 4e-3);
        }
    }

    #[test]
    fn dilation_preserves_residual() {
        let (st, _) = vortex();
        let dilated = apply_dilation(&st, 2.5).unwrap();
        let scheme = FdScheme::central4(1e-4).unwrap();
        for p in sample_ball(2.5, 30, 0.1, SampleStrategy::Lattice) {
            let r = mhd_residual(&dilated, &p, scheme).unwrap();
            assert!(r.norm() < 1e-3, "residual {} at {p}", r.norm());
        }
        assert!(apply_dilation(&st, 0.0).is_err());
    }

    #[test]
    fn pressure_shift_changes_only_the_constant() {
        let (st, pts) = vortex();
        let shifted = apply_pressure_shift(&st, -123.0);
        let scheme = FdScheme::default();
        for p in pts.iter().take(10) {
            assert_relative_eq!(
                shifted.pressure.eval(p).unwrap(),
                st.pressure.eval(p).unwrap() - 123.0,
                epsilon = 1e-12
            );
            let r0 = mhd_residual(&st, p, scheme).unwrap();
            let r1 = mhd_residual(&shifted, p, scheme).unwrap();
            assert_eq!(r0.momentum, r1.momentum);
        }
    }

    #[test]
    fn infinite_transform_identity_multiplier() {
        let (st, pts) = vortex();
        let cgl = CglState::from_mhd(&st);
        let out = infinite_transform(&cgl, &SurfaceFunction::constant(1.0), &pts).unwrap();
        for p in pts.iter().take(20) {
            assert_relative_eq!(out.b.eval(p).unwrap(), cgl.b.eval(p).unwrap(), epsilon = 1e-14);
            assert_abs_diff_eq!(out.tau.eval(p).unwrap(), 0.0, epsilon = 1e-15);
            assert_relative_eq!(
                out.p_perp.eval(p).unwrap(),
                cgl.p_perp.eval(p).unwrap(),
                epsilon = 1e-14
            );
        }
    }

    #[test]
    fn infinite_transform_invariants() {
        let (st, pts) = vortex();
        let cgl = CglState::from_mhd(&st);
        // alpha = +1, M = exp(H): positive on any label range, so the signed
        // invariant comparison is meaningful
        let m = GroupElement::new(1, SurfaceFunction::new("h", |psi| (psi / 900.0).sin()))
            .unwrap()
            .to_surface_function();
        let out = infinite_transform(&cgl, &m, &pts).unwrap();
        for p in &pts {
            let (b0, t0) = (cgl.b.eval(p).unwrap(), cgl.tau.eval(p).unwrap());
            let (b1, t1) = (out.b.eval(p).unwrap(), out.tau.eval(p).unwrap());
            // sqrt(1-tau) B and the mean pressure are untouched
            assert_relative_eq!(b0 * (1.0 - t0).sqrt(), b1 * (1.0 - t1).sqrt(), max_relative = 1e-13);
            assert_relative_eq!(
                cgl.mean_pressure(p).unwrap(),
                out.mean_pressure(p).unwrap(),
                max_relative = 1e-13
            );
            // field lines preserved
            assert_abs_diff_eq!(b0.cross(&b1).norm(), 0.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn infinite_transform_rejects_vanishing_multiplier() {
        let (st, pts) = vortex();
        let cgl = CglState::from_mhd(&st);
        // M vanishing right on a sampled surface must be rejected
        let p0 = cgl.surface_label.eval(&pts[0]).unwrap();
        let m = SurfaceFunction::affine(-p0, 1.0);
        assert!(matches!(
            infinite_transform(&cgl, &m, &pts),
            Err(Error::DegenerateTransform(_))
        ));
    }

    #[test]
    fn transform_rejects_bad_label() {
        let (st, pts) = vortex();
        let mut cgl = CglState::from_mhd(&st);
        cgl.surface_label = ScalarField::new(|p| p.x); // not constant on field lines
        assert!(matches!(
            infinite_transform(&cgl, &SurfaceFunction::constant(2.0), &pts),
            Err(Error::InvalidLabel(_))
        ));
    }

    #[test]
    fn mhd_to_cgl_identity_multiplier() {
        let (st, pts) = vortex();
        let out = mhd_to_cgl(&st, &SurfaceFunction::constant(1.0), 7.0, &pts).unwrap();
        for p in pts.iter().take(20) {
            assert_abs_diff_eq!(out.tau.eval(p).unwrap(), 0.0, epsilon = 1e-15);
            let expect = st.pressure.eval(p).unwrap() + 7.0;
            assert_relative_eq!(out.p_perp.eval(p).unwrap(), expect, epsilon = 1e-13);
            assert_relative_eq!(out.p_par(p).unwrap(), expect, epsilon = 1e-13);
        }
    }

    #[test]
    fn mhd_to_cgl_residual_with_sine_multiplier() {
        let (st, pts) = vortex();
        let m = SurfaceFunction::sine_modulated(200.0, 60.0).unwrap();
        let out = mhd_to_cgl(&st, &m, 500.0, &pts).unwrap();
        let scheme = FdScheme::central4(1e-4).unwrap();
        for p in pts.iter().take(40) {
            let r = cgl_residual(&out, p, scheme).unwrap();
            // the multiplier oscillates fast in the label, so the truncation
            // constant is large; the h^2 scaling is checked separately
            assert!(r.norm() < 0.1, "residual {} at {p}", r.norm());
        }
        // residual is pure truncation: central2 residual shrinks ~h^2
        let p = &pts[3];
        let r_coarse = cgl_residual(&out, p, FdScheme::central2(4e-4).unwrap())
            .unwrap()
            .norm();
        let r_fine = cgl_residual(&out, p, FdScheme::central2(1e-4).unwrap())
            .unwrap()
            .norm();
        let ratio = r_coarse / r_fine;
        assert!(ratio > 8.0 && ratio < 32.0, "h^2 ratio {ratio}");
    }

    #[test]
    fn p_par_printed_form_agrees_with_state_relation() {
        let (st, pts) = vortex();
        let cgl = CglState::from_mhd(&st);
        let m = SurfaceFunction::sine_modulated(200.0, 60.0).unwrap();
        let out = infinite_transform(&cgl, &m, &pts).unwrap();
        for p in pts.iter().take(30) {
            // printed form: p_par' = p_perp' + B'^2 (1 - (1 - tau) M^-2)
            let psi = cgl.surface_label.eval(p).unwrap();
            let mm = m.eval(psi);
            let tau0 = cgl.tau.eval(p).unwrap();
            let b1 = out.b.eval(p).unwrap().norm_squared();
            let printed =
                out.p_perp.eval(p).unwrap() + b1 * (1.0 - (1.0 - tau0) / (mm * mm));
            assert_relative_eq!(out.p_par(p).unwrap(), printed, max_relative = 1e-13);
        }
    }

    #[test]
    fn round_trip_recovers_isotropic_state() {
        let (st, pts) = vortex();
        let m = SurfaceFunction::affine(2.0, 1e-4); // positive on the label range
        let cgl = mhd_to_cgl(&st, &m, 300.0, &pts).unwrap();
        let back = cgl_to_mhd(&cgl, &pts).unwrap();
        for p in pts.iter().take(30) {
            assert_relative_eq!(
                back.b.eval(p).unwrap(),
                st.b.eval(p).unwrap(),
                max_relative = 1e-12
            );
            assert_relative_eq!(
                back.pressure.eval(p).unwrap(),
                st.pressure.eval(p).unwrap() + 300.0,
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn cgl_to_mhd_rejects_fire_hose() {
        let st = CglState::new(
            VectorField::constant(Vec3::z()),
            ScalarField::constant(1.0),
            ScalarField::constant(1.2),
            ScalarField::constant(0.0),
        );
        let pts = [Point3::origin()];
        assert!(matches!(
            cgl_to_mhd(&st, &pts),
            Err(Error::FireHoseRegime { .. })
        ));
    }

    #[test]
    fn action_homomorphism() {
        let (st, pts) = vortex();
        let cgl = CglState::from_mhd(&st);
        let g1 = GroupElement::new(1, SurfaceFunction::affine(0.1, 1e-4)).unwrap();
        let g2 = GroupElement::new(-1, SurfaceFunction::new("s", |p| (p / 900.0).sin())).unwrap();
        let two_step = infinite_transform(
            &infinite_transform(&cgl, &g1.to_surface_function(), &pts).unwrap(),
            &g2.to_surface_function(),
            &pts,
        )
        .unwrap();
        let product = infinite_transform(&cgl, &g1.compose(&g2).to_surface_function(), &pts).unwrap();
        for p in pts.iter().take(30) {
            assert_relative_eq!(
                two_step.b.eval(p).unwrap(),
                product.b.eval(p).unwrap(),
                max_relative = 1e-13
            );
            assert_relative_eq!(
                two_step.p_perp.eval(p).unwrap(),
                product.p_perp.eval(p).unwrap(),
                max_relative = 1e-13
            );
            assert_abs_diff_eq!(
                two_step.tau.eval(p).unwrap(),
                product.tau.eval(p).unwrap(),
                epsilon = 1e-13
            );
        }
    }

    #[test]
    fn stability_criteria_trivial_cases() {
        let iso = CglState::new(
            VectorField::constant(Vec3::z()),
            ScalarField::constant(2.0),
            ScalarField::constant(0.0),
            ScalarField::constant(0.0),
        );
        let p = Point3::origin();
        assert!(!firehose_unstable(&iso, &p).unwrap());
        assert!(!mirror_unstable(&iso, &p).unwrap());

        let hose = CglState::new(
            VectorField::constant(Vec3::z()),
            ScalarField::constant(2.0),
            ScalarField::constant(2.0),
            ScalarField::constant(0.0),
        );
        assert!(firehose_unstable(&hose, &p).unwrap());

        // p_par = p_perp + tau B^2 = 0 when p_perp = 1, tau = -1, |B| = 1
        let degenerate = CglState::new(
            VectorField::constant(Vec3::z()),
            ScalarField::constant(1.0),
            ScalarField::constant(-1.0),
            ScalarField::constant(0.0),
        );
        assert!(matches!(
            mirror_unstable(&degenerate, &p),
            Err(Error::UndefinedCriterion { .. })
        ));
    }

    #[test]
    fn firehose_verdict_invariant_under_infinite_transform() {
        let (st, pts) = vortex();
        let cgl = CglState::from_mhd(&st);
        let m = SurfaceFunction::sine_modulated(200.0, 60.0).unwrap();
        let out = infinite_transform(&cgl, &m, &pts).unwrap();
        for p in pts.iter().take(30) {
            assert_eq!(
                firehose_unstable(&cgl, p).unwrap(),
                firehose_unstable(&out, p).unwrap()
            );
        }
    }

    #[test]
    fn generator_residual_shrinks_quadratically() {
        let (st, _) = vortex();
        let cgl = CglState::from_mhd(&st);
        let pts = sample_ball(1.0, 60, 0.1, SampleStrategy::Lattice);
        let scheme = FdScheme::central4(1e-3).unwrap();
        let r = |eps| {
            infinitesimal_generator_check(&cgl, &Generator::Scaling, eps, &pts, scheme).unwrap()
        };
        let (r2, r3) = (r(1e-2), r(1e-3));
        let slope = (r2 / r3).log10();
        assert!((slope - 2.0).abs() < 0.3, "slope {slope} (r={r2:e},{r3:e})");
    }
}
