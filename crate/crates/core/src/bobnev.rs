//! The Bobnev localized vortex: a closed-form axisymmetric isotropic
//! equilibrium confined to a ball of radius R, built from the radial
//! profile `V0(x) = 3 (sin x / x^3 - cos x / x^2)`.
//!
//! The magnetic field is
//! `B = e_rho V(rho) cos(theta) + e_theta W(rho) sin(theta) + e_phi U(rho) sin(theta)`
//! with `U = lambda_n rho V`, `W = -V - rho V'/2`, and pressure
//! `P = P0 - p(rho) sin^2(theta)`. The eigenvalues `lambda_n` make both the
//! field and the pressure perturbation vanish at `rho = R`.

use crate::error::{Error, Result};
use crate::field::{Domain, MhdState, Point3, ScalarField, Vec3, VectorField};

/// `V0(x) = 3 (sin x / x^3 - cos x / x^2)`, series-stabilized near 0.
pub fn v0_profile(x: f64) -> f64 {
    if x.abs() < 1e-3 {
        let x2 = x * x;
        // 1 - x^2/10 + x^4/280 - x^6/15120
        1.0 - x2 / 10.0 + x2 * x2 / 280.0 - x2 * x2 * x2 / 15120.0
    } else {
        3.0 * (x.sin() / (x * x * x) - x.cos() / (x * x))
    }
}

/// d V0 / dx, series-stabilized near 0.
pub fn v0_prime(x: f64) -> f64 {
    if x.abs() < 1e-3 {
        let x2 = x * x;
        -x / 5.0 + x * x2 / 70.0 - x * x2 * x2 / 2520.0
    } else {
        3.0 * (3.0 * x.cos() / x.powi(3) + x.sin() / (x * x) - 3.0 * x.sin() / x.powi(4))
    }
}

/// Eigenvalue equation for `m = R lambda`:
/// `(3 - 4 m^2) sin(2m) - 6 m cos(2m) = 0`.
pub fn eigenvalue_residual(m: f64) -> f64 {
    let (s, c) = (2.0 * m).sin_cos();
    (3.0 - 4.0 * m * m) * s - 6.0 * m * c
}

fn eigenvalue_residual_prime(m: f64) -> f64 {
    let (s, c) = (2.0 * m).sin_cos();
    4.0 * m * s - 8.0 * m * m * c
}

/// First `n_max` positive roots `lambda_1 < lambda_2 < ...` of the
/// eigenvalue equation, each polished to `|residual| < 1e-12`.
pub fn bobnev_roots(radius: f64, n_max: usize) -> Result<Vec<f64>> {
    if !(radius > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "vortex radius must be positive, got {radius}"
        )));
    }
    if n_max == 0 {
        return Err(Error::InvalidParameter("n_max must be >= 1".into()));
    }
    // Work in m = R*lambda; the equation depends on m alone. Roots are
    // interlaced roughly pi/2 apart, so a 0.02 scan cannot skip one.
    let mut roots_m = Vec::with_capacity(n_max);
    let step = 0.02;
    let mut m = 0.5;
    let mut f_prev = eigenvalue_residual(m);
    while roots_m.len() < n_max {
        let m_next = m + step;
        let f_next = eigenvalue_residual(m_next);
        if f_prev == 0.0 {
            roots_m.push(m);
        } else if f_prev * f_next < 0.0 {
            roots_m.push(polish_root(
                m,
                m_next,
                eigenvalue_residual,
                eigenvalue_residual_prime,
                1e-12,
            )?);
        }
        m = m_next;
        f_prev = f_next;
        if m > 0.5 + (n_max as f64 + 4.0) * 4.0 {
            return Err(Error::RootSearch(format!(
                "bracketing failed: found {} of {} eigenvalues by m = {m}",
                roots_m.len(),
                n_max
            )));
        }
    }
    Ok(roots_m.into_iter().map(|m| m / radius).collect())
}

/// Bisection to a tight bracket, then Newton polish to `|f| < tol`.
fn polish_root(
    mut lo: f64,
    mut hi: f64,
    f: impl Fn(f64) -> f64,
    fp: impl Fn(f64) -> f64,
    tol: f64,
) -> Result<f64> {
    let (mut flo, fhi) = (f(lo), f(hi));
    if flo * fhi > 0.0 {
        return Err(Error::RootSearch(format!("no sign change on [{lo}, {hi}]")));
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if flo * fm < 0.0 {
            hi = mid;
        } else {
            lo = mid;
            flo = fm;
        }
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..30 {
        let fx = f(x);
        if fx.abs() < tol {
            return Ok(x);
        }
        let d = fp(x);
        if d == 0.0 {
            break;
        }
        x -= fx / d;
    }
    if f(x).abs() < tol {
        Ok(x)
    } else {
        Err(Error::RootSearch(format!(
            "Newton polish stalled at x = {x}, residual {:e}",
            f(x)
        )))
    }
}

/// Parameters of a constructed vortex.
#[derive(Debug, Clone, Copy)]
pub struct BobnevParams {
    /// Vortex radius R.
    pub radius: f64,
    /// Eigenvalue index (1-based).
    pub n: usize,
    /// Eigenvalue lambda_n.
    pub lambda: f64,
    /// On-axis field B0 = |B(0)|.
    pub b0: f64,
    /// Ambient pressure P0 = P at rho = R.
    pub p0: f64,
    /// Pressure-profile constant: P = P0 + gamma_const * rho^2 V sin^2(theta).
    pub gamma_const: f64,
}

/// Radial profiles V, U, W, p of the vortex and their derivatives.
#[derive(Debug, Clone, Copy)]
pub struct BobnevProfiles {
    params: BobnevParams,
    /// V0(2 lambda R)
    v0_at_edge: f64,
}

impl BobnevProfiles {
    pub fn new(params: BobnevParams) -> Result<Self> {
        let v0_at_edge = v0_profile(2.0 * params.lambda * params.radius);
        if (1.0 - v0_at_edge).abs() < 1e-12 {
            return Err(Error::DegenerateNormalization(
                "V0(2 lambda R) = 1: profile normalization is singular".into(),
            ));
        }
        Ok(BobnevProfiles { params, v0_at_edge })
    }

    pub fn params(&self) -> &BobnevParams {
        &self.params
    }

    /// Poloidal profile V(rho); V(0) = B0, V(R) = 0.
    pub fn v(&self, rho: f64) -> f64 {
        let p = &self.params;
        p.b0 * (v0_profile(2.0 * p.lambda * rho) - self.v0_at_edge) / (1.0 - self.v0_at_edge)
    }

    /// dV/drho, from the closed form (no nested finite differences).
    pub fn v_prime(&self, rho: f64) -> f64 {
        let p = &self.params;
        p.b0 * 2.0 * p.lambda * v0_prime(2.0 * p.lambda * rho) / (1.0 - self.v0_at_edge)
    }

    /// Toroidal profile U = lambda rho V.
    pub fn u(&self, rho: f64) -> f64 {
        self.params.lambda * rho * self.v(rho)
    }

    /// Meridional profile W = -V - rho V' / 2.
    pub fn w(&self, rho: f64) -> f64 {
        -self.v(rho) - rho * self.v_prime(rho) / 2.0
    }

    /// Pressure perturbation p(rho): P = P0 - p(rho) sin^2(theta).
    pub fn p(&self, rho: f64) -> f64 {
        -self.params.gamma_const * rho * rho * self.v(rho)
    }
}

/// Construct the vortex equilibrium for radius `R`, eigenvalue index `n`,
/// on-axis field `b0` and ambient pressure `p0`.
///
/// The state's surface label is the pressure itself (P is constant on the
/// magnetic surfaces); the domain is the open ball `rho < R`.
pub fn bobnev_state(
    radius: f64,
    n: usize,
    b0: f64,
    p0: f64,
) -> Result<(MhdState, BobnevParams, BobnevProfiles)> {
    if !(radius.is_finite() && b0.is_finite() && p0.is_finite()) {
        return Err(Error::InvalidParameter(
            "bobnev_state requires finite inputs".into(),
        ));
    }
    let lambda = *bobnev_roots(radius, n)?
        .last()
        .expect("bobnev_roots returns n roots");
    let v0_edge = v0_profile(2.0 * lambda * radius);
    if (1.0 - v0_edge).abs() < 1e-12 {
        return Err(Error::DegenerateNormalization(
            "V0(2 lambda R) = 1".into(),
        ));
    }
    // Force balance fixes the pressure profile amplitude:
    // gamma_const = lambda^2 B0 V0(2 lambda R) / (1 - V0(2 lambda R)),
    // with P = P0 + gamma_const rho^2 V sin^2(theta).
    let gamma_const = lambda * lambda * b0 * v0_edge / (1.0 - v0_edge);
    let params = BobnevParams {
        radius,
        n,
        lambda,
        b0,
        p0,
        gamma_const,
    };
    let profiles = BobnevProfiles::new(params)?;

    let domain = Domain::ball(radius);
    let prof_b = profiles;
    let b = VectorField::new(move |pt: &Point3| {
        let rho = pt.coords.norm();
        if rho < 1e-14 {
            return Vec3::new(0.0, 0.0, prof_b.params.b0);
        }
        let v = prof_b.v(rho);
        let w = prof_b.w(rho);
        let u = prof_b.u(rho);
        let r2 = rho * rho;
        let (x, y, z) = (pt.x, pt.y, pt.z);
        // spherical components folded to Cartesian; the sin(theta) factors
        // cancel the azimuthal singularity on the axis
        Vec3::new(
            x * z * (v + w) / r2 - u * y / rho,
            y * z * (v + w) / r2 + u * x / rho,
            v * z * z / r2 - w * (x * x + y * y) / r2,
        )
    })
    .with_domain(domain.clone());

    let prof_p = profiles;
    let pressure = ScalarField::new(move |pt: &Point3| {
        let rho = pt.coords.norm();
        // p(rho) sin^2(theta) = -gamma rho^2 V sin^2 = -gamma (x^2+y^2) V
        prof_p.params.p0 + prof_p.params.gamma_const * (pt.x * pt.x + pt.y * pt.y) * prof_p.v(rho)
    })
    .with_domain(domain.clone());

    let state = MhdState {
        b,
        pressure: pressure.clone(),
        surface_label: pressure,
        domain,
    };
    Ok((state, params, profiles))
}

/// Radii in (0, R) where V vanishes: the spherical separatrix surfaces.
/// On each, U and the pressure perturbation vanish and P = P0.
pub fn separatrix_radii(profiles: &BobnevProfiles) -> Vec<f64> {
    let r_max = profiles.params.radius;
    let n_scan = 4000;
    let mut out = Vec::new();
    let mut rho_prev = r_max * 1e-6;
    let mut v_prev = profiles.v(rho_prev);
    for i in 1..n_scan {
        let rho = r_max * (i as f64) / (n_scan as f64);
        let v = profiles.v(rho);
        if v_prev * v < 0.0 {
            if let Ok(root) = polish_root(
                rho_prev,
                rho,
                |r| profiles.v(r),
                |r| profiles.v_prime(r),
                1e-12 * profiles.params.b0.abs().max(1.0),
            ) {
                out.push(root);
            }
        }
        rho_prev = rho;
        v_prev = v;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{mhd_residual, FdScheme};
    use crate::sample::{sample_ball, SampleStrategy};
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    #[test]
    fn v0_limit_at_zero() {
        assert_relative_eq!(v0_profile(1e-9), 1.0, epsilon = 1e-12);
        // series and closed form agree at the switchover
        assert_relative_eq!(v0_profile(1.0001e-3), v0_profile(0.9999e-3), epsilon = 1e-7);
    }

    #[test]
    fn v0_at_pi() {
        // sin(pi) = 0, cos(pi) = -1 -> V0(pi) = 3/pi^2
        let pi = std::f64::consts::PI;
        assert_relative_eq!(v0_profile(pi), 3.0 / (pi * pi), epsilon = 1e-14);
    }

    #[test]
    fn v0_is_even() {
        for x in [1e-4, 0.3, 2.0, 11.7] {
            assert_eq!(v0_profile(x), v0_profile(-x));
            assert_eq!(v0_prime(x), -v0_prime(-x));
        }
    }

    #[test]
    fn v0_prime_matches_difference_quotient() {
        for x in [0.5, 2.0, 6.0, 12.0] {
            let h = 1e-6;
            let fd = (v0_profile(x + h) - v0_profile(x - h)) / (2.0 * h);
            assert_abs_diff_eq!(v0_prime(x), fd, epsilon = 1e-8);
        }
    }

    #[test]
    fn roots_match_reference_values() {
        let roots = bobnev_roots(1.0, 3).unwrap();
        assert_abs_diff_eq!(roots[0], 2.882, epsilon = 5e-4);
        assert_abs_diff_eq!(roots[1], 4.548, epsilon = 5e-4);
        assert_abs_diff_eq!(roots[2], 6.161, epsilon = 5e-4);
        for &l in &roots {
            assert!(eigenvalue_residual(l).abs() < 1e-12);
        }
    }

    #[test]
    fn roots_scale_inversely_with_radius() {
        let r1 = bobnev_roots(1.0, 2).unwrap();
        let r2 = bobnev_roots(2.0, 2).unwrap();
        for (a, b) in r1.iter().zip(&r2) {
            assert_relative_eq!(a / 2.0, *b, epsilon = 1e-12);
        }
    }

    #[test]
    fn eigenvalues_are_critical_points_of_v0() {
        // the eigenvalue equation is V0'(2m) = 0 in disguise, which is what
        // makes W (hence B) vanish at the boundary
        for &l in &bobnev_roots(1.0, 3).unwrap() {
            assert_abs_diff_eq!(v0_prime(2.0 * l), 0.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn gamma_matches_reference() {
        let (_, params, _) = bobnev_state(1.0, 3, 100.0, 4500.0).unwrap();
        assert_abs_diff_eq!(params.gamma_const, -72.831, epsilon = 5e-3);
    }

    #[test]
    fn boundary_conditions() {
        let (st, params, profiles) = bobnev_state(1.0, 3, 100.0, 4500.0).unwrap();
        // |B| -> 0 and P -> P0 at rho = R
        for theta in [0.3_f64, 1.0, 2.2] {
            let pt = Point3::new(
                0.999999 * theta.sin(),
                0.0,
                0.999999 * theta.cos(),
            );
            assert!(st.b.eval(&pt).unwrap().norm() < 1e-2);
            assert_abs_diff_eq!(st.pressure.eval(&pt).unwrap(), params.p0, epsilon = 1e-2);
        }
        // B(0) = B0 e_z
        let b0 = st.b.eval(&Point3::origin()).unwrap();
        assert_relative_eq!(b0, Vec3::new(0.0, 0.0, 100.0), epsilon = 1e-12);
        assert_relative_eq!(profiles.v(0.0), 100.0, epsilon = 1e-12);
        assert_abs_diff_eq!(profiles.v(1.0), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn separatrices_for_n3() {
        let (_, _, profiles) = bobnev_state(1.0, 3, 100.0, 4500.0).unwrap();
        let seps = separatrix_radii(&profiles);
        assert_eq!(seps.len(), 2);
        assert_abs_diff_eq!(seps[0], 0.376, epsilon = 5e-4);
        assert_abs_diff_eq!(seps[1], 0.597, epsilon = 5e-4);
        for &s in &seps {
            assert!(profiles.v(s).abs() < 1e-10);
            assert!(profiles.u(s).abs() < 1e-10);
            assert!(profiles.p(s).abs() < 1e-8);
        }
    }

    #[test]
    fn no_separatrix_for_n1() {
        let (_, _, profiles) = bobnev_state(1.0, 1, 100.0, 4500.0).unwrap();
        assert!(separatrix_radii(&profiles).is_empty());
    }

    #[test]
    fn residual_is_small_on_interior_lattice() {
        let (st, _, _) = bobnev_state(1.0, 3, 100.0, 4500.0).unwrap();
        let pts = sample_ball(1.0, 200, 0.05, SampleStrategy::Lattice);
        let scheme = FdScheme::central4(1e-4).unwrap();
        let mut worst: f64 = 0.0;
        for p in &pts {
            let r = mhd_residual(&st, p, scheme).unwrap();
            worst = worst.max(r.norm());
        }
        // force scale is |grad P| ~ 1e3; anything far below that is a solution
        assert!(worst < 1e-3, "worst residual {worst}");
    }

    #[test]
    fn pressure_is_constant_on_field_lines() {
        let (st, _, _) = bobnev_state(1.0, 3, 100.0, 4500.0).unwrap();
        let scheme = FdScheme::central4(1e-4).unwrap();
        for p in sample_ball(1.0, 100, 0.1, SampleStrategy::Lattice) {
            let b = st.b.eval(&p).unwrap();
            let gp = crate::field::grad(&st.pressure, &p, scheme).unwrap();
            let align = b.dot(&gp).abs() / (b.norm() * gp.norm() + 1e-12);
            assert!(align < 1e-6, "B.grad P misalignment {align} at {p}");
        }
    }
}
