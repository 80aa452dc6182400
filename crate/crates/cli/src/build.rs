//! Construction of the configured solution, application of the transform
//! chain, and the verification checks behind `verify`/`transform`.

use std::fs::File;
use std::io::BufReader;

use anyhow::{anyhow, bail, Context};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use peq_core::bobnev::bobnev_state;
use peq_core::claws::{
    cylindrical_cl_residual, flux_surface_integral, multiplier_identity_check, table1_flux,
    table2_flux, AxisymmetricState, KillingVector, SphereQuadrature, Table1Row, Table2Row,
};
use peq_core::field::{
    cgl_residual, div, grad, mhd_residual, CglState, FdScheme, MhdState, Point3, ScalarField,
    Vec3, VectorField,
};
use peq_core::gs::{solve_gs, FluxFunction, FluxGrid, SolverConfig, SourceTerm};
use peq_core::transforms::{
    apply_isometry, apply_isometry_cgl, apply_pressure_shift, apply_pressure_shift_cgl,
    apply_scaling, apply_scaling_cgl, cgl_to_mhd, infinite_transform, mhd_to_cgl,
    EuclideanMotion, SurfaceFunction,
};

use crate::config::{MultiplierSpec, RunConfig, SolutionSpec, TransformSpec, VerifySpec};
use crate::report::RunReport;

pub enum AnyState {
    Mhd(MhdState),
    Cgl(CglState),
}

impl AnyState {
    pub fn kind(&self) -> &'static str {
        match self {
            AnyState::Mhd(_) => "mhd",
            AnyState::Cgl(_) => "cgl",
        }
    }
}

pub struct BuiltSolution {
    pub state: AnyState,
    /// Interior verification samples (stencil-safe).
    pub samples: Vec<Point3>,
    /// Sphere radii are multiplied by this scale (vortex radius).
    pub flux_scale: Option<f64>,
    /// Axisymmetric view for the cylindrical-law check.
    pub axisym: Option<AxisymmetricState>,
    /// Underlying flux grid (solved or imported), for export.
    pub grid: Option<FluxGrid>,
}

pub fn build_solution(cfg: &RunConfig) -> anyhow::Result<BuiltSolution> {
    match &cfg.solution {
        SolutionSpec::Bobnev { radius, n, b0, p0 } => {
            let (st, _, _profiles) = bobnev_state(*radius, *n, *b0, *p0)?;
            let samples = peq_core::sample::sample_ball(
                *radius,
                cfg.verify.samples,
                0.02,
                peq_core::sample::SampleStrategy::Halton,
            );
            Ok(BuiltSolution {
                state: AnyState::Mhd(st),
                samples,
                flux_scale: Some(*radius),
                axisym: None,
                grid: None,
            })
        }
        SolutionSpec::GsSolve {
            alpha,
            beta,
            r_range,
            z_range,
            nr,
            nz,
            max_iterations,
            omega,
        } => {
            let (a, b) = (*alpha, *beta);
            let exact = move |r: f64, z: f64| b / 8.0 * r.powi(4) + a * r * r * z * z;
            let dr = (r_range[1] - r_range[0]) / (*nr as f64 - 1.0);
            let dz = (z_range[1] - z_range[0]) / (*nz as f64 - 1.0);
            let mut grid = FluxGrid::new(r_range[0], z_range[0], dr, dz, *nr, *nz)?;
            for j in 0..*nz {
                for i in 0..*nr {
                    if i == 0 || j == 0 || i == *nr - 1 || j == *nz - 1 {
                        grid.set(i, j, exact(grid.r(i), grid.z(j)));
                    }
                }
            }
            let source = SourceTerm::LinearProfiles {
                ii0: 0.0,
                ii1: 0.0,
                pp0: -(b + 2.0 * a),
                pp1: 0.0,
            };
            let mut solver = SolverConfig::default();
            if let Some(it) = max_iterations {
                solver.max_iterations = *it;
            }
            if let Some(w) = omega {
                solver.omega = *w;
            }
            let (grid, _) = solve_gs(grid, &source, &solver)?;
            flux_grid_solution(cfg, grid, [0.0, 0.0], [0.0, -(b + 2.0 * a)])
        }
        SolutionSpec::GridImport { path, i, p } => {
            let file = File::open(path)
                .with_context(|| format!("opening grid {}", path.display()))?;
            let grid = FluxGrid::read_csv(BufReader::new(file))?;
            flux_grid_solution(cfg, grid, *i, *p)
        }
    }
}

fn flux_grid_solution(
    cfg: &RunConfig,
    grid: FluxGrid,
    i: [f64; 2],
    p: [f64; 2],
) -> anyhow::Result<BuiltSolution> {
    let flux = FluxFunction::from_grid(&grid);
    let i_fn = SurfaceFunction::affine(i[0], i[1]);
    let p_fn = SurfaceFunction::affine(p[0], p[1]);
    let st = peq_core::gs::gs_state(&flux, &i_fn, &p_fn);
    let axisym = AxisymmetricState::from_flux(&flux, &i_fn, &p_fn);
    let samples = annulus_samples(&grid, cfg.verify.samples);
    Ok(BuiltSolution {
        state: AnyState::Mhd(st),
        samples,
        flux_scale: None,
        axisym: Some(axisym),
        grid: Some(grid),
    })
}

/// Deterministic interior samples of the lifted annular domain: a lattice in
/// (r, z) with a golden-angle azimuth walk.
fn annulus_samples(grid: &FluxGrid, target: usize) -> Vec<Point3> {
    let per_axis = (target as f64).sqrt().ceil() as usize;
    let r_lo = grid.r(0) + 2.0 * grid.dr;
    let r_hi = grid.r(grid.nr - 1) - 2.0 * grid.dr;
    let z_lo = grid.z(0) + 2.0 * grid.dz;
    let z_hi = grid.z(grid.nz - 1) - 2.0 * grid.dz;
    let golden = 2.399963229728653;
    let mut out = Vec::with_capacity(per_axis * per_axis);
    for j in 0..per_axis {
        for i in 0..per_axis {
            let r = r_lo + (r_hi - r_lo) * (i as f64 + 0.5) / per_axis as f64;
            let z = z_lo + (z_hi - z_lo) * (j as f64 + 0.5) / per_axis as f64;
            let phi = golden * (i + per_axis * j) as f64;
            out.push(Point3::new(r * phi.cos(), r * phi.sin(), z));
        }
    }
    out.truncate(target.max(1));
    out
}

pub fn multiplier(spec: &MultiplierSpec) -> anyhow::Result<SurfaceFunction> {
    Ok(match spec {
        MultiplierSpec::Constant { value } => SurfaceFunction::constant(*value),
        MultiplierSpec::Affine { a, b } => SurfaceFunction::affine(*a, *b),
        MultiplierSpec::SineModulated { psi1, psi2 } => {
            SurfaceFunction::sine_modulated(*psi1, *psi2)?
        }
        MultiplierSpec::ExpSine { amp, psi2 } => {
            let (amp, psi2) = (*amp, *psi2);
            if psi2 == 0.0 {
                bail!("exp-sine multiplier needs psi2 != 0");
            }
            SurfaceFunction::new(format!("exp({amp} sin(psi/{psi2}))"), move |x| {
                (amp * (x / psi2).sin()).exp()
            })
            .with_derivative(move |x| {
                (amp / psi2) * (x / psi2).cos() * (amp * (x / psi2).sin()).exp()
            })
        }
    })
}

pub fn apply_chain(
    state: AnyState,
    chain: &[TransformSpec],
    samples: &[Point3],
) -> anyhow::Result<AnyState> {
    let mut current = state;
    for (idx, t) in chain.iter().enumerate() {
        let step = || format!("transform step {} ({t:?})", idx + 1);
        current = match (current, t) {
            (AnyState::Mhd(st), TransformSpec::Scaling { a4 }) => {
                AnyState::Mhd(apply_scaling(&st, *a4))
            }
            (AnyState::Cgl(st), TransformSpec::Scaling { a4 }) => {
                AnyState::Cgl(apply_scaling_cgl(&st, *a4))
            }
            (AnyState::Mhd(st), TransformSpec::PressureShift { delta }) => {
                AnyState::Mhd(apply_pressure_shift(&st, *delta))
            }
            (AnyState::Cgl(st), TransformSpec::PressureShift { delta }) => {
                AnyState::Cgl(apply_pressure_shift_cgl(&st, *delta))
            }
            (AnyState::Mhd(st), TransformSpec::Isometry { translation, phi, theta, psi }) => {
                let m = EuclideanMotion {
                    translation: Vec3::new(translation[0], translation[1], translation[2]),
                    phi: *phi,
                    theta: *theta,
                    psi: *psi,
                };
                AnyState::Mhd(apply_isometry(&st, &m))
            }
            (AnyState::Cgl(st), TransformSpec::Isometry { translation, phi, theta, psi }) => {
                let m = EuclideanMotion {
                    translation: Vec3::new(translation[0], translation[1], translation[2]),
                    phi: *phi,
                    theta: *theta,
                    psi: *psi,
                };
                AnyState::Cgl(apply_isometry_cgl(&st, &m))
            }
            (AnyState::Mhd(st), TransformSpec::MhdToCgl { psi1, psi2, p1 }) => {
                let m = SurfaceFunction::sine_modulated(*psi1, *psi2)?;
                AnyState::Cgl(mhd_to_cgl(&st, &m, *p1, samples).with_context(step)?)
            }
            (AnyState::Cgl(st), TransformSpec::Infinite { m }) => {
                let m = multiplier(m)?;
                AnyState::Cgl(infinite_transform(&st, &m, samples).with_context(step)?)
            }
            (AnyState::Cgl(st), TransformSpec::CglToMhd) => {
                AnyState::Mhd(cgl_to_mhd(&st, samples).with_context(step)?)
            }
            (state, other) => {
                return Err(anyhow!(
                    "transform {other:?} does not apply to a {} state",
                    state.kind()
                ))
            }
        };
    }
    Ok(current)
}

/// Scheme for residual sweeps: 5-point stencils keep analytic-solution
/// sweeps at the documented 1e-5 default.
fn sweep_scheme(h: f64) -> anyhow::Result<FdScheme> {
    Ok(FdScheme::central4(h)?)
}

pub struct CheckContext<'a> {
    pub verify: &'a VerifySpec,
    pub tolerance_scale: f64,
    pub seed: u64,
}

pub fn run_checks(
    built: &BuiltSolution,
    state: &AnyState,
    ctx: &CheckContext,
    report: &mut RunReport,
) -> anyhow::Result<()> {
    let scheme = sweep_scheme(ctx.verify.residual_h)?;
    let ts = ctx.tolerance_scale;
    let samples = &built.samples;
    for check in &ctx.verify.checks {
        match check.as_str() {
            "solenoidal" => {
                let b = state_field(state);
                report.check("solenoidal max |div B|", || {
                    let v = peq_core::sample::max_over(samples, |p| Ok(div(&b, p, scheme)?.abs()))?;
                    Ok((v, ctx.verify.residual_tolerance * ts))
                })?;
            }
            "residual" => match state {
                AnyState::Mhd(st) => {
                    report.check("equilibrium residual (isotropic)", || {
                        let v = peq_core::sample::max_over(samples, |p| {
                            Ok(mhd_residual(st, p, scheme)?.norm())
                        })?;
                        Ok((v, ctx.verify.residual_tolerance * ts))
                    })?;
                }
                AnyState::Cgl(st) => {
                    report.check("equilibrium residual (anisotropic)", || {
                        let v = peq_core::sample::max_over(samples, |p| {
                            Ok(cgl_residual(st, p, scheme)?.norm())
                        })?;
                        Ok((v, ctx.verify.residual_tolerance * ts))
                    })?;
                }
            },
            "label" => {
                let b = state_field(state);
                let label = state_label(state);
                report.check("surface-label alignment", || {
                    let v = peq_core::sample::max_over(samples, |p| {
                        let bv = b.eval(p)?;
                        let g = grad(&label, p, scheme)?;
                        Ok(bv.dot(&g).abs() / (bv.norm() * g.norm() + 1e-12))
                    })?;
                    Ok((v, 1e-6 * ts))
                })?;
            }
            "flux" => {
                let scale = built.flux_scale.ok_or_else(|| {
                    anyhow!("the flux check needs a spherical-domain solution")
                })?;
                run_flux_checks(state, scale, ctx, scheme, report)?;
            }
            "identity" => {
                report.check("off-solution multiplier identity", || {
                    let h = FdScheme::central2(ctx.verify.residual_h)?;
                    let v = identity_sweep(ctx.seed, ctx.verify.identity_trials, h)?;
                    Ok((v, 10.0 * h.h * h.h * ts))
                })?;
            }
            "laws" => {
                let ax = built.axisym.as_ref().ok_or_else(|| {
                    anyhow!("the laws check needs a flux-grid solution")
                })?;
                run_laws_check(ax, samples, ctx, report)?;
            }
            other => bail!("unknown check {other:?}"),
        }
    }
    Ok(())
}

fn state_field(state: &AnyState) -> VectorField {
    match state {
        AnyState::Mhd(st) => st.b.clone(),
        AnyState::Cgl(st) => st.b.clone(),
    }
}

fn state_label(state: &AnyState) -> ScalarField {
    match state {
        AnyState::Mhd(st) => st.surface_label.clone(),
        AnyState::Cgl(st) => st.surface_label.clone(),
    }
}

fn run_flux_checks(
    state: &AnyState,
    scale: f64,
    ctx: &CheckContext,
    scheme: FdScheme,
    report: &mut RunReport,
) -> anyhow::Result<()> {
    let f = SurfaceFunction::affine(1.0, 1e-4);
    let zeta = KillingVector::new(Vec3::new(0.4, -0.2, 0.7), Vec3::new(0.3, 0.5, -0.1));
    for rel in &ctx.verify.flux_radii {
        let rho = rel * scale;
        let q = SphereQuadrature::with_rule(Point3::origin(), rho, 32, 64)?;
        let rows: Vec<(&str, VectorField)> = match state {
            AnyState::Mhd(st) => vec![
                ("stress", table1_flux(st, &Table1Row::Stress(zeta), scheme)),
                ("magnetic", table1_flux(st, &Table1Row::Flux(f.clone()), scheme)),
                ("current", table1_flux(st, &Table1Row::Current(f.clone()), scheme)),
            ],
            AnyState::Cgl(st) => vec![
                ("stress", table2_flux(st, &Table2Row::Stress(zeta), scheme)),
                ("magnetic", table2_flux(st, &Table2Row::Flux(f.clone()), scheme)),
                ("vorticity", table2_flux(st, &Table2Row::Vorticity(f.clone()), scheme)),
            ],
        };
        for (name, field) in rows {
            report.check(&format!("flux {name} rho={rel}"), || {
                let rep = flux_surface_integral(&field, &q)?;
                Ok((rep.value, rep.tolerance * ctx.tolerance_scale))
            })?;
        }
    }
    Ok(())
}

/// Max |lhs − rhs| of the magnetic-flux multiplier identity over random
/// quadratic polynomial non-solution fields.
pub fn identity_sweep(seed: u64, trials: usize, scheme: FdScheme) -> anyhow::Result<f64> {
    fn quad(c: &[f64], k: usize, p: &Point3) -> f64 {
        let o = 10 * k;
        c[o] + c[o + 1] * p.x
            + c[o + 2] * p.y
            + c[o + 3] * p.z
            + c[o + 4] * p.x * p.x
            + c[o + 5] * p.y * p.y
            + c[o + 6] * p.z * p.z
            + c[o + 7] * p.x * p.y
            + c[o + 8] * p.y * p.z
            + c[o + 9] * p.x * p.z
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0_f64;
    for _ in 0..trials.max(1) {
        let c: Vec<f64> = (0..40).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let (ca, cb) = (c.clone(), c);
        let st = MhdState::new(
            VectorField::new(move |p| {
                Vec3::new(quad(&ca, 0, p), quad(&ca, 1, p), quad(&ca, 2, p))
            }),
            ScalarField::new(move |p| quad(&cb, 3, p)),
            ScalarField::new(|p| p.x),
        );
        let point = Point3::new(
            rng.gen_range(-0.5..0.5),
            rng.gen_range(-0.5..0.5),
            rng.gen_range(-0.5..0.5),
        );
        let f = SurfaceFunction::new("identity", |x| x).with_derivative(|_| 1.0);
        let (lhs, rhs) = multiplier_identity_check(&st, &Table1Row::Flux(f), &point, scheme)?;
        worst = worst.max((lhs - rhs).abs());
    }
    Ok(worst)
}

fn run_laws_check(
    ax: &AxisymmetricState,
    samples: &[Point3],
    ctx: &CheckContext,
    report: &mut RunReport,
) -> anyhow::Result<()> {
    let scheme = FdScheme::central2(ctx.verify.residual_h)?;
    for law in 1..=6 {
        report.check(&format!("cylindrical law {law}"), || {
            let mut worst = 0.0_f64;
            for p in samples {
                worst = worst.max(cylindrical_cl_residual(ax, law, p, scheme)?.abs());
            }
            Ok((worst, ctx.verify.laws_tolerance * ctx.tolerance_scale))
        })?;
    }
    Ok(())
}
