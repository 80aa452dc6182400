//! Axisymmetric and helically symmetric flux-function equations:
//! residual evaluation on rectangular grids, an SOR solver validated by
//! manufactured solutions, and lifting of flux functions to 3D magnetic
//! fields.
//!
//! The axisymmetric (Grad-Shafranov) equation for `Psi(r, z)`:
//! `Psi_rr - Psi_r/r + Psi_zz + I(Psi) I'(Psi) + r^2 P'(Psi) = 0`.
//! The helical (JFKO) analogue for `Psi(r, u)`, `u = z - gamma*phi`:
//! `Psi_uu/r^2 + (1/r)[(r/(r^2+g^2)) Psi_r]_r + I I'/(r^2+g^2)
//!  + 2 g I/(r^2+g^2)^2 + mu P'(Psi) = 0`.
//!
//! Grids exclude the axis (`r > 0` on all nodes); the operators are
//! singular at `r = 0`.

use std::io::{BufRead, Write};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::field::{Domain, MhdState, Point3, ScalarField, Vec3, VectorField};
use crate::transforms::SurfaceFunction;

/// Uniform rectangular grid of flux values over (r, z) — or (r, u) for the
/// helical equation. Node (i, j) sits at `(r0 + i*dr, z0 + j*dz)`.
#[derive(Debug, Clone)]
pub struct FluxGrid {
    pub r0: f64,
    pub z0: f64,
    pub dr: f64,
    pub dz: f64,
    pub nr: usize,
    pub nz: usize,
    psi: Vec<f64>,
}

impl FluxGrid {
    pub fn new(r0: f64, z0: f64, dr: f64, dz: f64, nr: usize, nz: usize) -> Result<Self> {
        if !(r0 > 0.0) {
            return Err(Error::SingularAxis(format!(
                "grid must exclude the axis: r0 = {r0} <= 0"
            )));
        }
        if !(dr > 0.0 && dz > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "grid spacings must be positive, got dr = {dr}, dz = {dz}"
            )));
        }
        if nr < 3 || nz < 3 {
            return Err(Error::InvalidParameter(format!(
                "grid needs at least 3 nodes per direction, got {nr} x {nz}"
            )));
        }
        Ok(FluxGrid {
            r0,
            z0,
            dr,
            dz,
            nr,
            nz,
            psi: vec![0.0; nr * nz],
        })
    }

    /// Grid with `psi` filled from a function of (r, z).
    pub fn from_fn(
        r0: f64,
        z0: f64,
        dr: f64,
        dz: f64,
        nr: usize,
        nz: usize,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Self> {
        let mut g = FluxGrid::new(r0, z0, dr, dz, nr, nz)?;
        for j in 0..nz {
            for i in 0..nr {
                let v = f(g.r(i), g.z(j));
                g.set(i, j, v);
            }
        }
        Ok(g)
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        i + self.nr * j
    }

    #[inline]
    pub fn r(&self, i: usize) -> f64 {
        self.r0 + self.dr * i as f64
    }

    #[inline]
    pub fn z(&self, j: usize) -> f64 {
        self.z0 + self.dz * j as f64
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.psi[self.idx(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx(i, j);
        self.psi[k] = v;
    }

    pub fn values(&self) -> &[f64] {
        &self.psi
    }

    /// Write as CSV rows `r,z,psi` with a header line.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "r,z,psi")?;
        for j in 0..self.nz {
            for i in 0..self.nr {
                writeln!(w, "{:.17e},{:.17e},{:.17e}", self.r(i), self.z(j), self.get(i, j))?;
            }
        }
        Ok(())
    }

    /// Read a CSV produced by [`FluxGrid::write_csv`]; the node layout is
    /// reconstructed from the coordinate columns.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut rows: Vec<(f64, f64, f64)> = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || (lineno == 0 && line.starts_with('r')) {
                continue;
            }
            let mut parts = line.split(',');
            let mut next = || -> Result<f64> {
                parts
                    .next()
                    .ok_or_else(|| Error::Parse(format!("short CSV row at line {}", lineno + 1)))?
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))
            };
            rows.push((next()?, next()?, next()?));
        }
        if rows.is_empty() {
            return Err(Error::Parse("empty grid CSV".into()));
        }
        let r0 = rows[0].0;
        let z0 = rows[0].1;
        let nr = rows.iter().take_while(|row| row.1 == z0).count();
        if nr < 3 || rows.len() % nr != 0 {
            return Err(Error::Parse(format!(
                "grid CSV is not a rectangular row-major layout (leading row length {nr})"
            )));
        }
        let nz = rows.len() / nr;
        let dr = rows[1].0 - r0;
        let dz = rows[nr].1 - z0;
        let mut g = FluxGrid::new(r0, z0, dr, dz, nr, nz)?;
        for (k, row) in rows.iter().enumerate() {
            let (i, j) = (k % nr, k / nr);
            let (er, ez) = (g.r(i), g.z(j));
            if (row.0 - er).abs() > 1e-9 * (1.0 + er.abs())
                || (row.1 - ez).abs() > 1e-9 * (1.0 + ez.abs())
            {
                return Err(Error::Parse(format!(
                    "non-uniform grid CSV near row {k}: got ({}, {}), expected ({er}, {ez})",
                    row.0, row.1
                )));
            }
            g.psi[k] = row.2;
        }
        Ok(g)
    }
}

/// Profile functions I(psi), P(psi) with analytic derivatives.
#[derive(Clone)]
pub struct ProfilePair {
    pub i_fn: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub i_prime: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub p_fn: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub p_prime: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl ProfilePair {
    pub fn new(
        i_fn: impl Fn(f64) -> f64 + Send + Sync + 'static,
        i_prime: impl Fn(f64) -> f64 + Send + Sync + 'static,
        p_fn: impl Fn(f64) -> f64 + Send + Sync + 'static,
        p_prime: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        ProfilePair {
            i_fn: Arc::new(i_fn),
            i_prime: Arc::new(i_prime),
            p_fn: Arc::new(p_fn),
            p_prime: Arc::new(p_prime),
        }
    }

    /// `I = i0 + i1*psi`, `P = p0 + p1*psi`.
    pub fn linear(i0: f64, i1: f64, p0: f64, p1: f64) -> Self {
        ProfilePair::new(
            move |psi| i0 + i1 * psi,
            move |_| i1,
            move |psi| p0 + p1 * psi,
            move |_| p1,
        )
    }

    /// Vacuum-like profiles: I const, P const (both source terms vanish).
    pub fn trivial() -> Self {
        ProfilePair::linear(0.0, 0.0, 0.0, 0.0)
    }
}

fn check_grid_size(grid: &FluxGrid) -> Result<()> {
    if grid.nr < 3 || grid.nz < 3 {
        return Err(Error::InvalidParameter(
            "residual stencil needs at least 3 nodes per direction".into(),
        ));
    }
    Ok(())
}

/// Residual of the axisymmetric equation per node, by the 5-point
/// second-order stencil. Boundary entries are zero.
pub fn gs_residual(grid: &FluxGrid, profiles: &ProfilePair) -> Result<Vec<f64>> {
    check_grid_size(grid)?;
    let mut out = vec![0.0; grid.nr * grid.nz];
    let (dr2, dz2) = (grid.dr * grid.dr, grid.dz * grid.dz);
    for j in 1..grid.nz - 1 {
        for i in 1..grid.nr - 1 {
            let r = grid.r(i);
            let c = grid.get(i, j);
            let psi_rr = (grid.get(i + 1, j) - 2.0 * c + grid.get(i - 1, j)) / dr2;
            let psi_r = (grid.get(i + 1, j) - grid.get(i - 1, j)) / (2.0 * grid.dr);
            let psi_zz = (grid.get(i, j + 1) - 2.0 * c + grid.get(i, j - 1)) / dz2;
            out[grid.idx(i, j)] = psi_rr - psi_r / r
                + psi_zz
                + (profiles.i_fn)(c) * (profiles.i_prime)(c)
                + r * r * (profiles.p_prime)(c);
        }
    }
    Ok(out)
}

/// Residual of the helical equation per node (grid axes are (r, u)).
///
/// The middle term is discretized by the product-rule expansion
/// `(g/r) Psi_rr + (g'/r) Psi_r` with `g = r/(r^2+gamma^2)`, so that at
/// `gamma = 0` the node values multiplied by `r^2` reproduce the
/// axisymmetric stencil identically.
pub fn jfko_residual(
    grid: &FluxGrid,
    profiles: &ProfilePair,
    gamma: f64,
    mu: f64,
) -> Result<Vec<f64>> {
    check_grid_size(grid)?;
    let g2 = gamma * gamma;
    let mut out = vec![0.0; grid.nr * grid.nz];
    let (dr2, du2) = (grid.dr * grid.dr, grid.dz * grid.dz);
    for j in 1..grid.nz - 1 {
        for i in 1..grid.nr - 1 {
            let r = grid.r(i);
            let (r2g, r2) = (r * r + g2, r * r);
            let c = grid.get(i, j);
            let psi_rr = (grid.get(i + 1, j) - 2.0 * c + grid.get(i - 1, j)) / dr2;
            let psi_r = (grid.get(i + 1, j) - grid.get(i - 1, j)) / (2.0 * grid.dr);
            let psi_uu = (grid.get(i, j + 1) - 2.0 * c + grid.get(i, j - 1)) / du2;
            let g_over_r = 1.0 / r2g;
            let gp_over_r = (g2 - r2) / (r2g * r2g) / r;
            let i_val = (profiles.i_fn)(c);
            out[grid.idx(i, j)] = psi_uu / r2
                + g_over_r * psi_rr
                + gp_over_r * psi_r
                + i_val * (profiles.i_prime)(c) / r2g
                + 2.0 * gamma * i_val / (r2g * r2g)
                + mu * (profiles.p_prime)(c);
        }
    }
    Ok(out)
}

/// Max |residual| over interior nodes.
pub fn max_abs_residual(res: &[f64]) -> f64 {
    res.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// Source term for the SOR solve of `L[psi] + source = 0`, with
/// `L = d_rr - d_r/r + d_zz`.
#[derive(Clone)]
pub enum SourceTerm {
    /// `I I'(psi) = ii0 + ii1*psi`, `P'(psi) = pp0 + pp1*psi`:
    /// source = ii0 + ii1*psi + r^2 (pp0 + pp1*psi).
    LinearProfiles {
        ii0: f64,
        ii1: f64,
        pp0: f64,
        pp1: f64,
    },
    /// Manufactured: solve `L[psi] = s(r, z)` (i.e. source = -s).
    Manufactured(Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>),
}

impl SourceTerm {
    pub fn manufactured(s: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        SourceTerm::Manufactured(Arc::new(s))
    }

    /// Source split into a psi-independent part and a linear-in-psi
    /// coefficient at the given node.
    fn affine_parts(&self, r: f64, z: f64) -> (f64, f64) {
        match self {
            SourceTerm::LinearProfiles { ii0, ii1, pp0, pp1 } => {
                (ii0 + r * r * pp0, ii1 + r * r * pp1)
            }
            SourceTerm::Manufactured(s) => (-s(r, z), 0.0),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SolverConfig {
    pub max_iterations: usize,
    /// Convergence gate on the max-norm of the SOR update.
    pub tolerance: f64,
    /// Relaxation factor, in (0, 2).
    pub omega: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iterations: 50_000,
            tolerance: 1e-11,
            omega: 1.8,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SolveStats {
    pub iterations: usize,
    pub final_update: f64,
    /// Max |discrete equation residual| after the final sweep.
    pub final_residual: f64,
}

/// Solve the axisymmetric equation by SOR on the 5-point stencil.
///
/// `grid` supplies Dirichlet values on all four edges and the initial
/// interior guess; interior nodes are overwritten. Fails with a
/// non-convergence error (carrying the update history) if the update
/// max-norm does not drop below `config.tolerance`.
pub fn solve_gs(
    mut grid: FluxGrid,
    source: &SourceTerm,
    config: &SolverConfig,
) -> Result<(FluxGrid, SolveStats)> {
    if !(config.omega > 0.0 && config.omega < 2.0) {
        return Err(Error::InvalidParameter(format!(
            "SOR relaxation must lie in (0, 2), got {}",
            config.omega
        )));
    }
    if !(config.tolerance > 0.0) {
        return Err(Error::InvalidParameter("solver tolerance must be positive".into()));
    }
    let (dr2, dz2) = (grid.dr * grid.dr, grid.dz * grid.dz);
    let mut history = Vec::new();
    let mut iterations = 0;
    loop {
        let mut max_update = 0.0_f64;
        for j in 1..grid.nz - 1 {
            for i in 1..grid.nr - 1 {
                let r = grid.r(i);
                let (a, b) = source.affine_parts(r, grid.z(j));
                let east = grid.get(i + 1, j) * (1.0 / dr2 - 1.0 / (2.0 * r * grid.dr));
                let west = grid.get(i - 1, j) * (1.0 / dr2 + 1.0 / (2.0 * r * grid.dr));
                let vert = (grid.get(i, j + 1) + grid.get(i, j - 1)) / dz2;
                let diag = 2.0 / dr2 + 2.0 / dz2 - b;
                let gauss_seidel = (east + west + vert + a) / diag;
                let old = grid.get(i, j);
                let new = (1.0 - config.omega) * old + config.omega * gauss_seidel;
                grid.set(i, j, new);
                max_update = max_update.max((new - old).abs());
            }
        }
        iterations += 1;
        history.push(max_update);
        if max_update < config.tolerance || !max_update.is_finite() {
            if !max_update.is_finite() {
                return Err(Error::NonConvergence {
                    iterations,
                    last_update: max_update,
                    history,
                });
            }
            break;
        }
        if iterations >= config.max_iterations {
            // keep a bounded tail so the diagnostic stays readable
            let tail = history.len().saturating_sub(1000);
            return Err(Error::NonConvergence {
                iterations,
                last_update: max_update,
                history: history.split_off(tail),
            });
        }
    }
    let final_residual = {
        let res = discrete_equation_residual(&grid, source);
        max_abs_residual(&res)
    };
    Ok((
        grid,
        SolveStats {
            iterations,
            final_update: *history.last().unwrap_or(&0.0),
            final_residual,
        },
    ))
}

fn discrete_equation_residual(grid: &FluxGrid, source: &SourceTerm) -> Vec<f64> {
    let mut out = vec![0.0; grid.nr * grid.nz];
    let (dr2, dz2) = (grid.dr * grid.dr, grid.dz * grid.dz);
    for j in 1..grid.nz - 1 {
        for i in 1..grid.nr - 1 {
            let r = grid.r(i);
            let c = grid.get(i, j);
            let (a, b) = source.affine_parts(r, grid.z(j));
            let psi_rr = (grid.get(i + 1, j) - 2.0 * c + grid.get(i - 1, j)) / dr2;
            let psi_r = (grid.get(i + 1, j) - grid.get(i - 1, j)) / (2.0 * grid.dr);
            let psi_zz = (grid.get(i, j + 1) - 2.0 * c + grid.get(i, j - 1)) / dz2;
            out[grid.idx(i, j)] = psi_rr - psi_r / r + psi_zz + a + b * c;
        }
    }
    out
}

/// A flux function Psi(r, z) evaluable with first partials: either analytic
/// closures or a bicubic interpolant over a [`FluxGrid`].
#[derive(Clone)]
pub struct FluxFunction {
    psi: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>,
    psi_r: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>,
    psi_z: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>,
    /// Evaluable (r, z) rectangle; None = all r > 0.
    bounds: Option<(f64, f64, f64, f64)>,
}

impl FluxFunction {
    pub fn analytic(
        psi: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        psi_r: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        psi_z: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        FluxFunction {
            psi: Arc::new(psi),
            psi_r: Arc::new(psi_r),
            psi_z: Arc::new(psi_z),
            bounds: None,
        }
    }

    /// Bicubic (Catmull-Rom) interpolation of the grid; partials are central
    /// differences of the interpolant with step = spacing/4.
    pub fn from_grid(grid: &FluxGrid) -> Self {
        let interp = Bicubic::new(grid);
        let i1 = interp.clone();
        let i2 = interp.clone();
        let i3 = interp.clone();
        let (hr, hz) = (grid.dr / 4.0, grid.dz / 4.0);
        let bounds = (
            grid.r0,
            grid.r(grid.nr - 1),
            grid.z0,
            grid.z(grid.nz - 1),
        );
        FluxFunction {
            psi: Arc::new(move |r, z| i1.eval(r, z)),
            psi_r: Arc::new(move |r, z| (i2.eval(r + hr, z) - i2.eval(r - hr, z)) / (2.0 * hr)),
            psi_z: Arc::new(move |r, z| (i3.eval(r, z + hz) - i3.eval(r, z - hz)) / (2.0 * hz)),
            bounds: Some(bounds),
        }
    }

    pub fn eval(&self, r: f64, z: f64) -> f64 {
        (self.psi)(r, z)
    }

    pub fn d_dr(&self, r: f64, z: f64) -> f64 {
        (self.psi_r)(r, z)
    }

    pub fn d_dz(&self, r: f64, z: f64) -> f64 {
        (self.psi_z)(r, z)
    }

    /// Domain for lifted 3D fields: off-axis, and (for grid-backed flux)
    /// inside the grid rectangle.
    fn lifted_domain(&self) -> Domain {
        let bounds = self.bounds;
        Domain::new(move |p: &Point3| {
            let r = p.x.hypot(p.y);
            if r <= 0.0 {
                return false;
            }
            match bounds {
                None => true,
                Some((rmin, rmax, zmin, zmax)) => {
                    r >= rmin && r <= rmax && p.z >= zmin && p.z <= zmax
                }
            }
        })
    }
}

/// Catmull-Rom bicubic interpolant with clamped edge handling.
#[derive(Clone)]
struct Bicubic {
    r0: f64,
    z0: f64,
    dr: f64,
    dz: f64,
    nr: usize,
    nz: usize,
    psi: Arc<Vec<f64>>,
}

impl Bicubic {
    fn new(grid: &FluxGrid) -> Self {
        Bicubic {
            r0: grid.r0,
            z0: grid.z0,
            dr: grid.dr,
            dz: grid.dz,
            nr: grid.nr,
            nz: grid.nz,
            psi: Arc::new(grid.values().to_vec()),
        }
    }

    #[inline]
    fn node(&self, i: isize, j: isize) -> f64 {
        let i = i.clamp(0, self.nr as isize - 1) as usize;
        let j = j.clamp(0, self.nz as isize - 1) as usize;
        self.psi[i + self.nr * j]
    }

    fn eval(&self, r: f64, z: f64) -> f64 {
        let fx = ((r - self.r0) / self.dr).clamp(0.0, (self.nr - 1) as f64);
        let fz = ((z - self.z0) / self.dz).clamp(0.0, (self.nz - 1) as f64);
        let i = (fx.floor() as isize).min(self.nr as isize - 2);
        let j = (fz.floor() as isize).min(self.nz as isize - 2);
        let tx = fx - i as f64;
        let tz = fz - j as f64;
        let mut col = [0.0; 4];
        for (k, c) in col.iter_mut().enumerate() {
            let jj = j + k as isize - 1;
            *c = catmull_rom(
                self.node(i - 1, jj),
                self.node(i, jj),
                self.node(i + 1, jj),
                self.node(i + 2, jj),
                tx,
            );
        }
        catmull_rom(col[0], col[1], col[2], col[3], tz)
    }
}

#[inline]
fn catmull_rom(p0: f64, p1: f64, p2: f64, p3: f64, t: f64) -> f64 {
    let t2 = t * t;
    let t3 = t2 * t;
    0.5 * ((2.0 * p1)
        + (-p0 + p2) * t
        + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * t2
        + (-p0 + 3.0 * p1 - 3.0 * p2 + p3) * t3)
}

/// Lift an axisymmetric flux function to a 3D field:
/// `B = (Psi_z/r) e_r + (I(Psi)/r) e_phi - (Psi_r/r) e_z`.
pub fn gs_field(flux: &FluxFunction, i_fn: &SurfaceFunction) -> VectorField {
    let f = flux.clone();
    let i_fn = i_fn.clone();
    let domain = flux.lifted_domain();
    VectorField::new(move |p: &Point3| {
        let r = p.x.hypot(p.y);
        let (er_x, er_y) = (p.x / r, p.y / r);
        let b_r = f.d_dz(r, p.z) / r;
        let b_phi = i_fn.eval(f.eval(r, p.z)) / r;
        let b_z = -f.d_dr(r, p.z) / r;
        Vec3::new(
            b_r * er_x - b_phi * er_y,
            b_r * er_y + b_phi * er_x,
            b_z,
        )
    })
    .with_domain(domain)
}

/// Full isotropic state from an axisymmetric flux function: field per
/// [`gs_field`], pressure `P(Psi)`, surface label Psi itself.
pub fn gs_state(flux: &FluxFunction, i_fn: &SurfaceFunction, p_fn: &SurfaceFunction) -> MhdState {
    let b = gs_field(flux, i_fn);
    let domain = b.domain().clone();
    let fp = flux.clone();
    let p_fn = p_fn.clone();
    let pressure = ScalarField::new(move |p: &Point3| {
        let r = p.x.hypot(p.y);
        p_fn.eval(fp.eval(r, p.z))
    })
    .with_domain(domain.clone());
    let fl = flux.clone();
    let label = ScalarField::new(move |p: &Point3| {
        let r = p.x.hypot(p.y);
        fl.eval(r, p.z)
    })
    .with_domain(domain.clone());
    MhdState {
        b,
        pressure,
        surface_label: label,
        domain,
    }
}

/// Lift a helical flux function Psi(r, u), `u = z - gamma*phi`, to 3D:
/// `B_r = Psi_u/r`, `B_phi = (r I + gamma Psi_r)/(r^2+gamma^2)`,
/// `B_z = (gamma I - r Psi_r)/(r^2+gamma^2)`.
///
/// The angle is taken as `atan2(y, x)`; evaluation is continuous away from
/// the `phi = pi` branch cut.
pub fn jfko_field(flux: &FluxFunction, i_fn: &SurfaceFunction, gamma: f64) -> VectorField {
    let f = flux.clone();
    let i_fn = i_fn.clone();
    let g2 = gamma * gamma;
    let bounds = flux.bounds;
    let domain = Domain::new(move |p: &Point3| {
        let r = p.x.hypot(p.y);
        if r <= 0.0 {
            return false;
        }
        match bounds {
            None => true,
            Some((rmin, rmax, umin, umax)) => {
                let u = p.z - gamma * p.y.atan2(p.x);
                r >= rmin && r <= rmax && u >= umin && u <= umax
            }
        }
    });
    VectorField::new(move |p: &Point3| {
        let r = p.x.hypot(p.y);
        let u = p.z - gamma * p.y.atan2(p.x);
        let (er_x, er_y) = (p.x / r, p.y / r);
        let denom = r * r + g2;
        let i_val = i_fn.eval(f.eval(r, u));
        let psi_r = f.d_dr(r, u);
        let b_r = f.d_dz(r, u) / r;
        let b_phi = (r * i_val + gamma * psi_r) / denom;
        let b_z = (gamma * i_val - r * psi_r) / denom;
        Vec3::new(
            b_r * er_x - b_phi * er_y,
            b_r * er_y + b_phi * er_x,
            b_z,
        )
    })
    .with_domain(domain)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{div, mhd_residual, FdScheme};
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    /// Quartic manufactured solution: `L[psi] = (beta + 2 alpha) r^2`, so the
    /// equation holds with I const and `P' = -(beta + 2 alpha)`.
    fn solovev(alpha: f64, beta: f64) -> impl Fn(f64, f64) -> f64 {
        move |r, z| beta / 8.0 * r.powi(4) + alpha * r * r * z * z
    }

    #[test]
    fn constant_flux_zero_profiles_residual_vanishes() {
        let g = FluxGrid::from_fn(1.0, 0.0, 0.1, 0.1, 9, 9, |_, _| 3.7).unwrap();
        let res = gs_residual(&g, &ProfilePair::trivial()).unwrap();
        assert_eq!(max_abs_residual(&res), 0.0);
    }

    #[test]
    fn grid_rejects_axis_and_degenerate_shapes() {
        assert!(matches!(
            FluxGrid::new(0.0, 0.0, 0.1, 0.1, 5, 5),
            Err(Error::SingularAxis(_))
        ));
        assert!(FluxGrid::new(1.0, 0.0, 0.1, 0.1, 2, 5).is_err());
    }

    #[test]
    fn quadratic_solovev_is_stencil_exact() {
        // beta = 0 keeps psi quadratic per direction, so the 5-point stencil
        // differentiates it exactly
        let alpha = 0.8;
        let g = FluxGrid::from_fn(0.5, -0.5, 0.05, 0.05, 21, 21, solovev(alpha, 0.0)).unwrap();
        let profiles = ProfilePair::linear(1.3, 0.0, 0.0, -2.0 * alpha);
        let res = gs_residual(&g, &profiles).unwrap();
        assert!(max_abs_residual(&res) < 1e-10, "{}", max_abs_residual(&res));
    }

    #[test]
    fn quartic_solovev_residual_converges_at_order_two() {
        let (alpha, beta) = (0.6, 1.1);
        let profiles = ProfilePair::linear(0.0, 0.0, 0.0, -(beta + 2.0 * alpha));
        let mut norms = Vec::new();
        for n in [11, 21, 41] {
            let d = 1.0 / (n as f64 - 1.0);
            let g = FluxGrid::from_fn(1.0, 0.0, d, d, n, n, solovev(alpha, beta)).unwrap();
            norms.push(max_abs_residual(&gs_residual(&g, &profiles).unwrap()));
        }
        let slope = (norms[0] / norms[2]).log2() / 2.0;
        assert!((slope - 2.0).abs() < 0.1, "slope {slope}, norms {norms:?}");
    }

    #[test]
    fn jfko_at_gamma_zero_matches_gs_after_r2_scaling() {
        let g = FluxGrid::from_fn(0.7, -0.4, 0.04, 0.05, 25, 19, |r, z| {
            (1.3 * r).sin() * (0.9 * z).cos() + 0.2 * r * r
        })
        .unwrap();
        let profiles = ProfilePair::linear(0.4, 0.7, 0.0, -1.2);
        let gs = gs_residual(&g, &profiles).unwrap();
        let jf = jfko_residual(&g, &profiles, 0.0, 1.0).unwrap();
        for j in 1..g.nz - 1 {
            for i in 1..g.nr - 1 {
                let r = g.r(i);
                let scaled = jf[g.idx(i, j)] * r * r;
                let reference = gs[g.idx(i, j)];
                assert!(
                    (scaled - reference).abs() <= 1e-13 * (1.0 + reference.abs()),
                    "mismatch at ({i},{j}): {scaled} vs {reference}"
                );
            }
        }
    }

    #[test]
    fn jfko_manufactured_radial_solution() {
        // psi(r) = -(p'/8)(r^4 + 2 gamma^2 r^2) solves the helical equation
        // with I = 0 and constant P' for any gamma
        let gamma = 0.8;
        let pp = 1.5;
        let psi = move |r: f64, _u: f64| -(pp / 8.0) * (r.powi(4) + 2.0 * gamma * gamma * r * r);
        let profiles = ProfilePair::linear(0.0, 0.0, 0.0, pp);
        let mut norms = Vec::new();
        for n in [41, 81, 161] {
            let d = 1.0 / (n as f64 - 1.0);
            let g = FluxGrid::from_fn(1.0, 0.0, d, d, n, n, psi).unwrap();
            norms.push(max_abs_residual(&jfko_residual(&g, &profiles, gamma, 1.0).unwrap()));
        }
        assert!(norms[0] < 1e-4, "coarse norm {}", norms[0]);
        let slope = (norms[0] / norms[2]).log2() / 2.0;
        assert!((slope - 2.0).abs() < 0.15, "slope {slope}, norms {norms:?}");
    }

    #[test]
    fn solve_zero_source_zero_boundary_gives_zero() {
        let g = FluxGrid::new(1.0, 0.0, 0.1, 0.1, 12, 12).unwrap();
        let (solved, stats) = solve_gs(
            g,
            &SourceTerm::manufactured(|_, _| 0.0),
            &SolverConfig::default(),
        )
        .unwrap();
        assert!(stats.iterations < 500);
        for v in solved.values() {
            assert_abs_diff_eq!(*v, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn solver_convergence_order_two_on_trig_solution() {
        let exact = |r: f64, z: f64| (1.7 * r).sin() * (2.3 * z).cos();
        // L[psi] for the trig field, computed by hand
        let source = move |r: f64, z: f64| {
            let (sr, cr) = (1.7 * r).sin_cos();
            let cz = (2.3 * z).cos();
            (-1.7 * 1.7 * sr - 1.7 * cr / r - 2.3 * 2.3 * sr) * cz
        };
        let mut errs = Vec::new();
        for n in [9, 17, 33] {
            let d = 1.0 / (n as f64 - 1.0);
            let mut g = FluxGrid::new(1.0, 0.0, d, d, n, n).unwrap();
            for j in 0..n {
                for i in 0..n {
                    if i == 0 || j == 0 || i == n - 1 || j == n - 1 {
                        g.set(i, j, exact(g.r(i), g.z(j)));
                    }
                }
            }
            let (solved, _) = solve_gs(
                g,
                &SourceTerm::manufactured(source),
                &SolverConfig::default(),
            )
            .unwrap();
            let mut err = 0.0_f64;
            for j in 0..n {
                for i in 0..n {
                    err = err.max((solved.get(i, j) - exact(solved.r(i), solved.z(j))).abs());
                }
            }
            errs.push(err);
        }
        let slope = (errs[0] / errs[2]).log2() / 2.0;
        assert!((slope - 2.0).abs() < 0.2, "slope {slope}, errors {errs:?}");
    }

    #[test]
    fn solver_reports_non_convergence_with_history() {
        let g = FluxGrid::from_fn(1.0, 0.0, 0.1, 0.1, 20, 20, |r, z| r + z).unwrap();
        let config = SolverConfig {
            max_iterations: 5,
            tolerance: 1e-14,
            omega: 1.99,
            };
        match solve_gs(g, &SourceTerm::manufactured(|_, _| 1.0), &config) {
            Err(Error::NonConvergence {
                iterations,
                history,
                ..
            }) => {
                assert_eq!(iterations, 5);
                assert_eq!(history.len(), 5);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn discrete_maximum_principle_for_laplace_like_case() {
        let boundary = |r: f64, z: f64| (r - 1.5).powi(2) - z;
        let n = 17;
        let mut g = FluxGrid::new(1.0, 0.0, 1.0 / 16.0, 1.0 / 16.0, n, n).unwrap();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for j in 0..n {
            for i in 0..n {
                if i == 0 || j == 0 || i == n - 1 || j == n - 1 {
                    let v = boundary(g.r(i), g.z(j));
                    g.set(i, j, v);
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
            }
        }
        let (solved, _) = solve_gs(
            g,
            &SourceTerm::manufactured(|_, _| 0.0),
            &SolverConfig::default(),
        )
        .unwrap();
        for v in solved.values() {
            assert!(*v >= lo - 1e-9 && *v <= hi + 1e-9, "value {v} outside [{lo}, {hi}]");
        }
    }

    #[test]
    fn gs_field_hand_check_and_divergence() {
        // psi = r^2/2, I = 0: B_r = 0, B_z = -psi_r/r = -1
        let flux = FluxFunction::analytic(|r, _| r * r / 2.0, |r, _| r, |_, _| 0.0);
        let b = gs_field(&flux, &SurfaceFunction::constant(0.0));
        let p = Point3::new(0.8, 0.3, 0.2);
        assert_relative_eq!(b.eval(&p).unwrap(), Vec3::new(0.0, 0.0, -1.0), epsilon = 1e-12);

        // a non-trivial flux: div B must vanish at truncation order
        let flux2 = FluxFunction::analytic(
            |r, z| (1.2 * r).sin() * (0.7 * z).cos() + r * r * z,
            |r, z| 1.2 * (1.2 * r).cos() * (0.7 * z).cos() + 2.0 * r * z,
            |r, z| -0.7 * (1.2 * r).sin() * (0.7 * z).sin() + r * r,
        );
        let b2 = gs_field(&flux2, &SurfaceFunction::affine(0.5, 0.3));
        let d = div(&b2, &p, FdScheme::central4(1e-4).unwrap()).unwrap();
        assert_abs_diff_eq!(d, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn gs_state_of_solovev_flux_is_an_equilibrium() {
        let (alpha, beta) = (0.6, 1.1);
        let flux = FluxFunction::analytic(
            move |r, z| beta / 8.0 * r.powi(4) + alpha * r * r * z * z,
            move |r, z| beta / 2.0 * r.powi(3) + 2.0 * alpha * r * z * z,
            move |r, z| 2.0 * alpha * r * r * z,
        );
        let st = gs_state(
            &flux,
            &SurfaceFunction::constant(0.7),
            &SurfaceFunction::affine(10.0, -(beta + 2.0 * alpha)),
        );
        let scheme = FdScheme::central4(1e-4).unwrap();
        for (r, z) in [(0.9, 0.1), (1.4, -0.3), (2.0, 0.5), (1.1, 0.0)] {
            let p = Point3::new(r * 0.6, r * 0.8, z);
            let res = mhd_residual(&st, &p, scheme).unwrap();
            assert!(res.norm() < 1e-8, "residual {} at {p}", res.norm());
        }
    }

    #[test]
    fn jfko_field_reduces_to_gs_at_gamma_zero() {
        let flux = FluxFunction::analytic(
            |r, z| (1.2 * r).sin() * (0.7 * z).cos(),
            |r, z| 1.2 * (1.2 * r).cos() * (0.7 * z).cos(),
            |r, z| -0.7 * (1.2 * r).sin() * (0.7 * z).sin(),
        );
        let i_fn = SurfaceFunction::affine(0.4, 1.1);
        let gs = gs_field(&flux, &i_fn);
        let jf = jfko_field(&flux, &i_fn, 0.0);
        for p in [
            Point3::new(1.0, 0.2, 0.3),
            Point3::new(-0.5, 0.9, -0.7),
            Point3::new(0.3, -1.2, 1.4),
        ] {
            assert_relative_eq!(gs.eval(&p).unwrap(), jf.eval(&p).unwrap(), epsilon = 1e-13);
        }
    }

    #[test]
    fn jfko_field_is_helically_invariant_and_solenoidal() {
        let gamma = 0.6;
        let flux = FluxFunction::analytic(
            |r, u| (0.9 * r).cos() * (1.1 * u).sin() + 0.3 * r * r,
            |r, u| -0.9 * (0.9 * r).sin() * (1.1 * u).sin() + 0.6 * r,
            |r, u| 1.1 * (0.9 * r).cos() * (1.1 * u).cos(),
        );
        let i_fn = SurfaceFunction::affine(0.2, 0.5);
        let b = jfko_field(&flux, &i_fn, gamma);

        // same (r, u): rotate by dphi and raise z by gamma*dphi
        let (r, phi, z) = (1.3_f64, 0.4_f64, 0.2);
        let dphi = 0.7;
        let p1 = Point3::new(r * phi.cos(), r * phi.sin(), z);
        let p2 = Point3::new(
            r * (phi + dphi).cos(),
            r * (phi + dphi).sin(),
            z + gamma * dphi,
        );
        let (b1, b2) = (b.eval(&p1).unwrap(), b.eval(&p2).unwrap());
        let cyl = |v: Vec3, ph: f64| {
            Vec3::new(
                v.x * ph.cos() + v.y * ph.sin(),
                -v.x * ph.sin() + v.y * ph.cos(),
                v.z,
            )
        };
        assert_relative_eq!(cyl(b1, phi), cyl(b2, phi + dphi), epsilon = 1e-12);

        let d = div(&b, &p1, FdScheme::central4(1e-4).unwrap()).unwrap();
        assert_abs_diff_eq!(d, 0.0, epsilon = 1e-8);
    }

    #[test]
    fn bicubic_lift_tracks_grid_values() {
        let f = |r: f64, z: f64| (r - 1.5).powi(2) * (z + 0.3) + r;
        let g = FluxGrid::from_fn(1.0, -0.5, 1.0 / 32.0, 1.0 / 32.0, 33, 33, f).unwrap();
        let flux = FluxFunction::from_grid(&g);
        // knot reproduction
        assert_relative_eq!(flux.eval(g.r(7), g.z(11)), f(g.r(7), g.z(11)), epsilon = 1e-12);
        // off-knot accuracy and derivative accuracy
        for (r, z) in [(1.21, -0.13), (1.57, 0.29), (1.88, -0.41)] {
            assert_abs_diff_eq!(flux.eval(r, z), f(r, z), epsilon = 1e-4);
            assert_abs_diff_eq!(flux.d_dr(r, z), 2.0 * (r - 1.5) * (z + 0.3) + 1.0, epsilon = 1e-3);
            assert_abs_diff_eq!(flux.d_dz(r, z), (r - 1.5).powi(2), epsilon = 1e-3);
        }
    }

    #[test]
    fn solved_grid_lifts_to_small_mhd_residual() {
        // affine-source case: solve with Dirichlet data from the quartic
        // manufactured solution, lift, and check force balance
        let (alpha, beta) = (0.6, 1.1);
        let exact = solovev(alpha, beta);
        let n = 65;
        let d = 1.0 / (n as f64 - 1.0);
        let mut g = FluxGrid::new(1.0, 0.0, d, d, n, n).unwrap();
        for j in 0..n {
            for i in 0..n {
                if i == 0 || j == 0 || i == n - 1 || j == n - 1 {
                    g.set(i, j, exact(g.r(i), g.z(j)));
                }
            }
        }
        let source = SourceTerm::LinearProfiles {
            ii0: 0.0,
            ii1: 0.0,
            pp0: -(beta + 2.0 * alpha),
            pp1: 0.0,
        };
        let (solved, stats) = solve_gs(g, &source, &SolverConfig::default()).unwrap();
        assert!(stats.final_residual < 1e-8, "{stats:?}");
        let flux = FluxFunction::from_grid(&solved);
        let st = gs_state(
            &flux,
            &SurfaceFunction::constant(0.0),
            &SurfaceFunction::affine(5.0, -(beta + 2.0 * alpha)),
        );
        let scheme = FdScheme::central2(1e-3).unwrap();
        for (r, z) in [(1.3, 0.5), (1.6, 0.4), (1.2, 0.7)] {
            let p = Point3::new(r, 0.0, z);
            let res = mhd_residual(&st, &p, scheme).unwrap();
            assert!(res.norm() < 5e-2, "residual {} at {p}", res.norm());
        }
    }

    #[test]
    fn csv_round_trip() {
        let g = FluxGrid::from_fn(1.0, -0.25, 0.125, 0.0625, 9, 5, |r, z| r * z + r).unwrap();
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        let back = FluxGrid::read_csv(std::io::BufReader::new(&buf[..])).unwrap();
        assert_eq!(back.nr, 9);
        assert_eq!(back.nz, 5);
        assert_eq!(back.values(), g.values());
        assert_relative_eq!(back.dr, 0.125, epsilon = 1e-12);
    }
}
