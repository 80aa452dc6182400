//! Field exporters: VTK legacy ASCII structured grids, CSV point samples,
//! and contour-ready half-plane slices. Out-of-domain lattice nodes are
//! written as zeros with an `in_domain` mask so files stay parseable.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::field::{CglState, MhdState, Point3};
use crate::gs::FluxGrid;

/// Uniform sampling lattice over an axis-aligned box.
#[derive(Debug, Clone, Copy)]
pub struct BoxGrid {
    pub lo: Point3,
    pub hi: Point3,
    pub n: [usize; 3],
}

impl BoxGrid {
    pub fn new(lo: Point3, hi: Point3, n: [usize; 3]) -> Result<Self> {
        if n.iter().any(|&k| k < 2) {
            return Err(Error::InvalidParameter(format!(
                "export lattice needs at least 2 nodes per axis, got {n:?}"
            )));
        }
        if !(lo.x < hi.x && lo.y < hi.y && lo.z < hi.z) {
            return Err(Error::InvalidParameter(
                "export box must have positive extent on every axis".into(),
            ));
        }
        Ok(BoxGrid { lo, hi, n })
    }

    /// Cube of side 2r centered at the origin.
    pub fn centered_cube(r: f64, n: usize) -> Result<Self> {
        BoxGrid::new(
            Point3::new(-r, -r, -r),
            Point3::new(r, r, r),
            [n, n, n],
        )
    }

    pub fn spacing(&self) -> [f64; 3] {
        [
            (self.hi.x - self.lo.x) / (self.n[0] - 1) as f64,
            (self.hi.y - self.lo.y) / (self.n[1] - 1) as f64,
            (self.hi.z - self.lo.z) / (self.n[2] - 1) as f64,
        ]
    }

    /// All nodes, x varying fastest (VTK point order).
    pub fn points(&self) -> Vec<Point3> {
        let d = self.spacing();
        let mut out = Vec::with_capacity(self.n[0] * self.n[1] * self.n[2]);
        for k in 0..self.n[2] {
            for j in 0..self.n[1] {
                for i in 0..self.n[0] {
                    out.push(Point3::new(
                        self.lo.x + d[0] * i as f64,
                        self.lo.y + d[1] * j as f64,
                        self.lo.z + d[2] * k as f64,
                    ));
                }
            }
        }
        out
    }
}

struct Sampled {
    /// (B, scalar columns), zeros when outside the state's domain.
    rows: Vec<([f64; 3], Vec<f64>, bool)>,
}

fn sample_mhd(st: &MhdState, points: &[Point3]) -> Sampled {
    let rows = points
        .iter()
        .map(|p| match (st.b.eval(p), st.pressure.eval(p)) {
            (Ok(b), Ok(pr)) => ([b.x, b.y, b.z], vec![pr], true),
            _ => ([0.0; 3], vec![0.0], false),
        })
        .collect();
    Sampled { rows }
}

fn sample_cgl(st: &CglState, points: &[Point3]) -> Sampled {
    let rows = points
        .iter()
        .map(|p| {
            match (st.b.eval(p), st.p_perp.eval(p), st.tau.eval(p), st.p_par(p)) {
                (Ok(b), Ok(pp), Ok(t), Ok(ppar)) => {
                    ([b.x, b.y, b.z], vec![pp, ppar, t], true)
                }
                _ => ([0.0; 3], vec![0.0, 0.0, 0.0], false),
            }
        })
        .collect();
    Sampled { rows }
}

fn write_vtk<W: Write>(
    mut w: W,
    title: &str,
    grid: &BoxGrid,
    scalar_names: &[&str],
    data: &Sampled,
) -> Result<()> {
    let d = grid.spacing();
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "{title}")?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET STRUCTURED_POINTS")?;
    writeln!(w, "DIMENSIONS {} {} {}", grid.n[0], grid.n[1], grid.n[2])?;
    writeln!(w, "ORIGIN {} {} {}", grid.lo.x, grid.lo.y, grid.lo.z)?;
    writeln!(w, "SPACING {} {} {}", d[0], d[1], d[2])?;
    writeln!(w, "POINT_DATA {}", data.rows.len())?;
    writeln!(w, "VECTORS B double")?;
    for (b, _, _) in &data.rows {
        writeln!(w, "{:.17e} {:.17e} {:.17e}", b[0], b[1], b[2])?;
    }
    for (col, name) in scalar_names.iter().enumerate() {
        writeln!(w, "SCALARS {name} double 1")?;
        writeln!(w, "LOOKUP_TABLE default")?;
        for (_, scalars, _) in &data.rows {
            writeln!(w, "{:.17e}", scalars[col])?;
        }
    }
    writeln!(w, "SCALARS in_domain double 1")?;
    writeln!(w, "LOOKUP_TABLE default")?;
    for (_, _, ok) in &data.rows {
        writeln!(w, "{}", if *ok { 1 } else { 0 })?;
    }
    Ok(())
}

pub fn write_vtk_mhd<W: Write>(w: W, st: &MhdState, grid: &BoxGrid) -> Result<()> {
    let data = sample_mhd(st, &grid.points());
    write_vtk(w, "isotropic equilibrium", grid, &["P"], &data)
}

pub fn write_vtk_cgl<W: Write>(w: W, st: &CglState, grid: &BoxGrid) -> Result<()> {
    let data = sample_cgl(st, &grid.points());
    write_vtk(
        w,
        "anisotropic equilibrium",
        grid,
        &["p_perp", "p_par", "tau"],
        &data,
    )
}

/// 2D flux grid as a one-slab VTK structured-points file with scalar `psi`.
pub fn write_vtk_flux_grid<W: Write>(mut w: W, grid: &FluxGrid) -> Result<()> {
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "flux function")?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET STRUCTURED_POINTS")?;
    writeln!(w, "DIMENSIONS {} {} 1", grid.nr, grid.nz)?;
    writeln!(w, "ORIGIN {} {} 0", grid.r0, grid.z0)?;
    writeln!(w, "SPACING {} {} 1", grid.dr, grid.dz)?;
    writeln!(w, "POINT_DATA {}", grid.nr * grid.nz)?;
    writeln!(w, "SCALARS psi double 1")?;
    writeln!(w, "LOOKUP_TABLE default")?;
    for v in grid.values() {
        writeln!(w, "{v:.17e}")?;
    }
    Ok(())
}

fn write_csv_rows<W: Write>(
    mut w: W,
    header: &str,
    points: &[Point3],
    data: &Sampled,
) -> Result<()> {
    writeln!(w, "{header}")?;
    for (p, (b, scalars, ok)) in points.iter().zip(&data.rows) {
        if !ok {
            continue;
        }
        write!(
            w,
            "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
            p.x, p.y, p.z, b[0], b[1], b[2]
        )?;
        for s in scalars {
            write!(w, ",{s:.17e}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn write_csv_mhd<W: Write>(w: W, st: &MhdState, points: &[Point3]) -> Result<()> {
    let data = sample_mhd(st, points);
    write_csv_rows(w, "x,y,z,bx,by,bz,p", points, &data)
}

pub fn write_csv_cgl<W: Write>(w: W, st: &CglState, points: &[Point3]) -> Result<()> {
    let data = sample_cgl(st, points);
    write_csv_rows(w, "x,y,z,bx,by,bz,p_perp,p_par,tau", points, &data)
}

/// Parse a sample CSV back into (point, remaining columns) rows. The header
/// line is skipped; column meaning is up to the caller.
pub fn read_csv_samples<R: BufRead>(r: R) -> Result<Vec<(Point3, Vec<f64>)>> {
    let mut out = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || (lineno == 0 && line.starts_with('x')) {
            continue;
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))
            })
            .collect::<Result<_>>()?;
        if vals.len() < 3 {
            return Err(Error::Parse(format!("short sample row at line {}", lineno + 1)));
        }
        out.push((Point3::new(vals[0], vals[1], vals[2]), vals[3..].to_vec()));
    }
    Ok(out)
}

/// Contour-ready (x, z) half-plane slice at y = 0, x >= 0: columns are
/// pressure quantities against position. For an isotropic state the columns
/// are P and the magnetic energy density |B|^2/2.
pub fn write_slice_mhd<W: Write>(
    mut w: W,
    st: &MhdState,
    x_max: f64,
    z_max: f64,
    n: usize,
) -> Result<()> {
    writeln!(w, "x,z,p,magnetic_energy")?;
    for (p, on) in slice_points(x_max, z_max, n) {
        if !on {
            continue;
        }
        if let (Ok(b), Ok(pr)) = (st.b.eval(&p), st.pressure.eval(&p)) {
            writeln!(
                w,
                "{:.17e},{:.17e},{:.17e},{:.17e}",
                p.x,
                p.z,
                pr,
                0.5 * b.norm_squared()
            )?;
        }
    }
    Ok(())
}

/// Anisotropic slice: p_perp, p_par, and magnetic energy density.
pub fn write_slice_cgl<W: Write>(
    mut w: W,
    st: &CglState,
    x_max: f64,
    z_max: f64,
    n: usize,
) -> Result<()> {
    writeln!(w, "x,z,p_perp,p_par,magnetic_energy")?;
    for (p, on) in slice_points(x_max, z_max, n) {
        if !on {
            continue;
        }
        if let (Ok(b), Ok(pp), Ok(ppar)) = (st.b.eval(&p), st.p_perp.eval(&p), st.p_par(&p)) {
            writeln!(
                w,
                "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
                p.x,
                p.z,
                pp,
                ppar,
                0.5 * b.norm_squared()
            )?;
        }
    }
    Ok(())
}

fn slice_points(x_max: f64, z_max: f64, n: usize) -> Vec<(Point3, bool)> {
    let n = n.max(2);
    let mut out = Vec::with_capacity(n * n);
    for k in 0..n {
        for i in 0..n {
            let x = x_max * i as f64 / (n - 1) as f64;
            let z = -z_max + 2.0 * z_max * k as f64 / (n - 1) as f64;
            out.push((Point3::new(x, 0.0, z), true));
        }
    }
    out
}
