//! Orthonormal coordinate frames and conversion to Cartesian positions and
//! vector components.

use crate::error::{Error, Result};
use crate::field::{Point3, Vec3};

/// Coordinate frame for positions and vector components.
///
/// Coordinate conventions:
/// - `Cylindrical`: coords (r, phi, z), basis (e_r, e_phi, e_z)
/// - `Spherical`: coords (rho, theta, phi) with theta the polar angle from
///   the z axis, basis (e_rho, e_theta, e_phi)
/// - `Helical { gamma }`: coords (r, phi, u) with u = z - gamma*phi the
///   helical coordinate, vector components in the cylindrical basis
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Frame {
    Cartesian,
    Cylindrical,
    Spherical,
    Helical { gamma: f64 },
}

/// Convert a position and vector components from `frame` to Cartesian.
///
/// `coords` are frame coordinates, `components` are vector components on the
/// frame's orthonormal basis at that position.
pub fn frame_to_cartesian(frame: Frame, coords: Vec3, components: Vec3) -> Result<(Point3, Vec3)> {
    match frame {
        Frame::Cartesian => Ok((Point3::from(coords), components)),
        Frame::Cylindrical => {
            let (r, phi, z) = (coords.x, coords.y, coords.z);
            if r <= 0.0 {
                return Err(Error::SingularAxis(format!(
                    "cylindrical basis undefined at r = {r}"
                )));
            }
            let (s, c) = phi.sin_cos();
            let e_r = Vec3::new(c, s, 0.0);
            let e_phi = Vec3::new(-s, c, 0.0);
            let e_z = Vec3::z();
            let p = Point3::new(r * c, r * s, z);
            Ok((p, e_r * components.x + e_phi * components.y + e_z * components.z))
        }
        Frame::Spherical => {
            let (rho, theta, phi) = (coords.x, coords.y, coords.z);
            if rho <= 0.0 {
                return Err(Error::SingularAxis(format!(
                    "spherical basis undefined at rho = {rho}"
                )));
            }
            let (st, ct) = theta.sin_cos();
            let (sp, cp) = phi.sin_cos();
            let e_rho = Vec3::new(st * cp, st * sp, ct);
            let e_theta = Vec3::new(ct * cp, ct * sp, -st);
            let e_phi = Vec3::new(-sp, cp, 0.0);
            let p = Point3::from(e_rho * rho);
            Ok((
                p,
                e_rho * components.x + e_theta * components.y + e_phi * components.z,
            ))
        }
        Frame::Helical { gamma } => {
            if gamma == 0.0 {
                return Err(Error::InvalidParameter(
                    "helical frame requires gamma != 0".into(),
                ));
            }
            let (r, phi, u) = (coords.x, coords.y, coords.z);
            let z = u + gamma * phi;
            frame_to_cartesian(Frame::Cylindrical, Vec3::new(r, phi, z), components)
        }
    }
}
