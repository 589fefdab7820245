//! Polyhedral inner approximation of the glideslope cone.
//!
//! The glideslope constraint keeps the vehicle inside a cone of half-angle
//! `gamma_gs` about local vertical (apex at the landing site). An exact
//! second-order-cone form exists, but strategy flags want a small fixed set
//! of affine rows, so we inscribe a `k`-faced polyhedral cone:
//!
//! ```text
//! cos(g)*cos(b_i)*r_x + cos(g)*sin(b_i)*r_y - cos(pi/k)*sin(g)*r_z <= 0
//! b_i = (2i + 1)*pi/k,  i = 0..k
//! ```
//!
//! The face normals sit at the bisector azimuths `b_i`, so the polyhedron
//! touches the true cone along the rays at azimuths `2*pi*i/k` and lies
//! inside it everywhere else (conservative: a polyhedron-feasible point is
//! always cone-feasible). The `cos(pi/k)` factor is what pulls the faces
//! inward; without it the polyhedron would circumscribe the cone instead.
//! Scaling rows by `cos(gamma_gs)` keeps coefficients bounded and gives a
//! smooth limit at `gamma_gs = pi/2`, where every row degenerates to the
//! half-space `r_z >= 0`.

use std::f64::consts::PI;

use nalgebra::Vector3;

use crate::error::{Error, Result};

/// Affine half-space rows `normals[i] . r <= offsets[i]` approximating the
/// glideslope cone from inside.
#[derive(Debug, Clone, PartialEq)]
pub struct GlideslopeHalfspaces {
    pub normals: Vec<Vector3<f64>>,
    pub offsets: Vec<f64>,
}

impl GlideslopeHalfspaces {
    pub fn faces(&self) -> usize {
        self.normals.len()
    }

    /// Largest row value at `r`; `<= 0` means `r` is inside the polyhedron.
    pub fn max_row(&self, r: &Vector3<f64>) -> f64 {
        self.normals
            .iter()
            .zip(&self.offsets)
            .map(|(n, h)| n.dot(r) - h)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Build the `k`-faced inscribed approximation of the cone with half-angle
/// `gamma_gs` (radians, measured from vertical).
pub fn glideslope_matrix(gamma_gs: f64, faces: usize) -> Result<GlideslopeHalfspaces> {
    if !(gamma_gs > 0.0 && gamma_gs <= PI / 2.0) {
        return Err(Error::InvalidParameter {
            field: "gamma_gs",
            reason: format!("need 0 < gamma_gs <= pi/2, got {gamma_gs}"),
        });
    }
    if faces < 3 {
        return Err(Error::InvalidParameter {
            field: "faces",
            reason: format!("polyhedral cone needs >= 3 faces, got {faces}"),
        });
    }
    let (sin_g, cos_g) = gamma_gs.sin_cos();
    let inscribe = (PI / faces as f64).cos();
    let mut normals = Vec::with_capacity(faces);
    for i in 0..faces {
        let beta = (2 * i + 1) as f64 * PI / faces as f64;
        normals.push(Vector3::new(cos_g * beta.cos(), cos_g * beta.sin(), -inscribe * sin_g));
    }
    Ok(GlideslopeHalfspaces { normals, offsets: vec![0.0; faces] })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn apex_axis_is_always_inside() {
        for gamma_deg in [1.0, 20.0, 45.0, 70.0, 89.0, 90.0] {
            for faces in [3, 4, 6, 13] {
                let hs = glideslope_matrix((gamma_deg as f64).to_radians(), faces).unwrap();
                assert!(
                    hs.max_row(&Vector3::new(0.0, 0.0, 123.0)) < 0.0,
                    "axis point escaped at gamma={gamma_deg} faces={faces}"
                );
            }
        }
    }

    #[test]
    fn forty_five_degree_four_face_boundary_point() {
        // (1, 0, 1) sits at 45 degrees from vertical, azimuth 0 — a touching
        // ray of the 4-face polyhedron, so the max row is exactly zero.
        let hs = glideslope_matrix(45.0_f64.to_radians(), 4).unwrap();
        let r = Vector3::new(1.0, 0.0, 1.0);
        assert_abs_diff_eq!(hs.max_row(&r), 0.0, epsilon = 1e-12);
        // and it is attained by the first face
        assert_abs_diff_eq!(hs.normals[0].dot(&r), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn shallow_cone_contains_steep_trajectory_point() {
        // 100 m east/north at 1 km altitude is well inside an 80-degree cone.
        let hs = glideslope_matrix(80.0_f64.to_radians(), 4).unwrap();
        let r = Vector3::new(100.0, 100.0, 1000.0);
        assert!(hs.max_row(&r) < 0.0);
        for n in &hs.normals {
            assert!(n.dot(&r) <= 0.0);
        }
    }

    #[test]
    fn vertical_limit_degenerates_to_upper_half_space() {
        let hs = glideslope_matrix(PI / 2.0, 4).unwrap();
        for n in &hs.normals {
            assert_abs_diff_eq!(n.x, 0.0, epsilon = 1e-15);
            assert_abs_diff_eq!(n.y, 0.0, epsilon = 1e-15);
            assert!(n.z < 0.0);
        }
        assert!(hs.max_row(&Vector3::new(500.0, -500.0, 0.1)) < 0.0);
        assert!(hs.max_row(&Vector3::new(0.0, 0.0, -0.1)) > 0.0);
    }

    #[test]
    fn every_row_points_away_from_vertical() {
        for gamma_deg in 1..=90 {
            let hs = glideslope_matrix((gamma_deg as f64).to_radians(), 4).unwrap();
            for n in &hs.normals {
                assert!(n.dot(&Vector3::z()) < 0.0, "gamma={gamma_deg}");
            }
            assert!(hs.offsets.iter().all(|h| *h >= 0.0));
        }
    }

    #[test]
    fn touching_rays_lie_exactly_on_polyhedron_and_cone() {
        for faces in [3, 4, 5, 8] {
            for gamma_deg in [15.0_f64, 45.0, 80.0] {
                let gamma = gamma_deg.to_radians();
                let hs = glideslope_matrix(gamma, faces).unwrap();
                for j in 0..faces {
                    let psi = 2.0 * PI * j as f64 / faces as f64;
                    let r = Vector3::new(gamma.tan() * psi.cos(), gamma.tan() * psi.sin(), 1.0);
                    assert_abs_diff_eq!(hs.max_row(&r), 0.0, epsilon = 1e-12);
                }
            }
        }
    }

    proptest! {
        /// Conservatism: any polyhedron-feasible point is inside the true cone.
        #[test]
        fn polyhedron_is_contained_in_the_cone(
            gamma_deg in 1.0_f64..90.0,
            faces in 3_usize..9,
            azimuth in 0.0_f64..(2.0 * PI),
            radial in 0.0_f64..10.0,
            height in 0.01_f64..10.0,
        ) {
            let gamma = gamma_deg.to_radians();
            let hs = glideslope_matrix(gamma, faces).unwrap();
            let r = Vector3::new(radial * azimuth.cos(), radial * azimuth.sin(), height);
            if hs.max_row(&r) <= 0.0 {
                // angle from vertical at most gamma_gs
                let horizontal = (r.x * r.x + r.y * r.y).sqrt();
                prop_assert!(horizontal <= gamma.tan() * r.z * (1.0 + 1e-9) + 1e-12);
            }
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(glideslope_matrix(0.0, 4).is_err());
        assert!(glideslope_matrix(PI / 2.0 + 0.01, 4).is_err());
        assert!(glideslope_matrix(1.0, 2).is_err());
    }
}
