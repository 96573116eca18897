//! 3D positioning from matched path estimates.
//!
//! The base-station frame puts z along the cylinder axis, elevation measured
//! from +z, azimuth from +x counter-clockwise. A LOS estimate traces from
//! the BS along the arrival direction; a single-bounce NLOS estimate mirrors
//! the BS and the direction across the reflector plane (virtual anchor), so
//! either kind of path becomes a ray. With a known clock offset one ray
//! suffices; with an unknown offset two rays are intersected by damped least
//! squares with the delay difference as an extra residual.

use crate::{Error, Result, SPEED_OF_LIGHT};

/// 3D vector in meters.
pub type Vec3 = [f64; 3];

pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

/// Unit direction of arrival reversed into a propagation direction away from
/// the BS: `(sin th cos ph, sin th sin ph, cos th)`.
pub fn direction_from_angles(elevation: f64, azimuth: f64) -> Vec3 {
    [
        elevation.sin() * azimuth.cos(),
        elevation.sin() * azimuth.sin(),
        elevation.cos(),
    ]
}

/// An infinite plane given by a point on it and its unit normal.
#[derive(Debug, Clone, Copy)]
pub struct Plane {
    pub point: Vec3,
    pub normal: Vec3,
}

impl Plane {
    pub fn new(point: Vec3, normal: Vec3) -> Result<Self> {
        let n = norm(normal);
        if !(n > 0.0) {
            return Err(Error::Config("reflector normal must be nonzero".into()));
        }
        Ok(Self {
            point,
            normal: scale(normal, 1.0 / n),
        })
    }

    /// Mirror a point across the plane.
    pub fn mirror_point(&self, p: Vec3) -> Vec3 {
        let d = dot(sub(p, self.point), self.normal);
        sub(p, scale(self.normal, 2.0 * d))
    }

    /// Mirror a direction across the plane.
    pub fn mirror_direction(&self, u: Vec3) -> Vec3 {
        sub(u, scale(self.normal, 2.0 * dot(u, self.normal)))
    }
}

/// Scene knowledge available to the locator.
#[derive(Debug, Clone)]
pub struct SceneModel {
    pub bs_position: Vec3,
    pub reflectors: Vec<Plane>,
    /// Known clock offset in seconds, `None` when unknown.
    pub clock_offset: Option<f64>,
}

/// A path converted into a ray in the scene.
#[derive(Debug, Clone, Copy)]
pub struct RayHypothesis {
    /// BS or mirrored BS.
    pub origin: Vec3,
    /// Unit propagation direction away from the origin.
    pub direction: Vec3,
    /// `c * (tau - tau_of)` when the offset is known.
    pub path_length: Option<f64>,
    /// Raw delay estimate in seconds (offset-uncertain).
    pub delay: f64,
}

/// Build the ray for one `(delay, elevation, azimuth)` estimate. `None`
/// reflector index means a LOS hypothesis; `Some(i)` mirrors BS and direction
/// across reflector `i` (virtual anchor).
pub fn ray_from_estimate(
    delay: f64,
    elevation: f64,
    azimuth: f64,
    scene: &SceneModel,
    reflector_index: Option<usize>,
) -> Result<RayHypothesis> {
    let dir = direction_from_angles(elevation, azimuth);
    let (origin, direction) = match reflector_index {
        None => (scene.bs_position, dir),
        Some(i) => {
            let plane = scene
                .reflectors
                .get(i)
                .ok_or_else(|| Error::Config(format!("no reflector with index {i}")))?;
            (
                plane.mirror_point(scene.bs_position),
                plane.mirror_direction(dir),
            )
        }
    };
    let path_length = scene.clock_offset.map(|of| SPEED_OF_LIGHT * (delay - of));
    if let Some(len) = path_length {
        if len < 0.0 {
            return Err(Error::OutOfRange(format!(
                "negative path length {len} m after offset correction"
            )));
        }
    }
    Ok(RayHypothesis {
        origin,
        direction,
        path_length,
        delay,
    })
}

/// Trace a ray with a known offset: `origin + length * direction`.
pub fn locate_known_offset(ray: &RayHypothesis) -> Result<Vec3> {
    let len = ray
        .path_length
        .ok_or_else(|| Error::Config("path length is offset-uncertain".into()))?;
    Ok(add(ray.origin, scale(ray.direction, len)))
}

/// Midpoint of the common perpendicular between two rays (classical two-line
/// least squares), used as the solver start.
fn common_perpendicular_midpoint(a: &RayHypothesis, b: &RayHypothesis) -> Result<Vec3> {
    let w = sub(a.origin, b.origin);
    let uu = dot(a.direction, a.direction);
    let vv = dot(b.direction, b.direction);
    let uv = dot(a.direction, b.direction);
    let det = uu * vv - uv * uv;
    if det.abs() < 1e-8 {
        return Err(Error::Degenerate("rays are (nearly) parallel".into()));
    }
    let su = dot(a.direction, w);
    let sv = dot(b.direction, w);
    let t1 = (uv * sv - vv * su) / det;
    let t2 = (uu * sv - uv * su) / det;
    let p1 = add(a.origin, scale(a.direction, t1));
    let p2 = add(b.origin, scale(b.direction, t2));
    Ok(scale(add(p1, p2), 0.5))
}

/// Locate from two offset-uncertain rays by minimizing
/// `J(x) = sum_i dist(x, ray_i)^2 + weight * ((t1 - t2) - c (tau1 - tau2))^2`
/// where `t_i` is the path length to the projection of `x` on ray `i`.
/// Levenberg-damped Gauss-Newton from the common-perpendicular midpoint.
/// Returns the minimizer and the final objective value.
pub fn locate_two_paths(
    rays: (&RayHypothesis, &RayHypothesis),
    weight: f64,
) -> Result<(Vec3, f64)> {
    let (a, b) = rays;
    let angle = norm(cross(a.direction, b.direction)).asin();
    if !(angle > 1e-4) {
        return Err(Error::Degenerate(format!(
            "rays are ill-conditioned for intersection (angle {angle} rad)"
        )));
    }
    let ddiff = SPEED_OF_LIGHT * (a.delay - b.delay);
    let sqrt_w = weight.max(0.0).sqrt();

    // residual vector: perpendicular components to each ray (3 + 3) plus the
    // weighted delay-difference residual
    let residuals = |x: Vec3| -> ([f64; 7], f64) {
        let ra = sub(x, a.origin);
        let rb = sub(x, b.origin);
        let ta = dot(ra, a.direction);
        let tb = dot(rb, b.direction);
        let pa = sub(ra, scale(a.direction, ta));
        let pb = sub(rb, scale(b.direction, tb));
        let rd = sqrt_w * ((ta - tb) - ddiff);
        let r = [pa[0], pa[1], pa[2], pb[0], pb[1], pb[2], rd];
        let j = dot(pa, pa) + dot(pb, pb) + rd * rd;
        (r, j)
    };
    // Jacobian rows: (I - u u^T) for each ray block, sqrt_w (u_a - u_b)^T
    let jac = {
        let mut j = [[0.0f64; 3]; 7];
        for i in 0..3 {
            for k in 0..3 {
                let id = if i == k { 1.0 } else { 0.0 };
                j[i][k] = id - a.direction[i] * a.direction[k];
                j[3 + i][k] = id - b.direction[i] * b.direction[k];
            }
        }
        for k in 0..3 {
            j[6][k] = sqrt_w * (a.direction[k] - b.direction[k]);
        }
        j
    };

    let mut x = common_perpendicular_midpoint(a, b)?;
    let (_, mut fx) = residuals(x);
    let mut lambda = 1e-6;
    for _ in 0..100 {
        let (r, _) = residuals(x);
        // normal equations J^T J + lambda I, J^T r
        let mut jtj = [[0.0f64; 3]; 3];
        let mut jtr = [0.0f64; 3];
        for row in 0..7 {
            for i in 0..3 {
                jtr[i] += jac[row][i] * r[row];
                for k in 0..3 {
                    jtj[i][k] += jac[row][i] * jac[row][k];
                }
            }
        }
        for i in 0..3 {
            jtj[i][i] += lambda * (1.0 + jtj[i][i]);
        }
        let step = solve3(jtj, jtr)?;
        let cand = sub(x, step);
        let (_, fc) = residuals(cand);
        if fc < fx {
            let moved = norm(step);
            x = cand;
            fx = fc;
            lambda = (lambda * 0.3).max(1e-12);
            if moved < 1e-10 {
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e12 {
                break;
            }
        }
    }
    Ok((x, fx))
}

fn solve3(a: [[f64; 3]; 3], b: [f64; 3]) -> Result<Vec3> {
    let det = a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
        - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
    if det.abs() < 1e-300 {
        return Err(Error::Degenerate("singular normal equations".into()));
    }
    let inv_det = 1.0 / det;
    let x = [
        (b[0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
            - a[0][1] * (b[1] * a[2][2] - a[1][2] * b[2])
            + a[0][2] * (b[1] * a[2][1] - a[1][1] * b[2]))
            * inv_det,
        (a[0][0] * (b[1] * a[2][2] - a[1][2] * b[2])
            - b[0] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
            + a[0][2] * (a[1][0] * b[2] - b[1] * a[2][0]))
            * inv_det,
        (a[0][0] * (a[1][1] * b[2] - b[1] * a[2][1])
            - a[0][1] * (a[1][0] * b[2] - b[1] * a[2][0])
            + b[0] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]))
            * inv_det,
    ];
    Ok(x)
}

/// Forward geometry of a single-bounce path: returns
/// `(azimuth, elevation, path_length)` of the arrival at the BS from a MS
/// position via an optional reflector. Shared by scenario generation and the
/// localization tests.
pub fn forward_path(scene: &SceneModel, ms: Vec3, reflector_index: Option<usize>) -> Result<(f64, f64, f64)> {
    let (virtual_ms, length) = match reflector_index {
        None => (ms, norm(sub(ms, scene.bs_position))),
        Some(i) => {
            let plane = scene
                .reflectors
                .get(i)
                .ok_or_else(|| Error::Config(format!("no reflector with index {i}")))?;
            let m = plane.mirror_point(ms);
            (m, norm(sub(m, scene.bs_position)))
        }
    };
    let d = sub(virtual_ms, scene.bs_position);
    let r = norm(d);
    if !(r > 0.0) {
        return Err(Error::Degenerate("MS coincides with BS".into()));
    }
    let elevation = (d[2] / r).acos();
    let azimuth = d[1].atan2(d[0]).rem_euclid(2.0 * std::f64::consts::PI);
    Ok((azimuth, elevation, length))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn scene() -> SceneModel {
        SceneModel {
            bs_position: [0.0, 0.0, 10.0],
            reflectors: vec![
                Plane::new([12.0, 0.0, 0.0], [-1.0, 0.0, 0.0]).unwrap(),
                Plane::new([0.0, -9.0, 0.0], [0.0, 1.0, 0.0]).unwrap(),
            ],
            clock_offset: Some(0.0),
        }
    }

    #[test]
    fn axis_convention() {
        let d = direction_from_angles(std::f64::consts::FRAC_PI_2, 0.0);
        assert_abs_diff_eq!(d[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d[1], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d[2], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn mirroring_twice_is_identity() {
        let plane = Plane::new([3.0, 1.0, -2.0], [0.3, -0.5, 0.81]).unwrap();
        let p = [1.0, 7.0, 2.5];
        let back = plane.mirror_point(plane.mirror_point(p));
        for i in 0..3 {
            assert_abs_diff_eq!(back[i], p[i], epsilon = 1e-12);
        }
        let u = [0.6, -0.64, 0.48];
        let ub = plane.mirror_direction(plane.mirror_direction(u));
        for i in 0..3 {
            assert_abs_diff_eq!(ub[i], u[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn forward_ray_passes_through_ms() {
        // the virtual-anchor ray traced for the path length ends at the MS
        // for LOS and single-bounce alike
        let sc = scene();
        let ms = [6.0, -3.0, 1.5];
        for refl in [None, Some(0), Some(1)] {
            let (az, el, len) = forward_path(&sc, ms, refl).unwrap();
            let ray = ray_from_estimate(len / SPEED_OF_LIGHT, el, az, &sc, refl).unwrap();
            let end = add(ray.origin, scale(ray.direction, len));
            for i in 0..3 {
                assert_abs_diff_eq!(end[i], ms[i], epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn known_offset_locates_exactly() {
        let sc = scene();
        let ms = [6.0, -3.0, 1.5];
        for refl in [None, Some(0)] {
            let (az, el, len) = forward_path(&sc, ms, refl).unwrap();
            let ray = ray_from_estimate(len / SPEED_OF_LIGHT, el, az, &sc, refl).unwrap();
            let pos = locate_known_offset(&ray).unwrap();
            for i in 0..3 {
                assert_abs_diff_eq!(pos[i], ms[i], epsilon = 1e-9);
            }
        }
        // zero length returns the origin
        let r0 = RayHypothesis {
            origin: [1.0, 2.0, 3.0],
            direction: [0.0, 0.0, 1.0],
            path_length: Some(0.0),
            delay: 0.0,
        };
        assert_eq!(locate_known_offset(&r0).unwrap(), [1.0, 2.0, 3.0]);
    }

    /// Two rays from distinct anchors that pass exactly through `ms`, with a
    /// common clock offset baked into the delays.
    fn two_rays_through(ms: Vec3, offset: f64) -> (RayHypothesis, RayHypothesis) {
        let o1 = [0.0, 0.0, 10.0];
        let o2 = [20.0, 4.0, 6.0];
        let d1 = sub(ms, o1);
        let d2 = sub(ms, o2);
        let l1 = norm(d1);
        let l2 = norm(d2);
        (
            RayHypothesis {
                origin: o1,
                direction: scale(d1, 1.0 / l1),
                path_length: None,
                delay: l1 / SPEED_OF_LIGHT + offset,
            },
            RayHypothesis {
                origin: o2,
                direction: scale(d2, 1.0 / l2),
                path_length: None,
                delay: l2 / SPEED_OF_LIGHT + offset,
            },
        )
    }

    #[test]
    fn two_path_exact_intersection() {
        let ms = [7.0, -2.0, 1.0];
        // clock offset cancels in the delay difference
        let (r1, r2) = two_rays_through(ms, 3.7e-9);
        let w = 1.0 / (SPEED_OF_LIGHT * 4e-9).powi(2);
        let (pos, resid) = locate_two_paths((&r1, &r2), w).unwrap();
        for i in 0..3 {
            assert_abs_diff_eq!(pos[i], ms[i], epsilon = 1e-7);
        }
        assert!(resid < 1e-12, "residual {resid}");
    }

    #[test]
    fn zero_weight_gives_perpendicular_midpoint() {
        // skew rays: closest points are distinct; the unweighted solution is
        // their midpoint
        let r1 = RayHypothesis {
            origin: [0.0, 0.0, 0.0],
            direction: [1.0, 0.0, 0.0],
            path_length: None,
            delay: 10e-9,
        };
        let r2 = RayHypothesis {
            origin: [3.0, 2.0, 1.0],
            direction: [0.0, 1.0, 0.0],
            path_length: None,
            delay: 12e-9,
        };
        let (pos, _) = locate_two_paths((&r1, &r2), 0.0).unwrap();
        let want = common_perpendicular_midpoint(&r1, &r2).unwrap();
        for i in 0..3 {
            assert_abs_diff_eq!(pos[i], want[i], epsilon = 1e-9);
        }
    }

    #[test]
    fn parallel_rays_rejected() {
        let r1 = RayHypothesis {
            origin: [0.0, 0.0, 0.0],
            direction: [1.0, 0.0, 0.0],
            path_length: None,
            delay: 0.0,
        };
        let r2 = RayHypothesis {
            origin: [0.0, 1.0, 0.0],
            direction: [1.0, 1e-6, 0.0],
            path_length: None,
            delay: 0.0,
        };
        assert!(locate_two_paths((&r1, &r2), 1.0).is_err());
    }

    #[test]
    fn solution_moves_continuously_under_small_perturbation() {
        let ms = [7.0, -2.0, 1.0];
        let (r1, r2) = two_rays_through(ms, 0.0);
        let w = 1.0 / (SPEED_OF_LIGHT * 4e-9).powi(2);
        let (base, _) = locate_two_paths((&r1, &r2), w).unwrap();
        // perturb one direction by 0.5 degrees about the z axis
        let eps = 0.5f64.to_radians();
        let mut r2p = r2;
        let u = r2.direction;
        let rot = [
            u[0] * eps.cos() - u[1] * eps.sin(),
            u[0] * eps.sin() + u[1] * eps.cos(),
            u[2],
        ];
        r2p.direction = scale(rot, 1.0 / norm(rot));
        let (moved, _) = locate_two_paths((&r1, &r2p), w).unwrap();
        let range = norm(sub(ms, r2.origin));
        let shift = norm(sub(moved, base));
        assert!(
            shift < 10.0 * range * 0.0087 + 1e-9,
            "solution jumped by {shift} m"
        );
        assert!(shift > 0.0);
    }

    #[test]
    fn translation_equivariance() {
        let ms = [7.0, -2.0, 1.0];
        let (r1, r2) = two_rays_through(ms, 0.0);
        let shift = [11.0, -4.0, 2.0];
        let t1 = RayHypothesis {
            origin: add(r1.origin, shift),
            ..r1
        };
        let t2 = RayHypothesis {
            origin: add(r2.origin, shift),
            ..r2
        };
        let w = 1.0;
        let (a, _) = locate_two_paths((&r1, &r2), w).unwrap();
        let (b, _) = locate_two_paths((&t1, &t2), w).unwrap();
        for i in 0..3 {
            assert_abs_diff_eq!(b[i], a[i] + shift[i], epsilon = 1e-7);
        }
    }

    #[test]
    fn negative_path_length_rejected() {
        let sc = scene();
        assert!(ray_from_estimate(1e-9, 1.0, 1.0, &sc, None).is_ok());
        let sc2 = SceneModel {
            clock_offset: Some(5e-9),
            ..scene()
        };
        assert!(ray_from_estimate(1e-9, 1.0, 1.0, &sc2, None).is_err());
    }
}
