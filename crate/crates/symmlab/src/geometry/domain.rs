//! Polygonal star-shaped domains with exact area, perimeter and
//! isoperimetric deficit.

use serde::{Deserialize, Serialize};

use super::{cross, dist, sub, Point};
use crate::error::{Error, Result};
use crate::scalar::{isoperimetric_constant, pairwise_sum_by, Real};

/// Default boundary resolution. Dense enough that polygon area/perimeter
/// errors are negligible relative to PDE discretization errors.
pub const DEFAULT_BOUNDARY_VERTICES: usize = 4096;

/// A bounded star-shaped planar region stored as a positively oriented
/// polygon, with cached exact polygon measures.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Domain<R: Real = f64> {
    boundary: Vec<Point<R>>,
    area: R,
    perimeter: R,
    iso_deficit: R,
    center: Point<R>,
    trace_constant: Option<R>,
}

impl<R: Real> Domain<R> {
    /// Build a domain from an ordered vertex list.
    ///
    /// The list is reoriented counterclockwise if needed, and must describe
    /// a curve that is star-shaped about its area centroid (which also
    /// guarantees simplicity for the shapes this crate handles).
    pub fn from_polygon(mut vertices: Vec<Point<R>>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::Geometry("polygon needs at least 3 vertices".into()));
        }
        let raw_area = shoelace_area(&vertices);
        if raw_area == R::zero() {
            return Err(Error::Geometry("degenerate polygon with zero area".into()));
        }
        if raw_area < R::zero() {
            vertices.reverse();
        }
        let area = shoelace_area(&vertices);
        let perimeter = polygon_perimeter(&vertices);
        let center = polygon_centroid(&vertices, area);
        if !is_star_shaped_about(&vertices, center) {
            return Err(Error::Geometry(
                "polygon is not star-shaped about its centroid".into(),
            ));
        }
        let iso = iso_deficit_from_measures(perimeter, area);
        Ok(Domain {
            boundary: vertices,
            area,
            perimeter,
            iso_deficit: iso,
            center,
            trace_constant: None,
        })
    }

    /// Regular `n`-gon inscribed in the circle of the given radius. This is
    /// the raw constructor; [`Domain::disk`] adds the coarseness guard.
    pub fn regular_polygon(radius: R, n: usize) -> Result<Self> {
        if radius <= R::zero() {
            return Err(Error::Geometry("radius must be positive".into()));
        }
        if n < 3 {
            return Err(Error::Geometry("polygon needs at least 3 vertices".into()));
        }
        let vertices = (0..n)
            .map(|j| {
                let th = R::two() * R::PI() * R::of(j as f64) / R::of(n as f64);
                [radius * th.cos(), radius * th.sin()]
            })
            .collect();
        Self::from_polygon(vertices)
    }

    /// Polygonal disk: regular `n_boundary`-gon inscribed in the circle.
    ///
    /// `n_boundary < 16` is rejected as too coarse for deficit accuracy.
    pub fn disk(radius: R, n_boundary: usize) -> Result<Self> {
        if n_boundary < 16 {
            return Err(Error::Geometry(format!(
                "n_boundary = {n_boundary} too coarse for deficit accuracy (minimum 16)"
            )));
        }
        Self::regular_polygon(radius, n_boundary)
    }

    /// Axis-aligned ellipse with semi-axes `a`, `b`, sampled at `n` uniform
    /// parameter angles.
    pub fn ellipse(a: R, b: R, n: usize) -> Result<Self> {
        if a <= R::zero() || b <= R::zero() {
            return Err(Error::Geometry("ellipse semi-axes must be positive".into()));
        }
        if n < 3 {
            return Err(Error::Geometry("polygon needs at least 3 vertices".into()));
        }
        let vertices = (0..n)
            .map(|j| {
                let t = R::two() * R::PI() * R::of(j as f64) / R::of(n as f64);
                [a * t.cos(), b * t.sin()]
            })
            .collect();
        Self::from_polygon(vertices)
    }

    /// Perturbed ball `r(theta) = radius * (1 + amplitude * cos(mode * theta))`.
    ///
    /// Requires `|amplitude| < radius / mode^2`, which keeps the curve
    /// star-shaped and simple.
    pub fn perturbed_ball(radius: R, amplitude: R, mode: usize, n: usize) -> Result<Self> {
        if radius <= R::zero() {
            return Err(Error::Geometry("radius must be positive".into()));
        }
        if mode < 2 {
            return Err(Error::Geometry("perturbation mode must be >= 2".into()));
        }
        let limit = radius / R::of((mode * mode) as f64);
        if amplitude.abs() >= limit {
            return Err(Error::Geometry(format!(
                "amplitude {amplitude} violates star-shapedness bound |a| < radius/mode^2 = {limit}"
            )));
        }
        let vertices = (0..n)
            .map(|j| {
                let th = R::two() * R::PI() * R::of(j as f64) / R::of(n as f64);
                let r = radius * (R::one() + amplitude * (R::of(mode as f64) * th).cos());
                [r * th.cos(), r * th.sin()]
            })
            .collect();
        Self::from_polygon(vertices)
    }

    pub fn boundary(&self) -> &[Point<R>] {
        &self.boundary
    }

    pub fn area(&self) -> R {
        self.area
    }

    pub fn perimeter(&self) -> R {
        self.perimeter
    }

    pub fn iso_deficit(&self) -> R {
        self.iso_deficit
    }

    pub fn center(&self) -> Point<R> {
        self.center
    }

    pub fn trace_constant(&self) -> Option<R> {
        self.trace_constant
    }

    pub fn with_trace_constant(mut self, c_omega: Option<R>) -> Self {
        self.trace_constant = c_omega;
        self
    }

    /// Uniformly scale the vertex list about the origin.
    pub fn dilated(&self, factor: R) -> Result<Self> {
        let verts = self
            .boundary
            .iter()
            .map(|p| [p[0] * factor, p[1] * factor])
            .collect();
        let mut d = Self::from_polygon(verts)?;
        d.trace_constant = self.trace_constant;
        Ok(d)
    }

    /// Distance from the star center to the boundary in direction `theta`,
    /// by intersecting the ray with the boundary polygon.
    pub fn boundary_radius(&self, theta: R) -> R {
        let c = self.center;
        let dir = [theta.cos(), theta.sin()];
        let n = self.boundary.len();
        // Ray-segment intersection; the star-shapedness check at
        // construction guarantees exactly one positive hit.
        let mut best = R::zero();
        for i in 0..n {
            let a = sub(self.boundary[i], c);
            let b = sub(self.boundary[(i + 1) % n], c);
            let ca = cross(dir, a);
            let cb = cross(dir, b);
            // Segment straddles the ray line when the cross products differ
            // in sign (half-open to avoid double-counting shared vertices).
            if (ca > R::zero() && cb > R::zero()) || (ca <= R::zero() && cb <= R::zero()) {
                continue;
            }
            let denom = ca - cb;
            if denom == R::zero() {
                continue;
            }
            let t = ca / denom; // position along the segment
            let hit = [a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t];
            let r = hit[0] * dir[0] + hit[1] * dir[1];
            if r > best {
                best = r;
            }
        }
        best
    }

    /// Minimum center-to-boundary distance (a lower bound for the
    /// triangulation step size check).
    pub fn min_boundary_radius(&self) -> R {
        let c = self.center;
        self.boundary
            .iter()
            .map(|&p| dist(p, c))
            .fold(R::infinity(), R::min)
    }

    pub fn max_boundary_radius(&self) -> R {
        let c = self.center;
        self.boundary
            .iter()
            .map(|&p| dist(p, c))
            .fold(R::zero(), R::max)
    }
}

/// Shoelace area of a closed polygon; positive for counterclockwise order.
pub fn shoelace_area<R: Real>(vertices: &[Point<R>]) -> R {
    let n = vertices.len();
    let twice = pairwise_sum_by(n, &|i| {
        let a = vertices[i];
        let b = vertices[(i + 1) % n];
        cross(a, b)
    });
    twice * R::half()
}

pub fn polygon_perimeter<R: Real>(vertices: &[Point<R>]) -> R {
    let n = vertices.len();
    pairwise_sum_by(n, &|i| dist(vertices[i], vertices[(i + 1) % n]))
}

fn polygon_centroid<R: Real>(vertices: &[Point<R>], area: R) -> Point<R> {
    let n = vertices.len();
    let six_a = R::of(6.0) * area;
    let cx = pairwise_sum_by(n, &|i| {
        let a = vertices[i];
        let b = vertices[(i + 1) % n];
        (a[0] + b[0]) * cross(a, b)
    });
    let cy = pairwise_sum_by(n, &|i| {
        let a = vertices[i];
        let b = vertices[(i + 1) % n];
        (a[1] + b[1]) * cross(a, b)
    });
    [cx / six_a, cy / six_a]
}

/// A closed polygon is star-shaped about `c` when the vertex angles wind
/// monotonically once around `c`.
fn is_star_shaped_about<R: Real>(vertices: &[Point<R>], c: Point<R>) -> bool {
    let n = vertices.len();
    let mut total = R::zero();
    for i in 0..n {
        let a = sub(vertices[i], c);
        let b = sub(vertices[(i + 1) % n], c);
        let turn = cross(a, b).atan2(a[0] * b[0] + a[1] * b[1]);
        if turn <= R::zero() {
            return false;
        }
        total += turn;
    }
    (total - R::two() * R::PI()).abs() < R::of(1e-6)
}

fn iso_deficit_from_measures<R: Real>(perimeter: R, area: R) -> R {
    iso_deficit_from_measures_with_kappa(perimeter, area, isoperimetric_constant::<R>(2))
}

fn iso_deficit_from_measures_with_kappa<R: Real>(perimeter: R, area: R, kappa: R) -> R {
    perimeter / (kappa * area.sqrt()) - R::one()
}

/// Isoperimetric deficit `P / (kappa_2 |Omega|^{1/2}) - 1` of a domain.
pub fn iso_deficit<R: Real>(domain: &Domain<R>) -> R {
    domain.iso_deficit()
}

/// Deficit with an explicit isoperimetric constant. Exists so the selftest
/// oracle can be exercised against a tampered constant.
pub fn iso_deficit_with_kappa<R: Real>(domain: &Domain<R>, kappa: R) -> R {
    iso_deficit_from_measures_with_kappa(domain.perimeter(), domain.area(), kappa)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn disk_deficit_vanishes_at_high_resolution() {
        let d = Domain::<f64>::disk(1.0, 4096).unwrap();
        assert!(d.iso_deficit() >= 0.0, "deficit {}", d.iso_deficit());
        assert!(d.iso_deficit() < 1e-5, "deficit {}", d.iso_deficit());
    }

    #[test]
    fn disk_rejects_coarse_boundary() {
        assert!(Domain::<f64>::disk(1.0, 8).is_err());
    }

    #[test]
    fn equilateral_triangle_deficit_matches_hand_value() {
        // Oracle: A = sqrt(3)/4, P = 3 for the unit-side triangle, so
        // delta = 3 / (2 sqrt(pi A)) - 1 = 3 / sqrt(pi sqrt(3)) - 1.
        let expected = 3.0 / (PI * 3.0_f64.sqrt()).sqrt() - 1.0;
        let d = Domain::<f64>::regular_polygon(1.0, 3).unwrap();
        assert!(
            (d.iso_deficit() - expected).abs() < 1e-12,
            "deficit {} vs oracle {}",
            d.iso_deficit(),
            expected
        );
        assert!((expected - 0.2861).abs() < 5e-4);
    }

    #[test]
    fn deficit_is_scale_invariant() {
        let d1 = Domain::<f64>::disk(1.0, 4096).unwrap();
        let d2 = Domain::<f64>::disk(2.0, 4096).unwrap();
        assert!((d1.iso_deficit() - d2.iso_deficit()).abs() < 1e-13);

        let p1 = Domain::<f64>::perturbed_ball(1.0, 0.05, 3, 4096).unwrap();
        let p2 = Domain::<f64>::perturbed_ball(2.0, 0.05, 3, 4096).unwrap();
        assert!((p1.iso_deficit() - p2.iso_deficit()).abs() < 1e-12);
    }

    #[test]
    fn deficit_is_rigid_motion_invariant() {
        let d = Domain::<f64>::ellipse(1.2, 1.0 / 1.2, 2048).unwrap();
        let (s, c) = (0.3_f64.sin(), 0.3_f64.cos());
        let moved: Vec<[f64; 2]> = d
            .boundary()
            .iter()
            .map(|p| [c * p[0] - s * p[1] + 5.0, s * p[0] + c * p[1] - 2.0])
            .collect();
        let d2 = Domain::from_polygon(moved).unwrap();
        assert!(
            (d.iso_deficit() - d2.iso_deficit()).abs() < 1e-12,
            "{} vs {}",
            d.iso_deficit(),
            d2.iso_deficit()
        );
    }

    #[test]
    fn unit_square_deficit_exact() {
        let sq = Domain::<f64>::from_polygon(vec![
            [0.0, 0.0],
            [1.0, 0.0],
            [1.0, 1.0],
            [0.0, 1.0],
        ])
        .unwrap();
        let expected = 2.0 / PI.sqrt() - 1.0;
        assert!((sq.iso_deficit() - expected).abs() < 1e-14);
        assert!((expected - 0.128379).abs() < 1e-6);
    }

    #[test]
    fn regular_polygon_deficit_decreases_with_resolution() {
        let mut last = f64::INFINITY;
        for n in [16, 32, 64, 128, 256, 512] {
            let d = Domain::<f64>::disk(1.0, n).unwrap();
            assert!(d.iso_deficit() < last, "not monotone at n = {n}");
            last = d.iso_deficit();
        }
    }

    #[test]
    fn circle_as_ellipse_has_tiny_deficit() {
        let d = Domain::<f64>::ellipse(1.0, 1.0, 4096).unwrap();
        assert!(d.iso_deficit() < 1e-5);
    }

    #[test]
    fn ellipse_deficit_matches_arc_length_quadrature() {
        // Independent oracle: perimeter by adaptive Simpson of the
        // arc-length integrand, area = pi a b exactly.
        let (a, b) = (1.2, 1.0 / 1.2);
        let arc = |t: f64| ((a * t.sin()).powi(2) + (b * t.cos()).powi(2)).sqrt();
        let mut per = 0.0;
        let m = 1 << 16;
        for i in 0..m {
            // composite Simpson on a fine grid
            let t0 = 2.0 * PI * (i as f64) / m as f64;
            let t1 = 2.0 * PI * (i as f64 + 1.0) / m as f64;
            let tm = 0.5 * (t0 + t1);
            per += (t1 - t0) / 6.0 * (arc(t0) + 4.0 * arc(tm) + arc(t1));
        }
        let delta_oracle = per / (2.0 * (PI * PI * a * b).sqrt()) - 1.0;
        let d = Domain::<f64>::ellipse(a, b, 4096).unwrap();
        assert!(d.iso_deficit() > 0.0);
        assert!(
            (d.iso_deficit() - delta_oracle).abs() < 2e-5,
            "polygon {} vs quadrature {}",
            d.iso_deficit(),
            delta_oracle
        );
    }

    #[test]
    fn eccentric_ellipse_has_larger_deficit() {
        let d1 = Domain::<f64>::ellipse(1.2, 1.0 / 1.2, 4096).unwrap();
        let d2 = Domain::<f64>::ellipse(2.0, 0.5, 4096).unwrap();
        assert!(d2.iso_deficit() > d1.iso_deficit());
    }

    #[test]
    fn perturbed_ball_amplitude_zero_is_a_disk() {
        let d = Domain::<f64>::perturbed_ball(1.0, 0.0, 3, 4096).unwrap();
        assert!(d.iso_deficit() < 1e-5);
    }

    #[test]
    fn perturbed_ball_deficit_is_quadratic_in_amplitude() {
        let c: Vec<f64> = [0.025, 0.05, 0.1]
            .iter()
            .map(|&a| {
                let d = Domain::<f64>::perturbed_ball(1.0, a, 3, 4096).unwrap();
                d.iso_deficit() / (a * a)
            })
            .collect();
        // Richardson-style check: the ratio stabilizes as amplitude -> 0.
        let d01 = (c[0] - c[1]).abs() / c[0];
        let d12 = (c[1] - c[2]).abs() / c[1];
        assert!(d01 < 0.05, "ratio drift {d01} between 0.025 and 0.05");
        assert!(d12 < 0.10, "ratio drift {d12} between 0.05 and 0.1");
        assert!(d01 < d12, "ratios should stabilize toward small amplitude");
    }

    #[test]
    fn perturbed_ball_rejects_star_violation() {
        assert!(Domain::<f64>::perturbed_ball(1.0, 0.2, 3, 4096).is_err());
    }

    #[test]
    fn all_constructed_domains_satisfy_isoperimetric_inequality() {
        let domains = vec![
            Domain::<f64>::disk(1.0, 64).unwrap(),
            Domain::<f64>::ellipse(1.4, 1.0 / 1.4, 512).unwrap(),
            Domain::<f64>::perturbed_ball(1.0, 0.05, 4, 512).unwrap(),
            Domain::<f64>::from_polygon(vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
                .unwrap(),
        ];
        for d in &domains {
            let lhs = d.perimeter();
            let rhs = 2.0 * (PI * d.area()).sqrt();
            assert!(lhs >= rhs - 1e-12, "P = {lhs} vs 2 sqrt(pi A) = {rhs}");
        }
    }

    #[test]
    fn boundary_radius_interpolates_the_polygon() {
        let d = Domain::<f64>::ellipse(1.5, 0.8, 4096).unwrap();
        for k in 0..32 {
            let th = 2.0 * PI * (k as f64 + 0.37) / 32.0;
            let r = d.boundary_radius(th);
            // exact ellipse radius in polar form
            let exact = {
                let (c, s) = (th.cos(), th.sin());
                1.0 / ((c / 1.5).powi(2) + (s / 0.8).powi(2)).sqrt()
            };
            assert!((r - exact).abs() < 1e-5, "theta {th}: {r} vs {exact}");
        }
    }
}
