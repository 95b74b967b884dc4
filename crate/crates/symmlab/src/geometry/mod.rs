//! Star-shaped planar domains and their structured triangulations.
//!
//! A [`Domain`] is a dense polygonal approximation of a star-shaped curve
//! together with its exact polygon area, perimeter and isoperimetric
//! deficit. A [`Mesh`] is a conforming triangulation built from concentric
//! polar rings around the star center.

mod domain;
mod mesh;

pub use domain::{iso_deficit, iso_deficit_with_kappa, Domain};
pub use mesh::{triangulate, Mesh};

use crate::scalar::Real;

/// Planar point.
pub type Point<R> = [R; 2];

pub(crate) fn sub<R: Real>(a: Point<R>, b: Point<R>) -> Point<R> {
    [a[0] - b[0], a[1] - b[1]]
}

pub(crate) fn dist<R: Real>(a: Point<R>, b: Point<R>) -> R {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

pub(crate) fn cross<R: Real>(a: Point<R>, b: Point<R>) -> R {
    a[0] * b[1] - a[1] * b[0]
}

/// Signed area of the triangle `(a, b, c)`; positive when counterclockwise.
pub(crate) fn tri_signed_area<R: Real>(a: Point<R>, b: Point<R>, c: Point<R>) -> R {
    cross(sub(b, a), sub(c, a)) * R::half()
}
