//! Structured polar triangulation of star-shaped domains.
//!
//! The mesh is the classical spiderweb pattern: ring `k` of `n` carries
//! `6k` nodes, placed at fraction `k/n` of the boundary distance along each
//! ray, so triangles stay near-equilateral on disk-like domains without a
//! general-purpose mesher.

use serde::{Deserialize, Serialize};

use super::{dist, tri_signed_area, Domain, Point};
use crate::error::{Error, Result};
use crate::scalar::{pairwise_sum_by, Real};

/// Conforming triangulation with P1 connectivity data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Mesh<R: Real = f64> {
    pub nodes: Vec<Point<R>>,
    /// Positively oriented index triples.
    pub triangles: Vec<[usize; 3]>,
    /// Flag per node.
    pub is_boundary: Vec<bool>,
    /// Boundary edges `(from, to)` in counterclockwise loop order, each with
    /// its adjacent triangle index.
    pub boundary_edges: Vec<BoundaryEdge>,
    /// Maximum edge length of the constructed mesh.
    pub h: R,
    /// Minimum interior angle over all triangles, in degrees.
    pub min_angle_deg: R,
    /// Star center used for the construction.
    pub center: Point<R>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BoundaryEdge {
    pub from: usize,
    pub to: usize,
    pub triangle: usize,
}

impl<R: Real> Mesh<R> {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn triangle_area(&self, t: usize) -> R {
        let [i, j, k] = self.triangles[t];
        tri_signed_area(self.nodes[i], self.nodes[j], self.nodes[k])
    }

    /// Sum of triangle areas (deterministic pairwise reduction).
    pub fn total_area(&self) -> R {
        pairwise_sum_by(self.triangles.len(), &|t| self.triangle_area(t))
    }

    /// Outward unit normal of a boundary edge.
    pub fn outward_normal(&self, e: &BoundaryEdge) -> Point<R> {
        let a = self.nodes[e.from];
        let b = self.nodes[e.to];
        let len = dist(a, b);
        // Boundary loop is counterclockwise, so the outward normal is the
        // edge direction rotated by -90 degrees.
        [(b[1] - a[1]) / len, -(b[0] - a[0]) / len]
    }

    /// Rebuild derived data (boundary loop, h, quality) from nodes,
    /// triangles and boundary flags, as after reading a mesh file.
    pub fn from_raw(
        nodes: Vec<Point<R>>,
        triangles: Vec<[usize; 3]>,
        is_boundary: Vec<bool>,
    ) -> Result<Self> {
        if nodes.len() != is_boundary.len() {
            return Err(Error::Mesh("boundary flag count mismatch".into()));
        }
        for (t, tri) in triangles.iter().enumerate() {
            for &i in tri {
                if i >= nodes.len() {
                    return Err(Error::Mesh(format!("triangle {t} references node {i}")));
                }
            }
            let a = tri_signed_area(nodes[tri[0]], nodes[tri[1]], nodes[tri[2]]);
            if a <= R::zero() {
                return Err(Error::Mesh(format!(
                    "triangle {t} is degenerate or negatively oriented"
                )));
            }
        }
        let boundary_edges = boundary_loop(&nodes, &triangles)?;
        let h = max_edge_length(&nodes, &triangles);
        let min_angle_deg = min_angle(&nodes, &triangles);
        let center = centroid_of_nodes(&nodes);
        Ok(Mesh {
            nodes,
            triangles,
            is_boundary,
            boundary_edges,
            h,
            min_angle_deg,
            center,
        })
    }
}

/// Triangulate a star-shaped domain with target edge length `h`.
pub fn triangulate<R: Real>(domain: &Domain<R>, h: R) -> Result<Mesh<R>> {
    if h <= R::zero() {
        return Err(Error::Mesh("step size h must be positive".into()));
    }
    let r_min = domain.min_boundary_radius();
    if h >= r_min {
        return Err(Error::Mesh(format!(
            "h = {h} must be below the in-radius bound {r_min}"
        )));
    }
    let r_max = domain.max_boundary_radius();
    let n_rings = (r_max / h).ceil().to_usize().unwrap_or(2).max(2);

    let c = domain.center();
    let mut nodes: Vec<Point<R>> = Vec::with_capacity(1 + 3 * n_rings * (n_rings + 1));
    nodes.push(c);
    let mut ring_start = vec![0usize; n_rings + 1];
    for k in 1..=n_rings {
        ring_start[k] = nodes.len();
        let m = 6 * k;
        let t = R::of(k as f64) / R::of(n_rings as f64);
        for j in 0..m {
            let th = R::two() * R::PI() * R::of(j as f64) / R::of(m as f64);
            let rb = domain.boundary_radius(th);
            nodes.push([c[0] + t * rb * th.cos(), c[1] + t * rb * th.sin()]);
        }
    }

    let mut triangles: Vec<[usize; 3]> = Vec::with_capacity(6 * n_rings * n_rings);
    // Innermost fan: center to ring 1.
    for j in 0..6 {
        triangles.push([0, ring_start[1] + j, ring_start[1] + (j + 1) % 6]);
    }
    // Strips between ring k-1 (6(k-1) nodes) and ring k (6k nodes), woven
    // sector by sector; the six sector boundary rays are shared by every
    // ring, so the weave never wraps inside a sector.
    for k in 2..=n_rings {
        let m_in = 6 * (k - 1);
        let m_out = 6 * k;
        let inner = ring_start[k - 1];
        let outer = ring_start[k];
        for s in 0..6 {
            // Fractional positions within the sector: inner has k-1 edges,
            // outer has k edges.
            let in_base = s * (k - 1);
            let out_base = s * k;
            let mut i = 0usize; // inner offset within sector, 0..=k-1
            let mut j = 0usize; // outer offset within sector, 0..=k
            while i < k - 1 || j < k {
                let in_node = inner + (in_base + i) % m_in;
                let out_node = outer + (out_base + j) % m_out;
                let advance_outer = if j >= k {
                    false
                } else if i >= k - 1 {
                    true
                } else {
                    // Compare next fractional angles; ties advance the outer
                    // ring, which keeps triangles non-degenerate.
                    (j + 1) * (k - 1) <= (i + 1) * k
                };
                if advance_outer {
                    let out_next = outer + (out_base + j + 1) % m_out;
                    triangles.push([in_node, out_node, out_next]);
                    j += 1;
                } else {
                    let in_next = inner + (in_base + i + 1) % m_in;
                    triangles.push([out_node, in_next, in_node]);
                    i += 1;
                }
            }
        }
    }

    let mut is_boundary = vec![false; nodes.len()];
    for flag in is_boundary.iter_mut().skip(ring_start[n_rings]) {
        *flag = true;
    }

    for (t, tri) in triangles.iter().enumerate() {
        let a = tri_signed_area(nodes[tri[0]], nodes[tri[1]], nodes[tri[2]]);
        if a <= R::zero() {
            return Err(Error::Mesh(format!(
                "triangulation produced a degenerate triangle {t}; input may not be star-shaped"
            )));
        }
    }

    let boundary_edges = boundary_loop(&nodes, &triangles)?;
    let h_mesh = max_edge_length(&nodes, &triangles);
    let min_angle_deg = min_angle(&nodes, &triangles);
    Ok(Mesh {
        nodes,
        triangles,
        is_boundary,
        boundary_edges,
        h: h_mesh,
        min_angle_deg,
        center: c,
    })
}

/// Extract the boundary loop: edges adjacent to exactly one triangle,
/// chained into a single counterclockwise cycle.
fn boundary_loop<R: Real>(
    nodes: &[Point<R>],
    triangles: &[[usize; 3]],
) -> Result<Vec<BoundaryEdge>> {
    use std::collections::HashMap;
    let mut count: HashMap<(usize, usize), (usize, usize, usize)> = HashMap::new();
    for (t, tri) in triangles.iter().enumerate() {
        for e in 0..3 {
            let a = tri[e];
            let b = tri[(e + 1) % 3];
            let key = (a.min(b), a.max(b));
            let entry = count.entry(key).or_insert((0, 0, 0));
            entry.0 += 1;
            entry.1 = t;
            entry.2 = if a < b { 0 } else { 1 }; // orientation of last sighting
        }
    }
    let mut next: HashMap<usize, (usize, usize)> = HashMap::new();
    for (t, tri) in triangles.iter().enumerate() {
        for e in 0..3 {
            let a = tri[e];
            let b = tri[(e + 1) % 3];
            let key = (a.min(b), a.max(b));
            if count[&key].0 == 1 {
                // Positively oriented triangles traverse boundary edges in
                // counterclockwise loop order.
                next.insert(a, (b, t));
            }
        }
    }
    if next.is_empty() {
        return Err(Error::Mesh("mesh has no boundary edges".into()));
    }
    let start = *next.keys().min().unwrap();
    let mut loop_edges = Vec::with_capacity(next.len());
    let mut cur = start;
    loop {
        let &(to, tri) = next
            .get(&cur)
            .ok_or_else(|| Error::Mesh("boundary loop is not closed".into()))?;
        loop_edges.push(BoundaryEdge {
            from: cur,
            to,
            triangle: tri,
        });
        cur = to;
        if cur == start {
            break;
        }
        if loop_edges.len() > next.len() {
            return Err(Error::Mesh("boundary loop does not close".into()));
        }
    }
    if loop_edges.len() != next.len() {
        return Err(Error::Mesh(
            "boundary edges form more than one loop".into(),
        ));
    }
    // Orientation sanity: the loop must enclose positive area.
    let area = pairwise_sum_by(loop_edges.len(), &|i| {
        let a = nodes[loop_edges[i].from];
        let b = nodes[loop_edges[i].to];
        a[0] * b[1] - a[1] * b[0]
    });
    if area <= R::zero() {
        return Err(Error::Mesh("boundary loop is not counterclockwise".into()));
    }
    Ok(loop_edges)
}

fn max_edge_length<R: Real>(nodes: &[Point<R>], triangles: &[[usize; 3]]) -> R {
    let mut h = R::zero();
    for tri in triangles {
        for e in 0..3 {
            let d = dist(nodes[tri[e]], nodes[tri[(e + 1) % 3]]);
            if d > h {
                h = d;
            }
        }
    }
    h
}

fn min_angle<R: Real>(nodes: &[Point<R>], triangles: &[[usize; 3]]) -> R {
    let mut worst = R::PI();
    for tri in triangles {
        for e in 0..3 {
            let a = nodes[tri[e]];
            let b = nodes[tri[(e + 1) % 3]];
            let c = nodes[tri[(e + 2) % 3]];
            let u = [b[0] - a[0], b[1] - a[1]];
            let v = [c[0] - a[0], c[1] - a[1]];
            let num = u[0] * v[1] - u[1] * v[0];
            let den = u[0] * v[0] + u[1] * v[1];
            let ang = num.atan2(den).abs();
            if ang < worst {
                worst = ang;
            }
        }
    }
    worst * R::of(180.0) / R::PI()
}

fn centroid_of_nodes<R: Real>(nodes: &[Point<R>]) -> Point<R> {
    let n = R::of(nodes.len() as f64);
    let x = pairwise_sum_by(nodes.len(), &|i| nodes[i][0]) / n;
    let y = pairwise_sum_by(nodes.len(), &|i| nodes[i][1]) / n;
    [x, y]
}
