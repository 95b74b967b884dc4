//! Quadrature kernels.
//!
//! For a P1 function `u` on a triangle the composition with the piecewise
//! nonlinearity is integrated exactly: the coarea reduction turns
//! `int_T G(u) dx` into one-dimensional integrals of `G` against the level
//! line length, which is piecewise linear in the level. Splitting at the
//! breakpoints of `G` and applying 2-point Gauss (exact through cubics)
//! leaves no quadrature error, so jumps of `f` are never smeared.

use crate::geometry::{tri_signed_area, Point};
use crate::nonlinearity::Nonlinearity;
use crate::scalar::Real;

/// Which function of `u` to integrate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Integrand {
    /// `f(u)`
    F,
    /// `F(u) = int_0^u f`
    Antiderivative,
    /// `u f(u)`
    UTimesF,
}

fn eval_integrand<R: Real>(nl: &Nonlinearity<R>, kind: Integrand, t: R) -> R {
    match kind {
        Integrand::F => nl.eval(t),
        Integrand::Antiderivative => nl.antiderivative(t),
        Integrand::UTimesF => t * nl.eval(t),
    }
}

/// `int_a^b G(t) (c0 + c1 t) dt`, split at the breakpoints of `f` and
/// integrated with 2-point Gauss per smooth subinterval. Exact because the
/// integrand is at most cubic between breakpoints.
fn band_integral<R: Real>(
    nl: &Nonlinearity<R>,
    kind: Integrand,
    a: R,
    b: R,
    c0: R,
    c1: R,
) -> R {
    if b <= a {
        return R::zero();
    }
    let mut cuts: Vec<R> = vec![a];
    for t in nl.breakpoints() {
        if t > a && t < b {
            cuts.push(t);
        }
    }
    cuts.push(b);
    let inv_sqrt3 = R::one() / R::of(3.0).sqrt();
    let mut acc = R::zero();
    for w in cuts.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let half = (hi - lo) * R::half();
        let mid = (hi + lo) * R::half();
        for &sign in &[-R::one(), R::one()] {
            let t = mid + sign * half * inv_sqrt3;
            acc += half * eval_integrand(nl, kind, t) * (c0 + c1 * t);
        }
    }
    acc
}

/// Exact `int_T G(u) dx` for P1 nodal values `vals` on a triangle of the
/// given area.
///
/// With sorted values `w0 <= w1 <= w2`, the level-length weight is
/// `2A (t - w0)/((w1-w0)(w2-w0))` on `[w0, w1]` and
/// `2A (w2 - t)/((w2-w1)(w2-w0))` on `[w1, w2]`.
pub fn tri_integral_of_u<R: Real>(
    nl: &Nonlinearity<R>,
    kind: Integrand,
    vals: [R; 3],
    area: R,
) -> R {
    let mut w = vals;
    w.sort_by(|a, b| a.partial_cmp(b).expect("finite nodal values"));
    let [w0, w1, w2] = w;
    if w2 - w0 <= R::zero() {
        return area * eval_integrand(nl, kind, w0);
    }
    let two_a = R::two() * area;
    let mut acc = R::zero();
    if w1 > w0 {
        let denom = (w1 - w0) * (w2 - w0);
        // weight (t - w0)/denom
        acc += band_integral(nl, kind, w0, w1, -w0 / denom, R::one() / denom) * two_a;
    }
    if w2 > w1 {
        let denom = (w2 - w1) * (w2 - w0);
        // weight (w2 - t)/denom
        acc += band_integral(nl, kind, w1, w2, w2 / denom, -(R::one() / denom)) * two_a;
    }
    acc
}

/// Exact area of the super-level set `{u > t}` inside one triangle.
pub fn tri_superlevel_area<R: Real>(vals: [R; 3], area: R, t: R) -> R {
    let mut w = vals;
    w.sort_by(|a, b| a.partial_cmp(b).expect("finite nodal values"));
    let [w0, w1, w2] = w;
    if t < w0 {
        return area;
    }
    if t >= w2 {
        return R::zero();
    }
    if t >= w1 {
        // corner above w1: similar triangle at the top vertex
        let q = (w2 - t) / (w2 - w1);
        return area * q * q * (w2 - w1) / (w2 - w0);
    }
    // below w1: complement of the similar corner at the bottom vertex
    let q = (t - w0) / (w1 - w0);
    area * (R::one() - q * q * (w1 - w0) / (w2 - w0))
}

/// Exact `int_{T cap {u > t}} f(u) dx` inside one triangle.
pub fn tri_superlevel_integral_f<R: Real>(
    nl: &Nonlinearity<R>,
    vals: [R; 3],
    area: R,
    t: R,
) -> R {
    let mut w = vals;
    w.sort_by(|a, b| a.partial_cmp(b).expect("finite nodal values"));
    let [w0, w1, w2] = w;
    if w2 - w0 <= R::zero() {
        return if w0 > t { area * nl.eval(w0) } else { R::zero() };
    }
    if t >= w2 {
        return R::zero();
    }
    let two_a = R::two() * area;
    let mut acc = R::zero();
    if w1 > w0 {
        let lo = t.max(w0);
        if lo < w1 {
            let denom = (w1 - w0) * (w2 - w0);
            acc += band_integral(nl, Integrand::F, lo, w1, -w0 / denom, R::one() / denom) * two_a;
        }
    }
    if w2 > w1 {
        let lo = t.max(w1);
        if lo < w2 {
            let denom = (w2 - w1) * (w2 - w0);
            acc += band_integral(nl, Integrand::F, lo, w2, w2 / denom, -(R::one() / denom)) * two_a;
        }
    }
    acc
}

/// Barycentric coordinates of `x` with respect to the triangle `(a, b, c)`.
pub fn barycentric<R: Real>(a: Point<R>, b: Point<R>, c: Point<R>, x: Point<R>) -> [R; 3] {
    let full = tri_signed_area(a, b, c);
    [
        tri_signed_area(x, b, c) / full,
        tri_signed_area(a, x, c) / full,
        tri_signed_area(a, b, x) / full,
    ]
}

/// Clip a convex polygon carrying interpolated `u` values against the half
/// plane `{u >= t}` (`keep_above`) or `{u <= t}`.
fn clip_by_level<R: Real>(poly: &[(Point<R>, R)], t: R, keep_above: bool) -> Vec<(Point<R>, R)> {
    let inside = |v: R| if keep_above { v >= t } else { v <= t };
    let mut out = Vec::with_capacity(poly.len() + 1);
    let n = poly.len();
    for i in 0..n {
        let (pa, va) = poly[i];
        let (pb, vb) = poly[(i + 1) % n];
        let ia = inside(va);
        let ib = inside(vb);
        if ia {
            out.push((pa, va));
        }
        if ia != ib {
            let s = (t - va) / (vb - va);
            out.push((
                [pa[0] + (pb[0] - pa[0]) * s, pa[1] + (pb[1] - pa[1]) * s],
                t,
            ));
        }
    }
    out
}

/// Exact load vector `b_i = int f(u) lambda_i dx` over the mesh triangles.
///
/// Each triangle is clipped at the breakpoint levels of `f` crossing it; on
/// every band `f(u(x))` is affine in `x`, so the product with the P1 basis
/// is a quadratic integrated exactly by the edge-midpoint rule.
pub fn assemble_load_exact<R: Real>(
    mesh: &crate::geometry::Mesh<R>,
    u: &[R],
    nl: &Nonlinearity<R>,
) -> Vec<R> {
    let mut b = vec![R::zero(); mesh.n_nodes()];
    for tri in &mesh.triangles {
        let pts = [
            mesh.nodes[tri[0]],
            mesh.nodes[tri[1]],
            mesh.nodes[tri[2]],
        ];
        let vals = [u[tri[0]], u[tri[1]], u[tri[2]]];
        let wmin = vals[0].min(vals[1]).min(vals[2]);
        let wmax = vals[0].max(vals[1]).max(vals[2]);
        let mut levels: Vec<R> = vec![wmin];
        for t in nl.breakpoints() {
            if t > wmin && t < wmax {
                levels.push(t);
            }
        }
        levels.push(wmax);

        let base: Vec<(Point<R>, R)> = (0..3).map(|i| (pts[i], vals[i])).collect();
        for w in levels.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            let poly = if levels.len() == 2 {
                base.clone()
            } else {
                let upper = clip_by_level(&base, lo, true);
                if upper.len() < 3 {
                    continue;
                }
                let band = clip_by_level(&upper, hi, false);
                if band.len() < 3 {
                    continue;
                }
                band
            };
            // f restricted to u in [lo, hi): affine coefficients from the
            // piece containing the band midpoint.
            let mid_level = (lo + hi) * R::half();
            let f_mid = nl.eval(mid_level);
            let f_lo = nl.eval(lo + (hi - lo) * R::of(0.25));
            let f_hi = nl.eval(lo + (hi - lo) * R::of(0.75));
            // recover a + b t on the band from two probes
            let slope = if hi > lo {
                (f_hi - f_lo) / ((hi - lo) * R::half())
            } else {
                R::zero()
            };
            let offset = f_mid - slope * mid_level;

            // fan triangulation of the band polygon
            for k in 1..poly.len() - 1 {
                let (p0, v0) = poly[0];
                let (p1, v1) = poly[k];
                let (p2, v2) = poly[k + 1];
                let a = tri_signed_area(p0, p1, p2);
                if a == R::zero() {
                    continue;
                }
                let third = R::one() / R::of(3.0);
                // edge midpoints, exact for quadratics
                let mids = [
                    ([(p0[0] + p1[0]) * R::half(), (p0[1] + p1[1]) * R::half()],
                     (v0 + v1) * R::half()),
                    ([(p1[0] + p2[0]) * R::half(), (p1[1] + p2[1]) * R::half()],
                     (v1 + v2) * R::half()),
                    ([(p2[0] + p0[0]) * R::half(), (p2[1] + p0[1]) * R::half()],
                     (v2 + v0) * R::half()),
                ];
                for (pm, um) in mids {
                    let lam = barycentric(pts[0], pts[1], pts[2], pm);
                    let fval = offset + slope * um;
                    let w_q = a * third;
                    for i in 0..3 {
                        b[tri[i]] += w_q * fval * lam[i];
                    }
                }
            }
        }
    }
    b
}

/// Load vector from a nodal (P1) right-hand side via the consistent mass
/// matrix: `b_i = int (sum_j g_j lambda_j) lambda_i dx`, exact for P1 data.
pub fn assemble_load_nodal<R: Real>(mesh: &crate::geometry::Mesh<R>, g: &[R]) -> Vec<R> {
    let mut b = vec![R::zero(); mesh.n_nodes()];
    let twelfth = R::one() / R::of(12.0);
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let a = mesh.triangle_area(t);
        let gv = [g[tri[0]], g[tri[1]], g[tri[2]]];
        for i in 0..3 {
            b[tri[i]] +=
                a * twelfth * (R::two() * gv[i] + gv[(i + 1) % 3] + gv[(i + 2) % 3]);
        }
    }
    b
}

/// Exact `int_Omega u dx` for a P1 nodal function.
pub fn integrate_p1<R: Real>(mesh: &crate::geometry::Mesh<R>, u: &[R]) -> R {
    let third = R::one() / R::of(3.0);
    crate::scalar::pairwise_sum_by(mesh.n_triangles(), &|t| {
        let tri = mesh.triangles[t];
        mesh.triangle_area(t) * third * (u[tri[0]] + u[tri[1]] + u[tri[2]])
    })
}

/// Degree-5 seven-point rule on a triangle: barycentric nodes and weights
/// (weights sum to 1, scaled by the triangle area at the call site).
pub fn seven_point_rule<R: Real>() -> [([R; 3], R); 7] {
    let a1 = R::of(0.059_715_871_789_77);
    let b1 = R::of(0.470_142_064_105_115);
    let w1 = R::of(0.132_394_152_788_506);
    let a2 = R::of(0.797_426_985_353_087);
    let b2 = R::of(0.101_286_507_323_456);
    let w2 = R::of(0.125_939_180_544_827);
    let third = R::one() / R::of(3.0);
    [
        ([third, third, third], R::of(0.225)),
        ([a1, b1, b1], w1),
        ([b1, a1, b1], w1),
        ([b1, b1, a1], w1),
        ([a2, b2, b2], w2),
        ([b2, a2, b2], w2),
        ([b2, b2, a2], w2),
    ]
}

/// Adaptive Simpson quadrature on `[a, b]` with absolute tolerance.
pub fn adaptive_simpson<R: Real>(f: &impl Fn(R) -> R, a: R, b: R, tol: R) -> R {
    fn simpson<R: Real>(fa: R, fm: R, fb: R, h: R) -> R {
        h / R::of(6.0) * (fa + R::of(4.0) * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse<R: Real, F: Fn(R) -> R>(
        f: &F,
        a: R,
        b: R,
        fa: R,
        fm: R,
        fb: R,
        whole: R,
        tol: R,
        depth: usize,
    ) -> R {
        let m = (a + b) * R::half();
        let lm = (a + m) * R::half();
        let rm = (m + b) * R::half();
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(fa, flm, fm, m - a);
        let right = simpson(fm, frm, fb, b - m);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= R::of(15.0) * tol {
            return left + right + delta / R::of(15.0);
        }
        recurse(f, a, m, fa, flm, fm, left, tol * R::half(), depth - 1)
            + recurse(f, m, b, fm, frm, fb, right, tol * R::half(), depth - 1)
    }
    if b <= a {
        return R::zero();
    }
    let m = (a + b) * R::half();
    let fa = f(a);
    let fm = f(m);
    let fb = f(b);
    let whole = simpson(fa, fm, fb, b - a);
    recurse(f, a, b, fa, fm, fb, whole, tol, 48)
}
