//! Double-precision closest-point distances between static primitives.

use super::Point3;

#[inline]
pub(crate) fn sub(a: &Point3, b: &Point3) -> Point3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
fn dot(a: &Point3, b: &Point3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
fn axpy(s: f64, d: &Point3, p: &Point3) -> Point3 {
    [p[0] + s * d[0], p[1] + s * d[1], p[2] + s * d[2]]
}

fn dist(a: &Point3, b: &Point3) -> f64 {
    let d = sub(a, b);
    dot(&d, &d).sqrt()
}

/// Euclidean distance from `p` to the triangle `(a, b, c)`.
///
/// Voronoi-region walk over the triangle's vertices, edges and interior;
/// degenerate triangles fall through to the closest edge.
pub fn point_triangle_distance(p: &Point3, a: &Point3, b: &Point3, c: &Point3) -> f64 {
    let ab = sub(b, a);
    let ac = sub(c, a);
    let ap = sub(p, a);
    let d1 = dot(&ab, &ap);
    let d2 = dot(&ac, &ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return dist(p, a);
    }
    let bp = sub(p, b);
    let d3 = dot(&ab, &bp);
    let d4 = dot(&ac, &bp);
    if d3 >= 0.0 && d4 <= d3 {
        return dist(p, b);
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let denom = d1 - d3;
        if denom > 0.0 {
            return dist(p, &axpy(d1 / denom, &ab, a));
        }
    }
    let cp = sub(p, c);
    let d5 = dot(&ab, &cp);
    let d6 = dot(&ac, &cp);
    if d6 >= 0.0 && d5 <= d6 {
        return dist(p, c);
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let denom = d2 - d6;
        if denom > 0.0 {
            return dist(p, &axpy(d2 / denom, &ac, a));
        }
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let denom = (d4 - d3) + (d5 - d6);
        if denom > 0.0 {
            return dist(p, &axpy((d4 - d3) / denom, &sub(c, b), b));
        }
    }
    let denom = va + vb + vc;
    if denom > 0.0 && va >= 0.0 && vb >= 0.0 && vc >= 0.0 {
        let v = vb / denom;
        let w = vc / denom;
        let q = axpy(w, &ac, &axpy(v, &ab, a));
        return dist(p, &q);
    }
    // Degenerate triangle: closest of its three edges.
    segment_point(p, a, b)
        .min(segment_point(p, b, c))
        .min(segment_point(p, c, a))
}

fn segment_point(p: &Point3, a: &Point3, b: &Point3) -> f64 {
    let ab = sub(b, a);
    let len2 = dot(&ab, &ab);
    if len2 == 0.0 {
        return dist(p, a);
    }
    let s = (dot(&sub(p, a), &ab) / len2).clamp(0.0, 1.0);
    dist(p, &axpy(s, &ab, a))
}

/// Euclidean distance between segments `(p0, p1)` and `(q0, q1)`.
pub fn segment_segment_distance(p0: &Point3, p1: &Point3, q0: &Point3, q1: &Point3) -> f64 {
    let d1 = sub(p1, p0);
    let d2 = sub(q1, q0);
    let r = sub(p0, q0);
    let a = dot(&d1, &d1);
    let e = dot(&d2, &d2);
    let f = dot(&d2, &r);
    if a == 0.0 && e == 0.0 {
        return dist(p0, q0);
    }
    let (s, t) = if a == 0.0 {
        (0.0, (f / e).clamp(0.0, 1.0))
    } else {
        let c = dot(&d1, &r);
        if e == 0.0 {
            ((-c / a).clamp(0.0, 1.0), 0.0)
        } else {
            let b = dot(&d1, &d2);
            let denom = a * e - b * b;
            let mut s = if denom > 0.0 { ((b * f - c * e) / denom).clamp(0.0, 1.0) } else { 0.0 };
            let mut t = (b * s + f) / e;
            if t < 0.0 {
                t = 0.0;
                s = (-c / a).clamp(0.0, 1.0);
            } else if t > 1.0 {
                t = 1.0;
                s = ((b - c) / a).clamp(0.0, 1.0);
            }
            (s, t)
        }
    };
    dist(&axpy(s, &d1, p0), &axpy(t, &d2, q0))
}
