//! Seeded synthetic scenes: jittered cloth grids, triangle soups, random box
//! sets and random narrow-phase queries.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::broadphase::NarrowQuery;
use crate::geometry::{Aabb, Point3, PrimitiveId, PrimitiveKind, SceneStep, NO_VERTEX};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_unit(rng: &mut impl Rng) -> Point3 {
    loop {
        let p: Point3 = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        let n2: f64 = p.iter().map(|x| x * x).sum();
        if n2 > 1e-4 && n2 <= 1.0 {
            let n = n2.sqrt();
            return p.map(|x| x / n);
        }
    }
}

/// Square cloth of `side x side` vertices with unit total extent, lying near
/// `z = 0` with jittered heights. Each vertex moves by a random vector of
/// length up to `motion`, so larger values produce more self-contact.
pub fn cloth(side: usize, seed: u64, motion: f64) -> SceneStep {
    cloth_strip(side, side, seed, motion)
}

/// Rectangular cloth of `nx x ny` vertices on a uniform grid whose longer
/// side has unit length; otherwise as [`cloth`].
pub fn cloth_strip(nx: usize, ny: usize, seed: u64, motion: f64) -> SceneStep {
    assert!(nx >= 2 && ny >= 2, "cloth needs at least 2x2 vertices");
    let mut rng = rng(seed);
    let h = 1.0 / (nx.max(ny) - 1) as f64;
    let mut v0 = Vec::with_capacity(nx * ny);
    let mut v1 = Vec::with_capacity(nx * ny);
    for i in 0..ny {
        for j in 0..nx {
            let p = [
                j as f64 * h + rng.gen_range(-0.2..0.2) * h,
                i as f64 * h + rng.gen_range(-0.2..0.2) * h,
                rng.gen_range(-0.5..0.5) * h,
            ];
            let d = random_unit(&mut rng);
            let s = motion * rng.gen::<f64>();
            v1.push(std::array::from_fn(|k| p[k] + s * d[k]));
            v0.push(p);
        }
    }
    let mut faces = Vec::with_capacity(2 * (nx - 1) * (ny - 1));
    for i in 0..ny - 1 {
        for j in 0..nx - 1 {
            let a = (i * nx + j) as u32;
            let (b, c, d) = (a + 1, a + nx as u32, a + nx as u32 + 1);
            faces.push([a, b, d]);
            faces.push([a, d, c]);
        }
    }
    SceneStep::from_faces(v0, v1, faces).expect("generated cloth is valid")
}

/// `count` independent triangles of edge length about `size` scattered in a
/// cube of side `extent`, each translated by up to `motion` and slightly
/// deformed.
pub fn soup(count: usize, seed: u64, extent: f64, size: f64, motion: f64) -> SceneStep {
    let mut rng = rng(seed);
    let mut v0 = Vec::with_capacity(3 * count);
    let mut v1 = Vec::with_capacity(3 * count);
    let mut faces = Vec::with_capacity(count);
    for f in 0..count {
        let c: Point3 = std::array::from_fn(|_| rng.gen_range(0.0..extent));
        let d = random_unit(&mut rng);
        let s = motion * rng.gen::<f64>();
        for _ in 0..3 {
            let o = random_unit(&mut rng);
            let w = random_unit(&mut rng);
            let p: Point3 = std::array::from_fn(|k| c[k] + 0.6 * size * o[k]);
            v0.push(p);
            v1.push(std::array::from_fn(|k| p[k] + s * d[k] + 0.1 * size * w[k]));
        }
        let b = 3 * f as u32;
        faces.push([b, b + 1, b + 2]);
    }
    SceneStep::from_faces(v0, v1, faces).expect("generated soup is valid")
}

/// Random boxes with mixed owner kinds, vertex ids from a small pool (so
/// some boxes share vertices) and corners snapped to a coarse grid (so equal
/// coordinates are common).
pub fn random_boxes(count: usize, seed: u64) -> Vec<Aabb> {
    let mut rng = rng(seed);
    let pool = (count as u32 / 2).max(4);
    let grid = rng.gen_range(8..64) as f32;
    let size = rng.gen_range(0.5..4.0f32);
    let mut counters = [0u32; 3];
    (0..count)
        .map(|_| {
            let kind = match rng.gen_range(0..3) {
                0 => PrimitiveKind::Vertex,
                1 => PrimitiveKind::Edge,
                _ => PrimitiveKind::Face,
            };
            let index = &mut counters[kind as usize];
            let owner = PrimitiveId { kind, index: *index };
            *index += 1;
            let mut vertices = [NO_VERTEX; 3];
            let n = match kind {
                PrimitiveKind::Vertex => 1,
                PrimitiveKind::Edge => 2,
                PrimitiveKind::Face => 3,
            };
            for v in vertices.iter_mut().take(n) {
                *v = rng.gen_range(0..pool);
            }
            let min: [f32; 3] = std::array::from_fn(|_| (rng.gen_range(0.0..grid)).floor());
            let max: [f32; 3] = std::array::from_fn(|k| min[k] + (rng.gen_range(0.0..size) * 4.0).floor() / 4.0);
            Aabb { min, max, owner, vertices }
        })
        .collect()
}

/// A single triangle and a lone vertex hovering `gap` above a random interior
/// point, moving toward (and possibly through) it. The frame is randomly
/// rotated.
pub fn near_touching_vf(seed: u64, gap: f64) -> SceneStep {
    vf_pair(seed, gap, |rng| rng.gen_range(0.5..2.0) * gap.max(rng.gen_range(0.0..1.0)))
}

/// Like [`near_touching_vf`], but the vertex only descends to between 10%
/// and 90% of `gap` above the triangle, so the pair never touches.
pub fn hovering_vf(seed: u64, gap: f64) -> SceneStep {
    vf_pair(seed, gap, |rng| rng.gen_range(0.1..0.9) * gap)
}

fn vf_pair(seed: u64, gap: f64, depth: impl FnOnce(&mut ChaCha8Rng) -> f64) -> SceneStep {
    let mut rng = rng(seed);
    let n = random_unit(&mut rng);
    let helper = if n[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let e1 = normalize(cross(&n, &helper));
    let e2 = cross(&n, &e1);
    let at = |x: f64, y: f64, z: f64| -> Point3 { std::array::from_fn(|k| x * e1[k] + y * e2[k] + z * n[k]) };
    let tri = [at(0.0, 0.0, 0.0), at(1.0, 0.0, 0.0), at(0.0, 1.0, 0.0)];
    let (u, v) = (rng.gen_range(0.1..0.4), rng.gen_range(0.1..0.4));
    let depth = depth(&mut rng);
    let p0 = at(u, v, gap);
    let p1 = at(u + rng.gen_range(-0.05..0.05), v + rng.gen_range(-0.05..0.05), gap - depth);
    let v0 = vec![tri[0], tri[1], tri[2], p0];
    let v1 = vec![tri[0], tri[1], tri[2], p1];
    SceneStep::from_faces(v0, v1, vec![[0, 1, 2]]).expect("generated pair is valid")
}

fn cross(a: &Point3, b: &Point3) -> Point3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn normalize(a: Point3) -> Point3 {
    let n = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    a.map(|x| x / n)
}

/// Random vertex-face or edge-edge query in the unit cube. About half are
/// built to touch at a random time (up to rounding of the end positions);
/// the rest have independent random endpoints.
pub fn random_query(rng: &mut impl Rng, edge_edge: bool) -> NarrowQuery {
    let mut t0: [Point3; 4] = std::array::from_fn(|_| std::array::from_fn(|_| rng.gen_range(0.0..1.0)));
    let mut t1: [Point3; 4] = std::array::from_fn(|_| std::array::from_fn(|_| rng.gen_range(0.0..1.0)));
    if rng.gen_bool(0.5) {
        // Positions at the contact time, extrapolated to t = 1.
        let tc: f64 = rng.gen_range(0.05..1.0);
        let mut at: [Point3; 4] = std::array::from_fn(|_| std::array::from_fn(|_| rng.gen_range(0.0..1.0)));
        let (a, b): (f64, f64) = (rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0));
        if edge_edge {
            // p0 + a (p1 - p0) == q0 + b (q1 - q0)
            let target: Point3 = std::array::from_fn(|k| at[0][k] + a * (at[1][k] - at[0][k]));
            let b = 0.05 + 0.9 * b;
            at[2] = std::array::from_fn(|k| (target[k] - b * at[3][k]) / (1.0 - b));
        } else {
            let (u, v) = if a + b > 1.0 { (1.0 - a, 1.0 - b) } else { (a, b) };
            at[0] = std::array::from_fn(|k| at[1][k] + u * (at[2][k] - at[1][k]) + v * (at[3][k] - at[1][k]));
        }
        for i in 0..4 {
            t1[i] = std::array::from_fn(|k| t0[i][k] + (at[i][k] - t0[i][k]) / tc);
        }
    }
    if rng.gen_bool(0.5) {
        std::mem::swap(&mut t0, &mut t1);
    }
    if edge_edge {
        NarrowQuery::edge_edge(t0, t1)
    } else {
        NarrowQuery::vertex_face(t0, t1)
    }
}
