//! Mesh data model and conservative swept bounding boxes.
//!
//! A [`SceneStep`] holds one mesh topology with vertex positions at the start
//! (`t = 0`) and end (`t = 1`) of a time step. Every vertex moves on a straight
//! line between its two positions, so the box spanned by a primitive's corners
//! at both ends encloses its whole trajectory.

mod distance;
pub mod io;
mod rounding;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use distance::{point_triangle_distance, segment_segment_distance};
pub use rounding::{round_down_reduced, round_up_reduced};
pub(crate) use rounding::{f32_above, f32_below};

pub type Point3 = [f64; 3];

/// Padding applied per unit of inflation to an axis along which a box has
/// zero extent (world units).
pub const ZERO_EXTENT_PAD: f64 = 1e-6;

/// Sentinel for unused slots in [`Aabb::vertices`].
pub const NO_VERTEX: u32 = u32::MAX;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("non-finite value {0}")]
    NonFinite(f64),
    #[error("vertex count mismatch: {t0} at t=0, {t1} at t=1")]
    VertexCountMismatch { t0: usize, t1: usize },
    #[error("{kind:?} {index} references vertex {vertex} out of {count}")]
    IndexOutOfRange {
        kind: PrimitiveKind,
        index: usize,
        vertex: usize,
        count: usize,
    },
    #[error("{kind:?} {index} repeats vertex {vertex}")]
    RepeatedVertex {
        kind: PrimitiveKind,
        index: usize,
        vertex: usize,
    },
    #[error("inflation must be finite and non-negative, got {0}")]
    BadInflation(f64),
    #[error("mesh has more than {} vertices", u32::MAX - 1)]
    TooManyVertices,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PrimitiveKind {
    Vertex,
    Edge,
    Face,
}

/// A vertex, edge or face of a [`SceneStep`]. Orders by `(kind, index)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PrimitiveId {
    pub kind: PrimitiveKind,
    pub index: u32,
}

impl PrimitiveId {
    pub fn vertex(index: u32) -> Self {
        Self { kind: PrimitiveKind::Vertex, index }
    }
    pub fn edge(index: u32) -> Self {
        Self { kind: PrimitiveKind::Edge, index }
    }
    pub fn face(index: u32) -> Self {
        Self { kind: PrimitiveKind::Face, index }
    }
}

/// Two snapshots of a triangle mesh sharing one connectivity.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SceneStep {
    pub vertices_t0: Vec<Point3>,
    pub vertices_t1: Vec<Point3>,
    pub edges: Vec<[u32; 2]>,
    pub faces: Vec<[u32; 3]>,
}

impl SceneStep {
    /// Validated constructor.
    pub fn new(
        vertices_t0: Vec<Point3>,
        vertices_t1: Vec<Point3>,
        edges: Vec<[u32; 2]>,
        faces: Vec<[u32; 3]>,
    ) -> Result<Self, GeometryError> {
        let scene = Self { vertices_t0, vertices_t1, edges, faces };
        scene.validate()?;
        Ok(scene)
    }

    /// Builds a scene from faces alone, deriving the unique edge set.
    pub fn from_faces(
        vertices_t0: Vec<Point3>,
        vertices_t1: Vec<Point3>,
        faces: Vec<[u32; 3]>,
    ) -> Result<Self, GeometryError> {
        let edges = edges_of_faces(&faces);
        Self::new(vertices_t0, vertices_t1, edges, faces)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let n = self.vertices_t0.len();
        if n != self.vertices_t1.len() {
            return Err(GeometryError::VertexCountMismatch { t0: n, t1: self.vertices_t1.len() });
        }
        if n >= NO_VERTEX as usize {
            return Err(GeometryError::TooManyVertices);
        }
        for p in self.vertices_t0.iter().chain(&self.vertices_t1) {
            if let Some(&bad) = p.iter().find(|c| !c.is_finite()) {
                return Err(GeometryError::NonFinite(bad));
            }
        }
        for (i, e) in self.edges.iter().enumerate() {
            check_indices(PrimitiveKind::Edge, i, e, n)?;
        }
        for (i, f) in self.faces.iter().enumerate() {
            check_indices(PrimitiveKind::Face, i, f, n)?;
        }
        Ok(())
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices_t0.len()
    }

    pub fn num_primitives(&self) -> usize {
        self.vertices_t0.len() + self.edges.len() + self.faces.len()
    }

    /// Mesh vertex indices of a primitive, padded with [`NO_VERTEX`].
    pub fn vertex_ids(&self, id: PrimitiveId) -> [u32; 3] {
        let i = id.index as usize;
        match id.kind {
            PrimitiveKind::Vertex => [id.index, NO_VERTEX, NO_VERTEX],
            PrimitiveKind::Edge => [self.edges[i][0], self.edges[i][1], NO_VERTEX],
            PrimitiveKind::Face => self.faces[i],
        }
    }

    pub fn contains(&self, id: PrimitiveId) -> bool {
        let i = id.index as usize;
        match id.kind {
            PrimitiveKind::Vertex => i < self.vertices_t0.len(),
            PrimitiveKind::Edge => i < self.edges.len(),
            PrimitiveKind::Face => i < self.faces.len(),
        }
    }

    /// Position of vertex `v` at time `t` along its linear trajectory.
    pub fn position_at(&self, v: u32, t: f64) -> Point3 {
        let a = self.vertices_t0[v as usize];
        let b = self.vertices_t1[v as usize];
        [0, 1, 2].map(|k| a[k] + t * (b[k] - a[k]))
    }
}

fn check_indices(kind: PrimitiveKind, index: usize, ids: &[u32], n: usize) -> Result<(), GeometryError> {
    for (k, &v) in ids.iter().enumerate() {
        if v as usize >= n {
            return Err(GeometryError::IndexOutOfRange { kind, index, vertex: v as usize, count: n });
        }
        if ids[..k].contains(&v) {
            return Err(GeometryError::RepeatedVertex { kind, index, vertex: v as usize });
        }
    }
    Ok(())
}

/// Unique undirected edges of a face list, sorted by `(min, max)` vertex.
pub fn edges_of_faces(faces: &[[u32; 3]]) -> Vec<[u32; 2]> {
    let mut edges: Vec<[u32; 2]> = faces
        .iter()
        .flat_map(|f| [[f[0], f[1]], [f[1], f[2]], [f[2], f[0]]])
        .map(|[a, b]| if a < b { [a, b] } else { [b, a] })
        .collect();
    edges.sort_unstable();
    edges.dedup();
    edges
}

/// Single-precision box enclosing one primitive's swept trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: [f32; 3],
    pub max: [f32; 3],
    pub owner: PrimitiveId,
    /// Mesh vertices of the owner, for adjacency filtering.
    pub vertices: [u32; 3],
}

impl Aabb {
    #[inline]
    pub fn overlaps_axis(&self, other: &Aabb, axis: usize) -> bool {
        self.min[axis] <= other.max[axis] && other.min[axis] <= self.max[axis]
    }

    #[inline]
    pub fn overlaps(&self, other: &Aabb) -> bool {
        (0..3).all(|a| self.overlaps_axis(other, a))
    }

    pub fn contains_point(&self, p: &Point3) -> bool {
        (0..3).all(|a| f64::from(self.min[a]) <= p[a] && p[a] <= f64::from(self.max[a]))
    }

    pub fn contains_box(&self, other: &Aabb) -> bool {
        (0..3).all(|a| self.min[a] <= other.min[a] && other.max[a] <= self.max[a])
    }

    /// True when the owners share at least one mesh vertex.
    #[inline]
    pub fn shares_vertex(&self, other: &Aabb) -> bool {
        self.vertices
            .iter()
            .filter(|&&v| v != NO_VERTEX)
            .any(|v| other.vertices.contains(v))
    }

    pub fn center(&self, axis: usize) -> f64 {
        (f64::from(self.min[axis]) + f64::from(self.max[axis])) * 0.5
    }
}

/// One conservative box per vertex, edge and face, in that order.
///
/// `inflation` pads each axis by that fraction of the box's extent along the
/// axis (or of [`ZERO_EXTENT_PAD`] when the extent is zero) before the corners
/// are rounded outward to single precision.
pub fn build_boxes(scene: &SceneStep, inflation: f64) -> Result<Vec<Aabb>, GeometryError> {
    if !(inflation.is_finite() && inflation >= 0.0) {
        return Err(GeometryError::BadInflation(inflation));
    }
    scene.validate()?;
    let ids: Vec<PrimitiveId> = (0..scene.vertices_t0.len() as u32)
        .map(PrimitiveId::vertex)
        .chain((0..scene.edges.len() as u32).map(PrimitiveId::edge))
        .chain((0..scene.faces.len() as u32).map(PrimitiveId::face))
        .collect();
    Ok(ids
        .par_iter()
        .map(|&id| primitive_box(scene, id, inflation))
        .collect())
}

fn primitive_box(scene: &SceneStep, owner: PrimitiveId, inflation: f64) -> Aabb {
    let vertices = scene.vertex_ids(owner);
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for &v in vertices.iter().filter(|&&v| v != NO_VERTEX) {
        for p in [&scene.vertices_t0[v as usize], &scene.vertices_t1[v as usize]] {
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
    }
    if inflation > 0.0 {
        for a in 0..3 {
            let extent = hi[a] - lo[a];
            let pad = inflation * if extent > 0.0 { extent } else { ZERO_EXTENT_PAD };
            lo[a] -= pad;
            hi[a] += pad;
        }
    }
    Aabb {
        min: lo.map(f32_below),
        max: hi.map(f32_above),
        owner,
        vertices,
    }
}
