//! Wavefront OBJ frame pairs and JSON frame manifests.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{edges_of_faces, GeometryError, Point3, SceneStep};

#[derive(Debug, Error)]
pub enum SceneIoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },
    #[error("{path}: {msg}")]
    Manifest { path: PathBuf, msg: String },
    #[error("frames {t0} and {t1} have different connectivity: {msg}")]
    ConnectivityMismatch { t0: PathBuf, t1: PathBuf, msg: String },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// One parsed OBJ file: positions, triangulated faces and explicit polylines.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObjMesh {
    pub vertices: Vec<Point3>,
    pub faces: Vec<[u32; 3]>,
    pub lines: Vec<[u32; 2]>,
}

/// Parses `v`, `f` and `l` records; polygons are fan-triangulated and other
/// record types ignored. Face tokens may carry `/vt/vn` suffixes and negative
/// (relative) indices.
pub fn parse_obj(text: &str, path: &Path) -> Result<ObjMesh, SceneIoError> {
    let mut mesh = ObjMesh::default();
    let err = |line: usize, msg: String| SceneIoError::Parse { path: path.to_path_buf(), line, msg };
    for (lineno, raw) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let coords: Vec<f64> = tokens
                    .take(3)
                    .map(|t| t.parse::<f64>().map_err(|e| err(lineno, format!("bad coordinate {t:?}: {e}"))))
                    .collect::<Result<_, _>>()?;
                if coords.len() != 3 {
                    return Err(err(lineno, "vertex needs three coordinates".into()));
                }
                mesh.vertices.push([coords[0], coords[1], coords[2]]);
            }
            Some(kind @ ("f" | "l")) => {
                let n = mesh.vertices.len();
                let ids: Vec<u32> = tokens
                    .map(|t| resolve_index(t, n).ok_or_else(|| err(lineno, format!("bad index {t:?}"))))
                    .collect::<Result<_, _>>()?;
                if kind == "f" {
                    if ids.len() < 3 {
                        return Err(err(lineno, "face needs at least three vertices".into()));
                    }
                    for k in 1..ids.len() - 1 {
                        mesh.faces.push([ids[0], ids[k], ids[k + 1]]);
                    }
                } else {
                    if ids.len() < 2 {
                        return Err(err(lineno, "line needs at least two vertices".into()));
                    }
                    mesh.lines.extend(ids.windows(2).map(|w| [w[0], w[1]]));
                }
            }
            _ => {}
        }
    }
    Ok(mesh)
}

fn resolve_index(token: &str, count: usize) -> Option<u32> {
    let head = token.split('/').next()?;
    let raw: i64 = head.parse().ok()?;
    let idx = match raw {
        0 => return None,
        r if r > 0 => r - 1,
        r => count as i64 + r,
    };
    (0..count as i64).contains(&idx).then_some(idx as u32)
}

pub fn read_obj(path: &Path) -> Result<ObjMesh, SceneIoError> {
    let text = fs::read_to_string(path).map_err(|source| SceneIoError::Io { path: path.to_path_buf(), source })?;
    parse_obj(&text, path)
}

/// Loads a `t = 0` / `t = 1` pair of OBJ files that must share connectivity.
pub fn load_frame_pair(t0: &Path, t1: &Path) -> Result<SceneStep, SceneIoError> {
    let a = read_obj(t0)?;
    let b = read_obj(t1)?;
    let mismatch = |msg: String| SceneIoError::ConnectivityMismatch { t0: t0.to_path_buf(), t1: t1.to_path_buf(), msg };
    if a.vertices.len() != b.vertices.len() {
        return Err(mismatch(format!("{} vs {} vertices", a.vertices.len(), b.vertices.len())));
    }
    if a.faces != b.faces {
        return Err(mismatch("face lists differ".into()));
    }
    if a.lines != b.lines {
        return Err(mismatch("line lists differ".into()));
    }
    let mut edges = edges_of_faces(&a.faces);
    edges.extend(a.lines.iter().map(|&[x, y]| if x < y { [x, y] } else { [y, x] }));
    edges.sort_unstable();
    edges.dedup();
    Ok(SceneStep::new(a.vertices, b.vertices, edges, a.faces)?)
}

/// Serializes one snapshot of a scene (`t = 0` when `end` is false).
pub fn write_obj(scene: &SceneStep, end: bool) -> String {
    let verts = if end { &scene.vertices_t1 } else { &scene.vertices_t0 };
    let mut out = String::new();
    for p in verts {
        // `{:?}` prints the shortest string that round-trips exactly.
        let _ = writeln!(out, "v {:?} {:?} {:?}", p[0], p[1], p[2]);
    }
    for f in &scene.faces {
        let _ = writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    let face_edges = edges_of_faces(&scene.faces);
    for e in scene.edges.iter().filter(|e| face_edges.binary_search(e).is_err()) {
        let _ = writeln!(out, "l {} {}", e[0] + 1, e[1] + 1);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FramePair {
    pub t0: PathBuf,
    pub t1: PathBuf,
    /// Scene label; frames with the same label are numbered in order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene: Option<String>,
}

/// Reads a manifest: a JSON array of `{"t0": path, "t1": path}` objects with
/// an optional `"scene"` label. Relative paths resolve against the
/// manifest's directory.
pub fn read_manifest(path: &Path) -> Result<Vec<FramePair>, SceneIoError> {
    let text = fs::read_to_string(path).map_err(|source| SceneIoError::Io { path: path.to_path_buf(), source })?;
    let pairs: Vec<FramePair> = serde_json::from_str(&text)
        .map_err(|e| SceneIoError::Manifest { path: path.to_path_buf(), msg: e.to_string() })?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    Ok(pairs
        .into_iter()
        .map(|p| FramePair { t0: base.join(p.t0), t1: base.join(p.t1), scene: p.scene })
        .collect())
}
