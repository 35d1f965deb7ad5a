//! Exact ground truth for vertex-face and edge-edge queries.
//!
//! Inputs are doubles, hence rationals, so the coplanarity polynomial of a
//! query (a cubic in `t`) has exactly computable coefficients. Its real roots
//! in `[0, 1]` are isolated with a Sturm sequence and bracketed by dyadic
//! intervals of width `2^-precision`. At each root, in increasing order, the
//! barycentric or segment parameters are bounded over the bracket; the first
//! root whose parameters certainly lie in the domain is the earliest impact.
//!
//! Queries with no valid root additionally get a certified lower bound on
//! `min |F|_inf` over the parameter domain by branch and bound over exact
//! corner values.

mod poly;

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, One, Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::broadphase::{CandidatePair, NarrowQuery, QueryKind};
use crate::geometry::{PrimitiveId, SceneStep};

pub use poly::{isolate_unit_roots, Dyadic, IntPoly, RatPoly, RootBracket};

/// Smallest accepted root-bracket precision, in bits.
pub const MIN_PRECISION: u32 = 128;
/// Precision is doubled on indeterminate inside tests up to this many bits.
pub const PRECISION_CAP: u32 = 2048;
/// Box evaluations allowed when certifying a separation margin.
pub const MARGIN_BUDGET: usize = 4096;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Indeterminate {
    /// All four points stay coplanar over the whole step.
    CoplanarMotion,
    /// A root's inside test stayed ambiguous at the precision cap.
    BoundaryContact,
    /// The triangle or edge pair degenerates at a root.
    Degenerate,
    /// No valid root, but no positive margin could be certified.
    MarginUnresolved,
}

#[derive(Debug, Clone, PartialEq)]
pub enum OracleVerdict {
    /// The earliest valid root lies in `[lo, hi]`.
    Colliding { lo: BigRational, hi: BigRational },
    /// No valid root; `|F|_inf >= margin` over the whole domain.
    Separated { margin: f64 },
    Indeterminate(Indeterminate),
}

impl OracleVerdict {
    pub fn colliding(&self) -> bool {
        matches!(self, OracleVerdict::Colliding { .. })
    }

    pub fn is_indeterminate(&self) -> bool {
        matches!(self, OracleVerdict::Indeterminate(_))
    }

    pub fn earliest_root_bounds(&self) -> Option<(&BigRational, &BigRational)> {
        match self {
            OracleVerdict::Colliding { lo, hi } => Some((lo, hi)),
            _ => None,
        }
    }

    pub fn certified_margin(&self) -> Option<f64> {
        match self {
            OracleVerdict::Separated { margin } => Some(*margin),
            _ => None,
        }
    }

    /// True when `toi` does not exceed the exact earliest root.
    pub fn admits_toi(&self, toi: f64) -> bool {
        match self {
            OracleVerdict::Colliding { lo, .. } => rat(toi) <= *lo,
            _ => true,
        }
    }
}

fn rat(x: f64) -> BigRational {
    BigRational::from_f64(x).expect("finite input")
}

type Vec3 = [IntPoly; 3];

/// `(m, e)` with `x = m 2^e` exactly.
fn decompose(x: f64) -> (BigInt, i64) {
    let bits = x.to_bits();
    let exp = ((bits >> 52) & 0x7ff) as i64;
    let frac = bits & ((1 << 52) - 1);
    let (m, e) = if exp == 0 { (frac, -1074) } else { (frac | 1 << 52, exp - 1075) };
    let m = BigInt::from(m);
    (if x.is_sign_negative() { -m } else { m }, e)
}

/// Vertex trajectories with every coordinate of the query scaled by the same
/// power of two so all coefficients are integers. The polynomials built from
/// them are homogeneous, so the scaling multiplies each by a positive
/// constant and leaves roots and signs unchanged.
fn trajectories(q: &NarrowQuery) -> Vec<Vec3> {
    let coords = q.t0.iter().chain(&q.t1).flatten();
    let shift = coords.filter(|x| **x != 0.0).map(|&x| decompose(x).1).min().unwrap_or(0).min(0);
    let int = |x: f64| {
        let (m, e) = decompose(x);
        m << (e - shift) as usize
    };
    (0..4)
        .map(|i| {
            std::array::from_fn(|k| {
                let a = int(q.t0[i][k]);
                let b = int(q.t1[i][k]);
                IntPoly::linear(a.clone(), b - a)
            })
        })
        .collect()
}

fn sub(a: &Vec3, b: &Vec3) -> Vec3 {
    std::array::from_fn(|k| a[k].sub(&b[k]))
}

fn cross(a: &Vec3, b: &Vec3) -> Vec3 {
    [
        a[1].mul(&b[2]).sub(&a[2].mul(&b[1])),
        a[2].mul(&b[0]).sub(&a[0].mul(&b[2])),
        a[0].mul(&b[1]).sub(&a[1].mul(&b[0])),
    ]
}

fn dot(a: &Vec3, b: &Vec3) -> IntPoly {
    a[0].mul(&b[0]).add(&a[1].mul(&b[1])).add(&a[2].mul(&b[2]))
}

/// Polynomials in `t` whose signs decide whether the coplanar configuration
/// at `t` is in contact: every entry of `nonneg` must be `>= 0` and
/// `denominator` must be positive.
struct InsideTest {
    denominator: IntPoly,
    nonneg: Vec<IntPoly>,
}

fn coplanarity_and_inside(q: &NarrowQuery) -> (IntPoly, InsideTest) {
    let x = trajectories(q);
    match q.kind {
        QueryKind::VertexFace => {
            let e1 = sub(&x[2], &x[1]);
            let e2 = sub(&x[3], &x[1]);
            let w = sub(&x[0], &x[1]);
            let n = cross(&e1, &e2);
            let coplanar = dot(&n, &w);
            let nu = dot(&cross(&w, &e2), &n);
            let nv = dot(&cross(&e1, &w), &n);
            let den = dot(&n, &n);
            let rest = den.sub(&nu).sub(&nv);
            (coplanar, InsideTest { denominator: den, nonneg: vec![nu, nv, rest] })
        }
        QueryKind::EdgeEdge => {
            let d1 = sub(&x[1], &x[0]);
            let d2 = sub(&x[3], &x[2]);
            let r = sub(&x[2], &x[0]);
            let n = cross(&d1, &d2);
            let coplanar = dot(&n, &r);
            let ns = dot(&cross(&r, &d2), &n);
            let nw = dot(&cross(&r, &d1), &n);
            let den = dot(&n, &n);
            let (s_rest, w_rest) = (den.sub(&ns), den.sub(&nw));
            (coplanar, InsideTest { denominator: den, nonneg: vec![ns, s_rest, nw, w_rest] })
        }
    }
}

enum Tri {
    Yes,
    No,
    Unknown,
}

fn inside_at(test: &InsideTest, lo: &Dyadic, hi: &Dyadic) -> Tri {
    let (dmin, _) = test.denominator.range(lo, hi);
    if !dmin.is_positive() {
        return Tri::Unknown;
    }
    let mut all = true;
    for p in &test.nonneg {
        let (min, max) = p.range(lo, hi);
        if max.is_negative() {
            return Tri::No;
        }
        if min.is_negative() {
            all = false;
        }
    }
    if all {
        Tri::Yes
    } else {
        Tri::Unknown
    }
}

/// Ground-truth verdict for one query at `precision` bits (at least
/// [`MIN_PRECISION`]).
pub fn oracle_toi(query: &NarrowQuery, precision: u32) -> OracleVerdict {
    let precision = precision.max(MIN_PRECISION);
    let (coplanar, test) = coplanarity_and_inside(query);
    if coplanar.is_zero() {
        return separated_or(query, Indeterminate::CoplanarMotion);
    }
    let q = coplanar.to_rat().square_free();
    let (sturm, roots) = isolate_unit_roots(&q, precision);

    let mut unresolved: Option<(BigRational, Indeterminate)> = None;
    for root in roots {
        let mut bracket = root;
        let mut bits = precision;
        loop {
            let (dlo, dhi) = bracket.dyadic_bounds();
            let exact = matches!(bracket, RootBracket::Exact(_));
            match inside_at(&test, dlo, dhi) {
                Tri::Yes => {
                    let (lo, hi) = bracket.bounds();
                    // An earlier ambiguous root could be the true first contact.
                    let lo = unresolved.map_or(lo, |(first, _)| first);
                    return OracleVerdict::Colliding { lo, hi };
                }
                Tri::No => break,
                Tri::Unknown if exact || bits >= PRECISION_CAP => {
                    if unresolved.is_none() {
                        let lo = dlo.to_rational();
                        let why = if test.denominator.range(dlo, dhi).0.is_positive() {
                            Indeterminate::BoundaryContact
                        } else {
                            Indeterminate::Degenerate
                        };
                        unresolved = Some((lo, why));
                    }
                    break;
                }
                Tri::Unknown => {
                    bits = (bits * 2).min(PRECISION_CAP);
                    bracket = bracket.refine(&sturm, bits);
                }
            }
        }
    }
    match unresolved {
        Some((_, why)) => OracleVerdict::Indeterminate(why),
        None => separated_or(query, Indeterminate::MarginUnresolved),
    }
}

fn separated_or(query: &NarrowQuery, why: Indeterminate) -> OracleVerdict {
    match certify_margin(query, MARGIN_BUDGET) {
        Some(margin) => OracleVerdict::Separated { margin },
        None => OracleVerdict::Indeterminate(why),
    }
}

/// Exact multilinear form of `F`: `coef[k][m]` multiplies the monomial
/// `t^(m>>2 & 1) u^(m>>1 & 1) v^(m & 1)` of component `k`, all scaled by
/// `2^scale`.
struct Multilinear {
    coef: [[BigInt; 8]; 3],
    scale: u32,
}

impl Multilinear {
    fn new(q: &NarrowQuery) -> Self {
        // Point i contributes x_i(t) = a + t d with weight w_i(u, v); each
        // weight is a signed sum of monomials in (u, v).
        let weights: [&[(i32, usize)]; 4] = match q.kind {
            // p - (1 - u - v) a - u b - v c
            QueryKind::VertexFace => [&[(1, 0)], &[(-1, 0), (1, 2), (1, 1)], &[(-1, 2)], &[(-1, 1)]],
            // (1 - u) p0 + u p1 - (1 - v) q0 - v q1
            QueryKind::EdgeEdge => [&[(1, 0), (-1, 2)], &[(1, 2)], &[(-1, 0), (1, 1)], &[(-1, 1)]],
        };
        let mut coef: [[BigRational; 8]; 3] = std::array::from_fn(|_| std::array::from_fn(|_| BigRational::zero()));
        for (i, w) in weights.iter().enumerate() {
            for (k, ck) in coef.iter_mut().enumerate() {
                let a = rat(q.t0[i][k]);
                let d = rat(q.t1[i][k]) - &a;
                for &(sign, uv) in w.iter() {
                    let s = BigRational::from_integer(BigInt::from(sign));
                    ck[uv] += &s * &a;
                    ck[4 | uv] += &s * &d;
                }
            }
        }
        // Doubles are dyadic, so a power of two clears every denominator.
        let scale = coef
            .iter()
            .flatten()
            .map(|c| c.denom().bits().saturating_sub(1) as u32)
            .max()
            .unwrap_or(0);
        let coef = coef.map(|row| row.map(|c| (c * BigRational::from_integer(BigInt::one() << scale)).to_integer()));
        Self { coef, scale }
    }

    /// Exact corner values of component ranges over a dyadic box whose
    /// endpoints share the exponent `e`, returned as `(min, max)` numerators
    /// over `2^(scale + 3 e)`.
    fn ranges(&self, b: &ParamBox) -> [(BigInt, BigInt); 3] {
        let e = b.e as usize;
        std::array::from_fn(|k| {
            let c = &self.coef[k];
            let mut vals = Vec::with_capacity(8);
            // Nested partial sums: fix t, then u, then v. `x << e` is `x * 2^e`.
            for &t in &b.t {
                let t = BigInt::from(t);
                let ct: [BigInt; 4] = std::array::from_fn(|j| (&c[j] << e) + &c[4 | j] * &t);
                for &u in &b.u {
                    let u = BigInt::from(u);
                    let cu = [(&ct[0] << e) + &ct[2] * &u, (&ct[1] << e) + &ct[3] * &u];
                    for &v in &b.v {
                        // value * 2^(3e)
                        vals.push((&cu[0] << e) + &cu[1] * BigInt::from(v));
                    }
                }
            }
            let min = vals.iter().min().unwrap().clone();
            let max = vals.into_iter().max().unwrap();
            (min, max)
        })
    }
}

/// Sub-box of `[0,1]^3` with integer endpoints over `2^e`.
#[derive(Debug, Clone)]
struct ParamBox {
    t: [u64; 2],
    u: [u64; 2],
    v: [u64; 2],
    e: u32,
}

impl ParamBox {
    fn split(&self) -> [ParamBox; 2] {
        let w = [self.t[1] - self.t[0], self.u[1] - self.u[0], self.v[1] - self.v[0]];
        let mut b = self.clone();
        if w.contains(&1) {
            b = ParamBox { t: b.t.map(|x| 2 * x), u: b.u.map(|x| 2 * x), v: b.v.map(|x| 2 * x), e: b.e + 1 };
        }
        let w = [b.t[1] - b.t[0], b.u[1] - b.u[0], b.v[1] - b.v[0]];
        let d = (0..3).max_by(|&i, &j| w[i].cmp(&w[j]).then(j.cmp(&i))).unwrap();
        let mut l = b.clone();
        let mut r = b.clone();
        let (dl, dr) = match d {
            0 => (&mut l.t, &mut r.t),
            1 => (&mut l.u, &mut r.u),
            _ => (&mut l.v, &mut r.v),
        };
        let mid = (dl[0] + dl[1]) / 2;
        dl[1] = mid;
        dr[0] = mid;
        [l, r]
    }
}

/// Box ranked by its lower bound `bound / 2^shift`.
struct Ranked {
    bound: BigInt,
    shift: u32,
    b: ParamBox,
}

impl PartialEq for Ranked {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for Ranked {}
impl PartialOrd for Ranked {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Ranked {
    fn cmp(&self, o: &Self) -> Ordering {
        // Min-heap on the bound; cross-multiply by the powers of two.
        let a = &self.bound << o.shift;
        let b = &o.bound << self.shift;
        b.cmp(&a)
    }
}

/// Certified positive lower bound on `min |F|_inf` over the query's domain,
/// or `None` when `budget` box evaluations do not suffice.
pub fn certify_margin(query: &NarrowQuery, budget: usize) -> Option<f64> {
    let form = Multilinear::new(query);
    let vf = query.kind == QueryKind::VertexFace;
    let rank = |b: ParamBox| -> Ranked {
        let bound = form
            .ranges(&b)
            .into_iter()
            .map(|(min, max)| {
                if min.is_positive() {
                    min
                } else if max.is_negative() {
                    -max
                } else {
                    BigInt::zero()
                }
            })
            .max()
            .unwrap();
        Ranked { bound, shift: form.scale + 3 * b.e, b }
    };
    let root = ParamBox { t: [0, 1], u: [0, 1], v: [0, 1], e: 0 };
    let mut heap = BinaryHeap::new();
    heap.push(rank(root));
    let mut evaluated = 1;
    while let Some(Ranked { bound, shift, b }) = heap.pop() {
        if bound.is_positive() {
            // Smallest bound among all live boxes.
            return Some(round_down(&BigRational::new(bound, BigInt::one() << shift)));
        }
        if evaluated >= budget || b.e >= 60 {
            return None;
        }
        for child in b.split() {
            if vf && child.u[0] + child.v[0] > (1u64 << child.e) {
                continue;
            }
            evaluated += 1;
            heap.push(rank(child));
        }
    }
    // Every box fell outside the simplex; cannot happen for the root box.
    None
}

fn round_down(x: &BigRational) -> f64 {
    let f = x.to_f64().unwrap_or(0.0);
    if rat(f) > *x {
        f.next_down()
    } else {
        f
    }
}

/// Ground truth for one scene: every non-adjacent vertex-face and edge-edge
/// pair that collides or could not be decided.
#[derive(Debug, Clone, Default)]
pub struct GroundTruth {
    pub colliding: Vec<(CandidatePair, OracleVerdict)>,
    pub indeterminate: Vec<(CandidatePair, OracleVerdict)>,
    /// Pairs that reached the exact test; the rest were separated by their
    /// double-precision swept boxes.
    pub evaluated: usize,
}

impl GroundTruth {
    pub fn colliding_pairs(&self) -> Vec<CandidatePair> {
        self.colliding.iter().map(|(p, _)| *p).collect()
    }
}

/// Swept box in double precision, without any rounding.
fn exact_box(scene: &SceneStep, ids: &[u32]) -> [[f64; 2]; 3] {
    std::array::from_fn(|k| {
        let vals = ids
            .iter()
            .flat_map(|&v| [scene.vertices_t0[v as usize][k], scene.vertices_t1[v as usize][k]]);
        let lo = vals.clone().fold(f64::INFINITY, f64::min);
        let hi = vals.fold(f64::NEG_INFINITY, f64::max);
        [lo, hi]
    })
}

fn boxes_meet(a: &[[f64; 2]; 3], b: &[[f64; 2]; 3]) -> bool {
    (0..3).all(|k| a[k][0] <= b[k][1] && b[k][0] <= a[k][1])
}

/// Enumerates all non-adjacent vertex-face and edge-edge pairs and runs
/// [`oracle_toi`] on those whose exact swept boxes meet (pairs with disjoint
/// boxes cannot touch).
pub fn ground_truth_pairs(scene: &SceneStep, precision: u32) -> GroundTruth {
    let vboxes: Vec<_> = (0..scene.num_vertices() as u32).map(|v| exact_box(scene, &[v])).collect();
    let eboxes: Vec<_> = scene.edges.iter().map(|e| exact_box(scene, e)).collect();
    let fboxes: Vec<_> = scene.faces.iter().map(|f| exact_box(scene, f)).collect();

    let vf = (0..vboxes.len()).into_par_iter().flat_map_iter(|v| {
        let (vboxes, fboxes) = (&vboxes, &fboxes);
        scene
            .faces
            .iter()
            .enumerate()
            .filter(move |&(f, face)| !face.contains(&(v as u32)) && boxes_meet(&vboxes[v], &fboxes[f]))
            .map(move |(f, face)| {
                let pair = CandidatePair::new(PrimitiveId::vertex(v as u32), PrimitiveId::face(f as u32)).unwrap();
                let ids = [v as u32, face[0], face[1], face[2]];
                (pair, query_of(scene, ids, QueryKind::VertexFace, pair))
            })
    });
    let ee = (0..eboxes.len()).into_par_iter().flat_map_iter(|i| {
        let eboxes = &eboxes;
        let a = scene.edges[i];
        scene
            .edges
            .iter()
            .enumerate()
            .skip(i + 1)
            .filter(move |&(j, b)| !b.contains(&a[0]) && !b.contains(&a[1]) && boxes_meet(&eboxes[i], &eboxes[j]))
            .map(move |(j, b)| {
                let pair = CandidatePair::new(PrimitiveId::edge(i as u32), PrimitiveId::edge(j as u32)).unwrap();
                (pair, query_of(scene, [a[0], a[1], b[0], b[1]], QueryKind::EdgeEdge, pair))
            })
    });
    let candidates: Vec<(CandidatePair, NarrowQuery)> = vf.chain(ee).collect();
    let verdicts: Vec<(CandidatePair, OracleVerdict)> = candidates
        .par_iter()
        .map(|(pair, q)| (*pair, oracle_toi(q, precision)))
        .collect();
    let mut truth = GroundTruth { evaluated: candidates.len(), ..Default::default() };
    for (pair, verdict) in verdicts {
        match verdict {
            OracleVerdict::Colliding { .. } => truth.colliding.push((pair, verdict)),
            OracleVerdict::Indeterminate(_) => truth.indeterminate.push((pair, verdict)),
            OracleVerdict::Separated { .. } => {}
        }
    }
    truth.colliding.sort_by_key(|(p, _)| *p);
    truth.indeterminate.sort_by_key(|(p, _)| *p);
    truth
}

fn query_of(scene: &SceneStep, ids: [u32; 4], kind: QueryKind, source: CandidatePair) -> NarrowQuery {
    NarrowQuery {
        kind,
        t0: ids.map(|v| scene.vertices_t0[v as usize]),
        t1: ids.map(|v| scene.vertices_t1[v as usize]),
        source,
    }
}

/// Serializable oracle result, for golden files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleRecord {
    pub query_hash: String,
    pub verdict: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub lo: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub hi: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub margin: Option<String>,
}

/// Digits after the decimal point in serialized bounds.
pub const DECIMAL_DIGITS: usize = 40;

impl OracleRecord {
    pub fn new(query: &NarrowQuery, verdict: &OracleVerdict) -> Self {
        let mut rec = OracleRecord {
            query_hash: query_hash(query),
            verdict: String::new(),
            lo: None,
            hi: None,
            margin: None,
        };
        match verdict {
            OracleVerdict::Colliding { lo, hi } => {
                rec.verdict = "colliding".into();
                rec.lo = Some(decimal(lo, false));
                rec.hi = Some(decimal(hi, true));
            }
            OracleVerdict::Separated { margin } => {
                rec.verdict = "separated".into();
                rec.margin = Some(format!("{margin:?}"));
            }
            OracleVerdict::Indeterminate(why) => rec.verdict = format!("indeterminate:{why:?}"),
        }
        rec
    }
}

/// SHA-256 over the query kind and the bit patterns of its 24 coordinates.
pub fn query_hash(q: &NarrowQuery) -> String {
    let mut h = Sha256::new();
    h.update([match q.kind {
        QueryKind::VertexFace => 0u8,
        QueryKind::EdgeEdge => 1u8,
    }]);
    for p in q.t0.iter().chain(&q.t1) {
        for c in p {
            h.update(c.to_bits().to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

/// Fixed-point decimal rounded toward `-inf` (or `+inf` when `up`).
pub fn decimal(x: &BigRational, up: bool) -> String {
    let scale = BigInt::from(10u32).pow(DECIMAL_DIGITS as u32);
    let scaled = x * BigRational::from_integer(scale);
    let n = if up { scaled.ceil() } else { scaled.floor() }.to_integer();
    let neg = n.is_negative();
    let digits = n.abs().to_string();
    let digits = format!("{digits:0>width$}", width = DECIMAL_DIGITS + 1);
    let (int, frac) = digits.split_at(digits.len() - DECIMAL_DIGITS);
    format!("{}{int}.{frac}", if neg { "-" } else { "" })
}

#[cfg(test)]
mod tests;
