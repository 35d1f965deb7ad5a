use super::*;
use proptest::prelude::*;

fn r(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

fn from_roots(roots: &[BigRational]) -> RatPoly {
    roots.iter().fold(RatPoly::constant(BigRational::one()), |acc, x| {
        acc.mul(&RatPoly::linear(-x.clone(), BigRational::one()))
    })
}

#[test]
fn isolates_rational_roots_in_order() {
    let roots = [r(3, 4), r(1, 3), r(1, 2), r(7, 5), r(-1, 2)];
    let (_, found) = isolate_unit_roots(&from_roots(&roots), 64);
    assert_eq!(found.len(), 3);
    for (b, want) in found.iter().zip([r(1, 3), r(1, 2), r(3, 4)]) {
        let (lo, hi) = b.bounds();
        assert!(lo <= want && want <= hi, "{b:?}");
        assert!(&hi - &lo <= r(1, 1 << 62) / BigRational::from_integer(BigInt::from(4)));
    }
    // Dyadic roots are hit exactly by bisection.
    assert!(matches!(found[1], RootBracket::Exact(_)));
}

#[test]
fn roots_at_interval_ends_are_exact() {
    let (_, found) = isolate_unit_roots(&from_roots(&[r(0, 1), r(1, 1)]), 32);
    assert_eq!(found.len(), 2);
    assert_eq!(found[0].bounds(), (r(0, 1), r(0, 1)));
    assert_eq!(found[1].bounds(), (r(1, 1), r(1, 1)));
}

#[test]
fn square_free_drops_multiplicity() {
    let p = from_roots(&[r(1, 3), r(1, 3), r(2, 3)]);
    let q = p.square_free();
    assert_eq!(q.degree(), Some(2));
    assert!(q.eval(&r(1, 3)).is_zero() && q.eval(&r(2, 3)).is_zero());
}

#[test]
fn polynomial_range_encloses_samples() {
    let p = from_roots(&[r(1, 5), r(2, 5), r(9, 10)]);
    let (lo, w) = (r(1, 8), r(1, 2));
    let (min, max) = p.range(&lo, &w);
    for i in 0..=64 {
        let x = &lo + &w * r(i, 64);
        let y = p.eval(&x);
        assert!(min <= y && y <= max);
    }
}

fn plane_crossing() -> NarrowQuery {
    let tri = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
    NarrowQuery::vertex_face(
        [[0.25, 0.25, 1.0], tri[0], tri[1], tri[2]],
        [[0.25, 0.25, -1.0], tri[0], tri[1], tri[2]],
    )
}

/// A triangle rotating about the line `y = 1/4, z = 0` while a vertex slides
/// along it; the coplanarity polynomial is `(2t - 1)^2 + offset`.
fn tilting(offset: f64) -> NarrowQuery {
    NarrowQuery::vertex_face(
        [[0.25, -0.75, -offset], [0.0, 0.0, -0.25], [1.0, 0.0, -0.25], [0.0, 1.0, 0.75]],
        [[0.25, 1.25, -offset], [0.0, 0.0, 0.25], [1.0, 0.0, 0.25], [0.0, 1.0, -0.75]],
    )
}

#[test]
fn plane_crossing_hits_midpoint_exactly() {
    let v = oracle_toi(&plane_crossing(), 128);
    assert_eq!(v, OracleVerdict::Colliding { lo: r(1, 2), hi: r(1, 2) });
    assert!(v.admits_toi(0.5));
    assert!(!v.admits_toi(0.5f64.next_up()));
}

#[test]
fn parallel_motion_certifies_full_margin() {
    let tri = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
    let q = NarrowQuery::vertex_face(
        [[0.2, 0.2, 1.0], tri[0], tri[1], tri[2]],
        [[0.3, 0.3, 1.0], tri[0], tri[1], tri[2]],
    );
    let v = oracle_toi(&q, 128);
    let m = v.certified_margin().expect("separated");
    assert!((m - 1.0).abs() < 1e-12, "{m}");
}

#[test]
fn crossing_outside_triangle_is_separated() {
    let tri = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
    let q = NarrowQuery::vertex_face(
        [[0.8, 0.8, 1.0], tri[0], tri[1], tri[2]],
        [[0.8, 0.8, -1.0], tri[0], tri[1], tri[2]],
    );
    let m = oracle_toi(&q, 128).certified_margin().expect("separated");
    // The closest point of the simplex is (0.5, 0.5, 0) at the crossing.
    assert!(m > 0.0 && m <= 0.3 + 1e-12, "{m}");
}

#[test]
fn tangential_double_root_is_found() {
    let q = tilting(0.0);
    let coplanar = coplanarity_and_inside(&q).0.to_rat();
    let half = r(1, 2);
    assert!(coplanar.eval(&half).is_zero());
    assert!(coplanar.derivative().eval(&half).is_zero());
    assert_eq!(oracle_toi(&q, 128), OracleVerdict::Colliding { lo: half.clone(), hi: half });
}

#[test]
fn brackets_tighten_with_precision() {
    // The earlier root of (2t - 1)^2 - 0.01 is irrational, near 0.45.
    let q = tilting(0.01);
    let coplanar = coplanarity_and_inside(&q).0.to_rat();
    let coarse = oracle_toi(&q, 128);
    let fine = oracle_toi(&q, 256);
    let (lo1, hi1) = coarse.earliest_root_bounds().unwrap();
    let (lo2, hi2) = fine.earliest_root_bounds().unwrap();
    assert!(lo1 <= lo2 && lo2 < hi2 && hi2 <= hi1);
    assert!(coplanar.eval(lo2).is_positive() && coplanar.eval(hi2).is_negative());
    assert!((lo2.to_f64().unwrap() - 0.45).abs() < 1e-12);
    assert!(hi1 - lo1 <= BigRational::new(BigInt::one(), BigInt::one() << 128u32));
    assert!(hi2 - lo2 <= BigRational::new(BigInt::one(), BigInt::one() << 256u32));
}

#[test]
fn edge_edge_crossing() {
    let q = NarrowQuery::edge_edge(
        [[-1.0, 0.0, 1.0], [1.0, 0.0, 1.0], [0.0, -1.0, 0.0], [0.0, 1.0, 0.0]],
        [[-1.0, 0.0, -1.0], [1.0, 0.0, -1.0], [0.0, -1.0, 0.0], [0.0, 1.0, 0.0]],
    );
    assert_eq!(oracle_toi(&q, 128), OracleVerdict::Colliding { lo: r(1, 2), hi: r(1, 2) });
}

#[test]
fn edge_edge_passing_beside() {
    let q = NarrowQuery::edge_edge(
        [[-1.0, 0.0, 1.0], [1.0, 0.0, 1.0], [0.0, 2.0, 0.0], [0.0, 3.0, 0.0]],
        [[-1.0, 0.0, -1.0], [1.0, 0.0, -1.0], [0.0, 2.0, 0.0], [0.0, 3.0, 0.0]],
    );
    let m = oracle_toi(&q, 128).certified_margin().expect("separated");
    assert!(m > 0.0 && m <= 2.0);
}

#[test]
fn coplanar_motion_falls_back_to_margin() {
    let tri = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
    let apart = NarrowQuery::vertex_face(
        [[3.0, 3.0, 0.0], tri[0], tri[1], tri[2]],
        [[4.0, 3.0, 0.0], tri[0], tri[1], tri[2]],
    );
    assert!(oracle_toi(&apart, 128).certified_margin().unwrap() > 0.0);
    let through = NarrowQuery::vertex_face(
        [[-1.0, 0.25, 0.0], tri[0], tri[1], tri[2]],
        [[2.0, 0.25, 0.0], tri[0], tri[1], tri[2]],
    );
    assert_eq!(oracle_toi(&through, 128), OracleVerdict::Indeterminate(Indeterminate::CoplanarMotion));
}

#[test]
fn decimal_rounds_outward() {
    let third = r(1, 3);
    let down = decimal(&third, false);
    let up = decimal(&third, true);
    assert_eq!(down, format!("0.{}", "3".repeat(DECIMAL_DIGITS)));
    assert_eq!(up, format!("0.{}4", "3".repeat(DECIMAL_DIGITS - 1)));
    assert_eq!(decimal(&-third, false), format!("-0.{}4", "3".repeat(DECIMAL_DIGITS - 1)));
    assert_eq!(decimal(&r(5, 2), true), format!("2.5{}", "0".repeat(DECIMAL_DIGITS - 1)));
}

#[test]
fn record_round_trips_through_json() {
    let q = plane_crossing();
    let rec = OracleRecord::new(&q, &oracle_toi(&q, 128));
    assert_eq!(rec.query_hash.len(), 64);
    assert_eq!(rec.verdict, "colliding");
    let json = serde_json::to_string(&rec).unwrap();
    assert_eq!(serde_json::from_str::<OracleRecord>(&json).unwrap(), rec);
    let mut moved = q;
    moved.t1[0][2] = -1.5;
    assert_ne!(query_hash(&moved), rec.query_hash);
}

#[test]
fn distant_tetrahedra_have_no_ground_truth_contacts() {
    let tet = |o: f64| {
        vec![[o, 0.0, 0.0], [o + 1.0, 0.0, 0.0], [o, 1.0, 0.0], [o, 0.0, 1.0]]
    };
    let mut v0 = tet(0.0);
    v0.extend(tet(10.0));
    let mut v1 = tet(0.5);
    v1.extend(tet(9.5));
    let faces = vec![[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3], [4, 5, 6], [4, 5, 7], [4, 6, 7], [5, 6, 7]];
    let scene = SceneStep::from_faces(v0, v1, faces).unwrap();
    let truth = ground_truth_pairs(&scene, 128);
    assert!(truth.colliding.is_empty() && truth.indeterminate.is_empty());
    // Per tetrahedron, the three opposite-edge pairs and vertex 0 against the
    // far face have meeting swept boxes; nothing across the gap does.
    assert_eq!(truth.evaluated, 8);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// Vertical motion through a static horizontal triangle: the contact time
    /// is where `z(t)` vanishes, if `(x, y)` is inside.
    #[test]
    fn vertical_crossings_match_closed_form(
        x in 0.05f64..0.9, y in 0.05f64..0.9, z0 in 0.1f64..2.0, z1 in -2.0f64..-0.1,
    ) {
        let tri = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        let q = NarrowQuery::vertex_face(
            [[x, y, z0], tri[0], tri[1], tri[2]],
            [[x, y, z1], tri[0], tri[1], tri[2]],
        );
        let v = oracle_toi(&q, 128);
        let (z0r, z1r) = (rat(z0), rat(z1));
        let t = &z0r / (&z0r - &z1r);
        if x + y < 1.0 {
            let (lo, hi) = v.earliest_root_bounds().expect("colliding");
            prop_assert!(*lo <= t && t <= *hi);
        } else if x + y > 1.0 {
            prop_assert!(v.certified_margin().is_some());
        }
    }
}

#[test]
fn integer_range_matches_rational_range() {
    let p = IntPoly::new([3, -7, 0, 5, -2].map(BigInt::from).to_vec());
    let (lo, hi) = (Dyadic::new(BigInt::from(3), 3), Dyadic::new(BigInt::from(13), 4));
    let (imin, imax) = p.range(&lo, &hi);
    let (rmin, rmax) = p.to_rat().range(&lo.to_rational(), &(hi.to_rational() - lo.to_rational()));
    // Integer bounds carry the factor 2^(4 * 4).
    let scale = BigRational::from_integer(BigInt::one() << 16u32);
    assert_eq!(BigRational::from_integer(imin), rmin * &scale);
    assert_eq!(BigRational::from_integer(imax), rmax * scale);
}
