//! The narrow phase never reports an impact later than the exact earliest
//! root.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use stq_ccd::narrowphase::{narrow_phase, NarrowConfig};
use stq_ccd::oracle::{oracle_toi, OracleVerdict, MIN_PRECISION};
use stq_ccd::scenegen::random_query;

fn check(edge_edge: bool, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let queries: Vec<_> = (0..300).map(|_| random_query(&mut rng, edge_edge)).collect();
    let out = narrow_phase(&queries, &NarrowConfig::default()).unwrap();
    let mut colliding = 0;
    for (q, r) in queries.iter().zip(&out.per_query) {
        let verdict = oracle_toi(q, MIN_PRECISION);
        if let OracleVerdict::Colliding { .. } = verdict {
            colliding += 1;
            let toi = r.toi.unwrap_or_else(|| panic!("missed impact: {q:?}"));
            assert!(verdict.admits_toi(toi), "toi {toi} after root: {q:?} {verdict:?}");
        }
        if let Some(toi) = out.toi {
            assert!(verdict.admits_toi(toi));
        }
    }
    // Roughly half the generated queries are built to touch.
    assert!(colliding > 75, "only {colliding} colliding queries");
}

#[test]
fn vertex_face_is_conservative() {
    check(false, 11);
}

#[test]
fn edge_edge_is_conservative() {
    check(true, 12);
}
