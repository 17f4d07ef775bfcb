//! Random instance generation at the default 10×20 size.

use lasso_flow::harness::gen_instance;
use lasso_flow::build_nnqp;

#[test]
fn hundred_seeds_give_distinct_well_posed_instances() {
    let instances: Vec<_> = (0..100).map(|s| gen_instance(10, 20, 1.0, 0.1, s).unwrap()).collect();
    for (i, p) in instances.iter().enumerate() {
        assert_eq!((p.m(), p.n_x()), (20, 10));
        // full column rank: smallest singular value bounded away from zero
        let sv = p.a().clone().svd(false, false).singular_values;
        assert!(sv.min() > 1e-6, "seed {i}");
        assert!(build_nnqp(p).q_matrix().clone().cholesky().is_some(), "seed {i}");
        for q in &instances[..i] {
            assert_ne!(p.a(), q.a());
        }
    }
}

#[test]
fn generated_instance_round_trips_through_json() {
    let p = gen_instance(3, 5, 0.5, 0.2, 9).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.json");
    p.save(&path).unwrap();
    assert_eq!(lasso_flow::LassoProblem::load(&path).unwrap(), p);
}
