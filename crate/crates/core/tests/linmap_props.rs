mod common;

use common::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rram_baseband::linmap::{real_map_matrix, real_map_vector, unmap_vector, C64};

fn dims() -> impl Strategy<Value = (usize, usize, usize, u64)> {
    (1usize..=16, 1usize..=16, 1usize..=16, any::<u64>())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn additive_and_adjoint_exact((k, l, _, seed) in dims()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_complex(k, l, &mut rng);
        let b = random_complex(k, l, &mut rng);
        let sum = real_map_matrix(&a).add(&real_map_matrix(&b)).unwrap();
        prop_assert_eq!(sum, real_map_matrix(&a.add(&b).unwrap()));
        prop_assert_eq!(real_map_matrix(&conj_transpose(&a)), real_map_matrix(&a).transpose());
    }

    #[test]
    fn multiplicative((k, l, m, seed) in dims()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_complex(k, l, &mut rng);
        let c = random_complex(l, m, &mut rng);
        let lhs = real_matmul(&real_map_matrix(&a), &real_map_matrix(&c));
        let rhs = real_map_matrix(&naive_matmul(&a, &c));
        prop_assert!(rel(lhs.as_slice(), rhs.as_slice()) <= 1e-12);
    }

    #[test]
    fn matvec_commutes_with_map((k, l, _, seed) in dims()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_complex(k, l, &mut rng);
        let x = random_vector(l, &mut rng);
        let lhs = real_matvec(&real_map_matrix(&a), &real_map_vector(&x));
        prop_assert!(rel(&lhs, &stacked(&naive_matvec(&a, &x))) <= 1e-12);
    }

    #[test]
    fn inverse_commutes_with_map((n, _, _, seed) in dims()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_complex(n, n, &mut rng);
        let lhs = real_map_matrix(&a).inverse().unwrap();
        let rhs = real_map_matrix(&naive_inverse(&a));
        prop_assert!(rel(lhs.as_slice(), rhs.as_slice()) <= 1e-9);
    }

    #[test]
    fn least_squares_through_real_map((k, l, _, seed) in dims(), lambda in 0.01f64..10.0) {
        let (k, l) = (k.max(l), k.min(l));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_complex(k, l, &mut rng);
        let x = random_vector(k, &mut rng);
        let r = real_map_matrix(&a);
        let t = real_map_vector(&x);
        prop_assert!(rel(&regularized_ls_real(&r, &t, 0.0), &stacked(&regularized_ls(&a, &x, 0.0))) <= 1e-9);
        prop_assert!(rel(&regularized_ls_real(&r, &t, lambda), &stacked(&regularized_ls(&a, &x, lambda))) <= 1e-9);
    }

    #[test]
    fn vector_round_trip(v in prop::collection::vec((-1e6f64..1e6, -1e6f64..1e6), 0..64)) {
        let x: Vec<C64> = v.into_iter().map(|(re, im)| C64::new(re, im)).collect();
        prop_assert_eq!(unmap_vector(&real_map_vector(&x)).unwrap(), x);
    }
}

#[test]
fn odd_length_is_rejected() {
    assert!(unmap_vector(&[1.0, 2.0, 3.0]).is_err());
}
