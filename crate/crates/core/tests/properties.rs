use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use gtn_core::gtn::{gtn_forward, DataTensorMeta, GtnLayerSpec};
use gtn_core::graphs::GraphShiftOperator;
use gtn_core::harness::{load_data_tensor, write_data_tensor};
use gtn_core::tensor::{
    dematricize, kronecker, matricize, mode_n_product, tensorize, tucker_product, vectorize, DenseTensor,
};
use gtn_core::tt::{self, TensorizationPlan, Truncation};

fn dims_strategy(max_order: usize, max_dim: usize) -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(1..=max_dim, 1..=max_order)
}

fn tensor(dims: &[usize], seed: u64) -> DenseTensor {
    DenseTensor::random_normal(dims.to_vec(), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn kron_all(factors: &[DenseTensor]) -> DenseTensor {
    factors[1..].iter().fold(factors[0].clone(), |acc, f| kronecker(&acc, f).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn vectorize_roundtrip(dims in dims_strategy(5, 4), seed in any::<u64>()) {
        let t = tensor(&dims, seed);
        prop_assert_eq!(tensorize(&vectorize(&t), t.shape()).unwrap(), t);
    }

    #[test]
    fn matricize_roundtrip(dims in dims_strategy(4, 5), seed in any::<u64>(), pick in any::<prop::sample::Index>()) {
        let t = tensor(&dims, seed);
        let n = pick.index(dims.len()) + 1;
        let m = matricize(&t, n).unwrap();
        prop_assert_eq!(m.rows(), dims[n - 1]);
        prop_assert_eq!(dematricize(&m, n, t.shape()).unwrap(), t);
    }

    #[test]
    fn mode_products_commute_on_distinct_modes(dims in prop::collection::vec(1usize..=4, 2..=4), seed in any::<u64>()) {
        let t = tensor(&dims, seed);
        let a = tensor(&[3, dims[0]], seed ^ 1);
        let b = tensor(&[2, dims[1]], seed ^ 2);
        let ab = mode_n_product(&mode_n_product(&t, 1, &a).unwrap(), 2, &b).unwrap();
        let ba = mode_n_product(&mode_n_product(&t, 2, &b).unwrap(), 1, &a).unwrap();
        prop_assert!(ab.max_abs_diff(&ba).unwrap() < 1e-12);
    }

    #[test]
    fn tucker_vectorizes_to_kronecker(dims in dims_strategy(4, 4), seed in any::<u64>()) {
        let a = tensor(&dims, seed);
        let factors: Vec<DenseTensor> =
            dims.iter().enumerate().map(|(n, &i)| tensor(&[1 + (i + n) % 3, i], seed.wrapping_add(n as u64 + 1))).collect();
        let pairs: Vec<(usize, &DenseTensor)> = factors.iter().enumerate().map(|(n, f)| (n + 1, f)).collect();
        let lhs = vectorize(&tucker_product(&a, &pairs).unwrap());
        let rhs = kron_all(&factors).matmul(&vectorize(&a).reshape(vec![a.numel(), 1]).unwrap()).unwrap();
        prop_assert!(lhs.max_abs_diff(&vectorize(&rhs)).unwrap() < 1e-10);
    }

    #[test]
    fn gtn_layer_matches_kronecker_oracle(i1 in 1usize..=4, i2 in 1usize..=4, j in 1usize..=3, k in 1usize..=3, seed in any::<u64>()) {
        let x = tensor(&[i1, i2, j], seed);
        let s1 = tensor(&[i1, i1], seed ^ 3);
        let s2 = tensor(&[i2, i2], seed ^ 5);
        let w = tensor(&[k, j], seed ^ 7);
        let meta = DataTensorMeta::new(vec![i1, i2], vec![j]).unwrap();
        let layer = GtnLayerSpec::new(
            vec![GraphShiftOperator::custom(s1.clone()).unwrap(), GraphShiftOperator::custom(s2.clone()).unwrap()],
            vec![w.clone()],
        );
        let y = gtn_forward(&x, &meta, &layer).unwrap();
        let oracle = kron_all(&[s1, s2, w]).matmul(&vectorize(&x).reshape(vec![x.numel(), 1]).unwrap()).unwrap();
        prop_assert_eq!(y.dims(), &[i1, i2, k][..]);
        prop_assert!(vectorize(&y).max_abs_diff(&vectorize(&oracle)).unwrap() < 1e-10);
    }

    #[test]
    fn full_rank_tt_reconstructs(rf in prop::collection::vec(1usize..=3, 1..=3), seed in any::<u64>()) {
        let cf: Vec<usize> = rf.iter().map(|&r| 4 - r).collect();
        let plan = TensorizationPlan::new(rf, cf).unwrap();
        let w = tensor(&[plan.rows(), plan.cols()], seed);
        let fit = tt::tt_from_matrix(&w, &plan, &Truncation::Full).unwrap();
        prop_assert!(fit.frobenius_error < 1e-8 * w.frobenius_norm().max(1.0));
        let bounds = plan.max_ranks();
        let ranks = fit.op.ranks();
        prop_assert!(ranks[1..ranks.len() - 1].iter().zip(&bounds).all(|(r, b)| r <= b));
        prop_assert_eq!(tt::tt_param_count(&fit.op), tt::tt_param_count_for(&plan, &ranks[1..ranks.len() - 1]).unwrap());
    }

    #[test]
    fn tt_apply_matches_dense_matvec(rf in prop::collection::vec(1usize..=3, 1..=3), rank in 1usize..=3, seed in any::<u64>()) {
        let cf: Vec<usize> = rf.iter().map(|&r| 1 + r % 3).collect();
        let plan = TensorizationPlan::new(rf.clone(), cf.clone()).unwrap();
        let w = tensor(&[plan.rows(), plan.cols()], seed);
        let caps = vec![rank; plan.num_cores() - 1];
        let op = tt::tt_from_matrix(&w, &plan, &Truncation::MaxRanks(caps)).unwrap().op;
        let dense = tt::tt_reconstruct(&op).unwrap();
        let x = tensor(&cf, seed ^ 9);
        let y = tt::tt_apply(&op, &x).unwrap();
        let oracle = dense.matmul(&vectorize(&x).reshape(vec![x.numel(), 1]).unwrap()).unwrap();
        prop_assert!(vectorize(&y).max_abs_diff(&vectorize(&oracle)).unwrap() < 1e-10);
    }

    #[test]
    fn csv_roundtrip_is_bit_exact(dims in dims_strategy(3, 4), seed in any::<u64>()) {
        let dims = [dims, vec![2]].concat();
        let t = tensor(&dims, seed);
        let meta = DataTensorMeta::new(dims[..dims.len() - 1].to_vec(), vec![2]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        write_data_tensor(&path, &t, &meta).unwrap();
        let back = load_data_tensor(&path, &meta).unwrap();
        prop_assert!(back.data().iter().zip(t.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}
