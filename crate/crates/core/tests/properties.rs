use std::sync::Arc;

use proptest::prelude::*;
use rfprox::data::{augment_junk, Dataset};
use rfprox::forest::{train_forest, ForestParams};
use rfprox::kernel_lab::{nw_estimate, LaplaceKernel};
use rfprox::tree::{best_split, grow_tree, Criterion, TreeParams};
use rfprox::{Kernel, Result};

fn dataset(max_n: usize, max_p: usize) -> impl Strategy<Value = Dataset> {
    (2..=max_n, 1..=max_p).prop_flat_map(|(n, p)| {
        (
            prop::collection::vec(prop::sample::select(vec![-1.0, -0.5, 0.0, 0.25, 0.5, 1.0, 2.0]), n * p),
            prop::collection::vec(0u8..=1, n),
        )
            .prop_map(move |(x, y)| Dataset::unnamed(x, y, p).unwrap())
    })
}

struct Scaled<K>(K, f64);

impl<K: Kernel> Kernel for Scaled<K> {
    fn eval(&self, x: &[f64], z: &[f64]) -> Result<f64> {
        Ok(self.1 * self.0.eval(x, z)?)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gini_and_mse_pick_the_same_split(d in dataset(30, 4)) {
        let rows: Vec<usize> = (0..d.n()).collect();
        let cands: Vec<usize> = (0..d.p()).collect();
        let g = best_split(&rows, &d, &cands, Criterion::Gini);
        let m = best_split(&rows, &d, &cands, Criterion::Mse);
        prop_assert_eq!(g.map(|s| (s.feature, s.threshold)), m.map(|s| (s.feature, s.threshold)));
    }

    #[test]
    fn leaves_partition_the_training_rows(d in dataset(40, 3), seed in any::<u64>(), mtry in 1usize..=3, boot in any::<bool>()) {
        let params = TreeParams::classification(mtry.min(d.p())).with_bootstrap(boot);
        let t = grow_tree(&d, &params, seed).unwrap();
        let mut seen = vec![0usize; d.n()];
        for (_, leaf) in t.leaves() {
            for &i in &leaf.members {
                seen[i] += 1;
            }
        }
        prop_assert!(seen.iter().all(|&c| c == 1));
        for i in 0..d.n() {
            prop_assert!(t.leaf(d.row(i)).members.contains(&i));
        }
    }

    #[test]
    fn estimates_are_probabilities(d in dataset(40, 3), seed in any::<u64>(), x in prop::collection::vec(-2.0f64..2.5, 3)) {
        let p = d.p();
        let f = train_forest(Arc::new(d), &ForestParams::new(8, TreeParams::classification(1), seed)).unwrap();
        let pred = f.predict(&x[..p]).unwrap();
        for v in [pred.class_vote, pred.reg_mean, pred.prox] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn proximity_is_symmetric(d in dataset(30, 3), seed in any::<u64>(),
                              a in prop::collection::vec(-2.0f64..2.5, 3), b in prop::collection::vec(-2.0f64..2.5, 3)) {
        let p = d.p();
        let f = train_forest(Arc::new(d), &ForestParams::new(10, TreeParams::completely_random(), seed)).unwrap();
        let (a, b) = (&a[..p], &b[..p]);
        let ab = f.proximity(a, b).unwrap();
        prop_assert_eq!(ab, f.proximity(b, a).unwrap());
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(f.proximity(a, a).unwrap(), 1.0);
    }

    #[test]
    fn nw_ignores_kernel_scale(d in dataset(30, 2), lambda in 0.0f64..3.0, c in 0.01f64..100.0) {
        let k = LaplaceKernel::normalized(lambda, &vec![1.0; d.p()]).unwrap();
        let x0 = d.row(0).to_vec();
        let plain = nw_estimate(&k, &d, &x0).unwrap();
        let scaled = nw_estimate(&Scaled(k, c), &d, &x0).unwrap();
        prop_assert!((plain - scaled).abs() < 1e-9);
    }

    #[test]
    fn junk_columns_permute_a_source(d in dataset(30, 3), count in 1usize..5, seed in any::<u64>()) {
        let j = augment_junk(&d, count, seed).unwrap();
        prop_assert_eq!(j.p(), d.p() + count);
        prop_assert_eq!(j.labels(), d.labels());
        for i in 0..d.n() {
            prop_assert_eq!(&j.row(i)[..d.p()], d.row(i));
        }
        for k in 0..count {
            let name = &j.feature_names()[d.p() + k];
            let src = d.feature_names().iter().position(|n| name.starts_with(&format!("{n}_junk_"))).unwrap();
            let mut got = j.column(d.p() + k);
            let mut want = d.column(src);
            got.sort_by(f64::total_cmp);
            want.sort_by(f64::total_cmp);
            prop_assert_eq!(got, want);
        }
    }
}
