use std::collections::BTreeSet;

use ncf_core::bounds::{
    approx_error_bound, deviation_bound_tilde, shell_sum, upsilon, upsilon_sup, BoundParams,
};
use ncf_core::innovations::{
    FieldView, InnovationLaw, InnovationSource, NoiseCache, NoiseField, SwapVar,
};
use ncf_core::lattice::{union_count, union_points, Coord, GridBox, IndexSet, Orthotope};
use ncf_core::model::{picard_evaluate, ModelSpec, PicardConfig};
use ncf_core::montecarlo::{compensated_sum, Summary};
use proptest::prelude::*;

fn orthotope(kappa: usize) -> impl Strategy<Value = Orthotope> {
    prop::collection::vec(0u32..=2, kappa).prop_map(|d| Orthotope::new(d).unwrap())
}

fn index_set(kappa: usize) -> impl Strategy<Value = IndexSet> {
    prop::collection::btree_set(prop::collection::vec(-8i64..=8, kappa), 1..10)
        .prop_map(|s| IndexSet::new(s.into_iter().collect()).unwrap())
}

proptest! {
    #[test]
    fn cardinality_matches_enumeration(
        (o, center) in (1usize..=3).prop_flat_map(|k| (orthotope(k), prop::collection::vec(-5i64..=5, k))),
        d in 0u64..=5,
    ) {
        let pts = o.points(d, &center);
        prop_assert_eq!(o.cardinality(d).unwrap(), pts.len() as u64);
        let unique: BTreeSet<&Coord> = pts.iter().collect();
        prop_assert_eq!(unique.len(), pts.len());
        let mut sorted = pts.clone();
        sorted.sort();
        prop_assert_eq!(sorted, pts);
    }

    #[test]
    fn shells_partition_the_dilation(
        (o, center) in (1usize..=3).prop_flat_map(|k| (orthotope(k), prop::collection::vec(-5i64..=5, k))),
        d in 1u64..=5,
    ) {
        let mut all: BTreeSet<Coord> = o.points(0, &center).into_iter().collect();
        let n_b = o.cardinality(1).unwrap() as f64;
        let kappa = o.kappa() as i32;
        for c in 1..=d {
            let shell = o.shell_points(c, &center);
            prop_assert!(shell.len() as f64 <= n_b * kappa as f64 * (c as f64).powi(kappa - 1));
            for p in shell {
                prop_assert_eq!(o.shell_index(&center, &p), Some(c));
                prop_assert!(all.insert(p));
            }
        }
        let full: BTreeSet<Coord> = o.points(d, &center).into_iter().collect();
        prop_assert_eq!(all, full);
    }

    #[test]
    fn union_count_chain(
        (o, index) in (1usize..=3).prop_flat_map(|k| (orthotope(k), index_set(k))),
        d in 1u64..=4,
    ) {
        let n = index.len() as u64;
        let n1 = union_count(&index, &o, 1);
        let n2 = union_count(&index, &o, d);
        prop_assert_eq!(n2, union_points(index.points(), &o, d).len() as u64);
        prop_assert!(n <= n1 && n1 <= n * o.cardinality(1).unwrap());
        prop_assert!(n1 <= n2 && n2 <= n1 * o.cardinality(d).unwrap());
    }

    #[test]
    fn upsilon_dominates_the_shell_sum(kappa in 1u32..=4, rho in 0.01f64..0.99, d in 0u64..=120) {
        let v = upsilon(kappa, rho, d).unwrap();
        prop_assert!(shell_sum(kappa, rho, d) <= v * (1.0 + 1e-12) + 1e-12);
        prop_assert!(v <= upsilon_sup(kappa, rho).unwrap() * (1.0 + 1e-12) + 1e-12);
    }

    #[test]
    fn deviation_bound_decreases_in_epsilon(e1 in 0.01f64..50.0, gap in 0.0f64..50.0, d in 0u64..8) {
        let idx = IndexSet::interval(0, 32).unwrap();
        let o = Orthotope::new(vec![1]).unwrap();
        let p = BoundParams::from_geometry(&idx, &o, &o, 0.4, 1.0, 2.0, d).unwrap();
        let a = deviation_bound_tilde(e1, &p).unwrap().value;
        let b = deviation_bound_tilde(e1 + gap, &p).unwrap().value;
        prop_assert!(b <= a);
        prop_assert!(approx_error_bound(&p.with_depth(d + 1), false).value < approx_error_bound(&p, false).value);
    }

    #[test]
    fn views_follow_their_definition(
        seed in any::<u64>(),
        site in -4i64..=4,
        depth in 0u64..=3,
        t in -12i64..=12,
    ) {
        let src = InnovationSource::scalar(seed, InnovationLaw::standard_gaussian()).unwrap();
        let o = Orthotope::new(vec![1]).unwrap();
        let s = [site];
        let trunc = FieldView::truncated(&src, &o, &s, depth);
        let inside = (t - site).unsigned_abs() <= depth;
        let mut expected = [0.0];
        if inside {
            src.epsilon_into(&[t], &mut expected);
        } else {
            src.filling_into(&s, &mut expected);
        }
        prop_assert_eq!(trunc.value(&[t]), expected.to_vec());

        // one enumerated variable changes, nothing else
        let m = SwapVar::Marginal(vec![site]);
        let swapped = FieldView::swapped(&src, &o, &s, depth, m);
        for u in site - 6..=site + 6 {
            let differs = trunc.value(&[u]) != swapped.value(&[u]);
            prop_assert_eq!(differs, u == site);
        }
        let f = SwapVar::Filling(vec![site]);
        let swapped = FieldView::swapped(&src, &o, &s, depth, f);
        for u in site - 6..=site + 6 {
            let differs = trunc.value(&[u]) != swapped.value(&[u]);
            prop_assert_eq!(differs, (u - site).unsigned_abs() > depth);
        }
    }

    #[test]
    fn cache_is_bit_transparent(seed in any::<u64>(), t in prop::collection::vec(-10i64..=10, 2)) {
        let src = InnovationSource::new(seed, InnovationLaw::Uniform { low: -1.0, high: 2.0 }, 3).unwrap();
        let cache = NoiseCache::new(&src, GridBox::new(vec![-3, -3], vec![3, 3]).unwrap());
        let (mut a, mut b) = ([0.0; 3], [0.0; 3]);
        src.epsilon_into(&t, &mut a);
        cache.epsilon_into(&t, &mut b);
        prop_assert_eq!(a, b);
        prop_assert_eq!(src.epsilon_at(&t), a.to_vec());
    }

    #[test]
    fn picard_is_lipschitz_in_the_innovations(seed in any::<u64>(), shift in -1.0f64..1.0) {
        // Moving one ε by `shift` moves the fixed point by at most η|shift|/(1 − ρ).
        let model = ModelSpec::Ar { alpha_left: 0.25, alpha_right: 0.15, beta: 0.5 }.build().unwrap();
        let cfg = PicardConfig::new(40).unwrap();
        let src = InnovationSource::scalar(seed, InnovationLaw::standard_gaussian()).unwrap();
        struct Shifted<'a>(&'a InnovationSource, f64);
        impl NoiseField for Shifted<'_> {
            fn dim(&self) -> usize { 1 }
            fn epsilon_into(&self, t: &[i64], out: &mut [f64]) {
                self.0.epsilon_into(t, out);
                if t == [0] { out[0] += self.1; }
            }
            fn filling_into(&self, s: &[i64], out: &mut [f64]) { self.0.filling_into(s, out) }
            fn copy_into(&self, v: &SwapVar, out: &mut [f64]) { self.0.copy_into(v, out) }
        }
        let o = model.neighborhood().clone();
        let a = picard_evaluate(&model, &FieldView::exact(&src, &o), &[0], &cfg).unwrap()[0];
        let moved = Shifted(&src, shift);
        let b = picard_evaluate(&model, &FieldView::exact(&moved, &o), &[0], &cfg).unwrap()[0];
        prop_assert!((a - b).abs() <= 0.5 * shift.abs() / 0.6 + 1e-12);
    }

    #[test]
    fn compensated_mean_is_accurate(xs in prop::collection::vec(-1e6f64..1e6, 1..200)) {
        let s = Summary::from_values(&xs);
        let exact = xs.iter().sum::<f64>() / xs.len() as f64;
        prop_assert!((s.mean - exact).abs() <= 1e-9 * (1.0 + exact.abs()));
        prop_assert!(s.stderr >= 0.0 && s.min <= s.mean && s.mean <= s.max);
        prop_assert_eq!(compensated_sum(xs.iter().copied()), compensated_sum(xs.iter().copied()));
    }
}
