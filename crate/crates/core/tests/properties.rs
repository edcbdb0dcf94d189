mod common;

use std::collections::{HashMap, VecDeque};

use crf_fusion::energy::{EnergyModel, EnergyParams, PottsEdge};
use crf_fusion::graph::EdgeKind;
use crf_fusion::metrics::{confusion, Scores};
use crf_fusion::raster::{relabel_contiguous, ClassId, FeatureRaster, LabelMap, RegionMap};
use crf_fusion::segmentation::{pool_region_probs, segment, Connectivity, SegmentationParams};
use crf_fusion::solver::{brute_force_solve, icm_solve, trws_solve, SolverConfig};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::*;

fn raster_strategy() -> impl Strategy<Value = FeatureRaster> {
    (1usize..8, 1usize..8, 1usize..4).prop_flat_map(|(h, w, b)| {
        prop::collection::vec(0.0f64..255.0, h * w * b)
            .prop_map(move |v| FeatureRaster::new(h, w, b, v).unwrap())
    })
}

/// Image with a few flat patches so segmentation has structure to find.
fn patchy_strategy() -> impl Strategy<Value = FeatureRaster> {
    (2usize..10, 2usize..10).prop_flat_map(|(h, w)| {
        (
            prop::collection::vec(0u8..4, h * w),
            prop::collection::vec(-3.0f64..3.0, h * w),
        )
            .prop_map(move |(levels, jitter)| {
                let v = levels
                    .iter()
                    .zip(&jitter)
                    .map(|(&l, j)| 60.0 * f64::from(l) + j)
                    .collect();
                FeatureRaster::new(h, w, 1, v).unwrap()
            })
    })
}

fn same_partition(a: &[u32], b: &[u32]) -> bool {
    let mut fwd = HashMap::new();
    let mut back = HashMap::new();
    a.iter().zip(b).all(|(&x, &y)| {
        *fwd.entry(x).or_insert(y) == y && *back.entry(y).or_insert(x) == x
    })
}

fn four_connected(regions: &RegionMap) -> bool {
    let (h, w) = (regions.height(), regions.width());
    let ids = regions.ids();
    let mut seen = vec![false; ids.len()];
    let mut starts = 0;
    for s in 0..ids.len() {
        if seen[s] {
            continue;
        }
        starts += 1;
        seen[s] = true;
        let mut queue = VecDeque::from([s]);
        while let Some(p) = queue.pop_front() {
            let (r, c) = (p / w, p % w);
            let mut next = Vec::new();
            if r > 0 {
                next.push(p - w);
            }
            if r + 1 < h {
                next.push(p + w);
            }
            if c > 0 {
                next.push(p - 1);
            }
            if c + 1 < w {
                next.push(p + 1);
            }
            for q in next {
                if !seen[q] && ids[q] == ids[p] {
                    seen[q] = true;
                    queue.push_back(q);
                }
            }
        }
    }
    starts == regions.num_regions()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn standardize_is_idempotent(raster in raster_strategy()) {
        let once = raster.standardize();
        let twice = once.standardize();
        for (a, b) in once.values().iter().zip(twice.values()) {
            prop_assert!((a - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn relabel_preserves_partition(ids in prop::collection::vec(0u32..1000, 1..64)) {
        let out = relabel_contiguous(&ids);
        prop_assert!(same_partition(&ids, &out));
        let max = *out.iter().max().unwrap();
        for k in 0..=max {
            prop_assert!(out.contains(&k));
        }
    }

    #[test]
    fn segmentation_partitions_into_connected_regions(
        image in patchy_strategy(),
        k in 0.01f64..500.0,
        min_size in 1usize..6,
    ) {
        let params = SegmentationParams { k, min_size, connectivity: Connectivity::Four };
        let regions = segment(&image, &params).unwrap();
        prop_assert_eq!(regions.num_pixels(), image.num_pixels());
        prop_assert!(four_connected(&regions));
        prop_assert_eq!(&segment(&image, &params).unwrap(), &regions);
        if image.num_pixels() >= min_size {
            prop_assert!(regions.sizes().iter().all(|&s| s >= min_size));
        }
    }

    #[test]
    fn pooled_posteriors_are_valid(seed in any::<u64>(), h in 1usize..8, w in 1usize..8, c in 2usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = (h * w).min(3);
        let regions = random_regions(&mut rng, h, w, n);
        let probs = random_probs(&mut rng, h * w, c);
        let pooled = pool_region_probs(&probs, &regions).unwrap();
        prop_assert_eq!(pooled.num_nodes(), regions.num_regions());
        for r in 0..pooled.num_nodes() {
            let row = pooled.node(r);
            prop_assert!(row.iter().all(|&p| (0.0..=1.0).contains(&p)));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn confusion_is_permutation_equivariant(
        pairs in prop::collection::vec((0u16..4, 0u16..4), 1..80),
        perm in Just([0u16, 1, 2, 3]).prop_shuffle(),
    ) {
        let reference: Vec<ClassId> = pairs.iter().map(|p| p.0).collect();
        let predicted: Vec<ClassId> = pairs.iter().map(|p| p.1).collect();
        let base = confusion(&reference, &predicted, 4).unwrap();
        let map = |v: &[ClassId]| v.iter().map(|&l| perm[l as usize]).collect::<Vec<_>>();
        let permuted = confusion(&map(&reference), &map(&predicted), 4).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                prop_assert_eq!(base.get(i, j), permuted.get(perm[i] as usize, perm[j] as usize));
            }
        }
        let (a, b) = (Scores::of(&base).unwrap(), Scores::of(&permuted).unwrap());
        prop_assert!((a.oa - b.oa).abs() < 1e-12);
        prop_assert!((a.aa - b.aa).abs() < 1e-12);
        prop_assert!((a.kappa - b.kappa).abs() < 1e-12);
        prop_assert!(a.kappa <= a.oa + 1e-12);
    }

    #[test]
    fn broadcast_region_labels_score_like_pixels(seed in any::<u64>(), h in 1usize..8, w in 1usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let regions = random_regions(&mut rng, h, w, (h * w).min(4));
        let per_region: Vec<ClassId> = (0..regions.num_regions()).map(|r| (r % 3) as ClassId).collect();
        let at_pixels = regions.broadcast(&per_region);
        let manual: Vec<ClassId> = (0..h * w).map(|p| per_region[regions.region_of(p)]).collect();
        prop_assert_eq!(&at_pixels, &manual);
        let truth = LabelMap::new(h, w, 3, manual.clone()).unwrap();
        let s = Scores::of(&confusion(truth.labels(), &at_pixels, 3).unwrap()).unwrap();
        prop_assert_eq!(s.oa, 1.0);
    }

    #[test]
    fn terms_sum_to_energy(seed in any::<u64>(), lambda in 0.0f64..3.0, mu in 0.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = random_flat(&mut rng, 3, 4, 3, 3, &EnergyParams::joint(lambda, mu));
        let labels: Vec<ClassId> = (0..inst.model.num_nodes()).map(|v| (v * 7 % 3) as ClassId).collect();
        let terms = inst.model.evaluate_terms(&labels).unwrap();
        let total = inst.model.evaluate(&labels).unwrap();
        prop_assert!((terms.total() - total).abs() < 1e-9);
        prop_assert!(terms.unary >= 0.0 && terms.cross >= 0.0);
    }

    #[test]
    fn icm_never_increases_energy(seed in any::<u64>(), lambda in 0.0f64..4.0, mu in 0.0f64..4.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = random_flat(&mut rng, 4, 4, 3, 3, &EnergyParams::joint(lambda, mu));
        let start = inst.model.evaluate(&inst.model.unary_argmin()).unwrap();
        let r = icm_solve(&inst.model, &SolverConfig::default());
        prop_assert!(r.energy <= start + 1e-12);
        for pair in r.trace.windows(2) {
            prop_assert!(pair[1].current_energy <= pair[0].current_energy + 1e-12);
        }
    }
}

#[test]
fn region_count_falls_as_k_grows() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let image = FeatureRaster::new(
        16,
        16,
        1,
        (0..256)
            .map(|_| rand::Rng::gen_range(&mut rng, 0.0..255.0))
            .collect(),
    )
    .unwrap();
    let counts: Vec<usize> = [1.0, 10.0, 100.0, 1000.0, 10000.0]
        .iter()
        .map(|&k| {
            segment(
                &image,
                &SegmentationParams {
                    k,
                    min_size: 1,
                    connectivity: Connectivity::Eight,
                },
            )
            .unwrap()
            .num_regions()
        })
        .collect();
    assert!(counts.windows(2).all(|p| p[1] <= p[0]), "{counts:?}");
    assert!(counts[0] > counts[4]);
}

#[test]
fn zero_weight_edges_change_nothing() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..20 {
        let base = random_forest(&mut rng, 6, 3);
        let mut edges = base.edges().to_vec();
        for (u, v) in [(0, 5), (1, 4), (2, 3)] {
            edges.push(PottsEdge {
                u,
                v,
                weight: 0.0,
                kind: EdgeKind::PixelPixel,
            });
        }
        let padded = EnergyModel::new(3, base.unary_table().to_vec(), edges).unwrap();
        let a = brute_force_solve(&base).unwrap();
        let b = brute_force_solve(&padded).unwrap();
        assert_eq!(a.energy, b.energy);
        let t = trws_solve(&padded, &SolverConfig::default());
        assert!((t.energy - a.energy).abs() < 1e-9);
    }
}
