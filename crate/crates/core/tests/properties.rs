use featleak::attack::{loss_mae, total_loss, LossWeights};
use featleak::features::{
    assemble_sparse_map, cell_of, detect_harris, extract_descriptors, read_sfv, write_sfv, Feature, FeatureSet,
    HarrisConfig, Keypoint, Method,
};
use featleak::metrics::object_recall;
use featleak::mitigate::{reduce_top_n, suppress_in_boxes, BoundingBox};
use featleak::Image;
use proptest::prelude::*;

fn keypoint(h: usize, w: usize) -> impl Strategy<Value = Keypoint> {
    (0.0..w as f32, 0.0..h as f32, 0.0f32..10.0, 0.5f32..4.0, 0.0f32..6.28).prop_map(move |(x, y, r, s, o)| {
        Keypoint { x: x.min(w as f32 - 0.01), y: y.min(h as f32 - 0.01), response: r, scale: s, orientation: o }
    })
}

fn feature_set() -> impl Strategy<Value = FeatureSet> {
    (1usize..24, 1usize..24, prop_oneof![Just(Method::Sift), Just(Method::Binary), Just(Method::Learned)])
        .prop_flat_map(|(h, w, m)| {
            let feat = (keypoint(h, w), prop::collection::vec(0.0f32..=1.0, m.channels()))
                .prop_map(|(keypoint, descriptor)| Feature { keypoint, descriptor });
            prop::collection::vec(feat, 0..40).prop_map(move |fs| FeatureSet::new(m, h, w, fs).unwrap())
        })
}

fn dyadic_image(h: usize, w: usize) -> impl Strategy<Value = Image> {
    prop::collection::vec(0u8..=32, h * w * 3)
        .prop_map(move |v| Image::new(h, w, v.into_iter().map(|k| k as f32 / 64.0).collect()).unwrap())
}

fn boxes() -> impl Strategy<Value = Vec<BoundingBox>> {
    let b = (0.0..20.0f64, 0.0..20.0f64, 0.0..10.0f64, 0.0..10.0f64)
        .prop_map(|(x, y, w, h)| BoundingBox::new(x, y, x + w, y + h, "person", 0.9).unwrap());
    prop::collection::vec(b, 0..4)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sparse_map_reads_back_surviving_descriptors(fs in feature_set()) {
        let map = assemble_sparse_map(&fs, fs.height(), fs.width()).unwrap();
        prop_assert!(map.occupancy().len() <= fs.len());
        let mut seen = std::collections::BTreeSet::new();
        // Sorted by descending response, so the first feature per cell wins.
        for f in fs.features() {
            let cell = cell_of(&f.keypoint, fs.height(), fs.width());
            if seen.insert(cell) {
                prop_assert_eq!(map.cell(cell.0, cell.1), f.descriptor.as_slice());
            }
        }
        prop_assert_eq!(&seen, map.occupancy());
        for r in 0..fs.height() {
            for c in 0..fs.width() {
                if !seen.contains(&(r, c)) {
                    prop_assert!(map.cell(r, c).iter().all(|&v| v == 0.0));
                }
            }
        }
    }

    #[test]
    fn harris_ignores_constant_offsets(img in dyadic_image(20, 20), k in 1u8..=16) {
        let shifted = Image::new(20, 20, img.pixels().iter().map(|v| v + k as f32 / 64.0).collect()).unwrap();
        let cfg = HarrisConfig::default();
        prop_assert_eq!(detect_harris(&img, 100, &cfg), detect_harris(&shifted, 100, &cfg));
    }

    #[test]
    fn descriptors_keep_alignment(img in dyadic_image(40, 40), kps in prop::collection::vec(keypoint(40, 40), 0..12)) {
        for m in Method::ALL {
            let fs = extract_descriptors(&img, &kps, m).unwrap();
            prop_assert!(fs.len() <= kps.len());
            for f in fs.features() {
                prop_assert!(kps.contains(&f.keypoint));
                prop_assert_eq!(f.descriptor.len(), m.channels());
                prop_assert!(f.descriptor.iter().all(|v| (0.0..=1.0).contains(v)));
            }
        }
    }

    #[test]
    fn sfv_round_trip(fs in feature_set()) {
        let mut buf = Vec::new();
        write_sfv(&fs, &mut buf).unwrap();
        let back = read_sfv(&mut buf.as_slice()).unwrap();
        prop_assert_eq!(&back, &fs);
        let mut again = Vec::new();
        write_sfv(&back, &mut again).unwrap();
        prop_assert_eq!(again, buf);
    }

    #[test]
    fn mitigations_only_remove(fs in feature_set(), n in 0usize..50, bx in boxes()) {
        let reduced = reduce_top_n(&fs, n);
        prop_assert_eq!(reduced.len(), n.min(fs.len()));
        let suppressed = suppress_in_boxes(&fs, &bx);
        prop_assert_eq!(&suppress_in_boxes(&suppressed, &bx), &suppressed);
        for f in suppressed.features() {
            prop_assert!(fs.features().contains(f));
        }
    }

    #[test]
    fn object_recall_ignores_order(bx in boxes(), mut other in boxes()) {
        let a = object_recall(&bx, &other);
        other.reverse();
        let b = object_recall(&bx, &other);
        prop_assert_eq!(a.matched, b.matched);
        prop_assert!((0.0..=1.0).contains(&a.recall));
    }

    #[test]
    fn total_loss_is_monotone(m in 0.0..2.0f64, p in 0.0..2.0f64, a in 0.0..2.0f64, d in 0.0..1.0f64, epoch in 1usize..400) {
        let w = LossWeights { perceptual: 1.0, adversarial: 0.1, adversarial_start: 251 };
        let base = total_loss(m, p, a, &w, epoch);
        prop_assert!(base >= 0.0);
        prop_assert!(total_loss(m + d, p, a, &w, epoch) >= base);
        prop_assert!(total_loss(m, p + d, a, &w, epoch) >= base);
        prop_assert!(total_loss(m, p, a + d, &w, epoch) >= base);
    }

    #[test]
    fn mae_is_symmetric(a in dyadic_image(4, 5), b in dyadic_image(4, 5)) {
        let ab = loss_mae(&a, &b).unwrap();
        prop_assert_eq!(ab, loss_mae(&b, &a).unwrap());
        prop_assert!(ab >= 0.0);
        prop_assert_eq!(loss_mae(&a, &a).unwrap(), 0.0);
    }
}
