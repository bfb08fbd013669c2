use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use usar_core::metrics::{confusion, dice, iou, mean_average_precision};
use usar_core::{Class, Mask};
use usar_testkit::{count_overlap, overlap_scores};

fn random_mask(rng: &mut impl Rng, w: usize, h: usize) -> Mask {
    // Blocky masks so overlaps span the whole [0, 1] range.
    let fill = rng.random_range(0.0..1.0);
    let labels = (0..w * h)
        .map(|_| {
            if rng.random_bool(fill) {
                rng.random_range(1..=2)
            } else {
                0
            }
        })
        .collect();
    Mask::new(w, h, labels, 1.0).unwrap()
}

#[test]
fn dice_and_iou_match_pixel_counting() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(64);
    for _ in 0..1000 {
        let p = random_mask(&mut rng, 64, 64);
        let g = random_mask(&mut rng, 64, 64);
        for class in Class::ALL {
            let (tp, fp, fneg) = count_overlap(p.labels(), g.labels(), class.label());
            let c = confusion(&p, &g, class).unwrap();
            assert_eq!((c.true_positive, c.false_positive, c.false_negative), (tp, fp, fneg));
            let (d, j) = overlap_scores(tp, fp, fneg);
            let dd = dice(&p, &g, class).unwrap();
            let jj = iou(&p, &g, class).unwrap();
            assert_eq!(dd, d);
            assert_eq!(jj, j);
            assert!((dd - 2.0 * jj / (1.0 + jj)).abs() < 1e-12);
            assert_eq!(dd, dice(&g, &p, class).unwrap());
            assert_eq!(jj, iou(&g, &p, class).unwrap());
            assert!((0.0..=1.0).contains(&dd) && (0.0..=1.0).contains(&jj));
        }
    }
}

fn dataset() -> impl Strategy<Value = (Vec<Vec<u8>>, Vec<Vec<u8>>)> {
    (1usize..6).prop_flat_map(|n| {
        (
            prop::collection::vec(prop::collection::vec(0u8..3, 64), n),
            prop::collection::vec(prop::collection::vec(0u8..3, 64), n),
        )
    })
}

fn masks(raw: &[Vec<u8>]) -> Vec<Mask> {
    raw.iter().map(|l| Mask::new(8, 8, l.clone(), 1.0).unwrap()).collect()
}

proptest! {
    #[test]
    fn map_is_monotone_under_replacement((preds, gts) in dataset(), pick in 0usize..6) {
        let preds = masks(&preds);
        let gts = masks(&gts);
        let before = mean_average_precision(&preds, &gts).unwrap().map;
        let k = pick % preds.len();
        let mut fixed = preds.clone();
        fixed[k] = gts[k].clone();
        let after = mean_average_precision(&fixed, &gts).unwrap().map;
        prop_assert!(after >= before - 1e-12, "{before} -> {after}");
        prop_assert!((0.0..=1.0).contains(&before));
    }

    #[test]
    fn identical_predictions_score_one((_, gts) in dataset()) {
        let gts = masks(&gts);
        prop_assert_eq!(mean_average_precision(&gts, &gts).unwrap().map, 1.0);
    }
}
