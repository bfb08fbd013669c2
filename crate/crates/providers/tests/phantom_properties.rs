use proptest::prelude::*;
use usar_core::geometry::{measure_mask, oriented_bounding_box, select_region};
use usar_core::{ClassSelector, View};
use usar_providers::{phantom_next, ArtifactMode, PhantomSpec};
use usar_testkit::axis_angle_diff_deg;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    // Ground-truth masks fed through geometry give back the drawn ellipse.
    #[test]
    fn oracle_closure(
        a in 20.0f64..180.0,
        frac in 0.0f64..1.0,
        theta in -3.2f64..3.2,
        t in 0u64..500,
        seed in any::<u64>(),
    ) {
        let b = 20.0 + frac * (a - 20.0);
        let spec = PhantomSpec {
            semi_major: a,
            semi_minor: b,
            theta,
            drift_amplitude: 8.0,
            noise: 0.3,
            artifact: ArtifactMode::None,
            seed,
            ..Default::default()
        };
        let (_, mask) = phantom_next(&spec, t).unwrap();
        let region = select_region(&mask, ClassSelector::Union).unwrap();
        let bx = oriented_bounding_box(&region).unwrap();
        let (major, minor) = spec.analytic_extents();
        prop_assert!((bx.extent_major - major).abs() <= 3.0, "{bx:?}");
        prop_assert!((bx.extent_minor - minor).abs() <= 3.0, "{bx:?}");
        if a >= 1.3 * b {
            let got = bx.theta.to_degrees().rem_euclid(180.0);
            prop_assert!(axis_angle_diff_deg(got, theta.to_degrees()) < 2.0, "{got} vs {theta}");
        }
    }

    #[test]
    fn deterministic(t in 0u64..10_000, seed in any::<u64>(), noise in 0.0f64..1.0) {
        let spec = PhantomSpec {
            width: 128,
            height: 128,
            semi_major: 40.0,
            semi_minor: 25.0,
            noise,
            seed,
            artifact: ArtifactMode::Mild,
            ..Default::default()
        };
        prop_assert_eq!(phantom_next(&spec, t).unwrap(), phantom_next(&spec, t).unwrap());
    }
}

#[test]
fn quiet_axis_aligned_phantom_is_exact() {
    for (a, b) in [(150.0, 65.0), (100.0, 100.0), (21.0, 20.0)] {
        let spec = PhantomSpec {
            semi_major: a,
            semi_minor: b,
            theta: 0.0,
            drift_amplitude: 0.0,
            noise: 0.0,
            pixel_spacing: 0.5,
            ..Default::default()
        };
        let (_, mask) = phantom_next(&spec, 0).unwrap();
        let (_, m) = measure_mask(&mask, ClassSelector::Union, View::Transverse).unwrap();
        assert_eq!(m.width_mm, Some((2.0 * a + 1.0) * 0.5));
        assert_eq!(m.thickness_mm, Some((2.0 * b + 1.0) * 0.5));
    }
}

// Pins the byte stream so any change to rendering or the RNG is noticed.
#[test]
fn golden_checksum() {
    let spec = PhantomSpec {
        width: 64,
        height: 48,
        semi_major: 18.0,
        semi_minor: 11.0,
        drift_amplitude: 3.0,
        seed: 7,
        artifact: ArtifactMode::Mild,
        ..Default::default()
    };
    let (image, mask) = phantom_next(&spec, 3).unwrap();
    let fnv = |bytes: &[u8]| {
        bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| {
            (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
        })
    };
    assert_eq!(
        (fnv(image.data()), fnv(mask.labels())),
        (GOLDEN_IMAGE, GOLDEN_MASK)
    );
}

const GOLDEN_IMAGE: u64 = 10510282221568677163;
const GOLDEN_MASK: u64 = 1107307635821817803;
