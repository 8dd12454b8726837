//! A dataset written by an earlier build must keep parsing to the same
//! content.
//!
//! Regenerate with
//! `spinr simulate --phantom golden_phantom.json --aperture golden_aperture.json --out golden.spnr`
//! from `tests/data`.

use spinr::aperture::SensorPose;
use spinr::dataset::MeasurementSet;
use spinr::forward::spectral_forward;
use spinr::phantom::PhantomSpec;
use spinr::Vec3;

const DATA: &[u8] = include_bytes!("data/golden.spnr");
const PHANTOM: &str = include_str!("data/golden_phantom.json");

#[test]
fn golden_dataset_parses() {
    assert_eq!(&DATA[..4], b"SPNR");
    assert_eq!(u32::from_le_bytes(DATA[4..8].try_into().unwrap()), 1);

    let set = MeasurementSet::from_bytes(DATA).unwrap();
    assert_eq!(set.len(), 4);
    assert_eq!((set.window.k_min, set.window.k_max, set.window.guard), (1, 9, 2));
    assert!(!set.flags.f64_payload && !set.flags.full_spectrum && !set.flags.mono);
    assert_eq!(set.noise_sigma, 0.0);
    let second = SensorPose::monostatic(Vec3::new(0.0, 0.2, 0.0));
    assert!((set.poses[1].tx - second.tx).norm() < 1e-15 && set.poses[1].is_monostatic());

    // f32 payload: compare against a fresh evaluation at single precision
    let (points, sigmas) = PhantomSpec::from_json(PHANTOM).unwrap().points_and_sigmas().unwrap();
    for (pose, stored) in set.poses.iter().zip(&set.values) {
        let fresh = spectral_forward(&set.chirp, pose, &points, &sigmas, &set.window).unwrap();
        let scale = fresh.max_abs();
        for (a, b) in stored.iter().zip(&fresh.values) {
            assert!((a - b).norm() <= 1e-6 * scale, "{a} vs {b}");
        }
    }
}
