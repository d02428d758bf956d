mod common;

use common::enumeration_oracle;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use prunesim::stats::{
    effect_size, effect_size_of, wilcoxon_exact, wilcoxon_normal, wilcoxon_signed_rank,
    PairedSample, StatsError,
};

fn fixture(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = rng.gen_range(6..=12);
    let tied = rng.gen_bool(0.5);
    (0..n)
        .map(|_| {
            if tied {
                rng.gen_range(-4i32..=4) as f64
            } else {
                rng.gen_range(-100.0..100.0)
            }
        })
        .collect()
}

#[test]
fn exact_path_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut checked = 0;
    while checked < 25 {
        let d = fixture(&mut rng);
        if d.iter().filter(|x| **x != 0.0).count() < 6 {
            continue;
        }
        let p = wilcoxon_exact(&d).unwrap();
        let oracle = enumeration_oracle(&d);
        assert!((p - oracle).abs() < 1e-12, "{d:?}: {p} vs {oracle}");
        checked += 1;
    }
}

#[test]
fn effect_size_hand_values() {
    assert!((effect_size_of(&[1.0, 2.0, 3.0]).unwrap() - 2.0).abs() < 1e-12);
    assert!((effect_size_of(&[-1.0, 1.0, 3.0]).unwrap() - 0.5).abs() < 1e-12);
    let d = [2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0];
    let expected = 5.0 / (32.0f64 / 7.0).sqrt();
    assert!((effect_size_of(&d).unwrap() - expected).abs() < 1e-12);
}

#[test]
fn normal_approximation_tracks_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..20 {
        let d: Vec<f64> = (0..20).map(|_| rng.gen_range(-1.0..1.5)).collect();
        let exact = wilcoxon_exact(&d).unwrap();
        let normal = wilcoxon_normal(&d).unwrap();
        assert!((exact - normal).abs() < 0.02, "{exact} vs {normal}");
    }
}

#[test]
fn dispatch_and_errors() {
    let pairs: Vec<PairedSample> = (0..30)
        .map(|k| PairedSample::new(format!("g{k}"), "avg_msgs", 10.0 + k as f64, 10.0))
        .collect();
    let p = wilcoxon_signed_rank(&pairs).unwrap();
    assert!(p < 1e-5);
    assert!(effect_size(&pairs).unwrap() > 0.0);
    let few: Vec<PairedSample> = pairs[..5].to_vec();
    assert_eq!(
        wilcoxon_signed_rank(&few),
        Err(StatsError::InsufficientData { got: 4, need: 6 })
    );
}
