use memtune_core::metrics::{MetricSnapshot, Thresholds};
use memtune_core::urge::{compute_urge, weights_from_preference, Metric, Preference, Weights};
use proptest::prelude::*;

fn thresholds() -> impl Strategy<Value = Thresholds> {
    (0.5..1.0f64, 0.5..1.0f64, 10.0..500.0f64, 2000.0..32000.0f64).prop_map(|(p, s, l, m)| {
        Thresholds {
            plasticity: p,
            stability: s,
            latency_s: l,
            memory_max_mb: m,
        }
    })
}

fn snapshot() -> impl Strategy<Value = MetricSnapshot> {
    (
        thresholds(),
        0.0..=1.0f64,
        0.0..=1.0f64,
        0.0..3.0f64,
        0.0..1.5f64,
    )
        .prop_map(|(th, p, s, l, m)| MetricSnapshot {
            plasticity: p,
            stability: s,
            latency_s: l * th.latency_s,
            memory_peak_mb: m * th.memory_max_mb,
            thresholds: th,
        })
}

fn ordering() -> impl Strategy<Value = Vec<Metric>> {
    Just(Metric::ALL.to_vec()).prop_shuffle()
}

fn weights() -> impl Strategy<Value = Weights> {
    prop_oneof![
        Just(Weights::uniform()),
        ordering().prop_map(|o| weights_from_preference(&o).unwrap()),
    ]
}

proptest! {
    #[test]
    fn score_is_open_unit_interval(s in snapshot(), w in weights(), normalize: bool) {
        let v = compute_urge(&s, &w, normalize).unwrap().value;
        prop_assert!(v > 0.0 && v < 1.0, "score {}", v);
    }

    #[test]
    fn score_is_product_of_components(s in snapshot(), w in weights()) {
        let u = compute_urge(&s, &w, true).unwrap();
        let product: f64 = u.components.iter().product();
        prop_assert!((u.value - product).abs() <= 1e-15);
    }

    #[test]
    fn weights_sum_to_one(o in ordering()) {
        let w = weights_from_preference(&o).unwrap();
        prop_assert!((w.sum() - 1.0).abs() <= 1e-9);
        // strictly decreasing along the ordering
        let vals: Vec<f64> = o.iter().map(|m| w.get(*m)).collect();
        prop_assert!(vals.windows(2).all(|p| p[0] > p[1]));
    }

    #[test]
    fn monotone_in_each_input(s in snapshot(), w in weights(), step in 1e-3..0.5f64) {
        let base = compute_urge(&s, &w, true).unwrap().value;
        let score = |t: MetricSnapshot| compute_urge(&t, &w, true).unwrap().value;

        let mut t = s;
        t.plasticity = (s.plasticity + step).min(1.0);
        if t.plasticity > s.plasticity {
            prop_assert!(score(t) < base);
        }
        let mut t = s;
        t.stability = (s.stability + step).min(1.0);
        if t.stability > s.stability {
            prop_assert!(score(t) < base);
        }
        let mut t = s;
        t.latency_s = s.latency_s + step * s.thresholds.latency_s;
        prop_assert!(score(t) > base);
        let mut t = s;
        t.memory_peak_mb = s.memory_peak_mb + step * s.thresholds.memory_max_mb;
        prop_assert!(score(t) < base);
    }
}

#[test]
fn all_thresholds_met_gives_one_sixteenth() {
    let th = Thresholds {
        plasticity: 0.9,
        stability: 0.95,
        latency_s: 100.0,
        memory_max_mb: 12_000.0,
    };
    let s = MetricSnapshot {
        plasticity: 0.9,
        stability: 0.95,
        latency_s: 100.0,
        memory_peak_mb: 12_000.0,
        thresholds: th,
    };
    for p in [
        Preference::Balanced,
        Preference::prefer_latency(),
        Preference::prefer_plasticity_stability(),
    ] {
        let v = compute_urge(&s, &p.weights().unwrap(), true).unwrap().value;
        assert!((v - 0.0625).abs() < 1e-12);
    }
}

#[test]
fn four_level_ranking() {
    use Metric::*;
    let w = weights_from_preference(&[Memory, Plasticity, Stability, Latency]).unwrap();
    assert_eq!(
        (w.memory, w.plasticity, w.stability, w.latency),
        (0.4, 0.3, 0.2, 0.1)
    );
}

#[test]
fn rejects_incomplete_or_repeated_orderings() {
    use Metric::*;
    assert!(weights_from_preference(&[Memory, Plasticity, Stability]).is_err());
    assert!(weights_from_preference(&[Memory, Memory, Stability, Latency]).is_err());
}

#[test]
fn preference_labels_parse_back() {
    for p in [
        Preference::Balanced,
        Preference::prefer_latency(),
        Preference::prefer_plasticity_stability(),
    ] {
        assert_eq!(p.label().parse::<Preference>().unwrap(), p);
    }
    assert!("fastest".parse::<Preference>().is_err());
}
