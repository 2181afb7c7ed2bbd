use emoseq_demo::{ctc_report, emotions, metrics_report, tone_frames};

#[test]
fn two_second_tone_has_eight_frames() {
    let v = tone_frames(440.0, 2.0, 0.01, 1).unwrap();
    assert_eq!(v.count(), 8);
    assert_eq!(v.channel(0, 1).len(), 1600);
    assert!(v.channel(3, 1).iter().all(|x| (0.0..=1.0).contains(x)));
    assert!((v.start_time(7) - 1.4).abs() < 1e-12);
}

#[test]
fn tone_frames_are_seeded() {
    let a = tone_frames(300.0, 1.0, 0.2, 9).unwrap();
    let b = tone_frames(300.0, 1.0, 0.2, 9).unwrap();
    assert_eq!(a.channel(2, 0), b.channel(2, 0));
}

fn value(report: &str, key: &str) -> f64 {
    report
        .lines()
        .find(|l| l.contains(key))
        .unwrap()
        .rsplit(' ')
        .next()
        .unwrap()
        .parse()
        .unwrap()
}

#[test]
fn ctc_report_lists_decodes() {
    let r = ctc_report("0.7,0.1,0.2\n0.1,0.1,0.8\n0.1,0.7,0.2\n", "ab").unwrap();
    assert!(r.contains("best path:   A - B"));
    assert!(r.contains("labeling:    A B"));
    // AAB + ABB + -AB + A-B + AB-
    let expected = 0.049 + 0.049 + 0.014 + 0.392 + 0.014;
    assert!((value(&r, "forward") - expected).abs() < 1e-12);
    assert!((value(&r, "forward") - value(&r, "enumeration")).abs() < 1e-12);
}

#[test]
fn metrics_json() {
    let r = metrics_report("anger sad sad", "anger sad anger").unwrap();
    assert!(r.starts_with("{\"unweighted_accuracy\":0.75,"));
    assert_eq!(emotions().len(), 7);
}
