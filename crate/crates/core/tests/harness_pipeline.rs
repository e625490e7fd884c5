mod common;

use ads_core::harness::{emit_report, layout, run_experiment, HarnessError, CORRELATION_COLUMNS};

#[test]
fn tiny_experiment_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let root = common::synthetic_root(tmp.path());
    let out = tmp.path().join("run");
    let cfg = common::tiny_config(&out, &root, 2);

    let first = run_experiment(&cfg).unwrap();
    // 12 archs × 2 seeds + 6 calibration archs at fraction 0.5
    assert_eq!(first.new_runs, 12 * 2 + 6);
    let rep = &first.reports.scenarios[0];
    for a in &rep.archs {
        assert_eq!(a.shifts.len(), 2);
        assert_eq!(a.mean_shift, (a.shifts[0] + a.shifts[1]) / 2.0);
    }
    let header = std::fs::read_to_string(out.join("reports/correlation.csv")).unwrap();
    assert_eq!(header.lines().next().unwrap(), CORRELATION_COLUMNS.join(","));
    let before = common::report_bytes(&out);

    // resume: nothing new, identical reports
    let again = run_experiment(&cfg).unwrap();
    assert_eq!(again.new_runs, 0);
    assert_eq!(common::report_bytes(&out), before);

    // every SVG is well-formed XML
    for (name, bytes) in &before {
        if name.ends_with(".svg") {
            let mut reader = quick_xml::Reader::from_reader(bytes.as_slice());
            let mut buf = Vec::new();
            loop {
                match reader.read_event_into(&mut buf) {
                    Ok(quick_xml::events::Event::Eof) => break,
                    Ok(_) => {}
                    Err(e) => panic!("{name}: {e}"),
                }
                buf.clear();
            }
        }
    }

    // PR rows follow the threshold grid
    let pr = std::fs::read_to_string(out.join("reports/pr_m2f.csv")).unwrap();
    let qs: Vec<f64> = pr.lines().skip(1).map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    assert!(qs.windows(2).all(|w| w[0] < w[1]));

    // a changed config is refused
    let mut changed = cfg.clone();
    changed.train.lr = 0.02;
    assert!(matches!(run_experiment(&changed), Err(HarnessError::ConfigChanged { .. })));

    // a dropped record is reported by key
    let path = layout::records(&out, "m2f");
    let text = std::fs::read_to_string(&path).unwrap();
    let kept: Vec<&str> = text.lines().skip(1).collect();
    std::fs::write(&path, kept.join("\n") + "\n").unwrap();
    match emit_report(&out) {
        Err(HarnessError::Incomplete { missing }) => assert_eq!(missing.len(), 1),
        other => panic!("expected incomplete, got {other:?}"),
    }
}

#[test]
fn missing_data_lists_expected_paths() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = common::tiny_config(&tmp.path().join("run"), &tmp.path().join("nowhere"), 1);
    let err = run_experiment(&cfg).unwrap_err().to_string();
    assert!(err.contains("train-images-idx3-ubyte"), "{err}");
}
