use irs_core::experiments::{
    emit_plotdata, run_experiment, run_plan, ExperimentId, ExperimentSpec,
};

fn spec(text: &str) -> ExperimentSpec {
    ExperimentSpec::from_json(text).unwrap()
}

#[test]
fn repeated_runs_are_byte_identical() {
    let s =
        spec(r#"{"experiment": "fig4-rate-vs-power", "sweep": [10, 20], "draws": 1, "seed": 42}"#);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ra = run_experiment(&s, a.path()).unwrap();
    let rb = run_experiment(&s, b.path()).unwrap();
    assert_eq!(
        std::fs::read(&ra.csv).unwrap(),
        std::fs::read(&rb.csv).unwrap()
    );
    assert_eq!(
        std::fs::read(&ra.summary).unwrap(),
        std::fs::read(&rb.summary).unwrap()
    );
}

#[test]
fn thread_count_does_not_change_results() {
    let plan =
        spec(r#"{"experiment": "fig5-rate-vs-M1-split", "sweep": [8, 24], "draws": 4, "seed": 3}"#)
            .plan()
            .unwrap();
    let run_with = |threads| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        let mut buf = Vec::new();
        pool.install(|| run_plan(&plan, &mut buf)).unwrap();
        buf
    };
    assert_eq!(run_with(1), run_with(3));
}

#[test]
fn seed_changes_results() {
    let run = |seed: u64| {
        let plan = spec(&format!(
            r#"{{"experiment": "prop1-property", "sweep": [0], "draws": 1, "seed": {seed}}}"#
        ))
        .plan()
        .unwrap();
        let mut buf = Vec::new();
        run_plan(&plan, &mut buf).unwrap();
        buf
    };
    assert_ne!(run(1), run(2));
}

#[test]
fn double_irs_beats_single_irs_at_every_split() {
    let s = spec(
        r#"{"experiment": "fig5-rate-vs-M1-split",
            "scenario": {"irs1_subsurfaces": 16, "irs2_subsurfaces": 16},
            "sweep": [4, 8, 12, 16, 20, 24, 28], "draws": 3, "seed": 11}"#,
    );
    let dir = tempfile::tempdir().unwrap();
    let art = run_experiment(&s, dir.path()).unwrap();
    let rec = &art.summary_record;
    assert!(rec.passed, "{:#?}", rec.assertions);
    let (double, single) = (
        rec.methods.iter().position(|m| m == "double-ao").unwrap(),
        rec.methods.iter().position(|m| m == "single-irs").unwrap(),
    );
    for p in &rec.points {
        assert!(
            p.stats[double].mean.unwrap() >= p.stats[single].mean.unwrap(),
            "m1 = {}",
            p.x
        );
    }
}

#[test]
fn kappa_family_yields_two_series_per_factor() {
    let s = spec(
        r#"{"experiment": "fig6-rate-vs-totalM", "sweep": [8, 16], "draws": 1, "seed": 2,
            "options": {"kappas_db": [-10, 0, 5, 10]}}"#,
    );
    let dir = tempfile::tempdir().unwrap();
    let art = run_experiment(&s, dir.path()).unwrap();
    let files = emit_plotdata(&art.csv, &dir.path().join("plot")).unwrap();
    assert_eq!(files.len(), 2 * 4);
    for f in &files {
        let text = std::fs::read_to_string(f).unwrap();
        assert_eq!(text.lines().count(), 3, "{}", f.display());
        assert!(text.starts_with("# total_subsurfaces y yerr\n"));
    }
}

#[test]
fn single_method_csv_gives_one_series() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("one.csv");
    std::fs::write(
        &csv,
        "x,only_mean,only_stderr,draws,failed_draws,status\n1,2.5,0.1,3,0,ok\n2,3.5,0.2,3,0,ok\n",
    )
    .unwrap();
    let files = emit_plotdata(&csv, dir.path()).unwrap();
    assert_eq!(files.len(), 1);
    assert_eq!(
        std::fs::read_to_string(&files[0]).unwrap(),
        "# x y yerr\n1 2.5 0.1\n2 3.5 0.2\n"
    );
}

#[test]
fn empty_sweep_is_rejected_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("empty.csv");
    std::fs::write(&csv, "x,a_mean,a_stderr,draws,failed_draws,status\n").unwrap();
    let plot = dir.path().join("plot");
    assert!(emit_plotdata(&csv, &plot).is_err());
    assert!(!plot.exists());

    let s = spec(r#"{"experiment": "fig4-rate-vs-power", "sweep": []}"#);
    let out = dir.path().join("run");
    assert!(run_experiment(&s, &out).is_err());
    assert!(!out.exists());
}

#[test]
fn malformed_csv_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    for (i, body) in [
        "x,a_mean\n1,2\n",
        "x,a_mean,a_stderr\n1,two,0\n",
        "x,a_mean,a_stderr\n1,2,0,9\n",
        "",
    ]
    .iter()
    .enumerate()
    {
        let csv = dir.path().join(format!("bad{i}.csv"));
        std::fs::write(&csv, body).unwrap();
        assert!(
            emit_plotdata(&csv, &dir.path().join(format!("p{i}"))).is_err(),
            "{body:?}"
        );
    }
}

#[test]
fn csv_columns_follow_methods() {
    let s = spec(r#"{"experiment": "oracle-suite", "sweep": [1, 2], "draws": 2, "seed": 5}"#);
    let dir = tempfile::tempdir().unwrap();
    let art = run_experiment(&s, dir.path()).unwrap();
    let text = std::fs::read_to_string(&art.csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "dim,theta2-closed_mean,theta2-closed_stderr,theta2-grid_mean,theta2-grid_stderr,\
         theta1-closed_mean,theta1-closed_stderr,theta1-grid_mean,theta1-grid_stderr,draws,failed_draws,status"
    );
    for line in lines {
        assert!(line.ends_with(",2,0,ok"), "{line}");
    }
    assert!(art.summary_record.passed);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&art.summary).unwrap()).unwrap();
    assert_eq!(summary["experiment"], "oracle-suite");
    assert_eq!(summary["points"].as_array().unwrap().len(), 2);
}

#[test]
fn multi_user_power_sweep_runs_and_marks_receivers() {
    let s = spec(
        r#"{"experiment": "fig7-mu-alg", "sweep": [20],  "draws": 1, "seed": 1,
            "scenario": {"bs_antennas": 8, "users": 3, "irs1_subsurfaces": 4, "irs2_subsurfaces": 4},
            "options": {"outer_iterations": 2, "candidates": 20}}"#,
    );
    let plan = s.plan().unwrap();
    assert_eq!(plan.id, ExperimentId::Fig7MuAlg);
    let mut buf = Vec::new();
    let rec = run_plan(&plan, &mut buf).unwrap();
    assert_eq!(rec.failed_draws, 0, "{:?}", rec.points[0].first_error);
    assert!(rec.passed, "{:#?}", rec.assertions);
    // Algorithm 1 never ends below its codebook initialization
    let st = &rec.points[0].stats;
    assert!(st[0].mean.unwrap() >= st[1].mean.unwrap());
    assert!(st[2].mean.unwrap() >= st[3].mean.unwrap());
}

#[test]
fn shipped_specs_validate() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../specs");
    let mut seen = Vec::new();
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "json") {
            let plan = ExperimentSpec::from_file(&path).unwrap().plan().unwrap();
            seen.push(plan.id);
        }
    }
    for id in ExperimentId::ALL {
        assert!(seen.contains(&id), "no shipped spec for {}", id.as_str());
    }
}
