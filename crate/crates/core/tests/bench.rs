use lsmm::bench::{
    grid_search, learning_curve, noise_sweep, param_sensitivity, run_trials, to_csv, GridSpec,
    ModelTemplate, ParamTuple, Protocol, ReportDocument, TrialStatus, CSV_COLUMNS,
};
use lsmm::data::synthetic_blobs;
use lsmm::kernels::InfluenceVariant;
use lsmm::{InfluenceSpec, KernelSpec, ModelConfig, ModelKind, ModelParams, Scaling};

fn config(kind: ModelKind) -> ModelConfig {
    ModelConfig {
        kind,
        kernel: KernelSpec::rbf(0.5).unwrap(),
        influence: kind.uses_memory().then(|| InfluenceSpec::gaussian(1.0).unwrap()),
        params: ModelParams::new(1.0, 0.25).unwrap(),
        scaling: Scaling::ZScore,
    }
}

fn small_grid() -> GridSpec {
    GridSpec {
        gamma_grid: vec![0.5, 2.0],
        lambda_grid: vec![0.0, 0.5],
        kernel_param_grid: vec![0.25, 1.0],
        influence_param_grid: vec![1.0],
    }
}

#[test]
fn single_tuple_grid_equals_fixed_run() {
    let ds = synthetic_blobs(60, 3, 1.5, 11).unwrap();
    let cfg = config(ModelKind::Wimm);
    let protocol = Protocol::benchmark(5);
    let params = ParamTuple::of(&cfg);
    let (best, mut grid) = grid_search(&ds, &ModelTemplate::of(&cfg), &GridSpec::single(&params), &protocol).unwrap();
    let mut fixed = run_trials(&ds, &cfg, &protocol).unwrap();
    assert_eq!(best, params);
    grid.strip_timings();
    fixed.strip_timings();
    assert_eq!(grid.trials, fixed.trials);
    assert_eq!(grid.summary, fixed.summary);
    assert_eq!(grid.grid.as_ref().unwrap().cells.len(), 1);
}

#[test]
fn grid_cells_agree_with_standalone_fits() {
    let ds = synthetic_blobs(50, 2, 1.0, 12).unwrap();
    let cfg = config(ModelKind::Mimm);
    let protocol = Protocol::benchmark(9);
    let template = ModelTemplate::of(&cfg);
    let (_, report) = grid_search(&ds, &template, &small_grid(), &protocol).unwrap();
    let grid = report.grid.unwrap();
    assert_eq!(grid.cells.len(), 2 * 2 * 2);
    for cell in &grid.cells {
        let standalone = run_trials(&ds, &template.config(&cell.params).unwrap(), &protocol).unwrap();
        for (a, b) in cell.trials.iter().zip(&standalone.trials) {
            assert_eq!(a.train_accuracy, b.train_accuracy);
            assert_eq!(a.test_accuracy, b.test_accuracy);
        }
    }
    // the headline tuple maximizes mean test accuracy
    let top = grid.cells.iter().map(|c| c.summary.test_mean).fold(f64::MIN, f64::max);
    assert_eq!(grid.best_by_test_summary.test_mean, top);
    let top_train = grid.cells.iter().map(|c| c.summary.train_mean).fold(f64::MIN, f64::max);
    assert_eq!(grid.best_by_train_summary.train_mean, top_train);
}

#[test]
fn reports_are_deterministic() {
    let ds = synthetic_blobs(40, 2, 1.0, 13).unwrap();
    let cfg = config(ModelKind::Wimm);
    let run = |jobs| {
        let protocol = Protocol { jobs, ..Protocol::benchmark(21) };
        let (_, r) = grid_search(&ds, &ModelTemplate::of(&cfg), &small_grid(), &protocol).unwrap();
        let mut doc = ReportDocument::new("bench", vec![r]);
        doc.strip_timings();
        doc.to_json().unwrap()
    };
    let a = run(1);
    assert_eq!(a, run(1));
    assert_eq!(a, run(3));
}

#[test]
fn zero_noise_matches_fixed_run() {
    let ds = synthetic_blobs(50, 3, 1.0, 14).unwrap();
    let cfg = config(ModelKind::Mimm);
    let protocol = Protocol::sweep(3);
    let mut sweep = noise_sweep(&ds, &cfg, &[0.0, 0.3], &protocol).unwrap();
    let mut fixed = run_trials(&ds, &cfg, &protocol).unwrap();
    sweep[0].strip_timings();
    fixed.strip_timings();
    assert_eq!(sweep[0].trials, fixed.trials);
    assert_eq!(sweep[1].protocol.sweep_value, Some(0.3));
    // memory models fit noisy labels exactly
    assert!(sweep[1].trials.iter().all(|t| t.train_accuracy == 1.0));
}

#[test]
fn learning_curve_records_sampling_failures() {
    let ds = synthetic_blobs(30, 2, 1.0, 15).unwrap();
    let reports = learning_curve(&ds, &config(ModelKind::Lssvm), &[0.02, 1.0], &Protocol::sweep(1)).unwrap();
    assert!(reports[0].trials.iter().all(|t| matches!(t.status, TrialStatus::Failed(_))));
    assert!(reports[1].trials.iter().all(|t| t.status == TrialStatus::Ok));
    assert_eq!(reports[1].trials[0].train_size, 24);
}

#[test]
fn sensitivity_needs_memory_model() {
    let ds = synthetic_blobs(30, 2, 1.0, 16).unwrap();
    assert!(param_sensitivity(&ds, &config(ModelKind::Lssvm), &[0.5], &Protocol::sweep(1)).is_err());
    let r = param_sensitivity(&ds, &config(ModelKind::Mimm), &[0.5, 1.5], &Protocol::sweep(1)).unwrap();
    assert_eq!(r[1].params.influence_param, Some(1.5));
}

#[test]
fn singular_cells_are_flagged() {
    let ds = synthetic_blobs(40, 2, 1.0, 17).unwrap();
    let template = ModelTemplate::new(ModelKind::Mimm, KernelSpec::Linear, Some(InfluenceVariant::Hinge));
    let grid = GridSpec {
        influence_param_grid: vec![1e-9, 100.0],
        ..small_grid()
    };
    let (best, report) = grid_search(&ds, &template, &grid, &Protocol::benchmark(2)).unwrap();
    let outcome = report.grid.unwrap();
    let tiny: Vec<_> = outcome.cells.iter().filter(|c| c.params.influence_param == Some(1e-9)).collect();
    assert!(tiny.iter().all(|c| c.summary.singular_trials == 5 && c.summary.test_mean == 0.0));
    assert_eq!(best.influence_param, Some(100.0));
}

#[test]
fn csv_has_one_row_per_cell_trial() {
    let ds = synthetic_blobs(40, 2, 1.0, 18).unwrap();
    let (_, r) = grid_search(&ds, &ModelTemplate::of(&config(ModelKind::Lssvm)), &small_grid(), &Protocol::benchmark(4)).unwrap();
    let doc = ReportDocument::new("bench", vec![r]);
    let text = to_csv(&doc).unwrap();
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    assert_eq!(rdr.headers().unwrap().iter().collect::<Vec<_>>(), CSV_COLUMNS.to_vec());
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    // LSSVM: 2 γ × 2 kernel params × 5 trials
    assert_eq!(rows.len(), 20);
    for row in &rows {
        for name in ["gamma", "train_accuracy", "test_accuracy", "fit_seconds", "predict_seconds"] {
            let i = CSV_COLUMNS.iter().position(|c| *c == name).unwrap();
            let v: f64 = row[i].parse().unwrap();
            assert!(v.is_finite());
        }
        assert_eq!(&row[CSV_COLUMNS.iter().position(|c| *c == "lambda").unwrap()], "");
    }
}

#[test]
fn json_report_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let ds = synthetic_blobs(30, 2, 1.0, 19).unwrap();
    let r = run_trials(&ds, &config(ModelKind::Wimm), &Protocol::benchmark(0)).unwrap();
    let doc = ReportDocument::new("trials", vec![r]);
    let path = dir.path().join("r.json");
    lsmm::bench::write_report(&doc, &path, lsmm::bench::ReportFormat::Json).unwrap();
    assert_eq!(ReportDocument::read_json(&path).unwrap(), doc);
}
