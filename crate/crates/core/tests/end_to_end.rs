use std::io::Write;

use dosesens::model::{ColumnMapping, MatchedDataset};
use dosesens::report::{ci_sweep, sharp_sweep, sweep_csv, to_json, Report, RunManifest, WeakSweep};
use dosesens::sharp::SharpConfig;
use dosesens::stats::{build_statistic, StatisticKind, StatisticSpec};
use dosesens::variance::DesignSpec;
use dosesens::weak::estimand::{build_estimand, DegeneratePolicy, EstimandKind};
use dosesens::weak::WeakConfig;
use dosesens::Error;

fn write_csv() -> tempfile::NamedTempFile {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    writeln!(f, "set_id,unit_id,dose,outcome,age").unwrap();
    for i in 0..40 {
        let n = 2 + i % 3;
        for j in 0..n {
            let z = ((i * 7 + j * 13) % 17) as f64 / 16.0;
            let y = 0.8 * z + ((i * 31 + j * 11) % 19) as f64 / 19.0;
            writeln!(f, "s{i},u{j},{z},{y},{}", 30 + (i * 3 + j) % 25).unwrap();
        }
    }
    f.flush().unwrap();
    f
}

#[test]
fn csv_to_sharp_and_interval_reports() {
    let file = write_csv();
    let data = MatchedDataset::load_csv(file.path(), &ColumnMapping::default()).unwrap();
    assert_eq!(data.num_sets(), 40);
    assert_eq!(data.covariate_dim(), 1);

    let gammas = [1.0, 1.2, 1.5];
    let stat = build_statistic(&StatisticSpec::from_kind(StatisticKind::DoubleRank).unwrap(), &data).unwrap();
    let sharp = sharp_sweep(&data, &stat, &gammas, 0.1, &SharpConfig::default()).unwrap();
    assert_eq!(sharp.results.len(), 3);
    assert!(sharp.results.iter().all(|e| e.result.per_set.len() == 40));

    let est = build_estimand(EstimandKind::Tsate { threshold: 0.5 }, &data, DegeneratePolicy::Drop).unwrap();
    let cfg = WeakConfig {
        design: DesignSpec::CovariateMeans,
        ..WeakConfig::default()
    };
    let ci = ci_sweep(&data, &est, &gammas, 0.1, 0.0, &cfg).unwrap();
    let manifest = RunManifest::new("ci", &cfg, Some(file.path()), None).unwrap();
    assert_eq!(manifest.input_sha256.as_ref().map(String::len), Some(64));

    let report = Report { manifest, body: ci };
    let json = to_json(&report).unwrap();
    let back: Report<WeakSweep> = serde_json::from_str(&json).unwrap();
    assert_eq!(back.body.sweep, report.body.sweep);
    let value: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert!(value["results"][1]["log_gamma"].as_f64().unwrap() > 0.0);
    assert_eq!(value["results"][1]["gamma"].as_f64(), Some(1.2));

    let csv = sweep_csv(&report.body.sweep);
    assert!(csv.starts_with("gamma,lower,upper,p_value\n"));
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn missing_file_and_bad_rows_are_typed_errors() {
    let err = MatchedDataset::load_csv("/nonexistent/data.csv", &ColumnMapping::default()).unwrap_err();
    assert!(matches!(err, Error::Io { .. }));

    let mut f = tempfile::NamedTempFile::new().unwrap();
    writeln!(f, "set_id,unit_id,dose,outcome\na,1,0.1,1\nb,1,0.2,1\nb,2,0.3,2").unwrap();
    f.flush().unwrap();
    let err = MatchedDataset::load_csv(f.path(), &ColumnMapping::default()).unwrap_err();
    assert!(matches!(err, Error::SingletonSet(_)));
}
