use std::io::Write;
use std::path::Path;

use vre_market::error::Error;
use vre_market::ingest::{
    build_empirical_model, load_records, load_records_with, ColumnMapping, ParseMode,
};
use vre_market::PlottingPosition;

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    std::fs::File::create(&path)
        .unwrap()
        .write_all(text.as_bytes())
        .unwrap();
    path
}

const THREE_ROWS: &str = "year,month,day,hour,output_mwh\n\
2019,7,1,16,1.0\n\
2019,7,2,16,3.0\n\
2019,7,3,16,2.0\n";

#[test]
fn three_row_fixture_gives_the_median() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "three.csv", THREE_ROWS);
    let records = load_records(&path).unwrap();
    assert_eq!(records.len(), 3);
    assert_eq!(records[1].output, 3.0);
    let model = build_empirical_model(&records, 7, 16, 1.0, PlottingPosition::Weibull).unwrap();
    assert_eq!(model.quantile(0.5).unwrap(), 2.0);
}

#[test]
fn negative_output_reports_its_line() {
    let dir = tempfile::tempdir().unwrap();
    let text = "year,month,day,hour,output_mwh\n2019,7,1,16,1.0\n2019,7,2,16,-0.5\n";
    let path = write(dir.path(), "neg.csv", text);
    match load_records(&path) {
        Err(Error::MalformedRecord { line, message, .. }) => {
            assert_eq!(line, 3);
            assert!(message.contains("-0.5"), "{message}");
        }
        other => panic!("expected a malformed record, got {other:?}"),
    }
}

#[test]
fn lenient_mode_skips_bad_rows() {
    let dir = tempfile::tempdir().unwrap();
    let text = "year,month,day,hour,output_mwh\n\
2019,7,1,16,1.0\n\
2019,2,30,16,1.0\n\
2019,7,2,16,abc\n\
2019,7,3,16,2.0\n";
    let path = write(dir.path(), "mixed.csv", text);
    let loaded = load_records_with(&path, &ColumnMapping::default(), ParseMode::Lenient).unwrap();
    assert_eq!(loaded.records.len(), 2);
    let lines: Vec<u64> = loaded.skipped.iter().map(|(l, _)| *l).collect();
    assert_eq!(lines, [3, 4]);
}

#[test]
fn empty_file_loads_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "empty.csv", "");
    assert!(load_records(&path).unwrap().is_empty());
}

#[test]
fn header_only_then_filter_is_insufficient() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "header.csv", "year,month,day,hour,output_mwh\n");
    let records = load_records(&path).unwrap();
    assert!(records.is_empty());
    assert!(matches!(
        build_empirical_model(&records, 7, 16, 1.0, PlottingPosition::Weibull),
        Err(Error::InsufficientData { found: 0, .. })
    ));
}

#[test]
fn custom_column_names() {
    let dir = tempfile::tempdir().unwrap();
    let text = "hr,yr,mo,dy,mwh\n16,2019,7,1,0.4\n16,2019,7,2,0.8\n";
    let path = write(dir.path(), "renamed.csv", text);
    let mapping = ColumnMapping {
        year: "yr".into(),
        month: "mo".into(),
        day: "dy".into(),
        hour: "hr".into(),
        output: "mwh".into(),
    };
    let loaded = load_records_with(&path, &mapping, ParseMode::Strict).unwrap();
    assert_eq!(loaded.records.len(), 2);
    assert_eq!(loaded.records[0].hour, 16);
    assert_eq!(loaded.records[1].output, 0.8);

    match load_records(&path) {
        Err(Error::MalformedRecord {
            line: 1, message, ..
        }) => assert!(message.contains("year")),
        other => panic!("expected a missing column error, got {other:?}"),
    }
}

#[test]
fn bundled_fixture_loads_strictly() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/solar_fixture.csv");
    let records = load_records(&path).unwrap();
    assert!(records.len() > 1000);
    let model = build_empirical_model(&records, 7, 16, 1.0, PlottingPosition::Weibull).unwrap();
    assert!(model.support_hi() > 0.0);
}
