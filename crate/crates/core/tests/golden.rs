//! Byte comparisons against checked-in files. Set `UPDATE_GOLDEN=1` to
//! rewrite them after an intentional change.

use std::fs;
use std::path::PathBuf;

use seutest::data_io::{write_choices_csv, write_design_csv, DesignTable};
use seutest::simulate::{gen_uniform_subject, simulate_gbm_path, subject_rng, GbmParams};

fn check(name: &str, actual: &[u8]) {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        fs::write(&path, actual).unwrap();
        return;
    }
    let expected = fs::read(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert!(expected == actual, "{name} differs from the golden copy");
}

#[test]
fn builtin_designs() {
    for (name, design) in [
        ("design_lab.csv", DesignTable::lab()),
        ("design_panel.csv", DesignTable::panel()),
    ] {
        let mut buf = Vec::new();
        write_design_csv(&design, &mut buf).unwrap();
        check(name, &buf);
    }
}

#[test]
fn seeded_uniform_subjects() {
    let design = DesignTable::lab();
    let subjects: Vec<_> = (0..5)
        .map(|i| gen_uniform_subject(&design, format!("u{i}"), &mut subject_rng(42, i)))
        .collect();
    let mut buf = Vec::new();
    write_choices_csv(&subjects, &mut buf).unwrap();
    check("uniform_seed42.csv", &buf);
}

#[test]
fn seeded_gbm_path() {
    let params = GbmParams {
        s0: 100.0,
        mu: 0.08,
        sigma: 0.3,
        h: 1.0 / 252.0,
        n_steps: 20,
        threshold: 0.1,
    };
    let path = simulate_gbm_path(&params, &mut subject_rng(7, 0));
    let text: String = path.iter().map(|v| format!("{v:?}\n")).collect();
    check("gbm_seed7.txt", text.as_bytes());
}
