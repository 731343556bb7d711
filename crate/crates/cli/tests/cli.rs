use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_seutest"))
}

fn sample() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/panel_sample.csv")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn seutest")
}

fn analyze_json(input: &Path, design: &str, extra: &[&str]) -> Value {
    let mut args = vec![
        "analyze",
        "--input",
        input.to_str().unwrap(),
        "--design",
        design,
    ];
    args.extend_from_slice(extra);
    let out = run(&args);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap()
}

fn subject<'a>(report: &'a Value, id: &str) -> &'a Value {
    report["subjects"]
        .as_array()
        .unwrap()
        .iter()
        .find(|s| s["subject_id"] == id)
        .unwrap_or_else(|| panic!("no subject {id}"))
}

#[test]
fn sample_panel_subjects_behave_as_expected() {
    let r = analyze_json(&sample(), "builtin:panel", &[]);
    let eu = subject(&r, "eu_averse");
    assert_eq!(eu["seu"]["joint"], "pass");
    assert_eq!(eu["meu"]["joint"], "pass");
    assert_eq!(eu["estar_seu"]["joint"], 0.0);
    assert_eq!(eu["dsd"]["rho_dsd"], -1.0);

    let chaser = subject(&r, "trend_chaser");
    assert!(chaser["dsd"]["rho_dsd"].as_f64().unwrap() > 0.5);
    assert_eq!(chaser["seu"]["joint"], "fail");
    assert!(chaser["estar_seu"]["joint"].as_f64().unwrap() > 0.0);

    // Equal tokens still buy more of the account with the larger exchange value.
    let half = subject(&r, "half_half");
    assert_eq!(half["dsd"]["rho_dsd"], -1.0);

    let noisy = subject(&r, "noisy");
    let rho = noisy["dsd"]["rho_dsd"].as_f64().unwrap();
    assert!((-1.0..0.0).contains(&rho));
    assert_eq!(r["aggregate"]["subjects"], 4);
}

#[test]
fn lab_and_panel_scales_give_the_same_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let lab = dir.path().join("lab.csv");
    let text = fs::read_to_string(sample()).unwrap();
    let mut lines = text.lines();
    let mut out = format!("{}\n", lines.next().unwrap());
    for line in lines {
        let mut f: Vec<String> = line.split(',').map(str::to_string).collect();
        for i in [4, 5] {
            f[i] = format!("{:.2}", f[i].parse::<f64>().unwrap() / 10.0);
        }
        out.push_str(&f.join(","));
        out.push('\n');
    }
    fs::write(&lab, out).unwrap();

    let a = analyze_json(&sample(), "builtin:panel", &[]);
    let b = analyze_json(&lab, "builtin:lab", &[]);
    for (x, y) in a["subjects"]
        .as_array()
        .unwrap()
        .iter()
        .zip(b["subjects"].as_array().unwrap())
    {
        for key in ["garp", "ccei", "ps", "seu", "meu", "dsd"] {
            assert_eq!(x[key], y[key], "{key} for {}", x["subject_id"]);
        }
        for key in ["estar_seu", "estar_meu"] {
            for col in ["type1", "type2", "joint"] {
                let (p, q) = (x[key][col].as_f64().unwrap(), y[key][col].as_f64().unwrap());
                assert!((p - q).abs() < 1e-9, "{key}.{col}: {p} vs {q}");
            }
        }
    }
}

#[test]
fn test_selection_omits_unrequested_fields() {
    let r = analyze_json(&sample(), "builtin:panel", &["--tests", "garp"]);
    let s = subject(&r, "eu_averse");
    assert!(s.get("garp").is_some());
    for key in ["seu", "meu", "estar_seu", "estar_meu", "ccei", "dsd"] {
        assert!(s.get(key).is_none(), "{key} present");
    }
}

#[test]
fn csv_output_has_one_row_per_subject() {
    let out = run(&[
        "analyze",
        "--input",
        sample().to_str().unwrap(),
        "--design",
        "builtin:panel",
        "--format",
        "csv",
    ]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 5);
    assert!(text.lines().next().unwrap().starts_with("subject_id"));
}

#[test]
fn outputs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let run_power = |name: &str, extra: &[&str]| {
        let d = dir.path().join(name);
        let mut args = vec![
            "power",
            "--n",
            "150",
            "--seed",
            "9",
            "--out",
            d.to_str().unwrap(),
        ];
        args.extend_from_slice(extra);
        assert!(run(&args).status.success());
        d
    };
    let a = run_power("a", &[]);
    let b = run_power("b", &[]);
    let c = run_power("c", &["--sequential"]);
    for f in ["power.json", "pass_rates.csv", "distances.csv"] {
        let x = fs::read(a.join(f)).unwrap();
        assert_eq!(x, fs::read(b.join(f)).unwrap(), "{f} differs across runs");
        assert_eq!(
            x,
            fs::read(c.join(f)).unwrap(),
            "{f} differs sequential vs parallel"
        );
    }

    let input = sample();
    let args = [
        "analyze",
        "--input",
        input.to_str().unwrap(),
        "--design",
        "builtin:panel",
    ];
    assert_eq!(run(&args).stdout, run(&args).stdout);
}

#[test]
fn invalid_requests_exit_with_validation_status() {
    assert_eq!(run(&["power", "--n", "0"]).status.code(), Some(2));
    assert_eq!(
        run(&["power", "--dgp", "bootstrap", "--n", "5"])
            .status
            .code(),
        Some(2)
    );

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    fs::write(
        &bad,
        "subject_id,task,question_id,type,z1,z2,a1,a2\ns1,stock,1,1,0.30,0.18,60,50\n",
    )
    .unwrap();
    let out = run(&[
        "analyze",
        "--input",
        bad.to_str().unwrap(),
        "--allow-partial",
    ]);
    assert_eq!(out.status.code(), Some(2));

    let missing = dir.path().join("missing.csv");
    assert_eq!(
        run(&["analyze", "--input", missing.to_str().unwrap()])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn partial_subjects_need_an_explicit_flag() {
    let dir = tempfile::tempdir().unwrap();
    let part = dir.path().join("part.csv");
    let text = fs::read_to_string(sample()).unwrap();
    fs::write(
        &part,
        text.lines().take(6).collect::<Vec<_>>().join("\n") + "\n",
    )
    .unwrap();
    assert_eq!(
        run(&[
            "analyze",
            "--input",
            part.to_str().unwrap(),
            "--design",
            "builtin:panel"
        ])
        .status
        .code(),
        Some(2)
    );
    let r = analyze_json(&part, "builtin:panel", &["--allow-partial"]);
    assert_eq!(subject(&r, "eu_averse")["observations"], 5);
}

#[test]
fn deterministic_gbm_path_is_exact() {
    let out = run(&[
        "gbm", "--s0", "100", "--mu", "0.5", "--sigma", "0", "--h", "1", "--steps", "2",
    ]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[2], "omega1");
    let last: f64 = row.last().unwrap().parse().unwrap();
    assert!((last - 100.0 * 1f64.exp()).abs() / last < 1e-12);
}

#[test]
fn dump_lp_writes_both_systems() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().join("lp");
    let out = run(&[
        "analyze",
        "--input",
        sample().to_str().unwrap(),
        "--design",
        "builtin:panel",
        "--tests",
        "garp",
        "--dump-lp",
        d.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let seu = fs::read_to_string(d.join("eu_averse_stock_seu.lp")).unwrap();
    assert!(seu.contains("Subject To") && seu.trim_end().ends_with("End"));
    assert!(d.join("noisy_stock_meu.lp").exists());
}
