use std::io::Write;
use std::process::Command;

use ranvar::models::{beta_bernoulli, logistic_regression};
use ranvar_cli::{
    bench_nuts, load_csv, run_demo, synth_data, synth_data_with, BenchConfig, CliError, CsvOptions, LabelRule,
    Mode,
};

fn csv_file(text: &str) -> tempfile::NamedTempFile {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    f.write_all(text.as_bytes()).unwrap();
    f
}

fn raw() -> CsvOptions {
    CsvOptions { standardize: false, ..CsvOptions::default() }
}

#[test]
fn small_files_parse_exactly() {
    let f = csv_file("1.5,2,1\n-3,4.25,0\n0,0,1\n");
    let d = load_csv(f.path(), &raw()).unwrap();
    assert_eq!((d.n(), d.d()), (3, 2));
    assert_eq!(d.features.as_slice(), &[1.5, 2.0, -3.0, 4.25, 0.0, 0.0]);
    assert_eq!(d.labels, vec![1.0, 0.0, 1.0]);
}

#[test]
fn headers_label_columns_and_rules() {
    let f = csv_file("class,a,b\n2,1,5\n1,2,6\n2,3,7\n7,4,8\n");
    let opts = CsvOptions {
        label_column: Some(0),
        rule: "eq:2".parse().unwrap(),
        has_header: true,
        standardize: false,
    };
    let d = load_csv(f.path(), &opts).unwrap();
    assert_eq!(d.labels, vec![1.0, 0.0, 1.0, 0.0]);
    assert_eq!(d.features.row(3), &[4.0, 8.0]);
    assert_eq!("gt:0.5".parse::<LabelRule>().unwrap(), LabelRule::Gt(0.5));
    assert!("lt:1".parse::<LabelRule>().is_err());
    assert!("eq:x".parse::<LabelRule>().is_err());
}

#[test]
fn malformed_cells_name_their_position() {
    let f = csv_file("1,2,1\n3,oops,0\n");
    match load_csv(f.path(), &raw()) {
        Err(CliError::Data(msg)) => {
            assert!(msg.contains("line 2") && msg.contains("column 1") && msg.contains("oops"), "{msg}");
        }
        other => panic!("{other:?}"),
    }
    let f = csv_file("1,2,1\n3,0\n");
    assert!(matches!(load_csv(f.path(), &raw()), Err(CliError::Data(_))));
    let f = csv_file("1,2,3\n");
    assert!(matches!(load_csv(f.path(), &raw()), Err(CliError::Data(_))));
}

#[test]
fn standardization_skips_constant_columns() {
    let f = csv_file("1,9,0\n2,9,1\n3,9,1\n");
    let d = load_csv(f.path(), &CsvOptions::default()).unwrap();
    assert_eq!(d.constant_columns, vec![1]);
    let col0: Vec<f64> = (0..3).map(|i| d.features.row(i)[0]).collect();
    assert!(col0.iter().sum::<f64>().abs() < 1e-12);
}

#[test]
fn covertype_shaped_rows_give_54_features() {
    let mut text = String::new();
    for r in 0..20 {
        let row: Vec<String> = (0..54).map(|c| format!("{}", (r * 7 + c * 3) % 11)).collect();
        text.push_str(&format!("{},{}\n", row.join(","), 1 + r % 7));
    }
    let opts = CsvOptions { rule: LabelRule::Eq(2.0), ..CsvOptions::default() };
    let d = load_csv(csv_file(&text).path(), &opts).unwrap();
    assert_eq!(d.d(), 54);
    assert_eq!(d.labels.iter().sum::<f64>(), 3.0);
}

#[test]
fn synthetic_data_is_seeded() {
    let a = synth_data(2000, 54, 3).unwrap();
    let b = synth_data(2000, 54, 3).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.labels, synth_data(2000, 54, 4).unwrap().labels);
    assert!(synth_data(0, 3, 0).is_err());
}

#[test]
fn label_frequencies_stay_balanced() {
    for seed in 0..20 {
        let d = synth_data(2000, 54, seed).unwrap();
        let f = d.labels.iter().sum::<f64>() / 2000.0;
        assert!(f > 0.2 && f < 0.8, "seed {seed}: {f}");
    }
    // w* = 0: fair coins; 0.03 is about 2.7 binomial standard deviations.
    let d = synth_data_with(2000, &[0.0], 0.0, 1).unwrap();
    let f = d.labels.iter().sum::<f64>() / 2000.0;
    assert!((f - 0.5).abs() < 0.03, "{f}");
}

fn small_cfg(mode: Mode) -> BenchConfig {
    BenchConfig { mode, warmup: 30, trajectories: 5, samples: 8, ..BenchConfig::default() }
}

#[test]
fn benchmark_accounting() {
    let data = synth_data(200, 5, 0).unwrap();
    let build = || logistic_regression(data.features.clone(), &data.labels);
    let r = bench_nuts(build, &small_cfg(Mode::Both)).unwrap();
    assert_eq!((r.n, r.d), (200, 6));
    assert_eq!(r.chains_identical, Some(true));
    let counts = &r.per_chain[0].leapfrog_counts;
    assert_eq!(counts.len(), 5);
    assert_eq!(r.total_leapfrog_steps, counts.iter().sum::<usize>());
    assert!(r.time_per_leapfrog_ms > 0.0);
    assert!(r.overhead_ratio.unwrap() > 0.0);
    let json: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
    assert_eq!(json["num_trajectories"], 5);

    let t = bench_nuts(build, &small_cfg(Mode::Traced)).unwrap();
    let h = bench_nuts(build, &small_cfg(Mode::Handwritten)).unwrap();
    assert_eq!(t.posterior_mean, h.posterior_mean);
    assert_eq!(t.per_chain[0].leapfrog_counts, h.per_chain[0].leapfrog_counts);
    assert!(t.overhead_ratio.is_none() && t.chains_identical.is_none());
}

#[test]
fn reports_differ_only_in_timing() {
    let strip = |mut v: serde_json::Value| {
        for key in ["time_per_leapfrog_ms", "handwritten_time_per_leapfrog_ms", "overhead_ratio", "timestamp_unix"] {
            v.as_object_mut().unwrap().remove(key);
        }
        for c in v["per_chain"].as_array_mut().unwrap() {
            c.as_object_mut().unwrap().remove("time_per_leapfrog_ms");
            c.as_object_mut().unwrap().remove("handwritten_time_per_leapfrog_ms");
        }
        v
    };
    let cfg = BenchConfig { chains: 3, ..small_cfg(Mode::Both) };
    let run = || {
        let r = bench_nuts(|| Ok(beta_bernoulli()), &cfg).unwrap();
        strip(serde_json::from_str(&r.to_json()).unwrap())
    };
    let a = run();
    assert_eq!(a, run());
    let seeds: Vec<u64> = a["per_chain"].as_array().unwrap().iter().map(|c| c["seed"].as_u64().unwrap()).collect();
    assert_eq!(seeds, vec![0, 1, 2]);
}

#[test]
fn bad_benchmark_settings() {
    let cfg = BenchConfig { trajectories: 0, ..small_cfg(Mode::Both) };
    assert!(matches!(bench_nuts(|| Ok(beta_bernoulli()), &cfg), Err(CliError::Usage(_))));
    let cfg = BenchConfig { samples: 2, ..small_cfg(Mode::Both) };
    assert!(matches!(bench_nuts(|| Ok(beta_bernoulli()), &cfg), Err(CliError::Usage(_))));
}

#[test]
fn demos() {
    let v = run_demo("beta_bernoulli", 0).unwrap();
    let x = v["x"].as_array().unwrap();
    assert_eq!(x.len(), 50);
    assert!(x.iter().all(|b| b == 0.0 || b == 1.0));

    let v = run_demo("intervene", 0).unwrap();
    assert!((v["downstream_mean"].as_f64().unwrap() - 10.0).abs() < 0.05);

    let v = run_demo("vi", 0).unwrap();
    assert!((v["q_loc"].as_f64().unwrap() - 0.5).abs() < 0.05);

    match run_demo("nope", 0) {
        Err(CliError::Usage(msg)) => assert!(msg.contains("mcmc_within_vi")),
        other => panic!("{other:?}"),
    }
}

fn ranvar() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ranvar"))
}

#[test]
fn binary_exit_codes() {
    let out = ranvar()
        .args(["--model", "conjugate-normal", "--warmup", "20", "--seed", "1"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(json["model"], "conjugatenormal");
    assert_eq!(json["chains_identical"], true);

    let bad = csv_file("1,x,0\n");
    let out = ranvar().arg("--data").arg(bad.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("column 1"));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("demo.json");
    let out = ranvar().args(["--demo", "beta_bernoulli", "--output"]).arg(&path).output().unwrap();
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    assert_eq!(v["x"].as_array().unwrap().len(), 50);

    let out = ranvar().args(["--demo", "nope"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_errors_exit_with_two() {
    let out = ranvar()
        .args(["--model", "beta-bernoulli", "--max-tree-depth", "0"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sampler_failures_map_to_three() {
    let e: CliError = ranvar::Error::Adaptation("all warmup iterations diverged".into()).into();
    assert_eq!(e.exit_code(), 3);
    let e: CliError = ranvar::Error::Initialization(f64::NEG_INFINITY).into();
    assert_eq!(e.exit_code(), 3);
    let e: CliError = ranvar::Error::Data("bad".into()).into();
    assert_eq!(e.exit_code(), 2);
}
