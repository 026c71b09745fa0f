use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use robustica::format::{read_file, AnyBlock, Format};

fn robustica(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_robustica"))
        .args(args)
        .output()
        .expect("spawn robustica")
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn average_smse(stdout: &[u8]) -> f64 {
    let text = String::from_utf8_lossy(stdout);
    let line = text
        .lines()
        .find_map(|l| l.strip_prefix("average SMSE: "))
        .unwrap_or_else(|| panic!("no average in {text:?}"));
    line.trim_end_matches(" dB").parse().unwrap()
}

#[test]
fn extract_recovers_generated_sources() {
    let dir = tempfile::tempdir().unwrap();
    for ext in ["csv", "bin"] {
        let obs = dir.path().join(format!("obs.{ext}"));
        let src = dir.path().join(format!("src.{ext}"));
        let est = dir.path().join(format!("est.{ext}"));
        let out = robustica(&[
            "generate",
            "--source",
            "uniform",
            "--mixing",
            "givens",
            "--sources",
            "2",
            "--samples",
            "1000",
            "--seed",
            "5",
            "-o",
            arg(&obs),
            "--sources-out",
            arg(&src),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

        let out = robustica(&["extract", arg(&obs), "-o", arg(&est)]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let estimates = read_file(&est, Format::from_path(&est)).unwrap();
        assert_eq!((estimates.channels(), estimates.samples()), (2, 1000));

        let log = fs::read_to_string(format!("{}.log", est.display())).unwrap();
        assert!(log.starts_with("algorithm=robustica sources=2"), "{log}");
        let report = fs::read_to_string(format!("{}.report.csv", est.display())).unwrap();
        assert!(report.starts_with("source,iteration,mu,kurtosis,flops\n"));

        let out = robustica(&["smse", arg(&src), arg(&est)]);
        assert!(out.status.success());
        let db = average_smse(&out.stdout);
        assert!(db <= -17.5, "{ext}: {db} dB");
    }
}

#[test]
fn baselines_and_options_run_from_the_command_line() {
    let dir = tempfile::tempdir().unwrap();
    let obs = dir.path().join("obs.bin");
    let out = robustica(&[
        "generate",
        "--regime",
        "complex",
        "--source",
        "bpsk",
        "--mixing",
        "unitary",
        "--sources",
        "3",
        "--samples",
        "500",
        "--seed",
        "2",
        "-o",
        arg(&obs),
    ]);
    assert!(out.status.success());
    for algorithm in ["robustica", "fastica", "nc-fastica", "kmf"] {
        let est = dir.path().join(format!("{algorithm}.csv"));
        let deflation = if algorithm == "robustica" {
            "regression"
        } else {
            "ortho"
        };
        let out = robustica(&[
            "extract",
            arg(&obs),
            "-o",
            arg(&est),
            "--algorithm",
            algorithm,
            "--prewhiten",
            "on",
            "--deflation",
            deflation,
            "--max-iters",
            "50",
            "--eta",
            "1e-8",
            "--seed",
            "9",
            "--format",
            "bin",
        ]);
        assert!(
            out.status.success(),
            "{algorithm}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        // --format wins over the extension
        assert!(matches!(read_file(&est, Format::Bin).unwrap(), AnyBlock::Complex(_)));
    }
    // the baselines only deflate by orthogonalization
    let est = dir.path().join("e.csv");
    let out = robustica(&[
        "extract",
        arg(&obs),
        "-o",
        arg(&est),
        "--algorithm",
        "fastica",
        "--deflation",
        "regression",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sign_schedule_targets_each_extraction() {
    let dir = tempfile::tempdir().unwrap();
    let obs = dir.path().join("obs.csv");
    let est = dir.path().join("est.csv");
    assert!(robustica(&[
        "generate",
        "--sources",
        "2",
        "--samples",
        "2000",
        "--seed",
        "1",
        "-o",
        arg(&obs)
    ])
    .status
    .success());
    // uniform sources have negative kurtosis; a positive target cannot be met
    let out = robustica(&["extract", arg(&obs), "-o", arg(&est), "--sign-schedule", "-,+"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let log = fs::read_to_string(format!("{}.log", est.display())).unwrap();
    let sources: Vec<&str> = log.lines().filter(|l| l.starts_with("source=")).collect();
    assert_eq!(sources.len(), 2);
    assert!(!sources[0].contains("sign_mismatch"), "{log}");
    assert!(sources[1].contains("sign_mismatch"), "{log}");

    let out = robustica(&["extract", arg(&obs), "-o", arg(&est), "--sign-schedule", "+,maybe"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn usage_and_config_errors_exit_with_2() {
    assert_eq!(robustica(&["extract", "--bogus"]).status.code(), Some(2));
    assert_eq!(robustica(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(robustica(&["run", "no_such_config"]).status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("empty.cfg");
    fs::write(
        &cfg,
        "source = uniform\nmixing = givens\nsources = 2\nsamples = 50\ntrials = 0\nmethods = robustica\n",
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = robustica(&["run", arg(&cfg), "-o", arg(&out_dir)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 5"));
    assert!(!out_dir.exists());

    let out = robustica(&["run", "table2_T50", "-o", arg(&out_dir), "--trials", "0"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out_dir.exists());
}

#[test]
fn runtime_errors_exit_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.csv");
    let out = robustica(&["extract", arg(&missing), "-o", arg(&dir.path().join("e.csv"))]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.csv"));
}

#[test]
fn reruns_are_byte_identical_across_job_counts() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for (out, jobs) in [(&a, "1"), (&b, "3")] {
        let o = robustica(&[
            "run",
            "fig3_K5",
            "-o",
            arg(out),
            "--trials",
            "20",
            "--jobs",
            jobs,
            "--no-timestamp",
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for name in ["fig3_K5_trials.csv", "fig3_K5_aggregate.csv", "fig3_K5_plot.csv"] {
        let (x, y) = (fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap());
        assert!(!x.is_empty());
        assert_eq!(x, y, "{name}");
    }
    let aggregate = fs::read_to_string(a.join("fig3_K5_aggregate.csv")).unwrap();
    assert!(aggregate.starts_with("method,SMSE_dB,iter_mean,iter_std,kflops_mean,kflops_std,fail_count,"));

    let o = robustica(&["run", "table2_T50", "-o", arg(&a), "--trials", "5"]);
    assert!(o.status.success());
    let stamped = fs::read_to_string(a.join("table2_T50_aggregate.csv")).unwrap();
    assert!(stamped.starts_with('#'));
}
