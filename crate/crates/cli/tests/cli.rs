use std::path::Path;
use std::process::Command;

use clap::CommandFactory;
use gwt_cli::args::Cli;

const SUBCOMMANDS: [&str; 7] =
    ["spectral-verify", "equiv-check", "grad-check", "train", "bench", "perturb-sweep", "init-ablation"];

fn gwt(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_gwt")).args(args).output().expect("run gwt")
}

fn code(args: &[&str]) -> i32 {
    gwt(args).status.code().expect("exit code")
}

fn golden(name: &str, actual: &str) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, actual).unwrap();
    }
    let expected = std::fs::read_to_string(&path).unwrap_or_else(|_| panic!("missing golden file {}", path.display()));
    assert_eq!(actual, expected, "help output of {name} changed; rerun with UPDATE_GOLDEN=1 if intended");
}

#[test]
fn help_output_matches_golden_files() {
    let top = gwt(&["--help"]);
    assert_eq!(top.status.code(), Some(0));
    golden("help.txt", &String::from_utf8(top.stdout).unwrap());
    for sub in SUBCOMMANDS {
        let out = gwt(&[sub, "--help"]);
        assert_eq!(out.status.code(), Some(0));
        golden(&format!("{sub}.txt"), &String::from_utf8(out.stdout).unwrap());
    }
}

#[test]
fn help_lists_every_flag() {
    let cmd = Cli::command();
    for sub in cmd.get_subcommands() {
        let help = String::from_utf8(gwt(&[sub.get_name(), "--help"]).stdout).unwrap();
        for arg in sub.get_arguments() {
            if let Some(long) = arg.get_long() {
                assert!(help.contains(&format!("--{long}")), "{} --help lacks --{long}", sub.get_name());
            }
        }
    }
}

#[test]
fn missing_out_dir_is_a_usage_error() {
    for sub in SUBCOMMANDS {
        assert_eq!(code(&[sub]), 2, "{sub}");
    }
    assert_eq!(code(&["no-such-command"]), 2);
    assert_eq!(code(&[]), 2);
}

#[test]
fn spectral_verify_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let run = gwt(&["spectral-verify", "--n-max", "16", "--out-dir", out]);
    assert_eq!(run.status.code(), Some(0));
    let stdout = String::from_utf8(run.stdout).unwrap();
    assert_eq!(stdout.lines().filter(|l| l.ends_with("PASS")).count(), 14);
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("spectral_report.json")).unwrap()).unwrap();
    let first = &report[0];
    for key in ["n", "spectrum_K", "spectrum_T", "sigma_pass", "sigma_tight"] {
        assert!(first.get(key).is_some(), "report lacks {key}");
    }

    assert_eq!(code(&["spectral-verify", "--n-max", "2", "--out-dir", out]), 0);
    // Exact tolerance cannot absorb floating-point round-off.
    let strict = gwt(&["spectral-verify", "--n-max", "8", "--tol", "0", "--out-dir", out]);
    assert_eq!(strict.status.code(), Some(1));
    assert!(String::from_utf8(strict.stderr).unwrap().contains("first at n ="));
    assert_eq!(code(&["spectral-verify", "--n-max", "x", "--out-dir", out]), 2);
}

#[test]
fn equiv_check_cases() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(code(&["equiv-check", "--n", "16", "--trials", "50", "--out-dir", out]), 0);
    assert_eq!(code(&["equiv-check", "--n", "2", "--out-dir", out]), 0);
    assert_eq!(code(&["equiv-check", "--trials", "0", "--out-dir", out]), 2);
    assert_eq!(code(&["equiv-check", "--tol", "0", "--out-dir", out]), 1);
}

#[test]
fn config_file_values_yield_to_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# spectral settings\nn_max = 5\ntol = 1e-9\n").unwrap();
    let out = dir.path().join("out");
    let args = ["spectral-verify", "--config", cfg.to_str().unwrap(), "--out-dir", out.to_str().unwrap()];
    assert_eq!(code(&args), 0);
    let echoed = std::fs::read_to_string(out.join("resolved_config.txt")).unwrap();
    assert_eq!(echoed, "n-max = 5\nseed = 0\ntol = 1e-9\n");

    let mut with_flag = args.to_vec();
    with_flag.extend(["--n-max", "4"]);
    assert_eq!(code(&with_flag), 0);
    assert!(std::fs::read_to_string(out.join("resolved_config.txt")).unwrap().starts_with("n-max = 4\n"));

    // The echo is itself a valid config.
    let replay = dir.path().join("replay");
    let echo_path = out.join("resolved_config.txt");
    assert_eq!(code(&["spectral-verify", "--config", echo_path.to_str().unwrap(), "--out-dir", replay.to_str().unwrap()]), 0);
    assert_eq!(std::fs::read(replay.join("spectral_report.json")).unwrap(), std::fs::read(out.join("spectral_report.json")).unwrap());

    std::fs::write(&cfg, "n-max = 5\nepochs = 3\n").unwrap();
    assert_eq!(code(&args), 2, "train-only key rejected for spectral-verify");
    std::fs::write(&cfg, "not a pair\n").unwrap();
    assert_eq!(code(&args), 2);
    assert_eq!(code(&["spectral-verify", "--config", "/nonexistent/cfg", "--out-dir", out.to_str().unwrap()]), 2);
}

#[test]
fn train_writes_curve_metrics_and_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t");
    let run = gwt(&["train", "--n", "8", "--t", "120", "--epochs", "3", "--out-dir", out.to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stderr));
    let curve = std::fs::read_to_string(out.join("curve.csv")).unwrap();
    let mut lines = curve.lines();
    assert_eq!(lines.next(), Some("epoch,train_loss,val_mae"));
    assert_eq!(lines.count(), 3);
    let metrics: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    assert!(metrics["test"]["mae"].as_f64().unwrap() > 0.0);
    let (ckpt, store) = gwt_core::models::load_checkpoint(&out.join("checkpoint.bin"), None).unwrap();
    assert_eq!(store.num_scalars() as u64, metrics["params"].as_u64().unwrap());
    assert!(!ckpt.config_hash.is_empty());
    assert!(out.join("synthetic_config.json").exists());

    let defaults = std::fs::read_to_string(out.join("resolved_config.txt")).unwrap();
    assert!(defaults.contains("epochs = 3\n") && defaults.contains("model = agcrn-lite\n") && defaults.contains("spatial = gwt\n"));
}

#[test]
fn default_epoch_budget_is_one_hundred() {
    use clap::Parser;
    let cli = Cli::try_parse_from(["gwt", "train", "--out-dir", "x"]).unwrap();
    match cli.command {
        gwt_cli::args::Command::Train(a) => {
            assert_eq!(a.exp.epochs, 100);
            assert_eq!((a.exp.t_in, a.exp.t_out), (12, 12));
        }
        _ => unreachable!(),
    }
}

#[test]
fn train_reads_csv_data() {
    let dir = tempfile::tempdir().unwrap();
    let fs = gwt_core::data::generate_synthetic(5, 80, 3, &Default::default()).unwrap();
    let csv = dir.path().join("series.csv");
    gwt_core::data::write_csv(&csv, &fs).unwrap();
    let out = dir.path().join("t");
    let args = ["train", "--data", csv.to_str().unwrap(), "--epochs", "1", "--t-in", "4", "--t-out", "4", "--out-dir", out.to_str().unwrap()];
    assert_eq!(code(&args), 0);
    assert!(!out.join("synthetic_config.json").exists());
    let missing = ["train", "--data", "/nonexistent.csv", "--out-dir", out.to_str().unwrap()];
    assert_eq!(code(&missing), 2);
    std::fs::write(&csv, "t,node_0\n0,1\n1,x\n").unwrap();
    let bad = gwt(&args);
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8(bad.stderr).unwrap().contains(":3:"));
}

#[test]
fn sweeps_validate_their_spatial_kind() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(code(&["perturb-sweep", "--spatial", "gwt", "--n", "8", "--t", "120", "--out-dir", out]), 2);
    assert_eq!(code(&["perturb-sweep", "--p-list", "0.7", "--n", "8", "--t", "120", "--out-dir", out]), 2);
    assert_eq!(code(&["perturb-sweep", "--seeds", "", "--out-dir", out]), 2);
}

#[test]
fn bench_reports_two_slopes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    assert_eq!(code(&["bench", "--kinds", "dense,gwt", "--ns", "64,128,256,512", "--d", "4", "--d-in", "4", "--d-out", "4", "--out-dir", out.to_str().unwrap()]), 0);
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("bench_summary.json")).unwrap()).unwrap();
    assert!(summary["slopes"]["dense"].is_f64() && summary["slopes"]["gwt"].is_f64());
    let csv = std::fs::read_to_string(out.join("bench.csv")).unwrap();
    assert!(csv.starts_with("kind,n,d,median_forward_s,median_backward_s,peak_floats\n"));
    assert_eq!(csv.lines().count(), 9);
    assert_eq!(code(&["bench", "--reps", "4", "--out-dir", out.to_str().unwrap()]), 2);
    assert_eq!(code(&["bench", "--ns", "32", "--out-dir", out.to_str().unwrap()]), 2);
}
