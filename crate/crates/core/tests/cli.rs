use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use chiralnet::config::RunConfig;

const BIN: &str = env!("CARGO_BIN_EXE_chiralnet");

fn chiralnet(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env_remove("THREADS").output().expect("binary runs")
}

fn config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn header_ok(line: &str) -> bool {
    let Some(rest) = line.strip_prefix(&format!("# chiralnet {} config_sha256=", env!("CARGO_PKG_VERSION"))) else {
        return false;
    };
    rest.len() == 64 && rest.chars().all(|c| c.is_ascii_hexdigit())
}

#[test]
fn shipped_configs_parse_and_round_trip() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let mut n = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let cfg = RunConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert_eq!(RunConfig::parse(&cfg.to_toml()).unwrap(), cfg);
        n += 1;
    }
    assert!(n >= 5);
}

#[test]
fn simulate_writes_trajectory_and_losses() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(
        tmp.path(),
        "t.toml",
        "command = \"simulate\"\n[grid]\ndt_ns = 0.1\nsample_stride = 20\n[protocol]\ndirection = \"left\"\nmode = \"full_transfer\"\ninitial_pi_fraction = 1.0\n",
    );
    let out = tmp.path().join("out");
    let o = chiralnet(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));

    let csv = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(header_ok(lines.next().unwrap()));
    let data: Vec<&str> = lines.filter(|l| !l.starts_with('#')).collect();
    let width = data[0].split(',').count();
    assert!(data[0].starts_with("t_ns"));
    assert_eq!(data.len(), 1 + 200 / 2 + 1);
    assert!(data.iter().all(|l| l.split(',').count() == width));

    let kv = fs::read_to_string(out.join("loss_breakdown.txt")).unwrap();
    assert!(header_ok(kv.lines().next().unwrap()));
    let total: f64 = kv.lines().skip(1).map(|l| l.split(" = ").nth(1).unwrap().parse::<f64>().unwrap()).sum();
    assert!(total > 0.0 && total < 1.0);
}

#[test]
fn scatter_grid_has_converged_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(
        tmp.path(),
        "s.toml",
        "command = \"scatter\"\n[sweep]\ndetuning_mhz = { start = -5.0, stop = 5.0, points = 3 }\npower_db = { start = -20.0, stop = 0.0, points = 2 }\n",
    );
    let out = tmp.path().join("out");
    let o = chiralnet(&["scatter", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--threads", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("s21.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert!(header_ok(lines[0]));
    assert_eq!(lines[1], "detuning_MHz,power_dB_rel,re_s21,im_s21,converged");
    assert_eq!(lines.len(), 2 + 6);
    assert!(lines[2..].iter().all(|l| l.ends_with(",true")));
}

#[test]
fn budget_and_delay_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let b = tmp.path().join("b");
    assert_eq!(chiralnet(&["budget", "--out", b.to_str().unwrap()]).status.code(), Some(0));
    let text = fs::read_to_string(b.join("budget.txt")).unwrap();
    assert!(header_ok(text.lines().next().unwrap()));
    assert!(text.contains("decoherence_loss = ") && text.contains("total = "));

    let d = tmp.path().join("d");
    assert_eq!(chiralnet(&["delay", "--out", d.to_str().unwrap()]).status.code(), Some(0));
    let text = fs::read_to_string(d.join("delay.txt")).unwrap();
    let tau: f64 = text.lines().find_map(|l| l.strip_prefix("delay_ns = ")).unwrap().parse().unwrap();
    assert!(tau > 30.0 && tau < 40.0);
}

#[test]
fn optimize_is_reproducible_across_thread_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(
        tmp.path(),
        "rl.toml",
        "command = \"optimize\"\nseed = 3\n[optimize]\nepochs = 3\nbatch_size = 4\nshots_per_trial = 40\n",
    );
    let mut curves = Vec::new();
    for (k, threads) in ["1", "3"].iter().enumerate() {
        let out = tmp.path().join(format!("run{k}"));
        let o = chiralnet(&["optimize", "--config", cfg.to_str().unwrap(), "--seed", "7", "--threads", threads, "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        curves.push(fs::read(out.join("learning_curve.ndjson")).unwrap());
        let best = fs::read_to_string(out.join("best_pulses.toml")).unwrap();
        assert!(header_ok(best.lines().next().unwrap()));
        assert_eq!(best.lines().filter(|l| l.contains("_seg")).count(), 64);
    }
    assert_eq!(curves[0], curves[1]);

    let text = String::from_utf8(curves.pop().unwrap()).unwrap();
    let records: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(records[0]["artifact"], "chiralnet");
    assert_eq!(records[0]["config_sha256"].as_str().unwrap().len(), 64);
    assert_eq!(records.len(), 4);
    for (k, r) in records[1..].iter().enumerate() {
        assert_eq!(r["epoch"], k);
        for key in ["mean_reward", "best_reward", "policy_std_norm"] {
            assert!(r[key].is_f64(), "{key}");
        }
    }
}

#[test]
fn seed_flag_changes_the_hash() {
    let tmp = tempfile::tempdir().unwrap();
    let heads: Vec<String> = ["1", "2"]
        .iter()
        .map(|s| {
            let out = tmp.path().join(s);
            assert_eq!(chiralnet(&["budget", "--seed", s, "--out", out.to_str().unwrap()]).status.code(), Some(0));
            fs::read_to_string(out.join("budget.txt")).unwrap().lines().next().unwrap().to_string()
        })
        .collect();
    assert_ne!(heads[0], heads[1]);
}

#[test]
fn config_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let out = out.to_str().unwrap();
    assert_eq!(chiralnet(&["simulate", "--config", "/nonexistent/x.toml", "--out", out]).status.code(), Some(2));

    let unknown = config(tmp.path(), "u.toml", "command = \"simulate\"\nwidget = 3\n");
    assert_eq!(chiralnet(&["simulate", "--config", unknown.to_str().unwrap(), "--out", out]).status.code(), Some(2));

    let other = config(tmp.path(), "o.toml", "command = \"budget\"\n");
    assert_eq!(chiralnet(&["simulate", "--config", other.to_str().unwrap(), "--out", out]).status.code(), Some(2));

    let no_sweep = config(tmp.path(), "n.toml", "command = \"scatter\"\n");
    assert_eq!(chiralnet(&["scatter", "--config", no_sweep.to_str().unwrap(), "--out", out]).status.code(), Some(2));

    assert_eq!(chiralnet(&["delay", "--threads", "0", "--out", out]).status.code(), Some(2));
    assert_eq!(chiralnet(&["teleport"]).status.code(), Some(2));
}

#[test]
fn threads_env_is_read() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = Command::new(BIN).args(["delay", "--out", out.to_str().unwrap()]).env("THREADS", "lots").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let o = Command::new(BIN).args(["delay", "--out", out.to_str().unwrap()]).env("THREADS", "2").output().unwrap();
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn blown_up_integration_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(
        tmp.path(),
        "b.toml",
        "command = \"simulate\"\n[grid]\ndt_ns = 60.0\nsample_stride = 1\nt_end_ns = 30000.0\n",
    );
    let o = chiralnet(&["simulate", "--config", cfg.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("non-finite"));
}
