use std::path::Path;
use std::process::{Command, Output};

fn sdcnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sdcnet"))
        .args(args)
        .env_remove("SDCNET_CIFAR10_DIR")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn epoch_lines(out: &Output) -> Vec<String> {
    stdout(out).lines().skip(1).map(str::to_string).collect()
}

#[test]
fn describe_g4_l() {
    let out = sdcnet(&["describe", "--preset", "g4-l"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("17 blocks in 7 stages"));
    assert!(text.trim_end().ends_with("FC 600→10"));
    assert!(stderr(&out).contains("describe config:"));
}

#[test]
fn describe_tiny_and_side_by_side() {
    let out = sdcnet(&["describe", "--preset", "tiny"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("Tiny"));
    let out = sdcnet(&["describe", "--preset", "g4-l", "--preset", "g3-s"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("FC 600→10") && text.contains("FC 300→10"));
}

#[test]
fn describe_bogus_preset_is_usage_error() {
    let out = sdcnet(&["describe", "--preset", "bogus"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("unknown preset"));
}

#[test]
fn unknown_flag_rejected() {
    let out = sdcnet(&["count", "--preset", "g4-l", "--frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
}

fn percent(line: &str, unit: &str) -> f64 {
    let at = line.find(unit).unwrap() + unit.len();
    let rest = &line[at..];
    let open = rest.find('(').unwrap();
    let close = rest.find('%').unwrap();
    rest[open + 1..close].parse().unwrap()
}

#[test]
fn count_g4_l_matches_targets() {
    let out = sdcnet(&["count", "--preset", "g4-l"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let target = text.lines().find(|l| l.starts_with("target:")).unwrap();
    assert!(target.contains("103.3M FLOPs") && target.contains("2.53M params"));
    assert!(percent(target, "FLOPs ").abs() <= 3.0);
    assert!(percent(target, "params ").abs() <= 3.0);
}

#[test]
fn count_g3_s_f() {
    let out = sdcnet(&["count", "--preset", "g3-s-f"]);
    let text = stdout(&out);
    let total = text.lines().find(|l| l.starts_with("SdcNet-G3-S-F:")).unwrap();
    let flops: f64 = total.split_whitespace().nth(1).unwrap().trim_end_matches('M').parse().unwrap();
    assert!((flops / 56.55 - 1.0).abs() <= 0.03, "{total}");
}

#[test]
fn count_csv() {
    let out = sdcnet(&["count", "--preset", "g3-s", "--format", "csv"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("layer,out_shape,flops,params"));
    for line in lines {
        assert_eq!(line.split(',').count(), 4, "{line}");
    }
    let total = text.lines().find(|l| l.starts_with("total,")).unwrap();
    let flops: u64 = total.split(',').nth(2).unwrap().parse().unwrap();
    let params: u64 = total.split(',').nth(3).unwrap().parse().unwrap();
    assert!(flops > 50_000_000 && params > 1_000_000);
}

#[test]
fn train_without_data_is_data_error() {
    let out = sdcnet(&["train", "--preset", "tiny", "--epochs", "1"]);
    assert_eq!(out.status.code(), Some(3));
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nowhere");
    let out = sdcnet(&["train", "--preset", "tiny", "--epochs", "1", "--data-dir", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("nowhere"));
}

#[test]
fn truncated_batch_file_is_data_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("data_batch_1.bin"), vec![0u8; 3073 * 2 + 5]).unwrap();
    let out = train_args(&["--data-dir", dir.path().to_str().unwrap(), "--epochs", "1"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("data_batch_1.bin"), "{}", stderr(&out));
}

fn train_args(extra: &[&str]) -> Output {
    let mut args = vec!["train", "--preset", "tiny", "--batch-size", "16", "--seed", "7"];
    args.extend_from_slice(extra);
    sdcnet(&args)
}

#[test]
fn train_eval_resume() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("run.ckpt");
    let ckpt = ckpt.to_str().unwrap();
    let data = ["--synthetic", "48", "--data-seed", "3"];

    let full = train_args(&[&data[..], &["--epochs", "3", "--checkpoint", ckpt]].concat());
    assert!(full.status.success(), "{}", stderr(&full));
    assert!(stderr(&full).contains("\"seed\":7"));
    assert_eq!(stdout(&full).lines().next(), Some("epoch, lr, train_loss, train_acc"));
    let lines = epoch_lines(&full);
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("0, 0.100000, "));
    assert!(Path::new(ckpt).exists());

    let again = train_args(&[&data[..], &["--epochs", "3"]].concat());
    assert_eq!(epoch_lines(&again), lines);

    let eval = |path: &str| sdcnet(&["eval", "--checkpoint", path, "--synthetic", "48", "--data-seed", "3"]);
    let a = eval(ckpt);
    assert!(a.status.success(), "{}", stderr(&a));
    assert_eq!(stdout(&a).lines().count(), 1);
    assert!(stdout(&a).starts_with("accuracy "));
    assert_eq!(stdout(&eval(ckpt)), stdout(&a));

    // stop a run after one epoch through the library, then finish it from the CLI
    let one = dir.path().join("one.ckpt");
    let config = sdcnet::train::Checkpoint::load(Path::new(ckpt)).unwrap().meta.train.unwrap();
    let mut t = sdcnet::train::Trainer::new(config).unwrap();
    let format = sdcnet::data::CifarFormat::Cifar10;
    let records = sdcnet::data::synthetic_records(48, format, 3);
    let ds = sdcnet::data::Dataset::from_records(sdcnet::data::Split::Train, format, records, None).unwrap();
    t.run_epoch(&ds).unwrap();
    sdcnet::train::checkpoint_save(&t, &one).unwrap();
    let resumed = sdcnet(&["train", "--resume", one.to_str().unwrap(), "--synthetic", "48", "--data-seed", "3"]);
    assert!(resumed.status.success(), "{}", stderr(&resumed));
    assert_eq!(epoch_lines(&resumed), lines[1..].to_vec());
}

#[test]
fn unreadable_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.ckpt");
    std::fs::write(&bad, b"not a checkpoint").unwrap();
    let out = sdcnet(&["eval", "--checkpoint", bad.to_str().unwrap(), "--synthetic", "8"]);
    assert_eq!(out.status.code(), Some(6), "{}", stderr(&out));
    let out = sdcnet(&["eval", "--checkpoint", dir.path().join("none.ckpt").to_str().unwrap(), "--synthetic", "8"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn divergence_exit_code() {
    let out = train_args(&["--synthetic", "32", "--epochs", "2", "--lr-max", "1e12", "--lr-min", "1e11"]);
    assert_eq!(out.status.code(), Some(4), "{}", stderr(&out));
    assert!(stderr(&out).contains("diverged"));
}

#[test]
fn gradcheck_passes() {
    let out = sdcnet(&["gradcheck", "--tolerance", "1e-4"]);
    assert!(out.status.success(), "{}", stdout(&out));
    assert!(stdout(&out).contains(" 0 failed"));
}

#[test]
fn gradcheck_impossible_tolerance_fails() {
    let out = sdcnet(&["gradcheck", "--tolerance", "1e-15"]);
    assert_eq!(out.status.code(), Some(5));
}
