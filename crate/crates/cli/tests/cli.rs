//! Command-level behavior of the `fairlab` binary: exit codes, byte
//! determinism, file formats, and the flag/config contract.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

fn scratch() -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("cli_suite");
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn fairlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fairlab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = fairlab(args);
    assert!(
        out.status.success(),
        "command {:?} failed: {}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

/// Dataset, attribute classifier, and denoiser shared by the tests that
/// need trained artifacts; built once per test-binary run.
struct Fixture {
    data: PathBuf,
    kappa: PathBuf,
    model: PathBuf,
}

fn fixture() -> &'static Fixture {
    static FIX: OnceLock<Fixture> = OnceLock::new();
    FIX.get_or_init(|| {
        let dir = scratch();
        let data = dir.join("fix_data.csv");
        let kappa = dir.join("fix_kappa.ckpt");
        let model = dir.join("fix_model.ckpt");
        let d = data.to_str().unwrap();
        ok(&["synth", "--seed", "11", "--out", d]);
        ok(&["train-kappa", "--data", d, "--seed", "11", "--out", kappa.to_str().unwrap()]);
        ok(&["train", "--data", d, "--seed", "11", "--out", model.to_str().unwrap()]);
        Fixture { data, kappa, model }
    })
}

#[test]
fn synth_is_byte_deterministic_and_seed_sensitive() {
    let dir = scratch();
    let a = dir.join("synth_a.csv");
    let b = dir.join("synth_b.csv");
    let c = dir.join("synth_c.csv");
    ok(&["synth", "--seed", "3", "--out", a.to_str().unwrap()]);
    ok(&["synth", "--seed", "3", "--out", b.to_str().unwrap()]);
    ok(&["synth", "--seed", "4", "--out", c.to_str().unwrap()]);
    let bytes_a = fs::read(&a).unwrap();
    assert_eq!(bytes_a, fs::read(&b).unwrap());
    assert_ne!(bytes_a, fs::read(&c).unwrap());
    // default world: 8 concepts x 250 samples + header
    assert_eq!(fs::read_to_string(&a).unwrap().lines().count(), 2001);
}

#[test]
fn missing_data_file_exits_one_and_names_the_path() {
    let out = fairlab(&[
        "train-kappa",
        "--data",
        "/nonexistent/nowhere.csv",
        "--seed",
        "0",
        "--out",
        "/tmp/unused.ckpt",
    ]);
    assert_eq!(code(&out), 1);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("/nonexistent/nowhere.csv"), "stderr: {err}");
}

#[test]
fn malformed_table_exits_one_with_location() {
    let fix = fixture();
    let dir = scratch();
    let table = dir.join("bad_table.tsv");
    fs::write(&table, "bravo no-tab-here\n").unwrap();
    let out = fairlab(&[
        "generate",
        "--model",
        fix.model.to_str().unwrap(),
        "--concept",
        "bravo",
        "--n",
        "5",
        "--table",
        table.to_str().unwrap(),
        "--out",
        dir.join("unused.csv").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 1);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains(":1:1:"), "stderr: {err}");
}

#[test]
fn unknown_concept_exits_two() {
    let fix = fixture();
    let out = fairlab(&[
        "generate",
        "--model",
        fix.model.to_str().unwrap(),
        "--concept",
        "zulu",
        "--n",
        "5",
        "--out",
        scratch().join("unused2.csv").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("zulu"));
}

#[test]
fn single_attribute_dataset_exits_two() {
    let dir = scratch();
    // A world whose planted rates are all zero carries only attribute 0.
    let spec = dir.join("flat.spec");
    fs::write(
        &spec,
        "dim=8\nsep=6\nstd=1\nconcept=uno,0,50\nconcept=dos,0,50\ngroup=f:uno\ngroup=m:dos\n",
    )
    .unwrap();
    let data = dir.join("one_attr.csv");
    ok(&[
        "synth", "--spec", spec.to_str().unwrap(), "--seed", "1",
        "--out", data.to_str().unwrap(),
    ]);
    let out = fairlab(&[
        "train-kappa", "--spec", spec.to_str().unwrap(), "--data", data.to_str().unwrap(),
        "--seed", "0", "--out", dir.join("unused.ckpt").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("single attribute"));
}

#[test]
fn generate_plain_row_count_and_rerun_identity() {
    let fix = fixture();
    let dir = scratch();
    let a = dir.join("plain_a.csv");
    let b = dir.join("plain_b.csv");
    let base = [
        "generate",
        "--model",
        fix.model.to_str().unwrap(),
        "--concept",
        "echo",
        "--n",
        "40",
        "--seed",
        "5",
        "--out",
    ];
    ok(&[&base[..], &[a.to_str().unwrap()]].concat());
    ok(&[&base[..], &[b.to_str().unwrap()]].concat());
    let text = fs::read_to_string(&a).unwrap();
    assert_eq!(text.lines().count(), 41);
    assert!(text.starts_with("id,concept,x0"));
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn table_without_matching_key_is_plain_sampling() {
    let fix = fixture();
    let dir = scratch();
    let table = dir.join("other_key.tsv");
    fs::write(&table, "zulu\tq=0.5;warmup=0;mask=1;side1=+attr1:3;side2=+attr0:3\n").unwrap();
    let no_table = dir.join("nt.csv");
    let with_table = dir.join("wt.csv");
    ok(&[
        "generate", "--model", fix.model.to_str().unwrap(), "--concept", "golf", "--n", "20",
        "--seed", "9", "--out", no_table.to_str().unwrap(),
    ]);
    ok(&[
        "generate", "--model", fix.model.to_str().unwrap(), "--concept", "golf", "--n", "20",
        "--seed", "9", "--table", table.to_str().unwrap(), "--out", with_table.to_str().unwrap(),
    ]);
    assert_eq!(fs::read(&no_table).unwrap(), fs::read(&with_table).unwrap());
    assert!(!dir.join("wt_directions.csv").exists());
}

#[test]
fn q_override_one_logs_only_side_one() {
    let fix = fixture();
    let dir = scratch();
    let out_csv = dir.join("q1.csv");
    let table = concat!(env!("CARGO_MANIFEST_DIR"), "/../../presets/paired.tsv");
    ok(&[
        "generate", "--model", fix.model.to_str().unwrap(), "--concept", "bravo", "--n", "25",
        "--seed", "2", "--table", table, "--q-override", "1.0",
        "--out", out_csv.to_str().unwrap(),
    ]);
    let log = fs::read_to_string(dir.join("q1_directions.csv")).unwrap();
    let rows: Vec<&str> = log.lines().skip(1).collect();
    assert_eq!(rows.len(), 25);
    assert!(rows.iter().all(|r| r.split(',').nth(1) == Some("1")));
}

#[test]
fn ieat_toy_exact_row() {
    let dir = scratch();
    let file = |name: &str, rows: &str| {
        let p = dir.join(name);
        fs::write(&p, format!("id,x0,x1\n{rows}")).unwrap();
        p
    };
    let x = file("setx.csv", "w0,1,0\n");
    let y = file("sety.csv", "w0,0,1\n");
    let a = file("seta.csv", "w0,1,0\n");
    let b = file("setb.csv", "w0,0,1\n");
    let out_csv = dir.join("ieat.csv");
    let run = ok(&[
        "ieat", "--x", x.to_str().unwrap(), "--y", y.to_str().unwrap(),
        "--a", a.to_str().unwrap(), "--b", b.to_str().unwrap(),
        "--seed", "0", "--out", out_csv.to_str().unwrap(),
    ]);
    let text = fs::read_to_string(&out_csv).unwrap();
    assert!(text.contains("\n2,0,1.414213562373095,exact,2,\n"), "{text}");
    assert!(String::from_utf8_lossy(&run.stdout).contains("S=2 p=0"));
}

#[test]
fn report_on_echoed_dataset_is_all_reflected() {
    let dir = scratch();
    // Two concepts far enough apart that the relevance filter keeps
    // exactly the planted clusters; echoing those clusters back as
    // generated output must reproduce the reference rates bit for bit.
    let spec = dir.join("two.spec");
    fs::write(
        &spec,
        "dim=8\nsep=14\nstd=1\nconcept=uno,0.3,50\nconcept=dos,0.7,50\ngroup=f:uno\ngroup=m:dos\n",
    )
    .unwrap();
    let data = dir.join("two.csv");
    let kappa = dir.join("two_kappa.ckpt");
    ok(&["synth", "--spec", spec.to_str().unwrap(), "--seed", "5", "--out", data.to_str().unwrap()]);
    ok(&[
        "train-kappa", "--spec", spec.to_str().unwrap(), "--data", data.to_str().unwrap(),
        "--seed", "5", "--out", kappa.to_str().unwrap(),
    ]);
    let text = fs::read_to_string(&data).unwrap();
    let mut gen = String::from("id,concept,x0,x1,x2,x3,x4,x5,x6,x7\n");
    for (i, line) in text.lines().skip(1).enumerate() {
        let mut parts = line.splitn(4, ',');
        let _id = parts.next().unwrap();
        let concept = parts.next().unwrap();
        let _attr = parts.next().unwrap();
        gen.push_str(&format!("{concept}-g{i:04},{concept},{}\n", parts.next().unwrap()));
    }
    let gen_path = dir.join("echoed.csv");
    fs::write(&gen_path, gen).unwrap();
    let report_dir = dir.join("echo_report");
    ok(&[
        "report", "--spec", spec.to_str().unwrap(), "--data", data.to_str().unwrap(),
        "--kappa", kappa.to_str().unwrap(), "--plain", gen_path.to_str().unwrap(),
        "--seed", "5", "--out-dir", report_dir.to_str().unwrap(),
    ]);
    let rates = fs::read_to_string(report_dir.join("rates.csv")).unwrap();
    assert!(
        rates.contains("# verdict-percent amplified=0 reflected=100 mitigated=0"),
        "{rates}"
    );
    let data_rows: Vec<&str> = rates.lines().filter(|l| !l.starts_with('#')).skip(1).collect();
    assert_eq!(data_rows.len(), 2);
    for row in data_rows {
        assert_eq!(row.split(',').nth(4), Some("reflected"), "row: {row}");
    }
}

#[test]
fn config_file_merges_and_flags_win() {
    let dir = scratch();
    let cfg = dir.join("synth.cfg");
    fs::write(&cfg, "# sampling setup\nseed = 5\n").unwrap();
    let via_cfg = dir.join("cfg_a.csv");
    let via_flag = dir.join("cfg_b.csv");
    let overridden = dir.join("cfg_c.csv");
    let direct6 = dir.join("cfg_d.csv");
    ok(&["synth", "--config", cfg.to_str().unwrap(), "--out", via_cfg.to_str().unwrap()]);
    ok(&["synth", "--seed", "5", "--out", via_flag.to_str().unwrap()]);
    ok(&[
        "synth", "--config", cfg.to_str().unwrap(), "--seed", "6",
        "--out", overridden.to_str().unwrap(),
    ]);
    ok(&["synth", "--seed", "6", "--out", direct6.to_str().unwrap()]);
    assert_eq!(fs::read(&via_cfg).unwrap(), fs::read(&via_flag).unwrap());
    assert_eq!(fs::read(&overridden).unwrap(), fs::read(&direct6).unwrap());
}

#[test]
fn audit_does_not_mutate_inputs() {
    let fix = fixture();
    let dir = scratch();
    let before_data = fs::read(&fix.data).unwrap();
    let before_kappa = fs::read(&fix.kappa).unwrap();
    ok(&[
        "audit", "--data", fix.data.to_str().unwrap(), "--kappa", fix.kappa.to_str().unwrap(),
        "--seed", "0", "--out-dir", dir.join("audit_out").to_str().unwrap(),
    ]);
    assert_eq!(before_data, fs::read(&fix.data).unwrap());
    assert_eq!(before_kappa, fs::read(&fix.kappa).unwrap());
}

#[test]
fn help_documents_generate_flags() {
    let out = ok(&["generate", "--help"]);
    let text = String::from_utf8_lossy(&out.stdout).to_string();
    for flag in [
        "--model", "--concept", "--n", "--sg", "--table", "--q-override", "--out",
        "--directions", "--seed", "--config",
    ] {
        assert!(text.contains(flag), "help is missing {flag}");
    }
}
