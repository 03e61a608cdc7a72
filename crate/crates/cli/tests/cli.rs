use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn mg2vec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mg2vec"))
        .args(args)
        .env("RUST_LOG", "info")
        .output()
        .expect("binary runs")
}

fn tiny_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("run.toml");
    fs::write(
        &path,
        "seed = 2\n[simulate]\nnum_reads = 200\nancestor_length = 2000\nhost_length = 4000\n\
         [walk]\nwalks_per_node = 2\nwalk_length = 10\n[skipgram]\ndim = 8\nepochs = 1\n\
         [transformer]\nnum_layers = 1\nnum_heads = 2\nmodel_dim = 8\nff_dim = 16\n\
         [pretrain]\nepochs = 1\nmax_windows = 10\nwarmup_steps = 5\n",
    )
    .unwrap();
    path
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn help_lists_stages_and_defaults() {
    let o = mg2vec(&["--help"]);
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout);
    for word in ["build-graph", "train-structural", "--seed", "--out", "walk_length = 80", "mask_ratio = 0.15"] {
        assert!(text.contains(word), "help lacks {word}");
    }
}

#[test]
fn full_run_writes_artifacts_only() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let out = dir.path().join("art");
    let o = mg2vec(&["all", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(o.stdout.is_empty());
    assert!(stderr(&o).contains("macro-F1"));
    for name in ["graph.tsv", "global.emb", "model.ckpt", "report-concat-logreg.json", "cluster-concat.json"] {
        assert!(out.join(name).exists(), "{name} missing");
    }
}

#[test]
fn seed_flag_overrides_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for (out, seed) in [(&a, "2"), (&b, "3")] {
        let o = mg2vec(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", seed]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    assert_ne!(fs::read(a.join("reads.fastq")).unwrap(), fs::read(b.join("reads.fastq")).unwrap());
}

#[test]
fn validation_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[walk]\nwalklen = 4\n").unwrap();
    let o = mg2vec(&["simulate", "--config", bad.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("walk_length"));

    let cfg = tiny_config(dir.path());
    let o = mg2vec(&["embed", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("x").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("build-graph"), "{}", stderr(&o));

    let o = mg2vec(&["frobnicate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let o = mg2vec(&["simulate"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let reads = dir.path().join("reads.fastq");
    fs::write(&reads, "@r1\nACGT\n+\nII\n").unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, format!("[paths]\nartifacts = \"{}\"\nreads = \"{}\"\n", dir.path().join("art").display(), reads.display())).unwrap();
    let o = mg2vec(&["build-graph", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}

#[test]
fn presets_are_accepted() {
    let o = mg2vec(&["simulate", "--preset", "no-such-preset"]);
    assert_eq!(o.status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let o = mg2vec(&["simulate", "--preset", "targeted-constrained", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "preset and config are exclusive");
}
