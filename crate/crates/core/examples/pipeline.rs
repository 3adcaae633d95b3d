//! The whole command-line pipeline driven in-process: generate, train,
//! predict, evaluate. Equivalent shell commands are printed as they run.

use loadcast::cli;

fn step(args: &[&str]) {
    println!("$ loadcast {}", args.join(" "));
    let mut argv = vec!["loadcast"];
    argv.extend_from_slice(args);
    let code = cli::run(argv);
    assert_eq!(code, 0, "command failed");
}

fn main() {
    let dir = tempfile_dir();
    let d = |p: &str| dir.join(p).display().to_string();
    std::fs::write(
        dir.join("run.toml"),
        "catalog = \"toy\"\nseed = 11\n[nmt]\nembed = 16\nhidden = 32\n[train]\nmax_epochs = 2\n",
    )
    .unwrap();
    let (config, data, model) = (d("run.toml"), d("data"), d("model"));
    step(&["--catalog", "toy", "--seed", "11", "gen", "--class", "desk", "--n", "600", "--out", &data]);
    step(&["--config", &config, "train", "--data", &data, "--out", &model]);
    let (ckpt, src, gold, pred) = (d("model/model.ckpt"), d("data/test.src"), d("data/test.tgt"), d("pred.tgt"));
    step(&["--catalog", "toy", "predict", "--checkpoint", &ckpt, "--input", &src, "--out", &pred]);
    step(&["--catalog", "toy", "eval", "--pred", &pred, "--gold", &gold, "--label", "nmt"]);
    step(&["--catalog", "toy", "--seed", "11", "saa", "--input", &src, "--gold", &gold, "--scenarios", "1,5", "--limit", "50"]);
}

fn tempfile_dir() -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("loadcast-pipeline-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}
