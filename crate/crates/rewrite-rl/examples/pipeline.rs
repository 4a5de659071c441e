//! The whole pipeline through the harness API, small enough to finish in
//! about a minute: synth -> init-train -> build-pairs -> train-rm ->
//! train-ppo -> eval -> trend, all inside one temporary run directory.
//!
//! The `rewrite-rl` binary exposes exactly these commands; this example is
//! the library-level equivalent of running them in order.
//!
//! ```sh
//! cargo run --example pipeline
//! ```

use rewrite_rl::harness::{run, Command, RunConfig};

fn main() {
    let dir = tempfile::tempdir().expect("temp dir");
    let out = dir.path();

    let mut config = RunConfig::default();
    for (key, value) in [
        ("seed", "5"),
        ("synth.num_examples", "120"),
        ("init.epochs", "2"),
        ("rm.epochs", "2"),
        ("ppo.total_steps", "4"),
        ("ppo.checkpoint_every", "2"),
        ("ppo.batch_size", "8"),
    ] {
        config.set(key, value).expect("known key");
    }

    for command in [
        Command::Synth,
        Command::InitTrain,
        Command::BuildPairs,
        Command::TrainRm,
        Command::TrainPpo,
        Command::Eval,
        Command::Trend,
    ] {
        println!("== {} ==", command.name());
        run(command, &config, Some(out)).expect("command succeeds");
    }

    println!("run directory layout:");
    let mut paths: Vec<_> = walk(out);
    paths.sort();
    for p in paths {
        println!("  {}", p.strip_prefix(out.to_str().unwrap()).unwrap_or(&p));
    }
}

fn walk(dir: &std::path::Path) -> Vec<String> {
    let mut out = Vec::new();
    if let Ok(entries) = std::fs::read_dir(dir) {
        for entry in entries.flatten() {
            let path = entry.path();
            if path.is_dir() {
                out.extend(walk(&path));
            } else {
                out.push(path.display().to_string());
            }
        }
    }
    out
}
