// Write PGM previews of the demo clip; the output prefix defaults to a
// temporary directory, or pass one as the first argument.

use std::path::PathBuf;

use noise_edit::eiam::demo;
use noise_edit::preview::{bounds_path, emit_preview};

pub fn run_example() -> noise_edit::Result<()> {
    let tmp = tempfile::tempdir().expect("temp dir");
    let prefix = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| tmp.path().join("demo"));
    let set = demo::demo_set()?;
    let paths = emit_preview(&set.source, &prefix)?;
    for p in &paths {
        println!("{}", p.display());
    }
    println!(
        "bounds: {}",
        std::fs::read_to_string(bounds_path(&prefix))
            .unwrap_or_default()
            .replace('\n', "  ")
    );
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
