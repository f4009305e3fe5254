// Regenerate the bundled demo under `fixtures/demo` (or the directory given
// as the first argument).

use std::path::{Path, PathBuf};

use noise_edit::eiam::demo;

pub fn write_to(dir: &Path) -> noise_edit::Result<()> {
    let set = demo::write_demo(dir)?;
    println!("wrote demo to {}", dir.display());
    println!(
        "conditions: source {} target {}, mask {} pixels",
        set.source_condition,
        set.target_condition,
        set.mask.count()
    );
    Ok(())
}

#[allow(dead_code)]
fn main() {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/demo"));
    if let Err(e) = write_to(&dir) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
