//! Regenerates the bundled demo corpus under `data/demo`.

use std::path::Path;

fn main() -> std::io::Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join("demo");
    std::fs::create_dir_all(&dir)?;
    for path in histocr::synth::write_demo_files(&histocr::synth::demo_corpus(), &dir)? {
        println!("{}", path.display());
    }
    Ok(())
}
