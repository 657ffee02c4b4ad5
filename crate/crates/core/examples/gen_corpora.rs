//! Regenerates the bundled synthetic corpora under `corpora/`.
//!
//! ```sh
//! cargo run -p memprobe --example gen_corpora
//! ```

use memprobe::synthetic::{schema_corpus, write_corpus_jsonl};
use std::path::Path;

fn main() -> std::io::Result<()> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpora");
    std::fs::create_dir_all(&root)?;
    // User counts mirror the real datasets these stand in for; unit
    // counts stay desk-scale.
    for (name, users, groups, per_group) in [
        ("synthetic_perltqa.jsonl", 140, 3, 2),
        ("synthetic_locomo.jsonl", 10, 6, 2),
        ("synthetic_msc.jsonl", 24, 4, 2),
    ] {
        let rows = schema_corpus(users, groups, per_group);
        let path = root.join(name);
        write_corpus_jsonl(&path, &rows)?;
        println!("{} ({} units)", path.display(), rows.len());
    }
    Ok(())
}
