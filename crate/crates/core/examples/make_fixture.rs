//! Writes the synthetic review fixture: `make_fixture <dir> [seed]`.

use std::path::PathBuf;

use reviewlens_core::synth::{review_dataset, ReviewFixtureSpec};

fn main() -> reviewlens_core::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "fixture".into()));
    let seed = args.next().map_or(2024, |s| s.parse().expect("seed must be an integer"));
    review_dataset(&ReviewFixtureSpec::default(), seed).write(&dir)?;
    println!("wrote {}", dir.display());
    Ok(())
}
