//! Write a small labeled parallel corpus: sampled bookings, solved by the
//! exact oracle, split into train/valid/test phrase files.
//!
//!     cargo run --release --example generate_dataset -- [out-dir]

use loadcast::catalog::RailcarCatalog;
use loadcast::instances::{build_dataset, DataClass, DatasetSpec, Split};
use loadcast::oracle::SolverConfig;

fn main() {
    let dir = std::env::args().nth(1).map(std::path::PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("loadcast-desk"));
    let catalog = RailcarCatalog::toy();
    let spec = DatasetSpec::new(DataClass::desk(), 2_000, 7);
    let files = build_dataset(&spec, &catalog, &SolverConfig::default(), &dir).unwrap();
    let m = &files.manifest;
    println!("{} instances of class {} -> {}", m.count, m.class.name, files.dir.display());
    for (split, n) in Split::ALL.iter().zip(m.split_sizes) {
        println!("  {:5} {n:5} lines  {}", split.name(), files.src(*split).display());
    }
    println!("budget-limited labels: {}", m.budget_exhausted.len());
    let first = std::fs::read_to_string(files.src(Split::Train)).unwrap();
    let gold = std::fs::read_to_string(files.tgt(Split::Train)).unwrap();
    println!("first pair:\n  {}\n  {}", first.lines().next().unwrap(), gold.lines().next().unwrap());
}
