//! Load a railcar catalog and list the loading patterns it allows.
//!
//!     cargo run --example catalog [toy|default10|path/to/catalog.cfg]

use loadcast::catalog::RailcarCatalog;

fn main() {
    let arg = std::env::args().nth(1).unwrap_or_else(|| "toy".into());
    let catalog = match arg.as_str() {
        "toy" => RailcarCatalog::toy(),
        "default10" => RailcarCatalog::default10(),
        path => RailcarCatalog::load(path).unwrap_or_else(|e| {
            eprintln!("{e}");
            std::process::exit(2);
        }),
    };
    println!("{catalog}");
    for j in 0..catalog.num_types() {
        let car = &catalog.railcars()[j];
        println!("{} ({} platforms):", car.name, car.platforms.len());
        for p in catalog.patterns_of(j) {
            println!("  #{:<3} counts {:?}  min platforms {}", catalog.global_index(j, p.local_index), p.counts, p.min_platforms);
        }
    }
    println!("{} patterns in total", catalog.pattern_count());
}
