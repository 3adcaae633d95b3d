//! Sample-average prediction: for each booking, draw weight scenarios,
//! solve each and keep the medoid description. More scenarios cost more
//! time and give lower discrepancy.

use loadcast::catalog::RailcarCatalog;
use loadcast::instances::{generate, stream_rng, DataClass, DatasetSpec};
use loadcast::oracle::SolverConfig;
use loadcast::saa::{saa_bound, saa_predict, SaaConfig};

fn main() {
    let catalog = RailcarCatalog::toy();
    let labeled = generate(&DatasetSpec::new(DataClass::desk(), 300, 4), &catalog, &SolverConfig::default()).unwrap();

    let booking = &labeled[0].instance.booking;
    let p = saa_predict(booking, 10, &mut stream_rng(9, 0), &catalog, &SolverConfig::default()).unwrap();
    println!("{booking}: 10 scenario solutions, medoid is #{}", p.chosen);
    for (i, c) in p.candidates.iter().enumerate() {
        println!("  {}{:?}", if i == p.chosen { "* " } else { "  " }, c.loadings());
    }

    let observations: Vec<_> = labeled.iter().map(|l| (l.instance.booking.clone(), l.description.clone())).collect();
    let config = SaaConfig { scenarios: vec![1, 5, 10, 25], seed: 9, ..Default::default() };
    let report = saa_bound(&observations, &config, &catalog).unwrap();
    print!("{report}");
    print!("{}", report.to_csv());
}
