//! Score a simple greedy heuristic against oracle labels with the
//! order-free discrepancy D and the aggregate count error.

use loadcast::catalog::RailcarCatalog;
use loadcast::evaluation::{discrepancy, time_predictions, EvalReport};
use loadcast::heuristic::greedy_fill;
use loadcast::instances::{generate, DataClass, DatasetSpec};
use loadcast::oracle::{SolutionDescription, SolverConfig};

fn main() {
    let catalog = RailcarCatalog::toy();
    let labeled = generate(&DatasetSpec::new(DataClass::desk(), 1_000, 3), &catalog, &SolverConfig::default()).unwrap();
    let bookings: Vec<_> = labeled.iter().map(|l| l.instance.booking.clone()).collect();
    let (predicted, timing) = time_predictions(&bookings, |b| greedy_fill(b, &catalog));

    let first = &labeled[0];
    println!("example: {}", first.instance.booking);
    println!("  oracle {:?}", first.description.loadings());
    println!("  greedy {:?}", predicted[0].loadings());
    println!("  mismatched containers: {}", discrepancy(&first.description, &predicted[0], &catalog));

    let pairs: Vec<(SolutionDescription, SolutionDescription)> =
        labeled.iter().map(|l| l.description.clone()).zip(predicted).collect();
    let greedy = EvalReport::new("greedy", &pairs, &catalog, Some(timing)).unwrap();
    let exact: Vec<_> = pairs.iter().map(|(a, _)| (a.clone(), a.clone())).collect();
    let oracle = EvalReport::new("oracle", &exact, &catalog, None).unwrap();
    print!("{greedy}");
    print!("{}", EvalReport::to_csv(&[greedy.clone(), oracle]));
}
