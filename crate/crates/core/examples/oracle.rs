//! Solve one full-information instance exactly and reduce the plan to its
//! tactical description.

use loadcast::catalog::RailcarCatalog;
use loadcast::instances::{sample_instance, sample_weights, stream_rng, DataClass};
use loadcast::oracle::{cost_of_solution, solve_full_info, synthesize, SolverConfig};

fn main() {
    let catalog = RailcarCatalog::toy();
    let mut rng = stream_rng(42, 0);
    let booking = sample_instance(&DataClass::desk(), &catalog, &mut rng);
    let instance = sample_weights(&booking, &catalog, &mut rng);
    println!("booking: {booking}");
    for (l, ws) in instance.weights.as_ref().unwrap().iter().enumerate() {
        let w: Vec<String> = ws.iter().map(|w| format!("{w:.1}")).collect();
        println!("  {} ft weights (t): {}", catalog.containers()[l].length_ft, w.join(" "));
    }

    let plan = solve_full_info(&instance, &catalog, &SolverConfig::default()).expect("small instance");
    for car in &plan.railcars {
        let name = &catalog.railcars()[car.railcar_type].name;
        println!("{name} pattern #{}:", car.pattern);
        for (q, p) in car.platforms.iter().enumerate() {
            println!("  platform {q}: bottom {:?} top {:?}", p.bottom, p.top);
        }
    }
    println!("cost (loaded, platforms, railcars): {}", cost_of_solution(&instance, &catalog, &plan).unwrap());
    let description = synthesize(&plan, &catalog);
    println!("description: {:?}", description.loadings());
}
