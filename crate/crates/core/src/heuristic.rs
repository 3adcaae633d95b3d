//! Weight-blind greedy reference predictor.

use crate::catalog::RailcarCatalog;
use crate::instances::Booking;
use crate::oracle::SolutionDescription;

/// Repeatedly assigns the largest loading that still fits the remaining
/// railcars and containers (ties: fewer platforms, then lower index) until
/// nothing fits.
pub fn greedy_fill(booking: &Booking, catalog: &RailcarCatalog) -> SolutionDescription {
    let mut railcars = booking.railcars.clone();
    let mut containers = booking.containers.clone();
    let mut order: Vec<usize> = (0..catalog.pattern_count()).collect();
    order.sort_by_key(|&p| {
        let pat = catalog.pattern(p);
        (std::cmp::Reverse(pat.containers()), pat.min_platforms, p)
    });
    let mut out = SolutionDescription::new();
    'outer: loop {
        for &p in &order {
            let pat = catalog.pattern(p);
            let fits = railcars[pat.railcar_type] > 0 && pat.counts.iter().zip(&containers).all(|(need, have)| need <= have);
            if fits && pat.containers() > 0 {
                railcars[pat.railcar_type] -= 1;
                for (have, need) in containers.iter_mut().zip(&pat.counts) {
                    *have -= need;
                }
                out.add(p, 1);
                continue 'outer;
            }
        }
        return out;
    }
}
