//! Exact full-information load planning and the synthesis of its
//! per-railcar description.
//!
//! The objective is lexicographic: load as many containers as possible,
//! then use as few platforms as possible, then as few railcars. The
//! search runs in two layers:
//!
//! * an outer depth-first branch-and-bound over how many railcars of each
//!   type receive each loading pattern, bounded by a capacity relaxation;
//! * an inner packing search that places the actual containers (heaviest
//!   first) onto the chosen loadings under the weight caps.
//!
//! Within a length class only the lightest containers are ever loaded: any
//! feasible plan stays feasible when each loaded container is swapped for a
//! lighter unloaded one, and the cost does not depend on weights.

use std::cmp::{Ordering, Reverse};
use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::catalog::{PlatformLoad, RailcarCatalog};
use crate::instances::{Booking, Instance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Cost {
    pub loaded_containers: u32,
    pub used_platforms: u32,
    pub used_railcars: u32,
}

impl Cost {
    fn key(&self) -> (u32, Reverse<u32>, Reverse<u32>) {
        (self.loaded_containers, Reverse(self.used_platforms), Reverse(self.used_railcars))
    }

    /// `Greater` means strictly preferred.
    pub fn preference(&self, other: &Cost) -> Ordering {
        self.key().cmp(&other.key())
    }
}

impl fmt::Display for Cost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.loaded_containers, self.used_platforms, self.used_railcars)
    }
}

/// Multiset of loadings, keyed by global pattern index.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct SolutionDescription {
    counts: BTreeMap<usize, u32>,
}

impl SolutionDescription {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_patterns<I: IntoIterator<Item = usize>>(patterns: I) -> Self {
        let mut d = Self::new();
        for p in patterns {
            d.add(p, 1);
        }
        d
    }

    pub fn add(&mut self, pattern: usize, times: u32) {
        if times > 0 {
            *self.counts.entry(pattern).or_insert(0) += times;
        }
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn multiplicity(&self, pattern: usize) -> u32 {
        self.counts.get(&pattern).copied().unwrap_or(0)
    }

    /// `(pattern, multiplicity)` in ascending pattern order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, u32)> + '_ {
        self.counts.iter().map(|(&p, &m)| (p, m))
    }

    /// Pattern indices repeated by multiplicity, in canonical order.
    pub fn loadings(&self) -> Vec<usize> {
        self.entries().flat_map(|(p, m)| std::iter::repeat_n(p, m as usize)).collect()
    }

    pub fn len(&self) -> usize {
        self.counts.values().map(|&m| m as usize).sum()
    }

    /// Count vectors of the loadings on railcars of type `railcar_type`.
    pub fn loadings_of_type(&self, catalog: &RailcarCatalog, railcar_type: usize) -> Vec<Vec<u32>> {
        self.loadings()
            .into_iter()
            .map(|p| catalog.pattern(p))
            .filter(|p| p.railcar_type == railcar_type)
            .map(|p| p.counts.clone())
            .collect()
    }

    pub fn railcars_used(&self, catalog: &RailcarCatalog) -> Vec<u32> {
        let mut out = vec![0; catalog.num_types()];
        for (p, m) in self.entries() {
            out[catalog.pattern(p).railcar_type] += m;
        }
        out
    }

    pub fn containers_used(&self, catalog: &RailcarCatalog) -> Vec<u32> {
        let mut out = vec![0; catalog.num_lengths()];
        for (p, m) in self.entries() {
            for (o, c) in out.iter_mut().zip(&catalog.pattern(p).counts) {
                *o += c * m;
            }
        }
        out
    }

    pub fn total_containers(&self, catalog: &RailcarCatalog) -> u32 {
        self.containers_used(catalog).iter().sum()
    }

    /// Platforms occupied, counting each loading at its pattern's fewest
    /// non-empty platforms.
    pub fn used_platforms(&self, catalog: &RailcarCatalog) -> u32 {
        self.entries().map(|(p, m)| catalog.pattern(p).min_platforms * m).sum()
    }
}

/// One used railcar in a full-information plan.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedRailcar {
    pub railcar_type: usize,
    /// Global pattern index.
    pub pattern: usize,
    pub platforms: Vec<PlatformLoad>,
}

/// Fully detailed plan: which containers sit on which platform.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct OperationalSolution {
    pub railcars: Vec<LoadedRailcar>,
}

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("node budget of {budget} exhausted")]
    Budget { budget: u64, incumbent: Box<OperationalSolution> },
    #[error("instance has no container weights")]
    MissingWeights,
    #[error("instance does not match catalog: {0}")]
    Shape(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SolverConfig {
    /// Upper limit on search nodes (outer and inner combined).
    pub node_budget: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { node_budget: 10_000_000 }
    }
}

/// Exact lexicographic optimum of the full-information problem.
pub fn solve_full_info(
    instance: &Instance,
    catalog: &RailcarCatalog,
    config: &SolverConfig,
) -> Result<OperationalSolution, OracleError> {
    let booking = &instance.booking;
    let weights = instance.weights.as_ref().ok_or(OracleError::MissingWeights)?;
    booking.check_shape(catalog).map_err(|e| OracleError::Shape(e.to_string()))?;
    if weights.len() != catalog.num_lengths() {
        return Err(OracleError::Shape(format!("{} weight lists for {} lengths", weights.len(), catalog.num_lengths())));
    }
    for (l, (w, &n)) in weights.iter().zip(&booking.containers).enumerate() {
        if w.len() != n as usize {
            return Err(OracleError::Shape(format!("length class {l}: {} weights for {n} containers", w.len())));
        }
    }
    let mut search = Search::new(catalog, booking, weights, config.node_budget);
    search.run();
    let solution = search.best_plan.take().unwrap_or_default();
    if search.exhausted {
        return Err(OracleError::Budget { budget: config.node_budget, incumbent: Box::new(solution) });
    }
    Ok(solution)
}

/// Drops slot detail and weights, keeping the multiset of loadings.
pub fn synthesize(solution: &OperationalSolution, _catalog: &RailcarCatalog) -> SolutionDescription {
    SolutionDescription::from_patterns(solution.railcars.iter().map(|r| r.pattern))
}

/// Cost of a description, after checking it against the booking's
/// availabilities.
pub fn cost(booking: &Booking, catalog: &RailcarCatalog, description: &SolutionDescription) -> Result<Cost, OracleError> {
    booking.check_shape(catalog).map_err(|e| OracleError::Shape(e.to_string()))?;
    for (p, _) in description.entries() {
        if p >= catalog.pattern_count() {
            return Err(OracleError::Infeasible(format!("pattern {p} is not in the catalog")));
        }
    }
    for (j, (&used, &avail)) in description.railcars_used(catalog).iter().zip(&booking.railcars).enumerate() {
        if used > avail {
            return Err(OracleError::Infeasible(format!("railcar type {j}: {used} used, {avail} available")));
        }
    }
    for (l, (&used, &avail)) in description.containers_used(catalog).iter().zip(&booking.containers).enumerate() {
        if used > avail {
            return Err(OracleError::Infeasible(format!("length class {l}: {used} loaded, {avail} available")));
        }
    }
    Ok(Cost {
        loaded_containers: description.total_containers(catalog),
        used_platforms: description.used_platforms(catalog),
        used_railcars: description.len() as u32,
    })
}

/// Cost of a detailed plan after checking every placement: geometry,
/// stacking, weight caps, and that the placed weights are drawn from the
/// instance's containers without reuse.
pub fn cost_of_solution(instance: &Instance, catalog: &RailcarCatalog, solution: &OperationalSolution) -> Result<Cost, OracleError> {
    let weights = instance.weights.as_ref().ok_or(OracleError::MissingWeights)?;
    let mut pool: Vec<Vec<f64>> = weights.clone();
    for (r, car) in solution.railcars.iter().enumerate() {
        let spec = catalog
            .railcars()
            .get(car.railcar_type)
            .ok_or_else(|| OracleError::Infeasible(format!("railcar {r}: unknown type {}", car.railcar_type)))?;
        if car.platforms.len() != spec.platforms.len() {
            return Err(OracleError::Infeasible(format!("railcar {r}: wrong platform count")));
        }
        let mut counts = vec![0u32; catalog.num_lengths()];
        let mut total = 0.0;
        for (q, (load, ps)) in car.platforms.iter().zip(&spec.platforms).enumerate() {
            if load.top.is_some() && load.bottom.is_none() {
                return Err(OracleError::Infeasible(format!("railcar {r} platform {q}: top without bottom")));
            }
            let mut on_platform = 0.0;
            for (slot, allowed) in [(load.bottom, &ps.allowed_bottom), (load.top, &ps.allowed_top)] {
                if let Some((l, w)) = slot {
                    if !allowed.contains(&l) {
                        return Err(OracleError::Infeasible(format!("railcar {r} platform {q}: length class {l} not allowed")));
                    }
                    let pos = pool
                        .get(l)
                        .and_then(|ws| ws.iter().position(|x| *x == w))
                        .ok_or_else(|| OracleError::Infeasible(format!("railcar {r}: container of class {l} weighing {w} not available")))?;
                    pool[l].swap_remove(pos);
                    counts[l] += 1;
                    on_platform += w;
                }
            }
            if on_platform > ps.weight_cap {
                return Err(OracleError::Infeasible(format!("railcar {r} platform {q}: {on_platform} t over cap {}", ps.weight_cap)));
            }
            total += on_platform;
        }
        if total > spec.weight_cap {
            return Err(OracleError::Infeasible(format!("railcar {r}: {total} t over cap {}", spec.weight_cap)));
        }
        if catalog.find_pattern(car.railcar_type, &counts) != Some(car.pattern) {
            return Err(OracleError::Infeasible(format!("railcar {r}: load {counts:?} does not match pattern {}", car.pattern)));
        }
    }
    cost(&instance.booking, catalog, &synthesize(solution, catalog))
}

/// Pattern reference used during the outer search.
#[derive(Debug, Clone)]
struct Choice {
    global: usize,
    counts: Vec<u32>,
    size: u32,
    min_platforms: u32,
}

struct Search<'a> {
    catalog: &'a RailcarCatalog,
    railcars: Vec<u32>,
    /// Per length class, ascending.
    light_first: Vec<Vec<f64>>,
    /// Per type: pattern choices, largest first.
    choices: Vec<Vec<Choice>>,
    /// Per type: largest pattern per length class and overall.
    max_per_class: Vec<Vec<u32>>,
    max_size: Vec<u32>,
    /// Best containers-per-platform and per-railcar ratios over type j.. end.
    best_density_from: Vec<f64>,
    best_size_from: Vec<u32>,
    budget: u64,
    nodes: u64,
    exhausted: bool,
    best_cost: Cost,
    best_plan: Option<OperationalSolution>,
    /// Current multiplicities (type, choice index within type, count).
    stack: Vec<(usize, usize, u32)>,
}

impl<'a> Search<'a> {
    fn new(catalog: &'a RailcarCatalog, booking: &Booking, weights: &[Vec<f64>], budget: u64) -> Self {
        let light_first = weights
            .iter()
            .map(|ws| {
                let mut v = ws.clone();
                v.sort_by(f64::total_cmp);
                v
            })
            .collect();
        let lengths = catalog.num_lengths();
        let mut choices = Vec::new();
        let mut max_per_class = Vec::new();
        let mut max_size = Vec::new();
        for j in 0..catalog.num_types() {
            let mut list: Vec<Choice> = catalog
                .patterns_of(j)
                .iter()
                .map(|p| Choice {
                    global: catalog.global_index(j, p.local_index),
                    counts: p.counts.clone(),
                    size: p.containers(),
                    min_platforms: p.min_platforms,
                })
                .collect();
            // Larger loadings first; among equals, fewer platforms, then index.
            list.sort_by(|a, b| b.size.cmp(&a.size).then(a.min_platforms.cmp(&b.min_platforms)).then(a.global.cmp(&b.global)));
            let mut per_class = vec![0u32; lengths];
            for c in &list {
                for (m, &n) in per_class.iter_mut().zip(&c.counts) {
                    *m = (*m).max(n);
                }
            }
            max_size.push(list.iter().map(|c| c.size).max().unwrap_or(0));
            max_per_class.push(per_class);
            choices.push(list);
        }
        let types = catalog.num_types();
        let mut best_density_from = vec![0.0f64; types + 1];
        let mut best_size_from = vec![0u32; types + 1];
        for j in (0..types).rev() {
            let density = choices[j]
                .iter()
                .map(|c| c.size as f64 / c.min_platforms.max(1) as f64)
                .fold(0.0, f64::max);
            let density = if booking.railcars[j] > 0 { density } else { 0.0 };
            best_density_from[j] = best_density_from[j + 1].max(density);
            let size = if booking.railcars[j] > 0 { max_size[j] } else { 0 };
            best_size_from[j] = best_size_from[j + 1].max(size);
        }
        Search {
            catalog,
            railcars: booking.railcars.clone(),
            light_first,
            choices,
            max_per_class,
            max_size,
            best_density_from,
            best_size_from,
            budget,
            nodes: 0,
            exhausted: false,
            best_cost: Cost::default(),
            best_plan: Some(OperationalSolution::default()),
            stack: Vec::new(),
        }
    }

    fn run(&mut self) {
        let remaining: Vec<u32> = self.light_first.iter().map(|w| w.len() as u32).collect();
        self.descend(0, 0, self.railcars.first().copied().unwrap_or(0), remaining, Cost::default());
    }

    fn tick(&mut self) -> bool {
        self.nodes += 1;
        if self.nodes > self.budget {
            self.exhausted = true;
        }
        !self.exhausted
    }

    /// Optimistic cost reachable from type `j` (choice `k` onwards for type
    /// `j`, with `cars_left` railcars of type `j` still free).
    fn bound(&self, j: usize, cars_left: u32, remaining: &[u32], acc: Cost) -> Cost {
        let lengths = remaining.len();
        let mut per_class = vec![0u32; lengths];
        let mut by_cars = 0u32;
        for t in j..self.railcars.len() {
            let cars = if t == j { cars_left } else { self.railcars[t] };
            if cars == 0 {
                continue;
            }
            by_cars += cars * self.max_size[t];
            for (pc, &m) in per_class.iter_mut().zip(&self.max_per_class[t]) {
                *pc += cars * m;
            }
        }
        let by_class: u32 = per_class.iter().zip(remaining).map(|(a, b)| (*a).min(*b)).sum();
        let extra = by_cars.min(by_class).min(remaining.iter().sum());
        let need = self.best_cost.loaded_containers.saturating_sub(acc.loaded_containers).min(extra);
        let density = self.best_density_from[j];
        let size = self.best_size_from[j];
        let platforms = if need == 0 || density == 0.0 { 0 } else { (need as f64 / density - 1e-9).ceil() as u32 };
        let cars = if need == 0 || size == 0 { 0 } else { need.div_ceil(size) };
        Cost {
            loaded_containers: acc.loaded_containers + extra,
            used_platforms: acc.used_platforms + platforms,
            used_railcars: acc.used_railcars + cars,
        }
    }

    fn descend(&mut self, j: usize, k: usize, cars_left: u32, remaining: Vec<u32>, acc: Cost) {
        if !self.tick() {
            return;
        }
        let types = self.railcars.len();
        if j == types {
            self.evaluate(&remaining, acc);
            return;
        }
        if self.bound(j, cars_left, &remaining, acc).preference(&self.best_cost) != Ordering::Greater {
            return;
        }
        if k == self.choices[j].len() || cars_left == 0 {
            let next_cars = if j + 1 < types { self.railcars[j + 1] } else { 0 };
            self.descend(j + 1, 0, next_cars, remaining, acc);
            return;
        }
        let choice = self.choices[j][k].clone();
        let max_times = choice
            .counts
            .iter()
            .zip(&remaining)
            .filter(|(c, _)| **c > 0)
            .map(|(c, r)| r / c)
            .min()
            .unwrap_or(0)
            .min(cars_left);
        for times in (0..=max_times).rev() {
            if self.exhausted {
                return;
            }
            let rem: Vec<u32> = remaining.iter().zip(&choice.counts).map(|(r, c)| r - c * times).collect();
            let next = Cost {
                loaded_containers: acc.loaded_containers + choice.size * times,
                used_platforms: acc.used_platforms + choice.min_platforms * times,
                used_railcars: acc.used_railcars + times,
            };
            if times > 0 {
                self.stack.push((j, k, times));
            }
            self.descend(j, k + 1, cars_left - times, rem, next);
            if times > 0 {
                self.stack.pop();
            }
        }
    }

    fn evaluate(&mut self, remaining: &[u32], acc: Cost) {
        if acc.preference(&self.best_cost) != Ordering::Greater {
            return;
        }
        let loadings: Vec<(usize, usize)> = self
            .stack
            .iter()
            .flat_map(|&(j, k, times)| std::iter::repeat_n((j, k), times as usize))
            .collect();
        // Lightest `used` containers of each class, heaviest first.
        let mut items: Vec<(usize, f64)> = Vec::new();
        for (l, ws) in self.light_first.iter().enumerate() {
            let used = ws.len() - remaining[l] as usize;
            items.extend(ws[..used].iter().map(|&w| (l, w)));
        }
        items.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let mut packer = Packer {
            catalog: self.catalog,
            needs: loadings.iter().map(|&(j, k)| self.choices[j][k].counts.clone()).collect(),
            types: loadings.iter().map(|&(j, _)| j).collect(),
            keys: loadings.iter().map(|&(j, k)| self.choices[j][k].global).collect(),
            bins: vec![Vec::new(); loadings.len()],
            nodes: &mut self.nodes,
            budget: self.budget,
        };
        match packer.pack(&items, 0) {
            Some(true) => {
                let mut railcars = Vec::with_capacity(loadings.len());
                for (b, bin) in packer.bins.iter().enumerate() {
                    let j = packer.types[b];
                    let platforms = self.catalog.railcars()[j].arrange(bin).expect("packed bins are arrangeable");
                    railcars.push(LoadedRailcar { railcar_type: j, pattern: packer.keys[b], platforms });
                }
                self.best_cost = acc;
                self.best_plan = Some(OperationalSolution { railcars });
            }
            Some(false) => {}
            None => self.exhausted = true,
        }
    }
}

/// Inner search: put every item into a bin so each bin ends with exactly
/// its pattern counts and an arrangeable weight set.
struct Packer<'s> {
    catalog: &'s RailcarCatalog,
    needs: Vec<Vec<u32>>,
    types: Vec<usize>,
    keys: Vec<usize>,
    bins: Vec<Vec<(usize, f64)>>,
    nodes: &'s mut u64,
    budget: u64,
}

impl Packer<'_> {
    /// `None` when the node budget runs out.
    fn pack(&mut self, items: &[(usize, f64)], next: usize) -> Option<bool> {
        *self.nodes += 1;
        if *self.nodes > self.budget {
            return None;
        }
        if next == items.len() {
            // Every bin was checked in full when its last item went in.
            return Some(true);
        }
        let (class, weight) = items[next];
        for b in 0..self.bins.len() {
            if self.needs[b][class] == 0 {
                continue;
            }
            // Interchangeable bins: same pattern and same contents so far.
            if (0..b).any(|e| self.keys[e] == self.keys[b] && self.needs[e] == self.needs[b] && self.bins[e] == self.bins[b]) {
                continue;
            }
            self.bins[b].push((class, weight));
            self.needs[b][class] -= 1;
            let car = &self.catalog.railcars()[self.types[b]];
            let fits = if self.needs[b].iter().all(|&n| n == 0) {
                car.arrange(&self.bins[b]).is_some()
            } else {
                car.arrange_relaxed(&self.bins[b])
            };
            let found = if fits { self.pack(items, next + 1) } else { Some(false) };
            if found != Some(false) {
                // Leave the placement in the bins for the caller.
                return found;
            }
            self.needs[b][class] += 1;
            self.bins[b].pop();
        }
        Some(false)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_instance(railcars: Vec<u32>, weights: Vec<Vec<f64>>) -> Instance {
        let containers = weights.iter().map(|w| w.len() as u32).collect();
        Instance::with_weights(Booking::new(railcars, containers), weights)
    }

    #[test]
    fn mixed_pair_on_r0() {
        let cat = RailcarCatalog::toy();
        let inst = toy_instance(vec![1, 0], vec![vec![20.0], vec![25.0]]);
        let sol = solve_full_info(&inst, &cat, &SolverConfig::default()).unwrap();
        let d = synthesize(&sol, &cat);
        assert_eq!(d.loadings(), vec![cat.find_pattern(0, &[1, 1]).unwrap()]);
        assert_eq!(cost_of_solution(&inst, &cat, &sol).unwrap(), Cost { loaded_containers: 2, used_platforms: 1, used_railcars: 1 });
    }

    #[test]
    fn weight_cap_blocks_second_container() {
        let cat = RailcarCatalog::toy();
        let inst = toy_instance(vec![1, 0], vec![vec![35.0, 35.0], vec![]]);
        let sol = solve_full_info(&inst, &cat, &SolverConfig::default()).unwrap();
        assert_eq!(synthesize(&sol, &cat).loadings(), vec![cat.find_pattern(0, &[1, 0]).unwrap()]);
    }

    #[test]
    fn no_containers_means_empty_plan() {
        let cat = RailcarCatalog::toy();
        let inst = toy_instance(vec![3, 2], vec![vec![], vec![]]);
        let sol = solve_full_info(&inst, &cat, &SolverConfig::default()).unwrap();
        assert!(sol.railcars.is_empty());
        assert_eq!(cost_of_solution(&inst, &cat, &sol).unwrap(), Cost::default());
    }

    #[test]
    fn prefers_fewer_railcars_at_equal_platforms() {
        let cat = RailcarCatalog::toy();
        // Four light 40ft boxes: 2 x R0 (2 platforms, 2 cars) vs 1 x R1 (4,0) (2 platforms, 1 car).
        let inst = toy_instance(vec![2, 1], vec![vec![10.0; 4], vec![]]);
        let sol = solve_full_info(&inst, &cat, &SolverConfig::default()).unwrap();
        assert_eq!(synthesize(&sol, &cat).loadings(), vec![cat.find_pattern(1, &[4, 0]).unwrap()]);
    }

    #[test]
    fn missing_weights_is_an_error() {
        let cat = RailcarCatalog::toy();
        let inst = Instance::new(Booking::new(vec![1, 0], vec![1, 0]));
        assert!(matches!(solve_full_info(&inst, &cat, &SolverConfig::default()), Err(OracleError::MissingWeights)));
    }

    #[test]
    fn tiny_budget_returns_incumbent() {
        let cat = RailcarCatalog::toy();
        let inst = toy_instance(vec![3, 2], vec![vec![10.0; 6], vec![12.0; 3]]);
        match solve_full_info(&inst, &cat, &SolverConfig { node_budget: 3 }) {
            Err(OracleError::Budget { incumbent, .. }) => {
                cost_of_solution(&inst, &cat, &incumbent).unwrap();
            }
            other => panic!("expected budget error, got {other:?}"),
        }
    }

    #[test]
    fn synthesize_counts_multiplicity() {
        let cat = RailcarCatalog::toy();
        let p = cat.find_pattern(1, &[2, 0]).unwrap();
        let q = cat.find_pattern(0, &[1, 1]).unwrap();
        let car = |t, pat| LoadedRailcar { railcar_type: t, pattern: pat, platforms: vec![] };
        let d = synthesize(&OperationalSolution { railcars: vec![car(1, p), car(0, q), car(1, p)] }, &cat);
        assert_eq!(d.multiplicity(p), 2);
        assert_eq!(d.loadings(), vec![q, p, p]);
        assert!(synthesize(&OperationalSolution::default(), &cat).is_empty());
    }

    #[test]
    fn cost_checks_availability() {
        let cat = RailcarCatalog::toy();
        let q = cat.find_pattern(0, &[1, 1]).unwrap();
        let d = SolutionDescription::from_patterns([q]);
        let b = Booking::new(vec![1, 0], vec![1, 1]);
        assert_eq!(cost(&b, &cat, &d).unwrap(), Cost { loaded_containers: 2, used_platforms: 1, used_railcars: 1 });
        assert_eq!(cost(&b, &cat, &SolutionDescription::new()).unwrap(), Cost::default());
        let over = SolutionDescription::from_patterns([q, q]);
        let err = cost(&b, &cat, &over).unwrap_err();
        assert!(err.to_string().contains("railcar type 0"), "{err}");
    }
}
