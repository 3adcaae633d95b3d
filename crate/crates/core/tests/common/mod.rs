//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::collections::HashMap;

use loadcast::catalog::{RailcarCatalog, RailcarType};
use loadcast::checkpoint::ParamLayout;
use loadcast::decoding::{advance, capped_mask, masked_log_softmax, StepModel};
use loadcast::instances::{sample_instance, sample_weights, stream_rng, Booking, DataClass, Instance};
use loadcast::language::{Lexicon, Pair, TokenId};
use loadcast::oracle::{solve_full_info, synthesize, Cost, SolverConfig};
use loadcast::training::{batch_gradient, Objective};

/// Tries every injective placement of `items` onto the car's slots (slot
/// `2q` is the bottom of platform `q`, `2q + 1` its top). Returns the fewest
/// non-empty platforms over valid placements; weights are checked only when
/// `weighted`.
fn best_placement(car: &RailcarType, items: &[(usize, f64)], weighted: bool) -> Option<u32> {
    fn rec(car: &RailcarType, items: &[(usize, f64)], weighted: bool, slots: &mut Vec<Option<(usize, f64)>>, k: usize, best: &mut Option<u32>) {
        if k == items.len() {
            let mut total = 0.0;
            let mut used = 0;
            for (q, spec) in car.platforms.iter().enumerate() {
                let (b, t) = (slots[2 * q], slots[2 * q + 1]);
                if t.is_some() && b.is_none() {
                    return;
                }
                let w = b.map_or(0.0, |c| c.1) + t.map_or(0.0, |c| c.1);
                if weighted && w > spec.weight_cap {
                    return;
                }
                total += w;
                used += u32::from(b.is_some());
            }
            if weighted && total > car.weight_cap {
                return;
            }
            *best = Some(best.map_or(used, |x: u32| x.min(used)));
            return;
        }
        let (class, _) = items[k];
        for s in 0..slots.len() {
            let spec = &car.platforms[s / 2];
            let allowed = if s % 2 == 0 { &spec.allowed_bottom } else { &spec.allowed_top };
            if slots[s].is_none() && allowed.contains(&class) {
                slots[s] = Some(items[k]);
                rec(car, items, weighted, slots, k + 1, best);
                slots[s] = None;
            }
        }
    }
    if items.len() > 2 * car.platforms.len() {
        return None;
    }
    let mut best = None;
    rec(car, items, weighted, &mut vec![None; 2 * car.platforms.len()], 0, &mut best);
    best
}

/// Optimal cost by enumerating every assignment of containers to railcars.
/// Only sensible for a handful of railcars and containers.
pub fn brute_force_cost(instance: &Instance, catalog: &RailcarCatalog) -> Cost {
    let weights = instance.weights.as_ref().expect("weights");
    let items: Vec<(usize, f64)> = weights.iter().enumerate().flat_map(|(l, ws)| ws.iter().map(move |&w| (l, w))).collect();
    let cars: Vec<usize> = instance.booking.railcars.iter().enumerate().flat_map(|(j, &r)| std::iter::repeat_n(j, r as usize)).collect();
    let n = items.len();
    assert!(n <= 16 && cars.len() <= 4);
    // Per car and container subset: (containers, platforms) when feasible.
    let mut min_platforms: HashMap<(usize, Vec<u32>), u32> = HashMap::new();
    let mut options: Vec<Vec<(u32, (u32, u32))>> = Vec::new();
    for &j in &cars {
        let car = &catalog.railcars()[j];
        let mut opts = Vec::new();
        for subset in 1u32..(1 << n) {
            let chosen: Vec<(usize, f64)> = (0..n).filter(|i| subset >> i & 1 == 1).map(|i| items[i]).collect();
            if best_placement(car, &chosen, true).is_none() {
                continue;
            }
            let mut counts = vec![0u32; catalog.num_lengths()];
            for c in &chosen {
                counts[c.0] += 1;
            }
            let p = *min_platforms
                .entry((j, counts))
                .or_insert_with(|| best_placement(car, &chosen, false).expect("feasible with weights implies without"));
            opts.push((subset, (chosen.len() as u32, p)));
        }
        options.push(opts);
    }
    fn rec(options: &[Vec<(u32, (u32, u32))>], c: usize, used: u32, acc: Cost, best: &mut Cost) {
        if c == options.len() {
            if acc.preference(best).is_gt() {
                *best = acc;
            }
            return;
        }
        rec(options, c + 1, used, acc, best);
        for &(subset, (k, p)) in &options[c] {
            if subset & used == 0 {
                let next = Cost {
                    loaded_containers: acc.loaded_containers + k,
                    used_platforms: acc.used_platforms + p,
                    used_railcars: acc.used_railcars + 1,
                };
                rec(options, c + 1, used | subset, next, best);
            }
        }
    }
    let mut best = Cost::default();
    rec(&options, 0, 0, Cost::default(), &mut best);
    best
}

/// Minimum total L1 distance over all pairings of two equally long lists.
pub fn brute_force_assignment(actual: &[Vec<u32>], predicted: &[Vec<u32>]) -> u64 {
    fn rec(a: &[Vec<u32>], p: &[Vec<u32>], i: usize, taken: &mut Vec<bool>, acc: u64, best: &mut u64) {
        if i == a.len() {
            *best = (*best).min(acc);
            return;
        }
        for j in 0..p.len() {
            if !taken[j] {
                taken[j] = true;
                let d: u64 = a[i].iter().zip(&p[j]).map(|(x, y)| x.abs_diff(*y) as u64).sum();
                rec(a, p, i + 1, taken, acc + d, best);
                taken[j] = false;
            }
        }
    }
    assert_eq!(actual.len(), predicted.len());
    let mut best = u64::MAX;
    rec(actual, predicted, 0, &mut vec![false; predicted.len()], 0, &mut best);
    best
}

/// Highest-scoring complete phrase under the masked model, found by visiting
/// every phrase of at most `max_len` tokens. Ties go to the lexicographically
/// smallest phrase.
pub fn exhaustive_best<M: StepModel>(model: &M, booking: &Booking, lexicon: &Lexicon, max_len: usize) -> (Vec<TokenId>, f64) {
    fn rec<M: StepModel>(
        model: &M,
        lexicon: &Lexicon,
        max_len: usize,
        state: &loadcast::decoding::DecodeState,
        ms: &M::State,
        prefix: &mut Vec<TokenId>,
        score: f64,
        best: &mut Option<(Vec<TokenId>, f64)>,
    ) {
        let mask = capped_mask(state, lexicon, max_len).unwrap();
        let mut logits = vec![0.0; lexicon.target().len()];
        let next = model.step(ms, prefix.last().copied(), &mut logits);
        let lp = masked_log_softmax(&logits, &mask).unwrap();
        for tok in 0..logits.len() {
            if !mask.allows(tok) {
                continue;
            }
            let s = score + lp[tok];
            prefix.push(tok);
            if tok == lexicon.eos() {
                let better = match best {
                    None => true,
                    Some((bt, bs)) => s > *bs || (s == *bs && prefix[..] < bt[..]),
                };
                if better {
                    *best = Some((prefix.clone(), s));
                }
            } else {
                let st = advance(state, tok, lexicon).unwrap();
                rec(model, lexicon, max_len, &st, &next, prefix, s, best);
            }
            prefix.pop();
        }
    }
    let mut best = None;
    let state = loadcast::decoding::init_state(booking);
    rec(model, lexicon, max_len, &state, &model.start(booking), &mut Vec::new(), 0.0, &mut best);
    best.expect("some phrase ends")
}

/// Railcars and containers consumed by a phrase, tallied straight from the
/// catalog patterns. `None` if the phrase is not `BLANK EOS` or a nonempty
/// run of pattern tokens followed by one `EOS`.
pub fn phrase_usage(tokens: &[TokenId], lexicon: &Lexicon) -> Option<(Vec<u32>, Vec<u32>)> {
    let cat = lexicon.catalog();
    let p = cat.pattern_count();
    let (eos, blank) = (p, p + 1);
    let mut railcars = vec![0; cat.num_types()];
    let mut containers = vec![0; cat.num_lengths()];
    match tokens {
        [b, e] if *b == blank && *e == eos => return Some((railcars, containers)),
        [body @ .., e] if *e == eos && !body.is_empty() => {
            for &t in body {
                if t >= p {
                    return None;
                }
                let pat = cat.pattern(t);
                railcars[pat.railcar_type] += 1;
                for (c, n) in containers.iter_mut().zip(&pat.counts) {
                    *c += n;
                }
            }
        }
        _ => return None,
    }
    Some((railcars, containers))
}

/// Draws one phrase token by token from the masked model, checking at every
/// step that the masked distribution sums to one and is exactly zero off the
/// mask.
pub fn sample_phrase<M: StepModel, R: rand::Rng>(model: &M, booking: &Booking, lexicon: &Lexicon, rng: &mut R) -> Result<Vec<TokenId>, String> {
    use loadcast::decoding::{apply_mask, default_max_len, init_state};
    let max_len = default_max_len(booking, lexicon);
    let mut state = init_state(booking);
    let mut ms = model.start(booking);
    let mut out: Vec<TokenId> = Vec::new();
    let mut logits = vec![0.0; lexicon.target().len()];
    loop {
        let mask = capped_mask(&state, lexicon, max_len).map_err(|e| e.to_string())?;
        ms = model.step(&ms, out.last().copied(), &mut logits);
        let p = apply_mask(&logits, &mask).map_err(|e| e.to_string())?;
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(format!("masked distribution sums to {sum}"));
        }
        if let Some(t) = (0..p.len()).find(|&t| !mask.allows(t) && p[t] != 0.0) {
            return Err(format!("masked token {t} has probability {}", p[t]));
        }
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut tok = (0..p.len()).rev().find(|&t| p[t] > 0.0).ok_or("no token has positive probability")?;
        for (t, &q) in p.iter().enumerate() {
            acc += q;
            if q > 0.0 && u < acc {
                tok = t;
                break;
            }
        }
        out.push(tok);
        if tok == lexicon.eos() {
            return Ok(out);
        }
        state = advance(&state, tok, lexicon).map_err(|e| e.to_string())?;
    }
}

/// True when the phrase is well formed and stays within the booking.
pub fn respects_booking(tokens: &[TokenId], booking: &Booking, lexicon: &Lexicon) -> bool {
    match phrase_usage(tokens, lexicon) {
        Some((r, c)) => {
            r.iter().zip(&booking.railcars).all(|(u, a)| u <= a) && c.iter().zip(&booking.containers).all(|(u, a)| u <= a)
        }
        None => false,
    }
}

const STEP: f64 = 1e-4;

/// Worst relative error over blocks, as `(block, ||analytic - numeric|| / max norm)`.
pub fn gradient_errors<O: Objective>(model: &mut O, batch: &[&O::Example]) -> Vec<(String, f64)> {
    let (_, analytic) = batch_gradient(model, batch, None).unwrap();
    let layout: ParamLayout = model.layout().clone();
    let mut out = Vec::new();
    for block in layout.blocks() {
        let mut numeric = Vec::new();
        for i in block.range() {
            let orig = model.params()[i];
            model.params_mut()[i] = orig + STEP;
            let (up, _) = batch_gradient(model, batch, None).unwrap();
            model.params_mut()[i] = orig - STEP;
            let (down, _) = batch_gradient(model, batch, None).unwrap();
            model.params_mut()[i] = orig;
            numeric.push((up - down) / (2.0 * STEP));
        }
        let a = &analytic[block.range()];
        let diff: f64 = a.iter().zip(&numeric).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nn: f64 = numeric.iter().map(|x| x * x).sum::<f64>().sqrt();
        let rel = if na.max(nn) < 1e-10 { diff } else { diff / na.max(nn) };
        out.push((block.name.clone(), rel));
    }
    out
}

pub fn toy_pairs(n: usize, seed: u64) -> Vec<Pair> {
    let cat = RailcarCatalog::toy();
    let lex = Lexicon::new(&cat);
    let class = DataClass::ranged("small", (4, 10), (2, 5));
    (0..n as u64)
        .map(|i| {
            let mut rng = stream_rng(seed, i);
            let b = sample_instance(&class, &cat, &mut rng);
            let inst = sample_weights(&b, &cat, &mut rng);
            let d = synthesize(&solve_full_info(&inst, &cat, &SolverConfig::default()).unwrap(), &cat);
            Pair { source: lex.encode_input(&b).unwrap(), target: lex.encode_output(&d).unwrap(), booking: b }
        })
        .collect()
}
