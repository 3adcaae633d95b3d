//! Feasibility tracking, the output probability mask and beam search.
//!
//! Masked tokens get an additive `-inf` before normalization, so their
//! probability is exactly zero and the rest sum to one.

use std::cmp::Ordering;

use thiserror::Error;

use crate::instances::Booking;
use crate::language::{Lexicon, Role, TokenId};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DecodeError {
    #[error("state is terminal")]
    Terminal,
    #[error("token {token} is masked at position {position}")]
    Infeasible { token: TokenId, position: usize },
    #[error("every token is masked")]
    AllMasked,
    #[error("max_len must be at least 2, got {0}")]
    MaxLen(usize),
}

/// What is still available after a prefix of the target phrase.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DecodeState {
    pub railcars: Vec<u32>,
    pub containers: Vec<u32>,
    pub position: usize,
    pub last: Option<TokenId>,
    pub terminal: bool,
}

pub fn init_state(booking: &Booking) -> DecodeState {
    DecodeState {
        railcars: booking.railcars.clone(),
        containers: booking.containers.clone(),
        position: 0,
        last: None,
        terminal: false,
    }
}

/// Feasibility of every target token in a state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask(pub Vec<bool>);

impl Mask {
    pub fn allows(&self, token: TokenId) -> bool {
        self.0.get(token).copied().unwrap_or(false)
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn only(len: usize, token: TokenId) -> Self {
        let mut m = vec![false; len];
        m[token] = true;
        Mask(m)
    }
}

/// Token feasibility:
/// * a pattern needs a free railcar of its type and enough containers of
///   each length, and is never allowed after `BLANK`;
/// * `BLANK` only in first position;
/// * `EOS` anywhere but first position.
pub fn mask(state: &DecodeState, lexicon: &Lexicon) -> Result<Mask, DecodeError> {
    if state.terminal {
        return Err(DecodeError::Terminal);
    }
    let catalog = lexicon.catalog();
    let mut m = vec![false; lexicon.target().len()];
    if state.last == Some(lexicon.blank()) {
        m[lexicon.eos()] = true;
        return Ok(Mask(m));
    }
    for (j, &free) in state.railcars.iter().enumerate() {
        if free == 0 {
            continue;
        }
        for p in catalog.patterns_of(j) {
            if p.counts.iter().zip(&state.containers).all(|(need, have)| need <= have) {
                m[catalog.global_index(j, p.local_index)] = true;
            }
        }
    }
    m[lexicon.blank()] = state.position == 0;
    m[lexicon.eos()] = state.position >= 1;
    Ok(Mask(m))
}

/// Log-probabilities of a masked softmax: `-inf` on masked entries.
pub fn masked_log_softmax(logits: &[f64], mask: &Mask) -> Result<Vec<f64>, DecodeError> {
    let mut out = vec![f64::NEG_INFINITY; logits.len()];
    masked_log_softmax_into(logits, mask, &mut out)?;
    Ok(out)
}

pub fn masked_log_softmax_into(logits: &[f64], mask: &Mask, out: &mut [f64]) -> Result<(), DecodeError> {
    let max = logits
        .iter()
        .zip(&mask.0)
        .filter(|(_, &ok)| ok)
        .map(|(&x, _)| x)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(DecodeError::AllMasked);
    }
    let sum: f64 = logits.iter().zip(&mask.0).filter(|(_, &ok)| ok).map(|(&x, _)| (x - max).exp()).sum();
    let log_z = max + sum.ln();
    for ((o, &x), &ok) in out.iter_mut().zip(logits).zip(&mask.0) {
        *o = if ok { x - log_z } else { f64::NEG_INFINITY };
    }
    Ok(())
}

/// Masked, renormalized probabilities from logits (or from log-probabilities).
pub fn apply_mask(logits: &[f64], mask: &Mask) -> Result<Vec<f64>, DecodeError> {
    Ok(masked_log_softmax(logits, mask)?.into_iter().map(f64::exp).collect())
}

/// Consumes `token`, checking it against the mask first.
pub fn advance(state: &DecodeState, token: TokenId, lexicon: &Lexicon) -> Result<DecodeState, DecodeError> {
    let m = mask(state, lexicon)?;
    if !m.allows(token) {
        return Err(DecodeError::Infeasible { token, position: state.position });
    }
    Ok(advance_unchecked(state, token, lexicon))
}

pub(crate) fn advance_unchecked(state: &DecodeState, token: TokenId, lexicon: &Lexicon) -> DecodeState {
    let mut next = state.clone();
    match lexicon.target_role(token) {
        Role::Pattern(p) => {
            let pattern = lexicon.catalog().pattern(p);
            next.railcars[pattern.railcar_type] -= 1;
            for (have, need) in next.containers.iter_mut().zip(&pattern.counts) {
                *have -= need;
            }
        }
        Role::Eos => next.terminal = true,
        _ => {}
    }
    next.position += 1;
    next.last = Some(token);
    next
}

/// A next-token scorer driven step by step.
pub trait StepModel {
    type State: Clone;

    fn start(&self, booking: &Booking) -> Self::State;

    /// Writes unnormalized scores for the next token into `logits` given the
    /// previously emitted token (`None` at the first step) and returns the
    /// successor state.
    fn step(&self, state: &Self::State, prev: Option<TokenId>, logits: &mut [f64]) -> Self::State;
}

/// Any closure over the prefix emitted so far is a model.
pub struct PrefixModel<F>(pub F);

impl<F: Fn(&Booking, &[TokenId], &mut [f64])> StepModel for PrefixModel<F> {
    type State = (Booking, Vec<TokenId>);

    fn start(&self, booking: &Booking) -> Self::State {
        (booking.clone(), Vec::new())
    }

    fn step(&self, state: &Self::State, prev: Option<TokenId>, logits: &mut [f64]) -> Self::State {
        let mut prefix = state.1.clone();
        prefix.extend(prev);
        (self.0)(&state.0, &prefix, logits);
        (state.0.clone(), prefix)
    }
}

/// Decoded phrase and its masked log-probability.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub tokens: Vec<TokenId>,
    pub log_prob: f64,
}

/// Mask with the length cap applied: at the last allowed position only
/// `EOS` remains.
pub fn capped_mask(state: &DecodeState, lexicon: &Lexicon, max_len: usize) -> Result<Mask, DecodeError> {
    if state.position + 1 >= max_len && state.position >= 1 {
        return Ok(Mask::only(lexicon.target().len(), lexicon.eos()));
    }
    mask(state, lexicon)
}

/// Default length cap: one loading per platform at most, plus `EOS` and one
/// spare position.
pub fn default_max_len(booking: &Booking, lexicon: &Lexicon) -> usize {
    booking.total_platforms(lexicon.catalog()) as usize + 2
}

fn by_score_then_tokens(a: &(f64, Vec<TokenId>), b: &(f64, Vec<TokenId>)) -> Ordering {
    b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1))
}

/// Width-`width` beam search over masked distributions. Returns the
/// best-scoring finished phrase; ties go to the lexicographically smallest
/// token sequence.
pub fn beam_search<M: StepModel>(
    model: &M,
    booking: &Booking,
    lexicon: &Lexicon,
    width: usize,
    max_len: usize,
) -> Result<Hypothesis, DecodeError> {
    if max_len < 2 {
        return Err(DecodeError::MaxLen(max_len));
    }
    let width = width.max(1);
    let vocab = lexicon.target().len();
    struct Live<S> {
        tokens: Vec<TokenId>,
        score: f64,
        state: DecodeState,
        model: S,
    }
    let mut live = vec![Live { tokens: Vec::new(), score: 0.0, state: init_state(booking), model: model.start(booking) }];
    let mut finished: Vec<(f64, Vec<TokenId>)> = Vec::new();
    let mut logits = vec![0.0; vocab];
    let mut log_probs = vec![0.0; vocab];

    while !live.is_empty() {
        // (score, hypothesis, token, successor model state)
        let mut pool: Vec<(f64, usize, TokenId)> = Vec::new();
        let mut successors = Vec::with_capacity(live.len());
        for (h, hyp) in live.iter().enumerate() {
            let m = capped_mask(&hyp.state, lexicon, max_len)?;
            let next = model.step(&hyp.model, hyp.tokens.last().copied(), &mut logits);
            masked_log_softmax_into(&logits, &m, &mut log_probs)?;
            for (tok, &lp) in log_probs.iter().enumerate() {
                if m.0[tok] {
                    pool.push((hyp.score + lp, h, tok));
                }
            }
            successors.push(next);
        }
        pool.sort_by(|a, b| {
            b.0.total_cmp(&a.0)
                .then_with(|| live[a.1].tokens.iter().chain([&a.2]).cmp(live[b.1].tokens.iter().chain([&b.2])))
        });
        pool.truncate(width);

        let mut next_live = Vec::with_capacity(pool.len());
        for (score, h, tok) in pool {
            let mut tokens = live[h].tokens.clone();
            tokens.push(tok);
            if tok == lexicon.eos() {
                finished.push((score, tokens));
            } else {
                next_live.push(Live {
                    tokens,
                    score,
                    state: advance_unchecked(&live[h].state, tok, lexicon),
                    model: successors[h].clone(),
                });
            }
        }
        live = next_live;
        // Scores never increase, so a finished phrase strictly ahead of every
        // live one cannot be overtaken.
        let best_finished = finished.iter().map(|f| f.0).fold(f64::NEG_INFINITY, f64::max);
        let best_live = live.iter().map(|l| l.score).fold(f64::NEG_INFINITY, f64::max);
        if best_finished > best_live {
            break;
        }
    }
    finished.sort_by(by_score_then_tokens);
    let (log_prob, tokens) = finished.into_iter().next().expect("the length cap forces EOS");
    Ok(Hypothesis { tokens, log_prob })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::RailcarCatalog;

    fn toy() -> Lexicon {
        Lexicon::new(&RailcarCatalog::toy())
    }

    #[test]
    fn init_state_copies_availability() {
        let s = init_state(&Booking::new(vec![1, 1], vec![4, 4]));
        assert_eq!((s.railcars.as_slice(), s.containers.as_slice(), s.position, s.terminal), (&[1, 1][..], &[4, 4][..], 0, false));
    }

    #[test]
    fn empty_booking_allows_only_blank() {
        let lex = toy();
        let m = mask(&init_state(&Booking::new(vec![0, 0], vec![0, 0])), &lex).unwrap();
        assert_eq!(m.count(), 1);
        assert!(m.allows(lex.blank()));
    }

    #[test]
    fn no_40ft_left_masks_every_pattern_with_40ft() {
        let lex = toy();
        let cat = lex.catalog();
        let m = mask(&init_state(&Booking::new(vec![3, 3], vec![0, 5])), &lex).unwrap();
        for p in 0..cat.pattern_count() {
            if cat.pattern(p).counts[0] >= 1 {
                assert!(!m.allows(p));
            }
        }
        assert!(m.allows(cat.find_pattern(0, &[0, 1]).unwrap()));
    }

    #[test]
    fn eos_masked_first_and_only_eos_after_blank() {
        let lex = toy();
        let s = init_state(&Booking::new(vec![1, 1], vec![4, 4]));
        assert!(!mask(&s, &lex).unwrap().allows(lex.eos()));
        let after_blank = advance(&s, lex.blank(), &lex).unwrap();
        let m = mask(&after_blank, &lex).unwrap();
        assert_eq!(m, Mask::only(lex.target().len(), lex.eos()));
    }

    #[test]
    fn apply_mask_examples() {
        let m = Mask(vec![true, true, false, false]);
        assert_eq!(apply_mask(&[0.0; 4], &m).unwrap(), vec![0.5, 0.5, 0.0, 0.0]);
        let all = Mask(vec![true; 3]);
        let p = apply_mask(&[0.7f64.ln(), 0.2f64.ln(), 0.1f64.ln()], &all).unwrap();
        for (a, b) in p.iter().zip([0.7, 0.2, 0.1]) {
            assert!((a - b).abs() < 1e-15);
        }
        let first = Mask(vec![true, false, false]);
        assert_eq!(apply_mask(&[0.7f64.ln(), 0.2f64.ln(), 0.1f64.ln()], &first).unwrap(), vec![1.0, 0.0, 0.0]);
        assert_eq!(apply_mask(&[1.0, 2.0], &Mask(vec![false, false])), Err(DecodeError::AllMasked));
    }

    #[test]
    fn advance_updates_remainders() {
        let lex = toy();
        let cat = lex.catalog();
        let s = init_state(&Booking::new(vec![1, 0], vec![2, 1]));
        let p = cat.find_pattern(0, &[1, 1]).unwrap();
        let next = advance(&s, p, &lex).unwrap();
        assert_eq!((next.railcars, next.containers), (vec![0, 0], vec![1, 0]));
        assert_eq!(advance(&s, p, &lex).unwrap().position, 1);
        let done = advance(&advance(&s, p, &lex).unwrap(), lex.eos(), &lex).unwrap();
        assert!(done.terminal);
        assert_eq!(mask(&done, &lex), Err(DecodeError::Terminal));
        let none_left = advance(&s, p, &lex).unwrap();
        assert_eq!(advance(&none_left, p, &lex), Err(DecodeError::Infeasible { token: p, position: 1 }));
    }

    #[test]
    fn one_hot_model_is_followed_at_any_width() {
        let lex = toy();
        let cat = lex.catalog().clone();
        let target = vec![cat.find_pattern(1, &[2, 0]).unwrap(), cat.find_pattern(0, &[0, 1]).unwrap(), lex.eos()];
        let t = target.clone();
        let model = PrefixModel(move |_: &Booking, prefix: &[TokenId], logits: &mut [f64]| {
            logits.fill(-30.0);
            logits[t[prefix.len()]] = 30.0;
        });
        let b = Booking::new(vec![2, 2], vec![5, 5]);
        for w in [1, 2, 5, 14] {
            assert_eq!(beam_search(&model, &b, &lex, w, 8).unwrap().tokens, target);
        }
    }

    #[test]
    fn empty_booking_decodes_to_blank_eos() {
        let lex = toy();
        let model = PrefixModel(|_: &Booking, _: &[TokenId], logits: &mut [f64]| logits.fill(0.0));
        let h = beam_search(&model, &Booking::new(vec![0, 0], vec![0, 0]), &lex, 5, 2).unwrap();
        assert_eq!(h.tokens, vec![lex.blank(), lex.eos()]);
        assert_eq!(h.log_prob, 0.0);
    }

    #[test]
    fn max_len_below_two_is_rejected() {
        let lex = toy();
        let model = PrefixModel(|_: &Booking, _: &[TokenId], logits: &mut [f64]| logits.fill(0.0));
        assert_eq!(beam_search(&model, &Booking::new(vec![1, 0], vec![1, 0]), &lex, 5, 1), Err(DecodeError::MaxLen(1)));
    }
}
