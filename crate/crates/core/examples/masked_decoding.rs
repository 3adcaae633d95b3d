//! Beam search under the feasibility mask with a hand-written scorer that
//! prefers the largest pattern ids. The mask keeps every phrase within the
//! booking whatever the scores say.

use loadcast::catalog::RailcarCatalog;
use loadcast::decoding::{apply_mask, beam_search, default_max_len, init_state, mask, PrefixModel};
use loadcast::instances::Booking;
use loadcast::language::{Lexicon, TokenId};

fn main() {
    let lexicon = Lexicon::new(&RailcarCatalog::toy());
    let booking = Booking::new(vec![1, 1], vec![3, 1]);

    let first = mask(&init_state(&booking), &lexicon).unwrap();
    let allowed: Vec<&str> = (0..first.len()).filter(|&t| first.allows(t)).map(|t| lexicon.target().token(t)).collect();
    println!("allowed first tokens: {}", allowed.join(" "));
    let uniform = vec![0.0; lexicon.target().len()];
    let p = apply_mask(&uniform, &first).unwrap();
    println!("uniform scores after masking: {:.3} on each of {} tokens", p.iter().cloned().fold(0.0, f64::max), first.count());

    let eos = lexicon.eos();
    let greedy_big = PrefixModel(move |_: &Booking, _: &[TokenId], logits: &mut [f64]| {
        for (t, l) in logits.iter_mut().enumerate() {
            *l = if t == eos { -1.0 } else { 0.1 * t as f64 };
        }
    });
    let max_len = default_max_len(&booking, &lexicon);
    for width in [1, 5] {
        let hyp = beam_search(&greedy_big, &booking, &lexicon, width, max_len).unwrap();
        println!("width {width}: {} (log p = {:.4})", lexicon.target().render(&hyp.tokens), hyp.log_prob);
    }
}
