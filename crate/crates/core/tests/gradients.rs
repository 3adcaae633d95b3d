//! Analytic gradients against central finite differences.

mod common;

use loadcast::baseline::{transform_dataset, Baseline, BaselineDims, ExpandedExample};
use loadcast::catalog::RailcarCatalog;
use loadcast::language::{Lexicon, Pair};
use loadcast::nmt::{Nmt, NmtDims};
use loadcast::training::Objective;

#[test]
fn nmt_gradients_match_finite_differences() {
    let lex = Lexicon::new(&RailcarCatalog::toy());
    let pairs = common::toy_pairs(3, 17);
    let batch: Vec<&Pair> = pairs.iter().collect();
    for mask in [true, false] {
        let mut m = Nmt::new(&lex, NmtDims { embed: 4, hidden: 5 }, 9, 1.0);
        // Nonzero biases so their gradients are exercised away from zero.
        for b in m.layout().clone().blocks() {
            if b.cols == 1 {
                for (k, p) in m.params_mut()[b.range()].iter_mut().enumerate() {
                    *p = 0.1 * ((k % 5) as f64 - 2.0);
                }
            }
        }
        m.mask_loss = mask;
        for (block, rel) in common::gradient_errors(&mut m, &batch) {
            assert!(rel <= 1e-3, "mask={mask} block {block}: relative error {rel:e}");
        }
    }
}

#[test]
fn baseline_gradients_match_finite_differences() {
    let lex = Lexicon::new(&RailcarCatalog::toy());
    let pairs = common::toy_pairs(3, 23);
    let examples = transform_dataset(&pairs, &lex).unwrap();
    let batch: Vec<&ExpandedExample> = examples.iter().collect();
    for mask in [true, false] {
        let mut m = Baseline::new(&lex, &BaselineDims { hidden: vec![6, 5] }, 4, 1.0);
        for b in m.layout().clone().blocks() {
            if b.cols == 1 {
                for (k, p) in m.params_mut()[b.range()].iter_mut().enumerate() {
                    *p = 0.05 * ((k % 3) as f64 + 1.0);
                }
            }
        }
        m.mask_loss = mask;
        for (block, rel) in common::gradient_errors(&mut m, &batch) {
            assert!(rel <= 1e-3, "mask={mask} block {block}: relative error {rel:e}");
        }
    }
}
