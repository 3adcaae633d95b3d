//! Feedforward next-loading classifier.
//!
//! Each training pair is expanded into one classification example per
//! target token. The features are the booking (railcar and container counts)
//! followed by how many times each output token has been emitted so far;
//! the label is the next token. Generation runs the same masked beam search
//! as the sequence model, with the committed counts as the only memory.

use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{Checkpoint, ParamLayout};
use crate::decoding::{self, beam_search, DecodeState, Mask, StepModel};
use crate::instances::{stream_rng, Booking};
use crate::language::{LanguageError, Lexicon, Pair, Role, TokenId};
use crate::linalg::{axpy, gemv_acc, gemv_t_acc, outer_acc};
use crate::oracle::SolutionDescription;
use crate::training::{Dropout, ModelError, Objective};

pub const KIND: &str = "baseline";

/// Booking counts, then committed counts per output token.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ExpandedExample {
    pub features: Vec<u32>,
    pub label: TokenId,
}

fn feature_len(lexicon: &Lexicon) -> usize {
    lexicon.catalog().num_types() + lexicon.catalog().num_lengths() + lexicon.target().len()
}

/// Features before any token has been emitted.
pub fn initial_features(booking: &Booking, lexicon: &Lexicon) -> Vec<u32> {
    let mut f = Vec::with_capacity(feature_len(lexicon));
    f.extend_from_slice(&booking.railcars);
    f.extend_from_slice(&booking.containers);
    f.resize(feature_len(lexicon), 0);
    f
}

/// Rebuilds the decoding state implied by a feature vector.
pub fn state_from_features(features: &[u32], lexicon: &Lexicon) -> DecodeState {
    let cat = lexicon.catalog();
    let (j, l) = (cat.num_types(), cat.num_lengths());
    let mut railcars = features[..j].to_vec();
    let mut containers = features[j..j + l].to_vec();
    let committed = &features[j + l..];
    for (tok, &n) in committed.iter().enumerate() {
        if let Role::Pattern(p) = lexicon.target_role(tok) {
            let pat = cat.pattern(p);
            railcars[pat.railcar_type] = railcars[pat.railcar_type].saturating_sub(n);
            for (c, k) in containers.iter_mut().zip(&pat.counts) {
                *c = c.saturating_sub(k * n);
            }
        }
    }
    let blank = committed[lexicon.blank()] > 0;
    let eos = committed[lexicon.eos()] > 0;
    let position = committed.iter().map(|&n| n as usize).sum();
    // Only "was the last token BLANK" matters to the mask; otherwise this is
    // the highest committed token, not necessarily the last one emitted.
    let last = if eos {
        Some(lexicon.eos())
    } else if blank {
        Some(lexicon.blank())
    } else {
        committed.iter().rposition(|&n| n > 0)
    };
    DecodeState { railcars, containers, position, last, terminal: eos }
}

/// One example per target token, EOS included.
pub fn transform_pair(pair: &Pair, lexicon: &Lexicon) -> Result<Vec<ExpandedExample>, LanguageError> {
    lexicon.decode_output(&pair.target)?;
    let offset = lexicon.catalog().num_types() + lexicon.catalog().num_lengths();
    let mut features = initial_features(&pair.booking, lexicon);
    let mut out = Vec::with_capacity(pair.target.len());
    for &label in &pair.target {
        out.push(ExpandedExample { features: features.clone(), label });
        features[offset + label] += 1;
    }
    Ok(out)
}

pub fn transform_dataset(pairs: &[Pair], lexicon: &Lexicon) -> Result<Vec<ExpandedExample>, LanguageError> {
    let mut out = Vec::new();
    for (i, p) in pairs.iter().enumerate() {
        out.extend(transform_pair(p, lexicon).map_err(|e| LanguageError::AtLine { line: i + 1, error: Box::new(e) })?);
    }
    Ok(out)
}

/// `features<TAB>label` per line, features space-separated.
pub fn expanded_to_text(examples: &[ExpandedExample], lexicon: &Lexicon) -> String {
    let mut s = String::new();
    for ex in examples {
        let f: Vec<String> = ex.features.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(s, "{}\t{}", f.join(" "), lexicon.target().token(ex.label));
    }
    s
}

pub fn expanded_from_text(text: &str, lexicon: &Lexicon) -> Result<Vec<ExpandedExample>, LanguageError> {
    let n = feature_len(lexicon);
    text.lines()
        .enumerate()
        .map(|(i, line)| {
            let at = |e: LanguageError| LanguageError::AtLine { line: i + 1, error: Box::new(e) };
            let (feat, label) = line.split_once('\t').ok_or_else(|| at(LanguageError::Syntax("missing tab")))?;
            let features = feat
                .split_whitespace()
                .map(|v| v.parse::<u32>().map_err(|_| at(LanguageError::UnknownToken(v.to_string()))))
                .collect::<Result<Vec<_>, _>>()?;
            if features.len() != n {
                return Err(at(LanguageError::SourceLength { got: features.len(), expected: n }));
            }
            let label = lexicon.target().id(label.trim()).ok_or_else(|| at(LanguageError::UnknownToken(label.to_string())))?;
            Ok(ExpandedExample { features, label })
        })
        .collect()
}

/// Multilayer perceptron with ReLU hidden layers and a softmax over output
/// tokens. Inputs are `ln(1 + count)`.
#[derive(Debug, Clone)]
pub struct Baseline {
    lexicon: Lexicon,
    hidden: Vec<usize>,
    layout: ParamLayout,
    /// `(weights, bias)` ranges per layer, output layer last.
    layers: Vec<(std::ops::Range<usize>, std::ops::Range<usize>)>,
    params: Vec<f64>,
    pub mask_loss: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineDims {
    pub hidden: Vec<usize>,
}

impl Default for BaselineDims {
    fn default() -> Self {
        BaselineDims { hidden: vec![256, 256] }
    }
}

impl Baseline {
    pub fn zeros(lexicon: &Lexicon, dims: &BaselineDims) -> Self {
        let mut layout = ParamLayout::new();
        let mut layers = Vec::new();
        let mut input = feature_len(lexicon);
        let sizes: Vec<usize> = dims.hidden.iter().copied().chain([lexicon.target().len()]).collect();
        for (k, &n) in sizes.iter().enumerate() {
            let w = layout.push(&format!("w{k}"), n, input);
            let b = layout.push(&format!("b{k}"), n, 1);
            layers.push((w, b));
            input = n;
        }
        let params = vec![0.0; layout.len()];
        Baseline { lexicon: lexicon.clone(), hidden: dims.hidden.clone(), layout, layers, params, mask_loss: true }
    }

    /// Weights uniform in `±scale * sqrt(6 / fan_in)`, zero biases.
    pub fn new(lexicon: &Lexicon, dims: &BaselineDims, seed: u64, scale: f64) -> Self {
        let mut m = Self::zeros(lexicon, dims);
        let mut rng = stream_rng(seed, 0);
        for (w, _) in m.layers.clone() {
            let fan_in = m.layout.blocks().iter().find(|b| b.range() == w).map_or(1, |b| b.cols);
            let bound = scale * (6.0 / fan_in as f64).sqrt();
            for p in &mut m.params[w] {
                *p = rng.random_range(-bound..=bound);
            }
        }
        m
    }

    pub fn lexicon(&self) -> &Lexicon {
        &self.lexicon
    }

    pub fn dims(&self) -> BaselineDims {
        BaselineDims { hidden: self.hidden.clone() }
    }

    pub fn from_checkpoint(checkpoint: &Checkpoint, lexicon: &Lexicon) -> Result<Self, ModelError> {
        let hidden = checkpoint.dims.iter().map(|&d| d as usize).collect();
        let mut m = Self::zeros(lexicon, &BaselineDims { hidden });
        checkpoint.expect(KIND, lexicon.catalog().hash(), &m.layout)?;
        m.params.copy_from_slice(&checkpoint.values);
        Ok(m)
    }

    fn check_features(&self, features: &[u32]) -> Result<(), ModelError> {
        let n = feature_len(&self.lexicon);
        if features.len() != n {
            return Err(ModelError::Shape(format!("{} features, expected {n}", features.len())));
        }
        Ok(())
    }

    /// Layer activations: input, each hidden layer after ReLU (and
    /// dropout), then the output logits.
    fn activations(&self, features: &[u32], mut dropout: Option<&mut Dropout>) -> (Vec<Vec<f64>>, Vec<Option<Vec<f64>>>) {
        let mut acts = vec![features.iter().map(|&v| (v as f64).ln_1p()).collect::<Vec<f64>>()];
        let mut masks = Vec::new();
        for (k, (w, b)) in self.layers.iter().enumerate() {
            let mut z = self.params[b.clone()].to_vec();
            gemv_acc(&self.params[w.clone()], acts.last().expect("input"), &mut z);
            if k + 1 < self.layers.len() {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
                let m = dropout.as_deref_mut().map(|d| d.mask(z.len()));
                if let Some(m) = &m {
                    z.iter_mut().zip(m).for_each(|(a, b)| *a *= b);
                }
                masks.push(m);
            }
            acts.push(z);
        }
        (acts, masks)
    }

    pub fn logits(&self, features: &[u32]) -> Result<Vec<f64>, ModelError> {
        self.check_features(features)?;
        Ok(self.activations(features, None).0.pop().expect("output layer"))
    }

    /// Unmasked softmax over output tokens.
    pub fn forward(&self, features: &[u32]) -> Result<Vec<f64>, ModelError> {
        let logits = self.logits(features)?;
        Ok(decoding::apply_mask(&logits, &Mask(vec![true; logits.len()]))?)
    }

    fn loss_grad(&self, ex: &ExpandedExample, dropout: Option<&mut Dropout>, grad: Option<&mut [f64]>) -> Result<f64, ModelError> {
        self.check_features(&ex.features)?;
        let vt = self.lexicon.target().len();
        if ex.label >= vt {
            return Err(LanguageError::UnknownToken(format!("#{}", ex.label)).into());
        }
        let mask = if self.mask_loss {
            let state = state_from_features(&ex.features, &self.lexicon);
            let m = decoding::mask(&state, &self.lexicon)?;
            if !m.allows(ex.label) {
                return Err(decoding::DecodeError::Infeasible { token: ex.label, position: state.position }.into());
            }
            m
        } else {
            Mask(vec![true; vt])
        };
        let (acts, masks) = self.activations(&ex.features, dropout);
        let logp = decoding::masked_log_softmax(acts.last().expect("output"), &mask)?;
        let loss = -logp[ex.label];
        let Some(grad) = grad else { return Ok(loss) };
        let mut g: Vec<f64> = logp.iter().map(|v| v.exp()).collect();
        g[ex.label] -= 1.0;
        for k in (0..self.layers.len()).rev() {
            let (w, b) = &self.layers[k];
            if k + 1 < self.layers.len() {
                // Through dropout and ReLU of layer k's output.
                if let Some(m) = &masks[k] {
                    g.iter_mut().zip(m).for_each(|(a, b)| *a *= b);
                }
                g.iter_mut().zip(&acts[k + 1]).for_each(|(a, &out)| {
                    if out <= 0.0 {
                        *a = 0.0
                    }
                });
            }
            outer_acc(&g, &acts[k], &mut grad[w.clone()]);
            axpy(1.0, &g, &mut grad[b.clone()]);
            if k > 0 {
                let mut gin = vec![0.0; acts[k].len()];
                gemv_t_acc(&self.params[w.clone()], &g, &mut gin);
                g = gin;
            }
        }
        Ok(loss)
    }

    /// Most probable feasible plan description by beam search.
    pub fn generate(&self, booking: &Booking, width: usize) -> Result<SolutionDescription, ModelError> {
        let hyp = self.generate_tokens(booking, width)?;
        Ok(self.lexicon.decode_output(&hyp.tokens)?)
    }

    pub fn generate_tokens(&self, booking: &Booking, width: usize) -> Result<decoding::Hypothesis, ModelError> {
        self.lexicon.encode_input(booking)?;
        let max_len = decoding::default_max_len(booking, &self.lexicon);
        Ok(beam_search(self, booking, &self.lexicon, width, max_len)?)
    }
}

impl StepModel for Baseline {
    /// Feature vector: booking plus committed counts.
    type State = Vec<u32>;

    fn start(&self, booking: &Booking) -> Vec<u32> {
        initial_features(booking, &self.lexicon)
    }

    fn step(&self, state: &Vec<u32>, prev: Option<TokenId>, logits: &mut [f64]) -> Vec<u32> {
        let mut f = state.clone();
        if let Some(t) = prev {
            f[self.lexicon.catalog().num_types() + self.lexicon.catalog().num_lengths() + t] += 1;
        }
        let out = self.activations(&f, None).0.pop().expect("output layer");
        logits.copy_from_slice(&out);
        f
    }
}

impl Objective for Baseline {
    type Example = ExpandedExample;

    fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn example_loss(&self, ex: &ExpandedExample, dropout: Option<&mut Dropout>, grad: Option<&mut [f64]>) -> Result<f64, ModelError> {
        self.loss_grad(ex, dropout, grad)
    }

    fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            kind: KIND.into(),
            dims: self.hidden.iter().map(|&h| h as u32).collect(),
            catalog_hash: self.lexicon.catalog().hash().to_string(),
            layout: self.layout.clone(),
            values: self.params.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::RailcarCatalog;

    fn toy() -> Lexicon {
        Lexicon::new(&RailcarCatalog::toy())
    }

    fn pair(lex: &Lexicon, booking: Booking, target: Vec<TokenId>) -> Pair {
        Pair { source: lex.encode_input(&booking).unwrap(), booking, target }
    }

    #[test]
    fn default_catalog_has_169_features_and_157_outputs() {
        let lex = Lexicon::new(&RailcarCatalog::default10());
        assert_eq!(feature_len(&lex), 169);
        let m = Baseline::zeros(&lex, &BaselineDims::default());
        let p = m.forward(&initial_features(&Booking::new(vec![1; 10], vec![5, 5]), &lex)).unwrap();
        assert_eq!(p.len(), 157);
        // Zero weights: uniform.
        assert!(p.iter().all(|&v| (v - 1.0 / 157.0).abs() < 1e-15));
    }

    #[test]
    fn expansion_labels_and_counts() {
        let lex = toy();
        let cat = lex.catalog();
        let p7 = cat.find_pattern(1, &[2, 0]).unwrap();
        let p3 = cat.find_pattern(0, &[1, 1]).unwrap();
        let b = Booking::new(vec![1, 1], vec![3, 1]);
        let ex = transform_pair(&pair(&lex, b.clone(), vec![p7, p3, lex.eos()]), &lex).unwrap();
        assert_eq!(ex.iter().map(|e| e.label).collect::<Vec<_>>(), vec![p7, p3, lex.eos()]);
        assert_eq!(ex[0].features, vec![1, 1, 3, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(ex[1].features[4 + p7], 1);
        assert_eq!(ex[2].features[4 + p3], 1);
        let blank = transform_pair(&pair(&lex, b, vec![lex.blank(), lex.eos()]), &lex).unwrap();
        assert_eq!(blank.iter().map(|e| e.label).collect::<Vec<_>>(), vec![lex.blank(), lex.eos()]);
    }

    #[test]
    fn feature_state_matches_decode_state() {
        let lex = toy();
        let cat = lex.catalog();
        let p = cat.find_pattern(1, &[2, 0]).unwrap();
        let b = Booking::new(vec![1, 2], vec![5, 1]);
        let mut state = decoding::init_state(&b);
        let pr = pair(&lex, b, vec![p, p, lex.eos()]);
        for ex in transform_pair(&pr, &lex).unwrap() {
            let from_features = state_from_features(&ex.features, &lex);
            assert_eq!((&from_features.railcars, &from_features.containers, from_features.position), (&state.railcars, &state.containers, state.position));
            state = decoding::advance(&state, ex.label, &lex).unwrap();
        }
    }

    #[test]
    fn text_roundtrip() {
        let lex = toy();
        let b = Booking::new(vec![1, 0], vec![1, 1]);
        let p = lex.catalog().find_pattern(0, &[1, 1]).unwrap();
        let ex = transform_pair(&pair(&lex, b, vec![p, lex.eos()]), &lex).unwrap();
        let text = expanded_to_text(&ex, &lex);
        assert!(text.lines().next().unwrap().ends_with(&format!("\t{}", lex.target().token(p))));
        assert_eq!(expanded_from_text(&text, &lex).unwrap(), ex);
        assert!(expanded_from_text("1 2\tEOS", &lex).is_err());
    }

    #[test]
    fn empty_booking_generates_empty_plan() {
        let lex = toy();
        let m = Baseline::new(&lex, &BaselineDims { hidden: vec![8] }, 1, 1.0);
        assert!(m.generate(&Booking::new(vec![0, 0], vec![0, 0]), 5).unwrap().is_empty());
        let probs = m.forward(&initial_features(&Booking::new(vec![1, 1], vec![2, 2]), &lex)).unwrap();
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
