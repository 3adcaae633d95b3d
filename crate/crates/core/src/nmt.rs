//! Attention-based encoder-decoder over booking and plan phrases.
//!
//! * Encoder: bidirectional GRU over source embeddings; the annotation of a
//!   position is `[forward state; backward state]`.
//! * Initial decoder state: `tanh(W_init hb_0 + b_init)` from the backward
//!   state at the first position.
//! * Attention: `e_t = v . tanh(W_a s + U_a a_t)`, softmax over positions,
//!   context is the weighted sum of annotations.
//! * Decoder: GRU over `[previous target embedding; context]` (a zero
//!   embedding at the first step).
//! * Output: affine map of `[state; context; previous embedding]`, then the
//!   feasibility-masked softmax.
//!
//! GRU gate rows are stacked as update, reset, candidate.

use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{Checkpoint, ParamLayout};
use crate::decoding::{self, beam_search, init_state, DecodeState, Mask, StepModel};
use crate::instances::{stream_rng, Booking};
use crate::language::{Lexicon, Pair, TokenId};
use crate::linalg::{axpy, dot, gemv_acc, gemv_t_acc, outer_acc, sigmoid};
use crate::oracle::SolutionDescription;
use crate::training::{Dropout, ModelError, Objective};

pub const KIND: &str = "nmt";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NmtDims {
    pub embed: usize,
    pub hidden: usize,
}

impl Default for NmtDims {
    fn default() -> Self {
        NmtDims { embed: 64, hidden: 128 }
    }
}

#[derive(Debug, Clone)]
struct GruIx {
    w: Range<usize>,
    u: Range<usize>,
    b: Range<usize>,
    input: usize,
}

#[derive(Debug, Clone)]
struct Ix {
    src_emb: Range<usize>,
    tgt_emb: Range<usize>,
    enc_fw: GruIx,
    enc_bw: GruIx,
    init_w: Range<usize>,
    init_b: Range<usize>,
    att_w: Range<usize>,
    att_u: Range<usize>,
    att_v: Range<usize>,
    dec: GruIx,
    out_w: Range<usize>,
    out_b: Range<usize>,
}

fn build_layout(dims: NmtDims, vs: usize, vt: usize) -> (ParamLayout, Ix) {
    let (e, h) = (dims.embed, dims.hidden);
    let mut l = ParamLayout::new();
    let gru = |l: &mut ParamLayout, name: &str, input: usize| GruIx {
        w: l.push(&format!("{name}_w"), 3 * h, input),
        u: l.push(&format!("{name}_u"), 3 * h, h),
        b: l.push(&format!("{name}_b"), 3 * h, 1),
        input,
    };
    let src_emb = l.push("src_emb", vs, e);
    let tgt_emb = l.push("tgt_emb", vt, e);
    let enc_fw = gru(&mut l, "enc_fw", e);
    let enc_bw = gru(&mut l, "enc_bw", e);
    let init_w = l.push("init_w", h, h);
    let init_b = l.push("init_b", h, 1);
    let att_w = l.push("att_w", h, h);
    let att_u = l.push("att_u", h, 2 * h);
    let att_v = l.push("att_v", 1, h);
    let dec = gru(&mut l, "dec", e + 2 * h);
    let out_w = l.push("out_w", vt, 3 * h + e);
    let out_b = l.push("out_b", vt, 1);
    let ix = Ix { src_emb, tgt_emb, enc_fw, enc_bw, init_w, init_b, att_w, att_u, att_v, dec, out_w, out_b };
    (l, ix)
}

/// Model parameters with the lexicon they were built for.
#[derive(Debug, Clone)]
pub struct Nmt {
    dims: NmtDims,
    lexicon: Lexicon,
    layout: ParamLayout,
    ix: Ix,
    params: Vec<f64>,
    /// Use the feasibility mask in the loss.
    pub mask_loss: bool,
}

#[derive(Debug, Clone)]
struct GruCache {
    h_prev: Vec<f64>,
    x: Vec<f64>,
    z: Vec<f64>,
    r: Vec<f64>,
    rh: Vec<f64>,
    cand: Vec<f64>,
    h: Vec<f64>,
}

/// Source-side quantities shared by every decoding step.
#[derive(Debug, Clone)]
pub struct Encoded {
    pub annotations: Vec<Vec<f64>>,
    /// `U_a a_t` per position.
    projected: Vec<Vec<f64>>,
    pub initial_state: Vec<f64>,
}

struct StepCache {
    s_prev: Vec<f64>,
    emb_mask: Option<Vec<f64>>,
    alpha: Vec<f64>,
    pre: Vec<Vec<f64>>,
    gru: GruCache,
    out_in: Vec<f64>,
    out_mask: Option<Vec<f64>>,
    probs: Vec<f64>,
}

impl Nmt {
    /// Weights uniform in `[-scale, scale]`, biases zero.
    pub fn new(lexicon: &Lexicon, dims: NmtDims, seed: u64, scale: f64) -> Self {
        let mut m = Self::zeros(lexicon, dims);
        let mut rng = stream_rng(seed, 0);
        for b in m.layout.blocks().to_vec() {
            if b.cols > 1 || b.name == "att_v" {
                for p in &mut m.params[b.range()] {
                    *p = rng.random_range(-scale..=scale);
                }
            }
        }
        m
    }

    pub fn zeros(lexicon: &Lexicon, dims: NmtDims) -> Self {
        let (layout, ix) = build_layout(dims, lexicon.source().len(), lexicon.target().len());
        let params = vec![0.0; layout.len()];
        Nmt { dims, lexicon: lexicon.clone(), layout, ix, params, mask_loss: true }
    }

    pub fn dims(&self) -> NmtDims {
        self.dims
    }

    pub fn lexicon(&self) -> &Lexicon {
        &self.lexicon
    }

    pub fn from_checkpoint(checkpoint: &Checkpoint, lexicon: &Lexicon) -> Result<Self, ModelError> {
        let dims = match checkpoint.dims[..] {
            [embed, hidden, ..] => NmtDims { embed: embed as usize, hidden: hidden as usize },
            _ => return Err(ModelError::Shape("checkpoint dims are incomplete".into())),
        };
        let mut m = Self::zeros(lexicon, dims);
        checkpoint.expect(KIND, lexicon.catalog().hash(), &m.layout)?;
        m.params.copy_from_slice(&checkpoint.values);
        Ok(m)
    }

    fn block(&self, r: &Range<usize>) -> &[f64] {
        &self.params[r.clone()]
    }

    fn embedding(&self, table: &Range<usize>, token: TokenId) -> &[f64] {
        let e = self.dims.embed;
        &self.params[table.start + token * e..table.start + (token + 1) * e]
    }

    fn gru_forward(&self, g: &GruIx, x: Vec<f64>, h_prev: &[f64]) -> GruCache {
        let h = self.dims.hidden;
        let u = self.block(&g.u);
        let mut a = self.block(&g.b).to_vec();
        gemv_acc(self.block(&g.w), &x, &mut a);
        gemv_acc(&u[..2 * h * h], h_prev, &mut a[..2 * h]);
        let z: Vec<f64> = a[..h].iter().map(|&v| sigmoid(v)).collect();
        let r: Vec<f64> = a[h..2 * h].iter().map(|&v| sigmoid(v)).collect();
        let rh: Vec<f64> = r.iter().zip(h_prev).map(|(a, b)| a * b).collect();
        gemv_acc(&u[2 * h * h..], &rh, &mut a[2 * h..]);
        let cand: Vec<f64> = a[2 * h..].iter().map(|v| v.tanh()).collect();
        let out = (0..h).map(|k| (1.0 - z[k]) * h_prev[k] + z[k] * cand[k]).collect();
        GruCache { h_prev: h_prev.to_vec(), x, z, r, rh, cand, h: out }
    }

    /// Adds parameter gradients into `grad`, returns `(dL/dx, dL/dh_prev)`.
    fn gru_backward(&self, g: &GruIx, c: &GruCache, gh: &[f64], grad: &mut [f64]) -> (Vec<f64>, Vec<f64>) {
        let h = self.dims.hidden;
        let mut ga = vec![0.0; 3 * h];
        let mut gh_prev = vec![0.0; h];
        for k in 0..h {
            gh_prev[k] = gh[k] * (1.0 - c.z[k]);
            let gz = gh[k] * (c.cand[k] - c.h_prev[k]);
            ga[k] = gz * c.z[k] * (1.0 - c.z[k]);
            ga[2 * h + k] = gh[k] * c.z[k] * (1.0 - c.cand[k] * c.cand[k]);
        }
        let u = self.block(&g.u);
        let u_cand = &u[2 * h * h..];
        let mut grh = vec![0.0; h];
        gemv_t_acc(u_cand, &ga[2 * h..], &mut grh);
        for k in 0..h {
            gh_prev[k] += grh[k] * c.r[k];
            ga[h + k] = grh[k] * c.h_prev[k] * c.r[k] * (1.0 - c.r[k]);
        }
        gemv_t_acc(&u[..2 * h * h], &ga[..2 * h], &mut gh_prev);
        let mut gx = vec![0.0; g.input];
        gemv_t_acc(self.block(&g.w), &ga, &mut gx);
        outer_acc(&ga, &c.x, &mut grad[g.w.clone()]);
        let gu = &mut grad[g.u.clone()];
        outer_acc(&ga[..2 * h], &c.h_prev, &mut gu[..2 * h * h]);
        outer_acc(&ga[2 * h..], &c.rh, &mut gu[2 * h * h..]);
        axpy(1.0, &ga, &mut grad[g.b.clone()]);
        (gx, gh_prev)
    }

    fn check_source(&self, source: &[TokenId]) -> Result<(), ModelError> {
        if source.is_empty() {
            return Err(ModelError::Shape("empty source phrase".into()));
        }
        if let Some(&t) = source.iter().find(|&&t| t >= self.lexicon.source().len()) {
            return Err(crate::language::LanguageError::UnknownToken(format!("#{t}")).into());
        }
        Ok(())
    }

    /// Runs both encoder directions; returns the caches and source dropout masks.
    #[allow(clippy::type_complexity)]
    fn encode_cached(
        &self,
        source: &[TokenId],
        dropout: &mut Option<&mut Dropout>,
    ) -> (Vec<GruCache>, Vec<GruCache>, Vec<Option<Vec<f64>>>) {
        let (e, h) = (self.dims.embed, self.dims.hidden);
        let n = source.len();
        let mut masks = Vec::with_capacity(n);
        let mut inputs = Vec::with_capacity(n);
        for &tok in source {
            let mut x = self.embedding(&self.ix.src_emb, tok).to_vec();
            let m = dropout.as_deref_mut().map(|d| d.mask(e));
            if let Some(m) = &m {
                x.iter_mut().zip(m).for_each(|(a, b)| *a *= b);
            }
            masks.push(m);
            inputs.push(x);
        }
        let mut fw = Vec::with_capacity(n);
        let mut state = vec![0.0; h];
        for x in &inputs {
            let c = self.gru_forward(&self.ix.enc_fw, x.clone(), &state);
            state = c.h.clone();
            fw.push(c);
        }
        let mut bw: Vec<Option<GruCache>> = vec![None; n];
        let mut state = vec![0.0; h];
        for t in (0..n).rev() {
            let c = self.gru_forward(&self.ix.enc_bw, inputs[t].clone(), &state);
            state = c.h.clone();
            bw[t] = Some(c);
        }
        (fw, bw.into_iter().map(|c| c.expect("filled")).collect(), masks)
    }

    fn finish_encoding(&self, fw: &[GruCache], bw: &[GruCache]) -> Encoded {
        let h = self.dims.hidden;
        let annotations: Vec<Vec<f64>> = fw.iter().zip(bw).map(|(f, b)| [f.h.as_slice(), b.h.as_slice()].concat()).collect();
        let projected = annotations
            .iter()
            .map(|a| {
                let mut p = vec![0.0; h];
                gemv_acc(self.block(&self.ix.att_u), a, &mut p);
                p
            })
            .collect();
        let mut s0 = self.block(&self.ix.init_b).to_vec();
        gemv_acc(self.block(&self.ix.init_w), &bw[0].h, &mut s0);
        s0.iter_mut().for_each(|v| *v = v.tanh());
        Encoded { annotations, projected, initial_state: s0 }
    }

    /// Annotations of a source phrase, one `2 * hidden` vector per token.
    pub fn encode(&self, source: &[TokenId]) -> Result<Vec<Vec<f64>>, ModelError> {
        Ok(self.prepare(source)?.annotations)
    }

    /// Encoder output plus the attention projections.
    pub fn prepare(&self, source: &[TokenId]) -> Result<Encoded, ModelError> {
        self.check_source(source)?;
        let (fw, bw, _) = self.encode_cached(source, &mut None);
        Ok(self.finish_encoding(&fw, &bw))
    }

    /// `(context, alignments, tanh pre-activations)`.
    fn attend_encoded(&self, state: &[f64], enc: &Encoded) -> (Vec<f64>, Vec<f64>, Vec<Vec<f64>>) {
        let h = self.dims.hidden;
        let mut ws = vec![0.0; h];
        gemv_acc(self.block(&self.ix.att_w), state, &mut ws);
        let v = self.block(&self.ix.att_v);
        let mut pre = Vec::with_capacity(enc.projected.len());
        let mut scores = Vec::with_capacity(enc.projected.len());
        for p in &enc.projected {
            let t: Vec<f64> = ws.iter().zip(p).map(|(a, b)| (a + b).tanh()).collect();
            scores.push(dot(v, &t));
            pre.push(t);
        }
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut alpha: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
        let z: f64 = alpha.iter().sum();
        alpha.iter_mut().for_each(|a| *a /= z);
        let mut ctx = vec![0.0; 2 * h];
        for (a, ann) in alpha.iter().zip(&enc.annotations) {
            axpy(*a, ann, &mut ctx);
        }
        (ctx, alpha, pre)
    }

    /// Context vector and alignment weights for a decoder state.
    pub fn attend(&self, state: &[f64], annotations: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
        let h = self.dims.hidden;
        let projected = annotations
            .iter()
            .map(|a| {
                let mut p = vec![0.0; h];
                gemv_acc(self.block(&self.ix.att_u), a, &mut p);
                p
            })
            .collect();
        let enc = Encoded { annotations: annotations.to_vec(), projected, initial_state: Vec::new() };
        let (ctx, alpha, _) = self.attend_encoded(state, &enc);
        (ctx, alpha)
    }

    fn prev_embedding(&self, prev: Option<TokenId>) -> Vec<f64> {
        match prev {
            Some(t) => self.embedding(&self.ix.tgt_emb, t).to_vec(),
            None => vec![0.0; self.dims.embed],
        }
    }

    /// Decoder update and unnormalized output scores.
    pub fn decode_step(&self, state: &[f64], prev: Option<TokenId>, context: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let emb = self.prev_embedding(prev);
        let gru = self.gru_forward(&self.ix.dec, [emb.as_slice(), context].concat(), state);
        let out_in = [gru.h.as_slice(), context, emb.as_slice()].concat();
        let mut logits = self.block(&self.ix.out_b).to_vec();
        gemv_acc(self.block(&self.ix.out_w), &out_in, &mut logits);
        (gru.h, logits)
    }

    fn step_mask(&self, state: &DecodeState, mask_on: bool) -> Result<Mask, ModelError> {
        if mask_on {
            Ok(decoding::mask(state, &self.lexicon)?)
        } else {
            Ok(Mask(vec![true; self.lexicon.target().len()]))
        }
    }

    /// Teacher-forced log-probability of `pair.target`.
    pub fn sequence_logprob(&self, pair: &Pair, mask_on: bool) -> Result<f64, ModelError> {
        Ok(-self.forward_backward(pair, mask_on, None, None)?)
    }

    /// Negative log-probability; adds its gradient into `grad` if given.
    fn forward_backward(
        &self,
        pair: &Pair,
        mask_on: bool,
        mut dropout: Option<&mut Dropout>,
        grad: Option<&mut [f64]>,
    ) -> Result<f64, ModelError> {
        self.check_source(&pair.source)?;
        if pair.target.is_empty() {
            return Err(ModelError::Shape("empty target phrase".into()));
        }
        let (e, h) = (self.dims.embed, self.dims.hidden);
        let vt = self.lexicon.target().len();
        let (fw, bw, src_masks) = self.encode_cached(&pair.source, &mut dropout);
        let enc = self.finish_encoding(&fw, &bw);

        let mut dstate = init_state(&pair.booking);
        let mut s = enc.initial_state.clone();
        let mut prev: Option<TokenId> = None;
        let mut steps = Vec::with_capacity(pair.target.len());
        let mut loss = 0.0;
        for &y in &pair.target {
            if y >= vt {
                return Err(crate::language::LanguageError::UnknownToken(format!("#{y}")).into());
            }
            let mask = self.step_mask(&dstate, mask_on)?;
            if !mask.allows(y) {
                return Err(decoding::DecodeError::Infeasible { token: y, position: dstate.position }.into());
            }
            let (ctx, alpha, pre) = self.attend_encoded(&s, &enc);
            let mut emb = self.prev_embedding(prev);
            let emb_mask = match (prev, dropout.as_deref_mut()) {
                (Some(_), Some(d)) => Some(d.mask(e)),
                _ => None,
            };
            if let Some(m) = &emb_mask {
                emb.iter_mut().zip(m).for_each(|(a, b)| *a *= b);
            }
            let gru = self.gru_forward(&self.ix.dec, [emb.as_slice(), &ctx].concat(), &s);
            let mut out_in = [gru.h.as_slice(), &ctx, emb.as_slice()].concat();
            let out_mask = dropout.as_deref_mut().map(|d| d.mask(3 * h + e));
            if let Some(m) = &out_mask {
                out_in.iter_mut().zip(m).for_each(|(a, b)| *a *= b);
            }
            let mut logits = self.block(&self.ix.out_b).to_vec();
            gemv_acc(self.block(&self.ix.out_w), &out_in, &mut logits);
            let logp = decoding::masked_log_softmax(&logits, &mask)?;
            loss -= logp[y];
            s = gru.h.clone();
            steps.push(StepCache {
                s_prev: gru.h_prev.clone(),
                emb_mask,
                alpha,
                pre,
                gru,
                out_in,
                out_mask,
                probs: logp.iter().map(|v| v.exp()).collect(),
            });
            dstate = decoding::advance_unchecked(&dstate, y, &self.lexicon);
            prev = Some(y);
        }
        let Some(grad) = grad else { return Ok(loss) };

        // Reverse pass.
        let n = pair.source.len();
        let ix = &self.ix;
        let mut g_ann = vec![vec![0.0; 2 * h]; n];
        let mut g_proj = vec![vec![0.0; h]; n];
        let mut carry = vec![0.0; h];
        let v = self.block(&ix.att_v);
        for (i, st) in steps.iter().enumerate().rev() {
            let y = pair.target[i];
            let mut gl = st.probs.clone();
            gl[y] -= 1.0;
            outer_acc(&gl, &st.out_in, &mut grad[ix.out_w.clone()]);
            axpy(1.0, &gl, &mut grad[ix.out_b.clone()]);
            let mut go = vec![0.0; 3 * h + e];
            gemv_t_acc(self.block(&ix.out_w), &gl, &mut go);
            if let Some(m) = &st.out_mask {
                go.iter_mut().zip(m).for_each(|(a, b)| *a *= b);
            }
            let mut gs = carry.clone();
            axpy(1.0, &go[..h], &mut gs);
            let mut gc = go[h..3 * h].to_vec();
            let mut ge = go[3 * h..].to_vec();
            let (gx, mut gh_prev) = self.gru_backward(&ix.dec, &st.gru, &gs, grad);
            axpy(1.0, &gx[..e], &mut ge);
            axpy(1.0, &gx[e..], &mut gc);

            let galpha: Vec<f64> = enc.annotations.iter().map(|a| dot(&gc, a)).collect();
            let mean = dot(&st.alpha, &galpha);
            let mut g_ws = vec![0.0; h];
            for t in 0..n {
                axpy(st.alpha[t], &gc, &mut g_ann[t]);
                let g_score = st.alpha[t] * (galpha[t] - mean);
                if g_score == 0.0 {
                    continue;
                }
                axpy(g_score, &st.pre[t], &mut grad[ix.att_v.clone()]);
                for k in 0..h {
                    let gp = g_score * v[k] * (1.0 - st.pre[t][k] * st.pre[t][k]);
                    g_ws[k] += gp;
                    g_proj[t][k] += gp;
                }
            }
            outer_acc(&g_ws, &st.s_prev, &mut grad[ix.att_w.clone()]);
            gemv_t_acc(self.block(&ix.att_w), &g_ws, &mut gh_prev);

            if i > 0 {
                if let Some(m) = &st.emb_mask {
                    ge.iter_mut().zip(m).for_each(|(a, b)| *a *= b);
                }
                let tok = pair.target[i - 1];
                axpy(1.0, &ge, &mut grad[ix.tgt_emb.start + tok * e..ix.tgt_emb.start + (tok + 1) * e]);
            }
            carry = gh_prev;
        }

        // Initial state.
        let g_pre0: Vec<f64> = carry.iter().zip(&enc.initial_state).map(|(g, s)| g * (1.0 - s * s)).collect();
        outer_acc(&g_pre0, &bw[0].h, &mut grad[ix.init_w.clone()]);
        axpy(1.0, &g_pre0, &mut grad[ix.init_b.clone()]);
        let mut g_hb0 = vec![0.0; h];
        gemv_t_acc(self.block(&ix.init_w), &g_pre0, &mut g_hb0);
        axpy(1.0, &g_hb0, &mut g_ann[0][h..]);

        for t in 0..n {
            outer_acc(&g_proj[t], &enc.annotations[t], &mut grad[ix.att_u.clone()]);
            gemv_t_acc(self.block(&ix.att_u), &g_proj[t], &mut g_ann[t]);
        }

        // Encoder.
        let mut g_src = vec![vec![0.0; e]; n];
        let mut carry = vec![0.0; h];
        for t in (0..n).rev() {
            let mut gh = g_ann[t][..h].to_vec();
            axpy(1.0, &carry, &mut gh);
            let (gx, gp) = self.gru_backward(&ix.enc_fw, &fw[t], &gh, grad);
            axpy(1.0, &gx, &mut g_src[t]);
            carry = gp;
        }
        let mut carry = vec![0.0; h];
        for t in 0..n {
            let mut gh = g_ann[t][h..].to_vec();
            axpy(1.0, &carry, &mut gh);
            let (gx, gp) = self.gru_backward(&ix.enc_bw, &bw[t], &gh, grad);
            axpy(1.0, &gx, &mut g_src[t]);
            carry = gp;
        }
        for (t, (&tok, mut g)) in pair.source.iter().zip(g_src).enumerate() {
            if let Some(m) = &src_masks[t] {
                g.iter_mut().zip(m).for_each(|(a, b)| *a *= b);
            }
            axpy(1.0, &g, &mut grad[ix.src_emb.start + tok * e..ix.src_emb.start + (tok + 1) * e]);
        }
        Ok(loss)
    }

    /// Step model bound to one booking's encoded source phrase.
    pub fn bind(&self, booking: &Booking) -> Result<Prepared<'_>, ModelError> {
        Ok(Prepared { model: self, enc: self.prepare(&self.lexicon.encode_input(booking)?)? })
    }

    /// Most probable feasible plan description by beam search.
    pub fn predict(&self, booking: &Booking, width: usize) -> Result<SolutionDescription, ModelError> {
        let source = self.lexicon.encode_input(booking)?;
        let stepper = Prepared { model: self, enc: self.prepare(&source)? };
        let max_len = decoding::default_max_len(booking, &self.lexicon);
        let hyp = beam_search(&stepper, booking, &self.lexicon, width, max_len)?;
        Ok(self.lexicon.decode_output(&hyp.tokens)?)
    }

    /// Token sequence and score from beam search.
    pub fn predict_tokens(&self, booking: &Booking, width: usize) -> Result<decoding::Hypothesis, ModelError> {
        let source = self.lexicon.encode_input(booking)?;
        let stepper = Prepared { model: self, enc: self.prepare(&source)? };
        Ok(beam_search(&stepper, booking, &self.lexicon, width, decoding::default_max_len(booking, &self.lexicon))?)
    }
}

/// A model bound to one encoded source phrase.
pub struct Prepared<'a> {
    pub model: &'a Nmt,
    pub enc: Encoded,
}

impl StepModel for Prepared<'_> {
    type State = Vec<f64>;

    fn start(&self, _booking: &Booking) -> Vec<f64> {
        self.enc.initial_state.clone()
    }

    fn step(&self, state: &Vec<f64>, prev: Option<TokenId>, logits: &mut [f64]) -> Vec<f64> {
        let (ctx, _, _) = self.model.attend_encoded(state, &self.enc);
        let (s, l) = self.model.decode_step(state, prev, &ctx);
        logits.copy_from_slice(&l);
        s
    }
}

impl Objective for Nmt {
    type Example = Pair;

    fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn example_loss(&self, pair: &Pair, dropout: Option<&mut Dropout>, grad: Option<&mut [f64]>) -> Result<f64, ModelError> {
        self.forward_backward(pair, self.mask_loss, dropout, grad)
    }

    fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            kind: KIND.into(),
            dims: vec![
                self.dims.embed as u32,
                self.dims.hidden as u32,
                self.lexicon.source().len() as u32,
                self.lexicon.target().len() as u32,
            ],
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

    fn pair(lex: &Lexicon, booking: Booking, loadings: &[(usize, [u32; 2])]) -> Pair {
        let cat = lex.catalog();
        let d = SolutionDescription::from_patterns(loadings.iter().map(|(j, c)| cat.find_pattern(*j, c).unwrap()));
        Pair { source: lex.encode_input(&booking).unwrap(), target: lex.encode_output(&d).unwrap(), booking }
    }

    #[test]
    fn default_source_encodes_to_26_annotations() {
        let lex = Lexicon::new(&RailcarCatalog::default10());
        let m = Nmt::new(&lex, NmtDims { embed: 3, hidden: 4 }, 1, 0.1);
        let b = Booking::new(vec![1; 10], vec![3, 4]);
        let ann = m.encode(&lex.encode_input(&b).unwrap()).unwrap();
        assert_eq!((ann.len(), ann[0].len()), (26, 8));
    }

    #[test]
    fn zero_params_give_equal_annotations() {
        let lex = toy();
        let m = Nmt::zeros(&lex, NmtDims { embed: 3, hidden: 4 });
        let ann = m.encode(&lex.encode_input(&Booking::new(vec![2, 1], vec![5, 7])).unwrap()).unwrap();
        assert!(ann.iter().all(|a| a == &ann[0]));
    }

    #[test]
    fn attention_weights_are_a_distribution() {
        let lex = toy();
        let m = Nmt::new(&lex, NmtDims { embed: 3, hidden: 4 }, 2, 0.5);
        let ann = m.encode(&lex.encode_input(&Booking::new(vec![2, 1], vec![5, 7])).unwrap()).unwrap();
        let (_, alpha) = m.attend(&[0.3, -0.2, 0.1, 0.0], &ann);
        assert!((alpha.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let same = vec![vec![0.5, -0.5, 0.25, 0.0, 1.0, 2.0, 3.0, 4.0]; 3];
        let (ctx, _) = m.attend(&[0.3, -0.2, 0.1, 0.0], &same);
        for (c, a) in ctx.iter().zip(&same[0]) {
            assert!((c - a).abs() < 1e-12);
        }
        let (_, single) = m.attend(&[0.3, -0.2, 0.1, 0.0], &same[..1]);
        assert_eq!(single, vec![1.0]);
    }

    #[test]
    fn logprob_is_nonpositive_and_zero_when_forced() {
        let lex = toy();
        let m = Nmt::new(&lex, NmtDims { embed: 3, hidden: 4 }, 3, 0.5);
        let p = pair(&lex, Booking::new(vec![1, 1], vec![3, 2]), &[(0, [1, 1]), (1, [2, 0])]);
        assert!(m.sequence_logprob(&p, true).unwrap() < 0.0);
        assert!(m.sequence_logprob(&p, false).unwrap() < m.sequence_logprob(&p, true).unwrap());
        // No railcars: only BLANK, then only EOS.
        let empty = pair(&lex, Booking::new(vec![0, 0], vec![3, 2]), &[]);
        assert_eq!(m.sequence_logprob(&empty, true).unwrap(), 0.0);
    }

    #[test]
    fn infeasible_target_is_rejected() {
        let lex = toy();
        let m = Nmt::new(&lex, NmtDims { embed: 3, hidden: 4 }, 3, 0.5);
        let mut p = pair(&lex, Booking::new(vec![1, 1], vec![3, 2]), &[(0, [1, 1])]);
        p.booking = Booking::new(vec![0, 1], vec![3, 2]);
        assert!(matches!(m.sequence_logprob(&p, true), Err(ModelError::Decode(_))));
    }

    #[test]
    fn empty_booking_predicts_empty_plan() {
        let lex = toy();
        let m = Nmt::new(&lex, NmtDims { embed: 3, hidden: 4 }, 4, 0.5);
        assert!(m.predict(&Booking::new(vec![0, 0], vec![0, 0]), 5).unwrap().is_empty());
    }

    #[test]
    fn checkpoint_roundtrip() {
        let lex = toy();
        let m = Nmt::new(&lex, NmtDims { embed: 3, hidden: 4 }, 4, 0.5);
        let c = Checkpoint::from_bytes(&m.checkpoint().to_bytes(false)).unwrap();
        let back = Nmt::from_checkpoint(&c, &lex).unwrap();
        for (a, b) in back.params.iter().zip(&m.params) {
            assert_eq!(*a, *b as f32 as f64);
        }
        let other = Lexicon::new(&RailcarCatalog::default10());
        assert!(Nmt::from_checkpoint(&c, &other).is_err());
    }
}
