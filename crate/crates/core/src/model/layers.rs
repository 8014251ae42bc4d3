//! Graph layers recorded on an autodiff [`Tape`].
//!
//! Node features are `N × F` matrices. Pairwise quantities (attention logits,
//! adjacency channels) are flattened row-major into `N² × C` matrices so that
//! the per-pair MLPs are ordinary matrix products.

use ndarray::Array2;

use crate::autodiff::{Tape, Var};

/// One dense layer: weight `in × out`, bias `1 × out`.
#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub w: Var,
    pub b: Var,
}

impl Linear {
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Var {
        let h = tape.matmul(x, self.w);
        tape.add_row(h, self.b)
    }
}

/// Stack of [`Linear`] layers with ELU between them (none after the last).
pub fn mlp(tape: &mut Tape, x: Var, layers: &[Linear]) -> Var {
    let mut h = x;
    for (i, layer) in layers.iter().enumerate() {
        h = layer.forward(tape, h);
        if i + 1 < layers.len() {
            h = tape.elu(h);
        }
    }
    h
}

/// `N × width` matrix with ones on real rows.
pub fn row_mask(mask: &[bool], width: usize) -> Array2<f64> {
    Array2::from_shape_fn((mask.len(), width), |(i, _)| if mask[i] { 1.0 } else { 0.0 })
}

/// `N × N` matrix with ones where both endpoints are real and `i ≠ j`.
pub fn pair_mask(mask: &[bool]) -> Array2<f64> {
    let n = mask.len();
    Array2::from_shape_fn((n, n), |(i, j)| if i != j && mask[i] && mask[j] { 1.0 } else { 0.0 })
}

/// Flattened `N² × width` version of a pair mask, diagonal included.
fn flat_pair_mask(mask: &[bool], width: usize) -> Array2<f64> {
    let n = mask.len();
    Array2::from_shape_fn(
        (n * n, width),
        |(r, _)| {
            if mask[r / n] && mask[r % n] {
                1.0
            } else {
                0.0
            }
        },
    )
}

#[derive(Debug, Clone, Copy)]
pub struct GcnWeights {
    /// Neighborhood weight `W₁`.
    pub w_adj: Var,
    /// Self weight `W₂`.
    pub w_self: Var,
    pub b: Var,
}

/// `ELU((A + I) X W₁ + X W₂ + b)` with padded rows zeroed.
///
/// `a_plus_i` is the (possibly noisy) adjacency with the identity added.
pub fn gcn_layer(tape: &mut Tape, x: Var, a_plus_i: Var, w: &GcnWeights, mask: &[bool]) -> Var {
    let ax = tape.matmul(a_plus_i, x);
    let neigh = tape.matmul(ax, w.w_adj);
    let own = tape.matmul(x, w.w_self);
    let h = tape.add(neigh, own);
    let h = tape.add_row(h, w.b);
    let h = tape.elu(h);
    let width = tape.value(h).ncols();
    tape.mul_const(h, &row_mask(mask, width))
}

/// Weights of the graph multi-head attention block.
#[derive(Debug, Clone)]
pub struct GmhWeights {
    /// Query projections indexed `[channel][head]`, each `F × d_head`.
    pub query: Vec<Vec<Var>>,
    /// Key projections, same layout as `query`.
    pub key: Vec<Vec<Var>>,
    /// Two-layer per-pair MLP mapping stacked logits to the output channels.
    pub mix: [Linear; 2],
    /// Value projection per output channel (`F × F_out`) and shared bias.
    /// Only needed when the updated node features are used.
    pub value: Option<(Vec<Var>, Var)>,
}

/// Attention channels of the GMH block as an `N² × C_out` matrix.
///
/// For every adjacency channel `c` and head `h` the logits
/// `E = sym((X W_Q)(X W_K)ᵀ) / √d_head` are formed. The per-pair input of the
/// mixing MLP stacks every `E`, every `E ⊙ A_c`, and the adjacency channels
/// themselves; the MLP maps them to the output channels. Rows of pairs that
/// touch a padded slot are zeroed.
pub fn gmh_attention(tape: &mut Tape, x: Var, adj_channels: &[Var], w: &GmhWeights, mask: &[bool]) -> Var {
    let n = mask.len();
    let mut logits = Vec::new();
    let mut gated = Vec::new();
    for (c, &adj) in adj_channels.iter().enumerate() {
        let adj_flat = tape.reshape(adj, (n * n, 1));
        for h in 0..w.query[c].len() {
            let q = tape.matmul(x, w.query[c][h]);
            let k = tape.matmul(x, w.key[c][h]);
            let d = tape.value(q).ncols() as f64;
            let kt = tape.transpose(k);
            let e = tape.matmul(q, kt);
            let e = tape.symmetrize(e);
            let e = tape.scale(e, d.sqrt().recip());
            let e = tape.reshape(e, (n * n, 1));
            gated.push(tape.mul(e, adj_flat));
            logits.push(e);
        }
    }
    let mut stacked = logits;
    stacked.extend(gated);
    for &adj in adj_channels {
        stacked.push(tape.reshape(adj, (n * n, 1)));
    }
    let pairs = tape.concat_cols(&stacked);
    let out = mlp(tape, pairs, &w.mix);
    let width = tape.value(out).ncols();
    tape.mul_const(out, &flat_pair_mask(mask, width))
}

/// Full GMH layer: attention channels plus the feature update
/// `ELU(Σ_c attn_c X W_V^c + b)`.
///
/// Returns `(x_out, channels)` where each channel is an `N × N` node.
pub fn gmh_layer(tape: &mut Tape, x: Var, adj_channels: &[Var], w: &GmhWeights, mask: &[bool]) -> (Var, Vec<Var>) {
    let n = mask.len();
    let attn = gmh_attention(tape, x, adj_channels, w, mask);
    let c_out = tape.value(attn).ncols();
    let channels: Vec<Var> = (0..c_out)
        .map(|c| {
            let col = tape.column(attn, c);
            tape.reshape(col, (n, n))
        })
        .collect();
    let (values, bias) = w.value.as_ref().expect("gmh_layer needs value weights");
    let mut acc: Option<Var> = None;
    for (c, &ch) in channels.iter().enumerate() {
        let msg = tape.matmul(ch, x);
        let msg = tape.matmul(msg, values[c]);
        acc = Some(match acc {
            Some(prev) => tape.add(prev, msg),
            None => msg,
        });
    }
    let h = tape.add_row(acc.expect("at least one output channel"), *bias);
    let h = tape.elu(h);
    let width = tape.value(h).ncols();
    let x_out = tape.mul_const(h, &row_mask(mask, width));
    (x_out, channels)
}
