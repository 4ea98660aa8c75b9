use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::TYPE_FEATURE_WIDTH;
use crate::error::{Error, Result};
use crate::tensor::{Array, ParamId, ParamSet, Real};

/// The architecture ladder, from plain encoder-decoder to entity-typed copying.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Seq2Seq,
    Attn,
    Copy,
    EntType,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Seq2Seq, Variant::Attn, Variant::Copy, Variant::EntType];

    pub fn uses_attention(self) -> bool {
        !matches!(self, Variant::Seq2Seq)
    }

    pub fn uses_copy(self) -> bool {
        matches!(self, Variant::Copy | Variant::EntType)
    }

    pub fn uses_type_features(self) -> bool {
        matches!(self, Variant::EntType)
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Seq2Seq => "seq2seq",
            Variant::Attn => "attn",
            Variant::Copy => "copy",
            Variant::EntType => "enttype",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown variant {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub vocab_size: usize,
    pub embedding: usize,
    pub hidden: usize,
    pub layers: usize,
}

/// One LSTM layer. `weight` maps `[input, hidden]` (row vector) to the four
/// gate pre-activations in the order input, forget, cell, output.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LstmLayer {
    pub weight: ParamId,
    pub bias: ParamId,
    pub input: usize,
    pub hidden: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AttentionParams {
    /// Applied to encoder states, `hidden x hidden`.
    pub w_enc: ParamId,
    /// Applied to the decoder state, `hidden x hidden`.
    pub w_dec: ParamId,
    /// Score vector, `hidden x 1`.
    pub v: ParamId,
}

/// All trainable arrays of one model plus the ids that locate them.
///
/// Matrices act on row vectors from the right, so the output map is stored
/// as `[hidden or 2*hidden, vocab]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T> {
    pub variant: Variant,
    pub dims: ModelDims,
    pub params: ParamSet<T>,
    pub embedding: ParamId,
    pub encoder: Vec<LstmLayer>,
    pub decoder: Vec<LstmLayer>,
    pub attention: Option<AttentionParams>,
    pub output: ParamId,
    /// Scalar calibrating copy scores against vocabulary logits.
    pub copy_scale: Option<ParamId>,
}

impl<T: Real> ModelParams<T> {
    /// Zero weights, forget-gate biases of 1 and a copy scale of 1.
    pub fn layout(variant: Variant, dims: ModelDims) -> Result<Self> {
        if dims.vocab_size == 0 || dims.embedding == 0 || dims.hidden == 0 {
            return Err(Error::invalid("model dimensions must be positive"));
        }
        if !(1..=3).contains(&dims.layers) {
            return Err(Error::invalid("layer count must be 1, 2 or 3"));
        }
        let d = dims.hidden;
        let mut params = ParamSet::new();
        let embedding = params.add("embedding", Array::zeros(&[dims.vocab_size, dims.embedding]));

        let lstm = |params: &mut ParamSet<T>, prefix: &str, first_input: usize| {
            (0..dims.layers)
                .map(|l| {
                    let input = if l == 0 { first_input } else { d };
                    let weight =
                        params.add(format!("{prefix}.{l}.weight"), Array::zeros(&[input + d, 4 * d]));
                    let bias = params.add(
                        format!("{prefix}.{l}.bias"),
                        Array::from_fn(&[1, 4 * d], |k| {
                            if (d..2 * d).contains(&k) {
                                T::one()
                            } else {
                                T::zero()
                            }
                        }),
                    );
                    LstmLayer {
                        weight,
                        bias,
                        input,
                        hidden: d,
                    }
                })
                .collect::<Vec<_>>()
        };
        let enc_input = dims.embedding
            + if variant.uses_type_features() {
                TYPE_FEATURE_WIDTH
            } else {
                0
            };
        let encoder = lstm(&mut params, "encoder", enc_input);
        let decoder = lstm(&mut params, "decoder", dims.embedding);

        let attention = variant.uses_attention().then(|| AttentionParams {
            w_enc: params.add("attention.w_enc", Array::zeros(&[d, d])),
            w_dec: params.add("attention.w_dec", Array::zeros(&[d, d])),
            v: params.add("attention.v", Array::zeros(&[d, 1])),
        });
        let out_in = if variant.uses_attention() { 2 * d } else { d };
        let output = params.add("output", Array::zeros(&[out_in, dims.vocab_size]));
        let copy_scale = variant
            .uses_copy()
            .then(|| params.add("copy_scale", Array::scalar(T::one())));

        Ok(ModelParams {
            variant,
            dims,
            params,
            embedding,
            encoder,
            decoder,
            attention,
            output,
            copy_scale,
        })
    }

    /// Same layout with values converted to another precision.
    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        ModelParams {
            variant: self.variant,
            dims: self.dims,
            params: self.params.cast(),
            embedding: self.embedding,
            encoder: self.encoder.clone(),
            decoder: self.decoder.clone(),
            attention: self.attention,
            output: self.output,
            copy_scale: self.copy_scale,
        }
    }

    /// Input width of the encoder's first layer.
    pub fn encoder_input(&self) -> usize {
        self.encoder[0].input
    }

    pub fn vocab_size(&self) -> usize {
        self.dims.vocab_size
    }
}
