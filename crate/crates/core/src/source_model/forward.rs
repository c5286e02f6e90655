//! Forward pass. The three modality encodings form a 3-token sequence for
//! the fusion transformer; the fused representation is the token mean.

use super::params::{Attention, FusionLayer, ModelParams};
use super::tensor::{affine, dot, gelu, layer_norm, softmax, NormCache};
use crate::error::{RadarError, Result};
use crate::feature_io::{Modality, VideoRecord};

pub(crate) const TOKENS: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct EncoderCache {
    pub input: Vec<f64>,
    pub hidden_pre: Vec<f64>,
    pub hidden: Vec<f64>,
    pub norm: NormCache,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct FusionCache {
    pub input: Vec<Vec<f64>>,
    pub query: Vec<Vec<f64>>,
    pub key: Vec<Vec<f64>>,
    pub value: Vec<Vec<f64>>,
    /// `attn[h][i][j]`
    pub attn: Vec<[[f64; TOKENS]; TOKENS]>,
    pub context: Vec<Vec<f64>>,
    pub norm1: Vec<NormCache>,
    pub after_norm1: Vec<Vec<f64>>,
    pub ff_pre: Vec<Vec<f64>>,
    pub ff_act: Vec<Vec<f64>>,
    pub norm2: Vec<NormCache>,
}

/// Everything one forward pass produces for a record.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    /// Encoder outputs `f_m(m)`, indexed by [`Modality::index`].
    pub encoder_outputs: [Vec<f64>; 3],
    pub fused: Vec<f64>,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
    pub(crate) encoders: [EncoderCache; 3],
    pub(crate) fusion: Vec<FusionCache>,
    pub(crate) fusion_output: Vec<Vec<f64>>,
    pub(crate) cls_hidden_pre: Vec<f64>,
    pub(crate) cls_hidden: Vec<f64>,
}

impl ForwardTrace {
    pub fn encoder_output(&self, m: Modality) -> &[f64] {
        &self.encoder_outputs[m.index()]
    }

    /// Argmax of the probabilities, ties to the lower class.
    pub fn prediction(&self) -> usize {
        argmax(&self.probs)
    }
}

pub(crate) fn argmax(x: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in x.iter().enumerate().skip(1) {
        if v > x[best] {
            best = i;
        }
    }
    best
}

fn finite(layer: &str, x: &[f64]) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(RadarError::NonFinite(layer.to_string()))
    }
}

fn attention_forward(
    attn: &Attention,
    x: &[Vec<f64>],
    heads: usize,
) -> (
    Vec<Vec<f64>>,
    Vec<Vec<f64>>,
    Vec<Vec<f64>>,
    Vec<[[f64; TOKENS]; TOKENS]>,
    Vec<Vec<f64>>,
) {
    let q: Vec<Vec<f64>> = x
        .iter()
        .map(|t| affine(&attn.query.weight, &attn.query.bias, t))
        .collect();
    let k: Vec<Vec<f64>> = x
        .iter()
        .map(|t| affine(&attn.key.weight, &attn.key.bias, t))
        .collect();
    let v: Vec<Vec<f64>> = x
        .iter()
        .map(|t| affine(&attn.value.weight, &attn.value.bias, t))
        .collect();
    let width = q[0].len();
    let dh = width / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut probs = vec![[[0.0; TOKENS]; TOKENS]; heads];
    let mut context = vec![vec![0.0; width]; TOKENS];
    for (h, ph) in probs.iter_mut().enumerate() {
        let span = h * dh..(h + 1) * dh;
        for i in 0..TOKENS {
            let scores: Vec<f64> = (0..TOKENS)
                .map(|j| scale * dot(&q[i][span.clone()], &k[j][span.clone()]))
                .collect();
            let p = softmax(&scores);
            for j in 0..TOKENS {
                ph[i][j] = p[j];
                for c in span.clone() {
                    context[i][c] += p[j] * v[j][c];
                }
            }
        }
    }
    (q, k, v, probs, context)
}

fn fusion_forward(
    layer: &FusionLayer,
    x: Vec<Vec<f64>>,
    heads: usize,
    index: usize,
) -> Result<(Vec<Vec<f64>>, FusionCache)> {
    let (query, key, value, attn, context) = attention_forward(&layer.attention, &x, heads);
    let out = &layer.attention.output;
    let mut norm1 = Vec::with_capacity(TOKENS);
    let mut after_norm1 = Vec::with_capacity(TOKENS);
    for i in 0..TOKENS {
        let projected = affine(&out.weight, &out.bias, &context[i]);
        let resid: Vec<f64> = x[i].iter().zip(&projected).map(|(a, b)| a + b).collect();
        let (y, cache) = layer_norm(&resid, &layer.norm1.gain, &layer.norm1.bias);
        norm1.push(cache);
        after_norm1.push(y);
    }
    finite(&format!("fusion.{index}.attention"), &after_norm1.concat())?;
    let mut ff_pre = Vec::with_capacity(TOKENS);
    let mut ff_act = Vec::with_capacity(TOKENS);
    let mut norm2 = Vec::with_capacity(TOKENS);
    let mut output = Vec::with_capacity(TOKENS);
    for row in after_norm1.iter() {
        let pre = affine(&layer.ff1.weight, &layer.ff1.bias, row);
        let act: Vec<f64> = pre.iter().map(|&z| gelu(z)).collect();
        let ff = affine(&layer.ff2.weight, &layer.ff2.bias, &act);
        let resid: Vec<f64> = row.iter().zip(&ff).map(|(a, b)| a + b).collect();
        let (y, cache) = layer_norm(&resid, &layer.norm2.gain, &layer.norm2.bias);
        ff_pre.push(pre);
        ff_act.push(act);
        norm2.push(cache);
        output.push(y);
    }
    finite(&format!("fusion.{index}.feed_forward"), &output.concat())?;
    Ok((
        output,
        FusionCache {
            input: x,
            query,
            key,
            value,
            attn,
            context,
            norm1,
            after_norm1,
            ff_pre,
            ff_act,
            norm2,
        },
    ))
}

/// Runs the network on one record.
pub fn forward(params: &ModelParams, record: &VideoRecord) -> Result<ForwardTrace> {
    forward_features(
        params,
        [
            record.modality(Modality::Vision),
            record.modality(Modality::Text),
            record.modality(Modality::Audio),
        ],
    )
}

/// Runs the network on raw per-modality features.
pub fn forward_features(params: &ModelParams, inputs: [&[f64]; 3]) -> Result<ForwardTrace> {
    let cfg = &params.config;
    let mut encoders: Vec<EncoderCache> = Vec::with_capacity(3);
    let mut outputs: Vec<Vec<f64>> = Vec::with_capacity(3);
    for m in Modality::ALL {
        let x = inputs[m.index()];
        let expected = cfg.input_dims.get(m);
        if x.len() != expected {
            return Err(RadarError::DimensionMismatch {
                context: format!("encoder.{} input", m.key()),
                expected,
                actual: x.len(),
            });
        }
        let enc = &params.encoders[m.index()];
        let hidden_pre = affine(&enc.fc1.weight, &enc.fc1.bias, x);
        let hidden: Vec<f64> = hidden_pre.iter().map(|&z| gelu(z)).collect();
        let pre_norm = affine(&enc.fc2.weight, &enc.fc2.bias, &hidden);
        let (out, norm) = layer_norm(&pre_norm, &enc.norm.gain, &enc.norm.bias);
        finite(&format!("encoder.{}", m.key()), &out)?;
        encoders.push(EncoderCache {
            input: x.to_vec(),
            hidden_pre,
            hidden,
            norm,
        });
        outputs.push(out);
    }

    let mut tokens = outputs.clone();
    let mut fusion = Vec::with_capacity(params.fusion.len());
    for (l, layer) in params.fusion.iter().enumerate() {
        let (next, cache) = fusion_forward(layer, tokens, cfg.fusion_heads, l)?;
        fusion.push(cache);
        tokens = next;
    }

    let width = cfg.encoder_out;
    let fused: Vec<f64> = (0..width)
        .map(|c| tokens.iter().map(|t| t[c]).sum::<f64>() / TOKENS as f64)
        .collect();
    let cls = &params.classifier;
    let cls_hidden_pre = affine(&cls.fc1.weight, &cls.fc1.bias, &fused);
    let cls_hidden: Vec<f64> = cls_hidden_pre.iter().map(|&z| gelu(z)).collect();
    let logits = affine(&cls.fc2.weight, &cls.fc2.bias, &cls_hidden);
    finite("classifier", &logits)?;
    let probs = softmax(&logits);

    let encoders: [EncoderCache; 3] = encoders.try_into().expect("three encoders");
    let encoder_outputs: [Vec<f64>; 3] = outputs.try_into().expect("three encoders");
    Ok(ForwardTrace {
        encoder_outputs,
        fused,
        logits,
        probs,
        encoders,
        fusion,
        fusion_output: tokens,
        cls_hidden_pre,
        cls_hidden,
    })
}
