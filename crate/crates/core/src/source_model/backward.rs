//! Reverse-mode gradients of a per-sample objective through the network.

use super::forward::{ForwardTrace, TOKENS};
use super::params::ModelParams;
use super::tensor::{affine_backward, gelu_grad, layer_norm_backward, softmax_backward};

/// Upstream gradient injected into one sample's graph.
#[derive(Debug, Clone, Default)]
pub(crate) struct Upstream {
    pub logits: Vec<f64>,
    /// Extra gradient at the encoder outputs (the alignment path).
    pub encoder_outputs: Option<[Vec<f64>; 3]>,
}

/// Accumulates `d loss / d params` for one sample into `grads`.
pub(crate) fn backward(
    params: &ModelParams,
    trace: &ForwardTrace,
    up: &Upstream,
    grads: &mut ModelParams,
) {
    let cfg = &params.config;

    // classifier
    let cls = &params.classifier;
    let g_cls = &mut grads.classifier;
    let d_hidden = affine_backward(
        &cls.fc2.weight,
        &trace.cls_hidden,
        &up.logits,
        &mut g_cls.fc2.weight,
        &mut g_cls.fc2.bias,
    );
    let d_hidden_pre: Vec<f64> = d_hidden
        .iter()
        .zip(&trace.cls_hidden_pre)
        .map(|(g, &z)| g * gelu_grad(z))
        .collect();
    let d_fused = affine_backward(
        &cls.fc1.weight,
        &trace.fused,
        &d_hidden_pre,
        &mut g_cls.fc1.weight,
        &mut g_cls.fc1.bias,
    );

    // token mean
    let mut d_tokens: Vec<Vec<f64>> = (0..TOKENS)
        .map(|_| d_fused.iter().map(|g| g / TOKENS as f64).collect())
        .collect();

    for (l, layer) in params.fusion.iter().enumerate().rev() {
        let cache = &trace.fusion[l];
        let g = &mut grads.fusion[l];
        let width = cfg.encoder_out;

        // feed-forward block and second norm
        let mut d_mid = Vec::with_capacity(TOKENS);
        for i in 0..TOKENS {
            let d_resid = layer_norm_backward(
                &cache.norm2[i],
                &layer.norm2.gain,
                &d_tokens[i],
                &mut g.norm2.gain,
                &mut g.norm2.bias,
            );
            let d_act = affine_backward(
                &layer.ff2.weight,
                &cache.ff_act[i],
                &d_resid,
                &mut g.ff2.weight,
                &mut g.ff2.bias,
            );
            let d_pre: Vec<f64> = d_act
                .iter()
                .zip(&cache.ff_pre[i])
                .map(|(a, &z)| a * gelu_grad(z))
                .collect();
            let d_in = affine_backward(
                &layer.ff1.weight,
                &cache.after_norm1[i],
                &d_pre,
                &mut g.ff1.weight,
                &mut g.ff1.bias,
            );
            d_mid.push(
                d_resid
                    .iter()
                    .zip(&d_in)
                    .map(|(a, b)| a + b)
                    .collect::<Vec<f64>>(),
            );
        }

        // attention block and first norm
        let attn = &layer.attention;
        let ga = &mut g.attention;
        let mut d_x = Vec::with_capacity(TOKENS);
        let mut d_context = Vec::with_capacity(TOKENS);
        for i in 0..TOKENS {
            let d_resid = layer_norm_backward(
                &cache.norm1[i],
                &layer.norm1.gain,
                &d_mid[i],
                &mut g.norm1.gain,
                &mut g.norm1.bias,
            );
            d_context.push(affine_backward(
                &attn.output.weight,
                &cache.context[i],
                &d_resid,
                &mut ga.output.weight,
                &mut ga.output.bias,
            ));
            d_x.push(d_resid);
        }

        let heads = cfg.fusion_heads;
        let dh = width / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut d_q = vec![vec![0.0; width]; TOKENS];
        let mut d_k = vec![vec![0.0; width]; TOKENS];
        let mut d_v = vec![vec![0.0; width]; TOKENS];
        for h in 0..heads {
            let span = h * dh..(h + 1) * dh;
            for i in 0..TOKENS {
                let p = &cache.attn[h][i];
                let mut d_p = [0.0; TOKENS];
                for j in 0..TOKENS {
                    for c in span.clone() {
                        d_p[j] += d_context[i][c] * cache.value[j][c];
                        d_v[j][c] += p[j] * d_context[i][c];
                    }
                }
                let d_s = softmax_backward(p, &d_p);
                for j in 0..TOKENS {
                    let s = scale * d_s[j];
                    if s == 0.0 {
                        continue;
                    }
                    for c in span.clone() {
                        d_q[i][c] += s * cache.key[j][c];
                        d_k[j][c] += s * cache.query[i][c];
                    }
                }
            }
        }
        for i in 0..TOKENS {
            let x = &cache.input[i];
            let a = affine_backward(
                &attn.query.weight,
                x,
                &d_q[i],
                &mut ga.query.weight,
                &mut ga.query.bias,
            );
            let b = affine_backward(
                &attn.key.weight,
                x,
                &d_k[i],
                &mut ga.key.weight,
                &mut ga.key.bias,
            );
            let c = affine_backward(
                &attn.value.weight,
                x,
                &d_v[i],
                &mut ga.value.weight,
                &mut ga.value.bias,
            );
            for k in 0..width {
                d_x[i][k] += a[k] + b[k] + c[k];
            }
        }
        d_tokens = d_x;
    }

    // encoders
    for (m, d_out) in d_tokens.iter_mut().enumerate() {
        if let Some(extra) = &up.encoder_outputs {
            for (a, b) in d_out.iter_mut().zip(&extra[m]) {
                *a += b;
            }
        }
        let enc = &params.encoders[m];
        let cache = &trace.encoders[m];
        let ge = &mut grads.encoders[m];
        let d_pre_norm = layer_norm_backward(
            &cache.norm,
            &enc.norm.gain,
            d_out,
            &mut ge.norm.gain,
            &mut ge.norm.bias,
        );
        let d_hidden = affine_backward(
            &enc.fc2.weight,
            &cache.hidden,
            &d_pre_norm,
            &mut ge.fc2.weight,
            &mut ge.fc2.bias,
        );
        let d_hidden_pre: Vec<f64> = d_hidden
            .iter()
            .zip(&cache.hidden_pre)
            .map(|(g, &z)| g * gelu_grad(z))
            .collect();
        affine_backward(
            &enc.fc1.weight,
            &cache.input,
            &d_hidden_pre,
            &mut ge.fc1.weight,
            &mut ge.fc1.bias,
        );
    }
}
