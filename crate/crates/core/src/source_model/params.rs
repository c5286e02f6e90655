use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{RadarError, Result};
use crate::feature_io::{Modality, ModalityDims, NUM_CLASSES};

/// Architecture hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_dims: ModalityDims,
    pub encoder_hidden: usize,
    /// Shared encoder output width `D_m`; also the fusion token width.
    pub encoder_out: usize,
    pub fusion_layers: usize,
    pub fusion_heads: usize,
    pub fusion_ff_dim: usize,
    pub classifier_hidden: usize,
    pub num_classes: usize,
}

impl ModelConfig {
    /// Defaults for a given input width and `D_m`: 2 fusion layers, 8 heads
    /// (fewer if `D_m` is not divisible), feed-forward `2 D_m`, classifier
    /// hidden `D_m / 2`.
    pub fn with_dims(input_dims: ModalityDims, encoder_out: usize) -> Self {
        let fusion_heads = [8, 4, 2, 1]
            .into_iter()
            .find(|h| encoder_out % h == 0)
            .unwrap_or(1);
        ModelConfig {
            input_dims,
            encoder_hidden: encoder_out,
            encoder_out,
            fusion_layers: 2,
            fusion_heads,
            fusion_ff_dim: 2 * encoder_out,
            classifier_hidden: (encoder_out / 2).max(1),
            num_classes: NUM_CLASSES,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("encoder_hidden", self.encoder_hidden),
            ("encoder_out", self.encoder_out),
            ("fusion_heads", self.fusion_heads),
            ("fusion_ff_dim", self.fusion_ff_dim),
            ("classifier_hidden", self.classifier_hidden),
            ("num_classes", self.num_classes),
        ];
        for (name, v) in fields {
            if v == 0 {
                return Err(RadarError::invalid(format!(
                    "model config {name} must be positive"
                )));
            }
        }
        if self.input_dims.0.contains(&0) {
            return Err(RadarError::invalid("model input dims must be positive"));
        }
        if self.encoder_out % self.fusion_heads != 0 {
            return Err(RadarError::invalid(format!(
                "encoder_out {} is not divisible by fusion_heads {}",
                self.encoder_out, self.fusion_heads
            )));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.encoder_out / self.fusion_heads
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::with_dims(ModalityDims::default(), 768)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    /// `[out, in]`
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Linear {
    fn zeros(input: usize, output: usize) -> Self {
        Linear {
            weight: Tensor::zeros(&[output, input]),
            bias: Tensor::zeros(&[output]),
        }
    }

    fn init(input: usize, output: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (input as f64).sqrt();
        let mut layer = Linear::zeros(input, output);
        for w in &mut layer.weight.data {
            *w = rng.random_range(-bound..bound);
        }
        layer
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub gain: Tensor,
    pub bias: Tensor,
}

impl LayerNorm {
    fn new(width: usize) -> Self {
        LayerNorm {
            gain: Tensor::filled(&[width], 1.0),
            bias: Tensor::zeros(&[width]),
        }
    }
}

/// Two-layer feed-forward modality encoder with output normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    pub fc1: Linear,
    pub fc2: Linear,
    pub norm: LayerNorm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Attention {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
}

/// Post-norm transformer encoder layer.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionLayer {
    pub attention: Attention,
    pub norm1: LayerNorm,
    pub ff1: Linear,
    pub ff2: Linear,
    pub norm2: LayerNorm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    pub fc1: Linear,
    pub fc2: Linear,
}

/// All parameters of the detection network.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    /// Indexed by [`Modality::index`].
    pub encoders: [Encoder; 3],
    pub fusion: Vec<FusionLayer>,
    pub classifier: Classifier,
}

/// Generates the canonical tensor walk for shared and unique borrows.
macro_rules! walk_tensors {
    ($params:expr, $f:expr, $($mut_:tt)?) => {{
        let p = $params;
        let f = $f;
        for (m, enc) in Modality::ALL.iter().zip(& $($mut_)? p.encoders) {
            let k = m.key();
            f(format!("encoder.{k}.fc1.weight"), & $($mut_)? enc.fc1.weight);
            f(format!("encoder.{k}.fc1.bias"), & $($mut_)? enc.fc1.bias);
            f(format!("encoder.{k}.fc2.weight"), & $($mut_)? enc.fc2.weight);
            f(format!("encoder.{k}.fc2.bias"), & $($mut_)? enc.fc2.bias);
            f(format!("encoder.{k}.norm.gain"), & $($mut_)? enc.norm.gain);
            f(format!("encoder.{k}.norm.bias"), & $($mut_)? enc.norm.bias);
        }
        for (l, layer) in (& $($mut_)? p.fusion).into_iter().enumerate() {
            let a = & $($mut_)? layer.attention;
            for (name, lin) in [("query", & $($mut_)? a.query), ("key", & $($mut_)? a.key), ("value", & $($mut_)? a.value), ("output", & $($mut_)? a.output)] {
                f(format!("fusion.{l}.attention.{name}.weight"), & $($mut_)? lin.weight);
                f(format!("fusion.{l}.attention.{name}.bias"), & $($mut_)? lin.bias);
            }
            f(format!("fusion.{l}.norm1.gain"), & $($mut_)? layer.norm1.gain);
            f(format!("fusion.{l}.norm1.bias"), & $($mut_)? layer.norm1.bias);
            f(format!("fusion.{l}.ff1.weight"), & $($mut_)? layer.ff1.weight);
            f(format!("fusion.{l}.ff1.bias"), & $($mut_)? layer.ff1.bias);
            f(format!("fusion.{l}.ff2.weight"), & $($mut_)? layer.ff2.weight);
            f(format!("fusion.{l}.ff2.bias"), & $($mut_)? layer.ff2.bias);
            f(format!("fusion.{l}.norm2.gain"), & $($mut_)? layer.norm2.gain);
            f(format!("fusion.{l}.norm2.bias"), & $($mut_)? layer.norm2.bias);
        }
        f("classifier.fc1.weight".to_string(), & $($mut_)? p.classifier.fc1.weight);
        f("classifier.fc1.bias".to_string(), & $($mut_)? p.classifier.fc1.bias);
        f("classifier.fc2.weight".to_string(), & $($mut_)? p.classifier.fc2.weight);
        f("classifier.fc2.bias".to_string(), & $($mut_)? p.classifier.fc2.bias);
    }};
}

impl ModelParams {
    /// All-zero parameters with the shapes implied by `config`. Also used as
    /// a gradient accumulator.
    pub fn zeros(config: &ModelConfig) -> Self {
        let d = config.encoder_out;
        let encoders = Modality::ALL.map(|m| Encoder {
            fc1: Linear::zeros(config.input_dims.get(m), config.encoder_hidden),
            fc2: Linear::zeros(config.encoder_hidden, d),
            norm: LayerNorm::new(d),
        });
        let fusion = (0..config.fusion_layers)
            .map(|_| FusionLayer {
                attention: Attention {
                    query: Linear::zeros(d, d),
                    key: Linear::zeros(d, d),
                    value: Linear::zeros(d, d),
                    output: Linear::zeros(d, d),
                },
                norm1: LayerNorm::new(d),
                ff1: Linear::zeros(d, config.fusion_ff_dim),
                ff2: Linear::zeros(config.fusion_ff_dim, d),
                norm2: LayerNorm::new(d),
            })
            .collect();
        let classifier = Classifier {
            fc1: Linear::zeros(d, config.classifier_hidden),
            fc2: Linear::zeros(config.classifier_hidden, config.num_classes),
        };
        let mut p = ModelParams {
            config: *config,
            encoders,
            fusion,
            classifier,
        };
        // `LayerNorm::new` sets unit gains; an accumulator must be all zeros.
        p.for_each_mut(|_, t| t.data.iter_mut().for_each(|x| *x = 0.0));
        p
    }

    /// Visits every tensor in canonical order.
    pub fn for_each<'a>(&'a self, mut f: impl FnMut(String, &'a Tensor)) {
        walk_tensors!(self, &mut f,);
    }

    pub fn for_each_mut(&mut self, mut f: impl FnMut(String, &mut Tensor)) {
        walk_tensors!(self, &mut f, mut);
    }

    /// `(name, tensor)` pairs in canonical order.
    pub fn tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        self.for_each(|n, t| out.push((n, t)));
        out
    }

    pub fn tensor_names(&self) -> Vec<String> {
        self.tensors().into_iter().map(|(n, _)| n).collect()
    }

    pub fn num_tensors(&self) -> usize {
        let mut n = 0;
        self.for_each(|_, _| n += 1);
        n
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.tensors()
            .into_iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
    }

    pub fn is_finite(&self) -> bool {
        let mut ok = true;
        self.for_each(|_, t| ok &= t.is_finite());
        ok
    }

    /// Name of the first tensor holding a non-finite entry.
    pub fn first_non_finite(&self) -> Option<String> {
        let mut bad = None;
        self.for_each(|n, t| {
            if bad.is_none() && !t.is_finite() {
                bad = Some(n);
            }
        });
        bad
    }
}

/// Deterministic initialization: fan-in scaled uniform weights, zero
/// biases, unit normalization gains.
pub fn init_model(config: &ModelConfig, seed: u64) -> Result<ModelParams> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = config.encoder_out;
    let encoders = Modality::ALL.map(|m| Encoder {
        fc1: Linear::init(config.input_dims.get(m), config.encoder_hidden, &mut rng),
        fc2: Linear::init(config.encoder_hidden, d, &mut rng),
        norm: LayerNorm::new(d),
    });
    let fusion = (0..config.fusion_layers)
        .map(|_| FusionLayer {
            attention: Attention {
                query: Linear::init(d, d, &mut rng),
                key: Linear::init(d, d, &mut rng),
                value: Linear::init(d, d, &mut rng),
                output: Linear::init(d, d, &mut rng),
            },
            norm1: LayerNorm::new(d),
            ff1: Linear::init(d, config.fusion_ff_dim, &mut rng),
            ff2: Linear::init(config.fusion_ff_dim, d, &mut rng),
            norm2: LayerNorm::new(d),
        })
        .collect();
    let classifier = Classifier {
        fc1: Linear::init(d, config.classifier_hidden, &mut rng),
        fc2: Linear::init(config.classifier_hidden, config.num_classes, &mut rng),
    };
    Ok(ModelParams {
        config: *config,
        encoders,
        fusion,
        classifier,
    })
}

/// Which tensors may change during adaptation, in canonical tensor order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdaptableMask {
    pub flags: Vec<bool>,
}

impl AdaptableMask {
    /// Each encoder's second affine layer plus every normalization gain and
    /// bias.
    pub fn standard(params: &ModelParams) -> Self {
        let mut flags = Vec::new();
        params.for_each(|name, _| flags.push(is_adaptable(&name)));
        AdaptableMask { flags }
    }

    pub fn all(params: &ModelParams) -> Self {
        AdaptableMask {
            flags: vec![true; params.num_tensors()],
        }
    }

    pub fn count(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }
}

fn is_adaptable(name: &str) -> bool {
    let encoder_last = name.starts_with("encoder.") && name.contains(".fc2.");
    let norm = name.contains(".norm") && (name.ends_with(".gain") || name.ends_with(".bias"));
    encoder_last || norm
}
