//! Central finite-difference checks of analytic gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use radar_tta::alignment::{anchors_from, reference_mean, AlignTarget, Encodings};
use radar_tta::feature_io::{ModalityDims, VideoRecord};
use radar_tta::source_model::{
    forward, init_model, loss_and_gradients, AdaptableMask, AlignSpec, LossSpec, ModelConfig,
    ModelParams,
};

pub const STEP: f64 = 1e-4;
pub const TOL: f64 = 1e-4;
// Denominator floor for the relative error of near-zero entries.
const FLOOR: f64 = 1e-6;

fn gauss(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect()
}

pub fn record(rng: &mut impl Rng, id: usize, dims: ModalityDims) -> VideoRecord {
    VideoRecord::new(
        format!("r{id}"),
        "e",
        id as u64,
        gauss(rng, dims.0[0]),
        gauss(rng, dims.0[1]),
        gauss(rng, dims.0[2]),
        None,
    )
}

fn batch_loss(params: &ModelParams, recs: &[VideoRecord], spec: &LossSpec) -> f64 {
    let traces: Vec<_> = recs.iter().map(|r| forward(params, r).unwrap()).collect();
    spec.evaluate(&traces).unwrap().total
}

fn encodings(rng: &mut impl Rng, d: usize) -> Encodings {
    std::array::from_fn(|_| gauss(rng, d))
}

#[derive(Debug, Clone, Copy)]
pub struct Terms {
    pub entropy: bool,
    pub self_train: bool,
    pub align: Option<bool>, // Some(true) = mean squared
    pub supervised: bool,
}

pub fn spec_for(rng: &mut impl Rng, terms: Terms, n: usize, d: usize) -> LossSpec {
    let labels = |rng: &mut ChaCha8Rng| (0..n).map(|_| rng.random_range(0..2)).collect::<Vec<_>>();
    let mut r = ChaCha8Rng::seed_from_u64(rng.random());
    LossSpec {
        entropy: terms.entropy,
        self_train: terms.self_train.then(|| labels(&mut r)),
        supervised: terms.supervised.then(|| labels(&mut r)),
        align: terms.align.map(|mse| AlignSpec {
            gamma: r.random_range(0.1..3.0),
            targets: (0..n)
                .map(|i| {
                    // leave some queries without references
                    if i % 3 == 2 {
                        return None;
                    }
                    let refs: Vec<Encodings> = (0..r.random_range(1..4))
                        .map(|_| encodings(&mut r, d))
                        .collect();
                    let views: Vec<&Encodings> = refs.iter().collect();
                    Some(if mse {
                        AlignTarget::MeanSquared(reference_mean(&views).unwrap())
                    } else {
                        let ents: Vec<f64> =
                            (0..refs.len()).map(|_| r.random_range(0.0..0.69)).collect();
                        AlignTarget::Anchors(anchors_from(&ents, &views).unwrap())
                    })
                })
                .collect(),
        }),
    }
}

/// Returns the worst elementwise relative error over the masked tensors.
pub fn check(
    params: &ModelParams,
    mask: &AdaptableMask,
    recs: &[VideoRecord],
    spec: &LossSpec,
) -> (f64, String) {
    let traces: Vec<_> = recs.iter().map(|r| forward(params, r).unwrap()).collect();
    let (_, grads) = loss_and_gradients(params, mask, &traces, spec).unwrap();
    let mut worst = (0.0f64, String::new());
    for (name, g) in &grads.entries {
        for k in 0..g.data.len() {
            let at = |delta: f64| {
                let mut p = params.clone();
                p.for_each_mut(|n, t| {
                    if &n == name {
                        t.data[k] += delta;
                    }
                });
                batch_loss(&p, recs, spec)
            };
            let numeric = (at(STEP) - at(-STEP)) / (2.0 * STEP);
            let analytic = g.data[k];
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR);
            if rel > worst.0 {
                worst = (
                    rel,
                    format!("{name}[{k}] analytic {analytic:e} numeric {numeric:e}"),
                );
            }
        }
    }
    worst
}

pub fn random_model(rng: &mut ChaCha8Rng) -> ModelParams {
    let dims = ModalityDims([
        rng.random_range(2..9),
        rng.random_range(2..9),
        rng.random_range(2..17),
    ]);
    let d = [4, 6, 8][rng.random_range(0..3)];
    let mut cfg = ModelConfig::with_dims(dims, d);
    cfg.fusion_layers = rng.random_range(1..3);
    cfg.fusion_heads = [1, 2][rng.random_range(0..2)];
    cfg.encoder_hidden = rng.random_range(3..8);
    let mut p = init_model(&cfg, rng.random()).unwrap();
    // move off the symmetric initialization
    p.for_each_mut(|_, t| {
        for x in &mut t.data {
            *x += 0.2 * rng.sample::<f64, _>(StandardNormal);
        }
    });
    p
}

pub fn all_term_sets() -> Vec<Terms> {
    let mut out = Vec::new();
    for bits in 1u32..32 {
        let align = match (bits & 4 != 0, bits & 8 != 0) {
            (false, _) => None,
            (true, mse) => Some(mse),
        };
        if bits & 8 != 0 && bits & 4 == 0 {
            continue;
        }
        out.push(Terms {
            entropy: bits & 1 != 0,
            self_train: bits & 2 != 0,
            align,
            supervised: bits & 16 != 0,
        });
    }
    out
}

/// Every term set under the standard mask plus `full` random sets under
/// the full mask. Returns the number of configurations and the worst
/// relative error.
pub fn run(seed: u64, full: usize) -> Result<(usize, f64), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sets = all_term_sets();
    let mut worst = 0.0f64;
    let mut configs = 0;
    for i in 0..sets.len() + full {
        let standard = i < sets.len();
        let terms = if standard {
            sets[i]
        } else {
            sets[rng.random_range(0..sets.len())]
        };
        let params = random_model(&mut rng);
        let n = rng.random_range(1..5);
        let recs: Vec<_> = (0..n)
            .map(|j| record(&mut rng, j, params.config.input_dims))
            .collect();
        let spec = spec_for(&mut rng, terms, n, params.config.encoder_out);
        let mask = if standard {
            AdaptableMask::standard(&params)
        } else {
            AdaptableMask::all(&params)
        };
        let (err, at) = check(&params, &mask, &recs, &spec);
        if err >= TOL {
            return Err(format!(
                "config {i} {terms:?}: relative error {err:e} at {at}"
            ));
        }
        worst = worst.max(err);
        configs += 1;
    }
    Ok((configs, worst))
}
