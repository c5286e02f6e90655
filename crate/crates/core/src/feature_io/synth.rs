//! Synthetic two-domain feature streams.
//!
//! Each domain holds `events` news events. A record of event `e` and class
//! `c` in modality `m` is drawn as
//!
//! ```text
//! x = domain_mean_m + event_offset_{e,m} + s * class_offset_{c,e,m} + noise
//! ```
//!
//! where `s ~ U(1 - signal_spread, 1 + signal_spread)` is a per-record
//! signal strength shared by the three modalities.
//!
//! The target domain mean is the source mean displaced by
//! `shift * noise` along a random unit direction per modality, its class
//! direction is rotated by `class_rotation`, and target events are fresh
//! draws unless `shared_topics` is set. Per-event fake
//! fractions follow `Beta(k p, k (1 - p))` with `k = imbalance` and
//! `p = fake_fraction`, which is U-shaped for small `k`; `k = 0` makes
//! every event single-class.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Class, Dataset, ModalityDims, Role, VideoRecord, FAKE, REAL};
use crate::error::{RadarError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub events: usize,
    /// Number of source events when different from `events`.
    #[serde(default)]
    pub source_events: Option<usize>,
    pub per_event: usize,
    pub dims: ModalityDims,
    /// Domain displacement, in units of `noise`.
    pub shift: f64,
    /// Cosine between the displacement and the class direction of each
    /// modality, in `[-1, 1]`; 0 leaves it random.
    pub shift_alignment: f64,
    /// Angle in radians by which the target class direction is rotated away
    /// from the source class direction in each modality.
    pub class_rotation: f64,
    /// Per-coordinate standard deviation of the record noise.
    pub noise: f64,
    /// Per-coordinate standard deviation of the domain base mean.
    pub base_scale: f64,
    /// Per-coordinate standard deviation of event offsets.
    pub event_spread: f64,
    /// Distance between the two class means.
    pub class_separation: f64,
    /// Per-event random perturbation of the class direction, relative to
    /// `class_separation`.
    pub class_jitter: f64,
    /// Half-width of the per-record signal strength interval around 1.
    pub signal_spread: f64,
    /// Beta concentration of per-event fake fractions.
    pub imbalance: f64,
    /// Mean fake fraction.
    pub fake_fraction: f64,
    /// Spread of event arrival windows, in event slots; >1 interleaves.
    pub arrival_overlap: f64,
    /// Reuse the source events in the target domain.
    pub shared_topics: bool,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            events: 40,
            source_events: None,
            per_event: 12,
            dims: ModalityDims::uniform(16),
            shift: 1.0,
            shift_alignment: 0.0,
            class_rotation: 1.25,
            noise: 1.0,
            base_scale: 1.0,
            event_spread: 1.0,
            class_separation: 5.0,
            class_jitter: 0.2,
            signal_spread: 0.0,
            imbalance: 0.3,
            fake_fraction: 0.5,
            arrival_overlap: 1.5,
            shared_topics: false,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.events == 0 || self.source_events == Some(0) {
            return Err(RadarError::invalid(
                "synthetic spec needs at least one event",
            ));
        }
        if self.per_event == 0 {
            return Err(RadarError::invalid(
                "synthetic spec needs at least one record per event",
            ));
        }
        if self.dims.0.contains(&0) {
            return Err(RadarError::invalid(
                "synthetic modality dims must be positive",
            ));
        }
        let positive = [("noise", self.noise)];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(RadarError::invalid(format!("{name} must be positive")));
            }
        }
        let nonneg = [
            ("shift", self.shift),
            ("base_scale", self.base_scale),
            ("event_spread", self.event_spread),
            ("class_separation", self.class_separation),
            ("class_jitter", self.class_jitter),
            ("class_rotation", self.class_rotation),
            ("signal_spread", self.signal_spread),
            ("imbalance", self.imbalance),
            ("arrival_overlap", self.arrival_overlap),
        ];
        for (name, v) in nonneg {
            if !(v.is_finite() && v >= 0.0) {
                return Err(RadarError::invalid(format!("{name} must be non-negative")));
            }
        }
        if !(0.0..=std::f64::consts::PI).contains(&self.class_rotation) {
            return Err(RadarError::invalid("class_rotation must lie in [0, pi]"));
        }
        if !(-1.0..=1.0).contains(&self.shift_alignment) {
            return Err(RadarError::invalid("shift_alignment must lie in [-1, 1]"));
        }
        if !(0.0..=1.0).contains(&self.fake_fraction) {
            return Err(RadarError::invalid("fake_fraction must lie in [0, 1]"));
        }
        Ok(())
    }
}

// RNG streams; each domain draws topics and samples independently.
const STREAM_GLOBAL: u64 = 0;
const STREAM_SOURCE_TOPICS: u64 = 1;
const STREAM_SOURCE_SAMPLES: u64 = 2;
const STREAM_TARGET_TOPICS: u64 = 3;
const STREAM_TARGET_SAMPLES: u64 = 4;

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

fn gaussian(rng: &mut impl Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

fn unit(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    loop {
        let v = gaussian(rng, n, 1.0);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// `a c + sqrt(1 - a^2) u'`, where `u'` is `u` made orthogonal to the unit
/// vector `c`. Falls back to `u` when `a = 0` so the random direction is
/// unchanged.
fn mix_direction(c: &[f64], u: &[f64], a: f64) -> Vec<f64> {
    if a == 0.0 {
        return u.to_vec();
    }
    let proj: f64 = c.iter().zip(u).map(|(x, y)| x * y).sum();
    let mut perp: Vec<f64> = u.iter().zip(c).map(|(y, x)| y - proj * x).collect();
    let norm = perp.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 1e-12 {
        perp.iter_mut().for_each(|x| *x /= norm);
    }
    let b = (1.0 - a * a).max(0.0).sqrt();
    c.iter().zip(&perp).map(|(x, y)| a * x + b * y).collect()
}

/// Rotates the unit vector `c` by `theta` within the plane spanned by `c`
/// and `u`.
fn rotate_toward(c: &[f64], u: &[f64], theta: f64) -> Vec<f64> {
    if theta == 0.0 {
        return c.to_vec();
    }
    let proj: f64 = c.iter().zip(u).map(|(x, y)| x * y).sum();
    let mut perp: Vec<f64> = u.iter().zip(c).map(|(y, x)| y - proj * x).collect();
    let norm = perp.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    perp.iter_mut().for_each(|x| *x /= norm);
    let (sin, cos) = theta.sin_cos();
    c.iter()
        .zip(&perp)
        .map(|(x, y)| cos * x + sin * y)
        .collect()
}

struct Globals {
    source_mean: [Vec<f64>; 3],
    shift_dir: [Vec<f64>; 3],
    class_dir: [Vec<f64>; 3],
    target_class_dir: [Vec<f64>; 3],
}

/// Per-event center, class offset (toward fake) and fake fraction.
#[derive(Debug, Clone, PartialEq)]
struct Topic {
    center: [Vec<f64>; 3],
    class_offset: [Vec<f64>; 3],
    fake_fraction: f64,
}

fn globals(spec: &SynthSpec, seed: u64) -> Globals {
    let mut g = rng(seed, STREAM_GLOBAL);
    let dims = spec.dims.0;
    let source_mean = dims.map(|d| gaussian(&mut g, d, spec.base_scale));
    let random_dir = dims.map(|d| unit(&mut g, d));
    let class_dir = dims.map(|d| unit(&mut g, d));
    let shift_dir =
        std::array::from_fn(|m| mix_direction(&class_dir[m], &random_dir[m], spec.shift_alignment));
    let turn = dims.map(|d| unit(&mut g, d));
    let target_class_dir =
        std::array::from_fn(|m| rotate_toward(&class_dir[m], &turn[m], spec.class_rotation));
    Globals {
        source_mean,
        shift_dir,
        class_dir,
        target_class_dir,
    }
}

fn domain_mean(spec: &SynthSpec, g: &Globals, role: Role) -> [Vec<f64>; 3] {
    let displacement = match role {
        Role::Source => 0.0,
        Role::Target => spec.shift * spec.noise,
    };
    std::array::from_fn(|m| {
        g.source_mean[m]
            .iter()
            .zip(&g.shift_dir[m])
            .map(|(b, u)| b + displacement * u)
            .collect()
    })
}

fn fake_fraction(spec: &SynthSpec, rng: &mut impl Rng) -> f64 {
    let p = spec.fake_fraction;
    if spec.imbalance == 0.0 || p == 0.0 || p == 1.0 {
        return if rng.random::<f64>() < p { 1.0 } else { 0.0 };
    }
    let beta = Beta::new(spec.imbalance * p, spec.imbalance * (1.0 - p))
        .expect("beta parameters are positive");
    beta.sample(rng)
}

fn topics(spec: &SynthSpec, g: &Globals, role: Role, seed: u64) -> Vec<Topic> {
    let stream = match (role, spec.shared_topics) {
        (Role::Source, _) | (Role::Target, true) => STREAM_SOURCE_TOPICS,
        (Role::Target, false) => STREAM_TARGET_TOPICS,
    };
    let mut r = rng(seed, stream);
    let base = domain_mean(spec, g, role);
    let half = spec.class_separation / 2.0;
    let count = match role {
        Role::Source => spec.source_events.unwrap_or(spec.events),
        Role::Target => spec.events,
    };
    (0..count)
        .map(|_| {
            let fake_fraction = fake_fraction(spec, &mut r);
            let mut center: [Vec<f64>; 3] = Default::default();
            let mut class_offset: [Vec<f64>; 3] = Default::default();
            for m in 0..3 {
                let d = spec.dims.0[m];
                let offset = gaussian(&mut r, d, spec.event_spread);
                let jitter = gaussian(&mut r, d, spec.class_jitter / (d as f64).sqrt());
                // class direction perturbed per event, renormalized
                let axis = match role {
                    Role::Source => &g.class_dir[m],
                    Role::Target => &g.target_class_dir[m],
                };
                let mut dir: Vec<f64> = axis.iter().zip(&jitter).map(|(c, j)| c + j).collect();
                let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
                dir.iter_mut().for_each(|x| *x /= norm);
                center[m] = (0..d).map(|k| base[m][k] + offset[k]).collect();
                class_offset[m] = dir.iter().map(|x| half * x).collect();
            }
            Topic {
                center,
                class_offset,
                fake_fraction,
            }
        })
        .collect()
}

fn sample_domain(spec: &SynthSpec, topics: &[Topic], role: Role, seed: u64) -> Result<Dataset> {
    let (stream, prefix) = match role {
        Role::Source => (STREAM_SOURCE_SAMPLES, "s"),
        Role::Target => (STREAM_TARGET_SAMPLES, "t"),
    };
    let mut r = rng(seed, stream);
    let mut drafts: Vec<(f64, VideoRecord)> = Vec::with_capacity(topics.len() * spec.per_event);
    for (e, topic) in topics.iter().enumerate() {
        let event_id = format!("{prefix}-e{e:03}");
        for j in 0..spec.per_event {
            let label: Class = if r.random::<f64>() < topic.fake_fraction {
                FAKE
            } else {
                REAL
            };
            let sign = if label == FAKE { 1.0 } else { -1.0 };
            let strength = 1.0 + spec.signal_spread * (2.0 * r.random::<f64>() - 1.0);
            let features: [Vec<f64>; 3] = std::array::from_fn(|m| {
                topic.center[m]
                    .iter()
                    .zip(&topic.class_offset[m])
                    .map(|(c, o)| {
                        c + sign * strength * o + spec.noise * r.sample::<f64, _>(StandardNormal)
                    })
                    .collect()
            });
            let time = e as f64 + spec.arrival_overlap * r.random::<f64>();
            let [v, t, a] = features;
            drafts.push((
                time,
                VideoRecord::new(
                    format!("{event_id}-r{j:03}"),
                    event_id.clone(),
                    0,
                    v,
                    t,
                    a,
                    Some(label),
                ),
            ));
        }
    }
    drafts.sort_by(|x, y| x.0.total_cmp(&y.0));
    let records = drafts
        .into_iter()
        .enumerate()
        .map(|(i, (_, mut rec))| {
            rec.arrival_index = i as u64;
            rec
        })
        .collect();
    Dataset::new(records, role, spec.dims)
}

/// Generates `(source, target)`. Both carry labels; the target's are
/// quarantined for evaluation. Deterministic in `(spec, seed)`.
pub fn generate_synthetic(spec: &SynthSpec, seed: u64) -> Result<(Dataset, Dataset)> {
    spec.validate()?;
    let g = globals(spec, seed);
    let source_topics = topics(spec, &g, Role::Source, seed);
    let target_topics = topics(spec, &g, Role::Target, seed);
    Ok((
        sample_domain(spec, &source_topics, Role::Source, seed)?,
        sample_domain(spec, &target_topics, Role::Target, seed)?,
    ))
}
