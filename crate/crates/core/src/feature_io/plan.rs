use std::collections::HashMap;
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{RadarError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BatchMode {
    Random,
    #[serde(rename = "eventwise")]
    EventWise,
}

impl std::str::FromStr for BatchMode {
    type Err = RadarError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(BatchMode::Random),
            "eventwise" | "event-wise" | "event_wise" => Ok(BatchMode::EventWise),
            other => Err(RadarError::invalid(format!(
                "unknown batch mode {other:?} (expected random or eventwise)"
            ))),
        }
    }
}

impl fmt::Display for BatchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BatchMode::Random => "random",
            BatchMode::EventWise => "eventwise",
        })
    }
}

/// The order in which target records are presented, as id lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchPlan {
    pub batches: Vec<Vec<String>>,
    pub mode: BatchMode,
    pub batch_size: usize,
}

impl BatchPlan {
    fn chunked(ids: Vec<String>, batch_size: usize, mode: BatchMode) -> Self {
        let batches = ids.chunks(batch_size).map(<[String]>::to_vec).collect();
        BatchPlan {
            batches,
            mode,
            batch_size,
        }
    }

    pub fn num_records(&self) -> usize {
        self.batches.iter().map(Vec::len).sum()
    }
}

fn check_batch_size(batch_size: usize) -> Result<()> {
    if batch_size == 0 {
        return Err(RadarError::invalid("batch_size must be at least 1"));
    }
    Ok(())
}

/// Seeded uniform permutation of the dataset, cut into consecutive batches.
pub fn plan_random_batches(dataset: &Dataset, batch_size: usize, seed: u64) -> Result<BatchPlan> {
    check_batch_size(batch_size)?;
    let mut ids: Vec<String> = dataset.records().iter().map(|r| r.id.clone()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    Ok(BatchPlan::chunked(ids, batch_size, BatchMode::Random))
}

/// Events in order of first arrival, records within an event by arrival,
/// the whole sequence cut into consecutive batches. Batches may straddle an
/// event boundary.
pub fn plan_eventwise_batches(dataset: &Dataset, batch_size: usize) -> Result<BatchPlan> {
    check_batch_size(batch_size)?;
    let mut order: Vec<&str> = Vec::new();
    let mut groups: HashMap<&str, Vec<(u64, &str)>> = HashMap::new();
    for r in dataset.records() {
        if r.event_id.is_empty() {
            return Err(RadarError::InvalidRecord {
                id: r.id.clone(),
                message: "event-wise batching requires an event_id".into(),
            });
        }
        let group = groups.entry(r.event_id.as_str()).or_insert_with(|| {
            order.push(r.event_id.as_str());
            Vec::new()
        });
        group.push((r.arrival_index, r.id.as_str()));
    }
    // Records are stored in arrival order, so `order` is by first arrival.
    let mut ids = Vec::with_capacity(dataset.len());
    for event in order {
        let group = groups.get_mut(event).expect("group exists");
        group.sort_unstable();
        ids.extend(group.iter().map(|(_, id)| (*id).to_owned()));
    }
    Ok(BatchPlan::chunked(ids, batch_size, BatchMode::EventWise))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feature_io::{ModalityDims, Role, VideoRecord};

    fn dataset(events: &[&str]) -> Dataset {
        let records = events
            .iter()
            .enumerate()
            .map(|(i, e)| {
                VideoRecord::new(
                    format!("r{i}"),
                    *e,
                    i as u64,
                    vec![1.0],
                    vec![1.0],
                    vec![1.0],
                    None,
                )
            })
            .collect();
        Dataset::new(records, Role::Target, ModalityDims::uniform(1)).unwrap()
    }

    fn sizes(plan: &BatchPlan) -> Vec<usize> {
        plan.batches.iter().map(Vec::len).collect()
    }

    #[test]
    fn random_chunking() {
        let ds = dataset(&["e"; 10]);
        let plan = plan_random_batches(&ds, 4, 3).unwrap();
        assert_eq!(sizes(&plan), vec![4, 4, 2]);
        assert_eq!(plan, plan_random_batches(&ds, 4, 3).unwrap());

        let singles = plan_random_batches(&ds, 1, 3).unwrap();
        assert_eq!(singles.batches.len(), 10);
        let flat: Vec<String> = plan.batches.concat();
        let flat1: Vec<String> = singles.batches.concat();
        assert_eq!(flat, flat1);
    }

    #[test]
    fn zero_batch_size_rejected() {
        let ds = dataset(&["e"; 3]);
        assert!(plan_random_batches(&ds, 0, 1).is_err());
        assert!(plan_eventwise_batches(&ds, 0).is_err());
    }

    fn events_of(ds: &Dataset, plan: &BatchPlan) -> Vec<String> {
        plan.batches
            .iter()
            .map(|b| {
                b.iter()
                    .map(|id| ds.records()[ds.position(id).unwrap()].event_id.clone())
                    .collect::<String>()
            })
            .collect()
    }

    #[test]
    fn eventwise_groups_interleaved_arrivals() {
        let ds = dataset(&["A", "B", "A", "B", "A", "B", "B"]);
        let plan = plan_eventwise_batches(&ds, 7).unwrap();
        assert_eq!(events_of(&ds, &plan), vec!["AAABBBB"]);
        assert_eq!(plan.batches[0][..3], ["r0", "r2", "r4"]);
    }

    #[test]
    fn eventwise_straddles_boundaries() {
        let ds = dataset(&["A", "A", "A", "A", "A", "B", "B", "B", "B", "B"]);
        let plan = plan_eventwise_batches(&ds, 4).unwrap();
        assert_eq!(events_of(&ds, &plan), vec!["AAAA", "ABBB", "BB"]);

        let exact = plan_eventwise_batches(&ds, 5).unwrap();
        assert_eq!(events_of(&ds, &exact), vec!["AAAAA", "BBBBB"]);
    }
}
