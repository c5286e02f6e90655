//! Unbiased squared maximum mean discrepancy with a Gaussian kernel.

use serde::{Deserialize, Serialize};

use crate::error::{RadarError, Result};
use crate::feature_io::{Dataset, Modality};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MmdConfig {
    pub sigma: f64,
    /// Sum the three per-modality estimates; otherwise treat the
    /// concatenated features as one set.
    pub per_modality: bool,
}

impl Default for MmdConfig {
    fn default() -> Self {
        MmdConfig {
            sigma: 1.0,
            per_modality: true,
        }
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(RadarError::invalid(format!(
            "kernel bandwidth must be positive, got {sigma}"
        )));
    }
    Ok(())
}

/// `exp(-|x - y|^2 / (2 sigma^2))`.
pub fn rbf_kernel(x: &[f64], y: &[f64], sigma: f64) -> f64 {
    let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    (-d2 / (2.0 * sigma * sigma)).exp()
}

/// The unbiased estimator; may be slightly negative.
pub fn mmd2_unbiased<X: AsRef<[f64]>, Y: AsRef<[f64]>>(
    x: &[X],
    y: &[Y],
    sigma: f64,
) -> Result<f64> {
    check_sigma(sigma)?;
    let (m, n) = (x.len(), y.len());
    if m < 2 || n < 2 {
        return Err(RadarError::invalid(format!(
            "MMD needs at least 2 samples per set, got {m} and {n}"
        )));
    }
    let dim = x[0].as_ref().len();
    if let Some(bad) = x
        .iter()
        .map(|v| v.as_ref().len())
        .chain(y.iter().map(|v| v.as_ref().len()))
        .find(|&d| d != dim)
    {
        return Err(RadarError::DimensionMismatch {
            context: "MMD sample".into(),
            expected: dim,
            actual: bad,
        });
    }
    let within = |s: &[&[f64]]| -> f64 {
        let mut acc = 0.0;
        for i in 0..s.len() {
            for j in i + 1..s.len() {
                acc += rbf_kernel(s[i], s[j], sigma);
            }
        }
        2.0 * acc / (s.len() * (s.len() - 1)) as f64
    };
    let xs: Vec<&[f64]> = x.iter().map(AsRef::as_ref).collect();
    let ys: Vec<&[f64]> = y.iter().map(AsRef::as_ref).collect();
    let mut cross = 0.0;
    for a in &xs {
        for b in &ys {
            cross += rbf_kernel(a, b, sigma);
        }
    }
    Ok(within(&xs) + within(&ys) - 2.0 * cross / (m * n) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetMmd {
    /// Indexed by modality; all equal to `total` when not per-modality.
    pub per_modality: [f64; 3],
    pub total: f64,
}

pub fn dataset_mmd_with(a: &Dataset, b: &Dataset, config: &MmdConfig) -> Result<DatasetMmd> {
    if a.dims() != b.dims() {
        return Err(RadarError::invalid(format!(
            "dataset dims differ: {} vs {}",
            a.dims(),
            b.dims()
        )));
    }
    if config.per_modality {
        let mut per = [0.0; 3];
        for m in Modality::ALL {
            let xa: Vec<&[f64]> = a.records().iter().map(|r| r.modality(m)).collect();
            let xb: Vec<&[f64]> = b.records().iter().map(|r| r.modality(m)).collect();
            per[m.index()] = mmd2_unbiased(&xa, &xb, config.sigma)?;
        }
        Ok(DatasetMmd {
            per_modality: per,
            total: per.iter().sum(),
        })
    } else {
        let concat = |d: &Dataset| -> Vec<Vec<f64>> {
            d.records().iter().map(|r| r.features.concat()).collect()
        };
        let total = mmd2_unbiased(&concat(a), &concat(b), config.sigma)?;
        Ok(DatasetMmd {
            per_modality: [total; 3],
            total,
        })
    }
}

/// Sum over modalities of the per-modality estimates.
pub fn dataset_mmd(a: &Dataset, b: &Dataset, sigma: f64) -> Result<f64> {
    dataset_mmd_with(
        a,
        b,
        &MmdConfig {
            sigma,
            per_modality: true,
        },
    )
    .map(|r| r.total)
}

/// Clamps a negative estimate to zero, for display only.
pub fn display_value(v: f64) -> f64 {
    v.max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_examples() {
        assert_eq!(rbf_kernel(&[1.0, 2.0], &[1.0, 2.0], 1.0), 1.0);
        assert!((rbf_kernel(&[0.0], &[1.0], 1.0) - (-0.5f64).exp()).abs() < 1e-16);
        let mut prev = 1.0;
        for d in 1..10 {
            let k = rbf_kernel(&[0.0], &[d as f64], 1.0);
            assert!(k < prev);
            prev = k;
        }
    }

    #[test]
    fn estimator_examples() {
        let same = [[3.0, 1.0], [3.0, 1.0]];
        assert!(mmd2_unbiased(&same, &same, 1.0).unwrap().abs() < 1e-12);
        let v = mmd2_unbiased(&[[0.0], [0.0]], &[[1.0], [1.0]], 1.0).unwrap();
        assert!((v - 0.786_939).abs() < 1e-6);
        assert!(mmd2_unbiased(&[[0.0]], &[[1.0], [1.0]], 1.0).is_err());
        assert!(mmd2_unbiased(&[[0.0], [0.0]], &[[1.0], [1.0]], 0.0).is_err());
    }
}
