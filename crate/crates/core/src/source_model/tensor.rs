//! Dense row-major tensors and the handful of kernels the model needs.

/// A named-shape buffer of `f64`. Matrices are `[rows, cols]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        self.shape[1]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn zeroed(&self) -> Self {
        Tensor::zeros(&self.shape)
    }

    pub fn sq_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }
}

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

pub fn norm(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

/// `W x + b` with `W: [out, in]`.
pub fn affine(w: &Tensor, b: &Tensor, x: &[f64]) -> Vec<f64> {
    debug_assert_eq!(w.cols(), x.len());
    (0..w.rows())
        .map(|i| dot(w.row(i), x) + b.data[i])
        .collect()
}

/// Accumulates the gradient of `y = W x + b` into `dw`, `db` and returns
/// `dx` for upstream `dy`.
pub fn affine_backward(
    w: &Tensor,
    x: &[f64],
    dy: &[f64],
    dw: &mut Tensor,
    db: &mut Tensor,
) -> Vec<f64> {
    let (rows, cols) = (w.rows(), w.cols());
    let mut dx = vec![0.0; cols];
    for i in 0..rows {
        let g = dy[i];
        db.data[i] += g;
        if g == 0.0 {
            continue;
        }
        let wrow = &w.data[i * cols..(i + 1) * cols];
        let dwrow = &mut dw.data[i * cols..(i + 1) * cols];
        for j in 0..cols {
            dwrow[j] += g * x[j];
            dx[j] += g * wrow[j];
        }
    }
    dx
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

/// Tanh approximation of the Gaussian-error linear unit.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

pub fn gelu_grad(x: f64) -> f64 {
    let u = GELU_C * (x + GELU_A * x * x * x);
    let t = u.tanh();
    let du = GELU_C * (1.0 + 3.0 * GELU_A * x * x);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Layer-norm intermediates for one vector.
#[derive(Debug, Clone, PartialEq)]
pub struct NormCache {
    pub normalized: Vec<f64>,
    pub inv_std: f64,
}

pub fn layer_norm(x: &[f64], gain: &Tensor, bias: &Tensor) -> (Vec<f64>, NormCache) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let inv_std = 1.0 / (var + LAYER_NORM_EPS).sqrt();
    let normalized: Vec<f64> = x.iter().map(|v| (v - mean) * inv_std).collect();
    let y = normalized
        .iter()
        .zip(&gain.data)
        .zip(&bias.data)
        .map(|((h, g), b)| g * h + b)
        .collect();
    (
        y,
        NormCache {
            normalized,
            inv_std,
        },
    )
}

pub fn layer_norm_backward(
    cache: &NormCache,
    gain: &Tensor,
    dy: &[f64],
    dgain: &mut Tensor,
    dbias: &mut Tensor,
) -> Vec<f64> {
    let n = dy.len() as f64;
    let mut dh = vec![0.0; dy.len()];
    for k in 0..dy.len() {
        dgain.data[k] += dy[k] * cache.normalized[k];
        dbias.data[k] += dy[k];
        dh[k] = dy[k] * gain.data[k];
    }
    let mean_dh = dh.iter().sum::<f64>() / n;
    let mean_dh_h = dh
        .iter()
        .zip(&cache.normalized)
        .map(|(a, b)| a * b)
        .sum::<f64>()
        / n;
    dh.iter()
        .zip(&cache.normalized)
        .map(|(g, h)| cache.inv_std * (g - mean_dh - h * mean_dh_h))
        .collect()
}

/// Numerically stable softmax.
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Backward of softmax: `dz = p * (dp - <p, dp>)`.
pub fn softmax_backward(p: &[f64], dp: &[f64]) -> Vec<f64> {
    let inner = dot(p, dp);
    p.iter().zip(dp).map(|(pi, gi)| pi * (gi - inner)).collect()
}
