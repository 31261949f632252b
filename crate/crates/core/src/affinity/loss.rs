use serde::{Deserialize, Serialize};

use super::{DanModel, PairTensor};
use crate::error::{Error, Result};
use crate::matrix::{AffinityMatrix, LabelMatrix, Matrix};

/// Training objective for the affinity network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    /// Mean absolute difference between the affinity and label matrices.
    Mask,
    /// Margin ranking of each positive against its row and column negatives.
    Affinity,
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mask" => Ok(LossKind::Mask),
            "affinity" => Ok(LossKind::Affinity),
            other => Err(Error::Config(format!(
                "unknown loss `{other}` (expected `mask` or `affinity`)"
            ))),
        }
    }
}

/// `1/(M·N) · Σ |C_ij − G_ij|`.
pub fn mask_loss(c: &AffinityMatrix, g: &LabelMatrix) -> Result<f64> {
    c.ensure_same_shape(g)?;
    if c.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = c
        .as_slice()
        .iter()
        .zip(g.as_slice())
        .map(|(c, g)| (c - g).abs())
        .sum();
    Ok(total / c.as_slice().len() as f64)
}

fn is_positive(g: f64) -> bool {
    g == 1.0
}

/// Visits every active hinge `(negative, positive, value)` of the affinity loss.
fn for_each_hinge(c: &Matrix, g: &Matrix, margin: f64, mut visit: impl FnMut((usize, usize), (usize, usize), f64)) {
    let (m, n) = c.shape();
    for i in 0..m {
        for j in 0..n {
            if !is_positive(g[(i, j)]) {
                continue;
            }
            let pos = c[(i, j)];
            for k in 0..n {
                if !is_positive(g[(i, k)]) {
                    let h = c[(i, k)] - pos + margin;
                    if h > 0.0 {
                        visit((i, k), (i, j), h);
                    }
                }
            }
            for p in 0..m {
                if !is_positive(g[(p, j)]) {
                    let h = c[(p, j)] - pos + margin;
                    if h > 0.0 {
                        visit((p, j), (i, j), h);
                    }
                }
            }
        }
    }
}

/// Sum over positives `(i, j)` of the hinges `max(0, C_ik − C_ij + m)` over row negatives and
/// `max(0, C_pj − C_ij + m)` over column negatives.
pub fn affinity_loss(c: &AffinityMatrix, g: &LabelMatrix, margin: f64) -> Result<f64> {
    c.ensure_same_shape(g)?;
    let mut total = 0.0;
    for_each_hinge(c, g, margin, |_, _, h| total += h);
    Ok(total)
}

/// Loss value and `∂L/∂C`.
fn loss_and_output_grad(c: &Matrix, g: &Matrix, kind: LossKind, margin: f64) -> Result<(f64, Matrix)> {
    c.ensure_same_shape(g)?;
    let (m, n) = c.shape();
    let mut grad = Matrix::zeros(m, n);
    let loss = match kind {
        LossKind::Mask => {
            let scale = 1.0 / (m * n).max(1) as f64;
            for i in 0..m {
                for j in 0..n {
                    let d = c[(i, j)] - g[(i, j)];
                    grad[(i, j)] = if d > 0.0 {
                        scale
                    } else if d < 0.0 {
                        -scale
                    } else {
                        0.0
                    };
                }
            }
            mask_loss(c, g)?
        }
        LossKind::Affinity => {
            let mut total = 0.0;
            for_each_hinge(c, g, margin, |neg, pos, h| {
                total += h;
                grad[neg] += 1.0;
                grad[pos] -= 1.0;
            });
            total
        }
    };
    Ok((loss, grad))
}

/// Gradients with the same layout as [`DanModel`]'s parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct DanGradients {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

impl DanGradients {
    fn zeros_like(model: &DanModel) -> Self {
        Self {
            w1: vec![0.0; model.w1.len()],
            b1: vec![0.0; model.b1.len()],
            w2: vec![0.0; model.w2.len()],
            b2: 0.0,
        }
    }

    /// Flattened in the order of [`DanModel::parameters`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.w1.len() + self.b1.len() + self.w2.len() + 1);
        v.extend_from_slice(&self.w1);
        v.extend_from_slice(&self.b1);
        v.extend_from_slice(&self.w2);
        v.push(self.b2);
        v
    }

    pub fn is_zero(&self) -> bool {
        self.flatten().iter().all(|&g| g == 0.0)
    }
}

/// Loss of the network on one association sample together with its exact gradient.
///
/// Subgradients at hinge and rectifier kinks are taken as zero.
pub fn loss_gradients(
    model: &DanModel,
    pairs: &PairTensor,
    labels: &LabelMatrix,
    kind: LossKind,
    margin: f64,
) -> Result<(f64, DanGradients)> {
    if pairs.dim() != model.input_dim() {
        return Err(Error::shape_mismatch(&[model.input_dim()], &[pairs.dim()]));
    }
    if (pairs.rows(), pairs.cols()) != labels.shape() {
        return Err(Error::shape_mismatch(
            &[labels.rows(), labels.cols()],
            &[pairs.rows(), pairs.cols()],
        ));
    }
    let acts: Vec<_> = pairs.flat_pairs().map(|x| model.activate(x)).collect();
    let c = Matrix::from_vec(
        pairs.rows(),
        pairs.cols(),
        acts.iter().map(|a| a.output).collect(),
    )?;
    let (loss, d_out) = loss_and_output_grad(&c, labels, kind, margin)?;

    let h = model.hidden();
    let mut grads = DanGradients::zeros_like(model);
    let mut d_pre = vec![0.0; h];
    for ((x, act), &dc) in pairs.flat_pairs().zip(&acts).zip(d_out.as_slice()) {
        if dc == 0.0 {
            continue;
        }
        let dz2 = dc * act.output * (1.0 - act.output);
        grads.b2 += dz2;
        for u in 0..h {
            let z = act.pre[u];
            if z > 0.0 {
                grads.w2[u] += dz2 * z;
                d_pre[u] = dz2 * model.w2[u];
            } else {
                d_pre[u] = 0.0;
            }
            grads.b1[u] += d_pre[u];
        }
        for (k, &xk) in x.iter().enumerate() {
            if xk == 0.0 {
                continue;
            }
            let row = &mut grads.w1[k * h..(k + 1) * h];
            for (g, d) in row.iter_mut().zip(&d_pre) {
                *g += xk * d;
            }
        }
    }
    Ok((loss, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::affinity::{build_pair_features, CommonFeature, SimilarityWeights};

    fn c_example() -> Matrix {
        Matrix::from_rows(&[[0.9, 0.8], [0.4, 0.6]])
    }

    #[test]
    fn mask_loss_examples() {
        let g = Matrix::identity(2);
        assert_eq!(mask_loss(&g, &g).unwrap(), 0.0);
        assert!((mask_loss(&c_example(), &g).unwrap() - 0.425).abs() < 1e-12);
        let half = Matrix::filled(2, 2, 0.5);
        let g2 = Matrix::from_rows(&[[0.0, 1.0], [1.0, 1.0]]);
        assert!((mask_loss(&half, &g2).unwrap() - 0.5).abs() < 1e-12);
        assert!(mask_loss(&half, &Matrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn affinity_loss_examples() {
        let g = Matrix::identity(2);
        // (0,0): row 0.8-0.9+0.2=0.1, col 0.4-0.9+0.2<0; (1,1): row 0.4-0.6+0.2=0 (inactive),
        // col 0.8-0.6+0.2=0.4
        assert!((affinity_loss(&c_example(), &g, 0.2).unwrap() - 0.5).abs() < 1e-12);

        let separated = Matrix::from_rows(&[[0.9, 0.1], [0.2, 0.95]]);
        assert_eq!(affinity_loss(&separated, &g, 0.2).unwrap(), 0.0);

        assert_eq!(affinity_loss(&c_example(), &Matrix::zeros(2, 2), 0.2).unwrap(), 0.0);
        assert!(affinity_loss(&c_example(), &Matrix::zeros(3, 2), 0.2).is_err());
    }

    fn sample() -> (PairTensor, Matrix) {
        let a = [
            CommonFeature::new(20.0, 0.0, -3.0, 0.9),
            CommonFeature::new(35.0, 0.05, 1.0, 0.6),
        ];
        let b = [
            CommonFeature::new(21.0, 0.01, -3.5, 0.8),
            CommonFeature::new(34.0, 0.04, 0.5, 0.7),
        ];
        (
            build_pair_features(&a, &b, &SimilarityWeights::default()).unwrap(),
            Matrix::identity(2),
        )
    }

    #[test]
    fn inactive_hinges_give_zero_gradient() {
        let (pairs, g) = sample();
        // Margin far below zero deactivates every hinge.
        let model = DanModel::new(4, 8, 3);
        let (loss, grads) = loss_gradients(&model, &pairs, &g, LossKind::Affinity, -5.0).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grads.is_zero());
    }

    #[test]
    fn mask_gradient_pushes_output_down_when_above_label() {
        let a = [CommonFeature::new(20.0, 0.0, 0.0, 0.9)];
        let b = [CommonFeature::new(40.0, 0.1, 2.0, 0.1)];
        let pairs = build_pair_features(&a, &b, &SimilarityWeights::default()).unwrap();
        let g = Matrix::zeros(1, 1);
        let model = DanModel::new(4, 8, 11);
        let (_, grads) = loss_gradients(&model, &pairs, &g, LossKind::Mask, 0.2).unwrap();
        // The output bias acts on C monotonically, so a descent step on it lowers C.
        assert!(grads.b2 > 0.0);
        let mut stepped = model.clone();
        stepped.b2 -= 0.5 * grads.b2 / grads.b2.abs();
        assert!(stepped.forward_pair(pairs.pair(0, 0)) < model.forward_pair(pairs.pair(0, 0)));
    }

    #[test]
    fn loss_kind_parses() {
        assert_eq!("mask".parse::<LossKind>().unwrap(), LossKind::Mask);
        assert_eq!("affinity".parse::<LossKind>().unwrap(), LossKind::Affinity);
        assert!("l2".parse::<LossKind>().is_err());
    }
}
