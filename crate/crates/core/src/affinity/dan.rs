use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::PairTensor;
use crate::error::{Error, Result};
use crate::matrix::AffinityMatrix;

pub const DEFAULT_HIDDEN: usize = 64;

const MODEL_HEADER: &str = "fusetrack-dan v1";

/// Two fully connected layers: `D → H` with a rectifier, then `H → 1` with a sigmoid.
#[derive(Debug, Clone, PartialEq)]
pub struct DanModel {
    input_dim: usize,
    hidden: usize,
    seed: u64,
    /// `D×H`, row-major by input component.
    pub(crate) w1: Vec<f64>,
    pub(crate) b1: Vec<f64>,
    pub(crate) w2: Vec<f64>,
    pub(crate) b2: f64,
}

/// Intermediate values of one forward pass, kept for backpropagation.
pub(crate) struct PairActivation {
    pub pre: Vec<f64>,
    pub output: f64,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl DanModel {
    /// Fan-in scaled uniform initialization, deterministic in `seed`.
    pub fn new(input_dim: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound1 = 1.0 / (input_dim as f64).sqrt();
        let bound2 = 1.0 / (hidden as f64).sqrt();
        let w1 = (0..input_dim * hidden)
            .map(|_| rng.random_range(-bound1..bound1))
            .collect();
        let b1 = (0..hidden).map(|_| rng.random_range(-bound1..bound1)).collect();
        let w2 = (0..hidden).map(|_| rng.random_range(-bound2..bound2)).collect();
        let b2 = rng.random_range(-bound2..bound2);
        Self {
            input_dim,
            hidden,
            seed,
            w1,
            b1,
            w2,
            b2,
        }
    }

    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        Self {
            input_dim,
            hidden,
            seed: 0,
            w1: vec![0.0; input_dim * hidden],
            b1: vec![0.0; hidden],
            w2: vec![0.0; hidden],
            b2: 0.0,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn parameter_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + 1
    }

    /// All parameters in file order: `w1`, `b1`, `w2`, `b2`.
    pub fn parameters(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.parameter_count());
        p.extend_from_slice(&self.w1);
        p.extend_from_slice(&self.b1);
        p.extend_from_slice(&self.w2);
        p.push(self.b2);
        p
    }

    pub fn set_parameters(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.parameter_count() {
            return Err(Error::shape_mismatch(
                &[self.parameter_count()],
                &[params.len()],
            ));
        }
        let (w1, rest) = params.split_at(self.w1.len());
        let (b1, rest) = rest.split_at(self.b1.len());
        let (w2, rest) = rest.split_at(self.w2.len());
        self.w1.copy_from_slice(w1);
        self.b1.copy_from_slice(b1);
        self.w2.copy_from_slice(w2);
        self.b2 = rest[0];
        Ok(())
    }

    pub(crate) fn activate(&self, x: &[f64]) -> PairActivation {
        debug_assert_eq!(x.len(), self.input_dim);
        let h = self.hidden;
        let mut pre = self.b1.clone();
        for (k, &xk) in x.iter().enumerate() {
            if xk == 0.0 {
                continue;
            }
            let row = &self.w1[k * h..(k + 1) * h];
            for (p, w) in pre.iter_mut().zip(row) {
                *p += xk * w;
            }
        }
        let z2 = self.b2
            + pre
                .iter()
                .zip(&self.w2)
                .map(|(&z, &w)| z.max(0.0) * w)
                .sum::<f64>();
        PairActivation {
            pre,
            output: sigmoid(z2),
        }
    }

    /// Affinity of a single scaled pair-difference vector.
    pub fn forward_pair(&self, x: &[f64]) -> f64 {
        self.activate(x).output
    }

    /// Serializes to the line-oriented text format.
    ///
    /// ```text
    /// fusetrack-dan v1
    /// input_dim 4
    /// hidden 64
    /// seed 42
    /// w1 <D·H values, row-major by input component>
    /// b1 <H values>
    /// w2 <H values>
    /// b2 <1 value>
    /// ```
    ///
    /// Values use the shortest decimal form that parses back to the same `f64`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{MODEL_HEADER}");
        let _ = writeln!(s, "input_dim {}", self.input_dim);
        let _ = writeln!(s, "hidden {}", self.hidden);
        let _ = writeln!(s, "seed {}", self.seed);
        for (name, values) in [
            ("w1", &self.w1[..]),
            ("b1", &self.b1[..]),
            ("w2", &self.w2[..]),
            ("b2", std::slice::from_ref(&self.b2)),
        ] {
            s.push_str(name);
            for v in values {
                let _ = write!(s, " {v:?}");
            }
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(MODEL_HEADER) {
            return Err(Error::Model(format!("missing `{MODEL_HEADER}` header")));
        }
        let mut scalar = |key: &str| -> Result<u64> {
            let line = lines
                .next()
                .ok_or_else(|| Error::Model(format!("missing `{key}`")))?;
            let rest = line
                .strip_prefix(key)
                .ok_or_else(|| Error::Model(format!("expected `{key}`, got `{line}`")))?;
            rest.trim()
                .parse()
                .map_err(|e| Error::Model(format!("bad `{key}`: {e}")))
        };
        let input_dim = scalar("input_dim")? as usize;
        let hidden = scalar("hidden")? as usize;
        let seed = scalar("seed")?;
        let mut model = Self::zeros(input_dim, hidden);
        model.seed = seed;
        let mut params = Vec::with_capacity(model.parameter_count());
        for (key, len) in [
            ("w1", input_dim * hidden),
            ("b1", hidden),
            ("w2", hidden),
            ("b2", 1),
        ] {
            let line = lines
                .next()
                .ok_or_else(|| Error::Model(format!("missing `{key}`")))?;
            let mut fields = line.split_whitespace();
            if fields.next() != Some(key) {
                return Err(Error::Model(format!("expected `{key}` line")));
            }
            let values = fields
                .map(|f| {
                    f.parse::<f64>()
                        .map_err(|e| Error::Model(format!("bad value in `{key}`: {e}")))
                })
                .collect::<Result<Vec<_>>>()?;
            if values.len() != len {
                return Err(Error::Model(format!(
                    "`{key}` has {} values, expected {len}",
                    values.len()
                )));
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Model(format!("non-finite value in `{key}`")));
            }
            params.extend(values);
        }
        model.set_parameters(&params)?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

/// Runs the network over every pair of the tensor.
pub fn dan_forward(model: &DanModel, pairs: &PairTensor) -> Result<AffinityMatrix> {
    if pairs.dim() != model.input_dim() {
        return Err(Error::shape_mismatch(&[model.input_dim()], &[pairs.dim()]));
    }
    let values = pairs.flat_pairs().map(|x| model.forward_pair(x)).collect();
    AffinityMatrix::from_vec(pairs.rows(), pairs.cols(), values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::affinity::{build_pair_features, CommonFeature, SimilarityWeights};

    fn tensor_2x3() -> PairTensor {
        let a = [
            CommonFeature::new(20.0, 0.0, -3.0, 0.9),
            CommonFeature::new(35.0, 0.05, 1.0, 0.6),
        ];
        let b = [
            CommonFeature::new(21.0, 0.01, -3.5, 0.8),
            CommonFeature::new(34.0, 0.04, 0.5, 0.7),
            CommonFeature::new(60.0, -0.1, 0.0, 0.3),
        ];
        build_pair_features(&a, &b, &SimilarityWeights::default()).unwrap()
    }

    #[test]
    fn zero_model_outputs_half() {
        let m = DanModel::zeros(4, 8);
        let c = dan_forward(&m, &tensor_2x3()).unwrap();
        assert!(c.as_slice().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn seeded_model_output_in_unit_interval() {
        let m = DanModel::new(4, DEFAULT_HIDDEN, 42);
        let c = dan_forward(&m, &tensor_2x3()).unwrap();
        assert_eq!(c.shape(), (2, 3));
        assert!(c.as_slice().iter().all(|&v| v > 0.0 && v < 1.0));
        assert_eq!(DanModel::new(4, DEFAULT_HIDDEN, 42), m);
    }

    #[test]
    fn dimension_mismatch() {
        let m = DanModel::new(5, 8, 1);
        assert!(matches!(
            dan_forward(&m, &tensor_2x3()),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn text_format_roundtrip() {
        let m = DanModel::new(4, 16, 7);
        let text = m.to_text();
        assert!(text.starts_with("fusetrack-dan v1\ninput_dim 4\nhidden 16\nseed 7\nw1 "));
        assert_eq!(DanModel::from_text(&text).unwrap(), m);
    }

    #[test]
    fn rejects_malformed_model_text() {
        assert!(DanModel::from_text("nope").is_err());
        let text = DanModel::new(4, 4, 1).to_text().replace("hidden 4", "hidden 5");
        assert!(matches!(DanModel::from_text(&text), Err(Error::Model(_))));
    }
}
