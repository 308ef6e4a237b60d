use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::Tensor;

/// Named parameter tensors of one projector.
///
/// Serializes as `{"init_seed":s,"tensors":[{"name":..,"tensor":{..}}, ..]}`
/// in canonical parameter order.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectorParams {
    pub init_seed: u64,
    entries: Vec<(String, Tensor)>,
}

#[derive(Serialize, Deserialize)]
struct NamedTensor {
    name: String,
    tensor: Tensor,
}

#[derive(Serialize, Deserialize)]
struct ParamsJson {
    init_seed: u64,
    tensors: Vec<NamedTensor>,
}

impl Serialize for ProjectorParams {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ParamsJson {
            init_seed: self.init_seed,
            tensors: self
                .entries
                .iter()
                .map(|(name, tensor)| NamedTensor {
                    name: name.clone(),
                    tensor: tensor.clone(),
                })
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ProjectorParams {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let j = ParamsJson::deserialize(d)?;
        Ok(Self {
            init_seed: j.init_seed,
            entries: j.tensors.into_iter().map(|t| (t.name, t.tensor)).collect(),
        })
    }
}

impl ProjectorParams {
    pub fn new(init_seed: u64, entries: Vec<(String, Tensor)>) -> Self {
        Self { init_seed, entries }
    }

    pub(crate) fn init_uniform(shapes: &[(String, Vec<usize>)], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // a bias shares the fan-in of the weight listed before it
        let mut fan_in = 1usize;
        let entries = shapes
            .iter()
            .map(|(name, shape)| {
                if !name.ends_with(".bias") {
                    fan_in = shape[..shape.len() - 1].iter().product::<usize>().max(1);
                }
                let bound = (1.0 / fan_in as f64).sqrt();
                let t = Tensor::from_fn(shape, |_| rng.gen_range(-bound..bound));
                (name.clone(), t)
            })
            .collect();
        Self {
            init_seed: seed,
            entries,
        }
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| Error::contract(format!("missing parameter {name}")))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn tensors(&self) -> Vec<Tensor> {
        self.entries.iter().map(|(_, t)| t.clone()).collect()
    }

    /// Same names, new values (positional).
    pub fn with_tensors(&self, tensors: &[Tensor]) -> Result<Self> {
        if tensors.len() != self.entries.len() {
            return Err(Error::contract(format!(
                "expected {} parameter tensors, got {}",
                self.entries.len(),
                tensors.len()
            )));
        }
        let entries = self
            .entries
            .iter()
            .zip(tensors)
            .map(|((n, old), t)| {
                if old.shape() != t.shape() {
                    return Err(Error::Shape {
                        op: "with_tensors",
                        left: old.shape().to_vec(),
                        right: t.shape().to_vec(),
                    });
                }
                Ok((n.clone(), t.clone()))
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            init_seed: self.init_seed,
            entries,
        })
    }

    /// Checks names and shapes against a projector's layout.
    pub fn validate(&self, shapes: &[(String, Vec<usize>)]) -> Result<()> {
        for (name, shape) in shapes {
            let t = self.get(name)?;
            if t.shape() != shape.as_slice() {
                return Err(Error::Shape {
                    op: "projector parameters",
                    left: t.shape().to_vec(),
                    right: shape.clone(),
                });
            }
            if !t.is_finite() {
                return Err(Error::contract(format!("parameter {name} has non-finite values")));
            }
        }
        Ok(())
    }

    /// Positional `self - lr * grads`.
    pub fn descend(&self, grads: &[Tensor], lr: f64) -> Result<Self> {
        let updated = self
            .entries
            .iter()
            .zip(grads)
            .map(|((_, p), g)| p.sub(&g.scale(lr)))
            .collect::<Result<Vec<_>>>()?;
        self.with_tensors(&updated)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_seeded_and_bounded() {
        let shapes = vec![("fc.weight".to_string(), vec![16, 4]), ("fc.bias".to_string(), vec![4])];
        let a = ProjectorParams::init_uniform(&shapes, 3);
        let b = ProjectorParams::init_uniform(&shapes, 3);
        let c = ProjectorParams::init_uniform(&shapes, 4);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.get("fc.weight").unwrap().data().iter().all(|v| v.abs() < 0.25));
        assert!(a.get("fc.bias").unwrap().data().iter().all(|v| v.abs() < 0.25));
        assert!(a.validate(&shapes).is_ok());
    }

    #[test]
    fn json_keeps_canonical_order() {
        let p = ProjectorParams::new(9, vec![("w".into(), Tensor::scalar(1.5))]);
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(
            s,
            r#"{"init_seed":9,"tensors":[{"name":"w","tensor":{"shape":[1],"data":[1.5]}}]}"#
        );
        assert_eq!(serde_json::from_str::<ProjectorParams>(&s).unwrap(), p);
    }
}
