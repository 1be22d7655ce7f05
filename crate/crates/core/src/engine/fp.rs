//! Floating-point ViT weights.

use std::collections::BTreeMap;

use crate::engine::ModelConfig;
use crate::error::{Error, Result};
use crate::rng::{gen_gaussian, Rng};
use crate::tensor::FpTensor;

/// Standard deviation of generated weights.
pub const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, PartialEq)]
pub struct FpLinear {
    /// `out × in`
    pub w: FpTensor,
    pub b: FpTensor,
}

impl FpLinear {
    fn random(rng: &mut Rng, out: usize, inp: usize) -> Result<Self> {
        Ok(Self {
            w: gen_gaussian(rng, &[out, inp], 0.0, INIT_STD)?,
            b: gen_gaussian(rng, &[out], 0.0, INIT_STD)?,
        })
    }

    pub fn out_features(&self) -> usize {
        self.w.dims()[0]
    }

    pub fn in_features(&self) -> usize {
        self.w.dims()[1]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FpLayerNorm {
    pub gamma: FpTensor,
    pub beta: FpTensor,
}

impl FpLayerNorm {
    fn unit(d: usize) -> Result<Self> {
        Ok(Self {
            gamma: FpTensor::new(vec![d], vec![1.0; d])?,
            beta: FpTensor::zeros(vec![d])?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FpBlock {
    pub ln1: FpLayerNorm,
    pub q: FpLinear,
    pub k: FpLinear,
    pub v: FpLinear,
    pub o: FpLinear,
    pub ln2: FpLayerNorm,
    pub fc1: FpLinear,
    pub fc2: FpLinear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FpViT {
    pub config: ModelConfig,
    pub patch: FpLinear,
    /// `1 × d_model`
    pub cls: FpTensor,
    /// `tokens × d_model`
    pub pos: FpTensor,
    pub blocks: Vec<FpBlock>,
    pub ln_f: FpLayerNorm,
    pub head: FpLinear,
}

impl FpViT {
    /// Gaussian weights and biases (std [`INIT_STD`]); LayerNorm starts at γ = 1, β = 0.
    pub fn random(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = Rng::new(seed);
        let d = config.d_model;
        let patch = FpLinear::random(&mut rng, d, config.patch_features())?;
        let cls = gen_gaussian(&mut rng, &[1, d], 0.0, INIT_STD)?;
        let pos = gen_gaussian(&mut rng, &[config.tokens(), d], 0.0, INIT_STD)?;
        let mut blocks = Vec::with_capacity(config.depth);
        for _ in 0..config.depth {
            blocks.push(FpBlock {
                ln1: FpLayerNorm::unit(d)?,
                q: FpLinear::random(&mut rng, d, d)?,
                k: FpLinear::random(&mut rng, d, d)?,
                v: FpLinear::random(&mut rng, d, d)?,
                o: FpLinear::random(&mut rng, d, d)?,
                ln2: FpLayerNorm::unit(d)?,
                fc1: FpLinear::random(&mut rng, config.hidden(), d)?,
                fc2: FpLinear::random(&mut rng, d, config.hidden())?,
            });
        }
        let head = FpLinear::random(&mut rng, config.num_classes, d)?;
        Ok(Self {
            config: config.clone(),
            patch,
            cls,
            pos,
            blocks,
            ln_f: FpLayerNorm::unit(d)?,
            head,
        })
    }

    /// Every tensor keyed by its role, e.g. `block0.fc1.weight`.
    pub fn named_tensors(&self) -> BTreeMap<String, FpTensor> {
        let mut m = BTreeMap::new();
        let lin = |m: &mut BTreeMap<String, FpTensor>, name: &str, l: &FpLinear| {
            m.insert(format!("{name}.weight"), l.w.clone());
            m.insert(format!("{name}.bias"), l.b.clone());
        };
        lin(&mut m, "patch", &self.patch);
        lin(&mut m, "head", &self.head);
        m.insert("cls".into(), self.cls.clone());
        m.insert("pos".into(), self.pos.clone());
        for (i, b) in self.blocks.iter().enumerate() {
            for (n, l) in [
                ("q", &b.q),
                ("k", &b.k),
                ("v", &b.v),
                ("o", &b.o),
                ("fc1", &b.fc1),
                ("fc2", &b.fc2),
            ] {
                lin(&mut m, &format!("block{i}.{n}"), l);
            }
            for (n, ln) in [("ln1", &b.ln1), ("ln2", &b.ln2)] {
                m.insert(format!("block{i}.{n}.gamma"), ln.gamma.clone());
                m.insert(format!("block{i}.{n}.beta"), ln.beta.clone());
            }
        }
        m.insert("ln_f.gamma".into(), self.ln_f.gamma.clone());
        m.insert("ln_f.beta".into(), self.ln_f.beta.clone());
        m
    }

    pub fn from_named(config: &ModelConfig, mut m: BTreeMap<String, FpTensor>) -> Result<Self> {
        config.validate()?;
        let d = config.d_model;
        let mut take = |name: String, dims: Vec<usize>| -> Result<FpTensor> {
            let t = m
                .remove(&name)
                .ok_or_else(|| Error::Format(format!("missing tensor {name}")))?;
            if t.dims() != dims.as_slice() {
                return Err(Error::Shape(format!(
                    "{name}: expected {dims:?}, found {:?}",
                    t.dims()
                )));
            }
            Ok(t)
        };
        let mut lin = |name: &str, out: usize, inp: usize| -> Result<FpLinear> {
            Ok(FpLinear {
                w: take(format!("{name}.weight"), vec![out, inp])?,
                b: take(format!("{name}.bias"), vec![out])?,
            })
        };
        let patch = lin("patch", d, config.patch_features())?;
        let head = lin("head", config.num_classes, d)?;
        let mut blocks = Vec::new();
        for i in 0..config.depth {
            blocks.push((
                lin(&format!("block{i}.q"), d, d)?,
                lin(&format!("block{i}.k"), d, d)?,
                lin(&format!("block{i}.v"), d, d)?,
                lin(&format!("block{i}.o"), d, d)?,
                lin(&format!("block{i}.fc1"), config.hidden(), d)?,
                lin(&format!("block{i}.fc2"), d, config.hidden())?,
            ));
        }
        let mut ln = |name: String| -> Result<FpLayerNorm> {
            Ok(FpLayerNorm {
                gamma: take(format!("{name}.gamma"), vec![d])?,
                beta: take(format!("{name}.beta"), vec![d])?,
            })
        };
        let blocks = blocks
            .into_iter()
            .enumerate()
            .map(|(i, (q, k, v, o, fc1, fc2))| {
                Ok(FpBlock {
                    ln1: ln(format!("block{i}.ln1"))?,
                    q,
                    k,
                    v,
                    o,
                    ln2: ln(format!("block{i}.ln2"))?,
                    fc1,
                    fc2,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let ln_f = ln("ln_f".into())?;
        let cls = take("cls".into(), vec![1, d])?;
        let pos = take("pos".into(), vec![config.tokens(), d])?;
        if let Some(extra) = m.keys().next() {
            return Err(Error::Format(format!("unexpected tensor {extra}")));
        }
        Ok(Self {
            config: config.clone(),
            patch,
            cls,
            pos,
            blocks,
            ln_f,
            head,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn named_round_trip() {
        let cfg = ModelConfig {
            depth: 1,
            num_classes: 5,
            ..Default::default()
        };
        let m = FpViT::random(&cfg, 3).unwrap();
        let back = FpViT::from_named(&cfg, m.named_tensors()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = ModelConfig {
            depth: 1,
            ..Default::default()
        };
        assert_eq!(
            FpViT::random(&cfg, 9).unwrap(),
            FpViT::random(&cfg, 9).unwrap()
        );
        assert_ne!(
            FpViT::random(&cfg, 9).unwrap(),
            FpViT::random(&cfg, 10).unwrap()
        );
    }

    #[test]
    fn missing_tensor_named() {
        let cfg = ModelConfig {
            depth: 1,
            ..Default::default()
        };
        let mut named = FpViT::random(&cfg, 1).unwrap().named_tensors();
        named.remove("block0.fc2.bias");
        let err = FpViT::from_named(&cfg, named).unwrap_err();
        assert!(err.to_string().contains("block0.fc2.bias"));
    }
}
