use super::config::{InceptionBranch, ModelConfig};
use crate::error::{Error, Result};
use crate::rng::CounterRng;
use crate::scalar::{lit, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<S> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<S>,
}

impl<S: Scalar> Tensor<S> {
    pub fn zeros(name: impl Into<String>, shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            name: name.into(),
            shape,
            data: vec![S::zero(); n],
        }
    }
}

/// Named parameter tensors in a fixed layer order.
///
/// Layout: for each conv block `conv{i}.kernel [out][kt][kf][in]` and
/// `conv{i}.bias`; for each inception branch `inception{j}.kernel
/// [out][kt][1][in]` and `inception{j}.bias`; then `lstm.w_input [4H][D]`,
/// `lstm.w_recurrent [4H][H]`, `lstm.bias [4H]` with gate blocks ordered
/// input, forget, cell, output; finally `dense.weight [3][H]`, `dense.bias [3]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights<S> {
    pub tensors: Vec<Tensor<S>>,
}

/// Initialization rule attached to each parameter slot.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Init {
    Uniform(f64),
    Constant(f64),
    /// Zero except the forget-gate block, which is set to one.
    ForgetBias(usize),
}

pub(crate) fn layout(cfg: &ModelConfig) -> Result<Vec<(String, Vec<usize>, Init)>> {
    let shapes = cfg.shapes()?;
    let mut out = Vec::new();
    for (i, b) in cfg.conv_blocks.iter().enumerate() {
        let cin = shapes.conv_io[i].1;
        let fan_in = (b.kernel.0 * b.kernel.1 * cin) as f64;
        out.push((
            format!("conv{i}.kernel"),
            vec![b.filters, b.kernel.0, b.kernel.1, cin],
            Init::Uniform((6.0 / fan_in).sqrt()),
        ));
        out.push((format!("conv{i}.bias"), vec![b.filters], Init::Constant(0.0)));
    }
    let cin = shapes.trunk_channels;
    for (j, br) in cfg.inception.iter().enumerate() {
        let kt = match *br {
            InceptionBranch::Conv { time_kernel, .. } => time_kernel,
            InceptionBranch::PoolConv { .. } => 1,
        };
        let fan_in = (kt * cin) as f64;
        out.push((
            format!("inception{j}.kernel"),
            vec![br.filters(), kt, 1, cin],
            Init::Uniform((6.0 / fan_in).sqrt()),
        ));
        out.push((format!("inception{j}.bias"), vec![br.filters()], Init::Constant(0.0)));
    }
    let h = cfg.recurrent_units;
    let d = shapes.recurrent_input;
    out.push((
        "lstm.w_input".into(),
        vec![4 * h, d],
        Init::Uniform(1.0 / (d as f64).sqrt()),
    ));
    out.push((
        "lstm.w_recurrent".into(),
        vec![4 * h, h],
        Init::Uniform(1.0 / (h as f64).sqrt()),
    ));
    out.push(("lstm.bias".into(), vec![4 * h], Init::ForgetBias(h)));
    out.push((
        "dense.weight".into(),
        vec![cfg.classes(), h],
        Init::Uniform(1.0 / (h as f64).sqrt()),
    ));
    out.push(("dense.bias".into(), vec![cfg.classes()], Init::Constant(0.0)));
    Ok(out)
}

impl<S: Scalar> Weights<S> {
    /// Draws every parameter from `rng` in layout order.
    pub fn init(cfg: &ModelConfig, rng: &mut CounterRng) -> Result<Self> {
        let tensors = layout(cfg)?
            .into_iter()
            .map(|(name, shape, init)| {
                let mut t = Tensor::zeros(name, shape);
                match init {
                    Init::Uniform(limit) => {
                        for v in &mut t.data {
                            *v = lit(rng.uniform_range(-limit, limit));
                        }
                    }
                    Init::Constant(c) => t.data.iter_mut().for_each(|v| *v = lit(c)),
                    Init::ForgetBias(h) => {
                        for v in &mut t.data[h..2 * h] {
                            *v = S::one();
                        }
                    }
                }
                t
            })
            .collect();
        Ok(Self { tensors })
    }

    pub fn zeros(cfg: &ModelConfig) -> Result<Self> {
        Ok(Self {
            tensors: layout(cfg)?
                .into_iter()
                .map(|(name, shape, _)| Tensor::zeros(name, shape))
                .collect(),
        })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            tensors: self
                .tensors
                .iter()
                .map(|t| Tensor::zeros(t.name.clone(), t.shape.clone()))
                .collect(),
        }
    }

    /// Verifies names and shapes against `cfg`, naming the first offending layer.
    pub fn check(&self, cfg: &ModelConfig) -> Result<()> {
        let expected = layout(cfg)?;
        for (i, (name, shape, _)) in expected.iter().enumerate() {
            let Some(t) = self.tensors.get(i) else {
                return Err(Error::Shape {
                    layer: name.clone(),
                    expected: format!("{shape:?}"),
                    found: "missing".into(),
                });
            };
            if &t.name != name || &t.shape != shape || t.data.len() != shape.iter().product::<usize>() {
                return Err(Error::Shape {
                    layer: name.clone(),
                    expected: format!("{name} {shape:?}"),
                    found: format!("{} {:?}", t.name, t.shape),
                });
            }
            if let Some(v) = t.data.iter().find(|v| !v.is_finite()) {
                return Err(Error::Validation(format!("{name} holds non-finite value {v}")));
            }
        }
        if self.tensors.len() != expected.len() {
            let extra = &self.tensors[expected.len()];
            return Err(Error::Shape {
                layer: extra.name.clone(),
                expected: "no further tensors".into(),
                found: format!("{:?}", extra.shape),
            });
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<S>> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<S>> {
        self.tensors.iter_mut().find(|t| t.name == name)
    }

    pub fn len(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = &S> {
        self.tensors.iter().flat_map(|t| t.data.iter())
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut S> {
        self.tensors.iter_mut().flat_map(|t| t.data.iter_mut())
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &Self, scale: S) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, y) in a.data.iter_mut().zip(&b.data) {
                *x += scale * *y;
            }
        }
    }

    pub fn scale(&mut self, s: S) {
        self.iter_mut().for_each(|v| *v *= s);
    }

    pub fn bits_eq(&self, other: &Self) -> bool {
        self.tensors.len() == other.tensors.len()
            && self.tensors.iter().zip(&other.tensors).all(|(a, b)| {
                a.name == b.name
                    && a.shape == b.shape
                    && a.data.len() == b.data.len()
                    && a.data.iter().zip(&b.data).all(|(x, y)| x.bits_eq(*y))
            })
    }
}
