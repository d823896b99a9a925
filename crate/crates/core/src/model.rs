//! Parameter layout and the per-instance forward graph.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::data::EncodedInstance;
use crate::deepnet::{record_linear, record_mlp, record_output, MlpConfig};
use crate::dein::{
    record_attention, record_dein, record_diversity, record_weighted_diversity, DeinConfig, DiversityReport, HiddenState,
};
use crate::embedding::record_embedding;
use crate::init::{init_tensor, stream_rng, InitScheme};
use crate::tape::{Tape, Var};
use crate::tensor::{NumericsError, Tensor};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("interaction network needs at least one layer")]
    Depth,
    #[error("every layer needs at least one feature map")]
    ZeroMaps,
    #[error("attention hidden size must be positive")]
    AttentionHidden,
    #[error("shared attention weights need equal feature-map counts, got {0:?}")]
    UnequalMaps(Vec<usize>),
    #[error("embedding dimension must be positive")]
    EmbedDim,
    #[error("model needs at least one field")]
    NoFields,
    #[error("deep component needs positive depth and width")]
    Mlp,
    #[error("parameter `{name}`: expected shape {expected:?}, found {found:?}")]
    ParamShape {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("expected {expected} parameter tensors, found {found}")]
    ParamCount { expected: usize, found: usize },
    #[error("{0}")]
    Invalid(String),
}

/// Parameter families, used for reporting and gradient checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ParamGroup {
    Embedding,
    Cin,
    Attention,
    Mlp,
    Linear,
    Output,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 6] = [
        ParamGroup::Embedding,
        ParamGroup::Cin,
        ParamGroup::Attention,
        ParamGroup::Mlp,
        ParamGroup::Linear,
        ParamGroup::Output,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ParamGroup::Embedding => "embedding",
            ParamGroup::Cin => "cin",
            ParamGroup::Attention => "attention",
            ParamGroup::Mlp => "mlp",
            ParamGroup::Linear => "linear",
            ParamGroup::Output => "output",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamInfo {
    pub name: String,
    pub group: ParamGroup,
    pub shape: Vec<usize>,
    /// Included in the squared-L2 penalty. Biases are not.
    pub regularized: bool,
    init: InitKind,
    stream: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum InitKind {
    Embedding,
    Glorot { fan_in: usize, fan_out: usize },
    Zeros,
}

pub const EMBEDDING_STD: f64 = 0.01;

/// Branch shapes independent of the data. Combined with per-field
/// vocabulary sizes it yields a [`ModelSpec`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    pub embed_dim: usize,
    pub dein: DeinConfig,
    pub mlp: Option<MlpConfig>,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            embed_dim: crate::embedding::DEFAULT_EMBED_DIM,
            dein: DeinConfig::default(),
            mlp: Some(MlpConfig::default()),
        }
    }
}

impl Architecture {
    pub fn spec(&self, field_sizes: Vec<usize>) -> ModelSpec {
        ModelSpec {
            field_sizes,
            embed_dim: self.embed_dim,
            dein: self.dein.clone(),
            mlp: self.mlp,
        }
    }
}

/// Structure of one model: vocabulary sizes and branch shapes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelSpec {
    pub field_sizes: Vec<usize>,
    pub embed_dim: usize,
    pub dein: DeinConfig,
    /// `None` drops the deep branch entirely.
    pub mlp: Option<MlpConfig>,
}

impl ModelSpec {
    pub fn num_fields(&self) -> usize {
        self.field_sizes.len()
    }

    pub fn vocab_size(&self) -> usize {
        self.field_sizes.iter().sum()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.field_sizes.is_empty() {
            return Err(ConfigError::NoFields);
        }
        if self.field_sizes.contains(&0) {
            return Err(ConfigError::Invalid("field vocabulary sizes must be positive".into()));
        }
        if self.embed_dim == 0 {
            return Err(ConfigError::EmbedDim);
        }
        if let Some(mlp) = self.mlp {
            if mlp.depth == 0 || mlp.width == 0 {
                return Err(ConfigError::Mlp);
            }
        }
        self.dein.validate()
    }

    /// Every parameter tensor in storage order.
    pub fn param_infos(&self) -> Vec<ParamInfo> {
        let m = self.num_fields();
        let v = self.vocab_size();
        let d = self.embed_dim;
        let mut out = Vec::new();
        let mut push = |name: String, group, shape: Vec<usize>, regularized, init, stream| {
            out.push(ParamInfo {
                name,
                group,
                shape,
                regularized,
                init,
                stream,
            })
        };
        push("embedding".into(), ParamGroup::Embedding, alloc::vec![v, d], true, InitKind::Embedding, 1);
        push("linear".into(), ParamGroup::Linear, alloc::vec![v, 1], true, InitKind::Zeros, 2);
        let mut prev = m;
        for (k, &e) in self.dein.maps.iter().enumerate() {
            push(
                format!("cin.{}", k + 1),
                ParamGroup::Cin,
                alloc::vec![e, prev * m],
                true,
                InitKind::Glorot {
                    fan_in: prev * m,
                    fan_out: 1,
                },
                10 + k as u64,
            );
            prev = e;
        }
        if self.dein.attention {
            let a = self.dein.attention_hidden;
            let e = self.dein.maps[0];
            push(
                "attention.h".into(),
                ParamGroup::Attention,
                alloc::vec![a],
                true,
                InitKind::Glorot { fan_in: a, fan_out: 1 },
                100,
            );
            push(
                "attention.w".into(),
                ParamGroup::Attention,
                alloc::vec![a, e],
                true,
                InitKind::Glorot { fan_in: e, fan_out: a },
                101,
            );
            push("attention.b".into(), ParamGroup::Attention, alloc::vec![a], false, InitKind::Zeros, 102);
        }
        let mut deep_width = None;
        if let Some(mlp) = self.mlp {
            let mut input = m * d;
            for l in 0..mlp.depth {
                push(
                    format!("mlp.{}.w", l + 1),
                    ParamGroup::Mlp,
                    alloc::vec![mlp.width, input],
                    true,
                    InitKind::Glorot {
                        fan_in: input,
                        fan_out: mlp.width,
                    },
                    200 + 2 * l as u64,
                );
                push(
                    format!("mlp.{}.b", l + 1),
                    ParamGroup::Mlp,
                    alloc::vec![mlp.width],
                    false,
                    InitKind::Zeros,
                    201 + 2 * l as u64,
                );
                input = mlp.width;
            }
            deep_width = Some(input);
        }
        let dein_len = self.dein.output_len();
        push(
            "output.dein".into(),
            ParamGroup::Output,
            alloc::vec![dein_len],
            true,
            InitKind::Glorot {
                fan_in: dein_len,
                fan_out: 1,
            },
            300,
        );
        if let Some(w) = deep_width {
            push(
                "output.deep".into(),
                ParamGroup::Output,
                alloc::vec![w],
                true,
                InitKind::Glorot { fan_in: w, fan_out: 1 },
                301,
            );
        }
        push("output.bias".into(), ParamGroup::Output, alloc::vec![1], false, InitKind::Zeros, 302);
        out
    }

    pub fn param_count(&self) -> usize {
        self.param_infos().iter().map(|p| p.shape.iter().product::<usize>()).sum()
    }
}

/// Slot index of every parameter role.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub embedding: usize,
    pub linear: usize,
    pub cin: Vec<usize>,
    /// `(h, W, b)`
    pub attention: Option<(usize, usize, usize)>,
    /// `(W, b)` per layer
    pub mlp: Vec<(usize, usize)>,
    pub out_dein: usize,
    pub out_deep: Option<usize>,
    pub bias: usize,
}

impl Layout {
    fn from_infos(infos: &[ParamInfo]) -> Self {
        let find = |name: &str| infos.iter().position(|p| p.name == name);
        let cin = infos
            .iter()
            .enumerate()
            .filter(|(_, p)| p.group == ParamGroup::Cin)
            .map(|(i, _)| i)
            .collect();
        let attention = match (find("attention.h"), find("attention.w"), find("attention.b")) {
            (Some(h), Some(w), Some(b)) => Some((h, w, b)),
            _ => None,
        };
        let mut mlp = Vec::new();
        for l in 1.. {
            match (find(&format!("mlp.{l}.w")), find(&format!("mlp.{l}.b"))) {
                (Some(w), Some(b)) => mlp.push((w, b)),
                _ => break,
            }
        }
        Layout {
            embedding: find("embedding").expect("embedding present"),
            linear: find("linear").expect("linear present"),
            cin,
            attention,
            mlp,
            out_dein: find("output.dein").expect("output present"),
            out_deep: find("output.deep"),
            bias: find("output.bias").expect("bias present"),
        }
    }
}

/// All trainable tensors of a model with their metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSet {
    tensors: Vec<Tensor>,
    infos: Vec<ParamInfo>,
    layout: Layout,
}

impl ParameterSet {
    /// Seeded initialization. Each tensor draws from its own stream, so a
    /// tensor's initial value does not depend on which other tensors exist.
    pub fn init(spec: &ModelSpec, seed: u64) -> Self {
        let infos = spec.param_infos();
        let tensors = infos
            .iter()
            .map(|p| {
                let scheme = match p.init {
                    InitKind::Embedding => InitScheme::Normal { std_dev: EMBEDDING_STD },
                    InitKind::Glorot { fan_in, fan_out } => InitScheme::GlorotUniform { fan_in, fan_out },
                    InitKind::Zeros => InitScheme::Zeros,
                };
                init_tensor(&p.shape, scheme, &mut stream_rng(seed, p.stream))
            })
            .collect();
        let layout = Layout::from_infos(&infos);
        Self {
            tensors,
            infos,
            layout,
        }
    }

    /// Wraps loaded tensors after checking them against `spec`.
    pub fn from_tensors(spec: &ModelSpec, tensors: Vec<Tensor>) -> Result<Self, ConfigError> {
        let infos = spec.param_infos();
        if infos.len() != tensors.len() {
            return Err(ConfigError::ParamCount {
                expected: infos.len(),
                found: tensors.len(),
            });
        }
        for (p, t) in infos.iter().zip(&tensors) {
            if p.shape != t.shape() {
                return Err(ConfigError::ParamShape {
                    name: p.name.clone(),
                    expected: p.shape.clone(),
                    found: t.shape().to_vec(),
                });
            }
        }
        let layout = Layout::from_infos(&infos);
        Ok(Self {
            tensors,
            infos,
            layout,
        })
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn infos(&self) -> &[ParamInfo] {
        &self.infos
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.infos.iter().position(|p| p.name == name).map(|i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.infos.iter().position(|p| p.name == name).map(move |i| &mut self.tensors[i])
    }

    pub fn zeros_like(&self) -> Vec<Tensor> {
        self.tensors.iter().map(|t| Tensor::zeros(t.shape())).collect()
    }

    /// `Σ θ²` over regularized tensors.
    pub fn squared_norm(&self) -> f64 {
        self.tensors
            .iter()
            .zip(&self.infos)
            .filter(|(_, p)| p.regularized)
            .map(|(t, _)| t.squared_norm())
            .sum()
    }

    pub fn count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }
}

/// What to record beyond the prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RecordOptions {
    pub diversity: bool,
}

/// Tape handles of one recorded instance.
#[derive(Debug, Clone)]
pub struct InstanceGraph {
    pub x0: Var,
    pub x0_flat: Var,
    pub layers: Vec<Var>,
    pub pooled: Vec<Var>,
    pub x_dein: Var,
    pub x_deep: Option<Var>,
    pub linear: Var,
    pub logit: Var,
    pub prediction: Var,
    /// Per-layer diversity scalars, when requested.
    pub diversities: Vec<Var>,
    pub attention: Option<Var>,
    pub diversity_total: Option<Var>,
}

/// Records the full forward pass of `inst`. Parameters enter the tape as
/// borrowed slots numbered by their storage index.
pub fn record_instance<'a>(
    params: &'a ParameterSet,
    tape: &mut Tape<'a>,
    inst: &EncodedInstance,
    opts: RecordOptions,
) -> Result<InstanceGraph, NumericsError> {
    let lay = &params.layout;
    let t = &params.tensors;
    let table = tape.param(lay.embedding, &t[lay.embedding])?;
    let (x0, x0_flat) = record_embedding(tape, table, inst)?;

    let cin: Vec<Var> = lay
        .cin
        .iter()
        .map(|&i| tape.param(i, &t[i]))
        .collect::<Result<_, _>>()?;
    let dein = record_dein(tape, x0, &cin)?;

    let (diversities, attention, diversity_total) = if opts.diversity {
        let divs: Vec<Var> = dein
            .layers
            .iter()
            .map(|&x| record_diversity(tape, x))
            .collect::<Result<_, _>>()?;
        let att = match lay.attention {
            Some((h, w, b)) => {
                let (h, w, b) = (tape.param(h, &t[h])?, tape.param(w, &t[w])?, tape.param(b, &t[b])?);
                Some(record_attention(tape, &dein.pooled, h, w, b)?)
            }
            None => None,
        };
        let total = record_weighted_diversity(tape, &divs, att)?;
        (divs, att, Some(total))
    } else {
        (Vec::new(), None, None)
    };

    let x_deep = if lay.mlp.is_empty() {
        None
    } else {
        let layers: Vec<(Var, Var)> = lay
            .mlp
            .iter()
            .map(|&(w, b)| Ok((tape.param(w, &t[w])?, tape.param(b, &t[b])?)))
            .collect::<Result<_, NumericsError>>()?;
        Some(record_mlp(tape, x0_flat, &layers)?)
    };

    let lin_w = tape.param(lay.linear, &t[lay.linear])?;
    let linear = record_linear(tape, lin_w, inst)?;
    let w_dein = tape.param(lay.out_dein, &t[lay.out_dein])?;
    let deep = match (x_deep, lay.out_deep) {
        (Some(x), Some(w)) => Some((x, tape.param(w, &t[w])?)),
        _ => None,
    };
    let bias = tape.param(lay.bias, &t[lay.bias])?;
    let (logit, prediction) = record_output(tape, dein.output, w_dein, deep, linear, bias)?;

    Ok(InstanceGraph {
        x0,
        x0_flat,
        layers: dein.layers,
        pooled: dein.pooled,
        x_dein: dein.output,
        x_deep,
        linear,
        logit,
        prediction,
        diversities,
        attention,
        diversity_total,
    })
}

/// Everything computed for one instance, copied off the tape.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub hidden: HiddenState,
    pub diversity: DiversityReport,
    pub x_dein: Tensor,
    pub x_deep: Option<Tensor>,
    pub linear: f64,
    pub prediction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub spec: ModelSpec,
    pub params: ParameterSet,
}

impl Model {
    pub fn new(spec: ModelSpec, seed: u64) -> Result<Self, ConfigError> {
        spec.validate()?;
        let params = ParameterSet::init(&spec, seed);
        Ok(Self { spec, params })
    }

    pub fn predict(&self, inst: &EncodedInstance) -> Result<f64, NumericsError> {
        let mut tape = Tape::new();
        let g = record_instance(&self.params, &mut tape, inst, RecordOptions::default())?;
        Ok(tape.scalar(g.prediction))
    }

    pub fn trace(&self, inst: &EncodedInstance) -> Result<ForwardTrace, NumericsError> {
        let mut tape = Tape::new();
        let g = record_instance(&self.params, &mut tape, inst, RecordOptions { diversity: true })?;
        let mut layers = alloc::vec![tape.tensor(g.x0)];
        layers.extend(g.layers.iter().map(|&v| tape.tensor(v)));
        let raw: Vec<f64> = g.diversities.iter().map(|&v| tape.scalar(v)).collect();
        let attention = match g.attention {
            Some(a) => tape.value(a).to_vec(),
            None => alloc::vec![1.0; raw.len()],
        };
        let weighted = raw.iter().zip(&attention).map(|(d, a)| d * a).collect();
        Ok(ForwardTrace {
            hidden: HiddenState {
                layers,
                pooled: g.pooled.iter().map(|&v| tape.tensor(v)).collect(),
            },
            diversity: DiversityReport {
                raw,
                attention,
                weighted,
                total: g.diversity_total.map_or(0.0, |v| tape.scalar(v)),
            },
            x_dein: tape.tensor(g.x_dein),
            x_deep: g.x_deep.map(|v| tape.tensor(v)),
            linear: tape.scalar(g.linear),
            prediction: tape.scalar(g.prediction),
        })
    }
}
