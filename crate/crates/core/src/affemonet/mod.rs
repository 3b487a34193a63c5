//! The three-stream expression network.
//!
//! * **HBEF** (high-boost edge filtering) subtracts descriptor-driven and
//!   refined edge responses from shallow image responses.
//! * **MSSEC** (multi-scale sophisticated edge cumulative) sums 1/3/5/7
//!   kernel branches over three densely connected stages.
//! * **RUCCF** (descriptor uplift context) summarizes per-map responses by
//!   mean, max and sum followed by global average pooling.
//!
//! The stream outputs are concatenated and classified by three fully
//! connected layers (128, 128, E).

mod checkpoint;
mod forward;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointError, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use forward::{Activations, NetObjective, PreparedInput};
pub use train::{MetricRecord, StepOutcome};

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rarity::{DescriptorError, RingParams};
use crate::tensor::{out_dim, ConvSpec, Tensor, TensorError};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid network configuration: {0}")]
    Config(String),
    #[error("expected a {expected}x{expected} image, got {width}x{height}")]
    ImageSize { expected: usize, width: usize, height: usize },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("empty training batch")]
    EmptyBatch,
    #[error("unknown parameter {0}")]
    UnknownParam(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Descriptor(#[from] DescriptorError),
}

pub type Result<T> = std::result::Result<T, ModelError>;

/// Depth of the shallow image and descriptor responses.
pub const SHALLOW_DEPTH: usize = 4;
/// Depth of each half of the HBEF output.
pub const HBEF_HALF_DEPTH: usize = 32;
pub const A1_DEPTH: usize = 32;
pub const A2_DEPTH: usize = 64;
pub const MSSEC_DEPTH: usize = 96;
pub const RUCCF_DEPTH: usize = 16;
pub const HIDDEN: usize = 128;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    /// Side of the square input image.
    pub input_size: usize,
    pub num_classes: usize,
    pub seed: u64,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub ring: RingParams,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            input_size: 120,
            num_classes: 7,
            seed: 0,
            lr: 1e-3,
            momentum: 0.8,
            weight_decay: 2e-6,
            ring: RingParams::default(),
        }
    }
}

impl NetConfig {
    pub fn with_size(input_size: usize, num_classes: usize) -> Self {
        Self {
            input_size,
            num_classes,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_size < 24 || !self.input_size.is_multiple_of(8) {
            return Err(ModelError::Config(format!(
                "input size must be a multiple of 8 and at least 24, got {}",
                self.input_size
            )));
        }
        if self.num_classes < 2 {
            return Err(ModelError::Config(format!("need at least 2 classes, got {}", self.num_classes)));
        }
        if !(self.lr >= 0.0 && self.momentum >= 0.0 && self.weight_decay >= 0.0) {
            return Err(ModelError::Config("hyperparameters must be non-negative".into()));
        }
        self.ring.validate()?;
        Ok(())
    }

    /// Spatial side of the HBEF output, `M/2`.
    pub fn hbef_side(&self) -> usize {
        out_dim(self.input_size, 2)
    }

    /// Spatial side of the MSSEC output.
    pub fn mssec_side(&self) -> usize {
        out_dim(out_dim(out_dim(self.hbef_side(), 2), 2), 2)
    }

    /// Length of the concatenated stream features fed to the head.
    pub fn feature_len(&self) -> usize {
        self.mssec_side().pow(2) * MSSEC_DEPTH + 3 * RUCCF_DEPTH
    }
}

/// One parameter tensor of the layer ledger.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    /// Inputs feeding one output unit; zero for biases.
    pub fan_in: usize,
    pub init: Init,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    Zero,
    /// Uniform in `±sqrt(6 / fan_in)`.
    He,
}

impl ParamSpec {
    /// Half-width of the initial uniform distribution (zero for [`Init::Zero`]).
    pub fn init_bound(&self) -> f64 {
        match self.init {
            Init::Zero => 0.0,
            Init::He => (6.0 / self.fan_in as f64).sqrt(),
        }
    }
}

/// The classifier layer. Its weights start at zero so that a fresh model
/// outputs uniform class probabilities.
pub const OUTPUT_LAYER: &str = "head.fc3";

/// Convolution and dense layers of the network, by name.
#[derive(Debug, Clone)]
pub struct Topology {
    pub convs: Vec<(String, ConvSpec)>,
    pub dense: Vec<(String, usize, usize)>,
}

impl Topology {
    pub fn new(config: &NetConfig) -> Self {
        let conv = |z, cin, cout, s| ConvSpec::new(z, cin, cout, s).expect("static layer spec");
        let mut convs = vec![
            ("hbef.l1".to_string(), conv(3, 1, SHALLOW_DEPTH, 2)),
            ("hbef.l2".to_string(), conv(7, 1, SHALLOW_DEPTH, 2)),
        ];
        for l in 0..4 {
            convs.push((format!("hbef.rarity{l}"), conv(3, 1, SHALLOW_DEPTH, 2)));
        }
        convs.push(("hbef.refine3".into(), conv(3, SHALLOW_DEPTH, HBEF_HALF_DEPTH, 1)));
        convs.push(("hbef.refine7".into(), conv(7, SHALLOW_DEPTH, HBEF_HALF_DEPTH, 1)));
        let h_depth = 2 * HBEF_HALF_DEPTH;
        for z in [3, 5, 7] {
            convs.push((format!("mssec.a1.k{z}"), conv(z, h_depth, A1_DEPTH, 2)));
        }
        convs.push(("mssec.a1.proj".into(), conv(1, h_depth, A1_DEPTH, 1)));
        for z in [3, 5, 7, 1] {
            convs.push((format!("mssec.a2.k{z}"), conv(z, A1_DEPTH, A2_DEPTH, 2)));
        }
        for z in [3, 5, 7, 1] {
            convs.push((format!("mssec.out.k{z}"), conv(z, A2_DEPTH, MSSEC_DEPTH, 2)));
        }
        convs.push(("mssec.skip".into(), conv(1, A1_DEPTH, MSSEC_DEPTH, 4)));
        for t in 0..4 {
            convs.push((format!("ruccf.q{t}"), conv(3, 1, RUCCF_DEPTH, 2)));
        }
        let dense = vec![
            ("head.fc1".to_string(), config.feature_len(), HIDDEN),
            ("head.fc2".to_string(), HIDDEN, HIDDEN),
            ("head.fc3".to_string(), HIDDEN, config.num_classes),
        ];
        Self { convs, dense }
    }

    pub fn conv(&self, name: &str) -> Option<ConvSpec> {
        self.convs.iter().find(|(n, _)| n == name).map(|(_, s)| *s)
    }

    /// Every parameter tensor in canonical order: weights then bias per layer.
    pub fn ledger(&self) -> Vec<ParamSpec> {
        let mut out = Vec::new();
        for (name, spec) in &self.convs {
            out.push(ParamSpec {
                name: format!("{name}.weight"),
                shape: spec.weight_shape().to_vec(),
                fan_in: spec.kernel * spec.kernel * spec.in_channels,
                init: Init::He,
            });
            out.push(ParamSpec {
                name: format!("{name}.bias"),
                shape: vec![spec.out_channels],
                fan_in: 0,
                init: Init::Zero,
            });
        }
        for (name, n, m) in &self.dense {
            out.push(ParamSpec {
                name: format!("{name}.weight"),
                shape: vec![*n, *m],
                fan_in: *n,
                init: if name == OUTPUT_LAYER { Init::Zero } else { Init::He },
            });
            out.push(ParamSpec {
                name: format!("{name}.bias"),
                shape: vec![*m],
                fan_in: 0,
                init: Init::Zero,
            });
        }
        out
    }
}

/// Parameters, topology and optimizer state of one network instance.
#[derive(Debug, Clone)]
pub struct Model {
    config: NetConfig,
    topology: Topology,
    names: Vec<String>,
    params: Vec<Tensor>,
    index: HashMap<String, usize>,
    velocity: Vec<Vec<f64>>,
}

/// Rounds to the nearest single-precision value, the checkpoint storage precision.
#[inline]
pub(crate) fn to_storage(v: f64) -> f64 {
    v as f32 as f64
}

impl Model {
    /// Allocates every parameter from `config.seed`: weights uniform in
    /// `±sqrt(6 / fan_in)`, biases and the output layer's weights zero.
    pub fn build(config: NetConfig) -> Result<Self> {
        config.validate()?;
        let topology = Topology::new(&config);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let ledger = topology.ledger();
        let params = ledger
            .iter()
            .map(|spec| {
                let n: usize = spec.shape.iter().product();
                let data = match spec.init {
                    Init::Zero => vec![0.0; n],
                    Init::He => {
                        let bound = spec.init_bound();
                        (0..n).map(|_| to_storage(rng.gen_range(-bound..bound))).collect()
                    }
                };
                Tensor::new(&spec.shape, data).map_err(ModelError::from)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::assemble(config, topology, ledger, params)
    }

    fn assemble(config: NetConfig, topology: Topology, ledger: Vec<ParamSpec>, params: Vec<Tensor>) -> Result<Self> {
        let names: Vec<String> = ledger.into_iter().map(|s| s.name).collect();
        let index = names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect::<HashMap<_, _>>();
        if index.len() != names.len() {
            return Err(ModelError::Config("duplicate parameter names".into()));
        }
        let velocity = params.iter().map(|p| vec![0.0; p.len()]).collect();
        Ok(Self {
            config,
            topology,
            names,
            params,
            index,
            velocity,
        })
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn param(&self, name: &str) -> Result<&Tensor> {
        self.index
            .get(name)
            .map(|&i| &self.params[i])
            .ok_or_else(|| ModelError::UnknownParam(name.to_string()))
    }

    /// Replaces a parameter's values (rounded to storage precision).
    pub fn set_param(&mut self, name: &str, data: &[f64]) -> Result<()> {
        let i = *self
            .index
            .get(name)
            .ok_or_else(|| ModelError::UnknownParam(name.to_string()))?;
        let t = &mut self.params[i];
        if t.len() != data.len() {
            return Err(TensorError::ShapeMismatch(format!("{name}: {} values for {:?}", data.len(), t.shape())).into());
        }
        for (d, &v) in t.data_mut().iter_mut().zip(data) {
            *d = to_storage(v);
        }
        Ok(())
    }

    pub(crate) fn index_of(&self, name: &str) -> usize {
        self.index[name]
    }

    /// Total number of scalar parameters (optimizer state excluded).
    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    /// Parameter count of every tensor whose name starts with `prefix`.
    pub fn param_count_with_prefix(&self, prefix: &str) -> usize {
        self.names
            .iter()
            .zip(&self.params)
            .filter(|(n, _)| n.starts_with(prefix))
            .map(|(_, p)| p.len())
            .sum()
    }

    pub fn velocity(&self) -> &[Vec<f64>] {
        &self.velocity
    }
}

/// Parameter count implied by a configuration, without allocating a model.
pub fn ledger_param_count(config: &NetConfig) -> usize {
    Topology::new(config)
        .ledger()
        .iter()
        .map(|s| s.shape.iter().product::<usize>())
        .sum()
}
