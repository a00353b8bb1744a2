//! Network definitions: encoder, invariant predictor, domain-dependent
//! predictor, domain classifier, and the optional cosine classification head.
//!
//! Models are plain parameter containers. Forward passes bind the parameters
//! onto a fresh graph, so read-only evaluation can run concurrently on clones
//! while a single trainer mutates the original.

mod checkpoint;

pub use checkpoint::{load_model, save_model, CheckpointError};

use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

use crate::common::{Domain, TaskKind};
use crate::diffcore::{DiffError, Graph, NodeId, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        }
    }

    pub fn parse(s: &str) -> Result<Self, ModelError> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            other => Err(ModelError::BadSpec(format!("unknown activation {other:?}"))),
        }
    }
}

#[derive(Error, Debug)]
pub enum ModelError {
    #[error("invalid model spec: {0}")]
    BadSpec(String),
    #[error("domain predictor input width {got} does not match encoder output {encoder_out} + 1")]
    DomainPredictorWidth { got: usize, encoder_out: usize },
    #[error("{context}: expected input width {expected}, got {got}")]
    WidthMismatch { context: &'static str, expected: usize, got: usize },
}

/// Layer sizes, activation, and seed for a fully connected network.
#[derive(Clone, Debug)]
pub struct MlpSpec {
    pub layer_sizes: Vec<usize>,
    pub activation: Activation,
    pub seed: u64,
}

/// Fully connected network; hidden layers use the configured activation,
/// the last layer is linear.
#[derive(Clone, Debug)]
pub struct Mlp {
    weights: Vec<Tensor>,
    biases: Vec<Tensor>,
    activation: Activation,
}

impl Mlp {
    /// Deterministic initialization: weights uniform in
    /// +-sqrt(6 / (fan_in + fan_out)), biases zero.
    pub fn init(spec: &MlpSpec) -> Result<Self, ModelError> {
        if spec.layer_sizes.len() < 2 {
            return Err(ModelError::BadSpec(format!(
                "need at least input and output sizes, got {:?}",
                spec.layer_sizes
            )));
        }
        if spec.layer_sizes.iter().any(|&s| s == 0) {
            return Err(ModelError::BadSpec(format!(
                "all layer sizes must be >= 1, got {:?}",
                spec.layer_sizes
            )));
        }
        let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for pair in spec.layer_sizes.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            weights.push(Tensor::from_fn(fan_in, fan_out, |_, _| rng.gen_range(-bound..bound)));
            biases.push(Tensor::zeros(1, fan_out));
        }
        Ok(Mlp { weights, biases, activation: spec.activation })
    }

    pub fn from_parts(
        weights: Vec<Tensor>,
        biases: Vec<Tensor>,
        activation: Activation,
    ) -> Result<Self, ModelError> {
        if weights.is_empty() || weights.len() != biases.len() {
            return Err(ModelError::BadSpec("weights/biases layer count mismatch".into()));
        }
        for (w, b) in weights.iter().zip(&biases) {
            if b.rows() != 1 || b.cols() != w.cols() {
                return Err(ModelError::BadSpec(format!(
                    "bias {b} incompatible with weight {w}"
                )));
            }
        }
        for pair in weights.windows(2) {
            if pair[0].cols() != pair[1].rows() {
                return Err(ModelError::BadSpec(format!(
                    "consecutive layers {} and {} do not chain",
                    pair[0], pair[1]
                )));
            }
        }
        Ok(Mlp { weights, biases, activation })
    }

    pub fn in_dim(&self) -> usize {
        self.weights[0].rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.last().unwrap().cols()
    }

    pub fn n_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    fn params(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.push(w);
            out.push(b);
        }
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            out.push(w);
            out.push(b);
        }
        out
    }

    pub(crate) fn bind(&self, g: &mut Graph) -> BoundMlp {
        BoundMlp {
            weight_ids: self.weights.iter().map(|w| g.param(w.clone())).collect(),
            bias_ids: self.biases.iter().map(|b| g.param(b.clone())).collect(),
            activation: self.activation,
        }
    }
}

/// An MLP whose parameters are registered on a graph.
pub struct BoundMlp {
    weight_ids: Vec<NodeId>,
    bias_ids: Vec<NodeId>,
    activation: Activation,
}

impl BoundMlp {
    pub fn forward(&self, g: &mut Graph, x: NodeId) -> Result<NodeId, DiffError> {
        let mut h = x;
        let last = self.weight_ids.len() - 1;
        for (l, (&w, &b)) in self.weight_ids.iter().zip(&self.bias_ids).enumerate() {
            h = g.matmul(h, w)?;
            h = g.add_row(h, b)?;
            if l < last {
                h = match self.activation {
                    Activation::Relu => g.relu(h),
                    Activation::Tanh => g.tanh(h),
                };
            }
        }
        Ok(h)
    }

    fn param_ids(&self) -> Vec<NodeId> {
        self.weight_ids
            .iter()
            .zip(&self.bias_ids)
            .flat_map(|(&w, &b)| [w, b])
            .collect()
    }
}

/// Cosine classification head: scaled cosine similarity between normalized
/// features and normalized class weight rows.
#[derive(Clone, Debug)]
pub struct CosineHead {
    pub weight: Tensor,
    pub temperature: f64,
}

impl CosineHead {
    pub fn init(classes: usize, dim: usize, temperature: f64, seed: u64) -> Result<Self, ModelError> {
        if temperature <= 0.0 {
            return Err(ModelError::BadSpec(format!(
                "cosine temperature must be positive, got {temperature}"
            )));
        }
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let bound = (6.0 / (classes + dim) as f64).sqrt();
        let weight = Tensor::from_fn(classes, dim, |_, _| rng.gen_range(-bound..bound));
        Ok(CosineHead { weight, temperature })
    }
}

/// Builds the scaled-cosine logits for already-registered weight parameters.
pub fn cosine_logits_nodes(
    g: &mut Graph,
    weight: NodeId,
    temperature: f64,
    z: NodeId,
) -> Result<NodeId, DiffError> {
    let zn = g.row_normalize(z);
    let wn = g.row_normalize(weight);
    let wt = g.transpose(wn);
    let raw = g.matmul(zn, wt)?;
    Ok(g.scale(raw, 1.0 / temperature))
}

/// Pure-forward cosine logits for a head and a feature batch.
pub fn cosine_logits(head: &CosineHead, z: &Tensor) -> Result<Tensor, DiffError> {
    let mut g = Graph::new();
    let w = g.input(head.weight.clone());
    let zi = g.input(z.clone());
    let out = cosine_logits_nodes(&mut g, w, head.temperature, zi)?;
    Ok(g.value(out).clone())
}

/// Invariant predictor: either a plain MLP or a cosine head over features.
#[derive(Clone, Debug)]
pub enum PredictorHead {
    Linear(Mlp),
    Cosine(CosineHead),
}

impl PredictorHead {
    fn in_dim(&self) -> usize {
        match self {
            PredictorHead::Linear(mlp) => mlp.in_dim(),
            PredictorHead::Cosine(head) => head.weight.cols(),
        }
    }

    pub fn out_dim(&self) -> usize {
        match self {
            PredictorHead::Linear(mlp) => mlp.out_dim(),
            PredictorHead::Cosine(head) => head.weight.rows(),
        }
    }
}

/// Parameter bundle for the encoder, both predictors, and the domain
/// classifier, plus the gradient-reversal coefficients used in training.
#[derive(Clone, Debug)]
pub struct LirrModel {
    encoder: Mlp,
    predictor_fi: PredictorHead,
    predictor_fd: Mlp,
    domain_classifier: Mlp,
    pub grl_lambda_rep: f64,
    pub grl_lambda_risk: f64,
}

/// Architecture description used by `init_model`.
#[derive(Clone, Debug)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub encoder_hidden: Vec<usize>,
    pub z_dim: usize,
    pub head_hidden: Vec<usize>,
    pub output_dim: usize,
    pub activation: Activation,
    pub seed: u64,
    pub grl_lambda_rep: f64,
    pub grl_lambda_risk: f64,
    /// When set, the invariant predictor is a cosine head with this temperature.
    pub cosine_temperature: Option<f64>,
}

impl ModelConfig {
    /// Default architecture: encoder input -> 64 -> 64 -> z(16), heads with one
    /// hidden layer of 32.
    pub fn new(input_dim: usize, kind: TaskKind, classes: usize, seed: u64) -> Self {
        ModelConfig {
            input_dim,
            encoder_hidden: vec![64, 64],
            z_dim: 16,
            head_hidden: vec![32],
            output_dim: match kind {
                TaskKind::Classification => classes,
                TaskKind::Regression => 1,
            },
            activation: Activation::Relu,
            seed,
            grl_lambda_rep: 1.0,
            grl_lambda_risk: 1.0,
            cosine_temperature: None,
        }
    }

    pub fn with_cosine_head(mut self, temperature: f64) -> Self {
        self.cosine_temperature = Some(temperature);
        self
    }
}

/// Default cosine head temperature when none is configured explicitly.
pub const DEFAULT_COSINE_TEMPERATURE: f64 = 0.05;

/// Builds the full model bundle with deterministic, seeded initialization.
pub fn init_model(cfg: &ModelConfig) -> Result<LirrModel, ModelError> {
    if cfg.grl_lambda_rep < 0.0 || cfg.grl_lambda_risk < 0.0 {
        return Err(ModelError::BadSpec("gradient reversal coefficients must be >= 0".into()));
    }
    let mut encoder_sizes = vec![cfg.input_dim];
    encoder_sizes.extend(&cfg.encoder_hidden);
    encoder_sizes.push(cfg.z_dim);
    let encoder = Mlp::init(&MlpSpec {
        layer_sizes: encoder_sizes,
        activation: cfg.activation,
        seed: cfg.seed,
    })?;

    let mut head_sizes = vec![cfg.z_dim];
    head_sizes.extend(&cfg.head_hidden);
    head_sizes.push(cfg.output_dim);
    let predictor_fi = match cfg.cosine_temperature {
        Some(temperature) => PredictorHead::Cosine(CosineHead::init(
            cfg.output_dim,
            cfg.z_dim,
            temperature,
            cfg.seed.wrapping_add(1),
        )?),
        None => PredictorHead::Linear(Mlp::init(&MlpSpec {
            layer_sizes: head_sizes.clone(),
            activation: cfg.activation,
            seed: cfg.seed.wrapping_add(1),
        })?),
    };

    let mut fd_sizes = head_sizes;
    fd_sizes[0] = cfg.z_dim + 1;
    let predictor_fd = Mlp::init(&MlpSpec {
        layer_sizes: fd_sizes,
        activation: cfg.activation,
        seed: cfg.seed.wrapping_add(2),
    })?;

    let mut c_sizes = vec![cfg.z_dim];
    c_sizes.extend(&cfg.head_hidden);
    c_sizes.push(1);
    let domain_classifier = Mlp::init(&MlpSpec {
        layer_sizes: c_sizes,
        activation: cfg.activation,
        seed: cfg.seed.wrapping_add(3),
    })?;

    LirrModel::new(
        encoder,
        predictor_fi,
        predictor_fd,
        domain_classifier,
        cfg.grl_lambda_rep,
        cfg.grl_lambda_risk,
    )
}

impl LirrModel {
    pub fn new(
        encoder: Mlp,
        predictor_fi: PredictorHead,
        predictor_fd: Mlp,
        domain_classifier: Mlp,
        grl_lambda_rep: f64,
        grl_lambda_risk: f64,
    ) -> Result<Self, ModelError> {
        let z = encoder.out_dim();
        if predictor_fd.in_dim() != z + 1 {
            return Err(ModelError::DomainPredictorWidth {
                got: predictor_fd.in_dim(),
                encoder_out: z,
            });
        }
        if predictor_fi.in_dim() != z {
            return Err(ModelError::WidthMismatch {
                context: "invariant predictor",
                expected: z,
                got: predictor_fi.in_dim(),
            });
        }
        if domain_classifier.in_dim() != z || domain_classifier.out_dim() != 1 {
            return Err(ModelError::WidthMismatch {
                context: "domain classifier",
                expected: z,
                got: domain_classifier.in_dim(),
            });
        }
        Ok(LirrModel {
            encoder,
            predictor_fi,
            predictor_fd,
            domain_classifier,
            grl_lambda_rep,
            grl_lambda_risk,
        })
    }

    pub fn encoder(&self) -> &Mlp {
        &self.encoder
    }

    pub fn predictor_fi(&self) -> &PredictorHead {
        &self.predictor_fi
    }

    pub fn predictor_fd(&self) -> &Mlp {
        &self.predictor_fd
    }

    pub fn domain_classifier(&self) -> &Mlp {
        &self.domain_classifier
    }

    pub fn z_dim(&self) -> usize {
        self.encoder.out_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.predictor_fi.out_dim()
    }

    /// All trainable tensors in a fixed, documented order:
    /// encoder, invariant predictor, domain predictor, domain classifier.
    pub fn params(&self) -> Vec<&Tensor> {
        let mut out = self.encoder.params();
        match &self.predictor_fi {
            PredictorHead::Linear(mlp) => out.extend(mlp.params()),
            PredictorHead::Cosine(head) => out.push(&head.weight),
        }
        out.extend(self.predictor_fd.params());
        out.extend(self.domain_classifier.params());
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = self.encoder.params_mut();
        match &mut self.predictor_fi {
            PredictorHead::Linear(mlp) => out.extend(mlp.params_mut()),
            PredictorHead::Cosine(head) => out.push(&mut head.weight),
        }
        out.extend(self.predictor_fd.params_mut());
        out.extend(self.domain_classifier.params_mut());
        out
    }

    /// Index ranges of each parameter group in `params` order.
    pub fn param_groups(&self) -> Vec<(&'static str, std::ops::Range<usize>)> {
        let enc = 2 * self.encoder.n_layers();
        let fi = match &self.predictor_fi {
            PredictorHead::Linear(mlp) => 2 * mlp.n_layers(),
            PredictorHead::Cosine(_) => 1,
        };
        let fd = 2 * self.predictor_fd.n_layers();
        let c = 2 * self.domain_classifier.n_layers();
        vec![
            ("encoder", 0..enc),
            ("fi", enc..enc + fi),
            ("fd", enc + fi..enc + fi + fd),
            ("c", enc + fi + fd..enc + fi + fd + c),
        ]
    }

    /// Stable names aligned with `params` order, used by the checkpoint format.
    pub fn param_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mlp_names = |prefix: &str, mlp: &Mlp, out: &mut Vec<String>| {
            for l in 0..mlp.n_layers() {
                out.push(format!("{prefix}.w{l}"));
                out.push(format!("{prefix}.b{l}"));
            }
        };
        mlp_names("encoder", &self.encoder, &mut out);
        match &self.predictor_fi {
            PredictorHead::Linear(mlp) => mlp_names("fi", mlp, &mut out),
            PredictorHead::Cosine(_) => out.push("fi.cosine_weight".into()),
        }
        mlp_names("fd", &self.predictor_fd, &mut out);
        mlp_names("c", &self.domain_classifier, &mut out);
        out
    }

    /// Registers every parameter on a graph and returns handles for forwards.
    pub fn bind(&self, g: &mut Graph) -> BoundModel {
        let encoder = self.encoder.bind(g);
        let fi = match &self.predictor_fi {
            PredictorHead::Linear(mlp) => BoundHead::Linear(mlp.bind(g)),
            PredictorHead::Cosine(head) => BoundHead::Cosine {
                weight: g.param(head.weight.clone()),
                temperature: head.temperature,
            },
        };
        let fd = self.predictor_fd.bind(g);
        let c = self.domain_classifier.bind(g);

        let mut param_ids = encoder.param_ids();
        match &fi {
            BoundHead::Linear(mlp) => param_ids.extend(mlp.param_ids()),
            BoundHead::Cosine { weight, .. } => param_ids.push(*weight),
        }
        param_ids.extend(fd.param_ids());
        param_ids.extend(c.param_ids());

        BoundModel { encoder, fi, fd, c, param_ids }
    }

    /// Pure forward pass of the invariant route: encoder then f_i.
    pub fn predict(&self, x: &Tensor) -> Result<Tensor, DiffError> {
        let mut g = Graph::new();
        let bound = self.bind(&mut g);
        let xi = g.input(x.clone());
        let z = bound.encoder.forward(&mut g, xi)?;
        let out = bound.predict_invariant(&mut g, z)?;
        Ok(g.value(out).clone())
    }

    pub fn all_finite(&self) -> bool {
        self.params().iter().all(|t| t.is_finite())
    }
}

enum BoundHead {
    Linear(BoundMlp),
    Cosine { weight: NodeId, temperature: f64 },
}

/// A model bundle registered on a graph. Parameter node ids are aligned with
/// `LirrModel::params` order.
pub struct BoundModel {
    pub encoder: BoundMlp,
    fi: BoundHead,
    fd: BoundMlp,
    c: BoundMlp,
    param_ids: Vec<NodeId>,
}

impl BoundModel {
    pub fn param_ids(&self) -> &[NodeId] {
        &self.param_ids
    }

    /// Encodes a raw feature batch into representation space.
    pub fn encode(&self, g: &mut Graph, x: &Tensor) -> Result<NodeId, DiffError> {
        let xi = g.input(x.clone());
        self.encoder.forward(g, xi)
    }

    /// Invariant predictor output (logits or regression values).
    pub fn predict_invariant(&self, g: &mut Graph, z: NodeId) -> Result<NodeId, DiffError> {
        match &self.fi {
            BoundHead::Linear(mlp) => mlp.forward(g, z),
            BoundHead::Cosine { weight, temperature } => {
                cosine_logits_nodes(g, *weight, *temperature, z)
            }
        }
    }

    /// Domain-dependent predictor: features concatenated with a constant
    /// channel of the domain's value (0 for source, 1 for target).
    pub fn forward_fd(&self, g: &mut Graph, z: NodeId, domain: Domain) -> Result<NodeId, DiffError> {
        let n = g.value(z).rows();
        let channel = g.input(Tensor::filled(n, 1, domain.channel_value()));
        let zd = g.concat_cols(z, channel)?;
        self.fd.forward(g, zd)
    }

    /// Domain-dependent predictor on an input that already carries its
    /// domain channel column (mixed-domain batches).
    pub fn forward_fd_on(&self, g: &mut Graph, z_with_channel: NodeId) -> Result<NodeId, DiffError> {
        self.fd.forward(g, z_with_channel)
    }

    /// Domain classifier probability of the source domain, computed on
    /// gradient-reversed features so one backward pass trains the classifier
    /// to discriminate and the encoder to confuse.
    pub fn domain_prob(&self, g: &mut Graph, z: NodeId, lambda: f64) -> Result<NodeId, DiffError> {
        let reversed = g.grad_reverse(z, lambda)?;
        let logits = self.c.forward(g, reversed)?;
        Ok(g.sigmoid(logits))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::gradcheck::{central_diff, max_rel_error};

    fn test_config() -> ModelConfig {
        ModelConfig {
            input_dim: 2,
            encoder_hidden: vec![8],
            z_dim: 4,
            head_hidden: vec![5],
            output_dim: 2,
            activation: Activation::Relu,
            seed: 42,
            grl_lambda_rep: 1.0,
            grl_lambda_risk: 1.0,
            cosine_temperature: None,
        }
    }

    #[test]
    fn same_seed_gives_bit_identical_parameters() {
        let a = init_model(&test_config()).unwrap();
        let b = init_model(&test_config()).unwrap();
        for (pa, pb) in a.params().iter().zip(b.params()) {
            assert_eq!(pa.data(), pb.data());
        }
    }

    #[test]
    fn fd_width_check_fires_on_mismatch() {
        let cfg = test_config();
        let encoder = Mlp::init(&MlpSpec {
            layer_sizes: vec![2, 8, 4],
            activation: Activation::Relu,
            seed: 1,
        })
        .unwrap();
        let fi = Mlp::init(&MlpSpec {
            layer_sizes: vec![4, 5, 2],
            activation: Activation::Relu,
            seed: 2,
        })
        .unwrap();
        // wrong: fd takes z_dim instead of z_dim + 1
        let fd = Mlp::init(&MlpSpec {
            layer_sizes: vec![4, 5, 2],
            activation: Activation::Relu,
            seed: 3,
        })
        .unwrap();
        let c = Mlp::init(&MlpSpec {
            layer_sizes: vec![4, 5, 1],
            activation: Activation::Relu,
            seed: 4,
        })
        .unwrap();
        let err = LirrModel::new(
            encoder,
            PredictorHead::Linear(fi),
            fd,
            c,
            cfg.grl_lambda_rep,
            cfg.grl_lambda_risk,
        )
        .unwrap_err();
        assert!(matches!(err, ModelError::DomainPredictorWidth { got: 4, encoder_out: 4 }));
    }

    #[test]
    fn initialized_forward_is_finite() {
        let model = init_model(&test_config()).unwrap();
        let x = Tensor::from_fn(7, 2, |i, j| (i as f64 - 3.0) * 0.7 + j as f64 * 0.3);
        let logits = model.predict(&x).unwrap();
        assert_eq!(logits.shape(), (7, 2));
        assert!(logits.is_finite());
    }

    #[test]
    fn forward_fd_shapes_and_domain_sensitivity() {
        let model = init_model(&test_config()).unwrap();
        let mut g = Graph::new();
        let bound = model.bind(&mut g);
        let x = Tensor::from_fn(5, 2, |i, _| i as f64 * 0.1 - 0.2);
        let z = bound.encode(&mut g, &x).unwrap();
        let src = bound.forward_fd(&mut g, z, Domain::Source).unwrap();
        let tgt = bound.forward_fd(&mut g, z, Domain::Target).unwrap();
        assert_eq!(g.value(src).shape(), (5, 2));
        // random init: the channel weights are nonzero, so the flag matters
        assert_ne!(g.value(src).data(), g.value(tgt).data());
    }

    #[test]
    fn forward_fd_gradient_reaches_channel_weights() {
        let model = init_model(&test_config()).unwrap();
        let x = Tensor::from_fn(4, 2, |i, j| 0.3 * (i as f64) - 0.2 * (j as f64) + 0.1);

        let mut g = Graph::new();
        let bound = model.bind(&mut g);
        let z = bound.encode(&mut g, &x).unwrap();
        let out = bound.forward_fd(&mut g, z, Domain::Target).unwrap();
        let loss = g.mean(out);
        let grads = g.backward(loss).unwrap();

        // fd first-layer weight is the parameter right after encoder + fi
        let params = model.params();
        let names = model.param_names();
        let fd_w0_idx = names.iter().position(|n| n == "fd.w0").unwrap();
        let fd_w0_grad = grads.wrt(bound.param_ids()[fd_w0_idx]).unwrap();
        let channel_row = fd_w0_grad.row(model.z_dim());
        assert!(channel_row.iter().any(|v| v.abs() > 0.0), "channel weights get gradient");

        // finite differences on that same weight tensor
        let fd_w0 = params[fd_w0_idx].clone();
        let xc = x.clone();
        let model_fd = model.clone();
        let f = move |p: &[Tensor]| {
            let mut m = model_fd.clone();
            {
                let mut ps = m.params_mut();
                *ps[fd_w0_idx] = p[0].clone();
            }
            let mut g = Graph::new();
            let bound = m.bind(&mut g);
            let z = bound.encode(&mut g, &xc).unwrap();
            let out = bound.forward_fd(&mut g, z, Domain::Target).unwrap();
            let loss = g.mean(out);
            g.value(loss).item()
        };
        let numeric = central_diff(f, &[fd_w0], 1e-5);
        assert!(max_rel_error(fd_w0_grad, &numeric[0]) < 1e-4);
    }

    #[test]
    fn domain_prob_in_open_unit_interval() {
        let model = init_model(&test_config()).unwrap();
        let mut g = Graph::new();
        let bound = model.bind(&mut g);
        let x = Tensor::from_fn(6, 2, |i, _| (i as f64 - 2.5) * 2.0);
        let z = bound.encode(&mut g, &x).unwrap();
        let p = bound.domain_prob(&mut g, z, 1.0).unwrap();
        for v in g.value(p).data() {
            assert!(*v > 0.0 && *v < 1.0);
        }
    }

    #[test]
    fn domain_prob_lambda_zero_blocks_encoder_gradient() {
        let model = init_model(&test_config()).unwrap();
        let x = Tensor::from_fn(4, 2, |i, j| 0.5 * i as f64 - 0.3 * j as f64);
        let run = |lambda: f64| {
            let mut g = Graph::new();
            let bound = model.bind(&mut g);
            let z = bound.encode(&mut g, &x).unwrap();
            let p = bound.domain_prob(&mut g, z, lambda).unwrap();
            let y = g.input(Tensor::filled(4, 1, 1.0));
            let loss = g.bce_loss(p, y).unwrap();
            let grads = g.backward(loss).unwrap();
            grads.wrt(bound.param_ids()[0]).unwrap().clone()
        };
        let zero = run(0.0);
        assert!(zero.data().iter().all(|v| *v == 0.0));

        let plain = run(1.0);
        // lambda = 1: encoder gradient is the exact negation of the non-reversed run
        let mut g = Graph::new();
        let bound = model.bind(&mut g);
        let z = bound.encode(&mut g, &x).unwrap();
        let logits = {
            // same forward but without the reversal layer
            let c = model.domain_classifier();
            let bc = c.bind(&mut g);
            let l = bc.forward(&mut g, z).unwrap();
            g.sigmoid(l)
        };
        let y = g.input(Tensor::filled(4, 1, 1.0));
        let loss = g.bce_loss(logits, y).unwrap();
        let grads = g.backward(loss).unwrap();
        let unreversed = grads.wrt(bound.param_ids()[0]).unwrap();
        for (a, b) in plain.data().iter().zip(unreversed.data()) {
            assert_eq!(*a, -b);
        }
    }

    #[test]
    fn cosine_logits_geometry() {
        let weight = Tensor::from_vec(2, 3, vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let head = CosineHead { weight, temperature: 0.05 };
        // rows parallel to weight rows 0 and 1
        let z = Tensor::from_vec(2, 3, vec![2.0, 0.0, 0.0, 0.0, 5.0, 0.0]);
        let logits = cosine_logits(&head, &z).unwrap();
        assert!(logits.get(0, 0) > logits.get(0, 1));
        assert!(logits.get(1, 1) > logits.get(1, 0));

        // scaling a feature row leaves its logits unchanged
        let z10 = Tensor::from_vec(2, 3, vec![20.0, 0.0, 0.0, 0.0, 50.0, 0.0]);
        let logits10 = cosine_logits(&head, &z10).unwrap();
        for (a, b) in logits.data().iter().zip(logits10.data()) {
            assert!((a - b).abs() < 1e-9);
        }

        // halving the temperature doubles the logits
        let hot = CosineHead { weight: head.weight.clone(), temperature: 0.025 };
        let logits_hot = cosine_logits(&hot, &z).unwrap();
        for (a, b) in logits.data().iter().zip(logits_hot.data()) {
            assert!((2.0 * a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn cosine_argmax_invariant_to_positive_row_scaling() {
        let head = CosineHead::init(3, 4, 0.05, 7).unwrap();
        let z = Tensor::from_fn(5, 4, |i, j| ((i * 7 + j * 3) as f64).sin());
        let base = cosine_logits(&head, &z).unwrap();
        let scaled_z = Tensor::from_fn(5, 4, |i, j| z.get(i, j) * (1.0 + i as f64 * 10.0));
        let scaled = cosine_logits(&head, &scaled_z).unwrap();
        for i in 0..5 {
            let argmax = |t: &Tensor| {
                (0..3)
                    .max_by(|&a, &b| t.get(i, a).partial_cmp(&t.get(i, b)).unwrap())
                    .unwrap()
            };
            assert_eq!(argmax(&base), argmax(&scaled));
        }
    }

    #[test]
    fn forwards_are_pure() {
        let model = init_model(&test_config()).unwrap();
        let x = Tensor::from_fn(3, 2, |i, j| i as f64 + j as f64);
        let a = model.predict(&x).unwrap();
        let b = model.predict(&x).unwrap();
        assert_eq!(a.data(), b.data());
    }
}
