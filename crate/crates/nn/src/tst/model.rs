use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sleepcast_core::container;
use sleepcast_core::featurize::DaySequence;

use super::config::TstConfig;
use super::mask::MaskSpec;
use crate::error::{NnError, Result};
use crate::numerics::{BatchNorm, BatchStats, ConvSpec, Dense, Graph, Mode, MultiHeadAttention, ParamStore, SeqLayout, Tensor, Var};

pub const MODEL_KIND: &str = "tst-model";
pub const MODEL_VERSION: u32 = 1;

/// Per-feature z-score statistics fitted on non-padded training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(seqs: &[DaySequence], feat_dim: usize) -> Result<Self> {
        let mut n = 0usize;
        let mut sum = vec![0.0; feat_dim];
        for s in seqs {
            check_width(s, feat_dim)?;
            for t in (0..s.len()).filter(|&t| s.pad_mask[t]) {
                n += 1;
                for (acc, v) in sum.iter_mut().zip(s.row(t)) {
                    *acc += v;
                }
            }
        }
        if n == 0 {
            return Err(NnError::Input("no non-padded rows to fit standardization".into()));
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
        let mut sq = vec![0.0; feat_dim];
        for s in seqs {
            for t in (0..s.len()).filter(|&t| s.pad_mask[t]) {
                for ((acc, v), mu) in sq.iter_mut().zip(s.row(t)).zip(&mean) {
                    *acc += (v - mu) * (v - mu);
                }
            }
        }
        let std = sq
            .iter()
            .zip(&mean)
            .map(|(s, mu)| {
                let sd = (s / n as f64).sqrt();
                if sd <= 1e-12 * mu.abs().max(1.0) {
                    1.0
                } else {
                    sd
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn identity(feat_dim: usize) -> Self {
        Self {
            mean: vec![0.0; feat_dim],
            std: vec![1.0; feat_dim],
        }
    }
}

fn check_width(s: &DaySequence, feat_dim: usize) -> Result<()> {
    if s.n_features != feat_dim {
        return Err(NnError::Input(format!(
            "{}: sequence has {} features, model expects {feat_dim}",
            s.user_day, s.n_features
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderLayer {
    pub attn: MultiHeadAttention,
    pub norm1: BatchNorm,
    pub ff1: Dense,
    pub ff2: Dense,
    pub norm2: BatchNorm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Head {
    /// Per-step `d_model -> feat_dim` reconstruction.
    Reconstruction(Dense),
    /// `(max_len * d_model) -> 1` over the flattened sequence.
    Regression(Dense),
}

const HEAD_PREFIX: &str = "head.";

/// Standardized, padded inputs for a batch of sequences.
#[derive(Debug, Clone)]
pub struct Batch {
    pub layout: SeqLayout,
    /// `(B * T) x feat_dim`; padded rows are zero.
    pub x: Tensor,
    pub valid: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TstModel {
    pub config: TstConfig,
    pub params: ParamStore,
    pub input_weight: String,
    pub input_bias: String,
    pub pos: String,
    pub layers: Vec<EncoderLayer>,
    pub head: Head,
    pub standardizer: Standardizer,
}

/// Everything a training step needs from a forward pass.
pub(crate) struct Forward {
    pub graph: Graph,
    pub output: Var,
    pub stats: Vec<BatchStats>,
}

impl TstModel {
    /// A freshly initialized model with a reconstruction head. Weights are
    /// drawn from a generator seeded with `config.seed`.
    pub fn new(config: TstConfig, standardizer: Standardizer) -> Result<Self> {
        config.validate()?;
        if standardizer.mean.len() != config.feat_dim || standardizer.std.len() != config.feat_dim {
            return Err(NnError::Config("standardizer width differs from feat_dim".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = ParamStore::new();
        let (f, d, k) = (config.feat_dim, config.d_model, config.conv_kernel);
        params.add_uniform("input.weight", k * f, d, k * f, &mut rng);
        params.add_uniform("input.bias", 1, d, k * f, &mut rng);
        params.add_range("pos", config.max_len, d, 0.02, &mut rng);
        let mut layers = Vec::with_capacity(config.n_layers);
        for i in 0..config.n_layers {
            let name = format!("layer{i}");
            layers.push(EncoderLayer {
                attn: MultiHeadAttention::new(&mut params, &format!("{name}.attn"), d, config.n_heads, &mut rng)?,
                norm1: BatchNorm::new(&mut params, &format!("{name}.norm1"), d),
                ff1: Dense::new(&mut params, &format!("{name}.ff1"), d, config.ff_dim, &mut rng),
                ff2: Dense::new(&mut params, &format!("{name}.ff2"), config.ff_dim, d, &mut rng),
                norm2: BatchNorm::new(&mut params, &format!("{name}.norm2"), d),
            });
        }
        let head = Head::Reconstruction(Dense::new(&mut params, "head.reconstruct", d, f, &mut rng));
        Ok(Self {
            config,
            params,
            input_weight: "input.weight".into(),
            input_bias: "input.bias".into(),
            pos: "pos".into(),
            layers,
            head,
            standardizer,
        })
    }

    /// Fits the standardizer on `train` and initializes a model.
    pub fn for_training(config: TstConfig, train: &[DaySequence]) -> Result<Self> {
        let st = Standardizer::fit(train, config.feat_dim)?;
        Self::new(config, st)
    }

    /// Replaces the current head with a regression head whose bias starts
    /// at `bias`.
    pub fn attach_regression_head<R: Rng>(&mut self, bias: f64, rng: &mut R) {
        self.params.remove_prefix(HEAD_PREFIX);
        let inputs = self.config.max_len * self.config.d_model;
        let dense = Dense::new(&mut self.params, "head.regress", inputs, 1, rng);
        self.params.get_mut(self.params.id(&dense.bias)).value.fill(bias);
        self.head = Head::Regression(dense);
    }

    pub fn is_regression(&self) -> bool {
        matches!(self.head, Head::Regression(_))
    }

    /// Standardizes, pads and stacks sequences. Masked cells (if given) are
    /// set to zero after standardization.
    pub fn batch(&self, seqs: &[&DaySequence], masks: Option<&[MaskSpec]>) -> Result<Batch> {
        let (f, t) = (self.config.feat_dim, self.config.max_len);
        let mut x = Array2::zeros((seqs.len() * t, f));
        let mut valid = vec![false; seqs.len() * t];
        for (b, s) in seqs.iter().enumerate() {
            check_width(s, f)?;
            if s.len() > t {
                return Err(NnError::Input(format!("{}: {} steps exceed max_len {t}", s.user_day, s.len())));
            }
            if !s.pad_mask.iter().any(|&v| v) {
                return Err(NnError::Input(format!("{}: sequence is entirely padding", s.user_day)));
            }
            for step in 0..s.len() {
                if !s.pad_mask[step] {
                    continue;
                }
                let r = b * t + step;
                valid[r] = true;
                for (j, v) in s.row(step).iter().enumerate() {
                    let masked = masks.is_some_and(|m| m[b].get(step, j));
                    x[[r, j]] = if masked {
                        0.0
                    } else {
                        (v - self.standardizer.mean[j]) / self.standardizer.std[j]
                    };
                }
            }
        }
        Ok(Batch {
            layout: SeqLayout {
                batch: seqs.len(),
                len: t,
            },
            x,
            valid,
        })
    }

    /// Standardized, unmasked, padded targets for reconstruction.
    pub fn targets(&self, seqs: &[&DaySequence]) -> Result<Tensor> {
        Ok(self.batch(seqs, None)?.x)
    }

    fn dropout<R: Rng>(&self, g: &mut Graph, v: Var, rng: Option<&mut R>) -> Result<Var> {
        let p = self.config.dropout;
        match rng {
            Some(rng) if p > 0.0 => {
                let keep = 1.0 / (1.0 - p);
                let shape = g.value(v).raw_dim();
                let mask = Array2::from_shape_simple_fn(shape, || if rng.random::<f64>() < p { 0.0 } else { keep });
                g.mul_const(v, mask)
            }
            _ => Ok(v),
        }
    }

    /// Encoder output, `(B * T) x d_model`. Dropout is active iff `rng` is
    /// given; batch statistics are used in training mode.
    pub(crate) fn encode<R: Rng>(&self, batch: &Batch, mode: Mode, mut rng: Option<&mut R>) -> Result<Forward> {
        let cfg = &self.config;
        let p = &self.params;
        let mut g = Graph::new();
        let mut stats = Vec::new();
        let x = g.input(batch.x.clone());
        let w = g.param(p, p.id(&self.input_weight));
        let b = g.param(p, p.id(&self.input_bias));
        let mut h = g.conv1d(x, w, Some(b), batch.layout, ConvSpec::same(cfg.conv_kernel, 1))?;
        h = g.scale(h, (cfg.d_model as f64).sqrt());
        let pos = g.param(p, p.id(&self.pos));
        h = g.add_tiled(h, pos)?;
        h = self.dropout(&mut g, h, rng.as_deref_mut())?;
        let rows = Some(batch.valid.as_slice());
        for layer in &self.layers {
            let a = layer.attn.apply(&mut g, p, h, batch.layout, &batch.valid)?;
            let a = self.dropout(&mut g, a, rng.as_deref_mut())?;
            h = g.add(h, a)?;
            let (n1, s1) = layer.norm1.apply(&mut g, p, h, mode, rows)?;
            let ff = layer.ff1.apply(&mut g, p, n1)?;
            let ff = g.gelu(ff);
            let ff = self.dropout(&mut g, ff, rng.as_deref_mut())?;
            let ff = layer.ff2.apply(&mut g, p, ff)?;
            let ff = self.dropout(&mut g, ff, rng.as_deref_mut())?;
            h = g.add(n1, ff)?;
            let (n2, s2) = layer.norm2.apply(&mut g, p, h, mode, rows)?;
            h = n2;
            stats.extend(s1);
            stats.extend(s2);
        }
        h = g.gelu(h);
        h = self.dropout(&mut g, h, rng.as_deref_mut())?;
        Ok(Forward {
            graph: g,
            output: h,
            stats,
        })
    }

    /// Encoder plus head. Reconstruction yields `(B * T) x feat_dim`,
    /// regression `B x 1`.
    pub(crate) fn forward<R: Rng>(&self, batch: &Batch, mode: Mode, rng: Option<&mut R>) -> Result<Forward> {
        let mut fw = self.encode(batch, mode, rng)?;
        let g = &mut fw.graph;
        fw.output = match &self.head {
            Head::Reconstruction(dense) => dense.apply(g, &self.params, fw.output)?,
            Head::Regression(dense) => {
                let keep = batch.valid.iter().map(|&v| if v { 1.0 } else { 0.0 }).collect();
                let z = g.scale_rows(fw.output, keep)?;
                let z = g.reshape(z, batch.layout.batch, batch.layout.len * self.config.d_model)?;
                dense.apply(g, &self.params, z)?
            }
        };
        Ok(fw)
    }

    /// Folds batch statistics from a training forward pass into the running
    /// estimates, in layer order.
    pub(crate) fn update_running(&mut self, stats: &[BatchStats]) {
        let norms = self.layers.iter_mut().flat_map(|l| [&mut l.norm1, &mut l.norm2]);
        for (bn, s) in norms.zip(stats) {
            bn.update_running(s);
        }
    }

    /// Masked reconstruction loss of a batch and its gradient with respect
    /// to every parameter (flattened in store order), in training mode
    /// without dropout.
    pub fn reconstruction_loss_and_grad(&self, seqs: &[&DaySequence], masks: &[MaskSpec]) -> Result<(f64, Vec<f64>)> {
        let mut model = self.clone();
        let (loss, _) = model.reconstruction_step::<ChaCha8Rng>(seqs, masks, None)?;
        Ok((loss, model.params.flat_grads()))
    }

    /// Forward and backward for one reconstruction batch, leaving gradients
    /// in `self.params`.
    pub(crate) fn reconstruction_step<R: Rng>(
        &mut self,
        seqs: &[&DaySequence],
        masks: &[MaskSpec],
        rng: Option<&mut R>,
    ) -> Result<(f64, Vec<BatchStats>)> {
        if !matches!(self.head, Head::Reconstruction(_)) {
            return Err(NnError::Input("model has no reconstruction head".into()));
        }
        let batch = self.batch(seqs, Some(masks))?;
        let target = self.targets(seqs)?;
        let f = self.config.feat_dim;
        let t = self.config.max_len;
        let weights = Array2::from_shape_fn((batch.x.nrows(), f), |(r, j)| {
            let (b, step) = (r / t, r % t);
            if batch.valid[r] && step < masks[b].len && masks[b].get(step, j) {
                1.0
            } else {
                0.0
            }
        });
        let mut fw = self.forward(&batch, Mode::Train, rng)?;
        let loss = fw.graph.masked_mse(fw.output, &target, weights)?;
        self.backprop(&mut fw.graph, loss)?;
        Ok((fw.graph.scalar(loss), fw.stats))
    }

    pub(crate) fn regression_step<R: Rng>(
        &mut self,
        seqs: &[&DaySequence],
        targets: &[f64],
        rng: Option<&mut R>,
    ) -> Result<(f64, Vec<BatchStats>)> {
        let batch = self.batch(seqs, None)?;
        let y = Array2::from_shape_vec((targets.len(), 1), targets.to_vec()).expect("one target per sequence");
        let mut fw = self.forward(&batch, Mode::Train, rng)?;
        let loss = fw.graph.mse(fw.output, &y)?;
        self.backprop(&mut fw.graph, loss)?;
        Ok((fw.graph.scalar(loss), fw.stats))
    }

    fn backprop(&mut self, g: &mut Graph, loss: Var) -> Result<()> {
        g.backward(loss)?;
        self.params.zero_grads();
        g.accumulate_param_grads(&mut self.params)
    }

    /// Reconstructions in standardized units, one `T x feat_dim` block per
    /// sequence, in inference mode.
    pub fn reconstruct(&self, seqs: &[&DaySequence], masks: Option<&[MaskSpec]>) -> Result<Tensor> {
        if !matches!(self.head, Head::Reconstruction(_)) {
            return Err(NnError::Input("model has no reconstruction head".into()));
        }
        let batch = self.batch(seqs, masks)?;
        let fw = self.forward::<ChaCha8Rng>(&batch, Mode::Eval, None)?;
        Ok(fw.graph.value(fw.output).clone())
    }

    /// Encoder output in inference mode, `(B * T) x d_model`.
    pub fn embed(&self, seqs: &[&DaySequence]) -> Result<Tensor> {
        let batch = self.batch(seqs, None)?;
        let fw = self.encode::<ChaCha8Rng>(&batch, Mode::Eval, None)?;
        Ok(fw.graph.value(fw.output).clone())
    }

    /// Raw regression outputs in inference mode.
    pub fn predict(&self, seqs: &[DaySequence]) -> Result<Vec<f64>> {
        if !self.is_regression() {
            return Err(NnError::Input("model has no regression head; fine-tune it first".into()));
        }
        let mut out = Vec::with_capacity(seqs.len());
        let refs: Vec<&DaySequence> = seqs.iter().collect();
        for chunk in refs.chunks(self.config.batch_size) {
            let batch = self.batch(chunk, None)?;
            let fw = self.forward::<ChaCha8Rng>(&batch, Mode::Eval, None)?;
            out.extend(fw.graph.value(fw.output).iter().copied());
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        Ok(container::save(path, MODEL_KIND, MODEL_VERSION, self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let m: Self = container::load(path, MODEL_KIND, MODEL_VERSION)?;
        m.config.validate()?;
        Ok(m)
    }
}
