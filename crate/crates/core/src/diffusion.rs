//! Toy conditional denoising diffusion engine.
//!
//! A linear noise schedule corrupts feature vectors forward in time; a small
//! network conditioned on a timestep encoding and a concept embedding
//! predicts the added noise; ancestral sampling runs the chain backwards
//! with classifier-free guidance. An optional per-step steering term can be
//! injected into the combined noise prediction by a caller-supplied
//! provider, which is how fairness guidance hooks in.

use std::fs;
use std::io::BufReader;
use std::path::Path;

use crate::checkpoint::{read_mlp_block, write_mlp_block, CkptReader};
use crate::error::{Error, Result};
use crate::mlp::Mlp;
use crate::optim::AdamState;
use crate::rng::Rng;
use crate::scalar::{cast, Scalar};
use crate::textio::{fmt17, parse_f64, parse_usize};
use crate::world::{Dataset, ATTR_CONCEPTS};

/// RNG stream indices carved out of a sampling seed. Diffusion noise and
/// direction draws live on separate streams so that a fair-guided run can be
/// compared against a plain run with the same seed, sample by sample.
pub const STREAM_NOISE: u64 = 0;
pub const STREAM_DIRECTION: u64 = 1;
pub const STREAM_PROVIDER: u64 = 2;
const STREAM_TRAIN: u64 = 3;
const STREAM_VOCAB: u64 = 4;
const STREAM_INIT: u64 = 5;
const STREAM_CALIB: u64 = 7;

/// Chains used by the post-training drift calibration pass.
const CALIBRATION_CHAINS: usize = 4000;

/// Bound on the implied clean-data estimate during reverse steps, in
/// workspace units (the workspace is standardized, so data sits within a
/// few units of zero). Strong guidance can push a chain far outside the
/// range the network was trained on, where its predictions flatten out and
/// the per-step 1/√α amplification inflates the state without limit;
/// clamping the x̂0 estimate is the standard stabilization.
const X0_CLIP: f64 = 5.0;

// ---------------------------------------------------------------------------
// Noise schedule
// ---------------------------------------------------------------------------

/// Linear variance schedule over timesteps `1..=t_max`.
///
/// `alpha_bar` is the running product of `1 - beta` and decreases strictly;
/// `sigma_t = sqrt(beta_t)` is the reverse-step noise scale.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSchedule<T> {
    t_max: usize,
    beta: Vec<T>,
    alpha: Vec<T>,
    alpha_bar: Vec<T>,
    sigma: Vec<T>,
}

impl<T: Scalar> NoiseSchedule<T> {
    /// Betas interpolated linearly from `beta_start` to `beta_end`
    /// inclusive. With a single step the schedule is just `beta_start`.
    pub fn linear(t_max: usize, beta_start: T, beta_end: T) -> Result<Self> {
        if t_max == 0 {
            return Err(Error::Spec("schedule needs at least one timestep".into()));
        }
        let lo = T::zero();
        let hi = T::one();
        if !(beta_start > lo && beta_start < hi && beta_end > lo && beta_end < hi) {
            return Err(Error::Spec(format!(
                "beta bounds ({beta_start}, {beta_end}) must lie strictly inside (0, 1)"
            )));
        }
        let mut beta = Vec::with_capacity(t_max);
        for t in 0..t_max {
            let frac = if t_max == 1 {
                T::zero()
            } else {
                cast::<T>(t as f64) / cast::<T>((t_max - 1) as f64)
            };
            beta.push(beta_start + frac * (beta_end - beta_start));
        }
        let alpha: Vec<T> = beta.iter().map(|b| T::one() - *b).collect();
        let mut alpha_bar = Vec::with_capacity(t_max);
        let mut acc = T::one();
        for a in &alpha {
            acc = acc * *a;
            alpha_bar.push(acc);
        }
        let sigma: Vec<T> = beta.iter().map(|b| b.sqrt()).collect();
        Ok(NoiseSchedule {
            t_max,
            beta,
            alpha,
            alpha_bar,
            sigma,
        })
    }

    /// Default schedule: 100 steps, betas from 1e-4 to 0.2.
    pub fn default_schedule() -> Self {
        NoiseSchedule::linear(100, cast(1e-4), cast(0.2)).unwrap()
    }

    pub fn t_max(&self) -> usize {
        self.t_max
    }

    fn check_t(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.t_max {
            return Err(Error::Range(format!(
                "timestep {t} outside 1..={}",
                self.t_max
            )));
        }
        Ok(())
    }

    pub fn beta(&self, t: usize) -> Result<T> {
        self.check_t(t)?;
        Ok(self.beta[t - 1])
    }

    pub fn alpha(&self, t: usize) -> Result<T> {
        self.check_t(t)?;
        Ok(self.alpha[t - 1])
    }

    pub fn alpha_bar(&self, t: usize) -> Result<T> {
        self.check_t(t)?;
        Ok(self.alpha_bar[t - 1])
    }

    pub fn sigma(&self, t: usize) -> Result<T> {
        self.check_t(t)?;
        Ok(self.sigma[t - 1])
    }

    pub fn beta_start(&self) -> T {
        self.beta[0]
    }

    pub fn beta_end(&self) -> T {
        self.beta[self.t_max - 1]
    }

    /// Closed-form forward corruption:
    /// `z_t = sqrt(abar_t) z_0 + sqrt(1 - abar_t) eps`.
    pub fn diffuse(&self, z0: &[T], t: usize, eps: &[T]) -> Result<Vec<T>> {
        self.check_t(t)?;
        if z0.len() != eps.len() {
            return Err(Error::Shape(format!(
                "z0 has dimension {}, noise has {}",
                z0.len(),
                eps.len()
            )));
        }
        let ab = self.alpha_bar[t - 1];
        let c0 = ab.sqrt();
        let c1 = (T::one() - ab).sqrt();
        Ok(z0
            .iter()
            .zip(eps)
            .map(|(z, e)| c0 * *z + c1 * *e)
            .collect())
    }
}

// ---------------------------------------------------------------------------
// Conditioning vocabulary
// ---------------------------------------------------------------------------

/// Fixed (not learned) concept embeddings plus a zero null token for
/// unconditional prediction. Embeddings are unit vectors drawn once from
/// the vocabulary seed.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditioningVocab {
    entries: Vec<(String, Vec<f64>)>,
    embed_dim: usize,
    null: Vec<f64>,
}

impl ConditioningVocab {
    pub fn build(names: &[String], embed_dim: usize, rng: &mut Rng) -> Result<Self> {
        if embed_dim == 0 {
            return Err(Error::Spec("embedding dimension must be positive".into()));
        }
        let mut entries: Vec<(String, Vec<f64>)> = Vec::with_capacity(names.len());
        for name in names {
            if entries.iter().any(|(n, _)| n == name) {
                return Err(Error::Spec(format!("duplicate vocabulary entry {name:?}")));
            }
            let mut v = rng.gaussian_vec(embed_dim);
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
            for x in &mut v {
                *x /= norm;
            }
            entries.push((name.clone(), v));
        }
        // The null token sits at the centroid of the vocabulary rather than
        // at the origin: unconditional predictions then live in the region
        // of embedding space that every conditioned example helps shape,
        // instead of a corner only the dropped examples ever visit.
        let mut null = vec![0.0; embed_dim];
        for (_, v) in &entries {
            for (a, x) in null.iter_mut().zip(v) {
                *a += x;
            }
        }
        if !entries.is_empty() {
            for a in &mut null {
                *a /= entries.len() as f64;
            }
        }
        Ok(ConditioningVocab {
            entries,
            embed_dim,
            null,
        })
    }

    pub fn from_entries(entries: Vec<(String, Vec<f64>)>, embed_dim: usize) -> Result<Self> {
        for (name, v) in &entries {
            if v.len() != embed_dim {
                return Err(Error::Shape(format!(
                    "embedding for {name:?} has dimension {}, expected {embed_dim}",
                    v.len()
                )));
            }
        }
        Ok(ConditioningVocab {
            entries,
            embed_dim,
            null: vec![0.0; embed_dim],
        })
    }

    /// Turn `b` into the antipode of `a`, so the pair spans one clean
    /// contrast direction through the origin; the null token moves to the
    /// recomputed centroid (the pair cancels out of it).
    pub fn make_antipodal(&mut self, a: &str, b: &str) -> Result<()> {
        let va = self.get(a)?.to_vec();
        let vb: Vec<f64> = va.iter().map(|x| -x).collect();
        let entry = self
            .entries
            .iter_mut()
            .find(|(n, _)| n == b)
            .ok_or_else(|| Error::Lookup(b.to_string()))?;
        entry.1 = vb;
        let mut null = vec![0.0; self.embed_dim];
        for (_, v) in &self.entries {
            for (x, y) in null.iter_mut().zip(v) {
                *x += y;
            }
        }
        for x in &mut null {
            *x /= self.entries.len() as f64;
        }
        self.null = null;
        Ok(())
    }

    /// Replace the null-token embedding (checkpoint restore).
    pub fn set_null(&mut self, null: Vec<f64>) -> Result<()> {
        if null.len() != self.embed_dim {
            return Err(Error::Shape(format!(
                "null token has dimension {}, expected {}",
                null.len(),
                self.embed_dim
            )));
        }
        self.null = null;
        Ok(())
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn entries(&self) -> &[(String, Vec<f64>)] {
        &self.entries
    }

    pub fn get(&self, name: &str) -> Result<&[f64]> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
            .ok_or_else(|| Error::Lookup(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.iter().any(|(n, _)| n == name)
    }

    /// The unconditional (null) embedding.
    pub fn null(&self) -> &[f64] {
        &self.null
    }
}

/// Sinusoidal timestep encoding of fixed even width: pairs
/// `(sin(w_j t), cos(w_j t))` with geometrically spaced frequencies.
pub fn timestep_encoding(t: usize, width: usize) -> Vec<f64> {
    debug_assert!(width % 2 == 0 && width > 0);
    let pairs = width / 2;
    let mut out = Vec::with_capacity(width);
    for j in 0..pairs {
        let freq = 10_000f64.powf(-2.0 * j as f64 / width as f64);
        let arg = t as f64 * freq;
        out.push(arg.sin());
        out.push(arg.cos());
    }
    out
}

// ---------------------------------------------------------------------------
// Noise prediction model
// ---------------------------------------------------------------------------

/// Classifier-free guidance combination:
/// `uncond + s_g (cond - uncond) + gamma`.
pub fn combine_guidance(uncond: &[f64], cond: &[f64], s_g: f64, gamma: Option<&[f64]>) -> Vec<f64> {
    let mut out: Vec<f64> = uncond
        .iter()
        .zip(cond)
        .map(|(u, c)| u + s_g * (c - u))
        .collect();
    if let Some(g) = gamma {
        for (o, gi) in out.iter_mut().zip(g) {
            *o += gi;
        }
    }
    out
}

#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Probability that a training example is conditioned on the null token
    /// (classifier-free training).
    pub p_uncond: f64,
    /// Probability that a non-dropped example is conditioned on its
    /// attribute token instead of its concept token. This is the toy
    /// analogue of captions that describe the person rather than the
    /// occupation, and is what gives the attribute tokens their meaning.
    pub p_attr: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            batch_size: 128,
            learning_rate: 1e-3,
            p_uncond: 0.1,
            p_attr: 0.5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Spec("batch size must be positive".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Spec(format!(
                "learning rate {} must be positive",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.p_uncond) {
            return Err(Error::Spec(format!(
                "p_uncond {} must be in [0, 1)",
                self.p_uncond
            )));
        }
        if !(0.0..=1.0).contains(&self.p_attr) {
            return Err(Error::Spec(format!("p_attr {} must be in [0, 1]", self.p_attr)));
        }
        Ok(())
    }
}

/// Per-run training statistics.
#[derive(Clone, Debug, Default)]
pub struct TrainReport {
    /// Mean per-sample loss for each epoch.
    pub epoch_loss: Vec<f64>,
    /// How many training examples were conditioned on the null token.
    pub null_uses: usize,
    /// How many training examples were conditioned on an attribute token.
    pub attr_uses: usize,
}

/// Noise prediction network with its vocabulary and schedule. The input is
/// the concatenation `[z_t, tau(t), c]`; the output predicts the noise that
/// produced `z_t`.
#[derive(Clone, Debug)]
pub struct EpsilonModel {
    pub mlp: Mlp<f64>,
    pub vocab: ConditioningVocab,
    pub sched: NoiseSchedule<f64>,
    pub tau_width: usize,
    data_dim: usize,
    /// Per-dimension affine map between data space and the unit-scale
    /// workspace the chain runs in: w = (x - shift) / scale. Identity until
    /// `train` measures the data; keeps the network inputs inside the
    /// well-conditioned range of its activations.
    shift: Vec<f64>,
    scale: Vec<f64>,
}

/// Per-step steering callback: `(chain index, z_t, t, scratch rng)` to an
/// additive term on the combined noise prediction.
pub type SteerFn<'a> = dyn Fn(usize, &[f64], usize, &mut Rng) -> Result<Vec<f64>> + 'a;

/// Default hidden layer widths.
pub const DEFAULT_HIDDEN: [usize; 2] = [64, 64];
/// Default concept embedding dimension.
pub const DEFAULT_EMBED_DIM: usize = 8;
/// Default timestep encoding width.
pub const DEFAULT_TAU_WIDTH: usize = 8;

impl EpsilonModel {
    /// Fresh model for a world: vocabulary over the world's concepts plus
    /// the two attribute tokens, Xavier-initialized network.
    pub fn new(
        concepts: &[String],
        sched: NoiseSchedule<f64>,
        data_dim: usize,
        hidden: &[usize],
        embed_dim: usize,
        tau_width: usize,
        seed: u64,
    ) -> Result<Self> {
        if data_dim == 0 {
            return Err(Error::Spec("data dimension must be positive".into()));
        }
        if tau_width == 0 || tau_width % 2 != 0 {
            return Err(Error::Spec(format!(
                "timestep encoding width {tau_width} must be even and positive"
            )));
        }
        let mut names = concepts.to_vec();
        for a in ATTR_CONCEPTS {
            if !names.iter().any(|n| n == a) {
                names.push(a.to_string());
            }
        }
        let mut vocab_rng = Rng::with_stream(seed, STREAM_VOCAB);
        let vocab = ConditioningVocab::build(&names, embed_dim, &mut vocab_rng)?;
        let mut sizes = vec![data_dim + tau_width + embed_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(data_dim);
        let mut init_rng = Rng::with_stream(seed, STREAM_INIT);
        let mlp = Mlp::xavier(&sizes, &mut init_rng)?;
        Ok(EpsilonModel {
            mlp,
            vocab,
            sched,
            tau_width,
            data_dim,
            shift: vec![0.0; data_dim],
            scale: vec![1.0; data_dim],
        })
    }

    /// Assemble a model from pre-built pieces; the network input must be
    /// exactly data + timestep encoding + embedding wide.
    pub fn from_parts(
        mlp: Mlp<f64>,
        vocab: ConditioningVocab,
        sched: NoiseSchedule<f64>,
        tau_width: usize,
    ) -> Result<Self> {
        if tau_width == 0 || tau_width % 2 != 0 {
            return Err(Error::Spec(format!(
                "timestep encoding width {tau_width} must be even and positive"
            )));
        }
        let data_dim = mlp.output_dim();
        let expect = data_dim + tau_width + vocab.embed_dim();
        if mlp.input_dim() != expect {
            return Err(Error::Shape(format!(
                "network input is {}, expected {expect} (data {data_dim} + encoding {tau_width} + embedding {})",
                mlp.input_dim(),
                vocab.embed_dim()
            )));
        }
        Ok(EpsilonModel {
            mlp,
            vocab,
            sched,
            tau_width,
            data_dim,
            shift: vec![0.0; data_dim],
            scale: vec![1.0; data_dim],
        })
    }

    /// Fresh model with default sizes for a dataset's world.
    pub fn for_dataset(ds: &Dataset, seed: u64) -> Result<Self> {
        Self::new(
            &ds.spec.concept_names(),
            NoiseSchedule::default_schedule(),
            ds.spec.dim,
            &DEFAULT_HIDDEN,
            DEFAULT_EMBED_DIM,
            DEFAULT_TAU_WIDTH,
            seed,
        )
    }

    /// Measure the dataset and set the workspace map to per-dimension
    /// standardization; constant dimensions keep scale 1.
    fn fit_workspace(&mut self, ds: &Dataset) {
        let n = ds.len() as f64;
        let mut shift = vec![0.0; self.data_dim];
        for s in &ds.samples {
            for (a, x) in shift.iter_mut().zip(&s.features) {
                *a += x;
            }
        }
        for a in shift.iter_mut() {
            *a /= n;
        }
        let mut var = vec![0.0; self.data_dim];
        for s in &ds.samples {
            for ((v, m), x) in var.iter_mut().zip(&shift).zip(&s.features) {
                *v += (x - m) * (x - m);
            }
        }
        self.scale = var
            .iter()
            .map(|v| {
                let sd = (v / n).sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        self.shift = shift;
    }

    fn to_workspace(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.shift.iter().zip(&self.scale))
            .map(|(x, (m, s))| (x - m) / s)
            .collect()
    }

    fn to_data(&self, w: &[f64]) -> Vec<f64> {
        w.iter()
            .zip(self.shift.iter().zip(&self.scale))
            .map(|(w, (m, s))| w * s + m)
            .collect()
    }

    /// The affine map between workspace and data coordinates, as
    /// `(shift, scale)` with data = workspace * scale + shift.
    pub fn workspace_map(&self) -> (&[f64], &[f64]) {
        (&self.shift, &self.scale)
    }

    pub fn data_dim(&self) -> usize {
        self.data_dim
    }

    fn encode(&self, z: &[f64], t: usize, emb: &[f64]) -> Vec<f64> {
        let mut input = Vec::with_capacity(self.mlp.input_dim());
        input.extend_from_slice(z);
        input.extend(timestep_encoding(t, self.tau_width));
        input.extend_from_slice(emb);
        input
    }

    fn check_z(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.data_dim {
            return Err(Error::Shape(format!(
                "state has dimension {}, model expects {}",
                z.len(),
                self.data_dim
            )));
        }
        Ok(())
    }

    /// Predicted noise for state `z` at timestep `t`, conditioned on a
    /// concept (or unconditional for `None`).
    pub fn eps(&self, z: &[f64], t: usize, concept: Option<&str>) -> Result<Vec<f64>> {
        self.check_z(z)?;
        self.sched.beta(t)?;
        let emb = match concept {
            Some(name) => self.vocab.get(name)?,
            None => self.vocab.null(),
        };
        self.mlp.forward(&self.encode(z, t, emb))
    }

    /// Guided noise prediction (classifier-free guidance plus an optional
    /// additive steering term).
    pub fn guided_eps(
        &self,
        z: &[f64],
        t: usize,
        concept: &str,
        s_g: f64,
        gamma: Option<&[f64]>,
    ) -> Result<Vec<f64>> {
        if let Some(g) = gamma {
            if g.len() != self.data_dim {
                return Err(Error::Shape(format!(
                    "steering term has dimension {}, model expects {}",
                    g.len(),
                    self.data_dim
                )));
            }
        }
        let uncond = self.eps(z, t, None)?;
        let cond = self.eps(z, t, Some(concept))?;
        Ok(combine_guidance(&uncond, &cond, s_g, gamma))
    }

    /// Minimize the noise prediction error over the dataset. Each example
    /// draws a uniform timestep and Gaussian noise; conditioning is the null
    /// token with probability `p_uncond`, otherwise the sample's attribute
    /// token with probability `p_attr`, otherwise its concept token.
    pub fn train(&mut self, ds: &Dataset, cfg: &TrainConfig) -> Result<TrainReport> {
        cfg.validate()?;
        if ds.is_empty() {
            return Err(Error::Empty("training on empty dataset".into()));
        }
        for s in &ds.samples {
            if s.features.len() != self.data_dim {
                return Err(Error::Shape(format!(
                    "sample {} has dimension {}, model expects {}",
                    s.id,
                    s.features.len(),
                    self.data_dim
                )));
            }
            if !self.vocab.contains(&s.concept) {
                return Err(Error::Lookup(s.concept.clone()));
            }
        }
        let mut report = TrainReport::default();
        if cfg.epochs == 0 {
            return Ok(report);
        }
        self.fit_workspace(ds);
        let whitened: Vec<Vec<f64>> = ds
            .samples
            .iter()
            .map(|s| self.to_workspace(&s.features))
            .collect();
        let mut rng = Rng::with_stream(cfg.seed, STREAM_TRAIN);
        let t_max = self.sched.t_max();
        let n = ds.len();
        let mut adam = AdamState::new(self.mlp.num_params(), cfg.learning_rate);
        let mut order: Vec<usize> = (0..n).collect();
        for _epoch in 0..cfg.epochs {
            rng.shuffle(&mut order);
            let mut epoch_loss = 0.0;
            for batch in order.chunks(cfg.batch_size) {
                let mut batch_grads = crate::mlp::MlpGradients::zeros_like(&self.mlp);
                let inv = 1.0 / batch.len() as f64;
                for &i in batch {
                    let s = &ds.samples[i];
                    let t = 1 + rng.below(t_max);
                    let noise = rng.gaussian_vec(self.data_dim);
                    let zt = self.sched.diffuse(&whitened[i], t, &noise)?;
                    let emb: &[f64] = if rng.uniform() < cfg.p_uncond {
                        report.null_uses += 1;
                        self.vocab.null()
                    } else if rng.uniform() < cfg.p_attr {
                        report.attr_uses += 1;
                        self.vocab.get(ATTR_CONCEPTS[s.attribute as usize])?
                    } else {
                        self.vocab.get(&s.concept)?
                    };
                    let input = self.encode(&zt, t, emb);
                    let (pred, trace) = self.mlp.forward_trace(&input)?;
                    let mut upstream = Vec::with_capacity(self.data_dim);
                    let mut loss = 0.0;
                    for (p, e) in pred.iter().zip(&noise) {
                        let diff = p - e;
                        loss += diff * diff;
                        upstream.push(2.0 * diff / self.data_dim as f64);
                    }
                    epoch_loss += loss / self.data_dim as f64;
                    let grads = self.mlp.backward(&trace, &upstream)?;
                    batch_grads.add_scaled(&grads, inv);
                }
                let mut params = self.mlp.params_flat();
                adam.step(&mut params, &batch_grads.params_flat())?;
                self.mlp.set_params_flat(&params)?;
            }
            report.epoch_loss.push(epoch_loss / n as f64);
        }
        self.calibrate_center(cfg.seed)?;
        Ok(report)
    }

    /// The reverse chain accumulates a small systematic drift from residual
    /// score error. One internal unconditional sampling pass measures that
    /// drift per dimension and folds the correction into the output map, so
    /// that sample means line up with the training data. The pass draws
    /// from its own stream of the training seed and is part of training:
    /// the correction rides along in the checkpoint.
    fn calibrate_center(&mut self, seed: u64) -> Result<()> {
        let base = Rng::with_stream(seed, STREAM_CALIB);
        let mut mean = vec![0.0; self.data_dim];
        for i in 0..CALIBRATION_CHAINS {
            let mut rng = base.split(i as u64);
            let mut z = rng.gaussian_vec(self.data_dim);
            for t in (1..=self.sched.t_max()).rev() {
                let eps = self.eps(&z, t, None)?;
                z = self.reverse_step(&z, t, &eps, &mut rng)?;
            }
            for (a, w) in mean.iter_mut().zip(&z) {
                *a += w;
            }
        }
        for j in 0..self.data_dim {
            let drift = mean[j] / CALIBRATION_CHAINS as f64;
            self.shift[j] -= drift * self.scale[j];
        }
        Ok(())
    }

    /// One reverse step from `z_t` to `z_{t-1}` given the combined noise
    /// prediction; fresh noise is added except at the final step.
    fn reverse_step(
        &self,
        z: &[f64],
        t: usize,
        eps_bar: &[f64],
        rng: &mut Rng,
    ) -> Result<Vec<f64>> {
        let alpha = self.sched.alpha(t)?;
        let beta = self.sched.beta(t)?;
        let ab = self.sched.alpha_bar(t)?;
        let c_mean = 1.0 / alpha.sqrt();
        let c_eps = beta / (1.0 - ab).sqrt();
        let sigma = self.sched.sigma(t)?;
        let sa = ab.sqrt();
        let sn = (1.0 - ab).sqrt();
        let mut out = Vec::with_capacity(z.len());
        for (zi, ei) in z.iter().zip(eps_bar) {
            // When the implied clean-data estimate leaves the plausible
            // range, rebuild the noise prediction from the clamped
            // estimate; otherwise use the prediction untouched.
            let x0 = (zi - sn * ei) / sa;
            let e = if x0.abs() <= X0_CLIP {
                *ei
            } else {
                (zi - sa * x0.clamp(-X0_CLIP, X0_CLIP)) / sn
            };
            let mut v = c_mean * (zi - c_eps * e);
            if t > 1 {
                v += sigma * rng.gaussian();
            }
            out.push(v);
        }
        Ok(out)
    }

    /// Ancestral sampling of `n` vectors for a concept. Chain `i` draws its
    /// diffusion noise from the split stream `(seed, STREAM_NOISE, i)`; the
    /// optional steering provider is called once per step with its own
    /// stream and its result is added to the guided noise prediction.
    pub fn sample_with(
        &self,
        concept: &str,
        s_g: f64,
        n: usize,
        seed: u64,
        provider: Option<&SteerFn>,
    ) -> Result<Vec<Vec<f64>>> {
        self.vocab.get(concept)?;
        let noise_base = Rng::with_stream(seed, STREAM_NOISE);
        let provider_base = Rng::with_stream(seed, STREAM_PROVIDER);
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let mut rng = noise_base.split(i as u64);
            let mut provider_rng = provider_base.split(i as u64);
            let mut z = rng.gaussian_vec(self.data_dim);
            for t in (1..=self.sched.t_max()).rev() {
                let gamma = match provider {
                    Some(p) => Some(p(i, &z, t, &mut provider_rng)?),
                    None => None,
                };
                let eps_bar = self.guided_eps(&z, t, concept, s_g, gamma.as_deref())?;
                z = self.reverse_step(&z, t, &eps_bar, &mut rng)?;
            }
            out.push(self.to_data(&z));
        }
        Ok(out)
    }

    /// Plain guided sampling without a steering term.
    pub fn sample(&self, concept: &str, s_g: f64, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
        self.sample_with(concept, s_g, n, seed, None)
    }

    // -- checkpoint -------------------------------------------------------

    /// Network block followed by the vocabulary (`VOCAB`, one line per
    /// concept, `NULLTOK`), the schedule line
    /// `SCHED t_max beta_start beta_end`, and the workspace map
    /// (`SHIFT` / `SCALE` lines).
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        write_mlp_block(&mut buf, &self.mlp)?;
        use std::io::Write as _;
        writeln!(buf, "VOCAB {}", self.vocab.len())?;
        for (name, v) in self.vocab.entries() {
            let vals: Vec<String> = v.iter().map(|x| fmt17(*x)).collect();
            writeln!(buf, "{} {}", name, vals.join(" "))?;
        }
        let null_vals: Vec<String> = self.vocab.null().iter().map(|x| fmt17(*x)).collect();
        writeln!(buf, "NULLTOK {}", null_vals.join(" "))?;
        writeln!(
            buf,
            "SCHED {} {} {}",
            self.sched.t_max(),
            fmt17(self.sched.beta_start()),
            fmt17(self.sched.beta_end())
        )?;
        let shift: Vec<String> = self.shift.iter().map(|x| fmt17(*x)).collect();
        writeln!(buf, "SHIFT {}", shift.join(" "))?;
        let scale: Vec<String> = self.scale.iter().map(|x| fmt17(*x)).collect();
        writeln!(buf, "SCALE {}", scale.join(" "))?;
        fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = fs::File::open(path).map_err(|e| {
            Error::Io(std::io::Error::new(
                e.kind(),
                format!("{}: {e}", path.display()),
            ))
        })?;
        let mut r = CkptReader::new(BufReader::new(file), &path.display().to_string());
        let mlp = read_mlp_block(&mut r)?;
        let vocab_line = r.next_line()?;
        let Some(count) = vocab_line.strip_prefix("VOCAB ") else {
            return Err(r.err(format!("expected VOCAB line, got {vocab_line:?}")));
        };
        let count = parse_usize(count, "vocab size").map_err(|e| r.err(e.to_string()))?;
        let mut entries = Vec::with_capacity(count);
        let mut embed_dim = None;
        for _ in 0..count {
            let line = r.next_line()?;
            let mut parts = line.split_whitespace();
            let Some(name) = parts.next() else {
                return Err(r.err("empty vocabulary line"));
            };
            let vals: Result<Vec<f64>> =
                parts.map(|t| parse_f64(t, "embedding value")).collect();
            let vals = vals.map_err(|e| r.err(e.to_string()))?;
            if let Some(d) = embed_dim {
                if vals.len() != d {
                    return Err(r.err(format!(
                        "embedding for {name:?} has {} values, expected {d}",
                        vals.len()
                    )));
                }
            } else {
                embed_dim = Some(vals.len());
            }
            entries.push((name.to_string(), vals));
        }
        let embed_dim = embed_dim.ok_or_else(|| r.err("empty vocabulary"))?;
        let null_line = r.next_line()?;
        let Some(rest) = null_line.strip_prefix("NULLTOK ") else {
            return Err(r.err(format!("expected NULLTOK line, got {null_line:?}")));
        };
        let null: Vec<f64> = rest
            .split_whitespace()
            .map(|t| parse_f64(t, "null token value"))
            .collect::<Result<_>>()
            .map_err(|e| r.err(e.to_string()))?;
        if null.len() != embed_dim {
            return Err(r.err(format!(
                "null token has {} values, expected {embed_dim}",
                null.len()
            )));
        }
        let sched_line = r.next_line()?;
        let Some(rest) = sched_line.strip_prefix("SCHED ") else {
            return Err(r.err(format!("expected SCHED line, got {sched_line:?}")));
        };
        let parts: Vec<&str> = rest.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(r.err("SCHED needs t_max beta_start beta_end"));
        }
        let t_max = parse_usize(parts[0], "t_max").map_err(|e| r.err(e.to_string()))?;
        let beta_start = parse_f64(parts[1], "beta_start").map_err(|e| r.err(e.to_string()))?;
        let beta_end = parse_f64(parts[2], "beta_end").map_err(|e| r.err(e.to_string()))?;
        let sched = NoiseSchedule::linear(t_max, beta_start, beta_end)?;
        let data_dim = mlp.output_dim();
        let tau_width = mlp
            .input_dim()
            .checked_sub(data_dim + embed_dim)
            .ok_or_else(|| r.err("network input smaller than data + embedding"))?;
        if tau_width == 0 || tau_width % 2 != 0 {
            return Err(r.err(format!("implied tau width {tau_width} is not a positive even number")));
        }
        let shift_line = r.next_line()?;
        let Some(rest) = shift_line.strip_prefix("SHIFT ") else {
            return Err(r.err(format!("expected SHIFT line, got {shift_line:?}")));
        };
        let shift: Vec<f64> = rest
            .split_whitespace()
            .map(|t| parse_f64(t, "shift value"))
            .collect::<Result<_>>()
            .map_err(|e| r.err(e.to_string()))?;
        let scale_line = r.next_line()?;
        let Some(rest) = scale_line.strip_prefix("SCALE ") else {
            return Err(r.err(format!("expected SCALE line, got {scale_line:?}")));
        };
        let scale: Vec<f64> = rest
            .split_whitespace()
            .map(|t| parse_f64(t, "scale value"))
            .collect::<Result<_>>()
            .map_err(|e| r.err(e.to_string()))?;
        if shift.len() != data_dim || scale.len() != data_dim {
            return Err(r.err(format!(
                "workspace map has {} shift and {} scale values, expected {data_dim}",
                shift.len(),
                scale.len()
            )));
        }
        if scale.iter().any(|s| !s.is_finite() || *s == 0.0) {
            return Err(r.err("workspace scale values must be finite and nonzero"));
        }
        let mut vocab = ConditioningVocab::from_entries(entries, embed_dim)?;
        vocab.set_null(null).map_err(|e| r.err(e.to_string()))?;
        let mut model = EpsilonModel::from_parts(mlp, vocab, sched, tau_width)?;
        model.shift = shift;
        model.scale = scale;
        Ok(model)
    }
}
