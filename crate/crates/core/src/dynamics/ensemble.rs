use std::path::Path;

use ndarray::{s, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Normalizer, PropagationKind, TransitionDataset};
use crate::error::{check_dim, Error, Result};
use crate::net::loss::{gaussian_nll, mse, split_gaussian, LogVarBounds};
use crate::net::{Activation, Adam, ContainerReader, ContainerWriter, Mlp};
use crate::par::{map_range, Exec};
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// Point prediction of the next state.
    Deterministic,
    /// Diagonal Gaussian over the next state.
    Probabilistic,
}

impl ModelKind {
    fn name(self) -> &'static str {
        match self {
            ModelKind::Deterministic => "deterministic",
            ModelKind::Probabilistic => "probabilistic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    /// One-step squared error on normalized state deltas (or Gaussian NLL
    /// for probabilistic members).
    Single,
    /// Sum over an open-loop prediction window of the per-step error.
    Multistep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MultiStepNorm {
    /// Mean squared error per step; with a window of one this is exactly
    /// the single-step loss.
    Squared,
    /// Euclidean norm of the per-step error.
    L2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DynamicsConfig {
    pub kind: ModelKind,
    pub members: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Passes over the data per call to [`DynamicsEnsemble::fit`].
    pub epochs: usize,
    pub holdout_fraction: f64,
    /// Train each member on a resample with replacement.
    pub bootstrap: bool,
    pub weight_decay: f64,
    pub logvar_min: f64,
    pub logvar_max: f64,
    pub loss: LossKind,
    pub ms_horizon: usize,
    pub ms_norm: MultiStepNorm,
    pub propagation: PropagationKind,
    pub particles: usize,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::Probabilistic,
            members: 5,
            hidden: vec![256, 256],
            activation: Activation::Swish,
            learning_rate: 1e-3,
            batch_size: 256,
            epochs: 5,
            holdout_fraction: 0.1,
            bootstrap: false,
            weight_decay: 0.0,
            logvar_min: -10.0,
            logvar_max: 0.5,
            loss: LossKind::Single,
            ms_horizon: 2,
            ms_norm: MultiStepNorm::Squared,
            propagation: PropagationKind::E,
            particles: 20,
        }
    }
}

impl DynamicsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.members == 0 {
            return Err(Error::Config("dynamics.members must be >= 1".into()));
        }
        if self.batch_size == 0 || self.hidden.contains(&0) {
            return Err(Error::Config("batch_size and hidden widths must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return Err(Error::Config("holdout_fraction must be in [0, 1)".into()));
        }
        if self.logvar_min >= self.logvar_max {
            return Err(Error::Config("logvar_min must be < logvar_max".into()));
        }
        if self.ms_horizon == 0 {
            return Err(Error::Config("ms_horizon must be >= 1".into()));
        }
        if self.loss == LossKind::Multistep && self.kind == ModelKind::Probabilistic {
            return Err(Error::Config("the multi-step loss trains deterministic models only".into()));
        }
        Ok(())
    }
}

/// One network of the ensemble, with its optimizer state.
#[derive(Debug, Clone)]
pub struct Member {
    pub net: Mlp,
    /// Log-variance soft bounds; `None` for deterministic members.
    pub bounds: Option<LogVarBounds>,
    opt: Option<Adam>,
    bounds_opt: Option<Adam>,
}

impl PartialEq for Member {
    fn eq(&self, other: &Self) -> bool {
        self.net == other.net && self.bounds == other.bounds
    }
}

impl Member {
    /// Wraps a trained network; `bounds` must be present exactly for
    /// probabilistic members.
    pub fn new(net: Mlp, bounds: Option<LogVarBounds>) -> Self {
        Self {
            net,
            bounds,
            opt: None,
            bounds_opt: None,
        }
    }

    fn init(kind: ModelKind, obs_dim: usize, act_dim: usize, cfg: &DynamicsConfig, stream: &RngStream) -> Result<Self> {
        let mut sizes = vec![obs_dim + act_dim];
        sizes.extend(&cfg.hidden);
        let bounds = match kind {
            ModelKind::Deterministic => {
                sizes.push(obs_dim);
                None
            }
            ModelKind::Probabilistic => {
                sizes.push(2 * obs_dim);
                Some(LogVarBounds::new(obs_dim, cfg.logvar_min, cfg.logvar_max))
            }
        };
        Ok(Self {
            net: Mlp::new(&sizes, cfg.activation, stream)?,
            bounds,
            opt: None,
            bounds_opt: None,
        })
    }
}

/// Per-member losses from one call to [`DynamicsEnsemble::fit`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean training loss over the final epoch.
    pub train_loss: Vec<f64>,
    /// Training objective on the holdout split, if one was made.
    pub holdout_loss: Option<Vec<f64>>,
    /// One-step mean squared error of the predicted mean on the holdout
    /// split, in normalized delta units.
    pub holdout_mse: Option<Vec<f64>>,
}

/// `K` dynamics models sharing one architecture and normalizer.
/// Models predict normalized state deltas: `s' = s + denorm(f(norm(s, a)))`.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsEnsemble {
    kind: ModelKind,
    obs_dim: usize,
    act_dim: usize,
    pub normalizer: Normalizer,
    pub members: Vec<Member>,
}

/// Normalized training arrays.
struct Prepared {
    states: Array2<f64>,
    actions: Array2<f64>,
    inputs: Array2<f64>,
    targets: Array2<f64>,
    norm: Normalizer,
}

impl Prepared {
    fn new(data: &TransitionDataset, norm: &Normalizer) -> Self {
        let n = data.len();
        let (od, ad) = (data.obs_dim(), data.act_dim());
        let mut states = Array2::zeros((n, od));
        let mut actions = Array2::zeros((n, ad));
        let mut targets = Array2::zeros((n, od));
        for (i, t) in data.transitions().iter().enumerate() {
            for d in 0..od {
                states[[i, d]] = t.state[d];
                targets[[i, d]] = (t.next_state[d] - t.state[d] - norm.target_mean[d]) / norm.target_std[d];
            }
            for d in 0..ad {
                actions[[i, d]] = t.action[d];
            }
        }
        let inputs = norm.input_batch(states.view(), actions.view());
        Self {
            states,
            actions,
            inputs,
            targets,
            norm: norm.clone(),
        }
    }
}

impl DynamicsEnsemble {
    /// Freshly initialized ensemble with identity normalization.
    pub fn new(obs_dim: usize, act_dim: usize, cfg: &DynamicsConfig, stream: &RngStream) -> Result<Self> {
        cfg.validate()?;
        let init = stream.split_named("init");
        let members = (0..cfg.members)
            .map(|k| Member::init(cfg.kind, obs_dim, act_dim, cfg, &init.split(k as u64)))
            .collect::<Result<_>>()?;
        Ok(Self {
            kind: cfg.kind,
            obs_dim,
            act_dim,
            normalizer: Normalizer::identity(obs_dim, act_dim),
            members,
        })
    }

    pub fn from_members(kind: ModelKind, normalizer: Normalizer, members: Vec<Member>) -> Result<Self> {
        let first = members.first().ok_or_else(|| Error::invalid("ensemble needs at least one member"))?;
        let obs_dim = normalizer.target_mean.len();
        let act_dim = normalizer.input_mean.len() - obs_dim;
        for m in &members {
            if m.net.sizes() != first.net.sizes() {
                return Err(Error::invalid("ensemble members must share an architecture"));
            }
            check_dim("member input", obs_dim + act_dim, m.net.input_dim())?;
            let out = if kind == ModelKind::Probabilistic { 2 * obs_dim } else { obs_dim };
            check_dim("member output", out, m.net.output_dim())?;
            if m.bounds.is_some() != (kind == ModelKind::Probabilistic) {
                return Err(Error::invalid("log-variance bounds must match the model kind"));
            }
        }
        Ok(Self {
            kind,
            obs_dim,
            act_dim,
            normalizer,
            members,
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn act_dim(&self) -> usize {
        self.act_dim
    }

    /// Refits the normalizer and continues training every member from its
    /// current parameters.
    pub fn fit(&mut self, data: &TransitionDataset, cfg: &DynamicsConfig, stream: &RngStream) -> Result<TrainReport> {
        self.fit_with(data, cfg, stream, Exec::Parallel)
    }

    pub fn fit_with(&mut self, data: &TransitionDataset, cfg: &DynamicsConfig, stream: &RngStream, exec: Exec) -> Result<TrainReport> {
        cfg.validate()?;
        check_dim("dataset state", self.obs_dim, data.obs_dim())?;
        check_dim("dataset action", self.act_dim, data.act_dim())?;
        self.normalizer = Normalizer::fit(data)?;
        let prep = Prepared::new(data, &self.normalizer);

        // Units of the split: transitions, or window starts for multi-step.
        let window = if cfg.loss == LossKind::Multistep { cfg.ms_horizon } else { 1 };
        let units = if window == 1 {
            (0..data.len()).collect::<Vec<_>>()
        } else {
            data.windows(window)
        };
        if units.is_empty() {
            return Err(Error::invalid(format!(
                "dataset has no contiguous window of {window} transitions"
            )));
        }
        let (train, holdout) = split_holdout(&units, cfg.holdout_fraction, &stream.split_named("holdout"));

        let train_stream = stream.split_named("train");
        let results = map_range(exec, self.members.len(), |k| {
            let mut member = self.members[k].clone();
            let loss = train_member(&mut member, &prep, &train, window, cfg, &train_stream.split(k as u64))?;
            Ok::<_, Error>((member, loss))
        });
        let mut train_loss = Vec::with_capacity(results.len());
        for (k, r) in results.into_iter().enumerate() {
            let (member, loss) = r?;
            self.members[k] = member;
            train_loss.push(loss);
        }

        let (holdout_loss, holdout_mse) = if holdout.is_empty() {
            (None, None)
        } else {
            let mut hl = Vec::new();
            let mut hm = Vec::new();
            for m in &self.members {
                hl.push(objective(m, &prep, &holdout, window, cfg)?);
                let x = prep.inputs.select(Axis(0), &holdout);
                let t = prep.targets.select(Axis(0), &holdout);
                let out = m.net.forward_batch(x.view());
                let mean = out.slice(s![.., ..self.obs_dim]).to_owned();
                hm.push(mse(&mean, t.view()).0);
            }
            (Some(hl), Some(hm))
        };
        Ok(TrainReport {
            train_loss,
            holdout_loss,
            holdout_mse,
        })
    }

    /// Mean next state and per-dimension variance from one member.
    pub fn predict(&self, member: usize, s: &[f64], a: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        if member >= self.members.len() {
            return Err(Error::invalid(format!(
                "member index {member} out of range for an ensemble of {}",
                self.members.len()
            )));
        }
        check_dim("state", self.obs_dim, s.len())?;
        check_dim("action", self.act_dim, a.len())?;
        let sv = ArrayView2::from_shape((1, s.len()), s).unwrap();
        let av = ArrayView2::from_shape((1, a.len()), a).unwrap();
        let (mean, var) = self.predict_batch(member, sv, av);
        Ok((mean.row(0).to_vec(), var.row(0).to_vec()))
    }

    /// Batched [`predict`](Self::predict) over rows of `states`/`actions`.
    pub fn predict_batch(&self, member: usize, states: ArrayView2<'_, f64>, actions: ArrayView2<'_, f64>) -> (Array2<f64>, Array2<f64>) {
        let m = &self.members[member];
        let x = self.normalizer.input_batch(states, actions);
        let out = m.net.forward_batch(x.view());
        let norm = &self.normalizer;
        let mut mean = states.to_owned();
        let mut var = Array2::zeros(states.raw_dim());
        match &m.bounds {
            None => {
                for ((r, c), v) in mean.indexed_iter_mut() {
                    *v += out[[r, c]] * norm.target_std[c] + norm.target_mean[c];
                }
            }
            Some(bounds) => {
                let (mu, logvar) = split_gaussian(&out, bounds);
                for ((r, c), v) in mean.indexed_iter_mut() {
                    *v += mu[[r, c]] * norm.target_std[c] + norm.target_mean[c];
                    var[[r, c]] = logvar[[r, c]].exp() * norm.target_std[c] * norm.target_std[c];
                }
            }
        }
        (mean, var)
    }

    /// Average of the member means.
    pub fn mean_prediction(&self, s: &[f64], a: &[f64]) -> Result<Vec<f64>> {
        let mut acc = vec![0.0; self.obs_dim];
        for k in 0..self.members.len() {
            let (m, _) = self.predict(k, s, a)?;
            for (x, y) in acc.iter_mut().zip(m) {
                *x += y;
            }
        }
        let k = self.members.len() as f64;
        Ok(acc.into_iter().map(|v| v / k).collect())
    }

    /// Checkpoint: kind, normalizer statistics and every member's network
    /// and log-variance bounds.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ContainerWriter::new(ENSEMBLE_MAGIC);
        w.str(self.kind.name());
        w.f64s(&self.normalizer.input_mean);
        w.f64s(&self.normalizer.input_std);
        w.f64s(&self.normalizer.target_mean);
        w.f64s(&self.normalizer.target_std);
        w.u64(self.members.len() as u64);
        for m in &self.members {
            w.bytes(&m.net.to_bytes());
            let (mx, mn) = m
                .bounds
                .as_ref()
                .map_or((&[][..], &[][..]), |b| (&b.max[..], &b.min[..]));
            w.f64s(mx);
            w.f64s(mn);
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ContainerReader::new(bytes, ENSEMBLE_MAGIC)?;
        let kind = match r.str()?.as_str() {
            "deterministic" => ModelKind::Deterministic,
            "probabilistic" => ModelKind::Probabilistic,
            other => return Err(Error::Parse(format!("unknown model kind '{other}'"))),
        };
        let normalizer = Normalizer {
            input_mean: r.f64s()?,
            input_std: r.f64s()?,
            target_mean: r.f64s()?,
            target_std: r.f64s()?,
        };
        let n = r.u64()? as usize;
        let mut members = Vec::with_capacity(n.min(1024));
        for _ in 0..n {
            let net = Mlp::from_bytes(r.bytes()?)?;
            let max = r.f64s()?;
            let min = r.f64s()?;
            let bounds = (!max.is_empty()).then_some(LogVarBounds { max, min });
            members.push(Member {
                net,
                bounds,
                opt: None,
                bounds_opt: None,
            });
        }
        r.end()?;
        Self::from_members(kind, normalizer, members)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

const ENSEMBLE_MAGIC: &[u8; 8] = b"ENSCKPT1";

fn split_holdout(units: &[usize], fraction: f64, stream: &RngStream) -> (Vec<usize>, Vec<usize>) {
    let mut perm = units.to_vec();
    perm.shuffle(&mut stream.rng());
    let mut n_hold = (units.len() as f64 * fraction).floor() as usize;
    if units.len() - n_hold == 0 {
        n_hold = 0;
    }
    let holdout = perm.split_off(perm.len() - n_hold);
    (perm, holdout)
}

/// Runs `cfg.epochs` passes of minibatch Adam on `member`; returns the mean
/// loss of the final epoch.
fn train_member(member: &mut Member, prep: &Prepared, train: &[usize], window: usize, cfg: &DynamicsConfig, stream: &RngStream) -> Result<f64> {
    let n_params = member.net.num_params();
    let opt = member.opt.get_or_insert_with(|| {
        let mut a = Adam::new(n_params, cfg.learning_rate);
        a.weight_decay = cfg.weight_decay;
        a
    });
    opt.lr = cfg.learning_rate;
    if let Some(b) = &member.bounds {
        let dim = b.max.len();
        member
            .bounds_opt
            .get_or_insert_with(|| Adam::new(2 * dim, cfg.learning_rate))
            .lr = cfg.learning_rate;
    }

    let mut pool = train.to_vec();
    if cfg.bootstrap {
        let mut rng = stream.split_named("bootstrap").rng();
        pool = (0..train.len()).map(|_| train[rng.random_range(0..train.len())]).collect();
    }
    let batch = cfg.batch_size.min(pool.len()).max(1);
    let mut last_epoch = 0.0;
    for epoch in 0..cfg.epochs {
        let mut order = pool.clone();
        order.shuffle(&mut stream.split(epoch as u64).rng());
        let mut total = 0.0;
        let mut batches = 0;
        for idx in order.chunks(batch) {
            let loss = minibatch_step(member, prep, idx, window, cfg)?;
            total += loss;
            batches += 1;
        }
        last_epoch = total / batches.max(1) as f64;
    }
    Ok(last_epoch)
}

fn minibatch_step(member: &mut Member, prep: &Prepared, idx: &[usize], window: usize, cfg: &DynamicsConfig) -> Result<f64> {
    let (loss, grad, bound_grad) = loss_and_grad(member, prep, idx, window, cfg)?;
    member
        .opt
        .as_mut()
        .expect("optimizer initialized")
        .step(member.net.params_mut(), &grad)?;
    if let (Some(bounds), Some(g)) = (member.bounds.as_mut(), bound_grad) {
        let d = bounds.max.len();
        let mut flat: Vec<f64> = bounds.max.iter().chain(&bounds.min).copied().collect();
        member.bounds_opt.as_mut().expect("bound optimizer").step(&mut flat, &g)?;
        bounds.max.copy_from_slice(&flat[..d]);
        bounds.min.copy_from_slice(&flat[d..]);
    }
    if member.net.params().iter().any(|p| !p.is_finite()) {
        return Err(Error::Diverged("non-finite network parameters after an update".into()));
    }
    Ok(loss)
}

fn objective(member: &Member, prep: &Prepared, idx: &[usize], window: usize, cfg: &DynamicsConfig) -> Result<f64> {
    Ok(loss_and_grad(member, prep, idx, window, cfg)?.0)
}

type LossGrad = (f64, Vec<f64>, Option<Vec<f64>>);

fn loss_and_grad(member: &Member, prep: &Prepared, idx: &[usize], window: usize, cfg: &DynamicsConfig) -> Result<LossGrad> {
    if cfg.loss == LossKind::Multistep {
        let (l, g) = multistep_loss_and_grad(&member.net, prep, idx, window, cfg.ms_norm)?;
        return Ok((l, g, None));
    }
    let x = prep.inputs.select(Axis(0), idx);
    let t = prep.targets.select(Axis(0), idx);
    match &member.bounds {
        None => {
            let (l, g) = member.net.grad(x.view(), |o| mse(o, t.view()))?;
            Ok((l, g, None))
        }
        Some(bounds) => {
            let mut bound_grad = Vec::new();
            let (l, g) = member.net.grad(x.view(), |o| {
                let (l, d, gmax, gmin) = gaussian_nll(o, t.view(), bounds);
                bound_grad = gmax.into_iter().chain(gmin).collect();
                (l, d)
            })?;
            Ok((l, g, Some(bound_grad)))
        }
    }
}

/// Open-loop prediction loss over windows starting at `starts`.
///
/// The model is rolled forward from the observed first state on the logged
/// actions. The error accumulates across steps,
/// `e_h = e_{h-1} + f_h - t_h`, where `f_h` is the predicted and `t_h` the
/// observed normalized delta, and the loss sums the per-step norm of `e_h`.
/// Gradients flow through the predicted states.
fn multistep_loss_and_grad(net: &Mlp, prep: &Prepared, starts: &[usize], window: usize, norm_kind: MultiStepNorm) -> Result<(f64, Vec<f64>)> {
    let norm = &prep.norm;
    let od = prep.states.ncols();
    let b = starts.len();
    let mut state = prep.states.select(Axis(0), starts);
    let mut caches = Vec::with_capacity(window);
    let mut step_grads = Vec::with_capacity(window);
    let mut err: Option<Array2<f64>> = None;
    let mut loss = 0.0;
    for h in 0..window {
        let idx: Vec<usize> = starts.iter().map(|i| i + h).collect();
        let actions = prep.actions.select(Axis(0), &idx);
        let target = prep.targets.select(Axis(0), &idx);
        let x = norm.input_batch(state.view(), actions.view());
        let (f, cache) = net.forward_cached(x.view());
        caches.push(cache);
        let e = match err.take() {
            None => &f - &target,
            Some(prev) => prev + &(&f - &target),
        };
        let (l, g) = match norm_kind {
            MultiStepNorm::Squared => mse(&e, Array2::<f64>::zeros(e.raw_dim()).view()),
            MultiStepNorm::L2 => {
                let mut g = Array2::zeros(e.raw_dim());
                let mut l = 0.0;
                for (r, row) in e.rows().into_iter().enumerate() {
                    let n = row.dot(&row).sqrt();
                    l += n;
                    if n > 0.0 {
                        for c in 0..od {
                            g[[r, c]] = row[c] / (n * b as f64);
                        }
                    }
                }
                (l / b as f64, g)
            }
        };
        loss += l;
        step_grads.push(g);
        for ((r, c), v) in state.indexed_iter_mut() {
            *v += f[[r, c]] * norm.target_std[c] + norm.target_mean[c];
        }
        err = Some(e);
    }
    if !loss.is_finite() {
        return Err(Error::Diverged(format!("non-finite multi-step loss {loss}")));
    }

    let mut grad = vec![0.0; net.num_params()];
    let mut d_err = Array2::<f64>::zeros((b, od));
    let mut d_state = Array2::<f64>::zeros((b, od));
    for h in (0..window).rev() {
        d_err += &step_grads[h];
        let mut d_f = d_err.clone();
        for ((r, c), v) in d_f.indexed_iter_mut() {
            *v += d_state[[r, c]] * norm.target_std[c];
        }
        let (g, d_x) = net.backward(&caches[h], d_f.view());
        for (acc, v) in grad.iter_mut().zip(g) {
            *acc += v;
        }
        for ((r, c), v) in d_state.indexed_iter_mut() {
            *v += d_x[[r, c]] / norm.input_std[c];
        }
    }
    Ok((loss, grad))
}
