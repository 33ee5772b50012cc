//! Deep Boltzmann machine: adjusted-weight greedy pretraining, mean-field
//! inference and stochastic-approximation training with persistent chains.
//!
//! Layer `l` (1-based) couples `h_{l−1}` (with `h_0 = v`) to `h_l` through
//! `layers[l−1].w`. Unit biases: `v` uses `layers[0].b_v`, `h_l` uses
//! `layers[l−1].b_h`. When labels are present they are extra visible rows of
//! the top layer, so its weight is `(n_{N−1} + K) × n_N` and the label bias is
//! the tail of its `b_v`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::activation::sigmoid;
use crate::data::{validate_one_of_k, BatchedDataset, ClassificationReport};
use crate::dnn::{check_sizes, init_layer};
use crate::error::{Error, Result};
use crate::history::EpochRecord;
use crate::loss::{loss, LossKind};
use crate::matrix::Matrix;
use crate::optim::{
    anneal, apply_update, momentum_coeff, AnnealKind, AnnealSchedule, Velocity, WeightDecay,
};
use crate::rbm::{train_coupled, Coupling, RbmLayer, TrainConfig};
use crate::rng::{sample_bernoulli, Rng};

/// Mean-field stops once no mean moves by more than this in a sweep.
pub const MEAN_FIELD_TOLERANCE: f64 = 1e-4;
pub const MEAN_FIELD_MAX_SWEEPS: usize = 30;

const CHAIN_STREAM: u64 = 0xdb30_0000;

/// Joint state of every unit, one configuration per row.
#[derive(Clone, Debug, PartialEq)]
pub struct DbmState {
    pub visible: Matrix,
    /// `h_1 … h_N`
    pub hidden: Vec<Matrix>,
    /// `rows × K`; zero columns without labels.
    pub labels: Matrix,
}

impl DbmState {
    pub fn rows(&self) -> usize {
        self.visible.rows()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DbmModel {
    pub layers: Vec<RbmLayer>,
    pub label_dim: usize,
    /// Persistent fantasy particles; created by pretraining.
    pub chains: Option<DbmState>,
}

impl DbmModel {
    pub fn new(layers: Vec<RbmLayer>, label_dim: usize) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::config(
                "a deep Boltzmann machine needs at least one layer",
            ));
        }
        let n = layers.len();
        for l in 1..n {
            let expect = layers[l - 1].n_hidden() + if l + 1 == n { label_dim } else { 0 };
            if layers[l].n_visible() != expect {
                return Err(Error::ShapeMismatch {
                    op: "DbmModel::new",
                    expected: (expect, layers[l].n_hidden()),
                    found: layers[l].w.shape(),
                });
            }
        }
        if n == 1 && label_dim > 0 {
            return Err(Error::config("labels need at least two layers"));
        }
        Ok(DbmModel {
            layers,
            label_dim,
            chains: None,
        })
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn visible_dim(&self) -> usize {
        self.layers[0].n_visible()
    }

    /// `n_0, …, n_N` without labels.
    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.visible_dim()];
        s.extend(self.layers.iter().map(RbmLayer::n_hidden));
        s
    }

    /// Total unit count including labels.
    pub fn units(&self) -> usize {
        self.sizes().iter().sum::<usize>() + self.label_dim
    }

    fn top(&self) -> &RbmLayer {
        &self.layers[self.layers.len() - 1]
    }

    fn label_bias(&self) -> Result<Matrix> {
        let top = self.top();
        top.b_v
            .col_range(top.n_visible() - self.label_dim..top.n_visible())
    }

    fn is_finite(&self) -> bool {
        self.layers.iter().all(RbmLayer::is_finite)
    }

    /// Input to the top layer from below: `[h_{N−1} ‖ labels]`.
    fn top_input(&self, below: &Matrix, labels: &Matrix) -> Result<Matrix> {
        if self.label_dim == 0 {
            Ok(below.clone())
        } else {
            below.hstack(labels)
        }
    }

    /// Total input to `h_l` (1-based) given its neighbours.
    fn hidden_input(
        &self,
        l: usize,
        below: &Matrix,
        above: Option<&Matrix>,
        labels: &Matrix,
    ) -> Result<Matrix> {
        let n = self.depth();
        let layer = &self.layers[l - 1];
        let below_in = if l == n {
            self.top_input(below, labels)?
        } else {
            below.clone()
        };
        let mut z = below_in.affine(&layer.w, &layer.b_h)?;
        if let Some(above) = above {
            let w_up = &self.layers[l].w;
            let w_up = if l + 1 == n && self.label_dim > 0 {
                w_up.row_range(0..layer.n_hidden())
            } else {
                w_up.clone()
            };
            z.axpy_inplace(1.0, &above.matmul_t(&w_up)?)?;
        }
        Ok(z)
    }

    fn visible_input(&self, h1: &Matrix) -> Result<Matrix> {
        let l0 = &self.layers[0];
        let w = if self.depth() == 1 && self.label_dim > 0 {
            l0.w.row_range(0..self.visible_dim())
        } else {
            l0.w.clone()
        };
        let mut z = h1.matmul_t(&w)?;
        z.add_row_inplace(&l0.b_v.col_range(0..self.visible_dim())?)?;
        Ok(z)
    }

    fn label_input(&self, top_hidden: &Matrix) -> Result<Matrix> {
        let top = self.top();
        let k0 = top.n_visible() - self.label_dim;
        let w_lab = top.w.row_range(k0..top.n_visible());
        let mut z = top_hidden.matmul_t(&w_lab)?;
        z.add_row_inplace(&self.label_bias()?)?;
        Ok(z)
    }
}

fn check_binary(op: &'static str, x: &[f64]) -> Result<()> {
    if let Some(bad) = x.iter().find(|&&s| s != 0.0 && s != 1.0) {
        return Err(Error::domain(op, format!("state {bad} is not binary")));
    }
    Ok(())
}

fn bilinear(a: &[f64], w: &Matrix, b: &[f64]) -> f64 {
    let mut e = 0.0;
    for (i, &ai) in a.iter().enumerate() {
        if ai != 0.0 {
            e += ai * w.row(i).iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        }
    }
    e
}

/// `E = −Σ_l h_{l−1}ᵀ W_l h_l` with `h_0 = v`; biases and labels are not part of it.
pub fn dbm_energy(model: &DbmModel, v: &[f64], hidden: &[&[f64]]) -> Result<f64> {
    check_state_dims(model, v, hidden)?;
    check_binary("dbm_energy", v)?;
    for h in hidden {
        check_binary("dbm_energy", h)?;
    }
    let mut e = 0.0;
    let mut below = v;
    for (l, layer) in model.layers.iter().enumerate() {
        let rows = below.len();
        let w = if rows == layer.n_visible() {
            layer.w.clone()
        } else {
            layer.w.row_range(0..rows)
        };
        e -= bilinear(below, &w, hidden[l]);
        below = hidden[l];
    }
    Ok(e)
}

fn check_state_dims(model: &DbmModel, v: &[f64], hidden: &[&[f64]]) -> Result<()> {
    let sizes = model.sizes();
    if v.len() != sizes[0] || hidden.len() != model.depth() {
        return Err(Error::ShapeMismatch {
            op: "dbm_energy",
            expected: (model.depth(), sizes[0]),
            found: (hidden.len(), v.len()),
        });
    }
    for (h, &n) in hidden.iter().zip(&sizes[1..]) {
        if h.len() != n {
            return Err(Error::ShapeMismatch {
                op: "dbm_energy",
                expected: (1, n),
                found: (1, h.len()),
            });
        }
    }
    Ok(())
}

/// Energy of a full binary state including every bias and the label units.
pub fn full_energy(model: &DbmModel, v: &[f64], hidden: &[&[f64]], labels: &[f64]) -> Result<f64> {
    if labels.len() != model.label_dim {
        return Err(Error::ShapeMismatch {
            op: "full_energy",
            expected: (1, model.label_dim),
            found: (1, labels.len()),
        });
    }
    check_binary("full_energy", labels)?;
    let mut e = dbm_energy(model, v, hidden)?;
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    e -= dot(&model.layers[0].b_v.as_slice()[..v.len()], v);
    for (l, layer) in model.layers.iter().enumerate() {
        e -= dot(layer.b_h.as_slice(), hidden[l]);
    }
    if model.label_dim > 0 {
        let top = model.top();
        let k0 = top.n_visible() - model.label_dim;
        e -= dot(&top.b_v.as_slice()[k0..], labels);
        let w_lab = top.w.row_range(k0..top.n_visible());
        e -= bilinear(labels, &w_lab, hidden[model.depth() - 1]);
    }
    Ok(e)
}

/// Greedy pretraining with adjusted weights. The first RBM is trained with its
/// upward weight doubled and the last with its downward weight doubled;
/// intermediate RBMs are trained plainly and stored halved. Each RBM sees the
/// previous layer's hidden probabilities under its training coupling. The
/// top RBM's visible layer is joined with the labels when `labels` is given.
/// Chains start from a sampled bottom-up pass of one data row per batch.
pub fn pretrain_dbm(
    sizes: &[usize],
    data: &[Matrix],
    labels: Option<&[Matrix]>,
    cfg: &TrainConfig,
) -> Result<(DbmModel, Vec<EpochRecord>)> {
    check_sizes(sizes)?;
    let n = sizes.len() - 1;
    if n < 2 {
        return Err(Error::config(
            "a deep Boltzmann machine needs at least two hidden layers",
        ));
    }
    if data.is_empty() {
        return Err(Error::EmptyBatch("pretrain_dbm"));
    }
    let label_dim = match labels {
        Some(ls) => {
            if ls.len() != data.len() {
                return Err(Error::config("data and label batch counts differ"));
            }
            for t in ls {
                validate_one_of_k(t)?;
            }
            ls[0].cols()
        }
        None => 0,
    };
    let mut history = Vec::new();
    let mut layers = Vec::with_capacity(n);
    let mut input: Vec<Matrix> = data.to_vec();
    for l in 1..=n {
        let last = l == n;
        let n_v = sizes[l - 1] + if last { label_dim } else { 0 };
        let mut rbm = init_layer(n_v, sizes[l], l, cfg.seed);
        let coupling = match l {
            1 => Coupling { up: 2.0, down: 1.0 },
            _ if last => Coupling { up: 1.0, down: 2.0 },
            _ => Coupling::TIED,
        };
        if last {
            if let Some(ls) = labels {
                input = input
                    .iter()
                    .zip(ls)
                    .map(|(x, t)| x.hstack(t))
                    .collect::<Result<_>>()?;
            }
        }
        history.extend(train_coupled(
            &mut rbm,
            &input,
            cfg,
            coupling,
            "dbm-pretrain",
        )?);
        if !last {
            input = input
                .iter()
                .map(|b| {
                    let mut z = b.matmul(&rbm.w)?;
                    z.map_inplace(|x| x * coupling.up);
                    z.add_row_inplace(&rbm.b_h)?;
                    Ok(z.map(sigmoid))
                })
                .collect::<Result<_>>()?;
        }
        if l > 1 && !last {
            rbm.w.map_inplace(|x| x / 2.0);
            rbm.b_h.map_inplace(|x| x / 2.0);
            rbm.b_v.map_inplace(|x| x / 2.0);
        }
        layers.push(rbm);
    }
    let mut model = DbmModel::new(layers, label_dim)?;
    let seeds: Vec<Matrix> = data.iter().map(|b| b.row_range(0..1)).collect();
    let seed_labels: Vec<Matrix> = match labels {
        Some(ls) => ls.iter().map(|t| t.row_range(0..1)).collect(),
        None => seeds.iter().map(|_| Matrix::zeros(1, 0)).collect(),
    };
    let v = Matrix::vstack(&seeds)?;
    let y = Matrix::vstack(&seed_labels)?;
    let mut rng = Rng::stream(cfg.seed, CHAIN_STREAM);
    model.chains = Some(init_chains(&model, &v, &y, &mut rng)?);
    Ok((model, history))
}

/// Sampled bottom-up pass used to seed persistent chains.
pub fn init_chains(
    model: &DbmModel,
    v: &Matrix,
    labels: &Matrix,
    rng: &mut Rng,
) -> Result<DbmState> {
    let probs = bottom_up_pass(model, v, labels)?;
    let hidden = probs
        .iter()
        .map(|p| sample_bernoulli(p, rng))
        .collect::<Result<Vec<_>>>()?;
    Ok(DbmState {
        visible: sample_bernoulli(&v.map(|x| x.clamp(0.0, 1.0)), rng)?,
        hidden,
        labels: labels.clone(),
    })
}

/// Initial means: `2W` for layers `1..N−1`, `W` for the top layer; biases once.
pub fn bottom_up_pass(model: &DbmModel, v: &Matrix, labels: &Matrix) -> Result<Vec<Matrix>> {
    v.ensure_cols("bottom_up_pass", model.visible_dim())?;
    labels.ensure_shape("bottom_up_pass", (v.rows(), model.label_dim))?;
    let n = model.depth();
    let mut out: Vec<Matrix> = Vec::with_capacity(n);
    for l in 1..=n {
        let layer = &model.layers[l - 1];
        let below = if l == 1 { v } else { &out[l - 2] };
        let z = if l == n {
            model
                .top_input(below, labels)?
                .affine(&layer.w, &layer.b_h)?
        } else {
            let mut z = below.matmul(&layer.w)?;
            z.map_inplace(|x| 2.0 * x);
            z.add_row_inplace(&layer.b_h)?;
            z
        };
        out.push(z.map(sigmoid));
    }
    Ok(out)
}

/// Result of a mean-field run.
#[derive(Clone, Debug, PartialEq)]
pub struct MeanField {
    pub mu: Vec<Matrix>,
    /// Label means; the clamped labels when they were given.
    pub labels: Matrix,
    /// Largest change of any mean in each sweep.
    pub changes: Vec<f64>,
}

/// Gauss–Seidel mean-field sweeps over `h_1 … h_N` (and free label units)
/// from `init`, with the visible layer clamped, until the largest change falls
/// below `tol` or `max_sweeps` sweeps ran. Clamped labels stay fixed; with
/// `labels == None` label means start at zero and are updated after `h_N`.
pub fn mean_field(
    model: &DbmModel,
    v: &Matrix,
    labels: Option<&Matrix>,
    init: Vec<Matrix>,
    tol: f64,
    max_sweeps: usize,
) -> Result<MeanField> {
    let n = model.depth();
    if init.len() != n {
        return Err(Error::config(
            "mean-field needs one initial mean per hidden layer",
        ));
    }
    let mut y = match labels {
        Some(t) => {
            t.ensure_shape("mean_field", (v.rows(), model.label_dim))?;
            t.clone()
        }
        None => Matrix::zeros(v.rows(), model.label_dim),
    };
    let mut mu = init;
    // The visible term of h_1 never changes during the sweeps.
    let v_term = if n == 1 {
        None
    } else {
        Some(v.affine(&model.layers[0].w, &model.layers[0].b_h)?)
    };
    let mut changes = Vec::new();
    for _ in 0..max_sweeps {
        let mut largest = 0.0f64;
        for l in 1..=n {
            let z = if l == 1 && n > 1 {
                let mut z = v_term.clone().expect("present for n > 1");
                let w_up = if n == 2 && model.label_dim > 0 {
                    model.layers[1].w.row_range(0..model.layers[0].n_hidden())
                } else {
                    model.layers[1].w.clone()
                };
                z.axpy_inplace(1.0, &mu[1].matmul_t(&w_up)?)?;
                z
            } else {
                let below = if l == 1 { v } else { &mu[l - 2] };
                let above = if l < n { Some(&mu[l]) } else { None };
                model.hidden_input(l, below, above, &y)?
            };
            let new = z.map(sigmoid);
            largest = largest.max(max_diff(&new, &mu[l - 1]));
            mu[l - 1] = new;
        }
        if labels.is_none() && model.label_dim > 0 {
            let new = model.label_input(&mu[n - 1])?.map(sigmoid);
            largest = largest.max(max_diff(&new, &y));
            y = new;
        }
        changes.push(largest);
        if largest < tol {
            break;
        }
    }
    Ok(MeanField {
        mu,
        labels: y,
        changes,
    })
}

fn max_diff(a: &Matrix, b: &Matrix) -> f64 {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// One sequential Gibbs sweep of every chain: `h_1 … h_N`, then `v` and labels.
pub fn gibbs_sweep(model: &DbmModel, state: &mut DbmState, rng: &mut Rng) -> Result<()> {
    let n = model.depth();
    for l in 1..=n {
        let below = if l == 1 {
            state.visible.clone()
        } else {
            state.hidden[l - 2].clone()
        };
        let above = if l < n { Some(&state.hidden[l]) } else { None };
        let z = model.hidden_input(l, &below, above, &state.labels)?;
        state.hidden[l - 1] = sample_bernoulli(&z.map(sigmoid), rng)?;
    }
    state.visible = sample_bernoulli(&model.visible_input(&state.hidden[0])?.map(sigmoid), rng)?;
    if model.label_dim > 0 {
        state.labels =
            sample_bernoulli(&model.label_input(&state.hidden[n - 1])?.map(sigmoid), rng)?;
    }
    Ok(())
}

/// Pairwise statistics averaged over rows: per layer `(⟨below·aboveᵀ⟩, ⟨below⟩, ⟨above⟩)`.
fn statistics(
    model: &DbmModel,
    v: &Matrix,
    hidden: &[Matrix],
    labels: &Matrix,
) -> Result<Vec<(Matrix, Matrix, Matrix)>> {
    let m = v.rows() as f64;
    let n = model.depth();
    let mut out = Vec::with_capacity(n);
    for l in 1..=n {
        let below = if l == 1 {
            v.clone()
        } else {
            hidden[l - 2].clone()
        };
        let below = if l == n {
            model.top_input(&below, labels)?
        } else {
            below
        };
        let above = &hidden[l - 1];
        out.push((
            below.t_matmul(above)?.scale(1.0 / m),
            below.column_means(),
            above.column_means(),
        ));
    }
    Ok(out)
}

/// Stochastic-approximation training. Per batch: mean-field on the data
/// (bottom-up initialised, labels clamped), one Gibbs sweep of the persistent
/// chains, then every weight and bias moves by `α_t (data − chain)` statistics.
/// `α_t` follows `cfg.anneal`, or halves every five iterations when that is `None`.
pub fn mean_field_train(
    model: &mut DbmModel,
    set: &BatchedDataset,
    iterations: usize,
    cfg: &TrainConfig,
) -> Result<Vec<EpochRecord>> {
    cfg.validate()?;
    let mut chains = model.chains.take().ok_or_else(|| {
        Error::State("mean-field training needs a pretrained model with chains".into())
    })?;
    let result = train_loop(model, &mut chains, set, iterations, cfg);
    model.chains = Some(chains);
    result
}

fn train_loop(
    model: &mut DbmModel,
    chains: &mut DbmState,
    set: &BatchedDataset,
    iterations: usize,
    cfg: &TrainConfig,
) -> Result<Vec<EpochRecord>> {
    let n = model.depth();
    let labelled = model.label_dim > 0;
    for (x, t) in set.iter() {
        x.ensure_cols("mean_field_train", model.visible_dim())?;
        if labelled {
            t.ensure_cols("mean_field_train", model.label_dim)?;
        }
    }
    let mut rng = Rng::stream(cfg.seed, CHAIN_STREAM + 1);
    let mut vel = Velocity::zeros_like(model.layers.iter().flat_map(|l| [&l.w, &l.b_v, &l.b_h]));
    let schedule = match cfg.anneal.kind {
        AnnealKind::None => AnnealSchedule {
            kind: AnnealKind::Step,
            k: 0.0,
        },
        _ => cfg.anneal,
    };
    let mut history = Vec::with_capacity(iterations);
    for t_iter in 0..iterations {
        let lr = anneal(cfg.lr, t_iter, schedule);
        let rho = momentum_coeff(t_iter, cfg.momentum);
        let mut total = 0.0;
        for (x, t) in set.iter() {
            let y = if labelled {
                t.clone()
            } else {
                Matrix::zeros(x.rows(), 0)
            };
            let init = bottom_up_pass(model, x, &y)?;
            let mf = mean_field(
                model,
                x,
                Some(&y),
                init,
                MEAN_FIELD_TOLERANCE,
                MEAN_FIELD_MAX_SWEEPS,
            )?;
            let recon = model.visible_input(&mf.mu[0])?.map(sigmoid);
            total += loss(&recon, x, LossKind::Mse)? * x.rows() as f64;

            gibbs_sweep(model, chains, &mut rng)?;
            let data_stats = statistics(model, x, &mf.mu, &y)?;
            let chain_stats = statistics(model, &chains.visible, &chains.hidden, &chains.labels)?;
            for l in 0..n {
                let (dw, dbv, dbh) = &data_stats[l];
                let (cw, cbv, cbh) = &chain_stats[l];
                let layer = &mut model.layers[l];
                apply_update(
                    &mut layer.w,
                    &cw.sub(dw)?,
                    vel.slot_mut(3 * l),
                    lr,
                    rho,
                    cfg.decay,
                )?;
                // Visible-side biases belong to a unit only for the visible layer and labels.
                let mut gv = cbv.sub(dbv)?;
                if l > 0 {
                    let own = model.layers[l - 1].n_hidden();
                    for c in 0..own.min(gv.cols()) {
                        gv.set(0, c, 0.0);
                    }
                }
                let layer = &mut model.layers[l];
                apply_update(
                    &mut layer.b_v,
                    &gv,
                    vel.slot_mut(3 * l + 1),
                    lr,
                    rho,
                    WeightDecay::None,
                )?;
                apply_update(
                    &mut layer.b_h,
                    &cbh.sub(dbh)?,
                    vel.slot_mut(3 * l + 2),
                    lr,
                    rho,
                    WeightDecay::None,
                )?;
            }
        }
        if !model.is_finite() {
            return Err(Error::NonFinite("mean-field training"));
        }
        history.push(EpochRecord::new(
            "mean-field",
            t_iter,
            lr,
            rho,
            total / set.samples().max(1) as f64,
        ));
    }
    Ok(history)
}

/// Label means after a mean-field settle with free labels started at zero.
pub fn label_means(model: &DbmModel, data: &Matrix) -> Result<Matrix> {
    if model.label_dim == 0 {
        return Err(Error::config("the model has no label units"));
    }
    let zeros = Matrix::zeros(data.rows(), model.label_dim);
    let init = bottom_up_pass(model, data, &zeros)?;
    Ok(mean_field(
        model,
        data,
        None,
        init,
        MEAN_FIELD_TOLERANCE,
        MEAN_FIELD_MAX_SWEEPS,
    )?
    .labels)
}

pub fn classify_dbm(
    model: &DbmModel,
    data: &Matrix,
    labels: &Matrix,
) -> Result<ClassificationReport> {
    ClassificationReport::from_scores(&label_means(model, data)?, labels)
}
