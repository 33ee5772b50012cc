//! Brute-force references for tiny models: exact partition functions,
//! conditionals, likelihood gradients, variational bounds, and central finite
//! differences. Everything here enumerates `2^n` binary states.

use alloc::vec;
use alloc::vec::Vec;

use crate::activation::sigmoid;
use crate::dbm::{full_energy, DbmModel};
use crate::dbn::DbnModel;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rbm::{CdGradients, RbmLayer};

/// Largest model the enumerators accept.
pub const MAX_UNITS: usize = 20;
/// Largest RBM accepted by [`exact_likelihood_gradient`].
pub const MAX_GRADIENT_UNITS: usize = 16;
/// Default central-difference step.
pub const FD_STEP: f64 = 1e-5;

/// Any model with an energy over a flat binary state vector.
pub trait EnergyModel {
    fn units(&self) -> usize;
    fn state_energy(&self, state: &[f64]) -> f64;
}

/// State layout `[v ‖ h]`.
impl EnergyModel for RbmLayer {
    fn units(&self) -> usize {
        self.n_visible() + self.n_hidden()
    }

    fn state_energy(&self, state: &[f64]) -> f64 {
        let (v, h) = state.split_at(self.n_visible());
        self.energy_unchecked(v, h)
    }
}

/// State layout `[v ‖ h_1 ‖ … ‖ h_N ‖ labels]`, biases included.
impl EnergyModel for DbmModel {
    fn units(&self) -> usize {
        DbmModel::units(self)
    }

    fn state_energy(&self, state: &[f64]) -> f64 {
        let sizes = self.sizes();
        let (v, mut rest) = state.split_at(sizes[0]);
        let mut hidden = Vec::with_capacity(sizes.len() - 1);
        for &n in &sizes[1..] {
            let (h, r) = rest.split_at(n);
            hidden.push(h);
            rest = r;
        }
        full_energy(self, v, &hidden, rest).expect("state layout matches the model")
    }
}

/// Writes the bits of `index` into `out` (unit `j` is bit `j`).
pub fn bits_into(index: usize, out: &mut [f64]) {
    for (j, x) in out.iter_mut().enumerate() {
        *x = ((index >> j) & 1) as f64;
    }
}

pub fn bits(index: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    bits_into(index, &mut out);
    out
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + libm::log(xs.iter().map(|&x| libm::exp(x - max)).sum::<f64>())
}

fn check_units(units: usize, limit: usize) -> Result<()> {
    if units > limit {
        return Err(Error::TooLarge { units, limit });
    }
    Ok(())
}

/// A normalized distribution over every binary state of `n` units.
#[derive(Clone, Debug, PartialEq)]
pub struct EnumeratedDistribution {
    pub n: usize,
    /// `probs[i]` is the probability of the state with bits of `i`.
    pub probs: Vec<f64>,
    pub log_z: f64,
}

impl EnumeratedDistribution {
    /// Builds `e^(−E)/Z` from an energy over `n` binary units.
    pub fn from_energy(n: usize, mut energy: impl FnMut(&[f64]) -> f64) -> Result<Self> {
        check_units(n, MAX_UNITS)?;
        let mut state = vec![0.0; n];
        let neg: Vec<f64> = (0..1usize << n)
            .map(|i| {
                bits_into(i, &mut state);
                -energy(&state)
            })
            .collect();
        if neg.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("enumeration"));
        }
        let log_z = log_sum_exp(&neg);
        let probs = neg.iter().map(|&x| libm::exp(x - log_z)).collect();
        Ok(EnumeratedDistribution { n, probs, log_z })
    }

    pub fn state(&self, index: usize) -> Vec<f64> {
        bits(index, self.n)
    }

    /// `P(unit j = 1)` for every unit.
    pub fn marginals(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.n];
        for (i, &p) in self.probs.iter().enumerate() {
            for (j, mj) in m.iter_mut().enumerate() {
                if (i >> j) & 1 == 1 {
                    *mj += p;
                }
            }
        }
        m
    }

    /// `E[f(state)]` under the distribution.
    pub fn expectation(&self, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
        let mut state = vec![0.0; self.n];
        let mut total = 0.0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > 0.0 {
                bits_into(i, &mut state);
                total += p * f(&state);
            }
        }
        total
    }
}

pub fn joint<M: EnergyModel>(model: &M) -> Result<EnumeratedDistribution> {
    EnumeratedDistribution::from_energy(model.units(), |s| model.state_energy(s))
}

/// `Z = Σ_states e^(−E)`.
pub fn exact_partition<M: EnergyModel>(model: &M) -> Result<f64> {
    Ok(libm::exp(joint(model)?.log_z))
}

/// Distribution over the free units given `clamp[j] = Some(value)` for clamped units.
/// Free units are enumerated in ascending unit order.
pub fn exact_conditional<M: EnergyModel>(
    model: &M,
    clamp: &[Option<f64>],
) -> Result<EnumeratedDistribution> {
    let n = model.units();
    check_units(n, MAX_UNITS)?;
    if clamp.len() != n {
        return Err(Error::ShapeMismatch {
            op: "exact_conditional",
            expected: (1, n),
            found: (1, clamp.len()),
        });
    }
    let free: Vec<usize> = (0..n).filter(|&j| clamp[j].is_none()).collect();
    let mut full: Vec<f64> = clamp.iter().map(|c| c.unwrap_or(0.0)).collect();
    EnumeratedDistribution::from_energy(free.len(), |s| {
        for (k, &j) in free.iter().enumerate() {
            full[j] = s[k];
        }
        model.state_energy(&full)
    })
}

/// Mean exact log-likelihood `(1/m) Σ log P(x)` of an RBM.
pub fn exact_log_likelihood(rbm: &RbmLayer, data: &Matrix) -> Result<f64> {
    let log_z = joint(rbm)?.log_z;
    let mut total = 0.0;
    for x in data.iter_rows() {
        total += -rbm.free_energy(x)? - log_z;
    }
    Ok(total / data.rows().max(1) as f64)
}

/// `∂ mean log P(data) / ∂θ`: `⟨·⟩_{P(h|data)} − ⟨·⟩_model`, all by enumeration.
/// This is the ascent direction; a CD estimate approximates its negation.
pub fn exact_likelihood_gradient(rbm: &RbmLayer, data: &Matrix) -> Result<CdGradients> {
    check_units(rbm.units(), MAX_GRADIENT_UNITS)?;
    data.ensure_cols("exact_likelihood_gradient", rbm.n_visible())?;
    let (nv, nh) = (rbm.n_visible(), rbm.n_hidden());
    let model = joint(rbm)?;
    let stats = |dist: &EnumeratedDistribution, v_fixed: Option<&[f64]>| {
        let mut w = Matrix::zeros(nv, nh);
        let mut bv = Matrix::zeros(1, nv);
        let mut bh = Matrix::zeros(1, nh);
        let mut s = vec![0.0; dist.n];
        for (idx, &p) in dist.probs.iter().enumerate() {
            bits_into(idx, &mut s);
            let (v, h): (&[f64], &[f64]) = match v_fixed {
                Some(v) => (v, &s),
                None => s.split_at(nv),
            };
            for i in 0..nv {
                bv.as_mut_slice()[i] += p * v[i];
                for j in 0..nh {
                    w.as_mut_slice()[i * nh + j] += p * v[i] * h[j];
                }
            }
            for j in 0..nh {
                bh.as_mut_slice()[j] += p * h[j];
            }
        }
        (w, bv, bh)
    };
    let (mw, mbv, mbh) = stats(&model, None);
    let m = data.rows().max(1) as f64;
    let mut dw = Matrix::zeros(nv, nh);
    let mut dbv = Matrix::zeros(1, nv);
    let mut dbh = Matrix::zeros(1, nh);
    for x in data.iter_rows() {
        let clamp: Vec<Option<f64>> = x
            .iter()
            .map(|&v| Some(v))
            .chain(core::iter::repeat(None).take(nh))
            .collect();
        let post = exact_conditional(rbm, &clamp)?;
        let (w, bv, bh) = stats(&post, Some(x));
        dw.axpy_inplace(1.0 / m, &w)?;
        dbv.axpy_inplace(1.0 / m, &bv)?;
        dbh.axpy_inplace(1.0 / m, &bh)?;
    }
    Ok(CdGradients {
        dw: dw.sub(&mw)?,
        db_v: dbv.sub(&mbv)?,
        db_h: dbh.sub(&mbh)?,
    })
}

/// Central differences `(f(θ + h e_i) − f(θ − h e_i)) / 2h` for every coordinate.
pub fn finite_difference_gradient(
    mut f: impl FnMut(&[f64]) -> f64,
    params: &[f64],
    h: f64,
) -> Result<Vec<f64>> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::config("finite-difference step must be positive"));
    }
    let mut theta = params.to_vec();
    let mut grad = Vec::with_capacity(params.len());
    for i in 0..params.len() {
        theta[i] = params[i] + h;
        let up = f(&theta);
        theta[i] = params[i] - h;
        let down = f(&theta);
        theta[i] = params[i];
        if !(up.is_finite() && down.is_finite()) {
            return Err(Error::NonFinite("finite_difference_gradient"));
        }
        grad.push((up - down) / (2.0 * h));
    }
    Ok(grad)
}

/// `Σ_h Q(h) [log P(x, h) − log Q(h)]` over aligned latent states.
pub fn elbo(log_joint: &[f64], q: &[f64]) -> f64 {
    log_joint
        .iter()
        .zip(q)
        .filter(|(_, &qi)| qi > 0.0)
        .map(|(&lj, &qi)| qi * (lj - libm::log(qi)))
        .sum()
}

/// `log P(x) = log Σ_h P(x, h)`.
pub fn log_evidence(log_joint: &[f64]) -> f64 {
    log_sum_exp(log_joint)
}

/// `P(h | x)` from the joint over latent states.
pub fn exact_posterior(log_joint: &[f64]) -> Vec<f64> {
    let lz = log_sum_exp(log_joint);
    log_joint.iter().map(|&l| libm::exp(l - lz)).collect()
}

/// `Σ_h q log(q/p)` with `0 log 0 = 0`.
pub fn kl_divergence(q: &[f64], p: &[f64]) -> f64 {
    q.iter()
        .zip(p)
        .filter(|(&qi, _)| qi > 0.0)
        .map(|(&qi, &pi)| qi * (libm::log(qi) - libm::log(pi)))
        .sum()
}

fn bernoulli_log_prob(x: &[f64], p: &[f64]) -> f64 {
    x.iter()
        .zip(p)
        .map(|(&xi, &pi)| libm::log(if xi == 1.0 { pi } else { 1.0 - pi }))
        .sum()
}

fn dbn_latent_layout(model: &DbnModel) -> Result<Vec<usize>> {
    if model.lower.is_empty() {
        return Err(Error::config(
            "the variational bound needs at least one belief layer",
        ));
    }
    let sizes: Vec<usize> = model.lower.iter().map(|l| l.n_above()).collect();
    check_units(sizes.iter().sum(), MAX_UNITS)?;
    check_units(model.top.units(), MAX_UNITS)?;
    Ok(sizes)
}

fn split_latent(index: usize, sizes: &[usize]) -> Vec<Vec<f64>> {
    let mut shift = 0;
    sizes
        .iter()
        .map(|&n| {
            let b = bits(index >> shift, n);
            shift += n;
            b
        })
        .collect()
}

fn row_probs(layer_out: Result<Matrix>) -> Vec<f64> {
    layer_out.expect("dimensions were checked").into_vec()
}

/// `log P(x, h_1 … h_{N−1})` for every latent configuration of the belief
/// layers. The top RBM contributes the marginal of its visible feature units,
/// summing over its hidden units and every binary label state.
pub fn dbn_log_joint(model: &DbnModel, x: &[f64]) -> Result<Vec<f64>> {
    let sizes = dbn_latent_layout(model)?;
    if x.len() != model.input_dim() {
        return Err(Error::ShapeMismatch {
            op: "dbn_log_joint",
            expected: (1, model.input_dim()),
            found: (1, x.len()),
        });
    }
    let top_log_z = joint(&model.top)?.log_z;
    let k = model.label_dim;
    let total: usize = sizes.iter().sum();
    let mut out = Vec::with_capacity(1 << total);
    for idx in 0..1usize << total {
        let states = split_latent(idx, &sizes);
        let mut lp = 0.0;
        let mut below: &[f64] = x;
        for (l, h) in model.lower.iter().zip(&states) {
            let p = row_probs(l.down(&Matrix::row_vector(h)));
            lp += bernoulli_log_prob(below, &p);
            below = h;
        }
        let top_feats = &states[states.len() - 1];
        let mut terms = Vec::with_capacity(1 << k);
        let mut vis = top_feats.clone();
        vis.resize(top_feats.len() + k, 0.0);
        for y in 0..1usize << k {
            bits_into(y, &mut vis[top_feats.len()..]);
            terms.push(-model.top.free_energy(&vis)?);
        }
        lp += log_sum_exp(&terms) - top_log_z;
        out.push(lp);
    }
    Ok(out)
}

/// Factorial recognition distribution `Π_i Q(h_i | h_{i−1})` on the same latent ordering.
pub fn dbn_recognition_q(model: &DbnModel, x: &[f64]) -> Result<Vec<f64>> {
    let sizes = dbn_latent_layout(model)?;
    let total: usize = sizes.iter().sum();
    let mut out = Vec::with_capacity(1 << total);
    for idx in 0..1usize << total {
        let states = split_latent(idx, &sizes);
        let mut lq = 0.0;
        let mut below: &[f64] = x;
        for (l, h) in model.lower.iter().zip(&states) {
            let p = row_probs(l.up(&Matrix::row_vector(below)));
            lq += bernoulli_log_prob(h, &p);
            below = h;
        }
        out.push(libm::exp(lq));
    }
    Ok(out)
}

/// Factorial `Q(h) = Π μ_j^{h_j}(1 − μ_j)^{1−h_j}` over every state of `mu.len()` units.
pub fn factorial_distribution(mu: &[f64]) -> Result<Vec<f64>> {
    check_units(mu.len(), MAX_UNITS)?;
    let mut s = vec![0.0; mu.len()];
    Ok((0..1usize << mu.len())
        .map(|i| {
            bits_into(i, &mut s);
            s.iter()
                .zip(mu)
                .map(|(&x, &m)| if x == 1.0 { m } else { 1.0 - m })
                .product()
        })
        .collect())
}

/// `KL(Q_μ ‖ P(h | v, labels))` for a DBM, with `mu` the concatenated hidden means.
pub fn dbm_mean_field_kl(model: &DbmModel, v: &[f64], labels: &[f64], mu: &[f64]) -> Result<f64> {
    let nv = v.len();
    let nh = mu.len();
    let clamp: Vec<Option<f64>> = v
        .iter()
        .map(|&x| Some(x))
        .chain(core::iter::repeat(None).take(nh))
        .chain(labels.iter().map(|&y| Some(y)))
        .collect();
    if clamp.len() != model.units() || nv != model.visible_dim() {
        return Err(Error::config("state does not match the model layout"));
    }
    let post = exact_conditional(model, &clamp)?;
    Ok(kl_divergence(&factorial_distribution(mu)?, &post.probs))
}

/// Per-unit `σ` conditionals of an RBM as produced by enumeration, for cross-checks.
pub fn exact_hidden_marginals(rbm: &RbmLayer, v: &[f64]) -> Result<Vec<f64>> {
    let clamp: Vec<Option<f64>> = v
        .iter()
        .map(|&x| Some(x))
        .chain(core::iter::repeat(None).take(rbm.n_hidden()))
        .collect();
    Ok(exact_conditional(rbm, &clamp)?.marginals())
}

/// Closed-form check value: `σ(b_h + v·W)` per hidden unit.
pub fn factorized_hidden(rbm: &RbmLayer, v: &[f64]) -> Vec<f64> {
    (0..rbm.n_hidden())
        .map(|j| {
            let z = rbm.b_h.get(0, j) + (0..v.len()).map(|i| v[i] * rbm.w.get(i, j)).sum::<f64>();
            sigmoid(z)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn tiny(nv: usize, nh: usize, seed: u64) -> RbmLayer {
        let mut rng = Rng::new(seed);
        RbmLayer {
            w: rng.normal_matrix(nv, nh, 1.0),
            b_v: rng.normal_matrix(1, nv, 0.5),
            b_h: rng.normal_matrix(1, nh, 0.5),
            activation: crate::ActivationKind::Sigmoid,
            index: 0,
        }
    }

    #[test]
    fn zero_models_have_power_of_two_partition() {
        assert!((exact_partition(&RbmLayer::zeros(2, 1)).unwrap() - 8.0).abs() < 1e-12);
        assert!((exact_partition(&RbmLayer::zeros(5, 4)).unwrap() - 512.0).abs() < 1e-9);
        let d = joint(&RbmLayer::zeros(2, 2)).unwrap();
        assert!(d.probs.iter().all(|&p| (p - 1.0 / 16.0).abs() < 1e-15));
    }

    #[test]
    fn too_large_is_rejected() {
        assert!(matches!(
            joint(&RbmLayer::zeros(15, 6)),
            Err(Error::TooLarge { units: 21, .. })
        ));
        assert!(exact_likelihood_gradient(&RbmLayer::zeros(10, 7), &Matrix::zeros(1, 10)).is_err());
    }

    #[test]
    fn free_energy_sums_to_partition() {
        let rbm = tiny(4, 3, 2);
        let z = exact_partition(&rbm).unwrap();
        let total: f64 = (0..16)
            .map(|i| libm::exp(-rbm.free_energy(&bits(i, 4)).unwrap()))
            .sum();
        assert!((total - z).abs() < 1e-10 * z);
    }

    #[test]
    fn conditional_examples() {
        let rbm = tiny(3, 2, 4);
        let all: Vec<Option<f64>> = vec![Some(1.0), Some(0.0), Some(1.0), Some(1.0), Some(0.0)];
        let point = exact_conditional(&rbm, &all).unwrap();
        assert_eq!(point.probs, vec![1.0]);
        let uniform = exact_conditional(&RbmLayer::zeros(3, 2), &[None; 5]).unwrap();
        assert!(uniform
            .probs
            .iter()
            .all(|&p| (p - 1.0 / 32.0).abs() < 1e-15));
        let v = [1.0, 0.0, 1.0];
        let m = exact_hidden_marginals(&rbm, &v).unwrap();
        for (a, b) in m.iter().zip(factorized_hidden(&rbm, &v)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn finite_difference_examples() {
        let quad = finite_difference_gradient(
            |t| 0.5 * t.iter().map(|x| x * x).sum::<f64>(),
            &[1.0, -2.0, 0.5],
            FD_STEP,
        )
        .unwrap();
        for (g, t) in quad.iter().zip([1.0, -2.0, 0.5]) {
            assert!((g - t).abs() < 1e-9);
        }
        assert_eq!(
            finite_difference_gradient(|_| 3.0, &[1.0, 2.0], FD_STEP).unwrap(),
            vec![0.0, 0.0]
        );
        assert!(finite_difference_gradient(|_| 1.0, &[1.0], 0.0).is_err());
        assert!(finite_difference_gradient(
            |t| if t[0] < 1.0 { f64::NAN } else { t[0] },
            &[1.0],
            FD_STEP
        )
        .is_err());
    }

    #[test]
    fn likelihood_gradient_matches_finite_differences() {
        let rbm = tiny(3, 2, 6);
        let data = Matrix::from_rows(&[[1.0, 0.0, 1.0], [0.0, 1.0, 1.0], [1.0, 1.0, 0.0]]).unwrap();
        let g = exact_likelihood_gradient(&rbm, &data).unwrap();
        let fd = finite_difference_gradient(
            |t| {
                let mut r = rbm.clone();
                r.w.as_mut_slice().copy_from_slice(t);
                exact_log_likelihood(&r, &data).unwrap()
            },
            rbm.w.as_slice(),
            FD_STEP,
        )
        .unwrap();
        for (a, b) in g.dw.as_slice().iter().zip(&fd) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
        let fd_bv = finite_difference_gradient(
            |t| {
                let mut r = rbm.clone();
                r.b_v.as_mut_slice().copy_from_slice(t);
                exact_log_likelihood(&r, &data).unwrap()
            },
            rbm.b_v.as_slice(),
            FD_STEP,
        )
        .unwrap();
        for (a, b) in g.db_v.as_slice().iter().zip(&fd_bv) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn symmetric_model_and_data_give_symmetric_gradient() {
        let mut rbm = RbmLayer::zeros(2, 2);
        rbm.w = Matrix::from_rows(&[[0.3, -0.2], [-0.2, 0.3]]).unwrap();
        let data = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let g = exact_likelihood_gradient(&rbm, &data).unwrap();
        assert!((g.dw.get(0, 0) - g.dw.get(1, 1)).abs() < 1e-14);
        assert!((g.dw.get(0, 1) - g.dw.get(1, 0)).abs() < 1e-14);
        assert!((g.db_v.get(0, 0) - g.db_v.get(0, 1)).abs() < 1e-14);
    }

    #[test]
    fn bound_helpers() {
        let lj = [libm::log(0.1), libm::log(0.3)];
        let post = exact_posterior(&lj);
        assert!((elbo(&lj, &post) - log_evidence(&lj)).abs() < 1e-14);
        assert!(elbo(&lj, &[0.5, 0.5]) < log_evidence(&lj));
        assert_eq!(kl_divergence(&post, &post), 0.0);
        let q = factorial_distribution(&[0.25, 1.0]).unwrap();
        assert_eq!(q, vec![0.0, 0.0, 0.75, 0.25]);
    }
}
