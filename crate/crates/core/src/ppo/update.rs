use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::encoder::{rotate_observation, Observation};
use crate::nn::{clip_grad_norm, Adam, Categorical, Network, ACTIONS};
use crate::scalar::Scalar;
use crate::seeding::Rng;

use super::{PpoConfig, PpoError, RolloutBuffer};

/// Averages over every optimizer step of one update.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
    /// Gradient norm before clipping.
    pub grad_norm: f64,
    pub steps: usize,
    /// Raw (pre-normalization) advantage mean per level present.
    pub advantage_mean_per_level: Vec<(usize, f64)>,
}

/// Shifts and scales to zero mean and unit (population) deviation.
pub fn normalize_advantages<T: Scalar>(adv: &mut [T]) {
    if adv.is_empty() {
        return;
    }
    let n = adv.len() as f64;
    let mean = adv.iter().map(|a| a.as_f64()).sum::<f64>() / n;
    let var = adv.iter().map(|a| (a.as_f64() - mean).powi(2)).sum::<f64>() / n;
    let scale = 1.0 / (var.sqrt() + 1e-8);
    for a in adv {
        *a = T::of((a.as_f64() - mean) * scale);
    }
}

fn per_level_means<T: Scalar>(levels: &[usize], adv: &[T]) -> Vec<(usize, f64)> {
    let mut sums: std::collections::BTreeMap<usize, (f64, usize)> = Default::default();
    for (&l, a) in levels.iter().zip(adv) {
        let e = sums.entry(l).or_default();
        e.0 += a.as_f64();
        e.1 += 1;
    }
    sums.into_iter().map(|(l, (s, c))| (l, s / c as f64)).collect()
}

/// Epochs of shuffled minibatch optimization on one rollout.
pub fn ppo_update<T: Scalar>(
    net: &mut Network<T>,
    adam: &mut Adam<T>,
    buffer: &RolloutBuffer<T>,
    advantages: &[T],
    returns: &[T],
    cfg: &PpoConfig,
    rng: &mut Rng,
) -> Result<UpdateStats, PpoError> {
    let n = buffer.len();
    for (what, len) in [("advantages", advantages.len()), ("returns", returns.len())] {
        if len != n {
            return Err(PpoError::LengthMismatch { what, expected: n, found: len });
        }
    }
    let mut stats =
        UpdateStats { advantage_mean_per_level: per_level_means(&buffer.levels, advantages), ..Default::default() };
    let mut adv = advantages.to_vec();
    normalize_advantages(&mut adv);

    let clip = T::of(cfg.clip_eps);
    let (lo, hi) = (T::one() - clip, T::one() + clip);
    let mut order: Vec<usize> = (0..n).collect();
    let mb_size = n.div_ceil(cfg.minibatches);
    for epoch in 0..cfg.epochs {
        order.shuffle(rng);
        for (minibatch, idx) in order.chunks(mb_size).enumerate() {
            let rotated: Vec<Observation<T>> = if cfg.augment {
                idx.iter()
                    .map(|&j| {
                        let o = &buffer.obs[j];
                        if o.height == o.width {
                            rotate_observation(o, rng.gen_range(1..4))
                        } else {
                            o.clone()
                        }
                    })
                    .collect()
            } else {
                Vec::new()
            };
            let samples: Vec<usize> =
                idx.iter().chain(if cfg.augment { idx.iter() } else { [].iter() }).copied().collect();
            let refs: Vec<&Observation<T>> = idx.iter().map(|&j| &buffer.obs[j]).chain(rotated.iter()).collect();
            let (out, cache) = net.forward_cached(&refs)?;

            let m = T::of(samples.len() as f64);
            let vcoef = T::of(cfg.value_coef);
            let ecoef = T::of(cfg.entropy_coef);
            let two = T::of(2.0);
            let mut dlogits = vec![T::zero(); samples.len() * ACTIONS];
            let mut dvalues = vec![T::zero(); samples.len()];
            let (mut pl, mut vl, mut ent, mut clipped, mut kl) = (0.0, 0.0, 0.0, 0usize, 0.0);
            for (i, &j) in samples.iter().enumerate() {
                let dist = Categorical::new(out.logits_of(i));
                let a = buffer.actions[j];
                let ratio = (dist.log_prob(a) - buffer.log_probs[j]).exp();
                let adv_j = adv[j];
                let unclipped = ratio * adv_j;
                let clipped_obj = ratio.max(lo).min(hi) * adv_j;
                pl -= unclipped.min(clipped_obj).as_f64();
                let coeff = if unclipped <= clipped_obj { -(adv_j * ratio) / m } else { T::zero() };
                let h = dist.entropy();
                ent += h.as_f64();
                for (k, &lp) in dist.log_probs().iter().enumerate() {
                    let p = lp.exp();
                    let onehot = if k == a { T::one() } else { T::zero() };
                    dlogits[i * ACTIONS + k] = coeff * (onehot - p) + ecoef / m * p * (lp + h);
                }
                let err = out.values[i] - returns[j];
                vl += (err * err).as_f64();
                dvalues[i] = vcoef * two * err / m;
                let r = ratio.as_f64();
                if (r - 1.0).abs() > cfg.clip_eps {
                    clipped += 1;
                }
                kl += (r - 1.0) - r.ln();
            }
            let count = samples.len() as f64;
            let (pl, vl, ent) = (pl / count, vl / count, ent / count);
            let loss = pl + cfg.value_coef * vl - cfg.entropy_coef * ent;
            if !loss.is_finite() {
                return Err(PpoError::NonFiniteLoss {
                    epoch,
                    minibatch,
                    policy_loss: pl,
                    value_loss: vl,
                    entropy: ent,
                });
            }
            let mut grads = net.backward(&cache, &dlogits, &dvalues);
            stats.grad_norm += clip_grad_norm(&mut grads, cfg.max_grad_norm);
            adam.step(net.params_mut(), &grads, cfg.learning_rate);

            stats.policy_loss += pl;
            stats.value_loss += vl;
            stats.entropy += ent;
            stats.clip_fraction += clipped as f64 / count;
            stats.approx_kl += kl / count;
            stats.steps += 1;
        }
    }
    let k = stats.steps.max(1) as f64;
    for v in [
        &mut stats.policy_loss,
        &mut stats.value_loss,
        &mut stats.entropy,
        &mut stats.clip_fraction,
        &mut stats.approx_kl,
        &mut stats.grad_norm,
    ] {
        *v /= k;
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{EnvConfig, ExplorationEnv};
    use crate::nn::{AdamConfig, NetShape};
    use crate::ppo::collect_rollout;
    use crate::seeding::rng_from;
    use crate::vecenv::VecEnv;

    fn rollout(net: &Network<f64>) -> RolloutBuffer<f64> {
        let mut pool = VecEnv::new(4);
        let envs = (0..2)
            .map(|_| ExplorationEnv::new(EnvConfig { max_steps: 30, ..EnvConfig::for_level(1) }).unwrap())
            .collect();
        pool.add_envs(envs, 1).unwrap();
        let mut cur = pool.observations().unwrap();
        collect_rollout(&mut pool, net, &mut cur, &mut rng_from(3), 16).unwrap()
    }

    #[test]
    fn normalization_statistics() {
        let mut rng = rng_from(1);
        let mut a: Vec<f64> = (0..1000).map(|_| rng.gen::<f64>() * 7.0 - 2.0).collect();
        normalize_advantages(&mut a);
        let mean = a.iter().sum::<f64>() / 1000.0;
        let std = (a.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 1000.0).sqrt();
        assert!(mean.abs() <= 1e-10);
        assert!((std - 1.0).abs() <= 1e-6);
    }

    #[test]
    fn zero_learning_rate_leaves_params_unchanged() {
        let mut net = Network::<f64>::init(NetShape::default(), &mut rng_from(1));
        let before = net.clone();
        let buf = rollout(&net);
        let (adv, ret) = buf.advantages(0.99, 0.95).unwrap();
        let mut adam = Adam::new(net.params().len(), AdamConfig::default());
        let cfg = PpoConfig { learning_rate: 0.0, epochs: 2, ..Default::default() };
        let stats = ppo_update(&mut net, &mut adam, &buf, &adv, &ret, &cfg, &mut rng_from(2)).unwrap();
        assert_eq!(net.params(), before.params());
        assert_eq!(stats.steps, 8);
        assert!(stats.entropy > 1.0);
    }

    #[test]
    fn first_minibatch_ratio_is_one() {
        let mut net = Network::<f64>::init(NetShape::default(), &mut rng_from(1));
        let buf = rollout(&net);
        let (adv, ret) = buf.advantages(0.99, 0.95).unwrap();
        let mut adam = Adam::new(net.params().len(), AdamConfig::default());
        let cfg = PpoConfig { epochs: 1, minibatches: 1, augment: false, ..Default::default() };
        let stats = ppo_update(&mut net, &mut adam, &buf, &adv, &ret, &cfg, &mut rng_from(2)).unwrap();
        assert!(stats.approx_kl.abs() < 1e-12);
        assert_eq!(stats.clip_fraction, 0.0);
    }
}
