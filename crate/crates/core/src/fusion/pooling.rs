//! Attentive temporal pooling: `e_t = wᵀ tanh(W_a h_t + b_a)`, `α = softmax(e)`,
//! `v = Σ α_t h_t`. The mean-pooling variant fixes `α_t = 1/T`.

use crate::nn::layer::softmax_in_place;
use crate::error::{Error, Result};
use crate::nn::{ParamId, ParamStore, Tensor};
use crate::noise::RngSeed;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolingKind {
    Attentive,
    Mean,
}

#[derive(Debug, Clone)]
struct PoolCache {
    h: Tensor,
    z: Vec<f64>,
    alpha: Vec<f64>,
}

/// Pools `[B, T, d]` hidden states to `[B, d]`.
#[derive(Debug, Clone)]
pub struct TemporalPooling {
    kind: PoolingKind,
    hidden: usize,
    attention: usize,
    /// `W_a [attention, hidden]`, `b_a [attention]`, `w [attention]` (no bias).
    params: Vec<ParamId>,
    cache: Option<PoolCache>,
}

impl TemporalPooling {
    pub fn new(
        kind: PoolingKind,
        hidden: usize,
        attention: usize,
        name: &str,
        store: &mut ParamStore,
        seed: RngSeed,
    ) -> Self {
        let params = match kind {
            PoolingKind::Attentive => vec![
                store.add_he(&format!("{name}.w_a"), &[attention, hidden], hidden, seed.derive(1)),
                store.add(&format!("{name}.b_a"), Tensor::zeros(&[attention]), true),
                store.add_he(&format!("{name}.w"), &[attention], attention, seed.derive(2)),
            ],
            PoolingKind::Mean => Vec::new(),
        };
        Self {
            kind,
            hidden,
            attention,
            params,
            cache: None,
        }
    }

    pub fn kind(&self) -> PoolingKind {
        self.kind
    }

    pub fn param_ids(&self) -> &[ParamId] {
        &self.params
    }

    fn dims(&self, h: &Tensor) -> Result<(usize, usize)> {
        match h.shape() {
            [b, t, d] if *d == self.hidden && *t >= 1 => Ok((*b, *t)),
            s => Err(Error::shape(format!(
                "pooling over width {} cannot take shape {s:?}",
                self.hidden
            ))),
        }
    }

    /// Returns pooled vectors `[B, d]`, attention weights `[B, T]` and the
    /// `tanh` activations needed for the backward pass.
    fn compute(&self, store: &ParamStore, h: &Tensor) -> Result<(Tensor, Vec<f64>, Vec<f64>)> {
        let (batch, steps) = self.dims(h)?;
        let d = self.hidden;
        let da = self.attention;
        let mut alpha = vec![0.0; batch * steps];
        let mut z = Vec::new();
        match self.kind {
            PoolingKind::Mean => alpha.iter_mut().for_each(|a| *a = 1.0 / steps as f64),
            PoolingKind::Attentive => {
                let wa = store.value(self.params[0]).data();
                let ba = store.value(self.params[1]).data();
                let w = store.value(self.params[2]).data();
                z = vec![0.0; batch * steps * da];
                for b in 0..batch {
                    let scores = &mut alpha[b * steps..(b + 1) * steps];
                    for (t, score) in scores.iter_mut().enumerate() {
                        let ht = &h.data()[(b * steps + t) * d..(b * steps + t + 1) * d];
                        let zt = &mut z[(b * steps + t) * da..(b * steps + t + 1) * da];
                        let mut e = 0.0;
                        for a in 0..da {
                            let row = &wa[a * d..(a + 1) * d];
                            let u = ba[a] + row.iter().zip(ht).map(|(x, y)| x * y).sum::<f64>();
                            zt[a] = u.tanh();
                            e += w[a] * zt[a];
                        }
                        *score = e;
                    }
                    softmax_in_place(scores);
                }
            }
        }
        let mut out = vec![0.0; batch * d];
        for b in 0..batch {
            let ob = &mut out[b * d..(b + 1) * d];
            for t in 0..steps {
                let a = alpha[b * steps + t];
                let ht = &h.data()[(b * steps + t) * d..(b * steps + t + 1) * d];
                for (o, x) in ob.iter_mut().zip(ht) {
                    *o += a * x;
                }
            }
        }
        Ok((Tensor::new(vec![batch, d], out)?, alpha, z))
    }

    /// Pooled context vectors and the attention weights `[B, T]`.
    pub fn infer(&self, store: &ParamStore, h: &Tensor) -> Result<(Tensor, Vec<f64>)> {
        let (v, alpha, _) = self.compute(store, h)?;
        Ok((v, alpha))
    }

    pub fn forward(&mut self, store: &ParamStore, h: &Tensor) -> Result<Tensor> {
        let (v, alpha, z) = self.compute(store, h)?;
        self.cache = Some(PoolCache {
            h: h.clone(),
            z,
            alpha,
        });
        Ok(v)
    }

    pub fn backward(&mut self, store: &mut ParamStore, grad: &Tensor) -> Result<Tensor> {
        let PoolCache { h, z, alpha } = self
            .cache
            .take()
            .ok_or_else(|| Error::State("pooling backward without forward".into()))?;
        let (batch, steps) = self.dims(&h)?;
        let d = self.hidden;
        let da = self.attention;
        if grad.len() != batch * d {
            return Err(Error::shape(format!(
                "pooling gradient has {} values, expected {}",
                grad.len(),
                batch * d
            )));
        }
        let mut dh = vec![0.0; h.len()];
        let (mut dwa, mut dba, mut dw) = (vec![0.0; da * d], vec![0.0; da], vec![0.0; da]);
        let params = match self.kind {
            PoolingKind::Attentive => Some((
                store.value(self.params[0]).data().to_vec(),
                store.value(self.params[2]).data().to_vec(),
            )),
            PoolingKind::Mean => None,
        };
        for b in 0..batch {
            let g = &grad.data()[b * d..(b + 1) * d];
            let al = &alpha[b * steps..(b + 1) * steps];
            // direct path through v = Σ α_t h_t
            for t in 0..steps {
                let dht = &mut dh[(b * steps + t) * d..(b * steps + t + 1) * d];
                for (x, gv) in dht.iter_mut().zip(g) {
                    *x += al[t] * gv;
                }
            }
            let Some((wa, w)) = &params else { continue };
            let dalpha: Vec<f64> = (0..steps)
                .map(|t| {
                    let ht = &h.data()[(b * steps + t) * d..(b * steps + t + 1) * d];
                    ht.iter().zip(g).map(|(x, y)| x * y).sum()
                })
                .collect();
            let mean_dalpha: f64 = al.iter().zip(&dalpha).map(|(a, da_)| a * da_).sum();
            for t in 0..steps {
                let de = al[t] * (dalpha[t] - mean_dalpha);
                let zt = &z[(b * steps + t) * da..(b * steps + t + 1) * da];
                let ht = &h.data()[(b * steps + t) * d..(b * steps + t + 1) * d];
                for a in 0..da {
                    dw[a] += de * zt[a];
                    let du = de * w[a] * (1.0 - zt[a] * zt[a]);
                    if du == 0.0 {
                        continue;
                    }
                    dba[a] += du;
                    let row = &wa[a * d..(a + 1) * d];
                    let drow = &mut dwa[a * d..(a + 1) * d];
                    let dht = &mut dh[(b * steps + t) * d..(b * steps + t + 1) * d];
                    for j in 0..d {
                        drow[j] += du * ht[j];
                        dht[j] += du * row[j];
                    }
                }
            }
        }
        if self.kind == PoolingKind::Attentive {
            for (id, delta) in self.params.iter().zip([&dwa, &dba, &dw]) {
                for (g, v) in store.grad_mut(*id).data_mut().iter_mut().zip(delta.iter()) {
                    *g += v;
                }
            }
        }
        Tensor::new(h.shape().to_vec(), dh)
    }
}

/// Single-sequence attentive pooling with explicit parameters, `h` given as
/// `T` rows of width `d`. Returns `(v_ctx, α)`.
pub fn attentive_pool(h: &[Vec<f64>], w_a: &[Vec<f64>], b_a: &[f64], w: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if h.is_empty() {
        return Err(Error::param("attentive pooling needs at least one state"));
    }
    let d = h[0].len();
    let da = w_a.len();
    if h.iter().any(|r| r.len() != d) || w_a.iter().any(|r| r.len() != d) || b_a.len() != da || w.len() != da {
        return Err(Error::shape("inconsistent attentive pooling dimensions"));
    }
    let mut store = ParamStore::new();
    let mut pool = TemporalPooling::new(PoolingKind::Attentive, d, da, "pool", &mut store, RngSeed(0));
    *store.value_mut(pool.params[0]) = Tensor::new(vec![da, d], w_a.concat())?;
    *store.value_mut(pool.params[1]) = Tensor::new(vec![da], b_a.to_vec())?;
    *store.value_mut(pool.params[2]) = Tensor::new(vec![da], w.to_vec())?;
    let states = Tensor::new(vec![1, h.len(), d], h.concat())?;
    let (v, alpha) = pool.infer(&store, &states)?;
    pool.cache = None;
    Ok((v.into_data(), alpha))
}
