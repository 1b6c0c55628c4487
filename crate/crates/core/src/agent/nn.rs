//! The policy/value network and its hand-rolled differentiation.
//!
//! Layout per step, for observation bits `b` (plus step fraction), legal
//! afterstate fingerprints `B_a`, and previous recurrent state (h', c'):
//!
//! ```text
//! x = W_e [b ; frac] + b_e
//! (i f g o) = gates(W_x x + W_h h' + b_r)        LSTM, gate order i,f,g,o
//! c = f*c' + i*g ;  h = o*tanh(c)
//! v = w_v . h + b_v
//! logit_a = w_2 . tanh(W_1 [h ; B_a] + b_1) + b_2
//! pi = softmax over the legal set
//! ```
//!
//! Observations and afterstates are sparse bit vectors; all products
//! against them walk the set bits only. The scoring head must mix `h`
//! and `B_a` nonlinearly: a purely linear head would add the same
//! h-dependent constant to every logit and the softmax would ignore the
//! recurrent state entirely.

use crate::bits::BitVec;
use crate::env::Observation;
use ndarray::{s, Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::AgentError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Shapes {
    /// Fingerprint width shared by observations and afterstates.
    pub n_bits: usize,
    /// Embedded input width.
    pub d_in: usize,
    /// Recurrent width.
    pub h: usize,
    /// Scoring-head hidden width.
    pub head_hidden: usize,
}

impl Shapes {
    /// Production sizes: 128 recurrent units over 1000-bit fingerprints.
    pub fn for_bits(n_bits: usize) -> Shapes {
        Shapes {
            n_bits,
            d_in: 64,
            h: 128,
            head_hidden: 64,
        }
    }

    /// Observation vector length: fingerprint plus the step fraction.
    pub fn obs_len(&self) -> usize {
        self.n_bits + 1
    }

    /// Scoring-head input length: recurrent output plus one afterstate.
    pub fn score_in(&self) -> usize {
        self.h + self.n_bits
    }

    pub fn flat_len(&self) -> usize {
        let Shapes {
            n_bits: _,
            d_in,
            h,
            head_hidden,
        } = *self;
        d_in * self.obs_len()
            + d_in
            + 4 * h * d_in
            + 4 * h * h
            + 4 * h
            + head_hidden * self.score_in()
            + head_hidden
            + head_hidden
            + 1
            + h
            + 1
    }
}

#[derive(Clone, Debug)]
pub struct PolicyParams {
    pub shapes: Shapes,
    pub w_embed: Array2<f64>,
    pub b_embed: Array1<f64>,
    /// Input, recurrent, and bias weights of the four stacked gates.
    pub w_x: Array2<f64>,
    pub w_h: Array2<f64>,
    pub b_rec: Array1<f64>,
    pub w_s1: Array2<f64>,
    pub b_s1: Array1<f64>,
    pub w_s2: Array1<f64>,
    pub b_s2: f64,
    pub w_v: Array1<f64>,
    pub b_v: f64,
}

impl PolicyParams {
    /// Seeded initialization: uniform Xavier for the interior, forget-gate
    /// bias +1, and zeroed output layers so the starting policy is exactly
    /// uniform and the starting value exactly zero.
    pub fn init(shapes: Shapes, seed: u64) -> PolicyParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut mat = |rows: usize, cols: usize| {
            let scale = (6.0 / (rows + cols) as f64).sqrt();
            Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-scale..scale))
        };
        let h = shapes.h;
        let mut b_rec = Array1::zeros(4 * h);
        b_rec.slice_mut(s![h..2 * h]).fill(1.0);
        PolicyParams {
            shapes,
            w_embed: mat(shapes.d_in, shapes.obs_len()),
            b_embed: Array1::zeros(shapes.d_in),
            w_x: mat(4 * h, shapes.d_in),
            w_h: mat(4 * h, h),
            b_rec,
            w_s1: mat(shapes.head_hidden, shapes.score_in()),
            b_s1: Array1::zeros(shapes.head_hidden),
            w_s2: Array1::zeros(shapes.head_hidden),
            b_s2: 0.0,
            w_v: Array1::zeros(h),
            b_v: 0.0,
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.shapes.flat_len());
        out.extend(self.w_embed.iter());
        out.extend(self.b_embed.iter());
        out.extend(self.w_x.iter());
        out.extend(self.w_h.iter());
        out.extend(self.b_rec.iter());
        out.extend(self.w_s1.iter());
        out.extend(self.b_s1.iter());
        out.extend(self.w_s2.iter());
        out.push(self.b_s2);
        out.extend(self.w_v.iter());
        out.push(self.b_v);
        out
    }

    pub fn from_flat(shapes: Shapes, flat: &[f64]) -> Result<PolicyParams, AgentError> {
        if flat.len() != shapes.flat_len() {
            return Err(AgentError::InvalidConfig(format!(
                "expected {} parameters, got {}",
                shapes.flat_len(),
                flat.len()
            )));
        }
        let mut pos = 0usize;
        let mut take = |n: usize| {
            let chunk = &flat[pos..pos + n];
            pos += n;
            chunk.to_vec()
        };
        let h = shapes.h;
        let m2 = |rows, cols, data: Vec<f64>| Array2::from_shape_vec((rows, cols), data).unwrap();
        let w_embed = m2(shapes.d_in, shapes.obs_len(), take(shapes.d_in * shapes.obs_len()));
        let b_embed = Array1::from_vec(take(shapes.d_in));
        let w_x = m2(4 * h, shapes.d_in, take(4 * h * shapes.d_in));
        let w_h = m2(4 * h, h, take(4 * h * h));
        let b_rec = Array1::from_vec(take(4 * h));
        let w_s1 = m2(
            shapes.head_hidden,
            shapes.score_in(),
            take(shapes.head_hidden * shapes.score_in()),
        );
        let b_s1 = Array1::from_vec(take(shapes.head_hidden));
        let w_s2 = Array1::from_vec(take(shapes.head_hidden));
        let b_s2 = take(1)[0];
        let w_v = Array1::from_vec(take(h));
        let b_v = take(1)[0];
        Ok(PolicyParams {
            shapes,
            w_embed,
            b_embed,
            w_x,
            w_h,
            b_rec,
            w_s1,
            b_s1,
            w_s2,
            b_s2,
            w_v,
            b_v,
        })
    }

    pub fn is_finite(&self) -> bool {
        self.to_flat().iter().all(|v| v.is_finite())
    }
}

/// LSTM carry; reset to zeros at every episode start.
#[derive(Clone, Debug, PartialEq)]
pub struct RecurrentState {
    pub h: Array1<f64>,
    pub c: Array1<f64>,
}

impl RecurrentState {
    pub fn zeros(h: usize) -> RecurrentState {
        RecurrentState {
            h: Array1::zeros(h),
            c: Array1::zeros(h),
        }
    }
}

#[derive(Clone, Debug)]
pub struct StepOutput {
    pub probs: Vec<f64>,
    pub log_probs: Vec<f64>,
    pub value: f64,
    pub state: RecurrentState,
}

/// One recurrent step: advance the LSTM on the observation, score every
/// legal afterstate, and return the softmax distribution with the value
/// estimate. Deterministic in its inputs.
pub fn policy_step(
    params: &PolicyParams,
    state: &RecurrentState,
    observation: &Observation,
    afterstates: &[BitVec],
) -> Result<StepOutput, AgentError> {
    let cache = forward_step(params, &state.h, &state.c, observation, afterstates)?;
    Ok(StepOutput {
        probs: cache.probs,
        log_probs: cache.log_probs,
        value: cache.value,
        state: RecurrentState {
            h: cache.h,
            c: cache.c,
        },
    })
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Everything backward needs, kept per step.
pub(crate) struct StepCache {
    pub obs_ones: Vec<usize>,
    pub step_frac: f64,
    pub h_prev: Array1<f64>,
    pub c_prev: Array1<f64>,
    pub x: Array1<f64>,
    pub gi: Array1<f64>,
    pub gf: Array1<f64>,
    pub gg: Array1<f64>,
    pub go: Array1<f64>,
    pub c: Array1<f64>,
    pub tc: Array1<f64>,
    pub h: Array1<f64>,
    pub act_ones: Vec<Vec<usize>>,
    pub u: Vec<Array1<f64>>,
    pub probs: Vec<f64>,
    pub log_probs: Vec<f64>,
    pub value: f64,
}

pub(crate) fn forward_step(
    params: &PolicyParams,
    h_prev: &Array1<f64>,
    c_prev: &Array1<f64>,
    observation: &Observation,
    afterstates: &[BitVec],
) -> Result<StepCache, AgentError> {
    if afterstates.is_empty() {
        return Err(AgentError::EmptyActionSet);
    }
    let sh = params.shapes;
    let h = sh.h;

    let obs_ones: Vec<usize> = observation.bits.iter_ones().collect();
    let mut x = params.b_embed.clone();
    for &j in &obs_ones {
        x += &params.w_embed.column(j);
    }
    x.scaled_add(observation.step_frac, &params.w_embed.column(sh.n_bits));

    let mut pre = params.w_x.dot(&x) + params.w_h.dot(h_prev) + &params.b_rec;
    let gg = pre.slice(s![2 * h..3 * h]).mapv(f64::tanh);
    pre.mapv_inplace(sigmoid);
    let gi = pre.slice(s![0..h]).to_owned();
    let gf = pre.slice(s![h..2 * h]).to_owned();
    let go = pre.slice(s![3 * h..4 * h]).to_owned();

    let c = &gf * c_prev + &gi * &gg;
    let tc = c.mapv(f64::tanh);
    let h_new = &go * &tc;

    let value = params.w_v.dot(&h_new) + params.b_v;

    // The h-dependent half of the scoring preactivation is shared by all
    // actions at this step.
    let s1_h = params.w_s1.slice(s![.., 0..h]).dot(&h_new) + &params.b_s1;
    let mut act_ones = Vec::with_capacity(afterstates.len());
    let mut u = Vec::with_capacity(afterstates.len());
    let mut logits = Vec::with_capacity(afterstates.len());
    for bits in afterstates {
        let ones: Vec<usize> = bits.iter_ones().collect();
        let mut pre_u = s1_h.clone();
        for &j in &ones {
            pre_u += &params.w_s1.column(h + j);
        }
        let u_a = pre_u.mapv(f64::tanh);
        logits.push(params.w_s2.dot(&u_a) + params.b_s2);
        act_ones.push(ones);
        u.push(u_a);
    }

    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|l| (l - max).exp()).sum();
    let log_sum = max + sum.ln();
    let log_probs: Vec<f64> = logits.iter().map(|l| l - log_sum).collect();
    let probs: Vec<f64> = log_probs.iter().map(|lp| lp.exp()).collect();

    Ok(StepCache {
        obs_ones,
        step_frac: observation.step_frac,
        h_prev: h_prev.clone(),
        c_prev: c_prev.clone(),
        x,
        gi,
        gf,
        gg,
        go,
        c,
        tc,
        h: h_new,
        act_ones,
        u,
        probs,
        log_probs,
        value,
    })
}

/// Gradient accumulator mirroring [`PolicyParams`].
#[derive(Clone, Debug)]
pub struct Gradients {
    pub shapes: Shapes,
    pub w_embed: Array2<f64>,
    pub b_embed: Array1<f64>,
    pub w_x: Array2<f64>,
    pub w_h: Array2<f64>,
    pub b_rec: Array1<f64>,
    pub w_s1: Array2<f64>,
    pub b_s1: Array1<f64>,
    pub w_s2: Array1<f64>,
    pub b_s2: f64,
    pub w_v: Array1<f64>,
    pub b_v: f64,
}

impl Gradients {
    pub fn zeros(shapes: Shapes) -> Gradients {
        let h = shapes.h;
        Gradients {
            shapes,
            w_embed: Array2::zeros((shapes.d_in, shapes.obs_len())),
            b_embed: Array1::zeros(shapes.d_in),
            w_x: Array2::zeros((4 * h, shapes.d_in)),
            w_h: Array2::zeros((4 * h, h)),
            b_rec: Array1::zeros(4 * h),
            w_s1: Array2::zeros((shapes.head_hidden, shapes.score_in())),
            b_s1: Array1::zeros(shapes.head_hidden),
            w_s2: Array1::zeros(shapes.head_hidden),
            b_s2: 0.0,
            w_v: Array1::zeros(h),
            b_v: 0.0,
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.shapes.flat_len());
        out.extend(self.w_embed.iter());
        out.extend(self.b_embed.iter());
        out.extend(self.w_x.iter());
        out.extend(self.w_h.iter());
        out.extend(self.b_rec.iter());
        out.extend(self.w_s1.iter());
        out.extend(self.b_s1.iter());
        out.extend(self.w_s2.iter());
        out.push(self.b_s2);
        out.extend(self.w_v.iter());
        out.push(self.b_v);
        out
    }
}

/// Backpropagation through time over one episode's caches. `d_logits[t]`
/// and `d_values[t]` are the loss gradients at each step's outputs;
/// parameter gradients are accumulated into `grads`.
pub(crate) fn backward_episode(
    params: &PolicyParams,
    caches: &[StepCache],
    d_logits: &[Vec<f64>],
    d_values: &[f64],
    grads: &mut Gradients,
) {
    let sh = params.shapes;
    let h = sh.h;
    let mut dh_next: Array1<f64> = Array1::zeros(h);
    let mut dc_next: Array1<f64> = Array1::zeros(h);

    for t in (0..caches.len()).rev() {
        let cache = &caches[t];
        let mut dh = dh_next.clone();

        let dv = d_values[t];
        if dv != 0.0 {
            grads.w_v.scaled_add(dv, &cache.h);
            grads.b_v += dv;
            dh.scaled_add(dv, &params.w_v);
        }

        let w_s1_h = params.w_s1.slice(s![.., 0..h]);
        for (a, &dl) in d_logits[t].iter().enumerate() {
            if dl == 0.0 {
                continue;
            }
            let u = &cache.u[a];
            grads.w_s2.scaled_add(dl, u);
            grads.b_s2 += dl;
            // d pre_u = (dl * w_2) * (1 - u^2)
            let dpre_u: Array1<f64> =
                params.w_s2.iter().zip(u.iter()).map(|(&w, &uu)| dl * w * (1.0 - uu * uu)).collect();
            grads.b_s1 += &dpre_u;
            for (r, &dp) in dpre_u.iter().enumerate() {
                if dp != 0.0 {
                    grads.w_s1.slice_mut(s![r, 0..h]).scaled_add(dp, &cache.h);
                }
            }
            for &j in &cache.act_ones[a] {
                let mut col = grads.w_s1.column_mut(h + j);
                col += &dpre_u;
            }
            dh += &w_s1_h.t().dot(&dpre_u);
        }

        // LSTM cell backward.
        let d_go = &dh * &cache.tc;
        let dc = &dc_next + &(&dh * &cache.go * cache.tc.mapv(|v| 1.0 - v * v));
        let d_gi = &dc * &cache.gg;
        let d_gg = &dc * &cache.gi;
        let d_gf = &dc * &cache.c_prev;

        let mut dpre: Array1<f64> = Array1::zeros(4 * h);
        {
            let mut sl = dpre.slice_mut(s![0..h]);
            sl.assign(&(&d_gi * &cache.gi * cache.gi.mapv(|v| 1.0 - v)));
        }
        {
            let mut sl = dpre.slice_mut(s![h..2 * h]);
            sl.assign(&(&d_gf * &cache.gf * cache.gf.mapv(|v| 1.0 - v)));
        }
        {
            let mut sl = dpre.slice_mut(s![2 * h..3 * h]);
            sl.assign(&(&d_gg * cache.gg.mapv(|v| 1.0 - v * v)));
        }
        {
            let mut sl = dpre.slice_mut(s![3 * h..4 * h]);
            sl.assign(&(&d_go * &cache.go * cache.go.mapv(|v| 1.0 - v)));
        }

        grads.b_rec += &dpre;
        for (r, &dp) in dpre.iter().enumerate() {
            if dp != 0.0 {
                grads.w_x.row_mut(r).scaled_add(dp, &cache.x);
                grads.w_h.row_mut(r).scaled_add(dp, &cache.h_prev);
            }
        }

        let dx = params.w_x.t().dot(&dpre);
        grads.b_embed += &dx;
        for &j in &cache.obs_ones {
            let mut col = grads.w_embed.column_mut(j);
            col += &dx;
        }
        {
            let mut col = grads.w_embed.column_mut(sh.n_bits);
            col.scaled_add(cache.step_frac, &dx);
        }

        dh_next = params.w_h.t().dot(&dpre);
        dc_next = &dc * &cache.gf;
    }
}
