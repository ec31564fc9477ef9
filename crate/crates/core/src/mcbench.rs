//! Euler Monte Carlo for jump-diffusions.
//!
//! Coefficients are evaluated at the positive part of the model's
//! nonnegative coordinates (full truncation). Jumps arrive per step with
//! probability `lambda dt`. Sample `i` (a path, or an antithetic pair) draws
//! from its own ChaCha stream `(seed, i)`, and samples are reduced in fixed
//! blocks in index order, so results do not depend on the thread count.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::McError;
use crate::model::JumpDiffusionModel;
use crate::quadrature::sample_jump;
use crate::symexpr::{Expr, Tape};

const BLOCK: usize = 512;
const MAX_STEPS: u64 = 100_000_000;
const MAX_WORK: u64 = 1 << 44;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MCConfig {
    pub paths: usize,
    pub steps_per_year: usize,
    pub seed: u64,
    pub antithetic: bool,
}

impl Default for MCConfig {
    fn default() -> Self {
        Self {
            paths: 200_000,
            steps_per_year: 1200,
            seed: 0,
            antithetic: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MCEstimate {
    pub mean: f64,
    /// Sample standard deviation over independent samples (antithetic pairs
    /// count once) divided by the square root of their number.
    pub std_error: f64,
    pub paths_used: usize,
    pub steps: usize,
    pub seed: u64,
    #[serde(skip)]
    pub elapsed: Duration,
}

/// Running mean and sum of squared deviations.
#[derive(Debug, Clone, Copy, Default)]
struct Welford {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, x: f64) {
        self.n += 1.0;
        let d = x - self.mean;
        self.mean += d / self.n;
        self.m2 += d * (x - self.mean);
    }

    fn merge(&mut self, o: &Welford) {
        if o.n == 0.0 {
            return;
        }
        if self.n == 0.0 {
            *self = *o;
            return;
        }
        let n = self.n + o.n;
        let d = o.mean - self.mean;
        self.mean += d * o.n / n;
        self.m2 += o.m2 + d * d * self.n * o.n / n;
        self.n = n;
    }

    fn std_error(&self) -> f64 {
        if self.n < 2.0 {
            return 0.0;
        }
        (self.m2 / (self.n - 1.0) / self.n).sqrt()
    }
}

/// Terminal state of one path.
pub struct PathEnd<'a> {
    pub x: &'a [f64],
    pub jumps: u32,
    /// `exp(-int r dt)` along the path.
    pub discount: f64,
}

struct Engine<'m> {
    model: &'m JumpDiffusionModel,
    tape: Tape,
    dim: usize,
    steps: usize,
    dt: f64,
    has_discount: bool,
}

impl<'m> Engine<'m> {
    fn new(model: &'m JumpDiffusionModel, t: f64, x0: &[f64], cfg: &MCConfig) -> Result<Self, McError> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(McError::InvalidConfig(format!("horizon must be positive, got {t}")));
        }
        if cfg.paths == 0 || cfg.steps_per_year == 0 {
            return Err(McError::InvalidConfig("paths and steps_per_year must be at least 1".into()));
        }
        let steps = (t * cfg.steps_per_year as f64).ceil();
        if !(steps <= MAX_STEPS as f64) {
            return Err(McError::StepOverflow(format!("{steps} steps")));
        }
        let steps = (steps as usize).max(1);
        if (steps as u64).checked_mul(cfg.paths as u64).map_or(true, |w| w > MAX_WORK) {
            return Err(McError::StepOverflow(format!("{} paths x {steps} steps", cfg.paths)));
        }
        let d = model.dim;
        if x0.len() != d {
            return Err(McError::InvalidStart(format!("state has length {}, model has dimension {d}", x0.len())));
        }
        if let Some(i) = x0.iter().position(|v| !v.is_finite()) {
            return Err(McError::InvalidStart(format!("x{i} is not finite")));
        }
        if let Some(&i) = model.nonnegative.iter().find(|&&i| x0[i] < 0.0) {
            return Err(McError::InvalidStart(format!("x{i} = {} must be nonnegative", x0[i])));
        }
        let mut outs: Vec<Expr> = model.drift.clone();
        for i in 0..d {
            for j in i..d {
                outs.push(model.diffusion_sq[i][j].clone());
            }
        }
        outs.push(model.discount.clone());
        if let Some(l) = model.intensity() {
            outs.push(l.clone());
        }
        let tape = Tape::compile(&outs);
        let mut buf = Vec::new();
        tape.run(x0, 0.0, &[], &mut buf)
            .map_err(|e| McError::InvalidStart(format!("coefficients undefined at start: {e}")))?;
        Ok(Self {
            model,
            tape,
            dim: d,
            steps,
            dt: t / steps as f64,
            has_discount: !model.discount.is_zero(),
        })
    }

    /// Runs one path (or an antithetic pair) and feeds terminal states to
    /// `stat`, averaging its outputs over the legs.
    fn sample<F>(&self, idx: u64, cfg: &MCConfig, n_out: usize, stat: &F, out: &mut [f64], ws: &mut Workspace) -> Result<(), McError>
    where
        F: Fn(&PathEnd, &mut [f64]) + Sync,
    {
        let d = self.dim;
        let legs = if cfg.antithetic { 2 } else { 1 };
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(idx);
        for l in 0..legs {
            ws.x[l].copy_from_slice(ws.x0.as_slice());
            ws.jumps[l] = 0;
            ws.int_r[l] = 0.0;
        }
        let sqdt = self.dt.sqrt();
        let n_diff = d * (d + 1) / 2;
        let jumps = self.model.jumps.as_ref();
        for _ in 0..self.steps {
            for z in ws.z.iter_mut() {
                *z = StandardNormal.sample(&mut rng);
            }
            for l in 0..legs {
                let sign = if l == 0 { 1.0 } else { -1.0 };
                ws.xc.copy_from_slice(&ws.x[l]);
                for &i in &self.model.nonnegative {
                    ws.xc[i] = ws.xc[i].max(0.0);
                }
                self.tape.run(&ws.xc, 0.0, &[], &mut ws.buf)?;
                // Lower Cholesky factor of sigma^2, clipping negative pivots.
                let mut k = 0;
                for i in 0..d {
                    for j in i..d {
                        ws.s2[i * d + j] = self.tape.output(&ws.buf, d + k);
                        ws.s2[j * d + i] = ws.s2[i * d + j];
                        k += 1;
                    }
                }
                for j in 0..d {
                    let mut s = ws.s2[j * d + j];
                    for p in 0..j {
                        s -= ws.chol[j * d + p] * ws.chol[j * d + p];
                    }
                    let piv = if s > 0.0 { s.sqrt() } else { 0.0 };
                    ws.chol[j * d + j] = piv;
                    for i in j + 1..d {
                        let mut s = ws.s2[i * d + j];
                        for p in 0..j {
                            s -= ws.chol[i * d + p] * ws.chol[j * d + p];
                        }
                        ws.chol[i * d + j] = if piv > 0.0 { s / piv } else { 0.0 };
                    }
                }
                if self.has_discount {
                    ws.int_r[l] += self.tape.output(&ws.buf, d + n_diff) * self.dt;
                }
                let x = &mut ws.x[l];
                for i in 0..d {
                    let mut dw = 0.0;
                    for p in 0..=i {
                        dw += ws.chol[i * d + p] * ws.z[p];
                    }
                    x[i] += self.tape.output(&ws.buf, i) * self.dt + sign * sqdt * dw;
                }
                if let Some(j) = jumps {
                    let lam = self.tape.output(&ws.buf, d + n_diff + 1).max(0.0);
                    let u: f64 = rng.gen();
                    if u < lam * self.dt {
                        sample_jump(&j.distribution, &mut rng, &mut ws.jump);
                        for i in 0..d {
                            x[i] += ws.jump[i];
                        }
                        ws.jumps[l] += 1;
                    }
                }
                if x.iter().any(|v| !v.is_finite()) {
                    return Err(McError::InvalidConfig(format!("path {idx} left the finite range")));
                }
            }
        }
        out[..n_out].iter_mut().for_each(|o| *o = 0.0);
        for l in 0..legs {
            let end = PathEnd {
                x: &ws.x[l],
                jumps: ws.jumps[l],
                discount: (-ws.int_r[l]).exp(),
            };
            stat(&end, &mut ws.tmp);
            for k in 0..n_out {
                out[k] += ws.tmp[k] / legs as f64;
            }
        }
        Ok(())
    }
}

struct Workspace {
    x0: Vec<f64>,
    x: [Vec<f64>; 2],
    xc: Vec<f64>,
    z: Vec<f64>,
    s2: Vec<f64>,
    chol: Vec<f64>,
    jump: Vec<f64>,
    jumps: [u32; 2],
    int_r: [f64; 2],
    buf: Vec<f64>,
    tmp: Vec<f64>,
}

impl Workspace {
    fn new(x0: &[f64], n_out: usize) -> Self {
        let d = x0.len();
        Self {
            x0: x0.to_vec(),
            x: [x0.to_vec(), x0.to_vec()],
            xc: vec![0.0; d],
            z: vec![0.0; d],
            s2: vec![0.0; d * d],
            chol: vec![0.0; d * d],
            jump: vec![0.0; d],
            jumps: [0; 2],
            int_r: [0.0; 2],
            buf: Vec::new(),
            tmp: vec![0.0; n_out],
        }
    }
}

/// Simulates `cfg.paths` paths to `t` and returns the mean and standard
/// error of each of the `n_out` statistics computed by `stat`.
pub fn simulate_statistics<F>(
    model: &JumpDiffusionModel,
    t: f64,
    x: &[f64],
    cfg: &MCConfig,
    n_out: usize,
    stat: F,
) -> Result<Vec<MCEstimate>, McError>
where
    F: Fn(&PathEnd, &mut [f64]) + Sync,
{
    let start = Instant::now();
    let eng = Engine::new(model, t, x, cfg)?;
    let samples = if cfg.antithetic { cfg.paths.div_ceil(2) } else { cfg.paths };
    let blocks = samples.div_ceil(BLOCK);
    let parts: Vec<Result<Vec<Welford>, McError>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut acc = vec![Welford::default(); n_out];
            let mut ws = Workspace::new(x, n_out);
            let mut out = vec![0.0; n_out];
            for i in b * BLOCK..((b + 1) * BLOCK).min(samples) {
                eng.sample(i as u64, cfg, n_out, &stat, &mut out, &mut ws)?;
                for (a, &v) in acc.iter_mut().zip(&out) {
                    a.push(v);
                }
            }
            Ok(acc)
        })
        .collect();
    let mut total = vec![Welford::default(); n_out];
    for p in parts {
        for (t, w) in total.iter_mut().zip(&p?) {
            t.merge(w);
        }
    }
    let paths_used = if cfg.antithetic { 2 * samples } else { samples };
    let elapsed = start.elapsed();
    Ok(total
        .iter()
        .map(|w| MCEstimate {
            mean: w.mean,
            std_error: w.std_error(),
            paths_used,
            steps: eng.steps,
            seed: cfg.seed,
            elapsed,
        })
        .collect())
}

/// Discounted `E[f(x_t)]` from `x`.
pub fn simulate_moment(
    model: &JumpDiffusionModel,
    f: &Expr,
    t: f64,
    x: &[f64],
    cfg: &MCConfig,
) -> Result<MCEstimate, McError> {
    let ft = Tape::compile(std::slice::from_ref(f));
    if ft.state_extent() > model.dim {
        return Err(McError::InvalidConfig("payoff references states beyond the model".into()));
    }
    let failed = std::sync::atomic::AtomicBool::new(false);
    let est = simulate_statistics(model, t, x, cfg, 1, |end, out| {
        let mut buf = Vec::new();
        out[0] = match ft.run(end.x, t, &[], &mut buf) {
            Ok(()) => end.discount * ft.output(&buf, 0),
            Err(_) => {
                failed.store(true, std::sync::atomic::Ordering::Relaxed);
                f64::NAN
            }
        };
    })?;
    if failed.into_inner() {
        return Err(McError::InvalidConfig("payoff undefined at a terminal state".into()));
    }
    Ok(est.into_iter().next().unwrap())
}

/// Discounted `E[f(x_t)]` for starting points `x + o e_coord`, `o` in
/// `offsets`. When the model is translation invariant in `coord` the paths
/// are simulated once and shifted; otherwise every start reuses the same
/// seed (common random numbers).
pub fn simulate_moment_grid(
    model: &JumpDiffusionModel,
    f: &Expr,
    t: f64,
    x: &[f64],
    coord: usize,
    offsets: &[f64],
    cfg: &MCConfig,
) -> Result<Vec<MCEstimate>, McError> {
    if coord >= model.dim {
        return Err(McError::InvalidConfig(format!("coordinate {coord} out of range")));
    }
    if !model.is_translation_invariant_in(coord) {
        return offsets
            .iter()
            .map(|o| {
                let mut xs = x.to_vec();
                xs[coord] += o;
                simulate_moment(model, f, t, &xs, cfg)
            })
            .collect();
    }
    let ft = Tape::compile(std::slice::from_ref(f));
    let failed = std::sync::atomic::AtomicBool::new(false);
    let est = simulate_statistics(model, t, x, cfg, offsets.len(), |end, out| {
        let mut y = end.x.to_vec();
        let mut buf = Vec::new();
        for (k, o) in offsets.iter().enumerate() {
            y[coord] = end.x[coord] + o;
            out[k] = match ft.run(&y, t, &[], &mut buf) {
                Ok(()) => end.discount * ft.output(&buf, 0),
                Err(_) => {
                    failed.store(true, std::sync::atomic::Ordering::Relaxed);
                    f64::NAN
                }
            };
        }
    })?;
    if failed.into_inner() {
        return Err(McError::InvalidConfig("payoff undefined at a terminal state".into()));
    }
    Ok(est)
}

/// Mean number of jumps on `[0, t]`.
pub fn simulate_jump_count(model: &JumpDiffusionModel, t: f64, x: &[f64], cfg: &MCConfig) -> Result<MCEstimate, McError> {
    let est = simulate_statistics(model, t, x, cfg, 1, |end, out| out[0] = end.jumps as f64)?;
    Ok(est.into_iter().next().unwrap())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityHistogram {
    pub edges: Vec<f64>,
    pub density: Vec<f64>,
    pub std_error: Vec<f64>,
    /// Fraction of paths ending inside the grid.
    pub mass_inside: f64,
    pub paths_used: usize,
}

impl DensityHistogram {
    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }
}

/// Histogram estimate of the density of `x_t[coord]` on bins `edges`.
pub fn simulate_density_cell(
    model: &JumpDiffusionModel,
    t: f64,
    x: &[f64],
    coord: usize,
    edges: &[f64],
    cfg: &MCConfig,
) -> Result<DensityHistogram, McError> {
    if edges.len() < 2 || edges.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(McError::InvalidConfig("bin edges must be strictly increasing".into()));
    }
    if coord >= model.dim {
        return Err(McError::InvalidConfig(format!("coordinate {coord} out of range")));
    }
    let nb = edges.len() - 1;
    let est = simulate_statistics(model, t, x, cfg, nb, |end, out| {
        out.iter_mut().for_each(|o| *o = 0.0);
        let y = end.x[coord];
        if y >= edges[0] && y < edges[nb] {
            let k = edges.partition_point(|&e| e <= y) - 1;
            out[k] = 1.0;
        }
    })?;
    let width: Vec<f64> = edges.windows(2).map(|w| w[1] - w[0]).collect();
    Ok(DensityHistogram {
        edges: edges.to_vec(),
        density: est.iter().zip(&width).map(|(e, w)| e.mean / w).collect(),
        std_error: est.iter().zip(&width).map(|(e, w)| e.std_error / w).collect(),
        mass_inside: est.iter().map(|e| e.mean).sum(),
        paths_used: est.first().map_or(0, |e| e.paths_used),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn welford_merge_matches_single_pass() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 37) % 101) as f64 * 0.1).collect();
        let mut one = Welford::default();
        xs.iter().for_each(|&x| one.push(x));
        let mut a = Welford::default();
        let mut b = Welford::default();
        xs[..300].iter().for_each(|&x| a.push(x));
        xs[300..].iter().for_each(|&x| b.push(x));
        a.merge(&b);
        assert!((a.mean - one.mean).abs() < 1e-12);
        assert!((a.m2 - one.m2).abs() < 1e-9 * one.m2);
    }

    #[test]
    fn constant_samples_have_zero_error() {
        let mut w = Welford::default();
        (0..100).for_each(|_| w.push(0.3));
        assert_eq!(w.std_error(), 0.0);
    }
}
