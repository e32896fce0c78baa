//! Ancestral stochastic integrators (Euler-ancestral with churn and
//! DPM2-ancestral) that advance one or many coupled trajectories down a
//! noise ladder.
//!
//! A step at noise level `σ` works in the denoiser-slope form
//! `d = (x − x̂)/σ = −σ · score`. Churn first inflates the state to
//! `σ̂ = σ(1 + γ)`, with `γ = min(s_churn / n_steps, √2 − 1)`; the transition
//! to the next level is then split into a deterministic descent to `σ_down`
//! and fresh noise of scale `σ_up`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::audio::AudioTensor;
use crate::error::{Error, Result};
use crate::rng::{standard_normals, stream, INIT_STEP};
use crate::schedule::NoiseSchedule;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    EulerAncestral,
    Adpm2,
}

impl std::str::FromStr for SamplerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euler_ancestral" | "euler-ancestral" | "aeuler" => Ok(Self::EulerAncestral),
            "adpm2" => Ok(Self::Adpm2),
            _ => Err(Error::config(format!(
                "unknown sampler `{s}` (expected euler_ancestral or adpm2)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub kind: SamplerKind,
    pub n_steps: usize,
    pub s_churn: f64,
    pub s_noise: f64,
    pub rng_seed: u64,
}

impl IntegratorConfig {
    pub fn new(kind: SamplerKind, n_steps: usize, s_churn: f64, rng_seed: u64) -> Self {
        Self {
            kind,
            n_steps,
            s_churn,
            s_noise: 1.0,
            rng_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_steps == 0 {
            return Err(Error::config("n_steps must be >= 1"));
        }
        if !(self.s_churn >= 0.0) || !self.s_churn.is_finite() {
            return Err(Error::config("s_churn must be finite and >= 0"));
        }
        if !(self.s_noise > 0.0) || !self.s_noise.is_finite() {
            return Err(Error::config("s_noise must be finite and > 0"));
        }
        Ok(())
    }

    /// Per-step churn factor `γ`.
    pub fn churn_gamma(&self) -> f64 {
        (self.s_churn / self.n_steps as f64).min(std::f64::consts::SQRT_2 - 1.0)
    }
}

/// Splits the transition `sigma_from → sigma_to` into a deterministic
/// descent to `sigma_down` plus fresh noise `sigma_up`.
pub fn ancestral_variances(sigma_from: f64, sigma_to: f64) -> Result<(f64, f64)> {
    if !(sigma_from > sigma_to && sigma_to >= 0.0) {
        return Err(Error::Schedule(format!(
            "ancestral step needs sigma_from > sigma_to >= 0, got {sigma_from} -> {sigma_to}"
        )));
    }
    let to2 = sigma_to * sigma_to;
    let from2 = sigma_from * sigma_from;
    let up = sigma_to.min((to2 * (from2 - to2) / from2).sqrt());
    let down = (to2 - up * up).max(0.0).sqrt();
    Ok((down, up))
}

/// Where in a step a score system is being evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalContext {
    pub sigma: f64,
    pub step: usize,
    /// 0 for the first evaluation of a step, 1 for the DPM2 midpoint.
    pub stage: usize,
}

/// Scores for every trajectory of a coupled system, computed from the full
/// (frozen) current state.
pub trait ScoreSystem: Sync {
    fn scores(&self, states: &[AudioTensor], ctx: &EvalContext) -> Result<Vec<AudioTensor>>;
}

impl<F> ScoreSystem for F
where
    F: Fn(&[AudioTensor], &EvalContext) -> Result<Vec<AudioTensor>> + Sync,
{
    fn scores(&self, states: &[AudioTensor], ctx: &EvalContext) -> Result<Vec<AudioTensor>> {
        self(states, ctx)
    }
}

/// Trajectories integrated in lock-step. `ids` key the per-trajectory
/// random streams.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledState {
    pub states: Vec<AudioTensor>,
    pub ids: Vec<u64>,
    pub step_index: usize,
}

impl CoupledState {
    pub fn new(states: Vec<AudioTensor>, ids: Vec<u64>) -> Result<Self> {
        if states.is_empty() || states.len() != ids.len() {
            return Err(Error::config("coupled state needs one id per (non-empty) trajectory"));
        }
        for s in &states[1..] {
            states[0].ensure_same_shape(s)?;
        }
        Ok(Self {
            states,
            ids,
            step_index: 0,
        })
    }

    /// Every trajectory drawn i.i.d. from `N(0, sigma_max²)`, each from its
    /// own stream.
    pub fn from_noise(template: &AudioTensor, ids: Vec<u64>, seed: u64, sigma_max: f64) -> Result<Self> {
        let states = ids
            .iter()
            .map(|&id| {
                let eps = standard_normals(&mut stream(seed, id, INIT_STEP), template.samples().len());
                template.with_samples(eps.into_iter().map(|e| sigma_max * e).collect())
            })
            .collect();
        Self::new(states, ids)
    }
}

fn check_scores(states: &[AudioTensor], scores: &[AudioTensor]) -> Result<()> {
    if scores.len() != states.len() {
        return Err(Error::Dimension {
            expected: format!("{} score tensors", states.len()),
            actual: format!("{}", scores.len()),
        });
    }
    for (x, s) in states.iter().zip(scores) {
        x.ensure_same_shape(s)?;
    }
    Ok(())
}

fn add_noise(x: &mut AudioTensor, scale: f64, rng: &mut ChaCha8Rng) {
    for v in x.samples_mut() {
        let e: f64 = rng.sample(StandardNormal);
        *v += scale * e;
    }
}

/// One transition of the whole system, with one random stream per
/// trajectory. Churn noise is drawn before the ancestral noise.
fn step_system(
    states: &mut [AudioTensor],
    rngs: &mut [ChaCha8Rng],
    ids: &[u64],
    system: &dyn ScoreSystem,
    sigma_from: f64,
    sigma_to: f64,
    step: usize,
    config: &IntegratorConfig,
) -> Result<()> {
    if !(sigma_from > sigma_to) {
        return Err(Error::Schedule(format!(
            "step {step}: sigma must decrease ({sigma_from} -> {sigma_to})"
        )));
    }
    let gamma = config.churn_gamma();
    let sigma_hat = sigma_from * (1.0 + gamma);
    if gamma > 0.0 {
        let extra = (sigma_hat * sigma_hat - sigma_from * sigma_from).sqrt() * config.s_noise;
        for (x, rng) in states.iter_mut().zip(rngs.iter_mut()) {
            add_noise(x, extra, rng);
        }
    }
    let (down, up) = ancestral_variances(sigma_hat, sigma_to)?;
    let scores = system.scores(
        states,
        &EvalContext {
            sigma: sigma_hat,
            step,
            stage: 0,
        },
    )?;
    check_scores(states, &scores)?;

    match config.kind {
        SamplerKind::Adpm2 if down > 0.0 => {
            let sigma_mid = ((sigma_hat.ln() + down.ln()) / 2.0).exp();
            let mid: Vec<AudioTensor> = states
                .iter()
                .zip(&scores)
                .map(|(x, s)| x.zip_with(s, |x, s| x - sigma_hat * s * (sigma_mid - sigma_hat)))
                .collect();
            let mid_scores = system.scores(
                &mid,
                &EvalContext {
                    sigma: sigma_mid,
                    step,
                    stage: 1,
                },
            )?;
            check_scores(&mid, &mid_scores)?;
            for (x, s) in states.iter_mut().zip(&mid_scores) {
                *x = x.zip_with(s, |x, s| x - sigma_mid * s * (down - sigma_hat));
            }
        }
        // Euler, and the DPM2 fallback when the descent target is zero
        _ => {
            for (x, s) in states.iter_mut().zip(&scores) {
                *x = x.zip_with(s, |x, s| x - sigma_hat * s * (down - sigma_hat));
            }
        }
    }
    if up > 0.0 {
        for (x, rng) in states.iter_mut().zip(rngs.iter_mut()) {
            add_noise(x, up, rng);
        }
    }
    for (x, &id) in states.iter().zip(ids) {
        if !x.is_finite() {
            return Err(Error::Divergence {
                trajectory: id,
                step,
            });
        }
    }
    Ok(())
}

fn single_step(
    kind: SamplerKind,
    state: &AudioTensor,
    score_cb: &(dyn Fn(&AudioTensor, f64) -> Result<AudioTensor> + Sync),
    sigma_from: f64,
    sigma_to: f64,
    config: &IntegratorConfig,
    rng: &mut ChaCha8Rng,
) -> Result<AudioTensor> {
    let config = IntegratorConfig {
        kind,
        ..config.clone()
    };
    config.validate()?;
    let system = |s: &[AudioTensor], ctx: &EvalContext| Ok(vec![score_cb(&s[0], ctx.sigma)?]);
    let mut states = vec![state.clone()];
    step_system(
        &mut states,
        std::slice::from_mut(rng),
        &[0],
        &system,
        sigma_from,
        sigma_to,
        0,
        &config,
    )?;
    Ok(states.pop().expect("one state"))
}

/// One Euler-ancestral transition of a single trajectory.
pub fn step_euler_ancestral(
    state: &AudioTensor,
    score_cb: &(dyn Fn(&AudioTensor, f64) -> Result<AudioTensor> + Sync),
    sigma_from: f64,
    sigma_to: f64,
    config: &IntegratorConfig,
    rng: &mut ChaCha8Rng,
) -> Result<AudioTensor> {
    single_step(SamplerKind::EulerAncestral, state, score_cb, sigma_from, sigma_to, config, rng)
}

/// One DPM2-ancestral transition of a single trajectory.
pub fn step_adpm2(
    state: &AudioTensor,
    score_cb: &(dyn Fn(&AudioTensor, f64) -> Result<AudioTensor> + Sync),
    sigma_from: f64,
    sigma_to: f64,
    config: &IntegratorConfig,
    rng: &mut ChaCha8Rng,
) -> Result<AudioTensor> {
    single_step(SamplerKind::Adpm2, state, score_cb, sigma_from, sigma_to, config, rng)
}

/// Advances every trajectory through the remaining ladder. Step `i` of
/// trajectory `id` draws all its noise from `stream(seed, id, i)`.
pub fn integrate(
    initial: CoupledState,
    system: &dyn ScoreSystem,
    schedule: &NoiseSchedule,
    config: &IntegratorConfig,
) -> Result<CoupledState> {
    config.validate()?;
    if config.n_steps != schedule.n_steps {
        return Err(Error::config(format!(
            "integrator n_steps {} disagrees with schedule n_steps {}",
            config.n_steps, schedule.n_steps
        )));
    }
    let CoupledState {
        mut states,
        ids,
        step_index,
    } = initial;
    let sigmas = schedule.sigmas();
    if step_index > schedule.transitions() {
        return Err(Error::Schedule(format!("step index {step_index} beyond the ladder")));
    }
    for step in step_index..schedule.transitions() {
        let mut rngs: Vec<ChaCha8Rng> = ids
            .iter()
            .map(|&id| stream(config.rng_seed, id, step as u64))
            .collect();
        step_system(
            &mut states,
            &mut rngs,
            &ids,
            system,
            sigmas[step],
            sigmas[step + 1],
            step,
            config,
        )?;
    }
    Ok(CoupledState {
        states,
        ids,
        step_index: schedule.transitions(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::build_sigma_schedule;

    fn t(v: &[f64]) -> AudioTensor {
        AudioTensor::mono(v.to_vec(), 8000).unwrap()
    }

    #[test]
    fn ancestral_split_values() {
        assert_eq!(ancestral_variances(1.0, 0.0).unwrap(), (0.0, 0.0));
        let (down, up) = ancestral_variances(1.0, 0.5).unwrap();
        assert!((up - 0.4330127018922193).abs() < 1e-15);
        assert!((down - 0.25).abs() < 1e-15);
        assert!((down * down + up * up - 0.25).abs() < 1e-15);
        assert!(ancestral_variances(0.5, 0.5).is_err());
        assert!(ancestral_variances(0.5, -0.1).is_err());
    }

    #[test]
    fn churn_factor_for_separation_setting() {
        let c = IntegratorConfig::new(SamplerKind::EulerAncestral, 150, 20.0, 0);
        assert!((c.churn_gamma() - 0.13333333333333333).abs() < 1e-15);
        let big = IntegratorConfig::new(SamplerKind::EulerAncestral, 10, 20.0, 0);
        assert!((big.churn_gamma() - (2f64.sqrt() - 1.0)).abs() < 1e-15);
    }

    #[test]
    fn zero_score_is_pure_ancestral_noise() {
        let x = t(&[0.3, -0.7, 1.1]);
        let zero = |s: &AudioTensor, _: f64| Ok(s.zeros_like());
        let cfg = IntegratorConfig::new(SamplerKind::EulerAncestral, 10, 0.0, 0);
        let (_, up) = ancestral_variances(1.0, 0.6).unwrap();
        let mut rng = stream(4, 0, 0);
        let eps = standard_normals(&mut rng.clone(), 3);
        let e = step_euler_ancestral(&x, &zero, 1.0, 0.6, &cfg, &mut rng).unwrap();
        for ((a, b), e) in e.samples().iter().zip(x.samples()).zip(&eps) {
            assert!((a - (b + up * e)).abs() < 1e-15);
        }
        let mut rng = stream(4, 0, 0);
        let d = step_adpm2(&x, &zero, 1.0, 0.6, &cfg, &mut rng).unwrap();
        assert_eq!(d, e);
    }

    #[test]
    fn terminal_step_returns_denoised_estimate() {
        let x = t(&[0.9]);
        let score = |s: &AudioTensor, sigma: f64| Ok(s.map(|v| (0.2 - v) / (0.1 + sigma * sigma)));
        let cfg = IntegratorConfig::new(SamplerKind::EulerAncestral, 10, 0.0, 0);
        let e = step_euler_ancestral(&x, &score, 0.05, 0.0, &cfg, &mut stream(0, 0, 0)).unwrap();
        let a = step_adpm2(&x, &score, 0.05, 0.0, &cfg, &mut stream(0, 0, 0)).unwrap();
        assert_eq!(e, a);
        let expect = 0.9 + 0.05 * 0.05 * (0.2 - 0.9) / (0.1 + 0.0025);
        assert!((e.samples()[0] - expect).abs() < 1e-15);
    }

    #[test]
    fn divergence_reports_trajectory_and_step() {
        let schedule = build_sigma_schedule(0.01, 1.0, 1.0, 4).unwrap();
        let cfg = IntegratorConfig::new(SamplerKind::EulerAncestral, 4, 0.0, 0);
        let bad = |s: &[AudioTensor], ctx: &EvalContext| -> Result<Vec<AudioTensor>> {
            Ok(s.iter()
                .map(|x| if ctx.step == 2 { x.map(|_| f64::INFINITY) } else { x.zeros_like() })
                .collect())
        };
        let init = CoupledState::new(vec![t(&[0.0]), t(&[0.0])], vec![7, 9]).unwrap();
        match integrate(init, &bad, &schedule, &cfg) {
            Err(Error::Divergence { trajectory: 7, step: 2 }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn single_trajectory_integration_equals_repeated_steps() {
        let schedule = build_sigma_schedule(0.01, 2.0, 7.0, 12).unwrap();
        for kind in [SamplerKind::EulerAncestral, SamplerKind::Adpm2] {
            let cfg = IntegratorConfig::new(kind, 12, 5.0, 3);
            let score = |s: &AudioTensor, sigma: f64| Ok(s.map(|v| (0.5 - v) / (0.2 + sigma * sigma)));
            let system = |s: &[AudioTensor], ctx: &EvalContext| Ok(vec![score(&s[0], ctx.sigma)?]);
            let init = CoupledState::from_noise(&t(&[0.0; 5]), vec![4], 3, 2.0).unwrap();
            let mut x = init.states[0].clone();
            let out = integrate(init, &system, &schedule, &cfg).unwrap();
            let s = schedule.sigmas();
            for i in 0..schedule.transitions() {
                let mut rng = stream(3, 4, i as u64);
                x = match kind {
                    SamplerKind::EulerAncestral => step_euler_ancestral(&x, &score, s[i], s[i + 1], &cfg, &mut rng),
                    SamplerKind::Adpm2 => step_adpm2(&x, &score, s[i], s[i + 1], &cfg, &mut rng),
                }
                .unwrap();
            }
            assert_eq!(out.states[0], x);
            assert_eq!(out.step_index, 12);
        }
    }

    #[test]
    fn uncoupled_trajectories_integrate_independently() {
        let schedule = build_sigma_schedule(0.01, 2.0, 7.0, 8).unwrap();
        let cfg = IntegratorConfig::new(SamplerKind::Adpm2, 8, 0.0, 11);
        let field = |x: &AudioTensor, sigma: f64, m: f64| x.map(|v| (m - v) / (0.3 + sigma * sigma));
        let pair = |s: &[AudioTensor], ctx: &EvalContext| {
            Ok(vec![field(&s[0], ctx.sigma, 1.0), field(&s[1], ctx.sigma, -1.0)])
        };
        let joint = integrate(
            CoupledState::from_noise(&t(&[0.0; 3]), vec![1, 2], 11, 2.0).unwrap(),
            &pair,
            &schedule,
            &cfg,
        )
        .unwrap();
        for (i, (id, m)) in [(1u64, 1.0), (2, -1.0)].into_iter().enumerate() {
            let alone = |s: &[AudioTensor], ctx: &EvalContext| Ok(vec![field(&s[0], ctx.sigma, m)]);
            let solo = integrate(
                CoupledState::from_noise(&t(&[0.0; 3]), vec![id], 11, 2.0).unwrap(),
                &alone,
                &schedule,
                &cfg,
            )
            .unwrap();
            assert_eq!(solo.states[0], joint.states[i]);
        }
    }

    #[test]
    fn bit_identical_reruns() {
        let schedule = build_sigma_schedule(0.01, 2.0, 7.0, 20).unwrap();
        let cfg = IntegratorConfig::new(SamplerKind::EulerAncestral, 20, 20.0, 99);
        let sys = |s: &[AudioTensor], ctx: &EvalContext| {
            Ok(s.iter().map(|x| x.map(|v| -v / (1.0 + ctx.sigma * ctx.sigma))).collect())
        };
        let run = || {
            integrate(
                CoupledState::from_noise(&t(&[0.0; 4]), vec![0, 1, 2], 99, 2.0).unwrap(),
                &sys,
                &schedule,
                &cfg,
            )
            .unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn integrator_rejects_mismatched_steps() {
        let schedule = build_sigma_schedule(0.01, 2.0, 7.0, 5).unwrap();
        let cfg = IntegratorConfig::new(SamplerKind::EulerAncestral, 6, 0.0, 0);
        let sys = |s: &[AudioTensor], _: &EvalContext| Ok(s.to_vec());
        let init = CoupledState::new(vec![t(&[0.0])], vec![0]).unwrap();
        assert!(integrate(init, &sys, &schedule, &cfg).is_err());
    }
}
