//! Evaluation protocols: normalized cumulative reward, learning-curve
//! area, perturbation robustness, irregular terrain, and query-rate
//! sweeps.
//!
//! Episodes are independent; with parallel workers each episode draws
//! from its own derived seed and results are reduced in episode-index
//! order, so worker count never changes a report.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::Env;
use crate::error::{Error, Result};
use crate::neural::{GaussianPolicy, RunningNorm};
use crate::rigid2d::{ExternalForce, GroundProfile};
use crate::task::EpisodeStatus;
use crate::util::{derive_seed, rng_from_seed, run_indexed, Workers};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NcrConfig {
    pub episodes: usize,
    pub seconds: f64,
}

impl Default for NcrConfig {
    fn default() -> Self {
        NcrConfig {
            episodes: 32,
            seconds: 10.0,
        }
    }
}

/// One evaluation: normalized mean, its standard error, and the raw
/// per-episode cumulative rewards behind them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NcrReport {
    pub ncr: f64,
    pub stderr: f64,
    pub steps_per_episode: usize,
    pub per_episode: Vec<f64>,
}

impl NcrReport {
    fn from_sums(sums: Vec<f64>, steps: usize) -> Self {
        let n = sums.len() as f64;
        let max = steps as f64;
        let normalized: Vec<f64> = sums.iter().map(|s| s / max).collect();
        let mean = normalized.iter().sum::<f64>() / n;
        let var = normalized.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        NcrReport {
            ncr: mean,
            stderr: (var / n).sqrt(),
            steps_per_episode: steps,
            per_episode: sums,
        }
    }
}

/// Runs one deterministic episode and returns its cumulative reward.
/// The episode ends early on a fall; the missing steps contribute zero,
/// matching the absorbing-state rule.
pub(crate) fn episode_return(
    env: &mut Env,
    policy: &GaussianPolicy,
    norm: &RunningNorm,
    steps: usize,
    pulses: Option<(&[Pulse], f64)>,
) -> f64 {
    let trunk = env.sim.model.trunk[0];
    let trunk_com = env.sim.model.links[trunk].com_offset;
    let mut sum = 0.0;
    for _ in 0..steps {
        if let Some((schedule, magnitude)) = pulses {
            let t = env.elapsed();
            env.external.clear();
            if let Some(p) = schedule
                .iter()
                .find(|p| t >= p.start && t < p.start + p.duration)
            {
                env.external.push(ExternalForce {
                    link: trunk,
                    offset: trunk_com.into(),
                    force: nalgebra::Vector2::new(
                        magnitude * p.angle.cos(),
                        magnitude * p.angle.sin(),
                    ),
                });
            }
        }
        let obs = env.observe();
        let a = match policy.mean(&norm.normalize(&obs)) {
            Ok(mu) => policy.clamp(mu.as_slice()),
            Err(_) => return sum,
        };
        let out = env.step(&a);
        sum += out.reward;
        if out.status == EpisodeStatus::FallEnd {
            break;
        }
    }
    sum
}

/// NCR over independent episodes with starts drawn from the task's
/// initial-state distribution. Normalization: max cumulative reward is
/// one per step, min is zero.
pub fn evaluate_ncr(
    env: &Env,
    policy: &GaussianPolicy,
    norm: &RunningNorm,
    cfg: &NcrConfig,
    seed: u64,
    workers: Workers,
) -> NcrReport {
    let steps = (cfg.seconds / env.task.control_dt).round() as usize;
    let sums = run_indexed(cfg.episodes, workers, |i| {
        let mut e = env.clone();
        let mut rng = rng_from_seed(derive_seed(seed, "episode", i as u64));
        e.reset(&mut rng);
        e.set_episode_duration(cfg.seconds + 1.0);
        episode_return(&mut e, policy, norm, steps, None)
    });
    NcrReport::from_sums(sums, steps)
}

/// Normalized area under a learning curve: trapezoidal integral of NCR
/// over iterations, divided by the iteration span.
pub fn learning_auc(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::invalid("curve", "need at least two points"));
    }
    let mut area = 0.0;
    for w in points.windows(2) {
        let (x0, y0) = w[0];
        let (x1, y1) = w[1];
        if x1 <= x0 {
            return Err(Error::invalid("curve", "iterations must be increasing"));
        }
        area += 0.5 * (y0 + y1) * (x1 - x0);
    }
    let span = points[points.len() - 1].0 - points[0].0;
    Ok(area / span)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PerturbConfig {
    pub episodes: usize,
    pub seconds: f64,
    /// Pulse duration range, seconds.
    pub pulse_duration: [f64; 2],
    /// Quiet time between pulses, seconds.
    pub gap: [f64; 2],
}

impl Default for PerturbConfig {
    fn default() -> Self {
        PerturbConfig {
            episodes: 128,
            seconds: 20.0,
            pulse_duration: [0.1, 0.4],
            gap: [1.0, 4.0],
        }
    }
}

/// One force pulse: world-frame direction, applied to the trunk COM.
#[derive(Debug, Clone, Copy)]
pub struct Pulse {
    pub start: f64,
    pub duration: f64,
    pub angle: f64,
}

/// Alternating gap/pulse timeline covering `horizon` seconds, starting
/// with a gap.
pub fn pulse_schedule(cfg: &PerturbConfig, rng: &mut impl Rng, horizon: f64) -> Vec<Pulse> {
    let mut t = 0.0;
    let mut pulses = Vec::new();
    loop {
        t += rng.random_range(cfg.gap[0]..cfg.gap[1]);
        if t >= horizon {
            return pulses;
        }
        let duration = rng.random_range(cfg.pulse_duration[0]..cfg.pulse_duration[1]);
        let angle = rng.random_range(0.0..std::f64::consts::TAU);
        pulses.push(Pulse {
            start: t,
            duration,
            angle,
        });
        t += duration;
    }
}

/// NCR under the random-pulse process, one report per force magnitude.
/// Episode starts and pulse timelines use separate seed streams shared
/// across magnitudes, so magnitude zero reproduces the unperturbed
/// evaluation exactly and larger magnitudes are paired comparisons.
pub fn perturb_eval(
    env: &Env,
    policy: &GaussianPolicy,
    norm: &RunningNorm,
    cfg: &PerturbConfig,
    magnitudes: &[f64],
    seed: u64,
    workers: Workers,
) -> Vec<NcrReport> {
    let steps = (cfg.seconds / env.task.control_dt).round() as usize;
    magnitudes
        .iter()
        .map(|&mag| {
            let sums = run_indexed(cfg.episodes, workers, |i| {
                let mut e = env.clone();
                let mut ep_rng = rng_from_seed(derive_seed(seed, "episode", i as u64));
                let mut pulse_rng = rng_from_seed(derive_seed(seed, "pulse", i as u64));
                e.reset(&mut ep_rng);
                e.set_episode_duration(cfg.seconds + 1.0);
                let schedule = pulse_schedule(cfg, &mut pulse_rng, cfg.seconds);
                episode_return(&mut e, policy, norm, steps, Some((&schedule, mag)))
            });
            NcrReport::from_sums(sums, steps)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerrainKind {
    /// Flat segments with uniformly random heights.
    Bumps,
    /// Connected linear segments with bounded steepness.
    Slopes,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TerrainConfig {
    pub kind: TerrainKind,
    /// Bump height upper bound, m.
    pub h_max: f64,
    /// Slope magnitude upper bound, rise over run.
    pub s_max: f64,
    /// Segment length range, m.
    pub seg_len: [f64; 2],
    pub x_start: f64,
    pub x_end: f64,
}

impl Default for TerrainConfig {
    fn default() -> Self {
        TerrainConfig {
            kind: TerrainKind::Bumps,
            h_max: 0.05,
            s_max: 0.2,
            seg_len: [0.5, 2.0],
            x_start: -50.0,
            x_end: 150.0,
        }
    }
}

/// Deterministic terrain from (config, seed). Ground is held at zero
/// until x = 1 so the initial pose always starts on level footing.
pub fn generate_terrain(cfg: &TerrainConfig, seed: u64) -> GroundProfile {
    let mut rng = rng_from_seed(derive_seed(seed, "terrain", 0));
    let seg = |rng: &mut rand_chacha::ChaCha8Rng| {
        if cfg.seg_len[1] > cfg.seg_len[0] {
            rng.random_range(cfg.seg_len[0]..cfg.seg_len[1])
        } else {
            cfg.seg_len[0]
        }
    };
    match cfg.kind {
        TerrainKind::Bumps => {
            let mut knots = vec![(cfg.x_start, 0.0)];
            let mut x = 1.0;
            while x < cfg.x_end {
                let h = if cfg.h_max > 0.0 {
                    rng.random_range(0.0..cfg.h_max)
                } else {
                    0.0
                };
                knots.push((x, h));
                x += seg(&mut rng);
            }
            GroundProfile::Steps { knots }
        }
        TerrainKind::Slopes => {
            let mut knots = vec![(cfg.x_start, 0.0), (1.0, 0.0)];
            let mut x = 1.0;
            let mut h = 0.0;
            while x < cfg.x_end {
                let dx = seg(&mut rng);
                let slope = if cfg.s_max > 0.0 {
                    rng.random_range(-cfg.s_max..cfg.s_max)
                } else {
                    0.0
                };
                x += dx;
                h += slope * dx;
                knots.push((x, h));
            }
            GroundProfile::Ramps { knots }
        }
    }
}

/// Policy query rates examined by the rate sweep, Hz.
pub const QUERY_RATES_HZ: [f64; 4] = [15.0, 30.0, 60.0, 120.0];

/// Substeps per control step for a query rate against a fixed physics
/// rate; errors unless the division is exact.
pub fn substeps_for_rate(rate_hz: f64, substep_hz: f64) -> Result<usize> {
    if !(rate_hz > 0.0) {
        return Err(Error::config("query_rate", "must be positive"));
    }
    let ratio = substep_hz / rate_hz;
    let n = ratio.round();
    if n < 1.0 || (ratio - n).abs() > 1e-9 {
        return Err(Error::config(
            "query_rate",
            format!("{rate_hz} Hz does not divide the {substep_hz} Hz physics rate"),
        ));
    }
    Ok(n as usize)
}

/// Validates every rate up front, then runs `train_at(rate, substeps)`
/// for each and pairs rates with their results.
pub fn query_rate_suite<T>(
    rates: &[f64],
    substep_hz: f64,
    mut train_at: impl FnMut(f64, usize) -> Result<T>,
) -> Result<Vec<(f64, T)>> {
    let substeps: Vec<usize> = rates
        .iter()
        .map(|&r| substeps_for_rate(r, substep_hz))
        .collect::<Result<_>>()?;
    rates
        .iter()
        .zip(substeps)
        .map(|(&r, n)| Ok((r, train_at(r, n)?)))
        .collect()
}

/// One row of an evaluation report CSV.
#[derive(Debug, Clone, Serialize)]
pub struct ReportRow {
    pub policy: String,
    pub protocol: String,
    pub parameter: f64,
    pub mean: f64,
    pub stderr: f64,
    pub episodes: usize,
    pub seed: u64,
}

pub fn write_report_csv(path: impl AsRef<std::path::Path>, rows: &[ReportRow]) -> Result<()> {
    let mut out = String::from("policy,protocol,parameter,mean,stderr,episodes,seed\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.policy, r.protocol, r.parameter, r.mean, r.stderr, r.episodes, r.seed
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_tracking_normalizes_to_one() {
        // Max cumulative reward is one per step, min is zero.
        let r = NcrReport::from_sums(vec![600.0; 32], 600);
        assert_eq!(r.ncr, 1.0);
        assert_eq!(r.stderr, 0.0);
        let z = NcrReport::from_sums(vec![0.0; 32], 600);
        assert_eq!(z.ncr, 0.0);
    }

    #[test]
    fn report_mean_matches_straight_resummation() {
        let sums: Vec<f64> = (0..32).map(|i| 100.0 + 13.7 * (i as f64 * 0.71).sin()).collect();
        let r = NcrReport::from_sums(sums.clone(), 600);
        let mean = sums.iter().map(|s| s / 600.0).sum::<f64>() / 32.0;
        assert!((r.ncr - mean).abs() < 1e-12);
        assert!(r.ncr >= 0.0 && r.ncr <= 1.0);
        assert_eq!(r.per_episode, sums);
    }

    #[test]
    fn auc_of_constant_one_is_one() {
        let pts: Vec<(f64, f64)> = (0..11).map(|i| (i as f64 * 100.0, 1.0)).collect();
        assert!((learning_auc(&pts).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn auc_of_constant_zero_is_zero() {
        let pts = [(0.0, 0.0), (500.0, 0.0), (1000.0, 0.0)];
        assert_eq!(learning_auc(&pts).unwrap(), 0.0);
    }

    #[test]
    fn auc_of_linear_ramp_is_half() {
        let pts: Vec<(f64, f64)> = (0..=10).map(|i| (i as f64, i as f64 / 10.0)).collect();
        assert!((learning_auc(&pts).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn auc_invariant_to_subdividing_linear_pieces() {
        let coarse = [(0.0, 0.2), (10.0, 0.8)];
        let fine: Vec<(f64, f64)> = (0..=20)
            .map(|i| {
                let x = i as f64 * 0.5;
                (x, 0.2 + 0.06 * x)
            })
            .collect();
        let a = learning_auc(&coarse).unwrap();
        let b = learning_auc(&fine).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn auc_rejects_short_or_unsorted_curves() {
        assert!(learning_auc(&[(0.0, 1.0)]).is_err());
        assert!(learning_auc(&[(5.0, 1.0), (5.0, 0.5)]).is_err());
        assert!(learning_auc(&[(5.0, 1.0), (1.0, 0.5)]).is_err());
    }

    #[test]
    fn pulse_timing_statistics_match_their_ranges() {
        let cfg = PerturbConfig::default();
        let mut rng = rng_from_seed(99);
        let mut durations = Vec::new();
        let mut gaps = Vec::new();
        while durations.len() < 10_000 {
            let pulses = pulse_schedule(&cfg, &mut rng, 1.0e4);
            let mut prev_end = 0.0;
            for p in &pulses {
                durations.push(p.duration);
                gaps.push(p.start - prev_end);
                prev_end = p.start + p.duration;
            }
        }
        // Chi-squared uniformity over 10 bins, df = 9, p > 0.01.
        let chi2 = |xs: &[f64], lo: f64, hi: f64| {
            let mut bins = [0usize; 10];
            for &x in xs {
                assert!(x >= lo && x < hi, "sample {x} outside [{lo}, {hi})");
                let b = (((x - lo) / (hi - lo)) * 10.0) as usize;
                bins[b.min(9)] += 1;
            }
            let expect = xs.len() as f64 / 10.0;
            bins.iter()
                .map(|&c| (c as f64 - expect).powi(2) / expect)
                .sum::<f64>()
        };
        assert!(chi2(&durations, 0.1, 0.4) < 21.666);
        assert!(chi2(&gaps, 1.0, 4.0) < 21.666);
    }

    #[test]
    fn pulse_schedule_alternates_and_fits_horizon() {
        let cfg = PerturbConfig::default();
        let mut rng = rng_from_seed(3);
        let pulses = pulse_schedule(&cfg, &mut rng, 20.0);
        assert!(!pulses.is_empty());
        let mut prev_end = 0.0;
        for p in &pulses {
            assert!(p.start - prev_end >= 1.0 && p.start - prev_end < 4.0);
            assert!(p.duration >= 0.1 && p.duration < 0.4);
            assert!(p.start < 20.0);
            prev_end = p.start + p.duration;
        }
    }

    #[test]
    fn bump_terrain_heights_stay_in_range() {
        let cfg = TerrainConfig {
            kind: TerrainKind::Bumps,
            h_max: 0.07,
            x_end: 20_000.0,
            ..TerrainConfig::default()
        };
        let g = generate_terrain(&cfg, 5);
        match &g {
            GroundProfile::Steps { knots } => {
                assert!(knots.len() > 10_000);
                assert!(knots.iter().all(|&(_, h)| (0.0..0.07).contains(&h)));
            }
            other => panic!("expected steps, got {other:?}"),
        }
        assert_eq!(g.height_at(0.0), 0.0, "spawn pad must be level");
    }

    #[test]
    fn zero_height_bound_means_flat_ground() {
        let cfg = TerrainConfig {
            kind: TerrainKind::Bumps,
            h_max: 0.0,
            ..TerrainConfig::default()
        };
        let g = generate_terrain(&cfg, 11);
        for i in -20..100 {
            assert_eq!(g.height_at(i as f64), 0.0);
        }
    }

    #[test]
    fn slope_terrain_is_continuous_with_bounded_steepness() {
        let cfg = TerrainConfig {
            kind: TerrainKind::Slopes,
            s_max: 0.3,
            x_end: 500.0,
            ..TerrainConfig::default()
        };
        let g = generate_terrain(&cfg, 7);
        let knots = match &g {
            GroundProfile::Ramps { knots } => knots.clone(),
            other => panic!("expected ramps, got {other:?}"),
        };
        for w in knots.windows(2) {
            let slope = (w[1].1 - w[0].1) / (w[1].0 - w[0].0);
            assert!(slope.abs() <= 0.3 + 1e-12, "slope {slope}");
        }
        // Continuity probe across every joint.
        for &(x, _) in &knots {
            let below = g.height_at(x - 1e-9);
            let above = g.height_at(x + 1e-9);
            assert!((below - above).abs() < 1e-6);
        }
    }

    #[test]
    fn terrain_is_pure_in_config_and_seed() {
        let cfg = TerrainConfig::default();
        let a = generate_terrain(&cfg, 42);
        let b = generate_terrain(&cfg, 42);
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn query_rates_map_to_exact_substep_counts() {
        for (hz, n) in [(15.0, 40), (30.0, 20), (60.0, 10), (120.0, 5)] {
            assert_eq!(substeps_for_rate(hz, 600.0).unwrap(), n);
        }
        assert!(substeps_for_rate(7.0, 600.0).is_err());
        assert!(substeps_for_rate(-60.0, 600.0).is_err());
    }

    #[test]
    fn rate_suite_validates_before_running() {
        let mut calls = Vec::new();
        let result = query_rate_suite(&[60.0, 7.0], 600.0, |r, n| {
            calls.push((r, n));
            Ok(r)
        });
        assert!(result.is_err());
        assert!(calls.is_empty(), "invalid rate must fail before any training");

        let ok = query_rate_suite(&QUERY_RATES_HZ, 600.0, |r, n| Ok((r, n))).unwrap();
        assert_eq!(ok.len(), 4);
        assert_eq!(ok[0].1, (15.0, 40));
        assert_eq!(ok[3].1, (120.0, 5));
    }
}
