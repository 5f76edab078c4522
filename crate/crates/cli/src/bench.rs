//! Timing NUTS on a traced log joint against its handwritten twin.

use std::time::{SystemTime, UNIX_EPOCH};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use ranvar::inference::{derive_seed, handwritten_density, nuts_sample, traced_density, ChainStats, NutsConfig};
use ranvar::models::ZooEntry;
use serde::Serialize;

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Traced,
    Handwritten,
    /// Both, from the same seeds; reports the overhead ratio.
    Both,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchConfig {
    pub model: String,
    pub mode: Mode,
    /// Timed post-warmup trajectories per chain.
    pub trajectories: usize,
    /// Post-warmup draws per chain; at least `trajectories`.
    pub samples: usize,
    pub warmup: usize,
    pub chains: usize,
    pub seed: u64,
    pub max_tree_depth: u32,
    pub target_accept: f64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            model: "logistic".into(),
            mode: Mode::Both,
            trajectories: 5,
            samples: 5,
            warmup: 200,
            chains: 1,
            seed: 0,
            max_tree_depth: 10,
            target_accept: 0.8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChainReport {
    pub seed: u64,
    pub leapfrog_counts: Vec<usize>,
    pub total_leapfrog_steps: usize,
    pub divergences: usize,
    pub step_size: f64,
    pub time_per_leapfrog_ms: f64,
    pub handwritten_time_per_leapfrog_ms: Option<f64>,
}

/// Field order is the serialized key order.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchmarkReport {
    pub model: String,
    pub n: usize,
    pub d: usize,
    pub mode: Mode,
    pub num_trajectories: usize,
    pub total_leapfrog_steps: usize,
    pub divergences: usize,
    pub divergence_storm: bool,
    pub chains_identical: Option<bool>,
    pub posterior_mean: Vec<f64>,
    pub time_per_leapfrog_ms: f64,
    pub handwritten_time_per_leapfrog_ms: Option<f64>,
    pub overhead_ratio: Option<f64>,
    pub seed: u64,
    pub config: BenchConfig,
    pub per_chain: Vec<ChainReport>,
    pub timestamp_unix: u64,
}

impl BenchmarkReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report fields serialize")
    }
}

struct ChainRun {
    seed: u64,
    traced: Option<ChainStats>,
    handwritten: Option<ChainStats>,
}

impl ChainRun {
    fn primary(&self) -> &ChainStats {
        self.traced.as_ref().or(self.handwritten.as_ref()).expect("at least one mode ran")
    }
}

/// Seconds and leapfrog steps over the first `k` post-warmup draws.
fn timed(stats: &ChainStats, k: usize) -> (f64, usize) {
    (
        stats.iteration_seconds[..k].iter().sum(),
        stats.leapfrog_counts[..k].iter().sum(),
    )
}

fn per_leapfrog_ms(seconds: f64, steps: usize) -> f64 {
    1e3 * seconds / steps.max(1) as f64
}

fn run_chain<B>(build: &B, cfg: &BenchConfig, chain: usize) -> Result<ChainRun, CliError>
where
    B: Fn() -> ranvar::Result<ZooEntry>,
{
    let entry = build()?;
    let seed = cfg.seed.wrapping_add(chain as u64);
    let dim: usize = entry.latents.iter().map(|l| l.size).sum();
    let mut init_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 1));
    let init: Vec<f64> = (0..dim).map(|_| init_rng.sample(StandardNormal)).collect();
    let nuts = NutsConfig {
        num_warmup: cfg.warmup,
        num_samples: cfg.samples,
        seed,
        max_tree_depth: cfg.max_tree_depth,
        target_accept: cfg.target_accept,
        ..NutsConfig::default()
    };
    let mut run = ChainRun {
        seed,
        traced: None,
        handwritten: None,
    };
    if cfg.mode != Mode::Traced {
        run.handwritten = Some(nuts_sample(&handwritten_density(&entry), &init, &nuts)?);
    }
    if cfg.mode != Mode::Handwritten {
        run.traced = Some(nuts_sample(&traced_density(&entry), &init, &nuts)?);
    }
    Ok(run)
}

/// Run `cfg.chains` independent chains (in parallel when more than one),
/// each building its own model with `build`.
pub fn bench_nuts<B>(build: B, cfg: &BenchConfig) -> Result<BenchmarkReport, CliError>
where
    B: Fn() -> ranvar::Result<ZooEntry> + Sync,
{
    if cfg.trajectories == 0 || cfg.chains == 0 {
        return Err(CliError::Usage("trajectories and chains must be at least 1".into()));
    }
    if cfg.samples < cfg.trajectories {
        return Err(CliError::Usage(format!(
            "samples ({}) must be at least trajectories ({})",
            cfg.samples, cfg.trajectories
        )));
    }
    let probe = build()?;
    let d = probe.latents.iter().map(|l| l.size).sum::<usize>();
    let n = probe.data.values().map(Vec::len).max().unwrap_or(0);
    drop(probe);

    let runs: Vec<ChainRun> = if cfg.chains == 1 {
        vec![run_chain(&build, cfg, 0)?]
    } else {
        std::thread::scope(|s| {
            let handles: Vec<_> = (0..cfg.chains)
                .map(|c| {
                    let build = &build;
                    s.spawn(move || run_chain(build, cfg, c))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("chain thread panicked"))
                .collect::<Result<Vec<_>, _>>()
        })?
    };

    let k = cfg.trajectories;
    let mut per_chain = Vec::new();
    let (mut secs, mut steps, mut hw_secs, mut hw_steps) = (0.0, 0, 0.0, 0);
    let mut divergences = 0;
    let mut identical = true;
    let mut sums = vec![0.0; d];
    let mut draws = 0usize;
    for run in &runs {
        let primary = run.primary();
        let (s, n_steps) = timed(primary, k);
        secs += s;
        steps += n_steps;
        divergences += primary.divergences;
        for draw in &primary.samples {
            for (acc, v) in sums.iter_mut().zip(draw) {
                *acc += v;
            }
            draws += 1;
        }
        let hw = match (&run.traced, &run.handwritten) {
            (Some(t), Some(h)) => {
                identical &= t.samples == h.samples;
                let (s, n) = timed(h, k);
                hw_secs += s;
                hw_steps += n;
                Some(per_leapfrog_ms(s, n))
            }
            _ => None,
        };
        per_chain.push(ChainReport {
            seed: run.seed,
            leapfrog_counts: primary.leapfrog_counts[..k].to_vec(),
            total_leapfrog_steps: n_steps,
            divergences: primary.divergences,
            step_size: primary.step_size,
            time_per_leapfrog_ms: per_leapfrog_ms(s, n_steps),
            handwritten_time_per_leapfrog_ms: hw,
        });
    }
    let both = cfg.mode == Mode::Both;
    let time = per_leapfrog_ms(secs, steps);
    let hw_time = both.then(|| per_leapfrog_ms(hw_secs, hw_steps));
    let total_draws = cfg.samples * cfg.chains;
    Ok(BenchmarkReport {
        model: cfg.model.clone(),
        n,
        d,
        mode: cfg.mode,
        num_trajectories: k,
        total_leapfrog_steps: steps,
        divergences,
        divergence_storm: 2 * divergences > total_draws,
        chains_identical: both.then_some(identical),
        posterior_mean: sums.iter().map(|s| s / draws.max(1) as f64).collect(),
        time_per_leapfrog_ms: time,
        handwritten_time_per_leapfrog_ms: hw_time,
        overhead_ratio: hw_time.map(|h| time / h),
        seed: cfg.seed,
        config: cfg.clone(),
        per_chain,
        timestamp_unix: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs()),
    })
}
