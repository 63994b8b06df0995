//! Percentile sweep: quantize, lower, place and simulate once per
//! percentile and score each run.

use std::io::Write;

use rayon::prelude::*;
use thiserror::Error;

use super::{ptq_quantize_graph, PtqConfig, QuantError};
use crate::events::SpikeTrain;
use crate::graph::Graph;
use crate::lowering::{lower, LowerError, Network};
use crate::partitioner::{partition, PartitionError, PartitionOverrides, PeModel, CHIP_PES};
use crate::simulator::{run, run_reference, Engine, Precision, RunOptions, RunResult, SimError};

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("no percentiles given")]
    NoPercentiles,
    #[error("no samples given")]
    NoSamples,
    #[error("accuracy needs a label on every sample")]
    MissingLabels,
    #[error("network has no output population to predict from")]
    NoOutput,
    #[error("percentile {percentile}: {source}")]
    Quant {
        percentile: f64,
        #[source]
        source: QuantError,
    },
    #[error(transparent)]
    Lower(#[from] LowerError),
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Debug, Clone)]
pub struct Sample {
    pub input: SpikeTrain,
    pub label: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SweepMetric {
    /// Accuracy when every sample is labelled, spike agreement otherwise.
    #[default]
    Auto,
    Accuracy,
    /// `1 - sum|q - f| / sum(q + f)` over per-neuron spike counts of all
    /// LIF populations, quantized run `q` against the float reference `f`.
    SpikeAgreement,
}

#[derive(Debug, Clone)]
pub struct SweepOptions {
    pub max_timesteps: usize,
    pub engine: Engine,
    pub precision: Precision,
    pub metric: SweepMetric,
    pub model: PeModel,
    pub overrides: PartitionOverrides,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            max_timesteps: crate::simulator::DEFAULT_MAX_TIMESTEPS,
            engine: Engine::PlacedInt8,
            precision: Precision::F32,
            metric: SweepMetric::Auto,
            model: PeModel::default(),
            overrides: PartitionOverrides::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub percentile: f64,
    pub metric: f64,
}

fn simulate(net: &Network, input: &SpikeTrain, opts: &SweepOptions) -> Result<RunResult, SweepError> {
    let run_opts = RunOptions {
        engine: opts.engine,
        precision: opts.precision,
        ..RunOptions::default()
    };
    Ok(match opts.engine {
        Engine::ReferenceDense => run_reference(net, input, &run_opts)?,
        Engine::PlacedInt8 => {
            let pl = partition(net, &opts.model, &opts.overrides, CHIP_PES)?;
            run(net, &pl, input, &run_opts)?
        }
    })
}

fn lif_counts(net: &Network, r: &RunResult) -> Vec<u32> {
    net.populations
        .iter()
        .filter(|p| p.lif.is_some())
        .flat_map(|p| r.neuron_counts[&p.id].iter().copied())
        .collect()
}

/// Agreement between two spike-count vectors; identical silence counts as 1.
pub fn spike_agreement(a: &[u32], b: &[u32]) -> f64 {
    let (diff, total) = a.iter().zip(b).fold((0u64, 0u64), |(d, s), (&x, &y)| {
        (d + x.abs_diff(y) as u64, s + x as u64 + y as u64)
    });
    if total == 0 {
        1.0
    } else {
        1.0 - diff as f64 / total as f64
    }
}

pub fn percentile_sweep(
    g: &Graph,
    samples: &[Sample],
    percentiles: &[f64],
    opts: &SweepOptions,
) -> Result<Vec<SweepPoint>, SweepError> {
    if percentiles.is_empty() {
        return Err(SweepError::NoPercentiles);
    }
    if samples.is_empty() {
        return Err(SweepError::NoSamples);
    }
    let labelled = samples.iter().all(|s| s.label.is_some());
    let metric = match opts.metric {
        SweepMetric::Auto if labelled => SweepMetric::Accuracy,
        SweepMetric::Auto => SweepMetric::SpikeAgreement,
        SweepMetric::Accuracy if !labelled => return Err(SweepError::MissingLabels),
        m => m,
    };

    let reference: Vec<Vec<u32>> = if metric == SweepMetric::SpikeAgreement {
        let float_net = lower(g, opts.max_timesteps)?;
        samples
            .par_iter()
            .map(|s| {
                let r = run_reference(&float_net, &s.input, &RunOptions::default())?;
                Ok(lif_counts(&float_net, &r))
            })
            .collect::<Result<_, SweepError>>()?
    } else {
        Vec::new()
    };

    percentiles
        .par_iter()
        .map(|&p| {
            let cfg = PtqConfig::new(p).map_err(|source| SweepError::Quant {
                percentile: p,
                source,
            })?;
            let q = ptq_quantize_graph(g, &cfg).map_err(|source| SweepError::Quant {
                percentile: p,
                source,
            })?;
            let net = lower(&q, opts.max_timesteps)?;
            let metric = match metric {
                SweepMetric::Accuracy => {
                    let mut correct = 0usize;
                    for s in samples {
                        let r = simulate(&net, &s.input, opts)?;
                        let pred = r.prediction.ok_or(SweepError::NoOutput)?;
                        correct += usize::from(Some(pred.class) == s.label);
                    }
                    correct as f64 / samples.len() as f64
                }
                _ => {
                    let mut q_counts = Vec::new();
                    let mut f_counts = Vec::new();
                    for (s, f) in samples.iter().zip(&reference) {
                        let r = simulate(&net, &s.input, opts)?;
                        q_counts.extend(lif_counts(&net, &r));
                        f_counts.extend_from_slice(f);
                    }
                    spike_agreement(&q_counts, &f_counts)
                }
            };
            Ok(SweepPoint {
                percentile: p,
                metric,
            })
        })
        .collect()
}

pub fn write_sweep_csv(points: &[SweepPoint], out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "percentile,metric")?;
    for p in points {
        writeln!(out, "{},{}", p.percentile, p.metric)?;
    }
    Ok(())
}
