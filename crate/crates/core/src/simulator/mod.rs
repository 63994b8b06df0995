//! Discrete-timestep execution of lowered networks.
//!
//! Per timestep and neuron (integrate-then-fire):
//!
//! ```text
//! I = sum of weights of spikes emitted at t-1, in ascending pre order
//! v = alpha*v + input_scale*I + leak
//! if v >= threshold { spike; v -= threshold }
//! ```
//!
//! At most one spike per neuron per step. Spikes emitted at `t` are
//! delivered at `t + 1`; input spikes are emitted at their own timestep.
//!
//! Two engines share these semantics: [`Engine::ReferenceDense`] keeps
//! float64 state and dense per-projection matrices, [`Engine::PlacedInt8`]
//! runs each placed slice as its own PE with CSR synapse rows and spike
//! FIFOs exchanged at the timestep barrier.

mod placed;
mod reference;

use std::collections::BTreeMap;
use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::events::SpikeTrain;
use crate::graph::Lif;
use crate::lowering::{LifParams, Network};
use crate::partitioner::{PartitionError, Placement};

/// Measured energy per 1 ms frame on the chip, in millijoules.
pub const MJ_PER_FRAME: f64 = 0.765;
/// Default run length in timesteps.
pub const DEFAULT_MAX_TIMESTEPS: usize = 600;

#[derive(Debug, Error, PartialEq)]
pub enum DecayError {
    #[error("tau {tau} must exceed the timestep {dt}")]
    TauTooSmall { tau: f64, dt: f64 },
    #[error("timestep must be positive")]
    InvalidDt,
}

/// Euler-forward discretization of `tau dv/dt = v_leak - v + r I` with step
/// `dt`: `alpha = 1 - dt/tau`, `input_scale = r dt/tau`,
/// `leak = v_leak dt/tau`.
pub fn derive_decay(lif: &Lif, dt: f64) -> Result<LifParams, DecayError> {
    if !(dt > 0.0) {
        return Err(DecayError::InvalidDt);
    }
    if let Some(&tau) = lif.tau.values().iter().find(|&&t| t <= dt) {
        return Err(DecayError::TauTooSmall { tau, dt });
    }
    let n = [&lif.tau, &lif.r, &lif.v_leak]
        .iter()
        .map(|p| p.len())
        .max()
        .unwrap_or(1);
    let derive = |f: &dyn Fn(usize) -> f64| {
        if n == 1 {
            crate::graph::ParamVec::scalar(f(0))
        } else {
            crate::graph::ParamVec::per_neuron((0..n).map(f).collect())
        }
    };
    Ok(LifParams {
        alpha: derive(&|i| 1.0 - dt / lif.tau.get(i)),
        threshold: lif.threshold.clone(),
        input_scale: derive(&|i| lif.r.get(i) * dt / lif.tau.get(i)),
        leak: derive(&|i| lif.v_leak.get(i) * dt / lif.tau.get(i)),
    })
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("input spike train has {found} neurons, input population '{population}' has {expected}")]
    InputSize {
        population: String,
        expected: usize,
        found: usize,
    },
    #[error(transparent)]
    Placement(#[from] PartitionError),
    #[error("network: {0}")]
    Network(String),
    #[error("max_timesteps must be positive")]
    ZeroTimesteps,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    #[default]
    PlacedInt8,
    ReferenceDense,
}

impl Engine {
    pub fn name(self) -> &'static str {
        match self {
            Engine::PlacedInt8 => "placed_int8",
            Engine::ReferenceDense => "reference_dense",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResetOrder {
    #[default]
    IntegrateThenFire,
    /// Compare and reset the previous potential before integrating.
    FireThenIntegrate,
}

/// Storage precision of membrane state in the placed engine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub engine: Engine,
    /// Overrides the network's run length.
    pub max_timesteps: Option<usize>,
    pub reset: ResetOrder,
    pub precision: Precision,
    /// Populations to record spikes for; `None` uses the network flags.
    pub record: Option<Vec<String>>,
    /// Record post-update membrane potentials of every LIF population.
    pub record_voltage: bool,
    pub threads: Option<usize>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            engine: Engine::PlacedInt8,
            max_timesteps: None,
            reset: ResetOrder::IntegrateThenFire,
            precision: Precision::F32,
            record: None,
            record_voltage: false,
            threads: None,
        }
    }
}

impl RunOptions {
    pub fn engine(engine: Engine) -> Self {
        Self {
            engine,
            ..Self::default()
        }
    }
}

/// Spike delivery bookkeeping; `enqueued == drained + pending`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    /// Spikes emitted by all populations, input included.
    pub emitted: u64,
    /// Emitted spikes handed to the router.
    pub routed: u64,
    /// (spike, target PE) deliveries written into FIFOs.
    pub enqueued: u64,
    pub drained: u64,
    /// Deliveries still queued when the run ended.
    pub pending: u64,
    pub max_fifo_depth: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub class: usize,
    pub counts: Vec<usize>,
    pub no_spike: bool,
    pub tie: bool,
}

impl Prediction {
    /// Argmax with ties going to the lowest index.
    pub fn from_counts(counts: Vec<usize>) -> Self {
        let max = counts.iter().copied().max().unwrap_or(0);
        let class = counts.iter().position(|&c| c == max).unwrap_or(0);
        let tie = counts.iter().filter(|&&c| c == max).count() > 1;
        Self {
            class,
            no_spike: max == 0,
            tie,
            counts,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub wall_ms: f64,
    pub timesteps_per_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub engine: Engine,
    pub timesteps: usize,
    /// Recorded spike trains keyed by population id.
    pub spikes: BTreeMap<String, SpikeTrain>,
    /// Spikes emitted per timestep, for every population.
    pub counts_per_timestep: BTreeMap<String, Vec<u32>>,
    /// Total spikes per neuron, for every population.
    pub neuron_counts: BTreeMap<String, Vec<u32>>,
    /// Post-update membrane potentials, `[t][neuron]`, when requested.
    pub voltages: BTreeMap<String, Vec<Vec<f64>>>,
    pub prediction: Option<Prediction>,
    pub counters: Counters,
    pub timing: Timing,
}

impl RunResult {
    pub fn total_spikes(&self, population: &str) -> u64 {
        self.counts_per_timestep
            .get(population)
            .map_or(0, |c| c.iter().map(|&x| x as u64).sum())
    }

    pub fn frames(&self) -> usize {
        self.timesteps
    }
}

/// Energy extrapolated from the per-frame measurement: `frames x mj`.
pub fn estimate_energy(result: &RunResult, mj_per_frame: f64) -> f64 {
    energy_for_frames(result.frames(), mj_per_frame)
}

pub fn energy_for_frames(frames: usize, mj_per_frame: f64) -> f64 {
    frames as f64 * mj_per_frame
}

/// Shared per-run inputs resolved from a network and options.
pub(crate) struct Plan<'a> {
    pub net: &'a Network,
    pub timesteps: usize,
    pub input_index: usize,
    /// Input spikes grouped by timestep.
    pub input_by_t: Vec<Vec<u32>>,
    pub record: Vec<bool>,
    pub reset: ResetOrder,
    pub record_voltage: bool,
}

/// Per-population results assembled by an engine.
pub(crate) struct Raw {
    pub spikes: Vec<Vec<(u32, u32)>>,
    pub counts_per_t: Vec<Vec<u32>>,
    pub voltages: Vec<Vec<Vec<f64>>>,
    pub counters: Counters,
}

pub fn run(
    net: &Network,
    pl: &Placement,
    input: &SpikeTrain,
    opts: &RunOptions,
) -> Result<RunResult, SimError> {
    pl.check_against(net)?;
    execute(net, Some(pl), input, opts)
}

/// Runs the reference engine without a placement.
pub fn run_reference(
    net: &Network,
    input: &SpikeTrain,
    opts: &RunOptions,
) -> Result<RunResult, SimError> {
    let opts = RunOptions {
        engine: Engine::ReferenceDense,
        ..opts.clone()
    };
    execute(net, None, input, &opts)
}

fn execute(
    net: &Network,
    pl: Option<&Placement>,
    input: &SpikeTrain,
    opts: &RunOptions,
) -> Result<RunResult, SimError> {
    let timesteps = opts.max_timesteps.unwrap_or(net.max_timesteps);
    if timesteps == 0 {
        return Err(SimError::ZeroTimesteps);
    }
    crate::lowering::check_network(net).map_err(|e| SimError::Network(e.to_string()))?;
    let input_pop = net.input();
    if input.size() != input_pop.size {
        return Err(SimError::InputSize {
            population: input_pop.id.clone(),
            expected: input_pop.size,
            found: input.size(),
        });
    }
    let mut input_by_t = vec![Vec::new(); timesteps];
    for (n, t) in input.pairs() {
        if (t as usize) < timesteps {
            input_by_t[t as usize].push(n as u32);
        }
    }
    for v in &mut input_by_t {
        v.sort_unstable();
        v.dedup();
    }
    let record = net
        .populations
        .iter()
        .map(|p| match &opts.record {
            Some(ids) => ids.contains(&p.id),
            None => p.record_spikes,
        })
        .collect();
    let plan = Plan {
        net,
        timesteps,
        input_index: net.population_index(&input_pop.id).unwrap(),
        input_by_t,
        record,
        reset: opts.reset,
        record_voltage: opts.record_voltage,
    };

    let start = Instant::now();
    let raw = match (opts.engine, pl) {
        (Engine::PlacedInt8, Some(pl)) => {
            let go = || placed::run(&plan, pl, opts.precision);
            match opts.threads {
                Some(n) => rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(|e| SimError::Network(e.to_string()))?
                    .install(go),
                None => go(),
            }
        }
        (Engine::PlacedInt8, None) => {
            return Err(SimError::Network("the placed engine needs a placement".into()))
        }
        (Engine::ReferenceDense, _) => reference::run(&plan),
    };
    let elapsed = start.elapsed().as_secs_f64();
    Ok(assemble(&plan, opts.engine, raw, elapsed))
}

fn assemble(plan: &Plan, engine: Engine, raw: Raw, elapsed: f64) -> RunResult {
    let net = plan.net;
    let mut spikes = BTreeMap::new();
    let mut counts_per_timestep = BTreeMap::new();
    let mut neuron_counts = BTreeMap::new();
    let mut voltages = BTreeMap::new();
    let Raw {
        spikes: raw_spikes,
        counts_per_t,
        voltages: raw_v,
        counters,
    } = raw;
    for (((pop, pairs), per_t), v) in net
        .populations
        .iter()
        .zip(raw_spikes)
        .zip(counts_per_t)
        .zip(raw_v)
    {
        let mut per_neuron = vec![0u32; pop.size];
        for &(n, _) in &pairs {
            per_neuron[n as usize] += 1;
        }
        if plan.record[net.population_index(&pop.id).unwrap()] {
            let train = SpikeTrain::from_pairs(
                pop.size,
                plan.timesteps,
                pairs.iter().map(|&(n, t)| (n as usize, t)),
            )
            .expect("engine spikes are in range");
            spikes.insert(pop.id.clone(), train);
        }
        neuron_counts.insert(pop.id.clone(), per_neuron);
        counts_per_timestep.insert(pop.id.clone(), per_t);
        if plan.record_voltage && pop.lif.is_some() {
            voltages.insert(pop.id.clone(), v);
        }
    }
    let prediction = net.output.as_ref().map(|id| {
        Prediction::from_counts(neuron_counts[id].iter().map(|&c| c as usize).collect())
    });
    RunResult {
        engine,
        timesteps: plan.timesteps,
        spikes,
        counts_per_timestep,
        neuron_counts,
        voltages,
        prediction,
        counters,
        timing: Timing {
            wall_ms: elapsed * 1e3,
            timesteps_per_s: if elapsed > 0.0 {
                plan.timesteps as f64 / elapsed
            } else {
                0.0
            },
        },
    }
}

/// One LIF update; returns whether the neuron fired.
#[inline]
pub(crate) fn lif_update(
    v: &mut f64,
    acc: f64,
    alpha: f64,
    scale: f64,
    leak: f64,
    threshold: f64,
    reset: ResetOrder,
    round: impl Fn(f64) -> f64,
) -> bool {
    match reset {
        ResetOrder::IntegrateThenFire => {
            *v = round(alpha * *v + scale * acc + leak);
            if *v >= threshold {
                *v = round(*v - threshold);
                true
            } else {
                false
            }
        }
        ResetOrder::FireThenIntegrate => {
            let fired = *v >= threshold;
            if fired {
                *v = round(*v - threshold);
            }
            *v = round(alpha * *v + scale * acc + leak);
            fired
        }
    }
}

/// `population,neuron,timestep` rows in population order, then by
/// timestep and neuron.
pub fn write_spikes_csv(net: &Network, r: &RunResult, out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "population,neuron,timestep")?;
    for pop in &net.populations {
        let Some(train) = r.spikes.get(&pop.id) else {
            continue;
        };
        let mut pairs: Vec<(u32, usize)> = train.pairs().map(|(n, t)| (t, n)).collect();
        pairs.sort_unstable();
        for (t, n) in pairs {
            writeln!(out, "{},{},{}", pop.id, n, t)?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub engine: Engine,
    pub frames: usize,
    pub timestep_ms: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_population: Option<String>,
    pub class_counts: Vec<usize>,
    pub prediction: Option<usize>,
    pub no_spike: bool,
    pub tie: bool,
    pub energy_mj: f64,
    pub energy_note: String,
    pub total_spikes: BTreeMap<String, u64>,
    pub counters: Counters,
}

/// Deterministic run summary; wall-clock timing is kept in [`Timing`].
pub fn summarize(net: &Network, r: &RunResult, mj_per_frame: f64) -> Summary {
    let p = r.prediction.as_ref();
    Summary {
        engine: r.engine,
        frames: r.frames(),
        timestep_ms: net.timestep_ms,
        output_population: net.output.clone(),
        class_counts: p.map(|p| p.counts.clone()).unwrap_or_default(),
        prediction: p.map(|p| p.class),
        no_spike: p.is_none_or(|p| p.no_spike),
        tie: p.is_some_and(|p| p.tie),
        energy_mj: estimate_energy(r, mj_per_frame),
        energy_note: format!(
            "extrapolated: {} frames x {mj_per_frame} mJ per frame",
            r.frames()
        ),
        total_spikes: net
            .populations
            .iter()
            .map(|p| (p.id.clone(), r.total_spikes(&p.id)))
            .collect(),
        counters: r.counters,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decay_examples() {
        let p = derive_decay(&Lif::uniform(2.0, 2.0, 0.0, 1.0), 1.0).unwrap();
        assert_eq!(p.alpha.values(), &[0.5]);
        assert_eq!(p.input_scale.values(), &[1.0]);
        let p = derive_decay(&Lif::from_decay(0.93, 1.0), 1.0).unwrap();
        assert!((p.alpha.get(0) - 0.93).abs() < 1e-12);
        assert_eq!(p.input_scale.get(0), 1.0);
        let p = derive_decay(&Lif::uniform(1e12, 1e12, 0.0, 1.0), 1.0).unwrap();
        assert!((p.alpha.get(0) - 1.0).abs() < 1e-11);
    }

    #[test]
    fn decay_rejects_short_tau() {
        assert_eq!(
            derive_decay(&Lif::uniform(1.0, 1.0, 0.0, 1.0), 1.0),
            Err(DecayError::TauTooSmall { tau: 1.0, dt: 1.0 })
        );
    }

    #[test]
    fn energy_constants() {
        assert_eq!(energy_for_frames(600, MJ_PER_FRAME), 459.0);
        assert_eq!(energy_for_frames(1, MJ_PER_FRAME), 0.765);
        assert_eq!(energy_for_frames(0, MJ_PER_FRAME), 0.0);
    }

    #[test]
    fn prediction_ties() {
        let p = Prediction::from_counts(vec![0, 0, 0]);
        assert_eq!((p.class, p.no_spike, p.tie), (0, true, true));
        let p = Prediction::from_counts(vec![1, 3, 3]);
        assert_eq!((p.class, p.no_spike, p.tie), (1, false, true));
        let p = Prediction::from_counts(vec![4, 3]);
        assert_eq!((p.class, p.tie), (0, false));
    }

    #[test]
    fn double_threshold_input_spikes_twice() {
        let mut v = 0.0;
        let id = |x| x;
        assert!(lif_update(&mut v, 2.0, 1.0, 1.0, 0.0, 1.0, ResetOrder::IntegrateThenFire, id));
        assert_eq!(v, 1.0);
        assert!(lif_update(&mut v, 0.0, 1.0, 1.0, 0.0, 1.0, ResetOrder::IntegrateThenFire, id));
        assert_eq!(v, 0.0);
    }
}
