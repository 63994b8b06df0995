//! Placement of population slices onto processing elements (PEs).
//!
//! Each population is cut into contiguous slices of at most `limit` neurons
//! (`limit = min(kind cap, override)`), the last slice taking the
//! remainder. Slices get one PE each, in population order. Every slice is
//! charged against the PE's usable SRAM through a per-category ledger.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lowering::{Network, PopulationKind};

/// Number of PEs on one chip.
pub const CHIP_PES: usize = 152;

#[derive(Debug, Error, PartialEq)]
pub enum PartitionError {
    #[error("override for unknown population '{0}'")]
    UnknownPopulation(String),
    #[error("override {value} for population '{population}' must be in 1..={cap}")]
    InvalidOverride {
        population: String,
        value: usize,
        cap: usize,
    },
    #[error("placement needs {needed} PEs but only {available} are available")]
    InsufficientPes { needed: usize, available: usize },
    #[error(
        "population '{population}' slice of {slice} neurons needs {total} of {usable} bytes \
         (largest category: {binding}); at most {max_fit} neurons per PE fit"
    )]
    MemoryExceeded {
        population: String,
        slice: usize,
        total: usize,
        usable: usize,
        binding: &'static str,
        max_fit: usize,
    },
    #[error("placement does not match network: {0}")]
    Mismatch(String),
}

pub type Result<T, E = PartitionError> = std::result::Result<T, E>;

/// Byte costs charged per PE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryModel {
    /// Per neuron: v, alpha, threshold and scratch as four f32.
    pub state_bytes: usize,
    /// Per explicit synapse: u32 pre index, i8 weight, u8 metadata.
    pub synapse_entry_bytes: usize,
    /// Per shared convolution kernel element (int8).
    pub kernel_entry_bytes: usize,
    /// Fixed spike FIFO reservation per PE.
    pub fifo_bytes: usize,
}

impl Default for MemoryModel {
    fn default() -> Self {
        Self {
            state_bytes: 16,
            synapse_entry_bytes: 6,
            kernel_entry_bytes: 1,
            fifo_bytes: 8 * 1024,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeModel {
    pub bank_bytes: usize,
    pub banks: usize,
    pub reserved_banks: usize,
    pub cap_conv: usize,
    pub cap_neuron: usize,
    pub cap_spike_list: usize,
    pub memory: MemoryModel,
}

impl Default for PeModel {
    fn default() -> Self {
        Self {
            bank_bytes: 32 * 1024,
            banks: 4,
            reserved_banks: 1,
            cap_conv: 1024,
            cap_neuron: 250,
            cap_spike_list: 500,
            memory: MemoryModel::default(),
        }
    }
}

impl PeModel {
    pub fn sram_bytes(&self) -> usize {
        self.banks * self.bank_bytes
    }

    pub fn usable_bytes(&self) -> usize {
        (self.banks - self.reserved_banks) * self.bank_bytes
    }

    pub fn cap(&self, kind: PopulationKind) -> usize {
        match kind {
            PopulationKind::SpikeListInput => self.cap_spike_list,
            PopulationKind::LifConv2d => self.cap_conv,
            PopulationKind::LifNeuron => self.cap_neuron,
        }
    }
}

/// Manual per-population limits on neurons per PE.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PartitionOverrides(pub BTreeMap<String, usize>);

impl PartitionOverrides {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, population: impl Into<String>, max_neurons: usize) -> Self {
        self.0.insert(population.into(), max_neurons);
        self
    }

    pub fn get(&self, population: &str) -> Option<usize> {
        self.0.get(population).copied()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ledger {
    pub state: usize,
    pub synapses: usize,
    pub recording: usize,
    pub fifo: usize,
}

impl Ledger {
    pub fn total(&self) -> usize {
        self.state + self.synapses + self.recording + self.fifo
    }

    /// Name of the largest category.
    pub fn binding(&self) -> &'static str {
        let cats = [
            ("neuron_state", self.state),
            ("synapses", self.synapses),
            ("spike_recording", self.recording),
            ("fifo", self.fifo),
        ];
        cats.iter().max_by_key(|c| c.1).map(|c| c.0).unwrap()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slice {
    pub pe: usize,
    pub population: String,
    pub lo: usize,
    pub hi: usize,
    pub ledger: Ledger,
}

impl Slice {
    pub fn len(&self) -> usize {
        self.hi - self.lo
    }

    pub fn is_empty(&self) -> bool {
        self.hi == self.lo
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub chip_pes: usize,
    pub usable_bytes: usize,
    pub max_timesteps: usize,
    /// One entry per used PE, ordered by PE id.
    pub slices: Vec<Slice>,
}

impl Placement {
    pub fn pes_used(&self) -> usize {
        self.slices.len()
    }

    pub fn slices_of<'a>(&'a self, population: &'a str) -> impl Iterator<Item = &'a Slice> + 'a {
        self.slices.iter().filter(move |s| s.population == population)
    }

    pub fn violations(&self) -> Vec<&Slice> {
        self.slices
            .iter()
            .filter(|s| s.ledger.total() > self.usable_bytes)
            .collect()
    }

    /// Checks that every population of `net` is covered exactly once.
    pub fn check_against(&self, net: &Network) -> Result<()> {
        for pop in &net.populations {
            let mut next = 0;
            for s in self.slices_of(&pop.id) {
                if s.lo != next || s.hi <= s.lo {
                    return Err(PartitionError::Mismatch(format!(
                        "slices of '{}' are not contiguous from 0",
                        pop.id
                    )));
                }
                next = s.hi;
            }
            if next != pop.size {
                return Err(PartitionError::Mismatch(format!(
                    "slices of '{}' cover {next} of {} neurons",
                    pop.id, pop.size
                )));
            }
        }
        if let Some(s) = self
            .slices
            .iter()
            .find(|s| net.population(&s.population).is_none())
        {
            return Err(PartitionError::Mismatch(format!(
                "slice for unknown population '{}'",
                s.population
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("placement serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Per-population incoming synapse counts by post neuron, plus shared
/// kernel sizes for convolutional populations.
struct FanIn {
    per_neuron: Vec<usize>,
    kernel_elems: usize,
}

fn fan_in(net: &Network) -> BTreeMap<String, FanIn> {
    net.populations
        .iter()
        .map(|p| {
            let mut f = FanIn {
                per_neuron: vec![0; p.size],
                kernel_elems: 0,
            };
            for (_, proj) in net.incoming(&p.id) {
                match proj.kernel_params {
                    Some(k) if p.kind == PopulationKind::LifConv2d => f.kernel_elems += k,
                    _ => {
                        for s in &proj.synapses {
                            f.per_neuron[s.post as usize] += 1;
                        }
                    }
                }
            }
            (p.id.clone(), f)
        })
        .collect()
}

fn bitmap_bytes(neurons: usize, timesteps: usize) -> usize {
    neurons * timesteps.div_ceil(8)
}

fn slice_ledger(
    kind: PopulationKind,
    fan: &FanIn,
    lo: usize,
    hi: usize,
    model: &PeModel,
    timesteps: usize,
) -> Ledger {
    if hi == lo {
        return Ledger::default();
    }
    let n = hi - lo;
    let mem = &model.memory;
    let state = match kind {
        // spike-list sources keep their input spikes instead of a membrane
        PopulationKind::SpikeListInput => bitmap_bytes(n, timesteps),
        _ => n * mem.state_bytes,
    };
    let entries: usize = fan.per_neuron[lo..hi].iter().sum();
    Ledger {
        state,
        synapses: entries * mem.synapse_entry_bytes + fan.kernel_elems * mem.kernel_entry_bytes,
        recording: bitmap_bytes(n, timesteps),
        fifo: mem.fifo_bytes,
    }
}

pub fn partition(
    net: &Network,
    model: &PeModel,
    overrides: &PartitionOverrides,
    chip_pes: usize,
) -> Result<Placement> {
    for (id, &value) in &overrides.0 {
        let pop = net
            .population(id)
            .ok_or_else(|| PartitionError::UnknownPopulation(id.clone()))?;
        let cap = model.cap(pop.kind);
        if value == 0 || value > cap {
            return Err(PartitionError::InvalidOverride {
                population: id.clone(),
                value,
                cap,
            });
        }
    }
    let usable = model.usable_bytes();
    let timesteps = net.max_timesteps;
    let fans = fan_in(net);
    let mut slices = Vec::new();
    for pop in &net.populations {
        let limit = overrides
            .get(&pop.id)
            .unwrap_or(usize::MAX)
            .min(model.cap(pop.kind));
        let fan = &fans[&pop.id];
        let mut lo = 0;
        while lo < pop.size {
            let hi = (lo + limit).min(pop.size);
            let ledger = slice_ledger(pop.kind, fan, lo, hi, model, timesteps);
            if ledger.total() > usable {
                let max_fit = (1..hi - lo)
                    .rev()
                    .find(|&n| {
                        slice_ledger(pop.kind, fan, lo, lo + n, model, timesteps).total() <= usable
                    })
                    .unwrap_or(0);
                return Err(PartitionError::MemoryExceeded {
                    population: pop.id.clone(),
                    slice: hi - lo,
                    total: ledger.total(),
                    usable,
                    binding: ledger.binding(),
                    max_fit,
                });
            }
            slices.push(Slice {
                pe: slices.len(),
                population: pop.id.clone(),
                lo,
                hi,
                ledger,
            });
            lo = hi;
        }
    }
    if slices.len() > chip_pes {
        return Err(PartitionError::InsufficientPes {
            needed: slices.len(),
            available: chip_pes,
        });
    }
    Ok(Placement {
        chip_pes,
        usable_bytes: usable,
        max_timesteps: timesteps,
        slices,
    })
}

/// Ledger of an arbitrary neuron range, e.g. for what-if queries.
pub fn range_ledger(
    net: &Network,
    model: &PeModel,
    population: &str,
    lo: usize,
    hi: usize,
) -> Option<Ledger> {
    let pop = net.population(population)?;
    if lo > hi || hi > pop.size {
        return None;
    }
    let fans = fan_in(net);
    Some(slice_ledger(pop.kind, &fans[population], lo, hi, model, net.max_timesteps))
}

/// Per-PE memory table, one row per used PE.
pub fn memory_report(pl: &Placement) -> Vec<(usize, Ledger)> {
    pl.slices.iter().map(|s| (s.pe, s.ledger)).collect()
}

pub fn write_placement_csv(pl: &Placement, out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "pe,population,lo,hi,state_B,syn_B,rec_B,total_B")?;
    for s in &pl.slices {
        let l = &s.ledger;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            s.pe,
            s.population,
            s.lo,
            s.hi,
            l.state,
            l.synapses,
            l.recording,
            l.total()
        )?;
    }
    Ok(())
}
