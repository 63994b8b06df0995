use log::warn;
use rayon::prelude::*;

use super::{lif_update, Counters, Plan, Precision, Raw};
use crate::lowering::WeightKind;
use crate::partitioner::Placement;

/// FIFO depth above which a high-water warning is logged once.
const FIFO_HIGH_WATER: usize = 1 << 20;

enum Weights {
    Int8(Vec<i8>),
    Real(Vec<f64>),
}

impl Weights {
    #[inline]
    fn get(&self, i: usize) -> f64 {
        match self {
            Weights::Int8(w) => w[i] as f64,
            Weights::Real(w) => w[i],
        }
    }
}

/// Synapses of one projection that land in a PE's slice, grouped by pre.
struct Csr {
    projection: usize,
    offsets: Vec<u32>,
    posts: Vec<u32>,
    weights: Weights,
}

struct Pe {
    population: usize,
    lo: usize,
    hi: usize,
    lif: Option<Neurons>,
    incoming: Vec<Csr>,
    fifo: Vec<(u32, u32)>,
}

struct Neurons {
    v: Vec<f64>,
    alpha: Vec<f64>,
    scale: Vec<f64>,
    leak: Vec<f64>,
    threshold: Vec<f64>,
}

fn build(plan: &Plan, pl: &Placement, round: fn(f64) -> f64) -> Vec<Pe> {
    let net = plan.net;
    pl.slices
        .iter()
        .map(|s| {
            let pi = net.population_index(&s.population).unwrap();
            let pop = &net.populations[pi];
            let (lo, hi) = (s.lo, s.hi);
            let lif = pop.lif.as_ref().map(|l| {
                let part = |p: &crate::graph::ParamVec| (lo..hi).map(|i| round(p.get(i))).collect();
                Neurons {
                    v: vec![0.0; hi - lo],
                    alpha: part(&l.alpha),
                    scale: part(&l.input_scale),
                    leak: part(&l.leak),
                    threshold: part(&l.threshold),
                }
            });
            let incoming = net
                .incoming(&pop.id)
                .map(|(j, proj)| {
                    let pre_size = net.population(&proj.pre).unwrap().size;
                    let mut offsets = vec![0u32; pre_size + 1];
                    let mut posts = Vec::new();
                    let mut ints = Vec::new();
                    let mut reals = Vec::new();
                    // synapses are sorted by (pre, post)
                    for syn in &proj.synapses {
                        let post = syn.post as usize;
                        if post < lo || post >= hi {
                            continue;
                        }
                        offsets[syn.pre as usize + 1] += 1;
                        posts.push((post - lo) as u32);
                        match proj.weight_kind {
                            WeightKind::Int8 => ints.push(syn.weight as i8),
                            WeightKind::Real => reals.push(syn.weight),
                        }
                    }
                    for i in 0..pre_size {
                        offsets[i + 1] += offsets[i];
                    }
                    Csr {
                        projection: j,
                        offsets,
                        posts,
                        weights: match proj.weight_kind {
                            WeightKind::Int8 => Weights::Int8(ints),
                            WeightKind::Real => Weights::Real(reals),
                        },
                    }
                })
                .collect();
            Pe {
                population: pi,
                lo,
                hi,
                lif,
                incoming,
                fifo: Vec::new(),
            }
        })
        .collect()
}

struct StepOut {
    fired: Vec<u32>,
    drained: u64,
    v: Option<Vec<f64>>,
}

fn step(pe: &mut Pe, plan: &Plan, t: usize, round: fn(f64) -> f64) -> StepOut {
    let Some(nrn) = &mut pe.lif else {
        let fired = if pe.population == plan.input_index {
            plan.input_by_t[t]
                .iter()
                .copied()
                .filter(|&n| (n as usize) >= pe.lo && (n as usize) < pe.hi)
                .collect()
        } else {
            Vec::new()
        };
        return StepOut {
            fired,
            drained: 0,
            v: None,
        };
    };
    let mut fifo = std::mem::take(&mut pe.fifo);
    fifo.sort_unstable();
    let mut acc = vec![0.0f64; pe.hi - pe.lo];
    for &(proj, pre) in &fifo {
        let csr = pe
            .incoming
            .iter()
            .find(|c| c.projection == proj as usize)
            .expect("spike routed to a PE without the projection");
        let (a, b) = (
            csr.offsets[pre as usize] as usize,
            csr.offsets[pre as usize + 1] as usize,
        );
        for k in a..b {
            let slot = &mut acc[csr.posts[k] as usize];
            *slot = round(*slot + csr.weights.get(k));
        }
    }
    let drained = fifo.len() as u64;
    fifo.clear();
    pe.fifo = fifo;

    let mut fired = Vec::new();
    for n in 0..acc.len() {
        if lif_update(
            &mut nrn.v[n],
            acc[n],
            nrn.alpha[n],
            nrn.scale[n],
            nrn.leak[n],
            nrn.threshold[n],
            plan.reset,
            round,
        ) {
            fired.push((pe.lo + n) as u32);
        }
    }
    StepOut {
        fired,
        drained,
        v: plan.record_voltage.then(|| nrn.v.clone()),
    }
}

fn round_f32(x: f64) -> f64 {
    x as f32 as f64
}

fn round_f64(x: f64) -> f64 {
    x
}

pub(super) fn run(plan: &Plan, pl: &Placement, precision: Precision) -> Raw {
    let net = plan.net;
    let round: fn(f64) -> f64 = match precision {
        Precision::F32 => round_f32,
        Precision::F64 => round_f64,
    };
    let mut pes = build(plan, pl, round);
    let n_pops = net.populations.len();

    // routes[projection][pre] = target PEs holding at least one synapse
    let mut routes: Vec<Vec<Vec<u32>>> = net
        .projections
        .iter()
        .map(|p| vec![Vec::new(); net.population(&p.pre).unwrap().size])
        .collect();
    for (pe_id, pe) in pes.iter().enumerate() {
        for csr in &pe.incoming {
            for (pre, w) in csr.offsets.windows(2).enumerate() {
                if w[1] > w[0] {
                    routes[csr.projection][pre].push(pe_id as u32);
                }
            }
        }
    }
    let outgoing: Vec<Vec<usize>> = net
        .populations
        .iter()
        .map(|p| net.outgoing(&p.id).map(|(j, _)| j).collect())
        .collect();

    let mut raw = Raw {
        spikes: vec![Vec::new(); n_pops],
        counts_per_t: vec![vec![0; plan.timesteps]; n_pops],
        voltages: vec![Vec::new(); n_pops],
        counters: Counters::default(),
    };
    let mut warned = false;
    for t in 0..plan.timesteps {
        let outs: Vec<StepOut> = pes.par_iter_mut().map(|pe| step(pe, plan, t, round)).collect();

        if plan.record_voltage {
            for pi in 0..n_pops {
                if net.populations[pi].lif.is_some() {
                    raw.voltages[pi].push(vec![0.0; net.populations[pi].size]);
                }
            }
        }
        // barrier: route everything emitted at t into FIFOs drained at t+1
        for (pe_id, out) in outs.into_iter().enumerate() {
            let pi = pes[pe_id].population;
            raw.counters.drained += out.drained;
            if let Some(v) = out.v {
                let lo = pes[pe_id].lo;
                raw.voltages[pi].last_mut().unwrap()[lo..lo + v.len()].copy_from_slice(&v);
            }
            raw.counters.emitted += out.fired.len() as u64;
            raw.counters.routed += out.fired.len() as u64;
            raw.counts_per_t[pi][t] += out.fired.len() as u32;
            for &n in &out.fired {
                raw.spikes[pi].push((n, t as u32));
                for &j in &outgoing[pi] {
                    for &target in &routes[j][n as usize] {
                        pes[target as usize].fifo.push((j as u32, n));
                        raw.counters.enqueued += 1;
                    }
                }
            }
        }
        for pe in &pes {
            let depth = pe.fifo.len();
            raw.counters.max_fifo_depth = raw.counters.max_fifo_depth.max(depth as u64);
            if depth > FIFO_HIGH_WATER && !warned {
                warn!("FIFO depth {depth} exceeds high-water mark at timestep {t}");
                warned = true;
            }
        }
    }
    raw.counters.pending = pes.iter().map(|p| p.fifo.len() as u64).sum();
    for s in &mut raw.spikes {
        s.sort_unstable_by_key(|&(n, t)| (t, n));
    }
    raw
}
