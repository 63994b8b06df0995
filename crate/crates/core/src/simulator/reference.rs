use super::{lif_update, Counters, Plan, Raw};

struct Dense {
    pre: usize,
    post: usize,
    post_size: usize,
    /// Pre-major: column `pre` is `m[pre * post_size..][..post_size]`.
    m: Vec<f64>,
}

struct LifState {
    v: Vec<f64>,
    alpha: Vec<f64>,
    scale: Vec<f64>,
    leak: Vec<f64>,
    threshold: Vec<f64>,
}

pub(super) fn run(plan: &Plan) -> Raw {
    let net = plan.net;
    let n_pops = net.populations.len();
    let dense: Vec<Dense> = net
        .projections
        .iter()
        .map(|proj| {
            let pre = net.population_index(&proj.pre).unwrap();
            let post = net.population_index(&proj.post).unwrap();
            let post_size = net.populations[post].size;
            let mut m = vec![0.0; net.populations[pre].size * post_size];
            for s in &proj.synapses {
                m[s.pre as usize * post_size + s.post as usize] = s.weight;
            }
            Dense {
                pre,
                post,
                post_size,
                m,
            }
        })
        .collect();
    let mut states: Vec<Option<LifState>> = net
        .populations
        .iter()
        .map(|p| {
            p.lif.as_ref().map(|l| LifState {
                v: vec![0.0; p.size],
                alpha: l.alpha.expand(p.size),
                scale: l.input_scale.expand(p.size),
                leak: l.leak.expand(p.size),
                threshold: l.threshold.expand(p.size),
            })
        })
        .collect();
    let fanout: Vec<u64> = (0..n_pops)
        .map(|i| dense.iter().filter(|d| d.pre == i).count() as u64)
        .collect();

    let mut raw = Raw {
        spikes: vec![Vec::new(); n_pops],
        counts_per_t: vec![vec![0; plan.timesteps]; n_pops],
        voltages: vec![Vec::new(); n_pops],
        counters: Counters::default(),
    };
    let mut prev: Vec<Vec<u32>> = vec![Vec::new(); n_pops];
    for t in 0..plan.timesteps {
        let mut fired: Vec<Vec<u32>> = vec![Vec::new(); n_pops];
        for (pi, state) in states.iter_mut().enumerate() {
            let Some(st) = state else {
                if pi == plan.input_index {
                    fired[pi] = plan.input_by_t[t].clone();
                }
                continue;
            };
            let size = st.v.len();
            let mut acc = vec![0.0f64; size];
            for d in dense.iter().filter(|d| d.post == pi) {
                for &pre in &prev[d.pre] {
                    let col = &d.m[pre as usize * d.post_size..][..d.post_size];
                    for (a, &w) in acc.iter_mut().zip(col) {
                        if w != 0.0 {
                            *a += w;
                        }
                    }
                }
                raw.counters.drained += prev[d.pre].len() as u64;
            }
            for n in 0..size {
                if lif_update(
                    &mut st.v[n],
                    acc[n],
                    st.alpha[n],
                    st.scale[n],
                    st.leak[n],
                    st.threshold[n],
                    plan.reset,
                    |x| x,
                ) {
                    fired[pi].push(n as u32);
                }
            }
            if plan.record_voltage {
                raw.voltages[pi].push(st.v.clone());
            }
        }
        for (pi, f) in fired.iter().enumerate() {
            let n = f.len() as u64;
            raw.counters.emitted += n;
            raw.counters.routed += n;
            raw.counters.enqueued += n * fanout[pi];
            raw.counts_per_t[pi][t] = f.len() as u32;
            raw.spikes[pi].extend(f.iter().map(|&x| (x, t as u32)));
        }
        prev = fired;
    }
    raw.counters.pending = prev
        .iter()
        .enumerate()
        .map(|(pi, f)| f.len() as u64 * fanout[pi])
        .sum();
    raw.counters.max_fifo_depth = 0;
    raw
}
