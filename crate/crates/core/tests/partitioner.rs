use proptest::prelude::*;

use neurodeploy_core::fixtures::{psnn_graph, psnn_overrides, random_dense_chain, PSNN_SEED};
use neurodeploy_core::partitioner::{
    memory_report, range_ledger, write_placement_csv, PartitionError, CHIP_PES,
};
use neurodeploy_core::{lower, partition, ptq_quantize_graph, Network, PartitionOverrides, PeModel, PtqConfig};

fn psnn_net() -> Network {
    let q = ptq_quantize_graph(&psnn_graph(PSNN_SEED), &PtqConfig::default()).unwrap();
    lower(&q, 600).unwrap()
}

#[test]
fn psnn_ledger_rows() {
    let net = psnn_net();
    let pl = partition(&net, &PeModel::default(), &psnn_overrides(), CHIP_PES).unwrap();

    // LIF(10): incoming composed pool+linear map, brute-force entry count
    let proj = net.incoming("10").next().unwrap().1;
    let dense = proj.to_dense(392, 256);
    let first16: usize = dense[..16].iter().map(|r| r.iter().filter(|&&w| w != 0.0).count()).sum();
    let s = pl.slices_of("10").next().unwrap();
    assert_eq!(s.len(), 16);
    assert_eq!(s.ledger.synapses, first16 * 6);
    // each LIF(10) neuron sees 72 pooled values of 4 pixels each; weights
    // that quantize to zero carry no entry
    assert!(first16 <= 16 * 72 * 4 && first16 > 16 * 72 * 4 * 9 / 10);
    assert_eq!(s.ledger.state, 16 * 16);
    assert_eq!(s.ledger.recording, 16 * 75);
    assert_eq!(s.ledger.fifo, 8192);

    // LIF(1): shared 16x2x5x5 kernel
    let s = pl.slices_of("1").next().unwrap();
    assert_eq!((s.lo, s.hi), (0, 900));
    assert_eq!(s.ledger.synapses, 800);
    assert_eq!(s.ledger.total(), 900 * 16 + 800 + 900 * 75 + 8192);

    let report = memory_report(&pl);
    assert_eq!(report.len(), 147);
    assert!(report.iter().all(|(_, l)| l.total() <= 98304));
}

#[test]
fn psnn_without_overrides_exceeds_memory() {
    let err = partition(&psnn_net(), &PeModel::default(), &PartitionOverrides::new(), CHIP_PES)
        .unwrap_err();
    match err {
        PartitionError::MemoryExceeded { population, slice, max_fit, total, usable, .. } => {
            assert_eq!(population, "1");
            assert_eq!(slice, 1024);
            assert!(total > usable);
            // max_fit is the largest slice the ledger accepts
            let net = psnn_net();
            let m = PeModel::default();
            assert!(range_ledger(&net, &m, "1", 0, max_fit).unwrap().total() <= usable);
            assert!(range_ledger(&net, &m, "1", 0, max_fit + 1).unwrap().total() > usable);
        }
        e => panic!("unexpected {e}"),
    }
}

#[test]
fn placement_csv_and_json() {
    let pl = partition(&psnn_net(), &PeModel::default(), &psnn_overrides(), CHIP_PES).unwrap();
    let mut out = Vec::new();
    write_placement_csv(&pl, &mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert_eq!(text.lines().count(), 148);
    assert!(text.lines().nth(1).unwrap().starts_with("0,input,0,17,"));
    let back = neurodeploy_core::Placement::from_json(&pl.to_json()).unwrap();
    assert_eq!(back, pl);
}

fn chain(sizes: &[usize]) -> Network {
    lower(&random_dense_chain(1, sizes, 0.5, 0.9, 1.0), 100).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn slices_cover_populations(sizes in prop::collection::vec(1usize..600, 2..5), limit in 1usize..250) {
        let net = chain(&sizes);
        let mut ov = PartitionOverrides::new();
        ov = ov.with(net.populations[1].id.clone(), limit);
        let Ok(pl) = partition(&net, &PeModel::default(), &ov, 10_000) else {
            return Ok(());
        };
        pl.check_against(&net).unwrap();
        for pop in &net.populations {
            let slices: Vec<_> = pl.slices_of(&pop.id).collect();
            let cap = if pop.id == net.populations[1].id { limit } else { PeModel::default().cap(pop.kind) };
            prop_assert_eq!(slices.len(), pop.size.div_ceil(cap));
            prop_assert!(slices.iter().all(|s| s.len() <= cap));
        }
        let pes: Vec<usize> = pl.slices.iter().map(|s| s.pe).collect();
        prop_assert_eq!(pes, (0..pl.slices.len()).collect::<Vec<_>>());
        prop_assert!(pl.violations().is_empty());
        // deterministic
        prop_assert_eq!(partition(&net, &PeModel::default(), &ov, 10_000).unwrap(), pl);
    }

    #[test]
    fn smaller_override_never_uses_fewer_pes(size in 1usize..2000, a in 1usize..250, b in 1usize..250) {
        let net = chain(&[4, size]);
        let id = net.populations[1].id.clone();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let m = PeModel::default();
        let p_lo = partition(&net, &m, &PartitionOverrides::new().with(id.clone(), lo), 100_000);
        let p_hi = partition(&net, &m, &PartitionOverrides::new().with(id, hi), 100_000);
        if let (Ok(p_lo), Ok(p_hi)) = (p_lo, p_hi) {
            prop_assert!(p_lo.pes_used() >= p_hi.pes_used());
        }
    }
}
