use std::collections::BTreeMap;

use flexmm::explore::{enumerate_modes, layer_frontier};
use flexmm::workload::LayerNode;
use flexmm::HardwareConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Pareto set over `(f, c, e)` computed directly from the full enumeration.
fn pareto_oracle(layer: &LayerNode, hw: &HardwareConfig) -> Vec<(usize, usize, f64)> {
    let all = enumerate_modes(layer, hw).unwrap();
    let mut best: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for m in &all {
        let e = best.entry((m.fmu_used, m.cu_used)).or_insert(f64::INFINITY);
        *e = e.min(m.latency);
    }
    let pts: Vec<(usize, usize, f64)> = best.into_iter().map(|((f, c), e)| (f, c, e)).collect();
    pts.iter()
        .copied()
        .filter(|&(f, c, e)| {
            !pts.iter()
                .any(|&(f2, c2, e2)| f2 <= f && c2 <= c && e2 <= e && (f2, c2, e2) != (f, c, e))
        })
        .collect()
}

#[test]
fn frontier_matches_full_enumeration() {
    let hw = HardwareConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..8 {
        let layer = LayerNode::new(
            0,
            rng.gen_range(1..250),
            rng.gen_range(1..250),
            rng.gen_range(1..250),
        );
        let got: Vec<(usize, usize, f64)> = layer_frontier(&layer, &hw)
            .unwrap()
            .iter()
            .map(|m| (m.fmu_used, m.cu_used, m.latency))
            .collect();
        assert_eq!(got, pareto_oracle(&layer, &hw), "{:?}", layer.dims());
    }
}
