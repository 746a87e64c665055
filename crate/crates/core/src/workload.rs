//! DNN workloads as DAGs of dense matrix-multiply layers.
//!
//! A layer `(m, k, n)` multiplies an `m x k` LHS by a `k x n` RHS. An edge
//! `(i, j)` states that layer `j` depends on layer `i`.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    #[default]
    Fp32,
    Int32,
    Int8,
}

impl DType {
    /// Bytes per element on the wire and in DDR.
    pub fn bytes(self) -> usize {
        match self {
            DType::Fp32 | DType::Int32 => 4,
            DType::Int8 => 1,
        }
    }

    pub fn is_integer(self) -> bool {
        !matches!(self, DType::Fp32)
    }

    /// Element type of the layer result; int8 products accumulate in int32.
    pub fn output(self) -> DType {
        match self {
            DType::Int8 => DType::Int32,
            d => d,
        }
    }

    pub fn code(self) -> u32 {
        match self {
            DType::Fp32 => 0,
            DType::Int32 => 1,
            DType::Int8 => 2,
        }
    }

    pub fn from_code(code: u32) -> Option<DType> {
        match code {
            0 => Some(DType::Fp32),
            1 => Some(DType::Int32),
            2 => Some(DType::Int8),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerNode {
    pub id: usize,
    pub m: usize,
    pub k: usize,
    pub n: usize,
    #[serde(default)]
    pub dtype: DType,
    #[serde(default)]
    pub name: String,
}

impl LayerNode {
    pub fn new(id: usize, m: usize, k: usize, n: usize) -> Self {
        Self {
            id,
            m,
            k,
            n,
            dtype: DType::Fp32,
            name: format!("L{id}"),
        }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.m, self.k, self.n)
    }

    /// Multiply-accumulate count.
    pub fn ops(&self) -> u64 {
        self.m as u64 * self.k as u64 * self.n as u64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadDag {
    pub layers: Vec<LayerNode>,
    pub edges: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiversityProfile {
    pub total_ops: u64,
    pub diversity: f64,
}

impl WorkloadDag {
    /// Builds and validates a DAG. Layers are reordered by id.
    pub fn new(mut layers: Vec<LayerNode>, edges: Vec<(usize, usize)>) -> Result<Self> {
        layers.sort_by_key(|l| l.id);
        let mut edges: Vec<_> = edges
            .into_iter()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        edges.sort_unstable();
        let dag = Self { layers, edges };
        dag.validate()?;
        Ok(dag)
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Validation("workload has no layers".into()));
        }
        for (pos, l) in self.layers.iter().enumerate() {
            if l.id != pos {
                return Err(Error::Validation(format!(
                    "layer ids must be unique and contiguous from 0; found id {} at position {pos}",
                    l.id
                )));
            }
            if l.m == 0 || l.k == 0 || l.n == 0 {
                return Err(Error::Validation(format!(
                    "layer {} has a zero dimension ({}, {}, {})",
                    l.id, l.m, l.k, l.n
                )));
            }
        }
        let n = self.layers.len();
        for &(i, j) in &self.edges {
            for id in [i, j] {
                if id >= n {
                    return Err(Error::Validation(format!(
                        "edge ({i}, {j}) references unknown layer id {id}"
                    )));
                }
            }
            if i == j {
                return Err(Error::Validation(format!("self-edge on layer {i}")));
            }
        }
        if let Some(cycle) = self.find_cycle() {
            let path: Vec<String> = cycle.iter().map(|c| c.to_string()).collect();
            return Err(Error::Validation(format!(
                "dependency cycle: {}",
                path.join(" -> ")
            )));
        }
        Ok(())
    }

    fn find_cycle(&self) -> Option<Vec<usize>> {
        let succ = self.successors();
        // 0 = unvisited, 1 = on stack, 2 = done
        let mut state = vec![0u8; self.len()];
        let mut stack_path = Vec::new();
        fn dfs(
            v: usize,
            succ: &[Vec<usize>],
            state: &mut [u8],
            path: &mut Vec<usize>,
        ) -> Option<Vec<usize>> {
            state[v] = 1;
            path.push(v);
            for &w in &succ[v] {
                if state[w] == 1 {
                    let start = path.iter().position(|&p| p == w).unwrap();
                    let mut cyc = path[start..].to_vec();
                    cyc.push(w);
                    return Some(cyc);
                }
                if state[w] == 0 {
                    if let Some(c) = dfs(w, succ, state, path) {
                        return Some(c);
                    }
                }
            }
            path.pop();
            state[v] = 2;
            None
        }
        for v in 0..self.len() {
            if state[v] == 0 {
                if let Some(c) = dfs(v, &succ, &mut state, &mut stack_path) {
                    return Some(c);
                }
            }
        }
        None
    }

    pub fn predecessors(&self) -> Vec<Vec<usize>> {
        let mut p = vec![Vec::new(); self.len()];
        for &(i, j) in &self.edges {
            p[j].push(i);
        }
        p
    }

    pub fn successors(&self) -> Vec<Vec<usize>> {
        let mut s = vec![Vec::new(); self.len()];
        for &(i, j) in &self.edges {
            s[i].push(j);
        }
        s
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges.binary_search(&(i, j)).is_ok()
    }

    /// Kahn's algorithm, smallest ready id first.
    pub fn topological_order(&self) -> Vec<usize> {
        let succ = self.successors();
        let mut indeg = vec![0usize; self.len()];
        for &(_, j) in &self.edges {
            indeg[j] += 1;
        }
        let mut ready: BTreeSet<usize> = (0..self.len()).filter(|&v| indeg[v] == 0).collect();
        let mut order = Vec::with_capacity(self.len());
        while let Some(v) = ready.pop_first() {
            order.push(v);
            for &w in &succ[v] {
                indeg[w] -= 1;
                if indeg[w] == 0 {
                    ready.insert(w);
                }
            }
        }
        order
    }

    pub fn total_ops(&self) -> u64 {
        self.layers.iter().map(LayerNode::ops).sum()
    }

    pub fn to_json(&self) -> String {
        let doc = WorkloadFile::from(self);
        serde_json::to_string_pretty(&doc).expect("workload serializes")
    }
}

#[derive(Serialize, Deserialize)]
struct WorkloadFile {
    layers: Vec<LayerNode>,
    #[serde(default)]
    edges: Vec<[usize; 2]>,
}

impl From<&WorkloadDag> for WorkloadFile {
    fn from(d: &WorkloadDag) -> Self {
        Self {
            layers: d.layers.clone(),
            edges: d.edges.iter().map(|&(i, j)| [i, j]).collect(),
        }
    }
}

/// Parses a workload JSON document and validates the resulting DAG.
pub fn parse_workload(text: &str) -> Result<WorkloadDag> {
    let doc: WorkloadFile = serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        msg: e.to_string(),
    })?;
    WorkloadDag::new(
        doc.layers,
        doc.edges.into_iter().map(|[i, j]| (i, j)).collect(),
    )
}

/// Transformer encoder blocks as MM layers (softmax and norms are not modeled).
///
/// Per block: Q/K/V projections, per-head score and context MMs, output
/// projection, FFN up and down. Consecutive blocks chain through the FFN output.
pub fn gen_transformer(
    seq_len: usize,
    heads: usize,
    head_dim: usize,
    mlp_ratio: f64,
    blocks: usize,
) -> Result<WorkloadDag> {
    if seq_len == 0 || heads == 0 || head_dim == 0 || blocks == 0 {
        return Err(Error::Dimension(
            "transformer arguments must all be >= 1".into(),
        ));
    }
    if !(mlp_ratio > 0.0) || !mlp_ratio.is_finite() {
        return Err(Error::Dimension(format!(
            "mlp_ratio must be positive, got {mlp_ratio}"
        )));
    }
    let d = heads * head_dim;
    let hidden_f = mlp_ratio * d as f64;
    let hidden = hidden_f.round();
    if (hidden_f - hidden).abs() > 1e-9 || hidden < 1.0 {
        return Err(Error::Dimension(format!(
            "mlp_ratio * d = {hidden_f} is not a positive integer"
        )));
    }
    let hidden = hidden as usize;

    let mut layers = Vec::new();
    let mut edges = Vec::new();
    let push = |layers: &mut Vec<LayerNode>, m, k, n, name: String| {
        let id = layers.len();
        layers.push(LayerNode {
            id,
            m,
            k,
            n,
            dtype: DType::Fp32,
            name,
        });
        id
    };

    let mut prev: Option<usize> = None;
    for b in 0..blocks {
        let q = push(&mut layers, seq_len, d, d, format!("b{b}.q_proj"));
        let k = push(&mut layers, seq_len, d, d, format!("b{b}.k_proj"));
        let v = push(&mut layers, seq_len, d, d, format!("b{b}.v_proj"));
        if let Some(p) = prev {
            edges.extend([(p, q), (p, k), (p, v)]);
        }
        let mut ctx = Vec::with_capacity(heads);
        for h in 0..heads {
            let s = push(
                &mut layers,
                seq_len,
                head_dim,
                seq_len,
                format!("b{b}.h{h}.score"),
            );
            edges.extend([(q, s), (k, s)]);
            let c = push(
                &mut layers,
                seq_len,
                seq_len,
                head_dim,
                format!("b{b}.h{h}.context"),
            );
            edges.extend([(s, c), (v, c)]);
            ctx.push(c);
        }
        let o = push(&mut layers, seq_len, d, d, format!("b{b}.out_proj"));
        edges.extend(ctx.iter().map(|&c| (c, o)));
        let up = push(&mut layers, seq_len, d, hidden, format!("b{b}.ffn_up"));
        edges.push((o, up));
        let down = push(&mut layers, seq_len, hidden, d, format!("b{b}.ffn_down"));
        edges.push((up, down));
        prev = Some(down);
    }
    WorkloadDag::new(layers, edges)
}

/// Linear chain of MM layers; consecutive layers must satisfy `k[i+1] == n[i]`.
pub fn gen_mlp(layer_dims: &[(usize, usize, usize)]) -> Result<WorkloadDag> {
    if layer_dims.is_empty() {
        return Err(Error::Dimension("gen_mlp needs at least one layer".into()));
    }
    for (i, w) in layer_dims.windows(2).enumerate() {
        if w[1].1 != w[0].2 {
            return Err(Error::Dimension(format!(
                "layer {} has k = {} but layer {i} produces n = {}",
                i + 1,
                w[1].1,
                w[0].2
            )));
        }
    }
    let layers = layer_dims
        .iter()
        .enumerate()
        .map(|(i, &(m, k, n))| LayerNode {
            id: i,
            m,
            k,
            n,
            dtype: DType::Fp32,
            name: format!("fc{i}"),
        })
        .collect();
    let edges = (1..layer_dims.len()).map(|i| (i - 1, i)).collect();
    WorkloadDag::new(layers, edges)
}

/// Total MACs plus the mean coefficient of variation of M, K and N across layers.
pub fn diversity_profile(dag: &WorkloadDag) -> DiversityProfile {
    let cv = |vals: Vec<f64>| -> f64 {
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        var.sqrt() / mean
    };
    let dims = |f: fn(&LayerNode) -> usize| dag.layers.iter().map(|l| f(l) as f64).collect();
    let diversity = (cv(dims(|l| l.m)) + cv(dims(|l| l.k)) + cv(dims(|l| l.n))) / 3.0;
    DiversityProfile {
        total_ops: dag.total_ops(),
        diversity,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_chain() {
        let text = r#"{"layers":[{"id":0,"m":64,"k":64,"n":64,"dtype":"fp32","name":"a"},
                                 {"id":1,"m":64,"k":64,"n":64,"dtype":"fp32","name":"b"}],
                       "edges":[[0,1]]}"#;
        let dag = parse_workload(text).unwrap();
        assert_eq!(dag.edges, vec![(0, 1)]);
        assert_eq!(dag.len(), 2);
    }

    #[test]
    fn unknown_edge_target() {
        let text = r#"{"layers":[{"id":0,"m":1,"k":1,"n":1}],"edges":[[0,9]]}"#;
        let err = parse_workload(text).unwrap_err();
        assert!(
            matches!(err, Error::Validation(ref m) if m.contains('9')),
            "{err}"
        );
    }

    #[test]
    fn diamond_without_join() {
        let text = r#"{"layers":[{"id":0,"m":8,"k":8,"n":8},{"id":1,"m":8,"k":8,"n":8},
                                 {"id":2,"m":8,"k":8,"n":8}],"edges":[[0,1],[0,2]]}"#;
        let dag = parse_workload(text).unwrap();
        assert_eq!(dag.edges, vec![(0, 1), (0, 2)]);
        assert_eq!(dag.predecessors()[1], vec![0]);
        assert_eq!(dag.predecessors()[2], vec![0]);
        assert!(dag.predecessors()[0].is_empty());
    }

    #[test]
    fn cycle_is_named() {
        let text = r#"{"layers":[{"id":0,"m":1,"k":1,"n":1},{"id":1,"m":1,"k":1,"n":1},
                                 {"id":2,"m":1,"k":1,"n":1}],"edges":[[0,1],[1,2],[2,0]]}"#;
        match parse_workload(text) {
            Err(Error::Validation(msg)) => assert!(msg.contains("0 -> 1 -> 2 -> 0"), "{msg}"),
            other => panic!("expected cycle error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_json_reports_line() {
        let text = "{\n \"layers\": [\n  {\"id\": 0, \"m\": }\n ]}";
        match parse_workload(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bert32_ffn_up_dims() {
        let dag = gen_transformer(32, 12, 64, 4.0, 1).unwrap();
        let up = dag
            .layers
            .iter()
            .find(|l| l.name.ends_with("ffn_up"))
            .unwrap();
        assert_eq!(up.dims(), (32, 768, 3072));
        assert_eq!(dag.len(), 3 + 2 * 12 + 3);
    }

    #[test]
    fn degenerate_sequence() {
        let dag = gen_transformer(1, 1, 8, 1.0, 1).unwrap();
        assert!(dag.layers.iter().all(|l| l.m == 1));
        dag.validate().unwrap();
    }

    #[test]
    fn score_layer_dims() {
        let dag = gen_transformer(128, 2, 64, 2.0, 1).unwrap();
        let s = dag
            .layers
            .iter()
            .find(|l| l.name.ends_with("score"))
            .unwrap();
        assert_eq!(s.dims(), (128, 64, 128));
    }

    #[test]
    fn non_integer_hidden() {
        assert!(matches!(
            gen_transformer(4, 1, 3, 0.5, 1),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn mlp_identical_layers_have_zero_diversity() {
        let dag = gen_mlp(&[(4096, 4096, 4096); 4]).unwrap();
        assert_eq!(diversity_profile(&dag).diversity, 0.0);
    }

    #[test]
    fn mlp_chain_mismatch() {
        assert!(matches!(
            gen_mlp(&[(8, 8, 16), (8, 8, 8)]),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn mlp_two_layer_diversity() {
        // Independent arithmetic: M and K are constant (cv 0); N = {256, 1024}
        // has mean 640 and population std 384, cv = 0.6.
        let dag = gen_mlp(&[(256, 256, 256), (256, 256, 1024)]).unwrap();
        let p = diversity_profile(&dag);
        assert!((p.diversity - 0.6 / 3.0).abs() < 1e-12);
        assert_eq!(p.total_ops, 256 * 256 * 256 + 256 * 256 * 1024);
    }

    #[test]
    fn bert32_total_ops_matches_sum() {
        let dag = gen_transformer(32, 12, 64, 4.0, 1).unwrap();
        // 4 projections of 32x768x768, 12 heads x 2 x (32*64*32), up+down 32x768x3072.
        let expected: u64 = 4 * 32 * 768 * 768 + 12 * 2 * 32 * 64 * 32 + 2 * 32 * 768 * 3072;
        assert_eq!(diversity_profile(&dag).total_ops, expected);
    }
}
