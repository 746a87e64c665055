//! Depth-first branch-and-bound for the multi-mode schedule.
//!
//! Nodes extend a partial schedule by one `(layer, mode)` placed at its earliest feasible
//! start. Starts are kept non-decreasing along a branch (equal starts in increasing layer
//! order), which still reaches every active schedule, and an optimal schedule is always
//! among those. Dominated modes (no fewer resources and no shorter latency than another
//! mode of the same layer) are dropped up front.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use super::ga::{run_ga, GaParams};
use super::milp::MilpModel;
use super::{assemble, ModeCost, Problem, Profile, Schedule};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExactStats {
    pub nodes: u64,
    pub elapsed: Duration,
    pub timed_out: bool,
    pub root_bound: u64,
}

struct Search<'a> {
    p: &'a Problem,
    /// Non-dominated modes per layer as `(mode index, cost)`, shortest first.
    modes: Vec<Vec<(usize, ModeCost)>>,
    min_e: Vec<u64>,
    min_fe: Vec<u128>,
    min_ce: Vec<u128>,
    tail: Vec<u64>,
    topo: Vec<usize>,
    best: u64,
    best_modes: Vec<usize>,
    best_starts: Vec<u64>,
    nodes: u64,
    deadline: Instant,
    timed_out: bool,
    seen: HashMap<u128, Vec<Frontier>>,
    stored: usize,
}

/// What a partial schedule leaves for its completions: release time, busy profile from
/// then on, and the end times of layers that still have unplaced successors.
struct Frontier {
    t0: u64,
    last_id: usize,
    residual: Vec<(u64, usize, usize)>,
    ends: Vec<u64>,
}

const MEMO_PER_SET: usize = 48;
const MEMO_TOTAL: usize = 1 << 21;

/// `a(t) <= b(t)` in both resources for every `t >= from`.
fn profile_le(a: &[(u64, usize, usize)], b: &[(u64, usize, usize)], from: u64) -> bool {
    let at = |p: &[(u64, usize, usize)], t: u64| {
        let i = p.partition_point(|s| s.0 <= t);
        if i == 0 {
            (0, 0)
        } else {
            (p[i - 1].1, p[i - 1].2)
        }
    };
    let mut points: Vec<u64> = vec![from];
    points.extend(a.iter().chain(b).map(|s| s.0).filter(|&t| t > from));
    points.iter().all(|&t| {
        let (af, ac) = at(a, t);
        let (bf, bc) = at(b, t);
        af <= bf && ac <= bc
    })
}

#[derive(Clone)]
struct Node {
    placed: Vec<bool>,
    waiting: Vec<usize>,
    start: Vec<u64>,
    end: Vec<u64>,
    mode: Vec<usize>,
    prof: Profile,
    last_start: u64,
    last_id: usize,
    count: usize,
    makespan: u64,
    rem_fe: u128,
    rem_ce: u128,
}

fn nondominated(modes: &[ModeCost]) -> Vec<(usize, ModeCost)> {
    let mut keep: Vec<(usize, ModeCost)> = Vec::new();
    for (k, &m) in modes.iter().enumerate() {
        let dominated = modes.iter().enumerate().any(|(k2, &o)| {
            let weakly = o.f <= m.f && o.c <= m.c && o.e <= m.e;
            weakly && (o != m || k2 < k)
        });
        if !dominated {
            keep.push((k, m));
        }
    }
    keep.sort_by_key(|&(k, m)| (m.e, k));
    keep
}

impl<'a> Search<'a> {
    fn new(p: &'a Problem, deadline: Instant) -> Self {
        let modes: Vec<_> = p.modes.iter().map(|m| nondominated(m)).collect();
        let min_e: Vec<u64> = modes
            .iter()
            .map(|m| m.iter().map(|x| x.1.e).min().unwrap())
            .collect();
        let min_fe = modes
            .iter()
            .map(|m| {
                m.iter()
                    .map(|x| x.1.f as u128 * x.1.e as u128)
                    .min()
                    .unwrap()
            })
            .collect();
        let min_ce = modes
            .iter()
            .map(|m| {
                m.iter()
                    .map(|x| x.1.c as u128 * x.1.e as u128)
                    .min()
                    .unwrap()
            })
            .collect();
        let topo = topo_order(p);
        let mut tail = vec![0u64; p.n];
        for &j in topo.iter().rev() {
            tail[j] = p.succs[j]
                .iter()
                .map(|&s| min_e[s] + tail[s])
                .max()
                .unwrap_or(0);
        }
        Self {
            p,
            modes,
            min_e,
            min_fe,
            min_ce,
            tail,
            topo,
            best: u64::MAX,
            best_modes: Vec::new(),
            best_starts: Vec::new(),
            nodes: 0,
            deadline,
            timed_out: false,
            seen: HashMap::new(),
            stored: 0,
        }
    }

    fn frontier(&self, node: &Node) -> Frontier {
        let t0 = node.last_start;
        let segs = node.prof.segments();
        let i = segs.partition_point(|s| s.0 <= t0) - 1;
        let mut residual = segs[i..].to_vec();
        residual[0].0 = t0;
        let ends = (0..self.p.n)
            .filter(|&j| node.placed[j] && self.p.succs[j].iter().any(|&s| !node.placed[s]))
            .map(|j| node.end[j].max(t0))
            .collect();
        Frontier {
            t0,
            last_id: node.last_id,
            residual,
            ends,
        }
    }

    /// True when an earlier node with the same placed set admits every completion of
    /// `node`; otherwise records `node`.
    fn dominated(&mut self, node: &Node) -> bool {
        if self.p.n > 128 || node.count == 0 || node.count == self.p.n {
            return false;
        }
        let key = node
            .placed
            .iter()
            .enumerate()
            .fold(0u128, |k, (j, &b)| if b { k | (1 << j) } else { k });
        let f = self.frontier(node);
        let list = self.seen.entry(key).or_default();
        let hit = list.iter().any(|a| {
            (a.t0 < f.t0 || (a.t0 == f.t0 && a.last_id <= f.last_id))
                && a.ends.iter().zip(&f.ends).all(|(&x, &y)| x.max(f.t0) <= y)
                && profile_le(&a.residual, &f.residual, f.t0)
        });
        if hit {
            return true;
        }
        if self.stored < MEMO_TOTAL {
            if list.len() >= MEMO_PER_SET {
                list.remove(0);
            } else {
                self.stored += 1;
            }
            list.push(f);
        }
        false
    }

    fn root(&self) -> Node {
        Node {
            placed: vec![false; self.p.n],
            waiting: self.p.preds.iter().map(|v| v.len()).collect(),
            start: vec![0; self.p.n],
            end: vec![0; self.p.n],
            mode: vec![0; self.p.n],
            prof: Profile::new(self.p.f_max, self.p.c_max),
            last_start: 0,
            last_id: 0,
            count: 0,
            makespan: 0,
            rem_fe: self.min_fe.iter().sum(),
            rem_ce: self.min_ce.iter().sum(),
        }
    }

    fn bound(&self, node: &Node) -> u64 {
        let p = self.p;
        let t0 = node.last_start;
        let mut lb = node.makespan;
        let mut ready = vec![0u64; p.n];
        for &j in &self.topo {
            if node.placed[j] {
                lb = lb.max(node.end[j] + self.tail[j]);
                continue;
            }
            let mut r = t0;
            for &i in &p.preds[j] {
                r = r.max(if node.placed[i] {
                    node.end[i]
                } else {
                    ready[i] + self.min_e[i]
                });
            }
            ready[j] = r;
            lb = lb.max(r + self.min_e[j] + self.tail[j]);
        }
        let (fa, ca) = node.prof.area_after(t0);
        let energy = |area: u128, cap: usize| t0 + (area.div_ceil(cap as u128)) as u64;
        lb.max(energy(fa + node.rem_fe, p.f_max))
            .max(energy(ca + node.rem_ce, p.c_max))
    }

    fn dfs(&mut self, node: &Node) {
        if self.timed_out {
            return;
        }
        self.nodes += 1;
        if self.nodes.is_multiple_of(512) && Instant::now() >= self.deadline {
            self.timed_out = true;
            return;
        }
        if self.dominated(node) {
            return;
        }
        if node.count == self.p.n {
            if node.makespan < self.best {
                self.best = node.makespan;
                self.best_modes = node.mode.clone();
                self.best_starts = node.start.clone();
            }
            return;
        }
        let mut children: Vec<(u64, u64, Node)> = Vec::new();
        for j in 0..self.p.n {
            if node.placed[j] || node.waiting[j] > 0 {
                continue;
            }
            let est = self.p.preds[j]
                .iter()
                .map(|&i| node.end[i])
                .max()
                .unwrap_or(0)
                .max(node.last_start);
            for &(k, m) in &self.modes[j] {
                let t = node.prof.earliest(est, m);
                if t == node.last_start && node.count > 0 && j < node.last_id {
                    continue;
                }
                if t + m.e + self.tail[j] >= self.best {
                    continue;
                }
                let mut c = node.clone();
                c.prof.add(t, m);
                c.placed[j] = true;
                c.start[j] = t;
                c.end[j] = t + m.e;
                c.mode[j] = k;
                c.last_start = t;
                c.last_id = j;
                c.count += 1;
                c.makespan = c.makespan.max(t + m.e);
                c.rem_fe -= self.min_fe[j];
                c.rem_ce -= self.min_ce[j];
                for &s in &self.p.succs[j] {
                    c.waiting[s] -= 1;
                }
                let lb = self.bound(&c);
                if lb < self.best {
                    children.push((lb, t, c));
                }
            }
        }
        children.sort_by_key(|&(lb, t, ref c)| (lb, t, c.last_id));
        for (lb, _, c) in children {
            if lb >= self.best {
                continue;
            }
            self.dfs(&c);
            if self.timed_out {
                return;
            }
        }
    }
}

fn topo_order(p: &Problem) -> Vec<usize> {
    let mut waiting: Vec<usize> = p.preds.iter().map(|v| v.len()).collect();
    let mut stack: Vec<usize> = (0..p.n).rev().filter(|&i| waiting[i] == 0).collect();
    let mut order = Vec::with_capacity(p.n);
    while let Some(i) = stack.pop() {
        order.push(i);
        for &s in p.succs[i].iter().rev() {
            waiting[s] -= 1;
            if waiting[s] == 0 {
                stack.push(s);
            }
        }
    }
    order
}

/// Exact search with a wall-clock budget. Returns the optimum, or on budget exhaustion the
/// best incumbent (with `optimal = false` and the root lower bound).
pub fn solve_problem(p: &Problem, budget: Duration) -> Result<(Schedule, ExactStats)> {
    let t_begin = Instant::now();
    let mut s = Search::new(p, t_begin + budget);
    let root = s.root();
    let root_bound = s.bound(&root);

    // Incumbent from a short heuristic run; only used for pruning.
    let warm = GaParams {
        seed: 0x5eed,
        ..Default::default()
    };
    let warm_schedule = run_ga(p, &warm).ok().map(|g| g.schedule);
    if let Some(w) = &warm_schedule {
        s.best = w.makespan_ns + 1;
    }

    if root_bound < s.best {
        s.dfs(&root);
    }
    let stats = ExactStats {
        nodes: s.nodes,
        elapsed: t_begin.elapsed(),
        timed_out: s.timed_out,
        root_bound,
    };
    let mut sched = if !s.best_modes.is_empty() {
        assemble(p, &s.best_modes, &s.best_starts)
    } else if let Some(w) = warm_schedule {
        // The search proved nothing beats the warm start (or ran out of time first).
        w
    } else {
        return Err(Error::Timeout {
            lower_bound_ns: root_bound,
        });
    };
    sched.optimal = !stats.timed_out;
    sched.lower_bound_ns = Some(if sched.optimal {
        sched.makespan_ns
    } else {
        root_bound
    });
    Ok((sched, stats))
}

pub fn solve_exact(model: &MilpModel, budget: Duration) -> Result<Schedule> {
    Ok(solve_problem(&model.problem, budget)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::explore::CandidateTable;
    use crate::workload::{LayerNode, WorkloadDag};

    fn problem(
        n: usize,
        edges: Vec<(usize, usize)>,
        modes: Vec<Vec<(usize, usize, u64)>>,
        f: usize,
        c: usize,
    ) -> Problem {
        let dag =
            WorkloadDag::new((0..n).map(|i| LayerNode::new(i, 2, 8, 8)).collect(), edges).unwrap();
        Problem::from_parts(&dag, &CandidateTable::from_triples(&modes), f, c).unwrap()
    }

    #[test]
    fn single_layer() {
        let p = problem(1, vec![], vec![vec![(1, 1, 42)]], 3, 3);
        let (s, _) = solve_problem(&p, Duration::from_secs(5)).unwrap();
        assert_eq!(s.makespan_ns, 42);
        assert!(s.optimal);
    }

    #[test]
    fn full_width_layers_serialize() {
        let p = problem(2, vec![], vec![vec![(1, 3, 10)], vec![(1, 3, 15)]], 3, 3);
        assert_eq!(
            solve_problem(&p, Duration::from_secs(5))
                .unwrap()
                .0
                .makespan_ns,
            25
        );
    }

    #[test]
    fn chain_sums_best_modes() {
        let p = problem(
            2,
            vec![(0, 1)],
            vec![vec![(1, 1, 10), (3, 3, 4)], vec![(2, 2, 9), (1, 1, 12)]],
            3,
            3,
        );
        assert_eq!(
            solve_problem(&p, Duration::from_secs(5))
                .unwrap()
                .0
                .makespan_ns,
            13
        );
    }

    #[test]
    fn dominated_modes_dropped() {
        let m = [
            ModeCost { f: 2, c: 1, e: 10 },
            ModeCost { f: 2, c: 1, e: 12 },
            ModeCost { f: 3, c: 2, e: 10 },
            ModeCost { f: 1, c: 3, e: 5 },
        ];
        let kept: Vec<usize> = nondominated(&m).iter().map(|x| x.0).collect();
        assert_eq!(kept, vec![3, 0]);
    }
}
