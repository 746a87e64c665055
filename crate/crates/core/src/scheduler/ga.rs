//! Genetic algorithm over `(encode, candidate)` chromosomes with dependency-aware decoding.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{assemble, Problem, Profile, Schedule};
use crate::arch::HardwareConfig;
use crate::error::{Error, Result};
use crate::explore::CandidateTable;
use crate::workload::WorkloadDag;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chromosome {
    /// Priority per layer in `[0, 1]`; smaller goes first among resolved layers.
    pub encode: Vec<f64>,
    /// Candidate mode index per layer.
    pub candidate: Vec<usize>,
}

impl Chromosome {
    pub fn random(p: &Problem, rng: &mut impl Rng) -> Self {
        Self {
            encode: (0..p.n).map(|_| rng.gen::<f64>()).collect(),
            candidate: p.modes.iter().map(|m| rng.gen_range(0..m.len())).collect(),
        }
    }

    pub fn check(&self, p: &Problem) -> Result<()> {
        if self.encode.len() != p.n || self.candidate.len() != p.n {
            return Err(Error::Validation(format!(
                "chromosome lengths {}/{} do not match {} layers",
                self.encode.len(),
                self.candidate.len(),
                p.n
            )));
        }
        for (i, (&e, &c)) in self.encode.iter().zip(&self.candidate).enumerate() {
            if !(0.0..=1.0).contains(&e) {
                return Err(Error::Validation(format!(
                    "encode[{i}] = {e} outside [0, 1]"
                )));
            }
            if c >= p.modes[i].len() {
                return Err(Error::Validation(format!(
                    "candidate[{i}] = {c} but layer has {} modes",
                    p.modes[i].len()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaParams {
    pub population: usize,
    pub iterations: usize,
    pub crossover_p: f64,
    /// Per-gene mutation probability; `None` means `1 / (2N)`.
    pub mutation_p: Option<f64>,
    pub seed: u64,
    /// Generations without elite improvement after which every non-elite chromosome is
    /// re-drawn at random; 0 disables restarts.
    #[serde(default)]
    pub restart_after: usize,
}

impl Default for GaParams {
    fn default() -> Self {
        Self {
            population: 64,
            iterations: 500,
            crossover_p: 0.9,
            mutation_p: None,
            seed: 0,
            restart_after: 20,
        }
    }
}

/// Schedule order list: repeatedly take the resolved layer with the smallest encode value.
pub fn schedule_order(p: &Problem, encode: &[f64]) -> Vec<usize> {
    let mut waiting: Vec<usize> = p.preds.iter().map(|v| v.len()).collect();
    let mut resolved: Vec<usize> = (0..p.n).filter(|&i| waiting[i] == 0).collect();
    let mut order = Vec::with_capacity(p.n);
    while !resolved.is_empty() {
        let mut best = 0;
        for (idx, &i) in resolved.iter().enumerate() {
            let b = resolved[best];
            if encode[i] < encode[b] || (encode[i] == encode[b] && i < b) {
                best = idx;
            }
        }
        let i = resolved.swap_remove(best);
        order.push(i);
        for &s in &p.succs[i] {
            waiting[s] -= 1;
            if waiting[s] == 0 {
                resolved.push(s);
            }
        }
    }
    order
}

/// Makespan and start times of a chromosome.
pub fn decode_starts(p: &Problem, chrom: &Chromosome) -> (u64, Vec<u64>) {
    let order = schedule_order(p, &chrom.encode);
    let mut prof = Profile::new(p.f_max, p.c_max);
    let mut start = vec![0u64; p.n];
    let mut end = vec![0u64; p.n];
    let mut makespan = 0;
    for &j in &order {
        let m = p.modes[j][chrom.candidate[j]];
        let est = p.preds[j].iter().map(|&i| end[i]).max().unwrap_or(0);
        let t = prof.earliest(est, m);
        prof.add(t, m);
        start[j] = t;
        end[j] = t + m.e;
        makespan = makespan.max(end[j]);
    }
    (makespan, start)
}

pub fn decode_problem(p: &Problem, chrom: &Chromosome) -> Schedule {
    let (_, starts) = decode_starts(p, chrom);
    assemble(p, &chrom.candidate, &starts)
}

pub fn decode_chromosome(
    chrom: &Chromosome,
    dag: &WorkloadDag,
    table: &CandidateTable,
    hw: &HardwareConfig,
) -> Result<Schedule> {
    let p = Problem::new(dag, table, hw)?;
    chrom.check(&p)?;
    Ok(decode_problem(&p, chrom))
}

/// Independent random stream for chromosome `idx` of generation `gen`.
fn stream_rng(seed: u64, gen: usize, pop: usize, idx: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((gen * pop + idx) as u64);
    rng
}

fn breed(
    p: &Problem,
    a: &Chromosome,
    b: &Chromosome,
    params: &GaParams,
    mutation_p: f64,
    rng: &mut ChaCha8Rng,
) -> Chromosome {
    let mut child = a.clone();
    if rng.gen::<f64>() < params.crossover_p {
        for i in 0..p.n {
            if rng.gen::<bool>() {
                child.encode[i] = b.encode[i];
            }
            if rng.gen::<bool>() {
                child.candidate[i] = b.candidate[i];
            }
        }
    }
    for i in 0..p.n {
        if rng.gen::<f64>() < mutation_p {
            child.encode[i] = rng.gen();
        }
        if rng.gen::<f64>() < mutation_p {
            child.candidate[i] = rng.gen_range(0..p.modes[i].len());
        }
    }
    child
}

#[derive(Debug, Clone)]
pub struct GaOutcome {
    pub best: Chromosome,
    pub schedule: Schedule,
    /// Elite makespan after initialization and after each generation.
    pub history: Vec<u64>,
}

pub fn run_ga(p: &Problem, params: &GaParams) -> Result<GaOutcome> {
    if params.population == 0 || !(0.0..=1.0).contains(&params.crossover_p) {
        return Err(Error::Validation(
            "GA population must be positive and crossover_p in [0, 1]".into(),
        ));
    }
    let mutation_p = params.mutation_p.unwrap_or(1.0 / (2.0 * p.n.max(1) as f64));
    if !(0.0..=1.0).contains(&mutation_p) {
        return Err(Error::Validation(format!(
            "mutation_p {mutation_p} outside [0, 1]"
        )));
    }
    let pop_n = params.population;
    let mut pop: Vec<Chromosome> = (0..pop_n)
        .map(|i| Chromosome::random(p, &mut stream_rng(params.seed, 0, pop_n, i)))
        .collect();
    let mut fit: Vec<u64> = pop.par_iter().map(|c| decode_starts(p, c).0).collect();
    let elite_of = |fit: &[u64]| {
        (0..fit.len())
            .min_by_key(|&i| (fit[i], i))
            .expect("non-empty population")
    };
    let mut history = Vec::with_capacity(params.iterations + 1);
    history.push(fit[elite_of(&fit)]);

    let mut stall = 0;
    for gen in 1..=params.iterations {
        let e = elite_of(&fit);
        let elite = pop[e].clone();
        let elite_fit = fit[e];
        let restart = params.restart_after > 0 && stall >= params.restart_after;
        if restart {
            stall = 0;
        }
        let children: Vec<(Chromosome, u64)> = (1..pop_n)
            .into_par_iter()
            .map(|i| {
                let mut rng = stream_rng(params.seed, gen, pop_n, i);
                if restart {
                    let c = Chromosome::random(p, &mut rng);
                    let f = decode_starts(p, &c).0;
                    return (c, f);
                }
                let mut pick = || {
                    let x = rng.gen_range(0..pop_n);
                    let y = rng.gen_range(0..pop_n);
                    if (fit[y], y) < (fit[x], x) {
                        y
                    } else {
                        x
                    }
                };
                let (ia, ib) = (pick(), pick());
                let (a, b) = (&pop[ia], &pop[ib]);
                let child = breed(p, a, b, params, mutation_p, &mut rng);
                let f = decode_starts(p, &child).0;
                (child, f)
            })
            .collect();
        pop.clear();
        fit.clear();
        pop.push(elite);
        fit.push(elite_fit);
        for (c, f) in children {
            pop.push(c);
            fit.push(f);
        }
        let now = fit[elite_of(&fit)];
        if now < elite_fit {
            stall = 0;
        } else {
            stall += 1;
        }
        history.push(now);
    }
    let e = elite_of(&fit);
    let best = pop.swap_remove(e);
    let schedule = decode_problem(p, &best);
    Ok(GaOutcome {
        best,
        schedule,
        history,
    })
}

pub fn solve_ga(
    dag: &WorkloadDag,
    table: &CandidateTable,
    hw: &HardwareConfig,
    params: &GaParams,
) -> Result<Schedule> {
    let p = Problem::new(dag, table, hw)?;
    Ok(run_ga(&p, params)?.schedule)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scheduler::validate::validate_with_limits;
    use crate::workload::{LayerNode, WorkloadDag};

    fn dag(n: usize, edges: Vec<(usize, usize)>) -> WorkloadDag {
        WorkloadDag::new((0..n).map(|i| LayerNode::new(i, 2, 8, 8)).collect(), edges).unwrap()
    }

    #[test]
    fn smaller_encode_goes_first() {
        // L0 and L1 both resolved; L2 depends on both.
        let d = dag(3, vec![(0, 2), (1, 2)]);
        let t = CandidateTable::from_triples(&[vec![(1, 1, 5)], vec![(1, 1, 5)], vec![(1, 1, 5)]]);
        let p = Problem::from_parts(&d, &t, 3, 3).unwrap();
        assert_eq!(schedule_order(&p, &[0.7, 0.2, 0.1]), vec![1, 0, 2]);
    }

    #[test]
    fn chain_order_is_forced() {
        let d = dag(4, vec![(0, 1), (1, 2), (2, 3)]);
        let t = CandidateTable::from_triples(&vec![vec![(1, 1, 5)]; 4]);
        let p = Problem::from_parts(&d, &t, 3, 3).unwrap();
        assert_eq!(schedule_order(&p, &[0.9, 0.1, 0.5, 0.0]), vec![0, 1, 2, 3]);
    }

    #[test]
    fn independent_layers_unlimited_resources_start_at_zero() {
        let d = dag(4, vec![]);
        let t = CandidateTable::from_triples(&vec![vec![(1, 1, 7)]; 4]);
        let p = Problem::from_parts(&d, &t, 8, 8).unwrap();
        let c = Chromosome {
            encode: vec![0.1, 0.2, 0.3, 0.4],
            candidate: vec![0; 4],
        };
        let s = decode_problem(&p, &c);
        assert!(s.layers.iter().all(|l| l.start_ns == 0));
        assert_eq!(s.makespan_ns, 7);
    }

    #[test]
    fn elite_never_worsens_and_runs_are_deterministic() {
        let d = dag(6, vec![(0, 2), (1, 2), (2, 3), (1, 4)]);
        let t = CandidateTable::from_triples(&vec![vec![(1, 1, 30), (2, 2, 16), (3, 3, 11)]; 6]);
        let p = Problem::from_parts(&d, &t, 3, 3).unwrap();
        let params = GaParams {
            population: 16,
            iterations: 40,
            seed: 7,
            ..Default::default()
        };
        let a = run_ga(&p, &params).unwrap();
        let b = run_ga(&p, &params).unwrap();
        assert_eq!(a.schedule, b.schedule);
        assert!(a.history.windows(2).all(|w| w[1] <= w[0]));
        assert!(validate_with_limits(&a.schedule, &d, &t, 3, 3).is_valid());
    }
}
