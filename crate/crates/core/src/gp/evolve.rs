//! Tree initialization, variation and the steady-state loop.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::tree::{subtree_end, EvalState, GpNode, GpTree, NodeKind};
use super::{ConfigError, Evaluator, GpConfig, Score, SolutionRecord, Workspace};
use crate::allocation::{decode, BoundedVector};

/// Random tree of at most `max_depth` levels. `full` keeps every branch at
/// maximum depth; otherwise primitives are drawn uniformly from the whole set.
pub fn random_tree<R: Rng + ?Sized>(rng: &mut R, max_depth: usize, full: bool) -> GpTree {
    let mut nodes = Vec::new();
    grow_into(rng, max_depth.max(1), full, &mut nodes);
    GpTree::from_nodes_unchecked(nodes)
}

fn grow_into<R: Rng + ?Sized>(rng: &mut R, depth: usize, full: bool, out: &mut Vec<GpNode>) {
    let terminal = depth <= 1 || (!full && rng.random_range(0..NodeKind::ALL.len()) < NodeKind::TERMINALS.len());
    if terminal {
        out.push(GpNode::random_terminal(rng));
    } else {
        out.push(GpNode::function(*NodeKind::FUNCTIONS.choose(rng).expect("non-empty")));
        grow_into(rng, depth - 1, full, out);
        grow_into(rng, depth - 1, full, out);
    }
}

/// Ramped half-and-half over depths `2..=max_depth`.
pub fn ramped_population<R: Rng + ?Sized>(rng: &mut R, size: usize, max_depth: usize, max_nodes: usize) -> Vec<GpTree> {
    let depths = max_depth.saturating_sub(1).max(1);
    (0..size)
        .map(|i| {
            let depth = 2 + (i / 2) % depths;
            loop {
                let t = random_tree(rng, depth.min(max_depth.max(1)), i % 2 == 0);
                if t.len() <= max_nodes {
                    break t;
                }
            }
        })
        .collect()
}

fn splice(host: &[GpNode], at: usize, at_end: usize, donor: &[GpNode]) -> Vec<GpNode> {
    let mut out = Vec::with_capacity(host.len() - (at_end - at) + donor.len());
    out.extend_from_slice(&host[..at]);
    out.extend_from_slice(donor);
    out.extend_from_slice(&host[at_end..]);
    out
}

/// Swaps a random subtree of `a` with a random subtree of `b` and returns
/// `a`'s side. If that exceeds `max_nodes` the shorter side is taken; if
/// neither side fits `a` is returned unchanged.
pub fn crossover<R: Rng + ?Sized>(rng: &mut R, a: &GpTree, b: &GpTree, max_nodes: usize) -> GpTree {
    let (an, bn) = (a.nodes(), b.nodes());
    let i = rng.random_range(0..an.len());
    let j = rng.random_range(0..bn.len());
    let (ie, je) = (subtree_end(an, i).expect("valid"), subtree_end(bn, j).expect("valid"));
    let len_a = an.len() - (ie - i) + (je - j);
    let len_b = bn.len() - (je - j) + (ie - i);
    if len_a <= max_nodes {
        GpTree::from_nodes_unchecked(splice(an, i, ie, &bn[j..je]))
    } else if len_b <= max_nodes {
        GpTree::from_nodes_unchecked(splice(bn, j, je, &an[i..ie]))
    } else {
        a.clone()
    }
}

/// Replaces a uniformly chosen subtree with a fresh grown one.
pub fn mutate<R: Rng + ?Sized>(rng: &mut R, a: &GpTree, max_depth: usize, max_nodes: usize) -> GpTree {
    let an = a.nodes();
    for _ in 0..8 {
        let i = rng.random_range(0..an.len());
        let ie = subtree_end(an, i).expect("valid");
        let donor = random_tree(rng, max_depth, false);
        if an.len() - (ie - i) + donor.len() <= max_nodes {
            return GpTree::from_nodes_unchecked(splice(an, i, ie, donor.nodes()));
        }
    }
    a.clone()
}

struct Individual {
    tree: GpTree,
    vector: BoundedVector,
    score: Score,
    /// Ranking key: higher is better.
    key: f64,
}

impl Individual {
    fn beats(&self, other: &Individual) -> bool {
        self.key > other.key || (self.key == other.key && self.tree.len() < other.tree.len())
    }
}

fn tournament<R: Rng + ?Sized>(rng: &mut R, pop: &[Individual], k: usize) -> usize {
    let mut best = rng.random_range(0..pop.len());
    for _ in 1..k {
        let c = rng.random_range(0..pop.len());
        if pop[c].beats(&pop[best]) {
            best = c;
        }
    }
    best
}

/// Weakest of `k` distinct random members, never `protect`.
fn kill_tournament<R: Rng + ?Sized>(rng: &mut R, pop: &[Individual], k: usize, protect: usize) -> usize {
    let mut worst = None::<usize>;
    let mut drawn = 0;
    while drawn < k {
        let c = rng.random_range(0..pop.len());
        if c == protect {
            continue;
        }
        drawn += 1;
        worst = Some(match worst {
            Some(w) if !pop[w].beats(&pop[c]) => w,
            _ => c,
        });
    }
    worst.expect("k >= 1")
}

/// Progress counters of one run.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct PirStats {
    pub offspring: u64,
    pub seeding_offspring: u64,
    pub evaluations: u64,
}

/// One steady-state evolution. Every strict improvement of the best
/// individual (under the real fitness) is passed to `sink`; the final best
/// is returned.
pub fn evolve_pir(
    eval: &Evaluator<'_>,
    config: &GpConfig,
    pir_id: usize,
    seed: u64,
    sink: &mut dyn FnMut(SolutionRecord),
) -> Result<(SolutionRecord, PirStats), ConfigError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ws = Workspace::default();
    let mut stats = PirStats::default();

    let mut seeding = config.seeding_target.is_some_and(|t| t > 1);
    let target = config.seeding_target.unwrap_or(0);

    let make = |tree: GpTree, seeding: bool, ws: &mut Workspace, stats: &mut PirStats| {
        let vector = tree_vector(&tree, &mut ws.machine);
        let (score, key) = if seeding {
            (Score::default(), vector.len().min(target) as f64)
        } else {
            stats.evaluations += 1;
            let s = eval.score(vector.values(), ws);
            (s, s.fitness)
        };
        Individual { tree, vector, score, key }
    };

    let trees = ramped_population(&mut rng, config.population, config.init_depth, config.max_tree_size);
    let mut pop: Vec<Individual> = trees.into_iter().map(|t| make(t, seeding, &mut ws, &mut stats)).collect();

    let rescore = |pop: &mut Vec<Individual>, ws: &mut Workspace, stats: &mut PirStats| {
        for ind in pop.iter_mut() {
            stats.evaluations += 1;
            ind.score = eval.score(ind.vector.values(), ws);
            ind.key = ind.score.fitness;
        }
    };

    if seeding && pop.iter().all(|i| i.vector.len() >= target) {
        seeding = false;
        rescore(&mut pop, &mut ws, &mut stats);
    }

    let mut best = usize::MAX;
    let mut best_record: Option<SolutionRecord> = None;
    let mut emit = |pop: &[Individual], idx: usize, stats: &PirStats, best_record: &mut Option<SolutionRecord>| {
        let ind = &pop[idx];
        let rec = SolutionRecord::new(eval, ind.vector.clone(), ind.score, &ind.tree, pir_id, seed, stats.offspring);
        sink(rec.clone());
        *best_record = Some(rec);
    };
    let find_best = |pop: &[Individual]| (1..pop.len()).fold(0, |b, i| if pop[i].beats(&pop[b]) { i } else { b });

    if !seeding {
        best = find_best(&pop);
        emit(&pop, best, &stats, &mut best_record);
    }

    while stats.offspring < config.budget {
        let a = tournament(&mut rng, &pop, config.tournament_size);
        let child = if rng.random_bool(config.crossover_rate) {
            let b = tournament(&mut rng, &pop, config.tournament_size);
            crossover(&mut rng, &pop[a].tree, &pop[b].tree, config.max_tree_size)
        } else {
            mutate(&mut rng, &pop[a].tree, config.mutation_depth, config.max_tree_size)
        };
        stats.offspring += 1;
        if seeding {
            stats.seeding_offspring += 1;
        }
        let child = make(child, seeding, &mut ws, &mut stats);
        let protect = if seeding { find_best(&pop) } else { best };
        let victim = kill_tournament(&mut rng, &pop, config.kill_tournament_size, protect);
        let improved = !seeding && child.beats(&pop[best]) && child.key > pop[best].key;
        pop[victim] = child;

        if seeding {
            if pop.iter().all(|i| i.vector.len() >= target) {
                seeding = false;
                rescore(&mut pop, &mut ws, &mut stats);
                best = find_best(&pop);
                emit(&pop, best, &stats, &mut best_record);
            }
        } else if improved {
            best = victim;
            emit(&pop, best, &stats, &mut best_record);
        } else if pop[victim].beats(&pop[best]) {
            // Equal fitness, smaller tree: track it without emitting.
            best = victim;
        }
    }

    if seeding {
        // Budget ran out before every member reached the target length.
        rescore(&mut pop, &mut ws, &mut stats);
        best = find_best(&pop);
        emit(&pop, best, &stats, &mut best_record);
    }
    Ok((best_record.expect("at least one record"), stats))
}

fn tree_vector(tree: &GpTree, machine: &mut EvalState) -> BoundedVector {
    machine.reset();
    machine.run(tree);
    BoundedVector::from_raw(machine.vector())
}

/// Plan decoded from a record's vector; used to re-check archived results.
pub fn record_plan(eval: &Evaluator<'_>, rec: &SolutionRecord) -> crate::allocation::AllocationPlan {
    decode(&rec.vector, eval.dataset())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ramped_trees_respect_limits() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pop = ramped_population(&mut rng, 50, 6, 2000);
        assert_eq!(pop.len(), 50);
        for t in &pop {
            assert!(t.depth() <= 6 && t.len() <= 2000);
            assert!(GpTree::new(t.nodes().to_vec()).is_ok());
        }
        assert!(pop.iter().step_by(2).any(|t| t.depth() == 6));
    }

    #[test]
    fn variation_keeps_trees_valid_and_capped() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pop = ramped_population(&mut rng, 20, 6, 2000);
        for _ in 0..500 {
            let a = &pop[rng.random_range(0..20)];
            let b = &pop[rng.random_range(0..20)];
            let c = crossover(&mut rng, a, b, 60);
            assert!(GpTree::new(c.nodes().to_vec()).is_ok());
            assert!(c.len() <= 60.max(a.len()));
            let m = mutate(&mut rng, a, 4, 2000);
            assert!(GpTree::new(m.nodes().to_vec()).is_ok());
        }
    }

    #[test]
    fn oversize_crossover_takes_shorter_side() {
        let big: GpTree = {
            let mut s = String::from("(Constant 1)");
            for _ in 0..10 {
                s = format!("(AddNumber {s} (Constant 2))");
            }
            s.parse().unwrap()
        };
        let leaf: GpTree = "(Constant 7)".parse().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let c = crossover(&mut rng, &leaf, &big, 5);
            assert!(c.len() <= 5 || c == leaf);
        }
    }
}
