use std::sync::OnceLock;

use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use visitslot::allocation::{decode, MAX_VECTOR_LEN};
use visitslot::dataset::{generate_dataset, Dataset, PopulationProfile};
use visitslot::gp::*;
use visitslot::par::Exec;
use visitslot::simulator::{fitness, Model};

/// Every node kind once or more; the expected trace is worked out by hand
/// below.
const GOLDEN: &str = "(SetMem2 \
    (WriteRecord (AddNumber (Constant 3) (sConstant 51)) \
                 (SetMem1 (Constant 7) (SubtractNumber (Constant 10) (Constant 4)))) \
    (AverageNumber \
        (AddRecord (MultiplyNumber (Constant 2) (Constant -5)) (GetMem1 (Constant 1) (Constant 1))) \
        (ZeroRecord (SubRecord (DivideNumber (Constant 9) (Constant 0)) (GetMem2 (Constant 0) (Constant 0))) \
                    (Constant 1))))";

#[test]
fn golden_tree_trace() {
    let tree: GpTree = GOLDEN.parse().unwrap();
    let kinds: std::collections::HashSet<_> = tree.nodes().iter().map(|n| n.kind).collect();
    assert_eq!(kinds.len(), NodeKind::ALL.len());

    let mut st = EvalState::with_trace();
    let root = st.run(&tree);
    assert_eq!(root, -0.5);
    assert_eq!(st.vector(), &[0.0001, 3.2, ZERO_RECORD_VALUE]);
    assert_eq!((st.p_r, st.p_z, st.m1, st.m2), (3, 3, 6.0, 3.5));

    // (node, returned, p_r, p_z) in evaluation order.
    let expected: [(usize, f64, usize, usize); 27] = [
        (3, 3.0, 1, 1),
        (4, 0.2, 1, 1),
        (2, 3.2, 1, 1),
        (6, 7.0, 1, 1),
        (8, 10.0, 1, 1),
        (9, 4.0, 1, 1),
        (7, 6.0, 1, 1),
        (5, 7.0, 1, 1),
        (1, 7.0, 2, 2),
        (13, 2.0, 2, 2),
        (14, -5.0, 2, 2),
        (12, -10.0, 2, 2),
        (16, 1.0, 2, 2),
        (17, 1.0, 2, 2),
        (15, 6.0, 2, 2),
        (11, -10.0, 3, 3),
        (21, 9.0, 3, 3),
        (22, 0.0, 3, 3),
        (20, 9.0, 3, 3),
        (24, 0.0, 3, 3),
        (25, 0.0, 3, 3),
        (23, 0.0, 3, 3),
        (19, 9.0, 2, 3),
        (26, 1.0, 2, 3),
        (18, 9.0, 3, 3),
        (10, -0.5, 3, 3),
        (0, -0.5, 3, 3),
    ];
    let trace = st.trace().unwrap();
    assert_eq!(trace.len(), expected.len());
    for (step, &(node, ret, p_r, p_z)) in trace.iter().zip(&expected) {
        assert_eq!((step.node, step.p_r, step.p_z), (node, p_r, p_z), "{step:?}");
        assert_abs_diff_eq!(step.returned, ret, epsilon = 1e-12);
    }
    // AddRecord wrote -10 at position 3 before ZeroRecord overwrote it.
    assert_eq!(trace[15].kind, NodeKind::AddRecord);
    assert_eq!(trace[7].m1, 6.0);
    assert_eq!(trace[26].m2, 3.5);

    let v = genotype_to_vector(&tree);
    assert_eq!(v.len(), 3);
    assert_abs_diff_eq!(v.values()[1], 0.2, epsilon = 1e-12);
    assert_eq!(v.values()[2], ZERO_RECORD_VALUE);
}

#[test]
fn write_record_example() {
    let tree: GpTree = "(WriteRecord (Constant 5) (Constant 3))".parse().unwrap();
    let mut st = EvalState::default();
    assert_eq!(st.run(&tree), 3.0);
    assert_eq!(st.vector()[st.p_r - 1], 5.0);
}

#[test]
fn empty_write_tree_gives_initial_element() {
    let tree: GpTree = "(DivideNumber (Constant 1) (Constant 0))".parse().unwrap();
    assert_eq!(genotype_to_vector(&tree).values(), &[0.0001]);
    let mut st = EvalState::default();
    assert_eq!(st.run(&tree), 1.0);
}

fn small_tree() -> impl Strategy<Value = GpTree> {
    (any::<u64>(), 1usize..=8, any::<bool>()).prop_map(|(seed, depth, full)| {
        random_tree(&mut ChaCha8Rng::seed_from_u64(seed), depth, full)
    })
}

proptest! {
    #[test]
    fn machine_pointers_stay_in_range(tree in small_tree()) {
        let mut st = EvalState::with_trace();
        st.run(&tree);
        for s in st.trace().unwrap() {
            prop_assert!(1 <= s.p_r && s.p_r <= s.p_z && s.p_z <= MAX_VECTOR_LEN);
        }
        prop_assert_eq!(st.vector().len(), st.p_z);
    }

    #[test]
    fn genotype_vectors_are_bounded(tree in small_tree()) {
        let v = genotype_to_vector(&tree);
        prop_assert!(!v.is_empty() && v.len() <= MAX_VECTOR_LEN);
        prop_assert!(v.values().iter().all(|x| *x > 0.0 && *x < 1.0));
    }

    #[test]
    fn variation_respects_cap(a in small_tree(), b in small_tree(), seed in any::<u64>(), cap in 1usize..200) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = crossover(&mut rng, &a, &b, cap);
        prop_assert!(c.len() <= cap || c == a);
        let m = mutate(&mut rng, &a, 4, cap);
        prop_assert!(m.len() <= cap.max(a.len()));
        prop_assert!(GpTree::new(c.nodes().to_vec()).is_ok());
        prop_assert!(GpTree::new(m.nodes().to_vec()).is_ok());
    }

    #[test]
    fn display_parse_round_trip(tree in small_tree()) {
        let back: GpTree = tree.to_string().parse().unwrap();
        prop_assert_eq!(back, tree);
    }
}

fn dataset() -> &'static Dataset {
    static DS: OnceLock<Dataset> = OnceLock::new();
    DS.get_or_init(|| {
        let mut ds = generate_dataset(11, &PopulationProfile::canonical()).unwrap();
        ds.priors = "20=0.01;40=0.03;50=0.02".parse().unwrap();
        ds
    })
}

fn small_config() -> GpConfig {
    GpConfig {
        population: 30,
        budget: 400,
        ..GpConfig::default()
    }
}

#[test]
fn evolution_is_deterministic() {
    let ev = Evaluator::new(dataset(), &Model::Partial { s: 4 }, 0.65).unwrap();
    let cfg = small_config();
    let run = || {
        let mut recs = Vec::new();
        let best = evolve_pir(&ev, &cfg, 0, 99, &mut |r| recs.push(r)).unwrap();
        (best, recs)
    };
    assert_eq!(run(), run());
}

#[test]
fn emitted_records_improve_and_replay() {
    let ds = dataset();
    let ev = Evaluator::new(ds, &Model::Partial { s: 4 }, 0.65).unwrap();
    let mut recs: Vec<SolutionRecord> = Vec::new();
    let (best, stats) = evolve_pir(&ev, &small_config(), 3, 5, &mut |r| recs.push(r)).unwrap();
    assert_eq!(stats.offspring, 400);
    assert_eq!(recs.last(), Some(&best));
    for w in recs.windows(2) {
        assert!(w[1].fitness > w[0].fitness);
        assert!(w[1].offspring >= w[0].offspring);
    }
    for r in &recs {
        assert_eq!(r.fitness, fitness(r.n_h, r.n_d, 0.65));
        let plan = decode(&r.vector, ds);
        assert_eq!(plan.digest(), r.plan_digest);
        let score = ev.score_plan(&plan).unwrap();
        assert_eq!((score.n_h, score.n_d), (r.n_h, r.n_d));
        let tree: GpTree = r.tree.parse().unwrap();
        assert_eq!(genotype_to_vector(&tree), r.vector);
    }
}

#[test]
fn seeding_phase_grows_vectors() {
    let ev = Evaluator::new(dataset(), &Model::Partial { s: 4 }, 0.65).unwrap();
    let cfg = GpConfig {
        seeding_target: Some(4),
        ..small_config()
    };
    let mut recs = Vec::new();
    let (_, stats) = evolve_pir(&ev, &cfg, 0, 8, &mut |r| recs.push(r)).unwrap();
    assert!(stats.seeding_offspring > 0);
    assert!(recs[0].vector.len() >= 4 || stats.seeding_offspring == cfg.budget);
}

#[test]
fn archive_independent_of_scheduling() {
    let ev = Evaluator::new(dataset(), &Model::Partial { s: 4 }, 0.65).unwrap();
    let cfg = small_config();
    let seeds = [4, 9, 2];
    let par = run_pirs(&ev, &cfg, &seeds, Exec::Parallel).unwrap();
    let seq = run_pirs(&ev, &cfg, &seeds, Exec::Sequential).unwrap();
    assert_eq!(par, seq);

    let mut shuffled = par.ranked.clone();
    shuffled.reverse();
    assert_eq!(Archive::from_records(shuffled).ranked, par.ranked);

    for p in &par.pareto {
        assert!(!par.ranked.iter().any(|r| r.dominates(p)));
    }
    for w in par.ranked.windows(2) {
        assert!(w[0].fitness >= w[1].fitness);
    }
}

#[test]
fn equal_fitness_records_are_kept() {
    let ev = Evaluator::new(dataset(), &Model::Partial { s: 4 }, 0.65).unwrap();
    let mut recs = Vec::new();
    evolve_pir(&ev, &small_config(), 0, 1, &mut |r| recs.push(r)).unwrap();
    let mut twin = recs[0].clone();
    twin.pir_id = 7;
    twin.vector = visitslot::allocation::BoundedVector::new(vec![0.5]).unwrap();
    let archive = Archive::from_records(vec![recs[0].clone(), twin]);
    assert_eq!(archive.ranked.len(), 2);
    assert_eq!(archive.pareto.len(), 2);
}

#[test]
fn config_from_toml() {
    let cfg = GpConfig::from_toml_str(
        "population = 50\nbudget = 1000\nmodel = \"full\"\nq = 10\nseeds = [3, 4]\npirs = 3\n",
    )
    .unwrap();
    assert_eq!(cfg.population, 50);
    assert_eq!(cfg.model, ModelKind::Full);
    assert_eq!(cfg.run_seeds(), vec![3, 4, 1]);
    assert_eq!(cfg.crossover_rate, 0.8);

    assert!(matches!(GpConfig::from_toml_str("population = 3"), Err(ConfigError::Population(3))));
    assert!(matches!(GpConfig::from_toml_str("budget = 0"), Err(ConfigError::Budget)));
    assert!(GpConfig::from_toml_str("popsize = 10").is_err());
    assert!(GpConfig::from_toml_str("seeds = [1, 1]").is_err());
}
