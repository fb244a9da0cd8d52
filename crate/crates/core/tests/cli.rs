use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use clap::Parser;
use visitslot::allocation::Baseline;
use visitslot::cli::*;
use visitslot::gp::ModelKind;
use visitslot::par::Exec;

fn tree_bytes(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn summary(digest: &str, best: Option<(u32, u32, f64)>, comp3: (u32, u32, f64)) -> Summary {
    let sol = |(n_h, n_d, neg_fitness)| SolutionSummary {
        pir_id: 0,
        seed: 1,
        n_h,
        n_d,
        neg_fitness,
        vector_len: 3,
        plan_digest: "x".into(),
    };
    Summary {
        dataset_digest: digest.into(),
        model: ModelKind::Partial,
        s: Some(4),
        q: None,
        w_c: 0.65,
        priors: String::new(),
        baselines: vec![BaselineRow {
            variant: Baseline::Comp3,
            n_h: comp3.0,
            n_d: comp3.1,
            neg_fitness: comp3.2,
            plan_digest: "y".into(),
        }],
        best: best.map(sol),
        pareto: best.map(sol).into_iter().collect(),
        solutions: best.iter().count(),
        offspring_per_run: vec![],
    }
}

#[test]
fn compare_reports_ratio() {
    let gp = summary("d", Some((9, 7, 7.70)), (44, 23, 30.35));
    let base = summary("d", None, (44, 23, 30.35));
    let c = compare(&gp, &base).unwrap();
    assert_eq!(c.a.n_d, 7);
    assert_eq!(c.b.source, "comp3");
    assert!((c.ratio.unwrap() - 30.35 / 7.70).abs() < 1e-12);
    assert_eq!((c.a_dominates, c.b_dominates), (1, 0));
    assert_eq!(c.baseline_ratios.len(), 1);

    assert_eq!(compare(&gp, &gp).unwrap().ratio, Some(1.0));
    let perfect = summary("d", Some((0, 0, 0.0)), (1, 0, 0.35));
    assert_eq!(compare(&perfect, &base).unwrap().ratio, None);
    assert!(matches!(compare(&gp, &summary("e", None, (1, 1, 1.0))), Err(CliError::DigestMismatch(..))));
}

fn run_args(extra: &[&str]) -> RunArgs {
    let mut argv = vec!["visitslot", "run"];
    argv.extend_from_slice(extra);
    match Cli::parse_from(argv).command {
        visitslot::cli::Command::Run(a) => *a,
        _ => unreachable!(),
    }
}

#[test]
fn spec_from_flags() {
    let spec = spec_from_args(&run_args(&[
        "--generate", "4", "--model", "full", "--q", "10", "--seed-list", "7,8", "--out", "x",
    ]))
    .unwrap();
    assert_eq!(spec.dataset, DatasetSource::Generate(4));
    assert_eq!(spec.gp.model, ModelKind::Full);
    assert_eq!(spec.gp.q, 10);
    assert_eq!(spec.gp.seeds, vec![7, 8]);
    assert_eq!(spec.gp.pirs, 2);
    let a = spec.apriori.unwrap();
    assert_eq!((a.infected, a.immune), (DEFAULT_INFECTED_FRACTION, DEFAULT_IMMUNE_FRACTION));
    assert_eq!(spec.baselines, Baseline::ALL.to_vec());

    let spec = spec_from_args(&run_args(&["--generate", "4", "--pirs", "3", "--baselines", "none", "--out", "x"]))
        .unwrap();
    assert_eq!(spec.gp.seeds, vec![1, 2, 3]);
    assert!(spec.apriori.is_none());
    assert!(spec.baselines.is_empty());

    assert!(spec_from_args(&run_args(&["--out", "x"])).is_err());
    assert!(spec_from_args(&run_args(&["--generate", "1", "--baselines", "comp9", "--out", "x"])).is_err());
}

fn small_spec() -> ExperimentSpec {
    let mut spec = spec_from_args(&run_args(&[
        "--generate", "2", "--pirs", "2", "--pop", "20", "--budget", "200", "--priors",
        "20=0.01;40=0.03;50=0.02", "--details", "2", "--out", "x",
    ]))
    .unwrap();
    spec.gp.seeds = vec![5, 6];
    spec
}

#[test]
fn reports_do_not_depend_on_threads() {
    let spec = small_spec();
    let dirs = tempfile::tempdir().unwrap();
    let (p, s) = (dirs.path().join("par"), dirs.path().join("seq"));
    let par = run_experiment(&spec, Exec::Parallel, None).unwrap();
    write_report(&par, &p).unwrap();
    write_report(&run_experiment(&spec, Exec::Sequential, None).unwrap(), &s).unwrap();
    let (a, b) = (tree_bytes(&p), tree_bytes(&s));
    assert_eq!(a, b);

    for name in ["manifest.json", "summary.json", "baselines.csv", "solutions.csv", "pareto.csv"] {
        assert!(a.contains_key(Path::new(name)), "{name}");
    }
    let detail = Path::new("detail/gp_rank1");
    for name in ["allocations.csv", "occupancy.csv", "daily.csv", "trajectory.csv", "persons.csv"] {
        assert!(a.contains_key(&detail.join(name)), "{name}");
    }
    assert!(a.keys().any(|k| k.starts_with("detail/comp1")));

    let back = read_summary(&p).unwrap();
    assert_eq!(back, par.summary);
    assert_eq!(back.baselines.len(), 3);
    assert!(back.solutions > 0 && back.best.is_some());
}

#[test]
fn binary_replays_manifest() {
    let bin = env!("CARGO_BIN_EXE_visitslot");
    let dirs = tempfile::tempdir().unwrap();
    let first = dirs.path().join("first");
    let status = Command::new(bin)
        .args(["run", "--generate", "3", "--pirs", "2", "--pop", "16", "--budget", "100"])
        .args(["--priors", "20=0.01;40=0.03;50=0.02", "--out"])
        .arg(&first)
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    assert!(String::from_utf8_lossy(&status.stdout).contains("comp3"));

    let second = dirs.path().join("second");
    let status = Command::new(bin)
        .args(["run", "--sequential", "--manifest"])
        .arg(first.join("manifest.json"))
        .arg("--out")
        .arg(&second)
        .output()
        .unwrap();
    assert!(status.status.success());
    assert_eq!(tree_bytes(&first), tree_bytes(&second));

    let out = Command::new(bin).arg("compare").arg(&first).arg(&second).output().unwrap();
    assert!(out.status.success());
    let c: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(c["ratio"], 1.0);

    let bad = Command::new(bin).args(["run", "--generate", "1", "--pop", "2", "--out"]).arg(dirs.path()).output().unwrap();
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).starts_with("error:"));
}

#[test]
fn generate_and_pn_table_commands() {
    let bin = env!("CARGO_BIN_EXE_visitslot");
    let dirs = tempfile::tempdir().unwrap();
    let path = dirs.path().join("ds.txt");
    let ok = Command::new(bin).args(["generate", "--seed", "9", "--out"]).arg(&path).status().unwrap();
    assert!(ok.success());
    let ds = visitslot::dataset::parse_dataset(&fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(ds.persons.len(), 282);

    let out = Command::new(bin)
        .args(["pn-table", "--q", "5", "--iterations", "2000"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(!out.stdout.is_empty());
}
