use diffbbo::config::RunConfig;
use diffbbo::experiment::{ablation_methods, run_methods};
use diffbbo::report::{read_csv, write_results, Metadata, Timing};
use diffbbo::tasks::{decode_discrete, encode_discrete, TaskSpec, TASK_NAMES};
use diffbbo::BlackBox;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn tiny(task: &str, seed: u64) -> RunConfig {
    let mut cfg = RunConfig::new(task).desk();
    cfg.seed = seed;
    cfg.iterations = 3;
    cfg.batch = 5;
    cfg.ensemble = 2;
    cfg.train.epochs = 3;
    cfg.pool_size = 60;
    cfg
}

#[test]
fn results_roundtrip_through_csv() {
    let cfg = tiny("discrete6", 2);
    let runs = run_methods(&cfg, &ablation_methods(&[0.6, 1.0])).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("out.csv");
    let timing = Timing { started_unix_seconds: 0.0, wall_clock_seconds: 0.0 };
    write_results(&path, &runs, &Metadata::new(&cfg, &runs, None, timing)).unwrap();

    let rows = read_csv(&path).unwrap();
    assert_eq!(rows.len(), runs.len() * cfg.iterations);
    let mut it = rows.iter();
    for run in &runs {
        let mut prev = run.initial_best;
        for rec in &run.records {
            let (method, back) = it.next().unwrap();
            assert_eq!(method, &run.method);
            assert_eq!(back, rec);
            assert!(rec.best_so_far >= prev);
            prev = rec.best_so_far;
        }
        assert_eq!(run.records.last().unwrap().oracle_calls, cfg.iterations * cfg.batch);
    }
}

#[test]
fn oracles_are_pure() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for name in TASK_NAMES {
        let task = TaskSpec::by_name(name).unwrap();
        for _ in 0..20 {
            let x = task.random_point(&mut rng);
            let a = task.evaluate(&x).unwrap();
            let b = TaskSpec::by_name(name).unwrap().evaluate(&x).unwrap();
            assert_eq!(a.to_bits(), b.to_bits(), "{name}");
        }
    }
}

#[test]
fn discrete_designs_decode_to_queried_classes() {
    let task = TaskSpec::by_name("discrete7").unwrap();
    let classes = vec![3, 0, 2, 1, 1, 0, 3];
    let x = encode_discrete(&classes, 4).unwrap();
    assert_eq!(decode_discrete(&x, 4).unwrap(), classes);
    assert_eq!(task.evaluate(&x).unwrap(), task.eval_classes(&classes).unwrap());
}
