use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::Arc;

use jointkg::dataset::{synthetic_dataset, SyntheticSpec};
use jointkg::diffmath::CHECKPOINT_VERSION;
use jointkg::eval::{classify, find_thresholds, make_classification_negatives};
use jointkg::{seeded_rng, Dataset, Dissimilarity, EntityId, JointModel, ModelConfig};

fn jointkg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_jointkg"))
        .args(args)
        .env("JOINTKG_LOG", "warn")
        .output()
        .expect("spawn jointkg")
}

fn ok(args: &[&str]) -> Output {
    let out = jointkg(args);
    assert!(
        out.status.success(),
        "{args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

/// `c0 -> c1 -> ... -> c9` under a single relation.
fn write_chain(dir: &Path) -> [PathBuf; 3] {
    let edge = |i: usize| format!("c{i}\tnext\tc{}\n", i + 1);
    let (valid, test) = ([1], [3, 6]);
    let train: String = (0..9).filter(|i| !valid.contains(i) && !test.contains(i)).map(edge).collect();
    let files = [
        ("train.txt", train),
        ("valid.txt", valid.iter().copied().map(edge).collect()),
        ("test.txt", test.iter().copied().map(edge).collect()),
    ];
    files.map(|(name, text)| {
        let p = dir.join(name);
        fs::write(&p, text).unwrap();
        p
    })
}

fn prepare_chain(dir: &Path, extra: &[&str]) -> (PathBuf, Output) {
    let [train, valid, test] = write_chain(dir);
    let bundle = dir.join("bundle.json");
    let mut args = vec![
        "prepare",
        "--bundle",
        s(&bundle),
        "--train",
        s(&train),
        "--valid",
        s(&valid),
        "--test",
        s(&test),
    ];
    args.extend_from_slice(extra);
    let out = ok(&args);
    (bundle, out)
}

fn csv_row(path: &Path) -> Vec<String> {
    let text = fs::read_to_string(path).unwrap();
    text.lines().nth(1).expect("data row").split(',').map(str::to_owned).collect()
}

#[test]
fn prepare_is_byte_identical_on_rerun() {
    let dir = tempfile::tempdir().unwrap();
    let (bundle, _) = prepare_chain(dir.path(), &[]);
    let first = fs::read(&bundle).unwrap();
    prepare_chain(dir.path(), &[]);
    assert_eq!(fs::read(&bundle).unwrap(), first);
}

#[test]
fn missing_descriptions_warn_and_fall_back_to_structure() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent.txt");
    let (bundle, out) = prepare_chain(dir.path(), &["--descriptions", s(&missing)]);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("not found"), "no warning in: {stderr}");
    let ds = Dataset::load(&bundle).unwrap();
    assert!((0..ds.entity_count()).all(|e| ds.descriptions.is_structure_only(EntityId(e as u32))));
}

#[test]
fn grad_check_passes_on_the_toy_instance() {
    let dir = tempfile::tempdir().unwrap();
    for encoder in ["nbow", "lstm", "alstm"] {
        ok(&["grad-check", "--encoder", encoder, "--out", s(dir.path())]);
    }
    assert!(dir.path().join("grad_check.csv").exists());
}

#[test]
fn perfect_chain_model_ranks_every_answer_first() {
    let dir = tempfile::tempdir().unwrap();
    let (bundle, _) = prepare_chain(dir.path(), &[]);
    let ds = Arc::new(Dataset::load(&bundle).unwrap());
    let cfg = ModelConfig::transe(2, Dissimilarity::L1, 1.0, 0.01);
    let mut model = JointModel::<f64>::new(cfg, Arc::clone(&ds), &mut seeded_rng(0)).unwrap();
    // e_i = i·u and r = u, so h + r lands exactly on the true tail.
    let (entity, relation) = (model.layout().entity_slot(), model.layout().relation_slot());
    let params = model.params_mut();
    for e in 0..ds.entity_count() {
        let i: f64 = ds.entities.name(e as u32)[1..].parse().unwrap();
        params.row_mut(entity, e).copy_from_slice(&[i, 0.0]);
    }
    params.row_mut(relation, 0).copy_from_slice(&[1.0, 0.0]);
    let ckpt = dir.path().join("chain.bin");
    model.to_checkpoint().save(&ckpt).unwrap();

    let out = dir.path().join("eval");
    ok(&["eval-lp", "--bundle", s(&bundle), "--checkpoint", s(&ckpt), "--out", s(&out)]);
    let row = csv_row(&out.join("link_prediction.csv"));
    let values: Vec<f64> = row[1..].iter().map(|v| v.parse().unwrap()).collect();
    assert_eq!(values, [1.0, 1.0, 100.0, 100.0], "{row:?}");
}

#[test]
fn eval_tc_matches_the_library() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SyntheticSpec {
        entities: 20,
        relations: 3,
        triples: 120,
        words: 10,
        max_len: 4,
    };
    let ds = Arc::new(synthetic_dataset(spec, 4).unwrap());
    let bundle = dir.path().join("bundle.json");
    ds.save(&bundle).unwrap();
    let cfg = ModelConfig {
        dim: 6,
        ..ModelConfig::default()
    };
    let mut rng = seeded_rng(9);
    let mut model = JointModel::<f64>::new(cfg, Arc::clone(&ds), &mut rng).unwrap();
    model.params_mut().randomize(1.0, &mut rng);
    let ckpt = dir.path().join("model.bin");
    model.to_checkpoint().save(&ckpt).unwrap();

    let out = dir.path().join("eval");
    ok(&["eval-tc", "--bundle", s(&bundle), "--checkpoint", s(&ckpt), "--out", s(&out), "--seed", "3"]);
    let row = csv_row(&out.join("classification.csv"));

    let mut rng = seeded_rng(3);
    let valid = make_classification_negatives(&ds.valid, ds.filter(), ds.entity_count(), &mut rng).unwrap();
    let test = make_classification_negatives(&ds.test, ds.filter(), ds.entity_count(), &mut rng).unwrap();
    let expected = classify(&model, &test, &find_thresholds(&model, &valid));
    assert_eq!(row[2], expected.correct.to_string());
    assert_eq!(row[3], expected.total.to_string());
}

#[test]
fn version_mismatches_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let (bundle, _) = prepare_chain(dir.path(), &[]);
    let ds = Arc::new(Dataset::load(&bundle).unwrap());
    let cfg = ModelConfig::transe(2, Dissimilarity::L1, 1.0, 0.01);
    let model = JointModel::<f64>::new(cfg, ds, &mut seeded_rng(0)).unwrap();
    let ckpt = dir.path().join("model.bin");
    model.to_checkpoint().save(&ckpt).unwrap();
    let out = dir.path().join("eval");
    ok(&["eval-lp", "--bundle", s(&bundle), "--checkpoint", s(&ckpt), "--out", s(&out)]);

    let mut bytes = fs::read(&ckpt).unwrap();
    bytes[8..12].copy_from_slice(&(CHECKPOINT_VERSION + 1).to_le_bytes());
    let stale_ckpt = dir.path().join("stale.bin");
    fs::write(&stale_ckpt, bytes).unwrap();
    let run = jointkg(&["eval-lp", "--bundle", s(&bundle), "--checkpoint", s(&stale_ckpt), "--out", s(&out)]);
    assert!(!run.status.success());
    assert!(String::from_utf8_lossy(&run.stderr).contains("version"));

    let text = fs::read_to_string(&bundle).unwrap();
    let stale_bundle = dir.path().join("stale.json");
    fs::write(&stale_bundle, text.replacen("\"format_version\":1", "\"format_version\":2", 1)).unwrap();
    let run = jointkg(&["eval-lp", "--bundle", s(&stale_bundle), "--checkpoint", s(&ckpt), "--out", s(&out)]);
    assert!(!run.status.success());
    assert!(String::from_utf8_lossy(&run.stderr).contains("version"));

    // A checkpoint trained on a different vocabulary.
    let other = synthetic_dataset(
        SyntheticSpec {
            entities: 10,
            relations: 1,
            triples: 20,
            words: 0,
            max_len: 1,
        },
        1,
    )
    .unwrap();
    let other_bundle = dir.path().join("other.json");
    other.save(&other_bundle).unwrap();
    let run = jointkg(&["eval-lp", "--bundle", s(&other_bundle), "--checkpoint", s(&ckpt), "--out", s(&out)]);
    assert!(!run.status.success());
}
