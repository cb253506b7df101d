use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use rse_core::cli_io::{save_model, ModelArtifact};
use rse_core::encoder::build_vocab;
use rse_core::numerics::SeededRng;
use rse_core::training::TrainConfig;
use rse_core::RseModel;

fn rse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rse"))
        .args(args)
        .output()
        .expect("spawn rse")
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn small_model(dir: &Path, zero_relations: bool) -> String {
    let vocab = build_vocab(&["the cat sat on the mat", "a dog ran far"], 1).unwrap();
    let mut model =
        RseModel::init(vocab, &["para", "entail", "qa"], 8, 6, 32, &mut SeededRng::new(4)).unwrap();
    if zero_relations {
        model.relations.embeddings_mut().as_mut_slice().fill(0.0);
    }
    let path = dir.join("m.rse");
    save_model(&ModelArtifact::new(model, TrainConfig::default()), &path).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn score_of_identical_sentences_under_zero_relation_is_one() {
    let dir = tempfile::tempdir().unwrap();
    let m = small_model(dir.path(), true);
    let out = rse(&["score", "--model", &m, "--relation", "para", "--s1", "the cat sat", "--s2", "the cat sat"]);
    assert_eq!(stdout(&out), "1.000000\n");
    let out = rse(&["score", "--model", &m, "--weights", "para=1,entail=0.5", "--s1", "a dog", "--s2", "a dog"]);
    assert_eq!(stdout(&out), "1.500000\n");
}

#[test]
fn rel_sim_is_symmetric_as_printed() {
    let dir = tempfile::tempdir().unwrap();
    let m = small_model(dir.path(), false);
    let text = stdout(&rse(&["rel-sim", "--model", &m]));
    let rows: Vec<Vec<&str>> = text.lines().map(|l| l.split('\t').collect()).collect();
    assert_eq!(rows[0], ["relation", "para", "entail", "qa"]);
    assert_eq!(rows.len(), 4);
    for i in 1..4 {
        assert_eq!(rows[i][i], "1.000000");
        for j in 1..4 {
            assert_eq!(rows[i][j], rows[j][i]);
        }
    }
}

#[test]
fn embed_writes_one_vector_per_line() {
    let dir = tempfile::tempdir().unwrap();
    let m = small_model(dir.path(), false);
    let input = dir.path().join("in.txt");
    fs::write(&input, "the cat\nunknown words only\na dog ran\n").unwrap();
    let out = dir.path().join("emb.txt");
    stdout(&rse(&["embed", "--model", &m, "--in", input.to_str().unwrap(), "--out", out.to_str().unwrap()]));
    let text = fs::read_to_string(out).unwrap();
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    for l in lines {
        let vals: Vec<f64> = l.split(' ').map(|v| v.parse().unwrap()).collect();
        assert_eq!(vals.len(), 6);
    }
}

#[test]
fn eval_commands_report_expected_shapes() {
    let dir = tempfile::tempdir().unwrap();
    let m = small_model(dir.path(), false);
    let triples = dir.path().join("t.jsonl");
    fs::write(&triples, "{\"head\":\"the cat\",\"relation\":\"para\",\"tail\":\"a dog\"}\n").unwrap();
    let text = stdout(&rse(&["eval-linkpred", "--model", &m, "--triples", triples.to_str().unwrap()]));
    assert_eq!(
        text,
        "scope\tcount\tmrr\thits@1\thits@3\thits@10\n\
         all\t1\t1.000000\t1.000000\t1.000000\t1.000000\n\
         para\t1\t1.000000\t1.000000\t1.000000\t1.000000\n"
    );

    let pairs = dir.path().join("p.tsv");
    fs::write(&pairs, "the cat\tthe cat\t5\nthe cat\ta dog\t1\nsat on\tthe mat\t2\n").unwrap();
    let text = stdout(&rse(&["eval-pairs", "--model", &m, "--pairs", pairs.to_str().unwrap(), "--weights", "para=1"]));
    assert!(text.starts_with("spearman\t"), "{text}");
}

#[test]
fn train_writes_model_and_log() {
    let dir = tempfile::tempdir().unwrap();
    let d = |n: &str| dir.path().join(n).to_str().unwrap().to_string();
    stdout(&rse(&["synth", "--out-dir", &d(""), "--seed", "3"]));
    fs::write(d("cfg"), "# small run\nepochs=1\nbatch_size=32\neval_every_steps=4\n").unwrap();
    let text = stdout(&rse(&[
        "train", "--triples", &d("train.jsonl"), "--relations", "rel_b,rel_c",
        "--dev-linkpred", &d("dev.jsonl"), "--config", &d("cfg"), "--out", &d("m.rse"), "--log", &d("log.jsonl"),
    ]));
    assert!(text.contains("best_step\t"), "{text}");
    let log = fs::read_to_string(d("log.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 600 / 32 + 1);
    assert!(log.lines().next().unwrap().contains("\"loss\""));
    assert!(Path::new(&d("m.rse")).exists());
}

fn assert_one_line_error(o: &Output, code: i32) {
    assert_eq!(o.status.code(), Some(code));
    let err = String::from_utf8_lossy(&o.stderr);
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
}

#[test]
fn errors_exit_nonzero_with_one_line() {
    let dir = tempfile::tempdir().unwrap();
    assert_one_line_error(&rse(&["score", "--bogus"]), 2);
    assert_one_line_error(&rse(&["rel-sim", "--model", "/nonexistent/m.rse"]), 1);

    let bad = dir.path().join("bad.rse");
    fs::write(&bad, b"RSE1 not really").unwrap();
    let o = rse(&["rel-sim", "--model", bad.to_str().unwrap()]);
    assert_one_line_error(&o, 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("corrupt"));

    let triples = dir.path().join("t.jsonl");
    fs::write(&triples, "{\"head\":\"a\",\"relation\":\"r1\",\"tail\":\"b\"}\n{\"head\":\"a\",\"relation\":\"zz\",\"tail\":\"b\"}\n").unwrap();
    let target = dir.path().join("out").join("m.rse");
    let o = rse(&[
        "train", "--triples", triples.to_str().unwrap(), "--relations", "r1", "--out", target.to_str().unwrap(),
    ]);
    assert_one_line_error(&o, 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
    assert!(!target.exists());
}
