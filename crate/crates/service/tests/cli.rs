use std::path::Path;
use std::process::{Command, Output};

use affect_dialog::affect::{EmotionDistribution, VadVector};
use affect_dialog::annotation::{gamma_grid, AnnotationStore, NewAnnotation};
use affect_dialog::metrics::EvalReport;
use affect_dialog::model::{load_checkpoint, EpochReport, ModelVariant};
use affect_dialog::pipeline::GenerationResponse;
use affect_dialog_service::server::GammaCurveReport;

fn bin(args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_affect-dialog")).args(args).output().unwrap();
    assert!(
        out.status.success(),
        "{args:?} failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn write_corpus(dir: &Path) -> (String, String) {
    let pairs = [
        ("hello there", "hi , happy to see you"),
        ("how are you ?", "i am happy today"),
        ("what happened ?", "something sad happened"),
        ("are you angry ?", "yes i am angry"),
        ("good morning", "morning , what a happy day"),
        ("did you see that ?", "yes , it was scary"),
        ("tell me a story", "once upon a time"),
        ("why so sad ?", "i lost my dog"),
    ];
    let corpus: String = pairs.iter().cycle().take(100).map(|(p, r)| format!("{p}\t{r}\n")).collect();
    let corpus_path = dir.join("corpus.tsv");
    std::fs::write(&corpus_path, corpus).unwrap();
    let lexicon = "happy\t0.95\t0.8\t0.8\nsad\t0.1\t0.2\t0.2\nangry\t0.1\t0.9\t0.8\nscary\t0.1\t0.9\t0.1\n";
    let lexicon_path = dir.join("lexicon.tsv");
    std::fs::write(&lexicon_path, lexicon).unwrap();
    (corpus_path.display().to_string(), lexicon_path.display().to_string())
}

fn train(corpus: &str, lexicon: &str, out: &Path, variant: &str, reverse: bool) -> Vec<EpochReport> {
    let out_s = out.display().to_string();
    let mut args = vec![
        "train", "--corpus", corpus, "--lexicon", lexicon, "--variant", variant, "--epochs", "3", "--seed", "7", "--out",
        &out_s, "--embed-dim", "8", "--hidden-dim", "8", "--batch-size", "8", "--max-length", "8",
    ];
    if reverse {
        args.push("--reverse");
    }
    let out = bin(&args);
    String::from_utf8(out.stdout).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

#[test]
fn train_generate_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let (corpus, lexicon) = write_corpus(dir.path());
    let fwd_dir = dir.path().join("fwd");
    let rev_dir = dir.path().join("rev");

    let reports = train(&corpus, &lexicon, &fwd_dir, "wi+we", false);
    assert_eq!(reports.len(), 3);
    assert!(reports.iter().all(|r| r.train_loss.is_finite() && r.val_loss.is_some()));
    assert_eq!(reports[0].lr, 0.001);
    for f in ["config.json", "metrics.jsonl", "best.ckpt", "final.ckpt"] {
        assert!(fwd_dir.join(f).exists(), "missing {f}");
    }
    let ckpt = load_checkpoint::<f64>(fwd_dir.join("best.ckpt")).unwrap();
    assert_eq!(ckpt.model.config().variant, ModelVariant::WI_WE);
    assert!(ckpt.vocab.is_some());

    let rev_reports = train(&corpus, &lexicon, &rev_dir, "wi", true);
    assert_eq!(rev_reports[0].lr, 0.01);

    let fwd = fwd_dir.join("best.ckpt").display().to_string();
    let rev = rev_dir.join("best.ckpt").display().to_string();
    let model = ["--fwd", fwd.as_str(), "--rev", rev.as_str(), "--lexicon", lexicon.as_str()];

    let mut args = vec!["generate", "--prompt", "how are you?", "--emotion", "joy", "--beam", "5", "--json"];
    args.extend(model);
    let out: GenerationResponse = serde_json::from_slice(&bin(&args).stdout).unwrap();
    assert_eq!(out.gamma, 4.2);
    assert_eq!(out.candidates.len(), 5);
    assert!(out.candidates.iter().all(|c| c.rev_logprob.is_some()));

    // deterministic across processes; plain mode prints just the response
    let again: GenerationResponse = serde_json::from_slice(&bin(&args).stdout).unwrap();
    assert_eq!(serde_json::to_value(&out).unwrap(), serde_json::to_value(&again).unwrap());
    let plain = String::from_utf8(bin(&args[..args.len() - 7].iter().chain(&model).copied().collect::<Vec<_>>()).stdout).unwrap();
    assert_eq!(plain.trim_end(), out.response);

    let mut args = vec!["generate", "--prompt", "hello", "--emotion", "0,0,0.5,0.5,0,0", "--gamma", "2", "--beam", "1", "--json"];
    args.extend(model);
    let out: GenerationResponse = serde_json::from_slice(&bin(&args).stdout).unwrap();
    assert_eq!(out.gamma, 2.0);
    assert_eq!(out.candidates.len(), 1);

    let mut args = vec!["evaluate", "--corpus", corpus.as_str(), "--beam", "3", "--limit", "6"];
    args.extend(model);
    let report: EvalReport = serde_json::from_slice(&bin(&args).stdout).unwrap();
    assert!((0.0..=1.0).contains(&report.bleu));
    assert!(report.distinct1 > 0.0 && report.distinct1 <= 1.0);
    let beam = report.beam_bleu.unwrap();
    assert!(beam.max >= beam.mean);
}

#[test]
fn gamma_fit_reads_store() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ann.jsonl");
    let store = AnnotationStore::open(&path).unwrap();
    let grid = gamma_grid();
    let joy = EmotionDistribution::one_hot(affect_dialog::affect::Emotion::Joy);
    // joy is VAD [1, 1, 1]; judgments move closer to it around grid[8]
    for (i, &g) in grid.iter().enumerate() {
        let off = (i as f64 - 8.0).abs() / 20.0;
        store
            .record(NewAnnotation {
                prompt: "p".into(),
                response: "r".into(),
                target_emotion: joy,
                gamma_used: g,
                annotated_vad: VadVector::new(1.0 - off, 1.0, 1.0),
                delta_e: None,
            })
            .unwrap();
    }
    drop(store);
    let out = bin(&["gamma-fit", "--store", &path.display().to_string()]);
    let report: GammaCurveReport = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report.gamma_opt, grid[8]);
    assert_eq!(report.curve.counts, vec![1; 20]);
    assert_eq!(report.per_emotion["joy"].gamma_opt, grid[8]);
}

#[test]
fn bad_input_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.jsonl").display().to_string();
    let out = Command::new(env!("CARGO_BIN_EXE_affect-dialog")).args(["gamma-fit", "--store", &missing]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));

    let out = Command::new(env!("CARGO_BIN_EXE_affect-dialog"))
        .args(["train", "--corpus", "x", "--variant", "nope"])
        .output()
        .unwrap();
    assert!(!out.status.success());
}
