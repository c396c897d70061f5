//! Command-line entry points.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use affect_dialog::affect::{ClassifierConfig, VadLexicon, VadPrototypeClassifier};
use affect_dialog::annotation::{read_records, AnnotationStore, CurveOptions, GammaAssigner};
use affect_dialog::inference::DEFAULT_BEAM_SIZE;
use affect_dialog::metrics::{beam_bleu, evaluate};
use affect_dialog::model::{fit, write_checkpoint, ModelConfig, ModelVariant, RunDir, Seq2Seq, TrainConfig};
use affect_dialog::pipeline::{prepare_data, EmotionSpec, GenerationRequest, Generator};
use affect_dialog::text::{label_corpus, read_raw_pairs, SplitSpec, EOS, DEFAULT_VOCAB_SIZE};
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use crate::server::{gamma_report, router, AppState};

#[derive(Debug, Parser)]
#[command(name = "affect-dialog", version, about = "Affect-controlled dialog generation and gamma annotation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a forward (S-T) or reverse (T-S) model on a `prompt<TAB>response` corpus.
    Train(TrainArgs),
    /// Generate one re-ranked response.
    Generate(GenerateArgs),
    /// BLEU and distinct-1/2 of generated responses against a reference corpus.
    Evaluate(EvaluateArgs),
    /// Fit the gamma curve from an annotation store.
    GammaFit(GammaFitArgs),
    /// Serve the HTTP API.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// `baseline` or `+`-joined flags among see, sed, wi, we.
    #[arg(long, default_value = "baseline")]
    pub variant: ModelVariant,
    /// Train the reverse model (response to prompt) used for re-ranking.
    #[arg(long)]
    pub reverse: bool,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Run directory for config.json, metrics.jsonl and checkpoints.
    #[arg(long, default_value = "run")]
    pub out: PathBuf,
    /// Word VAD lexicon (`word<TAB>v<TAB>a<TAB>d`); words default to neutral without it.
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_VOCAB_SIZE)]
    pub max_vocab: usize,
    #[arg(long)]
    pub max_length: Option<usize>,
    #[arg(long)]
    pub embed_dim: Option<usize>,
    #[arg(long)]
    pub hidden_dim: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub dropout: Option<f64>,
    /// Weight of the affective regularizer.
    #[arg(long)]
    pub mu: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Forward checkpoint; must embed its vocabulary.
    #[arg(long)]
    pub fwd: PathBuf,
    /// Reverse checkpoint; without it re-ranking uses the forward score alone.
    #[arg(long)]
    pub rev: Option<PathBuf>,
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
}

impl ModelArgs {
    fn load(&self) -> Result<Generator> {
        Generator::from_files(&self.fwd, self.rev.as_deref(), self.lexicon.as_deref())
            .with_context(|| format!("loading {}", self.fwd.display()))
    }
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub prompt: String,
    /// An emotion name or six comma-separated probabilities.
    #[arg(long, default_value = "joy")]
    pub emotion: String,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_BEAM_SIZE)]
    pub beam: usize,
    /// Print the full candidate report as JSON.
    #[arg(long)]
    pub json: bool,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value_t = DEFAULT_BEAM_SIZE)]
    pub beam: usize,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Evaluate only the first N pairs.
    #[arg(long)]
    pub limit: Option<usize>,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args)]
pub struct GammaFitArgs {
    #[arg(long)]
    pub store: PathBuf,
    /// Ignore judgments whose annotated VAD norm is at most this.
    #[arg(long)]
    pub min_vad_norm: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, default_value = "annotations.jsonl")]
    pub store: PathBuf,
    #[arg(long, default_value_t = DEFAULT_BEAM_SIZE)]
    pub beam: usize,
    /// Give requests without a gamma the next grid value in turn.
    #[arg(long)]
    pub assign_gamma: bool,
    #[command(flatten)]
    pub model: ModelArgs,
}

pub fn parse_emotion(s: &str) -> Result<EmotionSpec> {
    if !s.contains(',') {
        return Ok(EmotionSpec::Name(s.trim().to_string()));
    }
    let parts: Vec<f64> = s.split(',').map(|p| p.trim().parse::<f64>()).collect::<Result<_, _>>()?;
    let Ok(v) = <[f64; 6]>::try_from(parts) else {
        bail!("an emotion vector needs exactly six values");
    };
    Ok(EmotionSpec::Vector(v))
}

fn load_lexicon(path: Option<&Path>) -> Result<VadLexicon<f64>> {
    Ok(match path {
        Some(p) => VadLexicon::load(p).with_context(|| format!("loading lexicon {}", p.display()))?,
        None => VadLexicon::new(),
    })
}

pub fn train(a: &TrainArgs) -> Result<()> {
    let lexicon = load_lexicon(a.lexicon.as_deref())?;
    let mut model_cfg = ModelConfig::new(0, a.variant);
    if let Some(n) = a.max_length {
        model_cfg.max_length = n;
    }
    let split = SplitSpec { seed: a.seed, ..SplitSpec::default() };
    let data = prepare_data(&a.corpus, &lexicon, a.max_vocab, model_cfg.max_length, &split)?;
    let (mut train, mut val) = (data.train, data.val);
    if a.reverse {
        // the reverse model is conditioned on the emotion of its own target, the prompt
        let classifier = VadPrototypeClassifier::new(ClassifierConfig::default(), lexicon.clone());
        train = label_corpus(&train.reverse(), &data.vocab, &classifier);
        val = label_corpus(&val.reverse(), &data.vocab, &classifier);
    }

    model_cfg.vocab_size = data.vocab.len();
    if let Some(d) = a.embed_dim {
        model_cfg.embed_dim = d;
    }
    if let Some(d) = a.hidden_dim {
        model_cfg.hidden_dim = d;
    }
    if let Some(p) = a.dropout {
        model_cfg.dropout = p;
    }
    let mut train_cfg = if a.reverse { TrainConfig::reverse() } else { TrainConfig::forward() };
    train_cfg.epochs = a.epochs;
    train_cfg.seed = a.seed;
    if let Some(b) = a.batch_size {
        train_cfg.batch_size = b;
    }
    if let Some(lr) = a.lr {
        train_cfg.adam.lr = lr;
    }
    if let Some(mu) = a.mu {
        train_cfg.mu = mu;
    }

    let mut model = Seq2Seq::new(model_cfg, data.vad, a.seed)?;
    let run = RunDir::create(&a.out)?.with_vocab(data.vocab.clone());
    eprintln!(
        "training {} {} model: {} train / {} val pairs, {} words",
        if a.reverse { "reverse" } else { "forward" },
        a.variant,
        train.len(),
        val.len(),
        data.vocab.len()
    );
    let reports = fit(&mut model, &train, &val, &train_cfg, Some(&run))?;
    for r in &reports {
        println!("{}", serde_json::to_string(r)?);
    }
    write_checkpoint(&model, Some(&data.vocab), run.root().join("final.ckpt"))?;
    eprintln!("wrote {}", run.root().display());
    Ok(())
}

pub fn generate(a: &GenerateArgs) -> Result<()> {
    let g = a.model.load()?;
    let req = GenerationRequest {
        prompt: a.prompt.clone(),
        emotion: parse_emotion(&a.emotion)?,
        gamma: a.gamma,
        beam_size: Some(a.beam),
    };
    let out = g.generate(&req)?;
    if a.json {
        println!("{}", serde_json::to_string_pretty(&out)?);
    } else {
        println!("{}", out.response);
    }
    Ok(())
}

/// Each reference response's classified emotion is the generation target.
pub fn evaluate_corpus(a: &EvaluateArgs) -> Result<()> {
    let g = a.model.load()?;
    let mut raw = read_raw_pairs(&a.corpus)?;
    if let Some(n) = a.limit {
        raw.truncate(n);
    }
    if raw.is_empty() {
        bail!("{} holds no pairs", a.corpus.display());
    }
    let mut selected = Vec::with_capacity(raw.len());
    let mut beams = Vec::with_capacity(raw.len());
    let mut references = Vec::with_capacity(raw.len());
    for (prompt, response) in raw {
        let words: Vec<&str> = response.iter().map(String::as_str).collect();
        let target = g.classifier().classify(&words);
        let req = GenerationRequest {
            prompt: prompt.join(" "),
            emotion: EmotionSpec::Vector(*target.probs()),
            gamma: a.gamma,
            beam_size: Some(a.beam),
        };
        let out = g.generate(&req)?;
        let words_of = |ids: &[usize]| -> Vec<String> {
            let content = ids.strip_suffix(&[EOS]).unwrap_or(ids);
            g.vocab().decode(content).into_iter().map(str::to_string).collect()
        };
        let cands: Vec<Vec<String>> = out.candidates.iter().map(|c| words_of(&c.ids)).collect();
        selected.push(cands[out.selected].clone());
        beams.push(cands);
        references.push(response);
    }
    let mut report = evaluate(&selected, &references)?;
    report.beam_bleu = Some(beam_bleu(&beams, &references)?);
    println!("{}", serde_json::to_string(&report)?);
    Ok(())
}

pub fn gamma_fit(a: &GammaFitArgs) -> Result<()> {
    let records = read_records(&a.store)?;
    let report = gamma_report(&records, &CurveOptions { min_vad_norm: a.min_vad_norm })?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

pub async fn serve(a: &ServeArgs) -> Result<()> {
    let mut generator = a.model.load()?;
    generator.beam_size = a.beam;
    let store = AnnotationStore::open(&a.store).with_context(|| format!("opening {}", a.store.display()))?;
    // resume the rotation where the stored judgments left off
    let assigner = a.assign_gamma.then(|| GammaAssigner::starting_at(store.len()));
    let state = Arc::new(AppState { generator, store, assigner, curve: CurveOptions::default() });
    let addr: SocketAddr = format!("{}:{}", a.host, a.port).parse().context("bad listen address")?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Train(a) => train(a),
        Command::Generate(a) => generate(a),
        Command::Evaluate(a) => evaluate_corpus(a),
        Command::GammaFit(a) => gamma_fit(a),
        Command::Serve(a) => tokio::runtime::Runtime::new()?.block_on(serve(a)),
    }
}
