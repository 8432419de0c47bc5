use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use argus_core::alphabet::Alphabet;
use argus_core::cells::CellVariant;
use argus_core::checkpoint;
use argus_core::dataset::{self, LineRecord, SynthConfig};
use argus_core::decoder::{decode_line, DecoderConfig, THETA_DEFAULT};
use argus_core::gradcheck::{self, GradReport};
use argus_core::image::GrayImage;
use argus_core::lexicon::Lexicon;
use argus_core::network::{self, posteriors, NetConfig};
use argus_core::preprocess::{preprocess_line, NormConfig};
use argus_core::trainer::{self, RunDir, Sample, Schedule, TrainConfig, TrainPage, TrainSet, TrainState, Variant};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_NUMERIC: u8 = 3;
const GRADCHECK_LIMIT: f64 = 1e-4;

/// Offline handwriting recognition with multi-dimensional recurrent networks.
#[derive(Parser, Debug)]
#[command(name = "argus", version, args_override_self = true)]
struct Cli {
    /// Seed for every random choice (data generation, initialization, sampling).
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// File of `key=value` lines used as default flags for the subcommand.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Only log warnings and errors.
    #[arg(long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic corpus of handwriting-like line images.
    Synth(SynthArgs),
    /// Normalize every line image of a corpus.
    Preprocess(PreprocessArgs),
    /// Derive the alphabet file of a corpus.
    Alphabet(AlphabetArgs),
    /// Train a network with momentum SGD and CTC.
    Train(TrainArgs),
    /// Decode line images with a trained network.
    Decode(DecodeArgs),
    /// Score hypotheses against references and print WER and CER.
    Eval(EvalArgs),
    /// Build a dictionary from corpus transcripts.
    Dict(DictArgs),
    /// Compare analytic gradients with finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    #[arg(long, default_value_t = 10)]
    pages: usize,
    #[arg(long, default_value_t = 1)]
    lines_per_page: usize,
    /// Characters to draw (space is implicit); see the built-in stroke font.
    #[arg(long, default_value = argus_core::glyphs::LATIN)]
    glyphs: String,
    #[arg(long, default_value_t = 1)]
    min_words: usize,
    #[arg(long, default_value_t = 3)]
    max_words: usize,
    /// Draw words from a random vocabulary of this size (0: fresh random words).
    #[arg(long, default_value_t = 0)]
    vocabulary: usize,
    /// Write the vocabulary (one word per line) to this file.
    #[arg(long, value_name = "FILE")]
    vocabulary_out: Option<PathBuf>,
    /// x-height in pixels.
    #[arg(long, default_value_t = 40.0)]
    x_height: f64,
    /// Peak baseline wobble in pixels.
    #[arg(long, default_value_t = 8.0)]
    wobble: f64,
    /// Maximum absolute slant in radians.
    #[arg(long, default_value_t = 0.25)]
    slant: f64,
    #[arg(long, default_value_t = 5.0)]
    thickness: f64,
    /// Standard deviation of additive pixel noise.
    #[arg(long, default_value_t = 0.03)]
    noise: f64,
}

#[derive(Args, Debug)]
struct NormArgs {
    /// Canvas height before scaling, in pixels.
    #[arg(long, default_value_t = 180)]
    height: usize,
    /// Final scale factor.
    #[arg(long, default_value_t = 0.5)]
    scale: f64,
    /// Rows of the main body above the median curve.
    #[arg(long, default_value_t = 80.0)]
    above: f64,
    /// Rows of the main body below the median curve.
    #[arg(long, default_value_t = 60.0)]
    below: f64,
}

impl NormArgs {
    fn config(&self) -> anyhow::Result<NormConfig> {
        let cfg = NormConfig {
            above: self.above,
            below: self.below,
            target_height: self.height,
            scale: self.scale,
            ..NormConfig::default()
        };
        if let Err(e) = cfg.validate() {
            return Err(Usage(e).into());
        }
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
struct PreprocessArgs {
    #[arg(long = "in", value_name = "DIR")]
    input: PathBuf,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    #[command(flatten)]
    norm: NormArgs,
}

#[derive(Args, Debug)]
struct AlphabetArgs {
    #[arg(long, value_name = "DIR")]
    data: PathBuf,
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Training corpus directory.
    #[arg(long, value_name = "DIR")]
    data: PathBuf,
    #[arg(long, value_name = "FILE")]
    alphabet: PathBuf,
    /// Output directory for model.ckpt, metrics.csv and alphabet.txt.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Learning-rate schedule: s (1e-3 down to 5e-5 over 283 epochs) or l (1e-4 until 276, one epoch at 5e-5).
    #[arg(long, default_value = "s")]
    variant: Variant,
    #[arg(long, default_value = "mdleaky")]
    cell: CellVariant,
    /// Epochs to train (default: the last epoch of the schedule).
    #[arg(long)]
    epochs: Option<usize>,
    /// Use the desk-scale hierarchy (2/3/4 units) instead of 3/15/75.
    #[arg(long)]
    tiny: bool,
    /// Replace the schedule by a constant learning rate.
    #[arg(long)]
    lr: Option<f64>,
    /// Initial weights are uniform in [-R, R].
    #[arg(long, default_value_t = network::INIT_RANGE)]
    init_range: f64,
    /// Accumulate each epoch's gradients in parallel and step once.
    #[arg(long)]
    batch: bool,
    /// Validation corpus, decoded after every epoch.
    #[arg(long, value_name = "DIR")]
    val: Option<PathBuf>,
    /// Images are already normalized.
    #[arg(long)]
    preprocessed: bool,
    /// Continue from <out>/model.ckpt when it exists.
    #[arg(long)]
    resume: bool,
}

#[derive(Args, Debug)]
struct DecodeArgs {
    #[arg(long, value_name = "FILE")]
    model: PathBuf,
    /// Corpus directory, or a directory with pages/<page>/<line>.pgm images.
    #[arg(long = "in", value_name = "DIR")]
    input: PathBuf,
    /// Dictionary for Arabic words (omit for best-path decoding).
    #[arg(long, value_name = "FILE")]
    lexicon: Option<PathBuf>,
    /// Minimum per-frame geometric-mean score of a dictionary word (1/e).
    #[arg(long, default_value_t = THETA_DEFAULT)]
    theta: f64,
    /// Output file of `page/line<TAB>text` rows.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Alphabet file (default: alphabet.txt next to the model).
    #[arg(long, value_name = "FILE")]
    alphabet: Option<PathBuf>,
    #[arg(long)]
    preprocessed: bool,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long, value_name = "FILE")]
    hyp: PathBuf,
    #[arg(long = "ref", value_name = "FILE")]
    reference: PathBuf,
    /// Also print one row per line.
    #[arg(long)]
    per_line: bool,
}

#[derive(Args, Debug)]
struct DictArgs {
    #[arg(long, value_name = "DIR")]
    data: PathBuf,
    #[arg(long, default_value_t = 1)]
    min_count: usize,
    #[arg(long)]
    arabic_only: bool,
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct GradcheckArgs {
    #[arg(long, default_value = "mdleaky")]
    cell: CellVariant,
    /// Also check the whole tiny network against the CTC loss.
    #[arg(long)]
    full_net: bool,
}

/// A usage problem detected after argument parsing.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

/// A failed numeric check (gradient check above tolerance).
#[derive(Debug)]
struct NumericFailure(String);

impl std::fmt::Display for NumericFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for NumericFailure {}

/// Inserts `--key=value` flags from the config file right after the
/// subcommand name, so explicit command-line flags (which come later) win.
fn expand_config(args: Vec<String>) -> anyhow::Result<Vec<String>> {
    let mut config = None;
    let mut sub = None;
    let mut i = 1;
    while i < args.len() {
        let a = &args[i];
        if let Some(v) = a.strip_prefix("--config=") {
            config = Some(v.to_string());
        } else if a == "--config" {
            config = args.get(i + 1).cloned();
            i += 1;
        } else if a == "--seed" {
            i += 1;
        } else if !a.starts_with('-') && sub.is_none() {
            sub = Some(i);
        }
        i += 1;
    }
    let (Some(path), Some(sub)) = (config, sub) else {
        return Ok(args);
    };
    let content = fs::read_to_string(&path).with_context(|| format!("reading config file {path}"))?;
    let mut extra = Vec::new();
    for (n, raw) in content.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Usage(format!("{path}:{}: expected key=value", n + 1)).into());
        };
        let (key, value) = (key.trim().replace('_', "-"), value.trim());
        match value {
            "true" => extra.push(format!("--{key}")),
            "false" => {}
            v => extra.push(format!("--{key}={v}")),
        }
    }
    let mut out = args[..=sub].to_vec();
    out.extend(extra);
    out.extend_from_slice(&args[sub + 1..]);
    Ok(out)
}

fn write_text(path: &Path, content: &str) -> anyhow::Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, content).with_context(|| format!("writing {}", path.display()))
}

fn cmd_synth(a: &SynthArgs, seed: u64) -> anyhow::Result<()> {
    if a.min_words == 0 || a.min_words > a.max_words {
        return Err(Usage("--min-words must be in 1..=--max-words".into()).into());
    }
    let cfg = SynthConfig {
        glyphs: a.glyphs.clone(),
        words_per_line: (a.min_words, a.max_words),
        wobble_amplitude: a.wobble,
        slant_range: a.slant,
        stroke_thickness: a.thickness,
        noise: a.noise,
        x_height: a.x_height,
        seed,
        ..SynthConfig::default()
    };
    if cfg.letters().is_empty() {
        return Err(Usage("--glyphs names no drawable character".into()).into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocabulary = (a.vocabulary > 0).then(|| dataset::random_vocabulary(&cfg.letters(), a.vocabulary, cfg.word_length, &mut rng));
    let texts: Vec<(String, String, String)> = (0..a.pages)
        .flat_map(|p| (0..a.lines_per_page).map(move |l| (p, l)))
        .map(|(p, l)| (format!("p{p:05}"), format!("l{l:03}"), dataset::random_text(&cfg, vocabulary.as_deref(), &mut rng)))
        .collect();
    // one derived seed per line keeps rendering parallel and reproducible
    let records: Vec<LineRecord> = texts
        .into_par_iter()
        .enumerate()
        .map(|(i, (page, line, text))| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(i as u64 + 1);
            let image = dataset::synth_line(&text, &cfg, &mut r)?;
            Ok(LineRecord { page, line, text, image })
        })
        .collect::<argus_core::Result<_>>()?;
    let corpus = dataset::save_corpus(&a.out, &records)?;
    if let (Some(v), Some(path)) = (&vocabulary, &a.vocabulary_out) {
        Lexicon::new(v.iter().cloned()).save(path)?;
    }
    log::info!("wrote {} lines on {} pages to {}", corpus.line_count(), corpus.pages.len(), a.out.display());
    Ok(())
}

fn cmd_preprocess(a: &PreprocessArgs) -> anyhow::Result<()> {
    let norm = a.norm.config()?;
    let corpus = dataset::load_corpus(&a.input)?;
    let records: Vec<LineRecord> = corpus
        .lines()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(page, l)| {
            let image = preprocess_line(&corpus.load_image(page, &l.line)?, &norm);
            Ok(LineRecord {
                page: page.to_string(),
                line: l.line.clone(),
                text: l.text.clone(),
                image,
            })
        })
        .collect::<argus_core::Result<_>>()?;
    dataset::save_corpus(&a.out, &records)?;
    log::info!("normalized {} lines into {}", records.len(), a.out.display());
    Ok(())
}

fn cmd_alphabet(a: &AlphabetArgs) -> anyhow::Result<()> {
    let corpus = dataset::load_corpus(&a.data)?;
    let alphabet = dataset::derive_alphabet(&corpus)?;
    alphabet.save(&a.out)?;
    log::info!("{} classes (+ blank)", alphabet.len());
    Ok(())
}

/// Loads a corpus as training pages, normalizing images unless told otherwise.
fn load_train_set(dir: &Path, alphabet: &Alphabet, preprocessed: bool) -> anyhow::Result<TrainSet> {
    let corpus = dataset::load_corpus(dir)?;
    if corpus.is_empty() {
        bail!(argus_core::Error::Corpus(format!("{} contains no lines", dir.display())));
    }
    let norm = (!preprocessed).then(NormConfig::default);
    let pages = corpus
        .pages
        .par_iter()
        .map(|p| {
            let lines = p
                .lines
                .iter()
                .map(|l| {
                    let image = corpus.load_image(&p.id, &l.line)?;
                    Sample::from_raw(format!("{}/{}", p.id, l.line), &l.text, &image, norm.as_ref(), alphabet)
                })
                .collect::<argus_core::Result<_>>()?;
            Ok(TrainPage { id: p.id.clone(), lines })
        })
        .collect::<argus_core::Result<_>>()?;
    Ok(TrainSet { pages })
}

fn cmd_train(a: &TrainArgs, seed: u64) -> anyhow::Result<()> {
    let alphabet = Alphabet::load(&a.alphabet)?;
    let data = load_train_set(&a.data, &alphabet, a.preprocessed)?;
    let validation: Option<Vec<Sample>> = match &a.val {
        Some(dir) => Some(load_train_set(dir, &alphabet, a.preprocessed)?.samples().cloned().collect()),
        None => None,
    };
    let run = RunDir::new(&a.out)?;
    alphabet.save(a.out.join("alphabet.txt"))?;

    let net = if a.tiny {
        NetConfig::tiny(a.cell, alphabet.len())
    } else {
        NetConfig::standard(a.cell, alphabet.len())
    };
    let mut state = if a.resume && run.checkpoint().exists() {
        let state = TrainState::load(run.checkpoint(), seed)?;
        if state.params.config != net {
            bail!(argus_core::Error::Checkpoint(format!(
                "{} holds a different network configuration",
                run.checkpoint().display()
            )));
        }
        log::info!("resuming after epoch {}", state.epoch);
        state
    } else {
        TrainState::new(network::init_params_with_range(&net, seed, a.init_range)?, seed)
    };
    let schedule = match a.lr {
        Some(r) => Schedule::constant(r)?,
        None => Schedule::variant(a.variant),
    };
    let cfg = TrainConfig {
        epochs: a.epochs.unwrap_or(schedule.final_epoch()),
        schedule,
        batch: a.batch,
        ..TrainConfig::default()
    };
    log::info!(
        "{} parameters, {} pages, {} lines, epochs {}..={}",
        net.param_count(),
        data.pages.len(),
        data.samples().count(),
        state.epoch + 1,
        cfg.epochs
    );
    trainer::train(&cfg, &mut state, &data, validation.as_deref(), &alphabet, Some(&run), |_| ControlFlow::Continue(()))?;
    Ok(())
}

/// `(id, image)` for every line image below `dir`: from the transcript file
/// when present, otherwise from `pages/<page>/<line>.pgm`.
fn list_images(dir: &Path) -> anyhow::Result<Vec<(String, PathBuf)>> {
    let corpus = dataset::load_corpus(dir)?;
    if !corpus.is_empty() {
        return Ok(corpus
            .lines()
            .map(|(p, l)| (format!("{p}/{}", l.line), corpus.image_path(p, &l.line)))
            .collect());
    }
    let pages = dir.join("pages");
    let mut out = Vec::new();
    let read = |d: &Path| fs::read_dir(d).with_context(|| format!("listing {}", d.display()));
    if pages.is_dir() {
        for page in read(&pages)? {
            let page = page?.path();
            if !page.is_dir() {
                continue;
            }
            for file in read(&page)? {
                let file = file?.path();
                if file.extension().is_some_and(|e| e == "pgm") {
                    let id = format!(
                        "{}/{}",
                        page.file_name().unwrap().to_string_lossy(),
                        file.file_stem().unwrap().to_string_lossy()
                    );
                    out.push((id, file));
                }
            }
        }
    }
    out.sort();
    Ok(out)
}

fn cmd_decode(a: &DecodeArgs) -> anyhow::Result<()> {
    let cfg = DecoderConfig::with_theta(a.theta);
    if let Err(e) = cfg.validate() {
        return Err(Usage(e.to_string()).into());
    }
    let params = checkpoint::load_params(&a.model)?;
    let alphabet_path = a
        .alphabet
        .clone()
        .unwrap_or_else(|| a.model.parent().unwrap_or(Path::new(".")).join("alphabet.txt"));
    let alphabet = Alphabet::load(&alphabet_path)?;
    if alphabet.len() != params.config.alphabet_size {
        bail!(argus_core::Error::Shape(format!(
            "{} has {} classes but the model expects {}",
            alphabet_path.display(),
            alphabet.len(),
            params.config.alphabet_size
        )));
    }
    let tree = match &a.lexicon {
        Some(path) => {
            let mut lex = Lexicon::load(path)?;
            let dropped = lex.retain_spellable(&alphabet);
            if !dropped.is_empty() {
                log::warn!("{} dictionary words use characters outside the alphabet", dropped.len());
            }
            if lex.is_empty() {
                bail!(argus_core::Error::EmptyLexicon);
            }
            Some(lex.index(&alphabet)?)
        }
        None => None,
    };
    let images = list_images(&a.input)?;
    let norm = NormConfig::default();
    let rows: Vec<String> = images
        .par_iter()
        .map(|(id, path)| {
            let img = GrayImage::load_pgm(path)?;
            let writing = if a.preprocessed { img } else { preprocess_line(&img, &norm) };
            let text = decode_line(&posteriors(&writing, &params)?, &alphabet, tree.as_ref(), &cfg)?;
            Ok(format!("{id}\t{text}\n"))
        })
        .collect::<argus_core::Result<_>>()?;
    write_text(&a.out, &rows.concat())?;
    log::info!("decoded {} lines into {}", rows.len(), a.out.display());
    Ok(())
}

/// Reads `id<TAB>text` rows; three-column corpus rows become `page/line`.
fn read_transcripts(path: &Path) -> anyhow::Result<BTreeMap<String, String>> {
    let content = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = BTreeMap::new();
    for (n, raw) in content.split('\n').enumerate() {
        let row = raw.strip_suffix('\r').unwrap_or(raw);
        if row.is_empty() {
            continue;
        }
        let fields: Vec<&str> = row.split('\t').collect();
        let (id, text) = match fields.as_slice() {
            [id, text] => (id.to_string(), text.to_string()),
            [page, line, text] => (format!("{page}/{line}"), text.to_string()),
            _ => bail!(argus_core::Error::Corpus(format!("{}:{}: expected id<TAB>text", path.display(), n + 1))),
        };
        if out.insert(id.clone(), text).is_some() {
            bail!(argus_core::Error::Corpus(format!("{}:{}: duplicate id {id}", path.display(), n + 1)));
        }
    }
    Ok(out)
}

fn cmd_eval(a: &EvalArgs) -> anyhow::Result<()> {
    let hyp = read_transcripts(&a.hyp)?;
    let reference = read_transcripts(&a.reference)?;
    if reference.is_empty() {
        bail!(argus_core::Error::EmptyReference);
    }
    let missing = reference.keys().filter(|k| !hyp.contains_key(*k)).count();
    if missing > 0 {
        log::warn!("{missing} reference lines have no hypothesis and count as empty");
    }
    let extra = hyp.keys().filter(|k| !reference.contains_key(*k)).count();
    if extra > 0 {
        log::warn!("{extra} hypothesis lines have no reference and are ignored");
    }
    let eval = trainer::score(
        reference
            .iter()
            .map(|(id, r)| ((id.as_str(), r.as_str()), hyp.get(id).cloned().unwrap_or_default())),
    );
    let mut out = std::io::stdout().lock();
    if a.per_line {
        for l in &eval.lines {
            writeln!(out, "{}\t{:.2}\t{:.2}\t{}", l.id, l.counts.wer(), l.counts.cer(), l.hypothesis)?;
        }
    }
    writeln!(out, "WER {:.2} CER {:.2}", eval.wer(), eval.cer())?;
    Ok(())
}

fn cmd_dict(a: &DictArgs) -> anyhow::Result<()> {
    if a.min_count == 0 {
        return Err(Usage("--min-count must be at least 1".into()).into());
    }
    let corpus = dataset::load_corpus(&a.data)?;
    let lex = dataset::build_dictionary(corpus.transcripts(), a.min_count, a.arabic_only);
    lex.save(&a.out)?;
    log::info!("{} words written to {}", lex.len(), a.out.display());
    Ok(())
}

fn cmd_gradcheck(a: &GradcheckArgs, seed: u64) -> anyhow::Result<()> {
    let mut reports: Vec<GradReport> = gradcheck::check_cell(a.cell, seed);
    reports.extend(gradcheck::check_lattice(a.cell, seed));
    if a.full_net {
        reports.push(gradcheck::check_network(a.cell, seed)?);
    }
    let mut out = std::io::stdout().lock();
    for r in &reports {
        writeln!(out, "{:<40} {:>6} components  rel. error {:.3e}", r.what, r.components, r.rel_error)?;
    }
    let worst = reports.iter().map(|r| r.rel_error).fold(0.0, f64::max);
    writeln!(out, "max relative error {worst:.3e}")?;
    if !(worst <= GRADCHECK_LIMIT) {
        return Err(NumericFailure(format!("relative error {worst:.3e} exceeds {GRADCHECK_LIMIT:e}")).into());
    }
    Ok(())
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Synth(a) => cmd_synth(a, cli.seed),
        Command::Preprocess(a) => cmd_preprocess(a),
        Command::Alphabet(a) => cmd_alphabet(a),
        Command::Train(a) => cmd_train(a, cli.seed),
        Command::Decode(a) => cmd_decode(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Dict(a) => cmd_dict(a),
        Command::Gradcheck(a) => cmd_gradcheck(a, cli.seed),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<Usage>().is_some() {
        return EXIT_USAGE;
    }
    if err.downcast_ref::<NumericFailure>().is_some() {
        return EXIT_NUMERIC;
    }
    match err.downcast_ref::<argus_core::Error>() {
        Some(e) if e.is_numeric() => EXIT_NUMERIC,
        _ => EXIT_DATA,
    }
}

fn main() -> ExitCode {
    let args = match expand_config(std::env::args().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(if e.downcast_ref::<Usage>().is_some() { EXIT_USAGE } else { EXIT_DATA });
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = if cli.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
