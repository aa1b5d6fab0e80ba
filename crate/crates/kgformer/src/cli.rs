//! The `kgformer` command-line front end.
//!
//! Every command prints a one-line JSON summary on stdout. Commands that
//! write files put them under `--out` together with `<command>.config.json`,
//! the fully resolved configuration of the run. Exit codes: 0 success,
//! 1 usage error, 2 data error.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use kgformer_core::eval::link_prediction;
use kgformer_core::kgformer::{export_embeddings, train, ExportMode};
use kgformer_core::linker::fmm_link;
use kgformer_core::sampler::{convert, sample_ego_seeded};
use kgformer_core::transe::train_transe;
use kgformer_core::{KnowledgeGraph, Triple};
use serde_json::json;

use crate::checkpoint::{load_checkpoint, save_checkpoint};
use crate::config::{ExportArg, NegativeArg, NormArg, RunConfig, SettingArg};
use crate::error::Error;
use crate::formats::{
    dictionary_from_tsv, embeddings_to_text, graph_to_json, ingest_tsv, load_embeddings, load_graph, read_text,
    report_to_json, sample_to_json, spans_to_json_line, write_text,
};

#[derive(Debug, Parser)]
#[command(name = "kgformer", version, about = "Knowledge-graph embeddings with a graph-masked Transformer encoder")]
pub struct Cli {
    /// JSON run configuration; flags override its values
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Random seed for every sampler and initializer [config: seed]
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse a triple TSV and write `graph.json`
    Ingest {
        /// `subject<TAB>relation<TAB>object` file
        #[arg(long, value_name = "PATH")]
        triples: PathBuf,
    },
    /// Print degree statistics
    Stats(GraphArg),
    /// Inspect training samples
    Sample {
        #[command(subcommand)]
        action: SampleAction,
    },
    /// Train TransE embeddings and write `transe.emb`
    TrainTranse {
        #[command(flatten)]
        graph: GraphArg,
        #[command(flatten)]
        flags: TranseFlags,
    },
    /// Train the encoder and write the `model.kgtc` checkpoint
    TrainKgformer {
        #[command(flatten)]
        graph: GraphArg,
        /// Embedding file to initialize the embedding matrix from
        #[arg(long, value_name = "PATH")]
        init: Option<PathBuf>,
        #[command(flatten)]
        flags: KgformerFlags,
        #[command(flatten)]
        sampler: SamplerFlags,
    },
    /// Export an embedding table from a checkpoint to `embeddings.emb`
    Export {
        #[command(flatten)]
        graph: GraphArg,
        #[arg(long, value_name = "PATH")]
        checkpoint: PathBuf,
        /// base: the embedding matrix; encoded-mean: mean encoder output
        /// over ego samples [config: export.mode]
        #[arg(long, value_enum)]
        mode: Option<ExportArg>,
        /// Ego samples per entity in encoded-mean mode [config: export.k_samples]
        #[arg(long, value_name = "K")]
        k_samples: Option<usize>,
        #[command(flatten)]
        sampler: SamplerFlags,
    },
    /// Rank test triples against every entity and write `report.json`
    Eval {
        #[command(flatten)]
        graph: GraphArg,
        #[arg(long, value_name = "PATH")]
        embeddings: PathBuf,
        /// Test triples as labels (TSV); defaults to every graph triple
        #[arg(long, value_name = "PATH")]
        test: Option<PathBuf>,
        /// [config: eval.setting]
        #[arg(long, value_enum)]
        setting: Option<SettingArg>,
        /// Energy norm [config: eval.norm]
        #[arg(long, value_enum)]
        norm: Option<NormArg>,
    },
    /// Link dictionary terms in text, one document per line, to `links.jsonl`
    Link {
        #[command(flatten)]
        graph: GraphArg,
        /// `term<TAB>entity label` file
        #[arg(long, value_name = "PATH")]
        dictionary: PathBuf,
        #[arg(long, value_name = "PATH")]
        text: PathBuf,
        /// Shortest emitted span in characters [config: linker.min_len]
        #[arg(long, value_name = "N")]
        min_len: Option<usize>,
    },
}

#[derive(Debug, Subcommand)]
pub enum SampleAction {
    /// Print one ego sample as JSON and write `sample.json`
    Dump {
        #[command(flatten)]
        graph: GraphArg,
        /// Center entity label
        #[arg(long, value_name = "LABEL")]
        center: String,
        #[command(flatten)]
        sampler: SamplerFlags,
    },
}

#[derive(Debug, Args)]
pub struct GraphArg {
    /// Graph as a triple TSV or a `graph.json` dump
    #[arg(long, value_name = "PATH")]
    pub graph: PathBuf,
}

#[derive(Debug, Args)]
pub struct SamplerFlags {
    /// Incoming triples per ego sample [config: sampler.k_in]
    #[arg(long, value_name = "N")]
    pub k_in: Option<usize>,
    /// Outgoing triples per ego sample [config: sampler.k_out]
    #[arg(long, value_name = "N")]
    pub k_out: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TranseFlags {
    /// [config: transe.dim]
    #[arg(long)]
    pub dim: Option<usize>,
    /// [config: transe.margin]
    #[arg(long)]
    pub margin: Option<f64>,
    /// [config: transe.learning_rate]
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// [config: transe.epochs]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// [config: transe.batch_size]
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// [config: transe.norm]
    #[arg(long, value_enum)]
    pub norm: Option<NormArg>,
}

#[derive(Debug, Args)]
pub struct KgformerFlags {
    /// [config: kgformer.layers]
    #[arg(long)]
    pub layers: Option<usize>,
    /// [config: kgformer.heads]
    #[arg(long)]
    pub heads: Option<usize>,
    /// [config: kgformer.dim]
    #[arg(long)]
    pub dim: Option<usize>,
    /// Feed-forward width, default 4 x dim [config: kgformer.ff_dim]
    #[arg(long)]
    pub ff_dim: Option<usize>,
    /// [config: kgformer.margin]
    #[arg(long)]
    pub margin: Option<f64>,
    /// [config: kgformer.learning_rate]
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// [config: kgformer.epochs]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Samples per SGD step [config: kgformer.batch_size]
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// [config: kgformer.negative_mode]
    #[arg(long, value_enum)]
    pub negative_mode: Option<NegativeArg>,
    /// [config: kgformer.norm]
    #[arg(long, value_enum)]
    pub norm: Option<NormArg>,
}

fn set<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

impl SamplerFlags {
    fn apply(&self, c: &mut RunConfig) {
        set(&mut c.sampler.k_in, self.k_in);
        set(&mut c.sampler.k_out, self.k_out);
    }
}

impl TranseFlags {
    fn apply(&self, c: &mut RunConfig) {
        let t = &mut c.transe;
        set(&mut t.dim, self.dim);
        set(&mut t.margin, self.margin);
        set(&mut t.learning_rate, self.learning_rate);
        set(&mut t.epochs, self.epochs);
        set(&mut t.batch_size, self.batch_size);
        set(&mut t.norm, self.norm);
    }
}

impl KgformerFlags {
    fn apply(&self, c: &mut RunConfig) {
        let k = &mut c.kgformer;
        set(&mut k.layers, self.layers);
        set(&mut k.heads, self.heads);
        set(&mut k.dim, self.dim);
        if self.ff_dim.is_some() {
            k.ff_dim = self.ff_dim;
        }
        set(&mut k.margin, self.margin);
        set(&mut k.learning_rate, self.learning_rate);
        set(&mut k.epochs, self.epochs);
        set(&mut k.batch_size, self.batch_size);
        set(&mut k.negative_mode, self.negative_mode);
        set(&mut k.norm, self.norm);
    }
}

/// A failed run: usage problems exit 1, everything else 2.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Failure {
        Failure::Data(e.to_string())
    }
}

impl From<kgformer_core::Error> for Failure {
    fn from(e: kgformer_core::Error) -> Failure {
        Failure::Data(e.to_string())
    }
}

/// Parses `args` (program name first), runs the command and returns the exit
/// code. Summaries go to `stdout`, diagnostics to `stderr`.
pub fn main_with<W: Write, E: Write>(args: &[String], stdout: &mut W, stderr: &mut E) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { write!(stdout, "{text}") } else { write!(stderr, "{text}") };
            return code;
        }
    };
    match run(&cli) {
        Ok(summary) => {
            let _ = writeln!(stdout, "{summary}");
            0
        }
        Err(f) => {
            let msg = match &f {
                Failure::Usage(m) | Failure::Data(m) => m,
            };
            let _ = writeln!(stderr, "error: {msg}");
            f.exit_code()
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig, Failure> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::from_json(&read_text(path)?)
            .map_err(|m| Failure::Data(format!("{}: {m}", path.display())))?,
        None => RunConfig::default(),
    };
    set(&mut config.seed, cli.seed);
    Ok(config)
}

struct Output<'a> {
    dir: &'a Path,
    command: &'static str,
}

impl Output<'_> {
    fn prepare(&self, config: &RunConfig) -> Result<(), Failure> {
        std::fs::create_dir_all(self.dir).map_err(|e| Error::io(self.dir, e))?;
        let path = self.dir.join(format!("{}.config.json", self.command));
        write_text(&path, &config.to_json())?;
        Ok(())
    }

    fn write(&self, name: &str, text: &str) -> Result<PathBuf, Failure> {
        let path = self.dir.join(name);
        write_text(&path, text)?;
        Ok(path)
    }
}

fn ok_or_data<T, M: std::fmt::Display>(r: Result<T, M>, path: &Path) -> Result<T, Failure> {
    r.map_err(|m| Failure::Data(format!("{}: {m}", path.display())))
}

fn run(cli: &Cli) -> Result<String, Failure> {
    let mut config = load_config(cli)?;
    let out = |command| Output { dir: &cli.out, command };
    match &cli.command {
        Command::Ingest { triples } => {
            let file = std::fs::File::open(triples).map_err(|e| Error::io(triples, e))?;
            let (g, report) = ok_or_data(ingest_tsv(std::io::BufReader::new(file)), triples)?;
            let o = out("ingest");
            o.prepare(&config)?;
            let path = o.write("graph.json", &graph_to_json(&g))?;
            Ok(json!({
                "command": "ingest",
                "entities": g.entity_count(),
                "relations": g.relation_count(),
                "triples": g.triples().len(),
                "lines": report.lines,
                "duplicates": report.duplicates,
                "graph": path,
            })
            .to_string())
        }
        Command::Stats(graph) => {
            let g = load_graph(&graph.graph)?;
            let s = g.degree_stats()?;
            Ok(json!({"avg_in": s.avg_in, "avg_out": s.avg_out, "median_degree": s.median_degree}).to_string())
        }
        Command::Sample { action: SampleAction::Dump { graph, center, sampler } } => {
            sampler.apply(&mut config);
            let g = load_graph(&graph.graph)?;
            let id = g
                .entity_id(center)
                .ok_or_else(|| Failure::Data(format!("unknown entity {center:?}")))?;
            let sample = convert(&sample_ego_seeded(&g, id, config.fanout(), config.seed)?);
            let o = out("sample");
            o.prepare(&config)?;
            let text = sample_to_json(&sample);
            o.write("sample.json", &text)?;
            Ok(text.trim_end().to_string())
        }
        Command::TrainTranse { graph, flags } => {
            flags.apply(&mut config);
            let g = load_graph(&graph.graph)?;
            let trained = train_transe(&g, &config.transe_config())?;
            let o = out("train-transe");
            o.prepare(&config)?;
            let path = o.write("transe.emb", &embeddings_to_text(&trained.table))?;
            o.write("transe-losses.json", &(serde_json::to_string(&trained.epoch_losses).unwrap() + "\n"))?;
            Ok(json!({
                "command": "train-transe",
                "epochs": trained.epoch_losses.len(),
                "first_loss": trained.epoch_losses.first(),
                "final_loss": trained.epoch_losses.last(),
                "skipped": trained.skipped,
                "embeddings": path,
            })
            .to_string())
        }
        Command::TrainKgformer { graph, init, flags, sampler } => {
            flags.apply(&mut config);
            sampler.apply(&mut config);
            let g = load_graph(&graph.graph)?;
            let init = init.as_deref().map(load_embeddings).transpose()?;
            let trained = train(&g, &config.kgf_config(), init.as_ref())?;
            let o = out("train-kgformer");
            o.prepare(&config)?;
            let path = o.dir.join("model.kgtc");
            save_checkpoint(&trained.params, &path)?;
            o.write("kgformer-losses.json", &(serde_json::to_string(&trained.epoch_losses).unwrap() + "\n"))?;
            Ok(json!({
                "command": "train-kgformer",
                "epochs": trained.epoch_losses.len(),
                "first_loss": trained.epoch_losses.first(),
                "final_loss": trained.epoch_losses.last(),
                "skipped_samples": trained.skipped_samples,
                "checkpoint": path,
            })
            .to_string())
        }
        Command::Export { graph, checkpoint, mode, k_samples, sampler } => {
            set(&mut config.export.mode, *mode);
            set(&mut config.export.k_samples, *k_samples);
            sampler.apply(&mut config);
            let g = load_graph(&graph.graph)?;
            let params = load_checkpoint(checkpoint)?;
            let mode = match config.export.mode {
                ExportArg::Base => ExportMode::Base,
                ExportArg::EncodedMean => ExportMode::EncodedMean {
                    k_samples: config.export.k_samples,
                    fanout: config.fanout(),
                    seed: config.seed,
                },
            };
            let export = export_embeddings(&params, &g, mode)?;
            let o = out("export");
            o.prepare(&config)?;
            let path = o.write("embeddings.emb", &embeddings_to_text(&export.table))?;
            Ok(json!({
                "command": "export",
                "rows": export.table.rows(),
                "dim": export.table.dim(),
                "isolated_fallbacks": export.isolated_fallbacks,
                "unseen_relations": export.unseen_relations,
                "embeddings": path,
            })
            .to_string())
        }
        Command::Eval { graph, embeddings, test, setting, norm } => {
            set(&mut config.eval.setting, *setting);
            set(&mut config.eval.norm, *norm);
            let g = load_graph(&graph.graph)?;
            let table = load_embeddings(embeddings)?;
            let test = match test {
                Some(path) => ok_or_data(resolve_triples(&read_text(path)?, &g), path)?,
                None => g.triples().to_vec(),
            };
            let report = link_prediction(&table, &g, &test, config.eval.setting.into(), config.eval.norm.into())?;
            let o = out("eval");
            o.prepare(&config)?;
            let text = report_to_json(&report);
            o.write("report.json", &text)?;
            let compact: serde_json::Value = serde_json::from_str(&text).expect("report is JSON");
            Ok(compact.to_string())
        }
        Command::Link { graph, dictionary, text, min_len } => {
            set(&mut config.linker.min_len, *min_len);
            let g = load_graph(&graph.graph)?;
            let dict = ok_or_data(dictionary_from_tsv(&read_text(dictionary)?, &g), dictionary)?;
            let body = read_text(text)?;
            let mut lines = String::new();
            let (mut documents, mut spans) = (0, 0);
            for (i, doc) in body.lines().enumerate() {
                let found = fmm_link(doc, &dict, config.linker.min_len);
                lines.push_str(&spans_to_json_line(i + 1, &found));
                lines.push('\n');
                documents += 1;
                spans += found.len();
            }
            let o = out("link");
            o.prepare(&config)?;
            let path = o.write("links.jsonl", &lines)?;
            Ok(json!({"command": "link", "documents": documents, "spans": spans, "links": path}).to_string())
        }
    }
}

/// Label triples against an existing graph's vocabulary.
fn resolve_triples(text: &str, g: &KnowledgeGraph) -> Result<Vec<Triple>, String> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        let [s, r, o] = f[..] else {
            return Err(format!("line {}: expected 3 fields, found {}", i + 1, f.len()));
        };
        let unknown = |kind, label| format!("line {}: unknown {kind} {label:?}", i + 1);
        out.push(Triple {
            subject: g.entity_id(s).ok_or_else(|| unknown("entity", s))?,
            relation: g.relation_id(r).ok_or_else(|| unknown("relation", r))?,
            object: g.entity_id(o).ok_or_else(|| unknown("entity", o))?,
        });
    }
    Ok(out)
}
