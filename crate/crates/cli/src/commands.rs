use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use entcl::batching::{
    birthday_collision_probability, duplicate_collision_rate, read_distribution, uniform_distribution, write_distribution,
};
use entcl::corpus::{entity_frequencies, entity_statistics, partition, segment_and_filter, CorpusSplit, DefinitionDictionary};
use entcl::encoder::Model;
use entcl::evaluation::{evaluate, read_sts, scatter_svg, write_sts, PlotPoint, StsPair};
use entcl::experiments::{run_grid, Benchmark, BenchmarkConfig, ExperimentGrid, GridReport};
use entcl::training::{resolve_config, select_best_step, stream_rng, train_with, write_trace, TrainConfig, TrainData};
use entcl::Error;
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::{Cli, Command, ConfigArgs, DataArgs};

const DOCUMENTS: &str = "documents.txt";
const DICTIONARY: &str = "dictionary.jsonl";
const SPLIT: &str = "split.jsonl";
const STS_ALL: &str = "sts.tsv";
const STS_TRAIN: &str = "sts_train.tsv";
const STS_TEST: &str = "sts_test.tsv";

/// Exit status and one-line JSON diagnostic for a failed command.
pub fn describe_error(e: &anyhow::Error) -> (u8, String) {
    let core = e.chain().find_map(|c| c.downcast_ref::<Error>());
    let (code, kind, key) = match core {
        Some(Error::Config { key, .. }) => (2, "config", Some(key.clone())),
        Some(Error::Io { source, .. }) if source.kind() == std::io::ErrorKind::NotFound => (3, "missing_file", None),
        Some(Error::Io { .. }) => (1, "io", None),
        Some(Error::Parse { .. }) => (1, "parse", None),
        Some(Error::NonFiniteLoss { .. }) => (1, "non_finite_loss", None),
        Some(_) => (1, "error", None),
        None => (1, "error", None),
    };
    // Core errors already render their source; anyhow's alternate form would
    // repeat it.
    let message = match e.downcast_ref::<Error>() {
        Some(core) => core.to_string(),
        None => format!("{e:#}"),
    };
    let mut obj = json!({ "error": kind, "message": message });
    if let Some(k) = key {
        obj["key"] = json!(k);
    }
    (code, obj.to_string())
}

fn ensure_exists(path: &Path) -> Result<()> {
    if !path.exists() {
        return Err(Error::Io {
            path: path.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "no such file"),
        }
        .into());
    }
    Ok(())
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(())
}

fn create_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    Ok(())
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Records how an artifact directory was produced.
#[derive(Serialize)]
struct RunRecord<'a> {
    command: &'a str,
    seed: u64,
    inputs: BTreeMap<&'a str, String>,
}

fn snapshot(out: &Path, command: &str, seed: u64, inputs: BTreeMap<&str, String>, config_toml: &str) -> Result<()> {
    write(&out.join("config.toml"), config_toml)?;
    let run = RunRecord { command, seed, inputs };
    write(&out.join("run.toml"), toml::to_string(&run)?)
}

fn print_out(text: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn print_json(value: &impl Serialize) -> Result<()> {
    print_out(&(serde_json::to_string_pretty(value)? + "\n"))
}

pub fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Synth(cfg) => synth(cli, cfg),
        Command::Preprocess {
            documents,
            dictionary,
            min_words,
        } => preprocess(cli, documents, dictionary, *min_words),
        Command::Stats { split } => stats(cli, split),
        Command::Train { config, data } => train_cmd(cli, config, data),
        Command::Eval {
            checkpoint,
            pairs,
            pooling,
            whiten,
            report,
            plot,
        } => {
            ensure_exists(checkpoint)?;
            ensure_exists(pairs)?;
            let model = Model::load(checkpoint)?;
            let pairs = read_sts(pairs)?;
            let r = evaluate(&model, *pooling, &pairs, *whiten)?;
            if let Some(p) = report {
                write(p, serde_json::to_string_pretty(&r)? + "\n")?;
            }
            if let Some(p) = plot {
                let point = PlotPoint {
                    label: checkpoint.display().to_string(),
                    alignment: r.alignment.unwrap_or(f64::NAN),
                    uniformity: r.uniformity,
                    srocc: r.srocc,
                };
                write(p, scatter_svg(&[point]))?;
            }
            print_json(&r)
        }
        Command::SimulateDuplicates {
            uniform,
            distribution,
            batch_size,
            trials,
        } => {
            let dist = match (uniform, distribution) {
                (Some(k), _) => uniform_distribution(*k),
                (None, Some(p)) => {
                    ensure_exists(p)?;
                    read_distribution(p)?
                }
                (None, None) => unreachable!("clap requires one source"),
            };
            let mut rng = stream_rng(cli.seed, 0);
            let est = duplicate_collision_rate(&dist, *batch_size, *trials, &mut rng)?;
            let analytic = uniform.map(|k| birthday_collision_probability(k, *batch_size));
            print_json(&json!({
                "p_any_duplicate": est.p_any_duplicate,
                "mean_unique_fraction": est.mean_unique_fraction,
                "analytic_uniform": analytic,
                "entities": dist.len(),
                "batch_size": batch_size,
                "trials": trials,
                "seed": cli.seed,
            }))
        }
        Command::Grid {
            recipe,
            grid,
            overrides,
            workers,
            data,
        } => grid_cmd(cli, recipe.as_deref(), grid.as_deref(), overrides, *workers, data),
        Command::Report { grid, csv } => {
            ensure_exists(grid)?;
            let text = fs::read_to_string(grid).with_context(|| format!("reading {}", grid.display()))?;
            let report: GridReport = serde_json::from_str(&text).with_context(|| format!("parsing {}", grid.display()))?;
            print_out(&report.to_text_table())?;
            if let Some(p) = csv {
                write(p, report.to_csv())?;
            }
            Ok(())
        }
    }
}

fn load_toml<T: serde::de::DeserializeOwned + Serialize + Default>(args: &ConfigArgs) -> Result<T> {
    let text = match &args.config {
        Some(p) => {
            ensure_exists(p)?;
            fs::read_to_string(p).map_err(|source| Error::Io { path: p.clone(), source })?
        }
        None => String::new(),
    };
    Ok(resolve_config(&text, &args.overrides)?)
}

fn synth(cli: &Cli, args: &ConfigArgs) -> Result<()> {
    let cfg: BenchmarkConfig = load_toml(args)?;
    let corpus = entcl::corpus::generate_synthetic_corpus(&cfg.synth, cli.seed)?;
    let bench = Benchmark::from_corpus(&corpus, cfg.min_words, cfg.train_pair_fraction);
    let out = &cli.out;
    create_out(out)?;
    write(&out.join(DOCUMENTS), corpus.documents.join("\n\n") + "\n")?;
    corpus.dictionary.write(&out.join(DICTIONARY))?;
    bench.split.write(&out.join(SPLIT))?;
    write_sts(&out.join(STS_ALL), &corpus.sts)?;
    write_sts(&out.join(STS_TRAIN), &bench.train_pairs)?;
    write_sts(&out.join(STS_TEST), &bench.test_pairs)?;
    snapshot(out, "synth", cli.seed, BTreeMap::new(), &toml::to_string(&cfg)?)?;
    let mut hashes = BTreeMap::new();
    for f in [DOCUMENTS, DICTIONARY, SPLIT, STS_ALL, STS_TRAIN, STS_TEST] {
        hashes.insert(f, sha256_file(&out.join(f))?);
    }
    write(&out.join("manifest.json"), serde_json::to_string_pretty(&hashes)? + "\n")?;
    print_json(&json!({
        "out": out,
        "documents": corpus.documents.len(),
        "s_all": bench.split.s_all.len(),
        "s_ent": bench.split.s_ent.len(),
        "s_none": bench.split.s_none.len(),
        "sts_pairs": corpus.sts.len(),
        "sha256": hashes,
    }))
}

fn read_documents(path: &Path) -> Result<Vec<String>> {
    ensure_exists(path)?;
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut docs = Vec::new();
    let mut current = String::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            if !current.is_empty() {
                docs.push(std::mem::take(&mut current));
            }
        } else {
            if !current.is_empty() {
                current.push(' ');
            }
            current.push_str(line.trim());
        }
    }
    if !current.is_empty() {
        docs.push(current);
    }
    Ok(docs)
}

fn preprocess(cli: &Cli, documents: &Path, dictionary: &Path, min_words: usize) -> Result<()> {
    let docs = read_documents(documents)?;
    ensure_exists(dictionary)?;
    let dict = DefinitionDictionary::read(dictionary)?;
    let sentences = segment_and_filter(&docs, min_words);
    let split = partition(&sentences, &dict);
    let out = &cli.out;
    create_out(out)?;
    split.write(&out.join(SPLIT))?;
    dict.write(&out.join(DICTIONARY))?;
    let inputs = BTreeMap::from([
        ("documents", documents.display().to_string()),
        ("dictionary", dictionary.display().to_string()),
    ]);
    snapshot(out, "preprocess", cli.seed, inputs, &format!("min_words = {min_words}\n"))?;
    print_json(&json!({
        "documents": docs.len(),
        "sentences": sentences.len(),
        "s_ent": split.s_ent.len(),
        "s_none": split.s_none.len(),
        "split": out.join(SPLIT),
    }))
}

fn stats(cli: &Cli, split_path: &Path) -> Result<()> {
    ensure_exists(split_path)?;
    let split = CorpusSplit::read(split_path)?;
    let s = entity_statistics(&split);
    let out = &cli.out;
    create_out(out)?;
    let freq_path = out.join("entity_frequencies.tsv");
    write_distribution(&freq_path, &entity_frequencies(&split))?;
    write(&out.join("stats.json"), serde_json::to_string_pretty(&s)? + "\n")?;
    print_json(&s)
}

struct LoadedData {
    split: CorpusSplit,
    dictionary: DefinitionDictionary,
    train_pairs: Vec<StsPair>,
    test_pairs: Vec<StsPair>,
    paths: BTreeMap<&'static str, String>,
}

impl LoadedData {
    fn view(&self) -> TrainData<'_> {
        TrainData {
            split: &self.split,
            dictionary: &self.dictionary,
            train_pairs: &self.train_pairs,
            test_pairs: &self.test_pairs,
        }
    }
}

fn resolve(explicit: &Option<PathBuf>, dir: &Option<PathBuf>, name: &str, flag: &str) -> Result<PathBuf> {
    let p = match (explicit, dir) {
        (Some(p), _) => p.clone(),
        (None, Some(d)) => d.join(name),
        (None, None) => {
            return Err(Error::Config {
                key: flag.into(),
                message: format!("pass --{flag} or --data"),
            }
            .into())
        }
    };
    ensure_exists(&p)?;
    Ok(p)
}

fn load_data(args: &DataArgs) -> Result<LoadedData> {
    let split = resolve(&args.split, &args.data, SPLIT, "split")?;
    let dictionary = resolve(&args.dictionary, &args.data, DICTIONARY, "dictionary")?;
    let train_pairs = resolve(&args.train_pairs, &args.data, STS_TRAIN, "train-pairs")?;
    let test_pairs = resolve(&args.test_pairs, &args.data, STS_TEST, "test-pairs")?;
    Ok(LoadedData {
        split: CorpusSplit::read(&split)?,
        dictionary: DefinitionDictionary::read(&dictionary)?,
        train_pairs: read_sts(&train_pairs)?,
        test_pairs: read_sts(&test_pairs)?,
        paths: BTreeMap::from([
            ("split", split.display().to_string()),
            ("dictionary", dictionary.display().to_string()),
            ("train_pairs", train_pairs.display().to_string()),
            ("test_pairs", test_pairs.display().to_string()),
        ]),
    })
}

fn train_cmd(cli: &Cli, args: &ConfigArgs, data: &DataArgs) -> Result<()> {
    if let Some(p) = &args.config {
        ensure_exists(p)?;
    }
    let mut cfg = TrainConfig::load(args.config.as_deref(), &args.overrides)?;
    cfg.seeds = vec![cli.seed];
    let loaded = load_data(data)?;
    let out = &cli.out;
    create_out(out)?;
    snapshot(out, "train", cli.seed, loaded.paths.clone(), &cfg.to_toml())?;
    let outcome = train_with(&cfg, &loaded.view(), cli.seed, Some(out), |r| {
        log::info!("{}", serde_json::to_string(r).unwrap_or_default());
    })?;
    write_trace(&out.join("trace.jsonl"), &outcome.trace)?;
    let best = select_best_step(&outcome.trace)?;
    let last = outcome.trace.last().expect("trace has the step-0 record");
    let summary = json!({
        "seed": cli.seed,
        "best": best,
        "final": last,
        "checkpoints": { "best": out.join("best.ckpt"), "last": out.join("last.ckpt") },
        "parameter_digest": outcome.model.params().digest(),
    });
    write(&out.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    print_json(&summary)
}

fn grid_cmd(
    cli: &Cli,
    recipe: Option<&str>,
    grid_path: Option<&Path>,
    overrides: &[String],
    workers: usize,
    data: &DataArgs,
) -> Result<()> {
    let mut grid = match (recipe, grid_path) {
        (Some(name), _) => ExperimentGrid::recipe(name)?,
        (None, Some(p)) => {
            ensure_exists(p)?;
            let text = fs::read_to_string(p).map_err(|source| Error::Io {
                path: p.to_path_buf(),
                source,
            })?;
            toml::from_str(&text).map_err(|e| Error::Config {
                key: "grid".into(),
                message: e.message().to_string(),
            })?
        }
        (None, None) => unreachable!("clap requires one source"),
    };
    grid.base = TrainConfig::from_toml_with_overrides(&grid.base.to_toml(), overrides)?;
    for s in grid.base.seeds.iter_mut() {
        *s = s.wrapping_add(cli.seed);
    }
    let loaded = load_data(data)?;
    let out = &cli.out;
    create_out(out)?;
    snapshot(out, "grid", cli.seed, loaded.paths.clone(), &toml::to_string(&grid)?)?;
    let report = run_grid(&grid, &loaded.view(), workers)?;
    write(&out.join("grid.json"), serde_json::to_string_pretty(&report)? + "\n")?;
    write(&out.join("grid.txt"), report.to_text_table())?;
    write(&out.join("grid.csv"), report.to_csv())?;
    print_out(&report.to_text_table())
}
