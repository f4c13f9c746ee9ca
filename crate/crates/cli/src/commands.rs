use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use bnfuse::data::{
    generate_synthetic, load_dataset, make_splits, mask_notes, read_channel_csv, read_mentions_csv,
    read_tabular_csv, shift_channel, synthetic_embeddings, write_channel_csv, write_drop_log,
    write_mentions_csv, write_notes_jsonl, write_spans_jsonl, write_tabular_csv, DatasetPaths,
    PatientRecord, SplitPlan,
};
use bnfuse::eval::EvalReport;
use bnfuse::experiment::{
    aggregate, predict_cell, score_cell, train_cell, CellConfig, CellMetric, CellResult,
    ConcatModels, Scenario, TextSource, TrainedCell,
};
use bnfuse::fusion::{ConsistencyCpt, Variant};
use bnfuse::model::{DistVec, NetworkSpec};
use bnfuse::profile::simsum_network;
use bnfuse::seed::derive_seed;
use bnfuse::text::{EmbeddingMatrix, MlpModel};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::artifact::{self, cell_dir, ensure_parent, Artifact};
use crate::config::RunConfig;
use crate::error::CliError;

type Consistency = BTreeMap<String, ConsistencyCpt>;

#[derive(Serialize, Deserialize)]
struct ConsistencyTables {
    c_bn_text: Option<Consistency>,
    v_c_bn_text: Option<Consistency>,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    network: NetworkSpec,
    files: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
struct PatientPosteriors {
    id: String,
    variants: BTreeMap<Variant, BTreeMap<String, Vec<f64>>>,
}

fn network(cfg: &RunConfig) -> Result<NetworkSpec, CliError> {
    match &cfg.paths.network {
        Some(p) => Ok(NetworkSpec::load(p)?),
        None => Ok(simsum_network()),
    }
}

fn write_embeddings(m: &EmbeddingMatrix, path: &Path) -> Result<(), CliError> {
    ensure_parent(path)?;
    if path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
    {
        m.write_csv(path)?;
    } else {
        m.write_binary(path)?;
    }
    Ok(())
}

fn with_mentions(
    records: &[PatientRecord],
    mentions: &[BTreeMap<String, bool>],
) -> Vec<PatientRecord> {
    records
        .iter()
        .zip(mentions)
        .map(|(r, m)| PatientRecord {
            mentions: Some(m.clone()),
            ..r.clone()
        })
        .collect()
}

pub fn generate(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let net = network(cfg)?;
    let g = &cfg.generate;
    let p = &cfg.paths;
    let data = generate_synthetic(&net, g.n, g.seed, &g.channel)?;
    let ids: Vec<String> = data.records.iter().map(|r| r.id.clone()).collect();
    let shifted = shift_channel(
        &data.channel,
        &data.records,
        g.channel.rho_present,
        g.shifted_rho_present,
        g.channel.noise,
        derive_seed(g.seed, "shifted"),
    )?;
    let shifted_records = with_mentions(&data.records, &shifted.mentions);

    let mut written = vec![p.tabular.clone()];
    ensure_parent(&p.tabular)?;
    write_tabular_csv(&net, &data.records, &p.tabular)?;
    if let Some(path) = &p.mentions {
        ensure_parent(path)?;
        write_mentions_csv(&net, &data.records, path)?;
        written.push(path.clone());
    }
    if let Some(path) = &p.channel {
        ensure_parent(path)?;
        write_channel_csv(&net, &ids, &data.channel, path)?;
        written.push(path.clone());
    }
    if let Some(path) = &p.shifted_mentions {
        ensure_parent(path)?;
        write_mentions_csv(&net, &shifted_records, path)?;
        written.push(path.clone());
    }
    if let Some(path) = &p.shifted_channel {
        ensure_parent(path)?;
        write_channel_csv(&net, &ids, &shifted, path)?;
        written.push(path.clone());
    }
    let embed = |records: &[PatientRecord], path: &Path| -> Result<(), CliError> {
        let rows = synthetic_embeddings(records, &net, g.embedding_dim, g.embedding_noise, g.seed);
        write_embeddings(&EmbeddingMatrix::new(ids.clone(), rows)?, path)
    };
    if let Some(path) = &p.embeddings {
        embed(&data.records, path)?;
        written.push(path.clone());
    }
    if let Some(path) = &p.shifted_embeddings {
        embed(&shifted_records, path)?;
        written.push(path.clone());
    }

    let refs: Vec<&Path> = written.iter().map(PathBuf::as_path).collect();
    let manifest = Artifact {
        config_hash: cfg.hash(),
        n: Some(g.n),
        seed: g.seed,
        data: Manifest {
            network: net,
            files: artifact::file_digests(&refs)?,
        },
    };
    let manifest_path = p.tabular.with_file_name("manifest.json");
    artifact::write(&manifest_path, &manifest)?;
    written.push(manifest_path);
    Ok(written)
}

/// Records and embeddings named in the config, plus the split plan.
struct Loaded {
    net: NetworkSpec,
    records: Vec<PatientRecord>,
    embeddings: Option<EmbeddingMatrix>,
    plan: SplitPlan,
}

fn load(cfg: &RunConfig) -> Result<Loaded, CliError> {
    let net = network(cfg)?;
    let p = &cfg.paths;
    let dataset = load_dataset(
        &net,
        &DatasetPaths {
            tabular: p.tabular.clone(),
            embeddings: p.embeddings.clone(),
            mentions: p.mentions.clone(),
            notes: None,
            spans: None,
        },
    )?;
    let plan = make_splits(dataset.records.len(), cfg.plan_seed, &cfg.sizes)?;
    Ok(Loaded {
        net,
        records: dataset.records,
        embeddings: dataset.embeddings,
        plan,
    })
}

fn channel_source(
    path: Option<&PathBuf>,
    net: &NetworkSpec,
    what: &str,
) -> Result<TextSource, CliError> {
    let path = path.ok_or_else(|| {
        CliError::Config(format!("{what}: set paths.embeddings or paths.channel"))
    })?;
    Ok(TextSource::Channel(read_channel_csv(net, path)?))
}

fn text_source(cfg: &RunConfig, loaded: &Loaded) -> Result<TextSource, CliError> {
    match &loaded.embeddings {
        Some(m) => Ok(TextSource::Embeddings(m.clone())),
        None => channel_source(
            cfg.paths.channel.as_ref(),
            &loaded.net,
            "text probabilities",
        ),
    }
}

fn cells(cfg: &RunConfig) -> Vec<(usize, u64)> {
    cfg.sizes
        .iter()
        .flat_map(|&n| cfg.seeds.iter().map(move |&s| (n, s)))
        .collect()
}

fn cell_config(cfg: &RunConfig) -> CellConfig {
    CellConfig {
        variants: cfg.variants.clone(),
        ground_truth: cfg.ground_truth,
        fit: cfg.fit.clone(),
        mlp: cfg.mlp.clone(),
    }
}

fn stamp<T>(cfg: &RunConfig, n: usize, seed: u64, data: T) -> Artifact<T> {
    Artifact {
        config_hash: cfg.hash(),
        n: Some(n),
        seed,
        data,
    }
}

fn save_cell(cfg: &RunConfig, cell: &TrainedCell) -> Result<(), CliError> {
    let dir = cell_dir(&cfg.paths.output_dir, cell.n, cell.seed);
    let (n, seed) = (cell.n, cell.seed);
    artifact::write(
        &dir.join("network.json"),
        &stamp(cfg, n, seed, &cell.network),
    )?;
    if cell.consistency.is_some() || cell.consistency_virtual.is_some() {
        let tables = ConsistencyTables {
            c_bn_text: cell.consistency.clone(),
            v_c_bn_text: cell.consistency_virtual.clone(),
        };
        artifact::write(&dir.join("consistency.json"), &stamp(cfg, n, seed, tables))?;
    }
    if let Some(models) = &cell.text_models {
        artifact::write(&dir.join("text_models.json"), &stamp(cfg, n, seed, models))?;
    }
    if let Some(concat) = &cell.concat {
        artifact::write(&dir.join("concat.json"), &stamp(cfg, n, seed, concat))?;
    }
    Ok(())
}

fn load_cell(cfg: &RunConfig, n: usize, seed: u64) -> Result<TrainedCell, CliError> {
    let dir = cell_dir(&cfg.paths.output_dir, n, seed);
    let hash = cfg.hash();
    let network: NetworkSpec = artifact::read(&dir.join("network.json"), &hash)?.data;
    let tables: Option<ConsistencyTables> =
        artifact::read_optional(&dir.join("consistency.json"), &hash)?;
    let (consistency, consistency_virtual) =
        tables.map_or((None, None), |t| (t.c_bn_text, t.v_c_bn_text));
    let text_models: Option<BTreeMap<String, MlpModel>> =
        artifact::read_optional(&dir.join("text_models.json"), &hash)?;
    let concat: Option<ConcatModels> = artifact::read_optional(&dir.join("concat.json"), &hash)?;
    Ok(TrainedCell {
        n,
        seed,
        network,
        consistency,
        consistency_virtual,
        text_models,
        concat,
    })
}

fn pick(records: &[PatientRecord], positions: &[usize]) -> Vec<PatientRecord> {
    positions.iter().map(|&i| records[i].clone()).collect()
}

pub fn train(cfg: &RunConfig) -> Result<usize, CliError> {
    let loaded = load(cfg)?;
    let text = text_source(cfg, &loaded)?;
    let cell_cfg = cell_config(cfg);
    artifact::write(
        &cfg.paths.output_dir.join("split.json"),
        &Artifact {
            config_hash: cfg.hash(),
            n: None,
            seed: cfg.plan_seed,
            data: &loaded.plan,
        },
    )?;
    let todo = cells(cfg);
    todo.par_iter()
        .map(|&(n, seed)| {
            let train = pick(&loaded.records, &loaded.plan.subsample(n, seed)?);
            let cell = train_cell(&loaded.net, &train, &text, &cell_cfg, n, seed)?;
            save_cell(cfg, &cell)
        })
        .collect::<Result<Vec<()>, CliError>>()?;
    Ok(todo.len())
}

fn scenarios(cfg: &RunConfig, loaded: &Loaded) -> Result<Vec<Scenario>, CliError> {
    let test = pick(&loaded.records, &loaded.plan.test);
    let mut out = vec![Scenario {
        name: "original".into(),
        test: test.clone(),
        text: text_source(cfg, loaded)?,
    }];
    if !cfg.masking {
        return Ok(out);
    }
    let p = &cfg.paths;
    let text = if loaded.embeddings.is_some() {
        let path = p
            .shifted_embeddings
            .as_ref()
            .ok_or_else(|| CliError::Config("masking needs paths.shifted_embeddings".into()))?;
        TextSource::Embeddings(EmbeddingMatrix::load(path)?)
    } else {
        channel_source(
            p.shifted_channel.as_ref(),
            &loaded.net,
            "masking needs paths.shifted_channel",
        )?
    };
    let mut shifted = test;
    if let Some(path) = &p.shifted_mentions {
        let by_id: BTreeMap<String, BTreeMap<String, bool>> =
            read_mentions_csv(&loaded.net, path)?.into_iter().collect();
        for r in &mut shifted {
            r.mentions = by_id.get(&r.id).cloned();
        }
    }
    out.push(Scenario {
        name: "shifted".into(),
        test: shifted,
        text,
    });
    Ok(out)
}

pub fn evaluate(cfg: &RunConfig) -> Result<EvalReport, CliError> {
    let loaded = load(cfg)?;
    let todo = cells(cfg);
    let trained = todo
        .iter()
        .map(|&(n, seed)| load_cell(cfg, n, seed))
        .collect::<Result<Vec<_>, CliError>>()?;
    let scenarios = scenarios(cfg, &loaded)?;
    let results = trained
        .par_iter()
        .map(|cell| {
            let mut metrics: Vec<CellMetric> = Vec::new();
            for scenario in &scenarios {
                let preds = predict_cell(cell, scenario, &cfg.variants)?;
                metrics.extend(score_cell(scenario, &preds)?);
            }
            let result = CellResult {
                n: cell.n,
                seed: cell.seed,
                metrics,
            };
            let path = cell_dir(&cfg.paths.output_dir, cell.n, cell.seed).join("metrics.json");
            artifact::write(&path, &stamp(cfg, cell.n, cell.seed, &result.metrics))?;
            Ok(result)
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let report = aggregate(&results, cfg.baseline, &cfg.hash());
    let out = &cfg.paths.output_dir;
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("report.json"), report.to_json()? + "\n")?;
    std::fs::write(out.join("report.csv"), report.to_csv()?)?;
    std::fs::write(out.join("report.txt"), report.to_table())?;
    Ok(report)
}

pub fn infer(
    cfg: &RunConfig,
    patients: &Path,
    n: usize,
    seed: u64,
    out: Option<&Path>,
) -> Result<PathBuf, CliError> {
    let cell = load_cell(cfg, n, seed)?;
    let records = read_tabular_csv(&cell.network, patients)?;
    let needs_text = cfg.variants.iter().any(|&v| v != Variant::BnOnly);
    let text = match &cfg.paths.embeddings {
        Some(path) if needs_text => TextSource::Embeddings(EmbeddingMatrix::load(path)?),
        None if needs_text => channel_source(
            cfg.paths.channel.as_ref(),
            &cell.network,
            "text probabilities",
        )?,
        _ => TextSource::Channel(BTreeMap::new()),
    };
    let scenario = Scenario {
        name: "infer".into(),
        test: records,
        text,
    };
    let preds = predict_cell(&cell, &scenario, &cfg.variants)?;
    let patients_out: Vec<PatientPosteriors> = scenario
        .test
        .iter()
        .enumerate()
        .map(|(i, r)| PatientPosteriors {
            id: r.id.clone(),
            variants: preds
                .iter()
                .map(|(v, by_symptom)| {
                    let probs = by_symptom
                        .iter()
                        .map(|(s, d): (&String, &Vec<DistVec>)| (s.clone(), d[i].probs.clone()))
                        .collect();
                    (*v, probs)
                })
                .collect(),
        })
        .collect();
    let path = out.map_or_else(
        || cell_dir(&cfg.paths.output_dir, n, seed).join("infer.json"),
        Path::to_path_buf,
    );
    artifact::write(&path, &stamp(cfg, n, seed, patients_out))?;
    Ok(path)
}

pub fn mask(cfg: &RunConfig) -> Result<usize, CliError> {
    let net = network(cfg)?;
    let p = &cfg.paths;
    let (Some(notes), Some(spans)) = (&p.notes, &p.spans) else {
        return Err(CliError::Config(
            "masking notes needs paths.notes and paths.spans".into(),
        ));
    };
    let dataset = load_dataset(
        &net,
        &DatasetPaths {
            tabular: p.tabular.clone(),
            embeddings: None,
            mentions: p.mentions.clone(),
            notes: Some(notes.clone()),
            spans: Some(spans.clone()),
        },
    )?;
    let m = &cfg.mask;
    let (masked, log) = mask_notes(&dataset.records, m.drop_prob, m.seed)?;
    let mut written = Vec::new();
    for path in [&m.notes_out, &m.spans_out, &m.drop_log] {
        ensure_parent(path)?;
    }
    write_notes_jsonl(&masked, &m.notes_out)?;
    write_spans_jsonl(&masked, &m.spans_out)?;
    write_drop_log(&log, &m.drop_log)?;
    written.extend([
        m.notes_out.as_path(),
        m.spans_out.as_path(),
        m.drop_log.as_path(),
    ]);
    if masked.iter().all(|r| r.mentions.is_some()) {
        ensure_parent(&m.mentions_out)?;
        write_mentions_csv(&net, &masked, &m.mentions_out)?;
        written.push(m.mentions_out.as_path());
    }
    let manifest = Artifact {
        config_hash: cfg.hash(),
        n: None,
        seed: m.seed,
        data: artifact::file_digests(&written)?,
    };
    artifact::write(&m.notes_out.with_file_name("manifest.json"), &manifest)?;
    Ok(log.iter().filter(|e| e.dropped).count())
}
