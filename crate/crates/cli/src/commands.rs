use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use debridge::encodings::{
    emit_de, emit_hks, emit_lappe, emit_rwse, EncodingKind, FeatureTable, StandardizeStats, HKS_TIMES, RWSE_STEPS,
};
use debridge::experiments::{
    ablation_cell, cell_seed, diffusion_graph, molecule_corpus, rrg_cell, rrg_cell_key, summarize_rrg, AblationConfig,
    DiffusionConfig, LinkScope, RrgConfig,
};
use debridge::graph::{generate_random_regular, is_connected, read_edge_list, write_edge_list};
use debridge::trilateration::{select_anchor_nodes, AnchorStrategy};
use debridge::{EigenSystem, Graph, LaplacianMode, NystromConfig, RadialKind, RadiusRule};

use crate::cli::{AblationArgs, CorpusArgs, DiffusionArgs, FeatureArgs, NystromArgs, RrgArgs};
use crate::config::ConfigFile;
use crate::error::{CliError, Result};
use crate::output::{ensure_parent, sibling, write_rows, write_sidecar};
use crate::pool::map_cells;

fn parse_scope(s: &str) -> Result<LinkScope> {
    match s {
        "all_pairs" | "all-pairs" => Ok(LinkScope::AllPairs),
        "node_anchor" | "node-anchor" => Ok(LinkScope::NodeAnchor),
        other => Err(CliError::Invalid(format!("unknown link scope {other:?}"))),
    }
}

pub fn rrg_validate(args: RrgArgs, file: &ConfigFile) -> Result<()> {
    let d = RrgConfig::default();
    let cfg = RrgConfig {
        ns: file.list("n", args.n, d.ns)?,
        r: file.value("r", args.r, d.r)?,
        t: file.value("t", args.t, d.t)?,
        m: file.value("m", args.m, d.m)?,
        radius_rule: file.value("radius-rule", args.radius_rule, d.radius_rule)?,
        seeds: file.value("seeds", args.seeds, d.seeds)?,
        root_seed: file.value("root-seed", args.root_seed, d.root_seed)?,
        link_scope: parse_scope(&file.value("link-scope", args.link_scope, "all_pairs".to_string())?)?,
    };
    let out: PathBuf = file.value("out", args.out, PathBuf::from("rrg_validate.csv"))?;
    file.finish()?;
    if cfg.ns.is_empty() || cfg.seeds == 0 {
        return Err(CliError::Invalid("empty (n, seed) grid".into()));
    }

    let cells: Vec<(usize, usize)> = cfg.ns.iter().flat_map(|&n| (0..cfg.seeds).map(move |rep| (n, rep))).collect();
    log::info!("rrg-validate: {} cells", cells.len());
    let rows = map_cells(&cells, |&(n, rep)| rrg_cell(&cfg, n, rep));
    let summary = summarize_rrg(&rows);

    write_rows(&out, &rows)?;
    let summary_path = sibling(&out, "summary.csv");
    write_rows(&summary_path, &summary)?;
    let cell_log: Vec<_> =
        rows.iter().map(|r| json!({"key": rrg_cell_key(r.n, r.replicate), "seed": r.seed, "error": r.error})).collect();
    write_sidecar(
        &out,
        "rrg-validate",
        serde_json::to_value(&cfg)?,
        json!({
            "seed_rule": "cell seed = root_seed XOR fnv1a64(cell key)",
            "cells": cell_log,
            "summary_csv": summary_path,
        }),
    )?;
    let failed = rows.iter().filter(|r| !r.is_ok()).count();
    log::info!("wrote {} rows ({failed} failed) to {}", rows.len(), out.display());
    Ok(())
}

/// Expands globs (sorted, deduplicated); at least one file must match.
pub fn expand_inputs(patterns: &[String]) -> Result<Vec<PathBuf>> {
    let mut paths = Vec::new();
    for p in patterns {
        for entry in glob::glob(p)? {
            match entry {
                Ok(path) if path.is_file() => paths.push(path),
                Ok(_) => {}
                Err(e) => log::warn!("skipping unreadable path: {e}"),
            }
        }
    }
    paths.sort();
    paths.dedup();
    if paths.is_empty() {
        return Err(CliError::NoInputs(patterns.join(" ")));
    }
    Ok(paths)
}

fn graph_id(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| path.display().to_string())
}

/// Loads every input; unreadable or disconnected graphs are logged and
/// returned separately as `(id, reason)`.
fn load_corpus(paths: &[PathBuf]) -> (Vec<(String, Graph)>, Vec<(String, String)>) {
    let mut graphs = Vec::new();
    let mut skipped = Vec::new();
    for path in paths {
        let id = graph_id(path);
        match read_edge_list(path) {
            Ok(load) if is_connected(&load.graph) => graphs.push((id, load.graph)),
            Ok(_) => {
                log::warn!("skipping {}: graph is disconnected", path.display());
                skipped.push((id, "disconnected".to_string()));
            }
            Err(e) => {
                log::warn!("skipping {}: {e}", path.display());
                skipped.push((id, e.to_string()));
            }
        }
    }
    (graphs, skipped)
}

fn skipped_json(skipped: &[(String, String)]) -> serde_json::Value {
    skipped.iter().map(|(id, why)| json!({"graph_id": id, "reason": why})).collect()
}

fn diffusion_config(args: NystromArgs, file: &ConfigFile) -> Result<DiffusionConfig> {
    let d = NystromConfig::default();
    Ok(DiffusionConfig {
        nystrom: NystromConfig {
            k: file.value("k", args.k, d.k)?,
            t: file.value("t", args.t, d.t)?,
            m: file.value("m", args.m, d.m)?,
            lambda_reg: file.optional("lambda", args.lambda)?,
            cross_mode: file.value("mode", args.mode, d.cross_mode)?,
        },
        radius_rule: file.value("radius-rule", args.radius_rule, RadiusRule::NaturalLog)?,
    })
}

pub fn diffusion_approx(args: DiffusionArgs, file: &ConfigFile) -> Result<()> {
    let inputs = file.list("input", args.input, Vec::new())?;
    let out: PathBuf = file.value("out", args.out, PathBuf::from("diffusion_approx.csv"))?;
    let node_errors: Option<PathBuf> = file.optional("node-errors", args.node_errors)?;
    let cfg = diffusion_config(args.nystrom, file)?;
    file.finish()?;

    let paths = expand_inputs(&inputs)?;
    let (graphs, mut skipped) = load_corpus(&paths);
    let results = map_cells(&graphs, |(id, g)| diffusion_graph(id, g, &cfg));

    let mut rows = Vec::new();
    for ((id, _), result) in graphs.iter().zip(results) {
        match result {
            Ok((row, outcome)) => {
                if let Some(dir) = &node_errors {
                    fs::create_dir_all(dir)?;
                    let mut w = csv::Writer::from_path(dir.join(format!("{id}.csv")))?;
                    w.write_record(["node_id", "error"])?;
                    for (v, e) in outcome.node_errors.iter().enumerate() {
                        w.write_record([v.to_string(), e.to_string()])?;
                    }
                    w.flush()?;
                }
                rows.push(row);
            }
            Err(e) => {
                log::warn!("graph {id} failed: {e}");
                skipped.push((id.clone(), e.to_string()));
            }
        }
    }
    write_rows(&out, &rows)?;
    write_sidecar(
        &out,
        "diffusion-approx",
        serde_json::to_value(cfg)?,
        json!({"inputs": paths, "skipped": skipped_json(&skipped), "node_errors_dir": node_errors}),
    )?;
    log::info!("wrote {} rows ({} skipped) to {}", rows.len(), skipped.len(), out.display());
    Ok(())
}

#[derive(Serialize)]
struct ManifestRow<'a> {
    graph_id: &'a str,
    n: usize,
    columns: usize,
}

pub fn emit_features(args: FeatureArgs, file: &ConfigFile) -> Result<()> {
    let inputs = file.list("input", args.input, Vec::new())?;
    let kind: EncodingKind = file.value("kind", args.kind, EncodingKind::De)?;
    let out_dir: PathBuf = file.value("out-dir", args.out_dir, PathBuf::from("features"))?;
    let k = file.value("k", args.k, 16usize)?;
    let psi = file.value("psi", args.psi, RadialKind::ExpNeg)?;
    let standardize = file.flag("standardize", args.standardize)?;
    let m = file.value("m", args.m, 8usize)?;
    let noise: Option<f64> = file.optional("lappe-noise", args.lappe_noise)?;
    let root_seed = file.value("root-seed", args.root_seed, 0u64)?;
    let steps = file.list("steps", args.steps, RWSE_STEPS.to_vec())?;
    let times = file.list("times", args.times, HKS_TIMES.to_vec())?;
    let trunc_k = file.value("trunc-k", args.trunc_k, 32usize)?;
    file.finish()?;

    let paths = expand_inputs(&inputs)?;
    let (graphs, mut skipped) = load_corpus(&paths);
    let emit = |(id, g): &(String, Graph)| -> debridge::Result<FeatureTable> {
        match kind {
            EncodingKind::De => {
                if g.node_count() < k {
                    return Err(debridge::Error::TooManyAnchors { count: k, n: g.node_count() });
                }
                let anchors = select_anchor_nodes(g, k, &AnchorStrategy::Fps { start: None }, 0)?;
                emit_de(g, &anchors, psi, None)
            }
            EncodingKind::LapPe => {
                let eig = EigenSystem::from_graph(g, LaplacianMode::for_graph(g))?;
                emit_lappe(&eig, m, noise.map(|s| (s, cell_seed(root_seed, &format!("lappe/{id}")))))
            }
            EncodingKind::Rwse => emit_rwse(g, &steps),
            EncodingKind::Hks => {
                let eig = EigenSystem::from_graph(g, LaplacianMode::for_graph(g))?;
                emit_hks(&eig, &times, trunc_k.min(g.node_count()))
            }
        }
    };
    let results = map_cells(&graphs, emit);
    let mut tables = Vec::new();
    for ((id, g), result) in graphs.iter().zip(results) {
        match result {
            Ok(table) => tables.push((id.clone(), g, table)),
            Err(e) => {
                log::warn!("graph {id} failed: {e}");
                skipped.push((id.clone(), e.to_string()));
            }
        }
    }

    if standardize && kind == EncodingKind::De {
        // corpus-level moments of the raw tables, then re-emit with them
        let raw: Vec<&FeatureTable> = tables.iter().map(|(_, _, t)| t).collect();
        let stats = StandardizeStats::fit(&raw, format!("{} graphs from {}", raw.len(), inputs.join(" ")))?;
        for (_, g, table) in tables.iter_mut() {
            let anchors: Vec<usize> = serde_json::from_value(table.params["anchors"].clone())?;
            *table = emit_de(g, &anchors, psi, Some(&stats))?;
        }
    } else if standardize {
        return Err(CliError::Invalid("--standardize applies to DE features only".into()));
    }

    fs::create_dir_all(&out_dir)?;
    for (id, _, table) in &tables {
        let path = out_dir.join(format!("{id}.{}.csv", kind.prefix()));
        table.write_files(&path, Some(&json!({"graph_id": id})))?;
    }
    let manifest = out_dir.join(format!("{}_manifest.csv", kind.prefix()));
    let entries: Vec<ManifestRow> = tables
        .iter()
        .map(|(id, g, t)| ManifestRow { graph_id: id, n: g.node_count(), columns: t.columns.len() })
        .collect();
    write_rows(&manifest, &entries)?;
    write_sidecar(
        &manifest,
        "emit-features",
        json!({"kind": kind, "k": k, "psi": psi.name(), "standardize": standardize, "m": m,
               "lappe_noise": noise, "root_seed": root_seed, "steps": steps, "times": times, "trunc_k": trunc_k}),
        json!({"inputs": paths, "skipped": skipped_json(&skipped)}),
    )?;
    log::info!("wrote {} feature tables to {}", tables.len(), out_dir.display());
    Ok(())
}

pub fn ablation_sweep(args: AblationArgs, file: &ConfigFile) -> Result<()> {
    let inputs = file.list("input", args.input, Vec::new())?;
    let out: PathBuf = file.value("out", args.out, PathBuf::from("ablation.csv"))?;
    let psi = file.list("psi", args.psi, RadialKind::ALL.to_vec())?;
    let ks = file.list("ks", args.ks, vec![16])?;
    let diffusion = diffusion_config(args.nystrom, file)?;
    file.finish()?;
    let cfg = AblationConfig { psi, ks, diffusion };
    let cells = cfg.cells()?;

    let paths = expand_inputs(&inputs)?;
    let (graphs, skipped) = load_corpus(&paths);
    let results = map_cells(&cells, |&(psi, k)| ablation_cell(&graphs, psi, k, &cfg.diffusion));

    let mut rows = Vec::new();
    let mut failed = Vec::new();
    for ((psi, k), result) in cells.iter().zip(results) {
        match result {
            Ok(row) => rows.push(row),
            Err(e) => {
                log::warn!("cell psi={} k={k} failed: {e}", psi.name());
                failed.push(json!({"psi": psi.name(), "k": k, "error": e.to_string()}));
            }
        }
    }
    write_rows(&out, &rows)?;
    write_sidecar(
        &out,
        "ablation-sweep",
        serde_json::to_value(&cfg)?,
        json!({"inputs": paths, "skipped": skipped_json(&skipped), "failed_cells": failed}),
    )?;
    log::info!("wrote {} rows to {}", rows.len(), out.display());
    Ok(())
}

pub fn generate_corpus(args: CorpusArgs, file: &ConfigFile) -> Result<()> {
    let family = file.value("family", args.family, "molecule".to_string())?;
    let count = file.value("count", args.count, 20usize)?;
    let n_min = file.value("n-min", args.n_min, 50usize)?;
    let n_max = file.value("n-max", args.n_max, 200usize)?;
    let r = file.value("r", args.r, 6usize)?;
    let root_seed = file.value("root-seed", args.root_seed, 0u64)?;
    let out_dir: PathBuf = file.value("out-dir", args.out_dir, PathBuf::from("corpus"))?;
    file.finish()?;

    let graphs = match family.as_str() {
        "molecule" => molecule_corpus(count, n_min, n_max, root_seed)?,
        "rrg" => (0..count)
            .map(|i| {
                let seed = cell_seed(root_seed, &format!("corpus/{i}"));
                Ok((format!("rrg_{i:03}"), generate_random_regular(n_min, r, seed)?))
            })
            .collect::<debridge::Result<_>>()?,
        other => return Err(CliError::Invalid(format!("unknown family {other:?} (molecule|rrg)"))),
    };
    fs::create_dir_all(&out_dir)?;
    for (id, g) in &graphs {
        let path = out_dir.join(format!("{id}.edges"));
        ensure_parent(&path)?;
        write_edge_list(g, &path)?;
    }
    log::info!("wrote {} {family} graphs to {}", graphs.len(), out_dir.display());
    Ok(())
}
