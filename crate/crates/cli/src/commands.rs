use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use hetcrf::eval::{evaluate, export_report, EvalConfig};
use hetcrf::graph::io::{load_dataset, save_dataset};
use hetcrf::graph::synthetic::{generate_synthetic, SyntheticSpec};
use hetcrf::graph::{FeatureView, HeteroGraph};
use hetcrf::objectives::{probe_sweep, ProbeSweepConfig};
use hetcrf::trainer::checkpoint::{load_checkpoint, save_checkpoint};
use hetcrf::trainer::{history_csv, precompute, TrainConfig, Trainer};
use hetcrf::{Error, Result};
use serde::de::DeserializeOwned;
use serde_json::{json, Value};

use crate::manifest::{io, now_unix, threads_from_env, write_atomic, RunManifest};
use crate::{Common, Source};

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn load_graph(source: &Source, graph_seed: u64) -> Result<HeteroGraph> {
    match (&source.dataset, &source.synthetic) {
        (Some(dir), _) => load_dataset(dir),
        (None, Some(spec)) => generate_synthetic(&read_json::<SyntheticSpec>(spec)?, graph_seed),
        (None, None) => Err(Error::Config("one of --dataset or --synthetic is required".into())),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io(dir, e))
}

fn start(command: &str, args: &[String], out: &Path, seed: u64) -> Result<RunManifest> {
    let threads = threads_from_env()?;
    create_dir(out)?;
    let m = RunManifest {
        command: command.into(),
        args: args.to_vec(),
        config_path: None,
        dataset_path: None,
        synthetic_path: None,
        checkpoint_path: None,
        graph_seed: None,
        output_dir: out.to_path_buf(),
        seed,
        threads,
        started_unix: now_unix(),
        finished_unix: None,
        status: "running".into(),
    };
    Ok(m)
}

/// Writes the manifest, runs `work`, and records the outcome.
fn supervised(mut m: RunManifest, work: impl FnOnce() -> Result<()>) -> Result<()> {
    m.write()?;
    match work() {
        Ok(()) => m.finish("ok"),
        Err(e) => {
            let _ = m.finish(&format!("failed: {e}"));
            Err(e)
        }
    }
}

fn with_source(mut m: RunManifest, source: &Source, graph_seed: u64, config: Option<&Path>) -> RunManifest {
    m.dataset_path = source.dataset.clone();
    m.graph_seed = source.synthetic.is_some().then_some(graph_seed);
    m.synthetic_path = source.synthetic.clone();
    m.config_path = config.map(PathBuf::from);
    m
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    write_atomic(path, (serde_json::to_string_pretty(value)? + "\n").as_bytes())
}

pub fn train(args: &[String], source: &Source, common: &Common, config: Option<&Path>, ablate: &[String]) -> Result<()> {
    let mut cfg = match config {
        Some(p) => TrainConfig::from_json(&fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?)?,
        None => TrainConfig::default(),
    };
    for a in ablate {
        cfg.apply_override(a)?;
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let m = with_source(start("train", args, &common.out, cfg.seed)?, source, common.graph_seed, config);
    let out = common.out.clone();
    supervised(m, move || {
        write_atomic(&out.join("config.json"), (cfg.to_json() + "\n").as_bytes())?;
        let graph = load_graph(source, common.graph_seed)?;
        let mut trainer = Trainer::new(&graph, cfg)?;
        let epochs = trainer.config().epochs;
        while trainer.state.epoch < epochs {
            let l = trainer.train_epoch()?;
            if l.epoch % 50 == 0 || l.epoch == epochs {
                eprintln!("epoch {:>4}  loss {:.6}", l.epoch, l.l_final);
            }
        }
        let state = trainer.into_state()?;
        save_checkpoint(&state, out.join("model.ckpt"))?;
        write_atomic(&out.join("loss_history.csv"), history_csv(&state.history).as_bytes())?;
        if let Some(last) = state.history.last() {
            println!(
                "trained {} epochs: l_feat {:.6} l_mp {:.6} l_con {:.6} l_final {:.6}",
                state.epoch, last.l_feat, last.l_mp, last.l_con, last.l_final
            );
        }
        Ok(())
    })
}

pub fn eval(args: &[String], checkpoint: &Path, source: &Source, common: &Common, config: Option<&Path>) -> Result<()> {
    let mut cfg: EvalConfig = match config {
        Some(p) => read_json(p)?,
        None => EvalConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    let mut m = with_source(start("eval", args, &common.out, cfg.seed)?, source, common.graph_seed, config);
    m.checkpoint_path = Some(checkpoint.to_path_buf());
    let out = common.out.clone();
    supervised(m, move || {
        write_json(&out.join("eval_config.json"), &cfg)?;
        let state = load_checkpoint(checkpoint)?;
        let graph = load_graph(source, common.graph_seed)?;
        let kind = state.config.eval_embedding;
        let trainer = Trainer::resume(&graph, state)?;
        let emb = trainer.embeddings()?.for_eval(kind);
        let labels = graph.labels.as_ref().ok_or_else(|| Error::Schema("evaluation needs labels.tsv".into()))?;
        let report = evaluate(&emb, labels, &graph.splits, &cfg)?;
        export_report(&report, &out, "report")?;
        for (name, s) in &report.splits {
            println!("split {name}: macro-F1 {:.4} ± {:.4}  micro-F1 {:.4}  AUC {:.4}", s.macro_f1.mean, s.macro_f1.std, s.micro_f1.mean, s.auc.mean);
        }
        println!("clustering: NMI {:.4}  ARI {:.4}", report.clustering.nmi, report.clustering.ari);
        Ok(())
    })
}

pub fn probe(args: &[String], config: Option<&Path>, out: &Path, seed: Option<u64>) -> Result<()> {
    let mut cfg: ProbeSweepConfig = match config {
        Some(p) => read_json(p)?,
        None => ProbeSweepConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let mut m = start("probe-theorem1", args, out, cfg.seed)?;
    m.config_path = config.map(PathBuf::from);
    supervised(m, || {
        let report = probe_sweep(&cfg)?;
        write_json(&out.join("theorem1.json"), &report)?;
        let mut by_tau: BTreeMap<String, f64> = BTreeMap::new();
        for t in &report.trials {
            let e = by_tau.entry(format!("{}", t.tau)).or_insert(0.0);
            *e = e.max(t.residual_norm);
        }
        for (tau, r) in &by_tau {
            println!("tau {tau}: max residual {r:.3e}");
        }
        println!("{} trials, max residual {:.3e}, tolerance {:.1e}", report.trials.len(), report.max_residual, cfg.tolerance);
        if report.passed {
            Ok(())
        } else {
            Err(Error::Contract(format!("gradient balance residual {:.3e} exceeds {:.1e}", report.max_residual, cfg.tolerance)))
        }
    })
}

pub fn synth(spec: Option<&Path>, out: &Path, graph_seed: u64) -> Result<()> {
    let spec: SyntheticSpec = match spec {
        Some(p) => read_json(p)?,
        None => SyntheticSpec::default(),
    };
    let g = generate_synthetic(&spec, graph_seed)?;
    save_dataset(&g, out)?;
    println!("wrote {} target nodes, {} meta-paths to {}", g.target_count(), g.metapaths.len(), out.display());
    Ok(())
}

pub fn inspect(source: &Source, config: Option<&Path>, out: Option<&Path>, graph_seed: u64) -> Result<()> {
    let cfg = match config {
        Some(p) => TrainConfig::from_json(&fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?)?,
        None => TrainConfig::default(),
    };
    let g = load_graph(source, graph_seed)?;
    let summary = summarize(&g, &cfg)?;
    let text = serde_json::to_string_pretty(&summary)? + "\n";
    print!("{text}");
    if let Some(dir) = out {
        create_dir(dir)?;
        write_atomic(&dir.join("summary.json"), text.as_bytes())?;
    }
    Ok(())
}

fn summarize(g: &HeteroGraph, cfg: &TrainConfig) -> Result<Value> {
    let pre = precompute(g, cfg)?;
    let n = pre.n as f64;
    let features: BTreeMap<&str, Value> = g
        .node_types
        .iter()
        .map(|t| {
            let v = match g.feature_view(&t.name) {
                Ok(FeatureView::Dense(m)) => json!(m.ncols()),
                _ => json!("absent"),
            };
            (t.name.as_str(), v)
        })
        .collect();
    let metapaths: Vec<Value> = g
        .metapaths
        .iter()
        .enumerate()
        .map(|(i, mp)| {
            let edges = pre.adjs[i].nnz();
            let sim = pre.similarity[i].scores.nnz();
            json!({
                "name": mp.name,
                "relation_chain": mp.relation_chain,
                "edges": edges,
                "mean_degree": edges as f64 / n,
                "path_count_nnz": pre.path_counts[i].nnz(),
                "pathsim_nnz": sim,
                "pathsim_density": sim as f64 / (n * n),
                "pathsim_topk_nnz": pre.sim_adjs[i].nnz(),
                "pathsim_degenerate_pairs": pre.similarity[i].degenerate_pairs,
            })
        })
        .collect();
    let class_counts = g.labels.as_ref().map(|l| {
        let mut c = vec![0usize; g.num_classes().unwrap_or(0)];
        for &y in l {
            c[y] += 1;
        }
        c
    });
    Ok(json!({
        "target_type": g.target_type,
        "node_types": g.node_types,
        "relations": g.relations.values().map(|r| json!({
            "name": r.spec.name, "src": r.spec.src, "dst": r.spec.dst, "edges": r.adj.nnz(),
        })).collect::<Vec<_>>(),
        "features": features,
        "class_counts": class_counts,
        "splits": g.splits.iter().map(|(k, s)| (k.clone(), json!({
            "train": s.train.len(), "val": s.val.len(), "test": s.test.len(),
        }))).collect::<BTreeMap<_, _>>(),
        "metapaths": metapaths,
        "k_sim": cfg.k_sim,
        "positives": {
            "nnz": pre.p_mpc.nnz(),
            "mean_per_node": pre.p_mpc.nnz() as f64 / n,
        },
    }))
}
