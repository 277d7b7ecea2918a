//! `boxrec` command line.

use std::fs;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use boxrec_core::catalog::{
    load_catalog, write_catalog_jsonl, Catalog, CatalogConfig, CatalogFormat, ClothingType, Occasion,
};
use boxrec_core::decoder::{HyperParams, PairType};
use boxrec_core::engine::{generate_preferred_outfits, to_instance, ModelScorer, PairScorer};
use boxrec_core::features::{load_features, FeatureStore};
use boxrec_core::metrics::{load_outfit_testset, report_osf};
use boxrec_core::retrieval::{rpi, CatalogView, PreferenceQuery};
use boxrec_core::solver::{exact_solve, olr_solve, Instance};
use boxrec_core::synthetic::{balanced_hue_pairs, demo_catalog, hue_outfit_testset, DemoConfig};
use boxrec_core::training::{load_pairs, train_decoder, Checkpoint, DecoderSet, PairDataset, TrainedDecoder};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::app::Service;
use crate::session::{Constraints, PriceRange};
use crate::store::SessionStore;

#[derive(Parser, Debug)]
#[command(name = "boxrec", version, about = "Budget-constrained outfit box recommendation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct CatalogArgs {
    #[arg(long, env = "BOXREC_CATALOG")]
    pub catalog: PathBuf,
    #[arg(long, env = "BOXREC_FEATURES")]
    pub features: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    #[command(flatten)]
    pub data: CatalogArgs,
    #[arg(long, env = "BOXREC_CKPT_DIR")]
    pub ckpt_dir: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct ServiceArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, env = "BOXREC_STORE", default_value = "boxrec-sessions.json")]
    pub store: PathBuf,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write a synthetic catalog, features, training pairs, an outfit test
    /// set and trained decoders into a directory.
    Demo {
        #[arg(long)]
        out: PathBuf,
        /// Training pairs per class and pair type.
        #[arg(long, default_value_t = 300)]
        pairs: usize,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Rank items of one type for a preference query (JSON file).
    Retrieve {
        #[command(flatten)]
        data: CatalogArgs,
        #[arg(long)]
        query: PathBuf,
        #[arg(long = "type")]
        kind: ClothingType,
    },
    /// Train one pair decoder from JSON-lines pairs.
    Train {
        #[command(flatten)]
        data: CatalogArgs,
        #[arg(long)]
        pair: PairType,
        #[arg(long)]
        pairs: PathBuf,
        /// Held-out pairs; otherwise a fraction of `--pairs` is held out.
        #[arg(long)]
        validation: Option<PathBuf>,
        #[arg(long, default_value_t = 0.8)]
        train_fraction: f64,
        /// Use the full-size decoder dimensions instead of the small ones.
        #[arg(long)]
        full_size: bool,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compatibility probability of two items.
    ScorePair {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        pair: PairType,
        a: String,
        b: String,
    },
    /// Generate preferred outfits for a query.
    Generate {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        query: PathBuf,
        #[arg(long, default_value_t = boxrec_core::engine::DEFAULT_OUTFIT_TARGET)]
        target: usize,
        /// Also write the packing instance for this budget.
        #[arg(long, requires = "instance_out")]
        budget: Option<u64>,
        #[arg(long)]
        instance_out: Option<PathBuf>,
    },
    /// Pack outfits of an instance file into one box.
    Solve {
        #[arg(long)]
        instance: PathBuf,
        /// Exhaustive search instead of the heuristic (small instances).
        #[arg(long)]
        exact: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pairwise and outfit-level AUCs on a labelled outfit set.
    Evaluate {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        testset: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Feedback log of a session as JSON lines.
    FeedbackDump {
        #[arg(long, env = "BOXREC_STORE", default_value = "boxrec-sessions.json")]
        store: PathBuf,
        #[arg(long)]
        session: String,
    },
    /// Step through a recommendation session.
    Session {
        #[command(flatten)]
        service: ServiceArgs,
        #[command(subcommand)]
        action: SessionAction,
    },
    /// Run the HTTP API.
    Serve {
        #[command(flatten)]
        service: ServiceArgs,
        #[arg(long, env = "BOXREC_BIND", default_value = "127.0.0.1:8080")]
        bind: SocketAddr,
    },
}

#[derive(Subcommand, Debug)]
pub enum SessionAction {
    Create,
    Show { id: String },
    Occasion { id: String, occasion: Occasion },
    Items {
        id: String,
        #[arg(long = "type")]
        kind: ClothingType,
        #[arg(long, default_value_t = 0)]
        page: usize,
    },
    Choices {
        id: String,
        #[arg(long = "type")]
        kind: ClothingType,
        #[arg(required = true)]
        items: Vec<String>,
    },
    /// Price ranges as LO..HI per type, and the budget.
    Constraints {
        id: String,
        #[arg(long, value_parser = parse_range)]
        top: PriceRange,
        #[arg(long, value_parser = parse_range)]
        bottom: PriceRange,
        #[arg(long, value_parser = parse_range)]
        foot: PriceRange,
        #[arg(long)]
        budget: u64,
        #[arg(long)]
        target: Option<usize>,
    },
    Recommend { id: String },
    Recommendation { id: String },
    Feedback {
        id: String,
        product: String,
        #[arg(long, conflicts_with = "dislike", required_unless_present = "dislike")]
        like: bool,
        #[arg(long)]
        dislike: bool,
    },
    HitRatio { id: String },
}

fn parse_range(s: &str) -> Result<PriceRange, String> {
    let (lo, hi) = s.split_once("..").ok_or("expected LO..HI")?;
    let lo = lo.trim().parse().map_err(|e| format!("{e}"))?;
    let hi = hi.trim().parse().map_err(|e| format!("{e}"))?;
    Ok(PriceRange { lo, hi })
}

fn print_json<T: Serialize>(value: &T) -> anyhow::Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_data(args: &CatalogArgs) -> anyhow::Result<(Arc<Catalog>, Arc<FeatureStore>)> {
    let loaded = load_catalog(
        &args.catalog,
        CatalogFormat::from_path(&args.catalog),
        &CatalogConfig::default(),
    )?;
    for row in &loaded.rejected {
        tracing::warn!(line = row.line, reason = %row.reason, "catalog row rejected");
    }
    let catalog = Arc::new(loaded.catalog);
    let features = Arc::new(load_features(&args.features, &catalog)?);
    Ok((catalog, features))
}

fn load_model(args: &ModelArgs) -> anyhow::Result<(Arc<Catalog>, Arc<FeatureStore>, ModelScorer)> {
    let (catalog, features) = load_data(&args.data)?;
    let checkpoint = Checkpoint::load_dir(&args.ckpt_dir)?;
    let scorer = ModelScorer::new(checkpoint, catalog.clone(), features.clone())?;
    Ok((catalog, features, scorer))
}

fn load_query(path: &Path) -> anyhow::Result<PreferenceQuery> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn open_service(args: &ServiceArgs) -> anyhow::Result<Service> {
    Service::open(
        &args.model.data.catalog,
        &args.model.data.features,
        &args.model.ckpt_dir,
        &args.store,
    )
}

fn validation_auc(trained: &TrainedDecoder) -> Option<f64> {
    trained.log.iter().rev().find_map(|l| l.validation_auc)
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Demo {
            out,
            pairs,
            epochs,
            seed,
        } => demo(&out, pairs, epochs, seed),
        Command::Retrieve { data, query, kind } => {
            let (catalog, features) = load_data(&data)?;
            let query = load_query(&query)?;
            query.validate(&catalog)?;
            print_json(&rpi(&CatalogView::new(&catalog), &features, &query, kind)?)
        }
        Command::Train {
            data,
            pair,
            pairs,
            validation,
            train_fraction,
            full_size,
            epochs,
            seed,
            out,
        } => {
            let (catalog, features) = load_data(&data)?;
            let all = load_pairs(&pairs)?;
            let (train, held_out) = match validation {
                Some(path) => (all, load_pairs(&path)?),
                None => all.split(train_fraction, seed),
            };
            let mut hyper = if full_size { HyperParams::full_size() } else { HyperParams::desk() };
            hyper.seed = seed;
            if let Some(e) = epochs {
                hyper.epochs = e;
            }
            let validation = (!held_out.is_empty()).then_some(&held_out);
            let trained = train_decoder(pair, &train, validation, &catalog, &features, &hyper)?;
            for log in &trained.log {
                tracing::info!(epoch = log.epoch, loss = log.train_loss, auc = ?log.validation_auc, "epoch");
            }
            let mut set = DecoderSet::default();
            set.insert(trained.params.clone());
            Checkpoint::new(hyper, catalog.vocabulary(), set).save(&out)?;
            print_json(&serde_json::json!({
                "pair": pair,
                "train": train.len(),
                "validation": held_out.len(),
                "validation_auc": validation_auc(&trained),
                "checkpoint": out,
            }))
        }
        Command::ScorePair { model, pair, a, b } => {
            let (catalog, _, scorer) = load_model(&model)?;
            let p = scorer.probabilities(pair, catalog.item(&a)?, catalog.item(&b)?)?;
            print_json(&serde_json::json!({
                "pair": pair,
                "a": a,
                "b": b,
                "probability": p[1],
                "score": u8::from(p[1] > p[0]),
            }))
        }
        Command::Generate {
            model,
            query,
            target,
            budget,
            instance_out,
        } => {
            let (catalog, features, scorer) = load_model(&model)?;
            let query = load_query(&query)?;
            let set = generate_preferred_outfits(&catalog, &features, &scorer, &query, target)?;
            if let (Some(budget), Some(path)) = (budget, instance_out) {
                write_json(&path, &to_instance(&set.outfits, &catalog, budget)?.to_file())?;
            }
            print_json(&set)
        }
        Command::Solve { instance, exact, out } => {
            let inst = Instance::load(&instance)?;
            let value = if exact {
                serde_json::to_value(exact_solve(&inst)?)?
            } else {
                serde_json::to_value(olr_solve(&inst)?)?
            };
            match out {
                Some(path) => write_json(&path, &value),
                None => print_json(&value),
            }
        }
        Command::Evaluate { model, testset, out } => {
            let (catalog, _, scorer) = load_model(&model)?;
            let testset = load_outfit_testset(&testset)?;
            let report = report_osf(&testset, &catalog, &scorer)?;
            for notice in &report.notices {
                tracing::warn!("{notice}");
            }
            if let Some(path) = out {
                write_json(&path, &report)?;
            }
            print_json(&report)
        }
        Command::FeedbackDump { store, session } => {
            let store = SessionStore::open(&store)?;
            let mut out = std::io::stdout().lock();
            for f in store.get(&session)?.feedback {
                serde_json::to_writer(&mut out, &f)?;
                writeln!(out)?;
            }
            Ok(())
        }
        Command::Session { service, action } => {
            let svc = open_service(&service)?;
            session(&svc, action)
        }
        Command::Serve { service, bind } => serve(open_service(&service)?, bind),
    }
}

fn session(svc: &Service, action: SessionAction) -> anyhow::Result<()> {
    match action {
        SessionAction::Create => print_json(&svc.create_session()?),
        SessionAction::Show { id } => print_json(&svc.session(&id)?),
        SessionAction::Occasion { id, occasion } => print_json(&svc.set_occasion(&id, occasion)?),
        SessionAction::Items { id, kind, page } => print_json(&svc.sample_items(&id, kind, page)?),
        SessionAction::Choices { id, kind, items } => print_json(&svc.set_choices(&id, kind, items)?),
        SessionAction::Constraints {
            id,
            top,
            bottom,
            foot,
            budget,
            target,
        } => {
            let constraints = Constraints {
                price_ranges: [
                    (ClothingType::TopWear, top),
                    (ClothingType::BottomWear, bottom),
                    (ClothingType::FootWear, foot),
                ]
                .into_iter()
                .collect(),
                budget,
                counts: Default::default(),
                target: target.unwrap_or(boxrec_core::engine::DEFAULT_OUTFIT_TARGET),
            };
            print_json(&svc.set_constraints(&id, constraints)?)
        }
        SessionAction::Recommend { id } => print_json(&svc.recommend(&id)?),
        SessionAction::Recommendation { id } => print_json(&svc.recommendation(&id)?),
        SessionAction::Feedback {
            id,
            product,
            like,
            dislike,
        } => {
            debug_assert!(like != dislike);
            print_json(&svc.record_feedback(&id, &product, like)?)
        }
        SessionAction::HitRatio { id } => print_json(&svc.hit_ratio(&id)?),
    }
}

fn serve(service: Service, bind: SocketAddr) -> anyhow::Result<()> {
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(bind).await?;
        tracing::info!(addr = %listener.local_addr()?, "listening");
        axum::serve(listener, crate::http::router(Arc::new(service)))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}

fn demo(out: &Path, pairs: usize, epochs: Option<usize>, seed: u64) -> anyhow::Result<()> {
    if pairs == 0 {
        bail!("--pairs must be positive");
    }
    let config = CatalogConfig::default();
    let data = demo_catalog(
        &DemoConfig {
            seed,
            ..DemoConfig::default()
        },
        &config,
    )?;
    let catalog = Catalog::from_items(data.items.clone(), &config)?;
    let features = FeatureStore::from_records(data.features.shape, data.features.records.clone())?;
    fs::create_dir_all(out.join("pairs"))?;
    fs::create_dir_all(out.join("ckpt"))?;
    fs::write(out.join("catalog.jsonl"), write_catalog_jsonl(&data.items))?;
    write_json(&out.join("features.json"), &data.features)?;
    write_json(&out.join("outfits.json"), &hue_outfit_testset(&data, 40, seed + 1)?)?;

    let mut hyper = HyperParams::desk();
    hyper.seed = seed;
    if let Some(e) = epochs {
        hyper.epochs = e;
    }
    let mut summary = Vec::new();
    for (k, pair) in PairType::ALL.into_iter().enumerate() {
        let dataset: PairDataset = balanced_hue_pairs(pair, &data, pairs, seed + 10 + k as u64)?;
        let mut lines = String::new();
        for row in dataset.to_rows() {
            lines.push_str(&serde_json::to_string(&row)?);
            lines.push('\n');
        }
        fs::write(out.join("pairs").join(format!("{pair}.jsonl")), lines)?;
        let (train, validation) = dataset.split(0.8, seed + 20 + k as u64);
        let trained = train_decoder(pair, &train, Some(&validation), &catalog, &features, &hyper)?;
        let mut set = DecoderSet::default();
        set.insert(trained.params.clone());
        Checkpoint::new(hyper.clone(), catalog.vocabulary(), set).save(&out.join("ckpt").join(format!("{pair}.json")))?;
        summary.push(serde_json::json!({
            "pair": pair,
            "pairs": dataset.len(),
            "validation_auc": validation_auc(&trained),
        }));
    }

    // sanity check of the freshly trained decoders on held-out outfits
    let checkpoint = Checkpoint::load_dir(&out.join("ckpt"))?;
    let scorer = ModelScorer::new(checkpoint, Arc::new(catalog.clone()), Arc::new(features))?;
    let testset = load_outfit_testset(&out.join("outfits.json"))?;
    let report = report_osf(&testset, &catalog, &scorer)?;
    print_json(&serde_json::json!({
        "dir": out,
        "items": catalog.len(),
        "decoders": summary,
        "outfit_c1_auc": report.c1_auc,
        "outfit_accuracy": report.accuracy,
    }))
}
