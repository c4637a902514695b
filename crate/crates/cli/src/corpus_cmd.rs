use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::{Args, Subcommand};
use mindtrace::classify::{cross_validate, CvConfig, CvReport, Grid};
use mindtrace::corpus::{
    attitude_score, correlate as pearson, export_scatter, ingest_quotes, read_persons, read_votes, vote_score,
    write_quotes, write_scatter_csv, Axis, Corpus, IngestConfig, PersonFilter, Quote, ScatterPoint,
};
use mindtrace::embed::{attach_external, embed_missing, read_sidecar, write_sidecar, DEFAULT_DIM};
use mindtrace::project::{lda_fit, pca_fit, LdaConfig, ProjectionModel};
use mindtrace::{Error, Result};
use serde::Serialize;

use crate::output::Output;
use crate::settings::Settings;
use crate::Common;

#[derive(Args)]
pub struct IngestArgs {
    /// Quotes as JSON lines
    #[arg(long)]
    quotes: Option<PathBuf>,
    /// Persons as JSON lines
    #[arg(long)]
    persons: Option<PathBuf>,
    /// Votes CSV (`person_id,date,vote`); persons without votes are dropped
    #[arg(long)]
    votes: Option<PathBuf>,
    #[arg(long)]
    max_words: Option<usize>,
    /// Drop persons with fewer quotes than this
    #[arg(long)]
    min_quotes: Option<usize>,
}

/// Reads a corpus written by an earlier step. No word limit applies here;
/// ingestion already filtered.
pub fn load_corpus(settings: &mut Settings, quotes: Option<PathBuf>, persons: Option<PathBuf>) -> Result<Corpus> {
    let q = settings.input("quotes", quotes)?;
    let persons = match settings.optional_input("persons", persons)? {
        Some(p) => read_persons(&p)?,
        None => Vec::new(),
    };
    let config = IngestConfig { max_words: usize::MAX };
    let (corpus, report) = ingest_quotes(&q, persons, &config)?;
    if let Some(r) = report.rejections.first() {
        return Err(Error::Parse {
            context: q.display().to_string(),
            line: r.line,
            message: r.reason.clone(),
        });
    }
    Ok(corpus)
}

pub fn ingest(a: IngestArgs, s: &mut Settings, c: &Common) -> Result<()> {
    let quotes = s.input("quotes", a.quotes)?;
    let persons_path = s.optional_input("persons", a.persons)?;
    let votes_path = s.optional_input("votes", a.votes)?;
    let config = IngestConfig {
        max_words: s.value("max_words", a.max_words, IngestConfig::default().max_words)?,
    };
    let filter = PersonFilter {
        min_quotes: s.value("min_quotes", a.min_quotes, 1)?,
        require_votes: votes_path.is_some(),
    };
    let persons = match &persons_path {
        Some(p) => read_persons(p)?,
        None => Vec::new(),
    };
    let (corpus, report) = ingest_quotes(&quotes, persons, &config)?;
    let votes = votes_path.as_deref().map(read_votes).transpose()?;
    let (kept, removed) = corpus.filter_persons(&filter, votes.as_ref())?;
    let mut out = Output::new(&c.out, "ingest", c.seed)?;
    out.write_with("quotes.jsonl", |w| write_quotes(w, kept.quotes()))?;
    if persons_path.is_some() {
        out.write_with("persons.jsonl", |w| {
            for p in kept.persons() {
                serde_json::to_writer(&mut *w, p)?;
                w.push(b'\n');
            }
            Ok(())
        })?;
    }
    #[derive(Serialize)]
    struct Report<'a> {
        report: &'a mindtrace::corpus::IngestReport,
        removed_persons: Vec<String>,
        stats: mindtrace::corpus::CorpusStats,
    }
    out.write_json(
        "ingest_report.json",
        &Report {
            report: &report,
            removed_persons: removed,
            stats: kept.stats(),
        },
    )?;
    log::info!("accepted {} quotes, rejected {}", report.accepted, report.rejections.len());
    out.finish(s)?;
    Ok(())
}

#[derive(Args)]
pub struct EmbedArgs {
    #[arg(long)]
    quotes: Option<PathBuf>,
    /// Externally computed vectors, `{quote_id, vector}` per line
    #[arg(long)]
    sidecar: Option<PathBuf>,
    /// Dimension for hashed embeddings (defaults to the attached vectors' dimension, else 512)
    #[arg(long)]
    dim: Option<usize>,
}

fn embedding_dim(corpus: &Corpus) -> Result<Option<usize>> {
    let mut dim = None;
    for q in corpus.quotes() {
        if let Some(v) = &q.embedding {
            match dim {
                None => dim = Some(v.len()),
                Some(d) if d != v.len() => {
                    return Err(Error::DimensionMismatch {
                        id: Some(q.id.clone()),
                        expected: d,
                        got: v.len(),
                    })
                }
                _ => {}
            }
        }
    }
    Ok(dim)
}

pub fn embed(a: EmbedArgs, s: &mut Settings, c: &Common) -> Result<()> {
    let corpus = load_corpus(s, a.quotes, None)?;
    let corpus = match s.optional_input("sidecar", a.sidecar)? {
        Some(p) => {
            let (corpus, report) = attach_external(&corpus, &read_sidecar(&p)?)?;
            log::info!("attached {} vectors, {} quotes unembedded", report.attached, report.unembedded.len());
            corpus
        }
        None => corpus,
    };
    let existing = embedding_dim(&corpus)?;
    let dim = s.value("dim", a.dim, existing.unwrap_or(DEFAULT_DIM))?;
    if let Some(d) = existing.filter(|d| *d != dim) {
        return Err(Error::DimensionMismatch {
            id: Some("--dim".into()),
            expected: d,
            got: dim,
        });
    }
    let before = corpus.quotes().iter().filter(|q| q.embedding.is_none()).count();
    let corpus = embed_missing(&corpus, dim, c.seed)?;
    let mut out = Output::new(&c.out, "embed", c.seed)?;
    out.write_with("embedded.jsonl", |w| write_quotes(w, corpus.quotes()))?;
    out.write_with("embeddings.jsonl", |w| write_sidecar(w, &corpus))?;
    out.write_json(
        "embed_report.json",
        &serde_json::json!({ "dim": dim, "quotes": corpus.len(), "hashed": before }),
    )?;
    out.finish(s)?;
    Ok(())
}

#[derive(Subcommand)]
pub enum ProjectCmd {
    /// Fit a projection on embedded quotes
    Fit(ProjectFitArgs),
    /// Project embedded quotes with a fitted model
    Apply(ProjectApplyArgs),
}

#[derive(Args)]
pub struct ProjectFitArgs {
    #[arg(long)]
    quotes: Option<PathBuf>,
    /// `lda` or `pca`
    #[arg(long)]
    method: Option<String>,
    /// Label axis for LDA: `terrorism` or `brexit`
    #[arg(long)]
    axis: Option<String>,
    #[arg(long)]
    components: Option<usize>,
}

#[derive(Args)]
pub struct ProjectApplyArgs {
    #[arg(long)]
    quotes: Option<PathBuf>,
    /// Projection model JSON
    #[arg(long)]
    model: Option<PathBuf>,
}

fn label(q: &Quote, axis: Axis) -> Option<String> {
    q.label(axis).map(|l| l.to_string())
}

/// Embedded quotes with their vectors, in corpus order.
pub fn embedded(corpus: &Corpus) -> Result<(Vec<&Quote>, Vec<Vec<f64>>)> {
    embedding_dim(corpus)?;
    let quotes: Vec<&Quote> = corpus.quotes().iter().filter(|q| q.embedding.is_some()).collect();
    if quotes.is_empty() {
        return Err(Error::InsufficientData("no quote has an embedding; run `embed` first".into()));
    }
    let vectors = quotes.iter().map(|q| q.embedding.clone().unwrap_or_default()).collect();
    Ok((quotes, vectors))
}

pub fn read_projection(path: &std::path::Path) -> Result<ProjectionModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn project(cmd: ProjectCmd, s: &mut Settings, c: &Common) -> Result<()> {
    match cmd {
        ProjectCmd::Fit(a) => {
            let corpus = load_corpus(s, a.quotes, None)?;
            let method = s.value("method", a.method, "lda".to_string())?;
            let components = s.value("components", a.components, 2)?;
            let (quotes, vectors) = embedded(&corpus)?;
            let model = match method.as_str() {
                "pca" => ProjectionModel::Pca(pca_fit(&vectors, components)?),
                "lda" => {
                    let axis: Axis = s.value("axis", a.axis, "terrorism".to_string())?.parse()?;
                    let (xs, ys): (Vec<Vec<f64>>, Vec<String>) = quotes
                        .iter()
                        .zip(&vectors)
                        .filter_map(|(q, v)| label(q, axis).map(|l| (v.clone(), l)))
                        .unzip();
                    let model = lda_fit(&xs, &ys, components, &LdaConfig::default())?;
                    for w in &model.warnings {
                        log::warn!("{w}");
                    }
                    ProjectionModel::Lda(model)
                }
                other => return Err(Error::invalid(format!("unknown projection method `{other}`"))),
            };
            let mut out = Output::new(&c.out, "project fit", c.seed)?;
            out.write_json("projection.json", &model)?;
            out.finish(s)?;
        }
        ProjectCmd::Apply(a) => {
            let corpus = load_corpus(s, a.quotes, None)?;
            let model = read_projection(&s.input("model", a.model)?)?;
            let (quotes, vectors) = embedded(&corpus)?;
            let projected = model.apply(&vectors)?;
            let mut out = Output::new(&c.out, "project apply", c.seed)?;
            out.write_with("projected.csv", |w| {
                let mut wtr = csv::Writer::from_writer(w);
                let k = projected.first().map_or(0, Vec::len);
                let mut header: Vec<String> =
                    ["quote_id", "person_id", "timestamp", "terrorism_label", "brexit_label"].map(String::from).to_vec();
                header.extend((1..=k).map(|i| format!("p{i}")));
                wtr.write_record(&header)?;
                for (q, p) in quotes.iter().zip(&projected) {
                    let mut row = vec![
                        q.id.clone(),
                        q.person_id.clone(),
                        q.timestamp.to_string(),
                        label(q, Axis::Terrorism).unwrap_or_default(),
                        label(q, Axis::Brexit).unwrap_or_default(),
                    ];
                    row.extend(p.iter().map(f64::to_string));
                    wtr.write_record(&row)?;
                }
                wtr.flush().map_err(|e| Error::io("projected.csv", e))
            })?;
            out.finish(s)?;
        }
    }
    Ok(())
}

#[derive(Subcommand)]
pub enum ClassifyCmd {
    /// Stratified cross-validation of the SVM classifier
    Cv(CvArgs),
}

#[derive(Args)]
pub struct CvArgs {
    #[arg(long)]
    quotes: Option<PathBuf>,
    #[arg(long)]
    axis: Option<String>,
    #[arg(long)]
    folds: Option<usize>,
    /// `default` or `small` (no PCA, C in {1, 10}, one kernel width)
    #[arg(long)]
    grid: Option<String>,
}

pub fn classify(cmd: ClassifyCmd, s: &mut Settings, c: &Common) -> Result<()> {
    let ClassifyCmd::Cv(a) = cmd;
    let corpus = load_corpus(s, a.quotes, None)?;
    let axis: Axis = s.value("axis", a.axis, "terrorism".to_string())?.parse()?;
    let folds = s.value("folds", a.folds, 10)?;
    let grid = match s.value("grid", a.grid, "default".to_string())?.as_str() {
        "default" => Grid::default(),
        "small" => Grid {
            n_pca: vec![None],
            c: vec![1.0, 10.0],
            gamma_scale: vec![1.0],
        },
        other => return Err(Error::invalid(format!("unknown grid `{other}`"))),
    };
    let (quotes, vectors) = embedded(&corpus)?;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut ids = Vec::new();
    for (q, v) in quotes.iter().zip(vectors) {
        if let Some(l) = label(q, axis) {
            xs.push(v);
            ys.push(l);
            ids.push(q.id.clone());
        }
    }
    let config = CvConfig {
        folds,
        seed: c.seed,
        grid,
        ..Default::default()
    };
    let report = cross_validate(&xs, &ys, &config)?;
    #[derive(Serialize)]
    struct Out<'a> {
        axis: String,
        samples: usize,
        unlabelled: usize,
        balanced_accuracy: f64,
        report: &'a CvReport,
    }
    let mut out = Output::new(&c.out, "classify cv", c.seed)?;
    out.write_json(
        "report.json",
        &Out {
            axis: format!("{axis:?}").to_lowercase(),
            samples: xs.len(),
            unlabelled: quotes.len() - xs.len(),
            balanced_accuracy: report.balanced_accuracy,
            report: &report,
        },
    )?;
    out.write_with("predictions.csv", |w| {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["quote_id", "label", "predicted"])?;
        for ((id, y), p) in ids.iter().zip(&ys).zip(&report.predictions) {
            wtr.write_record([id.as_str(), y.as_str(), report.classes[*p].as_str()])?;
        }
        wtr.flush().map_err(|e| Error::io("predictions.csv", e))
    })?;
    println!("balanced accuracy {:.4}", report.balanced_accuracy);
    out.finish(s)?;
    Ok(())
}

#[derive(Args)]
pub struct CorrelateArgs {
    #[arg(long)]
    quotes: Option<PathBuf>,
    #[arg(long)]
    persons: Option<PathBuf>,
    #[arg(long)]
    votes: Option<PathBuf>,
    /// Uniform jitter half-width for the scatter export
    #[arg(long)]
    jitter: Option<f64>,
}

pub fn correlate(a: CorrelateArgs, s: &mut Settings, c: &Common) -> Result<()> {
    let corpus = load_corpus(s, a.quotes, a.persons)?;
    let votes = read_votes(&s.input("votes", a.votes)?)?;
    let jitter = s.value("jitter", a.jitter, 0.05)?;
    let mut labels: BTreeMap<&str, Vec<_>> = BTreeMap::new();
    for q in corpus.quotes() {
        if let Some(l) = q.brexit_label {
            labels.entry(&q.person_id).or_default().push(l);
        }
    }
    let mut points = Vec::new();
    let mut excluded = BTreeMap::new();
    for (id, record) in &votes {
        let attitude = labels
            .get(id.as_str())
            .ok_or_else(|| Error::InsufficientData("no Brexit-labelled statements".into()))
            .and_then(|l| attitude_score(l.iter().copied()));
        match (attitude, vote_score(record)) {
            (Ok(x), Ok(y)) => points.push(ScatterPoint {
                x,
                y,
                group: corpus.person(id).map(|p| p.group.clone()).unwrap_or_default(),
            }),
            (Err(e), _) | (_, Err(e)) => {
                excluded.insert(id.clone(), e.to_string());
            }
        }
    }
    let xs: Vec<f64> = points.iter().map(|p| p.x).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.y).collect();
    let r = pearson(&xs, &ys)?;
    let rows = export_scatter(&points, jitter, c.seed)?;
    let mut out = Output::new(&c.out, "correlate", c.seed)?;
    out.write_json(
        "correlation.json",
        &serde_json::json!({ "pearson_r": r, "persons": points.len(), "excluded": excluded }),
    )?;
    out.write_with("scatter.csv", |w| write_scatter_csv(w, &rows))?;
    println!("pearson r {r:.4} over {} persons", points.len());
    out.finish(s)?;
    Ok(())
}

#[derive(Args)]
pub struct ScatterArgs {
    #[arg(long)]
    quotes: Option<PathBuf>,
    /// Projection model JSON
    #[arg(long)]
    model: Option<PathBuf>,
    /// Label used as the group: `terrorism` or `brexit`
    #[arg(long)]
    axis: Option<String>,
    #[arg(long)]
    jitter: Option<f64>,
}

pub fn scatter(a: ScatterArgs, s: &mut Settings, c: &Common) -> Result<()> {
    let corpus = load_corpus(s, a.quotes, None)?;
    let model = read_projection(&s.input("model", a.model)?)?;
    let axis: Axis = s.value("axis", a.axis, "terrorism".to_string())?.parse()?;
    let jitter = s.value("jitter", a.jitter, 0.0)?;
    let (quotes, vectors) = embedded(&corpus)?;
    let projected = model.apply(&vectors)?;
    if projected.first().is_some_and(|p| p.len() < 2) {
        return Err(Error::invalid("scatter export needs a projection with at least 2 axes"));
    }
    let points: Vec<ScatterPoint> = quotes
        .iter()
        .zip(&projected)
        .map(|(q, p)| ScatterPoint {
            x: p[0],
            y: p[1],
            group: label(q, axis).unwrap_or_else(|| "unlabelled".into()),
        })
        .collect();
    let rows = export_scatter(&points, jitter, c.seed)?;
    let mut out = Output::new(&c.out, "export scatter", c.seed)?;
    out.write_with("scatter.csv", |w| write_scatter_csv(w, &rows))?;
    out.finish(s)?;
    Ok(())
}
