use std::collections::BTreeSet;
use std::io::BufRead;
use std::path::{Path, PathBuf};

use clap::{Args, Subcommand};
use mindtrace::behave::{
    bic_score, bn_fit, bn_predict, efa_fit, hc_search, import_dag, read_behave_csv, rmse, BehaveRecord, BnFitConfig,
    DataTable, EdgeConstraints, HcConfig, LinearGaussianBn, PosteriorSamples, PriorConfig, SamplerConfig,
};
use mindtrace::{Error, Result};

use crate::output::Output;
use crate::settings::Settings;
use crate::Common;

#[derive(Subcommand)]
pub enum BehaveCmd {
    /// Sample the posterior of the branch model
    Fit(FitArgs),
    /// Posterior predictive vote shares
    Predict(PredictArgs),
    /// Hill-climbing structure search under BIC
    Hc(HcArgs),
    /// Fit a linear-Gaussian network on a given structure
    Import(ImportArgs),
    /// Exploratory factor analysis
    Efa(EfaArgs),
}

#[derive(Args)]
pub struct FitArgs {
    /// Behaviour CSV
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    warmup: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    chains: Option<usize>,
    /// Dirichlet concentration of the branch weights
    #[arg(long)]
    kappa: Option<f64>,
    /// Keep every n-th draw in posterior.json
    #[arg(long)]
    thin: Option<usize>,
}

#[derive(Args)]
pub struct PredictArgs {
    #[arg(long)]
    posterior: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Args)]
pub struct HcArgs {
    /// Behaviour CSV or a plain numeric table
    #[arg(long)]
    data: Option<PathBuf>,
    /// CSV of `from,to` edges that must be present
    #[arg(long)]
    allow: Option<PathBuf>,
    /// CSV of `from,to` edges that must be absent
    #[arg(long)]
    deny: Option<PathBuf>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    perturbation: Option<usize>,
    #[arg(long)]
    max_iterations: Option<usize>,
}

#[derive(Args)]
pub struct ImportArgs {
    /// `{"nodes": [...], "edges": [[from, to], ...]}`
    #[arg(long)]
    dag: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Args)]
pub struct EfaArgs {
    #[arg(long)]
    data: Option<PathBuf>,
}

fn is_behave_csv(path: &Path) -> Result<bool> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut first = String::new();
    std::io::BufReader::new(f).read_line(&mut first).map_err(|e| Error::io(path, e))?;
    Ok(first.split(',').next().is_some_and(|h| h.trim() == "person_id"))
}

/// Behaviour CSVs become feature columns plus `vote_share`; anything else
/// is read as a plain numeric table.
fn read_table(path: &Path) -> Result<DataTable> {
    if is_behave_csv(path)? {
        let (schema, records) = read_behave_csv(path)?;
        DataTable::from_records(&schema, &records)
    } else {
        DataTable::read_csv(path)
    }
}

fn read_edges(path: &Path) -> Result<BTreeSet<(String, String)>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(f);
    let mut out = BTreeSet::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let from = rec.get(0).unwrap_or("").trim();
        let to = rec.get(1).unwrap_or("").trim();
        if i == 0 && from == "from" && to == "to" {
            continue;
        }
        if from.is_empty() || to.is_empty() || rec.len() != 2 {
            return Err(Error::Parse {
                context: path.display().to_string(),
                line: i + 1,
                message: "expected `from,to`".into(),
            });
        }
        out.insert((from.to_string(), to.to_string()));
    }
    Ok(out)
}

fn read_records(path: &Path) -> Result<Vec<BehaveRecord>> {
    Ok(read_behave_csv(path)?.1)
}

pub fn run(cmd: BehaveCmd, s: &mut Settings, c: &Common) -> Result<()> {
    match cmd {
        BehaveCmd::Fit(a) => fit(a, s, c),
        BehaveCmd::Predict(a) => predict(a, s, c),
        BehaveCmd::Hc(a) => hc(a, s, c),
        BehaveCmd::Import(a) => {
            let dag = import_dag(&s.input("dag", a.dag)?)?;
            let data = read_table(&s.input("data", a.data)?)?;
            let (total, per) = bic_score(&dag, &data)?;
            let mut model = LinearGaussianBn::fit(&dag, &data)?;
            model.dag.node_scores = per;
            let mut out = Output::new(&c.out, "behave import", c.seed)?;
            out.write_json("lgbn.json", &serde_json::json!({ "bic": total, "model": model }))?;
            out.finish(s)
        }
        BehaveCmd::Efa(a) => {
            let data = read_table(&s.input("data", a.data)?)?;
            let fa = efa_fit(&data)?;
            for w in &fa.warnings {
                log::warn!("{w}");
            }
            let mut out = Output::new(&c.out, "behave efa", c.seed)?;
            out.write_json("efa.json", &fa)?;
            out.write_with("loadings.csv", |w| {
                let mut wtr = csv::Writer::from_writer(w);
                let mut header = vec!["variable".to_string()];
                header.extend((1..=fa.n_factors()).map(|f| format!("factor_{f}")));
                header.push("assigned".into());
                wtr.write_record(&header)?;
                for ((v, row), assigned) in fa.variables.iter().zip(&fa.loadings).zip(&fa.assignment) {
                    let mut rec = vec![v.clone()];
                    rec.extend(row.iter().map(f64::to_string));
                    rec.push(assigned.map_or(String::new(), |f| (f + 1).to_string()));
                    wtr.write_record(&rec)?;
                }
                wtr.flush().map_err(|e| Error::io("loadings.csv", e))
            })?;
            out.finish(s)
        }
    }
    .map(|_| ())
}

fn fit(a: FitArgs, s: &mut Settings, c: &Common) -> Result<Vec<PathBuf>> {
    let records = read_records(&s.input("data", a.data)?)?;
    let d = BnFitConfig::default();
    let config = BnFitConfig {
        chains: s.value("chains", a.chains, d.chains)?,
        sampler: SamplerConfig {
            warmup: s.value("warmup", a.warmup, d.sampler.warmup)?,
            samples: s.value("samples", a.samples, d.sampler.samples)?,
            ..d.sampler
        },
        seed: c.seed,
        prior: PriorConfig {
            kappa: s.value("kappa", a.kappa, d.prior.kappa)?,
            ..d.prior
        },
        ..d
    };
    let thin = s.value("thin", a.thin, 10)?;
    if thin == 0 {
        return Err(Error::invalid("thin must be at least 1"));
    }
    let mut post = bn_fit(&records, &config)?;
    if !post.converged {
        log::warn!("split R-hat above {} for some parameters", config.rhat_threshold);
    }
    let mut out = Output::new(&c.out, "behave fit", c.seed)?;
    out.write_with("summary.csv", |w| {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["parameter", "mean", "lower_95", "upper_95", "rhat"])?;
        let mean = post.mean();
        for (j, name) in post.names.iter().enumerate() {
            let (lo, hi) = post.interval(j, 0.95);
            wtr.write_record([name.clone(), mean[j].to_string(), lo.to_string(), hi.to_string(), post.rhat[j].to_string()])?;
        }
        wtr.flush().map_err(|e| Error::io("summary.csv", e))
    })?;
    let keep: Vec<usize> = (0..post.draws.len()).step_by(thin).collect();
    post.draws = keep.iter().map(|&i| std::mem::take(&mut post.draws[i])).collect();
    post.chain = keep.iter().map(|&i| post.chain[i]).collect();
    out.write_json("posterior.json", &post)?;
    println!("{} draws kept, converged: {}", post.draws.len(), post.converged);
    out.finish(s)
}

fn predict(a: PredictArgs, s: &mut Settings, c: &Common) -> Result<Vec<PathBuf>> {
    let path = s.input("posterior", a.posterior)?;
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let post: PosteriorSamples = serde_json::from_str(&text)?;
    let records = read_records(&s.input("data", a.data)?)?;
    let predictions = records.iter().map(|r| bn_predict(&post, r)).collect::<Result<Vec<_>>>()?;
    let (mut pred, mut truth) = (Vec::new(), Vec::new());
    for (r, p) in records.iter().zip(&predictions) {
        if let Some(share) = r.vote_share() {
            pred.push(p.mean);
            truth.push(share);
        }
    }
    let summary = if truth.is_empty() {
        serde_json::json!({ "persons": records.len(), "with_votes": 0 })
    } else {
        let global = truth.iter().sum::<f64>() / truth.len() as f64;
        serde_json::json!({
            "persons": records.len(),
            "with_votes": truth.len(),
            "rmse": rmse(&pred, &truth)?,
            "rmse_global_mean": rmse(&vec![global; truth.len()], &truth)?,
        })
    };
    let mut out = Output::new(&c.out, "behave predict", c.seed)?;
    out.write_with("predictions.csv", |w| {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["person_id", "mean", "lower_90", "upper_90", "observed"])?;
        for (r, p) in records.iter().zip(&predictions) {
            wtr.write_record([
                r.person_id.clone(),
                p.mean.to_string(),
                p.lower.to_string(),
                p.upper.to_string(),
                r.vote_share().map_or(String::new(), |v| v.to_string()),
            ])?;
        }
        wtr.flush().map_err(|e| Error::io("predictions.csv", e))
    })?;
    out.write_json("predict_summary.json", &summary)?;
    out.finish(s)
}

fn hc(a: HcArgs, s: &mut Settings, c: &Common) -> Result<Vec<PathBuf>> {
    let data = read_table(&s.input("data", a.data)?)?;
    let d = HcConfig::default();
    let constraints = EdgeConstraints {
        allow: s.optional_input("allow", a.allow)?.map(|p| read_edges(&p)).transpose()?.unwrap_or_default(),
        deny: s.optional_input("deny", a.deny)?.map(|p| read_edges(&p)).transpose()?.unwrap_or_default(),
    };
    let config = HcConfig {
        max_iterations: s.value("max_iterations", a.max_iterations, d.max_iterations)?,
        restarts: s.value("restarts", a.restarts, d.restarts)?,
        perturbation: s.value("perturbation", a.perturbation, d.perturbation)?,
        seed: c.seed,
        constraints,
    };
    let dag = hc_search(&data, &config)?;
    let (bic, _) = bic_score(&dag, &data)?;
    let mut out = Output::new(&c.out, "behave hc", c.seed)?;
    out.write_bytes("dag.json", format!("{}\n", dag.to_json()?).as_bytes())?;
    let max_parents = (0..dag.len()).map(|j| dag.parents(j).len()).max().unwrap_or(0);
    out.write_json(
        "hc_summary.json",
        &serde_json::json!({
            "bic": bic,
            "nodes": dag.len(),
            "edges": dag.edges.len(),
            "max_parents": max_parents,
        }),
    )?;
    out.finish(s)
}
