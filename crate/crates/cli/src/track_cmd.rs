use std::path::{Path, PathBuf};

use clap::{Args, Subcommand};
use mindtrace::track::{
    estimate_category_model, labelled_points, person_categories, predict_future, track_person, write_track_csv,
    CategoryModel, MeasurementNoise, MotionModel, NoiseIntegration, StateEstimate, Track,
};
use mindtrace::{Error, Result};

use crate::corpus_cmd::{embedded, load_corpus, read_projection};
use crate::output::Output;
use crate::settings::Settings;
use crate::Common;

#[derive(Subcommand)]
pub enum TrackCmd {
    /// Estimate category tables and Gaussians from labelled quotes
    Estimate(EstimateArgs),
    /// Track one person's mind-state over their quotes
    Run(RunArgs),
    /// Propagate a track into the future without measurements
    Predict(PredictArgs),
}

#[derive(Args)]
pub struct EstimateArgs {
    #[arg(long)]
    quotes: Option<PathBuf>,
    /// Persons with their categories
    #[arg(long)]
    persons: Option<PathBuf>,
    /// 2D projection model
    #[arg(long, alias = "lda")]
    model: Option<PathBuf>,
    /// Add one to every count before normalising
    #[arg(long)]
    laplace: bool,
}

#[derive(Args)]
pub struct RunArgs {
    #[arg(long)]
    quotes: Option<PathBuf>,
    #[arg(long)]
    persons: Option<PathBuf>,
    #[arg(long, alias = "lda")]
    model: Option<PathBuf>,
    /// Output of `track estimate`
    #[arg(long)]
    categories: Option<PathBuf>,
    #[arg(long)]
    person_id: Option<String>,
    /// `state` for category-dependent noise, `fixed` for the pooled covariance
    #[arg(long)]
    noise: Option<String>,
    /// Acceleration noise intensity per year
    #[arg(long)]
    sigma2: Option<f64>,
    /// `continuous` or `discrete`
    #[arg(long)]
    integration: Option<String>,
    /// Allowed deviation of table row sums and Bayes identity
    #[arg(long)]
    table_tolerance: Option<f64>,
}

#[derive(Args)]
pub struct PredictArgs {
    /// `track.json` written by `track run`
    #[arg(long)]
    track: Option<PathBuf>,
    /// Years ahead
    #[arg(long)]
    horizon: Option<f64>,
}

#[derive(Args)]
pub struct RegionsArgs {
    #[arg(long)]
    categories: Option<PathBuf>,
    #[arg(long, allow_hyphen_values = true)]
    x_min: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    x_max: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    y_min: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    y_max: Option<f64>,
    #[arg(long)]
    nx: Option<usize>,
    #[arg(long)]
    ny: Option<usize>,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn motion(s: &mut Settings, sigma2: Option<f64>, integration: Option<String>) -> Result<MotionModel> {
    let d = MotionModel::default();
    let integration = match s.value("integration", integration, "continuous".to_string())?.as_str() {
        "continuous" => NoiseIntegration::Continuous,
        "discrete" => NoiseIntegration::Discrete,
        other => return Err(Error::invalid(format!("unknown noise integration `{other}`"))),
    };
    let m = MotionModel {
        sigma2: s.value("sigma2", sigma2, d.sigma2)?,
        integration,
        ..d
    };
    m.validate()?;
    Ok(m)
}

pub fn run(cmd: TrackCmd, s: &mut Settings, c: &Common) -> Result<()> {
    match cmd {
        TrackCmd::Estimate(a) => {
            let corpus = load_corpus(s, a.quotes, a.persons)?;
            let projection = read_projection(&s.input("model", a.model)?)?;
            let laplace = s.flag("laplace", a.laplace)?;
            let points = labelled_points(&corpus, &projection)?;
            let model = estimate_category_model(&points, &person_categories(&corpus), laplace)?;
            let check = model.tables.check();
            let mut out = Output::new(&c.out, "track estimate", c.seed)?;
            out.write_json("categories.json", &model)?;
            out.write_json("table_check.json", &check)?;
            out.finish(s)?;
        }
        TrackCmd::Run(a) => {
            let corpus = load_corpus(s, a.quotes, a.persons)?;
            let projection = read_projection(&s.input("model", a.model)?)?;
            let model: CategoryModel = read_json(&s.input("categories", a.categories)?)?;
            let tol = s.value("table_tolerance", a.table_tolerance, 0.01)?;
            model.validate(tol)?;
            let person: String = s
                .optional("person_id", a.person_id)?
                .ok_or_else(|| Error::invalid("missing `--person-id`"))?;
            let motion = motion(s, a.sigma2, a.integration)?;
            let noise = match s.value("noise", a.noise, "state".to_string())?.as_str() {
                "state" => MeasurementNoise::StateDependent(model.clone()),
                "fixed" => MeasurementNoise::Fixed(model.gaussians.sigma_z),
                other => return Err(Error::invalid(format!("unknown noise model `{other}`"))),
            };
            let (quotes, vectors) = embedded(&corpus)?;
            let projected = projection.apply(&vectors)?;
            if projected.first().is_some_and(|p| p.len() < 2) {
                return Err(Error::invalid("tracking needs a projection with at least 2 axes"));
            }
            // prior centred on the corpus mean position
            let n = projected.len() as f64;
            let centre = [0, 1].map(|a| projected.iter().map(|p| p[a]).sum::<f64>() / n);
            let mut measurements: Vec<_> = quotes
                .iter()
                .zip(&projected)
                .filter(|(q, _)| q.person_id == person)
                .map(|(q, p)| (q.timestamp, [p[0], p[1]]))
                .collect();
            measurements.sort_by_key(|m| m.0);
            let start = measurements
                .first()
                .ok_or_else(|| Error::InsufficientData(format!("person `{person}` has no embedded quotes")))?
                .0;
            let prior = StateEstimate::prior(&motion, centre, start);
            let regions = model.region_classifier()?;
            let track = track_person(&person, &measurements, &motion, &noise, &prior, Some(&regions))?;
            let mut out = Output::new(&c.out, "track run", c.seed)?;
            out.write_with("track.csv", |w| write_track_csv(w, &track))?;
            out.write_json("track.json", &serde_json::json!({ "motion": motion, "track": track }))?;
            out.finish(s)?;
        }
        TrackCmd::Predict(a) => {
            #[derive(serde::Deserialize)]
            struct Saved {
                motion: MotionModel,
                track: Track,
            }
            let saved: Saved = read_json(&s.input("track", a.track)?)?;
            let horizon = s.value("horizon", a.horizon, 1.0)?;
            let estimate = predict_future(&saved.track, horizon, &saved.motion)?;
            let mut out = Output::new(&c.out, "track predict", c.seed)?;
            out.write_json(
                "prediction.json",
                &serde_json::json!({
                    "person_id": saved.track.person_id,
                    "horizon_years": horizon,
                    "estimate": estimate,
                }),
            )?;
            out.finish(s)?;
        }
    }
    Ok(())
}

pub fn regions(a: RegionsArgs, s: &mut Settings, c: &Common) -> Result<()> {
    let model: CategoryModel = read_json(&s.input("categories", a.categories)?)?;
    let x = (s.value("x_min", a.x_min, -5.0)?, s.value("x_max", a.x_max, 5.0)?);
    let y = (s.value("y_min", a.y_min, -5.0)?, s.value("y_max", a.y_max, 5.0)?);
    let nx = s.value("nx", a.nx, 101)?;
    let ny = s.value("ny", a.ny, 101)?;
    if !(x.0 < x.1 && y.0 < y.1) || nx < 2 || ny < 2 {
        return Err(Error::invalid("region grid needs increasing ranges and at least 2 points per axis"));
    }
    let raster = model.region_classifier()?.raster(x, y, nx, ny);
    let mut out = Output::new(&c.out, "export regions", c.seed)?;
    out.write_with("regions.csv", |w| raster.write_csv(w))?;
    out.finish(s)?;
    Ok(())
}
