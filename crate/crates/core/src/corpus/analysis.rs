use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::BrexitLabel;
use crate::error::{Error, Result};

/// Share of Brexit-related statements that are pro-Brexit (soft or hard).
/// Statements labelled "other" are ignored.
pub fn attitude_score<I>(labels: I) -> Result<f64>
where
    I: IntoIterator<Item = BrexitLabel>,
{
    let (pro, related) = labels
        .into_iter()
        .filter(|l| l.is_brexit_related())
        .fold((0usize, 0usize), |(p, r), l| (p + l.is_pro_brexit() as usize, r + 1));
    if related == 0 {
        return Err(Error::InsufficientData(
            "no Brexit-related statements".into(),
        ));
    }
    Ok(pro as f64 / related as f64)
}

/// Pearson product-moment correlation.
pub fn correlate(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch {
            id: None,
            expected: xs.len(),
            got: ys.len(),
        });
    }
    if xs.len() < 3 {
        return Err(Error::InsufficientData("correlation needs at least 3 pairs".into()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::invalid("constant input has zero variance"));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterPoint {
    pub x: f64,
    pub y: f64,
    pub group: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterRow {
    pub x: f64,
    pub y: f64,
    pub x_jittered: f64,
    pub y_jittered: f64,
    pub group: String,
}

/// Adds independent uniform jitter in `[-jitter, jitter]` to both axes.
pub fn export_scatter(points: &[ScatterPoint], jitter: f64, seed: u64) -> Result<Vec<ScatterRow>> {
    if !(jitter >= 0.0) {
        return Err(Error::invalid("jitter must be non-negative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng| {
        if jitter == 0.0 {
            0.0
        } else {
            rng.random_range(-jitter..=jitter)
        }
    };
    Ok(points
        .iter()
        .map(|p| {
            let dx = draw(&mut rng);
            let dy = draw(&mut rng);
            ScatterRow {
                x: p.x,
                y: p.y,
                x_jittered: p.x + dx,
                y_jittered: p.y + dy,
                group: p.group.clone(),
            }
        })
        .collect())
}

pub fn write_scatter_csv<W: std::io::Write>(w: W, rows: &[ScatterRow]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush().map_err(|e| Error::io("<output>", e))?;
    Ok(())
}
