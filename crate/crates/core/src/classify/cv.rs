use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::ConfusionMatrix;
use super::svm::{encode_labels, svm_fit_indexed, Kernel, SvmConfig};
use crate::error::{Error, Result};
use crate::project::{pca_fit, PcaModel};

/// Hyperparameter grid. `gamma_scale` multiplies `1 / (dim * var(X))`
/// computed on the (possibly PCA-reduced) training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    /// `None` keeps every input dimension.
    pub n_pca: Vec<Option<usize>>,
    pub c: Vec<f64>,
    pub gamma_scale: Vec<f64>,
}

impl Default for Grid {
    fn default() -> Self {
        Self {
            n_pca: vec![Some(16), Some(32), Some(64), Some(128), None],
            c: vec![0.1, 1.0, 10.0, 100.0],
            gamma_scale: vec![0.5, 1.0, 2.0],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CvConfig {
    pub folds: usize,
    pub seed: u64,
    pub grid: Grid,
    /// Share of each training fold held out for hyperparameter selection.
    pub validation_fraction: f64,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            folds: 10,
            seed: 0,
            grid: Grid::default(),
            validation_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub n_pca: Option<usize>,
    pub c: f64,
    pub gamma: f64,
    pub gamma_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub test_indices: Vec<usize>,
    pub confusion: ConfusionMatrix,
    pub chosen: Hyperparameters,
    pub validation_balanced_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub classes: Vec<String>,
    pub seed: u64,
    pub folds: Vec<FoldReport>,
    pub pooled: ConfusionMatrix,
    pub balanced_accuracy: f64,
    /// Out-of-fold prediction for every sample (class index).
    pub predictions: Vec<usize>,
}

fn shuffled(mut idx: Vec<usize>, rng: &mut ChaCha8Rng) -> Vec<usize> {
    idx.shuffle(rng);
    idx
}

/// Assigns each sample a fold so that every class is spread evenly.
///
/// Classes are dealt round-robin with a running offset, so classes smaller
/// than the fold count still land in distinct folds and fold sizes differ
/// by at most one.
pub fn stratified_folds(y: &[usize], folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::invalid("need at least 2 folds"));
    }
    if y.len() < folds {
        return Err(Error::InsufficientData(format!(
            "{} samples cannot fill {folds} folds",
            y.len()
        )));
    }
    let k = y.iter().max().map_or(0, |m| m + 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0; y.len()];
    let mut next = 0;
    for class in 0..k {
        let members: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
        for i in shuffled(members, &mut rng) {
            assignment[i] = next % folds;
            next += 1;
        }
    }
    Ok(assignment)
}

/// Stratified hold-out split of `indices`: returns (train, validation).
fn inner_split(indices: &[usize], y: &[usize], fraction: f64, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    let k = indices.iter().map(|&i| y[i]).max().map_or(0, |m| m + 1);
    let mut train = Vec::new();
    let mut val = Vec::new();
    for class in 0..k {
        let members: Vec<usize> = indices.iter().copied().filter(|&i| y[i] == class).collect();
        let members = shuffled(members, rng);
        let n_val = if members.len() >= 2 {
            ((members.len() as f64 * fraction).round() as usize).clamp(1, members.len() - 1)
        } else {
            0
        };
        val.extend_from_slice(&members[..n_val]);
        train.extend_from_slice(&members[n_val..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

fn gather(x: &[Vec<f64>], idx: &[usize]) -> Vec<Vec<f64>> {
    idx.iter().map(|&i| x[i].clone()).collect()
}

/// `dim * var(X)` over all entries, the scale used for default RBF widths.
fn feature_scale(x: &[Vec<f64>]) -> f64 {
    let n = x.iter().map(Vec::len).sum::<usize>() as f64;
    let mean = x.iter().flatten().sum::<f64>() / n;
    let var = x.iter().flatten().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let dim = x.first().map_or(1, Vec::len) as f64;
    let s = dim * var;
    if s > 0.0 {
        s
    } else {
        1.0
    }
}

struct Prepared {
    pca: Option<PcaModel>,
    train: Vec<Vec<f64>>,
    scale: f64,
}

fn prepare(train: Vec<Vec<f64>>, n_pca: Option<usize>) -> Result<Prepared> {
    let pca = match n_pca {
        Some(p) => Some(pca_fit(&train, p)?),
        None => None,
    };
    let train = match &pca {
        Some(m) => m.transform(&train)?,
        None => train,
    };
    let scale = feature_scale(&train);
    Ok(Prepared { pca, train, scale })
}

fn transform(p: &Prepared, x: Vec<Vec<f64>>) -> Result<Vec<Vec<f64>>> {
    match &p.pca {
        Some(m) => m.transform(&x),
        None => Ok(x),
    }
}

/// Grid values usable for a training set of `n` samples in `dim` dimensions;
/// component counts that would not reduce anything collapse to `None`.
fn usable_pca(grid: &[Option<usize>], n: usize, dim: usize) -> Vec<Option<usize>> {
    let cap = dim.min(n.saturating_sub(1));
    let mut out: Vec<Option<usize>> = Vec::new();
    for &p in grid {
        let p = match p {
            Some(p) if p >= 1 && p < cap && p < dim => Some(p),
            _ => None,
        };
        if !out.contains(&p) {
            out.push(p);
        }
    }
    if out.is_empty() {
        out.push(None);
    }
    out
}

fn fit_predict(
    x: &[Vec<f64>],
    y: &[usize],
    classes: &[String],
    train: &[usize],
    test: &[usize],
    n_pca: Option<usize>,
    c: f64,
    gamma_scale: f64,
) -> Result<(Vec<usize>, f64)> {
    let prep = prepare(gather(x, train), n_pca)?;
    let gamma = gamma_scale / prep.scale;
    let ys: Vec<usize> = train.iter().map(|&i| y[i]).collect();
    let model = svm_fit_indexed(
        &prep.train,
        &ys,
        classes.to_vec(),
        &SvmConfig::new(Kernel::Rbf { gamma }, c),
    )?;
    let test_x = transform(&prep, gather(x, test))?;
    Ok((model.predict_all(&test_x), gamma))
}

fn select(
    x: &[Vec<f64>],
    y: &[usize],
    classes: &[String],
    train: &[usize],
    config: &CvConfig,
    fold_seed: u64,
) -> Result<(Hyperparameters, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(fold_seed);
    let (inner_train, val) = inner_split(train, y, config.validation_fraction, &mut rng);
    let dim = x[0].len();
    let mut best: Option<(Hyperparameters, f64)> = None;
    for n_pca in usable_pca(&config.grid.n_pca, inner_train.len(), dim) {
        for &c in &config.grid.c {
            for &gs in &config.grid.gamma_scale {
                let (pred, gamma) = fit_predict(x, y, classes, &inner_train, &val, n_pca, c, gs)?;
                let truth: Vec<usize> = val.iter().map(|&i| y[i]).collect();
                let score = ConfusionMatrix::from_predictions(classes.len(), &truth, &pred)
                    .balanced_accuracy()
                    .unwrap_or(0.0);
                if best.as_ref().is_none_or(|(_, s)| score > *s) {
                    best = Some((
                        Hyperparameters {
                            n_pca,
                            c,
                            gamma,
                            gamma_scale: gs,
                        },
                        score,
                    ));
                }
            }
        }
    }
    best.ok_or_else(|| Error::invalid("hyperparameter grid is empty"))
}

/// Stratified k-fold evaluation of an RBF SVM with nested hyperparameter
/// selection on a seeded hold-out split of each training fold.
pub fn cross_validate(vectors: &[Vec<f64>], labels: &[String], config: &CvConfig) -> Result<CvReport> {
    if vectors.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            id: Some("labels".into()),
            expected: vectors.len(),
            got: labels.len(),
        });
    }
    let (classes, y) = encode_labels(labels);
    if classes.len() < 2 {
        return Err(Error::InsufficientData("need at least 2 classes".into()));
    }
    let assignment = stratified_folds(&y, config.folds, config.seed)?;
    let k = classes.len();

    let folds: Vec<Result<(FoldReport, Vec<usize>)>> = (0..config.folds)
        .into_par_iter()
        .map(|f| {
            let test: Vec<usize> = (0..y.len()).filter(|&i| assignment[i] == f).collect();
            let train: Vec<usize> = (0..y.len()).filter(|&i| assignment[i] != f).collect();
            let fold_seed = config.seed.wrapping_mul(1_000_003).wrapping_add(f as u64 + 1);
            let (mut chosen, val_score) = select(vectors, &y, &classes, &train, config, fold_seed)?;
            let n_pca = usable_pca(&[chosen.n_pca], train.len(), vectors[0].len())[0];
            let (pred, gamma) =
                fit_predict(vectors, &y, &classes, &train, &test, n_pca, chosen.c, chosen.gamma_scale)?;
            chosen.n_pca = n_pca;
            chosen.gamma = gamma;
            let truth: Vec<usize> = test.iter().map(|&i| y[i]).collect();
            let confusion = ConfusionMatrix::from_predictions(k, &truth, &pred);
            Ok((
                FoldReport {
                    fold: f,
                    test_indices: test,
                    confusion,
                    chosen,
                    validation_balanced_accuracy: val_score,
                },
                pred,
            ))
        })
        .collect();

    let mut pooled = ConfusionMatrix::new(k);
    let mut predictions = vec![0; y.len()];
    let mut reports = Vec::with_capacity(config.folds);
    for r in folds {
        let (report, pred) = r?;
        pooled.add(&report.confusion);
        for (&i, p) in report.test_indices.iter().zip(pred) {
            predictions[i] = p;
        }
        reports.push(report);
    }
    let balanced_accuracy = pooled.balanced_accuracy()?;
    Ok(CvReport {
        classes,
        seed: config.seed,
        folds: reports,
        pooled,
        balanced_accuracy,
        predictions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn folds_partition_evenly() {
        let y: Vec<usize> = (0..100).map(|i| i % 3).collect();
        let a = stratified_folds(&y, 10, 4).unwrap();
        for f in 0..10 {
            assert_eq!(a.iter().filter(|&&x| x == f).count(), 10);
        }
        assert_eq!(a, stratified_folds(&y, 10, 4).unwrap());
    }

    #[test]
    fn small_classes_go_to_distinct_folds() {
        let mut y = vec![0usize; 40];
        y.extend([1, 1, 1]);
        let a = stratified_folds(&y, 10, 1).unwrap();
        let mut rare: Vec<usize> = (40..43).map(|i| a[i]).collect();
        rare.sort();
        rare.dedup();
        assert_eq!(rare.len(), 3);
    }

    #[test]
    fn too_few_samples() {
        assert!(stratified_folds(&[0, 1, 0], 10, 0).is_err());
    }

    #[test]
    fn inner_split_keeps_every_class_in_training() {
        let y: Vec<usize> = (0..30).map(|i| if i < 25 { 0 } else { 1 + (i % 2) }).collect();
        let idx: Vec<usize> = (0..30).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (train, val) = inner_split(&idx, &y, 0.2, &mut rng);
        assert_eq!(train.len() + val.len(), 30);
        for c in 0..3 {
            assert!(train.iter().any(|&i| y[i] == c));
        }
    }

    #[test]
    fn pca_grid_collapses_to_full() {
        assert_eq!(usable_pca(&Grid::default().n_pca, 150, 20), vec![Some(16), None]);
        assert_eq!(usable_pca(&Grid::default().n_pca, 500, 512), Grid::default().n_pca);
    }
}
