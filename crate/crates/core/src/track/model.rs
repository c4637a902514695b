use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::mixture::Gaussian2;
use super::tables::{CategoryTables, TableVariant};
use crate::corpus::{Corpus, PersonCategory, TerrorismLabel};
use crate::error::{Error, Result};
use crate::project::ProjectionModel;

/// Class-conditional Gaussians of the measurement model, indexed c, e, t.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryGaussians {
    /// Mean measurement per statement type.
    pub mu_z: [[f64; 2]; 3],
    /// Measurement covariance shared by all statement types.
    pub sigma_z: [[f64; 2]; 2],
    /// State distribution per person category.
    pub x_given_k: [Gaussian2; 3],
    /// State distribution per statement type.
    pub x_given_s: [Gaussian2; 3],
}

impl CategoryGaussians {
    pub fn validate(&self) -> Result<()> {
        for mu in &self.mu_z {
            Gaussian2::new(*mu, self.sigma_z)?;
        }
        for g in self.x_given_k.iter().chain(&self.x_given_s) {
            g.validate()?;
        }
        Ok(())
    }

    pub fn measurement(&self, s: usize) -> Gaussian2 {
        Gaussian2 {
            mean: self.mu_z[s],
            cov: self.sigma_z,
        }
    }
}

/// Everything the state-dependent measurement model needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryModel {
    pub tables: CategoryTables,
    pub gaussians: CategoryGaussians,
}

impl CategoryModel {
    /// Checks table consistency to `tol` and that every covariance is SPD.
    pub fn validate(&self, tol: f64) -> Result<()> {
        self.tables.validate(tol)?;
        self.gaussians.validate()
    }

    /// Built-in tables combined with caller-supplied Gaussians.
    pub fn with_builtin_tables(variant: TableVariant, gaussians: CategoryGaussians) -> Self {
        Self {
            tables: CategoryTables::builtin(variant),
            gaussians,
        }
    }

    /// Model whose statement type is also read as a region label.
    pub fn region_classifier(&self) -> Result<crate::classify::LinearRegionClassifier> {
        crate::classify::LinearRegionClassifier::from_parts(
            vec!["c".into(), "e".into(), "t".into()],
            self.gaussians.mu_z.to_vec(),
            self.gaussians.sigma_z,
            self.tables.p_s.iter().map(|p| p.max(1e-12)).collect(),
        )
    }
}

/// One projected, labelled statement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelledPoint {
    pub person_id: String,
    pub label: TerrorismLabel,
    pub z: [f64; 2],
}

fn mean_cov(points: &[[f64; 2]], denom_offset: usize) -> ([f64; 2], [[f64; 2]; 2]) {
    let n = points.len() as f64;
    let mean = [0, 1].map(|a| points.iter().map(|p| p[a]).sum::<f64>() / n);
    let mut cov = [[0.0; 2]; 2];
    for p in points {
        let d = [p[0] - mean[0], p[1] - mean[1]];
        for a in 0..2 {
            for b in 0..2 {
                cov[a][b] += d[a] * d[b];
            }
        }
    }
    let denom = (points.len().saturating_sub(denom_offset)).max(1) as f64;
    cov.iter_mut().flatten().for_each(|v| *v /= denom);
    (mean, cov)
}

/// Fits a Gaussian, adding a growing ridge (relative to `scale`) until the
/// covariance is positive definite.
fn fit_gaussian(points: &[[f64; 2]], scale: f64, what: &str) -> Result<Gaussian2> {
    if points.is_empty() {
        return Err(Error::InsufficientData(format!("no statements for {what}")));
    }
    let (mean, cov) = mean_cov(points, 1);
    let mut ridge = 0.0;
    for _ in 0..12 {
        let c = [[cov[0][0] + ridge, cov[0][1]], [cov[1][0], cov[1][1] + ridge]];
        if let Ok(g) = Gaussian2::new(mean, c) {
            if ridge > 0.0 {
                log::warn!("{what}: covariance regularised with ridge {ridge:e}");
            }
            return Ok(g);
        }
        ridge = if ridge == 0.0 { 1e-6 * scale } else { ridge * 10.0 };
    }
    Err(Error::numerical(format!("{what}: covariance is degenerate")))
}

/// Estimates tables and Gaussians from projected, labelled statements.
///
/// Tables come from the (statement type x author category) count matrix.
/// p(x|s) is fitted to the author mean position of every type-s statement,
/// p(x|k) to the statements of authors in category k, and p(z|s) uses
/// per-type means with a pooled covariance.
pub fn estimate_category_model(
    points: &[LabelledPoint],
    categories: &BTreeMap<String, PersonCategory>,
    laplace: bool,
) -> Result<CategoryModel> {
    if points.is_empty() {
        return Err(Error::InsufficientData("no labelled statements".into()));
    }
    let mut counts = [[0.0; 3]; 3];
    let mut by_s: [Vec<[f64; 2]>; 3] = Default::default();
    let mut by_k: [Vec<[f64; 2]>; 3] = Default::default();
    let mut person_sum: HashMap<&str, ([f64; 2], usize)> = HashMap::new();
    for p in points {
        let k = categories
            .get(&p.person_id)
            .ok_or_else(|| Error::invalid(format!("person `{}` has no category", p.person_id)))?
            .index();
        let s = p.label.index();
        counts[s][k] += 1.0;
        by_s[s].push(p.z);
        by_k[k].push(p.z);
        let e = person_sum.entry(&p.person_id).or_insert(([0.0; 2], 0));
        e.0[0] += p.z[0];
        e.0[1] += p.z[1];
        e.1 += 1;
    }
    let tables = CategoryTables::from_counts(counts, laplace)?;

    let all: Vec<[f64; 2]> = points.iter().map(|p| p.z).collect();
    let (_, total_cov) = mean_cov(&all, 1);
    let scale = 0.5 * (total_cov[0][0] + total_cov[1][1]).max(f64::MIN_POSITIVE);

    let names = ["c", "e", "t"];
    let mut mu_z = [[0.0; 2]; 3];
    let mut pooled = [[0.0; 2]; 2];
    for s in 0..3 {
        if by_s[s].is_empty() {
            return Err(Error::InsufficientData(format!("no statements of type {}", names[s])));
        }
        let (m, c) = mean_cov(&by_s[s], 0);
        mu_z[s] = m;
        for a in 0..2 {
            for b in 0..2 {
                pooled[a][b] += c[a][b] * by_s[s].len() as f64;
            }
        }
    }
    let dof = points.len().saturating_sub(3).max(1) as f64;
    pooled.iter_mut().flatten().for_each(|v| *v /= dof);
    let sigma_z = fit_gaussian_cov(pooled, scale)?;

    let person_mean: HashMap<&str, [f64; 2]> = person_sum
        .into_iter()
        .map(|(id, (s, n))| (id, [s[0] / n as f64, s[1] / n as f64]))
        .collect();
    let mut x_s: [Vec<[f64; 2]>; 3] = Default::default();
    for p in points {
        x_s[p.label.index()].push(person_mean[p.person_id.as_str()]);
    }
    let x_given_k = [0, 1, 2].map(|k| fit_gaussian(&by_k[k], scale, &format!("p(x|k={})", names[k])));
    let x_given_s = [0, 1, 2].map(|s| fit_gaussian(&x_s[s], scale, &format!("p(x|s={})", names[s])));
    let [k0, k1, k2] = x_given_k;
    let [s0, s1, s2] = x_given_s;
    Ok(CategoryModel {
        tables,
        gaussians: CategoryGaussians {
            mu_z,
            sigma_z,
            x_given_k: [k0?, k1?, k2?],
            x_given_s: [s0?, s1?, s2?],
        },
    })
}

fn fit_gaussian_cov(cov: [[f64; 2]; 2], scale: f64) -> Result<[[f64; 2]; 2]> {
    let mut ridge = 0.0;
    for _ in 0..12 {
        let c = [[cov[0][0] + ridge, cov[0][1]], [cov[1][0], cov[1][1] + ridge]];
        if Gaussian2::new([0.0; 2], c).is_ok() {
            return Ok(c);
        }
        ridge = if ridge == 0.0 { 1e-6 * scale } else { ridge * 10.0 };
    }
    Err(Error::numerical("pooled measurement covariance is degenerate"))
}

/// Projects every terrorism-labelled, embedded quote to 2D.
pub fn labelled_points(corpus: &Corpus, projection: &ProjectionModel) -> Result<Vec<LabelledPoint>> {
    let quotes: Vec<_> = corpus
        .quotes()
        .iter()
        .filter(|q| q.terrorism_label.is_some() && q.embedding.is_some())
        .collect();
    let vectors: Vec<Vec<f64>> = quotes.iter().map(|q| q.embedding.clone().unwrap_or_default()).collect();
    let projected = projection.apply(&vectors)?;
    quotes
        .iter()
        .zip(projected)
        .map(|(q, z)| {
            if z.len() < 2 {
                return Err(Error::DimensionMismatch {
                    id: Some(q.id.clone()),
                    expected: 2,
                    got: z.len(),
                });
            }
            Ok(LabelledPoint {
                person_id: q.person_id.clone(),
                label: q.terrorism_label.unwrap_or(TerrorismLabel::C),
                z: [z[0], z[1]],
            })
        })
        .collect()
}

/// Person categories as registered in the corpus.
pub fn person_categories(corpus: &Corpus) -> BTreeMap<String, PersonCategory> {
    corpus
        .persons()
        .filter_map(|p| p.person_category.map(|c| (p.id.clone(), c)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cat(i: usize) -> PersonCategory {
        PersonCategory::ALL[i]
    }

    #[test]
    fn labels_equal_to_categories_give_identity() {
        let mut pts = Vec::new();
        let mut cats = BTreeMap::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for p in 0..9 {
            let k = p % 3;
            cats.insert(format!("p{p}"), cat(k));
            for _ in 0..5 {
                pts.push(LabelledPoint {
                    person_id: format!("p{p}"),
                    label: TerrorismLabel::from_index(k).unwrap(),
                    z: [k as f64 + rng.random::<f64>(), rng.random::<f64>()],
                });
            }
        }
        let m = estimate_category_model(&pts, &cats, false).unwrap();
        for s in 0..3 {
            for k in 0..3 {
                assert_eq!(m.tables.p_s_given_k[s][k], if s == k { 1.0 } else { 0.0 });
            }
        }
        m.validate(1e-6).unwrap();
    }

    #[test]
    fn empty_category_is_an_error() {
        let cats: BTreeMap<_, _> = [("a".to_string(), cat(0))].into();
        let pts: Vec<_> = (0..4)
            .map(|i| LabelledPoint {
                person_id: "a".into(),
                label: TerrorismLabel::from_index(i % 3).unwrap(),
                z: [i as f64, (i * i) as f64],
            })
            .collect();
        assert!(estimate_category_model(&pts, &cats, false).is_err());
    }

    #[test]
    fn missing_category_is_an_error() {
        let pts = vec![LabelledPoint {
            person_id: "nobody".into(),
            label: TerrorismLabel::C,
            z: [0.0, 0.0],
        }];
        assert!(estimate_category_model(&pts, &BTreeMap::new(), false).is_err());
    }
}
