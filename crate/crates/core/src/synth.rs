//! Seeded synthetic data generators for demos, benches and tests.

use chrono::{Duration, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::track::{
    CategoryGaussians, CategoryModel, Gaussian2, MotionModel, TableVariant, DAYS_PER_YEAR,
};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    Distribution::<f64>::sample(&StandardNormal, rng)
}

/// Category Gaussians laid out like the published projection: centrist
/// statements on the left, extremist to the lower right, terrorist to the
/// upper right. Centrist statements come from people anywhere in the
/// space, so their state distribution is broad.
pub fn demo_gaussians() -> CategoryGaussians {
    let g = |m: [f64; 2], v: f64| Gaussian2 {
        mean: m,
        cov: [[v, 0.0], [0.0, v]],
    };
    CategoryGaussians {
        mu_z: [[-2.0, 0.0], [1.0, -0.5], [2.0, 2.0]],
        sigma_z: [[0.5, 0.0], [0.0, 0.5]],
        x_given_k: [g([-1.5, 0.0], 1.5), g([0.8, -0.3], 1.0), g([1.8, 1.6], 0.8)],
        x_given_s: [g([-1.2, 0.2], 2.0), g([0.8, -0.3], 0.8), g([2.0, 2.0], 0.6)],
    }
}

/// Corrected published tables with [`demo_gaussians`].
pub fn demo_category_model() -> CategoryModel {
    CategoryModel::with_builtin_tables(TableVariant::Corrected, demo_gaussians())
}

pub fn date(days_from_2000: i64) -> NaiveDate {
    NaiveDate::from_ymd_opt(2000, 1, 1).expect("valid date") + Duration::days(days_from_2000)
}

/// Samples a nearly-constant-velocity trajectory at `n` random dates over
/// `years`, starting from the motion prior.
pub fn ncv_trajectory<R: Rng + ?Sized>(
    rng: &mut R,
    motion: &MotionModel,
    n: usize,
    years: f64,
) -> Vec<(NaiveDate, [f64; 4])> {
    let mut days: Vec<i64> = (0..n)
        .map(|_| (rng.random::<f64>() * years * DAYS_PER_YEAR) as i64)
        .collect();
    days.sort_unstable();
    let sp = motion.prior_position_var.sqrt();
    let sv = motion.prior_velocity_var.sqrt();
    let mut x = [sp * normal(rng), sv * normal(rng), sp * normal(rng), sv * normal(rng)];
    let mut last = days[0];
    let mut out = Vec::with_capacity(n);
    for d in days {
        let dt = (d - last) as f64 / DAYS_PER_YEAR;
        let q = motion.process_noise(dt);
        for axis in [0, 2] {
            // exact draw from the 2x2 process noise block via Cholesky
            let (a, b, c) = (q[(axis, axis)], q[(axis, axis + 1)], q[(axis + 1, axis + 1)]);
            let (e1, e2) = (normal(rng), normal(rng));
            let l11 = a.max(0.0).sqrt();
            let l21 = if l11 > 0.0 { b / l11 } else { 0.0 };
            let l22 = (c - l21 * l21).max(0.0).sqrt();
            let pos = x[axis] + dt * x[axis + 1] + l11 * e1;
            let vel = x[axis + 1] + l21 * e1 + l22 * e2;
            x[axis] = pos;
            x[axis + 1] = vel;
        }
        out.push((date(d), x));
        last = d;
    }
    out
}
