//! Height-map error metrics and model comparison reports.
//!
//! MRE is the mean absolute error divided by the scene depth range.
//! All metrics use only pixels valid in both maps.

use std::cmp::Ordering;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{FppError, Result};
use crate::image::HeightMap;
use crate::scalar::Real;

/// Running sums of squared and absolute errors over jointly valid pixels.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ErrorAccumulator {
    pub sum_sq: f64,
    pub sum_abs: f64,
    pub count: usize,
}

impl ErrorAccumulator {
    pub fn from_maps<T: Real>(pred: &HeightMap<T>, truth: &HeightMap<T>) -> Result<Self> {
        if pred.dims() != truth.dims() {
            return Err(FppError::DimensionMismatch {
                expected: truth.dims(),
                found: pred.dims(),
            });
        }
        let mut acc = Self::default();
        let pairs = pred.image.data().iter().zip(truth.image.data());
        let valid = pred.mask.flags().iter().zip(truth.mask.flags());
        for ((&p, &t), (&vp, &vt)) in pairs.zip(valid) {
            if vp && vt {
                let e = (p - t).as_f64();
                acc.sum_sq += e * e;
                acc.sum_abs += e.abs();
                acc.count += 1;
            }
        }
        Ok(acc)
    }

    pub fn merge(&mut self, other: &Self) {
        self.sum_sq += other.sum_sq;
        self.sum_abs += other.sum_abs;
        self.count += other.count;
    }

    fn ensure_nonempty(&self) -> Result<()> {
        if self.count == 0 {
            return Err(FppError::EmptyIntersection);
        }
        Ok(())
    }

    pub fn rmse(&self) -> Result<f64> {
        self.ensure_nonempty()?;
        Ok((self.sum_sq / self.count as f64).sqrt())
    }

    pub fn mre(&self, depth_range: f64) -> Result<f64> {
        check_range(depth_range)?;
        self.ensure_nonempty()?;
        Ok(self.sum_abs / self.count as f64 / depth_range)
    }
}

fn check_range(depth_range: f64) -> Result<()> {
    if !(depth_range > 0.0 && depth_range.is_finite()) {
        return Err(FppError::invalid(format!("depth range must be positive, got {depth_range}")));
    }
    Ok(())
}

/// Root mean squared error in mm over jointly valid pixels.
pub fn rmse<T: Real>(pred: &HeightMap<T>, truth: &HeightMap<T>) -> Result<f64> {
    ErrorAccumulator::from_maps(pred, truth)?.rmse()
}

/// Mean absolute error over jointly valid pixels divided by `depth_range`.
pub fn mre<T: Real>(pred: &HeightMap<T>, truth: &HeightMap<T>, depth_range: f64) -> Result<f64> {
    check_range(depth_range)?;
    ErrorAccumulator::from_maps(pred, truth)?.mre(depth_range)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMetrics {
    pub id: String,
    pub mre: f64,
    pub rmse_mm: f64,
    pub valid_pixel_count: usize,
}

/// Metrics of one model on a set of samples. The aggregate pools every
/// jointly valid pixel of every sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mre: f64,
    pub rmse_mm: f64,
    pub valid_pixel_count: usize,
    pub depth_range_mm: f64,
    pub per_sample: Vec<SampleMetrics>,
}

impl EvalReport {
    /// Builds a report from `(id, prediction, truth)` triples.
    pub fn from_pairs<'a, T: Real>(
        pairs: impl IntoIterator<Item = (&'a str, &'a HeightMap<T>, &'a HeightMap<T>)>,
        depth_range: f64,
    ) -> Result<Self> {
        check_range(depth_range)?;
        let mut total = ErrorAccumulator::default();
        let mut per_sample = Vec::new();
        for (id, pred, truth) in pairs {
            let acc = ErrorAccumulator::from_maps(pred, truth)?;
            per_sample.push(sample_metrics(id, &acc, depth_range)?);
            total.merge(&acc);
        }
        Ok(Self {
            mre: total.mre(depth_range)?,
            rmse_mm: total.rmse()?,
            valid_pixel_count: total.count,
            depth_range_mm: depth_range,
            per_sample,
        })
    }

    pub fn from_accumulators(samples: Vec<(String, ErrorAccumulator)>, depth_range: f64) -> Result<Self> {
        check_range(depth_range)?;
        let mut total = ErrorAccumulator::default();
        let mut per_sample = Vec::with_capacity(samples.len());
        for (id, acc) in &samples {
            per_sample.push(sample_metrics(id, acc, depth_range)?);
            total.merge(acc);
        }
        Ok(Self {
            mre: total.mre(depth_range)?,
            rmse_mm: total.rmse()?,
            valid_pixel_count: total.count,
            depth_range_mm: depth_range,
            per_sample,
        })
    }
}

fn sample_metrics(id: &str, acc: &ErrorAccumulator, depth_range: f64) -> Result<SampleMetrics> {
    Ok(SampleMetrics {
        id: id.to_string(),
        mre: acc.mre(depth_range)?,
        rmse_mm: acc.rmse()?,
        valid_pixel_count: acc.count,
    })
}

/// Orders model names by ascending RMSE, then MRE, then name.
pub fn compare_models(reports: &[(String, EvalReport)]) -> Result<Vec<String>> {
    if reports.len() < 2 {
        return Err(FppError::invalid(format!(
            "model comparison needs at least 2 reports, got {}",
            reports.len()
        )));
    }
    let mut order: Vec<&(String, EvalReport)> = reports.iter().collect();
    order.sort_by(|a, b| report_order(&a.1, &b.1).then_with(|| a.0.cmp(&b.0)));
    Ok(order.into_iter().map(|(name, _)| name.clone()).collect())
}

/// Plain-text table with rows MRE and RMSE and one column per model, in the
/// order given.
pub fn format_table(reports: &[(String, EvalReport)]) -> String {
    let first = ["", "MRE", "RMSE (mm)"];
    let mut cols: Vec<[String; 3]> = vec![first.map(String::from)];
    for (name, r) in reports {
        cols.push([name.clone(), format!("{:.4e}", r.mre), format!("{:.4}", r.rmse_mm)]);
    }
    let widths: Vec<usize> = cols.iter().map(|c| c.iter().map(String::len).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for row in 0..3 {
        let mut line = String::new();
        for (k, col) in cols.iter().enumerate() {
            if k == 0 {
                let _ = write!(line, "{:<w$}", col[row], w = widths[k]);
            } else {
                let _ = write!(line, "  {:>w$}", col[row], w = widths[k]);
            }
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}

/// `Ordering` of two reports under the ranking rule, names excluded.
pub fn report_order(a: &EvalReport, b: &EvalReport) -> Ordering {
    a.rmse_mm.total_cmp(&b.rmse_mm).then(a.mre.total_cmp(&b.mre))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::{Mask, ScalarImage};
    use proptest::prelude::*;

    fn map(w: usize, h: usize, data: Vec<f64>) -> HeightMap<f64> {
        HeightMap::new(ScalarImage::new(w, h, data).unwrap(), Mask::all_valid(w, h).unwrap()).unwrap()
    }

    fn report(rmse: f64, mre: f64) -> EvalReport {
        EvalReport {
            mre,
            rmse_mm: rmse,
            valid_pixel_count: 1,
            depth_range_mm: 50.0,
            per_sample: vec![],
        }
    }

    #[test]
    fn rmse_fixtures() {
        let t = map(2, 1, vec![0.0, 0.0]);
        assert_eq!(rmse(&t, &t).unwrap(), 0.0);
        let shifted = map(2, 1, vec![1.0, 1.0]);
        assert_eq!(rmse(&shifted, &t).unwrap(), 1.0);
        let p = map(2, 1, vec![3.0, 4.0]);
        assert_eq!(rmse(&p, &t).unwrap(), 12.5f64.sqrt());
        assert!((rmse(&p, &t).unwrap() - 3.535_533_905_932_737_6).abs() < 1e-15);
    }

    #[test]
    fn mre_fixtures() {
        let t = map(2, 1, vec![10.0, 10.0]);
        assert_eq!(mre(&t, &t, 100.0).unwrap(), 0.0);
        assert_eq!(mre(&map(2, 1, vec![11.0, 11.0]), &t, 100.0).unwrap(), 0.01);
        assert_eq!(mre(&map(2, 1, vec![11.0, 7.0]), &t, 100.0).unwrap(), 0.02);
        assert!(mre(&t, &t, 0.0).is_err());
    }

    #[test]
    fn empty_intersection_and_dims() {
        let mut a = map(2, 1, vec![0.0, 1.0]);
        let mut b = map(2, 1, vec![0.0, 1.0]);
        a.mask.set(0, 0, false);
        b.mask.set(1, 0, false);
        assert!(matches!(rmse(&a, &b), Err(FppError::EmptyIntersection)));
        assert!(matches!(mre(&a, &b, 1.0), Err(FppError::EmptyIntersection)));
        let c = map(1, 2, vec![0.0, 1.0]);
        assert!(matches!(rmse(&a, &c), Err(FppError::DimensionMismatch { .. })));
    }

    #[test]
    fn masked_pixels_do_not_contribute() {
        let t = map(3, 1, vec![0.0, 0.0, 0.0]);
        let mut p = map(3, 1, vec![1.0, 1.0, 0.0]);
        p.mask.set(2, 0, false);
        p.image.set(2, 0, 1e9);
        assert_eq!(rmse(&p, &t).unwrap(), 1.0);
        assert_eq!(mre(&p, &t, 10.0).unwrap(), 0.1);
    }

    #[test]
    fn ranking_examples() {
        let reports = vec![
            ("FCN".to_string(), report(2.03, 3e-3)),
            ("UNET".to_string(), report(1.62, 2.08e-3)),
            ("AEN".to_string(), report(1.85, 2.5e-3)),
        ];
        assert_eq!(compare_models(&reports).unwrap(), ["UNET", "AEN", "FCN"]);
        let tie = vec![("A".to_string(), report(1.0, 0.2)), ("B".to_string(), report(1.0, 0.1))];
        assert_eq!(compare_models(&tie).unwrap(), ["B", "A"]);
        let full_tie = vec![("Z".to_string(), report(1.0, 0.1)), ("Y".to_string(), report(1.0, 0.1))];
        assert_eq!(compare_models(&full_tie).unwrap(), ["Y", "Z"]);
        assert!(compare_models(&tie[..1]).is_err());
    }

    #[test]
    fn pooled_aggregate() {
        let t1 = map(1, 1, vec![0.0]);
        let p1 = map(1, 1, vec![3.0]);
        let t2 = map(3, 1, vec![0.0; 3]);
        let p2 = map(3, 1, vec![1.0; 3]);
        let r = EvalReport::from_pairs([("a", &p1, &t1), ("b", &p2, &t2)], 10.0).unwrap();
        assert_eq!(r.valid_pixel_count, 4);
        assert_eq!(r.rmse_mm, 3f64.sqrt());
        assert_eq!(r.mre, 0.15);
        assert_eq!(r.per_sample[0].rmse_mm, 3.0);
        assert_eq!(r.per_sample[1].rmse_mm, 1.0);
        let json = serde_json::to_string(&r).unwrap();
        assert_eq!(serde_json::from_str::<EvalReport>(&json).unwrap(), r);
    }

    #[test]
    fn table_layout() {
        let reports = vec![("UNET".to_string(), report(1.62, 2.08e-3)), ("AEN".to_string(), report(1.85, 2.5e-3))];
        let table = format_table(&reports);
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].contains("UNET") && lines[0].contains("AEN"));
        assert!(lines[0].find("UNET") < lines[0].find("AEN"));
        assert!(lines[1].starts_with("MRE") && lines[1].contains("2.0800e-3"));
        assert!(lines[2].starts_with("RMSE (mm)") && lines[2].contains("1.6200"));
    }

    fn arb_pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<bool>, Vec<bool>)> {
        (1usize..40).prop_flat_map(|n| {
            (
                prop::collection::vec(-50.0..50.0f64, n),
                prop::collection::vec(-50.0..50.0f64, n),
                prop::collection::vec(prop::bool::weighted(0.8), n),
                prop::collection::vec(prop::bool::weighted(0.8), n),
            )
        })
    }

    fn masked(data: Vec<f64>, valid: Vec<bool>) -> HeightMap<f64> {
        let n = data.len();
        HeightMap::new(ScalarImage::new(n, 1, data).unwrap(), Mask::new(n, 1, valid).unwrap()).unwrap()
    }

    proptest! {
        #[test]
        fn metrics_are_symmetric((a, b, ma, mb) in arb_pair()) {
            let pa = masked(a, ma);
            let pb = masked(b, mb);
            match (rmse(&pa, &pb), rmse(&pb, &pa)) {
                (Ok(x), Ok(y)) => {
                    prop_assert_eq!(x, y);
                    prop_assert_eq!(mre(&pa, &pb, 50.0).unwrap(), mre(&pb, &pa, 50.0).unwrap());
                    prop_assert!(x >= 0.0);
                }
                (Err(_), Err(_)) => {}
                _ => prop_assert!(false, "asymmetric failure"),
            }
        }

        #[test]
        fn metrics_invariant_under_permutation((a, b, ma, mb) in arb_pair(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut idx: Vec<usize> = (0..a.len()).collect();
            idx.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let perm = |x: &[f64]| idx.iter().map(|&i| x[i]).collect::<Vec<_>>();
            let permb = |x: &[bool]| idx.iter().map(|&i| x[i]).collect::<Vec<_>>();
            let r0 = rmse(&masked(a.clone(), ma.clone()), &masked(b.clone(), mb.clone()));
            let r1 = rmse(&masked(perm(&a), permb(&ma)), &masked(perm(&b), permb(&mb)));
            match (r0, r1) {
                (Ok(x), Ok(y)) => prop_assert!((x - y).abs() <= 1e-12 * x.max(1.0)),
                (Err(_), Err(_)) => {}
                _ => prop_assert!(false, "permutation changed validity"),
            }
        }

        #[test]
        fn constant_offset_is_exact(ticks in prop::collection::vec(-20_480i32..20_480, 1..30), k in -64i32..64) {
            // dyadic heights and offsets keep p − t exact
            let base: Vec<f64> = ticks.iter().map(|&t| f64::from(t) / 1024.0).collect();
            let delta = f64::from(k) * 0.25;
            let n = base.len();
            let t = masked(base.clone(), vec![true; n]);
            let p = masked(base.iter().map(|x| x + delta).collect(), vec![true; n]);
            prop_assert_eq!(rmse(&p, &t).unwrap(), delta.abs());
            prop_assert_eq!(mre(&p, &t, 0.5).unwrap(), delta.abs() / 0.5);
        }

        #[test]
        fn invalidating_a_pixel_removes_it((a, b, ma, mb) in arb_pair(), pick in any::<prop::sample::Index>(), junk in -1e6..1e6f64) {
            let k = pick.index(a.len());
            let mut ma2 = ma.clone();
            ma2[k] = false;
            let mut a2 = a.clone();
            a2[k] = junk;
            let mut b_drop = b.clone();
            let mut mb_drop = mb.clone();
            b_drop.remove(k);
            mb_drop.remove(k);
            let mut a_drop = a.clone();
            let mut ma_drop = ma.clone();
            a_drop.remove(k);
            ma_drop.remove(k);
            if a_drop.is_empty() {
                return Ok(());
            }
            let with = rmse(&masked(a2, ma2), &masked(b.clone(), mb.clone()));
            let without = rmse(&masked(a_drop, ma_drop), &masked(b_drop, mb_drop));
            match (with, without) {
                (Ok(x), Ok(y)) => prop_assert_eq!(x, y),
                (Err(_), Err(_)) => {}
                _ => prop_assert!(false, "mask exclusion mismatch"),
            }
        }
    }
}
