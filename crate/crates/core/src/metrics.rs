//! Accuracy of SSM estimates against a reference series.

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stack_io::SsmSeries;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("need at least {needed} pairs, got {got}")]
    InsufficientPairs { needed: usize, got: usize },
    #[error("correlation undefined: a series has zero variance")]
    ZeroVariance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pair {
    pub time: DateTime<Utc>,
    pub estimate: f64,
    pub reference: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Alignment {
    pub pairs: Vec<Pair>,
    pub dropped: usize,
}

/// Pairs each estimate with the nearest reference sample no more than
/// `max_gap_hours` away; ties go to the earlier sample.
pub fn align(estimates: &[(DateTime<Utc>, f64)], reference: &SsmSeries, max_gap_hours: f64) -> Alignment {
    let refs = reference.records();
    let max_gap = Duration::milliseconds((max_gap_hours * 3_600_000.0).round() as i64);
    let mut out = Alignment::default();
    for &(time, estimate) in estimates {
        let idx = refs.partition_point(|r| r.datetime < time);
        let before = idx.checked_sub(1).map(|i| &refs[i]);
        let after = refs.get(idx);
        let nearest = match (before, after) {
            (Some(b), Some(a)) => {
                if time - b.datetime <= a.datetime - time {
                    Some(b)
                } else {
                    Some(a)
                }
            }
            (b, a) => b.or(a),
        };
        match nearest {
            Some(r) if (r.datetime - time).abs() <= max_gap => out.pairs.push(Pair {
                time,
                estimate,
                reference: r.ssm,
            }),
            _ => out.dropped += 1,
        }
    }
    out
}

fn need(pairs: &[Pair], n: usize) -> Result<(), MetricsError> {
    if pairs.len() < n {
        Err(MetricsError::InsufficientPairs {
            needed: n,
            got: pairs.len(),
        })
    } else {
        Ok(())
    }
}

pub fn rmse(pairs: &[Pair]) -> Result<f64, MetricsError> {
    need(pairs, 1)?;
    let mse = pairs.iter().map(|p| (p.estimate - p.reference).powi(2)).sum::<f64>() / pairs.len() as f64;
    Ok(mse.sqrt())
}

/// Mean of estimate minus reference.
pub fn bias(pairs: &[Pair]) -> Result<f64, MetricsError> {
    need(pairs, 1)?;
    Ok(pairs.iter().map(|p| p.estimate - p.reference).sum::<f64>() / pairs.len() as f64)
}

pub fn pearson_r(pairs: &[Pair]) -> Result<f64, MetricsError> {
    need(pairs, 2)?;
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.estimate).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.reference).sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for p in pairs {
        let (dx, dy) = (p.estimate - mx, p.reference - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    let constant = |f: fn(&Pair) -> f64| pairs.iter().all(|p| f(p) == f(&pairs[0]));
    if constant(|p| p.estimate) || constant(|p| p.reference) || sxx == 0.0 || syy == 0.0 {
        return Err(MetricsError::ZeroVariance);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub pairs: usize,
    pub dropped: usize,
    pub rmse: Option<f64>,
    pub bias: Option<f64>,
    /// Absent when undefined (fewer than two pairs or zero variance).
    pub pearson_r: Option<f64>,
}

pub fn summarize(alignment: &Alignment) -> Summary {
    Summary {
        pairs: alignment.pairs.len(),
        dropped: alignment.dropped,
        rmse: rmse(&alignment.pairs).ok(),
        bias: bias(&alignment.pairs).ok(),
        pearson_r: pearson_r(&alignment.pairs).ok(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stack_io::SsmRecord;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn t(hours: i64) -> DateTime<Utc> {
        DateTime::parse_from_rfc3339("2018-07-05T14:30:00Z")
            .unwrap()
            .with_timezone(&Utc)
            + Duration::hours(hours)
    }

    fn series(points: &[(DateTime<Utc>, f64)]) -> SsmSeries {
        SsmSeries::new(
            points
                .iter()
                .map(|&(datetime, ssm)| SsmRecord { datetime, ssm })
                .collect(),
        )
        .unwrap()
    }

    fn pairs(est: &[f64], refs: &[f64]) -> Vec<Pair> {
        est.iter()
            .zip(refs)
            .enumerate()
            .map(|(i, (&e, &r))| Pair {
                time: t(i as i64),
                estimate: e,
                reference: r,
            })
            .collect()
    }

    #[test]
    fn exact_matches_all_pair() {
        let pts: Vec<_> = (0..5).map(|i| (t(24 * i), 0.05 + 0.01 * i as f64)).collect();
        let a = align(&pts, &series(&pts), 12.0);
        assert_eq!(a.pairs.len(), 5);
        assert_eq!(a.dropped, 0);
    }

    #[test]
    fn wide_gap_drops() {
        let refs = series(&[(t(0), 0.1), (t(48), 0.1)]);
        let est = [(t(1), 0.1), (t(24), 0.2), (t(47), 0.1)];
        let a = align(&est, &refs, 12.0);
        assert_eq!(a.pairs.len(), 2);
        assert_eq!(a.dropped, 1);
    }

    #[test]
    fn matches_brute_force_nearest() {
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let mut ref_times: Vec<i64> = (0..60).map(|_| rng.random_range(0..2000)).collect();
        ref_times.sort_unstable();
        ref_times.dedup();
        let refs: Vec<_> = ref_times
            .iter()
            .map(|&m| (t(0) + Duration::minutes(m * 30), rng.random_range(0.0..0.5)))
            .collect();
        let est: Vec<_> = (0..40)
            .map(|i| (t(0) + Duration::minutes(i * 1500 + rng.random_range(-300..300)), 0.1))
            .collect();
        let a = align(&est, &series(&refs), 12.0);

        let mut expected = Vec::new();
        let mut dropped = 0;
        for &(time, e) in &est {
            let best = refs
                .iter()
                .min_by_key(|(rt, _)| ((*rt - time).num_milliseconds().abs(), *rt))
                .unwrap();
            if (best.0 - time).abs() <= Duration::hours(12) {
                expected.push(Pair {
                    time,
                    estimate: e,
                    reference: best.1,
                });
            } else {
                dropped += 1;
            }
        }
        assert_eq!(a.pairs, expected);
        assert_eq!(a.dropped, dropped);
    }

    #[test]
    fn perfect_and_offset() {
        let r = [0.02, 0.05, 0.11, 0.3];
        let p = pairs(&r, &r);
        assert_eq!(rmse(&p).unwrap(), 0.0);
        assert_eq!(bias(&p).unwrap(), 0.0);
        assert!((pearson_r(&p).unwrap() - 1.0).abs() < 1e-12);

        let shifted: Vec<f64> = r.iter().map(|v| v + 0.02).collect();
        let p = pairs(&shifted, &r);
        assert!((rmse(&p).unwrap() - 0.02).abs() < 1e-12);
        assert!((bias(&p).unwrap() - 0.02).abs() < 1e-12);
        assert!((pearson_r(&p).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn errors_reported() {
        assert_eq!(rmse(&[]), Err(MetricsError::InsufficientPairs { needed: 1, got: 0 }));
        let p = pairs(&[0.1], &[0.2]);
        assert_eq!(
            pearson_r(&p),
            Err(MetricsError::InsufficientPairs { needed: 2, got: 1 })
        );
        let p = pairs(&[0.1, 0.1, 0.1], &[0.2, 0.3, 0.1]);
        assert_eq!(pearson_r(&p), Err(MetricsError::ZeroVariance));
        let s = summarize(&Alignment { pairs: p, dropped: 0 });
        assert!(s.pearson_r.is_none() && s.rmse.is_some());
    }

    #[test]
    fn matches_direct_formulas() {
        let mut rng = ChaCha8Rng::seed_from_u64(62);
        let e: Vec<f64> = (0..23).map(|_| rng.random_range(0.0..0.4)).collect();
        let r: Vec<f64> = (0..23).map(|_| rng.random_range(0.0..0.4)).collect();
        let p = pairs(&e, &r);
        let n = 23.0;
        let d: Vec<f64> = e.iter().zip(&r).map(|(a, b)| a - b).collect();
        let oracle_rmse = (d.iter().map(|v| v * v).sum::<f64>() / n).sqrt();
        let oracle_bias = d.iter().sum::<f64>() / n;
        let (se, sr) = (e.iter().sum::<f64>(), r.iter().sum::<f64>());
        let ser: f64 = e.iter().zip(&r).map(|(a, b)| a * b).sum();
        let see: f64 = e.iter().map(|a| a * a).sum();
        let srr: f64 = r.iter().map(|a| a * a).sum();
        let oracle_r = (n * ser - se * sr) / ((n * see - se * se).sqrt() * (n * srr - sr * sr).sqrt());
        assert!((rmse(&p).unwrap() - oracle_rmse).abs() < 1e-12);
        assert!((bias(&p).unwrap() - oracle_bias).abs() < 1e-12);
        assert!((pearson_r(&p).unwrap() - oracle_r).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn rmse_decomposes(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let e: Vec<f64> = (0..15).map(|_| rng.random_range(0.0..0.5)).collect();
            let r: Vec<f64> = (0..15).map(|_| rng.random_range(0.0..0.5)).collect();
            let p = pairs(&e, &r);
            let b = bias(&p).unwrap();
            let var = p.iter().map(|x| (x.estimate - x.reference - b).powi(2)).sum::<f64>() / 15.0;
            prop_assert!((rmse(&p).unwrap().powi(2) - (b * b + var)).abs() < 1e-12);
        }

        #[test]
        fn r_affine_invariant(seed in 0u64..500, scale in 0.1f64..10.0, offset in -1.0f64..1.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let e: Vec<f64> = (0..12).map(|_| rng.random_range(0.0..0.5)).collect();
            let r: Vec<f64> = (0..12).map(|_| rng.random_range(0.0..0.5)).collect();
            let base = pearson_r(&pairs(&e, &r)).unwrap();
            let et: Vec<f64> = e.iter().map(|v| scale * v + offset).collect();
            prop_assert!((pearson_r(&pairs(&et, &r)).unwrap() - base).abs() < 1e-9);
        }
    }
}
