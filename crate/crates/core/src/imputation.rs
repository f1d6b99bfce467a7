//! Impute-then-regress baselines: fills produced as a preprocessing step.

use crate::data::TimeSeriesRecord;
use crate::error::{ensure, Result};

/// A record whose masked entries have been replaced; the original mask is
/// kept for auditing.
#[derive(Clone, Debug, PartialEq)]
pub struct ImputedRecord {
    pub values: Vec<f64>,
    pub mask: Vec<bool>,
    pub length: usize,
    pub features: usize,
}

impl ImputedRecord {
    pub fn get(&self, t: usize, n: usize) -> f64 {
        self.values[t * self.features + n]
    }
}

/// Last observation carried forward, per feature. Entries before a feature's
/// first observation take 0, the mean of a z-scored feature.
pub fn impute_locf(rec: &TimeSeriesRecord) -> ImputedRecord {
    let (len, n) = (rec.length(), rec.features());
    let mut values = vec![0.0; len * n];
    for j in 0..n {
        let mut last = 0.0;
        for t in 0..len {
            if let Some(v) = rec.value(t, j) {
                last = v;
            }
            values[t * n + j] = last;
        }
    }
    ImputedRecord {
        values,
        mask: rec.mask().to_vec(),
        length: len,
        features: n,
    }
}

/// Replaces masked entries of feature `n` with `fill[n]`.
pub fn impute_constant(rec: &TimeSeriesRecord, fill: &[f64]) -> Result<ImputedRecord> {
    let n = rec.features();
    ensure!(
        fill.len() == n,
        InvalidArgument,
        "fill vector has {} entries for {n} features",
        fill.len()
    );
    let mut values = rec.values_with(0.0);
    for (k, v) in values.iter_mut().enumerate() {
        if !rec.mask()[k] {
            *v = fill[k % n];
        }
    }
    Ok(ImputedRecord {
        values,
        mask: rec.mask().to_vec(),
        length: rec.length(),
        features: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn column(values: &[Option<f64>]) -> TimeSeriesRecord {
        TimeSeriesRecord::new(
            "c",
            values.len(),
            1,
            values.iter().map(|v| v.unwrap_or(0.0)).collect(),
            values.iter().map(Option::is_some).collect(),
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn locf_carries_forward() {
        let out = impute_locf(&column(&[Some(1.0), None, None, Some(3.0)]));
        assert_eq!(out.values, vec![1.0, 1.0, 1.0, 3.0]);
    }

    #[test]
    fn locf_leading_missing_is_zero() {
        let out = impute_locf(&column(&[None, Some(2.0), None]));
        assert_eq!(out.values, vec![0.0, 2.0, 2.0]);
    }

    #[test]
    fn locf_fully_observed_identity() {
        let out = impute_locf(&column(&[Some(4.0), Some(-1.0)]));
        assert_eq!(out.values, vec![4.0, -1.0]);
    }

    #[test]
    fn constant_fill() {
        let rec = TimeSeriesRecord::new("r", 2, 2, vec![1.0, 0.0, 0.0, 4.0], vec![true, false, false, true], 0.0)
            .unwrap();
        assert_eq!(impute_constant(&rec, &[0.0, 0.0]).unwrap().values, vec![1.0, 0.0, 0.0, 4.0]);
        assert_eq!(impute_constant(&rec, &[5.0, 6.0]).unwrap().values, vec![1.0, 6.0, 5.0, 4.0]);
        assert!(impute_constant(&rec, &[0.0]).is_err());
    }

    fn arb_record() -> impl Strategy<Value = TimeSeriesRecord> {
        (1usize..8, 1usize..4).prop_flat_map(|(len, n)| {
            (
                prop::collection::vec(-10.0f64..10.0, len * n),
                prop::collection::vec(any::<bool>(), len * n),
            )
                .prop_map(move |(v, m)| TimeSeriesRecord::new("p", len, n, v, m, 0.0).unwrap())
        })
    }

    proptest! {
        #[test]
        fn observed_values_preserved(rec in arb_record(), c in -3.0f64..3.0) {
            let fill = vec![c; rec.features()];
            for out in [impute_locf(&rec), impute_constant(&rec, &fill).unwrap()] {
                for t in 0..rec.length() {
                    for j in 0..rec.features() {
                        if let Some(v) = rec.value(t, j) {
                            prop_assert_eq!(out.get(t, j).to_bits(), v.to_bits());
                        }
                    }
                }
            }
        }

        #[test]
        fn locf_is_causal(rec in arb_record(), cut in 0usize..8) {
            // Truncating the future must not change imputed values at or before the cut.
            let cut = cut.min(rec.length() - 1);
            let n = rec.features();
            let keep = (cut + 1) * n;
            let head = TimeSeriesRecord::new(
                "h", cut + 1, n,
                rec.values_with(0.0)[..keep].to_vec(),
                rec.mask()[..keep].to_vec(), 0.0,
            ).unwrap();
            let full = impute_locf(&rec);
            let part = impute_locf(&head);
            prop_assert_eq!(&full.values[..keep], &part.values[..]);
        }
    }
}
