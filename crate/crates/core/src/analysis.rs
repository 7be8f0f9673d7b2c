//! Means, scaled mean distances, S-DoM, and per-sample distance series.
//!
//! Two distance magnitudes live here and are intentionally different:
//! [`delta`] divides the Frobenius norm by `T`, while [`distances_to_mean`]
//! and [`latent_distances`] report the plain Euclidean norm.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{
    Coords, EmbeddingPrior, EmbeddingRecord, FeatureType, FeatureWindow, MeanTensor, SdomReport,
    Split, SplitCounts,
};

/// Windows per parallel work unit. Fixed so the summation order, and hence
/// every bit of the result, does not depend on the thread count.
const CHUNK: usize = 512;

/// Neumaier compensated sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: &CompensatedSum) {
        self.add(other.sum);
        self.add(other.comp);
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Sum of squared element-wise differences, compensated.
fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = CompensatedSum::default();
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        acc.add(d * d);
    }
    acc.value()
}

fn check_shape(expected: (usize, usize), w: &FeatureWindow) -> Result<()> {
    let got = w.coords().shape();
    if got != expected {
        return Err(Error::Shape(format!(
            "window {}@{} is {}x{}, expected {}x{}",
            w.video_id(),
            w.start_frame(),
            got.0,
            got.1,
            expected.0,
            expected.1
        )));
    }
    Ok(())
}

/// Element-wise mean over equally shaped windows.
pub fn mean_tensor(windows: &[FeatureWindow]) -> Result<MeanTensor> {
    let first = windows
        .first()
        .ok_or_else(|| Error::Empty("mean over zero windows".into()))?;
    let shape = first.coords().shape();
    for w in windows {
        check_shape(shape, w)?;
    }
    let len = first.coords().as_slice().len();
    let partials: Vec<Vec<CompensatedSum>> = windows
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc = vec![CompensatedSum::default(); len];
            for w in chunk {
                for (a, &v) in acc.iter_mut().zip(w.coords().as_slice()) {
                    a.add(v);
                }
            }
            acc
        })
        .collect();
    let mut total = vec![CompensatedSum::default(); len];
    for part in &partials {
        for (t, p) in total.iter_mut().zip(part) {
            t.merge(p);
        }
    }
    let p = windows.len() as f64;
    let values = total.iter().map(|s| s.value() / p).collect();
    Ok(MeanTensor {
        values: Coords::new(shape.0, shape.1, values)?,
        sample_count: windows.len(),
    })
}

/// `(1/T) · ‖a − b‖_F` between two means.
pub fn delta(a: &MeanTensor, b: &MeanTensor) -> Result<f64> {
    if a.values.shape() != b.values.shape() {
        return Err(Error::Shape(format!(
            "means of shape {:?} and {:?}",
            a.values.shape(),
            b.values.shape()
        )));
    }
    let t = a.values.t() as f64;
    Ok(squared_distance(a.values.as_slice(), b.values.as_slice()).sqrt() / t)
}

/// Signed difference of means: `Δa − Δn`.
pub fn sdom(delta_a: f64, delta_n: f64) -> f64 {
    delta_a - delta_n
}

/// Δn, Δa and S-DoM from the three window splits.
pub fn sdom_report(
    train_normal: &[FeatureWindow],
    val_normal: &[FeatureWindow],
    val_anomalous: &[FeatureWindow],
) -> Result<SdomReport> {
    for (name, set) in [
        ("training", train_normal),
        ("validation-normal", val_normal),
        ("validation-anomalous", val_anomalous),
    ] {
        if set.is_empty() {
            return Err(Error::Empty(format!("{name} split has no windows")));
        }
    }
    let feature = train_normal[0].feature();
    if val_normal
        .iter()
        .chain(val_anomalous)
        .chain(train_normal)
        .any(|w| w.feature() != feature)
    {
        return Err(Error::Shape("windows of different feature types".into()));
    }
    let (mu_tn, (mu_vn, mu_va)) = rayon::join(
        || mean_tensor(train_normal),
        || rayon::join(|| mean_tensor(val_normal), || mean_tensor(val_anomalous)),
    );
    let (mu_tn, mu_vn, mu_va) = (mu_tn?, mu_vn?, mu_va?);
    let delta_n = delta(&mu_tn, &mu_vn)?;
    let delta_a = delta(&mu_tn, &mu_va)?;
    SdomReport::new(
        feature,
        delta_n,
        delta_a,
        SplitCounts {
            train: train_normal.len(),
            val_normal: val_normal.len(),
            val_anomalous: val_anomalous.len(),
        },
    )
}

/// What a distance series measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesTag {
    Feature(FeatureType),
    Latent,
}

impl SeriesTag {
    pub fn name(self) -> &'static str {
        match self {
            SeriesTag::Feature(f) => f.short_name(),
            SeriesTag::Latent => "latent",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceSeries {
    pub values: Vec<f64>,
    pub split: Option<Split>,
    pub tag: SeriesTag,
}

/// Unscaled Euclidean distance of every window to `mu`, in input order.
pub fn distances_to_mean(windows: &[FeatureWindow], mu: &MeanTensor) -> Result<DistanceSeries> {
    let shape = mu.values.shape();
    for w in windows {
        check_shape(shape, w)?;
    }
    let values = windows
        .par_iter()
        .with_min_len(CHUNK)
        .map(|w| squared_distance(w.coords().as_slice(), mu.values.as_slice()).sqrt())
        .collect();
    let split = windows.first().map(|w| w.split());
    let split = split.filter(|s| windows.iter().all(|w| w.split() == *s));
    let tag = SeriesTag::Feature(
        windows
            .first()
            .map(|w| w.feature())
            .unwrap_or(FeatureType::Pose),
    );
    Ok(DistanceSeries { values, split, tag })
}

/// Distance of every embedding to the prior mean, grouped by split.
pub fn latent_distances(
    records: &[EmbeddingRecord],
    prior: &EmbeddingPrior,
) -> Result<BTreeMap<Split, DistanceSeries>> {
    let mut out: BTreeMap<Split, DistanceSeries> = BTreeMap::new();
    for r in records {
        if r.vector.len() != prior.dim() {
            return Err(Error::Dimension {
                expected: prior.dim(),
                found: r.vector.len(),
            });
        }
        let d = squared_distance(&r.vector, &prior.mu_normal).sqrt();
        out.entry(r.split)
            .or_insert_with(|| DistanceSeries {
                values: Vec::new(),
                split: Some(r.split),
                tag: SeriesTag::Latent,
            })
            .values
            .push(d);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Label;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn window(t: usize, k: usize, data: Vec<f64>, split: Split) -> FeatureWindow {
        let label = if split == Split::ValidationAnomalous {
            Label::Anomalous
        } else {
            Label::Normal
        };
        FeatureWindow::new(
            FeatureType::Pose,
            "v".into(),
            0,
            vec!["1".into()],
            label,
            split,
            Coords::new(t, k, data).unwrap(),
            vec![true; t * k],
        )
        .unwrap()
    }

    fn random_windows(rng: &mut ChaCha8Rng, n: usize, t: usize, k: usize, split: Split) -> Vec<FeatureWindow> {
        (0..n)
            .map(|_| {
                let data = (0..t * k * 2).map(|_| rng.random_range(-500.0..500.0)).collect();
                window(t, k, data, split)
            })
            .collect()
    }

    fn mean_of(m: Vec<f64>, t: usize, k: usize) -> MeanTensor {
        MeanTensor {
            values: Coords::new(t, k, m).unwrap(),
            sample_count: 1,
        }
    }

    #[test]
    fn compensated_sum_beats_naive() {
        let mut acc = CompensatedSum::default();
        for v in [1e16, 1.0, -1e16] {
            acc.add(v);
        }
        assert_eq!(acc.value(), 1.0);
    }

    #[test]
    fn mean_of_single_window_is_itself() {
        let w = window(2, 1, vec![1.0, 2.0, 3.0, 4.0], Split::Train);
        let m = mean_tensor(std::slice::from_ref(&w)).unwrap();
        assert_eq!(m.values, *w.coords());
        assert_eq!(m.sample_count, 1);
    }

    #[test]
    fn mean_of_symmetric_pair_is_zero() {
        let data = vec![1.5, -2.0, 3.25, 7.0];
        let neg = data.iter().map(|v| -v).collect();
        let m = mean_tensor(&[window(2, 1, data, Split::Train), window(2, 1, neg, Split::Train)]).unwrap();
        assert!(m.values.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mean_errors() {
        assert!(matches!(mean_tensor(&[]), Err(Error::Empty(_))));
        let a = window(2, 1, vec![0.0; 4], Split::Train);
        let b = window(2, 2, vec![0.0; 8], Split::Train);
        assert!(matches!(mean_tensor(&[a, b]), Err(Error::Shape(_))));
    }

    #[test]
    fn mean_matches_second_pass_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let ws = random_windows(&mut rng, 50, 24, 17, Split::Train);
        let m = mean_tensor(&ws).unwrap();
        for i in 0..24 * 17 * 2 {
            let oracle: f64 = ws.iter().map(|w| w.coords().as_slice()[i]).sum::<f64>() / 50.0;
            assert!((m.values.as_slice()[i] - oracle).abs() < 1e-12);
        }
    }

    #[test]
    fn delta_hand_values() {
        let a = mean_of(vec![0.0; 48], 24, 1);
        assert_eq!(delta(&a, &a).unwrap(), 0.0);
        let mut v = vec![0.0; 48];
        v[10] = 24.0;
        assert_eq!(delta(&a, &mean_of(v, 24, 1)).unwrap(), 1.0);
        assert!(delta(&a, &mean_of(vec![0.0; 96], 24, 2)).is_err());
    }

    #[test]
    fn delta_matches_elementwise_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let a: Vec<f64> = (0..24 * 17 * 2).map(|_| rng.random_range(-100.0..100.0)).collect();
            let b: Vec<f64> = (0..24 * 17 * 2).map(|_| rng.random_range(-100.0..100.0)).collect();
            let mut oracle = 0.0;
            for i in 0..a.len() {
                oracle += (a[i] - b[i]) * (a[i] - b[i]);
            }
            let oracle = oracle.sqrt() / 24.0;
            let got = delta(&mean_of(a, 24, 17), &mean_of(b, 24, 17)).unwrap();
            assert!((got - oracle).abs() < 1e-12, "{got} vs {oracle}");
        }
    }

    #[test]
    fn sdom_values() {
        assert_eq!(sdom(3.75, 2.80), 3.75 - 2.80);
        assert!((sdom(3.75, 2.80) - 0.95).abs() < 1e-12);
        assert!((sdom(2.76, 2.91) + 0.15).abs() < 1e-12);
        assert_eq!(sdom(1.25, 1.25), 0.0);
    }

    #[test]
    fn identical_validation_normal_gives_zero_delta_n() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let train = random_windows(&mut rng, 10, 4, 2, Split::Train);
        let vn: Vec<FeatureWindow> = train
            .iter()
            .map(|w| window(4, 2, w.coords().as_slice().to_vec(), Split::ValidationNormal))
            .collect();
        let va = random_windows(&mut rng, 5, 4, 2, Split::ValidationAnomalous);
        let r = sdom_report(&train, &vn, &va).unwrap();
        assert_eq!(r.delta_n, 0.0);
        assert_eq!(r.sdom, r.delta_a);
        assert_eq!(r.counts.val_anomalous, 5);
    }

    #[test]
    fn shifted_anomalies_match_closed_form() {
        // anomalous windows are the normal windows shifted by delta in x in
        // every frame: delta = (1/T) * sqrt(T * k * shift^2) = shift * sqrt(k / T)
        let (t, k, shift) = (24, 3, 5.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let train = random_windows(&mut rng, 30, t, k, Split::Train);
        let vn: Vec<FeatureWindow> = train
            .iter()
            .map(|w| window(t, k, w.coords().as_slice().to_vec(), Split::ValidationNormal))
            .collect();
        let va: Vec<FeatureWindow> = train
            .iter()
            .map(|w| {
                let data = w
                    .coords()
                    .as_slice()
                    .iter()
                    .enumerate()
                    .map(|(i, v)| if i % 2 == 0 { v + shift } else { *v })
                    .collect();
                window(t, k, data, Split::ValidationAnomalous)
            })
            .collect();
        let r = sdom_report(&train, &vn, &va).unwrap();
        let closed = shift * ((t * k) as f64).sqrt() / t as f64;
        assert!((r.delta_a - closed).abs() < 1e-9, "{} vs {closed}", r.delta_a);
    }

    #[test]
    fn empty_split_is_an_error() {
        let w = window(2, 1, vec![0.0; 4], Split::Train);
        assert!(matches!(sdom_report(&[w], &[], &[]), Err(Error::Empty(_))));
    }

    #[test]
    fn distance_values() {
        let mu = mean_of(vec![0.0; 4], 2, 1);
        let at = window(2, 1, vec![0.0; 4], Split::ValidationNormal);
        let off = window(2, 1, vec![0.0, 5.0, 0.0, 0.0], Split::ValidationNormal);
        let s = distances_to_mean(&[at, off], &mu).unwrap();
        assert_eq!(s.values, [0.0, 5.0]);
        assert_eq!(s.split, Some(Split::ValidationNormal));
    }

    #[test]
    fn distances_match_norm_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let ws = random_windows(&mut rng, 40, 6, 5, Split::ValidationAnomalous);
        let mu = mean_tensor(&ws).unwrap();
        let s = distances_to_mean(&ws, &mu).unwrap();
        for (w, d) in ws.iter().zip(&s.values) {
            let oracle: f64 = w
                .coords()
                .as_slice()
                .iter()
                .zip(mu.values.as_slice())
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            assert!((d - oracle).abs() < 1e-12);
        }
    }

    #[test]
    fn latent_distance_values() {
        let prior = EmbeddingPrior {
            mu_normal: vec![0.0, 0.0],
        };
        let recs = vec![
            EmbeddingRecord {
                vector: vec![0.0, 0.0],
                split: Split::Train,
                source_window: None,
            },
            EmbeddingRecord {
                vector: vec![3.0, 4.0],
                split: Split::ValidationAnomalous,
                source_window: None,
            },
        ];
        let d = latent_distances(&recs, &prior).unwrap();
        assert_eq!(d[&Split::Train].values, [0.0]);
        assert_eq!(d[&Split::ValidationAnomalous].values, [5.0]);
        let bad = vec![EmbeddingRecord {
            vector: vec![1.0],
            split: Split::Train,
            source_window: None,
        }];
        assert!(matches!(latent_distances(&bad, &prior), Err(Error::Dimension { .. })));
    }

    #[test]
    fn latent_matches_component_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mu: Vec<f64> = (0..16).map(|_| rng.random_range(-1.0..1.0)).collect();
        let recs: Vec<EmbeddingRecord> = (0..60)
            .map(|i| EmbeddingRecord {
                vector: (0..16).map(|_| rng.random_range(-3.0..3.0)).collect(),
                split: Split::ALL[i % 3],
                source_window: None,
            })
            .collect();
        let d = latent_distances(&recs, &EmbeddingPrior { mu_normal: mu.clone() }).unwrap();
        for split in Split::ALL {
            let oracle: Vec<f64> = recs
                .iter()
                .filter(|r| r.split == split)
                .map(|r| {
                    let mut s = 0.0;
                    for (v, m) in r.vector.iter().zip(&mu) {
                        s += (v - m) * (v - m);
                    }
                    s.sqrt()
                })
                .collect();
            for (a, b) in d[&split].values.iter().zip(&oracle) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    proptest! {
        #[test]
        fn delta_is_a_metric(
            a in proptest::collection::vec(-1e3f64..1e3, 12),
            b in proptest::collection::vec(-1e3f64..1e3, 12),
            c in proptest::collection::vec(-1e3f64..1e3, 12),
        ) {
            let (a, b, c) = (mean_of(a, 3, 2), mean_of(b, 3, 2), mean_of(c, 3, 2));
            let ab = delta(&a, &b).unwrap();
            prop_assert_eq!(ab, delta(&b, &a).unwrap());
            prop_assert_eq!(delta(&a, &a).unwrap(), 0.0);
            prop_assert!(delta(&a, &c).unwrap() <= ab + delta(&b, &c).unwrap() + 1e-9);
        }

        #[test]
        fn sdom_antisymmetric(x in 0.0f64..10.0, y in 0.0f64..10.0) {
            prop_assert_eq!(sdom(x, y), -sdom(y, x));
        }
    }
}
