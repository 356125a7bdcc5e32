//! Confusion matrices, one-vs-rest rates, hold-out and cross-validation
//! harnesses, Dice overlap, and tabular reports.

mod report;

pub use report::{metrics_table, Table};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::Forest;
use crate::error::{Error, Result};
use crate::features::Dataset;
use crate::imaging::{Label, LabelMask};

/// Truth rows by predicted columns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(classes: &[String]) -> Self {
        Self {
            classes: classes.to_vec(),
            counts: vec![vec![0; classes.len()]; classes.len()],
        }
    }

    pub fn add(&mut self, truth: usize, predicted: usize) -> Result<()> {
        let k = self.classes.len();
        if truth >= k {
            return Err(Error::UnknownClass(truth));
        }
        if predicted >= k {
            return Err(Error::UnknownClass(predicted));
        }
        self.counts[truth][predicted] += 1;
        Ok(())
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes.len()).map(|i| self.counts[i][i]).sum()
    }

    /// One-vs-rest (TP, FP, TN, FN) for class `c`.
    pub fn one_vs_rest(&self, c: usize) -> (u64, u64, u64, u64) {
        let tp = self.counts[c][c];
        let row: u64 = self.counts[c].iter().sum();
        let col: u64 = self.counts.iter().map(|r| r[c]).sum();
        let fp = col - tp;
        let fn_ = row - tp;
        (tp, fp, self.total() - tp - fp - fn_, fn_)
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// One-vs-rest rates; `None` marks an empty denominator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRates {
    pub class: String,
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
    pub accuracy: Option<f64>,
    pub tp_rate: Option<f64>,
    pub tn_rate: Option<f64>,
    pub fp_rate: Option<f64>,
    pub fn_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub confusion: ConfusionMatrix,
    pub per_class: Vec<ClassRates>,
    pub accuracy: Option<f64>,
}

impl Metrics {
    pub fn from_confusion(confusion: ConfusionMatrix) -> Self {
        let n = confusion.total();
        let per_class = (0..confusion.classes.len())
            .map(|c| {
                let (tp, fp, tn, fn_) = confusion.one_vs_rest(c);
                ClassRates {
                    class: confusion.classes[c].clone(),
                    tp,
                    fp,
                    tn,
                    fn_,
                    accuracy: ratio(tp + tn, n),
                    tp_rate: ratio(tp, tp + fn_),
                    tn_rate: ratio(tn, tn + fp),
                    fp_rate: ratio(fp, fp + tn),
                    fn_rate: ratio(fn_, fn_ + tp),
                }
            })
            .collect();
        Self {
            accuracy: ratio(confusion.trace(), n),
            confusion,
            per_class,
        }
    }
}

pub fn confusion_and_rates(truth: &[usize], predicted: &[usize], classes: &[String]) -> Result<Metrics> {
    if truth.len() != predicted.len() {
        return Err(Error::LengthMismatch {
            truth: truth.len(),
            predicted: predicted.len(),
        });
    }
    let mut m = ConfusionMatrix::new(classes);
    for (&t, &p) in truth.iter().zip(predicted) {
        m.add(t, p)?;
    }
    Ok(Metrics::from_confusion(m))
}

/// Anything that maps a feature row to a class index.
pub trait Classify {
    fn classify(&self, values: &[f64]) -> Result<usize>;
}

impl Classify for Forest {
    fn classify(&self, values: &[f64]) -> Result<usize> {
        self.predict_class(values)
    }
}

impl<F: Fn(&[f64]) -> usize> Classify for F {
    fn classify(&self, values: &[f64]) -> Result<usize> {
        Ok(self(values))
    }
}

pub fn evaluate(model: &(impl Classify + Sync), test: &Dataset) -> Result<Metrics> {
    let predicted = test
        .rows
        .par_iter()
        .map(|r| model.classify(&r.values))
        .collect::<Result<Vec<_>>>()?;
    let truth: Vec<usize> = test.rows.iter().map(|r| r.class).collect();
    confusion_and_rates(&truth, &predicted, &test.classes)
}

fn shuffled(n: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    idx
}

/// Number of training rows for a hold-out split: `ceil(fraction * n)`, kept within `1..n`.
pub fn split_sizes(n: usize, fraction: f64) -> Result<(usize, usize)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidParameter(format!("split fraction {fraction} is not in (0, 1)")));
    }
    if n < 2 {
        return Err(Error::DatasetTooSmall(format!("{n} rows cannot be split")));
    }
    // The epsilon absorbs representation error, e.g. 0.66 * 100 = 66.00000000000001.
    let train = ((fraction * n as f64 - 1e-9).ceil() as usize).clamp(1, n - 1);
    Ok((train, n - train))
}

/// Seeded shuffle, then the first `ceil(fraction * N)` rows train and the rest test.
pub fn percentage_split(data: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let (train, _) = split_sizes(data.len(), fraction)?;
    let idx = shuffled(data.len(), seed);
    Ok((data.subset(&idx[..train]), data.subset(&idx[train..])))
}

/// Row indices of `k` folds whose sizes differ by at most one; the first
/// `n % k` folds are the larger ones. With `strata`, each class is dealt
/// round-robin across folds so class proportions are preserved.
pub fn fold_indices(n: usize, k: usize, seed: u64, strata: Option<&[usize]>) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::InvalidParameter(format!("cross-validation needs k >= 2, got {k}")));
    }
    if n < k {
        return Err(Error::DatasetTooSmall(format!("{n} rows for {k} folds")));
    }
    let idx = shuffled(n, seed);
    let mut folds = vec![Vec::new(); k];
    match strata {
        None => {
            let (base, extra) = (n / k, n % k);
            let mut it = idx.into_iter();
            for (f, fold) in folds.iter_mut().enumerate() {
                fold.extend(it.by_ref().take(base + usize::from(f < extra)));
            }
        }
        Some(classes) => {
            let mut order = idx;
            order.sort_by_key(|&i| classes[i]);
            for (j, i) in order.into_iter().enumerate() {
                folds[j % k].push(i);
            }
        }
    }
    Ok(folds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    /// All fold predictions pooled into one matrix.
    pub pooled: Metrics,
    pub folds: Vec<Metrics>,
    /// Mean over folds of each per-class rate, skipping undefined ones.
    pub fold_mean: Vec<ClassRates>,
    pub fold_mean_accuracy: Option<f64>,
}

fn mean_defined(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Train on `k - 1` folds and test on the remaining one, for each fold.
pub fn cross_validate<C, T>(data: &Dataset, k: usize, seed: u64, stratified: bool, trainer: T) -> Result<CvResult>
where
    C: Classify + Sync,
    T: Fn(&Dataset) -> Result<C> + Sync,
{
    let classes: Vec<usize> = data.rows.iter().map(|r| r.class).collect();
    let folds = fold_indices(data.len(), k, seed, stratified.then_some(classes.as_slice()))?;
    let results = (0..k)
        .into_par_iter()
        .map(|f| {
            let train: Vec<usize> = folds
                .iter()
                .enumerate()
                .filter(|(g, _)| *g != f)
                .flat_map(|(_, v)| v.iter().copied())
                .collect();
            let model = trainer(&data.subset(&train))?;
            evaluate(&model, &data.subset(&folds[f]))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut pooled = ConfusionMatrix::new(&data.classes);
    for m in &results {
        pooled.merge(&m.confusion);
    }
    let fold_mean = (0..data.classes.len())
        .map(|c| {
            let col = |f: fn(&ClassRates) -> Option<f64>| mean_defined(results.iter().map(|m| f(&m.per_class[c])));
            ClassRates {
                class: data.classes[c].clone(),
                tp: results.iter().map(|m| m.per_class[c].tp).sum(),
                fp: results.iter().map(|m| m.per_class[c].fp).sum(),
                tn: results.iter().map(|m| m.per_class[c].tn).sum(),
                fn_: results.iter().map(|m| m.per_class[c].fn_).sum(),
                accuracy: col(|r| r.accuracy),
                tp_rate: col(|r| r.tp_rate),
                tn_rate: col(|r| r.tn_rate),
                fp_rate: col(|r| r.fp_rate),
                fn_rate: col(|r| r.fn_rate),
            }
        })
        .collect();
    Ok(CvResult {
        pooled: Metrics::from_confusion(pooled),
        fold_mean_accuracy: mean_defined(results.iter().map(|m| m.accuracy)),
        folds: results,
        fold_mean,
    })
}

/// `2 TP / (2 TP + FP + FN)`; 1 when both sets are empty.
pub fn dice_from_counts(tp: u64, fp: u64, fn_: u64) -> f64 {
    let den = 2 * tp + fp + fn_;
    if den == 0 {
        1.0
    } else {
        2.0 * tp as f64 / den as f64
    }
}

/// Per-class overlap counts (TP, FP, FN) of `predicted` against `truth`.
pub fn overlap_counts(truth: &LabelMask, predicted: &LabelMask, label: Label) -> Result<(u64, u64, u64)> {
    if !truth.same_dims(predicted) {
        return Err(Error::DimensionMismatch(format!(
            "masks are {}x{} and {}x{}",
            truth.width(),
            truth.height(),
            predicted.width(),
            predicted.height()
        )));
    }
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (&t, &p) in truth.data().iter().zip(predicted.data()) {
        match (t == label, p == label) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (true, false) => fn_ += 1,
            _ => {}
        }
    }
    Ok((tp, fp, fn_))
}

pub fn dice(a: &LabelMask, b: &LabelMask, label: Label) -> Result<f64> {
    let (tp, fp, fn_) = overlap_counts(a, b, label)?;
    Ok(dice_from_counts(tp, fp, fn_))
}

/// Dice over whole scans: overlap counts summed across all slices.
pub fn dice_stack(truth: &[LabelMask], predicted: &[LabelMask], label: Label) -> Result<f64> {
    if truth.len() != predicted.len() {
        return Err(Error::LengthMismatch {
            truth: truth.len(),
            predicted: predicted.len(),
        });
    }
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (t, p) in truth.iter().zip(predicted) {
        let c = overlap_counts(t, p, label)?;
        tp += c.0;
        fp += c.1;
        fn_ += c.2;
    }
    Ok(dice_from_counts(tp, fp, fn_))
}
