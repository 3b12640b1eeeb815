//! Classifier quality measurement: per-class one-vs-rest confusion counts,
//! macro precision/recall/F1 over the fixed code set, the seeded multi-split
//! protocol with mean and sample std, and a random baseline.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::corpus::split_annotated;
use crate::taxonomy::{CodeId, Speaker};
use crate::{Error, Result};

/// An utterance with gold behavior labels, the unit of classifier
/// training pools and test sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotatedUtterance {
    pub conversation_id: String,
    pub utterance_index: usize,
    pub speaker: Speaker,
    pub text: String,
    pub labels: BTreeSet<CodeId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn accuracy(&self) -> f64 {
        if self.total() == 0 {
            return 0.0;
        }
        (self.tp + self.tn) as f64 / self.total() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MacroScores {
    pub macro_p: f64,
    pub macro_r: f64,
    pub macro_f1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassScores {
    pub f1: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SplitReport {
    pub per_split: Vec<MacroScores>,
    pub mean: MacroScores,
    pub std: MacroScores,
    /// Per-class F1 and accuracy averaged over splits.
    pub per_class: BTreeMap<CodeId, ClassScores>,
}

/// Flatten a labeled corpus into per-utterance evaluation units for one
/// speaker. Every utterance of that speaker must carry labels.
pub fn annotated_utterances(
    corpus: &crate::corpus::Corpus,
    speaker: Speaker,
) -> Result<Vec<AnnotatedUtterance>> {
    let mut out = Vec::new();
    for conv in &corpus.conversations {
        for utt in conv.utterances.iter().filter(|u| u.speaker == speaker) {
            let labels = utt.labels.as_ref().ok_or_else(|| {
                Error::Data(format!(
                    "conversation `{}`: {speaker} utterance {} has no labels",
                    conv.id, utt.index
                ))
            })?;
            out.push(AnnotatedUtterance {
                conversation_id: conv.id.clone(),
                utterance_index: utt.index,
                speaker,
                text: utt.text.clone(),
                labels: labels.iter().cloned().collect(),
            });
        }
    }
    Ok(out)
}

/// Multi-label one-vs-rest counting per code. `preds` and `golds` must cover
/// the same utterance set.
pub fn per_class_confusion(
    preds: &[BTreeSet<CodeId>],
    golds: &[BTreeSet<CodeId>],
    codes: &[CodeId],
) -> Result<BTreeMap<CodeId, Confusion>> {
    if preds.len() != golds.len() {
        return Err(Error::Precondition(format!(
            "prediction and gold sets differ in size ({} vs {})",
            preds.len(),
            golds.len()
        )));
    }
    let mut table: BTreeMap<CodeId, Confusion> =
        codes.iter().map(|c| (c.clone(), Confusion::default())).collect();
    for (pred, gold) in preds.iter().zip(golds) {
        for code in codes {
            let cell = table.get_mut(code).unwrap();
            match (pred.contains(code), gold.contains(code)) {
                (true, true) => cell.tp += 1,
                (true, false) => cell.fp += 1,
                (false, true) => cell.fn_ += 1,
                (false, false) => cell.tn += 1,
            }
        }
    }
    Ok(table)
}

fn prf(c: &Confusion) -> (f64, f64, f64) {
    // 0/0 -> 0 convention throughout
    let p = if c.tp + c.fp == 0 {
        0.0
    } else {
        c.tp as f64 / (c.tp + c.fp) as f64
    };
    let r = if c.tp + c.fn_ == 0 {
        0.0
    } else {
        c.tp as f64 / (c.tp + c.fn_) as f64
    };
    let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f1)
}

/// Unweighted mean over all classes in the taxonomy slice; classes absent
/// from the test set stay in the mean.
pub fn macro_prf(confusions: &BTreeMap<CodeId, Confusion>) -> MacroScores {
    assert!(!confusions.is_empty(), "macro_prf needs at least one class");
    let n = confusions.len() as f64;
    let (mut sp, mut sr, mut sf) = (0.0, 0.0, 0.0);
    for c in confusions.values() {
        let (p, r, f1) = prf(c);
        sp += p;
        sr += r;
        sf += f1;
    }
    MacroScores {
        macro_p: sp / n,
        macro_r: sr / n,
        macro_f1: sf / n,
    }
}

/// Same macro mean but dropping classes with zero gold support, kept behind
/// an explicit call for sensitivity analysis.
pub fn macro_prf_supported_only(confusions: &BTreeMap<CodeId, Confusion>) -> MacroScores {
    let supported: BTreeMap<CodeId, Confusion> = confusions
        .iter()
        .filter(|(_, c)| c.tp + c.fn_ > 0)
        .map(|(k, v)| (k.clone(), *v))
        .collect();
    if supported.is_empty() {
        return MacroScores {
            macro_p: 0.0,
            macro_r: 0.0,
            macro_f1: 0.0,
        };
    }
    macro_prf(&supported)
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    (mean, std)
}

/// Run the seeded multi-split protocol: for split i, seed = base_seed + i,
/// the train side feeds the classifier's few-shot pool, metrics come from
/// the test side. Returns mean and sample std across splits.
pub fn run_split_evaluation<F>(
    mut classify_fn: F,
    annotated: &[AnnotatedUtterance],
    codes: &[CodeId],
    n_splits: usize,
    ratio: f64,
    base_seed: u64,
) -> Result<SplitReport>
where
    F: FnMut(&[AnnotatedUtterance], &[AnnotatedUtterance]) -> Result<Vec<BTreeSet<CodeId>>>,
{
    if annotated.len() < 2 {
        return Err(Error::Precondition(
            "annotated set too small to split".into(),
        ));
    }
    let mut per_split = Vec::with_capacity(n_splits);
    let mut class_f1: BTreeMap<CodeId, Vec<f64>> = BTreeMap::new();
    let mut class_acc: BTreeMap<CodeId, Vec<f64>> = BTreeMap::new();
    for i in 0..n_splits {
        let seed = base_seed + i as u64;
        let (train, test) = split_annotated(annotated, ratio, seed)?;
        if test.is_empty() {
            return Err(Error::Precondition(format!(
                "split {i} produced an empty test set"
            )));
        }
        let preds = classify_fn(&train, &test).map_err(|e| {
            Error::Data(format!("classifier failed on split {i} (seed {seed}): {e}"))
        })?;
        let golds: Vec<BTreeSet<CodeId>> = test.iter().map(|u| u.labels.clone()).collect();
        let confusions = per_class_confusion(&preds, &golds, codes)?;
        per_split.push(macro_prf(&confusions));
        for (code, conf) in &confusions {
            let (_, _, f1) = prf(conf);
            class_f1.entry(code.clone()).or_default().push(f1);
            class_acc
                .entry(code.clone())
                .or_default()
                .push(conf.accuracy());
        }
    }
    let collect = |f: fn(&MacroScores) -> f64| -> Vec<f64> { per_split.iter().map(f).collect() };
    let (mp, sp) = mean_std(&collect(|s| s.macro_p));
    let (mr, sr) = mean_std(&collect(|s| s.macro_r));
    let (mf, sf) = mean_std(&collect(|s| s.macro_f1));
    let per_class = class_f1
        .iter()
        .map(|(code, f1s)| {
            let (f1, _) = mean_std(f1s);
            let (acc, _) = mean_std(&class_acc[code]);
            (code.clone(), ClassScores { f1, accuracy: acc })
        })
        .collect();
    Ok(SplitReport {
        per_split,
        mean: MacroScores {
            macro_p: mp,
            macro_r: mr,
            macro_f1: mf,
        },
        std: MacroScores {
            macro_p: sp,
            macro_r: sr,
            macro_f1: sf,
        },
        per_class,
    })
}

/// Random baseline: each code included independently with probability
/// 1/|codes| per utterance.
pub fn random_baseline(
    test: &[AnnotatedUtterance],
    codes: &[CodeId],
    seed: u64,
) -> Vec<BTreeSet<CodeId>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = 1.0 / codes.len() as f64;
    test.iter()
        .map(|_| {
            codes
                .iter()
                .filter(|_| rng.gen_range(0.0..1.0) < p)
                .cloned()
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(ids: &[&str]) -> BTreeSet<CodeId> {
        ids.iter().map(|s| CodeId::from(*s)).collect()
    }

    fn codes(ids: &[&str]) -> Vec<CodeId> {
        ids.iter().map(|s| CodeId::from(*s)).collect()
    }

    fn annotated(n: usize, labels: &[&str]) -> Vec<AnnotatedUtterance> {
        (0..n)
            .map(|i| AnnotatedUtterance {
                conversation_id: "c".to_string(),
                utterance_index: i,
                speaker: Speaker::Therapist,
                text: format!("utterance {i}"),
                labels: set(&[labels[i % labels.len()]]),
            })
            .collect()
    }

    #[test]
    fn perfect_predictions_have_no_errors() {
        let golds = vec![set(&["A"]), set(&["A", "B"])];
        let table = per_class_confusion(&golds, &golds, &codes(&["A", "B"])).unwrap();
        for c in table.values() {
            assert_eq!(c.fp, 0);
            assert_eq!(c.fn_, 0);
        }
        let m = macro_prf(&table);
        assert_eq!((m.macro_p, m.macro_r, m.macro_f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn hand_confusion_example() {
        // gold {u1:{A}, u2:{A,B}}, pred {u1:{A,B}, u2:{A}}
        let golds = vec![set(&["A"]), set(&["A", "B"])];
        let preds = vec![set(&["A", "B"]), set(&["A"])];
        let table = per_class_confusion(&preds, &golds, &codes(&["A", "B"])).unwrap();
        let a = table[&CodeId::from("A")];
        assert_eq!((a.tp, a.fp, a.fn_), (2, 0, 0));
        let b = table[&CodeId::from("B")];
        assert_eq!((b.tp, b.fp, b.fn_), (0, 1, 1));
        let m = macro_prf(&table);
        // F1(A)=1, F1(B)=0 -> macro 0.5
        assert_eq!(m.macro_f1, 0.5);
    }

    #[test]
    fn empty_predictions_zero_recall() {
        let golds = vec![set(&["A"]), set(&["B"])];
        let preds = vec![set(&[]), set(&[])];
        let table = per_class_confusion(&preds, &golds, &codes(&["A", "B"])).unwrap();
        assert_eq!(table[&CodeId::from("A")].fn_, 1);
        assert_eq!(macro_prf(&table).macro_r, 0.0);
    }

    #[test]
    fn mismatched_sets_rejected() {
        assert!(per_class_confusion(&[set(&["A"])], &[], &codes(&["A"])).is_err());
    }

    #[test]
    fn oracle_classifier_scores_one() {
        let data = annotated(20, &["A", "B"]);
        let report = run_split_evaluation(
            |_train, test| Ok(test.iter().map(|u| u.labels.clone()).collect()),
            &data,
            &codes(&["A", "B"]),
            5,
            0.6,
            42,
        )
        .unwrap();
        assert_eq!(report.mean.macro_f1, 1.0);
        assert_eq!(report.std.macro_f1, 0.0);
    }

    #[test]
    fn empty_classifier_scores_zero_recall() {
        let data = annotated(20, &["A", "B"]);
        let report = run_split_evaluation(
            |_train, test| Ok(test.iter().map(|_| BTreeSet::new()).collect()),
            &data,
            &codes(&["A", "B"]),
            5,
            0.6,
            42,
        )
        .unwrap();
        assert_eq!(report.mean.macro_r, 0.0);
    }

    #[test]
    fn different_base_seeds_change_partitions() {
        let items: Vec<AnnotatedUtterance> = annotated(100, &["A"]);
        let (t1, _) = split_annotated(&items, 0.6, 100).unwrap();
        let (t2, _) = split_annotated(&items, 0.6, 200).unwrap();
        let k1: Vec<usize> = t1.iter().map(|u| u.utterance_index).collect();
        let k2: Vec<usize> = t2.iter().map(|u| u.utterance_index).collect();
        assert_ne!(k1, k2);
    }

    #[test]
    fn random_baseline_is_seeded_and_calibrated() {
        let data = annotated(10_000, &["A"]);
        let cs = codes(&["c1", "c2", "c3", "c4", "c5", "c6", "c7", "c8", "c9", "c10", "c11", "c12", "c13"]);
        let p1 = random_baseline(&data, &cs, 9);
        let p2 = random_baseline(&data, &cs, 9);
        assert_eq!(p1, p2);
        let rate = p1
            .iter()
            .filter(|s| s.contains(&CodeId::from("c1")))
            .count() as f64
            / data.len() as f64;
        assert!((rate - 1.0 / 13.0).abs() < 0.01, "rate {rate}");
        // expected labels per utterance = K * 1/K = 1
        let mean_labels: f64 =
            p1.iter().map(|s| s.len() as f64).sum::<f64>() / p1.len() as f64;
        assert!((mean_labels - 1.0).abs() < 0.1, "mean {mean_labels}");
    }

    #[test]
    fn metrics_invariant_under_utterance_permutation() {
        let golds = vec![set(&["A"]), set(&["B"]), set(&["A", "B"])];
        let preds = vec![set(&["A"]), set(&[]), set(&["B"])];
        let forward = macro_prf(&per_class_confusion(&preds, &golds, &codes(&["A", "B"])).unwrap());
        let preds_rev: Vec<_> = preds.into_iter().rev().collect();
        let golds_rev: Vec<_> = golds.into_iter().rev().collect();
        let backward =
            macro_prf(&per_class_confusion(&preds_rev, &golds_rev, &codes(&["A", "B"])).unwrap());
        assert_eq!(forward, backward);
    }
}
