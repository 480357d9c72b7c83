//! Hierarchical aggregation image → subject → class → class average.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::metrics::MetricRecord;

/// Mean of `values` summed in sorted order, so the result does not depend on input order.
pub(crate) fn stable_mean(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum::<f64>() / values.len() as f64
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SubjectClassCell {
    pub subject: String,
    pub class: String,
    pub mean: f64,
    /// Number of image-level records averaged.
    pub images: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClassCell {
    pub class: String,
    pub mean: f64,
    /// Number of subject-level means averaged.
    pub subjects: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct AggregationResult {
    pub subject_class: Vec<SubjectClassCell>,
    pub classes: Vec<ClassCell>,
    /// Mean over class means; `None` for empty input.
    pub mean: Option<f64>,
    /// Population standard deviation over class means.
    pub sd: Option<f64>,
}

impl AggregationResult {
    pub fn class_mean(&self, class: &str) -> Option<f64> {
        self.classes.iter().find(|c| c.class == class).map(|c| c.mean)
    }
}

fn check_homogeneous(records: &[MetricRecord]) -> Result<()> {
    if let Some(first) = records.first() {
        if let Some(r) = records
            .iter()
            .find(|r| r.metric != first.metric || r.scenario != first.scenario)
        {
            return Err(Error::Structural(format!(
                "aggregation input mixes {}/{} with {}/{}; filter by scenario and metric first",
                first.scenario, first.metric, r.scenario, r.metric
            )));
        }
    }
    Ok(())
}

/// Averages over the images of each subject, then over subjects per class, then
/// over classes. Cells without records are left out rather than imputed.
/// Records must share one metric and one scenario.
pub fn aggregate_hierarchical(records: &[MetricRecord]) -> Result<AggregationResult> {
    check_homogeneous(records)?;
    let mut groups: BTreeMap<(&str, &str), Vec<f64>> = BTreeMap::new();
    for r in records {
        groups
            .entry((r.subject_id.as_str(), r.class.as_str()))
            .or_default()
            .push(r.value);
    }

    let mut per_class: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    let subject_class: Vec<SubjectClassCell> = groups
        .into_iter()
        .map(|((subject, class), mut values)| {
            let mean = stable_mean(&mut values);
            per_class.entry(class).or_default().push(mean);
            SubjectClassCell {
                subject: subject.to_string(),
                class: class.to_string(),
                mean,
                images: values.len(),
            }
        })
        .collect();

    let classes: Vec<ClassCell> = per_class
        .into_iter()
        .map(|(class, mut means)| ClassCell {
            class: class.to_string(),
            mean: stable_mean(&mut means),
            subjects: means.len(),
        })
        .collect();

    let (mean, sd) = if classes.is_empty() {
        (None, None)
    } else {
        let mut means: Vec<f64> = classes.iter().map(|c| c.mean).collect();
        let m = stable_mean(&mut means);
        let mut sq: Vec<f64> = means.iter().map(|v| (v - m).powi(2)).collect();
        (Some(m), Some(stable_mean(&mut sq).sqrt()))
    };

    Ok(AggregationResult {
        subject_class,
        classes,
        mean,
        sd,
    })
}

/// Removal scenarios: for each (source image, observed class, metric), keeps the
/// lowest score over all removed classes. The output record is keyed by the
/// source image and names the removed class that produced the minimum.
pub fn aggregate_removal(records: &[MetricRecord]) -> Vec<MetricRecord> {
    let mut best: BTreeMap<(String, String, String, String, String), &MetricRecord> = BTreeMap::new();
    for r in records {
        let source = r.source_image.clone().unwrap_or_else(|| r.image_id.clone());
        let key = (
            r.scenario.to_string(),
            r.metric.to_string(),
            source,
            r.subject_id.clone(),
            r.class.clone(),
        );
        best.entry(key)
            .and_modify(|cur| {
                let better =
                    r.value < cur.value || (r.value == cur.value && r.manipulated_class < cur.manipulated_class);
                if better {
                    *cur = r;
                }
            })
            .or_insert(r);
    }
    best.into_iter()
        .map(|((_, _, source, _, _), r)| MetricRecord {
            image_id: source,
            source_image: None,
            ..r.clone()
        })
        .collect()
}

/// Subject-level score per (subject, class): the mean over that subject's images.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SubjectScore {
    pub subject: String,
    pub class: String,
    pub score: f64,
}

pub fn subject_scores(records: &[MetricRecord]) -> Result<Vec<SubjectScore>> {
    Ok(aggregate_hierarchical(records)?
        .subject_class
        .into_iter()
        .map(|c| SubjectScore {
            subject: c.subject,
            class: c.class,
            score: c.mean,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifest::Scenario;
    use crate::metrics::Metric;

    fn rec(image: &str, subject: &str, class: &str, value: f64) -> MetricRecord {
        MetricRecord {
            image_id: image.into(),
            subject_id: subject.into(),
            scenario: Scenario::Original,
            class: class.into(),
            metric: Metric::Dsc,
            value,
            support: 1,
            source_image: None,
            manipulated_class: None,
        }
    }

    #[test]
    fn hierarchy_differs_from_flat_mean() {
        let recs = [
            rec("a1", "A", "liver", 0.8),
            rec("a2", "A", "liver", 0.6),
            rec("b1", "B", "liver", 1.0),
        ];
        let agg = aggregate_hierarchical(&recs).unwrap();
        assert_eq!(agg.class_mean("liver"), Some(0.85));
        assert_eq!(agg.mean, Some(0.85));
        assert_eq!(agg.sd, Some(0.0));
        assert_eq!(agg.subject_class[0].images, 2);
    }

    #[test]
    fn single_record_and_empty() {
        let agg = aggregate_hierarchical(&[rec("x", "S", "c", 0.3)]).unwrap();
        assert_eq!(agg.subject_class[0].mean, 0.3);
        assert_eq!(agg.classes[0].mean, 0.3);
        assert_eq!(agg.mean, Some(0.3));
        let empty = aggregate_hierarchical(&[]).unwrap();
        assert_eq!(empty, AggregationResult::default());
    }

    #[test]
    fn mean_and_sd_across_classes() {
        let recs = [rec("x", "S", "a", 0.96), rec("x", "S", "b", 0.76)];
        let agg = aggregate_hierarchical(&recs).unwrap();
        assert!((agg.mean.unwrap() - 0.86).abs() < 1e-12);
        assert!((agg.sd.unwrap() - 0.10).abs() < 1e-12);
    }

    #[test]
    fn mixed_metrics_rejected() {
        let mut b = rec("x", "S", "a", 0.5);
        b.metric = Metric::Nsd;
        assert!(aggregate_hierarchical(&[rec("x", "S", "a", 0.5), b]).is_err());
    }

    #[test]
    fn removal_takes_minimum() {
        let mk = |removed: &str, v: f64| {
            let mut r = rec(&format!("img@removal_zero@{removed}"), "S", "gallbladder", v);
            r.scenario = Scenario::RemovalZero;
            r.source_image = Some("img".into());
            r.manipulated_class = Some(removed.into());
            r
        };
        let out = aggregate_removal(&[mk("liver", 0.9), mk("stomach", 0.4), mk("colon", 0.7)]);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].value, 0.4);
        assert_eq!(out[0].image_id, "img");
        assert_eq!(out[0].manipulated_class.as_deref(), Some("stomach"));

        let single = aggregate_removal(&[mk("liver", 0.9)]);
        assert_eq!(single[0].value, 0.9);
    }
}
