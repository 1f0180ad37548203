//! Measurement pipeline: a trained attribute classifier stands in for the
//! missing labels on filtered samples, and proportion reports compare a
//! reference dataset against generated outcomes.

use std::fs;
use std::io::BufReader;
use std::path::Path;

use crate::checkpoint::{read_mlp_block, write_mlp_block, CkptReader};
use crate::error::{Error, Result};
use crate::ieat::cosine;
use crate::metrics::{
    attribute_rate, box_stats, group_split, parity_gap, verdict, within_boundary, BiasVerdict,
    FairBoundary, GroupStats, RateRecord,
};
use crate::mlp::Mlp;
use crate::optim::AdamState;
use crate::rng::Rng;
use crate::textio::{fmt17, parse_f64, parse_usize};
use crate::world::Dataset;

const STREAM_CLASSIFIER: u64 = 6;

/// Default cosine-similarity threshold for relevance filtering.
pub const DEFAULT_SIM_THRESHOLD: f64 = 0.27;
/// Default prompt template; `{occ}` is replaced by the concept name. Carried
/// for report text only.
pub const DEFAULT_PROMPT_TEMPLATE: &str = "A photo of the face of a {occ}";
/// Held-out accuracy below which an attribute classifier refuses deployment.
pub const DEFAULT_ACCURACY_FLOOR: f64 = 0.9;

// ---------------------------------------------------------------------------
// Classifier
// ---------------------------------------------------------------------------

/// Feature-vector classifier with its training metadata. The attribute
/// classifier has two classes; the same machinery trains concept
/// classifiers for diagnostics.
#[derive(Clone, Debug)]
pub struct ClassifierModel {
    pub mlp: Mlp<f64>,
    pub n_classes: usize,
    /// Held-out accuracy measured at training time.
    pub accuracy: f64,
    pub seed: u64,
    /// Held-out confusion counts, `confusion[true label][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

impl ClassifierModel {
    /// Predicted class: argmax of the logits, exact ties resolved to the
    /// lowest index.
    pub fn label(&self, features: &[f64]) -> Result<usize> {
        let logits = self.mlp.forward(features)?;
        let mut best = 0;
        for i in 1..logits.len() {
            if logits[i] > logits[best] {
                best = i;
            }
        }
        Ok(best)
    }

    /// Predicted class plus its margin over the runner-up logit.
    pub fn label_margin(&self, features: &[f64]) -> Result<(usize, f64)> {
        let logits = self.mlp.forward(features)?;
        let best = {
            let mut b = 0;
            for i in 1..logits.len() {
                if logits[i] > logits[b] {
                    b = i;
                }
            }
            b
        };
        let mut runner_up = f64::NEG_INFINITY;
        for (i, l) in logits.iter().enumerate() {
            if i != best && *l > runner_up {
                runner_up = *l;
            }
        }
        Ok((best, logits[best] - runner_up))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        write_mlp_block(&mut buf, &self.mlp)?;
        use std::io::Write as _;
        writeln!(buf, "CLASSES {}", self.n_classes)?;
        writeln!(buf, "ACC {}", fmt17(self.accuracy))?;
        writeln!(buf, "SEED {}", self.seed)?;
        let flat: Vec<String> = self
            .confusion
            .iter()
            .flat_map(|row| row.iter().map(|c| c.to_string()))
            .collect();
        writeln!(buf, "CONF {}", flat.join(" "))?;
        fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = fs::File::open(path).map_err(|e| {
            Error::Io(std::io::Error::new(
                e.kind(),
                format!("{}: {e}", path.display()),
            ))
        })?;
        let mut r = CkptReader::new(BufReader::new(file), &path.display().to_string());
        let mlp = read_mlp_block(&mut r)?;
        let classes_line = r.next_line()?;
        let Some(rest) = classes_line.strip_prefix("CLASSES ") else {
            return Err(r.err(format!("expected CLASSES line, got {classes_line:?}")));
        };
        let n_classes = parse_usize(rest, "class count").map_err(|e| r.err(e.to_string()))?;
        if mlp.output_dim() != n_classes {
            return Err(r.err(format!(
                "network emits {} logits for {n_classes} classes",
                mlp.output_dim()
            )));
        }
        let acc_line = r.next_line()?;
        let Some(rest) = acc_line.strip_prefix("ACC ") else {
            return Err(r.err(format!("expected ACC line, got {acc_line:?}")));
        };
        let accuracy = parse_f64(rest, "accuracy").map_err(|e| r.err(e.to_string()))?;
        if !(0.0..=1.0).contains(&accuracy) {
            return Err(r.err(format!("accuracy {accuracy} outside [0, 1]")));
        }
        let seed_line = r.next_line()?;
        let Some(rest) = seed_line.strip_prefix("SEED ") else {
            return Err(r.err(format!("expected SEED line, got {seed_line:?}")));
        };
        let seed: u64 = rest
            .trim()
            .parse()
            .map_err(|_| r.err(format!("bad seed {rest:?}")))?;
        let conf_line = r.next_line()?;
        let Some(rest) = conf_line.strip_prefix("CONF ") else {
            return Err(r.err(format!("expected CONF line, got {conf_line:?}")));
        };
        let counts: Vec<usize> = rest
            .split_whitespace()
            .map(|t| parse_usize(t, "confusion count"))
            .collect::<Result<_>>()
            .map_err(|e| r.err(e.to_string()))?;
        if counts.len() != n_classes * n_classes {
            return Err(r.err(format!(
                "confusion matrix has {} entries, expected {}",
                counts.len(),
                n_classes * n_classes
            )));
        }
        let confusion: Vec<Vec<usize>> = counts.chunks(n_classes).map(<[usize]>::to_vec).collect();
        Ok(ClassifierModel {
            mlp,
            n_classes,
            accuracy,
            seed,
            confusion,
        })
    }
}

#[derive(Clone, Debug)]
pub struct ClassifierConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub hidden: Vec<usize>,
    /// Minimum held-out accuracy for deployment (attribute classifier only).
    pub floor: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            epochs: 150,
            batch_size: 64,
            learning_rate: 1e-3,
            hidden: vec![16],
            floor: DEFAULT_ACCURACY_FLOOR,
        }
    }
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.iter().map(|e| e / z).collect()
}

/// Cross-entropy training on an 80/20 split; returns the network with its
/// held-out accuracy and confusion counts.
fn train_softmax(
    features: &[&[f64]],
    labels: &[usize],
    n_classes: usize,
    seed: u64,
    cfg: &ClassifierConfig,
) -> Result<(Mlp<f64>, f64, Vec<Vec<usize>>)> {
    assert_eq!(features.len(), labels.len());
    let n = features.len();
    if n == 0 {
        return Err(Error::Empty("training a classifier on no samples".into()));
    }
    let dim = features[0].len();
    if cfg.batch_size == 0 {
        return Err(Error::Spec("batch size must be positive".into()));
    }
    let mut rng = Rng::with_stream(seed, STREAM_CLASSIFIER);
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    let train_n = n * 4 / 5;
    if train_n == 0 || train_n == n {
        return Err(Error::Degenerate(format!(
            "{n} samples are too few for an 80/20 split"
        )));
    }
    let (train_idx, test_idx) = order.split_at(train_n);
    let mut sizes = vec![dim];
    sizes.extend_from_slice(&cfg.hidden);
    sizes.push(n_classes);
    let mut mlp = Mlp::xavier(&sizes, &mut rng)?;
    let mut adam = AdamState::new(mlp.num_params(), cfg.learning_rate);
    let mut train: Vec<usize> = train_idx.to_vec();
    for _ in 0..cfg.epochs {
        rng.shuffle(&mut train);
        for batch in train.chunks(cfg.batch_size) {
            let mut grads = crate::mlp::MlpGradients::zeros_like(&mlp);
            let inv = 1.0 / batch.len() as f64;
            for &i in batch {
                let (pred, trace) = mlp.forward_trace(features[i])?;
                let mut upstream = softmax(&pred);
                upstream[labels[i]] -= 1.0;
                let g = mlp.backward(&trace, &upstream)?;
                grads.add_scaled(&g, inv);
            }
            let mut params = mlp.params_flat();
            adam.step(&mut params, &grads.params_flat())?;
            mlp.set_params_flat(&params)?;
        }
    }
    let mut confusion = vec![vec![0usize; n_classes]; n_classes];
    let mut correct = 0usize;
    for &i in test_idx {
        let logits = mlp.forward(features[i])?;
        let mut best = 0;
        for k in 1..n_classes {
            if logits[k] > logits[best] {
                best = k;
            }
        }
        confusion[labels[i]][best] += 1;
        if best == labels[i] {
            correct += 1;
        }
    }
    let accuracy = correct as f64 / test_idx.len() as f64;
    Ok((mlp, accuracy, confusion))
}

/// Train the attribute classifier and gate it on the accuracy floor.
pub fn train_kappa(ds: &Dataset, seed: u64, cfg: &ClassifierConfig) -> Result<ClassifierModel> {
    let has0 = ds.samples.iter().any(|s| s.attribute == 0);
    let has1 = ds.samples.iter().any(|s| s.attribute == 1);
    if !(has0 && has1) {
        return Err(Error::Degenerate(
            "dataset carries a single attribute value; nothing to classify".into(),
        ));
    }
    let features: Vec<&[f64]> = ds.samples.iter().map(|s| s.features.as_slice()).collect();
    let labels: Vec<usize> = ds.samples.iter().map(|s| s.attribute as usize).collect();
    let (mlp, accuracy, confusion) = train_softmax(&features, &labels, 2, seed, cfg)?;
    if accuracy < cfg.floor {
        return Err(Error::Quality {
            what: "attribute classifier held-out accuracy".into(),
            measured: accuracy,
            floor: cfg.floor,
        });
    }
    Ok(ClassifierModel {
        mlp,
        n_classes: 2,
        accuracy,
        seed,
        confusion,
    })
}

/// Train a concept classifier (one class per world concept) for diagnostic
/// use; no deployment gate.
pub fn train_concept_classifier(
    ds: &Dataset,
    seed: u64,
    cfg: &ClassifierConfig,
) -> Result<ClassifierModel> {
    let names = ds.spec.concept_names();
    if names.len() < 2 {
        return Err(Error::Degenerate(
            "concept classifier needs at least two concepts".into(),
        ));
    }
    let features: Vec<&[f64]> = ds.samples.iter().map(|s| s.features.as_slice()).collect();
    let labels: Vec<usize> = ds
        .samples
        .iter()
        .map(|s| {
            ds.spec
                .concept_index(&s.concept)
                .ok_or_else(|| Error::Lookup(s.concept.clone()))
        })
        .collect::<Result<_>>()?;
    let (mlp, accuracy, confusion) = train_softmax(&features, &labels, names.len(), seed, cfg)?;
    Ok(ClassifierModel {
        mlp,
        n_classes: names.len(),
        accuracy,
        seed,
        confusion,
    })
}

// ---------------------------------------------------------------------------
// Relevance filtering
// ---------------------------------------------------------------------------

/// A concept to audit, the prompt text it stands for, and the similarity
/// threshold for relevance.
#[derive(Clone, Debug, PartialEq)]
pub struct PromptSpec {
    pub concept: String,
    pub template: String,
    pub threshold: f64,
}

impl PromptSpec {
    pub fn new(concept: &str) -> Self {
        PromptSpec {
            concept: concept.to_string(),
            template: DEFAULT_PROMPT_TEMPLATE.to_string(),
            threshold: DEFAULT_SIM_THRESHOLD,
        }
    }

    pub fn with_threshold(concept: &str, threshold: f64) -> Self {
        PromptSpec {
            threshold,
            ..PromptSpec::new(concept)
        }
    }

    /// The prompt string with the concept substituted.
    pub fn rendered(&self) -> String {
        self.template.replace("{occ}", &self.concept)
    }

    pub fn validate(&self) -> Result<()> {
        if self.concept.is_empty() {
            return Err(Error::Spec("prompt concept is empty".into()));
        }
        if !(self.threshold > -1.0 && self.threshold < 1.0) {
            return Err(Error::Spec(format!(
                "similarity threshold {} must lie strictly inside (-1, 1)",
                self.threshold
            )));
        }
        Ok(())
    }
}

/// Prompt list: one `concept[,threshold]` per line, `#` comments.
pub fn parse_prompts(text: &str, path: &str) -> Result<Vec<PromptSpec>> {
    let mut prompts = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let perr = |col: usize, msg: String| Error::Parse {
            path: path.to_string(),
            line: line_no,
            col,
            msg,
        };
        let (concept, threshold) = match line.find(',') {
            Some(comma) => {
                let t = &line[comma + 1..];
                let v: f64 = t
                    .parse()
                    .map_err(|_| perr(comma + 2, format!("bad threshold {t:?}")))?;
                (&line[..comma], v)
            }
            None => (line, DEFAULT_SIM_THRESHOLD),
        };
        if prompts.iter().any(|p: &PromptSpec| p.concept == concept) {
            return Err(perr(1, format!("duplicate prompt concept {concept:?}")));
        }
        let p = PromptSpec::with_threshold(concept, threshold);
        p.validate().map_err(|e| perr(1, e.to_string()))?;
        prompts.push(p);
    }
    Ok(prompts)
}

/// Indices of samples whose cosine similarity to the prototype strictly
/// exceeds the prompt threshold.
pub fn filter_relevant(ds: &Dataset, prompt: &PromptSpec, prototype: &[f64]) -> Result<Vec<usize>> {
    prompt.validate()?;
    let norm: f64 = prototype.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::Numeric("relevance prototype has zero norm".into()));
    }
    let mut kept = Vec::new();
    for (i, s) in ds.samples.iter().enumerate() {
        if cosine(&s.features, prototype)? > prompt.threshold {
            kept.push(i);
        }
    }
    Ok(kept)
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

/// Labelling options shared by the audits.
#[derive(Clone, Debug)]
pub struct AuditOptions {
    pub boundary: FairBoundary<f64>,
    /// Discard labels whose logit margin falls below this; default none
    /// (plain argmax).
    pub min_margin: Option<f64>,
}

impl Default for AuditOptions {
    fn default() -> Self {
        AuditOptions {
            boundary: FairBoundary::default(),
            min_margin: None,
        }
    }
}

/// Per-concept measurements over a dataset's relevant subset.
#[derive(Clone, Debug)]
pub struct ConceptAudit {
    pub concept: String,
    /// Rendered prompt text, for report prose only.
    pub prompt: String,
    pub n_relevant: usize,
    /// Members whose label was accepted (equals `n_relevant` unless a
    /// margin floor is set).
    pub n_labeled: usize,
    /// Classifier-measured attribute rate.
    pub rate: f64,
    /// Misclassification-bias inversion of `rate`; shown alongside, never
    /// substituted.
    pub corrected_rate: f64,
    /// Ground-truth attribute rate of the relevant subset.
    pub truth_rate: f64,
    /// Ground-truth demographic parity of relevance over the whole dataset;
    /// absent when an attribute group is empty.
    pub parity_gap: Option<f64>,
    pub in_boundary: bool,
}

/// Dataset-side audit: reference rates plus group dispersion.
#[derive(Clone, Debug)]
pub struct AuditReport {
    pub rows: Vec<ConceptAudit>,
    /// Prompts whose relevant subset was empty (reported, not dropped).
    pub missing: Vec<String>,
    pub groups: Vec<GroupStats<f64>>,
    pub boundary: FairBoundary<f64>,
    pub kappa_accuracy: f64,
    pub confusion: Vec<Vec<usize>>,
}

/// Invert the misclassification relation `measured = r a + (1-r)(1-a)` for
/// the true rate r at classifier accuracy a, clamped into [0, 1]. At chance
/// accuracy the relation is non-invertible and the measured rate is
/// returned unchanged.
pub fn corrected_rate(measured: f64, accuracy: f64) -> f64 {
    let denom = 2.0 * accuracy - 1.0;
    if denom.abs() < 1e-9 {
        return measured;
    }
    ((measured + accuracy - 1.0) / denom).clamp(0.0, 1.0)
}

fn require_binary(kappa: &ClassifierModel) -> Result<()> {
    if kappa.n_classes != 2 {
        return Err(Error::Spec(format!(
            "attribute classifier must have 2 classes, found {}",
            kappa.n_classes
        )));
    }
    Ok(())
}

/// Labels accepted under the optional margin floor.
fn accepted_labels(
    kappa: &ClassifierModel,
    vectors: impl Iterator<Item = impl AsRef<[f64]>>,
    min_margin: Option<f64>,
) -> Result<Vec<u8>> {
    let mut labels = Vec::new();
    for v in vectors {
        match min_margin {
            Some(m) => {
                let (label, margin) = kappa.label_margin(v.as_ref())?;
                if margin >= m {
                    labels.push(label as u8);
                }
            }
            None => labels.push(kappa.label(v.as_ref())? as u8),
        }
    }
    Ok(labels)
}

fn group_boxes(records: &[RateRecord<f64>], rates_of: &dyn Fn(&str) -> f64) -> Vec<GroupStats<f64>> {
    let (f, m) = group_split(records);
    let mut groups = Vec::new();
    for (label, members) in [("f", f), ("m", m)] {
        if members.is_empty() {
            continue;
        }
        let rates: Vec<f64> = members.iter().map(|r| rates_of(&r.concept)).collect();
        groups.push(GroupStats {
            label: label.to_string(),
            members: members.iter().map(|r| r.concept.clone()).collect(),
            stats: box_stats(&rates).expect("non-empty group"),
        });
    }
    groups
}

/// Measure attribute rates over each prompt's relevant subset and assemble
/// the reference report.
pub fn audit_dataset(
    ds: &Dataset,
    prompts: &[PromptSpec],
    kappa: &ClassifierModel,
    opts: &AuditOptions,
) -> Result<AuditReport> {
    require_binary(kappa)?;
    let mut rows = Vec::new();
    let mut missing = Vec::new();
    for prompt in prompts {
        let prototype = ds.spec.prototype(&prompt.concept)?;
        let relevant = filter_relevant(ds, prompt, &prototype)?;
        if relevant.is_empty() {
            missing.push(prompt.concept.clone());
            continue;
        }
        let labels = accepted_labels(
            kappa,
            relevant.iter().map(|&i| &ds.samples[i].features),
            opts.min_margin,
        )?;
        if labels.is_empty() {
            missing.push(prompt.concept.clone());
            continue;
        }
        let rate: f64 = attribute_rate(&labels)?;
        let truth: Vec<u8> = relevant.iter().map(|&i| ds.samples[i].attribute).collect();
        let truth_rate: f64 = attribute_rate(&truth)?;
        let in_set: Vec<bool> = {
            let mut marks = vec![false; ds.len()];
            for &i in &relevant {
                marks[i] = true;
            }
            marks
        };
        let pairs: Vec<(bool, u8)> = ds
            .samples
            .iter()
            .enumerate()
            .map(|(i, s)| (in_set[i], s.attribute))
            .collect();
        let gap: Option<f64> = parity_gap(&pairs).ok();
        rows.push(ConceptAudit {
            concept: prompt.concept.clone(),
            prompt: prompt.rendered(),
            n_relevant: relevant.len(),
            n_labeled: labels.len(),
            rate,
            corrected_rate: corrected_rate(rate, kappa.accuracy),
            truth_rate,
            parity_gap: gap,
            in_boundary: within_boundary(rate, &opts.boundary),
        });
    }
    let records: Vec<RateRecord<f64>> = rows
        .iter()
        .map(|r| RateRecord {
            concept: r.concept.clone(),
            rate: r.rate,
            count: r.n_labeled,
        })
        .collect();
    let by_concept = |name: &str| rows.iter().find(|r| r.concept == name).unwrap().rate;
    let mut groups = group_boxes(&records, &by_concept);
    for (gname, members) in &ds.spec.groups {
        let present: Vec<String> = members
            .iter()
            .filter(|m| rows.iter().any(|r| &&r.concept == m))
            .cloned()
            .collect();
        if present.is_empty() {
            continue;
        }
        let rates: Vec<f64> = present.iter().map(|m| by_concept(m)).collect();
        groups.push(GroupStats {
            label: gname.clone(),
            members: present,
            stats: box_stats(&rates).expect("non-empty group"),
        });
    }
    Ok(AuditReport {
        rows,
        missing,
        groups,
        boundary: opts.boundary.clone(),
        kappa_accuracy: kappa.accuracy,
        confusion: kappa.confusion.clone(),
    })
}

/// Per-concept comparison of generated outcomes against the reference.
#[derive(Clone, Debug)]
pub struct ConceptOutcome {
    pub concept: String,
    pub n: usize,
    pub n_labeled: usize,
    pub ref_rate: f64,
    pub rate: f64,
    pub corrected_rate: f64,
    pub verdict: BiasVerdict,
    pub in_boundary: bool,
}

#[derive(Clone, Debug)]
pub struct OutcomeReport {
    pub rows: Vec<ConceptOutcome>,
    /// Concepts with no generated vectors (reported, not dropped).
    pub missing: Vec<String>,
    /// Percentages of concepts with data: amplified, reflected, mitigated.
    pub verdict_percent: [f64; 3],
    /// Concepts grouped by reference majority; box statistics are over the
    /// outcome rates of each group's members.
    pub groups: Vec<GroupStats<f64>>,
    pub boundary: FairBoundary<f64>,
    pub kappa_accuracy: f64,
    pub confusion: Vec<Vec<usize>>,
}

/// Label generated vectors per concept, compare rates against the reference
/// report, and classify each shift.
pub fn audit_outcome(
    outputs: &[(String, Vec<Vec<f64>>)],
    kappa: &ClassifierModel,
    reference: &AuditReport,
    opts: &AuditOptions,
) -> Result<OutcomeReport> {
    require_binary(kappa)?;
    let mut rows = Vec::new();
    let mut missing = Vec::new();
    for (concept, vectors) in outputs {
        let ref_row = reference
            .rows
            .iter()
            .find(|r| &r.concept == concept)
            .ok_or_else(|| Error::Lookup(format!("{concept} (not in reference report)")))?;
        if vectors.is_empty() {
            missing.push(concept.clone());
            continue;
        }
        let labels = accepted_labels(kappa, vectors.iter(), opts.min_margin)?;
        if labels.is_empty() {
            missing.push(concept.clone());
            continue;
        }
        let rate: f64 = attribute_rate(&labels)?;
        rows.push(ConceptOutcome {
            concept: concept.clone(),
            n: vectors.len(),
            n_labeled: labels.len(),
            ref_rate: ref_row.rate,
            rate,
            corrected_rate: corrected_rate(rate, kappa.accuracy),
            verdict: verdict(ref_row.rate, rate, &opts.boundary),
            in_boundary: within_boundary(rate, &opts.boundary),
        });
    }
    let mut counts = [0usize; 3];
    for r in &rows {
        let k = match r.verdict {
            BiasVerdict::Amplified => 0,
            BiasVerdict::Reflected => 1,
            BiasVerdict::Mitigated => 2,
        };
        counts[k] += 1;
    }
    let total = rows.len();
    let verdict_percent = if total == 0 {
        [0.0; 3]
    } else {
        [
            counts[0] as f64 * 100.0 / total as f64,
            counts[1] as f64 * 100.0 / total as f64,
            counts[2] as f64 * 100.0 / total as f64,
        ]
    };
    // Group by the reference rates, then box the outcome rates.
    let records: Vec<RateRecord<f64>> = rows
        .iter()
        .map(|r| RateRecord {
            concept: r.concept.clone(),
            rate: r.ref_rate,
            count: r.n_labeled,
        })
        .collect();
    let by_concept = |name: &str| rows.iter().find(|r| r.concept == name).unwrap().rate;
    let groups = group_boxes(&records, &by_concept);
    Ok(OutcomeReport {
        rows,
        missing,
        verdict_percent,
        groups,
        boundary: opts.boundary.clone(),
        kappa_accuracy: kappa.accuracy,
        confusion: kappa.confusion.clone(),
    })
}
