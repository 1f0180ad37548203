//! End-to-end checks that need a trained model: loss reduction, moment
//! matching of unconditional samples, guidance fidelity, relevance-filter
//! recall, classifier quality, and a first steering check. The model and
//! classifier are trained once and shared across tests.

use std::sync::OnceLock;

use fairlab_core::audit::{
    train_concept_classifier, train_kappa, ClassifierConfig, ClassifierModel, PromptSpec,
};
use fairlab_core::diffusion::{EpsilonModel, TrainConfig};
use fairlab_core::guidance::{fair_sample, presets};
use fairlab_core::world::{Dataset, WorldSpec};

const SEED: u64 = 2024;

struct Fixture {
    data: Dataset,
    model: EpsilonModel,
    losses: Vec<f64>,
    kappa: ClassifierModel,
}

static FIXTURE: OnceLock<Fixture> = OnceLock::new();

fn fixture() -> &'static Fixture {
    FIXTURE.get_or_init(|| {
        let spec = WorldSpec::default();
        let data = Dataset::build(&spec, SEED).unwrap();
        let mut model = EpsilonModel::for_dataset(&data, SEED).unwrap();
        let report = model
            .train(
                &data,
                &TrainConfig {
                    seed: SEED,
                    ..TrainConfig::default()
                },
            )
            .unwrap();
        let kappa = train_kappa(&data, SEED, &ClassifierConfig::default()).unwrap();
        Fixture {
            data,
            model,
            losses: report.epoch_loss,
            kappa,
        }
    })
}

fn measured_rate(kappa: &ClassifierModel, samples: &[Vec<f64>]) -> f64 {
    let ones = samples
        .iter()
        .filter(|s| kappa.label(s).unwrap() == 1)
        .count();
    ones as f64 / samples.len() as f64
}

#[test]
fn training_cuts_first_epoch_loss_by_thirty_percent() {
    let f = fixture();
    let first = f.losses[0];
    let last = *f.losses.last().unwrap();
    assert!(
        last <= 0.7 * first,
        "loss went {first} -> {last}, less than a 30% drop"
    );
}

#[test]
fn unconditional_sample_means_match_training_data() {
    let f = fixture();
    let n = 2000;
    let samples = f.model.sample("alpha", 0.0, n, SEED + 1).unwrap();
    let dim = f.data.spec.dim;
    let n_train = f.data.len() as f64;
    for j in 0..dim {
        let train: Vec<f64> = f.data.samples.iter().map(|s| s.features[j]).collect();
        let train_mean = train.iter().sum::<f64>() / n_train;
        let train_var =
            train.iter().map(|x| (x - train_mean).powi(2)).sum::<f64>() / (n_train - 1.0);
        let gen_mean = samples.iter().map(|s| s[j]).sum::<f64>() / n as f64;
        let se = (train_var / n_train + train_var / n as f64).sqrt();
        assert!(
            (gen_mean - train_mean).abs() <= 3.0 * se,
            "dim {j}: generated mean {gen_mean} vs training mean {train_mean} (se {se})"
        );
    }
}

#[test]
fn guidance_raises_concept_fidelity_by_at_least_a_tenth() {
    let f = fixture();
    let judge = train_concept_classifier(&f.data, SEED, &ClassifierConfig::default()).unwrap();
    let names = f.data.spec.concept_names();
    let per_concept = 50;
    let mut correct = [0usize; 2];
    let mut total = 0usize;
    for (g, s_g) in [0.0, 3.0].iter().enumerate() {
        for (k, name) in names.iter().enumerate() {
            let samples = f.model.sample(name, *s_g, per_concept, SEED + 2).unwrap();
            correct[g] += samples
                .iter()
                .filter(|s| judge.label(s).unwrap() == k)
                .count();
        }
        total = per_concept * names.len();
    }
    let acc0 = correct[0] as f64 / total as f64;
    let acc3 = correct[1] as f64 / total as f64;
    assert!(
        acc3 - acc0 >= 0.1,
        "concept accuracy {acc0} unguided vs {acc3} guided"
    );
}

#[test]
fn relevant_filter_recalls_ninety_percent_of_true_members() {
    let f = fixture();
    for c in &f.data.spec.concepts {
        let prototype = f.data.spec.prototype(&c.name).unwrap();
        let prompt = PromptSpec::new(&c.name);
        let kept = fairlab_core::audit::filter_relevant(&f.data, &prompt, &prototype).unwrap();
        let truth: Vec<usize> = (0..f.data.len())
            .filter(|&i| f.data.samples[i].concept == c.name)
            .collect();
        let hit = kept.iter().filter(|i| truth.contains(i)).count();
        let recall = hit as f64 / truth.len() as f64;
        assert!(recall >= 0.9, "{}: recall {recall}", c.name);
    }
}

#[test]
fn attribute_classifier_beats_ninety_five_percent_on_default_world() {
    let f = fixture();
    assert!(
        f.kappa.accuracy >= 0.95,
        "held-out accuracy {}",
        f.kappa.accuracy
    );
}

#[test]
fn fair_guidance_moves_low_rate_concept_toward_half() {
    let f = fixture();
    let plain = f.model.sample("bravo", 3.0, 100, SEED + 3).unwrap();
    let steered = fair_sample(
        &f.model,
        "bravo",
        3.0,
        100,
        SEED + 3,
        Some(&presets::paired()),
    )
    .unwrap();
    let plain_rate = measured_rate(&f.kappa, &plain);
    let fair_rate = measured_rate(&f.kappa, &steered.samples);
    assert!(
        plain_rate < 0.4,
        "plain rate {plain_rate} should echo the planted 0.15"
    );
    assert!(
        (fair_rate - 0.5).abs() <= 0.12,
        "steered rate {fair_rate} should sit near one half"
    );
}
