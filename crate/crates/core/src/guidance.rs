//! Fairness guidance at sampling time.
//!
//! A fair instruction names two opposed edit lists ("sides"); each generated
//! sample draws a direction with probability `q` for side 1 and steers the
//! diffusion chain with an additive term built from edit-conditioned noise
//! predictions. The direction draws consume their own RNG stream so a
//! fair-guided run and a plain run with the same seed see identical
//! diffusion noise.

use std::fs;
use std::path::Path;

use crate::diffusion::{EpsilonModel, STREAM_DIRECTION};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Default per-edit steering scale.
pub const DEFAULT_EDIT_SCALE: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Polarity {
    /// Steer toward the concept.
    Toward,
    /// Steer away from the concept.
    Away,
}

impl Polarity {
    pub fn sign(self) -> f64 {
        match self {
            Polarity::Toward => 1.0,
            Polarity::Away => -1.0,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Polarity::Toward => Polarity::Away,
            Polarity::Away => Polarity::Toward,
        }
    }

    fn token_char(self) -> char {
        match self {
            Polarity::Toward => '+',
            Polarity::Away => '-',
        }
    }
}

/// One steering edit: a vocabulary concept, a positive scale, and whether
/// to push toward or away from it.
#[derive(Clone, Debug, PartialEq)]
pub struct EditConcept {
    pub concept: String,
    pub scale: f64,
    pub polarity: Polarity,
}

impl EditConcept {
    pub fn toward(concept: &str, scale: f64) -> Self {
        EditConcept {
            concept: concept.to_string(),
            scale,
            polarity: Polarity::Toward,
        }
    }

    pub fn away(concept: &str, scale: f64) -> Self {
        EditConcept {
            concept: concept.to_string(),
            scale,
            polarity: Polarity::Away,
        }
    }

    pub fn signed_scale(&self) -> f64 {
        self.polarity.sign() * self.scale
    }

    fn validate(&self) -> Result<()> {
        if self.concept.is_empty() {
            return Err(Error::Spec("edit concept name is empty".into()));
        }
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(Error::Spec(format!(
                "edit scale {} for {:?} must be finite and positive",
                self.scale, self.concept
            )));
        }
        Ok(())
    }

    fn render(&self) -> String {
        format!("{}{}:{}", self.polarity.token_char(), self.concept, self.scale)
    }
}

/// Two opposed edit lists plus the direction probability, warm-up step
/// count, and magnitude-mask fraction.
#[derive(Clone, Debug, PartialEq)]
pub struct FairInstruction {
    pub side1: Vec<EditConcept>,
    pub side2: Vec<EditConcept>,
    /// Probability of steering with side 1.
    pub q: f64,
    /// Number of initial sampling steps with the steering term suppressed.
    pub warmup: usize,
    /// Fraction of coordinates each edit may touch, by |difference| rank.
    pub mask_fraction: f64,
}

impl FairInstruction {
    /// Balanced instruction over two edit lists with the default knobs.
    pub fn balanced(side1: Vec<EditConcept>, side2: Vec<EditConcept>) -> Self {
        FairInstruction {
            side1,
            side2,
            q: 0.5,
            warmup: 0,
            mask_fraction: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.side1.is_empty() || self.side2.is_empty() {
            return Err(Error::Spec(
                "a fair instruction needs at least one edit on each side".into(),
            ));
        }
        for e in self.side1.iter().chain(&self.side2) {
            e.validate()?;
        }
        if !(self.q.is_finite() && (0.0..=1.0).contains(&self.q)) {
            return Err(Error::Spec(format!("direction probability {} must be in [0, 1]", self.q)));
        }
        if !(self.mask_fraction.is_finite()
            && self.mask_fraction > 0.0
            && self.mask_fraction <= 1.0)
        {
            return Err(Error::Spec(format!(
                "mask fraction {} must be in (0, 1]",
                self.mask_fraction
            )));
        }
        Ok(())
    }

    pub fn side(&self, side1: bool) -> &[EditConcept] {
        if side1 {
            &self.side1
        } else {
            &self.side2
        }
    }

    fn render(&self) -> String {
        let fmt_side = |side: &[EditConcept]| {
            side.iter().map(EditConcept::render).collect::<Vec<_>>().join(",")
        };
        format!(
            "q={};warmup={};mask={};side1={};side2={}",
            self.q,
            self.warmup,
            self.mask_fraction,
            fmt_side(&self.side1),
            fmt_side(&self.side2)
        )
    }
}

/// Per-sample record of which side steered it and the uniform variate that
/// decided. Side 1 wins on `u < q`, so `u == q` picks side 2.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DirectionDraw {
    pub side1: bool,
    pub u: f64,
}

pub fn draw_direction(rng: &mut Rng, q: f64) -> DirectionDraw {
    let u = rng.uniform();
    DirectionDraw { side1: u < q, u }
}

// ---------------------------------------------------------------------------
// The steering term
// ---------------------------------------------------------------------------

/// Coordinates each edit may touch: the top `ceil(mask_fraction * D)` by
/// absolute difference, ties broken toward lower indices.
pub fn magnitude_mask(diff: &[f64], mask_fraction: f64) -> Vec<bool> {
    let d = diff.len();
    let k = ((mask_fraction * d as f64).ceil() as usize).min(d);
    if k >= d {
        return vec![true; d];
    }
    let mut idx: Vec<usize> = (0..d).collect();
    idx.sort_by(|&a, &b| {
        diff[b]
            .abs()
            .partial_cmp(&diff[a].abs())
            .expect("finite differences")
            .then(a.cmp(&b))
    });
    let mut mask = vec![false; d];
    for &i in idx.iter().take(k) {
        mask[i] = true;
    }
    mask
}

/// Sum of signed, scaled, masked difference vectors. Each term carries its
/// own mask computed from its own differences.
pub fn combine_edits(dim: usize, terms: &[(f64, Vec<f64>)], mask_fraction: f64) -> Vec<f64> {
    let mut out = vec![0.0; dim];
    for (scale, diff) in terms {
        assert_eq!(diff.len(), dim, "edit difference has wrong dimension");
        let mask = magnitude_mask(diff, mask_fraction);
        for i in 0..dim {
            if mask[i] {
                out[i] += scale * diff[i];
            }
        }
    }
    out
}

/// The additive steering term for one reverse step: zero during warm-up,
/// otherwise the combined edit differences for the active side.
pub fn gamma(
    model: &EpsilonModel,
    z: &[f64],
    t: usize,
    active: &[EditConcept],
    instr: &FairInstruction,
) -> Result<Vec<f64>> {
    model.sched.beta(t)?;
    let dim = model.data_dim();
    // Sampling runs t_max down to 1, so the first `warmup` steps are
    // exactly those with t above t_max - warmup.
    if t > model.sched.t_max().saturating_sub(instr.warmup) {
        return Ok(vec![0.0; dim]);
    }
    if active.is_empty() {
        return Ok(vec![0.0; dim]);
    }
    let uncond = model.eps(z, t, None)?;
    let mut terms = Vec::with_capacity(active.len());
    for e in active {
        let cond = model.eps(z, t, Some(&e.concept))?;
        let diff: Vec<f64> = cond.iter().zip(&uncond).map(|(c, u)| c - u).collect();
        terms.push((e.signed_scale(), diff));
    }
    Ok(combine_edits(dim, &terms, instr.mask_fraction))
}

/// Samples plus the per-sample direction log (empty when no instruction was
/// applied).
#[derive(Clone, Debug)]
pub struct FairSampleOutput {
    pub samples: Vec<Vec<f64>>,
    pub draws: Vec<DirectionDraw>,
}

/// Guided sampling with optional fairness steering. Without an instruction
/// this is exactly plain sampling: the direction stream is never touched
/// and the outputs are bit-identical for the same seed.
pub fn fair_sample(
    model: &EpsilonModel,
    concept: &str,
    s_g: f64,
    n: usize,
    seed: u64,
    instruction: Option<&FairInstruction>,
) -> Result<FairSampleOutput> {
    let Some(instr) = instruction else {
        return Ok(FairSampleOutput {
            samples: model.sample(concept, s_g, n, seed)?,
            draws: Vec::new(),
        });
    };
    instr.validate()?;
    for e in instr.side1.iter().chain(&instr.side2) {
        model.vocab.get(&e.concept)?;
    }
    let dir_base = Rng::with_stream(seed, STREAM_DIRECTION);
    let draws: Vec<DirectionDraw> = (0..n)
        .map(|i| draw_direction(&mut dir_base.split(i as u64), instr.q))
        .collect();
    let provider = |i: usize, z: &[f64], t: usize, _rng: &mut Rng| -> Result<Vec<f64>> {
        gamma(model, z, t, instr.side(draws[i].side1), instr)
    };
    let samples = model.sample_with(concept, s_g, n, seed, Some(&provider))?;
    Ok(FairSampleOutput { samples, draws })
}

// ---------------------------------------------------------------------------
// Lookup table
// ---------------------------------------------------------------------------

/// Maps prompt concepts to fair instructions. An entry keyed `*` is the
/// wildcard fallback; a prompt that matches nothing is generated plain.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct LookupTable {
    entries: Vec<(String, FairInstruction)>,
}

fn is_ident(s: &str) -> bool {
    !s.is_empty()
        && s.chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

impl LookupTable {
    pub fn new(entries: Vec<(String, FairInstruction)>) -> Result<Self> {
        for (i, (key, instr)) in entries.iter().enumerate() {
            if key != "*" && !is_ident(key) {
                return Err(Error::Spec(format!("invalid table key {key:?}")));
            }
            if entries[..i].iter().any(|(k, _)| k == key) {
                return Err(Error::Spec(format!("duplicate table key {key:?}")));
            }
            instr.validate()?;
        }
        Ok(LookupTable { entries })
    }

    pub fn entries(&self) -> &[(String, FairInstruction)] {
        &self.entries
    }

    /// Exact key first, wildcard second, otherwise none.
    pub fn resolve(&self, concept: &str) -> Option<&FairInstruction> {
        self.entries
            .iter()
            .find(|(k, _)| k == concept)
            .or_else(|| self.entries.iter().find(|(k, _)| k == "*"))
            .map(|(_, i)| i)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (key, instr) in &self.entries {
            out.push_str(key);
            out.push('\t');
            out.push_str(&instr.render());
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.render())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| {
            Error::Io(std::io::Error::new(
                e.kind(),
                format!("{}: {e}", path.display()),
            ))
        })?;
        Self::parse_str(&text, &path.display().to_string())
    }

    /// One entry per line: `key<TAB>q=..;warmup=..;mask=..;side1=..;side2=..`
    /// with `#` comments. Errors carry the line and column of the offending
    /// token.
    pub fn parse_str(text: &str, path: &str) -> Result<Self> {
        let mut entries: Vec<(String, FairInstruction)> = Vec::new();
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
            let Some(tab) = line.find('\t') else {
                return Err(perr(1, "expected <key><TAB><instruction>".into()));
            };
            let key = &line[..tab];
            if key != "*" && !is_ident(key) {
                return Err(perr(1, format!("invalid key {key:?}")));
            }
            if entries.iter().any(|(k, _)| k == key) {
                return Err(perr(1, format!("duplicate key {key:?}")));
            }
            let instr = parse_instruction(&line[tab + 1..], tab + 1, &perr)?;
            instr.validate().map_err(|e| perr(tab + 2, e.to_string()))?;
            entries.push((key.to_string(), instr));
        }
        Ok(LookupTable { entries })
    }
}

/// Parse the field list after the tab. `base` is the byte offset of the
/// field list within the line (columns are 1-based).
fn parse_instruction(
    spec: &str,
    base: usize,
    perr: &dyn Fn(usize, String) -> Error,
) -> Result<FairInstruction> {
    let mut q: Option<f64> = None;
    let mut warmup: Option<usize> = None;
    let mut mask: Option<f64> = None;
    let mut side1: Option<Vec<EditConcept>> = None;
    let mut side2: Option<Vec<EditConcept>> = None;
    let mut off = base;
    for field in spec.split(';') {
        let col = off + 1;
        off += field.len() + 1;
        let Some(eq) = field.find('=') else {
            return Err(perr(col, format!("field {field:?} is not name=value")));
        };
        let (name, value) = (&field[..eq], &field[eq + 1..]);
        let vcol = col + eq + 1;
        match name {
            "q" => {
                if q.is_some() {
                    return Err(perr(col, "duplicate field q".into()));
                }
                let v: f64 = value
                    .parse()
                    .map_err(|_| perr(vcol, format!("bad probability {value:?}")))?;
                q = Some(v);
            }
            "warmup" => {
                if warmup.is_some() {
                    return Err(perr(col, "duplicate field warmup".into()));
                }
                let v: usize = value
                    .parse()
                    .map_err(|_| perr(vcol, format!("bad step count {value:?}")))?;
                warmup = Some(v);
            }
            "mask" => {
                if mask.is_some() {
                    return Err(perr(col, "duplicate field mask".into()));
                }
                let v: f64 = value
                    .parse()
                    .map_err(|_| perr(vcol, format!("bad fraction {value:?}")))?;
                mask = Some(v);
            }
            "side1" => {
                if side1.is_some() {
                    return Err(perr(col, "duplicate field side1".into()));
                }
                side1 = Some(parse_side(value, col + eq, perr)?);
            }
            "side2" => {
                if side2.is_some() {
                    return Err(perr(col, "duplicate field side2".into()));
                }
                side2 = Some(parse_side(value, col + eq, perr)?);
            }
            other => {
                if let Some(k) = other.strip_prefix("side") {
                    if k.parse::<usize>().is_ok() {
                        return Err(perr(
                            col,
                            format!("{other} is reserved; only side1 and side2 are supported"),
                        ));
                    }
                }
                return Err(perr(col, format!("unknown field {other:?}")));
            }
        }
    }
    Ok(FairInstruction {
        side1: side1.unwrap_or_default(),
        side2: side2.unwrap_or_default(),
        q: q.unwrap_or(0.5),
        warmup: warmup.unwrap_or(0),
        mask_fraction: mask.unwrap_or(1.0),
    })
}

/// Comma-separated edit tokens `+concept:scale` / `-concept:scale`.
fn parse_side(
    value: &str,
    base: usize,
    perr: &dyn Fn(usize, String) -> Error,
) -> Result<Vec<EditConcept>> {
    let mut edits = Vec::new();
    let mut off = base;
    for token in value.split(',') {
        let col = off + 1;
        off += token.len() + 1;
        let polarity = match token.chars().next() {
            Some('+') => Polarity::Toward,
            Some('-') => Polarity::Away,
            _ => {
                return Err(perr(
                    col,
                    format!("edit {token:?} must start with '+' or '-'"),
                ))
            }
        };
        let rest = &token[1..];
        let Some(colon) = rest.find(':') else {
            return Err(perr(col, format!("edit {token:?} is missing ':scale'")));
        };
        let name = &rest[..colon];
        if !is_ident(name) {
            return Err(perr(col + 1, format!("invalid concept name {name:?}")));
        }
        let scale_text = &rest[colon + 1..];
        let scale: f64 = scale_text
            .parse()
            .map_err(|_| perr(col + 1 + colon + 1, format!("bad scale {scale_text:?}")))?;
        if !(scale.is_finite() && scale > 0.0) {
            return Err(perr(
                col + 1 + colon + 1,
                format!("scale {scale} must be finite and positive"),
            ));
        }
        edits.push(EditConcept {
            concept: name.to_string(),
            scale,
            polarity,
        });
    }
    Ok(edits)
}

// ---------------------------------------------------------------------------
// Presets
// ---------------------------------------------------------------------------

/// Ready-made instructions over the attribute anchor tokens.
pub mod presets {
    use super::*;
    use crate::world::ATTR_CONCEPTS;

    /// Edit scale the shipped presets use. Stronger than the knob default:
    /// at 2.0 a push flips the attribute ~90% of the time (prompt pull wins
    /// the rest), so measured rates undershoot q; at 3.0 flips are near
    /// certain across training seeds and the rate tracks q.
    pub const PRESET_EDIT_SCALE: f64 = 3.0;

    /// Toward one attribute anchor and away from the other; the balanced
    /// workhorse instruction.
    pub fn paired() -> FairInstruction {
        FairInstruction::balanced(
            vec![
                EditConcept::toward(ATTR_CONCEPTS[1], PRESET_EDIT_SCALE),
                EditConcept::away(ATTR_CONCEPTS[0], PRESET_EDIT_SCALE),
            ],
            vec![
                EditConcept::toward(ATTR_CONCEPTS[0], PRESET_EDIT_SCALE),
                EditConcept::away(ATTR_CONCEPTS[1], PRESET_EDIT_SCALE),
            ],
        )
    }

    /// Toward-only variant: no away edits.
    pub fn positive_only() -> FairInstruction {
        FairInstruction::balanced(
            vec![EditConcept::toward(ATTR_CONCEPTS[1], PRESET_EDIT_SCALE)],
            vec![EditConcept::toward(ATTR_CONCEPTS[0], PRESET_EDIT_SCALE)],
        )
    }

    /// `paired` with a different direction probability.
    pub fn paired_q(q: f64) -> FairInstruction {
        FairInstruction { q, ..paired() }
    }

    /// Wildcard table applying `paired` to every prompt.
    pub fn default_table() -> LookupTable {
        LookupTable::new(vec![("*".to_string(), paired())]).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::{ConditioningVocab, NoiseSchedule};
    use crate::mlp::{Activation, Layer, Mlp};
    use crate::tensor::Tensor2;
    use crate::world::{ConceptSpec, Dataset, WorldSpec};

    /// One-dimensional model whose prediction is `bias + w * c` for a
    /// 1-dim embedding c: constant in z and t, so edit differences are
    /// exactly `w * c_e`.
    fn scalar_model(bias: f64, w: f64, embeds: &[(&str, f64)]) -> EpsilonModel {
        let weights = Tensor2::new(1, 4, vec![0.0, 0.0, 0.0, w]).unwrap();
        let layer = Layer { weights, biases: vec![bias] };
        let mlp = Mlp::from_layers(vec![layer], Activation::Tanh).unwrap();
        let entries: Vec<(String, Vec<f64>)> = embeds
            .iter()
            .map(|(n, v)| (n.to_string(), vec![*v]))
            .collect();
        let vocab = ConditioningVocab::from_entries(entries, 1).unwrap();
        let sched = NoiseSchedule::linear(10, 0.01, 0.2).unwrap();
        EpsilonModel::from_parts(mlp, vocab, sched, 2).unwrap()
    }

    fn plain_instruction(side1: Vec<EditConcept>, side2: Vec<EditConcept>) -> FairInstruction {
        FairInstruction::balanced(side1, side2)
    }

    #[test]
    fn gamma_scalar_toy_positive_edit() {
        // Unconditional 0.2, edit-conditioned 0.6, scale 0.5: term 0.2.
        let model = scalar_model(0.2, 0.4, &[("e", 1.0)]);
        let instr = plain_instruction(
            vec![EditConcept::toward("e", 0.5)],
            vec![EditConcept::away("e", 0.5)],
        );
        let g = gamma(&model, &[0.0], 5, &instr.side1, &instr).unwrap();
        assert!((g[0] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn gamma_scalar_toy_negative_edit() {
        let model = scalar_model(0.2, 0.4, &[("e", 1.0)]);
        let instr = plain_instruction(
            vec![EditConcept::away("e", 0.5)],
            vec![EditConcept::toward("e", 0.5)],
        );
        let g = gamma(&model, &[0.0], 5, &instr.side1, &instr).unwrap();
        assert!((g[0] + 0.2).abs() < 1e-15);
    }

    #[test]
    fn gamma_two_edit_arithmetic() {
        // Diffs 0.3 (toward, scale 1) and -0.1 (away, scale 1):
        // 0.3 - (-0.1) = 0.4.
        let model = scalar_model(0.0, 0.3, &[("e1", 1.0), ("e2", -1.0 / 3.0)]);
        let instr = plain_instruction(
            vec![EditConcept::toward("e1", 1.0), EditConcept::away("e2", 1.0)],
            vec![EditConcept::toward("e2", 1.0), EditConcept::away("e1", 1.0)],
        );
        let g = gamma(&model, &[0.0], 5, &instr.side1, &instr).unwrap();
        assert!((g[0] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn gamma_unknown_concept_is_lookup_error() {
        let model = scalar_model(0.0, 0.3, &[("e1", 1.0)]);
        let instr = plain_instruction(
            vec![EditConcept::toward("ghost", 1.0)],
            vec![EditConcept::away("e1", 1.0)],
        );
        assert!(matches!(
            gamma(&model, &[0.0], 5, &instr.side1, &instr),
            Err(Error::Lookup(_))
        ));
    }

    #[test]
    fn gamma_zero_during_warmup() {
        let model = scalar_model(0.2, 0.4, &[("e", 1.0)]);
        let mut instr = plain_instruction(
            vec![EditConcept::toward("e", 0.5)],
            vec![EditConcept::away("e", 0.5)],
        );
        instr.warmup = 3; // t_max = 10: steps 10, 9, 8 are warm-up.
        for t in [10, 9, 8] {
            let g = gamma(&model, &[0.0], t, &instr.side1, &instr).unwrap();
            assert_eq!(g, vec![0.0]);
        }
        let g = gamma(&model, &[0.0], 7, &instr.side1, &instr).unwrap();
        assert!(g[0].abs() > 1e-6);
    }

    #[test]
    fn sign_antisymmetry_is_exact() {
        let spec = WorldSpec {
            dim: 5,
            sep: 4.0,
            std_dev: 1.0,
            concepts: vec![
                ConceptSpec { name: "a".into(), rate: 0.3, count: 10 },
                ConceptSpec { name: "b".into(), rate: 0.7, count: 10 },
            ],
            groups: Vec::new(),
        };
        let ds = Dataset::build(&spec, 1).unwrap();
        let model = EpsilonModel::for_dataset(&ds, 3).unwrap();
        let side: Vec<EditConcept> = vec![
            EditConcept::toward("attr1", 1.7),
            EditConcept::away("attr0", 0.9),
            EditConcept::toward("a", 0.4),
        ];
        let flipped: Vec<EditConcept> = side
            .iter()
            .map(|e| EditConcept { polarity: e.polarity.flipped(), ..e.clone() })
            .collect();
        let mut instr = plain_instruction(side.clone(), flipped.clone());
        instr.mask_fraction = 0.6; // exercise the mask path too
        let mut rng = Rng::new(9);
        for t in [1, 4, 9] {
            let z = rng.gaussian_vec(5);
            let g = gamma(&model, &z, t, &side, &instr).unwrap();
            let h = gamma(&model, &z, t, &flipped, &instr).unwrap();
            for (a, b) in g.iter().zip(&h) {
                assert_eq!(*a, -b);
                // Masked-out coordinates are +0.0 on both sides; everywhere
                // else negation must be bit-exact.
                if *a != 0.0 {
                    assert_eq!(a.to_bits(), (-b).to_bits());
                }
            }
        }
    }

    #[test]
    fn magnitude_mask_picks_top_coordinates() {
        let mask = magnitude_mask(&[0.1, -0.5, 0.3, 0.2], 0.5);
        assert_eq!(mask, vec![false, true, true, false]);
        // beta_mask = 1 means every coordinate.
        assert_eq!(magnitude_mask(&[0.1, 0.2], 1.0), vec![true, true]);
    }

    #[test]
    fn magnitude_mask_breaks_ties_by_index() {
        let mask = magnitude_mask(&[0.3, -0.3, 0.1, 0.3], 0.5);
        assert_eq!(mask, vec![true, true, false, false]);
    }

    #[test]
    fn combine_edits_masks_each_term_independently() {
        let terms = vec![
            (2.0, vec![0.5, 0.1, 0.0]),
            (-1.0, vec![0.0, 0.2, 0.4]),
        ];
        // ceil(0.4 * 3) = 2 top coordinates per term.
        let g = combine_edits(3, &terms, 0.4);
        assert!((g[0] - 1.0).abs() < 1e-15);
        assert!((g[1] - (0.2 - 0.2)).abs() < 1e-15);
        assert!((g[2] + 0.4).abs() < 1e-15);
    }

    #[test]
    fn draw_direction_extremes() {
        let mut rng = Rng::new(0);
        for _ in 0..100 {
            assert!(draw_direction(&mut rng, 1.0).side1);
            assert!(!draw_direction(&mut rng, 0.0).side1);
        }
    }

    #[test]
    fn draw_direction_fraction_near_q() {
        let base = Rng::with_stream(123, STREAM_DIRECTION);
        let n = 10_000;
        let mut side1 = 0;
        for i in 0..n {
            if draw_direction(&mut base.split(i), 0.5).side1 {
                side1 += 1;
            }
        }
        let frac = side1 as f64 / n as f64;
        assert!((0.48..=0.52).contains(&frac), "side-1 fraction {frac}");
    }

    #[test]
    fn instruction_validation() {
        let good = presets::paired();
        good.validate().unwrap();
        let empty_side = FairInstruction { side1: Vec::new(), ..presets::paired() };
        assert!(empty_side.validate().is_err());
        let bad_q = FairInstruction { q: 1.5, ..presets::paired() };
        assert!(bad_q.validate().is_err());
        let zero_mask = FairInstruction { mask_fraction: 0.0, ..presets::paired() };
        assert!(zero_mask.validate().is_err());
        let bad_scale = FairInstruction {
            side1: vec![EditConcept::toward("x", -1.0)],
            ..presets::paired()
        };
        assert!(bad_scale.validate().is_err());
    }

    #[test]
    fn resolve_exact_then_wildcard_then_none() {
        let i1 = presets::paired();
        let i2 = presets::positive_only();
        let table = LookupTable::new(vec![
            ("firefighter".to_string(), i1.clone()),
            ("*".to_string(), i2.clone()),
        ])
        .unwrap();
        assert_eq!(table.resolve("firefighter"), Some(&i1));
        assert_eq!(table.resolve("teacher"), Some(&i2));
        let no_wild = LookupTable::new(vec![("firefighter".to_string(), i1.clone())]).unwrap();
        assert_eq!(no_wild.resolve("teacher"), None);
    }

    #[test]
    fn table_round_trip() {
        let mut custom = presets::paired_q(0.7);
        custom.warmup = 5;
        custom.mask_fraction = 0.75;
        let table = LookupTable::new(vec![
            ("bravo".to_string(), custom),
            ("*".to_string(), presets::paired()),
        ])
        .unwrap();
        let text = table.render();
        let back = LookupTable::parse_str(&text, "test").unwrap();
        assert_eq!(back, table);
    }

    #[test]
    fn table_parser_errors_carry_position() {
        let bad = "bravo\tq=0.5;side1=+a:1;side2=-b:1\nbravo\tq=0.5;side1=+a:1;side2=-b:1\n";
        match LookupTable::parse_str(bad, "t.tsv") {
            Err(Error::Parse { line, col, .. }) => {
                assert_eq!(line, 2);
                assert_eq!(col, 1);
            }
            other => panic!("expected duplicate-key parse error, got {other:?}"),
        }

        let no_tab = "bravo q=0.5\n";
        assert!(matches!(
            LookupTable::parse_str(no_tab, "t.tsv"),
            Err(Error::Parse { line: 1, .. })
        ));

        let reserved = "bravo\tq=0.5;side1=+a:1;side2=-a:1;side3=+b:1\n";
        match LookupTable::parse_str(reserved, "t.tsv") {
            Err(Error::Parse { msg, .. }) => assert!(msg.contains("reserved"), "{msg}"),
            other => panic!("expected reserved-side error, got {other:?}"),
        }

        let bad_scale = "bravo\tside1=+a:0;side2=-a:1\n";
        match LookupTable::parse_str(bad_scale, "t.tsv") {
            Err(Error::Parse { line: 1, col, msg, .. }) => {
                assert!(msg.contains("scale"), "{msg}");
                // "bravo\tside1=+a:" occupies bytes 0..15, so the scale
                // digit sits at column 16.
                assert_eq!(col, 16);
            }
            other => panic!("expected scale error, got {other:?}"),
        }

        let unknown = "bravo\tq=0.5;speed=3;side1=+a:1;side2=-a:1\n";
        match LookupTable::parse_str(unknown, "t.tsv") {
            Err(Error::Parse { col, msg, .. }) => {
                assert!(msg.contains("unknown field"), "{msg}");
                // Field "speed=3" starts at byte 12, column 13.
                assert_eq!(col, 13);
            }
            other => panic!("expected unknown-field error, got {other:?}"),
        }
    }

    #[test]
    fn table_parser_skips_comments_and_defaults_fields() {
        let text = "# demo\n\nbravo\tside1=+a:1;side2=-a:1\n";
        let table = LookupTable::parse_str(text, "t.tsv").unwrap();
        let instr = table.resolve("bravo").unwrap();
        assert_eq!(instr.q, 0.5);
        assert_eq!(instr.warmup, 0);
        assert_eq!(instr.mask_fraction, 1.0);
    }

    #[test]
    fn table_parser_rejects_missing_side() {
        let text = "bravo\tq=0.5;side1=+a:1\n";
        match LookupTable::parse_str(text, "t.tsv") {
            Err(Error::Parse { msg, .. }) => assert!(msg.contains("each side"), "{msg}"),
            other => panic!("expected missing-side error, got {other:?}"),
        }
    }

    fn small_world_model() -> (Dataset, EpsilonModel) {
        let spec = WorldSpec {
            dim: 4,
            sep: 5.0,
            std_dev: 1.0,
            concepts: vec![
                ConceptSpec { name: "p".into(), rate: 0.2, count: 20 },
                ConceptSpec { name: "r".into(), rate: 0.8, count: 20 },
            ],
            groups: Vec::new(),
        };
        let ds = Dataset::build(&spec, 5).unwrap();
        let model = EpsilonModel::for_dataset(&ds, 7).unwrap();
        (ds, model)
    }

    #[test]
    fn fair_sample_none_is_bit_identical_to_plain() {
        let (_ds, model) = small_world_model();
        let plain = model.sample("p", 3.0, 3, 21).unwrap();
        let fair = fair_sample(&model, "p", 3.0, 3, 21, None).unwrap();
        assert!(fair.draws.is_empty());
        for (u, v) in plain.iter().zip(&fair.samples) {
            for (x, y) in u.iter().zip(v) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn fair_sample_full_warmup_is_bit_identical_to_plain() {
        let (_ds, model) = small_world_model();
        let mut instr = presets::paired();
        instr.warmup = model.sched.t_max();
        let plain = model.sample("p", 3.0, 3, 22).unwrap();
        let fair = fair_sample(&model, "p", 3.0, 3, 22, Some(&instr)).unwrap();
        assert_eq!(fair.draws.len(), 3);
        for (u, v) in plain.iter().zip(&fair.samples) {
            for (x, y) in u.iter().zip(v) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn fair_sample_q_one_draws_all_side1() {
        let (_ds, model) = small_world_model();
        let instr = presets::paired_q(1.0);
        let out = fair_sample(&model, "p", 3.0, 20, 1, Some(&instr)).unwrap();
        assert!(out.draws.iter().all(|d| d.side1));
        let out0 = fair_sample(&model, "p", 3.0, 20, 1, Some(&presets::paired_q(0.0))).unwrap();
        assert!(out0.draws.iter().all(|d| !d.side1));
    }

    #[test]
    fn fair_sample_is_deterministic() {
        let (_ds, model) = small_world_model();
        let instr = presets::paired();
        let a = fair_sample(&model, "p", 3.0, 4, 33, Some(&instr)).unwrap();
        let b = fair_sample(&model, "p", 3.0, 4, 33, Some(&instr)).unwrap();
        assert_eq!(a.samples, b.samples);
        assert_eq!(a.draws, b.draws);
    }

    #[test]
    fn fair_sample_rejects_unknown_edit_concept() {
        let (_ds, model) = small_world_model();
        let instr = plain_instruction(
            vec![EditConcept::toward("ghost", 1.0)],
            vec![EditConcept::away("attr0", 1.0)],
        );
        assert!(matches!(
            fair_sample(&model, "p", 3.0, 2, 0, Some(&instr)),
            Err(Error::Lookup(_))
        ));
    }

    #[test]
    fn fair_sample_steering_changes_output() {
        let (_ds, model) = small_world_model();
        let instr = presets::paired_q(1.0);
        let plain = model.sample("p", 3.0, 2, 3).unwrap();
        let fair = fair_sample(&model, "p", 3.0, 2, 3, Some(&instr)).unwrap();
        assert_ne!(plain, fair.samples);
    }
}
