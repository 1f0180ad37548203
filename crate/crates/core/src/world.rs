//! Synthetic biased world.
//!
//! A world is a set of named concepts embedded as Gaussian clusters in a
//! feature space, where one designated axis (the last) carries a binary
//! attribute and the remaining axes carry concept identity. Each concept
//! plants its own attribute rate: a sample first draws its attribute label
//! with that probability, then draws features around the cluster mean of its
//! (concept, attribute) cell. Cluster geometry is derived deterministically
//! from the spec alone, so a spec file fully describes the world.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::textio::{fmt17, parse_f64, parse_usize};

/// Reserved concept names describing the attribute itself (a generic
/// "person with attribute 0 / 1"). They never label world samples but give
/// the conditioning vocabulary and guidance instructions a handle on the
/// attribute direction.
pub const ATTR_CONCEPTS: [&str; 2] = ["attr0", "attr1"];

#[derive(Clone, Debug, PartialEq)]
pub struct ConceptSpec {
    pub name: String,
    /// Planted probability that a sample of this concept carries attribute 1.
    pub rate: f64,
    /// Samples drawn for this concept.
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WorldSpec {
    pub dim: usize,
    /// Distance between opposing cluster means, in feature units.
    pub sep: f64,
    /// Isotropic standard deviation of every cluster.
    pub std_dev: f64,
    pub concepts: Vec<ConceptSpec>,
    /// Optional named subgroups of concepts for reporting.
    pub groups: Vec<(String, Vec<String>)>,
}

fn name_ok(name: &str) -> bool {
    !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

impl Default for WorldSpec {
    /// Eight concepts with planted rates spanning heavy bias in both
    /// directions around the balanced point.
    fn default() -> Self {
        let rates = [0.04, 0.15, 0.30, 0.46, 0.54, 0.70, 0.85, 0.96];
        let names = [
            "alpha", "bravo", "charlie", "delta", "echo", "foxtrot", "golf", "hotel",
        ];
        WorldSpec {
            dim: 8,
            sep: 6.0,
            std_dev: 1.0,
            concepts: names
                .iter()
                .zip(rates)
                .map(|(n, r)| ConceptSpec {
                    name: (*n).to_string(),
                    rate: r,
                    count: 250,
                })
                .collect(),
            groups: Vec::new(),
        }
    }
}

impl WorldSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(Error::Spec(format!(
                "dim {} too small, need an attribute axis plus concept axes",
                self.dim
            )));
        }
        if self.concepts.len() < 2 {
            return Err(Error::Spec("need at least two concepts".into()));
        }
        if !(self.sep.is_finite() && self.sep > 0.0) {
            return Err(Error::Spec(format!("separation {} must be positive", self.sep)));
        }
        if !(self.std_dev.is_finite() && self.std_dev > 0.0) {
            return Err(Error::Spec(format!(
                "cluster std {} must be positive",
                self.std_dev
            )));
        }
        for c in &self.concepts {
            if !name_ok(&c.name) {
                return Err(Error::Spec(format!("bad concept name {:?}", c.name)));
            }
            if ATTR_CONCEPTS.contains(&c.name.as_str()) {
                return Err(Error::Spec(format!(
                    "concept name {:?} is reserved for the attribute vocabulary",
                    c.name
                )));
            }
            if !(0.0..=1.0).contains(&c.rate) {
                return Err(Error::Spec(format!(
                    "concept {:?} rate {} not in [0, 1]",
                    c.name, c.rate
                )));
            }
            if c.count == 0 {
                return Err(Error::Spec(format!("concept {:?} has zero samples", c.name)));
            }
        }
        let mut names: Vec<&str> = self.concepts.iter().map(|c| c.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Spec("duplicate concept names".into()));
        }
        for (gname, members) in &self.groups {
            if !name_ok(gname) {
                return Err(Error::Spec(format!("bad group name {gname:?}")));
            }
            for m in members {
                if self.concept_index(m).is_none() {
                    return Err(Error::Spec(format!(
                        "group {gname:?} references unknown concept {m:?}"
                    )));
                }
            }
        }
        // Cluster means must be distinct across every (concept, attribute)
        // cell for the world to be well posed.
        let mut means: Vec<Vec<f64>> = Vec::new();
        for k in 0..self.concepts.len() {
            for a in 0..2u8 {
                let m = self.cluster_mean(k, a);
                if means.iter().any(|e| e == &m) {
                    return Err(Error::Spec(format!(
                        "cluster means collide at concept {:?}",
                        self.concepts[k].name
                    )));
                }
                means.push(m);
            }
        }
        Ok(())
    }

    pub fn concept_index(&self, name: &str) -> Option<usize> {
        self.concepts.iter().position(|c| c.name == name)
    }

    pub fn concept_names(&self) -> Vec<String> {
        self.concepts.iter().map(|c| c.name.clone()).collect()
    }

    pub fn total_count(&self) -> usize {
        self.concepts.iter().map(|c| c.count).sum()
    }

    /// Index of the axis carrying the attribute.
    pub fn attr_axis(&self) -> usize {
        self.dim - 1
    }

    /// Deterministic position of a concept in the concept subspace
    /// (attribute coordinate zero). The first `dim - 1` concepts sit on the
    /// positive axes, the next batch on the negative axes, and any further
    /// concepts on fixed pseudo-random directions.
    pub fn concept_position(&self, k: usize) -> Vec<f64> {
        let axes = self.dim - 1;
        let mut pos = vec![0.0; self.dim];
        if k < axes {
            pos[k] = self.sep;
        } else if k < 2 * axes {
            pos[k - axes] = -self.sep;
        } else {
            let mut rng = Rng::with_stream(0xC0DE_5EED, k as u64);
            let mut norm = 0.0;
            for p in pos.iter_mut().take(axes) {
                *p = rng.gaussian();
                norm += *p * *p;
            }
            let norm = norm.sqrt().max(1e-12);
            for p in pos.iter_mut().take(axes) {
                *p *= self.sep / norm;
            }
        }
        pos
    }

    /// Mean of the cluster for concept index `k` with attribute `a`: the
    /// concept position shifted by half the separation along the attribute
    /// axis, negative for `a = 0` and positive for `a = 1`.
    pub fn cluster_mean(&self, k: usize, a: u8) -> Vec<f64> {
        let mut mean = self.concept_position(k);
        let sign = if a == 1 { 1.0 } else { -1.0 };
        mean[self.attr_axis()] = sign * self.sep / 2.0;
        mean
    }

    /// Prompt-embedding analogue of a concept: the midpoint of its two
    /// cluster means, which cancels the attribute component.
    pub fn prototype(&self, concept: &str) -> Result<Vec<f64>> {
        let k = self
            .concept_index(concept)
            .ok_or_else(|| Error::Lookup(concept.to_string()))?;
        let m0 = self.cluster_mean(k, 0);
        let m1 = self.cluster_mean(k, 1);
        Ok(m0.iter().zip(&m1).map(|(a, b)| (a + b) / 2.0).collect())
    }

    /// Render as a `key=value` spec file.
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str("# world spec\n");
        let _ = writeln!(out, "dim={}", self.dim);
        let _ = writeln!(out, "sep={}", self.sep);
        let _ = writeln!(out, "std={}", self.std_dev);
        for c in &self.concepts {
            let _ = writeln!(out, "concept={},{},{}", c.name, c.rate, c.count);
        }
        for (g, members) in &self.groups {
            let _ = writeln!(out, "group={}:{}", g, members.join(","));
        }
        out
    }

    /// Parse the `key=value` spec format; `path` labels parse errors.
    pub fn parse(text: &str, path: &str) -> Result<Self> {
        let perr = |line: usize, col: usize, msg: String| Error::Parse {
            path: path.to_string(),
            line,
            col,
            msg,
        };
        let mut spec = WorldSpec {
            dim: 8,
            sep: 6.0,
            std_dev: 1.0,
            concepts: Vec::new(),
            groups: Vec::new(),
        };
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(perr(line_no, 1, format!("expected key=value, got {line:?}")));
            };
            let vcol = key.len() + 2;
            match key.trim() {
                "dim" => {
                    spec.dim = parse_usize(value, "dim")
                        .map_err(|e| perr(line_no, vcol, e.to_string()))?
                }
                "sep" => {
                    spec.sep = parse_f64(value, "sep")
                        .map_err(|e| perr(line_no, vcol, e.to_string()))?
                }
                "std" => {
                    spec.std_dev = parse_f64(value, "std")
                        .map_err(|e| perr(line_no, vcol, e.to_string()))?
                }
                "concept" => {
                    let parts: Vec<&str> = value.split(',').collect();
                    if parts.len() != 3 {
                        return Err(perr(
                            line_no,
                            vcol,
                            format!("concept needs name,rate,count, got {value:?}"),
                        ));
                    }
                    spec.concepts.push(ConceptSpec {
                        name: parts[0].trim().to_string(),
                        rate: parse_f64(parts[1], "concept rate")
                            .map_err(|e| perr(line_no, vcol, e.to_string()))?,
                        count: parse_usize(parts[2], "concept count")
                            .map_err(|e| perr(line_no, vcol, e.to_string()))?,
                    });
                }
                "group" => {
                    let Some((gname, members)) = value.split_once(':') else {
                        return Err(perr(
                            line_no,
                            vcol,
                            format!("group needs name:members, got {value:?}"),
                        ));
                    };
                    spec.groups.push((
                        gname.trim().to_string(),
                        members.split(',').map(|m| m.trim().to_string()).collect(),
                    ));
                }
                other => {
                    return Err(perr(line_no, 1, format!("unknown key {other:?}")));
                }
            }
        }
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: String,
    pub concept: String,
    pub attribute: u8,
    pub features: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub spec: WorldSpec,
    pub samples: Vec<Sample>,
}

impl Dataset {
    /// Draw the full dataset for a spec. For every sample the attribute
    /// label is drawn first (1 with the planted probability), then features
    /// around the matching cluster mean. Generation is single-threaded and
    /// fully determined by `(spec, seed)`.
    pub fn build(spec: &WorldSpec, seed: u64) -> Result<Dataset> {
        spec.validate()?;
        let mut rng = Rng::new(seed);
        let mut samples = Vec::with_capacity(spec.total_count());
        for (k, c) in spec.concepts.iter().enumerate() {
            for i in 0..c.count {
                let attribute = u8::from(rng.uniform() < c.rate);
                let mean = spec.cluster_mean(k, attribute);
                let features: Vec<f64> = mean
                    .iter()
                    .map(|m| m + spec.std_dev * rng.gaussian())
                    .collect();
                samples.push(Sample {
                    id: format!("{}-{i:04}", c.name),
                    concept: c.name.clone(),
                    attribute,
                    features,
                });
            }
        }
        Ok(Dataset {
            spec: spec.clone(),
            samples,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples_of<'a>(&'a self, concept: &'a str) -> impl Iterator<Item = &'a Sample> {
        self.samples.iter().filter(move |s| s.concept == concept)
    }

    /// Empirical attribute rate among one concept's samples.
    pub fn planted_rate(&self, concept: &str) -> Result<f64> {
        let labels: Vec<u8> = self.samples_of(concept).map(|s| s.attribute).collect();
        if labels.is_empty() {
            return Err(Error::Lookup(concept.to_string()));
        }
        crate::metrics::attribute_rate(&labels)
    }

    fn header(dim: usize) -> String {
        let mut h = String::from("id,concept,attribute");
        for j in 0..dim {
            let _ = write!(h, ",x{j}");
        }
        h
    }

    /// CSV with header `id,concept,attribute,x0,...`; floats carry 17
    /// significant digits so the file round-trips exactly.
    pub fn to_csv(&self) -> String {
        let mut out = Self::header(self.spec.dim);
        out.push('\n');
        for s in &self.samples {
            let _ = write!(out, "{},{},{}", s.id, s.concept, s.attribute);
            for x in &s.features {
                let _ = write!(out, ",{}", fmt17(*x));
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(spec: &WorldSpec, text: &str, path: &str) -> Result<Dataset> {
        spec.validate()?;
        let perr = |line: usize, msg: String| Error::Parse {
            path: path.to_string(),
            line,
            col: 1,
            msg,
        };
        let mut lines = text.lines().enumerate();
        let Some((_, header)) = lines.next() else {
            return Err(perr(1, "empty file".into()));
        };
        let expected = Self::header(spec.dim);
        if header != expected {
            return Err(perr(1, format!("bad header {header:?}, expected {expected:?}")));
        }
        let mut samples = Vec::new();
        for (i, line) in lines {
            let line_no = i + 1;
            if line.is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split(',').collect();
            if parts.len() != 3 + spec.dim {
                return Err(perr(
                    line_no,
                    format!("expected {} fields, got {}", 3 + spec.dim, parts.len()),
                ));
            }
            let concept = parts[1].to_string();
            if spec.concept_index(&concept).is_none() {
                return Err(perr(line_no, format!("unknown concept {concept:?}")));
            }
            let attribute = match parts[2] {
                "0" => 0,
                "1" => 1,
                other => return Err(perr(line_no, format!("bad attribute {other:?}"))),
            };
            let features: Result<Vec<f64>> = parts[3..]
                .iter()
                .map(|t| parse_f64(t, "feature"))
                .collect();
            let features = features.map_err(|e| perr(line_no, e.to_string()))?;
            samples.push(Sample {
                id: parts[0].to_string(),
                concept,
                attribute,
                features,
            });
        }
        let ds = Dataset {
            spec: spec.clone(),
            samples,
        };
        for c in &spec.concepts {
            let have = ds.samples_of(&c.name).count();
            if have != c.count {
                return Err(Error::Spec(format!(
                    "concept {:?} has {have} samples, spec plants {}",
                    c.name, c.count
                )));
            }
        }
        Ok(ds)
    }
}
