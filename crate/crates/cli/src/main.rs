//! `fairlab` — command-line front end for the synthetic-world diffusion
//! bias laboratory: build worlds, train the denoiser and the attribute
//! classifier, generate plain or fair-guided samples, audit datasets and
//! outputs, run association tests, and reproduce the whole protocol from
//! one seed.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};

use fairlab_core::audit::{
    audit_dataset, audit_outcome, parse_prompts, train_kappa, AuditOptions, AuditReport,
    ClassifierConfig, ClassifierModel, PromptSpec,
};
use fairlab_core::diffusion::{EpsilonModel, TrainConfig};
use fairlab_core::guidance::{fair_sample, presets, FairInstruction, LookupTable};
use fairlab_core::ieat::{ieat, ConceptSet, IeatConfig};
use fairlab_core::report::{
    parse_generated_csv, parse_vector_csv, render_audit_csv, render_audit_text, render_box_csv,
    render_box_dat, render_direction_log, render_generated_csv, render_ieat_csv, render_rates_csv,
    render_rates_dat, render_outcome_text, ReportMeta,
};
use fairlab_core::world::{Dataset, WorldSpec};
use fairlab_core::{Error, Result};

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser)]
#[command(name = "fairlab", version, about = "Synthetic-world diffusion bias laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build a synthetic world dataset and write it as CSV
    Synth(SynthArgs),
    /// Train the conditional denoising model on a dataset
    Train(TrainArgs),
    /// Train the attribute classifier used for labeling
    TrainKappa(TrainKappaArgs),
    /// Generate samples for a concept, plain or fair-guided via a table
    Generate(GenerateArgs),
    /// Audit a dataset: relevance filter, labels, rates, group boxes
    Audit(AuditArgs),
    /// Association test between two target sets and two attribute sets
    Ieat(IeatArgs),
    /// Collate reference vs generated rates into reports and plot data
    Report(ReportArgs),
    /// Full pipeline from one seed, with a digest manifest
    Repro(ReproArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// World description file; omitted means the built-in default world
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Output CSV path
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Config file with `key = value` lines; flags win over it
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset CSV produced by synth
    #[arg(long)]
    data: Option<PathBuf>,
    /// World description file matching the dataset
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Checkpoint output path
    #[arg(long)]
    out: Option<PathBuf>,
    /// Training epochs
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct TrainKappaArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Checkpoint output path
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateArgs {
    /// Denoising-model checkpoint
    #[arg(long)]
    model: Option<PathBuf>,
    /// Concept to condition on
    #[arg(long)]
    concept: Option<String>,
    /// Number of samples
    #[arg(long)]
    n: Option<usize>,
    /// Prompt guidance scale
    #[arg(long)]
    sg: Option<f64>,
    /// Fair-instruction lookup table; no table or no match means plain sampling
    #[arg(long)]
    table: Option<PathBuf>,
    /// Override the direction probability of the resolved instruction
    #[arg(long)]
    q_override: Option<f64>,
    /// Output CSV for the generated vectors
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output CSV for the per-sample direction log (fair runs only)
    #[arg(long)]
    directions: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct AuditArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Attribute-classifier checkpoint
    #[arg(long)]
    kappa: Option<PathBuf>,
    /// Prompt list `concept[,threshold]`; omitted audits every world concept
    #[arg(long)]
    prompts: Option<PathBuf>,
    /// Directory for the report files
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct IeatArgs {
    /// Target set X (CSV of id,x0,...)
    #[arg(long)]
    x: Option<PathBuf>,
    /// Target set Y
    #[arg(long)]
    y: Option<PathBuf>,
    /// Attribute set A
    #[arg(long)]
    a: Option<PathBuf>,
    /// Attribute set B
    #[arg(long)]
    b: Option<PathBuf>,
    /// Output CSV path
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    kappa: Option<PathBuf>,
    #[arg(long)]
    prompts: Option<PathBuf>,
    /// Plain-sampling generated CSV
    #[arg(long)]
    plain: Option<PathBuf>,
    /// Fair-guided generated CSV (optional third column set)
    #[arg(long)]
    fair: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct ReproArgs {
    /// Directory for every artifact of the run
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Samples generated per concept and variant
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    config: Option<PathBuf>,
}

fn main() {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Io(_) | Error::Parse { .. } => 1,
                Error::Quality { .. } => 3,
                _ => 2,
            }
        }
    };
    std::process::exit(code);
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Cmd::Synth(a) => cmd_synth(a),
        Cmd::Train(a) => cmd_train(a),
        Cmd::TrainKappa(a) => cmd_train_kappa(a),
        Cmd::Generate(a) => cmd_generate(a),
        Cmd::Audit(a) => cmd_audit(a),
        Cmd::Ieat(a) => cmd_ieat(a),
        Cmd::Report(a) => cmd_report(a),
        Cmd::Repro(a) => cmd_repro(a),
    }
}

// ---------------------------------------------------------------------------
// Config file merge and effective-settings digest
// ---------------------------------------------------------------------------

/// Settings resolved from flags, an optional config file, and defaults, in
/// that order of precedence. Every resolved value is recorded so reports
/// can embed a digest of the configuration that actually drove the run.
struct Settings {
    file: BTreeMap<String, String>,
    used: BTreeMap<String, String>,
}

impl Settings {
    fn load(command: &str, config: &Option<PathBuf>) -> Result<Self> {
        let mut file = BTreeMap::new();
        if let Some(path) = config {
            let text = read_text(path)?;
            for (i, raw) in text.lines().enumerate() {
                let line = raw.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let Some((k, v)) = line.split_once('=') else {
                    return Err(Error::Parse {
                        path: path.display().to_string(),
                        line: i + 1,
                        col: 1,
                        msg: format!("expected `key = value`, got {line:?}"),
                    });
                };
                file.insert(k.trim().to_string(), v.trim().to_string());
            }
        }
        let mut used = BTreeMap::new();
        used.insert("command".to_string(), command.to_string());
        Ok(Settings { file, used })
    }

    fn record(&mut self, key: &str, value: impl ToString) {
        self.used.insert(key.to_string(), value.to_string());
    }

    fn opt_string(&mut self, key: &str, flag: Option<String>) -> Option<String> {
        let v = flag.or_else(|| self.file.get(key).cloned());
        if let Some(ref v) = v {
            self.record(key, v);
        }
        v
    }

    fn opt_path(&mut self, key: &str, flag: Option<PathBuf>) -> Option<PathBuf> {
        self.opt_string(key, flag.map(|p| p.display().to_string()))
            .map(PathBuf::from)
    }

    fn path(&mut self, key: &str, flag: Option<PathBuf>) -> Result<PathBuf> {
        self.opt_path(key, flag)
            .ok_or_else(|| Error::Spec(format!("--{key} is required")))
    }

    /// Output destinations resolve like any other setting but stay out of
    /// the config digest: where an artifact lands does not change what it
    /// holds, and reruns into different directories must hash alike.
    fn opt_out_path(&self, key: &str, flag: Option<PathBuf>) -> Option<PathBuf> {
        flag.map(|p| p.display().to_string())
            .or_else(|| self.file.get(key).cloned())
            .map(PathBuf::from)
    }

    fn out_path(&self, key: &str, flag: Option<PathBuf>) -> Result<PathBuf> {
        self.opt_out_path(key, flag)
            .ok_or_else(|| Error::Spec(format!("--{key} is required")))
    }

    fn string(&mut self, key: &str, flag: Option<String>) -> Result<String> {
        self.opt_string(key, flag)
            .ok_or_else(|| Error::Spec(format!("--{key} is required")))
    }

    fn u64(&mut self, key: &str, flag: Option<u64>, default: u64) -> Result<u64> {
        let v = match flag {
            Some(v) => v,
            None => match self.file.get(key) {
                Some(s) => s
                    .parse::<u64>()
                    .map_err(|_| Error::Spec(format!("config {key}={s:?} is not an integer")))?,
                None => default,
            },
        };
        self.record(key, v);
        Ok(v)
    }

    fn usize(&mut self, key: &str, flag: Option<usize>, default: usize) -> Result<usize> {
        Ok(self.u64(key, flag.map(|v| v as u64), default as u64)? as usize)
    }

    fn f64(&mut self, key: &str, flag: Option<f64>, default: f64) -> Result<f64> {
        let v = match flag {
            Some(v) => v,
            None => match self.file.get(key) {
                Some(s) => s
                    .parse::<f64>()
                    .map_err(|_| Error::Spec(format!("config {key}={s:?} is not a number")))?,
                None => default,
            },
        };
        self.record(key, v);
        Ok(v)
    }

    fn opt_f64(&mut self, key: &str, flag: Option<f64>) -> Result<Option<f64>> {
        let v = match flag {
            Some(v) => Some(v),
            None => match self.file.get(key) {
                Some(s) => Some(
                    s.parse::<f64>()
                        .map_err(|_| Error::Spec(format!("config {key}={s:?} is not a number")))?,
                ),
                None => None,
            },
        };
        if let Some(v) = v {
            self.record(key, v);
        }
        Ok(v)
    }

    /// Digest of the effective settings, for report provenance.
    fn digest(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in &self.used {
            h.update(k.as_bytes());
            h.update(b"=");
            h.update(v.as_bytes());
            h.update(b"\n");
        }
        format!("{:x}", h.finalize())
    }

    fn meta(&self, seed: u64) -> ReportMeta {
        ReportMeta {
            seed,
            config_digest: self.digest(),
            version: VERSION.to_string(),
        }
    }
}

// ---------------------------------------------------------------------------
// Shared file helpers
// ---------------------------------------------------------------------------

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })
}

fn load_spec(settings: &mut Settings, flag: Option<PathBuf>) -> Result<WorldSpec> {
    match settings.opt_path("spec", flag) {
        Some(p) => WorldSpec::parse(&read_text(&p)?, &p.display().to_string()),
        None => Ok(WorldSpec::default()),
    }
}

fn load_dataset(settings: &mut Settings, data: Option<PathBuf>, spec: &WorldSpec) -> Result<Dataset> {
    let path = settings.path("data", data)?;
    Dataset::from_csv(spec, &read_text(&path)?, &path.display().to_string())
}

fn default_prompts(spec: &WorldSpec) -> Vec<PromptSpec> {
    spec.concepts.iter().map(|c| PromptSpec::new(&c.name)).collect()
}

fn load_prompts(
    settings: &mut Settings,
    flag: Option<PathBuf>,
    spec: &WorldSpec,
) -> Result<Vec<PromptSpec>> {
    match settings.opt_path("prompts", flag) {
        Some(p) => parse_prompts(&read_text(&p)?, &p.display().to_string()),
        None => Ok(default_prompts(spec)),
    }
}

fn out_dir(settings: &mut Settings, flag: Option<PathBuf>) -> Result<PathBuf> {
    let dir = settings.path("out-dir", flag)?;
    fs::create_dir_all(&dir).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", dir.display()),
        ))
    })?;
    Ok(dir)
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let mut s = Settings::load("synth", &a.config)?;
    let seed = s.u64("seed", a.seed, 0)?;
    let spec = load_spec(&mut s, a.spec)?;
    let out = s.path("out", a.out)?;
    let ds = Dataset::build(&spec, seed)?;
    write_text(&out, &ds.to_csv())?;
    println!("wrote {} samples to {}", ds.len(), out.display());
    Ok(())
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let mut s = Settings::load("train", &a.config)?;
    let seed = s.u64("seed", a.seed, 0)?;
    let spec = load_spec(&mut s, a.spec)?;
    let ds = load_dataset(&mut s, a.data, &spec)?;
    let out = s.path("out", a.out)?;
    let mut cfg = TrainConfig {
        seed,
        ..TrainConfig::default()
    };
    cfg.epochs = s.usize("epochs", a.epochs, cfg.epochs)?;
    let mut model = EpsilonModel::for_dataset(&ds, seed)?;
    let report = model.train(&ds, &cfg)?;
    for (i, loss) in report.epoch_loss.iter().enumerate() {
        if i == 0 || (i + 1) % 20 == 0 || i + 1 == report.epoch_loss.len() {
            println!("epoch {}/{} loss {loss}", i + 1, cfg.epochs);
        }
    }
    model.save(&out)?;
    println!("checkpoint written to {}", out.display());
    Ok(())
}

fn cmd_train_kappa(a: TrainKappaArgs) -> Result<()> {
    let mut s = Settings::load("train-kappa", &a.config)?;
    let seed = s.u64("seed", a.seed, 0)?;
    let spec = load_spec(&mut s, a.spec)?;
    let ds = load_dataset(&mut s, a.data, &spec)?;
    let out = s.path("out", a.out)?;
    let kappa = train_kappa(&ds, seed, &ClassifierConfig::default())?;
    println!("held-out accuracy {}", kappa.accuracy);
    for row in &kappa.confusion {
        let cells: Vec<String> = row.iter().map(|c| c.to_string()).collect();
        println!("confusion {}", cells.join(" "));
    }
    kappa.save(&out)?;
    println!("checkpoint written to {}", out.display());
    Ok(())
}

fn cmd_generate(a: GenerateArgs) -> Result<()> {
    let mut s = Settings::load("generate", &a.config)?;
    let seed = s.u64("seed", a.seed, 0)?;
    let model_path = s.path("model", a.model)?;
    let concept = s.string("concept", a.concept)?;
    let n = s.usize("n", a.n, 100)?;
    let sg = s.f64("sg", a.sg, 3.0)?;
    let q_override = s.opt_f64("q-override", a.q_override)?;
    let out = s.path("out", a.out)?;
    let table_path = s.opt_path("table", a.table);
    let model = EpsilonModel::load(&model_path)?;

    let instruction: Option<FairInstruction> = match &table_path {
        Some(p) => {
            let table = LookupTable::load(p)?;
            table.resolve(&concept).cloned()
        }
        None => None,
    };
    let instruction = match (instruction, q_override) {
        (Some(i), Some(q)) => Some(FairInstruction { q, ..i }),
        (i, _) => i,
    };

    let result = fair_sample(&model, &concept, sg, n, seed, instruction.as_ref())?;
    write_text(
        &out,
        &render_generated_csv(&[(concept.clone(), result.samples)], model.data_dim()),
    )?;
    if instruction.is_some() {
        let dir_path = match s.opt_path("directions", a.directions) {
            Some(p) => p,
            None => {
                let stem = out
                    .file_stem()
                    .map(|s| s.to_string_lossy().to_string())
                    .unwrap_or_else(|| "generated".to_string());
                out.with_file_name(format!("{stem}_directions.csv"))
            }
        };
        write_text(&dir_path, &render_direction_log(&concept, &result.draws))?;
        let side1 = result.draws.iter().filter(|d| d.side1).count();
        println!(
            "generated {n} fair-guided samples for {concept} ({side1} side-1 draws) -> {}",
            out.display()
        );
    } else {
        println!("generated {n} plain samples for {concept} -> {}", out.display());
    }
    Ok(())
}

fn cmd_audit(a: AuditArgs) -> Result<()> {
    let mut s = Settings::load("audit", &a.config)?;
    let seed = s.u64("seed", a.seed, 0)?;
    let spec = load_spec(&mut s, a.spec)?;
    let ds = load_dataset(&mut s, a.data, &spec)?;
    let kappa_path = s.path("kappa", a.kappa)?;
    let prompts = load_prompts(&mut s, a.prompts, &spec)?;
    let dir = out_dir(&mut s, a.out_dir)?;
    let kappa = ClassifierModel::load(&kappa_path)?;
    let report = audit_dataset(&ds, &prompts, &kappa, &AuditOptions::default())?;
    let meta = s.meta(seed);
    write_text(&dir.join("audit.csv"), &render_audit_csv(&report, &meta))?;
    write_text(&dir.join("audit.txt"), &render_audit_text(&report, &meta))?;
    write_text(&dir.join("boxes.csv"), &render_box_csv(&report.groups, &meta))?;
    write_text(&dir.join("boxes.dat"), &render_box_dat(&report.groups, &meta))?;
    println!(
        "audited {} concepts ({} missing); reports in {}",
        report.rows.len(),
        report.missing.len(),
        dir.display()
    );
    Ok(())
}

fn cmd_ieat(a: IeatArgs) -> Result<()> {
    let mut s = Settings::load("ieat", &a.config)?;
    let seed = s.u64("seed", a.seed, 0)?;
    let out = s.path("out", a.out)?;
    let mut load_set = |key: &str, flag: Option<PathBuf>| -> Result<ConceptSet<f64>> {
        let path = s.path(key, flag)?;
        let (_, vectors) = parse_vector_csv(&read_text(&path)?, &path.display().to_string())?;
        let label = path
            .file_stem()
            .map(|s| s.to_string_lossy().to_string())
            .unwrap_or_else(|| key.to_string());
        ConceptSet::new(label, vectors)
    };
    let x = load_set("x", a.x)?;
    let y = load_set("y", a.y)?;
    let set_a = load_set("a", a.a)?;
    let set_b = load_set("b", a.b)?;
    let cfg = IeatConfig {
        seed,
        ..IeatConfig::default()
    };
    let result = ieat(&x, &y, &set_a, &set_b, &cfg)?;
    write_text(&out, &render_ieat_csv(&result, &s.meta(seed)))?;
    println!(
        "S={} p={} d={} ({}, {} partitions)",
        result.statistic, result.p, result.d, result.method, result.partitions
    );
    Ok(())
}

fn cmd_report(a: ReportArgs) -> Result<()> {
    let mut s = Settings::load("report", &a.config)?;
    let seed = s.u64("seed", a.seed, 0)?;
    let spec = load_spec(&mut s, a.spec)?;
    let ds = load_dataset(&mut s, a.data, &spec)?;
    let kappa_path = s.path("kappa", a.kappa)?;
    let prompts = load_prompts(&mut s, a.prompts, &spec)?;
    let plain_path = s.path("plain", a.plain)?;
    let fair_path = s.opt_path("fair", a.fair);
    let dir = out_dir(&mut s, a.out_dir)?;

    let kappa = ClassifierModel::load(&kappa_path)?;
    let opts = AuditOptions::default();
    let reference = audit_dataset(&ds, &prompts, &kappa, &opts)?;
    let plain_gen = parse_generated_csv(&read_text(&plain_path)?, &plain_path.display().to_string())?;
    let plain = audit_outcome(&plain_gen, &kappa, &reference, &opts)?;
    let fair = match &fair_path {
        Some(p) => {
            let gen = parse_generated_csv(&read_text(p)?, &p.display().to_string())?;
            Some(audit_outcome(&gen, &kappa, &reference, &opts)?)
        }
        None => None,
    };

    let meta = s.meta(seed);
    write_reports(&dir, "", &reference, &plain, fair.as_ref(), &meta)?;
    println!(
        "verdicts: amplified {}%, reflected {}%, mitigated {}%",
        plain.verdict_percent[0], plain.verdict_percent[1], plain.verdict_percent[2]
    );
    println!("reports in {}", dir.display());
    Ok(())
}

/// Emit the collated rates table, plot data, text summary, and group boxes
/// for one reference/plain/fair triple. `suffix` distinguishes variants.
fn write_reports(
    dir: &Path,
    suffix: &str,
    reference: &AuditReport,
    plain: &fairlab_core::audit::OutcomeReport,
    fair: Option<&fairlab_core::audit::OutcomeReport>,
    meta: &ReportMeta,
) -> Result<()> {
    write_text(
        &dir.join(format!("rates{suffix}.csv")),
        &render_rates_csv(reference, plain, fair, meta),
    )?;
    write_text(
        &dir.join(format!("rates{suffix}.dat")),
        &render_rates_dat(reference, plain, fair, meta),
    )?;
    write_text(
        &dir.join(format!("report{suffix}.txt")),
        &render_outcome_text(reference, plain, fair, meta),
    )?;
    write_text(
        &dir.join(format!("boxes_plain{suffix}.csv")),
        &render_box_csv(&plain.groups, meta),
    )?;
    write_text(
        &dir.join(format!("boxes_plain{suffix}.dat")),
        &render_box_dat(&plain.groups, meta),
    )?;
    if let Some(f) = fair {
        write_text(
            &dir.join(format!("boxes_fair{suffix}.csv")),
            &render_box_csv(&f.groups, meta),
        )?;
        write_text(
            &dir.join(format!("boxes_fair{suffix}.dat")),
            &render_box_dat(&f.groups, meta),
        )?;
    }
    Ok(())
}

fn cmd_repro(a: ReproArgs) -> Result<()> {
    let mut s = Settings::load("repro", &a.config)?;
    let seed = s.u64("seed", a.seed, 0)?;
    let spec = load_spec(&mut s, a.spec)?;
    let n = s.usize("n", a.n, 500)?;
    let dir = out_dir(&mut s, a.out_dir)?;
    let meta_digest = s.meta(seed);

    let mut manifest: Vec<(String, String)> = Vec::new();
    fn emit(dir: &Path, manifest: &mut Vec<(String, String)>, name: &str, text: &str) -> Result<()> {
        write_text(&dir.join(name), text)?;
        manifest.push((name.to_string(), format!("{:x}", Sha256::digest(text.as_bytes()))));
        Ok(())
    }

    println!("[1/7] world");
    emit(&dir, &mut manifest, "world.spec", &spec.render())?;
    let ds = Dataset::build(&spec, seed)?;
    emit(&dir, &mut manifest, "data.csv", &ds.to_csv())?;

    println!("[2/7] denoiser training");
    let mut model = EpsilonModel::for_dataset(&ds, seed)?;
    let train_report = model.train(
        &ds,
        &TrainConfig {
            seed,
            ..TrainConfig::default()
        },
    )?;
    println!(
        "  loss {} -> {}",
        train_report.epoch_loss[0],
        train_report.epoch_loss.last().unwrap()
    );
    let model_path = dir.join("model.ckpt");
    model.save(&model_path)?;
    manifest.push(("model.ckpt".into(), digest_file(&model_path)?));

    println!("[3/7] attribute classifier");
    let kappa = train_kappa(&ds, seed, &ClassifierConfig::default())?;
    println!("  held-out accuracy {}", kappa.accuracy);
    let kappa_path = dir.join("kappa.ckpt");
    kappa.save(&kappa_path)?;
    manifest.push(("kappa.ckpt".into(), digest_file(&kappa_path)?));

    println!("[4/7] generation");
    let concepts = spec.concept_names();
    let mut plain_gen: Vec<(String, Vec<Vec<f64>>)> = Vec::new();
    let mut fair50_gen: Vec<(String, Vec<Vec<f64>>)> = Vec::new();
    let mut fair70_gen: Vec<(String, Vec<Vec<f64>>)> = Vec::new();
    let mut dir50 = String::new();
    let mut dir70 = String::new();
    for (k, name) in concepts.iter().enumerate() {
        let concept_seed = seed.wrapping_add(1 + k as u64);
        plain_gen.push((name.clone(), model.sample(name, 3.0, n, concept_seed)?));
        let f50 = fair_sample(&model, name, 3.0, n, concept_seed, Some(&presets::paired_q(0.5)))?;
        let f70 = fair_sample(&model, name, 3.0, n, concept_seed, Some(&presets::paired_q(0.7)))?;
        append_direction_block(&mut dir50, name, &f50.draws);
        append_direction_block(&mut dir70, name, &f70.draws);
        fair50_gen.push((name.clone(), f50.samples));
        fair70_gen.push((name.clone(), f70.samples));
    }
    emit(&dir, &mut manifest, "gen_plain.csv", &render_generated_csv(&plain_gen, spec.dim))?;
    emit(&dir, &mut manifest, "gen_fair_q50.csv", &render_generated_csv(&fair50_gen, spec.dim))?;
    emit(&dir, &mut manifest, "gen_fair_q70.csv", &render_generated_csv(&fair70_gen, spec.dim))?;
    emit(&dir, &mut manifest, "directions_q50.csv", &dir50)?;
    emit(&dir, &mut manifest, "directions_q70.csv", &dir70)?;

    println!("[5/7] dataset audit");
    let opts = AuditOptions::default();
    let prompts = default_prompts(&spec);
    let reference = audit_dataset(&ds, &prompts, &kappa, &opts)?;
    emit(&dir, &mut manifest, "audit.csv", &render_audit_csv(&reference, &meta_digest))?;
    emit(&dir, &mut manifest, "audit.txt", &render_audit_text(&reference, &meta_digest))?;
    emit(&dir, &mut manifest, "boxes_data.csv", &render_box_csv(&reference.groups, &meta_digest))?;
    emit(&dir, &mut manifest, "boxes_data.dat", &render_box_dat(&reference.groups, &meta_digest))?;

    println!("[6/7] outcome audits");
    let plain = audit_outcome(&plain_gen, &kappa, &reference, &opts)?;
    let fair50 = audit_outcome(&fair50_gen, &kappa, &reference, &opts)?;
    let fair70 = audit_outcome(&fair70_gen, &kappa, &reference, &opts)?;
    emit(&dir, &mut manifest, 
        "rates_q50.csv",
        &render_rates_csv(&reference, &plain, Some(&fair50), &meta_digest),
    )?;
    emit(&dir, &mut manifest, 
        "rates_q50.dat",
        &render_rates_dat(&reference, &plain, Some(&fair50), &meta_digest),
    )?;
    emit(&dir, &mut manifest, 
        "report_q50.txt",
        &render_outcome_text(&reference, &plain, Some(&fair50), &meta_digest),
    )?;
    emit(&dir, &mut manifest, 
        "rates_q70.csv",
        &render_rates_csv(&reference, &plain, Some(&fair70), &meta_digest),
    )?;
    emit(&dir, &mut manifest, 
        "rates_q70.dat",
        &render_rates_dat(&reference, &plain, Some(&fair70), &meta_digest),
    )?;
    emit(&dir, &mut manifest, 
        "report_q70.txt",
        &render_outcome_text(&reference, &plain, Some(&fair70), &meta_digest),
    )?;
    emit(&dir, &mut manifest, "boxes_plain.csv", &render_box_csv(&plain.groups, &meta_digest))?;
    emit(&dir, &mut manifest, "boxes_plain.dat", &render_box_dat(&plain.groups, &meta_digest))?;
    emit(&dir, &mut manifest, "boxes_fair_q50.csv", &render_box_csv(&fair50.groups, &meta_digest))?;
    emit(&dir, &mut manifest, "boxes_fair_q50.dat", &render_box_dat(&fair50.groups, &meta_digest))?;
    emit(&dir, &mut manifest, "boxes_fair_q70.csv", &render_box_csv(&fair70.groups, &meta_digest))?;
    emit(&dir, &mut manifest, "boxes_fair_q70.dat", &render_box_dat(&fair70.groups, &meta_digest))?;

    println!("[7/7] manifest");
    manifest.sort();
    let mut text = String::new();
    for (name, digest) in &manifest {
        text.push_str(&format!("{digest}  {name}\n"));
    }
    write_text(&dir.join("MANIFEST"), &text)?;
    println!("wrote {} artifacts to {}", manifest.len() + 1, dir.display());
    Ok(())
}

fn append_direction_block(
    log: &mut String,
    concept: &str,
    draws: &[fairlab_core::guidance::DirectionDraw],
) {
    let block = render_direction_log(concept, draws);
    if log.is_empty() {
        log.push_str(&block);
    } else if let Some(rows) = block.split_once('\n') {
        log.push_str(rows.1);
    }
}

fn digest_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}
