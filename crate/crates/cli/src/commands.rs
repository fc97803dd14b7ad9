use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use a2c_core::classifier::{evaluate_classifier, fit_classifier, training_curve_csv, EvalScope};
use a2c_core::coex::{CoExConfig, RateLevel};
use a2c_core::config::{file_digest, ExperimentConfig, RunManifest};
use a2c_core::data::{load_dataset, partition_dataset, split_known, DatasetPartition, Group};
use a2c_core::decision::{Prediction, Stage};
use a2c_core::expert::{build_expert, Tier};
use a2c_core::metrics::{render_report, run_grid, GridResult, ReportFormat, ReportInput};
use a2c_core::persist::{create_output_dir, load_classifier, load_rejector, save_classifier, save_rejector, write_new};
use a2c_core::persona::{
    coex_success_rate, parse_final_decision, run_persona_session, score_outcome, ChatBackend, PersonaSpec,
    ScriptedBackend, SessionConfig, TriageOutcome, Truth,
};
use a2c_core::pipeline::{run_mode_seeded, Mode, PipelineComponents, RunReport};
use a2c_core::rejector::{evaluate_rejector, fit_rejector};
use a2c_core::synth::{kdd_like_csv, kdd_scaled_counts};
use a2c_core::{ClassRegistry, Error};
use serde_json::{json, Value};

use crate::http::HttpBackend;
use crate::Common;

/// A runtime error tagged with the stage that produced it.
#[derive(Debug)]
pub struct Failure {
    stage: &'static str,
    error: Error,
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}", self.stage, self.error)
    }
}

type CmdResult<T = ()> = Result<T, Failure>;

trait AtStage<T> {
    fn at(self, stage: &'static str) -> CmdResult<T>;
}

impl<T> AtStage<T> for a2c_core::Result<T> {
    fn at(self, stage: &'static str) -> CmdResult<T> {
        self.map_err(|error| Failure { stage, error })
    }
}

/// Which seed `--seed` replaces for a command.
#[derive(Clone, Copy)]
enum SeedSlot {
    Partition,
    Training,
    Draws,
}

struct Setup {
    cfg: ExperimentConfig,
    manifest: RunManifest,
    partition: DatasetPartition,
    root: PathBuf,
}

fn setup(common: &Common, command: &str, slot: SeedSlot) -> CmdResult<Setup> {
    let mut cfg = ExperimentConfig::load(&common.config).at("config")?;
    let mut overrides = Vec::new();
    if let Some(seed) = common.seed {
        let (name, target) = match slot {
            SeedSlot::Partition => ("seeds.partition", &mut cfg.seeds.partition),
            SeedSlot::Training => ("seeds.training", &mut cfg.seeds.training),
            SeedSlot::Draws => ("seeds.draws", &mut cfg.seeds.draws),
        };
        *target = seed;
        overrides.push((name.to_string(), seed.to_string()));
    }
    let root = common.out.clone().unwrap_or_else(|| cfg.output.dir.clone());
    if let Some(out) = &common.out {
        overrides.push(("output.dir".into(), out.display().to_string()));
    }
    let format = cfg.dataset_format().at("config")?;
    let dataset = load_dataset(&cfg.dataset.path, format).at("dataset")?;
    let assignment = cfg.assignment().at("config")?;
    let partition = partition_dataset(&dataset, &assignment, &cfg.partition_options()).at("partition")?;
    let partition = split_known(partition, cfg.dataset.split, cfg.seeds.partition).at("partition")?;

    let mut manifest = RunManifest::new(command, &cfg);
    manifest.overrides = overrides;
    manifest.dataset_sha256 = Some(file_digest(&cfg.dataset.path).at("dataset")?);
    manifest.notes.push(partition.manifest());
    Ok(Setup {
        cfg,
        manifest,
        partition,
        root,
    })
}

impl Setup {
    fn out_dir(&self, name: &str, force: bool) -> CmdResult<PathBuf> {
        let dir = self.root.join(name);
        create_output_dir(&dir, force).at("output")?;
        Ok(dir)
    }

    fn finish(&self, dir: &Path, force: bool) -> CmdResult {
        let text = self.manifest.render().at("output")?;
        write_new(&dir.join("manifest.toml"), &text, force).at("output")
    }

    fn rejector_path(&self) -> PathBuf {
        self.root.join("train-rejector").join("rejector.model")
    }

    fn classifier_path(&self) -> PathBuf {
        self.root.join("train-classifier").join("classifier.model")
    }

    fn components(&self, tier: Tier, rate: RateLevel) -> CmdResult<PipelineComponents> {
        let missing = |what: &str, path: &Path| Failure {
            stage: "models",
            error: Error::Config(format!("no {what} at {}; run `a2c train-{what}` first", path.display())),
        };
        let (rp, cp) = (self.rejector_path(), self.classifier_path());
        if !rp.is_file() {
            return Err(missing("rejector", &rp));
        }
        if !cp.is_file() {
            return Err(missing("classifier", &cp));
        }
        let rejector = load_rejector(&rp).at("models")?;
        let classifier = load_classifier(&cp).at("models")?;
        PipelineComponents::new(
            rejector,
            classifier,
            build_expert(tier, &self.partition),
            CoExConfig {
                rate_level: rate,
                seed: self.cfg.seeds.draws,
            },
            self.partition.resolved.clone(),
        )
        .at("models")
    }
}

fn write(dir: &Path, name: &str, text: &str, force: bool) -> CmdResult {
    write_new(&dir.join(name), text, force).at("output")
}

pub fn partition(common: &Common) -> CmdResult {
    let s = setup(common, "partition", SeedSlot::Partition)?;
    let dir = s.out_dir("partition", common.force)?;
    write(&dir, "partition.txt", &s.partition.manifest(), common.force)?;
    s.finish(&dir, common.force)?;
    print!("{}", s.partition.manifest());
    Ok(())
}

pub fn train_rejector(common: &Common) -> CmdResult {
    let s = setup(common, "train-rejector", SeedSlot::Training)?;
    let kind = s.cfg.scorer_kind().at("config")?;
    let train = s.partition.train_samples();
    // fit on even rows, calibrate on odd rows so the threshold is set on
    // samples the scorer has not memorised
    let (fit_rows, calib_rows): (Vec<_>, Vec<_>) = train.iter().enumerate().partition(|(i, _)| i % 2 == 0);
    let fit_rows: Vec<&[f64]> = fit_rows.iter().map(|(_, x)| x.features.as_slice()).collect();
    let calib_rows: Vec<&[f64]> = calib_rows.iter().map(|(_, x)| x.features.as_slice()).collect();
    let model = fit_rejector(&fit_rows, kind, &s.cfg.scorer_hyper())
        .and_then(|m| m.calibrate(&calib_rows, s.cfg.rejector.q))
        .at("train-rejector")?;
    let dir = s.out_dir("train-rejector", common.force)?;
    save_rejector(&dir.join("rejector.model"), &model, common.force).at("output")?;
    s.finish(&dir, common.force)?;
    println!(
        "rejector {kind}: theta_r = {:.6} (q = {}) -> {}",
        model.theta_r.unwrap_or(f64::NAN),
        s.cfg.rejector.q,
        dir.join("rejector.model").display()
    );
    Ok(())
}

pub fn train_classifier(common: &Common) -> CmdResult {
    let s = setup(common, "train-classifier", SeedSlot::Training)?;
    let config = s.cfg.classifier_config().at("config")?;
    let model = fit_classifier(&s.partition.train_samples(), &s.partition.known_classes(), &config).at("train-classifier")?;
    let dir = s.out_dir("train-classifier", common.force)?;
    save_classifier(&dir.join("classifier.model"), &model, common.force).at("output")?;
    write(&dir, "training_curve.csv", &training_curve_csv(&model), common.force)?;
    s.finish(&dir, common.force)?;
    println!(
        "classifier {}: final loss {:.6} after {} epochs -> {}",
        model.kind,
        model.meta.final_loss,
        model.meta.epochs,
        dir.join("classifier.model").display()
    );
    Ok(())
}

pub fn eval_rejector(common: &Common) -> CmdResult {
    let s = setup(common, "eval-rejector", SeedSlot::Draws)?;
    let c = s.components(Tier::T3, RateLevel::None)?;
    let eval = evaluate_rejector(&c.rejector, &s.partition).at("eval-rejector")?;
    let dir = s.out_dir("eval-rejector", common.force)?;
    let doc = serde_json::to_string_pretty(&eval).map_err(Error::from).at("output")?;
    write(&dir, "rejector_eval.json", &(doc + "\n"), common.force)?;
    s.finish(&dir, common.force)?;
    println!(
        "rejector accuracy {:.4}: accepted {}/{} known, deferred {}/{} unknown",
        eval.accuracy, eval.accepted_known, eval.n_known, eval.deferred_unknown, eval.n_unknown
    );
    Ok(())
}

pub fn eval_classifier(common: &Common) -> CmdResult {
    let s = setup(common, "eval-classifier", SeedSlot::Draws)?;
    let c = s.components(Tier::T3, RateLevel::None)?;
    let known = evaluate_classifier(&c.classifier, &s.partition.test_samples(), EvalScope::KnownOnly).at("eval-classifier")?;
    let full = evaluate_classifier(&c.classifier, &s.partition.evaluation_set(), EvalScope::Full).at("eval-classifier")?;
    let dir = s.out_dir("eval-classifier", common.force)?;
    let doc = json!({ "micro_f1_known_test": known, "micro_f1_evaluation_set": full, "evaluation_set": "A-test + B + C" });
    write(&dir, "classifier_eval.json", &format!("{doc:#}\n"), common.force)?;
    s.finish(&dir, common.force)?;
    println!("classifier micro-F1: {:.2}% on A-test, {:.2}% on A-test + B + C", known * 100.0, full * 100.0);
    Ok(())
}

fn run_document(report: &RunReport, classes: &ClassRegistry) -> CmdResult<String> {
    let doc = json!({ "classes": classes.names(), "report": report });
    Ok(format!("{doc:#}\n"))
}

pub fn run_mode(common: &Common, mode: Mode, tier: u8, rate: RateLevel) -> CmdResult {
    let s = setup(common, "run-mode", SeedSlot::Draws)?;
    let tier = Tier::from_number(tier).at("config")?;
    let c = s.components(tier, rate)?;
    let report = run_mode_seeded(&c, mode, &s.partition.evaluation_set(), s.cfg.seeds.draws).at("run-mode")?;
    let dir = s.out_dir(&format!("run-mode-{mode}-t{tier}-r{rate}"), common.force)?;
    write(&dir, "decisions.csv", &report.to_csv(&s.partition.classes), common.force)?;
    write(&dir, "summary.txt", &report.summary(), common.force)?;
    write(&dir, "run.json", &run_document(&report, &s.partition.classes)?, common.force)?;
    s.finish(&dir, common.force)?;
    print!("{}", report.summary());
    Ok(())
}

pub fn grid(common: &Common) -> CmdResult {
    let s = setup(common, "grid", SeedSlot::Draws)?;
    let tiers = s.cfg.tiers().at("config")?;
    let rates = s.cfg.rates().at("config")?;
    let draws = s.cfg.draw_policy().at("config")?;
    let template = s.components(Tier::T3, RateLevel::R4)?;
    let g = run_grid(&s.partition, &template, &tiers, &rates, draws).at("grid")?;
    let dir = s.out_dir("grid", common.force)?;
    write(&dir, "grid.csv", &render_report(ReportInput::Grid(&g), ReportFormat::Csv).at("grid")?, common.force)?;
    let md = render_report(ReportInput::Grid(&g), ReportFormat::Markdown).at("grid")?;
    write(&dir, "grid.md", &md, common.force)?;
    let doc = serde_json::to_string_pretty(&g).map_err(Error::from).at("output")?;
    write(&dir, "grid.json", &(doc + "\n"), common.force)?;
    s.finish(&dir, common.force)?;
    print!("{md}");
    Ok(())
}

fn stub_backend(decision: &str, budget: usize) -> CmdResult<ScriptedBackend> {
    let analysis = "Byte counts and flags differ from the familiar categories; see the feature summary.";
    match decision {
        "normal" | "intrusion" | "caution" => Ok(ScriptedBackend::new(
            [format!("I have weighed the evidence. FINAL: {decision}")],
            [analysis.to_string()],
        )),
        "none" => Ok(ScriptedBackend::undecided(budget)),
        other => Err(Failure {
            stage: "config",
            error: Error::InvalidParameter(format!("--stub-decision must be normal, intrusion, caution or none, got `{other}`")),
        }),
    }
}

pub fn coex_persona(common: &Common, tier: u8, persona: Option<&str>, stub: Option<&str>) -> CmdResult {
    let mut s = setup(common, "coex-persona", SeedSlot::Draws)?;
    let tier = Tier::from_number(tier).at("config")?;
    let c = s.components(tier, RateLevel::None)?;
    let name = persona.unwrap_or(&s.cfg.persona.name).to_string();
    let known: Vec<String> = c
        .expert
        .known_classes
        .iter()
        .filter_map(|&id| s.partition.classes.name(id).map(str::to_string))
        .collect();
    let spec = PersonaSpec::preset(&name, tier, known).at("config")?;

    // escalated group-C samples, the first of each class by id
    let report = run_mode_seeded(&c, Mode::Deferral, &s.partition.evaluation_set(), s.cfg.seeds.draws).at("persona")?;
    let mut seen = std::collections::BTreeSet::new();
    let picks: Vec<_> = report
        .decisions
        .iter()
        .filter(|d| d.stage == Stage::Expert && d.predicted == Prediction::Caution)
        .filter(|d| s.partition.resolved.group_of(d.truth) == Some(Group::C))
        .filter(|d| seen.insert(d.truth))
        .take(s.cfg.persona.samples)
        .cloned()
        .collect();
    if picks.is_empty() {
        return Err(Failure {
            stage: "persona",
            error: Error::Empty("escalated group-C samples"),
        });
    }

    let config = SessionConfig {
        budget: s.cfg.persona.budget,
        analyst_model: s.cfg.persona.analyst_model.clone(),
        collaborator_model: s.cfg.persona.collaborator_model.clone(),
        feature_names: Vec::new(),
        ..SessionConfig::default()
    };
    let mut http = match stub {
        Some(_) => None,
        None => Some(HttpBackend::from_env().at("persona")?),
    };
    if let Some(d) = stub {
        s.manifest.overrides.push(("stub_decision".into(), d.into()));
    }
    let dir = s.out_dir(&format!("coex-persona-{}-t{tier}", name.to_ascii_lowercase()), common.force)?;
    let transcripts = dir.join("transcripts");
    create_output_dir(&transcripts, common.force).at("output")?;

    let by_id: std::collections::BTreeMap<u64, &a2c_core::Sample> =
        s.partition.d_c.iter().map(|x| (x.id, x)).collect();
    let mut rows = String::from("sample_id,class,outcome,s_i\n");
    let mut scores = Vec::new();
    let mut failed = 0;
    for d in &picks {
        let sample = by_id[&d.sample_id];
        let context = d.context.clone().expect("deferred decisions carry context");
        let class = s.partition.classes.name(d.truth).unwrap_or("?").to_string();
        let truth = if class == "normal" { Truth::Normal } else { Truth::Intrusion };
        let mut attempt = 0;
        let transcript = loop {
            attempt += 1;
            let mut scripted;
            let backend: &mut dyn ChatBackend = match (stub, http.as_mut()) {
                (Some(decision), _) => {
                    scripted = stub_backend(decision, config.budget)?;
                    &mut scripted
                }
                (None, Some(h)) => h,
                (None, None) => unreachable!("backend chosen above"),
            };
            match run_persona_session(sample, &context, &spec, backend, &config) {
                Ok(t) => break Some(t),
                Err(f) if f.retryable() && attempt < 3 => log::warn!("{f}; retrying"),
                Err(f) => {
                    log::error!("{f}");
                    let _ = f.transcript.save(&transcripts);
                    break None;
                }
            }
        };
        match transcript {
            Some(t) => {
                t.save(&transcripts).at("output")?;
                let outcome = parse_final_decision(&t);
                let score = score_outcome(outcome, truth);
                scores.push(score);
                let label = match outcome {
                    TriageOutcome::Normal => "normal",
                    TriageOutcome::Intrusion => "intrusion",
                    TriageOutcome::Caution => "caution",
                };
                rows.push_str(&format!("{},{class},{label},{score}\n", d.sample_id));
            }
            None => {
                failed += 1;
                rows.push_str(&format!("{},{class},failed,\n", d.sample_id));
            }
        }
    }
    write(&dir, "outcomes.csv", &rows, common.force)?;
    let summary = match coex_success_rate(&scores) {
        Ok(sr) => format!(
            "persona = {}\ntier = {tier}\nsessions = {}\nfailed = {failed}\ncoex_sr = {:.1}%\n",
            spec.name,
            picks.len(),
            sr * 100.0
        ),
        Err(_) => format!("persona = {}\ntier = {tier}\nsessions = {}\nfailed = {failed}\ncoex_sr = n/a\n", spec.name, picks.len()),
    };
    write(&dir, "summary.txt", &summary, common.force)?;
    s.finish(&dir, common.force)?;
    print!("{summary}");
    Ok(())
}

pub fn report(input: &Path, format: ReportFormat, out: Option<&Path>, force: bool) -> CmdResult {
    let text = fs::read_to_string(input).map_err(|e| Error::Io {
        path: input.to_path_buf(),
        source: e,
    });
    let doc: Value = serde_json::from_str(&text.at("report")?).map_err(Error::from).at("report")?;
    let rendered = if doc.get("cells").is_some() {
        let g: GridResult = serde_json::from_value(doc).map_err(Error::from).at("report")?;
        render_report(ReportInput::Grid(&g), format).at("report")?
    } else if let Some(r) = doc.get("report") {
        let r: RunReport = serde_json::from_value(r.clone()).map_err(Error::from).at("report")?;
        let names: Vec<String> = serde_json::from_value(doc["classes"].clone()).map_err(Error::from).at("report")?;
        render_report(ReportInput::Run(&r, &ClassRegistry::from_names(names)), format).at("report")?
    } else {
        return Err(Failure {
            stage: "report",
            error: Error::UnknownFormat(format!("{} is neither a grid.json nor a run.json", input.display())),
        });
    };
    match out {
        Some(path) => write_new(path, &rendered, force).at("output"),
        None => {
            print!("{rendered}");
            Ok(())
        }
    }
}

pub fn synth_kdd(out: &Path, scale: f64, min: usize, max: usize, seed: u64, force: bool) -> CmdResult {
    if !(scale > 0.0 && scale <= 1.0) {
        return Err(Failure {
            stage: "synth-kdd",
            error: Error::InvalidParameter(format!("--scale must lie in (0, 1], got {scale}")),
        });
    }
    let counts = kdd_scaled_counts(scale, min, max);
    let total: usize = counts.iter().map(|(_, n)| n).sum();
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::Io {
            path: parent.to_path_buf(),
            source: e,
        }).at("output")?;
    }
    write_new(out, &kdd_like_csv(&counts, seed), force).at("output")?;
    println!("wrote {total} records over {} classes to {}", counts.len(), out.display());
    Ok(())
}
