//! Scoring, the tier × rate grid and its closed-form expectation.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::coex::{DrawTable, RateLevel};
use crate::data::{ClassRegistry, DatasetPartition, Group, Sample};
use crate::decision::Prediction;
use crate::error::{Error, Result};
use crate::expert::Tier;
use crate::pipeline::{run_mode, Mode, PipelineComponents, RunReport};

/// Correct over total; `Caution` is never correct.
pub fn micro_f1(pairs: &[(usize, Prediction)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Empty("micro-F1 input"));
    }
    let correct = pairs.iter().filter(|(t, p)| p.is_correct(*t)).count();
    Ok(correct as f64 / pairs.len() as f64)
}

/// Pipeline accuracy factorised into rejector and classifier rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct ComponentRates {
    pub p_acc_A: f64,
    pub p_def_B: f64,
    pub p_def_C: f64,
    /// Classifier accuracy on the accepted part of the known test set.
    pub a_known: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupSizes {
    pub n_a: usize,
    pub n_b: usize,
    pub n_c: usize,
}

impl GroupSizes {
    pub fn total(&self) -> usize {
        self.n_a + self.n_b + self.n_c
    }

    pub fn of(&self, g: Group) -> usize {
        match g {
            Group::A => self.n_a,
            Group::B => self.n_b,
            Group::C => self.n_c,
        }
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl ComponentRates {
    pub fn perfect() -> Self {
        ComponentRates {
            p_acc_A: 1.0,
            p_def_B: 1.0,
            p_def_C: 1.0,
            a_known: 1.0,
        }
    }

    /// Measures the rates on the partition's evaluation groups.
    pub fn measure(components: &PipelineComponents, partition: &DatasetPartition) -> Result<(Self, GroupSizes)> {
        let known = partition.test_samples();
        let mut accepted = 0;
        let mut correct = 0;
        for s in &known {
            if components.rejector.decide(&s.features)?.accepted() {
                accepted += 1;
                if components.classifier.predict(&s.features)? == s.label()? {
                    correct += 1;
                }
            }
        }
        let deferred = |samples: &[Sample]| -> Result<usize> {
            let mut n = 0;
            for s in samples {
                n += !components.rejector.decide(&s.features)?.accepted() as usize;
            }
            Ok(n)
        };
        let rates = ComponentRates {
            p_acc_A: ratio(accepted, known.len()),
            p_def_B: ratio(deferred(&partition.d_b)?, partition.d_b.len()),
            p_def_C: ratio(deferred(&partition.d_c)?, partition.d_c.len()),
            a_known: ratio(correct, accepted),
        };
        let sizes = GroupSizes {
            n_a: known.len(),
            n_b: partition.d_b.len(),
            n_c: partition.d_c.len(),
        };
        Ok((rates, sizes))
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("p_acc_A", self.p_acc_A),
            ("p_def_B", self.p_def_B),
            ("p_def_C", self.p_def_C),
            ("a_known", self.a_known),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidParameter(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        Ok(())
    }
}

/// Expected micro-F1 of a grid cell. Accepted unknowns are always wrong;
/// a deferred sample is right when the tier covers its group and otherwise
/// with the resolve probability of `rate` (0 for `None`).
pub fn expected_grid_oracle(rates: &ComponentRates, sizes: GroupSizes, tier: Tier, rate: RateLevel) -> Result<f64> {
    rates.validate()?;
    if sizes.total() == 0 {
        return Err(Error::Empty("oracle group sizes"));
    }
    let rho = rate.resolve_prob();
    let e = |known: bool| if known { 1.0 } else { rho };
    let (n_a, n_b, n_c) = (sizes.n_a as f64, sizes.n_b as f64, sizes.n_c as f64);
    let correct = n_a * (rates.p_acc_A * rates.a_known + (1.0 - rates.p_acc_A) * e(tier.knows_a()))
        + n_b * rates.p_def_B * e(tier.knows_b())
        + n_c * rates.p_def_C * e(false);
    Ok(correct / sizes.total() as f64)
}

/// Per-cell tolerance for stochastic draws: `3·sqrt(p(1-p)/n)`.
pub fn three_sigma(p: f64, n: usize) -> f64 {
    3.0 * (p * (1.0 - p) / n as f64).sqrt()
}

/// How collaborative escalations get their uniform draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "lowercase")]
pub enum DrawPolicy {
    /// One generator stream per sample id.
    Seeded { seed: u64 },
    /// `(j + 0.5) / m` over each group's deferred samples in id order, so
    /// exactly `ρ·m` of them resolve whenever that is an integer.
    Stratified,
}

impl fmt::Display for DrawPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DrawPolicy::Seeded { seed } => write!(f, "seeded({seed})"),
            DrawPolicy::Stratified => f.write_str("stratified"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub tier: Tier,
    pub rate_level: RateLevel,
    pub micro_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    /// Tier-major, rate-minor.
    pub cells: Vec<GridCell>,
    pub rates: ComponentRates,
    pub sizes: GroupSizes,
    pub n_eval: usize,
    pub draws: DrawPolicy,
}

impl GridResult {
    pub fn get(&self, tier: Tier, rate_level: RateLevel) -> Option<f64> {
        self.cells
            .iter()
            .find(|c| c.tier == tier && c.rate_level == rate_level)
            .map(|c| c.micro_f1)
    }

    pub fn oracle(&self, tier: Tier, rate_level: RateLevel) -> Result<f64> {
        expected_grid_oracle(&self.rates, self.sizes, tier, rate_level)
    }

    fn check(&self) -> Result<()> {
        if self.cells.is_empty() {
            return Err(Error::Empty("grid result"));
        }
        if let Some(c) = self.cells.iter().find(|c| !(0.0..=1.0).contains(&c.micro_f1)) {
            return Err(Error::InvalidParameter(format!(
                "grid cell t={} r={} holds {}",
                c.tier, c.rate_level, c.micro_f1
            )));
        }
        Ok(())
    }
}

pub fn draw_table(policy: DrawPolicy, components: &PipelineComponents, samples: &[&Sample]) -> Result<DrawTable> {
    match policy {
        DrawPolicy::Seeded { seed } => Ok(DrawTable::seeded(seed, samples.iter().map(|s| s.id))),
        DrawPolicy::Stratified => {
            let mut groups: BTreeMap<Group, Vec<u64>> = BTreeMap::new();
            let mut accepted = Vec::new();
            for s in samples {
                let g = components.assignment.group_of(s.label()?).ok_or_else(|| {
                    Error::InvalidParameter(format!("sample {} is outside every class group", s.id))
                })?;
                if components.rejector.decide(&s.features)?.accepted() {
                    accepted.push(s.id);
                } else {
                    groups.entry(g).or_default().push(s.id);
                }
            }
            let mut lists: Vec<Vec<u64>> = groups.into_values().collect();
            // accepted samples never reach CoEx; give them draws anyway so
            // every id has one
            lists.push(accepted);
            for l in &mut lists {
                l.sort_unstable();
            }
            Ok(DrawTable::stratified(&lists))
        }
    }
}

/// One `run_mode` per (tier, rate) cell over `A-test ∪ B ∪ C`, all cells
/// sharing the same models and draw table. `None` cells run in deferral mode.
pub fn run_grid(
    partition: &DatasetPartition,
    template: &PipelineComponents,
    tiers: &[Tier],
    rates: &[RateLevel],
    draws: DrawPolicy,
) -> Result<GridResult> {
    if tiers.is_empty() || rates.is_empty() {
        return Err(Error::InvalidParameter("grid needs at least one tier and one rate level".into()));
    }
    let samples = partition.evaluation_set();
    if samples.is_empty() {
        return Err(Error::Empty("grid evaluation set"));
    }
    let table = draw_table(draws, template, &samples)?;
    let (component_rates, sizes) = ComponentRates::measure(template, partition)?;

    let keys: Vec<(Tier, RateLevel)> = tiers.iter().flat_map(|&t| rates.iter().map(move |&r| (t, r))).collect();
    let outcomes: Vec<Result<RunReport>> = std::thread::scope(|scope| {
        let handles: Vec<_> = keys
            .iter()
            .map(|&(t, r)| {
                let samples = &samples;
                let table = &table;
                scope.spawn(move || {
                    let comps = template.with_tier(t).with_rate(r);
                    let mode = if r == RateLevel::None { Mode::Deferral } else { Mode::Collaborative };
                    run_mode(&comps, mode, samples, table)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("grid cell thread panicked"))
            .collect()
    });

    let mut cells = Vec::with_capacity(keys.len());
    for ((tier, rate_level), outcome) in keys.into_iter().zip(outcomes) {
        let report = outcome?;
        log::debug!("grid cell t={tier} r={rate_level}: {:.4}", report.micro_f1);
        cells.push(GridCell {
            tier,
            rate_level,
            micro_f1: report.micro_f1,
        });
    }
    Ok(GridResult {
        cells,
        rates: component_rates,
        sizes,
        n_eval: samples.len(),
        draws,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            other => Err(Error::InvalidParameter(format!("unknown report format `{other}`"))),
        }
    }
}

pub enum ReportInput<'a> {
    Grid(&'a GridResult),
    Run(&'a RunReport, &'a ClassRegistry),
}

fn pct(v: f64) -> String {
    format!("{:.2}", v * 100.0)
}

pub fn render_report(input: ReportInput<'_>, format: ReportFormat) -> Result<String> {
    match (input, format) {
        (ReportInput::Grid(g), ReportFormat::Csv) => {
            g.check()?;
            let mut out = String::from("tier,rate_level,micro_f1,n_eval,p_acc_A,p_def_B,p_def_C,a_known\n");
            for c in &g.cells {
                let _ = writeln!(
                    out,
                    "{},{},{:.6},{},{:.6},{:.6},{:.6},{:.6}",
                    c.tier, c.rate_level, c.micro_f1, g.n_eval, g.rates.p_acc_A, g.rates.p_def_B, g.rates.p_def_C, g.rates.a_known
                );
            }
            Ok(out)
        }
        (ReportInput::Grid(g), ReportFormat::Markdown) => {
            g.check()?;
            let mut out = String::from("| t | ∅ | 1 | 2 | 3 | 4 |\n|---|---|---|---|---|---|\n");
            for t in Tier::ALL {
                let _ = write!(out, "| {t} |");
                for r in RateLevel::ALL {
                    let cell = g.get(t, r).map_or_else(|| "-".to_string(), pct);
                    let _ = write!(out, " {cell} |");
                }
                out.push('\n');
            }
            let _ = writeln!(
                out,
                "\nMicro-F1 (%) on A-test + B + C, n = {} ({} / {} / {}), draws: {}.",
                g.n_eval, g.sizes.n_a, g.sizes.n_b, g.sizes.n_c, g.draws
            );
            Ok(out)
        }
        (ReportInput::Run(r, classes), ReportFormat::Csv) => Ok(r.to_csv(classes)),
        (ReportInput::Run(r, _), ReportFormat::Markdown) => {
            let mut out = format!(
                "**mode** {} · **t** {} · **r** {} · **micro-F1** {}%\n\n| stage | samples | correct |\n|---|---|---|\n",
                r.mode,
                r.tier,
                r.rate_level,
                pct(r.micro_f1)
            );
            for (stage, c) in &r.stages {
                let _ = writeln!(out, "| {stage} | {} | {} |", c.total, c.correct);
            }
            Ok(out)
        }
    }
}
