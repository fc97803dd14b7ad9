use a2c_core::classifier::{fit_classifier, ClassifierConfig, ClassifierKind};
use a2c_core::coex::{CoExConfig, DrawTable, RateLevel};
use a2c_core::data::{partition_dataset, split_known, ClassAssignment, DatasetPartition, PartitionOptions, Sample};
use a2c_core::decision::{Prediction, Stage};
use a2c_core::expert::{build_expert, Tier};
use a2c_core::metrics::{render_report, run_grid, DrawPolicy, ReportFormat, ReportInput};
use a2c_core::persist::{load_classifier, load_rejector, save_classifier, save_rejector};
use a2c_core::pipeline::{run_mode, Mode, PipelineComponents};
use a2c_core::rejector::{fit_rejector, RejectorModel, ScorerHyper, ScorerKind};
use a2c_core::synth::separated_clusters;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn partition(assignment: ClassAssignment, names: &[&str], sep: f64) -> DatasetPartition {
    let ds = separated_clusters(names, 120, names.len(), sep, 31);
    split_known(partition_dataset(&ds, &assignment, &PartitionOptions::default()).unwrap(), 0.8, 31).unwrap()
}

fn seven() -> DatasetPartition {
    partition(
        ClassAssignment::new(["a0", "a1", "a2"], ["b0", "b1"], ["c0", "c1"]),
        &["a0", "a1", "a2", "b0", "b1", "c0", "c1"],
        3.0,
    )
}

fn rejector(p: &DatasetPartition, kind: ScorerKind) -> RejectorModel {
    let rows: Vec<&[f64]> = p.train_samples().iter().map(|s| s.features.as_slice()).collect();
    fit_rejector(&rows, kind, &ScorerHyper::default()).unwrap().calibrate(&rows, 0.1).unwrap()
}

fn components(p: &DatasetPartition, rejector: RejectorModel) -> PipelineComponents {
    let config = ClassifierConfig {
        kind: ClassifierKind::OneHiddenLayer { hidden: 5 },
        epochs: 60,
        ..ClassifierConfig::default()
    };
    let classifier = fit_classifier(&p.train_samples(), &p.known_classes(), &config).unwrap();
    PipelineComponents::new(
        rejector,
        classifier,
        build_expert(Tier::T3, p),
        CoExConfig::new(RateLevel::R2),
        p.resolved.clone(),
    )
    .unwrap()
}

#[test]
fn saved_models_predict_identically() {
    let p = seven();
    let c = components(&p, rejector(&p, ScorerKind::KnnDistance));
    let dir = tempfile::tempdir().unwrap();
    save_rejector(&dir.path().join("r.model"), &c.rejector, false).unwrap();
    save_classifier(&dir.path().join("c.model"), &c.classifier, false).unwrap();
    let r = load_rejector(&dir.path().join("r.model")).unwrap();
    let m = load_classifier(&dir.path().join("c.model")).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let x: Vec<f64> = (0..p.dimension).map(|_| rng.random_range(-4.0..4.0)).collect();
        assert_eq!(m.predict_proba(&x).unwrap(), c.classifier.predict_proba(&x).unwrap());
        assert_eq!(r.decide(&x).unwrap(), c.rejector.decide(&x).unwrap());
    }
}

/// Counts the expected correct decisions by walking every sample through the
/// stage rules directly.
fn brute_force_correct(c: &PipelineComponents, samples: &[&Sample], draws: &DrawTable, mode: Mode) -> usize {
    let rho = c.coex.rate_level.resolve_prob();
    samples
        .iter()
        .filter(|s| {
            let y = s.label.unwrap();
            if mode == Mode::Automation || c.rejector.decide(&s.features).unwrap().accepted() {
                return c.classifier.predict(&s.features).unwrap() == y;
            }
            c.expert.knows(y) || (mode == Mode::Collaborative && draws.get(s.id).unwrap() < rho)
        })
        .count()
}

#[test]
fn every_mode_matches_brute_force_routing() {
    let p = seven();
    let base = components(&p, rejector(&p, ScorerKind::PcaReconstruction));
    let samples = p.evaluation_set();
    let draws = DrawTable::seeded(77, samples.iter().map(|s| s.id));
    for tier in Tier::ALL {
        for rate in [RateLevel::R1, RateLevel::R3] {
            let c = base.with_tier(tier).with_rate(rate);
            for mode in [Mode::Automation, Mode::Deferral, Mode::Collaborative] {
                let r = run_mode(&c, mode, &samples, &draws).unwrap();
                let want = brute_force_correct(&c, &samples, &draws, mode);
                assert_eq!(r.decisions.iter().filter(|d| d.is_correct()).count(), want, "{tier} {rate} {mode}");
                assert!(r.decisions.windows(2).all(|w| w[0].sample_id < w[1].sample_id));
                for d in &r.decisions {
                    if d.stage == Stage::CoExUnresolved {
                        assert_eq!(d.predicted, Prediction::Caution);
                    }
                }
            }
        }
    }
}

#[test]
fn grid_without_unknown_groups_is_flat_when_nothing_is_deferred() {
    let p = partition(ClassAssignment::new(["a0", "a1", "a2"], Vec::<&str>::new(), Vec::<&str>::new()), &["a0", "a1", "a2"], 4.0);
    let accept_all = rejector(&p, ScorerKind::Centroid).with_threshold(f64::NEG_INFINITY);
    let g = run_grid(&p, &components(&p, accept_all), &Tier::ALL, &RateLevel::ALL, DrawPolicy::Seeded { seed: 0 }).unwrap();
    let first = g.cells[0].micro_f1;
    assert_eq!(g.cells.len(), 15);
    assert!(g.cells.iter().all(|c| c.micro_f1 == first));
    assert_eq!(g.sizes.n_b + g.sizes.n_c, 0);
}

#[test]
fn grid_reports_and_determinism() {
    let p = seven();
    let c = components(&p, rejector(&p, ScorerKind::Centroid));
    let a = run_grid(&p, &c, &Tier::ALL, &RateLevel::ALL, DrawPolicy::Seeded { seed: 5 }).unwrap();
    let b = run_grid(&p, &c, &Tier::ALL, &RateLevel::ALL, DrawPolicy::Seeded { seed: 5 }).unwrap();
    let csv = render_report(ReportInput::Grid(&a), ReportFormat::Csv).unwrap();
    assert_eq!(csv, render_report(ReportInput::Grid(&b), ReportFormat::Csv).unwrap());
    assert_eq!(csv.lines().count(), 16);
    let md = render_report(ReportInput::Grid(&a), ReportFormat::Markdown).unwrap();
    assert_eq!(md.lines().filter(|l| l.starts_with("| ")).count(), 4);

    let samples = p.evaluation_set();
    let run = run_mode(&c, Mode::Deferral, &samples, &DrawTable::default()).unwrap();
    let csv = render_report(ReportInput::Run(&run, &p.classes), ReportFormat::Csv).unwrap();
    assert!(csv.starts_with("sample_id,true,predicted,stage,s_i\n"));
    assert_eq!(csv.lines().count(), samples.len() + 1);
}
