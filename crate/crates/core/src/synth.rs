//! Synthetic data generators for tests, demos and the desk-scale KDD run.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::data::{kdd_column_names, ClassRegistry, Dataset, Sample, KDD_CATEGORICAL_COLUMNS};

#[derive(Debug, Clone)]
pub struct ClusterSpec {
    pub name: String,
    pub mean: Vec<f64>,
    pub sd: f64,
    pub count: usize,
}

/// Isotropic Gaussian clusters, one class per cluster. Sample ids follow
/// generation order; features are left in raw units.
pub fn gaussian_clusters(specs: &[ClusterSpec], seed: u64) -> Dataset {
    let dim = specs.first().map_or(0, |s| s.mean.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut classes = ClassRegistry::default();
    let mut samples = Vec::new();
    for spec in specs {
        assert_eq!(spec.mean.len(), dim, "cluster `{}` has wrong dimension", spec.name);
        let label = classes.intern(&spec.name);
        for _ in 0..spec.count {
            let features = spec
                .mean
                .iter()
                .map(|m| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    m + spec.sd * z
                })
                .collect();
            samples.push(Sample {
                id: samples.len() as u64,
                features,
                label: Some(label),
            });
        }
    }
    Dataset {
        samples,
        classes,
        feature_names: (0..dim).map(|i| format!("x{i}")).collect(),
    }
}

/// `n_classes` unit-variance clusters whose centres sit `separation` standard
/// deviations apart along distinct coordinate axes (scaled by 1/√2 so the
/// pairwise centre distance equals `separation`).
pub fn separated_clusters(
    names: &[&str],
    per_class: usize,
    dim: usize,
    separation: f64,
    seed: u64,
) -> Dataset {
    assert!(dim >= names.len(), "need one axis per class");
    let specs: Vec<ClusterSpec> = names
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let mut mean = vec![0.0; dim];
            mean[i] = separation / std::f64::consts::SQRT_2;
            ClusterSpec {
                name: name.to_string(),
                mean,
                sd: 1.0,
                count: per_class,
            }
        })
        .collect();
    gaussian_clusters(&specs, seed)
}

/// Record counts of the KDD Cup 99 10% training file, by label.
pub const KDD_TEN_PERCENT_COUNTS: [(&str, usize); 23] = [
    ("smurf", 280_790),
    ("neptune", 107_201),
    ("normal", 97_278),
    ("back", 2_203),
    ("satan", 1_589),
    ("ipsweep", 1_247),
    ("portsweep", 1_040),
    ("warezclient", 1_020),
    ("teardrop", 979),
    ("pod", 264),
    ("nmap", 231),
    ("guess_passwd", 53),
    ("buffer_overflow", 30),
    ("land", 21),
    ("warezmaster", 20),
    ("imap", 12),
    ("rootkit", 10),
    ("loadmodule", 9),
    ("ftp_write", 8),
    ("multihop", 7),
    ("phf", 4),
    ("perl", 3),
    ("spy", 2),
];

struct KddProfile {
    protocol: &'static str,
    services: &'static [&'static str],
    flag: &'static str,
}

fn kdd_profile(label: &str) -> KddProfile {
    let p = |protocol, services, flag| KddProfile {
        protocol,
        services,
        flag,
    };
    match label {
        "smurf" | "pod" => p("icmp", &["ecr_i"], "SF"),
        "ipsweep" => p("icmp", &["eco_i", "ecr_i"], "SF"),
        "nmap" => p("icmp", &["eco_i", "private"], "SF"),
        "satan" => p("tcp", &["private", "other", "telnet"], "REJ"),
        "portsweep" => p("tcp", &["private", "other"], "RSTR"),
        "neptune" => p("tcp", &["private", "other", "telnet", "http"], "S0"),
        "teardrop" => p("udp", &["private"], "SF"),
        "land" => p("tcp", &["finger", "telnet"], "S0"),
        "back" => p("tcp", &["http"], "SF"),
        "guess_passwd" | "rootkit" | "buffer_overflow" | "loadmodule" | "perl" => {
            p("tcp", &["telnet"], "SF")
        }
        "imap" => p("tcp", &["imap4"], "SH"),
        "phf" => p("tcp", &["http"], "SF"),
        "warezclient" | "warezmaster" | "ftp_write" | "spy" | "multihop" => {
            p("tcp", &["ftp_data", "ftp"], "SF")
        }
        _ => p("tcp", &["http", "smtp", "domain_u", "ftp_data"], "SF"),
    }
}

/// Number of rows per class for a scaled-down KDD file: `ceil(count·scale)`
/// clamped to `[min_per_class, max_per_class]`.
pub fn kdd_scaled_counts(scale: f64, min_per_class: usize, max_per_class: usize) -> Vec<(&'static str, usize)> {
    KDD_TEN_PERCENT_COUNTS
        .iter()
        .map(|&(name, n)| {
            let scaled = (n as f64 * scale).ceil() as usize;
            (name, scaled.clamp(min_per_class, max_per_class.max(min_per_class)))
        })
        .collect()
}

/// Emits headerless KDD-format records (41 fields plus a dotted label).
///
/// Each class gets a fixed symbolic profile and a numeric prototype drawn
/// from a class-keyed generator; rows jitter around the prototype. Rows are
/// shuffled so labels interleave as they do in the real capture.
pub fn kdd_like_csv(counts: &[(&str, usize)], seed: u64) -> String {
    let columns = kdd_column_names();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows: Vec<String> = Vec::new();
    for (class_idx, &(label, n)) in counts.iter().enumerate() {
        let profile = kdd_profile(label);
        let mut proto_rng = ChaCha8Rng::seed_from_u64(0x6b64_6400 ^ (class_idx as u64).wrapping_mul(0x9E37_79B9));
        let prototype: Vec<f64> = columns
            .iter()
            .map(|name| {
                if name.ends_with("_rate") {
                    if proto_rng.random_bool(0.5) {
                        proto_rng.random_range(0.0..1.0)
                    } else {
                        0.0
                    }
                } else if name.ends_with("count") {
                    proto_rng.random_range(0.0..511.0f64).round()
                } else if name.ends_with("bytes") {
                    proto_rng.random_range(0.0..9.0f64).exp().round()
                } else if proto_rng.random_bool(0.2) {
                    proto_rng.random_range(1.0..5.0f64).round()
                } else {
                    0.0
                }
            })
            .collect();
        for _ in 0..n {
            let mut fields: Vec<String> = Vec::with_capacity(columns.len() + 1);
            for (col, name) in columns.iter().enumerate() {
                match KDD_CATEGORICAL_COLUMNS.iter().position(|&c| c == col) {
                    Some(0) => fields.push(profile.protocol.into()),
                    Some(1) => {
                        let s = profile.services[rng.random_range(0..profile.services.len())];
                        fields.push(s.into());
                    }
                    Some(_) => fields.push(profile.flag.into()),
                    None => {
                        let base = prototype[col];
                        let v = if name.ends_with("_rate") {
                            let noise = Normal::new(0.0, 0.04).unwrap().sample(&mut rng);
                            format!("{:.2}", (base + noise).clamp(0.0, 1.0))
                        } else {
                            let sd = 0.08 * base + 0.3;
                            let noise = Normal::new(0.0, sd).unwrap().sample(&mut rng);
                            format!("{}", (base + noise).max(0.0).round())
                        };
                        fields.push(v);
                    }
                }
            }
            fields.push(format!("{label}."));
            rows.push(fields.join(","));
        }
    }
    // Fisher-Yates with the row generator so output is seed-determined.
    for i in (1..rows.len()).rev() {
        let j = rng.random_range(0..=i);
        rows.swap(i, j);
    }
    let mut out = String::with_capacity(rows.iter().map(|r| r.len() + 1).sum());
    for r in rows {
        let _ = writeln!(out, "{r}");
    }
    out
}
