//! Versioned model files and exclusive output creation.
//!
//! A model file is three header lines followed by a canonical JSON body:
//!
//! ```text
//! A2CMODL1
//! kind rejector
//! sha256 <hex digest of the body>
//! {"dimension":2,...}
//! ```
//!
//! The body has sorted keys and LF line endings, so equal models give
//! byte-identical files.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::classifier::ClassifierModel;
use crate::error::{Error, Result};
use crate::rejector::RejectorModel;

pub const MAGIC: &str = "A2CMODL1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Rejector,
    Classifier,
}

impl ModelKind {
    pub fn tag(self) -> &'static str {
        match self {
            ModelKind::Rejector => "rejector",
            ModelKind::Classifier => "classifier",
        }
    }

    fn from_tag(tag: &str) -> Result<Self> {
        match tag {
            "rejector" => Ok(ModelKind::Rejector),
            "classifier" => Ok(ModelKind::Classifier),
            other => Err(Error::Version(format!("unknown model kind `{other}`"))),
        }
    }
}

/// Serializes through `serde_json::Value`, whose maps are ordered.
pub fn canonical_json<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value)?;
    Ok(serde_json::to_string(&v)?)
}

fn digest(body: &str) -> String {
    hex::encode(Sha256::digest(body.as_bytes()))
}

pub fn encode_model<T: Serialize>(kind: ModelKind, model: &T) -> Result<String> {
    let body = canonical_json(model)?;
    Ok(format!("{MAGIC}\nkind {}\nsha256 {}\n{body}\n", kind.tag(), digest(&body)))
}

pub fn decode_model<T: DeserializeOwned>(text: &str, expected: ModelKind) -> Result<T> {
    let mut lines = text.splitn(4, '\n');
    let magic = lines.next().unwrap_or_default();
    if magic != MAGIC {
        return Err(if magic.starts_with("A2CMODL") {
            Error::Version(format!("file version `{magic}`, this build reads `{MAGIC}`"))
        } else {
            Error::Corrupted("missing model header".into())
        });
    }
    let kind = lines
        .next()
        .and_then(|l| l.strip_prefix("kind "))
        .ok_or_else(|| Error::Corrupted("missing kind line".into()))?;
    let kind = ModelKind::from_tag(kind)?;
    if kind != expected {
        return Err(Error::Config(format!("expected a {} model, found a {} model", expected.tag(), kind.tag())));
    }
    let sum = lines
        .next()
        .and_then(|l| l.strip_prefix("sha256 "))
        .ok_or_else(|| Error::Corrupted("missing checksum line".into()))?;
    let body = lines
        .next()
        .and_then(|b| b.strip_suffix('\n'))
        .ok_or_else(|| Error::Corrupted("truncated body".into()))?;
    if digest(body) != sum {
        return Err(Error::Corrupted("checksum mismatch".into()));
    }
    serde_json::from_str(body).map_err(|e| Error::Corrupted(format!("body does not decode: {e}")))
}

/// Creates `path` and fails if it already exists, unless `force`.
pub fn write_new(path: &Path, contents: &str, force: bool) -> Result<()> {
    let mut opts = OpenOptions::new();
    opts.write(true);
    if force {
        opts.create(true).truncate(true);
    } else {
        opts.create_new(true);
    }
    let mut f = opts.open(path).map_err(|e| Error::io(path, e))?;
    f.write_all(contents.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Creates an output directory. An existing directory is an error unless
/// `force`, in which case it is reused.
pub fn create_output_dir(path: &Path, force: bool) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    match fs::create_dir(path) {
        Ok(()) => Ok(()),
        Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists && force && path.is_dir() => Ok(()),
        Err(e) => Err(Error::io(path, e)),
    }
}

pub fn save_model<T: Serialize>(path: &Path, kind: ModelKind, model: &T, force: bool) -> Result<()> {
    write_new(path, &encode_model(kind, model)?, force)
}

pub fn load_model<T: DeserializeOwned>(path: &Path, kind: ModelKind) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    decode_model(&text, kind)
}

pub fn save_rejector(path: &Path, model: &RejectorModel, force: bool) -> Result<()> {
    save_model(path, ModelKind::Rejector, model, force)
}

pub fn load_rejector(path: &Path) -> Result<RejectorModel> {
    load_model(path, ModelKind::Rejector)
}

pub fn save_classifier(path: &Path, model: &ClassifierModel, force: bool) -> Result<()> {
    save_model(path, ModelKind::Classifier, model, force)
}

pub fn load_classifier(path: &Path) -> Result<ClassifierModel> {
    load_model(path, ModelKind::Classifier)
}
