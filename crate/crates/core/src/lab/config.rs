use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::lab::pgm::load_pgm;
use crate::lab::synth::{gen_face_proxy_tasks, gen_masked_test_images, gen_signal, gen_test_image, half_mask};
use crate::meta::TaskSet;
use crate::model::{build_model, load_model, InrModel, LayerSpec, MappingSpec};
use crate::numkit::SeededRng;
use crate::train::Dataset;

/// A model either loaded from a saved file or built from specs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelSource {
    File { path: PathBuf },
    Build { mapping: MappingSpec, layers: Vec<LayerSpec>, seed: u64 },
}

impl ModelSource {
    pub fn load(&self) -> Result<InrModel> {
        match self {
            ModelSource::File { path } => load_model(path),
            ModelSource::Build { mapping, layers, seed } => {
                build_model(mapping.clone(), layers.clone(), &mut SeededRng::new(*seed))
            }
        }
    }

    fn paths(&self) -> Vec<&Path> {
        match self {
            ModelSource::File { path } => vec![path.as_path()],
            ModelSource::Build { .. } => Vec::new(),
        }
    }
}

/// Where a single signal or image comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DataSource {
    /// Synthetic composite image; `mask_seed` adds a random 50% split.
    TestImage {
        size: usize,
        seed: u64,
        #[serde(default)]
        mask_seed: Option<u64>,
    },
    Signal { f: f64, fs: f64, n: usize },
    Pgm {
        path: PathBuf,
        #[serde(default)]
        mask_seed: Option<u64>,
    },
}

impl DataSource {
    pub fn load(&self) -> Result<Dataset> {
        let (mut data, mask_seed) = match self {
            DataSource::TestImage { size, seed, mask_seed } => (gen_test_image(*size, *seed)?, *mask_seed),
            DataSource::Signal { f, fs, n } => (gen_signal(*f, *fs, *n)?, None),
            DataSource::Pgm { path, mask_seed } => (load_pgm(path)?, *mask_seed),
        };
        if let Some(seed) = mask_seed {
            let n = data.len();
            data.set_mask(half_mask(n, &mut SeededRng::new(seed))?)?;
        }
        Ok(data)
    }

    fn paths(&self) -> Vec<&Path> {
        match self {
            DataSource::Pgm { path, .. } => vec![path.as_path()],
            _ => Vec::new(),
        }
    }
}

/// A collection of same-size images.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TaskSource {
    FaceProxy { count: usize, size: usize, seed: u64 },
    TestImages { count: usize, size: usize, seed: u64 },
    /// Every `.pgm` file in a directory, sorted by name, with a shared 50%
    /// mask drawn from `mask_seed`.
    PgmDir { path: PathBuf, mask_seed: u64 },
}

impl TaskSource {
    pub fn load(&self) -> Result<TaskSet> {
        match self {
            TaskSource::FaceProxy { count, size, seed } => gen_face_proxy_tasks(*count, *size, *seed),
            TaskSource::TestImages { count, size, seed } => TaskSet::new(
                gen_masked_test_images(*count, *size, *seed)?,
                format!("test-images size={size} seed={seed}"),
            ),
            TaskSource::PgmDir { path, mask_seed } => {
                let mut files: Vec<PathBuf> = std::fs::read_dir(path)?
                    .filter_map(|e| e.ok().map(|e| e.path()))
                    .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("pgm")))
                    .collect();
                files.sort();
                let mut tasks = files.iter().map(load_pgm).collect::<Result<Vec<_>>>()?;
                if let Some(first) = tasks.first() {
                    let mask = half_mask(first.len(), &mut SeededRng::new(*mask_seed))?;
                    for t in &mut tasks {
                        if t.len() != mask.len() {
                            return Err(Error::Validation(format!("{} differs in size from the first image", t.metadata)));
                        }
                        t.set_mask(mask.clone())?;
                    }
                }
                TaskSet::new(tasks, path.display().to_string())
            }
        }
    }

    fn paths(&self) -> Vec<&Path> {
        match self {
            TaskSource::PgmDir { path, .. } => vec![path.as_path()],
            _ => Vec::new(),
        }
    }
}

/// Fails with a configuration error naming the first missing path.
pub fn check_paths<'a>(paths: impl IntoIterator<Item = &'a Path>) -> Result<()> {
    for p in paths {
        if !p.exists() {
            return Err(Error::Config(format!("path {} does not exist", p.display())));
        }
    }
    Ok(())
}

pub(crate) fn model_paths(src: &ModelSource) -> Vec<&Path> {
    src.paths()
}

pub(crate) fn data_paths(src: &DataSource) -> Vec<&Path> {
    src.paths()
}

pub(crate) fn task_paths(src: &TaskSource) -> Vec<&Path> {
    src.paths()
}

/// Parses a JSON config document, mapping serde failures to parse errors
/// with line and column.
pub fn parse_json<T: serde::de::DeserializeOwned>(text: &str, origin: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| {
        let category = if e.is_data() { "invalid value" } else { "malformed JSON" };
        let context = if e.line() == 0 {
            origin.to_string()
        } else {
            format!("{origin}:{}:{}", e.line(), e.column())
        };
        Error::parse(context, format!("{category}: {e}"))
    })
}

/// Hex SHA-256 prefix of a config document's canonical JSON encoding.
pub fn config_hash<T: Serialize>(config: &T) -> String {
    let bytes = serde_json::to_vec(config).expect("config serializes");
    let digest = Sha256::digest(&bytes);
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sources_round_trip_through_json() {
        let src = DataSource::TestImage { size: 32, seed: 4, mask_seed: Some(1) };
        let json = serde_json::to_string(&src).unwrap();
        assert_eq!(parse_json::<DataSource>(&json, "cfg").unwrap(), src);
        let data = src.load().unwrap();
        assert_eq!(data.train_indices().len(), 512);
    }

    #[test]
    fn unknown_fields_are_rejected_with_location() {
        let err = parse_json::<DataSource>("{\"kind\":\"signal\",\"f\":1,\"fs\":2,\"n\":3,\"x\":1}", "cfg").unwrap_err();
        match err {
            Error::Parse { context, message } => {
                assert!(context.starts_with("cfg"));
                assert!(message.contains("`x`"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
        let err = parse_json::<crate::meta::MetaConfig>("{\n  \"inner_lr\": 0.1,\n  \"bogus\": 1\n}", "cfg").unwrap_err();
        match err {
            Error::Parse { context, .. } => assert!(context.starts_with("cfg:3:"), "{context}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_paths_are_config_errors() {
        let src = DataSource::Pgm { path: "/nonexistent/x.pgm".into(), mask_seed: None };
        assert!(matches!(check_paths(data_paths(&src)), Err(Error::Config(_))));
    }

    #[test]
    fn hash_is_stable() {
        let a = config_hash(&TaskSource::FaceProxy { count: 2, size: 16, seed: 0 });
        assert_eq!(a, config_hash(&TaskSource::FaceProxy { count: 2, size: 16, seed: 0 }));
        assert_ne!(a, config_hash(&TaskSource::FaceProxy { count: 2, size: 16, seed: 1 }));
        assert_eq!(a.len(), 16);
    }
}
