//! Text model files.
//!
//! ```text
//! format_version = 1
//! mapping = {"kind":"siren-first","omega0":30.0,"width":64,"input_dim":2,"trainable":true}
//! layers = [{"width":64,"activation":{"kind":"sine","omega0":30.0}},...]
//! trainable_mapping = true
//! parameter_count = 4417
//! frozen_count = 0
//! frozen:
//! theta:
//! -1.2345678901234567e-2
//! ...
//! end
//! ```
//!
//! Values are written with 17 significant digits, which round-trips every
//! `f64` exactly.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use super::{parameter_count, InrModel, LayerSpec, MappingSpec};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

pub fn write_model(model: &InrModel, w: &mut impl Write) -> Result<()> {
    let mapping = serde_json::to_string(model.mapping()).map_err(|e| Error::Validation(e.to_string()))?;
    let layers = serde_json::to_string(model.layers()).map_err(|e| Error::Validation(e.to_string()))?;
    writeln!(w, "format_version = {FORMAT_VERSION}")?;
    writeln!(w, "mapping = {mapping}")?;
    writeln!(w, "layers = {layers}")?;
    writeln!(w, "trainable_mapping = {}", model.trainable_mapping())?;
    writeln!(w, "parameter_count = {}", model.param_count())?;
    writeln!(w, "frozen_count = {}", model.frozen_mapping().len())?;
    writeln!(w, "frozen:")?;
    for v in model.frozen_mapping() {
        writeln!(w, "{v:.16e}")?;
    }
    writeln!(w, "theta:")?;
    for v in model.theta().values() {
        writeln!(w, "{v:.16e}")?;
    }
    writeln!(w, "end")?;
    Ok(())
}

pub fn save_model(model: &InrModel, path: impl AsRef<Path>) -> Result<()> {
    let mut buf = Vec::new();
    write_model(model, &mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<InrModel> {
    let text = fs::read_to_string(path)?;
    read_model(&text)
}

#[derive(PartialEq)]
enum Section {
    Header,
    Frozen,
    Theta,
    Done,
}

pub fn read_model(text: &str) -> Result<InrModel> {
    let mut header: HashMap<&str, (usize, &str)> = HashMap::new();
    let mut frozen = Vec::new();
    let mut theta = Vec::new();
    let mut section = Section::Header;
    let mut last_line = 0;
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        last_line = lineno;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let at = || format!("line {lineno}");
        match section {
            Section::Header => {
                if line == "frozen:" {
                    section = Section::Frozen;
                    continue;
                }
                let (key, value) = line
                    .split_once('=')
                    .ok_or_else(|| Error::parse(at(), format!("expected `key = value`, found `{line}`")))?;
                header.insert(key.trim(), (lineno, value.trim()));
            }
            Section::Frozen | Section::Theta => {
                if line == "theta:" && section == Section::Frozen {
                    section = Section::Theta;
                    continue;
                }
                if line == "end" && section == Section::Theta {
                    section = Section::Done;
                    continue;
                }
                let v: f64 = line
                    .parse()
                    .map_err(|_| Error::parse(at(), format!("`{line}` is not a number")))?;
                if section == Section::Frozen {
                    frozen.push(v);
                } else {
                    theta.push(v);
                }
            }
            Section::Done => {
                return Err(Error::parse(at(), "content after `end`"));
            }
        }
    }
    if section != Section::Done {
        return Err(Error::parse(
            format!("line {last_line}"),
            "file ends before the `end` marker (truncated?)",
        ));
    }

    let field = |key: &str| -> Result<(usize, &str)> {
        header
            .get(key)
            .copied()
            .ok_or_else(|| Error::parse("header", format!("missing field `{key}`")))
    };
    let number = |key: &str| -> Result<usize> {
        let (lineno, v) = field(key)?;
        v.parse()
            .map_err(|_| Error::parse(format!("line {lineno}, field {key}"), format!("`{v}` is not a count")))
    };

    let (vline, version) = field("format_version")?;
    if version != FORMAT_VERSION.to_string() {
        return Err(Error::parse(
            format!("line {vline}, field format_version"),
            format!("unsupported version `{version}`"),
        ));
    }
    let (mline, mapping_json) = field("mapping")?;
    let mut mapping: MappingSpec = serde_json::from_str(mapping_json)
        .map_err(|e| Error::parse(format!("line {mline}, field mapping"), e.to_string()))?;
    let (lline, layers_json) = field("layers")?;
    let layers: Vec<LayerSpec> = serde_json::from_str(layers_json)
        .map_err(|e| Error::parse(format!("line {lline}, field layers"), e.to_string()))?;
    let (tline, trainable) = field("trainable_mapping")?;
    mapping.trainable = match trainable {
        "true" => true,
        "false" => false,
        other => {
            return Err(Error::parse(
                format!("line {tline}, field trainable_mapping"),
                format!("expected true or false, found `{other}`"),
            ))
        }
    };
    let declared = number("parameter_count")?;
    let declared_frozen = number("frozen_count")?;

    let expected = parameter_count(&mapping, &layers);
    if declared != expected {
        return Err(Error::Validation(format!(
            "parameter_count is {declared} but the architecture has {expected} parameters"
        )));
    }
    if theta.len() != declared {
        return Err(Error::Validation(format!(
            "parameter_count is {declared} but {} theta values are present",
            theta.len()
        )));
    }
    if frozen.len() != declared_frozen {
        return Err(Error::Validation(format!(
            "frozen_count is {declared_frozen} but {} frozen values are present",
            frozen.len()
        )));
    }
    InrModel::from_parts(mapping, layers, theta, frozen)
}
