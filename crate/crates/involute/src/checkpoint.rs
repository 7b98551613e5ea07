//! Model checkpoint files.
//!
//! A checkpoint is a plain-text container: a version tag, free-form metadata
//! lines, then one section per model carrying its spec line and every named
//! parameter with its shape and values. Floats are written in Rust's
//! shortest round-trip decimal form and parsed back exactly, so files are
//! byte-stable across platforms (no endianness concerns) and reloading is
//! lossless. Lines end in `\n`.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::{DiscriminatorSpec, GeneratorSpec, Model, ModelSpec};

const MAGIC: &str = "involute-checkpoint v1";

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CheckpointMeta {
    pub entries: Vec<(String, String)>,
}

impl CheckpointMeta {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn push(&mut self, key: &str, value: impl ToString) {
        self.entries.push((key.to_string(), value.to_string()));
    }
}

fn join_usizes(values: &[usize]) -> String {
    if values.is_empty() {
        return "none".into();
    }
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn parse_usizes(text: &str) -> Option<Vec<usize>> {
    if text == "none" {
        return Some(Vec::new());
    }
    text.split(',').map(|v| v.parse().ok()).collect()
}

pub fn spec_to_line(spec: &ModelSpec) -> String {
    match spec {
        ModelSpec::Generator(GeneratorSpec::Vector { dim, hidden }) => {
            format!("generator vector dim={dim} hidden={}", join_usizes(hidden))
        }
        ModelSpec::Generator(GeneratorSpec::Conv {
            channels,
            height,
            width,
        }) => format!(
            "generator conv channels={} height={height} width={width}",
            join_usizes(channels)
        ),
        ModelSpec::Discriminator(DiscriminatorSpec::Vector { input_dim, hidden }) => format!(
            "discriminator vector input_dim={input_dim} hidden={}",
            join_usizes(hidden)
        ),
        ModelSpec::Discriminator(DiscriminatorSpec::Conv {
            channels,
            height,
            width,
        }) => format!(
            "discriminator conv channels={} height={height} width={width}",
            join_usizes(channels)
        ),
    }
}

pub fn spec_from_line(line: &str) -> Option<ModelSpec> {
    let mut tokens = line.split_whitespace();
    let role = tokens.next()?;
    let kind = tokens.next()?;
    let mut fields = std::collections::BTreeMap::new();
    for tok in tokens {
        let (k, v) = tok.split_once('=')?;
        fields.insert(k.to_string(), v.to_string());
    }
    let spec = match (role, kind) {
        ("generator", "vector") => ModelSpec::Generator(GeneratorSpec::Vector {
            dim: fields.get("dim")?.parse().ok()?,
            hidden: parse_usizes(fields.get("hidden")?)?,
        }),
        ("generator", "conv") => ModelSpec::Generator(GeneratorSpec::Conv {
            channels: parse_usizes(fields.get("channels")?)?,
            height: fields.get("height")?.parse().ok()?,
            width: fields.get("width")?.parse().ok()?,
        }),
        ("discriminator", "vector") => ModelSpec::Discriminator(DiscriminatorSpec::Vector {
            input_dim: fields.get("input_dim")?.parse().ok()?,
            hidden: parse_usizes(fields.get("hidden")?)?,
        }),
        ("discriminator", "conv") => ModelSpec::Discriminator(DiscriminatorSpec::Conv {
            channels: parse_usizes(fields.get("channels")?)?,
            height: fields.get("height")?.parse().ok()?,
            width: fields.get("width")?.parse().ok()?,
        }),
        _ => return None,
    };
    Some(spec)
}

/// Serializes metadata and labeled models into the checkpoint text form.
pub fn render(meta: &CheckpointMeta, models: &[(&str, &Model)]) -> String {
    let mut out = String::new();
    out.push_str(MAGIC);
    out.push('\n');
    for (k, v) in &meta.entries {
        let _ = writeln!(out, "meta {k} {v}");
    }
    for (label, model) in models {
        let _ = writeln!(out, "model {label}");
        let _ = writeln!(out, "spec {}", spec_to_line(model.spec()));
        for p in model.parameters() {
            let dims = p
                .value
                .shape()
                .iter()
                .map(|d| d.to_string())
                .collect::<Vec<_>>()
                .join(" ");
            let _ = writeln!(out, "param {} {} {}", p.name, p.value.shape().len(), dims);
            let mut first = true;
            for v in p.value.data() {
                if !first {
                    out.push(' ');
                }
                let _ = write!(out, "{v}");
                first = false;
            }
            out.push('\n');
        }
        out.push_str("end model\n");
    }
    out.push_str("end\n");
    out
}

/// Writes a checkpoint. Refuses to overwrite an existing file.
pub fn save(path: &Path, meta: &CheckpointMeta, models: &[(&str, &Model)]) -> Result<()> {
    let mut file = fs::OpenOptions::new()
        .write(true)
        .create_new(true)
        .open(path)?;
    file.write_all(render(meta, models).as_bytes())?;
    Ok(())
}

pub fn load(path: &Path) -> Result<(CheckpointMeta, Vec<(String, Model)>)> {
    let text = fs::read_to_string(path)?;
    parse(&text).map_err(|(line, msg)| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    })
}

fn parse(text: &str) -> std::result::Result<(CheckpointMeta, Vec<(String, Model)>), (usize, String)> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let mut meta = CheckpointMeta::default();
    let mut models = Vec::new();

    let (_, first) = lines.next().ok_or((1, "empty checkpoint".to_string()))?;
    if first != MAGIC {
        return Err((1, format!("expected `{MAGIC}`, got `{first}`")));
    }

    #[derive(Default)]
    struct Section {
        label: String,
        spec: Option<ModelSpec>,
        values: Vec<(String, crate::autodiff::Tensor)>,
    }
    let mut section: Option<Section> = None;
    let mut pending_param: Option<(String, Vec<usize>)> = None;
    let mut finished = false;

    for (no, line) in lines {
        if finished && !line.trim().is_empty() {
            return Err((no, "content after end marker".to_string()));
        }
        if let Some((name, shape)) = pending_param.take() {
            let numel: usize = shape.iter().product();
            let values: Vec<f64> = line
                .split_whitespace()
                .map(|tok| tok.parse::<f64>().map_err(|e| (no, format!("bad float `{tok}`: {e}"))))
                .collect::<std::result::Result<_, _>>()?;
            if values.len() != numel {
                return Err((no, format!("parameter {name} expects {numel} values, got {}", values.len())));
            }
            let tensor = crate::autodiff::Tensor::new(shape, values)
                .map_err(|e| (no, e.to_string()))?;
            section
                .as_mut()
                .ok_or((no, "parameter outside model section".to_string()))?
                .values
                .push((name, tensor));
            continue;
        }

        let mut tokens = line.split_whitespace();
        match tokens.next() {
            None => {}
            Some("meta") => {
                let key = tokens.next().ok_or((no, "meta without key".to_string()))?;
                let rest: Vec<&str> = tokens.collect();
                meta.push(key, rest.join(" "));
            }
            Some("model") => {
                if section.is_some() {
                    return Err((no, "nested model section".to_string()));
                }
                let label = tokens.next().ok_or((no, "model without label".to_string()))?;
                section = Some(Section {
                    label: label.to_string(),
                    ..Default::default()
                });
            }
            Some("spec") => {
                let rest: Vec<&str> = tokens.collect();
                let spec = spec_from_line(&rest.join(" "))
                    .ok_or((no, format!("unparseable spec line `{line}`")))?;
                section
                    .as_mut()
                    .ok_or((no, "spec outside model section".to_string()))?
                    .spec = Some(spec);
            }
            Some("param") => {
                if section.is_none() {
                    return Err((no, "param outside model section".to_string()));
                }
                let name = tokens.next().ok_or((no, "param without name".to_string()))?;
                let rank: usize = tokens
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or((no, "param without rank".to_string()))?;
                let shape: Vec<usize> = tokens
                    .map(|t| t.parse().map_err(|_| (no, format!("bad dim `{t}`"))))
                    .collect::<std::result::Result<_, _>>()?;
                if shape.len() != rank {
                    return Err((no, format!("rank {rank} disagrees with {} dims", shape.len())));
                }
                pending_param = Some((name.to_string(), shape));
            }
            Some("end") => match tokens.next() {
                Some("model") => {
                    let sec = section
                        .take()
                        .ok_or((no, "end model outside section".to_string()))?;
                    let spec = sec.spec.ok_or((no, "model missing spec".to_string()))?;
                    let model = Model::from_values(spec, sec.values)
                        .map_err(|e| (no, e.to_string()))?;
                    models.push((sec.label, model));
                }
                None => {
                    if section.is_some() {
                        return Err((no, "end before closing model section".to_string()));
                    }
                    finished = true;
                }
                Some(other) => return Err((no, format!("unexpected `end {other}`"))),
            },
            Some(other) => return Err((no, format!("unexpected token `{other}`"))),
        }
    }

    if !finished {
        return Err((text.lines().count(), "missing end marker".to_string()));
    }
    Ok((meta, models))
}
