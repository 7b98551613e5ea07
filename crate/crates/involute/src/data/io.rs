//! File ingestion and artifact formats: CSV point files, 8-bit PGM images
//! (P2/P5, maxval 255, pixels mapped linearly onto [-1, 1]), and dataset
//! manifests naming one directory per domain.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

use super::task::{make_files_task, DomainTask};

fn parse_err(path: &Path, line: usize, msg: impl ToString) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.to_string(),
    }
}

/// Reads one sample per CSV row; all rows must share the arity of the first.
/// `#` lines are comments.
pub fn load_points_csv(path: &Path) -> Result<Vec<Tensor>> {
    let text = fs::read_to_string(path)?;
    let mut samples = Vec::new();
    let mut arity = None;
    for (no, line) in text.lines().enumerate().map(|(i, l)| (i + 1, l)) {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|tok| {
                tok.trim()
                    .parse::<f64>()
                    .map_err(|e| parse_err(path, no, format!("bad value `{}`: {e}", tok.trim())))
            })
            .collect::<Result<_>>()?;
        match arity {
            None => arity = Some(row.len()),
            Some(a) if a != row.len() => {
                return Err(parse_err(
                    path,
                    no,
                    format!("row has {} values, expected {a}", row.len()),
                ))
            }
            _ => {}
        }
        samples.push(Tensor::new(vec![row.len()], row)?);
    }
    if samples.is_empty() {
        return Err(parse_err(path, 1, "no data rows"));
    }
    Ok(samples)
}

/// Writes samples one per row. Never overwrites. An optional tag is embedded
/// as a leading comment so artifacts trace back to their producing config.
pub fn save_points_csv(path: &Path, samples: &[Tensor], tag: Option<&str>) -> Result<()> {
    let mut out = String::new();
    if let Some(tag) = tag {
        out.push_str("# ");
        out.push_str(tag);
        out.push('\n');
    }
    for s in samples {
        let row: Vec<String> = s.data().iter().map(|v| v.to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    let mut file = fs::OpenOptions::new().write(true).create_new(true).open(path)?;
    file.write_all(out.as_bytes())?;
    Ok(())
}

/// Loads a P2 (ASCII) or P5 (binary) PGM with maxval 255 into a 1×h×w
/// tensor; pixel p maps to p/127.5 - 1.
pub fn load_pgm(path: &Path) -> Result<Tensor> {
    let bytes = fs::read(path)?;
    let mut pos = 0usize;
    let mut line = 1usize;

    // Header tokens separated by whitespace; `#` starts a comment to EOL.
    let next_token = |bytes: &[u8], pos: &mut usize, line: &mut usize| -> Option<String> {
        loop {
            while *pos < bytes.len() {
                match bytes[*pos] {
                    b'\n' => {
                        *line += 1;
                        *pos += 1;
                    }
                    b' ' | b'\t' | b'\r' => *pos += 1,
                    b'#' => {
                        while *pos < bytes.len() && bytes[*pos] != b'\n' {
                            *pos += 1;
                        }
                    }
                    _ => break,
                }
            }
            if *pos >= bytes.len() {
                return None;
            }
            let start = *pos;
            while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
                *pos += 1;
            }
            return Some(String::from_utf8_lossy(&bytes[start..*pos]).into_owned());
        }
    };

    let magic = next_token(&bytes, &mut pos, &mut line)
        .ok_or_else(|| parse_err(path, line, "missing PGM magic"))?;
    if magic != "P2" && magic != "P5" {
        return Err(parse_err(path, 1, format!("unsupported magic `{magic}` (want P2 or P5)")));
    }
    let mut dim = |what: &str| -> Result<usize> {
        next_token(&bytes, &mut pos, &mut line)
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| parse_err(path, line, format!("bad or missing {what}")))
    };
    let w = dim("width")?;
    let h = dim("height")?;
    let maxval = dim("maxval")?;
    if maxval != 255 {
        return Err(parse_err(path, line, format!("maxval must be 255, got {maxval}")));
    }
    if h == 0 || w == 0 {
        return Err(parse_err(path, line, "zero image dimension"));
    }

    let to_unit = |p: f64| p / 127.5 - 1.0;
    let pixels: Vec<f64> = if magic == "P5" {
        // Exactly one whitespace byte separates the header from raster data.
        if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
            return Err(parse_err(path, line, "missing raster separator"));
        }
        pos += 1;
        let raster = &bytes[pos..];
        if raster.len() < h * w {
            return Err(parse_err(
                path,
                line,
                format!("raster holds {} bytes, expected {}", raster.len(), h * w),
            ));
        }
        raster[..h * w].iter().map(|&b| to_unit(b as f64)).collect()
    } else {
        let mut vals = Vec::with_capacity(h * w);
        for _ in 0..h * w {
            let tok = next_token(&bytes, &mut pos, &mut line)
                .ok_or_else(|| parse_err(path, line, "truncated P2 raster"))?;
            let v: u32 = tok
                .parse()
                .map_err(|_| parse_err(path, line, format!("bad pixel `{tok}`")))?;
            if v > 255 {
                return Err(parse_err(path, line, format!("pixel {v} exceeds maxval")));
            }
            vals.push(to_unit(v as f64));
        }
        vals
    };
    Tensor::new(vec![1, h, w], pixels)
}

/// Writes a 1×h×w tensor as binary PGM (P5, maxval 255); values are clamped
/// to [-1, 1] and quantized to 8 bits. Never overwrites.
pub fn save_pgm(path: &Path, image: &Tensor, tag: Option<&str>) -> Result<()> {
    let shape = image.shape();
    if shape.len() != 3 || shape[0] != 1 {
        return Err(Error::DimMismatch {
            op: "save_pgm",
            lhs: shape.to_vec(),
            rhs: vec![1, 0, 0],
        });
    }
    let (h, w) = (shape[1], shape[2]);
    let mut out = Vec::with_capacity(h * w + 64);
    out.extend_from_slice(b"P5\n");
    if let Some(tag) = tag {
        out.extend_from_slice(format!("# {tag}\n").as_bytes());
    }
    out.extend_from_slice(format!("{w} {h}\n255\n").as_bytes());
    for &v in image.data() {
        let q = ((v.clamp(-1.0, 1.0) + 1.0) * 127.5).round() as u8;
        out.push(q);
    }
    let mut file = fs::OpenOptions::new().write(true).create_new(true).open(path)?;
    file.write_all(&out)?;
    Ok(())
}

/// Dataset manifest: `kind vector|image`, `x_dir <path>`, `y_dir <path>`.
/// Directories are resolved relative to the manifest location; files are
/// read in sorted filename order.
pub fn load_manifest(path: &Path) -> Result<DomainTask> {
    let text = fs::read_to_string(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let (mut kind, mut x_dir, mut y_dir) = (None, None, None);
    for (no, line) in text.lines().enumerate().map(|(i, l)| (i + 1, l)) {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once(char::is_whitespace)
            .ok_or_else(|| parse_err(path, no, format!("expected `key value`, got `{line}`")))?;
        let value = value.trim();
        match key {
            "kind" => match value {
                "vector" | "image" => kind = Some(value.to_string()),
                other => return Err(parse_err(path, no, format!("unknown kind `{other}`"))),
            },
            "x_dir" => x_dir = Some(base.join(value)),
            "y_dir" => y_dir = Some(base.join(value)),
            other => return Err(parse_err(path, no, format!("unknown manifest key `{other}`"))),
        }
    }
    let kind = kind.ok_or_else(|| parse_err(path, 1, "manifest missing `kind`"))?;
    let x_dir = x_dir.ok_or_else(|| parse_err(path, 1, "manifest missing `x_dir`"))?;
    let y_dir = y_dir.ok_or_else(|| parse_err(path, 1, "manifest missing `y_dir`"))?;

    let load_dir = |dir: &Path| -> Result<Vec<Tensor>> {
        let mut files: Vec<PathBuf> = fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .collect();
        files.sort();
        let mut samples = Vec::new();
        for file in files {
            match file.extension().and_then(|e| e.to_str()) {
                Some("csv") if kind == "vector" => samples.extend(load_points_csv(&file)?),
                Some("pgm") if kind == "image" => samples.push(load_pgm(&file)?),
                _ => {}
            }
        }
        Ok(samples)
    };

    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "files".into());
    make_files_task(name, load_dir(&x_dir)?, load_dir(&y_dir)?)
}
