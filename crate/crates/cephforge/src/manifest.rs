//! Tab-separated dataset manifests.
//!
//! Paths are stored relative to the manifest's directory with `/`
//! separators. Records are written in a canonical order so that re-exports
//! are byte-identical.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use cephforge_core::cephgeom::Quadrant;
use cephforge_core::dataset::{BlurLevel, Split};

use crate::error::{Error, Result};

pub const PAIR_MANIFEST: &str = "manifest.tsv";
pub const PAIR_HEADER: &str = "input\ttarget\tquadrant\tpatient\tsplit";
pub const SR_MANIFEST: &str = "sr_manifest.tsv";
pub const SR_HEADER: &str = "hr\tlr\tilr\tblur";

/// One exported (dual-RGB input, 8-bit target) patch pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchPairRecord {
    pub input: String,
    pub target: String,
    pub quadrant: Quadrant,
    pub patient: String,
    pub split: Split,
}

/// One super-resolution patch triple.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SrRecord {
    pub hr: String,
    pub lr: String,
    pub ilr: String,
    pub blur: BlurLevel,
}

/// `# key=value` lines preceding the column header.
pub type HeaderComments = Vec<(String, String)>;

fn check_field(what: &str, s: &str) -> Result<()> {
    if s.is_empty() || s.contains(['\t', '\n', '\r']) {
        return Err(Error::Usage(format!(
            "{what} {s:?} must be non-empty and free of tabs and newlines"
        )));
    }
    Ok(())
}

/// Reject ids that cannot be used as a single path component.
pub fn check_patient_id(id: &str) -> Result<()> {
    check_field("patient id", id)?;
    if id == "." || id == ".." || id.contains(['/', '\\']) || id.starts_with('#') {
        return Err(Error::Usage(format!(
            "patient id {id:?} is not a plain name"
        )));
    }
    Ok(())
}

/// Relative path as stored in a manifest.
pub fn manifest_path(rel: &Path) -> String {
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}

/// Resolve a manifest entry against the manifest's directory.
pub fn resolve(manifest: &Path, entry: &str) -> PathBuf {
    manifest.parent().unwrap_or(Path::new("")).join(entry)
}

fn check_unique<'a>(paths: impl Iterator<Item = &'a str>) -> Result<()> {
    let mut seen = BTreeSet::new();
    for p in paths {
        if !seen.insert(p) {
            return Err(Error::Usage(format!("duplicate output path {p:?}")));
        }
    }
    Ok(())
}

/// Sort into canonical `(patient, quadrant)` order and render.
pub fn render_pairs(records: &[PatchPairRecord]) -> Result<String> {
    let mut sorted: Vec<&PatchPairRecord> = records.iter().collect();
    sorted.sort_by(|a, b| {
        (&a.patient, a.quadrant, &a.input).cmp(&(&b.patient, b.quadrant, &b.input))
    });
    check_unique(
        records
            .iter()
            .flat_map(|r| [r.input.as_str(), r.target.as_str()]),
    )?;
    let mut out = String::new();
    out.push_str(PAIR_HEADER);
    out.push('\n');
    for r in sorted {
        check_field("input path", &r.input)?;
        check_field("target path", &r.target)?;
        check_patient_id(&r.patient)?;
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            r.input, r.target, r.quadrant, r.patient, r.split
        );
    }
    Ok(out)
}

/// Data rows with their 1-based line numbers.
type Rows<'a> = Vec<(usize, Vec<&'a str>)>;

fn rows<'a>(text: &'a str, header: &str, source: &Path) -> Result<(HeaderComments, Rows<'a>)> {
    let mut comments = Vec::new();
    let mut lines = text.lines().enumerate().peekable();
    while let Some((_, l)) = lines.peek() {
        let Some(c) = l.strip_prefix('#') else { break };
        if let Some((k, v)) = c.trim().split_once('=') {
            comments.push((k.trim().to_string(), v.trim().to_string()));
        }
        lines.next();
    }
    match lines.next() {
        Some((_, h)) if h == header => {}
        _ => return Err(Error::format(source, format!("missing header {header:?}"))),
    }
    let width = header.split('\t').count();
    let mut out = Vec::new();
    for (i, l) in lines {
        if l.is_empty() {
            continue;
        }
        let f: Vec<&str> = l.split('\t').collect();
        if f.len() != width {
            return Err(Error::format(
                source,
                format!("line {}: expected {width} fields", i + 1),
            ));
        }
        out.push((i + 1, f));
    }
    Ok((comments, out))
}

pub fn parse_pairs(text: &str, source: &Path) -> Result<Vec<PatchPairRecord>> {
    let (_, rows) = rows(text, PAIR_HEADER, source)?;
    rows.into_iter()
        .map(|(n, f)| {
            let bad = |e: cephforge_core::Error| Error::format(source, format!("line {n}: {e}"));
            Ok(PatchPairRecord {
                input: f[0].to_string(),
                target: f[1].to_string(),
                quadrant: f[2].parse().map_err(bad)?,
                patient: f[3].to_string(),
                split: f[4].parse().map_err(bad)?,
            })
        })
        .collect()
}

pub fn read_pairs(manifest: &Path) -> Result<Vec<PatchPairRecord>> {
    let text = std::fs::read_to_string(manifest).map_err(|e| Error::read(manifest, e))?;
    parse_pairs(&text, manifest)
}

/// Render an SR manifest; `comments` become `# key=value` lines.
pub fn render_sr(records: &[SrRecord], comments: &[(String, String)]) -> Result<String> {
    check_unique(
        records
            .iter()
            .flat_map(|r| [r.hr.as_str(), r.lr.as_str(), r.ilr.as_str()]),
    )?;
    let mut out = String::new();
    for (k, v) in comments {
        let _ = writeln!(out, "# {k}={v}");
    }
    out.push_str(SR_HEADER);
    out.push('\n');
    for r in records {
        for p in [&r.hr, &r.lr, &r.ilr] {
            check_field("path", p)?;
        }
        let _ = writeln!(out, "{}\t{}\t{}\t{}", r.hr, r.lr, r.ilr, r.blur);
    }
    Ok(out)
}

pub fn parse_sr(text: &str, source: &Path) -> Result<(HeaderComments, Vec<SrRecord>)> {
    let (comments, rows) = rows(text, SR_HEADER, source)?;
    let records = rows
        .into_iter()
        .map(|(n, f)| {
            Ok(SrRecord {
                hr: f[0].to_string(),
                lr: f[1].to_string(),
                ilr: f[2].to_string(),
                blur: f[3].parse().map_err(|e: cephforge_core::Error| {
                    Error::format(source, format!("line {n}: {e}"))
                })?,
            })
        })
        .collect::<Result<_>>()?;
    Ok((comments, records))
}

pub fn read_sr(manifest: &Path) -> Result<(HeaderComments, Vec<SrRecord>)> {
    let text = std::fs::read_to_string(manifest).map_err(|e| Error::read(manifest, e))?;
    parse_sr(&text, manifest)
}
