//! Line-oriented ASCII readers for labeled point clouds.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::types::{LabeledCloud, LabeledPoint};

/// Semantic3D reserves label 0 for unlabeled points.
pub const SEMANTIC3D_UNLABELED: u32 = 0;

/// A parsed cloud plus row accounting: `cloud.len() + dropped == rows`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedCloud {
    pub cloud: LabeledCloud,
    pub rows: usize,
    pub dropped: usize,
}

/// Non-blank lines of a reader, with 1-based line numbers.
struct Rows<R> {
    reader: R,
    buf: String,
    line: usize,
    path: PathBuf,
}

impl<R: BufRead> Rows<R> {
    fn new(reader: R, path: &Path) -> Self {
        Self {
            reader,
            buf: String::with_capacity(128),
            line: 0,
            path: path.to_path_buf(),
        }
    }

    /// Advances to the next non-blank line; the text is left in `self.buf`.
    fn advance(&mut self) -> Result<bool> {
        loop {
            self.buf.clear();
            let read = self
                .reader
                .read_line(&mut self.buf)
                .map_err(|e| Error::io(&self.path, e))?;
            if read == 0 {
                return Ok(false);
            }
            self.line += 1;
            if !self.buf.trim().is_empty() {
                return Ok(true);
            }
        }
    }

    fn count_remaining(&mut self) -> Result<usize> {
        let mut n = 0;
        while self.advance()? {
            n += 1;
        }
        Ok(n)
    }
}

impl<R> Rows<R> {
    fn error(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.clone(),
            line: self.line,
            message: message.into(),
        }
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(BufReader::with_capacity(1 << 20, file))
}

fn parse_f64<R>(rows: &Rows<R>, tok: &str) -> Result<f64> {
    tok.parse::<f64>()
        .map_err(|_| rows.error(format!("malformed number {tok:?}")))
}

fn parse_label<R>(rows: &Rows<R>, tok: &str) -> Result<u32> {
    if tok.starts_with('-') {
        return Err(rows.error(format!("negative label {tok}")));
    }
    tok.parse::<u32>()
        .map_err(|_| rows.error(format!("malformed label {tok:?}")))
}

fn parse_xyz<R>(rows: &Rows<R>, toks: &mut std::str::SplitAsciiWhitespace<'_>) -> Result<[f64; 3]> {
    let mut xyz = [0.0; 3];
    for v in xyz.iter_mut() {
        let tok = toks
            .next()
            .ok_or_else(|| rows.error("expected at least 3 coordinates"))?;
        *v = parse_f64(rows, tok)?;
    }
    if xyz.iter().any(|v| !v.is_finite()) {
        return Err(rows.error("non-finite coordinate"));
    }
    Ok(xyz)
}

/// Reads the Semantic3D distribution pair: a points file with rows
/// `x y z [intensity [r g b]]` and a labels file with one integer per row.
///
/// Unlabeled rows are dropped and the remaining labels shifted down by one.
pub fn parse_semantic3d(points_path: &Path, labels_path: &Path) -> Result<ParsedCloud> {
    parse_semantic3d_from(open(points_path)?, points_path, open(labels_path)?, labels_path)
}

pub fn parse_semantic3d_from(
    points: impl BufRead,
    points_path: &Path,
    labels: impl BufRead,
    labels_path: &Path,
) -> Result<ParsedCloud> {
    let mut prow = Rows::new(points, points_path);
    let mut lrow = Rows::new(labels, labels_path);
    let mut out = Vec::new();
    let mut rows = 0usize;

    loop {
        let has_p = prow.advance()?;
        let has_l = lrow.advance()?;
        match (has_p, has_l) {
            (false, false) => break,
            (true, true) => {}
            (true, false) => {
                return Err(Error::RowCountMismatch {
                    points_path: points_path.into(),
                    labels_path: labels_path.into(),
                    points: rows + 1 + prow.count_remaining()?,
                    labels: rows,
                })
            }
            (false, true) => {
                return Err(Error::RowCountMismatch {
                    points_path: points_path.into(),
                    labels_path: labels_path.into(),
                    points: rows,
                    labels: rows + 1 + lrow.count_remaining()?,
                })
            }
        }
        rows += 1;

        let label = parse_label(&lrow, lrow.buf.trim())?;
        let mut toks = prow.buf.split_ascii_whitespace();
        let [x, y, z] = parse_xyz(&prow, &mut toks)?;
        let rest: Vec<&str> = toks.collect();
        let (intensity, color) = match rest.len() {
            0 => (None, None),
            1 => (Some(parse_f64(&prow, rest[0])? as f32), None),
            4 => {
                let mut rgb = [0u8; 3];
                for (c, tok) in rgb.iter_mut().zip(&rest[1..]) {
                    *c = tok
                        .parse::<u8>()
                        .map_err(|_| prow.error(format!("malformed color component {tok:?}")))?;
                }
                (Some(parse_f64(&prow, rest[0])? as f32), Some(rgb))
            }
            n => {
                return Err(prow.error(format!(
                    "expected 3, 4 or 7 columns, found {}",
                    n + 3
                )))
            }
        };

        if label == SEMANTIC3D_UNLABELED {
            continue;
        }
        out.push(LabeledPoint {
            x,
            y,
            z,
            label: label - 1,
            intensity,
            color,
        });
    }

    let kept = out.len();
    Ok(ParsedCloud {
        cloud: LabeledCloud::with_inferred_classes(out)?,
        rows,
        dropped: rows - kept,
    })
}

/// Reads rows of `x y z label`. No sentinel handling.
pub fn parse_xyzl(path: &Path) -> Result<ParsedCloud> {
    parse_xyzl_from(open(path)?, path)
}

pub fn parse_xyzl_from(reader: impl BufRead, path: &Path) -> Result<ParsedCloud> {
    let mut rows = Rows::new(reader, path);
    let mut out = Vec::new();
    while rows.advance()? {
        let mut toks = rows.buf.split_ascii_whitespace();
        let [x, y, z] = parse_xyz(&rows, &mut toks)?;
        let tok = toks.next().ok_or_else(|| rows.error("missing label column"))?;
        let label = parse_label(&rows, tok)?;
        if toks.next().is_some() {
            return Err(rows.error("expected exactly 4 columns"));
        }
        out.push(LabeledPoint::new(x, y, z, label));
    }
    let n = out.len();
    Ok(ParsedCloud {
        cloud: LabeledCloud::with_inferred_classes(out)?,
        rows: n,
        dropped: 0,
    })
}
