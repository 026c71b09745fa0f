//! Signal block files.
//!
//! CSV: one line per channel, comma separated; complex entries are written
//! as `re+imj`. A block is complex as soon as one entry carries a `j`.
//!
//! Binary: a 16-byte header of little-endian `u32` words (magic, regime
//! tag, channels, samples) followed by row-major little-endian `f64`
//! values, real and imaginary parts interleaved for complex blocks.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use robustica_core::{Complex, DMatrix, Regime, SignalBlock};

/// `"RICA"` read as a little-endian `u32`.
pub const MAGIC: u32 = u32::from_le_bytes(*b"RICA");
pub const HEADER_LEN: usize = 16;

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}, entry {entry}: cannot parse {text:?} as a number")]
    Number { line: usize, entry: usize, text: String },
    #[error("line {line} has {found} entries, expected {expected}")]
    Ragged { line: usize, expected: usize, found: usize },
    #[error("file holds no samples")]
    Empty,
    #[error("bad magic number {0:#010x}")]
    Magic(u32),
    #[error("unknown regime tag {0}")]
    Regime(u32),
    #[error("payload has {found} bytes, header announces {expected}")]
    Truncated { expected: usize, found: usize },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// A signal block of either regime, as read from disk.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyBlock {
    Real(SignalBlock<f64>),
    Complex(SignalBlock<Complex<f64>>),
}

impl AnyBlock {
    pub fn regime(&self) -> Regime {
        match self {
            AnyBlock::Real(_) => Regime::Real,
            AnyBlock::Complex(_) => Regime::Complex,
        }
    }

    pub fn channels(&self) -> usize {
        match self {
            AnyBlock::Real(b) => b.channels(),
            AnyBlock::Complex(b) => b.channels(),
        }
    }

    pub fn samples(&self) -> usize {
        match self {
            AnyBlock::Real(b) => b.samples(),
            AnyBlock::Complex(b) => b.samples(),
        }
    }
}

impl From<SignalBlock<f64>> for AnyBlock {
    fn from(b: SignalBlock<f64>) -> Self {
        AnyBlock::Real(b)
    }
}

impl From<SignalBlock<Complex<f64>>> for AnyBlock {
    fn from(b: SignalBlock<Complex<f64>>) -> Self {
        AnyBlock::Complex(b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Bin,
}

impl Format {
    /// `.bin` means binary, anything else CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("bin") => Format::Bin,
            _ => Format::Csv,
        }
    }
}

pub fn read_file(path: &Path, format: Format) -> Result<AnyBlock, FormatError> {
    let reader = BufReader::new(File::open(path)?);
    match format {
        Format::Csv => read_csv(reader),
        Format::Bin => read_bin(reader),
    }
}

pub fn write_file(path: &Path, format: Format, block: &AnyBlock) -> Result<(), FormatError> {
    let mut w = BufWriter::new(File::create(path)?);
    match format {
        Format::Csv => write_csv(&mut w, block)?,
        Format::Bin => write_bin(&mut w, block)?,
    }
    w.flush()?;
    Ok(())
}

/// Parses `re`, `re+imj`, `re-imj` or `imj`.
pub fn parse_complex(text: &str) -> Option<Complex<f64>> {
    let t = text.trim();
    let Some(body) = t.strip_suffix('j').or_else(|| t.strip_suffix('i')) else {
        return t.parse().ok().map(|re| Complex::new(re, 0.0));
    };
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&k| matches!(bytes[k], b'+' | b'-') && !matches!(bytes[k - 1], b'e' | b'E'));
    match split {
        Some(k) => {
            let re = body[..k].parse().ok()?;
            let im = match &body[k..] {
                "+" => 1.0,
                "-" => -1.0,
                s => s.parse().ok()?,
            };
            Some(Complex::new(re, im))
        }
        None => {
            let im = match body {
                "" | "+" => 1.0,
                "-" => -1.0,
                s => s.parse().ok()?,
            };
            Some(Complex::new(0.0, im))
        }
    }
}

pub fn format_complex(v: Complex<f64>) -> String {
    format!("{}{:+}j", v.re, v.im)
}

pub fn read_csv(reader: impl Read) -> Result<AnyBlock, FormatError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows: Vec<Vec<Complex<f64>>> = Vec::new();
    let mut complex = false;
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(rows.len() + 1, |p| p.line() as usize);
        if record.iter().all(str::is_empty) {
            continue;
        }
        let row = record
            .iter()
            .enumerate()
            .map(|(k, text)| {
                complex |= text.ends_with('j') || text.ends_with('i');
                parse_complex(text).ok_or_else(|| FormatError::Number {
                    line,
                    entry: k + 1,
                    text: text.to_owned(),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(FormatError::Ragged {
                    line,
                    expected: first.len(),
                    found: row.len(),
                });
            }
        }
        rows.push(row);
    }
    let (l, t) = (rows.len(), rows.first().map_or(0, Vec::len));
    if l == 0 || t == 0 {
        return Err(FormatError::Empty);
    }
    Ok(if complex {
        AnyBlock::Complex(block(DMatrix::from_fn(l, t, |k, s| rows[k][s])))
    } else {
        AnyBlock::Real(block(DMatrix::from_fn(l, t, |k, s| rows[k][s].re)))
    })
}

fn block<S: robustica_core::Scalar>(m: DMatrix<S>) -> SignalBlock<S> {
    SignalBlock::new(m).expect("dimensions checked by the caller")
}

pub fn write_csv(w: &mut impl Write, block: &AnyBlock) -> io::Result<()> {
    match block {
        AnyBlock::Real(b) => write_rows(w, b.matrix(), |v| v.to_string()),
        AnyBlock::Complex(b) => write_rows(w, b.matrix(), |v| format_complex(*v)),
    }
}

fn write_rows<S>(w: &mut impl Write, m: &DMatrix<S>, fmt: impl Fn(&S) -> String) -> io::Result<()>
where
    S: nalgebra::Scalar,
{
    for row in m.row_iter() {
        let line: Vec<String> = row.iter().map(&fmt).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}

pub fn read_bin(mut reader: impl Read) -> Result<AnyBlock, FormatError> {
    let mut header = [0u8; HEADER_LEN];
    reader.read_exact(&mut header)?;
    let word = |k: usize| u32::from_le_bytes(header[4 * k..4 * k + 4].try_into().unwrap());
    if word(0) != MAGIC {
        return Err(FormatError::Magic(word(0)));
    }
    let regime = Regime::from_tag(word(1)).ok_or(FormatError::Regime(word(1)))?;
    let (l, t) = (word(2) as usize, word(3) as usize);
    if l == 0 || t == 0 {
        return Err(FormatError::Empty);
    }
    let width = match regime {
        Regime::Real => 1,
        Regime::Complex => 2,
    };
    let expected = l * t * width * 8;
    let mut payload = Vec::with_capacity(expected);
    reader.read_to_end(&mut payload)?;
    if payload.len() != expected {
        return Err(FormatError::Truncated {
            expected,
            found: payload.len(),
        });
    }
    let values: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(match regime {
        Regime::Real => AnyBlock::Real(block(DMatrix::from_row_slice(l, t, &values))),
        Regime::Complex => AnyBlock::Complex(block(DMatrix::from_fn(l, t, |k, s| {
            let at = 2 * (k * t + s);
            Complex::new(values[at], values[at + 1])
        }))),
    })
}

pub fn write_bin(w: &mut impl Write, block: &AnyBlock) -> io::Result<()> {
    let dim =
        |n: usize| u32::try_from(n).map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "dimension exceeds u32"));
    for word in [
        MAGIC,
        block.regime().tag(),
        dim(block.channels())?,
        dim(block.samples())?,
    ] {
        w.write_all(&word.to_le_bytes())?;
    }
    match block {
        AnyBlock::Real(b) => {
            for row in b.matrix().row_iter() {
                for v in row.iter() {
                    w.write_all(&v.to_le_bytes())?;
                }
            }
        }
        AnyBlock::Complex(b) => {
            for row in b.matrix().row_iter() {
                for v in row.iter() {
                    w.write_all(&v.re.to_le_bytes())?;
                    w.write_all(&v.im.to_le_bytes())?;
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complex_text_forms() {
        assert_eq!(parse_complex("1.5-2j"), Some(Complex::new(1.5, -2.0)));
        assert_eq!(parse_complex("-1e-3+2.5e+2j"), Some(Complex::new(-1e-3, 250.0)));
        assert_eq!(parse_complex("3j"), Some(Complex::new(0.0, 3.0)));
        assert_eq!(parse_complex("-j"), Some(Complex::new(0.0, -1.0)));
        assert_eq!(parse_complex("0.25"), Some(Complex::new(0.25, 0.0)));
        assert_eq!(parse_complex("1+x"), None);
        assert_eq!(format_complex(Complex::new(1.0, -0.5)), "1-0.5j");
        assert_eq!(format_complex(Complex::new(-0.0, 2.0)), "-0+2j");
    }

    #[test]
    fn ragged_csv_names_the_line() {
        let err = read_csv("1,2,3\n4,5\n".as_bytes()).unwrap_err();
        assert!(matches!(
            err,
            FormatError::Ragged {
                line: 2,
                expected: 3,
                found: 2
            }
        ));
        let err = read_csv("1,2\n4,abc\n".as_bytes()).unwrap_err();
        assert!(matches!(err, FormatError::Number { line: 2, entry: 2, .. }));
    }

    #[test]
    fn header_layout() {
        let b = AnyBlock::Real(SignalBlock::from_rows(&[vec![1.0, 2.0]]).unwrap());
        let mut buf = Vec::new();
        write_bin(&mut buf, &b).unwrap();
        assert_eq!(&buf[..4], b"RICA");
        assert_eq!(buf.len(), HEADER_LEN + 16);
        assert_eq!(u32::from_le_bytes(buf[8..12].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(buf[12..16].try_into().unwrap()), 2);
        assert!(matches!(read_bin(&buf[..20]), Err(FormatError::Truncated { .. })));
    }
}
