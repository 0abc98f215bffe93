//! On-disk formats: binary velocity snapshots with a one-line text header,
//! plus CSV writers for ledgers and check tables. Writing the same data
//! twice produces byte-identical files.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::diagnostics::{CheckRow, EnergyLedger, LedgerRow};
use crate::field::{ScalarField, Tag, VectorField};
use crate::grid::{build_grid, Loc};

const MAGIC: &str = "NSANISO";
const VERSION: &str = "v1";

#[derive(Debug)]
pub enum IoError {
    Io(std::io::Error),
    Format(String),
}

impl std::fmt::Display for IoError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            IoError::Io(e) => write!(f, "io failure: {e}"),
            IoError::Format(m) => write!(f, "malformed snapshot: {m}"),
        }
    }
}

impl std::error::Error for IoError {}

impl From<std::io::Error> for IoError {
    fn from(e: std::io::Error) -> IoError {
        IoError::Io(e)
    }
}

fn bad(msg: impl Into<String>) -> IoError {
    IoError::Format(msg.into())
}

/// Writes `u` as a text header
/// `NSANISO v1 <nx> <ny> <nz> <lx> <ly> <half:0|1> <tag>\n`
/// followed by the raw little-endian doubles of the three components in
/// storage order. Extents use the shortest round-trip decimal form, so a
/// write/read cycle reproduces the field bit-for-bit.
pub fn write_snapshot(path: &Path, u: &VectorField) -> Result<(), IoError> {
    let g = u.grid();
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(
        w,
        "{MAGIC} {VERSION} {} {} {} {} {} {} {}",
        g.nx,
        g.ny,
        g.nz,
        g.lx,
        g.ly,
        if g.half_domain { 1 } else { 0 },
        u.tag.as_str()
    )?;
    for (_, c) in u.components() {
        for v in c.values() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a snapshot written by [`write_snapshot`].
pub fn read_snapshot(path: &Path) -> Result<VectorField, IoError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut header = String::new();
    r.read_line(&mut header)?;
    let toks: Vec<&str> = header.split_whitespace().collect();
    if toks.len() != 9 || toks[0] != MAGIC || toks[1] != VERSION {
        return Err(bad(format!("unrecognized header {header:?}")));
    }
    let dim = |i: usize| -> Result<usize, IoError> {
        toks[i].parse().map_err(|_| bad(format!("bad dimension {:?}", toks[i])))
    };
    let ext = |i: usize| -> Result<f64, IoError> {
        toks[i].parse().map_err(|_| bad(format!("bad extent {:?}", toks[i])))
    };
    let half = match toks[7] {
        "0" => false,
        "1" => true,
        other => return Err(bad(format!("bad half flag {other:?}"))),
    };
    let tag = Tag::parse(toks[8]).ok_or_else(|| bad(format!("bad tag {:?}", toks[8])))?;
    let grid = build_grid(dim(2)?, dim(3)?, dim(4)?, ext(5)?, ext(6)?, half)
        .map_err(|e| bad(format!("invalid grid in header: {e}")))?;

    let mut component = |loc: Loc| -> Result<ScalarField, IoError> {
        let n = grid.len(loc);
        let mut bytes = vec![0u8; 8 * n];
        r.read_exact(&mut bytes)
            .map_err(|e| bad(format!("truncated payload: {e}")))?;
        let values = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        ScalarField::from_vec(grid, loc, values).map_err(|e| bad(format!("bad payload: {e:?}")))
    };
    let u1 = component(Loc::XFace)?;
    let u2 = component(Loc::YFace)?;
    let u3 = component(Loc::ZFace)?;
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(bad("trailing bytes after payload"));
    }
    Ok(VectorField { u1, u2, u3, tag })
}

/// Writes a ledger as CSV with the fixed column header.
pub fn write_ledger_csv(path: &Path, ledger: &EnergyLedger) -> Result<(), IoError> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{}", LedgerRow::CSV_HEADER)?;
    for row in ledger.rows() {
        writeln!(w, "{}", row.to_csv())?;
    }
    w.flush()?;
    Ok(())
}

/// Writes check rows as CSV.
pub fn write_checks_csv(path: &Path, checks: &[CheckRow]) -> Result<(), IoError> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{}", CheckRow::CSV_HEADER)?;
    for c in checks {
        writeln!(w, "{}", c.to_csv())?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a generic CSV table (header line plus preformatted rows).
pub fn write_table_csv(path: &Path, header: &str, rows: &[String]) -> Result<(), IoError> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{header}")?;
    for row in rows {
        writeln!(w, "{row}")?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;
    use crate::samples;

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("nsaniso-io-tests");
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn snapshot_round_trip_is_bit_identical() {
        let g = build_grid(6, 5, 8, 1.5, 0.75, false).unwrap();
        let u = samples::random_solenoidal(&g, 1.0, 31).unwrap();
        let path = tmp("roundtrip.bin");
        write_snapshot(&path, &u).unwrap();
        let back = read_snapshot(&path).unwrap();
        assert_eq!(back.grid(), u.grid());
        assert_eq!(back.tag, u.tag);
        for ((_, a), (_, b)) in u.components().iter().zip(back.components().iter()) {
            assert_eq!(a.values().len(), b.values().len());
            for (x, y) in a.values().iter().zip(b.values()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        // Writing again produces byte-identical files.
        let path2 = tmp("roundtrip2.bin");
        write_snapshot(&path2, &u).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn half_domain_snapshots_round_trip() {
        let g = build_grid(4, 4, 4, 1.0, 1.0, true).unwrap();
        let u = samples::random_solenoidal(&g, 0.5, 32).unwrap();
        let path = tmp("half.bin");
        write_snapshot(&path, &u).unwrap();
        let back = read_snapshot(&path).unwrap();
        assert!(back.grid().half_domain);
        assert_eq!(back.grid(), u.grid());
    }

    #[test]
    fn malformed_headers_and_truncation_are_rejected() {
        let path = tmp("garbage.bin");
        std::fs::write(&path, b"NOTNSANISO v9 whatever\n").unwrap();
        assert!(matches!(read_snapshot(&path), Err(IoError::Format(_))));

        let g = build_grid(4, 4, 4, 1.0, 1.0, false).unwrap();
        let u = samples::random_solenoidal(&g, 0.5, 33).unwrap();
        let full = tmp("full.bin");
        write_snapshot(&full, &u).unwrap();
        let bytes = std::fs::read(&full).unwrap();
        let cut = tmp("cut.bin");
        std::fs::write(&cut, &bytes[..bytes.len() - 9]).unwrap();
        assert!(matches!(read_snapshot(&cut), Err(IoError::Format(_))));
        let padded = tmp("padded.bin");
        let mut extra = bytes.clone();
        extra.push(0);
        std::fs::write(&padded, &extra).unwrap();
        assert!(matches!(read_snapshot(&padded), Err(IoError::Format(_))));
    }

    #[test]
    fn ledger_csv_has_header_even_when_empty() {
        let path = tmp("empty.csv");
        write_ledger_csv(&path, &EnergyLedger::new()).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.trim_end(), LedgerRow::CSV_HEADER);
        let checks = tmp("checks.csv");
        write_checks_csv(
            &checks,
            &[CheckRow::new("alpha", 7, true, 1.0), CheckRow::new("beta", 9, false, -0.5)],
        )
        .unwrap();
        let text = std::fs::read_to_string(&checks).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], CheckRow::CSV_HEADER);
        assert!(lines[2].starts_with("beta,"));
    }
}
