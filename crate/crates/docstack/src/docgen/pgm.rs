//! Binary PGM (P5) image I/O. Chosen for the corpus because every tool can
//! read it and it needs no codec dependency.

use crate::error::{Error, Result};
use std::io::Write;
use std::path::Path;

pub fn write_pgm(path: &Path, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    if pixels.len() != width * height {
        return Err(Error::DataLength {
            context: "write_pgm",
            expected: width * height,
            got: pixels.len(),
        });
    }
    let mut buf = Vec::with_capacity(pixels.len() + 32);
    write!(buf, "P5\n{width} {height}\n255\n").expect("vec write");
    buf.extend_from_slice(pixels);
    std::fs::write(path, buf).map_err(Error::io(format!("writing {}", path.display())))
}

pub fn read_pgm(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let bytes = std::fs::read(path).map_err(Error::io(format!("reading {}", path.display())))?;
    let bad = |msg: &str| Error::Parse {
        path: path.to_path_buf(),
        line: 1,
        msg: msg.to_string(),
    };
    if !bytes.starts_with(b"P5") {
        return Err(bad("not a P5 PGM file"));
    }
    // Header: magic, width, height, maxval, each separated by whitespace;
    // one whitespace byte precedes the raster.
    let mut pos = 2usize;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("malformed PGM header"));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .map_err(|_| bad("malformed PGM header"))?
            .parse()
            .map_err(|_| bad("malformed PGM header"))?;
    }
    let (width, height, maxval) = (fields[0], fields[1], fields[2]);
    if maxval != 255 {
        return Err(bad("only maxval 255 supported"));
    }
    pos += 1; // single whitespace byte before raster
    let needed = width * height;
    if bytes.len() < pos + needed {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            needed: pos + needed - bytes.len(),
        });
    }
    Ok((width, height, bytes[pos..pos + needed].to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.pgm");
        let px: Vec<u8> = (0..12).map(|i| (i * 20) as u8).collect();
        write_pgm(&path, 4, 3, &px).unwrap();
        let (w, h, back) = read_pgm(&path).unwrap();
        assert_eq!((w, h), (4, 3));
        assert_eq!(back, px);
    }

    #[test]
    fn truncation_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.pgm");
        std::fs::write(&path, b"P5\n4 3\n255\nshort").unwrap();
        assert!(matches!(
            read_pgm(&path),
            Err(Error::Truncated { .. })
        ));
    }
}
