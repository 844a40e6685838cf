//! Bit-exact text formats for CFR sets and impairment profiles.
//!
//! Each file is a JSON header line followed by one data line per record.
//! Floats are written as the 16-digit hex of their IEEE-754 bits so a
//! write/read cycle is lossless.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{ArrayGeometry, CfrSet, DirectionGrid, ImpairmentProfile, WaveformConfig};

pub fn f64_to_hex(x: f64) -> String {
    format!("{:016x}", x.to_bits())
}

pub fn hex_to_f64(s: &str) -> Result<f64> {
    if s.len() != 16 {
        return Err(Error::Parse(format!("expected 16 hex digits, got '{s}'")));
    }
    u64::from_str_radix(s, 16)
        .map(f64::from_bits)
        .map_err(|e| Error::Parse(format!("bad hex float '{s}': {e}")))
}

fn push_complex(line: &mut String, z: Complex64) {
    if !line.is_empty() {
        line.push(' ');
    }
    line.push_str(&f64_to_hex(z.re));
    line.push(' ');
    line.push_str(&f64_to_hex(z.im));
}

fn parse_complex_line(line: &str, expected: usize, what: &str) -> Result<Vec<Complex64>> {
    let fields: Vec<&str> = line.split_ascii_whitespace().collect();
    if fields.len() != 2 * expected {
        return Err(Error::Parse(format!(
            "{what}: expected {} fields, found {}",
            2 * expected,
            fields.len()
        )));
    }
    fields
        .chunks_exact(2)
        .map(|p| Ok(Complex64::new(hex_to_f64(p[0])?, hex_to_f64(p[1])?)))
        .collect()
}

fn split_header(text: &str) -> Result<(&str, std::str::Lines<'_>)> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Parse("empty file".into()))?;
    Ok((header, lines))
}

#[derive(Serialize, Deserialize)]
struct CfrHeader {
    format: String,
    version: u32,
    geometry: ArrayGeometry,
    waveform: WaveformConfig,
    seed: u64,
    num_elements: usize,
    num_subcarriers: usize,
}

const CFR_FORMAT: &str = "aoa-cfr";
const PROFILE_FORMAT: &str = "aoa-profile";
const VERSION: u32 = 1;

/// Header line, then one line per subcarrier holding `M` complex entries.
pub fn encode_cfr(cfr: &CfrSet) -> String {
    let header = CfrHeader {
        format: CFR_FORMAT.into(),
        version: VERSION,
        geometry: cfr.geometry,
        waveform: cfr.waveform,
        seed: cfr.seed,
        num_elements: cfr.h.nrows(),
        num_subcarriers: cfr.h.ncols(),
    };
    let mut out = serde_json::to_string(&header).expect("header serialises");
    out.push('\n');
    for k in 0..cfr.h.ncols() {
        let mut line = String::new();
        for m in 0..cfr.h.nrows() {
            push_complex(&mut line, cfr.h[(m, k)]);
        }
        out.push_str(&line);
        out.push('\n');
    }
    out
}

pub fn decode_cfr(text: &str) -> Result<CfrSet> {
    let mut lines = text.lines();
    let cfr = decode_cfr_from(&mut lines)?;
    if lines.next().is_some() {
        return Err(Error::Parse("trailing data after cfr record".into()));
    }
    Ok(cfr)
}

/// Read one CFR record (header plus subcarrier lines) from a line stream,
/// leaving the stream positioned after it.
pub fn decode_cfr_from<'a>(lines: &mut impl Iterator<Item = &'a str>) -> Result<CfrSet> {
    let header = lines.next().ok_or_else(|| Error::Parse("missing cfr header".into()))?;
    let hdr: CfrHeader = serde_json::from_str(header).map_err(|e| Error::Parse(format!("cfr header: {e}")))?;
    if hdr.format != CFR_FORMAT || hdr.version != VERSION {
        return Err(Error::Parse(format!("unsupported cfr format {} v{}", hdr.format, hdr.version)));
    }
    let (m, k) = (hdr.num_elements, hdr.num_subcarriers);
    let mut h = DMatrix::zeros(m, k);
    for kk in 0..k {
        let line = lines
            .next()
            .ok_or_else(|| Error::Parse(format!("cfr has {kk} subcarrier lines, header says {k}")))?;
        for (mm, z) in parse_complex_line(line, m, "cfr line")?.into_iter().enumerate() {
            h[(mm, kk)] = z;
        }
    }
    let cfr = CfrSet {
        h,
        geometry: hdr.geometry,
        waveform: hdr.waveform,
        seed: hdr.seed,
    };
    cfr.validate()?;
    Ok(cfr)
}

#[derive(Serialize, Deserialize)]
struct ProfileHeader {
    format: String,
    version: u32,
    grid: Vec<f64>,
    num_elements: usize,
    num_subcarriers: usize,
    phase_only: bool,
    description: String,
}

/// Header line, then one line per `(angle, subcarrier)` pair (angle-major)
/// holding `M` complex gains.
pub fn encode_profile(p: &ImpairmentProfile) -> String {
    let header = ProfileHeader {
        format: PROFILE_FORMAT.into(),
        version: VERSION,
        grid: p.grid.angles().to_vec(),
        num_elements: p.num_elements,
        num_subcarriers: p.num_subcarriers,
        phase_only: p.phase_only,
        description: p.description.clone(),
    };
    let mut out = serde_json::to_string(&header).expect("header serialises");
    out.push('\n');
    for l in 0..p.num_angles() {
        for k in 0..p.num_subcarriers {
            let mut line = String::new();
            for &g in p.response(k, l) {
                push_complex(&mut line, g);
            }
            out.push_str(&line);
            out.push('\n');
        }
    }
    out
}

pub fn decode_profile(text: &str) -> Result<ImpairmentProfile> {
    let (header, lines) = split_header(text)?;
    let hdr: ProfileHeader =
        serde_json::from_str(header).map_err(|e| Error::Parse(format!("profile header: {e}")))?;
    if hdr.format != PROFILE_FORMAT || hdr.version != VERSION {
        return Err(Error::Parse(format!("unsupported profile format {} v{}", hdr.format, hdr.version)));
    }
    let grid = DirectionGrid::from_angles(hdr.grid)?;
    let (m, k) = (hdr.num_elements, hdr.num_subcarriers);
    let mut profile = ImpairmentProfile::identity(grid, m, k);
    let expected = profile.num_angles() * k;
    let mut count = 0;
    for (row, line) in lines.enumerate() {
        if row >= expected {
            return Err(Error::Parse(format!("profile has more than {expected} rows")));
        }
        let (l, kk) = (row / k, row % k);
        for (mm, g) in parse_complex_line(line, m, "profile line")?.into_iter().enumerate() {
            profile.set_gain(mm, kk, l, g);
        }
        count += 1;
    }
    if count != expected {
        return Err(Error::Parse(format!("profile has {count} rows, header implies {expected}")));
    }
    profile.phase_only = hdr.phase_only;
    profile.description = hdr.description;
    profile.validate()?;
    Ok(profile)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}
