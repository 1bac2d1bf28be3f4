//! Plain-text artifact formats.
//!
//! Structured files are a TOML header followed by `%%name [arg]` sections of
//! whitespace-separated rows. Floats are written with Rust's shortest
//! round-trip formatting, so reading a file back is lossless. Tables are
//! comma-separated with a header line. Every write goes to a temporary file
//! in the target directory that is then renamed into place.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dictionary::{DictionaryGrid, SparseSpectrum};
use crate::error::{Error, Result};
use crate::scene::{Patch, PatchKind, Snapshot};
use crate::stap::{Method, SoiSpec, StapFilter};
use crate::C64;

pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    use std::io::Write;
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// One `%%` section: name, optional argument and rows with line numbers.
#[derive(Debug)]
struct Section<'a> {
    name: &'a str,
    arg: Option<&'a str>,
    line: usize,
    rows: Vec<(usize, Vec<&'a str>)>,
}

struct Document<'a> {
    header: String,
    sections: Vec<Section<'a>>,
}

fn parse_document(text: &str) -> Result<Document<'_>> {
    let mut header = String::new();
    let mut sections: Vec<Section> = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let lineno = k + 1;
        if let Some(rest) = line.strip_prefix("%%") {
            let mut parts = rest.split_whitespace();
            let name = parts.next().ok_or_else(|| parse_err(lineno, "section marker without a name"))?;
            sections.push(Section {
                name,
                arg: parts.next(),
                line: lineno,
                rows: Vec::new(),
            });
            continue;
        }
        match sections.last_mut() {
            None => {
                header.push_str(line);
                header.push('\n');
            }
            Some(section) => {
                let trimmed = line.trim();
                if trimmed.is_empty() || trimmed.starts_with('#') {
                    continue;
                }
                section.rows.push((lineno, trimmed.split_whitespace().collect()));
            }
        }
    }
    Ok(Document { header, sections })
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn parse_header<T: for<'de> Deserialize<'de>>(doc: &Document) -> Result<T> {
    toml::from_str(&doc.header).map_err(|e| {
        let line = e
            .span()
            .map(|s| doc.header[..s.start].matches('\n').count() + 1)
            .unwrap_or(1);
        parse_err(line, e.message().to_string())
    })
}

fn check_format(found: &str, expected: &str) -> Result<()> {
    if found == expected {
        Ok(())
    } else {
        Err(parse_err(1, format!("expected format `{expected}`, found `{found}`")))
    }
}

fn field<T: std::str::FromStr>(row: &(usize, Vec<&str>), k: usize) -> Result<T> {
    let (line, fields) = row;
    let raw = fields
        .get(k)
        .ok_or_else(|| parse_err(*line, format!("expected at least {} fields, found {}", k + 1, fields.len())))?;
    raw.parse()
        .map_err(|_| parse_err(*line, format!("cannot parse field {} (`{raw}`)", k + 1)))
}

fn expect_fields(row: &(usize, Vec<&str>), n: usize) -> Result<()> {
    if row.1.len() == n {
        Ok(())
    } else {
        Err(parse_err(row.0, format!("expected {n} fields, found {}", row.1.len())))
    }
}

fn complex_at(row: &(usize, Vec<&str>), k: usize) -> Result<C64> {
    Ok(C64::new(field(row, k)?, field(row, k + 1)?))
}

fn header_text<T: Serialize>(header: &T) -> Result<String> {
    toml::to_string(header).map_err(|e| Error::Config(format!("cannot serialize header: {e}")))
}

// ---------------------------------------------------------------- cubes

const CUBE_FORMAT: &str = "d3sr-cube";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CubeHeader {
    pub format: String,
    pub num_channels: usize,
    pub num_pulses: usize,
    /// Master seed the cube was drawn from, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl CubeHeader {
    pub fn new(num_channels: usize, num_pulses: usize, seed: Option<u64>) -> Self {
        Self {
            format: CUBE_FORMAT.into(),
            num_channels,
            num_pulses,
            seed,
        }
    }
}

/// Snapshots with their truth decomposition and realized patches. Each
/// `%%snapshot <cell>` row is `k` followed by the real and imaginary parts
/// of data, clutter, interference, target and noise.
pub fn format_cube(header: &CubeHeader, cube: &[Snapshot]) -> Result<String> {
    let mut out = String::from("# space-time snapshots, index k = n*M + m\n");
    out.push_str(&header_text(header)?);
    for s in cube {
        writeln!(out, "%%snapshot {}", s.range_cell).unwrap();
        out.push_str("# k data clutter interference target noise (re im each)\n");
        for k in 0..s.len() {
            write!(out, "{k}").unwrap();
            for v in [&s.data, &s.clutter, &s.interference, &s.target, &s.noise] {
                write!(out, " {} {}", v[k].re, v[k].im).unwrap();
            }
            out.push('\n');
        }
        writeln!(out, "%%patches {}", s.range_cell).unwrap();
        for p in &s.patches {
            let kind = match p.kind {
                PatchKind::Clutter => "clutter",
                PatchKind::Interference => "interference",
            };
            writeln!(
                out,
                "{kind} {} {} {} {}",
                p.spatial_freq, p.normalized_doppler, p.amplitude.re, p.amplitude.im
            )
            .unwrap();
        }
    }
    Ok(out)
}

pub fn parse_cube(text: &str) -> Result<(CubeHeader, Vec<Snapshot>)> {
    let doc = parse_document(text)?;
    let header: CubeHeader = parse_header(&doc)?;
    check_format(&header.format, CUBE_FORMAT)?;
    let nm = header.num_channels * header.num_pulses;
    let mut cube: Vec<Snapshot> = Vec::new();
    for section in &doc.sections {
        let cell: usize = section
            .arg
            .ok_or_else(|| parse_err(section.line, "section needs a range cell"))?
            .parse()
            .map_err(|_| parse_err(section.line, "range cell must be a non-negative integer"))?;
        match section.name {
            "snapshot" => {
                if section.rows.len() != nm {
                    return Err(parse_err(
                        section.line,
                        format!("expected {nm} rows, found {}", section.rows.len()),
                    ));
                }
                let mut cols: [Vec<C64>; 5] = Default::default();
                for (k, row) in section.rows.iter().enumerate() {
                    expect_fields(row, 11)?;
                    if field::<usize>(row, 0)? != k {
                        return Err(parse_err(row.0, format!("expected row index {k}")));
                    }
                    for (c, col) in cols.iter_mut().enumerate() {
                        col.push(complex_at(row, 1 + 2 * c)?);
                    }
                }
                let [data, clutter, interference, target, noise] = cols;
                cube.push(Snapshot {
                    range_cell: cell,
                    data,
                    clutter,
                    interference,
                    target,
                    noise,
                    patches: Vec::new(),
                });
            }
            "patches" => {
                let snap = cube
                    .last_mut()
                    .filter(|s| s.range_cell == cell)
                    .ok_or_else(|| parse_err(section.line, "patches must follow their snapshot"))?;
                for row in &section.rows {
                    expect_fields(row, 5)?;
                    let kind = match row.1[0] {
                        "clutter" => PatchKind::Clutter,
                        "interference" => PatchKind::Interference,
                        other => return Err(parse_err(row.0, format!("unknown patch kind `{other}`"))),
                    };
                    snap.patches.push(Patch {
                        kind,
                        spatial_freq: field(row, 1)?,
                        normalized_doppler: field(row, 2)?,
                        amplitude: complex_at(row, 3)?,
                    });
                }
            }
            other => return Err(parse_err(section.line, format!("unknown section `{other}`"))),
        }
    }
    if cube.is_empty() {
        return Err(parse_err(1, "file contains no snapshot"));
    }
    Ok((header, cube))
}

pub fn write_cube(path: &Path, header: &CubeHeader, cube: &[Snapshot]) -> Result<()> {
    write_atomic(path, format_cube(header, cube)?.as_bytes())
}

pub fn read_cube(path: &Path) -> Result<(CubeHeader, Vec<Snapshot>)> {
    parse_cube(&std::fs::read_to_string(path)?)
}

// ------------------------------------------------------------- spectra

const SPECTRUM_FORMAT: &str = "d3sr-spectrum";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumHeader {
    pub format: String,
    /// `fourier` for the matched-filter input spectrum, otherwise the method.
    pub source: String,
    pub rho_s: usize,
    pub rho_t: usize,
    pub num_channels: usize,
    pub num_pulses: usize,
    pub iterations: usize,
    pub restarts: usize,
    pub residual_norm: f64,
    pub noise_power: f64,
}

/// Dense complex spectrum on the grid. Rows are
/// `spatial_bin doppler_bin spatial_freq doppler re im power_db`, with
/// `power_db = 10 log10(|a|² / σ²)`.
pub fn format_spectrum(
    grid: &DictionaryGrid,
    source: &str,
    spectrum: &SparseSpectrum,
    noise_power: f64,
) -> Result<String> {
    if spectrum.amplitudes.len() != grid.len() {
        return Err(Error::DimensionMismatch {
            expected: grid.len(),
            found: spectrum.amplitudes.len(),
        });
    }
    let header = SpectrumHeader {
        format: SPECTRUM_FORMAT.into(),
        source: source.into(),
        rho_s: grid.rho_s,
        rho_t: grid.rho_t,
        num_channels: grid.num_channels,
        num_pulses: grid.num_pulses,
        iterations: spectrum.iterations,
        restarts: spectrum.restarts,
        residual_norm: spectrum.residual_norm,
        noise_power,
    };
    let mut out = header_text(&header)?;
    out.push_str("%%cells\n# spatial_bin doppler_bin spatial_freq doppler re im power_db\n");
    for (idx, a) in spectrum.amplitudes.iter().enumerate() {
        let (i, j) = grid.coords(idx);
        let (f, d) = grid.frequencies(idx);
        let p = a.norm_sqr();
        let db = if p == 0.0 { f64::NEG_INFINITY } else { 10.0 * (p / noise_power).log10() };
        writeln!(out, "{i} {j} {f} {d} {} {} {db}", a.re, a.im).unwrap();
    }
    Ok(out)
}

/// Reads a spectrum back; the support is the set of nonzero cells.
pub fn parse_spectrum(text: &str) -> Result<(SpectrumHeader, SparseSpectrum)> {
    let doc = parse_document(text)?;
    let header: SpectrumHeader = parse_header(&doc)?;
    check_format(&header.format, SPECTRUM_FORMAT)?;
    let n_s = header.rho_s * header.num_channels;
    let n_t = header.rho_t * header.num_pulses;
    let section = single_section(&doc, "cells")?;
    if section.rows.len() != n_s * n_t {
        return Err(parse_err(
            section.line,
            format!("expected {} rows, found {}", n_s * n_t, section.rows.len()),
        ));
    }
    let mut amplitudes = vec![C64::new(0.0, 0.0); n_s * n_t];
    let mut seen = vec![false; n_s * n_t];
    for row in &section.rows {
        expect_fields(row, 7)?;
        let i: usize = field(row, 0)?;
        let j: usize = field(row, 1)?;
        if i >= n_s || j >= n_t {
            return Err(parse_err(row.0, format!("bin ({i}, {j}) outside the {n_s}x{n_t} grid")));
        }
        let idx = j * n_s + i;
        if std::mem::replace(&mut seen[idx], true) {
            return Err(parse_err(row.0, format!("bin ({i}, {j}) listed twice")));
        }
        amplitudes[idx] = complex_at(row, 4)?;
    }
    let support = (0..amplitudes.len()).filter(|&k| amplitudes[k] != C64::new(0.0, 0.0)).collect();
    Ok((
        header.clone(),
        SparseSpectrum {
            amplitudes,
            support,
            iterations: header.iterations,
            restarts: header.restarts,
            residual_norm: header.residual_norm,
        },
    ))
}

fn single_section<'a>(doc: &'a Document, name: &str) -> Result<&'a Section<'a>> {
    let mut found = doc.sections.iter().filter(|s| s.name == name);
    let first = found
        .next()
        .ok_or_else(|| parse_err(doc.header.lines().count() + 1, format!("missing `%%{name}` section")))?;
    if let Some(dup) = found.next() {
        return Err(parse_err(dup.line, format!("duplicate `%%{name}` section")));
    }
    if let Some(other) = doc.sections.iter().find(|s| s.name != name) {
        return Err(parse_err(other.line, format!("unknown section `{}`", other.name)));
    }
    Ok(first)
}

// ---------------------------------------------------------- power maps

const MAP_FORMAT: &str = "d3sr-map";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapHeader {
    pub format: String,
    pub method: Method,
    pub rho_s: usize,
    pub rho_t: usize,
    pub num_channels: usize,
    pub num_pulses: usize,
}

/// Dense dB map, rows `spatial_bin doppler_bin spatial_freq doppler power_db`.
pub fn format_map(grid: &DictionaryGrid, method: Method, map_db: &[f64]) -> Result<String> {
    if map_db.len() != grid.len() {
        return Err(Error::DimensionMismatch {
            expected: grid.len(),
            found: map_db.len(),
        });
    }
    let header = MapHeader {
        format: MAP_FORMAT.into(),
        method,
        rho_s: grid.rho_s,
        rho_t: grid.rho_t,
        num_channels: grid.num_channels,
        num_pulses: grid.num_pulses,
    };
    let mut out = header_text(&header)?;
    out.push_str("%%cells\n# spatial_bin doppler_bin spatial_freq doppler power_db\n");
    for (idx, p) in map_db.iter().enumerate() {
        let (i, j) = grid.coords(idx);
        let (f, d) = grid.frequencies(idx);
        writeln!(out, "{i} {j} {f} {d} {p}").unwrap();
    }
    Ok(out)
}

pub fn parse_map(text: &str) -> Result<(MapHeader, Vec<f64>)> {
    let doc = parse_document(text)?;
    let header: MapHeader = parse_header(&doc)?;
    check_format(&header.format, MAP_FORMAT)?;
    let n_s = header.rho_s * header.num_channels;
    let n = n_s * header.rho_t * header.num_pulses;
    let section = single_section(&doc, "cells")?;
    if section.rows.len() != n {
        return Err(parse_err(section.line, format!("expected {n} rows, found {}", section.rows.len())));
    }
    let mut map = vec![f64::NAN; n];
    for row in &section.rows {
        expect_fields(row, 5)?;
        let i: usize = field(row, 0)?;
        let j: usize = field(row, 1)?;
        let idx = j * n_s + i;
        if i >= n_s || idx >= n {
            return Err(parse_err(row.0, format!("bin ({i}, {j}) outside the grid")));
        }
        map[idx] = field(row, 4)?;
    }
    Ok((header, map))
}

// -------------------------------------------------------------- filters

const FILTER_FORMAT: &str = "d3sr-filter";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterHeader {
    pub format: String,
    pub method: Method,
    pub soi_spatial_freq: f64,
    pub soi_doppler: f64,
    pub guard_spatial: usize,
    pub guard_doppler: usize,
    pub gain_re: f64,
    pub gain_im: f64,
    pub rank_deficient: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subaperture: Option<[usize; 2]>,
}

/// Filter weights as `k re im` rows, with D3LS subaperture weights in a
/// second section.
pub fn format_filter(filter: &StapFilter) -> Result<String> {
    let header = FilterHeader {
        format: FILTER_FORMAT.into(),
        method: filter.method,
        soi_spatial_freq: filter.soi.spatial_freq,
        soi_doppler: filter.soi.normalized_doppler,
        guard_spatial: filter.soi.guard_spatial,
        guard_doppler: filter.soi.guard_doppler,
        gain_re: filter.gain.re,
        gain_im: filter.gain.im,
        rank_deficient: filter.rank_deficient,
        subaperture: filter.subaperture.as_ref().map(|(a, p, _)| [*a, *p]),
    };
    let mut out = header_text(&header)?;
    out.push_str("%%weights\n");
    for (k, w) in filter.weights.iter().enumerate() {
        writeln!(out, "{k} {} {}", w.re, w.im).unwrap();
    }
    if let Some((_, _, w)) = &filter.subaperture {
        out.push_str("%%subaperture\n");
        for (k, v) in w.iter().enumerate() {
            writeln!(out, "{k} {} {}", v.re, v.im).unwrap();
        }
    }
    Ok(out)
}

fn weight_rows(section: &Section) -> Result<Vec<C64>> {
    section
        .rows
        .iter()
        .enumerate()
        .map(|(k, row)| {
            expect_fields(row, 3)?;
            if field::<usize>(row, 0)? != k {
                return Err(parse_err(row.0, format!("expected row index {k}")));
            }
            complex_at(row, 1)
        })
        .collect()
}

pub fn parse_filter(text: &str) -> Result<StapFilter> {
    let doc = parse_document(text)?;
    let header: FilterHeader = parse_header(&doc)?;
    check_format(&header.format, FILTER_FORMAT)?;
    let mut weights = None;
    let mut sub = None;
    for section in &doc.sections {
        let slot = match section.name {
            "weights" => &mut weights,
            "subaperture" => &mut sub,
            other => return Err(parse_err(section.line, format!("unknown section `{other}`"))),
        };
        if slot.replace(weight_rows(section)?).is_some() {
            return Err(parse_err(section.line, format!("duplicate `%%{}` section", section.name)));
        }
    }
    let weights = weights.ok_or_else(|| parse_err(1, "missing `%%weights` section"))?;
    let subaperture = match (header.subaperture, sub) {
        (Some([a, p]), Some(w)) if w.len() == a * p => Some((a, p, w)),
        (None, None) => None,
        _ => return Err(parse_err(1, "subaperture header and section disagree")),
    };
    Ok(StapFilter {
        weights,
        method: header.method,
        soi: SoiSpec::new(header.soi_spatial_freq, header.soi_doppler)
            .with_guard(header.guard_spatial, header.guard_doppler),
        gain: C64::new(header.gain_re, header.gain_im),
        subaperture,
        rank_deficient: header.rank_deficient,
    })
}

pub fn write_filter(path: &Path, filter: &StapFilter) -> Result<()> {
    write_atomic(path, format_filter(filter)?.as_bytes())
}

pub fn read_filter(path: &Path) -> Result<StapFilter> {
    parse_filter(&std::fs::read_to_string(path)?)
}

// --------------------------------------------------------------- tables

/// Comma-separated table with a header line.
pub fn format_table(columns: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = columns.join(",");
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}


#[cfg(test)]
mod props {
    use super::*;
    use crate::geometry::RadarConfig;
    use proptest::prelude::*;

    fn real() -> impl Strategy<Value = f64> {
        prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO
    }

    fn complex() -> impl Strategy<Value = C64> {
        (real(), real()).prop_map(|(re, im)| C64::new(re, im))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn cube_text_is_lossless(cells in prop::collection::vec(prop::collection::vec(complex(), 16), 1..4), seed in any::<Option<u64>>()) {
            let cube: Vec<Snapshot> = cells
                .iter()
                .enumerate()
                .map(|(k, v)| {
                    Snapshot::from_components(k, v[0..4].to_vec(), v[4..8].to_vec(), v[8..12].to_vec(), v[12..16].to_vec(), Vec::new())
                })
                .collect();
            let header = CubeHeader::new(2, 2, seed);
            let (h, back) = parse_cube(&format_cube(&header, &cube).unwrap()).unwrap();
            prop_assert_eq!(h, header);
            prop_assert_eq!(back, cube);
        }

        #[test]
        fn spectrum_text_is_lossless(values in prop::collection::vec(complex(), 24), iterations in 0usize..1000) {
            let cfg = RadarConfig {
                num_channels: 3,
                num_pulses: 2,
                ..RadarConfig::table_one()
            };
            let grid = DictionaryGrid::new(&cfg, 2, 2).unwrap();
            let mut s = SparseSpectrum::zero(grid.len());
            s.amplitudes = values;
            s.support = (0..grid.len()).filter(|&i| s.amplitudes[i] != C64::new(0.0, 0.0)).collect();
            s.iterations = iterations;
            let (_, back) = parse_spectrum(&format_spectrum(&grid, "d3sr-l1", &s, 1.0).unwrap()).unwrap();
            prop_assert_eq!(back.amplitudes, s.amplitudes);
            prop_assert_eq!(back.support, s.support);
        }

        #[test]
        fn filter_text_is_lossless(weights in prop::collection::vec(complex(), 1..10), gain in complex(), f in -0.5..0.5f64, d in -0.5..0.5f64) {
            let filter = StapFilter {
                weights,
                method: Method::Lsmi,
                soi: SoiSpec::new(f, d),
                gain,
                subaperture: None,
                rank_deficient: false,
            };
            prop_assert_eq!(parse_filter(&format_filter(&filter).unwrap()).unwrap(), filter);
        }
    }
}
