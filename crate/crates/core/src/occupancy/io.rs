//! map_server compatible persistence: a binary PGM raster plus a YAML
//! metadata file.
//!
//! Pixels: 0 = occupied, 254 = free, 205 = unknown, first row = top of the
//! map (largest y). Inflated cells are written as occupied.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CellState, TrinaryGrid};
use crate::error::{Error, Result};
use crate::geometry::{Cell, GridMeta, Pose2D};

pub const PIXEL_OCCUPIED: u8 = 0;
pub const PIXEL_FREE: u8 = 254;
pub const PIXEL_UNKNOWN: u8 = 205;

const OCCUPIED_THRESH: f64 = 0.65;
const FREE_THRESH: f64 = 0.196;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapYaml {
    pub image: String,
    pub resolution: f64,
    pub origin: [f64; 3],
    pub negate: i32,
    pub occupied_thresh: f64,
    pub free_thresh: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
}

impl MapYaml {
    fn render(&self) -> String {
        format!(
            "image: {}\nresolution: {:.6}\norigin: [{:.6}, {:.6}, {:.6}]\nnegate: {}\noccupied_thresh: {}\nfree_thresh: {}\n\n",
            self.image,
            self.resolution,
            self.origin[0],
            self.origin[1],
            self.origin[2],
            self.negate,
            self.occupied_thresh,
            self.free_thresh
        )
    }
}

fn pixel(state: CellState) -> u8 {
    match state {
        CellState::Free => PIXEL_FREE,
        CellState::Occupied | CellState::Inflated => PIXEL_OCCUPIED,
        CellState::Unknown => PIXEL_UNKNOWN,
    }
}

/// Encodes the grid as a binary (P5) PGM.
pub fn write_pgm(grid: &TrinaryGrid) -> Vec<u8> {
    let meta = grid.meta();
    let mut out = format!(
        "P5\n# CREATOR: semmap {:.3} m/pix\n{} {}\n255\n",
        meta.resolution, meta.width, meta.height
    )
    .into_bytes();
    out.reserve(meta.len());
    for row in (0..meta.height).rev() {
        for col in 0..meta.width {
            out.push(pixel(grid.get(Cell::new(row, col))));
        }
    }
    out
}

/// Writes `<pgm_path>` and `<yaml_path>`. The YAML `image` key holds the PGM
/// file name relative to the YAML file.
pub fn save_map(grid: &TrinaryGrid, pgm_path: &Path, yaml_path: &Path) -> Result<()> {
    let meta = grid.meta();
    let image = pgm_path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .ok_or_else(|| Error::InvalidParam(format!("bad map path {}", pgm_path.display())))?;
    let yaml = MapYaml {
        image,
        resolution: meta.resolution,
        origin: [meta.origin.x, meta.origin.y, meta.origin.theta],
        negate: 0,
        occupied_thresh: OCCUPIED_THRESH,
        free_thresh: FREE_THRESH,
        mode: None,
    };
    fs::write(pgm_path, write_pgm(grid)).map_err(|e| Error::io(pgm_path, e))?;
    fs::write(yaml_path, yaml.render()).map_err(|e| Error::io(yaml_path, e))?;
    Ok(())
}

struct Header {
    width: usize,
    height: usize,
    maxval: usize,
    data_start: usize,
}

fn parse_header(bytes: &[u8], name: &str) -> Result<Header> {
    let err = |pos: usize, msg: &str| Error::parse(name, format!("byte {pos}"), msg);
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(err(0, "missing P5 magic"));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // skip whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(err(pos, "truncated header")),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| b.is_ascii_digit()) {
            pos += 1;
        }
        if start == pos {
            return Err(err(pos, "expected an integer"));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| err(start, "integer out of range"))?;
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(err(pos, "expected whitespace after maxval")),
    }
    Ok(Header {
        width: fields[0],
        height: fields[1],
        maxval: fields[2],
        data_start: pos,
    })
}

/// Decodes a P5 PGM into `(width, height, pixels)` with pixels in file order.
pub fn read_pgm(bytes: &[u8], name: &str) -> Result<(usize, usize, Vec<u8>)> {
    let h = parse_header(bytes, name)?;
    if h.maxval != 255 {
        return Err(Error::parse(
            name,
            format!("byte {}", h.data_start),
            "only maxval 255 is supported",
        ));
    }
    if h.width == 0 || h.height == 0 {
        return Err(Error::parse(name, "header", "image has zero size"));
    }
    let expected = h.width * h.height;
    let data = &bytes[h.data_start..];
    if data.len() < expected {
        return Err(Error::parse(
            name,
            format!("byte {}", bytes.len()),
            format!("truncated raster: expected {expected} pixels, found {}", data.len()),
        ));
    }
    Ok((h.width, h.height, data[..expected].to_vec()))
}

/// Loads a map from its YAML file, resolving `image` relative to it and
/// classifying pixels with the YAML thresholds.
pub fn load_map(yaml_path: &Path) -> Result<TrinaryGrid> {
    let name = yaml_path.display().to_string();
    let text = fs::read_to_string(yaml_path).map_err(|e| Error::io(yaml_path, e))?;
    let yaml: MapYaml = serde_yaml::from_str(&text).map_err(|e| {
        let location = e
            .location()
            .map(|l| format!("line {} column {}", l.line(), l.column()))
            .unwrap_or_else(|| "unknown position".into());
        Error::parse(&name, location, e.to_string())
    })?;
    if yaml.mode.as_deref().is_some_and(|m| m != "trinary") {
        return Err(Error::parse(&name, "mode", "only trinary maps are supported"));
    }
    let pgm_path = yaml_path.parent().unwrap_or_else(|| Path::new(".")).join(&yaml.image);
    let bytes = fs::read(&pgm_path).map_err(|e| Error::io(&pgm_path, e))?;
    let (width, height, pixels) = read_pgm(&bytes, &pgm_path.display().to_string())?;
    let meta = GridMeta::new(
        yaml.resolution,
        Pose2D::new(yaml.origin[0], yaml.origin[1], yaml.origin[2]),
        width,
        height,
    )
    .map_err(|e| Error::parse(&name, "resolution", e.to_string()))?;

    let mut grid = TrinaryGrid::filled(meta, CellState::Unknown);
    for (i, &v) in pixels.iter().enumerate() {
        let file_row = i / width;
        let cell = Cell::new(height - 1 - file_row, i % width);
        let occ = if yaml.negate != 0 {
            f64::from(v) / 255.0
        } else {
            (255.0 - f64::from(v)) / 255.0
        };
        let state = if occ > yaml.occupied_thresh {
            CellState::Occupied
        } else if occ < yaml.free_thresh {
            CellState::Free
        } else {
            CellState::Unknown
        };
        grid.set(cell, state);
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> TrinaryGrid {
        let meta = GridMeta::new(0.1, Pose2D::new(-1.5, 2.0, 0.0), 3, 2).unwrap();
        let cells = vec![
            CellState::Free,
            CellState::Occupied,
            CellState::Unknown,
            CellState::Unknown,
            CellState::Free,
            CellState::Free,
        ];
        TrinaryGrid::from_cells(meta, cells).unwrap()
    }

    #[test]
    fn top_row_is_written_first() {
        let bytes = write_pgm(&sample());
        let (w, h, px) = read_pgm(&bytes, "mem").unwrap();
        assert_eq!((w, h), (3, 2));
        assert_eq!(px, vec![205, 254, 254, 254, 0, 205]);
    }

    #[test]
    fn yaml_text_matches_map_saver_layout() {
        let dir = tempfile::tempdir().unwrap();
        save_map(&sample(), &dir.path().join("map.pgm"), &dir.path().join("map.yaml")).unwrap();
        let text = fs::read_to_string(dir.path().join("map.yaml")).unwrap();
        assert_eq!(
            text,
            "image: map.pgm\nresolution: 0.100000\norigin: [-1.500000, 2.000000, 0.000000]\n\
             negate: 0\noccupied_thresh: 0.65\nfree_thresh: 0.196\n\n"
        );
        assert_eq!(load_map(&dir.path().join("map.yaml")).unwrap(), sample());
    }

    #[test]
    fn truncated_raster_reports_position() {
        let mut bytes = write_pgm(&sample());
        bytes.truncate(bytes.len() - 2);
        let err = read_pgm(&bytes, "t.pgm").unwrap_err();
        assert!(err.to_string().contains("truncated raster"), "{err}");
        assert!(read_pgm(b"P2\n1 1\n255\n", "x").is_err());
        assert!(read_pgm(b"P5\n1", "x").is_err());
    }

    #[test]
    fn inflated_cells_persist_as_occupied() {
        let meta = GridMeta::new(1.0, Pose2D::default(), 1, 1).unwrap();
        let g = TrinaryGrid::from_cells(meta, vec![CellState::Inflated]).unwrap();
        assert_eq!(*write_pgm(&g).last().unwrap(), PIXEL_OCCUPIED);
    }
}
