//! Raster view of a semantic map: grayscale occupancy, one colored disk per
//! object node and an optional tour polyline.

use std::io::Cursor;

use image::codecs::png::PngEncoder;
use image::{ImageEncoder, Rgb, RgbImage};

use semmap::geometry::{GridMeta, Point2};
use semmap::occupancy::CellState;
use semmap::semantic::SemanticMap;
use semmap::traversal::Tour;

pub const TOUR_COLOR: Rgb<u8> = Rgb([255, 140, 0]);

const PALETTE: [(&str, Rgb<u8>); 3] = [
    ("chair", Rgb([220, 30, 30])),
    ("table", Rgb([30, 80, 220])),
    ("door", Rgb([20, 160, 60])),
];

fn gray(state: CellState) -> Rgb<u8> {
    let v = match state {
        CellState::Free => 254,
        CellState::Unknown => 205,
        CellState::Occupied | CellState::Inflated => 0,
    };
    Rgb([v, v, v])
}

/// Fixed colors for the default categories; other names hash to a color
/// that avoids the grays and the tour color.
pub fn category_color(category: &str) -> Rgb<u8> {
    if let Some((_, c)) = PALETTE.iter().find(|(name, _)| *name == category) {
        return *c;
    }
    let mut h: u32 = 0x811c_9dc5;
    for b in category.bytes() {
        h = (h ^ u32::from(b)).wrapping_mul(0x0100_0193);
    }
    Rgb([
        (h & 0x7f) as u8 + 100,
        ((h >> 8) & 0x7f) as u8,
        ((h >> 16) & 0x7f) as u8 + 128,
    ])
}

/// Marker radius in pixels for a given cell scale.
pub fn marker_radius(scale: u32) -> i64 {
    i64::from(scale.max(1)) * 3 / 2 + 1
}

/// Pixel at the center of the cell containing `p`, if it lies on the map.
pub fn cell_center_pixel(meta: &GridMeta, p: Point2, scale: u32) -> Option<(i64, i64)> {
    let cell = meta.world_to_grid(p).ok()?;
    let s = i64::from(scale);
    let x = cell.col as i64 * s + s / 2;
    let y = (meta.height - 1 - cell.row) as i64 * s + s / 2;
    Some((x, y))
}

fn continuous_pixel(meta: &GridMeta, p: Point2, scale: u32) -> (i64, i64) {
    let (col, row) = meta.continuous_coords(p);
    let s = f64::from(scale);
    (
        (col * s).floor() as i64,
        ((meta.height as f64 - row) * s).floor() as i64,
    )
}

fn put(img: &mut RgbImage, x: i64, y: i64, color: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, color);
    }
}

fn line(img: &mut RgbImage, (x0, y0): (i64, i64), (x1, y1): (i64, i64), color: Rgb<u8>) {
    let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
    let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
    let (mut x, mut y, mut err) = (x0, y0, dx + dy);
    loop {
        put(img, x, y, color);
        if (x, y) == (x1, y1) {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

fn disk(img: &mut RgbImage, (cx, cy): (i64, i64), radius: i64, color: Rgb<u8>) {
    for dy in -radius..=radius {
        for dx in -radius..=radius {
            if dx * dx + dy * dy <= radius * radius {
                put(img, cx + dx, cy + dy, color);
            }
        }
    }
}

/// `scale` pixels per cell; the first image row is the top of the map.
pub fn render(map: &SemanticMap, tour: Option<&Tour>, scale: u32) -> RgbImage {
    let scale = scale.max(1);
    let meta = *map.occupancy.meta();
    let mut img = RgbImage::new(meta.width as u32 * scale, meta.height as u32 * scale);
    for (cell, state) in map.occupancy.iter_cells() {
        let x0 = cell.col as u32 * scale;
        let y0 = (meta.height - 1 - cell.row) as u32 * scale;
        for y in y0..y0 + scale {
            for x in x0..x0 + scale {
                img.put_pixel(x, y, gray(state));
            }
        }
    }
    if let Some(tour) = tour {
        for w in tour.points.windows(2) {
            line(
                &mut img,
                continuous_pixel(&meta, w[0], scale),
                continuous_pixel(&meta, w[1], scale),
                TOUR_COLOR,
            );
        }
    }
    for node in map.topo.nodes() {
        if let Some(center) = cell_center_pixel(&meta, node.position.xy(), scale) {
            disk(&mut img, center, marker_radius(scale), category_color(&node.category));
        }
    }
    img
}

pub fn encode_png(img: &RgbImage) -> Result<Vec<u8>, image::ImageError> {
    let mut out = Cursor::new(Vec::new());
    PngEncoder::new(&mut out).write_image(img.as_raw(), img.width(), img.height(), image::ExtendedColorType::Rgb8)?;
    Ok(out.into_inner())
}
