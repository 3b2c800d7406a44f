//! Heatmap overlays and randomization strips. Presentation only.

use cameras::saliency::SaliencyMap;
use image::{Rgb, RgbImage};

/// Colormap anchors `(position, [r, g, b])`, interpolated linearly into a
/// 256-entry table: dark blue, blue, cyan, yellow, red, dark red.
pub const COLORMAP_ANCHORS: [(f32, [f32; 3]); 6] = [
    (0.0, [0.0, 0.0, 0.5]),
    (0.125, [0.0, 0.0, 1.0]),
    (0.375, [0.0, 1.0, 1.0]),
    (0.625, [1.0, 1.0, 0.0]),
    (0.875, [1.0, 0.0, 0.0]),
    (1.0, [0.5, 0.0, 0.0]),
];

pub const OVERLAY_ALPHA: f32 = 0.5;

pub fn colormap_table() -> [[u8; 3]; 256] {
    let mut table = [[0u8; 3]; 256];
    for (i, entry) in table.iter_mut().enumerate() {
        let t = i as f32 / 255.0;
        let seg = COLORMAP_ANCHORS.windows(2).find(|w| t <= w[1].0).expect("anchors cover [0, 1]");
        let (p0, c0) = seg[0];
        let (p1, c1) = seg[1];
        let f = (t - p0) / (p1 - p0);
        for k in 0..3 {
            entry[k] = ((c0[k] + (c1[k] - c0[k]) * f) * 255.0).round() as u8;
        }
    }
    table
}

fn color(table: &[[u8; 3]; 256], v: f32) -> [u8; 3] {
    table[(v.clamp(0.0, 1.0) * 255.0).round() as usize]
}

pub fn heatmap(map: &SaliencyMap) -> RgbImage {
    let table = colormap_table();
    let mut out = RgbImage::new(map.width() as u32, map.height() as u32);
    for (px, v) in out.pixels_mut().zip(map.values()) {
        *px = Rgb(color(&table, *v));
    }
    out
}

/// Alpha-blends the heatmap of `map` onto `image`.
pub fn overlay(image: &RgbImage, map: &SaliencyMap) -> RgbImage {
    let heat = heatmap(map);
    let mut out = image.clone();
    for (px, h) in out.pixels_mut().zip(heat.pixels()) {
        for k in 0..3 {
            let v = (1.0 - OVERLAY_ALPHA) * px.0[k] as f32 + OVERLAY_ALPHA * h.0[k] as f32;
            px.0[k] = v.round() as u8;
        }
    }
    out
}

/// 3x5 digit glyphs, one row per `u8`, high bit on the left.
const DIGITS: [[u8; 5]; 10] = [
    [0b111, 0b101, 0b101, 0b101, 0b111],
    [0b010, 0b110, 0b010, 0b010, 0b111],
    [0b111, 0b001, 0b111, 0b100, 0b111],
    [0b111, 0b001, 0b111, 0b001, 0b111],
    [0b101, 0b101, 0b111, 0b001, 0b001],
    [0b111, 0b100, 0b111, 0b001, 0b111],
    [0b111, 0b100, 0b111, 0b101, 0b111],
    [0b111, 0b001, 0b010, 0b010, 0b010],
    [0b111, 0b101, 0b111, 0b101, 0b111],
    [0b111, 0b101, 0b111, 0b001, 0b111],
];

const GLYPH_SCALE: u32 = 2;
pub const CAPTION_HEIGHT: u32 = 5 * GLYPH_SCALE + 4;

fn draw_number(img: &mut RgbImage, n: usize, x: u32, y: u32) {
    let text = n.to_string();
    for (i, ch) in text.bytes().enumerate() {
        let glyph = DIGITS[(ch - b'0') as usize];
        let ox = x + i as u32 * 4 * GLYPH_SCALE;
        for (row, bits) in glyph.iter().enumerate() {
            for col in 0..3u32 {
                if bits & (0b100 >> col) == 0 {
                    continue;
                }
                for dy in 0..GLYPH_SCALE {
                    for dx in 0..GLYPH_SCALE {
                        let (px, py) = (ox + col * GLYPH_SCALE + dx, y + row as u32 * GLYPH_SCALE + dy);
                        if px < img.width() && py < img.height() {
                            img.put_pixel(px, py, Rgb([255, 255, 255]));
                        }
                    }
                }
            }
        }
    }
}

/// Panels left to right, each captioned with its depth below. A panel
/// without a map (a failed depth) is left grey.
pub fn strip(image: &RgbImage, panels: &[(usize, Option<&SaliencyMap>)]) -> RgbImage {
    let (w, h) = image.dimensions();
    let mut out = RgbImage::from_pixel(w * panels.len() as u32, h + CAPTION_HEIGHT, Rgb([0, 0, 0]));
    for (i, (depth, map)) in panels.iter().enumerate() {
        let x0 = i as u32 * w;
        let panel = match map {
            Some(m) => overlay(image, m),
            None => RgbImage::from_pixel(w, h, Rgb([128, 128, 128])),
        };
        for (x, y, px) in panel.enumerate_pixels() {
            out.put_pixel(x0 + x, y, *px);
        }
        draw_number(&mut out, *depth, x0 + 2, h + 2);
    }
    out
}
