//! Severity-coded hazard overlay on the RGB frame.

use image::{Rgb, RgbImage};

use crate::backends::BBox;
use crate::bundle::FrameBundle;
use crate::hazard::Severity;
use crate::report::ReportDocument;

pub const GRAY: Rgb<u8> = Rgb([160, 160, 160]);
pub const AMBER: Rgb<u8> = Rgb([255, 176, 0]);
pub const RED: Rgb<u8> = Rgb([230, 20, 20]);

const TEXT: Rgb<u8> = Rgb([255, 255, 255]);
const TEXT_BACKGROUND: Rgb<u8> = Rgb([0, 0, 0]);
const LINE_WIDTH: u32 = 2;

pub fn severity_color(s: Severity) -> Rgb<u8> {
    match s {
        Severity::None => GRAY,
        Severity::Moderate => AMBER,
        Severity::High => RED,
    }
}

/// Copy of the frame's RGB image with one box per report entry, colored by
/// severity, and a `SEVERITY LABEL` caption.
pub fn render_overlay(bundle: &FrameBundle, report: &ReportDocument) -> RgbImage {
    let mut img = bundle.rgb.clone();
    for entry in &report.entries {
        draw_box(&mut img, &entry.bbox, severity_color(entry.severity));
    }
    // Captions go on top so no box outline cuts through them.
    for entry in &report.entries {
        let label = entry.labels.first().map_or("", |l| l.label.as_str());
        let caption = format!("{} {}", entry.severity.as_str(), label).to_uppercase();
        let (xs, ys) = entry.bbox.pixel_ranges(img.width(), img.height());
        let y = ys.start.saturating_sub(GLYPH_H + 3);
        draw_text(&mut img, xs.start, y, &caption);
    }
    img
}

/// Outline of `b`, `LINE_WIDTH` pixels thick, drawn inside the box.
pub fn draw_box(img: &mut RgbImage, b: &BBox, color: Rgb<u8>) {
    let (xs, ys) = b.pixel_ranges(img.width(), img.height());
    if xs.is_empty() || ys.is_empty() {
        return;
    }
    for y in ys.clone() {
        for x in xs.clone() {
            let edge = x < xs.start + LINE_WIDTH
                || x + LINE_WIDTH >= xs.end
                || y < ys.start + LINE_WIDTH
                || y + LINE_WIDTH >= ys.end;
            if edge {
                img.put_pixel(x, y, color);
            }
        }
    }
}

const GLYPH_W: u32 = 5;
const GLYPH_H: u32 = 7;

fn glyph(c: char) -> [&'static str; 7] {
    match c {
        'A' => [".###.", "#...#", "#...#", "#####", "#...#", "#...#", "#...#"],
        'B' => ["####.", "#...#", "#...#", "####.", "#...#", "#...#", "####."],
        'C' => [".###.", "#...#", "#....", "#....", "#....", "#...#", ".###."],
        'D' => ["####.", "#...#", "#...#", "#...#", "#...#", "#...#", "####."],
        'E' => ["#####", "#....", "#....", "####.", "#....", "#....", "#####"],
        'F' => ["#####", "#....", "#....", "####.", "#....", "#....", "#...."],
        'G' => [".###.", "#...#", "#....", "#.###", "#...#", "#...#", ".####"],
        'H' => ["#...#", "#...#", "#...#", "#####", "#...#", "#...#", "#...#"],
        'I' => [".###.", "..#..", "..#..", "..#..", "..#..", "..#..", ".###."],
        'J' => ["..###", "...#.", "...#.", "...#.", "...#.", "#..#.", ".##.."],
        'K' => ["#...#", "#..#.", "#.#..", "##...", "#.#..", "#..#.", "#...#"],
        'L' => ["#....", "#....", "#....", "#....", "#....", "#....", "#####"],
        'M' => ["#...#", "##.##", "#.#.#", "#.#.#", "#...#", "#...#", "#...#"],
        'N' => ["#...#", "#...#", "##..#", "#.#.#", "#..##", "#...#", "#...#"],
        'O' => [".###.", "#...#", "#...#", "#...#", "#...#", "#...#", ".###."],
        'P' => ["####.", "#...#", "#...#", "####.", "#....", "#....", "#...."],
        'Q' => [".###.", "#...#", "#...#", "#...#", "#.#.#", "#..#.", ".##.#"],
        'R' => ["####.", "#...#", "#...#", "####.", "#.#..", "#..#.", "#...#"],
        'S' => [".####", "#....", "#....", ".###.", "....#", "....#", "####."],
        'T' => ["#####", "..#..", "..#..", "..#..", "..#..", "..#..", "..#.."],
        'U' => ["#...#", "#...#", "#...#", "#...#", "#...#", "#...#", ".###."],
        'V' => ["#...#", "#...#", "#...#", "#...#", "#...#", ".#.#.", "..#.."],
        'W' => ["#...#", "#...#", "#...#", "#.#.#", "#.#.#", "#.#.#", ".#.#."],
        'X' => ["#...#", "#...#", ".#.#.", "..#..", ".#.#.", "#...#", "#...#"],
        'Y' => ["#...#", "#...#", ".#.#.", "..#..", "..#..", "..#..", "..#.."],
        'Z' => ["#####", "....#", "...#.", "..#..", ".#...", "#....", "#####"],
        '0' => [".###.", "#...#", "#..##", "#.#.#", "##..#", "#...#", ".###."],
        '1' => ["..#..", ".##..", "..#..", "..#..", "..#..", "..#..", ".###."],
        '2' => [".###.", "#...#", "....#", "...#.", "..#..", ".#...", "#####"],
        '3' => ["#####", "...#.", "..#..", "...#.", "....#", "#...#", ".###."],
        '4' => ["...#.", "..##.", ".#.#.", "#..#.", "#####", "...#.", "...#."],
        '5' => ["#####", "#....", "####.", "....#", "....#", "#...#", ".###."],
        '6' => ["..##.", ".#...", "#....", "####.", "#...#", "#...#", ".###."],
        '7' => ["#####", "....#", "...#.", "..#..", ".#...", ".#...", ".#..."],
        '8' => [".###.", "#...#", "#...#", ".###.", "#...#", "#...#", ".###."],
        '9' => [".###.", "#...#", "#...#", ".####", "....#", "...#.", ".##.."],
        '-' => [".....", ".....", ".....", "#####", ".....", ".....", "....."],
        '_' => [".....", ".....", ".....", ".....", ".....", ".....", "#####"],
        '.' => [".....", ".....", ".....", ".....", ".....", ".##..", ".##.."],
        ':' => [".....", ".##..", ".##..", ".....", ".##..", ".##..", "....."],
        _ => [".....", ".....", ".....", ".....", ".....", ".....", "....."],
    }
}

/// Draws `text` in a 5x7 bitmap font on a black strip with its top-left
/// corner at `(x, y)`. Pixels outside the image are skipped.
pub fn draw_text(img: &mut RgbImage, x: u32, y: u32, text: &str) {
    let advance = GLYPH_W + 1;
    let strip_w = text.chars().count() as u32 * advance + 1;
    for dy in 0..GLYPH_H + 2 {
        for dx in 0..strip_w {
            put(img, x + dx, y + dy, TEXT_BACKGROUND);
        }
    }
    for (n, c) in text.chars().enumerate() {
        let ox = x + 1 + n as u32 * advance;
        for (row, bits) in glyph(c).iter().enumerate() {
            for (col, bit) in bits.chars().enumerate() {
                if bit == '#' {
                    put(img, ox + col as u32, y + 1 + row as u32, TEXT);
                }
            }
        }
    }
}

fn put(img: &mut RgbImage, x: u32, y: u32, color: Rgb<u8>) {
    if x < img.width() && y < img.height() {
        img.put_pixel(x, y, color);
    }
}
