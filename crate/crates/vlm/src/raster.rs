//! Minimal RGB raster with the primitives the overlay renderer needs:
//! lines, filled polygons, a 5x7 bitmap font, and binary PPM (P6) output.
//! Everything is integer-deterministic so identical inputs produce
//! identical bytes.

pub type Rgb = [u8; 3];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    pub width: u32,
    pub height: u32,
    pixels: Vec<u8>,
}

impl Image {
    pub fn filled(width: u32, height: u32, color: Rgb) -> Self {
        let mut pixels = Vec::with_capacity((width * height * 3) as usize);
        for _ in 0..width * height {
            pixels.extend_from_slice(&color);
        }
        Image { width, height, pixels }
    }

    pub fn set(&mut self, x: i64, y: i64, color: Rgb) {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            return;
        }
        let idx = ((y as u32 * self.width + x as u32) * 3) as usize;
        self.pixels[idx..idx + 3].copy_from_slice(&color);
    }

    pub fn get(&self, x: u32, y: u32) -> Rgb {
        let idx = ((y * self.width + x) * 3) as usize;
        [self.pixels[idx], self.pixels[idx + 1], self.pixels[idx + 2]]
    }

    /// Bresenham line with a square brush of the given width.
    pub fn draw_line(&mut self, a: (f64, f64), b: (f64, f64), width: u32, color: Rgb) {
        let Some(((x0, y0), (x1, y1))) = clip_segment(a, b, self.width, self.height) else {
            return;
        };
        let (mut x0, mut y0) = (x0.round() as i64, y0.round() as i64);
        let (x1, y1) = (x1.round() as i64, y1.round() as i64);
        let dx = (x1 - x0).abs();
        let dy = -(y1 - y0).abs();
        let sx = if x0 < x1 { 1 } else { -1 };
        let sy = if y0 < y1 { 1 } else { -1 };
        let mut err = dx + dy;
        let r = width as i64 / 2;
        loop {
            for oy in -r..=r {
                for ox in -r..=r {
                    self.set(x0 + ox, y0 + oy, color);
                }
            }
            if x0 == x1 && y0 == y1 {
                break;
            }
            let e2 = 2 * err;
            if e2 >= dy {
                err += dy;
                x0 += sx;
            }
            if e2 <= dx {
                err += dx;
                y0 += sy;
            }
        }
    }

    /// Even-odd scanline fill of a closed polygon given in pixel space.
    pub fn fill_polygon(&mut self, points: &[(f64, f64)], color: Rgb) {
        if points.len() < 3 {
            return;
        }
        for row in 0..self.height {
            let y = row as f64 + 0.5;
            let mut xs: Vec<f64> = Vec::new();
            for i in 0..points.len() {
                let (x0, y0) = points[i];
                let (x1, y1) = points[(i + 1) % points.len()];
                if (y0 <= y && y1 > y) || (y1 <= y && y0 > y) {
                    xs.push(x0 + (y - y0) / (y1 - y0) * (x1 - x0));
                }
            }
            xs.sort_by(|a, b| a.partial_cmp(b).expect("finite scanline crossings"));
            for pair in xs.chunks_exact(2) {
                let lo = pair[0].max(0.0).floor() as i64;
                let hi = pair[1].min(self.width as f64 - 1.0).ceil() as i64;
                for x in lo..=hi {
                    if (x as f64 + 0.5) >= pair[0] && (x as f64 + 0.5) <= pair[1] {
                        self.set(x, row as i64, color);
                    }
                }
            }
        }
    }

    /// Draw a glyph string with its top-left corner at (x, y).
    pub fn draw_text(&mut self, text: &str, x: i64, y: i64, scale: u32, color: Rgb) {
        let scale = scale.max(1) as i64;
        let mut cursor = x;
        for ch in text.chars() {
            let glyph = glyph_rows(ch);
            for (row, bits) in glyph.iter().enumerate() {
                for col in 0..5 {
                    if bits & (0b10000 >> col) != 0 {
                        for oy in 0..scale {
                            for ox in 0..scale {
                                self.set(
                                    cursor + col as i64 * scale + ox,
                                    y + row as i64 * scale + oy,
                                    color,
                                );
                            }
                        }
                    }
                }
            }
            cursor += 6 * scale;
        }
    }

    /// Binary PPM (P6) bytes.
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }
}

/// Liang-Barsky clip to the image rectangle (with a 2 px margin so line
/// ends keep their brush shape).
fn clip_segment(
    a: (f64, f64),
    b: (f64, f64),
    width: u32,
    height: u32,
) -> Option<((f64, f64), (f64, f64))> {
    let (x0, y0) = a;
    let (x1, y1) = b;
    if !(x0.is_finite() && y0.is_finite() && x1.is_finite() && y1.is_finite()) {
        return None;
    }
    let (xmin, ymin) = (-2.0, -2.0);
    let (xmax, ymax) = (width as f64 + 2.0, height as f64 + 2.0);
    let (dx, dy) = (x1 - x0, y1 - y0);
    let mut t0 = 0.0f64;
    let mut t1 = 1.0f64;
    for (p, q) in [
        (-dx, x0 - xmin),
        (dx, xmax - x0),
        (-dy, y0 - ymin),
        (dy, ymax - y0),
    ] {
        if p == 0.0 {
            if q < 0.0 {
                return None;
            }
            continue;
        }
        let r = q / p;
        if p < 0.0 {
            if r > t1 {
                return None;
            }
            t0 = t0.max(r);
        } else {
            if r < t0 {
                return None;
            }
            t1 = t1.min(r);
        }
    }
    Some(((x0 + t0 * dx, y0 + t0 * dy), (x0 + t1 * dx, y0 + t1 * dy)))
}

/// 5x7 glyphs for A-Z, 0-9 and a few separators; unknown characters render
/// as a filled block.
fn glyph_rows(ch: char) -> [u8; 7] {
    match ch.to_ascii_uppercase() {
        'A' => [0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11],
        'B' => [0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E],
        'C' => [0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E],
        'D' => [0x1E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x1E],
        'E' => [0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F],
        'F' => [0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10],
        'G' => [0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F],
        'H' => [0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11],
        'I' => [0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E],
        'J' => [0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C],
        'K' => [0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11],
        'L' => [0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F],
        'M' => [0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11],
        'N' => [0x11, 0x19, 0x15, 0x13, 0x11, 0x11, 0x11],
        'O' => [0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E],
        'P' => [0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10],
        'Q' => [0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D],
        'R' => [0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11],
        'S' => [0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E],
        'T' => [0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04],
        'U' => [0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E],
        'V' => [0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04],
        'W' => [0x11, 0x11, 0x11, 0x15, 0x15, 0x1B, 0x11],
        'X' => [0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11],
        'Y' => [0x11, 0x11, 0x0A, 0x04, 0x04, 0x04, 0x04],
        'Z' => [0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F],
        '0' => [0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E],
        '1' => [0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E],
        '2' => [0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F],
        '3' => [0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E],
        '4' => [0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02],
        '5' => [0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E],
        '6' => [0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E],
        '7' => [0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08],
        '8' => [0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E],
        '9' => [0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C],
        '.' => [0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C],
        ':' => [0x00, 0x0C, 0x0C, 0x00, 0x0C, 0x0C, 0x00],
        '-' => [0x00, 0x00, 0x00, 0x1F, 0x00, 0x00, 0x00],
        ' ' => [0x00; 7],
        _ => [0x1F; 7],
    }
}

/// Distinct candidate colors, indexed modulo the palette length.
pub const PALETTE: [Rgb; 8] = [
    [229, 57, 53],   // red
    [67, 160, 71],   // green
    [30, 136, 229],  // blue
    [255, 179, 0],   // amber
    [142, 36, 170],  // purple
    [0, 172, 193],   // cyan
    [244, 81, 30],   // deep orange
    [124, 179, 66],  // light green
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppm_header_and_size() {
        let img = Image::filled(4, 3, [1, 2, 3]);
        let ppm = img.to_ppm();
        assert!(ppm.starts_with(b"P6\n4 3\n255\n"));
        assert_eq!(ppm.len(), 11 + 4 * 3 * 3);
        assert_eq!(img.get(0, 0), [1, 2, 3]);
    }

    #[test]
    fn line_stays_in_bounds_and_is_deterministic() {
        let mut a = Image::filled(64, 64, [0, 0, 0]);
        a.draw_line((-50.0, 10.0), (200.0, 40.0), 3, [255, 0, 0]);
        a.draw_line((10.0, -90.0), (10.0, 900.0), 1, [0, 255, 0]);
        let mut b = Image::filled(64, 64, [0, 0, 0]);
        b.draw_line((-50.0, 10.0), (200.0, 40.0), 3, [255, 0, 0]);
        b.draw_line((10.0, -90.0), (10.0, 900.0), 1, [0, 255, 0]);
        assert_eq!(a, b);
        // the vertical line must have painted its column
        assert_eq!(a.get(10, 32), [0, 255, 0]);
    }

    #[test]
    fn polygon_fill_covers_interior_not_exterior() {
        let mut img = Image::filled(32, 32, [0, 0, 0]);
        img.fill_polygon(
            &[(4.0, 4.0), (28.0, 4.0), (28.0, 28.0), (4.0, 28.0)],
            [9, 9, 9],
        );
        assert_eq!(img.get(16, 16), [9, 9, 9]);
        assert_eq!(img.get(1, 1), [0, 0, 0]);
        assert_eq!(img.get(31, 31), [0, 0, 0]);
    }

    #[test]
    fn text_marks_pixels() {
        let mut img = Image::filled(32, 16, [0, 0, 0]);
        img.draw_text("A", 2, 2, 1, [255, 255, 255]);
        // glyph row 0 of 'A' is 0x0E: pixels at columns 1..=3
        assert_eq!(img.get(3, 2), [255, 255, 255]);
        assert_eq!(img.get(2, 2), [0, 0, 0]);
    }
}
