// SPDX-License-Identifier: Apache-2.0

//! Fixed-size digit images and the geometric operations on them: zero padding,
//! the nine one-pixel crop windows, and a text renderer for debugging.

use std::fmt;

/// Side length of a digit image.
pub const SIDE: usize = 28;
/// Pixels per digit image.
pub const IMAGE_LEN: usize = SIDE * SIDE;
/// Side length after one pixel of zero padding on every edge.
pub const PADDED_SIDE: usize = SIDE + 2;
pub const PADDED_LEN: usize = PADDED_SIDE * PADDED_SIDE;
/// Number of crop positions in a padded image, `(dr, dc) ∈ {0,1,2}²`.
pub const WINDOW_COUNT: usize = 9;

const GLYPHS: [char; 5] = [' ', '.', ':', '#', '@'];
const GLYPH_BIN: u8 = 51;

/// One 28×28 grayscale digit, row-major.
#[derive(Clone, PartialEq, Eq, Hash)]
#[repr(transparent)]
pub struct Image(pub [u8; IMAGE_LEN]);

impl Image {
    pub const fn zeros() -> Self {
        Image([0; IMAGE_LEN])
    }

    /// Returns `None` unless `pixels` is exactly 784 bytes long.
    pub fn from_slice(pixels: &[u8]) -> Option<Self> {
        pixels.try_into().ok().map(Image)
    }

    #[inline]
    pub fn pixels(&self) -> &[u8; IMAGE_LEN] {
        &self.0
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.0[row * SIDE + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: u8) {
        self.0[row * SIDE + col] = value;
    }

    pub fn pixel_sum(&self) -> u64 {
        self.0.iter().map(|&p| u64::from(p)).sum()
    }
}

impl Default for Image {
    fn default() -> Self {
        Self::zeros()
    }
}

impl fmt::Debug for Image {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let nonzero = self.0.iter().filter(|&&p| p != 0).count();
        f.debug_struct("Image")
            .field("nonzero", &nonzero)
            .field("sum", &self.pixel_sum())
            .finish()
    }
}

/// A 30×30 image whose border ring is zero and whose interior is a source image.
#[derive(Clone, PartialEq, Eq)]
pub struct PaddedImage([u8; PADDED_LEN]);

impl PaddedImage {
    #[inline]
    pub fn pixels(&self) -> &[u8; PADDED_LEN] {
        &self.0
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.0[row * PADDED_SIDE + col]
    }
}

impl fmt::Debug for PaddedImage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PaddedImage").finish_non_exhaustive()
    }
}

/// The nine 28×28 crops of a padded image, in row-major `(dr, dc)` order.
///
/// Index `3 * dr + dc` holds the crop whose top-left corner sits at padded
/// coordinate `(dr, dc)`. Index 4 is the unshifted source image.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct WindowSet([Image; WINDOW_COUNT]);

impl WindowSet {
    pub const CENTER: usize = 4;

    #[inline]
    pub fn get(&self, dr: usize, dc: usize) -> &Image {
        &self.0[3 * dr + dc]
    }

    #[inline]
    pub fn windows(&self) -> &[Image; WINDOW_COUNT] {
        &self.0
    }

    pub fn original(&self) -> &Image {
        &self.0[Self::CENTER]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Image> {
        self.0.iter()
    }
}

pub fn pad_image(img: &Image) -> PaddedImage {
    let mut out = [0u8; PADDED_LEN];
    for (row, src) in img.0.chunks_exact(SIDE).enumerate() {
        let start = (row + 1) * PADDED_SIDE + 1;
        out[start..start + SIDE].copy_from_slice(src);
    }
    PaddedImage(out)
}

pub fn extract_windows(padded: &PaddedImage) -> WindowSet {
    let windows = std::array::from_fn(|w| {
        let (dr, dc) = (w / 3, w % 3);
        let mut img = Image::zeros();
        for (row, dst) in img.0.chunks_exact_mut(SIDE).enumerate() {
            let start = (row + dr) * PADDED_SIDE + dc;
            dst.copy_from_slice(&padded.0[start..start + SIDE]);
        }
        img
    });
    WindowSet(windows)
}

/// Shorthand for `extract_windows(&pad_image(img))`.
pub fn windows_of(img: &Image) -> WindowSet {
    extract_windows(&pad_image(img))
}

/// Renders 28 newline-terminated lines using the ramp `" .:#@"`, one glyph
/// per pixel, with equal-width intensity bins of 51.
pub fn render_ascii(img: &Image) -> String {
    let mut out = String::with_capacity(IMAGE_LEN + SIDE);
    for row in img.0.chunks_exact(SIDE) {
        out.extend(row.iter().map(|&p| glyph(p)));
        out.push('\n');
    }
    out
}

#[inline]
fn glyph(pixel: u8) -> char {
    GLYPHS[usize::from(pixel / GLYPH_BIN).min(GLYPHS.len() - 1)]
}
