//! Images, windows and the fixed-point coordinate system used by the tests.

mod coords;
mod io;
mod noise;

pub use coords::{map_location, rotate_location, NormLoc, OrientationTable};
pub use io::{decode_pgm, decode_raw, encode_pgm, encode_raw, load_image, save_image, ImageError, MAX_PIXELS};
pub use noise::add_gaussian_noise;

/// 8-bit single-channel raster stored row-major.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl GrayImage {
    /// Wraps `data`, which must hold exactly `width * height` bytes.
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self, ImageError> {
        let expected = width
            .checked_mul(height)
            .ok_or(ImageError::DimensionOverflow { width, height })?;
        if data.len() != expected {
            return Err(ImageError::DataLength {
                expected,
                found: data.len(),
            });
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    /// Builds an image by evaluating `f(row, col)` for every pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self { width, height, data }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn into_raw(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: u8) {
        self.data[row * self.width + col] = value;
    }

    /// Whether `window` lies fully inside this image.
    #[inline]
    pub fn contains(&self, window: &Window) -> bool {
        window.is_inside(self.width, self.height)
    }
}

impl std::fmt::Debug for GrayImage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GrayImage")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

/// A square scanning window given by its center and side length.
///
/// The window covers rows `row - size/2 .. row - size/2 + size` (integer
/// division, end exclusive) and the same span of columns around `col`. For
/// odd sizes this is symmetric around the center; for even sizes the center
/// pixel sits just below and right of the geometric middle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Window {
    pub row: i32,
    pub col: i32,
    pub size: i32,
}

impl Window {
    pub fn new(row: i32, col: i32, size: i32) -> Self {
        assert!(size >= 1, "window size must be at least 1, got {size}");
        Self { row, col, size }
    }

    /// First covered row.
    #[inline]
    pub fn top(&self) -> i32 {
        self.row - self.size / 2
    }

    /// First covered column.
    #[inline]
    pub fn left(&self) -> i32 {
        self.col - self.size / 2
    }

    /// The window whose top-left covered pixel is `(top, left)`.
    pub fn from_top_left(top: i32, left: i32, size: i32) -> Self {
        Self::new(top + size / 2, left + size / 2, size)
    }

    #[inline]
    pub fn is_inside(&self, width: usize, height: usize) -> bool {
        let (top, left) = (self.top() as i64, self.left() as i64);
        let size = self.size as i64;
        self.size >= 1 && top >= 0 && left >= 0 && top + size <= height as i64 && left + size <= width as i64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn image_length_is_checked() {
        assert!(GrayImage::new(3, 2, vec![0; 6]).is_ok());
        assert!(matches!(
            GrayImage::new(3, 2, vec![0; 5]),
            Err(ImageError::DataLength { expected: 6, found: 5 })
        ));
    }

    #[test]
    fn window_extent() {
        let w = Window::new(50, 50, 100);
        assert_eq!((w.top(), w.left()), (0, 0));
        assert!(w.is_inside(100, 100));
        assert!(!Window::new(51, 50, 100).is_inside(100, 100));

        let odd = Window::new(1, 1, 3);
        assert!(odd.is_inside(3, 3));
        assert!(!Window::new(0, 1, 3).is_inside(3, 3));
        assert_eq!(Window::from_top_left(4, 7, 10), Window::new(9, 12, 10));
    }

    #[test]
    fn image_contains_window() {
        let img = GrayImage::filled(10, 4, 0);
        assert!(img.contains(&Window::new(2, 2, 4)));
        assert!(!img.contains(&Window::new(2, 2, 5)));
    }
}
