use super::Window;

/// A point inside the unit window in signed 8-bit fixed point.
///
/// Each component lies in `[-127, 127]`; the pixel offset from the window
/// center is `q * size / 256`, truncated toward zero. The normalized square
/// `[-1, 1]²` is therefore sampled in steps of `1/128`, with the extremes
/// `±1` unreachable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub struct NormLoc {
    qr: i8,
    qc: i8,
}

impl NormLoc {
    pub const MAX: i8 = 127;

    /// Panics if either component is `-128`.
    pub fn new(qr: i8, qc: i8) -> Self {
        Self::try_new(qr, qc).expect("normalized coordinates must lie in [-127, 127]")
    }

    pub fn try_new(qr: i8, qc: i8) -> Option<Self> {
        (qr != i8::MIN && qc != i8::MIN).then_some(Self { qr, qc })
    }

    /// Builds a location from wide integers, clamping both to `[-127, 127]`.
    pub fn clamped(qr: i32, qc: i32) -> Self {
        let clamp = |v: i32| v.clamp(-(Self::MAX as i32), Self::MAX as i32) as i8;
        Self {
            qr: clamp(qr),
            qc: clamp(qc),
        }
    }

    #[inline]
    pub fn qr(&self) -> i8 {
        self.qr
    }

    #[inline]
    pub fn qc(&self) -> i8 {
        self.qc
    }
}

/// Maps a normalized location to absolute pixel coordinates `(row, col)`.
///
/// For any window of size `s` the offset satisfies `|offset| < s/2`, so the
/// result is always one of the window's own pixels.
#[inline]
pub fn map_location(window: &Window, loc: NormLoc) -> (i32, i32) {
    (
        window.row + (loc.qr as i32 * window.size) / 256,
        window.col + (loc.qc as i32 * window.size) / 256,
    )
}

/// Fixed-point cosines and sines of `2πk/n`, scaled by 256.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OrientationTable {
    entries: Vec<(i32, i32)>,
}

impl OrientationTable {
    pub const SCALE: i32 = 256;

    /// Table for `n` equally spaced orientations. Panics if `n == 0`.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "orientation count must be at least 1");
        let entries = (0..n)
            .map(|k| {
                let angle = std::f64::consts::TAU * k as f64 / n as f64;
                let scale = Self::SCALE as f64;
                (
                    (angle.cos() * scale).round() as i32,
                    (angle.sin() * scale).round() as i32,
                )
            })
            .collect();
        Self { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `(cos, sin)` of orientation `k`, scaled by 256.
    pub fn entry(&self, k: usize) -> (i32, i32) {
        self.entries[k]
    }

    pub fn angle(&self, k: usize) -> f64 {
        std::f64::consts::TAU * k as f64 / self.entries.len() as f64
    }
}

// v / 256 rounded to nearest, halves away from zero.
#[inline]
fn div_round(v: i32, d: i32) -> i32 {
    let q = (v.abs() + d / 2) / d;
    if v < 0 {
        -q
    } else {
        q
    }
}

/// Rotates `loc` by orientation `k` of `table`, rounding to the nearest
/// fixed-point step and clamping to the valid range.
pub fn rotate_location(loc: NormLoc, table: &OrientationTable, k: usize) -> NormLoc {
    let (cos, sin) = table.entry(k);
    let (r, c) = (loc.qr as i32, loc.qc as i32);
    let scale = OrientationTable::SCALE;
    NormLoc::clamped(div_round(r * cos - c * sin, scale), div_round(r * sin + c * cos, scale))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn map_location_examples() {
        assert_eq!(map_location(&Window::new(50, 50, 100), NormLoc::new(0, 0)), (50, 50));
        assert_eq!(map_location(&Window::new(50, 50, 256), NormLoc::new(127, 0)), (177, 50));
        // -127 * 3 = -381; -381 / 256 = -1.488..., truncated to -1.
        assert_eq!(-381 / 256, -1);
        assert_eq!(
            map_location(&Window::new(50, 50, 3), NormLoc::new(-127, -127)),
            (49, 49)
        );
    }

    #[test]
    fn mapped_points_stay_inside_window() {
        let mut sizes: Vec<i32> = (1..=300).collect();
        sizes.extend((301..=10_000).step_by(37));
        sizes.push(10_000);
        for &size in &sizes {
            let w = Window::new(20_000, 20_000, size);
            for q in -127i8..=127 {
                let (r, c) = map_location(&w, NormLoc::new(q, -q));
                assert!(r >= w.top() && r < w.top() + size, "size {size} q {q}");
                assert!(c >= w.left() && c < w.left() + size, "size {size} q {q}");
                // Half-open real interval [center - s/2, center + s/2).
                assert!(2 * (r - w.row) >= -size && 2 * (r - w.row) < size);
            }
        }
    }

    #[test]
    fn try_new_rejects_min() {
        assert!(NormLoc::try_new(-128, 0).is_none());
        assert!(NormLoc::try_new(0, -128).is_none());
        assert_eq!(NormLoc::clamped(-400, 300), NormLoc::new(-127, 127));
    }

    #[test]
    fn table_entries() {
        for n in 1..=36 {
            let t = OrientationTable::new(n);
            assert_eq!(t.entry(0), (256, 0));
            for k in 0..n {
                let (c, s) = t.entry(k);
                assert!((c * c + s * s - 256 * 256).abs() <= 2 * 256, "n={n} k={k}");
            }
        }
    }

    #[test]
    fn rotation_examples() {
        let t12 = OrientationTable::new(12);
        let loc = NormLoc::new(-33, 91);
        assert_eq!(rotate_location(loc, &t12, 0), loc);

        let t4 = OrientationTable::new(4);
        assert_eq!(rotate_location(NormLoc::new(100, 50), &t4, 2), NormLoc::new(-100, -50));

        // Float rotation oracle for 30 degrees.
        let rotated = rotate_location(NormLoc::new(127, 0), &t12, 1);
        let a = std::f64::consts::TAU / 12.0;
        let (er, ec) = (127.0 * a.cos(), 127.0 * a.sin());
        assert!((rotated.qr() as f64 - er).abs() <= 1.0);
        assert!((rotated.qc() as f64 - ec).abs() <= 1.0);
    }

    #[test]
    fn rotation_roundtrip_within_one_unit() {
        for n in [2, 3, 4, 6, 8, 10, 12, 16] {
            let t = OrientationTable::new(n);
            for k in 0..n {
                for qr in -127i32..=127 {
                    for qc in -127i32..=127 {
                        let (cos, sin) = t.entry(k);
                        let raw_r = div_round(qr * cos - qc * sin, 256);
                        let raw_c = div_round(qr * sin + qc * cos, 256);
                        if raw_r.abs() > 127 || raw_c.abs() > 127 {
                            continue;
                        }
                        let loc = NormLoc::new(qr as i8, qc as i8);
                        let once = rotate_location(loc, &t, k);
                        let back = (n - k) % n;
                        let (cos2, sin2) = t.entry(back);
                        let (r2, c2) = (once.qr() as i32, once.qc() as i32);
                        if div_round(r2 * cos2 - c2 * sin2, 256).abs() > 127
                            || div_round(r2 * sin2 + c2 * cos2, 256).abs() > 127
                        {
                            continue;
                        }
                        let twice = rotate_location(once, &t, back);
                        assert!((twice.qr() as i32 - qr).abs() <= 1, "n={n} k={k} ({qr},{qc})");
                        assert!((twice.qc() as i32 - qc).abs() <= 1, "n={n} k={k} ({qr},{qc})");
                    }
                }
            }
        }
    }

    #[test]
    fn div_round_halves_away_from_zero() {
        assert_eq!(div_round(128, 256), 1);
        assert_eq!(div_round(-128, 256), -1);
        assert_eq!(div_round(127, 256), 0);
        assert_eq!(div_round(-383, 256), -1);
        assert_eq!(div_round(-384, 256), -2);
    }

    proptest! {
        #[test]
        fn rotation_matches_float_oracle(qr in -127i8..=127, qc in -127i8..=127, n in 1usize..24, k in 0usize..24) {
            let k = k % n;
            let t = OrientationTable::new(n);
            let got = rotate_location(NormLoc::new(qr, qc), &t, k);
            let a = t.angle(k);
            let er = (qr as f64 * a.cos() - qc as f64 * a.sin()).clamp(-127.0, 127.0);
            let ec = (qr as f64 * a.sin() + qc as f64 * a.cos()).clamp(-127.0, 127.0);
            prop_assert!((got.qr() as f64 - er).abs() <= 1.0);
            prop_assert!((got.qc() as f64 - ec).abs() <= 1.0);
        }
    }
}
