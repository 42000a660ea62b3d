//! Pixel-resolution containers: 8-bit luma frames and dense displacement fields.

/// Single-channel 8-bit intensity image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LumaFrame {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl LumaFrame {
    /// Creates an all-zero frame.
    ///
    /// # Panics
    /// Panics if either dimension is zero.
    pub fn new(width: usize, height: usize) -> Self {
        assert!(width >= 1 && height >= 1, "frame dimensions must be >= 1");
        LumaFrame { width, height, data: vec![0; width * height] }
    }

    /// Wraps raw row-major intensity bytes.
    ///
    /// # Panics
    /// Panics unless `data.len() == width * height` and dimensions are nonzero.
    pub fn from_vec(width: usize, height: usize, data: Vec<u8>) -> Self {
        assert!(width >= 1 && height >= 1, "frame dimensions must be >= 1");
        assert_eq!(data.len(), width * height, "data length must be width * height");
        LumaFrame { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Intensity at column `x`, row `y`.
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        debug_assert!(x < self.width && y < self.height);
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: u8) {
        debug_assert!(x < self.width && y < self.height);
        self.data[y * self.width + x] = value;
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [u8] {
        &mut self.data
    }

    /// Copies the `w`×`h` rectangle with top-left corner (`x`, `y`) into a new frame.
    ///
    /// # Panics
    /// Panics if the rectangle leaves the frame or is empty.
    pub fn crop(&self, x: usize, y: usize, w: usize, h: usize) -> LumaFrame {
        assert!(w >= 1 && h >= 1, "crop rectangle must be nonempty");
        assert!(x + w <= self.width && y + h <= self.height, "crop rectangle out of bounds");
        let mut data = Vec::with_capacity(w * h);
        for row in y..y + h {
            let start = row * self.width + x;
            data.extend_from_slice(&self.data[start..start + w]);
        }
        LumaFrame { width: w, height: h, data }
    }
}

/// Dense per-pixel displacement in px/frame: `u` horizontal, `v` vertical.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    width: usize,
    height: usize,
    u: Vec<f32>,
    v: Vec<f32>,
}

impl FlowField {
    /// Creates an all-zero field.
    ///
    /// # Panics
    /// Panics if either dimension is zero.
    pub fn new(width: usize, height: usize) -> Self {
        assert!(width >= 1 && height >= 1, "field dimensions must be >= 1");
        FlowField { width, height, u: vec![0.0; width * height], v: vec![0.0; width * height] }
    }

    /// Wraps raw row-major displacement planes.
    ///
    /// # Panics
    /// Panics unless both planes have `width * height` entries.
    pub fn from_vecs(width: usize, height: usize, u: Vec<f32>, v: Vec<f32>) -> Self {
        assert!(width >= 1 && height >= 1, "field dimensions must be >= 1");
        assert_eq!(u.len(), width * height, "u length must be width * height");
        assert_eq!(v.len(), width * height, "v length must be width * height");
        FlowField { width, height, u, v }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Displacement (u, v) at column `x`, row `y`.
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> (f32, f32) {
        debug_assert!(x < self.width && y < self.height);
        let i = y * self.width + x;
        (self.u[i], self.v[i])
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, u: f32, v: f32) {
        debug_assert!(x < self.width && y < self.height);
        let i = y * self.width + x;
        self.u[i] = u;
        self.v[i] = v;
    }

    pub fn u(&self) -> &[f32] {
        &self.u
    }

    pub fn v(&self) -> &[f32] {
        &self.v
    }

    /// True when every displacement component is finite.
    pub fn is_finite(&self) -> bool {
        self.u.iter().chain(self.v.iter()).all(|c| c.is_finite())
    }
}
