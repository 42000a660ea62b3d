//! Unit-resolution containers: real-valued grids and binary images, both
//! indexed by (row, col).

/// Real-valued rows×cols grid, row-major. Used for binned intensities,
/// voltages, and filter intermediates.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Grid {
    /// Creates an all-zero grid.
    ///
    /// # Panics
    /// Panics if either dimension is zero.
    pub fn new(rows: usize, cols: usize) -> Self {
        assert!(rows >= 1 && cols >= 1, "grid dimensions must be >= 1");
        Grid { rows, cols, data: vec![0.0; rows * cols] }
    }

    /// Wraps raw row-major values.
    ///
    /// # Panics
    /// Panics unless `data.len() == rows * cols` and dimensions are nonzero.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert!(rows >= 1 && cols >= 1, "grid dimensions must be >= 1");
        assert_eq!(data.len(), rows * cols, "data length must be rows * cols");
        Grid { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        debug_assert!(row < self.rows && col < self.cols);
        self.data[row * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.rows && col < self.cols);
        self.data[row * self.cols + col] = value;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// True when both grids have the same rows and cols.
    pub fn same_shape(&self, other: &Grid) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }
}

/// Binary rows×cols image with bit values 0 or 1, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryImage {
    rows: usize,
    cols: usize,
    bits: Vec<u8>,
}

impl BinaryImage {
    /// Creates an all-zero image.
    ///
    /// # Panics
    /// Panics if either dimension is zero.
    pub fn new(rows: usize, cols: usize) -> Self {
        assert!(rows >= 1 && cols >= 1, "image dimensions must be >= 1");
        BinaryImage { rows, cols, bits: vec![0; rows * cols] }
    }

    /// Wraps raw row-major bits.
    ///
    /// # Panics
    /// Panics unless `bits.len() == rows * cols`, dimensions are nonzero, and
    /// every value is 0 or 1.
    pub fn from_vec(rows: usize, cols: usize, bits: Vec<u8>) -> Self {
        assert!(rows >= 1 && cols >= 1, "image dimensions must be >= 1");
        assert_eq!(bits.len(), rows * cols, "bits length must be rows * cols");
        assert!(bits.iter().all(|&b| b <= 1), "bits must be 0 or 1");
        BinaryImage { rows, cols, bits }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u8 {
        debug_assert!(row < self.rows && col < self.cols);
        self.bits[row * self.cols + col]
    }

    /// Sets one bit.
    ///
    /// # Panics
    /// Panics in debug builds if `value` is not 0 or 1.
    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: u8) {
        debug_assert!(row < self.rows && col < self.cols);
        debug_assert!(value <= 1, "bits must be 0 or 1");
        self.bits[row * self.cols + col] = value;
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    /// Number of set bits.
    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b == 1).count()
    }

    /// True when both images have the same rows and cols.
    pub fn same_shape(&self, other: &BinaryImage) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }
}
