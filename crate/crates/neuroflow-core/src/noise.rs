//! Seeded lattice value noise.
//!
//! A hash of (seed, lattice point) gives each integer lattice cell a value in
//! [0, 1); samples between lattice points interpolate bilinearly. The field
//! is defined on all of Z^2, so windows shifted anywhere over it stay
//! consistent with one another.

pub(crate) fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hash of one lattice point, uniform in [0, 1).
pub(crate) fn lattice_value(seed: u64, xi: i64, yi: i64) -> f64 {
    let mixed = splitmix64(seed)
        ^ splitmix64(xi as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
        ^ splitmix64(yi as u64).wrapping_mul(0xc2b2_ae3d_27d4_eb4f);
    (splitmix64(mixed) >> 11) as f64 / (1u64 << 53) as f64
}

/// Value noise in [0, 1) at a continuous point, with lattice spacing `cell`.
pub(crate) fn value_noise(seed: u64, x: f64, y: f64, cell: f64) -> f64 {
    debug_assert!(cell > 0.0);
    let gx = x / cell;
    let gy = y / cell;
    let x0 = gx.floor();
    let y0 = gy.floor();
    let fx = gx - x0;
    let fy = gy - y0;
    let (x0, y0) = (x0 as i64, y0 as i64);

    let v00 = lattice_value(seed, x0, y0);
    let v10 = lattice_value(seed, x0 + 1, y0);
    let v01 = lattice_value(seed, x0, y0 + 1);
    let v11 = lattice_value(seed, x0 + 1, y0 + 1);

    let top = v00 + (v10 - v00) * fx;
    let bottom = v01 + (v11 - v01) * fx;
    top + (bottom - top) * fy
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lattice_values_are_deterministic_and_seed_dependent() {
        assert_eq!(lattice_value(1, 3, 4), lattice_value(1, 3, 4));
        assert_ne!(lattice_value(1, 3, 4), lattice_value(2, 3, 4));
        assert_ne!(lattice_value(1, 3, 4), lattice_value(1, 4, 3));
    }

    #[test]
    fn noise_interpolates_between_lattice_points() {
        let seed = 9;
        let cell = 4.0;
        let v00 = lattice_value(seed, 0, 0);
        let v10 = lattice_value(seed, 1, 0);
        assert!((value_noise(seed, 0.0, 0.0, cell) - v00).abs() < 1e-12);
        assert!((value_noise(seed, 4.0, 0.0, cell) - v10).abs() < 1e-12);
        let mid = value_noise(seed, 2.0, 0.0, cell);
        assert!((mid - 0.5 * (v00 + v10)).abs() < 1e-12);
    }

    #[test]
    fn noise_stays_in_unit_interval() {
        for i in 0..500 {
            let v = value_noise(3, i as f64 * 0.37 - 40.0, i as f64 * 0.91 - 60.0, 5.0);
            assert!((0.0..1.0).contains(&v), "sample {i} out of range: {v}");
        }
    }

    #[test]
    fn negative_coordinates_use_the_floor_lattice_cell() {
        let v = value_noise(3, -0.5, 0.0, 1.0);
        let left = lattice_value(3, -1, 0);
        let right = lattice_value(3, 0, 0);
        assert!((v - 0.5 * (left + right)).abs() < 1e-12);
    }
}
