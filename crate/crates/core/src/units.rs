//! dB/linear conversions and physical constants. All conversions go through here.

/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Thermal noise power spectral density at room temperature (dBm/Hz).
pub const THERMAL_NOISE_DBM_HZ: f64 = -174.0;

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * watts.log10() + 30.0
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Noise power in dBm over `bandwidth_hz`, including an optional receiver noise figure.
pub fn noise_power_dbm(bandwidth_hz: f64, noise_figure_db: f64) -> f64 {
    THERMAL_NOISE_DBM_HZ + 10.0 * bandwidth_hz.log10() + noise_figure_db
}

pub fn wavelength(carrier_freq_hz: f64) -> f64 {
    SPEED_OF_LIGHT / carrier_freq_hz
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn noise_floor_for_150_khz() {
        let dbm = noise_power_dbm(150e3, 0.0);
        assert_relative_eq!(dbm, -122.239, epsilon = 1e-3);
        let watts = dbm_to_watts(dbm);
        assert_relative_eq!(watts, 5.97e-16, max_relative = 2e-3);
    }

    #[test]
    fn dbm_round_trip() {
        for dbm in [-40.0, 0.0, 16.0, 30.0] {
            assert_relative_eq!(watts_to_dbm(dbm_to_watts(dbm)), dbm, epsilon = 1e-12);
        }
        assert_relative_eq!(dbm_to_watts(30.0), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn wavelength_at_120_ghz() {
        assert_relative_eq!(wavelength(120e9), 2.4982e-3, max_relative = 1e-4);
    }
}
