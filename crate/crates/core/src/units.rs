//! dB conversions. Powers are carried in milliwatts throughout.

pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

pub fn mw_to_dbm(mw: f64) -> f64 {
    10.0 * mw.log10()
}

/// Power ratio in dB to linear.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn nats_to_bits(nats: f64) -> f64 {
    nats / std::f64::consts::LN_2
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conversions() {
        assert!((dbm_to_mw(20.0) - 100.0).abs() < 1e-12);
        assert!((dbm_to_mw(-80.0) - 1e-8).abs() < 1e-20);
        assert!((mw_to_dbm(dbm_to_mw(-1.0)) + 1.0).abs() < 1e-12);
        assert!((db_to_linear(-30.0) - 1e-3).abs() < 1e-15);
        assert!((nats_to_bits(std::f64::consts::LN_2) - 1.0).abs() < 1e-15);
    }
}
