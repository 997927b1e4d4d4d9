//! Decibel and squeezing-parameter conversions.
//!
//! A variance `v` (vacuum = 1) corresponds to `-10 log10(v)` dB, and a
//! squeezer with parameter `r` takes the vacuum variance to `e^{-2r}`.

use std::f64::consts::LN_10;

pub fn db_to_variance(db: f64) -> f64 {
    10f64.powf(-db / 10.0)
}

pub fn variance_to_db(v: f64) -> f64 {
    -10.0 * v.log10()
}

pub fn db_to_r(db: f64) -> f64 {
    db * LN_10 / 20.0
}

pub fn r_to_db(r: f64) -> f64 {
    20.0 * r / LN_10
}
