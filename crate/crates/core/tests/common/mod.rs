#![allow(dead_code)]

use modemux::model::Scenario;
use serde_json::{json, Value};

/// Three-mode link (two groups) with every noise source switched on.
pub fn toy_json() -> Value {
    json!({
        "name": "toy",
        "fiber": { "length_m": 200, "groups": 2, "inter_group_d_per_m": 5e-4, "attenuation_db_per_km": 1.0 },
        "mux": { "insertion_loss_db": [-2.0, -2.5, -3.0],
                 "group_crosstalk_db": [[null, -20.0], [-22.0, null]] },
        "demux": { "insertion_loss_db": -2.0 },
        "wdm_filters": [ { "name": "q1540", "center_nm": 1540, "extinction_db": 30 } ],
        "detectors": {
            "herald": { "efficiency": 0.8, "dark_rate_hz": 20000 },
            "idler": { "efficiency": 0.7, "dark_rate_hz": 300 }
        },
        "channels": [
            { "kind": "quantum", "mode": [0, 0], "wavelength_nm": 1540, "pair_rate_hz": 1500 },
            { "kind": "quantum", "mode": [0, 1], "wavelength_nm": 1540, "pair_rate_hz": 1100 },
            { "kind": "classical", "mode": [1, 0], "wavelength_nm": 1565, "power_w": 2e-11 }
        ],
        "counting": { "pair_rate_in_hz": 2600, "window_s": 4e-9, "acquisition_s": 1.0,
                      "repetitions": 30, "seed": 1, "filter": "q1540" }
    })
}

pub fn scenario(v: &Value) -> Scenario {
    Scenario::from_json(&v.to_string()).expect("valid test scenario")
}

/// Lossless, coupling-free 15-mode link with ideal devices and detectors.
pub fn ideal_json() -> Value {
    json!({
        "name": "ideal",
        "fiber": { "length_m": 1000, "intra_group_rate_per_m": 0.0 },
        "mux": { "insertion_loss_db": 0.0 },
        "demux": { "insertion_loss_db": 0.0 },
        "wdm_filters": [],
        "detectors": {
            "herald": { "efficiency": 1.0, "dark_rate_hz": 0 },
            "idler": { "efficiency": 1.0, "dark_rate_hz": 0 }
        },
        "channels": [
            { "kind": "quantum", "mode": [0, 0], "wavelength_nm": 1540, "pair_rate_hz": 2600 }
        ],
        "counting": { "pair_rate_in_hz": 2600, "window_s": 4e-9, "acquisition_s": 1.0,
                      "repetitions": 4, "seed": 3 }
    })
}
