use super::config::{
    ClutterRates, CountRange, EgoSegment, MergeGuard, NoiseModel, ObjectSpec, RcsModel, RcsSpec,
    Reflector, ScenarioConfig, SpanRange, StationarySpec, TrafficSpec,
};
use crate::error::{Error, Result};
use crate::types::Vec2;

/// Names accepted by [`preset`]. `default` is an alias of `urban`.
pub const PRESET_NAMES: [&str; 5] = ["urban", "default", "bridge-guardrail", "noise-bounded", "separable"];

/// Returns a named scenario with the given seed.
pub fn preset(name: &str, seed: u64) -> Result<ScenarioConfig> {
    let cfg = match name {
        "urban" | "default" => urban(seed),
        "bridge-guardrail" => bridge_guardrail(seed),
        "noise-bounded" => noise_bounded(seed),
        "separable" => separable(seed),
        other => {
            return Err(Error::config(
                "preset",
                format!("unknown preset {other:?}; expected one of {PRESET_NAMES:?}"),
            ))
        }
    };
    Ok(cfg)
}

fn cruise(speed: f64) -> Vec<EgoSegment> {
    vec![EgoSegment {
        duration: 1.0,
        speed,
        yaw_rate: 0.0,
    }]
}

fn urban(seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        ego: vec![
            EgoSegment {
                duration: 1.5,
                speed: 8.0,
                yaw_rate: 0.0,
            },
            EgoSegment {
                duration: 1.5,
                speed: 8.0,
                yaw_rate: 0.15,
            },
        ],
        traffic: Some(TrafficSpec {
            count: CountRange::new(4, 10),
            classes: vec!["car".into(), "car".into(), "pedestrian".into(), "bicycle".into(), "truck".into()],
            x: SpanRange::new(-30.0, 60.0),
            y: SpanRange::new(-25.0, 25.0),
            speed: SpanRange::new(1.0, 14.0),
            crossing_prob: 0.3,
            detections: CountRange::new(2, 10),
            spill_prob: 0.15,
        }),
        reflectors: vec![
            Reflector {
                returns_per_scan: 6,
                ..Reflector::new(Vec2::new(-20.0, 6.0), Vec2::new(80.0, 6.0), 0.5)
            },
            Reflector {
                returns_per_scan: 4,
                ..Reflector::new(Vec2::new(-20.0, -7.0), Vec2::new(60.0, -7.0), 0.4)
            },
        ],
        clutter: ClutterRates::default(),
        stationary: StationarySpec::default(),
        ..ScenarioConfig::empty(3.0, 0.06, seed)
    }
    .with_default_bounds()
}

fn bridge_guardrail(seed: u64) -> ScenarioConfig {
    let car = |x: f64, y: f64, vx: f64| ObjectSpec {
        class: "car".into(),
        x,
        y,
        vx,
        vy: 0.0,
        length: 4.5,
        width: 1.8,
        heading_deg: 0.0,
        detections: CountRange::new(3, 8),
        spill_prob: 0.1,
    };
    ScenarioConfig {
        ego: cruise(15.0),
        objects: vec![
            car(25.0, 0.0, 17.0),
            car(5.0, 3.5, 20.0),
            car(60.0, 3.5, 12.0),
            car(40.0, -3.5, 10.0),
        ],
        reflectors: vec![
            Reflector {
                returns_per_scan: 10,
                ..Reflector::new(Vec2::new(-50.0, 5.5), Vec2::new(300.0, 5.5), 0.8)
            },
            Reflector {
                returns_per_scan: 10,
                ..Reflector::new(Vec2::new(-50.0, -5.5), Vec2::new(300.0, -5.5), 0.8)
            },
        ],
        clutter: ClutterRates::default(),
        stationary: StationarySpec {
            per_scan: CountRange::new(40, 120),
            min_range: 1.0,
        },
        ..ScenarioConfig::empty(3.0, 0.06, seed)
    }
    .with_default_bounds()
}

/// Noise clipped so the relabeling tolerances provably cover it. Velocity
/// noise is off: the clutter floor `v_threshold + comp_error_bound` leaves no
/// room for it.
fn noise_bounded(seed: u64) -> ScenarioConfig {
    let mut cfg = urban(seed);
    cfg.duration = 12.0;
    cfg.ego = vec![
        EgoSegment {
            duration: 6.0,
            speed: 12.0,
            yaw_rate: 0.0,
        },
        EgoSegment {
            duration: 6.0,
            speed: 6.0,
            yaw_rate: -0.05,
        },
    ];
    if let Some(t) = cfg.traffic.as_mut() {
        t.x = SpanRange::new(-40.0, 120.0);
        t.count = CountRange::new(8, 14);
        t.spill_prob = 0.3;
    }
    cfg.noise = NoiseModel {
        sigma_v: 0.0,
        clip_sigmas: Some(3.0),
        ..NoiseModel::default()
    };
    cfg.clutter = ClutterRates {
        noise_per_scan: CountRange::new(2, 8),
        velocity_alias_prob: 0.04,
        angle_alias_prob: 0.04,
        ..ClutterRates::default()
    };
    cfg.merge_guard = Some(MergeGuard {
        range: 0.5,
        azimuth_deg: 7.5,
    });
    cfg
}

/// Short recordings whose classes separate on velocity and RCS, sized for
/// quick training runs.
fn separable(seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        ego: cruise(5.0),
        traffic: Some(TrafficSpec {
            count: CountRange::new(2, 4),
            classes: vec!["car".into()],
            x: SpanRange::new(0.0, 40.0),
            y: SpanRange::new(-20.0, 20.0),
            speed: SpanRange::new(4.0, 12.0),
            crossing_prob: 0.5,
            detections: CountRange::new(4, 12),
            spill_prob: 0.0,
        }),
        noise: NoiseModel {
            sigma_v: 0.05,
            comp_error_bound: 0.1,
            clip_sigmas: Some(3.0),
            ..NoiseModel::default()
        },
        clutter: ClutterRates {
            noise_per_scan: CountRange::new(3, 10),
            noise_speed: SpanRange::new(2.0, 15.0),
            velocity_alias_prob: 0.02,
            angle_alias_prob: 0.0,
            ..ClutterRates::default()
        },
        stationary: StationarySpec {
            per_scan: CountRange::new(25, 70),
            min_range: 1.0,
        },
        rcs: RcsModel {
            moving: RcsSpec { mean: 12.0, std: 2.0 },
            stationary: RcsSpec { mean: 0.0, std: 2.0 },
            mirror_ghost: RcsSpec { mean: -18.0, std: 2.0 },
            ambiguity_ghost: RcsSpec { mean: -18.0, std: 2.0 },
            noise: RcsSpec { mean: -18.0, std: 2.0 },
        },
        ..ScenarioConfig::empty(0.12, 0.06, seed)
    }
    .with_default_bounds()
}

impl ScenarioConfig {
    fn with_default_bounds(mut self) -> Self {
        self.detections_per_scan = CountRange::new(20, 330);
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_validates() {
        for name in PRESET_NAMES {
            preset(name, 1).unwrap().validate().unwrap();
        }
        assert!(preset("nope", 1).unwrap_err().is_config());
    }

    #[test]
    fn presets_round_trip_through_toml() {
        for name in PRESET_NAMES {
            let cfg = preset(name, 7).unwrap();
            let text = toml::to_string(&cfg).unwrap();
            let back: ScenarioConfig = toml::from_str(&text).unwrap();
            assert_eq!(back, cfg, "{name}");
        }
    }
}
