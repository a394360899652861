use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::NUM_CLASSES;
use crate::features::NUM_FEATURES;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// Accumulated clouds straight into the encoder.
    A,
    /// Single scans, with a per-point preprocessing network first.
    B,
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "a" => Ok(Variant::A),
            "b" => Ok(Variant::B),
            _ => Err(Error::config("variant", format!("expected a or b, got {s:?}"))),
        }
    }
}

/// One set-abstraction level with multi-scale grouping.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SaLevel {
    pub samples: usize,
    /// Meters, strictly increasing.
    pub radii: Vec<f64>,
    /// Shared-MLP widths per scale.
    pub mlps: Vec<Vec<usize>>,
}

impl SaLevel {
    pub fn out_channels(&self) -> usize {
        self.mlps.iter().map(|m| *m.last().expect("validated")).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub variant: Variant,
    /// Points per input cloud.
    pub input_points: usize,
    /// Preprocessing widths; empty for variant A.
    pub preprocess: Vec<usize>,
    pub sa: Vec<SaLevel>,
    /// Maximum points per ball.
    pub group_cap: usize,
    /// Widths of the feature-propagation MLPs, coarsest level first.
    pub fp: Vec<Vec<usize>>,
    /// Neighbors used for interpolation.
    pub fp_k: usize,
    /// Hidden widths of the per-point head.
    pub head: Vec<usize>,
    pub num_classes: usize,
}

fn w(v: &[usize]) -> Vec<usize> {
    v.to_vec()
}

impl NetworkConfig {
    pub fn variant_a() -> Self {
        NetworkConfig {
            variant: Variant::A,
            input_points: 1280,
            preprocess: Vec::new(),
            sa: vec![
                SaLevel {
                    samples: 1024,
                    radii: vec![1.0, 3.0],
                    mlps: vec![w(&[32, 32, 64]); 2],
                },
                SaLevel {
                    samples: 512,
                    radii: vec![2.0, 5.0],
                    mlps: vec![w(&[64, 64, 128]); 2],
                },
                SaLevel {
                    samples: 256,
                    radii: vec![4.0, 10.0],
                    mlps: vec![w(&[128, 128, 256]); 2],
                },
            ],
            group_cap: 32,
            fp: vec![w(&[128, 128]), w(&[128, 64]), w(&[64, 64])],
            fp_k: 3,
            head: vec![64],
            num_classes: NUM_CLASSES,
        }
    }

    pub fn variant_b() -> Self {
        NetworkConfig {
            variant: Variant::B,
            input_points: 330,
            preprocess: vec![64, 64, 32],
            sa: vec![
                SaLevel {
                    samples: 256,
                    radii: vec![1.0, 3.0, 6.0],
                    mlps: vec![w(&[16, 16, 32]); 3],
                },
                SaLevel {
                    samples: 128,
                    radii: vec![2.0, 4.0, 8.0],
                    mlps: vec![w(&[32, 32, 64]); 3],
                },
                SaLevel {
                    samples: 64,
                    radii: vec![3.0, 6.0, 12.0],
                    mlps: vec![w(&[64, 64, 128]); 3],
                },
            ],
            ..NetworkConfig::variant_a()
        }
    }

    pub fn preset(variant: Variant) -> Self {
        match variant {
            Variant::A => Self::variant_a(),
            Variant::B => Self::variant_b(),
        }
    }

    /// Variant B topology with reduced widths and sample counts for fast
    /// desk-scale training.
    pub fn toy_b() -> Self {
        NetworkConfig {
            preprocess: vec![16, 16, 8],
            sa: vec![
                SaLevel {
                    samples: 128,
                    radii: vec![1.0, 3.0, 6.0],
                    mlps: vec![w(&[8, 16]); 3],
                },
                SaLevel {
                    samples: 64,
                    radii: vec![2.0, 4.0, 8.0],
                    mlps: vec![w(&[16, 24]); 3],
                },
                SaLevel {
                    samples: 32,
                    radii: vec![3.0, 6.0, 12.0],
                    mlps: vec![w(&[24, 32]); 3],
                },
            ],
            group_cap: 8,
            fp: vec![w(&[32]), w(&[24]), w(&[16])],
            head: vec![16],
            ..NetworkConfig::variant_b()
        }
    }

    /// Tiny variant B used by gradient checks: 16 points, widths <= 8.
    pub fn tiny_b() -> Self {
        NetworkConfig {
            input_points: 16,
            preprocess: vec![8, 4],
            sa: vec![
                SaLevel {
                    samples: 8,
                    radii: vec![0.5, 1.5],
                    mlps: vec![w(&[4, 6]); 2],
                },
                SaLevel {
                    samples: 4,
                    radii: vec![1.0, 2.5],
                    mlps: vec![w(&[6, 8]), w(&[5, 7])],
                },
                SaLevel {
                    samples: 2,
                    radii: vec![2.0, 4.0],
                    mlps: vec![w(&[8]), w(&[8])],
                },
            ],
            group_cap: 4,
            fp: vec![w(&[8]), w(&[8, 6]), w(&[6])],
            head: vec![5],
            ..NetworkConfig::variant_b()
        }
    }

    /// Channels entering the first set-abstraction level.
    pub fn base_channels(&self) -> usize {
        self.preprocess.last().copied().unwrap_or(NUM_FEATURES)
    }

    pub fn validate(&self) -> Result<()> {
        let err = |path: &str, reason: &str| Err(Error::config(path, reason));
        if self.num_classes != NUM_CLASSES {
            return err("num_classes", "must be 3");
        }
        if self.input_points == 0 {
            return err("input_points", "must be positive");
        }
        if self.sa.len() != 3 || self.fp.len() != 3 {
            return err("sa", "three set-abstraction and three propagation levels required");
        }
        if (self.variant == Variant::B) == self.preprocess.is_empty() {
            return err("preprocess", "required for variant B and only for variant B");
        }
        if self.group_cap == 0 || self.fp_k == 0 {
            return err("group_cap", "group_cap and fp_k must be positive");
        }
        let mut prev = self.input_points;
        for (l, level) in self.sa.iter().enumerate() {
            let path = format!("sa[{l}]");
            if level.samples == 0 || level.samples > prev || (l > 0 && level.samples >= prev) {
                return Err(Error::config(
                    format!("{path}.samples"),
                    "sample counts must be positive, at most input_points and strictly decreasing",
                ));
            }
            prev = level.samples;
            if level.radii.is_empty() || level.radii.len() != level.mlps.len() {
                return Err(Error::config(format!("{path}.radii"), "one MLP per radius required"));
            }
            if level.radii.iter().any(|r| !(*r > 0.0 && r.is_finite()))
                || level.radii.windows(2).any(|p| p[0] >= p[1])
            {
                return Err(Error::config(format!("{path}.radii"), "must be positive and strictly increasing"));
            }
            if level.mlps.iter().any(|m| m.is_empty() || m.contains(&0)) {
                return Err(Error::config(format!("{path}.mlps"), "widths must be non-empty and positive"));
            }
        }
        let widths = self.fp.iter().chain([&self.preprocess, &self.head]);
        if self.fp.iter().any(|m| m.is_empty()) || widths.flatten().any(|&w| w == 0) {
            return err("fp", "widths must be non-empty and positive");
        }
        Ok(())
    }
}
