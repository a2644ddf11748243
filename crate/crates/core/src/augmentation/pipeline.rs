use image::RgbImage;
use rand::Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::erase::{random_erase, EraseParams};
use super::geometric::geometric_transform;
use super::mosaic::mosaic;
use super::randaugment::rand_augment;
use super::{AugmentOp, AugmentationSpec};
use crate::dataset::ClassLabel;
use crate::util::derived_rng;
use crate::{Error, Result};

/// One unparsed `{kind, params, probability}` entry from a config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSpec {
    pub kind: String,
    #[serde(default = "empty_params")]
    pub params: serde_json::Value,
    #[serde(default = "one")]
    pub probability: f64,
}

fn empty_params() -> serde_json::Value {
    serde_json::Value::Object(Default::default())
}

fn one() -> f64 {
    1.0
}

/// Augmentation section of the pipeline config.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentationConfig {
    pub seed: u64,
    pub specs: Vec<RawSpec>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AugmentationPipeline {
    pub specs: Vec<AugmentationSpec>,
    pub seed: u64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RotateParams {
    min_degrees: f64,
    max_degrees: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TranslateParams {
    max_x: f64,
    max_y: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScaleParams {
    min_factor: f64,
    max_factor: f64,
}

#[derive(Deserialize)]
#[serde(default, deny_unknown_fields)]
struct MosaicParams {
    center_jitter: f64,
}

impl Default for MosaicParams {
    fn default() -> Self {
        MosaicParams { center_jitter: 0.25 }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RandAugmentParams {
    n: u32,
    m: u32,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NoParams {}

fn params<T: DeserializeOwned>(raw: &RawSpec) -> std::result::Result<T, String> {
    serde_json::from_value(raw.params.clone()).map_err(|e| format!("malformed params: {e}"))
}

fn parse_spec(raw: &RawSpec) -> std::result::Result<AugmentationSpec, String> {
    let op = match raw.kind.as_str() {
        "hflip" => params::<NoParams>(raw).map(|_| AugmentOp::Hflip)?,
        "vflip" => params::<NoParams>(raw).map(|_| AugmentOp::Vflip)?,
        "rotate" => {
            let p: RotateParams = params(raw)?;
            AugmentOp::Rotate { min_degrees: p.min_degrees, max_degrees: p.max_degrees }
        }
        "translate" => {
            let p: TranslateParams = params(raw)?;
            AugmentOp::Translate { max_x: p.max_x, max_y: p.max_y }
        }
        "scale" => {
            let p: ScaleParams = params(raw)?;
            AugmentOp::Scale { min_factor: p.min_factor, max_factor: p.max_factor }
        }
        "mosaic" => {
            let p: MosaicParams = params(raw)?;
            AugmentOp::Mosaic { center_jitter: p.center_jitter }
        }
        "random_erase" => AugmentOp::RandomErase(params::<EraseParams>(raw)?),
        "randaugment" => {
            let p: RandAugmentParams = params(raw)?;
            AugmentOp::RandAugment { n: p.n, m: p.m }
        }
        other => return Err(format!("unknown kind `{other}`")),
    };
    let spec = AugmentationSpec::new(op, raw.probability);
    spec.validate().map_err(|e| e.to_string())?;
    Ok(spec)
}

/// Parses and validates an augmentation config section, preserving entry order.
pub fn build_pipeline(config: &AugmentationConfig) -> Result<AugmentationPipeline> {
    let specs = config
        .specs
        .iter()
        .enumerate()
        .map(|(index, raw)| {
            parse_spec(raw).map_err(|message| Error::Augmentation {
                index,
                kind: raw.kind.clone(),
                message,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AugmentationPipeline {
        specs,
        seed: config.seed,
    })
}

impl AugmentationPipeline {
    pub fn new(specs: Vec<AugmentationSpec>, seed: u64) -> Result<Self> {
        for (index, s) in specs.iter().enumerate() {
            s.validate().map_err(|e| Error::Augmentation {
                index,
                kind: s.op.kind().to_string(),
                message: e.to_string(),
            })?;
        }
        Ok(AugmentationPipeline { specs, seed })
    }

    pub fn is_identity(&self) -> bool {
        self.specs.is_empty()
    }

    /// Augments one sample with the stream for `(seed, sample_id, epoch)`.
    ///
    /// `partners` supplies the other mosaic tiles; only entries with the
    /// sample's label are used, and the sample itself stands in when none are.
    pub fn apply(
        &self,
        image: &RgbImage,
        label: ClassLabel,
        sample_id: &str,
        epoch: u64,
        partners: &[(ClassLabel, &RgbImage)],
    ) -> Result<RgbImage> {
        let mut rng = derived_rng(self.seed, &[b"augment", sample_id.as_bytes(), &epoch.to_le_bytes()]);
        let mut out = image.clone();
        for spec in &self.specs {
            let draw: f64 = rng.random();
            if draw >= spec.probability {
                continue;
            }
            out = match &spec.op {
                op if op.is_geometric() => geometric_transform(&out, spec, &mut rng)?,
                AugmentOp::RandomErase(p) => random_erase(&out, p, &mut rng),
                AugmentOp::RandAugment { n, m } => rand_augment(&out, *n, *m, &mut rng),
                AugmentOp::Mosaic { center_jitter } => {
                    let pool: Vec<&RgbImage> = partners
                        .iter()
                        .filter(|(l, _)| *l == label)
                        .map(|(_, img)| *img)
                        .collect();
                    let pick = |rng: &mut rand_chacha::ChaCha8Rng| -> &RgbImage {
                        if pool.is_empty() {
                            image
                        } else {
                            pool[rng.random_range(0..pool.len())]
                        }
                    };
                    let (a, b, c) = (pick(&mut rng), pick(&mut rng), pick(&mut rng));
                    mosaic([&out, a, b, c], [label; 4], out.dimensions(), *center_jitter, &mut rng)?.0
                }
                _ => unreachable!("geometric kinds handled above"),
            };
        }
        Ok(out)
    }
}
