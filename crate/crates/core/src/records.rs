//! Labeled image and sentence records, the units the sampler draws from.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::finding::FindingLabel;

/// A dense image, channel-major (`data[c][y][x]` flattened), values in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Image {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Image {
        Image {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    pub fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f64) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    pub fn validate(&self) -> Result<()> {
        if self.data.len() != self.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{}x{}x{} = {}", self.channels, self.height, self.width, self.len()),
                got: format!("{} values", self.data.len()),
            });
        }
        Ok(())
    }
}

/// An image bound to its multi-hot finding label. Unlabeled records are
/// rejected: a zero label would make semantic similarity undefined.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImageRecord {
    pub id: String,
    pub image: Image,
    pub label: FindingLabel,
}

impl ImageRecord {
    pub fn new(id: impl Into<String>, image: Image, label: FindingLabel) -> Result<ImageRecord> {
        let id = id.into();
        if label.is_unlabeled() {
            return Err(Error::DegenerateLabel(format!("image record {id:?}")));
        }
        image.validate()?;
        Ok(ImageRecord { id, image, label })
    }
}

/// A sentence bound to its multi-hot finding label. Requires at least
/// three words and at least one set label bit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SentenceRecord {
    pub id: String,
    pub text: String,
    pub label: FindingLabel,
}

impl SentenceRecord {
    pub fn new(
        id: impl Into<String>,
        text: impl Into<String>,
        label: FindingLabel,
    ) -> Result<SentenceRecord> {
        let id = id.into();
        let text = text.into();
        if label.is_unlabeled() {
            return Err(Error::DegenerateLabel(format!("sentence record {id:?}")));
        }
        if text.split_whitespace().count() < 3 {
            return Err(Error::ContractViolation(format!(
                "sentence record {id:?} has fewer than 3 words"
            )));
        }
        Ok(SentenceRecord { id, text, label })
    }
}

/// One training batch: independently drawn images and sentences of equal
/// count. There is no pairing relation between `images[i]` and `texts[i]`.
#[derive(Debug, Clone)]
pub struct Batch {
    pub images: Vec<ImageRecord>,
    pub texts: Vec<SentenceRecord>,
}

impl Batch {
    pub fn new(images: Vec<ImageRecord>, texts: Vec<SentenceRecord>) -> Result<Batch> {
        if images.len() != texts.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} texts", images.len()),
                got: format!("{} texts", texts.len()),
            });
        }
        if images.len() < 2 {
            return Err(Error::ContractViolation(
                "a batch needs at least 2 records per side".into(),
            ));
        }
        Ok(Batch { images, texts })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}
