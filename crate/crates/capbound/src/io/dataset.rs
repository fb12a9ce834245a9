//! Labeled datasets as JSON `{shape, samples, labels}`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensors::{DataBatch, Sample};
use crate::train::data::LabeledData;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetDoc {
    pub shape: [usize; 3],
    /// Row-major `(c, h, w)` values per sample.
    pub samples: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

impl DatasetDoc {
    pub fn from_data(d: &LabeledData) -> Self {
        Self {
            shape: d.batch.shape(),
            samples: d.batch.samples().iter().map(|s| s.data.clone()).collect(),
            labels: d.labels.clone(),
        }
    }

    pub fn into_data(self) -> Result<LabeledData> {
        let samples = self
            .samples
            .into_iter()
            .enumerate()
            .map(|(i, v)| Sample::new(self.shape, v).map_err(|e| Error::Format(format!("sample {i}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        LabeledData::new(DataBatch::new(samples)?, self.labels)
    }
}

pub fn parse_dataset(text: &str) -> Result<LabeledData> {
    let doc: DatasetDoc = serde_json::from_str(text).map_err(|e| Error::Format(format!("dataset: {e}")))?;
    doc.into_data()
}

pub fn read_dataset(path: &Path) -> Result<LabeledData> {
    parse_dataset(&std::fs::read_to_string(path)?)
}

pub fn dataset_to_string(d: &LabeledData) -> Result<String> {
    serde_json::to_string(&DatasetDoc::from_data(d)).map_err(|e| Error::Format(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::train::data::{synth_data, Task};

    #[test]
    fn round_trip() {
        let d = synth_data(Task::Rings, 6, 2).unwrap();
        assert_eq!(parse_dataset(&dataset_to_string(&d).unwrap()).unwrap(), d);
        assert!(parse_dataset(r#"{"shape":[1,2,2],"samples":[[1,2,3]],"labels":[0]}"#).is_err());
        assert!(parse_dataset(r#"{"shape":[1,1,1],"samples":[[1]],"labels":[0,1]}"#).is_err());
    }
}
