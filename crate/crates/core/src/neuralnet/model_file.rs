use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{Mlp, ModelMeta, NeuralNetError, TrainConfig};
use crate::dataset::Scaler;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Activation {
    hidden: String,
    output: String,
}

/// On-disk layout. Weight matrices are flattened row-major (`out × in`).
#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    layer_dims: Vec<usize>,
    activation: Activation,
    scaler: Scaler,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    train_config_echo: Option<TrainConfig>,
    seed: u64,
}

#[derive(Deserialize)]
struct VersionProbe {
    format_version: u32,
}

pub fn write_model<W: Write>(mlp: &Mlp, out: W) -> Result<(), NeuralNetError> {
    let file = ModelFile {
        format_version: MODEL_FORMAT_VERSION,
        layer_dims: mlp.layer_dims().to_vec(),
        activation: Activation {
            hidden: "relu".into(),
            output: "softmax".into(),
        },
        scaler: *mlp.scaler(),
        weights: (0..mlp.num_layers()).map(|l| mlp.weights(l).iter().copied().collect()).collect(),
        biases: (0..mlp.num_layers()).map(|l| mlp.biases(l).to_vec()).collect(),
        train_config_echo: mlp.meta.train_config,
        seed: mlp.meta.seed,
    };
    let mut out = out;
    serde_json::to_writer(&mut out, &file).map_err(|e| NeuralNetError::Io(e.into()))?;
    out.flush()?;
    Ok(())
}

pub fn save_model(mlp: &Mlp, path: &Path) -> Result<(), NeuralNetError> {
    write_model(mlp, BufWriter::new(File::create(path)?))
}

pub fn read_model(bytes: &[u8]) -> Result<Mlp, NeuralNetError> {
    let file: ModelFile = match serde_json::from_slice(bytes) {
        Ok(file) => file,
        Err(err) => {
            return Err(match serde_json::from_slice::<VersionProbe>(bytes) {
                Ok(probe) if probe.format_version != MODEL_FORMAT_VERSION => NeuralNetError::VersionMismatch {
                    found: probe.format_version,
                    expected: MODEL_FORMAT_VERSION,
                },
                _ => NeuralNetError::CorruptedPayload(err.to_string()),
            })
        }
    };
    if file.format_version != MODEL_FORMAT_VERSION {
        return Err(NeuralNetError::VersionMismatch {
            found: file.format_version,
            expected: MODEL_FORMAT_VERSION,
        });
    }
    if file.activation.hidden != "relu" || file.activation.output != "softmax" {
        return Err(NeuralNetError::CorruptedPayload(format!(
            "unsupported activations {}/{}",
            file.activation.hidden, file.activation.output
        )));
    }
    if !file.scaler.is_valid() {
        return Err(NeuralNetError::CorruptedPayload("scaler has non-positive or non-finite entries".into()));
    }
    let dims = &file.layer_dims;
    if dims.len() < 2 || file.weights.len() != dims.len() - 1 || file.biases.len() != dims.len() - 1 {
        return Err(NeuralNetError::ShapeMismatch(format!(
            "{} layer widths but {} weight and {} bias blocks",
            dims.len(),
            file.weights.len(),
            file.biases.len()
        )));
    }
    let mut weights = Vec::with_capacity(file.weights.len());
    for (l, flat) in file.weights.into_iter().enumerate() {
        let shape = (dims[l + 1], dims[l]);
        let len = flat.len();
        let w = Array2::from_shape_vec(shape, flat).map_err(|_| {
            NeuralNetError::ShapeMismatch(format!(
                "layer {l}: {len} weights do not fill {}x{}",
                shape.0, shape.1
            ))
        })?;
        weights.push(w);
    }
    let biases: Vec<Array1<f64>> = file.biases.into_iter().map(Array1::from).collect();
    if weights
        .iter()
        .flat_map(|w| w.iter())
        .chain(biases.iter().flat_map(|b| b.iter()))
        .any(|v| !v.is_finite())
    {
        return Err(NeuralNetError::CorruptedPayload("non-finite parameter".into()));
    }
    Mlp::from_parts(
        file.layer_dims,
        weights,
        biases,
        file.scaler,
        ModelMeta {
            seed: file.seed,
            train_config: file.train_config_echo,
        },
    )
}

pub fn load_model(path: &Path) -> Result<Mlp, NeuralNetError> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    read_model(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuralnet::TrainConfig;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sample_model() -> Mlp {
        let scaler = Scaler {
            mean: [1000.0, 150.0, 0.01, -0.02, -12.0],
            std: [600.0, 80.0, 0.5, 0.5, 4.0],
        };
        let mut mlp = Mlp::new(&[5, 16, 8, 2], scaler, 17).unwrap();
        mlp.meta.train_config = Some(TrainConfig::default());
        mlp
    }

    fn encode(mlp: &Mlp) -> Vec<u8> {
        let mut buf = Vec::new();
        write_model(mlp, &mut buf).unwrap();
        buf
    }

    #[test]
    fn round_trip_preserves_outputs() {
        let mlp = sample_model();
        let back = read_model(&encode(&mlp)).unwrap();
        assert_eq!(back, mlp);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            let x: [f64; 5] = std::array::from_fn(|_| rng.random_range(-2000.0..2000.0));
            let (a, b) = (mlp.forward(&x).unwrap(), back.forward(&x).unwrap());
            assert_eq!(a[0].to_bits(), b[0].to_bits());
            assert_eq!(a[1].to_bits(), b[1].to_bits());
        }
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let mlp = sample_model();
        save_model(&mlp, &path).unwrap();
        assert_eq!(load_model(&path).unwrap(), mlp);
    }

    #[test]
    fn truncated_payload_is_corrupted() {
        let bytes = encode(&sample_model());
        let cut = &bytes[..bytes.len() / 2];
        assert!(matches!(read_model(cut), Err(NeuralNetError::CorruptedPayload(_))));
        assert!(matches!(read_model(b""), Err(NeuralNetError::CorruptedPayload(_))));
    }

    #[test]
    fn foreign_version_is_reported() {
        let mut value: serde_json::Value = serde_json::from_slice(&encode(&sample_model())).unwrap();
        value["format_version"] = 7.into();
        let bytes = serde_json::to_vec(&value).unwrap();
        assert!(matches!(
            read_model(&bytes),
            Err(NeuralNetError::VersionMismatch { found: 7, expected: 1 })
        ));
        // even when the rest of the document has a different shape
        assert!(matches!(
            read_model(br#"{"format_version": 2, "something": "else"}"#),
            Err(NeuralNetError::VersionMismatch { found: 2, .. })
        ));
    }

    #[test]
    fn inconsistent_dims_are_shape_errors() {
        let mut value: serde_json::Value = serde_json::from_slice(&encode(&sample_model())).unwrap();
        value["layer_dims"] = serde_json::json!([5, 16, 9, 2]);
        let bytes = serde_json::to_vec(&value).unwrap();
        assert!(matches!(read_model(&bytes), Err(NeuralNetError::ShapeMismatch(_))));

        let mut value: serde_json::Value = serde_json::from_slice(&encode(&sample_model())).unwrap();
        value["layer_dims"] = serde_json::json!([5, 16, 2]);
        let bytes = serde_json::to_vec(&value).unwrap();
        assert!(matches!(read_model(&bytes), Err(NeuralNetError::ShapeMismatch(_))));
    }

    #[test]
    fn document_fields() {
        let value: serde_json::Value = serde_json::from_slice(&encode(&sample_model())).unwrap();
        assert_eq!(value["format_version"], 1);
        assert_eq!(value["activation"]["hidden"], "relu");
        assert_eq!(value["activation"]["output"], "softmax");
        assert_eq!(value["weights"].as_array().unwrap().len(), 3);
        assert_eq!(value["weights"][0].as_array().unwrap().len(), 80);
        assert_eq!(value["seed"], 17);
        assert_eq!(value["train_config_echo"]["batch_size"], 32);
    }
}
