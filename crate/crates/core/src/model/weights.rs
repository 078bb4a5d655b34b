//! Named-array weight archives (safetensors layout: a JSON header of
//! names, dtypes and shapes followed by raw little-endian data).

use std::collections::HashMap;
use std::path::Path;

use ndarray::Array2;
use safetensors::tensor::{Dtype, SafeTensors, TensorView};

use super::{GroupQueries, ModelConfig, ModelState, Parameters};
use crate::error::{Error, Result};

/// Archive name of the fixed decoder queries.
pub const QUERY_TENSOR: &str = "decoder.group_queries";
const CONFIG_KEY: &str = "model_config";

fn to_bytes(data: &[f64]) -> Vec<u8> {
    data.iter().flat_map(|v| v.to_le_bytes()).collect()
}

fn read_values(view: &TensorView<'_>, name: &str) -> Result<Vec<f64>> {
    let bytes = view.data();
    match view.dtype() {
        Dtype::F64 => Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect()),
        Dtype::F32 => Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4-byte chunk")) as f64)
            .collect()),
        other => Err(Error::Archive(format!("{name}: unsupported dtype {other:?}"))),
    }
}

/// Serializes named `f64` arrays plus string metadata.
pub(crate) fn write_archive(path: &Path, tensors: Vec<Tensor>, metadata: HashMap<String, String>) -> Result<()> {
    let views = tensors
        .iter()
        .map(|(name, shape, bytes)| {
            TensorView::new(Dtype::F64, shape.clone(), bytes)
                .map(|v| (name.clone(), v))
                .map_err(|e| Error::Archive(e.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    let bytes = safetensors::serialize(views, &Some(metadata)).map_err(|e| Error::Archive(e.to_string()))?;
    std::fs::write(path, bytes)?;
    Ok(())
}

pub(crate) type Tensor = (String, Vec<usize>, Vec<u8>);

pub(crate) fn param_tensors<P: Parameters>(params: &P, prefix: &str) -> Vec<Tensor> {
    params
        .views()
        .into_iter()
        .map(|v| (format!("{prefix}{}", v.name), v.shape, to_bytes(v.data)))
        .collect()
}

pub(crate) fn state_tensors(state: &ModelState, prefix: &str) -> Vec<Tensor> {
    let mut out = param_tensors(&state.params, prefix);
    let q = state.queries().as_array();
    out.push((
        format!("{prefix}{QUERY_TENSOR}"),
        q.shape().to_vec(),
        to_bytes(q.as_slice().expect("standard layout")),
    ));
    out
}

/// Writes every parameter, the fixed queries and the model config.
pub fn save_state(state: &ModelState, path: &Path) -> Result<()> {
    let mut meta = HashMap::new();
    meta.insert(CONFIG_KEY.to_string(), serde_json::to_string(state.config())?);
    write_archive(path, state_tensors(state, ""), meta)
}

/// Reads an archive written by [`save_state`].
pub fn load_state(path: &Path) -> Result<ModelState> {
    let bytes = std::fs::read(path)?;
    let meta = read_metadata(&bytes, path)?;
    let config: ModelConfig = serde_json::from_str(meta_value(&meta, CONFIG_KEY, path)?)?;
    let archive = SafeTensors::deserialize(&bytes).map_err(|e| Error::Archive(e.to_string()))?;
    state_from_archive(&archive, &config, "")
}

pub(crate) fn model_config_key() -> &'static str {
    CONFIG_KEY
}

pub(crate) fn read_metadata(bytes: &[u8], path: &Path) -> Result<HashMap<String, String>> {
    let (_, meta) =
        SafeTensors::read_metadata(bytes).map_err(|e| Error::Archive(format!("{}: {e}", path.display())))?;
    Ok(meta.metadata().clone().unwrap_or_default())
}

pub(crate) fn meta_value<'m>(meta: &'m HashMap<String, String>, key: &str, path: &Path) -> Result<&'m str> {
    meta.get(key)
        .map(String::as_str)
        .ok_or_else(|| Error::Archive(format!("{}: no {key} metadata", path.display())))
}

pub(crate) fn state_from_archive(archive: &SafeTensors<'_>, config: &ModelConfig, prefix: &str) -> Result<ModelState> {
    let mut state = ModelState::init(config, 0)?;
    fill_params(archive, &mut state.params, prefix, |_| true)?;
    let qname = format!("{prefix}{QUERY_TENSOR}");
    let view = archive
        .tensor(&qname)
        .map_err(|_| Error::MissingParameter(vec![qname.clone()]))?;
    let expected = [config.decoder.num_groups, config.decoder.query_dim];
    if view.shape() != expected {
        return Err(Error::ShapeMismatch(vec![format!(
            "{qname}: expected {expected:?}, found {:?}",
            view.shape()
        )]));
    }
    let values = read_values(&view, &qname)?;
    let queries = Array2::from_shape_vec((expected[0], expected[1]), values).expect("checked shape");
    let ModelState { config, params, .. } = state;
    state = ModelState::from_parts(config, params, GroupQueries::from_array(queries));
    Ok(state)
}

/// Copies every parameter accepted by `select` from the archive, reporting
/// all shape mismatches (first) or missing names together.
pub(crate) fn fill_params<P: Parameters>(
    archive: &SafeTensors<'_>,
    target: &mut P,
    prefix: &str,
    select: impl Fn(&str) -> bool,
) -> Result<()> {
    let mut mismatched = Vec::new();
    let mut missing = Vec::new();
    let mut staged = Vec::new();
    for (i, v) in target.views().iter().enumerate() {
        if !select(&v.name) {
            continue;
        }
        let name = format!("{prefix}{}", v.name);
        match archive.tensor(&name) {
            Err(_) => missing.push(name),
            Ok(t) if t.shape() != v.shape.as_slice() => {
                mismatched.push(format!("{name}: expected {:?}, found {:?}", v.shape, t.shape()))
            }
            Ok(t) => staged.push((i, read_values(&t, &name)?)),
        }
    }
    if !mismatched.is_empty() {
        return Err(Error::ShapeMismatch(mismatched));
    }
    if !missing.is_empty() {
        return Err(Error::MissingParameter(missing));
    }
    let mut views = target.views_mut();
    for (i, values) in staged {
        views[i].data.copy_from_slice(&values);
    }
    Ok(())
}

/// Replaces the encoder parameters of `state` with those in a weight file.
/// The decoder and group queries are left untouched. `f32` and `f64`
/// archives are both accepted.
pub fn load_backbone_weights(state: &ModelState, path: &Path) -> Result<ModelState> {
    let bytes = std::fs::read(path)?;
    let archive = SafeTensors::deserialize(&bytes).map_err(|e| Error::Archive(e.to_string()))?;
    let mut out = state.clone();
    fill_params(&archive, &mut out.params, "", |name| name.starts_with("encoder."))?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn save_load_round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.safetensors");
        let s = ModelState::init(&ModelConfig::toy(), 7).unwrap();
        save_state(&s, &path).unwrap();
        let back = load_state(&path).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn backbone_from_a_differently_sized_model_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("big.safetensors");
        let mut big = ModelConfig::toy();
        big.encoder.embed_dim = 32;
        big.encoder.num_layers = 4;
        big.decoder.query_dim = 32;
        save_state(&ModelState::init(&big, 1).unwrap(), &path).unwrap();

        let toy = ModelState::init(&ModelConfig::toy(), 2).unwrap();
        match load_backbone_weights(&toy, &path) {
            Err(Error::ShapeMismatch(report)) => {
                assert!(report.iter().any(|l| l.starts_with("encoder.patch_embed.weight")));
                assert!(report.iter().any(|l| l.starts_with("encoder.layers.1.fc1.weight")));
                assert!(report.iter().all(|l| l.starts_with("encoder.")));
            }
            other => panic!("expected shape mismatch, got {other:?}"),
        }
    }

    #[test]
    fn encoder_only_file_replaces_encoder_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("enc.safetensors");
        let donor = ModelState::init(&ModelConfig::toy(), 11).unwrap();
        let tensors: Vec<_> = state_tensors(&donor, "")
            .into_iter()
            .filter(|(n, _, _)| n.starts_with("encoder."))
            .collect();
        write_archive(&path, tensors, HashMap::new()).unwrap();

        let target = ModelState::init(&ModelConfig::toy(), 12).unwrap();
        let loaded = load_backbone_weights(&target, &path).unwrap();
        assert_eq!(loaded.params.encoder, donor.params.encoder);
        assert_eq!(loaded.params.decoder, target.params.decoder);
        assert_eq!(loaded.queries(), target.queries());
    }

    #[test]
    fn missing_encoder_tensors_are_listed() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("partial.safetensors");
        let donor = ModelState::init(&ModelConfig::toy(), 11).unwrap();
        let tensors: Vec<_> = state_tensors(&donor, "")
            .into_iter()
            .filter(|(n, _, _)| n.starts_with("encoder.") && !n.starts_with("encoder.norm"))
            .collect();
        write_archive(&path, tensors, HashMap::new()).unwrap();
        match load_backbone_weights(&donor, &path) {
            Err(Error::MissingParameter(names)) => {
                assert_eq!(names, ["encoder.norm.gamma", "encoder.norm.beta"]);
            }
            other => panic!("expected missing parameters, got {other:?}"),
        }
    }

    #[test]
    fn f32_archives_are_widened() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f32.safetensors");
        let target = ModelState::init(&ModelConfig::toy(), 3).unwrap();
        let f32_data: Vec<_> = target
            .params
            .views()
            .into_iter()
            .filter(|v| v.name.starts_with("encoder."))
            .map(|v| {
                let bytes: Vec<u8> = v.data.iter().flat_map(|_| 0.5f32.to_le_bytes()).collect();
                (v.name, v.shape, bytes)
            })
            .collect();
        let views: Vec<_> = f32_data
            .iter()
            .map(|(n, s, b)| (n.clone(), TensorView::new(Dtype::F32, s.clone(), b).unwrap()))
            .collect();
        std::fs::write(&path, safetensors::serialize(views, &None).unwrap()).unwrap();
        let loaded = load_backbone_weights(&target, &path).unwrap();
        assert!(loaded
            .params
            .encoder
            .views()
            .iter()
            .all(|v| v.data.iter().all(|&x| x == 0.5)));
    }
}
