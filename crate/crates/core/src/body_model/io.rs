use std::path::Path;

use super::{BodyModel, BodyModelParts, ModelMeta};
use crate::container::{sha256_hex, ArrayData, Container};
use crate::error::{Error, Result};

pub const MODEL_FORMAT_VERSION: &str = "1";
const MAGIC: &[u8; 8] = b"PFMODEL\0";
const KIND: &str = "body-model";

fn to_container(model: &BodyModel) -> Result<Container> {
    let p = model.parts();
    let (v, j, k, l) = (model.num_vertices(), model.num_joints(), p.num_betas, model.num_keypoints());
    let meta = serde_json::to_value(&p.meta).map_err(|e| Error::Format(e.to_string()))?;
    let mut c = Container::new(KIND, MODEL_FORMAT_VERSION, meta);
    c.push("template", &[v, 3], ArrayData::F64(p.template.iter().flatten().copied().collect()))?;
    c.push("shape_basis", &[v, 3, k], ArrayData::F64(p.shape_basis.clone()))?;
    c.push(
        "triangles",
        &[p.triangles.len(), 3],
        ArrayData::U32(p.triangles.iter().flatten().copied().collect()),
    )?;
    c.push("skinning_weights", &[v, j], ArrayData::F64(p.skinning_weights.clone()))?;
    c.push(
        "parents",
        &[j],
        ArrayData::I64(p.parents.iter().map(|q| q.map_or(-1, |q| q as i64)).collect()),
    )?;
    c.push("skeleton_regressor", &[j, v], ArrayData::F64(p.skeleton_regressor.clone()))?;
    c.push("joint_regressor", &[l, v], ArrayData::F64(p.joint_regressor.clone()))?;
    c.push("part_labels", &[v], ArrayData::U32(p.part_labels.iter().map(|&x| x as u32).collect()))?;
    Ok(c)
}

pub fn model_to_bytes(model: &BodyModel) -> Result<Vec<u8>> {
    to_container(model)?.to_bytes(MAGIC)
}

/// Content hash of the serialized model, used to tie datasets to the model
/// that produced them.
pub fn model_sha256(model: &BodyModel) -> Result<String> {
    Ok(sha256_hex(&model_to_bytes(model)?))
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<BodyModel> {
    let c = Container::from_bytes(bytes, MAGIC, KIND, MODEL_FORMAT_VERSION)?;
    let meta: ModelMeta = serde_json::from_value(c.meta.clone()).map_err(|e| Error::Format(e.to_string()))?;
    let shape = c.shape("shape_basis")?;
    if shape.len() != 3 {
        return Err(Error::Format("shape_basis must be rank 3".into()));
    }
    let template = c.f64s("template")?;
    let triangles = c.u32s("triangles")?;
    if template.len() % 3 != 0 || triangles.len() % 3 != 0 {
        return Err(Error::Format("template and triangles must have 3 columns".into()));
    }
    let part_labels = c
        .u32s("part_labels")?
        .into_iter()
        .map(|x| u16::try_from(x).map_err(|_| Error::Format("part label exceeds u16".into())))
        .collect::<Result<Vec<_>>>()?;
    let parents = c
        .i64s("parents")?
        .into_iter()
        .map(|q| if q < 0 { None } else { Some(q as usize) })
        .collect();
    BodyModel::new(BodyModelParts {
        template: template.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect(),
        shape_basis: c.f64s("shape_basis")?,
        num_betas: shape[2],
        triangles: triangles.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect(),
        skinning_weights: c.f64s("skinning_weights")?,
        parents,
        skeleton_regressor: c.f64s("skeleton_regressor")?,
        joint_regressor: c.f64s("joint_regressor")?,
        part_labels,
        meta,
    })
}

pub fn save_model(model: &BodyModel, path: &Path) -> Result<()> {
    std::fs::write(path, model_to_bytes(model)?)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<BodyModel> {
    model_from_bytes(&std::fs::read(path)?)
}
