//! Distribution-predicting network: proxy representation in, one
//! [`PredictionSet`] out, trained with NLL, global-rotation and sampled
//! reprojection losses.

mod io;
mod loss;
mod net;
mod train;

pub use io::{
    load_checkpoint, load_weights, save_checkpoint, save_weights, weights_from_bytes, weights_to_bytes,
    WEIGHTS_FORMAT_VERSION,
};
pub use loss::{
    loss_glob, loss_nll, loss_reproj, loss_total, raw_loss_and_grad, HeadOutputs, LossParts, LossWeights,
    ReprojNoise, TrainTarget,
};
pub use net::{ForwardCache, NetConfig, PredictorNet, LOG_CLAMP};
pub use train::{train, train_epoch, train_with, AdamState, EpochLog, TrainConfig, TrainData, TrainState};

use crate::camera::{ProxyRepresentation, WeakPerspCamera};
use crate::distributions::{GaussianDiag, PredictionSet};
use crate::error::{Error, Result};

/// Inference batch size; bounds the memory of the im2col buffers.
const PREDICT_CHUNK: usize = 64;

/// Decodes one raw 164-style output row into a prediction.
pub fn decode_prediction(raw: &[f64], pose_dim: usize, num_betas: usize) -> Result<PredictionSet> {
    let h = HeadOutputs::decode(raw, pose_dim, num_betas)?;
    Ok(PredictionSet {
        pose: GaussianDiag::new(h.pose_mean, h.pose_var)?,
        shape: GaussianDiag::new(h.shape_mean, h.shape_var)?,
        global: h.global,
        camera: WeakPerspCamera::new(h.camera[0], h.camera[1], h.camera[2])?,
    })
}

/// Raw outputs for already pooled inputs (`batch` blocks), chunked.
pub fn predict_pooled(net: &PredictorNet, inputs: &[f32], batch: usize) -> Result<Vec<PredictionSet>> {
    let c = net.config();
    let per = c.in_channels() * c.pooled_size() * c.pooled_size();
    Error::check_dim("pooled inputs", batch * per, inputs.len())?;
    let mut out = Vec::with_capacity(batch);
    for chunk in inputs.chunks(PREDICT_CHUNK * per) {
        let raw = net.predict_raw(chunk, chunk.len() / per)?;
        for row in raw.rows() {
            out.push(decode_prediction(row.as_slice().expect("row-major"), c.pose_dim, c.num_betas)?);
        }
    }
    Ok(out)
}

pub fn pool_proxy(net: &PredictorNet, proxy: &ProxyRepresentation) -> Result<Vec<f32>> {
    let c = net.config();
    if proxy.width() != c.input_size || proxy.height() != c.input_size {
        return Err(Error::Config(format!(
            "proxy is {}x{} but the network expects {}x{}",
            proxy.width(),
            proxy.height(),
            c.input_size,
            c.input_size
        )));
    }
    Error::check_dim("proxy keypoints", c.num_keypoints, proxy.num_joints())?;
    proxy.pooled(c.pool_factor)
}

/// `Y = f(X; W)` for one proxy.
pub fn forward_net(net: &PredictorNet, proxy: &ProxyRepresentation) -> Result<PredictionSet> {
    let x = pool_proxy(net, proxy)?;
    Ok(predict_pooled(net, &x, 1)?.remove(0))
}

/// Predictions for many proxies, in order.
pub fn predict_all<'a>(
    net: &PredictorNet,
    proxies: impl IntoIterator<Item = &'a ProxyRepresentation>,
) -> Result<Vec<PredictionSet>> {
    let mut out = Vec::new();
    let mut buf = Vec::new();
    let mut n = 0;
    for p in proxies {
        buf.extend(pool_proxy(net, p)?);
        n += 1;
        if n == PREDICT_CHUNK {
            out.extend(predict_pooled(net, &buf, n)?);
            buf.clear();
            n = 0;
        }
    }
    if n > 0 {
        out.extend(predict_pooled(net, &buf, n)?);
    }
    Ok(out)
}
