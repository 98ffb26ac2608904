//! Cameras, silhouette rasterization and joint heatmaps.
//!
//! Image convention: pixel `(x, y)` has its center at integer coordinates
//! `(x, y)`; `u` grows with camera-space `+x` and `v` with `+y`.

use serde::{Deserialize, Serialize};

use crate::autodiff::Real;
use crate::error::{Error, Result};
use crate::rotation::Vec3;

/// Heatmap Gaussian width in pixels.
pub const HEATMAP_SIGMA: f64 = 4.0;

/// `c = [s, tx, ty]` in normalized image units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeakPerspCamera {
    pub scale: f64,
    pub tx: f64,
    pub ty: f64,
}

impl WeakPerspCamera {
    pub fn new(scale: f64, tx: f64, ty: f64) -> Result<Self> {
        if !(scale > 0.0) || !scale.is_finite() || !tx.is_finite() || !ty.is_finite() {
            return Err(Error::Config(format!("weak-perspective scale must be positive and finite, got {scale}")));
        }
        Ok(Self { scale, tx, ty })
    }

    pub fn project(&self, points: &[[f64; 3]]) -> Vec<[f64; 2]> {
        project_weak(points, self.scale, self.tx, self.ty)
    }
}

/// `s·(x, y) + (tx, ty)` for each point.
pub fn project_weak<T: Real>(points: &[Vec3<T>], s: T, tx: T, ty: T) -> Vec<[T; 2]> {
    points.iter().map(|p| [p[0] * s + tx, p[1] * s + ty]).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerspCamera {
    /// Pixels.
    pub focal: f64,
    pub width: usize,
    pub height: usize,
    /// Meters, applied to points before projection.
    pub translation: [f64; 3],
}

impl PerspCamera {
    pub fn new(focal: f64, width: usize, height: usize, translation: [f64; 3]) -> Result<Self> {
        if !(focal > 0.0) || width == 0 || height == 0 {
            return Err(Error::Config(format!("invalid camera: focal {focal}, size {width}x{height}")));
        }
        if !(translation[2] > 0.0) {
            return Err(Error::Config(format!("camera translation z must be positive, got {}", translation[2])));
        }
        Ok(Self { focal, width, height, translation })
    }

    /// Pinhole projection `u = f·(x+tx)/(z+tz) + W/2`, `v = f·(y+ty)/(z+tz) + H/2`.
    pub fn project(&self, points: &[[f64; 3]]) -> Result<Vec<[f64; 2]>> {
        let [tx, ty, tz] = self.translation;
        let (cx, cy) = (self.width as f64 / 2.0, self.height as f64 / 2.0);
        points
            .iter()
            .enumerate()
            .map(|(index, p)| {
                let depth = p[2] + tz;
                if !(depth > 0.0) {
                    return Err(Error::BehindCamera { index, depth });
                }
                Ok([self.focal * (p[0] + tx) / depth + cx, self.focal * (p[1] + ty) / depth + cy])
            })
            .collect()
    }
}

pub fn project_persp(points: &[[f64; 3]], cam: &PerspCamera) -> Result<Vec<[f64; 2]>> {
    cam.project(points)
}

/// Row-major binary image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub data: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![false; width * height] }
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn coverage(&self) -> f64 {
        self.count() as f64 / self.data.len().max(1) as f64
    }

    /// Pixel at the rounded location, if in frame.
    pub fn at_point(&self, p: [f64; 2]) -> Option<bool> {
        pixel_of(p, self.width, self.height).map(|(x, y)| self.get(x, y))
    }

    pub fn to_bits(&self) -> Vec<u8> {
        let mut out = vec![0u8; self.data.len().div_ceil(8)];
        for (i, &b) in self.data.iter().enumerate() {
            if b {
                out[i / 8] |= 1 << (i % 8);
            }
        }
        out
    }

    pub fn from_bits(width: usize, height: usize, bits: &[u8]) -> Result<Self> {
        let n = width * height;
        Error::check_dim("packed mask bytes", n.div_ceil(8), bits.len())?;
        Ok(Self { width, height, data: (0..n).map(|i| bits[i / 8] >> (i % 8) & 1 == 1).collect() })
    }
}

/// Rounded pixel of a sub-pixel location if it falls inside the frame.
pub fn pixel_of(p: [f64; 2], width: usize, height: usize) -> Option<(usize, usize)> {
    let (x, y) = (p[0].round(), p[1].round());
    (x >= 0.0 && y >= 0.0 && x < width as f64 && y < height as f64).then_some((x as usize, y as usize))
}

#[inline]
fn orient(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
}

/// Point-in-triangle with inclusive edges, independent of winding.
#[inline]
pub fn covers(a: [f64; 2], b: [f64; 2], c: [f64; 2], p: [f64; 2]) -> bool {
    let (w0, w1, w2) = (orient(b, c, p), orient(c, a, p), orient(a, b, p));
    (w0 >= 0.0 && w1 >= 0.0 && w2 >= 0.0) || (w0 <= 0.0 && w1 <= 0.0 && w2 <= 0.0)
}

/// Sets every pixel whose center lies inside a projected triangle.
/// Zero-area triangles are skipped.
pub fn rasterize_into(mask: &mut Mask, pixels: &[[f64; 2]], triangles: impl IntoIterator<Item = [u32; 3]>) {
    let (w, h) = (mask.width as f64, mask.height as f64);
    for [i, j, k] in triangles {
        let (a, b, c) = (pixels[i as usize], pixels[j as usize], pixels[k as usize]);
        if orient(a, b, c) == 0.0 {
            continue;
        }
        let lo_x = a[0].min(b[0]).min(c[0]).ceil().max(0.0);
        let hi_x = a[0].max(b[0]).max(c[0]).floor().min(w - 1.0);
        let lo_y = a[1].min(b[1]).min(c[1]).ceil().max(0.0);
        let hi_y = a[1].max(b[1]).max(c[1]).floor().min(h - 1.0);
        if lo_x > hi_x || lo_y > hi_y {
            continue;
        }
        for y in lo_y as usize..=hi_y as usize {
            for x in lo_x as usize..=hi_x as usize {
                if covers(a, b, c, [x as f64, y as f64]) {
                    mask.set(x, y, true);
                }
            }
        }
    }
}

/// Binary coverage of the given triangles over pre-projected pixel positions.
pub fn rasterize_pixels(pixels: &[[f64; 2]], triangles: &[[u32; 3]], width: usize, height: usize) -> Mask {
    let mut mask = Mask::new(width, height);
    rasterize_into(&mut mask, pixels, triangles.iter().copied());
    mask
}

/// Silhouette of a mesh under a perspective camera.
pub fn rasterize_silhouette(vertices: &[[f64; 3]], triangles: &[[u32; 3]], cam: &PerspCamera) -> Result<Mask> {
    let pixels = cam.project(vertices)?;
    if let Some(bad) = triangles.iter().flatten().find(|&&i| i as usize >= vertices.len()) {
        return Err(Error::InvalidModel(format!("triangle index {bad} out of range")));
    }
    Ok(rasterize_pixels(&pixels, triangles, cam.width, cam.height))
}

/// `ω_l = 0` iff `confidence_l < t`.
pub fn threshold_detections(confidences: &[f64], t: f64) -> Vec<bool> {
    confidences.iter().map(|&c| !(c < t)).collect()
}

/// Dense heatmaps, channel-major `[L][H][W]`.
///
/// A visible channel is a unit-peak Gaussian centered on the joint's rounded
/// pixel; invisible or out-of-frame joints give all-zero channels.
pub fn joints_to_heatmaps(joints: &[[f64; 2]], visible: &[bool], width: usize, height: usize, sigma: f64) -> Result<Vec<f64>> {
    Error::check_dim("visibility", joints.len(), visible.len())?;
    let mut out = vec![0.0; joints.len() * width * height];
    for (l, (p, &vis)) in joints.iter().zip(visible).enumerate() {
        let Some((cx, cy)) = pixel_of(*p, width, height).filter(|_| vis) else { continue };
        let gx = gaussian_profile(cx as f64, width, sigma);
        let gy = gaussian_profile(cy as f64, height, sigma);
        let channel = &mut out[l * width * height..(l + 1) * width * height];
        for (y, row) in channel.chunks_exact_mut(width).enumerate() {
            for (x, v) in row.iter_mut().enumerate() {
                *v = gx[x] * gy[y];
            }
        }
    }
    Ok(out)
}

fn gaussian_profile(center: f64, n: usize, sigma: f64) -> Vec<f64> {
    let k = -0.5 / (sigma * sigma);
    (0..n).map(|i| (k * (i as f64 - center).powi(2)).exp()).collect()
}

/// Network input X: a silhouette plus per-joint heatmaps.
///
/// Heatmaps are stored implicitly (joint pixel + visibility) and expanded
/// on demand, dense or average-pooled.
#[derive(Debug, Clone, PartialEq)]
pub struct ProxyRepresentation {
    pub silhouette: Mask,
    pub joints: Vec<[f64; 2]>,
    pub visible: Vec<bool>,
}

impl ProxyRepresentation {
    /// Marks out-of-frame joints invisible.
    pub fn new(silhouette: Mask, joints: Vec<[f64; 2]>, visible: Vec<bool>) -> Result<Self> {
        Error::check_dim("visibility", joints.len(), visible.len())?;
        let (w, h) = (silhouette.width, silhouette.height);
        let visible = joints.iter().zip(visible).map(|(p, v)| v && pixel_of(*p, w, h).is_some()).collect();
        Ok(Self { silhouette, joints, visible })
    }

    pub fn width(&self) -> usize {
        self.silhouette.width
    }

    pub fn height(&self) -> usize {
        self.silhouette.height
    }

    pub fn num_joints(&self) -> usize {
        self.joints.len()
    }

    /// Input channels: silhouette + one per joint.
    pub fn channels(&self) -> usize {
        1 + self.joints.len()
    }

    pub fn heatmaps(&self) -> Vec<f64> {
        joints_to_heatmaps(&self.joints, &self.visible, self.width(), self.height(), HEATMAP_SIGMA)
            .expect("lengths checked on construction")
    }

    /// Channel-major `[L+1][H/f][W/f]` average pooling by factor `f`
    /// (silhouette first). Pooled Gaussians use separability.
    pub fn pooled(&self, factor: usize) -> Result<Vec<f32>> {
        let (w, h) = (self.width(), self.height());
        if factor == 0 || w % factor != 0 || h % factor != 0 {
            return Err(Error::Config(format!("pool factor {factor} must divide {w}x{h}")));
        }
        let (pw, ph) = (w / factor, h / factor);
        let area = (factor * factor) as f64;
        let mut out = vec![0.0f32; self.channels() * pw * ph];
        for py in 0..ph {
            for px in 0..pw {
                let mut n = 0usize;
                for y in py * factor..(py + 1) * factor {
                    for x in px * factor..(px + 1) * factor {
                        n += self.silhouette.get(x, y) as usize;
                    }
                }
                out[py * pw + px] = (n as f64 / area) as f32;
            }
        }
        let pool = |profile: Vec<f64>| -> Vec<f64> { profile.chunks_exact(factor).map(|c| c.iter().sum()).collect() };
        for (l, (p, &vis)) in self.joints.iter().zip(&self.visible).enumerate() {
            let Some((cx, cy)) = pixel_of(*p, w, h).filter(|_| vis) else { continue };
            let gx = pool(gaussian_profile(cx as f64, w, HEATMAP_SIGMA));
            let gy = pool(gaussian_profile(cy as f64, h, HEATMAP_SIGMA));
            let channel = &mut out[(l + 1) * pw * ph..(l + 2) * pw * ph];
            for (y, row) in channel.chunks_exact_mut(pw).enumerate() {
                for (x, v) in row.iter_mut().enumerate() {
                    *v = (gx[x] * gy[y] / area) as f32;
                }
            }
        }
        Ok(out)
    }
}
