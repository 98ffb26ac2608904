//! Dataset container: magic, JSON header with configs, seed and an index
//! table of per-record offsets and checksums, then the records.
//!
//! A record stores its numeric arrays as little-endian values and the
//! silhouette bit-packed, so any sample can be read on its own.

use std::fs::File;
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AugmentationConfig, AugmentationRecord, CorruptMode, GenerationConfig, SyntheticSample};
use crate::body_model::{GlobalRotation, PoseParams, ShapeParams};
use crate::camera::{Mask, PerspCamera, ProxyRepresentation};
use crate::container::sha256_hex;
use crate::error::{Error, Result};

pub const DATASET_FORMAT_VERSION: &str = "1";
const MAGIC: &[u8; 8] = b"PFDATA\0\0";
const KIND: &str = "synthetic-dataset";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub seed: u64,
    pub generation: GenerationConfig,
    pub augmentation: AugmentationConfig,
    pub corrupt: CorruptMode,
    pub num_subjects: usize,
    pub poses_per_subject: usize,
    pub width: usize,
    pub height: usize,
    pub num_keypoints: usize,
    pub pose_dim: usize,
    pub num_betas: usize,
    /// Checksum of the serialized body model the data was rendered with.
    pub model_sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct IndexEntry {
    offset: u64,
    len: u64,
    sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct FileHeader {
    kind: String,
    version: String,
    dataset: DatasetHeader,
    records: Vec<IndexEntry>,
}

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, v: &[f64]) {
        v.iter().for_each(|x| self.0.extend_from_slice(&x.to_le_bytes()));
    }
    fn bytes(&mut self, b: &[u8]) {
        self.u32(b.len() as u32);
        self.0.extend_from_slice(b);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Format("record truncated".into()))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        Ok(self.take(8 * n)?.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }
    fn bytes(&mut self) -> Result<&'a [u8]> {
        let n = self.u32()? as usize;
        self.take(n)
    }
}

fn points(v: &[[f64; 2]]) -> Vec<f64> {
    v.iter().flatten().copied().collect()
}

fn unpoints(v: Vec<f64>) -> Vec<[f64; 2]> {
    v.chunks_exact(2).map(|c| [c[0], c[1]]).collect()
}

fn encode(s: &SyntheticSample, h: &DatasetHeader) -> Result<Vec<u8>> {
    Error::check_dim("record pose", h.pose_dim, s.pose.0.len())?;
    Error::check_dim("record shape", h.num_betas, s.shape.0.len())?;
    Error::check_dim("record keypoints", h.num_keypoints, s.target_joints.len())?;
    Error::check_dim("record width", h.width, s.proxy.width())?;
    Error::check_dim("record height", h.height, s.proxy.height())?;
    let mut w = Writer(Vec::new());
    w.u32(s.subject);
    w.u32(s.view);
    w.u32(s.corrupted as u32);
    w.f64s(&s.pose.0);
    w.f64s(&s.shape.0);
    w.f64s(&s.global.0);
    w.f64s(&[s.camera.focal]);
    w.f64s(&s.camera.translation);
    w.f64s(&points(&s.target_joints));
    w.f64s(&points(&s.proxy.joints));
    w.bytes(&s.proxy.visible.iter().map(|&v| v as u8).collect::<Vec<_>>());
    w.bytes(&serde_json::to_vec(&s.augmentation).map_err(|e| Error::Format(e.to_string()))?);
    w.bytes(&s.proxy.silhouette.to_bits());
    Ok(w.0)
}

fn decode(buf: &[u8], h: &DatasetHeader) -> Result<SyntheticSample> {
    let mut r = Reader { buf, pos: 0 };
    let subject = r.u32()?;
    let view = r.u32()?;
    let corrupted = r.u32()? != 0;
    let pose = PoseParams(r.f64s(h.pose_dim)?);
    let shape = ShapeParams(r.f64s(h.num_betas)?);
    let g = r.f64s(3)?;
    let focal = r.f64s(1)?[0];
    let t = r.f64s(3)?;
    let target_joints = unpoints(r.f64s(2 * h.num_keypoints)?);
    let joints = unpoints(r.f64s(2 * h.num_keypoints)?);
    let visible: Vec<bool> = r.bytes()?.iter().map(|&b| b != 0).collect();
    let augmentation: AugmentationRecord =
        serde_json::from_slice(r.bytes()?).map_err(|e| Error::Format(e.to_string()))?;
    let silhouette = Mask::from_bits(h.width, h.height, r.bytes()?)?;
    if r.pos != buf.len() {
        return Err(Error::Format("trailing bytes in record".into()));
    }
    Ok(SyntheticSample {
        proxy: ProxyRepresentation { silhouette, joints, visible },
        pose,
        shape,
        global: GlobalRotation([g[0], g[1], g[2]]),
        camera: PerspCamera::new(focal, h.width, h.height, [t[0], t[1], t[2]])?,
        target_joints,
        corrupted,
        augmentation,
        subject,
        view,
    })
}

pub fn write_dataset(path: &Path, header: &DatasetHeader, samples: &[SyntheticSample]) -> Result<()> {
    let mut records = Vec::with_capacity(samples.len());
    let mut index = Vec::with_capacity(samples.len());
    let mut offset = 0u64;
    for s in samples {
        let bytes = encode(s, header)?;
        index.push(IndexEntry { offset, len: bytes.len() as u64, sha256: sha256_hex(&bytes) });
        offset += bytes.len() as u64;
        records.push(bytes);
    }
    let fh = FileHeader { kind: KIND.into(), version: DATASET_FORMAT_VERSION.into(), dataset: header.clone(), records: index };
    let json = serde_json::to_vec(&fh).map_err(|e| Error::Format(e.to_string()))?;
    let mut f = std::io::BufWriter::new(File::create(path)?);
    f.write_all(MAGIC)?;
    f.write_all(&(json.len() as u64).to_le_bytes())?;
    f.write_all(&json)?;
    for r in &records {
        f.write_all(r)?;
    }
    f.flush()?;
    Ok(())
}

/// Random-access reader; each record is verified against its checksum.
pub struct DatasetReader {
    file: File,
    header: DatasetHeader,
    index: Vec<IndexEntry>,
    base: u64,
}

impl DatasetReader {
    pub fn open(path: &Path) -> Result<Self> {
        let mut file = File::open(path)?;
        let mut pre = [0u8; 16];
        file.read_exact(&mut pre).map_err(|_| Error::Format("file too short".into()))?;
        if &pre[..8] != MAGIC {
            return Err(Error::Format("bad magic bytes".into()));
        }
        let hlen = u64::from_le_bytes(pre[8..].try_into().expect("8 bytes"));
        let total = file.metadata()?.len();
        if 16 + hlen > total {
            return Err(Error::Format("truncated header".into()));
        }
        let mut json = vec![0u8; hlen as usize];
        file.read_exact(&mut json)?;
        let fh: FileHeader = serde_json::from_slice(&json).map_err(|e| Error::Format(e.to_string()))?;
        if fh.kind != KIND {
            return Err(Error::Format(format!("expected a {KIND} file, found {}", fh.kind)));
        }
        if fh.version != DATASET_FORMAT_VERSION {
            return Err(Error::Version { found: fh.version, expected: DATASET_FORMAT_VERSION.into() });
        }
        let base = 16 + hlen;
        if let Some(last) = fh.records.last() {
            if base + last.offset + last.len > total {
                return Err(Error::Format("truncated records".into()));
            }
        }
        Ok(Self { file, header: fh.dataset, index: fh.records, base })
    }

    pub fn header(&self) -> &DatasetHeader {
        &self.header
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn get(&mut self, i: usize) -> Result<SyntheticSample> {
        let e = self.index.get(i).ok_or_else(|| Error::Format(format!("record {i} out of range")))?;
        self.file.seek(SeekFrom::Start(self.base + e.offset))?;
        let mut buf = vec![0u8; e.len as usize];
        self.file.read_exact(&mut buf)?;
        if sha256_hex(&buf) != e.sha256 {
            return Err(Error::Checksum);
        }
        decode(&buf, &self.header)
    }
}

pub fn read_dataset(path: &Path) -> Result<(DatasetHeader, Vec<SyntheticSample>)> {
    let mut r = DatasetReader::open(path)?;
    let samples = (0..r.len()).map(|i| r.get(i)).collect::<Result<Vec<_>>>()?;
    Ok((r.header, samples))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::body_model::{generate_toy_model, ToyModelSpec};
    use crate::synth::{generate_benchmark, BenchmarkSpec, PoseSource};

    fn setup() -> (DatasetHeader, Vec<SyntheticSample>) {
        let m = generate_toy_model(&ToyModelSpec { seed: 1, vertices: 200, joints: 24 }).unwrap();
        let spec = BenchmarkSpec { num_subjects: 2, poses_per_subject: 2, corrupt: CorruptMode::Both, seed: 77 };
        let gen = GenerationConfig::default();
        let aug = AugmentationConfig::default();
        let samples = generate_benchmark(&m, &PoseSource::default(), &gen, &aug, &spec).unwrap();
        let header = DatasetHeader {
            seed: 77,
            generation: gen,
            augmentation: aug,
            corrupt: CorruptMode::Both,
            num_subjects: 2,
            poses_per_subject: 2,
            width: 256,
            height: 256,
            num_keypoints: 17,
            pose_dim: m.pose_dim(),
            num_betas: 10,
            model_sha256: String::new(),
        };
        (header, samples)
    }

    #[test]
    fn round_trip_and_random_access() {
        let (header, samples) = setup();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.pfd");
        write_dataset(&path, &header, &samples).unwrap();
        let (h2, back) = read_dataset(&path).unwrap();
        assert_eq!(h2, header);
        assert_eq!(h2.seed, 77);
        assert_eq!(back, samples);
        let mut r = DatasetReader::open(&path).unwrap();
        assert_eq!(r.get(5).unwrap(), back[5]);
        assert_eq!(r.get(2).unwrap(), back[2]);
        assert!(r.get(99).is_err());
    }

    #[test]
    fn corruption_is_detected() {
        let (header, samples) = setup();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.pfd");
        write_dataset(&path, &header, &samples).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        let n = bytes.len();
        bytes[n - 10] ^= 0x55;
        std::fs::write(&path, &bytes).unwrap();
        let mut r = DatasetReader::open(&path).unwrap();
        assert!(matches!(r.get(samples.len() - 1), Err(Error::Checksum)));
        std::fs::write(&path, &bytes[..n - 100]).unwrap();
        assert!(DatasetReader::open(&path).is_err());
    }
}
