//! Binary dataset format (magic `OSTD`, version 1, little-endian).
//!
//! Layout:
//!
//! ```text
//! magic "OSTD" | u32 version | f64 dt | u64 n_frames | u32 h | u32 w
//! | u64 n_images | u32 n_channels | { u32 len, utf8 name } per channel
//! | u64 config_len | utf8 config (key = value echo)
//! | n_frames × 67 f64 frame records
//! | n_images × (h·w) f32 rasters, row-major
//! ```
//!
//! Frame record order: t(1), joint_pos(12), joint_vel(12), theta_imu(3),
//! omega_imu(3), accel_imu(3), alpha_imu(3), contact(4), forces(12),
//! depth_seq(1, −1 when absent), truth_valid(1), truth(12).
//!
//! A human-readable manifest (`<path>.manifest`) with the full config is
//! written next to the binary.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use nalgebra::{SVector, Vector3};
use optistate_core::sensor::DepthFrame;
use optistate_core::{
    ContactRef, DepthImage, GroundReactionForces, ImuSample, JointSample, SensorFrame, TrunkState,
};

use crate::error::SimError;
use crate::kv;

const MAGIC: &[u8; 4] = b"OSTD";
const VERSION: u32 = 1;
const FRAME_F64S: usize = 67;

/// Per-frame channels, in record order.
pub const CHANNELS: [&str; 12] = [
    "t",
    "joint_pos",
    "joint_vel",
    "theta_imu",
    "omega_imu",
    "accel_imu",
    "alpha_imu",
    "contact",
    "forces",
    "depth_seq",
    "truth_valid",
    "truth",
];

/// An in-memory trajectory: frames plus the config echo that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub dt: f64,
    pub frames: Vec<SensorFrame>,
    pub config_kv: BTreeMap<String, String>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Number of distinct depth images (refreshes, not holds).
    pub fn distinct_depth_images(&self) -> usize {
        let mut n = 0u64;
        for f in &self.frames {
            if let Some(d) = &f.depth {
                n = n.max(d.seq + 1);
            }
        }
        n as usize
    }

    fn image_dims(&self) -> (usize, usize) {
        self.frames
            .iter()
            .find_map(|f| f.depth.as_ref().map(|d| (d.image.height, d.image.width)))
            .unwrap_or((0, 0))
    }
}

fn w_u32<W: Write>(w: &mut W, v: u32) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn w_u64<W: Write>(w: &mut W, v: u64) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn w_f64<W: Write>(w: &mut W, v: f64) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn r_u32<R: Read>(r: &mut R) -> Result<u32, SimError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)
        .map_err(|_| SimError::Format("truncated file (u32)".into()))?;
    Ok(u32::from_le_bytes(b))
}

fn r_u64<R: Read>(r: &mut R) -> Result<u64, SimError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)
        .map_err(|_| SimError::Format("truncated file (u64)".into()))?;
    Ok(u64::from_le_bytes(b))
}

fn r_f64<R: Read>(r: &mut R) -> Result<f64, SimError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)
        .map_err(|_| SimError::Format("truncated file (f64)".into()))?;
    Ok(f64::from_le_bytes(b))
}

fn frame_record(frame: &SensorFrame) -> [f64; FRAME_F64S] {
    let mut rec = [0.0; FRAME_F64S];
    let mut i = 0;
    let push = |v: f64, rec: &mut [f64; FRAME_F64S], i: &mut usize| {
        rec[*i] = v;
        *i += 1;
    };
    push(frame.t, &mut rec, &mut i);
    for k in 0..12 {
        push(frame.joints.theta[k], &mut rec, &mut i);
    }
    for k in 0..12 {
        push(frame.joints.theta_dot[k], &mut rec, &mut i);
    }
    for v in [
        frame.imu.theta,
        frame.imu.omega,
        frame.imu.accel,
        frame.imu.ang_accel,
    ] {
        for k in 0..3 {
            push(v[k], &mut rec, &mut i);
        }
    }
    for leg in 0..4 {
        push(
            if frame.contact.is_stance(leg) { 1.0 } else { 0.0 },
            &mut rec,
            &mut i,
        );
    }
    for k in 0..12 {
        push(frame.forces.vector()[k], &mut rec, &mut i);
    }
    push(
        frame.depth.as_ref().map_or(-1.0, |d| d.seq as f64),
        &mut rec,
        &mut i,
    );
    push(
        if frame.truth.is_some() { 1.0 } else { 0.0 },
        &mut rec,
        &mut i,
    );
    let truth = frame
        .truth
        .map_or(SVector::<f64, 12>::zeros(), |x| x.into_vector());
    for k in 0..12 {
        push(truth[k], &mut rec, &mut i);
    }
    debug_assert_eq!(i, FRAME_F64S);
    rec
}

/// Serialize to `path` and write `<path>.manifest` beside it.
pub fn write_dataset(dataset: &Dataset, path: &Path) -> Result<(), SimError> {
    // Collect distinct images in seq order.
    let n_images = dataset.distinct_depth_images();
    let (h, w) = dataset.image_dims();
    let mut images: Vec<Option<Arc<DepthImage>>> = vec![None; n_images];
    for f in &dataset.frames {
        if let Some(d) = &f.depth {
            let slot = &mut images[d.seq as usize];
            if slot.is_none() {
                *slot = Some(d.image.clone());
            }
        }
    }
    for (seq, img) in images.iter().enumerate() {
        if img.is_none() {
            return Err(SimError::Format(format!("missing depth image seq {seq}")));
        }
    }

    let file = File::create(path)?;
    let mut out = BufWriter::new(file);
    out.write_all(MAGIC)?;
    w_u32(&mut out, VERSION)?;
    w_f64(&mut out, dataset.dt)?;
    w_u64(&mut out, dataset.frames.len() as u64)?;
    w_u32(&mut out, h as u32)?;
    w_u32(&mut out, w as u32)?;
    w_u64(&mut out, n_images as u64)?;
    w_u32(&mut out, CHANNELS.len() as u32)?;
    for name in CHANNELS {
        w_u32(&mut out, name.len() as u32)?;
        out.write_all(name.as_bytes())?;
    }
    let config_text = kv::emit(&dataset.config_kv);
    w_u64(&mut out, config_text.len() as u64)?;
    out.write_all(config_text.as_bytes())?;

    for frame in &dataset.frames {
        for v in frame_record(frame) {
            w_f64(&mut out, v)?;
        }
    }
    for img in images.into_iter().flatten() {
        for &p in &img.pixels {
            out.write_all(&p.to_le_bytes())?;
        }
    }
    out.flush()?;

    let manifest_path = manifest_path(path);
    let mut manifest = dataset.config_kv.clone();
    manifest.insert("dataset.frames".into(), dataset.frames.len().to_string());
    manifest.insert(
        "dataset.depth_images".into(),
        dataset.distinct_depth_images().to_string(),
    );
    std::fs::write(manifest_path, kv::emit(&manifest))?;
    Ok(())
}

/// `<path>.manifest`
pub fn manifest_path(path: &Path) -> std::path::PathBuf {
    let mut os = path.as_os_str().to_owned();
    os.push(".manifest");
    std::path::PathBuf::from(os)
}

/// Deserialize a dataset written by [`write_dataset`].
pub fn read_dataset(path: &Path) -> Result<Dataset, SimError> {
    let file = File::open(path)?;
    let mut input = BufReader::new(file);

    let mut magic = [0u8; 4];
    input
        .read_exact(&mut magic)
        .map_err(|_| SimError::Format("truncated file (magic)".into()))?;
    if &magic != MAGIC {
        return Err(SimError::Format(format!(
            "bad magic {magic:?}, expected OSTD"
        )));
    }
    let version = r_u32(&mut input)?;
    if version != VERSION {
        return Err(SimError::Format(format!(
            "unsupported version {version}, expected {VERSION}"
        )));
    }
    let dt = r_f64(&mut input)?;
    let n_frames = r_u64(&mut input)? as usize;
    let h = r_u32(&mut input)? as usize;
    let w = r_u32(&mut input)? as usize;
    let n_images = r_u64(&mut input)? as usize;
    let n_channels = r_u32(&mut input)? as usize;
    let mut channels = Vec::with_capacity(n_channels);
    for _ in 0..n_channels {
        let len = r_u32(&mut input)? as usize;
        let mut buf = vec![0u8; len];
        input
            .read_exact(&mut buf)
            .map_err(|_| SimError::Format("truncated file (channel name)".into()))?;
        channels.push(
            String::from_utf8(buf).map_err(|_| SimError::Format("bad channel name".into()))?,
        );
    }
    if channels != CHANNELS {
        return Err(SimError::Format(format!(
            "unexpected channel list: {channels:?}"
        )));
    }
    let config_len = r_u64(&mut input)? as usize;
    let mut config_buf = vec![0u8; config_len];
    input
        .read_exact(&mut config_buf)
        .map_err(|_| SimError::Format("truncated file (config)".into()))?;
    let config_text =
        String::from_utf8(config_buf).map_err(|_| SimError::Format("bad config text".into()))?;
    let config_kv = kv::parse(&config_text)?;

    let mut records = Vec::with_capacity(n_frames);
    for _ in 0..n_frames {
        let mut rec = [0.0f64; FRAME_F64S];
        for v in rec.iter_mut() {
            *v = r_f64(&mut input)?;
        }
        records.push(rec);
    }

    let mut images: Vec<Arc<DepthImage>> = Vec::with_capacity(n_images);
    for _ in 0..n_images {
        let mut pixels = vec![0f32; h * w];
        let mut buf = vec![0u8; 4 * h * w];
        input
            .read_exact(&mut buf)
            .map_err(|_| SimError::Format("truncated file (image)".into()))?;
        for (px, chunk) in pixels.iter_mut().zip(buf.chunks_exact(4)) {
            *px = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
        }
        images.push(Arc::new(DepthImage::new(h, w, pixels)));
    }
    let mut trailing = [0u8; 1];
    if input.read(&mut trailing)? != 0 {
        return Err(SimError::Format("trailing bytes after images".into()));
    }

    let mut frames = Vec::with_capacity(n_frames);
    for rec in records {
        let mut i = 0;
        let take = |n: usize, i: &mut usize| {
            let s = *i;
            *i += n;
            s..s + n
        };
        let t = rec[take(1, &mut i).start];
        let mut joints = JointSample::zero();
        for (k, idx) in take(12, &mut i).enumerate() {
            joints.theta[k] = rec[idx];
        }
        for (k, idx) in take(12, &mut i).enumerate() {
            joints.theta_dot[k] = rec[idx];
        }
        let mut vecs = [Vector3::zeros(); 4];
        for vec in vecs.iter_mut() {
            for (k, idx) in take(3, &mut i).enumerate() {
                vec[k] = rec[idx];
            }
        }
        let imu = ImuSample {
            theta: vecs[0],
            omega: vecs[1],
            accel: vecs[2],
            ang_accel: vecs[3],
        };
        let mut flags = [false; 4];
        for (k, idx) in take(4, &mut i).enumerate() {
            flags[k] = rec[idx] != 0.0;
        }
        let mut force_vec = SVector::<f64, 12>::zeros();
        for (k, idx) in take(12, &mut i).enumerate() {
            force_vec[k] = rec[idx];
        }
        let depth_seq = rec[take(1, &mut i).start];
        let truth_valid = rec[take(1, &mut i).start] != 0.0;
        let mut truth_vec = SVector::<f64, 12>::zeros();
        for (k, idx) in take(12, &mut i).enumerate() {
            truth_vec[k] = rec[idx];
        }
        let depth = if depth_seq >= 0.0 {
            let seq = depth_seq as u64;
            let image = images.get(seq as usize).cloned().ok_or_else(|| {
                SimError::Format(format!("frame references missing image {seq}"))
            })?;
            Some(DepthFrame { seq, image })
        } else {
            None
        };
        frames.push(SensorFrame {
            t,
            joints,
            imu,
            contact: ContactRef::new(flags),
            forces: GroundReactionForces::from_vector(force_vec),
            depth,
            truth: truth_valid.then(|| TrunkState::from_vector(truth_vec)),
        });
    }

    Ok(Dataset {
        dt,
        frames,
        config_kv,
    })
}
