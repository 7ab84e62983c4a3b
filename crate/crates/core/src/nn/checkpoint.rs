//! Binary checkpoint format, all integers and floats little-endian:
//!
//! ```text
//! magic    b"TDSCKPT\0"
//! version  u32 (= 1)
//! variant  u8  (0 raw, 1 tda, 2 stitched)
//! spec     u32 x 6: input_channels side conv1 conv2 hidden classes
//! stats    u8 flag; if 1: scale f64, count u32, count x f64 max persistence,
//!          pipeline threshold/resolution/sigma/window as 4 x f64
//! tensors  u32 count; per tensor: u32 rank, rank x u32 dims, then f32 payload
//! ```

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use thiserror::Error;

use super::layers::{Layer, KERNEL};
use super::model::{Model, ModelSpec};
use crate::vectorize::{PipelineConfig, TrainingStats, Variant};

const MAGIC: &[u8; 8] = b"TDSCKPT\0";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint file")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// A trained network plus what is needed to featurize new images for it.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: Model<f32>,
    pub stats: Option<(TrainingStats, PipelineConfig)>,
}

fn variant_code(v: Variant) -> u8 {
    match v {
        Variant::Raw => 0,
        Variant::Tda => 1,
        Variant::Stitched => 2,
    }
}

fn tensor_shapes(model: &Model<f32>) -> Vec<Vec<usize>> {
    let mut shapes = Vec::new();
    for layer in &model.layers {
        match layer {
            Layer::Conv(c) => {
                shapes.push(vec![c.out_channels, c.in_channels, KERNEL, KERNEL]);
                shapes.push(vec![c.out_channels]);
            }
            Layer::Dense(d) => {
                shapes.push(vec![d.outputs, d.inputs]);
                shapes.push(vec![d.outputs]);
            }
            _ => {}
        }
    }
    shapes
}

pub fn write_checkpoint(w: &mut impl Write, ckpt: &Checkpoint) -> io::Result<()> {
    let spec = &ckpt.model.spec;
    w.write_all(MAGIC)?;
    w.write_u32::<LE>(VERSION)?;
    w.write_u8(variant_code(spec.variant))?;
    for v in [spec.input_channels, spec.side, spec.conv1, spec.conv2, spec.hidden, spec.classes] {
        w.write_u32::<LE>(v as u32)?;
    }
    match &ckpt.stats {
        None => w.write_u8(0)?,
        Some((stats, pipeline)) => {
            w.write_u8(1)?;
            w.write_f64::<LE>(stats.scale)?;
            w.write_u32::<LE>(stats.max_persistence.len() as u32)?;
            for &m in &stats.max_persistence {
                w.write_f64::<LE>(m)?;
            }
            for v in [pipeline.threshold, pipeline.resolution as f64, pipeline.sigma, pipeline.window] {
                w.write_f64::<LE>(v)?;
            }
        }
    }
    let shapes = tensor_shapes(&ckpt.model);
    w.write_u32::<LE>(shapes.len() as u32)?;
    for (shape, params) in shapes.iter().zip(ckpt.model.parameters()) {
        w.write_u32::<LE>(shape.len() as u32)?;
        for &d in shape {
            w.write_u32::<LE>(d as u32)?;
        }
        for &p in params {
            w.write_f32::<LE>(p)?;
        }
    }
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<usize, CheckpointError> {
    Ok(r.read_u32::<LE>()? as usize)
}

pub fn read_checkpoint(r: &mut impl Read) -> Result<Checkpoint, CheckpointError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|_| CheckpointError::BadMagic)?;
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = r.read_u32::<LE>()?;
    if version != VERSION {
        return Err(CheckpointError::Version(version));
    }
    let variant = match r.read_u8()? {
        0 => Variant::Raw,
        1 => Variant::Tda,
        2 => Variant::Stitched,
        v => return Err(CheckpointError::Corrupt(format!("variant code {v}"))),
    };
    let mut dims = [0usize; 6];
    for d in &mut dims {
        *d = read_u32(r)?;
    }
    let [input_channels, side, conv1, conv2, hidden, classes] = dims;
    let spec = ModelSpec { variant, input_channels, side, conv1, conv2, hidden, classes };
    if input_channels != variant.channels() || side < 10 || [conv1, conv2, hidden, classes].contains(&0) {
        return Err(CheckpointError::Corrupt(format!("implausible architecture {spec:?}")));
    }
    let stats = match r.read_u8()? {
        0 => None,
        1 => {
            let scale = r.read_f64::<LE>()?;
            let n = read_u32(r)?;
            if n > 1024 {
                return Err(CheckpointError::Corrupt(format!("{n} persistence maxima")));
            }
            let max_persistence = (0..n).map(|_| r.read_f64::<LE>()).collect::<io::Result<Vec<_>>>()?;
            let mut p = [0.0; 4];
            for v in &mut p {
                *v = r.read_f64::<LE>()?;
            }
            let pipeline = PipelineConfig { threshold: p[0], resolution: p[1] as usize, sigma: p[2], window: p[3] };
            Some((TrainingStats { scale, max_persistence }, pipeline))
        }
        f => return Err(CheckpointError::Corrupt(format!("stats flag {f}"))),
    };
    let mut model = Model::zeros(spec);
    let expected = tensor_shapes(&model);
    let count = read_u32(r)?;
    if count != expected.len() {
        return Err(CheckpointError::Corrupt(format!("{count} tensors, expected {}", expected.len())));
    }
    for (shape, (params, _)) in expected.iter().zip(model.parameters_mut()) {
        let rank = read_u32(r)?;
        let found = (0..rank.min(8)).map(|_| read_u32(r)).collect::<Result<Vec<_>, _>>()?;
        if &found != shape {
            return Err(CheckpointError::Corrupt(format!("tensor shape {found:?}, expected {shape:?}")));
        }
        r.read_f32_into::<LE>(params)?;
    }
    Ok(Checkpoint { model, stats })
}

pub fn save_checkpoint(path: impl AsRef<Path>, ckpt: &Checkpoint) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_checkpoint(&mut w, ckpt)?;
    w.flush()
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint, CheckpointError> {
    read_checkpoint(&mut BufReader::new(File::open(path)?))
}
