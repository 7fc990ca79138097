//! Binary checkpoints.
//!
//! Layout (little-endian throughout): magic `SSPF`, `u32` version, a config
//! block (dims, architecture, encoding schedule, seed, training iteration,
//! optional normalization transform), then each layer's weight matrix
//! row-major followed by its bias vector, all as 64-bit floats.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use super::encoding::{PeConfig, PeState};
use super::mlp::DenseLayer;
use super::{FieldError, NetworkConfig, NeuralField};
use crate::pointcloud::NormalizationTransform;

const MAGIC: &[u8; 4] = b"SSPF";
const VERSION: u32 = 1;

/// A loaded checkpoint; `dim` lives inside the field's config.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub field: NeuralField,
    /// Training iterations completed; drives the encoding mask.
    pub iteration: u64,
    /// Raw-to-normalized transform captured at fit time, `(scale, offset)`.
    pub transform: Option<(f64, Vec<f64>)>,
}

impl Checkpoint {
    /// Encoding mask state matching the stored iteration count.
    pub fn pe_state(&self) -> PeState {
        PeState::at_iteration(self.field.config().pe, self.iteration)
    }

    pub fn transform_as<const D: usize>(&self) -> Option<NormalizationTransform<D>> {
        self.transform.as_ref().and_then(|(scale, offset)| {
            (offset.len() == D).then(|| NormalizationTransform {
                scale: *scale,
                offset: std::array::from_fn(|a| offset[a]),
            })
        })
    }
}

struct Writer<W: Write>(W);

impl<W: Write> Writer<W> {
    fn u32(&mut self, v: u32) -> std::io::Result<()> {
        self.0.write_all(&v.to_le_bytes())
    }
    fn u64(&mut self, v: u64) -> std::io::Result<()> {
        self.0.write_all(&v.to_le_bytes())
    }
    fn f64(&mut self, v: f64) -> std::io::Result<()> {
        self.0.write_all(&v.to_le_bytes())
    }
}

pub fn save_checkpoint(
    path: &Path,
    field: &NeuralField,
    iteration: u64,
    transform: Option<(f64, &[f64])>,
) -> Result<(), FieldError> {
    let file = std::fs::File::create(path)?;
    let mut w = Writer(std::io::BufWriter::new(file));
    let cfg = field.config();
    w.0.write_all(MAGIC)?;
    w.u32(VERSION)?;
    w.u32(cfg.dim as u32)?;
    w.u32(cfg.hidden_layers as u32)?;
    w.u32(cfg.hidden_width as u32)?;
    w.u32(cfg.skip_at as u32)?;
    w.f64(cfg.softplus_beta)?;
    w.u32(cfg.pe.initial_bands as u32)?;
    w.u32(cfg.pe.total_bands as u32)?;
    w.f64(cfg.pe.growth)?;
    w.u64(cfg.seed)?;
    w.u64(iteration)?;
    match transform {
        Some((scale, offset)) => {
            w.0.write_all(&[1u8])?;
            w.f64(scale)?;
            debug_assert_eq!(offset.len(), cfg.dim);
            for &o in offset {
                w.f64(o)?;
            }
        }
        None => w.0.write_all(&[0u8])?,
    }
    w.u32(field.layers().len() as u32)?;
    for layer in field.layers() {
        w.u32(layer.w.nrows() as u32)?;
        w.u32(layer.w.ncols() as u32)?;
        for &v in layer.w.iter() {
            w.f64(v)?;
        }
        for &v in layer.b.iter() {
            w.f64(v)?;
        }
    }
    w.0.flush()?;
    Ok(())
}

struct Reader<R: Read> {
    inner: R,
    path: String,
}

impl<R: Read> Reader<R> {
    fn fail<T>(&self, msg: &str) -> Result<T, FieldError> {
        Err(FieldError::Checkpoint {
            path: self.path.clone(),
            msg: msg.to_string(),
        })
    }
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N], FieldError> {
        let mut buf = [0u8; N];
        self.inner
            .read_exact(&mut buf)
            .map_err(|_| FieldError::Checkpoint {
                path: self.path.clone(),
                msg: "unexpected end of file".into(),
            })?;
        Ok(buf)
    }
    fn u32(&mut self) -> Result<u32, FieldError> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }
    fn u64(&mut self) -> Result<u64, FieldError> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }
    fn f64(&mut self) -> Result<f64, FieldError> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, FieldError> {
    let file = std::fs::File::open(path)?;
    let mut r = Reader {
        inner: std::io::BufReader::new(file),
        path: path.display().to_string(),
    };
    let magic: [u8; 4] = r.bytes()?;
    if &magic != MAGIC {
        return r.fail("bad magic, not a checkpoint file");
    }
    let version = r.u32()?;
    if version != VERSION {
        return r.fail(&format!("unsupported version {version}"));
    }
    let config = NetworkConfig {
        dim: r.u32()? as usize,
        hidden_layers: r.u32()? as usize,
        hidden_width: r.u32()? as usize,
        skip_at: r.u32()? as usize,
        softplus_beta: r.f64()?,
        pe: PeConfig {
            initial_bands: r.u32()? as usize,
            total_bands: r.u32()? as usize,
            growth: r.f64()?,
        },
        seed: r.u64()?,
    };
    config.validate()?;
    let iteration = r.u64()?;
    let transform = match r.bytes::<1>()?[0] {
        0 => None,
        1 => {
            let scale = r.f64()?;
            let mut offset = Vec::with_capacity(config.dim);
            for _ in 0..config.dim {
                offset.push(r.f64()?);
            }
            Some((scale, offset))
        }
        _ => return r.fail("bad transform flag"),
    };
    let layer_count = r.u32()? as usize;
    if layer_count != config.hidden_layers + 1 {
        return r.fail("layer count does not match architecture");
    }
    let mut layers = Vec::with_capacity(layer_count);
    for l in 0..layer_count {
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        let expected_rows = if l == layer_count - 1 {
            1
        } else {
            config.hidden_width
        };
        let expected_cols = if l == layer_count - 1 {
            config.hidden_width
        } else {
            config.layer_input(l)
        };
        if rows != expected_rows || cols != expected_cols {
            return r.fail(&format!("layer {l} has shape {rows}x{cols}"));
        }
        let mut w = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            w.push(r.f64()?);
        }
        let mut b = Vec::with_capacity(rows);
        for _ in 0..rows {
            b.push(r.f64()?);
        }
        layers.push(DenseLayer {
            w: Array2::from_shape_vec((rows, cols), w).unwrap(),
            b: Array1::from_vec(b),
        });
    }
    let field = NeuralField::from_parts(config, layers);
    field.check_finite()?;
    Ok(Checkpoint {
        field,
        iteration,
        transform,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bitwise() {
        let config = NetworkConfig::tiny(3);
        let field = NeuralField::init_geometric(config, 0.9).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.sspf");
        save_checkpoint(&path, &field, 4321, Some((1.8, &[0.1, 0.2, 0.3]))).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(loaded.iteration, 4321);
        assert_eq!(loaded.field.config(), field.config());
        let a = field.to_flat();
        let b = loaded.field.to_flat();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        let t = loaded.transform_as::<3>().unwrap();
        assert_eq!(t.scale, 1.8);
        assert_eq!(t.offset, [0.1, 0.2, 0.3]);
    }

    #[test]
    fn rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.sspf");
        std::fs::write(&path, b"not a checkpoint").unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(FieldError::Checkpoint { .. })
        ));
    }

    #[test]
    fn starts_with_magic() {
        let config = NetworkConfig::tiny(2);
        let field = NeuralField::init_geometric(config, 0.9).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.sspf");
        save_checkpoint(&path, &field, 0, None).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], b"SSPF");
    }
}
