//! Image patches to feature vectors: background-rejecting patch sampling,
//! a pluggable embedder, spatial max pooling and per-unit averaging.

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::substream;

/// 8-bit RGB raster stored row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterImage {
    width: usize,
    height: usize,
    pixels: Vec<[u8; 3]>,
}

impl RasterImage {
    pub fn new(width: usize, height: usize, pixels: Vec<[u8; 3]>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::LengthMismatch {
                expected: width * height,
                got: pixels.len(),
            });
        }
        Ok(Self { width, height, pixels })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> [u8; 3]) -> Self {
        let pixels = (0..height)
            .flat_map(|y| (0..width).map(move |x| (x, y)))
            .map(|(x, y)| f(x, y))
            .collect();
        Self { width, height, pixels }
    }

    pub fn open(path: &Path) -> Result<Self> {
        let img = image::open(path)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?
            .to_rgb8();
        let (w, h) = img.dimensions();
        Ok(Self {
            width: w as usize,
            height: h as usize,
            pixels: img.pixels().map(|p| p.0).collect(),
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        self.pixels[y * self.width + x]
    }

    /// Copy of the `size`×`size` square with top-left corner `(x, y)`.
    pub fn crop(&self, x: usize, y: usize, size: usize) -> Result<RasterImage> {
        if x + size > self.width || y + size > self.height {
            return Err(Error::InvalidInput(format!(
                "patch at ({x}, {y}) of size {size} leaves a {}×{} image",
                self.width, self.height
            )));
        }
        Ok(Self::from_fn(size, size, |i, j| self.pixel(x + i, y + j)))
    }
}

/// Counts pure black pixels in any rectangle in constant time.
struct BlackCounter {
    stride: usize,
    sums: Vec<u32>,
}

impl BlackCounter {
    fn new(img: &RasterImage) -> Self {
        let stride = img.width + 1;
        let mut sums = vec![0u32; stride * (img.height + 1)];
        for y in 0..img.height {
            let mut row = 0;
            for x in 0..img.width {
                row += u32::from(img.pixel(x, y) == [0, 0, 0]);
                sums[(y + 1) * stride + x + 1] = sums[y * stride + x + 1] + row;
            }
        }
        Self { stride, sums }
    }

    fn count(&self, x: usize, y: usize, size: usize) -> u32 {
        let s = |xx: usize, yy: usize| self.sums[yy * self.stride + xx];
        s(x + size, y + size) + s(x, y) - s(x + size, y) - s(x, y + size)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PatchConfig {
    pub count: usize,
    pub size: usize,
    pub max_black_frac: f64,
    /// Draws allowed per patch before the image is rejected.
    pub max_attempts: usize,
}

impl Default for PatchConfig {
    fn default() -> Self {
        Self {
            count: 10,
            size: 200,
            max_black_frac: 0.01,
            max_attempts: 100,
        }
    }
}

/// Top-left corner of an accepted patch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Patch {
    pub x: usize,
    pub y: usize,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchSample {
    pub patches: Vec<Patch>,
    /// Total corners drawn, accepted or not.
    pub draws: usize,
}

/// Draws patch corners uniformly over all positions that keep the patch
/// inside the image, redrawing patches whose black-pixel fraction exceeds
/// the limit.
pub fn sample_patches<R: Rng + ?Sized>(
    img: &RasterImage,
    cfg: &PatchConfig,
    rng: &mut R,
) -> Result<PatchSample> {
    if cfg.count == 0 || cfg.size == 0 || cfg.max_attempts == 0 {
        return Err(Error::InvalidInput(
            "patch count, size and attempts must be positive".into(),
        ));
    }
    if img.width < cfg.size || img.height < cfg.size {
        return Err(Error::InvalidInput(format!(
            "{}×{} image is smaller than {} pixel patches",
            img.width, img.height, cfg.size
        )));
    }
    let counter = BlackCounter::new(img);
    let limit = cfg.max_black_frac * (cfg.size * cfg.size) as f64;
    let mut patches = Vec::with_capacity(cfg.count);
    let mut draws = 0;
    for _ in 0..cfg.count {
        let mut accepted = None;
        for _ in 0..cfg.max_attempts {
            draws += 1;
            let x = rng.random_range(0..=img.width - cfg.size);
            let y = rng.random_range(0..=img.height - cfg.size);
            if counter.count(x, y, cfg.size) as f64 <= limit {
                accepted = Some(Patch { x, y, size: cfg.size });
                break;
            }
        }
        match accepted {
            Some(p) => patches.push(p),
            None => {
                return Err(Error::TooMuchBackground {
                    attempts: cfg.max_attempts,
                })
            }
        }
    }
    Ok(PatchSample { patches, draws })
}

/// [`sample_patches`] with a stream derived from the master seed and image id.
pub fn sample_image_patches(
    img: &RasterImage,
    image_id: &str,
    cfg: &PatchConfig,
    seed: u64,
) -> Result<PatchSample> {
    let mut rng = substream(seed, &format!("patches/{image_id}"), 0);
    sample_patches(img, cfg, &mut rng)
}

/// A `v1 × v2 × v3` real array, row-major with the channel index fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingArray {
    pub dims: [usize; 3],
    pub data: Vec<f64>,
}

impl EmbeddingArray {
    pub fn new(dims: [usize; 3], data: Vec<f64>) -> Result<Self> {
        let expected = dims.iter().product();
        if data.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                got: data.len(),
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: i, col: 0 });
        }
        Ok(Self { dims, data })
    }

    pub fn get(&self, i: usize, j: usize, c: usize) -> f64 {
        self.data[(i * self.dims[1] + j) * self.dims[2] + c]
    }
}

/// Maps an image patch to an embedding array.
pub trait Embedder: Sync {
    fn output_dims(&self) -> [usize; 3];
    fn embed(&self, patch: &RasterImage) -> Result<EmbeddingArray>;
}

/// Average pooling over a `grid × grid` partition of the patch, per colour
/// channel, scaled to [0, 1]. Output dims are `(grid, grid, 3)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StubEmbedder {
    pub grid: usize,
}

impl Default for StubEmbedder {
    fn default() -> Self {
        Self { grid: 4 }
    }
}

impl Embedder for StubEmbedder {
    fn output_dims(&self) -> [usize; 3] {
        [self.grid, self.grid, 3]
    }

    fn embed(&self, patch: &RasterImage) -> Result<EmbeddingArray> {
        let g = self.grid;
        if g == 0 || patch.width < g || patch.height < g {
            return Err(Error::InvalidInput(format!(
                "cannot pool a {}×{} patch onto a {g}×{g} grid",
                patch.width, patch.height
            )));
        }
        let mut sums = vec![0.0; g * g * 3];
        let mut counts = vec![0usize; g * g];
        for y in 0..patch.height {
            let i = y * g / patch.height;
            for x in 0..patch.width {
                let j = x * g / patch.width;
                let px = patch.pixel(x, y);
                counts[i * g + j] += 1;
                for c in 0..3 {
                    sums[(i * g + j) * 3 + c] += f64::from(px[c]);
                }
            }
        }
        for (k, s) in sums.iter_mut().enumerate() {
            *s /= counts[k / 3] as f64 * 255.0;
        }
        EmbeddingArray::new([g, g, 3], sums)
    }
}

/// Per-channel maximum over all spatial positions.
pub fn maxpool_to_vector(a: &EmbeddingArray) -> Vec<f64> {
    let c = a.dims[2];
    let mut out = vec![f64::NEG_INFINITY; c];
    for chunk in a.data.chunks(c.max(1)) {
        for (o, v) in out.iter_mut().zip(chunk) {
            *o = o.max(*v);
        }
    }
    out
}

/// Elementwise mean of the patch vectors of one unit.
pub fn unit_feature_vector(vectors: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = vectors.first().ok_or(Error::EmptyPatchSet)?;
    let mut out = vec![0.0; first.len()];
    for v in vectors {
        if v.len() != out.len() {
            return Err(Error::LengthMismatch {
                expected: out.len(),
                got: v.len(),
            });
        }
        for (o, x) in out.iter_mut().zip(v) {
            *o += x;
        }
    }
    let n = vectors.len() as f64;
    out.iter_mut().for_each(|o| *o /= n);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F32,
    F64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ByteOrder {
    Little,
    Big,
}

/// JSON sidecar describing a flat binary file of embedding arrays.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArrayHeader {
    pub v1: usize,
    pub v2: usize,
    pub v3: usize,
    pub dtype: Dtype,
    pub byte_order: ByteOrder,
    /// Number of arrays stored back to back.
    pub count: usize,
}

pub fn write_arrays(
    bin: &Path,
    sidecar: &Path,
    arrays: &[EmbeddingArray],
    dtype: Dtype,
    byte_order: ByteOrder,
) -> Result<()> {
    let dims = arrays.first().map(|a| a.dims).unwrap_or([0, 0, 0]);
    if arrays.iter().any(|a| a.dims != dims) {
        return Err(Error::ShapeMismatch("arrays differ in shape".into()));
    }
    let mut w = std::io::BufWriter::new(std::fs::File::create(bin)?);
    for a in arrays {
        for &v in &a.data {
            match (dtype, byte_order) {
                (Dtype::F32, ByteOrder::Little) => w.write_all(&(v as f32).to_le_bytes())?,
                (Dtype::F32, ByteOrder::Big) => w.write_all(&(v as f32).to_be_bytes())?,
                (Dtype::F64, ByteOrder::Little) => w.write_all(&v.to_le_bytes())?,
                (Dtype::F64, ByteOrder::Big) => w.write_all(&v.to_be_bytes())?,
            }
        }
    }
    w.flush()?;
    let header = ArrayHeader {
        v1: dims[0],
        v2: dims[1],
        v3: dims[2],
        dtype,
        byte_order,
        count: arrays.len(),
    };
    std::fs::write(sidecar, serde_json::to_string_pretty(&header)?)?;
    Ok(())
}

pub fn read_arrays(bin: &Path, sidecar: &Path) -> Result<Vec<EmbeddingArray>> {
    let header: ArrayHeader = serde_json::from_str(&std::fs::read_to_string(sidecar)?)?;
    let mut bytes = Vec::new();
    std::fs::File::open(bin)?.read_to_end(&mut bytes)?;
    let width = match header.dtype {
        Dtype::F32 => 4,
        Dtype::F64 => 8,
    };
    let per = header.v1 * header.v2 * header.v3;
    let expected = per * header.count * width;
    if bytes.len() != expected {
        return Err(Error::Parse(format!(
            "{}: {} bytes, header implies {expected}",
            bin.display(),
            bytes.len()
        )));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(width)
        .map(|b| match (header.dtype, header.byte_order) {
            (Dtype::F32, ByteOrder::Little) => f64::from(f32::from_le_bytes(b.try_into().unwrap())),
            (Dtype::F32, ByteOrder::Big) => f64::from(f32::from_be_bytes(b.try_into().unwrap())),
            (Dtype::F64, ByteOrder::Little) => f64::from_le_bytes(b.try_into().unwrap()),
            (Dtype::F64, ByteOrder::Big) => f64::from_be_bytes(b.try_into().unwrap()),
        })
        .collect();
    values
        .chunks(per.max(1))
        .take(header.count)
        .map(|c| EmbeddingArray::new([header.v1, header.v2, header.v3], c.to_vec()))
        .collect()
}

/// One manifest row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub image_id: String,
    pub patch_index: usize,
    pub x: usize,
    pub y: usize,
}

pub fn write_manifest<W: Write>(w: W, entries: &[ManifestEntry]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for e in entries {
        out.serialize(e)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_manifest<R: Read>(r: R) -> Result<Vec<ManifestEntry>> {
    let mut rdr = csv::Reader::from_reader(r);
    rdr.deserialize().map(|row| row.map_err(Error::from)).collect()
}
