//! Building feature views from geographic aggregation and image patches.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use multiview_core::patches::{
    maxpool_to_vector, read_arrays, read_manifest, sample_image_patches, unit_feature_vector, Embedder,
    EmbeddingArray, ManifestEntry, PatchConfig, RasterImage, StubEmbedder,
};
use multiview_core::FeatureMatrix;
use multiview_geo::io::{read_boundary, read_regions, read_sites};
use multiview_geo::{aggregate_features, overlap_matrix, voronoi, OverlapMatrix};
use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AggregateRecipe {
    /// GeoJSON FeatureCollection of unit polygons.
    pub units: PathBuf,
    /// CSV `id,x,y` of sites.
    pub sites: PathBuf,
    /// GeoJSON with a single boundary polygon.
    pub boundary: PathBuf,
    /// Per-site feature matrix; the first column holds site ids under any
    /// header.
    pub features: PathBuf,
}

impl AggregateRecipe {
    pub fn paths(&self) -> Vec<&Path> {
        vec![&self.units, &self.sites, &self.boundary, &self.features]
    }
}

pub fn aggregate(recipe: &AggregateRecipe) -> Result<(OverlapMatrix, FeatureMatrix)> {
    let units = read_regions(&recipe.units)?;
    let boundary = read_boundary(&recipe.boundary)?;
    let file = File::open(&recipe.sites).map_err(|e| CliError::io(&recipe.sites, e))?;
    let sites = read_sites(BufReader::new(file))?;
    let file = File::open(&recipe.features).map_err(|e| CliError::io(&recipe.features, e))?;
    let (_, site_features) = FeatureMatrix::read_labelled_csv(BufReader::new(file))?;
    let cells = voronoi(&sites, &boundary)?;
    let gamma = overlap_matrix(&units, &cells)?;
    let features = aggregate_features(&gamma, &site_features)?;
    Ok((gamma, features))
}

fn default_grid() -> usize {
    StubEmbedder::default().grid
}

/// Patch features either sampled from a directory of PNG images and
/// embedded with the stub embedder, or ingested from an external embedder's
/// arrays listed in a manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PatchRecipe {
    Images {
        images: PathBuf,
        #[serde(default)]
        sampling: PatchConfig,
        #[serde(default = "default_grid")]
        grid: usize,
    },
    Embeddings {
        manifest: PathBuf,
        embeddings: PathBuf,
        sidecar: PathBuf,
    },
}

impl PatchRecipe {
    pub fn paths(&self) -> Vec<&Path> {
        match self {
            PatchRecipe::Images { images, .. } => vec![images],
            PatchRecipe::Embeddings {
                manifest,
                embeddings,
                sidecar,
            } => vec![manifest, embeddings, sidecar],
        }
    }
}

pub struct PatchOutput {
    pub manifest: Vec<ManifestEntry>,
    /// One array per manifest row; empty when ingested from files.
    pub arrays: Vec<EmbeddingArray>,
    pub features: FeatureMatrix,
}

/// PNG files in `dir`, sorted by name; the file stem is the image id.
pub fn list_images(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut out = Vec::new();
    for e in entries {
        let path = e.map_err(|e| CliError::io(dir, e))?.path();
        let is_png = path
            .extension()
            .and_then(|x| x.to_str())
            .is_some_and(|x| x.eq_ignore_ascii_case("png"));
        if is_png {
            let id = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_owned();
            out.push((id, path));
        }
    }
    out.sort();
    if out.is_empty() {
        return Err(CliError::Data(format!("no PNG images in {}", dir.display())));
    }
    Ok(out)
}

pub fn patch_features(recipe: &PatchRecipe, seed: u64) -> Result<PatchOutput> {
    match recipe {
        PatchRecipe::Images { images, sampling, grid } => {
            let embedder = StubEmbedder { grid: *grid };
            let list = list_images(images)?;
            let per_image: Vec<(Vec<ManifestEntry>, Vec<EmbeddingArray>)> = list
                .par_iter()
                .map(|(id, path)| -> Result<_> {
                    let img = RasterImage::open(path)?;
                    let sample = sample_image_patches(&img, id, sampling, seed)?;
                    let mut entries = Vec::new();
                    let mut arrays = Vec::new();
                    for (k, p) in sample.patches.iter().enumerate() {
                        arrays.push(embedder.embed(&img.crop(p.x, p.y, p.size)?)?);
                        entries.push(ManifestEntry {
                            image_id: id.clone(),
                            patch_index: k,
                            x: p.x,
                            y: p.y,
                        });
                    }
                    Ok((entries, arrays))
                })
                .collect::<Result<_>>()?;
            let (manifest, arrays): (Vec<_>, Vec<_>) = per_image.into_iter().unzip();
            let manifest: Vec<ManifestEntry> = manifest.into_iter().flatten().collect();
            let arrays: Vec<EmbeddingArray> = arrays.into_iter().flatten().collect();
            let features = unit_features(&manifest, &arrays)?;
            Ok(PatchOutput {
                manifest,
                arrays,
                features,
            })
        }
        PatchRecipe::Embeddings {
            manifest,
            embeddings,
            sidecar,
        } => {
            let file = File::open(manifest).map_err(|e| CliError::io(manifest, e))?;
            let entries = read_manifest(BufReader::new(file))?;
            let arrays = read_arrays(embeddings, sidecar)?;
            let features = unit_features(&entries, &arrays)?;
            Ok(PatchOutput {
                manifest: entries,
                arrays: Vec::new(),
                features,
            })
        }
    }
}

/// Maxpools each patch array and averages the vectors of each image, in
/// order of first appearance in the manifest.
pub fn unit_features(manifest: &[ManifestEntry], arrays: &[EmbeddingArray]) -> Result<FeatureMatrix> {
    if manifest.len() != arrays.len() {
        return Err(CliError::Data(format!(
            "manifest lists {} patches but {} arrays were supplied",
            manifest.len(),
            arrays.len()
        )));
    }
    let mut ids: Vec<String> = Vec::new();
    let mut groups: Vec<Vec<Vec<f64>>> = Vec::new();
    for (e, a) in manifest.iter().zip(arrays) {
        let slot = match ids.iter().position(|id| *id == e.image_id) {
            Some(i) => i,
            None => {
                ids.push(e.image_id.clone());
                groups.push(Vec::new());
                ids.len() - 1
            }
        };
        groups[slot].push(maxpool_to_vector(a));
    }
    let rows = groups
        .iter()
        .map(|g| unit_feature_vector(g))
        .collect::<multiview_core::Result<Vec<_>>>()?;
    let c = rows.first().map(Vec::len).unwrap_or(0);
    let values = Array2::from_shape_fn((rows.len(), c), |(i, j)| rows[i][j]);
    let names = (1..=c).map(|j| format!("emb{j}")).collect();
    Ok(FeatureMatrix::new(ids, names, values)?)
}
