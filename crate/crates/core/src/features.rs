//! Group-structured, randomly projected gradient features.
//!
//! Projection is block-diagonal: every parameter group gets its own
//! Rademacher block with entries `±1/√k` (`k` = the block's output dim), so
//! per-group weights on projected coordinates stay well defined. Block `j` is
//! generated row-major from `SplitMix64::derive(seed, j)`, one `next_sign`
//! per entry, and is never persisted.

use std::io::Read;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::error::{check_dim, Error, Result};
use crate::model::{Cursor, ModelCheckpoint, ParameterGrouping};
use crate::rng::SplitMix64;
use crate::scalar::{round_f32, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProjectionKind {
    Identity,
    Rademacher,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProjectionBlock {
    pub group_name: String,
    pub input_dim: usize,
    pub output_dim: usize,
    pub kind: ProjectionKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProjectionSpec {
    pub blocks: Vec<ProjectionBlock>,
    pub seed: u64,
}

impl ProjectionSpec {
    pub fn identity(grouping: &ParameterGrouping) -> Self {
        Self {
            blocks: grouping
                .groups()
                .iter()
                .map(|(name, dim)| ProjectionBlock {
                    group_name: name.clone(),
                    input_dim: *dim,
                    output_dim: *dim,
                    kind: ProjectionKind::Identity,
                })
                .collect(),
            seed: 0,
        }
    }

    /// Layout of the projected feature space.
    pub fn output_layout(&self) -> ParameterGrouping {
        ParameterGrouping::new(
            self.blocks
                .iter()
                .map(|b| (b.group_name.clone(), b.output_dim))
                .collect(),
        )
        .expect("projection blocks mirror a valid grouping")
    }

    pub fn output_dim(&self) -> usize {
        self.blocks.iter().map(|b| b.output_dim).sum()
    }

    fn check_grouping(&self, grouping: &ParameterGrouping) -> Result<()> {
        let matches = grouping.len() == self.blocks.len()
            && grouping
                .groups()
                .iter()
                .zip(&self.blocks)
                .all(|((n, d), b)| *n == b.group_name && *d == b.input_dim);
        if matches {
            Ok(())
        } else {
            Err(Error::LayoutMismatch(
                "projection does not match the checkpoint's parameter grouping".into(),
            ))
        }
    }
}

/// One Rademacher block of `target_dim_per_group` outputs per group.
pub fn build_projection(
    grouping: &ParameterGrouping,
    target_dim_per_group: usize,
    seed: u64,
) -> Result<ProjectionSpec> {
    if target_dim_per_group < 1 {
        return Err(Error::invalid("projection target dimension must be >= 1"));
    }
    let mut blocks = Vec::with_capacity(grouping.len());
    for (name, dim) in grouping.groups() {
        if target_dim_per_group > *dim {
            return Err(Error::invalid(format!(
                "target dim {target_dim_per_group} exceeds group `{name}` dim {dim}"
            )));
        }
        blocks.push(ProjectionBlock {
            group_name: name.clone(),
            input_dim: *dim,
            output_dim: target_dim_per_group,
            kind: ProjectionKind::Rademacher,
        });
    }
    Ok(ProjectionSpec { blocks, seed })
}

/// Like [`build_projection`], but groups no larger than the target are kept
/// unprojected (identity blocks) instead of rejected.
pub fn build_projection_clamped(
    grouping: &ParameterGrouping,
    target_dim_per_group: usize,
    seed: u64,
) -> Result<ProjectionSpec> {
    if target_dim_per_group < 1 {
        return Err(Error::invalid("projection target dimension must be >= 1"));
    }
    let blocks = grouping
        .groups()
        .iter()
        .map(|(name, dim)| {
            let project = *dim > target_dim_per_group;
            ProjectionBlock {
                group_name: name.clone(),
                input_dim: *dim,
                output_dim: if project { target_dim_per_group } else { *dim },
                kind: if project {
                    ProjectionKind::Rademacher
                } else {
                    ProjectionKind::Identity
                },
            }
        })
        .collect();
    Ok(ProjectionSpec { blocks, seed })
}

/// Materialized projection blocks for one extraction pass.
#[derive(Debug, Clone)]
pub struct Projector<T: Scalar = f64> {
    spec: ProjectionSpec,
    matrices: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> Projector<T> {
    pub fn new(spec: &ProjectionSpec) -> Self {
        let matrices = spec
            .blocks
            .iter()
            .enumerate()
            .map(|(j, b)| match b.kind {
                ProjectionKind::Identity => None,
                ProjectionKind::Rademacher => {
                    let mut rng = SplitMix64::derive(spec.seed, j as u64);
                    let s = 1.0 / (b.output_dim as f64).sqrt();
                    Some(
                        (0..b.output_dim * b.input_dim)
                            .map(|_| T::of(s * rng.next_sign()))
                            .collect(),
                    )
                }
            })
            .collect();
        Self {
            spec: spec.clone(),
            matrices,
        }
    }

    pub fn spec(&self) -> &ProjectionSpec {
        &self.spec
    }

    /// Projects one group's slice.
    pub fn project_block(&self, block: usize, input: &[T]) -> Vec<T> {
        let b = &self.spec.blocks[block];
        debug_assert_eq!(input.len(), b.input_dim);
        match &self.matrices[block] {
            None => input.to_vec(),
            Some(m) => crate::linalg::matvec(m, b.output_dim, b.input_dim, input),
        }
    }

    /// Projects a full flat vector laid out by `grouping`.
    pub fn project(&self, grouping: &ParameterGrouping, flat: &[T]) -> Result<Vec<T>> {
        self.spec.check_grouping(grouping)?;
        check_dim(grouping.total_dim(), flat.len(), "projection input")?;
        let mut out = Vec::with_capacity(self.spec.output_dim());
        for j in 0..grouping.len() {
            out.extend(self.project_block(j, &flat[grouping.range(j)]));
        }
        Ok(out)
    }

    /// Feature row of an arbitrary `(x, y)`, rounded to storage precision.
    pub fn features(&self, ckpt: &ModelCheckpoint<T>, x: &[T], y: usize) -> Result<Vec<T>> {
        let g = ckpt.per_example_gradient(x, y)?;
        Ok(self
            .project(&ckpt.grouping, &g)?
            .into_iter()
            .map(round_f32)
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StoreMeta {
    pub checkpoint_hash: String,
    pub projection_seed: u64,
    pub params: String,
}

/// Per-example projected gradient features, one row per example id.
///
/// Values are held at f32 precision (the on-disk precision) in the working
/// scalar type, so saving and loading is exact.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientFeatureStore<T: Scalar = f64> {
    example_ids: Vec<u64>,
    layout: ParameterGrouping,
    data: Vec<T>,
    pub meta: StoreMeta,
}

impl<T: Scalar> GradientFeatureStore<T> {
    pub fn new(example_ids: Vec<u64>, layout: ParameterGrouping, data: Vec<T>) -> Result<Self> {
        check_dim(example_ids.len() * layout.total_dim(), data.len(), "feature store payload")?;
        Ok(Self {
            example_ids,
            layout,
            data: data.into_iter().map(round_f32).collect(),
            meta: StoreMeta::default(),
        })
    }

    pub fn len(&self) -> usize {
        self.example_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.example_ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.layout.total_dim()
    }

    pub fn example_ids(&self) -> &[u64] {
        &self.example_ids
    }

    pub fn layout(&self) -> &ParameterGrouping {
        &self.layout
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[T] {
        let d = self.dim();
        &self.data[i * d..(i + 1) * d]
    }

    pub fn row_of(&self, id: u64) -> Result<&[T]> {
        let i = self
            .example_ids
            .binary_search(&id)
            .map_err(|_| Error::IdNotFound(id))?;
        Ok(self.row(i))
    }

    pub fn block(&self, i: usize, group: usize) -> &[T] {
        &self.row(i)[self.layout.range(group)]
    }

    /// A store holding only the named groups, in their original order.
    pub fn select_groups(&self, names: &[String]) -> Result<Self> {
        let keep = group_indices(&self.layout, names)?;
        let layout = ParameterGrouping::new(keep.iter().map(|&j| self.layout.groups()[j].clone()).collect())?;
        let data = (0..self.len())
            .flat_map(|i| select_blocks(&self.layout, self.row(i), &keep))
            .collect();
        let mut out = Self::new(self.example_ids.clone(), layout, data)?;
        out.meta = self.meta.clone();
        Ok(out)
    }
}

/// Positions of `names` within `layout`, sorted by layout order.
pub fn group_indices(layout: &ParameterGrouping, names: &[String]) -> Result<Vec<usize>> {
    let mut keep = names
        .iter()
        .map(|n| {
            layout
                .position(n)
                .ok_or_else(|| Error::LayoutMismatch(format!("no group named `{n}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    keep.sort_unstable();
    keep.dedup();
    if keep.is_empty() {
        return Err(Error::invalid("group selection is empty"));
    }
    Ok(keep)
}

/// Concatenation of the blocks `keep` of a row laid out by `layout`.
pub fn select_blocks<T: Copy>(layout: &ParameterGrouping, row: &[T], keep: &[usize]) -> Vec<T> {
    keep.iter().flat_map(|&j| row[layout.range(j)].iter().copied()).collect()
}

/// One projected gradient row per id, in ascending id order.
pub fn extract_features<T: Scalar>(
    ckpt: &ModelCheckpoint<T>,
    ds: &LabeledDataset,
    ids: &[u64],
    proj: &ProjectionSpec,
) -> Result<GradientFeatureStore<T>> {
    proj.check_grouping(&ckpt.grouping)?;
    let mut ids = ids.to_vec();
    ids.sort_unstable();
    ids.dedup();
    let projector = Projector::<T>::new(proj);
    let rows: Vec<Vec<T>> = ids
        .par_iter()
        .map(|&id| {
            let x = ds.row_as::<T>(id)?;
            projector.features(ckpt, &x, ds.label(id)?)
        })
        .collect::<Result<_>>()?;
    let mut store = GradientFeatureStore::new(ids, proj.output_layout(), rows.concat())?;
    store.meta = StoreMeta {
        checkpoint_hash: ckpt.train_config_hash.clone(),
        projection_seed: proj.seed,
        params: format!("{} blocks, D={}", proj.blocks.len(), proj.output_dim()),
    };
    Ok(store)
}

const STORE_MAGIC: &[u8; 4] = b"GFST";
const STORE_VERSION: u32 = 1;

pub fn save_store<T: Scalar>(store: &GradientFeatureStore<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::with_capacity(64 + store.data.len() * 4 + store.len() * 8);
    buf.extend_from_slice(STORE_MAGIC);
    buf.extend_from_slice(&STORE_VERSION.to_le_bytes());
    buf.extend_from_slice(&(store.len() as u64).to_le_bytes());
    buf.extend_from_slice(&(store.layout.len() as u32).to_le_bytes());
    for (name, dim) in store.layout.groups() {
        buf.extend_from_slice(&(name.len() as u16).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(*dim as u32).to_le_bytes());
    }
    for id in &store.example_ids {
        buf.extend_from_slice(&id.to_le_bytes());
    }
    let payload_start = buf.len();
    for v in &store.data {
        buf.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
    }
    let crc = crc32fast::hash(&buf[payload_start..]);
    buf.extend_from_slice(&crc.to_le_bytes());
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn load_store<T: Scalar>(path: impl AsRef<Path>) -> Result<GradientFeatureStore<T>> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let mut c = Cursor::new(&bytes);
    if c.take(4)? != STORE_MAGIC {
        return Err(Error::Format("bad feature store magic".into()));
    }
    let version = c.u32()?;
    if version != STORE_VERSION {
        return Err(Error::Format(format!("unsupported store version {version}")));
    }
    let n = c.u64()? as usize;
    let m = c.u32()? as usize;
    let mut groups = Vec::with_capacity(m);
    for _ in 0..m {
        let name = c.string()?;
        let dim = c.u32()? as usize;
        groups.push((name, dim));
    }
    let layout = ParameterGrouping::new(groups)?;
    let mut ids = Vec::with_capacity(n);
    for _ in 0..n {
        ids.push(c.u64()?);
    }
    let payload = c.take(n * layout.total_dim() * 4)?;
    let stored = c.u32()?;
    if c.remaining() != 0 {
        return Err(Error::Format("trailing bytes after feature store".into()));
    }
    let computed = crc32fast::hash(payload);
    if stored != computed {
        return Err(Error::ChecksumMismatch { stored, computed });
    }
    let data = payload
        .chunks_exact(4)
        .map(|b| T::of(f32::from_le_bytes(b.try_into().unwrap()) as f64))
        .collect();
    GradientFeatureStore::new(ids, layout, data)
}
