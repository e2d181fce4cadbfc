//! Model state: shared hyperparameters plus per-expert local parameters.

use std::ops::Range;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use vshgp::{Archive, VshgpError, VshgpModel};
use vshgp_data::{kmeans, NormStats};
use vshgp_kernel::KernelParams;

use crate::partition::{kmeans_partition, Partition};
use crate::DvshgpError;

/// Per-expert inducing-set sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpertSizing {
    /// Mean-function inducing points per expert.
    pub m0: usize,
    /// Log-noise inducing points per expert.
    pub u0: usize,
}

impl ExpertSizing {
    /// Default sizing for `n` points split across `experts` shards: half
    /// the nominal shard size, at least one and at most 300 points per
    /// inducing set.
    pub fn defaults(n: usize, experts: usize) -> Self {
        let nominal = (n / experts.max(1)).max(1);
        let count = (nominal / 2).clamp(1, 300);
        ExpertSizing {
            m0: count,
            u0: count,
        }
    }

    /// Smallest shard that can host both inducing sets.
    pub fn min_points(&self) -> usize {
        self.m0.max(self.u0)
    }
}

/// Provenance of a partitioned model: what was requested and what the
/// partition repair actually produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    /// Expert count the caller asked for.
    pub requested_experts: usize,
    /// Expert count after undersized-cluster repair.
    pub effective_experts: usize,
    /// Nominal shard size `n / requested_experts`.
    pub nominal_shard: usize,
    /// Mean-function inducing points per expert.
    pub m0: usize,
    /// Log-noise inducing points per expert.
    pub u0: usize,
}

/// Local parameters of one expert, used to assemble a model from explicit
/// parts.
#[derive(Debug, Clone)]
pub struct ExpertParams {
    /// Mean-function inducing inputs, `m_i x d`.
    pub xm: DMatrix<f64>,
    /// Log-noise inducing inputs, `u_i x d`.
    pub xu: DMatrix<f64>,
    /// Log variational weights, one per shard point.
    pub log_lambda: DVector<f64>,
}

/// One expert's shard and local parameters, with the shard rows cached so
/// repeated evaluations do not re-gather them.
#[derive(Debug, Clone)]
struct ExpertBlock {
    indices: Vec<usize>,
    x: DMatrix<f64>,
    y: DVector<f64>,
    xm: DMatrix<f64>,
    xu: DMatrix<f64>,
    log_lambda: DVector<f64>,
}

/// A committee of local sparse heteroscedastic GP experts over disjoint
/// shards of one training set.
///
/// Kernel hyperparameters and the log-noise prior mean are shared by every
/// expert; inducing inputs and variational weights are local to each. The
/// packed parameter vector therefore holds each λ block once per expert but
/// the shared blocks only once, in the order `[λ_0 .. λ_{M-1}, kernel_f,
/// kernel_g, mu0, Xm_0, Xu_0, .. Xm_{M-1}, Xu_{M-1}]`; with a single expert
/// this coincides exactly with the collapsed model's packed layout.
#[derive(Debug, Clone)]
pub struct DvshgpModel {
    x: DMatrix<f64>,
    y: DVector<f64>,
    kernel_f: KernelParams,
    kernel_g: KernelParams,
    mu0: f64,
    partition: Partition,
    experts: Vec<ExpertBlock>,
    manifest: Manifest,
}

impl DvshgpModel {
    /// Builds a model from explicit parts, validating every shard against
    /// the same invariants the collapsed model enforces.
    ///
    /// `experts[i]` supplies the local parameters of partition cluster `i`;
    /// its weight vector must have one entry per shard point (ascending
    /// dataset order).
    pub fn new(
        x: DMatrix<f64>,
        y: DVector<f64>,
        kernel_f: KernelParams,
        kernel_g: KernelParams,
        mu0: f64,
        partition: Partition,
        experts: Vec<ExpertParams>,
    ) -> Result<Self, DvshgpError> {
        let count = partition.experts();
        let n = x.nrows();
        let manifest = Manifest {
            requested_experts: count,
            effective_experts: count,
            nominal_shard: n / count.max(1),
            m0: experts.iter().map(|e| e.xm.nrows()).max().unwrap_or(0),
            u0: experts.iter().map(|e| e.xu.nrows()).max().unwrap_or(0),
        };
        Self::with_manifest(x, y, kernel_f, kernel_g, mu0, partition, experts, manifest)
    }

    #[allow(clippy::too_many_arguments)]
    fn with_manifest(
        x: DMatrix<f64>,
        y: DVector<f64>,
        kernel_f: KernelParams,
        kernel_g: KernelParams,
        mu0: f64,
        partition: Partition,
        experts: Vec<ExpertParams>,
        manifest: Manifest,
    ) -> Result<Self, DvshgpError> {
        let blocks = build_blocks(&x, &y, &partition, experts)?;
        let model = DvshgpModel {
            x,
            y,
            kernel_f,
            kernel_g,
            mu0,
            partition,
            experts: blocks,
            manifest,
        };
        model.validate()?;
        Ok(model)
    }

    /// Default initialization: k-means partitioning with undersized-shard
    /// repair, per-expert inducing inputs at k-means centroids of each
    /// shard, unit kernels, log-noise prior mean at `ln(var(y) / 2)`, and
    /// every variational weight at `1/2`.
    ///
    /// Expert `i` seeds its inducing k-means with `seed + 2i` (mean set)
    /// and `seed + 2i + 1` (noise set), so a single-expert model is
    /// initialized exactly like the collapsed model with the same seed.
    pub fn init(
        x: DMatrix<f64>,
        y: DVector<f64>,
        experts: usize,
        sizing: ExpertSizing,
        seed: u64,
    ) -> Result<Self, DvshgpError> {
        let n = x.nrows();
        if y.len() != n {
            return Err(DvshgpError::dim("targets per input row", n, y.len()));
        }
        let mean = y.iter().sum::<f64>() / n.max(1) as f64;
        let var = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n.max(1) as f64;
        if !(var > 0.0) {
            return Err(DvshgpError::InvalidModel {
                reason: "targets have zero variance; the log-noise prior mean is undefined"
                    .to_string(),
            });
        }
        let partition = kmeans_partition(&x, experts, sizing.min_points(), seed)?;

        let mut params = Vec::with_capacity(partition.experts());
        for i in 0..partition.experts() {
            let members = partition.members(i);
            let shard = gather_rows(&x, &members);
            let expert_seed = seed.wrapping_add(2 * i as u64);
            let xm = kmeans(&shard, sizing.m0, expert_seed)?.centroids;
            let xu = kmeans(&shard, sizing.u0, expert_seed.wrapping_add(1))?.centroids;
            params.push(ExpertParams {
                xm,
                xu,
                log_lambda: DVector::from_element(members.len(), 0.5f64.ln()),
            });
        }

        let manifest = Manifest {
            requested_experts: experts,
            effective_experts: partition.experts(),
            nominal_shard: n / experts.max(1),
            m0: sizing.m0,
            u0: sizing.u0,
        };
        let d = x.ncols();
        Self::with_manifest(
            x,
            y,
            KernelParams::unit(d),
            KernelParams::unit(d),
            (var / 2.0).ln(),
            partition,
            params,
            manifest,
        )
    }

    /// Checks every structural invariant, including each expert's shard
    /// against the collapsed model's own validation.
    pub fn validate(&self) -> Result<(), DvshgpError> {
        let n = self.x.nrows();
        let d = self.x.ncols();
        if self.y.len() != n {
            return Err(DvshgpError::dim("targets per input row", n, self.y.len()));
        }
        self.partition.validate()?;
        if self.partition.assignments().len() != n {
            return Err(DvshgpError::dim(
                "partition assignments",
                n,
                self.partition.assignments().len(),
            ));
        }
        if self.partition.centroids().ncols() != d {
            return Err(DvshgpError::dim(
                "centroid columns",
                d,
                self.partition.centroids().ncols(),
            ));
        }
        if self.experts.len() != self.partition.experts() {
            return Err(DvshgpError::dim(
                "expert parameter sets",
                self.partition.experts(),
                self.experts.len(),
            ));
        }
        for i in 0..self.experts.len() {
            if self.experts[i].indices != self.partition.members(i) {
                return Err(DvshgpError::InvalidModel {
                    reason: format!("expert {i} shard does not match the partition"),
                });
            }
            // Assembling the expert runs the collapsed model's validation
            // over the shard, the shared parameters, and the local blocks.
            self.expert_model(i)?;
        }
        Ok(())
    }

    /// Assembles expert `i` as a standalone collapsed model over its shard,
    /// with the shared kernels and prior mean and its local parameters.
    pub fn expert_model(&self, i: usize) -> Result<VshgpModel, DvshgpError> {
        let block = &self.experts[i];
        VshgpModel::new(
            block.x.clone(),
            block.y.clone(),
            self.kernel_f.clone(),
            self.kernel_g.clone(),
            self.mu0,
            block.xm.clone(),
            block.xu.clone(),
            block.log_lambda.clone(),
        )
        .map_err(|e| DvshgpError::expert(i, e))
    }

    /// Number of training points.
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    /// Input dimension.
    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    /// Number of experts.
    pub fn experts(&self) -> usize {
        self.experts.len()
    }

    /// Training inputs, one point per row.
    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    /// Training targets.
    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    /// Shared mean-function kernel.
    pub fn kernel_f(&self) -> &KernelParams {
        &self.kernel_f
    }

    /// Shared log-noise kernel.
    pub fn kernel_g(&self) -> &KernelParams {
        &self.kernel_g
    }

    /// Shared log-noise prior mean.
    pub fn mu0(&self) -> f64 {
        self.mu0
    }

    /// The disjoint assignment of points to experts.
    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    /// Requested-versus-effective provenance of the partition.
    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    /// Dataset row indices of expert `i`'s shard, ascending.
    pub fn expert_indices(&self, i: usize) -> &[usize] {
        &self.experts[i].indices
    }

    /// Shard size of expert `i`.
    pub fn expert_size(&self, i: usize) -> usize {
        self.experts[i].indices.len()
    }

    /// Mean-function inducing inputs of expert `i`.
    pub fn expert_xm(&self, i: usize) -> &DMatrix<f64> {
        &self.experts[i].xm
    }

    /// Log-noise inducing inputs of expert `i`.
    pub fn expert_xu(&self, i: usize) -> &DMatrix<f64> {
        &self.experts[i].xu
    }

    /// Log variational weights of expert `i`.
    pub fn expert_log_lambda(&self, i: usize) -> &DVector<f64> {
        &self.experts[i].log_lambda
    }

    /// Total packed-parameter length.
    pub fn packed_len(&self) -> usize {
        self.packed_blocks().iter().map(|(_, r)| r.len()).sum()
    }

    /// The free-parameter blocks in packed order: name and index range.
    ///
    /// Order: one `lambda[i]` block per expert, the two shared kernels, the
    /// shared prior mean, then `inducing_f[i]`/`inducing_g[i]` pairs per
    /// expert (row major). With one expert this is the collapsed model's
    /// exact layout.
    pub fn packed_blocks(&self) -> Vec<(String, Range<usize>)> {
        let d = self.dim();
        let mut sizes: Vec<(String, usize)> = Vec::new();
        for (i, block) in self.experts.iter().enumerate() {
            sizes.push((format!("lambda[{i}]"), block.log_lambda.len()));
        }
        sizes.push(("kernel_f".to_string(), 1 + d));
        sizes.push(("kernel_g".to_string(), 1 + d));
        sizes.push(("mu0".to_string(), 1));
        for (i, block) in self.experts.iter().enumerate() {
            sizes.push((format!("inducing_f[{i}]"), block.xm.len()));
            sizes.push((format!("inducing_g[{i}]"), block.xu.len()));
        }
        let mut start = 0;
        sizes
            .into_iter()
            .map(|(name, len)| {
                let range = start..start + len;
                start += len;
                (name, range)
            })
            .collect()
    }

    /// All free parameters as one flat vector, in
    /// [`packed_blocks`](Self::packed_blocks) order.
    pub fn packed_params(&self) -> DVector<f64> {
        let mut out = Vec::with_capacity(self.packed_len());
        for block in &self.experts {
            out.extend(block.log_lambda.iter());
        }
        out.extend(self.kernel_f.log_params().iter());
        out.extend(self.kernel_g.log_params().iter());
        out.push(self.mu0);
        for block in &self.experts {
            out.extend(block.xm.transpose().iter()); // row major
            out.extend(block.xu.transpose().iter());
        }
        DVector::from_vec(out)
    }

    /// Writes a packed parameter vector back into the model.
    pub fn set_packed_params(&mut self, packed: &DVector<f64>) -> Result<(), DvshgpError> {
        if packed.len() != self.packed_len() {
            return Err(DvshgpError::dim(
                "packed parameter length",
                self.packed_len(),
                packed.len(),
            ));
        }
        let d = self.dim();
        let s = packed.as_slice();
        let mut at = 0;
        for block in &mut self.experts {
            let len = block.log_lambda.len();
            block.log_lambda = DVector::from_column_slice(&s[at..at + len]);
            at += len;
        }
        self.kernel_f
            .set_log_params(&DVector::from_column_slice(&s[at..at + 1 + d]))?;
        at += 1 + d;
        self.kernel_g
            .set_log_params(&DVector::from_column_slice(&s[at..at + 1 + d]))?;
        at += 1 + d;
        self.mu0 = s[at];
        at += 1;
        for block in &mut self.experts {
            let (m, u) = (block.xm.nrows(), block.xu.nrows());
            block.xm = DMatrix::from_row_slice(m, d, &s[at..at + m * d]);
            at += m * d;
            block.xu = DMatrix::from_row_slice(u, d, &s[at..at + u * d]);
            at += u * d;
        }
        Ok(())
    }

    /// All log variational weights as one vector, expert blocks in order.
    pub fn packed_log_lambdas(&self) -> DVector<f64> {
        let mut out = Vec::with_capacity(self.n());
        for block in &self.experts {
            out.extend(block.log_lambda.iter());
        }
        DVector::from_vec(out)
    }

    /// Writes the concatenated log variational weights back, leaving every
    /// other block untouched.
    pub fn set_log_lambdas(&mut self, packed: &DVector<f64>) -> Result<(), DvshgpError> {
        let total: usize = self.experts.iter().map(|b| b.log_lambda.len()).sum();
        if packed.len() != total {
            return Err(DvshgpError::dim(
                "concatenated weight length",
                total,
                packed.len(),
            ));
        }
        let s = packed.as_slice();
        let mut at = 0;
        for block in &mut self.experts {
            let len = block.log_lambda.len();
            block.log_lambda = DVector::from_column_slice(&s[at..at + len]);
            at += len;
        }
        Ok(())
    }
}

fn gather_rows(x: &DMatrix<f64>, indices: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(indices.len(), x.ncols(), |r, c| x[(indices[r], c)])
}

fn build_blocks(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    partition: &Partition,
    params: Vec<ExpertParams>,
) -> Result<Vec<ExpertBlock>, DvshgpError> {
    if params.len() != partition.experts() {
        return Err(DvshgpError::dim(
            "expert parameter sets",
            partition.experts(),
            params.len(),
        ));
    }
    let mut blocks = Vec::with_capacity(params.len());
    for (i, p) in params.into_iter().enumerate() {
        let indices = partition.members(i);
        for &idx in &indices {
            if idx >= x.nrows() {
                return Err(DvshgpError::InvalidModel {
                    reason: format!("expert {i} references point {idx} beyond the dataset"),
                });
            }
        }
        let shard_x = gather_rows(x, &indices);
        let shard_y = DVector::from_fn(indices.len(), |r, _| y[indices[r]]);
        blocks.push(ExpertBlock {
            indices,
            x: shard_x,
            y: shard_y,
            xm: p.xm,
            xu: p.xu,
            log_lambda: p.log_lambda,
        });
    }
    Ok(blocks)
}

/// On-disk payload: everything the model needs minus the derived shard
/// caches, which are rebuilt (and re-validated) on load.
#[derive(Serialize, Deserialize)]
struct ArchivedModel {
    manifest: Manifest,
    x: DMatrix<f64>,
    y: DVector<f64>,
    kernel_f: KernelParams,
    kernel_g: KernelParams,
    mu0: f64,
    partition: Partition,
    experts: Vec<ArchivedExpert>,
}

#[derive(Serialize, Deserialize)]
struct ArchivedExpert {
    xm: DMatrix<f64>,
    xu: DMatrix<f64>,
    log_lambda: DVector<f64>,
}

impl DvshgpModel {
    /// Archive `kind` for this model flavor.
    pub const ARCHIVE_KIND: &'static str = "dvshgp";

    /// Saves the model (and the normalization it was trained under) as an
    /// archive.
    pub fn save(&self, path: &Path, normalization: Option<NormStats>) -> Result<(), DvshgpError> {
        let payload = ArchivedModel {
            manifest: self.manifest,
            x: self.x.clone(),
            y: self.y.clone(),
            kernel_f: self.kernel_f.clone(),
            kernel_g: self.kernel_g.clone(),
            mu0: self.mu0,
            partition: self.partition.clone(),
            experts: self
                .experts
                .iter()
                .map(|b| ArchivedExpert {
                    xm: b.xm.clone(),
                    xu: b.xu.clone(),
                    log_lambda: b.log_lambda.clone(),
                })
                .collect(),
        };
        Archive::new(Self::ARCHIVE_KIND, normalization, &payload)
            .and_then(|archive| archive.save(path))
            .map_err(DvshgpError::Archive)
    }

    /// Loads a model archive of this kind, rebuilding the shard caches and
    /// re-validating every invariant.
    pub fn load(path: &Path) -> Result<(Self, Option<NormStats>), DvshgpError> {
        let archive = Archive::load(path).map_err(DvshgpError::Archive)?;
        if archive.kind != Self::ARCHIVE_KIND {
            return Err(DvshgpError::Archive(VshgpError::Archive {
                reason: format!(
                    "{}: archive holds a {:?} model, not {:?}",
                    path.display(),
                    archive.kind,
                    Self::ARCHIVE_KIND
                ),
            }));
        }
        let payload: ArchivedModel = archive.decode().map_err(DvshgpError::Archive)?;
        let params = payload
            .experts
            .into_iter()
            .map(|e| ExpertParams {
                xm: e.xm,
                xu: e.xu,
                log_lambda: e.log_lambda,
            })
            .collect();
        let model = Self::with_manifest(
            payload.x,
            payload.y,
            payload.kernel_f,
            payload.kernel_g,
            payload.mu0,
            payload.partition,
            params,
            payload.manifest,
        )?;
        Ok((model, archive.normalization))
    }
}
