//! The decomposed bound: a sum of independent per-expert bounds.
//!
//! Because the experts share hyperparameters but own disjoint shards, the
//! evidence lower bound of the committee is exactly the sum of the experts'
//! collapsed bounds, and the gradient of a shared block is the sum of the
//! per-expert gradients of that block. Expert evaluations run in parallel
//! on whatever rayon pool is current, but every reduction walks the experts
//! in index order, so results are bit-identical for any worker count.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use vshgp::{elbo_with_grads, ElboBreakdown, GradientBundle, Workspace};

use crate::model::DvshgpModel;
use crate::DvshgpError;

/// Per-expert bound breakdowns plus their sum.
#[derive(Debug, Clone)]
pub struct DecomposedElbo {
    /// One collapsed-bound breakdown per expert, in expert order.
    pub per_expert: Vec<ElboBreakdown>,
}

impl DecomposedElbo {
    /// The committee bound: per-expert totals summed in expert order.
    ///
    /// The fold starts from expert 0's value, so a single-expert committee
    /// reproduces the collapsed bound bit for bit.
    pub fn total(&self) -> f64 {
        self.per_expert
            .iter()
            .map(ElboBreakdown::total)
            .reduce(|a, b| a + b)
            .unwrap_or(0.0)
    }
}

/// Gradients of the decomposed bound: shared blocks summed over experts in
/// index order, local blocks kept per expert.
#[derive(Debug, Clone)]
pub struct DvshgpGradients {
    /// Per-expert gradients with respect to the log variational weights.
    pub log_lambda: Vec<DVector<f64>>,
    /// Summed gradient of the shared mean-function kernel (log domain).
    pub kernel_f: DVector<f64>,
    /// Summed gradient of the shared log-noise kernel (log domain).
    pub kernel_g: DVector<f64>,
    /// Summed gradient of the shared log-noise prior mean.
    pub mu0: f64,
    /// Per-expert gradients of the mean-function inducing inputs.
    pub xm: Vec<DMatrix<f64>>,
    /// Per-expert gradients of the log-noise inducing inputs.
    pub xu: Vec<DMatrix<f64>>,
}

impl DvshgpGradients {
    /// Flattens the blocks in [`DvshgpModel::packed_params`] order.
    pub fn pack(&self) -> DVector<f64> {
        let len = self.log_lambda.iter().map(DVector::len).sum::<usize>()
            + self.kernel_f.len()
            + self.kernel_g.len()
            + 1
            + self.xm.iter().map(DMatrix::len).sum::<usize>()
            + self.xu.iter().map(DMatrix::len).sum::<usize>();
        let mut out = Vec::with_capacity(len);
        for g in &self.log_lambda {
            out.extend(g.iter());
        }
        out.extend(self.kernel_f.iter());
        out.extend(self.kernel_g.iter());
        out.push(self.mu0);
        for (gm, gu) in self.xm.iter().zip(&self.xu) {
            out.extend(gm.transpose().iter()); // row major
            out.extend(gu.transpose().iter());
        }
        DVector::from_vec(out)
    }
}

/// Evaluates every expert's bound and sums them.
///
/// Experts evaluate in parallel; failures surface as
/// [`DvshgpError::Expert`] carrying the lowest failing expert index.
pub fn decomposed_elbo(model: &DvshgpModel) -> Result<DecomposedElbo, DvshgpError> {
    let per_expert = for_each_expert(model, |_, expert| {
        Ok(Workspace::build(expert)?.breakdown())
    })?;
    Ok(DecomposedElbo { per_expert })
}

/// Evaluates every expert's bound and gradients, summing the shared blocks
/// in expert order and passing the local blocks through.
pub fn decomposed_grads(
    model: &DvshgpModel,
) -> Result<(DecomposedElbo, DvshgpGradients), DvshgpError> {
    let evaluated: Vec<(ElboBreakdown, GradientBundle)> =
        for_each_expert(model, |_, expert| elbo_with_grads(expert))?;

    let mut per_expert = Vec::with_capacity(evaluated.len());
    let mut log_lambda = Vec::with_capacity(evaluated.len());
    let mut xm = Vec::with_capacity(evaluated.len());
    let mut xu = Vec::with_capacity(evaluated.len());
    let mut kernel_f: Option<DVector<f64>> = None;
    let mut kernel_g: Option<DVector<f64>> = None;
    let mut mu0: Option<f64> = None;

    // Shared blocks accumulate from expert 0 upward, so a single expert's
    // gradients come back bit-identical to the collapsed evaluation.
    for (breakdown, bundle) in evaluated {
        per_expert.push(breakdown);
        log_lambda.push(bundle.log_lambda);
        xm.push(bundle.xm);
        xu.push(bundle.xu);
        kernel_f = Some(match kernel_f {
            None => bundle.kernel_f,
            Some(acc) => acc + bundle.kernel_f,
        });
        kernel_g = Some(match kernel_g {
            None => bundle.kernel_g,
            Some(acc) => acc + bundle.kernel_g,
        });
        mu0 = Some(match mu0 {
            None => bundle.mu0,
            Some(acc) => acc + bundle.mu0,
        });
    }

    let grads = DvshgpGradients {
        log_lambda,
        kernel_f: kernel_f.expect("a validated model has at least one expert"),
        kernel_g: kernel_g.expect("a validated model has at least one expert"),
        mu0: mu0.expect("a validated model has at least one expert"),
        xm,
        xu,
    };
    Ok((DecomposedElbo { per_expert }, grads))
}

/// Runs one evaluation per expert on the current rayon pool, preserving
/// expert order, and reports the lowest-indexed failure.
pub(crate) fn for_each_expert<T, F>(model: &DvshgpModel, task: F) -> Result<Vec<T>, DvshgpError>
where
    T: Send,
    F: Fn(usize, &vshgp::VshgpModel) -> Result<T, vshgp::VshgpError> + Sync,
{
    let results: Vec<Result<T, DvshgpError>> = (0..model.experts())
        .into_par_iter()
        .map(|i| {
            let expert = model.expert_model(i)?;
            task(i, &expert).map_err(|e| DvshgpError::expert(i, e))
        })
        .collect();
    // `collect` preserved expert order, so the sequential scan below always
    // reports the same (lowest) failing index regardless of worker count.
    results.into_iter().collect()
}
