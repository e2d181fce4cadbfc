//! End-to-end walkthrough: generate a heteroscedastic 1-D toy set, train a
//! sparse model, predict on held-out points, score SMSE/MSLL, and round-trip
//! the fitted model through an archive.
//!
//! Run with `cargo run --example toy_train -p vshgp`.

use vshgp::{log_predictive_density, predict_latent, predict_y, train, VshgpModel, Workspace};
use vshgp_data::{gen_toy1d, msll, smse, split, SplitSpec};
use vshgp_optim::OptimizerConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = gen_toy1d(400, 7);
    let (train_set, test_set) = split(&data, SplitSpec::TestFraction(0.25), 7)?;
    let train_norm = train_set.to_normalized();
    let stats = train_norm.applied_stats().expect("normalized").clone();

    let model = VshgpModel::init(
        train_norm.x().clone(),
        train_norm.y().clone(),
        30,
        20,
        7,
    )?;
    let fitted = train(&model, 60, &OptimizerConfig::default())?;
    println!(
        "trained: bound {:.4} after {} line searches ({:?})",
        fitted.value, fitted.line_searches, fitted.outcome
    );

    let ws = Workspace::build(&fitted.model)?;
    let x_test = stats.normalize_x(test_set.x());
    let y_test = stats.normalize_y(test_set.y());
    let latent = predict_latent(&fitted.model, &ws, &x_test)?;
    let (mean, _var) = predict_y(&latent)?;
    let lpd = log_predictive_density(&latent, &y_test, 20)?;

    let smse_score = smse(&y_test, &mean)?;
    let msll_score = msll(&y_test, &lpd, 0.0, 1.0)?;
    println!("test SMSE {smse_score:.4}  MSLL {msll_score:.4}");
    assert!(smse_score < 1.0, "model should beat the trivial predictor");
    assert!(msll_score < 0.0, "model should beat the trivial predictor");

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("toy-model.json");
    fitted.model.save(&path, Some(stats))?;
    let (reloaded, _) = VshgpModel::load(&path)?;
    let ws2 = Workspace::build(&reloaded)?;
    let latent2 = predict_latent(&reloaded, &ws2, &x_test)?;
    assert_eq!(latent.mu_f, latent2.mu_f, "archive round-trip must be exact");
    println!("archive round-trip verified at {}", path.display());
    Ok(())
}
