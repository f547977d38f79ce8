use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sleepcast_core::featurize::DaySequence;
use sleepcast_core::labeling::above_mean;

use super::mask::{sample_geometric_mask, MaskSpec};
use super::model::TstModel;
use crate::error::{NnError, Result};
use crate::numerics::RAdam;

// Separate generator streams per phase so pre-training and fine-tuning
// draws do not depend on each other.
const PRETRAIN_STREAM: u64 = 1;
const FINETUNE_STREAM: u64 = 2;

fn phase_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn check_loss(loss: f64, phase: &str, epoch: usize, batch: usize) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(NnError::NonFinite(format!(
            "{phase} loss became {loss} at epoch {epoch}, batch {batch}; lower the learning rate"
        )))
    }
}

/// Masked-value reconstruction training. Returns the mean batch loss of
/// every epoch.
pub fn pretrain(model: &mut TstModel, seqs: &[DaySequence]) -> Result<Vec<f64>> {
    pretrain_epochs(model, seqs, model.config.pretrain_epochs)
}

pub fn pretrain_epochs(model: &mut TstModel, seqs: &[DaySequence], epochs: usize) -> Result<Vec<f64>> {
    if seqs.is_empty() {
        return Err(NnError::Input("pre-training needs at least one sequence".into()));
    }
    let cfg = model.config.clone();
    let mut rng = phase_rng(cfg.seed, PRETRAIN_STREAM);
    let mut opt = RAdam::new(cfg.pretrain_lr);
    let mut order: Vec<usize> = (0..seqs.len()).collect();
    let mut history = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0;
        for (bi, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&DaySequence> = chunk.iter().map(|&i| &seqs[i]).collect();
            let masks: Vec<MaskSpec> = batch
                .iter()
                .map(|s| sample_geometric_mask(s.len(), cfg.feat_dim, cfg.mask_ratio, cfg.mean_mask_len, &mut rng))
                .collect();
            let (loss, stats) = model.reconstruction_step(&batch, &masks, Some(&mut rng))?;
            check_loss(loss, "pre-training", epoch, bi)?;
            opt.step(&mut model.params)?;
            model.update_running(&stats);
            total += loss;
            batches += 1;
        }
        let mean = total / batches as f64;
        log::debug!("pretrain epoch {epoch}: loss {mean:.6}");
        history.push(mean);
    }
    Ok(history)
}

/// Regression fine-tuning of a copy of `base` on raw 1-5 responses; all
/// weights are trained. The new head's bias starts at the target mean.
pub fn finetune(base: &TstModel, seqs: &[DaySequence], targets: &[f64]) -> Result<(TstModel, Vec<f64>)> {
    finetune_epochs(base, seqs, targets, base.config.finetune_epochs)
}

pub fn finetune_epochs(base: &TstModel, seqs: &[DaySequence], targets: &[f64], epochs: usize) -> Result<(TstModel, Vec<f64>)> {
    if seqs.is_empty() {
        return Err(NnError::Input("fine-tuning needs at least one sequence".into()));
    }
    if seqs.len() != targets.len() {
        return Err(NnError::Input(format!("{} sequences but {} targets", seqs.len(), targets.len())));
    }
    if let Some(bad) = targets.iter().find(|t| !(1.0..=5.0).contains(*t)) {
        return Err(NnError::Input(format!("target {bad} outside the 1-5 response scale")));
    }
    let mut model = base.clone();
    let cfg = model.config.clone();
    let mut rng = phase_rng(cfg.seed, FINETUNE_STREAM);
    let mean = targets.iter().sum::<f64>() / targets.len() as f64;
    model.attach_regression_head(mean, &mut rng);
    let mut opt = RAdam::new(cfg.finetune_lr);
    let mut order: Vec<usize> = (0..seqs.len()).collect();
    let mut history = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0;
        for (bi, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&DaySequence> = chunk.iter().map(|&i| &seqs[i]).collect();
            let y: Vec<f64> = chunk.iter().map(|&i| targets[i]).collect();
            let (loss, stats) = model.regression_step(&batch, &y, Some(&mut rng))?;
            check_loss(loss, "fine-tuning", epoch, bi)?;
            opt.step(&mut model.params)?;
            model.update_running(&stats);
            total += loss;
            batches += 1;
        }
        let mean = total / batches as f64;
        log::debug!("finetune epoch {epoch}: loss {mean:.6}");
        history.push(mean);
    }
    Ok((model, history))
}

/// Raw regression output and its label against the user's mean response.
pub fn predict_q(model: &TstModel, seq: &DaySequence, mu: f64) -> Result<(f64, u8)> {
    let raw = model.predict(std::slice::from_ref(seq))?[0];
    Ok((raw, threshold(raw, mu)))
}

/// 1 iff `raw > mu`.
pub fn threshold(raw: f64, mu: f64) -> u8 {
    above_mean(raw, mu)
}

/// Writes a loss curve as `epoch,loss` CSV.
pub fn loss_curve_csv(history: &[f64]) -> String {
    let mut out = String::from("epoch,loss\n");
    for (i, l) in history.iter().enumerate() {
        out.push_str(&format!("{},{l}\n", i + 1));
    }
    out
}
