//! One function per pipeline stage. Stages exchange data only through
//! files, and every output is written atomically.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use anyhow::{bail, Context, Result};
use ndarray::Array2;
use sleepcast_core::container::write_atomic;
use sleepcast_core::data::{
    parse_sensor_file, parse_sleep_file, parse_survey_file, segment_by_day, write_sensor_csv, write_sleep_csv,
    write_survey_csv, Question, SensorKind, SurveyResponse, UserDay,
};
use sleepcast_core::featurize::{
    build_daily_stats, build_day_sequence, read_daily_stats_csv, read_sequences_csv, write_daily_stats_csv,
    write_sequences_csv, DailyStats, DaySequence, DayStreams,
};
use sleepcast_core::labeling::{
    compute_user_means, label_all, read_labels_csv, write_labels_csv, LabelVector, UserMeans, LABEL_NAMES,
};
use sleepcast_core::{evaluate_run, ScoreReport};
use sleepcast_ensemble::{fit_multi_output, impute_zeros, MultiOutputModel, TabularDataset};
use sleepcast_nn::tst::{finetune_epochs, loss_curve_csv, pretrain_epochs, threshold, TstModel};

use crate::config::{PipelineConfig, PredictOn, Split};
use crate::synth;

pub const PRETRAINED_MODEL: &str = "tst_pretrained.bin";
pub const ENSEMBLE_BUNDLE: &str = "ensemble.bin";
pub const USER_MEANS: &str = "user_means.json";

pub fn q_model_name(q: Question) -> String {
    format!("tst_q{}.bin", q.index() + 1)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    write_atomic(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn require(path: &Path, producer: &str) -> Result<()> {
    if !path.exists() {
        bail!("missing input {} (produced by `sleepcast {producer}`)", path.display());
    }
    Ok(())
}

fn open(path: &Path, producer: &str) -> Result<std::fs::File> {
    require(path, producer)?;
    std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))
}

pub fn cmd_synth(cfg: &PipelineConfig) -> Result<synth::Cohort> {
    let cohort = synth::generate(&cfg.synth, cfg.tz_offset, cfg.n_activity_categories)?;
    for kind in SensorKind::ALL {
        let mut buf = Vec::new();
        write_sensor_csv(&mut buf, kind, &cohort.streams[&kind])?;
        write_file(&cfg.sensor_file(kind.file_stem()), &buf)?;
    }
    let mut buf = Vec::new();
    write_sleep_csv(&mut buf, &cohort.sleep)?;
    write_file(&cfg.path(&cfg.paths.sleep), &buf)?;
    let mut buf = Vec::new();
    write_survey_csv(&mut buf, &cohort.survey)?;
    write_file(&cfg.path(&cfg.paths.survey), &buf)?;
    let mut buf = Vec::new();
    write_labels_csv(&mut buf, &cohort.truth)?;
    write_file(&cfg.path(&cfg.paths.truth_labels), &buf)?;
    log::info!(
        "synthesized {} users x {} days into {}",
        cfg.synth.n_users,
        cfg.synth.n_days,
        cfg.workdir.display()
    );
    Ok(cohort)
}

fn read_survey(cfg: &PipelineConfig) -> Result<Vec<SurveyResponse>> {
    let path = cfg.path(&cfg.paths.survey);
    require(&path, "synth")?;
    let ing = parse_survey_file(&path)?;
    for r in &ing.rejected {
        log::warn!("{}:{}: skipped survey row: {}", path.display(), r.line, r.reason);
    }
    Ok(ing.records)
}

/// Labels every user-day that has both a survey response and a sleep
/// session. Q labels compare against each user's mean over all responses.
pub fn cmd_label(cfg: &PipelineConfig) -> Result<Vec<LabelVector>> {
    let survey = read_survey(cfg)?;
    let sleep_path = cfg.path(&cfg.paths.sleep);
    require(&sleep_path, "synth")?;
    let sleep = parse_sleep_file(&sleep_path)?;
    for r in &sleep.rejected {
        log::warn!("{}:{}: skipped sleep row: {}", sleep_path.display(), r.line, r.reason);
    }
    let means = compute_user_means(&survey);
    let by_day: BTreeMap<UserDay, &SurveyResponse> = survey.iter().map(|r| (r.user_day(), r)).collect();
    let mut labels = Vec::new();
    for s in &sleep.records {
        let day = s.user_day();
        match by_day.get(&day) {
            Some(r) => labels.push(label_all(&day, Some(r), Some(s), &means)?),
            None => log::warn!("{day}: sleep session without survey response, not labeled"),
        }
    }
    labels.sort();
    let mut buf = Vec::new();
    write_labels_csv(&mut buf, &labels)?;
    write_file(&cfg.path(&cfg.paths.labels), &buf)?;
    log::info!("labeled {} user-days", labels.len());
    Ok(labels)
}

/// Builds the window sequence and the daily statistics of every user-day
/// with sensor data.
pub fn cmd_featurize(cfg: &PipelineConfig) -> Result<(Vec<DaySequence>, Vec<DailyStats>)> {
    let fc = cfg.feature_config();
    let mut days: BTreeMap<UserDay, DayStreams> = BTreeMap::new();
    for kind in SensorKind::ALL {
        let path = cfg.sensor_file(kind.file_stem());
        require(&path, "synth")?;
        for stream in parse_sensor_file(&path, kind)? {
            if kind.is_categorical() {
                stream.validate_categories(fc.n_categories)?;
            }
            for (day, s) in segment_by_day(&stream, fc.tz_offset) {
                days.entry(day).or_default().insert(kind, s);
            }
        }
    }
    let mut seqs = Vec::with_capacity(days.len());
    let mut stats = Vec::with_capacity(days.len());
    for (day, streams) in &days {
        seqs.push(build_day_sequence(day, streams, &fc)?);
        stats.push(build_daily_stats(day, streams, &fc)?);
    }
    let mut buf = Vec::new();
    write_sequences_csv(&mut buf, &seqs)?;
    write_file(&cfg.sequences_file(), &buf)?;
    let mut buf = Vec::new();
    write_daily_stats_csv(&mut buf, &stats)?;
    write_file(&cfg.daily_file(), &buf)?;
    log::info!("featurized {} user-days", seqs.len());
    Ok((seqs, stats))
}

fn read_sequences(cfg: &PipelineConfig) -> Result<Vec<DaySequence>> {
    let seqs = read_sequences_csv(open(&cfg.sequences_file(), "featurize")?)?;
    if let Some(s) = seqs.iter().find(|s| s.n_features != cfg.tst.feat_dim) {
        bail!("{} has {} features per window, config expects {}", s.user_day, s.n_features, cfg.tst.feat_dim);
    }
    Ok(seqs)
}

fn read_daily(cfg: &PipelineConfig) -> Result<Vec<DailyStats>> {
    Ok(read_daily_stats_csv(open(&cfg.daily_file(), "featurize")?)?)
}

fn read_labels(cfg: &PipelineConfig) -> Result<Vec<LabelVector>> {
    Ok(read_labels_csv(open(&cfg.path(&cfg.paths.labels), "label")?)?)
}

/// The train/validation split over the featurized user-days.
pub fn resolve_split(cfg: &PipelineConfig) -> Result<Split> {
    let days: BTreeSet<UserDay> = read_daily(cfg)?.into_iter().map(|s| s.user_day).collect();
    cfg.split.resolve(&days)
}

fn train_sequences(cfg: &PipelineConfig, split: &Split) -> Result<Vec<DaySequence>> {
    let seqs: Vec<DaySequence> = read_sequences(cfg)?
        .into_iter()
        .filter(|s| split.train.contains(&s.user_day))
        .collect();
    if seqs.is_empty() {
        bail!("no featurized user-days fall in the training split");
    }
    Ok(seqs)
}

/// Masked-value pre-training on the training split. With `no_pretrain` the
/// stage does nothing.
pub fn cmd_pretrain(cfg: &PipelineConfig, no_pretrain: bool) -> Result<Option<Vec<f64>>> {
    if no_pretrain {
        log::info!("pre-training disabled; fine-tuning will start from a fresh encoder");
        return Ok(None);
    }
    let split = resolve_split(cfg)?;
    let seqs = train_sequences(cfg, &split)?;
    let mut model = TstModel::for_training(cfg.tst.clone(), &seqs)?;
    let history = pretrain_epochs(&mut model, &seqs, cfg.tst.pretrain_epochs)?;
    let path = cfg.model_file(PRETRAINED_MODEL);
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    model.save(&path)?;
    write_file(&cfg.model_file("pretrain_loss.csv"), loss_curve_csv(&history).as_bytes())?;
    log::info!(
        "pre-trained on {} sequences; loss {:.4} -> {:.4}",
        seqs.len(),
        history.first().copied().unwrap_or(f64::NAN),
        history.last().copied().unwrap_or(f64::NAN)
    );
    Ok(Some(history))
}

/// Fine-tunes one regression model per survey question on the raw training
/// answers and stores the training users' mean answers for thresholding.
pub fn cmd_finetune(cfg: &PipelineConfig, no_pretrain: bool) -> Result<Vec<Vec<f64>>> {
    let split = resolve_split(cfg)?;
    let survey = read_survey(cfg)?;
    let answers: BTreeMap<UserDay, &SurveyResponse> = survey.iter().map(|r| (r.user_day(), r)).collect();
    let seqs: Vec<DaySequence> = train_sequences(cfg, &split)?
        .into_iter()
        .filter(|s| answers.contains_key(&s.user_day))
        .collect();
    if seqs.is_empty() {
        bail!("no training user-day has both features and a survey response");
    }
    let train_survey: Vec<SurveyResponse> = survey
        .iter()
        .filter(|r| split.train.contains(&r.user_day()))
        .cloned()
        .collect();
    let users: BTreeSet<&str> = split.validation.iter().map(|d| d.user_id.as_str()).collect();
    let means = compute_user_means(&train_survey).with_fallback(users);
    write_file(
        &cfg.model_file(USER_MEANS),
        serde_json::to_string_pretty(&means)?.as_bytes(),
    )?;

    let base = if no_pretrain {
        TstModel::for_training(cfg.tst.clone(), &seqs)?
    } else {
        let path = cfg.model_file(PRETRAINED_MODEL);
        require(&path, "pretrain")?;
        let mut m = TstModel::load(&path)?;
        // Epoch counts and learning rates come from the current config.
        m.config.finetune_epochs = cfg.tst.finetune_epochs;
        m.config.finetune_lr = cfg.tst.finetune_lr;
        m.config.batch_size = cfg.tst.batch_size;
        m.config.seed = cfg.tst.seed;
        m
    };
    let mut curves = Vec::new();
    for q in Question::ALL {
        let targets: Vec<f64> = seqs
            .iter()
            .map(|s| f64::from(answers[&s.user_day].answer(q)))
            .collect();
        let (model, history) = finetune_epochs(&base, &seqs, &targets, cfg.tst.finetune_epochs)?;
        model.save(&cfg.model_file(&q_model_name(q)))?;
        write_file(
            &cfg.model_file(&format!("finetune_q{}_loss.csv", q.index() + 1)),
            loss_curve_csv(&history).as_bytes(),
        )?;
        log::info!("fine-tuned Q{} on {} sequences", q.index() + 1, seqs.len());
        curves.push(history);
    }
    Ok(curves)
}

fn tabular(stats: &[DailyStats], labels: Option<&BTreeMap<UserDay, [u8; 4]>>) -> Result<TabularDataset> {
    let n = stats.len();
    let d = stats.first().map_or(0, |s| s.values.len());
    let mut x = Array2::from_shape_fn((n, d), |(i, j)| stats[i].values[j]);
    impute_zeros(&mut x);
    let y = stats
        .iter()
        .map(|s| labels.map_or(vec![0; 4], |l| l[&s.user_day].to_vec()))
        .collect();
    Ok(TabularDataset::new(
        stats.iter().map(|s| s.user_day.clone()).collect(),
        x,
        y,
        LABEL_NAMES[3..].iter().map(|s| s.to_string()).collect(),
    )?)
}

/// Fits the S1-S4 voting ensembles on the labeled training user-days.
pub fn cmd_train_ensemble(cfg: &PipelineConfig) -> Result<MultiOutputModel> {
    let split = resolve_split(cfg)?;
    let labels: BTreeMap<UserDay, [u8; 4]> = read_labels(cfg)?.into_iter().map(|l| (l.user_day.clone(), l.s())).collect();
    let stats: Vec<DailyStats> = read_daily(cfg)?
        .into_iter()
        .filter(|s| split.train.contains(&s.user_day) && labels.contains_key(&s.user_day))
        .collect();
    if stats.is_empty() {
        bail!("no labeled user-days fall in the training split");
    }
    let data = tabular(&stats, Some(&labels))?;
    let model = fit_multi_output(&data, &cfg.ensemble)?;
    let path = cfg.model_file(ENSEMBLE_BUNDLE);
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    model.save(&path)?;
    log::info!("trained S1-S4 ensembles on {} user-days", stats.len());
    Ok(model)
}

fn prediction_days(cfg: &PipelineConfig, split: &Split) -> impl Fn(&UserDay) -> bool {
    let on = cfg.predict_on;
    let split = split.clone();
    move |d| match on {
        PredictOn::Validation => split.validation.contains(d),
        PredictOn::Train => split.train.contains(d),
        PredictOn::All => split.train.contains(d) || split.validation.contains(d),
    }
}

/// Concatenates the three Q predictions from the fine-tuned transformers
/// with the four S predictions from the ensembles.
pub fn cmd_predict(cfg: &PipelineConfig) -> Result<Vec<LabelVector>> {
    let bundle_path = cfg.model_file(ENSEMBLE_BUNDLE);
    if !bundle_path.exists() {
        bail!(
            "missing ensemble bundle {}: run `sleepcast train-ensemble` before predicting",
            bundle_path.display()
        );
    }
    let ensemble = MultiOutputModel::load(&bundle_path)?;
    let mut q_models = Vec::new();
    for q in Question::ALL {
        let path = cfg.model_file(&q_model_name(q));
        require(&path, "finetune")?;
        q_models.push(TstModel::load(&path)?);
    }
    let means_path = cfg.model_file(USER_MEANS);
    let means: UserMeans = serde_json::from_reader(open(&means_path, "finetune")?)
        .with_context(|| format!("parsing {}", means_path.display()))?;

    let split = resolve_split(cfg)?;
    let keep = prediction_days(cfg, &split);
    let seqs: Vec<DaySequence> = read_sequences(cfg)?.into_iter().filter(|s| keep(&s.user_day)).collect();
    let stats: Vec<DailyStats> = read_daily(cfg)?.into_iter().filter(|s| keep(&s.user_day)).collect();
    if seqs.len() != stats.len() || seqs.iter().zip(&stats).any(|(a, b)| a.user_day != b.user_day) {
        bail!("sequence and daily-statistics files cover different user-days; rerun `sleepcast featurize`");
    }
    let raw: Vec<Vec<f64>> = q_models.iter().map(|m| m.predict(&seqs)).collect::<Result<_, _>>()?;
    let data = tabular(&stats, None)?;
    let mut preds = Vec::with_capacity(seqs.len());
    for (i, seq) in seqs.iter().enumerate() {
        let mu = means.get_or_global(&seq.user_day.user_id);
        let mut values = [0u8; 7];
        for k in 0..3 {
            values[k] = threshold(raw[k][i], mu[k]);
        }
        for (k, (_, label)) in ensemble.predict(data.x.row(i))?.into_iter().enumerate() {
            values[3 + k] = label;
        }
        preds.push(LabelVector {
            user_day: seq.user_day.clone(),
            values,
        });
    }
    let mut buf = Vec::new();
    write_labels_csv(&mut buf, &preds)?;
    write_file(&cfg.path(&cfg.paths.predictions), &buf)?;
    log::info!("predicted {} user-days", preds.len());
    Ok(preds)
}

/// Scores the predictions against the labels of the same user-days.
pub fn cmd_score(cfg: &PipelineConfig) -> Result<ScoreReport> {
    let pred = read_labels_csv(open(&cfg.path(&cfg.paths.predictions), "predict")?)?;
    let split = resolve_split(cfg)?;
    let keep = prediction_days(cfg, &split);
    let truth: Vec<LabelVector> = read_labels(cfg)?.into_iter().filter(|l| keep(&l.user_day)).collect();
    let report = evaluate_run(&truth, &pred)?;
    let mut json = serde_json::to_string_pretty(&report)?;
    json.push('\n');
    write_file(&cfg.path(&cfg.paths.score), json.as_bytes())?;
    Ok(report)
}
