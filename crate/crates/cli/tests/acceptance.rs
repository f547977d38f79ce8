//! Acceptance suite: one PASS/FAIL line per criterion. Exits nonzero if any
//! criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::time::{Duration, Instant};

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sleepcast_core::data::{parse_date, SensorKind, SensorStream, SleepSession, UserDay};
use sleepcast_core::featurize::{build_day_sequence, DaySequence, DayStreams, FeatureConfig, CONTINUOUS_FEATURES};
use sleepcast_core::oracles::{oracle_f1, oracle_featurize, oracle_knn, oracle_mask_stats};
use sleepcast_core::{competition_score, f1_macro, q_label, s_labels};
use sleepcast_ensemble::knn::Knn;
use sleepcast_ensemble::svm::{default_gamma, rbf, smo_solve};
use sleepcast_ensemble::{fit, fit_multi_output, soft_vote_probs, ClassifierKind, EnsembleParams, Model, TabularDataset};
use sleepcast_nn::numerics::{grad_check, graph_grad_check, ConvSpec, Graph, SeqLayout, Tensor, Var};
use sleepcast_nn::tst::{finetune_epochs, pretrain_epochs, sample_geometric_mask, MaskSpec, TstConfig, TstModel};

type Outcome = Result<String, String>;

macro_rules! check {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn within(limit: Duration, started: Instant, what: &str) -> Result<(), String> {
    let took = started.elapsed();
    if took > limit {
        return Err(format!("{what} took {took:.1?}, limit {limit:?}"));
    }
    Ok(())
}

fn day(user: &str, date: &str) -> UserDay {
    UserDay::new(user, parse_date(date).unwrap())
}

// 1
fn label_formula_oracle() -> Outcome {
    let started = Instant::now();
    let d0 = parse_date("2024-01-01").unwrap();
    let sleeps = [0u32, 6000, 8000, 8400, 9000, 10000, 10800, 12000];
    let wakes = [0u32, 600, 1199, 1200, 1201, 1800, 3000, 4500, 7200];
    let latencies = [0u32, 600, 1799, 1800, 1801, 2400];
    let to_wakes = [0u32, 300, 900];
    let mut cases = 0usize;
    let mut boundary_hits = [false; 3];
    for &deep in &sleeps {
        for &light in &sleeps {
            for &rem in &[1200u32, 6000, 9000] {
                for &wake in &wakes {
                    for &lat in &latencies {
                        for &tw in &to_wakes {
                            let Ok(s) = SleepSession::new("u", d0, [wake, deep, light, rem, lat, tw].map(i64::from)) else {
                                continue;
                            };
                            cases += 1;
                            // Direct threshold evaluation.
                            let t = f64::from(deep) + f64::from(light) + f64::from(rem);
                            let p = t / (f64::from(wake) + t) * 100.0;
                            let p_num = 100 * u64::from(deep + light + rem);
                            let p_den = u64::from(wake) + u64::from(deep + light + rem);
                            let exact_85 = p_den > 0 && p_num == 85 * p_den;
                            let waso = i64::from(wake) - i64::from(lat) - i64::from(tw);
                            let want = [
                                u8::from(t > 25200.0 && t < 32400.0),
                                u8::from(if exact_85 { false } else { p > 85.0 }),
                                u8::from(lat < 1800),
                                u8::from(waso < 1200),
                            ];
                            let got = s_labels(&s);
                            check!(got == want, "{s:?}: got {got:?}, direct {want:?}");
                            boundary_hits[0] |= t == 25200.0;
                            boundary_hits[1] |= exact_85;
                            boundary_hits[2] |= waso == 1200;
                        }
                    }
                }
            }
        }
    }
    // The strict-boundary cases named explicitly.
    let b = |d: [i64; 6]| s_labels(&SleepSession::new("u", d0, d).unwrap());
    check!(b([0, 8400, 8400, 8400, 0, 0])[0] == 0, "t = 25200 must give S1 = 0");
    check!(b([3000, 5000, 7000, 5000, 0, 0])[1] == 0, "efficiency exactly 85 must give S2 = 0");
    check!(b([1200, 5000, 7000, 5000, 0, 0])[3] == 0, "waso = 1200 must give S4 = 0");
    check!(cases >= 10_000, "only {cases} sessions in the grid");
    check!(boundary_hits.iter().all(|&h| h), "grid missed a boundary: {boundary_hits:?}");
    within(Duration::from_secs(5), started, "label grid")?;
    Ok(format!("{cases} sessions agree, {:.2?}", started.elapsed()))
}

// 2
fn q_label_suite() -> Outcome {
    let mut n = 0;
    for r in 1u8..=5 {
        for k in 0..=8 {
            let mu = 1.0 + 0.5 * k as f64;
            let want = u8::from(f64::from(r) > mu);
            check!(q_label(r, mu) == want, "r={r}, mu={mu}: got {}", q_label(r, mu));
            if f64::from(r) == mu {
                check!(q_label(r, mu) == 0, "tie r = mu = {mu} must give 0");
            }
            n += 1;
        }
    }
    Ok(format!("{n} (r, mu) combinations exact"))
}

fn random_small_day(rng: &mut ChaCha8Rng, day: &UserDay, tz: i64) -> DayStreams {
    let start = day.start_epoch(tz);
    let mut streams = DayStreams::new();
    for kind in SensorKind::ALL {
        if rng.random_bool(0.2) {
            continue;
        }
        let n = rng.random_range(1..=400);
        let samples = (0..n)
            .map(|_| {
                let t = start + rng.random_range(0..86_400);
                let vals = (0..kind.arity())
                    .map(|_| {
                        if kind.is_categorical() {
                            f64::from(rng.random_range(0..9u8))
                        } else {
                            rng.random_range(-100.0..100.0)
                        }
                    })
                    .collect();
                (t, vals)
            })
            .collect();
        streams.insert(kind, SensorStream::from_samples(&day.user_id, kind, samples).unwrap());
    }
    streams
}

// 3
fn feature_pipeline_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let d = day("u7", "2024-05-17");
    let cfg = FeatureConfig {
        tz_offset: 9 * 3600,
        ..Default::default()
    };
    let mut compared = 0;
    let mut stats_checked = 0usize;
    for case in 0..100 {
        let streams = random_small_day(&mut rng, &d, cfg.tz_offset);
        match (build_day_sequence(&d, &streams, &cfg), oracle_featurize(&d, &streams, &cfg)) {
            (Ok(m), Ok(o)) => {
                check!(m.pad_mask == o.pad_mask, "case {case}: padding masks differ");
                let same = m.values.len() == o.values.len()
                    && m.values.iter().zip(&o.values).all(|(a, b)| a.to_bits() == b.to_bits());
                check!(same, "case {case}: window features differ");
                for w in 0..m.len() {
                    let row = m.row(w);
                    for c in 0..CONTINUOUS_FEATURES / 4 {
                        let (mean, min, max) = (row[4 * c], row[4 * c + 2], row[4 * c + 3]);
                        check!(min <= mean && mean <= max, "case {case} window {w}: {min} <= {mean} <= {max} fails");
                        stats_checked += 1;
                    }
                }
                compared += 1;
            }
            (Err(_), Err(_)) => {}
            (m, o) => return Err(format!("case {case}: one path failed: {:?} / {:?}", m.err(), o.err())),
        }
    }
    check!(compared >= 90, "only {compared} of 100 days produced sequences");
    Ok(format!("{compared} days bit-identical, {stats_checked} window stats ordered"))
}

fn rand_t(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor {
    Array2::from_shape_simple_fn((r, c), || rng.random_range(-1.0..1.0))
}

// 4
fn gradient_checks() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let tol = 1e-4;
    let mut worst: (f64, &str) = (0.0, "");
    let mut op = |name: &'static str,
                  inputs: Vec<Tensor>,
                  build: Box<dyn Fn(&mut Graph, &[Var]) -> sleepcast_nn::Result<Var>>|
     -> Result<(), String> {
        let err = graph_grad_check(&inputs, build, 1e-5).map_err(|e| format!("{name}: {e}"))?;
        check!(err < tol, "{name}: relative error {err:e}");
        if err > worst.0 {
            worst = (err, name);
        }
        Ok(())
    };
    let layout = SeqLayout { batch: 2, len: 4 };
    let valid = vec![true, true, false, true, true, true, false, false];
    let mask = rand_t(&mut rng, 8, 4);
    let target = rand_t(&mut rng, 8, 4);
    let weights = Array2::from_shape_fn((8, 4), |(i, j)| ((i + j) % 2) as f64);
    op("linear+add+scale", vec![rand_t(&mut rng, 8, 3), rand_t(&mut rng, 3, 4), rand_t(&mut rng, 1, 4), rand_t(&mut rng, 8, 4)], Box::new(|g, v| {
        let y = g.linear(v[0], v[1], Some(v[2]))?;
        let y = g.add(y, v[3])?;
        Ok(g.scale(y, 0.7))
    }))?;
    op("gelu+mul_const+scale_rows", vec![rand_t(&mut rng, 8, 4).mapv(|x| 3.0 * x)], Box::new(move |g, v| {
        let y = g.gelu(v[0]);
        let y = g.mul_const(y, mask.clone())?;
        g.scale_rows(y, (0..8).map(|i| i as f64 * 0.3 - 1.0).collect())
    }))?;
    op("add_tiled+reshape", vec![rand_t(&mut rng, 8, 4), rand_t(&mut rng, 4, 4)], Box::new(|g, v| {
        let y = g.add_tiled(v[0], v[1])?;
        g.reshape(y, 2, 16)
    }))?;
    for spec in [ConvSpec::valid(2), ConvSpec::same(3, 1), ConvSpec::same(3, 2)] {
        op("conv1d", vec![rand_t(&mut rng, 8, 3), rand_t(&mut rng, spec.kernel * 3, 2), rand_t(&mut rng, 1, 2)], Box::new(move |g, v| {
            g.conv1d(v[0], v[1], Some(v[2]), layout, spec)
        }))?;
    }
    let rows = valid.clone();
    op("batch_norm_train", vec![rand_t(&mut rng, 8, 3), rand_t(&mut rng, 1, 3), rand_t(&mut rng, 1, 3)], Box::new(move |g, v| {
        Ok(g.batch_norm_train(v[0], v[1], v[2], Some(&rows), 1e-5)?.0)
    }))?;
    op("batch_norm_eval", vec![rand_t(&mut rng, 8, 3), rand_t(&mut rng, 1, 3), rand_t(&mut rng, 1, 3)], Box::new(|g, v| {
        g.batch_norm_eval(v[0], v[1], v[2], &[0.1, -0.2, 0.3], &[0.5, 1.5, 2.0], 1e-5)
    }))?;
    let keys = valid.clone();
    op("attention", vec![rand_t(&mut rng, 8, 4), rand_t(&mut rng, 8, 4), rand_t(&mut rng, 8, 4)], Box::new(move |g, v| {
        g.attention(v[0], v[1], v[2], layout, 2, &keys)
    }))?;
    let t2 = target.clone();
    op("masked_mse", vec![rand_t(&mut rng, 8, 4)], Box::new(move |g, v| g.masked_mse(v[0], &t2, weights.clone())))?;
    op("mse", vec![rand_t(&mut rng, 8, 4)], Box::new(move |g, v| g.mse(v[0], &target)))?;

    // Full pre-training loss of a tiny model with respect to every parameter.
    let cfg = TstConfig {
        feat_dim: 33,
        max_len: 8,
        d_model: 8,
        n_layers: 1,
        n_heads: 2,
        ff_dim: 16,
        dropout: 0.0,
        ..TstConfig::default()
    };
    let seqs: Vec<DaySequence> = (0..2)
        .map(|i| {
            let len = 8 - i;
            DaySequence {
                user_day: day(&format!("g{i}"), "2024-01-01"),
                n_features: 33,
                values: (0..8 * 33).map(|k| if k / 33 < len { rng.random_range(-2.0..2.0) } else { 0.0 }).collect(),
                pad_mask: (0..8).map(|t| t < len).collect(),
            }
        })
        .collect();
    let model = TstModel::for_training(cfg, &seqs).map_err(|e| e.to_string())?;
    let masks: Vec<MaskSpec> = (0..2).map(|_| sample_geometric_mask(8, 33, 0.3, 2.0, &mut rng)).collect();
    let refs: Vec<&DaySequence> = seqs.iter().collect();
    let full = grad_check(
        |x| {
            let mut m = model.clone();
            m.params.set_flat_values(x);
            m.reconstruction_loss_and_grad(&refs, &masks).unwrap()
        },
        &model.params.flat_values(),
        1e-5,
    );
    check!(full < tol, "full TST loss: relative error {full:e}");
    within(Duration::from_secs(60), started, "gradient checks")?;
    Ok(format!(
        "worst op {} {:.1e}, full model {full:.1e} over {} parameters, {:.1?}",
        worst.1,
        worst.0,
        model.params.num_scalars(),
        started.elapsed()
    ))
}

// 5
fn geometric_masking() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let m = sample_geometric_mask(100_000, 1, 0.15, 3.0, &mut rng);
    let stats = oracle_mask_stats(&[m.column(0)]);
    check!(
        (0.13..=0.17).contains(&stats.masked_fraction),
        "masked fraction {}",
        stats.masked_fraction
    );
    check!(
        (2.7..=3.3).contains(&stats.mean_masked_run),
        "mean masked run {}",
        stats.mean_masked_run
    );
    Ok(format!(
        "fraction {:.4}, mean run {:.3} over 1e5 steps",
        stats.masked_fraction, stats.mean_masked_run
    ))
}

// 6
fn padding_invariance() -> Outcome {
    let (len, fd) = (24, 33);
    let cfg = TstConfig {
        feat_dim: fd,
        max_len: len,
        d_model: 16,
        n_layers: 2,
        n_heads: 4,
        ff_dim: 32,
        batch_size: 2,
        ..TstConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let valid = |t: usize| (3..20).contains(&t) && t % 7 != 0;
    let mk = |rng: &mut ChaCha8Rng, id: &str, valid: &dyn Fn(usize) -> bool| DaySequence {
        user_day: day(id, "2024-02-02"),
        n_features: fd,
        values: (0..len * fd).map(|k| if valid(k / fd) { rng.random_range(-3.0..3.0) } else { 0.0 }).collect(),
        pad_mask: (0..len).map(valid).collect(),
    };
    let a = mk(&mut rng, "a", &valid);
    let b = mk(&mut rng, "b", &|t| t < 11);
    let mut perturbed = a.clone();
    for t in (0..len).filter(|&t| !valid(t)) {
        for f in 0..fd {
            perturbed.values[t * fd + f] = rng.random_range(-1e4..1e4);
        }
    }
    let mut model = TstModel::for_training(cfg, &[a.clone(), b.clone()]).map_err(|e| e.to_string())?;
    pretrain_epochs(&mut model, &[a.clone(), b.clone()], 3).map_err(|e| e.to_string())?;
    let r0 = model.reconstruct(&[&a, &b], None).map_err(|e| e.to_string())?;
    let r1 = model.reconstruct(&[&perturbed, &b], None).map_err(|e| e.to_string())?;
    let mut max_dev: f64 = 0.0;
    for t in (0..len).filter(|&t| valid(t)).chain(len..2 * len) {
        for f in 0..fd {
            max_dev = max_dev.max((r0[[t, f]] - r1[[t, f]]).abs());
        }
    }
    let (reg, _) = finetune_epochs(&model, &[a.clone(), b.clone()], &[2.0, 4.0], 3).map_err(|e| e.to_string())?;
    let p0 = reg.predict(&[a, b.clone()]).map_err(|e| e.to_string())?;
    let p1 = reg.predict(&[perturbed, b]).map_err(|e| e.to_string())?;
    check!(max_dev == 0.0, "reconstruction changed by {max_dev:e}");
    check!(p0 == p1, "regression output changed: {p0:?} vs {p1:?}");
    Ok("reconstruction and regression outputs unchanged (difference 0)".into())
}

// 7
fn pretraining_learnability() -> Outcome {
    let started = Instant::now();
    let (t_len, f_dim) = (144, 33);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let periods: Vec<f64> = (0..f_dim).map(|_| rng.random_range(12.0..96.0)).collect();
    let seqs: Vec<DaySequence> = (0..20)
        .map(|i| {
            let phases: Vec<f64> = (0..f_dim).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
            let amps: Vec<f64> = (0..f_dim).map(|_| rng.random_range(0.5..2.0)).collect();
            let mut values = Vec::with_capacity(t_len * f_dim);
            for t in 0..t_len {
                for f in 0..f_dim {
                    values.push(amps[f] * (std::f64::consts::TAU * t as f64 / periods[f] + phases[f]).sin());
                }
            }
            DaySequence {
                user_day: day(&format!("s{i}"), "2024-01-01"),
                n_features: f_dim,
                values,
                pad_mask: vec![true; t_len],
            }
        })
        .collect();
    let cfg = TstConfig {
        d_model: 32,
        n_layers: 2,
        n_heads: 4,
        ff_dim: 64,
        batch_size: 2,
        pretrain_lr: 0.01,
        dropout: 0.0,
        conv_kernel: 7,
        ..TstConfig::default()
    };
    let mut model = TstModel::for_training(cfg.clone(), &seqs).map_err(|e| e.to_string())?;
    pretrain_epochs(&mut model, &seqs, 50).map_err(|e| e.to_string())?;
    let refs: Vec<&DaySequence> = seqs.iter().collect();
    let mut mrng = ChaCha8Rng::seed_from_u64(99);
    let masks: Vec<MaskSpec> = refs
        .iter()
        .map(|s| sample_geometric_mask(s.len(), f_dim, cfg.mask_ratio, cfg.mean_mask_len, &mut mrng))
        .collect();
    let recon = model.reconstruct(&refs, Some(&masks)).map_err(|e| e.to_string())?;
    let target = model.targets(&refs).map_err(|e| e.to_string())?;
    let (mut se, mut base, mut n) = (0.0, 0.0, 0usize);
    for (b, m) in masks.iter().enumerate() {
        for t in 0..m.len {
            for f in 0..f_dim {
                if m.get(t, f) {
                    let r = b * t_len + t;
                    se += (recon[[r, f]] - target[[r, f]]).powi(2);
                    // Standardized features: the global-mean predictor outputs 0.
                    base += target[[r, f]].powi(2);
                    n += 1;
                }
            }
        }
    }
    let (mse, baseline) = (se / n as f64, base / n as f64);
    check!(mse <= 0.7 * baseline, "masked MSE {mse:.4} vs baseline {baseline:.4}");
    within(Duration::from_secs(300), started, "pre-training")?;
    Ok(format!(
        "masked MSE {mse:.4} vs mean baseline {baseline:.4} ({:.0}% lower), {:.1?}",
        100.0 * (1.0 - mse / baseline),
        started.elapsed()
    ))
}

// 8
fn ensemble_sanity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let n = 200;
    let x = Array2::from_shape_simple_fn((n, 10), || rng.random_range(0.0..10.0));
    let cuts = [5.0, 3.0, 6.5, 4.0];
    let y: Vec<Vec<u8>> = x
        .rows()
        .into_iter()
        .map(|r| (0..4).map(|l| u8::from(r[2 * l + 1] > cuts[l])).collect())
        .collect();
    let keys = (0..n).map(|i| {
        let mut d = day("t", "2024-01-01");
        d.date = d.date + chrono::Days::new(i as u64);
        d
    });
    let names = ["S1", "S2", "S3", "S4"].map(String::from).to_vec();
    let data = TabularDataset::new(keys.collect(), x.clone(), y, names).map_err(|e| e.to_string())?;
    let model = fit_multi_output(&data, &EnsembleParams::default()).map_err(|e| e.to_string())?;
    let mut f1s = Vec::new();
    for (l, ens) in model.ensembles.iter().enumerate() {
        let pred: Vec<u8> = x.rows().into_iter().map(|r| ens.predict(r).unwrap().1).collect();
        let f1 = f1_macro(&data.label_column(l), &pred).map_err(|e| e.to_string())?;
        check!(f1 >= 0.95, "{}: training macro F1 {f1}", ens.label);
        f1s.push(f1);
    }

    let mut knn_queries = 0;
    for case in 0..100 {
        let n = rng.random_range(1..=200);
        let d = rng.random_range(1..=10);
        let xk = Array2::from_shape_simple_fn((n, d), || rng.random_range(-3..=3) as f64);
        let yk: Vec<u8> = (0..n).map(|_| rng.random_range(0..=1)).collect();
        let k = rng.random_range(1..=9);
        let knn = Knn::fit(&xk, &yk, k);
        let rows: Vec<Vec<f64>> = xk.rows().into_iter().map(|r| r.to_vec()).collect();
        for _ in 0..10 {
            let q: Vec<f64> = (0..d).map(|_| rng.random_range(-3..=3) as f64).collect();
            let (got, want) = (knn.p1(Array1::from(q.clone()).view()), oracle_knn(&rows, &yk, &q, k));
            check!(got == want, "kNN case {case}: {got} vs oracle {want}");
            knn_queries += 1;
        }
    }

    let hand = soft_vote_probs(&[0.9, 0.9, 0.9, 0.2, 0.2, 0.2]).map_err(|e| e.to_string())?;
    check!(hand.1 == 1 && (hand.0 - 0.55).abs() < 1e-12, "hand average gave {hand:?}");
    let tie = soft_vote_probs(&[0.5; 6]).map_err(|e| e.to_string())?;
    check!(tie == (0.5, 0), "tie gave {tie:?}");
    Ok(format!(
        "training macro F1 {:?}, kNN = oracle on {knn_queries} queries, votes 0.55 -> 1 and 0.5 -> 0",
        f1s.iter().map(|f| (f * 1000.0).round() / 1000.0).collect::<Vec<_>>()
    ))
}

// 9
fn svm_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let n = 50;
    let mut x = Array2::zeros((n, 2));
    let mut y = vec![0u8; n];
    for i in 0..n {
        let cls = (i % 2) as f64;
        x[[i, 0]] = 3.0 * cls + rng.random_range(-1.0..1.0);
        x[[i, 1]] = rng.random_range(-2.0..2.0);
        y[i] = cls as u8;
    }
    let params = EnsembleParams::default();
    let clf = fit(ClassifierKind::SupportVectorMachine, &x, &y, &params).map_err(|e| e.to_string())?;
    let Model::Svm(svm) = &clf.model else {
        return Err("fit did not return an SVM".into());
    };
    let mut errors = 0;
    for (r, &t) in x.rows().into_iter().zip(&y) {
        errors += usize::from(u8::from(svm.decision(r) > 0.0) != t);
        errors += usize::from(clf.predict(r).unwrap() != t);
    }
    check!(errors == 0, "{errors} training errors");

    let gamma = default_gamma(&x);
    let k = Array2::from_shape_fn((n, n), |(i, j)| rbf(x.row(i), x.row(j), gamma));
    let ys: Vec<f64> = y.iter().map(|&v| if v == 1 { 1.0 } else { -1.0 }).collect();
    let c = params.svm_c;
    let sol = smo_solve(&k, &ys, c, params.svm_eps, params.svm_max_iter);
    check!(sol.converged, "SMO did not converge");
    let mut worst: f64 = 0.0;
    for i in 0..n {
        let f: f64 = (0..n).map(|j| sol.alpha[j] * ys[j] * k[[i, j]]).sum::<f64>() - sol.rho;
        let m = ys[i] * f;
        let v = if sol.alpha[i] <= 0.0 {
            (1.0 - m).max(0.0)
        } else if sol.alpha[i] >= c {
            (m - 1.0).max(0.0)
        } else {
            (m - 1.0).abs()
        };
        worst = worst.max(v);
    }
    let eq: f64 = sol.alpha.iter().zip(&ys).map(|(a, y)| a * y).sum::<f64>().abs();
    worst = worst.max(eq);
    check!(worst <= 1e-3, "max KKT violation {worst:e}");
    Ok(format!("0 training errors, max KKT violation {worst:.1e} after {} SMO steps", sol.iterations))
}

// 10
fn end_to_end() -> Outcome {
    let started = Instant::now();
    let root = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut reports = Vec::new();
    for run in 0..2 {
        let workdir = root.path().join(format!("run{run}"));
        let cfg_path = root.path().join(format!("config{run}.json"));
        let cfg = serde_json::json!({
            "workdir": workdir,
            "synth": {"n_users": 4, "n_days": 30, "sensor_noise": 0.0, "survey_noise": 0.0, "sleep_noise": 0.0},
            "tst": {
                "d_model": 32, "n_layers": 2, "n_heads": 4, "ff_dim": 64, "batch_size": 16, "dropout": 0.1,
                "pretrain_epochs": 50, "pretrain_lr": 0.001, "finetune_epochs": 20, "finetune_lr": 0.001
            }
        });
        std::fs::write(&cfg_path, serde_json::to_vec_pretty(&cfg).unwrap()).map_err(|e| e.to_string())?;
        for stage in ["synth", "label", "featurize", "pretrain", "finetune", "train-ensemble", "predict", "score"] {
            let out = Command::new(env!("CARGO_BIN_EXE_sleepcast"))
                .args([stage, "--config", cfg_path.to_str().unwrap(), "--seed", "42"])
                .env("RUST_LOG", "warn")
                .output()
                .map_err(|e| e.to_string())?;
            check!(
                out.status.success(),
                "run {run}, stage {stage} exited with {}: {}",
                out.status,
                String::from_utf8_lossy(&out.stderr)
            );
        }
        reports.push(std::fs::read(workdir.join("score.json")).map_err(|e| e.to_string())?);
    }
    check!(reports[0] == reports[1], "the two seed-42 runs produced different reports");
    let report: serde_json::Value = serde_json::from_slice(&reports[0]).map_err(|e| e.to_string())?;
    let aggregate = report["aggregate"].as_f64().ok_or("report has no aggregate")?;
    check!(aggregate > 6.0, "aggregate {aggregate:.3} / 10");
    within(Duration::from_secs(15 * 60), started, "two end-to-end runs")?;
    let per_label: Vec<String> = report["per_label"]
        .as_object()
        .unwrap()
        .iter()
        .map(|(k, v)| format!("{k} {:.2}", v.as_f64().unwrap()))
        .collect();
    Ok(format!(
        "aggregate {aggregate:.2} / 10 on held-out days [{}], reports identical, {:.1?} for both runs",
        per_label.join(", "),
        started.elapsed()
    ))
}

// 11
fn metric_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..1000 {
        let n = rng.random_range(1..=40);
        let skew = rng.random_range(0.0..1.0);
        let truth: Vec<u8> = (0..n).map(|_| u8::from(rng.random_bool(skew))).collect();
        let pred: Vec<u8> = (0..n).map(|_| u8::from(rng.random_bool(skew))).collect();
        let got = f1_macro(&truth, &pred).map_err(|e| e.to_string())?;
        let want = oracle_f1(&truth, &pred);
        check!(got.to_bits() == want.to_bits(), "case {case}: {got} vs oracle {want}");
    }
    let score = |v: f64| competition_score(&[v; 7]).unwrap();
    check!(score(0.0) == 0.0, "all-zero F1 scored {}", score(0.0));
    check!(score(1.0) == 10.0, "all-one F1 scored {}", score(1.0));
    check!((score(0.61) - 6.1).abs() < 1e-12, "0.61 scored {}", score(0.61));
    check!(competition_score(&[0.5; 6]).is_err(), "wrong arity accepted");
    Ok("1000 random cases exact; scores 0, 10 and 0.61 -> 6.1 hold".into())
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("label-formula oracle", label_formula_oracle),
        ("Q-label threshold suite", q_label_suite),
        ("feature-pipeline equivalence", feature_pipeline_equivalence),
        ("gradient checks", gradient_checks),
        ("geometric masking", geometric_masking),
        ("padding invariance", padding_invariance),
        ("pre-training learnability", pretraining_learnability),
        ("ensemble sanity", ensemble_sanity),
        ("SVM correctness", svm_correctness),
        ("end-to-end pipeline", end_to_end),
        ("metric suite", metric_suite),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        if only.is_some_and(|o| o != i + 1) {
            continue;
        }
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("criterion {:>2} {name}: PASS ({detail})", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} {name}: FAIL ({why})", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
