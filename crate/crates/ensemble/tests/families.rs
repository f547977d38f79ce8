use ndarray::{array, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sleepcast_core::oracles::oracle_knn;
use sleepcast_ensemble::boost::{BoostParams, GradientBoosting};
use sleepcast_ensemble::forest::{DecisionTree, ForestParams, RandomForest};
use sleepcast_ensemble::knn::Knn;
use sleepcast_ensemble::logistic::LogisticRegression;
use sleepcast_ensemble::svm::{default_gamma, rbf, smo_solve};
use sleepcast_ensemble::tree::{Node, Tree};
use sleepcast_ensemble::{fit, ClassifierKind, EnsembleParams, Model, TrainedClassifier};

fn accuracy(c: &TrainedClassifier, x: &Array2<f64>, y: &[u8]) -> f64 {
    let hits = x.rows().into_iter().zip(y).filter(|(r, &t)| c.predict(*r).unwrap() == t).count();
    hits as f64 / y.len() as f64
}

fn random_data(rng: &mut ChaCha8Rng, n: usize, d: usize) -> (Array2<f64>, Vec<u8>) {
    let x = Array2::from_shape_simple_fn((n, d), || rng.random_range(-2.0..2.0));
    let y = x.rows().into_iter().map(|r| u8::from(r[0] + 0.5 * r[d - 1] + rng.random_range(-0.5..0.5) > 0.0)).collect();
    (x, y)
}

#[test]
fn knn_matches_exhaustive_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for case in 0..100 {
        let n = rng.random_range(1..=200);
        let d = rng.random_range(1..=10);
        // Integer grid values make distance ties common.
        let x = Array2::from_shape_simple_fn((n, d), || rng.random_range(-3..=3) as f64);
        let y: Vec<u8> = (0..n).map(|_| rng.random_range(0..=1)).collect();
        let k = rng.random_range(1..=7);
        let knn = Knn::fit(&x, &y, k);
        let rows: Vec<Vec<f64>> = x.rows().into_iter().map(|r| r.to_vec()).collect();
        for _ in 0..10 {
            let q: Vec<f64> = (0..d).map(|_| rng.random_range(-3..=3) as f64).collect();
            let got = knn.p1(ndarray::ArrayView1::from(&q));
            assert_eq!(got, oracle_knn(&rows, &y, &q, k), "case {case}");
        }
    }
}

#[test]
fn knn_examples() {
    let x = array![[0.0], [1.0], [2.0], [3.0], [4.0], [10.0]];
    let knn = Knn::fit(&x, &[1, 1, 1, 0, 0, 1], 5);
    assert_eq!(knn.p1(array![0.0].view()), 0.6);
    let one = Knn::fit(&x, &[1, 0, 1, 0, 0, 1], 1);
    assert_eq!(one.p1(array![1.0].view()), 0.0);
    assert_eq!(one.p1(array![2.0].view()), 1.0);
    // k=2 split between rows 1 and 2 (equidistant); the lower index wins.
    let two = Knn::fit(&x, &[1, 0, 1, 0, 0, 1], 2);
    assert_eq!(two.p1(array![1.5].view()), 0.5);
    assert_eq!(two.predict(array![1.5].view()), 0);
}

#[test]
fn single_tree_forest_equals_decision_tree() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..10 {
        let (x, y) = random_data(&mut rng, 80, 6);
        let dt = DecisionTree::fit(&x, &y, 2);
        let rf = RandomForest::fit(
            &x,
            &y,
            &ForestParams {
                n_trees: 1,
                bootstrap: false,
                max_features: Some(6),
                min_samples_split: 2,
                seed: 9,
            },
        );
        for _ in 0..50 {
            let q = ndarray::Array1::from_shape_simple_fn(6, || rng.random_range(-3.0..3.0));
            assert_eq!(f64::from(u8::from(dt.p1(q.view()) > 0.5)), rf.p1(q.view()));
        }
        assert_eq!(rf.trees[0], dt.tree);
    }
}

#[test]
fn forest_probability_is_vote_fraction() {
    let vote = |v: f64| Tree {
        nodes: vec![Node::Leaf { value: v }],
    };
    let trees = (0..100).map(|i| vote(if i < 80 { 0.9 } else { 0.3 })).collect();
    let c = TrainedClassifier::new(ClassifierKind::RandomForest, 1, Model::RandomForest(RandomForest { trees }));
    assert_eq!(c.predict_proba(array![0.0].view()).unwrap(), [1.0 - 0.8, 0.8]);
}

#[test]
fn boosting_loss_never_increases() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for lr in [0.1, 1.0, 5.0] {
        for _ in 0..5 {
            let (x, mut y) = random_data(&mut rng, 60, 4);
            for v in y.iter_mut() {
                if rng.random_bool(0.2) {
                    *v = 1 - *v;
                }
            }
            let gb = GradientBoosting::fit(
                &x,
                &y,
                &BoostParams {
                    n_stages: 100,
                    max_depth: 3,
                    learning_rate: lr,
                    min_samples_split: 2,
                },
            );
            assert_eq!(gb.train_loss.len(), 101);
            for w in gb.train_loss.windows(2) {
                assert!(w[1] <= w[0] + 1e-12, "lr {lr}: {} -> {}", w[0], w[1]);
            }
        }
    }
}

fn kkt_violation(k: &Array2<f64>, y: &[f64], alpha: &[f64], rho: f64, c: f64) -> f64 {
    let n = y.len();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        let f: f64 = (0..n).map(|j| alpha[j] * y[j] * k[[i, j]]).sum::<f64>() - rho;
        let m = y[i] * f;
        let v = if alpha[i] <= 0.0 {
            (1.0 - m).max(0.0)
        } else if alpha[i] >= c {
            (m - 1.0).max(0.0)
        } else {
            (m - 1.0).abs()
        };
        worst = worst.max(v);
    }
    worst.max(alpha.iter().zip(y).map(|(a, y)| a * y).sum::<f64>().abs())
}

#[test]
fn smo_satisfies_kkt() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for case in 0..20 {
        let n = rng.random_range(5..=100);
        let (x, y) = random_data(&mut rng, n, 3);
        let ys: Vec<f64> = y.iter().map(|&v| if v == 1 { 1.0 } else { -1.0 }).collect();
        if ys.iter().all(|&v| v == ys[0]) {
            continue;
        }
        let g = default_gamma(&x);
        let k = Array2::from_shape_fn((n, n), |(i, j)| rbf(x.row(i), x.row(j), g));
        for c in [0.1, 1.0, 10.0] {
            let sol = smo_solve(&k, &ys, c, 1e-4, 1_000_000);
            assert!(sol.converged);
            assert!(sol.alpha.iter().all(|&a| (0.0..=c).contains(&a)));
            let v = kkt_violation(&k, &ys, &sol.alpha, sol.rho, c);
            assert!(v <= 1e-3, "case {case}, C {c}: violation {v}");
        }
    }
}

#[test]
fn svm_separates_separable_data() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut x = Array2::zeros((50, 2));
    let mut y = vec![0u8; 50];
    for i in 0..50 {
        let cls = (i % 2) as f64;
        x[[i, 0]] = 3.0 * cls + rng.random_range(-1.0..1.0);
        x[[i, 1]] = rng.random_range(-1.0..1.0);
        y[i] = cls as u8;
    }
    let c = fit(ClassifierKind::SupportVectorMachine, &x, &y, &EnsembleParams::default()).unwrap();
    let Model::Svm(svm) = &c.model else { panic!() };
    for (r, &t) in x.rows().into_iter().zip(&y) {
        assert_eq!(u8::from(svm.decision(r) > 0.0), t);
    }
    assert_eq!(accuracy(&c, &x, &y), 1.0);
}

#[test]
fn xor_capacity() {
    let x = array![[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]];
    let y = [0, 1, 1, 0];
    let p = EnsembleParams::default();
    for kind in [ClassifierKind::DecisionTree, ClassifierKind::SupportVectorMachine] {
        assert_eq!(accuracy(&fit(kind, &x, &y, &p).unwrap(), &x, &y), 1.0, "{kind}");
    }
    // Brute force over sign patterns: no line realizes XOR, so at most 3 of
    // the 4 points can be right.
    let lr = fit(ClassifierKind::LogisticRegression, &x, &y, &p).unwrap();
    assert!(accuracy(&lr, &x, &y) <= 0.75);
}

#[test]
fn two_point_set_is_memorized_by_every_family() {
    let x = array![[0.0, 0.0, 0.0], [1.0, 1.0, 1.0]];
    let y = [0, 1];
    for kind in ClassifierKind::ALL {
        let c = fit(kind, &x, &y, &EnsembleParams::default()).unwrap();
        assert_eq!(accuracy(&c, &x, &y), 1.0, "{kind}");
    }
}

#[test]
fn zero_weight_logistic_is_half() {
    let c = TrainedClassifier::new(
        ClassifierKind::LogisticRegression,
        3,
        Model::LogisticRegression(LogisticRegression::zeros(3)),
    );
    assert_eq!(c.predict_proba(array![1.0, -4.0, 7.0].view()).unwrap(), [0.5, 0.5]);
}

#[test]
fn logistic_reaches_tolerance() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (x, y) = random_data(&mut rng, 100, 4);
    let c = fit(ClassifierKind::LogisticRegression, &x, &y, &EnsembleParams::default()).unwrap();
    let Model::LogisticRegression(m) = &c.model else { panic!() };
    assert!(m.iterations < 10_000);
    assert!(accuracy(&c, &x, &y) > 0.8);
}

#[test]
fn probability_axioms_and_non_finite_queries() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (x, y) = random_data(&mut rng, 40, 10);
    for kind in ClassifierKind::ALL {
        let c = fit(kind, &x, &y, &EnsembleParams::default()).unwrap();
        for _ in 0..50 {
            let q = ndarray::Array1::from_shape_simple_fn(10, || rng.random_range(-10.0..10.0));
            let [p0, p1] = c.predict_proba(q.view()).unwrap();
            assert!((0.0..=1.0).contains(&p0) && (0.0..=1.0).contains(&p1));
            assert!((p0 + p1 - 1.0).abs() <= 1e-12);
        }
        let mut q = ndarray::Array1::zeros(10);
        q[3] = f64::NAN;
        assert!(c.predict_proba(q.view()).is_err(), "{kind}");
        q[3] = f64::INFINITY;
        assert!(c.predict(q.view()).is_err(), "{kind}");
    }
}

#[test]
fn single_class_gives_constant() {
    let x = array![[1.0, 2.0], [3.0, 4.0]];
    for kind in ClassifierKind::ALL {
        let c = fit(kind, &x, &[1, 1], &EnsembleParams::default()).unwrap();
        assert!(c.is_constant());
        assert_eq!(c.predict_proba(array![0.0, 0.0].view()).unwrap(), [0.0, 1.0]);
    }
}

#[test]
fn training_input_validation() {
    let p = EnsembleParams::default();
    let x = array![[1.0], [f64::NAN]];
    assert!(fit(ClassifierKind::DecisionTree, &x, &[0, 1], &p).is_err());
    assert!(fit(ClassifierKind::DecisionTree, &array![[1.0]], &[0, 1], &p).is_err());
    assert!(fit(ClassifierKind::DecisionTree, &array![[1.0], [2.0]], &[0, 2], &p).is_err());
}

#[test]
fn seeded_fits_are_reproducible() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (x, y) = random_data(&mut rng, 60, 5);
    let p = EnsembleParams::default();
    for kind in [ClassifierKind::RandomForest, ClassifierKind::GradientBoosting] {
        assert_eq!(fit(kind, &x, &y, &p).unwrap(), fit(kind, &x, &y, &p).unwrap());
    }
    let other = EnsembleParams { seed: 7, ..p.clone() };
    assert_ne!(
        fit(ClassifierKind::RandomForest, &x, &y, &p).unwrap(),
        fit(ClassifierKind::RandomForest, &x, &y, &other).unwrap()
    );
}
