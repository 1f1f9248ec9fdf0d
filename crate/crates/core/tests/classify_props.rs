//! Classifiers, the two adaptation strategies and the bound diagnostics.

mod oracles;

use dadil_core::barycenter::BarycenterConfig;
use dadil_core::classify::{
    accuracy, bound_terms, bound_terms_at, dadil_e, dadil_r, dadil_r_at, gamma, reconstruct, train_classifier,
    ClassifierConfig, Ensemble, SoftmaxClassifier,
};
use dadil_core::dictionary::{init_dictionary, Atom, DadilConfig, DatasetsMeta, Dictionary};
use dadil_core::ot::SimplexVector;
use dadil_core::{LabeledPointCloud, PointCloud};
use ndarray::{array, Array2};
use oracles::random_simplex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Two classes separated along the first axis around `center`.
fn two_blobs(seed: u64, n: usize, center: [f64; 2], gap: f64, spread: f64) -> LabeledPointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let classes: Vec<usize> = (0..n).map(|i| i % 2).collect();
    let x = Array2::from_shape_fn((n, 2), |(i, j)| {
        let side = if classes[i] == 0 { -gap } else { gap };
        center[j] + if j == 0 { side } else { 0.0 } + spread * rng.sample::<f64, _>(StandardNormal)
    });
    LabeledPointCloud::from_classes(x, &classes, 2).unwrap()
}

fn atom_from(data: &LabeledPointCloud) -> Atom {
    Atom::new(data.features().to_owned(), data.labels().mapv(|v| if v > 0.5 { 30.0 } else { 0.0 })).unwrap()
}

fn clf_cfg() -> ClassifierConfig {
    ClassifierConfig { epochs: 60, lr: 0.5, batch_size: 16, seed: 1 }
}

#[test]
fn separable_blobs_are_learned() {
    let data = two_blobs(1, 200, [0.0, 0.0], 1.5, 0.3);
    let clf = train_classifier(&data, &clf_cfg()).unwrap();
    let acc = accuracy(&clf.predict(data.cloud()).unwrap(), &data.hard_classes()).unwrap();
    assert!(acc >= 99.0, "{acc}");
    let zero = SoftmaxClassifier::zeros(2, 2);
    assert!(clf.cross_entropy(&data).unwrap() <= zero.cross_entropy(&data).unwrap());
}

#[test]
fn uniform_labels_keep_entropy_floor() {
    let data = two_blobs(2, 60, [0.0, 0.0], 1.0, 0.5);
    for n_c in [2usize, 3] {
        let labels = Array2::from_elem((60, n_c), 1.0 / n_c as f64);
        let soft = LabeledPointCloud::new(data.cloud().clone(), labels).unwrap();
        let clf = train_classifier(&soft, &clf_cfg()).unwrap();
        assert!(clf.cross_entropy(&soft).unwrap() >= (n_c as f64).ln() - 0.01);
    }
}

#[test]
fn training_is_deterministic_and_one_hot_equals_soft_encoding() {
    let data = two_blobs(3, 50, [0.0, 0.0], 1.0, 0.5);
    let a = train_classifier(&data, &clf_cfg()).unwrap();
    let b = train_classifier(&data, &clf_cfg()).unwrap();
    assert_eq!(a, b);
    let soft = LabeledPointCloud::new(data.cloud().clone(), data.labels().to_owned()).unwrap();
    assert_eq!(train_classifier(&soft, &clf_cfg()).unwrap(), a);
}

#[test]
fn predict_proba_matches_hand_computation() {
    let w = array![[1.0, -1.0, 0.5], [2.0, 0.0, -1.0], [0.1, 0.2, 0.3]];
    let clf = SoftmaxClassifier::new(w).unwrap();
    let x = PointCloud::new(array![[0.5, -2.0]]).unwrap();
    // z = x W + b.
    let z = [0.5 * 1.0 - 2.0 * 2.0 + 0.1, 0.5 * -1.0 + 0.0 + 0.2, 0.5 * 0.5 + 2.0 + 0.3];
    let e: Vec<f64> = z.iter().map(|v| f64::exp(*v)).collect();
    let s: f64 = e.iter().sum();
    let p = clf.predict_proba(&x).unwrap();
    for c in 0..3 {
        assert!((p[[0, c]] - e[c] / s).abs() <= 1e-15);
    }
    assert_eq!(clf.predict(&x).unwrap(), vec![2]);
}

fn random_dictionary(seed: u64, k: usize) -> Dictionary {
    let cfg = DadilConfig { n_atoms: k, atom_size: 20, beta: Some(1.0), ..Default::default() };
    let meta = DatasetsMeta { n_domains: 2, dim: 2, n_classes: 3 };
    init_dictionary(&cfg, meta, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

#[test]
fn ensemble_is_the_convex_combination() {
    let dict = random_dictionary(4, 3);
    let ens = dadil_e(&dict, &clf_cfg()).unwrap();
    let x = PointCloud::new(Array2::from_shape_fn((15, 2), |(i, j)| (i as f64 - 7.0) * 0.3 + j as f64)).unwrap();
    let p = ens.predict_proba(&x).unwrap();
    let alpha = dict.target_weights();
    let mut expect = Array2::<f64>::zeros((15, 3));
    for (m, &w) in ens.members().iter().zip(alpha.as_slice()) {
        let q = m.predict_proba(&x).unwrap();
        for i in 0..15 {
            for c in 0..3 {
                expect[[i, c]] += w * q[[i, c]];
            }
        }
    }
    for (a, b) in p.iter().zip(expect.iter()) {
        assert!((a - b).abs() <= 1e-12);
    }
    for row in p.outer_iter() {
        assert!((row.sum() - 1.0).abs() <= 1e-9);
    }
}

#[test]
fn one_hot_ensemble_is_the_selected_member() {
    let dict = random_dictionary(5, 3);
    let ens = dadil_e(&dict, &clf_cfg()).unwrap();
    let x = PointCloud::new(Array2::from_shape_fn((10, 2), |(i, j)| i as f64 * 0.2 - j as f64)).unwrap();
    for k in 0..3 {
        let one = ens.reweighted(&SimplexVector::vertex(3, k).unwrap()).unwrap();
        assert_eq!(one.predict_proba(&x).unwrap(), ens.members()[k].predict_proba(&x).unwrap());
    }
    let same = Ensemble::new(vec![ens.members()[0].clone(); 3], &dict.target_weights()).unwrap();
    let p = same.predict_proba(&x).unwrap();
    let q = ens.members()[0].predict_proba(&x).unwrap();
    for (a, b) in p.iter().zip(q.iter()) {
        assert!((a - b).abs() <= 1e-12);
    }
}

#[test]
fn oracle_dictionary_matches_direct_training() {
    let target = two_blobs(6, 120, [1.0, -1.0], 1.0, 0.4);
    let test = two_blobs(7, 200, [1.0, -1.0], 1.0, 0.4);
    let dict = Dictionary::new(vec![atom_from(&target)], Array2::ones((1, 1)), 1.0).unwrap();
    let bcfg = BarycenterConfig { n_support: 120, ..Default::default() };
    let r = dadil_r(&dict, &bcfg, &clf_cfg()).unwrap();
    let direct = train_classifier(&target, &clf_cfg()).unwrap();
    let truth = test.hard_classes();
    let acc_r = accuracy(&r.predict(test.cloud()).unwrap(), &truth).unwrap();
    let acc_d = accuracy(&direct.predict(test.cloud()).unwrap(), &truth).unwrap();
    assert!(acc_r >= acc_d - 2.0, "{acc_r} vs {acc_d}");
}

#[test]
fn one_hot_weights_reproduce_the_atom() {
    // Overlapping classes: the cross-entropy optimum is unique, so training
    // on a permutation of the same points lands next to the same weights.
    let a = two_blobs(8, 40, [0.0, 0.0], 0.5, 0.6);
    let b = two_blobs(9, 40, [5.0, 5.0], 0.5, 0.6);
    let weights = array![[0.0, 1.0]];
    let dict = Dictionary::new(vec![atom_from(&a), atom_from(&b)], weights, 1.0).unwrap();
    let bcfg = BarycenterConfig { n_support: 40, ..Default::default() };
    let rec = reconstruct(&dict, &dict.target_weights(), &bcfg).unwrap();
    let (recon, g) = bound_terms_at(&dict, &dict.target_weights(), b.cloud(), &bcfg).unwrap();
    assert!(recon <= 1e-6 && g <= 1e-6, "{recon} {g}");
    assert_eq!(rec.len(), 40);
    let long = ClassifierConfig { epochs: 400, ..clf_cfg() };
    let r = dadil_r(&dict, &bcfg, &long).unwrap();
    let atom_clf = train_classifier(&dict.labeled_atoms().unwrap()[1], &long).unwrap();
    let probe = two_blobs(10, 300, [5.0, 5.0], 0.5, 0.6);
    let agree = accuracy(&r.predict(probe.cloud()).unwrap(), &atom_clf.predict(probe.cloud()).unwrap()).unwrap();
    assert!(agree >= 99.0, "{agree}");
}

#[test]
fn symmetric_atoms_give_midpoint_boundary() {
    // Atoms are mirror images across x = 0 in the second coordinate, so the
    // even mixture has its class boundary at x0 = 0.
    let a = two_blobs(11, 60, [0.0, 3.0], 1.0, 0.2);
    let mut bx = a.features().to_owned();
    bx.column_mut(1).mapv_inplace(|v| -v);
    let b = LabeledPointCloud::from_classes(bx, &a.hard_classes(), 2).unwrap();
    let dict = Dictionary::new(vec![atom_from(&a), atom_from(&b)], array![[0.5, 0.5]], 1.0).unwrap();
    let bcfg = BarycenterConfig { n_support: 60, ..Default::default() };
    let r = dadil_r_at(&dict, &dict.target_weights(), &bcfg, &clf_cfg()).unwrap();
    let probe = PointCloud::new(array![[-0.3, 0.0], [0.3, 0.0], [-1.0, 0.0], [1.0, 0.0]]).unwrap();
    assert_eq!(r.predict(&probe).unwrap(), vec![0, 1, 0, 1]);
}

#[test]
fn single_atom_equal_to_target_has_zero_bound_terms() {
    let t = two_blobs(12, 30, [0.0, 0.0], 1.0, 0.3);
    let dict = Dictionary::new(vec![atom_from(&t)], Array2::ones((1, 1)), 1.0).unwrap();
    let (recon, g) = bound_terms(&dict, t.cloud(), &BarycenterConfig { n_support: 30, ..Default::default() }).unwrap();
    assert!(recon.abs() <= 1e-6 && g.abs() <= 1e-6, "{recon} {g}");
}

#[test]
fn gamma_is_minimal_at_the_barycenter() {
    // The barycenter at alpha minimises sum_k alpha_k W(P_k, .) among the
    // alternatives tried here: barycenters built at other coordinates.
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut wins = 0;
    for trial in 0..10 {
        let dict = random_dictionary(100 + trial, 3);
        let bcfg = BarycenterConfig { n_support: 20, ..Default::default() };
        let alpha = dict.target_weights();
        let (_, g) = bound_terms(&dict, dict.atoms()[0].cloud().as_ref().unwrap(), &bcfg).unwrap();
        assert!(g >= 0.0);
        let mut ok = true;
        for _ in 0..10 {
            let other = random_simplex(&mut rng, 3);
            let b = reconstruct(&dict, &other, &bcfg).unwrap();
            ok &= g <= gamma(&dict, &alpha, b.cloud()).unwrap() + 1e-6;
        }
        wins += usize::from(ok);
    }
    assert!(wins >= 8, "{wins}/10");
}
