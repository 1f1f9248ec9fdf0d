//! Dictionary learning: gradient oracles, reconstruction loss oracle,
//! training-loop properties and barycentric regression sanity runs.

mod oracles;

use dadil_core::barycenter::{labeled_barycenter, BarycenterConfig};
use dadil_core::dictionary::{
    batch_loss, density_score, envelope_gradients, fit, init_dictionary, sample_source_batch,
    sample_unlabeled_batch, update_magnitudes, wbr_fit, Atom, DadilConfig, DatasetsMeta, Dictionary,
    DomainBatch, MiniBatch,
};
use dadil_core::ot::{feature_cost, labeled_cost, wasserstein, SimplexVector};
use dadil_core::{LabeledPointCloud, PointCloud};
use ndarray::{array, Array2};
use oracles::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn blob(rng: &mut ChaCha8Rng, n: usize, center: [f64; 2], spread: f64) -> LabeledPointCloud {
    let mut x = Array2::zeros((n, 2));
    let classes: Vec<usize> = (0..n).map(|i| i % 2).collect();
    for i in 0..n {
        let side = if classes[i] == 0 { -1.0 } else { 1.0 };
        x[[i, 0]] = center[0] + side + spread * rng.sample::<f64, _>(StandardNormal);
        x[[i, 1]] = center[1] + spread * rng.sample::<f64, _>(StandardNormal);
    }
    LabeledPointCloud::from_classes(x, &classes, 2).unwrap()
}

#[test]
fn surrogate_gradient_matches_finite_differences() {
    for seed in 0..10 {
        let inst = grad_instance(seed, 2, 8, 2);
        let (_, recs) = batch_loss(&inst.dict, &inst.batch, &inst.cfg).unwrap();
        let g = envelope_gradients(&inst.dict, &inst.batch, &recs).unwrap();
        let p = Params::of(&inst.dict);
        let beta = inst.dict.beta();
        let fd = finite_differences(&p, 1e-6, |q| surrogate_loss(q, beta, &inst.batch, &recs));
        let ef = relative_error(&g.features, &fd.features);
        let el = relative_error(&g.logits, &fd.logits);
        let ew = relative_error([&g.weights], [&fd.weights]);
        assert!(ef <= 1e-6 && el <= 1e-6 && ew <= 1e-6, "seed {seed}: {ef:e} {el:e} {ew:e}");
    }
}

#[test]
fn surrogate_equals_loss_at_the_captured_plans() {
    for seed in 0..5 {
        let inst = grad_instance(seed, 3, 6, 3);
        let (loss, recs) = batch_loss(&inst.dict, &inst.batch, &inst.cfg).unwrap();
        let s = surrogate_loss(&Params::of(&inst.dict), inst.dict.beta(), &inst.batch, &recs);
        assert!((loss - s).abs() <= 1e-10 * loss.max(1.0), "{loss} vs {s}");
    }
}

#[test]
fn full_loss_gradient_matches_finite_differences() {
    let mut accepted = 0;
    let mut seed = 100;
    while accepted < 5 {
        seed += 1;
        let inst = grad_instance(seed, 2, 8, 2);
        let (_, recs) = batch_loss(&inst.dict, &inst.batch, &inst.cfg).unwrap();
        let sig = plan_signature(&recs);
        let g = envelope_gradients(&inst.dict, &inst.batch, &recs).unwrap();
        let p = Params::of(&inst.dict);
        let beta = inst.dict.beta();
        let mut degenerate = false;
        // Coordinate weights are perturbed along simplex-tangent directions
        // only; the feature and logit blocks cover every raw entry.
        let mut fd = finite_differences(&p, 1e-6, |q| {
            let mut q = q.clone();
            q.weights = p.weights.clone();
            let (l, r) = batch_loss(&q.to_dictionary(beta), &inst.batch, &inst.cfg).unwrap();
            degenerate |= plan_signature(&r) != sig;
            l
        });
        fd.weights.fill(0.0);
        if degenerate {
            continue;
        }
        assert!(relative_error(&g.features, &fd.features) <= 1e-3, "seed {seed}");
        assert!(relative_error(&g.logits, &fd.logits) <= 1e-3, "seed {seed}");
        for l in 0..2 {
            let h = 1e-6;
            let mut q = p.clone();
            q.weights[[l, 0]] += h;
            q.weights[[l, 1]] -= h;
            let up = batch_loss(&q.to_dictionary(beta), &inst.batch, &inst.cfg).unwrap().0;
            q.weights[[l, 0]] -= 2.0 * h;
            q.weights[[l, 1]] += 2.0 * h;
            let down = batch_loss(&q.to_dictionary(beta), &inst.batch, &inst.cfg).unwrap().0;
            let num = (up - down) / (2.0 * h);
            let ana = g.weights[[l, 0]] - g.weights[[l, 1]];
            assert!((num - ana).abs() <= 1e-3 * num.abs().max(ana.abs()).max(1e-8), "seed {seed}: {num} vs {ana}");
        }
        accepted += 1;
    }
}

#[test]
fn zero_gradient_when_atoms_equal_the_data() {
    // One atom equal to both domain batches: the reconstruction is exact and
    // every feature gradient vanishes.
    let x = array![[0.0, 1.0], [2.0, -1.0], [1.5, 0.5], [-1.0, -2.0]];
    let classes = [0, 1, 0, 1];
    let src = LabeledPointCloud::from_classes(x.clone(), &classes, 2).unwrap();
    let logits = src.labels().mapv(|v| if v > 0.5 { 30.0 } else { 0.0 });
    let dict = Dictionary::new(vec![Atom::new(x.clone(), logits).unwrap()], Array2::ones((2, 1)), 1.0).unwrap();
    let batch = MiniBatch {
        domains: vec![
            DomainBatch::Labeled { data: src, indices: vec![0, 1, 2, 3] },
            DomainBatch::Unlabeled { data: PointCloud::new(x).unwrap(), indices: vec![0, 1, 2, 3] },
        ],
        atom_indices: vec![vec![0, 1, 2, 3]],
        barycenter_seeds: vec![1, 2],
    };
    let cfg = DadilConfig { batch_size: 4, n_atoms: 1, atom_size: 4, ..Default::default() };
    let (loss, recs) = batch_loss(&dict, &batch, &cfg).unwrap();
    assert!(loss <= 1e-8, "{loss}");
    let g = envelope_gradients(&dict, &batch, &recs).unwrap();
    assert!(g.features[0].iter().all(|v| v.abs() <= 1e-8));
}

#[test]
fn envelope_gradients_reject_missing_plans() {
    let inst = grad_instance(3, 2, 4, 2);
    let (_, recs) = batch_loss(&inst.dict, &inst.batch, &inst.cfg).unwrap();
    assert!(envelope_gradients(&inst.dict, &inst.batch, &recs[..1]).is_err());
    let mut broken = recs.clone();
    broken[0].barycenter.plans.pop();
    assert!(envelope_gradients(&inst.dict, &inst.batch, &broken).is_err());
}

#[test]
fn batch_loss_matches_scripted_composition() {
    for seed in 0..5 {
        let inst = grad_instance(seed + 40, 2, 8, 2);
        let (loss, _) = batch_loss(&inst.dict, &inst.batch, &inst.cfg).unwrap();
        // Recompute: atom subsets -> labeled barycenter per domain -> OT.
        let atoms: Vec<LabeledPointCloud> = inst
            .dict
            .labeled_atoms()
            .unwrap()
            .iter()
            .zip(&inst.batch.atom_indices)
            .map(|(a, idx)| a.select(idx).unwrap())
            .collect();
        let mut total = 0.0;
        for (l, dom) in inst.batch.domains.iter().enumerate() {
            let bcfg = BarycenterConfig {
                n_support: 8,
                beta: inst.dict.beta(),
                seed: inst.batch.barycenter_seeds[l],
                ..inst.cfg.barycenter.clone()
            };
            let b = labeled_barycenter(&atoms, &inst.dict.domain_weights(l).unwrap(), &bcfg).unwrap();
            let c = match dom {
                DomainBatch::Labeled { data, .. } => labeled_cost(data, &b.labeled_cloud().unwrap(), inst.dict.beta()).unwrap(),
                DomainBatch::Unlabeled { data, .. } => feature_cost(data, &b.cloud().unwrap()).unwrap(),
            };
            total += wasserstein(&c).unwrap().0;
        }
        assert!((loss - total / 2.0).abs() <= 1e-8, "{loss} vs {}", total / 2.0);
    }
}

#[test]
fn batch_loss_is_zero_for_single_atom_equal_to_batch() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let src = blob(&mut rng, 10, [0.0, 0.0], 0.5);
    let logits = src.labels().mapv(|v| if v > 0.5 { 40.0 } else { 0.0 });
    for beta in [0.0, 0.3, 5.0] {
        let dict = Dictionary::new(
            vec![Atom::new(src.features().to_owned(), logits.clone()).unwrap()],
            Array2::ones((1, 1)),
            beta,
        )
        .unwrap();
        let batch = MiniBatch {
            domains: vec![DomainBatch::Labeled { data: src.clone(), indices: (0..10).collect() }],
            atom_indices: vec![(0..10).collect()],
            barycenter_seeds: vec![5],
        };
        let cfg = DadilConfig { batch_size: 10, n_atoms: 1, atom_size: 10, ..Default::default() };
        let (loss, _) = batch_loss(&dict, &batch, &cfg).unwrap();
        assert!(loss <= 1e-8, "beta {beta}: {loss}");
    }
}

fn small_cfg(seed: u64) -> DadilConfig {
    DadilConfig {
        n_iter: 20,
        batch_size: 10,
        n_atoms: 1,
        atom_size: 20,
        lr: 5.0,
        seed,
        ..Default::default()
    }
}

#[test]
fn degenerate_single_domain_problem_decreases_loss() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let source = blob(&mut rng, 60, [0.5, 0.5], 0.3);
    let target = source.cloud().clone();
    let cfg = small_cfg(3);
    let (dict, trace) = fit(std::slice::from_ref(&source), &target, &cfg).unwrap();
    assert!(trace.final_epoch_loss() < trace.first_epoch_loss());
    for row in dict.weights().outer_iter() {
        assert_eq!(row.to_vec(), vec![1.0]);
    }
    assert_eq!(trace.loss.len(), 20);
    assert!(trace.delta_x.iter().chain(&trace.delta_y).chain(&trace.delta_a).all(|&d| d >= 0.0));
}

#[test]
fn three_source_shift_halves_the_loss() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let sources: Vec<LabeledPointCloud> = [[0.0, 0.0], [1.0, 0.5], [2.0, 1.0]]
        .iter()
        .map(|&c| blob(&mut rng, 120, c, 0.3))
        .collect();
    let target = blob(&mut rng, 120, [1.5, 0.75], 0.3).cloud().clone();
    let cfg = DadilConfig { n_iter: 20, batch_size: 20, atom_size: 40, seed: 4, ..Default::default() };
    let (dict, trace) = fit(&sources, &target, &cfg).unwrap();
    assert!(trace.final_epoch_loss() < 0.5 * trace.first_epoch_loss(), "{:?}", trace.loss);
    for row in dict.weights().outer_iter() {
        assert!((row.sum() - 1.0).abs() <= 1e-9 && row.iter().all(|&w| w >= 0.0));
    }
    for atom in dict.atoms() {
        for row in atom.labels().outer_iter() {
            assert!((row.sum() - 1.0).abs() <= 1e-12);
        }
    }
}

#[test]
fn fit_is_deterministic_and_parallel_agrees() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let sources = vec![blob(&mut rng, 40, [0.0, 0.0], 0.3), blob(&mut rng, 40, [1.0, 0.0], 0.3)];
    let target = blob(&mut rng, 40, [2.0, 0.0], 0.3).cloud().clone();
    let cfg = DadilConfig { n_iter: 3, batch_size: 10, atom_size: 16, n_atoms: 2, seed: 8, ..Default::default() };
    let a = fit(&sources, &target, &cfg).unwrap();
    let b = fit(&sources, &target, &cfg).unwrap();
    assert_eq!(a.0, b.0);
    assert_eq!(a.1, b.1);
    let c = fit(&sources, &target, &DadilConfig { parallel: true, ..cfg }).unwrap();
    assert_eq!(a.0, c.0);
    assert_eq!(a.1, c.1);
}

#[test]
fn archive_round_trip_after_training() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let source = blob(&mut rng, 30, [0.0, 0.0], 0.3);
    let (dict, _) = fit(std::slice::from_ref(&source), source.cloud(), &DadilConfig { n_iter: 2, ..small_cfg(1) }).unwrap();
    let dir = std::env::temp_dir().join(format!("dadil-archive-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("dict.json");
    dict.save(&path).unwrap();
    assert_eq!(Dictionary::load(&path).unwrap(), dict);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn wbr_recovers_a_source_used_as_target() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let sources = vec![blob(&mut rng, 60, [0.0, 0.0], 0.2), blob(&mut rng, 60, [4.0, 3.0], 0.2)];
    let before: Vec<Array2<f64>> = sources.iter().map(|s| s.features().to_owned()).collect();
    let target = sources[0].cloud().clone();
    let cfg = DadilConfig { n_iter: 10, batch_size: 20, seed: 2, ..Default::default() };
    let alpha = wbr_fit(&sources, &target, &cfg).unwrap();
    assert!(alpha.as_slice()[0] >= 0.9, "{:?}", alpha.as_slice());
    for (s, b) in sources.iter().zip(&before) {
        assert_eq!(s.features(), b.view());
    }
}

#[test]
fn wbr_symmetric_sources_give_even_weights() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let sources = vec![blob(&mut rng, 60, [-2.0, 0.0], 0.2), blob(&mut rng, 60, [2.0, 0.0], 0.2)];
    let target = blob(&mut rng, 60, [0.0, 0.0], 0.2).cloud().clone();
    let cfg = DadilConfig { n_iter: 10, batch_size: 20, seed: 3, ..Default::default() };
    let alpha = wbr_fit(&sources, &target, &cfg).unwrap();
    for &w in alpha.as_slice() {
        assert!((w - 0.5).abs() <= 0.1, "{:?}", alpha.as_slice());
    }
}

#[test]
fn wbr_with_zero_iterations_is_rejected_and_one_epoch_stays_on_simplex() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let sources = vec![blob(&mut rng, 20, [0.0, 0.0], 0.2), blob(&mut rng, 20, [1.0, 0.0], 0.2)];
    let target = sources[1].cloud().clone();
    assert!(wbr_fit(&sources, &target, &DadilConfig { n_iter: 0, ..Default::default() }).is_err());
    let alpha = wbr_fit(&sources, &target, &DadilConfig { n_iter: 1, batch_size: 10, ..Default::default() }).unwrap();
    assert!((alpha.as_slice().iter().sum::<f64>() - 1.0).abs() <= 1e-9);
}

#[test]
fn init_weight_rows_have_varied_supports() {
    let cfg = DadilConfig { n_atoms: 4, atom_size: 2, ..Default::default() };
    let meta = DatasetsMeta { n_domains: 1000, dim: 1, n_classes: 2 };
    let d = init_dictionary(&cfg, meta, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let mut supports = std::collections::BTreeSet::new();
    for row in d.weights().outer_iter() {
        assert!((row.sum() - 1.0).abs() <= 1e-9);
        supports.insert(row.iter().map(|&w| w > 0.0).collect::<Vec<_>>());
    }
    assert!(supports.len() >= 2);
}

#[test]
fn source_batches_are_always_balanced() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let classes: Vec<usize> = (0..90).map(|i| usize::from(i >= 70)).collect();
    let x = Array2::from_shape_fn((90, 1), |(i, _)| i as f64);
    let data = LabeledPointCloud::from_classes(x, &classes, 2).unwrap();
    for _ in 0..500 {
        let (b, idx) = sample_source_batch(&data, 30, &mut rng).unwrap();
        assert_eq!(b.hard_classes().iter().filter(|&&c| c == 0).count(), 15);
        assert!(idx.iter().all(|&i| i < 90));
    }
}

#[test]
fn unlabeled_batches_are_uniform() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 20;
    let data = PointCloud::new(Array2::from_shape_fn((n, 1), |(i, _)| i as f64)).unwrap();
    let draws = 4000;
    let mut counts = vec![0usize; n];
    for _ in 0..draws {
        let (_, idx) = sample_unlabeled_batch(&data, 5, &mut rng).unwrap();
        let mut sorted = idx.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), 5);
        for i in idx {
            counts[i] += 1;
        }
    }
    // Each index appears with probability 1/4 per draw.
    let mean = draws as f64 * 0.25;
    let sd = (draws as f64 * 0.25 * 0.75).sqrt();
    for c in counts {
        assert!((c as f64 - mean).abs() <= 3.5 * sd, "{c} vs {mean}");
    }
}

#[test]
fn density_matches_all_pairs_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let atoms: Vec<PointCloud> = (0..3)
        .map(|_| PointCloud::new(Array2::from_shape_simple_fn((9, 3), || rng.random_range(-1.0..1.0))).unwrap())
        .collect();
    let mut total = 0.0;
    for a in &atoms {
        let x = a.support();
        for i in 0..x.nrows() {
            let mut d: Vec<f64> = (0..x.nrows())
                .filter(|&j| j != i)
                .map(|j| (0..3).map(|t| (x[[i, t]] - x[[j, t]]).powi(2)).sum())
                .collect();
            d.sort_by(f64::total_cmp);
            total += d[..5].iter().sum::<f64>();
        }
    }
    let expect = total / (5.0 * 27.0);
    assert!((density_score(&atoms).unwrap() - expect).abs() <= 1e-10);
}

#[test]
fn update_magnitudes_match_loops() {
    let cfg = DadilConfig { n_atoms: 2, atom_size: 5, ..Default::default() };
    let meta = DatasetsMeta { n_domains: 3, dim: 2, n_classes: 3 };
    let a = init_dictionary(&cfg, meta, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let b = init_dictionary(&cfg, meta, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    let (dx, dy, da) = update_magnitudes(&a, &b).unwrap();
    let softmax = |l: &[f64]| {
        let e: Vec<f64> = l.iter().map(|v| v.exp()).collect();
        let s: f64 = e.iter().sum();
        e.into_iter().map(|v| v / s).collect::<Vec<_>>()
    };
    let (mut ex, mut ey) = (0.0, 0.0);
    for k in 0..2 {
        let (pa, pb) = (&a.atoms()[k], &b.atoms()[k]);
        for i in 0..5 {
            for t in 0..2 {
                ex += (pa.features[[i, t]] - pb.features[[i, t]]).powi(2);
            }
            let ya = softmax(pa.logits.row(i).as_slice().unwrap());
            let yb = softmax(pb.logits.row(i).as_slice().unwrap());
            ey += ya.iter().zip(&yb).map(|(u, v)| (u - v).powi(2)).sum::<f64>();
        }
    }
    let mut ea = 0.0;
    for l in 0..3 {
        for k in 0..2 {
            ea += (a.weights()[[l, k]] - b.weights()[[l, k]]).powi(2);
        }
    }
    assert!((dx - ex / 2.0).abs() <= 1e-12);
    assert!((dy - ey / 2.0).abs() <= 1e-12);
    assert!((da - ea).abs() <= 1e-12);
}

#[test]
fn target_row_is_last_and_replaceable() {
    let cfg = DadilConfig { n_atoms: 3, atom_size: 4, ..Default::default() };
    let meta = DatasetsMeta { n_domains: 4, dim: 2, n_classes: 2 };
    let d = init_dictionary(&cfg, meta, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    assert_eq!(d.target_weights().as_slice(), d.weights().row(3).as_slice().unwrap());
    let v = SimplexVector::vertex(3, 1).unwrap();
    assert_eq!(d.with_target_weights(&v).unwrap().target_weights(), v);
}
