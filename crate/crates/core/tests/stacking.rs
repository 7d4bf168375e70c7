mod common;

use leadrisk::learners::{ClassifierSpec, LearnerKind};
use leadrisk::pipeline::{fit_stack, grouped_kfold, oof_predict, select_hyperparams, StackedModel};
use leadrisk::synth::{signal_dataset, GeneratorConfig, SignalConfig};

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        for &k in &idx[i..=j] {
            r[k] = (i + j) as f64 / 2.0;
        }
        i = j + 1;
    }
    r
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn meta_over_identical_columns_follows_the_single_model() {
    let (data, _) = signal_dataset(&SignalConfig { n_rows: 800, n_noise: 2, seed: 6, ..Default::default() }).unwrap();
    let plan = grouped_kfold(&data.groups, 5, 6).unwrap();
    let specs = vec![ClassifierSpec::new(LearnerKind::Lda); 3];
    let meta = ClassifierSpec::new(LearnerKind::Gbt).with("trees", 60.0).with("max_depth", 1.0);
    let model = fit_stack(&data, &specs, &meta, &plan, 6).unwrap();
    let oof = oof_predict(&specs, &data, &plan, 6).unwrap();
    let single = oof.column(0);
    assert_eq!(single, oof.column(1));
    assert_eq!(single, oof.column(2));

    let stacked = model.meta.predict_matrix(&oof.values).unwrap();
    // equal inputs give equal outputs
    for i in 0..single.len() {
        for j in 0..i.min(200) {
            if single[i] == single[j] {
                assert_eq!(stacked[i], stacked[j]);
            }
        }
    }
    let rho = pearson(&ranks(&single), &ranks(&stacked));
    assert!(rho > 0.95, "rank correlation {rho}");
}

#[test]
fn full_size_configuration_completes_and_serializes() {
    let loaded = common::load(&GeneratorConfig { n_parcels: 250, seed: 13, ..Default::default() });
    let plan = grouped_kfold(&loaded.data.groups, 3, 13).unwrap();
    let specs = ClassifierSpec::default_first_layer();
    let meta = ClassifierSpec::default_meta();
    assert_eq!(meta.gbt_params().unwrap().trees, 800);
    assert_eq!(meta.gbt_params().unwrap().max_depth, 8);
    let model = fit_stack(&loaded.data, &specs, &meta, &plan, 13).unwrap();
    let back = StackedModel::from_json(&model.to_json().unwrap()).unwrap();
    assert_eq!(back, model);
    let p = back.predict_rows(&loaded.data.rows).unwrap();
    assert_eq!(p, model.predict_rows(&loaded.data.rows).unwrap());
    assert!(p.iter().all(|v| *v > 0.0 && *v < 1.0));
}

#[test]
fn noise_only_grid_prefers_shallow_trees() {
    let grid = [1.0, 9.0]
        .map(|d| ClassifierSpec::new(LearnerKind::Gbt).with("trees", 40.0).with("max_depth", d))
        .to_vec();
    let mut shallow = 0;
    for seed in 0..7 {
        let (data, _) =
            signal_dataset(&SignalConfig { n_rows: 400, strength: 0.0, n_noise: 4, seed, ..Default::default() })
                .unwrap();
        let plan = grouped_kfold(&data.groups, 5, seed).unwrap();
        let selection = select_hyperparams(&grid, &data, &plan, seed).unwrap();
        assert_eq!(selection.len(), 1);
        if selection[0].best.gbt_params().unwrap().max_depth == 1 {
            shallow += 1;
        }
    }
    assert!(shallow >= 5, "shallow chosen {shallow} of 7");
}
