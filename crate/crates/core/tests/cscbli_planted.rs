use bli_core::cscbli::{interpolated_scorer, map_contextual, train_cscbli, ContextualMatrix, CscbliConfig};
use bli_core::fixtures::corrupted_pair;
use bli_core::retrieval::Scorer;
use bli_core::Retrieval;

fn accuracy(pred: &[usize], target_of: &[usize]) -> f64 {
    pred.iter().zip(target_of).filter(|(p, t)| p == t).count() as f64 / pred.len() as f64
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

#[test]
fn contextual_signal_repairs_corrupted_static_rows() {
    let mut before = Vec::new();
    let mut after = Vec::new();
    for seed in 0..5 {
        let f = corrupted_pair(300, 20, 32, 0.2, seed);
        let cfg = CscbliConfig { seed, ..Default::default() };
        let static_pred = Scorer::new(f.static_x.matrix(), f.static_z.matrix(), Retrieval::Csls, 10).argmax(None);
        before.push(accuracy(&static_pred, &f.target_of));

        let ax = ContextualMatrix::new(f.context_x.clone()).unwrap();
        let az = ContextualMatrix::new(f.context_z.clone()).unwrap();
        let model = train_cscbli(&f.static_x, &f.static_z, &ax, &az, &cfg).unwrap();
        let (ux, uz) = model.unified(&f.static_x, &f.static_z, &ax, &az).unwrap();
        let (a0x, a0z) = map_contextual(&ax, &az, &model.dictionary).unwrap();
        let pred = interpolated_scorer(&ux, &uz, &a0x, &a0z, cfg.lambda, Retrieval::Csls, 10)
            .unwrap()
            .argmax(None);
        after.push(accuracy(&pred, &f.target_of));
    }
    assert!(median(after.clone()) > median(before.clone()), "{before:?} -> {after:?}");
}
