use super::*;
use crate::fixtures::{planted_pair, random_orthogonal, source_space};
use crate::linalg::orthogonality_error;
use crate::util::rng;

fn ctx(rows: &[&[f64]]) -> ContextualMatrix {
    let n = rows.len();
    let d = rows[0].len();
    ContextualMatrix::new(DMatrix::from_fn(n, d, |i, j| rows[i][j])).unwrap()
}

fn random_params(d0: usize, d: usize, seed: u64) -> SpringParams {
    let mut p = SpringParams::init(d0, d, seed);
    let mut r = rng(seed ^ 77);
    for i in 0..p.n_params() {
        *p.param_mut(i) += r.random_range(-0.5..0.5);
    }
    p
}

struct Instance {
    ex: EmbeddingMatrix,
    ey: EmbeddingMatrix,
    ax: ContextualMatrix,
    ay: ContextualMatrix,
    triples: Vec<Triple>,
}

fn small_instance(seed: u64) -> Instance {
    let (n, d0, d) = (5, 7, 4);
    Instance {
        ex: EmbeddingMatrix::new(source_space(n, d, seed)).unwrap(),
        ey: EmbeddingMatrix::new(source_space(n, d, seed + 1)).unwrap(),
        ax: ContextualMatrix::new(source_space(n, d0, seed + 2)).unwrap(),
        ay: ContextualMatrix::new(source_space(n, d0, seed + 3)).unwrap(),
        triples: vec![
            Triple { src: 0, pos: 1, neg: 2 },
            Triple { src: 1, pos: 0, neg: 4 },
            Triple { src: 3, pos: 3, neg: 1 },
            Triple { src: 4, pos: 2, neg: 2 },
            Triple { src: 0, pos: 1, neg: 3 },
        ],
    }
}

fn loss_of(inst: &Instance, px: &SpringParams, py: &SpringParams, margin: f64) -> LossAndGrad {
    contrastive_loss(
        Side { static_mapped: &inst.ex, contextual: &inst.ax, params: px },
        Side { static_mapped: &inst.ey, contextual: &inst.ay, params: py },
        &inst.triples,
        margin,
    )
    .unwrap()
}

#[test]
fn zero_network_gives_zero_offsets() {
    let a = ContextualMatrix::new(source_space(6, 3, 1)).unwrap();
    let off = spring_forward(&a, &SpringParams::zeros(3, 2)).unwrap();
    assert!(off.iter().all(|&v| v == 0.0));
    assert_eq!(off.shape(), (6, 2));
}

#[test]
fn offsets_lie_strictly_inside_unit_interval() {
    let a = ContextualMatrix::new(source_space(20, 5, 2) * 50.0).unwrap();
    let off = spring_forward(&a, &random_params(5, 3, 2)).unwrap();
    assert!(off.iter().all(|v| v.abs() < 1.0));
    assert!(spring_forward(&a, &SpringParams::zeros(4, 3)).is_err());
}

#[test]
fn gradients_match_central_differences() {
    for seed in 0..3 {
        let inst = small_instance(seed);
        let px = random_params(7, 4, seed + 10);
        let py = random_params(7, 4, seed + 20);
        let margin = 3.0;
        let analytic = loss_of(&inst, &px, &py, margin);
        let h = 1e-6;
        for (side, grad) in [(0, &analytic.grad_x), (1, &analytic.grad_y)] {
            let g = grad.values();
            for (i, &a) in g.iter().enumerate() {
                let shifted = |delta: f64| {
                    let (mut qx, mut qy) = (px.clone(), py.clone());
                    *(if side == 0 { &mut qx } else { &mut qy }).param_mut(i) += delta;
                    loss_of(&inst, &qx, &qy, margin).loss
                };
                let numeric = (shifted(h) - shifted(-h)) / (2.0 * h);
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
                assert!(rel < 1e-4, "seed {seed} side {side} param {i}: {a} vs {numeric}");
            }
        }
    }
}

#[test]
fn unified_examples() {
    let e = EmbeddingMatrix::new(source_space(6, 3, 4)).unwrap();
    let a = ContextualMatrix::new(source_space(6, 5, 5)).unwrap();

    let p = SpringParams::init(5, 3, 1);
    assert_eq!(build_unified(&e, &a, &p).unwrap(), e);

    let mut zero = SpringParams::zeros(5, 3);
    zero.gamma.fill(1.0);
    assert_eq!(build_unified(&e, &a, &zero).unwrap(), e);

    let p = random_params(5, 3, 6);
    let u = build_unified(&e, &a, &p).unwrap();
    let off = spring_forward(&a, &p).unwrap();
    for i in 0..6 {
        for j in 0..3 {
            let want = p.gamma[j] * off[(i, j)];
            assert!((u.matrix()[(i, j)] - e.matrix()[(i, j)] - want).abs() < 1e-8);
        }
    }
    assert!(build_unified(&e.head(5), &a, &p).is_err());
}

#[test]
fn mapping_identical_contextual_spaces() {
    let a = ContextualMatrix::new(source_space(30, 6, 8)).unwrap();
    let (mx, my) = map_contextual(&a, &a, &Dictionary::identity(30)).unwrap();
    assert!((mx.matrix() - my.matrix()).amax() < 1e-8);
    assert!(map_contextual(&a, &a, &Dictionary::default()).is_err());
}

#[test]
fn mapping_recovers_planted_contextual_rotation() {
    let ax = source_space(40, 6, 9);
    let o = random_orthogonal(6, 10);
    let ay = &ax * &o;
    let a_x = ContextualMatrix::new(ax.clone()).unwrap();
    let a_y = ContextualMatrix::new(ay).unwrap();
    let d = Dictionary::identity(40);
    let (mx, my) = map_contextual(&a_x, &a_y, &d).unwrap();
    let residual = (mx.matrix() - my.matrix()).norm();
    assert!(residual < 1e-6, "residual {residual}");

    let nx = normalize(a_x.as_embedding()).unwrap();
    let ny = normalize(a_y.as_embedding()).unwrap();
    let m = solve_orthogonal_mapping(&nx, &ny, &d).unwrap();
    assert!(orthogonality_error(&m.w_x) < 1e-6);
    assert!(orthogonality_error(&m.w_z) < 1e-6);
}

/// Aligned static spaces with independent contextual spaces.
fn aligned_fixture(n: usize, seed: u64) -> (EmbeddingMatrix, EmbeddingMatrix, ContextualMatrix, ContextualMatrix, Vec<usize>) {
    let p = planted_pair(n, 10, 0.0, seed);
    let ey = EmbeddingMatrix::new(p.z.matrix() * p.rotation.transpose()).unwrap();
    let ax = ContextualMatrix::new(source_space(n, 12, seed + 1)).unwrap();
    let ay = ContextualMatrix::new(source_space(n, 12, seed + 2)).unwrap();
    (p.x, ey, ax, ay, p.target_of)
}

#[test]
fn zero_margin_changes_nothing() {
    let (ex, ey, ax, ay, target_of) = aligned_fixture(60, 3);
    let cfg = CscbliConfig {
        margin: 0.0,
        learning_rate: 0.5,
        ..Default::default()
    };
    let model = train_cscbli(&ex, &ey, &ax, &ay, &cfg).unwrap();
    assert!(model.loss_trace.iter().all(|&l| l == 0.0));
    assert_eq!(model.src, SpringParams::init(12, 10, derive_seed(0, &[0])));
    assert_eq!(model.trg, SpringParams::init(12, 10, derive_seed(0, &[1])));
    assert_eq!(model.dictionary, csls_dictionary(&ex, &ey, &cfg));
    assert_eq!(model.dictionary, Dictionary::from_pairs(target_of.into_iter().enumerate()));
    assert!(model.stabilized);
    assert_eq!(model.rounds, 1);
}

#[test]
fn loss_decreases_on_fixed_batch() {
    let inst = small_instance(5);
    let mut px = SpringParams::init(7, 4, 1);
    let mut py = SpringParams::init(7, 4, 2);
    let mut losses = Vec::new();
    for _ in 0..=10 {
        let lg = loss_of(&inst, &px, &py, 1.0);
        losses.push(lg.loss);
        px.add_scaled(&lg.grad_x, -1e-3);
        py.add_scaled(&lg.grad_y, -1e-3);
    }
    assert!(losses.windows(2).all(|w| w[1] < w[0]), "{losses:?}");
}

#[test]
fn training_is_deterministic_and_detects_divergence() {
    let (ex, ey, ax, ay, _) = aligned_fixture(50, 4);
    let cfg = CscbliConfig {
        margin: 1.5,
        refine_rounds: 2,
        ..Default::default()
    };
    let a = train_cscbli(&ex, &ey, &ax, &ay, &cfg).unwrap();
    let b = train_cscbli(&ex, &ey, &ax, &ay, &cfg).unwrap();
    assert_eq!(a, b);
    assert!(a.src.gamma.iter().any(|&g| g != 0.0));

    let wild = CscbliConfig {
        learning_rate: 1e308,
        ..cfg
    };
    assert!(matches!(train_cscbli(&ex, &ey, &ax, &ay, &wild), Err(Error::Diverged(_))));
}

#[test]
fn config_validation() {
    assert!(CscbliConfig::default().validate().is_ok());
    let bad = [
        CscbliConfig { learning_rate: 0.0, ..Default::default() },
        CscbliConfig { margin: -0.1, ..Default::default() },
        CscbliConfig { lambda: -1.0, ..Default::default() },
        CscbliConfig { batch_size: 0, ..Default::default() },
    ];
    assert!(bad.iter().all(|c| c.validate().is_err()));
}

#[test]
fn interpolation_flips_two_by_two() {
    let u = EmbeddingMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
    let a0x = ctx(&[&[1.0, 0.0], &[0.0, 1.0]]);
    let a0y = ctx(&[&[0.0, 1.0], &[1.0, 0.0]]);
    let s = interpolated_scores(&u, &u, &a0x, &a0y, 2.0).unwrap();
    let table = [[1.0, 2.0], [2.0, 1.0]];
    for i in 0..2 {
        for j in 0..2 {
            assert!((s[(i, j)] - table[i][j]).abs() < 1e-12);
        }
    }
    let ranked = interpolate_rank(&u, &u, &a0x, &a0y, 2.0, 1).unwrap();
    assert_eq!(ranked[0][0].0, 1);
    assert_eq!(ranked[1][0].0, 0);
    let plain = interpolate_rank(&u, &u, &a0x, &a0y, 0.0, 1).unwrap();
    assert_eq!((plain[0][0].0, plain[1][0].0), (0, 1));
}

#[test]
fn zero_lambda_matches_unified_cosine_ranking() {
    let ux = EmbeddingMatrix::new(source_space(25, 4, 11)).unwrap();
    let uy = EmbeddingMatrix::new(source_space(30, 4, 12)).unwrap();
    let a0x = ContextualMatrix::new(source_space(25, 6, 13)).unwrap();
    let a0y = ContextualMatrix::new(source_space(30, 6, 14)).unwrap();
    let ranked = interpolate_rank(&ux, &uy, &a0x, &a0y, 0.0, 30).unwrap();
    let plain = Scorer::new(ux.matrix(), uy.matrix(), Retrieval::NearestNeighbor, 1).top_k(30);
    assert_eq!(ranked, plain);
}

#[test]
fn scores_ignore_row_scaling() {
    let ux = source_space(10, 4, 15);
    let uy = source_space(12, 4, 16);
    let a0x = source_space(10, 5, 17);
    let a0y = source_space(12, 5, 18);
    let scale_rows = |m: &DMatrix<f64>, seed: u64| {
        let mut r = rng(seed);
        let mut out = m.clone();
        for mut row in out.row_iter_mut() {
            row *= r.random_range(0.1..10.0);
        }
        out
    };
    let e = |m: DMatrix<f64>| EmbeddingMatrix::new(m).unwrap();
    let c = |m: DMatrix<f64>| ContextualMatrix::new(m).unwrap();
    let s1 = interpolated_scores(&e(ux.clone()), &e(uy.clone()), &c(a0x.clone()), &c(a0y.clone()), 0.7).unwrap();
    let s2 = interpolated_scores(
        &e(scale_rows(&ux, 1)),
        &e(scale_rows(&uy, 2)),
        &c(scale_rows(&a0x, 1)),
        &c(scale_rows(&a0y, 2)),
        0.7,
    )
    .unwrap();
    assert!((s1 - s2).amax() < 1e-12);
}
