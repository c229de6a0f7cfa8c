use nalgebra::{DMatrix, DVector};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use sci_core::eval::bench::{reconstruct_with, SolverSettings};
use sci_core::eval::metrics::psnr;
use sci_core::eval::scenes::moving_square;
use sci_core::patch::{
    aggregate_patches, desci_solve, gmm_reconstruct, gmm_train, sparse_code_patch, DctDictionary, GmmModel,
    GroupMatchConfig, IstaOptions, Patch, PatchConfig, PatchSensing,
};
use sci_core::solvers::{gap_solve, Denoiser, SolverConfig};
use sci_core::{make_masks, DataCube, MaskKind, MaskStack, NoiseModel, SensingOperator};

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn draw(mean: &DVector<f64>, chol: &DMatrix<f64>, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let z = DVector::from_fn(mean.len(), |_, _| gauss(rng));
    (mean + chol * z).as_slice().to_vec()
}

/// Low-rank-plus-tiny-isotropic covariance in `d` dims.
fn low_rank_cov(d: usize, rank: usize, scale: f64, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let b = DMatrix::from_fn(d, rank, |_, _| gauss(rng));
    &b * b.transpose() * scale + DMatrix::identity(d, d) * 1e-8
}

#[test]
fn gmm_recovers_tiles_drawn_from_the_prior() {
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    let (n, nt, p) = (16, 4, 4);
    let cfg = PatchConfig::full_depth(p, nt, p);
    let d = cfg.patch_len();
    let mean = DVector::from_fn(d, |_, _| rng.random_range(0.35..0.65));
    // small enough that draws stay inside [0, 1]
    let cov = low_rank_cov(d, 6, 0.0004, &mut rng);
    let chol = cov.clone().cholesky().unwrap().l();
    let model = GmmModel::new(vec![1.0], vec![mean.clone()], vec![cov]).unwrap();

    let tiles: Vec<Patch> = cfg
        .positions((n, n, nt))
        .into_iter()
        .map(|index| Patch {
            index,
            data: draw(&mean, &chol, &mut rng),
        })
        .collect();
    let truth = aggregate_patches(&tiles, (n, n, nt), &cfg).unwrap();
    let op = SensingOperator::cacti(make_masks(MaskKind::CoveredBernoulli { p: 0.5 }, n, n, nt, 41).unwrap());
    let y = op.forward(&truth, &NoiseModel::noiseless()).unwrap();
    let est = gmm_reconstruct(&op, &y, &model, &cfg, 0.0).unwrap();
    let p_gmm = psnr(&truth, &est, 1.0).unwrap();
    assert!(p_gmm >= 40.0, "{p_gmm:.2} dB");
    let again = gmm_reconstruct(&op, &y, &model, &cfg, 0.0).unwrap();
    assert_eq!(est, again);
}

#[test]
fn gmm_identity_sensing_returns_the_measurement() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let n = 8;
    let cfg = PatchConfig::full_depth(4, 1, 2);
    let d = cfg.patch_len();
    let means = vec![DVector::from_element(d, 0.2), DVector::from_element(d, 0.8)];
    let covs = vec![DMatrix::identity(d, d) * 0.05; 2];
    let model = GmmModel::new(vec![0.4, 0.6], means, covs).unwrap();
    let truth = DataCube::from_fn(n, n, 1, |_, _, _| rng.random_range(0.0..1.0)).unwrap();
    let ones = MaskStack::from_values(n, n, 1, vec![1.0; n * n]).unwrap();
    let op = SensingOperator::cacti(ones);
    let y = op.forward(&truth, &NoiseModel::noiseless()).unwrap();
    let est = gmm_reconstruct(&op, &y, &model, &cfg, 0.0).unwrap();
    let worst = est
        .as_slice()
        .iter()
        .zip(y.as_slice())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(worst <= 1e-3, "{worst:.2e}");
}

#[test]
fn em_single_gaussian_mean_and_normalization() {
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    let sigma = 0.5;
    let data: Vec<Vec<f64>> = (0..400)
        .map(|_| vec![1.0 + sigma * gauss(&mut rng), -2.0 + sigma * gauss(&mut rng)])
        .collect();
    let n = data.len() as f64;
    let sample_mean = [0, 1].map(|c| data.iter().map(|v| v[c]).sum::<f64>() / n);
    let fit = gmm_train(&data, 1, 10, 1, 1e-6).unwrap().model;
    for c in 0..2 {
        assert!((fit.means()[0][c] - sample_mean[c]).abs() <= 4.0 * sigma / n.sqrt());
    }
    assert!((fit.weights().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
}

#[test]
fn em_separates_clusters_ten_apart() {
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let data: Vec<Vec<f64>> = (0..300)
        .map(|i| {
            let c = if i % 2 == 0 { -5.0 } else { 5.0 };
            vec![c + 0.3 * gauss(&mut rng), c + 0.3 * gauss(&mut rng)]
        })
        .collect();
    let out = gmm_train(&data, 2, 30, 9, 1e-6).unwrap();
    let mut found: Vec<f64> = out.model.means().iter().map(|m| m[0]).collect();
    found.sort_by(f64::total_cmp);
    assert!((found[0] + 5.0).abs() < 0.1 && (found[1] - 5.0).abs() < 0.1, "{found:?}");
    assert!((out.model.weights().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    for w in out.log_likelihood.windows(2) {
        assert!(w[1] >= w[0] - 1e-9);
    }
}

fn random_blocks(pixels: usize, nt: usize, rng: &mut ChaCha8Rng) -> PatchSensing {
    PatchSensing::Blocks {
        pixels,
        masks: (0..pixels * nt).map(|_| rng.random_range(0.5..1.0)).collect(),
    }
}

#[test]
fn sparse_large_lambda_gives_zero_code() {
    let mut rng = ChaCha8Rng::seed_from_u64(45);
    let phi = random_blocks(16, 2, &mut rng);
    let dict = DctDictionary::new(4, 2).unwrap();
    let y = DVector::from_fn(16, |_, _| rng.random_range(0.0..2.0));
    let corr = phi.mul(dict.atoms()).transpose() * &y;
    let code = sparse_code_patch(&y, &phi, &dict, corr.amax(), &IstaOptions::default()).unwrap();
    assert!(code.coefficients.iter().all(|c| *c == 0.0));
}

#[test]
fn sparse_zero_lambda_inverts_square_sensing() {
    let mut rng = ChaCha8Rng::seed_from_u64(46);
    let phi = random_blocks(16, 1, &mut rng);
    let dict = DctDictionary::new(4, 1).unwrap();
    let y = DVector::from_fn(16, |_, _| rng.random_range(0.0..1.0));
    let code = sparse_code_patch(&y, &phi, &dict, 0.0, &IstaOptions { max_iters: 5000, tol: 0.0 }).unwrap();
    let exact = phi.mul(dict.atoms()).lu().solve(&y).unwrap();
    assert!((code.coefficients - exact).amax() <= 1e-6);
}

#[test]
fn sparse_recovers_a_one_sparse_code() {
    let mut rng = ChaCha8Rng::seed_from_u64(47);
    let phi = random_blocks(16, 2, &mut rng);
    let dict = DctDictionary::new(4, 2).unwrap();
    let j = 5;
    let mut truth = DVector::zeros(dict.dim());
    truth[j] = 2.0;
    let y = phi.mul(dict.atoms()) * &truth;
    let code = sparse_code_patch(&y, &phi, &dict, 0.01, &IstaOptions { max_iters: 5000, tol: 0.0 }).unwrap();
    let c = &code.coefficients;
    assert!((c[j] - 2.0).abs() <= 0.2, "{}", c[j]);
    let off = (0..c.len()).filter(|&i| i != j).map(|i| c[i].abs()).fold(0.0, f64::max);
    assert!(off < 0.1 * c[j].abs(), "largest off-support coefficient {off}");
}

#[test]
fn desci_with_zero_thresholds_is_plain_gap() {
    let truth = moving_square(16, 16, 3, 1).unwrap();
    let op = SensingOperator::cacti(make_masks(MaskKind::CoveredBernoulli { p: 0.5 }, 16, 16, 3, 2).unwrap());
    let y = op.forward(&truth, &NoiseModel::noiseless()).unwrap();
    let cfg = GroupMatchConfig {
        patch_size: 4,
        ref_stride: 2,
        window: 8,
        group_size: 8,
        sigma_schedule: vec![0.0; 6],
        ..GroupMatchConfig::default()
    };
    let (desci, _) = desci_solve(&op, &y, &cfg, None, None).unwrap();
    let plain = SolverConfig {
        max_iters: 6,
        tol: 0.0,
        denoiser: Denoiser::Identity,
        ..SolverConfig::default()
    };
    let (gap, _) = gap_solve(&op, &y, &plain, None).unwrap();
    let worst = desci
        .as_slice()
        .iter()
        .zip(gap.as_slice())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(worst <= 1e-12, "{worst:.2e}");
}

#[test]
fn desci_matches_or_beats_gap_tv_and_repeats() {
    let truth = moving_square(32, 32, 4, 3).unwrap();
    let op = SensingOperator::cacti(make_masks(MaskKind::CoveredBernoulli { p: 0.5 }, 32, 32, 4, 3).unwrap());
    let y = op.forward(&truth, &NoiseModel::noiseless()).unwrap();
    let settings = SolverSettings::default();
    let gap = reconstruct_with("gap-tv", &op, &y, &settings, None, None).unwrap().cube;
    let desci = reconstruct_with("desci", &op, &y, &settings, None, None).unwrap().cube;
    let pg = psnr(&truth, &gap, 1.0).unwrap();
    let pd = psnr(&truth, &desci, 1.0).unwrap();
    assert!(pd >= pg, "desci {pd:.2} dB vs gap-tv {pg:.2} dB");
    let again = reconstruct_with("desci", &op, &y, &settings, None, None).unwrap().cube;
    assert_eq!(desci, again);
}
