//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::time::{Duration, Instant};

use kernelmix::data::split_by_label;
use kernelmix::diagnostics::{complexity_bounds, empirical_sup_error, frobenius_concentration};
use kernelmix::mmd::{
    gaussian_mmd_closed_form, gaussian_mmd_squared, mixing_weights, mmd_biased, mmd_convergence_probe,
    mmd_unbiased_balanced, monte_carlo_gaussian_mmd_squared, ScoreOptions, VALIDATED_CLOSED_FORM,
};
use kernelmix::rff::build_feature_matrix;
use kernelmix::select::{
    compare_selection, kernel_feature_select, BandwidthGrid, FeatureSelectConfig, RelaxedObjective, SelectConfig,
    SelectionKernel,
};
use kernelmix::svm::{fit_weighted, objective, subgradient, train, train_exact, StepSchedule};
use kernelmix::synthetic::{identical_classes, planted_feature, two_gaussians, GaussianSampler, PointSampler, UniformBox};
use kernelmix::{rng, BaseKernel, FeatureBank, FeatureMatrix, KernelFamily, LabeledDataset, MixtureWeights, TrainConfig};
use ndarray::Array2;
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

// Independent reference kernels and estimators.

fn naive_kernel(family: KernelFamily, rho: f64, x: &[f64], y: &[f64]) -> f64 {
    match family {
        KernelFamily::Gaussian => {
            let mut s = 0.0;
            for i in 0..x.len() {
                s += (x[i] - y[i]) * (x[i] - y[i]);
            }
            (-s / (2.0 * rho * rho)).exp()
        }
        KernelFamily::Laplacian => {
            let mut s = 0.0;
            for i in 0..x.len() {
                s += (x[i] - y[i]) * (x[i] - y[i]);
            }
            (-s.sqrt() / rho).exp()
        }
        KernelFamily::Anova => {
            let mut p = 1.0;
            for i in 0..x.len() {
                p *= (-(x[i] - y[i]) * (x[i] - y[i]) / (2.0 * rho * rho)).exp();
            }
            p
        }
    }
}

fn rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.outer_iter().map(|r| r.to_vec()).collect()
}

fn naive_biased(family: KernelFamily, rho: f64, pos: &Array2<f64>, neg: &Array2<f64>) -> f64 {
    let (p, q) = (rows(pos), rows(neg));
    let k = |a: &[f64], b: &[f64]| naive_kernel(family, rho, a, b);
    let (np, nq) = (p.len() as f64, q.len() as f64);
    let mut xx = 0.0;
    for i in 0..p.len() {
        for j in 0..p.len() {
            if i != j {
                xx += k(&p[i], &p[j]);
            }
        }
    }
    let mut yy = 0.0;
    for i in 0..q.len() {
        for j in 0..q.len() {
            if i != j {
                yy += k(&q[i], &q[j]);
            }
        }
    }
    let mut xy = 0.0;
    for a in &p {
        for b in &q {
            xy += k(a, b);
        }
    }
    xx / (np * (np - 1.0)) + yy / (nq * (nq - 1.0)) - 2.0 * xy / (np * nq)
}

fn naive_unbiased(family: KernelFamily, rho: f64, pos: &Array2<f64>, neg: &Array2<f64>) -> f64 {
    let (x, y) = (rows(pos), rows(neg));
    let k = |a: &[f64], b: &[f64]| naive_kernel(family, rho, a, b);
    let n = x.len();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += k(&x[i], &x[j]) + k(&y[i], &y[j]) - k(&x[i], &y[j]) - k(&x[j], &y[i]);
            }
        }
    }
    s / (n * (n - 1)) as f64
}

fn random_matrix(r: &mut rng::Rng, n: usize, d: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn((n, d), || scale * (2.0 * r.random::<f64>() - 1.0))
}

// Criteria.

fn c1_oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let families = [KernelFamily::Gaussian, KernelFamily::Laplacian, KernelFamily::Anova];
    let mut r = rng::stream(101, 0);
    let mut worst = 0.0f64;
    for inst in 0..50 {
        let family = families[inst % 3];
        let rho = 0.3 + 2.0 * r.random::<f64>();
        let d = r.random_range(1..=4);
        let n_pos = r.random_range(2..=30);
        let n_neg = r.random_range(2..=30);
        let pos = random_matrix(&mut r, n_pos, d, 2.0);
        let neg = random_matrix(&mut r, n_neg, d, 2.0);
        let k = BaseKernel::new(family, rho).unwrap();
        worst = worst.max((mmd_biased(&k, &pos, &neg).unwrap().squared - naive_biased(family, rho, &pos, &neg)).abs());
        let m = n_pos.min(n_neg);
        let (p, q) = (pos.slice(ndarray::s![..m, ..]).to_owned(), neg.slice(ndarray::s![..m, ..]).to_owned());
        worst = worst.max((mmd_unbiased_balanced(&k, &p, &q).unwrap().squared - naive_unbiased(family, rho, &p, &q)).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(worst <= 1e-12 && secs < 5.0, format!("max abs diff {worst:.2e}, {secs:.2}s"))
}

fn c2_convergence_rate() -> Outcome {
    let start = Instant::now();
    let p = GaussianSampler::standard(2);
    let q = GaussianSampler::new(vec![1.0, 0.0], 1.0).unwrap();
    let k = BaseKernel::gaussian(1.0).unwrap();
    let sizes: Vec<usize> = (0..7).map(|i| 50 << i).collect();
    let population = gaussian_mmd_closed_form(&[0.0, 0.0], &[1.0, 0.0], 1.0, 1.0).unwrap();
    let table = mmd_convergence_probe(&p, &q, &k, &sizes, 20, 2024, population).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let pass = (-0.7..=-0.3).contains(&table.slope) && secs < 60.0;
    outcome(pass, format!("slope {:.3}, {secs:.1}s", table.slope))
}

fn c3_closed_form() -> Outcome {
    let settings: [(&[f64], &[f64], f64, f64); 4] = [
        (&[0.0], &[1.0], 1.0, 1.0),
        (&[0.0, 0.0], &[1.0, 0.5], 0.5, 1.0),
        (&[0.0, 0.0, 0.0], &[0.5, 0.5, 0.5], 2.0, 1.5),
        (&[1.0, -1.0], &[0.0, 0.0], 0.25, 0.5),
    ];
    let mut worst_z = 0.0f64;
    for (i, (mp, mq, s2, rho)) in settings.iter().enumerate() {
        let closed = gaussian_mmd_squared(mp, mq, *s2, *rho, VALIDATED_CLOSED_FORM).unwrap();
        let mc = monte_carlo_gaussian_mmd_squared(mp, mq, *s2, *rho, 1_000_000, 300 + i as u64).unwrap();
        worst_z = worst_z.max((closed - mc.mean).abs() / mc.std_error);
    }
    let (mp, mq, rho) = ([0.3, -0.2], [1.1, 0.4], 0.8);
    let dirac = gaussian_mmd_squared(&mp, &mq, 0.0, rho, VALIDATED_CLOSED_FORM).unwrap();
    let d2: f64 = mp.iter().zip(&mq).map(|(a, b)| (a - b) * (a - b)).sum();
    let dirac_err = (dirac - (2.0 - 2.0 * (-d2 / (2.0 * rho * rho)).exp())).abs();
    outcome(
        worst_z <= 3.0 && dirac_err <= 1e-10,
        format!("max |z| {worst_z:.2} over 4 Monte-Carlo settings, Dirac limit error {dirac_err:.1e}"),
    )
}

fn c4_rff_fidelity() -> Outcome {
    let start = Instant::now();
    let k = BaseKernel::gaussian(1.0).unwrap();
    let sampler = UniformBox { dim: 2, lo: 0.0, hi: 1.0 };
    let mut good = 0;
    let mut worst = 0.0f64;
    for seed in 0..100u64 {
        let points = sampler.sample(200, &mut rng::stream(seed, rng::streams::SYNTHETIC));
        let err = empirical_sup_error(&k, 2048, &points, 100, seed).unwrap();
        worst = worst.max(err);
        if err <= 0.05 {
            good += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(good >= 95 && secs < 30.0, format!("{good}/100 seeds within 0.05, worst {worst:.4}, {secs:.1}s"))
}

fn c5_concentration() -> Outcome {
    let x = GaussianSampler::standard(3).sample(100, &mut rng::stream(5, rng::streams::SYNTHETIC));
    let kernels = [BaseKernel::gaussian(1.0).unwrap()];
    let w = MixtureWeights::uniform(1);
    let seeds: Vec<u64> = (0..10).collect();
    let at = |draws| frobenius_concentration(&x, &kernels, &w, draws, &seeds).unwrap();
    let mid = at(4096);
    let (lo, hi) = (at(1024), at(16384));
    outcome(
        mid.max <= 0.05 && hi.mean < lo.mean,
        format!("max dev at D=4096 {:.2e}; mean D=1024 {:.2e} vs D=16384 {:.2e}", mid.max, lo.mean, hi.mean),
    )
}

fn c6_bound_ordering() -> Outcome {
    let mut r = rng::stream(606, 0);
    let mut violations = 0;
    for inst in 0..100u64 {
        let phi = if inst % 2 == 0 {
            let m = [1usize, 2, 4][(inst / 2 % 3) as usize];
            let families = [KernelFamily::Gaussian, KernelFamily::Laplacian, KernelFamily::Anova];
            let kernels: Vec<BaseKernel> = (0..m)
                .map(|l| BaseKernel::new(families[l % 3], 0.2 + 3.0 * r.random::<f64>()).unwrap())
                .collect();
            let raw: Vec<f64> = (0..m).map(|_| 0.05 + r.random::<f64>()).collect();
            let total: f64 = raw.iter().sum();
            let w = MixtureWeights::new(raw.iter().map(|v| v / total).collect()).unwrap();
            let x = random_matrix(&mut r, 50, 3, 2.0);
            let bank = FeatureBank::new(kernels, w, 32 / m, 3, inst).unwrap();
            build_feature_matrix(&x, &bank).unwrap()
        } else {
            let m = [1usize, 2, 4, 8][(inst / 2 % 4) as usize];
            FeatureMatrix::from_raw(random_matrix(&mut r, 50, 32, 1.5), 32 / m, m).unwrap()
        };
        if !complexity_bounds(&phi, 1.0).unwrap().ordering_holds() {
            violations += 1;
        }
    }
    outcome(violations == 0, format!("{violations} violations in 100 matrices"))
}

fn c7_simplex() -> Outcome {
    let mut r = rng::stream(707, 0);
    let families = [KernelFamily::Gaussian, KernelFamily::Laplacian, KernelFamily::Anova];
    let mut worst_sum = 0.0f64;
    let mut negative = 0;
    let mut bad_fallback = 0;
    for inst in 0..1000u64 {
        let m = r.random_range(1..=5);
        let kernels: Vec<BaseKernel> = (0..m)
            .map(|_| BaseKernel::new(families[r.random_range(0..3)], 0.1 + 3.0 * r.random::<f64>()).unwrap())
            .collect();
        let degenerate_case = inst % 10 == 0;
        let ds = if degenerate_case {
            identical_classes(r.random_range(2..=6), 2, inst).unwrap()
        } else {
            let n = r.random_range(4..=16);
            let mut labels: Vec<i8> = (0..n).map(|i| if i % 2 == 0 || r.random::<f64>() < 0.5 { 1 } else { -1 }).collect();
            labels[1] = -1;
            labels[3] = -1;
            LabeledDataset::new(random_matrix(&mut r, n, 2, 1.0), labels).unwrap()
        };
        let mixing = mixing_weights(&kernels, &split_by_label(&ds).unwrap(), &ScoreOptions::default()).unwrap();
        let w = mixing.weights.as_slice();
        worst_sum = worst_sum.max((w.iter().sum::<f64>() - 1.0).abs());
        negative += w.iter().filter(|&&v| v < 0.0).count();
        if degenerate_case && !(mixing.degenerate && w.iter().all(|&v| v == 1.0 / m as f64)) {
            bad_fallback += 1;
        }
    }
    outcome(
        worst_sum <= 1e-12 && negative == 0 && bad_fallback == 0,
        format!("max |sum-1| {worst_sum:.1e}, {negative} negative entries, {bad_fallback} bad fallbacks"),
    )
}

fn c8_svm() -> Outcome {
    let mut details = Vec::new();
    let mut pass = true;

    // (a) small radius keeps the projection active
    let ds = two_gaussians(200, 3, 1.0, 81).unwrap();
    let kernels = [BaseKernel::gaussian(1.0).unwrap(), BaseKernel::laplacian(2.0).unwrap()];
    let bank = FeatureBank::new(kernels.to_vec(), MixtureWeights::uniform(2), 64, 3, 81).unwrap();
    let phi = build_feature_matrix(ds.features(), &bank).unwrap();
    let cfg = TrainConfig { radius: 0.5, lambda: 1e-3, epochs: 20, batch_size: Some(8), ..TrainConfig::default() };
    let (beta, _, stats) = train(&phi, ds.labels(), &cfg).unwrap();
    let avg_norm = beta.dot(&beta).sqrt();
    let a = stats.max_beta_norm <= stats.beta_bound * (1.0 + 1e-12) && avg_norm <= stats.beta_bound * (1.0 + 1e-12);
    pass &= a;
    details.push(format!("(a) max |beta| {:.4} <= {:.4}", stats.max_beta_norm, stats.beta_bound));

    // (b) central differences at off-kink points
    let mut r = rng::stream(82, 0);
    let small = two_gaussians(20, 2, 1.0, 82).unwrap();
    let sbank = FeatureBank::new(kernels.to_vec(), MixtureWeights::uniform(2), 4, 2, 82).unwrap();
    let sphi = build_feature_matrix(small.features(), &sbank).unwrap();
    let y = small.labels();
    let dim = sphi.ncols();
    let mut checked = 0;
    let mut worst_b = 0.0f64;
    while checked < 100 {
        let beta: Vec<f64> = (0..dim).map(|_| 2.0 * r.random::<f64>() - 1.0).collect();
        let b0 = r.random::<f64>() - 0.5;
        let scale = 1.0 / (sphi.draws as f64).sqrt();
        let off_kink = (0..y.len()).all(|i| {
            let f: f64 = sphi.row(i).iter().zip(&beta).map(|(p, b)| p * b).sum::<f64>() * scale + b0;
            (1.0 - f64::from(y[i]) * f).abs() > 1e-3
        });
        if !off_kink {
            continue;
        }
        let (g, gb) = subgradient(&sphi, y, &beta, b0, 0.1);
        let h = 1e-6;
        let mut err = 0.0f64;
        let mut norm = gb.abs();
        for k in 0..=dim {
            let fd = if k < dim {
                let (mut up, mut dn) = (beta.clone(), beta.clone());
                up[k] += h;
                dn[k] -= h;
                (objective(&sphi, y, &up, b0, 0.1) - objective(&sphi, y, &dn, b0, 0.1)) / (2.0 * h)
            } else {
                (objective(&sphi, y, &beta, b0 + h, 0.1) - objective(&sphi, y, &beta, b0 - h, 0.1)) / (2.0 * h)
            };
            let an = if k < dim { g[k] } else { gb };
            err = err.max((fd - an).abs());
            norm = norm.max(an.abs());
        }
        worst_b = worst_b.max(err / norm);
        checked += 1;
    }
    pass &= worst_b <= 1e-5;
    details.push(format!("(b) max rel diff {worst_b:.1e}"));

    // (c) separable set within 50 epochs
    let sep = two_gaussians(100, 2, 3.0, 83).unwrap();
    let cfg = TrainConfig { lambda: 1e-3, epochs: 50, batch_size: Some(1), seed: 83, ..TrainConfig::default() };
    let model = fit_weighted(&sep, &[BaseKernel::gaussian(2.0).unwrap()], MixtureWeights::uniform(1), 256, &cfg).unwrap();
    let acc = model.evaluate(&sep).unwrap().accuracy;
    pass &= acc == 1.0;
    details.push(format!("(c) train accuracy {acc}"));

    // (d) random features against the exact-Gram reference
    let mut gaps = Vec::new();
    for seed in 0..3u64 {
        let all = two_gaussians(1100, 2, 0.5, 840 + seed).unwrap();
        let train_set = all.subset(&(0..100).collect::<Vec<_>>());
        let test_set = all.subset(&(100..1100).collect::<Vec<_>>());
        let k = [BaseKernel::gaussian(1.0).unwrap()];
        let cfg = TrainConfig {
            radius: 1e6,
            lambda: 1.0,
            epochs: 2000,
            batch_size: None,
            schedule: StepSchedule::Pegasos,
            seed,
            ..TrainConfig::default()
        };
        let rff = fit_weighted(&train_set, &k, MixtureWeights::uniform(1), 8192, &cfg).unwrap();
        let exact = train_exact(&train_set, &k, &MixtureWeights::uniform(1), &cfg).unwrap();
        let gap = (rff.evaluate(&test_set).unwrap().accuracy - exact.evaluate(&test_set).unwrap().accuracy).abs();
        gaps.push(gap);
    }
    let worst_d = gaps.iter().copied().fold(0.0, f64::max);
    pass &= worst_d <= 0.03;
    details.push(format!("(d) max accuracy gap {worst_d:.3} over 3 seeds"));
    outcome(pass, details.join("; "))
}

fn c9_model_selection() -> Outcome {
    let start = Instant::now();
    let grid = BandwidthGrid::default();
    let cfg = SelectConfig::default();
    let mut agree = 0;
    let mut acc_ok = 0;
    let (mut cv_time, mut mmd_time) = (0.0, 0.0);
    let mut worst_margin = f64::INFINITY;
    for seed in 0..10u64 {
        let ds = two_gaussians(400, 5, 2.0, seed).unwrap();
        let report = compare_selection(&ds, &grid, &cfg, seed).unwrap();
        if report.agreement {
            agree += 1;
        }
        let margin = report.test_accuracy_mixture - (report.best_cv_accuracy() - 0.02);
        worst_margin = worst_margin.min(margin);
        if margin >= 0.0 {
            acc_ok += 1;
        }
        cv_time += report.cv_seconds;
        mmd_time += report.mmd_seconds;
    }
    let ratio = mmd_time / cv_time;
    let secs = start.elapsed().as_secs_f64();
    outcome(
        agree >= 8 && acc_ok == 10 && ratio <= 0.1 && secs < 300.0,
        format!(
            "agreement {agree}/10, mixture accuracy ok {acc_ok}/10 (worst margin {worst_margin:+.3}), time ratio {ratio:.4}, {secs:.1}s"
        ),
    )
}

fn c10_feature_selection() -> Outcome {
    let kernel = BaseKernel::gaussian(1.0).unwrap();
    let mode = SelectionKernel::RandomFeatures { kernel, draws: 256 };
    let mut hits = 0;
    for seed in 0..10u64 {
        let ds = planted_feature(200, 10, seed).unwrap();
        let cfg = FeatureSelectConfig { m_sel: 2, seed, ..FeatureSelectConfig::default() };
        let mask = kernel_feature_select(ds.features(), ds.labels(), mode, &cfg).unwrap();
        if mask.mask[0] {
            hits += 1;
        }
    }

    let ds = planted_feature(200, 10, 99).unwrap();
    let mut r = rng::stream(1010, 0);
    let mut worst = 0.0f64;
    for mode in [mode, SelectionKernel::Exact { kernel }] {
        let obj = RelaxedObjective::new(ds.features(), ds.labels(), mode, 1e-3, 99).unwrap();
        for _ in 0..3 {
            let w: Vec<f64> = (0..10).map(|_| 0.05 + 0.3 * r.random::<f64>()).collect();
            let (_, g) = obj.value_and_gradient(&w).unwrap();
            let gmax = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for k in 0..10 {
                let h = 1e-5;
                let (mut up, mut dn) = (w.clone(), w.clone());
                up[k] += h;
                dn[k] -= h;
                let fd = (obj.value(&up).unwrap() - obj.value(&dn).unwrap()) / (2.0 * h);
                worst = worst.max((fd - g[k]).abs() / gmax);
            }
        }
    }
    outcome(
        hits >= 9 && worst <= 1e-4,
        format!("planted feature kept in {hits}/10 seeds, max gradient rel diff {worst:.1e}"),
    )
}

fn c11_determinism() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_kernelmix");
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let run = |args: &[&str]| {
        let out = Command::new(bin).args(args).output().unwrap();
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    };
    let data = root.join("data.csv");
    let data_s = data.to_str().unwrap();
    run(&["--seed", "11", "generate", "--preset", "two-gaussians", "--n", "120", "--d", "3", "--output", data_s]);
    let mut mismatches = Vec::new();
    let mut files = 0;
    for rep in 0..2 {
        let out = root.join(format!("run{rep}"));
        let o = |name: &str| out.join(name).to_str().unwrap().to_string();
        std::fs::create_dir_all(&out).unwrap();
        run(&["--seed", "11", "generate", "--preset", "planted-feature", "--n", "60", "--d", "4", "--output", &o("gen.csv")]);
        run(&["--seed", "11", "score", "--data", data_s, "--kernel", "gaussian:0.5,1,2", "--kernel", "laplacian:1", "--out-dir", &o("score")]);
        run(&["--seed", "11", "train", "--data", data_s, "--kernel", "gaussian:1,2", "--draws", "64", "--batch-size", "8", "--epochs", "10", "--standardize", "--out-dir", &o("train")]);
        run(&["predict", "--model", &o("train/model.json"), "--data", data_s, "--output", &o("pred.csv")]);
        run(&["--seed", "11", "select", "--preset", "two-gaussians", "--n", "80", "--grid-range", "1e-3:1e1:5", "--draws", "32", "--epochs", "10", "--folds", "3", "--out-dir", &o("select")]);
        run(&["--seed", "11", "features", "--preset", "planted-feature", "--n", "60", "--d", "4", "--kernel", "gaussian:1", "--draws", "32", "--steps", "10", "--out-dir", &o("features")]);
        run(&["--seed", "11", "diagnose", "--data", data_s, "--kernel", "gaussian:1", "--kernel", "anova:2", "--draws-sweep", "16,64", "--conc-seeds", "3", "--out-dir", &o("diagnose")]);
    }
    let outputs = [
        "gen.csv",
        "score/scores.json",
        "score/scores.csv",
        "train/model.json",
        "train/train_log.csv",
        "train/train_report.json",
        "pred.csv",
        "select/selection.json",
        "select/selection.csv",
        "features/features.json",
        "diagnose/diagnostics.json",
        "diagnose/complexity.csv",
        "diagnose/concentration.csv",
    ];
    for name in outputs {
        let a = std::fs::read(root.join("run0").join(name)).unwrap();
        let b = std::fs::read(root.join("run1").join(name)).unwrap();
        files += 1;
        if a != b {
            mismatches.push(name);
        }
    }
    outcome(mismatches.is_empty(), format!("{files} output files compared, mismatches {mismatches:?}"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("MMD estimators match naive oracles", c1_oracle_equivalence),
        ("MMD convergence rate", c2_convergence_rate),
        ("closed-form Gaussian MMD", c3_closed_form),
        ("random feature fidelity", c4_rff_fidelity),
        ("Frobenius concentration", c5_concentration),
        ("complexity bound ordering", c6_bound_ordering),
        ("mixture weights on the simplex", c7_simplex),
        ("SVM correctness", c8_svm),
        ("end-to-end bandwidth selection", c9_model_selection),
        ("kernel feature selection", c10_feature_selection),
        ("CLI determinism", c11_determinism),
    ];
    let mut failed = 0;
    let total = Instant::now();
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        let status = if result.pass { "PASS" } else { "FAIL" };
        if !result.pass {
            failed += 1;
        }
        println!(
            "{status} criterion {:>2}: {name} [{}] ({:.1}s)",
            i + 1,
            result.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!(
        "acceptance: {}/{} passed in {:?}",
        criteria.len() - failed,
        criteria.len(),
        Duration::from_secs(total.elapsed().as_secs())
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
