use branchflow_core::correlation::{paraxial_alpha, MediumCorrelation, SourceCoherence};
use branchflow_core::random_fields::{synthesize_potential, RngStream};
use branchflow_core::rays::{
    default_ray_dz, diffusion_prediction, determinant, jacobian_finite_difference, jacobian_tangent, ray_potential_grid, run_ray_ensemble, source_spectrum_density, trace_rays, wigner_histogram,
    DiffusionAccumulator, RayBundle, RayEnsemblePlan, RayMedium, RaySettings, RayState,
};
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

const SIGMA2: f64 = 1e-4;
const ELL: f64 = 25.0;

fn medium() -> MediumCorrelation {
    MediumCorrelation::gaussian(SIGMA2, ELL).unwrap()
}

fn alpha() -> f64 {
    paraxial_alpha(1.5)
}

fn z_c() -> f64 {
    ELL / (2.0 * SIGMA2.cbrt() * alpha().powf(2.0 / 3.0))
}

fn ray_medium(window: f64, z_max: f64, seed: u64, r: u64) -> RayMedium {
    let grid = ray_potential_grid(ELL, window, z_max, default_ray_dz(ELL)).unwrap();
    let field = synthesize_potential(grid, &medium(), RngStream::new(seed, r)).unwrap();
    RayMedium::from_field(&field).unwrap()
}

fn whole_steps(z: f64) -> f64 {
    let dz = default_ray_dz(ELL);
    (z / dz).round() * dz
}

/// Fine-step simulation of `dK = sqrt(G) dW`, `dX = 2 alpha K dz`: an
/// independent check of the closed-form variance and correlation constants.
#[test]
fn white_noise_oracle_constants() {
    let (g, a, z) = (1.3, 0.2, 2.0);
    let steps = 400;
    let h = z / steps as f64;
    let paths = 40_000;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
    let (mut sxx, mut skk, mut sxk) = (0.0, 0.0, 0.0);
    for _ in 0..paths {
        let (mut x, mut k) = (0.0f64, 0.0f64);
        for _ in 0..steps {
            let dk: f64 = StandardNormal.sample(&mut rng);
            let k_new = k + (g * h).sqrt() * dk;
            x += a * (k + k_new) * h;
            k = k_new;
        }
        sxx += x * x;
        skk += k * k;
        sxk += x * k;
    }
    let n = paths as f64;
    let p = diffusion_prediction(g, a, z);
    assert!((skk / n / p.var_k - 1.0).abs() < 0.03);
    assert!((sxx / n / p.var_x - 1.0).abs() < 0.03);
    let corr = sxk / (sxx * skk).sqrt();
    assert!((corr - 0.866_025).abs() < 0.01, "corr {corr}");
}

#[test]
fn jacobian_determinant_stays_one() {
    let z = whole_steps(4.0 * z_c());
    let m = ray_medium(40.0 * ELL, z, 3, 0);
    let settings = RaySettings {
        alpha: alpha(),
        dz: default_ray_dz(ELL),
    };
    let labels: Vec<(f64, f64)> = (0..40).map(|i| (i as f64 * ELL + 3.0, 0.0)).collect();
    let tangent = jacobian_tangent(&labels, &m, &settings, z).unwrap();
    let worst = tangent.iter().map(|j| (determinant(j) - 1.0).abs()).fold(0.0, f64::max);
    assert!(worst < 1e-4, "max |det J - 1| = {worst}");
    // Finite differences agree entry by entry, though their determinant
    // cancels badly once the entries are large.
    let fd = jacobian_finite_difference(&labels, &m, &settings, z, 1e-5, 1e-7).unwrap();
    for (a, b) in tangent.iter().zip(&fd) {
        for r in 0..2 {
            for c in 0..2 {
                let scale = a[r][c].abs().max(a[r][1 - c].abs()).max(1.0);
                assert!((a[r][c] - b[r][c]).abs() < 1e-5 * scale, "{a:?} vs {b:?}");
            }
        }
    }
    // The rhombus with these corners maps to a quadrilateral of area ratio
    // equal to the finite-difference determinant.
    let area = fd.iter().map(|j| (determinant(j) - 1.0).abs()).fold(0.0, f64::max);
    assert!(area < 1e-3, "label quadrilateral area changed by {area}");
    let small: Vec<(f64, f64)> = labels.iter().take(5).cloned().collect();
    let short = whole_steps(0.5 * z_c());
    for j in jacobian_finite_difference(&small, &m, &settings, short, 1e-4, 1e-6).unwrap() {
        assert!((determinant(&j) - 1.0).abs() < 1e-4);
    }
}

#[test]
fn rays_are_reversible() {
    let z = whole_steps(2.0 * z_c());
    let m = ray_medium(40.0 * ELL, z, 4, 0);
    let dz = default_ray_dz(ELL);
    let mut b = RayBundle::label_grid(40.0 * ELL, 64, -0.05, 0.05, 2).unwrap();
    trace_rays(&mut b, &m, &RaySettings { alpha: alpha(), dz }, &[z], |_| Ok(())).unwrap();
    trace_rays(&mut b, &m, &RaySettings { alpha: alpha(), dz: -dz }, &[0.0], |_| Ok(())).unwrap();
    for r in &b.rays {
        assert!((r.x - r.label_x).abs() <= 1e-8 * r.label_x.abs().max(1.0), "{r:?}");
        assert!((r.k - r.label_k).abs() <= 1e-8 * r.label_k.abs().max(1e-2), "{r:?}");
    }
}

#[test]
fn energy_drift_is_bounded_in_a_frozen_potential() {
    let grid = ray_potential_grid(ELL, 40.0 * ELL, 10.0 * ELL, default_ray_dz(ELL)).unwrap();
    let field = synthesize_potential(grid, &medium(), RngStream::new(9, 0)).unwrap();
    let m = RayMedium::frozen(&field, 0);
    let a = alpha();
    let settings = RaySettings {
        alpha: a,
        dz: default_ray_dz(ELL),
    };
    let mut b = RayBundle::label_grid(40.0 * ELL, 16, -0.02, 0.02, 3).unwrap();
    let h = |r: &RayState| a * r.k * r.k + m.potential(0, r.x);
    let h0: Vec<f64> = b.rays.iter().map(h).collect();
    let scale = SIGMA2.sqrt();
    let outputs: Vec<f64> = (1..=400).map(|i| i as f64 * 100.0 * settings.dz).collect();
    let mut drift = Vec::new();
    trace_rays(&mut b, &m, &settings, &outputs, |b| {
        let worst = b.rays.iter().zip(&h0).map(|(r, e)| (h(r) - e).abs()).fold(0.0, f64::max);
        drift.push(worst / scale);
        Ok(())
    })
    .unwrap();
    let first = drift[..200].iter().cloned().fold(0.0, f64::max);
    let second = drift[200..].iter().cloned().fold(0.0, f64::max);
    assert!(first < 1e-2, "relative energy error {first}");
    // No secular growth: the late-time envelope is not much larger.
    assert!(second < 2.0 * first + 1e-6, "{first} then {second}");
}

#[test]
fn diffusion_moments_match_closed_forms() {
    let zc = z_c();
    let outputs: Vec<f64> = [1.0, 2.0, 4.0].iter().map(|f| whole_steps(f * zc)).collect();
    let a = alpha();
    let window = 40.0 * ELL;
    let acc = (0..60u32)
        .into_par_iter()
        .map(|r| {
            let m = ray_medium(window, outputs[2], 11, r as u64);
            let mut b = RayBundle::label_grid(window, 100, 0.0, 0.0, 1).unwrap();
            let mut acc = DiffusionAccumulator::default();
            trace_rays(&mut b, &m, &RaySettings { alpha: a, dz: default_ray_dz(ELL) }, &outputs, |b| {
                acc.add(b, a, 0);
                Ok(())
            })
            .unwrap();
            acc
        })
        .collect::<Vec<_>>()
        .iter()
        .fold(DiffusionAccumulator::default(), |x, y| x.merge(y));
    let gamma0 = medium().Gamma(0.0).unwrap();
    assert!((gamma0 - 2.0 * std::f64::consts::PI.sqrt() * SIGMA2 / ELL).abs() < 1e-15);
    for mo in acc.moments() {
        assert_eq!(mo.realizations, 60);
        let p = diffusion_prediction(gamma0, a, mo.z);
        assert!(
            (mo.var_k.value - p.var_k).abs() < 3.0 * mo.var_k.stderr,
            "z = {}: Var K {} +- {} vs {}",
            mo.z,
            mo.var_k.value,
            mo.var_k.stderr,
            p.var_k
        );
        assert!(
            (mo.corr_xk.value - p.corr_xk).abs() < 3.0 * mo.corr_xk.stderr.max(1e-3),
            "z = {}: corr {} +- {}",
            mo.z,
            mo.corr_xk.value,
            mo.corr_xk.stderr
        );
        assert!((mo.var_x.value - p.var_x).abs() < 3.0 * mo.var_x.stderr, "Var X {} vs {}", mo.var_x.value, p.var_x);
        assert!(mo.mean_k.value.abs() < 3.0 * mo.mean_k.stderr + 1e-12);
    }
}

#[test]
fn histogram_starts_uniform_and_keeps_weight() {
    let window = 40.0 * ELL;
    let rho = 10.0;
    let src = SourceCoherence::gaussian_schell(rho).unwrap();
    let w_o = move |k: f64| source_spectrum_density(&src, k).unwrap();
    let kmax = 2.5 / rho;
    let (nx, nk) = (200, 64);
    let mut b = RayBundle::label_grid(window, nx, -kmax, kmax, nk).unwrap();
    let ldx = window / nx as f64;
    let ldk = 2.0 * kmax / nk as f64;
    let h0 = wigner_histogram(&b, &w_o, ldx, ldk, (-kmax, kmax), window, (20, 16), (-kmax, kmax)).unwrap();
    assert!(h0.label_tail_mass < 0.01);
    let mx = h0.marginal_x();
    for v in &mx {
        assert!((v / mx[0] - 1.0).abs() < 1e-12);
    }
    let mk = h0.marginal_k();
    let dk_bin = 2.0 * kmax / 16.0;
    for (j, v) in mk.iter().enumerate() {
        let kc = -kmax + (j as f64 + 0.5) * dk_bin;
        // Binned average of W_o, compared at the bin centre.
        assert!((v - w_o(kc)).abs() < 0.02 * w_o(0.0), "bin {j}: {v} vs {}", w_o(kc));
    }

    let z = whole_steps(z_c());
    let m = ray_medium(window, z, 5, 0);
    trace_rays(&mut b, &m, &RaySettings { alpha: alpha(), dz: default_ray_dz(ELL) }, &[z], |_| Ok(())).unwrap();
    let h = wigner_histogram(&b, &w_o, ldx, ldk, (-kmax, kmax), window, (20, 16), (-kmax, kmax)).unwrap();
    let binned: f64 = h.weights.iter().sum();
    assert!(((binned + h.out_of_range) / h.total - 1.0).abs() < 1e-12);
    assert!((h.total - h0.total).abs() < 1e-12 * h0.total);

    let narrow = wigner_histogram(&b, &w_o, ldx, ldk, (-0.3 / rho, 0.3 / rho), window, (4, 4), (-kmax, kmax)).unwrap();
    assert!(narrow.label_tail_mass > 0.01);
}

#[test]
fn mean_intensity_stays_flat() {
    let window = 40.0 * ELL;
    let z = whole_steps(2.0 * z_c());
    let bins = 10;
    let marg: Vec<Vec<f64>> = (0..40u32)
        .into_par_iter()
        .map(|r| {
            let m = ray_medium(window, z, 21, r as u64);
            let mut b = RayBundle::label_grid(window, 400, 0.0, 0.0, 1).unwrap();
            trace_rays(&mut b, &m, &RaySettings { alpha: alpha(), dz: default_ray_dz(ELL) }, &[z], |_| Ok(()))
                .unwrap();
            let h = wigner_histogram(&b, &|_| 1.0, window / 400.0, 1.0, (0.0, 0.0), window, (bins, 1), (-10.0, 10.0))
                .unwrap();
            h.marginal_x()
        })
        .collect();
    let n = marg.len() as f64;
    for i in 0..bins {
        let v: Vec<f64> = marg.iter().map(|m| m[i]).collect();
        let mean = v.iter().sum::<f64>() / n;
        let se = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();
        assert!((mean - 1.0).abs() < 3.0 * se, "bin {i}: {mean} +- {se}");
    }
}

#[test]
fn ray_ensemble_is_worker_independent_and_conserves_weight() {
    let zc = z_c();
    let plan = RayEnsemblePlan {
        medium: medium(),
        source: SourceCoherence::gaussian_schell(10.0).unwrap(),
        alpha: alpha(),
        window: 40.0 * ELL,
        dz: default_ray_dz(ELL),
        outputs: vec![whole_steps(0.5 * zc), whole_steps(zc)],
        n_medium: 6,
        rays_per_medium: 100,
        k_labels: 16,
        k_span: 2.5,
        bins: (20, 24),
        root_seed: 3,
    };
    let a = run_ray_ensemble(&plan, 1).unwrap();
    let b = run_ray_ensemble(&plan, 3).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.moments.len(), 2);
    assert_eq!(a.moments[1].realizations, 6);
    assert_eq!(a.moments[1].rays, 6 * 1600);
    let h = &a.histograms[1];
    let binned: f64 = h.weights.iter().sum();
    assert!(((binned + h.out_of_range) / h.total - 1.0).abs() < 1e-12);
    // Weight per unit length is the launched fraction of the unit spectrum.
    assert!((h.total / plan.window - (1.0 - h.label_tail_mass)).abs() < 2e-3, "{}", h.total / plan.window);
    assert!(h.out_of_range < 1e-3 * h.total);
}
