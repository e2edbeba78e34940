//! The `check` subcommand: a quick battery of the library invariants with
//! one ok/FAIL line per check.

use std::sync::Arc;

use aduq::covariance::CovarianceModel;
use aduq::diffusion::{diffusion_tensor, eigen_range};
use aduq::fem::{assemble_system, solve_cg, BvpData, FeFunction};
use aduq::kl::{build_kl, pivoted_cholesky, DenseSymmetric};
use aduq::mesh::{build_cube_mesh, classify_boundary_face, BoundaryTag};
use aduq::quadrature::{combination_coefficient, gauss_legendre_1d, halton_rule, qmc_sample_count};
use aduq::uq::estimate_moments;

type CheckFn = fn() -> Result<(), String>;

fn ensure(cond: bool, msg: &str) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.to_string())
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn mesh_counts() -> Result<(), String> {
    for level in 0..=2u32 {
        let mesh = build_cube_mesh::<f64>(level).map_err(|e| e.to_string())?;
        ensure(
            mesh.tet_count() == 48 * 8usize.pow(level),
            &format!("tet count at level {level}"),
        )?;
        ensure(
            close(mesh.total_volume(), 1.0, 1e-12),
            &format!("volume at level {level}"),
        )?;
        ensure(
            close(mesh.boundary_area(BoundaryTag::Gamma2), 4.0, 1e-12),
            &format!("Gamma2 area at level {level}"),
        )?;
    }
    Ok(())
}

fn boundary_classification() -> Result<(), String> {
    ensure(
        classify_boundary_face([1.0, 0.3, 0.7]).ok() == Some(BoundaryTag::Gamma0)
            && classify_boundary_face([0.0, 0.5, 0.5]).ok() == Some(BoundaryTag::Gamma1)
            && classify_boundary_face([0.5, 0.5, 0.0]).ok() == Some(BoundaryTag::Gamma2)
            && classify_boundary_face([0.5, 0.5, 0.5]).is_err(),
        "boundary tag classification",
    )
}

fn gauss_rules() -> Result<(), String> {
    let (x1, w1) = gauss_legendre_1d::<f64>(1).map_err(|e| e.to_string())?;
    ensure(x1 == vec![0.0] && w1 == vec![1.0], "1-point rule")?;
    let (x2, w2) = gauss_legendre_1d::<f64>(2).map_err(|e| e.to_string())?;
    let m2: f64 = x2.iter().zip(&w2).map(|(&x, &w)| w * x * x).sum();
    ensure(close(m2, 1.0 / 3.0, 1e-15), "2-point second moment")
}

fn halton_prefix() -> Result<(), String> {
    let rule = halton_rule::<f64>(2, 3).map_err(|e| e.to_string())?;
    ensure(
        rule.node(0)[0] == 0.0
            && close(rule.node(0)[1], -1.0 / 3.0, 1e-15)
            && rule.node(1)[0] == -0.5
            && rule.node(2)[0] == 0.5,
        "Halton prefix",
    )
}

fn qmc_schedule() -> Result<(), String> {
    let expect = [10usize, 24, 57, 135, 320, 762];
    for (l, &n) in expect.iter().enumerate() {
        ensure(
            qmc_sample_count(l as u32, 0.2).map_err(|e| e.to_string())? == n,
            &format!("QMC count at level {l}"),
        )?;
    }
    Ok(())
}

fn combination_coefficients() -> Result<(), String> {
    let w = [1.0f64, 1.0];
    let expect = [
        (vec![0u32, 0], 0i64),
        (vec![1, 0], -1),
        (vec![0, 1], -1),
        (vec![2, 0], 1),
        (vec![0, 2], 1),
        (vec![1, 1], 1),
    ];
    for (alpha, c) in expect {
        ensure(
            combination_coefficient(2.0, &w, &alpha) == c,
            &format!("c_w({alpha:?})"),
        )?;
    }
    Ok(())
}

fn cholesky_hand_example() -> Result<(), String> {
    let m = DenseSymmetric::from_rows(2, &[2.0f64, 1.0, 1.0, 1.0]);
    let f = pivoted_cholesky(&m, 0.2, 10).map_err(|e| e.to_string())?;
    ensure(
        f.rank() == 1
            && f.pivot_order == vec![0]
            && close(f.columns[0][0], 2.0f64.sqrt(), 1e-14)
            && close(f.residual_trace, 0.5, 1e-14),
        "pivoted Cholesky hand example",
    )
}

fn patch_test() -> Result<(), String> {
    for level in 0..=1u32 {
        let mesh = build_cube_mesh::<f64>(level).map_err(|e| e.to_string())?;
        let tensor = diffusion_tensor([1.0, 0.0, 0.0], 0.12).map_err(|e| e.to_string())?;
        let tensors = vec![tensor; mesh.tet_count()];
        let system = assemble_system(&mesh, &tensors, &BvpData::linear_patch())
            .map_err(|e| e.to_string())?;
        let u = solve_cg(&system, 1e-12, 50_000).map_err(|e| e.to_string())?;
        let mut worst = 0.0f64;
        for (i, p) in mesh.vertices().iter().enumerate() {
            worst = worst.max((u.values()[i] - (p[0] - 0.5)).abs());
        }
        ensure(
            worst <= 1e-9,
            &format!("patch test at level {level}: {worst:e}"),
        )?;
    }
    Ok(())
}

fn kl_contract() -> Result<(), String> {
    let mesh = build_cube_mesh::<f64>(0).map_err(|e| e.to_string())?;
    let kl = build_kl(&mesh, &CovarianceModel::default(), 0).map_err(|e| e.to_string())?;
    ensure(
        kl.residual_rel_trace() <= 1e-4,
        "KL trace tolerance at level 0",
    )?;
    let y = vec![0.0; kl.mode_count()];
    let v = kl.value_at(0, &y).map_err(|e| e.to_string())?;
    ensure(v == [1.0, 0.0, 0.0], "mean field at y = 0")
}

fn tensor_spectrum() -> Result<(), String> {
    let a = diffusion_tensor([1.0, 0.0, 0.0], 0.12).map_err(|e| e.to_string())?;
    ensure(
        close(a[0][0], 1.0, 1e-15) && close(a[1][1], 0.12, 1e-15),
        "tensor along the mean direction",
    )?;
    ensure(
        eigen_range([3.0, 4.0, 0.0], 0.12).map_err(|e| e.to_string())? == (0.12, 5.0),
        "spectral range",
    )
}

fn moment_estimation() -> Result<(), String> {
    let mesh = build_cube_mesh::<f64>(0).map_err(|e| e.to_string())?;
    let rule = aduq::quadrature::mc_rule::<f64>(3, 16, 5).map_err(|e| e.to_string())?;
    let constant = FeFunction::interpolate(Arc::clone(&mesh), |_| 3.0);
    let m = estimate_moments(&rule, &mesh, |_y: &[f64]| Ok(constant.clone()), 1)
        .map_err(|e| e.to_string())?;
    ensure(
        m.mean().values().iter().all(|&v| close(v, 3.0, 1e-12))
            && m.variance().values().iter().all(|&v| v.abs() < 1e-12),
        "constant-solver moments",
    )
}

/// Runs every check, printing one line each; returns the failure count.
pub fn run_all() -> usize {
    let checks: &[(&str, CheckFn)] = &[
        ("mesh counts and areas", mesh_counts),
        ("boundary classification", boundary_classification),
        ("gauss-legendre rules", gauss_rules),
        ("halton prefix", halton_prefix),
        ("qmc sample schedule", qmc_schedule),
        ("combination coefficients", combination_coefficients),
        ("pivoted cholesky", cholesky_hand_example),
        ("patch test", patch_test),
        ("kl truncation contract", kl_contract),
        ("diffusion tensor spectrum", tensor_spectrum),
        ("moment estimation", moment_estimation),
    ];
    let mut failures = 0;
    for (name, check) in checks {
        match check() {
            Ok(()) => println!("ok   {name}"),
            Err(msg) => {
                failures += 1;
                println!("FAIL {name}: {msg}");
            }
        }
    }
    failures
}
