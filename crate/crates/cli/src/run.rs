//! Subcommand implementations.

use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::sync::Arc;

use aduq::fem::{solve_sample, NormKind};
use aduq::kl::{build_kl, KlExpansion};
use aduq::mesh::{build_cube_mesh, BoundaryTag, TetMesh};
use aduq::quadrature::{
    halton_rule, mc_rule, qmc_sample_count, sg_order, sg_rule, sg_weights, Method, QuadratureRule,
};
use aduq::uq::{convergence_study, ExampleKind};
use aduq::vtk;

use crate::config::{parse_config, ExperimentConfig};
use crate::plot;
use crate::CliError;

pub const DEFAULT_RULE_SEED: u64 = 42;

fn build_level(level: u32) -> Result<(Arc<TetMesh<f64>>, KlExpansion<f64>), CliError> {
    let mesh = build_cube_mesh::<f64>(level)?;
    let kl = build_kl(&mesh, &Default::default(), level)?;
    Ok((mesh, kl))
}

/// `mesh-info L [--vtk FILE]`: counts, volume, per-tag boundary areas, and
/// optionally the mesh itself as a legacy VTK file.
pub fn mesh_info(level: u32, vtk_path: Option<&str>) -> Result<String, CliError> {
    let mesh = build_cube_mesh::<f64>(level)?;
    let mut out = String::new();
    out.push_str(&format!("level: {level}\n"));
    out.push_str(&format!("tetrahedra: {}\n", mesh.tet_count()));
    out.push_str(&format!("vertices: {}\n", mesh.vertex_count()));
    out.push_str(&format!("volume: {:.15}\n", mesh.total_volume()));
    for tag in BoundaryTag::ALL {
        out.push_str(&format!("area {tag}: {:.15}\n", mesh.boundary_area(tag)));
    }
    if let Some(path) = vtk_path {
        if let Some(parent) = Path::new(path).parent() {
            if !parent.as_os_str().is_empty() {
                fs::create_dir_all(parent)?;
            }
        }
        let mut file = fs::File::create(path)?;
        vtk::write_mesh(&mut file, &mesh, "unit cube mesh")?;
        out.push_str(&format!("wrote {path}\n"));
    }
    Ok(out)
}

/// `kl L`: truncation rank, relative residual trace, γ sequence as CSV.
pub fn kl_report(level: u32) -> Result<String, CliError> {
    let (_, kl) = build_level(level)?;
    let mut out = String::new();
    out.push_str(&format!("# M = {}\n", kl.mode_count()));
    out.push_str(&format!(
        "# residual_rel_trace = {:.6e}\n",
        kl.residual_rel_trace()
    ));
    out.push_str(&format!("# tolerance = {:.6e}\n", kl.tolerance()));
    out.push_str("k,gamma_k\n");
    for (k, g) in kl.gamma().iter().enumerate() {
        out.push_str(&format!("{k},{g:.12e}\n"));
    }
    Ok(out)
}

fn rule_for(method: Method, level: u32, seed: u64) -> Result<QuadratureRule<f64>, CliError> {
    let (_, kl) = build_level(level)?;
    let rule = match method {
        Method::Mc => mc_rule::<f64>(kl.mode_count(), 4usize.pow(level), seed)?,
        Method::Qmc => halton_rule::<f64>(kl.mode_count(), qmc_sample_count(level, 0.2)?)?,
        Method::Sg => {
            let w = sg_weights(&kl.gamma()[1..])?;
            sg_rule(f64::from(sg_order(level)), kl.mode_count(), &w)?
        }
    };
    Ok(rule)
}

/// `rule METHOD L`: nodes and weights as CSV with one row per node.
pub fn rule_csv(method: Method, level: u32, seed: u64) -> Result<String, CliError> {
    let rule = rule_for(method, level, seed)?;
    let mut out = String::new();
    out.push_str(&format!(
        "# method = {method}, level = {level}, n = {}, dim = {}\n",
        rule.len(),
        rule.dim()
    ));
    out.push_str("index");
    for k in 1..=rule.dim() {
        out.push_str(&format!(",y_{k}"));
    }
    out.push_str(",weight\n");
    for i in 0..rule.len() {
        out.push_str(&i.to_string());
        for x in rule.node(i) {
            out.push_str(&format!(",{x:.16e}"));
        }
        out.push_str(&format!(",{:.16e}\n", rule.weight(i)));
    }
    Ok(out)
}

/// `solve EXAMPLE L [--y ...] [--out FILE]`: one sample solve plus VTK dump.
pub fn solve_one(
    example: ExampleKind,
    level: u32,
    y_spec: Option<&str>,
    out_path: Option<&str>,
) -> Result<String, CliError> {
    let (mesh, kl) = build_level(level)?;
    let m = kl.mode_count();
    let mut y = vec![0.0f64; m];
    if let Some(spec) = y_spec {
        let given: Vec<f64> = spec
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| CliError::Usage(format!("bad parameter value `{s}`: {e}")))
            })
            .collect::<Result<_, _>>()?;
        if given.len() > m {
            return Err(CliError::Validation(format!(
                "{} parameter values given, expansion has {m} modes",
                given.len()
            )));
        }
        y[..given.len()].copy_from_slice(&given);
    }

    let u = solve_sample(&kl, 0.12, &y, &example.bvp(), 1e-10, 50_000)?;

    let path = out_path
        .map(str::to_string)
        .unwrap_or_else(|| format!("solution_example{}_level{level}.vtk", example.id()));
    if let Some(parent) = Path::new(&path).parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let mut file = fs::File::create(&path)?;
    vtk::write_fields(&mut file, &mesh, "sample solution", &[("u", &u)])?;

    Ok(format!(
        "example {} level {level}: M = {m}, wrote {path}\n\
         L2 = {:.6e}, H1 = {:.6e}, H1_semi = {:.6e}, W11 = {:.6e}\n",
        example.id(),
        u.norm(NormKind::L2),
        u.norm(NormKind::H1),
        u.norm(NormKind::H1Semi),
        u.norm(NormKind::W11),
    ))
}

/// `converge CONFIG`: the full study with streamed CSV output, per-method
/// data files, and a generated gnuplot script.
pub fn converge(config_path: &str) -> Result<(), CliError> {
    let text = fs::read_to_string(config_path)
        .map_err(|e| CliError::Usage(format!("cannot read config `{config_path}`: {e}")))?;
    let cfg = parse_config(&text)?;
    converge_with(&cfg)
}

pub fn converge_with(cfg: &ExperimentConfig) -> Result<(), CliError> {
    cfg.validate()?;
    let out_dir = Path::new(&cfg.output_dir);
    fs::create_dir_all(out_dir)?;

    // Echo the fully resolved configuration next to the results.
    fs::write(out_dir.join("config_resolved.cfg"), cfg.to_text())?;

    let study = cfg.study_config();
    let example_id = cfg.example.id();
    let csv_path = out_dir.join(format!("example{example_id}.csv"));
    let mut csv = fs::File::create(&csv_path)?;
    writeln!(
        csv,
        "# reference: level={} method=qmc samples={}",
        cfg.reference_level, cfg.reference_samples
    )?;
    writeln!(csv, "# mc replicas: {:?} (rms across seeds)", cfg.mc_seeds)?;
    writeln!(csv, "{}", plot::CSV_HEADER)?;

    println!("running example {example_id} (threads: {})", study.threads);
    let output = convergence_study(&study, |row| {
        let line = plot::csv_line(row);
        println!("{line}");
        let _ = writeln!(csv, "{line}");
        let _ = csv.flush();
    })
    .map_err(CliError::Numerical)?;

    for &method in &cfg.methods {
        let dat = plot::method_dat(&output.rows, method);
        fs::write(
            out_dir.join(format!("example{example_id}_{method}.dat")),
            dat,
        )?;
    }
    let script = plot::gnuplot_script(example_id, &output.rows, &cfg.methods);
    fs::write(out_dir.join(format!("plot_example{example_id}.gp")), script)?;

    for fit in &output.rates {
        println!(
            "example {example_id} {}: fitted decay rates mean_h1 = {}, var_w11 = {}",
            fit.method,
            fit.mean_h1_rate.map_or("n/a".into(), |r| format!("{r:.3}")),
            fit.var_w11_rate.map_or("n/a".into(), |r| format!("{r:.3}")),
        );
    }

    if cfg.write_reference_vtk {
        let path = out_dir.join(format!("example{example_id}_reference.vtk"));
        let mut file = fs::File::create(&path)?;
        vtk::write_fields(
            &mut file,
            output.reference.mesh(),
            "reference moments",
            &[
                ("mean", output.reference.mean()),
                ("variance", output.reference.variance()),
            ],
        )
        .map_err(CliError::Numerical)?;
        println!("wrote {}", path.display());
    }

    println!(
        "wrote {} (reference KL modes: {})",
        csv_path.display(),
        output.reference_modes
    );
    Ok(())
}
