//! Moment estimation over parameter space and multi-level convergence
//! studies: per-sample solves are combined through a fixed pairwise
//! reduction tree, so results are bit-reproducible regardless of the thread
//! count.

use std::sync::Arc;
use std::time::Instant;

use crate::covariance::CovarianceModel;
use crate::error::{Error, Result};
use crate::fem::{BvpData, FeFunction, NormKind, SampleSolver};
use crate::kl::build_kl;
use crate::mesh::{self, TetMesh};
use crate::quadrature::{
    halton_rule, mc_rule, qmc_sample_count, sg_order, sg_rule, sg_weights, Method, QuadratureRule,
};
use crate::scalar::{real, Real};

/// Accumulated mean/variance fields of a sampled solution.
#[derive(Debug, Clone)]
pub struct MomentFields<T: Real> {
    mesh: Arc<TetMesh<T>>,
    mean: FeFunction<T>,
    second_moment: FeFunction<T>,
    variance: FeFunction<T>,
    n_samples: usize,
    total_weight: T,
    /// Most negative nodal variance seen before clamping (round-off size for
    /// rules with positive weights).
    min_preclamp_variance: T,
}

impl<T: Real> MomentFields<T> {
    /// Builds the derived variance field from weighted first and second
    /// moments, clamping nodal values at zero.
    pub fn from_parts(
        mean: FeFunction<T>,
        second_moment: FeFunction<T>,
        n_samples: usize,
        total_weight: T,
    ) -> Self {
        let mesh = Arc::clone(mean.mesh());
        let mut min_preclamp = T::zero();
        let variance_values: Vec<T> = mean
            .values()
            .iter()
            .zip(second_moment.values())
            .map(|(&m, &s)| {
                let v = s - m * m;
                min_preclamp = min_preclamp.min(v);
                v.max(T::zero())
            })
            .collect();
        let variance = FeFunction::new(Arc::clone(&mesh), variance_values);
        MomentFields {
            mesh,
            mean,
            second_moment,
            variance,
            n_samples,
            total_weight,
            min_preclamp_variance: min_preclamp,
        }
    }

    pub fn mesh(&self) -> &Arc<TetMesh<T>> {
        &self.mesh
    }

    pub fn mean(&self) -> &FeFunction<T> {
        &self.mean
    }

    pub fn second_moment(&self) -> &FeFunction<T> {
        &self.second_moment
    }

    pub fn variance(&self) -> &FeFunction<T> {
        &self.variance
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn total_weight(&self) -> T {
        self.total_weight
    }

    pub fn min_preclamp_variance(&self) -> T {
        self.min_preclamp_variance
    }
}

struct Partial<T> {
    mean: Vec<T>,
    second: Vec<T>,
}

impl<T: Real> Partial<T> {
    fn combine(mut self, other: Partial<T>) -> Partial<T> {
        for (a, b) in self.mean.iter_mut().zip(other.mean) {
            *a = *a + b;
        }
        for (a, b) in self.second.iter_mut().zip(other.second) {
            *a = *a + b;
        }
        self
    }
}

const LEAF_SIZE: usize = 8;

fn accumulate<T, F>(
    rule: &QuadratureRule<T>,
    solver: &F,
    lo: usize,
    hi: usize,
    budget: usize,
    n: usize,
) -> Result<Partial<T>>
where
    T: Real,
    F: Fn(&[T]) -> Result<FeFunction<T>> + Sync,
{
    if hi - lo <= LEAF_SIZE {
        let mut mean = vec![T::zero(); n];
        let mut second = vec![T::zero(); n];
        for i in lo..hi {
            let u = solver(rule.node(i)).map_err(|e| Error::SampleFailure {
                node: i,
                source: Box::new(e),
            })?;
            let w = rule.weight(i);
            for (j, &v) in u.values().iter().enumerate() {
                mean[j] = mean[j] + w * v;
                second[j] = second[j] + w * v * v;
            }
        }
        return Ok(Partial { mean, second });
    }

    // The split point is a function of the range alone, so the reduction
    // tree does not depend on the thread budget.
    let mid = lo + (hi - lo) / 2;
    let (left, right) = if budget > 1 {
        let lb = budget / 2;
        let rb = budget - lb;
        std::thread::scope(|s| {
            let handle = s.spawn(|| accumulate(rule, solver, lo, mid, lb, n));
            let right = accumulate(rule, solver, mid, hi, rb, n);
            (handle.join().expect("accumulation thread panicked"), right)
        })
    } else {
        (
            accumulate(rule, solver, lo, mid, 1, n),
            accumulate(rule, solver, mid, hi, 1, n),
        )
    };
    Ok(left?.combine(right?))
}

/// Runs the solver at every quadrature node and accumulates the weighted
/// nodal mean and second moment.
pub fn estimate_moments<T, F>(
    rule: &QuadratureRule<T>,
    mesh: &Arc<TetMesh<T>>,
    solver: F,
    threads: usize,
) -> Result<MomentFields<T>>
where
    T: Real,
    F: Fn(&[T]) -> Result<FeFunction<T>> + Sync,
{
    if rule.is_empty() {
        return Err(Error::DegenerateRule("empty quadrature rule".into()));
    }
    let n = mesh.vertex_count();
    let partial = accumulate(rule, &solver, 0, rule.len(), threads.max(1), n)?;
    let mean = FeFunction::new(Arc::clone(mesh), partial.mean);
    let second = FeFunction::new(Arc::clone(mesh), partial.second);
    Ok(MomentFields::from_parts(
        mean,
        second,
        rule.len(),
        rule.weight_sum(),
    ))
}

/// Root mean square of per-realization errors (the error measure averaged
/// over the Monte Carlo replicas).
pub fn replicated_rms<T: Real>(errors: &[T]) -> T {
    let n = T::from_usize(errors.len()).unwrap();
    (errors.iter().map(|&e| e * e).sum::<T>() / n).sqrt()
}

/// Errors of a coarse moment pair against a finer reference.
#[derive(Debug, Clone, Copy)]
pub struct MomentErrors<T> {
    pub mean_h1: T,
    pub mean_h1_semi: T,
    pub var_w11: T,
}

/// Prolongs the coarse mean/variance to the reference mesh, subtracts, and
/// measures the mean in H¹ (and its seminorm) and the variance in W^{1,1}.
pub fn error_vs_reference<T: Real>(
    coarse: &MomentFields<T>,
    reference: &MomentFields<T>,
) -> Result<MomentErrors<T>> {
    let mean_diff = mesh::prolong(coarse.mean(), reference.mesh())?.sub(reference.mean());
    let var_diff = mesh::prolong(coarse.variance(), reference.mesh())?.sub(reference.variance());
    Ok(MomentErrors {
        mean_h1: mean_diff.norm(NormKind::H1),
        mean_h1_semi: mean_diff.norm(NormKind::H1Semi),
        var_w11: var_diff.norm(NormKind::W11),
    })
}

/// The two model problems of the experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExampleKind {
    /// Source ≡ 1, homogeneous Dirichlet on the whole boundary.
    One,
    /// No source, conormal data ±1 on Γ₀/Γ₁, Dirichlet on Γ₂.
    Two,
}

impl ExampleKind {
    pub fn bvp<T: Real>(self) -> BvpData<T> {
        match self {
            ExampleKind::One => BvpData::example1(),
            ExampleKind::Two => BvpData::example2(),
        }
    }

    pub fn id(self) -> u32 {
        match self {
            ExampleKind::One => 1,
            ExampleKind::Two => 2,
        }
    }

    pub fn from_id(id: u32) -> Option<Self> {
        match id {
            1 => Some(ExampleKind::One),
            2 => Some(ExampleKind::Two),
            _ => None,
        }
    }
}

/// One line of the convergence table.
#[derive(Debug, Clone)]
pub struct ConvergenceRow<T> {
    pub level: u32,
    pub method: Method,
    pub n_samples: usize,
    pub kl_modes: usize,
    pub err_mean_h1: T,
    pub err_mean_h1_semi: T,
    pub err_var_w11: T,
    pub wall_time_s: f64,
}

/// Complete description of a convergence study.
#[derive(Debug, Clone)]
pub struct StudyConfig<T: Real> {
    pub example: ExampleKind,
    pub levels: Vec<u32>,
    pub methods: Vec<Method>,
    pub reference_level: u32,
    pub reference_samples: usize,
    pub delta: f64,
    pub mc_seeds: Vec<u64>,
    pub a: T,
    pub model: CovarianceModel<T>,
    pub cg_rtol: T,
    pub cg_max_iter: usize,
    pub threads: usize,
    /// Levels below this are excluded from the rate fit.
    pub fit_min_level: u32,
}

impl<T: Real> StudyConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::Domain(
                "at least one quadrature method is required".into(),
            ));
        }
        if self.levels.is_empty() {
            return Err(Error::Domain("at least one level is required".into()));
        }
        let max_level = *self.levels.iter().max().unwrap();
        if self.reference_level <= max_level {
            return Err(Error::Domain(format!(
                "reference level {} must exceed the largest study level {max_level}",
                self.reference_level
            )));
        }
        if self.a <= T::zero() {
            return Err(Error::Domain(format!(
                "transverse strength must be positive, got {}",
                self.a
            )));
        }
        if self.methods.contains(&Method::Mc) && self.mc_seeds.is_empty() {
            return Err(Error::Domain(
                "Monte Carlo requires at least one seed".into(),
            ));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Domain(format!(
                "delta must lie in (0,1), got {}",
                self.delta
            )));
        }
        Ok(())
    }
}

/// Per-method fitted decay rates of log₂(error) versus level.
#[derive(Debug, Clone)]
pub struct RateFit<T> {
    pub method: Method,
    pub mean_h1_rate: Option<T>,
    pub var_w11_rate: Option<T>,
}

/// Study results: the convergence table, the fitted rates, and the reference
/// moments (for inspection or export).
pub struct StudyOutput<T: Real> {
    pub rows: Vec<ConvergenceRow<T>>,
    pub rates: Vec<RateFit<T>>,
    pub reference: MomentFields<T>,
    pub reference_modes: usize,
}

/// Least-squares decay rate: fits log₂(err) ≈ c − rate·level and returns the
/// rate (positive when errors shrink). Needs two or more positive samples.
pub fn fit_decay_rate<T: Real>(points: &[(u32, T)]) -> Option<T> {
    if points.len() < 2 || points.iter().any(|&(_, e)| e <= T::zero()) {
        return None;
    }
    let n = T::from_usize(points.len()).unwrap();
    let ln2 = real::<T>(std::f64::consts::LN_2);
    let xs: Vec<T> = points
        .iter()
        .map(|&(l, _)| T::from_u32(l).unwrap())
        .collect();
    let ys: Vec<T> = points.iter().map(|&(_, e)| e.ln() / ln2).collect();
    let xbar = xs.iter().copied().sum::<T>() / n;
    let ybar = ys.iter().copied().sum::<T>() / n;
    let mut num = T::zero();
    let mut den = T::zero();
    for (&x, &y) in xs.iter().zip(&ys) {
        num = num + (x - xbar) * (y - ybar);
        den = den + (x - xbar) * (x - xbar);
    }
    if den == T::zero() {
        return None;
    }
    Some(-(num / den))
}

/// Runs the full study: per-level expansions and rules, moment estimation,
/// errors against a dedicated reference (QMC at the reference level), and
/// rate fits. `on_row` fires as soon as each row is complete, so partial
/// tables survive a failure downstream.
pub fn convergence_study<T: Real>(
    config: &StudyConfig<T>,
    mut on_row: impl FnMut(&ConvergenceRow<T>),
) -> Result<StudyOutput<T>> {
    config.validate()?;
    let bvp = config.example.bvp::<T>();

    // One nested mesh chain serves every level and the reference.
    let mut meshes = vec![mesh::build_cube_mesh::<T>(0)?];
    for _ in 0..config.reference_level {
        let next = mesh::refine(meshes.last().unwrap())?;
        meshes.push(next);
    }

    let ref_mesh = &meshes[config.reference_level as usize];
    let ref_kl = build_kl(ref_mesh, &config.model, config.reference_level)?;
    let ref_rule = halton_rule::<T>(ref_kl.mode_count(), config.reference_samples)?;
    let ref_solver =
        SampleSolver::new(&ref_kl, config.a, &bvp, config.cg_rtol, config.cg_max_iter)?;
    let reference = estimate_moments(
        &ref_rule,
        ref_mesh,
        |y: &[T]| ref_solver.solve(y),
        config.threads,
    )?;
    let reference_modes = ref_kl.mode_count();

    let mut rows: Vec<ConvergenceRow<T>> = Vec::new();
    for &level in &config.levels {
        let level_mesh = &meshes[level as usize];
        let kl = build_kl(level_mesh, &config.model, level)?;
        let solver = SampleSolver::new(&kl, config.a, &bvp, config.cg_rtol, config.cg_max_iter)?;
        let solve = |y: &[T]| solver.solve(y);

        for &method in &config.methods {
            let start = Instant::now();
            let row = match method {
                Method::Qmc => {
                    let n = qmc_sample_count(level, config.delta)?;
                    let rule = halton_rule::<T>(kl.mode_count(), n)?;
                    let moments = estimate_moments(&rule, level_mesh, solve, config.threads)?;
                    let errs = error_vs_reference(&moments, &reference)?;
                    ConvergenceRow {
                        level,
                        method,
                        n_samples: n,
                        kl_modes: kl.mode_count(),
                        err_mean_h1: errs.mean_h1,
                        err_mean_h1_semi: errs.mean_h1_semi,
                        err_var_w11: errs.var_w11,
                        wall_time_s: start.elapsed().as_secs_f64(),
                    }
                }
                Method::Sg => {
                    let w = sg_weights(&kl.gamma()[1..])?;
                    let q = T::from_u32(sg_order(level)).unwrap();
                    let rule = sg_rule(q, kl.mode_count(), &w)?;
                    let moments = estimate_moments(&rule, level_mesh, solve, config.threads)?;
                    let errs = error_vs_reference(&moments, &reference)?;
                    ConvergenceRow {
                        level,
                        method,
                        n_samples: rule.len(),
                        kl_modes: kl.mode_count(),
                        err_mean_h1: errs.mean_h1,
                        err_mean_h1_semi: errs.mean_h1_semi,
                        err_var_w11: errs.var_w11,
                        wall_time_s: start.elapsed().as_secs_f64(),
                    }
                }
                Method::Mc => {
                    let n = 4usize.pow(level);
                    let mut mean_errs = Vec::new();
                    let mut semi_errs = Vec::new();
                    let mut var_errs = Vec::new();
                    for &seed in &config.mc_seeds {
                        let rule = mc_rule::<T>(kl.mode_count(), n, seed)?;
                        let moments = estimate_moments(&rule, level_mesh, solve, config.threads)?;
                        let errs = error_vs_reference(&moments, &reference)?;
                        mean_errs.push(errs.mean_h1);
                        semi_errs.push(errs.mean_h1_semi);
                        var_errs.push(errs.var_w11);
                    }
                    ConvergenceRow {
                        level,
                        method,
                        n_samples: n,
                        kl_modes: kl.mode_count(),
                        err_mean_h1: replicated_rms(&mean_errs),
                        err_mean_h1_semi: replicated_rms(&semi_errs),
                        err_var_w11: replicated_rms(&var_errs),
                        wall_time_s: start.elapsed().as_secs_f64(),
                    }
                }
            };
            on_row(&row);
            rows.push(row);
        }
    }

    let rates = config
        .methods
        .iter()
        .map(|&method| {
            let pick = |f: fn(&ConvergenceRow<T>) -> T| {
                let pts: Vec<(u32, T)> = rows
                    .iter()
                    .filter(|r| r.method == method && r.level >= config.fit_min_level)
                    .map(|r| (r.level, f(r)))
                    .collect();
                fit_decay_rate(&pts)
            };
            RateFit {
                method,
                mean_h1_rate: pick(|r| r.err_mean_h1),
                var_w11_rate: pick(|r| r.err_var_w11),
            }
        })
        .collect();

    Ok(StudyOutput {
        rows,
        rates,
        reference,
        reference_modes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_cube_mesh;
    use crate::quadrature::gauss_legendre_1d;

    fn const_field(mesh: &Arc<TetMesh<f64>>, c: f64) -> FeFunction<f64> {
        FeFunction::interpolate(Arc::clone(mesh), |_| c)
    }

    #[test]
    fn constant_solver_has_zero_variance() {
        let mesh = build_cube_mesh::<f64>(0).unwrap();
        let rule = mc_rule::<f64>(2, 17, 5).unwrap();
        let m =
            estimate_moments(&rule, &mesh, |_y: &[f64]| Ok(const_field(&mesh, 3.0)), 1).unwrap();
        for (&mean, &var) in m.mean().values().iter().zip(m.variance().values()) {
            assert!((mean - 3.0).abs() < 1e-12);
            assert!(var.abs() < 1e-12);
        }
        assert!((m.total_weight() - 1.0).abs() < 1e-12);
        assert_eq!(m.n_samples(), 17);
    }

    #[test]
    fn single_sample_variance_is_identically_zero() {
        let mesh = build_cube_mesh::<f64>(0).unwrap();
        let rule = mc_rule::<f64>(2, 1, 5).unwrap();
        let m =
            estimate_moments(&rule, &mesh, |y: &[f64]| Ok(const_field(&mesh, y[0])), 1).unwrap();
        assert!(m.variance().values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gauss_rule_second_moment() {
        // u(y) = y₁ · 1: mean 0, variance exactly 1/3 with the 2-point rule.
        let mesh = build_cube_mesh::<f64>(0).unwrap();
        let (nodes, weights) = gauss_legendre_1d::<f64>(2).unwrap();
        let rule = QuadratureRule::from_parts(1, nodes, weights, Method::Sg);
        let m =
            estimate_moments(&rule, &mesh, |y: &[f64]| Ok(const_field(&mesh, y[0])), 1).unwrap();
        for (&mean, &var) in m.mean().values().iter().zip(m.variance().values()) {
            assert!(mean.abs() < 1e-15);
            assert!((var - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn rms_examples() {
        assert_eq!(replicated_rms(&[0.0f64; 5]), 0.0);
        let e = 0.7f64;
        assert!((replicated_rms(&[e, 0.0, 0.0, 0.0, 0.0]) - e / 5.0f64.sqrt()).abs() < 1e-15);
        assert!((replicated_rms(&[3.0f64, 4.0, 0.0, 0.0, 0.0]) - 5.0f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn reference_error_against_itself_vanishes() {
        let mesh = build_cube_mesh::<f64>(1).unwrap();
        let mean = FeFunction::interpolate(Arc::clone(&mesh), |x| x[0] * x[1]);
        let second = FeFunction::interpolate(Arc::clone(&mesh), |x| x[0] * x[1] + 0.5);
        let m = MomentFields::from_parts(mean, second, 3, 1.0);
        let errs = error_vs_reference(&m, &m).unwrap();
        assert_eq!(errs.mean_h1, 0.0);
        assert_eq!(errs.var_w11, 0.0);
    }

    #[test]
    fn prolonged_reference_error_vanishes() {
        // With zero mean the variance equals the second moment, so both
        // compared fields prolong linearly and the errors vanish exactly.
        let coarse_mesh = build_cube_mesh::<f64>(0).unwrap();
        let fine_mesh = mesh::refine(&coarse_mesh).unwrap();
        let mean = const_field(&coarse_mesh, 0.0);
        let second = FeFunction::interpolate(Arc::clone(&coarse_mesh), |x| 1.0 + x[1]);
        let coarse = MomentFields::from_parts(mean, second, 2, 1.0);
        let ref_mean = mesh::prolong(coarse.mean(), &fine_mesh).unwrap();
        let ref_second = mesh::prolong(coarse.second_moment(), &fine_mesh).unwrap();
        let reference = MomentFields::from_parts(ref_mean, ref_second, 2, 1.0);
        let errs = error_vs_reference(&coarse, &reference).unwrap();
        assert!(errs.mean_h1 < 1e-12);
        assert!(errs.var_w11 < 2e-12);
    }

    #[test]
    fn mean_shift_by_linear_interpolant() {
        let mesh = build_cube_mesh::<f64>(1).unwrap();
        let zero = const_field(&mesh, 0.0);
        let shifted = FeFunction::interpolate(Arc::clone(&mesh), |x| x[0]);
        let a = MomentFields::from_parts(zero.clone(), zero.clone(), 1, 1.0);
        let b = MomentFields::from_parts(shifted, zero.clone(), 1, 1.0);
        let errs = error_vs_reference(&a, &b).unwrap();
        assert!((errs.mean_h1 - (4.0f64 / 3.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn decay_rate_of_exact_halving() {
        let pts: Vec<(u32, f64)> = (0..4).map(|l| (l, 0.5f64.powi(l as i32))).collect();
        let rate = fit_decay_rate(&pts).unwrap();
        assert!((rate - 1.0).abs() < 1e-12);
        assert!(fit_decay_rate::<f64>(&[(0, 1.0)]).is_none());
        assert!(fit_decay_rate::<f64>(&[(0, 1.0), (1, 0.0)]).is_none());
    }
}
