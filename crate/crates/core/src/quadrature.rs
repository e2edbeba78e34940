//! Quadrature rules on the parameter box [−1,1]^M with respect to the
//! uniform probability measure: Monte Carlo, Halton quasi-Monte Carlo, and
//! the anisotropic sparse Gauss–Legendre combination technique
//!
//!   A_w(q,M) = Σ_{α ∈ Y_w(q,M)} c_w(α) · Q_α,
//!   c_w(α)   = Σ_{β ∈ {0,1}^M, ⟨α+β,w⟩ ≤ q} (−1)^{|β|},
//!   Y_w(q,M) = { α ∈ ℕ₀^M : q − ‖w‖₁ ≤ ⟨α,w⟩ ≤ q },
//!
//! where Q_α is the tensor Gauss–Legendre rule with n_k = ⌈(α_k+1)/2⌉ points
//! in dimension k. Sparse-grid weights may be negative; coinciding nodes are
//! merged exactly.

use std::collections::HashMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::scalar::{pairwise_sum, real, Real};

/// Method tag carried by every rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Mc,
    Qmc,
    Sg,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::Mc => "mc",
            Method::Qmc => "qmc",
            Method::Sg => "sg",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "mc" => Ok(Method::Mc),
            "qmc" => Ok(Method::Qmc),
            "sg" => Ok(Method::Sg),
            other => Err(format!("unknown quadrature method `{other}`")),
        }
    }
}

/// Weighted point set representing integration against the uniform
/// probability measure on [−1,1]^M.
#[derive(Debug, Clone)]
pub struct QuadratureRule<T> {
    dim: usize,
    /// Node coordinates, row-major with stride `dim`.
    nodes: Vec<T>,
    weights: Vec<T>,
    method: Method,
}

impl<T: Real> QuadratureRule<T> {
    /// Assembles a rule from raw nodes (row-major, stride `dim`) and weights.
    pub fn from_parts(dim: usize, nodes: Vec<T>, weights: Vec<T>, method: Method) -> Self {
        assert_eq!(nodes.len(), weights.len() * dim);
        QuadratureRule {
            dim,
            nodes,
            weights,
            method,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn node(&self, i: usize) -> &[T] {
        &self.nodes[i * self.dim..(i + 1) * self.dim]
    }

    pub fn weight(&self, i: usize) -> T {
        self.weights[i]
    }

    pub fn weight_sum(&self) -> T {
        pairwise_sum(&self.weights)
    }

    /// Σ w_i f(ξ_i).
    pub fn integrate(&self, f: impl Fn(&[T]) -> T) -> T {
        let mut acc = T::zero();
        for i in 0..self.len() {
            acc = acc + self.weights[i] * f(self.node(i));
        }
        acc
    }
}

/// N i.i.d. uniform points from a seeded generator, all weights 1/N.
pub fn mc_rule<T: Real>(dim: usize, n: usize, seed: u64) -> Result<QuadratureRule<T>> {
    if n == 0 {
        return Err(Error::Domain("sample count must be at least 1".into()));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut nodes = Vec::with_capacity(n * dim);
    for _ in 0..n * dim {
        nodes.push(real(rng.random_range(-1.0..=1.0)));
    }
    let w = T::one() / T::from_usize(n).unwrap();
    Ok(QuadratureRule {
        dim,
        nodes,
        weights: vec![w; n],
        method: Method::Mc,
    })
}

/// Largest supported Halton dimension (one prime base per dimension).
pub const MAX_HALTON_DIM: usize = 200;

fn first_primes(count: usize) -> Vec<u64> {
    let mut primes = Vec::with_capacity(count);
    let mut candidate = 2u64;
    while primes.len() < count {
        if primes.iter().all(|&p| candidate % p != 0) {
            primes.push(candidate);
        }
        candidate += 1;
    }
    primes
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv_base = 1.0 / base as f64;
    let mut f = inv_base;
    let mut x = 0.0;
    while i > 0 {
        x += (i % base) as f64 * f;
        i /= base;
        f *= inv_base;
    }
    x
}

/// The first N Halton points (index starting at 1, no scrambling or
/// leaping), affinely mapped from [0,1) to [−1,1).
pub fn halton_rule<T: Real>(dim: usize, n: usize) -> Result<QuadratureRule<T>> {
    if dim > MAX_HALTON_DIM {
        return Err(Error::ResourceLimit(format!(
            "Halton dimension {dim} exceeds the prime table bound {MAX_HALTON_DIM}"
        )));
    }
    if n == 0 {
        return Err(Error::Domain("sample count must be at least 1".into()));
    }
    let bases = first_primes(dim);
    let mut nodes = Vec::with_capacity(n * dim);
    for i in 1..=n as u64 {
        for &b in &bases {
            nodes.push(real(2.0 * radical_inverse(i, b) - 1.0));
        }
    }
    let w = T::one() / T::from_usize(n).unwrap();
    Ok(QuadratureRule {
        dim,
        nodes,
        weights: vec![w; n],
        method: Method::Qmc,
    })
}

/// The per-level QMC sample schedule ⌈2^{l/(1−δ)} · 10⌉.
pub fn qmc_sample_count(level: u32, delta: f64) -> Result<usize> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Domain(format!(
            "delta must lie in (0,1), got {delta}"
        )));
    }
    let count = (2f64.powf(level as f64 / (1.0 - delta)) * 10.0).ceil();
    Ok(count as usize)
}

/// The per-level sparse grid order q_l = 2l + 2.
pub fn sg_order(level: u32) -> u32 {
    2 * level + 2
}

/// Dimension weights w_k = log(1/γ_k + √(1 + 1/γ_k²)) = asinh(1/γ_k),
/// strictly decreasing in γ_k.
pub fn sg_weights<T: Real>(gamma: &[T]) -> Result<Vec<T>> {
    gamma
        .iter()
        .map(|&g| {
            if g <= T::zero() {
                Err(Error::Domain(format!(
                    "sparse grid weights need positive gamma, got {g}"
                )))
            } else {
                Ok((T::one() / g).asinh())
            }
        })
        .collect()
}

/// Cap on the enumerated multi-index set size.
pub const MAX_INDEX_SET: usize = 4_194_304;

/// The anisotropic index band Y_w(q,M).
#[derive(Debug, Clone)]
pub struct MultiIndexSet {
    pub dim: usize,
    pub indices: Vec<Vec<u32>>,
}

/// Enumerates { α ∈ ℕ₀^M : q − ‖w‖₁ ≤ ⟨α,w⟩ ≤ q } by bounded recursion.
pub fn sg_index_set<T: Real>(q: T, dim: usize, w: &[T]) -> Result<MultiIndexSet> {
    if w.len() != dim {
        return Err(Error::Domain(format!(
            "{} weights for dimension {dim}",
            w.len()
        )));
    }
    if w.iter().any(|&wk| wk <= T::zero()) {
        return Err(Error::Domain(
            "dimension weights must be strictly positive".into(),
        ));
    }
    if q < T::zero() {
        return Err(Error::Domain(format!(
            "sparse grid order must be nonnegative, got {q}"
        )));
    }
    let lower = q - pairwise_sum(w);

    let mut indices = Vec::new();
    let mut alpha = vec![0u32; dim];
    let mut visited = 0usize;
    enumerate(
        q,
        lower,
        w,
        0,
        T::zero(),
        &mut alpha,
        &mut indices,
        &mut visited,
    )?;
    Ok(MultiIndexSet { dim, indices })
}

fn enumerate<T: Real>(
    q: T,
    lower: T,
    w: &[T],
    k: usize,
    partial: T,
    alpha: &mut Vec<u32>,
    out: &mut Vec<Vec<u32>>,
    visited: &mut usize,
) -> Result<()> {
    if k == w.len() {
        *visited += 1;
        if *visited > MAX_INDEX_SET {
            return Err(Error::ResourceLimit(format!(
                "multi-index enumeration exceeded {MAX_INDEX_SET} candidates"
            )));
        }
        if partial >= lower {
            out.push(alpha.clone());
        }
        return Ok(());
    }
    let mut a = 0u32;
    loop {
        let inner = partial + T::from_u32(a).unwrap() * w[k];
        if inner > q {
            break;
        }
        alpha[k] = a;
        enumerate(q, lower, w, k + 1, inner, alpha, out, visited)?;
        a += 1;
    }
    alpha[k] = 0;
    Ok(())
}

/// The combination coefficient c_w(α): a signed count over the hypercube
/// corners β ∈ {0,1}^M with ⟨α+β,w⟩ ≤ q, evaluated with pruning (only
/// dimensions whose weight fits the remaining slack can contribute).
pub fn combination_coefficient<T: Real>(q: T, w: &[T], alpha: &[u32]) -> i64 {
    let mut inner = T::zero();
    for (a, &wk) in alpha.iter().zip(w) {
        inner = inner + T::from_u32(*a).unwrap() * wk;
    }
    let slack = q - inner;
    if slack < T::zero() {
        return 0;
    }
    // Ascending weights let the recursion stop at the first non-fitting one.
    let mut sorted: Vec<T> = w.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    signed_subset_count(&sorted, slack)
}

fn signed_subset_count<T: Real>(sorted_w: &[T], slack: T) -> i64 {
    match sorted_w.split_first() {
        None => 1,
        Some((&w0, rest)) => {
            if w0 > slack {
                1
            } else {
                signed_subset_count(rest, slack) - signed_subset_count(rest, slack - w0)
            }
        }
    }
}

/// Classical Gauss–Legendre nodes on [−1,1] with weights normalized to the
/// uniform probability measure (they sum to 1); exact for polynomials of
/// degree ≤ 2n−1.
pub fn gauss_legendre_1d<T: Real>(n: usize) -> Result<(Vec<T>, Vec<T>)> {
    if n == 0 {
        return Err(Error::Domain("Gauss rule needs at least one point".into()));
    }
    let mut nodes = vec![0.0f64; n];
    let mut weights = vec![0.0f64; n];
    let half = n.div_ceil(2);
    for i in 0..half {
        // Tricomi initial guess, then Newton on the Legendre recurrence. The
        // middle root of odd rules is pinned to exactly 0 so that node
        // merging across rules stays bit-exact.
        let mut z = if n % 2 == 1 && i == half - 1 {
            0.0
        } else {
            (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos()
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2.0 * j as f64 + 1.0) * z * p2 - j as f64 * p3) / (j as f64 + 1.0);
            }
            pp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 {
                break;
            }
        }
        // Probability normalization: w = 2/((1−z²)·pp²) divided by 2.
        let w = 1.0 / ((1.0 - z * z) * pp * pp);
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    Ok((
        nodes.into_iter().map(real).collect(),
        weights.into_iter().map(real).collect(),
    ))
}

/// Builds the sparse rule Σ_α c_w(α)·Q_α, merging coinciding nodes exactly.
pub fn sg_rule<T: Real>(q: T, dim: usize, w: &[T]) -> Result<QuadratureRule<T>> {
    let set = sg_index_set(q, dim, w)?;

    // 1D rules per point count, built on demand.
    let mut rules_1d: Vec<Option<(Vec<T>, Vec<T>)>> = Vec::new();
    let rule_1d = |n: usize, cache: &mut Vec<Option<(Vec<T>, Vec<T>)>>| -> Result<()> {
        if cache.len() < n + 1 {
            cache.resize(n + 1, None);
        }
        if cache[n].is_none() {
            cache[n] = Some(gauss_legendre_1d(n)?);
        }
        Ok(())
    };

    // Nodes are identified per dimension by (point count, index), with the
    // exact zero node shared across all odd rules.
    let mut slot_of: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut nodes: Vec<T> = Vec::new();
    let mut weights: Vec<T> = Vec::new();

    for alpha in &set.indices {
        let c = combination_coefficient(q, w, alpha);
        if c == 0 {
            continue;
        }
        let c_t = T::from_i64(c).unwrap();
        let counts: Vec<usize> = alpha.iter().map(|&a| a as usize / 2 + 1).collect();
        for &n in &counts {
            rule_1d(n, &mut rules_1d)?;
        }

        let total: usize = counts.iter().product();
        let mut idx = vec![0usize; dim];
        for _ in 0..total {
            let mut key = Vec::with_capacity(dim);
            let mut weight = c_t;
            let mut coord = Vec::with_capacity(dim);
            for k in 0..dim {
                let (xs, ws) = rules_1d[counts[k]].as_ref().unwrap();
                let x = xs[idx[k]];
                coord.push(x);
                weight = weight * ws[idx[k]];
                key.push(if x == T::zero() {
                    0
                } else {
                    ((counts[k] as u64) << 32) | (idx[k] as u64 + 1)
                });
            }
            match slot_of.get(&key) {
                Some(&slot) => {
                    weights[slot] = weights[slot] + weight;
                }
                None => {
                    slot_of.insert(key, weights.len());
                    nodes.extend_from_slice(&coord);
                    weights.push(weight);
                }
            }
            // Mixed-radix increment.
            for k in 0..dim {
                idx[k] += 1;
                if idx[k] < counts[k] {
                    break;
                }
                idx[k] = 0;
            }
        }
    }

    if weights.is_empty() {
        return Err(Error::DegenerateRule(format!(
            "no contributing tensor rules for q = {q}"
        )));
    }
    Ok(QuadratureRule {
        dim,
        nodes,
        weights,
        method: Method::Sg,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn qmc_schedule_matches_table() {
        let expect = [10, 24, 57, 135, 320, 762];
        for (l, &n) in expect.iter().enumerate() {
            assert_eq!(qmc_sample_count(l as u32, 0.2).unwrap(), n);
        }
        assert!(qmc_sample_count(0, 0.0).is_err());
        assert!(qmc_sample_count(0, 1.0).is_err());
    }

    #[test]
    fn sg_order_schedule() {
        assert_eq!(sg_order(0), 2);
        assert_eq!(sg_order(3), 8);
        assert_eq!(sg_order(5), 12);
    }

    #[test]
    fn dimension_weights() {
        let w = sg_weights(&[1.0f64, 0.1, 100.0]).unwrap();
        assert!((w[0] - 0.881373587019543).abs() < 1e-12);
        assert!((w[1] - 2.998222950297970).abs() < 1e-12);
        assert!((w[2] - 0.009999833340832).abs() < 1e-12);
        assert!(w[0] > w[2] && w[1] > w[0]);
        assert!(sg_weights(&[0.0f64]).is_err());
        assert!(sg_weights(&[-1.0f64]).is_err());
    }

    #[test]
    fn index_set_isotropic_band() {
        let set = sg_index_set(2.0f64, 2, &[1.0, 1.0]).unwrap();
        assert_eq!(set.indices.len(), 6);
        let mut sums: Vec<u32> = set.indices.iter().map(|a| a.iter().sum()).collect();
        sums.sort_unstable();
        assert_eq!(sums, vec![0, 1, 1, 2, 2, 2]);
    }

    #[test]
    fn index_set_one_dimensional_band() {
        // q − ‖w‖₁ = 1 keeps only α ∈ {1, 2}.
        let set = sg_index_set(2.0f64, 1, &[1.0]).unwrap();
        let mut vals: Vec<u32> = set.indices.iter().map(|a| a[0]).collect();
        vals.sort_unstable();
        assert_eq!(vals, vec![1, 2]);
    }

    #[test]
    fn index_set_small_order_reduces_to_origin() {
        let set = sg_index_set(0.5f64, 2, &[1.0, 1.0]).unwrap();
        assert_eq!(set.indices, vec![vec![0, 0]]);
    }

    #[test]
    fn combination_coefficients_1d() {
        assert_eq!(combination_coefficient(2.0f64, &[1.0], &[1]), 0);
        assert_eq!(combination_coefficient(2.0f64, &[1.0], &[2]), 1);
    }

    #[test]
    fn combination_coefficients_2d() {
        let w = [1.0f64, 1.0];
        let q = 2.0;
        assert_eq!(combination_coefficient(q, &w, &[0, 0]), 0);
        assert_eq!(combination_coefficient(q, &w, &[1, 0]), -1);
        assert_eq!(combination_coefficient(q, &w, &[0, 1]), -1);
        assert_eq!(combination_coefficient(q, &w, &[2, 0]), 1);
        assert_eq!(combination_coefficient(q, &w, &[0, 2]), 1);
        assert_eq!(combination_coefficient(q, &w, &[1, 1]), 1);
        // Telescoping: the coefficients sum to one over the band.
        let total: i64 = sg_index_set(q, 2, &w)
            .unwrap()
            .indices
            .iter()
            .map(|a| combination_coefficient(q, &w, a))
            .sum();
        assert_eq!(total, 1);
    }

    #[test]
    fn gauss_legendre_small_rules() {
        let (x1, w1) = gauss_legendre_1d::<f64>(1).unwrap();
        assert_eq!(x1, vec![0.0]);
        assert_eq!(w1, vec![1.0]);

        let (x2, w2) = gauss_legendre_1d::<f64>(2).unwrap();
        let r = 1.0 / 3.0f64.sqrt();
        assert!((x2[0] + r).abs() < 1e-15);
        assert!((x2[1] - r).abs() < 1e-15);
        assert!((w2[0] - 0.5).abs() < 1e-15);
        assert!((w2[1] - 0.5).abs() < 1e-15);

        // Second moment of the uniform measure.
        let m2: f64 = x2.iter().zip(&w2).map(|(&x, &w)| w * x * x).sum();
        assert!((m2 - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn gauss_legendre_odd_rule_has_exact_zero() {
        for n in [1usize, 3, 5, 7, 9] {
            let (x, w) = gauss_legendre_1d::<f64>(n).unwrap();
            assert_eq!(x[n / 2], 0.0);
            let sum: f64 = w.iter().sum();
            assert!((sum - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn halton_base2_prefix() {
        let rule = halton_rule::<f64>(1, 3).unwrap();
        assert_eq!(rule.node(0), &[0.0]);
        assert_eq!(rule.node(1), &[-0.5]);
        assert_eq!(rule.node(2), &[0.5]);
        assert!((rule.weight_sum() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn halton_first_point_2d() {
        let rule = halton_rule::<f64>(2, 1).unwrap();
        assert_eq!(rule.node(0)[0], 0.0);
        assert!((rule.node(0)[1] - (2.0 / 3.0 - 1.0)).abs() < 1e-15);
        assert_eq!(rule.weight(0), 1.0);
    }

    #[test]
    fn halton_dimension_cap() {
        assert!(halton_rule::<f64>(MAX_HALTON_DIM + 1, 5).is_err());
    }

    #[test]
    fn prime_table_prefix() {
        assert_eq!(first_primes(8), vec![2, 3, 5, 7, 11, 13, 17, 19]);
    }

    #[test]
    fn mc_rule_is_reproducible() {
        let a = mc_rule::<f64>(4, 100, 42).unwrap();
        let b = mc_rule::<f64>(4, 100, 42).unwrap();
        assert_eq!(a.nodes, b.nodes);
        let c = mc_rule::<f64>(4, 100, 43).unwrap();
        assert_ne!(a.nodes, c.nodes);
        assert!(a.nodes.iter().all(|&x| (-1.0..=1.0).contains(&x)));
    }

    #[test]
    fn mc_single_point() {
        let rule = mc_rule::<f64>(3, 1, 7).unwrap();
        assert_eq!(rule.len(), 1);
        assert_eq!(rule.weight(0), 1.0);
    }

    #[test]
    fn sparse_rule_base_case_is_midpoint() {
        // q below every weight: band = {0}, a single node at the origin.
        let rule = sg_rule(0.5f64, 3, &[1.0, 1.5, 2.0]).unwrap();
        assert_eq!(rule.len(), 1);
        assert_eq!(rule.node(0), &[0.0, 0.0, 0.0]);
        assert!((rule.weight(0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn sparse_rule_weights_sum_to_one() {
        let rule = sg_rule(2.0f64, 2, &[1.0, 1.0]).unwrap();
        assert!((rule.weight_sum() - 1.0).abs() < 1e-12);
        // Odd symmetry of every component rule.
        let m1 = rule.integrate(|y| y[0]);
        assert!(m1.abs() < 1e-14);
    }
}
