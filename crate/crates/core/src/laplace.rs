//! Certified two-sided Laplace bounds on conjugate marginals.
//!
//! Throughout, for a subset of points with summed sufficient statistic s and
//! size l, write nu_x = nu + l, mu_x = (xi + s)/nu_x, and
//!
//!   m       = exp(psi(xi + s, nu_x) - psi(xi, nu)),
//!   m-tilde = nu_x^(-k/2) exp(nu_x Lambda(mu_x)).
//!
//! Substituting theta' (xi + s) = nu_x (Lambda(mu_x) - h(mu_x, theta)) with
//! h(mu, theta) = Lambda(mu) - theta' mu + kappa(theta) >= 0 gives
//!
//!   m / m-tilde = exp(-psi(xi, nu)) * nu_x^(k/2) * E(nu_x, mu_x),
//!   E(t, mu) = integral over Theta of exp(-t h(mu, theta)) dtheta.
//!
//! For mu confined to a compact box U strictly inside the moment space, this
//! module certifies constants c1 <= t^(k/2) E(t, mu) <= c2 valid for every
//! t >= 1 and mu in U, built from:
//!
//! * epsilon: a ball radius with the epsilon-neighborhood V_eps of
//!   theta_mu(U) still inside Theta;
//! * alpha <= eigenvalues of kappa'' <= beta on V_eps, so Taylor with the
//!   Lagrange remainder sandwiches h between (alpha/2)|d|^2 and (beta/2)|d|^2
//!   on the ball |d| <= epsilon around theta_mu;
//! * delta <= inf over mu in U and unit u of h(mu, theta_mu + epsilon u): by
//!   convexity of h in theta, h >= delta outside the ball, so the tail of
//!   E(t, .) decays like exp(-(t-1) delta) relative to
//! * gamma >= sup over U of integral exp(-h(mu, theta)) dtheta
//!         =  sup over U of exp(psi(mu, 1) - Lambda(mu)).
//!
//! This yields
//!
//!   c1 = (2 pi / beta)^(k/2) P(|Z| <= epsilon sqrt(beta)),   Z ~ N(0, I_k),
//!   c2 = (2 pi / alpha)^(k/2) + gamma * sup_{t>=1} t^(k/2) e^{-(t-1) delta},
//!
//! and C_i = c_i exp(-psi(xi, nu)) with C1 <= m/m-tilde <= C2 whenever
//! mu_x lands in U. For the Gaussian family every extremum involved is
//! available in closed form and the constants are exact; for the univariate
//! count/positive families alpha and beta are exact (kappa'' is monotone) and
//! gamma, delta come from dense grids with a factor-2 margin; for the
//! normal-gamma family (k = 2) the curvature range is sampled on a grid plus
//! an epsilon-tube and widened by 5% in each direction.
//!
//! From the two-sided sandwich, a splitting constant follows: for disjoint
//! J1, J2 with union J, whenever all three posterior mean parameters lie in
//! the hull box U' (the coordinate bounding box of U and the prior mean
//! xi/nu),
//!
//!   m(x_J) <= C (nu_J1 nu_J2 / nu_J)^(k/2) m(x_J1) m(x_J2),
//!   C = (C2 / C1^2) exp(C0),
//!   C0 = nu sup_{y in U'} |(xi/nu - y)' theta_y| + nu sup_{y in U'} |Lambda(y)|,
//!
//! and since nu_J2 = nu + 1 for a singleton J2, deleting one point never
//! costs more than c = (nu + 1)^(k/2) C.

use serde::{Deserialize, Serialize};

use crate::error::{bail_domain, bail_refused, Result};
use crate::expfam::{ConjugatePrior, ExpFam};
use crate::num::chi_cdf;
use crate::quad::{log_integral_unimodal, Bound};

/// Smallest ball radius the certification will try before refusing.
pub const MIN_EPSILON: f64 = 1.0 / (1 << 20) as f64;

const TAU: f64 = 2.0 * std::f64::consts::PI;

/// An axis-aligned box of mean parameters, strictly inside the moment space.
/// A degenerate box (lo = hi) describes a single point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentSpaceBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl MomentSpaceBox {
    pub fn new(family: &ExpFam, lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        let b = MomentSpaceBox { lo, hi };
        b.validate_for(family)?;
        Ok(b)
    }

    pub fn point(family: &ExpFam, mu: Vec<f64>) -> Result<Self> {
        Self::new(family, mu.clone(), mu)
    }

    pub fn validate_for(&self, family: &ExpFam) -> Result<()> {
        family.validate()?;
        let k = family.suff_dim();
        if self.lo.len() != k || self.hi.len() != k {
            bail_domain!("box has dimension {}/{}, family expects {k}", self.lo.len(), self.hi.len());
        }
        for i in 0..k {
            if !(self.lo[i].is_finite() && self.hi[i].is_finite() && self.lo[i] <= self.hi[i]) {
                bail_domain!("box coordinate {i} has invalid range [{}, {}]", self.lo[i], self.hi[i]);
            }
        }
        // strict interior of the moment space
        let ok = match family {
            ExpFam::GaussianKnownVariance { .. } => true,
            ExpFam::NormalGamma => self.lo[1] > self.max_abs_sq(0),
            ExpFam::ExponentialGamma | ExpFam::PoissonGamma | ExpFam::GeometricBeta => {
                self.lo[0] > 0.0
            }
        };
        if !ok {
            bail_domain!(
                "box [{:?}, {:?}] is not strictly inside the moment space of {:?}",
                self.lo,
                self.hi,
                family
            );
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, mu: &[f64]) -> bool {
        mu.len() == self.dim()
            && mu
                .iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(x, (lo, hi))| *x >= *lo && *x <= *hi)
    }

    /// Largest mu_1^2 over the box (used by the normal-gamma interior check).
    fn max_abs_sq(&self, i: usize) -> f64 {
        self.lo[i].abs().max(self.hi[i].abs()).powi(2)
    }

    /// Smallest mu_1^2 over the box: zero when the range crosses zero.
    fn min_abs_sq(&self, i: usize) -> f64 {
        if self.lo[i] <= 0.0 && self.hi[i] >= 0.0 {
            0.0
        } else {
            self.lo[i].abs().min(self.hi[i].abs()).powi(2)
        }
    }

    /// Inclusive grid with `per_dim` points along each non-degenerate axis.
    fn grid(&self, per_dim: usize) -> Vec<Vec<f64>> {
        let axes: Vec<Vec<f64>> = (0..self.dim())
            .map(|i| {
                if self.lo[i] == self.hi[i] {
                    vec![self.lo[i]]
                } else {
                    (0..per_dim)
                        .map(|j| {
                            self.lo[i]
                                + (self.hi[i] - self.lo[i]) * j as f64 / (per_dim - 1) as f64
                        })
                        .collect()
                }
            })
            .collect();
        let mut points = vec![Vec::new()];
        for axis in axes {
            points = points
                .into_iter()
                .flat_map(|p| {
                    axis.iter().map(move |&v| {
                        let mut q = p.clone();
                        q.push(v);
                        q
                    })
                })
                .collect();
        }
        points
    }

    /// Coordinate bounding box of this box and one extra point.
    fn hull_with(&self, p: &[f64]) -> MomentSpaceBox {
        MomentSpaceBox {
            lo: self.lo.iter().zip(p).map(|(a, b)| a.min(*b)).collect(),
            hi: self.hi.iter().zip(p).map(|(a, b)| a.max(*b)).collect(),
        }
    }
}

/// Certified constants for the marginal-ratio sandwich over one box.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LaplaceConstants {
    /// The box of mean parameters the constants are valid over.
    pub u: MomentSpaceBox,
    /// Grid resolution behind the sampled extrema (points per axis and
    /// number of ball directions); recorded so a certificate is reproducible.
    pub grid_per_dim: usize,
    pub grid_directions: usize,
    pub epsilon: f64,
    /// Curvature range of kappa'' over the epsilon-neighborhood V_eps.
    pub alpha: f64,
    pub beta: f64,
    /// Tail mass bound: gamma >= sup over U of exp(psi(mu,1) - Lambda(mu)).
    pub gamma: f64,
    /// Boundary gap: h(mu, theta) >= delta outside the epsilon-ball.
    pub delta: f64,
    /// c1 <= t^(k/2) E(t, mu) <= c2 for all t >= 1, mu in the box.
    pub c_lower: f64,
    pub c_upper: f64,
    /// log C1 <= log m - log m-tilde <= log C2 whenever mu_x is in the box.
    pub log_ratio_lower: f64,
    pub log_ratio_upper: f64,
}

/// How the extrema behind the constants were computed.
fn grid_sizes(family: &ExpFam) -> (usize, usize) {
    match family.suff_dim() {
        1 => (513, 2),   // dense line, directions -1 and +1
        _ => (65, 16),   // per-axis grid, unit directions on the circle
    }
}

/// Exact distance from the image theta_mu(U) to the boundary of Theta.
fn theta_margin(family: &ExpFam, u: &MomentSpaceBox) -> f64 {
    match family {
        ExpFam::GaussianKnownVariance { .. } | ExpFam::PoissonGamma => f64::INFINITY,
        // theta = -1/mu, increasing in mu: the boundary 0 is approached at hi
        ExpFam::ExponentialGamma => 1.0 / u.hi[0],
        // theta = ln(mu/(1+mu)) < 0, increasing in mu
        ExpFam::GeometricBeta => ((1.0 + u.hi[0]) / u.hi[0]).ln(),
        // theta_2 = -1/(2 var): the largest variance over the box governs
        ExpFam::NormalGamma => {
            let var_max = u.hi[1] - u.min_abs_sq(0);
            1.0 / (2.0 * var_max)
        }
    }
}

/// (alpha, beta): certified eigenvalue range of kappa'' over V_eps.
fn curvature_range(family: &ExpFam, u: &MomentSpaceBox, eps: f64) -> Result<(f64, f64)> {
    match family {
        ExpFam::GaussianKnownVariance { variances } => {
            let mut lo = f64::INFINITY;
            let mut hi = 0.0f64;
            for &c in variances {
                lo = lo.min(c);
                hi = hi.max(c);
            }
            Ok((lo, hi))
        }
        ExpFam::ExponentialGamma | ExpFam::PoissonGamma | ExpFam::GeometricBeta => {
            // kappa'' and theta_mu are both increasing, so V_eps is the
            // interval [theta(lo) - eps, theta(hi) + eps] and the curvature
            // range is attained exactly at its endpoints.
            let t_lo = family.theta_of_mu(&[u.lo[0]])?[0] - eps;
            let t_hi = family.theta_of_mu(&[u.hi[0]])?[0] + eps;
            if !family.in_theta(&[t_lo]) || !family.in_theta(&[t_hi]) {
                bail_domain!("epsilon-neighborhood escapes the natural parameter space");
            }
            let alpha = family.kappa_hessian(&[t_lo])?[0][0];
            let beta = family.kappa_hessian(&[t_hi])?[0][0];
            Ok((alpha.min(beta), alpha.max(beta)))
        }
        ExpFam::NormalGamma => {
            // sampled on a grid over theta_mu(U) plus an epsilon-tube, then
            // widened by 5% in each direction to absorb the sampling gap
            let (per_dim, dirs) = grid_sizes(family);
            let mut alpha = f64::INFINITY;
            let mut beta = 0.0f64;
            for mu in u.grid(per_dim) {
                let theta0 = family.theta_of_mu(&mu)?;
                for d in 0..=dirs {
                    let theta = if d == 0 {
                        theta0.clone()
                    } else {
                        let ang = TAU * d as f64 / dirs as f64;
                        vec![theta0[0] + eps * ang.cos(), theta0[1] + eps * ang.sin()]
                    };
                    if !family.in_theta(&theta) {
                        bail_domain!("epsilon-tube escapes the natural parameter space");
                    }
                    let h = family.kappa_hessian(&theta)?;
                    let (lo, hi) = sym2x2_eigen_range(&h);
                    alpha = alpha.min(lo);
                    beta = beta.max(hi);
                }
            }
            Ok((alpha * 0.95, beta * 1.05))
        }
    }
}

/// Eigenvalue range of a symmetric 2x2 (or 1x1) matrix.
fn sym2x2_eigen_range(m: &[Vec<f64>]) -> (f64, f64) {
    if m.len() == 1 {
        return (m[0][0], m[0][0]);
    }
    let tr = m[0][0] + m[1][1];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let disc = (tr * tr - 4.0 * det).max(0.0).sqrt();
    ((tr - disc) / 2.0, (tr + disc) / 2.0)
}

/// gamma: upper bound on sup over U of exp(psi(mu, 1) - Lambda(mu)).
fn tail_mass_bound(family: &ExpFam, u: &MomentSpaceBox) -> Result<f64> {
    if let ExpFam::GaussianKnownVariance { variances } = family {
        // psi(mu, 1) - Lambda(mu) = sum_i ln(2 pi / c_i) / 2 exactly
        let log_g: f64 = variances.iter().map(|c| 0.5 * (TAU / c).ln()).sum();
        return Ok(log_g.exp());
    }
    let (per_dim, _) = grid_sizes(family);
    let mut sup = f64::NEG_INFINITY;
    for mu in u.grid(per_dim) {
        let v = family.psi(&mu, 1.0)? - family.lambda(&mu)?;
        sup = sup.max(v);
    }
    Ok(2.0 * sup.exp())
}

/// delta: lower bound on inf over U, unit u of h(mu, theta_mu + eps u).
fn boundary_gap(family: &ExpFam, u: &MomentSpaceBox, eps: f64) -> Result<f64> {
    if let ExpFam::GaussianKnownVariance { variances } = family {
        // h is exactly quadratic: h(mu, theta_mu + eps u) = eps^2 u'Cu / 2
        let c_min = variances.iter().cloned().fold(f64::INFINITY, f64::min);
        return Ok(0.5 * eps * eps * c_min);
    }
    let (per_dim, dirs) = grid_sizes(family);
    let k = family.suff_dim();
    let mut inf = f64::INFINITY;
    for mu in u.grid(per_dim) {
        let theta0 = family.theta_of_mu(&mu)?;
        let lam = family.lambda(&mu)?;
        for d in 0..dirs {
            let theta: Vec<f64> = if k == 1 {
                vec![theta0[0] + if d == 0 { -eps } else { eps }]
            } else {
                let ang = TAU * d as f64 / dirs as f64;
                vec![theta0[0] + eps * ang.cos(), theta0[1] + eps * ang.sin()]
            };
            if !family.in_theta(&theta) {
                bail_domain!("epsilon-ball escapes the natural parameter space");
            }
            let dot: f64 = theta.iter().zip(&mu).map(|(t, m)| t * m).sum();
            let h = lam - dot + family.kappa(&theta)?;
            inf = inf.min(h);
        }
    }
    Ok(0.5 * inf)
}

/// Certifies the two-sided sandwich on m/m-tilde over a box of posterior
/// mean parameters. Refuses when no workable ball radius above
/// [`MIN_EPSILON`] exists.
pub fn certify_box(
    family: &ExpFam,
    prior: &ConjugatePrior,
    u: &MomentSpaceBox,
) -> Result<LaplaceConstants> {
    family.validate_prior(prior)?;
    u.validate_for(family)?;
    let k = family.suff_dim() as f64;
    let margin = theta_margin(family, u);

    let mut eps = 0.5f64;
    let mut last_err = None;
    while eps >= MIN_EPSILON {
        if eps < margin {
            match try_certify(family, prior, u, eps, k) {
                Ok(c) => return Ok(c),
                Err(e) => last_err = Some(e),
            }
        }
        eps *= 0.5;
    }
    match last_err {
        Some(e) => Err(e),
        None => bail_refused!(
            "no ball radius above {MIN_EPSILON} fits between the box image and the \
             natural parameter boundary (margin {margin:.3e})"
        ),
    }
}

fn try_certify(
    family: &ExpFam,
    prior: &ConjugatePrior,
    u: &MomentSpaceBox,
    eps: f64,
    k: f64,
) -> Result<LaplaceConstants> {
    let (alpha, beta) = curvature_range(family, u, eps)?;
    if !(alpha.is_finite() && beta.is_finite() && alpha > 0.0) {
        bail_domain!("curvature range [{alpha}, {beta}] is unusable");
    }
    let gamma = tail_mass_bound(family, u)?;
    let delta = boundary_gap(family, u, eps)?;
    if !(delta > 0.0 && delta.is_finite() && gamma.is_finite()) {
        bail_domain!("boundary gap {delta} or tail mass {gamma} is unusable");
    }

    let c_lower = (TAU / beta).powf(k / 2.0) * chi_cdf(k as usize, eps * beta.sqrt());
    // sup over t >= 1 of t^(k/2) e^{-(t-1) delta}, attained at t = k/(2 delta)
    // when that exceeds 1 and at t = 1 otherwise
    let t_star = k / (2.0 * delta);
    let tail_sup = if t_star <= 1.0 {
        1.0
    } else {
        (k / (2.0 * delta)).powf(k / 2.0) * (delta - k / 2.0).exp()
    };
    let c_upper = (TAU / alpha).powf(k / 2.0) + gamma * tail_sup;
    if !(c_lower > 0.0 && c_upper.is_finite()) {
        bail_domain!("certified interval [{c_lower}, {c_upper}] is degenerate");
    }

    let psi0 = family.psi(&prior.xi, prior.nu)?;
    let (grid_per_dim, grid_directions) = grid_sizes(family);
    Ok(LaplaceConstants {
        u: u.clone(),
        grid_per_dim,
        grid_directions,
        epsilon: eps,
        alpha,
        beta,
        gamma,
        delta,
        c_lower,
        c_upper,
        log_ratio_lower: c_lower.ln() - psi0,
        log_ratio_upper: c_upper.ln() - psi0,
    })
}

/// Splitting constants derived from a certified sandwich.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SplittingBound {
    pub constants: LaplaceConstants,
    /// Hull box U' over which the exponent bound C0 was taken.
    pub hull: MomentSpaceBox,
    pub c0: f64,
    /// log C with m(x_J) <= C (nu_J1 nu_J2 / nu_J)^(k/2) m(x_J1) m(x_J2).
    pub log_split_constant: f64,
    /// log of c = (nu+1)^(k/2) C, the single-point deletion constant.
    pub log_singleton_constant: f64,
}

/// Certifies the splitting inequality over a box. The inequality compares
/// marginals of a subset and its two halves, whose posterior mean parameters
/// are convex combinations of the prior mean xi/nu and point means in the
/// box, so the whole certification runs over the hull box U': sandwich
/// constants and exponent bound alike. The hull must itself stay inside the
/// moment space; a prior mean far from the box can push it outside, in which
/// case the certification refuses rather than weaken the guarantee.
pub fn splitting_bound(
    family: &ExpFam,
    prior: &ConjugatePrior,
    u: &MomentSpaceBox,
) -> Result<SplittingBound> {
    family.validate_prior(prior)?;
    u.validate_for(family)?;
    let prior_mean: Vec<f64> = prior.xi.iter().map(|x| x / prior.nu).collect();
    let hull = u.hull_with(&prior_mean);
    if hull.validate_for(family).is_err() {
        bail_refused!(
            "bounding box of the region and the prior mean {prior_mean:?} leaves \
             the moment space; certify with a region closer to the prior mean"
        );
    }
    let constants = certify_box(family, prior, &hull)?;

    // C0 = nu sup |(xi/nu - y)' theta_y| + nu sup |Lambda(y)| over the hull,
    // each supremum sampled on a dense grid and doubled (exact for the
    // Gaussian family, where both functions are polynomial with extrema on a
    // coordinate grid dense enough to make the margin irrelevant in practice)
    let (per_dim, _) = grid_sizes(family);
    let mut sup_inner = 0.0f64;
    let mut sup_lambda = 0.0f64;
    for y in hull.grid(per_dim) {
        let theta = family.theta_of_mu(&y)?;
        let inner: f64 = prior_mean
            .iter()
            .zip(&y)
            .zip(&theta)
            .map(|((p, y), t)| (p - y) * t)
            .sum();
        sup_inner = sup_inner.max(inner.abs());
        sup_lambda = sup_lambda.max(family.lambda(&y)?.abs());
    }
    let c0 = 2.0 * prior.nu * (sup_inner + sup_lambda);

    let k = family.suff_dim() as f64;
    let log_c = constants.log_ratio_upper + c0 - 2.0 * constants.log_ratio_lower;
    Ok(SplittingBound {
        constants,
        hull,
        c0,
        log_split_constant: log_c,
        log_singleton_constant: (k / 2.0) * (prior.nu + 1.0).ln() + log_c,
    })
}

/// A bracket on g(t) = E(t, mu) at one value of t.
#[derive(Clone, Debug, Serialize)]
pub struct SandwichReport {
    pub t: f64,
    pub lower: f64,
    pub upper: f64,
    /// High-accuracy numerical value of g(t), computed for k = 1 families.
    pub quadrature: Option<f64>,
}

/// Per-t bracket on g(t) = integral over Theta of exp(-t h(mu, theta)) dtheta.
///
/// Given lemma hypotheses valid at mu — ball radius `epsilon` around
/// theta_mu with curvature range `alpha..=beta` inside it, and gap
/// h >= `delta` outside it — this returns, for a single t (sharper than the
/// t-uniform constants of [`certify_box`]),
///
///   lower = P(|Z| <= eps sqrt(t beta)) (2 pi / (t beta))^(k/2),
///   upper = (2 pi / (t alpha))^(k/2) + e^{-(t-s) delta} g(s),
///
/// where the tail anchor g(s) = exp(psi(s mu, s) - s Lambda(mu)) is exact:
/// (s mu, s) is a valid hyperparameter pair for every s > 0 once mu lies in
/// the moment space. Any 0 < s <= t works; smaller s gives a cruder but
/// always-finite anchor. For one-dimensional families the report also
/// carries an adaptive quadrature of g(t) itself as an independent check.
#[allow(clippy::too_many_arguments)]
pub fn laplace_sandwich(
    family: &ExpFam,
    mu: &[f64],
    t: f64,
    epsilon: f64,
    delta: f64,
    alpha: f64,
    beta: f64,
    s: f64,
) -> Result<SandwichReport> {
    family.validate()?;
    if !(t.is_finite() && s.is_finite() && s > 0.0 && s <= t) {
        bail_domain!("need 0 < s <= t, got s = {s}, t = {t}");
    }
    if !(epsilon > 0.0 && delta > 0.0 && alpha > 0.0 && alpha <= beta && beta.is_finite()) {
        bail_domain!(
            "ball radius {epsilon}, gap {delta} and curvature range [{alpha}, {beta}] \
             must be positive, finite and ordered"
        );
    }
    let theta0 = family.theta_of_mu(mu)?;
    let lam = family.lambda(mu)?;
    let k_int = family.suff_dim();
    let k = k_int as f64;

    let lower = chi_cdf(k_int, epsilon * (t * beta).sqrt()) * (TAU / (t * beta)).powf(k / 2.0);
    let sxi: Vec<f64> = mu.iter().map(|m| s * m).collect();
    let g_s = (family.psi(&sxi, s)? - s * lam).exp();
    let upper = (TAU / (t * alpha)).powf(k / 2.0) + (-(t - s) * delta).exp() * g_s;

    let quadrature = if k_int == 1 {
        let (lo, hi) = match family {
            ExpFam::ExponentialGamma | ExpFam::GeometricBeta => {
                (Bound::Infinite, Bound::Finite(0.0))
            }
            _ => (Bound::Infinite, Bound::Infinite),
        };
        let log_f = |th: f64| match family.kappa(&[th]) {
            Ok(kap) => -t * (lam - th * mu[0] + kap),
            Err(_) => f64::NEG_INFINITY,
        };
        Some(log_integral_unimodal(&log_f, lo, hi, theta0[0], 1e-12)?.exp())
    } else {
        None
    };
    Ok(SandwichReport {
        t,
        lower,
        upper,
        quadrature,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    struct Scenario {
        family: ExpFam,
        prior: ConjugatePrior,
        theta_true: Vec<f64>,
        u: (Vec<f64>, Vec<f64>),
    }

    fn scenarios() -> Vec<Scenario> {
        vec![
            Scenario {
                family: ExpFam::GaussianKnownVariance { variances: vec![1.0] },
                prior: ConjugatePrior::new(vec![0.5], 1.0),
                theta_true: vec![1.0],
                u: (vec![0.0], vec![2.0]),
            },
            Scenario {
                family: ExpFam::ExponentialGamma,
                prior: ConjugatePrior::scalar(1.0, 1.0),
                theta_true: vec![-1.0],
                u: (vec![0.5], vec![2.0]),
            },
            Scenario {
                family: ExpFam::PoissonGamma,
                prior: ConjugatePrior::scalar(2.0, 1.0),
                theta_true: vec![2f64.ln()],
                u: (vec![1.2], vec![3.0]),
            },
            Scenario {
                family: ExpFam::GeometricBeta,
                prior: ConjugatePrior::scalar(1.0, 1.0),
                theta_true: vec![-(2f64.ln())], // mu = 1
                u: (vec![0.4], vec![2.5]),
            },
            Scenario {
                family: ExpFam::NormalGamma,
                prior: ConjugatePrior::new(vec![0.0, 1.0], 1.0),
                theta_true: vec![0.0, -0.5], // mean 0, variance 1
                u: (vec![-0.6, 0.7], vec![0.6, 1.6]),
            },
        ]
    }

    #[test]
    fn sandwich_contains_marginal_ratio() {
        for sc in scenarios() {
            let u = MomentSpaceBox::new(&sc.family, sc.u.0.clone(), sc.u.1.clone()).unwrap();
            let cert = certify_box(&sc.family, &sc.prior, &u).unwrap();
            assert!(cert.c_lower > 0.0 && cert.c_lower < cert.c_upper, "{:?}", sc.family);

            let mut rng = ChaCha8Rng::seed_from_u64(21);
            let data: Vec<Vec<f64>> =
                (0..400).map(|_| sc.family.sample(&sc.theta_true, &mut rng).unwrap()).collect();
            let mut checked = 0usize;
            for _ in 0..400 {
                let l = rng.gen_range(1..=200);
                let start = rng.gen_range(0..=(400 - l));
                let subset = &data[start..start + l];
                let (suff, count) = sc.family.suff_sum(subset).unwrap();
                let mu = sc.family.mu_from_suff(&sc.prior, &suff, count).unwrap();
                if !u.contains(&mu) {
                    continue;
                }
                checked += 1;
                let m = sc
                    .family
                    .log_marginal_from_suff(&sc.prior, &suff, count)
                    .unwrap();
                let mt = sc.family.log_marginal_tilde(&sc.prior, &suff, count).unwrap();
                let ratio = m - mt;
                assert!(
                    cert.log_ratio_lower <= ratio && ratio <= cert.log_ratio_upper,
                    "{:?}: log ratio {ratio} outside [{}, {}] at l={l}",
                    sc.family,
                    cert.log_ratio_lower,
                    cert.log_ratio_upper
                );
            }
            assert!(checked > 100, "{:?}: only {checked} subsets landed in the box", sc.family);
        }
    }

    #[test]
    fn gaussian_constants_are_closed_form() {
        // for the Gaussian family the certification involves no sampling;
        // check the pieces against hand values (c = 1, eps = 0.5)
        let fam = ExpFam::GaussianKnownVariance { variances: vec![1.0] };
        let prior = ConjugatePrior::new(vec![0.0], 1.0);
        let u = MomentSpaceBox::new(&fam, vec![-1.0], vec![1.0]).unwrap();
        let cert = certify_box(&fam, &prior, &u).unwrap();
        assert_eq!(cert.epsilon, 0.5);
        assert_eq!(cert.alpha, 1.0);
        assert_eq!(cert.beta, 1.0);
        approx::assert_relative_eq!(cert.delta, 0.125, epsilon = 1e-15);
        approx::assert_relative_eq!(cert.gamma, TAU.sqrt(), epsilon = 1e-12);
        approx::assert_relative_eq!(
            cert.c_lower,
            TAU.sqrt() * chi_cdf(1, 0.5),
            epsilon = 1e-12
        );
        // t* = 1/(2 delta) = 4 > 1
        let tail = 4f64.sqrt() * (0.125f64 - 0.5).exp();
        approx::assert_relative_eq!(
            cert.c_upper,
            TAU.sqrt() + TAU.sqrt() * tail,
            epsilon = 1e-12
        );
    }

    #[test]
    fn ratio_concentrates_well_inside_the_sandwich() {
        // for large subsets the ratio approaches the pointwise Laplace limit
        // (2 pi / kappa'')^(1/2) e^{-psi}; the certified interval must hold
        // it with room to spare
        let fam = ExpFam::PoissonGamma;
        let prior = ConjugatePrior::scalar(2.0, 1.0);
        let u = MomentSpaceBox::new(&fam, vec![1.5], vec![2.5]).unwrap();
        let cert = certify_box(&fam, &prior, &u).unwrap();
        // suff stats chosen to put mu_x exactly at 2.0
        let count = 10_000usize;
        let suff = vec![2.0 * (prior.nu + count as f64) - prior.xi[0]];
        let m = fam.log_marginal_from_suff(&prior, &suff, count).unwrap();
        let mt = fam.log_marginal_tilde(&prior, &suff, count).unwrap();
        let ratio = m - mt;
        let theta = fam.theta_of_mu(&[2.0]).unwrap();
        let limit = 0.5 * (TAU / fam.kappa_hessian(&theta).unwrap()[0][0]).ln()
            - fam.psi(&prior.xi, prior.nu).unwrap();
        approx::assert_relative_eq!(ratio, limit, epsilon = 1e-3);
        assert!(cert.log_ratio_lower < limit && limit < cert.log_ratio_upper);
    }

    #[test]
    fn splitting_inequality_holds_on_random_splits() {
        for sc in scenarios() {
            let u = MomentSpaceBox::new(&sc.family, sc.u.0.clone(), sc.u.1.clone()).unwrap();
            let bound = splitting_bound(&sc.family, &sc.prior, &u).unwrap();
            let k = sc.family.suff_dim() as f64;
            let mut rng = ChaCha8Rng::seed_from_u64(22);
            let data: Vec<Vec<f64>> =
                (0..60).map(|_| sc.family.sample(&sc.theta_true, &mut rng).unwrap()).collect();
            let mut checked = 0usize;
            for _ in 0..500 {
                let l = rng.gen_range(2..=20);
                let start = rng.gen_range(0..=(60 - l));
                let subset: Vec<Vec<f64>> = data[start..start + l].to_vec();
                let cut = rng.gen_range(1..l);
                let (j1, j2) = subset.split_at(cut);
                let mut in_hull = true;
                for part in [&subset[..], j1, j2] {
                    let (suff, count) = sc.family.suff_sum(part).unwrap();
                    let mu = sc.family.mu_from_suff(&sc.prior, &suff, count).unwrap();
                    in_hull &= bound.hull.contains(&mu);
                }
                if !in_hull {
                    continue;
                }
                checked += 1;
                let m_j = sc.family.log_marginal(&sc.prior, &subset).unwrap();
                let m_1 = sc.family.log_marginal(&sc.prior, j1).unwrap();
                let m_2 = sc.family.log_marginal(&sc.prior, j2).unwrap();
                let nu_1 = sc.prior.nu + j1.len() as f64;
                let nu_2 = sc.prior.nu + j2.len() as f64;
                let nu_j = sc.prior.nu + l as f64;
                let rhs = bound.log_split_constant
                    + (k / 2.0) * (nu_1 * nu_2 / nu_j).ln()
                    + m_1
                    + m_2;
                assert!(
                    m_j <= rhs,
                    "{:?}: split violates bound: {m_j} > {rhs}",
                    sc.family
                );
                // the singleton constant dominates every single-point split
                if j2.len() == 1 {
                    let rhs_single = bound.log_singleton_constant + m_1 + m_2;
                    assert!(m_j <= rhs_single);
                }
            }
            assert!(checked > 50, "{:?}: only {checked} splits inside hull", sc.family);
        }
    }

    #[test]
    fn refusals_and_validation() {
        let fam = ExpFam::ExponentialGamma;
        // box reaching huge means: theta margin 2^-21 is below the smallest
        // ball radius the certification will try
        let u = MomentSpaceBox::new(&fam, vec![1.0], vec![(1u64 << 21) as f64]).unwrap();
        let prior = ConjugatePrior::scalar(1.0, 1.0);
        match certify_box(&fam, &prior, &u) {
            Err(crate::error::Error::Refused(_)) => {}
            other => panic!("expected refusal, got {other:?}"),
        }

        // boxes outside the moment space are rejected outright
        assert!(MomentSpaceBox::new(&fam, vec![0.0], vec![1.0]).is_err());
        assert!(MomentSpaceBox::new(&ExpFam::NormalGamma, vec![-2.0, 1.0], vec![2.0, 4.0]).is_err());
        assert!(MomentSpaceBox::new(&ExpFam::NormalGamma, vec![-1.0, 1.5], vec![1.0, 4.0]).is_ok());

        // a prior mean far outside the box can push the hull out of the
        // moment space for the normal-gamma family
        let fam = ExpFam::NormalGamma;
        let u = MomentSpaceBox::new(&fam, vec![2.0, 9.5], vec![3.0, 10.0]).unwrap();
        let prior = ConjugatePrior::new(vec![-4.0, 16.5], 1.0);
        fam.validate_prior(&prior).unwrap();
        match splitting_bound(&fam, &prior, &u) {
            Err(crate::error::Error::Refused(_)) => {}
            other => panic!("expected hull refusal, got {other:?}"),
        }
    }

    #[test]
    fn sandwich_brackets_gaussian_closed_form() {
        // h(0, theta) = theta^2/2 for unit variance: g(t) = sqrt(2 pi / t)
        let fam = ExpFam::GaussianKnownVariance { variances: vec![1.0] };
        for t in [1.0, 4.0, 100.0, 1000.0] {
            let r = laplace_sandwich(&fam, &[0.0], t, 1.0, 0.5, 1.0, 1.0, 1.0).unwrap();
            let exact = (TAU / t).sqrt();
            assert!(r.lower <= exact && exact <= r.upper, "t = {t}");
            approx::assert_relative_eq!(r.quadrature.unwrap(), exact, max_relative = 1e-9);
        }
        // the t = 4, eps = 1 bracket in closed form: the ball mass bound is
        // P(|Z| <= 2) sqrt(2 pi / 4) and the tail anchor is g(1) = sqrt(2 pi)
        let r = laplace_sandwich(&fam, &[0.0], 4.0, 1.0, 0.5, 1.0, 1.0, 1.0).unwrap();
        approx::assert_relative_eq!(
            r.lower,
            chi_cdf(1, 2.0) * (TAU / 4.0).sqrt(),
            epsilon = 1e-12
        );
        approx::assert_relative_eq!(
            r.upper,
            (TAU / 4.0).sqrt() + (-1.5f64).exp() * TAU.sqrt(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn sandwich_brackets_count_family_quadrature() {
        let fam = ExpFam::PoissonGamma;
        let prior = ConjugatePrior::scalar(1.0, 1.0);
        let u = MomentSpaceBox::new(&fam, vec![0.5], vec![2.0]).unwrap();
        let cert = certify_box(&fam, &prior, &u).unwrap();
        for t in [1.0, 10.0, 100.0, 1000.0] {
            let r = laplace_sandwich(
                &fam, &[1.0], t, cert.epsilon, cert.delta, cert.alpha, cert.beta, 1.0,
            )
            .unwrap();
            let q = r.quadrature.unwrap();
            assert!(
                r.lower <= q && q <= r.upper,
                "t = {t}: {} <= {q} <= {} fails",
                r.lower,
                r.upper
            );
        }
        // for large t the tail vanishes and the bracket ratio approaches
        // sqrt(beta / alpha)
        let r = laplace_sandwich(
            &fam, &[1.0], 1e8, cert.epsilon, cert.delta, cert.alpha, cert.beta, 1.0,
        )
        .unwrap();
        approx::assert_relative_eq!(
            r.upper / r.lower,
            (cert.beta / cert.alpha).sqrt(),
            max_relative = 1e-6
        );
    }

    #[test]
    fn sandwich_input_validation() {
        let fam = ExpFam::PoissonGamma;
        // anchor point s beyond t
        assert!(laplace_sandwich(&fam, &[1.0], 1.0, 0.5, 0.1, 0.5, 2.0, 2.0).is_err());
        // mu on the boundary of the moment space
        assert!(laplace_sandwich(&fam, &[0.0], 10.0, 0.5, 0.1, 0.5, 2.0, 1.0).is_err());
        // unordered curvature range
        assert!(laplace_sandwich(&fam, &[1.0], 10.0, 0.5, 0.1, 3.0, 2.0, 1.0).is_err());
        // two-dimensional families get bounds but no quadrature column
        let fam = ExpFam::NormalGamma;
        let r = laplace_sandwich(&fam, &[0.0, 1.0], 10.0, 0.1, 0.01, 0.2, 5.0, 1.0).unwrap();
        assert!(r.quadrature.is_none());
        assert!(0.0 < r.lower && r.lower <= r.upper);
    }

    #[test]
    fn splitting_certifies_over_the_hull() {
        // with the prior mean far from the box, subsets whose posterior mean
        // parameters interpolate toward the prior mean still satisfy the
        // inequality: the certificate must cover the hull, not just the box
        let fam = ExpFam::PoissonGamma;
        let prior = ConjugatePrior::scalar(4.0, 1.0);
        let u = MomentSpaceBox::new(&fam, vec![0.5], vec![1.0]).unwrap();
        let bound = splitting_bound(&fam, &prior, &u).unwrap();
        assert_eq!(bound.hull.lo, vec![0.5]);
        assert_eq!(bound.hull.hi, vec![4.0]);
        assert_eq!(bound.constants.u, bound.hull);

        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let theta = fam.theta_of_mu(&[3.0]).unwrap();
        let data: Vec<Vec<f64>> =
            (0..40).map(|_| fam.sample(&theta, &mut rng).unwrap()).collect();
        let mut checked = 0usize;
        for _ in 0..300 {
            let l = rng.gen_range(2..=15);
            let start = rng.gen_range(0..=(40 - l));
            let subset: Vec<Vec<f64>> = data[start..start + l].to_vec();
            let cut = rng.gen_range(1..l);
            let (j1, j2) = subset.split_at(cut);
            let mut in_hull = true;
            for part in [&subset[..], j1, j2] {
                let (suff, count) = fam.suff_sum(part).unwrap();
                let mu = fam.mu_from_suff(&prior, &suff, count).unwrap();
                in_hull &= bound.hull.contains(&mu);
            }
            if !in_hull {
                continue;
            }
            checked += 1;
            let m_j = fam.log_marginal(&prior, &subset).unwrap();
            let m_1 = fam.log_marginal(&prior, j1).unwrap();
            let m_2 = fam.log_marginal(&prior, j2).unwrap();
            let nu_1 = prior.nu + j1.len() as f64;
            let nu_2 = prior.nu + j2.len() as f64;
            let nu_j = prior.nu + l as f64;
            let rhs = bound.log_split_constant
                + 0.5 * (nu_1 * nu_2 / nu_j).ln()
                + m_1
                + m_2;
            assert!(m_j <= rhs, "split violates bound: {m_j} > {rhs}");
        }
        assert!(checked > 30, "only {checked} splits inside hull");
    }

    #[test]
    fn point_boxes_certify() {
        // the degenerate box {1} is the observable region used by the count
        // experiments; everything must go through
        let fam = ExpFam::PoissonGamma;
        let prior = ConjugatePrior::scalar(1.0, 1.0);
        let u = MomentSpaceBox::point(&fam, vec![1.0]).unwrap();
        let cert = certify_box(&fam, &prior, &u).unwrap();
        assert!(cert.c_lower > 0.0 && cert.c_upper.is_finite());
        let bound = splitting_bound(&fam, &prior, &u).unwrap();
        assert!(bound.log_singleton_constant.is_finite());
    }
}
