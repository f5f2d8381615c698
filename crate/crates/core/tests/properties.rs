mod support;

use cpf_core::estimators::autoregressive_refresh;
use cpf_core::filter::{
    bootstrap_filter, coupled_filter_observed, AuxiliaryNoise, CouplingScheme, FilterConfig, RngNoise,
    StateSpaceModel,
};
use cpf_core::math::LN_2PI;
use cpf_core::models::{
    gamma_matrix, kalman_loglik, par_diffusion_matrix, par_hazard, LinearGaussian, LinearGaussianParams, Par,
    ParParams, Ricker, RickerParams,
};
use cpf_core::neighbours::{symmetric_knn_support, PointSet, DEFAULT_LEAF_SIZE};
use cpf_core::resampling::{multinomial_resample_with, systematic_resample};
use cpf_core::simplex::{maximal_coupling, normalize, tv_distance};
use cpf_core::transport::{sinkhorn, sparse_sinkhorn, CostMatrix, SinkhornConfig};
use cpf_core::WeightSimplex;
use proptest::prelude::*;
use support::{rng, ricker_data, ricker_scaled, ricker_star};

fn weights(n: usize) -> impl Strategy<Value = WeightSimplex> {
    prop::collection::vec(0.001f64..1.0, n).prop_map(|w| normalize(&w).unwrap())
}

/// Two clouds of `n` points in `dim` dimensions with weights.
fn problem() -> impl Strategy<Value = (PointSet, PointSet, WeightSimplex, WeightSimplex)> {
    (2usize..24, 1usize..4).prop_flat_map(|(n, dim)| {
        (
            prop::collection::vec(-2.0f64..2.0, n * dim),
            prop::collection::vec(-2.0f64..2.0, n * dim),
            weights(n),
            weights(n),
        )
            .prop_map(move |(x, y, a, b)| (PointSet::new(x, dim).unwrap(), PointSet::new(y, dim).unwrap(), a, b))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dense_sinkhorn_has_exact_marginals((x, y, a, b) in problem(), lambda in prop::sample::select(vec![1.0, 10.0, 50.0])) {
        let cost = CostMatrix::from_clouds(&x, &y, 2.0).unwrap();
        let plan = sinkhorn(&cost, &a, &b, &SinkhornConfig::new(lambda)).unwrap();
        prop_assert!(plan.coupling.max_marginal_error() < 1e-12);
        prop_assert!(plan.coupling.min_entry() >= 0.0);
        prop_assert!((plan.coupling.total_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sparse_sinkhorn_is_a_coupling_for_any_support((x, y, a, b) in problem(), r in 1usize..6, iterations in 1usize..60) {
        let r = r.min(x.len());
        let (row_ptr, cols) = symmetric_knn_support(&x, &y, r, DEFAULT_LEAF_SIZE).unwrap();
        let cost = CostMatrix::from_clouds_on_support(&x, &y, row_ptr, cols, 2.0).unwrap();
        // Few iterations: the plan is cut short and must still be rounded
        // onto the exact marginals.
        let cfg = SinkhornConfig { max_iterations: iterations, ..SinkhornConfig::new(50.0) };
        let plan = sparse_sinkhorn(&cost, &a, &b, &cfg).unwrap();
        prop_assert!(plan.coupling.max_marginal_error() < 1e-12);
        prop_assert!(plan.coupling.min_entry() >= 0.0);
        prop_assert!(plan.iterations <= iterations);
    }

    #[test]
    fn maximal_coupling_puts_overlap_on_the_diagonal(a in weights(12), b in weights(12)) {
        let c = maximal_coupling(&a, &b).unwrap();
        prop_assert!(c.max_marginal_error() < 1e-12);
        let overlap: f64 = a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x.min(*y)).sum();
        prop_assert!((c.trace() - overlap).abs() < 1e-12);
        prop_assert!((c.trace() - (1.0 - tv_distance(&a, &b).unwrap())).abs() < 1e-12);
    }

    #[test]
    fn resampled_ancestors_are_in_range(a in weights(9), b in weights(9), u in 0.0f64..1.0, us in prop::collection::vec(0.0f64..1.0, 9)) {
        let c = maximal_coupling(&a, &b).unwrap();
        for pairs in [systematic_resample(&c, u), multinomial_resample_with(&c, &us)] {
            prop_assert_eq!(pairs.len(), 9);
            prop_assert!(pairs.a1.iter().chain(&pairs.a2).all(|&i| i < 9));
        }
    }

    #[test]
    fn gamma_is_orthogonal(x in -50.0f64..50.0, y in -50.0f64..50.0) {
        let g = gamma_matrix([x, y]);
        for i in 0..2 {
            for j in 0..2 {
                let dot = g[0][i] * g[0][j] + g[1][i] * g[1][j];
                prop_assert!((dot - f64::from(u8::from(i == j))).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn par_beta_is_symmetric_and_nonnegative(
        x in prop::array::uniform4(0.0f64..20.0),
        v in prop::array::uniform4(-1.0f64..1.0),
    ) {
        let p = ParParams::default();
        let b = par_diffusion_matrix(&par_hazard(&x, &p.c, p.k));
        for i in 0..4 {
            for j in 0..4 {
                prop_assert_eq!(b[i][j], b[j][i]);
            }
        }
        let q: f64 = (0..4).map(|i| (0..4).map(|j| v[i] * b[i][j] * v[j]).sum::<f64>()).sum();
        prop_assert!(q >= -1e-9 * (1.0 + b.iter().flatten().map(|e| e.abs()).sum::<f64>()));
    }

    #[test]
    fn par_states_stay_in_domain(x in prop::array::uniform4(0.0f64..15.0), u in prop::collection::vec(0.0001f64..0.9999, 40)) {
        let p = ParParams { x0: [x[0].min(10.0), x[1], x[2], x[3]], ..ParParams::default() };
        let m = Par::new(p, vec![0.0, 0.0]).unwrap();
        let mut out = [0.0; 4];
        m.transition(1, &p.x0, &u[..m.noise_dim()], &mut out);
        prop_assert!(out.iter().all(|&v| v >= 0.0));
        prop_assert!(out[0] <= p.k);
    }

    #[test]
    fn ricker_states_stay_nonnegative(x in prop::collection::vec(0.0f64..50.0, 3), u in prop::collection::vec(1e-12f64..1.0, 3)) {
        let m = Ricker::new(RickerParams { log_r: 2.0, sigma_eps: 0.3, phi: 5.0, x0: vec![5.0; 3] }, vec![0.0; 3]).unwrap();
        let mut out = [0.0; 3];
        m.transition(1, &x, &u, &mut out);
        prop_assert!(out.iter().all(|&v| v >= 0.0 && v.is_finite()));
    }

    #[test]
    fn refresh_without_correlation_ignores_the_input(u in prop::collection::vec(-3.0f64..3.0, 16), v in prop::collection::vec(-3.0f64..3.0, 16), seed in any::<u64>()) {
        let mut a = vec![0.0; 16];
        let mut b = vec![0.0; 16];
        autoregressive_refresh(&u, 0.0, &mut rng(seed), &mut a);
        autoregressive_refresh(&v, 0.0, &mut rng(seed), &mut b);
        prop_assert_eq!(&a, &b);
        autoregressive_refresh(&u, 1.0, &mut rng(seed), &mut a);
        prop_assert_eq!(&a, &u);
    }

    #[test]
    fn kalman_matches_joint_gaussian_density(
        a in -1.2f64..1.2,
        sigma_x in 0.1f64..2.0,
        sigma_y in 0.1f64..2.0,
        prior_mean in -2.0f64..2.0,
        prior_var in 0.0f64..3.0,
        ys in prop::collection::vec(-4.0f64..4.0, 3),
    ) {
        let p = LinearGaussianParams { a, sigma_x, sigma_y, prior_mean, prior_var };
        prop_assert!((kalman_loglik(&p, &ys) - joint_gaussian_loglik(&p, &ys)).abs() < 1e-10);
    }

    #[test]
    fn auxiliary_noise_fixes_the_estimate(values in prop::collection::vec(-3.0f64..3.0, 8 + 3 * (8 + 8))) {
        let m = LinearGaussian::new(LinearGaussianParams { a: 0.9, sigma_x: 1.0, sigma_y: 1.0, prior_mean: 0.0, prior_var: 1.0 }, vec![0.1, -0.4, 1.3, 0.2]).unwrap();
        let cfg = FilterConfig::new(8);
        let mut aux = AuxiliaryNoise::zeros(&m, 8);
        prop_assert_eq!(aux.len(), values.len());
        aux.values_mut().copy_from_slice(&values);
        let first = bootstrap_filter(&m, &cfg, &mut aux.clone()).unwrap();
        let second = bootstrap_filter(&m, &cfg, &mut aux).unwrap();
        prop_assert_eq!(first.0.to_bits(), second.0.to_bits());
        prop_assert_eq!(first.1, second.1);
    }
}

/// `log N(y; μ, Σ)` for the three observations, built from the joint
/// covariance of the state path.
fn joint_gaussian_loglik(p: &LinearGaussianParams, ys: &[f64]) -> f64 {
    let n = ys.len();
    let mut var_x = vec![0.0; n];
    var_x[0] = p.prior_var;
    for t in 1..n {
        var_x[t] = p.a * p.a * var_x[t - 1] + p.sigma_x * p.sigma_x;
    }
    let mut cov = vec![vec![0.0; n]; n];
    for s in 0..n {
        for t in s..n {
            let c = p.a.powi((t - s) as i32) * var_x[s];
            cov[s][t] = c;
            cov[t][s] = c;
        }
        cov[s][s] += p.sigma_y * p.sigma_y;
    }
    let resid: Vec<f64> = (0..n).map(|t| ys[t] - p.a.powi(t as i32) * p.prior_mean).collect();
    // Cholesky and a forward solve.
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = cov[i][j] - (0..j).map(|k| l[i][k] * l[j][k]).sum::<f64>();
            l[i][j] = if i == j { s.sqrt() } else { s / l[j][j] };
        }
    }
    let mut z = vec![0.0; n];
    for i in 0..n {
        z[i] = (resid[i] - (0..i).map(|k| l[i][k] * z[k]).sum::<f64>()) / l[i][i];
    }
    let log_det: f64 = (0..n).map(|i| 2.0 * l[i][i].ln()).sum();
    -0.5 * (n as f64 * LN_2PI + log_det + z.iter().map(|v| v * v).sum::<f64>())
}

#[test]
fn traces_agree_with_the_clouds() {
    let star = ricker_star(2);
    let obs = ricker_data(&star, 15, 3);
    let m1 = Ricker::new(ricker_scaled(&star, 0.95), obs.clone()).unwrap();
    let m2 = Ricker::new(ricker_scaled(&star, 1.05), obs).unwrap();
    let cfg = FilterConfig::new(64);
    for scheme in [CouplingScheme::Independent, CouplingScheme::Maximal, CouplingScheme::OtDense(SinkhornConfig::new(50.0))] {
        let mut seen = Vec::new();
        let run = coupled_filter_observed(&m1, &m2, &cfg, &scheme, &mut RngNoise(rng(4)), |_, c1, c2| {
            let paired = c1.lineage().iter().zip(c2.lineage()).filter(|(a, b)| a == b).count();
            let sq: f64 = c1.states().iter().zip(c2.states()).map(|(a, b)| (a - b) * (a - b)).sum();
            seen.push((paired, sq / c1.len() as f64));
        })
        .unwrap();
        assert_eq!(seen.len(), run.trace.len());
        for (s, (paired, e)) in run.trace.iter().zip(seen) {
            assert_eq!(s.paired, paired);
            assert!((s.mean_sq_distance - e).abs() <= 1e-10 * (1.0 + e));
        }
    }
}
