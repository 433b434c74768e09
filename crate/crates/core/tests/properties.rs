use proptest::prelude::*;

use permlab_core::char_exponent::CharExponent;
use permlab_core::diffusion::{PQPotential, ScalePotential};
use permlab_core::excessive::{Excessive, ExcessiveKind};
use permlab_core::expr::Expr;
use permlab_core::kernel::{AugmentedKernel, GridSpec, SIGN_TOL};
use permlab_core::levy::LevyPotential;
use permlab_core::linalg::Matrix;
use permlab_core::potential::SymmetricPotential;
use permlab_core::rebirth::{
    full_rebirth_potential, partial_rebirth_potential, simulate_local_times, FiniteChain, JumpChain, ModelSpec, SimOptions,
};
use permlab_core::sampling::{sample_chi_square, LilConfig};

fn exp_pair(beta: f64) -> PQPotential<f64> {
    let c = (2.0 * beta).sqrt();
    PQPotential::new(Expr::parse(&format!("exp({}*x)", c)).unwrap(), Expr::parse(&format!("exp(-{}*x)", c)).unwrap(), beta, (-3.0, 3.0))
        .unwrap()
}

fn atoms() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((1.01f64..2.0, 0.1f64..2.0), 1..4)
}

/// `m`-symmetric sub-Markov generator on `n` states with positive killing somewhere.
fn chain(n: usize) -> impl Strategy<Value = FiniteChain<f64>> {
    (prop::collection::vec(0.0f64..2.0, n * n), prop::collection::vec(0.5f64..2.0, n), prop::collection::vec(0.05f64..1.0, n))
        .prop_map(move |(c, m, kill)| {
            let cond = |i: usize, j: usize| c[i.min(j) * n + i.max(j)];
            let q = Matrix::from_fn(n, n, |i, j| {
                if i == j {
                    -((0..n).filter(|&k| k != i).map(|k| cond(i, k)).sum::<f64>() + kill[i]) / m[i]
                } else {
                    cond(i, j) / m[i]
                }
            });
            FiniteChain::new(q, m).unwrap()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn psi_even_increasing_and_zero_at_origin(atoms in atoms(), c in 0.0f64..2.0, l in 1e-3f64..1e3) {
        let psi = CharExponent::gaussian_plus(c, atoms).unwrap();
        prop_assert_eq!(psi.eval_psi(0.0), 0.0);
        prop_assert_eq!(psi.eval_psi(l), psi.eval_psi(-l));
        prop_assert!(psi.eval_psi(l * 1.01) > psi.eval_psi(l));
    }

    #[test]
    fn pq_kernel_symmetric_and_below_diagonal(beta in 0.1f64..3.0, x in -2.9f64..2.9, y in -2.9f64..2.9) {
        let p = exp_pair(beta);
        prop_assert_eq!(p.eval_pq(x, y), p.eval_pq(y, x));
        prop_assert!(p.eval_pq(x, y) <= p.eval_pq(x, x).min(p.eval_pq(y, y)) * (1.0 + 1e-15));
    }

    #[test]
    fn scale_function_positive_and_increasing(a in 0.1f64..3.0, b in 0.0f64..2.0, x in 0.01f64..3.9) {
        let s = ScalePotential::new(Expr::parse(&format!("{}*x + {}*x^3", a, b)).unwrap(), 4.0).unwrap();
        let sx: f64 = s.s.eval(x);
        prop_assert!(sx > 0.0);
        prop_assert!(s.b(x) > 0.0);
        prop_assert!((s.eval_scale_min(x, 2.0).unwrap() - 2.0 * sx.min(s.s.eval(2.0))).abs() <= 1e-12 * sx.max(1.0));
    }

    #[test]
    fn grid_layout(d in -1.0f64..1.0, theta in 0.3f64..0.8, n in 4usize..80, q in 0.2f64..0.9) {
        let spec = GridSpec::new(d, theta, n, q);
        if let Ok(pts) = spec.build_grid::<f64>() {
            let m = spec.m();
            prop_assert_eq!(m, n + 1 - (n as f64).powf(q).floor() as usize);
            prop_assert_eq!(pts.len(), m + 1);
            prop_assert_eq!(pts[0], d);
            for j in 1..=m {
                prop_assert_eq!(pts[j], d + theta.powi((n + 1 - j) as i32));
            }
            prop_assert!(theta.powi((n + 1 - m) as i32) <= (-std::f64::consts::E).exp());
        }
    }

    #[test]
    fn excessive_functions_non_negative(beta in 0.2f64..2.0, a in -2.5f64..2.0, w in 0.05f64..0.9, x in -3.0f64..3.0) {
        let u = SymmetricPotential::PQ(exp_pair(beta));
        let ind = Excessive::new(ExcessiveKind::Indicator { a, b: a + w }, u.clone()).unwrap();
        let at = Excessive::new(ExcessiveKind::Atoms(vec![(a, w)]), u).unwrap();
        prop_assert!(ind.eval(x).unwrap() >= 0.0);
        prop_assert!(at.eval(x).unwrap() >= 0.0);
    }

    #[test]
    fn kernel_invariants_on_min_kernels(
        atoms in prop::collection::vec((0.2f64..3.5, 0.1f64..2.0), 1..3),
        c in 0.1f64..2.0,
        d in 0.3f64..2.5,
        theta in 0.4f64..0.7,
        q in 0.7f64..0.9,
        extra in 0usize..6,
    ) {
        let u = SymmetricPotential::Scale(ScalePotential::new(Expr::parse("x").unwrap(), 4.0).unwrap());
        let f = Excessive::new(ExcessiveKind::Atoms(atoms), u.clone()).unwrap();
        let g = Excessive::new(ExcessiveKind::Const(c), u.clone()).unwrap();
        let n_min = ((-std::f64::consts::E / theta.ln()).ceil().powf(1.0 / q)).ceil() as usize;
        let pts = GridSpec::new(d, theta, n_min + extra, q).build_grid().unwrap();
        let k = AugmentedKernel::assemble(&u, &f, &g, &pts).unwrap();
        // admissible instances: the determinant ratio is only as accurate as G is conditioned
        prop_assume!(k.condition <= 1e5);
        prop_assert!((k.det_ratio().unwrap() - 1.0).abs() <= 1e-10);
        let dec = k.decompose().unwrap();
        prop_assert!(dec.nu >= 1.0 - SIGN_TOL);
        prop_assert!(dec.mmatrix_report(&k).ok);
    }

    #[test]
    fn chi_square_samples_non_negative_and_reproducible(a in 0.1f64..2.0, rho in -0.9f64..0.9, k in 1usize..4, seed in any::<u64>()) {
        let cov = Matrix::from_rows(&[vec![a, rho * a.sqrt()], vec![rho * a.sqrt(), 1.0]]);
        let s = sample_chi_square(&cov, k, 200, seed).unwrap();
        prop_assert!(s.data.iter().all(|&x| x >= 0.0));
        prop_assert_eq!(s, sample_chi_square(&cov, k, 200, seed).unwrap());
    }

    #[test]
    fn partial_rebirth_layout(c in (1usize..5).prop_flat_map(chain), scale in 0.0f64..1.0) {
        let n = c.len();
        let u = c.potential().unwrap();
        let mu: Vec<f64> = (0..n).map(|i| scale * (i + 1) as f64 / (n * (n + 1)) as f64 * 2.0).collect();
        let ext = partial_rebirth_potential(&u, &mu).unwrap();
        let w = &ext.matrix;
        let f: Vec<f64> = (0..n).map(|y| (0..n).map(|x| mu[x] * u[(x, y)]).sum()).collect();
        for y in 0..n {
            prop_assert!((w[(0, y + 1)] - f[y]).abs() <= 1e-12 * f[y].max(1.0));
            for x in 0..n {
                let want = u[(x, y)] + f[y];
                prop_assert!((w[(x + 1, y + 1)] - want).abs() <= 1e-12 * want);
            }
        }
        for x in 0..=n {
            prop_assert_eq!(w[(x, 0)], 1.0);
        }
        prop_assert!(ext.inverse_m_matrix);
    }

    #[test]
    fn full_rebirth_resolvent_mass(c in (1usize..6).prop_flat_map(chain), p in 0.05f64..5.0, raw in prop::collection::vec(0.01f64..1.0, 5)) {
        let n = c.len();
        let total: f64 = raw[..n].iter().sum();
        let mu: Vec<f64> = raw[..n].iter().map(|x| x / total).collect();
        let w = full_rebirth_potential(&c.resolvent(p).unwrap(), &mu, &c.m, p).unwrap();
        for x in 0..n {
            let mass: f64 = (0..n).map(|y| w[(x, y)] * c.m[y]).sum();
            prop_assert!((p * mass - 1.0).abs() <= 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn levy_potential_symmetries(r in 1.1f64..2.0, beta in 0.2f64..2.0, x in 0.05f64..3.0) {
        let p = LevyPotential::new(CharExponent::stable(r).unwrap(), beta).unwrap();
        let (u0, ux) = (p.eval_u_beta(0.0).unwrap(), p.eval_u_beta(x).unwrap());
        prop_assert!((ux - p.eval_u_beta(-x).unwrap()).abs() <= 1e-12 * u0);
        prop_assert!(ux <= u0);
        prop_assert_eq!(p.eval_sigma2(0.0).unwrap(), 0.0);
        let s = p.eval_sigma2(x).unwrap();
        prop_assert!((s - p.eval_sigma2(-x).unwrap()).abs() <= 1e-12 * s.max(1e-300));
        prop_assert!((s - 2.0 * (u0 - ux)).abs() <= 6.0 * p.quad.budget(2.0 * u0));
    }

    #[test]
    fn brownian_indicator_potential(a in -2.0f64..1.0, w in 0.1f64..2.0, x in -3.0f64..3.0) {
        // ∫_a^b e^{−|x−y|} dy in closed form
        let b = a + w;
        let want = if x <= a {
            (-(a - x)).exp() - (-(b - x)).exp()
        } else if x >= b {
            (-(x - b)).exp() - (-(x - a)).exp()
        } else {
            2.0 - (-(x - a)).exp() - (-(b - x)).exp()
        };
        let u = SymmetricPotential::Levy(LevyPotential::new(CharExponent::brownian(0.5).unwrap(), 0.5).unwrap());
        let f = Excessive::new(ExcessiveKind::Indicator { a, b }, u).unwrap();
        prop_assert!((f.eval(x).unwrap() - want).abs() <= 1e-6);
    }

    #[test]
    fn local_times_non_negative_and_occupation_exact(c in (1usize..4).prop_flat_map(chain), seed in any::<u64>(), horizon in prop::option::of(0.1f64..5.0)) {
        let fields = simulate_local_times(&JumpChain::from_chain(&c), 0, 200, seed, SimOptions { horizon, ..Default::default() }).unwrap();
        for f in &fields {
            prop_assert!(f.l.iter().all(|&l| l >= 0.0));
            prop_assert!(f.occupation_residual(&c.m.iter().map(|&x| x).collect::<Vec<f64>>()) <= 1e-12);
        }
    }
}

#[test]
fn configs_reject_unknown_keys() {
    assert!(serde_json::from_str::<GridSpec>(r#"{"d":0,"theta":0.5,"n":16,"q":0.5,"extra":1}"#).is_err());
    assert!(serde_json::from_str::<ModelSpec>(r#"{"states":1,"m":[1],"generator":[[-1]],"mu_typo":[0]}"#).is_err());
    assert!(serde_json::from_str::<LilConfig>(
        r#"{"base":{"kind":"scale","s":"x","upper":4},"d":1,"theta":0.5,"q":0.5,"schedule":[16],"k":1,"n_paths":10,"seed":1,"eps":0.3}"#
    )
    .is_err());
}
