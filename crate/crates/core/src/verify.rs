//! The `core` invariant battery run by `permlab verify`.

use serde::Serialize;

use crate::char_exponent::CharExponent;
use crate::diffusion::PQPotential;
use crate::error::Result;
use crate::excessive::{make_flat_pair, Excessive, ExcessiveKind};
use crate::expr::Expr;
use crate::kernel::{a_bound, AugmentedKernel, GridSpec, SIGN_TOL};
use crate::levy::{c_r_constant, LevyPotential};
use crate::linalg::Matrix;
use crate::potential::SymmetricPotential;
use crate::rebirth::{
    ek_identity_check, full_rebirth_potential, local_time_means, partial_rebirth_potential, resolvent_mass_residual,
    simulate_local_times, FiniteChain, JumpChain, SimOptions, TestFunction,
};
use crate::sampling::{laplace_check, lil_harness, sample_chi_square};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub module: &'static str,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn run(module: &'static str, name: &'static str, f: impl FnOnce() -> Result<(bool, String)>) -> Check {
    match f() {
        Ok((passed, detail)) => Check { module, name, passed, detail },
        Err(e) => Check { module, name, passed: false, detail: format!("error: {}", e) },
    }
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64)).collect()
}

fn exponents() -> Result<Vec<CharExponent<f64>>> {
    Ok(vec![
        CharExponent::stable(1.5)?,
        CharExponent::mixture(vec![(1.3, 1.0), (1.8, 0.5)])?,
        CharExponent::gaussian_plus(0.5, vec![(1.5, 0.2)])?,
        CharExponent::brownian(0.5)?,
    ])
}

fn exp_pair(beta: f64) -> Result<PQPotential<f64>> {
    let c = (2.0 * beta).sqrt();
    PQPotential::new(Expr::parse(&format!("exp({}*x)", c))?, Expr::parse(&format!("exp(-{}*x)", c))?, beta, (-3.0, 3.0))
}

fn char_exponent_checks(out: &mut Vec<Check>) {
    let grid = log_grid(1e-3, 1e3, 61);
    out.push(run("char_exponent", "psi even and increasing on a log grid", || {
        let mut worst = 0.0f64;
        let mut ok = true;
        for psi in exponents()? {
            let mut prev = 0.0;
            for &l in &grid {
                let (a, b) = (psi.eval_psi(l), psi.eval_psi(-l));
                worst = worst.max((a - b).abs());
                ok &= a == b && a > prev;
                prev = a;
            }
        }
        Ok((ok, format!("max |ψ(λ) − ψ(−λ)| = {:.1e}", worst)))
    }));
    out.push(run("char_exponent", "mixture derivative bounds", || {
        let mut ok = true;
        for psi in exponents()?.into_iter().filter(|p| p.is_stable_mixture()) {
            let (g0, g1) = psi.index_range();
            for &l in &grid {
                let p = psi.eval_psi(l);
                let (d1, d2) = psi.eval_psi_derivs(l)?;
                let slack = 1e-12 * p;
                ok &= g0 * p - slack <= l * d1 && l * d1 <= g1 * p + slack;
                ok &= g0 * (g0 - 1.0) * p - slack <= l * l * d2 && l * l * d2 <= g1 * (g1 - 1.0) * p + slack;
            }
        }
        Ok((ok, "γ₀ψ ≤ λψ' ≤ γ₁ψ and the second-order analogue".into()))
    }));
    out.push(run("char_exponent", "derivatives match finite differences", || {
        let mut worst = 0.0f64;
        for psi in exponents()? {
            for l in [0.1, 1.0, 10.0] {
                let h = 1e-3 * l;
                let (d1, d2) = psi.eval_psi_derivs(l)?;
                let (pm, p0, pp) = (psi.eval_psi(l - h), psi.eval_psi(l), psi.eval_psi(l + h));
                worst = worst.max(((pp - pm) / (2.0 * h) - d1).abs() / d1.abs());
                worst = worst.max(((pp - 2.0 * p0 + pm) / (h * h) - d2).abs() / d2.abs());
            }
        }
        Ok((worst <= 1e-5, format!("max relative error {:.1e}", worst)))
    }));
}

fn levy_checks(out: &mut Vec<Check>) {
    let xs = [0.1, 0.5, 1.0, 3.0];
    let pots = || -> Result<Vec<LevyPotential<f64>>> {
        Ok(vec![LevyPotential::new(CharExponent::brownian(0.5)?, 0.5)?, LevyPotential::new(CharExponent::stable(1.5)?, 1.0)?])
    };
    out.push(run("levy_potentials", "u^β maximal at 0, σ² non-negative and even", || {
        let mut ok = true;
        for p in pots()? {
            let u0 = p.eval_u_beta(0.0)?;
            for &x in &xs {
                ok &= p.eval_u_beta(x)? <= u0;
                let (a, b) = (p.eval_sigma2(x)?, p.eval_sigma2(-x)?);
                ok &= a >= 0.0 && (a - b).abs() <= 1e-12 * a;
            }
        }
        Ok((ok, "sampled at x ∈ {0.1, 0.5, 1, 3}".into()))
    }));
    out.push(run("levy_potentials", "σ² agrees with 2(u(0) − u(x))", || {
        let mut worst = 0.0f64;
        let mut ok = true;
        for p in pots()? {
            let u0 = p.eval_u_beta(0.0)?;
            for &x in &xs {
                let gap = (p.eval_sigma2(x)? - 2.0 * (u0 - p.eval_u_beta(x)?)).abs();
                let tol = 2.0 * (p.quad.budget(2.0 * u0) * 3.0);
                ok &= gap <= tol;
                worst = worst.max(gap);
            }
        }
        Ok((ok, format!("max gap {:.1e}", worst)))
    }));
    out.push(run("levy_potentials", "v^β below the diagonal minimum", || {
        let p = LevyPotential::<f64>::new(CharExponent::stable(1.5)?, 1.0)?;
        let mut ok = true;
        for (x, y) in [(0.5, 1.0), (1.0, 2.0), (-1.0, 0.7)] {
            let v = p.eval_v_beta(x, y)?;
            ok &= v <= p.eval_v_beta(x, x)?.min(p.eval_v_beta(y, y)?) + 1e-9;
        }
        Ok((ok, "stable 1.5, β = 1".into()))
    }));
    out.push(run("levy_potentials", "C_2 = 1", || {
        let c = c_r_constant(2.0f64)?;
        Ok(((c - 1.0).abs() <= 1e-8, format!("C_2 = {:.12}", c)))
    }));
    out.push(run("levy_potentials", "σ² asymptotic ratio at x = 1e-4", || {
        let mut ok = true;
        let mut detail = Vec::new();
        for r in [1.2, 1.5, 1.9] {
            for beta in [0.0, 1.0] {
                let p = LevyPotential::new(CharExponent::stable(r)?, beta)?;
                let ratio = p.check_sigma2_asymptotics(&[1e-4])?[0].ratio;
                ok &= (0.95..=1.05).contains(&ratio);
                detail.push(format!("r={} β={}: {:.4}", r, beta, ratio));
            }
        }
        Ok((ok, detail.join(", ")))
    }));
}

fn diffusion_checks(out: &mut Vec<Check>) {
    let pts = [-2.0, -0.7, 0.0, 0.4, 1.3, 2.5];
    out.push(run("diffusion_potentials", "ũ below the diagonal minimum", || {
        let mut ok = true;
        for beta in [0.5, 2.0] {
            let p = exp_pair(beta)?;
            for &x in &pts {
                for &y in &pts {
                    ok &= p.eval_pq(x, y) <= p.eval_pq(x, x).min(p.eval_pq(y, y)) * (1.0 + 1e-15);
                }
            }
        }
        Ok((ok, "exponential pairs, β ∈ {0.5, 2}".into()))
    }));
    out.push(run("diffusion_potentials", "σ̃²(d+h, d) ~ τ(d)h at h = 1e-5", || {
        let p = exp_pair(0.5)?;
        let mut ok = true;
        let mut worst = 0.0f64;
        for d in [-1.0, 0.0, 1.5] {
            let ratio = p.sigma2(d + 1e-5, d) / (p.tau(d)? * 1e-5);
            worst = worst.max((ratio - 1.0).abs());
            ok &= (0.99..=1.01).contains(&ratio);
        }
        Ok((ok, format!("max |ratio − 1| = {:.1e}", worst)))
    }));
    out.push(run("diffusion_potentials", "increments are negatively correlated", || {
        let p = exp_pair(0.5)?;
        let mut ok = true;
        for w in pts.windows(4) {
            let (x, y, z, t) = (w[0], w[1], w[2], w[3]);
            ok &= (p.p.eval(y) - p.p.eval(x)) * (p.q.eval(t) - p.q.eval(z)) <= 0.0;
        }
        Ok((ok, "consecutive quadruples".into()))
    }));
    out.push(run("diffusion_potentials", "Wronskian constant and defect small", || {
        let p = exp_pair(0.5)?;
        let b = Expr::parse("1")?;
        let bump = |x: f64| if x.abs() < 1.0 { (-1.0 / (1.0 - x * x)).exp() } else { 0.0 };
        let grid = [-1.5, -0.5, 0.0, 0.3, 0.8, 1.6];
        let rep = p.wronskian_defect(&b, &bump, (-1.0, 1.0), &grid, 1e-3)?;
        let ok = rep.wronskian_spread <= 1e-10 && rep.max_residual < 1e-4 && (rep.c_pq - 1.0).abs() < 1e-12;
        Ok((ok, format!("c = {:.12}, spread {:.1e}, residual {:.1e}", rep.c_pq, rep.wronskian_spread, rep.max_residual)))
    }));
}

fn excessive_checks(out: &mut Vec<Check>) {
    out.push(run("excessive", "Gram surrogate positivity on flat pairs", || {
        let mut worst = f64::INFINITY;
        let cases: Vec<(SymmetricPotential<f64>, f64, GridSpec)> = vec![
            (SymmetricPotential::PQ(exp_pair(0.5)?), 0.0, GridSpec::new(0.0, 0.7, 20, 0.7)),
            (SymmetricPotential::PQKilled(exp_pair(0.5)?), 1.0, GridSpec::new(1.0, 0.5, 16, 0.5)),
            (SymmetricPotential::from_json(r#"{"kind":"scale","s":"x","upper":4}"#, 1.0)?, 1.0, GridSpec::new(1.0, 0.5, 16, 0.5)),
            (
                SymmetricPotential::Levy(LevyPotential::new(CharExponent::stable(1.5)?, 1.0)?),
                0.0,
                GridSpec::new(0.0, 0.5, 16, 0.5),
            ),
        ];
        for (u, x0, grid) in cases {
            let (f, g) = make_flat_pair(x0, &u)?;
            let k = AugmentedKernel::assemble(&u, &f, &g, &grid.build_grid()?)?;
            let scale = k.r.iter().chain(&k.v).fold(0.0f64, |a, b| a.max(b.abs()));
            worst = k.r.iter().chain(&k.v).map(|x| x / scale).fold(worst, f64::min);
        }
        Ok((worst >= -SIGN_TOL, format!("min r_j, v_j relative to max = {:.2e}", worst)))
    }));
    out.push(run("excessive", "indicator derivative matches finite differences", || {
        let bases = vec![
            SymmetricPotential::Levy(LevyPotential::new(CharExponent::brownian(0.5)?, 0.5)?),
            SymmetricPotential::Levy(LevyPotential::new(CharExponent::stable(1.5)?, 1.0)?),
            SymmetricPotential::PQ(exp_pair(0.5)?),
        ];
        let mut worst = 0.0f64;
        for u in bases {
            let e = Excessive::new(ExcessiveKind::Indicator { a: 0.0, b: 2.0 }, u)?;
            for x in [-0.5, 0.6, 1.7] {
                let h = 1e-3;
                let fd = (e.eval(x + h)? - e.eval(x - h)?) / (2.0 * h);
                worst = worst.max((fd - e.eval_deriv(x)?).abs());
            }
        }
        Ok((worst <= 1e-5, format!("max error {:.1e}", worst)))
    }));
}

fn kernel_checks(out: &mut Vec<Check>) {
    let instances = || -> Result<Vec<AugmentedKernel<f64>>> {
        let mut v = Vec::new();
        let pq = SymmetricPotential::PQ(exp_pair(0.5)?);
        let (f, g) = make_flat_pair(0.0, &pq)?;
        v.push(AugmentedKernel::assemble(&pq, &f, &g, &GridSpec::new(0.0, 0.7, 20, 0.7).build_grid()?)?);
        let ind = Excessive::new(ExcessiveKind::Indicator { a: -1.0, b: 0.5 }, pq.clone())?;
        let atoms = Excessive::new(ExcessiveKind::Atoms(vec![(0.3, 1.0), (-0.8, 0.5)]), pq.clone())?;
        v.push(AugmentedKernel::assemble(&pq, &ind, &atoms, &GridSpec::new(0.2, 0.5, 16, 0.5).build_grid()?)?);
        let scale = SymmetricPotential::from_json(r#"{"kind":"scale","s":"x+x^2","upper":3}"#, 1.0)?;
        let c = Excessive::new(ExcessiveKind::Const(1.0), scale.clone())?;
        let at = Excessive::new(ExcessiveKind::Atoms(vec![(2.0, 0.5)]), scale.clone())?;
        v.push(AugmentedKernel::assemble(&scale, &at, &c, &GridSpec::new(1.0, 0.5, 16, 0.5).build_grid()?)?);
        Ok(v)
    };
    out.push(run("kernel_algebra", "M-matrix closure, det identity, ν ≥ 1, ρ = vᵀGr", || {
        let mut ok = true;
        let mut detail = Vec::new();
        for k in instances()? {
            let d = k.decompose()?;
            let mm = d.mmatrix_report(&k);
            let det = (k.det_ratio()? - 1.0).abs();
            let rho = (d.rho - d.rho_sym).abs();
            ok &= mm.ok && det <= 1e-10 && d.nu >= 1.0 - 1e-10 && rho <= 1e-10;
            detail.push(format!("ν−1={:.2e} det={:.1e} ρ={:.1e}", d.nu - 1.0, det, rho));
        }
        Ok((ok, detail.join("; ")))
    }));
    out.push(run("kernel_algebra", "K_isymi block equals G + ν⁻¹(Gh)(hG)", || {
        let mut worst = 0.0f64;
        for k in instances()? {
            let d = k.decompose()?;
            let scale = d.k_isymi.max_abs();
            worst = worst.max(d.isymi_dense_gap()? / scale);
        }
        Ok((worst <= 1e-10, format!("max relative gap {:.1e}", worst)))
    }));
    out.push(run("kernel_algebra", "a_j bounds", || {
        let mut ok = true;
        let mut cs = Vec::new();
        for k in instances()? {
            let d = k.decompose()?;
            let b = a_bound(&k, &d);
            // Gh > 0 entrywise exactly when h ≠ 0, since G > 0
            let positive = if d.h.iter().any(|&x| x > 0.0) { d.a.iter().all(|&a| a > 0.0) } else { d.a.iter().all(|&a| a == 0.0) };
            ok &= positive && b.fitted_c.is_finite();
            cs.push(format!("{:.3}", b.fitted_c));
        }
        Ok((ok, format!("fitted C = [{}]", cs.join(", "))))
    }));
}

fn sampling_checks(out: &mut Vec<Check>) {
    let cov = || Matrix::from_rows(&[vec![1.0, 0.5], vec![0.5, 1.0]]);
    out.push(run("sampling_lil", "identical seeds give identical samples", || {
        let a = sample_chi_square(&cov(), 2, 1000, 17)?;
        let b = sample_chi_square(&cov(), 2, 1000, 17)?;
        Ok((a == b, "1000 paths, k = 2".into()))
    }));
    out.push(run("sampling_lil", "samples are non-negative", || {
        let s = sample_chi_square(&cov(), 3, 10_000, 5)?;
        Ok((s.data.iter().all(|&x| x >= 0.0), "10⁴ paths, k = 3".into()))
    }));
    out.push(run("sampling_lil", "Laplace transform |z| ≤ 4 at 10⁶ paths", || {
        let mut ok = true;
        let mut zs = Vec::new();
        for (c, k, s) in [(Matrix::from_rows(&[vec![1.0]]), 1, vec![1.0]), (cov(), 3, vec![1.0, 1.0])] {
            let r = laplace_check(&c, k, &s, 1_000_000, 23)?;
            ok &= r.z.abs() <= 4.0;
            zs.push(format!("{:.2}", r.z));
        }
        Ok((ok, format!("z = [{}]", zs.join(", "))))
    }));
    out.push(run("sampling_lil", "lower-bound frequency non-decreasing in n", || {
        let u = SymmetricPotential::PQ(exp_pair(0.5)?);
        let rep = lil_harness(&u, None, 0.0, 0.5, 0.5, &[20, 30, 40], 1, 2000, 29)?;
        let mut ok = true;
        let mut freqs = Vec::new();
        for w in rep.levels.windows(2) {
            let (a, sa) = w[0].freq_lower(0.3);
            let (b, sb) = w[1].freq_lower(0.3);
            // one-sided 99% test against a decrease
            ok &= (b - a) / (sa * sa + sb * sb).sqrt().max(1e-12) >= -2.326;
        }
        for l in &rep.levels {
            freqs.push(format!("{:.3}", l.freq_lower(0.3).0));
        }
        Ok((ok, format!("ε = 0.3 frequencies [{}]", freqs.join(", "))))
    }));
}

fn rebirth_checks(out: &mut Vec<Check>) {
    let chain = || FiniteChain::from_potential(&Matrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]), vec![1.0, 1.0]);
    out.push(run("rebirth_localtime", "partial rebirth extension is an inverse M-matrix", || {
        let u = chain()?.potential()?;
        let mut ok = true;
        for mu in [[0.0, 0.0], [0.5, 0.0], [0.3, 0.7]] {
            ok &= partial_rebirth_potential(&u, &mu)?.inverse_m_matrix;
        }
        Ok((ok, "three rebirth measures".into()))
    }));
    out.push(run("rebirth_localtime", "resolvent mass identity", || {
        let base = FiniteChain::new(
            Matrix::from_rows(&[vec![-1.0, 1.0, 0.0], vec![1.0, -2.0, 1.0], vec![0.0, 1.0, -1.0]]),
            vec![1.0; 3],
        )?;
        let p = 1.5;
        let ubar = base.killed(0.4)?.resolvent(p)?;
        let w = full_rebirth_potential(&ubar, &[0.2, 0.5, 0.3], &[1.0; 3], p)?;
        let res = resolvent_mass_residual(&w, &[1.0; 3], p);
        Ok((res <= 1e-12, format!("max residual {:.1e}", res)))
    }));
    out.push(run("rebirth_localtime", "occupation identity and local-time means", || {
        let c = chain()?;
        let mu = [0.5, 0.0];
        let jc = JumpChain::partial_rebirth(&c, &mu)?;
        let fields = simulate_local_times(&jc, 1, 100_000, 31, SimOptions::default())?;
        let occ = fields.iter().map(|f| f.occupation_residual(&jc.m)).fold(0.0, f64::max);
        let ext = partial_rebirth_potential(&c.potential()?, &mu)?.matrix;
        let zs: Vec<f64> = local_time_means(&fields).iter().enumerate().map(|(y, m)| m.z(ext[(1, y)])).collect();
        let ok = occ <= 1e-12 && zs.iter().all(|z| z.abs() <= 4.0);
        Ok((ok, format!("occupation residual {:.1e}, z = {:?}", occ, zs.iter().map(|z| format!("{:.2}", z)).collect::<Vec<_>>())))
    }));
    out.push(run("rebirth_localtime", "isomorphism identity |z| ≤ 4", || {
        let one = FiniteChain::new(Matrix::from_rows(&[vec![-0.5]]), vec![1.0])?;
        let r1 = ek_identity_check(&one, 0, &TestFunction::Laplace { s: vec![0.7] }, 200_000, 37)?;
        let r2 = ek_identity_check(&chain()?, 1, &TestFunction::Box { upper: vec![1.5, 2.0] }, 200_000, 41)?;
        Ok((r1.z.abs() <= 4.0 && r2.z.abs() <= 4.0, format!("z = {:.2}, {:.2}", r1.z, r2.z)))
    }));
}

/// Runs every check of the `core` suite.
pub fn run_core() -> VerifyReport {
    let mut checks = Vec::new();
    char_exponent_checks(&mut checks);
    levy_checks(&mut checks);
    diffusion_checks(&mut checks);
    excessive_checks(&mut checks);
    kernel_checks(&mut checks);
    sampling_checks(&mut checks);
    rebirth_checks(&mut checks);
    VerifyReport { checks }
}
