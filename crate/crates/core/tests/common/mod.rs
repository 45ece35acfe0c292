//! Property checks shared by the property suite and the acceptance runner.
//!
//! Each check returns `Err(description)` on the first violated invariant so it
//! can back both a `#[test]` and a printed pass/fail line.
#![allow(dead_code)]

use clump_lab::closed_form::MassRescaling;
use clump_lab::grid::{apply_gl, assemble_h_matrix, convolve, ConvolutionPlan};
use clump_lab::steady::{leading_eigenpair, solve_steady, Normalization, PowerIteration, SteadyOptions};
use clump_lab::{AttractionKernel, Grid, GridFunction, Kernel, Layout};
use nalgebra::{DMatrix, DVector};

pub type Check = Result<(), String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Check {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn sup(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Evenness, positivity, unit mass, derivative consistency and monotonicity.
pub fn kernel_invariants(kernel: Kernel) -> Check {
    let xs: Vec<f64> = (0..=400).map(|i| -8.0 + 0.04 * i as f64 + 0.0013).collect();
    for &x in &xs {
        let (g, gm) = (kernel.eval(x), kernel.eval(-x));
        ensure(g >= 0.0, || format!("{kernel}: G({x}) = {g} < 0"))?;
        ensure(g == gm, || format!("{kernel}: G not even at {x}"))?;
        let (d, dm) = (kernel.eval_derivative(x), kernel.eval_derivative(-x));
        ensure(d == -dm, || format!("{kernel}: G' not odd at {x}"))?;
        let near_kink = kernel.kinks().iter().any(|k| (x - k).abs() < 1e-3);
        if !near_kink {
            let h = 1e-6;
            let fd = (kernel.eval(x + h) - kernel.eval(x - h)) / (2.0 * h);
            ensure((fd - d).abs() < 1e-6, || format!("{kernel}: G'({x}) = {d}, difference quotient {fd}"))?;
        }
    }
    ensure(kernel.eval_derivative(0.0) == 0.0, || format!("{kernel}: G'(0) != 0"))?;

    let n = 200_000;
    let (a, b) = (-40.0, 40.0);
    let h = (b - a) / n as f64;
    let mass: f64 = (0..n).map(|i| kernel.eval(a + (i as f64 + 0.5) * h)).sum::<f64>() * h;
    ensure((mass - kernel.l1_norm()).abs() < 1e-6, || {
        format!("{kernel}: ∫G = {mass}, l1_norm says {}", kernel.l1_norm())
    })?;

    let rs: Vec<f64> = (0..200).map(|i| 0.01 + 0.02 * i as f64).collect();
    for w in rs.windows(2) {
        let (g0, g1) = (kernel.eval(w[0]), kernel.eval(w[1]));
        if kernel.strictly_decreasing() {
            ensure(g1 < g0, || format!("{kernel}: not strictly decreasing at {}", w[1]))?;
        } else {
            ensure(g1 <= g0, || format!("{kernel}: increasing at {}", w[1]))?;
        }
    }
    Ok(())
}

/// `convolve` and `apply_gl` are linear; the FFT and dense paths agree.
pub fn operator_linearity(kernel: Kernel, f: &[f64], g: &[f64], a: f64, b: f64) -> Check {
    let n = f.len();
    assert_eq!(n, g.len());
    let mix: Vec<f64> = f.iter().zip(g).map(|(x, y)| a * x + b * y).collect();
    let scale = 1.0 + a.abs() * sup(f) + b.abs() * sup(g);

    let line = Grid::symmetric(5.0, n).map_err(|e| e.to_string())?;
    let cf = convolve(&kernel, &GridFunction::new(line, Layout::Cell, f.to_vec()).unwrap());
    let cg = convolve(&kernel, &GridFunction::new(line, Layout::Cell, g.to_vec()).unwrap());
    let cm = convolve(&kernel, &GridFunction::new(line, Layout::Cell, mix.clone()).unwrap());
    let expect: Vec<f64> = cf.values().iter().zip(cg.values()).map(|(x, y)| a * x + b * y).collect();
    let err = sup_diff(cm.values(), &expect);
    ensure(err <= 1e-12 * scale, || format!("{kernel}: convolve not linear, defect {err:e}"))?;

    let plan = ConvolutionPlan::new(&kernel, &line, Layout::Cell);
    let err = sup_diff(&plan.apply_dense(f), &plan.apply_fft(f));
    ensure(err <= 1e-12 * (1.0 + sup(f)), || format!("{kernel}: FFT and dense convolution differ by {err:e}"))?;

    let half = Grid::new(0.0, 3.0, n - 1).map_err(|e| e.to_string())?;
    let gl = |v: &[f64]| apply_gl(&kernel, &GridFunction::new(half, Layout::Nodal, v.to_vec()).unwrap()).unwrap();
    let (gf, gg, gm) = (gl(f), gl(g), gl(&mix));
    let expect: Vec<f64> = gf.values().iter().zip(gg.values()).map(|(x, y)| a * x + b * y).collect();
    let err = sup_diff(gm.values(), &expect);
    ensure(err <= 1e-12 * scale, || format!("{kernel}: apply_gl not linear, defect {err:e}"))?;
    Ok(())
}

/// The discrete operators converge to their continuous counterparts.
pub fn operator_convergence() -> Check {
    // Gaussian ∗ N(0, s²) = N(0, 1 + s²), and the rectangle rule is spectral here
    let s2 = 0.5;
    let normal = |x: f64, v: f64| (-0.5 * x * x / v).exp() / (2.0 * std::f64::consts::PI * v).sqrt();
    for n in [400, 1000] {
        let grid = Grid::symmetric(20.0, n).unwrap();
        let rho = GridFunction::from_fn(grid, Layout::Cell, |x| normal(x, s2));
        let conv = convolve(&Kernel::Gaussian, &rho);
        let err = conv
            .positions()
            .iter()
            .zip(conv.values())
            .map(|(&x, v)| (v - normal(x, 1.0 + s2)).abs())
            .fold(0.0, f64::max);
        ensure(err < 1e-10, || format!("gaussian convolution error {err:e} at n = {n}"))?;
    }

    // the Bessel kernel has a kink, so the trapezoid rule is second order
    let profile = |x: f64| 1.0 - x * x / 4.0;
    let at_half = |n: usize| {
        let grid = Grid::new(0.0, 2.0, n).unwrap();
        let rho = GridFunction::from_fn(grid, Layout::Nodal, profile);
        apply_gl(&Kernel::Bessel, &rho).unwrap().interpolate(0.5)
    };
    let (a, b, c) = (at_half(40), at_half(80), at_half(160));
    let order = ((a - b) / (b - c)).abs().log2();
    ensure(order > 1.8, || format!("apply_gl self-convergence order {order:.3}"))?;
    Ok(())
}

/// Leading eigenpair of `D⁻¹M` from power iteration against a dense
/// Schur factorization, to 1e-10.
pub fn eigenpair_matches_dense(kernel: Kernel, l: f64, n: usize) -> Check {
    let grid = Grid::new(0.0, l, n).map_err(|e| e.to_string())?;
    let m = assemble_h_matrix(&kernel, &grid).map_err(|e| e.to_string())?;
    let weights: Vec<f64> = (0..n).map(|i| 1.0 + grid.midpoint(i)).collect();
    let opts = PowerIteration { tol: 1e-14, max_iter: 200_000 };
    let pair = leading_eigenpair(&weights, &m, grid.dx(), opts, None).map_err(|e| e.to_string())?;

    let a = DMatrix::from_fn(n, n, |i, j| m.get(i, j) / weights[i]);
    let eig = a.clone().schur().complex_eigenvalues();
    let lambda = eig.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    let rel = (pair.lambda - lambda).abs() / lambda.abs();
    ensure(rel <= 1e-10, || format!("{kernel}: λ = {} vs dense {lambda}, rel {rel:e}", pair.lambda))?;

    // null vector of A - λI from the SVD, normalized like the power iteration
    let shifted = &a - DMatrix::identity(n, n) * lambda;
    let svd = shifted.svd(false, true);
    let vt = svd.v_t.ok_or("SVD without V")?;
    let (k, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|x, y| x.1.total_cmp(y.1))
        .unwrap();
    let v: DVector<f64> = vt.row(k).transpose();
    let total = v.sum() * grid.dx();
    let dense: Vec<f64> = v.iter().map(|x| -x / total).collect();
    let err = sup_diff(&pair.e, &dense) / sup(&dense);
    ensure(err <= 1e-10, || format!("{kernel}: eigenvector differs from dense by {err:e}"))?;
    ensure(pair.e.iter().all(|x| *x <= 0.0), || format!("{kernel}: eigenvector changes sign"))?;
    Ok(())
}

/// Mass rescaling and peak/unit-mass renormalization invert each other.
pub fn rescaling_round_trip(m: f64, mass: f64, nu: f64, c: f64, rho: &[f64]) -> Check {
    let scale = MassRescaling { mass, m };
    let (r1, nu1, c1) = scale.to_unit_mass(rho, nu, c);
    let (r2, nu2, c2) = scale.from_unit_mass(&r1, nu1, c1);
    let rel = |x: f64, y: f64| (x - y).abs() / y.abs().max(1e-300);
    ensure(rel(nu2, nu) <= 1e-12, || format!("ν round trip {nu} → {nu2}"))?;
    ensure(rel(c2, c) <= 1e-12, || format!("C round trip {c} → {c2}"))?;
    let err = sup_diff(&r2, rho) / sup(rho).max(1e-300);
    ensure(err <= 1e-12, || format!("density round trip defect {err:e}"))?;
    Ok(())
}

pub fn renormalization_round_trip(kernel: Kernel, m: f64, l: f64) -> Check {
    let ss = solve_steady(kernel, m, l, 200, SteadyOptions::default()).map_err(|e| e.to_string())?;
    let peak = ss.renormalized(Normalization::PeakOne);
    ensure((peak.rho.values()[0] - 1.0).abs() <= 1e-12, || "peak normalization missed ρ(0) = 1".into())?;
    let back = peak.renormalized(Normalization::UnitMass);
    let rel = |x: f64, y: f64| (x - y).abs() / y.abs();
    ensure(rel(back.nu, ss.nu) <= 1e-12, || format!("ν {} → {}", ss.nu, back.nu))?;
    ensure(rel(back.c, ss.c) <= 1e-12, || format!("C {} → {}", ss.c, back.c))?;
    ensure((back.mass() - 1.0).abs() <= 1e-12, || format!("mass {}", back.mass()))?;
    let err = sup_diff(back.rho.values(), ss.rho.values()) / ss.rho.max();
    ensure(err <= 1e-12, || format!("profile defect {err:e}"))?;
    Ok(())
}

/// A deterministic bank of sample vectors for the standalone runs.
pub fn sample_vector(n: usize, phase: f64) -> Vec<f64> {
    (0..n).map(|i| ((i as f64 * 0.37 + phase).sin() + 1.2) * (1.0 + 0.1 * (i % 7) as f64)).collect()
}

/// Every property check with fixed inputs, as `(name, outcome)` pairs.
pub fn all_property_checks() -> Vec<(String, Check)> {
    let mut out = Vec::new();
    for k in Kernel::ALL {
        out.push((format!("kernel invariants ({k})"), kernel_invariants(k)));
        let (f, g) = (sample_vector(300, 0.0), sample_vector(300, 1.3));
        out.push((format!("operator linearity ({k})"), operator_linearity(k, &f, &g, 0.7, -2.1)));
    }
    out.push(("operator convergence".into(), operator_convergence()));
    for k in [Kernel::Gaussian, Kernel::Bessel] {
        out.push((format!("eigenpair vs dense ({k})"), eigenpair_matches_dense(k, 2.0, 60)));
    }
    let rho = sample_vector(50, 0.4);
    for (m, mass) in [(1.5, 0.3), (3.0, 7.0), (4.0, 2.5)] {
        out.push((format!("mass rescaling (m = {m})"), rescaling_round_trip(m, mass, 0.6, -0.2, &rho)));
    }
    out.push(("renormalization (gaussian, m = 1.5)".into(), renormalization_round_trip(Kernel::Gaussian, 1.5, 3.0)));
    out.push(("renormalization (bessel, m = 3)".into(), renormalization_round_trip(Kernel::Bessel, 3.0, 2.0)));
    out
}
