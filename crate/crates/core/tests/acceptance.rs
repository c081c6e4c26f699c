//! Acceptance suite: every numbered criterion runs at its stated tolerance
//! and prints a single pass line (a failed assertion is the fail line).

use std::time::Instant;

use bue_core::analysis::{
    bue_certificate, check_g3, constraint_coefficient_span, intersect_spans, min_variance_member,
    representation_oracle,
};
use bue_core::dist::{
    canonical_span_set, lifted_vector, make_composite_witness, make_witness_mean,
    make_witness_mean_cov, DiscreteDistribution,
};
use bue_core::estimator::{gls, ols, LinearEstimator};
use bue_core::koopmann::{
    build_constraints, construct_quadratic_null, make_ub_estimator, parameterize_member,
};
use bue_core::linalg::{null_space, rank, subspace_equal, sym_vec, SymMatrix};
use bue_core::model::{DesignMatrix, ModelFamily, MomentConstraintSet};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn finish(label: &str, bound_secs: f64, t0: Instant) {
    let dt = t0.elapsed().as_secs_f64();
    assert!(
        dt < bound_secs,
        "{label}: FAIL — runtime {dt:.2}s exceeds the {bound_secs:.0}s budget"
    );
    println!("{label}: PASS ({dt:.2}s)");
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(lo..hi))
}

fn random_vector(rng: &mut ChaCha8Rng, len: usize, lo: f64, hi: f64) -> DVector<f64> {
    DVector::from_fn(len, |_, _| rng.random_range(lo..hi))
}

fn random_design(rng: &mut ChaCha8Rng, n: usize, k: usize) -> DesignMatrix {
    loop {
        if let Ok(d) = DesignMatrix::new(random_matrix(rng, n, k, -2.0, 2.0)) {
            return d;
        }
    }
}

fn random_symmetric(rng: &mut ChaCha8Rng, n: usize) -> SymMatrix {
    let r = random_matrix(rng, n, n, -2.0, 2.0);
    SymMatrix::new(0.5 * (&r + r.transpose())).expect("symmetrized matrix")
}

fn random_pd(rng: &mut ChaCha8Rng, n: usize) -> SymMatrix {
    let r = random_matrix(rng, n, n, -1.0, 1.0);
    SymMatrix::new(r.transpose() * &r + 0.4 * DMatrix::<f64>::identity(n, n)).expect("PD matrix")
}

#[test]
fn criterion_01_half_vectorization_is_a_trace_isometry() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for _ in 0..1000 {
        let n = rng.random_range(1..=8usize);
        let a = random_symmetric(&mut rng, n);
        let b = random_symmetric(&mut rng, n);
        let dot = sym_vec(&a).dot(&sym_vec(&b));
        let trace = (a.as_matrix() * b.as_matrix()).trace();
        let scale = (a.frobenius_norm() * b.frobenius_norm()).max(1.0);
        assert!(
            (dot - trace).abs() <= 1e-12 * scale,
            "criterion 01: FAIL — isometry gap {:.3e} exceeds 1e-12 relative at dim {n}",
            (dot - trace).abs() / scale
        );
    }
    finish("criterion 01", 1.0, t0);
}

#[test]
fn criterion_02_lifted_canonical_set_has_full_rank() {
    let t0 = Instant::now();
    for n in 1..=8usize {
        let set = canonical_span_set(n);
        let lifted_dim = n + n * (n + 1) / 2;
        assert_eq!(set.len(), lifted_dim);
        let mut m = DMatrix::zeros(lifted_dim, set.len());
        for (j, z) in set.iter().enumerate() {
            m.set_column(j, &lifted_vector(z));
        }
        let r = rank(&m, 1e-10);
        assert_eq!(
            r, lifted_dim,
            "criterion 02: FAIL — lifted span set has rank {r}, expected {lifted_dim} at n = {n}"
        );
    }
    finish("criterion 02", 1.0, t0);
}

#[test]
fn criterion_03_witness_builders_match_requested_moments() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    for _ in 0..200 {
        let n = rng.random_range(1..=6usize);
        let k = rng.random_range(1..=n);
        let design = random_design(&mut rng, n, k);
        let beta = random_vector(&mut rng, k, -2.0, 2.0);
        let lambda = random_pd(&mut rng, n);
        let mu = design.matrix() * &beta;

        let w = make_witness_mean_cov(&design, &beta, &lambda).expect("witness");
        assert!(
            (w.moment1() - &mu).amax() < 1e-10,
            "criterion 03: FAIL — mean-and-covariance witness misses the mean by {:.3e}",
            (w.moment1() - &mu).amax()
        );
        let cov_gap = (w.moment2_central().as_matrix() - lambda.as_matrix()).amax();
        assert!(
            cov_gap < 1e-10,
            "criterion 03: FAIL — witness covariance off by {cov_gap:.3e}"
        );

        let (f0, f1) = make_witness_mean(&design, &beta).expect("mean witnesses");
        assert_eq!(
            f0.moment1().amax(),
            0.0,
            "criterion 03: FAIL — zero-mean witness has a nonzero mean coordinate"
        );
        let f1_gap = (f1.moment1() - &mu).amax();
        assert!(
            f1_gap <= 1e-13 * (1.0 + mu.amax()),
            "criterion 03: FAIL — mean witness misses Xβ by {f1_gap:.3e}, beyond machine accuracy"
        );
    }
    finish("criterion 03", 5.0, t0);
}

#[test]
fn criterion_04_parameterized_members_are_unbiased() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut sampled = 0usize;
    while sampled < 500 {
        let n = rng.random_range(2..=6usize);
        let k = rng.random_range(1..n);
        let design = random_design(&mut rng, n, k);
        let sigma = random_pd(&mut rng, n);
        let constraints = build_constraints(&design, &sigma).expect("constraints");
        let params = parameterize_member(&constraints).expect("parameterization");
        for _ in 0..10 {
            let t = random_vector(&mut rng, params.dim(), -0.5, 0.5);
            let member = params.member(&t).expect("member");
            let beta = random_vector(&mut rng, k, -2.0, 2.0);
            for s2 in [0.5, 2.0] {
                let lambda =
                    SymMatrix::new(s2 * sigma.as_matrix().clone()).expect("scaled covariance");
                let bias = (member
                    .expectation_closed_form(&design, &beta, Some(&lambda))
                    .expect("closed form")
                    - &beta)
                    .amax();
                assert!(
                    bias < 1e-10,
                    "criterion 04: FAIL — closed-form bias {bias:.3e} at n={n}, k={k}, σ²={s2}"
                );
            }
            let lambda =
                SymMatrix::new(0.5 * sigma.as_matrix().clone()).expect("scaled covariance");
            let f = make_witness_mean_cov(&design, &beta, &lambda).expect("witness");
            let bias = (member.mean_under(&f).expect("mean") - &beta).amax();
            assert!(
                bias < 1e-10,
                "criterion 04: FAIL — witness bias {bias:.3e} at n={n}, k={k}"
            );
            sampled += 1;
        }
    }
    finish("criterion 04", 10.0, t0);
}

#[test]
fn criterion_05_representation_oracle_matches_constraint_spans() {
    let t0 = Instant::now();

    // (i) First-moment constraints only: the unbiased-for-zero space equals
    // the span of the mean constraint functions on the composite support.
    let mean_only_configs: [(usize, usize); 3] = [(2, 1), (3, 2), (4, 1)];
    for (case, &(n, k)) in mean_only_configs.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(510 + case as u64);
        let design = random_design(&mut rng, n, k);
        let beta = random_vector(&mut rng, k, -1.5, 1.5);
        let family = ModelFamily::new(design.clone(), vec![beta.clone()], vec![]).expect("family");
        let y = random_vector(&mut rng, n, 0.3, 1.7);
        let witness = make_composite_witness(&family, &y).expect("composite witness");
        assert!(witness.support_size() <= 30);
        let g = MomentConstraintSet::new(design, beta, None).expect("constraints");
        let atoms = witness.atoms().to_vec();
        let report = representation_oracle(&atoms, &g, &witness).expect("oracle");
        assert_eq!(report.span_g.dim(), n);
        assert!(
            report.equal,
            "criterion 05: FAIL — mean-only case {case}: principal angle {:.3e} exceeds 1e-8",
            report.max_principal_angle
        );
    }

    // (ii) First- and second-moment constraints: the span gains the quadratic
    // constraint functions and still matches the unbiased-for-zero space.
    for case in 0..4u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(520 + case);
        let n = 2;
        let k = if case == 2 { 2 } else { 1 };
        let design = random_design(&mut rng, n, k);
        let lambda = random_pd(&mut rng, n);
        // A nonzero mean needs the bare witness support to stay within the
        // atom budget; the zero-mean cases use the composite construction.
        let beta = if case == 3 {
            random_vector(&mut rng, k, 0.2, 1.0)
        } else {
            DVector::zeros(k)
        };
        let (witness, atoms) = if case == 3 {
            let w = make_witness_mean_cov(&design, &beta, &lambda).expect("witness");
            let a = w.atoms().to_vec();
            (w, a)
        } else {
            let family = ModelFamily::new(design.clone(), vec![beta.clone()], vec![lambda.clone()])
                .expect("family");
            let y = random_vector(&mut rng, n, 0.3, 1.7);
            let w = make_composite_witness(&family, &y).expect("composite witness");
            let a = w.atoms().to_vec();
            (w, a)
        };
        assert!(atoms.len() <= 30);
        let g = MomentConstraintSet::new(design, beta, Some(lambda)).expect("constraints");
        let report = representation_oracle(&atoms, &g, &witness).expect("oracle");
        assert_eq!(report.span_g.dim(), n + n * (n + 1) / 2);
        assert!(
            report.equal,
            "criterion 05: FAIL — mean-and-covariance case {case}: angle {:.3e} exceeds 1e-8",
            report.max_principal_angle
        );
    }

    // (iii) A covariance grid spanning the symmetric matrices: intersecting
    // the per-member coefficient spans eliminates every quadratic direction.
    let grid_configs: [(usize, usize); 3] = [(2, 1), (3, 1), (3, 2)];
    for (case, &(n, k)) in grid_configs.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(530 + case as u64);
        let design = random_design(&mut rng, n, k);
        let beta = random_vector(&mut rng, k, -1.0, 1.0);
        let mut grid: Vec<SymMatrix> = vec![SymMatrix::identity(n)];
        for i in 0..n {
            for j in i..n {
                grid.push(SymMatrix::from_fn(n, |p, q| {
                    let base = if p == q { 1.0 } else { 0.0 };
                    let bump = if (p, q) == (i, j) || (q, p) == (i, j) {
                        0.4
                    } else {
                        0.0
                    };
                    base + bump
                }));
            }
        }
        let mut spans = Vec::new();
        for lambda in &grid {
            let g = MomentConstraintSet::new(design.clone(), beta.clone(), Some(lambda.clone()))
                .expect("constraints");
            spans.push(constraint_coefficient_span(&g).expect("span"));
        }
        let intersection = intersect_spans(&spans).expect("intersection");
        let mean_only = constraint_coefficient_span(
            &MomentConstraintSet::new(design.clone(), beta.clone(), None).expect("constraints"),
        )
        .expect("mean span");
        assert_eq!(intersection.dim(), n);
        assert!(
            subspace_equal(&intersection, &mean_only, 1e-8).expect("comparison"),
            "criterion 05: FAIL — grid case {case}: quadratic directions survive the intersection"
        );
    }

    finish("criterion 05", 30.0, t0);
}

#[test]
fn criterion_06_quadratic_null_construction_exists_and_is_unbiased() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    for n in 4..=7usize {
        for k in 1..=n - 2 {
            let design = random_design(&mut rng, n, k);
            let b = construct_quadratic_null(&design).expect("kernel");
            assert!(
                (b.frobenius_norm() - 1.0).abs() <= 1e-12,
                "criterion 06: FAIL — kernel norm {:.12} differs from 1 at n={n}, k={k}",
                b.frobenius_norm()
            );
            let diag_residual = (0..n)
                .map(|i| b.as_matrix()[(i, i)].abs())
                .fold(0.0, f64::max);
            let design_residual =
                (design.matrix().transpose() * b.as_matrix() * design.matrix()).amax();
            assert!(
                diag_residual < 1e-10 && design_residual < 1e-10,
                "criterion 06: FAIL — constraint residuals {diag_residual:.3e}/{design_residual:.3e} at n={n}, k={k}"
            );
            let u_b = make_ub_estimator(&design, &b).expect("estimator");
            for _ in 0..50 {
                let beta = random_vector(&mut rng, k, -2.0, 2.0);
                let entries = random_vector(&mut rng, n, 0.2, 2.0);
                let lambda =
                    SymMatrix::new(DMatrix::from_diagonal(&entries)).expect("diagonal covariance");
                let closed = (u_b
                    .expectation_closed_form(&design, &beta, Some(&lambda))
                    .expect("closed form")
                    - &beta)
                    .amax();
                let f = make_witness_mean_cov(&design, &beta, &lambda).expect("witness");
                let empirical = (u_b.mean_under(&f).expect("mean") - &beta).amax();
                assert!(
                    closed < 1e-10 && empirical < 1e-10,
                    "criterion 06: FAIL — bias {closed:.3e}/{empirical:.3e} at n={n}, k={k}"
                );
            }
        }
    }
    finish("criterion 06", 10.0, t0);
}

#[test]
fn criterion_07_certificate_separates_symmetric_from_skewed_errors() {
    let t0 = Instant::now();
    let design =
        DesignMatrix::new(DMatrix::from_column_slice(4, 1, &[1.0, 2.0, 3.0, 4.0])).expect("design");
    let n = design.n();
    let sigma = SymMatrix::identity(n);
    let beta = DVector::from_element(1, 0.6);
    let mu = design.matrix() * &beta;
    let b = construct_quadratic_null(&design).expect("kernel");
    let u_b = make_ub_estimator(&design, &b).expect("estimator");

    // Symmetric atoms: every third central moment vanishes, so the
    // orthogonality certificate must pass.
    let f_sym = make_witness_mean_cov(&design, &beta, &sigma).expect("witness");
    assert!(check_g3(&f_sym, &design, &sigma).expect("moment check"));
    let cert = bue_certificate(&u_b, &design, &f_sym, &sigma).expect("certificate");
    assert!(
        cert.passed && cert.max_block() < 1e-10,
        "criterion 07: FAIL — symmetric-error certificate has a block of size {:.3e}",
        cert.max_block()
    );
    assert!(cert.decomposition_gap() < 1e-12);

    // Skewed errors along a coordinate pair the kernel couples: the
    // third-moment block must exceed 1e-6 and the certificate must fail.
    let (mut vi, mut vj, mut best) = (0usize, 1usize, 0.0f64);
    for i in 0..n {
        for j in i + 1..n {
            if b.as_matrix()[(i, j)].abs() > best {
                best = b.as_matrix()[(i, j)].abs();
                (vi, vj) = (i, j);
            }
        }
    }
    let mut v = DVector::zeros(n);
    v[vi] = 1.0;
    v[vj] = 1.0;
    let s = 1.0 / 2.0f64.sqrt();
    let skew_atoms = vec![&mu + &v * (-s), &mu + &v * (2.0 * s)];
    let skew_part = DiscreteDistribution::new(skew_atoms, vec![2.0 / 3.0, 1.0 / 3.0])
        .expect("skewed component");
    let vv = SymMatrix::new(4.0 * DMatrix::<f64>::identity(n, n) - &v * v.transpose())
        .expect("residual covariance");
    let sym_part = make_witness_mean_cov(&design, &beta, &vv).expect("symmetric component");
    let f_skew =
        DiscreteDistribution::mixture(&[(0.5, &skew_part), (0.5, &sym_part)]).expect("mixture");
    assert!(!check_g3(&f_skew, &design, &sigma).expect("moment check"));
    let cert = bue_certificate(&u_b, &design, &f_skew, &sigma).expect("certificate");
    assert!(
        cert.term3.amax() > 1e-6 && !cert.passed,
        "criterion 07: FAIL — third-moment block {:.3e} did not flag the skewed distribution",
        cert.term3.amax()
    );
    finish("criterion 07", 5.0, t0);
}

/// Brute-force minimizer used only as an independent check: exact parabolic
/// line searches over each coordinate of the member parameterization, with
/// the variance evaluated by direct atom enumeration.
fn brute_force_min_variance(
    constraints: &bue_core::koopmann::KoopmannConstraints,
    f: &DiscreteDistribution,
    direction: &DVector<f64>,
) -> f64 {
    let params = parameterize_member(constraints).expect("parameterization");
    let variance_at = |t: &DVector<f64>| -> f64 {
        let member = params.member(t).expect("member");
        let mut mean = 0.0;
        let mut vals = Vec::with_capacity(f.support_size());
        for (a, w) in f.atoms().iter().zip(f.weights()) {
            let v = direction.dot(&member.evaluate(a).expect("evaluation"));
            mean += w * v;
            vals.push(v);
        }
        vals.iter()
            .zip(f.weights())
            .map(|(v, w)| w * (v - mean) * (v - mean))
            .sum()
    };
    let mut t = DVector::zeros(params.dim());
    let h = 0.25;
    for _ in 0..200 {
        let mut moved = 0.0f64;
        for i in 0..params.dim() {
            let f0 = variance_at(&t);
            let mut tp = t.clone();
            tp[i] += h;
            let mut tm = t.clone();
            tm[i] -= h;
            let (fp, fm) = (variance_at(&tp), variance_at(&tm));
            let denom = fp - 2.0 * f0 + fm;
            if denom.abs() < 1e-18 {
                continue;
            }
            let step = -h * (fp - fm) / (2.0 * denom);
            t[i] += step;
            moved = moved.max(step.abs());
        }
        if moved < 1e-15 {
            break;
        }
    }
    variance_at(&t)
}

// Margin frozen from the brute-force oracle: for the intercept-only design
// the least-squares estimator is already optimal in the class, so the
// achievable improvement is exactly zero.
const FROZEN_INTERCEPT_MARGIN: f64 = 0.0;

#[test]
fn criterion_08_skewed_errors_improve_on_least_squares() {
    let t0 = Instant::now();
    let design = DesignMatrix::new(DMatrix::from_element(3, 1, 1.0)).expect("intercept design");
    let sigma = SymMatrix::identity(3);
    let constraints = build_constraints(&design, &sigma).expect("constraints");
    let direction = DVector::from_element(1, 1.0);
    let s = 1.0 / 2.0f64.sqrt();

    // Symmetric control: no member may beat least squares by more than noise.
    let f_sym = DiscreteDistribution::iid_product(&[-1.0, 1.0], &[0.5, 0.5], 3).expect("control");
    let ols_var_sym = {
        let cov = ols(&design)
            .lift()
            .variance_under(&f_sym)
            .expect("variance");
        (direction.transpose() * cov.as_matrix() * &direction)[(0, 0)]
    };
    let (_, var_sym) = min_variance_member(&constraints, &f_sym, &direction).expect("minimizer");
    let control_improvement = (ols_var_sym - var_sym) / ols_var_sym;
    assert!(
        control_improvement < 1e-8,
        "criterion 08: FAIL — symmetric control shows improvement {control_improvement:.3e}"
    );

    // Skewed reference errors.
    let f = DiscreteDistribution::iid_product(&[-s, 2.0 * s], &[2.0 / 3.0, 1.0 / 3.0], 3)
        .expect("reference errors");
    let ols_var = {
        let cov = ols(&design).lift().variance_under(&f).expect("variance");
        (direction.transpose() * cov.as_matrix() * &direction)[(0, 0)]
    };
    let (_, var_opt) = min_variance_member(&constraints, &f, &direction).expect("minimizer");
    let improvement = (ols_var - var_opt) / ols_var;

    let oracle_var = brute_force_min_variance(&constraints, &f, &direction);
    let oracle_margin = (ols_var - oracle_var) / ols_var;
    assert!(
        (oracle_margin - FROZEN_INTERCEPT_MARGIN).abs() < 1e-9,
        "criterion 08: FAIL — oracle margin {oracle_margin:.3e} drifted from the frozen value"
    );
    let dt = t0.elapsed().as_secs_f64();
    assert!(dt < 10.0);
    assert!(
        improvement > 1e-6,
        "criterion 08: FAIL — relative improvement {improvement:.3e} is not above 1e-6; for the \
         intercept-only design every class member orthogonalizes against the skewness channel \
         (the trace and design-moment constraints zero the variance gradient at least squares, \
         and the objective is convex), so least squares is already optimal here and the frozen \
         brute-force margin {FROZEN_INTERCEPT_MARGIN} confirms it; a strict improvement is \
         impossible in this configuration"
    );
    finish("criterion 08", 10.0, t0);
}

#[test]
fn criterion_09_generalized_least_squares_dominates_linear_rivals() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    for _ in 0..100 {
        let n = rng.random_range(2..=6usize);
        let k = rng.random_range(1..n);
        let design = random_design(&mut rng, n, k);
        let sigma = random_pd(&mut rng, n);
        let beta = random_vector(&mut rng, k, -2.0, 2.0);
        let g = gls(&design, &sigma).expect("generalized least squares");

        // A random competing linear unbiased estimator: perturb the
        // coefficients inside the null space of Xᵀ.
        let null = null_space(&design.matrix().transpose(), 1e-12);
        let perturbation = null.basis() * random_matrix(&mut rng, null.dim(), k, -1.0, 1.0);
        let a = LinearEstimator::new(g.coefficients() + perturbation).expect("rival");

        let f = make_witness_mean_cov(&design, &beta, &sigma).expect("witness");
        let var_g = g.lift().variance_under(&f).expect("variance");
        let var_a = a.lift().variance_under(&f).expect("variance");
        let diff = SymMatrix::new(var_a.as_matrix() - var_g.as_matrix()).expect("difference");
        assert!(
            diff.min_eigenvalue() >= -1e-9,
            "criterion 09: FAIL — variance ordering violated by eigenvalue {:.3e} at n={n}, k={k}",
            diff.min_eigenvalue()
        );
    }
    finish("criterion 09", 5.0, t0);
}
