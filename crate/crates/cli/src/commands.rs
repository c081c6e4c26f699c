//! The six subcommand implementations. Every command is a pure function of
//! its resolved inputs: identical configs produce byte-identical output.

use std::fs;
use std::path::Path;

use nalgebra::DVector;

use bue_core::analysis::{
    constraint_coefficient_span, intersect_spans, min_variance_member, representation_oracle,
    variance_comparison_table,
};
use bue_core::dist::{
    make_composite_witness, make_witness_mean, make_witness_mean_cov, DiscreteDistribution,
};
use bue_core::estimator::{gls, LPQEstimator};
use bue_core::jsonio::{format_float_17, vector_from_list};
use bue_core::koopmann::{build_constraints, construct_quadratic_null, make_ub_estimator};
use bue_core::linalg::{subspace_equal, SymMatrix};
use bue_core::model::{DesignMatrix, ModelFamily, MomentConstraintSet};
use bue_core::{Error, Result};

use crate::config::{ExperimentConfig, NamedEntry};

fn write_artifact(out: Option<&Path>, content: &str) -> Result<()> {
    match out {
        Some(path) => {
            let mut text = content.to_string();
            if !text.ends_with('\n') {
                text.push('\n');
            }
            fs::write(path, text)
                .map_err(|e| Error::Precondition(format!("cannot write {}: {e}", path.display())))
        }
        None => {
            println!("{content}");
            Ok(())
        }
    }
}

/// Builds a unit-norm zero-diagonal kernel annihilating the design and emits
/// the resulting unbiased linear-plus-quadratic estimator.
pub fn construct_ub(design: &DesignMatrix, out: Option<&Path>) -> Result<u8> {
    let b = construct_quadratic_null(design)?;
    let est = make_ub_estimator(design, &b)?;
    let x = design.matrix();
    let max_diag = (0..design.n()).fold(0.0f64, |acc, i| acc.max(b.as_matrix()[(i, i)].abs()));
    let design_residual = (x.transpose() * b.as_matrix() * x).amax();
    println!("n: {}", design.n());
    println!("k: {}", design.k());
    println!("kernel_frobenius: {:?}", b.frobenius_norm());
    println!("trace_residual: {:?}", b.as_matrix().trace().abs());
    println!("max_diagonal: {:?}", max_diag);
    println!("max_design_residual: {:?}", design_residual);
    write_artifact(out, &est.to_json())?;
    Ok(0)
}

/// Checks an estimator against the class constraints, printing one residual
/// line per constraint group. Exit 0 exactly when every residual is within
/// tolerance.
pub fn check_koopmann(
    design: &DesignMatrix,
    sigma: &SymMatrix,
    estimator: &LPQEstimator,
    tol: f64,
) -> Result<u8> {
    let constraints = build_constraints(design, sigma)?;
    let report = constraints.is_member(estimator, tol)?;
    println!("unbiasedness: {:?}", report.unbiasedness_gap);
    for (j, (t, d)) in report
        .trace_residuals
        .iter()
        .zip(&report.design_residuals)
        .enumerate()
    {
        println!("kernel: {j}");
        println!("trace: {t:?}");
        println!("design: {d:?}");
    }
    println!("member: {}", report.is_member);
    Ok(if report.is_member { 0 } else { 1 })
}

/// Minimizes the directional variance over the unbiased class and reports it
/// next to the generalized least squares baseline as a CSV row.
pub fn min_variance(
    design: &DesignMatrix,
    sigma: &SymMatrix,
    f: &DiscreteDistribution,
    direction: Option<DVector<f64>>,
    out: Option<&Path>,
) -> Result<u8> {
    let direction = match direction {
        Some(d) => d,
        None => DVector::from_element(design.k(), 1.0),
    };
    let constraints = build_constraints(design, sigma)?;
    let (optimizer, optimal) = min_variance_member(&constraints, f, &direction)?;
    let gls_cov = gls(design, sigma)?.lift().variance_under(f)?;
    let gls_var = (direction.transpose() * gls_cov.as_matrix() * &direction)[(0, 0)];
    let improvement = if gls_var > 0.0 {
        (gls_var - optimal) / gls_var
    } else {
        0.0
    };
    println!("gls_variance,optimal_variance,relative_improvement");
    println!(
        "{},{},{}",
        format_float_17(gls_var),
        format_float_17(optimal),
        format_float_17(improvement)
    );
    if out.is_some() {
        write_artifact(out, &optimizer.to_json())?;
    }
    Ok(0)
}

/// Runs the representation oracle for a single constraint set, or — when the
/// configuration carries a grid of at least two covariances — intersects the
/// constraint spans across the grid and checks that only the linear
/// directions survive.
pub fn verify_representation(cfg: &ExperimentConfig) -> Result<u8> {
    let design = cfg.design_matrix()?;
    let betas = cfg.beta_vectors()?;
    let covariances = cfg.covariance_matrices()?;

    if covariances.len() >= 2 {
        let mut spans = Vec::new();
        for beta in &betas {
            for lambda in &covariances {
                let set =
                    MomentConstraintSet::new(design.clone(), beta.clone(), Some(lambda.clone()))?;
                spans.push(constraint_coefficient_span(&set)?);
            }
        }
        let intersection = intersect_spans(&spans)?;
        let mut linear_spans = Vec::new();
        for beta in &betas {
            let set = MomentConstraintSet::new(design.clone(), beta.clone(), None)?;
            linear_spans.push(constraint_coefficient_span(&set)?);
        }
        let linear = intersect_spans(&linear_spans)?;
        let collapsed = subspace_equal(&intersection, &linear, 1e-8)?;
        println!("members: {}", spans.len());
        println!("intersection_dim: {}", intersection.dim());
        println!("linear_span_dim: {}", linear.dim());
        if collapsed {
            println!("collapsed to linear");
            return Ok(0);
        }
        println!("quadratic directions persist");
        return Ok(1);
    }

    let beta = betas[0].clone();
    let lambda = covariances.first().cloned();
    let witness = match &cfg.witness {
        Some(source) => source.distribution()?,
        None => match &lambda {
            Some(l) => make_witness_mean_cov(&design, &beta, l)?,
            None => make_witness_mean(&design, &beta)?.0,
        },
    };
    let atoms: Vec<DVector<f64>> = match &cfg.atoms {
        Some(rows) => rows
            .iter()
            .map(|r| vector_from_list(r))
            .collect::<Result<Vec<_>>>()?,
        None => witness.atoms().to_vec(),
    };
    let quadratic = lambda.is_some();
    let set = MomentConstraintSet::new(design, beta, lambda)?;
    let report = representation_oracle(&atoms, &set, &witness)?;
    println!("atoms: {}", atoms.len());
    println!("span_dim: {}", report.span_g.dim());
    println!("unbiased_zero_dim: {}", report.unbiased_zero.dim());
    println!(
        "max_principal_angle: {}",
        format_float_17(report.max_principal_angle)
    );
    if report.equal {
        if quadratic {
            println!("LPQ representation confirmed");
        } else {
            println!("linear representation confirmed");
        }
        Ok(0)
    } else {
        println!("representation gap detected");
        Ok(1)
    }
}

/// Emits witness distributions: the mean witnesses (`mean`), the
/// mean-and-covariance witness (`mean-cov`), or the family-dominating
/// composite witness (`composite`).
pub fn witness(cfg: &ExperimentConfig, kind: &str, out: Option<&Path>) -> Result<u8> {
    let design = cfg.design_matrix()?;
    let betas = cfg.beta_vectors()?;
    let covariances = cfg.covariance_matrices()?;
    match kind {
        "mean" => {
            let (f0, f1) = make_witness_mean(&design, &betas[0])?;
            let paired = serde_json::json!({
                "f0": serde_json::from_str::<serde_json::Value>(&f0.to_json())
                    .expect("distribution JSON is valid"),
                "f1": serde_json::from_str::<serde_json::Value>(&f1.to_json())
                    .expect("distribution JSON is valid"),
            });
            write_artifact(
                out,
                &serde_json::to_string_pretty(&paired).expect("serialization cannot fail"),
            )?;
            Ok(0)
        }
        "mean-cov" => {
            let lambda = covariances.first().ok_or_else(|| {
                Error::Precondition("mean-cov witness needs a covariance in the config".into())
            })?;
            let f = make_witness_mean_cov(&design, &betas[0], lambda)?;
            write_artifact(out, &f.to_json())?;
            Ok(0)
        }
        "composite" => {
            let y = vector_from_list(cfg.y.as_ref().ok_or_else(|| {
                Error::Precondition("composite witness needs the observation y".into())
            })?)?;
            let family = ModelFamily::new(design, betas, covariances)?;
            let f = make_composite_witness(&family, &y)?;
            write_artifact(out, &f.to_json())?;
            Ok(0)
        }
        other => Err(Error::Parse(format!(
            "unknown witness kind {other:?}; expected mean, mean-cov, or composite"
        ))),
    }
}

/// Evaluates every named estimator against every named distribution and
/// emits the exact variance table as CSV or JSON.
pub fn table(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<u8> {
    let load_estimators = |entries: &[NamedEntry]| -> Result<Vec<(String, LPQEstimator)>> {
        entries
            .iter()
            .map(|e| Ok((e.name.clone(), e.value.estimator()?)))
            .collect()
    };
    let load_distributions =
        |entries: &[NamedEntry]| -> Result<Vec<(String, DiscreteDistribution)>> {
            entries
                .iter()
                .map(|e| Ok((e.name.clone(), e.value.distribution()?)))
                .collect()
        };
    let estimators = load_estimators(cfg.estimators.as_deref().ok_or_else(|| {
        Error::Precondition("table needs a named list of estimators in the config".into())
    })?)?;
    let distributions = load_distributions(cfg.distributions.as_deref().ok_or_else(|| {
        Error::Precondition("table needs a named list of distributions in the config".into())
    })?)?;
    let table = variance_comparison_table(&estimators, &distributions);
    let format = cfg.format.as_deref().unwrap_or("csv");
    let rendered = match format {
        "csv" => table.to_csv(),
        "json" => table.to_json(),
        other => {
            return Err(Error::Parse(format!(
                "unknown format {other:?}; expected csv or json"
            )))
        }
    };
    write_artifact(out, rendered.trim_end_matches('\n'))?;
    Ok(0)
}
