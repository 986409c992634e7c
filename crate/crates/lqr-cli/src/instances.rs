//! Named benchmark instances and loading of custom instances from TOML.

use lqr::sim::{CostModel, LinearSystem};
use nalgebra::DMatrix;
use serde::Deserialize;

use crate::error::{CliError, CliResult};

/// A fully specified benchmark problem.
#[derive(Debug, Clone)]
pub struct Instance {
    pub name: String,
    pub sys: LinearSystem,
    pub cost: CostModel,
}

/// The offline benchmark: a stable tridiagonal-ish plant with two inputs.
pub fn offline_paper() -> Instance {
    let a = DMatrix::from_row_slice(
        3,
        3,
        &[0.95, 0.01, 0.0, 0.01, 0.95, 0.01, 0.0, 0.01, 0.95],
    );
    let b = DMatrix::from_row_slice(3, 2, &[1.0, 0.1, 0.0, 0.1, 0.0, 0.1]);
    let s = DMatrix::identity(3, 3);
    let r = DMatrix::identity(2, 2);
    Instance {
        name: "offline-paper".into(),
        sys: LinearSystem::new(a, b, 1.0).expect("static instance"),
        cost: CostModel::new(s, r).expect("static instance"),
    }
}

/// The adaptive benchmark: a marginally unstable plant with full actuation
/// and a heavy state penalty.
pub fn adaptive_dean() -> Instance {
    let a = DMatrix::from_row_slice(
        3,
        3,
        &[1.01, 0.01, 0.0, 0.01, 1.01, 0.01, 0.0, 0.01, 1.01],
    );
    let b = DMatrix::identity(3, 3);
    let s = DMatrix::identity(3, 3) * 10.0;
    let r = DMatrix::identity(3, 3);
    Instance {
        name: "adaptive-dean".into(),
        sys: LinearSystem::new(a, b, 1.0).expect("static instance"),
        cost: CostModel::new(s, r).expect("static instance"),
    }
}

#[derive(Debug, Deserialize)]
struct RawInstance {
    name: Option<String>,
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    s: Vec<Vec<f64>>,
    r: Vec<Vec<f64>>,
    #[serde(default = "default_sigma_w")]
    sigma_w: f64,
}

fn default_sigma_w() -> f64 {
    1.0
}

fn to_matrix(rows: &[Vec<f64>], key: &str) -> CliResult<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if nrows == 0 || ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return Err(CliError::Config(format!(
            "key `{key}`: expected a non-empty rectangular array of arrays"
        )));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(DMatrix::from_row_slice(nrows, ncols, &flat))
}

/// Parses a custom instance from a TOML document with keys
/// `a`, `b`, `s`, `r` (row-major nested arrays), optional `sigma_w`, `name`.
pub fn parse_custom(text: &str) -> CliResult<Instance> {
    let raw: RawInstance = toml::from_str(text)
        .map_err(|e| CliError::Config(format!("instance file: {e}")))?;
    let a = to_matrix(&raw.a, "a")?;
    let b = to_matrix(&raw.b, "b")?;
    let s = to_matrix(&raw.s, "s")?;
    let r = to_matrix(&raw.r, "r")?;
    let sys = LinearSystem::new(a, b, raw.sigma_w)
        .map_err(|e| CliError::Config(format!("instance file: {e}")))?;
    let cost = CostModel::new(s, r)
        .map_err(|e| CliError::Config(format!("instance file: {e}")))?;
    Ok(Instance { name: raw.name.unwrap_or_else(|| "custom".into()), sys, cost })
}

pub fn load_custom(path: &std::path::Path) -> CliResult<Instance> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("instance file {}: {e}", path.display())))?;
    parse_custom(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn named_instances_expand_exactly() {
        let inst = offline_paper();
        assert_eq!(
            inst.sys.a.as_slice(),
            DMatrix::from_row_slice(
                3,
                3,
                &[0.95, 0.01, 0.0, 0.01, 0.95, 0.01, 0.0, 0.01, 0.95]
            )
            .as_slice()
        );
        assert_eq!(inst.sys.b[(0, 0)], 1.0);
        assert_eq!(inst.sys.b[(2, 1)], 0.1);
        assert_eq!(inst.sys.sigma_w, 1.0);
        assert_eq!(inst.cost.s, DMatrix::identity(3, 3));
        assert_eq!(inst.cost.r, DMatrix::identity(2, 2));

        let inst = adaptive_dean();
        assert_eq!(inst.sys.a[(0, 0)], 1.01);
        assert_eq!(inst.sys.a[(1, 0)], 0.01);
        assert_eq!(inst.sys.a[(2, 0)], 0.0);
        assert_eq!(inst.sys.b, DMatrix::identity(3, 3));
        assert_eq!(inst.cost.s, DMatrix::identity(3, 3) * 10.0);
        assert_eq!(inst.cost.r, DMatrix::identity(3, 3));
    }

    #[test]
    fn custom_instance_round_trip() {
        let text = r#"
            name = "toy"
            a = [[0.5]]
            b = [[1.0]]
            s = [[1.0]]
            r = [[2.0]]
            sigma_w = 0.3
        "#;
        let inst = parse_custom(text).unwrap();
        assert_eq!(inst.name, "toy");
        assert_eq!(inst.sys.a[(0, 0)], 0.5);
        assert_eq!(inst.sys.sigma_w, 0.3);
        assert_eq!(inst.cost.r[(0, 0)], 2.0);
    }

    #[test]
    fn ragged_matrix_is_rejected() {
        let text = r#"
            a = [[0.5, 0.1], [0.2]]
            b = [[1.0], [0.0]]
            s = [[1.0, 0.0], [0.0, 1.0]]
            r = [[1.0]]
        "#;
        let err = parse_custom(text).unwrap_err();
        assert!(err.to_string().contains("`a`"));
    }
}
