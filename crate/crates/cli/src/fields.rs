//! Field entries of the config: presets, expressions and node files.

use std::f64::consts::PI;
use std::io::BufReader;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context as _, Result};
use meval::{Context, Expr};
use pfsmc_core::dynamics::Source;
use pfsmc_core::grid::{io, Field, Mesh};

use crate::config::LoadedConfig;

const AXES: [&str; 3] = ["x", "y", "z"];

enum Entry {
    Zero,
    NeumannMode,
    Expr(Expr),
    File(std::path::PathBuf),
}

fn parse_entry(cfg: &LoadedConfig, key: &str, value: &str) -> Result<Entry> {
    let v = value.trim();
    Ok(match v {
        "zero" => Entry::Zero,
        "neumann-mode" => Entry::NeumannMode,
        _ => match v.strip_prefix("file:") {
            Some(rel) => Entry::File(cfg.resolve_path(rel.trim())),
            None => Entry::Expr(
                v.parse::<Expr>()
                    .map_err(|e| anyhow!("invalid `{key}`: cannot parse expression `{v}`: {e}"))?,
            ),
        },
    })
}

fn eval_on(
    expr: &Expr,
    mesh: &Arc<Mesh>,
    t: Option<f64>,
) -> std::result::Result<Vec<f64>, meval::Error> {
    let mut ctx = Context::new();
    if let Some(t) = t {
        ctx.var("t", t);
    }
    let dim = mesh.dim();
    let mut values = Vec::with_capacity(mesh.len());
    for idx in 0..mesh.len() {
        let x = mesh.coords(idx);
        for (k, name) in AXES.iter().enumerate() {
            ctx.var(*name, if k < dim { x[k] } else { 0.0 });
        }
        values.push(expr.eval_with_context(&ctx)?);
    }
    Ok(values)
}

fn finite(key: &str, mesh: &Arc<Mesh>, values: Vec<f64>) -> Result<Field> {
    if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        bail!("invalid `{key}`: non-finite value {v} at node {i}");
    }
    Ok(Field::from_values(mesh.clone(), values)?)
}

/// Builds a static field (initial data and targets).
pub fn static_field(cfg: &LoadedConfig, key: &str, value: &str, mesh: &Arc<Mesh>) -> Result<Field> {
    let f = match parse_entry(cfg, key, value)? {
        Entry::Zero => vec![0.0; mesh.len()],
        Entry::NeumannMode => neumann_mode(mesh).into_values(),
        Entry::Expr(e) => eval_on(&e, mesh, None)
            .map_err(|err| anyhow!("invalid `{key}`: cannot evaluate `{value}`: {err}"))?,
        Entry::File(p) => read_node_file(key, &p, mesh)?.into_values(),
    };
    finite(key, mesh, f)
}

/// Builds the heat source; expressions mentioning `t` become transient.
pub fn source(cfg: &LoadedConfig, value: &str, mesh: &Arc<Mesh>) -> Result<Source> {
    match parse_entry(cfg, "f", value)? {
        Entry::Zero => Ok(Source::Zero),
        Entry::Expr(e) => match eval_on(&e, mesh, None) {
            Ok(f) => Ok(Source::Steady(finite("f", mesh, f)?)),
            Err(_) => {
                let f0 = eval_on(&e, mesh, Some(0.0))
                    .map_err(|err| anyhow!("invalid `f`: cannot evaluate `{value}`: {err}"))?;
                finite("f", mesh, f0)?;
                let e = Arc::new(e);
                Ok(Source::Transient(Arc::new(move |t, m: &Arc<Mesh>| {
                    // variables were checked at t = 0; non-finite values surface as a blow-up
                    let v = eval_on(&e, m, Some(t)).unwrap_or_else(|_| vec![f64::NAN; m.len()]);
                    Field::zeros(m.clone()).like(v)
                })))
            }
        },
        other => {
            let f = match other {
                Entry::NeumannMode => neumann_mode(mesh),
                Entry::File(p) => read_node_file("f", &p, mesh)?,
                _ => unreachable!(),
            };
            Ok(Source::Steady(finite("f", mesh, f.into_values())?))
        }
    }
}

/// `Π_k cos(π x_k / L_k)`, the lowest non-constant Neumann mode.
fn neumann_mode(mesh: &Arc<Mesh>) -> Field {
    let lengths = mesh.lengths().to_vec();
    Field::from_fn(mesh.clone(), |x| {
        lengths
            .iter()
            .enumerate()
            .map(|(k, l)| (PI * x[k] / l).cos())
            .product()
    })
}

fn read_node_file(key: &str, path: &std::path::Path, mesh: &Arc<Mesh>) -> Result<Field> {
    let file = std::fs::File::open(path)
        .with_context(|| format!("invalid `{key}`: cannot open {}", path.display()))?;
    io::read_csv(mesh.clone(), BufReader::new(file))
        .with_context(|| format!("invalid `{key}`: cannot read {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_str;

    fn loaded(dir: &std::path::Path) -> LoadedConfig {
        let text = r#"
[mesh]
lengths = [2.0]
nodes = [5]
[potential]
kind = "regular"
[problem]
variant = "B"
rho = 1.0
[data]
theta0 = "zero"
phi0 = "zero"
[time]
t_final = 1.0
dt = 0.1
"#;
        LoadedConfig {
            config: parse_str(text).unwrap(),
            base_dir: dir.to_path_buf(),
        }
    }

    fn mesh() -> Arc<Mesh> {
        Arc::new(Mesh::new(&[2.0], &[5]).unwrap())
    }

    #[test]
    fn presets_and_expressions() {
        let c = loaded(std::path::Path::new("."));
        let m = mesh();
        let f = static_field(&c, "phi0", "neumann-mode", &m).unwrap();
        let g = static_field(&c, "phi0", "cos(pi*x/2)", &m).unwrap();
        for (a, b) in f.values().iter().zip(g.values()) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(f.values()[0], 1.0);
        assert!((f.values()[4] + 1.0).abs() < 1e-15);
        let h = static_field(&c, "phi0", "0.5 + x*y", &m).unwrap();
        assert!(h.values().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn bad_entries_name_the_key() {
        let c = loaded(std::path::Path::new("."));
        let m = mesh();
        let e = static_field(&c, "theta0", "1/(x-1)", &m).unwrap_err();
        assert!(e.to_string().contains("`theta0`"), "{e}");
        let e = static_field(&c, "theta0", "cos(", &m).unwrap_err();
        assert!(e.to_string().contains("`theta0`"), "{e}");
        let e = static_field(&c, "phi0", "t", &m).unwrap_err();
        assert!(e.to_string().contains("`phi0`"), "{e}");
    }

    #[test]
    fn transient_source_depends_on_t() {
        let c = loaded(std::path::Path::new("."));
        let m = mesh();
        match source(&c, "t*x", &m).unwrap() {
            Source::Transient(g) => {
                assert_eq!(g(0.0, &m).linf_norm(), 0.0);
                assert_eq!(g(1.5, &m).linf_norm(), 3.0);
            }
            _ => panic!("expected a transient source"),
        }
        assert!(matches!(source(&c, "x", &m).unwrap(), Source::Steady(_)));
        assert!(matches!(source(&c, "zero", &m).unwrap(), Source::Zero));
    }

    #[test]
    fn node_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = mesh();
        let f = Field::from_fn(m.clone(), |x| x[0] * x[0]);
        let mut buf = Vec::new();
        io::write_csv(&f, &mut buf).unwrap();
        std::fs::write(dir.path().join("phi.csv"), buf).unwrap();
        let c = loaded(dir.path());
        let g = static_field(&c, "phi0", "file:phi.csv", &m).unwrap();
        assert_eq!(g.values(), f.values());
    }
}
