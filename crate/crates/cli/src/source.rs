//! Matrix sources and human-readable sizes.

use std::path::PathBuf;
use std::str::FromStr;

use lbmpk::matrix::{gen_random_symmetric, gen_stencil_2d7pt, gen_stencil_3d, load_matrix_market};
use lbmpk::{CrsMatrix, Error, Result};

/// Synthetic matrix specification.
///
/// `2d7pt:NXxNY`, `3d:N:ORDER` or `random:N:DEGREE:SEED`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum GenSpec {
    Stencil2d { nx: usize, ny: usize },
    Stencil3d { n: usize, order: usize },
    Random { n: usize, degree: usize, seed: u64 },
}

fn num<T: FromStr>(s: &str, what: &str) -> Result<T> {
    s.trim().parse().map_err(|_| Error::InvalidArgument(format!("bad {what} '{s}'")))
}

impl FromStr for GenSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            ["2d7pt", dims] => {
                let (x, y) = dims
                    .split_once('x')
                    .ok_or_else(|| Error::InvalidArgument(format!("expected NXxNY, got '{dims}'")))?;
                Ok(Self::Stencil2d { nx: num(x, "grid size")?, ny: num(y, "grid size")? })
            }
            ["3d", n, order] => Ok(Self::Stencil3d { n: num(n, "grid size")?, order: num(order, "order")? }),
            ["random", n, d, seed] => {
                Ok(Self::Random { n: num(n, "size")?, degree: num(d, "degree")?, seed: num(seed, "seed")? })
            }
            _ => Err(Error::InvalidArgument(format!(
                "unknown generator '{s}' (use 2d7pt:NXxNY, 3d:N:ORDER or random:N:DEGREE:SEED)"
            ))),
        }
    }
}

impl GenSpec {
    pub fn build(&self) -> Result<CrsMatrix> {
        match *self {
            Self::Stencil2d { nx, ny } => gen_stencil_2d7pt(nx, ny),
            Self::Stencil3d { n, order } => gen_stencil_3d(n, order),
            Self::Random { n, degree, seed } => gen_random_symmetric(n, degree, seed),
        }
    }
}

#[derive(Clone, Debug)]
pub enum Source {
    File(PathBuf),
    Gen(GenSpec),
}

impl Source {
    pub fn load(&self) -> Result<CrsMatrix> {
        match self {
            Self::File(p) => load_matrix_market(p),
            Self::Gen(g) => g.build(),
        }
    }

    pub fn name(&self) -> String {
        match self {
            Self::File(p) => p.display().to_string(),
            Self::Gen(GenSpec::Stencil2d { nx, ny }) => format!("2d7pt:{nx}x{ny}"),
            Self::Gen(GenSpec::Stencil3d { n, order }) => format!("3d:{n}:{order}"),
            Self::Gen(GenSpec::Random { n, degree, seed }) => format!("random:{n}:{degree}:{seed}"),
        }
    }
}

/// Byte count such as `35MB`, `512KiB` or `1048576`. Decimal suffixes use
/// powers of 1000, binary ones powers of 1024.
pub fn parse_size(s: &str) -> std::result::Result<f64, String> {
    let t = s.trim();
    let split = t.find(|c: char| c.is_ascii_alphabetic()).unwrap_or(t.len());
    let (num, unit) = t.split_at(split);
    let value: f64 = num.trim().parse().map_err(|_| format!("bad size '{s}'"))?;
    let scale = match unit.trim().to_ascii_lowercase().as_str() {
        "" | "b" => 1.0,
        "kb" | "k" => 1e3,
        "mb" | "m" => 1e6,
        "gb" | "g" => 1e9,
        "kib" => 1024.0,
        "mib" => 1024.0 * 1024.0,
        "gib" => 1024.0 * 1024.0 * 1024.0,
        u => return Err(format!("unknown size unit '{u}'")),
    };
    if !(value > 0.0) || !value.is_finite() {
        return Err(format!("size must be positive, got '{s}'"));
    }
    Ok(value * scale)
}
