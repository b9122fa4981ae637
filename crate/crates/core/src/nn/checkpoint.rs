//! Plain-text parameter checkpoints.
//!
//! Layout (version 1), one token group per line:
//!
//! ```text
//! flac-params 1
//! seed <u64>
//! layers <L>
//! <fan_in> <fan_out> <activation>      # L lines, activation ∈ {elu, gelu, identity}
//! values <count>
//! <value>                              # count lines
//! ```
//!
//! Values are written layer by layer, the weight matrix in row-major
//! (`out × in`) order followed by the bias. Each value uses Rust's shortest
//! round-trip decimal form, so reading a checkpoint back is bit-exact.

use std::fmt::Write as _;

use ndarray::{Array1, Array2};

use super::mlp::{Activation, Layer, Params};
use crate::error::{FlacError, Result};

const MAGIC: &str = "flac-params 1";

pub fn encode(params: &Params) -> String {
    let mut out = String::new();
    writeln!(out, "{MAGIC}").unwrap();
    writeln!(out, "seed {}", params.seed()).unwrap();
    writeln!(out, "layers {}", params.layers().len()).unwrap();
    for l in params.layers() {
        writeln!(out, "{} {} {}", l.fan_in(), l.fan_out(), l.activation.tag()).unwrap();
    }
    let flat = params.flat();
    writeln!(out, "values {}", flat.len()).unwrap();
    for v in flat {
        writeln!(out, "{v}").unwrap();
    }
    out
}

fn bad(msg: impl Into<String>) -> FlacError {
    FlacError::Checkpoint(msg.into())
}

fn expect_field<'a>(line: Option<&'a str>, name: &str) -> Result<&'a str> {
    let line = line.ok_or_else(|| bad(format!("missing `{name}` line")))?;
    line.strip_prefix(name)
        .and_then(|rest| rest.strip_prefix(' '))
        .ok_or_else(|| bad(format!("expected `{name}`, found `{line}`")))
}

/// Parses a checkpoint from an iterator of lines, consuming exactly the
/// lines that belong to it.
pub fn decode_lines<'a>(lines: &mut impl Iterator<Item = &'a str>) -> Result<Params> {
    match lines.next() {
        Some(MAGIC) => {}
        other => return Err(bad(format!("bad header {other:?}"))),
    }
    let seed: u64 = expect_field(lines.next(), "seed")?
        .parse()
        .map_err(|_| bad("seed is not an integer"))?;
    let n_layers: usize = expect_field(lines.next(), "layers")?
        .parse()
        .map_err(|_| bad("layer count is not an integer"))?;
    let mut dims = Vec::with_capacity(n_layers);
    for i in 0..n_layers {
        let line = lines.next().ok_or_else(|| bad(format!("missing layer {i}")))?;
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(bad(format!("layer line `{line}`")));
        }
        let fan_in: usize = parts[0].parse().map_err(|_| bad("fan_in"))?;
        let fan_out: usize = parts[1].parse().map_err(|_| bad("fan_out"))?;
        let act = Activation::from_tag(parts[2])
            .ok_or_else(|| bad(format!("unknown activation `{}`", parts[2])))?;
        dims.push((fan_in, fan_out, act));
    }
    let count: usize = expect_field(lines.next(), "values")?
        .parse()
        .map_err(|_| bad("value count is not an integer"))?;
    let expected: usize = dims.iter().map(|(i, o, _)| i * o + o).sum();
    if count != expected {
        return Err(bad(format!("{count} values for {expected} parameters")));
    }
    let mut layers = Vec::with_capacity(n_layers);
    for (fan_in, fan_out, activation) in dims {
        let mut take = |n: usize| -> Result<Vec<f64>> {
            (0..n)
                .map(|_| {
                    let tok = lines.next().ok_or_else(|| bad("truncated values"))?;
                    tok.trim().parse::<f64>().map_err(|_| bad(format!("bad value `{tok}`")))
                })
                .collect()
        };
        let weight = Array2::from_shape_vec((fan_out, fan_in), take(fan_in * fan_out)?)
            .map_err(|e| bad(e.to_string()))?;
        let bias = Array1::from(take(fan_out)?);
        layers.push(Layer {
            weight,
            bias,
            activation,
        });
    }
    Params::from_layers(layers, seed)
}

pub fn decode(text: &str) -> Result<Params> {
    let mut lines = text.lines();
    let params = decode_lines(&mut lines)?;
    if lines.any(|l| !l.trim().is_empty()) {
        return Err(bad("trailing content"));
    }
    Ok(params)
}
