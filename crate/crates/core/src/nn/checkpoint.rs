//! Text checkpoints for layer stacks.
//!
//! ```text
//! CBX-CKPT v1
//! <layer count>
//! dims <out> <in>
//! act <name>
//! <out weight rows, space-separated>
//! <bias row>
//! ...
//! ```
//!
//! Numbers are written with 17 significant digits so parsing recovers the exact bits.

use std::fmt::Write as _;

use super::{DenseLayer, Matrix};
use crate::{Error, Result};

pub const MAGIC: &str = "CBX-CKPT v1";

pub(crate) fn format_real(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_row(out: &mut String, row: &[f64]) {
    let mut first = true;
    for &v in row {
        if !first {
            out.push(' ');
        }
        first = false;
        out.push_str(&format_real(v));
    }
    out.push('\n');
}

/// Appends the layer-count line and every layer block to `out`.
pub(crate) fn write_layer_blocks(out: &mut String, layers: &[DenseLayer]) {
    let _ = writeln!(out, "{}", layers.len());
    for layer in layers {
        let _ = writeln!(out, "dims {} {}", layer.out_dim(), layer.in_dim());
        let _ = writeln!(out, "act {}", layer.activation().name());
        for r in 0..layer.out_dim() {
            write_row(out, layer.weights().row(r));
        }
        write_row(out, layer.bias());
    }
}

pub fn to_checkpoint_string(layers: &[DenseLayer]) -> String {
    let mut out = String::new();
    out.push_str(MAGIC);
    out.push('\n');
    write_layer_blocks(&mut out, layers);
    out
}

pub fn from_checkpoint_str(text: &str) -> Result<Vec<DenseLayer>> {
    let mut lines = CheckpointLines::new(text, "<checkpoint>");
    lines.expect_magic()?;
    let layers = lines.read_layer_blocks()?;
    lines.expect_end()?;
    Ok(layers)
}

pub fn save_checkpoint(path: impl AsRef<std::path::Path>, layers: &[DenseLayer]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_checkpoint_string(layers)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<std::path::Path>) -> Result<Vec<DenseLayer>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = CheckpointLines::new(&text, &path.display().to_string());
    lines.expect_magic()?;
    let layers = lines.read_layer_blocks()?;
    lines.expect_end()?;
    Ok(layers)
}

/// Line cursor shared by the plain and model checkpoint readers.
pub(crate) struct CheckpointLines<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
    source: String,
    peeked: Option<(usize, &'a str)>,
}

impl<'a> CheckpointLines<'a> {
    pub(crate) fn new(text: &'a str, source: &str) -> Self {
        Self {
            lines: text.lines().enumerate(),
            source: source.to_string(),
            peeked: None,
        }
    }

    pub(crate) fn err(&self, line: usize, message: impl ToString) -> Error {
        Error::parse(&self.source, line + 1, message)
    }

    pub(crate) fn peek(&mut self) -> Option<(usize, &'a str)> {
        if self.peeked.is_none() {
            self.peeked = self.lines.next();
        }
        self.peeked
    }

    pub(crate) fn next_line(&mut self) -> Result<(usize, &'a str)> {
        if let Some(p) = self.peeked.take() {
            return Ok(p);
        }
        self.lines
            .next()
            .ok_or_else(|| Error::parse(&self.source, 0, "unexpected end of checkpoint"))
    }

    pub(crate) fn expect_magic(&mut self) -> Result<()> {
        let (n, line) = self.next_line()?;
        if line.trim_end() != MAGIC {
            return Err(self.err(n, format!("expected '{MAGIC}' header")));
        }
        Ok(())
    }

    pub(crate) fn expect_end(&mut self) -> Result<()> {
        while let Some((n, line)) = self.peek() {
            if !line.trim().is_empty() {
                return Err(self.err(n, "trailing content after last layer"));
            }
            self.peeked = None;
        }
        Ok(())
    }

    fn read_reals(&mut self, expected: usize) -> Result<Vec<f64>> {
        let (n, line) = self.next_line()?;
        let values = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| self.err(n, format!("bad number: {e}")))?;
        if values.len() != expected {
            return Err(self.err(n, format!("expected {expected} values, got {}", values.len())));
        }
        Ok(values)
    }

    fn read_keyed(&mut self, key: &str) -> Result<(usize, &'a str)> {
        let (n, line) = self.next_line()?;
        match line.strip_prefix(key).and_then(|r| r.strip_prefix(' ')) {
            Some(rest) => Ok((n, rest.trim())),
            None => Err(self.err(n, format!("expected '{key} ...'"))),
        }
    }

    pub(crate) fn read_layer_blocks(&mut self) -> Result<Vec<DenseLayer>> {
        let (n, count_line) = self.next_line()?;
        let count: usize = count_line
            .trim()
            .parse()
            .map_err(|_| self.err(n, "expected layer count"))?;
        let mut layers = Vec::with_capacity(count);
        for _ in 0..count {
            let (n, dims) = self.read_keyed("dims")?;
            let parsed: Vec<usize> = dims
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| self.err(n, "bad dims"))?;
            let [out_dim, in_dim] = parsed[..] else {
                return Err(self.err(n, "dims needs <out> <in>"));
            };
            let (n, act) = self.read_keyed("act")?;
            let activation = act.parse().map_err(|e: Error| self.err(n, e))?;
            let mut data = Vec::with_capacity(out_dim * in_dim);
            for _ in 0..out_dim {
                data.extend(self.read_reals(in_dim)?);
            }
            let bias = self.read_reals(out_dim)?;
            let weights = Matrix::from_vec(out_dim, in_dim, data)?;
            layers.push(DenseLayer::new(weights, bias, activation)?);
        }
        super::validate_stack(&layers)?;
        Ok(layers)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{init_layers, Activation};

    fn bits(layers: &[DenseLayer]) -> Vec<u64> {
        layers
            .iter()
            .flat_map(|l| l.weights().as_slice().iter().chain(l.bias()))
            .map(|v| v.to_bits())
            .collect()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let mut layers = init_layers(
            &[6, 8, 4, 2],
            &[Activation::ReLU, Activation::Sigmoid, Activation::Softmax],
            42,
        )
        .unwrap();
        layers[0].bias_mut()[0] = -0.0;
        layers[1].bias_mut()[1] = 1e-300;
        layers[2].bias_mut()[0] = std::f64::consts::PI;
        let text = to_checkpoint_string(&layers);
        assert!(text.starts_with("CBX-CKPT v1\n3\ndims 8 6\nact relu\n"));
        let back = from_checkpoint_str(&text).unwrap();
        assert_eq!(bits(&back), bits(&layers));
        assert_eq!(back, layers);
    }

    #[test]
    fn rejects_malformed() {
        assert!(from_checkpoint_str("nope\n").is_err());
        assert!(from_checkpoint_str("CBX-CKPT v1\n1\ndims 1 2\nact relu\n1.0\n0.0\n").is_err());
        assert!(from_checkpoint_str("CBX-CKPT v1\n1\ndims 1 1\nact tanh\n1.0\n0.0\n").is_err());
        assert!(from_checkpoint_str("CBX-CKPT v1\n0\nextra\n").is_err());
        assert_eq!(from_checkpoint_str("CBX-CKPT v1\n0\n").unwrap(), vec![]);
    }
}
