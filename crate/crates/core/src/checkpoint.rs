//! Text checkpoint format for networks.
//!
//! ```text
//! MLPCKPT v1
//! 24 64 64 8
//! <weights of layer 1, row-major, one line>
//! <biases of layer 1, one line>
//! ...
//! ```
//!
//! Values are written with 17 significant digits, so a load after a save
//! reproduces every parameter bit for bit. Model-specific formats (the
//! diffusion and classifier checkpoints) extend this block with their own
//! trailing sections.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::mlp::{Activation, Layer, Mlp};
use crate::tensor::Tensor2;
use crate::textio::{fmt17, parse_f64};

pub const MAGIC: &str = "MLPCKPT v1";

pub fn write_mlp_block<W: Write>(w: &mut W, mlp: &Mlp<f64>) -> std::io::Result<()> {
    writeln!(w, "{MAGIC}")?;
    let sizes: Vec<String> = mlp.sizes().iter().map(|s| s.to_string()).collect();
    writeln!(w, "{}", sizes.join(" "))?;
    for layer in mlp.layers() {
        write_vec_line(w, layer.weights.data())?;
        write_vec_line(w, &layer.biases)?;
    }
    Ok(())
}

fn write_vec_line<W: Write>(w: &mut W, xs: &[f64]) -> std::io::Result<()> {
    let line: Vec<String> = xs.iter().map(|x| fmt17(*x)).collect();
    writeln!(w, "{}", line.join(" "))
}

/// Line-oriented reader that tracks position for error reporting.
pub struct CkptReader<R> {
    inner: R,
    path: String,
    line_no: usize,
}

impl<R: BufRead> CkptReader<R> {
    pub fn new(inner: R, path: &str) -> Self {
        CkptReader {
            inner,
            path: path.to_string(),
            line_no: 0,
        }
    }

    pub fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.clone(),
            line: self.line_no,
            col: 1,
            msg: msg.into(),
        }
    }

    pub fn next_line(&mut self) -> Result<String> {
        let mut buf = String::new();
        let n = self.inner.read_line(&mut buf)?;
        self.line_no += 1;
        if n == 0 {
            return Err(self.err("unexpected end of file"));
        }
        while buf.ends_with('\n') || buf.ends_with('\r') {
            buf.pop();
        }
        Ok(buf)
    }

    /// Next line, or `None` at end of file.
    pub fn try_next_line(&mut self) -> Result<Option<String>> {
        let mut buf = String::new();
        let n = self.inner.read_line(&mut buf)?;
        if n == 0 {
            return Ok(None);
        }
        self.line_no += 1;
        while buf.ends_with('\n') || buf.ends_with('\r') {
            buf.pop();
        }
        Ok(Some(buf))
    }

    pub fn floats(&mut self, expected: usize, what: &str) -> Result<Vec<f64>> {
        let line = self.next_line()?;
        let vals: Result<Vec<f64>> = line
            .split_whitespace()
            .map(|t| parse_f64(t, what))
            .collect();
        let vals = vals.map_err(|e| self.err(e.to_string()))?;
        if vals.len() != expected {
            return Err(self.err(format!(
                "{what}: expected {expected} values, got {}",
                vals.len()
            )));
        }
        Ok(vals)
    }
}

pub fn read_mlp_block<R: BufRead>(r: &mut CkptReader<R>) -> Result<Mlp<f64>> {
    let magic = r.next_line()?;
    if magic != MAGIC {
        return Err(r.err(format!("bad magic line {magic:?}, expected {MAGIC:?}")));
    }
    let sizes_line = r.next_line()?;
    let sizes: Result<Vec<usize>> = sizes_line
        .split_whitespace()
        .map(|t| crate::textio::parse_usize(t, "layer size"))
        .collect();
    let sizes = sizes.map_err(|e| r.err(e.to_string()))?;
    if sizes.len() < 2 {
        return Err(r.err("need at least input and output sizes"));
    }
    let mut layers = Vec::with_capacity(sizes.len() - 1);
    for w in sizes.windows(2) {
        let (fan_in, fan_out) = (w[0], w[1]);
        let weights = r.floats(fan_out * fan_in, "weights")?;
        let biases = r.floats(fan_out, "biases")?;
        layers.push(Layer {
            weights: Tensor2::new(fan_out, fan_in, weights)
                .map_err(|e| r.err(e.to_string()))?,
            biases,
        });
    }
    Mlp::from_layers(layers, Activation::Tanh)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn round_trip_is_value_exact() {
        let mut rng = Rng::new(4242);
        let mlp = Mlp::<f64>::xavier(&[5, 9, 3], &mut rng).unwrap();
        let mut buf = Vec::new();
        write_mlp_block(&mut buf, &mlp).unwrap();
        let mut reader = CkptReader::new(buf.as_slice(), "mem");
        let back = read_mlp_block(&mut reader).unwrap();
        assert_eq!(back.sizes(), mlp.sizes());
        let a = mlp.params_flat();
        let b = back.params_flat();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn save_is_deterministic() {
        let mut rng = Rng::new(7);
        let mlp = Mlp::<f64>::xavier(&[4, 4, 2], &mut rng).unwrap();
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_mlp_block(&mut a, &mlp).unwrap();
        write_mlp_block(&mut b, &mlp).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_magic() {
        let text = "NOPE v9\n2 1\n0 0\n0\n";
        let mut reader = CkptReader::new(text.as_bytes(), "mem");
        let err = read_mlp_block(&mut reader).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn rejects_truncated_file() {
        let text = format!("{MAGIC}\n2 1\n0.0 0.0\n");
        let mut reader = CkptReader::new(text.as_bytes(), "mem");
        assert!(read_mlp_block(&mut reader).is_err());
    }
}
