//! Plain-text parameter files.
//!
//! ```text
//! gradreg-net 1
//! two-layer
//! activation softplus 8
//! bound 18.9
//! dims 64 1
//! c <value>
//! a <m values>
//! w <m*d values, row-major>
//! b <m values>
//! ```
//!
//! or, for an MLP,
//!
//! ```text
//! gradreg-net 1
//! mlp
//! widths 2 32 2
//! w <layer 0 weights, out x in row-major>
//! b <layer 0 biases>
//! w ...
//! ```
//!
//! Numbers use Rust's shortest round-trip formatting, so reading back a
//! written file reproduces every parameter bit for bit.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::nets::{Activation, Mlp, TwoLayerNet};

const MAGIC: &str = "gradreg-net 1";

#[derive(Debug, Clone, PartialEq)]
pub enum SavedNet {
    TwoLayer(TwoLayerNet),
    Mlp(Mlp),
}

fn join(vals: &[f64]) -> String {
    vals.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(" ")
}

pub fn write_net<W: Write>(net: &SavedNet, mut out: W) -> Result<()> {
    writeln!(out, "{MAGIC}")?;
    match net {
        SavedNet::TwoLayer(n) => {
            writeln!(out, "two-layer")?;
            match n.activation {
                Activation::Relu => writeln!(out, "activation relu")?,
                Activation::Softplus(t) => writeln!(out, "activation softplus {t:?}")?,
            }
            writeln!(out, "bound {:?}", n.bound)?;
            writeln!(out, "dims {} {}", n.width(), n.dim())?;
            writeln!(out, "c {:?}", n.c)?;
            writeln!(out, "a {}", join(&n.a))?;
            writeln!(out, "w {}", join(&n.w))?;
            writeln!(out, "b {}", join(&n.b))?;
        }
        SavedNet::Mlp(n) => {
            writeln!(out, "mlp")?;
            let widths: Vec<String> = n.widths().iter().map(|w| w.to_string()).collect();
            writeln!(out, "widths {}", widths.join(" "))?;
            for (w, b) in n.layers() {
                writeln!(out, "w {}", join(w))?;
                writeln!(out, "b {}", join(b))?;
            }
        }
    }
    Ok(())
}

struct Lines<R> {
    inner: std::io::Lines<R>,
    line: usize,
}

impl<R: BufRead> Lines<R> {
    fn next(&mut self) -> Result<String> {
        self.line += 1;
        match self.inner.next() {
            Some(l) => Ok(l?),
            None => Err(Error::Parse(format!("unexpected end of file at line {}", self.line))),
        }
    }

    fn field(&mut self, key: &str) -> Result<Vec<String>> {
        let l = self.next()?;
        let mut parts = l.split_whitespace();
        match parts.next() {
            Some(k) if k == key => Ok(parts.map(str::to_owned).collect()),
            _ => Err(Error::Parse(format!("line {}: expected `{key}`", self.line))),
        }
    }

    fn floats(&mut self, key: &str) -> Result<Vec<f64>> {
        let line = self.line + 1;
        self.field(key)?
            .iter()
            .map(|s| s.parse::<f64>().map_err(|e| Error::Parse(format!("line {line}: {e}"))))
            .collect()
    }
}

fn parse_usize(s: &str) -> Result<usize> {
    s.parse().map_err(|e| Error::Parse(format!("{s}: {e}")))
}

pub fn read_net<R: BufRead>(input: R) -> Result<SavedNet> {
    let mut lines = Lines {
        inner: input.lines(),
        line: 0,
    };
    if lines.next()?.trim() != MAGIC {
        return Err(Error::Parse(format!("missing `{MAGIC}` header")));
    }
    match lines.next()?.trim() {
        "two-layer" => {
            let act = lines.field("activation")?;
            let activation = match act.as_slice() {
                [k] if k == "relu" => Activation::Relu,
                [k, t] if k == "softplus" => {
                    Activation::Softplus(t.parse().map_err(|e| Error::Parse(format!("tau: {e}")))?)
                }
                _ => return Err(Error::Parse("bad activation line".into())),
            };
            let bound = lines.floats("bound")?;
            let dims = lines.field("dims")?;
            if bound.len() != 1 || dims.len() != 2 {
                return Err(Error::Parse("bad bound/dims line".into()));
            }
            let (m, d) = (parse_usize(&dims[0])?, parse_usize(&dims[1])?);
            let c = lines.floats("c")?;
            let a = lines.floats("a")?;
            let w = lines.floats("w")?;
            let b = lines.floats("b")?;
            if c.len() != 1 || a.len() != m || b.len() != m || w.len() != m * d {
                return Err(Error::Parse("parameter count does not match dims".into()));
            }
            Ok(SavedNet::TwoLayer(TwoLayerNet::from_parts(c[0], a, w, b, activation, bound[0])?))
        }
        "mlp" => {
            let widths = lines
                .field("widths")?
                .iter()
                .map(|s| parse_usize(s))
                .collect::<Result<Vec<_>>>()?;
            if widths.len() < 2 {
                return Err(Error::Parse("mlp needs at least two widths".into()));
            }
            let mut ws = Vec::new();
            let mut bs = Vec::new();
            for pair in widths.windows(2) {
                let w = lines.floats("w")?;
                let b = lines.floats("b")?;
                if w.len() != pair[0] * pair[1] || b.len() != pair[1] {
                    return Err(Error::Parse("layer size does not match widths".into()));
                }
                ws.push(w);
                bs.push(b);
            }
            Ok(SavedNet::Mlp(Mlp::from_layers(ws, bs)?))
        }
        other => Err(Error::Parse(format!("unknown net kind `{other}`"))),
    }
}
