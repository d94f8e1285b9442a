//! Text checkpoints: a header, then one shape line and one value line per
//! parameter block. Values use shortest round-trip formatting.
//!
//! ```text
//! ccrl-network 1
//! scalar f64
//! input 24 24 32
//! conv1.weight 16 18
//! 1.2e-1 -3.4e-2 ...
//! ```

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use super::{Block, NetError, NetShape, Network};
use crate::scalar::Scalar;

const MAGIC: &str = "ccrl-network 1";

fn bad(line: usize, reason: impl Into<String>) -> NetError {
    NetError::Checkpoint { line, reason: reason.into() }
}

/// Scalar tag recorded in a checkpoint header.
pub fn checkpoint_scalar(text: &str) -> Option<&str> {
    text.lines().nth(1)?.strip_prefix("scalar ")
}

impl<T: Scalar> Network<T> {
    pub fn to_checkpoint(&self) -> String {
        let s = self.shape();
        let mut out = format!("{MAGIC}\nscalar {}\ninput {} {} {}\n", T::NAME, s.height, s.width, s.aux);
        for b in Block::ALL {
            let (r, c) = self.layout().dims(b);
            let _ = writeln!(out, "{} {r} {c}", b.name());
            let mut first = true;
            for v in self.block(b) {
                if !first {
                    out.push(' ');
                }
                first = false;
                let _ = write!(out, "{v:e}");
            }
            out.push('\n');
        }
        out
    }

    pub fn save<W: Write>(&self, mut out: W) -> Result<(), NetError> {
        out.write_all(self.to_checkpoint().as_bytes())?;
        Ok(())
    }

    pub fn save_path(&self, path: &Path) -> Result<(), NetError> {
        self.save(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    /// Parses a checkpoint. A checkpoint written with another scalar type is
    /// converted through `f64`.
    pub fn load<R: Read>(input: R) -> Result<Self, NetError> {
        let mut lines = BufReader::new(input).lines().enumerate().map(|(i, l)| (i + 1, l));
        let mut next = |what: &str| -> Result<(usize, String), NetError> {
            match lines.next() {
                Some((n, Ok(l))) => Ok((n, l)),
                Some((_, Err(e))) => Err(e.into()),
                None => Err(bad(0, format!("unexpected end of file, expected {what}"))),
            }
        };
        let (n, magic) = next("header")?;
        if magic.trim_end() != MAGIC {
            return Err(bad(n, format!("expected '{MAGIC}'")));
        }
        let (n, tag) = next("scalar tag")?;
        let tag = tag.strip_prefix("scalar ").ok_or_else(|| bad(n, "expected 'scalar <type>'"))?.trim().to_string();
        if tag != "f32" && tag != "f64" {
            return Err(bad(n, format!("unknown scalar type '{tag}'")));
        }
        let (n, input) = next("input shape")?;
        let dims: Vec<usize> = input
            .strip_prefix("input ")
            .ok_or_else(|| bad(n, "expected 'input <height> <width> <aux>'"))?
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| bad(n, format!("bad dimension '{t}'"))))
            .collect::<Result<_, _>>()?;
        let [height, width, aux] = dims[..] else {
            return Err(bad(n, "expected three dimensions"));
        };
        let mut net = Network::<T>::zeros(NetShape { height, width, aux });
        for b in Block::ALL {
            let (n, header) = next(b.name())?;
            let mut parts = header.split_whitespace();
            let want = net.layout().dims(b);
            let name = parts.next().unwrap_or("");
            let got: Vec<usize> = parts.filter_map(|t| t.parse().ok()).collect();
            if name != b.name() || got != [want.0, want.1] {
                return Err(bad(n, format!("expected block '{} {} {}', found '{header}'", b.name(), want.0, want.1)));
            }
            let (n, values) = next("block values")?;
            let dst = net.block_mut(b);
            let mut count = 0;
            for tok in values.split_whitespace() {
                if count == dst.len() {
                    return Err(bad(n, "too many values"));
                }
                dst[count] = if tag == T::NAME {
                    tok.parse::<T>().map_err(|_| bad(n, format!("bad value '{tok}'")))?
                } else {
                    T::of(tok.parse::<f64>().map_err(|_| bad(n, format!("bad value '{tok}'")))?)
                };
                count += 1;
            }
            if count != dst.len() {
                return Err(bad(n, format!("expected {} values, found {count}", dst.len())));
            }
        }
        Ok(net)
    }

    pub fn load_path(path: &Path) -> Result<Self, NetError> {
        Self::load(std::fs::File::open(path)?)
    }
}
