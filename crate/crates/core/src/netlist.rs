//! Plain-text netlist export and import.
//!
//! ```text
//! # drn-netlist v1
//! LAYERS <L>
//! LEAKS <on|off>
//! LAYER <ℓ> <N_ℓ>            one per layer, ℓ = 0..=L
//! GAIN <ℓ> <A^(ℓ)>           ℓ = 0..L-1
//! AMP <ℓ> <a^(ℓ)>            optional, ℓ = 1..=L, all or none
//! VSRC <ℓ> <0|1> <±A^(ℓ)>    bias sources of layers 0..L-1
//! DIODE <ℓ> <k> <exc|inh>    hidden units
//! R <ℓ> <j> <k> <g>          coupling from node j of layer ℓ-1 to node k of layer ℓ
//! RLEAK <ℓ> <k> <g>          resistor from node k of layer ℓ to ground
//! END
//! ```
//!
//! Only nonzero resistors are listed. Values are written in Rust's shortest
//! round-trip representation, so re-import is bit-exact. Lines starting with
//! `#` after the header and blank lines are ignored.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::error::{DrnError, Result};
use crate::model::{DrnParams, UnitPolarity};

pub const NETLIST_HEADER: &str = "# drn-netlist v1";

pub fn write_netlist<W: Write>(params: &DrnParams, mut out: W) -> Result<()> {
    let num_layers = params.num_layers();
    writeln!(out, "{NETLIST_HEADER}")?;
    writeln!(out, "LAYERS {num_layers}")?;
    writeln!(out, "LEAKS {}", if params.leaks_enabled() { "on" } else { "off" })?;
    for (l, n) in params.widths().iter().enumerate() {
        writeln!(out, "LAYER {l} {n}")?;
    }
    for (l, a) in params.gains().iter().enumerate() {
        writeln!(out, "GAIN {l} {a:?}")?;
    }
    if let Some(amp) = params.amplifier_gains() {
        for (l, a) in amp.iter().enumerate() {
            writeln!(out, "AMP {} {a:?}", l + 1)?;
        }
    }
    for (l, a) in params.gains().iter().enumerate() {
        writeln!(out, "VSRC {l} 0 {a:?}")?;
        writeln!(out, "VSRC {l} 1 {:?}", -a)?;
    }
    for l in 1..num_layers {
        for (k, pol) in params.layout()[l].iter().enumerate() {
            match pol {
                UnitPolarity::Excitatory => writeln!(out, "DIODE {l} {k} exc")?,
                UnitPolarity::Inhibitory => writeln!(out, "DIODE {l} {k} inh")?,
                _ => {}
            }
        }
    }
    for l in 1..=num_layers {
        for ((j, k), g) in params.coupling(l).indexed_iter() {
            if *g != 0.0 {
                writeln!(out, "R {l} {j} {k} {g:?}")?;
            }
        }
        for (k, g) in params.leak(l).iter().enumerate() {
            if *g != 0.0 {
                writeln!(out, "RLEAK {l} {k} {g:?}")?;
            }
        }
    }
    writeln!(out, "END")?;
    out.flush()?;
    Ok(())
}

pub fn netlist_string(params: &DrnParams) -> String {
    let mut buf = Vec::new();
    write_netlist(params, &mut buf).expect("writing to memory cannot fail");
    String::from_utf8(buf).expect("netlist is ASCII")
}

pub fn save_netlist(params: &DrnParams, path: impl AsRef<Path>) -> Result<()> {
    write_netlist(params, BufWriter::new(File::create(path)?))
}

pub fn load_netlist(path: impl AsRef<Path>) -> Result<DrnParams> {
    read_netlist(BufReader::new(File::open(path)?))
}

struct Line<'a> {
    number: usize,
    fields: Vec<&'a str>,
}

impl Line<'_> {
    fn err(&self, message: impl Into<String>) -> DrnError {
        DrnError::Netlist { line: self.number, message: message.into() }
    }

    fn expect_len(&self, n: usize) -> Result<()> {
        if self.fields.len() != n {
            return Err(self.err(format!(
                "{} takes {} fields, got {}",
                self.fields[0],
                n - 1,
                self.fields.len() - 1
            )));
        }
        Ok(())
    }

    fn index(&self, i: usize, bound: usize, what: &str) -> Result<usize> {
        let v: usize = self.fields[i]
            .parse()
            .map_err(|_| self.err(format!("bad {what} {:?}", self.fields[i])))?;
        if v >= bound {
            return Err(self.err(format!("{what} {v} out of range (< {bound})")));
        }
        Ok(v)
    }

    fn value(&self, i: usize) -> Result<f64> {
        let v: f64 = self.fields[i]
            .parse()
            .map_err(|_| self.err(format!("bad number {:?}", self.fields[i])))?;
        if !v.is_finite() {
            return Err(self.err("non-finite value"));
        }
        Ok(v)
    }
}

pub fn read_netlist<R: BufRead>(input: R) -> Result<DrnParams> {
    let text: Vec<String> = input.lines().collect::<std::io::Result<_>>()?;
    let mut lines = text.iter().enumerate().map(|(i, s)| (i + 1, s.trim()));
    match lines.next() {
        Some((_, h)) if h == NETLIST_HEADER => {}
        Some((n, h)) => {
            return Err(DrnError::Netlist { line: n, message: format!("expected header {NETLIST_HEADER:?}, got {h:?}") })
        }
        None => return Err(DrnError::Netlist { line: 0, message: "empty netlist".into() }),
    }
    let body: Vec<Line> = lines
        .filter(|(_, s)| !s.is_empty() && !s.starts_with('#'))
        .map(|(number, s)| Line { number, fields: s.split_whitespace().collect() })
        .collect();

    let mut num_layers = None;
    let mut leaks_enabled = None;
    let mut widths: Vec<Option<usize>> = Vec::new();
    let mut gains: Vec<Option<f64>> = Vec::new();
    let mut amps: Vec<Option<f64>> = Vec::new();
    let mut vsrc: Vec<[Option<f64>; 2]> = Vec::new();
    let mut diodes: Vec<(usize, usize, &str, &Line)> = Vec::new();
    let mut couplings: Vec<Array2<f64>> = Vec::new();
    let mut leaks: Vec<Array1<f64>> = Vec::new();
    let mut ended = false;

    for line in &body {
        if ended {
            return Err(line.err("content after END"));
        }
        let keyword = line.fields[0];
        // Structural lines must precede element lines.
        let structure_ready = || -> Result<usize> {
            let l = num_layers.ok_or_else(|| line.err("LAYERS must come first"))?;
            if widths.iter().any(Option::is_none) {
                return Err(line.err("all LAYER lines must precede elements"));
            }
            Ok(l)
        };
        match keyword {
            "LAYERS" => {
                line.expect_len(2)?;
                if num_layers.is_some() {
                    return Err(line.err("duplicate LAYERS"));
                }
                let l = line.index(1, usize::MAX, "layer count")?;
                if l == 0 {
                    return Err(line.err("a network needs at least one layer"));
                }
                num_layers = Some(l);
                widths = vec![None; l + 1];
                gains = vec![None; l];
                amps = vec![None; l];
                vsrc = vec![[None, None]; l];
            }
            "LEAKS" => {
                line.expect_len(2)?;
                leaks_enabled = Some(match line.fields[1] {
                    "on" => true,
                    "off" => false,
                    other => return Err(line.err(format!("LEAKS must be on or off, got {other:?}"))),
                });
            }
            "LAYER" => {
                line.expect_len(3)?;
                let l = num_layers.ok_or_else(|| line.err("LAYERS must come first"))?;
                let idx = line.index(1, l + 1, "layer")?;
                if widths[idx].replace(line.index(2, usize::MAX, "width")?).is_some() {
                    return Err(line.err(format!("duplicate LAYER {idx}")));
                }
            }
            "GAIN" => {
                line.expect_len(3)?;
                let l = num_layers.ok_or_else(|| line.err("LAYERS must come first"))?;
                let idx = line.index(1, l, "layer")?;
                if gains[idx].replace(line.value(2)?).is_some() {
                    return Err(line.err(format!("duplicate GAIN {idx}")));
                }
            }
            "AMP" => {
                line.expect_len(3)?;
                let l = num_layers.ok_or_else(|| line.err("LAYERS must come first"))?;
                let idx = line.index(1, l + 1, "layer")?;
                if idx == 0 {
                    return Err(line.err("amplifier gains start at layer 1"));
                }
                if amps[idx - 1].replace(line.value(2)?).is_some() {
                    return Err(line.err(format!("duplicate AMP {idx}")));
                }
            }
            "VSRC" => {
                line.expect_len(4)?;
                let l = num_layers.ok_or_else(|| line.err("LAYERS must come first"))?;
                let idx = line.index(1, l, "layer")?;
                let node = line.index(2, 2, "bias node")?;
                if vsrc[idx][node].replace(line.value(3)?).is_some() {
                    return Err(line.err(format!("duplicate VSRC {idx} {node}")));
                }
            }
            "DIODE" => {
                line.expect_len(4)?;
                let l = structure_ready()?;
                let idx = line.index(1, l, "layer")?;
                let k = line.index(2, widths[idx].unwrap_or(0), "node")?;
                diodes.push((idx, k, line.fields[3], line));
            }
            "R" | "RLEAK" => {
                let l = structure_ready()?;
                if couplings.is_empty() {
                    let w: Vec<usize> = widths.iter().map(|w| w.expect("checked")).collect();
                    couplings = (1..=l).map(|i| Array2::zeros((w[i - 1], w[i]))).collect();
                    leaks = (1..=l).map(|i| Array1::zeros(w[i])).collect();
                }
                let (slot, g) = if keyword == "R" {
                    line.expect_len(5)?;
                    let idx = line.index(1, l + 1, "layer")?;
                    if idx == 0 {
                        return Err(line.err("resistors start at layer 1"));
                    }
                    let m = &mut couplings[idx - 1];
                    let j = line.index(2, m.nrows(), "source node")?;
                    let k = line.index(3, m.ncols(), "target node")?;
                    (&mut m[[j, k]], line.value(4)?)
                } else {
                    line.expect_len(4)?;
                    let idx = line.index(1, l + 1, "layer")?;
                    if idx == 0 {
                        return Err(line.err("leaks start at layer 1"));
                    }
                    let v = &mut leaks[idx - 1];
                    let k = line.index(2, v.len(), "node")?;
                    (&mut v[k], line.value(3)?)
                };
                if *slot != 0.0 {
                    return Err(line.err("duplicate resistor"));
                }
                if g == 0.0 {
                    return Err(line.err("zero conductances are omitted, not listed"));
                }
                *slot = g;
            }
            "END" => {
                line.expect_len(1)?;
                ended = true;
            }
            other => return Err(line.err(format!("unknown keyword {other:?}"))),
        }
    }

    let last = body.last().map_or(1, |l| l.number);
    let fail = |message: String| DrnError::Netlist { line: last, message };
    if !ended {
        return Err(fail("missing END".into()));
    }
    let num_layers = num_layers.ok_or_else(|| fail("missing LAYERS".into()))?;
    let leaks_enabled = leaks_enabled.ok_or_else(|| fail("missing LEAKS".into()))?;
    let widths: Vec<usize> = widths
        .iter()
        .enumerate()
        .map(|(l, w)| w.ok_or_else(|| fail(format!("missing LAYER {l}"))))
        .collect::<Result<_>>()?;
    let gains: Vec<f64> = gains
        .iter()
        .enumerate()
        .map(|(l, a)| a.ok_or_else(|| fail(format!("missing GAIN {l}"))))
        .collect::<Result<_>>()?;
    for (l, pair) in vsrc.iter().enumerate() {
        let expected = [gains[l], -gains[l]];
        for node in 0..2 {
            match pair[node] {
                Some(v) if v.to_bits() == expected[node].to_bits() => {}
                Some(v) => return Err(fail(format!("VSRC {l} {node} is {v:?}, expected {:?}", expected[node]))),
                None => return Err(fail(format!("missing VSRC {l} {node}"))),
            }
        }
    }
    if couplings.is_empty() {
        couplings = (1..=num_layers).map(|i| Array2::zeros((widths[i - 1], widths[i]))).collect();
        leaks = (1..=num_layers).map(|i| Array1::zeros(widths[i])).collect();
    }
    let mut params = DrnParams::new(widths, couplings, leaks, gains, leaks_enabled)?;

    let expected_diodes = (1..num_layers).map(|l| params.widths()[l] - 2).sum::<usize>();
    if diodes.len() != expected_diodes {
        return Err(fail(format!("{} DIODE lines, expected {expected_diodes}", diodes.len())));
    }
    let mut seen = std::collections::HashSet::new();
    for (l, k, kind, line) in diodes {
        if !seen.insert((l, k)) {
            return Err(line.err(format!("duplicate DIODE {l} {k}")));
        }
        let expected = match params.polarity(l, k) {
            UnitPolarity::Excitatory => "exc",
            UnitPolarity::Inhibitory => "inh",
            _ => return Err(line.err(format!("node {k} of layer {l} is not a hidden unit"))),
        };
        if kind != expected {
            return Err(line.err(format!("node {k} of layer {l} must be {expected}, got {kind:?}")));
        }
    }
    let given = amps.iter().filter(|a| a.is_some()).count();
    if given == num_layers {
        params = params.with_amplifier_gains(amps.into_iter().map(|a| a.expect("counted")).collect())?;
    } else if given != 0 {
        return Err(fail("AMP lines must cover every layer or none".into()));
    }
    Ok(params)
}
