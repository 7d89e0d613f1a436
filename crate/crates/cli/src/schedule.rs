use std::path::Path;

use anyhow::{bail, Context};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Condition {
    On,
    Off,
}

/// Condition of every time point, from `[start, end, label]` blocks that
/// must tile `0..t` exactly.
pub fn load(path: &Path, t: usize) -> anyhow::Result<Vec<Condition>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let blocks: Vec<(usize, usize, String)> =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    parse(blocks, t).with_context(|| format!("schedule {}", path.display()))
}

pub fn parse(mut blocks: Vec<(usize, usize, String)>, t: usize) -> anyhow::Result<Vec<Condition>> {
    blocks.sort_by_key(|b| (b.0, b.1));
    let mut out = Vec::with_capacity(t);
    for (start, end, label) in blocks {
        let cond = match label.trim().to_ascii_lowercase().as_str() {
            "on" => Condition::On,
            "off" => Condition::Off,
            other => bail!("block [{start}, {end}) has label {other:?}; expected \"on\" or \"off\""),
        };
        if end <= start {
            bail!("block [{start}, {end}) is empty");
        }
        if start > out.len() {
            bail!("time points {}..{} are not covered", out.len(), start);
        }
        if start < out.len() {
            bail!("block [{start}, {end}) overlaps an earlier block ending at {}", out.len());
        }
        if end > t {
            bail!("block [{start}, {end}) runs past the last time point {}", t - 1);
        }
        out.extend(std::iter::repeat_n(cond, end - start));
    }
    if out.len() < t {
        bail!("time points {}..{} are not covered", out.len(), t);
    }
    if !out.contains(&Condition::On) || !out.contains(&Condition::Off) {
        bail!("schedule needs both on and off blocks");
    }
    Ok(out)
}
