//! Flat `key = value` experiment files.
//!
//! ```text
//! # outer product, speeds uniform on [10, 100]
//! kernel = outer
//! n = 100
//! p = 10..100:10
//! strategies = random-outer, dynamic-outer-2p
//! scenarios = uniform:10:100, set.3
//! beta = auto
//! replications = 10
//! seed = 42
//! platform = per-replication
//! ```
//!
//! `kernel`, `n` and `p` are required. Integer lists take single values and
//! inclusive ranges `lo..hi` or `lo..hi:step`. `beta` is `auto`, a number,
//! or `sweep:lo:hi:step`. `platform` is `per-replication` (default) or
//! `single`. Strategies default to the kernel's four strategies, scenarios
//! to `uniform:10:100`, replications to 10 and the seed to 0.

use std::collections::HashSet;

use crate::kernel::KernelKind;
use crate::strategies::StrategyId;

use super::{BetaSpec, ExperimentError, ExperimentSpec, Scenario};

fn int_list(value: &str) -> Result<Vec<usize>, String> {
    let mut out = Vec::new();
    for item in value.split(',').map(str::trim) {
        let parse = |s: &str| s.trim().parse::<usize>().map_err(|_| format!("bad integer {s:?}"));
        match item.split_once("..") {
            Some((lo, rest)) => {
                let (hi, step) = match rest.split_once(':') {
                    Some((hi, step)) => (parse(hi)?, parse(step)?),
                    None => (parse(rest)?, 1),
                };
                let lo = parse(lo)?;
                if step == 0 || hi < lo {
                    return Err(format!("bad range {item:?}"));
                }
                out.extend((lo..=hi).step_by(step));
            }
            None => out.push(parse(item)?),
        }
    }
    Ok(out)
}

fn beta_spec(value: &str) -> Result<BetaSpec, String> {
    if value == "auto" {
        return Ok(BetaSpec::Auto);
    }
    if let Some(rest) = value.strip_prefix("sweep:") {
        let v: Vec<f64> = rest
            .split(':')
            .map(|s| s.trim().parse::<f64>().map_err(|_| format!("bad number {s:?}")))
            .collect::<Result<_, _>>()?;
        return match v.as_slice() {
            [lo, hi, step] => Ok(BetaSpec::Sweep { lo: *lo, hi: *hi, step: *step }),
            _ => Err("beta sweep is sweep:lo:hi:step".into()),
        };
    }
    value.parse().map(BetaSpec::Fixed).map_err(|_| format!("bad beta {value:?}"))
}

fn list<T, E: ToString>(value: &str, parse: impl Fn(&str) -> Result<T, E>) -> Result<Vec<T>, String> {
    value.split(',').map(|s| parse(s.trim()).map_err(|e| e.to_string())).collect()
}

pub fn parse_spec(text: &str) -> Result<ExperimentSpec, ExperimentError> {
    let mut seen = HashSet::new();
    let mut kernel = None;
    let mut ns = None;
    let mut ps = None;
    let mut strategies = None;
    let mut scenarios = None;
    let mut beta = BetaSpec::Auto;
    let mut replications = 10;
    let mut base_seed = 0;
    let mut single_platform = false;

    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| ExperimentError::SpecSyntax { line: i + 1, message };
        let (key, value) = line.split_once('=').ok_or_else(|| err("expected key = value".into()))?;
        let key = match key.trim() {
            "strategy" => "strategies",
            "scenario" => "scenarios",
            k => k,
        };
        let value = value.trim();
        if !seen.insert(key.to_string()) {
            return Err(err(format!("duplicate key {key:?}")));
        }
        match key {
            "kernel" => kernel = Some(value.parse::<KernelKind>().map_err(|e| err(e.to_string()))?),
            "n" => ns = Some(int_list(value).map_err(err)?),
            "p" => ps = Some(int_list(value).map_err(err)?),
            "strategies" => strategies = Some(list(value, str::parse::<StrategyId>).map_err(err)?),
            "scenarios" => scenarios = Some(list(value, str::parse::<Scenario>).map_err(err)?),
            "beta" => beta = beta_spec(value).map_err(err)?,
            "replications" => replications = value.parse().map_err(|_| err(format!("bad count {value:?}")))?,
            "seed" => base_seed = value.parse().map_err(|_| err(format!("bad seed {value:?}")))?,
            "platform" => {
                single_platform = match value {
                    "single" => true,
                    "per-replication" => false,
                    _ => return Err(err(format!("platform must be single or per-replication, got {value:?}"))),
                }
            }
            other => return Err(err(format!("unknown key {other:?}"))),
        }
    }

    let missing = |k: &str| ExperimentError::InvalidSpec(format!("missing required key {k:?}"));
    let kernel = kernel.ok_or_else(|| missing("kernel"))?;
    let spec = ExperimentSpec {
        kernel,
        ns: ns.ok_or_else(|| missing("n"))?,
        ps: ps.ok_or_else(|| missing("p"))?,
        strategies: strategies.unwrap_or_else(|| StrategyId::family(kernel).to_vec()),
        scenarios: scenarios.unwrap_or_else(|| vec![Scenario::Uniform { lo: 10.0, hi: 100.0 }]),
        beta,
        replications,
        base_seed,
        single_platform,
    };
    spec.validate()?;
    Ok(spec)
}
