//! Text forms of specs, targets and spectra.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use randlora::rng::Stream;
use randlora::trainkit::make_teacher_student;
use randlora::{AdapterKind, AdapterSpec, BasisSet, Distribution, Matrix, OptimizerConfig, OptimizerKind, Scaling};

use crate::args::{AdapterArgs, BasisArgs, Dist, Opt, OptArgs};

/// Parse `family[:k=v][,k=v...][,family...]`. Tokens without a `:` that
/// look like `k=v` attach to the spec before them.
///
/// Keys: `r`, `n`, `c` (scaling constant), `norm` (divide by sqrt(n)),
/// `fixed` (drop the 1/r factor).
pub fn parse_specs(text: &str, defaults: &AdapterArgs) -> Result<Vec<AdapterSpec>> {
    let mut groups: Vec<(String, Vec<(String, String)>)> = Vec::new();
    for token in text.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        let (head, kv) = match token.split_once(':') {
            Some((f, rest)) => (Some(f), rest),
            None if token.contains('=') => (None, token),
            None => (Some(token), ""),
        };
        if let Some(family) = head {
            groups.push((family.trim().to_ascii_lowercase(), Vec::new()));
        }
        let Some(group) = groups.last_mut() else {
            bail!("spec list '{text}' starts with '{token}', expected a family name");
        };
        for pair in kv.split(':').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| anyhow!("expected key=value in spec token '{token}'"))?;
            group.1.push((k.trim().to_owned(), v.trim().to_owned()));
        }
    }
    if groups.is_empty() {
        bail!("no adapter specs given");
    }
    groups.iter().map(|(f, kv)| build_spec(f, kv, defaults)).collect()
}

fn build_spec(family: &str, kv: &[(String, String)], defaults: &AdapterArgs) -> Result<AdapterSpec> {
    let get = |key: &str| kv.iter().rev().find(|(k, _)| k == key).map(|(_, v)| v.as_str());
    for (k, _) in kv {
        if !["r", "n", "c", "norm", "fixed"].contains(&k.as_str()) {
            bail!("unknown key '{k}' in spec '{family}'");
        }
    }
    let usize_of = |key: &str| -> Result<Option<usize>> {
        get(key)
            .map(|v| v.parse::<usize>().with_context(|| format!("{family}: {key}={v} is not a count")))
            .transpose()
    };
    let bool_of = |key: &str| -> Result<Option<bool>> {
        get(key)
            .map(|v| v.parse::<bool>().with_context(|| format!("{family}: {key}={v} is not true/false")))
            .transpose()
    };
    let r = usize_of("r")?;
    let n = usize_of("n")?.or(defaults.n_bases);
    let rank = r.unwrap_or(defaults.rank);
    let kind = match family {
        "randlora" => AdapterKind::RandLora { r: rank, n },
        "lora" => AdapterKind::Lora { r: rank },
        "vera" => AdapterKind::VeraLike { r: rank },
        "nola" => AdapterKind::NolaLike {
            n: n.ok_or_else(|| anyhow!("nola needs n (or --n-bases)"))?,
            r: r.unwrap_or(1),
        },
        "randlora-a" => AdapterKind::RandLoraAvg { r: rank, n },
        "randlora-b" => AdapterKind::RandLoraHalf { r: rank, n },
        other => bail!("unknown adapter family '{other}' (randlora, lora, vera, nola, randlora-a, randlora-b)"),
    };
    let c = match get("c") {
        Some(v) => v.parse::<f64>().with_context(|| format!("{family}: c={v} is not a number"))?,
        None => defaults.alpha_c.unwrap_or(1.0),
    };
    let scaling = Scaling {
        c,
        per_rank: !bool_of("fixed")?.unwrap_or(false),
        sqrt_n: bool_of("norm")?.unwrap_or(defaults.norm_correct),
    };
    let spec = AdapterSpec::new(kind, scaling);
    spec.validate()?;
    Ok(spec)
}

pub fn distribution(args: &BasisArgs, big_d: usize) -> Distribution {
    match args.dist {
        Dist::Uniform => Distribution::Uniform,
        Dist::Normal => Distribution::Normal,
        Dist::Ternary => Distribution::Ternary {
            s: args.sparsity_s.unwrap_or(((big_d as f64).sqrt().floor() as u64).max(2)),
        },
    }
}

pub fn optimizer(args: &OptArgs, seed: u64) -> OptimizerConfig {
    let mut cfg = OptimizerConfig::default()
        .with_seed(seed)
        .with_max_iters(args.max_iters)
        .with_step_size(args.lr);
    cfg.kind = match args.optimizer {
        Opt::Adam => OptimizerKind::AdamLike,
        Opt::Sgd => OptimizerKind::Sgd,
    };
    cfg
}

/// The basis set a spec needs on a `big_d × d` layer (`None` for LoRA).
pub fn bases_for(spec: &AdapterSpec, seed: u64, dist: Distribution, big_d: usize, d: usize) -> Result<Option<BasisSet>> {
    spec.basis_config(seed, dist, big_d, d)
        .map(|cfg| BasisSet::generate(cfg).with_context(|| format!("generating bases for {}", spec.label())))
        .transpose()
}

fn parse_shape(s: &str) -> Result<(usize, usize)> {
    let (r, c) = s.split_once('x').ok_or_else(|| anyhow!("expected RxC, got '{s}'"))?;
    let r = r.parse().with_context(|| format!("bad row count in '{s}'"))?;
    let c = c.parse().with_context(|| format!("bad column count in '{s}'"))?;
    if r == 0 || c == 0 {
        bail!("empty shape '{s}'");
    }
    Ok((r, c))
}

pub fn spectrum(text: &str, k: usize) -> Result<Vec<f64>> {
    match text {
        "flat" => Ok(vec![1.0; k]),
        "decay" => Ok((0..k).map(|i| 1.0 / (i + 1) as f64).collect()),
        t if t.starts_with("rank:") => {
            let m: usize = t[5..].parse().with_context(|| format!("bad rank in '{t}'"))?;
            Ok((0..k).map(|i| if i < m { 1.0 } else { 0.0 }).collect())
        }
        t => {
            let v = t
                .split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .with_context(|| format!("spectrum '{t}' is not flat, decay, rank:K or a number list"))?;
            if v.len() != k {
                bail!("spectrum has {} values, layer needs {k}", v.len());
            }
            Ok(v)
        }
    }
}

/// Resolve a target description to `(id, matrix)`.
pub fn target(text: &str, seed: u64) -> Result<(String, Matrix)> {
    let id = text.to_owned();
    let m = match text.split_once(':') {
        Some(("identity", n)) => {
            let n: usize = n.parse().with_context(|| format!("bad size in '{text}'"))?;
            Matrix::identity(n, n)
        }
        Some(("random", shape)) => {
            let (r, c) = parse_shape(shape)?;
            let mut s = Stream::new(seed).derive_str(&format!("target/{text}"));
            Matrix::from_fn(r, c, |_, _| s.next_normal())
        }
        Some((kind @ ("flat" | "decay"), shape)) => {
            let (r, c) = parse_shape(shape)?;
            let sigma = spectrum(kind, r.min(c))?;
            make_teacher_student(seed, r, c, &sigma, 1, 0.0)?.delta_star()
        }
        _ => {
            let path = Path::new(text);
            if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
                randlora::io::read_csv_matrix(path)?
            } else if path.exists() {
                randlora::io::load_matrix(path)?
            } else {
                bail!("target '{text}' is neither identity:N, random:RxC, flat:RxC, decay:RxC nor an existing file");
            }
        }
    };
    Ok((id, m))
}

pub fn load_features(path: &Path) -> Result<Matrix> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        // Feature matrices may exceed the target CSV limit; read them directly.
        let mut rdr = csv::ReaderBuilder::new().has_headers(false).comment(Some(b'#')).from_path(path)?;
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            rows.push(rec.iter().map(|v| v.trim().parse::<f64>()).collect::<Result<_, _>>()
                .with_context(|| format!("non-numeric entry in {}", path.display()))?);
        }
        let cols = rows.first().map_or(0, Vec::len);
        if rows.is_empty() || rows.iter().any(|r| r.len() != cols) {
            bail!("{} is empty or ragged", path.display());
        }
        Ok(Matrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
    } else {
        Ok(randlora::io::load_matrix(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn defaults() -> AdapterArgs {
        AdapterArgs {
            rank: 2,
            n_bases: None,
            alpha_c: None,
            norm_correct: false,
        }
    }

    #[test]
    fn spec_lists() {
        let v = parse_specs("lora:r=1,randlora:r=1", &defaults()).unwrap();
        assert_eq!(v, vec![AdapterSpec::lora(1), AdapterSpec::randlora(1)]);
        let v = parse_specs("randlora:r=6,n=128,c=10, nola:n=8", &defaults()).unwrap();
        assert_eq!(v[0].kind, AdapterKind::RandLora { r: 6, n: Some(128) });
        assert_eq!(v[0].scaling.describe(), "10/r");
        assert_eq!(v[1].kind, AdapterKind::NolaLike { n: 8, r: 1 });
        let v = parse_specs("randlora-b:r=2:n=4", &defaults()).unwrap();
        assert_eq!(v[0].kind, AdapterKind::RandLoraHalf { r: 2, n: Some(4) });
        let v = parse_specs("randlora", &defaults()).unwrap();
        assert_eq!(v[0], AdapterSpec::randlora(2));
    }

    #[test]
    fn spec_errors() {
        for bad in ["", "r=1", "lora:q=1", "foo", "nola", "lora:r=x", "lora:r=0"] {
            assert!(parse_specs(bad, &defaults()).is_err(), "{bad}");
        }
    }

    #[test]
    fn global_scaling_defaults() {
        let d = AdapterArgs {
            alpha_c: Some(2.0),
            norm_correct: true,
            ..defaults()
        };
        let v = parse_specs("randlora:fixed=true", &d).unwrap();
        assert_eq!(v[0].scaling.describe(), "2/sqrt(n)");
    }

    #[test]
    fn targets() {
        assert_eq!(target("identity:3", 0).unwrap().1, Matrix::identity(3, 3));
        let (_, a) = target("random:4x5", 1).unwrap();
        assert_eq!(a, target("random:4x5", 1).unwrap().1);
        assert_eq!(a.shape(), (4, 5));
        assert!(target("flat:3x0", 1).is_err());
        assert!(target("/no/such/file.json", 1).is_err());
    }

    #[test]
    fn spectra() {
        assert_eq!(spectrum("rank:1", 3).unwrap(), vec![1.0, 0.0, 0.0]);
        assert_eq!(spectrum("3,2", 2).unwrap(), vec![3.0, 2.0]);
        assert!(spectrum("3,2", 3).is_err());
    }
}
