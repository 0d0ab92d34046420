//! Published hyperparameter rows kept as budget metadata: basis ranks,
//! basis counts and scaling rules for square `hidden × hidden` layers.
//!
//! Vision backbones use `alpha = 10/r` for RandLoRA; language models use
//! `alpha = 2/sqrt(n)`.

use serde::{Deserialize, Serialize};

use crate::adapters::{AdapterKind, AdapterSpec, Scaling};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Preset {
    /// `<model>-<family>`, e.g. `vitb32-randlora`.
    pub name: String,
    pub model: String,
    /// Layer width; presets describe square layers.
    pub hidden: usize,
    pub spec: AdapterSpec,
}

impl Preset {
    pub fn param_count(&self) -> usize {
        self.spec.param_count(self.hidden, self.hidden)
    }

    pub fn terms(&self) -> usize {
        self.spec.terms(self.hidden, self.hidden)
    }
}

struct Row {
    model: &'static str,
    hidden: usize,
    randlora: (usize, usize),
    vera_r: usize,
}

const VISION: [Row; 3] = [
    Row { model: "vitb32", hidden: 768, randlora: (6, 128), vera_r: 256 },
    Row { model: "vitl14", hidden: 1024, randlora: (8, 128), vera_r: 256 },
    Row { model: "vith14", hidden: 1280, randlora: (10, 128), vera_r: 1024 },
];

const LANGUAGE: [Row; 3] = [
    Row { model: "qwen2-0.5b", hidden: 896, randlora: (6, 149), vera_r: 256 },
    Row { model: "phi3", hidden: 3072, randlora: (10, 153), vera_r: 1024 },
    Row { model: "llama3-8b", hidden: 4096, randlora: (15, 136), vera_r: 1024 },
];

const LORA_RANK: usize = 32;
const NOLA_BASES: usize = 1024;

fn expand(row: &Row, vision: bool) -> Vec<Preset> {
    let (r, n) = row.randlora;
    let sqrt_n = Scaling {
        c: 2.0,
        per_rank: false,
        sqrt_n: true,
    };
    let (rl, lora, nola, vera) = if vision {
        (Scaling::per_rank(10.0), Scaling::per_rank(1.0), Scaling::per_rank(1.0), Scaling::per_rank(1.0))
    } else {
        (sqrt_n, Scaling::fixed(2.0), sqrt_n, Scaling::fixed(2.0))
    };
    let specs = [
        ("randlora", AdapterSpec::new(AdapterKind::RandLora { r, n: Some(n) }, rl)),
        ("lora", AdapterSpec::new(AdapterKind::Lora { r: LORA_RANK }, lora)),
        ("nola", AdapterSpec::new(AdapterKind::NolaLike { n: NOLA_BASES, r: 1 }, nola)),
        ("vera", AdapterSpec::new(AdapterKind::VeraLike { r: row.vera_r }, vera)),
    ];
    specs
        .into_iter()
        .map(|(family, spec)| Preset {
            name: format!("{}-{family}", row.model),
            model: row.model.to_owned(),
            hidden: row.hidden,
            spec,
        })
        .collect()
}

pub fn all() -> Vec<Preset> {
    VISION
        .iter()
        .flat_map(|r| expand(r, true))
        .chain(LANGUAGE.iter().flat_map(|r| expand(r, false)))
        .collect()
}

pub fn names() -> Vec<String> {
    all().into_iter().map(|p| p.name).collect()
}

/// Look up a preset by exact name, or all presets of a model by its prefix
/// (`vitb32`).
pub fn lookup(name: &str) -> Result<Vec<Preset>> {
    let found: Vec<Preset> = all()
        .into_iter()
        .filter(|p| p.name == name || p.model == name)
        .collect();
    if found.is_empty() {
        return Err(Error::Config(format!(
            "unknown preset '{name}'; known: {}",
            names().join(", ")
        )));
    }
    Ok(found)
}
