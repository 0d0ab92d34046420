use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::randbasis::{BasisConfig, Distribution};

/// Adapter family and its structural hyperparameters.
///
/// `n` left as `None` means "as many terms as needed for the family's
/// target rank on the layer it is bound to".
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum AdapterKind {
    /// `ΔW = Σ_j B_j Λ_j A Γ_j`, full rank by default.
    #[serde(rename = "randlora")]
    RandLora { r: usize, n: Option<usize> },
    /// `ΔW = B A` with both factors trained.
    #[serde(rename = "lora")]
    Lora { r: usize },
    /// One high-rank random pair with a trainable vector on each side:
    /// `ΔW = B Λ A Γ`, `Λ` of size `r`, `Γ` of size `d`.
    #[serde(rename = "vera")]
    VeraLike { r: usize },
    /// `ΔW = (Σ a_i B_i)(Σ b_i A_i)` with scalar weights, rank `r` (default 1).
    #[serde(rename = "nola")]
    NolaLike { n: usize, r: usize },
    /// Bases averaged before multiplication: `ΔW = (Σ B_j Λ_j)(Σ A_j Γ_j)`.
    #[serde(rename = "randlora-a")]
    RandLoraAvg { r: usize, n: Option<usize> },
    /// RandLoRA with at most half the update rank: `n = max(1, ⌊min(D, d) / 2r⌋)` terms.
    #[serde(rename = "randlora-b")]
    RandLoraHalf { r: usize, n: Option<usize> },
}

/// Scaling coefficient rule: `alpha = c · (1/r if per_rank) · (1/sqrt(n) if sqrt_n)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub c: f64,
    pub per_rank: bool,
    pub sqrt_n: bool,
}

impl Default for Scaling {
    fn default() -> Self {
        Self {
            c: 1.0,
            per_rank: true,
            sqrt_n: false,
        }
    }
}

impl Scaling {
    /// A fixed `alpha = c`.
    pub fn fixed(c: f64) -> Self {
        Self {
            c,
            per_rank: false,
            sqrt_n: false,
        }
    }

    pub fn per_rank(c: f64) -> Self {
        Self {
            c,
            per_rank: true,
            sqrt_n: false,
        }
    }

    pub fn alpha(&self, rank: usize, terms: usize) -> f64 {
        let mut a = self.c;
        if self.per_rank {
            a /= rank as f64;
        }
        if self.sqrt_n {
            a /= (terms as f64).sqrt();
        }
        a
    }

    /// Human-readable form, e.g. `10/r` or `2/sqrt(n)`.
    pub fn describe(&self) -> String {
        let mut s = format!("{}", self.c);
        if self.per_rank {
            s.push_str("/r");
        }
        if self.sqrt_n {
            s.push_str("/sqrt(n)");
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdapterSpec {
    #[serde(flatten)]
    pub kind: AdapterKind,
    #[serde(default)]
    pub scaling: Scaling,
}

impl From<AdapterKind> for AdapterSpec {
    fn from(kind: AdapterKind) -> Self {
        Self {
            kind,
            scaling: Scaling::default(),
        }
    }
}

pub(crate) fn ceil_div(a: usize, b: usize) -> usize {
    a.div_ceil(b)
}

impl AdapterSpec {
    pub fn new(kind: AdapterKind, scaling: Scaling) -> Self {
        Self { kind, scaling }
    }

    pub fn randlora(r: usize) -> Self {
        AdapterKind::RandLora { r, n: None }.into()
    }
    pub fn randlora_n(r: usize, n: usize) -> Self {
        AdapterKind::RandLora { r, n: Some(n) }.into()
    }
    pub fn lora(r: usize) -> Self {
        AdapterKind::Lora { r }.into()
    }
    pub fn vera(r: usize) -> Self {
        AdapterKind::VeraLike { r }.into()
    }
    pub fn nola(n: usize) -> Self {
        AdapterKind::NolaLike { n, r: 1 }.into()
    }
    pub fn randlora_avg(r: usize, n: Option<usize>) -> Self {
        AdapterKind::RandLoraAvg { r, n }.into()
    }
    pub fn randlora_half(r: usize, n: Option<usize>) -> Self {
        AdapterKind::RandLoraHalf { r, n }.into()
    }

    pub fn with_scaling(mut self, scaling: Scaling) -> Self {
        self.scaling = scaling;
        self
    }

    /// Short stable name used in reports and CSV output.
    pub fn label(&self) -> String {
        let opt = |n: &Option<usize>| n.map(|n| format!(",n={n}")).unwrap_or_default();
        match &self.kind {
            AdapterKind::RandLora { r, n } => format!("randlora:r={r}{}", opt(n)),
            AdapterKind::Lora { r } => format!("lora:r={r}"),
            AdapterKind::VeraLike { r } => format!("vera:r={r}"),
            AdapterKind::NolaLike { n, r } => format!("nola:n={n},r={r}"),
            AdapterKind::RandLoraAvg { r, n } => format!("randlora-a:r={r}{}", opt(n)),
            AdapterKind::RandLoraHalf { r, n } => format!("randlora-b:r={r}{}", opt(n)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (r, n) = match &self.kind {
            AdapterKind::RandLora { r, n }
            | AdapterKind::RandLoraAvg { r, n }
            | AdapterKind::RandLoraHalf { r, n } => (*r, n.unwrap_or(1)),
            AdapterKind::Lora { r } | AdapterKind::VeraLike { r } => (*r, 1),
            AdapterKind::NolaLike { n, r } => (*r, *n),
        };
        if r == 0 || n == 0 {
            return Err(Error::Config(format!("{}: rank and term count must be >= 1", self.label())));
        }
        if !self.scaling.c.is_finite() {
            return Err(Error::Config("scaling coefficient must be finite".into()));
        }
        Ok(())
    }

    /// Rank of each random basis (`None` for LoRA, which has no fixed bases).
    pub fn basis_rank(&self) -> Option<usize> {
        match &self.kind {
            AdapterKind::Lora { .. } => None,
            AdapterKind::RandLora { r, .. }
            | AdapterKind::RandLoraAvg { r, .. }
            | AdapterKind::RandLoraHalf { r, .. }
            | AdapterKind::VeraLike { r }
            | AdapterKind::NolaLike { r, .. } => Some(*r),
        }
    }

    /// The rank entering the `c / r` scaling rule.
    pub fn scaling_rank(&self) -> usize {
        match &self.kind {
            AdapterKind::Lora { r } => *r,
            _ => self.basis_rank().unwrap_or(1),
        }
    }

    /// Number of terms when bound to a `big_d × d` layer.
    pub fn terms(&self, big_d: usize, d: usize) -> usize {
        let k = big_d.min(d);
        match &self.kind {
            AdapterKind::RandLora { r, n } | AdapterKind::RandLoraAvg { r, n } => {
                n.unwrap_or_else(|| ceil_div(k, *r))
            }
            AdapterKind::RandLoraHalf { r, n } => n.unwrap_or_else(|| (k / (2 * r)).max(1)),
            AdapterKind::NolaLike { n, .. } => *n,
            AdapterKind::Lora { .. } | AdapterKind::VeraLike { .. } => 1,
        }
    }

    /// Whether the form needs a distinct `A_j` per term.
    pub fn needs_per_term_a(&self) -> bool {
        matches!(
            self.kind,
            AdapterKind::NolaLike { .. } | AdapterKind::RandLoraAvg { .. }
        )
    }

    /// Basis configuration sized exactly for this spec on a `big_d × d`
    /// layer; `None` for LoRA.
    pub fn basis_config(&self, seed: u64, distribution: Distribution, big_d: usize, d: usize) -> Option<BasisConfig> {
        let r = self.basis_rank()?;
        let cfg = BasisConfig::new(seed, distribution, self.terms(big_d, d), r, big_d, d);
        Some(if self.needs_per_term_a() { cfg.per_term_a() } else { cfg })
    }

    /// Scaling coefficient applied to `ΔW` on a `big_d × d` layer.
    pub fn alpha(&self, big_d: usize, d: usize) -> f64 {
        self.scaling.alpha(self.scaling_rank(), self.terms(big_d, d))
    }

    /// Trainable parameter count on a `big_d × d` layer.
    pub fn param_count(&self, big_d: usize, d: usize) -> usize {
        let n = self.terms(big_d, d);
        match &self.kind {
            AdapterKind::RandLora { r, .. }
            | AdapterKind::RandLoraAvg { r, .. }
            | AdapterKind::RandLoraHalf { r, .. } => n * (r + d),
            AdapterKind::Lora { r } => r * (big_d + d),
            AdapterKind::VeraLike { r } => r + d,
            AdapterKind::NolaLike { n, .. } => 2 * n,
        }
    }

    /// Largest rank the update can reach on a `big_d × d` layer.
    pub fn effective_rank(&self, big_d: usize, d: usize) -> usize {
        let k = big_d.min(d);
        let n = self.terms(big_d, d);
        let rank = match &self.kind {
            AdapterKind::RandLora { r, .. } | AdapterKind::RandLoraHalf { r, .. } => n * r,
            AdapterKind::Lora { r }
            | AdapterKind::RandLoraAvg { r, .. }
            | AdapterKind::VeraLike { r }
            | AdapterKind::NolaLike { r, .. } => *r,
        };
        rank.min(k)
    }
}

pub fn param_count(spec: &AdapterSpec, big_d: usize, d: usize) -> usize {
    spec.param_count(big_d, d)
}
