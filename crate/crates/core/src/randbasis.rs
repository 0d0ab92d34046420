//! Fixed random bases shared by every adapted layer.
//!
//! A [`BasisSet`] holds `n_bases` matrices `B_j` of shape `big_d_max × r` and
//! a shared `A` of shape `r × d_max`. A layer of shape `D × d` reads the
//! leading `D` rows of each `B_j` and the leading `d` columns of `A`
//! through a [`LayerSlice`], so one set serves layers of any size.
//!
//! Entries are normalized so that columns of `B_j` and rows of `A` have unit
//! expected squared norm, whatever the distribution.

use nalgebra::DMatrixView;
use serde::{Deserialize, Serialize};

use crate::error::{dim, Error, Result};
use crate::rng::{self, Stream};
use crate::Matrix;

/// Entry distribution of the random bases.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Distribution {
    /// Symmetric uniform, `±sqrt(3 / fan)`.
    Uniform,
    Normal,
    /// `{-1, 0, +1}` with probabilities `{1/s, 1 - 2/s, 1/s}`, then rescaled.
    Ternary { s: u64 },
}

impl Distribution {
    /// Variance-preserving scale applied to a raw draw for a given fan.
    fn scale(self, fan: usize) -> f64 {
        let fan = fan as f64;
        match self {
            Distribution::Uniform => (3.0 / fan).sqrt(),
            Distribution::Normal => 1.0 / fan.sqrt(),
            Distribution::Ternary { s } => (s as f64 / 2.0).sqrt() / fan.sqrt(),
        }
    }

    /// Raw draw keyed entirely by `(stream, counter)`.
    #[inline]
    fn raw(self, stream: &Stream, col: u64) -> f64 {
        match self {
            Distribution::Uniform => 2.0 * rng::to_unit(stream.at(col)) - 1.0,
            Distribution::Normal => rng::box_muller(stream.at(2 * col), stream.at(2 * col + 1)),
            Distribution::Ternary { s } => match rng::below(stream.at(col), s) {
                0 => -1.0,
                1 => 1.0,
                _ => 0.0,
            },
        }
    }
}

impl std::fmt::Display for Distribution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Distribution::Uniform => write!(f, "uniform"),
            Distribution::Normal => write!(f, "normal"),
            Distribution::Ternary { s } => write!(f, "ternary(s={s})"),
        }
    }
}

/// Whether all terms share one `A` or each term `j` gets its own `A_j`.
///
/// Term-wise `A_j` are only needed by the forms that sum bases before
/// multiplying (NoLA-like, averaged RandLoRA). `A_0` is identical in both
/// modes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AMode {
    #[default]
    Shared,
    PerTerm,
}

/// Everything that determines the contents of a [`BasisSet`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasisConfig {
    pub seed: u64,
    pub distribution: Distribution,
    pub n_bases: usize,
    pub r: usize,
    pub big_d_max: usize,
    pub d_max: usize,
    #[serde(default)]
    pub a_mode: AMode,
}

impl BasisConfig {
    pub fn new(
        seed: u64,
        distribution: Distribution,
        n_bases: usize,
        r: usize,
        big_d_max: usize,
        d_max: usize,
    ) -> Self {
        Self {
            seed,
            distribution,
            n_bases,
            r,
            big_d_max,
            d_max,
            a_mode: AMode::Shared,
        }
    }

    pub fn per_term_a(mut self) -> Self {
        self.a_mode = AMode::PerTerm;
        self
    }

    pub fn validate(&self) -> Result<()> {
        const OP: &str = "generate_basis_set";
        for (name, v) in [
            ("n_bases", self.n_bases),
            ("r", self.r),
            ("big_d_max", self.big_d_max),
            ("d_max", self.d_max),
        ] {
            if v == 0 {
                return Err(dim(OP, format!("{name} must be at least 1")));
            }
        }
        if let Distribution::Ternary { s } = self.distribution {
            if s < 2 || s > self.big_d_max as u64 {
                return Err(Error::Sparsity {
                    op: OP,
                    s,
                    max: self.big_d_max,
                });
            }
        }
        Ok(())
    }

    fn a_count(&self) -> usize {
        match self.a_mode {
            AMode::Shared => 1,
            AMode::PerTerm => self.n_bases,
        }
    }
}

/// Frozen random bases. Immutable once generated.
#[derive(Clone, Debug, PartialEq)]
pub struct BasisSet {
    config: BasisConfig,
    b_stack: Vec<Matrix>,
    a_stack: Vec<Matrix>,
}

const TAG_B: &str = "randbasis/B";
const TAG_A: &str = "randbasis/A";

impl BasisSet {
    pub fn generate(config: BasisConfig) -> Result<Self> {
        config.validate()?;
        let root = Stream::new(config.seed);
        let dist = config.distribution;

        let b_root = root.derive_str(TAG_B);
        let b_scale = dist.scale(config.big_d_max);
        let b_stack = (0..config.n_bases)
            .map(|j| {
                let term = b_root.derive(j as u64);
                fill(config.big_d_max, config.r, &term, dist, b_scale)
            })
            .collect();

        let a_root = root.derive_str(TAG_A);
        let a_scale = dist.scale(config.d_max);
        let a_stack = (0..config.a_count())
            .map(|j| {
                let term = a_root.derive(j as u64);
                fill(config.r, config.d_max, &term, dist, a_scale)
            })
            .collect();

        Ok(Self {
            config,
            b_stack,
            a_stack,
        })
    }

    /// Rebuild from stored tensors, checking shapes against the config.
    pub fn from_parts(config: BasisConfig, b_stack: Vec<Matrix>, a_stack: Vec<Matrix>) -> Result<Self> {
        config.validate()?;
        const OP: &str = "BasisSet::from_parts";
        if b_stack.len() != config.n_bases || a_stack.len() != config.a_count() {
            return Err(dim(OP, "tensor count does not match config"));
        }
        if b_stack.iter().any(|b| b.shape() != (config.big_d_max, config.r))
            || a_stack.iter().any(|a| a.shape() != (config.r, config.d_max))
        {
            return Err(dim(OP, "tensor shape does not match config"));
        }
        Ok(Self {
            config,
            b_stack,
            a_stack,
        })
    }

    pub fn config(&self) -> &BasisConfig {
        &self.config
    }
    pub fn seed(&self) -> u64 {
        self.config.seed
    }
    pub fn distribution(&self) -> Distribution {
        self.config.distribution
    }
    pub fn n_bases(&self) -> usize {
        self.config.n_bases
    }
    pub fn rank(&self) -> usize {
        self.config.r
    }
    pub fn big_d_max(&self) -> usize {
        self.config.big_d_max
    }
    pub fn d_max(&self) -> usize {
        self.config.d_max
    }

    /// Full `B_j`, shape `big_d_max × r`.
    pub fn b(&self, j: usize) -> &Matrix {
        &self.b_stack[j]
    }

    pub fn b_stack(&self) -> &[Matrix] {
        &self.b_stack
    }

    /// The shared `A`, shape `r × d_max`.
    pub fn a_shared(&self) -> &Matrix {
        &self.a_stack[0]
    }

    /// `A_j` for term-wise forms; falls back to the shared `A`.
    pub fn a_term(&self, j: usize) -> &Matrix {
        match self.config.a_mode {
            AMode::Shared => &self.a_stack[0],
            AMode::PerTerm => &self.a_stack[j],
        }
    }

    pub fn a_stack(&self) -> &[Matrix] {
        &self.a_stack
    }

    /// Fraction of exactly-zero entries across all stored tensors.
    pub fn zero_fraction(&self) -> f64 {
        let (zeros, total) = self
            .b_stack
            .iter()
            .chain(&self.a_stack)
            .fold((0usize, 0usize), |(z, t), m| {
                (z + m.iter().filter(|v| **v == 0.0).count(), t + m.len())
            });
        zeros as f64 / total as f64
    }

    /// Descriptor for a layer of shape `big_d × d` using every term at full rank.
    pub fn slice_for_layer(&self, layer_id: &str, big_d: usize, d: usize) -> Result<LayerSlice> {
        LayerSlice {
            layer_id: layer_id.to_owned(),
            big_d,
            d,
            n_used: self.n_bases(),
            r_used: self.rank(),
        }
        .checked(self)
    }
}

fn fill(rows: usize, cols: usize, term: &Stream, dist: Distribution, scale: f64) -> Matrix {
    let mut m = Matrix::zeros(rows, cols);
    for i in 0..rows {
        let row = term.derive(i as u64);
        for c in 0..cols {
            m[(i, c)] = dist.raw(&row, c as u64) * scale;
        }
    }
    m
}

/// Which leading blocks of a [`BasisSet`] a layer reads.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSlice {
    pub layer_id: String,
    pub big_d: usize,
    pub d: usize,
    pub n_used: usize,
    /// Leading columns of each `B_j` (and rows of `A`) in use.
    pub r_used: usize,
}

impl LayerSlice {
    /// Restrict to the first `n` terms.
    pub fn with_terms(mut self, n: usize, set: &BasisSet) -> Result<Self> {
        self.n_used = n;
        self.checked(set)
    }

    /// Restrict to the first `r` basis columns.
    pub fn with_rank(mut self, r: usize, set: &BasisSet) -> Result<Self> {
        self.r_used = r;
        self.checked(set)
    }

    fn checked(self, set: &BasisSet) -> Result<Self> {
        let limits = [
            ("D", self.big_d, set.big_d_max()),
            ("d", self.d, set.d_max()),
            ("n_used", self.n_used, set.n_bases()),
            ("r_used", self.r_used, set.rank()),
        ];
        for (what, got, max) in limits {
            if got == 0 || got > max {
                return Err(Error::Slice {
                    layer: self.layer_id,
                    what,
                    got,
                    max,
                });
            }
        }
        Ok(self)
    }

    /// Leading `D × r_used` block of `B_j`.
    pub fn b<'a>(&self, set: &'a BasisSet, j: usize) -> DMatrixView<'a, f64> {
        set.b(j).view((0, 0), (self.big_d, self.r_used))
    }

    /// Leading `r_used × d` block of the shared `A`.
    pub fn a<'a>(&self, set: &'a BasisSet) -> DMatrixView<'a, f64> {
        set.a_shared().view((0, 0), (self.r_used, self.d))
    }

    /// Leading `r_used × d` block of `A_j`.
    pub fn a_term<'a>(&self, set: &'a BasisSet, j: usize) -> DMatrixView<'a, f64> {
        set.a_term(j).view((0, 0), (self.r_used, self.d))
    }
}

pub fn generate_basis_set(
    seed: u64,
    distribution: Distribution,
    n_bases: usize,
    r: usize,
    big_d_max: usize,
    d_max: usize,
) -> Result<BasisSet> {
    BasisSet::generate(BasisConfig::new(seed, distribution, n_bases, r, big_d_max, d_max))
}

pub fn slice_for_layer(set: &BasisSet, layer_id: &str, big_d: usize, d: usize) -> Result<LayerSlice> {
    set.slice_for_layer(layer_id, big_d, d)
}

/// Collinearity probabilities for sparse ternary bases.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Collinearity {
    /// Probability that two independent ternary rows of length `d` are equal
    /// or negations of each other: `2 ((s² - 4s + 6) / s²)^d`.
    pub p: f64,
    /// Union bound over all `(N + D)(N + D - 1)` ordered row pairs.
    pub p2: f64,
}

/// Closed-form collinearity probabilities. `s` is real-valued so that the
/// recommended `s = sqrt(D)` can be evaluated exactly.
pub fn collinearity_probability(s: f64, d: usize, n_bases: usize, big_d: usize) -> Result<Collinearity> {
    const OP: &str = "collinearity_probability";
    if !(s >= 2.0) || !s.is_finite() {
        return Err(Error::Domain {
            op: OP,
            msg: format!("s must be finite and >= 2, got {s}"),
        });
    }
    if d == 0 {
        return Err(dim(OP, "d must be at least 1"));
    }
    // Per-coordinate match probability: both zero, or both equal nonzero.
    let q = (s * s - 4.0 * s + 6.0) / (s * s);
    let p = 2.0 * q.powi(i32::try_from(d).map_err(|_| dim(OP, "d too large"))?);
    let m = (n_bases + big_d) as f64;
    Ok(Collinearity {
        p,
        p2: m * (m - 1.0) * p,
    })
}

/// Monte-Carlo estimate of the pairwise collinearity probability: draws
/// `pairs` pairs of i.i.d. ternary rows of length `d` and counts pairs that
/// are equal or negated. Returns `(estimate, standard_error)`.
pub fn collinearity_monte_carlo(s: u64, d: usize, pairs: usize, seed: u64) -> Result<(f64, f64)> {
    if s < 2 {
        return Err(Error::Sparsity {
            op: "collinearity_monte_carlo",
            s,
            max: usize::MAX,
        });
    }
    let mut stream = Stream::new(seed).derive_str("collinearity/mc");
    let draw = |st: &mut Stream| -> i8 {
        match st.next_below(s) {
            0 => -1,
            1 => 1,
            _ => 0,
        }
    };
    let mut hits = 0usize;
    let mut x = vec![0i8; d];
    let mut y = vec![0i8; d];
    for _ in 0..pairs {
        x.iter_mut().for_each(|v| *v = draw(&mut stream));
        y.iter_mut().for_each(|v| *v = draw(&mut stream));
        let equal = x == y;
        let negated = x.iter().zip(&y).all(|(a, b)| *a == -*b);
        if equal || negated {
            hits += 1;
        }
    }
    let p = hits as f64 / pairs as f64;
    // Standard error floored by the one-hit resolution so zero counts are not overconfident.
    let se = (p * (1.0 - p) / pairs as f64).sqrt().max(1.0 / pairs as f64);
    Ok((p, se))
}
