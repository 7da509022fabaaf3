//! TOML run configuration.

use std::path::Path;

use anyhow::{bail, Context, Result};
use arbor_core::asymptotics::log_grid;
use arbor_core::halfline::Numerics;
use arbor_core::potential::RadialPotential;
use arbor_core::tree::{make_geometric_tree, make_terminal_tree, RegularTree, TreeKind};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub tree: TreeConfig,
    /// Pieces summed into the radial potential.
    pub potential: Vec<PieceConfig>,
    #[serde(default)]
    pub numerics: NumericsConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub spectrum: SpectrumConfig,
    #[serde(default)]
    pub bounds: BoundsConfig,
    #[serde(default)]
    pub bs: BsConfig,
    #[serde(default)]
    pub weyl: WeylConfig,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TreeConfig {
    Explicit { t: Vec<f64>, b: Vec<u32>, d: Option<f64> },
    Geometric { d: f64, b: u32, generations: usize },
    Terminal { b: u32, spacing: f64, generations: usize },
    HalfLine,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PieceConfig {
    /// `value` on `[a, b)`.
    Well { value: f64, a: f64, b: f64 },
    /// `coef exp(-(t/width)²)`.
    Gaussian { coef: f64, width: f64 },
    /// `coef t^power exp(-rate t)`.
    ExpPoly { coef: f64, power: f64, rate: f64 },
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct NumericsConfig {
    pub h: Option<f64>,
    #[serde(rename = "L")]
    pub length: Option<f64>,
    pub auto_truncate: Option<bool>,
    pub richardson: Option<bool>,
    pub grading: Option<f64>,
    pub max_length: Option<f64>,
    pub bracket_tol: Option<f64>,
    pub rel_tol: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub lambda_min: Option<f64>,
    pub lambda_max: Option<f64>,
    pub points_per_decade: Option<usize>,
    /// Explicit couplings; overrides the range.
    pub lambdas: Option<Vec<f64>>,
    /// Dimension used by the sweep; defaults to the tree's.
    pub d: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumConfig {
    pub lambda: Option<f64>,
    pub k_max: Option<usize>,
    pub k_cap: Option<usize>,
    pub direct_cap: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsConfig {
    pub lambda: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct BsConfig {
    pub lambda: Option<f64>,
    pub d: Option<f64>,
    pub panel: Option<f64>,
    pub order: Option<usize>,
    pub check_resolution: Option<bool>,
    /// Values of `κ` for the Hilbert–Schmidt convergence table.
    pub kappas: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct WeylConfig {
    pub h: Option<f64>,
    /// Defaults to `[1e2, 1e3, 1e4]`.
    pub lambdas: Option<Vec<f64>>,
}

pub fn load(path: &Path) -> Result<Config> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    parse(&text).with_context(|| format!("in config {}", path.display()))
}

pub fn parse(text: &str) -> Result<Config> {
    let cfg: Config = toml::from_str(text)?;
    if cfg.potential.is_empty() {
        bail!("potential: at least one piece is required");
    }
    Ok(cfg)
}

impl Config {
    pub fn build_tree(&self) -> Result<RegularTree<f64>> {
        let tree = match &self.tree {
            TreeConfig::Explicit { t, b, d } => RegularTree::new(t.clone(), b.clone(), *d),
            TreeConfig::Geometric { d, b, generations } => make_geometric_tree(*d, *b, *generations),
            TreeConfig::Terminal { b, spacing, generations } => make_terminal_tree(*b, *spacing, *generations),
            TreeConfig::HalfLine => Ok(RegularTree::half_line()),
        };
        tree.context("tree")
    }

    pub fn build_potential(&self) -> Result<RadialPotential<f64>> {
        let mut total = RadialPotential::zero();
        for (i, piece) in self.potential.iter().enumerate() {
            let p = match *piece {
                PieceConfig::Well { value, a, b } => RadialPotential::well(value, a, b),
                PieceConfig::Gaussian { coef, width } => RadialPotential::gaussian(coef, width),
                PieceConfig::ExpPoly { coef, power, rate } => RadialPotential::exp_poly(coef, power, rate),
            }
            .with_context(|| format!("potential[{i}]"))?;
            total = total.plus(&p);
        }
        Ok(total)
    }

    pub fn numerics(&self) -> Numerics<f64> {
        let d = Numerics::<f64>::default();
        let n = &self.numerics;
        Numerics {
            h: n.h.unwrap_or(d.h),
            length: n.length.or(d.length),
            auto_truncate: n.auto_truncate.unwrap_or(d.auto_truncate),
            richardson: n.richardson.unwrap_or(d.richardson),
            grading: n.grading.unwrap_or(d.grading),
            max_length: n.max_length.unwrap_or(d.max_length),
            bracket_tol: n.bracket_tol.unwrap_or(d.bracket_tol),
            rel_tol: n.rel_tol.unwrap_or(d.rel_tol),
        }
    }

    /// Declared dimension of the tree, else its fitted growth exponent.
    pub fn dimension(&self, tree: &RegularTree<f64>) -> Result<f64> {
        if let Some(d) = self.sweep.d {
            return Ok(d);
        }
        if let TreeKind::Geometric { d, .. } = tree.kind() {
            return Ok(d);
        }
        if let Some(d) = tree.declared_dimension() {
            return Ok(d);
        }
        let ts = tree.vertex_distances();
        let (lo, hi) = (ts.first().copied().unwrap_or(1.0), ts.last().copied().unwrap_or(1.0));
        tree.dimension_estimate(lo, hi).context("tree: no declared dimension and too few generations to estimate one")
    }

    /// Couplings for a sweep, defaulting to `[lo, hi]` at the configured density.
    pub fn lambdas(&self, lo: f64, hi: f64) -> Result<Vec<f64>> {
        let s = &self.sweep;
        if let Some(l) = &s.lambdas {
            if l.is_empty() || l.iter().any(|x| !x.is_finite() || *x <= 0.0) {
                bail!("sweep.lambdas: need positive couplings");
            }
            let mut l = l.clone();
            l.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
            return Ok(l);
        }
        let (a, b) = (s.lambda_min.unwrap_or(lo), s.lambda_max.unwrap_or(hi));
        if !(a > 0.0 && b >= a) {
            bail!("sweep: need 0 < lambda_min <= lambda_max, got {a} and {b}");
        }
        let per = s.points_per_decade.unwrap_or(8).max(1);
        let n = ((b / a).log10() * per as f64).ceil().max(1.0) as usize;
        Ok(log_grid(a, b, n.max(2)))
    }
}
