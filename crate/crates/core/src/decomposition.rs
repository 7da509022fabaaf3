//! Reduction of the tree operator to an orthogonal sum of half-line channels
//! and reassembly of the negative spectrum with multiplicities.

use std::sync::Arc;

use serde::Serialize;

use crate::bs::channel_threshold;
use crate::error::{Error, Result};
use crate::halfline::{solve_channel, Channel, EigResult, Numerics};
use crate::num::{lit, to_f64, Real};
use crate::potential::{RadialFn, RadialPotential};
use crate::tree::RegularTree;

/// Eigenvalues above this level without a certified truncation bracket are
/// reported as marginal.
pub const MARGINAL_LEVEL: f64 = -1e-6;
/// Eigenvalues of different channels closer than `MERGE_TOL * max(1, |E|)` are merged.
pub const MERGE_TOL: f64 = 1e-8;

/// Channels `0..=k_max` of the tree; channels with zero multiplicity are omitted.
pub fn build_channels<T: Real>(
    tree: &RegularTree<T>,
    v: &RadialPotential<T>,
    lambda: T,
    k_max: usize,
) -> Vec<Channel<T>> {
    let pot: Arc<dyn RadialFn<T>> = Arc::new(v.clone());
    (0..=k_max.min(tree.generations()))
        .filter(|&k| k == 0 || tree.multiplicity(k) > 0)
        .map(|k| Channel::tree(tree, k, pot.clone(), lambda))
        .collect()
}

/// One distinct eigenvalue of the tree operator.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumEntry<T> {
    pub value: T,
    pub multiplicity: u128,
    pub channels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChannelReport<T> {
    pub k: usize,
    pub multiplicity: u128,
    pub result: EigResult<T>,
}

/// Negative spectrum of the tree operator assembled from its channels.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TreeSpectrum<T> {
    pub entries: Vec<SpectrumEntry<T>>,
    /// Total count with multiplicities, marginal values excluded.
    pub count: u128,
    pub marginal: Vec<(usize, T)>,
    pub channels: Vec<ChannelReport<T>>,
    /// Only the root channel carries negative eigenvalues.
    pub root_channel_only: bool,
}

impl<T: Real> TreeSpectrum<T> {
    /// The multiset of eigenvalues, each repeated by its multiplicity.
    /// Panics if the total exceeds `cap` entries.
    pub fn expanded(&self, cap: usize) -> Vec<T> {
        assert!(self.count <= cap as u128, "spectrum too large to expand");
        self.entries
            .iter()
            .flat_map(|e| std::iter::repeat_n(e.value, e.multiplicity as usize))
            .collect()
    }

    pub fn lowest(&self) -> Option<T> {
        self.entries.first().map(|e| e.value)
    }
}

/// Solves every channel and merges the results.
pub fn assemble_negative_spectrum<T: Real>(channels: &[Channel<T>], num: &Numerics<T>) -> Result<TreeSpectrum<T>> {
    let reports = channels
        .iter()
        .map(|ch| {
            Ok(ChannelReport { k: ch.k, multiplicity: ch.multiplicity, result: solve_channel(ch, num)? })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(merge_reports(reports))
}

/// Merges per-channel results into one spectrum.
pub fn merge_reports<T: Real>(reports: Vec<ChannelReport<T>>) -> TreeSpectrum<T> {
    let level = lit::<T>(MARGINAL_LEVEL);
    let mut all = Vec::new();
    let mut marginal = Vec::new();
    for rep in &reports {
        let certified = rep.result.truncation_converged;
        for &e in &rep.result.eigenvalues {
            if e > level && !certified {
                marginal.push((rep.k, e));
            } else {
                all.push((e, rep.multiplicity, rep.k));
            }
        }
        marginal.extend(rep.result.marginal.iter().map(|&e| (rep.k, e)));
    }
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite eigenvalues"));
    let tol = lit::<T>(MERGE_TOL);
    let mut entries: Vec<SpectrumEntry<T>> = Vec::new();
    for (e, m, k) in all {
        match entries.last_mut() {
            Some(last) if (last.value - e).abs() <= tol * e.abs().max(T::one()) => {
                last.multiplicity += m;
                if !last.channels.contains(&k) {
                    last.channels.push(k);
                }
            }
            _ => entries.push(SpectrumEntry { value: e, multiplicity: m, channels: vec![k] }),
        }
    }
    let count = entries.iter().map(|e| e.multiplicity).sum();
    let root_channel_only = entries.iter().all(|e| e.channels == [0]);
    TreeSpectrum { entries, count, marginal, channels: reports, root_channel_only }
}

/// Channel cutoff: the smallest `K` such that the trace bound certifies
/// every channel `k > K` empty at coupling `λ`.
///
/// For `d >= 2` the trace bound is unavailable and the cutoff falls back to
/// the last channel starting inside the potential's extent.
pub fn choose_k_max<T: Real>(tree: &RegularTree<T>, v: &RadialPotential<T>, lambda: T, d: T, cap: usize) -> Result<usize> {
    let n = tree.generations();
    if lambda == T::zero() || v.pieces().is_empty() || v.bound() == T::zero() {
        return Ok(0);
    }
    let nonpositive_part_empty = v_is_nonnegative(v);
    if nonpositive_part_empty {
        return Ok(0);
    }
    let mut k_max = 0;
    if d < lit(2.0) {
        for k in 1..=n {
            if tree.multiplicity(k) == 0 {
                continue;
            }
            let lc = channel_threshold(tree, v, d, k)?;
            if lambda >= lc {
                k_max = k;
            }
        }
    } else {
        let extent = v.extent();
        k_max = (1..=n).filter(|&k| tree.start(k) < extent).max().unwrap_or(0);
    }
    if k_max > cap {
        return Err(Error::CutoffNotFound(cap));
    }
    Ok(k_max)
}

/// True when `V >= 0` everywhere, checked on a fine sample of its support.
fn v_is_nonnegative<T: Real>(v: &RadialPotential<T>) -> bool {
    let end = v.extent().max(T::one());
    let mut pts: Vec<T> = v.knots();
    let n = 4000;
    pts.extend((0..=n).map(|i| end * lit::<T>(i as f64 / n as f64)));
    pts.iter().all(|&t| v.eval(t) >= T::zero() && v.eval(t + end * lit(1e-9)) >= T::zero())
}

/// Reports the trace bound `λ / λ_c(k)` for each channel `1..=n`.
pub fn channel_certificates<T: Real>(tree: &RegularTree<T>, v: &RadialPotential<T>, lambda: T, d: T) -> Result<Vec<(usize, f64)>> {
    (1..=tree.generations())
        .filter(|&k| tree.multiplicity(k) > 0)
        .map(|k| Ok((k, to_f64(lambda / channel_threshold(tree, v, d, k)?))))
        .collect()
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use proptest::prelude::*;

    use super::*;
    use crate::direct::{build_graph_matrix, direct_negative_spectrum, SIZE_CAP};
    use crate::halfline::{Boundary, GridSpec};
    use crate::tree::make_geometric_tree;

    fn two_generation() -> RegularTree<f64> {
        RegularTree::new(vec![1.0, 2.0], vec![2, 2], None).unwrap()
    }

    #[test]
    fn channels_reproduce_direct_spectrum() {
        let tree = two_generation();
        let v = RadialPotential::well(-1.0, 0.0, 3.0).unwrap();
        let (lambda, h, length) = (25.0, 0.01, 6.0);
        let channels = build_channels(&tree, &v, lambda, 2);
        assert_eq!(channels.iter().map(|c| c.multiplicity).collect::<Vec<_>>(), vec![1, 1, 2]);
        let spec = assemble_negative_spectrum(&channels, &Numerics::uniform(h, length)).unwrap();
        let grid = GridSpec { h, length, grading: 0.0, h_cap: None, right: Boundary::Dirichlet };
        let pot: Arc<dyn RadialFn<f64>> = Arc::new(v.clone());
        let m = build_graph_matrix(&tree, pot, lambda, &grid, SIZE_CAP).unwrap();
        let direct = direct_negative_spectrum(&m, 100).unwrap();
        let ours = spec.expanded(100);
        assert_eq!(ours.len(), direct.eigenvalues.len());
        for (a, b) in ours.iter().zip(&direct.eigenvalues) {
            assert!((a - b).abs() < 1e-8 * b.abs(), "{a} vs {b}");
        }
        for rep in &spec.channels {
            assert!(rep.result.count > 0, "channel {} empty", rep.k);
        }
        assert!(!spec.root_channel_only);
    }

    #[test]
    fn nonnegative_potential_needs_no_channels() {
        let tree = make_geometric_tree(1.5, 2, 5).unwrap();
        let v = RadialPotential::gaussian(1.0, 1.0).unwrap();
        assert_eq!(choose_k_max(&tree, &v, 10.0, 1.5, 100).unwrap(), 0);
        let spec = assemble_negative_spectrum(&build_channels(&tree, &v, 10.0, 0), &Numerics::default()).unwrap();
        assert_eq!(spec.count, 0);
    }

    #[test]
    fn cutoff_grows_with_coupling() {
        let tree = make_geometric_tree(1.5, 2, 5).unwrap();
        let v = RadialPotential::well(-1.0, 0.0, 40.0).unwrap();
        assert_eq!(choose_k_max(&tree, &v, 0.0, 1.5, 100).unwrap(), 0);
        let weak = choose_k_max(&tree, &v, 1e-4, 1.5, 100).unwrap();
        let strong = choose_k_max(&tree, &v, 10.0, 1.5, 100).unwrap();
        assert!(weak <= strong && strong > 0);
        let lc = channel_threshold(&tree, &v, 1.5, strong).unwrap();
        assert!(10.0 >= lc);
        assert!(matches!(choose_k_max(&tree, &v, 10.0, 1.5, 0), Err(Error::CutoffNotFound(0))));
    }

    #[test]
    fn certified_channels_are_empty() {
        let tree = make_geometric_tree(1.5, 2, 4).unwrap();
        let v = RadialPotential::well(-1.0, 0.0, 20.0).unwrap();
        let lambda = 0.5;
        let k_max = choose_k_max(&tree, &v, lambda, 1.5, 100).unwrap();
        let all = build_channels(&tree, &v, lambda, tree.generations());
        let spec = assemble_negative_spectrum(&all, &Numerics { h: 0.02, ..Numerics::default() }).unwrap();
        for rep in &spec.channels {
            if rep.k > k_max {
                assert_eq!(rep.result.count, 0, "channel {}", rep.k);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]
        #[test]
        fn count_is_monotone_in_coupling(l1 in 1.0f64..30.0, dl in 0.0f64..30.0) {
            let tree = RegularTree::new(vec![1.0], vec![3], None).unwrap();
            let v = RadialPotential::well(-1.0, 0.0, 2.0).unwrap();
            let num = Numerics::uniform(0.02, 4.0);
            let count = |l: f64| assemble_negative_spectrum(&build_channels(&tree, &v, l, 1), &num).unwrap().count;
            prop_assert!(count(l1) <= count(l1 + dl));
        }
    }
}
