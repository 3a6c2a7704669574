//! Labelled score samples and uniform-mass binning.

use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Scores `z` in `[0, 1]` paired with binary labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    scores: Vec<f64>,
    labels: Vec<bool>,
}

impl LabeledSample {
    /// Rejects empty input, mismatched lengths and scores outside `[0, 1]`
    /// (including NaN). Scores are never clamped.
    pub fn new(scores: Vec<f64>, labels: Vec<bool>) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::LengthMismatch {
                expected: scores.len(),
                found: labels.len(),
            });
        }
        if scores.is_empty() {
            return Err(Error::EmptySample);
        }
        check_scores(&scores)?;
        Ok(Self { scores, labels })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, bool)> + '_ {
        self.scores.iter().copied().zip(self.labels.iter().copied())
    }

    /// Fraction of positive labels.
    pub fn positive_rate(&self) -> f64 {
        self.labels.iter().filter(|&&y| y).count() as f64 / self.len() as f64
    }
}

pub(crate) fn check_scores(scores: &[f64]) -> Result<()> {
    match scores.iter().position(|z| !(0.0..=1.0).contains(z)) {
        Some(index) => Err(Error::ScoreOutOfRange {
            index,
            value: scores[index],
        }),
        None => Ok(()),
    }
}

/// A partition of `[0, 1]` into `I_1 = [u_0, u_1]` and `I_b = (u_{b-1}, u_b]`
/// for `b >= 2`, with `u_0 = 0` and `u_B = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinningScheme {
    edges: Vec<f64>,
}

impl BinningScheme {
    /// Builds a scheme from explicit edges. The edges must start at 0, end at
    /// 1 and be strictly increasing.
    pub fn from_edges(edges: Vec<f64>) -> Result<Self> {
        if edges.len() < 2 {
            return Err(Error::InvalidArity {
                bins: edges.len().saturating_sub(1),
                n: 0,
            });
        }
        let last = edges.len() - 1;
        if edges[0] != 0.0 {
            return Err(Error::InvalidParameter {
                name: "u_0",
                value: edges[0],
            });
        }
        if edges[last] != 1.0 {
            return Err(Error::InvalidParameter {
                name: "u_B",
                value: edges[last],
            });
        }
        for b in 1..edges.len() {
            // NaN fails this comparison as well.
            if !(edges[b] > edges[b - 1]) {
                return Err(Error::DegenerateBins {
                    edge: b,
                    value: edges[b],
                });
            }
        }
        Ok(Self { edges })
    }

    /// The single bin `[0, 1]`.
    pub fn trivial() -> Self {
        Self {
            edges: alloc::vec![0.0, 1.0],
        }
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn num_bins(&self) -> usize {
        self.edges.len() - 1
    }

    /// Bounds `(u_{b}, u_{b+1})` of the zero-based bin `b`.
    pub fn bounds(&self, bin: usize) -> (f64, f64) {
        (self.edges[bin], self.edges[bin + 1])
    }

    /// Zero-based index of the bin containing `z`; see [`bin_index`].
    pub fn index_of(&self, z: f64) -> usize {
        // First interior edge that is >= z; the last bin catches the rest.
        let interior = &self.edges[1..self.edges.len() - 1];
        interior.partition_point(|&u| u < z)
    }
}

/// Zero-based index of the bin that contains `z`.
///
/// The first bin is closed on both sides and every later bin is
/// left-open/right-closed, so `z = 0` lands in bin 0 and `z = u_b` lands in
/// bin `b - 1`. Values outside `[0, 1]` are clamped to the end bins.
pub fn bin_index(scheme: &BinningScheme, z: f64) -> usize {
    scheme.index_of(z)
}

/// Uniform-mass binning scheme of `bins` bins induced by `scores`.
///
/// Interior edges are the order statistics `u_b = z_(floor(n b / B))`
/// (one-based). A tie at an edge position is an error rather than a silent
/// merge, since merging would change the number of bins.
pub fn umb_fit(scores: &[f64], bins: usize) -> Result<BinningScheme> {
    let n = scores.len();
    if bins == 0 || bins > n {
        return Err(Error::InvalidArity { bins, n });
    }
    check_scores(scores)?;
    let mut sorted = scores.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    edges_from_sorted(&sorted, bins).map(|edges| BinningScheme { edges })
}

/// Edge construction over already sorted, validated scores.
///
/// An interior edge is degenerate when its order statistic is tied with the
/// next one (the tie would move points across the edge and unbalance the
/// counts) or when it collides with `u_0 = 0` or `u_B = 1`.
pub(crate) fn edges_from_sorted(sorted: &[f64], bins: usize) -> Result<Vec<f64>> {
    let n = sorted.len();
    let mut edges = Vec::with_capacity(bins + 1);
    edges.push(0.0);
    for b in 1..bins {
        let rank = n * b / bins;
        let u = sorted[rank - 1];
        if u <= 0.0 || u >= 1.0 || sorted[rank] == u {
            return Err(Error::DegenerateBins { edge: b, value: u });
        }
        edges.push(u);
    }
    edges.push(1.0);
    Ok(edges)
}
