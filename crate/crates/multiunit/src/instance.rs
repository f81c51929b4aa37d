//! Bid profiles, revenue curves, critical-point extraction, instance
//! generators, and instance file I/O.
//!
//! A profile is a set of bidders, each with a non-increasing list of marginal
//! bids. Flattening and sorting all bids gives `u_1 >= u_2 >= ... >= u_n`, and
//! selling `l` copies at the single price `u_l` earns `f(l) = l * u_l`. The
//! peaks and valleys of `f` drive everything downstream: the online allocator
//! waits at peaks, and the exact analyzer reasons about the wait-budget chain
//! between them.

use std::collections::BTreeSet;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::derive_rng;

/// Relative tolerance for sublinearity checks on tabulated objectives.
pub const SUBLINEAR_REL_TOL: f64 = 1e-12;

/// One bidder: an opaque id and a non-increasing list of positive marginal bids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bidder {
    pub id: String,
    pub bids: Vec<f64>,
}

/// A validated multiset of bids, grouped by bidder and sorted by bidder id.
#[derive(Debug, Clone, PartialEq)]
pub struct BidProfile {
    bidders: Vec<Bidder>,
}

impl BidProfile {
    /// Validates and canonicalizes (sorts bidders by id).
    ///
    /// Rejects empty profiles, empty bid lists, duplicate ids, non-finite or
    /// non-positive bids, and within-bidder increasing marginals.
    pub fn new(mut bidders: Vec<Bidder>) -> Result<Self> {
        if bidders.is_empty() {
            return Err(Error::EmptyInstance);
        }
        let mut seen = BTreeSet::new();
        for b in &bidders {
            if !seen.insert(b.id.clone()) {
                return Err(Error::InvalidBid {
                    bidder: b.id.clone(),
                    detail: "duplicate bidder id".into(),
                });
            }
            if b.bids.is_empty() {
                return Err(Error::InvalidBid {
                    bidder: b.id.clone(),
                    detail: "bidder has no bids".into(),
                });
            }
            for (k, &v) in b.bids.iter().enumerate() {
                if !v.is_finite() || v <= 0.0 {
                    return Err(Error::InvalidBid {
                        bidder: b.id.clone(),
                        detail: format!("bid #{k} is {v}; bids must be finite and positive"),
                    });
                }
            }
            for w in b.bids.windows(2) {
                if w[1] > w[0] {
                    return Err(Error::InvalidBid {
                        bidder: b.id.clone(),
                        detail: format!(
                            "marginal bids must be non-increasing, got {} after {}",
                            w[1], w[0]
                        ),
                    });
                }
            }
        }
        bidders.sort_by(|x, y| x.id.cmp(&y.id));
        Ok(Self { bidders })
    }

    pub fn bidders(&self) -> &[Bidder] {
        &self.bidders
    }

    pub fn num_bidders(&self) -> usize {
        self.bidders.len()
    }

    pub fn total_bids(&self) -> usize {
        self.bidders.iter().map(|b| b.bids.len()).sum()
    }

    /// All distinct bid values, descending. The price grid for dominance scans.
    pub fn distinct_bid_values(&self) -> Vec<f64> {
        let mut vals: Vec<f64> = self
            .bidders
            .iter()
            .flat_map(|b| b.bids.iter().copied())
            .collect();
        vals.sort_by(|a, b| b.partial_cmp(a).unwrap());
        vals.dedup();
        vals
    }

    /// Flattens to (bid, bidder index, position) sorted by the canonical
    /// tie-break: bid descending, then bidder id ascending, then position
    /// ascending. Bidder indices refer to the id-sorted `bidders()` order.
    pub fn sorted_bids(&self) -> Vec<SortedBid> {
        let mut out = Vec::with_capacity(self.total_bids());
        for (bi, b) in self.bidders.iter().enumerate() {
            for (pos, &v) in b.bids.iter().enumerate() {
                out.push(SortedBid { value: v, bidder: bi, position: pos });
            }
        }
        out.sort_by(|x, y| {
            y.value
                .partial_cmp(&x.value)
                .unwrap()
                .then_with(|| self.bidders[x.bidder].id.cmp(&self.bidders[y.bidder].id))
                .then_with(|| x.position.cmp(&y.position))
        });
        out
    }
}

/// One entry of the flattened, sorted bid vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SortedBid {
    pub value: f64,
    /// Index into `BidProfile::bidders()`.
    pub bidder: usize,
    /// 0-based position within that bidder's marginal list.
    pub position: usize,
}

/// Where a revenue curve came from.
#[derive(Debug, Clone, PartialEq)]
pub enum CurveOrigin {
    /// Built from a bid profile; `owners[l-1]` records who holds the l-th bid.
    FromBids { owners: Vec<SortedBid> },
    /// An arbitrary tabulated sublinear objective.
    GenericF,
}

/// Sorted unit values `u_1 >= ... >= u_n` together with the single-price
/// revenue table `f(l) = l * u_l` (`f(0) = 0` by convention).
#[derive(Debug, Clone, PartialEq)]
pub struct RevenueCurve {
    u: Vec<f64>,
    f: Vec<f64>,
    origin: CurveOrigin,
}

impl RevenueCurve {
    pub fn n(&self) -> usize {
        self.u.len()
    }

    /// Unit value at 1-based index `l`.
    pub fn u(&self, l: usize) -> f64 {
        self.u[l - 1]
    }

    /// Single-price revenue for `l` copies, 0 <= l <= n.
    pub fn f(&self, l: usize) -> f64 {
        if l == 0 {
            0.0
        } else {
            self.f[l - 1]
        }
    }

    pub fn origin(&self) -> &CurveOrigin {
        &self.origin
    }

    /// Owner of the l-th sorted bid (1-based). Only curves built from bids
    /// carry ownership.
    pub fn owner(&self, l: usize) -> Option<SortedBid> {
        match &self.origin {
            CurveOrigin::FromBids { owners } => owners.get(l - 1).copied(),
            CurveOrigin::GenericF => None,
        }
    }

    /// Wraps a tabulated objective `f(1), ..., f(n)`. Requires positive finite
    /// entries and sublinearity: f(l)/l non-increasing (checked with a small
    /// relative tolerance).
    pub fn from_table(f: &[f64]) -> Result<Self> {
        if f.is_empty() {
            return Err(Error::EmptyInstance);
        }
        for (i, &v) in f.iter().enumerate() {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "f({}) = {v}; tabulated values must be finite and positive",
                    i + 1
                )));
            }
        }
        // f(l+1)/(l+1) <= f(l)/l, cross-multiplied to avoid division.
        for l in 1..f.len() {
            let lhs = f[l] * l as f64;
            let rhs = f[l - 1] * (l + 1) as f64;
            if lhs > rhs * (1.0 + SUBLINEAR_REL_TOL) {
                return Err(Error::NotSublinear { index: l + 1 });
            }
        }
        let u: Vec<f64> = f.iter().enumerate().map(|(i, &v)| v / (i + 1) as f64).collect();
        Ok(Self { u, f: f.to_vec(), origin: CurveOrigin::GenericF })
    }
}

/// Fast path for curves cut from an already-sorted bid list (descending).
/// Skips re-sorting and ownership bookkeeping; used for fictitious runs on
/// partition slices of a canonically sorted profile.
pub(crate) fn curve_from_sorted_units(u: &[f64]) -> RevenueCurve {
    debug_assert!(u.windows(2).all(|w| w[1] <= w[0]), "units must be sorted descending");
    let f: Vec<f64> = u.iter().enumerate().map(|(i, &v)| (i + 1) as f64 * v).collect();
    RevenueCurve { u: u.to_vec(), f, origin: CurveOrigin::GenericF }
}

/// Flattens a profile into the sorted unit-value vector and revenue table.
pub fn build_revenue_curve(profile: &BidProfile) -> Result<RevenueCurve> {
    let owners = profile.sorted_bids();
    if owners.is_empty() {
        return Err(Error::EmptyInstance);
    }
    let u: Vec<f64> = owners.iter().map(|s| s.value).collect();
    let f: Vec<f64> = u.iter().enumerate().map(|(i, &v)| (i + 1) as f64 * v).collect();
    Ok(RevenueCurve { u, f, origin: CurveOrigin::FromBids { owners } })
}

/// The peak/valley structure of a revenue curve.
///
/// Peaks are maximal runs `[a_i, b_i]` (1-based) on which `f` is
/// non-decreasing; between `b_i` and the next recovery point `a_{i+1}` the
/// curve stays strictly below `f(b_i)`, and `f(a_{i+1}) >= f(b_i)` (ties count
/// as a recovery). Wait bounds are `D_i = max_{j<=i}(a_{j+1} - b_j)` with
/// `D_0 = 0`; the terminal phase reuses `D_{K-1}`. Thresholds are
/// `J_i = b_i + D_{i-1}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CriticalPoints {
    peaks: Vec<(usize, usize)>,
    d: Vec<usize>,
    j: Vec<usize>,
}

impl CriticalPoints {
    pub fn num_peaks(&self) -> usize {
        self.peaks.len()
    }

    /// Start of the i-th run (1-based peak index).
    pub fn a(&self, i: usize) -> usize {
        self.peaks[i - 1].0
    }

    /// End of the i-th run (the peak itself), 1-based peak index.
    pub fn b(&self, i: usize) -> usize {
        self.peaks[i - 1].1
    }

    pub fn peaks(&self) -> &[(usize, usize)] {
        &self.peaks
    }

    /// Wait bound `D_i` for 0 <= i <= K. `d(0) = 0`; `d(K) = d(K-1)`.
    pub fn d(&self, i: usize) -> usize {
        self.d[i]
    }

    /// Threshold `J_i = b_i + D_{i-1}` for 1 <= i <= K.
    pub fn j(&self, i: usize) -> usize {
        self.j[i - 1]
    }

    /// The last peak: the allocator halts after reaching `b_K`.
    pub fn terminal_peak(&self) -> usize {
        self.b(self.num_peaks())
    }
}

/// Extracts the unique critical-point sequence of a curve.
///
/// Runs are maximal (plateaus `f(l+1) = f(l)` extend a run) and a tie
/// `f(l) = f(b_i)` at a prospective recovery counts as the next `a_{i+1}`.
pub fn find_critical_points(curve: &RevenueCurve) -> CriticalPoints {
    let n = curve.n();
    let mut peaks = Vec::new();
    let mut a = 1usize;
    loop {
        let mut b = a;
        while b < n && curve.f(b + 1) >= curve.f(b) {
            b += 1;
        }
        peaks.push((a, b));
        let mut next = None;
        for l in b + 1..=n {
            if curve.f(l) >= curve.f(b) {
                next = Some(l);
                break;
            }
        }
        match next {
            Some(l) => a = l,
            None => break,
        }
    }
    let k = peaks.len();
    let mut d = vec![0usize; k + 1];
    for i in 1..k {
        d[i] = d[i - 1].max(peaks[i].0 - peaks[i - 1].1);
    }
    if k >= 1 {
        d[k] = d[k - 1];
    }
    let j = (1..=k).map(|i| peaks[i - 1].1 + d[i - 1]).collect();
    CriticalPoints { peaks, d, j }
}

// ---------------------------------------------------------------------------
// Generators
// ---------------------------------------------------------------------------

/// One bid of 1 plus `count` bids of `epsilon`, each bid its own bidder.
pub fn gen_spike(epsilon: f64, count: usize) -> Result<BidProfile> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "spike epsilon must lie in (0, 1), got {epsilon}"
        )));
    }
    if count < 1 {
        return Err(Error::InvalidConfig("spike count must be >= 1".into()));
    }
    let mut bidders = vec![Bidder { id: "big".into(), bids: vec![1.0] }];
    for k in 0..count {
        bidders.push(Bidder { id: format!("eps{k:04}"), bids: vec![epsilon] });
    }
    BidProfile::new(bidders)
}

/// Deterministic multi-peak instance: at least `num_peaks` critical pairs,
/// verified post-hoc against `find_critical_points`.
pub fn gen_multipeak(num_peaks: usize, seed: u64) -> Result<BidProfile> {
    if num_peaks < 1 {
        return Err(Error::InvalidConfig("num_peaks must be >= 1".into()));
    }
    for attempt in 0..64u64 {
        let mut rng = derive_rng(seed, &format!("multipeak-{attempt}"));
        let profile = multipeak_attempt(num_peaks, &mut rng)?;
        let curve = build_revenue_curve(&profile)?;
        let cps = find_critical_points(&curve);
        if cps.num_peaks() >= num_peaks && curve.n() <= 60 {
            return Ok(profile);
        }
    }
    Err(Error::InvalidConfig(format!(
        "could not realize {num_peaks} peaks within the size budget"
    )))
}

fn multipeak_attempt(num_peaks: usize, rng: &mut ChaCha8Rng) -> Result<BidProfile> {
    // Constant-value segments give strictly increasing f within a run. Each
    // new segment starts with a dip below the previous peak and recovers at a
    // target index placed strictly between grid points so no float tie can
    // move the recovery.
    let mut u: Vec<f64> = Vec::new();
    let mut v = 1.0f64;
    let mut b = rng.gen_range(1..=3usize);
    u.extend(std::iter::repeat_n(v, b));
    for _ in 1..num_peaks {
        let peak_rev = v * b as f64;
        let gap = rng.gen_range(2..=4usize);
        let target_a = b + gap;
        v = peak_rev / (target_a as f64 - 0.5);
        let extra = rng.gen_range(0..=2usize);
        let b_next = target_a + extra;
        u.extend(std::iter::repeat_n(v, b_next - b));
        b = b_next;
        if b > 60 {
            break;
        }
    }
    // Round-robin split into a handful of bidders; any subsequence of a
    // non-increasing list is non-increasing. At least two bidders whenever
    // possible so the profiles also feed the partition-based mechanism.
    let num_bidders = (u.len() / 8).clamp(2, 5).min(u.len());
    let mut lists: Vec<Vec<f64>> = vec![Vec::new(); num_bidders];
    for (i, &val) in u.iter().enumerate() {
        lists[i % num_bidders].push(val);
    }
    let bidders = lists
        .into_iter()
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| Bidder { id: format!("g{i}"), bids: l })
        .collect();
    BidProfile::new(bidders)
}

/// Random profile: each bidder gets 1..=max_bids_per_bidder decreasing bids.
pub fn gen_random_profile(
    num_bidders: usize,
    max_bids_per_bidder: usize,
    seed: u64,
) -> Result<BidProfile> {
    if num_bidders < 1 || max_bids_per_bidder < 1 {
        return Err(Error::InvalidConfig(
            "num_bidders and max_bids_per_bidder must be >= 1".into(),
        ));
    }
    let mut rng = derive_rng(seed, "random-profile");
    let mut bidders = Vec::with_capacity(num_bidders);
    for i in 0..num_bidders {
        let count = rng.gen_range(1..=max_bids_per_bidder);
        let mut bids: Vec<f64> = (0..count)
            .map(|_| {
                let exp: f64 = rng.gen_range(-1.0..1.0);
                10f64.powf(exp)
            })
            .collect();
        bids.sort_by(|a, b| b.partial_cmp(a).unwrap());
        bidders.push(Bidder { id: format!("r{i:03}"), bids });
    }
    BidProfile::new(bidders)
}

// ---------------------------------------------------------------------------
// File I/O
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct InstanceFile {
    bidders: Vec<Bidder>,
}

/// Reads an instance file: `{"bidders":[{"id":"...","bids":[...]},...]}`.
pub fn load_instance(path: impl AsRef<Path>) -> Result<BidProfile> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let file: InstanceFile = serde_json::from_str(&text).map_err(|e| Error::ParseError {
        path: path.display().to_string(),
        detail: format!("{e} (line {}, column {})", e.line(), e.column()),
    })?;
    BidProfile::new(file.bidders)
}

/// Writes the canonical serialization (bidders sorted by id).
pub fn save_instance(profile: &BidProfile, path: impl AsRef<Path>) -> Result<()> {
    let file = InstanceFile { bidders: profile.bidders.clone() };
    let mut text = serde_json::to_string_pretty(&file).expect("instance serializes");
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}
