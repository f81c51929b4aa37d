//! The truthful auction built on the online allocator.
//!
//! Bidders are split into two groups by fair coins. Each group gets a
//! fictitious run of the allocator on its own bids; the live stream is then
//! paced crosswise: even-indexed copies may go to group T but only while T
//! holds fewer copies than `floor((1 - 6*gamma) * x(S, j/2))`, and odd-indexed
//! copies symmetrically to S gated by T's fictitious run. Since the number of
//! copies a group receives depends only on the *other* group's bids, charging
//! VCG prices within each group at the end keeps truthful bidding dominant.
//!
//! Everything stochastic flows from a master seed through labeled substreams
//! ("partition", "fict-S", "fict-T"), so coins can be held fixed while bids
//! are mutated — which is exactly what the truthfulness checker does.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rayon::prelude::*;

use crate::allocator::AllocatorState;
use crate::analyzer;
use crate::error::{Error, Result};
use crate::instance::{
    build_revenue_curve, curve_from_sorted_units, find_critical_points, BidProfile, Bidder,
};
use crate::offline::opt_revenue;
use crate::rng::derive_rng;

/// A random split of the bidders, with the coins that produced it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub group_s: BTreeSet<String>,
    pub group_t: BTreeSet<String>,
    /// (bidder id, heads = S) in id order; replaying these coins reproduces
    /// the partition for any profile over the same ids.
    pub coin_record: Vec<(String, bool)>,
}

impl Partition {
    /// Applies a recorded coin sequence to a (possibly mutated) profile.
    /// Mutation never adds bidders, so every bidder finds its coin.
    pub fn from_record(record: &[(String, bool)], profile: &BidProfile) -> Self {
        let map: BTreeMap<&str, bool> =
            record.iter().map(|(id, c)| (id.as_str(), *c)).collect();
        let mut group_s = BTreeSet::new();
        let mut group_t = BTreeSet::new();
        for b in profile.bidders() {
            let heads = *map.get(b.id.as_str()).expect("coin recorded for every bidder");
            if heads {
                group_s.insert(b.id.clone());
            } else {
                group_t.insert(b.id.clone());
            }
        }
        Self { group_s, group_t, coin_record: record.to_vec() }
    }
}

/// One fair coin per bidder in id order, from the labeled substream.
fn flip_coins(profile: &BidProfile, seed: u64) -> Vec<bool> {
    let mut rng = derive_rng(seed, "partition");
    profile.bidders().iter().map(|_| rng.gen::<bool>()).collect()
}

/// Flips one fair coin per bidder (in id order) from the labeled substream.
pub fn partition_bidders(profile: &BidProfile, seed: u64) -> Result<Partition> {
    if profile.num_bidders() < 2 {
        return Err(Error::TooFewBidders);
    }
    let coins = flip_coins(profile, seed);
    Ok(partition_from_coins(profile, &coins))
}

fn partition_from_coins(profile: &BidProfile, coins: &[bool]) -> Partition {
    let mut group_s = BTreeSet::new();
    let mut group_t = BTreeSet::new();
    let mut record = Vec::with_capacity(coins.len());
    for (b, &heads) in profile.bidders().iter().zip(coins) {
        record.push((b.id.clone(), heads));
        if heads {
            group_s.insert(b.id.clone());
        } else {
            group_t.insert(b.id.clone());
        }
    }
    Partition { group_s, group_t, coin_record: record }
}

/// A stepwise-recorded allocator run on one group's bids: `x(G, k)` after each
/// of `k = 1..` copies. Extends lazily as larger horizons are consulted.
#[derive(Debug, Clone)]
pub struct FictitiousRun {
    xs: Vec<usize>,
    state: Option<AllocatorState>,
    pub seed: u64,
}

impl FictitiousRun {
    /// Empty groups allocate nothing at every horizon.
    pub fn new(group: &[Bidder], seed: u64) -> Result<Self> {
        if group.is_empty() {
            return Ok(Self { xs: Vec::new(), state: None, seed });
        }
        let profile = BidProfile::new(group.to_vec())?;
        let curve = build_revenue_curve(&profile)?;
        let cps = find_critical_points(&curve);
        Ok(Self { xs: Vec::new(), state: Some(AllocatorState::new(cps, seed)), seed })
    }

    /// Same machine driven by an already-sorted unit-value slice.
    fn from_units(units: &[f64], seed: u64) -> Self {
        if units.is_empty() {
            return Self { xs: Vec::new(), state: None, seed };
        }
        let curve = curve_from_sorted_units(units);
        let cps = find_critical_points(&curve);
        Self { xs: Vec::new(), state: Some(AllocatorState::new(cps, seed)), seed }
    }

    /// `x(G, k)`: copies the fictitious run holds after `k` copies arrived.
    pub fn x(&mut self, k: usize) -> usize {
        if k == 0 {
            return 0;
        }
        self.extend(k);
        match &self.state {
            None => 0,
            Some(_) => self.xs[k - 1],
        }
    }

    fn extend(&mut self, horizon: usize) {
        if let Some(state) = &mut self.state {
            while self.xs.len() < horizon {
                state.step();
                self.xs.push(state.allocated());
            }
        }
    }

    /// The recorded curve so far (grows as horizons are consulted).
    pub fn recorded(&self) -> &[usize] {
        &self.xs
    }
}

/// Which fictitious run gates a group's allocations. `CrossGroup` is the real
/// mechanism; `OwnGroup` is a deliberately broken control whose pacing depends
/// on a group's own bids, used to validate the truthfulness checker's power.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pacing {
    CrossGroup,
    OwnGroup,
}

/// Full outcome of one mechanism run.
#[derive(Debug, Clone)]
pub struct MechanismOutcome {
    pub partition: Partition,
    pub x_final_s: usize,
    pub x_final_t: usize,
    /// Copies won per bidder id (winners only).
    pub winners_s: BTreeMap<String, usize>,
    pub winners_t: BTreeMap<String, usize>,
    pub payments: BTreeMap<String, f64>,
    pub revenue: f64,
    pub gamma: f64,
    /// Bidder-dominance of the full profile at this supply.
    pub eta: f64,
    /// Pacing caps applied to T (even copies) and S (odd copies), in arrival
    /// order. Depends only on the other group's bids — the truthfulness core.
    pub caps_for_t: Vec<usize>,
    pub caps_for_s: Vec<usize>,
    /// Recorded fictitious allocation curves at the horizons consulted.
    pub fict_s: Vec<usize>,
    pub fict_t: Vec<usize>,
}

/// Per-profile precomputation shared across trials: the canonical sorted bid
/// list (value, bidder index), the benchmark, and the dominance figure.
struct ExperimentContext<'a> {
    profile: &'a BidProfile,
    sorted: Vec<(f64, usize)>,
    opt: f64,
    eta: f64,
    prices: Vec<f64>,
}

impl<'a> ExperimentContext<'a> {
    fn new(profile: &'a BidProfile, supply: usize) -> Result<Self> {
        let curve = build_revenue_curve(profile)?;
        let sorted = profile
            .sorted_bids()
            .into_iter()
            .map(|s| (s.value, s.bidder))
            .collect();
        let opt = opt_revenue(&curve, supply).revenue;
        let prices = profile.distinct_bid_values();
        let eta = dominance_from_parts(profile, &prices, opt);
        Ok(Self { profile, sorted, opt, eta, prices })
    }
}

/// Index-based outcome of one paced run; strings and sets appear only when a
/// rich [`MechanismOutcome`] is assembled from it.
struct CoreOutcome {
    x_final_s: usize,
    x_final_t: usize,
    /// Copies won per bidder index.
    won: Vec<usize>,
    /// Payment per bidder index (0 for losers).
    pay: Vec<f64>,
    revenue: f64,
    caps_for_t: Vec<usize>,
    caps_for_s: Vec<usize>,
    fict_s: Vec<usize>,
    fict_t: Vec<usize>,
    s_units: Vec<f64>,
    t_units: Vec<f64>,
}

fn core_run(
    ctx: &ExperimentContext<'_>,
    coins: &[bool],
    supply: usize,
    gamma: f64,
    seed: u64,
    pacing: Pacing,
) -> CoreOutcome {
    let num_bidders = ctx.profile.num_bidders();
    // Partition slices of the canonical order keep the tie-break intact.
    let mut s_bids: Vec<(f64, usize)> = Vec::new();
    let mut t_bids: Vec<(f64, usize)> = Vec::new();
    for &(v, bi) in &ctx.sorted {
        if coins[bi] {
            s_bids.push((v, bi));
        } else {
            t_bids.push((v, bi));
        }
    }
    let s_units: Vec<f64> = s_bids.iter().map(|&(v, _)| v).collect();
    let t_units: Vec<f64> = t_bids.iter().map(|&(v, _)| v).collect();
    let mut fict_s = FictitiousRun::from_units(&s_units, derive_seed(seed, "fict-S"));
    let mut fict_t = FictitiousRun::from_units(&t_units, derive_seed(seed, "fict-T"));

    let discount = 1.0 - 6.0 * gamma;
    let mut count_s = 0usize;
    let mut count_t = 0usize;
    let mut caps_for_t = Vec::with_capacity(supply / 2);
    let mut caps_for_s = Vec::with_capacity(supply.div_ceil(2));
    for j in 1..=supply {
        if j % 2 == 0 {
            let gate = match pacing {
                Pacing::CrossGroup => fict_s.x(j / 2),
                Pacing::OwnGroup => fict_t.x(j / 2),
            };
            let cap = (discount * gate as f64).floor() as usize;
            caps_for_t.push(cap);
            if count_t < cap && count_t < t_bids.len() {
                count_t += 1;
            }
        } else {
            let gate = match pacing {
                Pacing::CrossGroup => fict_t.x(j.div_ceil(2)),
                Pacing::OwnGroup => fict_s.x(j.div_ceil(2)),
            };
            let cap = (discount * gate as f64).floor() as usize;
            caps_for_s.push(cap);
            if count_s < cap && count_s < s_bids.len() {
                count_s += 1;
            }
        }
    }

    let mut won = vec![0usize; num_bidders];
    for &(_, bi) in s_bids.iter().take(count_s) {
        won[bi] += 1;
    }
    for &(_, bi) in t_bids.iter().take(count_t) {
        won[bi] += 1;
    }
    let mut pay = vec![0.0f64; num_bidders];
    let mut revenue = 0.0f64;
    for (bids, k) in [(&s_bids, count_s), (&t_bids, count_t)] {
        for (bi, p) in vcg_payments_indexed(bids, num_bidders, k) {
            pay[bi] += p;
            revenue += p;
        }
    }

    CoreOutcome {
        x_final_s: count_s,
        x_final_t: count_t,
        won,
        pay,
        revenue,
        caps_for_t,
        caps_for_s,
        fict_s: fict_s.recorded().to_vec(),
        fict_t: fict_t.recorded().to_vec(),
        s_units,
        t_units,
    }
}

/// Runs the mechanism with the given pacing variant.
pub fn run_mechanism_with_pacing(
    profile: &BidProfile,
    supply: usize,
    gamma: f64,
    seed: u64,
    pacing: Pacing,
) -> Result<MechanismOutcome> {
    validate_mechanism_params(gamma, supply)?;
    if profile.num_bidders() < 2 {
        return Err(Error::TooFewBidders);
    }
    let coins = flip_coins(profile, seed);
    finish_run(profile, supply, gamma, seed, pacing, coins)
}

/// Same, but with the partition fixed in advance (replayed coins).
pub fn run_mechanism_on_partition(
    profile: &BidProfile,
    supply: usize,
    gamma: f64,
    seed: u64,
    pacing: Pacing,
    partition: Partition,
) -> Result<MechanismOutcome> {
    validate_mechanism_params(gamma, supply)?;
    let by_id: BTreeMap<&str, bool> = partition
        .coin_record
        .iter()
        .map(|(id, c)| (id.as_str(), *c))
        .collect();
    let coins: Vec<bool> = profile
        .bidders()
        .iter()
        .map(|b| *by_id.get(b.id.as_str()).expect("coin recorded for every bidder"))
        .collect();
    finish_run(profile, supply, gamma, seed, pacing, coins)
}

fn finish_run(
    profile: &BidProfile,
    supply: usize,
    gamma: f64,
    seed: u64,
    pacing: Pacing,
    coins: Vec<bool>,
) -> Result<MechanismOutcome> {
    let ctx = ExperimentContext::new(profile, supply)?;
    let core = core_run(&ctx, &coins, supply, gamma, seed, pacing);
    let partition = partition_from_coins(profile, &coins);
    let mut winners_s = BTreeMap::new();
    let mut winners_t = BTreeMap::new();
    let mut payments = BTreeMap::new();
    for (bi, b) in profile.bidders().iter().enumerate() {
        if core.won[bi] > 0 {
            if coins[bi] {
                winners_s.insert(b.id.clone(), core.won[bi]);
            } else {
                winners_t.insert(b.id.clone(), core.won[bi]);
            }
            payments.insert(b.id.clone(), core.pay[bi]);
        }
    }
    Ok(MechanismOutcome {
        partition,
        x_final_s: core.x_final_s,
        x_final_t: core.x_final_t,
        winners_s,
        winners_t,
        payments,
        revenue: core.revenue,
        gamma,
        eta: ctx.eta,
        caps_for_t: core.caps_for_t,
        caps_for_s: core.caps_for_s,
        fict_s: core.fict_s,
        fict_t: core.fict_t,
    })
}

fn validate_mechanism_params(gamma: f64, supply: usize) -> Result<()> {
    if !(0.0..1.0 / 6.0).contains(&gamma) {
        return Err(Error::InvalidConfig(format!(
            "gamma must lie in [0, 1/6), got {gamma}"
        )));
    }
    if supply < 1 {
        return Err(Error::InvalidConfig("supply must be >= 1".into()));
    }
    Ok(())
}

/// The real mechanism: cross-group pacing.
pub fn run_mechanism(
    profile: &BidProfile,
    supply: usize,
    gamma: f64,
    seed: u64,
) -> Result<MechanismOutcome> {
    run_mechanism_with_pacing(profile, supply, gamma, seed, Pacing::CrossGroup)
}

fn derive_seed(seed: u64, label: &str) -> u64 {
    let mut rng = derive_rng(seed, label);
    rng.gen()
}

// ---------------------------------------------------------------------------
// VCG payments
// ---------------------------------------------------------------------------

/// VCG payments for selling `k` identical copies to a group with decreasing
/// marginal bids. The efficient allocation is the top-k of the flattened
/// multiset; bidder i pays the welfare others could get from k copies without
/// i, minus the welfare others get alongside i.
///
/// `k` larger than the group's total bids is capped.
pub fn vcg_payments(group: &[Bidder], k: usize) -> BTreeMap<String, f64> {
    let mut sorted: Vec<(f64, usize)> = Vec::new();
    for (gi, b) in group.iter().enumerate() {
        for &v in &b.bids {
            sorted.push((v, gi));
        }
    }
    sorted.sort_by(|x, y| {
        y.0.partial_cmp(&x.0)
            .unwrap()
            .then_with(|| group[x.1].id.cmp(&group[y.1].id))
    });
    vcg_payments_indexed(&sorted, group.len(), k)
        .into_iter()
        .map(|(gi, p)| (group[gi].id.clone(), p))
        .collect()
}

/// The payment engine over a canonically sorted (value, owner) list.
/// Returns (owner, payment) for winners only.
fn vcg_payments_indexed(
    sorted: &[(f64, usize)],
    num_owners: usize,
    k: usize,
) -> Vec<(usize, f64)> {
    let k = k.min(sorted.len());
    if k == 0 {
        return Vec::new();
    }
    // prefix[m] = sum of the top m bids of the whole group.
    let mut prefix = Vec::with_capacity(sorted.len() + 1);
    prefix.push(0.0f64);
    for &(v, _) in sorted {
        prefix.push(prefix.last().unwrap() + v);
    }
    let welfare_with = prefix[k];

    // Per owner: positions of its bids in the sorted list (ascending) and
    // running sums of its values along those positions.
    let mut positions: Vec<Vec<usize>> = vec![Vec::new(); num_owners];
    let mut own_prefix: Vec<Vec<f64>> = vec![vec![0.0]; num_owners];
    for (pos, &(v, gi)) in sorted.iter().enumerate() {
        positions[gi].push(pos);
        let last = *own_prefix[gi].last().unwrap();
        own_prefix[gi].push(last + v);
    }

    let mut payments = Vec::new();
    for gi in 0..num_owners {
        if positions[gi].is_empty() {
            continue;
        }
        let count_in = |m: usize| positions[gi].partition_point(|&p| p < m);
        let won = count_in(k);
        if won == 0 {
            continue;
        }
        let won_value = own_prefix[gi][won];
        // Top-k of the others: widen the window past k until it holds exactly
        // k foreign bids. count_in is monotone and bounded by the owner's bid
        // count, so the fixpoint settles in at most that many rounds.
        let mut inside = won;
        loop {
            let widened = count_in((k + inside).min(sorted.len()));
            if widened == inside {
                break;
            }
            inside = widened;
        }
        let reach = (k + inside).min(sorted.len());
        let welfare_others_without = prefix[reach] - own_prefix[gi][count_in(reach)];
        let welfare_others_with = welfare_with - won_value;
        let pay = (welfare_others_without - welfare_others_with).max(0.0);
        payments.push((gi, pay));
    }
    payments
}

// ---------------------------------------------------------------------------
// Bidder dominance
// ---------------------------------------------------------------------------

/// `max_{i,p} n(i,p) * p / OPT`, with `p` ranging over the distinct bid values
/// and `n(i,p)` counting bidder i's bids at or above `p`. Counting `>= p` at
/// bid values realizes the supremum of the strict-count form.
pub fn bidder_dominance(profile: &BidProfile, supply: usize) -> f64 {
    let curve = build_revenue_curve(profile).expect("validated profile");
    let opt = opt_revenue(&curve, supply).revenue;
    let prices = profile.distinct_bid_values();
    dominance_from_parts(profile, &prices, opt)
}

fn dominance_from_parts(profile: &BidProfile, prices: &[f64], opt: f64) -> f64 {
    let mut best = 0.0f64;
    for b in profile.bidders() {
        // b.bids is non-increasing: count of bids >= p is a prefix length.
        for &p in prices {
            let count = b.bids.iter().take_while(|&&v| v >= p).count();
            best = best.max(count as f64 * p);
        }
    }
    best / opt
}

// ---------------------------------------------------------------------------
// Truthfulness checking
// ---------------------------------------------------------------------------

/// A sampled misreport that increased the deviator's utility.
#[derive(Debug, Clone)]
pub struct Violation {
    pub bidder: String,
    pub kind: String,
    pub utility_truthful: f64,
    pub utility_deviating: f64,
    pub deviation_index: usize,
}

/// Outcome of a deviation-sampling session.
#[derive(Debug, Clone)]
pub struct TruthReport {
    pub deviations_checked: usize,
    pub violations: Vec<Violation>,
}

/// Utility of `bidder` under outcome `out`, valued by the *true* profile:
/// sum of the first q true marginals minus the payment.
fn utility_of(truth: &BidProfile, out: &MechanismOutcome, bidder: &str) -> f64 {
    let q = out
        .winners_s
        .get(bidder)
        .or_else(|| out.winners_t.get(bidder))
        .copied()
        .unwrap_or(0);
    let value: f64 = truth
        .bidders()
        .iter()
        .find(|b| b.id == bidder)
        .map(|b| b.bids.iter().take(q).sum())
        .unwrap_or(0.0);
    value - out.payments.get(bidder).copied().unwrap_or(0.0)
}

/// Samples misreports — lowering bids, raising bids, and dropping subsets —
/// and replays the mechanism with all coins held fixed. Under cross-group
/// pacing no misreport should ever raise the deviator's utility.
pub fn check_truthfulness(
    profile: &BidProfile,
    supply: usize,
    gamma: f64,
    num_deviations: usize,
    seed: u64,
    pacing: Pacing,
) -> Result<TruthReport> {
    if profile.num_bidders() < 2 {
        return Err(Error::TooFewBidders);
    }
    let results: Vec<Option<Violation>> = (0..num_deviations)
        .into_par_iter()
        .map(|d| -> Result<Option<Violation>> {
            let mut rng = derive_rng(seed, &format!("deviation-{d}"));
            let coin_seed: u64 = rng.gen();
            let partition = partition_bidders(profile, coin_seed)?;

            let truth_out = run_mechanism_on_partition(
                profile, supply, gamma, coin_seed, pacing, partition.clone(),
            )?;

            let bi = rng.gen_range(0..profile.num_bidders());
            let victim = profile.bidders()[bi].clone();
            let (lied, kind) = mutate_bids(&victim, &mut rng);
            let mut bidders: Vec<Bidder> = profile
                .bidders()
                .iter()
                .filter(|b| b.id != victim.id)
                .cloned()
                .collect();
            if let Some(lied) = lied {
                bidders.push(lied);
            }
            if bidders.len() < 2 {
                return Ok(None);
            }
            let lied_profile = BidProfile::new(bidders)?;
            let lied_partition = Partition::from_record(&partition.coin_record, &lied_profile);
            let lied_out = run_mechanism_on_partition(
                &lied_profile, supply, gamma, coin_seed, pacing, lied_partition,
            )?;

            let u_truth = utility_of(profile, &truth_out, &victim.id);
            let u_lie = utility_of(profile, &lied_out, &victim.id);
            if u_lie > u_truth + 1e-9 * u_truth.abs().max(1.0) {
                Ok(Some(Violation {
                    bidder: victim.id.clone(),
                    kind,
                    utility_truthful: u_truth,
                    utility_deviating: u_lie,
                    deviation_index: d,
                }))
            } else {
                Ok(None)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TruthReport {
        deviations_checked: num_deviations,
        violations: results.into_iter().flatten().collect(),
    })
}

/// Produces a misreport of one bidder. `None` means the bidder withdraws
/// entirely (all bids dropped).
fn mutate_bids(bidder: &Bidder, rng: &mut rand_chacha::ChaCha8Rng) -> (Option<Bidder>, String) {
    let mode = rng.gen_range(0..3u8);
    match mode {
        0 => {
            // Lower a random subset.
            let factor = rng.gen_range(0.05..0.95f64);
            let mut bids = bidder.bids.clone();
            for b in bids.iter_mut() {
                if rng.gen::<bool>() {
                    *b *= factor;
                }
            }
            bids.sort_by(|a, b| b.partial_cmp(a).unwrap());
            (Some(Bidder { id: bidder.id.clone(), bids }), "lower".into())
        }
        1 => {
            // Raise a random subset.
            let factor = rng.gen_range(1.05..3.0f64);
            let mut bids = bidder.bids.clone();
            for b in bids.iter_mut() {
                if rng.gen::<bool>() {
                    *b *= factor;
                }
            }
            bids.sort_by(|a, b| b.partial_cmp(a).unwrap());
            (Some(Bidder { id: bidder.id.clone(), bids }), "raise".into())
        }
        _ => {
            // Drop a non-empty subset (possibly everything).
            let keep: Vec<f64> = bidder
                .bids
                .iter()
                .copied()
                .filter(|_| rng.gen::<bool>())
                .collect();
            if keep.is_empty() || keep.len() == bidder.bids.len() {
                // Guarantee a real drop; withdraw fully when the coin flips
                // kept everything or nothing.
                if keep.len() == bidder.bids.len() && bidder.bids.len() > 1 {
                    let mut k = bidder.bids.clone();
                    k.pop();
                    return (Some(Bidder { id: bidder.id.clone(), bids: k }), "drop-subset".into());
                }
                return (None, "drop-all".into());
            }
            (Some(Bidder { id: bidder.id.clone(), bids: keep }), "drop-subset".into())
        }
    }
}

// ---------------------------------------------------------------------------
// Revenue experiment
// ---------------------------------------------------------------------------

/// Aggregates over seeded mechanism trials.
#[derive(Debug, Clone, serde::Serialize)]
pub struct RevenueStats {
    pub trials: usize,
    pub mean_revenue: f64,
    pub stderr_revenue: f64,
    /// Fraction of trials with revenue >= alpha_trial * (1 - eps) * OPT.
    pub frac_meeting_bound: f64,
    /// Fraction of trials where OPT(S, ceil(M/2)) + OPT(T, floor(M/2))
    /// exceeds (1 - 2*gamma) * OPT.
    pub split_concentration_frac: f64,
    /// Fraction of trials where every price level splits evenly:
    /// |n(S,p) - n(B,p)/2| <= gamma * n(B,p) for all p.
    pub even_split_frac: f64,
    pub eta: f64,
    pub opt: f64,
    pub mean_alpha: f64,
    pub gamma: f64,
    pub epsilon: f64,
    /// (1/eta) / (ln(|Q|/delta) / eps^2): >= 1 means the dominance hypothesis
    /// holds with constant 1.
    pub hypothesis_margin: f64,
    pub hypothesis_satisfied: bool,
}

/// Monte Carlo over partition and run coins. `epsilon = 8 * gamma`; the
/// subroutine quality `alpha` is measured per trial as the smaller of the two
/// halves' exact ratios at their fictitious horizons.
pub fn revenue_experiment(
    profile: &BidProfile,
    supply: usize,
    gamma: f64,
    delta: f64,
    trials: usize,
    seed: u64,
) -> Result<RevenueStats> {
    if trials == 0 {
        return Err(Error::InvalidConfig("trials must be >= 1".into()));
    }
    validate_mechanism_params(gamma, supply)?;
    if profile.num_bidders() < 2 {
        return Err(Error::TooFewBidders);
    }
    let epsilon = 8.0 * gamma;
    let ctx = ExperimentContext::new(profile, supply)?;
    // Per-bidder counts of bids at or above each price level, for the
    // even-split statistic.
    let per_bidder_counts: Vec<Vec<usize>> = ctx
        .profile
        .bidders()
        .iter()
        .map(|b| {
            ctx.prices
                .iter()
                .map(|&p| b.bids.iter().take_while(|&&v| v >= p).count())
                .collect()
        })
        .collect();
    let totals: Vec<usize> = (0..ctx.prices.len())
        .map(|pi| per_bidder_counts.iter().map(|c| c[pi]).sum())
        .collect();

    struct Trial {
        revenue: f64,
        alpha: f64,
        meets_bound: bool,
        split_ok: bool,
        even_ok: bool,
    }

    let per_trial: Vec<Trial> = (0..trials)
        .into_par_iter()
        .map(|t| -> Result<Trial> {
            let trial_seed = derive_seed(seed, &format!("trial-{t}"));
            let coins = flip_coins(ctx.profile, trial_seed);
            let core = core_run(&ctx, &coins, supply, gamma, trial_seed, Pacing::CrossGroup);

            let half_up = supply.div_ceil(2);
            let half_down = supply / 2;
            let (opt_s, alpha_s) = half_quality(&core.s_units, half_up)?;
            let (opt_t, alpha_t) = half_quality(&core.t_units, half_down)?;
            let alpha = match (alpha_s, alpha_t) {
                (Some(a), Some(b)) => a.min(b),
                (Some(a), None) | (None, Some(a)) => a,
                (None, None) => 0.0,
            };
            let split_ok = opt_s + opt_t > (1.0 - 2.0 * gamma) * ctx.opt;

            let even_ok = (0..ctx.prices.len()).all(|pi| {
                let n_s: usize = coins
                    .iter()
                    .enumerate()
                    .filter(|&(_, &c)| c)
                    .map(|(bi, _)| per_bidder_counts[bi][pi])
                    .sum();
                let n_b = totals[pi];
                (n_s as f64 - n_b as f64 / 2.0).abs() <= gamma * n_b as f64
            });

            Ok(Trial {
                revenue: core.revenue,
                alpha,
                meets_bound: core.revenue >= alpha * (1.0 - epsilon) * ctx.opt,
                split_ok,
                even_ok,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let n = trials as f64;
    let mean_revenue = per_trial.iter().map(|t| t.revenue).sum::<f64>() / n;
    let var = per_trial
        .iter()
        .map(|t| (t.revenue - mean_revenue).powi(2))
        .sum::<f64>()
        / (n - 1.0).max(1.0);
    let stderr_revenue = (var / n).sqrt();
    let mean_alpha = per_trial.iter().map(|t| t.alpha).sum::<f64>() / n;
    let frac_meeting_bound = per_trial.iter().filter(|t| t.meets_bound).count() as f64 / n;
    let split_concentration_frac = per_trial.iter().filter(|t| t.split_ok).count() as f64 / n;
    let even_split_frac = per_trial.iter().filter(|t| t.even_ok).count() as f64 / n;

    let q = ctx.prices.len().max(1) as f64;
    let required = (q / delta).ln() / (epsilon * epsilon);
    let hypothesis_margin =
        if ctx.eta > 0.0 { (1.0 / ctx.eta) / required } else { f64::INFINITY };

    Ok(RevenueStats {
        trials,
        mean_revenue,
        stderr_revenue,
        frac_meeting_bound,
        split_concentration_frac,
        even_split_frac,
        eta: ctx.eta,
        opt: ctx.opt,
        mean_alpha,
        gamma,
        epsilon,
        hypothesis_margin,
        hypothesis_satisfied: hypothesis_margin >= 1.0,
    })
}

/// (single-price optimum of the half at its horizon, exact subroutine ratio
/// when defined). `units` must be sorted descending.
fn half_quality(units: &[f64], horizon: usize) -> Result<(f64, Option<f64>)> {
    if units.is_empty() || horizon == 0 {
        return Ok((0.0, None));
    }
    let curve = curve_from_sorted_units(units);
    let opt = opt_revenue(&curve, horizon).revenue;
    let alg = analyzer::expected_revenue(&curve, horizon)?;
    Ok((opt, Some(alg / opt)))
}
