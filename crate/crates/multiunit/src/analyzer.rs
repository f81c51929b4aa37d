//! Exact (non-sampled) analysis of the allocator's outcome distribution.
//!
//! The realized run of the allocator is a deterministic function of the
//! coupled wait chain `C_i = ceil(T_i)`: with `C_0 = 0`,
//!
//! ```text
//! Pr[C_i = k | C_{i-1} = j] = (D_{i-1}/D_i) * [k = j] + (1/D_i) * [D_{i-1} < k <= D_i]
//! ```
//!
//! so each marginal is uniform on `{1..D_i}` and the chain is monotone. All
//! probabilities here are exact `BigRational`s; floats appear only where
//! revenue (a float curve) enters.
//!
//! Two event conventions coexist and both are exposed:
//!
//! * [`case_event_probabilities`] uses the tail split at the threshold
//!   (`C_i <= M'` versus `C_i > M'`). These equal the six closed-form case
//!   rows exactly, because `Pr[ceil(T) <= m] = Pr[T <= m]` at integers.
//! * [`allocation_event_probabilities`] uses the machine's strict split
//!   (`X > b_i` requires `C_i < M'`: a resumed run still needs a copy left to
//!   allocate). The two differ by exactly the boundary atom
//!   `Pr[C_{i-1} <= M' and C_i = M']`, the one copy the continuous analysis
//!   treats as measure zero.

use std::collections::BTreeMap;
use std::fmt;

use num::{BigInt, BigRational, One, ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::instance::{find_critical_points, CriticalPoints, RevenueCurve};
use crate::offline::opt_revenue;

/// Guard for the DP state space.
const MAX_ANALYZED_N: usize = 10_000;

pub fn rat(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

fn rat_usize(num: usize, den: usize) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

// ---------------------------------------------------------------------------
// Wait chain
// ---------------------------------------------------------------------------

/// Distribution over cumulative wait values, as a sparse map value -> mass.
pub type ChainDist = BTreeMap<usize, BigRational>;

/// One kernel application: the resample entering the wait after peak `phase`.
/// `d_prev = D_{phase-1}`, `d_cur = D_{phase}`.
pub fn kernel_step(dist: &ChainDist, d_prev: usize, d_cur: usize) -> ChainDist {
    assert!(d_prev <= d_cur, "wait bounds are non-decreasing");
    if d_cur == d_prev {
        return dist.clone();
    }
    let mut out = ChainDist::new();
    let keep = rat_usize(d_prev, d_cur);
    let mut total = BigRational::zero();
    for (&c, p) in dist {
        total += p;
        if !keep.is_zero() {
            let kept = p * &keep;
            if !kept.is_zero() {
                *out.entry(c).or_insert_with(BigRational::zero) += kept;
            }
        }
    }
    let fresh_each = total * rat_usize(1, d_cur);
    for c in d_prev + 1..=d_cur {
        *out.entry(c).or_insert_with(BigRational::zero) += fresh_each.clone();
    }
    out
}

/// Marginal distribution of `C_j` (`j = 0` gives the point mass at 0).
pub fn chain_marginal(cps: &CriticalPoints, j: usize) -> ChainDist {
    let mut dist = ChainDist::new();
    dist.insert(0, BigRational::one());
    for phase in 1..=j {
        dist = kernel_step(&dist, cps.d(phase - 1), cps.d(phase));
    }
    dist
}

/// Tail-split event probabilities at peak `i` for threshold `m_prime`:
/// `(Pr[C_{i-1} > M'], Pr[C_{i-1} <= M' and C_i > M'], Pr[C_i <= M'])`.
///
/// These are the probabilities the closed-form case rows describe, exact for
/// integer thresholds.
pub fn case_event_probabilities(
    cps: &CriticalPoints,
    bracket: usize,
    m_prime: usize,
) -> (BigRational, BigRational, BigRational) {
    let prev = chain_marginal(cps, bracket - 1);
    let mut below = BigRational::zero();
    let mut reach = ChainDist::new();
    for (&c, p) in &prev {
        if c > m_prime {
            below += p;
        } else {
            reach.insert(c, p.clone());
        }
    }
    let cur = kernel_step(&reach, cps.d(bracket - 1), cps.d(bracket));
    let mut above = BigRational::zero();
    let mut at = BigRational::zero();
    for (&c, p) in &cur {
        if c <= m_prime {
            above += p;
        } else {
            at += p;
        }
    }
    (below, at, above)
}

/// Machine event probabilities at peak `i` for threshold `m_prime`:
/// `(Pr[X < b_i], Pr[X = b_i], Pr[X > b_i])` expressed through the chain as
/// `(Pr[C_{i-1} > M'], Pr[C_{i-1} <= M' and C_i >= M'], Pr[C_i < M'])`.
pub fn allocation_event_probabilities(
    cps: &CriticalPoints,
    bracket: usize,
    m_prime: usize,
) -> (BigRational, BigRational, BigRational) {
    let prev = chain_marginal(cps, bracket - 1);
    let mut below = BigRational::zero();
    let mut reach = ChainDist::new();
    for (&c, p) in &prev {
        if c > m_prime {
            below += p;
        } else {
            reach.insert(c, p.clone());
        }
    }
    let cur = kernel_step(&reach, cps.d(bracket - 1), cps.d(bracket));
    let mut above = BigRational::zero();
    let mut at = BigRational::zero();
    for (&c, p) in &cur {
        if c < m_prime {
            above += p;
        } else {
            at += p;
        }
    }
    (below, at, above)
}

// ---------------------------------------------------------------------------
// Outcome distribution
// ---------------------------------------------------------------------------

/// Exact distribution of the number of copies the allocator sells.
#[derive(Debug, Clone)]
pub struct OutcomeDistribution {
    support: BTreeMap<usize, BigRational>,
    /// Supply fed to the machine.
    pub m: usize,
    /// Bracketing peak index i with `b_i < M <= b_{i+1}`, when one exists.
    pub bracket: Option<usize>,
    /// `M - b_i` for the bracketing peak.
    pub m_prime: Option<usize>,
}

impl OutcomeDistribution {
    pub fn support(&self) -> &BTreeMap<usize, BigRational> {
        &self.support
    }

    pub fn prob(&self, x: usize) -> BigRational {
        self.support.get(&x).cloned().unwrap_or_else(BigRational::zero)
    }

    pub fn expected_x(&self) -> BigRational {
        self.support
            .iter()
            .map(|(&x, p)| p * BigRational::from(BigInt::from(x)))
            .sum()
    }

    /// `E[f(X)]` on the given curve.
    pub fn expected_revenue(&self, curve: &RevenueCurve) -> f64 {
        self.support
            .iter()
            .map(|(&x, p)| p.to_f64().expect("probability fits in f64") * curve.f(x))
            .sum()
    }

    /// `E[f(X)^2]`, for standard-error estimates of sampled revenue.
    pub fn revenue_second_moment(&self, curve: &RevenueCurve) -> f64 {
        self.support
            .iter()
            .map(|(&x, p)| p.to_f64().expect("probability fits in f64") * curve.f(x).powi(2))
            .sum()
    }

    /// `(Pr[X < t], Pr[X = t], Pr[X > t])`.
    pub fn split_at(&self, t: usize) -> (BigRational, BigRational, BigRational) {
        let mut below = BigRational::zero();
        let mut at = BigRational::zero();
        let mut above = BigRational::zero();
        for (&x, p) in &self.support {
            if x < t {
                below += p;
            } else if x == t {
                at += p;
            } else {
                above += p;
            }
        }
        (below, at, above)
    }

    /// Conditional expectation `E[X | X > t]`; `None` when the event is null.
    pub fn expected_x_above(&self, t: usize) -> Option<BigRational> {
        self.conditional_expectation(|x| x > t)
    }

    /// Conditional expectation `E[X | X < t]`; `None` when the event is null.
    pub fn expected_x_below(&self, t: usize) -> Option<BigRational> {
        self.conditional_expectation(|x| x < t)
    }

    fn conditional_expectation(&self, keep: impl Fn(usize) -> bool) -> Option<BigRational> {
        let mut mass = BigRational::zero();
        let mut sum = BigRational::zero();
        for (&x, p) in &self.support {
            if keep(x) {
                mass += p;
                sum += p * BigRational::from(BigInt::from(x));
            }
        }
        if mass.is_zero() {
            None
        } else {
            Some(sum / mass)
        }
    }
}

/// Exact outcome distribution by dynamic programming over the wait chain.
///
/// A run with realized chain `c_1 <= ... <= c_{K-1}` sells
/// `X = M` for `M <= b_1`, stalls at `X = b_j` while
/// `b_j + c_{j-1} <= M <= b_j + c_j`, sells `X = M - c_j` while allocating
/// toward the next peak, and halts at the terminal peak `b_K`.
pub fn outcome_distribution(curve: &RevenueCurve, m: usize) -> Result<OutcomeDistribution> {
    if curve.n() > MAX_ANALYZED_N {
        return Err(Error::InvalidConfig(format!(
            "exact analysis is limited to n <= {MAX_ANALYZED_N}, got {}",
            curve.n()
        )));
    }
    let cps = find_critical_points(curve);
    let k = cps.num_peaks();

    let bracket = if m > cps.b(1) && k >= 2 && m <= cps.b(k) {
        Some((1..k).find(|&i| cps.b(i) < m && m <= cps.b(i + 1)).expect("bracket exists"))
    } else {
        None
    };
    let m_prime = bracket.map(|i| m - cps.b(i));

    let mut support = BTreeMap::new();
    if m <= cps.b(1) || k == 1 {
        support.insert(m.min(cps.b(1)), BigRational::one());
        return Ok(OutcomeDistribution { support, m, bracket, m_prime });
    }

    // Alive mass at peak `phase` keyed by the cumulative wait so far. The
    // invariant is m >= b_phase + c for every carried entry.
    let mut alive = ChainDist::new();
    alive.insert(0, BigRational::one());
    for phase in 1..k {
        let stepped = kernel_step(&alive, cps.d(phase - 1), cps.d(phase));
        let mut next = ChainDist::new();
        for (&c, p) in &stepped {
            if p.is_zero() {
                continue;
            }
            if m <= cps.b(phase) + c {
                // The wait outlasts the supply: stall at this peak.
                *support.entry(cps.b(phase)).or_insert_with(BigRational::zero) += p;
            } else if phase + 1 == k {
                // The next run is terminal; it halts at b_K.
                let x = (m - c).min(cps.b(k));
                *support.entry(x).or_insert_with(BigRational::zero) += p;
            } else if m < cps.b(phase + 1) + c {
                // Supply runs out mid-run before the next peak.
                *support.entry(m - c).or_insert_with(BigRational::zero) += p;
            } else {
                next.insert(c, p.clone());
            }
        }
        alive = next;
        if alive.is_empty() {
            break;
        }
    }
    debug_assert!(
        (support.values().cloned().sum::<BigRational>() - BigRational::one()).is_zero(),
        "outcome distribution must sum to 1"
    );
    Ok(OutcomeDistribution { support, m, bracket, m_prime })
}

/// `E[f(X)]` for the allocator on `curve` with the given supply.
pub fn expected_revenue(curve: &RevenueCurve, m: usize) -> Result<f64> {
    Ok(outcome_distribution(curve, m)?.expected_revenue(curve))
}

// ---------------------------------------------------------------------------
// Case classification
// ---------------------------------------------------------------------------

/// The six supply regimes relative to `J_i`, `a_{i+1}`, and `M`, plus the
/// terminal regime past the last peak.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaseTag {
    C1a,
    C1b,
    C1c,
    C2a,
    C2b,
    C2c,
    /// Supply beyond the last peak; no row formula applies.
    Terminal,
}

impl fmt::Display for CaseTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::C1a => "1a",
            Self::C1b => "1b",
            Self::C1c => "1c",
            Self::C2a => "2a",
            Self::C2b => "2b",
            Self::C2c => "2c",
            Self::Terminal => "terminal",
        };
        write!(f, "{s}")
    }
}

/// Classification of one (curve, supply) pair, carrying the closed-form row.
#[derive(Debug, Clone)]
pub struct CaseAnalysis {
    pub tag: CaseTag,
    /// Bracketing peak index i with `b_i < M <= b_{i+1}`.
    pub bracket: usize,
    pub m: usize,
    pub m_prime: usize,
    pub j_i: usize,
    pub a_next: usize,
    pub b_i: usize,
    pub d_prev: usize,
    pub d_cur: usize,
    /// Closed-form `(Pr[X < b_i], Pr[X = b_i], Pr[X > b_i])` in the row's
    /// tail-at-threshold convention.
    pub probabilities: (BigRational, BigRational, BigRational),
    /// The benchmark the case argument uses: `f(b_i)` in the 1-cases,
    /// `f(M)` in the 2-cases.
    pub opt_case: f64,
    /// The analytic per-case lower bound on ALG/OPT.
    pub ratio_bound: f64,
}

/// Identifies the bracketing peak and tags the regime, first match in the
/// order 1a, 1b, 1c, 2a, 2b, 2c. Boundary supplies satisfy two adjacent rows;
/// the rows agree there.
pub fn case_classify(curve: &RevenueCurve, m: usize) -> Result<CaseAnalysis> {
    let cps = find_critical_points(curve);
    let k = cps.num_peaks();
    if m < 1 {
        return Err(Error::InvalidConfig("supply must be >= 1".into()));
    }
    if m <= cps.b(1) {
        return Err(Error::DegenerateBelowFirstPeak { supply: m, first_peak: cps.b(1) });
    }
    if k == 1 || m > cps.b(k) {
        return Ok(CaseAnalysis {
            tag: CaseTag::Terminal,
            bracket: k,
            m,
            m_prime: m - cps.b(k),
            j_i: cps.j(k),
            a_next: 0,
            b_i: cps.b(k),
            d_prev: cps.d(k - 1),
            d_cur: cps.d(k),
            probabilities: (BigRational::zero(), BigRational::zero(), BigRational::zero()),
            opt_case: opt_revenue(curve, m).revenue,
            ratio_bound: 0.0,
        });
    }
    let i = (1..k).find(|&i| cps.b(i) < m && m <= cps.b(i + 1)).expect("bracket exists");
    let (b_i, a_next, j_i) = (cps.b(i), cps.a(i + 1), cps.j(i));
    let (d_prev, d_cur) = (cps.d(i - 1), cps.d(i));
    let m_prime = m - b_i;

    let tag = if j_i < m && m <= a_next {
        CaseTag::C1a
    } else if m <= j_i && j_i < a_next {
        CaseTag::C1b
    } else if m <= a_next && a_next <= j_i {
        CaseTag::C1c
    } else if j_i < a_next && a_next <= m {
        CaseTag::C2a
    } else if a_next <= m && m <= j_i {
        CaseTag::C2b
    } else {
        debug_assert!(a_next <= j_i && j_i < m);
        CaseTag::C2c
    };

    let zero = BigRational::zero;
    let probabilities = match tag {
        CaseTag::C1a => (
            zero(),
            BigRational::one() - rat_usize(m_prime, d_cur),
            rat_usize(m_prime, d_cur),
        ),
        CaseTag::C1b => (
            BigRational::one() - rat_usize(m_prime, d_prev),
            rat_usize(m_prime, d_prev) - rat_usize(m_prime, d_cur),
            rat_usize(m_prime, d_cur),
        ),
        CaseTag::C1c | CaseTag::C2b => (
            BigRational::one() - rat_usize(m_prime, d_prev),
            zero(),
            rat_usize(m_prime, d_prev),
        ),
        CaseTag::C2a | CaseTag::C2c => (zero(), zero(), BigRational::one()),
        CaseTag::Terminal => unreachable!(),
    };

    let opt_case = match tag {
        CaseTag::C1a | CaseTag::C1b | CaseTag::C1c => curve.f(b_i),
        _ => curve.f(m),
    };

    let mf = m as f64;
    let ratio_bound = match tag {
        CaseTag::C1a => {
            let x = m_prime as f64 / d_cur as f64;
            let y = d_cur as f64 / a_next as f64;
            1.0 + x * x * y / 2.0 - x * y
        }
        CaseTag::C1b => {
            let x = m_prime as f64 / d_prev as f64;
            (1.0 - x) / 2.0
                + x * (1.0
                    - (d_prev as f64 / d_cur as f64) * (1.0 - b_i as f64 / a_next as f64))
        }
        CaseTag::C1c | CaseTag::C2b => 0.5,
        CaseTag::C2a | CaseTag::C2c => (mf - d_cur as f64 / 2.0) / mf,
        CaseTag::Terminal => unreachable!(),
    };

    Ok(CaseAnalysis {
        tag,
        bracket: i,
        m,
        m_prime,
        j_i,
        a_next,
        b_i,
        d_prev,
        d_cur,
        probabilities,
        opt_case,
        ratio_bound,
    })
}

/// The closed-form row of a classified case.
pub fn case_probabilities(analysis: &CaseAnalysis) -> Option<(BigRational, BigRational, BigRational)> {
    match analysis.tag {
        CaseTag::Terminal => None,
        _ => Some(analysis.probabilities.clone()),
    }
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

/// One row of a supply sweep.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SweepRow {
    pub m: usize,
    pub alg: f64,
    pub opt: f64,
    pub ratio: f64,
    pub case: String,
}

/// Exact ALG, OPT, and their ratio for every supply 1..=m_max.
pub fn competitive_ratio_sweep(curve: &RevenueCurve, m_max: usize) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::with_capacity(m_max);
    for m in 1..=m_max {
        let alg = expected_revenue(curve, m)?;
        let opt = opt_revenue(curve, m).revenue;
        let case = match case_classify(curve, m) {
            Ok(a) => a.tag.to_string(),
            Err(Error::DegenerateBelowFirstPeak { .. }) => "degenerate".to_string(),
            Err(e) => return Err(e),
        };
        rows.push(SweepRow { m, alg, opt, ratio: alg / opt, case });
    }
    Ok(rows)
}

pub fn min_ratio(rows: &[SweepRow]) -> f64 {
    rows.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min)
}

/// Mixture over two branches: with probability `p_one` sell exactly one copy
/// (revenue `f(1)`), otherwise run the online allocator. Exact per-supply
/// expected revenue; a degenerate `p_one = 0` reproduces the plain sweep.
pub fn mixed_strategy_sweep(
    curve: &RevenueCurve,
    m_max: usize,
    p_one: f64,
) -> Result<Vec<SweepRow>> {
    if !(0.0..=1.0).contains(&p_one) {
        return Err(Error::InvalidConfig(format!(
            "mixture probability must lie in [0, 1], got {p_one}"
        )));
    }
    let f1 = curve.f(1);
    Ok(competitive_ratio_sweep(curve, m_max)?
        .into_iter()
        .map(|r| {
            let alg = p_one * f1 + (1.0 - p_one) * r.alg;
            SweepRow { m: r.m, alg, opt: r.opt, ratio: alg / r.opt, case: r.case }
        })
        .collect())
}

/// Smoothness bound `max_i max(D_{i-1}/b_i, D_i/a_{i+1})` over the non-terminal
/// peaks. Zero for a single-peak curve; a swept ratio is at least
/// `1 - bound - slack` where the slack covers the one-copy discreteness.
pub fn smoothness_bound(cps: &CriticalPoints) -> f64 {
    let k = cps.num_peaks();
    let mut bound = 0.0f64;
    for i in 1..k {
        bound = bound
            .max(cps.d(i - 1) as f64 / cps.b(i) as f64)
            .max(cps.d(i) as f64 / cps.a(i + 1) as f64);
    }
    bound
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::allocator;
    use crate::instance::{build_revenue_curve, gen_multipeak, gen_spike, BidProfile, Bidder};

    fn curve_from(bids: &[(&str, &[f64])]) -> RevenueCurve {
        let p = BidProfile::new(
            bids.iter()
                .map(|(id, b)| Bidder { id: id.to_string(), bids: b.to_vec() })
                .collect(),
        )
        .unwrap();
        build_revenue_curve(&p).unwrap()
    }

    fn two_peak() -> RevenueCurve {
        curve_from(&[("A", &[10.0]), ("B", &[3.0, 3.0]), ("C", &[3.0]), ("D", &[3.0, 3.0])])
    }

    /// Exhaustive oracle: enumerates every joint chain path and replays the
    /// run trajectory directly from its piecewise definition.
    fn enumerate_outcomes_paths(curve: &RevenueCurve, m: usize) -> BTreeMap<usize, BigRational> {
        let cps = find_critical_points(curve);
        let k = cps.num_peaks();
        let mut done: BTreeMap<usize, BigRational> = BTreeMap::new();
        let mut stack: Vec<(Vec<usize>, BigRational)> = vec![(vec![], BigRational::one())];
        while let Some((path, mass)) = stack.pop() {
            if path.len() == k - 1 {
                let x = replay(&cps, m, &path);
                *done.entry(x).or_insert_with(BigRational::zero) += mass;
                continue;
            }
            let phase = path.len() + 1;
            let (d_prev, d_cur) = (cps.d(phase - 1), cps.d(phase));
            let c_prev = path.last().copied().unwrap_or(0);
            if d_cur == d_prev {
                let mut p = path.clone();
                p.push(c_prev);
                stack.push((p, mass));
                continue;
            }
            let keep = rat_usize(d_prev, d_cur);
            if !keep.is_zero() {
                let mut p = path.clone();
                p.push(c_prev);
                stack.push((p, &mass * &keep));
            }
            for c in d_prev + 1..=d_cur {
                let mut p = path.clone();
                p.push(c);
                stack.push((p, &mass * rat_usize(1, d_cur)));
            }
        }
        done
    }

    /// The run trajectory as a function of supply, from its piecewise shape.
    fn replay(cps: &CriticalPoints, m: usize, chain: &[usize]) -> usize {
        let k = cps.num_peaks();
        if m <= cps.b(1) {
            return m;
        }
        for j in 1..k {
            let c_prev = if j >= 2 { chain[j - 2] } else { 0 };
            let c_j = chain[j - 1];
            if m >= cps.b(j) + c_prev && m <= cps.b(j) + c_j {
                return cps.b(j);
            }
            if m > cps.b(j) + c_j && m <= cps.b(j + 1) + c_j {
                return (m - c_j).min(cps.b(j + 1));
            }
        }
        cps.b(k)
    }

    #[test]
    fn dp_matches_path_enumeration() {
        let instances = [
            two_peak(),
            build_revenue_curve(&gen_spike(0.4, 8).unwrap()).unwrap(),
            build_revenue_curve(&gen_multipeak(3, 11).unwrap()).unwrap(),
            build_revenue_curve(&gen_multipeak(4, 2).unwrap()).unwrap(),
            curve_from(&[
                ("A", &[10.0]),
                ("B", &[3.0, 3.0, 3.0]),
                ("C", &[2.3, 2.3, 2.3, 2.3, 2.3]),
            ]),
        ];
        for c in &instances {
            for m in 0..=c.n() + 5 {
                let dp = outcome_distribution(c, m).unwrap();
                let oracle = enumerate_outcomes_paths(c, m);
                assert_eq!(dp.support(), &oracle, "n={} m={m}", c.n());
            }
        }
    }

    #[test]
    fn monotone_is_deterministic() {
        let c = curve_from(&[("A", &[2.0, 2.0, 2.0, 2.0])]);
        for m in 0..=8 {
            let d = outcome_distribution(&c, m).unwrap();
            assert_eq!(d.prob(m.min(4)), BigRational::one());
        }
    }

    #[test]
    fn two_peak_m3_distribution_and_revenue() {
        // Chain value C_1 is uniform on {1,2,3}. The machine sells 2 copies
        // only when C_1 = 1; the tail split at the threshold puts 2/3 on the
        // completed-wait side.
        let c = two_peak();
        let d = outcome_distribution(&c, 3).unwrap();
        assert_eq!(d.prob(1), rat(2, 3));
        assert_eq!(d.prob(2), rat(1, 3));
        let alg = d.expected_revenue(&c);
        assert!((alg - 26.0 / 3.0).abs() < 1e-12);

        let (below, at, above) = case_event_probabilities(&find_critical_points(&c), 1, 2);
        assert_eq!(below, BigRational::zero());
        assert_eq!(at, rat(1, 3));
        assert_eq!(above, rat(2, 3));

        let (mb, ma, mv) = allocation_event_probabilities(&find_critical_points(&c), 1, 2);
        assert_eq!(mb, BigRational::zero());
        assert_eq!(ma, rat(2, 3));
        assert_eq!(mv, rat(1, 3));
        let (xb, xa, xv) = d.split_at(1);
        assert_eq!((xb, xa, xv), (mb, ma, mv));
    }

    #[test]
    fn spike_stall_when_supply_is_two() {
        // epsilon = 0.4 spike: D_1 = 2, so with M = 2 the single remaining
        // copy is always consumed by the wait and ALG = f(1) = 1.
        let c = build_revenue_curve(&gen_spike(0.4, 8).unwrap()).unwrap();
        let d = outcome_distribution(&c, 2).unwrap();
        assert_eq!(d.prob(1), BigRational::one());
        assert!((d.expected_revenue(&c) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn spike_worked_example_mid_supply() {
        let c = build_revenue_curve(&gen_spike(0.01, 120).unwrap()).unwrap();
        let alg = expected_revenue(&c, 50).unwrap();
        let x = 0.01f64 * 50.0;
        let target = 1.0 - x + x * x / 2.0;
        assert!((alg - target).abs() <= 0.02, "alg={alg} target={target}");
    }

    #[test]
    fn chain_marginals_are_uniform_and_rows_sum_to_one() {
        let c = build_revenue_curve(&gen_multipeak(4, 2).unwrap()).unwrap();
        let cps = find_critical_points(&c);
        for j in 1..cps.num_peaks() {
            let marg = chain_marginal(&cps, j);
            let total: BigRational = marg.values().cloned().sum();
            assert_eq!(total, BigRational::one());
            for (&cval, p) in &marg {
                assert!((1..=cps.d(j)).contains(&cval));
                assert_eq!(*p, rat_usize(1, cps.d(j)));
            }
        }
    }

    #[test]
    fn kernel_is_monotone_coupling() {
        // From any point mass at c, one step never moves below c.
        let c = build_revenue_curve(&gen_multipeak(3, 11).unwrap()).unwrap();
        let cps = find_critical_points(&c);
        for j in 2..cps.num_peaks() {
            for cval in 1..=cps.d(j - 1) {
                let mut point = ChainDist::new();
                point.insert(cval, BigRational::one());
                let stepped = kernel_step(&point, cps.d(j - 1), cps.d(j));
                assert!(stepped.keys().all(|&k| k >= cval));
                let total: BigRational = stepped.values().cloned().sum();
                assert_eq!(total, BigRational::one());
            }
        }
    }

    #[test]
    fn classify_two_peak() {
        let c = two_peak();
        assert_eq!(case_classify(&c, 3).unwrap().tag, CaseTag::C1a);
        assert_eq!(case_classify(&c, 4).unwrap().tag, CaseTag::C1a); // boundary M = a_2
        assert_eq!(case_classify(&c, 5).unwrap().tag, CaseTag::C2a);
        assert!(matches!(
            case_classify(&c, 1),
            Err(Error::DegenerateBelowFirstPeak { .. })
        ));
        assert_eq!(case_classify(&c, 7).unwrap().tag, CaseTag::Terminal);
    }

    #[test]
    fn classify_covers_equal_bound_cases() {
        // Peaks (1,1), (4,4), (6,9) with D_1 = D_2 = 3: J_2 = 7 >= a_3 = 6.
        let c = curve_from(&[
            ("A", &[10.0]),
            ("B", &[3.0, 3.0, 3.0]),
            ("C", &[2.3, 2.3, 2.3, 2.3, 2.3]),
        ]);
        assert_eq!(case_classify(&c, 5).unwrap().tag, CaseTag::C1c);
        assert_eq!(case_classify(&c, 6).unwrap().tag, CaseTag::C1c);
        assert_eq!(case_classify(&c, 7).unwrap().tag, CaseTag::C2b);
        assert_eq!(case_classify(&c, 8).unwrap().tag, CaseTag::C2c);
        assert_eq!(case_classify(&c, 9).unwrap().tag, CaseTag::C2c);
    }

    #[test]
    fn classify_growing_bounds_hits_1b() {
        // Peaks (1,1), (4,5), (10,12): D_1 = 3, D_2 = 5, J_2 = 8 < a_3 = 10.
        let c = curve_from(&[
            ("A", &[10.0]),
            ("B", &[3.0, 3.0, 3.0, 3.0]),
            ("C", &[1.6; 7]),
        ]);
        let cps = find_critical_points(&c);
        assert_eq!(cps.peaks(), &[(1, 1), (4, 5), (10, 12)]);
        assert_eq!(cps.d(2), 5);
        for m in 6..=8 {
            assert_eq!(case_classify(&c, m).unwrap().tag, CaseTag::C1b, "m={m}");
        }
        assert_eq!(case_classify(&c, 9).unwrap().tag, CaseTag::C1a);
        assert_eq!(case_classify(&c, 10).unwrap().tag, CaseTag::C1a);
        assert_eq!(case_classify(&c, 11).unwrap().tag, CaseTag::C2a);
    }

    #[test]
    fn expected_x_and_case_report_fields() {
        let c = two_peak();
        let d = outcome_distribution(&c, 3).unwrap();
        assert_eq!(d.expected_x(), rat(4, 3));

        // The per-case analytic bound is the half guarantee or better, and
        // the benchmark field follows the case family: the standing peak in
        // the 1-cases, the full supply in the 2-cases.
        let a = case_classify(&c, 3).unwrap();
        assert!((a.ratio_bound - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(a.opt_case, c.f(1));
        let a = case_classify(&c, 5).unwrap();
        assert!((a.ratio_bound - 0.7).abs() < 1e-12);
        assert_eq!(a.opt_case, c.f(5));

        for curve in [
            two_peak(),
            build_revenue_curve(&gen_multipeak(3, 11).unwrap()).unwrap(),
            build_revenue_curve(&gen_spike(0.1, 30).unwrap()).unwrap(),
        ] {
            let cps = find_critical_points(&curve);
            for m in cps.b(1) + 1..=cps.b(cps.num_peaks()) {
                let a = case_classify(&curve, m).unwrap();
                if a.tag != CaseTag::Terminal {
                    assert!(a.ratio_bound >= 0.5 - 1e-12, "m={m}: bound {}", a.ratio_bound);
                    assert!(a.ratio_bound <= 1.0 + 1e-12);
                }
            }
        }
    }

    #[test]
    fn row_formulas_examples() {
        let c = two_peak();
        let a = case_classify(&c, 3).unwrap();
        let (p0, p1, p2) = case_probabilities(&a).unwrap();
        assert_eq!(p0, BigRational::zero());
        assert_eq!(p1, rat(1, 3));
        assert_eq!(p2, rat(2, 3));
        let a = case_classify(&c, 5).unwrap();
        let (q0, q1, q2) = case_probabilities(&a).unwrap();
        assert_eq!((q0, q1, q2), (BigRational::zero(), BigRational::zero(), BigRational::one()));
    }

    #[test]
    fn rows_match_chain_tails_everywhere() {
        let instances = [
            two_peak(),
            build_revenue_curve(&gen_spike(0.4, 8).unwrap()).unwrap(),
            build_revenue_curve(&gen_multipeak(3, 11).unwrap()).unwrap(),
            curve_from(&[
                ("A", &[10.0]),
                ("B", &[3.0, 3.0, 3.0]),
                ("C", &[2.3, 2.3, 2.3, 2.3, 2.3]),
            ]),
            curve_from(&[
                ("A", &[10.0]),
                ("B", &[3.0, 3.0, 3.0, 3.0]),
                ("C", &[1.6; 7]),
            ]),
        ];
        for c in &instances {
            let cps = find_critical_points(c);
            for m in cps.b(1) + 1..=cps.b(cps.num_peaks()) {
                let analysis = case_classify(c, m).unwrap();
                if analysis.tag == CaseTag::Terminal {
                    continue;
                }
                let row = case_probabilities(&analysis).unwrap();
                let chain = case_event_probabilities(&cps, analysis.bracket, analysis.m_prime);
                assert_eq!(row, chain, "m={m} case={}", analysis.tag);
                let total = &row.0 + &row.1 + &row.2;
                assert_eq!(total, BigRational::one());
            }
        }
    }

    #[test]
    fn machine_events_match_dp_everywhere() {
        let c = build_revenue_curve(&gen_multipeak(3, 11).unwrap()).unwrap();
        let cps = find_critical_points(&c);
        for m in cps.b(1) + 1..=cps.b(cps.num_peaks()) {
            let d = outcome_distribution(&c, m).unwrap();
            let i = d.bracket.unwrap();
            let dp_split = d.split_at(cps.b(i));
            let chain_split = allocation_event_probabilities(&cps, i, d.m_prime.unwrap());
            assert_eq!(dp_split, chain_split, "m={m}");
        }
    }

    #[test]
    fn sweep_monotone_ratio_one() {
        let c = curve_from(&[("A", &[2.0; 6])]);
        let rows = competitive_ratio_sweep(&c, 12).unwrap();
        for r in &rows {
            assert!((r.ratio - 1.0).abs() < 1e-12);
        }
        assert!((min_ratio(&rows) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sweep_spike_min_ratio() {
        let c = build_revenue_curve(&gen_spike(0.01, 320).unwrap()).unwrap();
        let rows = competitive_ratio_sweep(&c, 300).unwrap();
        assert!(min_ratio(&rows) >= 0.5 - 0.01, "min ratio {}", min_ratio(&rows));
    }

    #[test]
    fn sweep_matches_monte_carlo() {
        let c = two_peak();
        let m = 3;
        let exact = expected_revenue(&c, m).unwrap();
        let trials = 200_000u64;
        let mean: f64 = (0..trials)
            .map(|s| allocator::run(&c, m, s).revenue)
            .sum::<f64>()
            / trials as f64;
        let d = outcome_distribution(&c, m).unwrap();
        let var = d.revenue_second_moment(&c) - exact * exact;
        let sigma = (var / trials as f64).sqrt();
        assert!(
            (mean - exact).abs() <= 3.0 * sigma,
            "mean {mean} vs exact {exact} (3 sigma = {})",
            3.0 * sigma
        );
    }

    #[test]
    fn mixed_sweep_degenerate_and_single_copy() {
        let c = build_revenue_curve(&gen_spike(0.01, 40).unwrap()).unwrap();
        let pure = competitive_ratio_sweep(&c, 30).unwrap();
        let degenerate = mixed_strategy_sweep(&c, 30, 0.0).unwrap();
        assert_eq!(pure, degenerate);
        // M = 1: both branches sell the single copy.
        let mixed = mixed_strategy_sweep(&c, 1, 1.0 / 3.0).unwrap();
        assert_eq!(mixed[0].alg, c.f(1));
        assert!(mixed_strategy_sweep(&c, 3, 1.5).is_err());
    }

    #[test]
    fn smoothness_examples() {
        let mono = curve_from(&[("A", &[2.0; 5])]);
        assert_eq!(smoothness_bound(&find_critical_points(&mono)), 0.0);
        let c = two_peak();
        assert_eq!(smoothness_bound(&find_critical_points(&c)), 0.75);
    }

    #[test]
    fn large_instance_guard() {
        let f: Vec<f64> = (1..=10_001).map(|l| l as f64).collect();
        let c = RevenueCurve::from_table(&f).unwrap();
        assert!(matches!(outcome_distribution(&c, 5), Err(Error::InvalidConfig(_))));
    }
}
