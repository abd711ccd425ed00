//! Daily flow networks, imbalances, net flows, persistence, and the
//! correlation diagnostics that relate loan activity to payment imbalances.

use std::collections::{BTreeMap, BTreeSet};

use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use serde::Serialize;
use thiserror::Error;

use crate::model::{BankId, MoneyValue, Transaction};
use crate::stats::LinearFit;

/// Transaction class a network was built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FlowKind {
    Loan,
    Nonloan,
}

impl FlowKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FlowKind::Loan => "loan",
            FlowKind::Nonloan => "nonloan",
        }
    }
}

impl std::fmt::Display for FlowKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Aggregated value and transaction count of one directed bank pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FlowEdge {
    pub value: MoneyValue,
    pub tx_count: usize,
}

/// All flows of one day and kind. Pairs with no transactions are absent, so
/// every stored edge has positive value and count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowNetwork {
    pub day: usize,
    pub kind: FlowKind,
    pub flows: BTreeMap<(BankId, BankId), FlowEdge>,
}

/// Signed pairwise differences of opposing flows: at most one direction per
/// unordered pair, carrying the absolute value difference and the transaction
/// count of both directions. Pairs whose flows cancel exactly are absent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetFlowNetwork {
    pub day: usize,
    pub kind: FlowKind,
    pub net: BTreeMap<(BankId, BankId), FlowEdge>,
}

/// Per-bank signed value imbalance (incoming minus outgoing) for one day and
/// kind. The values sum to zero exactly: every transaction credits one bank
/// and debits another.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImbalanceTable {
    pub day: usize,
    pub kind: FlowKind,
    pub imbalance: BTreeMap<BankId, MoneyValue>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError {
    #[error("series length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("need at least {need} points, got {have}")]
    TooFewPoints { need: usize, have: usize },
    #[error("correlation undefined: a series has zero variance")]
    ZeroVariance,
    #[error("flow vector has zero norm")]
    ZeroVector,
    #[error("flow vectors were built over different bank sets")]
    BasisMismatch,
    #[error("orthogonal fit is degenerate: {reason}")]
    DegenerateFit { reason: &'static str },
    #[error("orthogonal fit is vertical; slope is unbounded")]
    VerticalFit,
}

/// Sums one day's transactions into a flow network with exact totals.
///
/// Every transaction must carry the given day index.
pub fn aggregate_flows(day: usize, transactions: &[Transaction], kind: FlowKind) -> FlowNetwork {
    let mut flows: BTreeMap<(BankId, BankId), FlowEdge> = BTreeMap::new();
    for tx in transactions {
        assert_eq!(tx.day, day, "transaction from day {} in day {day} aggregation", tx.day);
        let edge = flows
            .entry((tx.source.clone(), tx.destination.clone()))
            .or_insert(FlowEdge { value: MoneyValue::ZERO, tx_count: 0 });
        edge.value += tx.value;
        edge.tx_count += 1;
    }
    FlowNetwork { day, kind, flows }
}

/// Per-bank incoming minus outgoing value. `banks` is the alignment universe:
/// banks with no activity stay in the table with zero imbalance.
pub fn imbalances(network: &FlowNetwork, banks: &BTreeSet<BankId>) -> ImbalanceTable {
    imbalance_of_edges(network.day, network.kind, &network.flows, banks)
}

/// Imbalances recomputed from a net-flow network; identical to the raw-flow
/// imbalances because opposing flows cancel pairwise.
pub fn net_imbalances(network: &NetFlowNetwork, banks: &BTreeSet<BankId>) -> ImbalanceTable {
    imbalance_of_edges(network.day, network.kind, &network.net, banks)
}

fn imbalance_of_edges(
    day: usize,
    kind: FlowKind,
    edges: &BTreeMap<(BankId, BankId), FlowEdge>,
    banks: &BTreeSet<BankId>,
) -> ImbalanceTable {
    let mut imbalance: BTreeMap<BankId, MoneyValue> =
        banks.iter().map(|b| (b.clone(), MoneyValue::ZERO)).collect();
    for ((source, destination), edge) in edges {
        *imbalance.entry(source.clone()).or_insert(MoneyValue::ZERO) -= edge.value;
        *imbalance.entry(destination.clone()).or_insert(MoneyValue::ZERO) += edge.value;
    }
    ImbalanceTable { day, kind, imbalance }
}

/// Collapses opposing flows into signed net flows.
///
/// For each unordered pair the stronger direction survives with the value
/// difference; the transaction count sums both directions. Exact ties
/// produce no edge.
pub fn net_flows(network: &FlowNetwork) -> NetFlowNetwork {
    let mut net = BTreeMap::new();
    for ((source, destination), edge) in &network.flows {
        let reverse = network.flows.get(&(destination.clone(), source.clone()));
        if source > destination && reverse.is_some() {
            continue; // handled when visiting the lexicographically first direction
        }
        let (rev_value, rev_count) =
            reverse.map_or((MoneyValue::ZERO, 0), |e| (e.value, e.tx_count));
        let diff = edge.value - rev_value;
        let tx_count = edge.tx_count + rev_count;
        if diff.is_positive() {
            net.insert((source.clone(), destination.clone()), FlowEdge { value: diff, tx_count });
        } else if diff.is_negative() {
            net.insert((destination.clone(), source.clone()), FlowEdge { value: -diff, tx_count });
        }
    }
    NetFlowNetwork { day: network.day, kind: network.kind, net }
}

/// Flow pairs present on two consecutive days, with the share of the day's
/// flow count and of each day's total value they carry.
#[derive(Debug, Clone, PartialEq)]
pub struct Persistence {
    pub persistent: BTreeSet<(BankId, BankId)>,
    pub fraction_count: f64,
    pub fraction_value_d: f64,
    pub fraction_value_d1: f64,
}

/// Persistence of flows between a day's network and the next day's, either
/// raw or net. Fractions are 0 when the first day is empty.
pub fn persistence(
    day_edges: &BTreeMap<(BankId, BankId), FlowEdge>,
    next_edges: &BTreeMap<(BankId, BankId), FlowEdge>,
) -> Persistence {
    let persistent: BTreeSet<(BankId, BankId)> =
        day_edges.keys().filter(|k| next_edges.contains_key(*k)).cloned().collect();

    let value_of = |edges: &BTreeMap<(BankId, BankId), FlowEdge>, only_persistent: bool| {
        edges
            .iter()
            .filter(|(k, _)| !only_persistent || persistent.contains(*k))
            .map(|(_, e)| e.value)
            .sum::<MoneyValue>()
    };

    let frac = |num: MoneyValue, den: MoneyValue| {
        if den == MoneyValue::ZERO { 0.0 } else { num.cents as f64 / den.cents as f64 }
    };

    let fraction_count = if day_edges.is_empty() {
        0.0
    } else {
        persistent.len() as f64 / day_edges.len() as f64
    };
    Persistence {
        fraction_count,
        fraction_value_d: frac(value_of(day_edges, true), value_of(day_edges, false)),
        fraction_value_d1: frac(value_of(next_edges, true), value_of(next_edges, false)),
        persistent,
    }
}

/// Dense day vector over the fixed enumeration of ordered bank pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowVector {
    pub day: usize,
    pub banks: Vec<BankId>,
    pub entries: Vec<f64>,
}

/// Lays a day's flows out over the ordered-pair enumeration of `banks`
/// (lexicographic source-major), with zeros where no flow exists.
pub fn flow_vector(network: &FlowNetwork, banks: &BTreeSet<BankId>) -> FlowVector {
    let ordered: Vec<BankId> = banks.iter().cloned().collect();
    let index: BTreeMap<&BankId, usize> =
        ordered.iter().enumerate().map(|(i, b)| (b, i)).collect();
    let b = ordered.len();
    let mut entries = vec![0.0; b.saturating_sub(1) * b];
    for ((source, destination), edge) in &network.flows {
        let (si, di) = (index[source], index[destination]);
        let slot = si * (b - 1) + if di < si { di } else { di - 1 };
        entries[slot] = edge.value.cents as f64;
    }
    FlowVector { day: network.day, banks: ordered, entries }
}

/// Euclidean distance between the two days' direction vectors after
/// normalization. With `persistent_only`, entries that are zero on either day
/// are zeroed on both before normalizing.
pub fn flow_distance(a: &FlowVector, b: &FlowVector, persistent_only: bool) -> Result<f64, FlowError> {
    if a.banks != b.banks {
        return Err(FlowError::BasisMismatch);
    }
    let mut va = a.entries.clone();
    let mut vb = b.entries.clone();
    if persistent_only {
        for (x, y) in va.iter_mut().zip(vb.iter_mut()) {
            if *x == 0.0 || *y == 0.0 {
                *x = 0.0;
                *y = 0.0;
            }
        }
    }
    normalize(&mut va)?;
    normalize(&mut vb)?;
    Ok(va.iter().zip(&vb).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
}

fn normalize(v: &mut [f64]) -> Result<(), FlowError> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(FlowError::ZeroVector);
    }
    for x in v.iter_mut() {
        *x /= norm;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BaselineStats {
    pub mean: f64,
    pub std: f64,
}

/// Monte Carlo distance between independent random direction vectors: each
/// trial draws two n-dimensional vectors with i.i.d. uniform(0,1) entries,
/// normalizes them, and measures their Euclidean distance.
pub fn random_flow_distance_baseline(n: usize, trials: usize, seed: u64) -> BaselineStats {
    assert!(n >= 2, "baseline needs dimension >= 2");
    assert!(trials >= 1, "baseline needs at least one trial");
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut distances = Vec::with_capacity(trials);
    let mut va = vec![0.0; n];
    let mut vb = vec![0.0; n];
    for _ in 0..trials {
        for x in va.iter_mut() {
            *x = rng.random();
        }
        for x in vb.iter_mut() {
            *x = rng.random();
        }
        normalize(&mut va).expect("uniform vector has positive norm");
        normalize(&mut vb).expect("uniform vector has positive norm");
        let d2: f64 = va.iter().zip(&vb).map(|(x, y)| (x - y) * (x - y)).sum();
        distances.push(d2.sqrt());
    }
    let mean = distances.iter().sum::<f64>() / trials as f64;
    let var = if trials < 2 {
        0.0
    } else {
        distances.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (trials - 1) as f64
    };
    BaselineStats { mean, std: var.sqrt() }
}

/// Sample Pearson correlation. Errors on length mismatch, fewer than two
/// points, or an exactly constant series.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, FlowError> {
    if x.len() != y.len() {
        return Err(FlowError::LengthMismatch { left: x.len(), right: y.len() });
    }
    if x.len() < 2 {
        return Err(FlowError::TooFewPoints { need: 2, have: x.len() });
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (a, b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(FlowError::ZeroVariance);
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Correlation between per-bank loan and nonloan imbalances on one day.
/// Banks missing from either table count as zero.
pub fn imbalance_correlation(
    loan: &ImbalanceTable,
    nonloan: &ImbalanceTable,
) -> Result<f64, FlowError> {
    debug_assert_eq!(loan.day, nonloan.day, "tables from different days");
    let banks: BTreeSet<&BankId> = loan.imbalance.keys().chain(nonloan.imbalance.keys()).collect();
    let mut xs = Vec::with_capacity(banks.len());
    let mut ys = Vec::with_capacity(banks.len());
    for bank in banks {
        xs.push(nonloan.imbalance.get(bank).copied().unwrap_or(MoneyValue::ZERO).dollars());
        ys.push(loan.imbalance.get(bank).copied().unwrap_or(MoneyValue::ZERO).dollars());
    }
    pearson(&xs, &ys)
}

/// Correlation between a bank's total nonloan turnover (incoming plus
/// outgoing value) and the magnitude of its loan imbalance.
pub fn size_tolerance_correlation(
    loan: &ImbalanceTable,
    nonloan: &FlowNetwork,
) -> Result<f64, FlowError> {
    debug_assert_eq!(loan.day, nonloan.day, "inputs from different days");
    let mut turnover: BTreeMap<&BankId, MoneyValue> =
        loan.imbalance.keys().map(|b| (b, MoneyValue::ZERO)).collect();
    for ((source, destination), edge) in &nonloan.flows {
        *turnover.entry(source).or_insert(MoneyValue::ZERO) += edge.value;
        *turnover.entry(destination).or_insert(MoneyValue::ZERO) += edge.value;
    }
    let mut xs = Vec::with_capacity(turnover.len());
    let mut ys = Vec::with_capacity(turnover.len());
    for (bank, total) in &turnover {
        xs.push(total.dollars());
        ys.push(loan.imbalance.get(bank).copied().unwrap_or(MoneyValue::ZERO).abs().dollars());
    }
    pearson(&xs, &ys)
}

/// Weighted total-least-squares line through value pairs, in dollars.
///
/// Minimizes weighted squared orthogonal distances with weights
/// w = log10(1 + sqrt(|x·y|)), which emphasizes pairs where both values are
/// large. Errors when the weighted points are collinear vertically or carry
/// no spread at all.
pub fn weighted_orthogonal_fit(points: &[(f64, f64)]) -> Result<LinearFit, FlowError> {
    if points.len() < 2 {
        return Err(FlowError::TooFewPoints { need: 2, have: points.len() });
    }
    let first = points[0];
    if points.iter().all(|p| *p == first) {
        return Err(FlowError::DegenerateFit { reason: "all points coincide" });
    }
    if points.iter().all(|(x, _)| *x == first.0) {
        return Err(FlowError::VerticalFit);
    }
    let weights: Vec<f64> = points.iter().map(|(x, y)| (1.0 + (x * y).abs().sqrt()).log10()).collect();
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(FlowError::DegenerateFit { reason: "all points carry zero weight" });
    }

    let mx = points.iter().zip(&weights).map(|((x, _), w)| w * x).sum::<f64>() / total;
    let my = points.iter().zip(&weights).map(|((_, y), w)| w * y).sum::<f64>() / total;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for ((x, y), w) in points.iter().zip(&weights) {
        let dx = x - mx;
        let dy = y - my;
        sxx += w * dx * dx;
        syy += w * dy * dy;
        sxy += w * dx * dy;
    }

    if sxx == 0.0 && syy == 0.0 {
        return Err(FlowError::DegenerateFit { reason: "all weighted points coincide" });
    }
    let slope = if sxy == 0.0 {
        if syy > sxx {
            return Err(FlowError::VerticalFit);
        }
        0.0
    } else {
        let half = (syy - sxx) / (2.0 * sxy);
        let root = (half * half + 1.0).sqrt();
        let m1 = half + root;
        let m2 = half - root;
        let objective = |m: f64| {
            let c = my - m * mx;
            points
                .iter()
                .zip(&weights)
                .map(|((x, y), w)| {
                    let r = y - m * x - c;
                    w * r * r
                })
                .sum::<f64>()
                / (1.0 + m * m)
        };
        if objective(m1) <= objective(m2) { m1 } else { m2 }
    };
    Ok(LinearFit { intercept: my - slope * mx, slope })
}
