//! Degree statistics for net-flow networks.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::StatError;
use crate::flows::{pearson, NetFlowNetwork};
use crate::model::{BankId, MoneyValue};

/// Per-bank in- and out-degrees of a net-flow network.
///
/// Both maps cover the same bank set; the sums of the two columns are each
/// equal to the edge count.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DegreeSequences {
    pub in_degree: BTreeMap<BankId, usize>,
    pub out_degree: BTreeMap<BankId, usize>,
}

/// Counts net-flow degrees per bank; banks from `banks` with no edges get 0.
pub fn degree_sequences(net: &NetFlowNetwork, banks: &BTreeSet<BankId>) -> DegreeSequences {
    let mut in_degree: BTreeMap<BankId, usize> =
        banks.iter().map(|b| (b.clone(), 0)).collect();
    let mut out_degree = in_degree.clone();
    for (source, destination) in net.net.keys() {
        *out_degree.entry(source.clone()).or_insert(0) += 1;
        *in_degree.entry(destination.clone()).or_insert(0) += 1;
    }
    DegreeSequences { in_degree, out_degree }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DegreeMode {
    In,
    Out,
}

/// Degree assortativity of a net-flow network: the Pearson correlation of the
/// chosen degree kind between the source and destination of every edge.
/// Errors when there are fewer than 2 edges or every endpoint has the same
/// degree (zero variance).
pub fn assortativity(net: &NetFlowNetwork, mode: DegreeMode) -> Result<f64, StatError> {
    if net.net.len() < 2 {
        return Err(StatError::TooFewSamples { need: 2, have: net.net.len() });
    }
    let endpoints: BTreeSet<BankId> = net
        .net
        .keys()
        .flat_map(|(s, d)| [s.clone(), d.clone()])
        .collect();
    let degrees = degree_sequences(net, &endpoints);
    let by_bank = match mode {
        DegreeMode::In => &degrees.in_degree,
        DegreeMode::Out => &degrees.out_degree,
    };

    let mut xs = Vec::with_capacity(net.net.len());
    let mut ys = Vec::with_capacity(net.net.len());
    for (source, destination) in net.net.keys() {
        xs.push(by_bank[source] as f64);
        ys.push(by_bank[destination] as f64);
    }
    pearson(&xs, &ys).map_err(|_| StatError::Degenerate { reason: "uniform degrees" })
}

/// Net value attached to nodes of each degree.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValueByDegree {
    /// in-degree → summed incoming net value of nodes with that in-degree
    pub incoming: BTreeMap<usize, MoneyValue>,
    /// out-degree → summed outgoing net value of nodes with that out-degree
    pub outgoing: BTreeMap<usize, MoneyValue>,
}

pub fn value_by_degree(net: &NetFlowNetwork) -> ValueByDegree {
    let mut in_deg: BTreeMap<&BankId, usize> = BTreeMap::new();
    let mut out_deg: BTreeMap<&BankId, usize> = BTreeMap::new();
    let mut in_val: BTreeMap<&BankId, MoneyValue> = BTreeMap::new();
    let mut out_val: BTreeMap<&BankId, MoneyValue> = BTreeMap::new();
    for ((source, destination), edge) in &net.net {
        *out_deg.entry(source).or_insert(0) += 1;
        *in_deg.entry(destination).or_insert(0) += 1;
        *out_val.entry(source).or_insert(MoneyValue::ZERO) += edge.value;
        *in_val.entry(destination).or_insert(MoneyValue::ZERO) += edge.value;
    }

    let mut incoming: BTreeMap<usize, MoneyValue> = BTreeMap::new();
    for (bank, degree) in &in_deg {
        *incoming.entry(*degree).or_insert(MoneyValue::ZERO) += in_val[bank];
    }
    let mut outgoing: BTreeMap<usize, MoneyValue> = BTreeMap::new();
    for (bank, degree) in &out_deg {
        *outgoing.entry(*degree).or_insert(MoneyValue::ZERO) += out_val[bank];
    }
    ValueByDegree { incoming, outgoing }
}
