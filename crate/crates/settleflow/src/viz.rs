//! Network drawing support: force-directed layout, minor-bank merging and
//! Graphviz export of net flow networks.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::flows::{net_imbalances, FlowEdge, NetFlowNetwork};
use crate::model::BankId;

/// Reserved node label for the merged remainder of a network.
pub const OTHERS_LABEL: &str = "others";

/// Node coordinates produced by [`layout_fr`] together with the parameters
/// that produced them. Coordinates are finite and pairwise distinct.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub positions: BTreeMap<BankId, (f64, f64)>,
    /// Ideal edge length of the force model; spring rest scale.
    pub ideal_edge: f64,
    pub iterations: usize,
    pub seed: u64,
    pub weighted: bool,
}

/// Fruchterman-Reingold layout of `banks` under the edges of `network`.
/// Every edge endpoint must be in `banks`. With `weighted` set, attraction
/// along an edge scales with the decimal log of its dollar value, pulling
/// heavily connected pairs closer. Deterministic in all arguments.
pub fn layout_fr(
    banks: &BTreeSet<BankId>,
    network: &NetFlowNetwork,
    weighted: bool,
    seed: u64,
    iterations: usize,
) -> Layout {
    assert!(!banks.is_empty(), "layout needs at least one node");
    let nodes: Vec<&BankId> = banks.iter().collect();
    let index: BTreeMap<&BankId, usize> =
        nodes.iter().enumerate().map(|(i, b)| (*b, i)).collect();
    let n = nodes.len();

    let mut edges: Vec<(usize, usize, f64)> = Vec::with_capacity(network.net.len());
    for ((src, dst), edge) in &network.net {
        let s = *index
            .get(src)
            .unwrap_or_else(|| panic!("edge endpoint {src} missing from bank set"));
        let d = *index
            .get(dst)
            .unwrap_or_else(|| panic!("edge endpoint {dst} missing from bank set"));
        let pull = if weighted {
            (1.0 + edge.value.dollars()).log10()
        } else {
            1.0
        };
        edges.push((s, d, pull));
    }

    let done = |positions: Vec<(f64, f64)>| Layout {
        positions: nodes
            .iter()
            .zip(&positions)
            .map(|(b, p)| ((*b).clone(), *p))
            .collect(),
        ideal_edge: IDEAL_EDGE,
        iterations,
        seed,
        weighted,
    };

    if n == 1 {
        return done(vec![(0.0, 0.0)]);
    }

    let frame = (n as f64).sqrt();
    let k = IDEAL_EDGE;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut pos: Vec<(f64, f64)> = (0..n)
        .map(|_| (rng.random::<f64>() * frame, rng.random::<f64>() * frame))
        .collect();

    let start_heat = frame / 2.0;
    let mut disp = vec![(0.0_f64, 0.0_f64); n];
    for iter in 0..iterations {
        let heat = start_heat * (1.0 - iter as f64 / iterations as f64);
        disp.iter_mut().for_each(|d| *d = (0.0, 0.0));

        for i in 0..n {
            for j in i + 1..n {
                let (dx, dy) = separation(pos[i], pos[j], i, j);
                let dist = (dx * dx + dy * dy).sqrt();
                let force = k * k / dist;
                let (ux, uy) = (dx / dist, dy / dist);
                disp[i].0 += ux * force;
                disp[i].1 += uy * force;
                disp[j].0 -= ux * force;
                disp[j].1 -= uy * force;
            }
        }

        for &(s, d, pull) in &edges {
            let (dx, dy) = separation(pos[s], pos[d], s, d);
            let dist = (dx * dx + dy * dy).sqrt();
            let force = dist * dist / k * pull;
            let (ux, uy) = (dx / dist, dy / dist);
            disp[s].0 -= ux * force;
            disp[s].1 -= uy * force;
            disp[d].0 += ux * force;
            disp[d].1 += uy * force;
        }

        for i in 0..n {
            let (dx, dy) = disp[i];
            let len = (dx * dx + dy * dy).sqrt();
            if len > 0.0 {
                let step = len.min(heat);
                pos[i].0 = (pos[i].0 + dx / len * step).clamp(0.0, frame);
                pos[i].1 = (pos[i].1 + dy / len * step).clamp(0.0, frame);
            }
        }
    }

    // Cooling can still leave frame-corner pileups; shear them apart so the
    // distinctness guarantee holds unconditionally.
    for i in 0..n {
        for j in i + 1..n {
            let (dx, dy) = (pos[i].0 - pos[j].0, pos[i].1 - pos[j].1);
            if (dx * dx + dy * dy).sqrt() < MIN_SEPARATION {
                pos[j].0 += (j + 1) as f64 * MIN_SEPARATION;
                pos[j].1 -= (j + 1) as f64 * MIN_SEPARATION;
            }
        }
    }
    for &(x, y) in &pos {
        assert!(x.is_finite() && y.is_finite(), "layout produced non-finite coordinate");
    }
    done(pos)
}

const IDEAL_EDGE: f64 = 1.0;
const MIN_SEPARATION: f64 = 1e-9;

/// Offset between two points, replaced by a deterministic index-derived nudge
/// when they coincide so force directions stay defined.
fn separation(a: (f64, f64), b: (f64, f64), ia: usize, ib: usize) -> (f64, f64) {
    let (dx, dy) = (a.0 - b.0, a.1 - b.1);
    if dx * dx + dy * dy < MIN_SEPARATION * MIN_SEPARATION {
        ((ia + 1) as f64 * 1e-6, (ib + 1) as f64 * 1e-6)
    } else {
        (dx, dy)
    }
}

/// Collapses every bank outside `keep` into a single `others` node. Edges
/// between kept banks are unchanged; flows between a kept bank and the
/// remainder are summed signed into at most one edge per kept bank; flows
/// inside the remainder disappear. Kept banks' imbalances and the zero sum
/// over all nodes are preserved, `others` absorbing the merged imbalances.
pub fn merge_others(network: &NetFlowNetwork, keep: &BTreeSet<BankId>) -> NetFlowNetwork {
    assert!(!keep.is_empty(), "keep set must name at least one bank");
    let others = BankId::new(OTHERS_LABEL).expect("reserved label is valid");
    assert!(
        network
            .net
            .keys()
            .all(|(s, d)| *s != others && *d != others),
        "network already contains a bank named {OTHERS_LABEL}"
    );

    let mut net: BTreeMap<(BankId, BankId), FlowEdge> = BTreeMap::new();
    // Signed value into each kept bank from the merged remainder.
    let mut toward: BTreeMap<&BankId, (i64, usize)> = BTreeMap::new();
    for ((src, dst), edge) in &network.net {
        match (keep.contains(src), keep.contains(dst)) {
            (true, true) => {
                net.insert((src.clone(), dst.clone()), *edge);
            }
            (false, true) => {
                let slot = toward.entry(dst).or_insert((0, 0));
                slot.0 += edge.value.cents;
                slot.1 += edge.tx_count;
            }
            (true, false) => {
                let slot = toward.entry(src).or_insert((0, 0));
                slot.0 -= edge.value.cents;
                slot.1 += edge.tx_count;
            }
            (false, false) => {}
        }
    }
    for (bank, (cents, tx_count)) in toward {
        let edge = FlowEdge {
            value: crate::model::MoneyValue::from_cents(cents.abs()),
            tx_count,
        };
        match cents.cmp(&0) {
            std::cmp::Ordering::Greater => {
                net.insert((others.clone(), bank.clone()), edge);
            }
            std::cmp::Ordering::Less => {
                net.insert((bank.clone(), others.clone()), edge);
            }
            std::cmp::Ordering::Equal => {}
        }
    }
    NetFlowNetwork {
        day: network.day,
        kind: network.kind,
        net,
    }
}

/// Graphviz source for `network` with nodes pinned at `layout` coordinates.
/// Node diameter and edge width grow with the decimal log of the million-
/// dollar imbalance and flow value; debtor banks are white, creditors grey.
/// The layout must cover every edge endpoint. Byte-deterministic.
pub fn export_dot(network: &NetFlowNetwork, layout: &Layout) -> String {
    let banks: BTreeSet<BankId> = network
        .net
        .keys()
        .flat_map(|(s, d)| [s.clone(), d.clone()])
        .collect();
    for bank in &banks {
        assert!(
            layout.positions.contains_key(bank),
            "layout missing node {bank}"
        );
    }
    let imbalance = net_imbalances(network, &banks);

    let mut out = String::new();
    out.push_str("digraph settlement {\n");
    out.push_str("  node [style=filled, fixedsize=true, color=black, fontsize=8];\n");
    for bank in &banks {
        let (x, y) = layout.positions[bank];
        let imb = imbalance.imbalance[bank];
        let diameter = 0.2 + 0.15 * (1.0 + imb.abs().dollars() / 1e6).log10();
        let fill = if imb.cents < 0 { "white" } else { "grey" };
        writeln!(
            out,
            "  {} [pos=\"{:.4},{:.4}!\", width={:.3}, height={:.3}, fillcolor={}];",
            quote(bank.as_str()),
            x,
            y,
            diameter,
            diameter,
            fill
        )
        .expect("write to string");
    }
    for ((src, dst), edge) in &network.net {
        let penwidth = 0.5 + 0.75 * (1.0 + edge.value.dollars() / 1e6).log10();
        writeln!(
            out,
            "  {} -> {} [penwidth={:.3}];",
            quote(src.as_str()),
            quote(dst.as_str()),
            penwidth
        )
        .expect("write to string");
    }
    out.push_str("}\n");
    out
}

fn quote(label: &str) -> String {
    format!("\"{}\"", label.replace('\\', "\\\\").replace('"', "\\\""))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flows::FlowKind;
    use crate::model::MoneyValue;

    fn bank(label: &str) -> BankId {
        BankId::new(label).unwrap()
    }

    fn net_of(edges: &[(&str, &str, i64)]) -> NetFlowNetwork {
        let net = edges
            .iter()
            .map(|&(s, d, dollars)| {
                (
                    (bank(s), bank(d)),
                    FlowEdge {
                        value: MoneyValue::from_dollars(dollars),
                        tx_count: 1,
                    },
                )
            })
            .collect();
        NetFlowNetwork {
            day: 0,
            kind: FlowKind::Nonloan,
            net,
        }
    }

    fn banks_of(labels: &[&str]) -> BTreeSet<BankId> {
        labels.iter().map(|l| bank(l)).collect()
    }

    fn distance(layout: &Layout, a: &str, b: &str) -> f64 {
        let (ax, ay) = layout.positions[&bank(a)];
        let (bx, by) = layout.positions[&bank(b)];
        ((ax - bx).powi(2) + (ay - by).powi(2)).sqrt()
    }

    #[test]
    fn single_node_sits_at_origin() {
        let layout = layout_fr(&banks_of(&["A"]), &net_of(&[]), false, 7, 300);
        assert_eq!(layout.positions[&bank("A")], (0.0, 0.0));
    }

    #[test]
    fn connected_pair_settles_near_ideal_edge() {
        let net = net_of(&[("A", "B", 1_000_000)]);
        for seed in [0, 1, 2, 3, 4] {
            let layout = layout_fr(&banks_of(&["A", "B"]), &net, false, seed, 300);
            let d = distance(&layout, "A", "B");
            assert!(
                (d - layout.ideal_edge).abs() <= 0.2 * layout.ideal_edge,
                "seed {seed}: pair distance {d} strays from ideal edge"
            );
        }
    }

    #[test]
    fn weighted_layout_pulls_heavy_pair_closest() {
        let net = net_of(&[
            ("A", "B", 1_000_000_000),
            ("B", "C", 1_000),
            ("A", "C", 1_000),
        ]);
        let banks = banks_of(&["A", "B", "C"]);
        for seed in [0, 1, 2] {
            let layout = layout_fr(&banks, &net, true, seed, 300);
            let heavy = distance(&layout, "A", "B");
            assert!(heavy < distance(&layout, "B", "C"), "seed {seed}");
            assert!(heavy < distance(&layout, "A", "C"), "seed {seed}");
        }
    }

    #[test]
    fn layout_is_deterministic_finite_and_distinct() {
        let net = net_of(&[("A", "B", 500), ("C", "D", 80_000), ("B", "C", 120)]);
        let banks = banks_of(&["A", "B", "C", "D", "E"]);
        let first = layout_fr(&banks, &net, true, 42, 300);
        let second = layout_fr(&banks, &net, true, 42, 300);
        assert_eq!(first, second);
        let coords: Vec<(f64, f64)> = first.positions.values().copied().collect();
        for (i, &(x, y)) in coords.iter().enumerate() {
            assert!(x.is_finite() && y.is_finite());
            for &(ox, oy) in &coords[i + 1..] {
                let d = ((x - ox).powi(2) + (y - oy).powi(2)).sqrt();
                assert!(d > 0.0, "two nodes coincide");
            }
        }
    }

    #[test]
    fn zero_iterations_keeps_seeded_placement_valid() {
        let net = net_of(&[("A", "B", 500)]);
        let layout = layout_fr(&banks_of(&["A", "B"]), &net, false, 3, 0);
        for &(x, y) in layout.positions.values() {
            assert!(x.is_finite() && y.is_finite());
        }
    }

    #[test]
    #[should_panic(expected = "missing from bank set")]
    fn layout_rejects_uncovered_endpoint() {
        layout_fr(&banks_of(&["A"]), &net_of(&[("A", "B", 10)]), false, 0, 10);
    }

    #[test]
    fn merge_sums_remainder_flows_signed() {
        let net = net_of(&[("A", "X", 100), ("X", "B", 40)]);
        let merged = merge_others(&net, &banks_of(&["A", "B"]));

        let others = bank(OTHERS_LABEL);
        assert_eq!(merged.net.len(), 2);
        assert_eq!(
            merged.net[&(bank("A"), others.clone())].value,
            MoneyValue::from_dollars(100)
        );
        assert_eq!(
            merged.net[&(others.clone(), bank("B"))].value,
            MoneyValue::from_dollars(40)
        );

        let banks: BTreeSet<BankId> = banks_of(&["A", "B", OTHERS_LABEL]);
        let imb = net_imbalances(&merged, &banks);
        assert_eq!(imb.imbalance[&bank("A")], MoneyValue::from_dollars(-100));
        assert_eq!(imb.imbalance[&bank("B")], MoneyValue::from_dollars(40));
        assert_eq!(imb.imbalance[&others], MoneyValue::from_dollars(60));
    }

    #[test]
    fn merge_keeping_every_bank_is_identity() {
        let net = net_of(&[("A", "B", 100), ("B", "C", 40), ("C", "A", 7)]);
        let merged = merge_others(&net, &banks_of(&["A", "B", "C"]));
        assert_eq!(merged, net);
    }

    #[test]
    fn merge_drops_exactly_cancelling_remainder_flows() {
        let net = net_of(&[("A", "X", 100), ("Y", "A", 100), ("X", "Y", 5)]);
        let merged = merge_others(&net, &banks_of(&["A"]));
        assert!(merged.net.is_empty());
    }

    #[test]
    fn merge_preserves_kept_imbalances_and_zero_sum() {
        let net = net_of(&[
            ("A", "B", 130),
            ("A", "X", 75),
            ("X", "B", 20),
            ("Y", "A", 300),
            ("X", "Y", 45),
            ("B", "Y", 15),
        ]);
        let keep = banks_of(&["A", "B"]);
        let all = banks_of(&["A", "B", "X", "Y"]);
        let before = net_imbalances(&net, &all);

        let merged = merge_others(&net, &keep);
        let mut merged_banks = keep.clone();
        merged_banks.insert(bank(OTHERS_LABEL));
        let after = net_imbalances(&merged, &merged_banks);

        for b in &keep {
            assert_eq!(after.imbalance[b], before.imbalance[b]);
        }
        let total: i64 = after.imbalance.values().map(|v| v.cents).sum();
        assert_eq!(total, 0);
        assert_eq!(
            merged.net[&(bank("A"), bank("B"))],
            net.net[&(bank("A"), bank("B"))]
        );
    }

    #[test]
    #[should_panic(expected = "keep set must name")]
    fn merge_rejects_empty_keep_set() {
        merge_others(&net_of(&[("A", "B", 10)]), &BTreeSet::new());
    }

    #[test]
    fn dot_export_is_byte_deterministic() {
        let net = net_of(&[("A", "B", 2_000_000), ("B", "C", 40)]);
        let banks = banks_of(&["A", "B", "C"]);
        let layout = layout_fr(&banks, &net, false, 9, 120);
        assert_eq!(export_dot(&net, &layout), export_dot(&net, &layout));
    }

    #[test]
    fn dot_marks_debtors_white_and_creditors_grey() {
        let net = net_of(&[("A", "B", 5_000_000_000)]);
        let banks = banks_of(&["A", "B"]);
        let layout = layout_fr(&banks, &net, false, 1, 60);
        let dot = export_dot(&net, &layout);
        let node_a = dot.lines().find(|l| l.trim_start().starts_with("\"A\" [")).unwrap();
        let node_b = dot.lines().find(|l| l.trim_start().starts_with("\"B\" [")).unwrap();
        assert!(node_a.contains("fillcolor=white"), "{node_a}");
        assert!(node_b.contains("fillcolor=grey"), "{node_b}");
        // 5e9 dollars: diameter 0.2 + 0.15 log10(1 + 5000), width 0.5 + 0.75 log10(1 + 5000).
        assert!(node_a.contains("width=0.755"), "{node_a}");
        let edge = dot.lines().find(|l| l.contains("->")).unwrap();
        assert!(edge.contains("penwidth=3.274"), "{edge}");
    }

    #[test]
    fn empty_network_exports_valid_empty_graph() {
        let net = net_of(&[]);
        let layout = Layout {
            positions: BTreeMap::new(),
            ideal_edge: 1.0,
            iterations: 0,
            seed: 0,
            weighted: false,
        };
        let dot = export_dot(&net, &layout);
        let (nodes, edges) = parse_dot(&dot);
        assert!(nodes.is_empty());
        assert!(edges.is_empty());
    }

    #[test]
    fn dot_round_trips_through_parser() {
        let net = net_of(&[
            ("A", "X", 75),
            ("X", "B", 20),
            ("Y", "A", 300),
            ("B", "Y", 15),
        ]);
        let merged = merge_others(&net, &banks_of(&["A", "B"]));
        let mut banks = banks_of(&["A", "B"]);
        banks.insert(bank(OTHERS_LABEL));
        let layout = layout_fr(&banks, &merged, true, 4, 200);
        let dot = export_dot(&merged, &layout);

        let (nodes, edges) = parse_dot(&dot);
        let expected_nodes: BTreeSet<String> = merged
            .net
            .keys()
            .flat_map(|(s, d)| [s.as_str().to_owned(), d.as_str().to_owned()])
            .collect();
        assert_eq!(nodes, expected_nodes);
        let expected_edges: BTreeSet<(String, String)> = merged
            .net
            .keys()
            .map(|(s, d)| (s.as_str().to_owned(), d.as_str().to_owned()))
            .collect();
        assert_eq!(edges, expected_edges);
    }

    /// Minimal DOT reader for the exact shape this module emits: quoted
    /// identifiers, one statement per line, attribute lists in brackets.
    fn parse_dot(dot: &str) -> (BTreeSet<String>, BTreeSet<(String, String)>) {
        let mut lines = dot.lines();
        assert_eq!(lines.next(), Some("digraph settlement {"));
        let mut body: Vec<&str> = lines.collect();
        assert_eq!(body.pop(), Some("}"));

        let mut nodes = BTreeSet::new();
        let mut edges = BTreeSet::new();
        for line in body {
            let line = line.trim();
            assert!(line.ends_with("];"), "statement not closed: {line}");
            if line.starts_with("node ") {
                continue;
            }
            let (head, attrs) = line.split_once('[').expect("attribute list");
            let attrs = attrs.trim_end_matches("];");
            for pair in split_attrs(attrs) {
                assert!(pair.contains('='), "malformed attribute: {pair}");
            }
            let head = head.trim();
            if let Some((src, dst)) = head.split_once("->") {
                edges.insert((unquote(src.trim()), unquote(dst.trim())));
            } else {
                nodes.insert(unquote(head));
            }
        }
        (nodes, edges)
    }

    /// Splits on commas outside quotes.
    fn split_attrs(attrs: &str) -> Vec<String> {
        let mut parts = Vec::new();
        let mut current = String::new();
        let mut in_quotes = false;
        for ch in attrs.chars() {
            match ch {
                '"' => {
                    in_quotes = !in_quotes;
                    current.push(ch);
                }
                ',' if !in_quotes => {
                    parts.push(current.trim().to_owned());
                    current.clear();
                }
                _ => current.push(ch),
            }
        }
        if !current.trim().is_empty() {
            parts.push(current.trim().to_owned());
        }
        parts
    }

    fn unquote(token: &str) -> String {
        let inner = token
            .strip_prefix('"')
            .and_then(|t| t.strip_suffix('"'))
            .unwrap_or_else(|| panic!("identifier not quoted: {token}"));
        inner.replace("\\\"", "\"").replace("\\\\", "\\")
    }
}
