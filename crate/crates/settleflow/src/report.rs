//! Assembles the full analysis of one week into a serializable report.
//!
//! Every number in the report comes from exactly one library operation, so
//! each section can be reproduced in isolation. Real numbers are rounded to
//! six significant digits before serialization and money stays in integer
//! cents, which keeps the JSON byte-deterministic and diff-friendly.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use crate::flows::{
    aggregate_flows, flow_distance, flow_vector, imbalance_correlation, imbalances, net_flows,
    persistence, random_flow_distance_baseline, size_tolerance_correlation,
    weighted_orthogonal_fit, FlowKind, FlowNetwork, ImbalanceTable, NetFlowNetwork,
};
use crate::loans::{extract_loans, LoanExtractionResult, MatchParams};
use crate::loans::{estimate_contamination, loan_rate_stats, rate_value_fit};
use crate::model::{dataset_totals, validate, WeekDataset};
use crate::stats::{
    ad_exponential_test, assortativity, degree_sequences, fit_gmm, fit_power_law,
    ks_two_sample, log_binned_histogram, value_by_degree, DegreeMode,
};

pub const SCHEMA_VERSION: u32 = 1;

/// Ratio between consecutive bin edges of the net-edge count histograms.
const COUNT_BIN_RATIO: f64 = 2.0;
/// Trials behind the random-direction distance baseline.
pub const BASELINE_TRIALS: usize = 1000;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("input fails validation: {0}")]
    InvalidWeek(String),
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub schema_version: u32,
    pub seed: u64,
    pub params: ReportParams,
    pub daily: Vec<DailySection>,
    pub loans: LoanSection,
    pub imbalances: ImbalanceSection,
    pub flows: FlowSection,
    pub networks: NetworkGroup,
}

/// Extraction and estimation settings the report was produced under.
#[derive(Debug, Clone, Serialize)]
pub struct ReportParams {
    pub target_rate_percent: f64,
    pub rate_band: f64,
    pub min_loan_value_cents: i64,
    pub max_term_days: usize,
    pub baseline_trials: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct MixtureRow {
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
    pub weights: Vec<f64>,
    pub log_likelihood: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct DailySection {
    pub day: usize,
    pub volume: usize,
    pub total_value_cents: i64,
    /// Two-component mixture over decimal logs of dollar values.
    pub value_mixture: Option<MixtureRow>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DayLoanRow {
    pub day: usize,
    pub volume: usize,
    pub total_value_cents: i64,
    pub loan_count: usize,
    pub loan_value_cents: i64,
    pub loan_fraction: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RateRow {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LinearRow {
    pub intercept: f64,
    pub slope: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ContaminationRow {
    pub in_box: usize,
    pub side_band: usize,
    pub expected_accidental: f64,
    pub fraction: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LoanSection {
    pub per_day: Vec<DayLoanRow>,
    pub total_count: usize,
    pub total_value_cents: i64,
    pub count_by_term: BTreeMap<usize, usize>,
    pub rate: Option<RateRow>,
    /// Rate against decimal log of principal in millions of dollars.
    pub rate_value_fit: Option<LinearRow>,
    pub contamination: ContaminationRow,
}

#[derive(Debug, Clone, Serialize)]
pub struct DayImbalanceRow {
    pub day: usize,
    pub nonloan_cents: BTreeMap<String, i64>,
    pub loan_cents: BTreeMap<String, i64>,
    pub correlation: Option<f64>,
    pub size_tolerance: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ImbalanceSection {
    pub per_day: Vec<DayImbalanceRow>,
    /// Orthogonal fit of loan on nonloan imbalances pooled over days.
    pub compensation_fit: Option<LinearRow>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PersistenceNums {
    pub persistent_pairs: usize,
    pub fraction_count: f64,
    pub fraction_value_day: f64,
    pub fraction_value_next: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PersistenceRow {
    pub day: usize,
    pub next_day: usize,
    pub kind: FlowKind,
    pub raw: PersistenceNums,
    pub net: PersistenceNums,
}

#[derive(Debug, Clone, Serialize)]
pub struct DistanceRow {
    pub day_a: usize,
    pub day_b: usize,
    pub kind: FlowKind,
    pub all_flows: Option<f64>,
    pub persistent_flows: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BaselineRow {
    pub dimension: usize,
    pub trials: usize,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FlowSection {
    pub persistence: Vec<PersistenceRow>,
    pub distances: Vec<DistanceRow>,
    pub baseline: BaselineRow,
}

#[derive(Debug, Clone, Serialize)]
pub struct AdRow {
    pub statistic: f64,
    pub corrected_statistic: f64,
    pub reject_at_5pct: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct PowerLawRow {
    pub exponent: f64,
    pub stderr: f64,
    pub range: (f64, f64),
}

#[derive(Debug, Clone, Serialize)]
pub struct NetworkSection {
    pub day: usize,
    pub kind: FlowKind,
    pub edge_count: usize,
    pub total_value_cents: i64,
    /// Two-component mixture over decimal logs of net edge dollar values.
    pub value_mixture: Option<MixtureRow>,
    /// Power law fitted to the log-binned histogram of per-edge counts.
    pub count_power_law: Option<PowerLawRow>,
    /// Exponentiality test of the per-edge count distribution.
    pub count_ad_test: Option<AdRow>,
    pub assortativity_in: Option<f64>,
    pub assortativity_out: Option<f64>,
    pub in_degree: BTreeMap<String, usize>,
    pub out_degree: BTreeMap<String, usize>,
    pub value_by_in_degree_cents: BTreeMap<usize, i64>,
    pub value_by_out_degree_cents: BTreeMap<usize, i64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct KsRow {
    pub day_a: usize,
    pub day_b: usize,
    pub kind: FlowKind,
    pub statistic: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct NetworkGroup {
    pub per_day: Vec<NetworkSection>,
    /// Pairwise comparison of per-edge count distributions across days.
    pub count_ks: Vec<KsRow>,
}

/// Rounds to six significant digits; exact zero and non-finite pass through.
fn sig6(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.5e}").parse().expect("scientific form parses")
}

fn mixture_row(values: &[f64], seed: u64) -> Option<MixtureRow> {
    let fit = fit_gmm(values, 2, seed).ok()?;
    Some(MixtureRow {
        means: fit.components.iter().map(|c| sig6(c.mean)).collect(),
        variances: fit.components.iter().map(|c| sig6(c.variance)).collect(),
        weights: fit.components.iter().map(|c| sig6(c.weight)).collect(),
        log_likelihood: sig6(fit.log_likelihood),
        iterations: fit.iterations,
    })
}

fn log_dollar_values<'a>(txs: impl Iterator<Item = &'a crate::model::Transaction>) -> Vec<f64> {
    txs.map(|tx| tx.value.dollars().log10()).collect()
}

/// Per-day totals and value mixture fits over the raw log.
pub fn daily_sections(week: &WeekDataset, seed: u64) -> Vec<DailySection> {
    dataset_totals(week)
        .into_iter()
        .map(|totals| {
            let values = log_dollar_values(week.days[totals.day].iter());
            DailySection {
                day: totals.day,
                volume: totals.volume,
                total_value_cents: totals.total_value.cents,
                value_mixture: mixture_row(&values, seed),
            }
        })
        .collect()
}

/// Loan extraction summary including contamination of the matching box.
pub fn loan_section(
    week: &WeekDataset,
    extraction: &LoanExtractionResult,
    params: &MatchParams,
) -> LoanSection {
    let per_day = extraction
        .daily
        .iter()
        .map(|d| DayLoanRow {
            day: d.day,
            volume: d.volume,
            total_value_cents: d.total_value.cents,
            loan_count: d.loan_count,
            loan_value_cents: d.loan_value.cents,
            loan_fraction: sig6(d.loan_fraction),
        })
        .collect();
    let mut count_by_term = BTreeMap::new();
    for loan in &extraction.loans {
        *count_by_term.entry(loan.term_days).or_insert(0usize) += 1;
    }
    let contamination = estimate_contamination(week, params);
    LoanSection {
        per_day,
        total_count: extraction.loans.len(),
        total_value_cents: extraction.loans.iter().map(|l| l.first_leg.value.cents).sum(),
        count_by_term,
        rate: loan_rate_stats(&extraction.loans)
            .ok()
            .map(|r| RateRow { mean: sig6(r.mean), std: sig6(r.std) }),
        rate_value_fit: rate_value_fit(&extraction.loans)
            .ok()
            .map(|f| LinearRow { intercept: sig6(f.intercept), slope: sig6(f.slope) }),
        contamination: ContaminationRow {
            in_box: contamination.in_box,
            side_band: contamination.side_band,
            expected_accidental: sig6(contamination.expected_accidental),
            fraction: sig6(contamination.fraction),
        },
    }
}

fn table_cents(table: &ImbalanceTable) -> BTreeMap<String, i64> {
    table
        .imbalance
        .iter()
        .map(|(bank, value)| (bank.as_str().to_owned(), value.cents))
        .collect()
}

/// Loan first legs and residual nonloans per day; `None` outside 0..days.
fn day_networks(
    week: &WeekDataset,
    extraction: &LoanExtractionResult,
) -> Vec<(FlowNetwork, FlowNetwork)> {
    let first_legs = extraction.first_legs_by_day(week.day_count());
    (0..week.day_count())
        .map(|day| {
            (
                aggregate_flows(day, &first_legs[day], FlowKind::Loan),
                aggregate_flows(day, &extraction.residual.days[day], FlowKind::Nonloan),
            )
        })
        .collect()
}

/// Imbalance tables per day plus the pooled compensation fit.
pub fn imbalance_section(
    week: &WeekDataset,
    extraction: &LoanExtractionResult,
) -> ImbalanceSection {
    let mut per_day = Vec::new();
    let mut pooled: Vec<(f64, f64)> = Vec::new();
    for (loan_net, nonloan_net) in day_networks(week, extraction) {
        let day = loan_net.day;
        let loan_table = imbalances(&loan_net, &week.banks);
        let nonloan_table = imbalances(&nonloan_net, &week.banks);
        for bank in &week.banks {
            pooled.push((
                nonloan_table.imbalance[bank].dollars(),
                loan_table.imbalance[bank].dollars(),
            ));
        }
        per_day.push(DayImbalanceRow {
            day,
            nonloan_cents: table_cents(&nonloan_table),
            loan_cents: table_cents(&loan_table),
            correlation: imbalance_correlation(&loan_table, &nonloan_table).ok().map(sig6),
            size_tolerance: size_tolerance_correlation(&loan_table, &nonloan_net).ok().map(sig6),
        });
    }
    ImbalanceSection {
        per_day,
        compensation_fit: weighted_orthogonal_fit(&pooled)
            .ok()
            .map(|f| LinearRow { intercept: sig6(f.intercept), slope: sig6(f.slope) }),
    }
}

fn persistence_nums(
    day_edges: &BTreeMap<(crate::model::BankId, crate::model::BankId), crate::flows::FlowEdge>,
    next_edges: &BTreeMap<(crate::model::BankId, crate::model::BankId), crate::flows::FlowEdge>,
) -> PersistenceNums {
    let p = persistence(day_edges, next_edges);
    PersistenceNums {
        persistent_pairs: p.persistent.len(),
        fraction_count: sig6(p.fraction_count),
        fraction_value_day: sig6(p.fraction_value_d),
        fraction_value_next: sig6(p.fraction_value_d1),
    }
}

/// Persistence between consecutive days, pairwise direction distances and
/// the random baseline for the week's pair-space dimension.
pub fn flow_section(
    week: &WeekDataset,
    extraction: &LoanExtractionResult,
    seed: u64,
    trials: usize,
) -> FlowSection {
    let networks = day_networks(week, extraction);
    let mut persistence_rows = Vec::new();
    let mut distances = Vec::new();
    for kind in [FlowKind::Loan, FlowKind::Nonloan] {
        let raw: Vec<&FlowNetwork> = networks
            .iter()
            .map(|(loan, nonloan)| if kind == FlowKind::Loan { loan } else { nonloan })
            .collect();
        let nets: Vec<NetFlowNetwork> = raw.iter().map(|n| net_flows(n)).collect();
        for day in 0..raw.len().saturating_sub(1) {
            persistence_rows.push(PersistenceRow {
                day,
                next_day: day + 1,
                kind,
                raw: persistence_nums(&raw[day].flows, &raw[day + 1].flows),
                net: persistence_nums(&nets[day].net, &nets[day + 1].net),
            });
        }
        let vectors: Vec<_> = raw.iter().map(|n| flow_vector(n, &week.banks)).collect();
        for a in 0..vectors.len() {
            for b in a + 1..vectors.len() {
                distances.push(DistanceRow {
                    day_a: a,
                    day_b: b,
                    kind,
                    all_flows: flow_distance(&vectors[a], &vectors[b], false).ok().map(sig6),
                    persistent_flows: flow_distance(&vectors[a], &vectors[b], true).ok().map(sig6),
                });
            }
        }
    }

    let bank_count = week.banks.len();
    let dimension = (bank_count * bank_count.saturating_sub(1)).max(2);
    let baseline = random_flow_distance_baseline(dimension, trials, seed);
    FlowSection {
        persistence: persistence_rows,
        distances,
        baseline: BaselineRow {
            dimension,
            trials,
            mean: sig6(baseline.mean),
            std: sig6(baseline.std),
        },
    }
}

fn network_section(net: &NetFlowNetwork, banks: &BTreeSet<crate::model::BankId>, seed: u64) -> NetworkSection {
    let counts: Vec<f64> = net.net.values().map(|e| e.tx_count as f64).collect();
    let log_values: Vec<f64> = net.net.values().map(|e| e.value.dollars().log10()).collect();
    let degrees = degree_sequences(net, banks);
    let by_degree = value_by_degree(net);
    let histogram = log_binned_histogram(&counts, COUNT_BIN_RATIO);
    NetworkSection {
        day: net.day,
        kind: net.kind,
        edge_count: net.net.len(),
        total_value_cents: net.net.values().map(|e| e.value.cents).sum(),
        value_mixture: mixture_row(&log_values, seed),
        count_power_law: fit_power_law(&histogram).ok().map(|f| PowerLawRow {
            exponent: sig6(f.exponent),
            stderr: sig6(f.stderr),
            range: (sig6(f.range.0), sig6(f.range.1)),
        }),
        count_ad_test: ad_exponential_test(&counts).ok().map(|t| AdRow {
            statistic: sig6(t.statistic),
            corrected_statistic: sig6(t.corrected_statistic),
            reject_at_5pct: t.reject_at_5pct,
        }),
        assortativity_in: assortativity(net, DegreeMode::In).ok().map(sig6),
        assortativity_out: assortativity(net, DegreeMode::Out).ok().map(sig6),
        in_degree: degrees
            .in_degree
            .iter()
            .map(|(b, d)| (b.as_str().to_owned(), *d))
            .collect(),
        out_degree: degrees
            .out_degree
            .iter()
            .map(|(b, d)| (b.as_str().to_owned(), *d))
            .collect(),
        value_by_in_degree_cents: by_degree.incoming.iter().map(|(d, v)| (*d, v.cents)).collect(),
        value_by_out_degree_cents: by_degree.outgoing.iter().map(|(d, v)| (*d, v.cents)).collect(),
    }
}

/// Net-flow network statistics per day and kind, plus cross-day count tests.
pub fn network_group(
    week: &WeekDataset,
    extraction: &LoanExtractionResult,
    seed: u64,
) -> NetworkGroup {
    let networks = day_networks(week, extraction);
    let mut per_day = Vec::new();
    let mut count_ks = Vec::new();
    for kind in [FlowKind::Loan, FlowKind::Nonloan] {
        let nets: Vec<NetFlowNetwork> = networks
            .iter()
            .map(|(loan, nonloan)| net_flows(if kind == FlowKind::Loan { loan } else { nonloan }))
            .collect();
        for net in &nets {
            per_day.push(network_section(net, &week.banks, seed));
        }
        let samples: Vec<Vec<f64>> = nets
            .iter()
            .map(|n| n.net.values().map(|e| e.tx_count as f64).collect())
            .collect();
        for a in 0..samples.len() {
            for b in a + 1..samples.len() {
                if let Ok(ks) = ks_two_sample(&samples[a], &samples[b]) {
                    count_ks.push(KsRow {
                        day_a: a,
                        day_b: b,
                        kind,
                        statistic: sig6(ks.statistic),
                        p_value: sig6(ks.p_value),
                    });
                }
            }
        }
    }
    per_day.sort_by_key(|s| (s.day, s.kind));
    NetworkGroup { per_day, count_ks }
}

/// Runs the whole pipeline on a validated week. Deterministic in all inputs.
pub fn build_report(
    week: &WeekDataset,
    params: &MatchParams,
    seed: u64,
) -> Result<Report, ReportError> {
    let violations = validate(week);
    if !violations.is_empty() {
        let mut message: Vec<String> = violations.iter().take(5).map(|v| v.to_string()).collect();
        if violations.len() > 5 {
            message.push(format!("and {} more", violations.len() - 5));
        }
        return Err(ReportError::InvalidWeek(message.join("; ")));
    }

    let extraction = extract_loans(week, params);
    Ok(Report {
        schema_version: SCHEMA_VERSION,
        seed,
        params: ReportParams {
            target_rate_percent: params.target_rate.annual_percent,
            rate_band: params.rate_band,
            min_loan_value_cents: params.min_value.cents,
            max_term_days: params.max_term_days,
            baseline_trials: BASELINE_TRIALS,
        },
        daily: daily_sections(week, seed),
        loans: loan_section(week, &extraction, params),
        imbalances: imbalance_section(week, &extraction),
        flows: flow_section(week, &extraction, seed, BASELINE_TRIALS),
        networks: network_group(week, &extraction, seed),
    })
}

/// Pretty JSON with a trailing newline; field order fixed by struct order.
pub fn report_to_json(report: &Report) -> String {
    let mut text = serde_json::to_string_pretty(report).expect("report serializes");
    text.push('\n');
    text
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{GeneratorConfig, MatchPolicy};

    fn small_config(seed: u64) -> GeneratorConfig {
        let mut config = GeneratorConfig::default();
        config.bank_count = 14;
        config.big_bank_count = 3;
        config.daily_volume = vec![900, 1000, 950, 980];
        config.value_mixture.truncate(4);
        config.match_policy = MatchPolicy::Proportional;
        config.seed = seed;
        config
    }

    fn small_week(seed: u64) -> WeekDataset {
        crate::synth::generate_week(&small_config(seed)).unwrap().week
    }

    #[test]
    fn report_covers_every_day_and_kind() {
        let week = small_week(3);
        let report = build_report(&week, &MatchParams::default(), 3).unwrap();
        assert_eq!(report.schema_version, SCHEMA_VERSION);
        assert_eq!(report.daily.len(), 4);
        assert_eq!(report.loans.per_day.len(), 4);
        assert_eq!(report.imbalances.per_day.len(), 4);
        assert_eq!(report.networks.per_day.len(), 8);
        // 3 consecutive-day pairs and 6 unordered day pairs, for each kind.
        assert_eq!(report.flows.persistence.len(), 6);
        assert_eq!(report.flows.distances.len(), 12);
        for section in &report.daily {
            assert!(section.volume > 0);
            assert!(section.value_mixture.is_some());
        }
    }

    #[test]
    fn report_totals_match_direct_library_calls() {
        let week = small_week(5);
        let params = MatchParams::default();
        let report = build_report(&week, &params, 5).unwrap();

        let totals = dataset_totals(&week);
        for (section, expect) in report.daily.iter().zip(&totals) {
            assert_eq!(section.volume, expect.volume);
            assert_eq!(section.total_value_cents, expect.total_value.cents);
        }

        let extraction = extract_loans(&week, &params);
        assert_eq!(report.loans.total_count, extraction.loans.len());
        let by_term_total: usize = report.loans.count_by_term.values().sum();
        assert_eq!(by_term_total, report.loans.total_count);

        for row in &report.imbalances.per_day {
            let nonloan_sum: i64 = row.nonloan_cents.values().sum();
            let loan_sum: i64 = row.loan_cents.values().sum();
            assert_eq!(nonloan_sum, 0, "day {}", row.day);
            assert_eq!(loan_sum, 0, "day {}", row.day);
        }
    }

    #[test]
    fn compensating_week_reports_strong_negative_correlation() {
        let week = small_week(7);
        let report = build_report(&week, &MatchParams::default(), 7).unwrap();
        // Last day has no first legs, so its correlation degenerates.
        let last = report.imbalances.per_day.last().unwrap();
        assert!(last.correlation.is_none());
        for row in &report.imbalances.per_day[..3] {
            let r = row.correlation.expect("active day correlates");
            assert!(r < -0.8, "day {}: {r}", row.day);
        }
        let fit = report.imbalances.compensation_fit.expect("pooled fit");
        assert!(fit.slope < -0.8 && fit.slope > -1.2, "slope {}", fit.slope);
    }

    #[test]
    fn json_is_byte_deterministic_and_ordered() {
        let week = small_week(11);
        let params = MatchParams::default();
        let a = report_to_json(&build_report(&week, &params, 11).unwrap());
        let b = report_to_json(&build_report(&week, &params, 11).unwrap());
        assert_eq!(a, b);
        assert!(a.ends_with('\n'));
        let head = a.find("\"schema_version\"").unwrap();
        let seed = a.find("\"seed\"").unwrap();
        let daily = a.find("\"daily\"").unwrap();
        assert!(head < seed && seed < daily);
    }

    #[test]
    fn rejects_invalid_week() {
        let week = WeekDataset::from_days(vec![]);
        let err = build_report(&week, &MatchParams::default(), 0).unwrap_err();
        assert!(err.to_string().contains("no days"), "{err}");
    }

    #[test]
    fn six_digit_rounding_is_applied() {
        assert_eq!(sig6(0.123456789), 0.123457);
        assert_eq!(sig6(-98765.4321), -98765.4);
        assert_eq!(sig6(0.0), 0.0);
        assert_eq!(sig6(1.0), 1.0);
        let week = small_week(13);
        let report = build_report(&week, &MatchParams::default(), 13).unwrap();
        let json = report_to_json(&report);
        for token in json.split(|c: char| c == ' ' || c == ',' || c == '\n') {
            // Money is integer cents and exempt; reals always print a point.
            if !token.contains('.') {
                continue;
            }
            if let Ok(x) = token.parse::<f64>() {
                assert_eq!(x, sig6(x), "unrounded value {token}");
            }
        }
    }
}
