//! Loan identification: reversing transaction pairs whose implied interest
//! rate sits close to the target rate are matched into overnight and
//! multi-day loans.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::model::{BankId, MoneyValue, TargetRate, Transaction, WeekDataset};
use crate::stats::LinearFit;

/// Selection parameters: the box in (value, rate) space a candidate pair must
/// fall into, and the longest term considered.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchParams {
    pub target_rate: TargetRate,
    /// Half-width of the accepted rate interval, in percentage points.
    pub rate_band: f64,
    /// First legs must exceed this value strictly.
    pub min_value: MoneyValue,
    pub max_term_days: usize,
}

impl Default for MatchParams {
    fn default() -> Self {
        MatchParams {
            target_rate: TargetRate { annual_percent: 6.25 },
            rate_band: 0.5,
            min_value: MoneyValue::from_dollars(200_000),
            max_term_days: 4,
        }
    }
}

/// A matched loan: the principal transfer and its repayment.
#[derive(Debug, Clone, PartialEq)]
pub struct Loan {
    pub lender: BankId,
    pub borrower: BankId,
    pub first_leg: Transaction,
    pub second_leg: Transaction,
    pub term_days: usize,
    /// Annualized rate in percent implied by the two legs.
    pub rate: f64,
}

/// Per-day extraction summary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DayLoanStats {
    pub day: usize,
    pub volume: usize,
    pub total_value: MoneyValue,
    /// Loans whose first leg settles this day.
    pub loan_count: usize,
    /// Summed first-leg value of those loans.
    pub loan_value: MoneyValue,
    /// loan_value / total_value; zero on an empty day.
    pub loan_fraction: f64,
}

/// Result of [`extract_loans`]: the matched loans, the nonloan residual, and
/// per-day stats. Every input transaction lands in exactly one of the two
/// parts; both legs of a loan count as loan transactions.
#[derive(Debug, Clone, PartialEq)]
pub struct LoanExtractionResult {
    pub loans: Vec<Loan>,
    pub residual: WeekDataset,
    pub daily: Vec<DayLoanStats>,
}

impl LoanExtractionResult {
    /// First legs grouped per day, for loan-side flow analysis.
    pub fn first_legs_by_day(&self, day_count: usize) -> Vec<Vec<Transaction>> {
        let mut days = vec![Vec::new(); day_count];
        for loan in &self.loans {
            days[loan.first_leg.day].push(loan.first_leg.clone());
        }
        days
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LoanError {
    #[error("first-leg value must be positive, got {0} cents")]
    BadValue(i64),
    #[error("term must be at least 1 day")]
    BadTerm,
    #[error("need at least {need} loans, got {have}")]
    TooFewLoans { need: usize, have: usize },
    #[error("degenerate fit: {reason}")]
    DegenerateFit { reason: &'static str },
}

/// Annualized interest rate in percent implied by a value-increasing pair:
/// 100 × (365 / term) × (v2 − v1) / v1.
pub fn hypothetical_rate(
    v1: MoneyValue,
    v2: MoneyValue,
    term_days: usize,
) -> Result<f64, LoanError> {
    if v1.cents <= 0 {
        return Err(LoanError::BadValue(v1.cents));
    }
    if term_days == 0 {
        return Err(LoanError::BadTerm);
    }
    // Grouped so the numerator and denominator stay exact integers in f64 for
    // realistic magnitudes; the quotient is then correctly rounded once.
    Ok(36500.0 * (v2.cents - v1.cents) as f64 / (v1.cents as f64 * term_days as f64))
}

/// All selection-box candidates pairing a day-`day` first leg with a
/// reversing leg `term` days later: first-leg value strictly above
/// `params.min_value` and |r_h − target| strictly below `params.rate_band`.
/// Out-of-range days yield no pairs. Sorted by (first, second) canonical
/// transaction order.
pub fn candidate_pairs(
    week: &WeekDataset,
    day: usize,
    term: usize,
    params: &MatchParams,
) -> Vec<(Transaction, Transaction, f64)> {
    let index = DayPairIndex::build(week);
    let mut raw = Vec::new();
    collect_candidates(week, &index, day, term, params, None, &mut raw);
    let mut out: Vec<(Transaction, Transaction, f64)> = raw
        .into_iter()
        .map(|c| {
            let first = week.days[c.day][c.first_idx].clone();
            let second = week.days[c.day + c.term][c.second_idx].clone();
            (first, second, c.rate)
        })
        .collect();
    out.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
    out
}

/// Unrestricted variant: every reversing pair at the given term regardless of
/// value or rate, for exploratory rate-versus-value plots. Quadratic in the
/// per-pair transaction counts; intended for small slices.
pub fn reversing_pairs(
    week: &WeekDataset,
    day: usize,
    term: usize,
) -> Vec<(Transaction, Transaction, f64)> {
    let mut out = Vec::new();
    if term == 0 || day + term >= week.day_count() {
        return out;
    }
    for first in &week.days[day] {
        for second in &week.days[day + term] {
            if second.source == first.destination && second.destination == first.source {
                if let Ok(rate) = hypothetical_rate(first.value, second.value, term) {
                    out.push((first.clone(), second.clone(), rate));
                }
            }
        }
    }
    out.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
    out
}

/// Matches loans over the whole week.
///
/// Terms are processed shortest first, each over the residual of the previous
/// ones. Within a term all candidates are ranked globally by |r_h − target|
/// and taken greedily, skipping candidates whose legs are already used. Ties
/// prefer the higher rate, then the canonically smaller second leg, then the
/// canonically smaller first leg, so the result is independent of input row
/// order. A week with fewer than two days yields no loans.
pub fn extract_loans(week: &WeekDataset, params: &MatchParams) -> LoanExtractionResult {
    assert!(params.rate_band > 0.0, "rate band must be positive");
    assert!(params.min_value.is_positive(), "minimum value must be positive");
    assert!(params.max_term_days >= 1, "term cap must be at least 1");

    let day_count = week.day_count();
    let effective_max_term = params.max_term_days.min(day_count.saturating_sub(1));
    let index = DayPairIndex::build(week);
    let mut used: Vec<Vec<bool>> = week.days.iter().map(|txs| vec![false; txs.len()]).collect();
    let mut loans = Vec::new();

    for term in 1..=effective_max_term {
        let mut candidates = Vec::new();
        for day in 0..day_count - term {
            collect_candidates(week, &index, day, term, params, Some(&used), &mut candidates);
        }
        candidates.sort_by(|a, b| {
            let tx = |c: &Candidate| {
                (&week.days[c.day][c.first_idx], &week.days[c.day + c.term][c.second_idx])
            };
            let (af, asnd) = tx(a);
            let (bf, bsnd) = tx(b);
            a.diff
                .total_cmp(&b.diff)
                .then(b.rate.total_cmp(&a.rate))
                .then_with(|| asnd.cmp(bsnd))
                .then_with(|| af.cmp(bf))
        });
        for c in candidates {
            if used[c.day][c.first_idx] || used[c.day + c.term][c.second_idx] {
                continue;
            }
            used[c.day][c.first_idx] = true;
            used[c.day + c.term][c.second_idx] = true;
            let first_leg = week.days[c.day][c.first_idx].clone();
            let second_leg = week.days[c.day + c.term][c.second_idx].clone();
            loans.push(Loan {
                lender: first_leg.source.clone(),
                borrower: first_leg.destination.clone(),
                first_leg,
                second_leg,
                term_days: c.term,
                rate: c.rate,
            });
        }
    }

    loans.sort_by(|a, b| {
        a.first_leg.cmp(&b.first_leg).then(a.term_days.cmp(&b.term_days))
    });

    let residual_days: Vec<Vec<Transaction>> = week
        .days
        .iter()
        .zip(&used)
        .map(|(txs, flags)| {
            txs.iter()
                .zip(flags)
                .filter(|(_, &u)| !u)
                .map(|(tx, _)| tx.clone())
                .collect()
        })
        .collect();
    let residual = WeekDataset { days: residual_days, banks: week.banks.clone() };

    let mut daily: Vec<DayLoanStats> = crate::model::dataset_totals(week)
        .into_iter()
        .map(|t| DayLoanStats {
            day: t.day,
            volume: t.volume,
            total_value: t.total_value,
            loan_count: 0,
            loan_value: MoneyValue::ZERO,
            loan_fraction: 0.0,
        })
        .collect();
    for loan in &loans {
        let stats = &mut daily[loan.first_leg.day];
        stats.loan_count += 1;
        stats.loan_value += loan.first_leg.value;
    }
    for stats in &mut daily {
        if stats.total_value.is_positive() {
            stats.loan_fraction = stats.loan_value.cents as f64 / stats.total_value.cents as f64;
        }
    }

    LoanExtractionResult { loans, residual, daily }
}

struct Candidate {
    diff: f64,
    rate: f64,
    day: usize,
    term: usize,
    first_idx: usize,
    second_idx: usize,
}

/// Per-day transaction indices grouped by (source, destination) and sorted by
/// value, so the reversing legs compatible with a first leg can be found by
/// binary search on the value window the rate band implies.
struct DayPairIndex {
    by_pair: Vec<BTreeMap<(BankId, BankId), Vec<usize>>>,
}

impl DayPairIndex {
    fn build(week: &WeekDataset) -> Self {
        let by_pair = week
            .days
            .iter()
            .map(|txs| {
                let mut map: BTreeMap<(BankId, BankId), Vec<usize>> = BTreeMap::new();
                for (i, tx) in txs.iter().enumerate() {
                    map.entry((tx.source.clone(), tx.destination.clone())).or_default().push(i);
                }
                for indices in map.values_mut() {
                    indices.sort_by_key(|&i| txs[i].value);
                }
                map
            })
            .collect();
        DayPairIndex { by_pair }
    }
}

fn collect_candidates(
    week: &WeekDataset,
    index: &DayPairIndex,
    day: usize,
    term: usize,
    params: &MatchParams,
    used: Option<&Vec<Vec<bool>>>,
    out: &mut Vec<Candidate>,
) {
    if term == 0 || day + term >= week.day_count() {
        return;
    }
    let target = params.target_rate.annual_percent;
    let band = params.rate_band;
    let is_used = |d: usize, i: usize| used.is_some_and(|u| u[d][i]);

    for ((source, destination), first_indices) in &index.by_pair[day] {
        let Some(second_indices) =
            index.by_pair[day + term].get(&(destination.clone(), source.clone()))
        else {
            continue;
        };
        let seconds = &week.days[day + term];
        for &fi in first_indices {
            let first = &week.days[day][fi];
            if first.value <= params.min_value || is_used(day, fi) {
                continue;
            }
            let v1 = first.value.cents as f64;
            // value window implied by the rate band, padded a cent outward;
            // the exact strict test below is the authority
            let lo = (v1 * (1.0 + (target - band) * term as f64 / 36500.0)).floor() - 1.0;
            let hi = (v1 * (1.0 + (target + band) * term as f64 / 36500.0)).ceil() + 1.0;
            let lo = lo.max(0.0) as i64;
            let hi = hi as i64;
            let start = second_indices.partition_point(|&i| seconds[i].value.cents < lo);
            for &si in &second_indices[start..] {
                let second = &seconds[si];
                if second.value.cents > hi {
                    break;
                }
                if is_used(day + term, si) {
                    continue;
                }
                let rate = hypothetical_rate(first.value, second.value, term)
                    .expect("positive first leg");
                let diff = (rate - target).abs();
                if diff < band {
                    out.push(Candidate { diff, rate, day, term, first_idx: fi, second_idx: si });
                }
            }
        }
    }
}

/// Raw reversing-pair counts around the selection box: pairs in the box and
/// pairs in the two adjacent rate side-bands of the same total width, over
/// all terms up to the cap. The side-band count scaled by the width ratio
/// estimates how many box matches are accidental.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Contamination {
    pub in_box: usize,
    pub side_band: usize,
    /// side_band count scaled to the box width.
    pub expected_accidental: f64,
    /// expected_accidental / in_box; zero when the box is empty.
    pub fraction: f64,
}

pub fn estimate_contamination(week: &WeekDataset, params: &MatchParams) -> Contamination {
    let day_count = week.day_count();
    let effective_max_term = params.max_term_days.min(day_count.saturating_sub(1));
    let index = DayPairIndex::build(week);
    // widen the window to cover the side bands, then classify exactly
    let wide = MatchParams { rate_band: 3.0 * params.rate_band, ..params.clone() };

    let mut in_box = 0usize;
    let mut side_band = 0usize;
    for term in 1..=effective_max_term {
        for day in 0..day_count - term {
            let mut raw = Vec::new();
            collect_candidates(week, &index, day, term, &wide, None, &mut raw);
            for c in raw {
                if c.diff < params.rate_band {
                    in_box += 1;
                } else {
                    // [band, 3·band): the adjacent bands, jointly twice the box width
                    side_band += 1;
                }
            }
        }
    }

    let expected_accidental = side_band as f64 / 2.0;
    let fraction = if in_box == 0 { 0.0 } else { expected_accidental / in_box as f64 };
    Contamination { in_box, side_band, expected_accidental, fraction }
}

/// Ordinary least squares of loan rate on log10(first-leg value / A$10^6).
pub fn rate_value_fit(loans: &[Loan]) -> Result<LinearFit, LoanError> {
    if loans.len() < 2 {
        return Err(LoanError::TooFewLoans { need: 2, have: loans.len() });
    }
    let points: Vec<(f64, f64)> = loans
        .iter()
        .map(|l| ((l.first_leg.value.dollars() / 1e6).log10(), l.rate))
        .collect();
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(LoanError::DegenerateFit { reason: "all loan values identical" });
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    Ok(LinearFit { intercept: my - slope * mx, slope })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateStats {
    pub mean: f64,
    pub std: f64,
}

/// Sample mean and standard deviation of loan rates; a single loan has
/// deviation zero.
pub fn loan_rate_stats(loans: &[Loan]) -> Result<RateStats, LoanError> {
    if loans.is_empty() {
        return Err(LoanError::TooFewLoans { need: 1, have: 0 });
    }
    let n = loans.len() as f64;
    let mean = loans.iter().map(|l| l.rate).sum::<f64>() / n;
    let std = if loans.len() < 2 {
        0.0
    } else {
        (loans.iter().map(|l| (l.rate - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    Ok(RateStats { mean, std })
}
