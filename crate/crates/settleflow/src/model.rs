//! Core domain types: money, banks, transactions, and week-level datasets.

use std::collections::BTreeSet;
use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Neg, Sub, SubAssign};

use serde::Serialize;
use thiserror::Error;

/// Longest span a dataset may cover, in days.
pub const MAX_DAYS: usize = 7;

/// Exact money amount in integer AUD cents.
///
/// Transaction values are strictly positive; imbalances carry either sign.
/// All aggregation stays in integer arithmetic so sums are exact at the
/// A$10^11 daily scale of a settlement log.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize)]
#[serde(transparent)]
pub struct MoneyValue {
    pub cents: i64,
}

impl MoneyValue {
    pub const ZERO: MoneyValue = MoneyValue { cents: 0 };

    pub const fn from_cents(cents: i64) -> Self {
        MoneyValue { cents }
    }

    /// Whole-dollar constructor, handy for fixtures.
    pub const fn from_dollars(dollars: i64) -> Self {
        MoneyValue { cents: dollars * 100 }
    }

    /// Value in dollars as a float; exact below 2^53 cents.
    pub fn dollars(self) -> f64 {
        self.cents as f64 / 100.0
    }

    pub const fn abs(self) -> Self {
        MoneyValue { cents: self.cents.abs() }
    }

    pub const fn is_positive(self) -> bool {
        self.cents > 0
    }

    pub const fn is_negative(self) -> bool {
        self.cents < 0
    }
}

impl Add for MoneyValue {
    type Output = MoneyValue;
    fn add(self, rhs: MoneyValue) -> MoneyValue {
        MoneyValue { cents: self.cents + rhs.cents }
    }
}

impl Sub for MoneyValue {
    type Output = MoneyValue;
    fn sub(self, rhs: MoneyValue) -> MoneyValue {
        MoneyValue { cents: self.cents - rhs.cents }
    }
}

impl Neg for MoneyValue {
    type Output = MoneyValue;
    fn neg(self) -> MoneyValue {
        MoneyValue { cents: -self.cents }
    }
}

impl AddAssign for MoneyValue {
    fn add_assign(&mut self, rhs: MoneyValue) {
        self.cents += rhs.cents;
    }
}

impl SubAssign for MoneyValue {
    fn sub_assign(&mut self, rhs: MoneyValue) {
        self.cents -= rhs.cents;
    }
}

impl Sum for MoneyValue {
    fn sum<I: Iterator<Item = MoneyValue>>(iter: I) -> MoneyValue {
        MoneyValue { cents: iter.map(|m| m.cents).sum() }
    }
}

impl<'a> Sum<&'a MoneyValue> for MoneyValue {
    fn sum<I: Iterator<Item = &'a MoneyValue>>(iter: I) -> MoneyValue {
        MoneyValue { cents: iter.map(|m| m.cents).sum() }
    }
}

impl fmt::Display for MoneyValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.cents < 0 { "-" } else { "" };
        let abs = self.cents.unsigned_abs();
        write!(f, "{sign}${}.{:02}", abs / 100, abs % 100)
    }
}

/// Opaque bank label, e.g. `A` or `BP`.
///
/// Labels must be consistent across all days of a dataset. Characters that
/// would corrupt the CSV forms (commas, whitespace, control characters) are
/// rejected at construction.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct BankId(String);

impl BankId {
    pub fn new(label: impl Into<String>) -> Result<Self, ModelError> {
        let label = label.into();
        if label.is_empty() {
            return Err(ModelError::EmptyBankLabel);
        }
        if let Some(c) = label.chars().find(|c| *c == ',' || c.is_whitespace() || c.is_control()) {
            return Err(ModelError::BadBankLabel { label, offending: c });
        }
        Ok(BankId(label))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Spreadsheet-style label for a zero-based index: A..Z, AA..AZ, BA..
    pub fn from_index(index: usize) -> Self {
        let mut n = index + 1;
        let mut buf = Vec::new();
        while n > 0 {
            n -= 1;
            buf.push(b'A' + (n % 26) as u8);
            n /= 26;
        }
        buf.reverse();
        BankId(String::from_utf8(buf).expect("ASCII label"))
    }
}

impl fmt::Display for BankId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// One settled payment.
///
/// Field order doubles as the canonical sort key (day, source, destination,
/// value) used by the CSV writer.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Transaction {
    pub day: usize,
    pub source: BankId,
    pub destination: BankId,
    pub value: MoneyValue,
}

/// A week of daily transaction logs over a consistent bank label space.
///
/// `banks` is the alignment universe for per-bank tables: it may include
/// banks with no activity, and every transaction endpoint must belong to it.
#[derive(Debug, Clone, PartialEq)]
pub struct WeekDataset {
    pub days: Vec<Vec<Transaction>>,
    pub banks: BTreeSet<BankId>,
}

impl WeekDataset {
    /// Builds a dataset whose bank set is the union of labels seen.
    pub fn from_days(days: Vec<Vec<Transaction>>) -> Self {
        let mut banks = BTreeSet::new();
        for tx in days.iter().flatten() {
            banks.insert(tx.source.clone());
            banks.insert(tx.destination.clone());
        }
        WeekDataset { days, banks }
    }

    pub fn day_count(&self) -> usize {
        self.days.len()
    }

    pub fn transaction_count(&self) -> usize {
        self.days.iter().map(Vec::len).sum()
    }

    pub fn transactions(&self) -> impl Iterator<Item = &Transaction> {
        self.days.iter().flatten()
    }
}

/// Annualized policy rate in percent (e.g. 6.25).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(transparent)]
pub struct TargetRate {
    pub annual_percent: f64,
}

impl TargetRate {
    pub fn new(annual_percent: f64) -> Result<Self, ModelError> {
        if !annual_percent.is_finite() || annual_percent <= 0.0 {
            return Err(ModelError::BadRate { rate: annual_percent });
        }
        Ok(TargetRate { annual_percent })
    }
}

/// Transaction count and exact value sum for one day.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DailyTotals {
    pub day: usize,
    pub volume: usize,
    pub total_value: MoneyValue,
}

/// Per-day transaction counts and exact value sums.
pub fn dataset_totals(week: &WeekDataset) -> Vec<DailyTotals> {
    week.days
        .iter()
        .enumerate()
        .map(|(day, txs)| DailyTotals {
            day,
            volume: txs.len(),
            total_value: txs.iter().map(|t| t.value).sum(),
        })
        .collect()
}

/// A dataset invariant violation found by [`validate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    NoDays,
    TooManyDays { have: usize },
    DayMismatch { slot: usize, found: usize },
    SelfLoop { day: usize, bank: BankId },
    NonPositiveValue { day: usize, source: BankId, destination: BankId, value: MoneyValue },
    UnknownBank { day: usize, bank: BankId },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoDays => write!(f, "dataset has no days"),
            Violation::TooManyDays { have } => {
                write!(f, "dataset spans {have} days, more than {MAX_DAYS}")
            }
            Violation::DayMismatch { slot, found } => {
                write!(f, "transaction in day slot {slot} carries day index {found}")
            }
            Violation::SelfLoop { day, bank } => {
                write!(f, "self-loop at day {day}, bank {bank}")
            }
            Violation::NonPositiveValue { day, source, destination, value } => {
                write!(f, "non-positive value {value} at day {day}, {source}->{destination}")
            }
            Violation::UnknownBank { day, bank } => {
                write!(f, "bank {bank} on day {day} missing from the dataset bank set")
            }
        }
    }
}

/// Checks every dataset invariant and reports all violations found.
///
/// Never aborts; an empty result means the preconditions of every downstream
/// operation on the dataset hold.
pub fn validate(week: &WeekDataset) -> Vec<Violation> {
    let mut out = Vec::new();
    if week.days.is_empty() {
        out.push(Violation::NoDays);
    }
    if week.days.len() > MAX_DAYS {
        out.push(Violation::TooManyDays { have: week.days.len() });
    }
    for (slot, txs) in week.days.iter().enumerate() {
        for tx in txs {
            if tx.day != slot {
                out.push(Violation::DayMismatch { slot, found: tx.day });
            }
            if tx.source == tx.destination {
                out.push(Violation::SelfLoop { day: slot, bank: tx.source.clone() });
            }
            if tx.value.cents <= 0 {
                out.push(Violation::NonPositiveValue {
                    day: slot,
                    source: tx.source.clone(),
                    destination: tx.destination.clone(),
                    value: tx.value,
                });
            }
            for bank in [&tx.source, &tx.destination] {
                if !week.banks.contains(bank) {
                    out.push(Violation::UnknownBank { day: slot, bank: bank.clone() });
                }
            }
        }
    }
    out
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("bank label is empty")]
    EmptyBankLabel,
    #[error("bank label {label:?} contains forbidden character {offending:?}")]
    BadBankLabel { label: String, offending: char },
    #[error("target rate must be a positive finite percentage, got {rate}")]
    BadRate { rate: f64 },
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bank(label: &str) -> BankId {
        BankId::new(label).unwrap()
    }

    fn tx(day: usize, src: &str, dst: &str, cents: i64) -> Transaction {
        Transaction {
            day,
            source: bank(src),
            destination: bank(dst),
            value: MoneyValue::from_cents(cents),
        }
    }

    #[test]
    fn totals_of_empty_day_are_zero() {
        let week = WeekDataset::from_days(vec![vec![]]);
        let totals = dataset_totals(&week);
        assert_eq!(totals.len(), 1);
        assert_eq!(totals[0].volume, 0);
        assert_eq!(totals[0].total_value, MoneyValue::ZERO);
    }

    #[test]
    fn totals_sum_exactly() {
        let week = WeekDataset::from_days(vec![vec![
            tx(0, "A", "B", 100),
            tx(0, "B", "C", 200),
            tx(0, "C", "A", 300),
        ]]);
        let totals = dataset_totals(&week);
        assert_eq!(totals[0].volume, 3);
        assert_eq!(totals[0].total_value, MoneyValue::from_cents(600));
    }

    #[test]
    fn totals_ignore_transaction_order() {
        let a = vec![tx(0, "A", "B", 17), tx(0, "B", "C", 23), tx(0, "C", "A", 41)];
        let mut b = a.clone();
        b.reverse();
        let ta = dataset_totals(&WeekDataset::from_days(vec![a]));
        let tb = dataset_totals(&WeekDataset::from_days(vec![b]));
        assert_eq!(ta, tb);
    }

    #[test]
    fn validate_accepts_well_formed_week() {
        let week = WeekDataset::from_days(vec![
            vec![tx(0, "A", "B", 100)],
            vec![tx(1, "B", "A", 100)],
        ]);
        assert!(validate(&week).is_empty());
    }

    #[test]
    fn validate_flags_self_loop() {
        let week = WeekDataset::from_days(vec![vec![tx(0, "A", "A", 100)]]);
        let violations = validate(&week);
        assert_eq!(violations, vec![Violation::SelfLoop { day: 0, bank: bank("A") }]);
    }

    #[test]
    fn validate_flags_non_positive_value() {
        let week = WeekDataset::from_days(vec![vec![tx(0, "A", "B", 0)]]);
        assert!(matches!(validate(&week)[0], Violation::NonPositiveValue { .. }));
    }

    #[test]
    fn validate_flags_unknown_bank() {
        let mut week = WeekDataset::from_days(vec![vec![tx(0, "A", "B", 1)]]);
        week.banks.remove(&bank("B"));
        assert_eq!(validate(&week), vec![Violation::UnknownBank { day: 0, bank: bank("B") }]);
    }

    #[test]
    fn validate_flags_day_bounds() {
        assert_eq!(validate(&WeekDataset::from_days(vec![])), vec![Violation::NoDays]);
        let eight = WeekDataset::from_days(vec![vec![]; 8]);
        assert_eq!(validate(&eight), vec![Violation::TooManyDays { have: 8 }]);
    }

    #[test]
    fn validate_flags_day_mismatch() {
        let week = WeekDataset::from_days(vec![vec![tx(1, "A", "B", 5)]]);
        assert_eq!(validate(&week), vec![Violation::DayMismatch { slot: 0, found: 1 }]);
    }

    #[test]
    fn bank_labels_follow_spreadsheet_order() {
        let labels: Vec<String> =
            (0..60).map(|i| BankId::from_index(i).as_str().to_string()).collect();
        assert_eq!(labels[0], "A");
        assert_eq!(labels[25], "Z");
        assert_eq!(labels[26], "AA");
        assert_eq!(labels[51], "AZ");
        assert_eq!(labels[52], "BA");
        assert_eq!(labels[54], "BC");
    }

    #[test]
    fn bank_label_rejects_csv_hostile_characters() {
        assert!(BankId::new("").is_err());
        assert!(BankId::new("A,B").is_err());
        assert!(BankId::new("A B").is_err());
        assert!(BankId::new("A\n").is_err());
        assert!(BankId::new("others").is_ok());
    }

    #[test]
    fn money_display_keeps_sign_and_cents() {
        assert_eq!(MoneyValue::from_cents(-12345).to_string(), "-$123.45");
        assert_eq!(MoneyValue::from_dollars(1_000_000).to_string(), "$1000000.00");
    }

    #[test]
    fn target_rate_rejects_non_positive() {
        assert!(TargetRate::new(0.0).is_err());
        assert!(TargetRate::new(-1.0).is_err());
        assert!(TargetRate::new(f64::NAN).is_err());
        assert_eq!(TargetRate::new(6.25).unwrap().annual_percent, 6.25);
    }
}
