//! Canonical CSV forms for transaction logs and derived tables.
//!
//! The transaction schema is fixed: a mandatory header, exactly four columns,
//! LF line endings on output. Rows are written in canonical order (day,
//! source, destination, value) so emission is byte-deterministic and
//! `parse` then `write` round-trips any well-formed file.

use std::io::{self, BufRead, Write};

use thiserror::Error;

use crate::flows::{FlowNetwork, NetFlowNetwork};
use crate::loans::Loan;
use crate::model::{BankId, ModelError, MoneyValue, Transaction, WeekDataset, MAX_DAYS};

pub const TRANSACTIONS_HEADER: &str = "day,source,destination,value_cents";
pub const LOANS_HEADER: &str = "day,lender,borrower,value_cents,term_days,rate_percent";
pub const TRUTH_HEADER: &str = "day,lender,borrower,value_cents,term_days,repay_cents,rate_percent";
pub const FLOWS_HEADER: &str = "day,kind,source,destination,value_cents,tx_count";

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("read failed: {0}")]
    Io(#[from] io::Error),
    #[error("missing or wrong header, expected {TRANSACTIONS_HEADER:?}, got {found:?}")]
    Header { found: String },
    #[error("line {line}: expected {expected} columns, found {found}")]
    ColumnCount { line: usize, expected: usize, found: usize },
    #[error("line {line}: bad {column} field {value:?}")]
    BadField { line: usize, column: &'static str, value: String },
    #[error("line {line}: day {day} outside 0..{MAX_DAYS}")]
    DayOutOfRange { line: usize, day: i64 },
    #[error("line {line}: transaction value must be positive, got {value}")]
    NonPositiveValue { line: usize, value: i64 },
    #[error("line {line}: self-loop on bank {bank}")]
    SelfLoop { line: usize, bank: String },
    #[error("line {line}: {source}")]
    BadLabel { line: usize, source: ModelError },
}

/// Parses the canonical transaction CSV into a week dataset.
///
/// Streams line by line; the bank set is the union of labels seen and days
/// are materialized from 0 through the largest day index, so gaps become
/// empty days. An input with no data rows yields a zero-day dataset, which
/// `model::validate` flags.
pub fn parse_transactions<R: BufRead>(reader: R) -> Result<WeekDataset, CsvError> {
    let mut lines = reader.lines();
    let header = match lines.next() {
        Some(line) => line?,
        None => return Err(CsvError::Header { found: String::new() }),
    };
    if trim_eol(&header) != TRANSACTIONS_HEADER {
        return Err(CsvError::Header { found: trim_eol(&header).to_string() });
    }

    let mut days: Vec<Vec<Transaction>> = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line_no = idx + 2;
        let line = line?;
        let line = trim_eol(&line);
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(CsvError::ColumnCount { line: line_no, expected: 4, found: fields.len() });
        }

        let day: i64 = fields[0]
            .parse()
            .map_err(|_| CsvError::BadField { line: line_no, column: "day", value: fields[0].into() })?;
        if day < 0 || day as usize >= MAX_DAYS {
            return Err(CsvError::DayOutOfRange { line: line_no, day });
        }
        let source = BankId::new(fields[1])
            .map_err(|source| CsvError::BadLabel { line: line_no, source })?;
        let destination = BankId::new(fields[2])
            .map_err(|source| CsvError::BadLabel { line: line_no, source })?;
        if source == destination {
            return Err(CsvError::SelfLoop { line: line_no, bank: fields[1].into() });
        }
        let value: i64 = fields[3].parse().map_err(|_| CsvError::BadField {
            line: line_no,
            column: "value_cents",
            value: fields[3].into(),
        })?;
        if value <= 0 {
            return Err(CsvError::NonPositiveValue { line: line_no, value });
        }

        let day = day as usize;
        if days.len() <= day {
            days.resize_with(day + 1, Vec::new);
        }
        days[day].push(Transaction {
            day,
            source,
            destination,
            value: MoneyValue::from_cents(value),
        });
    }

    Ok(WeekDataset::from_days(days))
}

/// Writes the canonical transaction CSV: header plus rows sorted by
/// (day, source, destination, value), LF endings, byte-deterministic.
pub fn write_transactions<W: Write>(week: &WeekDataset, mut writer: W) -> io::Result<()> {
    writeln!(writer, "{TRANSACTIONS_HEADER}")?;
    for txs in &week.days {
        let mut rows: Vec<&Transaction> = txs.iter().collect();
        rows.sort_unstable();
        for tx in rows {
            writeln!(writer, "{},{},{},{}", tx.day, tx.source, tx.destination, tx.value.cents)?;
        }
    }
    Ok(())
}

pub fn transactions_to_string(week: &WeekDataset) -> String {
    let mut buf = Vec::new();
    write_transactions(week, &mut buf).expect("write to memory");
    String::from_utf8(buf).expect("CSV is UTF-8")
}

/// Writes extracted loans, one row per loan in caller order, keyed by the
/// first leg. Rates use the shortest decimal form that parses back exactly.
pub fn write_loans<W: Write>(loans: &[Loan], mut writer: W) -> io::Result<()> {
    writeln!(writer, "{LOANS_HEADER}")?;
    for loan in loans {
        writeln!(
            writer,
            "{},{},{},{},{},{}",
            loan.first_leg.day,
            loan.lender,
            loan.borrower,
            loan.first_leg.value.cents,
            loan.term_days,
            loan.rate
        )?;
    }
    Ok(())
}

pub fn loans_to_string(loans: &[Loan]) -> String {
    let mut buf = Vec::new();
    write_loans(loans, &mut buf).expect("write to memory");
    String::from_utf8(buf).expect("CSV is UTF-8")
}

/// Writes generator truth loans with both leg values, so the exact leg pair
/// can be reconstructed when the file is read back.
pub fn write_truth<W: Write>(loans: &[Loan], mut writer: W) -> io::Result<()> {
    writeln!(writer, "{TRUTH_HEADER}")?;
    for loan in loans {
        writeln!(
            writer,
            "{},{},{},{},{},{},{}",
            loan.first_leg.day,
            loan.lender,
            loan.borrower,
            loan.first_leg.value.cents,
            loan.term_days,
            loan.second_leg.value.cents,
            loan.rate
        )?;
    }
    Ok(())
}

pub fn truth_to_string(loans: &[Loan]) -> String {
    let mut buf = Vec::new();
    write_truth(loans, &mut buf).expect("write to memory");
    String::from_utf8(buf).expect("CSV is UTF-8")
}

/// Parses a truth file back into loans, rebuilding both legs from the stored
/// principal and repayment.
pub fn parse_truth<R: BufRead>(reader: R) -> Result<Vec<Loan>, CsvError> {
    let mut lines = reader.lines();
    let header = match lines.next() {
        Some(line) => line?,
        None => return Err(CsvError::Header { found: String::new() }),
    };
    if trim_eol(&header) != TRUTH_HEADER {
        return Err(CsvError::Header { found: trim_eol(&header).to_string() });
    }

    let mut loans = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line_no = idx + 2;
        let line = line?;
        let line = trim_eol(&line);
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(CsvError::ColumnCount { line: line_no, expected: 7, found: fields.len() });
        }

        let bad = |column: &'static str, value: &str| CsvError::BadField {
            line: line_no,
            column,
            value: value.into(),
        };
        let day: usize = fields[0].parse().map_err(|_| bad("day", fields[0]))?;
        let lender = BankId::new(fields[1])
            .map_err(|source| CsvError::BadLabel { line: line_no, source })?;
        let borrower = BankId::new(fields[2])
            .map_err(|source| CsvError::BadLabel { line: line_no, source })?;
        if lender == borrower {
            return Err(CsvError::SelfLoop { line: line_no, bank: fields[1].into() });
        }
        let value: i64 = fields[3].parse().map_err(|_| bad("value_cents", fields[3]))?;
        let term_days: usize = fields[4].parse().map_err(|_| bad("term_days", fields[4]))?;
        let repay: i64 = fields[5].parse().map_err(|_| bad("repay_cents", fields[5]))?;
        let rate: f64 = fields[6].parse().map_err(|_| bad("rate_percent", fields[6]))?;
        if value <= 0 {
            return Err(CsvError::NonPositiveValue { line: line_no, value });
        }
        if repay <= 0 {
            return Err(CsvError::NonPositiveValue { line: line_no, value: repay });
        }
        if term_days == 0 || day + term_days >= MAX_DAYS {
            return Err(bad("term_days", fields[4]));
        }
        if !rate.is_finite() {
            return Err(bad("rate_percent", fields[6]));
        }

        loans.push(Loan {
            lender: lender.clone(),
            borrower: borrower.clone(),
            first_leg: Transaction {
                day,
                source: lender.clone(),
                destination: borrower.clone(),
                value: MoneyValue::from_cents(value),
            },
            second_leg: Transaction {
                day: day + term_days,
                source: borrower,
                destination: lender,
                value: MoneyValue::from_cents(repay),
            },
            term_days,
            rate,
        });
    }
    Ok(loans)
}

/// Writes one row per directed pair for each network, in network order.
pub fn write_flows<W: Write>(networks: &[FlowNetwork], mut writer: W) -> io::Result<()> {
    writeln!(writer, "{FLOWS_HEADER}")?;
    for network in networks {
        for ((src, dst), edge) in &network.flows {
            writeln!(
                writer,
                "{},{},{},{},{},{}",
                network.day,
                network.kind.as_str(),
                src,
                dst,
                edge.value.cents,
                edge.tx_count
            )?;
        }
    }
    Ok(())
}

pub fn flows_to_string(networks: &[FlowNetwork]) -> String {
    let mut buf = Vec::new();
    write_flows(networks, &mut buf).expect("write to memory");
    String::from_utf8(buf).expect("CSV is UTF-8")
}

/// Net flow variant of [`write_flows`]; same schema, one row per surviving
/// net edge.
pub fn write_net_flows<W: Write>(networks: &[NetFlowNetwork], mut writer: W) -> io::Result<()> {
    writeln!(writer, "{FLOWS_HEADER}")?;
    for network in networks {
        for ((src, dst), edge) in &network.net {
            writeln!(
                writer,
                "{},{},{},{},{},{}",
                network.day,
                network.kind.as_str(),
                src,
                dst,
                edge.value.cents,
                edge.tx_count
            )?;
        }
    }
    Ok(())
}

pub fn net_flows_to_string(networks: &[NetFlowNetwork]) -> String {
    let mut buf = Vec::new();
    write_net_flows(networks, &mut buf).expect("write to memory");
    String::from_utf8(buf).expect("CSV is UTF-8")
}

fn trim_eol(line: &str) -> &str {
    line.strip_suffix('\r').unwrap_or(line)
}
