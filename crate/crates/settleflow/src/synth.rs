//! Labeled synthetic settlement weeks.
//!
//! The generator encodes an explicit causal mechanism: banks accumulate
//! imbalances through ordinary payments, and an overnight money market then
//! lends surpluses to deficits. Every generated loan is recorded as ground
//! truth, so extraction quality can be measured exactly.

use rand::distr::weighted::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use rand_distr::Normal;
use thiserror::Error;

use crate::flows::{aggregate_flows, imbalances, FlowKind, ImbalanceTable};
use crate::loans::{hypothetical_rate, Loan};
use crate::model::{BankId, MoneyValue, TargetRate, Transaction, WeekDataset, MAX_DAYS};

/// One component of the log10-value mixture a day's payment values are drawn
/// from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureComponent {
    pub mean: f64,
    pub variance: f64,
    pub weight: f64,
}

pub type DayMixture = [MixtureComponent; 2];

/// How surplus banks are paired with deficit banks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchPolicy {
    /// Largest remaining surplus lends to largest remaining deficit.
    Greedy,
    /// Every surplus bank lends to every deficit bank in proportion to the
    /// deficit sizes, which yields realistically many smaller loans.
    Proportional,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub bank_count: usize,
    /// Banks whose combined traffic weight is pinned to `big_bank_share`.
    pub big_bank_count: usize,
    pub big_bank_share: f64,
    /// Zipf exponent of the bank traffic weights.
    pub weight_exponent: f64,
    /// Target transaction count per day, loan repayments included.
    pub daily_volume: Vec<usize>,
    /// Per-day two-component normal mixture of log10(value in dollars).
    pub value_mixture: Vec<DayMixture>,
    pub target_rate: TargetRate,
    /// Spread of realized loan rates around the target, percentage points.
    pub rate_noise_std: f64,
    /// Fraction of each nonloan imbalance the money market compensates.
    pub compensation_fraction: f64,
    /// Per-bank relative noise on the compensation target.
    pub residual_noise_std: f64,
    /// Loans at or below this value are not emitted.
    pub loan_min_value: MoneyValue,
    pub match_policy: MatchPolicy,
    /// Probability that a loan runs two days instead of overnight; zero keeps
    /// every loan overnight.
    pub term_loan_fraction: f64,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    /// Calibrated to the aggregate texture of a real settlement week: around
    /// 2.5e4 transactions per day totalling 1e11 dollars, value distributions
    /// with a low component near 1e4 and a high component near 1e6 dollars,
    /// and a handful of dominant banks.
    fn default() -> Self {
        const VOLUMES: [usize; 5] = [19_425, 27_164, 24_436, 25_721, 26_332];
        const MIXTURES: [[f64; 6]; 5] = [
            [4.00, 1.12, 0.81, 6.68, 0.68, 0.19],
            [3.55, 0.72, 0.43, 5.73, 1.49, 0.57],
            [3.66, 0.86, 0.55, 5.86, 1.43, 0.45],
            [3.87, 1.01, 0.68, 6.42, 1.07, 0.32],
            [3.82, 0.87, 0.61, 6.12, 1.19, 0.39],
        ];
        GeneratorConfig {
            bank_count: 55,
            big_bank_count: 4,
            big_bank_share: 0.6,
            weight_exponent: 1.3,
            daily_volume: VOLUMES.to_vec(),
            value_mixture: MIXTURES.iter().map(|m| mixture_from_row(m)).collect(),
            target_rate: TargetRate { annual_percent: 6.25 },
            rate_noise_std: 0.07,
            compensation_fraction: 1.0,
            residual_noise_std: 0.1,
            loan_min_value: MoneyValue::from_dollars(200_000),
            match_policy: MatchPolicy::Greedy,
            term_loan_fraction: 0.0,
            seed: 0,
        }
    }
}

fn mixture_from_row(row: &[f64; 6]) -> DayMixture {
    [
        MixtureComponent { mean: row[0], variance: row[1], weight: row[2] },
        MixtureComponent { mean: row[3], variance: row[4], weight: row[5] },
    ]
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("invalid generator config: {0}")]
    Config(String),
}

fn config_err<T>(message: impl Into<String>) -> Result<T, SynthError> {
    Err(SynthError::Config(message.into()))
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.bank_count < 2 {
            return config_err("at least two banks are needed");
        }
        if self.big_bank_count == 0 || self.big_bank_count > self.bank_count {
            return config_err("big_bank_count must be in 1..=bank_count");
        }
        if !(self.big_bank_share > 0.0 && self.big_bank_share < 1.0) {
            return config_err("big_bank_share must lie strictly between 0 and 1");
        }
        if !(self.weight_exponent > 0.0) {
            return config_err("weight_exponent must be positive");
        }
        if self.daily_volume.is_empty() {
            return config_err("daily_volume must cover at least one day");
        }
        if self.daily_volume.len() > MAX_DAYS {
            return config_err(format!("daily_volume covers more than {MAX_DAYS} days"));
        }
        if self.daily_volume.iter().any(|&v| v == 0) {
            return config_err("daily volumes must be positive");
        }
        if self.value_mixture.len() != self.daily_volume.len() {
            return config_err(format!(
                "daily_volume covers {} days but value mixtures cover {}",
                self.daily_volume.len(),
                self.value_mixture.len()
            ));
        }
        for (day, mixture) in self.value_mixture.iter().enumerate() {
            let weight_sum: f64 = mixture.iter().map(|c| c.weight).sum();
            if (weight_sum - 1.0).abs() > 1e-9 {
                return config_err(format!("day {day} mixture weights must sum to 1"));
            }
            if mixture.iter().any(|c| c.weight <= 0.0 || c.variance <= 0.0 || !c.mean.is_finite())
            {
                return config_err(format!("day {day} mixture has a degenerate component"));
            }
        }
        if !(self.target_rate.annual_percent > 0.0) || !self.target_rate.annual_percent.is_finite()
        {
            return config_err("target_rate must be positive");
        }
        if !(self.rate_noise_std >= 0.0) {
            return config_err("rate_noise_std must be nonnegative");
        }
        if !(0.0..=1.0).contains(&self.compensation_fraction) {
            return config_err("compensation_fraction must lie in [0, 1]");
        }
        if !(self.residual_noise_std >= 0.0) {
            return config_err("residual_noise_std must be nonnegative");
        }
        if !self.loan_min_value.is_positive() {
            return config_err("loan_min_value must be positive");
        }
        if !(0.0..=1.0).contains(&self.term_loan_fraction) {
            return config_err("term_loan_fraction must lie in [0, 1]");
        }
        Ok(())
    }

    /// Parses a flat `key = value` config file. Blank lines and lines starting
    /// with `#` are skipped. Unknown or repeated keys are errors. Omitted keys
    /// keep their defaults; when `daily_volume` shrinks below the default five
    /// days and no mixture key is given, the default mixtures are truncated to
    /// match.
    ///
    /// Keys: `bank_count`, `big_bank_count`, `big_bank_share`,
    /// `weight_exponent`, `daily_volume` (comma-separated counts),
    /// `value_mixture_N` (six comma-separated numbers: mean, variance, weight
    /// of the low component, then of the high one), `target_rate`,
    /// `rate_noise_std`, `compensation_fraction`, `residual_noise_std`,
    /// `loan_min_value_cents`, `match_policy` (`greedy` | `proportional`),
    /// `term_loan_fraction`, `seed`.
    pub fn from_key_values(text: &str) -> Result<GeneratorConfig, SynthError> {
        let mut config = GeneratorConfig::default();
        let mut seen = std::collections::BTreeSet::new();
        let mut explicit_mixture_days = std::collections::BTreeSet::new();

        for (index, raw_line) in text.lines().enumerate() {
            let line_no = index + 1;
            let line = raw_line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return config_err(format!("line {line_no}: expected `key = value`"));
            };
            let key = key.trim();
            let value = value.trim();
            if !seen.insert(key.to_string()) {
                return config_err(format!("line {line_no}: key `{key}` given twice"));
            }

            let parse_usize = |v: &str| {
                v.parse::<usize>()
                    .map_err(|_| SynthError::Config(format!("line {line_no}: bad count `{v}`")))
            };
            let parse_f64 = |v: &str| {
                v.parse::<f64>()
                    .map_err(|_| SynthError::Config(format!("line {line_no}: bad number `{v}`")))
            };

            match key {
                "bank_count" => config.bank_count = parse_usize(value)?,
                "big_bank_count" => config.big_bank_count = parse_usize(value)?,
                "big_bank_share" => config.big_bank_share = parse_f64(value)?,
                "weight_exponent" => config.weight_exponent = parse_f64(value)?,
                "daily_volume" => {
                    config.daily_volume = value
                        .split(',')
                        .map(|v| parse_usize(v.trim()))
                        .collect::<Result<_, _>>()?;
                }
                "target_rate" => config.target_rate.annual_percent = parse_f64(value)?,
                "rate_noise_std" => config.rate_noise_std = parse_f64(value)?,
                "compensation_fraction" => config.compensation_fraction = parse_f64(value)?,
                "residual_noise_std" => config.residual_noise_std = parse_f64(value)?,
                "loan_min_value_cents" => {
                    let cents = value.parse::<i64>().map_err(|_| {
                        SynthError::Config(format!("line {line_no}: bad cent amount `{value}`"))
                    })?;
                    config.loan_min_value = MoneyValue::from_cents(cents);
                }
                "match_policy" => {
                    config.match_policy = match value {
                        "greedy" => MatchPolicy::Greedy,
                        "proportional" => MatchPolicy::Proportional,
                        other => {
                            return config_err(format!(
                                "line {line_no}: unknown match policy `{other}`"
                            ))
                        }
                    };
                }
                "term_loan_fraction" => config.term_loan_fraction = parse_f64(value)?,
                "seed" => {
                    config.seed = value.parse::<u64>().map_err(|_| {
                        SynthError::Config(format!("line {line_no}: bad seed `{value}`"))
                    })?;
                }
                _ if key.starts_with("value_mixture_") => {
                    let day = key["value_mixture_".len()..].parse::<usize>().map_err(|_| {
                        SynthError::Config(format!("line {line_no}: bad mixture key `{key}`"))
                    })?;
                    let numbers = value
                        .split(',')
                        .map(|v| parse_f64(v.trim()))
                        .collect::<Result<Vec<_>, _>>()?;
                    let row: [f64; 6] = numbers.try_into().map_err(|_| {
                        SynthError::Config(format!("line {line_no}: mixture needs six numbers"))
                    })?;
                    if config.value_mixture.len() <= day {
                        config.value_mixture.resize(day + 1, mixture_from_row(&row));
                    }
                    config.value_mixture[day] = mixture_from_row(&row);
                    explicit_mixture_days.insert(day);
                }
                other => return config_err(format!("line {line_no}: unknown key `{other}`")),
            }
        }

        // default mixtures shrink with the week unless a listed day contradicts that
        if config.value_mixture.len() > config.daily_volume.len()
            && explicit_mixture_days.iter().all(|&d| d < config.daily_volume.len())
        {
            config.value_mixture.truncate(config.daily_volume.len());
        }
        config.validate()?;
        Ok(config)
    }
}

/// A generated week together with every loan the market actually created.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledWeek {
    pub week: WeekDataset,
    pub truth: Vec<Loan>,
}

/// A loan the money market decided to make; legs are materialized by the
/// caller.
#[derive(Debug, Clone, PartialEq)]
pub struct LoanOrder {
    pub lender: BankId,
    pub borrower: BankId,
    pub value: MoneyValue,
}

/// Turns one day's nonloan imbalances into loan orders.
///
/// Each bank's compensation target is `compensation_fraction` of its
/// imbalance magnitude, perturbed by the relative residual noise (clamped at
/// zero). Orders at or below `loan_min_value` are suppressed, so small
/// residuals stay uncompensated.
pub fn money_market_step(
    imbalance: &ImbalanceTable,
    config: &GeneratorConfig,
    rng: &mut impl Rng,
) -> Vec<LoanOrder> {
    let noise = Normal::new(0.0, config.residual_noise_std).expect("validated noise level");
    let mut lenders: Vec<(i64, BankId)> = Vec::new();
    let mut borrowers: Vec<(i64, BankId)> = Vec::new();
    for (bank, value) in &imbalance.imbalance {
        if value.cents == 0 {
            continue;
        }
        let scale = config.compensation_fraction * (1.0 + noise.sample(rng)).max(0.0);
        let target = (value.cents.abs() as f64 * scale).round() as i64;
        if target <= 0 {
            continue;
        }
        if value.is_positive() {
            lenders.push((target, bank.clone()));
        } else {
            borrowers.push((target, bank.clone()));
        }
    }

    match config.match_policy {
        MatchPolicy::Greedy => greedy_orders(lenders, borrowers, config.loan_min_value),
        MatchPolicy::Proportional => proportional_orders(lenders, borrowers, config.loan_min_value),
    }
}

fn greedy_orders(
    lenders: Vec<(i64, BankId)>,
    borrowers: Vec<(i64, BankId)>,
    min_value: MoneyValue,
) -> Vec<LoanOrder> {
    use std::cmp::Reverse;
    use std::collections::BinaryHeap;

    // heap keys: largest target first, bank list position breaking ties
    let mut surplus: BinaryHeap<(i64, Reverse<usize>)> =
        lenders.iter().enumerate().map(|(i, (t, _))| (*t, Reverse(i))).collect();
    let mut deficit: BinaryHeap<(i64, Reverse<usize>)> =
        borrowers.iter().enumerate().map(|(i, (t, _))| (*t, Reverse(i))).collect();

    let mut orders = Vec::new();
    while let (Some(&(s, Reverse(si))), Some(&(d, Reverse(di)))) = (surplus.peek(), deficit.peek())
    {
        surplus.pop();
        deficit.pop();
        let value = s.min(d);
        if value > min_value.cents {
            orders.push(LoanOrder {
                lender: lenders[si].1.clone(),
                borrower: borrowers[di].1.clone(),
                value: MoneyValue::from_cents(value),
            });
            if s - value > 0 {
                surplus.push((s - value, Reverse(si)));
            }
            if d - value > 0 {
                deficit.push((d - value, Reverse(di)));
            }
        } else {
            // the smaller side cannot fund a loan above the floor; drop it
            if s > d {
                surplus.push((s, Reverse(si)));
            } else if d > s {
                deficit.push((d, Reverse(di)));
            }
        }
    }
    orders
}

fn proportional_orders(
    lenders: Vec<(i64, BankId)>,
    borrowers: Vec<(i64, BankId)>,
    min_value: MoneyValue,
) -> Vec<LoanOrder> {
    let total_deficit: i64 = borrowers.iter().map(|(t, _)| t).sum();
    if total_deficit == 0 {
        return Vec::new();
    }
    let mut orders = Vec::new();
    for (target, lender) in &lenders {
        for (deficit, borrower) in &borrowers {
            let value =
                (*target as f64 * (*deficit as f64 / total_deficit as f64)).round() as i64;
            if value > min_value.cents {
                orders.push(LoanOrder {
                    lender: lender.clone(),
                    borrower: borrower.clone(),
                    value: MoneyValue::from_cents(value),
                });
            }
        }
    }
    orders
}

/// Generates a labeled week. Deterministic given the config, including its
/// seed; each day consumes its own random substream.
pub fn generate_week(config: &GeneratorConfig) -> Result<LabeledWeek, SynthError> {
    config.validate()?;
    let day_count = config.daily_volume.len();
    let banks: Vec<BankId> = (0..config.bank_count).map(BankId::from_index).collect();
    let bank_set = banks.iter().cloned().collect();
    let weights = bank_weights(config);
    let picker = WeightedIndex::new(&weights).expect("validated weights");

    let mut days: Vec<Vec<Transaction>> = vec![Vec::new(); day_count];
    let mut repayment_count = vec![0usize; day_count];
    let mut truth: Vec<Loan> = Vec::new();

    for day in 0..day_count {
        let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
        rng.set_stream(day as u64 + 1);

        let nonloan_count = config.daily_volume[day].saturating_sub(repayment_count[day]);
        let mut nonloans = Vec::with_capacity(nonloan_count);
        for _ in 0..nonloan_count {
            let source = picker.sample(&mut rng);
            let mut destination = picker.sample(&mut rng);
            while destination == source {
                destination = picker.sample(&mut rng);
            }
            let u = draw_log_value(&mut rng, &config.value_mixture[day]);
            let cents = ((10f64.powf(u) * 100.0).round() as i64).max(1);
            nonloans.push(Transaction {
                day,
                source: banks[source].clone(),
                destination: banks[destination].clone(),
                value: MoneyValue::from_cents(round_to_three_digits(cents)),
            });
        }

        if day + 1 < day_count && config.compensation_fraction > 0.0 {
            let network = aggregate_flows(day, &nonloans, FlowKind::Nonloan);
            let table = imbalances(&network, &bank_set);
            let orders = money_market_step(&table, config, &mut rng);
            let rate_noise =
                Normal::new(0.0, config.rate_noise_std).expect("validated noise level");
            for order in orders {
                let term = if config.term_loan_fraction > 0.0 && day + 2 < day_count {
                    if rng.random::<f64>() < config.term_loan_fraction {
                        2
                    } else {
                        1
                    }
                } else {
                    1
                };
                let rate = config.target_rate.annual_percent + rate_noise.sample(&mut rng);
                let principal = order.value.cents;
                let interest =
                    (principal as f64 * rate * term as f64 / 36500.0).round() as i64;
                let repayment = (principal + interest).max(1);
                let first_leg = Transaction {
                    day,
                    source: order.lender.clone(),
                    destination: order.borrower.clone(),
                    value: order.value,
                };
                let second_leg = Transaction {
                    day: day + term,
                    source: order.borrower.clone(),
                    destination: order.lender.clone(),
                    value: MoneyValue::from_cents(repayment),
                };
                let realized = hypothetical_rate(first_leg.value, second_leg.value, term)
                    .expect("positive principal");
                days[day + term].push(second_leg.clone());
                repayment_count[day + term] += 1;
                truth.push(Loan {
                    lender: order.lender,
                    borrower: order.borrower,
                    first_leg: first_leg.clone(),
                    second_leg,
                    term_days: term,
                    rate: realized,
                });
                days[day].push(first_leg);
            }
        }

        days[day].append(&mut nonloans);
    }

    for txs in &mut days {
        txs.sort_unstable();
    }
    truth.sort_by(|a, b| a.first_leg.cmp(&b.first_leg).then(a.term_days.cmp(&b.term_days)));

    Ok(LabeledWeek { week: WeekDataset { days, banks: bank_set }, truth })
}

/// Zipf-profile traffic weights with the leading block pinned to
/// `big_bank_share` of the total.
fn bank_weights(config: &GeneratorConfig) -> Vec<f64> {
    let raw: Vec<f64> =
        (1..=config.bank_count).map(|i| (i as f64).powf(-config.weight_exponent)).collect();
    let big = config.big_bank_count;
    if big == config.bank_count {
        return raw;
    }
    let top: f64 = raw[..big].iter().sum();
    let rest: f64 = raw[big..].iter().sum();
    raw.iter()
        .enumerate()
        .map(|(i, w)| {
            if i < big {
                config.big_bank_share * w / top
            } else {
                (1.0 - config.big_bank_share) * w / rest
            }
        })
        .collect()
}

fn draw_log_value(rng: &mut impl Rng, mixture: &DayMixture) -> f64 {
    let component =
        if rng.random::<f64>() < mixture[0].weight { &mixture[0] } else { &mixture[1] };
    Normal::new(component.mean, component.variance.sqrt())
        .expect("validated mixture component")
        .sample(rng)
}

/// Rounds a positive cent amount to three significant digits, mirroring how
/// real payments cluster at round values. Loan repayments stay exact, so the
/// rounding also keeps ordinary payments out of the narrow repayment windows
/// the matcher searches.
fn round_to_three_digits(cents: i64) -> i64 {
    if cents < 1000 {
        return cents;
    }
    let scale = 10i64.pow(cents.ilog10() + 1 - 3);
    (cents + scale / 2) / scale * scale
}
