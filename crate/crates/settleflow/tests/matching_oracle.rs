//! Compares the greedy matcher against an exhaustive conflict-free pairing
//! search on small instances. Within one term stage the greedy pass should
//! pair as many legs as the optimum whenever candidate clusters are disjoint;
//! with deliberately overlapping clusters it may fall short of the optimum
//! count, which is reported rather than asserted. The summed rate deviation
//! of the greedy choice is also compared against the best achievable at the
//! same pairing count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use settleflow::loans::{extract_loans, hypothetical_rate, MatchParams};
use settleflow::model::{BankId, MoneyValue, Transaction, WeekDataset};

const MAX_TX: usize = 12;
const MAX_CANDIDATES: usize = 14;

/// One stage's candidate pair: indexes into the flat transaction list.
struct Candidate {
    first: usize,
    second: usize,
    diff: f64,
}

fn stage_candidates(txs: &[Transaction], term: usize, params: &MatchParams) -> Vec<Candidate> {
    let mut out = Vec::new();
    for (i, first) in txs.iter().enumerate() {
        if first.value.cents <= params.min_value.cents {
            continue;
        }
        for (j, second) in txs.iter().enumerate() {
            if second.day != first.day + term
                || second.source != first.destination
                || second.destination != first.source
            {
                continue;
            }
            let rate = hypothetical_rate(first.value, second.value, term).expect("positive legs");
            let diff = (rate - params.target_rate.annual_percent).abs();
            if diff < params.rate_band {
                out.push(Candidate { first: i, second: j, diff });
            }
        }
    }
    out
}

/// Exhaustive search over conflict-free candidate subsets: maximum pair
/// count, and among those the minimum summed deviation.
fn best_pairing(candidates: &[Candidate]) -> (usize, f64) {
    fn go(candidates: &[Candidate], index: usize, used: u32, count: usize, sum: f64, best: &mut (usize, f64)) {
        if index == candidates.len() {
            if count > best.0 || (count == best.0 && sum < best.1) {
                *best = (count, sum);
            }
            return;
        }
        // Even taking every remaining candidate cannot beat the best count.
        if count + (candidates.len() - index) < best.0 {
            return;
        }
        let c = &candidates[index];
        if used & (1 << c.first) == 0 && used & (1 << c.second) == 0 {
            go(
                candidates,
                index + 1,
                used | (1 << c.first) | (1 << c.second),
                count + 1,
                sum + c.diff,
                best,
            );
        }
        go(candidates, index + 1, used, count, sum, best);
    }
    let mut best = (0, 0.0);
    go(candidates, 0, 0, 0, 0.0, &mut best);
    best
}

struct Instance {
    week: WeekDataset,
}

/// Builds a week of loan-shaped clusters: a principal with first legs on one
/// day and near-band reversing legs one or two days later, plus noise. When
/// `overlap` is set, principals within a cluster are jittered by a few parts
/// per million so different first legs compete for the same second legs.
fn random_instance(rng: &mut ChaCha12Rng, overlap: bool, params: &MatchParams) -> Option<Instance> {
    let day_count = rng.random_range(3..=4usize);
    let bank_count = rng.random_range(2..=5usize);
    let banks: Vec<BankId> = (0..bank_count).map(BankId::from_index).collect();
    let mut days: Vec<Vec<Transaction>> = vec![Vec::new(); day_count];
    let mut total = 0usize;

    let cluster_count = rng.random_range(1..=3usize);
    for cluster in 0..cluster_count {
        let base = rng.random_range(30_000_000..=50_000_000_000i64);
        // Separate clusters by far more than the rate-band window.
        let base = (base as f64 * 1.05f64.powi(cluster as i32)) as i64;
        let lender = rng.random_range(0..bank_count);
        let mut borrower = rng.random_range(0..bank_count);
        while borrower == lender {
            borrower = rng.random_range(0..bank_count);
        }
        let term = rng.random_range(1..=2usize);
        let day = rng.random_range(0..day_count - term);

        for _ in 0..rng.random_range(1..=2usize) {
            if total >= MAX_TX {
                break;
            }
            let principal = if overlap {
                (base as f64 * (1.0 + rng.random_range(-2e-5..2e-5))) as i64
            } else {
                base
            };
            days[day].push(Transaction {
                day,
                source: banks[lender].clone(),
                destination: banks[borrower].clone(),
                value: MoneyValue::from_cents(principal),
            });
            total += 1;
        }
        for _ in 0..rng.random_range(1..=2usize) {
            if total >= MAX_TX {
                break;
            }
            // Mostly inside the band, sometimes outside it.
            let rate = 6.25 + rng.random_range(-0.7..0.7);
            let repay = base + (base as f64 * rate * term as f64 / 36_500.0).round() as i64;
            days[day + term].push(Transaction {
                day: day + term,
                source: banks[borrower].clone(),
                destination: banks[lender].clone(),
                value: MoneyValue::from_cents(repay),
            });
            total += 1;
        }
    }

    while total < MAX_TX && rng.random::<f64>() < 0.3 {
        let day = rng.random_range(0..day_count);
        let source = rng.random_range(0..bank_count);
        let mut destination = rng.random_range(0..bank_count);
        while destination == source {
            destination = rng.random_range(0..bank_count);
        }
        days[day].push(Transaction {
            day,
            source: banks[source].clone(),
            destination: banks[destination].clone(),
            value: MoneyValue::from_cents(rng.random_range(1..=100_000_000_000i64)),
        });
        total += 1;
    }

    let week = WeekDataset::from_days(days);
    let flat: Vec<Transaction> = week.days.iter().flatten().cloned().collect();
    for term in 1..=params.max_term_days {
        if stage_candidates(&flat, term, params).len() > MAX_CANDIDATES {
            return None;
        }
    }
    Some(Instance { week })
}

fn run_against_oracle(overlap: bool, seed: u64, instances: usize) -> (usize, usize, f64) {
    let params = MatchParams::default();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut accepted = 0usize;
    let mut undersized_stages = 0usize;
    let mut worst_sum_gap = 0.0f64;
    while accepted < instances {
        let Some(instance) = random_instance(&mut rng, overlap, &params) else { continue };
        accepted += 1;

        let extraction = extract_loans(&instance.week, &params);
        let mut residual: Vec<Transaction> =
            instance.week.days.iter().flatten().cloned().collect();
        for term in 1..=params.max_term_days {
            let candidates = stage_candidates(&residual, term, &params);
            let (best_count, best_sum) = best_pairing(&candidates);

            let stage_loans: Vec<_> =
                extraction.loans.iter().filter(|l| l.term_days == term).collect();
            let greedy_count = stage_loans.len();
            let greedy_sum: f64 = stage_loans
                .iter()
                .map(|l| (l.rate - params.target_rate.annual_percent).abs())
                .sum();

            assert!(
                greedy_count <= best_count,
                "greedy found {greedy_count} pairs at term {term}, oracle maximum {best_count}"
            );
            if greedy_count < best_count {
                undersized_stages += 1;
                assert!(overlap, "disjoint clusters must be paired maximally");
            } else if greedy_count > 0 {
                assert!(
                    greedy_sum >= best_sum - 1e-9,
                    "oracle sum {best_sum} beaten by greedy {greedy_sum} at term {term}"
                );
                worst_sum_gap = worst_sum_gap.max(greedy_sum - best_sum);
            }

            // Advance to the greedy residual so later stages stay comparable.
            let mut used: Vec<Transaction> = Vec::new();
            for loan in &stage_loans {
                used.push(loan.first_leg.clone());
                used.push(loan.second_leg.clone());
            }
            for tx in used {
                let at = residual.iter().position(|t| *t == tx).expect("leg in residual");
                residual.remove(at);
            }
        }
    }
    (accepted, undersized_stages, worst_sum_gap)
}

#[test]
fn greedy_matches_exhaustive_pairing_on_disjoint_clusters() {
    let (accepted, undersized, worst_gap) = run_against_oracle(false, 11, 300);
    println!(
        "disjoint clusters: {accepted} instances, greedy optimal everywhere, \
         worst deviation-sum gap {worst_gap:.6}"
    );
    assert_eq!(undersized, 0);
}

#[test]
fn greedy_stays_close_to_exhaustive_pairing_under_overlap() {
    let (accepted, undersized, worst_gap) = run_against_oracle(true, 12, 300);
    println!(
        "overlapping clusters: {accepted} instances, {undersized} stages below the \
         oracle count, worst deviation-sum gap {worst_gap:.6}"
    );
    // Greedy is allowed to miss the optimum here, just not by much in bulk.
    assert!(undersized <= accepted / 10);
}
