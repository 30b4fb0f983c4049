use alloc::string::String;
use alloc::vec::Vec;

use crate::mpc::{Category, CommLedger, Counters};

/// One line of the per-category accounting table.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    /// A category name, or `"Total"`.
    pub label: String,
    pub counters: Counters,
    /// `total / baseline total`, on the total row when a baseline is given.
    pub fraction: Option<f64>,
}

/// Ratio of total bytes against a baseline; `None` when the baseline is empty.
pub fn fraction(ledger: &CommLedger, baseline: &CommLedger) -> Option<f64> {
    let b = baseline.total().bytes;
    (b > 0).then(|| ledger.total().bytes as f64 / b as f64)
}

/// Rows for every category followed by the total.
pub fn ledger_report(ledger: &CommLedger, baseline: Option<&CommLedger>) -> Vec<ReportRow> {
    let mut rows: Vec<ReportRow> = Category::ALL
        .iter()
        .map(|&c| ReportRow { label: String::from(c.name()), counters: ledger.get(c), fraction: None })
        .collect();
    rows.push(ReportRow {
        label: String::from("Total"),
        counters: ledger.total(),
        fraction: baseline.and_then(|b| fraction(ledger, b)),
    });
    rows
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn categories_sum_to_total() {
        let mut l = CommLedger::new();
        l.charge(Category::Embed, 100, 1);
        l.charge(Category::Linear, 50, 3);
        l.charge(Category::Other, 7, 1);
        let rows = ledger_report(&l, Some(&l));
        assert_eq!(rows.len(), 6);
        let sum: u64 = rows[..5].iter().map(|r| r.counters.bytes).sum();
        assert_eq!(sum, rows[5].counters.bytes);
        assert_eq!(rows[5].fraction, Some(1.0));
        assert!(rows[..5].iter().all(|r| r.fraction.is_none()));
        assert_eq!(fraction(&l, &CommLedger::new()), None);
    }
}
