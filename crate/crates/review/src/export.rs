//! Filtered split and acceptance report.

use std::collections::BTreeMap;

use ils_core::model::{LesionType, Polarity};
use serde::{Deserialize, Serialize};

use crate::assign::Worklists;
use crate::samples::Sample;
use crate::store::{Decision, VerdictMap};

/// Accepted out of evaluated, with the rate in percent.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Rate {
    pub accepted: u64,
    pub evaluated: u64,
    pub percent: Option<f64>,
}

impl Rate {
    fn add(&mut self, accepted: bool) {
        self.evaluated += 1;
        self.accepted += accepted as u64;
        self.percent = Some(100.0 * self.accepted as f64 / self.evaluated as f64);
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub total: Rate,
    pub positive: Rate,
    pub negative: Rate,
}

impl Rates {
    fn add(&mut self, polarity: Polarity, accepted: bool) {
        self.total.add(accepted);
        match polarity {
            Polarity::Positive => self.positive.add(accepted),
            Polarity::Negative => self.negative.add(accepted),
        }
    }
}

/// Per-expert rates count that expert's own verdicts. Overall and
/// per-lesion rates count a sample as accepted only when every expert it
/// was assigned to accepted it, and as rejected as soon as one did not.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceReport {
    pub experts: BTreeMap<String, Rates>,
    pub overall: Rates,
    pub per_lesion: BTreeMap<LesionType, Rates>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Export {
    /// Samples with no `not_acceptable` verdict, including unreviewed ones.
    pub samples: Vec<Sample>,
    pub excluded: Vec<String>,
    /// Samples still waiting for at least one assigned expert.
    pub unreviewed: Vec<String>,
    pub report: AcceptanceReport,
}

/// Applies the exclusion rule: any `not_acceptable` verdict removes a
/// sample. Verdicts from experts the sample was not assigned to are ignored.
pub fn export_filtered(samples: &[Sample], worklists: &Worklists, verdicts: &VerdictMap) -> Export {
    let mut assigned: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (expert, ids) in worklists {
        for id in ids {
            assigned.entry(id).or_default().push(expert);
        }
    }

    let mut out = Export {
        samples: Vec::new(),
        excluded: Vec::new(),
        unreviewed: Vec::new(),
        report: AcceptanceReport::default(),
    };
    for e in worklists.keys() {
        out.report.experts.insert(e.clone(), Rates::default());
    }
    let mut ordered: Vec<&Sample> = samples.iter().collect();
    ordered.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));

    for s in ordered {
        let experts = assigned.get(s.sample_id.as_str()).map(Vec::as_slice).unwrap_or(&[]);
        let mut rejected = false;
        let mut pending = experts.is_empty();
        for &e in experts {
            match verdicts.get(&(e.to_string(), s.sample_id.clone())) {
                Some(v) => {
                    let ok = v.decision == Decision::Acceptable;
                    rejected |= !ok;
                    out.report.experts.get_mut(e).expect("listed").add(s.polarity, ok);
                }
                None => pending = true,
            }
        }
        if rejected || !pending {
            out.report.overall.add(s.polarity, !rejected);
            out.report.per_lesion.entry(s.lesion).or_default().add(s.polarity, !rejected);
        }
        if pending {
            out.unreviewed.push(s.sample_id.clone());
        }
        if rejected {
            out.excluded.push(s.sample_id.clone());
        } else {
            out.samples.push(s.clone());
        }
    }
    out
}

/// Plain-text rendering of the report, one row per expert then overall.
pub fn render_report(r: &AcceptanceReport) -> String {
    let pct = |x: &Rate| x.percent.map_or("-".to_string(), |p| format!("{p:.1}%"));
    let row = |name: &str, x: &Rates| {
        format!(
            "{name:<16} {:>8} ({:>5}) {:>8} ({:>5}) {:>8} ({:>5})\n",
            pct(&x.total),
            x.total.evaluated,
            pct(&x.positive),
            x.positive.evaluated,
            pct(&x.negative),
            x.negative.evaluated
        )
    };
    let mut s = format!("{:<16} {:>16} {:>16} {:>16}\n", "", "total", "positive", "negative");
    for (e, x) in &r.experts {
        s.push_str(&row(e, x));
    }
    s.push_str(&row("overall", &r.overall));
    for (l, x) in &r.per_lesion {
        s.push_str(&row(l.as_str(), x));
    }
    s
}
