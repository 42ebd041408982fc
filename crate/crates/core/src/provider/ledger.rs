use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Caller, ModelRole, Phase, Usage};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub caller: Caller,
    pub phase: Phase,
    pub role: ModelRole,
    pub tag: String,
    pub usage: Usage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Totals {
    pub calls: u64,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub cost_micros: u64,
}

impl Totals {
    fn add(&mut self, usage: &Usage) {
        self.calls += 1;
        self.input_tokens += usage.input_tokens;
        self.output_tokens += usage.output_tokens;
        self.cost_micros += usage.cost_micros;
    }
}

/// Append-only usage log. Totals are always recomputed from the entries.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CostLedger {
    entries: Vec<LedgerEntry>,
}

impl CostLedger {
    pub fn push(&mut self, entry: LedgerEntry) {
        self.entries.push(entry);
    }

    pub fn extend(&mut self, other: &CostLedger) {
        self.entries.extend(other.entries.iter().cloned());
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    pub fn totals(&self) -> BTreeMap<(Caller, Phase), Totals> {
        let mut totals: BTreeMap<(Caller, Phase), Totals> = BTreeMap::new();
        for e in &self.entries {
            totals.entry((e.caller, e.phase)).or_default().add(&e.usage);
        }
        totals
    }

    pub fn total_for(&self, caller: Caller) -> Totals {
        let mut t = Totals::default();
        for e in self.entries.iter().filter(|e| e.caller == caller) {
            t.add(&e.usage);
        }
        t
    }

    /// JSON-lines, one entry per line.
    pub fn to_jsonl(&self) -> String {
        self.entries
            .iter()
            .map(|e| serde_json::to_string(e).expect("ledger entry serializes") + "\n")
            .collect()
    }
}

/// Memory-production cost during collection plus knowledge-generation cost
/// during deployment. Policy and meta-agent spend are excluded.
pub fn end_to_end_memory_cost(ledger: &CostLedger) -> u64 {
    ledger
        .entries()
        .iter()
        .filter(|e| e.caller == Caller::MemoryDesign && matches!(e.phase, Phase::Collection | Phase::Deployment))
        .map(|e| e.usage.cost_micros)
        .sum()
}
