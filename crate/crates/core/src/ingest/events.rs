use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::xdr::{prepare, scan_chunk};
use super::{check_budget, line_chunks, CellRegistry, Diagnostic, IngestError, ParseOptions, SubscriberTable, XdrEvent};

/// Event with ids resolved to registry / subscriber-table indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CompactEvent {
    pub subscriber: u32,
    pub ts: i64,
    pub cell: u32,
}

/// Referential integrity findings for a batch of events.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ValidationReport {
    /// Cell ids absent from the registry, with event counts. Fatal.
    pub unknown_cells: BTreeMap<String, usize>,
    /// Subscribers absent from the subscriber table, with event counts. Their
    /// events are excluded.
    pub unknown_subscribers: BTreeMap<String, usize>,
    pub excluded_events: usize,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.unknown_cells.is_empty() && self.unknown_subscribers.is_empty()
    }

    pub fn is_fatal(&self) -> bool {
        !self.unknown_cells.is_empty()
    }

    /// Fails on unresolved cells, which make placement impossible.
    pub fn ensure_resolvable(&self) -> Result<(), IngestError> {
        if self.is_fatal() {
            return Err(IngestError::UnresolvedCells(self.unknown_cells.keys().cloned().collect()));
        }
        Ok(())
    }

    pub fn warnings(&self) -> Vec<String> {
        self.unknown_subscribers
            .iter()
            .map(|(s, n)| format!("subscriber `{s}` not in subscriber table: {n} event(s) excluded"))
            .collect()
    }

    fn merge(&mut self, other: ValidationReport) {
        for (k, v) in other.unknown_cells {
            *self.unknown_cells.entry(k).or_default() += v;
        }
        for (k, v) in other.unknown_subscribers {
            *self.unknown_subscribers.entry(k).or_default() += v;
        }
        self.excluded_events += other.excluded_events;
    }

    fn record(&mut self, sub: Option<u32>, cell: Option<u32>, sub_id: &str, cell_id: &str) -> Option<CompactEvent> {
        if cell.is_none() {
            *self.unknown_cells.entry(cell_id.to_string()).or_default() += 1;
        }
        if sub.is_none() {
            *self.unknown_subscribers.entry(sub_id.to_string()).or_default() += 1;
        }
        match (sub, cell) {
            (Some(subscriber), Some(cell)) => Some(CompactEvent { subscriber, ts: 0, cell }),
            _ => {
                self.excluded_events += 1;
                None
            }
        }
    }
}

/// Lists unresolved cell ids (fatal) and unknown subscribers (warning).
pub fn validate_refs(events: &[XdrEvent], registry: &CellRegistry, subscribers: &SubscriberTable) -> ValidationReport {
    let mut report = ValidationReport::default();
    for e in events {
        report.record(subscribers.lookup(&e.subscriber_id), registry.lookup(&e.cell_id), &e.subscriber_id, &e.cell_id);
    }
    report
}

/// Line accounting for [`EventTable::ingest`].
#[derive(Clone, Debug, Default)]
pub struct IngestSummary {
    pub lines: usize,
    pub diagnostics: Vec<Diagnostic>,
    pub report: ValidationReport,
}

/// Validated events in compact form: 16 bytes per event.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventTable {
    pub events: Vec<CompactEvent>,
}

impl EventTable {
    /// Resolves typed events; events with unknown ids are left out and reported.
    pub fn from_events(events: &[XdrEvent], registry: &CellRegistry, subscribers: &SubscriberTable) -> (Self, ValidationReport) {
        let mut report = ValidationReport::default();
        let mut out = Vec::with_capacity(events.len());
        for e in events {
            if let Some(mut c) =
                report.record(subscribers.lookup(&e.subscriber_id), registry.lookup(&e.cell_id), &e.subscriber_id, &e.cell_id)
            {
                c.ts = e.ts;
                out.push(c);
            }
        }
        (Self { events: out }, report)
    }

    /// Parses and resolves an xDR export in one pass without materializing
    /// string-keyed events. Equivalent to [`super::parse_xdr`] followed by
    /// [`EventTable::from_events`].
    pub fn ingest(
        bytes: &[u8],
        opts: &ParseOptions,
        registry: &CellRegistry,
        subscribers: &SubscriberTable,
    ) -> Result<(Self, IngestSummary), IngestError> {
        let (schema, body, first_line) = prepare(bytes)?;
        let parts = rayon::current_num_threads() * 4;
        let results: Vec<_> = line_chunks(body, first_line, parts)
            .into_par_iter()
            .map(|(chunk, line)| {
                let mut out = Vec::with_capacity(chunk.len() / 24);
                let mut report = ValidationReport::default();
                let (lines, diags) = scan_chunk(schema, chunk, line, opts.horizon, |_, r| {
                    let cell = registry.lookup(&r.cell_id);
                    let sub = subscribers.lookup(&r.subscriber_id);
                    if let Some(mut c) = report.record(sub, cell, &r.subscriber_id, &r.cell_id) {
                        c.ts = r.ts;
                        out.push(c);
                    }
                });
                (out, lines, diags, report)
            })
            .collect();
        let mut table = EventTable { events: Vec::with_capacity(results.iter().map(|r| r.0.len()).sum()) };
        let mut summary = IngestSummary::default();
        for (events, lines, diags, report) in results {
            table.events.extend(events);
            summary.lines += lines;
            summary.diagnostics.extend(diags);
            summary.report.merge(report);
        }
        check_budget(summary.lines, &summary.diagnostics, opts)?;
        Ok((table, summary))
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}
