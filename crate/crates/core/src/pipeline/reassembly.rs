//! Restores per-document element order from out-of-order recognition
//! results.

use std::collections::{BTreeMap, HashMap, HashSet};

use thiserror::Error;

use crate::assemble::{DocElement, Document, ElementContent};
use crate::domain::LayoutElement;
use crate::pipeline::{ParsedDocument, PipelineError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReassemblyError {
    #[error("sequence id {0} resolved twice")]
    DuplicateSequenceId(u64),
    #[error("sequence id {0} registered twice")]
    DuplicateRegistration(u64),
    #[error("no result for sequence ids {0:?}")]
    MissingResults(Vec<u64>),
    #[error("results for unregistered sequence ids {0:?}")]
    UnknownSequenceIds(Vec<u64>),
}

/// One element of a laid-out page: either already final (figures) or
/// waiting for the result of `sequence_id`.
#[derive(Debug, Clone)]
pub struct PendingElement {
    pub order_index: usize,
    pub element: LayoutElement,
    pub slot: Slot,
}

#[derive(Debug, Clone)]
pub enum Slot {
    Ready(ElementContent),
    Waiting(u64),
}

#[derive(Default)]
struct DocState {
    name: String,
    expected_pages: Option<usize>,
    pages: BTreeMap<usize, Vec<PendingElement>>,
    figures: Vec<(String, Vec<u8>)>,
    unresolved: usize,
    done: bool,
}

/// Buffers pages and results until each document is complete.
#[derive(Default)]
pub struct Reassembler {
    docs: HashMap<usize, DocState>,
    locations: HashMap<u64, (usize, usize, usize)>,
    resolved: HashSet<u64>,
    early: HashMap<u64, ElementContent>,
    completed: Vec<(usize, Result<ParsedDocument, PipelineError>)>,
}

impl Reassembler {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn start_document(&mut self, doc: usize, name: &str) {
        self.docs.entry(doc).or_default().name = name.to_string();
    }

    /// Register a laid-out page. Results that arrived before registration
    /// are applied immediately.
    pub fn register_page(
        &mut self,
        doc: usize,
        page: usize,
        elements: Vec<PendingElement>,
        figures: Vec<(String, Vec<u8>)>,
    ) -> Result<(), ReassemblyError> {
        let state = self.docs.entry(doc).or_default();
        if state.done {
            return Ok(());
        }
        for (pos, e) in elements.iter().enumerate() {
            if let Slot::Waiting(seq) = e.slot {
                if self.locations.insert(seq, (doc, page, pos)).is_some() {
                    return Err(ReassemblyError::DuplicateRegistration(seq));
                }
                state.unresolved += 1;
            }
        }
        state.figures.extend(figures);
        state.pages.insert(page, elements);
        let early: Vec<u64> = self
            .early
            .keys()
            .copied()
            .filter(|s| self.locations.get(s).is_some_and(|l| l.0 == doc && l.1 == page))
            .collect();
        for seq in early {
            let content = self.early.remove(&seq).expect("present");
            self.apply(seq, content);
        }
        self.check(doc);
        Ok(())
    }

    /// Number of pages the document has; completion waits for all of them.
    pub fn set_page_count(&mut self, doc: usize, pages: usize) {
        self.docs.entry(doc).or_default().expected_pages = Some(pages);
        self.check(doc);
    }

    pub fn fail(&mut self, doc: usize, err: PipelineError) {
        let state = self.docs.entry(doc).or_default();
        if !state.done {
            state.done = true;
            state.pages.clear();
            state.figures.clear();
            self.completed.push((doc, Err(err)));
        }
    }

    pub fn resolve(&mut self, seq: u64, content: ElementContent) -> Result<(), ReassemblyError> {
        if !self.resolved.insert(seq) {
            return Err(ReassemblyError::DuplicateSequenceId(seq));
        }
        match self.locations.get(&seq) {
            Some(&(doc, _, _)) => {
                self.apply(seq, content);
                self.check(doc);
            }
            None => {
                self.early.insert(seq, content);
            }
        }
        Ok(())
    }

    fn apply(&mut self, seq: u64, content: ElementContent) {
        let (doc, page, pos) = self.locations[&seq];
        let state = self.docs.get_mut(&doc).expect("registered");
        if state.done {
            return;
        }
        let slot = &mut state.pages.get_mut(&page).expect("registered")[pos].slot;
        if matches!(slot, Slot::Waiting(s) if *s == seq) {
            *slot = Slot::Ready(content);
            state.unresolved -= 1;
        }
    }

    fn check(&mut self, doc: usize) {
        let Some(state) = self.docs.get_mut(&doc) else {
            return;
        };
        let complete = !state.done
            && state.unresolved == 0
            && state.expected_pages.is_some_and(|n| state.pages.len() == n);
        if !complete {
            return;
        }
        state.done = true;
        let pages = std::mem::take(&mut state.pages)
            .into_values()
            .map(|mut els| {
                els.sort_by_key(|e| e.order_index);
                els.into_iter()
                    .map(|e| DocElement {
                        order_index: e.order_index,
                        source: e.element,
                        content: match e.slot {
                            Slot::Ready(c) => c,
                            Slot::Waiting(_) => unreachable!("unresolved count is zero"),
                        },
                    })
                    .collect()
            })
            .collect();
        let mut figures = std::mem::take(&mut state.figures);
        figures.sort_by(|a, b| a.0.cmp(&b.0));
        self.completed.push((
            doc,
            Ok(ParsedDocument {
                name: state.name.clone(),
                document: Document::new(state.name.clone(), pages),
                figures,
            }),
        ));
    }

    /// Documents finished since the last call.
    pub fn take_completed(&mut self) -> Vec<(usize, Result<ParsedDocument, PipelineError>)> {
        std::mem::take(&mut self.completed)
    }

    /// Called at shutdown: every registered id must have been resolved.
    pub fn finish(&mut self) -> Result<(), ReassemblyError> {
        let mut missing: Vec<u64> = self
            .locations
            .iter()
            .filter(|(seq, (doc, _, _))| {
                !self.resolved.contains(seq) && self.docs.get(doc).is_some_and(|d| !d.done)
            })
            .map(|(seq, _)| *seq)
            .collect();
        if !missing.is_empty() {
            missing.sort_unstable();
            return Err(ReassemblyError::MissingResults(missing));
        }
        if !self.early.is_empty() {
            let mut ids: Vec<u64> = self.early.keys().copied().collect();
            ids.sort_unstable();
            return Err(ReassemblyError::UnknownSequenceIds(ids));
        }
        Ok(())
    }

    /// Documents started but never completed or failed.
    pub fn unfinished(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self
            .docs
            .iter()
            .filter(|(_, d)| !d.done)
            .map(|(k, _)| *k)
            .collect();
        v.sort_unstable();
        v
    }
}
