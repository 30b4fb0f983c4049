//! In-process message channel between the two parties.

use alloc::boxed::Box;
use alloc::collections::{BTreeSet, VecDeque};
use alloc::vec::Vec;

use super::ledger::{Category, Clock, CommLedger, NullClock};
use super::share::Party;
use crate::error::{Error, Result};
use crate::ring::Ring;

/// Bytes on the wire per ring element; no framing overhead is modelled.
pub const BYTES_PER_ELEMENT: u64 = 8;

/// Two mailboxes (one per direction) plus the accounting hook.
///
/// Every message is charged to the category on top of the tag stack, or to
/// [`Category::Other`] when the stack is empty.
pub struct Channel {
    mailboxes: [VecDeque<Vec<Ring>>; 2],
    ledger: CommLedger,
    stack: Vec<Category>,
    consumed: BTreeSet<u64>,
    transcripts: Option<[Vec<Vec<Ring>>; 2]>,
    clock: Box<dyn Clock>,
    last_tick: u64,
}

impl Default for Channel {
    fn default() -> Self {
        Self::new()
    }
}

impl Channel {
    pub fn new() -> Self {
        Self::with_clock(Box::new(NullClock))
    }

    pub fn with_clock(clock: Box<dyn Clock>) -> Self {
        let last_tick = clock.now_ns();
        Self {
            mailboxes: [VecDeque::new(), VecDeque::new()],
            ledger: CommLedger::new(),
            stack: Vec::new(),
            consumed: BTreeSet::new(),
            transcripts: None,
            clock,
            last_tick,
        }
    }

    /// Starts recording every message each party receives.
    pub fn record_transcripts(&mut self) {
        self.transcripts = Some([Vec::new(), Vec::new()]);
    }

    /// Messages received so far by `party`, in order.
    pub fn transcript(&self, party: Party) -> &[Vec<Ring>] {
        match &self.transcripts {
            Some(t) => &t[party.index()],
            None => &[],
        }
    }

    pub fn current_category(&self) -> Category {
        self.stack.last().copied().unwrap_or(Category::Other)
    }

    fn tick(&mut self) {
        let now = self.clock.now_ns();
        let elapsed = now.saturating_sub(self.last_tick);
        self.last_tick = now;
        let cat = self.current_category();
        self.ledger.add_wall(cat, elapsed);
    }

    pub fn push_category(&mut self, cat: Category) {
        self.tick();
        self.stack.push(cat);
    }

    pub fn pop_category(&mut self) {
        self.tick();
        self.stack.pop();
    }

    /// A ledger copy with wall time flushed up to now.
    pub fn snapshot(&mut self) -> CommLedger {
        self.tick();
        self.ledger.clone()
    }

    pub fn ledger(&self) -> &CommLedger {
        &self.ledger
    }

    fn post(&mut self, from: Party, msg: Vec<Ring>) {
        self.mailboxes[from.other().index()].push_back(msg);
    }

    fn take(&mut self, to: Party) -> Vec<Ring> {
        let msg = self.mailboxes[to.index()].pop_front().unwrap_or_default();
        if let Some(t) = &mut self.transcripts {
            t[to.index()].push(msg.clone());
        }
        msg
    }

    /// One simultaneous round in which both parties send a message.
    ///
    /// Returns `(received by client, received by server)`.
    pub fn exchange(&mut self, from_client: Vec<Ring>, from_server: Vec<Ring>) -> (Vec<Ring>, Vec<Ring>) {
        let bytes = BYTES_PER_ELEMENT * (from_client.len() + from_server.len()) as u64;
        self.post(Party::Client, from_client);
        self.post(Party::Server, from_server);
        let cat = self.current_category();
        self.ledger.charge(cat, bytes, 1);
        let to_client = self.take(Party::Client);
        let to_server = self.take(Party::Server);
        (to_client, to_server)
    }

    /// One round in which only `from` speaks; returns what the other party received.
    pub fn transfer(&mut self, from: Party, msg: Vec<Ring>) -> Vec<Ring> {
        let bytes = BYTES_PER_ELEMENT * msg.len() as u64;
        self.post(from, msg);
        let cat = self.current_category();
        self.ledger.charge(cat, bytes, 1);
        self.take(from.other())
    }

    /// Charges an idealised gadget that costs one round of `elements` ring
    /// elements in each direction.
    pub fn charge_gadget(&mut self, elements: usize) {
        let cat = self.current_category();
        self.ledger.charge(cat, 2 * BYTES_PER_ELEMENT * elements as u64, 1);
    }

    /// Marks a triple as used; a second use is a protocol violation.
    pub fn consume_triple(&mut self, id: u64) -> Result<()> {
        if self.consumed.insert(id) {
            Ok(())
        } else {
            Err(Error::TripleReuse(id))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::cell::Cell;

    #[test]
    fn exchange_charges_both_directions_once() {
        let mut ch = Channel::new();
        ch.push_category(Category::Linear);
        let (c, s) = ch.exchange(alloc::vec![Ring(1), Ring(2)], alloc::vec![Ring(3), Ring(4)]);
        assert_eq!(c, alloc::vec![Ring(3), Ring(4)]);
        assert_eq!(s, alloc::vec![Ring(1), Ring(2)]);
        let l = ch.ledger().get(Category::Linear);
        assert_eq!((l.bytes, l.rounds, l.op_count), (32, 1, 1));
    }

    #[test]
    fn transfer_is_one_directional() {
        let mut ch = Channel::new();
        ch.record_transcripts();
        let got = ch.transfer(Party::Server, alloc::vec![Ring(9)]);
        assert_eq!(got, alloc::vec![Ring(9)]);
        assert_eq!(ch.transcript(Party::Client).len(), 1);
        assert!(ch.transcript(Party::Server).is_empty());
        assert_eq!(ch.ledger().get(Category::Other).bytes, 8);
    }

    #[test]
    fn triple_reuse_rejected() {
        let mut ch = Channel::new();
        ch.consume_triple(4).unwrap();
        assert_eq!(ch.consume_triple(4), Err(Error::TripleReuse(4)));
    }

    struct Steps(Cell<u64>);
    impl Clock for Steps {
        fn now_ns(&self) -> u64 {
            let v = self.0.get();
            self.0.set(v + 10);
            v
        }
    }

    #[test]
    fn wall_time_goes_to_top_category() {
        let mut ch = Channel::with_clock(Box::new(Steps(Cell::new(0))));
        ch.push_category(Category::Softmax);
        ch.pop_category();
        let l = ch.snapshot();
        assert_eq!(l.get(Category::Softmax).wall_ns, 10);
        assert_eq!(l.total().wall_ns, 30);
    }
}
