//! Continuous double auction limit order book.
//!
//! Prices are integer ticks. Incoming orders match against the opposite side
//! best price first and, within a level, in arrival order. Unmatched limit
//! volume rests in the book; unmatched market volume is dropped.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type OrderId = u64;
pub type Price = i64;
pub type Volume = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Bid,
    Ask,
}

impl Side {
    pub fn opposite(self) -> Side {
        match self {
            Side::Bid => Side::Ask,
            Side::Ask => Side::Bid,
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Bid => "bid",
            Side::Ask => "ask",
        })
    }
}

/// A limit order as submitted to the exchange.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LimitOrder {
    pub id: OrderId,
    pub side: Side,
    pub price: Price,
    pub volume: Volume,
}

impl LimitOrder {
    pub fn new(id: OrderId, side: Side, price: Price, volume: Volume) -> Self {
        LimitOrder { id, side, price, volume }
    }
}

/// A resting order. `volume` is the unexecuted remainder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Order {
    pub id: OrderId,
    pub side: Side,
    pub price: Price,
    pub volume: Volume,
    pub arrival_seq: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trade {
    pub price: Price,
    pub volume: Volume,
    pub maker_id: OrderId,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MatchResult {
    pub trades: Vec<Trade>,
    /// Id of the remainder placed in the book, if any.
    pub resting_id: Option<OrderId>,
    pub rejected: bool,
    /// Volume neither traded nor rested (rejections and exhausted market orders).
    pub unfilled: Volume,
}

impl MatchResult {
    pub fn traded_volume(&self) -> Volume {
        self.trades.iter().map(|t| t.volume).sum()
    }

    fn rejected(volume: Volume) -> Self {
        MatchResult { rejected: true, unfilled: volume, ..Default::default() }
    }
}

/// Mid-price held as twice its value so half-tick mids stay exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MidPrice(i64);

impl MidPrice {
    pub fn from_quotes(best_bid: Price, best_ask: Price) -> Self {
        MidPrice(best_bid + best_ask)
    }

    pub fn from_ticks(price: Price) -> Self {
        MidPrice(2 * price)
    }

    pub fn twice(self) -> i64 {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64 / 2.0
    }
}

impl fmt::Display for MidPrice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        write!(f, "{}{}.{}", sign, abs / 2, if abs % 2 == 1 { 5 } else { 0 })
    }
}

#[derive(Debug, Clone, Copy)]
struct Slot {
    side: Side,
    price: Price,
    /// Position in `OrderBook::resting`.
    pos: usize,
}

#[derive(Debug, Clone, Default)]
pub struct OrderBook {
    bids: BTreeMap<Price, VecDeque<Order>>,
    asks: BTreeMap<Price, VecDeque<Order>>,
    slots: HashMap<OrderId, Slot>,
    /// Resting ids in an order fixed by the operation history, for uniform sampling.
    resting: Vec<OrderId>,
    used_ids: HashSet<OrderId>,
    next_seq: u64,
    last_mid: Option<MidPrice>,
}

impl OrderBook {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn best_bid(&self) -> Option<Price> {
        self.bids.keys().next_back().copied()
    }

    pub fn best_ask(&self) -> Option<Price> {
        self.asks.keys().next().copied()
    }

    pub fn len(&self) -> usize {
        self.resting.len()
    }

    pub fn is_empty(&self) -> bool {
        self.resting.is_empty()
    }

    pub fn contains(&self, id: OrderId) -> bool {
        self.slots.contains_key(&id)
    }

    /// The `k`-th resting order id in the book's internal order.
    pub fn resting_id_at(&self, k: usize) -> Option<OrderId> {
        self.resting.get(k).copied()
    }

    pub fn last_mid(&self) -> Option<MidPrice> {
        self.last_mid
    }

    pub fn submit_limit(&mut self, order: LimitOrder) -> Result<MatchResult> {
        if order.volume == 0 {
            return Err(Error::InvalidOrder(format!("order {} has zero volume", order.id)));
        }
        if order.price < 1 {
            return Err(Error::InvalidOrder(format!("order {} has price {} < 1", order.id, order.price)));
        }
        if !self.used_ids.insert(order.id) {
            return Ok(MatchResult::rejected(order.volume));
        }
        let (trades, remaining) = self.match_against(order.side, Some(order.price), order.volume);
        let mut result = MatchResult { trades, ..Default::default() };
        if remaining > 0 {
            self.rest(order.id, order.side, order.price, remaining);
            result.resting_id = Some(order.id);
        }
        Ok(result)
    }

    /// Market order priced at the opposite best level. Rejected when the
    /// opposite side is empty; may walk further levels for volume > 1.
    pub fn submit_market(&mut self, side: Side, volume: Volume) -> Result<MatchResult> {
        if volume == 0 {
            return Err(Error::InvalidOrder("market order has zero volume".into()));
        }
        let opposite_best = match side {
            Side::Bid => self.best_ask(),
            Side::Ask => self.best_bid(),
        };
        if opposite_best.is_none() {
            return Ok(MatchResult::rejected(volume));
        }
        let (trades, remaining) = self.match_against(side, None, volume);
        Ok(MatchResult { trades, unfilled: remaining, ..Default::default() })
    }

    pub fn cancel(&mut self, id: OrderId) -> bool {
        let Some(slot) = self.slots.remove(&id) else {
            return false;
        };
        let levels = self.levels_mut(slot.side);
        if let Some(queue) = levels.get_mut(&slot.price) {
            if let Some(idx) = queue.iter().position(|o| o.id == id) {
                queue.remove(idx);
            }
            if queue.is_empty() {
                levels.remove(&slot.price);
            }
        }
        self.unlist(slot.pos);
        true
    }

    /// Current mid-price; carries the previous value forward when a side is empty.
    pub fn mid_price(&mut self) -> Result<MidPrice> {
        if let (Some(bid), Some(ask)) = (self.best_bid(), self.best_ask()) {
            let mid = MidPrice::from_quotes(bid, ask);
            self.last_mid = Some(mid);
            return Ok(mid);
        }
        self.last_mid.ok_or(Error::UninitializedBook)
    }

    /// All resting orders in priority order: bids best-first, then asks best-first.
    pub fn orders(&self) -> impl Iterator<Item = &Order> {
        self.bids.values().rev().flatten().chain(self.asks.values().flatten())
    }

    /// CSV dump `side,price,volume,arrival_seq` in priority order.
    pub fn snapshot_csv(&self) -> String {
        let mut out = String::from("side,price,volume,arrival_seq\n");
        for o in self.orders() {
            out.push_str(&format!("{},{},{},{}\n", o.side, o.price, o.volume, o.arrival_seq));
        }
        out
    }

    fn levels_mut(&mut self, side: Side) -> &mut BTreeMap<Price, VecDeque<Order>> {
        match side {
            Side::Bid => &mut self.bids,
            Side::Ask => &mut self.asks,
        }
    }

    fn rest(&mut self, id: OrderId, side: Side, price: Price, volume: Volume) {
        let arrival_seq = self.next_seq;
        self.next_seq += 1;
        self.levels_mut(side)
            .entry(price)
            .or_default()
            .push_back(Order { id, side, price, volume, arrival_seq });
        self.slots.insert(id, Slot { side, price, pos: self.resting.len() });
        self.resting.push(id);
    }

    fn unlist(&mut self, pos: usize) {
        self.resting.swap_remove(pos);
        if let Some(&moved) = self.resting.get(pos) {
            if let Some(slot) = self.slots.get_mut(&moved) {
                slot.pos = pos;
            }
        }
    }

    /// Matches `volume` of an incoming `side` order against the opposite
    /// side. `limit` of `None` accepts any price. Returns the trades and the
    /// unmatched volume.
    fn match_against(&mut self, side: Side, limit: Option<Price>, mut volume: Volume) -> (Vec<Trade>, Volume) {
        let mut trades = Vec::new();
        let mut filled = Vec::new();
        {
            let book = match side {
                Side::Bid => &mut self.asks,
                Side::Ask => &mut self.bids,
            };
            while volume > 0 {
                let best = match side {
                    Side::Bid => book.keys().next().copied(),
                    Side::Ask => book.keys().next_back().copied(),
                };
                let Some(price) = best else { break };
                let crosses = match (side, limit) {
                    (_, None) => true,
                    (Side::Bid, Some(l)) => price <= l,
                    (Side::Ask, Some(l)) => price >= l,
                };
                if !crosses {
                    break;
                }
                let queue = book.get_mut(&price).expect("level present");
                while volume > 0 {
                    let Some(maker) = queue.front_mut() else { break };
                    let qty = volume.min(maker.volume);
                    trades.push(Trade { price, volume: qty, maker_id: maker.id });
                    maker.volume -= qty;
                    volume -= qty;
                    if maker.volume == 0 {
                        filled.push(maker.id);
                        queue.pop_front();
                    }
                }
                if queue.is_empty() {
                    book.remove(&price);
                }
            }
        }
        for id in filled {
            if let Some(slot) = self.slots.remove(&id) {
                self.unlist(slot.pos);
            }
        }
        (trades, volume)
    }
}
