use crate::error::{Error, Result};

pub const LEVELS: usize = 10;
/// Columns of a feature row: per level `(ask price, ask volume, bid price, bid volume)`.
pub const FEATURES: usize = 4 * LEVELS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Level {
    /// Price in integer ticks.
    pub price: i64,
    pub volume: u64,
}

impl Level {
    pub const fn new(price: i64, volume: u64) -> Self {
        Self { price, volume }
    }
}

/// One limit order book state, ten levels per side ordered best-first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Snapshot {
    pub timestamp: i64,
    pub day_id: u32,
    pub asks: [Level; LEVELS],
    pub bids: [Level; LEVELS],
}

impl Snapshot {
    pub fn new(timestamp: i64, day_id: u32, asks: [Level; LEVELS], bids: [Level; LEVELS]) -> Result<Self> {
        let s = Self {
            timestamp,
            day_id,
            asks,
            bids,
        };
        s.validate().map_err(Error::Validation)?;
        Ok(s)
    }

    /// Checks the book invariants, returning a description of the first violation.
    pub fn validate(&self) -> std::result::Result<(), String> {
        for i in 1..LEVELS {
            if self.asks[i].price <= self.asks[i - 1].price {
                return Err(format!("ask prices not strictly increasing at level {}", i + 1));
            }
            if self.bids[i].price >= self.bids[i - 1].price {
                return Err(format!("bid prices not strictly decreasing at level {}", i + 1));
            }
        }
        if self.asks[0].price <= self.bids[0].price {
            return Err(format!(
                "crossed book: best bid {} >= best ask {}",
                self.bids[0].price, self.asks[0].price
            ));
        }
        if self.asks[0].volume == 0 || self.bids[0].volume == 0 {
            return Err("level-1 volume must be positive".into());
        }
        Ok(())
    }

    pub fn best_ask(&self) -> Level {
        self.asks[0]
    }

    pub fn best_bid(&self) -> Level {
        self.bids[0]
    }

    /// Mid-price in ticks.
    pub fn mid_price(&self) -> f64 {
        (self.asks[0].price + self.bids[0].price) as f64 / 2.0
    }

    /// Twice the mid-price, exact in integer ticks.
    pub fn mid_half_ticks(&self) -> i64 {
        self.asks[0].price + self.bids[0].price
    }

    /// Raw feature row in level-interleaved order
    /// `ap1, av1, bp1, bv1, ap2, ...`.
    pub fn feature_row(&self) -> [f64; FEATURES] {
        let mut row = [0.0; FEATURES];
        for l in 0..LEVELS {
            row[4 * l] = self.asks[l].price as f64;
            row[4 * l + 1] = self.asks[l].volume as f64;
            row[4 * l + 2] = self.bids[l].price as f64;
            row[4 * l + 3] = self.bids[l].volume as f64;
        }
        row
    }

    /// Column name for feature index `col`, e.g. `ap1` or `bv10`.
    pub fn feature_name(col: usize) -> String {
        let level = col / 4 + 1;
        let kind = ["ap", "av", "bp", "bv"][col % 4];
        format!("{kind}{level}")
    }
}

/// All snapshots of one trading day, in event order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Day {
    pub day_id: u32,
    pub snapshots: Vec<Snapshot>,
}

impl Day {
    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn mids(&self) -> Vec<f64> {
        self.snapshots.iter().map(Snapshot::mid_price).collect()
    }
}

/// Splits a snapshot sequence into days at every change of `day_id`.
pub fn group_days(snapshots: Vec<Snapshot>) -> Vec<Day> {
    let mut days: Vec<Day> = Vec::new();
    for s in snapshots {
        match days.last_mut() {
            Some(d) if d.day_id == s.day_id => d.snapshots.push(s),
            _ => days.push(Day {
                day_id: s.day_id,
                snapshots: vec![s],
            }),
        }
    }
    days
}
