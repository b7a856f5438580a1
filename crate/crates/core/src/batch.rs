//! Fixed-width batch layout shared by the network, regret and evaluation code.
//!
//! A setting fixes `n` bundles, so a sample has at most `n` retailers and `n`
//! suppliers. Bids live in `2n` columns: retailer with local index `r` in
//! column `r`, supplier with local index `s` in column `n + s`. Unused
//! columns hold zero.
//!
//! Edge-sides are numbered `k in 0..2n`: `k < n` is the retailer side of
//! edge `k`, `k >= n` the supplier side of edge `k - n`.

use alloc::vec;
use alloc::vec::Vec;

use crate::diff::{ColumnTable, GatherMap, Tensor};
use crate::distributions::Distribution;
use crate::error::{GraphError, MechanismError};
use crate::market::{AuctionInstance, MarketGraph};

#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    n: usize,
    /// `rows x 2n`: bid column of each edge-side.
    cols: Vec<u32>,
    /// `rows x 2n` bids by column.
    pub bids: Tensor,
}

fn column_of(graph: &MarketGraph, n: usize, bidder: usize) -> usize {
    let r = graph.n_retailers();
    if bidder < r {
        bidder
    } else {
        n + bidder - r
    }
}

impl Batch {
    /// Lays out instances that all have exactly `n` bundles.
    pub fn from_instances<'a>(
        n: usize,
        instances: impl IntoIterator<Item = &'a AuctionInstance>,
    ) -> Result<Self, MechanismError> {
        let mut cols = Vec::new();
        let mut bids = Vec::new();
        let mut rows = 0;
        for inst in instances {
            let g = &inst.graph;
            if g.n_bundles() != n {
                return Err(MechanismError::ShapeMismatch {
                    expected_n: n,
                    expected_m: inst.n_slots(),
                    n: g.n_bundles(),
                    m: inst.n_slots(),
                });
            }
            cols.extend(g.edges().iter().map(|b| column_of(g, n, b.retailer) as u32));
            cols.extend(g.edges().iter().map(|b| column_of(g, n, b.supplier) as u32));
            let mut row = vec![0.0; 2 * n];
            for (i, &v) in inst.values.iter().enumerate() {
                row[column_of(g, n, i)] = v;
            }
            bids.extend(row);
            rows += 1;
        }
        Ok(Self { n, cols, bids: Tensor::from_vec(rows, 2 * n, bids) })
    }

    /// `count` i.i.d. samples: a random `n`-bundle graph and values drawn from
    /// `prior`, sample `i` from stream `first + i` under `seed`.
    pub fn sample(n: usize, prior: &Distribution, count: usize, seed: u64, first: u64) -> Self {
        let mut cols = Vec::with_capacity(count * 2 * n);
        let mut bids = Vec::with_capacity(count * 2 * n);
        for i in 0..count {
            let mut rng = crate::rng::stream(seed, first + i as u64);
            let g = MarketGraph::sample(n, &mut rng);
            cols.extend(g.edges().iter().map(|b| column_of(&g, n, b.retailer) as u32));
            cols.extend(g.edges().iter().map(|b| column_of(&g, n, b.supplier) as u32));
            let mut row = vec![0.0; 2 * n];
            for bidder in 0..g.n_bidders() {
                row[column_of(&g, n, bidder)] = prior.sample_one(&mut rng);
            }
            bids.extend(row);
        }
        Self { n, cols, bids: Tensor::from_vec(count, 2 * n, bids) }
    }

    /// Rows stacked in order.
    pub fn concat(parts: &[Batch]) -> Self {
        let n = parts.first().map_or(0, |b| b.n);
        let mut cols = Vec::new();
        let mut bids = Vec::new();
        for p in parts {
            assert_eq!(p.n, n, "batch widths differ");
            cols.extend_from_slice(&p.cols);
            bids.extend_from_slice(p.bids.data());
        }
        let rows = cols.len() / (2 * n).max(1);
        Self { n, cols, bids: Tensor::from_vec(rows, 2 * n, bids) }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn rows(&self) -> usize {
        self.bids.rows()
    }

    /// Bid columns of the edge-sides of one row.
    pub fn cols(&self, row: usize) -> &[u32] {
        &self.cols[row * 2 * self.n..(row + 1) * 2 * self.n]
    }

    pub fn all_cols(&self) -> &[u32] {
        &self.cols
    }

    /// Whether bid column `c` of `row` belongs to a bidder.
    pub fn present(&self, row: usize, c: usize) -> bool {
        self.cols(row).iter().any(|&x| x as usize == c)
    }

    /// Edge-sides owned by the bidder in column `c`.
    pub fn sides_of(&self, row: usize, c: usize) -> impl Iterator<Item = usize> + '_ {
        self.cols(row).iter().enumerate().filter(move |(_, &x)| x as usize == c).map(|(k, _)| k)
    }

    /// Rebuilds the graph of one row.
    pub fn graph(&self, row: usize) -> Result<MarketGraph, GraphError> {
        let n = self.n;
        let cols = self.cols(row);
        let retailers = cols[..n].iter().map(|&c| c as usize + 1).max().unwrap_or(0);
        let suppliers = cols[n..].iter().map(|&c| c as usize - n + 1).max().unwrap_or(0);
        MarketGraph::from_local(
            retailers,
            suppliers,
            (0..n).map(|e| (cols[e] as usize, cols[n + e] as usize - n)),
        )
    }

    /// Rebuilds one row as an instance with bids taken from `bids`.
    pub fn instance_with(&self, row: usize, bids: &[f64], ctrs: &[f64], reserve: f64) -> Result<AuctionInstance, GraphError> {
        let graph = self.graph(row)?;
        let values = (0..graph.n_bidders()).map(|i| bids[column_of(&graph, self.n, i)]).collect();
        AuctionInstance::new(graph, values, ctrs.to_vec(), reserve)
    }

    pub fn instance(&self, row: usize, ctrs: &[f64], reserve: f64) -> Result<AuctionInstance, GraphError> {
        self.instance_with(row, self.bids.row_slice(row), ctrs, reserve)
    }

    /// Subset of rows, in the given order.
    pub fn select(&self, rows: &[usize]) -> Self {
        let w = 2 * self.n;
        let mut cols = Vec::with_capacity(rows.len() * w);
        let mut bids = Vec::with_capacity(rows.len() * w);
        for &r in rows {
            cols.extend_from_slice(self.cols(r));
            bids.extend_from_slice(self.bids.row_slice(r));
        }
        Self { n: self.n, cols, bids: Tensor::from_vec(rows.len(), w, bids) }
    }

    /// Each row repeated `times` times consecutively, bids unchanged.
    pub fn repeat(&self, times: usize) -> Self {
        let rows: Vec<usize> = (0..self.rows()).flat_map(|r| core::iter::repeat_n(r, times)).collect();
        self.select(&rows)
    }

    /// `rows x 2n` bid of the owner of every edge-side.
    pub fn side_values(&self, bids: &Tensor) -> Tensor {
        self.side_bid_map().apply(bids)
    }

    /// `out[k] = bids[col(k)]`.
    pub fn side_bid_map(&self) -> GatherMap {
        let w = 2 * self.n;
        GatherMap {
            out_cols: w,
            weights: vec![1.0; w],
            in_col: ColumnTable::PerRow(self.cols.clone()),
            out_col: ColumnTable::Shared((0..w as u32).collect()),
        }
    }

    /// `out[col(k)] += in[k]`: edge-side quantities summed per bidder column.
    pub fn bidder_sum_map(&self) -> GatherMap {
        let w = 2 * self.n;
        GatherMap {
            out_cols: w,
            weights: vec![1.0; w],
            in_col: ColumnTable::Shared((0..w as u32).collect()),
            out_col: ColumnTable::PerRow(self.cols.clone()),
        }
    }

    /// Stacked bids `SB^e_j = (b_r + b_s) ctr_j`, flattened edge-major.
    pub fn stacked_map(&self, ctrs: &[f64]) -> GatherMap {
        let (n, m) = (self.n, ctrs.len());
        let terms = 2 * n * m;
        let mut weights = Vec::with_capacity(terms);
        let mut out = Vec::with_capacity(terms);
        let mut side = Vec::with_capacity(terms);
        for e in 0..n {
            for (j, &c) in ctrs.iter().enumerate() {
                for s in [e, n + e] {
                    weights.push(c);
                    out.push((e * m + j) as u32);
                    side.push(s);
                }
            }
        }
        GatherMap {
            out_cols: n * m,
            weights,
            in_col: self.per_row_side_cols(&side),
            out_col: ColumnTable::Shared(out),
        }
    }

    /// Divided bids `DB^e = [b_r ctr, b_s ctr]`, flattened edge-major.
    pub fn divided_map(&self, ctrs: &[f64]) -> GatherMap {
        let (n, m) = (self.n, ctrs.len());
        let terms = 2 * n * m;
        let mut weights = Vec::with_capacity(terms);
        let mut out = Vec::with_capacity(terms);
        let mut side = Vec::with_capacity(terms);
        for e in 0..n {
            for (half, s) in [e, n + e].into_iter().enumerate() {
                for (j, &c) in ctrs.iter().enumerate() {
                    weights.push(c);
                    out.push((e * 2 * m + half * m + j) as u32);
                    side.push(s);
                }
            }
        }
        GatherMap {
            out_cols: 2 * n * m,
            weights,
            in_col: self.per_row_side_cols(&side),
            out_col: ColumnTable::Shared(out),
        }
    }

    fn per_row_side_cols(&self, side: &[usize]) -> ColumnTable {
        let mut table = Vec::with_capacity(self.rows() * side.len());
        for r in 0..self.rows() {
            let cols = self.cols(r);
            table.extend(side.iter().map(|&k| cols[k]));
        }
        ColumnTable::PerRow(table)
    }
}
