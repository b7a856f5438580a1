//! Bipartite retailer/supplier markets and auction instances.
//!
//! Bidder ids are dense: retailers occupy `0..n_retailers` and suppliers
//! follow at `n_retailers..n_retailers + n_suppliers`. Every edge is a
//! bundle `(retailer, supplier)`; edge order is the bundle index used for
//! tie-breaking and network input layout.

use alloc::vec::Vec;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::distributions::Priors;
use crate::error::GraphError;

/// Which end of a bundle a bidder sits on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Retailer,
    Supplier,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Retailer, Side::Supplier];

    pub fn index(self) -> usize {
        match self {
            Side::Retailer => 0,
            Side::Supplier => 1,
        }
    }
}

/// A bundle: one retailer and one supplier advertising jointly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Bundle {
    pub retailer: usize,
    pub supplier: usize,
}

impl Bundle {
    pub fn member(&self, side: Side) -> usize {
        match side {
            Side::Retailer => self.retailer,
            Side::Supplier => self.supplier,
        }
    }

    pub fn touches(&self, bidder: usize) -> bool {
        self.retailer == bidder || self.supplier == bidder
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawGraph", into = "RawGraph")]
pub struct MarketGraph {
    n_retailers: usize,
    n_suppliers: usize,
    edges: Vec<Bundle>,
}

#[derive(Serialize, Deserialize)]
struct RawGraph {
    retailers: Vec<usize>,
    suppliers: Vec<usize>,
    edges: Vec<(usize, usize)>,
}

impl TryFrom<RawGraph> for MarketGraph {
    type Error = GraphError;

    fn try_from(raw: RawGraph) -> Result<Self, GraphError> {
        let nr = raw.retailers.len();
        let ns = raw.suppliers.len();
        let dense = raw.retailers.iter().copied().eq(0..nr)
            && raw.suppliers.iter().copied().eq(nr..nr + ns);
        if !dense {
            let bad = raw
                .retailers
                .iter()
                .chain(raw.suppliers.iter())
                .zip(0..)
                .find(|(id, i)| **id != *i)
                .map_or(0, |(id, _)| *id);
            return Err(GraphError::UnknownBidder(bad));
        }
        MarketGraph::new(nr, ns, raw.edges)
    }
}

impl From<MarketGraph> for RawGraph {
    fn from(g: MarketGraph) -> Self {
        RawGraph {
            retailers: g.retailer_ids().collect(),
            suppliers: g.supplier_ids().collect(),
            edges: g.edges.iter().map(|b| (b.retailer, b.supplier)).collect(),
        }
    }
}

impl MarketGraph {
    /// Builds and validates a graph. Edges are `(retailer_id, supplier_id)`
    /// pairs in global bidder ids.
    pub fn new(
        n_retailers: usize,
        n_suppliers: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self, GraphError> {
        let total = n_retailers + n_suppliers;
        let mut list: Vec<Bundle> = Vec::new();
        for (r, s) in edges {
            if r >= n_retailers || s < n_retailers || s >= total {
                return Err(GraphError::BadEdge(r, s));
            }
            let b = Bundle { retailer: r, supplier: s };
            if list.contains(&b) {
                return Err(GraphError::DuplicateEdge(r, s));
            }
            list.push(b);
        }
        if list.is_empty() {
            return Err(GraphError::Empty);
        }
        for id in 0..total {
            if !list.iter().any(|b| b.touches(id)) {
                return Err(GraphError::Isolated(id));
            }
        }
        Ok(Self { n_retailers, n_suppliers, edges: list })
    }

    /// Builds from local indices: retailer `i` and supplier `j` become
    /// bidders `i` and `n_retailers + j`.
    pub fn from_local(
        n_retailers: usize,
        n_suppliers: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self, GraphError> {
        Self::new(
            n_retailers,
            n_suppliers,
            edges.into_iter().map(|(r, s)| (r, n_retailers + s)),
        )
    }

    pub fn n_retailers(&self) -> usize {
        self.n_retailers
    }

    pub fn n_suppliers(&self) -> usize {
        self.n_suppliers
    }

    pub fn n_bidders(&self) -> usize {
        self.n_retailers + self.n_suppliers
    }

    pub fn n_bundles(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Bundle] {
        &self.edges
    }

    pub fn edge(&self, e: usize) -> Bundle {
        self.edges[e]
    }

    pub fn retailer_ids(&self) -> core::ops::Range<usize> {
        0..self.n_retailers
    }

    pub fn supplier_ids(&self) -> core::ops::Range<usize> {
        self.n_retailers..self.n_bidders()
    }

    pub fn side_of(&self, bidder: usize) -> Result<Side, GraphError> {
        if bidder < self.n_retailers {
            Ok(Side::Retailer)
        } else if bidder < self.n_bidders() {
            Ok(Side::Supplier)
        } else {
            Err(GraphError::UnknownBidder(bidder))
        }
    }

    /// Position of the bidder within its own side.
    pub fn local_index(&self, bidder: usize) -> Result<usize, GraphError> {
        Ok(match self.side_of(bidder)? {
            Side::Retailer => bidder,
            Side::Supplier => bidder - self.n_retailers,
        })
    }

    /// `N(i)`: bidders sharing a bundle with `bidder`, ascending.
    pub fn neighbors(&self, bidder: usize) -> Result<Vec<usize>, GraphError> {
        let side = self.side_of(bidder)?;
        let mut out: Vec<usize> = self
            .edges
            .iter()
            .filter(|b| b.member(side) == bidder)
            .map(|b| match side {
                Side::Retailer => b.supplier,
                Side::Supplier => b.retailer,
            })
            .collect();
        out.sort_unstable();
        Ok(out)
    }

    /// `E_i`: indices of the bundles containing `bidder`.
    pub fn bundles_of(&self, bidder: usize) -> Result<Vec<usize>, GraphError> {
        self.side_of(bidder)?;
        Ok((0..self.edges.len()).filter(|&e| self.edges[e].touches(bidder)).collect())
    }

    /// `E_{-i}`: indices of the bundles not containing `bidder`.
    pub fn bundles_excluding(&self, bidder: usize) -> Result<Vec<usize>, GraphError> {
        self.side_of(bidder)?;
        Ok((0..self.edges.len()).filter(|&e| !self.edges[e].touches(bidder)).collect())
    }

    /// Draws a graph with exactly `n_bundles` edges.
    ///
    /// Pools of `n_bundles` retailers and suppliers are formed, `n_bundles`
    /// distinct pairs are drawn uniformly from the pool product, and pool
    /// members left without an edge are dropped. Edges come out sorted.
    pub fn sample<R: Rng + ?Sized>(n_bundles: usize, rng: &mut R) -> Self {
        assert!(n_bundles >= 1, "a market needs at least one bundle");
        let n = n_bundles;
        let picks = index::sample(rng, n * n, n);
        let mut pairs: Vec<(usize, usize)> = picks.iter().map(|k| (k / n, k % n)).collect();
        pairs.sort_unstable();
        let mut r_map = alloc::vec![usize::MAX; n];
        let mut s_map = alloc::vec![usize::MAX; n];
        let (mut nr, mut ns) = (0, 0);
        for &(r, _) in &pairs {
            if r_map[r] == usize::MAX {
                r_map[r] = nr;
                nr += 1;
            }
        }
        for (s, slot) in s_map.iter_mut().enumerate() {
            if pairs.iter().any(|&(_, ps)| ps == s) {
                *slot = ns;
                ns += 1;
            }
        }
        let mut local: Vec<(usize, usize)> =
            pairs.iter().map(|&(r, s)| (r_map[r], s_map[s])).collect();
        local.sort_unstable();
        Self::from_local(nr, ns, local).expect("sampler produces valid graphs")
    }

    pub fn sample_seeded(n_bundles: usize, seed: u64) -> Self {
        Self::sample(n_bundles, &mut crate::rng::seeded(seed))
    }
}

/// Fixed graphs used by the allocation-grid experiments and tests.
pub mod fixtures {
    use super::MarketGraph;

    /// `e1 = (r1, s1)`, `e2 = (r2, s1)`: two retailers share one supplier.
    /// Bidder ids: r1 = 0, r2 = 1, s1 = 2.
    pub fn shared_supplier() -> MarketGraph {
        MarketGraph::from_local(2, 1, [(0, 0), (1, 0)]).unwrap()
    }

    /// `e1 = (r1, s1)`, `e2 = (r1, s2)`. Bidder ids: r1 = 0, s1 = 1, s2 = 2.
    pub fn shared_retailer() -> MarketGraph {
        MarketGraph::from_local(1, 2, [(0, 0), (0, 1)]).unwrap()
    }

    /// `e1 = (r1, s1)`, `e2 = (r2, s2)`. Bidder ids: r1 = 0, r2 = 1, s1 = 2, s2 = 3.
    pub fn disjoint_pairs() -> MarketGraph {
        MarketGraph::from_local(2, 2, [(0, 0), (1, 1)]).unwrap()
    }

    /// A single bundle.
    pub fn single() -> MarketGraph {
        MarketGraph::from_local(1, 1, [(0, 0)]).unwrap()
    }

    /// Path r1 - s1 - r2 (same shape as [`shared_supplier`]).
    pub fn path() -> MarketGraph {
        shared_supplier()
    }
}

/// A market plus a report profile, slot CTRs and the auctioneer's reserve.
///
/// `values` is indexed by bidder id. Mechanisms read it as the submitted
/// bids; utility computations pair it with a separate truthful profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawInstance", into = "RawInstance")]
pub struct AuctionInstance {
    pub graph: MarketGraph,
    pub values: Vec<f64>,
    pub ctrs: Vec<f64>,
    pub reserve: f64,
}

#[derive(Serialize, Deserialize)]
struct RawInstance {
    retailers: Vec<usize>,
    suppliers: Vec<usize>,
    edges: Vec<(usize, usize)>,
    values: Vec<f64>,
    ctrs: Vec<f64>,
    v0: f64,
}

impl TryFrom<RawInstance> for AuctionInstance {
    type Error = GraphError;

    fn try_from(raw: RawInstance) -> Result<Self, GraphError> {
        let graph = MarketGraph::try_from(RawGraph {
            retailers: raw.retailers,
            suppliers: raw.suppliers,
            edges: raw.edges,
        })?;
        AuctionInstance::new(graph, raw.values, raw.ctrs, raw.v0)
    }
}

impl From<AuctionInstance> for RawInstance {
    fn from(inst: AuctionInstance) -> Self {
        let raw = RawGraph::from(inst.graph);
        RawInstance {
            retailers: raw.retailers,
            suppliers: raw.suppliers,
            edges: raw.edges,
            values: inst.values,
            ctrs: inst.ctrs,
            v0: inst.reserve,
        }
    }
}

/// Checks `1 >= ctr_1 >= ctr_2 >= ... >= 0`.
pub fn validate_ctrs(ctrs: &[f64]) -> Result<(), GraphError> {
    if ctrs.is_empty() {
        return Err(GraphError::NoSlots);
    }
    let in_range = ctrs.iter().all(|&c| (0.0..=1.0).contains(&c));
    let sorted = ctrs.windows(2).all(|w| w[0] >= w[1]);
    if in_range && sorted {
        Ok(())
    } else {
        Err(GraphError::BadCtrs)
    }
}

impl AuctionInstance {
    pub fn new(
        graph: MarketGraph,
        values: Vec<f64>,
        ctrs: Vec<f64>,
        reserve: f64,
    ) -> Result<Self, GraphError> {
        if values.len() != graph.n_bidders() {
            return Err(GraphError::ValueCount { expected: graph.n_bidders(), got: values.len() });
        }
        if let Some((bidder, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(GraphError::ValueOutOfSupport { bidder, value });
        }
        validate_ctrs(&ctrs)?;
        Ok(Self { graph, values, ctrs, reserve })
    }

    pub fn n_slots(&self) -> usize {
        self.ctrs.len()
    }

    pub fn n_bundles(&self) -> usize {
        self.graph.n_bundles()
    }

    /// Checks every value lies in its bidder's support.
    pub fn check_support<P: Priors + ?Sized>(&self, priors: &P) -> Result<(), GraphError> {
        for (bidder, &value) in self.values.iter().enumerate() {
            if !priors.prior(bidder).contains(value) {
                return Err(GraphError::ValueOutOfSupport { bidder, value });
            }
        }
        Ok(())
    }

    /// Copy with one bidder's report replaced.
    pub fn with_value(&self, bidder: usize, value: f64) -> Self {
        let mut out = self.clone();
        out.values[bidder] = value;
        out
    }

    /// Draws i.i.d. values for every bidder of `graph`.
    pub fn sample<P: Priors + ?Sized, R: Rng + ?Sized>(
        graph: MarketGraph,
        priors: &P,
        ctrs: Vec<f64>,
        reserve: f64,
        rng: &mut R,
    ) -> Result<Self, GraphError> {
        let values = (0..graph.n_bidders()).map(|i| priors.prior(i).sample_one(rng)).collect();
        Self::new(graph, values, ctrs, reserve)
    }

    pub fn sample_seeded<P: Priors + ?Sized>(
        graph: MarketGraph,
        priors: &P,
        ctrs: Vec<f64>,
        reserve: f64,
        seed: u64,
    ) -> Result<Self, GraphError> {
        Self::sample(graph, priors, ctrs, reserve, &mut crate::rng::seeded(seed))
    }
}
