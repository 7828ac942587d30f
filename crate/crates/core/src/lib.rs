//! Clearing engine for peer-to-peer electricity trading on radial distribution feeders.

// Input checks are written as `!(x >= 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acpf;
pub mod coordinator;
pub mod error;
pub mod network;
pub mod opf;
pub mod peer;
pub mod pricing;
pub mod report;
pub mod system;
pub mod trade;

pub use error::{Error, Result};
pub use network::{load_case, load_peers, CaseFormat, NetworkCase, PeerSet, PeerSpec};
pub use opf::{build_opf, check_exactness, solve_opf, OpfInput, OpfSolution, OpfStatus};
pub use peer::{
    build_trade_graph_parallel, run_price_adjustment, select_trades, verify_stability, MatchConfig, MatchOutcome,
    PriceBook,
};
pub use pricing::{average_charge, recover_dlmp, trade_charge, ChargeTable, DlmpVector, RevenueReport, Settlement};
pub use system::{build_trade_graph_simple, clear_system_centric, settle_system_centric, Clearing};
pub use trade::{Trade, TradeGraph};
