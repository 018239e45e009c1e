pub mod crypto;
pub mod dpacc;
pub mod harness;
pub mod ledger;
pub mod market;
pub mod protocols;
pub mod wallet;
