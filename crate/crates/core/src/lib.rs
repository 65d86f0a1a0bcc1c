//! Statement coverage assessment for IEC 61131-3 control software.

pub mod frontend;
pub mod depmodel;
pub mod instrument;
pub mod tracedb;
pub mod runtime;
mod xmltree;
pub mod testkit;
pub mod coverage;
pub mod overhead;
pub mod pipeline;
