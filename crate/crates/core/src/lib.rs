pub mod adjudicator;
pub mod auditor;
pub mod community;
pub mod corpus;
pub mod embedding;
pub mod evaluation;
pub mod fixture;
pub mod graph;
pub mod llm;
pub mod pipeline;
pub mod researcher;
pub mod retry;

#[cfg(test)]
mod testutil;
