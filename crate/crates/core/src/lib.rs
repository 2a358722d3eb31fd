//! Spanish-English code-switching Map Task platform: dictionaries, language
//! identification, code-switching strategies, the game model, dialog
//! metrics and the conversational agent.

pub mod agent;
pub mod dataset;
pub mod game;
pub mod lexicon;
pub mod metrics;
pub mod strategy;
pub mod textproc;
