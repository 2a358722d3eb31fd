//! Session orchestration for the code-switching Map Task: condition
//! assignment, the event-sourced session engine, persistence, the client
//! wire protocol, dataset export and headless simulation.

pub mod condition;
pub mod engine;
pub mod event;
pub mod http;
pub mod manager;
pub mod simulate;
pub mod store;
pub mod wire;

pub use condition::{Condition, ConditionSet};
pub use engine::{replay, Engine, Services};
pub use manager::{Clock, CreateRequest, ManagerConfig, ManualClock, SessionManager, SystemClock};
