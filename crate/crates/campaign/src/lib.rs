//! Live adaptive sampling campaigns.
//!
//! A campaign runs the adaptive design with the field team as the source of
//! house statuses: the service hands out batches of houses, takes back their
//! inspection results and refits the posterior once a batch is complete. Each
//! campaign is an append-only event log plus a snapshot on disk.

pub mod campaign;
pub mod cli;
pub mod error;
pub mod http;
pub mod service;
pub mod store;

pub use campaign::{Campaign, CampaignSpec, CampaignStatus, CampaignView, Observation, ObservedStatus};
pub use error::{ErrorKind, ServiceError, ServiceResult};
pub use service::Service;
pub use store::Store;
