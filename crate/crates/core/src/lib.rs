//! Portable multi-agent skill assets.
//!
//! * [`model`]: skill, role, bounds and evolution-record types
//! * [`codec`]: directory parse/serialize, profile validation, indexing
//! * [`disclosure`]: budgeted staged loading
//! * [`trajectory`]: session logs, CREATE distillation, PATCH friction analysis
//! * [`evolution`]: E/U/F/S scoring and counter updates
//! * [`governance`]: SIMPLIFY, REBUILD, ROLLBACK and the archive store
//! * [`simulation`]: scripted multi-session lifecycle replay

pub mod codec;
pub mod disclosure;
pub mod evolution;
pub mod fsutil;
pub mod governance;
pub mod model;
pub mod simulation;
pub mod trajectory;
