pub mod cdt;
pub(crate) mod exact;
pub mod exec;
pub mod expandlist;
pub mod fixtures;
pub mod io;
pub mod mesh;
pub mod predicates;
pub mod pslg;
pub mod refine;
pub mod rules;
pub mod verify;
