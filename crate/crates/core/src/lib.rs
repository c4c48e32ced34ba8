pub mod control;
pub mod domain;
pub mod forecast;
pub mod harness;
pub mod kpi;
pub mod plant;
pub mod qp;
