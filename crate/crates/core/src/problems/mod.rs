//! Built-in example problems and random instance generators.

pub mod jump;
pub mod lqr;
pub mod many_param;
pub mod pendulum;
pub mod random;
pub mod tutorial;

pub use jump::Jump;
pub use lqr::{generate_lqr_bench, LqrBench, LqrBenchData};
pub use many_param::ManyParam;
pub use pendulum::Pendulum;
pub use tutorial::Tutorial;
