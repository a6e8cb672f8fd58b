//! Ensembles of seeded problems, the inequality checks run on them, and the
//! machine-readable reports.

pub mod checks;
pub mod elliptic;
pub mod ensemble;
pub mod fs;
pub mod report;

pub use checks::{check_two_sided, linear_fit, member_bounds, run_member, BoundCheck, MemberRow, Window};
pub use elliptic::{elliptic_limit_run, EllipticRow};
pub use ensemble::{generate_member, grid_nodes, CoefficientFamily, EnsembleConfig, LatticeSource, Member, SourceFamily, Support};
pub use fs::{fs_fit, FSFitReport};
pub use report::{run_suite, SuiteConfig, VerificationReport};
