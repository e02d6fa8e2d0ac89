pub mod assembly;
pub mod control;
pub mod instances;
pub mod moments;
pub mod oracle;
pub mod polyalg;
pub mod problem;
pub mod problem_file;
pub mod quadrature;
pub mod semialg;
