pub mod bvh;
pub mod ccd;
pub mod error;
pub mod geometry;
pub mod lcs;
pub mod mesh;
pub mod oracle;
pub mod pgs;
pub mod pipeline;
pub mod proximity;
pub mod seeding;
pub mod shapes;
