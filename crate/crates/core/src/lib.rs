pub mod linalg;
pub mod mesh;
mod par;
pub mod penergy;
pub mod duality;
pub mod limits;
pub mod hyperbolic;
pub mod lamination;
