//! Finite-strain solid mechanics: neo-Hookean constitutive law, element
//! residual and consistent tangent, ghost-penalty stabilization across cut
//! elements, and external surface tractions.

mod element;
mod ghost;
mod neo_hookean;
mod traction;

pub use element::{element_residual_tangent, ElemBlock};
pub use ghost::{ghost_facets, ghost_residual_tangent, GhostBlock, GhostFacet, GhostPenaltySpec};
pub use neo_hookean::{
    lame_from_engineering, pk2_s33, pk2_stress, pk2_tangent, Kinematics, Material,
};
pub use traction::traction_loads;
