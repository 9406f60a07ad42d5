pub mod disorder;
pub mod fit;
pub mod groundstate;
pub mod ids;
pub mod io;
pub mod lifshitz;
pub mod linalg;
pub mod operator;
pub mod quadrature;
pub mod scalar;
pub mod symbol;

/// Double-precision aliases.
pub type Symbol = symbol::Symbol<f64>;
pub type IntegerSymbolSpec = operator::IntegerSymbolSpec<f64>;
pub type FiniteSection = operator::FiniteSection<f64>;
pub type GroundBasis = groundstate::GroundBasis<f64>;
pub type SingleSiteDist = disorder::SingleSiteDist<f64>;
pub type Potential = disorder::Potential<f64>;
pub type IdsCurve = ids::IdsCurve<f64>;
pub type TailFit = lifshitz::TailFit<f64>;
pub type TempleReport = lifshitz::TempleReport<f64>;

/// Single-precision aliases.
pub mod f32 {
    pub type Symbol = crate::symbol::Symbol<f32>;
    pub type IntegerSymbolSpec = crate::operator::IntegerSymbolSpec<f32>;
    pub type FiniteSection = crate::operator::FiniteSection<f32>;
    pub type SingleSiteDist = crate::disorder::SingleSiteDist<f32>;
    pub type IdsCurve = crate::ids::IdsCurve<f32>;
}
