use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

/// Errors raised by the estimation core.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Operand shapes are incompatible for the named operation.
    DimensionMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    NotSquare {
        op: &'static str,
        rows: usize,
        cols: usize,
    },
    /// Symmetric factorization hit a pivot below tolerance.
    NotPositiveDefinite { role: &'static str },
    /// Gaussian elimination found no usable pivot.
    Singular { role: &'static str },
    /// A NaN or infinity was produced or supplied.
    NonFinite { what: &'static str },
    InvalidParameter {
        name: &'static str,
        reason: &'static str,
    },
    /// Rejection sampling of a connected geometric network gave up.
    TopologyExhausted {
        attempts: usize,
        comm_radius: f64,
        min_degree: usize,
    },
    /// No cluster head produced an admissible two-way partition.
    PartitionExhausted { attempts: usize },
    /// A weight column does not sum to one.
    NotStochastic { column: usize, sum: f64 },
    /// A weight is negative or placed outside the neighborhood.
    InvalidWeight {
        row: usize,
        column: usize,
        weight: f64,
    },
    /// Node index outside the network.
    NodeOutOfRange { node: usize, n_nodes: usize },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DimensionMismatch { op, left, right } => write!(
                f,
                "{op}: dimension mismatch ({}x{} vs {}x{})",
                left.0, left.1, right.0, right.1
            ),
            Error::NotSquare { op, rows, cols } => {
                write!(f, "{op}: expected a square matrix, got {rows}x{cols}")
            }
            Error::NotPositiveDefinite { role } => {
                write!(f, "{role} is not symmetric positive definite")
            }
            Error::Singular { role } => write!(f, "{role} is singular"),
            Error::NonFinite { what } => write!(f, "non-finite value in {what}"),
            Error::InvalidParameter { name, reason } => write!(f, "invalid {name}: {reason}"),
            Error::TopologyExhausted {
                attempts,
                comm_radius,
                min_degree,
            } => write!(
                f,
                "no connected network with minimum degree {min_degree} after {attempts} attempts \
                 at radius {comm_radius}; try a larger communication radius"
            ),
            Error::PartitionExhausted { attempts } => write!(
                f,
                "no admissible cluster partition after {attempts} head draws"
            ),
            Error::NotStochastic { column, sum } => {
                write!(f, "weight column {column} sums to {sum}, expected 1")
            }
            Error::InvalidWeight {
                row,
                column,
                weight,
            } => write!(f, "invalid weight {weight} at ({row}, {column})"),
            Error::NodeOutOfRange { node, n_nodes } => {
                write!(f, "node {node} out of range for {n_nodes} nodes")
            }
        }
    }
}

impl core::error::Error for Error {}
