//! Program container: blocks, coefficients, constraints, validation and the
//! plain-text debug dump.

use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

use crate::hermitian;

#[derive(Debug, Error)]
pub enum SdpError {
    #[error("coefficient matrix is not Hermitian (residual {0:.3e})")]
    NotHermitian(f64),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("program has no constraints")]
    NoConstraints,
    #[error("program has non-finite data: {0}")]
    NonFinite(String),
    #[error("invalid solver options: {0}")]
    InvalidOptions(String),
}

/// Cone membership of one variable block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockKind {
    /// Complex Hermitian PSD block of the given dimension.
    Hermitian(usize),
    /// Single nonnegative scalar.
    Scalar,
}

/// A per-block coefficient or value: a Hermitian matrix or a scalar.
#[derive(Debug, Clone)]
pub enum BlockValue {
    Matrix(DMatrix<Complex64>),
    Scalar(f64),
}

impl BlockValue {
    /// Pairing `<A, X>`: real trace inner product for matrices, plain
    /// product for scalars.
    pub fn pair(&self, other: &BlockValue) -> f64 {
        match (self, other) {
            (BlockValue::Matrix(a), BlockValue::Matrix(x)) => hermitian::inner(a, x),
            (BlockValue::Scalar(a), BlockValue::Scalar(x)) => a * x,
            _ => panic!("mismatched block value kinds"),
        }
    }

    pub fn norm_squared(&self) -> f64 {
        match self {
            BlockValue::Matrix(a) => a.iter().map(|z| z.norm_sqr()).sum(),
            BlockValue::Scalar(s) => s * s,
        }
    }

    pub(crate) fn add_scaled(&mut self, other: &BlockValue, scale: f64) {
        match (self, other) {
            (BlockValue::Matrix(a), BlockValue::Matrix(b)) => {
                *a += b * Complex64::new(scale, 0.0);
            }
            (BlockValue::Scalar(a), BlockValue::Scalar(b)) => *a += scale * b,
            _ => panic!("mismatched block value kinds"),
        }
    }

    pub(crate) fn difference_norm_squared(&self, other: &BlockValue) -> f64 {
        match (self, other) {
            (BlockValue::Matrix(a), BlockValue::Matrix(b)) => {
                (a - b).iter().map(|z| z.norm_sqr()).sum()
            }
            (BlockValue::Scalar(a), BlockValue::Scalar(b)) => (a - b) * (a - b),
            _ => panic!("mismatched block value kinds"),
        }
    }

    fn matches(&self, kind: &BlockKind) -> bool {
        match (self, kind) {
            (BlockValue::Matrix(m), BlockKind::Hermitian(n)) => {
                m.nrows() == *n && m.ncols() == *n
            }
            (BlockValue::Scalar(_), BlockKind::Scalar) => true,
            _ => false,
        }
    }

    fn finite(&self) -> bool {
        match self {
            BlockValue::Matrix(m) => m.iter().all(|z| z.re.is_finite() && z.im.is_finite()),
            BlockValue::Scalar(s) => s.is_finite(),
        }
    }

    fn hermitian_ok(&self) -> Result<(), SdpError> {
        if let BlockValue::Matrix(m) = self {
            let r = hermitian::hermitian_residual(m);
            if r > 1e-9 {
                return Err(SdpError::NotHermitian(r));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Eq,
    Le,
    Ge,
}

impl Relation {
    fn symbol(self) -> &'static str {
        match self {
            Relation::Eq => "=",
            Relation::Le => "<=",
            Relation::Ge => ">=",
        }
    }
}

/// One linear constraint `sum_b <A_b, X_b>  rel  rhs`.
#[derive(Debug, Clone)]
pub struct Constraint {
    pub terms: Vec<(usize, BlockValue)>,
    pub relation: Relation,
    pub rhs: f64,
}

/// Block-structured cone program; see the module docs for the exact form.
#[derive(Debug, Clone, Default)]
pub struct ConeProgram {
    pub blocks: Vec<BlockKind>,
    pub objective: Vec<(usize, BlockValue)>,
    pub constraints: Vec<Constraint>,
}

impl ConeProgram {
    pub fn new(blocks: Vec<BlockKind>) -> Self {
        ConeProgram {
            blocks,
            objective: Vec::new(),
            constraints: Vec::new(),
        }
    }

    pub fn add_objective(&mut self, block: usize, coeff: BlockValue) {
        self.objective.push((block, coeff));
    }

    pub fn add_constraint(&mut self, terms: Vec<(usize, BlockValue)>, relation: Relation, rhs: f64) {
        self.constraints.push(Constraint { terms, relation, rhs });
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn validate(&self) -> Result<(), SdpError> {
        if self.constraints.is_empty() {
            return Err(SdpError::NoConstraints);
        }
        let check_terms = |terms: &[(usize, BlockValue)], what: &str| -> Result<(), SdpError> {
            for (block, coeff) in terms {
                let kind = self.blocks.get(*block).ok_or_else(|| {
                    SdpError::ShapeMismatch(format!("{what} references missing block {block}"))
                })?;
                if !coeff.matches(kind) {
                    return Err(SdpError::ShapeMismatch(format!(
                        "{what} coefficient does not match block {block}"
                    )));
                }
                if !coeff.finite() {
                    return Err(SdpError::NonFinite(format!("{what} coefficient on block {block}")));
                }
                coeff.hermitian_ok()?;
            }
            Ok(())
        };
        check_terms(&self.objective, "objective")?;
        for (i, c) in self.constraints.iter().enumerate() {
            check_terms(&c.terms, &format!("constraint {i}"))?;
            if !c.rhs.is_finite() {
                return Err(SdpError::NonFinite(format!("constraint {i} right-hand side")));
            }
        }
        Ok(())
    }
}

/// Real symmetric embedding `[[Re A, -Im A], [Im A, Re A]]` of a Hermitian
/// matrix; rejects inputs whose symmetry residual exceeds `1e-9`.
pub fn embed_hermitian(a: &DMatrix<Complex64>) -> Result<DMatrix<f64>, SdpError> {
    let r = hermitian::hermitian_residual(a);
    if r > 1e-9 {
        return Err(SdpError::NotHermitian(r));
    }
    Ok(hermitian::embed(&hermitian::hermitianize(a)))
}

/// Plain-text listing of a program for cross-checking against external
/// solvers.
///
/// Grammar (one record per line, `#` starts a comment):
///
/// ```text
/// blocks <count>
/// block <index> hermitian <dim> | block <index> scalar
/// objective
/// term <block> <row> <col> <re> <im>      # matrix coefficient entry
/// sterm <block> <value>                   # scalar coefficient
/// constraint <index> <=|>=|=> <rhs>
/// term ... / sterm ...                    # as above
/// end
/// ```
///
/// Matrix terms list the full dense coefficient, row-major.
pub fn dump_program(program: &ConeProgram) -> String {
    use std::fmt::Write;
    let mut out = String::new();
    writeln!(out, "blocks {}", program.blocks.len()).unwrap();
    for (i, b) in program.blocks.iter().enumerate() {
        match b {
            BlockKind::Hermitian(n) => writeln!(out, "block {i} hermitian {n}").unwrap(),
            BlockKind::Scalar => writeln!(out, "block {i} scalar").unwrap(),
        }
    }
    let dump_terms = |out: &mut String, terms: &[(usize, BlockValue)]| {
        for (block, coeff) in terms {
            match coeff {
                BlockValue::Matrix(m) => {
                    for r in 0..m.nrows() {
                        for c in 0..m.ncols() {
                            let z = m[(r, c)];
                            writeln!(out, "term {block} {r} {c} {:e} {:e}", z.re, z.im).unwrap();
                        }
                    }
                }
                BlockValue::Scalar(s) => writeln!(out, "sterm {block} {s:e}").unwrap(),
            }
        }
    };
    writeln!(out, "objective").unwrap();
    dump_terms(&mut out, &program.objective);
    for (i, c) in program.constraints.iter().enumerate() {
        writeln!(out, "constraint {i} {} {:e}", c.relation.symbol(), c.rhs).unwrap();
        dump_terms(&mut out, &c.terms);
    }
    out.push_str("end\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn embed_scalar_identity() {
        let a = DMatrix::from_row_slice(1, 1, &[c(1.0, 0.0)]);
        let e = embed_hermitian(&a).unwrap();
        assert_eq!(e, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]));
    }

    #[test]
    fn embed_antisymmetric_imaginary_matrix() {
        // [[0, -i], [i, 0]] has eigenvalues +-1, each doubled in the embedding
        let a = DMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, -1.0), c(0.0, 1.0), c(0.0, 0.0)]);
        let e = embed_hermitian(&a).unwrap();
        let mut vals: Vec<f64> = e.symmetric_eigen().eigenvalues.iter().copied().collect();
        vals.sort_by(|x, y| y.partial_cmp(x).unwrap());
        assert_relative_eq!(vals[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(vals[1], 1.0, epsilon = 1e-12);
        assert_relative_eq!(vals[2], -1.0, epsilon = 1e-12);
        assert_relative_eq!(vals[3], -1.0, epsilon = 1e-12);
    }

    #[test]
    fn embed_doubles_trace() {
        for seed in 0..5 {
            let a = crate::hermitian::hermitianize(&DMatrix::from_fn(3, 3, |i, j| {
                c((i + j + seed) as f64, (i as f64 - j as f64) * 0.7)
            }));
            let e = embed_hermitian(&a).unwrap();
            assert_relative_eq!(e.trace(), 2.0 * crate::hermitian::real_trace(&a), epsilon = 1e-12);
        }
    }

    #[test]
    fn embed_rejects_non_hermitian() {
        let a = DMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]);
        assert!(matches!(embed_hermitian(&a), Err(SdpError::NotHermitian(_))));
    }

    #[test]
    fn validation_catches_shape_and_emptiness() {
        let mut p = ConeProgram::new(vec![BlockKind::Hermitian(2)]);
        assert!(matches!(p.validate(), Err(SdpError::NoConstraints)));
        p.add_constraint(
            vec![(0, BlockValue::Matrix(DMatrix::identity(3, 3)))],
            Relation::Eq,
            1.0,
        );
        assert!(matches!(p.validate(), Err(SdpError::ShapeMismatch(_))));
    }

    #[test]
    fn dump_lists_blocks_and_constraints() {
        let mut p = ConeProgram::new(vec![BlockKind::Hermitian(2), BlockKind::Scalar]);
        p.add_objective(1, BlockValue::Scalar(-1.0));
        p.add_constraint(
            vec![
                (0, BlockValue::Matrix(DMatrix::identity(2, 2))),
                (1, BlockValue::Scalar(1.0)),
            ],
            Relation::Le,
            2.0,
        );
        let text = dump_program(&p);
        assert!(text.contains("blocks 2"));
        assert!(text.contains("block 0 hermitian 2"));
        assert!(text.contains("block 1 scalar"));
        assert!(text.contains("constraint 0 <= 2e0"));
        assert!(text.ends_with("end\n"));
    }
}
