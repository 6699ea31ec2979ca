use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use super::SocpError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConeKind {
    NonNegative,
    SecondOrder,
    RotatedSecondOrder,
}

impl ConeKind {
    fn tag(self) -> &'static str {
        match self {
            ConeKind::NonNegative => "nonneg",
            ConeKind::SecondOrder => "soc",
            ConeKind::RotatedSecondOrder => "rsoc",
        }
    }
}

/// Sparse affine expression `sum_i a_i x_i + constant`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinExpr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn constant(c: f64) -> Self {
        Self {
            terms: Vec::new(),
            constant: c,
        }
    }

    pub fn var(index: usize, coeff: f64) -> Self {
        Self {
            terms: vec![(index, coeff)],
            constant: 0.0,
        }
    }

    pub fn term(mut self, index: usize, coeff: f64) -> Self {
        self.terms.push((index, coeff));
        self
    }

    pub fn plus_constant(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }

    pub fn add(mut self, other: &LinExpr) -> Self {
        self.terms.extend_from_slice(&other.terms);
        self.constant += other.constant;
        self
    }

    pub fn scale(mut self, factor: f64) -> Self {
        for t in &mut self.terms {
            t.1 *= factor;
        }
        self.constant *= factor;
        self
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(i, a)| a * x[i]).sum::<f64>() + self.constant
    }
}

/// `matrix * x + offset` constrained to lie in a cone of kind `kind`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConeConstraint {
    pub kind: ConeKind,
    pub label: String,
    pub matrix: DMatrix<f64>,
    pub offset: DVector<f64>,
}

impl ConeConstraint {
    pub fn dim(&self) -> usize {
        self.offset.len()
    }

    pub fn value(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.matrix * x + &self.offset
    }

    /// How far the affine value is outside the cone (zero when inside).
    pub fn violation(&self, x: &DVector<f64>) -> f64 {
        let v = self.value(x);
        match self.kind {
            ConeKind::NonNegative => v.iter().fold(0.0f64, |acc, &e| acc.max(-e)),
            ConeKind::SecondOrder => (v.rows(1, v.len() - 1).norm() - v[0]).max(0.0),
            ConeKind::RotatedSecondOrder => {
                let (u, w) = (v[0], v[1]);
                let tail = v.rows(2, v.len() - 2).norm_squared();
                let r = std::f64::consts::FRAC_1_SQRT_2;
                let lhs = (tail + (r * (u - w)).powi(2)).sqrt();
                (lhs - r * (u + w)).max(0.0)
            }
        }
    }
}

/// A maximization problem over `num_vars` real scalars.
#[derive(Debug, Clone, PartialEq)]
pub struct ConicProgram {
    pub num_vars: usize,
    pub objective: DVector<f64>,
    pub constraints: Vec<ConeConstraint>,
    pub var_names: Vec<String>,
}

impl ConicProgram {
    pub fn new(var_names: Vec<String>) -> Self {
        let n = var_names.len();
        Self {
            num_vars: n,
            objective: DVector::zeros(n),
            constraints: Vec::new(),
            var_names,
        }
    }

    /// Program with anonymous variables `x0, x1, ...`.
    pub fn with_vars(n: usize) -> Self {
        Self::new((0..n).map(|i| format!("x{i}")).collect())
    }

    pub fn set_objective(&mut self, expr: &LinExpr) {
        self.objective = DVector::zeros(self.num_vars);
        for &(i, a) in &expr.terms {
            self.objective[i] += a;
        }
    }

    pub fn add(&mut self, kind: ConeKind, label: impl Into<String>, rows: &[LinExpr]) -> Result<(), SocpError> {
        let label = label.into();
        let mut matrix = DMatrix::zeros(rows.len(), self.num_vars);
        let mut offset = DVector::zeros(rows.len());
        for (r, row) in rows.iter().enumerate() {
            for &(i, a) in &row.terms {
                if i >= self.num_vars {
                    return Err(SocpError::Malformed(format!("{label}: variable {i} out of range")));
                }
                matrix[(r, i)] += a;
            }
            offset[r] = row.constant;
        }
        let c = ConeConstraint {
            kind,
            label,
            matrix,
            offset,
        };
        Self::check(&c, self.num_vars)?;
        self.constraints.push(c);
        Ok(())
    }

    fn check(c: &ConeConstraint, n: usize) -> Result<(), SocpError> {
        if c.matrix.ncols() != n || c.matrix.nrows() != c.offset.len() {
            return Err(SocpError::Malformed(format!("{}: affine map shape", c.label)));
        }
        let min_dim = match c.kind {
            ConeKind::NonNegative => 1,
            ConeKind::SecondOrder | ConeKind::RotatedSecondOrder => 2,
        };
        if c.dim() < min_dim {
            return Err(SocpError::Malformed(format!(
                "{}: {} cone needs dimension >= {min_dim}",
                c.label,
                c.kind.tag()
            )));
        }
        if c.matrix.iter().chain(c.offset.iter()).any(|v| !v.is_finite()) {
            return Err(SocpError::Malformed(format!("{}: non-finite data", c.label)));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), SocpError> {
        if self.objective.len() != self.num_vars || self.var_names.len() != self.num_vars {
            return Err(SocpError::Malformed("objective or name table length".into()));
        }
        if self.objective.iter().any(|v| !v.is_finite()) {
            return Err(SocpError::Malformed("non-finite objective".into()));
        }
        self.constraints.iter().try_for_each(|c| Self::check(c, self.num_vars))
    }

    pub fn objective_value(&self, x: &DVector<f64>) -> f64 {
        self.objective.dot(x)
    }

    pub fn max_violation(&self, x: &DVector<f64>) -> f64 {
        self.constraints.iter().map(|c| c.violation(x)).fold(0.0, f64::max)
    }

    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.var_names.iter().position(|v| v == name)
    }

    /// Text dump: a header, the objective, then one constraint per line as
    /// `<kind> <label> dim=<d> | <row>; <row>; ...` where each row is
    /// `<offset> + <coeff>*<var> ...` with zero coefficients omitted.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "vars {} {}", self.num_vars, self.var_names.join(" "));
        let mut obj = String::from("maximize");
        for (i, &a) in self.objective.iter().enumerate() {
            if a != 0.0 {
                let _ = write!(obj, " {a:+e}*{}", self.var_names[i]);
            }
        }
        let _ = writeln!(out, "{obj}");
        for c in &self.constraints {
            let rows: Vec<String> = (0..c.dim())
                .map(|r| {
                    let mut s = format!("{:+e}", c.offset[r]);
                    for (i, &a) in c.matrix.row(r).iter().enumerate() {
                        if a != 0.0 {
                            let _ = write!(s, " {a:+e}*{}", self.var_names[i]);
                        }
                    }
                    s
                })
                .collect();
            let _ = writeln!(out, "{} {} dim={} | {}", c.kind.tag(), c.label, c.dim(), rows.join("; "));
        }
        out
    }
}
