//! Double Butcher tableaux for IMEX Runge-Kutta schemes.
//!
//! A tableau pairs a strictly lower triangular explicit matrix with a lower
//! triangular implicit one. Built-in schemes are listed in [`BUILTIN_NAMES`].

use std::fmt;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const ROW_SUM_TOL: f64 = 1e-12;

pub const BUILTIN_NAMES: [&str; 6] = ["ARS111", "ARS222", "ARS443", "DP_A121", "DP2_A242", "DP1_A242"];

#[derive(Clone, Debug, PartialEq)]
pub struct DoubleButcherTableau {
    pub name: String,
    pub a_explicit: DMatrix<f64>,
    pub a_implicit: DMatrix<f64>,
    pub b_explicit: DVector<f64>,
    pub b_implicit: DVector<f64>,
    pub c_explicit: DVector<f64>,
    pub c_implicit: DVector<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SchemeClass {
    TypeA,
    TypeCkArs,
    TypeCk,
    Invalid,
}

/// One broken tableau invariant, with the offending indices (0-based).
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    ExplicitNotStrictlyLower { row: usize, col: usize, value: f64 },
    ImplicitNotLower { row: usize, col: usize, value: f64 },
    ExplicitRowSum { row: usize, sum: f64, c: f64 },
    ImplicitRowSum { row: usize, sum: f64, c: f64 },
    DimensionMismatch { what: &'static str },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::ExplicitNotStrictlyLower { row, col, value } => {
                write!(f, "explicit entry ({row},{col}) = {value} must be zero")
            }
            Violation::ImplicitNotLower { row, col, value } => {
                write!(f, "implicit entry ({row},{col}) = {value} must be zero")
            }
            Violation::ExplicitRowSum { row, sum, c } => {
                write!(f, "explicit row {row} sums to {sum}, c~ = {c}")
            }
            Violation::ImplicitRowSum { row, sum, c } => {
                write!(f, "implicit row {row} sums to {sum}, c = {c}")
            }
            Violation::DimensionMismatch { what } => write!(f, "dimension mismatch in {what}"),
        }
    }
}

impl DoubleButcherTableau {
    /// Builds a tableau from row-major coefficient rows. Weights default to
    /// the last rows and abscissae to the row sums.
    pub fn from_rows(name: &str, explicit: &[Vec<f64>], implicit: &[Vec<f64>]) -> Result<Self> {
        let s = explicit.len();
        if s == 0 || implicit.len() != s {
            return Err(Error::Tableau(format!("{name}: stage counts differ or are zero")));
        }
        let to_matrix = |rows: &[Vec<f64>], which: &str| -> Result<DMatrix<f64>> {
            let mut m = DMatrix::zeros(s, s);
            for (i, row) in rows.iter().enumerate() {
                if row.len() > s {
                    return Err(Error::Tableau(format!("{name}: {which} row {i} too long")));
                }
                for (j, &x) in row.iter().enumerate() {
                    m[(i, j)] = x;
                }
            }
            Ok(m)
        };
        let ae = to_matrix(explicit, "explicit")?;
        let ai = to_matrix(implicit, "implicit")?;
        let b_explicit = ae.row(s - 1).transpose();
        let b_implicit = ai.row(s - 1).transpose();
        let c_explicit = row_sums(&ae);
        let c_implicit = row_sums(&ai);
        Ok(Self {
            name: name.to_string(),
            a_explicit: ae,
            a_implicit: ai,
            b_explicit,
            b_implicit,
            c_explicit,
            c_implicit,
        })
    }

    pub fn stages(&self) -> usize {
        self.a_implicit.nrows()
    }

    #[inline]
    pub fn ae(&self, i: usize, j: usize) -> f64 {
        self.a_explicit[(i, j)]
    }

    #[inline]
    pub fn ai(&self, i: usize, j: usize) -> f64 {
        self.a_implicit[(i, j)]
    }

    pub fn validate(&self) -> Vec<Violation> {
        let s = self.a_implicit.nrows();
        let mut out = Vec::new();
        let shapes_ok = self.a_implicit.ncols() == s
            && self.a_explicit.shape() == (s, s)
            && self.b_explicit.len() == s
            && self.b_implicit.len() == s
            && self.c_explicit.len() == s
            && self.c_implicit.len() == s;
        if !shapes_ok {
            out.push(Violation::DimensionMismatch { what: "tableau arrays" });
            return out;
        }
        for i in 0..s {
            for j in i..s {
                let v = self.a_explicit[(i, j)];
                if v != 0.0 {
                    out.push(Violation::ExplicitNotStrictlyLower { row: i, col: j, value: v });
                }
            }
            for j in i + 1..s {
                let v = self.a_implicit[(i, j)];
                if v != 0.0 {
                    out.push(Violation::ImplicitNotLower { row: i, col: j, value: v });
                }
            }
        }
        for i in 0..s {
            let se: f64 = self.a_explicit.row(i).sum();
            if (se - self.c_explicit[i]).abs() > ROW_SUM_TOL {
                out.push(Violation::ExplicitRowSum { row: i, sum: se, c: self.c_explicit[i] });
            }
            let si: f64 = self.a_implicit.row(i).sum();
            if (si - self.c_implicit[i]).abs() > ROW_SUM_TOL {
                out.push(Violation::ImplicitRowSum { row: i, sum: si, c: self.c_implicit[i] });
            }
        }
        out
    }

    /// Globally stiffly accurate: c_s = c~_s = 1 and the last rows equal the weights.
    pub fn is_gsa(&self) -> bool {
        let s = self.stages();
        let last = s - 1;
        let close = |a: f64, b: f64| (a - b).abs() <= ROW_SUM_TOL;
        close(self.c_implicit[last], 1.0)
            && close(self.c_explicit[last], 1.0)
            && (0..s).all(|j| {
                close(self.a_implicit[(last, j)], self.b_implicit[j])
                    && close(self.a_explicit[(last, j)], self.b_explicit[j])
            })
    }

    pub fn classify(&self) -> SchemeClass {
        if !self.validate().is_empty() {
            return SchemeClass::Invalid;
        }
        let s = self.stages();
        let diag_nonzero = |from: usize| (from..s).all(|i| self.a_implicit[(i, i)] != 0.0);
        if diag_nonzero(0) {
            return SchemeClass::TypeA;
        }
        let first_row_zero = (0..s).all(|j| self.a_implicit[(0, j)] == 0.0);
        if first_row_zero && diag_nonzero(1) {
            let first_col_zero = (0..s).all(|i| self.a_implicit[(i, 0)] == 0.0);
            if first_col_zero {
                SchemeClass::TypeCkArs
            } else {
                SchemeClass::TypeCk
            }
        } else {
            SchemeClass::Invalid
        }
    }

    /// Reads the key-value text format:
    ///
    /// ```text
    /// name = MYSCHEME
    /// s = 2
    /// explicit = 0 0 1 0
    /// implicit = 0 0 0 1
    /// ```
    ///
    /// Optional keys `b_explicit`, `b_implicit`, `c_explicit`, `c_implicit`
    /// override the defaults. Lines starting with `#` are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut name = None;
        let mut s = None;
        let mut fields: Vec<(String, Vec<f64>)> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Tableau(format!("line {}: expected key = value", lineno + 1)))?;
            let key = key.trim();
            let value = value.trim();
            match key {
                "name" => name = Some(value.to_string()),
                "s" => {
                    s = Some(
                        value
                            .parse::<usize>()
                            .map_err(|e| Error::Tableau(format!("line {}: bad stage count: {e}", lineno + 1)))?,
                    )
                }
                _ => {
                    let nums = value
                        .split(|c: char| c.is_whitespace() || c == ',')
                        .filter(|t| !t.is_empty())
                        .map(parse_number)
                        .collect::<Result<Vec<_>>>()?;
                    fields.push((key.to_string(), nums));
                }
            }
        }
        let name = name.ok_or_else(|| Error::Tableau("missing `name`".into()))?;
        let s = s.ok_or_else(|| Error::Tableau("missing `s`".into()))?;
        if s == 0 {
            return Err(Error::Tableau("stage count must be positive".into()));
        }
        let get = |k: &str| fields.iter().find(|(key, _)| key == k).map(|(_, v)| v.clone());
        let square = |k: &str| -> Result<Vec<Vec<f64>>> {
            let v = get(k).ok_or_else(|| Error::Tableau(format!("missing `{k}`")))?;
            if v.len() != s * s {
                return Err(Error::Tableau(format!("`{k}` needs {} entries, got {}", s * s, v.len())));
            }
            Ok(v.chunks(s).map(|c| c.to_vec()).collect())
        };
        let mut t = Self::from_rows(&name, &square("explicit")?, &square("implicit")?)?;
        for (key, slot) in [
            ("b_explicit", &mut t.b_explicit),
            ("b_implicit", &mut t.b_implicit),
            ("c_explicit", &mut t.c_explicit),
            ("c_implicit", &mut t.c_implicit),
        ] {
            if let Some(v) = get(key) {
                if v.len() != s {
                    return Err(Error::Tableau(format!("`{key}` needs {s} entries")));
                }
                *slot = DVector::from_vec(v);
            }
        }
        Ok(t)
    }

    /// Inverse of [`parse`](Self::parse); floats use shortest round-trip form.
    pub fn to_text(&self) -> String {
        fn join<'a>(it: impl Iterator<Item = &'a f64>) -> String {
            it.map(|x| format!("{x:?}")).collect::<Vec<_>>().join(" ")
        }
        // nalgebra iterates column-major; emit row by row
        let rows = |m: &DMatrix<f64>| join(m.transpose().iter());
        format!(
            "name = {}\ns = {}\nexplicit = {}\nimplicit = {}\nb_explicit = {}\nb_implicit = {}\nc_explicit = {}\nc_implicit = {}\n",
            self.name,
            self.stages(),
            rows(&self.a_explicit),
            rows(&self.a_implicit),
            join(self.b_explicit.iter()),
            join(self.b_implicit.iter()),
            join(self.c_explicit.iter()),
            join(self.c_implicit.iter()),
        )
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Tableau(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }
}

fn row_sums(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(m.nrows(), m.row_iter().map(|r| r.sum()))
}

/// Accepts plain floats and simple fractions such as `-3/2`.
fn parse_number(tok: &str) -> Result<f64> {
    let bad = || Error::Tableau(format!("cannot parse coefficient `{tok}`"));
    if let Some((n, d)) = tok.split_once('/') {
        let n: f64 = n.trim().parse().map_err(|_| bad())?;
        let d: f64 = d.trim().parse().map_err(|_| bad())?;
        Ok(n / d)
    } else {
        tok.parse().map_err(|_| bad())
    }
}

pub fn ars111() -> DoubleButcherTableau {
    DoubleButcherTableau::from_rows("ARS111", &[vec![0.0, 0.0], vec![1.0, 0.0]], &[vec![0.0, 0.0], vec![0.0, 1.0]])
        .expect("static tableau")
}

pub fn ars222() -> DoubleButcherTableau {
    let g = 1.0 - 1.0 / 2f64.sqrt();
    let d = 1.0 - 1.0 / (2.0 * g);
    DoubleButcherTableau::from_rows(
        "ARS222",
        &[vec![0.0; 3], vec![g, 0.0, 0.0], vec![d, 1.0 - d, 0.0]],
        &[vec![0.0; 3], vec![0.0, g, 0.0], vec![0.0, 1.0 - g, g]],
    )
    .expect("static tableau")
}

pub fn ars443() -> DoubleButcherTableau {
    DoubleButcherTableau::from_rows(
        "ARS443",
        &[
            vec![0.0; 5],
            vec![0.5, 0.0, 0.0, 0.0, 0.0],
            vec![11.0 / 18.0, 1.0 / 18.0, 0.0, 0.0, 0.0],
            vec![5.0 / 6.0, -5.0 / 6.0, 0.5, 0.0, 0.0],
            vec![0.25, 1.75, 0.75, -1.75, 0.0],
        ],
        &[
            vec![0.0; 5],
            vec![0.0, 0.5, 0.0, 0.0, 0.0],
            vec![0.0, 1.0 / 6.0, 0.5, 0.0, 0.0],
            vec![0.0, -0.5, 0.5, 0.5, 0.0],
            vec![0.0, 1.5, -1.5, 0.5, 0.5],
        ],
    )
    .expect("static tableau")
}

/// DP-A(1,2,1). Any `gamma >= 1/2` is admissible; the default is 1.
pub fn dp_a121(gamma: f64) -> DoubleButcherTableau {
    DoubleButcherTableau::from_rows(
        "DP_A121",
        &[vec![0.0, 0.0], vec![1.0, 0.0]],
        &[vec![gamma, 0.0], vec![1.0 - gamma, gamma]],
    )
    .expect("static tableau")
}

/// DP2-A(2,4,2). The default `gamma` is 1 - 1/sqrt(2).
pub fn dp2_a242(gamma: f64) -> DoubleButcherTableau {
    DoubleButcherTableau::from_rows(
        "DP2_A242",
        &[vec![0.0; 4], vec![0.0; 4], vec![0.0, 1.0, 0.0, 0.0], vec![0.0, 0.5, 0.5, 0.0]],
        &[
            vec![gamma, 0.0, 0.0, 0.0],
            vec![-gamma, gamma, 0.0, 0.0],
            vec![0.0, 1.0 - gamma, gamma, 0.0],
            vec![0.0, 0.5, 0.5 - gamma, gamma],
        ],
    )
    .expect("static tableau")
}

fn dp1_a242_with_row4(row4: [f64; 4]) -> DoubleButcherTableau {
    DoubleButcherTableau::from_rows(
        "DP1_A242",
        &[vec![0.0; 4], vec![1.0 / 3.0, 0.0, 0.0, 0.0], vec![1.0, 0.0, 0.0, 0.0], vec![0.5, 0.0, 0.5, 0.0]],
        &[vec![0.5, 0.0, 0.0, 0.0], vec![1.0 / 6.0, 0.5, 0.0, 0.0], vec![-0.5, 0.5, 0.5, 0.0], row4.to_vec()],
    )
    .expect("static tableau")
}

/// DP1-A(2,4,2) with the last implicit row `[3/2, -3/2, 1/2, 1/2]`.
pub fn dp1_a242() -> DoubleButcherTableau {
    dp1_a242_with_row4([1.5, -1.5, 0.5, 0.5])
}

/// The misprinted variant whose last implicit row reads `[3/2, 1-3/2, 1/2, 1/2]`.
/// Its row sum is 2, so `validate` rejects it against c_4 = 1.
pub fn dp1_a242_literal() -> DoubleButcherTableau {
    let mut t = dp1_a242_with_row4([1.5, 1.0 - 1.5, 0.5, 0.5]);
    t.c_implicit[3] = 1.0;
    t
}

pub fn default_dp_a121_gamma() -> f64 {
    1.0
}

pub fn default_dp2_a242_gamma() -> f64 {
    1.0 - 1.0 / 2f64.sqrt()
}

/// Looks up a built-in tableau by name (case-insensitive, `-` and `_` ignored).
pub fn builtin(name: &str) -> Result<DoubleButcherTableau> {
    let key: String = name
        .chars()
        .filter(|c| *c != '_' && *c != '-' && *c != '(' && *c != ')' && *c != ',')
        .collect::<String>()
        .to_ascii_uppercase();
    match key.as_str() {
        "ARS111" => Ok(ars111()),
        "ARS222" => Ok(ars222()),
        "ARS443" => Ok(ars443()),
        "DPA121" | "DPA" => Ok(dp_a121(default_dp_a121_gamma())),
        "DP2A242" | "DP2A" => Ok(dp2_a242(default_dp2_a242_gamma())),
        "DP1A242" | "DP1A" => Ok(dp1_a242()),
        _ => Err(Error::UnknownTableau { name: name.to_string(), available: BUILTIN_NAMES.join(", ") }),
    }
}

pub fn all_builtins() -> Vec<DoubleButcherTableau> {
    BUILTIN_NAMES.iter().map(|n| builtin(n).expect("builtin")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_valid_gsa_and_classified() {
        for t in all_builtins() {
            assert!(t.validate().is_empty(), "{}: {:?}", t.name, t.validate());
            assert!(t.is_gsa(), "{} not GSA", t.name);
            let expect = if t.name.starts_with("ARS") { SchemeClass::TypeCkArs } else { SchemeClass::TypeA };
            assert_eq!(t.classify(), expect, "{}", t.name);
        }
    }

    #[test]
    fn ars222_constants() {
        let t = ars222();
        let g = 1.0 - 1.0 / 2f64.sqrt();
        assert!((t.ai(1, 1) - 0.2928932188134524).abs() < 1e-15);
        assert!((t.ae(2, 0) - (1.0 - 1.0 / (2.0 * g))).abs() < 1e-15);
    }

    #[test]
    fn ars443_last_implicit_row() {
        let t = ars443();
        let row: Vec<f64> = t.a_implicit.row(4).iter().copied().collect();
        assert_eq!(row, vec![0.0, 1.5, -1.5, 0.5, 0.5]);
    }

    #[test]
    fn zero_tableau_valid_not_gsa() {
        let t = DoubleButcherTableau::from_rows("zero", &[vec![0.0]], &[vec![0.0]]).unwrap();
        assert!(t.validate().is_empty());
        assert!(!t.is_gsa());
    }

    #[test]
    fn literal_dp1_row_rejected() {
        let t = dp1_a242_literal();
        let v = t.validate();
        assert!(v.iter().any(|x| matches!(x, Violation::ImplicitRowSum { row: 3, .. })));
        assert_eq!(t.classify(), SchemeClass::Invalid);
    }

    #[test]
    fn dp1_classified_type_a() {
        assert_eq!(dp1_a242().classify(), SchemeClass::TypeA);
        assert_eq!(ars111().classify(), SchemeClass::TypeCkArs);
    }

    #[test]
    fn type_ck_detected() {
        let t =
            DoubleButcherTableau::from_rows("ck", &[vec![0.0, 0.0], vec![1.0, 0.0]], &[vec![0.0, 0.0], vec![0.5, 0.5]])
                .unwrap();
        assert_eq!(t.classify(), SchemeClass::TypeCk);
    }

    #[test]
    fn unknown_name_lists_available() {
        let err = builtin("RK4").unwrap_err().to_string();
        assert!(err.contains("ARS443") && err.contains("DP1_A242"));
    }

    #[test]
    fn parse_round_trip() {
        let text = "# test\nname = EULER\ns = 2\nexplicit = 0 0 1 0\nimplicit = 0 0, 0 1\n";
        let t = DoubleButcherTableau::parse(text).unwrap();
        assert_eq!(t, {
            let mut a = ars111();
            a.name = "EULER".into();
            a
        });
        let frac = "name = F\ns = 2\nexplicit = 0 0 1 0\nimplicit = 1/2 0 1/2 1/2\n";
        let t = DoubleButcherTableau::parse(frac).unwrap();
        assert_eq!(t.ai(0, 0), 0.5);
    }

    #[test]
    fn parse_errors() {
        assert!(DoubleButcherTableau::parse("s = 2\nexplicit = 0 0 1 0\nimplicit = 0 0 0 1").is_err());
        assert!(DoubleButcherTableau::parse("name = x\ns = 2\nexplicit = 0 0 1\nimplicit = 0 0 0 1").is_err());
        assert!(DoubleButcherTableau::parse("name = x\ns = 2\nexplicit = 0 0 1 q\nimplicit = 0 0 0 1").is_err());
    }

    #[test]
    fn dp1_dirk_part_third_order_conditions() {
        let t = dp1_a242();
        let b = &t.b_implicit;
        let c = &t.c_implicit;
        let a = &t.a_implicit;
        let sum_b: f64 = b.sum();
        let bc: f64 = b.dot(c);
        let bc2: f64 = b.iter().zip(c.iter()).map(|(b, c)| b * c * c).sum();
        let bac: f64 = (b.transpose() * a * c)[(0, 0)];
        assert!((sum_b - 1.0).abs() < 1e-14);
        assert!((bc - 0.5).abs() < 1e-14);
        assert!((bc2 - 1.0 / 3.0).abs() < 1e-14);
        assert!((bac - 1.0 / 6.0).abs() < 1e-14);
    }
}
