//! Motor-to-joint coupling of the cable transmission, `q = L·θ`, and its
//! calibration from recorded motion.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector, Dyn, OMatrix, SymmetricEigen, U8};
use serde::{Deserialize, Serialize};

use crate::{Error, JointVector, Matrix8, MotorVector, Result, DOF};

/// Which coupling entries may be nonzero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructureMask {
    allowed: [[bool; DOF]; DOF],
}

impl StructureMask {
    pub fn from_fn(f: impl Fn(usize, usize) -> bool) -> Self {
        let mut allowed = [[false; DOF]; DOF];
        for (i, row) in allowed.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = f(i, j);
            }
        }
        Self { allowed }
    }

    /// Joints 1–4 are geared directly (diagonal); the cable-driven joints 5–8
    /// are coupled upper-triangularly among themselves.
    pub fn crane() -> Self {
        Self::from_fn(|i, j| if i < 4 { i == j } else { j >= i })
    }

    pub fn diagonal() -> Self {
        Self::from_fn(|i, j| i == j)
    }

    pub fn upper_triangular() -> Self {
        Self::from_fn(|i, j| j >= i)
    }

    pub fn dense() -> Self {
        Self::from_fn(|_, _| true)
    }

    pub fn allows(&self, row: usize, col: usize) -> bool {
        self.allowed[row][col]
    }

    pub fn columns(&self, row: usize) -> Vec<usize> {
        (0..DOF).filter(|&j| self.allowed[row][j]).collect()
    }

    pub fn admits(&self, m: &Matrix8) -> bool {
        (0..DOF).all(|i| (0..DOF).all(|j| self.allowed[i][j] || m[(i, j)] == 0.0))
    }

    fn header(&self) -> String {
        let rows: Vec<String> = self
            .allowed
            .iter()
            .map(|r| r.iter().map(|&b| if b { '1' } else { '0' }).collect())
            .collect();
        format!("# mask {}", rows.join(" "))
    }

    fn parse_header(line: &str) -> Option<Self> {
        let rows: Vec<&str> = line.strip_prefix("# mask")?.split_whitespace().collect();
        if rows.len() != DOF {
            return None;
        }
        let mut allowed = [[false; DOF]; DOF];
        for (i, row) in rows.iter().enumerate() {
            let bytes = row.as_bytes();
            if bytes.len() != DOF {
                return None;
            }
            for (j, b) in bytes.iter().enumerate() {
                allowed[i][j] = match b {
                    b'1' => true,
                    b'0' => false,
                    _ => return None,
                };
            }
        }
        Some(Self { allowed })
    }
}

/// 8×8 motor→joint map with its admissible sparsity pattern.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingMatrix {
    matrix: Matrix8,
    mask: StructureMask,
}

/// Final drive reduction from motor to cable-driven joint.
pub const CABLE_DRIVE_REDUCTION: f64 = 219.7;

impl CouplingMatrix {
    pub fn new(matrix: Matrix8, mask: StructureMask) -> Result<Self> {
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("coupling matrix"));
        }
        if !mask.admits(&matrix) {
            return Err(Error::InvalidParameter(
                "coupling matrix has entries outside its structure mask".into(),
            ));
        }
        // Determinant relative to the Hadamard bound, so the check is
        // independent of the drive ratios' absolute scale.
        let det = matrix.determinant();
        let hadamard: f64 = matrix.row_iter().map(|r| r.norm()).product();
        if hadamard == 0.0 || det.abs() <= 1e-12 * hadamard {
            return Err(Error::Singular(format!("coupling matrix determinant {det:e}")));
        }
        Ok(Self { matrix, mask })
    }

    pub fn identity() -> Self {
        Self {
            matrix: Matrix8::identity(),
            mask: StructureMask::crane(),
        }
    }

    /// Design-value coupling for CRANE: lead-screw base axes, a geared
    /// trunnion and the 219.7:1 cable drive, with the in-bore cables routed
    /// over the pulleys of the more proximal joints.
    pub fn crane_nominal() -> Self {
        let cable = 1.0 / CABLE_DRIVE_REDUCTION;
        let mut m = Matrix8::zeros();
        // 5 mm lead screws
        m[(0, 0)] = 0.005 / (2.0 * std::f64::consts::PI);
        m[(1, 1)] = 0.005 / (2.0 * std::f64::consts::PI);
        m[(2, 2)] = 0.010 / (2.0 * std::f64::consts::PI);
        m[(3, 3)] = 1.0 / 100.0;
        m[(4, 4)] = cable;
        m[(4, 5)] = 0.35 * cable;
        m[(4, 6)] = -0.20 * cable;
        m[(4, 7)] = 2.0e-4;
        m[(5, 5)] = cable;
        m[(5, 6)] = 0.40 * cable;
        m[(5, 7)] = -1.5e-4;
        m[(6, 6)] = cable;
        m[(6, 7)] = 1.0e-4;
        // insertion capstan, meters per motor radian
        m[(7, 7)] = 1.0e-4;
        Self::new(m, StructureMask::crane()).expect("nominal coupling is admissible")
    }

    pub fn matrix(&self) -> &Matrix8 {
        &self.matrix
    }

    pub fn mask(&self) -> &StructureMask {
        &self.mask
    }

    pub fn motors_to_joints(&self, theta: &MotorVector) -> JointVector {
        self.matrix * theta
    }

    pub fn joints_to_motors(&self, q: &JointVector) -> Result<MotorVector> {
        self.matrix
            .lu()
            .solve(q)
            .filter(|v| v.iter().all(|x| x.is_finite()))
            .ok_or_else(|| Error::Singular("coupling matrix is not invertible".into()))
    }

    pub fn inverse(&self) -> Result<Matrix8> {
        self.matrix
            .try_inverse()
            .ok_or_else(|| Error::Singular("coupling matrix is not invertible".into()))
    }

    /// CSV: a `# mask` header line, then eight comma-separated rows.
    pub fn to_csv(&self) -> String {
        let mut out = self.mask.header();
        out.push('\n');
        for i in 0..DOF {
            let row: Vec<String> = (0..DOF).map(|j| format!("{:?}", self.matrix[(i, j)])).collect();
            let _ = writeln!(out, "{}", row.join(","));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            message: "empty coupling file".into(),
        })?;
        let mask = StructureMask::parse_header(header.trim()).ok_or(Error::Parse {
            line: 1,
            message: "missing or malformed `# mask` header".into(),
        })?;
        let mut m = Matrix8::zeros();
        let mut rows = 0;
        for (idx, line) in lines {
            if rows == DOF {
                return Err(Error::Parse {
                    line: idx + 1,
                    message: "more than 8 rows".into(),
                });
            }
            let values = parse_csv_row(line, idx + 1)?;
            if values.len() != DOF {
                return Err(Error::Parse {
                    line: idx + 1,
                    message: format!("expected 8 columns, found {}", values.len()),
                });
            }
            for (j, v) in values.into_iter().enumerate() {
                m[(rows, j)] = v;
            }
            rows += 1;
        }
        if rows != DOF {
            return Err(Error::Parse {
                line: rows + 2,
                message: format!("expected 8 rows, found {rows}"),
            });
        }
        Self::new(m, mask)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text)
    }
}

fn parse_csv_row(line: &str, line_no: usize) -> Result<Vec<f64>> {
    line.split(',')
        .map(|s| {
            s.trim().parse::<f64>().map_err(|e| Error::Parse {
                line: line_no,
                message: format!("`{}`: {e}", s.trim()),
            })
        })
        .collect()
}

pub type SampleMatrix = OMatrix<f64, U8, Dyn>;

/// Paired motor and joint time series, one column per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationSet {
    motors: SampleMatrix,
    joints: SampleMatrix,
}

impl CalibrationSet {
    pub fn new(motors: SampleMatrix, joints: SampleMatrix) -> Result<Self> {
        if motors.ncols() != joints.ncols() {
            return Err(Error::InvalidParameter(format!(
                "{} motor samples but {} joint samples",
                motors.ncols(),
                joints.ncols()
            )));
        }
        if motors.ncols() < DOF {
            return Err(Error::InvalidParameter(format!(
                "calibration needs at least {DOF} samples, got {}",
                motors.ncols()
            )));
        }
        if motors.iter().chain(joints.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("calibration samples"));
        }
        Ok(Self { motors, joints })
    }

    pub fn from_samples(samples: &[(MotorVector, JointVector)]) -> Result<Self> {
        let motors = SampleMatrix::from_columns(&samples.iter().map(|s| s.0).collect::<Vec<_>>());
        let joints = SampleMatrix::from_columns(&samples.iter().map(|s| s.1).collect::<Vec<_>>());
        Self::new(motors, joints)
    }

    pub fn motors(&self) -> &SampleMatrix {
        &self.motors
    }

    pub fn joints(&self) -> &SampleMatrix {
        &self.joints
    }

    pub fn len(&self) -> usize {
        self.motors.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// CSV with one column per sample: rows 1–8 motors, rows 9–16 joints.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for m in [&self.motors, &self.joints] {
            for row in m.row_iter() {
                let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
                let _ = writeln!(out, "{}", cells.join(","));
            }
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let rows: Vec<Vec<f64>> = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
            .map(|(i, l)| parse_csv_row(l, i + 1))
            .collect::<Result<_>>()?;
        if rows.len() != 2 * DOF {
            return Err(Error::Parse {
                line: rows.len(),
                message: format!("expected 16 rows, found {}", rows.len()),
            });
        }
        let m = rows[0].len();
        if let Some(pos) = rows.iter().position(|r| r.len() != m) {
            return Err(Error::Parse {
                line: pos + 1,
                message: "ragged sample rows".into(),
            });
        }
        let motors = SampleMatrix::from_fn(m, |i, j| rows[i][j]);
        let joints = SampleMatrix::from_fn(m, |i, j| rows[DOF + i][j]);
        Self::new(motors, joints)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text)
    }
}

/// Relative eigenvalue floor of θθᵀ below which calibration data is rejected.
const RANK_TOLERANCE: f64 = 1e-12;

/// Row-wise least-squares fit of `q = L·θ`, restricted to the columns the
/// mask permits. Each row is solved by Householder QR of the restricted
/// regressor rather than through the normal equations.
pub fn calibrate_coupling(data: &CalibrationSet, mask: &StructureMask) -> Result<CouplingMatrix> {
    let gram = data.motors() * data.motors().transpose();
    let eig = SymmetricEigen::new(gram);
    let (min_idx, min_val) = eig
        .eigenvalues
        .iter()
        .copied()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("8 eigenvalues");
    let max_val = eig.eigenvalues.amax();
    if max_val <= 0.0 || min_val <= RANK_TOLERANCE * max_val {
        return Err(Error::RankDeficient {
            direction: eig.eigenvectors.column(min_idx).iter().copied().collect(),
        });
    }

    let m = data.len();
    let mut l = Matrix8::zeros();
    for i in 0..DOF {
        let cols = mask.columns(i);
        if cols.is_empty() {
            continue;
        }
        let regressor = DMatrix::from_fn(m, cols.len(), |s, k| data.motors[(cols[k], s)]);
        let target = DVector::from_iterator(m, data.joints.row(i).iter().copied());
        let qr = regressor.qr();
        let rhs = qr.q().transpose() * target;
        let coeffs = qr
            .r()
            .solve_upper_triangular(&rhs)
            .ok_or_else(|| Error::Singular(format!("restricted regressor for joint {}", i + 1)))?;
        for (k, &j) in cols.iter().enumerate() {
            l[(i, j)] = coeffs[k];
        }
    }
    CouplingMatrix::new(l, *mask)
}
