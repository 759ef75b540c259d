//! Dense phase-I simplex for pure feasibility questions.
//!
//! The solver answers one question: does a point satisfy
//!
//! ```text
//! eq_a x  = eq_b
//! ub_a x <= ub_b
//! lower <= x <= upper      (entries may be infinite)
//! ```
//!
//! It converts the system to standard form (shift finite lower bounds, flip
//! upper-bounded-only variables, split free variables), adds slacks and
//! artificials, and minimizes the sum of artificials with a tableau simplex.
//! The system is feasible iff that minimum is within tolerance of zero.
//!
//! Pivoting uses Dantzig pricing and switches to Bland's rule after a fixed
//! number of iterations so the solve cannot cycle. Everything is
//! deterministic: same input bits, same pivots, same verdict.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LpError {
    #[error("feasibility solve hit the {limit}-iteration cap without converging")]
    IterationLimit { limit: usize },
    #[error("numerical failure in feasibility solve: {0}")]
    Numerical(String),
}

/// Row-major dense matrix. Kept deliberately minimal; the LP sizes here are
/// a few hundred rows by a hundred-odd columns, where dense wins on both
/// simplicity and cache behavior.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Empty matrix that rows of width `cols` can be pushed onto.
    pub fn with_cols(cols: usize) -> Self {
        DenseMat {
            rows: 0,
            cols,
            data: Vec::new(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c]
    }

    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        debug_assert!(r < self.rows);
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn push_row(&mut self, row: &[f64]) {
        assert_eq!(row.len(), self.cols, "row width mismatch");
        self.data.extend_from_slice(row);
        self.rows += 1;
    }
}

/// Borrowed view of one feasibility system.
pub struct FeasSystem<'a> {
    pub n: usize,
    pub eq_a: &'a DenseMat,
    pub eq_b: &'a [f64],
    pub ub_a: &'a DenseMat,
    pub ub_b: &'a [f64],
    pub lower: &'a [f64],
    pub upper: &'a [f64],
}

/// Entering-column and pivot-element cutoff. Values below this are treated
/// as zero when pricing and when selecting pivot rows.
const PIVOT_TOL: f64 = 1e-9;

/// How one original variable maps into standard-form columns.
struct VarMap {
    col: usize,
    /// Second column for free variables split as x = x+ - x-.
    neg_col: Option<usize>,
    offset: f64,
    sign: f64,
}

/// Decides whether a point satisfying the system exists.
///
/// `tol` bounds the accepted total constraint violation (the phase-I
/// objective at optimum). `max_iters` caps simplex pivots; hitting the cap
/// is an error, never an infeasibility verdict.
pub fn phase_one(sys: &FeasSystem, tol: f64, max_iters: usize) -> Result<bool, LpError> {
    let n = sys.n;
    assert_eq!(sys.eq_a.cols(), n);
    assert_eq!(sys.ub_a.cols(), n);
    assert_eq!(sys.eq_a.rows(), sys.eq_b.len());
    assert_eq!(sys.ub_a.rows(), sys.ub_b.len());
    assert_eq!(sys.lower.len(), n);
    assert_eq!(sys.upper.len(), n);

    for j in 0..n {
        let (l, u) = (sys.lower[j], sys.upper[j]);
        if l.is_nan() || u.is_nan() {
            return Err(LpError::Numerical(format!("NaN bound on variable {j}")));
        }
        if l > u {
            return Ok(false);
        }
    }

    // Standard-form variable layout.
    let mut vmaps = Vec::with_capacity(n);
    let mut n_std = 0usize;
    // (original var, ub on its shifted column) for doubly bounded variables.
    let mut bound_rows: Vec<(usize, f64)> = Vec::new();
    for j in 0..n {
        let (l, u) = (sys.lower[j], sys.upper[j]);
        if l.is_finite() {
            vmaps.push(VarMap {
                col: n_std,
                neg_col: None,
                offset: l,
                sign: 1.0,
            });
            n_std += 1;
            if u.is_finite() {
                bound_rows.push((j, u - l));
            }
        } else if u.is_finite() {
            // x = u - x', x' >= 0.
            vmaps.push(VarMap {
                col: n_std,
                neg_col: None,
                offset: u,
                sign: -1.0,
            });
            n_std += 1;
        } else {
            vmaps.push(VarMap {
                col: n_std,
                neg_col: Some(n_std + 1),
                offset: 0.0,
                sign: 1.0,
            });
            n_std += 2;
        }
    }

    let n_eq = sys.eq_a.rows();
    let n_ub = sys.ub_a.rows() + bound_rows.len();
    let m = n_eq + n_ub;
    if m == 0 {
        return Ok(true); // only bounds, and those were consistent
    }

    // Transform a row into standard-form coefficients plus adjusted rhs.
    let to_std = |coeffs: &[f64], b: f64, out: &mut [f64]| -> f64 {
        let mut b_adj = b;
        for (j, &a) in coeffs.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            let vm = &vmaps[j];
            b_adj -= a * vm.offset;
            out[vm.col] += a * vm.sign;
            if let Some(ncol) = vm.neg_col {
                out[ncol] -= a;
            }
        }
        b_adj
    };

    // First pass: standard-form rows and rhs, slack placement, artificial
    // count. Rows are negated as needed so every rhs is nonnegative.
    let n_slack = n_ub;
    let mut std_rows: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut rhs: Vec<f64> = Vec::with_capacity(m);
    // slack coefficient per row: 0 for equalities, +-1 for inequalities.
    let mut slack_sign: Vec<f64> = Vec::with_capacity(m);
    let mut needs_artificial: Vec<bool> = Vec::with_capacity(m);

    let mut scratch = vec![0.0; n_std];
    let mut add_row = |coeffs: &[f64], b: f64, is_eq: bool, scratch: &mut Vec<f64>| {
        scratch.iter_mut().for_each(|v| *v = 0.0);
        let mut b_adj = to_std(coeffs, b, scratch);
        let mut row = scratch.clone();
        let mut sign = 1.0;
        if b_adj < 0.0 {
            for v in row.iter_mut() {
                *v = -*v;
            }
            b_adj = -b_adj;
            sign = -1.0;
        }
        std_rows.push(row);
        rhs.push(b_adj);
        if is_eq {
            slack_sign.push(0.0);
            needs_artificial.push(true);
        } else {
            slack_sign.push(sign);
            // A +1 slack with nonnegative rhs can start basic; a flipped
            // (-1) slack cannot, so those rows get an artificial.
            needs_artificial.push(sign < 0.0);
        }
    };

    for r in 0..sys.eq_a.rows() {
        add_row(sys.eq_a.row(r), sys.eq_b[r], true, &mut scratch);
    }
    for r in 0..sys.ub_a.rows() {
        add_row(sys.ub_a.row(r), sys.ub_b[r], false, &mut scratch);
    }
    for &(j, cap) in &bound_rows {
        scratch.iter_mut().for_each(|v| *v = 0.0);
        // Row directly on the standard-form column: x'_j <= u - l.
        let col = vmaps[j].col;
        scratch[col] = 1.0;
        debug_assert!(cap >= 0.0);
        std_rows.push(scratch.clone());
        rhs.push(cap);
        slack_sign.push(1.0);
        needs_artificial.push(false);
    }

    let n_art: usize = needs_artificial.iter().filter(|&&x| x).count();
    if n_art == 0 {
        // Every row is an inequality already satisfied by x' = 0.
        return Ok(true);
    }

    // Tableau: m constraint rows plus the objective row, each of width
    // n_std + slacks + artificials + 1 (rhs last).
    let width = n_std + n_slack + n_art + 1;
    let rhs_col = width - 1;
    let mut tab = vec![0.0; (m + 1) * width];
    let mut basis = vec![usize::MAX; m];
    let mut enterable = vec![true; width - 1];

    let mut slack_idx = 0usize;
    let mut art_idx = 0usize;
    for i in 0..m {
        let row = &mut tab[i * width..(i + 1) * width];
        row[..n_std].copy_from_slice(&std_rows[i]);
        row[rhs_col] = rhs[i];
        if slack_sign[i] != 0.0 {
            row[n_std + slack_idx] = slack_sign[i];
            if slack_sign[i] > 0.0 {
                basis[i] = n_std + slack_idx;
            }
            slack_idx += 1;
        }
        if needs_artificial[i] {
            let acol = n_std + n_slack + art_idx;
            row[acol] = 1.0;
            basis[i] = acol;
            enterable[acol] = false;
            art_idx += 1;
        }
    }
    debug_assert_eq!(art_idx, n_art);
    debug_assert!(basis.iter().all(|&b| b != usize::MAX));

    // Objective row o[j] = sum of the artificial-basic rows; its rhs entry
    // is the current sum of artificials. Basic columns come out zero.
    {
        let (body, obj) = tab.split_at_mut(m * width);
        for i in 0..m {
            if needs_artificial[i] {
                let row = &body[i * width..(i + 1) * width];
                for (o, v) in obj.iter_mut().zip(row) {
                    *o += v;
                }
            }
        }
        for i in 0..m {
            if needs_artificial[i] {
                obj[basis[i]] = 0.0;
            }
        }
    }

    // Switch to Bland's rule after enough Dantzig iterations that cycling
    // becomes the plausible explanation for non-termination.
    let bland_after = 200 + 4 * m;

    for iter in 0..max_iters {
        // Entering column.
        let obj = &tab[m * width..m * width + rhs_col];
        let entering = if iter < bland_after {
            let mut best = None;
            let mut best_val = PIVOT_TOL;
            for (j, &o) in obj.iter().enumerate() {
                if enterable[j] && o > best_val {
                    best_val = o;
                    best = Some(j);
                }
            }
            best
        } else {
            obj.iter()
                .enumerate()
                .find(|&(j, &o)| enterable[j] && o > PIVOT_TOL)
                .map(|(j, _)| j)
        };
        let Some(pc) = entering else {
            let objective = tab[m * width + rhs_col];
            return Ok(objective <= tol);
        };

        // Ratio test; ties break to the lowest row index.
        let mut pr = None;
        let mut best_ratio = f64::INFINITY;
        for i in 0..m {
            let a = tab[i * width + pc];
            if a > PIVOT_TOL {
                let ratio = tab[i * width + rhs_col] / a;
                if ratio < best_ratio - 1e-12 {
                    best_ratio = ratio;
                    pr = Some(i);
                }
            }
        }
        let Some(pr) = pr else {
            // The phase-I objective is bounded below by zero, so an
            // unbounded direction means the arithmetic has broken down.
            return Err(LpError::Numerical(
                "unbounded direction in a bounded-below solve".into(),
            ));
        };

        // Pivot: normalize the pivot row, eliminate the column elsewhere.
        let pivot = tab[pr * width + pc];
        let inv = 1.0 / pivot;
        let prow_start = pr * width;
        for v in &mut tab[prow_start..prow_start + width] {
            *v *= inv;
        }
        let prow: Vec<f64> = tab[prow_start..prow_start + width].to_vec();
        for i in 0..=m {
            if i == pr {
                continue;
            }
            let factor = tab[i * width + pc];
            if factor == 0.0 {
                continue;
            }
            let row = &mut tab[i * width..i * width + width];
            for (v, p) in row.iter_mut().zip(&prow) {
                *v -= factor * p;
            }
            // Rounding can push a rhs microscopically negative; the ratio
            // test assumes nonnegative rhs, so snap it back.
            if row[rhs_col] < 0.0 && row[rhs_col] > -1e-12 {
                row[rhs_col] = 0.0;
            }
        }
        basis[pr] = pc;
    }

    Err(LpError::IterationLimit { limit: max_iters })
}
