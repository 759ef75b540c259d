//! Linear feasibility certificate for contact transitions.
//!
//! A transition between two support phases is modeled as a degree-4 Bezier
//! CoM curve whose middle control point is the only curve unknown. The curve
//! spans the window between the two phases' decision instants: the source's
//! time-to-switch ahead of the contact switch plus the candidate's
//! time-elapsed after it, with the switch itself at the interior seam.
//! Sampling the curve at K points and writing Newton and Euler balance,
//! friction pyramids, normal-force bounds, and per-leg reachability boxes at
//! every sample yields one linear program in the midpoint and the per-sample
//! contact forces. The transition is accepted iff that program has a
//! feasible point. Samples before the seam stand on the source support,
//! samples at or past it on the candidate support, so every sample keeps a
//! full stance set.
//!
//! Convexity note: the momentum rate about the origin contains c x c'',
//! and with c = a + beta x, c'' = d + alpha x the only nonlinear term is
//! alpha beta (x x x) = 0, so every row is affine in the unknowns.
//!
//! Everything is centered at the source base position before assembly, and
//! `transition_feasible` additionally rotates the world so the source yaw
//! is zero. The friction pyramid is axis-aligned, so without that
//! canonicalization two transitions related by a planar rigid motion could
//! get different verdicts; with it the verdict is invariant up to input
//! rounding.

pub mod bezier;
mod simplex;

pub use simplex::{DenseMat, LpError};

use nalgebra::{DMatrix, DVector, Matrix3, Rotation3, Vector3};
use thiserror::Error;

use crate::phase::{interpolate_attitudes, RobotModel, SupportPhase, N_FEET};
use bezier::TransitionCurve;

#[derive(Debug, Error)]
pub enum FeasibilityError {
    #[error("no supporting feet at sample {sample}")]
    EmptySupport { sample: usize },
    #[error("invalid transition problem: {0}")]
    InvalidProblem(String),
    #[error("invalid feasibility dump: {0}")]
    BadDump(String),
    #[error(transparent)]
    Solver(#[from] LpError),
}

/// Discretization and solver settings.
#[derive(Clone, Debug)]
pub struct FeasibilityConfig {
    /// Curve samples; sample k sits at tau = k / (n_samples - 1).
    pub n_samples: usize,
    /// Accepted total constraint violation at the phase-I optimum.
    pub tolerance: f64,
    /// Simplex pivot cap; exceeding it is a solver error, not a verdict.
    pub max_iterations: usize,
}

impl Default for FeasibilityConfig {
    fn default() -> Self {
        FeasibilityConfig {
            n_samples: 8,
            tolerance: 1e-6,
            max_iterations: 50_000,
        }
    }
}

/// What a constraint row means; kept alongside the matrices so dumps stay
/// readable and tests can count row families.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RowTag {
    ForceBalance { sample: usize, axis: usize },
    MomentBalance { sample: usize, axis: usize },
    MidpointPin { axis: usize },
    FrictionFace { sample: usize, foot: usize, face: usize },
    NormalCap { sample: usize, foot: usize },
    KinematicBox { sample: usize, foot: usize, axis: usize, upper: bool },
}

/// One contact force variable block: three consecutive columns starting at
/// `col` holding (fx, fy, fz) for `foot` at curve sample `sample`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ForceVar {
    pub sample: usize,
    pub foot: usize,
    pub col: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VariableLayout {
    /// Columns of the free middle control point.
    pub midpoint: [usize; 3],
    pub forces: Vec<ForceVar>,
}

/// Assembled feasibility program. All positions inside are centered at the
/// source base position, so a static stance has force-balance right-hand
/// sides of exactly -m g.
#[derive(Clone, Debug)]
pub struct TransitionLp {
    pub n_vars: usize,
    pub eq_a: DenseMat,
    pub eq_b: Vec<f64>,
    pub eq_tags: Vec<RowTag>,
    pub ub_a: DenseMat,
    pub ub_b: Vec<f64>,
    pub ub_tags: Vec<RowTag>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub layout: VariableLayout,
    /// Starting guess used by the quick certificate: curve chord midpoint
    /// plus an even static split of the weight.
    pub hint: Vec<f64>,
}

/// A source phase, a candidate successor, and the model they refer to.
#[derive(Clone, Debug)]
pub struct TransitionProblem {
    pub source: SupportPhase,
    pub candidate: SupportPhase,
    pub model: RobotModel,
    pub config: FeasibilityConfig,
    /// Fixes the free control point at a world position, which freezes the
    /// whole curve. Used to ask purely static questions.
    pub pinned_midpoint: Option<Vector3<f64>>,
}

impl TransitionProblem {
    pub fn new(source: &SupportPhase, candidate: &SupportPhase, model: &RobotModel) -> Self {
        TransitionProblem {
            source: source.clone(),
            candidate: candidate.clone(),
            model: model.clone(),
            config: FeasibilityConfig::default(),
            pinned_midpoint: None,
        }
    }

    /// The same problem expressed in the source-anchored frame: source base
    /// at the origin, source yaw zero. The friction pyramid is axis-aligned,
    /// so solving here makes the verdict independent of where in the world
    /// the transition happens.
    pub fn canonicalized(&self) -> TransitionProblem {
        let rot = Rotation3::from_axis_angle(&Vector3::z_axis(), -self.source.yaw());
        let origin = self.source.base_position;
        let xf = |p: &SupportPhase| SupportPhase {
            rotation: rot * p.rotation,
            base_position: rot * (p.base_position - origin),
            base_velocity: rot * p.base_velocity,
            feet: p.feet.map(|f| rot * (f - origin)),
            contacts: p.contacts,
            time_elapsed: p.time_elapsed,
            time_to_switch: p.time_to_switch,
        };
        TransitionProblem {
            source: xf(&self.source),
            candidate: xf(&self.candidate),
            model: self.model.clone(),
            config: self.config.clone(),
            pinned_midpoint: self.pinned_midpoint.map(|p| rot * (p - origin)),
        }
    }

    /// Builds the program from the phases as given (no canonicalization).
    pub fn assemble(&self) -> Result<TransitionLp, FeasibilityError> {
        let k_count = self.config.n_samples;
        if k_count < 2 {
            return Err(FeasibilityError::InvalidProblem(format!(
                "need at least 2 curve samples, got {k_count}"
            )));
        }
        let pre = self.source.time_to_switch;
        if !pre.is_finite() || pre <= 0.0 {
            return Err(FeasibilityError::InvalidProblem(format!(
                "source time-to-switch must be positive and finite, got {pre}"
            )));
        }
        let post = self.candidate.time_elapsed;
        if !post.is_finite() || post < 0.0 {
            return Err(FeasibilityError::InvalidProblem(format!(
                "candidate time-elapsed must be nonnegative and finite, got {post}"
            )));
        }
        let duration = pre + post;
        self.model
            .validate()
            .map_err(|e| FeasibilityError::InvalidProblem(e.to_string()))?;
        for (name, p) in [("source", &self.source), ("candidate", &self.candidate)] {
            let finite = p.base_position.iter().all(|v| v.is_finite())
                && p.base_velocity.iter().all(|v| v.is_finite())
                && p.feet.iter().all(|f| f.iter().all(|v| v.is_finite()))
                && p.rotation.matrix().iter().all(|v| v.is_finite());
            if !finite {
                return Err(FeasibilityError::InvalidProblem(format!(
                    "{name} phase contains non-finite values"
                )));
            }
        }

        let m = self.model.mass;
        let g = self.model.gravity;
        let c0 = self.source.base_position;
        let curve = TransitionCurve::new(
            Vector3::zeros(),
            self.source.base_velocity,
            self.candidate.base_position - c0,
            self.candidate.base_velocity,
            duration,
        );
        let attitudes = interpolate_attitudes(&self.source.rotation, &self.candidate.rotation, k_count);

        // Per-sample support sets: (foot index, centered position). The
        // contact switch sits `pre` seconds into the window; samples strictly
        // before it stand on the source support, the rest on the candidate.
        let mut supports: Vec<Vec<(usize, Vector3<f64>)>> = Vec::with_capacity(k_count);
        for k in 0..k_count {
            let tau = k as f64 / (k_count - 1) as f64;
            let phase = if tau * duration < pre {
                &self.source
            } else {
                &self.candidate
            };
            let feet: Vec<(usize, Vector3<f64>)> = (0..N_FEET)
                .filter(|&i| phase.contacts[i])
                .map(|i| (i, phase.feet[i] - c0))
                .collect();
            if feet.is_empty() {
                return Err(FeasibilityError::EmptySupport { sample: k });
            }
            supports.push(feet);
        }

        // Variable layout: midpoint first, then force blocks in sample order.
        let mut forces = Vec::new();
        let mut next_col = 3;
        for (k, feet) in supports.iter().enumerate() {
            for &(foot, _) in feet {
                forces.push(ForceVar {
                    sample: k,
                    foot,
                    col: next_col,
                });
                next_col += 3;
            }
        }
        let n_vars = next_col;
        let layout = VariableLayout {
            midpoint: [0, 1, 2],
            forces,
        };

        let mut eq_a = DenseMat::with_cols(n_vars);
        let mut eq_b = Vec::new();
        let mut eq_tags = Vec::new();
        let mut ub_a = DenseMat::with_cols(n_vars);
        let mut ub_b = Vec::new();
        let mut ub_tags = Vec::new();
        let mut row = vec![0.0; n_vars];

        let mut force_iter = layout.forces.iter();
        for k in 0..k_count {
            let tau = k as f64 / (k_count - 1) as f64;
            let a_k = curve.pos_const(tau);
            let beta_k = curve.pos_free(tau);
            let d_k = curve.acc_const(tau);
            let alpha_k = curve.acc_free(tau);
            let att = &attitudes[k];
            let feet = &supports[k];
            let cols: Vec<usize> = feet
                .iter()
                .map(|_| force_iter.next().expect("layout covers all supports").col)
                .collect();

            // Newton: sum of forces minus m alpha x equals m (d - g).
            for axis in 0..3 {
                row.iter_mut().for_each(|v| *v = 0.0);
                for &col in &cols {
                    row[col + axis] = 1.0;
                }
                row[axis] = -m * alpha_k;
                eq_a.push_row(&row);
                eq_b.push(m * (d_k[axis] - g[axis]));
                eq_tags.push(RowTag::ForceBalance { sample: k, axis });
            }

            // Euler about the centering point. The x coefficient comes from
            // expanding c x (c'' - g) with c affine in x; the bilinear term
            // cancels, leaving -m (alpha [a]x - beta [(d - g)]x).
            let m_x = cross_matrix(&a_k) * (-m * alpha_k) + cross_matrix(&(d_k - g)) * (m * beta_k);
            let rhs_vec = a_k.cross(&(d_k - g)) * m;
            for axis in 0..3 {
                row.iter_mut().for_each(|v| *v = 0.0);
                for (&col, &(_, p)) in cols.iter().zip(feet) {
                    let px = cross_matrix(&p);
                    for j in 0..3 {
                        row[col + j] += px[(axis, j)];
                    }
                }
                for j in 0..3 {
                    row[j] += m_x[(axis, j)];
                }
                eq_a.push_row(&row);
                eq_b.push(rhs_vec[axis]);
                eq_tags.push(RowTag::MomentBalance { sample: k, axis });
            }

            // Friction pyramid faces plus the normal-force cap. fz >= 0 is a
            // variable bound, not a row.
            let mu = self.model.friction;
            for (&col, &(foot, _)) in cols.iter().zip(feet) {
                for face in 0..4 {
                    row.iter_mut().for_each(|v| *v = 0.0);
                    let (tangent, sign) = (face / 2, if face % 2 == 0 { 1.0 } else { -1.0 });
                    row[col + tangent] = sign;
                    row[col + 2] = -mu;
                    ub_a.push_row(&row);
                    ub_b.push(0.0);
                    ub_tags.push(RowTag::FrictionFace { sample: k, foot, face });
                }
                row.iter_mut().for_each(|v| *v = 0.0);
                row[col + 2] = 1.0;
                ub_a.push_row(&row);
                ub_b.push(self.model.max_normal_force);
                ub_tags.push(RowTag::NormalCap { sample: k, foot });
            }

            // Reachability: the foot expressed in the sample attitude, taken
            // about the curve point, stays in the per-leg box.
            for &(foot, p) in feet {
                let boxk = &self.model.kinematic_box[foot];
                let rel = p - a_k;
                for axis in 0..3 {
                    // Row axis of R^T is column axis of R.
                    let w = att.matrix().column(axis);
                    let w_rel = w.dot(&rel);
                    // Upper face: -beta (w . x) <= max - w . rel.
                    row.iter_mut().for_each(|v| *v = 0.0);
                    for j in 0..3 {
                        row[j] = -beta_k * w[j];
                    }
                    ub_a.push_row(&row);
                    ub_b.push(boxk.max[axis] - w_rel);
                    ub_tags.push(RowTag::KinematicBox { sample: k, foot, axis, upper: true });
                    // Lower face: beta (w . x) <= w . rel - min.
                    row.iter_mut().for_each(|v| *v = 0.0);
                    for j in 0..3 {
                        row[j] = beta_k * w[j];
                    }
                    ub_a.push_row(&row);
                    ub_b.push(w_rel - boxk.min[axis]);
                    ub_tags.push(RowTag::KinematicBox { sample: k, foot, axis, upper: false });
                }
            }
        }

        if let Some(pin) = self.pinned_midpoint {
            let target = pin - c0;
            for axis in 0..3 {
                row.iter_mut().for_each(|v| *v = 0.0);
                row[axis] = 1.0;
                eq_a.push_row(&row);
                eq_b.push(target[axis]);
                eq_tags.push(RowTag::MidpointPin { axis });
            }
        }

        let mut lower = vec![f64::NEG_INFINITY; n_vars];
        let upper = vec![f64::INFINITY; n_vars];
        for fv in &layout.forces {
            lower[fv.col + 2] = 0.0;
        }

        // Certificate seed: chord midpoint for the curve, even weight split
        // for the forces.
        let mut hint = vec![0.0; n_vars];
        let x_ref = (curve.p1 + curve.p3) * 0.5;
        hint[0] = x_ref.x;
        hint[1] = x_ref.y;
        hint[2] = x_ref.z;
        for fv in &layout.forces {
            let share = g * (-m / supports[fv.sample].len() as f64);
            hint[fv.col] = share.x;
            hint[fv.col + 1] = share.y;
            hint[fv.col + 2] = share.z;
        }

        Ok(TransitionLp {
            n_vars,
            eq_a,
            eq_b,
            eq_tags,
            ub_a,
            ub_b,
            ub_tags,
            lower,
            upper,
            layout,
            hint,
        })
    }

    /// Canonicalize, assemble, solve. An empty support set means no feet to
    /// stand on, which is a plain infeasibility, not an error.
    pub fn solve(&self) -> Result<bool, FeasibilityError> {
        let lp = match self.canonicalized().assemble() {
            Ok(lp) => lp,
            Err(FeasibilityError::EmptySupport { .. }) => return Ok(false),
            Err(e) => return Err(e),
        };
        lp_feasible(&lp, self.config.tolerance, self.config.max_iterations).map_err(Into::into)
    }
}

/// Whether the transition from `source` to `candidate` admits a CoM curve
/// with balanced, friction-consistent, reachable contact forces.
pub fn transition_feasible(
    source: &SupportPhase,
    candidate: &SupportPhase,
    model: &RobotModel,
) -> Result<bool, FeasibilityError> {
    TransitionProblem::new(source, candidate, model).solve()
}

fn cross_matrix(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Coefficients at or below this magnitude count as zero when classifying
/// constant rows and the midpoint-only subsystem.
const COEFF_ZERO: f64 = 1e-12;

/// Decides feasibility of an assembled program.
///
/// Cheap sound passes run first: constant-row screening, a projected-point
/// certificate, and a midpoint-only subproblem. Each can only return a
/// verdict the full phase-I solve would also reach; anything unresolved
/// falls through to it.
pub fn lp_feasible(
    lp: &TransitionLp,
    tolerance: f64,
    max_iterations: usize,
) -> Result<bool, LpError> {
    for j in 0..lp.n_vars {
        let (l, u) = (lp.lower[j], lp.upper[j]);
        if l.is_nan() || u.is_nan() {
            return Err(LpError::Numerical(format!("NaN bound on variable {j}")));
        }
        if l > u {
            return Ok(false);
        }
    }

    if !constant_rows_satisfiable(lp, tolerance) {
        return Ok(false);
    }

    if certificate_point_passes(lp, tolerance) {
        return Ok(true);
    }

    if !midpoint_subsystem_feasible(lp, tolerance, max_iterations)? {
        return Ok(false);
    }

    simplex::phase_one(&full_system(lp), tolerance, max_iterations)
}

fn full_system(lp: &TransitionLp) -> simplex::FeasSystem<'_> {
    simplex::FeasSystem {
        n: lp.n_vars,
        eq_a: &lp.eq_a,
        eq_b: &lp.eq_b,
        ub_a: &lp.ub_a,
        ub_b: &lp.ub_b,
        lower: &lp.lower,
        upper: &lp.upper,
    }
}

/// Rows whose coefficients are all (numerically) zero constrain nothing, so
/// their right-hand sides must already be consistent. Endpoint reachability
/// rows are of this kind because the free point cannot move the curve ends,
/// which makes this the instant reject for out-of-reach footholds.
fn constant_rows_satisfiable(lp: &TransitionLp, tolerance: f64) -> bool {
    let all_zero = |row: &[f64]| row.iter().all(|v| v.abs() <= COEFF_ZERO);
    for r in 0..lp.eq_a.rows() {
        if all_zero(lp.eq_a.row(r)) && lp.eq_b[r].abs() > tolerance {
            return false;
        }
    }
    for r in 0..lp.ub_a.rows() {
        if all_zero(lp.ub_a.row(r)) && lp.ub_b[r] < -tolerance {
            return false;
        }
    }
    true
}

/// Tries to certify feasibility by projecting the assembler's hint onto
/// the equality rows (via the normal equations) and measuring the result
/// against every constraint directly. Projection accuracy is irrelevant to
/// soundness: the candidate only counts if its measured total violation is
/// within tolerance, which upper-bounds the phase-I optimum.
fn certificate_point_passes(lp: &TransitionLp, tolerance: f64) -> bool {
    let r = lp.eq_a.rows();
    if r == 0 {
        return point_violation(lp, &lp.hint) <= tolerance;
    }
    let n = lp.n_vars;
    let a = DMatrix::from_fn(r, n, |i, j| lp.eq_a.at(i, j));
    let b = DVector::from_fn(r, |i, _| lp.eq_b[i]);
    let Some(chol) = (&a * a.transpose()).cholesky() else {
        return false; // rank-deficient equalities, let the solver decide
    };
    let hint = DVector::from_fn(n, |j, _| lp.hint[j]);
    let projected = &hint + a.transpose() * chol.solve(&(&b - &a * &hint));
    let least_norm = a.transpose() * chol.solve(&b);
    for candidate in [projected, least_norm] {
        let z: Vec<f64> = candidate.iter().copied().collect();
        if point_violation(lp, &z) <= tolerance {
            return true;
        }
    }
    false
}

/// Total constraint violation at a point: the phase-I optimum is bounded
/// above by this, so a small enough value certifies feasibility.
fn point_violation(lp: &TransitionLp, z: &[f64]) -> f64 {
    let mut total = 0.0;
    for r in 0..lp.eq_a.rows() {
        let dot: f64 = lp.eq_a.row(r).iter().zip(z).map(|(a, x)| a * x).sum();
        total += (dot - lp.eq_b[r]).abs();
    }
    for r in 0..lp.ub_a.rows() {
        let dot: f64 = lp.ub_a.row(r).iter().zip(z).map(|(a, x)| a * x).sum();
        total += (dot - lp.ub_b[r]).max(0.0);
    }
    for j in 0..lp.n_vars {
        total += (lp.lower[j] - z[j]).max(0.0);
        total += (z[j] - lp.upper[j]).max(0.0);
    }
    total
}

/// Feasibility of the rows that touch only the midpoint columns. This is a
/// three-variable program, so it settles most reachability rejections far
/// cheaper than the full solve. Infeasibility of a subsystem is
/// infeasibility of the whole.
fn midpoint_subsystem_feasible(
    lp: &TransitionLp,
    tolerance: f64,
    max_iterations: usize,
) -> Result<bool, LpError> {
    let mid = lp.layout.midpoint;
    let only_mid = |row: &[f64]| {
        row.iter()
            .enumerate()
            .all(|(j, v)| v.abs() <= COEFF_ZERO || mid.contains(&j))
    };
    let mut eq_a = DenseMat::with_cols(3);
    let mut eq_b = Vec::new();
    let mut ub_a = DenseMat::with_cols(3);
    let mut ub_b = Vec::new();
    for r in 0..lp.eq_a.rows() {
        let row = lp.eq_a.row(r);
        if only_mid(row) {
            eq_a.push_row(&[row[mid[0]], row[mid[1]], row[mid[2]]]);
            eq_b.push(lp.eq_b[r]);
        }
    }
    for r in 0..lp.ub_a.rows() {
        let row = lp.ub_a.row(r);
        if only_mid(row) {
            ub_a.push_row(&[row[mid[0]], row[mid[1]], row[mid[2]]]);
            ub_b.push(lp.ub_b[r]);
        }
    }
    if eq_b.is_empty() && ub_b.is_empty() {
        return Ok(true);
    }
    let lower = [lp.lower[mid[0]], lp.lower[mid[1]], lp.lower[mid[2]]];
    let upper = [lp.upper[mid[0]], lp.upper[mid[1]], lp.upper[mid[2]]];
    simplex::phase_one(
        &simplex::FeasSystem {
            n: 3,
            eq_a: &eq_a,
            eq_b: &eq_b,
            ub_a: &ub_a,
            ub_b: &ub_b,
            lower: &lower,
            upper: &upper,
        },
        tolerance,
        max_iterations,
    )
}

const DUMP_MAGIC: &str = "transition-lp/v1";

/// Text serialization of an assembled program. Every f64 is written as its
/// 16-digit hex bit pattern, so a parsed dump reproduces the solve input
/// bit for bit.
pub fn dump_lp(lp: &TransitionLp) -> String {
    use std::fmt::Write as _;
    let mut out = String::new();
    let _ = writeln!(out, "{DUMP_MAGIC}");
    let _ = writeln!(out, "n_vars {}", lp.n_vars);
    let _ = writeln!(
        out,
        "midpoint {} {} {}",
        lp.layout.midpoint[0], lp.layout.midpoint[1], lp.layout.midpoint[2]
    );
    let _ = writeln!(out, "forces {}", lp.layout.forces.len());
    for fv in &lp.layout.forces {
        let _ = writeln!(out, "force {} {} {}", fv.sample, fv.foot, fv.col);
    }
    let write_block = |out: &mut String, name: &str, a: &DenseMat, b: &[f64], tags: &[RowTag]| {
        let _ = writeln!(out, "{name} {}", a.rows());
        for r in 0..a.rows() {
            out.push_str(&tag_token(tags[r]));
            out.push_str(" :");
            for v in a.row(r) {
                let _ = write!(out, " {:016x}", v.to_bits());
            }
            let _ = writeln!(out, " {:016x}", b[r].to_bits());
        }
    };
    write_block(&mut out, "eq", &lp.eq_a, &lp.eq_b, &lp.eq_tags);
    write_block(&mut out, "ub", &lp.ub_a, &lp.ub_b, &lp.ub_tags);
    for (name, vals) in [("lower", &lp.lower), ("upper", &lp.upper), ("hint", &lp.hint)] {
        let _ = write!(out, "{name} :");
        for v in vals.iter() {
            let _ = write!(out, " {:016x}", v.to_bits());
        }
        out.push('\n');
    }
    out.push_str("end\n");
    out
}

fn tag_token(tag: RowTag) -> String {
    match tag {
        RowTag::ForceBalance { sample, axis } => format!("fb {sample} {axis}"),
        RowTag::MomentBalance { sample, axis } => format!("mb {sample} {axis}"),
        RowTag::MidpointPin { axis } => format!("pin {axis}"),
        RowTag::FrictionFace { sample, foot, face } => format!("ff {sample} {foot} {face}"),
        RowTag::NormalCap { sample, foot } => format!("cap {sample} {foot}"),
        RowTag::KinematicBox { sample, foot, axis, upper } => {
            format!("kin {sample} {foot} {axis} {}", if upper { "u" } else { "l" })
        }
    }
}

type LineIter<'a> = std::iter::Enumerate<std::str::Lines<'a>>;

fn take_line<'a>(lines: &mut LineIter<'a>, expect: &str) -> Result<(usize, &'a str), FeasibilityError> {
    lines
        .next()
        .map(|(i, l)| (i, l.trim()))
        .ok_or_else(|| FeasibilityError::BadDump(format!("unexpected end of dump, expected {expect}")))
}

/// Parses a program dump produced by [`dump_lp`].
pub fn parse_lp_dump(text: &str) -> Result<TransitionLp, FeasibilityError> {
    let bad = |line: usize, msg: &str| FeasibilityError::BadDump(format!("line {}: {msg}", line + 1));
    let mut lines = text.lines().enumerate();

    let (i, magic) = take_line(&mut lines, "header")?;
    if magic != DUMP_MAGIC {
        return Err(bad(i, &format!("expected header {DUMP_MAGIC:?}")));
    }

    fn parse_usize(tok: Option<&str>, line: usize, what: &str) -> Result<usize, FeasibilityError> {
        tok.and_then(|t| t.parse().ok())
            .ok_or_else(|| FeasibilityError::BadDump(format!("line {}: bad {what}", line + 1)))
    }
    fn parse_hex(tok: &str, line: usize) -> Result<f64, FeasibilityError> {
        u64::from_str_radix(tok, 16)
            .map(f64::from_bits)
            .map_err(|_| FeasibilityError::BadDump(format!("line {}: bad hex float {tok:?}", line + 1)))
    }

    let (i, l) = take_line(&mut lines, "n_vars")?;
    let mut it = l.split_whitespace();
    if it.next() != Some("n_vars") {
        return Err(bad(i, "expected n_vars"));
    }
    let n_vars = parse_usize(it.next(), i, "n_vars")?;

    let (i, l) = take_line(&mut lines, "midpoint")?;
    let mut it = l.split_whitespace();
    if it.next() != Some("midpoint") {
        return Err(bad(i, "expected midpoint"));
    }
    let midpoint = [
        parse_usize(it.next(), i, "midpoint column")?,
        parse_usize(it.next(), i, "midpoint column")?,
        parse_usize(it.next(), i, "midpoint column")?,
    ];

    let (i, l) = take_line(&mut lines, "forces")?;
    let mut it = l.split_whitespace();
    if it.next() != Some("forces") {
        return Err(bad(i, "expected forces"));
    }
    let n_forces = parse_usize(it.next(), i, "force count")?;
    let mut forces = Vec::with_capacity(n_forces);
    for _ in 0..n_forces {
        let (i, l) = take_line(&mut lines, "force entry")?;
        let mut it = l.split_whitespace();
        if it.next() != Some("force") {
            return Err(bad(i, "expected force entry"));
        }
        let sample = parse_usize(it.next(), i, "force sample")?;
        let foot = parse_usize(it.next(), i, "force foot")?;
        let col = parse_usize(it.next(), i, "force column")?;
        if col + 2 >= n_vars {
            return Err(bad(i, "force column out of range"));
        }
        forces.push(ForceVar { sample, foot, col });
    }

    let parse_block = |name: &str,
                       lines: &mut LineIter|
     -> Result<(DenseMat, Vec<f64>, Vec<RowTag>), FeasibilityError> {
        let (i, l) = lines
            .next()
            .map(|(i, l)| (i, l.trim()))
            .ok_or_else(|| FeasibilityError::BadDump(format!("unexpected end of dump, expected {name}")))?;
        let mut it = l.split_whitespace();
        if it.next() != Some(name) {
            return Err(bad(i, &format!("expected {name} block")));
        }
        let rows = parse_usize(it.next(), i, "row count")?;
        let mut a = DenseMat::with_cols(n_vars);
        let mut b = Vec::with_capacity(rows);
        let mut tags = Vec::with_capacity(rows);
        for _ in 0..rows {
            let (i, l) = lines
                .next()
                .map(|(i, l)| (i, l.trim()))
                .ok_or_else(|| FeasibilityError::BadDump("unexpected end of dump in row block".into()))?;
            let (tag_part, data_part) = l
                .split_once(':')
                .ok_or_else(|| bad(i, "row is missing the ':' separator"))?;
            tags.push(parse_tag(tag_part.trim(), i)?);
            let words: Vec<&str> = data_part.split_whitespace().collect();
            if words.len() != n_vars + 1 {
                return Err(bad(i, &format!("expected {} values, got {}", n_vars + 1, words.len())));
            }
            let mut row = Vec::with_capacity(n_vars);
            for w in &words[..n_vars] {
                row.push(parse_hex(w, i)?);
            }
            a.push_row(&row);
            b.push(parse_hex(words[n_vars], i)?);
        }
        Ok((a, b, tags))
    };

    let (eq_a, eq_b, eq_tags) = parse_block("eq", &mut lines)?;
    let (ub_a, ub_b, ub_tags) = parse_block("ub", &mut lines)?;

    let parse_vector = |name: &str, lines: &mut LineIter| -> Result<Vec<f64>, FeasibilityError> {
        let (i, l) = take_line(lines, name)?;
        let (head, data) = l
            .split_once(':')
            .ok_or_else(|| bad(i, &format!("{name} line is missing ':'")))?;
        if head.trim() != name {
            return Err(bad(i, &format!("expected {name} line")));
        }
        let words: Vec<&str> = data.split_whitespace().collect();
        if words.len() != n_vars {
            return Err(bad(i, &format!("expected {n_vars} values, got {}", words.len())));
        }
        words.iter().map(|w| parse_hex(w, i)).collect()
    };

    let lower = parse_vector("lower", &mut lines)?;
    let upper = parse_vector("upper", &mut lines)?;
    let hint = parse_vector("hint", &mut lines)?;

    let (i, l) = take_line(&mut lines, "end")?;
    if l != "end" {
        return Err(bad(i, "expected end marker"));
    }

    if midpoint.iter().any(|&c| c >= n_vars) {
        return Err(FeasibilityError::BadDump("midpoint column out of range".into()));
    }

    Ok(TransitionLp {
        n_vars,
        eq_a,
        eq_b,
        eq_tags,
        ub_a,
        ub_b,
        ub_tags,
        lower,
        upper,
        layout: VariableLayout { midpoint, forces },
        hint,
    })
}

fn parse_tag(tok: &str, line: usize) -> Result<RowTag, FeasibilityError> {
    let bad = || FeasibilityError::BadDump(format!("line {}: bad row tag {tok:?}", line + 1));
    let parts: Vec<&str> = tok.split_whitespace().collect();
    let num = |s: &str| s.parse::<usize>().map_err(|_| bad());
    match parts.as_slice() {
        ["fb", k, a] => Ok(RowTag::ForceBalance { sample: num(k)?, axis: num(a)? }),
        ["mb", k, a] => Ok(RowTag::MomentBalance { sample: num(k)?, axis: num(a)? }),
        ["pin", a] => Ok(RowTag::MidpointPin { axis: num(a)? }),
        ["ff", k, f, face] => Ok(RowTag::FrictionFace { sample: num(k)?, foot: num(f)?, face: num(face)? }),
        ["cap", k, f] => Ok(RowTag::NormalCap { sample: num(k)?, foot: num(f)? }),
        ["kin", k, f, a, ul] if *ul == "u" || *ul == "l" => Ok(RowTag::KinematicBox {
            sample: num(k)?,
            foot: num(f)?,
            axis: num(a)?,
            upper: *ul == "u",
        }),
        _ => Err(bad()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase::LegBox;
    use nalgebra::Vector2;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// All feet at the nominal offsets around `base_xy` on flat ground at
    /// z = 0, base at com height, all contacts closed.
    fn standing(base_xy: Vector2<f64>, yaw: f64, model: &RobotModel) -> SupportPhase {
        let rot = Rotation3::from_axis_angle(&Vector3::z_axis(), yaw);
        let mut feet = [Vector3::zeros(); N_FEET];
        for i in 0..N_FEET {
            let nom = model.nominal_footholds[i];
            let world = rot * Vector3::new(nom.x, nom.y, 0.0);
            feet[i] = Vector3::new(base_xy.x + world.x, base_xy.y + world.y, 0.0);
        }
        SupportPhase {
            rotation: rot,
            base_position: Vector3::new(base_xy.x, base_xy.y, model.com_height),
            base_velocity: Vector3::zeros(),
            feet,
            contacts: [true; N_FEET],
            time_elapsed: 1.0,
            time_to_switch: 1.0,
        }
    }

    /// Model whose reach boxes are wide enough to never bind, isolating the
    /// balance and friction physics.
    fn wide_box_model() -> RobotModel {
        let mut model = RobotModel::default();
        model.kinematic_box = [LegBox {
            min: Vector3::new(-10.0, -10.0, -10.0),
            max: Vector3::new(10.0, 10.0, 10.0),
        }; N_FEET];
        model
    }

    /// Static stance question: both phases equal, zero velocity, midpoint
    /// pinned at the base so the whole curve degenerates to one point.
    fn static_problem(phase: &SupportPhase, model: &RobotModel) -> TransitionProblem {
        let mut problem = TransitionProblem::new(phase, phase, model);
        problem.pinned_midpoint = Some(phase.base_position);
        problem
    }

    #[test]
    fn two_sample_full_stance_has_27_variables() {
        let model = RobotModel::default();
        let phase = standing(Vector2::zeros(), 0.0, &model);
        let mut problem = TransitionProblem::new(&phase, &phase, &model);
        problem.config.n_samples = 2;
        let lp = problem.assemble().unwrap();
        // 3 midpoint columns plus 3 per foot per sample, 4 feet, 2 samples.
        assert_eq!(lp.n_vars, 27);
        assert_eq!(lp.layout.forces.len(), 8);
        assert_eq!(lp.eq_a.rows(), 12, "6 balance rows per sample");
        // Per contact and sample: 4 pyramid faces, 1 cap, 6 box faces.
        assert_eq!(lp.ub_a.rows(), 8 * 11);
        for fv in &lp.layout.forces {
            assert_eq!(lp.lower[fv.col + 2], 0.0, "normal force is one-sided");
            assert_eq!(lp.lower[fv.col], f64::NEG_INFINITY);
        }
    }

    #[test]
    fn each_contact_sample_gets_five_friction_rows() {
        let model = RobotModel::default();
        let phase = standing(Vector2::zeros(), 0.0, &model);
        let lp = TransitionProblem::new(&phase, &phase, &model).assemble().unwrap();
        for fv in &lp.layout.forces {
            let faces = lp
                .ub_tags
                .iter()
                .filter(|t| matches!(t, RowTag::FrictionFace { sample, foot, .. } if *sample == fv.sample && *foot == fv.foot))
                .count();
            let caps = lp
                .ub_tags
                .iter()
                .filter(|t| matches!(t, RowTag::NormalCap { sample, foot } if *sample == fv.sample && *foot == fv.foot))
                .count();
            assert_eq!(faces, 4);
            assert_eq!(caps, 1);
        }
    }

    #[test]
    fn static_stance_balance_rhs_is_exactly_minus_weight() {
        let model = RobotModel::default();
        let phase = standing(Vector2::new(1.3, -0.7), 0.4, &model);
        let lp = static_problem(&phase, &model).assemble().unwrap();
        let expected = -model.mass * model.gravity.z;
        for (tag, rhs) in lp.eq_tags.iter().zip(&lp.eq_b) {
            match tag {
                RowTag::ForceBalance { axis: 2, .. } => assert_eq!(*rhs, expected),
                RowTag::ForceBalance { .. } => assert_eq!(*rhs, 0.0),
                _ => {}
            }
        }
        // The pin lands on the centering point, so its targets are zero.
        let pins: Vec<f64> = lp
            .eq_tags
            .iter()
            .zip(&lp.eq_b)
            .filter(|(t, _)| matches!(t, RowTag::MidpointPin { .. }))
            .map(|(_, b)| *b)
            .collect();
        assert_eq!(pins, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn standing_still_is_feasible() {
        let model = RobotModel::default();
        let phase = standing(Vector2::zeros(), 0.0, &model);
        assert!(transition_feasible(&phase, &phase, &model).unwrap());
    }

    #[test]
    fn base_jump_of_ten_meters_is_infeasible() {
        let model = RobotModel::default();
        let phase = standing(Vector2::zeros(), 0.0, &model);
        let mut far = phase.clone();
        far.base_position.x += 10.0;
        assert!(!transition_feasible(&phase, &far, &model).unwrap());
    }

    #[test]
    fn support_set_switches_when_the_scheduled_switch_time_passes() {
        let model = RobotModel::default();
        let phase = standing(Vector2::zeros(), 0.0, &model);
        let mut lifted = phase.clone();
        lifted.contacts[0] = false;
        let problem = TransitionProblem::new(&phase, &lifted, &model);
        let lp = problem.assemble().unwrap();
        // 1 s to the switch plus 1 s after it, K = 8: samples 0..4 fall
        // before the switch (4 feet), the rest after it (3 feet).
        for fv in &lp.layout.forces {
            if fv.foot == 0 {
                assert!(fv.sample < 4, "lifted foot may only carry load before the switch");
            }
        }
        let n_forces = lp.layout.forces.len();
        assert_eq!(n_forces, 4 * 4 + 4 * 3);
        assert_eq!(lp.n_vars, 3 + 3 * n_forces);
    }

    #[test]
    fn switch_time_partitions_samples_by_absolute_time() {
        let model = RobotModel::default();
        let phase = standing(Vector2::zeros(), 0.0, &model);
        let mut lifted = phase.clone();
        lifted.contacts[0] = false;
        // 0.3 s to the switch, 0.9 s settling: the seam sits a quarter of
        // the way in, so K = 8 puts samples 0 and 1 on the source.
        let mut problem = TransitionProblem::new(&phase, &lifted, &model);
        problem.source.time_to_switch = 0.3;
        problem.candidate.time_elapsed = 0.9;
        let lp = problem.assemble().unwrap();
        let source_samples: Vec<usize> = lp
            .layout
            .forces
            .iter()
            .filter(|fv| fv.foot == 0)
            .map(|fv| fv.sample)
            .collect();
        assert_eq!(source_samples, vec![0, 1]);

        // No settling time: only the final sample stands on the candidate.
        let mut problem = TransitionProblem::new(&phase, &lifted, &model);
        problem.candidate.time_elapsed = 0.0;
        let lp = problem.assemble().unwrap();
        let last_source = lp
            .layout
            .forces
            .iter()
            .filter(|fv| fv.foot == 0)
            .map(|fv| fv.sample)
            .max()
            .unwrap();
        assert_eq!(last_source, problem.config.n_samples - 2);
    }

    #[test]
    fn no_contacts_reports_the_empty_sample() {
        let model = RobotModel::default();
        let mut phase = standing(Vector2::zeros(), 0.0, &model);
        phase.contacts = [false; N_FEET];
        let problem = TransitionProblem::new(&phase, &phase, &model);
        match problem.assemble() {
            Err(FeasibilityError::EmptySupport { sample: 0 }) => {}
            other => panic!("expected empty-support error, got {other:?}"),
        }
        // Through the solving path this is a verdict, not an error.
        assert!(!problem.solve().unwrap());
    }

    #[test]
    fn bad_configs_are_rejected() {
        let model = RobotModel::default();
        let phase = standing(Vector2::zeros(), 0.0, &model);
        let mut problem = TransitionProblem::new(&phase, &phase, &model);
        problem.config.n_samples = 1;
        assert!(matches!(problem.assemble(), Err(FeasibilityError::InvalidProblem(_))));

        let mut problem = TransitionProblem::new(&phase, &phase, &model);
        problem.source.time_to_switch = 0.0;
        assert!(matches!(problem.assemble(), Err(FeasibilityError::InvalidProblem(_))));

        let mut problem = TransitionProblem::new(&phase, &phase, &model);
        problem.candidate.base_position.x = f64::NAN;
        assert!(matches!(problem.assemble(), Err(FeasibilityError::InvalidProblem(_))));

        let mut problem = TransitionProblem::new(&phase, &phase, &model);
        problem.candidate.time_elapsed = -0.5;
        assert!(matches!(problem.assemble(), Err(FeasibilityError::InvalidProblem(_))));

        let mut problem = TransitionProblem::new(&phase, &phase, &model);
        problem.candidate.time_elapsed = f64::INFINITY;
        assert!(matches!(problem.assemble(), Err(FeasibilityError::InvalidProblem(_))));
    }

    /// With equal foot heights, a pinned midpoint, and wide reach boxes,
    /// static feasibility is exactly the support-polygon test: nonnegative
    /// foot loads summing to the weight whose positions average to the CoM.
    /// The oracle below decides that geometrically.
    fn support_polygon_contains(feet_xy: &[Vector2<f64>], point: Vector2<f64>, margin: f64) -> bool {
        // Convex hull by gift wrapping, then signed distances to edges.
        assert!(feet_xy.len() >= 3);
        let mut hull: Vec<Vector2<f64>> = Vec::new();
        let start = (0..feet_xy.len())
            .min_by(|&a, &b| {
                (feet_xy[a].x, feet_xy[a].y)
                    .partial_cmp(&(feet_xy[b].x, feet_xy[b].y))
                    .unwrap()
            })
            .unwrap();
        let mut current = start;
        loop {
            hull.push(feet_xy[current]);
            let mut next = (current + 1) % feet_xy.len();
            for cand in 0..feet_xy.len() {
                if cand == current {
                    continue;
                }
                let a = feet_xy[next] - feet_xy[current];
                let b = feet_xy[cand] - feet_xy[current];
                let cross = a.x * b.y - a.y * b.x;
                if cross < 0.0 || (cross == 0.0 && b.norm() > a.norm()) {
                    next = cand;
                }
            }
            current = next;
            if current == start {
                break;
            }
        }
        if hull.len() < 3 {
            return false;
        }
        // Interior at `margin` depth: every edge's inward signed distance
        // must be at least margin.
        for i in 0..hull.len() {
            let a = hull[i];
            let b = hull[(i + 1) % hull.len()];
            let edge = b - a;
            let len = edge.norm();
            if len < 1e-12 {
                return false;
            }
            // CCW hull: interior is to the left of each edge.
            let inward = (edge.x * (point.y - a.y) - edge.y * (point.x - a.x)) / len;
            if inward < margin {
                return false;
            }
        }
        true
    }

    #[test]
    fn static_verdicts_match_the_support_polygon_oracle() {
        let model = wide_box_model();
        let mut rng = ChaCha8Rng::seed_from_u64(0x57a7_1c5);
        let mut inside_seen = 0;
        let mut outside_seen = 0;
        for case in 0..120 {
            let n_feet_closed = if rng.gen_bool(0.5) { 4 } else { 3 };
            let mut phase = standing(
                Vector2::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)),
                rng.gen_range(-3.0..3.0),
                &model,
            );
            // Scatter the feet a little so the polygon varies.
            for f in phase.feet.iter_mut() {
                f.x += rng.gen_range(-0.08..0.08);
                f.y += rng.gen_range(-0.08..0.08);
            }
            if n_feet_closed == 3 {
                phase.contacts[rng.gen_range(0..N_FEET)] = false;
            }
            // Try CoM positions around the stance, keep those clearly inside
            // or clearly outside the polygon.
            let com_xy = Vector2::new(
                phase.base_position.x + rng.gen_range(-0.5..0.5),
                phase.base_position.y + rng.gen_range(-0.5..0.5),
            );
            let feet_xy: Vec<Vector2<f64>> = (0..N_FEET)
                .filter(|&i| phase.contacts[i])
                .map(|i| Vector2::new(phase.feet[i].x, phase.feet[i].y))
                .collect();
            let inside = support_polygon_contains(&feet_xy, com_xy, 0.01);
            let outside = !support_polygon_contains(&feet_xy, com_xy, -0.01);
            if !inside && !outside {
                continue; // too close to the boundary to score
            }
            phase.base_position.x = com_xy.x;
            phase.base_position.y = com_xy.y;
            let verdict = static_problem(&phase, &model).solve().unwrap();
            assert_eq!(verdict, inside, "case {case}: oracle and solver disagree");
            if inside {
                inside_seen += 1;
            } else {
                outside_seen += 1;
            }
        }
        assert!(inside_seen >= 20, "want a real mix, got {inside_seen} inside");
        assert!(outside_seen >= 20, "want a real mix, got {outside_seen} outside");
    }

    #[test]
    fn fast_paths_agree_with_the_plain_solver() {
        let model = RobotModel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0xa9ee);
        for case in 0..60 {
            let phase = standing(
                Vector2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                rng.gen_range(-3.0..3.0),
                &model,
            );
            let mut cand = phase.clone();
            cand.base_position.x += rng.gen_range(-0.6..0.6);
            cand.base_position.y += rng.gen_range(-0.6..0.6);
            for f in cand.feet.iter_mut() {
                f.x += rng.gen_range(-0.3..0.3);
                f.y += rng.gen_range(-0.3..0.3);
            }
            let problem = TransitionProblem::new(&phase, &cand, &model);
            let lp = problem.canonicalized().assemble().unwrap();
            let piped = lp_feasible(&lp, 1e-6, 50_000).unwrap();
            let plain = simplex::phase_one(&full_system(&lp), 1e-6, 50_000).unwrap();
            assert_eq!(piped, plain, "case {case}: fast path changed the verdict");
        }
    }

    #[test]
    fn verdicts_are_invariant_under_planar_rigid_motions() {
        let model = RobotModel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0x0716);
        for case in 0..40 {
            let mut phase = standing(Vector2::zeros(), 0.0, &model);
            phase.base_velocity = Vector3::new(rng.gen_range(-0.8..0.8), rng.gen_range(-0.8..0.8), 0.0);
            let mut cand = phase.clone();
            cand.base_position.x += rng.gen_range(-0.5..0.5);
            cand.base_position.y += rng.gen_range(-0.5..0.5);
            cand.base_velocity = Vector3::new(rng.gen_range(-0.8..0.8), rng.gen_range(-0.8..0.8), 0.0);
            for f in cand.feet.iter_mut() {
                f.x += rng.gen_range(-0.25..0.25);
                f.y += rng.gen_range(-0.25..0.25);
            }
            let base = transition_feasible(&phase, &cand, &model).unwrap();

            let yaw = rng.gen_range(-3.0..3.0);
            let shift = Vector3::new(rng.gen_range(-30.0..30.0), rng.gen_range(-30.0..30.0), 0.0);
            let rot = Rotation3::from_axis_angle(&Vector3::z_axis(), yaw);
            let moved = |p: &SupportPhase| SupportPhase {
                rotation: rot * p.rotation,
                base_position: rot * p.base_position + shift,
                base_velocity: rot * p.base_velocity,
                feet: p.feet.map(|f| rot * f + shift),
                contacts: p.contacts,
                time_elapsed: p.time_elapsed,
                time_to_switch: p.time_to_switch,
            };
            let verdict = transition_feasible(&moved(&phase), &moved(&cand), &model).unwrap();
            assert_eq!(verdict, base, "case {case}: rigid motion flipped the verdict");
        }
    }

    #[test]
    fn friction_and_cap_margins_move_the_verdict_the_right_way() {
        // Pinned static stance: feasibility needs the weight split across
        // the four feet, so a per-foot cap below a quarter of the weight
        // must fail and one above it must pass.
        let mut model = wide_box_model();
        let phase = standing(Vector2::zeros(), 0.0, &model);
        let weight = model.mass * model.gravity.z.abs();

        model.max_normal_force = weight / 4.0 * 1.1;
        assert!(static_problem(&phase, &model).solve().unwrap());
        model.max_normal_force = weight / 4.0 * 0.9;
        assert!(!static_problem(&phase, &model).solve().unwrap());

        // A lower friction coefficient can only remove feasible points.
        let mut gentle = wide_box_model();
        gentle.friction = 0.05;
        let mut cand = phase.clone();
        cand.base_position.x += 0.1;
        assert!(transition_feasible(&phase, &cand, &gentle).unwrap() <= {
            let mut grippy = wide_box_model();
            grippy.friction = 1.0;
            transition_feasible(&phase, &cand, &grippy).unwrap()
        });
    }

    #[test]
    fn violent_velocity_reversal_is_infeasible_when_pinned() {
        // Pinning freezes the curve, so the required deceleration shows up
        // directly as tangential force demand far beyond the pyramid.
        let model = wide_box_model();
        let phase = standing(Vector2::zeros(), 0.0, &model);
        let mut src = phase.clone();
        src.base_velocity = Vector3::new(6.0, 0.0, 0.0);
        let mut dst = phase.clone();
        dst.base_velocity = Vector3::new(-6.0, 0.0, 0.0);
        let mut problem = TransitionProblem::new(&src, &dst, &model);
        problem.pinned_midpoint = Some(phase.base_position);
        assert!(!problem.solve().unwrap());
    }

    /// A three-legged stance moving toward its missing corner cannot brake
    /// on its own support: the zero-moment point would have to lead the
    /// motion, outside the tripod. Recovery is landing the fourth foot
    /// quickly and braking on the full stance during the settling segment,
    /// which only the straddling window can express. Spending the window on
    /// the tripod instead leaves the deceleration on the old support and
    /// fails at any speed.
    #[test]
    fn moving_tripod_recovers_by_early_touchdown_but_not_by_coasting() {
        let model = RobotModel::default();
        let mut source = standing(Vector2::zeros(), 0.0, &model);
        source.contacts[3] = false;
        let corner = model.nominal_footholds[3];
        let dir = corner / corner.norm();
        source.base_velocity = Vector3::new(dir.x, dir.y, 0.0) * 0.4;

        let mut candidate = standing(Vector2::zeros(), 0.0, &model);
        let shift = dir * 0.2;
        candidate.base_position.x += shift.x;
        candidate.base_position.y += shift.y;
        // Stance feet carry over; only the landing foot follows the base.
        candidate.feet = source.feet;
        candidate.feet[3] = Vector3::new(
            candidate.base_position.x + corner.x,
            candidate.base_position.y + corner.y,
            0.0,
        );

        let mut escape = TransitionProblem::new(&source, &candidate, &model);
        escape.source.time_to_switch = 0.1;
        escape.candidate.time_elapsed = 1.4;
        assert!(escape.solve().unwrap(), "early touchdown must allow the brake");

        let mut coast = TransitionProblem::new(&source, &candidate, &model);
        coast.source.time_to_switch = 0.84;
        coast.candidate.time_elapsed = 0.0;
        assert!(!coast.solve().unwrap(), "coasting on the tripod must not");
    }

    #[test]
    fn doubling_the_mass_keeps_a_comfortable_stance_feasible() {
        let mut model = RobotModel::default();
        let phase = standing(Vector2::zeros(), 0.0, &model);
        assert!(transition_feasible(&phase, &phase, &model).unwrap());
        model.mass *= 2.0;
        assert!(transition_feasible(&phase, &phase, &model).unwrap());
    }

    #[test]
    fn dump_round_trips_bit_exact_and_preserves_the_verdict() {
        let model = RobotModel::default();
        let phase = standing(Vector2::new(0.3, -0.1), 0.2, &model);
        let mut cand = phase.clone();
        cand.base_position.x += 0.15;
        cand.contacts[2] = false;
        let problem = TransitionProblem::new(&phase, &cand, &model);
        let lp = problem.canonicalized().assemble().unwrap();
        let text = dump_lp(&lp);
        let parsed = parse_lp_dump(&text).unwrap();
        assert_eq!(dump_lp(&parsed), text, "dump of parse differs");
        assert_eq!(parsed.n_vars, lp.n_vars);
        assert_eq!(parsed.eq_a, lp.eq_a);
        assert_eq!(parsed.ub_a, lp.ub_a);
        assert_eq!(parsed.eq_tags, lp.eq_tags);
        assert_eq!(parsed.ub_tags, lp.ub_tags);
        assert_eq!(
            lp_feasible(&parsed, 1e-6, 50_000).unwrap(),
            lp_feasible(&lp, 1e-6, 50_000).unwrap()
        );
    }

    #[test]
    fn malformed_dumps_are_rejected_with_context() {
        let model = RobotModel::default();
        let phase = standing(Vector2::zeros(), 0.0, &model);
        let lp = TransitionProblem::new(&phase, &phase, &model).assemble().unwrap();
        let text = dump_lp(&lp);

        for broken in [
            "not-a-dump\n".to_string(),
            text.lines().take(5).collect::<Vec<_>>().join("\n"),
            text.replace("n_vars 99", "n_vars banana"),
            text.replacen(" 3ff0000000000000", " zzz0000000000000", 1),
            text.replace("\nend\n", "\n"),
        ] {
            assert!(
                matches!(parse_lp_dump(&broken), Err(FeasibilityError::BadDump(_))),
                "accepted a broken dump"
            );
        }
    }


    #[test]
    fn repeated_solves_of_one_problem_agree() {
        let model = RobotModel::default();
        let phase = standing(Vector2::zeros(), 0.0, &model);
        let mut cand = phase.clone();
        cand.base_position.x += 0.2;
        for f in cand.feet.iter_mut() {
            f.x += 0.2;
        }
        let first = transition_feasible(&phase, &cand, &model).unwrap();
        for _ in 0..5 {
            assert_eq!(transition_feasible(&phase, &cand, &model).unwrap(), first);
        }
        // Assembly itself is also byte-stable.
        let problem = TransitionProblem::new(&phase, &cand, &model);
        let a = dump_lp(&problem.canonicalized().assemble().unwrap());
        let b = dump_lp(&problem.canonicalized().assemble().unwrap());
        assert_eq!(a, b);
    }
}
