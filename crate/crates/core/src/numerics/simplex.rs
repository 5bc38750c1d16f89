//! Phase-1 bounded-variable simplex.
//!
//! The only question answered here is feasibility: is the region
//! `{ x : l <= x <= u, Ax = b, Gx >= h }` nonempty? Upper and lower bounds
//! are handled implicitly (variables rest at either bound when nonbasic), so
//! the tableau has one row per functional constraint only. Infeasible
//! problems come with a Farkas-style certificate extracted from the phase-1
//! duals.

use super::NumericsError;

/// One linear row: `coeffs . x (= or >=) rhs`.
#[derive(Debug, Clone)]
pub struct LinearConstraint {
    pub coeffs: Vec<f64>,
    pub rhs: f64,
}

impl LinearConstraint {
    pub fn new(coeffs: Vec<f64>, rhs: f64) -> Self {
        Self { coeffs, rhs }
    }
}

/// A pure feasibility problem over box-bounded variables.
///
/// All declared variables must carry finite bounds; in this crate they are
/// probability masses living in `[0, nu(c)]`.
#[derive(Debug, Clone, Default)]
pub struct LinearFeasibilityProblem {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub equalities: Vec<LinearConstraint>,
    /// Sense `>=`.
    pub inequalities: Vec<LinearConstraint>,
}

impl LinearFeasibilityProblem {
    pub fn num_variables(&self) -> usize {
        self.lower.len()
    }
}

/// Infeasibility certificate: multipliers `y` over the stacked rows
/// (equalities first, then inequalities) such that the best value of
/// `y . (Ax)` over the box falls short of `y . rhs` by `gap > 0`.
#[derive(Debug, Clone)]
pub struct FarkasCertificate {
    pub row_multipliers: Vec<f64>,
    pub gap: f64,
}

#[derive(Debug, Clone)]
pub enum Feasibility {
    Feasible { point: Vec<f64> },
    Infeasible { certificate: FarkasCertificate },
}

impl Feasibility {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Feasibility::Feasible { .. })
    }

    pub fn point(&self) -> Option<&[f64]> {
        match self {
            Feasibility::Feasible { point } => Some(point),
            Feasibility::Infeasible { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Status {
    Basic(usize),
    AtLower,
    AtUpper,
}

const PIVOT_EPS: f64 = 1e-11;

/// Decide feasibility of `p` within `tol`.
///
/// Feasible outcomes return a point satisfying every constraint within
/// `tol`; infeasible ones return a checkable [`FarkasCertificate`].
pub fn solve_feasibility(
    p: &LinearFeasibilityProblem,
    tol: f64,
) -> Result<Feasibility, NumericsError> {
    let n = p.lower.len();
    if p.upper.len() != n {
        return Err(NumericsError::InvalidProblem(
            "bound vectors differ in length".into(),
        ));
    }
    for j in 0..n {
        if !p.lower[j].is_finite() || !p.upper[j].is_finite() {
            return Err(NumericsError::InvalidProblem(format!(
                "variable {j} has non-finite bounds"
            )));
        }
        if p.lower[j] > p.upper[j] + tol {
            // Empty box; no row multipliers can express this, so report the
            // crossing bounds directly with a zero multiplier vector.
            return Ok(Feasibility::Infeasible {
                certificate: FarkasCertificate {
                    row_multipliers: vec![0.0; p.equalities.len() + p.inequalities.len()],
                    gap: p.lower[j] - p.upper[j],
                },
            });
        }
    }
    for row in p.equalities.iter().chain(p.inequalities.iter()) {
        if row.coeffs.len() != n {
            return Err(NumericsError::InvalidProblem(
                "constraint row length does not match variable count".into(),
            ));
        }
        if !row.rhs.is_finite() || row.coeffs.iter().any(|c| !c.is_finite()) {
            return Err(NumericsError::InvalidProblem(
                "constraint contains non-finite data".into(),
            ));
        }
    }

    let n_eq = p.equalities.len();
    let n_ge = p.inequalities.len();
    let m = n_eq + n_ge;
    if m == 0 {
        let point: Vec<f64> = p.lower.clone();
        return Ok(Feasibility::Feasible { point });
    }

    // Columns: structural | surplus (one per >= row) | artificial (one per row).
    let n_cols = n + n_ge + m;
    let col_lo = |j: usize| -> f64 {
        if j < n {
            p.lower[j]
        } else {
            0.0
        }
    };
    let col_hi = |j: usize, upper: &[f64]| -> f64 {
        if j < n {
            upper[j]
        } else {
            f64::INFINITY
        }
    };

    // Row-major constraint matrix over structural+surplus columns.
    let mut a = vec![vec![0.0_f64; n + n_ge]; m];
    let mut rhs = vec![0.0_f64; m];
    for (i, row) in p.equalities.iter().enumerate() {
        a[i][..n].copy_from_slice(&row.coeffs);
        rhs[i] = row.rhs;
    }
    for (k, row) in p.inequalities.iter().enumerate() {
        let i = n_eq + k;
        a[i][..n].copy_from_slice(&row.coeffs);
        a[i][n + k] = -1.0; // row . x - s = rhs
        rhs[i] = row.rhs;
    }

    // Start with every non-artificial variable at its lower bound.
    let residual: Vec<f64> = (0..m)
        .map(|i| rhs[i] - (0..n).map(|j| a[i][j] * p.lower[j]).sum::<f64>())
        .collect();
    let art_sign: Vec<f64> = residual.iter().map(|r| if *r >= 0.0 { 1.0 } else { -1.0 }).collect();

    // Full tableau in B^{-1}A form. Initial basis = artificials with
    // B = diag(art_sign), so B^{-1} A row i is row i of A scaled by the sign.
    let mut tab = vec![vec![0.0_f64; n_cols]; m];
    let mut beta = vec![0.0_f64; m];
    for i in 0..m {
        for j in 0..(n + n_ge) {
            tab[i][j] = art_sign[i] * a[i][j];
        }
        tab[i][n + n_ge + i] = 1.0;
        beta[i] = residual[i].abs();
    }
    let mut status = vec![Status::AtLower; n_cols];
    let mut basis = vec![0usize; m];
    for i in 0..m {
        basis[i] = n + n_ge + i;
        status[n + n_ge + i] = Status::Basic(i);
    }

    // Reduced costs for the phase-1 objective (sum of artificials).
    let cost = |j: usize| -> f64 {
        if j >= n + n_ge {
            1.0
        } else {
            0.0
        }
    };
    let mut dj = vec![0.0_f64; n_cols];
    for (j, d) in dj.iter_mut().enumerate() {
        *d = cost(j) - (0..m).map(|i| tab[i][j]).sum::<f64>();
    }

    let iter_limit = 200 * (m + n_cols) + 20_000;
    for _iter in 0..iter_limit {
        // Bland: smallest-index improving column.
        let mut entering = None;
        for j in 0..n_cols {
            match status[j] {
                Status::AtLower if dj[j] < -PIVOT_EPS => {
                    // Never raise an artificial back off zero.
                    if j >= n + n_ge {
                        continue;
                    }
                    entering = Some((j, 1.0));
                    break;
                }
                Status::AtUpper if dj[j] > PIVOT_EPS => {
                    entering = Some((j, -1.0));
                    break;
                }
                _ => {}
            }
        }
        let Some((j_in, dir)) = entering else {
            // Optimal for phase 1.
            let obj: f64 = (0..m)
                .filter(|&i| basis[i] >= n + n_ge)
                .map(|i| beta[i])
                .sum();
            if obj <= tol {
                let mut point = vec![0.0_f64; n];
                for j in 0..n {
                    point[j] = match status[j] {
                        Status::Basic(i) => beta[i],
                        Status::AtLower => p.lower[j],
                        Status::AtUpper => p.upper[j],
                    };
                    point[j] = point[j].clamp(p.lower[j], p.upper[j]);
                }
                return Ok(Feasibility::Feasible { point });
            }
            // Phase-1 duals: the artificial column for row i keeps cost 1 and
            // reduced cost d = 1 - sign_i * y_i.
            let mut y = vec![0.0_f64; m];
            for i in 0..m {
                let d_art = dj[n + n_ge + i];
                y[i] = art_sign[i] * (1.0 - d_art);
            }
            // Surplus columns force y >= 0 on inequality rows; clamp the
            // numerical dust so the certificate checks cleanly.
            for yi in y.iter_mut().skip(n_eq) {
                if *yi < 0.0 && *yi > -1e-7 {
                    *yi = 0.0;
                }
            }
            let mut best = 0.0_f64;
            for j in 0..n {
                let ya: f64 = (0..m).map(|i| y[i] * a[i][j]).sum();
                best += if ya >= 0.0 { ya * p.upper[j] } else { ya * p.lower[j] };
            }
            let yb: f64 = (0..m).map(|i| y[i] * rhs[i]).sum();
            return Ok(Feasibility::Infeasible {
                certificate: FarkasCertificate {
                    row_multipliers: y,
                    gap: yb - best,
                },
            });
        };

        // Ratio test. Moving j_in by t in direction dir changes basic value i
        // by -dir * tab[i][j_in] * t.
        let own_range = col_hi(j_in, &p.upper) - col_lo(j_in);
        let mut t_best = own_range;
        let mut leaving: Option<usize> = None; // row index
        for i in 0..m {
            let delta = -dir * tab[i][j_in];
            if delta > PIVOT_EPS {
                let room = col_hi(basis[i], &p.upper) - beta[i];
                let t = (room.max(0.0)) / delta;
                if t < t_best - 1e-12 || (t < t_best + 1e-12 && pick_bland(&basis, leaving, i)) {
                    t_best = t;
                    leaving = Some(i);
                }
            } else if delta < -PIVOT_EPS {
                let room = beta[i] - col_lo(basis[i]);
                let t = (room.max(0.0)) / (-delta);
                if t < t_best - 1e-12 || (t < t_best + 1e-12 && pick_bland(&basis, leaving, i)) {
                    t_best = t;
                    leaving = Some(i);
                }
            }
        }
        if !t_best.is_finite() {
            return Err(NumericsError::NotFinite);
        }

        // Apply the move to the basic values.
        for i in 0..m {
            beta[i] += -dir * tab[i][j_in] * t_best;
        }

        match leaving {
            None => {
                // Bound flip: j_in runs to its opposite bound.
                status[j_in] = if dir > 0.0 { Status::AtUpper } else { Status::AtLower };
            }
            Some(r) => {
                let j_out = basis[r];
                let new_val = match status[j_in] {
                    Status::AtLower => col_lo(j_in) + t_best,
                    Status::AtUpper => col_hi(j_in, &p.upper) - t_best,
                    Status::Basic(_) => unreachable!("entering column is nonbasic"),
                };
                // Which bound did the leaving variable hit?
                let delta = -dir * tab[r][j_in];
                status[j_out] = if delta > 0.0 { Status::AtUpper } else { Status::AtLower };

                let pivot = tab[r][j_in];
                if pivot.abs() < PIVOT_EPS {
                    return Err(NumericsError::IterationLimit { iterations: _iter });
                }
                let inv = 1.0 / pivot;
                for v in tab[r].iter_mut() {
                    *v *= inv;
                }
                for i in 0..m {
                    if i == r {
                        continue;
                    }
                    let f = tab[i][j_in];
                    if f != 0.0 {
                        for j in 0..n_cols {
                            tab[i][j] -= f * tab[r][j];
                        }
                        tab[i][j_in] = 0.0;
                    }
                }
                let f = dj[j_in];
                if f != 0.0 {
                    for j in 0..n_cols {
                        dj[j] -= f * tab[r][j];
                    }
                    dj[j_in] = 0.0;
                }
                basis[r] = j_in;
                status[j_in] = Status::Basic(r);
                beta[r] = new_val;
                if !new_val.is_finite() {
                    return Err(NumericsError::NotFinite);
                }
            }
        }
    }
    Err(NumericsError::IterationLimit { iterations: iter_limit })
}

/// Bland tie-break on the leaving row: keep the candidate whose basic
/// variable has the smaller index.
fn pick_bland(basis: &[usize], current: Option<usize>, candidate: usize) -> bool {
    match current {
        None => true,
        Some(cur) => basis[candidate] < basis[cur],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seg(lo: f64, hi: f64, ge: f64, le: f64) -> LinearFeasibilityProblem {
        // { x in [lo,hi] : x >= ge, x <= le }, the `<=` encoded as -x >= -le.
        LinearFeasibilityProblem {
            lower: vec![lo],
            upper: vec![hi],
            equalities: vec![],
            inequalities: vec![
                LinearConstraint::new(vec![1.0], ge),
                LinearConstraint::new(vec![-1.0], -le),
            ],
        }
    }

    #[test]
    fn interval_feasible() {
        let out = solve_feasibility(&seg(0.0, 1.0, 0.5, 0.7), 1e-9).unwrap();
        let Feasibility::Feasible { point } = out else { panic!("expected feasible") };
        assert!(point[0] >= 0.5 - 1e-9 && point[0] <= 0.7 + 1e-9);
    }

    #[test]
    fn interval_infeasible_with_certificate() {
        let p = seg(0.0, 1.0, 0.8, 0.2);
        let out = solve_feasibility(&p, 1e-9).unwrap();
        let Feasibility::Infeasible { certificate } = out else { panic!("expected infeasible") };
        assert!(certificate.gap > 1e-9, "gap = {}", certificate.gap);
        assert_certificate_valid(&p, &certificate);
    }

    /// Independent validity check of a Farkas certificate: the multipliers
    /// must make `y . rhs` exceed the box-maximum of `y . (Ax)`, with
    /// inequality multipliers nonnegative.
    fn assert_certificate_valid(p: &LinearFeasibilityProblem, cert: &FarkasCertificate) {
        let n = p.num_variables();
        let n_eq = p.equalities.len();
        for (k, y) in cert.row_multipliers.iter().enumerate().skip(n_eq) {
            assert!(*y >= -1e-7, "inequality multiplier {k} negative: {y}");
        }
        let mut yb = 0.0;
        let mut ya = vec![0.0_f64; n];
        for (i, row) in p.equalities.iter().chain(p.inequalities.iter()).enumerate() {
            let y = cert.row_multipliers[i];
            yb += y * row.rhs;
            for j in 0..n {
                ya[j] += y * row.coeffs[j];
            }
        }
        let best: f64 = (0..n)
            .map(|j| if ya[j] >= 0.0 { ya[j] * p.upper[j] } else { ya[j] * p.lower[j] })
            .sum();
        assert!(yb - best > 1e-10, "certificate gap not positive: {}", yb - best);
    }

    /// Test-only oracle: decide feasibility by enumerating basic solutions of
    /// the standard-form system (all bases times all nonbasic bound
    /// patterns). Exponential, usable only for tiny problems.
    fn feasible_by_enumeration(p: &LinearFeasibilityProblem) -> bool {
        let n = p.num_variables();
        let n_ge = p.inequalities.len();
        // Finite surplus bounds from the box.
        let mut lo = p.lower.clone();
        let mut hi = p.upper.clone();
        let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
        for row in &p.equalities {
            let mut c = row.coeffs.clone();
            c.extend(std::iter::repeat_n(0.0, n_ge));
            rows.push((c, row.rhs));
        }
        for (k, row) in p.inequalities.iter().enumerate() {
            let slack_max: f64 = row
                .coeffs
                .iter()
                .enumerate()
                .map(|(j, c)| if *c >= 0.0 { c * p.upper[j] } else { c * p.lower[j] })
                .sum::<f64>()
                - row.rhs;
            if slack_max < -1e-9 {
                return false;
            }
            let mut c = row.coeffs.clone();
            c.extend(std::iter::repeat_n(0.0, n_ge));
            c[n + k] = -1.0;
            rows.push((c, row.rhs));
            lo.push(0.0);
            hi.push(slack_max.max(0.0));
        }
        // Row-reduce to drop redundant rows; inconsistency means infeasible.
        let (rows, consistent) = row_reduce(rows);
        if !consistent {
            return false;
        }
        let m = rows.len();
        let nt = n + n_ge;
        if m == 0 {
            return true;
        }
        let cols: Vec<usize> = (0..nt).collect();
        for basis in combinations(&cols, m) {
            let nonbasic: Vec<usize> = cols.iter().copied().filter(|j| !basis.contains(j)).collect();
            for mask in 0..(1usize << nonbasic.len()) {
                let mut fixed = vec![0.0_f64; nt];
                for (b, &j) in nonbasic.iter().enumerate() {
                    fixed[j] = if mask >> b & 1 == 1 { hi[j] } else { lo[j] };
                }
                let mut mat = vec![vec![0.0_f64; m]; m];
                let mut rhs = vec![0.0_f64; m];
                for (i, (c, r)) in rows.iter().enumerate() {
                    rhs[i] = *r - nonbasic.iter().map(|&j| c[j] * fixed[j]).sum::<f64>();
                    for (bi, &j) in basis.iter().enumerate() {
                        mat[i][bi] = c[j];
                    }
                }
                if let Some(sol) = solve_square(&mat, &rhs) {
                    let ok = basis
                        .iter()
                        .enumerate()
                        .all(|(bi, &j)| sol[bi] >= lo[j] - 1e-7 && sol[bi] <= hi[j] + 1e-7);
                    if ok {
                        return true;
                    }
                }
            }
        }
        false
    }

    fn row_reduce(mut rows: Vec<(Vec<f64>, f64)>) -> (Vec<(Vec<f64>, f64)>, bool) {
        let m = rows.len();
        if m == 0 {
            return (rows, true);
        }
        let n = rows[0].0.len();
        let mut rank = 0;
        for col in 0..n {
            let piv = (rank..m).max_by(|&a, &b| {
                rows[a].0[col].abs().partial_cmp(&rows[b].0[col].abs()).unwrap()
            });
            let Some(piv) = piv else { break };
            if rows[piv].0[col].abs() < 1e-10 {
                continue;
            }
            rows.swap(rank, piv);
            let (head, tail) = rows.split_at_mut(rank + 1);
            let prow = &head[rank];
            for row in tail.iter_mut() {
                let f = row.0[col] / prow.0[col];
                if f != 0.0 {
                    for j in 0..n {
                        row.0[j] -= f * prow.0[j];
                    }
                    row.1 -= f * prow.1;
                }
            }
            rank += 1;
            if rank == m {
                break;
            }
        }
        for row in rows.iter().skip(rank) {
            if row.1.abs() > 1e-7 {
                return (vec![], false);
            }
        }
        rows.truncate(rank);
        (rows, true)
    }

    fn solve_square(mat: &[Vec<f64>], rhs: &[f64]) -> Option<Vec<f64>> {
        let m = rhs.len();
        let mut a: Vec<Vec<f64>> = mat.to_vec();
        let mut b = rhs.to_vec();
        for col in 0..m {
            let piv = (col..m).max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())?;
            if a[piv][col].abs() < 1e-10 {
                return None;
            }
            a.swap(col, piv);
            b.swap(col, piv);
            for i in 0..m {
                if i != col {
                    let f = a[i][col] / a[col][col];
                    for j in 0..m {
                        a[i][j] -= f * a[col][j];
                    }
                    b[i] -= f * b[col];
                }
            }
        }
        Some((0..m).map(|i| b[i] / a[i][i]).collect())
    }

    fn combinations(items: &[usize], k: usize) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        let mut cur = Vec::new();
        fn rec(items: &[usize], k: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            if cur.len() == k {
                out.push(cur.clone());
                return;
            }
            for i in start..items.len() {
                cur.push(items[i]);
                rec(items, k, i + 1, cur, out);
                cur.pop();
            }
        }
        rec(items, k, 0, &mut cur, &mut out);
        out
    }

    /// Random 3x3 transportation polytopes with one extra >= cut: the simplex
    /// verdict must match exhaustive basic-solution enumeration.
    #[test]
    fn transportation_matches_enumeration() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for trial in 0..40 {
            let row_m: Vec<f64> = (0..3).map(|_| rng.gen_range(1..=8) as f64 / 8.0).collect();
            let total: f64 = row_m.iter().sum();
            // Column marginals resum the same total so the equalities are consistent.
            let mut col_m: Vec<f64> = (0..3).map(|_| rng.gen_range(1..=8) as f64).collect();
            let s: f64 = col_m.iter().sum();
            for c in col_m.iter_mut() {
                *c *= total / s;
            }
            let mut eq = Vec::new();
            for r in 0..3 {
                let mut c = vec![0.0; 9];
                for j in 0..3 {
                    c[r * 3 + j] = 1.0;
                }
                eq.push(LinearConstraint::new(c, row_m[r]));
            }
            for j in 0..3 {
                let mut c = vec![0.0; 9];
                for r in 0..3 {
                    c[r * 3 + j] = 1.0;
                }
                eq.push(LinearConstraint::new(c, col_m[j]));
            }
            // A random >= cut, sometimes satisfiable and sometimes not.
            let cut: Vec<f64> = (0..9).map(|_| rng.gen_range(-4..=4) as f64 / 4.0).collect();
            let cut_rhs = rng.gen_range(-6..=6) as f64 / 4.0;
            let p = LinearFeasibilityProblem {
                lower: vec![0.0; 9],
                upper: vec![total; 9],
                equalities: eq,
                inequalities: vec![LinearConstraint::new(cut, cut_rhs)],
            };
            let got = solve_feasibility(&p, 1e-9).unwrap();
            let expect = feasible_by_enumeration(&p);
            assert_eq!(got.is_feasible(), expect, "trial {trial} disagreed");
            match got {
                Feasibility::Feasible { point } => {
                    for row in p.equalities.iter() {
                        let lhs: f64 = row.coeffs.iter().zip(&point).map(|(c, x)| c * x).sum();
                        assert!((lhs - row.rhs).abs() <= 1e-7, "equality violated by {}", lhs - row.rhs);
                    }
                    for row in p.inequalities.iter() {
                        let lhs: f64 = row.coeffs.iter().zip(&point).map(|(c, x)| c * x).sum();
                        assert!(lhs >= row.rhs - 1e-7);
                    }
                }
                Feasibility::Infeasible { certificate } => assert_certificate_valid(&p, &certificate),
            }
        }
    }

    #[test]
    fn empty_problem_is_feasible() {
        let p = LinearFeasibilityProblem {
            lower: vec![0.0, -1.0],
            upper: vec![1.0, 2.0],
            equalities: vec![],
            inequalities: vec![],
        };
        assert!(solve_feasibility(&p, 1e-9).unwrap().is_feasible());
    }

    #[test]
    fn crossed_bounds_are_infeasible() {
        let p = LinearFeasibilityProblem {
            lower: vec![0.5],
            upper: vec![0.2],
            equalities: vec![],
            inequalities: vec![],
        };
        assert!(!solve_feasibility(&p, 1e-9).unwrap().is_feasible());
    }

    #[test]
    fn non_finite_bounds_rejected() {
        let p = LinearFeasibilityProblem {
            lower: vec![0.0],
            upper: vec![f64::INFINITY],
            equalities: vec![],
            inequalities: vec![],
        };
        assert!(matches!(
            solve_feasibility(&p, 1e-9),
            Err(NumericsError::InvalidProblem(_))
        ));
    }
}
