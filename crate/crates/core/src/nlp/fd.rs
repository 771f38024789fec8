//! Finite-difference derivatives that exploit a declared sparsity pattern.

use std::collections::HashSet;

/// Relative step for central differences of function values.
const JAC_STEP: f64 = 6e-6;
/// Relative step for central differences of gradients that are themselves
/// finite differences.
const HESS_STEP: f64 = 1e-4;

/// Greedy colouring of the columns of `pattern` (`(row, column)` pairs) so
/// that no two columns of one colour share a row. Returns one colour per
/// column.
pub fn colour_columns(n_cols: usize, pattern: &[(usize, usize)]) -> Vec<usize> {
    let n_rows = pattern.iter().map(|p| p.0 + 1).max().unwrap_or(0);
    let mut row_cols = vec![Vec::new(); n_rows];
    let mut col_rows = vec![Vec::new(); n_cols];
    for &(r, c) in pattern {
        row_cols[r].push(c);
        col_rows[c].push(r);
    }
    for v in row_cols.iter_mut().chain(col_rows.iter_mut()) {
        v.sort_unstable();
        v.dedup();
    }
    let mut colour = vec![usize::MAX; n_cols];
    let mut mark = vec![usize::MAX; n_cols + 1];
    for c in 0..n_cols {
        for &r in &col_rows[c] {
            for &o in &row_cols[r] {
                if colour[o] != usize::MAX {
                    mark[colour[o]] = c;
                }
            }
        }
        colour[c] = (0..).find(|&k| mark[k] != c).expect("a free colour exists");
    }
    colour
}

fn group_by_colour(colours: &[usize], structure: &[(usize, usize)], key: impl Fn(usize, usize) -> usize) -> Vec<Vec<usize>> {
    let n_colours = colours.iter().map(|&c| c + 1).max().unwrap_or(0);
    let mut groups = vec![Vec::new(); n_colours];
    for (e, &(r, c)) in structure.iter().enumerate() {
        groups[colours[key(r, c)]].push(e);
    }
    groups
}

fn first_occurrences(structure: &[(usize, usize)]) -> Vec<bool> {
    let mut seen = HashSet::with_capacity(structure.len());
    structure.iter().map(|p| seen.insert(*p)).collect()
}

fn perturbed(x: &[f64], cols: impl Iterator<Item = usize> + Clone, step: f64) -> (Vec<f64>, Vec<f64>) {
    let mut xp = x.to_vec();
    let mut xm = x.to_vec();
    for j in cols {
        let h = step * (1.0 + x[j].abs());
        xp[j] += h;
        xm[j] -= h;
    }
    (xp, xm)
}

/// Jacobian values of `f: R^n -> R^m` for `structure`, by central
/// differences with one pair of evaluations per colour of `colours`
/// (from [`colour_columns`] on the same structure). Repeated coordinates
/// receive the value once and zero afterwards.
pub fn sparse_fd_jacobian<F>(f: F, x: &[f64], m: usize, structure: &[(usize, usize)], colours: &[usize], values: &mut [f64])
where
    F: Fn(&[f64], &mut [f64]),
{
    assert_eq!(values.len(), structure.len());
    let first = first_occurrences(structure);
    let groups = group_by_colour(colours, structure, |_, c| c);
    let (mut fp, mut fm) = (vec![0.0; m], vec![0.0; m]);
    values.iter_mut().for_each(|v| *v = 0.0);
    for (k, entries) in groups.iter().enumerate() {
        if entries.is_empty() {
            continue;
        }
        let cols = (0..x.len()).filter(|&j| colours[j] == k);
        let (xp, xm) = perturbed(x, cols, JAC_STEP);
        f(&xp, &mut fp);
        f(&xm, &mut fm);
        for &e in entries {
            let (r, c) = structure[e];
            if first[e] {
                values[e] = (fp[r] - fm[r]) / (xp[c] - xm[c]);
            }
        }
    }
}

/// Values of a symmetric Hessian, given in lower-triangle `structure`, by
/// central differences of `grad`. `colours` must colour the full symmetric
/// pattern (see [`symmetric_pattern`]); off-diagonal entries average the two
/// available estimates.
pub fn sparse_fd_hessian<G>(grad: G, x: &[f64], structure: &[(usize, usize)], colours: &[usize], values: &mut [f64])
where
    G: Fn(&[f64], &mut [f64]),
{
    assert_eq!(values.len(), structure.len());
    let n = x.len();
    let first = first_occurrences(structure);
    let by_col = group_by_colour(colours, structure, |_, c| c);
    let by_row = group_by_colour(colours, structure, |r, _| r);
    let n_colours = by_col.len().max(by_row.len());
    let (mut gp, mut gm) = (vec![0.0; n], vec![0.0; n]);
    values.iter_mut().for_each(|v| *v = 0.0);
    for k in 0..n_colours {
        let col_entries = by_col.get(k).map_or(&[][..], |v| &v[..]);
        let row_entries = by_row.get(k).map_or(&[][..], |v| &v[..]);
        if col_entries.is_empty() && row_entries.is_empty() {
            continue;
        }
        let cols = (0..n).filter(|&j| colours[j] == k);
        let (xp, xm) = perturbed(x, cols, HESS_STEP);
        grad(&xp, &mut gp);
        grad(&xm, &mut gm);
        // d grad[r] / d x[c]
        for &e in col_entries {
            let (r, c) = structure[e];
            if first[e] {
                let w = if r == c { 1.0 } else { 0.5 };
                values[e] += w * (gp[r] - gm[r]) / (xp[c] - xm[c]);
            }
        }
        // d grad[c] / d x[r]
        for &e in row_entries {
            let (r, c) = structure[e];
            if first[e] && r != c {
                values[e] += 0.5 * (gp[c] - gm[c]) / (xp[r] - xm[r]);
            }
        }
    }
}

/// Full symmetric pattern (both triangles and the diagonal) of a
/// lower-triangle structure over `n` variables.
pub fn symmetric_pattern(n: usize, lower: &[(usize, usize)]) -> Vec<(usize, usize)> {
    let mut p: Vec<(usize, usize)> = (0..n).map(|i| (i, i)).collect();
    for &(r, c) in lower {
        p.push((r, c));
        p.push((c, r));
    }
    p
}
