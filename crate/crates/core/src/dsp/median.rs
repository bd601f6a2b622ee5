//! 2-D median filtering with edge-replicating reflection padding.

use super::PowerGrid;

/// Map an out-of-range index into `[0, len)` by symmetric reflection that
/// repeats the edge sample: `[a b c]` padded left by two reads `b a | a b c`.
#[inline]
fn symmetric_index(mut i: isize, len: usize) -> usize {
    let n = len as isize;
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - 1 - i;
        } else {
            return i as usize;
        }
    }
}

#[inline]
fn median_of(buf: &mut [f64]) -> f64 {
    let mid = buf.len() / 2;
    let (_, m, _) = buf.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
    *m
}

/// Median-filter a grid with a `kernel_h x kernel_w` neighborhood. Kernel
/// dimensions must be odd. Edges are handled by edge-replicating reflection,
/// so every output value is drawn from the input values. Shape is unchanged.
pub fn median_filter_2d(grid: &PowerGrid, kernel_h: usize, kernel_w: usize) -> PowerGrid {
    assert!(
        kernel_h % 2 == 1 && kernel_w % 2 == 1 && kernel_h >= 1 && kernel_w >= 1,
        "median kernel dims must be odd, got ({kernel_h}, {kernel_w})"
    );
    let rows = grid.bins();
    let cols = grid.frames();
    let half_h = (kernel_h / 2) as isize;
    let half_w = (kernel_w / 2) as isize;

    let mut out = grid.clone();
    let mut window = vec![0.0f64; kernel_h * kernel_w];

    if kernel_h == 1 {
        // Row-wise pass over contiguous data.
        for r in 0..rows {
            let row = grid.values.row(r);
            let out_row = out.values.row_mut(r);
            for (c, slot) in out_row.iter_mut().enumerate() {
                for (j, w) in window.iter_mut().enumerate() {
                    let idx = symmetric_index(c as isize - half_w + j as isize, cols);
                    *w = row[idx];
                }
                *slot = median_of(&mut window);
            }
        }
    } else if kernel_w == 1 {
        for c in 0..cols {
            for r in 0..rows {
                for (j, w) in window.iter_mut().enumerate() {
                    let idx = symmetric_index(r as isize - half_h + j as isize, rows);
                    *w = grid.values.at(idx, c);
                }
                *out.values.at_mut(r, c) = median_of(&mut window);
            }
        }
    } else {
        for r in 0..rows {
            for c in 0..cols {
                let mut k = 0;
                for dr in -half_h..=half_h {
                    let rr = symmetric_index(r as isize + dr, rows);
                    for dc in -half_w..=half_w {
                        let cc = symmetric_index(c as isize + dc, cols);
                        window[k] = grid.values.at(rr, cc);
                        k += 1;
                    }
                }
                *out.values.at_mut(r, c) = median_of(&mut window);
            }
        }
    }
    out
}
