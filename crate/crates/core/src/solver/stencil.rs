//! Fourth-order first-derivative stencils on a uniform grid.

/// `∂ₛf` at every node. Periodic grids wrap; otherwise the two nodes at each
/// end use one-sided fourth-order stencils. Needs at least 5 nodes.
pub fn derivative(f: &[f64], ds: f64, periodic: bool) -> Vec<f64> {
    let n = f.len();
    assert!(n >= 5, "fourth-order stencil needs at least 5 nodes, got {n}");
    let inv = 1.0 / (12.0 * ds);
    let mut out = vec![0.0; n];
    // (f[j-2] - f[j+2]) + 8 (f[j+1] - f[j-1]) is exactly zero on constant data.
    let central = |a2: f64, a1: f64, b1: f64, b2: f64| ((a2 - b2) + 8.0 * (b1 - a1)) * inv;
    if periodic {
        for j in 0..n {
            let at = |k: isize| f[(j as isize + k).rem_euclid(n as isize) as usize];
            out[j] = central(at(-2), at(-1), at(1), at(2));
        }
    } else {
        for j in 2..n - 2 {
            out[j] = central(f[j - 2], f[j - 1], f[j + 1], f[j + 2]);
        }
        out[0] = (-25.0 * f[0] + 48.0 * f[1] - 36.0 * f[2] + 16.0 * f[3] - 3.0 * f[4]) * inv;
        out[1] = (-3.0 * f[0] - 10.0 * f[1] + 18.0 * f[2] - 6.0 * f[3] + f[4]) * inv;
        let e = n - 1;
        out[e] = (25.0 * f[e] - 48.0 * f[e - 1] + 36.0 * f[e - 2] - 16.0 * f[e - 3] + 3.0 * f[e - 4]) * inv;
        out[e - 1] = (3.0 * f[e] + 10.0 * f[e - 1] - 18.0 * f[e - 2] + 6.0 * f[e - 3] - f[e - 4]) * inv;
    }
    out
}
