//! Exact squared Euclidean distance transform in integer arithmetic.
//!
//! Two separable passes (column scan, then lower envelope of parabolas per row)
//! after Meijster, Roerdink and Hesselink. All arithmetic is on `i64`, so the
//! result is exact.

/// Squared distance of every pixel to the nearest `true` pixel of `features`.
/// Returns `None` when `features` is empty.
pub fn squared_edt(features: &[bool], height: usize, width: usize) -> Option<Vec<i64>> {
    assert_eq!(features.len(), height * width);
    if !features.iter().any(|&f| f) {
        return None;
    }
    let inf = (height + width) as i64;

    // column pass: vertical distance to the nearest feature in the same column
    let mut g = vec![0i64; height * width];
    for x in 0..width {
        g[x] = if features[x] { 0 } else { inf };
        for y in 1..height {
            let i = y * width + x;
            g[i] = if features[i] { 0 } else { (g[i - width] + 1).min(inf) };
        }
        for y in (0..height.saturating_sub(1)).rev() {
            let i = y * width + x;
            let below = g[i + width] + 1;
            if below < g[i] {
                g[i] = below;
            }
        }
    }

    let mut out = vec![0i64; height * width];
    let mut s = vec![0usize; width];
    let mut t = vec![0i64; width];
    for y in 0..height {
        let row = &g[y * width..(y + 1) * width];
        let f = |x: i64, i: usize| (x - i as i64).pow(2) + row[i].pow(2);
        let sep = |i: usize, u: usize| {
            let (ii, uu) = (i as i64, u as i64);
            (uu * uu - ii * ii + row[u].pow(2) - row[i].pow(2)).div_euclid(2 * (uu - ii))
        };
        let mut q: isize = 0;
        s[0] = 0;
        t[0] = 0;
        for u in 1..width {
            while q >= 0 && f(t[q as usize], s[q as usize]) > f(t[q as usize], u) {
                q -= 1;
            }
            if q < 0 {
                q = 0;
                s[0] = u;
            } else {
                let w = 1 + sep(s[q as usize], u);
                if w < width as i64 {
                    q += 1;
                    s[q as usize] = u;
                    t[q as usize] = w;
                }
            }
        }
        for u in (0..width).rev() {
            out[y * width + u] = f(u as i64, s[q as usize]);
            if u as i64 == t[q as usize] {
                q -= 1;
            }
        }
    }
    Some(out)
}
