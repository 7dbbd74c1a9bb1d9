//! Literal-formula reference implementations, written without the library's helpers.
#![allow(dead_code)]

pub fn gamma_half_integer(x: f64) -> f64 {
    // Valid for positive integers and half-integers.
    if (x - 1.0).abs() < 1e-12 {
        return 1.0;
    }
    if (x - 0.5).abs() < 1e-12 {
        return std::f64::consts::PI.sqrt();
    }
    (x - 1.0) * gamma_half_integer(x - 1.0)
}

pub fn student_pdf(t: f64, df: f64) -> f64 {
    let c = gamma_half_integer((df + 1.0) / 2.0) / ((df * std::f64::consts::PI).sqrt() * gamma_half_integer(df / 2.0));
    c * (1.0 + t * t / df).powf(-(df + 1.0) / 2.0)
}

pub fn normal_pdf(z: f64) -> f64 {
    (-z * z / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let x = a + i as f64 * h;
        s += if i % 2 == 1 { 4.0 * f(x) } else { 2.0 * f(x) };
    }
    s * h / 3.0
}

pub struct Oracle {
    pub t: f64,
    pub p: f64,
    pub d: f64,
    pub w: f64,
    pub wp: f64,
}

pub fn oracle(xs: &[f64], ys: &[f64]) -> Oracle {
    let n = xs.len();
    let diffs: Vec<f64> = (0..n).map(|i| xs[i] - ys[i]).collect();
    let mut sum = 0.0;
    for d in &diffs {
        sum += d;
    }
    let mean = sum / n as f64;
    let mut ss = 0.0;
    for d in &diffs {
        ss += (d - mean) * (d - mean);
    }
    let sd = (ss / (n as f64 - 1.0)).sqrt();
    let t = mean / (sd / (n as f64).sqrt());
    let df = n as f64 - 1.0;
    let inner = simpson(|x| student_pdf(x, df), 0.0, t.abs(), 200_000);
    let p = 1.0 - 2.0 * inner;

    let nz: Vec<f64> = diffs.iter().copied().filter(|d| *d != 0.0).collect();
    let ranks: Vec<f64> = nz
        .iter()
        .map(|d| {
            let less = nz.iter().filter(|o| o.abs() < d.abs()).count() as f64;
            let equal = nz.iter().filter(|o| o.abs() == d.abs()).count() as f64;
            less + (equal + 1.0) / 2.0
        })
        .collect();
    let m = nz.len();
    let w_plus: f64 = (0..m).filter(|&i| nz[i] > 0.0).map(|i| ranks[i]).sum();
    let w_minus: f64 = (0..m).filter(|&i| nz[i] < 0.0).map(|i| ranks[i]).sum();
    let w = w_plus.min(w_minus);
    // Brute force over all sign assignments.
    let mut hits = 0u64;
    for mask in 0u64..(1 << m) {
        let s: f64 = (0..m).filter(|i| mask & (1 << i) != 0).map(|i| ranks[i]).sum();
        if s <= w + 1e-9 {
            hits += 1;
        }
    }
    let wp = (2.0 * hits as f64 / (1u64 << m) as f64).min(1.0);
    Oracle {
        t,
        p,
        d: mean / sd,
        w,
        wp,
    }
}

pub const DATASETS: [([f64; 10], [f64; 10]); 3] = [
    (
        [0.95, 0.91, 0.97, 0.88, 0.93, 0.99, 0.90, 0.94, 0.96, 0.92],
        [0.62, 0.70, 0.58, 0.75, 0.66, 0.71, 0.60, 0.69, 0.73, 0.64],
    ),
    (
        [3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0, 5.0, 3.0],
        [2.0, 7.0, 1.0, 8.0, 2.0, 8.0, 1.0, 8.0, 2.0, 8.0],
    ),
    // Tied magnitudes and one zero difference.
    (
        [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0],
        [0.5, 2.5, 2.0, 4.0, 4.0, 7.0, 6.5, 7.0, 10.5, 8.0],
    ),
];

