//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use num_complex::Complex64;
use qsens_core::spr_optics::LayerStack;

/// Exhaustive greedy matcher: every herald, in order, scans the whole probe
/// stream for the first unmatched event inside `[t_a, t_a + window]`.
pub fn brute_force_matching(a: &[u64], b: &[u64], window: u64) -> Vec<(usize, usize)> {
    let mut used = vec![false; b.len()];
    let mut pairs = Vec::new();
    for (ia, &ta) in a.iter().enumerate() {
        for (ib, &tb) in b.iter().enumerate() {
            if !used[ib] && tb >= ta && tb - ta <= window {
                used[ib] = true;
                pairs.push((ia, ib));
                break;
            }
        }
    }
    pairs
}

/// The exhaustive matcher run separately on each cluster of the merged
/// timeline. Clusters are split wherever consecutive events are more than
/// `window` apart, which no pair can straddle, so the result is identical to
/// [`brute_force_matching`] on the full streams.
pub fn clustered_brute_force_matching(a: &[u64], b: &[u64], window: u64) -> Vec<(usize, usize)> {
    let mut merged: Vec<(u64, bool, usize)> = a
        .iter()
        .enumerate()
        .map(|(i, &t)| (t, false, i))
        .chain(b.iter().enumerate().map(|(i, &t)| (t, true, i)))
        .collect();
    merged.sort_unstable();
    let mut pairs = Vec::new();
    let mut start = 0;
    while start < merged.len() {
        let mut end = start + 1;
        while end < merged.len() && merged[end].0 - merged[end - 1].0 <= window {
            end += 1;
        }
        let cluster = &merged[start..end];
        let ca: Vec<(u64, usize)> = cluster.iter().filter(|e| !e.1).map(|e| (e.0, e.2)).collect();
        let mut cb: Vec<(u64, usize)> = cluster.iter().filter(|e| e.1).map(|e| (e.0, e.2)).collect();
        cb.sort_unstable_by_key(|e| e.1);
        let mut ca_sorted = ca;
        ca_sorted.sort_unstable_by_key(|e| e.1);
        let ta: Vec<u64> = ca_sorted.iter().map(|e| e.0).collect();
        let tb: Vec<u64> = cb.iter().map(|e| e.0).collect();
        for (ia, ib) in brute_force_matching(&ta, &tb, window) {
            pairs.push((ca_sorted[ia].1, cb[ib].1));
        }
        start = end;
    }
    pairs.sort_unstable();
    pairs
}

fn decaying_sqrt(z: Complex64) -> Complex64 {
    let q = z.sqrt();
    if q.im < 0.0 || (q.im == 0.0 && q.re < 0.0) {
        -q
    } else {
        q
    }
}

/// p-polarised reflectance by the interface (Airy) recursion
/// `r_j = (r_j,j+1 + r_j+1 e^{2i b}) / (1 + r_j,j+1 r_j+1 e^{2i b})`,
/// summed from the analyte side back to the prism.
pub fn airy_reflectance(stack: &LayerStack, theta: f64) -> f64 {
    let k0 = 2.0 * std::f64::consts::PI / stack.wavelength_nm;
    let n_sin = stack.prism_index * theta.sin();
    let mut eps = vec![Complex64::from(stack.prism_index.powi(2))];
    let mut thick = vec![0.0];
    for l in &stack.layers {
        eps.push(l.permittivity);
        thick.push(l.thickness_nm);
    }
    eps.push(Complex64::from(stack.analyte_index.powi(2)));
    thick.push(0.0);
    let kz: Vec<Complex64> = eps.iter().map(|&e| decaying_sqrt(e - n_sin * n_sin)).collect();
    let fresnel = |j: usize| {
        let (p, q) = (eps[j + 1] * kz[j], eps[j] * kz[j + 1]);
        (p - q) / (p + q)
    };
    let last = eps.len() - 2;
    let mut r = fresnel(last);
    for j in (0..last).rev() {
        let phase = (Complex64::i() * 2.0 * kz[j + 1] * k0 * thick[j + 1]).exp();
        let rj = fresnel(j);
        r = (rj + r * phase) / (1.0 + rj * r * phase);
    }
    r.norm_sqr()
}

/// Classical fourth-order Runge-Kutta for the bound fraction of the
/// two-state model `d theta/dt = ka L0 (1 - theta) - kd theta`.
pub fn rk4_bound_fraction(ka: f64, kd: f64, l0: f64, t_end: f64, steps: usize) -> f64 {
    let f = |th: f64| ka * l0 * (1.0 - th) - kd * th;
    let h = t_end / steps as f64;
    let mut th = 0.0;
    for _ in 0..steps {
        let k1 = f(th);
        let k2 = f(th + 0.5 * h * k1);
        let k3 = f(th + 0.5 * h * k2);
        let k4 = f(th + h * k3);
        th += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    th
}

/// Exact Binomial(n, p) probability mass.
pub fn binomial_pmf(n: u64, p: f64, k: u64) -> f64 {
    let ln_choose = ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k);
    let (kf, nf) = (k as f64, n as f64);
    let ln_p = if p == 0.0 { if k == 0 { 0.0 } else { f64::NEG_INFINITY } } else { kf * p.ln() };
    let ln_q = if p == 1.0 { if k == n { 0.0 } else { f64::NEG_INFINITY } } else { (nf - kf) * (1.0 - p).ln() };
    (ln_choose + ln_p + ln_q).exp()
}

fn ln_factorial(n: u64) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}
