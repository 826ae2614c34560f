//! Smooth cut-off functions shared by every localization operator.
//!
//! `chi` is an even bump equal to one on `[-1, 1]` and vanishing outside
//! `[-2, 2]`. The transition is built from the classical `exp(-1/t)` smooth
//! step, so `chi` is C-infinity. `psi(x) = chi(x) - chi(2x)` is supported in
//! `1/2 <= |x| <= 2` and the dyadic family `psi(x / N)` telescopes against `chi`.

/// `exp(-1/t)` for `t > 0`, zero otherwise.
fn flat(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else {
        (-1.0 / t).exp()
    }
}

/// Smooth monotone step: 0 for `t <= 0`, 1 for `t >= 1`.
pub fn smooth_step(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        let a = flat(t);
        a / (a + flat(1.0 - t))
    }
}

/// The bump `chi`.
pub fn chi(x: f64) -> f64 {
    smooth_step(2.0 - x.abs())
}

/// `psi(x) = chi(x) - chi(2x)`.
pub fn psi(x: f64) -> f64 {
    chi(x) - chi(2.0 * x)
}

/// Dyadic piece `psi_N(r) = psi(r / N)` for `N >= 1`, and the core `chi(r)` for `N = 0`.
pub fn dyadic_weight(r: f64, n: u64) -> f64 {
    if n == 0 {
        chi(r)
    } else {
        psi(r / n as f64)
    }
}

/// Equidistant partition of unity on the real line:
/// `beta_j(t) = chi(t - j) / sum_k chi(t - k)`.
pub fn beta(j: i64, t: f64) -> f64 {
    let num = chi(t - j as f64);
    if num == 0.0 {
        return 0.0;
    }
    num / chi_comb(t)
}

/// `sum_k chi(t - k)`; at most four terms are non-zero and the sum is at least one.
fn chi_comb(t: f64) -> f64 {
    let base = t.floor() as i64;
    (base - 2..=base + 3).map(|k| chi(t - k as f64)).sum()
}

/// Indices `j` with `beta_j(t) > 0`, paired with their weights.
pub fn beta_support(t: f64) -> Vec<(i64, f64)> {
    let base = t.floor() as i64;
    let comb = chi_comb(t);
    (base - 2..=base + 3)
        .filter_map(|k| {
            let w = chi(t - k as f64);
            (w > 0.0).then(|| (k, w / comb))
        })
        .collect()
}
