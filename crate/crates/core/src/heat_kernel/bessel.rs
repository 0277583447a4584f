//! Exponentially scaled modified Bessel functions e^{−r} I_n(r).

use crate::error::{Error, Result};

/// Below this argument the power series is cheaper and fully accurate.
const SERIES_MAX_R: f64 = 2.0;
const RESCALE_AT: f64 = 1e200;
const RESCALE_BY: f64 = 1e-200;

/// e^{−r} I_n(r) for integer n (I_{−n} = I_n) and r ≥ 0.
pub fn scaled_bessel_i(n: i64, r: f64) -> Result<f64> {
    let n = n.unsigned_abs() as usize;
    Ok(scaled_bessel_sequence(n, r)?[n])
}

/// e^{−r} I_k(r) for k = 0..=n_max.
///
/// Miller's backward recurrence I_{k−1} = I_{k+1} + (2k/r) I_k, normalised
/// with e^{−r}(I_0 + 2Σ_{k≥1} I_k) = 1 so that no separate I_0 is needed.
pub fn scaled_bessel_sequence(n_max: usize, r: f64) -> Result<Vec<f64>> {
    if !(r >= 0.0 && r.is_finite()) {
        return Err(Error::InvalidArgument(format!("Bessel argument must be finite and ≥ 0, got {r}")));
    }
    if r == 0.0 {
        let mut out = vec![0.0; n_max + 1];
        out[0] = 1.0;
        return Ok(out);
    }
    if r <= SERIES_MAX_R {
        return Ok(series_sequence(n_max, r));
    }
    Ok(miller_sequence(n_max, r))
}

fn series_sequence(n_max: usize, r: f64) -> Vec<f64> {
    let half = 0.5 * r;
    let q = 0.25 * r * r;
    let mut lead = (-r).exp(); // e^{−r}(r/2)^k / k!
    let mut out = Vec::with_capacity(n_max + 1);
    for k in 0..=n_max {
        if k > 0 {
            lead *= half / k as f64;
        }
        if lead == 0.0 {
            out.resize(n_max + 1, 0.0);
            break;
        }
        let mut term = 1.0;
        let mut sum = 1.0;
        for i in 1..200 {
            term *= q / (i as f64 * (k + i) as f64);
            sum += term;
            if term < 1e-18 * sum {
                break;
            }
        }
        out.push(lead * sum);
    }
    out
}

fn miller_sequence(n_max: usize, r: f64) -> Vec<f64> {
    // The start index must lie beyond both n_max and the bulk of the
    // normalisation sum (width ~ √r), with enough room for the spurious
    // K_k component to die out.
    let nf = n_max as f64;
    let start = (nf * nf + 100.0 * r).sqrt().ceil() as usize + 50;
    let start = start.max(n_max + 50);

    let mut stored = vec![0.0; n_max + 1];
    let mut stored_scale = vec![0u32; n_max + 1];
    let mut scale = 0u32;
    let two_over_r = 2.0 / r;

    let mut next = 0.0; // i_{k+1}
    let mut cur = 1.0; // i_k
    let mut sum = 0.0; // 2Σ_{j≥k+1} i_j (+ i_0 at the end)
    for k in (1..=start).rev() {
        if k <= n_max {
            stored[k] = cur;
            stored_scale[k] = scale;
        }
        sum += 2.0 * cur;
        let prev = next + two_over_r * k as f64 * cur;
        next = cur;
        cur = prev;
        if cur > RESCALE_AT {
            cur *= RESCALE_BY;
            next *= RESCALE_BY;
            sum *= RESCALE_BY;
            scale += 1;
        }
    }
    stored[0] = cur;
    stored_scale[0] = scale;
    sum += cur;

    stored
        .iter()
        .zip(&stored_scale)
        .map(|(&v, &s)| {
            let lag = scale - s;
            if lag == 0 {
                v / sum
            } else if lag > 2 {
                0.0
            } else {
                v * RESCALE_BY.powi(lag as i32) / sum
            }
        })
        .collect()
}
