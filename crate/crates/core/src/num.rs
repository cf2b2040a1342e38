/// Numerically stable log(1 + e^x).
///
/// Branches at |x| = 30: above, e^-x underflows the naive form, so compute
/// x + log1p(e^-x); below -30, log1p(e^x) rounds to e^x itself.
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp().ln_1p()
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

/// Logistic function. Saturates cleanly at 0 and 1 for large |x|.
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}
