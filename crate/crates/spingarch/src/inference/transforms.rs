//! Unconstrained reparameterizations used by the sampler.
//!
//! * scales: `sigma = exp(w)`, log-Jacobian `w`;
//! * feedback pair: `s = logit(eta + kappa)`, `r = logit(eta / (eta + kappa))`,
//!   which maps the open triangle `{eta, kappa >= 0, eta + kappa < 1}` onto
//!   the plane; the log-Jacobian is `log u + log u(1-u) + log v(1-v)` with
//!   `u = sigmoid(s)`, `v = sigmoid(r)`;
//! * bounded interval: `zeta = lo + (hi - lo) * sigmoid(w)`.

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Feedback pair in natural space plus everything the chain rule needs.
#[derive(Debug, Clone, Copy)]
pub struct FeedbackPoint {
    pub eta: f64,
    pub kappa: f64,
    /// d(eta,kappa)/d(s,r) entries.
    pub deta_ds: f64,
    pub dkappa_ds: f64,
    pub deta_dr: f64,
    pub dkappa_dr: f64,
    /// log |Jacobian| and its partials.
    pub log_jac: f64,
    pub dlogjac_ds: f64,
    pub dlogjac_dr: f64,
}

pub fn feedback_from_unconstrained(s: f64, r: f64) -> FeedbackPoint {
    let u = sigmoid(s);
    let v = sigmoid(r);
    let du = u * (1.0 - u);
    let dv = v * (1.0 - v);
    FeedbackPoint {
        eta: u * v,
        kappa: u * (1.0 - v),
        deta_ds: du * v,
        dkappa_ds: du * (1.0 - v),
        deta_dr: u * dv,
        dkappa_dr: -u * dv,
        log_jac: u.ln() + du.ln() + dv.ln(),
        dlogjac_ds: 2.0 * (1.0 - u) - u,
        dlogjac_dr: 1.0 - 2.0 * v,
    }
}

pub fn feedback_to_unconstrained(eta: f64, kappa: f64) -> (f64, f64) {
    let total = eta + kappa;
    (logit(total), logit(eta / total))
}

/// Bounded-interval point for the spatial-dependence parameter.
#[derive(Debug, Clone, Copy)]
pub struct IntervalPoint {
    pub value: f64,
    pub dvalue_dw: f64,
    pub log_jac: f64,
    pub dlogjac_dw: f64,
}

pub fn interval_from_unconstrained(w: f64, lo: f64, hi: f64) -> IntervalPoint {
    let v = sigmoid(w);
    let width = hi - lo;
    IntervalPoint {
        value: lo + width * v,
        dvalue_dw: width * v * (1.0 - v),
        log_jac: width.ln() + (v * (1.0 - v)).ln(),
        dlogjac_dw: 1.0 - 2.0 * v,
    }
}

pub fn interval_to_unconstrained(value: f64, lo: f64, hi: f64) -> f64 {
    logit((value - lo) / (hi - lo))
}
