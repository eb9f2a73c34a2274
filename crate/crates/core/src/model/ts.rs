use ndarray::{Array1, Array2, ArrayView1, Axis};

use super::params::TsParams;

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Relevance μ ∈ (0, 1) of one retrieved triple to the document text.
pub fn ts_score(text: ArrayView1<f64>, triple: ArrayView1<f64>, p: &TsParams) -> f64 {
    let u = text.dot(&p.p_text).mapv(|v| v.max(0.0)).dot(&p.p_shared);
    let v = triple.dot(&p.p_triple).mapv(|v| v.max(0.0)).dot(&p.p_shared);
    sigmoid(u.dot(&v))
}

pub(crate) struct TsCache {
    u: Array1<f64>,
    pu: Array1<f64>,
    v: Array2<f64>,
    pv: Array2<f64>,
    pub(crate) mu: Vec<f64>,
}

pub(crate) fn ts_forward(text: ArrayView1<f64>, triples: &Array2<f64>, p: &TsParams) -> TsCache {
    let u = text.dot(&p.p_text).mapv(|v| v.max(0.0));
    let pu = u.dot(&p.p_shared);
    let v = triples.dot(&p.p_triple).mapv(|v| v.max(0.0));
    let pv = v.dot(&p.p_shared);
    let mu = pv.dot(&pu).iter().map(|&s| sigmoid(s)).collect();
    TsCache { u, pu, v, pv, mu }
}

/// Scores every row of `triples` against `text`.
pub fn ts_scores(text: ArrayView1<f64>, triples: &Array2<f64>, p: &TsParams) -> Vec<f64> {
    ts_forward(text, triples, p).mu
}

/// Accumulates parameter gradients given dL/dμ. Text and triple features are
/// frozen, so no input gradient is returned.
pub(crate) fn ts_backward(
    cache: &TsCache,
    text: ArrayView1<f64>,
    triples: &Array2<f64>,
    p: &TsParams,
    d_mu: &[f64],
    grad: &mut TsParams,
) {
    let ds: Array1<f64> = cache
        .mu
        .iter()
        .zip(d_mu)
        .map(|(&m, &g)| g * m * (1.0 - m))
        .collect();
    if ds.iter().all(|&x| x == 0.0) {
        return;
    }
    let d_pu = cache.pv.t().dot(&ds);
    let d_pv = ds
        .view()
        .insert_axis(Axis(1))
        .dot(&cache.pu.view().insert_axis(Axis(0)));

    grad.p_shared += &cache
        .u
        .view()
        .insert_axis(Axis(1))
        .dot(&d_pu.view().insert_axis(Axis(0)));
    grad.p_shared += &cache.v.t().dot(&d_pv);

    let mut du = p.p_shared.dot(&d_pu);
    du.zip_mut_with(&cache.u, |g, &x| {
        if x <= 0.0 {
            *g = 0.0
        }
    });
    let mut dv = d_pv.dot(&p.p_shared.t());
    dv.zip_mut_with(&cache.v, |g, &x| {
        if x <= 0.0 {
            *g = 0.0
        }
    });
    grad.p_text += &text
        .insert_axis(Axis(1))
        .dot(&du.view().insert_axis(Axis(0)));
    grad.p_triple += &triples.t().dot(&dv);
}
