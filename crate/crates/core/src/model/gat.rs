use ndarray::{s, Array1, Array2, ArrayView1, Axis};

use super::params::GatLayerParams;
use crate::error::{Error, Result};

/// Symmetrized neighbor lists: entry 0 of every node is its self-loop (no
/// edge feature); each edge then appears once at each endpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct Adjacency {
    pub entries: Vec<Vec<(usize, Option<usize>)>>,
}

impl Adjacency {
    pub fn new(n_nodes: usize, edges: &[(usize, usize)]) -> Self {
        let mut entries: Vec<Vec<(usize, Option<usize>)>> =
            (0..n_nodes).map(|i| vec![(i, None)]).collect();
        for (e, &(src, dst)) in edges.iter().enumerate() {
            entries[dst].push((src, Some(e)));
            entries[src].push((dst, Some(e)));
        }
        Adjacency { entries }
    }
}

pub(crate) struct LayerCache {
    input: Array2<f64>,
    z: Array2<f64>,
    f: Array2<f64>,
    logits: Vec<Vec<f64>>,
    alpha: Vec<Vec<f64>>,
    pre: Array2<f64>,
}

fn leaky(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}

pub(crate) fn layer_forward(
    x: &Array2<f64>,
    eps: &Array2<f64>,
    adj: &Adjacency,
    p: &GatLayerParams,
    slope: f64,
) -> Result<(Array2<f64>, LayerCache)> {
    let d = p.w.ncols();
    if x.ncols() != p.w.nrows() || eps.ncols() != p.w_edge.nrows() || p.attn.len() != 3 * d {
        return Err(Error::Shape(format!(
            "GAT layer expects node width {} and edge width {}, got {} and {}",
            p.w.nrows(),
            p.w_edge.nrows(),
            x.ncols(),
            eps.ncols()
        )));
    }
    let z = x.dot(&p.w);
    let f = eps.dot(&p.w_edge);
    let a_self = p.attn.slice(s![..d]);
    let a_nbr = p.attn.slice(s![d..2 * d]);
    let a_edge = p.attn.slice(s![2 * d..]);
    let z_self = z.dot(&a_self);
    let z_nbr = z.dot(&a_nbr);
    let f_edge = f.dot(&a_edge);

    let n = x.nrows();
    let mut pre = Array2::zeros((n, d));
    let mut logits = Vec::with_capacity(n);
    let mut alpha = Vec::with_capacity(n);
    for (i, nbrs) in adj.entries.iter().enumerate() {
        let s: Vec<f64> = nbrs
            .iter()
            .map(|&(j, e)| z_self[i] + z_nbr[j] + e.map_or(0.0, |e| f_edge[e]))
            .collect();
        let act: Vec<f64> = s.iter().map(|&v| leaky(v, slope)).collect();
        let max = act.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = act.iter().map(|v| (v - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        let a: Vec<f64> = exps.iter().map(|v| v / total).collect();
        let mut row = pre.row_mut(i);
        for (&(j, e), &w) in nbrs.iter().zip(&a) {
            row.scaled_add(w, &z.row(j));
            if let Some(e) = e {
                row.scaled_add(w, &f.row(e));
            }
        }
        logits.push(s);
        alpha.push(a);
    }
    let out = pre.mapv(|v| v.max(0.0));
    Ok((
        out,
        LayerCache {
            input: x.clone(),
            z,
            f,
            logits,
            alpha,
            pre,
        },
    ))
}

/// Returns (d input, d edge features) and accumulates into `grad`.
pub(crate) fn layer_backward(
    cache: &LayerCache,
    eps: &Array2<f64>,
    adj: &Adjacency,
    p: &GatLayerParams,
    slope: f64,
    d_out: &Array2<f64>,
    grad: &mut GatLayerParams,
) -> (Array2<f64>, Array2<f64>) {
    let d = p.w.ncols();
    let a_self = p.attn.slice(s![..d]);
    let a_nbr = p.attn.slice(s![d..2 * d]);
    let a_edge = p.attn.slice(s![2 * d..]);
    let (z, f) = (&cache.z, &cache.f);
    let n = z.nrows();
    let m = f.nrows();

    let mut d_pre = d_out.clone();
    d_pre.zip_mut_with(&cache.pre, |g, &v| {
        if v <= 0.0 {
            *g = 0.0
        }
    });

    let mut dz = Array2::<f64>::zeros((n, d));
    let mut df = Array2::<f64>::zeros((m, d));
    // coefficients of a_self / a_nbr / a_edge in the logit gradients
    let mut c_self = Array1::<f64>::zeros(n);
    let mut c_nbr = Array1::<f64>::zeros(n);
    let mut c_edge = Array1::<f64>::zeros(m);

    for (i, nbrs) in adj.entries.iter().enumerate() {
        let dp = d_pre.row(i);
        if dp.iter().all(|&v| v == 0.0) {
            continue;
        }
        let alpha = &cache.alpha[i];
        let mut d_alpha = Vec::with_capacity(nbrs.len());
        for (&(j, e), &a) in nbrs.iter().zip(alpha) {
            let mut da = dp.dot(&z.row(j));
            dz.row_mut(j).scaled_add(a, &dp);
            if let Some(e) = e {
                da += dp.dot(&f.row(e));
                df.row_mut(e).scaled_add(a, &dp);
            }
            d_alpha.push(da);
        }
        let mean: f64 = alpha.iter().zip(&d_alpha).map(|(a, da)| a * da).sum();
        for (k, &(j, e)) in nbrs.iter().enumerate() {
            let d_logit = alpha[k] * (d_alpha[k] - mean);
            let ds = if cache.logits[i][k] > 0.0 {
                d_logit
            } else {
                slope * d_logit
            };
            c_self[i] += ds;
            c_nbr[j] += ds;
            if let Some(e) = e {
                c_edge[e] += ds;
            }
        }
    }

    add_outer(&mut dz, &c_self, &a_self);
    add_outer(&mut dz, &c_nbr, &a_nbr);
    add_outer(&mut df, &c_edge, &a_edge);

    {
        let mut g_attn = grad.attn.view_mut();
        let (mut g_self, rest) = g_attn.view_mut().split_at(Axis(0), d);
        let (mut g_nbr, mut g_edge) = rest.split_at(Axis(0), d);
        g_self += &z.t().dot(&c_self);
        g_nbr += &z.t().dot(&c_nbr);
        g_edge += &f.t().dot(&c_edge);
    }
    grad.w += &cache.input.t().dot(&dz);
    grad.w_edge += &eps.t().dot(&df);
    let dx = dz.dot(&p.w.t());
    let d_eps = df.dot(&p.w_edge.t());
    (dx, d_eps)
}

fn add_outer(target: &mut Array2<f64>, col: &Array1<f64>, row: &ArrayView1<f64>) {
    for (i, &c) in col.iter().enumerate() {
        if c != 0.0 {
            target.row_mut(i).scaled_add(c, row);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GatOutput {
    pub states: Array2<f64>,
    /// attention[layer][node][k] over the node's neighbor entries.
    pub attention: Vec<Vec<Vec<f64>>>,
}

/// Runs the layers in sequence. Every layer sees the same edge features.
pub fn gat_forward(
    node_feats: &Array2<f64>,
    edges: &[(usize, usize)],
    edge_feats: &Array2<f64>,
    layers: &[GatLayerParams],
    slope: f64,
) -> Result<GatOutput> {
    check_graph(node_feats.nrows(), edges, edge_feats.nrows())?;
    let adj = Adjacency::new(node_feats.nrows(), edges);
    let mut h = node_feats.clone();
    let mut attention = Vec::with_capacity(layers.len());
    for p in layers {
        let (out, cache) = layer_forward(&h, edge_feats, &adj, p, slope)?;
        attention.push(cache.alpha);
        h = out;
    }
    Ok(GatOutput {
        states: h,
        attention,
    })
}

pub(crate) fn check_graph(n: usize, edges: &[(usize, usize)], n_edge_feats: usize) -> Result<()> {
    if edges.len() != n_edge_feats {
        return Err(Error::Shape(format!(
            "{} edges but {} edge feature rows",
            edges.len(),
            n_edge_feats
        )));
    }
    if let Some(&(s, t)) = edges.iter().find(|&&(s, t)| s >= n || t >= n) {
        return Err(Error::Shape(format!("edge {s}->{t} outside {n} nodes")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelConfig, ModelParams, Mode};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn layers(d_node: usize, d_out: usize, n: usize, seed: u64) -> Vec<GatLayerParams> {
        let mut c = ModelConfig::new(Mode::Teg, d_node, 1);
        c.d_out = d_out;
        c.n_gat_layers = n;
        ModelParams::init(&c, seed).gat.remove(0)
    }

    #[test]
    fn isolated_node_attends_to_itself() {
        let x = Array2::from_shape_vec((1, 3), vec![0.3, -0.2, 1.0]).unwrap();
        let out = gat_forward(&x, &[], &Array2::zeros((0, 3)), &layers(3, 4, 2, 1), 0.2).unwrap();
        for layer in &out.attention {
            assert_eq!(layer[0], vec![1.0]);
        }
    }

    #[test]
    fn symmetric_pair_gets_identical_states() {
        let x = Array2::from_shape_vec((2, 3), vec![0.5, 0.1, -0.4, 0.5, 0.1, -0.4]).unwrap();
        let eps = Array2::from_shape_vec((1, 3), vec![0.2, 0.2, 0.9]).unwrap();
        let out = gat_forward(&x, &[(0, 1)], &eps, &layers(3, 5, 2, 4), 0.2).unwrap();
        assert_eq!(out.states.row(0), out.states.row(1));
    }

    #[test]
    fn attention_rows_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for trial in 0..20 {
            let n = 10;
            let edges: Vec<(usize, usize)> = (0..rng.gen_range(0..25))
                .map(|_| (rng.gen_range(0..n), rng.gen_range(0..n)))
                .collect();
            let x = Array2::from_shape_simple_fn((n, 4), || rng.gen_range(-1.0..1.0));
            let eps = Array2::from_shape_simple_fn((edges.len(), 4), || rng.gen_range(-1.0..1.0));
            let out = gat_forward(&x, &edges, &eps, &layers(4, 6, 2, trial), 0.2).unwrap();
            for layer in &out.attention {
                for row in layer {
                    assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let x = Array2::zeros((2, 3));
        let bad = gat_forward(&x, &[(0, 1)], &Array2::zeros((1, 3)), &layers(4, 5, 1, 0), 0.2);
        assert!(matches!(bad, Err(Error::Shape(_))));
        let dangling = gat_forward(&x, &[(0, 7)], &Array2::zeros((1, 3)), &layers(3, 5, 1, 0), 0.2);
        assert!(matches!(dangling, Err(Error::Shape(_))));
    }
}
