use ndarray::{s, Array1, Array2, ArrayView1, Axis};
use rayon::prelude::*;

use super::gat::{check_graph, layer_backward, layer_forward, Adjacency, LayerCache};
use super::input::{Example, GraphInput};
use super::params::{HeadParams, ModelParams};
use super::ts::{ts_backward, ts_forward, TsCache};
use super::ModelConfig;
use crate::error::{Error, Result};

/// How retrieved elements are scaled before message passing.
#[derive(Debug, Clone, PartialEq)]
pub enum Gate {
    /// μ from the model's triple-selection blocks; no scaling when disabled.
    Learned,
    /// Caller-supplied μ per active channel and group.
    Fixed(Vec<Vec<f64>>),
}

/// Scales added node and edge features by their relevance scores.
pub fn apply_ts(input: &GraphInput, mu: &[f64]) -> Result<(Array2<f64>, Array2<f64>)> {
    let lookup = |g: usize| -> Result<f64> {
        mu.get(g)
            .copied()
            .ok_or_else(|| Error::Internal(format!("no relevance score for ts_group {g}")))
    };
    let mut nodes = input.node_feats.clone();
    for (i, groups) in input.node_groups.iter().enumerate() {
        if groups.is_empty() {
            continue;
        }
        let mut total = 0.0;
        for &g in groups {
            total += lookup(g)?;
        }
        let scale = total / groups.len() as f64;
        nodes.row_mut(i).mapv_inplace(|v| v * scale);
    }
    let mut edges = input.edge_feats.clone();
    for (e, group) in input.edge_group.iter().enumerate() {
        if let Some(g) = group {
            let scale = lookup(*g)?;
            edges.row_mut(e).mapv_inplace(|v| v * scale);
        }
    }
    Ok((nodes, edges))
}

/// [elementwise max ‖ elementwise mean] over node states; zeros when empty.
pub fn pool(states: &Array2<f64>) -> Array1<f64> {
    pool_with_argmax(states).0
}

fn pool_with_argmax(states: &Array2<f64>) -> (Array1<f64>, Vec<usize>) {
    let (n, d) = states.dim();
    let mut out = Array1::zeros(2 * d);
    let mut argmax = vec![0; d];
    if n == 0 {
        return (out, argmax);
    }
    for c in 0..d {
        let col = states.column(c);
        let mut best = 0;
        for r in 1..n {
            if col[r] > col[best] {
                best = r;
            }
        }
        argmax[c] = best;
        out[c] = col[best];
        out[d + c] = col.sum() / n as f64;
    }
    (out, argmax)
}

/// Everything observable about one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub probs: Array1<f64>,
    pub logits: Array1<f64>,
    /// One pooled vector per active channel.
    pub pooled: Vec<Array1<f64>>,
    /// μ per active channel and group; empty when nothing was gated.
    pub mu: Vec<Vec<f64>>,
    /// Gated node features per active channel.
    pub node_feats: Vec<Array2<f64>>,
    /// Gated edge features per active channel.
    pub edge_feats: Vec<Array2<f64>>,
}

struct ChannelCache {
    graph: usize,
    ts: Option<TsCache>,
    mu: Option<Vec<f64>>,
    node_feats: Array2<f64>,
    edge_feats: Array2<f64>,
    adj: Adjacency,
    layers: Vec<LayerCache>,
    n_nodes: usize,
    argmax: Vec<usize>,
}

struct HeadCache {
    input: Array1<f64>,
    hidden_pre: Array1<f64>,
    hidden: Array1<f64>,
    logits: Array1<f64>,
    probs: Array1<f64>,
}

fn check_example(ex: &Example, config: &ModelConfig) -> Result<()> {
    let want = config.mode.graph_count();
    if ex.graphs.len() != want {
        return Err(Error::Config(format!(
            "mode {} needs {want} graph(s) per document, {} has {}",
            config.mode.as_str(),
            ex.doc_id,
            ex.graphs.len()
        )));
    }
    if ex.text.len() != config.d_text {
        return Err(Error::Shape(format!(
            "text vector of {} has width {}, expected {}",
            ex.doc_id,
            ex.text.len(),
            config.d_text
        )));
    }
    if ex.label > 1 {
        return Err(Error::Validation(format!(
            "label index {} of {} is not binary",
            ex.label, ex.doc_id
        )));
    }
    Ok(())
}

fn softmax(logits: &Array1<f64>) -> Array1<f64> {
    let max = logits.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let exps = logits.mapv(|v| (v - max).exp());
    let total = exps.sum();
    exps / total
}

fn head_forward(x: Array1<f64>, head: &HeadParams) -> Result<HeadCache> {
    if x.len() != head.w1.nrows() {
        return Err(Error::Shape(format!(
            "head expects input width {}, got {}",
            head.w1.nrows(),
            x.len()
        )));
    }
    let hidden_pre = x.dot(&head.w1) + &head.b1;
    let hidden = hidden_pre.mapv(|v| v.max(0.0));
    let logits = hidden.dot(&head.w2) + &head.b2;
    let probs = softmax(&logits);
    Ok(HeadCache {
        input: x,
        hidden_pre,
        hidden,
        logits,
        probs,
    })
}

fn channel_forward(
    ex: &Example,
    config: &ModelConfig,
    params: &ModelParams,
    slot: usize,
    graph: usize,
    gate: &Gate,
) -> Result<(Array1<f64>, ChannelCache)> {
    let input = &ex.graphs[graph];
    check_graph(input.n_nodes(), &input.edges, input.edge_feats.nrows())?;
    let (ts, mu) = match gate {
        Gate::Fixed(all) => {
            let mu = all.get(slot).cloned().ok_or_else(|| {
                Error::Internal(format!("no fixed relevance scores for channel {slot}"))
            })?;
            (None, Some(mu))
        }
        Gate::Learned if config.ts_enabled => {
            let ts_params = params.ts.get(slot).ok_or_else(|| {
                Error::Internal(format!("no triple-selection block for channel {slot}"))
            })?;
            let cache = ts_forward(ex.text.view(), &input.triple_feats, ts_params);
            let mu = cache.mu.clone();
            (Some(cache), Some(mu))
        }
        Gate::Learned => (None, None),
    };
    let (node_feats, edge_feats) = match &mu {
        Some(mu) => apply_ts(input, mu)?,
        None => (input.node_feats.clone(), input.edge_feats.clone()),
    };
    let adj = Adjacency::new(input.n_nodes(), &input.edges);
    let mut h = node_feats.clone();
    let mut layers = Vec::with_capacity(params.gat[slot].len());
    for p in &params.gat[slot] {
        let (out, cache) = layer_forward(&h, &edge_feats, &adj, p, config.leaky_slope)?;
        layers.push(cache);
        h = out;
    }
    let (pooled, argmax) = pool_with_argmax(&h);
    Ok((
        pooled,
        ChannelCache {
            graph,
            ts,
            mu,
            node_feats,
            edge_feats,
            adj,
            layers,
            n_nodes: h.nrows(),
            argmax,
        },
    ))
}

fn example_forward(
    ex: &Example,
    config: &ModelConfig,
    params: &ModelParams,
    gate: &Gate,
) -> Result<(HeadCache, Vec<ChannelCache>, Vec<Array1<f64>>)> {
    check_example(ex, config)?;
    let channels = config.active_channels();
    if params.gat.len() != channels.len() {
        return Err(Error::Config(format!(
            "parameters hold {} GAT stacks for {} active channels",
            params.gat.len(),
            channels.len()
        )));
    }
    let mut pooled = Vec::with_capacity(channels.len());
    let mut caches = Vec::with_capacity(channels.len());
    for (slot, &graph) in channels.iter().enumerate() {
        let (p, c) = channel_forward(ex, config, params, slot, graph, gate)?;
        pooled.push(p);
        caches.push(c);
    }
    let mut x = ex.text.to_vec();
    for p in &pooled {
        x.extend(p.iter());
    }
    let head = head_forward(Array1::from(x), &params.head)?;
    Ok((head, caches, pooled))
}

/// Class probabilities under the model's own gating.
pub fn forward(ex: &Example, config: &ModelConfig, params: &ModelParams) -> Result<Array1<f64>> {
    Ok(example_forward(ex, config, params, &Gate::Learned)?.0.probs)
}

pub fn forward_with_gate(
    ex: &Example,
    config: &ModelConfig,
    params: &ModelParams,
    gate: &Gate,
) -> Result<ForwardTrace> {
    let (head, caches, pooled) = example_forward(ex, config, params, gate)?;
    let mut mu = Vec::new();
    let mut node_feats = Vec::new();
    let mut edge_feats = Vec::new();
    for c in caches {
        if let Some(m) = c.mu {
            mu.push(m);
        }
        node_feats.push(c.node_feats);
        edge_feats.push(c.edge_feats);
    }
    Ok(ForwardTrace {
        probs: head.probs,
        logits: head.logits,
        pooled,
        mu,
        node_feats,
        edge_feats,
    })
}

/// Predicted class index (ties go to class 0).
pub fn predict(ex: &Example, config: &ModelConfig, params: &ModelParams) -> Result<usize> {
    let p = forward(ex, config, params)?;
    Ok(usize::from(p[1] > p[0]))
}

fn outer(a: ArrayView1<f64>, b: ArrayView1<f64>) -> Array2<f64> {
    a.insert_axis(Axis(1)).dot(&b.insert_axis(Axis(0)))
}

fn example_grads(
    ex: &Example,
    config: &ModelConfig,
    params: &ModelParams,
    scale: f64,
) -> Result<(f64, ModelParams)> {
    let (head, caches, _) = example_forward(ex, config, params, &Gate::Learned)?;
    let max = head.logits.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let lse = max + head.logits.mapv(|v| (v - max).exp()).sum().ln();
    let loss = lse - head.logits[ex.label];
    if !loss.is_finite() {
        return Err(Error::Numeric {
            doc: ex.doc_id.clone(),
            message: format!("cross-entropy evaluated to {loss}"),
        });
    }

    let mut grad = params.zeros_like();
    let mut d_logits = head.probs.clone();
    d_logits[ex.label] -= 1.0;
    d_logits *= scale;

    let hp = &params.head;
    grad.head.w2 += &outer(head.hidden.view(), d_logits.view());
    grad.head.b2 += &d_logits;
    let mut d_hidden = hp.w2.dot(&d_logits);
    d_hidden.zip_mut_with(&head.hidden_pre, |g, &v| {
        if v <= 0.0 {
            *g = 0.0
        }
    });
    grad.head.w1 += &outer(head.input.view(), d_hidden.view());
    grad.head.b1 += &d_hidden;
    let d_input = hp.w1.dot(&d_hidden);

    let width = config.pooled_width();
    let d_out = config.d_out;
    for (slot, cache) in caches.iter().enumerate() {
        let start = config.d_text + slot * width;
        let d_pooled = d_input.slice(s![start..start + width]);
        let n = cache.n_nodes;
        if n == 0 {
            continue;
        }
        let mut d_states = Array2::<f64>::zeros((n, d_out));
        for c in 0..d_out {
            d_states[[cache.argmax[c], c]] += d_pooled[c];
            let share = d_pooled[d_out + c] / n as f64;
            d_states.column_mut(c).mapv_inplace(|v| v + share);
        }
        let stack = &params.gat[slot];
        let mut d_eps = Array2::<f64>::zeros(cache.edge_feats.dim());
        let mut d_h = d_states;
        for l in (0..stack.len()).rev() {
            let (dx, de) = layer_backward(
                &cache.layers[l],
                &cache.edge_feats,
                &cache.adj,
                &stack[l],
                config.leaky_slope,
                &d_h,
                &mut grad.gat[slot][l],
            );
            d_eps += &de;
            d_h = dx;
        }

        if let Some(ts_cache) = &cache.ts {
            let input = &ex.graphs[cache.graph];
            let mut d_mu = vec![0.0; input.n_groups()];
            for (e, group) in input.edge_group.iter().enumerate() {
                if let Some(g) = group {
                    d_mu[*g] += d_eps.row(e).dot(&input.edge_feats.row(e));
                }
            }
            for (i, groups) in input.node_groups.iter().enumerate() {
                if groups.is_empty() {
                    continue;
                }
                let share = d_h.row(i).dot(&input.node_feats.row(i)) / groups.len() as f64;
                for &g in groups {
                    d_mu[g] += share;
                }
            }
            ts_backward(
                ts_cache,
                ex.text.view(),
                &input.triple_feats,
                &params.ts[slot],
                &d_mu,
                &mut grad.ts[slot],
            );
        }
    }
    Ok((loss, grad))
}

/// Mean cross-entropy over the batch and its exact gradient. Examples run in
/// parallel; gradients are summed in doc-id order so results are
/// reproducible regardless of thread count.
pub fn loss_and_grads(
    batch: &[Example],
    config: &ModelConfig,
    params: &ModelParams,
) -> Result<(f64, ModelParams)> {
    config.validate()?;
    if batch.is_empty() {
        return Err(Error::Validation("empty batch".into()));
    }
    let scale = 1.0 / batch.len() as f64;
    let mut parts = batch
        .par_iter()
        .map(|ex| example_grads(ex, config, params, scale).map(|r| (ex.doc_id.as_str(), r)))
        .collect::<Result<Vec<_>>>()?;
    parts.sort_by(|a, b| a.0.cmp(b.0));
    let mut total = params.zeros_like();
    let mut loss = 0.0;
    for (_, (l, g)) in &parts {
        loss += l;
        total.add_scaled(g, 1.0);
    }
    Ok((loss * scale, total))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Mode, TsParams};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_graph(rng: &mut ChaCha8Rng, n: usize, added: usize, dim: usize) -> GraphInput {
        let mut edges: Vec<(usize, usize)> = (1..n).map(|i| (rng.gen_range(0..i), i)).collect();
        let mut node_groups = vec![Vec::new(); n];
        let mut edge_group = vec![None; edges.len()];
        let mut total = n;
        for g in 0..added {
            let new = total;
            total += 1;
            node_groups.push(vec![g]);
            edges.push((rng.gen_range(0..n), new));
            edge_group.push(Some(g));
        }
        if added > 1 {
            node_groups[n].push(1);
        }
        let mut m = |r, c| Array2::from_shape_simple_fn((r, c), || rng.gen_range(-1.0..1.0));
        GraphInput {
            node_feats: m(total, dim),
            edge_feats: m(edges.len(), dim),
            edges,
            node_groups,
            edge_group,
            triple_feats: m(added, dim),
        }
    }

    fn tegra_config(dim: usize, text: usize) -> ModelConfig {
        let mut c = ModelConfig::new(Mode::Tegra, dim, text);
        c.d_out = 4;
        c.d_h = 3;
        c.d_hidden = 5;
        c
    }

    fn example(rng: &mut ChaCha8Rng, config: &ModelConfig, id: &str) -> Example {
        let graphs = (0..config.mode.graph_count())
            .map(|_| random_graph(rng, 6, 2, config.d_node))
            .collect();
        Example {
            doc_id: id.into(),
            text: Array1::from_shape_simple_fn(config.d_text, || rng.gen_range(-1.0..1.0)),
            label: rng.gen_range(0..2),
            graphs,
        }
    }

    #[test]
    fn pool_examples() {
        let one = Array2::from_shape_vec((1, 3), vec![1.0, -2.0, 0.5]).unwrap();
        assert_eq!(pool(&one).to_vec(), vec![1.0, -2.0, 0.5, 1.0, -2.0, 0.5]);
        let two = Array2::from_shape_vec((2, 2), vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(pool(&two).to_vec(), vec![1.0, 1.0, 0.5, 0.5]);
        assert_eq!(pool(&Array2::zeros((0, 4))).to_vec(), vec![0.0; 8]);
    }

    #[test]
    fn averaged_node_scale() {
        let input = GraphInput {
            node_feats: Array2::ones((2, 2)),
            edges: vec![(0, 1)],
            edge_feats: Array2::ones((1, 2)),
            node_groups: vec![vec![], vec![0, 1]],
            edge_group: vec![Some(1)],
            triple_feats: Array2::zeros((2, 2)),
        };
        let (n, e) = apply_ts(&input, &[0.2, 0.8]).unwrap();
        assert_eq!(n.row(0).to_vec(), vec![1.0, 1.0]);
        assert!(n.row(1).iter().all(|&v| (v - 0.5).abs() < 1e-15));
        assert_eq!(e.row(0).to_vec(), vec![0.8, 0.8]);
        assert!(matches!(apply_ts(&input, &[0.2]), Err(Error::Internal(_))));
    }

    #[test]
    fn zero_ts_params_give_half() {
        let p = TsParams {
            p_text: Array2::zeros((3, 2)),
            p_triple: Array2::zeros((4, 2)),
            p_shared: Array2::zeros((2, 2)),
        };
        let t = Array1::ones(3);
        let x = Array1::ones(4);
        assert_eq!(crate::model::ts_score(t.view(), x.view(), &p), 0.5);
    }

    #[test]
    fn probabilities_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let c = tegra_config(5, 4);
        let params = ModelParams::init(&c, 1);
        for i in 0..20 {
            let ex = example(&mut rng, &c, &format!("d{i}"));
            let p = forward(&ex, &c, &params).unwrap();
            assert!((p.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn mode_mismatch_is_config_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let c = tegra_config(5, 4);
        let mut ex = example(&mut rng, &c, "x");
        ex.graphs.pop();
        let params = ModelParams::init(&c, 1);
        assert!(matches!(forward(&ex, &c, &params), Err(Error::Config(_))));
    }

    #[test]
    fn text_only_matches_standalone_head() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut c = ModelConfig::new(Mode::TextOnly, 5, 6);
        c.d_hidden = 7;
        let params = ModelParams::init(&c, 4);
        let ex = example(&mut rng, &c, "t");
        let h = &params.head;
        let mut hidden = [0.0; 7];
        for (j, slot) in hidden.iter_mut().enumerate() {
            let mut acc = h.b1[j];
            for i in 0..6 {
                acc += ex.text[i] * h.w1[[i, j]];
            }
            *slot = acc.max(0.0);
        }
        let logits: Vec<f64> = (0..2)
            .map(|k| h.b2[k] + (0..7).map(|j| hidden[j] * h.w2[[j, k]]).sum::<f64>())
            .collect();
        let z: f64 = logits.iter().map(|l| l.exp()).sum();
        let p = forward(&ex, &c, &params).unwrap();
        for k in 0..2 {
            assert!((p[k] - logits[k].exp() / z).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_prediction_costs_ln2() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c = ModelConfig::new(Mode::TextOnly, 5, 6);
        let mut params = ModelParams::init(&c, 4);
        params.head.w2.fill(0.0);
        let batch: Vec<Example> = (0..4).map(|i| example(&mut rng, &c, &format!("{i}"))).collect();
        let (loss, _) = loss_and_grads(&batch, &c, &params).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn non_finite_loss_names_document() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c = ModelConfig::new(Mode::TextOnly, 5, 6);
        let params = ModelParams::init(&c, 4);
        let mut ex = example(&mut rng, &c, "broken");
        ex.text.fill(f64::INFINITY);
        match loss_and_grads(&[ex], &c, &params) {
            Err(Error::Numeric { doc, .. }) => assert_eq!(doc, "broken"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let c = tegra_config(4, 3);
        let params = ModelParams::init(&c, 5);
        let batch: Vec<Example> = (0..3).map(|i| example(&mut rng, &c, &format!("e{i}"))).collect();
        let (_, grad) = loss_and_grads(&batch, &c, &params).unwrap();
        let analytic = grad.flatten();
        let base = params.flatten();
        let h = 1e-5;
        let set = |values: &[f64]| {
            let mut p = params.clone();
            let mut pos = 0;
            p.for_each_mut(|_, data| {
                for x in data.iter_mut() {
                    *x = values[pos];
                    pos += 1;
                }
            });
            p
        };
        for k in 0..base.len() {
            let mut plus = base.clone();
            plus[k] += h;
            let mut minus = base.clone();
            minus[k] -= h;
            let lp = loss_and_grads(&batch, &c, &set(&plus)).unwrap().0;
            let lm = loss_and_grads(&batch, &c, &set(&minus)).unwrap().0;
            let fd = (lp - lm) / (2.0 * h);
            let err = (fd - analytic[k]).abs() / fd.abs().max(analytic[k].abs()).max(1e-7);
            assert!(err < 1e-4, "coordinate {k}: fd {fd} analytic {}", analytic[k]);
        }
    }
}
