use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ModelConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatLayerParams {
    /// Node projection, d_in × d_out.
    pub w: Array2<f64>,
    /// Edge-feature projection, d_node × d_out.
    pub w_edge: Array2<f64>,
    /// Attention vector over [W h_i ‖ W h_j ‖ W_e ε_ij], length 3·d_out.
    pub attn: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TsParams {
    pub p_text: Array2<f64>,
    pub p_triple: Array2<f64>,
    pub p_shared: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadParams {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

/// All trainable tensors. The same type holds gradients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// One GAT stack per active graph channel.
    pub gat: Vec<Vec<GatLayerParams>>,
    /// One triple-selection block per active channel when enabled, else empty.
    pub ts: Vec<TsParams>,
    pub head: HeadParams,
}

fn glorot(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || rng.gen_range(-bound..=bound))
}

fn glorot_vec(rng: &mut ChaCha8Rng, len: usize) -> Array1<f64> {
    let bound = (6.0 / (len + 1) as f64).sqrt();
    Array1::from_shape_simple_fn(len, || rng.gen_range(-bound..=bound))
}

impl ModelParams {
    /// Uniform ±√(6/(fan_in+fan_out)) weights, zero biases. Vectors count as
    /// a (len × 1) matrix.
    pub fn init(config: &ModelConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let channels = config.active_channels().len();
        let gat = (0..channels)
            .map(|_| {
                (0..config.n_gat_layers)
                    .map(|l| {
                        let d_in = if l == 0 { config.d_node } else { config.d_out };
                        GatLayerParams {
                            w: glorot(&mut rng, d_in, config.d_out),
                            w_edge: glorot(&mut rng, config.d_node, config.d_out),
                            attn: glorot_vec(&mut rng, 3 * config.d_out),
                        }
                    })
                    .collect()
            })
            .collect();
        let ts = if config.ts_enabled {
            (0..channels)
                .map(|_| TsParams {
                    p_text: glorot(&mut rng, config.d_text, config.d_h),
                    p_triple: glorot(&mut rng, config.d_node, config.d_h),
                    p_shared: glorot(&mut rng, config.d_h, config.d_h),
                })
                .collect()
        } else {
            Vec::new()
        };
        let width = config.head_input_width();
        let head = HeadParams {
            w1: glorot(&mut rng, width, config.d_hidden),
            b1: Array1::zeros(config.d_hidden),
            w2: glorot(&mut rng, config.d_hidden, 2),
            b2: Array1::zeros(2),
        };
        ModelParams { gat, ts, head }
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.for_each_mut(|_, data| data.iter_mut().for_each(|x| *x = 0.0));
        z
    }

    /// Visits every tensor with a stable name, shape and row-major data.
    pub fn for_each(&self, mut f: impl FnMut(&str, &[usize], &[f64])) {
        for (c, stack) in self.gat.iter().enumerate() {
            for (l, layer) in stack.iter().enumerate() {
                f(&format!("gat{c}.layer{l}.w"), layer.w.shape(), slice2(&layer.w));
                f(&format!("gat{c}.layer{l}.w_edge"), layer.w_edge.shape(), slice2(&layer.w_edge));
                f(&format!("gat{c}.layer{l}.attn"), layer.attn.shape(), slice1(&layer.attn));
            }
        }
        for (c, ts) in self.ts.iter().enumerate() {
            f(&format!("ts{c}.p_text"), ts.p_text.shape(), slice2(&ts.p_text));
            f(&format!("ts{c}.p_triple"), ts.p_triple.shape(), slice2(&ts.p_triple));
            f(&format!("ts{c}.p_shared"), ts.p_shared.shape(), slice2(&ts.p_shared));
        }
        let h = &self.head;
        f("head.w1", h.w1.shape(), slice2(&h.w1));
        f("head.b1", h.b1.shape(), slice1(&h.b1));
        f("head.w2", h.w2.shape(), slice2(&h.w2));
        f("head.b2", h.b2.shape(), slice1(&h.b2));
    }

    pub fn for_each_mut(&mut self, mut f: impl FnMut(&str, &mut [f64])) {
        for (c, stack) in self.gat.iter_mut().enumerate() {
            for (l, layer) in stack.iter_mut().enumerate() {
                f(&format!("gat{c}.layer{l}.w"), slice2_mut(&mut layer.w));
                f(&format!("gat{c}.layer{l}.w_edge"), slice2_mut(&mut layer.w_edge));
                f(&format!("gat{c}.layer{l}.attn"), slice1_mut(&mut layer.attn));
            }
        }
        for (c, ts) in self.ts.iter_mut().enumerate() {
            f(&format!("ts{c}.p_text"), slice2_mut(&mut ts.p_text));
            f(&format!("ts{c}.p_triple"), slice2_mut(&mut ts.p_triple));
            f(&format!("ts{c}.p_shared"), slice2_mut(&mut ts.p_shared));
        }
        let h = &mut self.head;
        f("head.w1", slice2_mut(&mut h.w1));
        f("head.b1", slice1_mut(&mut h.b1));
        f("head.w2", slice2_mut(&mut h.w2));
        f("head.b2", slice1_mut(&mut h.b2));
    }

    /// All values flattened in visiting order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.for_each(|_, _, data| out.extend_from_slice(data));
        out
    }

    pub fn len(&self) -> usize {
        let mut n = 0;
        self.for_each(|_, _, data| n += data.len());
        n
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// self += scale · other, tensor by tensor.
    pub fn add_scaled(&mut self, other: &ModelParams, scale: f64) {
        let flat = other.flatten();
        let mut pos = 0;
        self.for_each_mut(|_, data| {
            for x in data.iter_mut() {
                *x += scale * flat[pos];
                pos += 1;
            }
        });
    }

    pub fn all_finite(&self) -> bool {
        let mut ok = true;
        self.for_each(|_, _, data| ok &= data.iter().all(|x| x.is_finite()));
        ok
    }
}

fn slice2(a: &Array2<f64>) -> &[f64] {
    a.as_slice().expect("parameters are stored contiguously")
}

fn slice1(a: &Array1<f64>) -> &[f64] {
    a.as_slice().expect("parameters are stored contiguously")
}

fn slice2_mut(a: &mut Array2<f64>) -> &mut [f64] {
    a.as_slice_mut().expect("parameters are stored contiguously")
}

fn slice1_mut(a: &mut Array1<f64>) -> &mut [f64] {
    a.as_slice_mut().expect("parameters are stored contiguously")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Label;
    use crate::model::Mode;

    fn configs() -> Vec<ModelConfig> {
        let mut out = Vec::new();
        for mode in [Mode::TextOnly, Mode::Teg, Mode::Tegra] {
            let mut c = ModelConfig::new(mode, 7, 5);
            c.d_out = 6;
            c.d_h = 4;
            c.d_hidden = 9;
            c.n_gat_layers = 3;
            out.push(c.clone());
            if mode == Mode::Tegra {
                c.ts_enabled = false;
                out.push(c.clone());
                c.ts_enabled = true;
                c.dropped = vec![Label::Misinfo];
                out.push(c);
            }
        }
        out
    }

    #[test]
    fn same_seed_same_params() {
        let c = &configs()[3];
        assert_eq!(ModelParams::init(c, 9), ModelParams::init(c, 9));
        assert_ne!(ModelParams::init(c, 9), ModelParams::init(c, 10));
    }

    #[test]
    fn param_count_matches_formula() {
        for c in configs() {
            assert_eq!(ModelParams::init(&c, 1).len(), c.param_count(), "{c:?}");
        }
    }

    #[test]
    fn every_entry_within_fan_bound() {
        for c in configs() {
            let p = ModelParams::init(&c, 3);
            p.for_each(|name, shape, data| {
                let (fan_in, fan_out) = if shape.len() == 2 {
                    (shape[0], shape[1])
                } else {
                    (shape[0], 1)
                };
                if name.contains(".b") {
                    assert!(data.iter().all(|&x| x == 0.0), "{name}");
                } else {
                    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                    assert!(data.iter().all(|x| x.abs() <= bound), "{name}");
                }
            });
        }
    }

    #[test]
    fn add_scaled_and_zeros() {
        let c = &configs()[1];
        let p = ModelParams::init(c, 2);
        let mut q = p.zeros_like();
        assert!(q.flatten().iter().all(|&x| x == 0.0));
        q.add_scaled(&p, 2.0);
        let (a, b) = (p.flatten(), q.flatten());
        assert!(a.iter().zip(&b).all(|(x, y)| 2.0 * x == *y));
    }
}
