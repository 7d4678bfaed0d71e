//! Multiresolution hash-grid encoding feeding a small fully connected network.
//!
//! Both pieces keep their parameters in caller-owned flat slices and expose
//! explicit reverse-mode passes.

use super::{SceneError, SceneModel};
use crate::geometry::{Aabb, Vec3};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

const PRIMES: [u64; 3] = [1, 2_654_435_761, 805_459_861];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HashConfig {
    pub levels: usize,
    pub base_resolution: f64,
    pub growth: f64,
    pub log2_table_size: u32,
    pub features: usize,
    pub hidden_width: usize,
    /// Hidden layers; the network has `hidden_layers + 1` linear maps.
    pub hidden_layers: usize,
    pub leaky_slope: f64,
}

impl Default for HashConfig {
    fn default() -> Self {
        HashConfig {
            levels: 8,
            base_resolution: 16.0,
            growth: 1.5,
            log2_table_size: 16,
            features: 2,
            hidden_width: 64,
            hidden_layers: 3,
            leaky_slope: 0.01,
        }
    }
}

impl HashConfig {
    fn validate(&self) -> Result<(), SceneError> {
        let ok = self.levels >= 1
            && self.base_resolution >= 1.0
            && self.growth >= 1.0
            && (1..=26).contains(&self.log2_table_size)
            && self.features >= 1
            && self.hidden_width >= 1
            && self.leaky_slope >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(SceneError::InvalidConfig(format!("{self:?}")))
        }
    }

    pub fn finest_resolution(&self) -> f64 {
        (self.base_resolution * self.growth.powi(self.levels as i32 - 1)).floor()
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Level {
    resolution: usize,
    dense: bool,
    entries: usize,
    offset: usize,
}

/// Hash-grid encoding of points in `[0, 1]^D`.
#[derive(Debug, Clone, PartialEq)]
pub struct HashGrid<const D: usize> {
    levels: Vec<Level>,
    features: usize,
    n_params: usize,
}

impl<const D: usize> HashGrid<D> {
    pub fn new(cfg: &HashConfig) -> Self {
        let table = 1usize << cfg.log2_table_size;
        let mut offset = 0;
        let levels = (0..cfg.levels)
            .map(|l| {
                let resolution = (cfg.base_resolution * cfg.growth.powi(l as i32)).floor().max(1.0) as usize;
                let vertices = (resolution + 1).checked_pow(D as u32).unwrap_or(usize::MAX);
                let dense = vertices <= table;
                let entries = if dense { vertices } else { table };
                let level = Level { resolution, dense, entries, offset };
                offset += entries * cfg.features;
                level
            })
            .collect();
        HashGrid { levels, features: cfg.features, n_params: offset }
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    pub fn output_len(&self) -> usize {
        self.levels.len() * self.features
    }

    fn vertex_index(level: &Level, c: &[usize; D]) -> usize {
        if level.dense {
            let mut idx = 0;
            for a in (0..D).rev() {
                idx = idx * (level.resolution + 1) + c[a];
            }
            idx
        } else {
            let mut h = 0u64;
            for a in 0..D {
                h ^= (c[a] as u64).wrapping_mul(PRIMES[a % 3]);
            }
            (h as usize) & (level.entries - 1)
        }
    }

    /// Visit every (parameter offset, blend weight) pair contributing to `u`.
    fn for_each_corner(&self, u: &[f64; D], mut f: impl FnMut(usize, usize, f64)) {
        for (li, level) in self.levels.iter().enumerate() {
            let n = level.resolution;
            let mut base = [0usize; D];
            let mut frac = [0.0; D];
            for a in 0..D {
                let p = u[a].clamp(0.0, 1.0) * n as f64;
                let i0 = (p.floor() as usize).min(n - 1);
                base[a] = i0;
                frac[a] = p - i0 as f64;
            }
            for bits in 0..(1usize << D) {
                let mut c = base;
                let mut w = 1.0;
                for a in 0..D {
                    if (bits >> a) & 1 == 1 {
                        c[a] += 1;
                        w *= frac[a];
                    } else {
                        w *= 1.0 - frac[a];
                    }
                }
                if w != 0.0 {
                    let idx = Self::vertex_index(level, &c);
                    f(li, level.offset + idx * self.features, w);
                }
            }
        }
    }

    pub fn encode(&self, params: &[f64], u: &[f64; D], out: &mut [f64]) {
        out.fill(0.0);
        let nf = self.features;
        self.for_each_corner(u, |li, off, w| {
            for f in 0..nf {
                out[li * nf + f] += w * params[off + f];
            }
        });
    }

    pub fn backward(&self, u: &[f64; D], d_out: &[f64], grad: &mut [f64]) {
        let nf = self.features;
        self.for_each_corner(u, |li, off, w| {
            for f in 0..nf {
                grad[off + f] += w * d_out[li * nf + f];
            }
        });
    }
}

/// Fully connected network with leaky-ReLU hidden layers and a linear head.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    offsets: Vec<usize>,
    slope: f64,
    n_params: usize,
}

/// Per-layer inputs and pre-activations from a forward pass.
#[derive(Debug, Clone, Default)]
pub struct MlpTape {
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

impl Mlp {
    pub fn new(sizes: Vec<usize>, slope: f64) -> Self {
        let mut offsets = Vec::with_capacity(sizes.len());
        let mut n = 0;
        for w in sizes.windows(2) {
            offsets.push(n);
            n += w[0] * w[1] + w[1];
        }
        Mlp { sizes, offsets, slope, n_params: n }
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    pub fn init(&self, params: &mut [f64], rng: &mut impl Rng) {
        let layers = self.sizes.len() - 1;
        for l in 0..layers {
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            let limit = if l + 1 == layers { (1.0 / fan_in as f64).sqrt() * 0.1 } else { (6.0 / fan_in as f64).sqrt() };
            let off = self.offsets[l];
            for p in &mut params[off..off + fan_in * fan_out] {
                *p = rng.random_range(-limit..limit);
            }
            params[off + fan_in * fan_out..off + fan_in * fan_out + fan_out].fill(0.0);
        }
    }

    pub fn forward(&self, params: &[f64], input: &[f64], tape: &mut MlpTape) -> Vec<f64> {
        let layers = self.sizes.len() - 1;
        tape.inputs.clear();
        tape.pre.clear();
        let mut x = input.to_vec();
        for l in 0..layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let off = self.offsets[l];
            let w = &params[off..off + n_in * n_out];
            let b = &params[off + n_in * n_out..off + n_in * n_out + n_out];
            let mut z = b.to_vec();
            for (o, zo) in z.iter_mut().enumerate() {
                let row = &w[o * n_in..(o + 1) * n_in];
                *zo += row.iter().zip(&x).map(|(a, c)| a * c).sum::<f64>();
            }
            tape.inputs.push(std::mem::take(&mut x));
            x = if l + 1 < layers { z.iter().map(|&v| if v > 0.0 { v } else { self.slope * v }).collect() } else { z.clone() };
            tape.pre.push(z);
        }
        x
    }

    /// Accumulate parameter gradients; returns the gradient on the input.
    pub fn backward(&self, params: &[f64], tape: &MlpTape, d_out: &[f64], grad: &mut [f64]) -> Vec<f64> {
        let layers = self.sizes.len() - 1;
        let mut d = d_out.to_vec();
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            if l + 1 < layers {
                for (dv, &z) in d.iter_mut().zip(&tape.pre[l]) {
                    if z <= 0.0 {
                        *dv *= self.slope;
                    }
                }
            }
            let off = self.offsets[l];
            let input = &tape.inputs[l];
            let mut d_in = vec![0.0; n_in];
            for o in 0..n_out {
                let g = d[o];
                if g == 0.0 {
                    continue;
                }
                let row = off + o * n_in;
                for i in 0..n_in {
                    grad[row + i] += g * input[i];
                    d_in[i] += g * params[row + i];
                }
                grad[off + n_in * n_out + o] += g;
            }
            d = d_in;
        }
        d
    }
}

/// Hash encoding plus network over `[0, 1]^D`, with two real outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct HashMlp<const D: usize> {
    pub config: HashConfig,
    grid: HashGrid<D>,
    mlp: Mlp,
    params: Vec<f64>,
}

impl<const D: usize> HashMlp<D> {
    pub fn new(config: HashConfig, seed: u64) -> Result<Self, SceneError> {
        config.validate()?;
        let grid = HashGrid::<D>::new(&config);
        let mut sizes = vec![grid.output_len()];
        sizes.extend(std::iter::repeat_n(config.hidden_width, config.hidden_layers));
        sizes.push(2);
        let mlp = Mlp::new(sizes, config.leaky_slope);
        let mut params = vec![0.0; grid.n_params() + mlp.n_params()];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for p in &mut params[..grid.n_params()] {
            *p = rng.random_range(-1e-4..1e-4);
        }
        mlp.init(&mut params[grid.n_params()..], &mut rng);
        Ok(HashMlp { config, grid, mlp, params })
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn forward(&self, u: &[f64; D]) -> [f64; 2] {
        let mut tape = MlpTape::default();
        self.forward_taped(u, &mut tape)
    }

    fn forward_taped(&self, u: &[f64; D], tape: &mut MlpTape) -> [f64; 2] {
        let (g, m) = self.params.split_at(self.grid.n_params());
        let mut enc = vec![0.0; self.grid.output_len()];
        self.grid.encode(g, u, &mut enc);
        let out = self.mlp.forward(m, &enc, tape);
        [out[0], out[1]]
    }

    /// Accumulate `d_out` (gradient on the two outputs) into `grad`.
    pub fn backward(&self, u: &[f64; D], d_out: [f64; 2], grad: &mut [f64]) {
        let mut tape = MlpTape::default();
        self.forward_taped(u, &mut tape);
        let n_grid = self.grid.n_params();
        let (g, m) = self.params.split_at(n_grid);
        let (grad_g, grad_m) = grad.split_at_mut(n_grid);
        let d_enc = self.mlp.backward(m, &tape, &d_out, grad_m);
        let _ = g;
        self.grid.backward(u, &d_enc, grad_g);
    }
}

/// Hash-encoded coordinate network over a bounding box, output `Re + i·Im`.
#[derive(Debug, Clone, PartialEq)]
pub struct HashMlpSceneModel {
    bounds: Aabb,
    pub net: HashMlp<3>,
}

impl HashMlpSceneModel {
    pub fn new(bounds: Aabb, config: HashConfig, seed: u64) -> Result<Self, SceneError> {
        if !bounds.is_valid() {
            return Err(SceneError::InvalidConfig("scene bounds must have positive volume".into()));
        }
        Ok(HashMlpSceneModel { bounds, net: HashMlp::new(config, seed)? })
    }

    fn unit(&self, x: Vec3) -> [f64; 3] {
        let r = self.bounds.clamp(x) - self.bounds.min;
        let e = self.bounds.extent();
        [r.x / e.x, r.y / e.y, r.z / e.z]
    }
}

impl SceneModel for HashMlpSceneModel {
    fn bounds(&self) -> Aabb {
        self.bounds
    }

    fn n_params(&self) -> usize {
        self.net.n_params()
    }

    fn params(&self) -> &[f64] {
        self.net.params()
    }

    fn params_mut(&mut self) -> &mut [f64] {
        self.net.params_mut()
    }

    fn query(&self, x: Vec3) -> Complex64 {
        let [re, im] = self.net.forward(&self.unit(x));
        Complex64::new(re, im)
    }

    fn backward(&self, x: Vec3, cot: Complex64, grad: &mut [f64]) {
        self.net.backward(&self.unit(x), [cot.re, cot.im], grad);
    }

    fn feature_size(&self) -> f64 {
        let e = self.bounds.extent();
        e.x.min(e.y).min(e.z) / self.net.config.finest_resolution()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> HashConfig {
        HashConfig {
            levels: 4,
            base_resolution: 4.0,
            growth: 2.0,
            log2_table_size: 8,
            features: 2,
            hidden_width: 8,
            ..Default::default()
        }
    }

    #[test]
    fn dense_and_hashed_levels() {
        let g = HashGrid::<3>::new(&small_config());
        assert!(g.levels[0].dense && g.levels[0].entries == 125);
        assert!(!g.levels[3].dense && g.levels[3].entries == 256);
    }

    #[test]
    fn encoding_continuous_across_cells() {
        let cfg = small_config();
        let mut net = HashMlp::<3>::new(cfg, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for p in net.params_mut() {
            *p = rng.random_range(-1.0..1.0);
        }
        let g = HashGrid::<3>::new(&cfg);
        let mut a = vec![0.0; g.output_len()];
        let mut b = vec![0.0; g.output_len()];
        // Cell faces at every level sit on multiples of 1/32 here.
        for face in [0.25, 0.5, 0.125, 0.40625] {
            let eps = 1e-12;
            g.encode(net.params(), &[face - eps, 0.31, 0.77], &mut a);
            g.encode(net.params(), &[face + eps, 0.31, 0.77], &mut b);
            let jump = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            assert!(jump < 1e-6, "jump {jump} at {face}");
        }
    }

    #[test]
    fn parameter_gradient_matches_fd() {
        let bounds = Aabb::cube(Vec3::ZERO, 0.5);
        let mut model = HashMlpSceneModel::new(bounds, small_config(), 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for p in model.params_mut() {
            *p += rng.random_range(-0.3..0.3);
        }
        let target = Complex64::new(0.2, 0.1);
        for _ in 0..5 {
            let x = Vec3::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5));
            let mut grad = vec![0.0; model.n_params()];
            model.backward(x, (model.query(x) - target) * 2.0, &mut grad);
            // Mix of parameters that touch this point and random ones.
            let touched: Vec<usize> = (0..grad.len()).filter(|&i| grad[i] != 0.0).collect();
            for k in 0..10 {
                let p = if k % 2 == 0 { touched[rng.random_range(0..touched.len())] } else { rng.random_range(0..grad.len()) };
                let h = 1e-6;
                let orig = model.params()[p];
                model.params_mut()[p] = orig + h;
                let lp = (model.query(x) - target).norm_sqr();
                model.params_mut()[p] = orig - h;
                let lm = (model.query(x) - target).norm_sqr();
                model.params_mut()[p] = orig;
                let fd = (lp - lm) / (2.0 * h);
                assert!((fd - grad[p]).abs() <= 1e-4 * fd.abs().max(grad[p].abs()) + 1e-9, "param {p}: {fd} vs {}", grad[p]);
            }
        }
    }

    #[test]
    fn default_sizes() {
        let m = HashMlpSceneModel::new(Aabb::cube(Vec3::ZERO, 1.0), HashConfig::default(), 0).unwrap();
        assert!(m.query(Vec3::new(0.3, -0.2, 0.9)).norm().is_finite());
        assert_eq!(HashConfig::default().finest_resolution(), 273.0);
    }
}
