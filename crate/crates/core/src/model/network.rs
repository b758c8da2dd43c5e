//! 2D UNet: encoder levels of two conv-norm-activation units joined by 2x2
//! max pooling, a bottleneck, and decoder levels fed by 2x2 transposed
//! convolutions concatenated with the matching encoder output. The first
//! 3x3 convolution is the input head and the final 1x1 convolution the
//! output head.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::layers::{self, NormCache, Tensor};
use crate::error::{Error, Result};
use crate::grid::Image;
use crate::scalar::Scalar;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    Instance,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Nonlinearity {
    /// Slope 0.01 on the negative side.
    LeakyRelu,
    Relu,
}

impl Nonlinearity {
    fn slope<S: Scalar>(self) -> S {
        match self {
            Nonlinearity::LeakyRelu => S::of(layers::LEAKY_SLOPE),
            Nonlinearity::Relu => S::zero(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    /// Number of 2x downsamplings.
    pub depth: usize,
    /// Channels at full resolution; doubled at each level.
    pub base_width: usize,
    pub norm: NormKind,
    pub nonlinearity: Nonlinearity,
    pub seed: u64,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        Self {
            in_channels: 4,
            out_channels: 2,
            depth: 3,
            base_width: 16,
            norm: NormKind::Instance,
            nonlinearity: Nonlinearity::LeakyRelu,
            seed: 0,
        }
    }
}

impl NetworkSpec {
    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 {
            return Err(Error::config("model.depth", "depth must be at least 1"));
        }
        if self.base_width == 0 || self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::config("model", "channel counts must be positive"));
        }
        if self.depth > 16 {
            return Err(Error::config("model.depth", "depth above 16 is not supported"));
        }
        Ok(())
    }

    /// Error unless `h x w` halves cleanly `depth` times.
    pub fn check_input_size(&self, h: usize, w: usize) -> Result<()> {
        let f = 1usize << self.depth;
        if h == 0 || w == 0 || h % f != 0 || w % f != 0 {
            return Err(Error::config(
                "model.depth",
                format!("input {h}x{w} is not divisible by 2^{} = {f}", self.depth),
            ));
        }
        Ok(())
    }

    pub fn width(&self, level: usize) -> usize {
        self.base_width << level
    }
}

/// Closed-form parameter count of the network described by `spec`.
pub fn parameter_count(spec: &NetworkSpec) -> usize {
    let norm = usize::from(spec.norm == NormKind::Instance) * 2;
    let unit = |cin: usize, cout: usize| 9 * cin * cout + cout + norm * cout;
    let level = |cin: usize, cout: usize| unit(cin, cout) + unit(cout, cout);
    let d = spec.depth;
    let mut total = 0;
    let mut cin = spec.in_channels;
    for l in 0..d {
        total += level(cin, spec.width(l));
        cin = spec.width(l);
    }
    total += level(spec.width(d - 1), spec.width(d));
    for l in 0..d {
        total += 4 * spec.width(l + 1) * spec.width(l) + spec.width(l);
        total += level(2 * spec.width(l), spec.width(l));
    }
    total + spec.width(0) * spec.out_channels + spec.out_channels
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param<S> {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<S>,
    /// Fan-in for Kaiming initialization; `None` for biases and norm shifts.
    pub fan_in: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct ConvRef {
    w: usize,
    b: usize,
    cin: usize,
    cout: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct NormRef {
    g: usize,
    b: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Unit {
    conv: ConvRef,
    norm: Option<NormRef>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Level {
    a: Unit,
    b: Unit,
}

#[derive(Debug, Clone, PartialEq)]
struct Layout {
    enc: Vec<Level>,
    bottom: Level,
    up: Vec<ConvRef>,
    dec: Vec<Level>,
    out: ConvRef,
}

enum Init {
    Kaiming(usize),
    Zero,
    One,
}

struct Builder<S> {
    params: Vec<Param<S>>,
    seed: u64,
}

impl<S: Scalar> Builder<S> {
    fn push(&mut self, name: String, shape: Vec<usize>, init: Init) -> usize {
        let n: usize = shape.iter().product();
        let (value, fan_in) = match init {
            Init::Kaiming(fan_in) => (kaiming(n, fan_in, self.seed, &name), Some(fan_in)),
            Init::Zero => (vec![S::zero(); n], None),
            Init::One => (vec![S::one(); n], None),
        };
        self.params.push(Param {
            name,
            shape,
            value,
            fan_in,
        });
        self.params.len() - 1
    }

    fn conv(&mut self, name: &str, cin: usize, cout: usize, k: usize) -> ConvRef {
        let w = self.push(format!("{name}.weight"), vec![cout, cin, k, k], Init::Kaiming(cin * k * k));
        let b = self.push(format!("{name}.bias"), vec![cout], Init::Zero);
        ConvRef { w, b, cin, cout }
    }

    fn up(&mut self, name: &str, cin: usize, cout: usize) -> ConvRef {
        // Stride equals kernel size, so each output sees one tap per input
        // channel.
        let w = self.push(format!("{name}.weight"), vec![cin, cout, 2, 2], Init::Kaiming(cin));
        let b = self.push(format!("{name}.bias"), vec![cout], Init::Zero);
        ConvRef { w, b, cin, cout }
    }

    fn unit(&mut self, name: &str, cin: usize, cout: usize, norm: NormKind) -> Unit {
        let conv = self.conv(&format!("{name}.conv"), cin, cout, 3);
        let norm = (norm == NormKind::Instance).then(|| NormRef {
            g: self.push(format!("{name}.norm.gamma"), vec![cout], Init::One),
            b: self.push(format!("{name}.norm.beta"), vec![cout], Init::Zero),
        });
        Unit { conv, norm }
    }

    fn level(&mut self, name: &str, cin: usize, cout: usize, norm: NormKind) -> Level {
        Level {
            a: self.unit(&format!("{name}.a"), cin, cout, norm),
            b: self.unit(&format!("{name}.b"), cout, cout, norm),
        }
    }
}

/// Gaussian with standard deviation `sqrt(2 / fan_in)`, seeded per
/// parameter name so each tensor's draw is independent of build order.
pub fn kaiming<S: Scalar>(n: usize, fan_in: usize, root: u64, name: &str) -> Vec<S> {
    let std = (2.0 / fan_in as f64).sqrt();
    let normal = Normal::new(0.0, std).expect("positive std");
    let mut rng = seed::rng_for(root, &[seed::tag(name)]);
    (0..n).map(|_| S::of(normal.sample(&mut rng))).collect()
}

pub const INPUT_HEAD: &str = "enc0.a.conv";
pub const OUTPUT_HEAD: &str = "out";

/// True for parameters of the input or output head.
pub fn is_head(name: &str) -> bool {
    [INPUT_HEAD, OUTPUT_HEAD]
        .iter()
        .any(|h| name.strip_prefix(h).is_some_and(|rest| rest.starts_with('.')))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network<S> {
    pub spec: NetworkSpec,
    pub params: Vec<Param<S>>,
    layout: Layout,
}

#[derive(Debug, Clone)]
struct UnitCache<S> {
    cols: Vec<S>,
    norm: Option<NormCache<S>>,
    y: Tensor<S>,
}

#[derive(Debug, Clone)]
struct LevelCache<S> {
    a: UnitCache<S>,
    b: UnitCache<S>,
}

/// Activations recorded by [`Network::forward_train`].
#[derive(Debug, Clone)]
pub struct Cache<S> {
    enc: Vec<LevelCache<S>>,
    pool_arg: Vec<Vec<usize>>,
    bottom: LevelCache<S>,
    up_in: Vec<Tensor<S>>,
    dec: Vec<LevelCache<S>>,
    out_in: Tensor<S>,
}

/// Gradient buffers aligned with [`Network::params`].
pub type Grads<S> = Vec<Vec<S>>;

pub fn build_network<S: Scalar>(spec: &NetworkSpec) -> Result<Network<S>> {
    spec.validate()?;
    let mut b = Builder {
        params: Vec::new(),
        seed: spec.seed,
    };
    let d = spec.depth;
    let mut enc = Vec::with_capacity(d);
    let mut cin = spec.in_channels;
    for l in 0..d {
        enc.push(b.level(&format!("enc{l}"), cin, spec.width(l), spec.norm));
        cin = spec.width(l);
    }
    let bottom = b.level("bottom", spec.width(d - 1), spec.width(d), spec.norm);
    let mut up = vec![None; d];
    let mut dec = vec![None; d];
    for l in (0..d).rev() {
        up[l] = Some(b.up(&format!("up{l}"), spec.width(l + 1), spec.width(l)));
        dec[l] = Some(b.level(&format!("dec{l}"), 2 * spec.width(l), spec.width(l), spec.norm));
    }
    let out = b.conv(OUTPUT_HEAD, spec.width(0), spec.out_channels, 1);
    Ok(Network {
        spec: spec.clone(),
        params: b.params,
        layout: Layout {
            enc,
            bottom,
            up: up.into_iter().map(|u| u.expect("filled")).collect(),
            dec: dec.into_iter().map(|u| u.expect("filled")).collect(),
            out,
        },
    })
}

/// Channel-last image to channel-major tensor.
pub fn to_tensor<S: Scalar>(img: &Image<S>) -> Tensor<S> {
    let (h, w, c) = img.shape();
    let mut t = Tensor::zeros(c, h, w);
    for (p, px) in img.as_slice().chunks_exact(c).enumerate() {
        for (ci, &v) in px.iter().enumerate() {
            t.data[ci * h * w + p] = v;
        }
    }
    t
}

pub fn to_image<S: Scalar>(t: &Tensor<S>) -> Image<S> {
    let hw = t.plane();
    Image::from_fn(t.h, t.w, t.c, |y, x, c| t.data[c * hw + y * t.w + x])
}

impl<S: Scalar> Network<S> {
    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn param(&self, name: &str) -> Option<&Param<S>> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn zero_grads(&self) -> Grads<S> {
        self.params.iter().map(|p| vec![S::zero(); p.value.len()]).collect()
    }

    /// SHA-256 over the selected parameters' little-endian `f64` values.
    pub fn param_hash(&self, select: impl Fn(&str) -> bool) -> String {
        let mut h = Sha256::new();
        for p in self.params.iter().filter(|p| select(&p.name)) {
            h.update(p.name.as_bytes());
            for v in &p.value {
                h.update(v.as_f64().to_le_bytes());
            }
        }
        format!("{:x}", h.finalize())
    }

    fn v(&self, i: usize) -> &[S] {
        &self.params[i].value
    }

    fn check_input(&self, x: &Tensor<S>) -> Result<()> {
        if x.c != self.spec.in_channels {
            return Err(Error::Domain(format!(
                "network expects {} input channels, got {}",
                self.spec.in_channels, x.c
            )));
        }
        self.spec.check_input_size(x.h, x.w)
    }

    fn unit_forward(&self, x: &Tensor<S>, u: &Unit) -> UnitCache<S> {
        let (mut y, cols) = layers::conv3_forward(x, self.v(u.conv.w), self.v(u.conv.b), u.conv.cout);
        let norm = u
            .norm
            .map(|n| layers::norm_forward(&mut y, self.v(n.g), self.v(n.b)));
        layers::leaky_forward(&mut y, self.spec.nonlinearity.slope());
        UnitCache { cols, norm, y }
    }

    fn level_forward(&self, x: &Tensor<S>, l: &Level) -> LevelCache<S> {
        let a = self.unit_forward(x, &l.a);
        let b = self.unit_forward(&a.y, &l.b);
        LevelCache { a, b }
    }

    /// Forward pass keeping every activation needed by [`Network::backward`].
    pub fn forward_train(&self, x: &Tensor<S>) -> Result<(Tensor<S>, Cache<S>)> {
        self.check_input(x)?;
        let d = self.spec.depth;
        let mut enc = Vec::with_capacity(d);
        let mut pool_arg = Vec::with_capacity(d);
        let mut cur = x.clone();
        for l in 0..d {
            let lc = self.level_forward(&cur, &self.layout.enc[l]);
            let (pooled, arg) = layers::pool_forward(&lc.b.y);
            enc.push(lc);
            pool_arg.push(arg);
            cur = pooled;
        }
        let bottom = self.level_forward(&cur, &self.layout.bottom);
        let mut cur = bottom.b.y.clone();
        let mut up_in = vec![Tensor::zeros(0, 0, 0); d];
        let mut dec: Vec<Option<LevelCache<S>>> = vec![None; d];
        for l in (0..d).rev() {
            let u = self.layout.up[l];
            let upped = layers::up_forward(&cur, self.v(u.w), self.v(u.b), u.cout);
            up_in[l] = cur;
            let cat = Tensor::concat(&upped, &enc[l].b.y);
            let lc = self.level_forward(&cat, &self.layout.dec[l]);
            cur = lc.b.y.clone();
            dec[l] = Some(lc);
        }
        let o = self.layout.out;
        let out = layers::conv1_forward(&cur, self.v(o.w), self.v(o.b), o.cout);
        Ok((
            out,
            Cache {
                enc,
                pool_arg,
                bottom,
                up_in,
                dec: dec.into_iter().map(|c| c.expect("filled")).collect(),
                out_in: cur,
            },
        ))
    }

    pub fn forward(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        self.forward_train(x).map(|(y, _)| y)
    }

    pub fn forward_image(&self, x: &Image<S>) -> Result<Image<S>> {
        Ok(to_image(&self.forward(&to_tensor(x))?))
    }

    pub fn forward_batch(&self, xs: &[Image<S>]) -> Result<Vec<Image<S>>> {
        xs.iter().map(|x| self.forward_image(x)).collect()
    }

    fn unit_backward(
        &self,
        mut dy: Tensor<S>,
        c: &UnitCache<S>,
        u: &Unit,
        grads: &mut Grads<S>,
        need_dx: bool,
    ) -> Option<Tensor<S>> {
        layers::leaky_backward(&mut dy, &c.y, self.spec.nonlinearity.slope());
        let dpre = match (u.norm, &c.norm) {
            (Some(n), Some(nc)) => {
                let (gi, bi) = (n.g, n.b);
                let (dg, db) = two_mut(grads, gi, bi);
                layers::norm_backward(&dy, nc, self.v(gi), dg, db)
            }
            _ => dy,
        };
        let (dw, db) = two_mut(grads, u.conv.w, u.conv.b);
        layers::conv3_backward(&dpre, &c.cols, self.v(u.conv.w), u.conv.cin, dw, db, need_dx)
    }

    fn level_backward(
        &self,
        dy: Tensor<S>,
        c: &LevelCache<S>,
        l: &Level,
        grads: &mut Grads<S>,
        need_dx: bool,
    ) -> Option<Tensor<S>> {
        let da = self.unit_backward(dy, &c.b, &l.b, grads, true).expect("requested");
        self.unit_backward(da, &c.a, &l.a, grads, need_dx)
    }

    /// Accumulates parameter gradients of a scalar loss given its gradient
    /// with respect to the network output.
    pub fn backward(&self, cache: &Cache<S>, dout: &Tensor<S>, grads: &mut Grads<S>) {
        let d = self.spec.depth;
        let o = self.layout.out;
        let (dw, db) = two_mut(grads, o.w, o.b);
        let mut cur = layers::conv1_backward(dout, &cache.out_in, self.v(o.w), dw, db);
        let mut dskip = Vec::with_capacity(d);
        for l in 0..d {
            let dcat = self
                .level_backward(cur, &cache.dec[l], &self.layout.dec[l], grads, true)
                .expect("requested");
            let wl = self.spec.width(l);
            let split = wl * dcat.plane();
            let dup = Tensor {
                c: wl,
                h: dcat.h,
                w: dcat.w,
                data: dcat.data[..split].to_vec(),
            };
            dskip.push(dcat.data[split..].to_vec());
            let u = self.layout.up[l];
            let (dw, db) = two_mut(grads, u.w, u.b);
            cur = layers::up_backward(&dup, &cache.up_in[l], self.v(u.w), dw, db);
        }
        cur = self
            .level_backward(cur, &cache.bottom, &self.layout.bottom, grads, true)
            .expect("requested");
        for l in (0..d).rev() {
            let skip = &cache.enc[l].b.y;
            let mut dx = layers::pool_backward(&cur, &cache.pool_arg[l], skip.c, skip.h, skip.w);
            for (a, &b) in dx.data.iter_mut().zip(&dskip[l]) {
                *a += b;
            }
            match self.level_backward(dx, &cache.enc[l], &self.layout.enc[l], grads, l > 0) {
                Some(t) => cur = t,
                None => break,
            }
        }
    }

    /// Same network with new input/output heads (Kaiming from `seed`);
    /// every other parameter is copied unchanged.
    pub fn swap_head(&self, new_in: usize, new_out: usize, seed: u64) -> Result<Network<S>> {
        let spec = NetworkSpec {
            in_channels: new_in,
            out_channels: new_out,
            seed,
            ..self.spec.clone()
        };
        let mut fresh = build_network::<S>(&spec)?;
        for (dst, src) in fresh.params.iter_mut().zip(&self.params) {
            debug_assert_eq!(dst.name, src.name);
            if !is_head(&dst.name) {
                dst.value.clone_from(&src.value);
            }
        }
        Ok(fresh)
    }

    /// Replaces parameter values, checking names and sizes.
    pub fn load_values(&mut self, values: Vec<(String, Vec<S>)>) -> Result<()> {
        if values.len() != self.params.len() {
            return Err(Error::Format(format!(
                "expected {} parameter tensors, got {}",
                self.params.len(),
                values.len()
            )));
        }
        for (p, (name, v)) in self.params.iter_mut().zip(values) {
            if p.name != name || p.value.len() != v.len() {
                return Err(Error::Format(format!(
                    "parameter {name} ({} values) does not match {} ({} values)",
                    v.len(),
                    p.name,
                    p.value.len()
                )));
            }
            p.value = v;
        }
        Ok(())
    }
}

fn two_mut<T>(v: &mut [T], i: usize, j: usize) -> (&mut T, &mut T) {
    assert!(i != j);
    if i < j {
        let (a, b) = v.split_at_mut(j);
        (&mut a[i], &mut b[0])
    } else {
        let (a, b) = v.split_at_mut(i);
        (&mut b[0], &mut a[j])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(in_c: usize, out_c: usize) -> NetworkSpec {
        NetworkSpec {
            in_channels: in_c,
            out_channels: out_c,
            depth: 1,
            base_width: 2,
            seed: 7,
            ..NetworkSpec::default()
        }
    }

    #[test]
    fn registry_matches_closed_form() {
        for spec in [
            tiny(1, 1),
            NetworkSpec::default(),
            NetworkSpec {
                norm: NormKind::None,
                depth: 2,
                ..tiny(8, 4)
            },
        ] {
            let net = build_network::<f32>(&spec).unwrap();
            let by_shape: usize = net.params.iter().map(|p| p.shape.iter().product::<usize>()).sum();
            assert_eq!(by_shape, parameter_count(&spec));
        }
    }

    #[test]
    fn divisibility() {
        let spec = NetworkSpec {
            depth: 4,
            ..NetworkSpec::default()
        };
        assert!(spec.check_input_size(200, 200).unwrap_err().is_config());
        let net = build_network::<f32>(&NetworkSpec {
            depth: 3,
            ..spec
        })
        .unwrap();
        net.spec.check_input_size(200, 200).unwrap();
        let x = Tensor::zeros(4, 20, 20);
        assert!(net.forward(&x).unwrap_err().is_config());
    }

    #[test]
    fn channel_mismatch_is_domain_error() {
        let net = build_network::<f64>(&tiny(2, 1)).unwrap();
        assert!(matches!(net.forward(&Tensor::zeros(3, 8, 8)), Err(Error::Domain(_))));
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let mut net = build_network::<f64>(&tiny(2, 3)).unwrap();
        for p in &mut net.params {
            p.value.iter_mut().for_each(|v| *v = 0.0);
        }
        let x = Tensor {
            c: 2,
            h: 8,
            w: 8,
            data: (0..128).map(|i| i as f64).collect(),
        };
        let y = net.forward(&x).unwrap();
        assert_eq!((y.c, y.h, y.w), (3, 8, 8));
        assert!(y.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn heads_are_first_and_last_layers() {
        let net = build_network::<f32>(&tiny(1, 1)).unwrap();
        let heads: Vec<&str> = net.params.iter().filter(|p| is_head(&p.name)).map(|p| p.name.as_str()).collect();
        assert_eq!(heads, ["enc0.a.conv.weight", "enc0.a.conv.bias", "out.weight", "out.bias"]);
        assert!(!is_head("enc0.a.norm.gamma"));
    }
}
