//! End-to-end assembly: embedding, wavelet projection, attention, Koopman
//! evolution, reconstruction and the convolutional decoder.

use serde::{Deserialize, Serialize};
use sonnet_numerics::rng::{derive_seed, normal_tensor, seeded_rng, xavier_uniform};
use sonnet_numerics::{CVar, DropoutKey, Real, Tape, Tensor, Var};

use crate::data::instance_stats;
use crate::error::{shape, Error, Result};
use crate::koopman::{build_operator, evolve, KoopmanVars};
use crate::mvca::{mvca_forward, MlpVars, MvcaOptions, MvcaVars, COHERENCE_EPS};
use crate::wavelet::{atoms_transposed, project, reconstruct, TimeGrid, WaveletVars};

/// Dropout layer id of attention head 0; head `h` uses `MVCA_LAYER + h`.
pub const MVCA_LAYER: u64 = 100;

/// Module toggles for the ablation variants.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ablation {
    /// Skip the coherence weights; values pass through unweighted.
    pub no_coher: bool,
    /// Drop the residual MLP after attention.
    pub no_mlp: bool,
    /// Drop the whole attention block.
    pub no_mvca: bool,
    /// One shared projection of `[X, y]` instead of the split embedding.
    pub no_embed: bool,
    /// Skip the Koopman evolution.
    pub no_koop: bool,
}

impl Ablation {
    /// The five single-module variants, in reporting order.
    pub fn variants() -> [(&'static str, Ablation); 5] {
        let base = Ablation::default();
        [
            ("no_coher", Ablation { no_coher: true, ..base }),
            ("no_mlp", Ablation { no_mlp: true, ..base }),
            ("no_mvca", Ablation { no_mvca: true, ..base }),
            ("no_embed", Ablation { no_embed: true, ..base }),
            ("no_koop", Ablation { no_koop: true, ..base }),
        ]
    }

    pub fn all() -> Self {
        Self {
            no_coher: true,
            no_mlp: true,
            no_mvca: true,
            no_embed: true,
            no_koop: true,
        }
    }

    fn uses_coherence(&self) -> bool {
        !self.no_mvca && !self.no_coher
    }

    fn uses_mlp(&self) -> bool {
        !self.no_mvca && !self.no_mlp
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Look-back length L.
    pub seq_len: usize,
    /// Forecast horizon H.
    pub horizon: usize,
    /// Number of exogenous series C.
    pub n_exog: usize,
    /// Reporting delay δ of the endogenous input.
    #[serde(default)]
    pub delay: usize,
    /// Share of the hidden width given to the exogenous block.
    pub alpha: f64,
    pub d_model: usize,
    pub n_atoms: usize,
    #[serde(default)]
    pub dropout: f64,
    #[serde(default)]
    pub ablation: Ablation,
    /// Standardise the endogenous input per window and undo it on the output.
    #[serde(default)]
    pub instance_norm: bool,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_seed() -> u64 {
    42
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            seq_len: 28,
            horizon: 7,
            n_exog: 1,
            delay: 0,
            alpha: 0.5,
            d_model: 64,
            n_atoms: 8,
            dropout: 0.1,
            ablation: Ablation::default(),
            instance_norm: false,
            seed: 42,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.seq_len == 0 || self.horizon == 0 {
            return bad(format!("seq_len and horizon must be >= 1 (got {}, {})", self.seq_len, self.horizon));
        }
        if self.d_model < 2 {
            return bad(format!("d_model must be >= 2, got {}", self.d_model));
        }
        if self.n_atoms == 0 {
            return bad("n_atoms must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad(format!("alpha {} outside [0, 1]", self.alpha));
        }
        let split = self.alpha * self.d_model as f64;
        if (split - split.round()).abs() > 1e-9 {
            return bad(format!(
                "alpha * d_model = {} * {} = {split} is not an integer",
                self.alpha, self.d_model
            ));
        }
        if self.n_exog == 0 && !self.ablation.no_embed && self.exog_width() > 0 {
            return bad("alpha > 0 needs at least one exogenous series".into());
        }
        Ok(())
    }

    /// Width `α·d` of the exogenous embedding block.
    pub fn exog_width(&self) -> usize {
        (self.alpha * self.d_model as f64).round() as usize
    }

    /// Width `(1-α)·d` of the endogenous embedding block.
    pub fn endo_width(&self) -> usize {
        self.d_model - self.exog_width()
    }

    /// True when the prediction cannot depend on the exogenous input.
    pub fn autoregressive(&self) -> bool {
        !self.ablation.no_embed && self.exog_width() == 0
    }
}

#[derive(Copy, Clone, Debug, PartialEq)]
enum Init {
    Normal(f64),
    Xavier { fan_in: usize, fan_out: usize },
    Zeros,
}

/// Name, shape and initialiser of one learnable tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    init: Init,
}

fn spec(name: &str, shape: &[usize], init: Init) -> ParamSpec {
    ParamSpec {
        name: name.into(),
        shape: shape.to_vec(),
        init,
    }
}

/// Every learnable tensor the configuration allocates, in a fixed order.
pub fn param_specs(cfg: &ModelConfig) -> Vec<ParamSpec> {
    let (c, d, k, h) = (cfg.n_exog, cfg.d_model, cfg.n_atoms, cfg.horizon);
    let ab = cfg.ablation;
    let xav = |fan_in, fan_out| Init::Xavier { fan_in, fan_out };
    let mut out = Vec::new();

    if ab.no_embed {
        out.push(spec("embed.w_z", &[c + 1, d], xav(c + 1, d)));
    } else {
        let (dx, dy) = (cfg.exog_width(), cfg.endo_width());
        if dx > 0 {
            out.push(spec("embed.w_x", &[c, dx], xav(c, dx)));
        }
        if dy > 0 {
            out.push(spec("embed.w_y", &[1, dy], xav(1, dy)));
        }
    }
    for name in ["wavelet.alpha", "wavelet.beta", "wavelet.gamma"] {
        out.push(spec(name, &[k, d], Init::Normal(1.0)));
    }
    if !ab.no_mvca {
        if ab.uses_coherence() {
            out.push(spec("mvca.w_q", &[d, d], xav(d, d)));
            out.push(spec("mvca.w_k", &[d, d], xav(d, d)));
        }
        out.push(spec("mvca.w_v", &[d, d], xav(d, d)));
        if ab.uses_mlp() {
            out.push(spec("mvca.mlp.w1", &[d, d], xav(d, d)));
            out.push(spec("mvca.mlp.b1", &[d], Init::Zeros));
            out.push(spec("mvca.mlp.w2", &[d, d], xav(d, d)));
            out.push(spec("mvca.mlp.b2", &[d], Init::Zeros));
        }
        out.push(spec("mvca.w_out", &[d, d], xav(d, d)));
    }
    if !ab.no_koop {
        let std = (1.0 / k as f64).sqrt();
        out.push(spec("koopman.s_re", &[k, k], Init::Normal(std)));
        out.push(spec("koopman.s_im", &[k, k], Init::Normal(std)));
        out.push(spec("koopman.p", &[k], Init::Zeros));
    }
    let chans = [(d, 4 * h, 5), (4 * h, 2 * h, 3), (2 * h, h, 3)];
    for (i, (cin, cout, width)) in chans.into_iter().enumerate() {
        let name = format!("decoder.conv{}", i + 1);
        out.push(spec(&format!("{name}.w"), &[cout, cin, width], xav(cin * width, cout * width)));
        out.push(spec(&format!("{name}.b"), &[cout], Init::Zeros));
    }
    out.push(spec("decoder.w_z", &[h], xav(h, 1)));
    out
}

/// Closed-form count of learnable scalars.
pub fn parameter_count(cfg: &ModelConfig) -> usize {
    let (c, d, k, h) = (cfg.n_exog, cfg.d_model, cfg.n_atoms, cfg.horizon);
    let ab = cfg.ablation;
    let embed = if ab.no_embed { (c + 1) * d } else { c * cfg.exog_width() + cfg.endo_width() };
    let wavelet = 3 * k * d;
    let mvca = if ab.no_mvca {
        0
    } else {
        let qk = if ab.uses_coherence() { 2 * d * d } else { 0 };
        let mlp = if ab.uses_mlp() { 2 * (d * d + d) } else { 0 };
        qk + 2 * d * d + mlp
    };
    let koop = if ab.no_koop { 0 } else { 2 * k * k + k };
    let decoder = (4 * h * d * 5 + 4 * h) + (2 * h * 4 * h * 3 + 2 * h) + (h * 2 * h * 3 + h) + h;
    embed + wavelet + mvca + koop + decoder
}

/// Ordered named parameter tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamStore<T> {
    entries: Vec<(String, Tensor<T>)>,
}

impl<T: Real> ParamStore<T> {
    pub fn new(entries: Vec<(String, Tensor<T>)>) -> Self {
        Self { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor<T>> {
        self.entries.iter_mut().map(|(_, t)| t)
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|(n, _)| n == name)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.position(name).map(|i| &self.entries[i].1)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.position(name).map(move |i| &mut self.entries[i].1)
    }

    /// Replaces a tensor, keeping its slot; the shape must not change.
    pub fn set(&mut self, name: &str, value: Tensor<T>) -> Result<()> {
        let slot = self
            .get_mut(name)
            .ok_or_else(|| Error::Config(format!("no parameter named {name}")))?;
        if slot.shape() != value.shape() {
            return Err(shape("ParamStore::set", format!("{name}: {:?} vs {:?}", slot.shape(), value.shape())));
        }
        *slot = value;
        Ok(())
    }

    pub fn numel(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.numel()).sum()
    }
}

/// Parameters registered on one tape, aligned with the store order.
#[derive(Clone, Debug)]
pub struct Bound {
    names: Vec<String>,
    vars: Vec<Var>,
}

impl Bound {
    /// Pairs externally registered nodes with parameter names.
    pub fn new(names: Vec<String>, vars: Vec<Var>) -> Result<Self> {
        if names.len() != vars.len() {
            return Err(shape("Bound::new", format!("{} names for {} nodes", names.len(), vars.len())));
        }
        Ok(Self { names, vars })
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    pub fn get(&self, name: &str) -> Option<Var> {
        self.names.iter().position(|n| n == name).map(|i| self.vars[i])
    }

    fn need(&self, name: &str) -> Result<Var> {
        self.get(name)
            .ok_or_else(|| Error::Config(format!("model has no parameter {name}")))
    }
}

/// Training-mode switch and dropout stream for one forward pass.
#[derive(Copy, Clone, Debug)]
pub struct ForwardCtx {
    pub training: bool,
    pub key: DropoutKey,
}

impl ForwardCtx {
    pub fn eval() -> Self {
        Self {
            training: false,
            key: DropoutKey::new(0, MVCA_LAYER, 0),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SonnetModel<T> {
    pub config: ModelConfig,
    pub params: ParamStore<T>,
}

impl<T: Real> SonnetModel<T> {
    /// Allocates and initialises every parameter. Each tensor draws from its own
    /// stream derived from `(seed, name)`, so models that share a parameter name
    /// and seed start from identical values regardless of what else they allocate.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let entries = param_specs(&config)
            .into_iter()
            .map(|s| {
                let mut rng = seeded_rng(derive_seed(config.seed, &s.name));
                let t = match s.init {
                    Init::Normal(std) => normal_tensor(&s.shape, std, &mut rng),
                    Init::Xavier { fan_in, fan_out } => xavier_uniform(&s.shape, fan_in, fan_out, &mut rng),
                    Init::Zeros => Tensor::zeros(&s.shape),
                };
                (s.name, t)
            })
            .collect();
        Ok(Self {
            config,
            params: ParamStore::new(entries),
        })
    }

    /// Assembles a model from existing tensors, checking names and shapes.
    pub fn from_params(config: ModelConfig, params: ParamStore<T>) -> Result<Self> {
        config.validate()?;
        let specs = param_specs(&config);
        let names: Vec<&str> = params.names().collect();
        let want: Vec<&str> = specs.iter().map(|s| s.name.as_str()).collect();
        if names != want {
            return Err(Error::Checkpoint(format!("parameter names {names:?} do not match the configuration {want:?}")));
        }
        for (s, (_, t)) in specs.iter().zip(params.iter()) {
            if t.shape() != s.shape.as_slice() {
                return Err(Error::Checkpoint(format!("{} has shape {:?}, expected {:?}", s.name, t.shape(), s.shape)));
            }
        }
        Ok(Self { config, params })
    }

    pub fn parameter_count(&self) -> usize {
        self.params.numel()
    }

    /// Registers the parameters on `tape`; as leaves when `trainable`, else as constants.
    pub fn bind(&self, tape: &mut Tape<T>, trainable: bool) -> Bound {
        let mut names = Vec::with_capacity(self.params.len());
        let mut vars = Vec::with_capacity(self.params.len());
        for (n, t) in self.params.iter() {
            names.push(n.to_string());
            vars.push(if trainable { tape.leaf(t.clone()) } else { tape.constant(t.clone()) });
        }
        Bound { names, vars }
    }

    /// Joint embedding `[.., L, C]`, `[.., L]` → `[.., L, d]`.
    pub fn embed(&self, tape: &mut Tape<T>, b: &Bound, x: Option<Var>, y: Var) -> Result<Var> {
        let cfg = &self.config;
        let ys = tape.shape(y).to_vec();
        if ys.last() != Some(&cfg.seq_len) {
            return Err(shape("embed", format!("y {ys:?} does not end in L = {}", cfg.seq_len)));
        }
        let mut col = ys.clone();
        col.push(1);
        let y_col = tape.reshape(y, &col)?;
        let need_x = cfg.ablation.no_embed || cfg.exog_width() > 0;
        let x = match (need_x, x) {
            (false, _) => None,
            (true, Some(x)) => {
                let mut want = ys.clone();
                want.push(cfg.n_exog);
                if tape.shape(x) != want.as_slice() {
                    return Err(shape("embed", format!("X {:?}, expected {want:?}", tape.shape(x))));
                }
                Some(x)
            }
            (true, None) if cfg.n_exog == 0 => None,
            (true, None) => return Err(shape("embed", "exogenous input missing")),
        };
        let axis = ys.len();

        if cfg.ablation.no_embed {
            let z = match x {
                Some(x) => tape.concat(&[x, y_col], axis)?,
                None => y_col,
            };
            return Ok(tape.matmul(z, b.need("embed.w_z")?)?);
        }
        let mut parts = Vec::with_capacity(2);
        if let (Some(x), Some(wx)) = (x, b.get("embed.w_x")) {
            parts.push(tape.matmul(x, wx)?);
        }
        if let Some(wy) = b.get("embed.w_y") {
            parts.push(tape.matmul(y_col, wy)?);
        }
        Ok(if parts.len() == 1 { parts[0] } else { tape.concat(&parts, axis)? })
    }

    fn mvca_vars(&self, b: &Bound) -> Result<MvcaVars> {
        let mlp = if self.config.ablation.uses_mlp() {
            Some(MlpVars {
                w1: b.need("mvca.mlp.w1")?,
                b1: b.need("mvca.mlp.b1")?,
                w2: b.need("mvca.mlp.w2")?,
                b2: b.need("mvca.mlp.b2")?,
            })
        } else {
            None
        };
        Ok(MvcaVars {
            w_q: b.get("mvca.w_q"),
            w_k: b.get("mvca.w_k"),
            w_v: b.need("mvca.w_v")?,
            mlp,
            w_out: b.need("mvca.w_out")?,
        })
    }

    /// Convolutional decoder `[.., L, d]` → `[.., H]`.
    pub fn decode(&self, tape: &mut Tape<T>, b: &Bound, r: Var) -> Result<Var> {
        let h = self.config.horizon;
        let rs = tape.shape(r).to_vec();
        let (l, d) = (self.config.seq_len, self.config.d_model);
        if rs.len() < 2 || rs[rs.len() - 2..] != [l, d] {
            return Err(shape("decode", format!("R {rs:?}, expected [.., {l}, {d}]")));
        }
        let batch: usize = rs[..rs.len() - 2].iter().product();
        let x = tape.reshape(r, &[batch, l, d])?;
        let x = tape.permute(x, &[0, 2, 1])?;
        let x = tape.conv1d(x, b.need("decoder.conv1.w")?, Some(b.need("decoder.conv1.b")?), 2)?;
        let x = tape.gelu(x);
        let x = tape.conv1d(x, b.need("decoder.conv2.w")?, Some(b.need("decoder.conv2.b")?), 1)?;
        let x = tape.gelu(x);
        let x = tape.conv1d(x, b.need("decoder.conv3.w")?, Some(b.need("decoder.conv3.b")?), 1)?;
        let z_out = tape.adaptive_avg_pool1d(x, h)?;
        let w_z = tape.reshape(b.need("decoder.w_z")?, &[h, 1])?;
        let y = tape.matmul(z_out, w_z)?;
        let mut out = rs[..rs.len() - 2].to_vec();
        out.push(h);
        Ok(tape.reshape(y, &out)?)
    }

    fn checked(&self, tape: &Tape<T>, v: Var, layer: &str) -> Result<Var> {
        if tape.value(v).is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite { layer: layer.into() })
        }
    }

    /// Full forward pass: `X [.., L, C]` (optional when unused), `y [.., L]` → `ŷ [.., H]`.
    pub fn forward(&self, tape: &mut Tape<T>, b: &Bound, x: Option<Var>, y: Var, ctx: &ForwardCtx) -> Result<Var> {
        let cfg = &self.config;
        for (v, name) in x.iter().map(|&v| (v, "exogenous input")).chain([(y, "endogenous input")]) {
            self.checked(tape, v, name)?;
        }
        let (y, norm) = if cfg.instance_norm { self.instance_input(tape, y)? } else { (y, None) };

        let e = self.embed(tape, b, x, y)?;
        let e = self.checked(tape, e, "embedding")?;

        let grid = TimeGrid::new(cfg.seq_len)?;
        let wv = WaveletVars {
            alpha: b.need("wavelet.alpha")?,
            beta: b.need("wavelet.beta")?,
            gamma: b.need("wavelet.gamma")?,
        };
        let atoms = atoms_transposed(tape, &wv, &grid)?;
        let atoms = self.checked(tape, atoms, "wavelet atoms")?;
        let p = project(tape, e, atoms)?;

        let o = if cfg.ablation.no_mvca {
            p
        } else {
            let opts = MvcaOptions {
                dropout: cfg.dropout,
                eps: COHERENCE_EPS,
                training: ctx.training,
                key: ctx.key.with_layer(MVCA_LAYER),
            };
            let o = mvca_forward(tape, p, &self.mvca_vars(b)?, &opts)?;
            self.checked(tape, o, "mvca")?
        };

        let o_real = if cfg.ablation.no_koop {
            o
        } else {
            let kv = KoopmanVars {
                s: CVar {
                    re: b.need("koopman.s_re")?,
                    im: b.need("koopman.s_im")?,
                },
                p: b.need("koopman.p")?,
            };
            let op = build_operator(tape, &kv)?;
            let o_l = evolve(tape, o, op)?;
            self.checked(tape, o_l.re, "koopman")?
        };

        let r = reconstruct(tape, o_real, atoms)?;
        let r = self.checked(tape, r, "reconstruction")?;
        let y_hat = self.decode(tape, b, r)?;
        let y_hat = self.checked(tape, y_hat, "decoder")?;
        match norm {
            Some((shift, scale)) => {
                let s = tape.mul(y_hat, scale)?;
                Ok(tape.add(s, shift)?)
            }
            None => Ok(y_hat),
        }
    }

    /// Per-row standardisation of `y`; returns the normalised input and the
    /// `[.., 1]` shift/scale constants to undo it.
    fn instance_input(&self, tape: &mut Tape<T>, y: Var) -> Result<(Var, Option<(Var, Var)>)> {
        let ys = tape.shape(y).to_vec();
        let l = *ys.last().unwrap_or(&0);
        let rows = tape.value(y).numel() / l.max(1);
        let mut shifts = Vec::with_capacity(rows);
        let mut scales = Vec::with_capacity(rows);
        for row in tape.value(y).data().chunks(l) {
            let vals: Vec<f64> = row.iter().map(|v| v.as_f64()).collect();
            let (m, s) = instance_stats(&vals);
            shifts.push(T::of_f64(m));
            scales.push(T::of_f64(s));
        }
        let mut col = ys.clone();
        *col.last_mut().unwrap() = 1;
        let shift = tape.constant(Tensor::new(&col, shifts)?);
        let scale = tape.constant(Tensor::new(&col, scales)?);
        let centered = tape.sub(y, shift)?;
        let yn = tape.div(centered, scale)?;
        Ok((yn, Some((shift, scale))))
    }

    /// Inference on plain tensors: `x [.., L, C]`, `y [.., L]` → `[.., H]`, dropout off.
    pub fn predict(&self, x: Option<&Tensor<T>>, y: &Tensor<T>) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let b = self.bind(&mut tape, false);
        let xv = x.map(|x| tape.constant(x.clone()));
        let yv = tape.constant(y.clone());
        let out = self.forward(&mut tape, &b, xv, yv, &ForwardCtx::eval())?;
        Ok(tape.value(out).clone())
    }

    /// Casts every parameter to another scalar type.
    pub fn cast<U: Real>(&self) -> SonnetModel<U> {
        SonnetModel {
            config: self.config.clone(),
            params: ParamStore::new(self.params.iter().map(|(n, t)| (n.to_string(), t.cast())).collect()),
        }
    }

    /// Full-model parameters equivalent to an ablated model: shared tensors are
    /// copied, the removed MLP gets zero weights and the removed Koopman block
    /// gets `S = I`, `p = 0`. Only `no_mlp` and `no_koop` have neutral settings.
    pub fn neutral_full(&self) -> Result<SonnetModel<T>> {
        let ab = self.config.ablation;
        if ab.no_coher || ab.no_mvca || ab.no_embed {
            return Err(Error::Config("only no_mlp and no_koop have a neutral full-model equivalent".into()));
        }
        let mut full_cfg = self.config.clone();
        full_cfg.ablation = Ablation::default();
        let mut full = SonnetModel::new(full_cfg)?;
        for (name, t) in self.params.iter() {
            full.params.set(name, t.clone())?;
        }
        let d = self.config.d_model;
        let k = self.config.n_atoms;
        if ab.no_mlp {
            for name in ["mvca.mlp.w1", "mvca.mlp.w2"] {
                full.params.set(name, Tensor::zeros(&[d, d]))?;
            }
            for name in ["mvca.mlp.b1", "mvca.mlp.b2"] {
                full.params.set(name, Tensor::zeros(&[d]))?;
            }
        }
        if ab.no_koop {
            full.params.set("koopman.s_re", Tensor::eye(k))?;
            full.params.set("koopman.s_im", Tensor::zeros(&[k, k]))?;
            full.params.set("koopman.p", Tensor::zeros(&[k]))?;
        }
        Ok(full)
    }
}

/// Mean squared error over every element, as a scalar node.
pub fn mse_loss<T: Real>(tape: &mut Tape<T>, pred: Var, target: Var) -> Result<Var> {
    let diff = tape.sub(pred, target)?;
    let sq = tape.square(diff);
    Ok(tape.mean_all(sq))
}
