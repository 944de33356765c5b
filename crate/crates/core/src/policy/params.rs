use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Tensor, Var};
use crate::error::{Error, Result};

/// Auxiliary output computed from the final decoder state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskMode {
    None,
    /// Algorithm class out of `n_classes`.
    Classify {
        n_classes: usize,
    },
    /// Pointer to the token holding the bug.
    Localize,
}

/// Behavioral-cloning hyperparameters.
///
/// The per-trajectory loss is
/// `weight * (w_att * L_att + w_aux * L_aux)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BcConfig {
    pub w_att: f64,
    pub w_aux: f64,
    pub d_emb: usize,
    pub d_hidden: usize,
    pub d_attn: usize,
    pub lr: f64,
    pub grad_clip: f64,
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
    pub task_mode: TaskMode,
}

impl Default for BcConfig {
    fn default() -> Self {
        BcConfig {
            w_att: 1.0,
            w_aux: 1.0,
            d_emb: 16,
            d_hidden: 32,
            d_attn: 32,
            lr: 3e-3,
            grad_clip: 5.0,
            epochs: 50,
            batch: 2,
            seed: 0,
            task_mode: TaskMode::None,
        }
    }
}

impl BcConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.w_att >= 0.0 && self.w_aux >= 0.0 && self.w_att + self.w_aux > 0.0) {
            return Err(Error::param(format!(
                "loss weights must be non-negative and not both zero, got w_att={} w_aux={}",
                self.w_att, self.w_aux
            )));
        }
        if self.d_emb == 0 || self.d_hidden == 0 || self.d_attn == 0 {
            return Err(Error::param("network dimensions must be at least 1"));
        }
        if !(self.lr > 0.0 && self.grad_clip > 0.0) {
            return Err(Error::param("lr and grad_clip must be positive"));
        }
        if self.batch == 0 {
            return Err(Error::param("batch must be at least 1"));
        }
        if let TaskMode::Classify { n_classes } = self.task_mode {
            if n_classes < 2 {
                return Err(Error::param("classification needs at least 2 classes"));
            }
        }
        Ok(())
    }

    pub fn dims(&self, d_feat: usize) -> PolicyDims {
        PolicyDims {
            d_feat,
            d_emb: self.d_emb,
            d_hidden: self.d_hidden,
            d_attn: self.d_attn,
            task: self.task_mode,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyDims {
    pub d_feat: usize,
    pub d_emb: usize,
    pub d_hidden: usize,
    pub d_attn: usize,
    pub task: TaskMode,
}

macro_rules! slots {
    ($($variant:ident => $name:literal),* $(,)?) => {
        /// Named learnable tensor of the policy.
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum Slot { $($variant),* }

        impl Slot {
            pub const ALL: &'static [Slot] = &[$(Slot::$variant),*];

            pub fn name(self) -> &'static str {
                match self { $(Slot::$variant => $name),* }
            }

            pub fn from_name(name: &str) -> Option<Slot> {
                match name { $($name => Some(Slot::$variant),)* _ => None }
            }
        }
    };
}

slots! {
    InputProj => "input_proj",
    EncWz => "enc.w_z", EncWr => "enc.w_r", EncWh => "enc.w_h",
    EncUz => "enc.u_z", EncUr => "enc.u_r", EncUh => "enc.u_h",
    EncBz => "enc.b_z", EncBr => "enc.b_r", EncBh => "enc.b_h",
    DecWz => "dec.w_z", DecWr => "dec.w_r", DecWh => "dec.w_h",
    DecUz => "dec.u_z", DecUr => "dec.u_r", DecUh => "dec.u_h",
    DecBz => "dec.b_z", DecBr => "dec.b_r", DecBh => "dec.b_h",
    AttnW1 => "attn.w1", AttnW2 => "attn.w2", AttnV => "attn.v", AttnB => "attn.b",
    StopKey => "stop_key",
    StartInput => "start_input",
    TaskW => "task.w",
    LocV => "loc.v",
}

impl Slot {
    /// Shape of the slot, or `None` when the task mode has no use for it.
    pub fn shape(self, d: &PolicyDims) -> Option<Vec<usize>> {
        use Slot::*;
        Some(match self {
            InputProj => vec![d.d_feat, d.d_emb],
            EncWz | EncWr | EncWh | DecWz | DecWr | DecWh => vec![d.d_emb, d.d_hidden],
            EncUz | EncUr | EncUh | DecUz | DecUr | DecUh => vec![d.d_hidden, d.d_hidden],
            EncBz | EncBr | EncBh | DecBz | DecBr | DecBh => vec![d.d_hidden],
            AttnW1 | AttnW2 => vec![d.d_hidden, d.d_attn],
            AttnV => vec![d.d_attn, 1],
            AttnB => vec![d.d_attn],
            StopKey => vec![1, d.d_hidden],
            StartInput => vec![1, d.d_emb],
            TaskW => match d.task {
                TaskMode::Classify { n_classes } => vec![d.d_hidden, n_classes],
                _ => return None,
            },
            LocV => match d.task {
                TaskMode::Localize => vec![d.d_attn, 1],
                _ => return None,
            },
        })
    }
}

/// Half-width of the uniform initialisation interval.
pub const INIT_SCALE: f64 = 0.08;

/// Every learnable tensor of the encoder/decoder pointer network.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyParams {
    dims: PolicyDims,
    slots: Vec<Slot>,
    tensors: Vec<Tensor>,
}

impl PolicyParams {
    fn active_slots(dims: &PolicyDims) -> Vec<(Slot, Vec<usize>)> {
        Slot::ALL
            .iter()
            .filter_map(|&s| s.shape(dims).map(|shape| (s, shape)))
            .collect()
    }

    /// Uniform `[-0.08, 0.08]` initialisation drawn from `seed`, slot by slot.
    pub fn init(dims: PolicyDims, seed: u64) -> Self {
        Self::uniform(dims, seed, INIT_SCALE)
    }

    /// Every entry drawn uniformly from `[-scale, scale]`.
    pub fn uniform(dims: PolicyDims, seed: u64, scale: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::from_fn(dims, |_| rng.gen_range(-scale..=scale))
    }

    pub fn zeros(dims: PolicyDims) -> Self {
        Self::from_fn(dims, |_| 0.0)
    }

    pub fn from_fn(dims: PolicyDims, mut f: impl FnMut(Slot) -> f64) -> Self {
        let (slots, tensors) = Self::active_slots(&dims)
            .into_iter()
            .map(|(slot, shape)| {
                let len = shape.iter().product();
                let data = (0..len).map(|_| f(slot)).collect();
                (
                    slot,
                    Tensor::new(shape, data).expect("shape matches length"),
                )
            })
            .unzip();
        PolicyParams {
            dims,
            slots,
            tensors,
        }
    }

    /// Assembles parameters from named tensors, checking that exactly the
    /// expected slots are present with the expected shapes.
    pub fn from_named(dims: PolicyDims, named: Vec<(String, Tensor)>) -> Result<Self> {
        let expected = Self::active_slots(&dims);
        let mut tensors: Vec<Option<Tensor>> = vec![None; expected.len()];
        for (name, tensor) in named {
            let slot = Slot::from_name(&name)
                .ok_or_else(|| Error::Checkpoint(format!("unknown parameter `{name}`")))?;
            let pos = expected
                .iter()
                .position(|(s, _)| *s == slot)
                .ok_or_else(|| {
                    Error::Checkpoint(format!("parameter `{name}` unused by this task mode"))
                })?;
            if tensor.shape() != expected[pos].1.as_slice() {
                return Err(Error::Checkpoint(format!(
                    "parameter `{name}` has shape {:?}, expected {:?}",
                    tensor.shape(),
                    expected[pos].1
                )));
            }
            if tensors[pos].replace(tensor).is_some() {
                return Err(Error::Checkpoint(format!("parameter `{name}` given twice")));
            }
        }
        let tensors = tensors
            .into_iter()
            .zip(&expected)
            .map(|(t, (slot, _))| {
                t.ok_or_else(|| Error::Checkpoint(format!("missing parameter `{}`", slot.name())))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PolicyParams {
            dims,
            slots: expected.into_iter().map(|(s, _)| s).collect(),
            tensors,
        })
    }

    pub fn dims(&self) -> &PolicyDims {
        &self.dims
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn get(&self, slot: Slot) -> Option<&Tensor> {
        self.slots
            .iter()
            .position(|&s| s == slot)
            .map(|i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, slot: Slot) -> Option<&mut Tensor> {
        self.slots
            .iter()
            .position(|&s| s == slot)
            .map(|i| &mut self.tensors[i])
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Registers every tensor as a leaf of `g`.
    pub fn bind(&self, g: &mut Graph) -> Bound {
        let vars = self.tensors.iter().map(|t| g.leaf(t.clone())).collect();
        Bound::new(self.slots.clone(), vars)
    }
}

/// Graph handles of the policy parameters.
#[derive(Clone, Debug)]
pub struct Bound {
    by_slot: Vec<Option<Var>>,
    vars: Vec<Var>,
}

impl Bound {
    /// `vars[i]` must hold the tensor of `slots[i]`.
    pub fn new(slots: Vec<Slot>, vars: Vec<Var>) -> Self {
        let mut by_slot = vec![None; Slot::ALL.len()];
        for (s, v) in slots.iter().zip(&vars) {
            by_slot[*s as usize] = Some(*v);
        }
        Bound { by_slot, vars }
    }

    pub fn var(&self, slot: Slot) -> Result<Var> {
        self.by_slot[slot as usize]
            .ok_or_else(|| Error::param(format!("parameter `{}` not bound", slot.name())))
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}
