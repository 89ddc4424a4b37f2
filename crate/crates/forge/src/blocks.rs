//! Seeded attention-block instances for the `block` and `bench` commands.

use anyhow::Result;
use pave_forge_core::attention::{as_se, aspp, cbam, se_block, AsppParams, Bottleneck, SpatialAttentionParams};
use pave_forge_core::metrics::{count_params_flops, BlockCost, BlockKind, BlockSpec};
use pave_forge_core::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

enum Params {
    Cbam(Bottleneck, SpatialAttentionParams),
    Se(Bottleneck),
    Aspp(AsppParams),
    AsSe(Bottleneck, AsppParams),
}

/// A block with its input. The generator draws the input first, then the
/// parameters in their documented order, all uniform in `[-0.5, 0.5)`.
pub struct BlockInstance {
    pub spec: BlockSpec,
    pub input: Tensor,
    params: Params,
}

impl BlockInstance {
    pub fn seeded(spec: BlockSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = move || rng.gen_range(-0.5..0.5);
        let s = spec.input;
        let input = Tensor::from_fn(s, |_, _, _, _| draw())?;
        let aspp = |draw: &mut dyn FnMut() -> f64| {
            AsppParams::generate(s.c, spec.branch_channels, spec.out_channels, spec.aspp_bias, draw)
        };
        let params = match spec.kind {
            BlockKind::Cbam => {
                let mlp = Bottleneck::generate(s.c, spec.reduction, &mut draw)?;
                Params::Cbam(mlp, SpatialAttentionParams::generate(&mut draw)?)
            }
            BlockKind::Se => Params::Se(Bottleneck::generate(s.c, spec.reduction, &mut draw)?),
            BlockKind::Aspp => Params::Aspp(aspp(&mut draw)?),
            BlockKind::AsSe => {
                let se = Bottleneck::generate(s.c, spec.reduction, &mut draw)?;
                Params::AsSe(se, aspp(&mut draw)?)
            }
        };
        Ok(Self { spec, input, params })
    }

    pub fn forward(&self) -> Result<Tensor> {
        let x = &self.input;
        Ok(match &self.params {
            Params::Cbam(c, s) => cbam(x, c, s)?,
            Params::Se(p) => se_block(x, p)?,
            Params::Aspp(p) => aspp(x, p)?,
            Params::AsSe(se, p) => as_se(x, se, p)?,
        })
    }

    pub fn cost(&self) -> Result<BlockCost> {
        Ok(count_params_flops(&self.spec)?)
    }
}

/// Sum of all output values, a cheap fingerprint for reproducibility checks.
pub fn checksum(t: &Tensor) -> f64 {
    t.data().iter().sum()
}
