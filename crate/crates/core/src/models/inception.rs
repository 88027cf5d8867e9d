//! Four-branch inception block: 1×1 | 1×1→3×3 | 1×1→5×5 | 3×3 max-pool→1×1,
//! each conv followed by ReLU, outputs concatenated along channels.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{
    concat_channels, conv2d, conv2d_backward, maxpool2d, maxpool2d_backward, relu, relu_backward,
    split_channels, PoolIndices, Tensor,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct InceptionConfig {
    pub branch1_1x1: usize,
    pub branch2_reduce_1x1: usize,
    pub branch2_3x3: usize,
    pub branch3_reduce_1x1: usize,
    pub branch3_5x5: usize,
    pub branch4_pool_proj_1x1: usize,
}

impl InceptionConfig {
    pub const fn new(b1: usize, r2: usize, b2: usize, r3: usize, b3: usize, b4: usize) -> Self {
        Self {
            branch1_1x1: b1,
            branch2_reduce_1x1: r2,
            branch2_3x3: b2,
            branch3_reduce_1x1: r3,
            branch3_5x5: b3,
            branch4_pool_proj_1x1: b4,
        }
    }

    pub fn output_channels(&self) -> usize {
        self.branch1_1x1 + self.branch2_3x3 + self.branch3_5x5 + self.branch4_pool_proj_1x1
    }

    fn branch_channels(&self) -> [usize; 4] {
        [
            self.branch1_1x1,
            self.branch2_3x3,
            self.branch3_5x5,
            self.branch4_pool_proj_1x1,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.branch1_1x1,
            self.branch2_reduce_1x1,
            self.branch2_3x3,
            self.branch3_reduce_1x1,
            self.branch3_5x5,
            self.branch4_pool_proj_1x1,
        ];
        if all.contains(&0) {
            return Err(Error::BadShape(format!(
                "inception channel counts must all be >= 1: {self:?}"
            )));
        }
        Ok(())
    }
}

/// A convolution inside the block: parameter suffix, input channels, output
/// channels, kernel size, padding.
#[derive(Debug, Clone, Copy)]
pub(crate) struct BranchConv {
    pub suffix: &'static str,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub padding: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct InceptionModule {
    pub in_channels: usize,
    pub config: InceptionConfig,
}

/// Builds the block for a given input width, validating channel counts.
pub fn inception_module(in_channels: usize, config: InceptionConfig) -> Result<InceptionModule> {
    if in_channels == 0 {
        return Err(Error::BadShape("inception input must have channels".into()));
    }
    config.validate()?;
    Ok(InceptionModule {
        in_channels,
        config,
    })
}

const B1: usize = 0;
const B2_REDUCE: usize = 1;
const B2: usize = 2;
const B3_REDUCE: usize = 3;
const B3: usize = 4;
const B4_PROJ: usize = 5;

pub(crate) struct InceptionCache {
    input: Tensor,
    // pre-activation of each conv, indexed like `convs()`
    pre: [Tensor; 6],
    // post-activation inputs of the 3×3 and 5×5 convs
    reduced2: Tensor,
    reduced3: Tensor,
    pooled: Tensor,
    pool_indices: PoolIndices,
}

impl InceptionCache {
    pub(crate) fn pattern(&self, out: &mut Vec<usize>) {
        for z in &self.pre {
            out.extend(z.data().iter().map(|&v| (v > 0.0) as usize));
        }
        out.extend_from_slice(&self.pool_indices.argmax);
    }
}

impl InceptionModule {
    pub fn output_channels(&self) -> usize {
        self.config.output_channels()
    }

    pub(crate) fn convs(&self) -> [BranchConv; 6] {
        let c = &self.config;
        let cin = self.in_channels;
        let conv = |suffix, in_channels, out_channels, kernel, padding| BranchConv {
            suffix,
            in_channels,
            out_channels,
            kernel,
            padding,
        };
        [
            conv("b1", cin, c.branch1_1x1, 1, 0),
            conv("b2_reduce", cin, c.branch2_reduce_1x1, 1, 0),
            conv("b2", c.branch2_reduce_1x1, c.branch2_3x3, 3, 1),
            conv("b3_reduce", cin, c.branch3_reduce_1x1, 1, 0),
            conv("b3", c.branch3_reduce_1x1, c.branch3_5x5, 5, 2),
            conv("b4_proj", cin, c.branch4_pool_proj_1x1, 1, 0),
        ]
    }

    /// Parameter count of this block including biases.
    pub fn parameter_count(&self) -> usize {
        self.convs()
            .iter()
            .map(|c| c.out_channels * (c.in_channels * c.kernel * c.kernel + 1))
            .sum()
    }

    /// Parameter count of the same block with the 1×1 reductions removed:
    /// 3×3 and 5×5 convolutions read all input channels directly. Output
    /// channels are unchanged.
    pub fn naive_parameter_count(&self) -> usize {
        let c = &self.config;
        let cin = self.in_channels;
        let conv = |out: usize, k: usize| out * (cin * k * k + 1);
        conv(c.branch1_1x1, 1)
            + conv(c.branch2_3x3, 3)
            + conv(c.branch3_5x5, 5)
            + conv(c.branch4_pool_proj_1x1, 1)
    }

    fn params<'a>(
        &self,
        prefix: &str,
        params: &'a BTreeMap<String, Tensor>,
    ) -> Result<Vec<(&'a Tensor, &'a Tensor)>> {
        self.convs()
            .iter()
            .map(|c| {
                let get = |kind: &str| {
                    let key = format!("{prefix}.{}.{kind}", c.suffix);
                    params
                        .get(&key)
                        .ok_or_else(|| Error::BadShape(format!("missing parameter {key}")))
                };
                Ok((get("weight")?, get("bias")?))
            })
            .collect()
    }

    pub(crate) fn forward(
        &self,
        prefix: &str,
        params: &BTreeMap<String, Tensor>,
        input: &Tensor,
    ) -> Result<(Tensor, InceptionCache)> {
        let p = self.params(prefix, params)?;
        let convs = self.convs();
        let run = |i: usize, x: &Tensor| conv2d(x, p[i].0, p[i].1, 1, convs[i].padding);

        let z1 = run(B1, input)?;
        let z2r = run(B2_REDUCE, input)?;
        let reduced2 = relu(&z2r);
        let z2 = run(B2, &reduced2)?;
        let z3r = run(B3_REDUCE, input)?;
        let reduced3 = relu(&z3r);
        let z3 = run(B3, &reduced3)?;
        let (pooled, pool_indices) = maxpool2d(input, 3, 1, 1)?;
        let z4 = run(B4_PROJ, &pooled)?;

        let out = concat_channels(&[&relu(&z1), &relu(&z2), &relu(&z3), &relu(&z4)])?;
        let cache = InceptionCache {
            input: input.clone(),
            pre: [z1, z2r, z2, z3r, z3, z4],
            reduced2,
            reduced3,
            pooled,
            pool_indices,
        };
        Ok((out, cache))
    }

    pub(crate) fn backward(
        &self,
        prefix: &str,
        params: &BTreeMap<String, Tensor>,
        cache: &InceptionCache,
        grad_out: &Tensor,
        grads: &mut BTreeMap<String, Tensor>,
    ) -> Result<Tensor> {
        let p = self.params(prefix, params)?;
        let convs = self.convs();
        let parts = split_channels(grad_out, &self.config.branch_channels())?;
        let mut record = |i: usize, w: Tensor, b: Tensor| {
            grads.insert(format!("{prefix}.{}.weight", convs[i].suffix), w);
            grads.insert(format!("{prefix}.{}.bias", convs[i].suffix), b);
        };
        let back = |i: usize, g: &Tensor, x: &Tensor| {
            let gz = relu_backward(g, &cache.pre[i])?;
            conv2d_backward(&gz, x, p[i].0, 1, convs[i].padding)
        };

        let g1 = back(B1, &parts[0], &cache.input)?;
        let g2 = back(B2, &parts[1], &cache.reduced2)?;
        let g2r = back(B2_REDUCE, &g2.input, &cache.input)?;
        let g3 = back(B3, &parts[2], &cache.reduced3)?;
        let g3r = back(B3_REDUCE, &g3.input, &cache.input)?;
        let g4 = back(B4_PROJ, &parts[3], &cache.pooled)?;
        let g_pool = maxpool2d_backward(&g4.input, &cache.pool_indices)?;

        let mut grad_input = g1.input;
        grad_input.add_assign(&g2r.input);
        grad_input.add_assign(&g3r.input);
        grad_input.add_assign(&g_pool);

        record(B1, g1.weights, g1.bias);
        record(B2, g2.weights, g2.bias);
        record(B2_REDUCE, g2r.weights, g2r.bias);
        record(B3, g3.weights, g3.bias);
        record(B3_REDUCE, g3r.weights, g3r.bias);
        record(B4_PROJ, g4.weights, g4.bias);
        Ok(grad_input)
    }
}
