use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of feature stages: the input convolution plus five encoder blocks.
pub const NUM_STAGES: usize = 6;

/// Total downsampling between stage 0 and the deepest stage.
pub const REQUIRED_DIVISOR: usize = 1 << (NUM_STAGES - 1);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stage {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Stage {
    pub fn as_tuple(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }
}

/// Channel/resolution schedule: channels double and both extents halve
/// from one stage to the next.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StagePlan {
    pub base_channels: usize,
    pub stages: Vec<Stage>,
}

impl StagePlan {
    pub fn new(input_h: usize, input_w: usize, base_channels: usize) -> Result<Self> {
        if input_h == 0 || input_w == 0 || input_h % REQUIRED_DIVISOR != 0 || input_w % REQUIRED_DIVISOR != 0 {
            return Err(Error::Config(format!(
                "input extents must be positive multiples of {REQUIRED_DIVISOR}, got {input_h}x{input_w}"
            )));
        }
        if base_channels == 0 {
            return Err(Error::Config("base_channels must be >= 1".into()));
        }
        let stages = (0..NUM_STAGES)
            .map(|i| Stage {
                channels: base_channels << i,
                height: input_h >> i,
                width: input_w >> i,
            })
            .collect();
        Ok(Self { base_channels, stages })
    }

    pub fn deepest(&self) -> Stage {
        *self.stages.last().expect("six stages")
    }

    pub fn as_tuples(&self) -> Vec<(usize, usize, usize)> {
        self.stages.iter().map(Stage::as_tuple).collect()
    }
}
