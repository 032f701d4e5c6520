//! FLOP and parameter accounting.
//!
//! Conventions (also used by the reporting CLI): one multiply-accumulate is
//! two FLOPs; bias additions ride along in the accumulate and are not counted
//! separately; parameter counts include biases; serialized size is four bytes
//! per parameter. Transposed convolutions are counted on their input grid,
//! where their multiply-accumulates actually happen.

use alloc::string::String;
use alloc::vec::Vec;
use core::ops::Add;

use crate::config::ModelConfig;
use crate::model::{expand_model, ExpandedUnit, UnitMode, UnitOp};
use crate::DscError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ResourceCount {
    /// Floating-point operations per inference (2 per multiply-accumulate).
    pub flops: u64,
    /// Parameter count, biases included.
    pub params: u64,
}

impl ResourceCount {
    pub const ZERO: ResourceCount = ResourceCount { flops: 0, params: 0 };

    /// Serialized f32 payload size in bytes, headers excluded.
    pub fn param_bytes(&self) -> u64 {
        self.params * 4
    }

    pub fn gflops(&self) -> f64 {
        self.flops as f64 / 1e9
    }

    pub fn param_mb(&self) -> f64 {
        self.param_bytes() as f64 / 1e6
    }
}

impl Add for ResourceCount {
    type Output = ResourceCount;
    fn add(self, rhs: ResourceCount) -> ResourceCount {
        ResourceCount {
            flops: self.flops + rhs.flops,
            params: self.params + rhs.params,
        }
    }
}

/// Count one expanded unit.
pub fn count_unit(u: &ExpandedUnit) -> ResourceCount {
    let (kh, kw) = (u.kernel.0 as u64, u.kernel.1 as u64);
    let (cin, cout) = (u.cin as u64, u.cout as u64);
    match u.op {
        UnitOp::Conv { .. } => {
            let cells = (u.out_hw.0 * u.out_hw.1) as u64;
            match u.mode {
                UnitMode::Dense => ResourceCount {
                    flops: 2 * kh * kw * cin * cout * cells,
                    params: cout * cin * kh * kw + cout,
                },
                UnitMode::Separable => ResourceCount {
                    flops: 2 * (kh * kw * cin + cin * cout) * cells,
                    params: cin * kh * kw + cout * cin + cout,
                },
            }
        }
        UnitOp::Tconv { .. } => {
            let cells = (u.in_hw.0 * u.in_hw.1) as u64;
            ResourceCount {
                flops: 2 * kh * kw * cin * cout * cells,
                params: cout * cin * kh * kw + cout,
            }
        }
    }
}

/// Sum over any unit list; empty lists count as zero.
pub fn count_units<'a>(units: impl IntoIterator<Item = &'a ExpandedUnit>) -> ResourceCount {
    units
        .into_iter()
        .fold(ResourceCount::ZERO, |acc, u| acc + count_unit(u))
}

/// Per-section breakdown: one entry per branch, then trunk, then heads.
#[derive(Clone, Debug)]
pub struct SectionCounts {
    pub sections: Vec<(String, ResourceCount)>,
    pub total: ResourceCount,
}

pub fn count_model(config: &ModelConfig) -> Result<ResourceCount, DscError> {
    Ok(count_model_sections(config)?.total)
}

pub fn count_model_sections(config: &ModelConfig) -> Result<SectionCounts, DscError> {
    let em = expand_model(config)?;
    let mut sections = Vec::new();
    let mut total = ResourceCount::ZERO;
    for b in &em.branches {
        let c = count_units(b.units.iter());
        total = total + c;
        sections.push((alloc::format!("branch {}", b.sensor_id), c));
    }
    let trunk = count_units(
        em.encoders
            .iter()
            .chain(em.decoders.iter().flat_map(|d| [&d.up, &d.post])),
    );
    total = total + trunk;
    sections.push((String::from("trunk"), trunk));
    let heads = count_units([&em.depth_head, &em.return_head]);
    total = total + heads;
    sections.push((String::from("heads"), heads));
    Ok(SectionCounts { sections, total })
}
