use super::Parameters;
use crate::{Error, Result};

/// Slowly tracking shadow copy of a parameter set.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetNetwork<P> {
    pub shadow: P,
    pub rate: f64,
}

impl<P: Parameters + Clone> TargetNetwork<P> {
    pub fn new(tracked: &P, rate: f64) -> Result<Self> {
        check_rate(rate)?;
        Ok(TargetNetwork {
            shadow: tracked.clone(),
            rate,
        })
    }

    /// `shadow <- (1 - rate) shadow + rate tracked`, entrywise, written as
    /// `shadow + rate (tracked - shadow)` so equal inputs are a fixed point.
    pub fn polyak_update(&mut self, tracked: &P) -> Result<()> {
        self.polyak_update_with(tracked, self.rate)
    }

    pub fn polyak_update_with(&mut self, tracked: &P, rate: f64) -> Result<()> {
        check_rate(rate)?;
        let src = tracked.tensors();
        let dst = self.shadow.tensors_mut();
        if src.len() != dst.len() || src.iter().zip(&dst).any(|(a, b)| a.shape() != b.shape()) {
            return Err(Error::contract("target and tracked parameter shapes differ"));
        }
        for (d, s) in dst.into_iter().zip(src) {
            if rate == 1.0 {
                d.data_mut().copy_from_slice(s.data());
                continue;
            }
            for (x, &y) in d.data_mut().iter_mut().zip(s.data()) {
                *x += rate * (y - *x);
            }
        }
        Ok(())
    }
}

fn check_rate(rate: f64) -> Result<()> {
    if rate > 0.0 && rate <= 1.0 {
        Ok(())
    } else {
        Err(Error::contract(format!("polyak rate {rate} outside (0, 1]")))
    }
}
