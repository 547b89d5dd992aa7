use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

/// Number of resource dimensions tracked per node and task.
pub const DIMS: usize = 3;

/// A (cpu, mem, disk) amount in abstract units. Components are never negative.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ResourceVector {
    pub cpu: f64,
    pub mem: f64,
    pub disk: f64,
}

impl ResourceVector {
    pub const ZERO: ResourceVector = ResourceVector {
        cpu: 0.0,
        mem: 0.0,
        disk: 0.0,
    };

    pub const fn new(cpu: f64, mem: f64, disk: f64) -> Self {
        Self { cpu, mem, disk }
    }

    pub fn from_array(a: [f64; DIMS]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [f64; DIMS] {
        [self.cpu, self.mem, self.disk]
    }

    pub fn is_valid(&self) -> bool {
        self.to_array().iter().all(|c| c.is_finite() && *c >= 0.0)
    }

    pub fn any_positive(&self) -> bool {
        self.to_array().iter().any(|c| *c > 0.0)
    }

    /// Componentwise `self <= other`.
    pub fn fits_within(&self, other: &ResourceVector) -> bool {
        self.cpu <= other.cpu && self.mem <= other.mem && self.disk <= other.disk
    }

    /// `self - other`, or `None` if any component would go negative.
    pub fn checked_sub(&self, other: &ResourceVector) -> Option<ResourceVector> {
        let r = ResourceVector::new(self.cpu - other.cpu, self.mem - other.mem, self.disk - other.disk);
        r.is_valid().then_some(r)
    }

    /// `self - other` with each component floored at zero.
    pub fn saturating_sub(&self, other: &ResourceVector) -> ResourceVector {
        ResourceVector::new(
            (self.cpu - other.cpu).max(0.0),
            (self.mem - other.mem).max(0.0),
            (self.disk - other.disk).max(0.0),
        )
    }

    pub fn scale(&self, k: f64) -> ResourceVector {
        ResourceVector::new(self.cpu * k, self.mem * k, self.disk * k)
    }

    /// Largest ratio `self[d] / of[d]` over dimensions where `of[d] > 0`.
    pub fn dominant_share(&self, of: &ResourceVector) -> f64 {
        self.to_array()
            .iter()
            .zip(of.to_array())
            .filter(|(_, cap)| *cap > 0.0)
            .map(|(x, cap)| x / cap)
            .fold(0.0, f64::max)
    }
}

impl Add for ResourceVector {
    type Output = ResourceVector;

    fn add(self, rhs: ResourceVector) -> ResourceVector {
        ResourceVector::new(self.cpu + rhs.cpu, self.mem + rhs.mem, self.disk + rhs.disk)
    }
}

impl AddAssign for ResourceVector {
    fn add_assign(&mut self, rhs: ResourceVector) {
        *self = *self + rhs;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn checked_sub_rejects_negative() {
        let a = ResourceVector::new(5.0, 5.0, 5.0);
        assert_eq!(
            a.checked_sub(&ResourceVector::new(2.0, 2.0, 0.0)),
            Some(ResourceVector::new(3.0, 3.0, 5.0))
        );
        assert_eq!(a.checked_sub(&ResourceVector::new(6.0, 0.0, 0.0)), None);
    }

    #[test]
    fn dominant_share_skips_zero_capacity() {
        let d = ResourceVector::new(2.0, 1.0, 5.0);
        let cap = ResourceVector::new(4.0, 10.0, 0.0);
        assert_eq!(d.dominant_share(&cap), 0.5);
    }

    proptest! {
        #[test]
        fn add_then_sub_stays_valid(a in prop::array::uniform3(0.0f64..100.0), b in prop::array::uniform3(0.0f64..100.0)) {
            let a = ResourceVector::from_array(a);
            let b = ResourceVector::from_array(b);
            let s = a + b;
            prop_assert!(s.is_valid());
            prop_assert!(a.fits_within(&s));
            let back = s.saturating_sub(&b);
            prop_assert!(back.is_valid());
        }
    }
}
