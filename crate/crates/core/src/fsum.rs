//! Exact floating-point summation.
//!
//! [`ExactSum`] keeps a running sum as a list of non-overlapping partials
//! (Shewchuk's expansion arithmetic, as used by Python's `math.fsum`). Adding
//! a value or merging two sums never rounds; only [`ExactSum::value`] rounds,
//! and it rounds the exact total correctly. The result therefore does not
//! depend on the order in which values were added or sums were merged.

#[derive(Clone, Debug, Default)]
pub struct ExactSum {
    // Increasing magnitude, non-overlapping.
    partials: Vec<f64>,
}

impl ExactSum {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a finite value exactly.
    pub fn add(&mut self, value: f64) {
        debug_assert!(value.is_finite());
        let mut x = value;
        let mut kept = 0;
        for j in 0..self.partials.len() {
            let mut y = self.partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                self.partials[kept] = lo;
                kept += 1;
            }
            x = hi;
        }
        self.partials.truncate(kept);
        self.partials.push(x);
    }

    /// Adds another exact sum without rounding.
    pub fn merge(&mut self, other: &ExactSum) {
        for &p in &other.partials {
            self.add(p);
        }
    }

    /// The exact total rounded to the nearest `f64` (ties to even).
    pub fn value(&self) -> f64 {
        let p = &self.partials;
        let mut n = p.len();
        if n == 0 {
            return 0.0;
        }
        n -= 1;
        let mut hi = p[n];
        let mut lo = 0.0;
        while n > 0 {
            let x = hi;
            n -= 1;
            let y = p[n];
            hi = x + y;
            let yr = hi - x;
            lo = y - yr;
            if lo != 0.0 {
                break;
            }
        }
        // Half-way case: the remaining partials decide the rounding direction.
        if n > 0 && ((lo < 0.0 && p[n - 1] < 0.0) || (lo > 0.0 && p[n - 1] > 0.0)) {
            let y = lo * 2.0;
            let x = hi + y;
            let yr = x - hi;
            if y == yr {
                hi = x;
            }
        }
        hi
    }

    pub fn is_zero(&self) -> bool {
        self.partials.iter().all(|&p| p == 0.0)
    }
}

impl FromIterator<f64> for ExactSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = ExactSum::new();
        for v in iter {
            s.add(v);
        }
        s
    }
}

/// Exact equality of the represented real numbers.
impl PartialEq for ExactSum {
    fn eq(&self, other: &Self) -> bool {
        let mut diff = self.clone();
        for &p in &other.partials {
            diff.add(-p);
        }
        diff.is_zero()
    }
}
