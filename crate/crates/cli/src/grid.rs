//! Condition-number grids written as `min:max:count[log|lin]`.

use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Spacing {
    Log,
    Lin,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KappaGrid {
    pub min: f64,
    pub max: f64,
    pub count: usize,
    pub spacing: Spacing,
}

impl KappaGrid {
    /// Grid points in ascending order; the end points are exact.
    pub fn points(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.min];
        }
        let last = (self.count - 1) as f64;
        (0..self.count)
            .map(|i| {
                if i + 1 == self.count {
                    return self.max;
                }
                let s = i as f64 / last;
                match self.spacing {
                    Spacing::Log => (self.min.ln() + s * (self.max.ln() - self.min.ln())).exp(),
                    Spacing::Lin => self.min + s * (self.max - self.min),
                }
            })
            .collect()
    }
}

impl FromStr for KappaGrid {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let [min, max, count] = parts.as_slice() else {
            return Err(format!("expected min:max:count[log|lin], got `{s}`"));
        };
        let (count, spacing) = if let Some(c) = count.strip_suffix("log") {
            (c, Spacing::Log)
        } else if let Some(c) = count.strip_suffix("lin") {
            (c, Spacing::Lin)
        } else {
            (*count, Spacing::Log)
        };
        let num = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("bad number `{t}`: {e}"));
        let (min, max) = (num(min)?, num(max)?);
        let count: usize = count.trim().parse().map_err(|e| format!("bad count `{count}`: {e}"))?;
        if !(min >= 1.0 && max.is_finite()) {
            return Err(format!("condition numbers must lie in [1, inf), got {min}:{max}"));
        }
        if count == 0 || (count > 1 && max <= min) || (count == 1 && max < min) {
            return Err(format!("need count >= 1 and min < max for more than one point, got `{s}`"));
        }
        Ok(Self { min, max, count, spacing })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_grid_hits_decades() {
        let g: KappaGrid = "1:1000:4log".parse().unwrap();
        let p = g.points();
        assert_eq!(p.len(), 4);
        assert_eq!(p[0], 1.0);
        assert!((p[1] - 10.0).abs() < 1e-12);
        assert!((p[2] - 100.0).abs() < 1e-10);
        assert_eq!(p[3], 1000.0);
    }

    #[test]
    fn linear_and_default_spacing() {
        let g: KappaGrid = "2:4:3lin".parse().unwrap();
        assert_eq!(g.points(), vec![2.0, 3.0, 4.0]);
        let d: KappaGrid = "1:100:3".parse().unwrap();
        assert_eq!(d.spacing, Spacing::Log);
    }

    #[test]
    fn rejects_malformed_grids() {
        for bad in ["1:10", "0.5:10:3", "10:1:3", "1:10:0", "a:10:3", "1:10:3cubic"] {
            assert!(bad.parse::<KappaGrid>().is_err(), "{bad}");
        }
        assert_eq!("5:5:1".parse::<KappaGrid>().unwrap().points(), vec![5.0]);
    }
}
