//! Step-size rules.

use super::SonataError;

/// One step-size rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepRule {
    /// `alpha^n = alpha`.
    Constant(f64),
    /// `alpha^n = alpha0 / (n + 1)^beta`.
    DiminishingPower { alpha0: f64, beta: f64 },
    /// `alpha^n = alpha^{n-1} (1 - mu alpha^{n-1})`.
    DiminishingRecursive { alpha0: f64, mu: f64 },
}

impl StepRule {
    pub fn validate(&self) -> Result<(), SonataError> {
        let bad = |m: String| Err(SonataError::Config(m));
        match *self {
            StepRule::Constant(a) if !(a > 0.0 && a <= 1.0) => {
                bad(format!("constant step must lie in (0, 1], got {a}"))
            }
            StepRule::DiminishingPower { alpha0, beta } => {
                if !(alpha0 > 0.0 && alpha0 <= 1.0) {
                    bad(format!("alpha0 must lie in (0, 1], got {alpha0}"))
                } else if !(beta > 0.5 && beta <= 1.0) {
                    bad(format!("beta must lie in (0.5, 1], got {beta}"))
                } else {
                    Ok(())
                }
            }
            StepRule::DiminishingRecursive { alpha0, mu } => {
                if !(alpha0 > 0.0 && alpha0 <= 1.0) {
                    bad(format!("alpha0 must lie in (0, 1], got {alpha0}"))
                } else if !(mu > 0.0 && mu < 1.0) {
                    bad(format!("mu must lie in (0, 1), got {mu}"))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    pub fn is_diminishing(&self) -> bool {
        !matches!(self, StepRule::Constant(_))
    }

    fn initial(&self) -> f64 {
        match *self {
            StepRule::Constant(a) => a,
            StepRule::DiminishingPower { alpha0, .. } | StepRule::DiminishingRecursive { alpha0, .. } => {
                alpha0
            }
        }
    }

    /// Step at iteration `n + 1` given the step `prev` at iteration `n`.
    fn next(&self, n: usize, prev: f64) -> f64 {
        match *self {
            StepRule::Constant(a) => a,
            StepRule::DiminishingPower { alpha0, beta } => alpha0 / ((n + 2) as f64).powf(beta),
            StepRule::DiminishingRecursive { mu, .. } => prev * (1.0 - mu * prev),
        }
    }
}

/// A shared rule with an optional per-agent override.
#[derive(Debug, Clone, PartialEq)]
pub struct StepSizeSchedule {
    pub rule: StepRule,
    pub per_agent: Option<Vec<StepRule>>,
}

impl StepSizeSchedule {
    pub fn new(rule: StepRule) -> Self {
        Self {
            rule,
            per_agent: None,
        }
    }

    pub fn validate(&self, num_agents: usize) -> Result<(), SonataError> {
        self.rule.validate()?;
        if let Some(rules) = &self.per_agent {
            if rules.len() != num_agents {
                return Err(SonataError::Config(format!(
                    "{} per-agent step rules for {num_agents} agents",
                    rules.len()
                )));
            }
            for r in rules {
                r.validate()?;
            }
        }
        Ok(())
    }

    pub fn is_diminishing(&self) -> bool {
        match &self.per_agent {
            Some(rules) => rules.iter().all(StepRule::is_diminishing),
            None => self.rule.is_diminishing(),
        }
    }

    fn rule_for(&self, i: usize) -> StepRule {
        self.per_agent.as_ref().map_or(self.rule, |r| r[i])
    }

    /// Per-agent step generator starting at `n = 0`.
    pub fn sizer(&self, num_agents: usize) -> StepSizer {
        let rules: Vec<StepRule> = (0..num_agents).map(|i| self.rule_for(i)).collect();
        let current = rules.iter().map(StepRule::initial).collect();
        StepSizer { rules, current, n: 0 }
    }

    /// First `len` shared steps (agent 0's rule).
    pub fn sequence(&self, len: usize) -> Vec<f64> {
        let mut s = self.sizer(1.max(self.per_agent.as_ref().map_or(1, Vec::len)));
        (0..len)
            .map(|_| {
                let a = s.current()[0];
                s.advance();
                a
            })
            .collect()
    }
}

/// Iterates the per-agent steps `alpha_i^n`.
#[derive(Debug, Clone)]
pub struct StepSizer {
    rules: Vec<StepRule>,
    current: Vec<f64>,
    n: usize,
}

impl StepSizer {
    pub fn iteration(&self) -> usize {
        self.n
    }

    pub fn current(&self) -> &[f64] {
        &self.current
    }

    pub fn advance(&mut self) {
        for (a, r) in self.current.iter_mut().zip(&self.rules) {
            *a = r.next(self.n, *a);
        }
        self.n += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn recursive_rule_values() {
        let s = StepSizeSchedule::new(StepRule::DiminishingRecursive { alpha0: 0.5, mu: 0.01 });
        let seq = s.sequence(3);
        assert_eq!(seq[0], 0.5);
        assert!((seq[1] - 0.4975).abs() < 1e-15);
        assert!((seq[2] - 0.4975 * (1.0 - 0.004975)).abs() < 1e-15);
    }

    #[test]
    fn power_rule_values() {
        let s = StepSizeSchedule::new(StepRule::DiminishingPower { alpha0: 1.0, beta: 1.0 });
        let seq = s.sequence(4);
        for (n, a) in seq.iter().enumerate() {
            assert!((a - 1.0 / (n + 1) as f64).abs() < 1e-15);
        }
    }

    #[test]
    fn invalid_rules_rejected() {
        assert!(StepRule::Constant(0.0).validate().is_err());
        assert!(StepRule::Constant(1.5).validate().is_err());
        assert!(StepRule::DiminishingPower { alpha0: 1.0, beta: 0.5 }.validate().is_err());
        assert!(StepRule::DiminishingRecursive { alpha0: 0.5, mu: 1.0 }.validate().is_err());
        let s = StepSizeSchedule {
            rule: StepRule::Constant(0.1),
            per_agent: Some(vec![StepRule::Constant(0.1)]),
        };
        assert!(s.validate(2).is_err());
    }

    #[test]
    fn per_agent_override() {
        let s = StepSizeSchedule {
            rule: StepRule::Constant(0.1),
            per_agent: Some(vec![StepRule::Constant(0.2), StepRule::Constant(0.3)]),
        };
        let mut z = s.sizer(2);
        z.advance();
        assert_eq!(z.current(), &[0.2, 0.3]);
    }

    proptest! {
        // recursive rule: positive, decreasing, and bounded below by the
        // harmonic-type sequence 1 / (1/alpha0 + n mu / (1 - mu)), whose
        // sum diverges
        #[test]
        fn recursive_rule_is_diminishing_and_not_summable(
            alpha0 in 0.01f64..1.0,
            mu in 0.001f64..0.5,
        ) {
            let s = StepSizeSchedule::new(StepRule::DiminishingRecursive { alpha0, mu });
            let seq = s.sequence(20_000);
            for w in seq.windows(2) {
                prop_assert!(w[1] > 0.0 && w[1] < w[0]);
            }
            for (n, a) in seq.iter().enumerate() {
                let lower = 1.0 / (1.0 / alpha0 + n as f64 * mu / (1.0 - mu));
                prop_assert!(*a >= lower * (1.0 - 1e-12));
            }
        }
    }
}
