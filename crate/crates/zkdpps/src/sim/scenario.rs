//! Built-in workloads: three subscriber pipelines with hand-checkable
//! integer oracles.
//!
//! Values that are conceptually fractional arrive pre-scaled (scale recorded
//! per scenario), so every function runs on integers and the oracle is exact.

use crate::compute::{evaluate_plain, Function, Step};

/// One logical computation a subscriber ordered: which publishers feed it
/// (in operand order) and what function runs over those operands.
#[derive(Debug, Clone)]
pub struct TaskSpec {
    pub label: &'static str,
    pub sources: Vec<usize>,
    pub function: Function,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub id: u8,
    pub name: &'static str,
    /// One fixed reading per publisher, already integer-scaled.
    pub publisher_values: Vec<u64>,
    pub tasks: Vec<TaskSpec>,
    /// Plaintext modulus sized so the largest intermediate fits.
    pub plaintext_modulus: u64,
    /// Powers of ten applied before scaling; for report formatting only.
    pub display_scale: u32,
    /// Alert threshold compared against the first task's delivered value.
    pub alert_threshold: Option<u64>,
}

impl Scenario {
    pub fn by_id(id: u8) -> Option<Scenario> {
        match id {
            // Insured parties hold liabilities 5 and 7 (millions) with a zero
            // adjustment line; the combined figure gates against coverage 10.
            1 => Some(Scenario {
                id: 1,
                name: "hazmat-coverage",
                publisher_values: vec![5, 7, 0],
                tasks: vec![TaskSpec {
                    label: "combined-liability",
                    sources: vec![0, 1, 2],
                    function: Function::Pipeline(vec![
                        Step::Load(0),
                        Step::Add(1),
                        Step::Sub(2),
                    ]),
                }],
                plaintext_modulus: 65_537,
                display_scale: 0,
                alert_threshold: Some(10),
            }),
            // Two labs report stability readings 20.00 and 22.00 at scale
            // 100. The product (scale 10^4) needs a modulus above 4.4e6.
            2 => Some(Scenario {
                id: 2,
                name: "shelf-life",
                publisher_values: vec![2000, 2200],
                tasks: vec![
                    TaskSpec {
                        label: "stability-product",
                        sources: vec![0, 1],
                        function: Function::Mul,
                    },
                    TaskSpec {
                        label: "batch-total",
                        sources: vec![0, 1],
                        function: Function::Sum,
                    },
                ],
                plaintext_modulus: 100_000_007,
                display_scale: 2,
                alert_threshold: None,
            }),
            // Three component costs 3, 4, 5 and a unit price 15: total cost
            // and per-unit margin, both linear.
            3 => Some(Scenario {
                id: 3,
                name: "price-analysis",
                publisher_values: vec![3, 4, 5, 15],
                tasks: vec![
                    TaskSpec {
                        label: "cost-total",
                        sources: vec![0, 1, 2],
                        function: Function::Pipeline(vec![
                            Step::Load(0),
                            Step::AddScaled(1, 1),
                            Step::AddScaled(2, 1),
                        ]),
                    },
                    TaskSpec {
                        label: "margin",
                        sources: vec![0, 1, 2, 3],
                        function: Function::Pipeline(vec![
                            Step::Load(3),
                            Step::SubScaled(0, 1),
                            Step::SubScaled(1, 1),
                            Step::SubScaled(2, 1),
                        ]),
                    },
                ],
                plaintext_modulus: 100_000_007,
                display_scale: 0,
                alert_threshold: None,
            }),
            _ => None,
        }
    }

    pub fn all_ids() -> [u8; 3] {
        [1, 2, 3]
    }

    /// Operand values for one task, in operand order.
    pub fn operand_values(&self, spec: &TaskSpec) -> Vec<u64> {
        spec.sources
            .iter()
            .map(|&i| self.publisher_values[i])
            .collect()
    }

    /// The plaintext oracle for one task.
    pub fn expected(&self, spec: &TaskSpec) -> u64 {
        evaluate_plain(
            &spec.function,
            &self.operand_values(spec),
            self.plaintext_modulus,
        )
        .expect("built-in scenarios are well formed")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracles_match_hand_arithmetic() {
        let s1 = Scenario::by_id(1).unwrap();
        assert_eq!(s1.expected(&s1.tasks[0]), 12);
        assert!(s1.expected(&s1.tasks[0]) > s1.alert_threshold.unwrap());

        let s2 = Scenario::by_id(2).unwrap();
        assert_eq!(s2.expected(&s2.tasks[0]), 4_400_000);
        assert_eq!(s2.expected(&s2.tasks[1]), 4200);

        let s3 = Scenario::by_id(3).unwrap();
        assert_eq!(s3.expected(&s3.tasks[0]), 12);
        assert_eq!(s3.expected(&s3.tasks[1]), 3);
    }

    #[test]
    fn values_fit_their_moduli() {
        for id in Scenario::all_ids() {
            let s = Scenario::by_id(id).unwrap();
            for task in &s.tasks {
                let expected = s.expected(task);
                assert!(expected < s.plaintext_modulus);
                for v in s.operand_values(task) {
                    assert!(v < s.plaintext_modulus);
                }
            }
        }
        assert!(Scenario::by_id(0).is_none());
        assert!(Scenario::by_id(4).is_none());
    }
}
