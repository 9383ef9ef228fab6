//! The fixed battery of heuristic tactics tried alongside hammer output.

use super::{TacticCandidate, TacticSource};

/// The eleven heuristic tactics, in priority order.
pub const HEURISTIC_TACTICS: [&str; 11] = [
    "by auto",
    "by simp",
    "by blast",
    "by fastforce",
    "by force",
    "by eval",
    "by presburger",
    "by sos",
    "by arith",
    "by linarith",
    "by (auto simp: field_simps)",
];

pub fn heuristic_tactics() -> Vec<TacticCandidate> {
    HEURISTIC_TACTICS
        .iter()
        .map(|t| {
            TacticCandidate::new(t, TacticSource::Heuristic)
                .expect("heuristic tactics parse as justifications")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exactly_eleven_in_order() {
        let battery = heuristic_tactics();
        assert_eq!(battery.len(), 11);
        assert_eq!(battery[0].text, "by auto");
        assert_eq!(battery[10].text, "by (auto simp: field_simps)");
        assert!(battery.iter().all(|t| t.source == TacticSource::Heuristic));
    }
}
