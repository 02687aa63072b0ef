use crate::domain::{ClusterId, Observation, Vote};

use super::world::BehaviorProfile;

/// What a robot would do with a fresh tag reading.
#[derive(Debug, Clone, PartialEq)]
pub struct Action {
    pub submit: bool,
    pub vote: Vote,
    pub observation: Observation,
    pub target: Option<ClusterId>,
}

/// Honest reaction to a tag: endorse valuable landmarks, reject the rest.
/// Validators always report; explorers only report valuable finds unless
/// `report_non_valuable` is set.
pub fn honest_action(
    valuable: bool,
    observation: Observation,
    target: Option<ClusterId>,
    report_non_valuable: bool,
) -> Action {
    Action {
        submit: target.is_some() || valuable || report_non_valuable,
        vote: if valuable { Vote::Accept } else { Vote::Reject },
        observation,
        target,
    }
}

pub fn apply_behavior(profile: BehaviorProfile, honest: Action) -> Action {
    match profile {
        BehaviorProfile::Honest => honest,
        BehaviorProfile::SafetyAttacker => Action {
            submit: true,
            vote: honest.vote.inverted(),
            ..honest
        },
        BehaviorProfile::LivenessAttacker | BehaviorProfile::PhysicalAttacker => Action {
            submit: false,
            ..honest
        },
        BehaviorProfile::CombinedAttacker => {
            // Accept is the honest vote exactly at valuable landmarks.
            let at_valuable = honest.vote == Vote::Accept;
            Action {
                submit: !at_valuable,
                vote: Vote::Accept,
                ..honest
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn red() -> Action {
        honest_action(true, Observation::new(vec![200.0, 10.0, 10.0]), None, false)
    }

    fn green(target: Option<ClusterId>) -> Action {
        honest_action(false, Observation::new(vec![10.0, 200.0, 10.0]), target, false)
    }

    #[test]
    fn honest_explorer_reports_only_valuable_tags() {
        assert!(red().submit);
        assert_eq!(red().vote, Vote::Accept);
        assert!(!green(None).submit);
        assert!(green(Some(ClusterId(2))).submit);
        assert_eq!(green(Some(ClusterId(2))).vote, Vote::Reject);
        assert!(honest_action(false, Observation::zeros(3), None, true).submit);
    }

    #[test]
    fn attack_profiles() {
        let p = BehaviorProfile::SafetyAttacker;
        let a = apply_behavior(p, red());
        assert!(a.submit);
        assert_eq!(a.vote, Vote::Reject);
        let a = apply_behavior(p, green(None));
        assert!(a.submit);
        assert_eq!(a.vote, Vote::Accept);

        for p in [BehaviorProfile::LivenessAttacker, BehaviorProfile::PhysicalAttacker] {
            assert!(!apply_behavior(p, red()).submit);
            assert!(!apply_behavior(p, green(Some(ClusterId(1)))).submit);
        }

        let p = BehaviorProfile::CombinedAttacker;
        assert!(!apply_behavior(p, red()).submit);
        let a = apply_behavior(p, green(None));
        assert!(a.submit);
        assert_eq!(a.vote, Vote::Accept);

        assert_eq!(apply_behavior(BehaviorProfile::Honest, red()), red());
    }
}
