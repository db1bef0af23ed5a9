mod common;

use proptest::prelude::*;

use common::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(CASES))]

    #[test]
    fn channel_sequences_conserve_and_advance((ppm, ops) in chan_ops()) {
        check_channel_sequence(ppm, &ops)?;
    }

    #[test]
    fn frames_round_trip_and_detect_tampering(case in frame_case()) {
        check_frame(case)?;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn delayed_outputs_unlock_exactly_at_delay((delay, revocable) in delay_case()) {
        check_timelock(delay, revocable)?;
    }
}
