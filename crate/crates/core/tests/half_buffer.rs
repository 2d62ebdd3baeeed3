//! The half-buffer rotation never overwrites a half that is still needed.

use proptest::prelude::*;

use meshsim::config::MachineConfig;
use meshsim::kernels::matmul::{
    cannon_layout, half_buffer_plan, BlockShape, BufferScheme, Half, HalfLayout, Operand, HALF_A_SLOTS, HALF_B_SLOTS,
    HALF_C,
};

/// Contents of one operand's three slots: (half, generation, already sent).
type Slots = [Option<(Half, usize, bool)>; 3];

fn initial() -> Slots {
    let mut s: Slots = [None; 3];
    s[HalfLayout::INITIAL.lower] = Some((Half::Lower, 0, false));
    s[HalfLayout::INITIAL.upper] = Some((Half::Upper, 0, false));
    s
}

/// Plays `steps` rotation steps. Every core runs the same plan, so one
/// core's slots stand for both sender and receiver.
fn play(steps: usize) -> Result<(), String> {
    let mut slots = [initial(), initial()];
    for t in 0..steps {
        let (plan, after) = half_buffer_plan(t);
        for stage in [1u8, 2] {
            let transfers: Vec<_> = plan.iter().filter(|x| x.stage == stage).collect();
            if transfers.len() != 2 {
                return Err(format!("step {t} stage {stage}: {} transfers", transfers.len()));
            }
            // Sends read first, then the incoming halves land.
            let mut incoming = Vec::new();
            for x in &transfers {
                let s = &mut slots[(x.operand == Operand::B) as usize];
                match s[x.src_slot] {
                    Some((h, g, false)) if h == x.half && g == t => s[x.src_slot] = Some((h, g, true)),
                    other => return Err(format!("step {t}: sending {:?} from slot {} holding {other:?}", x.half, x.src_slot)),
                }
                incoming.push((x.operand, x.half, x.dst_slot));
            }
            for (op, half, dst) in incoming {
                let s = &mut slots[(op == Operand::B) as usize];
                match s[dst] {
                    None | Some((_, _, true)) => s[dst] = Some((half, t + 1, false)),
                    live => return Err(format!("step {t}: slot {dst} overwritten while holding {live:?}")),
                }
            }
        }
        for s in &slots {
            if s[after.lower] != Some((Half::Lower, t + 1, false)) || s[after.upper] != Some((Half::Upper, t + 1, false)) {
                return Err(format!("step {t}: layout {after:?} does not match slots {s:?}"));
            }
            let mut used = [after.lower, after.upper, after.free];
            used.sort();
            if used != [0, 1, 2] {
                return Err(format!("step {t}: layout {after:?} is not a permutation"));
            }
        }
    }
    Ok(())
}

#[test]
fn long_rotation_is_safe() {
    play(64).unwrap();
}

proptest! {
    #[test]
    fn any_number_of_steps_is_safe(steps in 0usize..40) {
        prop_assert!(play(steps).is_ok(), "{:?}", play(steps));
    }
}

#[test]
fn half_slots_hold_half_a_32_block_and_do_not_overlap() {
    let cfg = MachineConfig::default();
    let half_bytes = 32 * 32 * 4 / 2;
    let mut starts: Vec<u32> = HALF_A_SLOTS.iter().chain(HALF_B_SLOTS.iter()).copied().collect();
    starts.push(HALF_C);
    starts.sort();
    for w in starts.windows(2) {
        assert!(w[1] - w[0] >= half_bytes, "{:#x} and {:#x}", w[0], w[1]);
    }
    assert!(HALF_C + 32 * 32 * 4 <= cfg.memory.local_bytes() as u32);
    cannon_layout(BlockShape::square(32), BufferScheme::Half)
        .validate(&cfg.memory)
        .unwrap();
    assert!(cannon_layout(BlockShape::square(32), BufferScheme::Double)
        .validate(&cfg.memory)
        .is_err());
}
