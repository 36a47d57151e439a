//! Process-wide execution mode for the interpolation kernels.
//!
//! Parallel kernels partition work into fixed-size chunks and merge partial
//! results in chunk order, so their output does not depend on the thread
//! count. It can still differ from the sequential kernels in the last bits
//! because the floating-point summation order changes. Setting
//! `FLOWFIELD_DETERMINISTIC=1` (or calling [`set_deterministic`]) forces the
//! sequential kernels everywhere.

use std::sync::atomic::{AtomicU8, Ordering};

pub const DETERMINISTIC_ENV: &str = "FLOWFIELD_DETERMINISTIC";

const UNSET: u8 = 0;
const SEQUENTIAL: u8 = 1;
const PARALLEL: u8 = 2;

static MODE: AtomicU8 = AtomicU8::new(UNSET);

/// Forces (or releases) sequential execution for the rest of the process.
pub fn set_deterministic(on: bool) {
    MODE.store(if on { SEQUENTIAL } else { PARALLEL }, Ordering::Relaxed);
}

pub fn is_deterministic() -> bool {
    match MODE.load(Ordering::Relaxed) {
        SEQUENTIAL => true,
        PARALLEL => false,
        _ => {
            let on = std::env::var(DETERMINISTIC_ENV)
                .map(|v| matches!(v.trim(), "1" | "true" | "yes"))
                .unwrap_or(false);
            // Another thread may have set the mode explicitly in between.
            let _ = MODE.compare_exchange(
                UNSET,
                if on { SEQUENTIAL } else { PARALLEL },
                Ordering::Relaxed,
                Ordering::Relaxed,
            );
            MODE.load(Ordering::Relaxed) == SEQUENTIAL
        }
    }
}
