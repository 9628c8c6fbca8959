//! Flush-to-zero floating-point mode for training.
//!
//! Saturated LSTM gates push gradients into the subnormal range, where x86
//! arithmetic is many times slower. Training does not depend on values that
//! small, so it runs with subnormal inputs and results flushed to zero.

/// Enables flush-to-zero on the calling thread and every rayon worker for
/// its lifetime, then restores each thread's previous mode.
pub struct FlushDenormals {
    saved: Vec<u32>,
    caller: u32,
}

impl FlushDenormals {
    pub fn new() -> Self {
        let caller = imp::enable();
        let saved = rayon::broadcast(|_| imp::enable());
        FlushDenormals { saved, caller }
    }
}

impl Default for FlushDenormals {
    fn default() -> Self {
        Self::new()
    }
}

impl Drop for FlushDenormals {
    fn drop(&mut self) {
        let saved = &self.saved;
        rayon::broadcast(|ctx| imp::restore(saved[ctx.index()]));
        imp::restore(self.caller);
    }
}

#[cfg(target_arch = "x86_64")]
mod imp {
    use std::arch::asm;

    const FTZ: u32 = 1 << 15;
    const DAZ: u32 = 1 << 6;

    fn read() -> u32 {
        let mut csr = 0u32;
        // SAFETY: stmxcsr stores the 32-bit control register to a valid local.
        unsafe { asm!("stmxcsr [{}]", in(reg) &mut csr, options(nostack, preserves_flags)) };
        csr
    }

    fn write(csr: u32) {
        // SAFETY: only the rounding/flush/mask bits read back from the
        // register are written, so no reserved bit is set.
        unsafe { asm!("ldmxcsr [{}]", in(reg) &csr, options(nostack, preserves_flags)) };
    }

    pub fn enable() -> u32 {
        let old = read();
        write(old | FTZ | DAZ);
        old
    }

    pub fn restore(old: u32) {
        write(old);
    }

    #[cfg(test)]
    pub fn active() -> bool {
        read() & (FTZ | DAZ) == FTZ | DAZ
    }
}

#[cfg(not(target_arch = "x86_64"))]
mod imp {
    pub fn enable() -> u32 {
        0
    }

    pub fn restore(_: u32) {}

    #[cfg(test)]
    pub fn active() -> bool {
        true
    }
}
