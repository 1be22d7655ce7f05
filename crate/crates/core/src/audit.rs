//! Integer-only execution audit.
//!
//! Every helper that performs real-number arithmetic on scales calls
//! [`real_op`]. While an [`IntegerOnly`] guard is alive on the current thread
//! those calls are recorded as violations, so a forward pass can prove it
//! consumed scales only in precomputed dyadic/integer form.

use std::cell::RefCell;

use crate::error::{Error, Result};

thread_local! {
    static STATE: RefCell<Option<Vec<&'static str>>> = const { RefCell::new(None) };
}

/// Marks a real-arithmetic operation on scales.
pub fn real_op(what: &'static str) {
    STATE.with(|s| {
        if let Some(v) = s.borrow_mut().as_mut() {
            v.push(what);
        }
    });
}

pub fn is_active() -> bool {
    STATE.with(|s| s.borrow().is_some())
}

/// Audit scope for the current thread. Nested guards are not supported.
pub struct IntegerOnly {
    _private: (),
}

impl IntegerOnly {
    pub fn begin() -> Self {
        STATE.with(|s| {
            let mut s = s.borrow_mut();
            assert!(s.is_none(), "nested integer-only audit");
            *s = Some(Vec::new());
        });
        IntegerOnly { _private: () }
    }

    /// Ends the scope, failing if any real operation was recorded.
    pub fn finish(self) -> Result<()> {
        let seen = STATE.with(|s| s.borrow_mut().take()).unwrap_or_default();
        std::mem::forget(self);
        if seen.is_empty() {
            Ok(())
        } else {
            Err(Error::Audit(format!(
                "real arithmetic in integer path: {}",
                seen.join(", ")
            )))
        }
    }
}

impl Drop for IntegerOnly {
    fn drop(&mut self) {
        STATE.with(|s| s.borrow_mut().take());
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn records_only_inside_scope() {
        real_op("outside");
        let g = IntegerOnly::begin();
        assert!(is_active());
        assert!(g.finish().is_ok());
        let g = IntegerOnly::begin();
        real_op("dyadic conversion");
        let err = g.finish().unwrap_err();
        assert!(err.to_string().contains("dyadic conversion"));
        assert!(!is_active());
    }
}
