use alloc::format;
use alloc::string::String;

use crate::error::{config_err, Result};
use crate::nn::DenseNet;
use crate::tensor::Tensor2;

/// Uniform access to every parameter tensor of a composite model by
/// dotted name (e.g. `head.prior.layer0.weight`).
pub trait NamedParams {
    fn visit_params(&self, f: &mut dyn FnMut(&str, &Tensor2));

    fn assign_param(&mut self, name: &str, value: &Tensor2) -> Result<()>;

    fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit_params(&mut |_, t| n += t.data().len());
        n
    }

    /// FNV-1a over names, shapes and the bit patterns of every value.
    fn param_fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |bytes: &[u8]| {
            for &b in bytes {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        self.visit_params(&mut |name, t| {
            eat(name.as_bytes());
            eat(&(t.rows() as u64).to_le_bytes());
            eat(&(t.cols() as u64).to_le_bytes());
            for v in t.data() {
                eat(&v.to_bits().to_le_bytes());
            }
        });
        h
    }
}

impl NamedParams for DenseNet {
    fn visit_params(&self, f: &mut dyn FnMut(&str, &Tensor2)) {
        for (name, value, _) in self.params().iter() {
            f(name, value);
        }
    }

    fn assign_param(&mut self, name: &str, value: &Tensor2) -> Result<()> {
        self.params_mut().assign(name, value)
    }
}

pub(crate) fn visit_prefixed(
    prefix: &str,
    inner: &dyn NamedParams,
    f: &mut dyn FnMut(&str, &Tensor2),
) {
    inner.visit_params(&mut |name, t| {
        let full: String = format!("{prefix}.{name}");
        f(&full, t)
    });
}

/// Splits `a.b.c` into (`a`, `b.c`).
pub(crate) fn split_prefix(name: &str) -> Result<(&str, &str)> {
    name.split_once('.')
        .ok_or_else(|| config_err!("parameter name `{name}` has no component prefix"))
}
