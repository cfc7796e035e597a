use sha2::{Digest, Sha256};

use super::checkpoint::NamedTensor;
use crate::error::{Error, Result};

/// A bundle of parameter tensors visited in a fixed order.
///
/// Every tensor is a contiguous row-major slice. Gradients are stored in a
/// value of the same type, so optimizers can pair tensors by visit order.
pub trait Parameters: Clone {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &[usize], &[f64]));
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64]));
}

pub fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_owned()
    } else {
        format!("{prefix}.{name}")
    }
}

pub fn zeros_like<P: Parameters>(p: &P) -> P {
    let mut z = p.clone();
    z.visit_mut(&mut |s| s.fill(0.0));
    z
}

pub fn flatten<P: Parameters>(p: &P) -> Vec<f64> {
    let mut out = Vec::new();
    p.visit("", &mut |_, _, s| out.extend_from_slice(s));
    out
}

pub fn tensor_slices<P: Parameters>(p: &P) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    p.visit("", &mut |_, _, s| out.push(s.to_vec()));
    out
}

pub fn num_params<P: Parameters>(p: &P) -> usize {
    let mut n = 0;
    p.visit("", &mut |_, _, s| n += s.len());
    n
}

/// Overwrites every parameter from a flat vector in visit order.
pub fn assign_flat<P: Parameters>(p: &mut P, flat: &[f64]) {
    let mut offset = 0;
    p.visit_mut(&mut |s| {
        s.copy_from_slice(&flat[offset..offset + s.len()]);
        offset += s.len();
    });
    assert_eq!(offset, flat.len(), "flat vector length mismatch");
}

/// `dst += scale * src`, tensor by tensor.
pub fn add_scaled<P: Parameters>(dst: &mut P, src: &P, scale: f64) {
    let src = tensor_slices(src);
    let mut k = 0;
    dst.visit_mut(&mut |s| {
        for (d, v) in s.iter_mut().zip(&src[k]) {
            *d += scale * v;
        }
        k += 1;
    });
}

pub fn scale<P: Parameters>(p: &mut P, factor: f64) {
    p.visit_mut(&mut |s| s.iter_mut().for_each(|v| *v *= factor));
}

pub fn global_norm<P: Parameters>(p: &P) -> f64 {
    let mut sq = 0.0;
    p.visit("", &mut |_, _, s| sq += s.iter().map(|v| v * v).sum::<f64>());
    sq.sqrt()
}

/// Rescales gradients so their global L2 norm is at most `max_norm`.
pub fn clip_global_norm<P: Parameters>(grads: &mut P, max_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if norm > max_norm && norm.is_finite() {
        scale(grads, max_norm / norm);
    }
    norm
}

pub fn all_finite<P: Parameters>(p: &P) -> bool {
    let mut ok = true;
    p.visit("", &mut |_, _, s| ok &= s.iter().all(|v| v.is_finite()));
    ok
}

/// Hex digest of the exact parameter bits.
pub fn checksum<P: Parameters>(p: &P) -> String {
    let mut hasher = Sha256::new();
    p.visit("", &mut |name, shape, s| {
        hasher.update(name.as_bytes());
        for d in shape {
            hasher.update((*d as u64).to_le_bytes());
        }
        for v in s {
            hasher.update(v.to_bits().to_le_bytes());
        }
    });
    hex::encode(&hasher.finalize()[..16])
}

pub fn to_named<P: Parameters>(p: &P, prefix: &str) -> Vec<NamedTensor> {
    let mut out = Vec::new();
    p.visit(prefix, &mut |name, shape, s| {
        out.push(NamedTensor {
            name,
            shape: shape.to_vec(),
            data: s.to_vec(),
        })
    });
    out
}

/// Loads tensors saved by [`to_named`] into `p`, checking names and shapes.
pub fn load_named<P: Parameters>(p: &mut P, prefix: &str, tensors: &[NamedTensor]) -> Result<()> {
    let mut expected = Vec::new();
    p.visit(prefix, &mut |name, shape, _| expected.push((name, shape.to_vec())));
    let found: Vec<&NamedTensor> = tensors
        .iter()
        .filter(|t| prefix.is_empty() || t.name.starts_with(&format!("{prefix}.")))
        .collect();
    if found.len() != expected.len() {
        return Err(Error::invalid(format!(
            "checkpoint has {} tensors under `{prefix}`, model expects {}",
            found.len(),
            expected.len()
        )));
    }
    for ((name, shape), t) in expected.iter().zip(&found) {
        if *name != t.name || *shape != t.shape {
            return Err(Error::invalid(format!(
                "checkpoint tensor {} {:?} does not match model tensor {name} {shape:?}",
                t.name, t.shape
            )));
        }
    }
    let mut k = 0;
    p.visit_mut(&mut |s| {
        s.copy_from_slice(&found[k].data);
        k += 1;
    });
    Ok(())
}
