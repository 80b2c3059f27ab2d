//! On-disk JSCC checkpoints: a directory with a `key = value` manifest and one
//! `FLNN` file per network.
//!
//! ```text
//! manifest.txt     variant, feature_dim, bandwidth, train_snr_db, power
//! extractor.flnn
//! encoder.flnn
//! decoder.flnn     zero layers for the FC variant
//! head.flnn
//! ```

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use super::{JsccError, JsccModel, Variant};
use crate::channel::SnrDb;
use crate::kv;
use crate::nn::{read_checkpoint, write_checkpoint, MlpModel};

pub const MANIFEST_FILE: &str = "manifest.txt";
const PARTS: [&str; 4] = ["extractor", "encoder", "decoder", "head"];

pub fn save_jscc(model: &JsccModel, dir: impl AsRef<Path>) -> Result<(), JsccError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let manifest = format!(
        "variant = {}\nfeature_dim = {}\nbandwidth = {}\ntrain_snr_db = {}\npower = {}\n",
        model.variant,
        model.feature_dim(),
        model.bandwidth(),
        model.train_snr,
        model.power
    );
    fs::write(dir.join(MANIFEST_FILE), manifest)?;
    for (name, part) in PARTS.iter().zip(parts(model)) {
        let f = BufWriter::new(File::create(dir.join(format!("{name}.flnn")))?);
        write_checkpoint(part, f)?;
    }
    Ok(())
}

fn parts(m: &JsccModel) -> [&MlpModel; 4] {
    [&m.extractor, &m.encoder, &m.decoder, &m.head]
}

pub fn load_jscc(dir: impl AsRef<Path>) -> Result<JsccModel, JsccError> {
    let dir = dir.as_ref();
    let text = fs::read_to_string(dir.join(MANIFEST_FILE))?;
    let mut kv = BTreeMap::new();
    for entry in kv::entries(&text) {
        let e = entry.map_err(|line| JsccError::Manifest(format!("line {line}: expected key = value")))?;
        kv.insert(e.key.to_string(), e.value.to_string());
    }
    let get = |k: &str| kv.get(k).map(String::as_str).ok_or_else(|| JsccError::Manifest(format!("missing key {k}")));
    let bad = |k: &str, v: &str| JsccError::Manifest(format!("invalid {k} {v:?}"));
    let variant: Variant = get("variant")?.parse().map_err(JsccError::Manifest)?;
    let d: usize = get("feature_dim")?.parse().map_err(|_| bad("feature_dim", get("feature_dim").unwrap()))?;
    let b: usize = get("bandwidth")?.parse().map_err(|_| bad("bandwidth", get("bandwidth").unwrap()))?;
    let train_snr: SnrDb =
        get("train_snr_db")?.parse().map_err(|_| bad("train_snr_db", get("train_snr_db").unwrap()))?;
    let power: f64 = get("power")?.parse().map_err(|_| bad("power", get("power").unwrap()))?;

    let mut loaded = Vec::with_capacity(4);
    for name in PARTS {
        loaded.push(read_checkpoint(File::open(dir.join(format!("{name}.flnn")))?)?);
    }
    let [extractor, encoder, decoder, head]: [MlpModel; 4] = loaded.try_into().expect("four parts");
    let model = JsccModel { variant, train_snr, power, extractor, encoder, decoder, head };
    check_shapes(&model, d, b)?;
    Ok(model)
}

fn check_shapes(m: &JsccModel, d: usize, b: usize) -> Result<(), JsccError> {
    let mismatch = |what: &str| Err(JsccError::Manifest(format!("{what} does not match the manifest")));
    if m.encoder.out_dim() != Some(b) || m.encoder.in_dim() != Some(d) {
        return mismatch("encoder shape");
    }
    if !m.extractor.is_identity() && (m.extractor.in_dim() != Some(d) || m.extractor.out_dim() != Some(d)) {
        return mismatch("extractor shape");
    }
    match m.variant {
        Variant::Fc if !m.decoder.is_identity() => return mismatch("FC decoder"),
        Variant::Ae if m.decoder.in_dim() != Some(b) || m.decoder.out_dim() != Some(d) => {
            return mismatch("decoder shape")
        }
        _ => {}
    }
    let head_in = if m.variant == Variant::Fc { b } else { d };
    if m.head.in_dim() != Some(head_in) {
        return mismatch("head shape");
    }
    Ok(())
}
