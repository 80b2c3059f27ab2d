//! On-disk digital checkpoints.
//!
//! ```text
//! manifest.txt     latent_dim, lambda, support
//! encoder.flnn
//! head.flnn
//! entropy.flem
//! ```

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use super::{decode_entropy_model, encode_entropy_model, DigitalModel};
use crate::kv;
use crate::nn::{read_checkpoint, write_checkpoint, NnError};

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("digital manifest: {0}")]
    Manifest(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("digital checkpoint io: {0}")]
    Io(#[from] std::io::Error),
}

pub fn save_digital(model: &DigitalModel, dir: impl AsRef<Path>) -> Result<(), StoreError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    fs::write(
        dir.join("manifest.txt"),
        format!(
            "latent_dim = {}\nlambda = {}\nsupport = {}\n",
            model.latent_dim(),
            model.lambda,
            model.entropy.support()
        ),
    )?;
    write_checkpoint(&model.encoder, BufWriter::new(File::create(dir.join("encoder.flnn"))?))?;
    write_checkpoint(&model.head, BufWriter::new(File::create(dir.join("head.flnn"))?))?;
    fs::write(dir.join("entropy.flem"), encode_entropy_model(&model.entropy))?;
    Ok(())
}

pub fn load_digital(dir: impl AsRef<Path>) -> Result<DigitalModel, StoreError> {
    let dir = dir.as_ref();
    let text = fs::read_to_string(dir.join("manifest.txt"))?;
    let mut kv = BTreeMap::new();
    for entry in kv::entries(&text) {
        let e = entry.map_err(|line| StoreError::Manifest(format!("line {line}: expected key = value")))?;
        kv.insert(e.key, e.value);
    }
    let field = |k: &str| -> Result<&str, StoreError> {
        kv.get(k).copied().ok_or_else(|| StoreError::Manifest(format!("missing key {k}")))
    };
    let bad = |k: &str| StoreError::Manifest(format!("invalid {k}"));
    let m: usize = field("latent_dim")?.parse().map_err(|_| bad("latent_dim"))?;
    let lambda: f64 = field("lambda")?.parse().map_err(|_| bad("lambda"))?;
    let support: i32 = field("support")?.parse().map_err(|_| bad("support"))?;

    let encoder = read_checkpoint(File::open(dir.join("encoder.flnn"))?)?;
    let head = read_checkpoint(File::open(dir.join("head.flnn"))?)?;
    let entropy = decode_entropy_model(&fs::read(dir.join("entropy.flem"))?)?;
    if encoder.out_dim() != Some(m) || head.in_dim() != Some(m) || entropy.dims() != m {
        return Err(StoreError::Manifest("network shapes do not match latent_dim".into()));
    }
    if entropy.support() != support {
        return Err(StoreError::Manifest("entropy model support does not match".into()));
    }
    Ok(DigitalModel { encoder, head, entropy, lambda })
}
