//! Binary checkpoints and atomic file output.
//!
//! Layout: the magic line `KANVMC1\n`, `key=value` header lines, one blank
//! line, then little-endian f64 values: every SineKAN layer's δ array in
//! layer order followed by the flattened parameters.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::ansatz::{Ansatz, AnsatzKind, FLATTEN_VERSION};
use crate::error::{Error, Result};

pub const MAGIC: &[u8] = b"KANVMC1\n";

/// Writes through a temporary sibling file and renames it into place, so
/// readers never observe a partial file.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = PathBuf::from(tmp);
    let write = || -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn join(xs: &[usize]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

pub fn to_bytes(model: &Ansatz) -> Vec<u8> {
    let dims = model.layer_dims();
    let hidden = &dims[..dims.len() - 1];
    let deltas: Vec<&[f64]> = model
        .sinekan_layers()
        .map(|ls| ls.iter().map(|l| l.delta()).collect())
        .unwrap_or_default();

    let mut payload = Vec::new();
    for d in &deltas {
        for x in d.iter() {
            payload.extend_from_slice(&x.to_le_bytes());
        }
    }
    for x in model.params() {
        payload.extend_from_slice(&x.to_le_bytes());
    }

    let mut header = vec![
        format!("kind={}", model.kind().name()),
        format!("n_sites={}", model.n_sites()),
    ];
    match model.kind() {
        AnsatzKind::Rbm => header.push(format!("alpha={}", dims[0] / model.n_sites())),
        _ => header.push(format!("hidden={}", join(hidden))),
    }
    if let Some(g) = model.grid() {
        header.push(format!("grid={g}"));
    }
    header.push(format!("reflected={}", model.is_reflected()));
    header.push(format!("seed={}", model.seed()));
    header.push(format!("flatten_version={FLATTEN_VERSION}"));
    if !deltas.is_empty() {
        header.push(format!(
            "delta_counts={}",
            join(&deltas.iter().map(|d| d.len()).collect::<Vec<_>>())
        ));
    }
    header.push(format!("param_count={}", model.param_count()));
    header.push(format!("checksum={:016x}", fnv1a64(&payload)));

    let mut out = MAGIC.to_vec();
    for line in header {
        out.extend_from_slice(line.as_bytes());
        out.push(b'\n');
    }
    out.push(b'\n');
    out.extend_from_slice(&payload);
    out
}

pub fn save(path: impl AsRef<Path>, model: &Ansatz) -> Result<()> {
    write_atomic(path, &to_bytes(model))
}

pub fn load(path: impl AsRef<Path>) -> Result<Ansatz> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes).map_err(|e| match e {
        Error::Checkpoint { message, .. } => Error::Checkpoint {
            path: path.to_path_buf(),
            message,
        },
        other => other,
    })
}

fn bad(message: impl Into<String>) -> Error {
    Error::Checkpoint {
        path: PathBuf::new(),
        message: message.into(),
    }
}

struct Header<'a>(Vec<(&'a str, &'a str)>);

impl<'a> Header<'a> {
    fn get(&self, key: &str) -> Result<&'a str> {
        self.0
            .iter()
            .find(|(k, _)| *k == key)
            .map(|(_, v)| *v)
            .ok_or_else(|| bad(format!("missing header key `{key}`")))
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let v = self.get(key)?;
        v.parse().map_err(|_| bad(format!("bad value `{v}` for `{key}`")))
    }

    fn list(&self, key: &str) -> Result<Vec<usize>> {
        let v = self.get(key)?;
        if v.is_empty() {
            return Ok(Vec::new());
        }
        v.split(',')
            .map(|x| x.parse().map_err(|_| bad(format!("bad list `{v}` for `{key}`"))))
            .collect()
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<Ansatz> {
    if !bytes.starts_with(MAGIC) {
        return Err(bad("not a checkpoint (magic mismatch)"));
    }
    let rest = &bytes[MAGIC.len()..];
    let end = rest
        .windows(2)
        .position(|w| w == b"\n\n")
        .ok_or_else(|| bad("truncated header"))?;
    let text = std::str::from_utf8(&rest[..end]).map_err(|_| bad("header is not UTF-8"))?;
    let payload = &rest[end + 2..];
    let mut pairs = Vec::new();
    for line in text.lines() {
        let (k, v) = line.split_once('=').ok_or_else(|| bad(format!("malformed header line `{line}`")))?;
        pairs.push((k, v));
    }
    let h = Header(pairs);

    let version: u32 = h.parse("flatten_version")?;
    if version != FLATTEN_VERSION {
        return Err(bad(format!(
            "flatten_version {version} is not supported (expected {FLATTEN_VERSION})"
        )));
    }
    let kind = h.get("kind")?;
    let n_sites: usize = h.parse("n_sites")?;
    let reflected: bool = h.parse("reflected")?;
    let seed: u64 = h.parse("seed")?;
    let param_count: usize = h.parse("param_count")?;
    let delta_counts = if kind == AnsatzKind::Sinekan.name() {
        h.list("delta_counts")?
    } else {
        Vec::new()
    };
    let n_values = delta_counts.iter().sum::<usize>() + param_count;
    match payload.len().cmp(&(8 * n_values)) {
        std::cmp::Ordering::Less => return Err(bad("truncated payload")),
        std::cmp::Ordering::Greater => return Err(bad("trailing bytes after payload")),
        std::cmp::Ordering::Equal => {}
    }
    let checksum = u64::from_str_radix(h.get("checksum")?, 16).map_err(|_| bad("bad checksum field"))?;
    if fnv1a64(payload) != checksum {
        return Err(bad("payload checksum mismatch"));
    }
    let mut values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
    let deltas: Vec<Vec<f64>> = delta_counts.iter().map(|&c| values.by_ref().take(c).collect()).collect();
    let params: Vec<f64> = values.collect();

    let model = match kind {
        "sinekan" => {
            let hidden = h.list("hidden")?;
            let grid: usize = h.parse("grid")?;
            Ansatz::sinekan_from_parts(n_sites, &hidden, grid, reflected, seed, deltas, params)?
        }
        "mlp" => {
            let mut m = Ansatz::mlp(n_sites, &h.list("hidden")?, reflected, seed)?;
            m.set_params(&params)?;
            m
        }
        "rbm" => {
            let mut m = Ansatz::rbm(n_sites, h.parse("alpha")?, reflected, seed)?;
            m.set_params(&params)?;
            m
        }
        other => return Err(bad(format!("unknown ansatz kind `{other}`"))),
    };
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ansatz::SineKanOptions;
    use crate::spin::SpinConfig;

    fn models() -> Vec<Ansatz> {
        vec![
            Ansatz::sinekan(10, &SineKanOptions { hidden: vec![6, 5], grid: 3, reflected: true, seed: 4, ..Default::default() }).unwrap(),
            Ansatz::mlp(10, &[7, 3], false, 2).unwrap(),
            Ansatz::rbm(10, 2, true, 1).unwrap(),
        ]
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = std::env::temp_dir().join(format!("kanvmc-ckpt-{}", std::process::id()));
        for (i, m) in models().into_iter().enumerate() {
            let path = dir.join(format!("m{i}.ckpt"));
            save(&path, &m).unwrap();
            let back = load(&path).unwrap();
            assert_eq!(back.kind(), m.kind());
            assert_eq!(back.params(), m.params());
            assert_eq!(back.tag(), m.tag());
            for code in (0..1024u64).step_by(10) {
                let c = SpinConfig::from_code(code, 10).unwrap();
                assert_eq!(back.log_psi(&c).unwrap().to_bits(), m.log_psi(&c).unwrap().to_bits());
            }
        }
        let _ = fs::remove_dir_all(dir);
    }

    #[test]
    fn corrupted_files_are_rejected() {
        let m = &models()[0];
        let good = to_bytes(m);
        assert!(from_bytes(&good).is_ok());

        let err = |b: &[u8]| match from_bytes(b) {
            Err(Error::Checkpoint { message, .. }) => message,
            other => panic!("expected checkpoint error, got {other:?}"),
        };
        assert!(err(&good[..good.len() - 3]).contains("truncated"));
        let mut long = good.clone();
        long.push(0);
        assert!(err(&long).contains("trailing"));
        let mut flipped = good.clone();
        let last = flipped.len() - 1;
        flipped[last] ^= 0x40;
        assert!(err(&flipped).contains("checksum"));
        let mut bumped_bytes = good.clone();
        let pos = String::from_utf8_lossy(&good[..200]).find("flatten_version=1").unwrap() + 16;
        bumped_bytes[pos] = b'2';
        assert!(err(&bumped_bytes).contains("flatten_version 2"));
        assert!(err(b"KANVMC0\nkind=x\n\n").contains("magic"));
        assert!(err(b"KANVMC1\nkind=sinekan").contains("truncated header"));
    }

    #[test]
    fn header_is_readable_text() {
        let bytes = to_bytes(&models()[0]);
        let text = String::from_utf8_lossy(&bytes[..bytes.windows(2).position(|w| w == b"\n\n").unwrap()]).into_owned();
        assert!(text.starts_with("KANVMC1\nkind=sinekan\nn_sites=10\nhidden=6,5\ngrid=3\nreflected=true\nseed=4\nflatten_version=1\ndelta_counts=30,18,15\n"));
    }
}
