//! File formats: PFM float images, the EQT1 tensor container, key=value
//! manifests, and filter-bank / network-spec serialization.
//!
//! * PFM: binary `PF` (3-channel) / `Pf` (1-channel) magic, dimensions,
//!   then a scale whose sign encodes endianness (negative = little-endian,
//!   the only endianness we write). Scanlines are stored bottom-to-top as
//!   usual for the format, 32-bit floats. The mesh size travels in a
//!   `<file>.meta` sidecar of `key=value` lines.
//! * EQT1: ASCII header line `EQT1 H W t C h\n` followed by `H*W*t*C`
//!   little-endian 64-bit floats in row-major `(i, j, k, c)` order;
//!   round-trips bit-exactly.
//!
//! Format errors report the byte offset at which parsing failed; for text
//! manifests the offset is the 1-based line number.

use crate::conv::{Activation, EquivNetSpec, NetLayer};
use crate::error::{Error, Result};
use crate::filters::{FilterBank, FourierTerm, LayerKind, SteerableFilter};
use crate::grid::{GroupFeatureMap, Image};
use std::fs;
use std::io::Write as _;
use std::path::Path;

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

/// Write an image as PFM (plus a `.meta` sidecar carrying the mesh size).
/// Only 1- and 3-channel images are representable.
pub fn write_pfm(path: &Path, img: &Image) -> Result<()> {
    let magic = match img.channels {
        1 => "Pf",
        3 => "PF",
        c => return Err(Error::invalid(format!("PFM supports 1 or 3 channels, got {c}"))),
    };
    let mut bytes = Vec::with_capacity(32 + img.height * img.width * img.channels * 4);
    bytes.extend_from_slice(format!("{magic}\n{} {}\n-1.0\n", img.width, img.height).as_bytes());
    for i in (0..img.height).rev() {
        for j in 0..img.width {
            for c in 0..img.channels {
                bytes.extend_from_slice(&(img.at(i, j, c) as f32).to_le_bytes());
            }
        }
    }
    write_file(path, &bytes)?;
    let meta = format!("mesh_size={:.17e}\norigin=centered\n", img.mesh_size);
    write_file(&sidecar_path(path), meta.as_bytes())
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(".meta");
    std::path::PathBuf::from(s)
}

struct Tokenizer<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Tokenizer<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Tokenizer { bytes, pos: 0 }
    }

    /// Next whitespace-delimited ASCII token; returns (offset, token).
    fn token(&mut self) -> Result<(u64, &'a str)> {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::format(start as u64, "unexpected end of header"));
        }
        let tok = std::str::from_utf8(&self.bytes[start..self.pos])
            .map_err(|_| Error::format(start as u64, "non-UTF8 header token"))?;
        Ok((start as u64, tok))
    }

    /// Consume exactly one whitespace byte after the last header token.
    fn skip_one_whitespace(&mut self) -> Result<()> {
        if self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
            Ok(())
        } else {
            Err(Error::format(self.pos as u64, "missing separator after header"))
        }
    }
}

/// Read a PFM image; the mesh size comes from the `.meta` sidecar when
/// present (1.0 otherwise).
pub fn read_pfm(path: &Path) -> Result<Image> {
    let bytes = read_file(path)?;
    let mut tk = Tokenizer::new(&bytes);
    let (off, magic) = tk.token()?;
    let channels = match magic {
        "PF" => 3,
        "Pf" => 1,
        other => return Err(Error::format(off, format!("bad PFM magic '{other}'"))),
    };
    let (off, w) = tk.token()?;
    let width: usize = w.parse().map_err(|_| Error::format(off, format!("bad width '{w}'")))?;
    let (off, h) = tk.token()?;
    let height: usize = h.parse().map_err(|_| Error::format(off, format!("bad height '{h}'")))?;
    let (off, sc) = tk.token()?;
    let scale: f64 = sc.parse().map_err(|_| Error::format(off, format!("bad scale '{sc}'")))?;
    if scale == 0.0 {
        return Err(Error::format(off, "zero scale"));
    }
    tk.skip_one_whitespace()?;
    let little_endian = scale < 0.0;
    let payload = &bytes[tk.pos..];
    let expect = height
        .checked_mul(width)
        .and_then(|v| v.checked_mul(channels))
        .and_then(|v| v.checked_mul(4))
        .ok_or_else(|| Error::format(0, "dimensions overflow"))?;
    if payload.len() < expect {
        return Err(Error::format(
            (tk.pos + payload.len()) as u64,
            format!("payload truncated: need {expect} bytes, have {}", payload.len()),
        ));
    }
    if width == 0 || height == 0 {
        return Err(Error::format(0, "zero dimensions"));
    }

    let mesh_size = read_mesh_sidecar(path).unwrap_or(1.0);
    let mut img = Image::zeros(height, width, channels, mesh_size);
    let mut idx = 0;
    for i in (0..height).rev() {
        for j in 0..width {
            for c in 0..channels {
                let raw: [u8; 4] = payload[idx..idx + 4].try_into().unwrap();
                let v = if little_endian { f32::from_le_bytes(raw) } else { f32::from_be_bytes(raw) };
                img.set(i, j, c, v as f64);
                idx += 4;
            }
        }
    }
    Ok(img)
}

fn read_mesh_sidecar(path: &Path) -> Option<f64> {
    let text = fs::read_to_string(sidecar_path(path)).ok()?;
    for line in text.lines() {
        if let Some(v) = line.strip_prefix("mesh_size=") {
            return v.trim().parse().ok();
        }
    }
    None
}

/// Write a group feature map in the EQT1 container.
pub fn write_tensor(path: &Path, fmap: &GroupFeatureMap) -> Result<()> {
    let mut bytes = Vec::with_capacity(64 + fmap.data().len() * 8);
    bytes.extend_from_slice(
        format!(
            "EQT1 {} {} {} {} {:.17e}\n",
            fmap.height, fmap.width, fmap.group_order, fmap.channels, fmap.mesh_size
        )
        .as_bytes(),
    );
    for v in fmap.data() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    write_file(path, &bytes)
}

/// Read an EQT1 tensor.
pub fn read_tensor(path: &Path) -> Result<GroupFeatureMap> {
    let bytes = read_file(path)?;
    let mut tk = Tokenizer::new(&bytes);
    let (off, magic) = tk.token()?;
    if magic != "EQT1" {
        return Err(Error::format(off, format!("bad magic '{magic}', expected EQT1")));
    }
    let mut dims = [0usize; 4];
    for d in &mut dims {
        let (off, tok) = tk.token()?;
        *d = tok.parse().map_err(|_| Error::format(off, format!("bad dimension '{tok}'")))?;
    }
    let (off, htok) = tk.token()?;
    let mesh: f64 = htok.parse().map_err(|_| Error::format(off, format!("bad mesh size '{htok}'")))?;
    tk.skip_one_whitespace()?;
    let payload = &bytes[tk.pos..];
    let count = dims.iter().product::<usize>();
    if payload.len() != count * 8 {
        return Err(Error::format(
            (tk.pos + payload.len().min(count * 8)) as u64,
            format!("payload has {} bytes, header implies {}", payload.len(), count * 8),
        ));
    }
    let data: Vec<f64> =
        payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    GroupFeatureMap::new(dims[0], dims[1], dims[2], dims[3], mesh, data)
}

/// Read a flat `key=value` text file; returns `(line_number, key, value)`
/// triples, skipping blank lines and `#` comments.
pub fn read_kv(path: &Path) -> Result<Vec<(usize, String, String)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_kv(&text)
}

pub fn parse_kv(text: &str) -> Result<Vec<(usize, String, String)>> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        match trimmed.split_once('=') {
            Some((k, v)) => out.push((lineno, k.trim().to_string(), v.trim().to_string())),
            None => {
                return Err(Error::format(lineno as u64, format!("line {lineno}: expected key=value, got '{trimmed}'")))
            }
        }
    }
    Ok(out)
}

pub fn write_kv(path: &Path, pairs: &[(String, String)]) -> Result<()> {
    let mut text = String::new();
    for (k, v) in pairs {
        text.push_str(k);
        text.push('=');
        text.push_str(v);
        text.push('\n');
    }
    write_file(path, text.as_bytes())
}

/// Serialize a filter bank as `<base>.eqt` (coefficient tensor, one row of
/// `(freq0, freq1, cos, sin)` per term per filter) plus `<base>.meta`.
pub fn write_bank(base: &Path, bank: &FilterBank) -> Result<()> {
    let filters = bank.filters();
    let terms = filters.first().map(|f| f.terms.len()).unwrap_or(0);
    if filters.iter().any(|f| f.terms.len() != terms) {
        return Err(Error::invalid("all filters in a serialized bank must have equal term counts"));
    }
    let radius = filters[0].radius;
    let mut data = Vec::with_capacity(filters.len() * terms.max(1) * 4);
    let cols = terms.max(1);
    for f in filters {
        for q in 0..cols {
            if q < f.terms.len() {
                let t = &f.terms[q];
                data.extend_from_slice(&[t.freq.0, t.freq.1, t.cos_coeff, t.sin_coeff]);
            } else {
                data.extend_from_slice(&[0.0, 0.0, 0.0, 0.0]);
            }
        }
    }
    let tensor = GroupFeatureMap::new(filters.len(), cols, 1, 4, bank.mesh_size, data)?;
    write_tensor(&base.with_extension("eqt"), &tensor)?;
    let meta = vec![
        ("layer_kind".to_string(), bank.kind.to_string()),
        ("in_channels".to_string(), bank.in_channels.to_string()),
        ("out_channels".to_string(), bank.out_channels.to_string()),
        ("t".to_string(), bank.group_order.to_string()),
        ("p".to_string(), bank.filter_size.to_string()),
        ("h".to_string(), format!("{:.17e}", bank.mesh_size)),
        ("radius".to_string(), format!("{radius:.17e}")),
        ("terms".to_string(), terms.to_string()),
    ];
    write_kv(&base.with_extension("meta"), &meta)
}

/// Read a filter bank written by [`write_bank`].
pub fn read_bank(base: &Path) -> Result<FilterBank> {
    let meta = read_kv(&base.with_extension("meta"))?;
    let get = |key: &str| -> Result<&str> {
        meta.iter()
            .find(|(_, k, _)| k == key)
            .map(|(_, _, v)| v.as_str())
            .ok_or_else(|| Error::invalid(format!("bank meta missing key '{key}'")))
    };
    let kind: LayerKind = get("layer_kind")?.parse()?;
    let in_channels: usize = get("in_channels")?.parse().map_err(|_| Error::invalid("bad in_channels"))?;
    let out_channels: usize = get("out_channels")?.parse().map_err(|_| Error::invalid("bad out_channels"))?;
    let t: usize = get("t")?.parse().map_err(|_| Error::invalid("bad t"))?;
    let p: usize = get("p")?.parse().map_err(|_| Error::invalid("bad p"))?;
    let radius: f64 = get("radius")?.parse().map_err(|_| Error::invalid("bad radius"))?;
    let terms: usize = get("terms")?.parse().map_err(|_| Error::invalid("bad terms"))?;

    let tensor = read_tensor(&base.with_extension("eqt"))?;
    if tensor.channels != 4 || tensor.group_order != 1 {
        return Err(Error::invalid("bank tensor must be #filters x terms x 1 x 4"));
    }
    let h = tensor.mesh_size;
    let mut filters = Vec::with_capacity(tensor.height);
    for fi in 0..tensor.height {
        let mut ft = Vec::with_capacity(terms);
        for q in 0..terms {
            ft.push(FourierTerm {
                freq: (tensor.at(fi, q, 0, 0), tensor.at(fi, q, 0, 1)),
                cos_coeff: tensor.at(fi, q, 0, 2),
                sin_coeff: tensor.at(fi, q, 0, 3),
            });
        }
        filters.push(SteerableFilter::new(ft, radius, p, h)?);
    }
    FilterBank::new(kind, in_channels, out_channels, t, filters)
}

/// Write a network spec as `net.manifest` plus one bank file pair per layer.
pub fn write_netspec(dir: &Path, spec: &EquivNetSpec) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut pairs = vec![
        ("layers".to_string(), spec.num_layers().to_string()),
        ("t".to_string(), spec.group_order().to_string()),
        ("p".to_string(), spec.filter_size().to_string()),
        ("h".to_string(), format!("{:.17e}", spec.mesh_size())),
    ];
    for (i, layer) in spec.layers().iter().enumerate() {
        let base = dir.join(format!("bank_{i}"));
        write_bank(&base, &layer.bank)?;
        pairs.push((format!("layer.{i}.kind"), layer.bank.kind.to_string()));
        pairs.push((format!("layer.{i}.bank"), format!("bank_{i}")));
        pairs.push((format!("layer.{i}.activation"), layer.activation.to_string()));
    }
    write_kv(&dir.join("net.manifest"), &pairs)
}

/// Read a network spec written by [`write_netspec`].
pub fn read_netspec(dir: &Path) -> Result<EquivNetSpec> {
    let kv = read_kv(&dir.join("net.manifest"))?;
    let get = |key: &str| -> Result<&str> {
        kv.iter()
            .find(|(_, k, _)| k == key)
            .map(|(_, _, v)| v.as_str())
            .ok_or_else(|| Error::invalid(format!("net manifest missing key '{key}'")))
    };
    let n: usize = get("layers")?.parse().map_err(|_| Error::invalid("bad layers count"))?;
    let mut layers = Vec::with_capacity(n);
    for i in 0..n {
        let base = dir.join(get(&format!("layer.{i}.bank"))?);
        let bank = read_bank(&base)?;
        let activation: Activation = get(&format!("layer.{i}.activation"))?.parse()?;
        layers.push(NetLayer { bank, activation });
    }
    EquivNetSpec::new(layers)
}
