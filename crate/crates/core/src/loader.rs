//! Program images: raw binaries and 32-bit little-endian RISC-V ELF
//! executables (loadable segments only).

use std::path::Path;
use thiserror::Error;

const EM_RISCV: u16 = 243;
const PT_LOAD: u32 = 1;

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed ELF: {0}")]
    Malformed(&'static str),
    #[error("not a 32-bit little-endian RISC-V executable: {0}")]
    Unsupported(&'static str),
    #[error("unknown image format {0:?} (expected raw, elf or auto)")]
    Format(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub addr: u32,
    pub data: Vec<u8>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Image {
    pub segments: Vec<Segment>,
    pub entry: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ImageFormat {
    Raw,
    Elf,
    /// ELF if the file starts with the ELF magic, raw otherwise.
    #[default]
    Auto,
}

impl std::str::FromStr for ImageFormat {
    type Err = LoadError;

    fn from_str(s: &str) -> Result<Self, LoadError> {
        match s {
            "raw" | "bin" => Ok(ImageFormat::Raw),
            "elf" => Ok(ImageFormat::Elf),
            "auto" => Ok(ImageFormat::Auto),
            _ => Err(LoadError::Format(s.to_string())),
        }
    }
}

impl Image {
    /// A raw binary placed at `base`; entry is `base`.
    pub fn raw(bytes: &[u8], base: u32) -> Self {
        Image {
            segments: vec![Segment {
                addr: base,
                data: bytes.to_vec(),
            }],
            entry: base,
        }
    }

    pub fn from_words(base: u32, words: &[u32]) -> Self {
        let bytes: Vec<u8> = words.iter().flat_map(|w| w.to_le_bytes()).collect();
        Image::raw(&bytes, base)
    }

    pub fn parse(bytes: &[u8], format: ImageFormat, base: u32) -> Result<Self, LoadError> {
        match format {
            ImageFormat::Raw => Ok(Image::raw(bytes, base)),
            ImageFormat::Elf => parse_elf(bytes),
            ImageFormat::Auto if bytes.starts_with(b"\x7fELF") => parse_elf(bytes),
            ImageFormat::Auto => Ok(Image::raw(bytes, base)),
        }
    }

    pub fn load(path: &Path, format: ImageFormat, base: u32) -> Result<Self, LoadError> {
        let bytes = std::fs::read(path).map_err(|source| LoadError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Image::parse(&bytes, format, base)
    }

    /// Total bytes across segments.
    pub fn len(&self) -> usize {
        self.segments.iter().map(|s| s.data.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn u16_at(b: &[u8], off: usize) -> Result<u16, LoadError> {
    b.get(off..off + 2)
        .map(|s| u16::from_le_bytes([s[0], s[1]]))
        .ok_or(LoadError::Malformed("truncated header"))
}

fn u32_at(b: &[u8], off: usize) -> Result<u32, LoadError> {
    b.get(off..off + 4)
        .map(|s| u32::from_le_bytes([s[0], s[1], s[2], s[3]]))
        .ok_or(LoadError::Malformed("truncated header"))
}

/// Extracts the `PT_LOAD` segments of an ELF32 LE RISC-V file. Segments are
/// placed at their physical addresses; `memsz > filesz` is zero-filled.
pub fn parse_elf(b: &[u8]) -> Result<Image, LoadError> {
    if b.len() < 52 || !b.starts_with(b"\x7fELF") {
        return Err(LoadError::Malformed("missing ELF header"));
    }
    if b[4] != 1 {
        return Err(LoadError::Unsupported("not ELFCLASS32"));
    }
    if b[5] != 1 {
        return Err(LoadError::Unsupported("not little-endian"));
    }
    if u16_at(b, 18)? != EM_RISCV {
        return Err(LoadError::Unsupported("machine is not RISC-V"));
    }
    let entry = u32_at(b, 24)?;
    let phoff = u32_at(b, 28)? as usize;
    let phentsize = u16_at(b, 42)? as usize;
    let phnum = u16_at(b, 44)? as usize;
    if phnum > 0 && phentsize < 32 {
        return Err(LoadError::Malformed("program header entry too small"));
    }
    let mut segments = Vec::new();
    for i in 0..phnum {
        let ph = phoff
            .checked_add(i * phentsize)
            .ok_or(LoadError::Malformed("program header offset overflow"))?;
        if u32_at(b, ph)? != PT_LOAD {
            continue;
        }
        let offset = u32_at(b, ph + 4)? as usize;
        let paddr = u32_at(b, ph + 12)?;
        let filesz = u32_at(b, ph + 16)? as usize;
        let memsz = u32_at(b, ph + 20)? as usize;
        if memsz == 0 {
            continue;
        }
        if filesz > memsz {
            return Err(LoadError::Malformed("segment file size exceeds memory size"));
        }
        let file = b
            .get(offset..offset.checked_add(filesz).ok_or(LoadError::Malformed("segment overflow"))?)
            .ok_or(LoadError::Malformed("segment extends past end of file"))?;
        let mut data = file.to_vec();
        data.resize(memsz, 0);
        segments.push(Segment { addr: paddr, data });
    }
    if segments.is_empty() {
        return Err(LoadError::Malformed("no loadable segments"));
    }
    Ok(Image { segments, entry })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Builds a minimal ELF32 with the given (paddr, bytes, memsz) segments.
    pub(crate) fn tiny_elf(entry: u32, segs: &[(u32, &[u8], u32)]) -> Vec<u8> {
        let phoff = 52u32;
        let data_start = phoff + 32 * segs.len() as u32;
        let mut out = vec![0u8; data_start as usize];
        out[..4].copy_from_slice(b"\x7fELF");
        out[4] = 1;
        out[5] = 1;
        out[6] = 1;
        out[16..18].copy_from_slice(&2u16.to_le_bytes());
        out[18..20].copy_from_slice(&EM_RISCV.to_le_bytes());
        out[24..28].copy_from_slice(&entry.to_le_bytes());
        out[28..32].copy_from_slice(&phoff.to_le_bytes());
        out[42..44].copy_from_slice(&32u16.to_le_bytes());
        out[44..46].copy_from_slice(&(segs.len() as u16).to_le_bytes());
        let mut offset = data_start;
        for (i, (paddr, bytes, memsz)) in segs.iter().enumerate() {
            let ph = 52 + 32 * i;
            let fields = [PT_LOAD, offset, *paddr, *paddr, bytes.len() as u32, *memsz, 5, 4];
            for (k, f) in fields.iter().enumerate() {
                out[ph + 4 * k..ph + 4 * k + 4].copy_from_slice(&f.to_le_bytes());
            }
            offset += bytes.len() as u32;
        }
        for (_, bytes, _) in segs {
            out.extend_from_slice(bytes);
        }
        out
    }

    #[test]
    fn raw_image_at_base() {
        let img = Image::parse(&[1u8; 16], ImageFormat::Auto, 0).unwrap();
        assert_eq!(img.segments, vec![Segment { addr: 0, data: vec![1; 16] }]);
        assert_eq!(img.entry, 0);
    }

    #[test]
    fn elf_segments_and_bss() {
        let elf = tiny_elf(0x10, &[(0, &[1, 2, 3, 4], 4), (0x100, &[9, 9], 6)]);
        let img = Image::parse(&elf, ImageFormat::Auto, 0).unwrap();
        assert_eq!(img.entry, 0x10);
        assert_eq!(img.segments[0], Segment { addr: 0, data: vec![1, 2, 3, 4] });
        assert_eq!(img.segments[1], Segment { addr: 0x100, data: vec![9, 9, 0, 0, 0, 0] });
    }

    #[test]
    fn malformed_elf_rejected() {
        let mut elf = tiny_elf(0, &[(0, &[1, 2, 3, 4], 4)]);
        assert!(parse_elf(&elf[..40]).is_err());
        let truncated = &elf[..elf.len() - 2];
        assert!(matches!(parse_elf(truncated), Err(LoadError::Malformed(_))));
        elf[18] = 0xF3;
        elf[19] = 0x01;
        assert!(matches!(parse_elf(&elf), Err(LoadError::Unsupported(_))));
        let mut elf64 = tiny_elf(0, &[(0, &[1], 1)]);
        elf64[4] = 2;
        assert!(matches!(parse_elf(&elf64), Err(LoadError::Unsupported(_))));
        assert!(matches!(parse_elf(&tiny_elf(0, &[])), Err(LoadError::Malformed(_))));
    }

    #[test]
    fn format_names() {
        assert_eq!("elf".parse::<ImageFormat>().unwrap(), ImageFormat::Elf);
        assert!("hex".parse::<ImageFormat>().is_err());
    }
}
