use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::io_util::{read_array, read_u32, read_u64};

pub const CODES_MAGIC: &[u8; 4] = b"HLPC";
pub const CODES_VERSION: u32 = 1;

/// `n` binary codes of `bits` bits, packed into `⌈bits/64⌉` words each.
///
/// Bit `j` of a code lives in word `j / 64` at position `j % 64`; a set bit
/// stands for `+1`. Bits past `bits` are always zero, so popcount over the
/// XOR of two codes is their Hamming distance.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PackedCodes {
    n: usize,
    bits: usize,
    words_per_code: usize,
    words: Vec<u64>,
}

/// A borrowed packed code.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Code<'a> {
    pub bits: usize,
    pub words: &'a [u64],
}

impl PackedCodes {
    pub fn new(bits: usize) -> Self {
        PackedCodes {
            n: 0,
            bits,
            words_per_code: bits.div_ceil(64),
            words: Vec::new(),
        }
    }

    pub fn from_words(bits: usize, words: Vec<u64>) -> Result<Self> {
        let wpc = bits.div_ceil(64);
        if wpc == 0 {
            if !words.is_empty() {
                return Err(Error::Format("zero-bit codes cannot carry words".into()));
            }
            return Ok(PackedCodes::new(0));
        }
        if words.len() % wpc != 0 {
            return Err(Error::Format(format!(
                "{} words is not a multiple of {wpc} words per code",
                words.len()
            )));
        }
        let codes = PackedCodes {
            n: words.len() / wpc,
            bits,
            words_per_code: wpc,
            words,
        };
        if bits % 64 != 0 {
            let mask = !0u64 << (bits % 64);
            if let Some(i) = (0..codes.n).find(|&i| codes.code(i).words[wpc - 1] & mask != 0) {
                return Err(Error::Format(format!("code {i} has non-zero padding bits")));
            }
        }
        Ok(codes)
    }

    /// Packs ±1 codes (e.g. shadow codes); any non-negative entry is a set bit.
    pub fn from_signs(codes: ArrayView2<i8>) -> Self {
        let mut out = PackedCodes::new(codes.ncols());
        for row in codes.outer_iter() {
            out.push_bits(row.iter().map(|&v| v >= 0));
        }
        out
    }

    pub fn push_bits(&mut self, bits: impl IntoIterator<Item = bool>) {
        let start = self.words.len();
        self.words.resize(start + self.words_per_code, 0);
        let mut count = 0;
        for (j, set) in bits.into_iter().enumerate() {
            assert!(j < self.bits, "code longer than {} bits", self.bits);
            if set {
                self.words[start + j / 64] |= 1u64 << (j % 64);
            }
            count += 1;
        }
        assert_eq!(count, self.bits, "code shorter than {} bits", self.bits);
        self.n += 1;
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn bits(&self) -> usize {
        self.bits
    }

    pub fn words_per_code(&self) -> usize {
        self.words_per_code
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn code(&self, i: usize) -> Code<'_> {
        let w = self.words_per_code;
        Code {
            bits: self.bits,
            words: &self.words[i * w..(i + 1) * w],
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = Code<'_>> + '_ {
        (0..self.n).map(move |i| self.code(i))
    }

    /// Codes at `ids`, in that order.
    pub fn select(&self, ids: &[usize]) -> Self {
        let mut words = Vec::with_capacity(ids.len() * self.words_per_code);
        for &i in ids {
            words.extend_from_slice(self.code(i).words);
        }
        PackedCodes {
            n: ids.len(),
            bits: self.bits,
            words_per_code: self.words_per_code,
            words,
        }
    }

    /// ±1 matrix view of the codes.
    pub fn unpack(&self) -> Array2<i8> {
        Array2::from_shape_fn((self.n, self.bits), |(i, j)| {
            if self.code(i).bit(j) {
                1
            } else {
                -1
            }
        })
    }

    pub fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(CODES_MAGIC)?;
        w.write_all(&CODES_VERSION.to_le_bytes())?;
        w.write_all(&(self.n as u64).to_le_bytes())?;
        w.write_all(&(self.bits as u32).to_le_bytes())?;
        for word in &self.words {
            w.write_all(&word.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let magic: [u8; 4] = read_array(r, "codes magic")?;
        if &magic != CODES_MAGIC {
            return Err(Error::Format(format!("bad codes magic {magic:?}")));
        }
        let version = read_u32(r, "codes version")?;
        if version != CODES_VERSION {
            return Err(Error::Format(format!("unsupported codes version {version}")));
        }
        let n = read_u64(r, "code count")? as usize;
        let bits = read_u32(r, "code length")? as usize;
        let total = n
            .checked_mul(bits.div_ceil(64))
            .ok_or_else(|| Error::Format("code table size overflows".into()))?;
        let mut words = Vec::with_capacity(total.min(1 << 24));
        for _ in 0..total {
            words.push(read_u64(r, "code words")?);
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest).map_err(|e| Error::Format(e.to_string()))? != 0 {
            return Err(Error::Format("trailing bytes after code table".into()));
        }
        let codes = PackedCodes::from_words(bits, words)?;
        if codes.n != n {
            return Err(Error::Format(format!("header says {n} codes, found {}", codes.n)));
        }
        Ok(codes)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        self.write_to(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(&mut BufReader::new(f))
    }
}

impl Code<'_> {
    pub fn bit(&self, j: usize) -> bool {
        self.words[j / 64] >> (j % 64) & 1 == 1
    }
}

/// Sign-binarizes real outputs (`B ≥ 0` ↦ bit set, so `sign(0) = +1`) and packs them.
pub fn binarize_and_pack(b: ArrayView2<f64>) -> Result<PackedCodes> {
    if let Some(((i, j), v)) = b.indexed_iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::NonFinite(format!("output B[{i},{j}] = {v}")));
    }
    let mut out = PackedCodes::new(b.ncols());
    for row in b.outer_iter() {
        out.push_bits(row.iter().map(|&v| v >= 0.0));
    }
    Ok(out)
}

/// Popcount of the XOR; no length checks.
#[inline]
pub fn hamming_words(a: &[u64], b: &[u64]) -> u32 {
    a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones()).sum()
}

pub fn hamming(a: Code<'_>, b: Code<'_>) -> Result<u32> {
    if a.bits != b.bits || a.words.len() != b.words.len() {
        return Err(Error::Shape(format!(
            "cannot compare {}-bit and {}-bit codes",
            a.bits, b.bits
        )));
    }
    Ok(hamming_words(a.words, b.words))
}
