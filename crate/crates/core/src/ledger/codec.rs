//! Canonical encoding: every field is a big-endian u32 length followed by its bytes;
//! integers are 8-byte big-endian fields.

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CodecError {
    #[error("truncated input")]
    Truncated,
    #[error("field length {got}, expected {expected}")]
    Length { expected: usize, got: usize },
    #[error("invalid utf-8")]
    Utf8,
    #[error("{0} trailing bytes")]
    Trailing(usize),
    #[error("invalid {0}")]
    Invalid(&'static str),
}

#[derive(Debug, Default, Clone)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Self {
        Writer::default()
    }

    pub fn field(&mut self, bytes: &[u8]) -> &mut Self {
        let len = u32::try_from(bytes.len()).expect("field longer than 4 GiB");
        self.buf.extend_from_slice(&len.to_be_bytes());
        self.buf.extend_from_slice(bytes);
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.field(&v.to_be_bytes())
    }

    pub fn u8(&mut self, v: u8) -> &mut Self {
        self.field(&[v])
    }

    pub fn str(&mut self, s: &str) -> &mut Self {
        self.field(s.as_bytes())
    }

    pub fn finish(&mut self) -> Vec<u8> {
        std::mem::take(&mut self.buf)
    }
}

#[derive(Debug, Clone)]
pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    pub fn field(&mut self) -> Result<&'a [u8], CodecError> {
        let rest = &self.buf[self.pos..];
        if rest.len() < 4 {
            return Err(CodecError::Truncated);
        }
        let len = u32::from_be_bytes(rest[..4].try_into().expect("4 bytes")) as usize;
        if rest.len() - 4 < len {
            return Err(CodecError::Truncated);
        }
        self.pos += 4 + len;
        Ok(&rest[4..4 + len])
    }

    pub fn fixed<const N: usize>(&mut self) -> Result<[u8; N], CodecError> {
        let f = self.field()?;
        f.try_into().map_err(|_| CodecError::Length {
            expected: N,
            got: f.len(),
        })
    }

    pub fn u64(&mut self) -> Result<u64, CodecError> {
        Ok(u64::from_be_bytes(self.fixed::<8>()?))
    }

    pub fn u8(&mut self) -> Result<u8, CodecError> {
        Ok(self.fixed::<1>()?[0])
    }

    pub fn str(&mut self) -> Result<&'a str, CodecError> {
        std::str::from_utf8(self.field()?).map_err(|_| CodecError::Utf8)
    }

    pub fn expect_tag(&mut self, tag: &'static str) -> Result<(), CodecError> {
        if self.field()? == tag.as_bytes() {
            Ok(())
        } else {
            Err(CodecError::Invalid(tag))
        }
    }

    pub fn finish(self) -> Result<(), CodecError> {
        match self.buf.len() - self.pos {
            0 => Ok(()),
            n => Err(CodecError::Trailing(n)),
        }
    }
}
