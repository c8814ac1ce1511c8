//! Minimal deterministic PNG writer for 8-bit RGB images.
//!
//! Output layout is fixed: signature, IHDR, a single IDAT, IEND. Rows use
//! filter type 0 and the stream is zlib at the default level (6). No
//! ancillary chunks, no interlacing, no alpha. Identical pixels always give
//! identical bytes.

use std::io::Write;

use flate2::write::ZlibEncoder;
use flate2::Compression;

use crate::products::PseudoImage;

const SIGNATURE: [u8; 8] = [0x89, b'P', b'N', b'G', 0x0D, 0x0A, 0x1A, 0x0A];

fn write_chunk(out: &mut Vec<u8>, kind: &[u8; 4], data: &[u8]) {
    out.extend_from_slice(&(data.len() as u32).to_be_bytes());
    out.extend_from_slice(kind);
    out.extend_from_slice(data);
    let mut crc = crc32fast::Hasher::new();
    crc.update(kind);
    crc.update(data);
    out.extend_from_slice(&crc.finalize().to_be_bytes());
}

/// Encodes packed RGB rows (`width * height * 3` bytes).
pub fn encode_rgb8(width: u32, height: u32, rgb: &[u8]) -> Vec<u8> {
    assert!(width > 0 && height > 0, "PNG dimensions must be non-zero");
    assert_eq!(
        rgb.len(),
        width as usize * height as usize * 3,
        "rgb buffer does not match {width}x{height}"
    );
    let mut ihdr = Vec::with_capacity(13);
    ihdr.extend_from_slice(&width.to_be_bytes());
    ihdr.extend_from_slice(&height.to_be_bytes());
    // bit depth 8, color type 2 (truecolor), deflate, adaptive filtering, no interlace
    ihdr.extend_from_slice(&[8, 2, 0, 0, 0]);

    let stride = width as usize * 3;
    let mut raw = Vec::with_capacity((stride + 1) * height as usize);
    for row in rgb.chunks(stride) {
        raw.push(0);
        raw.extend_from_slice(row);
    }
    let mut z = ZlibEncoder::new(Vec::new(), Compression::default());
    z.write_all(&raw).expect("in-memory write");
    let idat = z.finish().expect("in-memory write");

    let mut out = Vec::with_capacity(idat.len() + 64);
    out.extend_from_slice(&SIGNATURE);
    write_chunk(&mut out, b"IHDR", &ihdr);
    write_chunk(&mut out, b"IDAT", &idat);
    write_chunk(&mut out, b"IEND", &[]);
    out
}

pub fn encode_image(img: &PseudoImage) -> Vec<u8> {
    encode_rgb8(img.width as u32, img.height as u32, &img.raw_rgb())
}
