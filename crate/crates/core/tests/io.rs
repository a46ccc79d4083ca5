use relight_core::io::*;
use relight_core::ImageF;

#[test]
fn eight_bit_roundtrip_is_exact() {
    let img = ImageF::from_fn(7, 5, 3, |x, y, c| ((x * 31 + y * 7 + c * 90) % 256) as f32 / 255.0).unwrap();
    let bytes = encode_png(&img, BitDepth::Eight).unwrap();
    let (back, depth) = decode_png(&bytes).unwrap();
    assert_eq!(depth, BitDepth::Eight);
    assert_eq!(back, img);
}

#[test]
fn sixteen_bit_gray_roundtrip() {
    let img = ImageF::from_fn(4, 3, 1, |x, y, _| (x * 1000 + y * 17) as f32 / 65535.0).unwrap();
    let (back, depth) = decode_png(&encode_png(&img, BitDepth::Sixteen).unwrap()).unwrap();
    assert_eq!(depth, BitDepth::Sixteen);
    assert_eq!(back, img);
}

#[test]
fn quantize_matches_codec() {
    let img = ImageF::from_fn(6, 6, 3, |x, y, c| (x as f32 * 0.137 + y as f32 * 0.071 + c as f32 * 0.3) % 1.0).unwrap();
    for depth in [BitDepth::Eight, BitDepth::Sixteen] {
        let (back, _) = decode_png(&encode_png(&img, depth).unwrap()).unwrap();
        assert_eq!(back, quantize_to(&img, depth));
    }
}

#[test]
fn garbage_is_rejected() {
    assert!(decode_png(b"not a png").is_err());
}
