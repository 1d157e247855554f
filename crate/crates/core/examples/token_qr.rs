//! Encode a presentation token, carry it as QR text and verify it at the network.

use cardless::token::{decode_token, encode_token, qr_parse, qr_payload, NetworkKey};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn main() {
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    let key = NetworkKey::new(7, [9u8; 32]);
    let now = 1_700_000_000;
    let bytes = encode_token(b"card-000001", &key, now + 3_600, now, &mut rng).unwrap();
    let qr = qr_payload(&bytes);
    println!("{} bytes -> {qr}", bytes.len());

    let token = decode_token(&qr_parse(&qr).unwrap(), &key, now).unwrap();
    println!("token {} expires {}", token.token_id_hex(), token.expiry);
    println!("card reference: {}", String::from_utf8(token.open_reference(&key).unwrap()).unwrap());

    let mut forged = bytes.clone();
    forged[40] ^= 1;
    println!("forged: {:?}", decode_token(&forged, &key, now).unwrap_err());
    println!("late:   {:?}", decode_token(&bytes, &key, now + 7_200).unwrap_err());
}
