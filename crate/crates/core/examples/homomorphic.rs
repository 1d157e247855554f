//! Encrypted spend accumulator: add and scale ciphertexts without decrypting.

use cardless::crypto::paillier::HeKeyPair;
use num_bigint::BigUint;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn main() {
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    let keys = HeKeyPair::generate(512, &mut rng).unwrap();
    let pk = &keys.public_key;

    let mut spent = pk.encrypt_u64(0, &mut rng).unwrap();
    for amount in [1_250u64, 899, 4_000] {
        spent = pk.add(&spent, &pk.encrypt_u64(amount, &mut rng).unwrap()).unwrap();
        println!("+{amount:>5} -> decrypts to {}", keys.secret_key.decrypt_u64(&spent).unwrap());
    }
    let tripled = pk.scale(&spent, &BigUint::from(3u8)).unwrap();
    println!("x3 -> {}", keys.secret_key.decrypt_u64(&tripled).unwrap());

    let other = HeKeyPair::generate(256, &mut rng).unwrap();
    println!("mixing keys: {:?}", other.public_key.add(&spent, &spent).unwrap_err());
}
