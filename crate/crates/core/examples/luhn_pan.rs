//! Check digits, PAN assembly and a registry that never hands out a number twice.

use cardless::card_numbering::{luhn_check_digit, luhn_validate, mask_pan, PanRegistry};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn main() {
    let body = "7992739871";
    let check = luhn_check_digit(body).unwrap();
    println!("check digit for {body}: {check}");
    println!("{body}{check} valid: {}", luhn_validate(&format!("{body}{check}")).unwrap());

    let mut rng = ChaCha20Rng::seed_from_u64(1);
    let mut registry = PanRegistry::new();
    for _ in 0..3 {
        let parts = registry.issue("444433", &mut rng, 32).unwrap();
        println!("issued {} (iin {}, check {})", mask_pan(&parts.pan()), parts.iin(), parts.check_digit());
    }
    let first = registry.active().next().unwrap().to_owned();
    registry.retire(&first).unwrap();
    println!("re-registering a retired number: {:?}", registry.register_unique(&first));
    println!("active {}, retired {}", registry.active_len(), registry.retired_len());
}
