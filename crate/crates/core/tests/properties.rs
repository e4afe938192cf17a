use std::collections::{HashMap, HashSet};

use blindex_core::blind_index::*;
use blindex_core::crypto::*;
use blindex_core::envelope::{self, Envelope};
use proptest::prelude::*;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

#[test]
fn key_tree_labels_never_collide() {
    let ltk = SymmetricKey::from_bytes([0x42; 32]);
    let mut rng = ChaCha20Rng::seed_from_u64(11);
    let alphabet = b"abcdefghij_";
    let word = |rng: &mut ChaCha20Rng| -> String {
        let len = 1 + (rng.next_u32() % 6) as usize;
        (0..len)
            .map(|_| alphabet[(rng.next_u32() as usize) % alphabet.len()] as char)
            .collect()
    };
    let mut pairs = HashSet::new();
    while pairs.len() < 10_000 {
        pairs.insert((word(&mut rng), word(&mut rng)));
    }
    // boundary shifts that a naive concatenation would conflate
    pairs.insert(("ab".into(), "c".into()));
    pairs.insert(("a".into(), "bc".into()));

    let mut seen = HashSet::new();
    for (table, column) in &pairs {
        assert!(seen.insert(*derive_column_key(&ltk, table, column).as_bytes()));
        assert!(seen.insert(*derive_bidx_key(&ltk, table, column).as_bytes()));
    }
    assert_eq!(seen.len(), 2 * pairs.len());
}

#[test]
fn one_bit_of_ltk_changes_half_the_column_key() {
    let mut rng = ChaCha20Rng::seed_from_u64(12);
    let trials = 2000;
    let mut total = 0u64;
    for _ in 0..trials {
        let mut raw = [0u8; 32];
        rng.fill_bytes(&mut raw);
        let a = derive_column_key(&SymmetricKey::from_bytes(raw), "patients", "ssn");
        let bit = (rng.next_u32() % 256) as usize;
        raw[bit / 8] ^= 1 << (bit % 8);
        let b = derive_column_key(&SymmetricKey::from_bytes(raw), "patients", "ssn");
        let dist: u32 = a
            .as_bytes()
            .iter()
            .zip(b.as_bytes())
            .map(|(x, y)| (x ^ y).count_ones())
            .sum();
        assert!(dist > 0);
        total += dist as u64;
    }
    let mean = total as f64 / trials as f64;
    // 128 expected, standard error of the mean about 0.18
    assert!((126.0..130.0).contains(&mean), "mean hamming distance {mean}");
}

#[test]
fn collision_rate_tracks_r_times_two_to_minus_n() {
    let bits = 13;
    let records = 8192u64;
    let spec = BlindIndexSpec::new("patients", "ssn", bits);
    let mut means = Vec::new();
    for trial in 0..20u64 {
        let ltk = SymmetricKey::from_bytes([trial as u8; 32]);
        let key = derive_bidx_key(&ltk, "patients", "ssn");
        let mut buckets: HashMap<Vec<u8>, u64> = HashMap::new();
        for i in 0..records {
            let pt = format!("{:03}-{:02}-{:04}", i % 1000, (i / 1000) % 100, i);
            *buckets
                .entry(compute_bidx(&key, pt.as_bytes(), &spec).as_bytes().to_vec())
                .or_default() += 1;
        }
        // other values sharing each value's index
        let others: u64 = buckets.values().map(|c| c * (c - 1)).sum();
        means.push(others as f64 / records as f64);
    }
    let expected = expected_collisions(records, bits);
    assert_eq!(expected, 1.0);
    for m in &means {
        assert!((0.7..=1.3).contains(m), "trial mean {m}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn min_bits_lands_within_a_factor_of_two(records in 1u64..=1u64 << 40, target in 1.0f64..64.0) {
        let n = min_bits(records, target);
        prop_assert!(expected_collisions(records, n) <= target);
        if n > 1 {
            prop_assert!(expected_collisions(records, n - 1) > target);
            prop_assert!(expected_collisions(records, n) > target / 2.0);
        }
    }

    #[test]
    fn bidx_width_and_masking(bits in 1u32..=256, pt in prop::collection::vec(any::<u8>(), 0..40)) {
        let key = SymmetricKey::from_bytes([3; 32]);
        let spec = BlindIndexSpec::new("t", "c", bits);
        let v = compute_bidx(&key, &pt, &spec);
        prop_assert_eq!(v.as_bytes().len(), (bits as usize).div_ceil(8));
        let surplus = v.as_bytes().len() * 8 - bits as usize;
        if surplus > 0 {
            prop_assert!(u32::from(v.as_bytes()[0]) < 1 << (8 - surplus));
        }
        prop_assert_eq!(v.to_hex(), v.to_hex().to_lowercase());
    }

    #[test]
    fn envelope_length_and_base64_bound(pt in prop::collection::vec(any::<u8>(), 0..300)) {
        let mut state = SessionCipherState::new(SymmetricKey::from_bytes([5; 32]), Direction::ClientToProxy);
        let env = Envelope::seal(&mut state, 77, &pt).unwrap();
        prop_assert_eq!(env.to_bytes().len(), envelope::OVERHEAD + pt.len());
        let text = env.encode();
        prop_assert!(text.len() * 3 >= env.to_bytes().len() * 4);
        prop_assert!(Envelope::looks_like(&text));
        prop_assert_eq!(Envelope::decode(&text).unwrap(), env);
    }

    #[test]
    fn stored_ciphertext_is_plaintext_plus_29(pt in prop::collection::vec(any::<u8>(), 0..300)) {
        let key = SymmetricKey::from_bytes([6; 32]);
        let a = value_encrypt(&key, &pt, b"t.c").unwrap();
        let b = value_encrypt(&key, &pt, b"t.c").unwrap();
        prop_assert_eq!(a.to_bytes().len(), pt.len() + 29);
        prop_assert_ne!(a.to_bytes(), b.to_bytes());
        prop_assert_eq!(value_decrypt(&key, &StoredCiphertext::from_text(&a.to_text()).unwrap(), b"t.c").unwrap(), pt);
    }
}
