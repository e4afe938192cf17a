//! Known-answer vectors produced by `tests/oracles/gen_vectors.py`, which
//! uses pyca/cryptography and hashlib independently of this crate.

use blindex_core::attestation::{transcript_hash, Transcript};
use blindex_core::blind_index::{compute_bidx, BlindIndexSpec};
use blindex_core::crypto::*;

fn h(s: &str) -> Vec<u8> {
    hex::decode(s).unwrap()
}

fn arr<const N: usize>(s: &str) -> [u8; N] {
    h(s).try_into().unwrap()
}

const A_SECRET: &str = "c88f01f510d9ac3f70a292daa2316de544e9aab8afe84049c62a9c57862d1433";
const B_SECRET: &str = "c6ef9c5d78ae012a011164acb397ce2088685d8f06bf9be0b283ab46476bee53";
const A_PUBLIC: &str = "04dad0b65394221cf9b051e1feca5787d098dfe637fc90b9ef945d0c37725811805271a0461cdb8252d61f1c456fa3e59ab1f45b33accf5f58389e0577b8990bb3";
const B_PUBLIC: &str = "04d12dfb5289c8d4f81208b70270398c342296970a0bccb74c736fc7554494bf6356fbf3ca366cc23e8157854c13c58d6aac23f046ada30f8353e74f33039872ab";
const SHARED: &str = "d6840f6b42f6edafd13116e0e12565202fef8e9ece7dce03812464d04b9442de";

#[test]
fn ecdh_p256() {
    let a = KeyPair::from_secret_bytes(&arr(A_SECRET)).unwrap();
    let b = KeyPair::from_secret_bytes(&arr(B_SECRET)).unwrap();
    assert_eq!(a.public().to_vec(), h(A_PUBLIC));
    assert_eq!(b.public().to_vec(), h(B_PUBLIC));
    assert_eq!(ecdh_shared(&a, &h(B_PUBLIC)).unwrap().to_vec(), h(SHARED));
    assert_eq!(ecdh_shared(&b, &h(A_PUBLIC)).unwrap().to_vec(), h(SHARED));
}

#[test]
fn hkdf_rfc5869_case_1() {
    let okm = hkdf(&[0x0b; 22], &(0x00..=0x0c).collect::<Vec<u8>>(), &(0xf0..=0xf9).collect::<Vec<u8>>(), 42).unwrap();
    assert_eq!(
        okm,
        h("3cb25f25faacd57a90434f64d0362f2a2d2d0a90cf1a5a4c5db02d56ecc4c5bf34007208d5b887185865")
    );
}

#[test]
fn session_key_derivation() {
    let shared: Vec<u8> = (0..32).collect();
    let (c2p, p2c) = derive_session_keys(&shared, &[0x11; 32], &[0x22; 32]);
    assert_eq!(
        c2p.as_bytes().to_vec(),
        h("005b751aeda935793948fcf31f49ebc788ce3ea05d5f65f4bed82f93e7e9a9cf")
    );
    assert_eq!(
        p2c.as_bytes().to_vec(),
        h("02f4472de1fec37a6181a8bc4aec96098e2e37dba8b3bb1fa2eea039a97b4e97")
    );
}

#[test]
fn column_and_blind_index_keys() {
    let ltk = SymmetricKey::from_bytes([0x42; 32]);
    assert_eq!(
        derive_column_key(&ltk, "patients", "ssn").as_bytes().to_vec(),
        h("63044ae26ca31fd519b3698e339f04084496209621932f467f0f47a9e8d7ab3a")
    );
    let bidx_key = derive_bidx_key(&ltk, "patients", "ssn");
    assert_eq!(
        bidx_key.as_bytes().to_vec(),
        h("b0e7da3b01515e34fe253545c14e0c6f49bfc5a71686b0b9f1cb10f9d5e4972b")
    );

    let full = "2392b35bbe14dcbb8567a302f1fdd6f1fff1e3a237687ddcf3157a9a9a1e2379";
    let spec = BlindIndexSpec::new("patients", "ssn", 256);
    assert_eq!(compute_bidx(&bidx_key, b"123-45-6789", &spec).to_hex(), full);
    // 13 bits: first two bytes 0x2392, top three bits cleared
    let spec = BlindIndexSpec::new("patients", "ssn", 13);
    assert_eq!(compute_bidx(&bidx_key, b"123-45-6789", &spec).to_hex(), "0392");
    let spec = BlindIndexSpec::new("patients", "ssn", 16);
    assert_eq!(compute_bidx(&bidx_key, b"123-45-6789", &spec).to_hex(), "2392");
}

#[test]
fn aes_gcm_session_counter_nonces() {
    let mut state = SessionCipherState::new(SymmetricKey::from_bytes([7; 32]), Direction::ClientToProxy);
    let sid = 0x0102030405060708;
    let (n0, b0) = state.encrypt(b"hello proxy", sid).unwrap();
    let (n1, b1) = state.encrypt(b"hello proxy", sid).unwrap();
    assert_eq!(n0, session_nonce(0));
    assert_eq!(n1, session_nonce(1));
    assert_eq!(b0, h("09bdc8de94b27b9a8e7ff6bdc04cebc2ba83d994fcc8704ea2ae37"));
    assert_eq!(b1, h("582dd50c5b60927542c30c634bf582f78ac36b9eb0cac768cdb5e5"));
    let key = SymmetricKey::from_bytes([7; 32]);
    assert_eq!(session_decrypt(&key, &n1, &b1, sid).unwrap(), b"hello proxy");
    assert!(session_decrypt(&key, &n1, &b1, sid + 1).is_err());
}

#[test]
fn chacha_stored_value() {
    let key = SymmetricKey::from_bytes(arr(
        "63044ae26ca31fd519b3698e339f04084496209621932f467f0f47a9e8d7ab3a",
    ));
    let ct = StoredCiphertext {
        nonce: [9; 12],
        body: h("40ae00b94fe15bf24126e980ed76f41f3e5b50f5c914b9e74b9f96"),
    };
    assert_eq!(ct.len(), 11 + STORED_OVERHEAD);
    assert_eq!(
        value_decrypt(&key, &ct, b"patients.ssn").unwrap(),
        b"123-45-6789"
    );
    let round = StoredCiphertext::from_bytes(&ct.to_bytes()).unwrap();
    assert_eq!(round, ct);
    assert_eq!(ct.to_bytes()[0], STORED_VERSION);
    assert!(value_decrypt(&key, &ct, b"patients.name").is_err());
}

#[test]
fn argon2id_minimal_params() {
    let salt: [u8; 16] = core::array::from_fn(|i| i as u8);
    let k = kdf_password(b"correct horse", &salt, ArgonParams::MINIMAL).unwrap();
    assert_eq!(
        k.as_bytes().to_vec(),
        h("68aa6b3e6343f355586e5dd84710fb380cc542b0a47fa8a06ad81318fa48e3b3")
    );
}

#[test]
fn argon2id_default_params() {
    let salt: [u8; 16] = core::array::from_fn(|i| i as u8);
    let params = ArgonParams::default();
    assert_eq!(params.to_string(), "m=65536,t=3,p=1");
    let k = kdf_password(b"correct horse", &salt, params).unwrap();
    assert_eq!(
        k.as_bytes().to_vec(),
        h("e3c889ca40ed01e6b6771fc8a5bf16e35ad60b41c9bd5d7e6d63adf51e50b0fd")
    );
}

#[test]
fn transcript_layout_and_hash() {
    let mut client_public = [2u8; 65];
    client_public[0] = 4;
    let mut server_public = [5u8; 65];
    server_public[0] = 4;
    let t = Transcript {
        client_random: [1; 32],
        client_public,
        server_random: [3; 32],
        server_public,
        session_id: 0x0001020304050607,
    };
    let bytes = t.to_bytes();
    assert_eq!(bytes.len(), 202);
    assert_eq!(&bytes[194..], &[0, 1, 2, 3, 4, 5, 6, 7]);
    assert_eq!(
        transcript_hash(&t).to_vec(),
        h("4254d6d75a7afba8fe301f362ea594ef9976a8719a9f0f4f4474a1597c6a344c")
    );
    assert_eq!(Transcript::from_bytes(&bytes).unwrap(), t);
}
