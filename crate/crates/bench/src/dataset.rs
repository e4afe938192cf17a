//! Synthetic patient records.

use std::collections::HashSet;

use blindex_core::blind_index::min_bits;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// Cleartext copy used by the `cleartext*` variants.
pub const PLAIN_TABLE: &str = "patients_plain";
/// Encrypted, with a blind index on `ssn`.
pub const INDEXED_TABLE: &str = "patients";
/// Encrypted, no blind index.
pub const NOINDEX_TABLE: &str = "patients_noindex";

pub const OFFICES: u32 = 50;

const FIRST: &[&str] = &[
    "Ada", "Ben", "Chloe", "Dmitri", "Elena", "Farid", "Grace", "Hugo", "Ines", "Jonas", "Keiko",
    "Liam", "Maya", "Nils", "Olga", "Pedro", "Quinn", "Rosa", "Sven", "Tara", "Umar", "Vera",
    "Wes", "Xenia", "Yusuf", "Zoe",
];

const LAST: &[&str] = &[
    "Almeida", "Berg", "Costa", "Dubois", "Eriksen", "Fischer", "Garcia", "Haddad", "Ivanova",
    "Jensen", "Kowalski", "Lambert", "Moreau", "Nakamura", "Okafor", "Petrov", "Quiroga", "Rossi",
    "Schmidt", "Tanaka", "Urban", "Vogel", "Weber", "Yilmaz", "Zeller",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Patient {
    pub id: u64,
    pub office: u32,
    pub name: String,
    pub ssn: String,
}

fn name(rng: &mut impl Rng, len: Option<usize>) -> String {
    let mut pick = || {
        format!(
            "{} {}",
            FIRST.choose(rng).expect("non-empty"),
            LAST.choose(rng).expect("non-empty")
        )
    };
    match len {
        None => pick(),
        Some(len) => {
            let mut s = String::with_capacity(len + 24);
            while s.len() < len {
                if !s.is_empty() {
                    s.push(' ');
                }
                s.push_str(&pick());
            }
            s.truncate(len);
            s
        }
    }
}

fn ssn(rng: &mut impl Rng) -> String {
    let area = loop {
        let a = rng.gen_range(1..900);
        if a != 666 {
            break a;
        }
    };
    format!(
        "{area:03}-{:02}-{:04}",
        rng.gen_range(1..100),
        rng.gen_range(1..10_000)
    )
}

/// `rows` patients with ids `1..=rows` and distinct SSNs. `name_len` fixes
/// the byte length of every name; by default names are "First Last".
pub fn generate(rows: u64, seed: u64, name_len: Option<usize>) -> Vec<Patient> {
    assert!(rows < 800_000_000, "SSN space exhausted");
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut seen = HashSet::with_capacity(rows as usize);
    (1..=rows)
        .map(|id| {
            let ssn = loop {
                let s = ssn(&mut rng);
                if seen.insert(s.clone()) {
                    break s;
                }
            };
            Patient {
                id,
                office: rng.gen_range(1..=OFFICES),
                name: name(&mut rng, name_len),
                ssn,
            }
        })
        .collect()
}

/// One extra patient for insert workloads, outside the generated id range.
pub fn extra(id: u64, seed: u64) -> Patient {
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ id.rotate_left(17));
    Patient {
        id,
        office: rng.gen_range(1..=OFFICES),
        name: name(&mut rng, None),
        ssn: ssn(&mut rng),
    }
}

/// Blind index width for `rows` records, two expected collisions per value.
pub fn bidx_bits(rows: u64) -> u32 {
    min_bits(rows.max(1), 2.0)
}

/// Proxy schema for a dataset of `rows` records.
pub fn schema_toml(rows: u64) -> String {
    format!(
        "[{INDEXED_TABLE}]\nencrypted = [\"name\", \"ssn\"]\nblind_index.ssn.bits = {}\n\n[{NOINDEX_TABLE}]\nencrypted = [\"name\", \"ssn\"]\n",
        bidx_bits(rows)
    )
}

pub fn create_table_sql(table: &str, bits: u32) -> String {
    let bidx = if table == INDEXED_TABLE {
        format!(", ssn__bidx VARCHAR({})", bits.div_ceil(8) * 2)
    } else {
        String::new()
    };
    format!("CREATE TABLE {table} (id INT PRIMARY KEY, doctorOfficeId INT, name TEXT, ssn TEXT{bidx})")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thousand_rows_with_distinct_ssns() {
        let d = generate(1000, 1, None);
        assert_eq!(d.len(), 1000);
        let ssns: HashSet<_> = d.iter().map(|p| &p.ssn).collect();
        assert_eq!(ssns.len(), 1000);
        for p in &d {
            let b = p.ssn.as_bytes();
            assert_eq!(b.len(), 11);
            assert!(b[3] == b'-' && b[6] == b'-');
            assert!(p.ssn.chars().filter(|c| c.is_ascii_digit()).count() == 9);
            assert!(p.name.len() < 20);
        }
        assert_eq!(d.iter().map(|p| p.id).collect::<Vec<_>>(), (1..=1000).collect::<Vec<_>>());
    }

    #[test]
    fn seeded_generation_repeats() {
        assert_eq!(generate(200, 9, None), generate(200, 9, None));
        assert_ne!(generate(200, 9, None), generate(200, 10, None));
    }

    #[test]
    fn fixed_name_length() {
        for len in [1, 100, 1000] {
            assert!(generate(5, 3, Some(len)).iter().all(|p| p.name.len() == len));
        }
    }

    #[test]
    fn bits_follow_min_bits() {
        assert_eq!(bidx_bits(1000), 9);
        assert_eq!(bidx_bits(1_000_000), 19);
        assert!(schema_toml(10_000).contains("bits = 13"));
        let cfg = blindex_core::schema::load_config(&schema_toml(50_000)).unwrap();
        assert_eq!(cfg.bidx_spec(INDEXED_TABLE, "ssn").unwrap().bits, 15);
        assert!(cfg.bidx_spec(NOINDEX_TABLE, "ssn").is_none());
        assert!(create_table_sql(INDEXED_TABLE, 13).ends_with("ssn__bidx VARCHAR(4))"));
    }
}
