use sha2::{Digest, Sha256};

use crate::model::{AccountAddress, TxHash, Units};

/// Address derived from a role string; stable across runs and platforms.
pub fn derive_address(role: &str) -> AccountAddress {
    let digest = Sha256::digest(role.as_bytes());
    let mut bytes = [0u8; 20];
    bytes.copy_from_slice(&digest[..20]);
    AccountAddress::from_bytes(bytes)
}

pub fn derive_tx(role: &str) -> TxHash {
    let digest = Sha256::digest(role.as_bytes());
    let mut bytes = [0u8; 32];
    bytes.copy_from_slice(&digest);
    TxHash::from_bytes(bytes)
}

/// Hands out transaction hashes for one generation stream.
#[derive(Debug, Clone)]
pub struct TxSeq {
    tag: String,
    next: u64,
}

impl TxSeq {
    pub fn new(tag: impl Into<String>) -> Self {
        Self {
            tag: tag.into(),
            next: 0,
        }
    }

    pub fn next_tx(&mut self) -> TxHash {
        let h = derive_tx(&format!("{}/tx/{}", self.tag, self.next));
        self.next += 1;
        h
    }
}

/// `x` whole units of a token, rounded to micro-units first.
pub fn units_of(x: f64, decimals: u8) -> Units {
    let micro = (x.max(0.0) * 1e6).round() as u128;
    let scale = Units::from(10u128.pow(decimals as u32));
    Units::from(micro)
        .mul_div_floor(&scale, &Units::from(1_000_000u64))
        .expect("bounded amount")
}

const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
const VOWELS: &[u8] = b"aeiou";
const SUFFIXES: &[&str] = &["Finance", "Protocol", "Network", "Token", "Swap", "Dao", "Labs"];

fn syllable(i: usize) -> [u8; 2] {
    [CONSONANTS[i / VOWELS.len()], VOWELS[i % VOWELS.len()]]
}

/// Unique consonant-vowel name and six-letter symbol for benign token `index`.
///
/// The stem alternates consonants and vowels, so it never contains a double
/// letter or a consonant cluster; that keeps it clear of every scam name.
pub fn benign_name(index: usize) -> (String, String) {
    let n = CONSONANTS.len() * VOWELS.len();
    let space = n * n * n;
    // Scramble so that consecutive tokens do not share prefixes.
    let scrambled = (index.wrapping_mul(104_729) + 7) % space;
    let stem: Vec<u8> = [scrambled / (n * n), (scrambled / n) % n, scrambled % n]
        .iter()
        .flat_map(|&s| syllable(s))
        .collect();
    let stem = String::from_utf8(stem).expect("ascii");
    let mut name = stem.clone();
    name[..1].make_ascii_uppercase();
    let suffix = SUFFIXES[index % SUFFIXES.len()];
    (format!("{name} {suffix}"), stem.to_ascii_uppercase())
}

/// Names reused by unrelated scammers at the same time.
pub const HOT_NAMES: &[(&str, &str)] = &[
    ("bore.finance", "BORE"),
    ("moon.farm", "MOON"),
    ("yield.rocket", "YRCKT"),
    ("defi.gold", "DGOLD"),
    ("cream.swap2", "CRM2"),
    ("pump.money", "PUMP"),
    ("safe.vault", "SAFEV"),
    ("doge.yield", "DOGEY"),
    ("lambo.finance", "LAMBO"),
    ("rich.protocol", "RICH"),
    ("apex.farm", "APEX"),
    ("hodl.finance", "HODL"),
];

/// Famous entities without an official token, and the keywords that match
/// them.
pub const BRANDS: &[(&str, &str)] = &[
    ("TikTok", "tiktok"),
    ("Google", "google"),
    ("Trump", "trump"),
    ("Elon Musk", "elon musk"),
    ("SpaceX", "spacex"),
    ("Tesla", "tesla"),
];

pub const BRAND_SUFFIXES: &[&str] = &["Coin", "Token", "Finance", "Inu", "Gold"];

pub fn brand_keywords() -> Vec<String> {
    BRANDS.iter().map(|(_, k)| k.to_string()).collect()
}
